mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use irqscope::engine::{Mode, Options};
use irqscope::frontend::ast::VarId;
use irqscope::frontend::parse_source;
use irqscope::frontend::pretty::print_program;
use irqscope::hardware::{parse_hw_spec, HardwareSpec};
use irqscope::octagon::{Constraint, MemLoc, Octagon, Rhs, Sign};
use irqscope::oracle::{self, OracleConfig};
use irqscope::pipeline::{prepare, Prepared};
use irqscope::report::{build_report, render_json};
use irqscope::wellformed::WfVerdict;

use common::{avr, prep, source, SMALL};

const TY: (i64, i64) = (-4, 4);

fn vars(n: usize) -> Vec<(MemLoc, (i64, i64))> {
    (0..n as u32).map(|k| (MemLoc(VarId(k)), TY)).collect()
}

fn loc(k: usize) -> MemLoc {
    MemLoc(VarId(k as u32))
}

fn sign(neg: bool) -> Sign {
    if neg {
        Sign::Neg
    } else {
        Sign::Pos
    }
}

fn apply(s: Sign, v: i64) -> i64 {
    if s == Sign::Pos {
        v
    } else {
        -v
    }
}

/// An octagon over three variables and a concrete point inside it.
fn oct_and_point() -> impl Strategy<Value = (Octagon, Vec<i64>)> {
    let point = prop::collection::vec(TY.0..=TY.1, 3);
    let slack = prop::collection::vec((0usize..6, 0usize..6, 0i64..4), 0..6);
    (point, slack).prop_map(|(p, slack)| {
        let n2 = 6;
        let top = Octagon::top(&vars(3));
        let mut m = top.matrix().to_vec();
        let lit = |l: usize| if l % 2 == 0 { p[l / 2] } else { -p[l / 2] };
        // Constraints tight around the point, relaxed by a random slack.
        for (i, j, s) in slack {
            let c = lit(j) - lit(i) + s;
            m[i * n2 + j] = m[i * n2 + j].min(if i == j { 0 } else { c });
        }
        (Octagon::from_matrix(&vars(3), m), p)
    })
}

fn contains(o: &Octagon, p: &[i64]) -> bool {
    o.contains_point(&|m: MemLoc| p[m.0 .0 as usize])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn assignment_is_sound((o, p) in oct_and_point(), x in 0usize..3, y in 0usize..3, neg: bool, c in -5i64..6, kind in 0u8..3) {
        prop_assume!(contains(&o, &p));
        let (rhs, value) = match kind {
            0 => (Rhs::Const(c.clamp(TY.0, TY.1)), c.clamp(TY.0, TY.1)),
            1 => (Rhs::Var { sign: sign(neg), y: loc(y), c }, apply(sign(neg), p[y]) + c),
            _ => {
                let (lo, hi) = (p[y].min(c.clamp(TY.0, TY.1)), p[y].max(c.clamp(TY.0, TY.1)));
                (Rhs::Interval(lo, hi), p[y])
            }
        };
        let mut post = o.clone();
        post.assign(loc(x), rhs);
        let mut q = p.clone();
        if (TY.0..=TY.1).contains(&value) {
            q[x] = value;
            prop_assert!(contains(&post, &q), "{:?} -> {:?}", p, q);
        } else {
            prop_assert_eq!(post.bounds(loc(x)), Some(TY));
        }
    }

    #[test]
    fn guard_is_sound((o, p) in oct_and_point(), x in 0usize..3, y in proptest::option::of(0usize..3), nx: bool, ny: bool, slack in 0i64..4) {
        prop_assume!(contains(&o, &p));
        let c = apply(sign(nx), p[x]) + y.map_or(0, |y| apply(sign(ny), p[y])) + slack;
        let mut post = o.clone();
        post.guard(Constraint { x: (sign(nx), loc(x)), y: y.map(|y| (sign(ny), loc(y))), c });
        prop_assert!(contains(&post, &p));
    }

    #[test]
    fn join_is_least_on_closed_points((a, p) in oct_and_point(), (b, q) in oct_and_point()) {
        let j = a.join(&b).unwrap();
        prop_assert!(!contains(&a, &p) || contains(&j, &p));
        prop_assert!(!contains(&b, &q) || contains(&j, &q));
        let (ca, cb) = (a.closed(), b.closed());
        if !ca.is_bottom() && !cb.is_bottom() {
            let hull: Vec<i64> = ca.matrix().iter().zip(cb.matrix()).map(|(x, y)| *x.max(y)).collect();
            let cj = j.closed();
            prop_assert_eq!(cj.matrix(), &hull[..]);
        }
    }
}

// Well-formedness properties on generated expressions.

const WF_DECLS: &str = "volatile uint8 sa;\nvolatile uint8 sb;\nuint8 p;\nuint8 q;\nuint8 r;\n\
    uint8 f() { return sa; }\nuint8 g() { return sb; }\nuint8 pure(uint8 x) { return x + 1; }\n\
    ISR(TIMER0_OVF_vect) { sa = sb; sb = sa; }\nvoid main() {\n";
const WF_LINE: u32 = 11;

fn verdict(stmt: &str) -> WfVerdict {
    let src = format!("{}{}\n}}\n", WF_DECLS, stmt);
    let p = prepare(&src, Some(avr()), &[]).unwrap_or_else(|e| panic!("{}: {}", stmt, e));
    p.pc.full_expr_at(WF_LINE, None).and_then(|fe| fe.verdict.clone()).expect("verdict")
}

fn operand() -> impl Strategy<Value = String> {
    let leaf = prop::sample::select(vec!["sa", "sb", "p", "q", "f()", "g()", "pure(p)", "vu8(q)", "3", "++p", "(sa = 1)", "(r = 2)"])
        .prop_map(String::from);
    leaf.prop_recursive(2, 6, 2, |inner| {
        (inner.clone(), prop::sample::select(vec!["+", "*", "&", "|", "-"]), inner)
            .prop_map(|(a, op, b)| format!("({} {} {})", a, op, b))
    })
}

fn private_operand() -> impl Strategy<Value = String> {
    let leaf = prop::sample::select(vec!["p", "q", "r", "pure(p)", "7"]).prop_map(String::from);
    leaf.prop_recursive(2, 6, 2, |inner| {
        (inner.clone(), prop::sample::select(vec!["+", "^", "<"]), inner).prop_map(|(a, op, b)| format!("({} {} {})", a, op, b))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn commutative_operands_commute(a in operand(), b in operand(), op in prop::sample::select(vec!["+", "*", "&", "|", "^", "=="])) {
        let x = verdict(&format!("q = {} {} {};", a, op, b));
        let y = verdict(&format!("q = {} {} {};", b, op, a));
        prop_assert_eq!(x.well_formed, y.well_formed);
    }

    #[test]
    fn privatizing_keeps_well_formedness(a in operand(), b in operand()) {
        let stmt = format!("q = {} + {};", a, b);
        if verdict(&stmt).well_formed {
            let private = stmt.replace("sa", "r");
            prop_assert!(verdict(&private).well_formed, "{}", private);
        }
    }

    #[test]
    fn two_shared_writes_are_rejected(a in operand(), b in operand()) {
        let v = verdict(&format!("sb = {} + {};", a, b));
        if v.writes_shared >= 2 {
            prop_assert!(!v.well_formed);
        }
    }

    #[test]
    fn private_expressions_never_compete(a in private_operand(), b in private_operand()) {
        let stmt = format!("q = {} - {};", a, b);
        prop_assert!(!verdict(&stmt).competing, "{}", stmt);
    }
}

fn corpus_files() -> Vec<String> {
    let mut v: Vec<String> = ["uart.c", "rgb_led.c", "traffic_light.c", "wf_cases.c"].iter().map(|s| s.to_string()).collect();
    v.extend(SMALL.iter().map(|(n, _)| n.to_string()));
    v
}

#[test]
fn printing_is_a_fixpoint_on_the_corpus() {
    for name in corpus_files() {
        let p = parse_source(&source(&name)).unwrap();
        let once = print_program(&p);
        let twice = print_program(&parse_source(&once).unwrap_or_else(|e| panic!("{}: {}\n{}", name, e, once)));
        assert_eq!(once, twice, "{}", name);
    }
}

#[test]
fn parsing_and_reports_are_deterministic() {
    for name in corpus_files() {
        assert_eq!(parse_source(&source(&name)).unwrap(), parse_source(&source(&name)).unwrap());
        let run = || {
            let p = prep(&name);
            render_json(&build_report(&p, &p.analyze(Options::default()).unwrap(), &name))
        };
        assert_eq!(run(), run(), "{}", name);
    }
}

fn shared_by_name(p: &Prepared) -> BTreeMap<String, String> {
    p.shared.patterns.iter().map(|(v, pat)| (p.program.var(*v).name.clone(), pat.label().to_string())).collect()
}

#[test]
fn shared_set_ignores_handler_order() {
    let src = source("small/two_writers.c");
    let timer = "ISR(TIMER0_OVF_vect) {\n    status = 1;\n}\n";
    let int0 = "ISR(INT0_vect) {\n    status = 2;\n}\n";
    assert!(src.contains(timer) && src.contains(int0));
    let swapped = src.replace(timer, "@@").replace(int0, timer).replace("@@", int0);
    let a = prepare(&src, Some(avr()), &[]).unwrap();
    let b = prepare(&swapped, Some(avr()), &[]).unwrap();
    assert_eq!(shared_by_name(&a), shared_by_name(&b));
    assert_eq!(shared_by_name(&a)["status"], "both-write");
}

#[test]
fn adding_a_statement_never_shrinks_access_sets() {
    let base = "uint8 x; uint8 y; uint8 z;\nvoid h() { x = y; }\nvoid main() { h(); }\n";
    let more = "uint8 x; uint8 y; uint8 z;\nvoid h() { x = y; z = 1; }\nvoid main() { h(); }\n";
    let hw = HardwareSpec::sequential();
    let a = prepare(base, Some(hw.clone()), &[]).unwrap();
    let b = prepare(more, Some(hw), &[]).unwrap();
    for f in a.program.func_ids() {
        let name = &a.program.func(f).name;
        let g = b.program.func_by_name(name).unwrap();
        let names = |p: &Prepared, f| -> BTreeSet<String> {
            p.access.of(f).all().iter().map(|m| p.program.var(m.0).display_name(&p.program)).collect()
        };
        assert!(names(&a, f).is_subset(&names(&b, g)), "{}", name);
    }
}

#[test]
fn access_sets_cover_concrete_accesses() {
    for (name, fires) in SMALL {
        let p = prep(name);
        let r = oracle::enumerate_executions(&p, &OracleConfig { isr_fires_max: (*fires).min(3), ..OracleConfig::default() }).unwrap();
        for (f, vars) in &r.accessed {
            let sets = p.access.of(*f).all();
            for v in vars {
                assert!(sets.contains(&MemLoc(*v)), "{}: {} accesses {}", name, p.program.func(*f).name, p.program.var(*v).name);
            }
        }
    }
}

/// Node states of every analyzed function, for nodes of the original graph.
fn original_states(p: &Prepared, opts: Options) -> BTreeMap<(String, usize), Option<Octagon>> {
    let res = p.analyze(opts).unwrap();
    let mut out = BTreeMap::new();
    for (f, cfg) in &p.pc.funcs {
        let states = res.node_states(*f, Mode::Main);
        for i in 0..cfg.nodes.len() {
            let oct = states.get(i).cloned().flatten().filter(|s| !s.is_bottom()).map(|s| s.oct);
            out.insert((p.program.func(*f).name.clone(), i), oct);
        }
    }
    out
}

fn same_states(a: &BTreeMap<(String, usize), Option<Octagon>>, b: &BTreeMap<(String, usize), Option<Octagon>>) {
    assert_eq!(a.len(), b.len());
    for (k, x) in a {
        match (x, &b[k]) {
            (None, None) => {}
            (Some(x), Some(y)) => assert!(x.equiv(y), "{:?}: {:?} vs {:?}", k, x, y),
            (x, y) => panic!("{:?}: {:?} vs {:?}", k, x, y),
        }
    }
}

#[test]
fn without_handlers_analysis_is_sequential() {
    let src = source("traffic_light.c");
    let start = src.find("ISR(TIMER0_OVF_vect)").unwrap();
    let end = src.find("void setup()").unwrap();
    let plain = format!("{}{}", &src[..start], &src[end..]);
    let aware = prepare(&plain, Some(avr()), &[]).unwrap();
    let seq = prepare(&plain, Some(HardwareSpec::sequential()), &[]).unwrap();
    same_states(&original_states(&aware, Options::default()), &original_states(&seq, Options::default()));
}

#[test]
fn disabled_interrupts_without_enable_writes_are_sequential() {
    let hw = "[global]\natomic_bits = 8\nglobal_enable = 0x5F.7\nglobal_enable_initial = off\n\
        [source T]\nenable = 0x6E.0\nvector = T_vect\ninitial = on\n";
    let src = "uint8 n; uint8 buf[4];\nISR(T_vect) { n = 9; }\n\
        void main() { uint8 i; for (i = 0; i < 4; i++) { buf[i] = n; n = i; } }\n";
    let with = prepare(src, Some(parse_hw_spec(hw).unwrap()), &[]).unwrap();
    let res = with.analyze(Options::default()).unwrap();
    assert_eq!(res.stats.isr_analyses, 0);
    let without = prepare(&src.replace("ISR(T_vect) { n = 9; }", ""), Some(HardwareSpec::sequential()), &[]).unwrap();
    let a = original_states(&with, Options::default());
    let b = original_states(&without, Options::default());
    let main_only = |m: &BTreeMap<(String, usize), Option<Octagon>>| -> BTreeMap<(String, usize), Option<Octagon>> {
        m.iter().filter(|((f, _), _)| f == "main").map(|(k, v)| (k.clone(), v.clone())).collect()
    };
    same_states(&main_only(&a), &main_only(&b));
}
