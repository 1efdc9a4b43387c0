//! Competing expressions and well-formed full expressions.

use std::collections::BTreeSet;

use crate::cfg::ProgramCfg;
use crate::frontend::ast::*;
use crate::frontend::pretty::print_expr;
use crate::pointer::{functions_touching, AccessSets, PointsTo, SharedSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WfReason {
    /// Rule identifier such as `3b`, `5b`, `6` or `writes`.
    pub rule: &'static str,
    pub span: Span,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WfVerdict {
    pub well_formed: bool,
    pub competing: bool,
    pub writes_shared: usize,
    pub reason: Option<WfReason>,
    /// One line per sub-expression, innermost first.
    pub derivation: Vec<String>,
}

/// Summary of shared data needed by the rules.
pub struct SharedInfo<'a> {
    pub program: &'a Program,
    pub shared: &'a SharedSet,
    pub pts: &'a PointsTo,
    pub accesses_shared: BTreeSet<FuncId>,
    pub writes_shared: BTreeSet<FuncId>,
}

impl<'a> SharedInfo<'a> {
    pub fn new(program: &'a Program, access: &AccessSets, shared: &'a SharedSet, pts: &'a PointsTo) -> Self {
        SharedInfo {
            program,
            shared,
            pts,
            accesses_shared: functions_touching(program, access, shared, false),
            writes_shared: functions_touching(program, access, shared, true),
        }
    }

    fn volatile_var(&self, e: &Expr) -> bool {
        e.var_id().is_some_and(|v| self.program.var(v).volatile)
    }

    /// Whether storing through `target` may write shared data.
    fn shared_target(&self, target: &Expr) -> bool {
        match &target.kind {
            ExprKind::Var(_) | ExprKind::Index { .. } => {
                let root = match &target.kind {
                    ExprKind::Index { base, .. } => base.var_id(),
                    _ => target.var_id(),
                };
                root.is_some_and(|v| self.shared.contains(v) || self.program.var(v).volatile)
            }
            ExprKind::VolatileCast { .. } => true,
            ExprKind::Deref(p) => {
                if matches!(p.ty(), CType::Ptr { volatile: true, .. }) {
                    return true;
                }
                match p.var_id() {
                    Some(v) => self.pts.of(v).iter().any(|t| self.shared.contains(*t)),
                    None => true,
                }
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Info {
    wf: bool,
    competing: bool,
    writes: usize,
}

struct Walker<'a, 'b> {
    info: &'b SharedInfo<'a>,
    reason: Option<WfReason>,
    lines: Vec<String>,
}

impl Walker<'_, '_> {
    fn fail(&mut self, rule: &'static str, e: &Expr, detail: String) {
        if self.reason.is_none() {
            self.reason = Some(WfReason { rule, span: e.span, detail });
        }
    }

    fn note(&mut self, rule: &str, e: &Expr, i: Info) {
        self.lines.push(format!(
            "rule {:<2} {:<40} {}{}, shared writes {}",
            rule,
            print_expr(e),
            if i.wf { "well-formed" } else { "NOT well-formed" },
            if i.competing { ", competing" } else { "" },
            i.writes
        ));
    }

    fn operands(&mut self, rule: &'static str, e: &Expr, subs: &[&Expr]) -> Info {
        let infos: Vec<Info> = subs.iter().map(|s| self.expr(s)).collect();
        let competing = infos.iter().filter(|i| i.competing).count();
        let sub_wf = infos.iter().all(|i| i.wf);
        let at_most_one = competing <= 1;
        if sub_wf && !at_most_one {
            self.fail(rule, e, format!("{} operands are competing", competing));
        }
        Info { wf: sub_wf && at_most_one, competing: competing > 0, writes: infos.iter().map(|i| i.writes).sum() }
    }

    fn expr(&mut self, e: &Expr) -> Info {
        let (rule, i) = match &e.kind {
            ExprKind::Const(_) => ("1", Info { wf: true, competing: false, writes: 0 }),
            ExprKind::Var(_) => ("1", Info { wf: true, competing: self.info.volatile_var(e), writes: 0 }),
            ExprKind::Unary(_, a) => ("2", self.expr(a)),
            ExprKind::Deref(p) => {
                let mut i = self.expr(p);
                i.competing |= matches!(p.ty(), CType::Ptr { volatile: true, .. });
                ("2", i)
            }
            ExprKind::AddrOf(x) => {
                let i = match &x.kind {
                    ExprKind::Index { index, .. } => self.expr(index),
                    ExprKind::Deref(p) => self.expr(p),
                    _ => Info { wf: true, competing: false, writes: 0 },
                };
                ("2", i)
            }
            ExprKind::VolatileCast { inner, .. } => {
                let mut i = self.expr(inner);
                i.competing = true;
                ("1", i)
            }
            ExprKind::Binary(_, a, b) => ("3", self.operands("3b", e, &[a, b])),
            ExprKind::Index { base, index } => {
                let mut i = self.operands("3b", e, &[base, index]);
                i.competing |= self.info.volatile_var(base);
                ("3", i)
            }
            ExprKind::Logic(_, a, b) | ExprKind::Comma(a, b) => {
                let (ia, ib) = (self.expr(a), self.expr(b));
                ("4", Info { wf: ia.wf && ib.wf, competing: ia.competing || ib.competing, writes: ia.writes + ib.writes })
            }
            ExprKind::Call { args, callee, .. } => {
                let refs: Vec<&Expr> = args.iter().collect();
                let mut i = self.operands("5b", e, &refs);
                if let Some(Callee::Func(f)) = callee {
                    i.competing |= self.info.accesses_shared.contains(f);
                    if self.info.writes_shared.contains(f) {
                        i.writes += 1;
                    }
                }
                ("5", i)
            }
            ExprKind::Assign { target, value, .. } => {
                let lv = self.expr(target);
                let v = self.expr(value);
                let a = !lv.competing && v.wf;
                let b = v.wf && v.writes == 0;
                let wf = lv.wf && (a || b);
                if lv.wf && v.wf && !wf {
                    self.fail("6", e, "competing lvalue and right-hand side writes shared data".into());
                }
                let own = usize::from(self.info.shared_target(target));
                ("6", Info { wf, competing: lv.competing || v.competing, writes: lv.writes + v.writes + own })
            }
        };
        self.note(rule, e, i);
        i
    }
}

/// Competing: contains a volatile access or calls a function touching
/// shared data.
pub fn classify_competing(e: &Expr, info: &SharedInfo) -> bool {
    let mut w = Walker { info, reason: None, lines: Vec::new() };
    w.expr(e).competing
}

pub fn is_well_formed(e: &Expr, info: &SharedInfo) -> WfVerdict {
    let mut w = Walker { info, reason: None, lines: Vec::new() };
    let i = w.expr(e);
    let mut well_formed = i.wf;
    if well_formed && i.writes >= 2 {
        well_formed = false;
        w.fail("writes", e, format!("{} writes to shared data between sequence points", i.writes));
        w.lines.push(format!("at most one shared write allowed, found {}", i.writes));
    }
    WfVerdict {
        well_formed,
        competing: i.competing,
        writes_shared: i.writes,
        reason: if well_formed { None } else { w.reason },
        derivation: w.lines,
    }
}

/// Attach a verdict to every full expression that has a source expression.
pub fn classify_all(pc: &mut ProgramCfg, info: &SharedInfo) {
    for fe in &mut pc.full_exprs {
        if let Some(e) = &fe.expr {
            fe.verdict = Some(is_well_formed(e, info));
        }
    }
}

pub fn explain(v: &WfVerdict, e: &Expr) -> String {
    let mut out = format!("{} at {}\n", print_expr(e), e.span);
    for l in &v.derivation {
        out.push_str("  ");
        out.push_str(l);
        out.push('\n');
    }
    match &v.reason {
        None => out.push_str("verdict: well-formed\n"),
        Some(r) => out.push_str(&format!("verdict: NOT well-formed (rule {} at {}: {})\n", r.rule, r.span, r.detail)),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_program_cfg;
    use crate::hardware::HardwareSpec;
    use crate::pointer::prepass;

    const DECLS: &str = "
        volatile uint8 a; volatile uint8 b; uint8 p; uint8 q;
        uint8 f() { return a; }
        uint8 g() { return b; }
        void w() { a = 1; }
        uint8 pure(uint8 x) { return x + 1; }
        uint8 two(uint8 x, uint8 y) { return x + y; }
        ISR(T_vect) { a = b; b = a; }";

    /// Verdict of the expression statement in `main`.
    fn verdict_of(stmt: &str) -> (WfVerdict, Expr) {
        let src = format!("{} void main() {{ {} }}", DECLS, stmt);
        let mut p = crate::frontend::parse_source(&src).unwrap();
        let mut pc = build_program_cfg(&mut p).unwrap();
        let isrs: Vec<FuncId> = p.isrs().collect();
        let (pts, access, shared) = prepass(&p, &mut pc, &HardwareSpec::sequential(), &isrs);
        let info = SharedInfo::new(&p, &access, &shared, &pts);
        let main = p.func(p.entry_id().unwrap());
        let StmtKind::Expr(e) = &main.body[0].kind else { panic!("expression statement expected") };
        (is_well_formed(e, &info), e.clone())
    }

    fn verdict(stmt: &str) -> WfVerdict {
        verdict_of(stmt).0
    }

    #[test]
    fn five_reference_verdicts() {
        let v = verdict("a = ++b;");
        assert!(!v.well_formed);
        assert_eq!(v.writes_shared, 2);
        let v = verdict("a = f() + g();");
        assert!(!v.well_formed);
        assert_eq!(v.reason.as_ref().unwrap().rule, "3b");
        assert!(verdict("a = f() + 1;").well_formed);
        let v = verdict("a = b = 0;");
        assert!(!v.well_formed);
        assert_eq!(v.reason.as_ref().unwrap().rule, "6");
        assert!(verdict("a = p;").well_formed);
    }

    #[test]
    fn competing_classification() {
        let v = verdict("p = vu8(q);");
        assert!(v.competing && v.well_formed);
        assert!(!verdict("p = 1 + 2;").competing);
        assert!(verdict("p = f();").competing);
        assert!(!verdict("p = pure(q);").competing);
    }

    #[test]
    fn calls_and_sequence_points() {
        let v = verdict("p = two(vu8(q), a);");
        assert_eq!(v.reason.as_ref().map(|r| r.rule), Some("5b"));
        assert!(verdict("p = two(vu8(q), 1);").well_formed);
        assert!(verdict("p = f() && g();").well_formed);
        assert!(verdict("(p = f(), q = g());").well_formed);
        assert!(!verdict("p = vu8(q) + vu8(q);").well_formed);
        // A callee writing shared data makes the right-hand side a shared write.
        assert!(!verdict("a = (w(), 1);").well_formed);
        assert!(verdict("a++;").well_formed);
        assert!(!verdict("(a = 1, b = 2);").well_formed);
    }

    #[test]
    fn explain_lists_rules() {
        let (v, e) = verdict_of("a = b = 0;");
        let text = explain(&v, &e);
        assert!(text.contains("rule 6"));
        assert!(text.contains("NOT well-formed (rule 6"));
        let (v, e) = verdict_of("a = p;");
        assert!(explain(&v, &e).ends_with("verdict: well-formed\n"));
    }
}
