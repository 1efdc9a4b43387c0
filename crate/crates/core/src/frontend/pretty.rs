//! Source printer. Output re-parses to the same tree (spans aside):
//! every compound expression is parenthesized.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        out.push_str(&print_decl(g));
        out.push_str(";\n");
    }
    for f in &p.functions {
        if !out.is_empty() {
            out.push('\n');
        }
        match &f.isr_vector {
            Some(v) => writeln!(out, "ISR({}) {{", v).unwrap(),
            None => {
                let params: Vec<String> = f.params.iter().map(print_decl).collect();
                writeln!(out, "{} {}({}) {{", f.ret, f.name, params.join(", ")).unwrap();
            }
        }
        for s in &f.body {
            print_stmt(&mut out, s, 1);
        }
        out.push_str("}\n");
    }
    out
}

pub fn print_decl(d: &VarDecl) -> String {
    let mut s = String::new();
    if d.is_const {
        s.push_str("const ");
    }
    if d.volatile {
        s.push_str("volatile ");
    }
    let (base, len) = match &d.ctype {
        CType::Array(elem, n) => {
            let len = match &d.array_len {
                Some(e) => print_expr(e),
                None => n.to_string(),
            };
            (elem.as_ref(), Some(len))
        }
        t => (t, None),
    };
    write!(s, "{} {}", print_type(base), d.name).unwrap();
    if let Some(len) = len {
        write!(s, "[{}]", len).unwrap();
    }
    if let Some(a) = d.absolute_address {
        write!(s, " @ {}", a).unwrap();
    }
    if let Some(init) = &d.init {
        write!(s, " = {}", print_expr(init)).unwrap();
    }
    s
}

fn print_type(t: &CType) -> String {
    match t {
        CType::Ptr { to, volatile } => {
            format!("{}{} *", if *volatile { "volatile " } else { "" }, print_type(to))
        }
        t => t.to_string(),
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

pub fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::Decl(d) => writeln!(out, "{};", print_decl(d)).unwrap(),
        StmtKind::Expr(e) => writeln!(out, "{};", print_expr(e)).unwrap(),
        StmtKind::If { cond, then, els } => {
            writeln!(out, "if ({})", print_expr(cond)).unwrap();
            print_stmt(out, then, depth + 1);
            if let Some(e) = els {
                indent(out, depth);
                out.push_str("else\n");
                print_stmt(out, e, depth + 1);
            }
        }
        StmtKind::While { cond, body } => {
            writeln!(out, "while ({})", print_expr(cond)).unwrap();
            print_stmt(out, body, depth + 1);
        }
        StmtKind::DoWhile { body, cond } => {
            out.push_str("do\n");
            print_stmt(out, body, depth + 1);
            indent(out, depth);
            writeln!(out, "while ({});", print_expr(cond)).unwrap();
        }
        StmtKind::For { init, cond, step, body } => {
            let opt = |e: &Option<Expr>| e.as_ref().map(print_expr).unwrap_or_default();
            writeln!(out, "for ({}; {}; {})", opt(init), opt(cond), opt(step)).unwrap();
            print_stmt(out, body, depth + 1);
        }
        StmtKind::Return(None) => out.push_str("return;\n"),
        StmtKind::Return(Some(e)) => writeln!(out, "return {};", print_expr(e)).unwrap(),
        StmtKind::Break => out.push_str("break;\n"),
        StmtKind::Continue => out.push_str("continue;\n"),
        StmtKind::Empty => out.push_str(";\n"),
        StmtKind::Block(stmts) => {
            out.push_str("{\n");
            for st in stmts {
                print_stmt(out, st, depth + 1);
            }
            indent(out, depth);
            out.push_str("}\n");
        }
    }
}

fn cast_name(t: &CType) -> &'static str {
    match t {
        CType::U8 => "vu8",
        CType::I8 => "vs8",
        CType::U16 => "vu16",
        _ => "vs16",
    }
}

/// Print an lvalue without wrapping parentheses, so postfix operators apply.
fn print_lvalue(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Var(r) => r.name.clone(),
        ExprKind::Index { base, index } => format!("{}[{}]", print_lvalue(base), print_expr(index)),
        _ => print_expr(e),
    }
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Const(v) if *v < 0 => format!("({})", v),
        ExprKind::Const(v) => v.to_string(),
        ExprKind::Var(_) | ExprKind::Index { .. } => print_lvalue(e),
        ExprKind::Unary(op, a) => {
            let sym = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
                UnOp::BitNot => "~",
            };
            format!("({}({}))", sym, print_expr(a))
        }
        ExprKind::Binary(op, a, b) => format!("({} {} {})", print_expr(a), op.symbol(), print_expr(b)),
        ExprKind::Logic(op, a, b) => {
            let sym = if *op == LogicOp::And { "&&" } else { "||" };
            format!("({} {} {})", print_expr(a), sym, print_expr(b))
        }
        ExprKind::Comma(a, b) => format!("({}, {})", print_expr(a), print_expr(b)),
        ExprKind::Call { name, args, .. } => {
            let args: Vec<String> = args.iter().map(print_expr).collect();
            format!("{}({})", name, args.join(", "))
        }
        ExprKind::Assign { target, value, form } => {
            let t = print_lvalue(target);
            match (form, &value.kind) {
                (AssignForm::Plain, _) => format!("({} = {})", t, print_expr(value)),
                (AssignForm::PreInc, _) => format!("(++{})", t),
                (AssignForm::PreDec, _) => format!("(--{})", t),
                (AssignForm::PostInc, _) => format!("({}++)", t),
                (AssignForm::PostDec, _) => format!("({}--)", t),
                (AssignForm::Compound, ExprKind::Binary(op, _, rhs)) => {
                    format!("({} {}= {})", t, op.symbol(), print_expr(rhs))
                }
                (AssignForm::Compound, _) => format!("({} = {})", t, print_expr(value)),
            }
        }
        ExprKind::AddrOf(a) => format!("(&{})", print_lvalue(a)),
        ExprKind::Deref(a) => format!("(*{})", print_expr(a)),
        ExprKind::VolatileCast { ty, inner } => format!("{}({})", cast_name(ty), print_lvalue(inner)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::tokenize;
    use crate::frontend::parser::{parse_expr, parse_program};
    use proptest::prelude::*;

    fn clear_expr(e: &mut Expr) {
        e.span = Span::default();
        match &mut e.kind {
            ExprKind::Const(_) | ExprKind::Var(_) => {}
            ExprKind::Unary(_, a) | ExprKind::AddrOf(a) | ExprKind::Deref(a) => clear_expr(a),
            ExprKind::VolatileCast { inner, .. } => clear_expr(inner),
            ExprKind::Binary(_, a, b) | ExprKind::Logic(_, a, b) | ExprKind::Comma(a, b) => {
                clear_expr(a);
                clear_expr(b);
            }
            ExprKind::Index { base, index } => {
                clear_expr(base);
                clear_expr(index);
            }
            ExprKind::Assign { target, value, .. } => {
                clear_expr(target);
                clear_expr(value);
            }
            ExprKind::Call { args, .. } => args.iter_mut().for_each(clear_expr),
        }
    }

    fn clear_stmt(s: &mut Stmt) {
        s.span = Span::default();
        match &mut s.kind {
            StmtKind::Decl(d) => clear_decl(d),
            StmtKind::Expr(e) | StmtKind::Return(Some(e)) => clear_expr(e),
            StmtKind::If { cond, then, els } => {
                clear_expr(cond);
                clear_stmt(then);
                if let Some(e) = els {
                    clear_stmt(e);
                }
            }
            StmtKind::While { cond, body } | StmtKind::DoWhile { body, cond } => {
                clear_expr(cond);
                clear_stmt(body);
            }
            StmtKind::For { init, cond, step, body } => {
                for e in [init, cond, step].into_iter().flatten() {
                    clear_expr(e);
                }
                clear_stmt(body);
            }
            StmtKind::Block(b) => b.iter_mut().for_each(clear_stmt),
            _ => {}
        }
    }

    fn clear_decl(d: &mut VarDecl) {
        d.span = Span::default();
        for e in [&mut d.array_len, &mut d.init].into_iter().flatten() {
            clear_expr(e);
        }
    }

    fn clear_program(p: &mut Program) {
        p.globals.iter_mut().for_each(clear_decl);
        for f in &mut p.functions {
            f.span = Span::default();
            f.params.iter_mut().for_each(clear_decl);
            f.body.iter_mut().for_each(clear_stmt);
        }
    }

    fn reparse_expr(e: &Expr) -> Expr {
        let text = print_expr(e);
        let mut back = parse_expr(&tokenize(&text).unwrap()).unwrap_or_else(|err| panic!("{}: {}", text, err));
        clear_expr(&mut back);
        back
    }

    fn mk(kind: ExprKind) -> Expr {
        Expr::new(kind, Span::default())
    }

    fn var(n: &str) -> Expr {
        mk(ExprKind::Var(VarRef { name: n.into(), id: None }))
    }

    fn lvalue() -> impl Strategy<Value = Expr> {
        prop_oneof![
            prop::sample::select(vec!["a", "b", "rx_in"]).prop_map(var),
            (0i64..8).prop_map(|i| mk(ExprKind::Index {
                base: Box::new(var("buf")),
                index: Box::new(mk(ExprKind::Const(i)))
            })),
        ]
    }

    fn expr_strategy() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(-300i64..300).prop_map(|v| mk(ExprKind::Const(v))), lvalue()];
        leaf.prop_recursive(4, 32, 3, |inner| {
            let binops = vec![
                BinOp::Add,
                BinOp::Sub,
                BinOp::Mul,
                BinOp::Div,
                BinOp::Rem,
                BinOp::Shl,
                BinOp::Shr,
                BinOp::BitAnd,
                BinOp::BitOr,
                BinOp::BitXor,
                BinOp::Lt,
                BinOp::Le,
                BinOp::Gt,
                BinOp::Ge,
                BinOp::Eq,
                BinOp::Ne,
            ];
            prop_oneof![
                (prop::sample::select(binops), inner.clone(), inner.clone())
                    .prop_map(|(op, a, b)| mk(ExprKind::Binary(op, Box::new(a), Box::new(b)))),
                (prop::bool::ANY, inner.clone(), inner.clone()).prop_map(|(and, a, b)| {
                    let op = if and { LogicOp::And } else { LogicOp::Or };
                    mk(ExprKind::Logic(op, Box::new(a), Box::new(b)))
                }),
                (prop::sample::select(vec![UnOp::Neg, UnOp::Not, UnOp::BitNot]), inner.clone())
                    .prop_map(|(op, a)| mk(ExprKind::Unary(op, Box::new(a)))),
                (lvalue(), inner.clone()).prop_map(|(t, v)| mk(ExprKind::Assign {
                    target: Box::new(t),
                    value: Box::new(v),
                    form: AssignForm::Plain
                })),
                (lvalue(), prop::sample::select(vec![
                    AssignForm::PreInc,
                    AssignForm::PreDec,
                    AssignForm::PostInc,
                    AssignForm::PostDec
                ]))
                .prop_map(|(t, form)| {
                    let op = if matches!(form, AssignForm::PreInc | AssignForm::PostInc) {
                        BinOp::Add
                    } else {
                        BinOp::Sub
                    };
                    let value = mk(ExprKind::Binary(op, Box::new(t.clone()), Box::new(mk(ExprKind::Const(1)))));
                    mk(ExprKind::Assign { target: Box::new(t), value: Box::new(value), form })
                }),
                (lvalue(), inner.clone()).prop_map(|(t, rhs)| {
                    let value = mk(ExprKind::Binary(BinOp::BitOr, Box::new(t.clone()), Box::new(rhs)));
                    mk(ExprKind::Assign { target: Box::new(t), value: Box::new(value), form: AssignForm::Compound })
                }),
                lvalue().prop_map(|t| mk(ExprKind::VolatileCast { ty: CType::U8, inner: Box::new(t) })),
                prop::collection::vec(inner.clone(), 0..3).prop_map(|args| mk(ExprKind::Call {
                    name: "f".into(),
                    args,
                    callee: None
                })),
                (inner.clone(), inner).prop_map(|(a, b)| mk(ExprKind::Comma(Box::new(a), Box::new(b)))),
            ]
        })
    }

    proptest! {
        #[test]
        fn expressions_round_trip(e in expr_strategy()) {
            prop_assert_eq!(reparse_expr(&e), e);
        }
    }

    #[test]
    fn program_round_trip() {
        let src = "
            const uint8 N = 4;
            volatile uint8 SREG @ 0x5F;
            uint8 EN @ 0xC1.7;
            uint8 buf[N];
            volatile uint8 *vp;
            uint16 f(uint8 a, int8 b) { if (a) return a; else return b; }
            ISR(TIMER0) { buf[0] += 2; }
            void main() {
                uint8 i;
                for (i = 0; i < N; i++) { buf[i] = -1; }
                do { i--; } while (i);
                while (1) { if (!EN) continue; else break; }
                vu8(buf[1]) = f(i, -3);
                ;
            }
        ";
        let mut p = parse_program(&tokenize(src).unwrap()).unwrap();
        clear_program(&mut p);
        let text = print_program(&p);
        let mut back = parse_program(&tokenize(&text).unwrap()).unwrap();
        clear_program(&mut back);
        assert_eq!(back, p, "{}", text);
    }

    #[test]
    fn negative_forms_stay_distinct() {
        let lit = mk(ExprKind::Const(-5));
        let neg = mk(ExprKind::Unary(UnOp::Neg, Box::new(mk(ExprKind::Const(5)))));
        assert_eq!(reparse_expr(&lit), lit);
        assert_eq!(reparse_expr(&neg), neg);
    }
}
