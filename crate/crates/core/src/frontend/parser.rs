//! Recursive-descent parser for Mini-C.

use super::ast::*;
use super::lexer::{Token, TokenKind};
use super::FrontendError;

pub fn parse_program(tokens: &[Token]) -> Result<Program, FrontendError> {
    let mut p = Parser { tokens, pos: 0 };
    let mut program = Program { entry: "main".to_string(), ..Program::default() };
    while !p.at_end() {
        p.top_level(&mut program)?;
    }
    Ok(program)
}

/// Parse a single expression (used by tests and `--explain-wf` helpers).
pub fn parse_expr(tokens: &[Token]) -> Result<Expr, FrontendError> {
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if !p.at_end() {
        return Err(p.error(&["end of input"]));
    }
    Ok(e)
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

const VOLATILE_CASTS: &[(&str, CType)] =
    &[("vu8", CType::U8), ("vs8", CType::I8), ("vu16", CType::U16), ("vs16", CType::I16)];

fn base_type(name: &str) -> Option<CType> {
    Some(match name {
        "uint8" | "uint8_t" => CType::U8,
        "int8" | "int8_t" => CType::I8,
        "uint16" | "uint16_t" => CType::U16,
        "int16" | "int16_t" => CType::I16,
        "void" => CType::Void,
        _ => return None,
    })
}

impl<'t> Parser<'t> {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, n: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + n).map(|t| &t.kind)
    }

    fn span(&self) -> Span {
        match self.tokens.get(self.pos) {
            Some(t) => t.span,
            None => self.tokens.last().map(|t| Span { start: t.span.end, ..t.span }).unwrap_or_default(),
        }
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn error(&self, expected: &[&str]) -> FrontendError {
        FrontendError::Parse {
            span: self.span(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().map(|k| k.to_string()).unwrap_or_else(|| "end of input".to_string()),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Punct(q)) if *q == p)
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Ident(s)) if s == name)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, name: &str) -> bool {
        if self.is_ident(name) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<Span, FrontendError> {
        if self.is_punct(p) {
            self.pos += 1;
            Ok(self.prev_span())
        } else {
            Err(self.error(&[p]))
        }
    }

    fn ident(&mut self) -> Result<(String, Span), FrontendError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok((s, self.prev_span()))
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn int(&mut self) -> Result<i64, FrontendError> {
        let neg = self.eat_punct("-");
        match self.peek() {
            Some(TokenKind::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.error(&["integer"])),
        }
    }

    fn starts_type(&self) -> bool {
        match self.peek() {
            Some(TokenKind::Ident(s)) => s == "volatile" || s == "const" || base_type(s).is_some(),
            _ => false,
        }
    }

    /// `[const] [volatile] base {'*'}`; returns (type, decl-volatile, const).
    fn type_spec(&mut self) -> Result<(CType, bool, bool), FrontendError> {
        let mut is_const = false;
        let mut volatile = false;
        loop {
            if self.eat_ident("const") {
                is_const = true;
            } else if self.eat_ident("volatile") {
                volatile = true;
            } else {
                break;
            }
        }
        let (name, _) = self.ident().map_err(|_| self.error(&["type"]))?;
        let mut ty = match base_type(&name) {
            Some(t) => t,
            None => {
                self.pos -= 1;
                return Err(self.error(&["type"]));
            }
        };
        let mut depth = 0;
        while self.eat_punct("*") {
            depth += 1;
        }
        let mut pointee_volatile = false;
        for d in 0..depth {
            // `volatile T *p` qualifies the pointee, not the pointer.
            let v = d == 0 && volatile;
            pointee_volatile |= v;
            ty = CType::Ptr { to: Box::new(ty), volatile: v };
        }
        Ok((ty, volatile && !pointee_volatile, is_const))
    }

    fn top_level(&mut self, program: &mut Program) -> Result<(), FrontendError> {
        if self.is_ident("ISR") && matches!(self.peek_at(1), Some(TokenKind::Punct("("))) {
            let start = self.span();
            self.pos += 2;
            let (vector, _) = self.ident()?;
            self.expect_punct(")")?;
            let body = self.block_body()?;
            program.functions.push(FunctionDef {
                name: vector.clone(),
                ret: CType::Void,
                params: Vec::new(),
                body,
                isr_vector: Some(vector),
                span: start.to(self.prev_span()),
                locals: Vec::new(),
                ret_slot: None,
            });
            return Ok(());
        }
        let start = self.span();
        let (ty, volatile, is_const) = self.type_spec()?;
        let (name, name_span) = self.ident()?;
        if self.is_punct("(") {
            self.pos += 1;
            let params = self.params()?;
            let body = self.block_body()?;
            program.functions.push(FunctionDef {
                name,
                ret: ty,
                params,
                body,
                isr_vector: None,
                span: start.to(self.prev_span()),
                locals: Vec::new(),
                ret_slot: None,
            });
            return Ok(());
        }
        let mut decl_name = (name, name_span);
        loop {
            let decl = self.declarator_rest(decl_name, &ty, volatile, is_const, Storage::Global)?;
            program.globals.push(decl);
            if self.eat_punct(",") {
                decl_name = self.ident()?;
                continue;
            }
            self.expect_punct(";")?;
            return Ok(());
        }
    }

    /// After the declared name: `['[' expr ']'] ['@' addr['.' bit]] ['=' expr]`.
    fn declarator_rest(
        &mut self,
        (name, span): (String, Span),
        ty: &CType,
        volatile: bool,
        is_const: bool,
        storage: Storage,
    ) -> Result<VarDecl, FrontendError> {
        let mut ctype = ty.clone();
        let mut len_expr = None;
        if self.eat_punct("[") {
            len_expr = Some(self.assign_expr()?);
            self.expect_punct("]")?;
        }
        let mut absolute_address = None;
        if storage == Storage::Global && self.eat_punct("@") {
            let address = self.int()?;
            let bit = if self.eat_punct(".") { Some(self.int()?) } else { None };
            if !(0..=0xFFFF).contains(&address) || bit.is_some_and(|b| !(0..=15).contains(&b)) {
                return Err(FrontendError::Parse {
                    span: self.prev_span(),
                    expected: vec!["address in 0..=0xFFFF, bit in 0..=15".into()],
                    found: "out-of-range address".into(),
                });
            }
            absolute_address = Some(AbsAddr { address: address as u32, bit: bit.map(|b| b as u8) });
        }
        let init = if self.eat_punct("=") { Some(self.assign_expr()?) } else { None };
        if len_expr.is_some() {
            // Placeholder length; resolve evaluates `array_len`.
            ctype = CType::Array(Box::new(ctype), 0);
        }
        Ok(VarDecl { name, ctype, volatile, is_const, storage, absolute_address, array_len: len_expr, init, span, id: None })
    }

    fn params(&mut self) -> Result<Vec<VarDecl>, FrontendError> {
        let mut params = Vec::new();
        if self.eat_punct(")") {
            return Ok(params);
        }
        if self.is_ident("void") && matches!(self.peek_at(1), Some(TokenKind::Punct(")"))) {
            self.pos += 2;
            return Ok(params);
        }
        loop {
            let (ty, volatile, is_const) = self.type_spec()?;
            let (name, span) = self.ident()?;
            params.push(VarDecl {
                name,
                ctype: ty,
                volatile,
                is_const,
                storage: Storage::Param,
                absolute_address: None,
                array_len: None,
                init: None,
                span,
                id: None,
            });
            if self.eat_punct(",") {
                continue;
            }
            self.expect_punct(")")?;
            return Ok(params);
        }
    }

    fn block_body(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.eat_punct("}") {
            if self.at_end() {
                return Err(self.error(&["}"]));
            }
            self.stmt_into(&mut stmts)?;
        }
        Ok(stmts)
    }

    /// Parse one statement; local declarations with several declarators
    /// expand into several `Decl` statements.
    fn stmt_into(&mut self, out: &mut Vec<Stmt>) -> Result<(), FrontendError> {
        if self.starts_type() {
            let (ty, volatile, is_const) = self.type_spec()?;
            loop {
                let name = self.ident()?;
                let decl = self.declarator_rest(name, &ty, volatile, is_const, Storage::Local)?;
                let span = decl.span.to(self.prev_span());
                out.push(Stmt { kind: StmtKind::Decl(decl), span });
                if self.eat_punct(",") {
                    continue;
                }
                self.expect_punct(";")?;
                return Ok(());
            }
        }
        let s = self.stmt()?;
        out.push(s);
        Ok(())
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        let start = self.span();
        let kind = if self.eat_punct(";") {
            StmtKind::Empty
        } else if self.is_punct("{") {
            StmtKind::Block(self.block_body()?)
        } else if self.eat_ident("if") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then = Box::new(self.sub_stmt()?);
            let els = if self.eat_ident("else") { Some(Box::new(self.sub_stmt()?)) } else { None };
            StmtKind::If { cond, then, els }
        } else if self.eat_ident("while") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            StmtKind::While { cond, body: Box::new(self.sub_stmt()?) }
        } else if self.eat_ident("do") {
            let body = Box::new(self.sub_stmt()?);
            if !self.eat_ident("while") {
                return Err(self.error(&["while"]));
            }
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            StmtKind::DoWhile { body, cond }
        } else if self.eat_ident("for") {
            self.expect_punct("(")?;
            let init = if self.is_punct(";") { None } else { Some(self.expr()?) };
            self.expect_punct(";")?;
            let cond = if self.is_punct(";") { None } else { Some(self.expr()?) };
            self.expect_punct(";")?;
            let step = if self.is_punct(")") { None } else { Some(self.expr()?) };
            self.expect_punct(")")?;
            StmtKind::For { init, cond, step, body: Box::new(self.sub_stmt()?) }
        } else if self.eat_ident("return") {
            let e = if self.is_punct(";") { None } else { Some(self.expr()?) };
            self.expect_punct(";")?;
            StmtKind::Return(e)
        } else if self.eat_ident("break") {
            self.expect_punct(";")?;
            StmtKind::Break
        } else if self.eat_ident("continue") {
            self.expect_punct(";")?;
            StmtKind::Continue
        } else if self.is_ident("goto") || self.is_ident("switch") || self.is_ident("struct") {
            return Err(self.error(&["statement"]));
        } else {
            let e = self.expr()?;
            self.expect_punct(";")?;
            StmtKind::Expr(e)
        };
        Ok(Stmt { kind, span: start.to(self.prev_span()) })
    }

    /// Body of if/while/for: a declaration there would need its own scope,
    /// so wrap it in a block.
    fn sub_stmt(&mut self) -> Result<Stmt, FrontendError> {
        if self.starts_type() {
            let start = self.span();
            let mut stmts = Vec::new();
            self.stmt_into(&mut stmts)?;
            return Ok(Stmt { kind: StmtKind::Block(stmts), span: start.to(self.prev_span()) });
        }
        self.stmt()
    }

    pub fn expr(&mut self) -> Result<Expr, FrontendError> {
        let mut lhs = self.assign_expr()?;
        while self.eat_punct(",") {
            let rhs = self.assign_expr()?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Comma(Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn assign_expr(&mut self) -> Result<Expr, FrontendError> {
        let lhs = self.binary(0)?;
        let op = match self.peek() {
            Some(TokenKind::Punct(p)) => *p,
            _ => return Ok(lhs),
        };
        let compound = match op {
            "=" => None,
            "+=" => Some(BinOp::Add),
            "-=" => Some(BinOp::Sub),
            "*=" => Some(BinOp::Mul),
            "/=" => Some(BinOp::Div),
            "%=" => Some(BinOp::Rem),
            "&=" => Some(BinOp::BitAnd),
            "|=" => Some(BinOp::BitOr),
            "^=" => Some(BinOp::BitXor),
            "<<=" => Some(BinOp::Shl),
            ">>=" => Some(BinOp::Shr),
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.assign_expr()?;
        let span = lhs.span.to(rhs.span);
        Ok(match compound {
            None => Expr::new(
                ExprKind::Assign { target: Box::new(lhs), value: Box::new(rhs), form: AssignForm::Plain },
                span,
            ),
            Some(op) => rmw(lhs, op, rhs, AssignForm::Compound, span),
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        loop {
            let (prec, op) = match self.peek() {
                Some(TokenKind::Punct(p)) => match binop_info(p) {
                    Some(x) => x,
                    None => break,
                },
                _ => break,
            };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = match op {
                Op::Bin(b) => Expr::new(ExprKind::Binary(b, Box::new(lhs), Box::new(rhs)), span),
                Op::Logic(l) => Expr::new(ExprKind::Logic(l, Box::new(lhs), Box::new(rhs)), span),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        let start = self.span();
        let op = match self.peek() {
            Some(TokenKind::Punct(p)) => *p,
            _ => return self.postfix(),
        };
        let mk = |this: &Self, kind| Expr::new(kind, start.to(this.prev_span()));
        match op {
            "-" => {
                self.pos += 1;
                if let Some(TokenKind::Int(v)) = self.peek() {
                    let v = *v;
                    // Negative literals fold into a constant unless a postfix follows.
                    if !matches!(self.peek_at(1), Some(TokenKind::Punct("[" | "(" | "++" | "--"))) {
                        self.pos += 1;
                        return Ok(mk(self, ExprKind::Const(-v)));
                    }
                }
                let e = self.unary()?;
                Ok(mk(self, ExprKind::Unary(UnOp::Neg, Box::new(e))))
            }
            "+" => {
                self.pos += 1;
                self.unary()
            }
            "!" => {
                self.pos += 1;
                let e = self.unary()?;
                Ok(mk(self, ExprKind::Unary(UnOp::Not, Box::new(e))))
            }
            "~" => {
                self.pos += 1;
                let e = self.unary()?;
                Ok(mk(self, ExprKind::Unary(UnOp::BitNot, Box::new(e))))
            }
            "&" => {
                self.pos += 1;
                let e = self.unary()?;
                Ok(mk(self, ExprKind::AddrOf(Box::new(e))))
            }
            "*" => {
                self.pos += 1;
                let e = self.unary()?;
                Ok(mk(self, ExprKind::Deref(Box::new(e))))
            }
            "++" | "--" => {
                self.pos += 1;
                let e = self.unary()?;
                let span = start.to(self.prev_span());
                let (bop, form) =
                    if op == "++" { (BinOp::Add, AssignForm::PreInc) } else { (BinOp::Sub, AssignForm::PreDec) };
                let one = Expr::new(ExprKind::Const(1), span);
                Ok(rmw(e, bop, one, form, span))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct("[") {
                let index = self.expr()?;
                self.expect_punct("]")?;
                let span = e.span.to(self.prev_span());
                e = Expr::new(ExprKind::Index { base: Box::new(e), index: Box::new(index) }, span);
            } else if self.is_punct("++") || self.is_punct("--") {
                let inc = self.is_punct("++");
                self.pos += 1;
                let span = e.span.to(self.prev_span());
                let (bop, form) =
                    if inc { (BinOp::Add, AssignForm::PostInc) } else { (BinOp::Sub, AssignForm::PostDec) };
                let one = Expr::new(ExprKind::Const(1), span);
                e = rmw(e, bop, one, form, span);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        let start = self.span();
        match self.peek().cloned() {
            Some(TokenKind::Int(v)) => {
                self.pos += 1;
                Ok(Expr::new(ExprKind::Const(v), start))
            }
            Some(TokenKind::Punct("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Some(TokenKind::Ident(name)) => {
                self.pos += 1;
                if self.is_punct("(") {
                    self.pos += 1;
                    if let Some((_, ty)) = VOLATILE_CASTS.iter().find(|(n, _)| *n == name) {
                        let inner = self.assign_expr()?;
                        self.expect_punct(")")?;
                        return Ok(Expr::new(
                            ExprKind::VolatileCast { ty: ty.clone(), inner: Box::new(inner) },
                            start.to(self.prev_span()),
                        ));
                    }
                    let mut args = Vec::new();
                    if !self.eat_punct(")") {
                        loop {
                            args.push(self.assign_expr()?);
                            if self.eat_punct(",") {
                                continue;
                            }
                            self.expect_punct(")")?;
                            break;
                        }
                    }
                    return Ok(Expr::new(
                        ExprKind::Call { name, args, callee: None },
                        start.to(self.prev_span()),
                    ));
                }
                Ok(Expr::new(ExprKind::Var(VarRef { name, id: None }), start))
            }
            _ => Err(self.error(&["expression"])),
        }
    }
}

enum Op {
    Bin(BinOp),
    Logic(LogicOp),
}

fn binop_info(p: &str) -> Option<(u8, Op)> {
    Some(match p {
        "||" => (1, Op::Logic(LogicOp::Or)),
        "&&" => (2, Op::Logic(LogicOp::And)),
        "|" => (3, Op::Bin(BinOp::BitOr)),
        "^" => (4, Op::Bin(BinOp::BitXor)),
        "&" => (5, Op::Bin(BinOp::BitAnd)),
        "==" => (6, Op::Bin(BinOp::Eq)),
        "!=" => (6, Op::Bin(BinOp::Ne)),
        "<" => (7, Op::Bin(BinOp::Lt)),
        "<=" => (7, Op::Bin(BinOp::Le)),
        ">" => (7, Op::Bin(BinOp::Gt)),
        ">=" => (7, Op::Bin(BinOp::Ge)),
        "<<" => (8, Op::Bin(BinOp::Shl)),
        ">>" => (8, Op::Bin(BinOp::Shr)),
        "+" => (9, Op::Bin(BinOp::Add)),
        "-" => (9, Op::Bin(BinOp::Sub)),
        "*" => (10, Op::Bin(BinOp::Mul)),
        "/" => (10, Op::Bin(BinOp::Div)),
        "%" => (10, Op::Bin(BinOp::Rem)),
        _ => return None,
    })
}

/// Desugar `lv op= rhs` / `++lv` / `lv++` into an assignment whose value
/// re-reads the target.
fn rmw(target: Expr, op: BinOp, rhs: Expr, form: AssignForm, span: Span) -> Expr {
    let read = target.clone();
    let value = Expr::new(ExprKind::Binary(op, Box::new(read), Box::new(rhs)), span);
    Expr::new(ExprKind::Assign { target: Box::new(target), value: Box::new(value), form }, span)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::lexer::tokenize;

    fn parse(src: &str) -> Program {
        parse_program(&tokenize(src).unwrap()).unwrap()
    }

    fn expr(src: &str) -> Expr {
        parse_expr(&tokenize(src).unwrap()).unwrap()
    }

    #[test]
    fn global_only() {
        let p = parse("uint8 x;");
        assert_eq!(p.globals.len(), 1);
        assert!(p.functions.is_empty());
    }

    #[test]
    fn assignment_is_right_associative() {
        let e = expr("a = b = 0");
        match e.kind {
            ExprKind::Assign { target, value, form: AssignForm::Plain } => {
                assert_eq!(target.kind, ExprKind::Var(VarRef { name: "a".into(), id: None }));
                assert!(matches!(value.kind, ExprKind::Assign { .. }));
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn precedence() {
        let e = expr("a + b * c < d && e");
        let ExprKind::Logic(LogicOp::And, lhs, _) = e.kind else { panic!() };
        let ExprKind::Binary(BinOp::Lt, sum, _) = lhs.kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, _, prod) = sum.kind else { panic!() };
        assert!(matches!(prod.kind, ExprKind::Binary(BinOp::Mul, _, _)));
    }

    #[test]
    fn increments_desugar_to_rmw() {
        let e = expr("x++");
        let ExprKind::Assign { target, value, form } = e.kind else { panic!() };
        assert_eq!(form, AssignForm::PostInc);
        let ExprKind::Binary(BinOp::Add, read, one) = value.kind else { panic!() };
        assert_eq!(read.kind, target.kind);
        assert_eq!(one.kind, ExprKind::Const(1));
    }

    #[test]
    fn isr_definition() {
        let p = parse("ISR(USART0_RX_vect) { x = 1; } void main() {}");
        assert_eq!(p.functions.len(), 2);
        assert_eq!(p.functions[0].isr_vector.as_deref(), Some("USART0_RX_vect"));
    }

    #[test]
    fn register_binding() {
        let p = parse("volatile uint8 SREG @ 0x5F; uint8 IEN @ 0xC1.7;");
        assert_eq!(p.globals[0].absolute_address, Some(AbsAddr { address: 0x5F, bit: None }));
        assert_eq!(p.globals[1].absolute_address, Some(AbsAddr { address: 0xC1, bit: Some(7) }));
        assert!(p.globals[0].volatile);
    }

    #[test]
    fn volatile_cast() {
        let e = expr("rx_out == vu8(rx_in)");
        let ExprKind::Binary(BinOp::Eq, _, rhs) = e.kind else { panic!() };
        assert!(matches!(rhs.kind, ExprKind::VolatileCast { ty: CType::U8, .. }));
    }

    #[test]
    fn parse_errors_report_expected() {
        let err = parse_program(&tokenize("void main() { x = ; }").unwrap()).unwrap_err();
        match err {
            FrontendError::Parse { expected, span, .. } => {
                assert_eq!(expected, vec!["expression".to_string()]);
                assert_eq!(span.col, 19);
            }
            other => panic!("{:?}", other),
        }
        assert!(parse_program(&tokenize("void main() { goto x; }").unwrap()).is_err());
        assert!(parse_program(&tokenize("void main() {").unwrap()).is_err());
    }
}
