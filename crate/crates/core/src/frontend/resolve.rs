//! Name resolution and typing.
//!
//! Mixed-width operands promote to the wider type and there is no implicit
//! promotion to a 16-bit `int`. Literal operands adopt the type of the other
//! operand when they fit, so `pos + 1` stays `uint8`.

use std::collections::{BTreeMap, HashMap, HashSet};

use super::ast::*;
use super::FrontendError;

pub fn resolve_symbols(mut program: Program) -> Result<Program, FrontendError> {
    program.vars.clear();
    let mut r = Resolver { program: &mut program, scopes: Vec::new(), current: None };
    r.globals()?;
    r.signatures()?;
    r.bodies()?;
    check_entry(&program)?;
    check_recursion(&program)?;
    Ok(program)
}

/// The entry function must exist and take no parameters.
pub fn check_entry(program: &Program) -> Result<(), FrontendError> {
    match program.entry_id() {
        Some(f) if program.func(f).params.is_empty() && !program.func(f).is_isr() => Ok(()),
        _ => Err(FrontendError::MissingEntry(program.entry.clone())),
    }
}

struct Resolver<'p> {
    program: &'p mut Program,
    scopes: Vec<HashMap<String, VarId>>,
    current: Option<FuncId>,
}

impl Resolver<'_> {
    fn new_var(&mut self, decl: &VarDecl, ctype: CType, func: Option<FuncId>, const_value: Option<i64>) -> VarId {
        let id = VarId(self.program.vars.len() as u32);
        self.program.vars.push(VarInfo {
            name: decl.name.clone(),
            ctype,
            volatile: decl.volatile,
            storage: decl.storage,
            func,
            absolute_address: decl.absolute_address,
            const_value,
            span: decl.span,
        });
        id
    }

    fn const_eval(&self, e: &Expr) -> Result<i64, FrontendError> {
        let bad = || FrontendError::TypeMismatch { span: e.span, message: "expected a constant expression".into() };
        Ok(match &e.kind {
            ExprKind::Const(v) => *v,
            ExprKind::Var(r) => {
                let id = self.lookup(&r.name).ok_or_else(|| FrontendError::UndeclaredIdentifier {
                    name: r.name.clone(),
                    span: e.span,
                })?;
                self.program.var(id).const_value.ok_or_else(bad)?
            }
            ExprKind::Unary(UnOp::Neg, a) => -self.const_eval(a)?,
            ExprKind::Unary(UnOp::BitNot, a) => !self.const_eval(a)?,
            ExprKind::Unary(UnOp::Not, a) => (self.const_eval(a)? == 0) as i64,
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (self.const_eval(a)?, self.const_eval(b)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div if b != 0 => a / b,
                    BinOp::Rem if b != 0 => a % b,
                    BinOp::Shl if (0..16).contains(&b) => a << b,
                    BinOp::Shr if (0..16).contains(&b) => a >> b,
                    BinOp::BitOr => a | b,
                    BinOp::BitAnd => a & b,
                    BinOp::BitXor => a ^ b,
                    _ => return Err(bad()),
                }
            }
            _ => return Err(bad()),
        })
    }

    fn lookup(&self, name: &str) -> Option<VarId> {
        for scope in self.scopes.iter().rev() {
            if let Some(id) = scope.get(name) {
                return Some(*id);
            }
        }
        self.program.global_by_name(name)
    }

    fn declared_type(&self, decl: &VarDecl) -> Result<CType, FrontendError> {
        if decl.ctype == CType::Void {
            return Err(FrontendError::TypeMismatch { span: decl.span, message: "variable of type void".into() });
        }
        match (&decl.ctype, &decl.array_len) {
            (CType::Array(elem, _), Some(len)) => {
                let n = self.const_eval(len)?;
                if n <= 0 || n > 4096 {
                    return Err(FrontendError::TypeMismatch {
                        span: len.span,
                        message: format!("array length must be a positive constant, got {}", n),
                    });
                }
                if elem.is_ptr() {
                    return Err(FrontendError::Unsupported { span: decl.span, message: "arrays of pointers".into() });
                }
                Ok(CType::Array(elem.clone(), n as u32))
            }
            (ty, _) => Ok(ty.clone()),
        }
    }

    fn globals(&mut self) -> Result<(), FrontendError> {
        let mut globals = std::mem::take(&mut self.program.globals);
        let mut seen: HashMap<u32, Vec<Option<u8>>> = HashMap::new();
        for decl in &mut globals {
            if self.program.global_by_name(&decl.name).is_some() {
                return Err(FrontendError::Redeclared { name: decl.name.clone(), span: decl.span });
            }
            let ctype = self.declared_type(decl)?;
            if let Some(addr) = decl.absolute_address {
                if !ctype.is_int() {
                    return Err(FrontendError::TypeMismatch {
                        span: decl.span,
                        message: "only integer registers can be bound to an address".into(),
                    });
                }
                let bits = seen.entry(addr.address).or_default();
                if bits.contains(&addr.bit) {
                    return Err(FrontendError::Redeclared { name: decl.name.clone(), span: decl.span });
                }
                bits.push(addr.bit);
            }
            let mut const_value = None;
            if let Some(init) = &mut decl.init {
                if ctype.is_array() {
                    return Err(FrontendError::Unsupported {
                        span: init.span,
                        message: "array initializers".into(),
                    });
                }
                let v = self.const_eval(init)?;
                init.kind = ExprKind::Const(ctype.wrap(v));
                init.ty = Some(ctype.clone());
                if decl.is_const {
                    const_value = Some(ctype.wrap(v));
                }
            } else if decl.is_const {
                return Err(FrontendError::TypeMismatch {
                    span: decl.span,
                    message: format!("const `{}` needs an initializer", decl.name),
                });
            }
            decl.id = Some(self.new_var(decl, ctype, None, const_value));
        }
        self.program.globals = globals;
        Ok(())
    }

    fn signatures(&mut self) -> Result<(), FrontendError> {
        let mut names = HashSet::new();
        let mut vectors = HashSet::new();
        for f in &self.program.functions {
            if let Some(v) = &f.isr_vector {
                if !vectors.insert(v.clone()) {
                    return Err(FrontendError::DuplicateIsr { name: v.clone(), span: f.span });
                }
            }
            if !names.insert(f.name.clone()) || matches!(f.name.as_str(), "sei" | "cli") {
                return Err(FrontendError::Redeclared { name: f.name.clone(), span: f.span });
            }
            if self.program.global_by_name(&f.name).is_some() {
                return Err(FrontendError::Redeclared { name: f.name.clone(), span: f.span });
            }
            if matches!(f.ret, CType::Array(..)) {
                return Err(FrontendError::TypeMismatch { span: f.span, message: "functions cannot return arrays".into() });
            }
        }
        Ok(())
    }

    fn bodies(&mut self) -> Result<(), FrontendError> {
        for fi in 0..self.program.functions.len() {
            let fid = FuncId(fi as u32);
            self.current = Some(fid);
            self.scopes = vec![HashMap::new()];
            let mut params = std::mem::take(&mut self.program.functions[fi].params);
            let mut locals = Vec::new();
            for p in &mut params {
                if p.ctype == CType::Void || p.ctype.is_array() {
                    return Err(FrontendError::TypeMismatch { span: p.span, message: "invalid parameter type".into() });
                }
                if self.scopes[0].contains_key(&p.name) {
                    return Err(FrontendError::Redeclared { name: p.name.clone(), span: p.span });
                }
                let id = self.new_var(p, p.ctype.clone(), Some(fid), None);
                p.id = Some(id);
                self.scopes[0].insert(p.name.clone(), id);
                locals.push(id);
            }
            let ret = self.program.functions[fi].ret.clone();
            let ret_slot = if ret != CType::Void {
                let id = VarId(self.program.vars.len() as u32);
                self.program.vars.push(VarInfo {
                    name: "$ret".into(),
                    ctype: ret.clone(),
                    volatile: false,
                    storage: Storage::Temp,
                    func: Some(fid),
                    absolute_address: None,
                    const_value: None,
                    span: self.program.functions[fi].span,
                });
                locals.push(id);
                Some(id)
            } else {
                None
            };
            let mut body = std::mem::take(&mut self.program.functions[fi].body);
            for s in &mut body {
                self.stmt(s, &ret, &mut locals)?;
            }
            let f = &mut self.program.functions[fi];
            f.params = params;
            f.body = body;
            f.locals = locals;
            f.ret_slot = ret_slot;
        }
        Ok(())
    }

    fn stmt(&mut self, s: &mut Stmt, ret: &CType, locals: &mut Vec<VarId>) -> Result<(), FrontendError> {
        match &mut s.kind {
            StmtKind::Decl(decl) => {
                if self.scopes.last().unwrap().contains_key(&decl.name) {
                    return Err(FrontendError::Redeclared { name: decl.name.clone(), span: decl.span });
                }
                let ctype = self.declared_type(decl)?;
                if decl.is_const && decl.init.is_none() {
                    return Err(FrontendError::TypeMismatch {
                        span: decl.span,
                        message: format!("const `{}` needs an initializer", decl.name),
                    });
                }
                if let Some(init) = &mut decl.init {
                    if ctype.is_array() {
                        return Err(FrontendError::Unsupported { span: init.span, message: "array initializers".into() });
                    }
                    self.expr(init)?;
                    check_assignable(&ctype, init)?;
                }
                let id = self.new_var(decl, ctype, self.current, None);
                decl.id = Some(id);
                self.scopes.last_mut().unwrap().insert(decl.name.clone(), id);
                locals.push(id);
            }
            StmtKind::Expr(e) => {
                self.expr(e)?;
            }
            StmtKind::If { cond, then, els } => {
                self.cond(cond)?;
                self.scoped(then, ret, locals)?;
                if let Some(e) = els {
                    self.scoped(e, ret, locals)?;
                }
            }
            StmtKind::While { cond, body } | StmtKind::DoWhile { body, cond } => {
                self.cond(cond)?;
                self.scoped(body, ret, locals)?;
            }
            StmtKind::For { init, cond, step, body } => {
                if let Some(e) = init {
                    self.expr(e)?;
                }
                if let Some(e) = cond {
                    self.cond(e)?;
                }
                if let Some(e) = step {
                    self.expr(e)?;
                }
                self.scoped(body, ret, locals)?;
            }
            StmtKind::Return(e) => match (e, ret) {
                (None, CType::Void) => {}
                (Some(e), ty) if *ty != CType::Void => {
                    self.expr(e)?;
                    check_assignable(ty, e)?;
                }
                _ => {
                    return Err(FrontendError::TypeMismatch {
                        span: s.span,
                        message: "return value does not match function type".into(),
                    })
                }
            },
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                for st in stmts {
                    self.stmt(st, ret, locals)?;
                }
                self.scopes.pop();
            }
            StmtKind::Break | StmtKind::Continue | StmtKind::Empty => {}
        }
        Ok(())
    }

    fn scoped(&mut self, s: &mut Stmt, ret: &CType, locals: &mut Vec<VarId>) -> Result<(), FrontendError> {
        self.scopes.push(HashMap::new());
        let r = self.stmt(s, ret, locals);
        self.scopes.pop();
        r
    }

    fn cond(&mut self, e: &mut Expr) -> Result<(), FrontendError> {
        let ty = self.expr(e)?;
        if !ty.is_int() && !ty.is_ptr() {
            return Err(FrontendError::TypeMismatch { span: e.span, message: "condition must be scalar".into() });
        }
        Ok(())
    }

    fn expr(&mut self, e: &mut Expr) -> Result<CType, FrontendError> {
        let span = e.span;
        let mismatch = |m: &str| FrontendError::TypeMismatch { span, message: m.to_string() };
        let ty = match &mut e.kind {
            ExprKind::Const(v) => CType::for_literal(*v).ok_or_else(|| mismatch("integer literal out of range"))?,
            ExprKind::Var(r) => {
                let id = self
                    .lookup(&r.name)
                    .ok_or_else(|| FrontendError::UndeclaredIdentifier { name: r.name.clone(), span })?;
                let info = self.program.var(id);
                if let Some(v) = info.const_value {
                    let ty = info.ctype.clone();
                    e.kind = ExprKind::Const(v);
                    e.ty = Some(ty.clone());
                    return Ok(ty);
                }
                r.id = Some(id);
                info.ctype.clone()
            }
            ExprKind::Unary(op, a) => {
                let t = self.expr(a)?;
                if !t.is_int() {
                    return Err(mismatch("unary operator on non-integer"));
                }
                match op {
                    UnOp::Not => CType::U8,
                    UnOp::Neg => match t {
                        CType::U8 => CType::I8,
                        CType::U16 => CType::I16,
                        t => t,
                    },
                    UnOp::BitNot => t,
                }
            }
            ExprKind::Binary(op, a, b) => {
                let ta = self.expr(a)?;
                let tb = self.expr(b)?;
                if ta.is_ptr() || tb.is_ptr() {
                    if matches!(op, BinOp::Eq | BinOp::Ne) && ta.is_ptr() && tb.is_ptr() {
                        CType::U8
                    } else {
                        return Err(FrontendError::Unsupported { span, message: "pointer arithmetic".into() });
                    }
                } else {
                    if !ta.is_int() || !tb.is_int() {
                        return Err(mismatch("arithmetic on non-integer operands"));
                    }
                    let common = if matches!(op, BinOp::Shl | BinOp::Shr) {
                        adapt_literal(b, &ta);
                        ta
                    } else {
                        let t = unify(a, b, ta, tb);
                        t
                    };
                    if op.is_comparison() {
                        CType::U8
                    } else {
                        common
                    }
                }
            }
            ExprKind::Logic(_, a, b) => {
                self.cond(a)?;
                self.cond(b)?;
                CType::U8
            }
            ExprKind::Comma(a, b) => {
                self.expr(a)?;
                self.expr(b)?
            }
            ExprKind::Call { name, args, callee } => {
                let (c, params, ret) = match name.as_str() {
                    "sei" => (Callee::Builtin(Builtin::Sei), vec![], CType::Void),
                    "cli" => (Callee::Builtin(Builtin::Cli), vec![], CType::Void),
                    _ => {
                        let f = self.program.func_by_name(name).ok_or_else(|| {
                            FrontendError::UndeclaredIdentifier { name: name.clone(), span }
                        })?;
                        let def = self.program.func(f);
                        if def.is_isr() {
                            return Err(mismatch("ISRs cannot be called directly"));
                        }
                        let params: Vec<CType> = def.params.iter().map(|p| p.ctype.clone()).collect();
                        (Callee::Func(f), params, def.ret.clone())
                    }
                };
                if params.len() != args.len() {
                    return Err(mismatch(&format!(
                        "`{}` expects {} argument(s), got {}",
                        name,
                        params.len(),
                        args.len()
                    )));
                }
                for (a, p) in args.iter_mut().zip(&params) {
                    self.expr(a)?;
                    check_assignable(p, a)?;
                }
                *callee = Some(c);
                ret
            }
            ExprKind::Assign { target, value, form } => {
                let tt = self.expr(target)?;
                if !target.is_lvalue() || tt.is_array() {
                    return Err(mismatch("assignment to a non-lvalue"));
                }
                if let Some(id) = lvalue_root(target) {
                    if self.program.var(id).const_value.is_some() {
                        return Err(mismatch("assignment to a const"));
                    }
                }
                self.expr(value)?;
                if form.is_rmw() {
                    if !tt.is_int() {
                        return Err(mismatch("increment of a non-integer"));
                    }
                    // The rmw value reads the target: keep it at the target's type.
                    if let ExprKind::Binary(_, _, rhs) = &mut value.kind {
                        adapt_literal(rhs, &tt);
                    }
                    value.ty = Some(tt.clone());
                }
                check_assignable(&tt, value)?;
                tt
            }
            ExprKind::Index { base, index } => {
                let tb = self.expr(base)?;
                let CType::Array(elem, _) = tb else {
                    return Err(mismatch("indexing a non-array"));
                };
                if !matches!(base.kind, ExprKind::Var(_)) {
                    return Err(mismatch("array base must be a named array"));
                }
                let ti = self.expr(index)?;
                if !ti.is_int() {
                    return Err(mismatch("array index must be an integer"));
                }
                *elem
            }
            ExprKind::AddrOf(inner) => {
                let t = self.expr(inner)?;
                if !matches!(inner.kind, ExprKind::Var(_) | ExprKind::Index { .. }) {
                    return Err(mismatch("address of a non-variable"));
                }
                let volatile = lvalue_root(inner).map(|v| self.program.var(v).volatile).unwrap_or(false);
                match t {
                    CType::Array(elem, _) => CType::Ptr { to: elem, volatile },
                    t if t.is_int() => CType::Ptr { to: Box::new(t), volatile },
                    _ => return Err(FrontendError::Unsupported { span, message: "pointers to pointers".into() }),
                }
            }
            ExprKind::Deref(inner) => match self.expr(inner)? {
                CType::Ptr { to, .. } => *to,
                _ => return Err(mismatch("dereference of a non-pointer")),
            },
            ExprKind::VolatileCast { ty, inner } => {
                let t = self.expr(inner)?;
                if !inner.is_lvalue() {
                    return Err(mismatch("volatile access of a non-lvalue"));
                }
                if t != *ty {
                    return Err(mismatch(&format!("volatile cast to {} of a {} lvalue", ty, t)));
                }
                ty.clone()
            }
        };
        e.ty = Some(ty.clone());
        Ok(ty)
    }
}

/// Root variable of an lvalue (`x`, `a[i]`), if any.
pub fn lvalue_root(e: &Expr) -> Option<VarId> {
    match &e.kind {
        ExprKind::Var(r) => r.id,
        ExprKind::Index { base, .. } => base.var_id(),
        ExprKind::VolatileCast { inner, .. } => lvalue_root(inner),
        _ => None,
    }
}

fn check_assignable(target: &CType, value: &Expr) -> Result<(), FrontendError> {
    let vt = value.ty();
    let ok = match (target, vt) {
        (t, v) if t.is_int() && v.is_int() => true,
        (CType::Ptr { to: a, .. }, CType::Ptr { to: b, .. }) => a == b,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(FrontendError::TypeMismatch { span: value.span, message: format!("cannot assign {} to {}", vt, target) })
    }
}

fn adapt_literal(e: &mut Expr, to: &CType) {
    if let ExprKind::Const(v) = e.kind {
        if to.fits(v) {
            e.ty = Some(to.clone());
        }
    }
}

fn wider(a: &CType, b: &CType) -> CType {
    match a.bits().cmp(&b.bits()) {
        std::cmp::Ordering::Greater => a.clone(),
        std::cmp::Ordering::Less => b.clone(),
        // Same width with mixed signedness resolves to unsigned, as in C.
        std::cmp::Ordering::Equal => {
            if !a.is_signed() {
                a.clone()
            } else {
                b.clone()
            }
        }
    }
}

fn unify(a: &mut Expr, b: &mut Expr, ta: CType, tb: CType) -> CType {
    let a_lit = matches!(a.kind, ExprKind::Const(_));
    let b_lit = matches!(b.kind, ExprKind::Const(_));
    match (a_lit, b_lit) {
        (false, true) => {
            let ExprKind::Const(v) = b.kind else { unreachable!() };
            if ta.fits(v) {
                b.ty = Some(ta.clone());
                return ta;
            }
        }
        (true, false) => {
            let ExprKind::Const(v) = a.kind else { unreachable!() };
            if tb.fits(v) {
                a.ty = Some(tb.clone());
                return tb;
            }
        }
        _ => {}
    }
    wider(&ta, &tb)
}

/// Reject recursion: the call graph must be acyclic.
pub fn check_recursion(program: &Program) -> Result<(), FrontendError> {
    let graph = call_graph(program);
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; program.functions.len()];
    let mut stack = Vec::new();
    fn dfs(
        f: FuncId,
        graph: &BTreeMap<FuncId, Vec<FuncId>>,
        state: &mut [u8],
        stack: &mut Vec<FuncId>,
        program: &Program,
    ) -> Result<(), FrontendError> {
        state[f.0 as usize] = 1;
        stack.push(f);
        for &g in graph.get(&f).into_iter().flatten() {
            match state[g.0 as usize] {
                1 => {
                    let pos = stack.iter().position(|x| *x == g).unwrap();
                    let cycle = stack[pos..].iter().map(|x| program.func(*x).name.clone()).collect();
                    return Err(FrontendError::Recursion { cycle });
                }
                0 => dfs(g, graph, state, stack, program)?,
                _ => {}
            }
        }
        stack.pop();
        state[f.0 as usize] = 2;
        Ok(())
    }
    for f in program.func_ids() {
        if state[f.0 as usize] == 0 {
            dfs(f, &graph, &mut state, &mut stack, program)?;
        }
    }
    Ok(())
}

/// Direct callees of each function (user functions only).
pub fn call_graph(program: &Program) -> BTreeMap<FuncId, Vec<FuncId>> {
    let mut graph = BTreeMap::new();
    for f in program.func_ids() {
        let mut callees = Vec::new();
        for_each_expr(&program.func(f).body, &mut |e| {
            e.walk(&mut |sub| {
                if let ExprKind::Call { callee: Some(Callee::Func(g)), .. } = &sub.kind {
                    if !callees.contains(g) {
                        callees.push(*g);
                    }
                }
            })
        });
        graph.insert(f, callees);
    }
    graph
}

/// Visit every top-level expression in a statement list.
pub fn for_each_expr<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for s in stmts {
        match &s.kind {
            StmtKind::Decl(d) => {
                if let Some(e) = &d.init {
                    f(e);
                }
            }
            StmtKind::Expr(e) => f(e),
            StmtKind::If { cond, then, els } => {
                f(cond);
                for_each_expr(std::slice::from_ref(then), f);
                if let Some(e) = els {
                    for_each_expr(std::slice::from_ref(e), f);
                }
            }
            StmtKind::While { cond, body } | StmtKind::DoWhile { body, cond } => {
                f(cond);
                for_each_expr(std::slice::from_ref(body), f);
            }
            StmtKind::For { init, cond, step, body } => {
                for e in [init, cond, step].into_iter().flatten() {
                    f(e);
                }
                for_each_expr(std::slice::from_ref(body), f);
            }
            StmtKind::Return(Some(e)) => f(e),
            StmtKind::Block(b) => for_each_expr(b, f),
            StmtKind::Return(None) | StmtKind::Break | StmtKind::Continue | StmtKind::Empty => {}
        }
    }
}
