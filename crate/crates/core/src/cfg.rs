//! Lowering of function bodies into control-flow graphs.
//!
//! Every node stores to at most one location. Reads are folded into the
//! node that consumes them as side-effect-free [`Rv`] trees. Nodes are
//! grouped by the statement-level full expression they come from.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;

use crate::frontend::ast::*;
use crate::frontend::resolve::lvalue_root;
use crate::octagon::MemLoc;
use crate::wellformed::WfVerdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FullExprId(pub u32);

/// A side-effect-free value computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Rv {
    Const(i64),
    Load { place: Box<Place>, volatile: bool, ty: CType },
    /// Operator, operand, result type.
    Unary(UnOp, Box<Rv>, CType),
    /// Operator, operands, operand type (comparisons yield uint8).
    Binary(BinOp, Box<Rv>, Box<Rv>, CType),
    AddrOf(Box<Place>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Place {
    Var(VarId),
    Index(VarId, Box<Rv>),
    /// Pointer value and pointee type.
    Deref(Box<Rv>, CType),
}

impl Rv {
    pub fn ty(&self) -> CType {
        match self {
            Rv::Const(v) => CType::for_literal(*v).unwrap_or(CType::I16),
            Rv::Load { ty, .. } => ty.clone(),
            Rv::Unary(_, _, t) => t.clone(),
            Rv::Binary(op, _, _, t) => {
                if op.is_comparison() {
                    CType::U8
                } else {
                    t.clone()
                }
            }
            Rv::AddrOf(_) => CType::Ptr { to: Box::new(CType::U8), volatile: false },
        }
    }

    pub fn has_loads(&self) -> bool {
        let mut any = false;
        self.visit_places(&mut |_, _| any = true);
        any
    }

    /// Visit every place read by this value, with its volatile flag.
    /// Places inside `&place` are not reads, but their index values are.
    pub fn visit_places<'a>(&'a self, f: &mut dyn FnMut(&'a Place, bool)) {
        match self {
            Rv::Const(_) => {}
            Rv::Load { place, volatile, .. } => {
                f(place, *volatile);
                place.visit_inner(f);
            }
            Rv::Unary(_, a, _) => a.visit_places(f),
            Rv::Binary(_, a, b, _) => {
                a.visit_places(f);
                b.visit_places(f);
            }
            Rv::AddrOf(p) => p.visit_inner(f),
        }
    }
}

impl Place {
    /// Reads needed to compute the address of this place.
    pub fn visit_inner<'a>(&'a self, f: &mut dyn FnMut(&'a Place, bool)) {
        match self {
            Place::Var(_) => {}
            Place::Index(_, i) => i.visit_places(f),
            Place::Deref(p, _) => p.visit_places(f),
        }
    }

    pub fn root(&self) -> Option<VarId> {
        match self {
            Place::Var(v) | Place::Index(v, _) => Some(*v),
            Place::Deref(..) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Entry,
    Exit,
    Nop,
    Assign { dst: Place, volatile: bool, ty: CType, src: Rv },
    /// Successors: `[true, false]`.
    Guard(Rv),
    Call { callee: Callee, args: Vec<Rv>, result: Option<VarId> },
    /// Writes the return slot and jumps to exit.
    Return(Option<Rv>),
    IsrFixpoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeKind,
    pub succs: Vec<NodeId>,
    pub full_expr: Option<FullExprId>,
    pub span: Span,
    /// Filled by the pointer prepass.
    pub reads: BTreeSet<MemLoc>,
    pub writes: BTreeSet<MemLoc>,
}

impl Node {
    /// Visit every place read by the node.
    pub fn visit_reads<'a>(&'a self, f: &mut dyn FnMut(&'a Place, bool)) {
        match &self.kind {
            NodeKind::Assign { dst, src, .. } => {
                dst.visit_inner(f);
                src.visit_places(f);
            }
            NodeKind::Guard(rv) | NodeKind::Return(Some(rv)) => rv.visit_places(f),
            NodeKind::Call { args, .. } => args.iter().for_each(|a| a.visit_places(f)),
            _ => {}
        }
    }

    pub fn stored_place(&self) -> Option<(&Place, bool)> {
        match &self.kind {
            NodeKind::Assign { dst, volatile, .. } => Some((dst, *volatile)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullExpr {
    pub id: FullExprId,
    pub func: FuncId,
    /// Members in evaluation order.
    pub nodes: Vec<NodeId>,
    /// Source expression, `None` for structural nodes.
    pub expr: Option<Expr>,
    pub span: Span,
    pub verdict: Option<WfVerdict>,
}

impl FullExpr {
    pub fn well_formed(&self) -> bool {
        self.verdict.as_ref().is_none_or(|v| v.well_formed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cfg {
    pub func: FuncId,
    pub nodes: Vec<Node>,
    pub entry: NodeId,
    pub exit: NodeId,
}

impl Cfg {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn preds(&self) -> Vec<Vec<NodeId>> {
        let mut p = vec![Vec::new(); self.nodes.len()];
        for id in self.ids() {
            for s in &self.node(id).succs {
                if !p[s.0 as usize].contains(&id) {
                    p[s.0 as usize].push(id);
                }
            }
        }
        p
    }

    /// Reverse post-order from entry.
    pub fn rpo(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut post = Vec::new();
        let mut stack = vec![(self.entry, 0usize)];
        seen[self.entry.0 as usize] = true;
        while let Some((n, i)) = stack.pop() {
            let succs = &self.node(n).succs;
            if i < succs.len() {
                stack.push((n, i + 1));
                let s = succs[i];
                if !seen[s.0 as usize] {
                    seen[s.0 as usize] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(n);
            }
        }
        post.reverse();
        post
    }

    /// Targets of back edges in a depth-first traversal from entry.
    pub fn loop_heads(&self) -> BTreeSet<NodeId> {
        let mut state = vec![0u8; self.nodes.len()];
        let mut heads = BTreeSet::new();
        let mut stack = vec![(self.entry, 0usize)];
        state[self.entry.0 as usize] = 1;
        while let Some((n, i)) = stack.pop() {
            let succs = &self.node(n).succs;
            if i < succs.len() {
                stack.push((n, i + 1));
                let s = succs[i];
                match state[s.0 as usize] {
                    0 => {
                        state[s.0 as usize] = 1;
                        stack.push((s, 0));
                    }
                    1 => {
                        heads.insert(s);
                    }
                    _ => {}
                }
            } else {
                state[n.0 as usize] = 2;
            }
        }
        heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramCfg {
    pub funcs: BTreeMap<FuncId, Cfg>,
    pub full_exprs: Vec<FullExpr>,
}

impl ProgramCfg {
    pub fn cfg(&self, f: FuncId) -> &Cfg {
        &self.funcs[&f]
    }

    pub fn full_expr(&self, id: FullExprId) -> &FullExpr {
        &self.full_exprs[id.0 as usize]
    }

    /// Full expression whose source span covers `line:col`, innermost first.
    pub fn full_expr_at(&self, line: u32, col: Option<u32>) -> Option<&FullExpr> {
        self.full_exprs
            .iter()
            .filter(|fe| fe.expr.is_some())
            .filter(|fe| {
                let s = fe.span;
                s.line == line && col.is_none_or(|c| c >= s.col)
            })
            .max_by_key(|fe| fe.span.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: unsupported construct: {message}")]
pub struct UnsupportedConstruct {
    pub span: Span,
    pub message: String,
}

type Edge = (NodeId, usize);

struct LoopCtx {
    breaks: Vec<Edge>,
    continues: Vec<Edge>,
}

struct Builder<'p> {
    program: &'p mut Program,
    func: FuncId,
    nodes: Vec<Node>,
    open: Vec<Edge>,
    loops: Vec<LoopCtx>,
    exit_edges: Vec<Edge>,
    /// Local full expressions: (nodes, expr, span).
    fes: Vec<(Vec<NodeId>, Option<Expr>, Span)>,
    current_fe: Option<usize>,
    temp_count: u32,
}

const PLACEHOLDER: NodeId = NodeId(u32::MAX);

impl Builder<'_> {
    fn emit(&mut self, kind: NodeKind, span: Span) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let arity = match kind {
            NodeKind::Guard(_) => 2,
            NodeKind::Exit => 0,
            _ => 1,
        };
        let fe = match self.current_fe {
            Some(k) => k,
            None => {
                self.fes.push((Vec::new(), None, span));
                self.fes.len() - 1
            }
        };
        self.fes[fe].0.push(id);
        self.nodes.push(Node {
            kind,
            succs: vec![PLACEHOLDER; arity],
            full_expr: Some(FullExprId(fe as u32)),
            span,
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
        });
        for (n, slot) in std::mem::take(&mut self.open) {
            self.nodes[n.0 as usize].succs[slot] = id;
        }
        self.open = if arity == 1 { vec![(id, 0)] } else { Vec::new() };
        id
    }

    fn patch(&mut self, edges: &[Edge], to: NodeId) {
        for &(n, slot) in edges {
            self.nodes[n.0 as usize].succs[slot] = to;
        }
    }

    fn temp(&mut self, ty: CType) -> VarId {
        self.temp_count += 1;
        self.program.add_temp(self.func, format!("$t{}", self.temp_count), ty)
    }

    fn structural(&mut self, span: Span) -> NodeId {
        let saved = self.current_fe.take();
        let id = self.emit(NodeKind::Nop, span);
        self.current_fe = saved;
        id
    }

    fn full_expr<T>(&mut self, e: &Expr, f: impl FnOnce(&mut Self) -> T) -> T {
        self.fes.push((Vec::new(), Some(e.clone()), e.span));
        let saved = self.current_fe.replace(self.fes.len() - 1);
        let r = f(self);
        self.current_fe = saved;
        r
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), UnsupportedConstruct> {
        match &s.kind {
            StmtKind::Decl(d) => {
                if let Some(init) = &d.init {
                    let id = d.id.expect("resolved");
                    let ty = self.program.var(id).ctype.clone();
                    let volatile = d.volatile;
                    self.full_expr(init, |b| {
                        let src = b.value(init)?;
                        b.emit(NodeKind::Assign { dst: Place::Var(id), volatile, ty, src }, s.span);
                        Ok(())
                    })?;
                }
            }
            StmtKind::Expr(e) => {
                self.full_expr(e, |b| b.effect(e))?;
            }
            StmtKind::Empty => {
                self.structural(s.span);
            }
            StmtKind::Block(stmts) => {
                for st in stmts {
                    self.stmt(st)?;
                }
            }
            StmtKind::If { cond, then, els } => {
                let (t, f) = self.full_expr(cond, |b| b.cond(cond))?;
                self.open = t;
                self.stmt(then)?;
                let after_then = std::mem::replace(&mut self.open, f);
                if let Some(e) = els {
                    self.stmt(e)?;
                }
                self.open.extend(after_then);
            }
            StmtKind::While { cond, body } => {
                let head = self.structural(s.span);
                let (t, f) = self.full_expr(cond, |b| b.cond(cond))?;
                self.open = t;
                self.loops.push(LoopCtx { breaks: Vec::new(), continues: Vec::new() });
                self.stmt(body)?;
                let ctx = self.loops.pop().unwrap();
                let back: Vec<Edge> = self.open.drain(..).chain(ctx.continues).collect();
                self.patch(&back, head);
                self.open = f;
                self.open.extend(ctx.breaks);
            }
            StmtKind::DoWhile { body, cond } => {
                let head = self.structural(s.span);
                self.loops.push(LoopCtx { breaks: Vec::new(), continues: Vec::new() });
                self.stmt(body)?;
                let ctx = self.loops.pop().unwrap();
                self.open.extend(ctx.continues);
                let (t, f) = self.full_expr(cond, |b| b.cond(cond))?;
                self.patch(&t, head);
                self.open = f;
                self.open.extend(ctx.breaks);
            }
            StmtKind::For { init, cond, step, body } => {
                if let Some(i) = init {
                    self.full_expr(i, |b| b.effect(i))?;
                }
                let head = self.structural(s.span);
                let exits = match cond {
                    Some(c) => {
                        let (t, f) = self.full_expr(c, |b| b.cond(c))?;
                        self.open = t;
                        f
                    }
                    None => Vec::new(),
                };
                self.loops.push(LoopCtx { breaks: Vec::new(), continues: Vec::new() });
                self.stmt(body)?;
                let ctx = self.loops.pop().unwrap();
                self.open.extend(ctx.continues);
                if let Some(st) = step {
                    self.full_expr(st, |b| b.effect(st))?;
                }
                let back = std::mem::take(&mut self.open);
                self.patch(&back, head);
                self.open = exits;
                self.open.extend(ctx.breaks);
            }
            StmtKind::Return(e) => {
                let rv = match e {
                    Some(e) => Some(self.full_expr(e, |b| {
                        let rv = b.value(e)?;
                        Ok::<_, UnsupportedConstruct>(b.emit(NodeKind::Return(Some(rv)), s.span))
                    })?),
                    None => {
                        let saved = self.current_fe.take();
                        let id = self.emit(NodeKind::Return(None), s.span);
                        self.current_fe = saved;
                        Some(id)
                    }
                };
                if let Some(id) = rv {
                    self.exit_edges.push((id, 0));
                }
                self.open.clear();
            }
            StmtKind::Break | StmtKind::Continue => {
                self.structural(s.span);
                let edges = std::mem::take(&mut self.open);
                let ctx = self.loops.last_mut().ok_or_else(|| UnsupportedConstruct {
                    span: s.span,
                    message: "break/continue outside of a loop".into(),
                })?;
                if matches!(s.kind, StmtKind::Break) {
                    ctx.breaks.extend(edges);
                } else {
                    ctx.continues.extend(edges);
                }
            }
        }
        Ok(())
    }

    /// Lower a condition into branches: (true edges, false edges).
    fn cond(&mut self, e: &Expr) -> Result<(Vec<Edge>, Vec<Edge>), UnsupportedConstruct> {
        match &e.kind {
            ExprKind::Logic(LogicOp::And, a, b) => {
                let (ta, fa) = self.cond(a)?;
                self.open = ta;
                let (tb, mut fb) = self.cond(b)?;
                fb.extend(fa);
                Ok((tb, fb))
            }
            ExprKind::Logic(LogicOp::Or, a, b) => {
                let (mut ta, fa) = self.cond(a)?;
                self.open = fa;
                let (tb, fb) = self.cond(b)?;
                ta.extend(tb);
                Ok((ta, fb))
            }
            ExprKind::Unary(UnOp::Not, a) => {
                let (t, f) = self.cond(a)?;
                Ok((f, t))
            }
            ExprKind::Comma(a, b) => {
                self.effect(a)?;
                self.cond(b)
            }
            _ => {
                let rv = self.value(e)?;
                let g = self.emit(NodeKind::Guard(rv), e.span);
                Ok((vec![(g, 0)], vec![(g, 1)]))
            }
        }
    }

    /// Lower for side effects only.
    fn effect(&mut self, e: &Expr) -> Result<(), UnsupportedConstruct> {
        match &e.kind {
            ExprKind::Assign { .. } => {
                self.assign(e, false)?;
            }
            ExprKind::Call { .. } => {
                self.call(e, false)?;
            }
            ExprKind::Comma(a, b) => {
                self.effect(a)?;
                self.effect(b)?;
            }
            ExprKind::Logic(..) => {
                let (t, f) = self.cond(e)?;
                self.open = t;
                self.open.extend(f);
            }
            _ => {
                // Pure value: reads still happen, keep them in a node.
                let rv = self.value(e)?;
                if rv.has_loads() {
                    let t = self.temp(rv.ty());
                    let ty = rv.ty();
                    self.emit(NodeKind::Assign { dst: Place::Var(t), volatile: false, ty, src: rv }, e.span);
                }
            }
        }
        Ok(())
    }

    fn spill(&mut self, rv: Rv, span: Span) -> Rv {
        if !rv.has_loads() {
            return rv;
        }
        let ty = rv.ty();
        let t = self.temp(ty.clone());
        self.emit(NodeKind::Assign { dst: Place::Var(t), volatile: false, ty: ty.clone(), src: rv }, span);
        Rv::Load { place: Box::new(Place::Var(t)), volatile: false, ty }
    }

    /// Evaluate operands left to right; an earlier operand that reads memory
    /// is spilled before a later operand with side effects runs.
    fn operands(&mut self, es: &[&Expr]) -> Result<Vec<Rv>, UnsupportedConstruct> {
        let mut out: Vec<Rv> = Vec::new();
        for e in es {
            if has_side_effects(e) {
                for k in 0..out.len() {
                    let rv = std::mem::replace(&mut out[k], Rv::Const(0));
                    out[k] = self.spill(rv, e.span);
                }
            }
            out.push(self.value(e)?);
        }
        Ok(out)
    }

    fn place(&mut self, e: &Expr) -> Result<(Place, bool), UnsupportedConstruct> {
        match &e.kind {
            ExprKind::Var(r) => {
                let id = r.id.expect("resolved");
                Ok((Place::Var(id), self.program.var(id).volatile))
            }
            ExprKind::Index { base, index } => {
                let id = base.var_id().expect("array base is a variable");
                let i = self.value(index)?;
                Ok((Place::Index(id, Box::new(i)), self.program.var(id).volatile))
            }
            ExprKind::Deref(p) => {
                let volatile = matches!(p.ty(), CType::Ptr { volatile: true, .. });
                let rv = self.value(p)?;
                Ok((Place::Deref(Box::new(rv), e.ty().clone()), volatile))
            }
            ExprKind::VolatileCast { inner, .. } => {
                let (p, _) = self.place(inner)?;
                Ok((p, true))
            }
            _ => Err(UnsupportedConstruct { span: e.span, message: "not an lvalue".into() }),
        }
    }

    fn value(&mut self, e: &Expr) -> Result<Rv, UnsupportedConstruct> {
        Ok(match &e.kind {
            ExprKind::Const(v) => Rv::Const(e.ty().wrap(*v)),
            ExprKind::Var(_) | ExprKind::Index { .. } | ExprKind::Deref(_) | ExprKind::VolatileCast { .. } => {
                if e.ty().is_array() {
                    return Err(UnsupportedConstruct { span: e.span, message: "array used as a value".into() });
                }
                let (place, volatile) = self.place(e)?;
                Rv::Load { place: Box::new(place), volatile, ty: e.ty().clone() }
            }
            ExprKind::Unary(op, a) => {
                let rv = self.value(a)?;
                Rv::Unary(*op, Box::new(rv), e.ty().clone())
            }
            ExprKind::Binary(op, a, b) => {
                let opty = operand_type(*op, a.ty(), b.ty());
                let mut v = self.operands(&[a, b])?;
                let rb = v.pop().unwrap();
                let ra = v.pop().unwrap();
                Rv::Binary(*op, Box::new(ra), Box::new(rb), opty)
            }
            ExprKind::Logic(..) => {
                let t = self.temp(CType::U8);
                let (tr, fa) = self.cond(e)?;
                self.open = tr;
                let one = (self.emit(
                    NodeKind::Assign { dst: Place::Var(t), volatile: false, ty: CType::U8, src: Rv::Const(1) },
                    e.span,
                ), 0);
                self.open = fa;
                self.emit(
                    NodeKind::Assign { dst: Place::Var(t), volatile: false, ty: CType::U8, src: Rv::Const(0) },
                    e.span,
                );
                self.open.push(one);
                Rv::Load { place: Box::new(Place::Var(t)), volatile: false, ty: CType::U8 }
            }
            ExprKind::Comma(a, b) => {
                self.effect(a)?;
                self.value(b)?
            }
            ExprKind::Call { .. } => self.call(e, true)?.expect("value of a non-void call"),
            ExprKind::Assign { .. } => self.assign(e, true)?.expect("assignment value"),
            ExprKind::AddrOf(inner) => {
                let (p, _) = self.place(inner)?;
                Rv::AddrOf(Box::new(p))
            }
        })
    }

    fn call(&mut self, e: &Expr, want: bool) -> Result<Option<Rv>, UnsupportedConstruct> {
        let ExprKind::Call { args, callee, .. } = &e.kind else { unreachable!() };
        let callee = callee.expect("resolved");
        let refs: Vec<&Expr> = args.iter().collect();
        let args = self.operands(&refs)?;
        let ty = e.ty().clone();
        let result = (ty != CType::Void).then(|| self.temp(ty.clone()));
        self.emit(NodeKind::Call { callee, args, result }, e.span);
        Ok(match result {
            Some(t) if want => Some(Rv::Load { place: Box::new(Place::Var(t)), volatile: false, ty }),
            _ => None,
        })
    }

    fn assign(&mut self, e: &Expr, want: bool) -> Result<Option<Rv>, UnsupportedConstruct> {
        let ExprKind::Assign { target, value, form } = &e.kind else { unreachable!() };
        let ty = target.ty().clone();
        let (dst, volatile) = self.place(target)?;
        let load = |p: &Place| Rv::Load { place: Box::new(p.clone()), volatile, ty: ty.clone() };
        let store = |b: &mut Self, src: Rv| {
            b.emit(NodeKind::Assign { dst: dst.clone(), volatile, ty: ty.clone(), src }, e.span);
        };
        let tmp_load = |t: VarId| Rv::Load { place: Box::new(Place::Var(t)), volatile: false, ty: ty.clone() };
        if *form == AssignForm::Plain {
            let src = self.value(value)?;
            if !want {
                store(self, src);
                return Ok(None);
            }
            if let Rv::Const(c) = src {
                store(self, Rv::Const(c));
                return Ok(Some(Rv::Const(ty.wrap(c))));
            }
            let t = self.temp(ty.clone());
            self.emit(NodeKind::Assign { dst: Place::Var(t), volatile: false, ty: ty.clone(), src }, e.span);
            store(self, tmp_load(t));
            return Ok(Some(tmp_load(t)));
        }
        let ExprKind::Binary(op, _, rhs) = &value.kind else {
            return Err(UnsupportedConstruct { span: e.span, message: "malformed compound assignment".into() });
        };
        let opty = operand_type(*op, &ty, rhs.ty());
        let old = if has_side_effects(rhs) { self.spill(load(&dst), e.span) } else { load(&dst) };
        let r = self.value(rhs)?;
        let new_value = Rv::Binary(*op, Box::new(old.clone()), Box::new(r), opty);
        if !want {
            store(self, new_value);
            return Ok(None);
        }
        if form.yields_old() {
            let t = self.temp(ty.clone());
            self.emit(NodeKind::Assign { dst: Place::Var(t), volatile: false, ty: ty.clone(), src: old }, e.span);
            let Rv::Binary(op, _, r, opty) = new_value else { unreachable!() };
            store(self, Rv::Binary(op, Box::new(tmp_load(t)), r, opty));
            Ok(Some(tmp_load(t)))
        } else {
            let t = self.temp(ty.clone());
            self.emit(NodeKind::Assign { dst: Place::Var(t), volatile: false, ty: ty.clone(), src: new_value }, e.span);
            store(self, tmp_load(t));
            Ok(Some(tmp_load(t)))
        }
    }
}

/// Type the operands of a binary operator are converted to.
pub fn operand_type(op: BinOp, a: &CType, b: &CType) -> CType {
    if matches!(op, BinOp::Shl | BinOp::Shr) || a == b {
        return a.clone();
    }
    if a.is_ptr() {
        return a.clone();
    }
    match a.bits().cmp(&b.bits()) {
        std::cmp::Ordering::Greater => a.clone(),
        std::cmp::Ordering::Less => b.clone(),
        std::cmp::Ordering::Equal => {
            if a.is_signed() {
                b.clone()
            } else {
                a.clone()
            }
        }
    }
}

pub fn has_side_effects(e: &Expr) -> bool {
    let mut any = false;
    e.walk(&mut |s| {
        if matches!(s.kind, ExprKind::Assign { .. } | ExprKind::Call { .. }) {
            any = true;
        }
    });
    any
}

pub fn lower_function(program: &mut Program, func: FuncId) -> Result<(Cfg, Vec<(Vec<NodeId>, Option<Expr>, Span)>), UnsupportedConstruct> {
    let body = program.func(func).body.clone();
    let span = program.func(func).span;
    let mut b = Builder {
        program,
        func,
        nodes: Vec::new(),
        open: Vec::new(),
        loops: Vec::new(),
        exit_edges: Vec::new(),
        fes: Vec::new(),
        current_fe: None,
        temp_count: 0,
    };
    let entry = b.emit(NodeKind::Entry, span);
    for s in &body {
        b.stmt(s)?;
    }
    let mut tail = std::mem::take(&mut b.open);
    tail.extend(std::mem::take(&mut b.exit_edges));
    let exit = b.emit(NodeKind::Exit, span);
    b.patch(&tail, exit);
    let (cfg, fes) = compact(Cfg { func, nodes: b.nodes, entry, exit }, b.fes);
    Ok((cfg, fes))
}

/// Drop nodes unreachable from entry (exit is always kept) and renumber.
fn compact(
    cfg: Cfg,
    fes: Vec<(Vec<NodeId>, Option<Expr>, Span)>,
) -> (Cfg, Vec<(Vec<NodeId>, Option<Expr>, Span)>) {
    let mut keep = vec![false; cfg.nodes.len()];
    let mut queue = VecDeque::from([cfg.entry]);
    keep[cfg.entry.0 as usize] = true;
    while let Some(n) = queue.pop_front() {
        for s in &cfg.node(n).succs {
            if !keep[s.0 as usize] {
                keep[s.0 as usize] = true;
                queue.push_back(*s);
            }
        }
    }
    keep[cfg.exit.0 as usize] = true;
    let mut map = vec![None; cfg.nodes.len()];
    let mut next = 0u32;
    for (i, k) in keep.iter().enumerate() {
        if *k {
            map[i] = Some(NodeId(next));
            next += 1;
        }
    }
    let remap = |n: NodeId| map[n.0 as usize].expect("kept node");
    let mut new_fes = Vec::new();
    let mut fe_map = vec![None; fes.len()];
    for (k, (nodes, expr, span)) in fes.into_iter().enumerate() {
        let kept: Vec<NodeId> = nodes.into_iter().filter_map(|n| map[n.0 as usize]).collect();
        if !kept.is_empty() {
            fe_map[k] = Some(FullExprId(new_fes.len() as u32));
            new_fes.push((kept, expr, span));
        }
    }
    let nodes = cfg
        .nodes
        .into_iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, mut n)| {
            n.succs = n.succs.iter().map(|s| remap(*s)).collect();
            n.full_expr = n.full_expr.and_then(|f| fe_map[f.0 as usize]);
            n
        })
        .collect();
    (Cfg { func: cfg.func, nodes, entry: remap(cfg.entry), exit: remap(cfg.exit) }, new_fes)
}

/// Lower every function and number full expressions program-wide.
pub fn build_program_cfg(program: &mut Program) -> Result<ProgramCfg, UnsupportedConstruct> {
    let mut funcs = BTreeMap::new();
    let mut full_exprs = Vec::new();
    for f in program.func_ids().collect::<Vec<_>>() {
        let (mut cfg, fes) = lower_function(program, f)?;
        let base = full_exprs.len() as u32;
        for n in &mut cfg.nodes {
            n.full_expr = n.full_expr.map(|id| FullExprId(id.0 + base));
        }
        for (k, (nodes, expr, span)) in fes.into_iter().enumerate() {
            full_exprs.push(FullExpr { id: FullExprId(base + k as u32), func: f, nodes, expr, span, verdict: None });
        }
        funcs.insert(f, cfg);
    }
    Ok(ProgramCfg { funcs, full_exprs })
}

/// Root variable written through an lvalue expression, if direct.
pub fn written_root(e: &Expr) -> Option<VarId> {
    lvalue_root(e)
}

pub fn fmt_place(p: &Program, place: &Place) -> String {
    match place {
        Place::Var(v) => p.var(*v).name.clone(),
        Place::Index(v, i) => format!("{}[{}]", p.var(*v).name, fmt_rv(p, i)),
        Place::Deref(r, _) => format!("*{}", fmt_rv(p, r)),
    }
}

pub fn fmt_rv(p: &Program, rv: &Rv) -> String {
    match rv {
        Rv::Const(v) => v.to_string(),
        Rv::Load { place, volatile: true, .. } => format!("volatile({})", fmt_place(p, place)),
        Rv::Load { place, .. } => fmt_place(p, place),
        Rv::Unary(op, a, _) => {
            let s = match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
                UnOp::BitNot => "~",
            };
            format!("{}({})", s, fmt_rv(p, a))
        }
        Rv::Binary(op, a, b, _) => format!("({} {} {})", fmt_rv(p, a), op.symbol(), fmt_rv(p, b)),
        Rv::AddrOf(pl) => format!("&{}", fmt_place(p, pl)),
    }
}

pub fn fmt_node(p: &Program, n: &Node) -> String {
    match &n.kind {
        NodeKind::Entry => "entry".into(),
        NodeKind::Exit => "exit".into(),
        NodeKind::Nop => "nop".into(),
        NodeKind::Assign { dst, src, volatile, .. } => {
            let d = fmt_place(p, dst);
            let d = if *volatile { format!("volatile({})", d) } else { d };
            format!("{} := {}", d, fmt_rv(p, src))
        }
        NodeKind::Guard(c) => format!("guard {}", fmt_rv(p, c)),
        NodeKind::Call { callee, args, result } => {
            let name = match callee {
                Callee::Func(f) => p.func(*f).name.clone(),
                Callee::Builtin(Builtin::Sei) => "sei".into(),
                Callee::Builtin(Builtin::Cli) => "cli".into(),
            };
            let args: Vec<String> = args.iter().map(|a| fmt_rv(p, a)).collect();
            match result {
                Some(t) => format!("{} := call {}({})", p.var(*t).name, name, args.join(", ")),
                None => format!("call {}({})", name, args.join(", ")),
            }
        }
        NodeKind::Return(Some(rv)) => format!("return {}", fmt_rv(p, rv)),
        NodeKind::Return(None) => "return".into(),
        NodeKind::IsrFixpoint => "ISR fixpoint".into(),
    }
}

/// DOT text, one digraph per function.
pub fn to_dot(p: &Program, pc: &ProgramCfg) -> String {
    let mut out = String::new();
    for (f, cfg) in &pc.funcs {
        writeln!(out, "digraph \"{}\" {{", p.func(*f).name).unwrap();
        writeln!(out, "  node [shape=box, fontname=monospace];").unwrap();
        for id in cfg.ids() {
            let n = cfg.node(id);
            let label = fmt_node(p, n).replace('\\', "\\\\").replace('"', "\\\"");
            let fe = n.full_expr.map(|f| format!(" [fe{}]", f.0)).unwrap_or_default();
            let shape = match n.kind {
                NodeKind::Guard(_) => ", shape=diamond",
                NodeKind::IsrFixpoint => ", style=filled, fillcolor=gray",
                _ => "",
            };
            writeln!(out, "  n{} [label=\"{}: {}{}\"{}];", id.0, id.0, label, fe, shape).unwrap();
        }
        for id in cfg.ids() {
            let n = cfg.node(id);
            for (k, s) in n.succs.iter().enumerate() {
                let label = match (&n.kind, k) {
                    (NodeKind::Guard(_), 0) => " [label=\"T\"]",
                    (NodeKind::Guard(_), _) => " [label=\"F\"]",
                    _ => "",
                };
                writeln!(out, "  n{} -> n{}{};", id.0, s.0, label).unwrap();
            }
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn build(src: &str) -> (Program, ProgramCfg) {
        let mut p = parse_source(src).unwrap();
        let pc = build_program_cfg(&mut p).unwrap();
        (p, pc)
    }

    fn labels(p: &Program, pc: &ProgramCfg, func: &str) -> Vec<String> {
        let cfg = pc.cfg(p.func_by_name(func).unwrap());
        cfg.ids().map(|id| fmt_node(p, cfg.node(id))).collect()
    }

    #[test]
    fn while_call_loop() {
        let (p, pc) = build("uint8 isEmpty() { return 1; } void main() { while (isEmpty()); }");
        let cfg = pc.cfg(p.entry_id().unwrap());
        let l = labels(&p, &pc, "main");
        assert_eq!(l, ["entry", "nop", "$t1 := call isEmpty()", "guard $t1", "nop", "exit"]);
        // Back edge from the empty body to the loop head.
        assert_eq!(cfg.node(NodeId(4)).succs, vec![NodeId(1)]);
        assert_eq!(cfg.node(NodeId(3)).succs, vec![NodeId(4), NodeId(5)]);
        assert!(cfg.loop_heads().contains(&NodeId(1)));
    }

    #[test]
    fn increment_is_one_node() {
        let (p, pc) = build("uint8 pos; void main() { pos++; }");
        assert_eq!(labels(&p, &pc, "main"), ["entry", "pos := (pos + 1)", "exit"]);
    }

    #[test]
    fn logic_value_lowered_to_diamond() {
        let (p, pc) = build("uint8 a, b, c; void main() { a = b && c; }");
        let l = labels(&p, &pc, "main");
        assert_eq!(l, ["entry", "guard b", "guard c", "$t1 := 1", "$t1 := 0", "a := $t1", "exit"]);
        let cfg = pc.cfg(p.entry_id().unwrap());
        let fe = cfg.node(NodeId(1)).full_expr.unwrap();
        assert!((1..6).all(|k| cfg.node(NodeId(k)).full_expr == Some(fe)));
    }

    #[test]
    fn full_expression_grouping() {
        let src = "const uint8 N = 16; uint8 buf[N]; uint8 d, i;
            uint8 next(uint8 p, uint8 s) { return p; }
            void main() { d = buf[i]; i = next(i, N); ; }";
        let (p, pc) = build(src);
        let l = labels(&p, &pc, "main");
        assert_eq!(l, ["entry", "d := buf[i]", "$t1 := call next(i, 16)", "i := $t1", "nop", "exit"]);
        let cfg = pc.cfg(p.entry_id().unwrap());
        let fe = |k| cfg.node(NodeId(k)).full_expr.unwrap();
        assert_eq!(pc.full_expr(fe(1)).nodes.len(), 1);
        assert_eq!(fe(2), fe(3));
        assert_eq!(pc.full_expr(fe(2)).nodes, vec![NodeId(2), NodeId(3)]);
        assert!(pc.full_expr(fe(4)).expr.is_none());
    }

    #[test]
    fn nested_assignments_and_increments() {
        let (p, pc) = build("volatile uint8 a, b; void main() { a = ++b; a = b = 0; }");
        let l = labels(&p, &pc, "main");
        assert_eq!(
            l,
            [
                "entry",
                "$t1 := (volatile(b) + 1)",
                "volatile(b) := $t1",
                "volatile(a) := $t1",
                "volatile(b) := 0",
                "volatile(a) := 0",
                "exit"
            ]
        );
    }

    #[test]
    fn left_operand_spilled_before_side_effect() {
        let (p, pc) = build("uint8 a, b; uint8 f() { b = 1; return 2; } void main() { a = b + f(); }");
        let l = labels(&p, &pc, "main");
        assert_eq!(l, ["entry", "$t1 := b", "$t2 := call f()", "a := ($t1 + $t2)", "exit"]);
    }

    #[test]
    fn loops_and_jumps() {
        let src = "uint8 i; void main() {
            for (i = 0; i < 4; i++) { if (i == 2) continue; if (i == 3) break; }
            do { i--; } while (i);
            return;
        }";
        let (p, pc) = build(src);
        let cfg = pc.cfg(p.entry_id().unwrap());
        assert_eq!(cfg.loop_heads().len(), 2);
        for id in cfg.ids() {
            let n = cfg.node(id);
            if matches!(n.kind, NodeKind::Guard(_)) {
                assert_eq!(n.succs.len(), 2);
            }
            assert!(n.succs.iter().all(|s| s.0 < cfg.nodes.len() as u32));
        }
        let dot = to_dot(&p, &pc);
        assert!(dot.starts_with("digraph \"main\""));
        assert!(dot.contains("[label=\"T\"]"));
    }

    #[test]
    fn one_store_per_node_and_partition() {
        let src = "uint8 a, b, c[4]; uint8 g(uint8 x) { return x; }
            void main() { a = b++ + g(c[a] = 3), b += a; if (a || b && !c[1]) a = 1; else b = 2; }";
        let (_, pc) = build(src);
        let mut seen = BTreeSet::new();
        for fe in &pc.full_exprs {
            for n in &fe.nodes {
                assert!(seen.insert((fe.func, *n)), "full expressions overlap");
            }
        }
        let total: usize = pc.funcs.values().map(|c| c.nodes.len()).sum();
        assert_eq!(seen.len(), total);
    }
}
