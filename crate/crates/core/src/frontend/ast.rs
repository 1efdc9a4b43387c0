//! Mini-C syntax tree.
//!
//! The tree is produced by the parser with names only; `resolve` fills in
//! variable ids, callee ids and static types in place.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Position of a syntax element in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    /// Byte offsets `[start, end)` into the source.
    pub start: u32,
    pub end: u32,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span { line: self.line, col: self.col, start: self.start, end: other.end.max(self.end) }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CType {
    U8,
    I8,
    U16,
    I16,
    Void,
    Ptr { to: Box<CType>, volatile: bool },
    Array(Box<CType>, u32),
}

impl CType {
    pub fn bits(&self) -> u32 {
        match self {
            CType::U8 | CType::I8 => 8,
            CType::U16 | CType::I16 => 16,
            CType::Ptr { .. } => 16,
            CType::Void => 0,
            CType::Array(elem, _) => elem.bits(),
        }
    }

    pub fn is_signed(&self) -> bool {
        matches!(self, CType::I8 | CType::I16)
    }

    pub fn is_int(&self) -> bool {
        matches!(self, CType::U8 | CType::I8 | CType::U16 | CType::I16)
    }

    pub fn is_array(&self) -> bool {
        matches!(self, CType::Array(..))
    }

    pub fn is_ptr(&self) -> bool {
        matches!(self, CType::Ptr { .. })
    }

    /// Inclusive value range of an integer type.
    pub fn range(&self) -> (i64, i64) {
        match self {
            CType::U8 => (0, 255),
            CType::I8 => (-128, 127),
            CType::U16 => (0, 65535),
            CType::I16 => (-32768, 32767),
            CType::Array(elem, _) => elem.range(),
            _ => (0, 65535),
        }
    }

    /// Two's-complement truncation into this type.
    pub fn wrap(&self, v: i64) -> i64 {
        match self {
            CType::U8 => v as u8 as i64,
            CType::I8 => v as i8 as i64,
            CType::U16 => v as u16 as i64,
            CType::I16 => v as i16 as i64,
            _ => v,
        }
    }

    pub fn element(&self) -> &CType {
        match self {
            CType::Array(elem, _) => elem,
            other => other,
        }
    }

    /// Smallest type holding a literal, preferring unsigned.
    pub fn for_literal(v: i64) -> Option<CType> {
        match v {
            0..=255 => Some(CType::U8),
            -128..=-1 => Some(CType::I8),
            256..=65535 => Some(CType::U16),
            -32768..=-129 => Some(CType::I16),
            _ => None,
        }
    }

    pub fn fits(&self, v: i64) -> bool {
        let (lo, hi) = self.range();
        lo <= v && v <= hi
    }
}

impl fmt::Display for CType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CType::U8 => write!(f, "uint8"),
            CType::I8 => write!(f, "int8"),
            CType::U16 => write!(f, "uint16"),
            CType::I16 => write!(f, "int16"),
            CType::Void => write!(f, "void"),
            CType::Ptr { to, volatile } => {
                if *volatile {
                    write!(f, "volatile ")?;
                }
                write!(f, "{}*", to)
            }
            CType::Array(elem, n) => write!(f, "{}[{}]", elem, n),
        }
    }
}

/// Index into `Program::vars`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub u32);

/// Index into `Program::functions`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FuncId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Storage {
    Global,
    Local,
    Param,
    /// Compiler-introduced temporary (CFG lowering, return slots).
    Temp,
}

/// Memory-mapped binding of a global: a whole register or one bit of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbsAddr {
    pub address: u32,
    pub bit: Option<u8>,
}

impl fmt::Display for AbsAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bit {
            Some(b) => write!(f, "0x{:X}.{}", self.address, b),
            None => write!(f, "0x{:X}", self.address),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub ctype: CType,
    pub volatile: bool,
    pub is_const: bool,
    pub storage: Storage,
    pub absolute_address: Option<AbsAddr>,
    /// Declared length expression of an array, evaluated by resolve.
    pub array_len: Option<Expr>,
    pub init: Option<Expr>,
    pub span: Span,
    pub id: Option<VarId>,
}

/// Symbol-table entry built by `resolve`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    pub name: String,
    pub ctype: CType,
    pub volatile: bool,
    pub storage: Storage,
    /// Owning function for locals, params and temps.
    pub func: Option<FuncId>,
    pub absolute_address: Option<AbsAddr>,
    /// Compile-time value of `const` globals.
    pub const_value: Option<i64>,
    pub span: Span,
}

impl VarInfo {
    /// Value range of a scalar cell: single bits hold 0 or 1.
    pub fn value_range(&self) -> (i64, i64) {
        if matches!(self.absolute_address, Some(AbsAddr { bit: Some(_), .. })) {
            (0, 1)
        } else {
            self.ctype.range()
        }
    }

    pub fn is_array(&self) -> bool {
        matches!(self.ctype, CType::Array(..))
    }

    pub fn is_global(&self) -> bool {
        self.storage == Storage::Global
    }

    pub fn display_name(&self, program: &Program) -> String {
        match self.func {
            Some(f) if self.storage != Storage::Global => {
                format!("{}::{}", program.functions[f.0 as usize].name, self.name)
            }
            _ => self.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Shl,
    Shr,
    BitOr,
    BitAnd,
    BitXor,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::BitOr => "|",
            BinOp::BitAnd => "&",
            BinOp::BitXor => "^",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }

    pub fn is_commutative(self) -> bool {
        matches!(
            self,
            BinOp::Add | BinOp::Mul | BinOp::BitOr | BinOp::BitAnd | BinOp::BitXor | BinOp::Eq | BinOp::Ne
        )
    }

    /// Operator obtained by swapping the operands (`a < b` == `b > a`).
    pub fn flipped(self) -> BinOp {
        match self {
            BinOp::Lt => BinOp::Gt,
            BinOp::Le => BinOp::Ge,
            BinOp::Gt => BinOp::Lt,
            BinOp::Ge => BinOp::Le,
            other => other,
        }
    }

    /// Logical negation of a comparison.
    pub fn negated(self) -> Option<BinOp> {
        Some(match self {
            BinOp::Lt => BinOp::Ge,
            BinOp::Le => BinOp::Gt,
            BinOp::Gt => BinOp::Le,
            BinOp::Ge => BinOp::Lt,
            BinOp::Eq => BinOp::Ne,
            BinOp::Ne => BinOp::Eq,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LogicOp {
    And,
    Or,
}

/// Surface form of an assignment. Everything except `Plain` is a
/// read-modify-write of the target: `value` then reads the target itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssignForm {
    Plain,
    Compound,
    PreInc,
    PreDec,
    PostInc,
    PostDec,
}

impl AssignForm {
    pub fn is_rmw(self) -> bool {
        self != AssignForm::Plain
    }

    /// Whether the expression yields the value before the store.
    pub fn yields_old(self) -> bool {
        matches!(self, AssignForm::PostInc | AssignForm::PostDec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Builtin {
    Sei,
    Cli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Callee {
    Func(FuncId),
    Builtin(Builtin),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarRef {
    pub name: String,
    pub id: Option<VarId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Const(i64),
    Var(VarRef),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Logic(LogicOp, Box<Expr>, Box<Expr>),
    Comma(Box<Expr>, Box<Expr>),
    Call { name: String, args: Vec<Expr>, callee: Option<Callee> },
    Assign { target: Box<Expr>, value: Box<Expr>, form: AssignForm },
    Index { base: Box<Expr>, index: Box<Expr> },
    AddrOf(Box<Expr>),
    Deref(Box<Expr>),
    /// `vu8(lv)`-style access: the wrapped lvalue is accessed as volatile.
    VolatileCast { ty: CType, inner: Box<Expr> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Option<CType>,
    pub span: Span,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Expr {
        Expr { kind, ty: None, span }
    }

    pub fn ty(&self) -> &CType {
        self.ty.as_ref().expect("expression type is set by resolve")
    }

    pub fn is_lvalue(&self) -> bool {
        match &self.kind {
            ExprKind::Var(_) | ExprKind::Index { .. } | ExprKind::Deref(_) => true,
            ExprKind::VolatileCast { inner, .. } => inner.is_lvalue(),
            _ => false,
        }
    }

    pub fn var_id(&self) -> Option<VarId> {
        match &self.kind {
            ExprKind::Var(r) => r.id,
            _ => None,
        }
    }

    /// Visit every sub-expression, pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Const(_) | ExprKind::Var(_) => {}
            ExprKind::Unary(_, e) | ExprKind::AddrOf(e) | ExprKind::Deref(e) => e.walk(f),
            ExprKind::VolatileCast { inner, .. } => inner.walk(f),
            ExprKind::Binary(_, a, b) | ExprKind::Logic(_, a, b) | ExprKind::Comma(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Index { base, index } => {
                base.walk(f);
                index.walk(f);
            }
            ExprKind::Assign { target, value, .. } => {
                target.walk(f);
                value.walk(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.walk(f)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Decl(VarDecl),
    Expr(Expr),
    If { cond: Expr, then: Box<Stmt>, els: Option<Box<Stmt>> },
    While { cond: Expr, body: Box<Stmt> },
    DoWhile { body: Box<Stmt>, cond: Expr },
    For { init: Option<Expr>, cond: Option<Expr>, step: Option<Expr>, body: Box<Stmt> },
    Return(Option<Expr>),
    Break,
    Continue,
    Block(Vec<Stmt>),
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub ret: CType,
    pub params: Vec<VarDecl>,
    pub body: Vec<Stmt>,
    /// Interrupt vector name for `ISR(vector)` definitions.
    pub isr_vector: Option<String>,
    pub span: Span,
    /// Every local, param and temp owned by this function (filled by resolve).
    pub locals: Vec<VarId>,
    /// Return-value slot for non-void functions.
    pub ret_slot: Option<VarId>,
}

impl FunctionDef {
    pub fn is_isr(&self) -> bool {
        self.isr_vector.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub globals: Vec<VarDecl>,
    /// Ordinary functions and ISRs, in source order.
    pub functions: Vec<FunctionDef>,
    pub entry: String,
    pub vars: Vec<VarInfo>,
}

impl Program {
    pub fn var(&self, id: VarId) -> &VarInfo {
        &self.vars[id.0 as usize]
    }

    pub fn func(&self, id: FuncId) -> &FunctionDef {
        &self.functions[id.0 as usize]
    }

    pub fn func_ids(&self) -> impl Iterator<Item = FuncId> + '_ {
        (0..self.functions.len() as u32).map(FuncId)
    }

    pub fn func_by_name(&self, name: &str) -> Option<FuncId> {
        self.functions.iter().position(|f| f.name == name).map(|i| FuncId(i as u32))
    }

    pub fn isrs(&self) -> impl Iterator<Item = FuncId> + '_ {
        self.func_ids().filter(|f| self.func(*f).is_isr())
    }

    pub fn entry_id(&self) -> Option<FuncId> {
        self.func_by_name(&self.entry)
    }

    pub fn global_by_name(&self, name: &str) -> Option<VarId> {
        self.vars
            .iter()
            .position(|v| v.storage == Storage::Global && v.name == name)
            .map(|i| VarId(i as u32))
    }

    /// Add a compiler temporary owned by `func`.
    pub fn add_temp(&mut self, func: FuncId, name: String, ctype: CType) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(VarInfo {
            name,
            ctype,
            volatile: false,
            storage: Storage::Temp,
            func: Some(func),
            absolute_address: None,
            const_value: None,
            span: Span::default(),
        });
        self.functions[func.0 as usize].locals.push(id);
        id
    }
}
