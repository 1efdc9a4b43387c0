//! Abstract evaluation of CFG values over an octagon.

use crate::cfg::{Place, Rv};
use crate::frontend::ast::{BinOp, CType, Program, UnOp, VarId};
use crate::hardware::HardwareSpec;
use crate::octagon::{Constraint, MemLoc, Octagon, Rhs, Sign};
use crate::pointer::PointsTo;

pub type Itv = (i64, i64);

/// Read-only context for evaluation.
pub struct Env<'a> {
    pub program: &'a Program,
    pub hw: &'a HardwareSpec,
    pub pts: &'a PointsTo,
    /// Honour input-register semantics of the hardware spec.
    pub hw_aware: bool,
}

/// `sign*x + c`, or a constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lin {
    Const(i64),
    Var(Sign, MemLoc, i64),
}

impl Lin {
    fn neg(self) -> Lin {
        match self {
            Lin::Const(c) => Lin::Const(-c),
            Lin::Var(s, x, c) => Lin::Var(s.flip(), x, -c),
        }
    }

    fn add(self, k: i64) -> Lin {
        match self {
            Lin::Const(c) => Lin::Const(c + k),
            Lin::Var(s, x, c) => Lin::Var(s, x, c + k),
        }
    }
}

/// Interval of a value converted to `ty`: unchanged if it fits, the full
/// type range otherwise.
pub fn to_type(v: Itv, ty: &CType) -> Itv {
    let (lo, hi) = ty.range();
    if v.0 >= lo && v.1 <= hi {
        v
    } else {
        (lo, hi)
    }
}

fn hull(a: Itv, b: Itv) -> Itv {
    (a.0.min(b.0), a.1.max(b.1))
}

impl Env<'_> {
    /// Value range a location can hold.
    pub fn dim_range(&self, v: VarId) -> Itv {
        let info = self.program.var(v);
        if info.is_array() {
            info.ctype.element().range()
        } else {
            info.value_range()
        }
    }

    /// Whether reads of `v` come from the hardware rather than memory.
    pub fn input_range(&self, v: VarId) -> Option<Itv> {
        if !self.hw_aware {
            return None;
        }
        self.hw.input_at(self.program.var(v).absolute_address).map(|r| r.range)
    }

    fn var_bounds(&self, oct: &Octagon, v: VarId) -> Itv {
        if let Some(r) = self.input_range(v) {
            return r;
        }
        if oct.contains_var(MemLoc(v)) {
            oct.bounds(MemLoc(v)).unwrap_or((0, -1))
        } else {
            self.dim_range(v)
        }
    }

    pub fn load(&self, oct: &Octagon, place: &Place, ty: &CType) -> Itv {
        if ty.is_ptr() {
            return ty.range();
        }
        let r = match place {
            Place::Var(v) | Place::Index(v, _) => self.var_bounds(oct, *v),
            Place::Deref(p, _) => {
                let targets = self.pts.values(p);
                if targets.is_empty() {
                    ty.range()
                } else {
                    targets.iter().map(|t| self.var_bounds(oct, *t)).reduce(hull).unwrap()
                }
            }
        };
        to_type(r, ty)
    }

    pub fn interval(&self, oct: &Octagon, rv: &Rv) -> Itv {
        match rv {
            Rv::Const(c) => (*c, *c),
            Rv::Load { place, ty, .. } => self.load(oct, place, ty),
            Rv::AddrOf(_) => (0, 65535),
            Rv::Unary(op, a, ty) => {
                let (lo, hi) = self.interval(oct, a);
                let r = match op {
                    UnOp::Neg => (-hi, -lo),
                    UnOp::BitNot => (-hi - 1, -lo - 1),
                    UnOp::Not => {
                        if lo > 0 || hi < 0 {
                            (0, 0)
                        } else if lo == 0 && hi == 0 {
                            (1, 1)
                        } else {
                            (0, 1)
                        }
                    }
                };
                to_type(r, ty)
            }
            Rv::Binary(op, a, b, opty) => {
                let x = to_type(self.interval(oct, a), opty);
                let y = to_type(self.interval(oct, b), opty);
                if op.is_comparison() {
                    return self.compare(oct, *op, a, b, opty, x, y);
                }
                to_type(binary(*op, x, y, opty), opty)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn compare(&self, oct: &Octagon, op: BinOp, a: &Rv, b: &Rv, opty: &CType, x: Itv, y: Itv) -> Itv {
        let holds = |o: BinOp| -> bool {
            match o {
                BinOp::Lt => x.1 < y.0,
                BinOp::Le => x.1 <= y.0,
                BinOp::Gt => x.0 > y.1,
                BinOp::Ge => x.0 >= y.1,
                BinOp::Eq => x.0 == x.1 && y.0 == y.1 && x.0 == y.0,
                BinOp::Ne => x.1 < y.0 || y.1 < x.0,
                _ => false,
            }
        };
        if holds(op) {
            return (1, 1);
        }
        if op.negated().is_some_and(holds) {
            return (0, 0);
        }
        // Relational check: refine both ways and look for bottom.
        let t = self.refine_cmp(oct, op, a, b, opty);
        let f = op.negated().map(|n| self.refine_cmp(oct, n, a, b, opty));
        match (t.as_ref().map(|o| o.is_bottom()), f.map(|o| o.map(|o| o.is_bottom()))) {
            (Some(true), _) => (0, 0),
            (_, Some(Some(true))) => (1, 1),
            _ => (0, 1),
        }
    }

    /// Linear form of `rv`, exact only when no wrap-around can happen.
    pub fn linear(&self, oct: &Octagon, rv: &Rv) -> Option<Lin> {
        let l = match rv {
            Rv::Const(c) => Lin::Const(*c),
            Rv::Load { place, ty, .. } => {
                let Place::Var(v) = place.as_ref() else { return None };
                if ty.is_ptr() || self.input_range(*v).is_some() || !oct.contains_var(MemLoc(*v)) {
                    return None;
                }
                Lin::Var(Sign::Pos, MemLoc(*v), 0)
            }
            Rv::Unary(UnOp::Neg, a, _) => self.linear(oct, a)?.neg(),
            Rv::Binary(op @ (BinOp::Add | BinOp::Sub), a, b, _) => {
                // Wrapping commutes with + and -, so only the result must fit.
                let (la, lb) = (self.linear(oct, a)?, self.linear(oct, b)?);
                let lb = if *op == BinOp::Sub { lb.neg() } else { lb };
                match (la, lb) {
                    (Lin::Const(c), other) | (other, Lin::Const(c)) => other.add(c),
                    _ => return None,
                }
            }
            _ => return None,
        };
        // The exact value must fit the type of the expression.
        if let Rv::Unary(_, _, ty) | Rv::Binary(_, _, _, ty) = rv {
            if !fits(self.lin_range(oct, l)?, ty) {
                return None;
            }
        }
        Some(l)
    }

    fn lin_range(&self, oct: &Octagon, l: Lin) -> Option<Itv> {
        Some(match l {
            Lin::Const(c) => (c, c),
            Lin::Var(s, x, c) => {
                let (lo, hi) = oct.bounds(x)?;
                match s {
                    Sign::Pos => (lo + c, hi + c),
                    Sign::Neg => (c - hi, c - lo),
                }
            }
        })
    }

    /// Right-hand side for storing `rv` into a location of type `ty`.
    pub fn rhs(&self, oct: &Octagon, rv: &Rv, ty: &CType) -> Rhs {
        if let Some(l) = self.linear(oct, rv) {
            if let Some(r) = self.lin_range(oct, l) {
                if fits(r, ty) {
                    return match l {
                        Lin::Const(c) => Rhs::Const(c),
                        Lin::Var(sign, y, c) => Rhs::Var { sign, y, c },
                    };
                }
            }
        }
        let (lo, hi) = to_type(self.interval(oct, rv), ty);
        Rhs::Interval(lo, hi)
    }

    /// Restrict `oct` to states where `rv` is non-zero (`polarity`) or zero.
    pub fn refine(&self, oct: &Octagon, rv: &Rv, polarity: bool) -> Octagon {
        if oct.is_bottom() {
            return oct.clone();
        }
        let (lo, hi) = self.interval(oct, rv);
        let impossible = if polarity { lo == 0 && hi == 0 } else { lo > 0 || hi < 0 };
        if impossible || lo > hi {
            return oct.to_bottom();
        }
        match rv {
            Rv::Unary(UnOp::Not, a, _) => self.refine(oct, a, !polarity),
            Rv::Binary(op, a, b, opty) if op.is_comparison() => {
                let op = if polarity { Some(*op) } else { op.negated() };
                op.and_then(|op| self.refine_cmp(oct, op, a, b, opty)).unwrap_or_else(|| oct.clone())
            }
            _ => match self.linear(oct, rv) {
                Some(l) => {
                    let op = if polarity { BinOp::Ne } else { BinOp::Eq };
                    self.constrain(oct, op, l, Lin::Const(0))
                }
                None => oct.clone(),
            },
        }
    }

    fn refine_cmp(&self, oct: &Octagon, op: BinOp, a: &Rv, b: &Rv, opty: &CType) -> Option<Octagon> {
        let la = self.linear(oct, a)?;
        let lb = self.linear(oct, b)?;
        for (l, r) in [(la, a), (lb, b)] {
            if !matches!(l, Lin::Const(_)) && !fits(self.interval(oct, r), opty) {
                return None;
            }
        }
        Some(self.constrain(oct, op, la, lb))
    }

    /// Add `a op b` for linear forms.
    fn constrain(&self, oct: &Octagon, op: BinOp, a: Lin, b: Lin) -> Octagon {
        let mut o = oct.clone();
        match op {
            BinOp::Lt => le(&mut o, a, b, -1),
            BinOp::Le => le(&mut o, a, b, 0),
            BinOp::Gt => le(&mut o, b, a, -1),
            BinOp::Ge => le(&mut o, b, a, 0),
            BinOp::Eq => {
                le(&mut o, a, b, 0);
                le(&mut o, b, a, 0);
            }
            BinOp::Ne => not_equal(&mut o, a, b),
            _ => {}
        }
        o
    }
}

fn fits(v: Itv, ty: &CType) -> bool {
    let (lo, hi) = ty.range();
    v.0 >= lo && v.1 <= hi
}

/// `a - b <= k`.
fn le(o: &mut Octagon, a: Lin, b: Lin, k: i64) {
    match (a, b) {
        (Lin::Const(ca), Lin::Const(cb)) => {
            if ca - cb > k {
                *o = o.to_bottom();
            }
        }
        (Lin::Var(s, x, ca), Lin::Const(cb)) => o.guard(Constraint { x: (s, x), y: None, c: k - ca + cb }),
        (Lin::Const(ca), Lin::Var(s, y, cb)) => o.guard(Constraint { x: (s.flip(), y), y: None, c: k - ca + cb }),
        (Lin::Var(sa, x, ca), Lin::Var(sb, y, cb)) => {
            o.guard(Constraint { x: (sa, x), y: Some((sb.flip(), y)), c: k - ca + cb })
        }
    }
}

fn not_equal(o: &mut Octagon, a: Lin, b: Lin) {
    let (s, x, v) = match (a, b) {
        (Lin::Const(ca), Lin::Const(cb)) => {
            if ca == cb {
                *o = o.to_bottom();
            }
            return;
        }
        (Lin::Var(s, x, c), Lin::Const(d)) | (Lin::Const(d), Lin::Var(s, x, c)) => (s, x, d - c),
        _ => return,
    };
    // s*x != v  <=>  x != s*v
    let v = if s == Sign::Pos { v } else { -v };
    let Some((lo, hi)) = o.bounds(x) else { return };
    if lo == v && hi == v {
        *o = o.to_bottom();
    } else if lo == v {
        o.guard(Constraint { x: (Sign::Neg, x), y: None, c: -(v + 1) });
    } else if hi == v {
        o.guard(Constraint { x: (Sign::Pos, x), y: None, c: v - 1 });
    }
}

/// Interval arithmetic for non-comparison operators on converted operands.
pub fn binary(op: BinOp, x: Itv, y: Itv, ty: &CType) -> Itv {
    let full = ty.range();
    match op {
        BinOp::Add => (x.0 + y.0, x.1 + y.1),
        BinOp::Sub => (x.0 - y.1, x.1 - y.0),
        BinOp::Mul => {
            let p = [x.0 * y.0, x.0 * y.1, x.1 * y.0, x.1 * y.1];
            (*p.iter().min().unwrap(), *p.iter().max().unwrap())
        }
        BinOp::Div => {
            let mut parts = Vec::new();
            if y.0 <= -1 {
                parts.push((y.0, y.1.min(-1)));
            }
            if y.1 >= 1 {
                parts.push((y.0.max(1), y.1));
            }
            parts
                .into_iter()
                .map(|d| {
                    let q = [x.0 / d.0, x.0 / d.1, x.1 / d.0, x.1 / d.1];
                    (*q.iter().min().unwrap(), *q.iter().max().unwrap())
                })
                .reduce(hull)
                .unwrap_or(full)
        }
        BinOp::Rem => {
            if y.0 <= 0 && y.1 >= 0 {
                return full;
            }
            let m = y.0.abs().max(y.1.abs()) - 1;
            if x.0 >= 0 {
                (0, x.1.min(m))
            } else if x.1 <= 0 {
                (-((-x.0).min(m)), 0)
            } else {
                (-m, m)
            }
        }
        BinOp::Shl => {
            if x.0 >= 0 && y.0 >= 0 && y.1 < ty.bits() as i64 {
                (x.0 << y.0, x.1 << y.1)
            } else {
                full
            }
        }
        BinOp::Shr => {
            if x.0 >= 0 && y.0 >= 0 {
                (x.0 >> y.1.min(62), x.1 >> y.0.min(62))
            } else {
                full
            }
        }
        BinOp::BitAnd => {
            if x.0 >= 0 && y.0 >= 0 {
                (0, x.1.min(y.1))
            } else if x.0 >= 0 {
                (0, x.1)
            } else if y.0 >= 0 {
                (0, y.1)
            } else {
                full
            }
        }
        BinOp::BitOr | BinOp::BitXor => {
            if x.0 >= 0 && y.0 >= 0 {
                let m = x.1.max(y.1);
                let cap = if m == 0 { 0 } else { (1i64 << (64 - m.leading_zeros())) - 1 };
                let lo = if op == BinOp::BitOr { x.0.max(y.0) } else { 0 };
                (lo, cap)
            } else {
                full
            }
        }
        _ => (0, 1),
    }
}

/// Concrete semantics of an operator on converted operands; `None` on a
/// division by zero.
pub fn concrete_binary(op: BinOp, a: i64, b: i64) -> Option<i64> {
    Some(match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => a.checked_div(b)?,
        BinOp::Rem => a.checked_rem(b)?,
        BinOp::Shl => {
            if (0..48).contains(&b) {
                a << b
            } else {
                0
            }
        }
        BinOp::Shr => {
            if b < 0 {
                0
            } else {
                a >> b.min(62)
            }
        }
        BinOp::BitOr => a | b,
        BinOp::BitAnd => a & b,
        BinOp::BitXor => a ^ b,
        BinOp::Lt => (a < b) as i64,
        BinOp::Le => (a <= b) as i64,
        BinOp::Gt => (a > b) as i64,
        BinOp::Ge => (a >= b) as i64,
        BinOp::Eq => (a == b) as i64,
        BinOp::Ne => (a != b) as i64,
    })
}

pub fn concrete_unary(op: UnOp, a: i64) -> i64 {
    match op {
        UnOp::Neg => -a,
        UnOp::Not => (a == 0) as i64,
        UnOp::BitNot => !a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ops() -> impl Strategy<Value = BinOp> {
        prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Rem),
            Just(BinOp::Shl),
            Just(BinOp::Shr),
            Just(BinOp::BitOr),
            Just(BinOp::BitAnd),
            Just(BinOp::BitXor),
        ]
    }

    fn itv() -> impl Strategy<Value = Itv> {
        (-40i64..40, 0i64..30).prop_map(|(lo, w)| (lo, lo + w))
    }

    proptest! {
        // Brute force over every pair of points in small intervals.
        #[test]
        fn interval_ops_cover_concrete(op in ops(), x in itv(), y in itv()) {
            let ty = CType::I16;
            let r = to_type(binary(op, x, y, &ty), &ty);
            for a in x.0..=x.1 {
                for b in y.0..=y.1 {
                    if let Some(v) = concrete_binary(op, a, b) {
                        let v = ty.wrap(v);
                        prop_assert!(r.0 <= v && v <= r.1, "{:?} {} {} = {} not in {:?}", op, a, b, v, r);
                    }
                }
            }
        }
    }

    #[test]
    fn conversion_keeps_fitting_values() {
        assert_eq!(to_type((3, 7), &CType::U8), (3, 7));
        assert_eq!(to_type((-1, 7), &CType::U8), (0, 255));
        assert_eq!(to_type((250, 256), &CType::U8), (0, 255));
    }
}
