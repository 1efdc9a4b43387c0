//! Octagons over integer variables: conjunctions of `±x ±y <= c`.
//!
//! Stored as a difference-bound matrix over 2n literals. Literal `2k` is
//! `+x_k`, literal `2k+1` is `-x_k`, and `m[i][j]` bounds `v_j - v_i`.
//! Closure is the integer tight closure (shortest paths, tightening,
//! strengthening).

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::frontend::ast::VarId;

pub const INF: i64 = i64::MAX;

/// A tracked memory location: a global, local, temp, register or array summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemLoc(pub VarId);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dimension mismatch between octagons")]
pub struct DimensionMismatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }

    fn lit(self, k: usize) -> usize {
        match self {
            Sign::Pos => 2 * k,
            Sign::Neg => 2 * k + 1,
        }
    }
}

/// `sx*x + sy*y <= c`, or `sx*x <= c` when `y` is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constraint {
    pub x: (Sign, MemLoc),
    pub y: Option<(Sign, MemLoc)>,
    pub c: i64,
}

/// Right-hand side of an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rhs {
    Const(i64),
    /// `sign*y + c`; `y` may be the assigned variable itself.
    Var { sign: Sign, y: MemLoc, c: i64 },
    /// Anything else, approximated by an interval.
    Interval(i64, i64),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Octagon {
    vars: Vec<MemLoc>,
    types: Vec<(i64, i64)>,
    /// Empty when bottom.
    m: Vec<i64>,
    bottom: bool,
    closed: bool,
}

#[inline]
fn bar(i: usize) -> usize {
    i ^ 1
}

#[inline]
fn add(a: i64, b: i64) -> i64 {
    if a == INF || b == INF {
        INF
    } else {
        a.saturating_add(b).min(INF - 1)
    }
}

fn floor_half(v: i64) -> i64 {
    if v == INF {
        INF
    } else {
        v.div_euclid(2)
    }
}

impl Octagon {
    /// Unconstrained apart from the type bound of each variable.
    pub fn top(vars: &[(MemLoc, (i64, i64))]) -> Octagon {
        let mut sorted = vars.to_vec();
        sorted.sort_by_key(|(v, _)| *v);
        sorted.dedup_by_key(|(v, _)| *v);
        let n = sorted.len();
        let mut o = Octagon {
            vars: sorted.iter().map(|(v, _)| *v).collect(),
            types: sorted.iter().map(|(_, t)| *t).collect(),
            m: vec![INF; 4 * n * n],
            bottom: false,
            closed: false,
        };
        for i in 0..2 * n {
            o.set(i, i, 0);
        }
        for k in 0..n {
            let (lo, hi) = o.types[k];
            o.set(2 * k + 1, 2 * k, 2 * hi);
            o.set(2 * k, 2 * k + 1, -2 * lo);
        }
        o.close();
        o
    }

    pub fn bottom(vars: &[(MemLoc, (i64, i64))]) -> Octagon {
        Octagon::top(vars).to_bottom()
    }

    pub fn to_bottom(&self) -> Octagon {
        Octagon { vars: self.vars.clone(), types: self.types.clone(), m: Vec::new(), bottom: true, closed: true }
    }

    pub fn is_bottom(&self) -> bool {
        self.bottom
    }

    fn set_bottom(&mut self) {
        self.m.clear();
        self.bottom = true;
        self.closed = true;
    }

    pub fn vars(&self) -> &[MemLoc] {
        &self.vars
    }

    pub fn type_of(&self, v: MemLoc) -> Option<(i64, i64)> {
        self.index(v).map(|k| self.types[k])
    }

    pub fn var_types(&self) -> Vec<(MemLoc, (i64, i64))> {
        self.vars.iter().copied().zip(self.types.iter().copied()).collect()
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn contains_var(&self, v: MemLoc) -> bool {
        self.index(v).is_some()
    }

    fn index(&self, v: MemLoc) -> Option<usize> {
        self.vars.binary_search(&v).ok()
    }

    fn idx(&self, v: MemLoc) -> usize {
        self.index(v).unwrap_or_else(|| panic!("{:?} is not tracked by this octagon", v))
    }

    #[inline]
    fn n2(&self) -> usize {
        2 * self.vars.len()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.m[i * self.n2() + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: i64) {
        let n2 = self.n2();
        self.m[i * n2 + j] = v;
    }

    /// Meet one entry together with its coherent twin.
    fn tighten_entry(&mut self, i: usize, j: usize, v: i64) {
        if v < self.get(i, j) {
            self.set(i, j, v);
            self.set(bar(j), bar(i), v);
            self.closed = false;
        }
    }

    /// Raw matrix in row-major order (for tests and dumps).
    pub fn matrix(&self) -> &[i64] {
        &self.m
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Build from a raw (2n x 2n) matrix; the result is not closed.
    pub fn from_matrix(vars: &[(MemLoc, (i64, i64))], m: Vec<i64>) -> Octagon {
        let mut o = Octagon::top(vars);
        assert_eq!(m.len(), o.m.len());
        o.m = m;
        o.closed = false;
        o
    }

    /// Tight integer closure; detects emptiness.
    pub fn close(&mut self) {
        if self.closed || self.is_bottom() {
            return;
        }
        let n2 = self.n2();
        for i in 0..n2 {
            for j in 0..n2 {
                let twin = self.get(bar(j), bar(i));
                if twin < self.get(i, j) {
                    self.set(i, j, twin);
                }
            }
        }
        for k in 0..n2 {
            for i in 0..n2 {
                let ik = self.m[i * n2 + k];
                if ik == INF {
                    continue;
                }
                for j in 0..n2 {
                    let kj = self.m[k * n2 + j];
                    let via = add(ik, kj);
                    if via < self.m[i * n2 + j] {
                        self.m[i * n2 + j] = via;
                    }
                }
            }
        }
        if (0..n2).any(|i| self.get(i, i) < 0) {
            self.set_bottom();
            return;
        }
        for i in 0..n2 {
            let v = self.get(i, bar(i));
            if v != INF {
                self.set(i, bar(i), 2 * floor_half(v));
            }
        }
        for i in 0..n2 {
            if add(self.get(i, bar(i)), self.get(bar(i), i)) < 0 {
                self.set_bottom();
                return;
            }
        }
        for i in 0..n2 {
            let a = self.get(i, bar(i));
            if a == INF {
                continue;
            }
            for j in 0..n2 {
                let b = self.get(bar(j), j);
                if b == INF {
                    continue;
                }
                let s = (a + b) / 2;
                if s < self.get(i, j) {
                    self.set(i, j, s);
                }
            }
        }
        for i in 0..n2 {
            self.set(i, i, 0);
        }
        self.closed = true;
    }

    pub fn closed(&self) -> Octagon {
        let mut o = self.clone();
        o.close();
        o
    }

    /// Interval of `v`, `None` when bottom. Infinite sides saturate at i64 limits.
    pub fn bounds(&self, v: MemLoc) -> Option<(i64, i64)> {
        let o = if self.closed { None } else { Some(self.closed()) };
        let o = o.as_ref().unwrap_or(self);
        if o.is_bottom() {
            return None;
        }
        let k = o.idx(v);
        let hi = o.get(2 * k + 1, 2 * k);
        let lo = o.get(2 * k, 2 * k + 1);
        let hi = if hi == INF { i64::MAX } else { hi.div_euclid(2) };
        let lo = if lo == INF { i64::MIN } else { -(lo.div_euclid(2)) };
        Some((lo, hi))
    }

    /// Upper bound of `sx*x + sy*y` (closed form); `None` when unbounded or bottom.
    pub fn upper(&self, x: (Sign, MemLoc), y: (Sign, MemLoc)) -> Option<i64> {
        let o = self.closed();
        if o.is_bottom() {
            return None;
        }
        let p = x.0.lit(o.idx(x.1));
        let q = y.0.lit(o.idx(y.1));
        if p == q {
            let v = o.get(bar(p), p);
            return (v != INF).then_some(v);
        }
        let v = o.get(bar(q), p);
        (v != INF).then_some(v)
    }

    pub fn guard(&mut self, c: Constraint) {
        if self.is_bottom() {
            return;
        }
        let p = c.x.0.lit(self.idx(c.x.1));
        match c.y {
            None => self.tighten_entry(bar(p), p, c.c.saturating_mul(2)),
            Some((sy, y)) => {
                let q = sy.lit(self.idx(y));
                if q == p {
                    self.tighten_entry(bar(p), p, c.c);
                } else if q == bar(p) {
                    // x - x <= c
                    if c.c < 0 {
                        self.set_bottom();
                        return;
                    }
                } else {
                    self.tighten_entry(bar(q), p, c.c);
                }
            }
        }
        self.close();
    }

    /// Drop every constraint mentioning `x`, then bound it by `[lo, hi]`.
    pub fn havoc(&mut self, x: MemLoc, lo: i64, hi: i64) {
        self.forget(x);
        if self.is_bottom() {
            return;
        }
        let k = self.idx(x);
        self.tighten_entry(2 * k + 1, 2 * k, hi.saturating_mul(2));
        self.tighten_entry(2 * k, 2 * k + 1, lo.saturating_neg().saturating_mul(2));
        self.close();
    }

    fn forget(&mut self, x: MemLoc) {
        self.close();
        if self.is_bottom() {
            return;
        }
        let k = self.idx(x);
        let n2 = self.n2();
        for lit in [2 * k, 2 * k + 1] {
            for j in 0..n2 {
                if j != lit {
                    self.set(lit, j, INF);
                    self.set(j, lit, INF);
                }
            }
        }
    }

    /// `x := rhs`. Results outside the type of `x` havoc it to its type bounds.
    pub fn assign(&mut self, x: MemLoc, rhs: Rhs) {
        self.close();
        if self.is_bottom() {
            return;
        }
        let (tlo, thi) = self.types[self.idx(x)];
        match rhs {
            Rhs::Const(c) => {
                if c < tlo || c > thi {
                    self.havoc(x, tlo, thi);
                } else {
                    self.havoc(x, c, c);
                }
            }
            Rhs::Interval(lo, hi) => {
                if lo < tlo || hi > thi {
                    self.havoc(x, tlo, thi);
                } else {
                    self.havoc(x, lo, hi);
                }
            }
            Rhs::Var { sign, y, c } => {
                let (ylo, yhi) = self.bounds(y).expect("not bottom");
                let (lo, hi) = match sign {
                    Sign::Pos => (ylo.saturating_add(c), yhi.saturating_add(c)),
                    Sign::Neg => (c.saturating_sub(yhi), c.saturating_sub(ylo)),
                };
                if lo < tlo || hi > thi {
                    self.havoc(x, tlo, thi);
                    return;
                }
                if y == x {
                    self.shift_self(x, sign, c);
                } else {
                    self.forget(x);
                    let kx = self.idx(x);
                    let ky = self.idx(y);
                    let px = 2 * kx;
                    let py = sign.lit(ky);
                    // x - (±y) <= c and (±y) - x <= -c
                    self.tighten_entry(py, px, c.saturating_mul(1));
                    self.tighten_entry(px, py, -c);
                    self.close();
                }
            }
        }
    }

    /// `x := ±x + c`, exact.
    fn shift_self(&mut self, x: MemLoc, sign: Sign, c: i64) {
        let k = self.idx(x);
        let n2 = self.n2();
        let (p, q) = (2 * k, 2 * k + 1);
        if sign == Sign::Neg {
            // Swap the roles of +x and -x.
            for j in 0..n2 {
                let (a, b) = (self.get(p, j), self.get(q, j));
                self.set(p, j, b);
                self.set(q, j, a);
            }
            for i in 0..n2 {
                let (a, b) = (self.get(i, p), self.get(i, q));
                self.set(i, p, b);
                self.set(i, q, a);
            }
        }
        // New +x = old +x + c: constraints v_j - (+x) shrink by c, (+x) - v_i grow by c.
        for j in 0..n2 {
            if j == p || j == q {
                continue;
            }
            let pj = self.get(p, j);
            self.set(p, j, if pj == INF { INF } else { pj - c });
            let jp = self.get(j, p);
            self.set(j, p, if jp == INF { INF } else { jp + c });
            let qj = self.get(q, j);
            self.set(q, j, if qj == INF { INF } else { qj + c });
            let jq = self.get(j, q);
            self.set(j, q, if jq == INF { INF } else { jq - c });
        }
        let qp = self.get(q, p);
        self.set(q, p, if qp == INF { INF } else { qp + 2 * c });
        let pq = self.get(p, q);
        self.set(p, q, if pq == INF { INF } else { pq - 2 * c });
        self.closed = false;
        self.close();
    }

    /// Weak update: the result covers both the old and the new value.
    pub fn weak_assign(&mut self, x: MemLoc, rhs: Rhs) {
        let mut strong = self.clone();
        strong.assign(x, rhs);
        *self = self.join(&strong).expect("same dimensions");
    }

    fn same_dims(&self, other: &Octagon) -> Result<(), DimensionMismatch> {
        if self.vars == other.vars {
            Ok(())
        } else {
            Err(DimensionMismatch)
        }
    }

    pub fn join(&self, other: &Octagon) -> Result<Octagon, DimensionMismatch> {
        self.same_dims(other)?;
        if self.is_bottom() {
            return Ok(other.clone());
        }
        if other.is_bottom() {
            return Ok(self.clone());
        }
        let a = self.closed();
        let b = other.closed();
        if a.is_bottom() {
            return Ok(b);
        }
        if b.is_bottom() {
            return Ok(a);
        }
        let mut r = a.clone();
        for (x, y) in r.m.iter_mut().zip(&b.m) {
            *x = (*x).max(*y);
        }
        r.closed = true;
        Ok(r)
    }

    pub fn meet(&self, other: &Octagon) -> Result<Octagon, DimensionMismatch> {
        self.same_dims(other)?;
        if self.is_bottom() || other.is_bottom() {
            return Ok(self.to_bottom());
        }
        let mut r = self.clone();
        for (x, y) in r.m.iter_mut().zip(&other.m) {
            *x = (*x).min(*y);
        }
        r.closed = false;
        r.close();
        Ok(r)
    }

    /// Type-derived bound of entry (i, j): max of literal j minus min of literal i.
    fn threshold(&self, i: usize, j: usize) -> i64 {
        if i == j {
            return 0;
        }
        let lit = |l: usize| {
            let (lo, hi) = self.types[l / 2];
            if l % 2 == 0 {
                (lo, hi)
            } else {
                (-hi, -lo)
            }
        };
        lit(j).1 - lit(i).0
    }

    /// Widening with type-bound thresholds. `self` is the previous iterate;
    /// the result is left unclosed so that later widenings stay stable.
    pub fn widen(&self, other: &Octagon) -> Result<Octagon, DimensionMismatch> {
        self.widen_with(other, &[])
    }

    /// Widening that first tries the given constants (sorted ascending) as
    /// bounds before falling back to the type bounds.
    pub fn widen_with(&self, other: &Octagon, thresholds: &[i64]) -> Result<Octagon, DimensionMismatch> {
        self.same_dims(other)?;
        if self.is_bottom() {
            return Ok(other.clone());
        }
        if other.is_bottom() {
            return Ok(self.clone());
        }
        let b = other.closed();
        if b.is_bottom() {
            return Ok(self.clone());
        }
        let mut r = self.clone();
        let n2 = r.n2();
        for i in 0..n2 {
            for j in 0..n2 {
                let old = r.get(i, j);
                let new = b.get(i, j);
                if new > old {
                    let t = r.threshold(i, j);
                    let scale = if bar(i) == j { 2 } else { 1 };
                    let step = thresholds.iter().map(|c| c * scale).find(|c| *c >= new && *c < t);
                    r.set(i, j, step.unwrap_or(if new <= t { t } else { INF }));
                }
            }
        }
        r.closed = false;
        Ok(r)
    }

    /// Inclusion of concretizations.
    pub fn leq(&self, other: &Octagon) -> Result<bool, DimensionMismatch> {
        self.same_dims(other)?;
        let a = self.closed();
        if a.is_bottom() {
            return Ok(true);
        }
        if other.is_bottom() {
            return Ok(false);
        }
        Ok(a.m.iter().zip(&other.m).all(|(x, y)| x <= y))
    }

    pub fn equiv(&self, other: &Octagon) -> bool {
        self.leq(other).unwrap_or(false) && other.leq(self).unwrap_or(false)
    }

    /// Projection onto `keep` (exact on the closed form).
    pub fn restrict(&self, keep: &BTreeSet<MemLoc>) -> Octagon {
        let a = self.closed();
        let idx: Vec<usize> = (0..a.vars.len()).filter(|k| keep.contains(&a.vars[*k])).collect();
        let vars: Vec<MemLoc> = idx.iter().map(|k| a.vars[*k]).collect();
        let types: Vec<(i64, i64)> = idx.iter().map(|k| a.types[*k]).collect();
        if a.is_bottom() {
            return Octagon { vars, types, m: Vec::new(), bottom: true, closed: true };
        }
        let n2 = 2 * idx.len();
        let mut m = vec![INF; n2 * n2];
        for (si, &ki) in idx.iter().enumerate() {
            for (sj, &kj) in idx.iter().enumerate() {
                for di in 0..2 {
                    for dj in 0..2 {
                        m[(2 * si + di) * n2 + 2 * sj + dj] = a.get(2 * ki + di, 2 * kj + dj);
                    }
                }
            }
        }
        Octagon { vars, types, m, bottom: false, closed: true }
    }

    /// Add unconstrained variables (bounded by their types).
    pub fn extend(&self, extra: &[(MemLoc, (i64, i64))]) -> Octagon {
        let mut all = self.var_types();
        for e in extra {
            if !self.contains_var(e.0) {
                all.push(*e);
            }
        }
        let mut r = Octagon::top(&all);
        if self.is_bottom() {
            return r.to_bottom();
        }
        let map: Vec<usize> = self.vars.iter().map(|v| r.idx(*v)).collect();
        for (ki, &ri) in map.iter().enumerate() {
            for (kj, &rj) in map.iter().enumerate() {
                for di in 0..2 {
                    for dj in 0..2 {
                        let v = self.get(2 * ki + di, 2 * kj + dj);
                        let n2 = r.n2();
                        let cur = &mut r.m[(2 * ri + di) * n2 + 2 * rj + dj];
                        *cur = (*cur).min(v);
                    }
                }
            }
        }
        r.closed = false;
        r.close();
        r
    }

    /// Put `small` back into `self`: its sub-matrix replaces ours and
    /// relations between `modified` variables and variables outside
    /// `small` are dropped.
    pub fn embed(&self, small: &Octagon, modified: &BTreeSet<MemLoc>) -> Result<Octagon, DimensionMismatch> {
        if small.vars.iter().any(|v| !self.contains_var(*v)) {
            return Err(DimensionMismatch);
        }
        let s = small.closed();
        if s.is_bottom() {
            return Ok(self.to_bottom());
        }
        let mut r = self.closed();
        if r.is_bottom() {
            return Ok(r);
        }
        let map: Vec<usize> = s.vars.iter().map(|v| r.idx(*v)).collect();
        let inside: Vec<bool> = (0..r.vars.len()).map(|k| s.contains_var(r.vars[k])).collect();
        for (sk, &rk) in map.iter().enumerate() {
            if !modified.contains(&s.vars[sk]) {
                continue;
            }
            for other in 0..r.vars.len() {
                if inside[other] {
                    continue;
                }
                for di in 0..2 {
                    for dj in 0..2 {
                        let (a, b) = (2 * rk + di, 2 * other + dj);
                        r.set(a, b, INF);
                        r.set(b, a, INF);
                    }
                }
            }
        }
        for (si, &ri) in map.iter().enumerate() {
            for (sj, &rj) in map.iter().enumerate() {
                for di in 0..2 {
                    for dj in 0..2 {
                        r.set(2 * ri + di, 2 * rj + dj, s.get(2 * si + di, 2 * sj + dj));
                    }
                }
            }
        }
        r.closed = false;
        r.close();
        Ok(r)
    }

    /// Whether a concrete assignment satisfies every constraint.
    pub fn contains_point(&self, point: &dyn Fn(MemLoc) -> i64) -> bool {
        if self.is_bottom() {
            return false;
        }
        let vals: Vec<i64> = self.vars.iter().map(|v| point(*v)).collect();
        let lit = |l: usize| if l % 2 == 0 { vals[l / 2] } else { -vals[l / 2] };
        let n2 = self.n2();
        (0..n2).all(|i| (0..n2).all(|j| self.get(i, j) == INF || lit(j) - lit(i) <= self.get(i, j)))
    }

    /// Binary constraints of the closed form that are not implied by the
    /// unary bounds alone, as `(sx, x, sy, y, c)` with `x < y`.
    pub fn relations(&self) -> Vec<(Sign, MemLoc, Sign, MemLoc, i64)> {
        let o = self.closed();
        let mut out = Vec::new();
        if o.is_bottom() {
            return out;
        }
        let n = o.vars.len();
        let ub = |o: &Octagon, l: usize| o.get(bar(l), l);
        for kx in 0..n {
            for ky in kx + 1..n {
                for sx in [Sign::Pos, Sign::Neg] {
                    for sy in [Sign::Pos, Sign::Neg] {
                        let p = sx.lit(kx);
                        let q = sy.lit(ky);
                        let c = o.get(bar(q), p);
                        if c == INF {
                            continue;
                        }
                        let (a, b) = (ub(&o, p), ub(&o, q));
                        let implied = if a == INF || b == INF { INF } else { (a + b) / 2 };
                        if c < implied {
                            out.push((sx, o.vars[kx], sy, o.vars[ky], c));
                        }
                    }
                }
            }
        }
        out
    }
}

impl fmt::Debug for Octagon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bottom() {
            return write!(f, "Octagon(bottom over {:?})", self.vars);
        }
        write!(f, "Octagon {{")?;
        for v in &self.vars {
            let (lo, hi) = self.bounds(*v).unwrap_or((1, 0));
            write!(f, " {:?}:[{},{}]", v.0, lo, hi)?;
        }
        write!(f, " }}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(k: u32) -> MemLoc {
        MemLoc(VarId(k))
    }

    fn u8s(n: u32) -> Vec<(MemLoc, (i64, i64))> {
        (0..n).map(|k| (v(k), (0, 255))).collect()
    }

    fn le(x: u32, y: u32, c: i64) -> Constraint {
        Constraint { x: (Sign::Pos, v(x)), y: Some((Sign::Neg, v(y))), c }
    }

    #[test]
    fn top_and_bottom() {
        let t = Octagon::top(&u8s(1));
        assert_eq!(t.bounds(v(0)), Some((0, 255)));
        let b = Octagon::bottom(&u8s(1));
        assert!(b.leq(&t).unwrap());
        assert!(!t.leq(&b).unwrap());
        let e = Octagon::top(&[]);
        assert!(!e.is_bottom());
        assert_eq!(e.dim(), 0);
    }

    #[test]
    fn transitivity_and_contradiction() {
        let mut o = Octagon::top(&[(v(0), (-100, 100)), (v(1), (-100, 100)), (v(2), (-100, 100))]);
        o.guard(le(0, 1, 0));
        o.guard(le(1, 2, 0));
        assert_eq!(o.upper((Sign::Pos, v(0)), (Sign::Neg, v(2))), Some(0));
        let mut c = Octagon::top(&u8s(2));
        c.guard(le(0, 1, -1));
        c.guard(le(1, 0, -1));
        assert!(c.is_bottom());
    }

    #[test]
    fn assignments() {
        let mut o = Octagon::top(&u8s(2));
        o.assign(v(0), Rhs::Const(5));
        assert_eq!(o.bounds(v(0)), Some((5, 5)));

        let mut p = Octagon::top(&u8s(1));
        p.guard(Constraint { x: (Sign::Pos, v(0)), y: None, c: 15 });
        p.assign(v(0), Rhs::Var { sign: Sign::Pos, y: v(0), c: 1 });
        assert_eq!(p.bounds(v(0)), Some((1, 16)));
        let mut then = p.clone();
        then.guard(Constraint { x: (Sign::Neg, v(0)), y: None, c: -16 });
        assert_eq!(then.bounds(v(0)), Some((16, 16)));
        p.guard(Constraint { x: (Sign::Pos, v(0)), y: None, c: 15 });
        assert_eq!(p.bounds(v(0)), Some((1, 15)));

        let mut c = Octagon::top(&u8s(2));
        c.havoc(v(1), 2, 3);
        c.assign(v(0), Rhs::Var { sign: Sign::Pos, y: v(1), c: 0 });
        assert_eq!(c.bounds(v(0)), Some((2, 3)));
        assert_eq!(c.upper((Sign::Pos, v(0)), (Sign::Neg, v(1))), Some(0));
        assert_eq!(c.upper((Sign::Pos, v(1)), (Sign::Neg, v(0))), Some(0));
    }

    #[test]
    fn overflow_havocs_to_type() {
        let mut o = Octagon::top(&u8s(1));
        o.assign(v(0), Rhs::Var { sign: Sign::Pos, y: v(0), c: 1 });
        assert_eq!(o.bounds(v(0)), Some((0, 255)));
        let mut g = Octagon::top(&u8s(1));
        g.guard(Constraint { x: (Sign::Pos, v(0)), y: None, c: -1 });
        assert!(g.is_bottom());
    }

    #[test]
    fn havoc_frame() {
        let mut o = Octagon::top(&u8s(2));
        o.guard(le(0, 1, 0));
        o.havoc(v(1), 0, 255);
        assert_eq!(o.upper((Sign::Pos, v(0)), (Sign::Neg, v(1))), None.or(Some(255)));
        let mut b = Octagon::bottom(&u8s(1));
        b.havoc(v(0), 0, 255);
        assert!(b.is_bottom());
    }

    #[test]
    fn lattice_examples() {
        let mut a = Octagon::top(&u8s(1));
        a.assign(v(0), Rhs::Const(0));
        let mut b = a.clone();
        b.assign(v(0), Rhs::Const(1));
        assert_eq!(a.join(&b).unwrap().bounds(v(0)), Some((0, 1)));

        let mut x1 = Octagon::top(&u8s(1));
        x1.havoc(v(0), 0, 1);
        let mut x2 = x1.clone();
        x2.havoc(v(0), 0, 2);
        assert_eq!(x1.widen(&x2).unwrap().bounds(v(0)), Some((0, 255)));
        assert!(Octagon::top(&u8s(1)).join(&Octagon::top(&u8s(2))).is_err());
    }

    #[test]
    fn restrict_and_embed() {
        let ty = (-50, 50);
        let mut o = Octagon::top(&[(v(0), ty), (v(1), ty), (v(2), ty)]);
        o.guard(le(0, 1, 3));
        o.guard(le(1, 2, 1));
        let keep: BTreeSet<MemLoc> = [v(0), v(2)].into();
        let r = o.restrict(&keep);
        assert_eq!(r.upper((Sign::Pos, v(0)), (Sign::Neg, v(2))), Some(4));
        let back = o.embed(&r, &BTreeSet::new()).unwrap();
        assert!(back.equiv(&o));

        let mut small = r.clone();
        small.havoc(v(0), 0, 0);
        let modified: BTreeSet<MemLoc> = [v(0)].into();
        let e = o.embed(&small, &modified).unwrap();
        assert_eq!(e.bounds(v(0)), Some((0, 0)));
        // x0 no longer relates to x1 beyond the unary bounds.
        assert_eq!(e.upper((Sign::Pos, v(0)), (Sign::Neg, v(1))), Some(50));
        assert_eq!(e.upper((Sign::Pos, v(1)), (Sign::Neg, v(2))), Some(1));
    }

    #[test]
    fn negated_shift() {
        let ty = (-20, 20);
        let mut o = Octagon::top(&[(v(0), ty), (v(1), ty)]);
        o.havoc(v(0), 1, 3);
        o.guard(le(0, 1, 0));
        o.assign(v(0), Rhs::Var { sign: Sign::Neg, y: v(0), c: 5 });
        assert_eq!(o.bounds(v(0)), Some((2, 4)));
        // old x <= y  =>  5 - new x <= y
        assert_eq!(o.upper((Sign::Neg, v(0)), (Sign::Neg, v(1))), Some(-5));
    }

    mod oracle {
        use super::*;
        use proptest::prelude::*;

        const TY: (i64, i64) = (-4, 4);

        fn vars(n: u32) -> Vec<(MemLoc, (i64, i64))> {
            (0..n).map(|k| (v(k), TY)).collect()
        }

        /// Type-bounded top met with random entries.
        fn raw(n: u32, entries: &[(usize, usize, i64)]) -> Octagon {
            let top = Octagon::top(&vars(n));
            let n2 = 2 * n as usize;
            let mut m = top.matrix().to_vec();
            for &(i, j, c) in entries {
                let (i, j) = (i % n2, j % n2);
                m[i * n2 + j] = m[i * n2 + j].min(c);
            }
            Octagon::from_matrix(&vars(n), m)
        }

        /// Apply single triangle, tightening and strengthening steps until nothing changes.
        fn naive_closure(o: &Octagon) -> Option<Vec<i64>> {
            let n2 = 2 * o.dim();
            let mut m = o.matrix().to_vec();
            let at = |m: &Vec<i64>, i: usize, j: usize| m[i * n2 + j];
            loop {
                let mut changed = false;
                for i in 0..n2 {
                    for j in 0..n2 {
                        let mut best = at(&m, i, j).min(at(&m, bar(j), bar(i)));
                        for k in 0..n2 {
                            best = best.min(add(at(&m, i, k), at(&m, k, j)));
                        }
                        if j == bar(i) && best != INF {
                            best = 2 * best.div_euclid(2);
                        }
                        let (a, b) = (at(&m, i, bar(i)), at(&m, bar(j), j));
                        if a != INF && b != INF {
                            best = best.min(a.div_euclid(2) + b.div_euclid(2));
                        }
                        if best < at(&m, i, j) {
                            m[i * n2 + j] = best;
                            changed = true;
                        }
                    }
                }
                if (0..n2).any(|i| at(&m, i, i) < 0) {
                    return None;
                }
                if !changed {
                    return Some(m);
                }
            }
        }

        fn points(n: usize) -> Vec<Vec<i64>> {
            let mut out = vec![vec![]];
            for _ in 0..n {
                out = out
                    .into_iter()
                    .flat_map(|p| (TY.0..=TY.1).map(move |x| [p.clone(), vec![x]].concat()))
                    .collect();
            }
            out
        }

        fn entries() -> impl Strategy<Value = Vec<(usize, usize, i64)>> {
            prop::collection::vec((0usize..8, 0usize..8, -6i64..10), 0..8)
        }

        proptest! {
            #[test]
            fn closure_matches_naive_fixpoint(n in 1u32..5, e in entries()) {
                let o = raw(n, &e);
                let c = o.closed();
                match naive_closure(&o) {
                    None => prop_assert!(c.is_bottom()),
                    Some(m) => {
                        prop_assert!(!c.is_bottom());
                        prop_assert_eq!(c.matrix(), &m[..]);
                    }
                }
            }

            #[test]
            fn closure_is_exact_on_integer_points(n in 1u32..4, e in entries()) {
                let o = raw(n, &e);
                let c = o.closed();
                let n2 = 2 * n as usize;
                let pts: Vec<Vec<i64>> = points(n as usize)
                    .into_iter()
                    .filter(|p| o.contains_point(&|m: MemLoc| p[m.0 .0 as usize]))
                    .collect();
                if pts.is_empty() {
                    prop_assert!(c.is_bottom());
                } else {
                    let lit = |p: &Vec<i64>, l: usize| if l % 2 == 0 { p[l / 2] } else { -p[l / 2] };
                    for i in 0..n2 {
                        for j in 0..n2 {
                            let best = pts.iter().map(|p| lit(p, j) - lit(p, i)).max().unwrap();
                            prop_assert_eq!(c.get(i, j), best, "entry ({}, {})", i, j);
                        }
                    }
                }
            }

            #[test]
            fn closure_is_idempotent(n in 1u32..5, e in entries()) {
                let c = raw(n, &e).closed();
                prop_assume!(!c.is_bottom());
                let mut again = c.clone();
                again.closed = false;
                again.close();
                prop_assert_eq!(again, c);
            }
        }
    }
}
