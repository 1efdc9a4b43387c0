//! Bounded concrete interpreter used as ground truth by the tests.
//!
//! Each straight-line run of nodes inside one full expression is compiled
//! into memory micro-instructions with a dependency DAG. Execution picks any
//! ready instruction, so every topological order is explored, and handlers
//! may fire between any two instructions while interrupts are enabled.
//! Wider-than-atomic accesses are split into byte units.
//!
//! Dependency rules: an instruction waits for the loads its address or
//! value needs, and two accesses to the same object keep program order when
//! at least one of them is a store. Guards, calls and returns form their
//! own segments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::cfg::{Cfg, FullExprId, NodeId, NodeKind, Place, Rv};
use crate::engine::eval::{concrete_binary, concrete_unary};
use crate::engine::{AnalysisResult, Mode};
use crate::frontend::ast::{Builtin, CType, Callee, FuncId, Program, Span, VarId};
use crate::hardware::{EnableTarget, Flag, HardwareSpec, StoreValue};
use crate::octagon::MemLoc;
use crate::pipeline::Prepared;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{span}: {count} schedules exceed the limit of {limit}")]
    ScheduleExplosion { span: Span, count: u64, limit: u64 },
    #[error("explored more than {0} states")]
    StateBudgetExceeded(usize),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub isr_fires_max: usize,
    pub schedule_limit: u64,
    pub state_budget: usize,
    /// Full stores kept per sequence point for the requirement check.
    pub snapshots_per_point: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { isr_fires_max: 2, schedule_limit: 64, state_budget: 1_000_000, snapshots_per_point: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Access {
    Load,
    Store,
}

/// One memory instruction. `unit` numbers the byte of a split access.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MicroInstr {
    Mem { access: Access, var: String, unit: Option<u8> },
    Call(String),
    Branch,
    Return,
}

impl fmt::Display for MicroInstr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MicroInstr::Mem { access, var, unit } => {
                let a = if *access == Access::Load { "LOAD" } else { "STORE" };
                match unit {
                    Some(u) => write!(f, "{} {}.{}", a, var, u),
                    None => write!(f, "{} {}", a, var),
                }
            }
            MicroInstr::Call(n) => write!(f, "CALL {}", n),
            MicroInstr::Branch => write!(f, "BRANCH"),
            MicroInstr::Return => write!(f, "RET"),
        }
    }
}

pub type Schedule = Vec<MicroInstr>;

// ---------------------------------------------------------------------------
// Segments

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ref {
    Op(usize),
    /// Split load: low and high unit.
    Split(usize, usize),
    /// Register read of a temporary, with its defining node in the segment.
    Temp(VarId, Option<usize>),
}

#[derive(Debug, Clone)]
enum OpKind {
    /// Node index, index into that node's refs where the address starts.
    Load { node: usize, place: Place, inner: usize, unit: Option<u8> },
    Store { node: usize, unit: Option<u8> },
}

#[derive(Debug, Clone)]
struct Op {
    kind: OpKind,
    deps: u64,
    root: Option<VarId>,
    store: bool,
}

#[derive(Debug)]
struct SegNode {
    id: NodeId,
    refs: Vec<Ref>,
}

#[derive(Debug)]
struct Segment {
    nodes: Vec<SegNode>,
    ops: Vec<Op>,
}

fn is_temp(program: &Program, v: VarId) -> bool {
    program.var(v).name.starts_with('$')
}

fn place_root(p: &Place) -> Option<VarId> {
    match p {
        Place::Var(v) | Place::Index(v, _) => Some(*v),
        Place::Deref(..) => None,
    }
}

struct SegBuilder<'a> {
    program: &'a Program,
    hw: &'a HardwareSpec,
    ops: Vec<Op>,
    nodes: Vec<SegNode>,
    /// Latest in-segment definition of each temporary: (node, value deps).
    temp_defs: HashMap<VarId, (usize, u64)>,
}

impl SegBuilder<'_> {
    fn split(&self, v: VarId, ty: &CType) -> bool {
        self.program.var(v).is_global() && !self.hw.is_atomic_access(ty)
    }

    fn push(&mut self, kind: OpKind, deps: u64, root: Option<VarId>, store: bool) -> Result<usize, OracleError> {
        let i = self.ops.len();
        if i >= 64 {
            return Err(OracleError::Unsupported("full expression has more than 64 memory accesses".into()));
        }
        let mut deps = deps;
        for (k, o) in self.ops.iter().enumerate() {
            let conflict = match (o.root, root) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            };
            if conflict && (o.store || store) {
                deps |= 1 << k;
            }
        }
        self.ops.push(Op { kind, deps, root, store });
        Ok(i)
    }

    fn ref_deps(&self, r: Ref) -> u64 {
        match r {
            Ref::Op(i) => 1 << i,
            Ref::Split(a, b) => (1 << a) | (1 << b),
            Ref::Temp(_, Some(k)) => self.nodes_value_deps(k),
            Ref::Temp(_, None) => 0,
        }
    }

    fn nodes_value_deps(&self, k: usize) -> u64 {
        self.temp_defs.values().find(|(n, _)| *n == k).map(|(_, d)| *d).unwrap_or(0)
    }

    /// Push refs for the loads of `rv`; returns their combined deps.
    fn rv(&mut self, node: usize, refs: &mut Vec<Ref>, rv: &Rv) -> Result<u64, OracleError> {
        match rv {
            Rv::Const(_) => Ok(0),
            Rv::Load { place, ty, .. } => {
                let inner = refs.len();
                let inner_deps = self.place_inner(node, refs, place)?;
                let r = match &**place {
                    Place::Var(v) if is_temp(self.program, *v) => {
                        Ref::Temp(*v, self.temp_defs.get(v).map(|(n, _)| *n))
                    }
                    _ => {
                        let root = place_root(place);
                        let load = |unit| OpKind::Load { node, place: (**place).clone(), inner, unit };
                        if root.is_some_and(|v| self.split(v, ty)) {
                            let lo = self.push(load(Some(0)), inner_deps, root, false)?;
                            let hi = self.push(load(Some(1)), inner_deps | (1 << lo), root, false)?;
                            Ref::Split(lo, hi)
                        } else {
                            Ref::Op(self.push(load(None), inner_deps, root, false)?)
                        }
                    }
                };
                let d = match r {
                    Ref::Temp(v, _) => self.temp_defs.get(&v).map_or(0, |(_, d)| *d),
                    other => self.ref_deps(other),
                };
                refs.push(r);
                Ok(d | inner_deps)
            }
            Rv::Unary(_, a, _) => self.rv(node, refs, a),
            Rv::Binary(_, a, b, _) => Ok(self.rv(node, refs, a)? | self.rv(node, refs, b)?),
            Rv::AddrOf(p) => self.place_inner(node, refs, p),
        }
    }

    fn place_inner(&mut self, node: usize, refs: &mut Vec<Ref>, p: &Place) -> Result<u64, OracleError> {
        match p {
            Place::Var(_) => Ok(0),
            Place::Index(_, i) => self.rv(node, refs, i),
            Place::Deref(q, _) => self.rv(node, refs, q),
        }
    }
}

fn build_segment(program: &Program, hw: &HardwareSpec, cfg: &Cfg, preds: &[Vec<NodeId>], start: NodeId) -> Result<Segment, OracleError> {
    let mut b = SegBuilder { program, hw, ops: Vec::new(), nodes: Vec::new(), temp_defs: HashMap::new() };
    let mut id = start;
    loop {
        let n = cfg.node(id);
        let j = b.nodes.len();
        let mut refs = Vec::new();
        match &n.kind {
            NodeKind::Assign { dst, ty, src, .. } => {
                let value = b.rv(j, &mut refs, src)?;
                match dst {
                    Place::Var(v) if is_temp(program, *v) => {
                        b.nodes.push(SegNode { id, refs });
                        b.temp_defs.insert(*v, (j, value));
                    }
                    _ => {
                        let addr = b.place_inner(j, &mut refs, dst)?;
                        let root = place_root(dst);
                        let deps = value | addr;
                        if root.is_some_and(|v| b.split(v, ty)) {
                            let lo = b.push(OpKind::Store { node: j, unit: Some(0) }, deps, root, true)?;
                            b.push(OpKind::Store { node: j, unit: Some(1) }, deps | (1 << lo), root, true)?;
                        } else {
                            b.push(OpKind::Store { node: j, unit: None }, deps, root, true)?;
                        }
                        b.nodes.push(SegNode { id, refs });
                    }
                }
            }
            NodeKind::Guard(rv) | NodeKind::Return(Some(rv)) => {
                b.rv(j, &mut refs, rv)?;
                b.nodes.push(SegNode { id, refs });
                break;
            }
            NodeKind::Call { args, .. } => {
                for a in args {
                    b.rv(j, &mut refs, a)?;
                }
                b.nodes.push(SegNode { id, refs });
                break;
            }
            _ => {
                b.nodes.push(SegNode { id, refs });
                break;
            }
        }
        let Some(&next) = n.succs.first() else { break };
        let m = cfg.node(next);
        let chain = matches!(m.kind, NodeKind::Assign { .. })
            && m.full_expr.is_some()
            && m.full_expr == n.full_expr
            && preds[next.0 as usize].len() == 1;
        if !chain {
            break;
        }
        id = next;
    }
    Ok(Segment { nodes: b.nodes, ops: b.ops })
}

/// Number of topological orders of the segment, saturating at `limit + 1`.
fn count_orders(seg: &Segment, limit: u64) -> u64 {
    fn go(seg: &Segment, done: u64, memo: &mut HashMap<u64, u64>, limit: u64) -> u64 {
        let n = seg.ops.len();
        if done.count_ones() as usize == n {
            return 1;
        }
        if let Some(c) = memo.get(&done) {
            return *c;
        }
        let mut total = 0u64;
        for (i, op) in seg.ops.iter().enumerate() {
            if done & (1 << i) == 0 && op.deps & !done == 0 {
                total = total.saturating_add(go(seg, done | (1 << i), memo, limit)).min(limit + 1);
            }
        }
        memo.insert(done, total);
        total
    }
    go(seg, 0, &mut HashMap::new(), limit)
}

struct Compiled<'a> {
    program: &'a Program,
    hw: &'a HardwareSpec,
    pc: &'a crate::cfg::ProgramCfg,
    preds: BTreeMap<FuncId, Vec<Vec<NodeId>>>,
    segments: HashMap<(FuncId, NodeId), Rc<Segment>>,
    limit: u64,
}

impl<'a> Compiled<'a> {
    fn new(prep: &'a Prepared, limit: u64) -> Self {
        let preds = prep.pc.funcs.iter().map(|(f, c)| (*f, c.preds())).collect();
        Compiled { program: &prep.program, hw: &prep.hw, pc: &prep.pc, preds, segments: HashMap::new(), limit }
    }

    fn segment(&mut self, f: FuncId, start: NodeId) -> Result<Rc<Segment>, OracleError> {
        if let Some(s) = self.segments.get(&(f, start)) {
            return Ok(s.clone());
        }
        let cfg = self.pc.cfg(f);
        let seg = build_segment(self.program, self.hw, cfg, &self.preds[&f], start)?;
        let count = count_orders(&seg, self.limit);
        if count > self.limit {
            return Err(OracleError::ScheduleExplosion { span: cfg.node(start).span, count, limit: self.limit });
        }
        let seg = Rc::new(seg);
        self.segments.insert((f, start), seg.clone());
        Ok(seg)
    }
}

fn store_target_name(program: &Program, cfg: &Cfg, seg: &Segment, node: usize) -> String {
    match &cfg.node(seg.nodes[node].id).kind {
        NodeKind::Assign { dst, .. } => place_root(dst).map_or("*".into(), |v| program.var(v).name.clone()),
        _ => "?".into(),
    }
}

/// All schedules of each segment of a full expression, in node order.
pub fn compile_schedules(prep: &Prepared, fe: FullExprId, limit: u64) -> Result<Vec<Vec<Schedule>>, OracleError> {
    let mut c = Compiled::new(prep, limit);
    let e = prep.pc.full_expr(fe);
    let cfg = prep.pc.cfg(e.func);
    let preds = &c.preds[&e.func].clone();
    let mut covered = BTreeSet::new();
    let mut out = Vec::new();
    for &n in &e.nodes {
        if covered.contains(&n) {
            continue;
        }
        let in_chain = preds[n.0 as usize].len() == 1 && {
            let p = preds[n.0 as usize][0];
            cfg.node(p).full_expr == Some(fe) && matches!(cfg.node(p).kind, NodeKind::Assign { .. })
        };
        if in_chain && matches!(cfg.node(n).kind, NodeKind::Assign { .. }) {
            continue;
        }
        let seg = c.segment(e.func, n)?;
        covered.extend(seg.nodes.iter().map(|s| s.id));
        let mut orders = Vec::new();
        let mut cur = Vec::new();
        enumerate_orders(&seg, 0, &mut cur, &mut orders);
        let tail = match &cfg.node(seg.nodes.last().unwrap().id).kind {
            NodeKind::Guard(_) => Some(MicroInstr::Branch),
            NodeKind::Return(_) => Some(MicroInstr::Return),
            NodeKind::Call { callee, .. } => Some(MicroInstr::Call(match callee {
                Callee::Func(g) => prep.program.func(*g).name.clone(),
                Callee::Builtin(Builtin::Sei) => "sei".into(),
                Callee::Builtin(Builtin::Cli) => "cli".into(),
            })),
            _ => None,
        };
        let mut scheds: Vec<Schedule> = orders
            .into_iter()
            .map(|o| {
                let mut s: Schedule = o
                    .into_iter()
                    .map(|i| {
                        let op = &seg.ops[i];
                        match &op.kind {
                            OpKind::Store { node, unit } => MicroInstr::Mem {
                                access: Access::Store,
                                var: store_target_name(&prep.program, cfg, &seg, *node),
                                unit: *unit,
                            },
                            OpKind::Load { place, unit, .. } => MicroInstr::Mem {
                                access: Access::Load,
                                var: place_root(place).map_or("*".into(), |v| prep.program.var(v).name.clone()),
                                unit: *unit,
                            },
                        }
                    })
                    .collect();
                s.extend(tail.clone());
                s
            })
            .collect();
        scheds.sort();
        scheds.dedup();
        if !scheds.is_empty() && scheds.iter().any(|s| !s.is_empty()) {
            out.push(scheds);
        }
    }
    Ok(out)
}

fn enumerate_orders(seg: &Segment, done: u64, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == seg.ops.len() {
        out.push(cur.clone());
        return;
    }
    for (i, op) in seg.ops.iter().enumerate() {
        if done & (1 << i) == 0 && op.deps & !done == 0 {
            cur.push(i);
            enumerate_orders(seg, done | (1 << i), cur, out);
            cur.pop();
        }
    }
}

// ---------------------------------------------------------------------------
// Machine state

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Pending {
    func: FuncId,
    start: NodeId,
    done: u64,
    slots: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Frame {
    func: FuncId,
    node: NodeId,
    pending: Option<Pending>,
    /// Set for handler frames: global enable flag to restore on return.
    saved_global: Option<bool>,
    /// Locals of an outer activation of the same function.
    shadow: Option<Vec<i64>>,
}

/// Memory image and interrupt flags visible at a sequence point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Snapshot {
    pub mem: Vec<i64>,
    pub global: bool,
    pub sources: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Machine {
    mem: Vec<i64>,
    frames: Vec<Frame>,
    global: bool,
    sources: Vec<bool>,
    fires: u8,
}

#[derive(Debug)]
enum Event {
    Enter(FuncId, NodeId),
    Fire(FuncId),
    Input(VarId, i64),
}

#[derive(Debug)]
pub struct Trace {
    event: Event,
    prev: Option<Rc<Trace>>,
}

fn extend(t: &Option<Rc<Trace>>, event: Event) -> Option<Rc<Trace>> {
    Some(Rc::new(Trace { event, prev: t.clone() }))
}

pub fn render_trace(program: &Program, t: &Option<Rc<Trace>>) -> String {
    let mut items = Vec::new();
    let mut cur = t.clone();
    while let Some(n) = cur {
        items.push(match &n.event {
            Event::Enter(f, id) => format!("{}#{}", program.func(*f).name, id.0),
            Event::Fire(f) => format!("<{}>", program.func(*f).name),
            Event::Input(v, x) => format!("{}={}", program.var(*v).name, x),
        });
        cur = n.prev.clone();
    }
    items.reverse();
    items.join(" ")
}

/// Values seen per variable at each sequence point, with a witness trace
/// for the first occurrence of every value.
pub type ValueSets = BTreeMap<VarId, BTreeMap<i64, Option<Rc<Trace>>>>;

#[derive(Debug, Default)]
pub struct Reachable {
    pub points: BTreeMap<(FuncId, NodeId, Mode), ValueSets>,
    pub snapshots: BTreeMap<(FuncId, NodeId, Mode), BTreeSet<Snapshot>>,
    /// Variables each function loaded from or stored to.
    pub accessed: BTreeMap<FuncId, BTreeSet<VarId>>,
    pub states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FirePolicy {
    Anywhere,
    /// Only before the first and after the last instruction of the
    /// expression under test.
    Boundaries,
}

struct Interp<'a> {
    c: Compiled<'a>,
    layout: Vec<usize>,
    isr_of_source: Vec<Option<FuncId>>,
    markers: HashSet<(FuncId, NodeId)>,
    fires_max: u8,
    accessed: BTreeMap<FuncId, BTreeSet<VarId>>,
}

enum Step {
    Next(Machine, Option<Event>),
    /// Trace ends (program exit, trap).
    Stop,
}

impl<'a> Interp<'a> {
    fn new(prep: &'a Prepared, cfg: &OracleConfig) -> Self {
        let program = &prep.program;
        let mut layout = Vec::with_capacity(program.vars.len() + 1);
        let mut off = 0;
        for v in &program.vars {
            layout.push(off);
            off += match v.ctype {
                CType::Array(_, n) => n as usize,
                _ => 1,
            };
        }
        layout.push(off);
        let isr_of_source = prep
            .hw
            .sources
            .iter()
            .map(|s| prep.isrs.iter().copied().find(|i| program.func(*i).isr_vector.as_deref() == Some(&s.vector)))
            .collect();
        let mut markers = HashSet::new();
        for (f, cfg) in &prep.pc.funcs {
            let preds = cfg.preds();
            for id in cfg.ids() {
                let n = cfg.node(id);
                if n.full_expr.is_some() && preds[id.0 as usize].iter().all(|p| cfg.node(*p).full_expr != n.full_expr) {
                    markers.insert((*f, id));
                }
            }
        }
        Interp {
            c: Compiled::new(prep, cfg.schedule_limit),
            layout,
            isr_of_source,
            markers,
            fires_max: cfg.isr_fires_max.min(255) as u8,
            accessed: BTreeMap::new(),
        }
    }

    fn program(&self) -> &'a Program {
        self.c.program
    }

    fn cell(&self, v: VarId, offset: i64) -> Option<usize> {
        let base = self.layout[v.0 as usize];
        let len = (self.layout[v.0 as usize + 1] - base) as i64;
        (0..len).contains(&offset).then(|| base + offset as usize)
    }

    fn initial(&self) -> Machine {
        let program = self.program();
        let mut mem = vec![0; *self.layout.last().unwrap()];
        for d in &program.globals {
            if let (Some(id), Some(init)) = (d.id, &d.init) {
                if let crate::frontend::ast::ExprKind::Const(c) = init.kind {
                    mem[self.layout[id.0 as usize]] = c;
                }
            }
        }
        let hw = self.c.hw;
        let sources: Vec<bool> = hw.sources.iter().map(|s| s.initially_enabled).collect();
        for (i, v) in program.vars.iter().enumerate() {
            for (bit, t) in hw.enable_bits(v.absolute_address) {
                let on = match t {
                    EnableTarget::Global => hw.global_initially_enabled,
                    EnableTarget::Source(name) => hw.sources.iter().any(|s| s.name == name && s.initially_enabled),
                };
                if on {
                    mem[self.layout[i]] |= 1 << bit;
                }
            }
        }
        let main = program.entry_id().expect("entry function");
        Machine {
            mem,
            frames: vec![Frame { func: main, node: self.c.pc.cfg(main).entry, pending: None, saved_global: None, shadow: None }],
            global: hw.global_initially_enabled,
            sources,
            fires: 0,
        }
    }

    fn in_isr(m: &Machine) -> bool {
        m.frames.iter().any(|f| f.saved_global.is_some())
    }

    fn can_fire(&self, m: &Machine) -> bool {
        m.global
            && m.fires < self.fires_max
            && !Self::in_isr(m)
            && !m.frames.iter().any(|f| self.c.hw.atomic_functions.contains(&self.program().func(f.func).name))
    }

    /// Machines resulting from one handler firing now.
    fn fire(&self, m: &Machine) -> Vec<(Machine, FuncId)> {
        let mut out = Vec::new();
        for (i, isr) in self.isr_of_source.iter().enumerate() {
            let Some(isr) = isr else { continue };
            if !m.sources[i] {
                continue;
            }
            let mut n = m.clone();
            self.push_frame(&mut n, *isr, Some(m.global));
            n.global = false;
            n.fires += 1;
            out.push((n, *isr));
        }
        out
    }

    fn push_frame(&self, m: &mut Machine, func: FuncId, saved_global: Option<bool>) {
        let def = self.program().func(func);
        let shadow = m.frames.iter().any(|f| f.func == func).then(|| {
            let mut s = Vec::new();
            for v in &def.locals {
                let (a, b) = (self.layout[v.0 as usize], self.layout[v.0 as usize + 1]);
                s.extend_from_slice(&m.mem[a..b]);
                m.mem[a..b].fill(0);
            }
            s
        });
        m.frames.push(Frame { func, node: self.c.pc.cfg(func).entry, pending: None, saved_global, shadow });
    }

    fn read(&self, m: &Machine, v: VarId, offset: i64) -> Option<i64> {
        self.cell(v, offset).map(|c| m.mem[c])
    }

    /// Values a load may return: memory, or every test value of an input.
    fn load_values(&self, m: &Machine, v: VarId, offset: i64) -> Vec<i64> {
        let info = self.program().var(v);
        if let Some(r) = self.c.hw.input_at(info.absolute_address) {
            if r.test_values.is_empty() {
                return vec![r.range.0, r.range.1];
            }
            return r.test_values.clone();
        }
        self.read(m, v, offset).into_iter().collect()
    }

    fn write(&self, m: &mut Machine, v: VarId, offset: i64, value: i64) -> bool {
        let Some(c) = self.cell(v, offset) else { return false };
        let info = self.program().var(v);
        m.mem[c] = if info.ctype.element().is_ptr() {
            value
        } else if info.absolute_address.is_some_and(|a| a.bit.is_some()) {
            value & 1
        } else {
            info.ctype.element().wrap(value)
        };
        if info.absolute_address.is_some() {
            for (t, flag) in self.c.hw.store_effect(info.absolute_address, &StoreValue::Const(m.mem[c])) {
                let on = flag == Flag::Enabled;
                match t {
                    EnableTarget::Global => m.global = on,
                    EnableTarget::Source(name) => {
                        if let Some(i) = self.c.hw.sources.iter().position(|s| s.name == name) {
                            m.sources[i] = on;
                        }
                    }
                }
            }
        }
        true
    }

    fn decode_ptr(v: i64) -> Option<(VarId, i64)> {
        if v <= 0 {
            return None;
        }
        Some((VarId(((v >> 16) - 1) as u32), v & 0xFFFF))
    }

    fn encode_ptr(v: VarId, offset: i64) -> i64 {
        ((v.0 as i64 + 1) << 16) | offset
    }
}

/// Evaluation over captured load values.
struct Ev<'m, 'a> {
    interp: &'m Interp<'a>,
    m: &'m Machine,
    seg: &'m Segment,
    slots: &'m [i64],
    cfg: &'m Cfg,
}

impl Ev<'_, '_> {
    fn ref_value(&self, r: Ref, ty: &CType) -> Option<i64> {
        let v = match r {
            Ref::Op(i) => self.slots[i],
            Ref::Split(lo, hi) => (self.slots[lo] & 0xFF) | ((self.slots[hi] & 0xFF) << 8),
            Ref::Temp(_, Some(k)) => self.node_value(k)?,
            Ref::Temp(v, None) => self.interp.read(self.m, v, 0)?,
        };
        Some(if ty.is_ptr() { v } else { ty.wrap(v) })
    }

    /// Value of the right-hand side of segment node `k`.
    fn node_value(&self, k: usize) -> Option<i64> {
        let n = self.cfg.node(self.seg.nodes[k].id);
        let NodeKind::Assign { src, ty, .. } = &n.kind else { return None };
        let mut cur = 0;
        let v = self.rv(k, src, &mut cur)?;
        Some(if ty.is_ptr() { v } else { ty.wrap(v) })
    }

    fn rv(&self, k: usize, rv: &Rv, cur: &mut usize) -> Option<i64> {
        match rv {
            Rv::Const(c) => Some(*c),
            Rv::Load { place, ty, .. } => {
                self.skip_inner(k, place, cur)?;
                let r = self.seg.nodes[k].refs[*cur];
                *cur += 1;
                self.ref_value(r, ty)
            }
            Rv::Unary(op, a, ty) => Some(ty.wrap(concrete_unary(*op, self.rv(k, a, cur)?))),
            Rv::Binary(op, a, b, ty) => {
                let x = ty.wrap(self.rv(k, a, cur)?);
                let y = ty.wrap(self.rv(k, b, cur)?);
                let r = concrete_binary(*op, x, y)?;
                Some(if op.is_comparison() { r } else { ty.wrap(r) })
            }
            Rv::AddrOf(p) => {
                let (v, off) = self.address(k, p, cur)?;
                Some(Interp::encode_ptr(v, off))
            }
        }
    }

    fn skip_inner(&self, k: usize, p: &Place, cur: &mut usize) -> Option<()> {
        match p {
            Place::Var(_) => Some(()),
            Place::Index(_, i) => self.rv(k, i, cur).map(|_| ()),
            Place::Deref(q, _) => self.rv(k, q, cur).map(|_| ()),
        }
    }

    fn address(&self, k: usize, p: &Place, cur: &mut usize) -> Option<(VarId, i64)> {
        match p {
            Place::Var(v) => Some((*v, 0)),
            Place::Index(a, i) => Some((*a, self.rv(k, i, cur)?)),
            Place::Deref(q, _) => Interp::decode_ptr(self.rv(k, q, cur)?),
        }
    }
}

impl Interp<'_> {
    /// Whether a handler firing here can be told apart from one fired
    /// before the next step that touches non-local memory.
    fn fire_point(&mut self, m: &Machine) -> Result<bool, OracleError> {
        let top = m.frames.last().unwrap();
        let Some(p) = &top.pending else {
            return Ok(self.markers.contains(&(top.func, top.node)));
        };
        let seg = self.c.segment(p.func, p.start)?;
        if p.done.count_ones() as usize == seg.ops.len() {
            return Ok(true);
        }
        let program = self.program();
        Ok(seg.ops.iter().enumerate().any(|(i, op)| {
            p.done & (1 << i) == 0
                && op.deps & !p.done == 0
                && op.root.is_none_or(|v| program.var(v).is_global())
        }))
    }

    fn start_segment(&mut self, m: &Machine) -> Result<Step, OracleError> {
        let top = m.frames.last().unwrap();
        let seg = self.c.segment(top.func, top.node)?;
        let mut n = m.clone();
        n.frames.last_mut().unwrap().pending =
            Some(Pending { func: top.func, start: top.node, done: 0, slots: vec![0; seg.ops.len()] });
        Ok(Step::Next(n, Some(Event::Enter(top.func, top.node))))
    }

    /// Successors of one step of the topmost frame.
    fn step(&mut self, m: &Machine) -> Result<Vec<Step>, OracleError> {
        let top = m.frames.last().unwrap().clone();
        let Some(p) = &top.pending else {
            let cfg = self.c.pc.cfg(top.func);
            let node = cfg.node(top.node);
            return Ok(match &node.kind {
                NodeKind::Entry | NodeKind::Nop | NodeKind::IsrFixpoint => {
                    let mut n = m.clone();
                    n.frames.last_mut().unwrap().node = node.succs[0];
                    vec![Step::Next(n, None)]
                }
                NodeKind::Exit => vec![self.exit(m)],
                _ => vec![self.start_segment(m)?],
            });
        };
        let seg = self.c.segment(p.func, p.start)?;
        let cfg = self.c.pc.cfg(p.func);
        if p.done.count_ones() as usize == seg.ops.len() {
            return Ok(vec![self.finish(m, &seg)]);
        }
        let mut out = Vec::new();
        for (i, op) in seg.ops.iter().enumerate() {
            if p.done & (1 << i) != 0 || op.deps & !p.done != 0 {
                continue;
            }
            let ev = Ev { interp: self, m, seg: &seg, slots: &p.slots, cfg };
            match &op.kind {
                OpKind::Load { node, place, inner, unit, .. } => {
                    let mut cur = *inner;
                    let Some((v, off)) = ev.address(*node, place, &mut cur) else {
                        out.push(Step::Stop);
                        continue;
                    };
                    self.accessed.entry(top.func).or_default().insert(v);
                    let values = self.load_values(m, v, off);
                    if values.is_empty() {
                        out.push(Step::Stop);
                        continue;
                    }
                    let is_input = self.c.hw.input_at(self.program().var(v).absolute_address).is_some();
                    for x in values {
                        let byte = match unit {
                            Some(u) => (x >> (8 * u)) & 0xFF,
                            None => x,
                        };
                        let mut n = m.clone();
                        let np = n.frames.last_mut().unwrap().pending.as_mut().unwrap();
                        np.slots[i] = byte;
                        np.done |= 1 << i;
                        out.push(Step::Next(n, is_input.then_some(Event::Input(v, x))));
                    }
                }
                OpKind::Store { node, unit } => {
                    let NodeKind::Assign { dst, .. } = &cfg.node(seg.nodes[*node].id).kind else { unreachable!() };
                    let value = ev.node_value(*node);
                    let mut cur = 0;
                    // Skip the value refs to reach the address refs.
                    let src_refs = match &cfg.node(seg.nodes[*node].id).kind {
                        NodeKind::Assign { src, .. } => {
                            let _ = ev.rv(*node, src, &mut cur);
                            cur
                        }
                        _ => 0,
                    };
                    let mut cur = src_refs;
                    let (Some(value), Some((v, off))) = (value, ev.address(*node, dst, &mut cur)) else {
                        out.push(Step::Stop);
                        continue;
                    };
                    self.accessed.entry(top.func).or_default().insert(v);
                    let mut n = m.clone();
                    let stored = match unit {
                        Some(u) => {
                            let old = self.read(&n, v, off).unwrap_or(0);
                            let mask = 0xFF << (8 * u);
                            (old & !mask) | (value & mask)
                        }
                        None => value,
                    };
                    if !self.write(&mut n, v, off, stored) {
                        out.push(Step::Stop);
                        continue;
                    }
                    let np = n.frames.last_mut().unwrap().pending.as_mut().unwrap();
                    np.done |= 1 << i;
                    out.push(Step::Next(n, None));
                }
            }
        }
        Ok(out)
    }

    fn finish(&mut self, m: &Machine, seg: &Segment) -> Step {
        let top = m.frames.last().unwrap();
        let p = top.pending.as_ref().unwrap();
        let cfg = self.c.pc.cfg(p.func);
        let ev = Ev { interp: self, m, seg, slots: &p.slots, cfg };
        let last = seg.nodes.len() - 1;
        let last_node = cfg.node(seg.nodes[last].id);
        let mut n = m.clone();
        // Temporaries become visible to later segments.
        let mut temps = Vec::new();
        for (k, sn) in seg.nodes.iter().enumerate() {
            if let NodeKind::Assign { dst: Place::Var(v), .. } = &cfg.node(sn.id).kind {
                if is_temp(self.program(), *v) {
                    match ev.node_value(k) {
                        Some(x) => temps.push((*v, x)),
                        None => return Step::Stop,
                    }
                }
            }
        }
        let program = self.program();
        match &last_node.kind {
            NodeKind::Guard(rv) => {
                let mut cur = 0;
                let Some(x) = ev.rv(last, rv, &mut cur) else { return Step::Stop };
                let f = n.frames.last_mut().unwrap();
                f.pending = None;
                f.node = last_node.succs[if x != 0 { 0 } else { 1 }];
            }
            NodeKind::Return(Some(rv)) => {
                let mut cur = 0;
                let Some(x) = ev.rv(last, rv, &mut cur) else { return Step::Stop };
                if let Some(slot) = program.func(p.func).ret_slot {
                    self.write(&mut n, slot, 0, x);
                }
                let f = n.frames.last_mut().unwrap();
                f.pending = None;
                f.node = last_node.succs[0];
            }
            NodeKind::Call { callee, args, .. } => {
                let mut cur = 0;
                let mut vals = Vec::new();
                for a in args {
                    let Some(x) = ev.rv(last, a, &mut cur) else { return Step::Stop };
                    vals.push(x);
                }
                n.frames.last_mut().unwrap().pending = None;
                match callee {
                    Callee::Builtin(b) => {
                        n.global = *b == Builtin::Sei;
                        n.frames.last_mut().unwrap().node = last_node.succs[0];
                    }
                    Callee::Func(g) => {
                        self.push_frame(&mut n, *g, None);
                        for (prm, x) in program.func(*g).params.iter().zip(vals) {
                            if let Some(id) = prm.id {
                                self.write(&mut n, id, 0, x);
                            }
                        }
                    }
                }
            }
            _ => {
                let f = n.frames.last_mut().unwrap();
                f.pending = None;
                f.node = last_node.succs.first().copied().unwrap_or(cfg.exit);
            }
        }
        for (v, x) in temps {
            self.write(&mut n, v, 0, x);
        }
        Step::Next(n, None)
    }

    fn exit(&self, m: &Machine) -> Step {
        let mut n = m.clone();
        let done = n.frames.pop().unwrap();
        let def = self.program().func(done.func);
        let ret = def.ret_slot.and_then(|slot| self.read(&n, slot, 0));
        // Dead locals are cleared so that equal continuations meet.
        let mut saved = done.shadow.into_iter().flatten();
        for v in &def.locals {
            let (a, b) = (self.layout[v.0 as usize], self.layout[v.0 as usize + 1]);
            for c in &mut n.mem[a..b] {
                *c = saved.next().unwrap_or(0);
            }
        }
        if let Some(g) = done.saved_global {
            n.global = g;
            return Step::Next(n, None);
        }
        let Some(caller) = n.frames.last_mut() else { return Step::Stop };
        let cfg = self.c.pc.cfg(caller.func);
        let call = cfg.node(caller.node);
        let NodeKind::Call { result, .. } = &call.kind else { return Step::Stop };
        caller.node = call.succs[0];
        if let (Some(r), Some(x)) = (result, ret) {
            self.write(&mut n, *r, 0, x);
        }
        Step::Next(n, None)
    }

    /// Globals plus the locals of the function in `frame`.
    fn visible_vars(&self, func: FuncId) -> Vec<VarId> {
        let program = self.program();
        let mut vs: Vec<VarId> = (0..program.vars.len() as u32)
            .map(VarId)
            .filter(|v| {
                let i = program.var(*v);
                i.is_global() && i.const_value.is_none() && self.c.hw.input_at(i.absolute_address).is_none()
            })
            .collect();
        vs.extend(program.func(func).locals.iter().copied());
        vs
    }

    fn record(&self, m: &Machine, trace: &Option<Rc<Trace>>, out: &mut Reachable, snapshots: usize) {
        let top = m.frames.last().unwrap();
        if top.pending.is_some() || !self.markers.contains(&(top.func, top.node)) {
            return;
        }
        let mode = if Self::in_isr(m) { Mode::Isr } else { Mode::Main };
        let key = (top.func, top.node, mode);
        let sets = out.points.entry(key).or_default();
        for v in self.visible_vars(top.func) {
            let base = self.layout[v.0 as usize];
            let end = self.layout[v.0 as usize + 1];
            let values = sets.entry(v).or_default();
            for c in base..end {
                values.entry(m.mem[c]).or_insert_with(|| trace.clone());
            }
        }
        if snapshots > 0 {
            let s = out.snapshots.entry(key).or_default();
            if s.len() < snapshots {
                s.insert(Snapshot { mem: m.mem.clone(), global: m.global, sources: m.sources.clone() });
            }
        }
    }
}

/// Depth-first exploration of every schedule, handler firing and input
/// value reachable from program start.
pub fn enumerate_executions(prep: &Prepared, cfg: &OracleConfig) -> Result<Reachable, OracleError> {
    let mut it = Interp::new(prep, cfg);
    let mut out = Reachable::default();
    let mut seen: HashSet<Machine> = HashSet::new();
    let mut handler_steps = 0usize;
    let mut stack: Vec<(Machine, Option<Rc<Trace>>)> = vec![(it.initial(), None)];
    while let Some((m, trace)) = stack.pop() {
        it.record(&m, &trace, &mut out, cfg.snapshots_per_point);
        // Handlers run without interleaving, so their inner states are not
        // kept; the step count still bounds the search.
        if Interp::in_isr(&m) {
            handler_steps += 1;
        } else if !seen.insert(m.clone()) {
            continue;
        }
        if seen.len() + handler_steps / 16 > cfg.state_budget {
            return Err(OracleError::StateBudgetExceeded(cfg.state_budget));
        }
        if it.can_fire(&m) && it.fire_point(&m)? {
            for (n, isr) in it.fire(&m) {
                stack.push((n, extend(&trace, Event::Fire(isr))));
            }
        }
        for s in it.step(&m)? {
            if let Step::Next(n, ev) = s {
                let t = match ev {
                    Some(e) => extend(&trace, e),
                    None => trace.clone(),
                };
                stack.push((n, t));
            }
        }
    }
    out.states = seen.len() + handler_steps;
    out.accessed = std::mem::take(&mut it.accessed);
    Ok(out)
}

/// Per-sequence-point value sets as text.
pub fn render(program: &Program, r: &Reachable) -> String {
    let mut out = String::new();
    for ((f, node, mode), sets) in &r.points {
        out.push_str(&format!("{} node {} [{:?}]\n", program.func(*f).name, node.0, mode));
        for (v, vals) in sets {
            let vs: Vec<String> = vals.keys().map(|x| x.to_string()).collect();
            out.push_str(&format!("  {} = {{{}}}\n", program.var(*v).display_name(program), vs.join(", ")));
        }
    }
    out.push_str(&format!("{} states explored\n", r.states));
    out
}

// ---------------------------------------------------------------------------
// Containment

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub func: String,
    pub node: NodeId,
    pub var: String,
    pub value: i64,
    /// `None` when the analysis found the point unreachable.
    pub bounds: Option<(i64, i64)>,
    pub trace: String,
}

#[derive(Debug, Clone, Default)]
pub struct Containment {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl Containment {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Every concrete value at every sequence point must lie within the
/// analyzed bounds of that point.
pub fn check_containment(prep: &Prepared, reach: &Reachable, res: &AnalysisResult) -> Containment {
    let program = &prep.program;
    let mut out = Containment::default();
    let mut cache: BTreeMap<(FuncId, Mode), Vec<Option<crate::engine::AbsState>>> = BTreeMap::new();
    for ((f, node, mode), sets) in &reach.points {
        let states = cache.entry((*f, *mode)).or_insert_with(|| res.node_states(*f, *mode));
        let st = states.get(node.0 as usize).cloned().flatten().filter(|s| !s.is_bottom());
        // Handler effects are only accounted for where the main program can
        // observe them, so handler-written globals are compared only at
        // expressions that touch them.
        let cfg = prep.pc.cfg(*f);
        let touched: BTreeSet<VarId> = match cfg.node(*node).full_expr {
            Some(fe) if *mode == Mode::Main => prep
                .pc
                .full_expr(fe)
                .nodes
                .iter()
                .flat_map(|n| cfg.node(*n).reads.iter().chain(&cfg.node(*n).writes))
                .map(|m| m.0)
                .collect(),
            _ => BTreeSet::new(),
        };
        for (v, vals) in sets {
            if *mode == Mode::Main && prep.shared.isr_written.contains(v) && !touched.contains(v) {
                continue;
            }
            let bounds = match &st {
                Some(s) => {
                    if !s.oct.contains_var(MemLoc(*v)) {
                        continue;
                    }
                    s.oct.bounds(MemLoc(*v))
                }
                None => None,
            };
            for (x, trace) in vals {
                out.checked += 1;
                if bounds.is_some_and(|(lo, hi)| lo <= *x && *x <= hi) {
                    continue;
                }
                out.violations.push(Violation {
                    func: program.func(*f).name.clone(),
                    node: *node,
                    var: program.var(*v).display_name(program),
                    value: *x,
                    bounds,
                    trace: render_trace(program, trace),
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Interrupts inside a full expression

/// Outcome sets of running one full expression from a start store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcomes {
    /// Stores when control leaves the expression.
    pub finals: BTreeSet<Vec<i64>>,
    /// Global memory seen by handlers on entry.
    pub views: BTreeSet<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Requirement1 {
    pub holds: bool,
    /// Handler views reachable only with interrupts inside the expression.
    pub uncovered_views: Vec<BTreeMap<String, i64>>,
    pub uncovered_finals: usize,
}

impl Interp<'_> {
    fn global_view(&self, m: &Machine) -> Vec<i64> {
        let program = self.program();
        let mut out = Vec::new();
        for (i, v) in program.vars.iter().enumerate() {
            if v.is_global() {
                out.extend_from_slice(&m.mem[self.layout[i]..self.layout[i + 1]]);
            }
        }
        out
    }

    fn explore_expr(&mut self, fe: FullExprId, start: &Snapshot, policy: FirePolicy, state_budget: usize) -> Result<Outcomes, OracleError> {
        let e = self.c.pc.full_expr(fe);
        let (func, nodes) = (e.func, e.nodes.clone());
        let entry = *nodes
            .iter()
            .find(|n| self.markers.contains(&(func, **n)))
            .ok_or_else(|| OracleError::Unsupported("expression has no entry node".into()))?;
        let init = Machine {
            mem: start.mem.clone(),
            frames: vec![Frame { func, node: entry, pending: None, saved_global: None, shadow: None }],
            global: start.global,
            sources: start.sources.clone(),
            fires: 0,
        };
        let mut out = Outcomes::default();
        let mut seen = HashSet::new();
        let mut stack = vec![init];
        while let Some(m) = stack.pop() {
            if !seen.insert(m.clone()) {
                continue;
            }
            if seen.len() > state_budget {
                return Err(OracleError::StateBudgetExceeded(state_budget));
            }
            let base = &m.frames[0];
            let done = m.frames.len() == 1 && base.pending.is_none() && !nodes.contains(&base.node);
            let at_start = m.frames.len() == 1 && base.pending.is_none() && base.node == entry;
            let exited = m.frames.is_empty();
            let fire_here = match policy {
                FirePolicy::Anywhere => true,
                FirePolicy::Boundaries => done || at_start,
            };
            if fire_here && self.can_fire(&m) {
                for (n, _) in self.fire(&m) {
                    out.views.insert(self.global_view(&m));
                    stack.push(n);
                }
            }
            if done || exited {
                out.finals.insert(m.mem.clone());
                continue;
            }
            let top = m.frames.last().unwrap();
            let leaving_base = m.frames.len() == 1
                && top.pending.is_none()
                && matches!(self.c.pc.cfg(func).node(top.node).kind, NodeKind::Exit);
            if leaving_base {
                out.finals.insert(m.mem.clone());
                continue;
            }
            for s in self.step(&m)? {
                if let Step::Next(n, _) = s {
                    stack.push(n);
                }
            }
        }
        Ok(out)
    }
}

/// Check that every store and handler view reachable with interrupts
/// between the instructions of `fe` is also reachable with interrupts only
/// before or after it.
pub fn check_requirement1(prep: &Prepared, fe: FullExprId, starts: &[Snapshot], cfg: &OracleConfig) -> Result<Requirement1, OracleError> {
    let mut it = Interp::new(prep, cfg);
    let mut inside = Outcomes::default();
    let mut outside = Outcomes::default();
    for s in starts {
        let a = it.explore_expr(fe, s, FirePolicy::Anywhere, cfg.state_budget)?;
        let b = it.explore_expr(fe, s, FirePolicy::Boundaries, cfg.state_budget)?;
        inside.finals.extend(a.finals);
        inside.views.extend(a.views);
        outside.finals.extend(b.finals);
        outside.views.extend(b.views);
    }
    let program = &prep.program;
    let names: Vec<(String, usize)> = {
        let mut v = Vec::new();
        for (i, info) in program.vars.iter().enumerate() {
            if info.is_global() {
                let len = it.layout[i + 1] - it.layout[i];
                v.push((info.name.clone(), len));
            }
        }
        v
    };
    let uncovered_views: Vec<BTreeMap<String, i64>> = inside
        .views
        .difference(&outside.views)
        .map(|view| {
            let mut map = BTreeMap::new();
            let mut k = 0;
            for (n, len) in &names {
                if *len == 1 {
                    map.insert(n.clone(), view[k]);
                }
                k += len;
            }
            map
        })
        .collect();
    let uncovered_finals = inside.finals.difference(&outside.finals).count();
    Ok(Requirement1 { holds: uncovered_views.is_empty() && uncovered_finals == 0, uncovered_views, uncovered_finals })
}

/// Start stores for the expression check, from a full enumeration.
pub fn start_snapshots(reach: &Reachable, prep: &Prepared, fe: FullExprId) -> Vec<Snapshot> {
    let e = prep.pc.full_expr(fe);
    let mut out = BTreeSet::new();
    for n in &e.nodes {
        if let Some(s) = reach.snapshots.get(&(e.func, *n, Mode::Main)) {
            out.extend(s.iter().cloned());
        }
    }
    out.into_iter().collect()
}

/// Build a start store with the given global values (others zero).
pub fn snapshot_with(prep: &Prepared, values: &[(&str, i64)]) -> Snapshot {
    let it = Interp::new(prep, &OracleConfig::default());
    let mut m = it.initial();
    for (name, x) in values {
        let v = prep.program.global_by_name(name).expect("global");
        it.write(&mut m, v, 0, *x);
    }
    Snapshot { mem: m.mem, global: m.global, sources: m.sources }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Options;
    use crate::hardware::parse_hw_spec;
    use crate::pipeline::prepare;

    const UART: &str = include_str!("../corpus/uart.c");
    const AVR: &str = include_str!("../corpus/avr8.hw");
    const HW: &str = "[global]\natomic_bits = 8\nglobal_enable = 0x5F.7\nglobal_enable_initial = on\n\
        [source T]\nenable = 0x6E.0\nvector = T_vect\ninitial = on\n";

    fn prep(src: &str, hw: &str) -> Prepared {
        prepare(src, Some(parse_hw_spec(hw).unwrap()), &[]).unwrap()
    }

    fn fe_at(p: &Prepared, line: u32) -> FullExprId {
        p.pc.full_expr_at(line, None).unwrap().id
    }

    fn schedules(src: &str, line: u32) -> Vec<Vec<String>> {
        let p = prep(src, HW);
        let s = compile_schedules(&p, fe_at(&p, line), 64).unwrap();
        assert_eq!(s.len(), 1, "{:?}", s);
        s[0].iter().map(|o| o.iter().map(|i| i.to_string()).collect()).collect()
    }

    #[test]
    fn pre_increment_has_two_orders() {
        let s = schedules("uint8 a; uint8 b;\nvoid main() {\na = ++b;\n}", 3);
        assert_eq!(s.len(), 2, "{:?}", s);
        assert!(s.contains(&vec!["LOAD b".into(), "STORE b".into(), "STORE a".into()]));
        assert!(s.contains(&vec!["LOAD b".into(), "STORE a".into(), "STORE b".into()]));
    }

    #[test]
    fn constant_store_has_one_order() {
        assert_eq!(schedules("uint8 x;\nvoid main() {\nx = 1;\n}", 3), vec![vec!["STORE x".to_string()]]);
    }

    #[test]
    fn independent_loads_commute() {
        let s = schedules("uint8 a; uint8 b; uint8 c;\nvoid main() {\na = b + c;\n}", 3);
        assert_eq!(s.len(), 2, "{:?}", s);
    }

    #[test]
    fn wide_access_splits_low_first() {
        let s = schedules("uint16 t;\nvoid main() {\nt = 0x1FF;\n}", 3);
        assert_eq!(s, vec![vec!["STORE t.0".to_string(), "STORE t.1".into()]]);
    }

    #[test]
    fn too_many_orders_is_an_error() {
        let p = prep("uint8 a; uint8 b; uint8 c; uint8 d; uint8 e; uint8 f;\nvoid main() {\na = b + c + d + e + f;\n}", HW);
        assert!(matches!(
            compile_schedules(&p, fe_at(&p, 3), 64),
            Err(OracleError::ScheduleExplosion { count: 65, .. })
        ));
    }

    fn uart4() -> Prepared {
        prep(&UART.replace("RX0_SIZE = 16", "RX0_SIZE = 4"), AVR)
    }

    #[test]
    fn uart_indices_stay_in_bounds() {
        let p = uart4();
        let cfg = OracleConfig { isr_fires_max: 6, ..OracleConfig::default() };
        let r = enumerate_executions(&p, &cfg).unwrap();
        let out = p.program.global_by_name("rx_out").unwrap();
        let inn = p.program.global_by_name("rx_in").unwrap();
        let mut max = (0, 0);
        for sets in r.points.values() {
            max.0 = max.0.max(*sets[&out].keys().last().unwrap());
            max.1 = max.1.max(*sets[&inn].keys().last().unwrap());
        }
        assert_eq!(max, (3, 3));
        let res = p.analyze(Options::default()).unwrap();
        let c = check_containment(&p, &r, &res);
        assert!(c.checked > 0);
        assert!(c.holds(), "{:?}", &c.violations[..c.violations.len().min(5)]);
    }

    const TORN: &str = "uint16 t = 256;\nuint16 c;\nISR(T_vect) {\nif (t > 255) { t = t - 1; }\n}\nvoid main() {\nc = 1;\nc = vu16(t);\nc = c;\n}";

    #[test]
    fn torn_read_is_observed() {
        let p = prep(TORN, HW);
        let r = enumerate_executions(&p, &OracleConfig { isr_fires_max: 1, ..OracleConfig::default() }).unwrap();
        let main = p.program.func_by_name("main").unwrap();
        let at = p.pc.full_expr_at(9, None).unwrap().nodes[0];
        let c = p.program.global_by_name("c").unwrap();
        let seen: Vec<i64> = r.points[&(main, at, Mode::Main)][&c].keys().copied().collect();
        // Low byte read before the handler decrements, high byte after.
        assert_eq!(seen, vec![0, 255, 256]);
    }

    #[test]
    fn containment_catches_missing_havoc() {
        let p = prep(TORN, HW);
        let r = enumerate_executions(&p, &OracleConfig { isr_fires_max: 1, ..OracleConfig::default() }).unwrap();
        let sound = p.analyze(Options::default()).unwrap();
        let c0 = check_containment(&p, &r, &sound);
        assert!(c0.holds(), "{:?}", c0.violations);
        let broken = p.analyze(Options { havoc_shared: false, ..Options::default() }).unwrap();
        let c = check_containment(&p, &r, &broken);
        assert!(!c.holds());
        assert!(c.violations.iter().all(|v| !v.trace.is_empty()));
    }

    const PRE_INC: &str = "uint8 a;\nuint8 b;\nuint8 seen;\nISR(T_vect) {\nif (vu8(a) > vu8(b)) { seen = 1; }\n}\n\
        void main() {\nvu8(a) = ++vu8(b);\n}";

    #[test]
    fn pre_increment_breaks_the_interleaving_requirement() {
        let p = prep(PRE_INC, HW);
        let fe = fe_at(&p, 8);
        let starts: Vec<Snapshot> = [(0, 0), (0, 1), (1, 1), (3, 7)]
            .iter()
            .map(|(a, b)| snapshot_with(&p, &[("a", *a), ("b", *b)]))
            .collect();
        let cfg = OracleConfig { isr_fires_max: 1, ..OracleConfig::default() };
        let r = check_requirement1(&p, fe, &starts, &cfg).unwrap();
        assert!(!r.holds);
        assert!(r.uncovered_views.iter().any(|v| v["a"] > v["b"]), "{:?}", r.uncovered_views);
    }

    #[test]
    fn single_store_meets_the_interleaving_requirement() {
        let p = prep("uint8 a;\nuint8 b;\nISR(T_vect) {\nb = a;\n}\nvoid main() {\nuint8 x;\nvu8(a) = x + 1;\n}", HW);
        let fe = fe_at(&p, 8);
        let starts = vec![snapshot_with(&p, &[("a", 5)])];
        let r = check_requirement1(&p, fe, &starts, &OracleConfig::default()).unwrap();
        assert!(r.holds, "{:?}", r);
    }

    #[test]
    fn render_lists_values() {
        let p = prep("uint8 x;\nvoid main() {\nx = 3;\nx = x;\n}", HW);
        let r = enumerate_executions(&p, &OracleConfig::default()).unwrap();
        let text = render(&p.program, &r);
        assert!(text.contains("x = {3}"), "{}", text);
        assert!(text.ends_with("states explored\n"));
    }

    #[test]
    fn state_budget_is_enforced() {
        let p = uart4();
        let cfg = OracleConfig { isr_fires_max: 6, state_budget: 100, ..OracleConfig::default() };
        assert_eq!(enumerate_executions(&p, &cfg).unwrap_err(), OracleError::StateBudgetExceeded(100));
    }
}
