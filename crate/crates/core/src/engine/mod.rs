//! Fixed-point engine over octagons and interrupt flags.
//!
//! Functions are analysed on demand per (callee, call string, mode) with
//! their input restricted to the variables they can touch. ISR fixpoint
//! nodes fold every handler that may fire into the state until stable.

pub mod eval;
pub mod schedule;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::cfg::{NodeId, NodeKind, Place, ProgramCfg, Rv};
use crate::frontend::ast::{Builtin, CType, Callee, FuncId, Program, VarId};
use crate::hardware::{EnableTarget, Flag, HardwareSpec, InterruptState, StoreValue};
use crate::octagon::{DimensionMismatch, MemLoc, Octagon, Rhs, Sign};
use crate::pointer::{main_side, AccessSets, PointsTo, SharedSet};
use crate::report::WarningKind;

use eval::{to_type, Env};
use schedule::{schedule_isr_nodes, store_value, ScheduleCtx};

#[derive(Debug, Clone, PartialEq)]
pub struct AbsState {
    pub oct: Octagon,
    pub ints: InterruptState,
}

impl AbsState {
    pub fn is_bottom(&self) -> bool {
        self.oct.is_bottom()
    }

    pub fn to_bottom(&self) -> AbsState {
        AbsState { oct: self.oct.to_bottom(), ints: self.ints.clone() }
    }

    pub fn join(&self, o: &AbsState) -> AbsState {
        if self.is_bottom() {
            return o.clone();
        }
        if o.is_bottom() {
            return self.clone();
        }
        AbsState { oct: self.oct.join(&o.oct).expect("same dimensions"), ints: self.ints.join(&o.ints) }
    }

    pub fn widen(&self, o: &AbsState, thresholds: &[i64]) -> AbsState {
        if self.is_bottom() {
            return o.clone();
        }
        if o.is_bottom() {
            return self.clone();
        }
        let oct = self.oct.widen_with(&o.oct, thresholds).expect("same dimensions");
        AbsState { oct, ints: self.ints.join(&o.ints) }
    }

    pub fn leq(&self, o: &AbsState) -> bool {
        if self.is_bottom() {
            return true;
        }
        if o.is_bottom() {
            return false;
        }
        self.oct.leq(&o.oct).expect("same dimensions") && self.ints.leq(&o.ints)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Main,
    /// Inside a handler: interrupts are off and no handler can preempt.
    Isr,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key {
    pub func: FuncId,
    /// Most recent call sites, innermost last.
    pub ctx: Vec<(FuncId, NodeId)>,
    pub mode: Mode,
}

#[derive(Debug, Clone)]
pub struct Options {
    pub context_depth: usize,
    pub widening_delay: u32,
    pub max_visits: u64,
    /// When false the platform is treated as unknown: every shared access is
    /// non-atomic and interrupt flags are never known.
    pub hw_aware: bool,
    /// Havoc shared variables touched by a non-atomic or unordered full
    /// expression. Only switched off to check that the oracle notices.
    pub havoc_shared: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options { context_depth: 1, widening_delay: 2, max_visits: 100_000, hw_aware: true, havoc_shared: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Stats {
    pub isr_analyses: u64,
    pub isr_sites: usize,
    pub function_analyses: u64,
    pub memo_hits: u64,
    pub node_visits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("analysis did not converge within {0} node visits")]
    Diverged(u64),
    #[error("program has no entry function")]
    NoEntry,
    #[error("internal dimension mismatch")]
    Dimension,
}

impl From<DimensionMismatch> for EngineError {
    fn from(_: DimensionMismatch) -> Self {
        EngineError::Dimension
    }
}

/// Effect of the shared-access table at one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dispatch {
    pub kinds: Vec<WarningKind>,
    pub vars: BTreeSet<VarId>,
    pub havoc: BTreeSet<VarId>,
}

struct Memo {
    input: AbsState,
    output: AbsState,
    runs: u32,
}

pub struct Analyzer<'a> {
    pub program: &'a Program,
    pub pc: &'a ProgramCfg,
    pub hw: &'a HardwareSpec,
    pub access: &'a AccessSets,
    pub shared: &'a SharedSet,
    pub isrs: Vec<FuncId>,
    pub opts: Options,
    env: Env<'a>,
    isr_keep: BTreeSet<MemLoc>,
    isr_writes: BTreeSet<MemLoc>,
    memo: HashMap<Key, Memo>,
    thresholds: Vec<i64>,
    records: BTreeMap<Key, Vec<Option<AbsState>>>,
    pub stats: Stats,
}

/// Everything the reporting side needs after a run.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    /// CFGs with ISR fixpoint nodes inserted.
    pub pc: ProgramCfg,
    /// Pre-state of every node per analysis key.
    pub contexts: BTreeMap<Key, Vec<Option<AbsState>>>,
    pub stats: Stats,
}

impl AnalysisResult {
    /// Pre-states of one function in one mode, joined over contexts.
    pub fn node_states(&self, f: FuncId, mode: Mode) -> Vec<Option<AbsState>> {
        let mut out: Vec<Option<AbsState>> = vec![None; self.pc.cfg(f).nodes.len()];
        for (k, states) in &self.contexts {
            if k.func != f || k.mode != mode {
                continue;
            }
            for (slot, s) in out.iter_mut().zip(states) {
                if let Some(s) = s {
                    *slot = Some(match slot.take() {
                        Some(cur) => cur.join(s),
                        None => s.clone(),
                    });
                }
            }
        }
        out
    }
}

/// Lower-level inputs prepared by the driver.
pub struct Inputs<'a> {
    pub program: &'a Program,
    pub pc: &'a ProgramCfg,
    pub hw: &'a HardwareSpec,
    pub pts: &'a PointsTo,
    pub access: &'a AccessSets,
    pub shared: &'a SharedSet,
    pub isrs: Vec<FuncId>,
}

/// Insert ISR fixpoint nodes.
pub fn schedule(inputs: &Inputs, opts: &Options) -> (ProgramCfg, usize) {
    let ms = main_side(inputs.program, inputs.access);
    let cx = ScheduleCtx {
        program: inputs.program,
        hw: inputs.hw,
        shared: inputs.shared,
        main_side: &ms,
        hw_aware: opts.hw_aware,
    };
    schedule_isr_nodes(&cx, inputs.pc)
}

/// Run the whole analysis from the entry function.
pub fn analyze_program(inputs: &Inputs, opts: Options) -> Result<AnalysisResult, EngineError> {
    let (pc, sites) = schedule(inputs, &opts);
    let mut a = Analyzer::new(inputs, &pc, opts);
    a.stats.isr_sites = sites;
    a.run()?;
    Ok(AnalysisResult { contexts: std::mem::take(&mut a.records), stats: a.stats.clone(), pc: pc.clone() })
}

impl<'a> Analyzer<'a> {
    pub fn new(inputs: &Inputs<'a>, pc: &'a ProgramCfg, opts: Options) -> Self {
        let program = inputs.program;
        let env = Env { program, hw: inputs.hw, pts: inputs.pts, hw_aware: opts.hw_aware };
        let mut a = Analyzer {
            program,
            pc,
            hw: inputs.hw,
            access: inputs.access,
            shared: inputs.shared,
            isrs: inputs.isrs.clone(),
            opts,
            env,
            isr_keep: BTreeSet::new(),
            isr_writes: BTreeSet::new(),
            memo: HashMap::new(),
            thresholds: widening_thresholds(program, pc),
            records: BTreeMap::new(),
            stats: Stats::default(),
        };
        for i in a.isrs.clone() {
            a.isr_keep.extend(a.keep_globals(i, Mode::Isr));
            let w: Vec<MemLoc> = a.access.of(i).writes.iter().copied().filter(|m| a.tracked_global(m.0)).collect();
            a.isr_writes.extend(w);
        }
        a
    }

    fn tracked(&self, v: VarId) -> bool {
        let info = self.program.var(v);
        info.const_value.is_none() && info.ctype.element().is_int()
    }

    fn tracked_global(&self, v: VarId) -> bool {
        self.program.var(v).is_global() && self.tracked(v)
    }

    fn dims(&self, vars: impl IntoIterator<Item = VarId>) -> Vec<(MemLoc, (i64, i64))> {
        vars.into_iter().filter(|v| self.tracked(*v)).map(|v| (MemLoc(v), self.env.dim_range(v))).collect()
    }

    fn locals(&self, f: FuncId) -> Vec<VarId> {
        self.program.func(f).locals.clone()
    }

    /// Globals a function analysis must see.
    fn keep_globals(&self, f: FuncId, mode: Mode) -> BTreeSet<MemLoc> {
        let mut k: BTreeSet<MemLoc> = self.access.of(f).all().into_iter().filter(|m| self.tracked_global(m.0)).collect();
        if mode == Mode::Main {
            k.extend(self.isr_keep.iter().copied());
        }
        k
    }

    fn may_fire(&self, ints: &InterruptState, isr: FuncId) -> bool {
        if !self.opts.hw_aware {
            return true;
        }
        let vector = self.program.func(isr).isr_vector.as_deref().unwrap_or_default();
        self.hw.source_by_vector(vector).is_some_and(|s| ints.can_fire(&s.name))
    }

    fn initial_ints(&self) -> InterruptState {
        if self.opts.hw_aware {
            InterruptState::initial(self.hw)
        } else {
            InterruptState { global: Flag::Unknown, sources: BTreeMap::new() }
        }
    }

    pub fn initial_state(&self) -> Result<AbsState, EngineError> {
        let main = self.program.entry_id().ok_or(EngineError::NoEntry)?;
        let globals: Vec<VarId> =
            (0..self.program.vars.len() as u32).map(VarId).filter(|v| self.tracked_global(*v)).collect();
        let mut vars = globals.clone();
        vars.extend(self.locals(main));
        let mut oct = Octagon::top(&self.dims(vars));
        let inits: BTreeMap<VarId, i64> = self
            .program
            .globals
            .iter()
            .filter_map(|d| match (&d.id, &d.init) {
                (Some(id), Some(e)) => match e.kind {
                    crate::frontend::ast::ExprKind::Const(c) => Some((*id, c)),
                    _ => None,
                },
                _ => None,
            })
            .collect();
        for g in globals {
            let info = self.program.var(g);
            if info.absolute_address.is_some() {
                continue;
            }
            let v = inits.get(&g).copied().unwrap_or(0);
            oct.havoc(MemLoc(g), v, v);
        }
        Ok(AbsState { oct, ints: self.initial_ints() })
    }

    pub fn run(&mut self) -> Result<AbsState, EngineError> {
        let main = self.program.entry_id().ok_or(EngineError::NoEntry)?;
        let s = self.initial_state()?;
        self.analyze_function(main, s, Vec::new(), Mode::Main)
    }

    fn tick(&mut self) -> Result<(), EngineError> {
        self.stats.node_visits += 1;
        if self.stats.node_visits > self.opts.max_visits {
            return Err(EngineError::Diverged(self.opts.max_visits));
        }
        Ok(())
    }

    pub fn analyze_function(
        &mut self,
        f: FuncId,
        input: AbsState,
        ctx: Vec<(FuncId, NodeId)>,
        mode: Mode,
    ) -> Result<AbsState, EngineError> {
        let key = Key { func: f, ctx, mode };
        let (input, runs) = match self.memo.get(&key) {
            Some(m) if input.leq(&m.input) => {
                self.stats.memo_hits += 1;
                return Ok(m.output.clone());
            }
            Some(m) => {
                let j = m.input.join(&input);
                (if m.runs >= 3 { m.input.widen(&j, &self.thresholds) } else { j }, m.runs)
            }
            None => (input, 0),
        };
        self.stats.function_analyses += 1;
        let (exit, pre) = self.fixpoint(f, &input, &key.ctx, mode)?;
        self.memo.insert(key.clone(), Memo { input, output: exit.clone(), runs: runs + 1 });
        self.records.insert(key, pre);
        Ok(exit)
    }

    fn incoming(
        &self,
        f: FuncId,
        preds: &[Vec<NodeId>],
        post: &[Vec<Option<AbsState>>],
        id: NodeId,
        input: &AbsState,
    ) -> Option<AbsState> {
        let cfg = self.pc.cfg(f);
        if id == cfg.entry {
            return Some(input.clone());
        }
        let mut acc: Option<AbsState> = None;
        for p in &preds[id.0 as usize] {
            for (k, s) in cfg.node(*p).succs.iter().enumerate() {
                if *s != id {
                    continue;
                }
                if let Some(st) = &post[p.0 as usize][k] {
                    acc = Some(match acc {
                        Some(a) => a.join(st),
                        None => st.clone(),
                    });
                }
            }
        }
        acc
    }

    /// Intra-procedural worklist: widening at loop heads, then one
    /// descending pass. Returns the exit state and every node's pre-state.
    fn fixpoint(
        &mut self,
        f: FuncId,
        input: &AbsState,
        ctx: &[(FuncId, NodeId)],
        mode: Mode,
    ) -> Result<(AbsState, Vec<Option<AbsState>>), EngineError> {
        let pc = self.pc;
        let cfg = pc.cfg(f);
        let rpo = cfg.rpo();
        let mut pos = vec![usize::MAX; cfg.nodes.len()];
        for (i, n) in rpo.iter().enumerate() {
            pos[n.0 as usize] = i;
        }
        let heads = cfg.loop_heads();
        let preds = cfg.preds();
        let mut pre: Vec<Option<AbsState>> = vec![None; cfg.nodes.len()];
        let mut post: Vec<Vec<Option<AbsState>>> = cfg.nodes.iter().map(|n| vec![None; n.succs.len()]).collect();
        let mut updates = vec![0u32; cfg.nodes.len()];
        let mut work = BTreeSet::from([pos[cfg.entry.0 as usize]]);
        while let Some(i) = work.pop_first() {
            let id = rpo[i];
            self.tick()?;
            let Some(mut new) = self.incoming(f, &preds, &post, id, input) else { continue };
            if let Some(old) = &pre[id.0 as usize] {
                let joined = old.join(&new);
                new = if heads.contains(&id) {
                    updates[id.0 as usize] += 1;
                    if updates[id.0 as usize] > self.opts.widening_delay {
                        old.widen(&joined, &self.thresholds)
                    } else {
                        joined
                    }
                } else {
                    joined
                };
                if new.leq(old) {
                    continue;
                }
            }
            pre[id.0 as usize] = Some(new.clone());
            let outs = self.transfer(f, id, &new, ctx, mode)?;
            for (k, o) in outs.into_iter().enumerate() {
                post[id.0 as usize][k] = Some(o);
                let s = cfg.node(id).succs[k];
                work.insert(pos[s.0 as usize]);
            }
        }
        for &id in &rpo {
            self.tick()?;
            let Some(new) = self.incoming(f, &preds, &post, id, input) else { continue };
            pre[id.0 as usize] = Some(new.clone());
            let outs = self.transfer(f, id, &new, ctx, mode)?;
            for (k, o) in outs.into_iter().enumerate() {
                post[id.0 as usize][k] = Some(o);
            }
        }
        let exit = pre[cfg.exit.0 as usize].clone().unwrap_or_else(|| input.to_bottom());
        Ok((exit, pre))
    }

    /// Shared-access table for a main-side node.
    pub fn dispatch(&self, f: FuncId, id: NodeId, pre: &AbsState) -> Option<Dispatch> {
        dispatch(self.program, self.pc, self.hw, self.access, self.shared, &self.isrs, self.opts.hw_aware, f, id, pre)
    }

    fn transfer(
        &mut self,
        f: FuncId,
        id: NodeId,
        pre: &AbsState,
        ctx: &[(FuncId, NodeId)],
        mode: Mode,
    ) -> Result<Vec<AbsState>, EngineError> {
        let pc = self.pc;
        let node = pc.cfg(f).node(id);
        if pre.is_bottom() {
            return Ok(vec![pre.clone(); node.succs.len()]);
        }
        let mut st = pre.clone();
        let disp = if mode == Mode::Main { self.dispatch(f, id, &st) } else { None };
        if let Some(d) = &disp {
            self.havoc(&mut st, &d.havoc);
        }
        let mut outs = match &node.kind {
            NodeKind::Entry | NodeKind::Exit | NodeKind::Nop => vec![st],
            NodeKind::Assign { dst, ty, src, .. } => {
                self.assign(&mut st, dst, ty, src);
                vec![st]
            }
            NodeKind::Guard(rv) => {
                let t = AbsState { oct: self.env.refine(&st.oct, rv, true), ints: st.ints.clone() };
                let e = AbsState { oct: self.env.refine(&st.oct, rv, false), ints: st.ints };
                vec![t, e]
            }
            NodeKind::Call { callee, args, result } => vec![self.call(f, id, st, callee, args, *result, ctx, mode)?],
            NodeKind::Return(rv) => {
                if let (Some(rv), Some(slot)) = (rv, self.program.func(f).ret_slot) {
                    let ty = self.program.var(slot).ctype.clone();
                    self.assign(&mut st, &Place::Var(slot), &ty, rv);
                }
                vec![st]
            }
            NodeKind::IsrFixpoint => {
                if mode == Mode::Main {
                    vec![self.isr_fixpoint(st)?]
                } else {
                    vec![st]
                }
            }
        };
        outs.truncate(node.succs.len());
        if let Some(d) = &disp {
            for o in &mut outs {
                self.havoc(o, &d.havoc);
            }
        }
        Ok(outs)
    }

    fn havoc(&self, st: &mut AbsState, vars: &BTreeSet<VarId>) {
        if !self.opts.havoc_shared {
            return;
        }
        for v in vars {
            if st.oct.contains_var(MemLoc(*v)) {
                let (lo, hi) = self.env.dim_range(*v);
                st.oct.havoc(MemLoc(*v), lo, hi);
            }
        }
    }

    fn assign(&self, st: &mut AbsState, dst: &Place, ty: &CType, src: &Rv) {
        if !ty.is_int() {
            return;
        }
        match dst {
            Place::Var(x) => {
                if st.oct.contains_var(MemLoc(*x)) {
                    let rhs = self.env.rhs(&st.oct, src, ty);
                    st.oct.assign(MemLoc(*x), rhs);
                }
                if self.opts.hw_aware {
                    let addr = self.program.var(*x).absolute_address;
                    if self.hw.is_enable_register(addr) {
                        let mut sv = store_value(dst, src);
                        if sv == StoreValue::Opaque {
                            let (lo, hi) = self.env.interval(&st.oct, src);
                            sv = StoreValue::Range(lo, hi);
                        }
                        for (t, flag) in self.hw.store_effect(addr, &sv) {
                            st.ints.set(&t, flag);
                        }
                    }
                }
            }
            Place::Index(a, _) => {
                if st.oct.contains_var(MemLoc(*a)) {
                    let (lo, hi) = to_type(self.env.interval(&st.oct, src), ty);
                    st.oct.weak_assign(MemLoc(*a), Rhs::Interval(lo, hi));
                }
            }
            Place::Deref(p, _) => {
                let targets: Vec<VarId> =
                    self.env.pts.values(p).into_iter().filter(|t| st.oct.contains_var(MemLoc(*t))).collect();
                let single = targets.len() == 1 && !self.program.var(targets[0]).is_array();
                let strong_rhs = self.env.rhs(&st.oct, src, ty);
                let (lo, hi) = to_type(self.env.interval(&st.oct, src), ty);
                for t in targets {
                    if single {
                        st.oct.assign(MemLoc(t), strong_rhs);
                    } else {
                        st.oct.weak_assign(MemLoc(t), Rhs::Interval(lo, hi));
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn call(
        &mut self,
        f: FuncId,
        id: NodeId,
        mut st: AbsState,
        callee: &Callee,
        args: &[Rv],
        result: Option<VarId>,
        ctx: &[(FuncId, NodeId)],
        mode: Mode,
    ) -> Result<AbsState, EngineError> {
        let g = match callee {
            Callee::Builtin(b) => {
                if self.opts.hw_aware {
                    let flag = if *b == Builtin::Sei { Flag::Enabled } else { Flag::Disabled };
                    st.ints.set(&EnableTarget::Global, flag);
                }
                return Ok(st);
            }
            Callee::Func(g) => *g,
        };
        let def = self.program.func(g);
        let callee_vars = self.locals(g);
        let mut ext = st.oct.extend(&self.dims(callee_vars.iter().copied()));
        for (p, a) in def.params.iter().zip(args) {
            let Some(pid) = p.id else { continue };
            if ext.contains_var(MemLoc(pid)) {
                let ty = self.program.var(pid).ctype.clone();
                let rhs = self.env.rhs(&ext, a, &ty);
                ext.assign(MemLoc(pid), rhs);
            }
        }
        let mut keep: BTreeSet<MemLoc> =
            self.keep_globals(g, mode).into_iter().filter(|m| ext.contains_var(*m)).collect();
        let locals: BTreeSet<MemLoc> = callee_vars.iter().map(|v| MemLoc(*v)).filter(|m| ext.contains_var(*m)).collect();
        keep.extend(locals.iter().copied());
        let input = AbsState { oct: ext.restrict(&keep), ints: st.ints.clone() };
        let mut new_ctx = ctx.to_vec();
        new_ctx.push((f, id));
        let drop = new_ctx.len().saturating_sub(self.opts.context_depth);
        new_ctx.drain(..drop);
        let out = self.analyze_function(g, input, new_ctx, mode)?;
        if out.is_bottom() {
            return Ok(st.to_bottom());
        }
        let mut modified: BTreeSet<MemLoc> =
            self.access.of(g).writes.iter().copied().filter(|m| keep.contains(m)).collect();
        if mode == Mode::Main {
            modified.extend(self.isr_writes.iter().filter(|m| keep.contains(m)));
        }
        modified.extend(locals.iter().copied());
        let mut merged = ext.embed(&out.oct, &modified)?;
        if let (Some(r), Some(slot)) = (result, def.ret_slot) {
            if merged.contains_var(MemLoc(r)) && merged.contains_var(MemLoc(slot)) {
                merged.assign(MemLoc(r), Rhs::Var { sign: Sign::Pos, y: MemLoc(slot), c: 0 });
            }
        }
        let caller: BTreeSet<MemLoc> = st.oct.vars().iter().copied().collect();
        Ok(AbsState { oct: merged.restrict(&caller), ints: out.ints })
    }

    fn isr_fixpoint(&mut self, s: AbsState) -> Result<AbsState, EngineError> {
        let mut cur = s;
        let mut round = 0;
        loop {
            let mut next = cur.clone();
            for i in self.isrs.clone() {
                if self.may_fire(&cur.ints, i) {
                    let r = self.analyze_isr(i, &cur)?;
                    next = next.join(&r);
                }
            }
            if next.leq(&cur) {
                return Ok(cur);
            }
            round += 1;
            cur = if round > 3 { cur.widen(&next, &self.thresholds) } else { next };
        }
    }

    fn analyze_isr(&mut self, i: FuncId, s: &AbsState) -> Result<AbsState, EngineError> {
        self.stats.isr_analyses += 1;
        let keep: BTreeSet<MemLoc> = self.keep_globals(i, Mode::Isr).into_iter().filter(|m| s.oct.contains_var(*m)).collect();
        let small = s.oct.restrict(&keep).extend(&self.dims(self.locals(i)));
        let mut ints = s.ints.clone();
        ints.set(&EnableTarget::Global, Flag::Disabled);
        let out = self.analyze_function(i, AbsState { oct: small, ints }, Vec::new(), Mode::Isr)?;
        if out.is_bottom() {
            return Ok(s.to_bottom());
        }
        let exit = out.oct.restrict(&keep);
        let modified: BTreeSet<MemLoc> = self.access.of(i).writes.iter().copied().filter(|m| keep.contains(m)).collect();
        let oct = s.oct.embed(&exit, &modified)?;
        let mut ints = out.ints;
        ints.set(&EnableTarget::Global, s.ints.global);
        Ok(AbsState { oct, ints })
    }
}

/// Constants of the program and their neighbours, both signs, ascending.
pub fn widening_thresholds(program: &Program, pc: &ProgramCfg) -> Vec<i64> {
    fn rv(r: &Rv, out: &mut BTreeSet<i64>) {
        match r {
            Rv::Const(c) => {
                out.insert(*c);
            }
            Rv::Load { place, .. } | Rv::AddrOf(place) => place_consts(place, out),
            Rv::Unary(_, a, _) => rv(a, out),
            Rv::Binary(_, a, b, _) => {
                rv(a, out);
                rv(b, out);
            }
        }
    }
    fn place_consts(p: &Place, out: &mut BTreeSet<i64>) {
        match p {
            Place::Var(_) => {}
            Place::Index(_, i) => rv(i, out),
            Place::Deref(q, _) => rv(q, out),
        }
    }
    let mut cs = BTreeSet::new();
    for cfg in pc.funcs.values() {
        for n in &cfg.nodes {
            match &n.kind {
                NodeKind::Assign { dst, src, .. } => {
                    place_consts(dst, &mut cs);
                    rv(src, &mut cs);
                }
                NodeKind::Guard(r) | NodeKind::Return(Some(r)) => rv(r, &mut cs),
                NodeKind::Call { args, .. } => args.iter().for_each(|a| rv(a, &mut cs)),
                _ => {}
            }
        }
    }
    for v in &program.vars {
        if let Some(c) = v.const_value {
            cs.insert(c);
        }
        if let CType::Array(_, n) = v.ctype {
            cs.insert(n as i64);
        }
    }
    let mut out = BTreeSet::new();
    for c in cs {
        for d in [c - 1, c, c + 1] {
            out.insert(d);
            out.insert(-d);
        }
    }
    out.into_iter().collect()
}

/// Shared-access handling of one main-side node, or `None` when the node
/// touches no shared data or no handler touching it can fire.
#[allow(clippy::too_many_arguments)]
pub fn dispatch(
    program: &Program,
    pc: &ProgramCfg,
    hw: &HardwareSpec,
    access: &AccessSets,
    shared: &SharedSet,
    isrs: &[FuncId],
    hw_aware: bool,
    f: FuncId,
    id: NodeId,
    pre: &AbsState,
) -> Option<Dispatch> {
    let node = pc.cfg(f).node(id);
    let here: BTreeSet<VarId> =
        node.reads.iter().chain(node.writes.iter()).map(|m| m.0).filter(|v| shared.contains(*v)).collect();
    if here.is_empty() {
        return None;
    }
    let fires = isrs.iter().any(|i| {
        let can = if hw_aware {
            let vector = program.func(*i).isr_vector.as_deref().unwrap_or_default();
            hw.source_by_vector(vector).is_some_and(|s| pre.ints.can_fire(&s.name))
        } else {
            true
        };
        can && access.of(*i).all().iter().any(|m| here.contains(&m.0))
    });
    if !fires {
        return None;
    }
    let fe = node.full_expr.map(|x| pc.full_expr(x));
    let mut fe_vars = BTreeSet::new();
    if let Some(fe) = fe {
        let cfg = pc.cfg(f);
        for n in &fe.nodes {
            let nd = cfg.node(*n);
            fe_vars.extend(nd.reads.iter().chain(nd.writes.iter()).map(|m| m.0).filter(|v| shared.contains(*v)));
        }
    }
    fe_vars.extend(here.iter().copied());
    let non_atomic = !hw_aware || here.iter().any(|v| !hw.is_atomic_access(&program.var(*v).ctype));
    let well_formed = fe.is_none_or(|fe| fe.well_formed());
    let write_write = node.writes.iter().any(|m| shared.isr_written.contains(&m.0));
    let mut kinds = Vec::new();
    if hw_aware {
        if non_atomic {
            kinds.push(WarningKind::NonAtomicAccess);
        } else if !well_formed {
            kinds.push(WarningKind::UnspecifiedOrder);
        } else if write_write {
            kinds.push(WarningKind::DataLoss);
        }
    } else {
        kinds.push(WarningKind::NonAtomicAccess);
        if !well_formed {
            kinds.push(WarningKind::UnspecifiedOrder);
        } else if write_write {
            kinds.push(WarningKind::DataLoss);
        }
    }
    let havoc = if non_atomic || !well_formed { fe_vars } else { BTreeSet::new() };
    Some(Dispatch { kinds, vars: here, havoc })
}

/// Intervals, relations and interrupt flags of a state, one item per line.
pub fn fmt_state(program: &Program, s: &AbsState) -> String {
    use std::fmt::Write;
    if s.is_bottom() {
        return "unreachable\n".into();
    }
    let name = |m: MemLoc| program.var(m.0).display_name(program);
    let mut out = String::new();
    for m in s.oct.vars() {
        if let Some((lo, hi)) = s.oct.bounds(*m) {
            writeln!(out, "  {} in [{}, {}]", name(*m), lo, hi).unwrap();
        }
    }
    for (sx, x, sy, y, c) in s.oct.relations() {
        let a = if sx == Sign::Pos { "" } else { "-" };
        let b = if sy == Sign::Pos { "+" } else { "-" };
        writeln!(out, "  {}{} {} {} <= {}", a, name(x), b, name(y), c).unwrap();
    }
    write!(out, "  interrupts: global {}", s.ints.global).unwrap();
    for (src, f) in &s.ints.sources {
        write!(out, ", {} {}", src, f).unwrap();
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardware::parse_hw_spec;
    use crate::pipeline::{prepare, Prepared};
    use crate::report::{build_report, WarningKind};

    const UART: &str = include_str!("../../corpus/uart.c");
    const AVR: &str = include_str!("../../corpus/avr8.hw");

    fn prep(src: &str) -> Prepared {
        prepare(src, Some(parse_hw_spec(AVR).unwrap()), &[]).unwrap()
    }

    /// Interval of `var` in the pre-state of the first node of `func`
    /// whose span starts on `line`.
    fn bounds_at(p: &Prepared, r: &AnalysisResult, func: &str, line: u32, var: &str, mode: Mode) -> (i64, i64) {
        let f = p.program.func_by_name(func).unwrap();
        let states = r.node_states(f, mode);
        let cfg = r.pc.cfg(f);
        let v = p.program.func(f).locals.iter().copied().find(|v| p.program.var(*v).name == var);
        let v = v.or_else(|| p.program.global_by_name(var)).unwrap();
        let id = cfg.ids().find(|id| cfg.node(*id).span.line == line && states[id.0 as usize].is_some()).unwrap();
        states[id.0 as usize].as_ref().unwrap().oct.bounds(MemLoc(v)).unwrap()
    }

    fn line_of(src: &str, needle: &str) -> u32 {
        src.lines().position(|l| l.contains(needle)).unwrap() as u32 + 1
    }

    #[test]
    fn uart_index_bounds() {
        let p = prep(UART);
        let r = p.analyze(Options::default()).unwrap();
        let line = line_of(UART, "data = vu8(rx_buff[rx_out])");
        assert_eq!(bounds_at(&p, &r, "getByte", line, "rx_out", Mode::Main), (0, 15));
        let line = line_of(UART, "rx_buff[rx_in] = UDR");
        assert_eq!(bounds_at(&p, &r, "USART0_RX_vect", line, "rx_in", Mode::Isr), (0, 15));
        let line = line_of(UART, "return pos;");
        assert_eq!(bounds_at(&p, &r, "getNextPos", line, "pos", Mode::Main), (1, 15));
        assert!(r.stats.isr_analyses >= r.stats.isr_sites as u64);
        let rep = build_report(&p, &r, "uart.c");
        assert_eq!(rep.count(WarningKind::ArrayOutOfBounds), 0, "{:?}", rep.warnings);
        assert_eq!(rep.warnings.len(), 1, "{:?}", rep.warnings);
        assert_eq!(rep.warnings[0].kind, WarningKind::DataLoss);
    }

    #[test]
    fn cli_first_blocks_handlers() {
        let src = "uint8 x; ISR(TIMER0_OVF_vect) { x = 1; }
            void main() { cli(); while (1) { x = vu8(x) + 1; } }";
        let p = prep(src);
        let r = p.analyze(Options::default()).unwrap();
        assert_eq!(r.stats.isr_analyses, 0);
    }

    #[test]
    fn atomic_section_has_no_fixpoint_inside() {
        let src = "uint8 TIE @ 0x6E.0; uint8 x;
            ISR(TIMER0_OVF_vect) { x = 0; }
            void main() { TIE = 1; while (1) { cli(); vu8(x) = vu8(x) + 1; sei(); } }";
        let p = prep(src);
        let (pc, _) = schedule(&p.inputs(), &Options::default());
        let main = pc.cfg(p.program.entry_id().unwrap());
        for id in main.ids() {
            let n = main.node(id);
            if n.writes.iter().any(|m| p.program.var(m.0).name == "x") {
                let next = main.node(n.succs[0]);
                assert!(!matches!(next.kind, NodeKind::IsrFixpoint));
            }
        }
    }

    #[test]
    fn two_handlers_saturating_counter() {
        let src = "uint8 A @ 0x6E.0; uint8 B @ 0x3D.0; uint8 cnt; uint8 seen;
            ISR(TIMER0_OVF_vect) { if (cnt < 10) { cnt = cnt + 1; } }
            ISR(INT0_vect) { if (cnt < 10) { cnt = cnt + 2; } }
            void main() { A = 1; B = 1; while (1) { seen = vu8(cnt); } }";
        let p = prep(src);
        let r = p.analyze(Options::default()).unwrap();
        let main = p.program.entry_id().unwrap();
        let states = r.node_states(main, Mode::Main);
        let cnt = p.program.global_by_name("cnt").unwrap();
        let hi = states.iter().flatten().filter(|s| !s.is_bottom()).map(|s| s.oct.bounds(MemLoc(cnt)).unwrap().1).max().unwrap();
        assert_eq!(hi, 11);
    }

    #[test]
    fn unordered_full_expression_havocs() {
        let src = "uint8 T @ 0x6E.0; uint8 a; uint8 b; uint8 s;
            ISR(TIMER0_OVF_vect) { s = vu8(a) + vu8(b); }
            void main() { T = 1; vu8(a) = 1; vu8(b) = 1; vu8(a) = ++vu8(b); }";
        let p = prep(src);
        let r = p.analyze(Options::default()).unwrap();
        let main = p.program.entry_id().unwrap();
        let a = p.program.global_by_name("a").unwrap();
        let states = r.node_states(main, Mode::Main);
        let cfg = r.pc.cfg(main);
        let exit = states[cfg.exit.0 as usize].as_ref().unwrap();
        assert_eq!(exit.oct.bounds(MemLoc(a)), Some((0, 255)));
        let rep = build_report(&p, &r, "t.c");
        assert_eq!(rep.count(WarningKind::UnspecifiedOrder), 1, "{:?}", rep.warnings);
    }

    #[test]
    fn pure_call_is_memoized() {
        let src = "uint8 x; uint8 inc(uint8 v) { return v + 1; }
            void main() { x = inc(3); x = inc(3); }";
        let p = prep(src);
        let opts = Options { context_depth: 0, ..Options::default() };
        let r = p.analyze(opts).unwrap();
        assert!(r.stats.memo_hits >= 1);
        let main = p.program.entry_id().unwrap();
        let cfg = r.pc.cfg(main);
        let x = p.program.global_by_name("x").unwrap();
        let exit = r.node_states(main, Mode::Main)[cfg.exit.0 as usize].clone().unwrap();
        assert_eq!(exit.oct.bounds(MemLoc(x)), Some((4, 4)));
    }
}
