//! Flow-insensitive points-to analysis, per-function access sets and the
//! set of variables shared between main and interrupt handlers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use crate::cfg::{NodeId, NodeKind, Place, ProgramCfg, Rv};
use crate::frontend::ast::{Callee, FuncId, Program, VarId};
use crate::frontend::resolve::call_graph;
use crate::hardware::{HardwareSpec, RegisterSemantics};
use crate::octagon::MemLoc;

/// Inclusion-based points-to sets for every location that holds addresses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PointsTo {
    pub map: BTreeMap<VarId, BTreeSet<VarId>>,
}

impl PointsTo {
    pub fn of(&self, v: VarId) -> BTreeSet<VarId> {
        self.map.get(&v).cloned().unwrap_or_default()
    }

    /// Locations a place may denote.
    pub fn locs(&self, place: &Place) -> BTreeSet<VarId> {
        match place {
            Place::Var(v) | Place::Index(v, _) => BTreeSet::from([*v]),
            Place::Deref(r, _) => self.values(r),
        }
    }

    /// Addresses an rvalue may evaluate to.
    pub fn values(&self, rv: &Rv) -> BTreeSet<VarId> {
        match rv {
            Rv::Load { place, ty, .. } if ty.is_ptr() => {
                self.locs(place).into_iter().flat_map(|l| self.of(l)).collect()
            }
            Rv::AddrOf(place) => self.locs(place),
            _ => BTreeSet::new(),
        }
    }

    fn add(&mut self, to: VarId, vals: BTreeSet<VarId>) -> bool {
        if vals.is_empty() {
            return false;
        }
        let e = self.map.entry(to).or_default();
        let before = e.len();
        e.extend(vals);
        e.len() != before
    }
}

pub fn compute_points_to(program: &Program, pc: &ProgramCfg) -> PointsTo {
    let mut pts = PointsTo::default();
    loop {
        let mut changed = false;
        for (f, cfg) in &pc.funcs {
            for n in &cfg.nodes {
                match &n.kind {
                    NodeKind::Assign { dst, src, ty, .. } if ty.is_ptr() || ty.element().is_ptr() => {
                        let vals = pts.values(src);
                        for l in pts.locs(dst) {
                            changed |= pts.add(l, vals.clone());
                        }
                    }
                    NodeKind::Call { callee: Callee::Func(g), args, result } => {
                        let def = program.func(*g);
                        for (p, a) in def.params.iter().zip(args) {
                            if let Some(pid) = p.id {
                                changed |= pts.add(pid, pts.values(a));
                            }
                        }
                        if let (Some(r), Some(slot)) = (result, def.ret_slot) {
                            changed |= pts.add(*r, pts.of(slot));
                        }
                    }
                    NodeKind::Return(Some(rv)) => {
                        if let Some(slot) = program.func(*f).ret_slot {
                            changed |= pts.add(slot, pts.values(rv));
                        }
                    }
                    _ => {}
                }
            }
        }
        if !changed {
            return pts;
        }
    }
}

/// Fill the per-node read/write sets.
pub fn annotate_accesses(program: &Program, pc: &mut ProgramCfg, pts: &PointsTo) {
    for (f, cfg) in pc.funcs.iter_mut() {
        let ret_slot = program.func(*f).ret_slot;
        for n in cfg.nodes.iter_mut() {
            let mut reads = BTreeSet::new();
            n.visit_reads(&mut |p, _| reads.extend(pts.locs(p).into_iter().map(MemLoc)));
            let writes: BTreeSet<MemLoc> = match &n.kind {
                NodeKind::Assign { dst, .. } => pts.locs(dst).into_iter().map(MemLoc).collect(),
                NodeKind::Call { result: Some(r), .. } => BTreeSet::from([MemLoc(*r)]),
                NodeKind::Return(Some(_)) => ret_slot.into_iter().map(MemLoc).collect(),
                _ => BTreeSet::new(),
            };
            n.reads = reads;
            n.writes = writes;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuncAccess {
    pub reads: BTreeSet<MemLoc>,
    pub writes: BTreeSet<MemLoc>,
}

impl FuncAccess {
    pub fn all(&self) -> BTreeSet<MemLoc> {
        self.reads.union(&self.writes).copied().collect()
    }
}

/// Per-function access sets. Own locals plus every global touched by the
/// function or any callee.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessSets {
    pub funcs: BTreeMap<FuncId, FuncAccess>,
    /// Functions reachable from each function, itself included.
    pub reach: BTreeMap<FuncId, BTreeSet<FuncId>>,
}

impl AccessSets {
    pub fn of(&self, f: FuncId) -> &FuncAccess {
        &self.funcs[&f]
    }
}

pub fn compute_access_sets(program: &Program, pc: &ProgramCfg) -> AccessSets {
    let graph = call_graph(program);
    let direct: BTreeMap<FuncId, FuncAccess> = pc
        .funcs
        .iter()
        .map(|(f, cfg)| {
            let mut a = FuncAccess::default();
            for n in &cfg.nodes {
                a.reads.extend(n.reads.iter().copied());
                a.writes.extend(n.writes.iter().copied());
            }
            (*f, a)
        })
        .collect();
    let mut reach = BTreeMap::new();
    for f in program.func_ids() {
        let mut seen = BTreeSet::from([f]);
        let mut stack = vec![f];
        while let Some(g) = stack.pop() {
            for h in graph.get(&g).into_iter().flatten() {
                if seen.insert(*h) {
                    stack.push(*h);
                }
            }
        }
        reach.insert(f, seen);
    }
    let mut funcs = BTreeMap::new();
    for f in program.func_ids() {
        let mut a = direct[&f].clone();
        for g in &reach[&f] {
            if *g == f {
                continue;
            }
            let is_global = |m: &&MemLoc| program.var(m.0).is_global();
            a.reads.extend(direct[g].reads.iter().filter(is_global));
            a.writes.extend(direct[g].writes.iter().filter(is_global));
        }
        funcs.insert(f, a);
    }
    AccessSets { funcs, reach }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum AccessPattern {
    MainReadsIsrWrites,
    MainWritesIsrReads,
    BothWrite,
    ReadOnly,
}

impl AccessPattern {
    pub fn label(self) -> &'static str {
        match self {
            AccessPattern::MainReadsIsrWrites => "main-reads/isr-writes",
            AccessPattern::MainWritesIsrReads => "main-writes/isr-reads",
            AccessPattern::BothWrite => "both-write",
            AccessPattern::ReadOnly => "read-only",
        }
    }
}

/// Main-side program point that touches a shared variable without a
/// volatile qualification while the other side may write (or read, for
/// stores) it concurrently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NonVolatileSite {
    pub func: FuncId,
    pub node: NodeId,
    pub var: VarId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SharedSet {
    pub patterns: BTreeMap<VarId, AccessPattern>,
    /// Globals written by at least one ISR.
    pub isr_written: BTreeSet<VarId>,
    pub non_volatile: BTreeSet<NonVolatileSite>,
}

impl SharedSet {
    /// Shared and subject to race handling (read-only excluded).
    pub fn contains(&self, v: VarId) -> bool {
        matches!(self.patterns.get(&v), Some(p) if *p != AccessPattern::ReadOnly)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.patterns.iter().filter(|(_, p)| **p != AccessPattern::ReadOnly).map(|(v, _)| *v)
    }

    pub fn pattern(&self, v: VarId) -> Option<AccessPattern> {
        self.patterns.get(&v).copied()
    }
}

/// Functions executed on the main side: everything reachable from the entry.
pub fn main_side(program: &Program, access: &AccessSets) -> BTreeSet<FuncId> {
    program.entry_id().map(|m| access.reach[&m].clone()).unwrap_or_default()
}

/// `isrs` lists the handlers that may preempt main.
pub fn compute_shared_set(
    program: &Program,
    pc: &ProgramCfg,
    access: &AccessSets,
    hw: &HardwareSpec,
    isrs: &[FuncId],
) -> SharedSet {
    let mut actors: Vec<(bool, &FuncAccess)> = Vec::new();
    if let Some(m) = program.entry_id() {
        actors.push((true, access.of(m)));
    }
    for i in isrs {
        actors.push((false, access.of(*i)));
    }
    let mut set = SharedSet::default();
    for (id, info) in program.vars.iter().enumerate() {
        let v = VarId(id as u32);
        if !info.is_global() || info.const_value.is_some() {
            continue;
        }
        if hw.classify(info.absolute_address) != RegisterSemantics::PlainMemory {
            continue;
        }
        let m = MemLoc(v);
        let users: Vec<(bool, bool)> = actors
            .iter()
            .filter(|(_, a)| a.reads.contains(&m) || a.writes.contains(&m))
            .map(|(is_main, a)| (*is_main, a.writes.contains(&m)))
            .collect();
        if users.len() < 2 || !users.iter().any(|(main, _)| !main) {
            continue;
        }
        let writers = users.iter().filter(|(_, w)| *w).count();
        let main_writes = users.iter().any(|(main, w)| *main && *w);
        let pattern = match writers {
            0 => AccessPattern::ReadOnly,
            1 if main_writes => AccessPattern::MainWritesIsrReads,
            1 => AccessPattern::MainReadsIsrWrites,
            _ => AccessPattern::BothWrite,
        };
        if users.iter().any(|(main, w)| !main && *w) {
            set.isr_written.insert(v);
        }
        set.patterns.insert(v, pattern);
    }
    let isr_accessed: BTreeSet<VarId> = isrs
        .iter()
        .flat_map(|i| access.of(*i).all())
        .map(|m| m.0)
        .filter(|v| set.contains(*v))
        .collect();
    for f in main_side(program, access) {
        let cfg = pc.cfg(f);
        for id in cfg.ids() {
            let n = cfg.node(id);
            let mut hits = BTreeSet::new();
            n.visit_reads(&mut |p, volatile| {
                if !volatile {
                    if let Some(v) = p.root() {
                        if set.isr_written.contains(&v) {
                            hits.insert(v);
                        }
                    }
                }
            });
            if let Some((p, false)) = n.stored_place() {
                if let Some(v) = p.root() {
                    if isr_accessed.contains(&v) {
                        hits.insert(v);
                    }
                }
            }
            for v in hits {
                set.non_volatile.insert(NonVolatileSite { func: f, node: id, var: v });
            }
        }
    }
    set
}

fn fmt_locs(program: &Program, s: &BTreeSet<MemLoc>) -> String {
    let names: Vec<String> = s.iter().map(|m| program.var(m.0).display_name(program)).collect();
    format!("{{{}}}", names.join(", "))
}

pub fn dump_access_sets(program: &Program, access: &AccessSets, shared: &SharedSet, pts: &PointsTo) -> String {
    let mut out = String::new();
    for (f, a) in &access.funcs {
        writeln!(out, "{}:", program.func(*f).name).unwrap();
        writeln!(out, "  reads:  {}", fmt_locs(program, &a.reads)).unwrap();
        writeln!(out, "  writes: {}", fmt_locs(program, &a.writes)).unwrap();
    }
    if !pts.map.is_empty() {
        writeln!(out, "points-to:").unwrap();
        for (p, t) in &pts.map {
            let t: BTreeSet<MemLoc> = t.iter().map(|v| MemLoc(*v)).collect();
            writeln!(out, "  {} -> {}", program.var(*p).display_name(program), fmt_locs(program, &t)).unwrap();
        }
    }
    writeln!(out, "shared:").unwrap();
    for (v, p) in &shared.patterns {
        writeln!(out, "  {} ({})", program.var(*v).name, p.label()).unwrap();
    }
    out
}

/// Functions whose body (transitively) reads or writes a shared variable.
pub fn functions_touching(program: &Program, access: &AccessSets, shared: &SharedSet, writes_only: bool) -> BTreeSet<FuncId> {
    program
        .func_ids()
        .filter(|f| {
            let a = access.of(*f);
            let set = if writes_only { a.writes.clone() } else { a.all() };
            set.iter().any(|m| shared.contains(m.0))
        })
        .collect()
}

/// Run every prepass over a freshly lowered program.
pub fn prepass(
    program: &Program,
    pc: &mut ProgramCfg,
    hw: &HardwareSpec,
    isrs: &[FuncId],
) -> (PointsTo, AccessSets, SharedSet) {
    let pts = compute_points_to(program, pc);
    annotate_accesses(program, pc, &pts);
    let access = compute_access_sets(program, pc);
    let shared = compute_shared_set(program, pc, &access, hw, isrs);
    (pts, access, shared)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_program_cfg;
    use crate::frontend::parse_source;

    const UART: &str = "
        const uint8 RX0_SIZE = 16;
        uint8 URX0_IEN @ 0xC1.7;
        uint8 UDR @ 0xC6;
        uint8 rx_buff[RX0_SIZE];
        uint8 rx_in;
        uint8 rx_out;
        uint8 getNextPos(uint8 pos, uint8 size) { pos++; if (pos >= size) { return 0; } return pos; }
        uint8 isEmpty() { return rx_out == vu8(rx_in); }
        uint8 getByte() {
            uint8 data;
            while (isEmpty());
            data = vu8(rx_buff[rx_out]);
            vu8(rx_buff[rx_out]) = 0;
            vu8(rx_out) = getNextPos(rx_out, RX0_SIZE);
            URX0_IEN = 1;
            return data;
        }
        ISR(USART0_RX_vect) {
            uint8 i = rx_in;
            i = getNextPos(i, RX0_SIZE);
            if (i == rx_out) { URX0_IEN = 0; return; }
            rx_buff[rx_in] = UDR;
            rx_in = i;
        }
        void main() { uint8 c; while (1) { c = getByte(); } }";

    fn hw() -> HardwareSpec {
        crate::hardware::parse_hw_spec(
            "[global]\natomic_bits = 8\nglobal_enable = 0x5F.7\n[source RX]\nenable = 0xC1.7\nvector = USART0_RX_vect\n[input UDR]\naddress = 0xC6\nrange = 0..255\n",
        )
        .unwrap()
    }

    fn run(src: &str, hw: &HardwareSpec) -> (Program, ProgramCfg, PointsTo, AccessSets, SharedSet) {
        let mut p = parse_source(src).unwrap();
        let mut pc = build_program_cfg(&mut p).unwrap();
        let isrs: Vec<FuncId> = p.isrs().collect();
        let (pts, a, s) = prepass(&p, &mut pc, hw, &isrs);
        (p, pc, pts, a, s)
    }

    fn names(p: &Program, s: &BTreeSet<MemLoc>) -> BTreeSet<String> {
        s.iter().filter(|m| p.var(m.0).is_global()).map(|m| p.var(m.0).name.clone()).collect()
    }

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn uart_access_sets() {
        let (p, _, _, a, s) = run(UART, &hw());
        let isr = a.of(p.isrs().next().unwrap());
        assert!(names(&p, &isr.writes).is_superset(&set(&["rx_buff", "rx_in", "URX0_IEN"])));
        assert!(names(&p, &isr.reads).is_superset(&set(&["rx_in", "rx_out", "UDR"])));
        let gnp = a.of(p.func_by_name("getNextPos").unwrap());
        assert!(names(&p, &gnp.all()).is_empty());
        let rx_in = p.global_by_name("rx_in").unwrap();
        let rx_out = p.global_by_name("rx_out").unwrap();
        let buff = p.global_by_name("rx_buff").unwrap();
        assert_eq!(s.pattern(rx_in), Some(AccessPattern::MainReadsIsrWrites));
        assert_eq!(s.pattern(rx_out), Some(AccessPattern::MainWritesIsrReads));
        assert_eq!(s.pattern(buff), Some(AccessPattern::BothWrite));
        assert!(!s.contains(p.global_by_name("URX0_IEN").unwrap()));
        assert!(s.non_volatile.is_empty());
    }

    #[test]
    fn copy_and_branch_edges() {
        let src = "uint8 x, y, c; uint8 *p; uint8 *q;
            void main() { if (c) p = &x; else p = &y; q = p; *q = 1; }";
        let (p, _, pts, a, _) = run(src, &HardwareSpec::sequential());
        let q = p.global_by_name("q").unwrap();
        let want: BTreeSet<VarId> = ["x", "y"].iter().map(|n| p.global_by_name(n).unwrap()).collect();
        assert_eq!(pts.of(q), want);
        let main = a.of(p.entry_id().unwrap());
        assert!(names(&p, &main.writes).is_superset(&set(&["x", "y"])));
    }

    #[test]
    fn pointers_through_calls() {
        let src = "uint8 g; uint8 *id(uint8 *r) { return r; } void set(uint8 *t) { *t = 3; }
            void main() { uint8 *p; p = id(&g); set(p); }";
        let (p, _, pts, a, _) = run(src, &HardwareSpec::sequential());
        let g = p.global_by_name("g").unwrap();
        let set_fn = p.func_by_name("set").unwrap();
        assert!(a.of(set_fn).writes.contains(&MemLoc(g)));
        assert!(a.of(p.entry_id().unwrap()).writes.contains(&MemLoc(g)));
        assert!(pts.map.values().any(|t| t.contains(&g)));
    }

    #[test]
    fn no_pointers_no_isrs() {
        let (_, _, pts, _, s) = run("uint8 a; void main() { a = 1; }", &HardwareSpec::sequential());
        assert!(pts.map.is_empty());
        assert!(s.patterns.is_empty());
    }

    #[test]
    fn two_isrs_both_write() {
        let src = "uint8 cnt; uint8 r;
            ISR(A_vect) { cnt = cnt + 1; } ISR(B_vect) { cnt = 0; }
            void main() { r = 0; }";
        let (p, _, _, _, s) = run(src, &HardwareSpec::sequential());
        assert_eq!(s.pattern(p.global_by_name("cnt").unwrap()), Some(AccessPattern::BothWrite));
        assert_eq!(s.pattern(p.global_by_name("r").unwrap()), None);
    }

    #[test]
    fn read_only_and_non_volatile() {
        let src = "uint8 k = 3; uint8 flag; uint8 out;
            ISR(A_vect) { flag = k; }
            void main() { out = k; while (!flag); }";
        let (p, _, _, _, s) = run(src, &HardwareSpec::sequential());
        let k = p.global_by_name("k").unwrap();
        let flag = p.global_by_name("flag").unwrap();
        assert_eq!(s.pattern(k), Some(AccessPattern::ReadOnly));
        assert!(!s.contains(k));
        assert!(s.non_volatile.iter().any(|site| site.var == flag));
        assert!(s.non_volatile.iter().all(|site| site.var != k));
    }
}
