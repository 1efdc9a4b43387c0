//! Placement of ISR fixpoint nodes in main-side functions.

use std::collections::{BTreeMap, BTreeSet};

use crate::cfg::{Cfg, Node, NodeId, NodeKind, Place, ProgramCfg, Rv};
use crate::frontend::ast::{Builtin, Callee, FuncId, Program};
use crate::hardware::{EnableTarget, Flag, HardwareSpec, StoreValue};
use crate::pointer::SharedSet;

/// Inputs that decide where handlers may preempt main.
pub struct ScheduleCtx<'a> {
    pub program: &'a Program,
    pub hw: &'a HardwareSpec,
    pub shared: &'a SharedSet,
    pub main_side: &'a BTreeSet<FuncId>,
    pub hw_aware: bool,
}

/// Store value of an assignment to a register, as far as it is syntactic.
pub fn store_value(dst: &Place, src: &Rv) -> StoreValue {
    let same = |r: &Rv| matches!(r, Rv::Load { place, .. } if **place == *dst);
    match src {
        Rv::Const(c) => StoreValue::Const(*c),
        Rv::Binary(op, a, b, _) => {
            let k = match (a.as_ref(), b.as_ref()) {
                (x, Rv::Const(k)) if same(x) => Some(*k),
                (Rv::Const(k), x) if same(x) => Some(*k),
                _ => None,
            };
            match (op, k) {
                (crate::frontend::ast::BinOp::BitOr, Some(k)) => StoreValue::OrConst(k),
                (crate::frontend::ast::BinOp::BitAnd, Some(k)) => StoreValue::AndConst(k),
                _ => StoreValue::Opaque,
            }
        }
        _ => StoreValue::Opaque,
    }
}

impl ScheduleCtx<'_> {
    /// Effect of one node on the global enable flag, given the callee
    /// summaries.
    fn global_effect(&self, n: &Node, flag: Flag, summary: &mut dyn FnMut(FuncId, Flag) -> Option<Flag>) -> Option<Flag> {
        match &n.kind {
            NodeKind::Call { callee: Callee::Builtin(b), .. } if self.hw_aware => {
                Some(if *b == Builtin::Sei { Flag::Enabled } else { Flag::Disabled })
            }
            NodeKind::Call { callee: Callee::Func(g), .. } => summary(*g, flag),
            NodeKind::Assign { dst: dst @ Place::Var(v), src, .. } if self.hw_aware => {
                let addr = self.program.var(*v).absolute_address;
                let effect = self.hw.store_effect(addr, &store_value(dst, src));
                let mut out = flag;
                for (t, f) in effect {
                    if t == EnableTarget::Global {
                        out = f;
                    }
                }
                Some(out)
            }
            _ => Some(flag),
        }
    }

    /// Whether the node may turn some interrupt flag on.
    fn may_enable(&self, n: &Node) -> bool {
        if !self.hw_aware {
            return false;
        }
        match &n.kind {
            NodeKind::Call { callee: Callee::Builtin(Builtin::Sei), .. } => true,
            NodeKind::Assign { dst: dst @ Place::Var(v), src, .. } => {
                let addr = self.program.var(*v).absolute_address;
                self.hw.store_effect(addr, &store_value(dst, src)).iter().any(|(_, f)| *f != Flag::Disabled)
            }
            _ => false,
        }
    }

    fn touches_shared(&self, n: &Node) -> bool {
        n.reads.iter().chain(n.writes.iter()).any(|m| self.shared.contains(m.0))
    }
}

/// Forward dataflow of the global enable flag: post-flag per node, or
/// `None` when unreachable.
fn flow(
    cx: &ScheduleCtx,
    cfg: &Cfg,
    entry: Flag,
    summary: &mut dyn FnMut(FuncId, Flag) -> Option<Flag>,
) -> (Vec<Option<Flag>>, Vec<(FuncId, Flag)>) {
    let n = cfg.nodes.len();
    let mut post: Vec<Option<Flag>> = vec![None; n];
    let mut pre: Vec<Option<Flag>> = vec![None; n];
    pre[cfg.entry.0 as usize] = Some(entry);
    let mut work = vec![cfg.entry];
    while let Some(id) = work.pop() {
        let node = cfg.node(id);
        let Some(f) = pre[id.0 as usize] else { continue };
        let out = cx.global_effect(node, f, summary);
        if out == post[id.0 as usize] {
            continue;
        }
        post[id.0 as usize] = out;
        let Some(out) = out else { continue };
        for s in &node.succs {
            let cur = pre[s.0 as usize];
            let joined = Some(cur.map_or(out, |c| c.join(out)));
            if joined != cur {
                pre[s.0 as usize] = joined;
                work.push(*s);
            } else if post[s.0 as usize].is_none() {
                work.push(*s);
            }
        }
    }
    let calls = cfg
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(i, node)| match (&node.kind, pre[i]) {
            (NodeKind::Call { callee: Callee::Func(g), .. }, Some(f)) => Some((*g, f)),
            _ => None,
        })
        .collect();
    (post, calls)
}

/// Exit flag of `f` entered with `flag`; `None` if it never returns.
fn summarize(cx: &ScheduleCtx, pc: &ProgramCfg, f: FuncId, flag: Flag, memo: &mut BTreeMap<(FuncId, Flag), Option<Flag>>) -> Option<Flag> {
    if let Some(r) = memo.get(&(f, flag)) {
        return *r;
    }
    let cfg = pc.cfg(f);
    let mut sub = |g: FuncId, fl: Flag| summarize(cx, pc, g, fl, &mut BTreeMap::new());
    let (post, _) = flow(cx, cfg, flag, &mut sub);
    let r = post[cfg.exit.0 as usize];
    memo.insert((f, flag), r);
    r
}

/// Static post-flag of every node in main-side functions.
pub fn global_flags(cx: &ScheduleCtx, pc: &ProgramCfg) -> BTreeMap<FuncId, Vec<Option<Flag>>> {
    let mut memo = BTreeMap::new();
    let mut entry: BTreeMap<FuncId, Flag> = BTreeMap::new();
    let initial = if cx.hw_aware { Flag::from_bool(cx.hw.global_initially_enabled) } else { Flag::Unknown };
    if let Some(m) = cx.program.entry_id() {
        entry.insert(m, initial);
    }
    let mut out = BTreeMap::new();
    loop {
        let mut changed = false;
        for (f, fl) in entry.clone() {
            let cfg = pc.cfg(f);
            let mut sub = |g: FuncId, x: Flag| summarize(cx, pc, g, x, &mut memo);
            let (post, calls) = flow(cx, cfg, fl, &mut sub);
            out.insert(f, post);
            for (g, x) in calls {
                let cur = entry.get(&g).copied();
                let joined = cur.map_or(x, |c| c.join(x));
                if cur != Some(joined) {
                    entry.insert(g, joined);
                    changed = true;
                }
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Insert an ISR fixpoint node on every out-edge of each node after which
/// a handler may run. Returns the new CFGs and the number of inserted nodes.
pub fn schedule_isr_nodes(cx: &ScheduleCtx, pc: &ProgramCfg) -> (ProgramCfg, usize) {
    let flags = global_flags(cx, pc);
    let mut out = pc.clone();
    let mut sites = 0;
    let entry_fn = cx.program.entry_id();
    for f in cx.main_side {
        let Some(post) = flags.get(f) else { continue };
        let cfg = out.funcs.get_mut(f).expect("function cfg");
        let original = cfg.nodes.len();
        for i in 0..original {
            let Some(flag) = post[i] else { continue };
            if flag == Flag::Disabled {
                continue;
            }
            let node = &cfg.nodes[i];
            let at_entry = Some(*f) == entry_fn && NodeId(i as u32) == cfg.entry;
            if !(at_entry || cx.may_enable(node) || cx.touches_shared(node)) {
                continue;
            }
            for slot in 0..node.succs.len() {
                let target = cfg.nodes[i].succs[slot];
                let id = NodeId(cfg.nodes.len() as u32);
                let span = cfg.nodes[i].span;
                cfg.nodes.push(Node {
                    kind: NodeKind::IsrFixpoint,
                    succs: vec![target],
                    full_expr: None,
                    span,
                    reads: BTreeSet::new(),
                    writes: BTreeSet::new(),
                });
                cfg.nodes[i].succs[slot] = id;
                sites += 1;
            }
        }
    }
    (out, sites)
}
