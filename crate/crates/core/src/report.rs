//! Warnings, array bound checks and rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cfg::{Place, ProgramCfg};
use crate::engine::eval::Env;
use crate::engine::{dispatch, AbsState, AnalysisResult, Mode, Stats};
use crate::frontend::ast::{CType, FuncId, Program, Span, VarId};
use crate::pipeline::Prepared;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WarningKind {
    NonAtomicAccess,
    UnspecifiedOrder,
    DataLoss,
    NonVolatileShared,
    ArrayOutOfBounds,
}

impl WarningKind {
    pub fn severity(self) -> Severity {
        match self {
            WarningKind::ArrayOutOfBounds => Severity::Error,
            _ => Severity::Warning,
        }
    }
}

impl fmt::Display for WarningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Loc {
    pub file: String,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    pub loc: Loc,
    pub message: String,
    pub memlocs: Vec<String>,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayAccess {
    pub loc: Loc,
    pub array: String,
    pub index: (i64, i64),
    pub len: u32,
    pub safe: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub warnings: Vec<Warning>,
    pub arrays: Vec<ArrayAccess>,
    pub stats: Stats,
}

impl Report {
    pub fn count(&self, kind: WarningKind) -> usize {
        self.warnings.iter().filter(|w| w.kind == kind).count()
    }

    /// Warnings other than array bound findings.
    pub fn shared_access_warnings(&self) -> usize {
        self.warnings.iter().filter(|w| w.kind != WarningKind::ArrayOutOfBounds).count()
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(&self.warnings)
    }
}

pub fn exit_code(warnings: &[Warning]) -> i32 {
    i32::from(!warnings.is_empty())
}

fn message(kind: WarningKind, vars: &str) -> String {
    match kind {
        WarningKind::NonAtomicAccess => format!("access to shared {} is not atomic on this target", vars),
        WarningKind::UnspecifiedOrder => {
            format!("shared accesses to {} in one full expression have unspecified order", vars)
        }
        WarningKind::DataLoss => format!("write to {} may be overwritten by an interrupt handler", vars),
        WarningKind::NonVolatileShared => format!("shared {} accessed without volatile", vars),
        WarningKind::ArrayOutOfBounds => format!("possible out-of-bounds access to {}", vars),
    }
}

struct Collector<'a> {
    program: &'a Program,
    file: &'a str,
    warnings: BTreeMap<(WarningKind, u32, u32), (BTreeSet<String>, String)>,
}

impl Collector<'_> {
    fn loc(&self, span: Span) -> Loc {
        Loc { file: self.file.to_string(), line: span.line, col: span.col }
    }

    fn add(&mut self, kind: WarningKind, span: Span, vars: &BTreeSet<VarId>, extra: String) {
        let names: BTreeSet<String> = vars.iter().map(|v| self.program.var(*v).display_name(self.program)).collect();
        let entry = self.warnings.entry((kind, span.line, span.col)).or_insert_with(|| (BTreeSet::new(), extra));
        entry.0.extend(names);
    }

    fn finish(self) -> Vec<Warning> {
        self.warnings
            .into_iter()
            .map(|((kind, line, col), (names, extra))| {
                let list = names.iter().map(String::as_str).collect::<Vec<_>>().join(", ");
                Warning {
                    kind,
                    loc: Loc { file: self.file.to_string(), line, col },
                    message: message(kind, &list) + &extra,
                    memlocs: names.into_iter().collect(),
                    severity: kind.severity(),
                }
            })
            .collect()
    }
}

/// States a report is computed from: per function and mode, the joined
/// pre-state of every node.
fn states_by_function(prep: &Prepared, res: &AnalysisResult) -> Vec<(FuncId, Mode, Vec<Option<AbsState>>)> {
    let mut out = Vec::new();
    let keys: BTreeSet<(FuncId, Mode)> = res.contexts.keys().map(|k| (k.func, k.mode)).collect();
    for (f, mode) in keys {
        if prep.pc.funcs.contains_key(&f) {
            out.push((f, mode, res.node_states(f, mode)));
        }
    }
    out
}

/// Every indexed place of a node, innermost included.
fn index_places<'a>(pc: &'a ProgramCfg, f: FuncId, id: crate::cfg::NodeId) -> Vec<&'a Place> {
    let node = pc.cfg(f).node(id);
    let mut out = Vec::new();
    node.visit_reads(&mut |p, _| {
        if matches!(p, Place::Index(..)) {
            out.push(p);
        }
    });
    if let Some((p, _)) = node.stored_place() {
        if matches!(p, Place::Index(..)) {
            out.push(p);
        }
    }
    out
}

/// Check every array index against its bounds and gather the
/// shared-access warnings of the final states.
pub fn build_report(prep: &Prepared, res: &AnalysisResult, file: &str) -> Report {
    let program = &prep.program;
    let env = Env { program, hw: &prep.hw, pts: &prep.pts, hw_aware: prep.hw_aware };
    let mut col = Collector { program, file, warnings: BTreeMap::new() };
    let mut arrays: BTreeMap<(Loc, String), ArrayAccess> = BTreeMap::new();
    let mut reachable: BTreeSet<(FuncId, crate::cfg::NodeId)> = BTreeSet::new();

    for (f, mode, states) in states_by_function(prep, res) {
        for (i, st) in states.iter().enumerate() {
            let Some(st) = st else { continue };
            if st.is_bottom() {
                continue;
            }
            let id = crate::cfg::NodeId(i as u32);
            let node = res.pc.cfg(f).node(id);
            if mode == Mode::Main {
                reachable.insert((f, id));
            }
            let mut st = st.clone();
            if mode == Mode::Main {
                let d = dispatch(
                    program,
                    &res.pc,
                    &prep.hw,
                    &prep.access,
                    &prep.shared,
                    &prep.isrs,
                    prep.hw_aware,
                    f,
                    id,
                    &st,
                );
                if let Some(d) = d {
                    let span = node.full_expr.map_or(node.span, |fe| res.pc.full_expr(fe).span);
                    for k in &d.kinds {
                        col.add(*k, span, &d.vars, String::new());
                    }
                    for v in &d.havoc {
                        if st.oct.contains_var(crate::octagon::MemLoc(*v)) {
                            let (lo, hi) = env.dim_range(*v);
                            st.oct.havoc(crate::octagon::MemLoc(*v), lo, hi);
                        }
                    }
                }
            }
            for p in index_places(&res.pc, f, id) {
                let Place::Index(arr, idx) = p else { continue };
                let CType::Array(_, len) = program.var(*arr).ctype else { continue };
                let (lo, hi) = env.interval(&st.oct, idx);
                let loc = col.loc(node.span);
                let name = program.var(*arr).display_name(program);
                let a = arrays.entry((loc.clone(), name.clone())).or_insert(ArrayAccess {
                    loc,
                    array: name,
                    index: (lo, hi),
                    len,
                    safe: true,
                });
                a.index = (a.index.0.min(lo), a.index.1.max(hi));
                a.safe = a.index.0 >= 0 && a.index.1 < len as i64;
            }
        }
    }
    for a in arrays.values().filter(|a| !a.safe) {
        let span = Span { line: a.loc.line, col: a.loc.col, start: 0, end: 0 };
        let var = program.global_by_name(&a.array).or_else(|| {
            (0..program.vars.len() as u32).map(VarId).find(|v| program.var(*v).display_name(program) == a.array)
        });
        let vars: BTreeSet<VarId> = var.into_iter().collect();
        let extra = format!(": index in [{}, {}], length {}", a.index.0, a.index.1, a.len);
        col.add(crate::report::WarningKind::ArrayOutOfBounds, span, &vars, extra);
    }
    for site in &prep.shared.non_volatile {
        if reachable.contains(&(site.func, site.node)) {
            let span = prep.pc.cfg(site.func).node(site.node).span;
            col.add(WarningKind::NonVolatileShared, span, &BTreeSet::from([site.var]), String::new());
        }
    }
    Report { warnings: col.finish(), arrays: arrays.into_values().collect(), stats: res.stats.clone() }
}

pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    for w in &r.warnings {
        out.push_str(&format!("{}:{}:{}: {}: {}\n", w.loc.file, w.loc.line, w.loc.col, w.kind, w.message));
    }
    let n = r.warnings.len();
    out.push_str(&format!("{} warning{}\n", n, if n == 1 { "" } else { "s" }));
    out
}

pub fn render_json(r: &Report) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}

pub fn render_stats(s: &Stats) -> String {
    format!(
        "isr_analyses: {}\nisr_sites: {}\nfunction_analyses: {}\nmemo_hits: {}\nnode_visits: {}\n",
        s.isr_analyses, s.isr_sites, s.function_analyses, s.memo_hits, s.node_visits
    )
}
