//! Parse, lower, prepass and classify a source file ready for the engine.

use thiserror::Error;

use crate::cfg::{build_program_cfg, ProgramCfg, UnsupportedConstruct};
use crate::engine::{analyze_program, AnalysisResult, EngineError, Inputs, Options};
use crate::frontend::ast::{FuncId, Program};
use crate::frontend::{parse_source, FrontendError};
use crate::hardware::{HardwareSpec, SpecError};
use crate::pointer::{prepass, AccessSets, PointsTo, SharedSet};
use crate::wellformed::{classify_all, SharedInfo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Unsupported(#[from] UnsupportedConstruct),
    #[error("hardware spec: {0}")]
    Spec(#[from] SpecError),
    #[error("--isr `{0}` does not name a function")]
    UnknownIsr(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub program: Program,
    pub pc: ProgramCfg,
    pub pts: PointsTo,
    pub access: AccessSets,
    pub shared: SharedSet,
    pub isrs: Vec<FuncId>,
    pub hw: HardwareSpec,
    /// False for the hardware-agnostic baseline (`--hw none`).
    pub hw_aware: bool,
}

/// `hw = None` selects the hardware-agnostic mode. Functions named in
/// `extra_isrs` are treated as handlers in addition to `ISR(...)` ones.
pub fn prepare(source: &str, hw: Option<HardwareSpec>, extra_isrs: &[String]) -> Result<Prepared, PipelineError> {
    let mut program = parse_source(source)?;
    let hw_aware = hw.is_some();
    if let Some(hw) = &hw {
        hw.check_program(&program)?;
    }
    let hw = hw.unwrap_or_else(HardwareSpec::sequential);
    let mut isrs: Vec<FuncId> = program.isrs().collect();
    for name in extra_isrs {
        let f = program.func_by_name(name).ok_or_else(|| PipelineError::UnknownIsr(name.clone()))?;
        if !isrs.contains(&f) {
            isrs.push(f);
        }
    }
    let mut pc = build_program_cfg(&mut program)?;
    let (pts, access, shared) = prepass(&program, &mut pc, &hw, &isrs);
    let info = SharedInfo::new(&program, &access, &shared, &pts);
    classify_all(&mut pc, &info);
    Ok(Prepared { program, pc, pts, access, shared, isrs, hw, hw_aware })
}

impl Prepared {
    pub fn inputs(&self) -> Inputs<'_> {
        Inputs {
            program: &self.program,
            pc: &self.pc,
            hw: &self.hw,
            pts: &self.pts,
            access: &self.access,
            shared: &self.shared,
            isrs: self.isrs.clone(),
        }
    }

    pub fn analyze(&self, mut opts: Options) -> Result<AnalysisResult, PipelineError> {
        opts.hw_aware = self.hw_aware;
        Ok(analyze_program(&self.inputs(), opts)?)
    }
}
