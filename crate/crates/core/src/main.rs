use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use irqscope::cfg::{fmt_node, to_dot};
use irqscope::engine::{fmt_state, Mode, Options};
use irqscope::hardware::{parse_hw_spec, HardwareSpec};
use irqscope::oracle::{self, OracleConfig};
use irqscope::pipeline::{prepare, Prepared};
use irqscope::pointer::dump_access_sets;
use irqscope::report::{build_report, render_json, render_stats, render_text};
use irqscope::wellformed::explain;

#[derive(Parser)]
#[command(name = "irqscope", version, about = "Value-range and shared-access analysis for interrupt-driven Mini-C")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a program and report warnings.
    Analyze(AnalyzeArgs),
    /// Enumerate concrete executions of a small program.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
#[group(id = "dump", multiple = false)]
struct Dumps {
    /// Print the control flow graphs as DOT.
    #[arg(long)]
    dump_cfg: bool,
    /// Print the abstract states at LINE or LINE:COL.
    #[arg(long, value_name = "LOC")]
    dump_state: Option<String>,
    /// Print points-to sets, access sets and the shared set.
    #[arg(long)]
    dump_access_sets: bool,
    /// Explain the well-formedness verdict of the full expression at LINE or LINE:COL.
    #[arg(long, value_name = "LOC")]
    explain_wf: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    file: PathBuf,
    /// Hardware spec file, or `none` for the hardware-agnostic mode.
    #[arg(long)]
    hw: String,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[command(flatten)]
    dumps: Dumps,
    #[arg(long, default_value_t = 1)]
    context_depth: usize,
    #[arg(long, default_value_t = 2)]
    widening_delay: u32,
    #[arg(long, default_value_t = 100_000)]
    max_visits: u64,
    #[arg(long)]
    dump_stats: bool,
    /// Treat the named function as an interrupt handler.
    #[arg(long = "isr", value_name = "NAME")]
    isrs: Vec<String>,
}

#[derive(Args)]
struct OracleArgs {
    file: PathBuf,
    #[arg(long)]
    hw: PathBuf,
    /// Maximum number of handler executions per trace.
    #[arg(long, default_value_t = 2)]
    isr_max: usize,
    /// Give up after exploring this many machine states.
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("irqscope: {}", msg);
    ExitCode::from(2)
}

fn parse_loc(s: &str) -> Option<(u32, Option<u32>)> {
    match s.split_once(':') {
        Some((l, c)) => Some((l.parse().ok()?, Some(c.parse().ok()?))),
        None => Some((s.parse().ok()?, None)),
    }
}

fn read_hw(path: &str) -> Result<Option<HardwareSpec>, String> {
    if path == "none" {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path, e))?;
    parse_hw_spec(&text).map(Some).map_err(|e| format!("{}: {}", path, e))
}

fn dump_state(prep: &Prepared, res: &irqscope::engine::AnalysisResult, line: u32, col: Option<u32>) -> String {
    let mut out = String::new();
    for (&f, cfg) in &res.pc.funcs {
        for mode in [Mode::Main, Mode::Isr] {
            let states = res.node_states(f, mode);
            for id in cfg.ids() {
                let n = cfg.node(id);
                if n.span.line != line || col.is_some_and(|c| c != n.span.col) {
                    continue;
                }
                let Some(s) = &states[id.0 as usize] else { continue };
                out.push_str(&format!(
                    "{} [{:?}] node {} at {}: {}\n",
                    prep.program.func(f).name,
                    mode,
                    id.0,
                    n.span,
                    fmt_node(&prep.program, n)
                ));
                out.push_str(&fmt_state(&prep.program, s));
            }
        }
    }
    if out.is_empty() {
        out.push_str("no analyzed node at this location\n");
    }
    out
}

fn analyze(args: AnalyzeArgs) -> ExitCode {
    let source = match std::fs::read_to_string(&args.file) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {}", args.file.display(), e)),
    };
    let hw = match read_hw(&args.hw) {
        Ok(h) => h,
        Err(e) => return fail(e),
    };
    let file = args.file.display().to_string();
    let prep = match prepare(&source, hw, &args.isrs) {
        Ok(p) => p,
        Err(e) => return fail(format!("{}: {}", file, e)),
    };
    let d = &args.dumps;
    if d.dump_cfg {
        print!("{}", to_dot(&prep.program, &prep.pc));
        return ExitCode::SUCCESS;
    }
    if d.dump_access_sets {
        print!("{}", dump_access_sets(&prep.program, &prep.access, &prep.shared, &prep.pts));
        return ExitCode::SUCCESS;
    }
    if let Some(loc) = &d.explain_wf {
        let Some((line, col)) = parse_loc(loc) else { return fail(format!("bad location `{}`", loc)) };
        let Some(fe) = prep.pc.full_expr_at(line, col) else {
            return fail(format!("no full expression at {}", loc));
        };
        let (Some(e), Some(v)) = (&fe.expr, &fe.verdict) else { return fail("expression has no verdict") };
        print!("{}", explain(v, e));
        return ExitCode::SUCCESS;
    }
    let opts = Options {
        context_depth: args.context_depth,
        widening_delay: args.widening_delay,
        max_visits: args.max_visits,
        ..Options::default()
    };
    let res = match prep.analyze(opts) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Some(loc) = &d.dump_state {
        let Some((line, col)) = parse_loc(loc) else { return fail(format!("bad location `{}`", loc)) };
        print!("{}", dump_state(&prep, &res, line, col));
        return ExitCode::SUCCESS;
    }
    let report = build_report(&prep, &res, &file);
    match args.format {
        Format::Text => {
            print!("{}", render_text(&report));
            if args.dump_stats {
                print!("{}", render_stats(&report.stats));
            }
        }
        Format::Json => println!("{}", render_json(&report)),
    }
    ExitCode::from(report.exit_code() as u8)
}

fn run_oracle(args: OracleArgs) -> ExitCode {
    let source = match std::fs::read_to_string(&args.file) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {}", args.file.display(), e)),
    };
    let hw = match read_hw(&args.hw.display().to_string()) {
        Ok(Some(h)) => h,
        Ok(None) => return fail("the oracle needs a hardware spec"),
        Err(e) => return fail(e),
    };
    let prep = match prepare(&source, Some(hw), &[]) {
        Ok(p) => p,
        Err(e) => return fail(format!("{}: {}", args.file.display(), e)),
    };
    let cfg = OracleConfig { isr_fires_max: args.isr_max, state_budget: args.max_states, ..OracleConfig::default() };
    match oracle::enumerate_executions(&prep, &cfg) {
        Ok(states) => {
            print!("{}", oracle::render(&prep.program, &states));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Analyze(a) => analyze(a),
        Command::Oracle(o) => run_oracle(o),
    }
}
