use bpb_core::harness::{
    eta_tightness_search, lemma_validation_suite, run_experiment, run_pipeline, BudgetSpec, EtaSearchConfig,
    ExperimentConfig, Instance, InstanceJson, LemmaConfig,
};
use bpb_core::model_spaces::{Field, SpaceDesc};
use bpb_core::moduli::{delta_complex_bracket, delta_convexity_bracket};
use bpb_core::pipelines::{PipelineKind, PipelineOptions};
use bpb_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bpb", version, about = "Bishop-Phelps-Bollobas corrections on finite l_inf sums")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bracket a modulus of convexity or C-convexity.
    Moduli {
        /// `<real|complex>:<p>:<dim>`, e.g. `complex:1:2` or `real:inf:3`.
        #[arg(long, value_parser = parse_space)]
        space: SpaceDesc,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1e-3)]
        resolution: f64,
    },
    BpbOp(RunArgs),
    BpbLocal(RunArgs),
    BpbBilinear(RunArgs),
    BpbBilinearLocal(RunArgs),
    /// Batch run from a JSON config; writes `<out>.json` and `<out>.csv`.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized checks of the support and tail lemmas.
    ValidateLemmas {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heuristic search for small premise margins with far attaining points.
    EtaSearch {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Convexity,
    Complex,
}

#[derive(Args)]
struct RunArgs {
    /// JSON instance: `{operator, x0}` or `{bilinear, x_left, x_right}`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    eps: f64,
    /// Inline JSON or a path to a JSON budget.
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_space(s: &str) -> std::result::Result<SpaceDesc, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [field, p, dim] = parts.as_slice() else {
        return Err(format!("expected <real|complex>:<p>:<dim>, got `{s}`"));
    };
    let field = match *field {
        "real" => Field::Real,
        "complex" => Field::Complex,
        other => return Err(format!("unknown field `{other}`")),
    };
    let p = match *p {
        "inf" | "infinity" => f64::INFINITY,
        v => v.parse().map_err(|_| format!("bad exponent `{v}`"))?,
    };
    let dim = dim.parse().map_err(|_| format!("bad dimension `{dim}`"))?;
    SpaceDesc::new(field, p, dim).map_err(|e| e.to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Serialization(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Serialization(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn budget(arg: Option<&str>) -> Result<BudgetSpec> {
    match arg {
        None => Ok(BudgetSpec::default()),
        Some(s) if s.trim_start().starts_with('{') => Ok(serde_json::from_str(s)?),
        Some(path) => read_json(Path::new(path)),
    }
}

fn single_run(kind: PipelineKind, args: &RunArgs) -> Result<i32> {
    let instance = Instance::from_json(&read_json::<InstanceJson>(&args.instance)?)?;
    let opts = PipelineOptions {
        budget: budget(args.budget.as_deref())?.to_budget(),
        ..PipelineOptions::default()
    };
    let cert = run_pipeline(kind, &instance, args.eps, &opts)?;
    emit(&serde_json::to_string_pretty(&cert.to_json())?, args.out.as_deref())?;
    Ok(if cert.passed() { 0 } else { 3 })
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Moduli {
            space,
            kind,
            eps,
            resolution,
        } => {
            let b = match kind {
                Kind::Convexity => delta_convexity_bracket(&space, eps, resolution)?,
                Kind::Complex => delta_complex_bracket(&space, eps, resolution)?,
            };
            emit(&serde_json::to_string_pretty(&b)?, None)?;
            Ok(0)
        }
        Command::BpbOp(a) => single_run(PipelineKind::Operator, &a),
        Command::BpbLocal(a) => single_run(PipelineKind::OperatorLocal, &a),
        Command::BpbBilinear(a) => single_run(PipelineKind::Bilinear, &a),
        Command::BpbBilinearLocal(a) => single_run(PipelineKind::BilinearLocal, &a),
        Command::Experiment { config, out } => {
            let cfg: ExperimentConfig = read_json(&config)?;
            let report = run_experiment(&cfg)?;
            let json = serde_json::to_string_pretty(&report)?;
            let csv = report.to_csv()?;
            match out {
                Some(stem) => {
                    emit(&json, Some(&stem.with_extension("json")))?;
                    emit(&csv, Some(&stem.with_extension("csv")))?;
                }
                None => {
                    emit(&json, None)?;
                    eprint!("{csv}");
                }
            }
            Ok(report.exit_code())
        }
        Command::ValidateLemmas { config, out } => {
            let cfg = match config {
                Some(p) => read_json(&p)?,
                None => LemmaConfig::default(),
            };
            let report = lemma_validation_suite(&cfg)?;
            emit(&serde_json::to_string_pretty(&report)?, out.as_deref())?;
            Ok(report.exit_code())
        }
        Command::EtaSearch { config, out } => {
            let cfg = match config {
                Some(p) => read_json(&p)?,
                None => EtaSearchConfig::default(),
            };
            let report = eta_tightness_search(&cfg)?;
            emit(&serde_json::to_string_pretty(&report)?, out.as_deref())?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
