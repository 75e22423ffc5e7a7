//! Campaign runner CLI.
//!
//! Configure a benchmark campaign from a TOML file and/or flags, run it, and
//! exit with 0 on full success or 2 when some runs failed (failed runs are
//! recorded in `campaign.json` and excluded from aggregates).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mlio::campaign::{run_campaign, CampaignConfig};
use mlio::testbed::{TestFunction, UqOperator};

#[derive(Parser, Debug)]
#[command(
    name = "mlio-bench",
    about = "Run design-under-uncertainty benchmark campaigns",
    long_about = "Runs multi-level informed optimization against the analytical testbed.\n\
                  Flags override values from --config (a TOML file with the same field names\n\
                  as the documented campaign schema)."
)]
struct Cli {
    /// TOML campaign configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated test functions (step, alpine, sumsquares, levy, rosenbrock, ackley).
    #[arg(long, value_delimiter = ',')]
    functions: Option<Vec<String>>,

    /// Comma-separated even dimensionalities.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,

    /// Repetitions per (function, dimension).
    #[arg(long)]
    reps: Option<usize>,

    /// Total sample budget per run.
    #[arg(long)]
    budget: Option<usize>,

    /// Reference pool size per space (designs and parameters).
    #[arg(long)]
    ref_size: Option<usize>,

    /// Comma-separated UQ operators (robust, stochastic).
    #[arg(long, value_delimiter = ',')]
    uq: Option<Vec<String>>,

    /// Initialization setting: 1 or 2 axis points per dimension.
    #[arg(long)]
    setting: Option<u8>,

    /// Campaign master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Parallel independent runs.
    #[arg(long)]
    jobs: Option<usize>,
}

fn build_config(cli: &Cli) -> Result<CampaignConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            CampaignConfig::from_toml_str(&text).map_err(|e| e.to_string())?
        }
        None => CampaignConfig::default(),
    };
    if let Some(functions) = &cli.functions {
        cfg.functions = functions
            .iter()
            .map(|f| TestFunction::parse(f).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
    }
    if let Some(dims) = &cli.dims {
        cfg.dims = dims.clone();
    }
    if let Some(reps) = cli.reps {
        cfg.repetitions = reps;
    }
    if let Some(budget) = cli.budget {
        cfg.budget = budget;
    }
    if let Some(ref_size) = cli.ref_size {
        cfg.n_u = ref_size;
        cfg.n_p = ref_size;
    }
    if let Some(uq) = &cli.uq {
        cfg.uq = uq
            .iter()
            .map(|s| UqOperator::parse(s).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
    }
    if let Some(setting) = cli.setting {
        cfg.setting = setting;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let total = cfg.functions.len() * cfg.dims.len() * cfg.repetitions * cfg.uq.len();
    eprintln!(
        "campaign: {} runs, budget {}, reference {}x{}, out {}",
        total,
        cfg.budget,
        cfg.n_u,
        cfg.n_p,
        cfg.out_dir.display()
    );
    match run_campaign(&cfg) {
        Ok(summary) => {
            let failed = summary.failures();
            for run in &summary.runs {
                match &run.error {
                    None => eprintln!(
                        "  {}: ok ({} evaluations, {:.1}s)",
                        run.spec.id(),
                        run.n_evaluations,
                        run.wall_secs
                    ),
                    Some(e) => eprintln!("  {}: FAILED: {e}", run.spec.id()),
                }
            }
            eprintln!(
                "done: {}/{} runs succeeded; outputs in {}",
                summary.runs.len() - failed,
                summary.runs.len(),
                cfg.out_dir.display()
            );
            if failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
