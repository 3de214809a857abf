use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use isac_tune::bench::validate::{self, ValidationHooks, CRITERIA};
use isac_tune::bench::{run_compare, run_convergence, run_sweep, write_outputs, BenchConfig, Method, OutputFile};

#[derive(Parser)]
#[command(name = "isac-bench", version, about = "Threshold-tuning benchmarks on the bistatic ISAC simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare all methods on ΔJ, N_eq and ΔJ/N_eq
    Compare(Common),
    /// Fixed against tuned thresholds over the power grid
    Sweep(Common),
    /// Per-generation J_det of CMA-ES and RACE-CMA
    Converge(Common),
    /// Run the acceptance checks; exits nonzero if any fails
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; omitted keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Repetitions per configuration
    #[arg(long)]
    reps: Option<usize>,
    /// Evaluation budget per run (N_eq)
    #[arg(long)]
    budget: Option<f64>,
    /// Output directory [default: <experiment.output_dir>/<subcommand>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods (MAP, IPN, SPSA, CMA-ES, RACE-CMA)
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated criterion numbers to run instead of all
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<usize>>,
    #[arg(long, hide = true)]
    corrupt_covariance: bool,
    #[arg(long, hide = true)]
    tamper_ledger: bool,
}

impl Common {
    fn load(&self) -> Result<BenchConfig> {
        let mut cfg = match &self.config {
            Some(p) => BenchConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => BenchConfig::default(),
        };
        let e = &mut cfg.experiment;
        if let Some(s) = self.seed {
            e.master_seed = s;
        }
        if let Some(r) = self.reps {
            e.repetitions = r;
        }
        if let Some(b) = self.budget {
            e.budget = b;
        }
        if let Some(m) = &self.methods {
            e.methods = m.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self, cfg: &BenchConfig, name: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| Path::new(&cfg.experiment.output_dir).join(name))
    }
}

fn save(dir: &Path, cfg: &BenchConfig, files: &[OutputFile]) -> Result<()> {
    write_outputs(dir, cfg, files).with_context(|| format!("writing {}", dir.display()))?;
    println!("wrote {} files to {}", files.len() + 1, dir.display());
    Ok(())
}

fn compare(args: &Common) -> Result<()> {
    let cfg = args.load()?;
    let report = run_compare(&cfg)?;
    println!("{:<9} {:>5} {:>9} {:>9} {:>8} {:>12}", "method", "runs", "dJ", "+/-", "N_eq", "dJ/N_eq");
    for r in &report.rows {
        println!(
            "{:<9} {:>5} {:>9.4} {:>9} {:>8.1} {:>12.6}",
            r.method.name(),
            r.runs - r.failures,
            r.delta_j.mean,
            r.delta_j.half_width.map_or("na".into(), |h| format!("{h:.4}")),
            r.n_eq.mean,
            r.efficiency
        );
    }
    save(&args.out_dir(&cfg, "compare"), &cfg, &report.files()?)
}

fn sweep(args: &Common) -> Result<()> {
    let cfg = args.load()?;
    let report = run_sweep(&cfg)?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10} {:>8}", "dBm", "Jdet fix", "Jdet tuned", "lat fix", "lat tuned", "lat red");
    for r in &report.rows {
        println!(
            "{:>6.1} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>7.1}%",
            r.power_dbm,
            r.j_det_fixed.mean,
            r.j_det_tuned.mean,
            r.j_lat_fixed.mean,
            r.j_lat_tuned.mean,
            100.0 * r.latency_reduction
        );
    }
    save(&args.out_dir(&cfg, "sweep"), &cfg, &report.files()?)
}

fn converge(args: &Common) -> Result<()> {
    let cfg = args.load()?;
    let report = run_convergence(&cfg)?;
    for r in &report.rows {
        println!(
            "{:>6.1} dBm {:<9} gen {:>2}  J_det {:.4}  N_eq {:.1}",
            r.power_dbm,
            r.method.name(),
            r.generation,
            r.j_det.mean,
            r.n_eq.mean
        );
    }
    save(&args.out_dir(&cfg, "converge"), &cfg, &report.files()?)
}

fn run_validate(args: &ValidateArgs) -> Result<bool> {
    let cfg = args.common.load()?;
    let ids = args.only.clone().unwrap_or_else(|| CRITERIA.iter().map(|c| c.0).collect());
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        bail!("no acceptance criterion {bad}");
    }
    let hooks = ValidationHooks {
        corrupt_covariance: args.corrupt_covariance,
        tamper_ledger: args.tamper_ledger,
    };
    let results = validate::run_selected(&cfg, hooks, &ids, |r| println!("{}", r.line()))?;
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    save(&args.common.out_dir(&cfg, "validate"), &cfg, &[validate::results_file(&cfg, &results)?])?;
    Ok(passed == results.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Compare(a) => compare(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::Converge(a) => converge(a).map(|_| true),
        Command::Validate(a) => run_validate(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
