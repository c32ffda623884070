use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gordonse::cli::{self, RunConfig, Scale};

#[derive(Parser)]
#[command(name = "gordonse", version, about = "State evolution predictions for nonconvex regression iterates")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (falls back to GORDONSE_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run trajectories and write trajectories.csv, predictions.csv, summary.json.
    Simulate(Common),
    /// Compare closed-form predictions with Monte Carlo; writes oracle.csv.
    VerifyOracle(Common),
    /// Regenerate a figure as CSV + SVG.
    ReproduceFigure {
        #[arg(long)]
        figure: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit convergence rates; writes rates.csv.
    ClassifyRate(Common),
    /// Grid checks of map inequalities and identities; writes property_suite.csv.
    PropertySuite {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> gordonse::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::parse("")?,
        };
        if let Some(s) = self.seed {
            cfg = cfg.with_seed(s);
        }
        if let Some(o) = &self.out {
            cfg = cfg.with_out_dir(o.clone());
        }
        Ok(cfg)
    }
}

fn run(cmd: Command) -> gordonse::Result<bool> {
    match cmd {
        Command::Simulate(c) => {
            let cfg = c.load()?;
            if cfg.alg.kind.is_first_order() && cfg.alg.eta_or_default() > 0.5 {
                eprintln!("note: eta > 1/2; Gordon predictions are outside the validated step-size range");
            }
            let out = cli::cmd_simulate(&cfg)?;
            if let Some(r) = &out.report {
                println!("mean max |deviation| d_l2 = {:.3e}", r.mean_max(2));
            }
            println!("wrote {}", cfg.out_dir.display());
            Ok(true)
        }
        Command::VerifyOracle(c) => {
            let cfg = c.load()?;
            let sweep = cli::cmd_verify_oracle(&cfg)?;
            println!(
                "{} rows, {} failures, max |z| = {:.2}; wrote {}",
                sweep.rows.len(),
                sweep.failures(),
                sweep.max_abs_z(),
                cfg.out_dir.join("oracle.csv").display()
            );
            Ok(sweep.failures() == 0)
        }
        Command::ReproduceFigure { figure, scale, out, seed } => {
            let fig = cli::cmd_reproduce_figure(&figure, Scale::parse(&scale)?, seed, &out)?;
            for s in &fig.series {
                println!(
                    "{}: mean max |deviation| {} = {:.3e}",
                    s.alg.kind.name(),
                    fig.spec.metric.name(),
                    s.report.mean_max(if fig.spec.metric == cli::Metric::L2 { 2 } else { 3 })
                );
            }
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::ClassifyRate(c) => {
            let cfg = c.load()?;
            for r in cli::cmd_classify_rate(&cfg)? {
                match &r.fit {
                    Ok(f) => println!(
                        "{:15} lambda = {:.4}  R^2 = {:.5}  label = {}",
                        r.source,
                        f.exponent_lambda,
                        f.r_squared,
                        f.label().map_or("unlabeled".into(), |l| format!("{l:?}"))
                    ),
                    Err(e) => println!("{:15} {e}", r.source),
                }
            }
            Ok(true)
        }
        Command::PropertySuite { out } => {
            let rows = cli::property_suite(Vec::new())?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("property_suite.csv"), cli::suite_csv(&rows))?;
            for r in &rows {
                println!("{:4}  {:14} {:>12.3e}  {}", if r.passed { "PASS" } else { "FAIL" }, r.group, r.value, r.name);
            }
            Ok(rows.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = cli::thread_count(args.threads) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(args.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
