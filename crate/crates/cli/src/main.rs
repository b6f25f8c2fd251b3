use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use it2mpc::bench::{self, BenchConfig, BenchError, Case, RunOutcome, OUT_DIR_ENV};

/// Fuzzy MPC benchmark on the three-rule CSTR model.
#[derive(Parser)]
#[command(name = "it2mpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and certify one case, or every case in turn when --case is omitted.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the step-0 LMI problem to lmi_step0.txt.
        #[arg(long)]
        dump_lmi: bool,
    },
    /// Run one case for several delay seeds and tabulate the outcomes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds or ranges, e.g. `0..10` or `1,4,7`.
        #[arg(long, value_parser = parse_seeds, default_value = "0..10")]
        seeds: Seeds,
    },
}

#[derive(Args)]
struct Common {
    /// Benchmark config; the bundled CSTR config when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// uncontrolled, nodelay, statedelay or bothdelay.
    #[arg(long)]
    case: Option<Case>,
    #[arg(long)]
    steps: Option<usize>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Re-solve the LMI problem every N steps.
    #[arg(long)]
    resynth_every: Option<usize>,
}

#[derive(Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|e| format!("{part}: {e}"))?;
            let b: u64 = b.parse().map_err(|e| format!("{part}: {e}"))?;
            seeds.extend(a..b);
        } else {
            seeds.push(part.parse().map_err(|e| format!("{part}: {e}"))?);
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(seeds))
}

impl Common {
    fn load(&self) -> Result<BenchConfig, BenchError> {
        let mut cfg = match &self.config {
            Some(p) => bench::load_config(p)?,
            None => bench::bundled(),
        };
        if let Some(s) = self.steps {
            cfg = cfg.with_steps(s);
        }
        if let Some(r) = self.resynth_every {
            if r == 0 {
                return Err(bench::ConfigError::Invalid {
                    field: "--resynth-every".into(),
                    message: "must be at least 1".into(),
                }
                .into());
            }
            cfg.resynthesize_every = r;
        }
        if let Some(o) = &self.out {
            cfg = cfg.with_output_dir(o);
        }
        Ok(cfg)
    }
}

fn summarize(o: &RunOutcome, dir: &Path) {
    let conv = o.convergence_step.map_or("none".to_string(), |k| k.to_string());
    let certs = if o.reports.is_empty() {
        "-".to_string()
    } else {
        let failed = o.reports.iter().filter(|r| !r.pass()).count();
        if failed == 0 {
            "all pass".to_string()
        } else {
            format!("{failed} failed")
        }
    };
    println!(
        "{:<13} seed={:<4} converged={:<5} peak|u|={:<8.4} infeasible={:<3} certs: {certs}  -> {}",
        o.case.as_str(),
        o.seed,
        conv,
        o.peak_input,
        o.infeasible_steps,
        dir.display()
    );
}

fn run(cli: Cli) -> Result<i32, BenchError> {
    match cli.command {
        Command::Run { common, seed, dump_lmi } => {
            let mut base = common.load()?;
            if let Some(s) = seed {
                base = base.with_seed(s);
            }
            base.dump_lmi = dump_lmi;
            let cases = match common.case {
                Some(c) => vec![c],
                None => Case::ALL.to_vec(),
            };
            let mut code = 0;
            for case in cases {
                let dir = base.output_dir.join(case.as_str());
                let cfg = base.clone().with_case(case).with_output_dir(&dir);
                let o = bench::run_case(&cfg)?;
                summarize(&o, &dir);
                for r in o.reports.iter().filter(|r| !r.pass()) {
                    eprintln!("{r}");
                }
                code = code.max(o.exit_code());
            }
            Ok(code)
        }
        Command::Sweep { common, seeds } => {
            let base = common.load()?;
            let case = common.case.unwrap_or(base.case);
            let dir = base.output_dir.join(case.as_str());
            let cfg = base.with_case(case).with_output_dir(&dir);
            let summary = bench::sweep(&cfg, &seeds.0)?;
            let mut code = 0;
            for r in &summary.rows {
                println!(
                    "{case} seed={:<4} converged={:<5} peak|u|={:<8.4} infeasible={:<3} certs={}",
                    r.seed,
                    r.convergence_step.map_or("none".to_string(), |k| k.to_string()),
                    r.peak_input,
                    r.infeasible_steps,
                    r.certs
                );
                if r.infeasible_steps > 0 || r.certs.starts_with("FAIL") {
                    code = 1;
                }
            }
            if let Some(m) = summary.median_peak() {
                println!("median peak |u| = {m:.4}; table in {}", dir.join("sweep.csv").display());
            }
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            // clap's own usage code (2) would collide with step-0 infeasibility
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
