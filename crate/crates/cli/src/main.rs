use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hpsfde::experiment::{self, ExperimentConfig};
use hpsfde::{Execution, RateKind};

#[derive(Parser)]
#[command(name = "hpsfde", version, about = "Simulate and certify hybrid pantograph SFDEs")]
struct Cli {
    /// Run on one thread, in path order.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a batch and write summary.csv (and per-path CSVs) into `--out`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the Itô formula for the configured Lyapunov family.
    CheckIto {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the requested stability certificates; exits 0 only if all hold.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate a decay rate or time average and write it as CSV.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        kind: RateKind,
        #[arg(long, default_value_t = 2.0)]
        power: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = load(&config)?;
            let batch = experiment::simulate(&cfg, &out, exec)?;
            println!(
                "{}: {} paths, {} exploded, written to {}",
                cfg.label(),
                batch.n_paths(),
                batch.n_exploded(),
                out.display()
            );
            Ok(true)
        }
        Command::CheckIto { config } => {
            let cfg = load(&config)?;
            let r = cfg.check_ito(exec)?;
            let ok = r.passes(cfg.dt);
            println!("t_end          {}", r.t_end);
            println!("E[V(t)-V(t0)]  {:.6e}", r.mean_delta_v);
            println!("E int LV ds    {:.6e}", r.mean_integral);
            println!("residual       {:.6e} +- {:.3e}", r.residual, r.stderr);
            println!("z              {:.3}", r.z);
            println!("adjusted z     {:.3}", r.adjusted_z(cfg.dt, 5.0));
            println!("paths          {} used, {} excluded", r.n_paths_used, r.n_excluded);
            println!("{}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
        Command::Certify { config } => {
            let cfg = load(&config)?;
            let mut all = true;
            for (kind, verdict) in cfg.certify()? {
                match verdict {
                    Ok(v) => {
                        all &= v.holds;
                        println!("{kind:?}: {}", if v.holds { "holds" } else { "fails" });
                        let margins: Vec<String> = v.margins.iter().map(|m| format!("{m:.6}")).collect();
                        println!("  margins  [{}]", margins.join(", "));
                        if let Some(e) = v.epsilon {
                            println!("  epsilon  {e:.6}");
                        }
                        if let Some(s) = v.supremum {
                            println!("  sup      {s:.6}");
                        }
                        for d in &v.detail {
                            println!("  {d}");
                        }
                        for n in &v.notes {
                            println!("  note: {n}");
                        }
                    }
                    Err(e) => {
                        all = false;
                        println!("{kind:?}: fails ({e})");
                    }
                }
            }
            Ok(all)
        }
        Command::Estimate {
            config,
            kind,
            power,
            out,
        } => {
            let cfg = load(&config)?;
            let report = cfg.estimate(kind, power, exec)?;
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            report.write_csv(BufWriter::new(f))?;
            println!(
                "{kind:?} p={power}: {:.6} (stderr {:.2e}, {} paths, {} exploded)",
                report.fitted_rate, report.stderr, report.n_paths_used, report.n_exploded
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
