use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use horocycle::config::{ExperimentConfig, Preset};
use horocycle::pool::{resolve_workers, Pool};
use horocycle::verify::{self, Suite};
use horocycle::{runner, LabError};

#[derive(Parser)]
#[command(name = "horocycle", version, about = "Equidistribution experiments for horocycle sections")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (overrides `out` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite: identities, group, measure, distance,
    /// mixing, ensembles or full.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print preset configurations.
    Presets {
        /// One line per preset.
        #[arg(long)]
        list: bool,
        /// Print the expanded config of one preset.
        #[arg(long)]
        show: Option<String>,
    },
}

fn run(command: Command) -> Result<bool, LabError> {
    match command {
        Command::Run { config, seed, workers, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            let pool = Pool::new(resolve_workers(workers, cfg.workers));
            let report = runner::run(&cfg, &pool)?;
            runner::write_outputs(&report, &cfg.out)?;
            for f in &report.fits {
                match &f.fit {
                    Some(fit) => println!("{:<28} delta_hat {:>7.3}  r2 {:.3}", f.series, fit.delta_hat, fit.r2),
                    None => println!("{:<28} no fit: {}", f.series, f.note.as_deref().unwrap_or("")),
                }
            }
            for c in &report.verification {
                println!("{c}");
            }
            println!(
                "{} rows written to {} in {:.1} s",
                report.results.len(),
                cfg.out.display(),
                report.wall_clock_ms / 1e3
            );
            Ok(report.verification.iter().all(|c| c.passed))
        }
        Command::Verify { suite, workers } => {
            let suite: Suite = suite.parse()?;
            let pool = Pool::new(resolve_workers(workers, 1));
            let mut ok = true;
            for &id in suite.criteria() {
                let c = verify::criterion(id, &pool);
                println!("{c}");
                ok &= c.passed;
            }
            Ok(ok)
        }
        Command::Presets { list, show } => {
            if let Some(name) = show {
                let p: Preset = name.parse()?;
                print!("{}", ExperimentConfig::preset(p).to_toml_string());
            } else if list {
                for p in Preset::ALL {
                    println!("{:<18} {}", p.name(), p.summary());
                }
            } else {
                for p in Preset::ALL {
                    println!("{}", p.name());
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
