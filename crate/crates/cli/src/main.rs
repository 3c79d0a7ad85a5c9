use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strategist_harness::{recovery_study, transfer_study, StudyConfig};

#[derive(Parser)]
#[command(name = "strategist", version, about = "BO strategy recovery studies and demonstration service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the generating length-scale weights from Rosenbrock BO trajectories.
    Recover(StudyArgs),
    /// Compare fixed, self-adaptive and transferred BO settings on Rosenbrock.
    Transfer(StudyArgs),
    /// Run the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Session data directory (defaults to $STRATEGIST_DATA_DIR, then ./strategist-data).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Small settings that finish in seconds (dim 2, 2 trials unless overridden).
    #[arg(long)]
    smoke: bool,
}

impl StudyArgs {
    fn config(&self) -> StudyConfig {
        let base = if self.smoke { StudyConfig::smoke() } else { StudyConfig::paper(self.dim.unwrap_or(30)) };
        let mut cfg = match self.dim {
            Some(dim) if self.smoke => StudyConfig { dim, ..base },
            _ => base,
        };
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.seed = self.seed;
        cfg
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Recover(args) => recovery_study(&args.config(), &args.out).map(|r| {
            for case in &r.cases {
                println!("lambda {}: {} trials, {} excluded", case.lambda, case.trials.len(), case.excluded.len());
            }
            println!("wrote {}", args.out.display());
        }),
        Command::Transfer(args) => transfer_study(&args.config(), &args.out).map(|r| {
            let last = r.config.transfer_iterations;
            for arm in &r.arms {
                if !arm.trials.is_empty() {
                    let (m, lo, hi) = r.band(arm.arm, last);
                    println!("{}: best at iteration {last} = {m:.4} [{lo:.4}, {hi:.4}]", arm.arm.name());
                }
            }
            println!("wrote {}", args.out.display());
        }),
        Command::Serve { port, data_dir } => {
            let dir = data_dir.unwrap_or_else(strategist_service::data_dir_from_env);
            let addr = SocketAddr::from(([0, 0, 0, 0], port));
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            return match rt.block_on(strategist_service::serve(addr, dir)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
