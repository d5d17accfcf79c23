use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alignlab_cli::commands::{self, Context};
use alignlab_cli::config::parse_config_file;
use alignlab_cli::error::exit;

#[derive(Parser)]
#[command(
    name = "alignlab",
    version,
    about = "Euler alignment experiments with singular kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "ALIGNLAB_OUT",
        default_value = "alignlab-out"
    )]
    out: PathBuf,

    /// Worker threads for sweeps and data-parallel kernels.
    #[arg(long, global = true, default_value_t = default_workers())]
    workers: usize,

    /// Reserved; every method is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Print errors only.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one configuration.
    Simulate,
    /// Audit the kernel against the assumptions of the regularity theory.
    KernelCheck,
    /// Compare an integrable and a singular kernel on matched data.
    Dichotomy,
    /// Temporal and spatial self-convergence study.
    Convergence,
    /// Run a parameter sweep.
    Sweep,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::COMPLETED
            };
            return ExitCode::from(code as u8);
        }
    };
    env_logger::Builder::new()
        .filter_level(if cli.quiet {
            log::LevelFilter::Error
        } else {
            log::LevelFilter::Info
        })
        .parse_default_env()
        .init();
    ExitCode::from(dispatch(&cli) as u8)
}

fn dispatch(cli: &Cli) -> i32 {
    let Some(path) = &cli.config else {
        eprintln!("error: --config <path> is required");
        return exit::USAGE;
    };
    if cli.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return exit::USAGE;
    }
    let plan = match parse_config_file(path) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let ctx = Context {
        out: cli.out.clone(),
        workers: cli.workers,
        quiet: cli.quiet,
    };
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
        .map_err(|e| alignlab_cli::error::CliError::Config(e.to_string()))
        .and_then(|pool| {
            pool.install(|| match cli.command {
                Command::Simulate => commands::cmd_simulate(&plan, &ctx),
                Command::KernelCheck => commands::cmd_kernel_check(&plan, &ctx),
                Command::Dichotomy => commands::cmd_dichotomy(&plan, &ctx),
                Command::Convergence => commands::cmd_convergence(&plan, &ctx),
                Command::Sweep => commands::cmd_sweep(&plan, &ctx),
            })
        });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
