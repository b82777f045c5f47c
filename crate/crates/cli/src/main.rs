use std::path::PathBuf;
use std::process::ExitCode;

use anomix::solver::DtPolicy;
use anomix_cli::{cmd_mix_test, cmd_ns_check, cmd_sweep, cmd_validate, Exit, GlobalOpts};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anomix", version, about = "Anomalous dissipation laboratory")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides output_dir in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_policy)]
    dt_policy: Option<DtPolicy>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the cascade constraints.
    Validate,
    /// κ-sweep with dissipation profiles.
    Sweep,
    /// Mixing-stage contract and refinement error.
    MixTest,
    /// Navier–Stokes residuals and force convergence.
    NsCheck {
        /// Viscosity; repeat for several. Defaults to 0 and every ν_q.
        #[arg(long = "nu")]
        nu: Vec<f64>,
    },
}

fn parse_policy(s: &str) -> Result<DtPolicy, String> {
    s.parse()
}

fn run(cli: Cli) -> Exit {
    let Some(config) = cli.config else {
        eprintln!("error: --config is required");
        return Exit::Input;
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return Exit::Input;
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return Exit::Input;
        }
    }
    let mut g = GlobalOpts {
        out: cli.out,
        dt_policy: cli.dt_policy,
        nus: Vec::new(),
    };
    match cli.command {
        Command::Validate => cmd_validate(&config),
        Command::Sweep => cmd_sweep(&config, &g),
        Command::MixTest => cmd_mix_test(&config, &g),
        Command::NsCheck { nu } => {
            g.nus = nu;
            cmd_ns_check(&config, &g)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    ExitCode::from(run(cli) as u8)
}
