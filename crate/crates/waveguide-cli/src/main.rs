//! `waveguide`: batch driver for bound states, resonances, field sweeps and validation checks.
//!
//! Exit codes: 0 success, 2 hypothesis failure, 3 solver failure, 4 configuration error.

mod config;
mod record;
mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use record::RecordWriter;
use run::{Checks, Context, Failure};

#[derive(Parser)]
#[command(name = "waveguide", version, about = "Bound states and Stark resonances of curved quantum waveguides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    config: PathBuf,
    /// Replace a scalar config entry, e.g. `--override field.f=0.002`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the geometric and field hypotheses.
    GeometryCheck(Common),
    /// Lowest eigenvalues below the threshold and the decay rate of the ground state.
    BoundStates(Common),
    /// Resonance at `field.f` by the beta-plateau search.
    Resonance(Common),
    /// Resonances over `field.f_list` and the width-law fit.
    Sweep(Common),
    /// Tilted transverse mode, Airy asymptotics and Weyl sequences; all when no flag is given.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tilted: bool,
        #[arg(long)]
        airy: bool,
        #[arg(long)]
        weyl: bool,
    },
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let (common, name) = match &cli.command {
        Command::GeometryCheck(c) => (c, "geometry-check"),
        Command::BoundStates(c) => (c, "bound-states"),
        Command::Resonance(c) => (c, "resonance"),
        Command::Sweep(c) => (c, "sweep"),
        Command::Validate { common, .. } => (common, "validate"),
    };
    let cfg = RunConfig::load(&common.config, &common.overrides)?;
    let hash = cfg.hash();
    let writer = RecordWriter::open(&cfg.output.dir, &cfg.output.records)?;
    println!("{name}: config {} ({})", common.config.display(), &hash[..12]);
    let mut ctx = Context { cfg, hash, writer };
    let result = match cli.command {
        Command::GeometryCheck(_) => run::geometry_check(&mut ctx),
        Command::BoundStates(_) => run::bound_states(&mut ctx),
        Command::Resonance(_) => run::resonance(&mut ctx),
        Command::Sweep(_) => run::sweep(&mut ctx),
        Command::Validate { tilted, airy, weyl, .. } => run::validate(&mut ctx, Checks { tilted, airy, weyl }),
    };
    println!("records: {}", ctx.writer.path().display());
    result
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 4 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(f) = execute(cli) {
        eprintln!("error: {}", f.message());
        std::process::exit(f.exit_code());
    }
}
