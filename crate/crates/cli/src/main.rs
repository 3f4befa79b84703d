use std::path::PathBuf;
use std::process::exit;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use hiddennl_cli::{render, run, Command, Format, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "hiddennl", version, about = "Hidden nonlocality activation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Local dimension (max dimension for table1).
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    p: Option<f64>,
    #[arg(long, global = true)]
    p_from: Option<f64>,
    #[arg(long, global = true)]
    p_to: Option<f64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Bisection tolerance on p.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    out: OutFormat,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Objective tolerance of the SDP solver.
    #[arg(long, global = true)]
    eps: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Critical weights for d = 2..=dmax.
    Table1,
    /// Witness optimum over a grid of Werner weights.
    WitnessScan,
    Activate,
    Teleport,
    Multiparty,
    /// Run a verification suite (lemma, identity, all).
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Print a state matrix as JSON (werner, werner2, ancilla, ancilla3).
    State { which: String },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

fn config_from(cli: Cli) -> RunConfig {
    let command = match cli.command {
        Cmd::Table1 => Command::Table1,
        Cmd::WitnessScan => Command::WitnessScan,
        Cmd::Activate => Command::Activate,
        Cmd::Teleport => Command::Teleport,
        Cmd::Multiparty => Command::Multiparty,
        Cmd::Verify { suite } => Command::Verify { suite },
        Cmd::State { which } => Command::State { which },
    };
    let mut config = RunConfig::new(command);
    if let Some(d) = cli.d {
        config.d = d;
    }
    config.p = cli.p;
    config.p_from = cli.p_from;
    config.p_to = cli.p_to;
    if let Some(s) = cli.steps {
        config.steps = s;
    }
    if let Some(t) = cli.tol {
        config.tol = t;
    }
    config.out = match cli.out {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    config.cache_dir = cli.cache_dir;
    config.seed = cli.seed;
    if let Some(m) = cli.max_iter {
        config.solver.max_iter = m;
    }
    if let Some(e) = cli.eps {
        config.solver.eps_obj = e;
    }
    config
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            exit(code);
        }
    };
    let config = config_from(cli);
    let output = match run(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    };
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|t| t.as_secs())
        .unwrap_or(0);
    match render(&output, &config, timestamp) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            exit(e.exit_code());
        }
    }
    exit(output.exit_code());
}
