use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use wcl_cli::{config_failure, run, CliError, Command, RunConfig, EXIT_INVALID};

#[derive(Parser)]
#[command(name = "wcl", version, about = "Weighted circle method diagnostics for quadratic forms")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Form structure, exact κ audits, distribution diagnostics, witness search.
    CheckConditions,
    /// Truncated singular series with per-prime factors.
    SingularSeries,
    /// p^m M(p^m) against partial sums of B(p^k).
    LocalDensity,
    /// Box construction, σ∞ and the main-term integral.
    RealDensity,
    /// Brute-force weighted counts over the X grid.
    Count,
    /// Count against the predicted main term.
    Predict,
    /// |S(α)| against the Weyl bound.
    Weyl,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::CheckConditions => Command::CheckConditions,
            Cmd::SingularSeries => Command::SingularSeries,
            Cmd::LocalDensity => Command::LocalDensity,
            Cmd::RealDensity => Command::RealDensity,
            Cmd::Count => Command::Count,
            Cmd::Predict => Command::Predict,
            Cmd::Weyl => Command::Weyl,
        }
    }
}

#[derive(Args)]
struct Opts {
    /// JSON config file; its keys override flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Form as a JSON path or inline `{"s":..,"F":..,"t":..}`.
    #[arg(long, global = true)]
    form: Option<String>,
    /// unit, primes, kfree, kfree:k or custom:path.
    #[arg(long, global = true)]
    weights: Option<String>,
    #[arg(long, global = true)]
    order: Option<u32>,
    #[arg(long = "p-max", global = true)]
    p_max: Option<u64>,
    #[arg(long = "prime-depth", global = true)]
    prime_depth: Option<u32>,
    #[arg(long, global = true)]
    mmax: Option<u32>,
    /// Comma-separated primes for local-density.
    #[arg(long, global = true, value_delimiter = ',')]
    primes: Option<Vec<u64>>,
    /// Comma-separated X grid.
    #[arg(long = "x", global = true, value_delimiter = ',')]
    x_grid: Option<Vec<f64>>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "count-cap", global = true)]
    count_cap: Option<f64>,
    /// Number of seeded minor-arc samples, or a file of α values.
    #[arg(long, global = true)]
    alphas: Option<String>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Report directory; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Keep wall-clock fields in the report.
    #[arg(long, global = true)]
    timings: bool,
}

impl Opts {
    fn to_map(&self) -> Result<Map<String, Value>, CliError> {
        let mut m = Map::new();
        let mut set = |k: &str, v: Value| {
            m.insert(k.into(), v);
        };
        if let Some(f) = &self.form {
            let v = if f.trim_start().starts_with('{') {
                serde_json::from_str(f).map_err(|e| CliError::Config(format!("--form: {e}")))?
            } else {
                json!(f)
            };
            set("form", v);
        }
        if let Some(a) = &self.alphas {
            set("alphas", a.parse::<usize>().map_or_else(|_| json!(a), |n| json!(n)));
        }
        self.weights.as_ref().map(|v| set("weights", json!(v)));
        self.order.map(|v| set("order", json!(v)));
        self.p_max.map(|v| set("p_max", json!(v)));
        self.prime_depth.map(|v| set("prime_depth", json!(v)));
        self.mmax.map(|v| set("mmax", json!(v)));
        self.primes.as_ref().map(|v| set("primes", json!(v)));
        self.x_grid.as_ref().map(|v| set("x_grid", json!(v)));
        self.eta.map(|v| set("eta", json!(v)));
        self.samples.map(|v| set("samples", json!(v)));
        self.seed.map(|v| set("seed", json!(v)));
        self.count_cap.map(|v| set("count_cap", json!(v)));
        self.threads.map(|v| set("threads", json!(v)));
        self.out.as_ref().map(|v| set("out", json!(v)));
        if self.timings {
            set("timings", json!(true));
        }
        Ok(m)
    }
}

fn load_config(opts: &Opts) -> Result<RunConfig, CliError> {
    let overrides = match &opts.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    RunConfig::merge(opts.to_map()?, overrides)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let command = Command::from(cli.command);
    let outcome = match load_config(&cli.opts) {
        Ok(cfg) => {
            let out = run(command, &cfg);
            if cfg.out.is_none() {
                print!("{}", out.report);
            }
            out
        }
        Err(e) => {
            eprintln!("error: {e}");
            let out = config_failure(command, &e);
            print!("{}", out.report);
            out
        }
    };
    for e in serde_json::from_str::<Value>(&outcome.report)
        .ok()
        .and_then(|v| v["errors"].as_array().cloned())
        .unwrap_or_default()
    {
        if let Some(msg) = e["message"].as_str() {
            eprintln!("error [{}]: {msg}", e["stage"].as_str().unwrap_or(""));
        }
    }
    ExitCode::from(outcome.exit_code as u8)
}
