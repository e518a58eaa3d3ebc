mod config;
mod run;

use clap::Parser;
use config::RunConfig;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Config-driven experiments on flat tori.
#[derive(Debug, Parser)]
#[command(name = "fraclab", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Validate the config and print the resolved plan.
    #[arg(long)]
    dry_run: bool,
    /// Worker threads for parallel maps.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

pub enum Failure {
    Config(String),
    Numerical(String),
}

impl From<fraclab::Error> for Failure {
    fn from(e: fraclab::Error) -> Self {
        use fraclab::Error as E;
        match e {
            E::InvalidTorus(_) | E::InvalidGrid(_) | E::ShapeMismatch(_) | E::InvalidParameter { .. } => {
                Failure::Config(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Numerical(format!("json: {e}"))
    }
}

fn load(args: &Args) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| format!("{}: {e}", args.config.display()))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| format!("config: {e}"))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.threads == 0 {
        return Err("--threads must be at least 1".into());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cfg = match load(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let plan = match run::Plan::resolve(&cfg) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if args.dry_run {
        let out = serde_json::json!({ "config": cfg, "plan": plan });
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out).expect("plan serializes"));
        return ExitCode::SUCCESS;
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
        eprintln!("warning: thread pool: {e}");
    }

    let start = Instant::now();
    let mut out = match run::Output::create(&cfg.output_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = plan.execute(&cfg, &mut out);
    let (status, code) = match &result {
        Ok(()) => ("ok".to_string(), 0),
        Err(Failure::Config(e)) => (format!("invalid: {e}"), 2),
        Err(Failure::Numerical(e)) => (format!("numerical failure: {e}"), 3),
    };
    let manifest = serde_json::json!({
        "config": cfg,
        "versions": {
            "fraclab": env!("CARGO_PKG_VERSION"),
            "fraclab_cli": env!("CARGO_PKG_VERSION"),
        },
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "seed": cfg.seed,
        "threads": args.threads,
        "status": status,
        "artifacts": out.artifacts,
    });
    if let Err(e) = std::fs::write(
        cfg.output_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    ) {
        eprintln!("error: writing manifest: {e}");
        return ExitCode::from(3);
    }
    if code != 0 {
        eprintln!("error: {status}");
    }
    ExitCode::from(code)
}
