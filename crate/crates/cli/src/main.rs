use bouquet_cli::{run, Command, Outcome, RunConfig, Sink};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const WORKERS_ENV: &str = "BOUQUET_WORKERS";

#[derive(Parser)]
#[command(name = "bouquet", version, about = "Dynamic rays, brush projections and conjugacies near infinity")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (JSON). Missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Trace ray tails for the configured addresses.
    Trace,
    /// Escape-classification PNG with ray overlays.
    Render,
    /// Project tail points by π_R and measure commutation defects.
    Project,
    /// Check the near-infinity conjugacy with the disjoint-type rescaling.
    Conjugate,
    /// π table, z_n table and axiom report for a straight brush.
    Brush,
    /// Run the invariant suite; exit 3 if any check fails.
    Verify,
}

fn fail(code: u8, kind: &str, message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "kind": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(1, "UsageError", e.to_string().trim()),
    };
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(s) => match RunConfig::from_json(&s) {
                Ok(c) => c,
                Err(e) => return fail(1, e.kind(), &e.to_string()),
            },
            Err(e) => return fail(1, "UsageError", &format!("{}: {e}", p.display())),
        },
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let dir = cli.out.clone().or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| "out".into());
    let mut sink = match Sink::new(&dir, cfg.hash()) {
        Ok(s) => s,
        Err(e) => return fail(1, e.kind(), &e.to_string()),
    };
    let cmd = match cli.command {
        Cmd::Trace => Command::Trace,
        Cmd::Render => Command::Render,
        Cmd::Project => Command::Project,
        Cmd::Conjugate => Command::Conjugate,
        Cmd::Brush => Command::Brush,
        Cmd::Verify => Command::Verify,
    };
    match run(cmd, &cfg, &mut sink) {
        Ok(Outcome::Done(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            ExitCode::SUCCESS
        }
        Ok(Outcome::Failed(v)) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            fail(3, "VerificationFailed", "one or more checks failed")
        }
        Err(e) => fail(2, e.kind(), &e.to_string()),
    }
}
