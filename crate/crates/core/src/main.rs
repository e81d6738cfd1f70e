use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpme::cli::{self, ScenarioConfig, ScenarioKind, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "fpme", version, about = "Porous fractional p-Laplacian scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one resolvent problem.
    SolveElliptic(Common),
    /// Compute the positive steady state.
    SteadyState(Common),
    /// Run a time-dependent scenario.
    Evolve(Common),
    /// Run two trajectories and report their contraction gap.
    Contraction(Common),
    /// Run every scenario listed in a sweep file concurrently.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Treat regime mismatches as errors.
    #[arg(long)]
    strict: bool,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &Common, path: &Path, force: Option<ScenarioKind>) -> fpme::Result<ScenarioConfig> {
    let mut cfg = cli::load_config(path, args.strict)?;
    if let Some(kind) = force {
        cfg.scenario = kind;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_one(args: &Common, path: &Path, out: &Path, force: Option<ScenarioKind>) -> i32 {
    let result = load(args, path, force).and_then(|cfg| {
        if force.is_none() && !cfg.scenario.is_evolution() {
            return Err(fpme::Error::InvalidParams(format!(
                "`evolve` cannot run a {} scenario",
                cfg.scenario.as_str()
            )));
        }
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        cli::run_scenario(&cfg, out)
    });
    match result {
        Ok(report) => {
            println!("{}: {} -> {}", path.display(), report.get("event").unwrap_or("done"), out.display());
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            EXIT_CONFIG
        }
    }
}

fn sweep(args: &Common) -> i32 {
    let paths = match cli::load_sweep(&args.config) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return EXIT_CONFIG;
        }
    };
    let codes: Vec<i32> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .enumerate()
            .map(|(k, path)| {
                let stem = path.file_stem().map_or_else(|| format!("run{k}"), |s| s.to_string_lossy().into_owned());
                let out = args.out.join(format!("{k:03}_{stem}"));
                s.spawn(move || {
                    let kind = cli::load_config(path, args.strict).map(|c| c.scenario).ok();
                    let force = kind.filter(|k| !k.is_evolution());
                    run_one(args, path, &out, force)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or(EXIT_CONFIG)).collect()
    });
    if codes.contains(&EXIT_CONFIG) {
        EXIT_CONFIG
    } else {
        codes.into_iter().max().unwrap_or(0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::SolveElliptic(a) => run_one(a, &a.config, &a.out, Some(ScenarioKind::Elliptic)),
        Command::SteadyState(a) => run_one(a, &a.config, &a.out, Some(ScenarioKind::SteadyState)),
        Command::Contraction(a) => run_one(a, &a.config, &a.out, Some(ScenarioKind::Contraction)),
        Command::Evolve(a) => run_one(a, &a.config, &a.out, None),
        Command::Sweep(a) => sweep(a),
    };
    ExitCode::from(code as u8)
}
