use std::path::PathBuf;
use std::process::ExitCode;

use chaotun_cli::{run, RunConfig, Task};
use clap::Parser;

/// Modulated-pendulum tunneling toolkit: classical charts, Floquet
/// splittings, tunneling protocols and splitting statistics.
#[derive(Debug, Parser)]
#[command(name = "chaotun", version)]
struct Cli {
    #[arg(value_enum)]
    task: Task,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` of the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Seed for random ensembles (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        run(cli.task, &cfg, &out, cli.workers).map(|m| (m, out))
    })();
    match result {
        Ok((m, out)) => {
            println!("{}: {} files in {}", m.task, m.outputs.len(), out.display());
            println!("{}", serde_json::to_string(&m.summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
