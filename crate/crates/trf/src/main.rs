use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use trf::cli::{Cli, Command};
use trf::commands::{self, Ctx};
use trf::pipeline::{self, GlobalOverrides};
use trf::provenance::Provenance;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    if let Command::Run(args) = &cli.command {
        let globals = GlobalOverrides {
            seed: cli.seed,
            out_dir: cli.out_dir.clone(),
            threads: cli.threads,
        };
        let loaded = pipeline::load_config(&args.config, &args.overrides, &globals)?;
        if args.dry_run {
            println!("config {} (hash {})", args.config.display(), trf::provenance::sha256_hex(loaded.canonical.as_bytes()));
            println!("output directory {}", loaded.config.out_dir.display());
            for (i, (name, what)) in loaded.stages().iter().enumerate() {
                println!("{}. {name}: {what}", i + 1);
            }
            return Ok(());
        }
        init_threads(loaded.config.threads)?;
        let manifest = pipeline::run(&loaded)?;
        println!(
            "wrote {} files to {}",
            manifest.outputs.len() + 1,
            loaded.config.out_dir.display()
        );
        return Ok(());
    }
    init_threads(cli.threads)?;
    let seed = cli.seed.unwrap_or(0);
    let ctx = Ctx {
        out_dir: cli.out_dir.clone(),
        seed,
        prov: Provenance::new(&serde_json::to_string(&cli.command)?, seed),
    };
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &ctx),
        Command::Cutoff(a) => commands::cutoff(a, &ctx),
        Command::Simulate(a) => commands::simulate(a, &ctx),
        Command::Stats(a) => commands::stats(a, &ctx),
        Command::Fit(a) => commands::fit_command(a, &ctx),
        Command::MatchRange(a) => commands::match_range(a, &ctx),
        Command::Fbplot(a) => commands::fbplot(a, &ctx),
        Command::Run(_) => unreachable!("handled above"),
    }
}
