mod commands;
mod config;
mod output;

use anyhow::Result;
use clap::Parser;
use commands::Setup;
use config::{global_part, overlay, read_file, Cli, Command, Global};
use serde::Serialize;
use skeleton_control::io::ChiTable;
use skeleton_control::rng::with_workers;
use std::process::ExitCode;

fn section(file: &toml::Table, name: &str) -> Option<toml::Value> {
    file.get(name).cloned()
}

fn run_with<T: Serialize + serde::de::DeserializeOwned + Send>(
    global: &Global,
    file: &toml::Table,
    name: &'static str,
    flags: &T,
    body: fn(&Setup, &mut T, Option<&mut output::Run>) -> Result<()>,
) -> Result<()> {
    let mut args: T = overlay(flags, section(file, name).as_ref(), name)?;
    let setup = Setup {
        seed: global.seed.unwrap_or(1),
        chi: ChiTable::load(global.chi_fixture.as_deref())?,
        dry_run: global.dry_run,
    };
    if setup.dry_run {
        return body(&setup, &mut args, None);
    }
    let echo = serde_json::json!({
        "global": {
            "seed": setup.seed,
            "workers": global.workers.unwrap_or(0),
            "chi_fixture": global.chi_fixture.as_ref().map(|p| p.display().to_string()),
        },
    });
    let out = global.out.clone().unwrap_or_else(|| ".".into());
    let mut run = output::Run::new(out, name, echo)?;
    with_workers(global.workers.unwrap_or(0), || {
        body(&setup, &mut args, Some(&mut run))
    })?;
    let sidecar = run.finish()?;
    eprintln!("wrote {}", sidecar.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = read_file(cli.global.config.as_deref())?;
    let mut global: Global = overlay(&cli.global, Some(&global_part(&file)), "global")?;
    global.config = cli.global.config.clone();
    global.dry_run = cli.global.dry_run;
    let name = cli.command.name();
    match &cli.command {
        Command::EstimateChi(a) => run_with(&global, &file, name, a, commands::estimate_chi_cmd),
        Command::SampleSkeleton(a) => {
            run_with(&global, &file, name, a, commands::sample_skeleton_cmd)
        }
        Command::Solve(a) => run_with(&global, &file, name, a, commands::solve_cmd),
        Command::Hedge(a) => run_with(&global, &file, name, a, commands::hedge_cmd),
        Command::Rates(a) => run_with(&global, &file, name, a, commands::rates_cmd),
    }
}
