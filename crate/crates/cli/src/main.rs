use std::process::ExitCode;

use clap::Parser;
use florae_cli::args::{Cli, Command};
use florae_cli::{api, commands};

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let out = commands::cmd_run(&args)?;
            println!(
                "wrote {} ({} agents at the end{})",
                out.record_path.display(),
                out.final_agents,
                if out.extinct { ", extinct" } else { "" }
            );
        }
        Command::Eval(args) => {
            let report = commands::cmd_eval(&args)?;
            if args.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let policy = args
                    .policy
                    .params
                    .as_ref()
                    .map_or_else(|| "init".to_string(), |p| p.display().to_string());
                let mutator = format!("{:?}", args.policy.mutator).to_lowercase();
                println!("{}", commands::format_report(args.world.preset.into(), &policy, &mutator, &report));
            }
        }
        Command::Meta(args) => {
            let result = commands::cmd_meta(&args)?;
            println!(
                "best fitness {:.1}; parameters in {}",
                result.best_fitness,
                args.out_dir.join("best.flpr").display()
            );
        }
        Command::Replay(args) => {
            let report = commands::cmd_replay(&args)?;
            if !report.is_exact() {
                eprintln!(
                    "replay diverged: {} of {} digests differ, first at step {}",
                    report.mismatches.len(),
                    report.checked,
                    report.mismatches[0]
                );
                return Ok(ExitCode::FAILURE);
            }
            println!("replay exact: {} digests over {} steps", report.checked, report.steps);
        }
        Command::Serve(args) => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(args.addr))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
