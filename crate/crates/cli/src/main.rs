//! `nearfar` command-line interface.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible problem, 4 numerical failure.

mod args;
mod commands;
mod config;

use clap::Parser;

use args::{Cli, Command};
use config::Context;

/// Module that owns each subcommand, used to qualify error messages.
fn module(cmd: &Command) -> &'static str {
    match cmd {
        Command::Generate(_) => "cohort-io",
        Command::Match(_) | Command::Strengthen(_) => "matching-engine",
        Command::Estimate(_) | Command::Test(_) => "randomization-inference",
        Command::Are(_) | Command::Samplesize(_) => "efficiency-calculator",
        Command::Bias(_) | Command::Leaveoneout(_) => "bias-analysis",
        Command::Sensitivity(_) | Command::Heatmap(_) | Command::Power(_) | Command::Audit(_) => {
            "sensitivity-engine"
        }
        Command::Debias(_) => "debias-matching",
        Command::Simulate(_) => "simulate",
    }
}

fn run(ctx: &Context, cmd: &Command) -> nearfar::Result<()> {
    match cmd {
        Command::Generate(a) => commands::generate(ctx, a),
        Command::Match(a) => commands::matching(ctx, a, "match", false),
        Command::Strengthen(a) => commands::matching(ctx, a, "strengthen", true),
        Command::Estimate(a) => commands::estimate(ctx, a),
        Command::Test(a) => commands::test(ctx, a),
        Command::Are(a) => commands::are_cmd(ctx, a),
        Command::Samplesize(a) => commands::samplesize(ctx, a),
        Command::Bias(a) => commands::bias(ctx, a),
        Command::Leaveoneout(a) => commands::leaveoneout(ctx, a),
        Command::Sensitivity(a) => commands::sensitivity(ctx, a),
        Command::Heatmap(a) => commands::heatmap(ctx, a),
        Command::Power(a) => commands::power(ctx, a),
        Command::Audit(a) => commands::audit(ctx, a),
        Command::Debias(a) => commands::debias(ctx, a),
        Command::Simulate(a) => commands::simulate(ctx, a),
    }
}

fn main() {
    let cli = Cli::parse();
    let ctx = Context {
        out_dir: cli.out_dir,
        seed_flag: cli.seed,
        workers: cli.workers,
        config: cli.config,
    };
    if ctx.workers == 0 {
        eprintln!("nearfar: --workers must be at least 1");
        std::process::exit(2);
    }
    if let Err(e) = run(&ctx, &cli.command) {
        eprintln!("nearfar {}: {e}", module(&cli.command));
        std::process::exit(e.exit_code());
    }
}
