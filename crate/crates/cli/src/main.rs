use std::panic;
use std::process::ExitCode;

use blockscan_cli::{cmd_bench, cmd_bound, cmd_oracle_check, cmd_scan, cmd_synth, exit_code, Cli, Command};
use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = panic::catch_unwind(|| match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| 0),
        Command::Scan(a) => cmd_scan(a).map(|_| 0),
        Command::Bound(a) => cmd_bound(a).map(|_| 0),
        Command::Bench(a) => cmd_bench(a).map(|_| 0),
        Command::OracleCheck(a) => cmd_oracle_check(a).map(|ok| if ok { 0 } else { 4 }),
    });
    let code = match outcome {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => 4,
    };
    ExitCode::from(code as u8)
}
