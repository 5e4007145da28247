mod args;
mod commands;
mod output;
mod svg;

use std::process::ExitCode;

use clap::Parser;
use spu_core::SpuError;

use args::{Cli, Command};
use commands::Ctx;
use output::Output;

/// Process exit status for a failed run.
fn exit_code(e: &SpuError) -> u8 {
    match e {
        SpuError::Io(_) | SpuError::Malformed(_) | SpuError::Json(_) => 3,
        SpuError::NotSymmetric { .. }
        | SpuError::NotPositiveDefinite { .. }
        | SpuError::Dimension(_)
        | SpuError::InvalidParameter(_)
        | SpuError::Unrealizable(_) => 4,
        SpuError::Numerical(_) => 5,
        SpuError::Patch { source, .. } => exit_code(source),
    }
}

fn run(cli: &Cli) -> spu_core::Result<()> {
    if cli.chains == 0 {
        return Err(SpuError::InvalidParameter("--chains must be at least 1".into()));
    }
    let ctx = Ctx { seed: cli.seed, chains: cli.chains };
    let mut out = Output::create(&cli.out)?;
    let name = match &cli.command {
        Command::Sample(a) => {
            commands::sample(a, &ctx, &mut out)?;
            "sample"
        }
        Command::Invert(a) => {
            commands::invert(a, &ctx, &mut out)?;
            "invert"
        }
        Command::Gpr(a) => {
            commands::gpr(a, &ctx, &mut out)?;
            "gpr"
        }
        Command::Lsq(a) => {
            commands::lsq(a, &ctx, &mut out)?;
            "lsq"
        }
        Command::SngpSample(a) => {
            commands::sngp(a, &ctx, &mut out)?;
            "sngp-sample"
        }
        Command::Calibrate(a) => {
            commands::calibrate(a, &ctx, &mut out)?;
            "calibrate"
        }
        Command::Spectroscopy(a) => {
            commands::spectroscopy(a, &ctx, &mut out)?;
            "spectroscopy"
        }
        Command::Faultscan(a) => {
            commands::faultscan(a, &ctx, &mut out)?;
            "faultscan"
        }
        Command::Perf(a) => {
            commands::perf(a, &mut out)?;
            "perf"
        }
        Command::Study(a) => {
            commands::study(a, &ctx, &mut out)?;
            "study"
        }
    };
    out.finish(name, cli.seed, cli.chains, &cli.command)?;
    log::info!("outputs in {}", cli.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .init();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("spu: error: {e}");
            ExitCode::from(exit_code(&e))
        }
        // the panic message is already on stderr
        Err(_) => ExitCode::from(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_errors_map_through_their_source() {
        let inner = SpuError::NotPositiveDefinite { min_eigenvalue: -1.0 };
        let e = SpuError::Patch { index: 3, source: Box::new(inner) };
        assert_eq!(exit_code(&e), 4);
        assert_eq!(exit_code(&SpuError::Numerical("x".into())), 5);
        assert_eq!(exit_code(&SpuError::Malformed("x".into())), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
