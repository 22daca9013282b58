//! Command line entry point.
//!
//! Subcommands:
//!   run <config.toml>       run one simulation
//!   converge <config.toml>  balanced-jet convergence study
//!   check [n [order]]       operator-identity suite
//!   version                 print the version
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

use std::path::Path;
use std::process::ExitCode;

use tsw::config::RunConfig;
use tsw::driver;
use tsw::error::Error;

fn usage() -> &'static str {
    "usage: tsw <command>\n\
     commands:\n\
       run <config.toml>       run a simulation\n\
       converge <config.toml>  run the convergence study in [converge]\n\
       check [n [order]]       run the operator-identity checks (default 4 2)\n\
       version                 print version\n\
     environment:\n\
       TSW_OUTPUT_DIR          overrides output.dir from the config"
}

fn exit_code_for(err: &Error) -> ExitCode {
    match err {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Io(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn cmd_run(path: &str) -> Result<(), Error> {
    let cfg = RunConfig::load(Path::new(path))?;
    let artifacts = driver::run_simulation(&cfg)?;
    let last = artifacts.records.last().expect("at least the t=0 record");
    println!(
        "completed {} steps; diagnostics in {}",
        artifacts.steps_completed,
        artifacts.out_dir.join("diagnostics.csv").display()
    );
    println!(
        "mass drift {:.3e}  energy drift {:.3e}  entropy drift {:.3e}",
        last.mass_err_rel, last.energy_err_rel, last.entropy_err_rel
    );
    Ok(())
}

fn cmd_converge(path: &str) -> Result<(), Error> {
    let cfg = RunConfig::load(Path::new(path))?;
    let study = driver::run_convergence_study(&cfg)?;
    print!("{}", study.table());
    println!(
        "written to {}",
        cfg.output_dir().join("convergence.csv").display()
    );
    Ok(())
}

fn cmd_check(args: &[String]) -> Result<bool, Error> {
    let n: usize = args
        .first()
        .map(|s| s.parse().map_err(|_| Error::invalid(format!("bad mesh size `{s}`"))))
        .transpose()?
        .unwrap_or(4);
    let order: usize = args
        .get(1)
        .map(|s| s.parse().map_err(|_| Error::invalid(format!("bad order `{s}`"))))
        .transpose()?
        .unwrap_or(2);
    let entries = driver::check_report(n, n, order)?;
    let mut all_pass = true;
    println!("operator identities on a {n}x{n} mesh, order {order}:");
    for e in &entries {
        let status = if e.pass() { "pass" } else { "FAIL" };
        all_pass &= e.pass();
        println!(
            "  [{status}] {:<42} residual {:9.3e}  (tolerance {:9.3e})",
            e.name, e.residual, e.threshold
        );
    }
    Ok(all_pass)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(cmd) = args.first() else {
        eprintln!("{}", usage());
        return ExitCode::from(1);
    };
    let result: Result<ExitCode, Error> = match cmd.as_str() {
        "run" => match args.get(1) {
            Some(path) => cmd_run(path).map(|_| ExitCode::SUCCESS),
            None => {
                eprintln!("run: missing config path\n{}", usage());
                return ExitCode::from(1);
            }
        },
        "converge" => match args.get(1) {
            Some(path) => cmd_converge(path).map(|_| ExitCode::SUCCESS),
            None => {
                eprintln!("converge: missing config path\n{}", usage());
                return ExitCode::from(1);
            }
        },
        "check" => cmd_check(&args[1..]).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }),
        "version" => {
            println!("tsw {}", driver::VERSION);
            Ok(ExitCode::SUCCESS)
        }
        other => {
            eprintln!("unknown command `{other}`\n{}", usage());
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
