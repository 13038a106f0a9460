use std::path::{Path, PathBuf};
use std::process::ExitCode;

use axon_core::checks::invariant_suite;
use axon_core::closed_loop::{
    compare_and_sweep, compare_modes, prepare, run_scenario, ControllerMode, RunRecord, RunStatus, ScenarioConfig,
    SweepParam, SweepRow,
};
use axon_core::io::{load_config, sweep_csv, write_outputs};
use axon_core::Error;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "axon", version, about = "Axon growth simulator with event-triggered boundary control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Continuous,
    Etc,
    Zoh,
}

impl From<Mode> for ControllerMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Continuous => ControllerMode::Continuous,
            Mode::Etc => ControllerMode::Etc,
            Mode::Zoh => ControllerMode::Zoh,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation.
    Simulate {
        /// Scenario file; the reference preset when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the mode in the scenario file.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long, env = "AXON_OUT")]
        out: PathBuf,
    },
    /// Run continuous and event-triggered control on the same scenario.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, env = "AXON_OUT")]
        out: PathBuf,
    },
    /// Re-run the scenario for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// eta, sigma, gamma, N or dt.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, env = "AXON_OUT")]
        out: PathBuf,
    },
    /// Print derived constants, trigger parameters and the dwell time.
    Constants {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the invariant self-test.
    Check {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Exit {
    Ok = 0,
    Config = 1,
    Numeric = 2,
    EventCap = 3,
}

fn exit_for_error(e: &Error) -> Exit {
    match e {
        Error::Config { .. }
        | Error::InvalidParameter(_)
        | Error::OutOfRange { .. }
        | Error::GridTooSmall(_)
        | Error::GainConditionViolated(_)
        | Error::NotHurwitz(_) => Exit::Config,
        _ => Exit::Numeric,
    }
}

fn exit_for_status(s: &RunStatus) -> Exit {
    match s {
        RunStatus::Completed => Exit::Ok,
        RunStatus::EventCapExceeded => Exit::EventCap,
        _ => Exit::Numeric,
    }
}

struct Failure {
    exit: Exit,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            exit: exit_for_error(&e),
            message: e.to_string(),
        }
    }
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        None => Ok(ScenarioConfig::paper_fig2()),
        Some(p) => load_config(p).map_err(|e| Failure {
            exit: Exit::Config,
            message: format!("{}: {e}", p.display()),
        }),
    }
}

fn report(r: &RunRecord) {
    let last = r.final_sample().expect("initial sample");
    println!(
        "{:<10} status={} t={:.2} s l={:.6e} m events={} wall={:.2} s",
        r.mode.name(),
        r.status.label(),
        last.t,
        last.l,
        r.events.len(),
        r.wall_seconds
    );
    if let RunStatus::NonFinite(d) | RunStatus::NumericFailure(d) = &r.status {
        eprintln!("  {d}");
    }
}

fn print_rows(rows: &[SweepRow]) {
    for row in rows {
        let t95 = row.time_to_95.map_or("never".to_string(), |t| format!("{t:.2} s"));
        println!(
            "{}={:e} mode={} status={} events={} t95={} final_l={:.6e} m",
            row.param,
            row.value,
            row.mode.name(),
            row.status,
            row.event_count,
            t95,
            row.final_l
        );
    }
}

fn run(cli: Cli) -> Result<Exit, Failure> {
    match cli.command {
        Command::Simulate { config, mode, out } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            let rec = run_scenario(&cfg)?;
            write_outputs(&rec, &cfg, &out)?;
            report(&rec);
            Ok(exit_for_status(&rec.status))
        }
        Command::Compare { config, out } => {
            let cfg = load(config.as_deref())?;
            let (cont, etc) = compare_modes(&cfg)?;
            let mut rows = Vec::new();
            for rec in [&cont, &etc] {
                let mut c = cfg.clone();
                c.mode = rec.mode;
                write_outputs(rec, &c, &out.join(rec.mode.name()))?;
                report(rec);
                rows.push(SweepRow::from_record("mode", 0.0, rec));
            }
            std::fs::write(out.join("compare.csv"), sweep_csv(&rows)).map_err(Error::from)?;
            let (a, b) = (&cont.final_sample().unwrap().l, &etc.final_sample().unwrap().l);
            println!("final length difference: {:.3}%", 100.0 * (a - b).abs() / a.abs().max(b.abs()));
            Ok(exit_for_status(&cont.status).max(exit_for_status(&etc.status)))
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = load(config.as_deref())?;
            let p = SweepParam::parse(&param).ok_or_else(|| Failure {
                exit: Exit::Config,
                message: format!("unknown sweep parameter '{param}' (eta, sigma, gamma, N, dt)"),
            })?;
            if values.is_empty() {
                return Err(Failure {
                    exit: Exit::Config,
                    message: "no sweep values given".into(),
                });
            }
            let results = compare_and_sweep(&cfg, p, &values)?;
            let mut rows = Vec::with_capacity(results.len());
            for (i, (row, rec)) in results.iter().enumerate() {
                let c = p.apply(&cfg, row.value)?;
                write_outputs(rec, &c, &out.join(format!("{}_{i}", p.name())))?;
                rows.push(row.clone());
            }
            std::fs::write(out.join("sweep.csv"), sweep_csv(&rows)).map_err(Error::from)?;
            print_rows(&rows);
            Ok(results
                .iter()
                .map(|(_, r)| exit_for_status(&r.status))
                .max()
                .unwrap_or(Exit::Ok))
        }
        Command::Constants { config } => {
            let cfg = load(config.as_deref())?;
            let s = prepare(&cfg)?;
            let dc = &s.dc;
            println!("# derived constants");
            println!("lambda_plus = {:e}", dc.lambda_plus);
            println!("lambda_minus = {:e}", dc.lambda_minus);
            println!("k_plus = {:e}", dc.k_plus);
            println!("k_minus = {:e}", dc.k_minus);
            println!("q_s_star = {:e}", dc.q_s_star);
            println!("a1_tilde = {:e}", dc.a1_tilde);
            println!("a2_tilde = {:e}", dc.a2_tilde);
            println!("a3_tilde = {:e}", dc.a3_tilde);
            println!("beta = {:e}", dc.beta);
            println!("kappa = {:e}", dc.kappa);
            let re = cfg.gains.closed_loop_real_parts(dc);
            println!("closed_loop_real_parts = {:e}, {:e}", re[0], re[1]);
            println!("# bound constants");
            for (i, a) in s.alpha.alpha.iter().enumerate() {
                println!("alpha{} = {a:e}", i + 1);
            }
            println!("rho1 = {:e}", s.alpha.rho1);
            println!("# trigger");
            println!("gamma = {:e}", s.etm.gamma);
            println!("eta = {:e}", s.etm.eta);
            println!("rho = {:e}", s.etm.rho);
            println!("sigma = {:e}", s.etm.sigma);
            for (i, b) in s.etm.beta.iter().enumerate() {
                println!("beta{} = {b:e}", i + 1);
            }
            println!("m0 = {:e}", s.etm.m0);
            println!("# Lyapunov");
            println!("d1 = {:e}", s.lyapunov.d1);
            println!("d2 = {:e}", s.lyapunov.d2);
            println!("lyapunov_residual = {:e}", s.lyapunov.residual);
            println!("# dwell time");
            println!("tau = {:e}", s.dwell.tau);
            println!("a1 = {:e}", s.dwell.a1);
            println!("a2 = {:e}", s.dwell.a2);
            println!("a3 = {:e}", s.dwell.a3);
            Ok(Exit::Ok)
        }
        Command::Check { config } => {
            let cfg = load(config.as_deref())?;
            let results = invariant_suite(&cfg)?;
            for r in &results {
                println!(
                    "{} {}: {:e} (limit {:e})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.value,
                    r.tolerance
                );
            }
            Ok(if results.iter().all(|r| r.passed) {
                Exit::Ok
            } else {
                Exit::Numeric
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Exit::Config } else { Exit::Ok };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.exit as u8)
        }
    }
}
