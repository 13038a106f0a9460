//! Quick self-test of the model invariants, run by `axon check`.

use crate::backstepping::{forward_transform, inverse_transform, kernel_k, phi_eval};
use crate::closed_loop::{prepare, run_prepared, ScenarioConfig};
use crate::error::Result;
use crate::io::{parse_config, serialize_config};
use crate::model::{ErrorState, PlantState, Vec2};
use crate::solver::{plant_step, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Runs every check on `cfg`; the closed-loop part uses a 20 s horizon.
pub fn invariant_suite(cfg: &ScenarioConfig) -> Result<Vec<CheckOutcome>> {
    let setup = prepare(cfg)?;
    let dc = &setup.dc;
    let km = &setup.km;
    let p = &cfg.bio;
    let mut out = Vec::new();

    let (phi0, _) = phi_eval(km, 0.0)?;
    out.push(CheckOutcome::at_most(
        "kernel initial value equals output vector",
        rel(phi0[0], dc.h[0]).max(rel(phi0[1], dc.h[1])),
        1e-12,
    ));

    let want = 1.0 / p.l_c;
    let mut diag_err: f64 = 0.0;
    for i in 0..=16 {
        let x = p.l_s * i as f64 / 16.0;
        diag_err = diag_err.max(rel(kernel_k(km, x, x)?, want));
    }
    out.push(CheckOutcome::at_most("kernel diagonal equals 1/l_c", diag_err, 1e-12));

    let re = cfg.gains.closed_loop_real_parts(dc);
    out.push(CheckOutcome::at_most("closed-loop ODE matrix Hurwitz (max real part)", re[0].max(re[1]), -f64::MIN_POSITIVE));

    let n = 64;
    let l = 0.8 * p.l_s;
    let u: Vec<f64> = (0..=n)
        .map(|i| {
            let x = l * i as f64 / n as f64;
            1e-3 * (std::f64::consts::PI * x / l).cos() + 2e-4 * (x / l).powi(2)
        })
        .collect();
    let e = ErrorState {
        u: u.clone(),
        x: Vec2::new(2e-3, -3e-6),
    };
    let w = forward_transform(km, &e, l)?;
    let back = inverse_transform(km, &w, &e.x, l)?;
    // Scaled by the larger profile; the inverse loses digits when |w| >> |u|.
    let scale = u.iter().chain(&w).map(|v| v.abs()).fold(0.0, f64::max);
    let round = back.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    out.push(CheckOutcome::at_most("transform round trip", round, 1e-10));

    let solver = SolverConfig {
        n: 128,
        ..cfg.solver
    };
    let start = PlantState::steady(dc, solver.n);
    let mut s = start.clone();
    for _ in 0..1000 {
        s = plant_step(&s, dc.q_s_star, &solver, p)?.0;
    }
    let drift = s.c.iter().zip(&start.c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(CheckOutcome::at_most("equilibrium drift over 1000 steps / c_inf", drift / p.c_inf, 1e-6));

    out.push(CheckOutcome::at_most("Lyapunov equation residual", setup.lyapunov.residual, 1e-10));

    let mut short = cfg.clone();
    short.solver.t_end = cfg.solver.t_end.min(20.0);
    let run = run_prepared(&short, &setup)?;
    let max_m = run.samples.iter().map(|s| s.m).fold(f64::NEG_INFINITY, f64::max);
    out.push(CheckOutcome::at_most("trigger margin d^2 + gamma m", run.max_trigger_margin, 0.0));
    out.push(CheckOutcome::at_most("dynamic variable m (max)", max_m, -f64::MIN_POSITIVE));
    let zeno = run.zeno();
    out.push(CheckOutcome {
        name: "minimum inter-event gap / dt",
        value: if zeno.event_count < 2 { f64::INFINITY } else { zeno.min_gap / run.dt },
        tolerance: 1.0 - 1e-9,
        passed: zeno.min_gap >= run.dt * (1.0 - 1e-9),
    });
    out.push(CheckOutcome {
        name: "dwell time",
        value: setup.dwell.tau,
        tolerance: 0.0,
        passed: setup.dwell.tau > 0.0,
    });

    let echoed = parse_config(&serialize_config(cfg))?;
    out.push(CheckOutcome {
        name: "config round trip",
        value: if echoed == *cfg { 0.0 } else { 1.0 },
        tolerance: 0.0,
        passed: echoed == *cfg,
    });
    Ok(out)
}
