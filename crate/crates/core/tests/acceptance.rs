//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;

use axon_core::backstepping::{forward_transform, inverse_transform, kernel_k, phi_eval};
use axon_core::closed_loop::{
    compare_and_sweep, prepare, run_from, run_prepared, run_scenario, ControllerMode, RunRecord, ScenarioConfig,
    SweepParam,
};
use axon_core::model::{BioParams, ErrorState, Mat2, PlantState, Vec2};
use axon_core::solver::{convergence_study, Manufactured, TimeScheme};

const K1: f64 = -0.001;
const K2: f64 = 4e13;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn preset(mode: ControllerMode) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::paper_fig2();
    cfg.mode = mode;
    cfg
}

fn etc_run() -> &'static RunRecord {
    static R: OnceLock<RunRecord> = OnceLock::new();
    R.get_or_init(|| run_scenario(&preset(ControllerMode::Etc)).unwrap())
}

fn continuous_run() -> &'static RunRecord {
    static R: OnceLock<RunRecord> = OnceLock::new();
    R.get_or_init(|| run_scenario(&preset(ControllerMode::Continuous)).unwrap())
}

fn max_abs<'a>(v: impl IntoIterator<Item = &'a f64>) -> f64 {
    v.into_iter().map(|x| x.abs()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Closed-loop growth under both modes from the reference preset.
fn criterion_1() -> Verdict {
    let l_s = 12e-6;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [continuous_run(), etc_run()] {
        let l240 = r.length_at(240.0).unwrap();
        let l_start = r.samples[0].l;
        let pass = r.status.is_completed() && rel(l_start, 1e-6) <= 1e-12 && l240 >= 0.95 * l_s && r.wall_seconds < 10.0;
        ok &= pass;
        parts.push(format!(
            "{}: {} l(0)={:e} l(240)={:.4} um t95={:?} s wall={:.2} s",
            r.mode.name(),
            r.status.label(),
            l_start,
            l240 * 1e6,
            r.time_to_fraction(0.95),
            r.wall_seconds
        ));
    }
    let a = continuous_run().final_sample().unwrap().l;
    let b = etc_run().final_sample().unwrap().l;
    let diff = (a - b).abs() / a.max(b);
    ok &= diff <= 0.02;
    parts.push(format!("final-length difference {:.2e}", diff));
    verdict(ok, parts.join("; "))
}

/// Trigger invariants on the reference event-triggered run.
fn criterion_2() -> Verdict {
    let r = etc_run();
    let gamma = 1e4;
    let dt = 0.05;
    let mut worst_margin = f64::NEG_INFINITY;
    let mut max_m = f64::NEG_INFINITY;
    let mut d_after_event: f64 = 0.0;
    for s in &r.samples {
        worst_margin = worst_margin.max(s.d * s.d + gamma * s.m);
        max_m = max_m.max(s.m);
        if s.event {
            d_after_event = d_after_event.max(s.d.abs());
        }
    }
    let events = r.samples.iter().filter(|s| s.event).count();
    let min_gap = r
        .events
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .fold(f64::INFINITY, f64::min);
    let dw = r.dwell;
    let ok = r.status.is_completed()
        && worst_margin <= 0.0
        && max_m < 0.0
        && d_after_event == 0.0
        && events == r.events.len()
        && min_gap >= dt * (1.0 - 1e-9)
        && dw.tau > 0.0
        && dw.a1 > 0.0
        && dw.a2 > 0.0
        && dw.a3 > 0.0;
    verdict(
        ok,
        format!(
            "max(d^2+gamma m)={worst_margin:.2e} max m={max_m:.2e} |d| at events={d_after_event:e} events={events} min gap={min_gap:.4} s tau={:.3e}",
            dw.tau
        ),
    )
}

/// Kernel boundary identities, kernel ODE residual and closed-loop ODE stability.
fn criterion_3() -> Verdict {
    let p = BioParams::table1();
    let setup = prepare(&ScenarioConfig::paper_fig2()).unwrap();
    let km = &setup.km;
    let dc = &setup.dc;

    let h = [1.0, -(p.a - p.g * p.l_c) * p.c_inf / p.d];
    let (phi0, _) = phi_eval(km, 0.0).unwrap();
    let phi0_err = rel(phi0[0], h[0]).max(rel(phi0[1], h[1]));

    let want = 1.0 / p.l_c;
    let diag_err = (0..=24)
        .map(|i| {
            let x = 24e-6 * i as f64 / 24.0;
            rel(kernel_k(km, x, x).unwrap(), want)
        })
        .fold(0.0, f64::max);

    // phi'' by a fourth-order difference of the tabulated phi'.
    let ds = km.table_spacing();
    let mut resid: f64 = 0.0;
    for j in 2..km.table_intervals() - 2 {
        let node = |k: usize| km.table_node(k);
        let (_, phi, dphi) = node(j);
        let d2 = (node(j - 2).2 - node(j - 1).2 * 8.0 + node(j + 1).2 * 8.0 - node(j + 2).2) / (12.0 * -ds);
        let phi_b = phi.dot(&dc.b);
        let dphi_b = dphi.dot(&dc.b);
        let lhs = d2 * p.d;
        let a1t = (phi.transpose() * dc.a1_mat).transpose();
        let corr = dc.h * (dphi_b - p.a / p.d * phi_b);
        let res = lhs - dphi * p.a - phi * p.g - a1t + corr;
        for k in 0..2 {
            let scale = [lhs[k], dphi[k] * p.a, phi[k] * p.g, a1t[k], corr[k]]
                .iter()
                .map(|v| v.abs())
                .fold(0.0, f64::max);
            resid = resid.max(res[k].abs() / scale);
        }
    }

    // A1 + B K^T assembled from the scalars; 2x2 Hurwitz iff trace < 0 < det.
    let beta = p.d / p.l_c;
    let m = Mat2::new(
        dc.a1_tilde - beta * K1,
        -beta * dc.a2_tilde - beta * K2,
        p.r_g,
        0.0,
    );
    let (tr, det) = (m.trace(), m.determinant());
    let hurwitz = tr < 0.0 && det > 0.0;

    let ok = phi0_err <= 1e-12 && diag_err <= 1e-12 && resid <= 1e-8 && hurwitz;
    verdict(
        ok,
        format!("phi(0) err={phi0_err:.1e} k(x,x) err={diag_err:.1e} ODE residual={resid:.1e} trace={tr:.3e} det={det:.3e}"),
    )
}

/// Transform round trip and the N^-2 scaling of the boundary mismatch w(0).
fn criterion_4() -> Verdict {
    let p = BioParams::table1();
    let setup = prepare(&ScenarioConfig::paper_fig2()).unwrap();
    let km = &setup.km;
    let mut round: f64 = 0.0;
    let mut round_u_only: f64 = 0.0;
    for n in [32usize, 64, 128, 256] {
        for l in [1e-6, 4e-6, 8e-6, p.l_s] {
            for (profile, x) in [
                (0, Vec2::zeros()),
                (1, Vec2::new(2e-3, -(p.l_s - l))),
                (2, Vec2::new(-5e-3, -0.5 * (p.l_s - l))),
            ] {
                let u: Vec<f64> = (0..=n)
                    .map(|i| {
                        let z = i as f64 / n as f64;
                        match profile {
                            0 => 1e-3 * (std::f64::consts::PI * z).cos() + 2e-4 * z * z,
                            1 => 5e-3 * (-3.0 * z).exp(),
                            _ => 1e-2 * z * (1.0 - z) + 1e-3 * (7.0 * z).sin(),
                        }
                    })
                    .collect();
                let e = ErrorState { u: u.clone(), x };
                let w = forward_transform(km, &e, l).unwrap();
                let back = inverse_transform(km, &w, &x, l).unwrap();
                let err = back.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                round = round.max(err / max_abs(&u).max(max_abs(&w)));
                round_u_only = round_u_only.max(err / max_abs(&u));
            }
        }
    }

    let boundary = |n: usize| -> f64 {
        let r = if n == 128 {
            continuous_run().clone()
        } else {
            let mut cfg = preset(ControllerMode::Continuous);
            cfg.solver.n = n;
            run_scenario(&cfg).unwrap()
        };
        assert!(r.status.is_completed(), "N={n}: {:?}", r.status);
        r.samples.iter().skip(1).map(|s| s.w0_reference.abs()).fold(0.0, f64::max)
    };
    let e64 = boundary(64);
    let c = e64 * 64.0 * 64.0;
    let e128 = boundary(128);
    let e256 = boundary(256);
    let scaling_ok = e128 <= c / (128.0 * 128.0) && e256 <= c / (256.0 * 256.0);
    let ok = round <= 1e-10 && scaling_ok;
    verdict(
        ok,
        format!(
            "round trip {round:.1e} (vs |u| alone {round_u_only:.1e}); C={c:.4e}; |w0| N^2 at 128: {:.4e}, 256: {:.4e}",
            e128 * 128.0 * 128.0,
            e256 * 256.0 * 256.0
        ),
    )
}

/// Analytic equilibrium and its preservation by the closed-loop simulator.
fn criterion_5() -> Verdict {
    let cfg = preset(ControllerMode::Continuous);
    let p = cfg.bio;
    let setup = prepare(&cfg).unwrap();
    let dc = &setup.dc;

    // Roots of D s^2 - a s - g = 0 and the two-exponential fit through the
    // profile's end values.
    let disc = (p.a * p.a + 4.0 * p.d * p.g).sqrt();
    let (r1, r2) = ((p.a + disc) / (2.0 * p.d), (p.a - disc) / (2.0 * p.d));
    let (c0, cl) = (dc.c_eq(0.0), dc.c_eq(p.l_s));
    let (e1, e2) = ((r1 * p.l_s).exp(), (r2 * p.l_s).exp());
    let det = e2 - e1;
    let a_coef = (c0 * e2 - cl) / det;
    let b_coef = (cl - c0 * e1) / det;
    let fit = |x: f64| a_coef * (r1 * x).exp() + b_coef * (r2 * x).exp();
    let dfit = |x: f64| a_coef * r1 * (r1 * x).exp() + b_coef * r2 * (r2 * x).exp();
    let mut stationary: f64 = 0.0;
    for i in 0..=64 {
        let x = p.l_s * i as f64 / 64.0;
        stationary = stationary.max(rel(dc.c_eq(x), fit(x)));
    }
    let tip = rel(cl, p.c_inf);
    let flux = rel(p.d * dfit(p.l_s), (p.a - p.g * p.l_c) * p.c_inf);
    let analytic = stationary.max(tip).max(flux);

    let mut hold = cfg.clone();
    hold.solver.t_end = 1e4 * hold.solver.dt;
    let start = PlantState::steady(dc, hold.solver.n);
    let r = run_from(&hold, &setup, start.clone()).unwrap();
    let steps = r.samples.len() - 1;
    let mut drift: f64 = 0.0;
    let mut length_drift: f64 = 0.0;
    for s in &r.samples {
        drift = drift.max((s.c_c - p.c_inf).abs());
        length_drift = length_drift.max((s.l - p.l_s).abs());
    }
    // Whole-profile drift from the snapshots.
    for snap in &r.snapshots {
        for (a, b) in snap.c.iter().zip(&start.c) {
            drift = drift.max((a - b).abs());
        }
    }
    let ok = r.status.is_completed() && steps == 10_000 && analytic <= 1e-12 && drift <= 1e-6 * p.c_inf;
    verdict(
        ok,
        format!(
            "stationary residual {analytic:.1e}; drift over {steps} steps {:.1e} c_inf (length {:.1e} m)",
            drift / p.c_inf,
            length_drift
        ),
    )
}

/// Manufactured-solution orders of the plant solver.
fn criterion_6() -> Verdict {
    let case = Manufactured {
        p: BioParams::table1(),
        l0: 1e-6,
        amp: 0.1,
    };
    let r = convergence_study(&case, &[64, 128, 256], 1e-3, 64, &[0.04, 0.02, 0.01, 0.005], TimeScheme::Theta, 0.5, 1.0)
        .unwrap();
    let space_ok = r.space_orders.iter().all(|&o| o >= 1.9);
    let finest = *r.time_orders.last().unwrap();
    let ok = space_ok && (finest - 2.0).abs() <= 0.1;
    verdict(
        ok,
        format!("space orders {:.3?}, time orders {:.3?}", r.space_orders, r.time_orders),
    )
}

/// Event counts grow with eta and sigma; every variant still converges.
fn criterion_7() -> Verdict {
    let base = preset(ControllerMode::Etc);
    let eta_rows = compare_and_sweep(&base, SweepParam::Eta, &[1.0, 1000.0]).unwrap();
    let sigma_rows = compare_and_sweep(&base, SweepParam::Sigma, &[0.1, 0.8]).unwrap();
    let count = |rows: &[(axon_core::closed_loop::SweepRow, RunRecord)], i: usize| rows[i].1.events.len();
    let converged = eta_rows
        .iter()
        .chain(&sigma_rows)
        .all(|(_, r)| r.status.is_completed() && r.length_at(240.0).unwrap() >= 0.95 * 12e-6);
    let ok = count(&eta_rows, 1) >= count(&eta_rows, 0) && count(&sigma_rows, 1) >= count(&sigma_rows, 0) && converged;
    verdict(
        ok,
        format!(
            "events eta=1: {}, eta=1000: {}; sigma=0.1: {}, sigma=0.8: {}; all converge: {converged}",
            count(&eta_rows, 0),
            count(&eta_rows, 1),
            count(&sigma_rows, 0),
            count(&sigma_rows, 1)
        ),
    )
}

/// Lyapunov equation accuracy and qualitative decay at a 10% initial offset.
fn criterion_8() -> Verdict {
    let mut cfg = preset(ControllerMode::Etc);
    cfg.offset_scale = 0.1;
    let setup = prepare(&cfg).unwrap();
    let dc = &setup.dc;
    let p = cfg.bio;
    let beta = p.d / p.l_c;
    let m = Mat2::new(
        dc.a1_tilde - beta * K1,
        -beta * dc.a2_tilde - beta * K2,
        p.r_g,
        0.0,
    );
    let lp = setup.lyapunov.p;
    let q = Mat2::identity();
    let resid = (m.transpose() * lp + lp * m + q).norm() / (2.0 * m.norm() * lp.norm() + q.norm());
    let spd = lp[(0, 0)] > 0.0 && lp.determinant() > 0.0 && lp[(0, 1)] == lp[(1, 0)];

    let r = run_prepared(&cfg, &setup).unwrap();
    let v0 = r.samples[0].v;
    let slack = 1e-3 * v0;
    let mut worst_rise = f64::NEG_INFINITY;
    for w in r.samples.windows(2) {
        if !w[1].event {
            worst_rise = worst_rise.max(w[1].v - w[0].v);
        }
    }
    let start = r.samples[0].h1_plus_ode();
    let end = r.final_sample().unwrap().h1_plus_ode();
    let ok = r.status.is_completed() && resid <= 1e-10 && spd && worst_rise <= slack && end < start;
    verdict(
        ok,
        format!(
            "residual {resid:.1e}; largest V rise between events {worst_rise:.2e} (slack {slack:.2e}); ||u||_H1+|X| {start:.3e} -> {end:.3e}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("reference growth in both modes", criterion_1),
        ("trigger invariants", criterion_2),
        ("kernel identities", criterion_3),
        ("transform correctness", criterion_4),
        ("steady-state fidelity", criterion_5),
        ("solver order", criterion_6),
        ("event-count monotonicity", criterion_7),
        ("Lyapunov diagnostics", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!("{} criterion {} ({name}): {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
