//! Dynamic event-triggering mechanism.
//!
//! Deviation d = U(t) - U(t_j) and internal variable m with
//!   m' = -eta m + rho d^2 - b1 |X|^2 - b2 |X|^4 - b3 w_x(0)^2 - b4 ||w||^2 - b5 w_x(l)^2.
//! An event fires when d^2 > -gamma m.

use serde::{Deserialize, Serialize};

use crate::backstepping::{kernel_k, phi_eval, KernelModel, TransformWorkspace};
use crate::error::{Error, Result};
use crate::model::{BioParams, DerivedConstants, Mat2, Vec2};
use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtmConfig {
    pub gamma: f64,
    pub eta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub beta: [f64; 5],
    pub m0: f64,
}

impl EtmConfig {
    /// Trigger values used for the reference closed-loop experiment.
    pub fn paper_fig2() -> Self {
        Self {
            gamma: 1e4,
            eta: 100.0,
            rho: 4e22,
            sigma: 0.5,
            beta: [1.634e22, 5.229e12, 6.569e-14, 2.614e13, 2.94e-12],
            m0: -0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("gamma", self.gamma), ("eta", self.eta), ("rho", self.rho)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v:e} must be positive")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::OutOfRange {
                what: "sigma",
                value: self.sigma,
                lo: 0.0,
                hi: 1.0,
            });
        }
        for (i, b) in self.beta.iter().enumerate() {
            if !(*b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidParameter(format!("beta{} = {b:e}", i + 1)));
            }
        }
        if !(self.m0 < 0.0 && self.m0.is_finite()) {
            return Err(Error::InvalidParameter(format!("m0 = {:e} must be negative", self.m0)));
        }
        Ok(())
    }
}

/// Optional replacements for individual trigger constants.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EtmOverrides {
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub rho: Option<f64>,
    pub sigma: Option<f64>,
    pub beta: [Option<f64>; 5],
    pub m0: Option<f64>,
}

impl EtmOverrides {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    pub fn apply(&self, cfg: &EtmConfig) -> EtmConfig {
        let mut out = *cfg;
        if let Some(v) = self.gamma {
            out.gamma = v;
        }
        if let Some(v) = self.eta {
            out.eta = v;
        }
        if let Some(v) = self.rho {
            out.rho = v;
        }
        if let Some(v) = self.sigma {
            out.sigma = v;
        }
        for i in 0..5 {
            if let Some(v) = self.beta[i] {
                out.beta[i] = v;
            }
        }
        if let Some(v) = self.m0 {
            out.m0 = v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaConstants {
    pub alpha: [f64; 5],
    pub rho1: f64,
    pub k_n: f64,
    pub k_m: f64,
    /// int_0^l zeta(y)^2 dy at its supremum over l.
    pub zeta_norm: f64,
    pub l_bar: f64,
}

/// Grid used for the resolvent-based quantities.
const ALPHA_NODES: usize = 96;
/// Number of domain lengths sampled in (0, l_bar].
const ALPHA_LENGTHS: usize = 24;

struct LengthTerms {
    alpha: [f64; 5],
    zeta_norm: f64,
}

/// Sum of squares of the entries of a 2-vector.
fn sq(v: &Vec2) -> f64 {
    v.dot(v)
}

pub fn alpha_constants(km: &KernelModel, dc: &DerivedConstants, p: &BioParams, l_bar: f64) -> Result<AlphaConstants> {
    if l_bar > km.l_bar {
        return Err(Error::OutOfRange {
            what: "l_bar",
            value: l_bar,
            lo: 0.0,
            hi: km.l_bar,
        });
    }
    let (_, dphi0) = phi_eval(km, 0.0)?;
    let hb = dc.h.dot(&dc.b);
    let s0 = dphi0.dot(&dc.b) + hb / p.d;
    let rho1 = 8.0 * s0 * s0;
    let c = p.c_inf;
    let k_n = dc.k_n();
    let k_m = (c * dc.k_plus * dc.lambda_plus.powi(3))
        .abs()
        .max((c * dc.k_minus * dc.lambda_minus.powi(3)).abs());

    let mut alpha = [0.0f64; 5];
    let mut zeta_norm: f64 = 0.0;
    for k in 1..=ALPHA_LENGTHS {
        let l = l_bar * k as f64 / ALPHA_LENGTHS as f64;
        let t = length_terms(km, dc, p, l, s0, k_n)?;
        for i in 0..5 {
            alpha[i] = alpha[i].max(t.alpha[i]);
        }
        zeta_norm = zeta_norm.max(t.zeta_norm);
    }
    let out = AlphaConstants {
        alpha,
        rho1,
        k_n,
        k_m,
        zeta_norm,
        l_bar,
    };
    if out.alpha.iter().chain([&rho1, &zeta_norm]).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("alpha constants".into()));
    }
    Ok(out)
}

fn length_terms(km: &KernelModel, dc: &DerivedConstants, p: &BioParams, l: f64, s0: f64, k_n: f64) -> Result<LengthTerms> {
    let n = ALPHA_NODES;
    let h = l / n as f64;
    let ws = TransformWorkspace::new(km, n, l)?;
    let q = ws.resolvent()?;

    // Inverse ODE gain: u = (I + Q)(w + Phi X) gives phibar = (I + Q) Phi.
    let phibar: Vec<Vec2> = (0..=n)
        .map(|i| {
            let mut v = ws.phi_at_shift(i);
            for (j, qij) in q[i].iter().enumerate().skip(i) {
                v += ws.phi_at_shift(j) * *qij;
            }
            v
        })
        .collect();
    let trap = |i: usize| if i == 0 || i == n { 0.5 * h } else { h };
    let int_phibar = (0..=n).fold(Vec2::zeros(), |acc, i| acc + phibar[i] * trap(i));

    // Resolvent kernel values q(x_i, x_j) = Q_ij / weight_ij.
    let weight = |i: usize, j: usize| if j == i || j == n { 0.5 * h } else { h };
    let qv = |i: usize, j: usize| if i == n { 0.0 } else { q[i][j] / weight(i, j) };
    let q_ll = qv(n - 1, n - 1);
    let mut qq = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i..=n {
            row += weight(i, j) * qv(i, j).powi(2);
        }
        qq += trap(i) * row;
    }
    let mut qx0 = 0.0;
    for j in 2..=n {
        let d = (-3.0 * qv(0, j) + 4.0 * qv(1, j) - qv(2, j)) / (2.0 * h);
        qx0 += weight(0, j) * d * d;
    }

    // zeta(y) = D k_yy(0,y) + a k_y(0,y) - (g + s0) k(0,y).
    let zeta_sq = |y: f64| -> Result<f64> {
        let (phi, dphi) = phi_eval(km, -y)?;
        let d2 = km.second_derivative(&phi, &dphi);
        let k = -phi.dot(&dc.b) / p.d;
        let k_y = dphi.dot(&dc.b) / p.d;
        let k_yy = -d2.dot(&dc.b) / p.d;
        Ok((p.d * k_yy + p.a * k_y - (p.g + s0) * k).powi(2))
    };
    let zn = 4 * n;
    let mut zeta_norm = 0.0;
    for i in 0..=zn {
        let w = if i == 0 || i == zn { 0.5 } else { 1.0 };
        zeta_norm += w * zeta_sq(l * i as f64 / zn as f64)?;
    }
    zeta_norm *= l / zn as f64;

    let phi_neg = ws.phi_at_shift(0);
    let (_, dphi_neg) = phi_eval(km, -l)?;
    let pos = km.phi_direct(l)?;
    let phi_pos = Vec2::new(pos[0], pos[1]);
    let k0l = kernel_k(km, 0.0, l)?;
    let hb2 = dc.h.dot(&dc.b).powi(2);
    let c5 = p.d * k0l + phi_pos.dot(&dc.b);
    let c4 = phi_neg.dot(&dc.b) - p.a * k0l;
    let a_shift = dc.a_mat - Mat2::identity() * s0;
    let t1 = 8.0 * sq(&(a_shift.transpose() * phi_neg));
    let pb_l = sq(&phibar[0]);
    let pb_0 = sq(&phibar[n]);

    let alpha1 = t1
        + 32.0 * hb2 * pb_l
        + 32.0 * c5 * c5 * pb_0
        + 64.0 * c4 * c4 * pb_0
        + 12.0 * zeta_norm * sq(&int_phibar);
    let alpha2 = 8.0 * (dc.kappa.powi(2) * sq(&phi_neg) + p.r_g.powi(2) * sq(&dphi_neg))
        + 16.0 * c4 * c4
        + 124.0 * k_n * k_n * c5 * c5 * q_ll * q_ll;
    let alpha3 = 32.0 * hb2;
    let alpha4 = 18.0 * zeta_norm * (1.0 + qq.sqrt()).powi(2) + 32.0 * hb2 * qx0;
    let alpha5 = 32.0 * c5 * c5;
    Ok(LengthTerms {
        alpha: [alpha1, alpha2, alpha3, alpha4, alpha5],
        zeta_norm,
    })
}

/// Lower bound 16 (alpha3 + alpha5) / (D (1 - sigma)) on gamma.
pub fn gamma_lower_bound(ac: &AlphaConstants, p: &BioParams, sigma: f64) -> f64 {
    16.0 * (ac.alpha[2] + ac.alpha[4]) / (p.d * (1.0 - sigma))
}

/// Smallest admissible Lyapunov weight d1 for a given beta4.
pub fn d1_lower_bound(ac: &AlphaConstants, p: &BioParams, beta4: f64) -> f64 {
    let l_bar = ac.l_bar;
    4.0 * p.a * p.a / (p.d * p.d)
        + (1.0 + l_bar) / l_bar
        + 4.0 * beta4 / p.g
        + p.d * ac.alpha[3] / (4.0 * p.g * ac.alpha[4])
}

/// gamma at twice its bound, rho from d1, beta_i = alpha_i / (gamma (1 - sigma)).
pub fn etm_defaults(ac: &AlphaConstants, sigma: f64, eta: f64, dc: &DerivedConstants, d1: f64) -> Result<EtmConfig> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::OutOfRange {
            what: "sigma",
            value: sigma,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let p = &dc.params;
    let gamma = 2.0 * gamma_lower_bound(ac, p, sigma);
    let rho = 16.0 * p.d * d1 * d1 + p.a * d1 / 2.0 + 16.0 * p.g / p.d + 16.0 * ac.rho1 / p.d;
    let mut beta = [0.0; 5];
    for i in 0..5 {
        beta[i] = ac.alpha[i] / (gamma * (1.0 - sigma));
    }
    let cfg = EtmConfig {
        gamma,
        eta,
        rho,
        sigma,
        beta,
        m0: -0.5,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Signals feeding the trigger at one time instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EtmSignals {
    pub u_cont: f64,
    pub x: Vec2,
    pub w0x: f64,
    pub wlx: f64,
    pub w_norm2: f64,
}

impl EtmSignals {
    /// Sum of the beta-weighted sink terms.
    pub fn sink(&self, cfg: &EtmConfig) -> f64 {
        let xx = self.x.dot(&self.x);
        let b = &cfg.beta;
        b[0] * xx + b[1] * xx * xx + b[2] * self.w0x * self.w0x + b[3] * self.w_norm2 + b[4] * self.wlx * self.wlx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub index: usize,
    pub t: f64,
    pub u: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtmState {
    pub m: f64,
    pub d: f64,
    pub u_held: f64,
    pub t_last_event: Option<f64>,
    pub events: Vec<Event>,
    /// Sink value at the start of the next step.
    pub sink_prev: f64,
}

impl EtmState {
    pub fn new(cfg: &EtmConfig) -> Self {
        Self {
            m: cfg.m0,
            d: 0.0,
            u_held: 0.0,
            t_last_event: None,
            events: Vec::new(),
            sink_prev: 0.0,
        }
    }

    /// Samples `u` at time `t`: holds it, resets d and logs the event.
    pub fn record_event(&mut self, t: f64, u: f64) {
        let gap = self.t_last_event.map_or(0.0, |t0| t - t0);
        self.events.push(Event {
            index: self.events.len(),
            t,
            u,
            gap,
        });
        self.u_held = u;
        self.d = 0.0;
        self.t_last_event = Some(t);
    }
}

#[inline]
pub fn should_fire(d2: f64, m: f64, gamma: f64) -> bool {
    d2 > -gamma * m
}

/// Advances m over one step of length dt.
///
/// With d^2 clipped to the trigger bound -gamma m (it cannot exceed it before
/// a reset), rho d^2 = -rho gamma theta m with theta in [0, 1], and the linear
/// ODE is integrated exactly with theta and the sinks averaged over the step.
pub fn advance_m(m: f64, d2_start: f64, d2_end: f64, sink_start: f64, sink_end: f64, cfg: &EtmConfig, dt: f64) -> f64 {
    let cap = -cfg.gamma * m;
    let theta = if cap > 0.0 {
        (0.5 * (d2_start.min(cap) + d2_end.min(cap)) / cap).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let lambda = cfg.eta + cfg.rho * cfg.gamma * theta;
    let sink = 0.5 * (sink_start + sink_end);
    let decay = (-lambda * dt).exp();
    let gain = -(-lambda * dt).exp_m1() / lambda;
    (m * decay - sink * gain).min(-f64::MIN_POSITIVE)
}

/// One trigger update at the end of a step ending at `t`.
pub fn etm_step(st: &mut EtmState, cfg: &EtmConfig, signals: &EtmSignals, t: f64, dt: f64) -> Result<bool> {
    let d = signals.u_cont - st.u_held;
    let sink = signals.sink(cfg);
    if !d.is_finite() || !sink.is_finite() {
        return Err(Error::NonFinite("trigger signals".into()));
    }
    let m = advance_m(st.m, st.d * st.d, d * d, st.sink_prev, sink, cfg, dt);
    if !m.is_finite() {
        return Err(Error::NonFinite("trigger variable m".into()));
    }
    st.m = m;
    st.sink_prev = sink;
    let fired = should_fire(d * d, m, cfg.gamma);
    if fired {
        st.record_event(t, signals.u_cont);
    } else {
        st.d = d;
    }
    Ok(fired)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DwellTime {
    pub tau: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Same integrand over [0, l_s].
    pub tau_length_reading: f64,
}

pub fn dwell_time(cfg: &EtmConfig, ac: &AlphaConstants, l_s: f64) -> Result<DwellTime> {
    cfg.validate()?;
    let (rho, sigma, gamma, eta) = (cfg.rho, cfg.sigma, cfg.gamma, cfg.eta);
    let a1 = rho * sigma * gamma;
    let a2 = 1.0 + 2.0 * ac.rho1 + (1.0 - sigma) * rho + eta;
    let a3 = (1.0 + ac.rho1 + gamma * (1.0 - sigma) * rho + eta) * (1.0 - sigma) / sigma;
    let lo = -(1.0 - sigma) / sigma;
    let hi = 1.0;
    let denom = |s: f64| a1 * s * s + a2 * s + a3;
    // The quadratic's minimum on [lo, hi] is at an endpoint or its vertex.
    let vertex = (-a2 / (2.0 * a1)).clamp(lo, hi);
    for s in [lo, hi, vertex] {
        if !(denom(s) > 0.0) {
            return Err(Error::DwellDenominator(s));
        }
    }
    let integrand = |s: f64| 1.0 / denom(s);
    let rough = (hi - lo) / denom(vertex).max(denom(lo).min(denom(hi)));
    let tau = adaptive_simpson(&integrand, lo, hi, 1e-13 * rough);
    let rough_l = l_s / a3;
    let tau_length_reading = adaptive_simpson(&integrand, 0.0, l_s, 1e-13 * rough_l);
    Ok(DwellTime {
        tau,
        a1,
        a2,
        a3,
        tau_length_reading,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZenoReport {
    pub event_count: usize,
    /// Smallest gap between consecutive events (infinite with fewer than two).
    pub min_gap: f64,
    pub mean_gap: f64,
    pub min_gap_at_least_dt: bool,
    pub zeno_free: bool,
    pub tau: f64,
}

pub fn zeno_report(events: &[Event], tau: f64, dt: f64) -> ZenoReport {
    let gaps: Vec<f64> = events.iter().skip(1).map(|e| e.gap).collect();
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_gap = if gaps.is_empty() {
        f64::NAN
    } else {
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    // Events sit on the step grid; allow rounding in t.
    let ok = gaps.is_empty() || min_gap >= dt * (1.0 - 1e-9);
    ZenoReport {
        event_count: events.len(),
        min_gap,
        mean_gap,
        min_gap_at_least_dt: ok,
        zeno_free: ok && gaps.iter().all(|g| *g > 0.0),
        tau,
    }
}

/// Runs the trigger alone over a fixed signal sequence (one entry per step)
/// and returns the event count; the state starts with an event at t = 0.
pub fn replay(cfg: &EtmConfig, signals: &[EtmSignals], dt: f64) -> Result<usize> {
    let mut st = EtmState::new(cfg);
    if let Some(first) = signals.first() {
        st.record_event(0.0, first.u_cont);
        st.sink_prev = first.sink(cfg);
    }
    for (k, s) in signals.iter().enumerate().skip(1) {
        etm_step(&mut st, cfg, s, k as f64 * dt, dt)?;
    }
    Ok(st.events.len())
}
