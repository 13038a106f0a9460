//! Closed-loop runs: plant + backstepping law + trigger, Lyapunov diagnostics,
//! mode comparison and parameter sweeps.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backstepping::{build_kernel_model_with, ControlFeedback, GainConfig, KernelModel, TransformWorkspace};
use crate::error::{Error, Result};
use crate::model::{derive_constants_with, BioParams, DerivedConstants, Linearization, Mat2, PlantState, Vec2};
use crate::solver::{Soma, SolverConfig, Stepper, TimeScheme};
use crate::trigger::{
    alpha_constants, d1_lower_bound, dwell_time, etm_defaults, etm_step, zeno_report, AlphaConstants, DwellTime,
    EtmConfig, EtmOverrides, EtmSignals, EtmState, Event, ZenoReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerMode {
    Continuous,
    Etc,
    Zoh,
}

impl ControllerMode {
    pub fn name(self) -> &'static str {
        match self {
            ControllerMode::Continuous => "continuous",
            ControllerMode::Etc => "etc",
            ControllerMode::Zoh => "zoh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "continuous" => Some(ControllerMode::Continuous),
            "etc" => Some(ControllerMode::Etc),
            "zoh" => Some(ControllerMode::Zoh),
            _ => None,
        }
    }
}

/// Where the trigger constants come from before overrides are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtmSource {
    /// Published experiment values.
    PaperFig2,
    /// Selection rules applied to the computed alpha constants.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub bio: BioParams,
    pub solver: SolverConfig,
    pub gains: GainConfig,
    pub linearization: Linearization,
    pub etm_source: EtmSource,
    /// sigma and eta used by the derived source.
    pub etm_sigma: f64,
    pub etm_eta: f64,
    pub etm_overrides: EtmOverrides,
    pub mode: ControllerMode,
    pub l_bar: f64,
    pub v_bar: f64,
    pub event_cap: usize,
    /// Sampling period of the periodic baseline (s).
    pub zoh_period: f64,
    /// Initial length and uniform concentration.
    pub l0: f64,
    pub c0: f64,
    /// Scales the initial offset from the equilibrium (1 = as given).
    pub offset_scale: f64,
    /// Profile snapshot cadence (s); 0 disables snapshots.
    pub snapshot_every: f64,
    pub kernel_intervals: usize,
}

impl ScenarioConfig {
    /// Reference experiment: published parameters, gains and trigger values.
    pub fn paper_fig2() -> Self {
        let bio = BioParams::table1();
        Self {
            bio,
            solver: SolverConfig {
                scheme: TimeScheme::Bdf2,
                ..SolverConfig::default()
            },
            gains: GainConfig::default(),
            linearization: Linearization::Jacobian,
            etm_source: EtmSource::PaperFig2,
            etm_sigma: 0.5,
            etm_eta: 100.0,
            etm_overrides: EtmOverrides::default(),
            mode: ControllerMode::Etc,
            l_bar: 2.0 * bio.l_s,
            v_bar: bio.d / (16.0 * (bio.d + 1.0)),
            event_cap: 100_000,
            zoh_period: 0.05,
            l0: 1e-6,
            c0: 2.0 * bio.c_inf,
            offset_scale: 1.0,
            snapshot_every: 1.0,
            kernel_intervals: crate::backstepping::DEFAULT_TABLE_INTERVALS,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.solver.t_end
    }

    pub fn validate(&self) -> Result<()> {
        self.bio.validate()?;
        self.solver.validate()?;
        if !(self.l_bar > self.bio.l_s) {
            return Err(Error::InvalidParameter(format!(
                "l_bar = {:e} must exceed l_s = {:e}",
                self.l_bar, self.bio.l_s
            )));
        }
        if self.event_cap < 1 {
            return Err(Error::InvalidParameter("event_cap must be at least 1".into()));
        }
        if !(self.v_bar > 0.0) {
            return Err(Error::InvalidParameter(format!("v_bar = {:e}", self.v_bar)));
        }
        if !(self.l0 > 0.0 && self.l0 <= self.l_bar) {
            return Err(Error::InvalidParameter(format!("l0 = {:e}", self.l0)));
        }
        if !(self.zoh_period > 0.0) {
            return Err(Error::InvalidParameter(format!("zoh_period = {:e}", self.zoh_period)));
        }
        if !(self.offset_scale.is_finite()) {
            return Err(Error::InvalidParameter("offset_scale".into()));
        }
        if !(self.snapshot_every >= 0.0) {
            return Err(Error::InvalidParameter("snapshot_every".into()));
        }
        if !(self.etm_sigma > 0.0 && self.etm_sigma < 1.0) {
            return Err(Error::OutOfRange {
                what: "sigma",
                value: self.etm_sigma,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(self.etm_eta > 0.0) {
            return Err(Error::InvalidParameter(format!("eta = {:e}", self.etm_eta)));
        }
        Ok(())
    }
}

/// Everything derived once per scenario before stepping.
#[derive(Debug, Clone)]
pub struct Setup {
    pub dc: DerivedConstants,
    pub km: KernelModel,
    pub alpha: AlphaConstants,
    pub etm: EtmConfig,
    pub lyapunov: LyapunovDiagnostics,
    pub dwell: DwellTime,
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Setup> {
    cfg.validate()?;
    let dc = derive_constants_with(&cfg.bio, cfg.linearization)?;
    let km = build_kernel_model_with(&dc, &cfg.gains, cfg.l_bar, cfg.kernel_intervals)?;
    let alpha = alpha_constants(&km, &dc, &cfg.bio, cfg.l_bar)?;
    let base = match cfg.etm_source {
        EtmSource::PaperFig2 => EtmConfig::paper_fig2(),
        EtmSource::Derived => {
            let probe = etm_defaults(&alpha, cfg.etm_sigma, cfg.etm_eta, &dc, 1.0)?;
            let d1 = d1_lower_bound(&alpha, &cfg.bio, probe.beta[3]);
            etm_defaults(&alpha, cfg.etm_sigma, cfg.etm_eta, &dc, d1)?
        }
    };
    let etm = cfg.etm_overrides.apply(&base);
    etm.validate()?;
    let d1 = d1_lower_bound(&alpha, &cfg.bio, etm.beta[3]);
    let lyapunov = lyapunov_setup(&dc, &cfg.gains, &Mat2::identity(), d1)?;
    let dwell = dwell_time(&etm, &alpha, cfg.bio.l_s)?;
    Ok(Setup {
        dc,
        km,
        alpha,
        etm,
        lyapunov,
        dwell,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovDiagnostics {
    pub p: Mat2,
    pub q: Mat2,
    pub d1: f64,
    pub d2: f64,
    /// Normwise backward error |M^T P + P M + Q| / (2 |M| |P| + |Q|).
    pub residual: f64,
    pub lambda_min_p: f64,
}

/// Solves (A1 + B K^T)^T P + P (A1 + B K^T) = -Q; d2 at half its upper bound.
pub fn lyapunov_setup(dc: &DerivedConstants, gc: &GainConfig, q: &Mat2, d1: f64) -> Result<LyapunovDiagnostics> {
    let m = gc.closed_loop_matrix(dc);
    let re = gc.closed_loop_real_parts(dc);
    if !(re[0] < 0.0 && re[1] < 0.0) {
        return Err(Error::NotHurwitz(re));
    }
    let p = solve_lyapunov(&m, q)?;
    let resid = m.transpose() * p + p * m + q;
    let residual = resid.norm() / (2.0 * m.norm() * p.norm() + q.norm());
    let eig_p = p.symmetric_eigenvalues();
    let lambda_min_p = eig_p.min();
    let lambda_min_q = q.symmetric_eigenvalues().min();
    let btp = (dc.b.transpose() * p).norm();
    let d2 = 0.5 * dc.params.d * lambda_min_q / (64.0 * btp * btp);
    Ok(LyapunovDiagnostics {
        p,
        q: *q,
        d1,
        d2,
        residual,
        lambda_min_p,
    })
}

/// 2x2 Lyapunov equation as a 3x3 linear system, after a diagonal
/// similarity that balances the off-diagonal entries of M.
fn solve_lyapunov(m: &Mat2, q: &Mat2) -> Result<Mat2> {
    let t = if m[(0, 1)] != 0.0 && m[(1, 0)] != 0.0 {
        (m[(1, 0)] / m[(0, 1)]).abs().sqrt()
    } else {
        1.0
    };
    let tm = Mat2::new(1.0, 0.0, 0.0, t);
    let tinv = Mat2::new(1.0, 0.0, 0.0, 1.0 / t);
    let ms = tinv * m * tm;
    let qs = tm.transpose() * q * tm;
    let (a, b, c, d) = (ms[(0, 0)], ms[(0, 1)], ms[(1, 0)], ms[(1, 1)]);
    // Unknowns [p11, p12, p22].
    let sys = Matrix3::new(2.0 * a, 2.0 * c, 0.0, b, a + d, c, 0.0, 2.0 * b, 2.0 * d);
    let rhs = Vector3::new(-qs[(0, 0)], -qs[(0, 1)], -qs[(1, 1)]);
    let sol = sys.lu().solve(&rhs).ok_or(Error::LinearSolveFailure(0))?;
    let ps = Mat2::new(sol[0], sol[1], sol[1], sol[2]);
    Ok(tinv.transpose() * ps * tinv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovValues {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v: f64,
}

/// V1 = ||w||^2 / 2, V2 = ||w_x||^2 / 2, V3 = X^T P X, V = d1 V1 + V2 + d2 V3 - m.
pub fn lyapunov_eval(w: &[f64], l: f64, x: &Vec2, m: f64, diag: &LyapunovDiagnostics) -> LyapunovValues {
    let h = l / (w.len() - 1) as f64;
    let v1 = 0.5 * l2_sq(w, h);
    let v2 = 0.5 * l2_sq(&derivative(w, h), h);
    let v3 = x.dot(&(diag.p * x));
    LyapunovValues {
        v1,
        v2,
        v3,
        v: diag.d1 * v1 + v2 + diag.d2 * v3 - m,
    }
}

/// Trapezoid approximation of the squared L2 norm.
fn l2_sq(f: &[f64], h: f64) -> f64 {
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    crate::quad::trapezoid(&sq, h)
}

/// Central differences inside, second-order one-sided at the ends.
fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let mut d = vec![0.0; n + 1];
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * h);
    for i in 1..n {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    Completed,
    NonFinite(String),
    DomainCollapse,
    EventCapExceeded,
    /// The axon grew past the kernel table range l_bar.
    KernelRangeExceeded,
    /// Any other numerical failure (singular solve, model validity guard).
    NumericFailure(String),
}

impl RunStatus {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunStatus::Completed)
    }

    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::NonFinite(_) => "non-finite",
            RunStatus::DomainCollapse => "domain-collapse",
            RunStatus::EventCapExceeded => "event-cap-exceeded",
            RunStatus::KernelRangeExceeded => "kernel-range-exceeded",
            RunStatus::NumericFailure(_) => "numeric-failure",
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::NonFinite(s) => RunStatus::NonFinite(s.clone()),
            Error::DomainCollapse(_) => RunStatus::DomainCollapse,
            Error::OutOfRange { what: "axon length", .. } => RunStatus::KernelRangeExceeded,
            other => RunStatus::NumericFailure(other.to_string()),
        }
    }
}

/// One row of the time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub l: f64,
    pub c_c: f64,
    pub u_applied: f64,
    pub d: f64,
    pub m: f64,
    pub norm_u: f64,
    pub norm_ux: f64,
    pub norm_w: f64,
    pub norm_wx: f64,
    /// w(0) from the discrete transform.
    pub w0: f64,
    /// w(0) with the control integral taken by a Simpson rule instead.
    pub w0_reference: f64,
    pub x: Vec2,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v: f64,
    pub event: bool,
}

impl Sample {
    /// ||u||_{H1} + |X|.
    pub fn h1_plus_ode(&self) -> f64 {
        (self.norm_u.powi(2) + self.norm_ux.powi(2)).sqrt() + self.x.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub l: f64,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CapViolations {
    pub l_bar_steps: usize,
    pub v_bar_steps: usize,
    pub max_l: f64,
    pub max_abs_l_dot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub mode: ControllerMode,
    pub dt: f64,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
    pub status: RunStatus,
    pub caps: CapViolations,
    /// Largest d^2 + gamma m seen (should stay <= 0).
    pub max_trigger_margin: f64,
    pub etm: EtmConfig,
    pub lyapunov: LyapunovDiagnostics,
    pub dwell: DwellTime,
    pub alpha: AlphaConstants,
    pub derived: DerivedConstants,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn zeno(&self) -> ZenoReport {
        zeno_report(&self.events, self.dwell.tau, self.dt)
    }

    pub fn final_sample(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Length at the last sample with t <= `t`.
    pub fn length_at(&self, t: f64) -> Option<f64> {
        self.samples
            .iter()
            .take_while(|s| s.t <= t + 1e-9 * self.dt)
            .last()
            .map(|s| s.l)
    }

    /// First time l reaches `frac` * l_s.
    pub fn time_to_fraction(&self, frac: f64) -> Option<f64> {
        let target = frac * self.derived.params.l_s;
        self.samples.iter().find(|s| s.l >= target).map(|s| s.t)
    }
}

/// Signals computed from one plant state.
struct Observed {
    u_cont: f64,
    x: Vec2,
    w: Vec<f64>,
    w0_reference: f64,
    norm_u: f64,
    norm_ux: f64,
    norm_w2: f64,
    norm_wx2: f64,
    w0x: f64,
    wlx: f64,
}

impl Observed {
    fn signals(&self) -> EtmSignals {
        EtmSignals {
            u_cont: self.u_cont,
            x: self.x,
            w0x: self.w0x,
            wlx: self.wlx,
            w_norm2: self.norm_w2,
        }
    }
}

fn observe(s: &PlantState, dc: &DerivedConstants, km: &KernelModel, ws: &mut TransformWorkspace) -> Result<Observed> {
    ws.update(km, s.l)?;
    let n = s.intervals();
    let p = &dc.params;
    let h = s.l / n as f64;
    let u: Vec<f64> = (0..=n).map(|i| s.c[i] - dc.c_eq(s.x(i))).collect();
    let x = Vec2::new(s.cone() - p.c_inf, s.l - p.l_s);
    let u_cont = ws.control(&u, &x);
    let mut w = vec![0.0; n + 1];
    ws.forward(&u, &x, &mut w);
    let wx = derivative(&w, h);
    let ux = derivative(&u, h);
    Ok(Observed {
        u_cont,
        x,
        w0_reference: u[0] - ws.control_reference(&u, &x),
        norm_u: l2_sq(&u, h).sqrt(),
        norm_ux: l2_sq(&ux, h).sqrt(),
        norm_w2: l2_sq(&w, h),
        norm_wx2: l2_sq(&wx, h),
        w0x: wx[0],
        wlx: wx[n],
        w,
    })
}

fn initial_state(cfg: &ScenarioConfig, dc: &DerivedConstants) -> PlantState {
    let n = cfg.solver.n;
    let s = cfg.offset_scale;
    let l_s = cfg.bio.l_s;
    let l = l_s + s * (cfg.l0 - l_s);
    let c = (0..=n)
        .map(|i| {
            let ce = dc.c_eq(l * i as f64 / n as f64);
            ce + s * (cfg.c0 - ce)
        })
        .collect();
    PlantState { t: 0.0, c, l }
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunRecord> {
    let setup = prepare(cfg)?;
    run_prepared(cfg, &setup)
}

pub fn run_prepared(cfg: &ScenarioConfig, setup: &Setup) -> Result<RunRecord> {
    let init = initial_state(cfg, &setup.dc);
    run_from(cfg, setup, init)
}

/// Runs from an explicit initial plant state.
pub fn run_from(cfg: &ScenarioConfig, setup: &Setup, init: PlantState) -> Result<RunRecord> {
    let clock = std::time::Instant::now();
    let dc = &setup.dc;
    let km = &setup.km;
    let etm = &setup.etm;
    let lyap = &setup.lyapunov;
    let p = cfg.bio;
    let n = cfg.solver.n;
    let dt = cfg.solver.dt;
    let steps = cfg.solver.steps();
    let c_soma = dc.c_eq(0.0);

    let mut stepper = Stepper::new(cfg.solver, p)?;
    let feedback = ControlFeedback::new(km, n, init.l)?;
    let mut ws = TransformWorkspace::new(km, n, init.l)?;
    let mut trig = EtmState::new(etm);

    let mut record = RunRecord {
        mode: cfg.mode,
        dt,
        samples: Vec::with_capacity(steps + 1),
        events: Vec::new(),
        snapshots: Vec::new(),
        status: RunStatus::Completed,
        caps: CapViolations::default(),
        max_trigger_margin: f64::NEG_INFINITY,
        etm: *etm,
        lyapunov: *lyap,
        dwell: setup.dwell,
        alpha: setup.alpha,
        derived: *dc,
        wall_seconds: 0.0,
    };
    let snap_stride = if cfg.snapshot_every > 0.0 {
        ((cfg.snapshot_every / dt).round() as usize).max(1)
    } else {
        0
    };
    let zoh_stride = ((cfg.zoh_period / dt).round() as usize).max(1);

    let mut s = init;
    let mut prev: Option<PlantState> = None;
    let mut obs = observe(&s, dc, km, &mut ws)?;
    let sampled = cfg.mode != ControllerMode::Continuous;
    if sampled {
        trig.record_event(s.t, obs.u_cont);
        trig.sink_prev = obs.signals().sink(etm);
    }
    let mut u_applied = if sampled { trig.u_held } else { obs.u_cont };
    push_sample(&mut record, &s, &obs, u_applied, &trig, cfg.mode, lyap, sampled);
    if snap_stride > 0 {
        record.snapshots.push(Snapshot {
            t: s.t,
            l: s.l,
            c: s.c.clone(),
        });
    }

    let t0 = s.t;
    for k in 1..=steps {
        // Keep sample times on the grid instead of accumulating dt.
        s.t = t0 + (k - 1) as f64 * dt;
        let outcome = (|| -> Result<(PlantState, Observed, bool)> {
            match cfg.mode {
                ControllerMode::Continuous => {
                    let (next, diag) = stepper.step_from(&s, prev.as_ref(), Soma::Feedback(&feedback), None)?;
                    u_applied = diag.soma_value - c_soma;
                    let o = observe(&next, dc, km, &mut ws)?;
                    Ok((next, o, false))
                }
                ControllerMode::Etc | ControllerMode::Zoh => {
                    let (next, _) = stepper.step_from(&s, prev.as_ref(), Soma::Value(c_soma + trig.u_held), None)?;
                    let o = observe(&next, dc, km, &mut ws)?;
                    let fire = if cfg.mode == ControllerMode::Etc {
                        etm_step(&mut trig, etm, &o.signals(), next.t, dt)?
                    } else {
                        k % zoh_stride == 0
                    };
                    if !fire {
                        if cfg.mode == ControllerMode::Zoh {
                            trig.d = o.u_cont - trig.u_held;
                        }
                        u_applied = trig.u_held;
                        return Ok((next, o, false));
                    }
                    // Resample at the event: redo the step with u(0) tied to the
                    // law at the new level so that d(t_j) = 0 exactly.
                    stepper.rewind();
                    let (redo, diag) = stepper.step_from(&s, prev.as_ref(), Soma::Feedback(&feedback), None)?;
                    let o = observe(&redo, dc, km, &mut ws)?;
                    let u_tj = diag.soma_value - c_soma;
                    if cfg.mode == ControllerMode::Etc {
                        trig.events.pop();
                        trig.t_last_event = trig.events.last().map(|e| e.t);
                    }
                    trig.record_event(redo.t, u_tj);
                    trig.sink_prev = o.signals().sink(etm);
                    u_applied = u_tj;
                    Ok((redo, o, true))
                }
            }
        })();
        let (next, o, fired) = match outcome {
            Ok(v) => v,
            Err(e) => {
                record.status = RunStatus::from_error(&e);
                break;
            }
        };
        prev = Some(std::mem::replace(&mut s, next));
        obs = o;
        if cfg.mode == ControllerMode::Etc {
            let margin = trig.d * trig.d + etm.gamma * trig.m;
            record.max_trigger_margin = record.max_trigger_margin.max(margin);
        }
        let l_dot = p.r_g * (s.cone() - p.c_inf);
        record.caps.max_l = record.caps.max_l.max(s.l);
        record.caps.max_abs_l_dot = record.caps.max_abs_l_dot.max(l_dot.abs());
        if s.l > cfg.l_bar {
            record.caps.l_bar_steps += 1;
        }
        if l_dot.abs() > cfg.v_bar {
            record.caps.v_bar_steps += 1;
        }
        push_sample(&mut record, &s, &obs, u_applied, &trig, cfg.mode, lyap, fired);
        if snap_stride > 0 && k % snap_stride == 0 {
            record.snapshots.push(Snapshot {
                t: s.t,
                l: s.l,
                c: s.c.clone(),
            });
        }
        if trig.events.len() > cfg.event_cap {
            record.status = RunStatus::EventCapExceeded;
            break;
        }
    }
    record.events = trig.events;
    record.wall_seconds = clock.elapsed().as_secs_f64();
    Ok(record)
}

#[allow(clippy::too_many_arguments)]
fn push_sample(
    record: &mut RunRecord,
    s: &PlantState,
    o: &Observed,
    u_applied: f64,
    trig: &EtmState,
    mode: ControllerMode,
    lyap: &LyapunovDiagnostics,
    event: bool,
) {
    let (d, m) = match mode {
        ControllerMode::Continuous => (0.0, 0.0),
        ControllerMode::Etc => (trig.d, trig.m),
        ControllerMode::Zoh => (trig.d, 0.0),
    };
    let lv = lyapunov_eval(&o.w, s.l, &o.x, m, lyap);
    record.samples.push(Sample {
        t: s.t,
        l: s.l,
        c_c: s.cone(),
        u_applied,
        d,
        m,
        norm_u: o.norm_u,
        norm_ux: o.norm_ux,
        norm_w: o.norm_w2.sqrt(),
        norm_wx: o.norm_wx2.sqrt(),
        w0: o.w[0],
        w0_reference: o.w0_reference,
        x: o.x,
        v1: lv.v1,
        v2: lv.v2,
        v3: lv.v3,
        v: lv.v,
        event,
    });
}

/// Parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Eta,
    Sigma,
    Gamma,
    N,
    Dt,
}

impl SweepParam {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eta" => Some(SweepParam::Eta),
            "sigma" => Some(SweepParam::Sigma),
            "gamma" => Some(SweepParam::Gamma),
            "n" | "N" => Some(SweepParam::N),
            "dt" => Some(SweepParam::Dt),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::Sigma => "sigma",
            SweepParam::Gamma => "gamma",
            SweepParam::N => "N",
            SweepParam::Dt => "dt",
        }
    }

    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut out = cfg.clone();
        match self {
            SweepParam::Eta => {
                out.etm_overrides.eta = Some(value);
                out.etm_eta = value;
            }
            SweepParam::Sigma => {
                out.etm_overrides.sigma = Some(value);
                out.etm_sigma = value;
            }
            SweepParam::Gamma => out.etm_overrides.gamma = Some(value),
            SweepParam::N => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!("N = {value}")));
                }
                out.solver.n = value as usize;
            }
            SweepParam::Dt => out.solver.dt = value,
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub mode: ControllerMode,
    pub status: String,
    pub event_count: usize,
    pub min_gap: f64,
    pub time_to_95: Option<f64>,
    pub final_l: f64,
    /// |l - l_s| / l_s at the horizon.
    pub final_error: f64,
    pub length_at_240: Option<f64>,
}

impl SweepRow {
    pub fn from_record(param: &str, value: f64, r: &RunRecord) -> Self {
        let last = r.final_sample().expect("at least the initial sample");
        let l_s = r.derived.params.l_s;
        SweepRow {
            param: param.to_string(),
            value,
            mode: r.mode,
            status: r.status.label().to_string(),
            event_count: r.events.len(),
            min_gap: r.zeno().min_gap,
            time_to_95: r.time_to_fraction(0.95),
            final_l: last.l,
            final_error: (last.l - l_s).abs() / l_s,
            length_at_240: r.length_at(240.0),
        }
    }
}

/// Runs one variant per value in parallel; rows come back in input order.
pub fn compare_and_sweep(cfg: &ScenarioConfig, param: SweepParam, values: &[f64]) -> Result<Vec<(SweepRow, RunRecord)>> {
    values
        .par_iter()
        .map(|&v| {
            let c = param.apply(cfg, v)?;
            let r = run_scenario(&c)?;
            Ok((SweepRow::from_record(param.name(), v, &r), r))
        })
        .collect()
}

/// Continuous and event-triggered runs of the same scenario.
pub fn compare_modes(cfg: &ScenarioConfig) -> Result<(RunRecord, RunRecord)> {
    let setup = prepare(cfg)?;
    let mut cont = cfg.clone();
    cont.mode = ControllerMode::Continuous;
    let mut etc = cfg.clone();
    etc.mode = ControllerMode::Etc;
    let (a, b) = rayon::join(|| run_prepared(&cont, &setup), || run_prepared(&etc, &setup));
    Ok((a?, b?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_constants;

    #[test]
    fn lyapunov_solution_is_accurate_and_positive() {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        let gc = GainConfig::default();
        let diag = lyapunov_setup(&dc, &gc, &Mat2::identity(), 1.0).unwrap();
        assert!(diag.residual <= 1e-12, "residual {:e}", diag.residual);
        assert_eq!(diag.p[(0, 1)], diag.p[(1, 0)]);
        assert!(diag.lambda_min_p > 0.0);
        let btp = (dc.b.transpose() * diag.p).norm();
        assert!(diag.d2 > 0.0 && diag.d2 < dc.params.d / (64.0 * btp * btp));
    }

    #[test]
    fn lyapunov_is_linear_in_q() {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        let gc = GainConfig::default();
        let p1 = lyapunov_setup(&dc, &gc, &Mat2::identity(), 1.0).unwrap().p;
        let p2 = lyapunov_setup(&dc, &gc, &(Mat2::identity() * 2.0), 1.0).unwrap().p;
        assert!((p2 - p1 * 2.0).norm() <= 1e-12 * p2.norm());
    }

    #[test]
    fn lyapunov_eval_cases() {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        let diag = lyapunov_setup(&dc, &GainConfig::default(), &Mat2::identity(), 3.0).unwrap();
        let w = vec![0.0; 33];
        let lv = lyapunov_eval(&w, 1e-5, &Vec2::zeros(), -0.5, &diag);
        assert_eq!(lv.v, 0.5);
        let x = Vec2::new(1e-3, 2e-7);
        let lv = lyapunov_eval(&w, 1e-5, &x, 0.0, &diag);
        assert!(lv.v3 >= diag.lambda_min_p * x.dot(&x) * (1.0 - 1e-12));
        let w: Vec<f64> = (0..=32).map(|i| (i as f64 * 0.2).sin()).collect();
        let a = lyapunov_eval(&w, 1e-5, &x, -0.1, &diag);
        let mut d = diag;
        d.d1 *= 2.0;
        let b = lyapunov_eval(&w, 1e-5, &x, -0.1, &d);
        assert!((b.v - a.v - diag.d1 * a.v1).abs() <= 1e-12 * b.v.abs());
    }

    #[test]
    fn non_hurwitz_gains_rejected() {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        let gc = GainConfig { k1: -1e6, k2: 4e13 };
        assert!(matches!(
            lyapunov_setup(&dc, &gc, &Mat2::identity(), 1.0),
            Err(Error::NotHurwitz(_))
        ));
    }

    #[test]
    fn derivative_is_exact_on_quadratics() {
        let h = 0.1;
        let f: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(2)).collect();
        let d = derivative(&f, h);
        for (i, v) in d.iter().enumerate() {
            assert!((v - 2.0 * i as f64 * h).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = ScenarioConfig::paper_fig2();
        cfg.validate().unwrap();
        let mut bad = cfg.clone();
        bad.l_bar = cfg.bio.l_s;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.event_cap = 0;
        assert!(bad.validate().is_err());
    }
}
