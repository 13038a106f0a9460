//! Front-fixed theta-scheme for the moving-boundary plant.
//!
//! The PDE is mapped to xi = x / l in [0, 1]:
//!   c_t = (D / l^2) c_xixi + (xi l'/l - a/l) c_xi - g c.
//! The cone ODE is coupled into the banded system (its quadratic term
//! Newton-linearised) and the length ODE is closed by fixed-point iteration,
//! so one step is implicit in every stiff term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BioParams, PlantState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Number of intervals in xi.
    pub n: usize,
    pub dt: f64,
    pub theta: f64,
    pub t_end: f64,
    /// Backward-Euler steps taken before switching to `theta` (damps the
    /// start-up ringing of Crank-Nicolson on non-smooth initial data).
    pub startup_steps: usize,
    pub scheme: TimeScheme,
}

/// Time integrator. BDF2 is L-stable and needs the previous state; without
/// it a backward-Euler step is taken.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScheme {
    #[default]
    Theta,
    Bdf2,
}

impl TimeScheme {
    pub fn name(self) -> &'static str {
        match self {
            TimeScheme::Theta => "theta",
            TimeScheme::Bdf2 => "bdf2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "theta" => Some(TimeScheme::Theta),
            "bdf2" => Some(TimeScheme::Bdf2),
            _ => None,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 128,
            dt: 0.05,
            theta: 0.5,
            t_end: 300.0,
            startup_steps: 0,
            scheme: TimeScheme::Theta,
        }
    }
}

impl SolverConfig {
    pub const MIN_INTERVALS: usize = 16;

    pub fn validate(&self) -> Result<()> {
        if self.n < Self::MIN_INTERVALS {
            return Err(Error::GridTooSmall(self.n + 1));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {:e}", self.dt)));
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(Error::OutOfRange {
                what: "theta",
                value: self.theta,
                lo: 0.5,
                hi: 1.0,
            });
        }
        if !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter(format!("t_end = {:e}", self.t_end)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub max_c: f64,
    /// Boundary speed at the end of the step (m/s).
    pub l_dot: f64,
    /// Largest advection Courant number |b| dt / h in xi.
    pub cfl_like: f64,
    /// Fixed-point iterations used on (c_c, l).
    pub iterations: usize,
    /// Value imposed at xi = 0 at the new time level.
    pub soma_value: f64,
}

/// Soma boundary value that depends affinely on the new profile:
/// c(0) = offset + sum_i weights[i] * c[i].
pub trait SomaFeedback {
    /// Fills `weights` (length N + 1) for domain length `l` and returns the offset.
    fn affine(&self, l: f64, weights: &mut [f64]) -> Result<f64>;
}

#[derive(Clone, Copy)]
pub enum Soma<'a> {
    /// Dirichlet value c(0).
    Value(f64),
    /// Implicit feedback evaluated at the new time level.
    Feedback(&'a dyn SomaFeedback),
}

/// Additive source terms, used for manufactured solutions.
pub trait Forcing {
    /// PDE source at physical position x.
    fn pde(&self, x: f64, t: f64) -> f64;
    /// Source added to the right side of the cone ODE (units of l_c * dc_c/dt).
    fn cone(&self, t: f64) -> f64;
}

/// Reusable stepper holding scratch buffers.
pub struct Stepper {
    cfg: SolverConfig,
    p: BioParams,
    steps_taken: usize,
    explicit: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    part: Vec<f64>,
    unit: Vec<f64>,
    weights: Vec<f64>,
    scratch: Vec<f64>,
    cfl: f64,
}

const SECANT_ITER: usize = 8;
const MIN_LENGTH_RATIO: f64 = 0.05;
const ITER_TOL: f64 = 1e-14;

struct BrentTolerance {
    scale: f64,
    iterations: usize,
}

impl roots::Convergency<f64> for BrentTolerance {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() <= ITER_TOL * self.scale
    }

    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= 4.0 * f64::EPSILON * x1.abs().max(x2.abs())
    }

    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        self.iterations = iter;
        iter >= 200
    }
}

struct StepContext {
    theta: f64,
    dt: f64,
    h: f64,
    t1: f64,
    l_base: f64,
    cc_base: f64,
    g0: f64,
    cone_src1: f64,
}

impl StepContext {
    fn length_for(&self, p: &BioParams, cc_new: f64) -> f64 {
        self.l_base + self.dt * p.r_g * (self.theta * (cc_new - p.c_inf) + (1.0 - self.theta) * (self.cc_base - p.c_inf))
    }
}

impl Stepper {
    pub fn new(cfg: SolverConfig, p: BioParams) -> Result<Self> {
        cfg.validate()?;
        p.validate()?;
        let m = cfg.n + 1;
        Ok(Self {
            cfg,
            p,
            steps_taken: 0,
            explicit: vec![0.0; m],
            lower: vec![0.0; m],
            diag: vec![0.0; m],
            upper: vec![0.0; m],
            rhs: vec![0.0; m],
            part: vec![0.0; m],
            unit: vec![0.0; m],
            weights: vec![0.0; m],
            scratch: vec![0.0; m],
            cfl: 0.0,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Resets the start-up counter.
    pub fn reset(&mut self) {
        self.steps_taken = 0;
    }

    /// Forgets the last step so that it can be retaken.
    pub fn rewind(&mut self) {
        self.steps_taken = self.steps_taken.saturating_sub(1);
    }

    fn theta(&self) -> f64 {
        if self.steps_taken < self.cfg.startup_steps {
            1.0
        } else {
            self.cfg.theta
        }
    }

    /// Solves the linear step with the cone concentration guessed as `x`.
    /// Returns the new cone value and the soma value used.
    fn solve_at(
        &mut self,
        ctx: &StepContext,
        soma: &Soma<'_>,
        forcing: Option<&dyn Forcing>,
        x: f64,
        out: &mut [f64],
    ) -> Result<(f64, f64)> {
        let p = self.p;
        let n = self.cfg.n;
        let (theta, dt, h) = (ctx.theta, ctx.dt, ctx.h);
        let l_star = ctx.length_for(&p, x);
        if !(l_star > 0.0) || !l_star.is_finite() {
            return Err(if l_star.is_finite() {
                Error::DomainCollapse(l_star)
            } else {
                Error::NonFinite("axon length".into())
            });
        }
        let l_dot = p.r_g * (x - p.c_inf);
        // Row 0 is the Dirichlet row; rows 1..n-1 interior.
        self.lower[0] = 0.0;
        self.diag[0] = 1.0;
        self.upper[0] = 0.0;
        for i in 1..n {
            let (lo, di, up, cr) = self.stencil(i, l_star, l_dot);
            self.cfl = self.cfl.max(cr);
            self.lower[i] = -theta * dt * lo;
            self.diag[i] = 1.0 - theta * dt * di;
            self.upper[i] = -theta * dt * up;
            let mut r = self.explicit[i];
            if let Some(f) = forcing {
                r += theta * dt * f.pde(i as f64 * h * l_star, ctx.t1);
            }
            self.rhs[i] = r;
        }
        // Cone row, second-order one-sided flux, quadratic term linearised at x.
        let sf = p.d / (2.0 * h * l_star);
        let q0 = (p.r_g * x + p.rt_g * p.l_c) * (x - p.c_inf);
        let qp = p.r_g * (2.0 * x - p.c_inf) + p.rt_g * p.l_c;
        let mut a_nn = p.l_c / dt - theta * ((p.a - p.g * p.l_c) - 3.0 * sf - qp);
        let mut a_n1 = -theta * 4.0 * sf;
        let a_n2 = theta * sf;
        let mut r_n = p.l_c / dt * ctx.cc_base + theta * (qp * x - q0 + ctx.cone_src1) + (1.0 - theta) * ctx.g0;
        // Eliminate c_{n-2} with row n-1 to keep the system tridiagonal.
        let f = a_n2 / self.lower[n - 1];
        a_n1 -= f * self.diag[n - 1];
        a_nn -= f * self.upper[n - 1];
        r_n -= f * self.rhs[n - 1];
        self.lower[n] = a_n1;
        self.diag[n] = a_nn;
        self.upper[n] = 0.0;
        self.rhs[n] = r_n;

        let soma_value = match soma {
            Soma::Value(v) => {
                self.rhs[0] = *v;
                thomas(&self.lower, &self.diag, &self.upper, &self.rhs, out, &mut self.scratch)?;
                *v
            }
            Soma::Feedback(fb) => {
                self.rhs[0] = 0.0;
                thomas(&self.lower, &self.diag, &self.upper, &self.rhs, &mut self.part, &mut self.scratch)?;
                self.unit.iter_mut().for_each(|v| *v = 0.0);
                self.unit[0] = 1.0;
                thomas(&self.lower, &self.diag, &self.upper, &self.unit, out, &mut self.scratch)?;
                let offset = fb.affine(l_star, &mut self.weights)?;
                let wp: f64 = self.weights.iter().zip(&self.part).map(|(w, v)| w * v).sum();
                let wh: f64 = self.weights.iter().zip(out.iter()).map(|(w, v)| w * v).sum();
                let denom = 1.0 - wh;
                if denom.abs() < 1e-12 {
                    return Err(Error::LinearSolveFailure(0));
                }
                let sv = (offset + wp) / denom;
                for (o, pv) in out.iter_mut().zip(&self.part) {
                    *o = pv + sv * *o;
                }
                out[0] = sv;
                sv
            }
        };
        Ok((out[n], soma_value))
    }

    /// Cone right side l_c * dc_c/dt, with the flux passed in.
    fn cone_rhs(&self, cc: f64, c_x: f64) -> f64 {
        let p = &self.p;
        (p.a - p.g * p.l_c) * cc - p.d * c_x - (p.r_g * cc + p.rt_g * p.l_c) * (cc - p.c_inf)
    }

    /// Spatial operator coefficients at interior node i.
    #[inline]
    fn stencil(&self, i: usize, l: f64, l_dot: f64) -> (f64, f64, f64, f64) {
        let n = self.cfg.n as f64;
        let h = 1.0 / n;
        let xi = i as f64 * h;
        let d = self.p.d / (l * l);
        let b = (xi * l_dot - self.p.a) / l;
        let dd = d / (h * h);
        let (lo, di, up) = if b.abs() * h / d > 2.0 {
            if b > 0.0 {
                (dd, -2.0 * dd - b / h, dd + b / h)
            } else {
                (dd - b / h, -2.0 * dd + b / h, dd)
            }
        } else {
            let bb = b / (2.0 * h);
            (dd - bb, -2.0 * dd, dd + bb)
        };
        (lo, di - self.p.g, up, b.abs() * self.cfg.dt / h)
    }

    /// Advances one step with the given soma rule and optional forcing.
    pub fn step(
        &mut self,
        s: &PlantState,
        soma: Soma<'_>,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(PlantState, StepDiagnostics)> {
        self.step_from(s, None, soma, forcing)
    }

    /// Advances one step; `prev` is the state one step before `s` and is
    /// used by multistep schemes.
    pub fn step_from(
        &mut self,
        s: &PlantState,
        prev: Option<&PlantState>,
        soma: Soma<'_>,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(PlantState, StepDiagnostics)> {
        let n = self.cfg.n;
        if s.c.len() != n + 1 {
            return Err(Error::GridMismatch {
                expected: n + 1,
                got: s.c.len(),
            });
        }
        if !(s.l > 0.0) {
            return Err(Error::DomainCollapse(s.l));
        }
        let p = self.p;
        let dt = self.cfg.dt;
        let h = 1.0 / n as f64;
        let t0 = s.t;
        let t1 = s.t + dt;
        let c = &s.c;
        let l0 = s.l;
        let cc0 = c[n];
        let l_dot0 = p.r_g * (cc0 - p.c_inf);
        let history = match self.cfg.scheme {
            TimeScheme::Bdf2 if self.steps_taken >= self.cfg.startup_steps => {
                prev.filter(|q| q.c.len() == n + 1 && ((s.t - q.t) - dt).abs() <= 1e-9 * dt)
            }
            _ => None,
        };
        // BDF2 is written as a backward-Euler step of length 2dt/3 from the
        // extrapolated base (4 y_n - y_{n-1}) / 3.
        let (theta, dt_eff) = match (self.cfg.scheme, history) {
            (TimeScheme::Theta, _) => (self.theta(), dt),
            (TimeScheme::Bdf2, Some(_)) => (1.0, 2.0 * dt / 3.0),
            (TimeScheme::Bdf2, None) => (1.0, dt),
        };
        let base = |now: f64, before: f64| (4.0 * now - before) / 3.0;
        let (cc_base, l_base) = match history {
            Some(q) => (base(cc0, q.c[n]), base(l0, q.l)),
            None => (cc0, l0),
        };

        // Explicit part of the theta average.
        let mut cfl: f64 = 0.0;
        self.cfl = 0.0;
        for i in 1..n {
            let (lo, di, up, cr) = self.stencil(i, l0, l_dot0);
            cfl = cfl.max(cr);
            let mut lc = lo * c[i - 1] + di * c[i] + up * c[i + 1];
            if let Some(f) = forcing {
                lc += f.pde(i as f64 * h * l0, t0);
            }
            let c_base = history.map_or(c[i], |q| base(c[i], q.c[i]));
            self.explicit[i] = c_base + (1.0 - theta) * dt_eff * lc;
        }
        let cx0 = (3.0 * (c[n] - c[n - 1]) - (c[n - 1] - c[n - 2])) / (2.0 * h * l0);
        let mut g0 = self.cone_rhs(cc0, cx0);
        if let Some(f) = forcing {
            g0 += f.cone(t0);
        }
        let cone_src1 = forcing.map_or(0.0, |f| f.cone(t1));

        let ctx = StepContext {
            theta,
            dt: dt_eff,
            h,
            t1,
            l_base,
            cc_base,
            g0,
            cone_src1,
        };
        // Scalar fixed point on the new cone concentration; the length and the
        // linearisation of the cone flux both follow from it. Secant steps
        // first, then Brent on a sign change of the residual if they stall.
        let mut out = vec![0.0; n + 1];
        let scale = cc0.abs().max(p.c_inf);
        let mut evals: Vec<(f64, f64)> = Vec::with_capacity(SECANT_ITER);
        let mut x = cc0;
        let mut soma_value;
        let mut converged = false;
        loop {
            let (fx, sv) = self.solve_at(&ctx, &soma, forcing, x, &mut out)?;
            soma_value = sv;
            let gx = fx - x;
            let stalled = evals.last().is_some_and(|&(xp, _)| (x - xp).abs() <= 4.0 * f64::EPSILON * x.abs());
            evals.push((x, gx));
            if gx.abs() <= ITER_TOL * fx.abs().max(scale) || stalled {
                converged = true;
                break;
            }
            let k = evals.len();
            if k >= SECANT_ITER || (k >= 2 && evals[k - 2].1.signum() != gx.signum()) {
                break;
            }
            let mut next = if k == 1 {
                fx
            } else {
                let (xp, gp) = evals[k - 2];
                let slope = (gx - gp) / (x - xp);
                if slope.is_finite() && slope != 0.0 {
                    x - gx / slope
                } else {
                    fx
                }
            };
            // Trial points may not shrink the domain below a fraction of l0.
            while ctx.length_for(&p, next) < MIN_LENGTH_RATIO * l0 {
                next = 0.5 * (next + x);
            }
            x = next;
        }
        let mut iterations = evals.len();
        if !converged {
            let bracket = evals
                .iter()
                .enumerate()
                .flat_map(|(i, a)| evals[i + 1..].iter().map(move |b| (*a, *b)))
                .filter(|(a, b)| a.1.signum() != b.1.signum())
                .min_by(|(a, b), (c, d)| (a.0 - b.0).abs().total_cmp(&(c.0 - d.0).abs()));
            let ((xa, _), (xb, _)) = bracket.ok_or(Error::FixedPointFailure(t1))?;
            let mut failure = None;
            let mut tol = BrentTolerance { scale, iterations: 0 };
            let root = roots::find_root_brent(
                xa,
                xb,
                |xv: f64| match self.solve_at(&ctx, &soma, forcing, xv, &mut out) {
                    Ok((fx, _)) => fx - xv,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                },
                &mut tol,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let root = root.map_err(|_| Error::FixedPointFailure(t1))?;
            let (_, sv) = self.solve_at(&ctx, &soma, forcing, root, &mut out)?;
            soma_value = sv;
            iterations += tol.iterations + 1;
        }
        let l_star = ctx.length_for(&p, out[n]);

        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("concentration profile".into()));
        }
        if !l_star.is_finite() {
            return Err(Error::NonFinite("axon length".into()));
        }
        if l_star <= 0.0 {
            return Err(Error::DomainCollapse(l_star));
        }
        self.steps_taken += 1;
        let diag = StepDiagnostics {
            max_c: out.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            l_dot: p.r_g * (out[n] - p.c_inf),
            cfl_like: cfl.max(self.cfl),
            iterations,
            soma_value,
        };
        Ok((
            PlantState {
                t: t1,
                c: out,
                l: l_star,
            },
            diag,
        ))
    }
}

/// One step with soma concentration input `q_s`, so that c(0) = -q_s.
pub fn plant_step(
    s: &PlantState,
    q_s: f64,
    cfg: &SolverConfig,
    p: &BioParams,
) -> Result<(PlantState, StepDiagnostics)> {
    let mut st = Stepper::new(*cfg, *p)?;
    st.step(s, Soma::Value(-q_s), None)
}

/// Second-order one-sided c_x at the tip.
pub fn boundary_gradient(s: &PlantState) -> Result<f64> {
    if s.c.len() < 3 {
        return Err(Error::GridTooSmall(s.c.len()));
    }
    let n = s.c.len() - 1;
    let h = s.l / n as f64;
    Ok((3.0 * (s.c[n] - s.c[n - 1]) - (s.c[n - 1] - s.c[n - 2])) / (2.0 * h))
}

/// Thomas algorithm; `lower[0]` and `upper[n]` are ignored.
pub(crate) fn thomas(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let m = diag.len();
    let mut beta = diag[0];
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::LinearSolveFailure(0));
    }
    out[0] = rhs[0] / beta;
    for i in 1..m {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::LinearSolveFailure(i));
        }
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / beta;
    }
    for i in (0..m - 1).rev() {
        out[i] -= scratch[i + 1] * out[i + 1];
    }
    Ok(())
}

/// c_m(x,t) = c_inf (1 + amp sin(pi x / l0) e^{-t}) on a domain pinned at l0.
///
/// The cone value stays at c_inf, so the exact length is constant; the
/// sources make c_m an exact solution of the full coupled system.
#[derive(Debug, Clone, Copy)]
pub struct Manufactured {
    pub p: BioParams,
    pub l0: f64,
    pub amp: f64,
}

impl Manufactured {
    pub fn exact(&self, x: f64, t: f64) -> f64 {
        let k = std::f64::consts::PI / self.l0;
        self.p.c_inf * (1.0 + self.amp * (k * x).sin() * (-t).exp())
    }

    pub fn initial(&self, n: usize) -> PlantState {
        PlantState {
            t: 0.0,
            c: (0..=n).map(|i| self.exact(self.l0 * i as f64 / n as f64, 0.0)).collect(),
            l: self.l0,
        }
    }
}

impl Forcing for Manufactured {
    fn pde(&self, x: f64, t: f64) -> f64 {
        let p = &self.p;
        let k = std::f64::consts::PI / self.l0;
        let e = (-t).exp() * self.amp * p.c_inf;
        let (s, c) = (k * x).sin_cos();
        let c_t = -e * s;
        let c_x = e * k * c;
        let c_xx = -e * k * k * s;
        c_t - p.d * c_xx + p.a * c_x + p.g * self.exact(x, t)
    }

    fn cone(&self, t: f64) -> f64 {
        let p = &self.p;
        let k = std::f64::consts::PI / self.l0;
        let c_x = -self.amp * p.c_inf * k * (-t).exp();
        -((p.a - p.g * p.l_c) * p.c_inf - p.d * c_x)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    /// (intervals, max error / (amp c_inf)).
    pub space_errors: Vec<(usize, f64)>,
    pub space_orders: Vec<f64>,
    /// (dt, successive-difference norm).
    pub time_diffs: Vec<(f64, f64)>,
    pub time_orders: Vec<f64>,
}

fn run_manufactured(case: &Manufactured, n: usize, dt: f64, scheme: TimeScheme, theta: f64, t_end: f64) -> Result<PlantState> {
    let cfg = SolverConfig {
        n,
        dt,
        theta,
        t_end,
        startup_steps: 0,
        scheme,
    };
    let mut st = Stepper::new(cfg, case.p)?;
    let mut s = case.initial(n);
    let mut prev: Option<PlantState> = None;
    for _ in 0..cfg.steps() {
        let c0 = case.exact(0.0, s.t + dt);
        let next = st.step_from(&s, prev.as_ref(), Soma::Value(c0), Some(case))?.0;
        prev = Some(std::mem::replace(&mut s, next));
    }
    Ok(s)
}

/// Spatial order from the exact manufactured solution, temporal order by
/// Richardson differences between successive halvings of dt.
pub fn convergence_study(
    case: &Manufactured,
    grids: &[usize],
    space_dt: f64,
    time_grid: usize,
    dts: &[f64],
    scheme: TimeScheme,
    theta: f64,
    t_end: f64,
) -> Result<OrderReport> {
    let scale = case.amp * case.p.c_inf;
    let mut space_errors = Vec::with_capacity(grids.len());
    for &n in grids {
        let s = run_manufactured(case, n, space_dt, scheme, theta, t_end)?;
        let err = (0..=n)
            .map(|i| (s.c[i] - case.exact(s.x(i), s.t)).abs())
            .fold(0.0, f64::max);
        space_errors.push((n, err / scale));
    }
    let space_orders = space_errors
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[1].0 as f64 / w[0].0 as f64).ln())
        .collect();

    let sols: Vec<PlantState> = dts
        .iter()
        .map(|&dt| run_manufactured(case, time_grid, dt, scheme, theta, t_end))
        .collect::<Result<_>>()?;
    let time_diffs: Vec<(f64, f64)> = sols
        .windows(2)
        .zip(dts)
        .map(|(w, &dt)| {
            let d = w[0].c.iter().zip(&w[1].c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (dt, d / scale)
        })
        .collect();
    let time_orders = time_diffs
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln())
        .collect();
    Ok(OrderReport {
        space_errors,
        space_orders,
        time_diffs,
        time_orders,
    })
}
