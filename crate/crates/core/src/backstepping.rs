//! Backstepping gain kernels, control laws and the Volterra transform pair.
//!
//! The kernel row [phi(s), phi'(s)] satisfies the companion ODE
//!   D phi''^T = phi^T (g I + A1 + (a/D) B H^T) + phi'^T (a I - B H^T),
//! started from [H^T, K^T - (1/D) (H^T B) H^T] at s = 0, and
//! k(x, y) = -(1/D) phi(x - y)^T B.

use nalgebra::{Matrix4, RowVector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DerivedConstants, ErrorState, Mat2, Vec2};
use crate::solver::SomaFeedback;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    pub k1: f64,
    pub k2: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self { k1: -0.001, k2: 4e13 }
    }
}

impl GainConfig {
    pub fn vector(&self) -> Vec2 {
        Vec2::new(self.k1, self.k2)
    }

    /// Trace/determinant condition for A1 + B K^T with B = [-beta, 0]:
    /// k1 > A1[0,0] / beta and k2 > A1[0,1] / beta.
    pub fn is_admissible(&self, dc: &DerivedConstants) -> bool {
        self.k1 > dc.a1_mat[(0, 0)] / dc.beta && self.k2 > dc.a1_mat[(0, 1)] / dc.beta
    }

    /// The same predicate written with a3_tilde in the second slot.
    pub fn satisfies_a3_condition(&self, dc: &DerivedConstants) -> bool {
        self.k1 > dc.a1_tilde / dc.beta && self.k2 > dc.a3_tilde / dc.beta
    }

    pub fn closed_loop_matrix(&self, dc: &DerivedConstants) -> Mat2 {
        dc.a1_mat + dc.b * self.vector().transpose()
    }

    /// Real parts of the eigenvalues of A1 + B K^T.
    pub fn closed_loop_real_parts(&self, dc: &DerivedConstants) -> [f64; 2] {
        let ev = self.closed_loop_matrix(dc).complex_eigenvalues();
        [ev[0].re, ev[1].re]
    }
}

pub const DEFAULT_TABLE_INTERVALS: usize = 4096;

/// Gain kernel data, immutable after construction.
#[derive(Debug, Clone)]
pub struct KernelModel {
    pub n1: Matrix4<f64>,
    pub phi0_row: RowVector4<f64>,
    pub l_bar: f64,
    pub gains: GainConfig,
    pub dc: DerivedConstants,
    /// Diagonal balancing: phi' is carried as phi' / scale inside the exponential.
    scale: f64,
    ds: f64,
    /// Rows [phi1, phi2, phi1', phi2', phi1'', phi2''] at s_j = -j ds.
    table: Vec<[f64; 6]>,
}

fn companion(dc: &DerivedConstants) -> (Mat2, Mat2) {
    let p = &dc.params;
    let bh = dc.b * dc.h.transpose();
    let m0 = (Mat2::identity() * p.g + dc.a1_mat + bh * (p.a / p.d)) / p.d;
    let m1 = (Mat2::identity() * p.a - bh) / p.d;
    (m0, m1)
}

pub fn build_kernel_model(dc: &DerivedConstants, gc: &GainConfig, l_bar: f64) -> Result<KernelModel> {
    build_kernel_model_with(dc, gc, l_bar, DEFAULT_TABLE_INTERVALS)
}

pub fn build_kernel_model_with(
    dc: &DerivedConstants,
    gc: &GainConfig,
    l_bar: f64,
    intervals: usize,
) -> Result<KernelModel> {
    if !gc.is_admissible(dc) {
        return Err(Error::GainConditionViolated(format!(
            "k1 = {:e} must exceed {:e} and k2 = {:e} must exceed {:e}",
            gc.k1,
            dc.a1_mat[(0, 0)] / dc.beta,
            gc.k2,
            dc.a1_mat[(0, 1)] / dc.beta
        )));
    }
    if !(l_bar > 0.0 && l_bar.is_finite()) {
        return Err(Error::InvalidParameter(format!("l_bar = {l_bar:e}")));
    }
    if intervals < 2 {
        return Err(Error::GridTooSmall(intervals + 1));
    }
    let d = dc.params.d;
    let (m0, m1) = companion(dc);
    let mut n1 = Matrix4::zeros();
    n1.fixed_view_mut::<2, 2>(0, 2).copy_from(&m0);
    n1.fixed_view_mut::<2, 2>(2, 0).copy_from(&Mat2::identity());
    n1.fixed_view_mut::<2, 2>(2, 2).copy_from(&m1);

    let hb = dc.h.dot(&dc.b);
    let dphi0 = gc.vector() - dc.h * (hb / d);
    let phi0_row = RowVector4::new(dc.h[0], dc.h[1], dphi0[0], dphi0[1]);

    let scale = m0.norm().sqrt().max(1.0);
    let mut km = KernelModel {
        n1,
        phi0_row,
        l_bar,
        gains: *gc,
        dc: *dc,
        scale,
        ds: l_bar / intervals as f64,
        table: Vec::with_capacity(intervals + 1),
    };
    for j in 0..=intervals {
        let s = -(j as f64) * km.ds;
        let r = if j == 0 { phi0_row } else { km.phi_direct(s)? };
        let (phi, dphi) = (Vec2::new(r[0], r[1]), Vec2::new(r[2], r[3]));
        let dd = km.second_derivative(&phi, &dphi);
        km.table.push([r[0], r[1], r[2], r[3], dd[0], dd[1]]);
    }
    Ok(km)
}

impl KernelModel {
    fn balanced(&self) -> (Matrix4<f64>, Matrix4<f64>, Matrix4<f64>) {
        let sc = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, self.scale, self.scale));
        let sc_inv = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0, 1.0 / self.scale, 1.0 / self.scale));
        (sc_inv * self.n1 * sc, sc, sc_inv)
    }

    /// [phi(s), phi'(s)] by a matrix exponential, valid for any real s.
    pub fn phi_direct(&self, s: f64) -> Result<RowVector4<f64>> {
        let (nb, sc, sc_inv) = self.balanced();
        let e = (nb * s).exp();
        let r = self.phi0_row * sc * e * sc_inv;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::MatrixExponentialFailure);
        }
        Ok(r)
    }

    /// phi''(s) from the kernel ODE.
    pub fn second_derivative(&self, phi: &Vec2, dphi: &Vec2) -> Vec2 {
        let (m0, m1) = companion(&self.dc);
        (phi.transpose() * m0 + dphi.transpose() * m1).transpose()
    }

    pub fn table_intervals(&self) -> usize {
        self.table.len() - 1
    }

    pub fn table_spacing(&self) -> f64 {
        self.ds
    }

    /// Table node s_j = -j ds and its stored (phi, phi').
    pub fn table_node(&self, j: usize) -> (f64, Vec2, Vec2) {
        let r = &self.table[j];
        (-(j as f64) * self.ds, Vec2::new(r[0], r[1]), Vec2::new(r[2], r[3]))
    }

    /// Diagonal kernel value k(x, x) = -(1/D) H^T B.
    pub fn diagonal(&self) -> f64 {
        -self.dc.h.dot(&self.dc.b) / self.dc.params.d
    }
}

/// (phi(s), phi'(s)) by Hermite cubic interpolation of the table.
pub fn phi_eval(km: &KernelModel, s: f64) -> Result<(Vec2, Vec2)> {
    if !(s <= 0.0 && s >= -km.l_bar) {
        return Err(Error::OutOfRange {
            what: "kernel argument s",
            value: s,
            lo: -km.l_bar,
            hi: 0.0,
        });
    }
    let pos = -s / km.ds;
    let m = km.table_intervals();
    let j = (pos.floor() as usize).min(m - 1);
    let t = pos - j as f64;
    let (r0, r1) = (&km.table[j], &km.table[j + 1]);
    if t == 0.0 {
        return Ok((Vec2::new(r0[0], r0[1]), Vec2::new(r0[2], r0[3])));
    }
    if t == 1.0 {
        return Ok((Vec2::new(r1[0], r1[1]), Vec2::new(r1[2], r1[3])));
    }
    // Step in s is -ds per table index.
    let hstep = -km.ds;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let herm = |v0: f64, d0: f64, v1: f64, d1: f64| h00 * v0 + h10 * hstep * d0 + h01 * v1 + h11 * hstep * d1;
    Ok((
        Vec2::new(herm(r0[0], r0[2], r1[0], r1[2]), herm(r0[1], r0[3], r1[1], r1[3])),
        Vec2::new(herm(r0[2], r0[4], r1[2], r1[4]), herm(r0[3], r0[5], r1[3], r1[5])),
    ))
}

/// k(x, y) = -(1/D) phi(x - y)^T B on x <= y.
pub fn kernel_k(km: &KernelModel, x: f64, y: f64) -> Result<f64> {
    if x > y {
        return Err(Error::RegionViolation { x, y });
    }
    let (phi, _) = phi_eval(km, x - y)?;
    Ok(-phi.dot(&km.dc.b) / km.dc.params.d)
}

/// Difference-indexed kernel samples for one grid and domain length.
/// Neumaier compensated sum.
#[derive(Default, Clone, Copy)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.carry += if self.sum.abs() >= v.abs() {
            (self.sum - t) + v
        } else {
            (v - t) + self.sum
        };
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone)]
pub struct TransformWorkspace {
    n: usize,
    l: f64,
    h: f64,
    /// k at separation j h, j = 0..=N.
    kd: Vec<f64>,
    /// phi(x_i - l) for every node.
    phi_shift: Vec<Vec2>,
}

impl TransformWorkspace {
    pub fn new(km: &KernelModel, n: usize, l: f64) -> Result<Self> {
        let mut ws = Self {
            n,
            l: f64::NAN,
            h: 0.0,
            kd: vec![0.0; n + 1],
            phi_shift: vec![Vec2::zeros(); n + 1],
        };
        ws.update(km, l)?;
        Ok(ws)
    }

    /// Re-samples the kernels for a new domain length.
    pub fn update(&mut self, km: &KernelModel, l: f64) -> Result<()> {
        if l == self.l {
            return Ok(());
        }
        if !(l > 0.0) {
            return Err(Error::DomainCollapse(l));
        }
        if l > km.l_bar {
            return Err(Error::OutOfRange {
                what: "axon length",
                value: l,
                lo: 0.0,
                hi: km.l_bar,
            });
        }
        let n = self.n;
        let h = l / n as f64;
        let inv_d = 1.0 / km.dc.params.d;
        for j in 0..=n {
            let s = if j == n { -l } else { -(j as f64) * h };
            let (phi, _) = phi_eval(km, s)?;
            self.kd[j] = -phi.dot(&km.dc.b) * inv_d;
            self.phi_shift[n - j] = phi;
        }
        self.l = l;
        self.h = h;
        Ok(())
    }

    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.l
    }

    /// k(x_i, x_j) for j >= i.
    pub fn k_at(&self, i: usize, j: usize) -> f64 {
        self.kd[j - i]
    }

    pub fn phi_at_shift(&self, i: usize) -> Vec2 {
        self.phi_shift[i]
    }

    /// Trapezoid weight of node j on [x_i, l].
    #[inline]
    fn weight(&self, i: usize, j: usize) -> f64 {
        if i == self.n {
            0.0
        } else if j == i || j == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// int_0^l k(0,y) u(y) dy + phi(-l)^T X.
    pub fn control(&self, u: &[f64], x: &Vec2) -> f64 {
        let mut acc = 0.0;
        for (j, uj) in u.iter().enumerate() {
            acc += self.weight(0, j) * self.kd[j] * uj;
        }
        acc + self.phi_shift[0].dot(x)
    }

    /// w_i = u_i - int_{x_i}^l k u dy - phi(x_i - l)^T X.
    pub fn forward(&self, u: &[f64], x: &Vec2, w: &mut [f64]) {
        let n = self.n;
        for i in 0..=n {
            let mut acc = Compensated::default();
            acc.add(u[i]);
            acc.add(-self.phi_shift[i][0] * x[0]);
            acc.add(-self.phi_shift[i][1] * x[1]);
            for j in i..=n {
                acc.add(-self.weight(i, j) * self.kd[j - i] * u[j]);
            }
            w[i] = acc.value();
        }
    }

    /// Back-substitution for the discrete Volterra equation from x = l down.
    pub fn inverse(&self, w: &[f64], x: &Vec2, u: &mut [f64]) -> Result<()> {
        let n = self.n;
        for i in (0..=n).rev() {
            let mut acc = Compensated::default();
            acc.add(w[i]);
            acc.add(self.phi_shift[i][0] * x[0]);
            acc.add(self.phi_shift[i][1] * x[1]);
            for j in i + 1..=n {
                acc.add(self.weight(i, j) * self.kd[j - i] * u[j]);
            }
            let pivot = 1.0 - self.weight(i, i) * self.kd[0];
            if pivot.abs() < 1e-12 {
                return Err(Error::LinearSolveFailure(i));
            }
            u[i] = acc.value() / pivot;
        }
        Ok(())
    }

    /// u(0) with the integral evaluated by composite Simpson (N even) instead
    /// of the trapezoid rule; used to measure the quadrature consistency of w(0).
    pub fn control_simpson(&self, u: &[f64], x: &Vec2) -> f64 {
        let n = self.n;
        let f = |j: usize| self.kd[j] * u[j];
        let mut acc = 0.0;
        if n % 2 == 0 {
            for j in 0..=n {
                let c = if j == 0 || j == n {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += c * f(j);
            }
            acc *= self.h / 3.0;
        } else {
            // Simpson on [0, x_{n-3}], 3/8 rule on the last three intervals.
            for j in 0..=n - 3 {
                let c = if j == 0 || j == n - 3 {
                    1.0
                } else if j % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += c * f(j);
            }
            acc *= self.h / 3.0;
            acc += 3.0 * self.h / 8.0 * (f(n - 3) + 3.0 * f(n - 2) + 3.0 * f(n - 1) + f(n));
        }
        acc + self.phi_shift[0].dot(x)
    }

    /// Sixth-order reference for the control integral: composite Boole rule
    /// when n is a multiple of 4, otherwise the Simpson variant.
    pub fn control_reference(&self, u: &[f64], x: &Vec2) -> f64 {
        let n = self.n;
        if n % 4 != 0 {
            return self.control_simpson(u, x);
        }
        const W: [f64; 4] = [14.0, 32.0, 12.0, 32.0];
        let mut acc = 0.0;
        for j in 0..=n {
            let c = if j == 0 || j == n { 7.0 } else { W[j % 4] };
            acc += c * self.kd[j] * u[j];
        }
        acc * 2.0 * self.h / 45.0 + self.phi_shift[0].dot(x)
    }

    /// Dense discrete operator (I - Kmat)^{-1} - I, i.e. the resolvent matrix.
    pub fn resolvent(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.n;
        let mut q = vec![vec![0.0; n + 1]; n + 1];
        let mut col = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        let zero = Vec2::zeros();
        for j in 0..=n {
            rhs.iter_mut().for_each(|v| *v = 0.0);
            rhs[j] = 1.0;
            self.inverse(&rhs, &zero, &mut col)?;
            for i in 0..=n {
                q[i][j] = col[i] - if i == j { 1.0 } else { 0.0 };
            }
        }
        Ok(q)
    }
}

pub fn continuous_control(km: &KernelModel, e: &ErrorState, l: f64) -> Result<f64> {
    let ws = TransformWorkspace::new(km, e.u.len() - 1, l)?;
    Ok(ws.control(&e.u, &e.x))
}

/// Same integrand as the continuous law, evaluated at an event instant; the
/// caller holds the value until the next event.
pub fn sampled_control(km: &KernelModel, e_tj: &ErrorState, l_tj: f64) -> Result<f64> {
    continuous_control(km, e_tj, l_tj)
}

pub fn forward_transform(km: &KernelModel, e: &ErrorState, l: f64) -> Result<Vec<f64>> {
    let ws = TransformWorkspace::new(km, e.u.len() - 1, l)?;
    let mut w = vec![0.0; e.u.len()];
    ws.forward(&e.u, &e.x, &mut w);
    Ok(w)
}

pub fn inverse_transform(km: &KernelModel, w: &[f64], x: &Vec2, l: f64) -> Result<Vec<f64>> {
    let ws = TransformWorkspace::new(km, w.len() - 1, l)?;
    let mut u = vec![0.0; w.len()];
    ws.inverse(w, x, &mut u)?;
    Ok(u)
}

/// F(x, X) = (phi'(x - l)^T - k(x, l) H^T) X.
pub fn f_eval(km: &KernelModel, x: f64, l: f64, xs: &Vec2) -> Result<f64> {
    if !(0.0..=l).contains(&x) {
        return Err(Error::OutOfRange {
            what: "position",
            value: x,
            lo: 0.0,
            hi: l,
        });
    }
    let (_, dphi) = phi_eval(km, x - l)?;
    let k = kernel_k(km, x, l)?;
    Ok((dphi - km.dc.h * k).dot(xs))
}

/// Soma rule c(0) = c_eq(0) + U with U the continuous law at the new level.
pub struct ControlFeedback<'a> {
    pub km: &'a KernelModel,
    pub ws: std::cell::RefCell<TransformWorkspace>,
}

impl<'a> ControlFeedback<'a> {
    pub fn new(km: &'a KernelModel, n: usize, l: f64) -> Result<Self> {
        Ok(Self {
            km,
            ws: std::cell::RefCell::new(TransformWorkspace::new(km, n, l)?),
        })
    }
}

impl SomaFeedback for ControlFeedback<'_> {
    fn affine(&self, l: f64, weights: &mut [f64]) -> Result<f64> {
        let mut ws = self.ws.borrow_mut();
        ws.update(self.km, l)?;
        let dc = &self.km.dc;
        let p = &dc.params;
        let n = ws.intervals();
        let mut offset = dc.c_eq(0.0);
        for j in 0..=n {
            let wj = ws.weight(0, j) * ws.kd[j];
            weights[j] = wj;
            offset -= wj * dc.c_eq(l * j as f64 / n as f64);
        }
        let phi = ws.phi_shift[0];
        weights[n] += phi[0];
        offset += -phi[0] * p.c_inf + phi[1] * (l - p.l_s);
        Ok(offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_constants, BioParams};

    fn setup() -> KernelModel {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        build_kernel_model(&dc, &GainConfig::default(), 24e-6).unwrap()
    }

    #[test]
    fn reference_gains_are_admissible_and_hurwitz() {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        let gc = GainConfig::default();
        assert!(gc.is_admissible(&dc));
        assert!(gc.satisfies_a3_condition(&dc));
        let re = gc.closed_loop_real_parts(&dc);
        assert!(re[0] < 0.0 && re[1] < 0.0, "{re:?}");
    }

    #[test]
    fn rejects_inadmissible_gains() {
        let dc = derive_constants(&BioParams::table1()).unwrap();
        let bad = GainConfig { k1: -1e6, k2: 4e13 };
        assert!(matches!(
            build_kernel_model(&dc, &bad, 24e-6),
            Err(Error::GainConditionViolated(_))
        ));
    }

    #[test]
    fn initial_row_is_exact() {
        let km = setup();
        let (phi, dphi) = phi_eval(&km, 0.0).unwrap();
        assert_eq!(phi, km.dc.h);
        let hb = km.dc.h.dot(&km.dc.b);
        let want = km.gains.vector() - km.dc.h * (hb / km.dc.params.d);
        assert_eq!(dphi, want);
    }

    #[test]
    fn diagonal_kernel_is_inverse_cone_length() {
        let km = setup();
        let want = 1.0 / km.dc.params.l_c;
        for x in [0.0, 3e-6, 11e-6] {
            let k = kernel_k(&km, x, x).unwrap();
            assert!((k - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn kernel_is_shift_invariant() {
        let km = setup();
        // Dyadic positions, so the shifted difference is exact in floating point.
        let (d, shift) = (2f64.powi(-19), 2f64.powi(-18));
        assert_eq!(kernel_k(&km, 0.0, d).unwrap(), kernel_k(&km, shift, shift + d).unwrap());
        let a = kernel_k(&km, 0.0, 2e-6).unwrap();
        let b = kernel_k(&km, 3e-6, 5e-6).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs());
        assert!(matches!(kernel_k(&km, 2e-6, 1e-6), Err(Error::RegionViolation { .. })));
    }

    #[test]
    fn phi_eval_range_and_nodes() {
        let km = setup();
        assert!(phi_eval(&km, 1e-9).is_err());
        assert!(phi_eval(&km, -km.l_bar * 1.001).is_err());
        let (s, phi, dphi) = km.table_node(17);
        let (a, b) = phi_eval(&km, s).unwrap();
        assert_eq!(a, phi);
        assert_eq!(b, dphi);
    }

    #[test]
    fn workspace_matches_pointwise_kernel() {
        let km = setup();
        let l = 9e-6;
        let ws = TransformWorkspace::new(&km, 64, l).unwrap();
        let h = l / 64.0;
        for (i, j) in [(0, 0), (0, 64), (5, 40), (63, 64)] {
            let k = kernel_k(&km, i as f64 * h, j as f64 * h).unwrap();
            assert!((ws.k_at(i, j) - k).abs() <= 1e-12 * k.abs().max(1.0));
        }
    }

    #[test]
    fn zero_error_gives_zero_control() {
        let km = setup();
        let e = ErrorState {
            u: vec![0.0; 65],
            x: Vec2::zeros(),
        };
        assert_eq!(continuous_control(&km, &e, 5e-6).unwrap(), 0.0);
        assert!(forward_transform(&km, &e, 5e-6).unwrap().iter().all(|v| *v == 0.0));
        assert!(inverse_transform(&km, &e.u, &e.x, 5e-6).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pure_ode_feedback() {
        let km = setup();
        let x = Vec2::new(0.003, -4e-6);
        let e = ErrorState { u: vec![0.0; 65], x };
        let l = 8e-6;
        let (phi, _) = phi_eval(&km, -l).unwrap();
        assert_eq!(continuous_control(&km, &e, l).unwrap(), phi.dot(&x));
        assert_eq!(sampled_control(&km, &e, l).unwrap(), phi.dot(&x));
    }

    #[test]
    fn control_rejects_long_domain() {
        let km = setup();
        let e = ErrorState {
            u: vec![0.0; 33],
            x: Vec2::zeros(),
        };
        assert!(continuous_control(&km, &e, 25e-6).is_err());
    }

    #[test]
    fn tip_value_of_transform_is_output_remainder() {
        let km = setup();
        let p = km.dc.params;
        let x = Vec2::new(0.002, 1e-7);
        let nl = crate::model::nonlinear_terms(&x, &km.dc, &p).unwrap();
        let l = p.l_s + x[1];
        let mut u: Vec<f64> = (0..=64).map(|i| 1e-3 * (i as f64 * 0.1).sin()).collect();
        u[64] = nl.h;
        let w = forward_transform(&km, &ErrorState { u, x }, l).unwrap();
        assert!((w[64] - nl.h_star).abs() <= 1e-12 * nl.h.abs());
    }

    #[test]
    fn f_eval_properties() {
        let km = setup();
        let l = 10e-6;
        let x = Vec2::new(1e-3, 2e-7);
        assert_eq!(f_eval(&km, 3e-6, l, &Vec2::zeros()).unwrap(), 0.0);
        let f1 = f_eval(&km, 3e-6, l, &x).unwrap();
        let f2 = f_eval(&km, 3e-6, l, &(x * 2.0)).unwrap();
        assert!((f2 - 2.0 * f1).abs() <= 1e-14 * f1.abs());
        let (_, dphi0) = phi_eval(&km, 0.0).unwrap();
        let want = (dphi0 - km.dc.h / km.dc.params.l_c).dot(&x);
        let got = f_eval(&km, l, l, &x).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }
}
