//! Plant parameters, steady state, reference-error coordinates and the
//! nonlinear remainders of the cone/length ODE pair.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

/// Largest admissible |lambda * z2| before the local model is rejected.
pub const EXPONENT_GUARD: f64 = 50.0;

/// Biological constants, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BioParams {
    /// Tubulin diffusivity (m^2/s).
    pub d: f64,
    /// Advection velocity toward the cone (m/s).
    pub a: f64,
    /// Degradation rate (1/s).
    pub g: f64,
    /// Growth-rate constant (m^4/(mol s)).
    pub r_g: f64,
    /// Lumped assembly rate (1/s).
    pub rt_g: f64,
    /// Growth-cone length (m).
    pub l_c: f64,
    /// Equilibrium cone concentration (mol/m^3).
    pub c_inf: f64,
    /// Target axon length (m).
    pub l_s: f64,
}

impl Default for BioParams {
    fn default() -> Self {
        Self::table1()
    }
}

impl BioParams {
    /// Reference parameter set used by the published numerical study.
    pub fn table1() -> Self {
        Self {
            d: 1e-11,
            a: 1e-8,
            g: 5e-7,
            r_g: 1.783e-5,
            rt_g: 0.053,
            l_c: 4e-6,
            c_inf: 0.0119,
            l_s: 12e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, f64, bool); 8] = [
            ("D", self.d, self.d > 0.0),
            ("a", self.a, self.a >= 0.0),
            ("g", self.g, self.g >= 0.0),
            ("r_g", self.r_g, self.r_g > 0.0),
            ("rt_g", self.rt_g, self.rt_g.is_finite()),
            ("l_c", self.l_c, self.l_c > 0.0),
            ("c_inf", self.c_inf, self.c_inf > 0.0),
            ("l_s", self.l_s, self.l_s > 0.0),
        ];
        for (name, v, ok) in checks {
            if !ok || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v:e}")));
            }
        }
        Ok(())
    }
}

/// Which matrix is used as the linear part of the ODE pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linearization {
    /// Jacobian of the ODE pair at the equilibrium: entry (1,2) = -beta * a2_tilde.
    #[default]
    Jacobian,
    /// Entry (1,2) = a3_tilde as printed in the source model.
    Literal,
}

impl Linearization {
    pub fn name(self) -> &'static str {
        match self {
            Linearization::Jacobian => "jacobian",
            Linearization::Literal => "literal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jacobian" => Some(Linearization::Jacobian),
            "literal" => Some(Linearization::Literal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub params: BioParams,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub k_plus: f64,
    pub k_minus: f64,
    pub q_s_star: f64,
    pub a1_tilde: f64,
    pub a2_tilde: f64,
    pub a3_tilde: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Matrix of the nonlinear ODE form.
    pub a_mat: Mat2,
    /// Linear part used for the gain design.
    pub a1_mat: Mat2,
    pub b: Vec2,
    pub h: Vec2,
    pub linearization: Linearization,
}

pub fn derive_constants(p: &BioParams) -> Result<DerivedConstants> {
    derive_constants_with(p, Linearization::default())
}

pub fn derive_constants_with(p: &BioParams, lin: Linearization) -> Result<DerivedConstants> {
    p.validate()?;
    let BioParams {
        d,
        a,
        g,
        r_g,
        rt_g,
        l_c,
        c_inf,
        l_s,
    } = *p;

    let disc = (a * a + 4.0 * d * g).sqrt();
    let lambda_plus = (a + disc) / (2.0 * d);
    // Written as a product to avoid cancellation when g*D << a^2.
    let lambda_minus = -2.0 * g / (a + disc);
    let k_plus = 0.5 + (a - 2.0 * g * l_c) / (2.0 * disc);
    let k_minus = 0.5 - (a - 2.0 * g * l_c) / (2.0 * disc);

    let q_s_star = -c_inf * (k_plus * (-lambda_plus * l_s).exp() + k_minus * (-lambda_minus * l_s).exp());
    let beta = d / l_c;
    let kappa = r_g / l_c;
    let a1_tilde = (a - r_g * c_inf) / l_c - g - rt_g;
    let a2_tilde = c_inf * (k_plus * lambda_plus * lambda_plus + k_minus * lambda_minus * lambda_minus);
    let a3_tilde = (a * a + d * g - a * g * l_c) / (d * d);

    let a_mat = Mat2::new(a1_tilde, -beta * a2_tilde, r_g, 0.0);
    let a1_mat = match lin {
        Linearization::Jacobian => a_mat,
        Linearization::Literal => Mat2::new(a1_tilde, a3_tilde, r_g, 0.0),
    };
    let b = Vec2::new(-beta, 0.0);
    let h = Vec2::new(1.0, -(a - g * l_c) * c_inf / d);

    Ok(DerivedConstants {
        params: *p,
        lambda_plus,
        lambda_minus,
        k_plus,
        k_minus,
        q_s_star,
        a1_tilde,
        a2_tilde,
        a3_tilde,
        beta,
        kappa,
        a_mat,
        a1_mat,
        b,
        h,
        linearization: lin,
    })
}

/// Steady profile value and whether `x` lies outside [0, l_s].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub value: f64,
    pub extrapolated: bool,
}

pub fn steady_state_profile(dc: &DerivedConstants, p: &BioParams, x: f64) -> ProfileValue {
    let z = x - p.l_s;
    let value = p.c_inf * (dc.k_plus * (dc.lambda_plus * z).exp() + dc.k_minus * (dc.lambda_minus * z).exp());
    ProfileValue {
        value,
        extrapolated: !(0.0..=p.l_s).contains(&x),
    }
}

impl DerivedConstants {
    /// Equilibrium concentration at position `x` (m).
    #[inline]
    pub fn c_eq(&self, x: f64) -> f64 {
        let z = x - self.params.l_s;
        self.params.c_inf
            * (self.k_plus * (self.lambda_plus * z).exp() + self.k_minus * (self.lambda_minus * z).exp())
    }

    /// First and second spatial derivatives of the equilibrium profile.
    pub fn c_eq_derivs(&self, x: f64) -> (f64, f64) {
        let z = x - self.params.l_s;
        let ep = self.k_plus * (self.lambda_plus * z).exp();
        let em = self.k_minus * (self.lambda_minus * z).exp();
        let c = self.params.c_inf;
        (
            c * (self.lambda_plus * ep + self.lambda_minus * em),
            c * (self.lambda_plus * self.lambda_plus * ep + self.lambda_minus * self.lambda_minus * em),
        )
    }

    /// Soma concentration at equilibrium, c_eq(0) = -q_s*.
    pub fn c_soma_eq(&self) -> f64 {
        -self.q_s_star
    }

    /// Steady-state nonlinearity bound max{c_inf K+ lambda+^2, c_inf K- lambda-^2}.
    pub fn k_n(&self) -> f64 {
        let c = self.params.c_inf;
        (c * self.k_plus * self.lambda_plus.powi(2)).max((c * self.k_minus * self.lambda_minus.powi(2)).abs())
    }

    /// Largest |z2| accepted by the exponent guard.
    pub fn z2_limit(&self) -> f64 {
        EXPONENT_GUARD / self.lambda_plus.max(self.lambda_minus.abs())
    }
}

/// Concentration profile on a grid uniform in xi = x / l.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    /// Samples c(xi_i l), i = 0..=N; the last entry is the cone concentration.
    pub c: Vec<f64>,
    pub l: f64,
}

impl PlantState {
    pub fn uniform(n: usize, l: f64, c0: f64) -> Self {
        Self {
            t: 0.0,
            c: vec![c0; n + 1],
            l,
        }
    }

    /// The analytic equilibrium sampled on `n` intervals.
    pub fn steady(dc: &DerivedConstants, n: usize) -> Self {
        let l = dc.params.l_s;
        let mut c: Vec<f64> = (0..=n).map(|i| dc.c_eq(l * i as f64 / n as f64)).collect();
        c[n] = dc.params.c_inf;
        Self { t: 0.0, c, l }
    }

    pub fn intervals(&self) -> usize {
        self.c.len() - 1
    }

    pub fn cone(&self) -> f64 {
        *self.c.last().expect("non-empty profile")
    }

    pub fn xi(&self, i: usize) -> f64 {
        i as f64 / self.intervals() as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.l * self.xi(i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub u: Vec<f64>,
    /// [c_c - c_inf, l - l_s].
    pub x: Vec2,
}

pub fn to_error_state(s: &PlantState, dc: &DerivedConstants, p: &BioParams) -> ErrorState {
    let n = s.intervals();
    let mut u: Vec<f64> = (0..=n).map(|i| s.c[i] - dc.c_eq(s.x(i))).collect();
    // c_eq(l_s) = c_inf holds analytically; use it exactly at the tip.
    if s.l == p.l_s {
        u[n] = s.c[n] - p.c_inf;
    }
    ErrorState {
        u,
        x: Vec2::new(s.cone() - p.c_inf, s.l - p.l_s),
    }
}

pub fn from_error_state(e: &ErrorState, dc: &DerivedConstants, p: &BioParams, l: f64) -> Result<PlantState> {
    if e.u.len() < 2 {
        return Err(Error::GridTooSmall(e.u.len()));
    }
    if !(l > 0.0) {
        return Err(Error::DomainCollapse(l));
    }
    let n = e.u.len() - 1;
    let mut c: Vec<f64> = (0..=n)
        .map(|i| e.u[i] + dc.c_eq(l * i as f64 / n as f64))
        .collect();
    c[n] = e.x[0] + p.c_inf;
    Ok(PlantState { t: 0.0, c, l })
}

/// The nonlinear remainders evaluated at one error state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearTerms {
    pub f1: f64,
    pub h_tilde: f64,
    pub f: f64,
    pub h: f64,
    pub h_star: f64,
}

/// e^x - 1 - x without cancellation near 0.
fn exp_rem2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // x^2/2! + x^3/3! + ... + x^14/14!
        let mut s = 0.0;
        let mut term = x * x / 2.0;
        for k in 3..=15 {
            s += term;
            term *= x / k as f64;
        }
        s
    } else {
        x.exp_m1() - x
    }
}

pub fn nonlinear_terms(x: &Vec2, dc: &DerivedConstants, p: &BioParams) -> Result<NonlinearTerms> {
    if !x[0].is_finite() || !x[1].is_finite() {
        return Err(Error::NonFinite("error state X".into()));
    }
    let z1 = x[0];
    let z2 = x[1];
    let ep = dc.lambda_plus * z2;
    let em = dc.lambda_minus * z2;
    let worst = ep.abs().max(em.abs());
    if worst > EXPONENT_GUARD {
        return Err(Error::ExponentGuard(worst));
    }
    let c = p.c_inf;
    // With sum K = 1, sum K lambda = (a - g l_c)/D and a2 = c sum K lambda^2,
    // the closed forms reduce to these cancellation-free expressions.
    let f1 = -c * (dc.k_plus * dc.lambda_plus * exp_rem2(ep) + dc.k_minus * dc.lambda_minus * exp_rem2(em));
    let h_tilde = -c * (dc.k_plus * ep.exp_m1() + dc.k_minus * em.exp_m1());
    let h_star = -c * (dc.k_plus * exp_rem2(ep) + dc.k_minus * exp_rem2(em));
    let f = -dc.kappa * z1 * z1 + dc.beta * f1;
    let h = z1 + h_tilde;
    Ok(NonlinearTerms {
        f1,
        h_tilde,
        f,
        h,
        h_star,
    })
}

/// Right-hand side of the ODE pair in error coordinates with u_x(l) supplied.
pub fn error_ode_rhs(x: &Vec2, u_x_tip: f64, dc: &DerivedConstants, p: &BioParams) -> Result<Vec2> {
    let nl = nonlinear_terms(x, dc, p)?;
    let mut r = dc.a_mat * x + dc.b * u_x_tip;
    r[0] += nl.f;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> (BioParams, DerivedConstants) {
        let p = BioParams::table1();
        (p, derive_constants(&p).unwrap())
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn constants_match_hand_values() {
        let (_, dc) = table();
        // Oracle: roots of D s^2 - a s - g with D=1e-11, a=1e-8, g=5e-7,
        // i.e. (1e-8 +- sqrt(1e-16 + 2e-17)) / 2e-11.
        let disc = (1.2e-16f64).sqrt();
        assert!(rel(dc.lambda_plus, (1e-8 + disc) / 2e-11) < 1e-13);
        assert!(rel(dc.lambda_minus, (1e-8 - disc) / 2e-11) < 1e-9);
        // 40-digit reference evaluation of the same closed forms.
        assert!(rel(dc.lambda_plus, 1047.7225575051661135) < 1e-14);
        assert!(rel(dc.lambda_minus, -47.722557505166113457) < 1e-13);
        assert!(rel(dc.k_plus, 0.95625289040180337251) < 1e-14);
        assert!(rel(dc.k_minus, 0.043747109598196627490) < 1e-13);
        assert!(rel(dc.q_s_star, -0.011758124271257265971) < 1e-13);
        assert!(rel(dc.a1_tilde, -0.10354475) < 1e-13);
        assert_eq!(dc.k_plus + dc.k_minus, 1.0);
        assert!(rel(dc.beta, 2.5e-6) < 1e-15);
        assert!(rel(dc.kappa, 4.4575) < 1e-15);
    }

    #[test]
    fn root_identities() {
        let (p, dc) = table();
        assert!(rel(dc.lambda_plus * dc.lambda_minus, -p.g / p.d) < 1e-12);
        assert!(rel(dc.lambda_plus + dc.lambda_minus, p.a / p.d) < 1e-12);
        let sum_kl = dc.k_plus * dc.lambda_plus + dc.k_minus * dc.lambda_minus;
        assert!(rel(sum_kl, (p.a - p.g * p.l_c) / p.d) < 1e-12);
        assert!(rel(dc.a2_tilde, p.c_inf * dc.a3_tilde) < 1e-12);
    }

    #[test]
    fn matrix_structure() {
        let (p, dc) = table();
        assert_eq!(dc.b, Vec2::new(-dc.beta, 0.0));
        assert_eq!(dc.a_mat[(1, 0)], p.r_g);
        assert_eq!(dc.a_mat[(1, 1)], 0.0);
        assert_eq!(dc.a1_mat[(1, 0)], p.r_g);
        assert_eq!(dc.a1_mat[(1, 1)], 0.0);
        assert_eq!(dc.h.dot(&dc.b), -dc.beta);
        let lit = derive_constants_with(&p, Linearization::Literal).unwrap();
        assert_eq!(lit.a1_mat[(0, 1)], lit.a3_tilde);
        assert_eq!(lit.a_mat, dc.a_mat);
    }

    #[test]
    fn rejects_bad_physics() {
        for f in [
            |p: &mut BioParams| p.d = 0.0,
            |p: &mut BioParams| p.l_c = -1.0,
            |p: &mut BioParams| p.c_inf = 0.0,
            |p: &mut BioParams| p.a = -1e-9,
        ] {
            let mut p = BioParams::table1();
            f(&mut p);
            assert!(matches!(derive_constants(&p), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn steady_profile_boundaries() {
        let (p, dc) = table();
        let tip = steady_state_profile(&dc, &p, p.l_s);
        assert!(rel(tip.value, p.c_inf) < 1e-15);
        assert!(!tip.extrapolated);
        let soma = steady_state_profile(&dc, &p, 0.0);
        assert!(rel(soma.value, -dc.q_s_star) < 1e-15);
        assert!(steady_state_profile(&dc, &p, 1.1 * p.l_s).extrapolated);
    }

    #[test]
    fn steady_profile_solves_stationary_pde() {
        let (p, dc) = table();
        for i in 0..=50 {
            let x = p.l_s * i as f64 / 50.0;
            let c = dc.c_eq(x);
            let (c1, c2) = dc.c_eq_derivs(x);
            let terms = [p.d * c2, p.a * c1, p.g * c];
            let scale = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
            let res = p.d * c2 - p.a * c1 - p.g * c;
            assert!(res.abs() / scale < 1e-12, "x={x:e} res={res:e}");
        }
    }

    #[test]
    fn cone_condition_at_steady_state() {
        // (a - g l_c) c_inf - D c_eq'(l_s) = 0 at equilibrium.
        let (p, dc) = table();
        let (c1, _) = dc.c_eq_derivs(p.l_s);
        let r = (p.a - p.g * p.l_c) * p.c_inf - p.d * c1;
        assert!(r.abs() < 1e-12 * p.a * p.c_inf);
    }

    #[test]
    fn equilibrium_maps_to_origin_and_back() {
        let (p, dc) = table();
        let s = PlantState::steady(&dc, 64);
        let e = to_error_state(&s, &dc, &p);
        assert!(e.u.iter().all(|v| v.abs() < 1e-17));
        assert_eq!(e.x, Vec2::zeros());
        let back = from_error_state(&e, &dc, &p, p.l_s).unwrap();
        for (a, b) in back.c.iter().zip(&s.c) {
            assert!((a - b).abs() <= 1e-16 * b.abs().max(1e-3));
        }
    }

    #[test]
    fn remainders_vanish_at_origin() {
        let (p, dc) = table();
        let nl = nonlinear_terms(&Vec2::zeros(), &dc, &p).unwrap();
        assert_eq!(nl.f1, 0.0);
        assert_eq!(nl.h_tilde, 0.0);
        assert_eq!(nl.f, 0.0);
        assert_eq!(nl.h, 0.0);
        assert_eq!(nl.h_star, 0.0);
    }

    /// Direct closed forms, used as an oracle for the rearranged evaluation.
    fn literal_terms(x: &Vec2, dc: &DerivedConstants, p: &BioParams) -> (f64, f64) {
        let z2 = x[1];
        let (ep, em) = ((dc.lambda_plus * z2).exp(), (dc.lambda_minus * z2).exp());
        let f1 = -p.c_inf * (dc.k_plus * dc.lambda_plus * ep + dc.k_minus * dc.lambda_minus * em)
            + dc.a2_tilde * z2
            + p.c_inf * (p.a - p.g * p.l_c) / p.d;
        let h_tilde = p.c_inf * (1.0 - dc.k_plus * ep - dc.k_minus * em);
        (f1, h_tilde)
    }

    #[test]
    fn remainders_match_literal_forms() {
        let (p, dc) = table();
        for z2 in [-2e-5, -3e-6, 1e-6, 8e-6, 3e-5] {
            let x = Vec2::new(0.01, z2);
            let nl = nonlinear_terms(&x, &dc, &p).unwrap();
            let (f1, ht) = literal_terms(&x, &dc, &p);
            assert!((nl.f1 - f1).abs() <= 1e-10 * f1.abs().max(1.0), "z2={z2:e}");
            assert!((nl.h_tilde - ht).abs() <= 1e-12 * ht.abs().max(1e-3));
            assert!((nl.h - (x[0] + nl.h_tilde)).abs() < 1e-18);
            let hstar = nl.h - dc.h.dot(&x);
            assert!((nl.h_star - hstar).abs() <= 1e-12 * nl.h.abs().max(1e-3));
        }
    }

    #[test]
    fn remainders_have_zero_jacobian() {
        let (p, dc) = table();
        let scale = Vec2::new(p.c_inf, p.l_s);
        for k in 0..2 {
            let mut dx = Vec2::zeros();
            dx[k] = 1e-8 * scale[k];
            let hp = nonlinear_terms(&dx, &dc, &p).unwrap();
            let hm = nonlinear_terms(&-dx, &dc, &p).unwrap();
            let dh = (hp.h_star - hm.h_star) / (2.0 * dx[k]);
            let df = (hp.f - hm.f) / (2.0 * dx[k]);
            // Reference slopes of the linear parts in the same direction.
            let lin_h = dc.h[k].abs();
            let lin_f = dc.a1_mat.column(k).abs().max();
            assert!(dh.abs() < 1e-7 * lin_h, "dh/dx{k} = {dh:e}");
            assert!(df.abs() < 1e-7 * lin_f, "df/dx{k} = {df:e}");
        }
    }

    #[test]
    fn quadratic_bound_on_output_remainder() {
        let (p, dc) = table();
        let kn = dc.k_n();
        for z2 in [-1e-7, -1e-8, 1e-9, 1e-8, 1e-7] {
            let x = Vec2::new(0.0, z2);
            let nl = nonlinear_terms(&x, &dc, &p).unwrap();
            assert!(nl.h_star.abs() <= 2.0 * kn * x.dot(&x), "z2={z2:e}");
        }
    }

    #[test]
    fn exponent_guard() {
        let (p, dc) = table();
        let far = Vec2::new(0.0, 1.1 * dc.z2_limit());
        assert!(matches!(nonlinear_terms(&far, &dc, &p), Err(Error::ExponentGuard(_))));
        let near = Vec2::new(0.0, -0.99 * dc.z2_limit());
        assert!(nonlinear_terms(&near, &dc, &p).is_ok());
        let nan = Vec2::new(f64::NAN, 0.0);
        assert!(matches!(nonlinear_terms(&nan, &dc, &p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn exp_rem2_matches_extended_precision() {
        // Reference values from a 40-digit evaluation of e^x - 1 - x.
        let cases = [
            (-3.0, 2.049787068367863943),
            (-0.0999, 4.8279063021010693079e-3),
            (-0.05, 1.2294245007140090914e-3),
            (-1e-4, 4.9998333374999166681e-9),
            (1e-9, 5.0000000016666666671e-19),
            (0.01, 5.0167084168057542165e-5),
            (0.0999, 5.1604065095104598792e-3),
            (0.5, 0.14872127070012814685),
        ];
        for (x, want) in cases {
            assert!(rel(exp_rem2(x), want) < 1e-14, "x={x}");
        }
        assert_eq!(exp_rem2(0.0), 0.0);
    }
}
