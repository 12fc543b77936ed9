//! Comparison functions for one-dimensional MCP(K, N) spaces.
//!
//! Everything here is a closed-form scalar: the generalized sine `s_κ`, the
//! distortion coefficient `σ`, the Bonnet–Myers bound, `cot_{K,N,D}` and the
//! model densities built from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ptrig::{PExponent, DEFAULT_TABLE_TOL};

/// Relative slack accepted when a diameter is compared against `D_{K,N}`.
const DIAMETER_SLACK: f64 = 1e-12;

/// Curvature bound `K`, dimension bound `N > 1` and diameter `D > 0` of a
/// one-dimensional model space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McpSpace {
    curvature: f64,
    dimension: f64,
    diameter: f64,
}

impl McpSpace {
    /// Validates the triple. For `K > 0` the diameter must not exceed
    /// `D_{K,N}`; values within rounding of the bound are snapped onto it.
    pub fn new(curvature: f64, dimension: f64, diameter: f64) -> Result<Self> {
        if !curvature.is_finite() {
            return Err(Error::InvalidParameter(format!("curvature K = {curvature} is not finite")));
        }
        if !(dimension.is_finite() && dimension > 1.0) {
            return Err(Error::InvalidParameter(format!("dimension N = {dimension} must satisfy N > 1")));
        }
        if !(diameter.is_finite() && diameter > 0.0) {
            return Err(Error::InvalidParameter(format!("diameter D = {diameter} must be positive and finite")));
        }
        let bound = diameter_bound(curvature, dimension);
        let diameter = if diameter > bound {
            if diameter <= bound * (1.0 + DIAMETER_SLACK) {
                bound
            } else {
                return Err(Error::InvalidParameter(format!(
                    "diameter D = {diameter} exceeds the Bonnet–Myers bound {bound} for K = {curvature}, N = {dimension}"
                )));
            }
        } else {
            diameter
        };
        Ok(Self { curvature, dimension, diameter })
    }

    /// The space with `D = D_{K,N}`; only meaningful for `K > 0`.
    pub fn maximal(curvature: f64, dimension: f64) -> Result<Self> {
        Self::new(curvature, dimension, diameter_bound(curvature, dimension))
    }

    #[inline]
    pub fn curvature(&self) -> f64 {
        self.curvature
    }

    #[inline]
    pub fn dimension(&self) -> f64 {
        self.dimension
    }

    #[inline]
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// `κ = K/(N-1)`, the curvature fed to `s_κ`.
    #[inline]
    pub fn kappa(&self) -> f64 {
        self.curvature / (self.dimension - 1.0)
    }

    pub fn diameter_bound(&self) -> f64 {
        diameter_bound(self.curvature, self.dimension)
    }

    /// True when `K > 0` and `D = D_{K,N}`: `cot_{K,N,D}` blows up at both ends.
    pub fn is_maximal(&self) -> bool {
        self.curvature > 0.0 && self.diameter == self.diameter_bound()
    }

    /// Same `K`, `N` with another diameter.
    pub fn with_diameter(&self, diameter: f64) -> Result<Self> {
        Self::new(self.curvature, self.dimension, diameter)
    }

    /// The space obtained by stretching `[0, D]` onto `[0, D_new]`:
    /// the curvature becomes `K (D/D_new)^2`.
    pub fn rescaled(&self, new_diameter: f64) -> Result<Self> {
        if !(new_diameter.is_finite() && new_diameter > 0.0) {
            return Err(Error::InvalidParameter(format!("rescaled diameter {new_diameter} must be positive")));
        }
        let ratio = self.diameter / new_diameter;
        let space = Self::new(self.curvature * ratio * ratio, self.dimension, new_diameter)?;
        // Keep maximality exact under rescaling.
        if self.is_maximal() {
            return Self::maximal(space.curvature, space.dimension);
        }
        Ok(space)
    }
}

/// Numerical tolerances shared by the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative width of the final eigenvalue bracket.
    pub eigen_rel: f64,
    pub ode_rtol: f64,
    pub ode_atol: f64,
    /// Integration never evaluates `T` closer than `endpoint_guard·D` to a singular end.
    pub endpoint_guard: f64,
    /// Offset (relative to `D`) of the shooting seed from the left end.
    pub seed_offset: f64,
    /// Interpolation tolerance of the p-trig table.
    pub trig_table: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eigen_rel: 1e-8,
            ode_rtol: 1e-10,
            ode_atol: 1e-12,
            endpoint_guard: 1e-12,
            seed_offset: 1e-10,
            trig_table: DEFAULT_TABLE_TOL,
        }
    }
}

/// Exponent, model space and tolerances of one eigenvalue problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub p: PExponent,
    pub space: McpSpace,
    pub tol: Tolerances,
}

impl Params {
    pub fn new(p: f64, curvature: f64, dimension: f64, diameter: f64) -> Result<Self> {
        Ok(Self {
            p: PExponent::new(p)?,
            space: McpSpace::new(curvature, dimension, diameter)?,
            tol: Tolerances::default(),
        })
    }

    pub fn with_space(&self, space: McpSpace) -> Self {
        Self { space, ..*self }
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }
}

/// `s_κ(θ)`: `sin(√κ θ)/√κ`, `θ` or `sinh(√-κ θ)/√-κ`.
pub fn s_kappa(theta: f64, kappa: f64) -> Result<f64> {
    check_s_domain(theta, kappa)?;
    Ok(if kappa > 0.0 {
        let r = kappa.sqrt();
        ((r * theta).sin() / r).max(0.0)
    } else if kappa == 0.0 {
        theta
    } else {
        let r = (-kappa).sqrt();
        (r * theta).sinh() / r
    })
}

/// `ln s_κ(θ)`, finite for large `θ` when `κ < 0`; `-∞` at `θ = 0`.
pub fn ln_s_kappa(theta: f64, kappa: f64) -> Result<f64> {
    check_s_domain(theta, kappa)?;
    if theta == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(if kappa > 0.0 {
        let r = kappa.sqrt();
        // sin may round below zero at θ = π/√κ
        let s = (r * theta).sin();
        if s > 0.0 {
            (s / r).ln()
        } else {
            f64::NEG_INFINITY
        }
    } else if kappa == 0.0 {
        theta.ln()
    } else {
        let r = (-kappa).sqrt();
        let y = r * theta;
        // ln sinh y = y - ln 2 + ln(1 - e^{-2y})
        if y > 1.0 {
            y - std::f64::consts::LN_2 + (-(-2.0 * y).exp()).ln_1p() - r.ln()
        } else {
            (y.sinh() / r).ln()
        }
    })
}

fn check_s_domain(theta: f64, kappa: f64) -> Result<()> {
    if !(theta >= 0.0) || !kappa.is_finite() {
        return Err(Error::Domain { what: "s_kappa", value: theta });
    }
    if kappa > 0.0 && theta > PI / kappa.sqrt() {
        return Err(Error::Domain { what: "s_kappa", value: theta });
    }
    Ok(())
}

/// Distortion coefficient `σ^{(t)}_{K,N}(θ)`. The degenerate branch
/// `Kθ² ≥ (N-1)π²` is returned as `+∞`.
pub fn sigma_coeff(t: f64, theta: f64, curvature: f64, dimension: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain { what: "sigma_coeff (t)", value: t });
    }
    if !(theta >= 0.0) {
        return Err(Error::Domain { what: "sigma_coeff (theta)", value: theta });
    }
    if !(dimension > 1.0) {
        return Err(Error::InvalidParameter(format!("dimension N = {dimension} must satisfy N > 1")));
    }
    let k_theta2 = curvature * theta * theta;
    let n1 = dimension - 1.0;
    Ok(if k_theta2 >= n1 * PI * PI {
        f64::INFINITY
    } else if k_theta2 > 0.0 {
        let c = theta * (curvature / n1).sqrt();
        (t * c).sin() / c.sin()
    } else if k_theta2 == 0.0 {
        t
    } else {
        let c = theta * (-curvature / n1).sqrt();
        (t * c).sinh() / c.sinh()
    })
}

/// Bonnet–Myers bound `D_{K,N}`: `π/√(K/(N-1))` for `K > 0`, else `+∞`.
pub fn diameter_bound(curvature: f64, dimension: f64) -> f64 {
    if curvature > 0.0 {
        PI / (curvature / (dimension - 1.0)).sqrt()
    } else {
        f64::INFINITY
    }
}

/// `cot_{K,N,D}(x) = (ln s_κ^{N-1})'(x)` with `κ = K/(N-1)`.
///
/// Returns `+∞` at `x = 0` and `-∞` at `x = D_{K,N}` when `K > 0`.
pub fn cot_knd(x: f64, curvature: f64, dimension: f64) -> Result<f64> {
    let n1 = dimension - 1.0;
    if !(x >= 0.0) || !(n1 > 0.0) {
        return Err(Error::Domain { what: "cot_knd", value: x });
    }
    if x == 0.0 {
        return Ok(f64::INFINITY);
    }
    if curvature > 0.0 {
        let bound = diameter_bound(curvature, dimension);
        if x > bound {
            return Err(Error::Domain { what: "cot_knd", value: x });
        }
        if x == bound {
            return Ok(f64::NEG_INFINITY);
        }
        let r = (curvature / n1).sqrt();
        Ok((curvature * n1).sqrt() / (r * x).tan())
    } else if curvature == 0.0 {
        Ok(n1 / x)
    } else {
        let r = (-curvature / n1).sqrt();
        Ok((-curvature * n1).sqrt() / (r * x).tanh())
    }
}

/// `h¹(x) = s_κ(x)^{N-1}`.
pub fn model_h1(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    Ok(s_kappa(x, space.kappa())?.powf(space.dimension - 1.0))
}

/// `h²(x) = s_κ(D - x)^{N-1} = h¹(D - x)`.
pub fn model_h2(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    model_h1(space.diameter - x, space)
}

/// The model density: `h²` on `[0, D/2]`, `h¹` on `[D/2, D]`.
pub fn model_h(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    if x < 0.5 * space.diameter {
        model_h2(x, space)
    } else {
        model_h1(x, space)
    }
}

/// `ln h¹`, `ln h²` and `ln h` without over- or underflow.
pub fn model_log_h1(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    Ok((space.dimension - 1.0) * ln_s_kappa(x, space.kappa())?)
}

pub fn model_log_h2(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    model_log_h1(space.diameter - x, space)
}

pub fn model_log_h(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    if x < 0.5 * space.diameter {
        model_log_h2(x, space)
    } else {
        model_log_h1(x, space)
    }
}

/// `T = (ln h)'` of the model density: `-cot(D - x)` on `[0, D/2)`,
/// `cot(x)` on `[D/2, D]`. At the jump `x = D/2` the right branch is used.
pub fn model_t(x: f64, space: &McpSpace) -> Result<f64> {
    check_x(x, space)?;
    let (k, n) = (space.curvature, space.dimension);
    if x < 0.5 * space.diameter {
        Ok(-cot_knd(space.diameter - x, k, n)?)
    } else {
        cot_knd(x, k, n)
    }
}

/// Size of the jump of `T` at `D/2` (right limit minus left limit).
pub fn model_t_jump(space: &McpSpace) -> Result<f64> {
    Ok(2.0 * cot_knd(0.5 * space.diameter, space.curvature, space.dimension)?)
}

fn check_x(x: f64, space: &McpSpace) -> Result<()> {
    if x >= 0.0 && x <= space.diameter {
        Ok(())
    } else {
        Err(Error::Domain { what: "model density", value: x })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(k: f64, n: f64, d: f64) -> McpSpace {
        McpSpace::new(k, n, d).unwrap()
    }

    #[test]
    fn s_kappa_examples() {
        assert_eq!(s_kappa(0.7, 0.0).unwrap(), 0.7);
        assert!((s_kappa(PI / 2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((s_kappa(1.0, -1.0).unwrap() - 1.175_201_193_643_801_4).abs() < 1e-15);
        assert!(s_kappa(4.0, 1.0).is_err());
        assert!(s_kappa(-0.1, 0.0).is_err());
        for k in [-2.0, 0.0, 0.5] {
            assert_eq!(s_kappa(0.0, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn ln_s_kappa_matches_direct_and_survives_large_arguments() {
        for (t, k) in [(0.3, -1.0), (2.0, -0.25), (1.0, 0.7), (5.0, 0.0)] {
            let direct = s_kappa(t, k).unwrap().ln();
            assert!((ln_s_kappa(t, k).unwrap() - direct).abs() < 1e-14);
        }
        // sinh(1000) overflows; its log does not.
        let v = ln_s_kappa(1000.0, -1.0).unwrap();
        assert!((v - (1000.0 - std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_coeff(0.3, 2.0, 0.0, 3.0).unwrap(), 0.3);
        assert!((sigma_coeff(1.0, 1.2, 1.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((sigma_coeff(1.0, 1.2, -4.0, 3.0).unwrap() - 1.0).abs() < 1e-15);
        let v = sigma_coeff(0.5, 1.0, -1.0, 2.0).unwrap();
        assert!((v - 0.5f64.sinh() / 1f64.sinh()).abs() < 1e-15);
        assert!((v - 0.443_409).abs() < 1e-6);
        assert_eq!(sigma_coeff(0.5, PI, 1.0, 2.0).unwrap(), f64::INFINITY);
        assert!(sigma_coeff(1.5, 1.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn diameter_bound_examples() {
        assert!((diameter_bound(1.0, 2.0) - PI).abs() < 1e-15);
        assert_eq!(diameter_bound(-3.0, 5.0), f64::INFINITY);
        assert_eq!(diameter_bound(0.0, 5.0), f64::INFINITY);
        assert!((diameter_bound(4.0, 2.0) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cot_examples() {
        assert_eq!(cot_knd(1.0, 0.0, 3.0).unwrap(), 2.0);
        assert_eq!(cot_knd(0.5, 0.0, 2.0).unwrap(), 2.0);
        let v = cot_knd(1.0, -1.0, 2.0).unwrap();
        assert!((v - 1.0 / 1f64.tanh()).abs() < 1e-15);
        assert!((v - 1.313_035_3).abs() < 1e-7);
        assert_eq!(cot_knd(0.0, 1.0, 2.0).unwrap(), f64::INFINITY);
        assert_eq!(cot_knd(PI, 1.0, 2.0).unwrap(), f64::NEG_INFINITY);
        assert!(cot_knd(3.5, 1.0, 2.0).is_err());
    }

    #[test]
    fn space_validation() {
        assert!(McpSpace::new(0.0, 1.0, 1.0).is_err());
        assert!(McpSpace::new(0.0, 2.0, 0.0).is_err());
        assert!(McpSpace::new(1.0, 2.0, 3.2).is_err());
        let s = McpSpace::new(1.0, 2.0, PI * (1.0 + 1e-14)).unwrap();
        assert!(s.is_maximal());
        assert!(!space(1.0, 2.0, 3.0).is_maximal());
        let r = space(-1.0, 3.0, 1.0).rescaled(2.0).unwrap();
        assert_eq!(r.curvature(), -0.25);
        assert!(McpSpace::maximal(2.0, 3.0).unwrap().rescaled(0.5).unwrap().is_maximal());
    }

    #[test]
    fn model_density_examples() {
        let s = space(0.0, 3.0, 2.0);
        assert_eq!(model_h1(2.0, &s).unwrap(), 4.0);
        let s = space(-1.0, 2.0, 1.0);
        assert!((model_h1(1.0, &s).unwrap() - 1f64.sinh()).abs() < 1e-15);
        for s in [space(0.0, 3.0, 2.0), space(-1.0, 2.0, 1.5), space(1.0, 4.0, 2.0)] {
            let d = s.diameter();
            assert_eq!(model_h2(d, &s).unwrap(), 0.0);
            let q = 0.25 * d;
            assert!((model_h(q, &s).unwrap() - model_h(d - q, &s).unwrap()).abs() < 1e-14);
            // continuity at D/2
            let m = 0.5 * d;
            assert!((model_h1(m, &s).unwrap() - model_h2(m, &s).unwrap()).abs() < 1e-14);
        }
        let s = space(0.0, 2.0, 2.0);
        assert!((model_t(1.5, &s).unwrap() - 1.0 / 1.5).abs() < 1e-15);
        assert_eq!(model_t(1.0, &s).unwrap(), 1.0);
        assert_eq!(model_t_jump(&s).unwrap(), 2.0);
    }

    #[test]
    fn maximal_model_is_h1() {
        let s = McpSpace::maximal(1.0, 3.0).unwrap();
        for i in 1..20 {
            let x = s.diameter() * i as f64 / 20.0;
            let a = model_log_h1(x, &s).unwrap();
            let b = model_log_h2(x, &s).unwrap();
            assert!((a - b).abs() < 1e-12, "{x}");
        }
        assert_eq!(model_t(0.0, &s).unwrap(), f64::INFINITY);
        assert_eq!(model_t(s.diameter(), &s).unwrap(), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn cot_is_log_derivative_of_model_power(
            k in -3.0f64..3.0, n in 1.2f64..8.0, frac in 0.05f64..0.95,
        ) {
            let bound = diameter_bound(k, n).min(4.0);
            let x = frac * bound;
            let kappa = k / (n - 1.0);
            let step = 1e-5 * bound;
            let f = |y: f64| (n - 1.0) * ln_s_kappa(y, kappa).unwrap();
            let fd = (f(x + step) - f(x - step)) / (2.0 * step);
            let c = cot_knd(x, k, n).unwrap();
            prop_assert!((fd - c).abs() <= 1e-6 * (1.0 + c.abs()), "fd={fd} cot={c}");
        }

        #[test]
        fn model_t_is_antisymmetric(
            k in -3.0f64..3.0, n in 1.2f64..8.0, dfrac in 0.1f64..1.0, frac in 0.01f64..0.49,
        ) {
            let d = dfrac * diameter_bound(k, n).min(5.0);
            let s = space(k, n, d);
            let x = frac * d;
            let a = model_t(x, &s).unwrap();
            let b = model_t(d - x, &s).unwrap();
            prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        }

        #[test]
        fn endpoint_ratio_is_decreasing(
            k in -3.0f64..3.0, n in 1.2f64..8.0, dfrac in 0.1f64..1.0,
        ) {
            let d = dfrac * diameter_bound(k, n).min(5.0);
            let kappa = k / (n - 1.0);
            let ratio = |x: f64| ln_s_kappa(d - x, kappa).unwrap() - ln_s_kappa(x, kappa).unwrap();
            let mut prev = f64::INFINITY;
            for i in 1..200 {
                let r = ratio(d * i as f64 / 200.0);
                prop_assert!(r < prev);
                prev = r;
            }
        }

        #[test]
        fn s_kappa_positive_inside(k in -3.0f64..3.0, frac in 0.001f64..0.999) {
            let upper = if k > 0.0 { PI / k.sqrt() } else { 10.0 };
            prop_assert!(s_kappa(frac * upper, k).unwrap() > 0.0);
        }
    }
}
