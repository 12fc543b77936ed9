//! Generalized p-trigonometric functions.
//!
//! `sin_p` is the inverse of `t = ∫_0^s (1 - |σ|^p)^{-1/p} dσ` on
//! `[-π_p/2, π_p/2]`, extended by `sin_p(t) = sin_p(π_p - t)` and
//! `2π_p`-periodicity. `cos_p` is its derivative and satisfies
//! `|sin_p|^p + |cos_p|^p = 1`.
//!
//! Evaluation goes through [`PTrig`], an immutable interpolation table built
//! once per exponent. The quarter period is split where `|sin_p| = |cos_p|`:
//!
//! * below the split, `sin_p(t)` is interpolated in `t`;
//! * above it, `cos_p^{p-1}` is interpolated in `ψ = π_p/2 - t`.
//!
//! Both pieces are cubic Hermite with exact node slopes. Nodes are placed by
//! adaptive bisection until the sampled interpolation error is below the
//! requested tolerance. Whichever function is not tabulated is recovered from
//! the identity, so the identity holds to rounding everywhere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{tanh_sinh, GaussLegendre};

/// Default interpolation tolerance of a [`PTrig`] table.
pub const DEFAULT_TABLE_TOL: f64 = 1e-13;

/// An exponent `p > 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PExponent(f64);

impl PExponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PExponent {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

/// `π_p = 2π / (p sin(π/p))`.
pub fn pi_p(p: PExponent) -> f64 {
    let p = p.get();
    2.0 * PI / (p * (PI / p).sin())
}

/// `sign(x)·|x|^q` for `q > 0`.
pub fn signed_pow(x: f64, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::InvalidPower(q));
    }
    Ok(spow(x, q))
}

#[inline]
pub(crate) fn spow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(q)
    }
}

/// Convenience evaluation of `sin_p`; builds a table on every call.
pub fn sin_p(t: f64, p: PExponent) -> f64 {
    PTrig::new(p).sin(t)
}

/// Convenience evaluation of `cos_p`; builds a table on every call.
pub fn cos_p(t: f64, p: PExponent) -> f64 {
    PTrig::new(p).cos(t)
}

/// Values of the p-trig functions at one phase, as consumed by the phase ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseTerms {
    pub sin: f64,
    pub cos: f64,
    /// `|cos_p|^{p-2} cos_p`, the signed power `cos_p^{p-1}`.
    pub cos_pm1: f64,
    /// `|cos_p|^p`.
    pub abs_cos_p: f64,
}

/// Cubic Hermite table `y(x)` with exact slopes at the nodes.
#[derive(Debug, Clone)]
struct HermiteTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTable {
    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let idx = self.xs.partition_point(|&v| v <= x);
        let i = idx.clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    fn max_x(&self) -> f64 {
        *self.xs.last().unwrap()
    }
}

/// Tabulates the inverse of `x(y) = ∫_0^y k(z) dz` on `[0, y_max]`, where
/// `k > 0` is bounded. Returns the table and the largest sampled error.
fn build_inverse_table<K: Fn(f64) -> f64>(k: K, y_max: f64, tol: f64) -> (HermiteTable, f64) {
    const INITIAL: usize = 16;
    const MAX_DEPTH: u32 = 48;

    // `k` is smooth away from z = 0. Dyadic intervals that do not touch 0 are
    // at least their own length away from it, where Gauss–Legendre converges
    // geometrically.
    let gl = GaussLegendre::new(24);
    let integral = |a: f64, b: f64| {
        if a == 0.0 {
            tanh_sinh(&k, a, b, 1e-15)
        } else {
            gl.integrate(&k, a, b)
        }
    };

    #[derive(Clone, Copy)]
    struct Node {
        x: f64,
        y: f64,
        slope: f64,
    }

    let node = |x: f64, y: f64| Node { x, y, slope: 1.0 / k(y) };
    let hermite = |a: &Node, b: &Node, x: f64| {
        let h = b.x - a.x;
        let t = (x - a.x) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * a.y
            + (t3 - 2.0 * t2 + t) * h * a.slope
            + (-2.0 * t3 + 3.0 * t2) * b.y
            + (t3 - t2) * h * b.slope
    };

    let mut out: Vec<Node> = vec![node(0.0, 0.0)];
    let mut max_err: f64 = 0.0;

    // Pending intervals, processed left to right.
    let mut x_acc = 0.0;
    let mut y_prev = 0.0;
    for i in 1..=INITIAL {
        let y_next = y_max * i as f64 / INITIAL as f64;
        let x_next = x_acc + integral(y_prev, y_next);
        let left = *out.last().unwrap();
        let right = node(x_next, y_next);
        let mut stack = vec![(left, right, 0u32)];
        while let Some((a, b, depth)) = stack.pop() {
            let mut worst: f64 = 0.0;
            let mut mid = None;
            for frac in [0.25, 0.5, 0.75] {
                let yq = a.y + frac * (b.y - a.y);
                let xq = a.x + integral(a.y, yq);
                worst = worst.max((hermite(&a, &b, xq) - yq).abs());
                if frac == 0.5 {
                    mid = Some(node(xq, yq));
                }
            }
            if worst <= tol || depth >= MAX_DEPTH {
                max_err = max_err.max(worst);
                out.push(b);
            } else {
                let m = mid.unwrap();
                stack.push((m, b, depth + 1));
                stack.push((a, m, depth + 1));
            }
        }
        x_acc = x_next;
        y_prev = y_next;
    }

    let table = HermiteTable {
        xs: out.iter().map(|n| n.x).collect(),
        ys: out.iter().map(|n| n.y).collect(),
        slopes: out.iter().map(|n| n.slope).collect(),
    };
    (table, max_err)
}

/// Immutable interpolation table for `sin_p` and `cos_p` at a fixed exponent.
#[derive(Debug, Clone)]
pub struct PTrig {
    p: PExponent,
    pi_p: f64,
    half: f64,
    /// `t` at which `|sin_p| = |cos_p|`.
    split: f64,
    /// `sin_p(t)` for `t ∈ [0, split]`.
    lower: HermiteTable,
    /// `cos_p^{p-1}(π_p/2 - ψ)` for `ψ ∈ [0, π_p/2 - split]`.
    upper: HermiteTable,
    tol: f64,
    max_error: f64,
    quarter_mismatch: f64,
}

impl PTrig {
    pub fn new(p: PExponent) -> Self {
        Self::with_tolerance(p, DEFAULT_TABLE_TOL)
    }

    pub fn with_tolerance(p: PExponent, tol: f64) -> Self {
        let pv = p.get();
        let pi_p = pi_p(p);
        let half = 0.5 * pi_p;
        // sin_p = cos_p = 2^{-1/p} at the split.
        let s_split = 0.5f64.powf(1.0 / pv);

        // t(s) = ∫_0^s (1 - σ^p)^{-1/p} dσ
        let (lower, err_lo) =
            build_inverse_table(|s: f64| (1.0 - s.powf(pv)).powf(-1.0 / pv), s_split, tol);

        // With v = cos_p^{p-1}: ψ(v) = (1/(p-1)) ∫_0^v (1 - w^{p/(p-1)})^{-(p-1)/p} dw
        let q = pv / (pv - 1.0);
        let v_split = s_split.powf(pv - 1.0);
        let (upper, err_hi) = build_inverse_table(
            |w: f64| (1.0 - w.powf(q)).powf(-1.0 / q) / (pv - 1.0),
            v_split,
            tol,
        );

        let split = lower.max_x();
        let quarter_mismatch = (split + upper.max_x() - half).abs();

        Self {
            p,
            pi_p,
            half,
            split,
            lower,
            upper,
            tol,
            max_error: err_lo.max(err_hi),
            quarter_mismatch,
        }
    }

    pub fn exponent(&self) -> PExponent {
        self.p
    }

    pub fn pi(&self) -> f64 {
        self.pi_p
    }

    /// Requested interpolation tolerance.
    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Largest interpolation error observed while placing nodes.
    pub fn error_bound(&self) -> f64 {
        self.max_error
    }

    /// `|t_split + ψ_split - π_p/2|`: the two quadratures against the closed form.
    pub fn quarter_period_mismatch(&self) -> f64 {
        self.quarter_mismatch
    }

    /// Node abscissas on `[0, π_p/2]` with `sin_p` at each, strictly increasing.
    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let pv = self.p.get();
        let mut ts = self.lower.xs.clone();
        let mut ss = self.lower.ys.clone();
        let q = pv / (pv - 1.0);
        // Interior upper nodes only: the outermost coincides with the split,
        // the innermost with π_p/2.
        let n = self.upper.xs.len();
        for (psi, v) in self.upper.xs[1..n - 1].iter().zip(&self.upper.ys[1..n - 1]).rev() {
            ts.push(self.half - psi);
            ss.push((1.0 - v.powf(q)).powf(1.0 / pv));
        }
        ts.push(self.half);
        ss.push(1.0);
        (ts, ss)
    }

    /// Reduces `t` modulo `2π_p` onto `[-π_p/2, π_p/2]`; returns the reduced
    /// argument and the sign of `cos_p`.
    #[inline]
    fn reduce(&self, t: f64) -> (f64, f64) {
        let period = 2.0 * self.pi_p;
        let mut r = t - period * ((t + self.half) / period).floor();
        if r > 3.0 * self.half {
            r -= period;
        }
        if r > self.half {
            (self.pi_p - r, -1.0)
        } else {
            (r, 1.0)
        }
    }

    /// All phase terms at once.
    #[inline]
    pub fn phase_terms(&self, t: f64) -> PhaseTerms {
        if !t.is_finite() {
            return PhaseTerms { sin: f64::NAN, cos: f64::NAN, cos_pm1: f64::NAN, abs_cos_p: f64::NAN };
        }
        let pv = self.p.get();
        let (r, cos_sign) = self.reduce(t);
        let a = r.abs().min(self.half);
        let (s, c, v, cp) = if a <= self.split {
            let s = self.lower.eval(a).clamp(0.0, 1.0);
            let rest = 1.0 - s.powf(pv);
            let ln = rest.ln();
            (s, (ln / pv).exp(), (ln * (pv - 1.0) / pv).exp(), rest)
        } else {
            let psi = self.half - a;
            let v = self.upper.eval(psi).max(0.0);
            let c = v.powf(1.0 / (pv - 1.0));
            let cp = c * v;
            (((1.0 - cp).powf(1.0 / pv)).min(1.0), c, v, cp)
        };
        let sin = if r < 0.0 { -s } else { s };
        PhaseTerms {
            sin,
            cos: cos_sign * c,
            cos_pm1: cos_sign * v,
            abs_cos_p: cp,
        }
    }

    #[inline]
    pub fn sin(&self, t: f64) -> f64 {
        self.phase_terms(t).sin
    }

    #[inline]
    pub fn cos(&self, t: f64) -> f64 {
        self.phase_terms(t).cos
    }

    /// Max of `||sin_p|^p + |cos_p|^p - 1|` over `n` uniform points of `[lo, hi]`.
    pub fn identity_violation(&self, lo: f64, hi: f64, n: usize) -> f64 {
        let pv = self.p.get();
        (0..n)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64;
                let pt = self.phase_terms(t);
                (pt.sin.abs().powf(pv) + pt.cos.abs().powf(pv) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> PExponent {
        PExponent::new(v).unwrap()
    }

    #[test]
    fn exponent_must_exceed_one() {
        assert!(PExponent::new(1.0).is_err());
        assert!(PExponent::new(0.5).is_err());
        assert!(PExponent::new(f64::NAN).is_err());
        assert!(PExponent::new(1.0001).is_ok());
    }

    #[test]
    fn pi_p_closed_form_values() {
        assert!((pi_p(p(2.0)) - PI).abs() < 1e-15);
        // 4π/(3√3) and 2π/(1.5 sin(2π/3))
        assert!((pi_p(p(3.0)) - 2.418_399_152_3).abs() < 1e-10);
        assert!((pi_p(p(1.5)) - 4.836_798_304_6).abs() < 1e-10);
    }

    #[test]
    fn signed_pow_cases() {
        assert_eq!(signed_pow(-0.5, 2.0).unwrap(), -0.25);
        assert_eq!(signed_pow(0.0, 0.5).unwrap(), 0.0);
        let direct = (1.7 * 0.3f64.ln()).exp();
        assert!((signed_pow(0.3, 1.7).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 0.129_153_486).abs() < 1e-9);
        assert_eq!(signed_pow(-0.3, 1.7).unwrap(), -signed_pow(0.3, 1.7).unwrap());
        assert!(signed_pow(1.0, 0.0).is_err());
        assert!(signed_pow(1.0, -1.0).is_err());
    }

    #[test]
    fn table_meets_tolerance_and_quarter_period() {
        for pv in [1.2, 1.5, 2.0, 3.0, 4.5] {
            let tr = PTrig::new(p(pv));
            assert!(tr.error_bound() <= DEFAULT_TABLE_TOL, "p={pv} err={}", tr.error_bound());
            assert!(tr.quarter_period_mismatch() < 1e-13, "p={pv} {}", tr.quarter_period_mismatch());
            let (ts, ss) = tr.nodes();
            assert_eq!(ss[0], 0.0);
            assert_eq!(*ss.last().unwrap(), 1.0);
            assert!(ts.windows(2).all(|w| w[1] > w[0]));
            assert!(ss.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn special_points() {
        for pv in [1.3, 2.0, 3.7] {
            let tr = PTrig::new(p(pv));
            let h = 0.5 * tr.pi();
            assert_eq!(tr.sin(0.0), 0.0);
            assert_eq!(tr.cos(0.0), 1.0);
            assert_eq!(tr.cos(h), 0.0);
            assert_eq!(tr.cos(-h), 0.0);
            assert_eq!(tr.sin(h), 1.0);
            assert_eq!(tr.sin(-h), -1.0);
            assert!(tr.cos(tr.pi()) + 1.0 < 1e-15);
        }
    }

    #[test]
    fn p2_matches_circular_functions() {
        let tr = PTrig::new(p(2.0));
        assert!((tr.pi() - PI).abs() < 1e-15);
        for i in 0..2001 {
            let t = -10.0 + 20.0 * i as f64 / 2000.0;
            assert!((tr.sin(t) - t.sin()).abs() < 1e-12, "t={t}");
            assert!((tr.cos(t) - t.cos()).abs() < 1e-12, "t={t}");
        }
        assert!((tr.sin(PI / 6.0) - 0.5).abs() < 1e-12);
        assert!((tr.cos(PI / 3.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn phase_terms_are_consistent() {
        let tr = PTrig::new(p(1.5));
        for i in 0..500 {
            let t = -7.0 + 14.0 * i as f64 / 499.0;
            let pt = tr.phase_terms(t);
            assert!((pt.cos_pm1 - spow(pt.cos, 0.5)).abs() < 1e-12);
            assert!((pt.abs_cos_p - pt.cos.abs().powf(1.5)).abs() < 1e-12);
        }
    }
}
