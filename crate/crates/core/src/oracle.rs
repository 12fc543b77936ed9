//! Discretized Rayleigh-quotient minimizer for the weighted p-Laplacian gap.
//!
//! Works on `M + 1` uniform nodes with forward differences, midpoint weights
//! on cells and trapezoid weights on nodes. The zero-"mean" constraint
//! `Σ u|u|^{p-2} h Δx = 0` is enforced exactly by shifting `u` after every
//! step. Nothing here touches the phase equation or the p-trig table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::ptrig::PExponent;

pub const DEFAULT_MESH: usize = 8192;
pub const DEFAULT_RESTARTS: usize = 4;
const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Floor of `|u'|` in the preconditioner weights, relative to `max |u'|`.
const SLOPE_FLOOR: f64 = 0.05;
/// Floor of `|u|` in the preconditioner weights, relative to `max |u|`.
const VALUE_FLOOR: f64 = 1e-3;
/// A run stops once this many steps gained less than `STALL_REL` together.
const STALL_WINDOW: usize = 20;
const STALL_REL: f64 = 1e-15;
/// Projected-gradient reduction that counts as converged.
pub const STATIONARITY_TOL: f64 = 1e-6;
/// Inverse-iteration sweeps for the `p = 2` warm start.
const WARM_SWEEPS: usize = 40;

/// Uniform mesh on `[0, D]` with `h` at nodes and at cell midpoints,
/// scaled to unit maximum.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    p: PExponent,
    diameter: f64,
    node_weights: Vec<f64>,
    cell_weights: Vec<f64>,
}

impl DiscreteProblem {
    /// `cells = M`, so there are `M + 1` nodes.
    pub fn from_density(density: &dyn LogDensity, p: PExponent, cells: usize) -> Result<Self> {
        let d = density.space().diameter();
        let dx = d / cells as f64;
        let node_log: Vec<f64> = (0..=cells).map(|i| density.log_h(i as f64 * dx)).collect();
        let cell_log: Vec<f64> = (0..cells).map(|i| density.log_h((i as f64 + 0.5) * dx)).collect();
        let top = node_log.iter().chain(&cell_log).cloned().fold(f64::NEG_INFINITY, f64::max);
        let scale = |v: &f64| (v - top).exp();
        Self::from_weights(
            p,
            d,
            node_log.iter().map(scale).collect(),
            cell_log.iter().map(scale).collect(),
        )
    }

    /// `h ≡ 1` on `[0, D]`.
    pub fn flat(p: PExponent, diameter: f64, cells: usize) -> Result<Self> {
        Self::from_weights(p, diameter, vec![1.0; cells + 1], vec![1.0; cells])
    }

    pub fn from_weights(p: PExponent, diameter: f64, node_weights: Vec<f64>, cell_weights: Vec<f64>) -> Result<Self> {
        let cells = cell_weights.len();
        if cells < 2 || node_weights.len() != cells + 1 {
            return Err(Error::GridMismatch(format!(
                "{} node weights for {cells} cells",
                node_weights.len()
            )));
        }
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidParameter(format!("diameter {diameter}")));
        }
        if node_weights.iter().chain(&cell_weights).any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::DegenerateProblem("weights must be finite and nonnegative".into()));
        }
        let prob = Self { p, diameter, node_weights, cell_weights };
        let mass: f64 = prob.trapezoid().iter().sum();
        if !(mass > 0.0) {
            return Err(Error::DegenerateProblem("zero total mass".into()));
        }
        Ok(prob)
    }

    pub fn cells(&self) -> usize {
        self.cell_weights.len()
    }

    pub fn dx(&self) -> f64 {
        self.diameter / self.cells() as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..=self.cells()).map(|i| i as f64 * dx).collect()
    }

    pub fn exponent(&self) -> PExponent {
        self.p
    }

    /// Node quadrature weights `ω_i h_i Δx`.
    fn trapezoid(&self) -> Vec<f64> {
        let dx = self.dx();
        let n = self.node_weights.len();
        self.node_weights
            .iter()
            .enumerate()
            .map(|(i, w)| if i == 0 || i + 1 == n { 0.5 * w * dx } else { w * dx })
            .collect()
    }

    /// `Σ u|u|^{p-2} h Δx`.
    pub fn constraint(&self, u: &[f64]) -> f64 {
        let q = self.p.get() - 1.0;
        u.iter().zip(self.trapezoid()).map(|(v, w)| spow(*v, q) * w).sum()
    }

    fn parts(&self, u: &[f64], omega: &[f64]) -> (f64, f64) {
        let p = self.p.get();
        let dx = self.dx();
        let num = compensated_sum(
            u.windows(2)
                .zip(&self.cell_weights)
                .map(|(w, h)| ((w[1] - w[0]) / dx).abs().powf(p) * h * dx),
        );
        let den = compensated_sum(u.iter().zip(omega).map(|(v, w)| v.abs().powf(p) * w));
        (num, den)
    }
}

/// Neumaier summation.
fn compensated_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut carry = 0.0;
    for t in terms {
        let s = sum + t;
        carry += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    sum + carry
}

/// `Σ |Δu/Δx|^p h̄ Δx / Σ |u|^p h Δx`.
pub fn rayleigh_value(u: &[f64], prob: &DiscreteProblem) -> Result<f64> {
    if u.len() != prob.node_weights.len() {
        return Err(Error::GridMismatch(format!("{} values for {} nodes", u.len(), prob.node_weights.len())));
    }
    let (num, den) = prob.parts(u, &prob.trapezoid());
    if !(den > 0.0) {
        return Err(Error::DegenerateProblem("zero denominator".into()));
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once the projected gradient falls below this fraction of the
    /// reference gradient.
    pub gradient_tol: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { restarts: DEFAULT_RESTARTS, max_iterations: 2000, gradient_tol: 1e-9, seed: 0x5eed }
    }
}

/// One descent run.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub index: usize,
    pub value: f64,
    pub iterations: usize,
    /// Projected gradient at the end over that of the linear profile.
    pub gradient_ratio: f64,
    pub converged: bool,
    /// Rayleigh quotient after every accepted step.
    pub history: Vec<f64>,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Smallest value over the restarts, ties to the lowest restart index.
    pub value: f64,
    /// `(max - min) / min` over restarts.
    pub spread: f64,
    /// `|Σ u|u|^{p-2} h Δx| / Σ |u|^p h Δx` at the returned point.
    pub constraint_residual: f64,
    pub gradient_ratio: f64,
    pub converged: bool,
    pub best: usize,
    pub restarts: Vec<RestartOutcome>,
}

impl OracleResult {
    pub fn minimizer(&self) -> &[f64] {
        &self.restarts[self.best].u
    }
}

/// Minimizes the Rayleigh quotient with `restarts` starting points.
pub fn minimize_gap(prob: &DiscreteProblem, restarts: usize) -> Result<OracleResult> {
    minimize_gap_with(prob, &OracleOptions { restarts, ..OracleOptions::default() })
}

pub fn minimize_gap_with(prob: &DiscreteProblem, opts: &OracleOptions) -> Result<OracleResult> {
    if opts.restarts == 0 {
        return Err(Error::InvalidParameter("at least one restart is needed".into()));
    }
    let omega = prob.trapezoid();
    let linear = linear_start(prob);
    let reference = {
        let u = shift_to_constraint(prob, &omega, &linear);
        let (_, g) = objective_gradient(prob, &omega, &u);
        let d = descent_direction(prob, &omega, &u, &g, rayleigh_value(&u, prob)?);
        dual_norm(&g, &d)
    };
    let runs: Vec<RestartOutcome> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| {
            let start = match k {
                0 => linear.clone(),
                1 => warm_start(prob, &omega),
                _ => random_start(prob, opts.seed, k as u64),
            };
            descend(prob, &omega, start, opts, reference, k)
        })
        .collect::<Result<_>>()?;

    let best = runs
        .iter()
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)))
        .map(|r| r.index)
        .expect("nonempty");
    let lo = runs[best].value;
    let hi = runs.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let u = &runs[best].u;
    let (_, den) = prob.parts(u, &omega);
    Ok(OracleResult {
        value: lo,
        spread: (hi - lo) / lo,
        constraint_residual: prob.constraint(u).abs() / den,
        gradient_ratio: runs[best].gradient_ratio,
        converged: runs[best].converged,
        best,
        restarts: runs,
    })
}

fn linear_start(prob: &DiscreteProblem) -> Vec<f64> {
    let half = 0.5 * prob.diameter;
    prob.nodes().into_iter().map(|x| x - half).collect()
}

/// Linear profile plus a few random cosine modes.
fn random_start(prob: &DiscreteProblem, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let d = prob.diameter;
    let amps: Vec<f64> = (1..=6).map(|k| rng.gen_range(-0.3..0.3) * d / k as f64).collect();
    prob.nodes()
        .into_iter()
        .map(|x| {
            let t = std::f64::consts::PI * x / d;
            x - 0.5 * d + amps.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * t).cos()).sum::<f64>()
        })
        .collect()
}

/// First nontrivial eigenvector of the `p = 2` problem by shifted inverse
/// iteration in the weighted-mean-zero subspace.
fn warm_start(prob: &DiscreteProblem, omega: &[f64]) -> Vec<f64> {
    let dx = prob.dx();
    let stiff: Vec<f64> = prob.cell_weights.iter().map(|h| h / dx).collect();
    let sigma = (std::f64::consts::PI / prob.diameter).powi(2) * 1e-3;
    let mass: Vec<f64> = omega.iter().map(|w| sigma * w).collect();
    let total: f64 = omega.iter().sum();
    let mut u = linear_start(prob);
    for _ in 0..WARM_SWEEPS {
        let rhs: Vec<f64> = u.iter().zip(omega).map(|(v, w)| v * w).collect();
        u = solve_tridiagonal(&stiff, &mass, &rhs);
        let mean: f64 = u.iter().zip(omega).map(|(v, w)| v * w).sum::<f64>() / total;
        let top = u.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        for v in &mut u {
            *v = (*v - mean) / top;
        }
    }
    u
}

/// `u - c` with `c` solving the constraint, rescaled to `max |u| = 1`.
///
/// `c ↦ Σ (u - c)|u - c|^{p-2} ω` is continuous and decreasing, positive at
/// `min u` and negative at `max u`. A bracket is grown around `c = 0`, where
/// the root sits after a small step, and then closed by the Illinois
/// variant of regula falsi.
fn shift_to_constraint(prob: &DiscreteProblem, omega: &[f64], u: &[f64]) -> Vec<f64> {
    let q = prob.p.get() - 1.0;
    // value and Σ of absolute terms
    let eval = |c: f64| -> (f64, f64) {
        let (mut f, mut abs) = (0.0, 0.0);
        for (v, w) in u.iter().zip(omega) {
            let t = spow(v - c, q) * w;
            f += t;
            abs += t.abs();
        }
        (f, abs)
    };
    let (umin, umax) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let width = umax - umin;
    let done = |f: f64, abs: f64| f.abs() <= 1e-15 * abs;

    let c0 = 0.0f64.clamp(umin, umax);
    let (f0, abs0) = eval(c0);
    let c = if done(f0, abs0) {
        c0
    } else {
        // f decreases in c, so the root lies on the side f points to
        let dir = f0.signum();
        let (mut a, mut fa) = (c0, f0);
        let mut step = 1e-6 * width;
        let (mut b, mut fb);
        loop {
            b = (a + dir * step).clamp(umin, umax);
            fb = eval(b).0;
            if fb.signum() != dir || b == umin || b == umax {
                break;
            }
            a = b;
            fa = fb;
            step *= 16.0;
        }
        let mut c = b;
        let mut side = 0i32;
        for _ in 0..100 {
            if fb.signum() == fa.signum() || (b - a).abs() <= 1e-15 * width {
                break;
            }
            c = (a * fb - b * fa) / (fb - fa);
            let (fc, abs) = eval(c);
            if done(fc, abs) {
                break;
            }
            if fc.signum() == fb.signum() {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
        }
        c
    };
    let out: Vec<f64> = u.iter().map(|v| v - c).collect();
    let top = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    out.into_iter().map(|v| v / top).collect()
}

/// Rayleigh quotient and its gradient.
fn objective_gradient(prob: &DiscreteProblem, omega: &[f64], u: &[f64]) -> (f64, Vec<f64>) {
    let p = prob.p.get();
    let dx = prob.dx();
    let (num, den) = prob.parts(u, omega);
    let r = num / den;
    let mut g = vec![0.0; u.len()];
    for (i, (w, h)) in u.windows(2).zip(&prob.cell_weights).enumerate() {
        let flux = p * spow((w[1] - w[0]) / dx, p - 1.0) * h;
        g[i] -= flux;
        g[i + 1] += flux;
    }
    for (gi, (v, w)) in g.iter_mut().zip(u.iter().zip(omega)) {
        *gi = (*gi - r * p * spow(*v, p - 1.0) * w) / den;
    }
    (r, g)
}

/// Preconditioned steepest-descent direction tangent to the constraint.
///
/// The preconditioner is the linearization of the discrete p-Laplacian
/// plus `R` times the linearized mass, both with weights regularized where
/// `u'` or `u` vanish.
fn descent_direction(prob: &DiscreteProblem, omega: &[f64], u: &[f64], g: &[f64], r: f64) -> Vec<f64> {
    let p = prob.p.get();
    let dx = prob.dx();
    let (_, den) = prob.parts(u, omega);
    let slopes: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) / dx).collect();
    let smax = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (es, eu) = (SLOPE_FLOOR * smax, VALUE_FLOOR * umax);
    let scale = p * (p - 1.0) / den;
    let stiff: Vec<f64> = slopes
        .iter()
        .zip(&prob.cell_weights)
        .map(|(s, h)| scale * h * (s * s + es * es).powf(0.5 * (p - 2.0)) / dx)
        .collect();
    let mass: Vec<f64> = u
        .iter()
        .zip(omega)
        .map(|(v, w)| scale * r * w * (v * v + eu * eu).powf(0.5 * (p - 2.0)))
        .collect();
    let normal: Vec<f64> = u
        .iter()
        .zip(omega)
        .map(|(v, w)| w * (v * v + eu * eu).powf(0.5 * (p - 2.0)))
        .collect();
    let pg = solve_tridiagonal(&stiff, &mass, g);
    let pn = solve_tridiagonal(&stiff, &mass, &normal);
    let mu = dot(&normal, &pg) / dot(&normal, &pn);
    pg.iter().zip(&pn).map(|(a, b)| -(a - mu * b)).collect()
}

/// `sqrt(-g·d)`, the dual norm of the projected gradient.
fn dual_norm(g: &[f64], d: &[f64]) -> f64 {
    (-dot(g, d)).max(0.0).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn descend(
    prob: &DiscreteProblem,
    omega: &[f64],
    start: Vec<f64>,
    opts: &OracleOptions,
    reference: f64,
    index: usize,
) -> Result<RestartOutcome> {
    let mut u = shift_to_constraint(prob, omega, &start);
    let (mut r, mut g) = objective_gradient(prob, omega, &u);
    let mut history = vec![r];
    let mut ratio = f64::INFINITY;
    let mut iterations = 0;
    // previous preconditioned gradient, direction and g·P⁻¹g
    let mut prev: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut step = 0.5f64;
    while iterations < opts.max_iterations {
        let z = descent_direction(prob, omega, &u, &g, r);
        let gz = -dot(&g, &z);
        ratio = gz.max(0.0).sqrt() / reference;
        if ratio <= opts.gradient_tol {
            break;
        }
        let k = history.len();
        if k > STALL_WINDOW && history[k - 1 - STALL_WINDOW] - r <= STALL_REL * r {
            break;
        }
        // Polak–Ribière, restarted when it would not descend
        let mut d = z.clone();
        if let Some((pz, pd, pgz)) = &prev {
            let beta = (gz + dot(&g, pz)) / pgz;
            if beta > 0.0 {
                for (di, pdi) in d.iter_mut().zip(pd) {
                    *di += beta * pdi;
                }
            }
            if dot(&g, &d) >= 0.0 {
                d.clone_from(&z);
            }
        }
        let slope = dot(&g, &d);
        if slope >= 0.0 {
            break;
        }
        let mut t = (2.0 * step).min(1.0);
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            let trial = shift_to_constraint(prob, omega, &trial);
            let rt = rayleigh_value(&trial, prob)?;
            if rt <= r + ARMIJO_C1 * t * slope {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            // no decrease left at working precision
            break;
        };
        step = t;
        prev = Some((z, d, gz));
        u = next;
        (r, g) = objective_gradient(prob, omega, &u);
        history.push(r);
        iterations += 1;
    }
    let z = descent_direction(prob, omega, &u, &g, r);
    ratio = ratio.min(dual_norm(&g, &z) / reference);
    Ok(RestartOutcome {
        index,
        value: r,
        iterations,
        gradient_ratio: ratio,
        converged: ratio <= STATIONARITY_TOL,
        history,
        u,
    })
}

/// Solves the symmetric tridiagonal system with off-diagonals `-s_i`
/// and diagonal `s_{i-1} + s_i + m_i` (Thomas algorithm).
fn solve_tridiagonal(s: &[f64], m: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let diag = |i: usize| -> f64 {
        let left = if i > 0 { s[i - 1] } else { 0.0 };
        let right = if i + 1 < n { s[i] } else { 0.0 };
        left + right + m[i]
    };
    let mut c = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut b = diag(0);
    c[0] = if n > 1 { -s[0] / b } else { 0.0 };
    y[0] = rhs[0] / b;
    for i in 1..n {
        b = diag(i) + s[i - 1] * c[i - 1];
        if i + 1 < n {
            c[i] = -s[i] / b;
        }
        y[i] = (rhs[i] + s[i - 1] * y[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        y[i] -= c[i] * y[i + 1];
    }
    y
}

/// `sign(x)·|x|^q`, kept local so the oracle shares no arithmetic with the shooting path.
#[inline]
fn spow(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{ModelDensity, ModelKind};
    use crate::geometry::McpSpace;
    use crate::ptrig::pi_p;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn pe(p: f64) -> PExponent {
        PExponent::new(p).unwrap()
    }

    #[test]
    fn linear_profile_on_the_unit_interval() {
        // ∫u'^2 / ∫u^2 = 12 for u = x - 1/2; the trapezoid adds 2Δx^2 relative
        let m = 1000;
        let prob = DiscreteProblem::flat(pe(2.0), 1.0, m).unwrap();
        let u: Vec<f64> = prob.nodes().iter().map(|x| x - 0.5).collect();
        let v = rayleigh_value(&u, &prob).unwrap();
        let dx = 1.0 / m as f64;
        assert!((v - 12.0 / (1.0 + 2.0 * dx * dx)).abs() < 1e-12, "{v}");
        assert!((v - 12.0).abs() < 3e-4);
    }

    #[test]
    fn cosine_approaches_the_classical_value() {
        let d = 2.0;
        let prob = DiscreteProblem::flat(pe(2.0), d, 4096).unwrap();
        let u: Vec<f64> = prob.nodes().iter().map(|x| (PI * x / d).cos()).collect();
        let v = rayleigh_value(&u, &prob).unwrap();
        assert!((v - (PI / d).powi(2)).abs() < 1e-6);
    }

    #[test]
    fn rejects_degenerate_input() {
        let prob = DiscreteProblem::flat(pe(2.0), 1.0, 8).unwrap();
        assert!(matches!(rayleigh_value(&[0.0; 9], &prob), Err(Error::DegenerateProblem(_))));
        assert!(matches!(rayleigh_value(&[1.0; 4], &prob), Err(Error::GridMismatch(_))));
        assert!(DiscreteProblem::from_weights(pe(2.0), 1.0, vec![0.0; 9], vec![0.0; 8]).is_err());
        assert!(DiscreteProblem::from_weights(pe(2.0), 1.0, vec![1.0; 5], vec![1.0; 8]).is_err());
        assert!(DiscreteProblem::from_weights(pe(2.0), 1.0, vec![-1.0; 9], vec![1.0; 8]).is_err());
        assert!(minimize_gap(&prob, 0).is_err());
    }

    #[test]
    fn classical_neumann_gap() {
        let prob = DiscreteProblem::flat(pe(2.0), PI, DEFAULT_MESH).unwrap();
        let r = minimize_gap(&prob, 2).unwrap();
        assert!((r.value - 1.0).abs() < 1e-4, "{}", r.value);
        assert!(r.converged);
    }

    #[test]
    fn returned_point_is_feasible_and_stationary() {
        for p in [1.5, 2.0, 3.0] {
            let space = McpSpace::new(-1.0, 3.0, 1.0).unwrap();
            let model = ModelDensity::new(space, ModelKind::Model);
            let prob = DiscreteProblem::from_density(&model, pe(p), 1024).unwrap();
            let r = minimize_gap(&prob, 3).unwrap();
            assert!(r.constraint_residual <= 1e-10, "p={p}: {}", r.constraint_residual);
            assert!(r.gradient_ratio <= STATIONARITY_TOL, "p={p}: {}", r.gradient_ratio);
            assert!(r.spread < 1e-8, "p={p}: {}", r.spread);
            for run in &r.restarts {
                assert!(run.history.windows(2).all(|w| w[1] <= w[0]), "p={p} restart {}", run.index);
            }
            assert_eq!(r.minimizer().len(), 1025);
        }
    }

    #[test]
    fn mesh_refinement_is_second_order() {
        let space = McpSpace::new(-1.0, 3.0, 1.0).unwrap();
        let model = ModelDensity::new(space, ModelKind::Model);
        let v: Vec<f64> = [512, 1024, 2048]
            .iter()
            .map(|&m| {
                let prob = DiscreteProblem::from_density(&model, pe(2.0), m).unwrap();
                minimize_gap(&prob, 2).unwrap().value
            })
            .collect();
        let (d1, d2) = ((v[0] - v[1]).abs(), (v[1] - v[2]).abs());
        // 4 for an exact h^2 error, with room for the next term
        assert!(d1 <= 4.4 * d2 && d1 >= 3.6 * d2, "{v:?}");
    }

    #[test]
    fn restarts_are_deterministic() {
        let prob = DiscreteProblem::flat(pe(2.5), 1.0, 512).unwrap();
        let a = minimize_gap(&prob, 4).unwrap();
        let b = minimize_gap(&prob, 4).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.best, b.best);
        assert_eq!(a.minimizer(), b.minimizer());
    }

    #[test]
    fn tridiagonal_solve_matches_a_dense_product() {
        let s = [1.0, 2.0, 0.5, 3.0];
        let m = [0.1, 0.2, 0.3, 0.4, 0.5];
        let rhs = [1.0, -2.0, 0.5, 4.0, -1.0];
        let x = solve_tridiagonal(&s, &m, &rhs);
        for i in 0..5 {
            let left = if i > 0 { s[i - 1] } else { 0.0 };
            let right = if i < 4 { s[i] } else { 0.0 };
            let mut ax = (left + right + m[i]) * x[i];
            if i > 0 {
                ax -= s[i - 1] * x[i - 1];
            }
            if i < 4 {
                ax -= s[i] * x[i + 1];
            }
            assert!((ax - rhs[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn value_is_scale_invariant(c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], p in 1.2f64..4.0) {
            let prob = DiscreteProblem::flat(pe(p), 1.3, 64).unwrap();
            let u: Vec<f64> = prob.nodes().iter().map(|x| (3.0 * x).sin() + 0.2 * x).collect();
            let cu: Vec<f64> = u.iter().map(|v| c * v).collect();
            let a = rayleigh_value(&u, &prob).unwrap();
            let b = rayleigh_value(&cu, &prob).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }

        #[test]
        fn shift_enforces_the_constraint(p in 1.2f64..4.0, seed in 0u64..100) {
            let prob = DiscreteProblem::flat(pe(p), 1.0, 200).unwrap();
            let omega = prob.trapezoid();
            let u = random_start(&prob, seed, 3);
            let v = shift_to_constraint(&prob, &omega, &u);
            let (_, den) = prob.parts(&v, &omega);
            prop_assert!(prob.constraint(&v).abs() <= 1e-12 * den, "{} {}", prob.constraint(&v), den);
        }

        #[test]
        fn flat_gap_matches_the_closed_form(p in 1.3f64..4.0, d in 0.5f64..3.0) {
            let prob = DiscreteProblem::flat(pe(p), d, 1024).unwrap();
            let r = minimize_gap(&prob, 2).unwrap();
            let exact = (p - 1.0) * (pi_p(pe(p)) / d).powf(p);
            prop_assert!((r.value - exact).abs() < 5e-3 * exact, "{} vs {}", r.value, exact);
        }
    }
}
