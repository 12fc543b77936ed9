//! The Prüfer phase equation of the weighted p-Laplacian.
//!
//! With `α = (λ/(p-1))^{1/p}` and the substitution `α u = e sin_p φ`,
//! `u' = e cos_p φ`, the Neumann eigenproblem
//! `(|u'|^{p-2}u')' + T |u'|^{p-2}u' + λ |u|^{p-2}u = 0` turns into
//!
//! ```text
//! φ'      = α + T cos_p^{p-1}(φ) sin_p(φ) / (p-1)
//! (ln e)' = -T |cos_p φ|^p / (p-1)
//! ```
//!
//! where `cos_p^{p-1}` is the signed power `|cos_p|^{p-2} cos_p`. The phase
//! equation does not involve `e`, so eigenvalues come from `φ` alone.

use crate::density::LogDensity;
use crate::error::{Error, Result};
use crate::geometry::Tolerances;
use crate::ode::{integrate, LevelEvent, OdeOptions, Solution};
use crate::ptrig::{spow, PTrig};
use crate::quad::GaussLegendre;

/// `α = (λ/(p-1))^{1/p}`.
pub fn alpha_of(lambda: f64, p: f64) -> f64 {
    (lambda / (p - 1.0)).powf(1.0 / p)
}

/// Inverse of [`alpha_of`].
pub fn lambda_of_alpha(alpha: f64, p: f64) -> f64 {
    (p - 1.0) * alpha.powf(p)
}

/// `α + T cos_p^{p-1}(φ) sin_p(φ)/(p-1)` for a given value `t` of `T`.
///
/// Returns exactly `α` where `cos_p φ = 0` or `sin_p φ = 0`, whatever `t`.
#[inline]
pub fn phase_rhs(trig: &PTrig, t: f64, alpha: f64, phi: f64) -> f64 {
    let pt = trig.phase_terms(phi);
    if pt.cos_pm1 == 0.0 || pt.sin == 0.0 {
        return alpha;
    }
    alpha + t * pt.cos_pm1 * pt.sin / (trig.exponent().get() - 1.0)
}

/// Integration direction along `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// The phase equation for one density and one `λ`.
pub struct PhaseProblem<'a> {
    trig: &'a PTrig,
    density: &'a dyn LogDensity,
    lambda: f64,
    alpha: f64,
    tol: Tolerances,
}

impl<'a> PhaseProblem<'a> {
    pub fn new(trig: &'a PTrig, density: &'a dyn LogDensity, lambda: f64, tol: Tolerances) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda} must be finite and nonnegative")));
        }
        let alpha = alpha_of(lambda, trig.exponent().get());
        Ok(Self { trig, density, lambda, alpha, tol })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn trig(&self) -> &PTrig {
        self.trig
    }

    pub fn density(&self) -> &dyn LogDensity {
        self.density
    }

    #[inline]
    pub fn rhs(&self, x: f64, phi: f64) -> f64 {
        phase_rhs(self.trig, self.density.log_deriv(x), self.alpha, phi)
    }

    /// Closest approach to the left and right end allowed for evaluation.
    pub fn guarded_ends(&self) -> (f64, f64) {
        let d = self.density.space().diameter();
        let g = self.tol.endpoint_guard * d;
        let (sl, sr) = self.density.singular_ends();
        (if sl { g } else { 0.0 }, if sr { d - g } else { d })
    }

    /// Integrates from `(x0, phi0)` in `dir` until `φ` reaches `±π_p/2`
    /// (`+` forward, `-` backward) or `stop` is reached. `stop` defaults to
    /// the guarded end of the domain.
    pub fn integrate(&self, x0: f64, phi0: f64, dir: Direction, stop: Option<f64>) -> Result<PhaseRun> {
        let d = self.density.space().diameter();
        let (lo, hi) = self.guarded_ends();
        let half_pi = 0.5 * self.trig.pi();
        let (end, level) = match dir {
            Direction::Forward => (stop.unwrap_or(hi).min(hi), half_pi),
            Direction::Backward => (stop.unwrap_or(lo).max(lo), -half_pi),
        };
        let mut cuts: Vec<f64> = self
            .density
            .breakpoints()
            .into_iter()
            .filter(|&b| (b - x0) * (end - b) > 0.0)
            .collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        if dir == Direction::Backward {
            cuts.reverse();
        }
        cuts.push(end);

        let opts = OdeOptions {
            rtol: self.tol.ode_rtol,
            atol: self.tol.ode_atol,
            max_steps: 200_000,
            h_max: 0.125 * d,
        };
        let event = Some(LevelEvent { level });
        let mut segments = Vec::new();
        let (mut x, mut phi) = (x0, phi0);
        let mut hit = None;
        let mut evals = 0;
        for c in cuts {
            if c == x {
                continue;
            }
            let sol = integrate(|x, y| self.rhs(x, y), x, phi, c, &opts, event)?;
            evals += sol.rhs_evals;
            x = sol.x_end;
            phi = sol.y_end;
            let stop_here = sol.event.is_some();
            hit = sol.event;
            segments.push(sol);
            if stop_here {
                break;
            }
        }
        Ok(PhaseRun { dir, x0, phi0, segments, x_end: x, phi_end: phi, hit, rhs_evals: evals })
    }
}

/// One directional integration of the phase.
#[derive(Debug, Clone)]
pub struct PhaseRun {
    pub dir: Direction,
    pub x0: f64,
    pub phi0: f64,
    segments: Vec<Solution>,
    pub x_end: f64,
    pub phi_end: f64,
    /// Where `φ` reached `±π_p/2`, if it did.
    pub hit: Option<f64>,
    pub rhs_evals: usize,
}

impl PhaseRun {
    /// `φ` at `x` between `x0` and `x_end`.
    pub fn phi_at(&self, x: f64) -> f64 {
        for s in &self.segments {
            let (a, b) = (s.steps.first().map_or(s.x_end, |st| st.x0), s.x_end);
            if (x - a) * (x - b) <= 0.0 {
                return s.eval(x);
            }
        }
        if (x - self.x0).abs() < (x - self.x_end).abs() {
            self.phi0
        } else {
            self.phi_end
        }
    }

    /// Step endpoints `(x, φ)` in integration order. A step cut short by the
    /// event ends at the event.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(self.x0, self.phi0)];
        for s in &self.segments {
            let n = s.steps.len();
            for (i, st) in s.steps.iter().enumerate() {
                if i + 1 == n {
                    out.push((s.x_end, s.y_end));
                } else {
                    out.push((st.x1, st.y1()));
                }
            }
        }
        out
    }
}

/// Phase solution on an interval, assembled from up to two directional runs.
#[derive(Debug, Clone)]
pub struct PrueferTrajectory {
    pub lambda: f64,
    pub alpha: f64,
    pub p: f64,
    /// Increasing sample abscissas and the phase there.
    pub xs: Vec<f64>,
    pub phis: Vec<f64>,
    /// Where `φ = -π_p/2`.
    pub a_hit: Option<f64>,
    /// Where `φ = +π_p/2`.
    pub b_hit: Option<f64>,
    /// Number of consecutive samples with decreasing `φ`.
    pub decreasing_samples: usize,
    runs: Vec<PhaseRun>,
}

impl PrueferTrajectory {
    /// Combines a backward run and a forward run that share their start, or a
    /// single run in either direction.
    pub fn from_runs(problem: &PhaseProblem, runs: Vec<PhaseRun>) -> Self {
        let half_pi = 0.5 * problem.trig.pi();
        let mut pts: Vec<(f64, f64)> = runs.iter().flat_map(|r| r.samples()).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let mut a_hit = None;
        let mut b_hit = None;
        for r in &runs {
            match r.dir {
                Direction::Backward => {
                    a_hit = a_hit.or(r.hit);
                    if r.phi0 == half_pi {
                        b_hit = b_hit.or(Some(r.x0));
                    }
                }
                Direction::Forward => {
                    b_hit = b_hit.or(r.hit);
                    if r.phi0 == -half_pi {
                        a_hit = a_hit.or(Some(r.x0));
                    }
                }
            }
        }
        let decreasing_samples = pts.windows(2).filter(|w| w[1].1 < w[0].1).count();
        Self {
            lambda: problem.lambda,
            alpha: problem.alpha,
            p: problem.trig.exponent().get(),
            xs: pts.iter().map(|p| p.0).collect(),
            phis: pts.iter().map(|p| p.1).collect(),
            a_hit,
            b_hit,
            decreasing_samples,
            runs,
        }
    }

    /// Right-hand side evaluations over all runs.
    pub fn rhs_evals(&self) -> usize {
        self.runs.iter().map(|r| r.rhs_evals).sum()
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    /// Dense `φ(x)`; at a point covered by two runs the first run wins.
    pub fn phi_at(&self, x: f64) -> f64 {
        for r in &self.runs {
            let (a, b) = (r.x0, r.x_end);
            if (x - a) * (x - b) <= 0.0 {
                return r.phi_at(x);
            }
        }
        if x <= self.x_min() {
            self.phis[0]
        } else {
            *self.phis.last().unwrap()
        }
    }
}

/// Integrates from `(x0, φ0)` in both directions until the phase reaches
/// `∓π_p/2` or the guarded domain ends.
pub fn integrate_symmetric(problem: &PhaseProblem, x0: f64, phi0: f64) -> Result<PrueferTrajectory> {
    let back = problem.integrate(x0, phi0, Direction::Backward, None)?;
    let fwd = problem.integrate(x0, phi0, Direction::Forward, None)?;
    Ok(PrueferTrajectory::from_runs(problem, vec![back, fwd]))
}

/// Samples of an eigenfunction reconstructed from a phase trajectory.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    pub lambda: f64,
    pub xs: Vec<f64>,
    pub phi: Vec<f64>,
    /// `u`, scaled to `max |u| = 1`.
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    /// `∫ |(|u'|^{p-2}u')' + T |u'|^{p-2}u' + λ |u|^{p-2}u| dx` by finite differences.
    pub residual_l1: f64,
    /// `∫ |u|^{p-2} u h dx / ∫ |u|^p h dx`.
    pub constraint_ratio: f64,
}

/// Rebuilds `u` and `u'` on `[a_hit, b_hit]` from the phase and the amplitude
/// equation, with `e = 1` at the middle of the domain. The grid is uniform on
/// each side of `D/2` with `nodes_per_side` cells.
pub fn reconstruct_eigenfunction(
    traj: &PrueferTrajectory,
    density: &dyn LogDensity,
    trig: &PTrig,
    nodes_per_side: usize,
) -> Result<Eigenfunction> {
    let a = traj.a_hit.ok_or(Error::MissingHit("left"))?;
    let b = traj.b_hit.ok_or(Error::MissingHit("right"))?;
    let p = trig.exponent().get();
    let alpha = traj.alpha;
    let lambda = traj.lambda;
    let m = (0.5 * density.space().diameter()).clamp(a, b);
    let n = nodes_per_side.max(4);

    let mut xs: Vec<f64> = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        xs.push(a + (m - a) * i as f64 / n as f64);
    }
    for i in 0..=n {
        xs.push(m + (b - m) * i as f64 / n as f64);
    }
    xs.dedup();
    let phi: Vec<f64> = xs.iter().map(|&x| traj.phi_at(x)).collect();

    // ln e by Gauss–Legendre on each cell, anchored at m.
    let gl = GaussLegendre::new(6);
    let dlog_e = |x: f64| -> f64 {
        let pt = trig.phase_terms(traj.phi_at(x));
        if pt.abs_cos_p == 0.0 {
            0.0
        } else {
            -density.log_deriv(x) * pt.abs_cos_p / (p - 1.0)
        }
    };
    let k = xs.len();
    let im = xs.iter().position(|&x| x == m).unwrap_or(0);
    let mut log_e = vec![0.0; k];
    for i in im..k - 1 {
        log_e[i + 1] = log_e[i] + gl.integrate(dlog_e, xs[i], xs[i + 1]);
    }
    for i in (0..im).rev() {
        log_e[i] = log_e[i + 1] - gl.integrate(dlog_e, xs[i], xs[i + 1]);
    }

    let mut u = Vec::with_capacity(k);
    let mut du = Vec::with_capacity(k);
    for i in 0..k {
        let pt = trig.phase_terms(phi[i]);
        let e = log_e[i].exp();
        u.push(e * pt.sin / alpha);
        du.push(e * pt.cos);
    }
    let scale = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::DegenerateProblem("reconstructed eigenfunction vanishes".into()));
    }
    for v in u.iter_mut().chain(du.iter_mut()) {
        *v /= scale;
    }

    // residual at cell midpoints
    let q: Vec<f64> = du.iter().map(|&v| spow(v, p - 1.0)).collect();
    let mut residual = 0.0;
    for i in 0..k - 1 {
        let h = xs[i + 1] - xs[i];
        let xm = 0.5 * (xs[i] + xs[i + 1]);
        let dq = (q[i + 1] - q[i]) / h;
        let qm = 0.5 * (q[i] + q[i + 1]);
        let um = 0.5 * (spow(u[i], p - 1.0) + spow(u[i + 1], p - 1.0));
        residual += (dq + density.log_deriv(xm) * qm + lambda * um).abs() * h;
    }

    // constraint by the trapezoid rule on h / max h
    let log_h: Vec<f64> = xs.iter().map(|&x| density.log_h(x)).collect();
    let top = log_h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_h.iter().map(|v| (v - top).exp()).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..k - 1 {
        let h = xs[i + 1] - xs[i];
        num += 0.5 * h * (spow(u[i], p - 1.0) * w[i] + spow(u[i + 1], p - 1.0) * w[i + 1]);
        den += 0.5 * h * (u[i].abs().powf(p) * w[i] + u[i + 1].abs().powf(p) * w[i + 1]);
    }

    Ok(Eigenfunction {
        lambda,
        xs,
        phi,
        u,
        du,
        residual_l1: residual,
        constraint_ratio: num / den,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{ConstantDensity, ModelDensity, ModelKind};
    use crate::geometry::McpSpace;
    use crate::ptrig::PExponent;
    use proptest::prelude::*;

    fn trig(p: f64) -> PTrig {
        PTrig::new(PExponent::new(p).unwrap())
    }

    #[test]
    fn rhs_special_values() {
        let tr = trig(1.5);
        let h = 0.5 * tr.pi();
        assert_eq!(phase_rhs(&tr, 0.0, 0.7, 0.3), 0.7);
        assert_eq!(phase_rhs(&tr, 1e6, 0.7, h), 0.7);
        assert_eq!(phase_rhs(&tr, f64::INFINITY, 0.7, -h), 0.7);
        assert_eq!(phase_rhs(&tr, -5.0, 0.7, 0.0), 0.7);
        assert!(phase_rhs(&tr, 1.0, 0.7, 0.5) > 0.7);
    }

    #[test]
    fn flat_phase_is_linear() {
        let sp = McpSpace::new(0.0, 2.0, 3.0).unwrap();
        let dens = ConstantDensity { space: sp };
        for p in [1.5, 2.0, 3.0] {
            let tr = trig(p);
            let pr = PhaseProblem::new(&tr, &dens, 2.0, Tolerances::default()).unwrap();
            let traj = integrate_symmetric(&pr, 1.5, 0.0).unwrap();
            let half = 0.5 * tr.pi() / pr.alpha();
            assert!((traj.b_hit.unwrap() - (1.5 + half)).abs() < 1e-10);
            assert!((traj.a_hit.unwrap() - (1.5 - half)).abs() < 1e-10);
            assert!((traj.phi_at(1.7) - pr.alpha() * 0.2).abs() < 1e-10);
        }
    }

    #[test]
    fn model_hits_are_symmetric_and_interior() {
        let sp = McpSpace::new(-1.0, 3.0, 1.0).unwrap();
        let dens = ModelDensity::new(sp, ModelKind::Model);
        for p in [1.5, 2.0, 3.0] {
            let tr = trig(p);
            let pr = PhaseProblem::new(&tr, &dens, 200.0, Tolerances::default()).unwrap();
            let traj = integrate_symmetric(&pr, 0.5, 0.0).unwrap();
            let (a, b) = (traj.a_hit.unwrap(), traj.b_hit.unwrap());
            assert!(a > 0.0 && b < 1.0 && a < 0.5 && b > 0.5);
            assert!((a + b - 1.0).abs() < 1e-8, "p={p} a={a} b={b}");
            assert!((traj.phi_at(b) - 0.5 * tr.pi()).abs() < 1e-10);
            assert_eq!(traj.decreasing_samples, 0);
        }
    }

    #[test]
    fn classical_eigenfunction_is_a_sine() {
        // T ≡ 0, p = 2, λ = 1 on [0, π]: u ∝ sin(x - π/2). λ is nudged up so
        // the hits land just inside the interval.
        let sp = McpSpace::new(0.0, 2.0, std::f64::consts::PI).unwrap();
        let dens = ConstantDensity { space: sp };
        let tr = trig(2.0);
        let pr = PhaseProblem::new(&tr, &dens, 1.0 + 1e-9, Tolerances::default()).unwrap();
        let traj = integrate_symmetric(&pr, 0.5 * std::f64::consts::PI, 0.0).unwrap();
        let ef = reconstruct_eigenfunction(&traj, &dens, &tr, 500).unwrap();
        for (x, u) in ef.xs.iter().zip(&ef.u) {
            assert!((u - (x - 0.5 * std::f64::consts::PI).sin()).abs() < 1e-6);
        }
        assert!(ef.du[0].abs() < 1e-9 && ef.du.last().unwrap().abs() < 1e-9);
        assert!(ef.residual_l1 < 1e-4);
        assert!(ef.constraint_ratio.abs() < 1e-8);
    }

    #[test]
    fn missing_hits_are_reported() {
        let sp = McpSpace::new(0.0, 2.0, 1.0).unwrap();
        let dens = ConstantDensity { space: sp };
        let tr = trig(2.0);
        let pr = PhaseProblem::new(&tr, &dens, 0.1, Tolerances::default()).unwrap();
        let traj = integrate_symmetric(&pr, 0.5, 0.0).unwrap();
        assert!(traj.b_hit.is_none());
        assert!(matches!(reconstruct_eigenfunction(&traj, &dens, &tr, 100), Err(Error::MissingHit(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn hits_move_inward_as_lambda_grows(p in 1.3f64..4.0, l1 in 20.0f64..200.0, dl in 1.0f64..100.0) {
            let sp = McpSpace::new(-1.0, 3.0, 1.0).unwrap();
            let dens = ModelDensity::new(sp, ModelKind::Model);
            let tr = trig(p);
            let run = |l: f64| {
                let pr = PhaseProblem::new(&tr, &dens, l, Tolerances::default()).unwrap();
                integrate_symmetric(&pr, 0.5, 0.0).unwrap()
            };
            let (t1, t2) = (run(l1), run(l1 + dl));
            let b1 = t1.b_hit.unwrap_or(f64::INFINITY);
            let b2 = t2.b_hit.unwrap_or(f64::INFINITY);
            prop_assert!(b2 <= b1 + 1e-12);
            let a1 = t1.a_hit.unwrap_or(f64::NEG_INFINITY);
            let a2 = t2.a_hit.unwrap_or(f64::NEG_INFINITY);
            prop_assert!(a2 >= a1 - 1e-12);
        }

        #[test]
        fn smaller_log_derivative_gives_smaller_phase(p in 1.3f64..4.0, lambda in 5.0f64..80.0) {
            // On [D/2, D]: T of H2 ≤ T of H1, seeded at (D/2, 0). While φ ∈ [0, π_p/2]
            // the T-term has the sign of T, so the phase is monotone in T.
            let sp = McpSpace::new(0.0, 3.0, 1.0).unwrap();
            let (h1, h2) = (ModelDensity::new(sp, ModelKind::H1), ModelDensity::new(sp, ModelKind::H2));
            let tr = trig(p);
            let half = 0.5 * tr.pi();
            let p1 = PhaseProblem::new(&tr, &h1, lambda, Tolerances::default()).unwrap();
            let p2 = PhaseProblem::new(&tr, &h2, lambda, Tolerances::default()).unwrap();
            let r1 = p1.integrate(0.5, 0.0, Direction::Forward, None).unwrap();
            let r2 = p2.integrate(0.5, 0.0, Direction::Forward, None).unwrap();
            let end = r1.x_end.min(r2.x_end);
            for i in 0..=50 {
                let x = 0.5 + (end - 0.5) * i as f64 / 50.0;
                let (f1, f2) = (r1.phi_at(x), r2.phi_at(x));
                if f1 <= half && f2 <= half {
                    prop_assert!(f2 <= f1 + 1e-9, "x={} {} {}", x, f1, f2);
                }
            }
        }

        #[test]
        fn hit_depends_continuously_on_lambda(p in 1.5f64..3.0) {
            let sp = McpSpace::new(-1.0, 3.0, 1.0).unwrap();
            let dens = ModelDensity::new(sp, ModelKind::Model);
            let tr = trig(p);
            let b = |l: f64| {
                let pr = PhaseProblem::new(&tr, &dens, l, Tolerances::default()).unwrap();
                integrate_symmetric(&pr, 0.5, 0.0).unwrap().b_hit.unwrap()
            };
            prop_assert!((b(100.0) - b(100.0 + 1e-8)).abs() < 1e-3);
        }
    }
}
