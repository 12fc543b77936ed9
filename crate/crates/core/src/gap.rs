//! Eigenvalue solvers built on the phase equation.
//!
//! [`GapSolver::lambda_hat`] shoots the model log-derivative from the middle
//! of the interval, [`GapSolver::lambda_of_density`] handles any density, and
//! [`GapSolver::lambda_sharp`] takes the infimum over sub-diameters when
//! `K > 0`. All of them bracket the eigenvalue from `λ = 0` and bisect on a
//! predicate that is monotone in `λ`.

use std::fmt;

use rayon::prelude::*;

use crate::density::{mcp_validate, LogDensity, MCPDensity, ModelDensity, ModelKind};
use crate::error::{Error, Result};
use crate::geometry::{McpSpace, Params};
use crate::pruefer::{integrate_symmetric, Direction, PhaseProblem, PrueferTrajectory};
use crate::ptrig::PTrig;

/// Doublings (or halvings) tried before bracketing gives up.
const MAX_BRACKET_STEPS: usize = 64;
/// Default number of sub-diameters scanned by [`GapSolver::lambda_sharp`].
pub const DEFAULT_SCAN_POINTS: usize = 64;
/// Relative width of the golden-section refinement in the sub-diameter scan.
pub const SCAN_REL_TOL: f64 = 1e-6;
/// Smallest scanned sub-diameter, relative to the largest.
const SCAN_RANGE: f64 = 100.0;
/// Local minima of the scan that get refined.
const SCAN_CANDIDATES: usize = 3;

/// How an eigenvalue was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// One-sided or symmetric shooting on the phase.
    Shooting,
    /// Shooting from both ends, matched at `D/2`.
    Matching,
    /// Infimum of model gaps over sub-diameters.
    InfimumScan,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Shooting => "shooting",
            Method::Matching => "matching",
            Method::InfimumScan => "infimum-scan",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the phase trajectory at the upper end of the bracket reaches `∓π_p/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitDiagnostics {
    pub a_hit: Option<f64>,
    pub b_hit: Option<f64>,
    /// `a_hit - 0`.
    pub left_residual: Option<f64>,
    /// `D - b_hit`.
    pub right_residual: Option<f64>,
    /// `φ_left(D/2) - φ_right(D/2)` for two-sided matching.
    pub matching_gap: Option<f64>,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone)]
pub struct GapResult {
    pub lambda: f64,
    /// `lo` fails the hitting predicate, `hi` satisfies it; `lambda = hi`.
    pub bracket: (f64, f64),
    /// Bisection steps, or model solves for an infimum scan.
    pub iterations: usize,
    /// Phase trajectory at `hi`, on `[0, D']` for an infimum scan.
    pub trajectory: PrueferTrajectory,
    pub method: Method,
    /// Sub-diameter attaining the infimum (infimum scans only).
    pub minimizing_diameter: Option<f64>,
    pub diagnostics: HitDiagnostics,
}

/// One model gap sampled by the sub-diameter scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub diameter: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub rows: Vec<ScanPoint>,
    pub nonincreasing: bool,
    /// Checked for `K ≤ 0` only, between distinct diameters.
    pub strictly_decreasing: Option<bool>,
    /// Smallest `(λ_i - λ_{i+1}) / λ_i` over distinct consecutive diameters.
    pub min_relative_drop: f64,
    /// Required relative drop for strict decrease.
    pub margin: f64,
    pub passed: bool,
}

/// Outcome of one shot at a trial `λ`.
struct Shot {
    /// `λ` is at or above the eigenvalue.
    high: bool,
    trajectory: PrueferTrajectory,
    matching_gap: Option<f64>,
    rhs_evals: usize,
}

/// Eigenvalue solver for one exponent, model space and tolerance set.
pub struct GapSolver {
    params: Params,
    trig: PTrig,
}

impl GapSolver {
    pub fn new(params: Params) -> Self {
        let trig = PTrig::with_tolerance(params.p, params.tol.trig_table);
        Self { params, trig }
    }

    /// Reuses an existing table for the same exponent.
    pub fn with_trig(params: Params, trig: PTrig) -> Result<Self> {
        if trig.exponent() != params.p {
            return Err(Error::InvalidParameter(format!(
                "trig table is for p = {}, parameters ask for p = {}",
                trig.exponent().get(),
                params.p.get()
            )));
        }
        Ok(Self { params, trig })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn trig(&self) -> &PTrig {
        &self.trig
    }

    /// `(p-1)(π_p/D)^p`, the gap of `h ≡ 1` on `[0, D]`.
    pub fn flat_gap(&self, diameter: f64) -> f64 {
        let p = self.params.p.get();
        (p - 1.0) * (self.trig.pi() / diameter).powf(p)
    }

    /// Gap of the model density `h_{K,N,D}`, shooting from `(D/2, 0)` in both
    /// directions. The eigenvalue is the least `λ` at which both sides reach
    /// `∓π_p/2` inside `[0, D]`.
    pub fn lambda_hat(&self) -> Result<GapResult> {
        self.lambda_hat_on(self.params.space)
    }

    fn lambda_hat_on(&self, space: McpSpace) -> Result<GapResult> {
        let model = ModelDensity::new(space, ModelKind::Model);
        self.bisect(space, |lambda| self.symmetric_shot(&model, lambda), Method::Shooting)
    }

    /// Gap of a validated MCP density on its own space.
    pub fn lambda_of_density(&self, density: &MCPDensity) -> Result<GapResult> {
        let space = density.space();
        let report = mcp_validate(density, &space)?;
        if !report.passed {
            return Err(Error::NotMcp {
                curvature: space.curvature(),
                dimension: space.dimension(),
                violation: report.worst(),
            });
        }
        self.lambda_of(density)
    }

    /// Gap of any density, without validation.
    ///
    /// Shoots forward from `(ε, -π_p/2)` when `T` is bounded at the right
    /// end. A right end where `T → -∞` repels forward trajectories, so then
    /// both ends are shot towards `D/2` and the phases are matched there.
    pub fn lambda_of(&self, density: &dyn LogDensity) -> Result<GapResult> {
        let space = density.space();
        if uses_matching(density) {
            self.bisect(space, |lambda| self.matching_shot(density, lambda), Method::Matching)
        } else {
            self.bisect(space, |lambda| self.forward_shot(density, lambda), Method::Shooting)
        }
    }

    /// Phase of the model density at a given `λ`, seeded at `(D/2, 0)`.
    pub fn model_trajectory(&self, lambda: f64) -> Result<PrueferTrajectory> {
        let model = ModelDensity::new(self.params.space, ModelKind::Model);
        Ok(self.symmetric_shot(&model, lambda)?.trajectory)
    }

    /// Phase of a density at a given `λ`, seeded as in [`lambda_of`](Self::lambda_of).
    pub fn density_trajectory(&self, density: &dyn LogDensity, lambda: f64) -> Result<PrueferTrajectory> {
        let shot = if uses_matching(density) {
            self.matching_shot(density, lambda)?
        } else {
            self.forward_shot(density, lambda)?
        };
        Ok(shot.trajectory)
    }

    fn seed(&self, d: f64) -> f64 {
        let tol = &self.params.tol;
        (tol.seed_offset * d).max(tol.endpoint_guard * d)
    }

    fn symmetric_shot(&self, density: &dyn LogDensity, lambda: f64) -> Result<Shot> {
        let m = 0.5 * density.space().diameter();
        let problem = PhaseProblem::new(&self.trig, density, lambda, self.params.tol)?;
        let trajectory = integrate_symmetric(&problem, m, 0.0)?;
        let rhs_evals = trajectory.rhs_evals();
        Ok(Shot {
            high: trajectory.a_hit.is_some() && trajectory.b_hit.is_some(),
            trajectory,
            matching_gap: None,
            rhs_evals,
        })
    }

    fn forward_shot(&self, density: &dyn LogDensity, lambda: f64) -> Result<Shot> {
        let half_pi = 0.5 * self.trig.pi();
        let seed = self.seed(density.space().diameter());
        let problem = PhaseProblem::new(&self.trig, density, lambda, self.params.tol)?;
        let run = problem.integrate(seed, -half_pi, Direction::Forward, None)?;
        let high = run.hit.is_some() || run.phi_end >= half_pi;
        let rhs_evals = run.rhs_evals;
        let trajectory = PrueferTrajectory::from_runs(&problem, vec![run]);
        Ok(Shot { high, trajectory, matching_gap: None, rhs_evals })
    }

    fn matching_shot(&self, density: &dyn LogDensity, lambda: f64) -> Result<Shot> {
        let half_pi = 0.5 * self.trig.pi();
        let d = density.space().diameter();
        let seed = self.seed(d);
        let m = 0.5 * d;
        let problem = PhaseProblem::new(&self.trig, density, lambda, self.params.tol)?;
        let left = problem.integrate(seed, -half_pi, Direction::Forward, Some(m))?;
        let right = problem.integrate(d - seed, half_pi, Direction::Backward, Some(m))?;
        let early = left.hit.is_some() || right.hit.is_some();
        let gap = left.phi_end - right.phi_end;
        let rhs_evals = left.rhs_evals + right.rhs_evals;
        let trajectory = PrueferTrajectory::from_runs(&problem, vec![left, right]);
        Ok(Shot {
            high: early || gap >= 0.0,
            trajectory,
            matching_gap: (!early).then_some(gap),
            rhs_evals,
        })
    }

    /// Brackets from `λ = 0` and bisects to `hi - lo ≤ eigen_rel·hi`.
    fn bisect<F>(&self, space: McpSpace, shoot: F, method: Method) -> Result<GapResult>
    where
        F: Fn(f64) -> Result<Shot>,
    {
        let rel = self.params.tol.eigen_rel;
        let mut evals = 0;
        let mut lo = 0.0;
        let mut hi = self.flat_gap(space.diameter());
        let mut best = shoot(hi)?;
        evals += best.rhs_evals;
        if best.high {
            // tighten lo from below before bisecting
            for _ in 0..MAX_BRACKET_STEPS {
                let trial = 0.5 * hi;
                let shot = shoot(trial)?;
                evals += shot.rhs_evals;
                if shot.high {
                    hi = trial;
                    best = shot;
                } else {
                    lo = trial;
                    break;
                }
            }
        } else {
            let mut found = false;
            for _ in 0..MAX_BRACKET_STEPS {
                lo = hi;
                hi *= 2.0;
                let shot = shoot(hi)?;
                evals += shot.rhs_evals;
                if shot.high {
                    best = shot;
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(Error::Bracketing { lambda_max: hi });
            }
        }

        let mut iterations = 0;
        while hi - lo > rel * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let shot = shoot(mid)?;
            evals += shot.rhs_evals;
            iterations += 1;
            if shot.high {
                hi = mid;
                best = shot;
            } else {
                lo = mid;
            }
        }

        let d = space.diameter();
        let traj = best.trajectory;
        let diagnostics = HitDiagnostics {
            a_hit: traj.a_hit,
            b_hit: traj.b_hit,
            left_residual: traj.a_hit,
            right_residual: traj.b_hit.map(|b| d - b),
            matching_gap: best.matching_gap,
            rhs_evals: evals,
        };
        Ok(GapResult {
            lambda: hi,
            bracket: (lo, hi),
            iterations,
            trajectory: traj,
            method,
            minimizing_diameter: None,
            diagnostics,
        })
    }

    /// The sharp gap over the class: `λ̂` itself for `K ≤ 0`, and the
    /// infimum of `λ̂_{K,N,D'}` over `D' ∈ (0, min(D, D_{K,N})]` for `K > 0`.
    pub fn lambda_sharp(&self) -> Result<GapResult> {
        self.lambda_sharp_with(DEFAULT_SCAN_POINTS)
    }

    pub fn lambda_sharp_with(&self, scan_points: usize) -> Result<GapResult> {
        let space = self.params.space;
        if space.curvature() <= 0.0 {
            return self.lambda_hat();
        }
        if scan_points < 3 {
            return Err(Error::InvalidParameter(format!("scan needs at least 3 points, got {scan_points}")));
        }
        let d_max = space.diameter().min(space.diameter_bound());
        let grid = log_grid(d_max / SCAN_RANGE, d_max, scan_points);
        let solve = |dp: f64| -> Result<GapResult> { self.lambda_hat_on(space.with_diameter(dp)?) };

        let scanned: Vec<GapResult> = grid.par_iter().map(|&dp| solve(dp)).collect::<Result<_>>()?;
        let values: Vec<f64> = scanned.iter().map(|r| r.lambda).collect();
        let mut solves = scanned.len();

        let mut minima: Vec<usize> = (0..values.len())
            .filter(|&i| {
                let left = i == 0 || values[i] <= values[i - 1];
                let right = i + 1 == values.len() || values[i] <= values[i + 1];
                left && right
            })
            .collect();
        minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        minima.truncate(SCAN_CANDIDATES);

        let refined: Vec<(usize, Vec<(f64, GapResult)>)> = minima
            .par_iter()
            .map(|&i| {
                let a = grid[i.saturating_sub(1)];
                let b = grid[(i + 1).min(grid.len() - 1)];
                golden_section(&solve, a, b, SCAN_REL_TOL).map(|pts| (i, pts))
            })
            .collect::<Result<_>>()?;

        let mut candidates: Vec<(f64, GapResult)> = grid.iter().copied().zip(scanned).collect();
        for (_, pts) in refined {
            solves += pts.len();
            candidates.extend(pts);
        }
        let (dp, best) = candidates
            .into_iter()
            .min_by(|(da, ra), (db, rb)| ra.lambda.total_cmp(&rb.lambda).then(da.total_cmp(db)))
            .expect("scan is nonempty");

        Ok(GapResult {
            iterations: solves,
            method: Method::InfimumScan,
            minimizing_diameter: Some(dp),
            ..best
        })
    }

    /// Sharp gaps along an increasing diameter grid, checked for
    /// monotonicity; strict decrease is required for `K ≤ 0`.
    pub fn monotonicity_audit(&self, diameters: &[f64]) -> Result<MonotonicityReport> {
        if diameters.is_empty() {
            return Err(Error::InvalidParameter("empty diameter grid".into()));
        }
        if diameters.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("diameter grid must be nondecreasing".into()));
        }
        let space = self.params.space;
        let rows: Vec<ScanPoint> = diameters
            .par_iter()
            .map(|&d| {
                let solver = GapSolver {
                    params: self.params.with_space(space.with_diameter(d)?),
                    trig: self.trig.clone(),
                };
                solver.lambda_sharp().map(|r| ScanPoint { diameter: d, lambda: r.lambda })
            })
            .collect::<Result<_>>()?;

        let rel = self.params.tol.eigen_rel;
        let margin = 10.0 * rel;
        // the K > 0 infimum is only located to the scan tolerance
        let slack = if space.curvature() > 0.0 { SCAN_REL_TOL } else { 2.0 * rel };
        let mut nonincreasing = true;
        let mut strict = true;
        let mut min_drop = f64::INFINITY;
        for w in rows.windows(2) {
            let drop = (w[0].lambda - w[1].lambda) / w[0].lambda;
            if w[1].diameter == w[0].diameter {
                nonincreasing &= drop.abs() <= slack;
                continue;
            }
            nonincreasing &= drop >= -slack;
            strict &= drop > margin;
            min_drop = min_drop.min(drop);
        }
        let strictly_decreasing = (space.curvature() <= 0.0).then_some(strict);
        let passed = nonincreasing && strictly_decreasing.unwrap_or(true);
        Ok(MonotonicityReport {
            rows,
            nonincreasing,
            strictly_decreasing,
            min_relative_drop: min_drop,
            margin,
            passed,
        })
    }
}

fn uses_matching(density: &dyn LogDensity) -> bool {
    density.singular_ends().1
}

/// `n` points from `a` to `b`, equally spaced in `ln x`, with exact ends.
fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let mut out: Vec<f64> = (0..n).map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp()).collect();
    out[0] = a;
    out[n - 1] = b;
    out
}

/// Golden-section search for a minimum of `f` on `[a, b]`; returns every
/// evaluated point.
fn golden_section<F>(f: &F, mut a: f64, mut b: f64, rel: f64) -> Result<Vec<(f64, GapResult)>>
where
    F: Fn(f64) -> Result<GapResult>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut out = Vec::new();
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > rel * b {
        if fc.lambda <= fd.lambda {
            b = d;
            out.push((d, fd));
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            out.push((c, fc));
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    out.push((c, fc));
    out.push((d, fd));
    Ok(out)
}

/// [`GapSolver::lambda_hat`] with a fresh table.
pub fn lambda_hat(params: &Params) -> Result<GapResult> {
    GapSolver::new(*params).lambda_hat()
}

/// [`GapSolver::lambda_of_density`] with a fresh table.
pub fn lambda_of_density(density: &MCPDensity, params: &Params) -> Result<GapResult> {
    GapSolver::new(*params).lambda_of_density(density)
}

/// [`GapSolver::lambda_sharp`] with a fresh table.
pub fn lambda_sharp(params: &Params) -> Result<GapResult> {
    GapSolver::new(*params).lambda_sharp()
}

/// [`GapSolver::monotonicity_audit`] with a fresh table.
pub fn monotonicity_audit(params: &Params, diameters: &[f64]) -> Result<MonotonicityReport> {
    GapSolver::new(*params).monotonicity_audit(diameters)
}
