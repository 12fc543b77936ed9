//! One-dimensional MCP(K, N) densities.
//!
//! A density is handled through its logarithm: every solver consumes the
//! log-derivative `T = (ln h)'`, and working with `ln h` keeps densities that
//! vanish polynomially at an endpoint representable.
//!
//! [`MCPDensity`] is the sampled form (nodes, `ln h`, `T`). Closed-form
//! densities ([`ModelDensity`], [`MixtureDensity`], [`ConstantDensity`])
//! implement the same [`LogDensity`] trait and can be sampled onto a grid.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{cot_knd, ln_s_kappa, model_log_h, model_log_h1, model_log_h2, model_t, McpSpace};
use crate::quad::GaussLegendre;

/// Default number of grid nodes.
pub const DEFAULT_NODES: usize = 4097;

/// Default pass threshold of [`mcp_validate`], in log space.
pub const DEFAULT_VALIDATION_TOL: f64 = 1e-9;

/// Long-range pairs checked per node by [`mcp_validate`].
const LONG_RANGE_PAIRS: usize = 10;

/// A density on `[0, D]` known through `ln h` and `T = (ln h)'`.
pub trait LogDensity: Send + Sync {
    fn space(&self) -> McpSpace;

    /// `ln h(x)`; `-∞` where `h` vanishes (only at the endpoints).
    fn log_h(&self, x: f64) -> f64;

    /// `T(x)`; may be infinite at the endpoints.
    fn log_deriv(&self, x: f64) -> f64;

    /// Interior points where `T` may jump.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    /// Whether `T` is unbounded at the left and right end.
    fn singular_ends(&self) -> (bool, bool) {
        let d = self.space().diameter();
        (!self.log_deriv(0.0).is_finite(), !self.log_deriv(d).is_finite())
    }
}

/// `h ≡ 1`. An MCP density whenever `0 ∈ [-cot(D - x), cot(x)]` on `[0, D]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantDensity {
    pub space: McpSpace,
}

impl LogDensity for ConstantDensity {
    fn space(&self) -> McpSpace {
        self.space
    }

    fn log_h(&self, _x: f64) -> f64 {
        0.0
    }

    fn log_deriv(&self, _x: f64) -> f64 {
        0.0
    }
}

/// Which comparison density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `s_κ(x)^{N-1}`, saturating the upper bound on `T`.
    H1,
    /// `s_κ(D - x)^{N-1}`, saturating the lower bound.
    H2,
    /// `H2` on `[0, D/2]` glued to `H1` on `[D/2, D]`.
    Model,
}

/// Closed-form comparison densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelDensity {
    pub space: McpSpace,
    pub kind: ModelKind,
}

impl ModelDensity {
    pub fn new(space: McpSpace, kind: ModelKind) -> Self {
        Self { space, kind }
    }
}

impl LogDensity for ModelDensity {
    fn space(&self) -> McpSpace {
        self.space
    }

    fn log_h(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, self.space.diameter());
        match self.kind {
            ModelKind::H1 => model_log_h1(x, &self.space),
            ModelKind::H2 => model_log_h2(x, &self.space),
            ModelKind::Model => model_log_h(x, &self.space),
        }
        .unwrap_or(f64::NAN)
    }

    fn log_deriv(&self, x: f64) -> f64 {
        let s = &self.space;
        let x = x.clamp(0.0, s.diameter());
        let (k, n, d) = (s.curvature(), s.dimension(), s.diameter());
        match self.kind {
            ModelKind::H1 => cot_knd(x, k, n),
            ModelKind::H2 => cot_knd(d - x, k, n).map(|c| -c),
            ModelKind::Model => model_t(x, s),
        }
        .unwrap_or(f64::NAN)
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            ModelKind::Model if !self.space.is_maximal() => vec![0.5 * self.space.diameter()],
            _ => Vec::new(),
        }
    }
}

/// Weight `θ: [0, D] → [0, 1]` mixing the two bounds on `T`:
/// `T = θ cot(x) - (1 - θ) cot(D - x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingProfile {
    Constant(f64),
    /// `0` on `[0, D/2)`, `1` on `[D/2, D]`: the model density.
    MidStep,
    /// Bernstein polynomial in `x/D` with coefficients in `[0, 1]`.
    Bernstein(Vec<f64>),
    /// `1 / (1 + exp(-(x/D - center)/width))`.
    Logistic { center: f64, width: f64 },
}

impl MixingProfile {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Constant(c) => (0.0..=1.0).contains(c),
            Self::MidStep => true,
            Self::Bernstein(cs) => !cs.is_empty() && cs.iter().all(|c| (0.0..=1.0).contains(c)),
            Self::Logistic { center, width } => center.is_finite() && *width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("mixing profile {self:?} is not [0, 1]-valued")))
        }
    }

    /// `θ` at the relative position `u = x/D`.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::MidStep => {
                if u < 0.5 {
                    0.0
                } else {
                    1.0
                }
            }
            Self::Bernstein(cs) => bernstein(cs, u),
            Self::Logistic { center, width } => 1.0 / (1.0 + (-(u - center) / width).exp()),
        }
    }

    /// `dθ/du`.
    pub fn derivative(&self, u: f64) -> f64 {
        match self {
            Self::Constant(_) | Self::MidStep => 0.0,
            Self::Bernstein(cs) => {
                let n = cs.len() - 1;
                if n == 0 {
                    return 0.0;
                }
                let diffs: Vec<f64> = cs.windows(2).map(|w| w[1] - w[0]).collect();
                n as f64 * bernstein(&diffs, u)
            }
            Self::Logistic { width, .. } => {
                let th = self.eval(u);
                th * (1.0 - th) / width
            }
        }
    }

    fn jumps(&self) -> Vec<f64> {
        match self {
            Self::MidStep => vec![0.5],
            _ => Vec::new(),
        }
    }
}

fn bernstein(cs: &[f64], u: f64) -> f64 {
    // de Casteljau
    let mut b = cs.to_vec();
    let n = b.len();
    for r in 1..n {
        for i in 0..n - r {
            b[i] = (1.0 - u) * b[i] + u * b[i + 1];
        }
    }
    b[0]
}

/// Closed-form MCP density given by a mixing profile. `ln h` is anchored to
/// `0` at `D/2`.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    space: McpSpace,
    profile: MixingProfile,
    gl: GaussLegendre,
}

impl MixtureDensity {
    pub fn new(space: McpSpace, profile: MixingProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self { space, profile, gl: GaussLegendre::new(10) })
    }

    pub fn profile(&self) -> &MixingProfile {
        &self.profile
    }

    fn theta(&self, x: f64) -> f64 {
        self.profile.eval(x / self.space.diameter())
    }

    /// `cot_{K,N,D}(y) - (N-1)/y`, bounded near `y = 0`.
    fn cot_regular(&self, y: f64) -> f64 {
        let s = &self.space;
        cot_knd(y, s.curvature(), s.dimension()).unwrap_or(f64::NAN) - (s.dimension() - 1.0) / y
    }

    /// `∫_a^b T`, with the `1/x` and `1/(D - x)` parts integrated in closed form.
    fn increment(&self, a: f64, b: f64) -> f64 {
        let s = &self.space;
        let d = s.diameter();
        let n1 = s.dimension() - 1.0;
        let th0 = self.theta(0.0);
        let om_d = 1.0 - self.theta(d);
        let smooth = self.gl.integrate(
            |x| {
                let th = self.theta(x);
                n1 * (th - th0) / x + th * self.cot_regular(x)
                    - n1 * ((1.0 - th) - om_d) / (d - x)
                    - (1.0 - th) * self.cot_regular(d - x)
            },
            a,
            b,
        );
        let mut total = smooth;
        if th0 != 0.0 {
            total += n1 * th0 * (b / a).ln();
        }
        if om_d != 0.0 {
            total -= n1 * om_d * ((d - a) / (d - b)).ln();
        }
        total
    }

    /// Samples onto `nodes` uniform points (an even number of cells, so that
    /// `D/2` is a node).
    pub fn to_grid(&self, nodes: usize) -> Result<MCPDensity> {
        if self.space.is_maximal() {
            return MCPDensity::sample(&ModelDensity::new(self.space, ModelKind::H1), nodes);
        }
        let cells = even_cells(nodes)?;
        let d = self.space.diameter();
        let xs = uniform_nodes(d, cells);
        let mid = cells / 2;
        let mut log_h = vec![0.0; cells + 1];
        for i in mid..cells {
            log_h[i + 1] = log_h[i] + self.increment(xs[i], xs[i + 1]);
        }
        for i in (0..mid).rev() {
            log_h[i] = log_h[i + 1] - self.increment(xs[i], xs[i + 1]);
        }
        let log_deriv = xs.iter().map(|&x| self.log_deriv(x)).collect();
        MCPDensity::from_parts(self.space, xs, log_h, log_deriv)
    }
}

impl LogDensity for MixtureDensity {
    fn space(&self) -> McpSpace {
        self.space
    }

    fn log_h(&self, x: f64) -> f64 {
        let s = &self.space;
        let d = s.diameter();
        if s.is_maximal() {
            return model_log_h1(x, s).unwrap_or(f64::NAN);
        }
        let x = x.clamp(0.0, d);
        let m = 0.5 * d;
        let panels = ((x - m).abs() / d * 256.0).ceil().max(1.0) as usize;
        let mut total = 0.0;
        for j in 0..panels {
            let a = m + (x - m) * j as f64 / panels as f64;
            let b = m + (x - m) * (j + 1) as f64 / panels as f64;
            total += if b >= a { self.increment(a, b) } else { -self.increment(b, a) };
        }
        total
    }

    fn log_deriv(&self, x: f64) -> f64 {
        let s = &self.space;
        let (k, n, d) = (s.curvature(), s.dimension(), s.diameter());
        let x = x.clamp(0.0, d);
        if s.is_maximal() {
            return cot_knd(x, k, n).unwrap_or(f64::NAN);
        }
        let th = self.theta(x);
        let mut t = 0.0;
        if x == 0.0 && th == 0.0 {
            // θ cot(x) → (N-1) θ'(0)
            t += (n - 1.0) * self.profile.derivative(0.0) / d;
        } else if th != 0.0 {
            t += th * cot_knd(x, k, n).unwrap_or(f64::NAN);
        }
        if x == d && th == 1.0 {
            // (1 - θ) cot(D - x) → (N-1) θ'(D)
            t -= (n - 1.0) * self.profile.derivative(1.0) / d;
        } else if th != 1.0 {
            t -= (1.0 - th) * cot_knd(d - x, k, n).unwrap_or(f64::NAN);
        }
        t
    }

    fn breakpoints(&self) -> Vec<f64> {
        let d = self.space.diameter();
        self.profile.jumps().into_iter().map(|u| u * d).collect()
    }
}

/// A density sampled on a grid `0 = x_0 < … < x_M = D`.
///
/// Between nodes, `ln h` is the cubic Hermite interpolant of the node values
/// with slopes `T`, and `T` is its derivative; `T` therefore integrates to
/// `ln h` exactly. An end cell whose end node carries an infinite `T` or
/// `ln h` uses a power law `h ∝ x^c` (resp. `(D - x)^c`) matched at the
/// inner node.
#[derive(Debug, Clone, PartialEq)]
pub struct MCPDensity {
    space: McpSpace,
    xs: Vec<f64>,
    log_h: Vec<f64>,
    log_deriv: Vec<f64>,
}

impl MCPDensity {
    /// Checks the grid against `space` and the values for holes. Missing
    /// (`NaN`) log-derivatives are filled by finite differences of `ln h`.
    pub fn from_parts(space: McpSpace, xs: Vec<f64>, log_h: Vec<f64>, mut log_deriv: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 3 {
            return Err(Error::GridMismatch(format!("need at least 3 nodes, got {n}")));
        }
        if log_h.len() != n || log_deriv.len() != n {
            return Err(Error::GridMismatch(format!(
                "{n} nodes but {} log_h and {} log_deriv values",
                log_h.len(),
                log_deriv.len()
            )));
        }
        let d = space.diameter();
        if xs[0] != 0.0 {
            return Err(Error::GridMismatch(format!("first node is {} instead of 0", xs[0])));
        }
        if (xs[n - 1] - d).abs() > 1e-12 * d {
            return Err(Error::GridMismatch(format!("last node {} does not match D = {d}", xs[n - 1])));
        }
        if let Some(i) = xs.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::GridMismatch(format!("nodes not strictly increasing at index {}", i + 1)));
        }
        let mut xs = xs;
        xs[n - 1] = d;

        for i in 0..n {
            let v = log_h[i];
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::InvalidDensity(format!("ln h at node {i} is {v}")));
            }
            if v == f64::NEG_INFINITY && i != 0 && i != n - 1 {
                return Err(Error::InvalidDensity(format!(
                    "density vanishes at interior node {i} (x = {}); support must be an interval",
                    xs[i]
                )));
            }
        }
        for i in 0..n {
            if log_deriv[i].is_nan() {
                log_deriv[i] = finite_difference(&xs, &log_h, i);
            }
            if !log_deriv[i].is_finite() && i != 0 && i != n - 1 {
                return Err(Error::InvalidDensity(format!("log-derivative at interior node {i} is not finite")));
            }
        }
        let density = Self { space, xs, log_h, log_deriv };
        let mass = density.mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidDensity(format!("total mass {mass} (relative to max h) is not finite and positive")));
        }
        Ok(density)
    }

    /// Like [`from_parts`](Self::from_parts), then rejects densities failing
    /// [`mcp_validate`].
    pub fn checked(space: McpSpace, xs: Vec<f64>, log_h: Vec<f64>, log_deriv: Vec<f64>) -> Result<Self> {
        let density = Self::from_parts(space, xs, log_h, log_deriv)?;
        let report = mcp_validate(&density, &space)?;
        if !report.passed {
            return Err(Error::NotMcp {
                curvature: space.curvature(),
                dimension: space.dimension(),
                violation: report.worst(),
            });
        }
        Ok(density)
    }

    /// Samples any [`LogDensity`] on `nodes` uniform points. `D/2` is a node.
    pub fn sample(source: &dyn LogDensity, nodes: usize) -> Result<Self> {
        let space = source.space();
        let cells = even_cells(nodes)?;
        let xs = uniform_nodes(space.diameter(), cells);
        let log_h = xs.iter().map(|&x| source.log_h(x)).collect();
        let log_deriv = xs.iter().map(|&x| source.log_deriv(x)).collect();
        Self::from_parts(space, xs, log_h, log_deriv)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn log_h_values(&self) -> &[f64] {
        &self.log_h
    }

    pub fn log_deriv_values(&self) -> &[f64] {
        &self.log_deriv
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// `h` at the nodes, scaled so that its maximum is 1.
    pub fn normalized_h(&self) -> Vec<f64> {
        let top = self.log_h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.log_h.iter().map(|v| (v - top).exp()).collect()
    }

    /// Trapezoid mass of `h / max h`.
    pub fn mass(&self) -> f64 {
        let h = self.normalized_h();
        self.xs.windows(2).zip(h.windows(2)).map(|(x, w)| 0.5 * (x[1] - x[0]) * (w[0] + w[1])).sum()
    }

    /// Largest mismatch between `Δ ln h` and Simpson's rule for `∫ T` over
    /// consecutive cell pairs with finite values, relative to `1 + |Δ ln h|`.
    pub fn consistency_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.xs.len().saturating_sub(2) {
            let t = &self.log_deriv[i..i + 3];
            let l = &self.log_h[i..i + 3];
            if !t.iter().chain(l).all(|v| v.is_finite()) {
                continue;
            }
            let (h0, h1) = (self.xs[i + 1] - self.xs[i], self.xs[i + 2] - self.xs[i + 1]);
            if (h0 - h1).abs() > 1e-9 * h0 {
                continue;
            }
            let quad = h0 / 3.0 * (t[0] + 4.0 * t[1] + t[2]);
            let delta = l[2] - l[0];
            worst = worst.max((delta - quad).abs() / (1.0 + delta.abs()));
        }
        worst
    }

    fn left_power(&self) -> Option<f64> {
        if self.log_h[0].is_finite() && self.log_deriv[0].is_finite() {
            None
        } else {
            Some(self.log_deriv[1] * self.xs[1])
        }
    }

    fn right_power(&self) -> Option<f64> {
        let n = self.xs.len();
        if self.log_h[n - 1].is_finite() && self.log_deriv[n - 1].is_finite() {
            None
        } else {
            Some(-self.log_deriv[n - 2] * (self.xs[n - 1] - self.xs[n - 2]))
        }
    }

    #[inline]
    fn cell(&self, x: f64) -> usize {
        let n = self.xs.len();
        self.xs.partition_point(|&v| v <= x).clamp(1, n - 1) - 1
    }
}

impl LogDensity for MCPDensity {
    fn space(&self) -> McpSpace {
        self.space
    }

    fn log_h(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let x = x.clamp(0.0, self.space.diameter());
        let i = self.cell(x);
        if i == 0 {
            if let Some(c) = self.left_power() {
                return self.log_h[1] + c * (x / self.xs[1]).ln();
            }
        }
        if i == n - 2 {
            if let Some(c) = self.right_power() {
                let d = self.space.diameter();
                return self.log_h[n - 2] + c * ((d - x) / (d - self.xs[n - 2])).ln();
            }
        }
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.log_h[i]
            + (t3 - 2.0 * t2 + t) * h * self.log_deriv[i]
            + (-2.0 * t3 + 3.0 * t2) * self.log_h[i + 1]
            + (t3 - t2) * h * self.log_deriv[i + 1]
    }

    fn log_deriv(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let x = x.clamp(0.0, self.space.diameter());
        let i = self.cell(x);
        if i == 0 {
            if let Some(c) = self.left_power() {
                return c / x;
            }
        }
        if i == n - 2 {
            if let Some(c) = self.right_power() {
                return -c / (self.space.diameter() - x);
            }
        }
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * self.log_h[i]
            + (3.0 * t2 - 4.0 * t + 1.0) * h * self.log_deriv[i]
            + (-6.0 * t2 + 6.0 * t) * self.log_h[i + 1]
            + (3.0 * t2 - 2.0 * t) * h * self.log_deriv[i + 1])
            / h
    }

    fn singular_ends(&self) -> (bool, bool) {
        (self.left_power().is_some(), self.right_power().is_some())
    }
}

fn finite_difference(xs: &[f64], ys: &[f64], i: usize) -> f64 {
    let n = xs.len();
    let (a, b) = if i == 0 {
        (0, 1)
    } else if i == n - 1 {
        (n - 2, n - 1)
    } else {
        (i - 1, i + 1)
    };
    (ys[b] - ys[a]) / (xs[b] - xs[a])
}

fn even_cells(nodes: usize) -> Result<usize> {
    if nodes < 3 {
        return Err(Error::InvalidParameter(format!("need at least 3 grid nodes, got {nodes}")));
    }
    let cells = nodes - 1;
    Ok(cells + cells % 2)
}

fn uniform_nodes(d: f64, cells: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=cells).map(|i| d * i as f64 / cells as f64).collect();
    xs[cells] = d;
    xs
}

/// Outcome of [`mcp_validate`]. Violations are measured in log space and are
/// invariant under multiplying `h` by a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    /// Worst increase of `ln(s_κ(D-x)^{N-1}/h)` or decrease of `ln(s_κ(x)^{N-1}/h)`
    /// over the checked pairs.
    pub ratio_violation: f64,
    /// Worst relative excursion of `T` outside `[-cot(D - x), cot(x)]`.
    pub derivative_violation: f64,
    pub ratio_passed: bool,
    pub derivative_passed: bool,
    pub pairs_checked: usize,
    /// Abscissa of the worst ratio violation.
    pub worst_at: Option<f64>,
    pub tolerance: f64,
}

impl ValidationReport {
    pub fn worst(&self) -> f64 {
        self.ratio_violation.max(self.derivative_violation)
    }
}

/// Checks the two-sided MCP(K, N) ratio bounds on consecutive and random
/// long-range node pairs, and the pointwise log-derivative bounds.
pub fn mcp_validate(density: &MCPDensity, space: &McpSpace) -> Result<ValidationReport> {
    mcp_validate_with(density, space, DEFAULT_VALIDATION_TOL)
}

pub fn mcp_validate_with(density: &MCPDensity, space: &McpSpace, tol: f64) -> Result<ValidationReport> {
    let d = space.diameter();
    let xs = density.nodes();
    let n = xs.len();
    if (xs[n - 1] - d).abs() > 1e-12 * d {
        return Err(Error::GridMismatch(format!("density ends at {} but D = {d}", xs[n - 1])));
    }
    let kappa = space.kappa();
    let n1 = space.dimension() - 1.0;
    let (k, dim) = (space.curvature(), space.dimension());

    // A(x) = (N-1) ln s(D-x) - ln h must not increase,
    // B(x) = (N-1) ln s(x) - ln h must not decrease.
    let mut a = vec![f64::NAN; n];
    let mut b = vec![f64::NAN; n];
    for i in 0..n {
        let lh = density.log_h[i];
        let sa = ln_s_kappa((d - xs[i]).max(0.0), kappa).unwrap_or(f64::NAN);
        let sb = ln_s_kappa(xs[i], kappa).unwrap_or(f64::NAN);
        if lh.is_finite() && sa.is_finite() && sb.is_finite() {
            a[i] = n1 * sa - lh;
            b[i] = n1 * sb - lh;
        }
    }
    let valid: Vec<usize> = (0..n).filter(|&i| a[i].is_finite()).collect();

    let mut ratio_violation: f64 = 0.0;
    let mut worst_at = None;
    let mut pairs = 0usize;
    let mut check = |i: usize, j: usize, pairs: &mut usize| {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let v = (a[hi] - a[lo]).max(b[lo] - b[hi]);
        *pairs += 1;
        if v > ratio_violation {
            ratio_violation = v;
            worst_at = Some(xs[hi]);
        }
    };
    for w in valid.windows(2) {
        check(w[0], w[1], &mut pairs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed0f9a9);
    if valid.len() > 2 {
        for &i in &valid {
            for _ in 0..LONG_RANGE_PAIRS {
                let j = valid[rng.gen_range(0..valid.len())];
                if j != i {
                    check(i, j, &mut pairs);
                }
            }
        }
    }

    let mut derivative_violation: f64 = 0.0;
    for i in 1..n - 1 {
        let t = density.log_deriv[i];
        let upper = cot_knd(xs[i], k, dim).unwrap_or(f64::NAN);
        let lower = -cot_knd(d - xs[i], k, dim).unwrap_or(f64::NAN);
        let scale = 1.0 + upper.abs().max(lower.abs());
        let v = ((t - upper).max(lower - t)) / scale;
        if v.is_finite() {
            derivative_violation = derivative_violation.max(v);
        }
    }

    let ratio_passed = ratio_violation <= tol;
    let derivative_passed = derivative_violation <= tol;
    Ok(ValidationReport {
        passed: ratio_passed && derivative_passed,
        ratio_violation,
        derivative_violation,
        ratio_passed,
        derivative_passed,
        pairs_checked: pairs,
        worst_at,
        tolerance: tol,
    })
}

/// Random MCP density from a Bernstein mixing profile whose `degree + 1`
/// coefficients are uniform in `[0, 1]`.
pub fn random_density(space: McpSpace, seed: u64, degree: usize) -> Result<MCPDensity> {
    random_density_with(space, seed, 0, degree, DEFAULT_NODES)
}

/// [`random_density`] drawing from stream `stream` of the generator keyed by
/// `seed`, so that batches can be sampled in parallel reproducibly.
pub fn random_density_with(space: McpSpace, seed: u64, stream: u64, degree: usize, nodes: usize) -> Result<MCPDensity> {
    let profile = random_profile(seed, stream, degree);
    MixtureDensity::new(space, profile)?.to_grid(nodes)
}

/// The Bernstein profile used by [`random_density_with`].
pub fn random_profile(seed: u64, stream: u64, degree: usize) -> MixingProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    MixingProfile::Bernstein((0..=degree).map(|_| rng.gen::<f64>()).collect())
}

/// `h̄(x) = h(x D/D_new)` on `[0, D_new]`, an MCP density for the curvature
/// `K (D/D_new)^2`.
pub fn rescale_density(density: &MCPDensity, new_diameter: f64) -> Result<MCPDensity> {
    let space = density.space.rescaled(new_diameter)?;
    let ratio = new_diameter / density.space.diameter();
    let xs = density.xs.iter().map(|x| x * ratio).collect();
    let log_deriv = density.log_deriv.iter().map(|t| t / ratio).collect();
    MCPDensity::from_parts(space, xs, density.log_h.clone(), log_deriv)
}

/// Mollifies `T` with a compact bump of half-width `min(width, x/2, (D-x)/2)`
/// and re-integrates `ln h` from the middle node, where it is left unchanged.
pub fn smooth_density(density: &MCPDensity, width: f64) -> Result<MCPDensity> {
    let d = density.space.diameter();
    if !(width >= 0.0) || width > 0.25 * d {
        return Err(Error::InvalidParameter(format!("mollifier width {width} must lie in [0, D/4] with D = {d}")));
    }
    if width == 0.0 {
        return Ok(density.clone());
    }
    let xs = &density.xs;
    let n = xs.len();
    let gl = GaussLegendre::new(16);
    let bump = |u: f64| if u.abs() < 1.0 { (-1.0 / (1.0 - u * u)).exp() } else { 0.0 };
    let bump_mass = gl.integrate(bump, -1.0, 1.0);

    let mollified = |x: f64| -> f64 {
        let w = width.min(0.5 * x).min(0.5 * (d - x));
        if w <= 0.0 {
            return density.log_deriv(x);
        }
        // Split the window at nodes crossing it coarsely: 8 panels suffice for
        // a window spanning a few cells, more for wide windows.
        let panels = ((2.0 * w / (d / (n - 1) as f64)).ceil() as usize).clamp(8, 512);
        let mut acc = 0.0;
        for j in 0..panels {
            let a = -1.0 + 2.0 * j as f64 / panels as f64;
            let b = a + 2.0 / panels as f64;
            acc += gl.integrate(|u| bump(u) * density.log_deriv(x + w * u), a, b);
        }
        acc / bump_mass
    };

    let mut log_deriv = vec![0.0; n];
    for i in 0..n {
        log_deriv[i] = if i == 0 || i == n - 1 { density.log_deriv[i] } else { mollified(xs[i]) };
    }
    let mid = n / 2;
    let mut log_h = vec![0.0; n];
    log_h[mid] = density.log_h[mid];
    let cell = |i: usize| -> f64 {
        let (a, b) = (xs[i], xs[i + 1]);
        gl.integrate(&mollified, a, b)
    };
    for i in mid..n - 1 {
        log_h[i + 1] = if i + 1 == n - 1 && !density.log_h[n - 1].is_finite() {
            f64::NEG_INFINITY
        } else {
            log_h[i] + cell(i)
        };
    }
    for i in (0..mid).rev() {
        log_h[i] = if i == 0 && !density.log_h[0].is_finite() { f64::NEG_INFINITY } else { log_h[i + 1] - cell(i) };
    }
    MCPDensity::from_parts(density.space, xs.clone(), log_h, log_deriv)
}

/// `max |h_a - h_b|` over the nodes of `a`, with both densities normalized to
/// unit maximum on those nodes.
pub fn uniform_distance(a: &dyn LogDensity, b: &dyn LogDensity, nodes: &[f64]) -> f64 {
    let la: Vec<f64> = nodes.iter().map(|&x| a.log_h(x)).collect();
    let lb: Vec<f64> = nodes.iter().map(|&x| b.log_h(x)).collect();
    let ta = la.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tb = lb.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    la.iter().zip(&lb).map(|(u, v)| ((u - ta).exp() - (v - tb).exp()).abs()).fold(0.0, f64::max)
}

/// Midpoint estimate of `∫_0^D |T_a - T_b|` on `cells` cells.
pub fn log_deriv_l1_distance(a: &dyn LogDensity, b: &dyn LogDensity, cells: usize) -> f64 {
    let d = a.space().diameter();
    let h = d / cells as f64;
    (0..cells)
        .map(|i| {
            let x = (i as f64 + 0.5) * h;
            (a.log_deriv(x) - b.log_deriv(x)).abs() * h
        })
        .sum()
}

/// Midpoint estimate of `∫_0^D |T|`.
pub fn log_deriv_l1_norm(a: &dyn LogDensity, cells: usize) -> f64 {
    let d = a.space().diameter();
    let h = d / cells as f64;
    (0..cells).map(|i| a.log_deriv((i as f64 + 0.5) * h).abs() * h).sum()
}

const CSV_HEADER: [&str; 3] = ["x", "log_h", "log_deriv"];

/// Writes `x,log_h,log_deriv` with 17 significant digits.
pub fn write_density<W: Write>(density: &MCPDensity, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_io)?;
    for i in 0..density.len() {
        w.write_record([
            fmt_f64(density.xs[i]),
            fmt_f64(density.log_h[i]),
            fmt_f64(density.log_deriv[i]),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a density file for the given space. Parse failures report the
/// 1-based line number.
pub fn read_density<R: Read>(input: R, space: &McpSpace) -> Result<MCPDensity> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = r.headers().map_err(|e| parse_error(&e, 1))?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse { line: 1, message: format!("expected header x,log_h,log_deriv, found {}", header.iter().collect::<Vec<_>>().join(",")) });
    }
    let (mut xs, mut lh, mut td) = (Vec::new(), Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_error(&e, 0))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(Error::Parse { line, message: format!("expected 3 fields, found {}", rec.len()) });
        }
        let field = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("cannot parse {} value {:?}", CSV_HEADER[k], &rec[k]),
            })
        };
        xs.push(field(0)?);
        lh.push(field(1)?);
        td.push(field(2)?);
    }
    MCPDensity::from_parts(*space, xs, lh, td)
}

fn parse_error(e: &csv::Error, fallback: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback);
    Error::Parse { line, message: e.to_string() }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// 17 significant digits, `inf`/`-inf` for infinities.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(k: f64, n: f64, d: f64) -> McpSpace {
        McpSpace::new(k, n, d).unwrap()
    }

    fn grid_of(f: impl Fn(f64) -> (f64, f64), sp: McpSpace, nodes: usize) -> MCPDensity {
        let xs = uniform_nodes(sp.diameter(), nodes - 1);
        let (lh, t): (Vec<f64>, Vec<f64>) = xs.iter().map(|&x| f(x)).unzip();
        MCPDensity::from_parts(sp, xs, lh, t).unwrap()
    }

    #[test]
    fn models_pass_validation() {
        for sp in [space(-1.0, 3.0, 1.0), space(0.0, 2.0, 2.0), space(1.0, 5.0, 2.0), McpSpace::maximal(1.0, 3.0).unwrap()] {
            for kind in [ModelKind::H1, ModelKind::H2, ModelKind::Model] {
                let g = MCPDensity::sample(&ModelDensity::new(sp, kind), 1025).unwrap();
                let r = mcp_validate(&g, &sp).unwrap();
                assert!(r.passed, "{sp:?} {kind:?} {r:?}");
                assert!(r.ratio_violation <= 1e-10 && r.derivative_violation <= 1e-10);
            }
        }
    }

    #[test]
    fn constant_density_passes_for_flat_space() {
        let sp = space(0.0, 3.0, 1.0);
        let g = grid_of(|_| (0.0, 0.0), sp, 513);
        assert!(mcp_validate(&g, &sp).unwrap().passed);
    }

    #[test]
    fn exponential_density_fails() {
        let sp = space(0.0, 2.0, 1.0);
        let g = grid_of(|x| (3.0 * x, 3.0), sp, 513);
        let r = mcp_validate(&g, &sp).unwrap();
        assert!(!r.passed && !r.ratio_passed && !r.derivative_passed);
        // e^{1.5} > 2 between 0.5 and 1
        assert!(1.5f64.exp() > 2.0);
        assert!(matches!(
            MCPDensity::checked(sp, g.nodes().to_vec(), g.log_h.clone(), g.log_deriv.clone()),
            Err(Error::NotMcp { .. })
        ));
    }

    #[test]
    fn grid_errors() {
        let sp = space(0.0, 2.0, 1.0);
        let xs = vec![0.0, 0.5, 0.9];
        assert!(matches!(MCPDensity::from_parts(sp, xs, vec![0.0; 3], vec![0.0; 3]), Err(Error::GridMismatch(_))));
        let xs = vec![0.0, 0.6, 0.5, 1.0];
        assert!(matches!(MCPDensity::from_parts(sp, xs, vec![0.0; 4], vec![0.0; 4]), Err(Error::GridMismatch(_))));
        let xs = vec![0.0, 0.5, 1.0];
        let hole = vec![0.0, f64::NEG_INFINITY, 0.0];
        assert!(matches!(MCPDensity::from_parts(sp, xs.clone(), hole, vec![0.0; 3]), Err(Error::InvalidDensity(_))));
        let g = MCPDensity::from_parts(sp, xs, vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert!(matches!(mcp_validate(&g, &space(0.0, 2.0, 2.0)), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn mixture_extremes_reproduce_models() {
        let sp = space(-1.0, 3.0, 1.5);
        let cases = [
            (MixingProfile::Constant(1.0), ModelKind::H1),
            (MixingProfile::Constant(0.0), ModelKind::H2),
            (MixingProfile::MidStep, ModelKind::Model),
        ];
        for (profile, kind) in cases {
            let g = MixtureDensity::new(sp, profile).unwrap().to_grid(257).unwrap();
            let m = ModelDensity::new(sp, kind);
            let offset = m.log_h(0.75) - g.log_h(0.75);
            for (i, &x) in g.nodes().iter().enumerate() {
                let (a, b) = (g.log_h_values()[i] + offset, m.log_h(x));
                if b.is_finite() {
                    assert!((a - b).abs() < 1e-12, "{kind:?} x={x} {a} {b}");
                } else {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn mixture_log_h_matches_grid() {
        let sp = space(1.0, 4.0, 2.0);
        let mix = MixtureDensity::new(sp, MixingProfile::Bernstein(vec![0.3, 0.9, 0.1, 0.6])).unwrap();
        let g = mix.to_grid(513).unwrap();
        for &x in &[0.1, 0.77, 1.0, 1.93] {
            assert!((mix.log_h(x) - g.log_h(x)).abs() < 1e-7, "x={x}");
        }
        // θ(0) = 0 and θ(D) = 1 keep T bounded, so Simpson sees a smooth T.
        let regular = MixtureDensity::new(sp, MixingProfile::Bernstein(vec![0.0, 0.9, 0.1, 1.0])).unwrap();
        let e = regular.to_grid(513).unwrap().consistency_error();
        assert!(e < 1e-8, "{e}");
    }

    #[test]
    fn grid_interpolation_is_consistent() {
        let sp = space(-1.0, 3.0, 1.0);
        let g = random_density_with(sp, 7, 0, 6, 1025).unwrap();
        // T integrates to ln h between arbitrary points.
        let gl = GaussLegendre::new(16);
        let (a, b) = (0.123, 0.871);
        let cells: Vec<f64> = g.nodes().iter().cloned().filter(|&x| x > a && x < b).collect();
        let mut pts = vec![a];
        pts.extend(cells);
        pts.push(b);
        let integral: f64 = pts.windows(2).map(|w| gl.integrate(|x| g.log_deriv(x), w[0], w[1])).sum();
        assert!((integral - (g.log_h(b) - g.log_h(a))).abs() < 1e-12);
    }

    #[test]
    fn random_density_is_reproducible_and_singular_at_ends() {
        let sp = space(0.0, 2.5, 1.0);
        let a = random_density(sp, 11, 5).unwrap();
        let b = random_density(sp, 11, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_density_with(sp, 11, 1, 5, DEFAULT_NODES).unwrap());
        assert_eq!(a.log_h_values()[0], f64::NEG_INFINITY);
        assert_eq!(a.singular_ends(), (true, true));
    }

    #[test]
    fn rescale_examples() {
        let sp = space(0.0, 3.0, 1.0);
        let h1 = MCPDensity::sample(&ModelDensity::new(sp, ModelKind::H1), 513).unwrap();
        let r = rescale_density(&h1, 2.0).unwrap();
        assert_eq!(r.space().diameter(), 2.0);
        assert!(mcp_validate(&r, &r.space()).unwrap().passed);
        let offset = r.log_h(1.0) - (0.5f64).ln() * 2.0;
        for &x in &[0.25, 1.0, 1.75] {
            assert!((r.log_h(x) - offset - 2.0 * (x / 2.0).ln()).abs() < 1e-12);
        }
        let sp = space(-1.0, 3.0, 1.0);
        let g = random_density_with(sp, 3, 0, 4, 257).unwrap();
        assert_eq!(rescale_density(&g, 2.0).unwrap().space().curvature(), -0.25);
        assert_eq!(rescale_density(&g, 1.0).unwrap(), g);
        assert!(rescale_density(&g, 0.0).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let sp = space(-1.0, 3.0, 1.0);
        let model = MCPDensity::sample(&ModelDensity::new(sp, ModelKind::Model), 513).unwrap();
        assert_eq!(smooth_density(&model, 0.0).unwrap(), model);
        assert!(smooth_density(&model, 0.3).is_err());

        let smooth = smooth_density(&model, 0.02).unwrap();
        // nodal jump of T across D/2
        let mid = model.len() / 2;
        let jump = |g: &MCPDensity| g.log_deriv_values()[mid] - g.log_deriv_values()[mid - 1];
        assert!(jump(&model) > 2.0 && jump(&smooth).abs() < 0.1 * jump(&model), "{} {}", jump(&model), jump(&smooth));
        assert!(uniform_distance(&smooth, &model, model.nodes()) < 0.05);
        // averaging a convex bound over the window costs O(w^2 |T''|)
        let r = mcp_validate_with(&smooth, &sp, 5e-3).unwrap();
        assert!(r.passed, "{r:?}");

        let flat = grid_of(|_| (0.0, 0.0), sp, 257);
        let s = smooth_density(&flat, 0.05).unwrap();
        assert!(s.log_h_values().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let sp = space(-1.0, 3.0, 1.0);
        let g = random_density_with(sp, 5, 0, 3, 65).unwrap();
        let mut buf = Vec::new();
        write_density(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,log_h,log_deriv\n"));
        assert!(text.contains("-inf"));
        let back = read_density(buf.as_slice(), &sp).unwrap();
        assert_eq!(back, g);

        let bad = "x,log_h,log_deriv\n0,0,0\n0.5,zz,0\n1,0,0\n";
        match read_density(bad.as_bytes(), &sp) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let missing = "x,log_h,log_deriv\n0,0,nan\n0.5,0.5,nan\n1,1,nan\n";
        let d = read_density(missing.as_bytes(), &sp).unwrap();
        assert!(d.log_deriv_values().iter().all(|&t| (t - 1.0).abs() < 1e-14));
        assert!(read_density("a,b\n0,1\n".as_bytes(), &sp).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_densities_validate(
            seed in any::<u64>(), degree in 1usize..10,
            k in -2.0f64..2.0, n in 1.5f64..6.0, dfrac in 0.2f64..1.0,
        ) {
            let sp = space(k, n, dfrac * crate::geometry::diameter_bound(k, n).min(3.0));
            let g = random_density_with(sp, seed, 0, degree, 513).unwrap();
            let r = mcp_validate(&g, &sp).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }

        #[test]
        fn validation_is_scale_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
            let sp = space(0.0, 2.0, 1.0);
            let g = random_density_with(sp, seed, 0, 4, 257).unwrap();
            let exp = grid_of(|x| (2.0 * x, 2.0), sp, 257);
            for d in [g, exp] {
                let shifted = MCPDensity::from_parts(
                    sp, d.nodes().to_vec(),
                    d.log_h_values().iter().map(|v| v + shift).collect(),
                    d.log_deriv_values().to_vec(),
                ).unwrap();
                let (a, b) = (mcp_validate(&d, &sp).unwrap(), mcp_validate(&shifted, &sp).unwrap());
                prop_assert_eq!(a.passed, b.passed);
                prop_assert!((a.ratio_violation - b.ratio_violation).abs() < 1e-12);
                prop_assert_eq!(a.derivative_violation, b.derivative_violation);
            }
        }

        #[test]
        fn rescale_round_trip(seed in any::<u64>(), c in 0.3f64..3.0) {
            let sp = space(-1.0, 3.0, 1.0);
            let g = random_density_with(sp, seed, 0, 5, 257).unwrap();
            let back = rescale_density(&rescale_density(&g, c).unwrap(), 1.0).unwrap();
            for i in 1..g.len() - 1 {
                prop_assert!((back.nodes()[i] - g.nodes()[i]).abs() < 1e-12);
                prop_assert!((back.log_deriv_values()[i] - g.log_deriv_values()[i]).abs() < 1e-8 * (1.0 + g.log_deriv_values()[i].abs()));
            }
            prop_assert!((back.space().curvature() + 1.0).abs() < 1e-12);
        }

        #[test]
        fn ratio_and_derivative_checks_agree(
            a in -4.0f64..4.0, b in -4.0f64..4.0, k in -1.0f64..1.0,
        ) {
            // ln h = a x + b x^2 on [0, 1]
            let sp = space(k, 3.0, 1.0);
            let excursion = (1..1000).map(|i| {
                let x = i as f64 / 1000.0;
                let t = a + 2.0 * b * x;
                (t - cot_knd(x, k, 3.0).unwrap()).max(-cot_knd(1.0 - x, k, 3.0).unwrap() - t)
            }).fold(f64::NEG_INFINITY, f64::max);
            // the two measures scale differently near the boundary
            prop_assume!(excursion.abs() > 0.05);
            let g = grid_of(|x| (a * x + b * x * x, a + 2.0 * b * x), sp, 1025);
            let r = mcp_validate_with(&g, &sp, 1e-6).unwrap();
            prop_assert_eq!(r.ratio_passed, r.derivative_passed, "{:?}", r);
        }
    }
}
