//! Scalar Dormand–Prince 5(4) integrator with dense output and level events.
//!
//! Coefficients and the continuous extension follow Hairer, Nørsett and
//! Wanner (DOPRI5). Integration runs in either direction of `x`.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Step-size control settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on `|h|`; infinite means the interval length.
    pub h_max: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, max_steps: 200_000, h_max: f64::INFINITY }
    }
}

/// One accepted step with its quartic continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub x0: f64,
    pub x1: f64,
    rcont: [f64; 5],
}

impl DenseStep {
    pub fn y0(&self) -> f64 {
        self.rcont[0]
    }

    pub fn y1(&self) -> f64 {
        self.rcont[0] + self.rcont[1]
    }

    /// Dense output at `x` in the closed step interval.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let h = self.x1 - self.x0;
        let th = (x - self.x0) / h;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])))
    }
}

/// Result of an integration: the dense steps and where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub steps: Vec<DenseStep>,
    /// Final abscissa: the event location or the requested end.
    pub x_end: f64,
    pub y_end: f64,
    /// Location of the level crossing, when one was requested and found.
    pub event: Option<f64>,
    pub rhs_evals: usize,
}

impl Solution {
    /// Dense evaluation anywhere between the start and `x_end`. The step
    /// holding an event keeps its full polynomial, valid up to the event.
    pub fn eval(&self, x: f64) -> f64 {
        if self.steps.is_empty() {
            return self.y_end;
        }
        let forward = self.steps[0].x1 >= self.steps[0].x0;
        let idx = if forward {
            self.steps.partition_point(|s| s.x1 < x)
        } else {
            self.steps.partition_point(|s| s.x1 > x)
        };
        if idx >= self.steps.len() {
            return self.y_end;
        }
        self.steps[idx].eval(x)
    }
}

/// Stop when `y` reaches `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelEvent {
    pub level: f64,
}

/// Integrates `y' = f(x, y)` from `(x0, y0)` toward `x_end`, stopping early
/// at the first crossing of `event.level` if an event is given.
///
/// A start exactly on the level does not trigger the event.
pub fn integrate<F>(
    mut f: F,
    x0: f64,
    y0: f64,
    x_end: f64,
    opts: &OdeOptions,
    event: Option<LevelEvent>,
) -> Result<Solution>
where
    F: FnMut(f64, f64) -> f64,
{
    let mut steps = Vec::new();
    let mut evals = 0usize;
    if x_end == x0 {
        return Ok(Solution { steps, x_end, y_end: y0, event: None, rhs_evals: 0 });
    }
    let dir = (x_end - x0).signum();
    let span = (x_end - x0).abs();
    let h_max = opts.h_max.min(span);

    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, y);
    evals += 1;
    if !k1.is_finite() {
        return Err(Error::NonFinite { x });
    }
    let mut h = initial_step(&mut f, x, y, k1, dir, h_max, opts, &mut evals);
    let mut g_prev = event.map(|e| y - e.level);

    let mut accepted = 0usize;
    let mut last_err: f64 = 1e-4;
    loop {
        if accepted >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let remaining = (x_end - x) * dir;
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h <= 1e-15 * x.abs().max(span) {
            return Err(Error::StepUnderflow { x });
        }
        let hs = dir * h;

        let k2 = f(x + C2 * hs, y + hs * A21 * k1);
        let k3 = f(x + C3 * hs, y + hs * (A31 * k1 + A32 * k2));
        let k4 = f(x + C4 * hs, y + hs * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(x + C5 * hs, y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let xn = if last { x_end } else { x + hs };
        let k6 = f(xn, y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let yn = y + hs * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(xn, yn);
        evals += 6;

        let finite = [k2, k3, k4, k5, k6, k7, yn].iter().all(|v| v.is_finite());
        if !finite {
            h *= 0.25;
            if h <= 1e-15 * x.abs().max(span) {
                return Err(Error::NonFinite { x });
            }
            continue;
        }

        let err_est = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let scale = opts.atol + opts.rtol * y.abs().max(yn.abs());
        let err = (err_est / scale).abs();

        if err <= 1.0 {
            let r1 = yn - y;
            let r2 = hs * k1 - r1;
            let r3 = r1 - hs * k7 - r2;
            let r4 = hs * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7);
            let step = DenseStep { x0: x, x1: xn, rcont: [y, r1, r2, r3, r4] };
            accepted += 1;

            if let (Some(ev), Some(gp)) = (event, g_prev) {
                let gn = yn - ev.level;
                let crossed = if gp == 0.0 { false } else { gn == 0.0 || gp.signum() != gn.signum() };
                if crossed {
                    let xe = locate(&step, ev.level, gp);
                    steps.push(step);
                    return Ok(Solution { steps, x_end: xe, y_end: ev.level, event: Some(xe), rhs_evals: evals });
                }
                g_prev = Some(gn);
            }

            steps.push(step);
            x = xn;
            y = yn;
            k1 = k7;
            if last {
                return Ok(Solution { steps, x_end, y_end: y, event: None, rhs_evals: evals });
            }
            // PI controller (Gustafsson) with the DOPRI5 defaults.
            let fac = 0.9 * err.max(1e-10).powf(-0.17) * last_err.powf(0.04);
            h = (h * fac.clamp(0.2, 10.0)).min(h_max);
            last_err = err.max(1e-4);
        } else {
            let fac = 0.9 * err.powf(-0.2);
            h *= fac.clamp(0.2, 1.0);
        }
    }
}

/// Bisection on the dense polynomial for the crossing of `level`.
fn locate(step: &DenseStep, level: f64, g0: f64) -> f64 {
    let (mut a, mut b) = (step.x0, step.x1);
    let sa = g0.signum();
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let gm = step.eval(m) - level;
        if gm == 0.0 {
            return m;
        }
        if gm.signum() == sa {
            a = m;
        } else {
            b = m;
        }
    }
    b
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F: FnMut(f64, f64) -> f64>(
    f: &mut F,
    x: f64,
    y: f64,
    f0: f64,
    dir: f64,
    h_max: f64,
    opts: &OdeOptions,
    evals: &mut usize,
) -> f64 {
    let sk = opts.atol + opts.rtol * y.abs();
    let d0 = y.abs() / sk;
    let d1 = f0.abs() / sk;
    let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(h_max);
    let f1 = f(x + dir * h0, y + dir * h0 * f0);
    *evals += 1;
    let d2 = if f1.is_finite() { ((f1 - f0) / sk).abs() / h0 } else { f64::INFINITY };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(h_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> OdeOptions {
        OdeOptions::default()
    }

    #[test]
    fn exponential_growth() {
        let sol = integrate(|_, y| y, 0.0, 1.0, 2.0, &opts(), None).unwrap();
        assert!((sol.y_end - 2f64.exp()).abs() < 1e-9 * 2f64.exp());
        for i in 0..=40 {
            let x = 2.0 * i as f64 / 40.0;
            assert!((sol.eval(x) - x.exp()).abs() < 1e-8 * x.exp(), "x={x}");
        }
    }

    #[test]
    fn backward_integration() {
        let sol = integrate(|x, _| x.cos(), 3.0, 3f64.sin(), 0.0, &opts(), None).unwrap();
        assert!(sol.y_end.abs() < 1e-10);
        assert!((sol.eval(1.0) - 1f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn level_event_is_located() {
        // y = x^2 / 2 reaches 2 at x = 2.
        let ev = LevelEvent { level: 2.0 };
        let sol = integrate(|x, _| x, 0.0, 0.0, 10.0, &opts(), Some(ev)).unwrap();
        let xe = sol.event.unwrap();
        assert!((xe - 2.0).abs() < 1e-10, "{xe}");
        assert_eq!(sol.x_end, xe);
        // backward with y' = 1: y = x - 0.5 reaches -1 at x = -0.5
        let ev = LevelEvent { level: -1.0 };
        let sol = integrate(|_, _| 1.0, 0.5, 0.0, -5.0, &opts(), Some(ev)).unwrap();
        assert!((sol.event.unwrap() - (-0.5)).abs() < 1e-12);
    }

    #[test]
    fn start_on_level_does_not_fire() {
        let ev = LevelEvent { level: 0.0 };
        let sol = integrate(|_, _| 1.0, 0.0, 0.0, 1.0, &opts(), Some(ev)).unwrap();
        assert!(sol.event.is_none());
        assert!((sol.y_end - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_rhs_is_reported() {
        let r = integrate(|x, _| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 0.0, 1.0, &opts(), None);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
    }
}
