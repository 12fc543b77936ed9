//! Frozen values. Each was computed by the shooting solver and confirmed by
//! the Rayleigh minimizer, whose M = 2048/4096/8192 sequence converges at
//! second order; the tolerances sit above both errors.

use pgap::gap::GapSolver;
use pgap::oracle::{minimize_gap, DiscreteProblem};
use pgap::density::{ModelDensity, ModelKind};
use pgap::{McpSpace, Params};

#[test]
fn hyperbolic_model_gap() {
    // oracle: 5.1299916787, 5.1299923084, 5.1299924658; Richardson 5.12999252
    let r = GapSolver::new(Params::new(2.0, -1.0, 3.0, 1.0).unwrap()).lambda_hat().unwrap();
    assert!((r.lambda - 5.129_992_520_6).abs() < 5e-8 * 5.13, "{}", r.lambda);
}

#[test]
fn flat_model_gap_on_half_circle() {
    let r = GapSolver::new(Params::new(2.0, 0.0, 2.0, std::f64::consts::PI).unwrap()).lambda_hat().unwrap();
    assert!((r.lambda - 0.750_471_860_2).abs() < 5e-8 * 0.75, "{}", r.lambda);
}

#[test]
fn positive_curvature_infimum_is_interior() {
    // for K = 1, N = 3 the maximal model gives 1.5; the infimum sits at D' < D_{1,3}
    let params = Params { space: McpSpace::maximal(1.0, 3.0).unwrap(), ..Params::new(2.0, 1.0, 3.0, 1.0).unwrap() };
    let r = GapSolver::new(params).lambda_sharp().unwrap();
    assert!((r.lambda - 1.065_690_94).abs() < 1e-7, "{}", r.lambda);
    let dp = r.minimizing_diameter.unwrap();
    assert!((dp - 3.375_69).abs() < 3e-3, "{dp}");

    let model = ModelDensity::new(McpSpace::new(1.0, 3.0, dp).unwrap(), ModelKind::Model);
    let prob = DiscreteProblem::from_density(&model, params.p, 4096).unwrap();
    let oracle = minimize_gap(&prob, 2).unwrap().value;
    assert!((oracle - r.lambda).abs() < 1e-6 * r.lambda, "{oracle}");
}

#[test]
fn other_exponents() {
    let cases = [
        (1.5, 1.0, 2.0, 2.0, 1.787_182_793_4),
        (3.0, 1.0, 5.0, 1.0, 8.964_156_827_0),
    ];
    for (p, k, n, d, want) in cases {
        let r = GapSolver::new(Params::new(p, k, n, d).unwrap()).lambda_hat().unwrap();
        assert!((r.lambda - want).abs() < 5e-8 * want, "p = {p}: {}", r.lambda);
    }
}
