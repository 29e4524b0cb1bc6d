//! Dual-path oracle for the discounting transform: removing a linear-in-y
//! rate, solving the rate-free problem, and scaling back must agree with a
//! direct solve of the original problem.

use std::sync::Arc;

use mrbsde::{
    solve_constant_driver, solve_general, BasisSpec, Constraint, DeterministicCurve,
    DiscountTransform, DriverSpec, LossSpec, PathEnsemble, ScalarEnsemble, SolveOptions, TimeGrid,
    ZDriverFn,
};

#[test]
fn transform_solve_untransform_matches_direct_solve() {
    let grid = TimeGrid::build(1.0, 50).unwrap();
    let ensemble = PathEnsemble::simulate_brownian(&grid, 4_000, 1, 77).unwrap();
    let m = grid.steps();
    let xi: Vec<f64> = (0..ensemble.n_paths())
        .map(|p| 0.5 + ensemble.value(p, m, 0))
        .collect();
    let basis = BasisSpec::Polynomial { degree: 2 };
    // rate -0.3 drags the unreflected mean below the benchmark 0.45, so the
    // compensator is nontrivial on both routes
    let a = DeterministicCurve::constant(&grid, -0.3);
    let u = DeterministicCurve::constant(&grid, 0.45);
    let constraint = Constraint::Mean(LossSpec::linear(u.clone()));

    let h: ZDriverFn = Arc::new(|_t, _z: &[f64]| 0.0);
    let driver = DriverSpec::linear_in_y(a.clone(), h, 0.3);
    let direct = solve_general(
        &driver,
        &xi,
        &constraint,
        &ensemble,
        &basis,
        &SolveOptions::default(),
    )
    .unwrap();

    let tr = DiscountTransform::new(&a, &grid).unwrap();
    let xi_t = tr.transform_terminal(&xi);
    let loss_t = tr.transform_loss(&LossSpec::linear(u)).unwrap();
    let zeros = ScalarEnsemble::zeros(&grid, ensemble.n_paths());
    let sol_t = solve_constant_driver(
        &zeros,
        &xi_t,
        &Constraint::Mean(loss_t),
        &ensemble,
        &basis,
    )
    .unwrap();
    let back = tr.untransform_solution(&sol_t).unwrap();

    let scale = 1.0 + xi.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let direct_mean = direct.mean_y_curve();
    let back_mean = back.mean_y_curve();
    let mut y_diff = 0.0f64;
    let mut k_diff = 0.0f64;
    for i in 0..grid.len() {
        y_diff = y_diff.max((direct_mean.value(i) - back_mean.value(i)).abs());
        k_diff = k_diff.max((direct.k.value(i) - back.k.value(i)).abs());
    }
    assert!(direct.k.total() > 0.01, "fixture constraint never binds");
    assert!(y_diff <= 0.02 * scale, "mean-Y routes differ by {y_diff}");
    assert!(k_diff <= 0.02 * scale, "compensator routes differ by {k_diff}");
}
