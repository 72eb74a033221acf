use super::*;
use crate::leafspace::{ma_ratio, poisson_solve, positivity_margin};
use proptest::prelude::*;

fn manufactured(x: &[f64]) -> f64 {
    0.15 * x[0].cos() * x[1].cos() + 0.1 * (x[2] + x[3]).sin()
}

#[test]
fn unit_density_needs_no_steps() {
    for grid in [LeafGrid::sphere(8).unwrap(), LeafGrid::torus(8).unwrap()] {
        let rho = BasicField::constant(&grid, 1.0);
        let out = solve_transversal_ma(&rho, &SolverConfig::default(), &BasicField::zeros(&grid)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.f.sup_norm(), 0.0);
    }
}

#[test]
fn sphere_single_step_matches_poisson() {
    let grid = LeafGrid::sphere(16).unwrap();
    let s = match grid.kind() {
        GridKind::Sphere(s) => s.clone(),
        _ => unreachable!(),
    };
    let y20 = s.harmonic(2, 0);
    let rho = BasicField::new(&grid, y20.iter().map(|y| 1.0 + 0.3 * y).collect()).unwrap();
    let out = solve_transversal_ma(&rho, &SolverConfig::default(), &BasicField::zeros(&grid)).unwrap();
    assert!(out.converged);
    assert_eq!(out.iterations, 1);
    let oracle = poisson_solve(&rho.map(|v| v - 1.0)).unwrap();
    assert!(out.f.try_sub(&oracle).unwrap().sup_norm() < 1e-10);
}

#[test]
fn torus_recovers_manufactured_solution() {
    let grid = LeafGrid::torus(16).unwrap();
    let fstar = BasicField::from_fn(&grid, manufactured).unwrap().centered();
    let rho = ma_ratio(&fstar);
    let mut lines = Vec::new();
    let out = solve_transversal_ma_with(&rho, &SolverConfig::default(), &BasicField::zeros(&grid), &mut |r| {
        lines.push(r.to_string())
    })
    .unwrap();
    assert!(out.converged, "{:?}", out.residual_history);
    assert!(out.iterations <= 10);
    assert_eq!(lines.len(), out.iterations);
    assert!(lines[0].starts_with("iter=1 residual="));
    let err = out.f.try_sub(&fstar).unwrap().sup_norm();
    assert!(err < 1e-8, "{err}");
    assert!(out.positivity_margin > 0.0);
}

#[test]
fn linearization_matches_finite_differences() {
    let grid = LeafGrid::torus(8).unwrap();
    let f = BasicField::from_fn(&grid, manufactured).unwrap();
    let v = BasicField::from_fn(&grid, |x| (x[0] - x[3]).cos() + 0.4 * (2.0 * x[1]).sin() * x[2].cos()).unwrap();
    let h = 1e-5;
    let plus = ma_ratio(&f.try_add(&v.scale(h)).unwrap()).map(f64::ln);
    let minus = ma_ratio(&f.try_sub(&v.scale(h)).unwrap()).map(f64::ln);
    let fd = plus.try_sub(&minus).unwrap().scale(0.5 / h);
    let lin = linearized_residual(&f, &v).unwrap();
    let rel = lin.try_sub(&fd).unwrap().sup_norm() / lin.sup_norm();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn rejects_bad_inputs() {
    let grid = LeafGrid::torus(8).unwrap();
    let cfg = SolverConfig::default();
    let zero = BasicField::zeros(&grid);
    let neg = BasicField::from_fn(&grid, |x| 1.0 + 1.5 * x[0].cos()).unwrap();
    assert!(matches!(solve_transversal_ma(&neg, &cfg, &zero), Err(Error::NonPositiveDensity(_))));
    let heavy = BasicField::constant(&grid, 1.1);
    assert!(matches!(solve_transversal_ma(&heavy, &cfg, &zero), Err(Error::Compatibility(_))));
    let bad_init = BasicField::from_fn(&grid, |x| 2.0 * x[0].cos()).unwrap();
    assert!(positivity_margin(&bad_init) < 0.0);
    let one = BasicField::constant(&grid, 1.0);
    assert!(matches!(
        solve_transversal_ma(&one, &cfg, &bad_init),
        Err(Error::NonPositiveBackground(_))
    ));
    let bad_cfg = SolverConfig {
        tol_residual: 2.0,
        ..SolverConfig::default()
    };
    assert!(solve_transversal_ma(&one, &bad_cfg, &zero).is_err());
}

#[test]
fn uniqueness_on_both_grids() {
    let cfg = SolverConfig::default();
    let torus = LeafGrid::torus(12).unwrap();
    let rho = ma_ratio(&BasicField::from_fn(&torus, manufactured).unwrap());
    let inits = [
        BasicField::zeros(&torus),
        BasicField::from_fn(&torus, |x| 0.2 * x[0].cos()).unwrap(),
    ];
    let rep = uniqueness_experiment(&rho, &cfg, &inits).unwrap();
    assert!(rep.all_converged);
    assert!(rep.max_distance <= 1e-9, "{}", rep.max_distance);

    let sphere = LeafGrid::sphere(12).unwrap();
    let rho = BasicField::from_fn(&sphere, |p| 1.0 + 0.4 * p[0] * p[2]).unwrap();
    let inits = [
        BasicField::zeros(&sphere),
        BasicField::from_fn(&sphere, |p| 0.1 * p[1]).unwrap(),
    ];
    let rep = uniqueness_experiment(&rho, &cfg, &inits).unwrap();
    assert!(rep.all_converged);
    assert!(rep.max_distance <= 1e-12, "{}", rep.max_distance);
    assert!(uniqueness_experiment(&rho, &cfg, &inits[..1]).is_err());
}

#[test]
fn laplacian_kernel_is_constant() {
    let torus = LeafGrid::torus(8).unwrap();
    let z = BasicField::zeros(&torus);
    let kc = dp_kernel_check(&z, &z).unwrap();
    assert!(kc.kernel_angle < 1e-6, "{}", kc.kernel_angle);
    assert!((kc.spectral_bound + 1.0).abs() < 1e-8, "{}", kc.spectral_bound);

    let sphere = LeafGrid::sphere(8).unwrap();
    let z = BasicField::zeros(&sphere);
    let kc = dp_kernel_check(&z, &z).unwrap();
    assert!(kc.kernel_angle < 1e-10);
    assert!(kc.kernel_eigenvalue.abs() < 1e-12);
    assert!((kc.gap - 2.0).abs() < 1e-10);
}

#[test]
fn curved_backgrounds_keep_constant_kernel() {
    let torus = LeafGrid::torus(8).unwrap();
    let f1 = BasicField::from_fn(&torus, manufactured).unwrap();
    let f2 = BasicField::from_fn(&torus, |x| 0.1 * (x[0] + x[2]).cos()).unwrap();
    let kc = dp_kernel_check(&f1, &f2).unwrap();
    assert!(kc.kernel_angle < 1e-6, "{}", kc.kernel_angle);
    // mild curvature keeps the mean-zero spectrum near that of the Laplacian
    assert!(kc.spectral_bound < -0.5 && kc.gap > 0.5, "{}", kc.spectral_bound);

    let sphere = LeafGrid::sphere(10).unwrap();
    let f1 = BasicField::from_fn(&sphere, |p| 0.1 * p[0] * p[1]).unwrap();
    let kc = dp_kernel_check(&f1, &BasicField::zeros(&sphere)).unwrap();
    assert!(kc.kernel_angle < 1e-6);
    assert!(kc.spectral_bound < 0.0);

    let bad = BasicField::from_fn(&torus, |x| 2.0 * x[0].cos()).unwrap();
    assert!(matches!(dp_kernel_check(&bad, &f2), Err(Error::NonPositiveBackground(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn iterates_stay_gauged_and_residuals_decrease(a in 0.05f64..0.2, b in -0.15f64..0.15, s in 0.0f64..6.0) {
        let grid = LeafGrid::torus(8).unwrap();
        let fstar = BasicField::from_fn(&grid, |x| a * (x[0] + s).cos() + b * x[1].sin() * x[3].cos()).unwrap();
        let rho = ma_ratio(&fstar);
        let out = solve_transversal_ma(&rho, &SolverConfig::default(), &BasicField::zeros(&grid)).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.f.mean().abs() <= 1e-12);
        for w in out.residual_history.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
    }
}

#[test]
fn under_resolved_torus_density_converges() {
    let mut offsets = Vec::new();
    for n in [8, 16] {
        let grid = LeafGrid::torus(n).unwrap();
        let raw = BasicField::from_fn(&grid, |x| (1.0 + 0.3 * (x[1] + x[2]).sin()) / (2.0 - x[0].cos())).unwrap();
        let rho = raw.scale(1.0 / raw.mean());
        let out = solve_transversal_ma(&rho, &SolverConfig::default(), &BasicField::zeros(&grid)).unwrap();
        assert!(out.converged && !out.homotopy_used, "{:?}", out.residual_history);
        assert!(out.iterations <= 10);
        let diff: Vec<f64> = ma_ratio(&out.f)
            .values()
            .iter()
            .zip(rho.values())
            .map(|(a, b)| a.ln() - b.ln())
            .collect();
        let offset = grid.mean(&diff);
        assert!(diff.iter().all(|d| (d - offset).abs() < 1e-10));
        offsets.push(offset.abs());
    }
    assert!(offsets[0] < 1e-6 && offsets[1] < 1e-3 * offsets[0], "{offsets:?}");
}
