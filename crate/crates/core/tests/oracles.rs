use std::f64::consts::PI;
use std::sync::Arc;

use entropy_lab_core::entropy::w_functional;
use entropy_lab_core::geometry::{build_grid, integrate_values, BasePoint, ManifoldGrid, ManifoldKind, ScalarField};
use entropy_lab_core::heat::{HeatSolver, HeatState, KernelOracle};

fn exact(g: &Arc<ManifoldGrid>, base: BasePoint, t: f64) -> HeatState {
    let oracle = KernelOracle::for_grid(g).unwrap();
    let mut v = oracle.values(g, base, t).unwrap();
    // Quadrature mass of the sampled kernel is 1 + O(h²); W needs unit discrete mass.
    let mass = integrate_values(g, &v);
    v.iter_mut().for_each(|x| *x /= mass);
    HeatState::new(ScalarField::new(g.clone(), v).unwrap(), t, 0.0).unwrap()
}

/// Evolves the exact kernel from t0 to t1 and returns (max |u − H|/max H, |W(u) − W(H)|).
fn evolved_error(kind: ManifoldKind, res: [usize; 2], base: BasePoint, t0: f64, t1: f64, steps: usize) -> (f64, f64) {
    let g = Arc::new(build_grid(kind, res).unwrap());
    let start = exact(&g, base, t0);
    let end = HeatSolver::default().trajectory(&start, (t1 - t0) / steps as f64, steps).unwrap().pop().unwrap();
    let target = exact(&g, base, t1);
    let peak = target.u.max();
    let err = end.u.values.iter().zip(&target.u.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / peak;
    (err, (w_functional(&end).unwrap() - w_functional(&target).unwrap()).abs())
}

#[test]
fn circle_flow_converges_to_the_theta_kernel() {
    let kind = ManifoldKind::Circle { length: 2.0 * PI };
    let coarse = evolved_error(kind.clone(), [64, 1], BasePoint::Node(0), 0.2, 0.7, 25);
    let fine = evolved_error(kind, [128, 1], BasePoint::Node(0), 0.2, 0.7, 50);
    assert!(coarse.0 < 1e-2, "{coarse:?}");
    assert!(coarse.0 / fine.0 > 3.0, "{coarse:?} {fine:?}");
    assert!(fine.1 < coarse.1 && fine.1 < 1e-3, "{coarse:?} {fine:?}");
}

#[test]
fn sphere_flow_converges_to_the_legendre_kernel() {
    let kind = ManifoldKind::unit_sphere();
    let coarse = evolved_error(kind.clone(), [64, 8], BasePoint::Pole, 0.2, 0.5, 15);
    let fine = evolved_error(kind, [128, 8], BasePoint::Pole, 0.2, 0.5, 30);
    assert!(coarse.0 < 1e-2, "{coarse:?}");
    assert!(coarse.0 / fine.0 > 3.0, "{coarse:?} {fine:?}");
    assert!(fine.1 < coarse.1, "{coarse:?} {fine:?}");
}

#[test]
fn torus_flow_approaches_the_uniform_entropy() {
    let g = Arc::new(build_grid(ManifoldKind::FlatTorus { lx: 2.0 * PI, ly: 2.0 * PI }, [32, 32]).unwrap());
    let start = exact(&g, BasePoint::Node(0), 1.0);
    let end = HeatSolver::default().trajectory(&start, 0.05, 60).unwrap().pop().unwrap();
    // Near-uniform u at t = 4: W ≈ log V − log(4πt) − 2 plus the first-mode excess 2(2t − 1)e^{−2t}.
    let t: f64 = 4.0;
    let expected = (4.0 * PI * PI).ln() - (4.0 * PI * t).ln() - 2.0 + 2.0 * (2.0 * t - 1.0) * (-2.0 * t).exp();
    let w = w_functional(&end).unwrap();
    assert!((w - expected).abs() < 1e-3, "{w} vs {expected}");
}
