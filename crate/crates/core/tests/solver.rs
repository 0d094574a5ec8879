use blowup::fields::SolutionField;
use blowup::solver::{
    fixed_point_solve, poisson_solve, radial_derivative, radial_rhs, radial_solution, read_snapshot, write_snapshot,
    BoundaryData, Grid, SolverConfig,
};

fn radial_error(cells: usize, rho: f64) -> f64 {
    let grid = Grid::new(2, cells).unwrap();
    let rhs = radial_rhs(&grid, rho);
    let sol = poisson_solve(&grid, &rhs, &BoundaryData::Radial { radius: rho }, 1e-12, 100_000).unwrap();
    grid.unknowns()
        .iter()
        .map(|&u| {
            let x = grid.coords(u);
            (sol.values[u] - radial_solution(2, rho, (x[0] * x[0] + x[1] * x[1]).sqrt())).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn radial_poisson_converges_at_second_order_class_rate() {
    let e1 = radial_error(128, 0.4);
    let e2 = radial_error(256, 0.4);
    let order = (e1 / e2).log2();
    eprintln!("radial max error {e1:.3e} -> {e2:.3e}, order {order:.3}");
    assert!(order >= 1.5);
}

#[test]
fn radial_gradient_matches_derivative() {
    let rho = 0.3;
    let grid = Grid::new(2, 128).unwrap();
    let rhs: Vec<f64> = (0..grid.node_count())
        .map(|i| {
            let x = grid.coords(i);
            f64::from(x[0] * x[0] + x[1] * x[1] > rho * rho)
        })
        .collect();
    let sol = poisson_solve(&grid, &rhs, &BoundaryData::Radial { radius: rho }, 1e-12, 100_000).unwrap();
    let h = grid.spacing();
    let mut g = [0.0; 2];
    for &u in grid.unknowns() {
        let x = grid.coords(u);
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        if r > rho + 3.0 * h && r < 0.9 {
            grid.gradient_at(&sol.values, u, &mut g);
            let want = radial_derivative(2, rho, r);
            assert!((g[0] - want * x[0] / r).abs() < 5.0 * h * h, "{r}");
        }
    }
}

/// Symmetric Hausdorff distance between the mask nodes and the disc `B_ρ`.
fn mask_hausdorff(grid: &Grid, mask: &[bool], rho: f64) -> f64 {
    let nodes: Vec<Vec<f64>> = grid
        .unknowns()
        .iter()
        .filter(|&&u| mask[u])
        .map(|&u| grid.coords(u))
        .collect();
    let mut worst: f64 = 0.0;
    for x in &nodes {
        worst = worst.max(((x[0] * x[0] + x[1] * x[1]).sqrt() - rho).max(0.0));
    }
    let h = grid.spacing();
    let rings = (rho / (0.25 * h)).ceil() as usize;
    for i in 0..=rings {
        let r = rho * i as f64 / rings as f64;
        let count = ((2.0 * std::f64::consts::PI * r / (0.25 * h)).ceil() as usize).max(1);
        for j in 0..count {
            let th = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
            let y = [r * th.cos(), r * th.sin()];
            let d = nodes
                .iter()
                .map(|x| ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    worst
}

#[test]
fn fixed_point_recovers_radial_ball() {
    let rho = 0.4;
    let cfg = SolverConfig::new(2, 128, BoundaryData::Radial { radius: rho });
    let sol = fixed_point_solve(&cfg).unwrap();
    let h = sol.grid().spacing();
    let d = mask_hausdorff(sol.grid(), sol.mask(), rho);
    eprintln!("{:?}\nhausdorff {d:.4e} = {:.3} h", sol.metrics, d / h);
    assert!(sol.converged());
    assert!(d <= 2.0 * h);
    assert!(sol.metrics.max_gradient_on_mask <= sol.metrics.threshold);
    let field = sol.field();
    assert!(field.inactive(&[0.1, 0.2]).unwrap());
    assert!(!field.inactive(&[0.6, 0.0]).unwrap());
}

#[test]
fn hyperplane_mask_is_a_thin_strip() {
    let cfg = SolverConfig::new(2, 64, BoundaryData::Hyperplane);
    let sol = fixed_point_solve(&cfg).unwrap();
    eprintln!("{:?}", sol.metrics);
    assert!(sol.converged());
    let grid = sol.grid();
    for &u in grid.unknowns() {
        if sol.mask()[u] {
            assert!(grid.coords(u)[0].abs() <= 1.5 * grid.spacing());
        }
    }
    assert!(sol.metrics.inactive_nodes > 0);
}

#[test]
fn snapshot_roundtrip() {
    let cfg = SolverConfig::new(2, 16, BoundaryData::Hyperplane);
    let sol = fixed_point_solve(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let [values, mask, sidecar] = write_snapshot(&sol, &dir.path().join("hp")).unwrap();
    let snap = read_snapshot(&values).unwrap();
    assert_eq!((snap.dimension, snap.cells, snap.spacing), (2, 16, 0.125));
    assert_eq!(snap.values, sol.values());
    let m = read_snapshot(&mask).unwrap();
    assert_eq!(m.values.iter().filter(|v| **v == 1.0).count(), sol.metrics.inactive_nodes);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
    assert_eq!(json["solver"]["boundary"]["kind"], "hyperplane");
    assert_eq!(json["metrics"]["converged"], true);
}

#[test]
fn discrete_maximum_principle() {
    let grid = Grid::new(2, 32).unwrap();
    let rhs = vec![1.0; grid.node_count()];
    let g = BoundaryData::Extended(blowup::solver::BoundaryFn(std::sync::Arc::new(|x: &[f64]| -x[0].abs())));
    let sol = poisson_solve(&grid, &rhs, &g, 1e-12, 10_000).unwrap();
    let gmax = grid.band().iter().map(|&b| sol.values[b]).fold(f64::NEG_INFINITY, f64::max);
    for &u in grid.unknowns() {
        assert!(sol.values[u] <= gmax + 1e-12);
    }
}

#[test]
fn three_dimensional_radial() {
    let cfg = SolverConfig::new(3, 32, BoundaryData::Radial { radius: 0.4 });
    let sol = fixed_point_solve(&cfg).unwrap();
    eprintln!("{:?}", sol.metrics);
    assert!(sol.converged());
    let field = sol.field();
    assert!(field.inactive(&[0.1, 0.1, 0.1]).unwrap());
    assert!(!field.inactive(&[0.0, 0.7, 0.0]).unwrap());
}
