//! Shared setup helpers for the criterion benches. The crate exists for its
//! `benches/` directory; there is no library API.

use vklbm_core::{Burgers, Grid, Model, ModelKind, ObliqueAdvection, Problem, RelaxationMode, Solver};

/// A periodic 1D Burgers problem sized for throughput measurements.
pub fn line_solver(kind: ModelKind, n: usize, omega: f64) -> Solver {
    let grid = Grid::line(n, 0.0, 1.0 / n as f64);
    let model = Model::new(kind, 1.5).unwrap();
    let u0: Vec<f64> = (0..n)
        .map(|i| 0.8 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
        .collect();
    let mut problem = Problem::new(grid, model, std::sync::Arc::new(Burgers));
    problem.mode = RelaxationMode::explicit(omega);
    Solver::new(problem, u0).unwrap()
}

/// A periodic nine-speed 2D problem on an `n × n` grid, advecting obliquely
/// so both partition components do real work.
pub fn plane_solver(n: usize, omega: f64) -> Solver {
    let grid = Grid::uniform(&[n, n], &[0.0, 0.0], 1.0 / n as f64);
    let model = Model::new(ModelKind::D2Q9, 2.0).unwrap();
    let u0: Vec<f64> = (0..n * n)
        .map(|i| {
            let (ix, iy) = (i % n, i / n);
            let tau = 2.0 * std::f64::consts::PI / n as f64;
            0.5 * (tau * ix as f64).sin() * (tau * iy as f64).cos()
        })
        .collect();
    let mut problem =
        Problem::new(grid, model, std::sync::Arc::new(ObliqueAdvection::from_angle(0.7)));
    problem.mode = RelaxationMode::explicit(omega);
    Solver::new(problem, u0).unwrap()
}
