//! Uniform Cartesian grids (1D to 3D) and boundary specifications.

use std::sync::Arc;

/// A uniform node-centred grid. Unused trailing axes have extent 1.
/// The node `(i, j, k)` sits at `origin + (i, j, k)·dx` and maps to the flat
/// index `i + nx·(j + ny·k)`.
#[derive(Clone, Debug)]
pub struct Grid {
    shape: [usize; 3],
    dim: usize,
    dx: f64,
    origin: [f64; 3],
}

impl Grid {
    /// Grid with `shape[..dim]` nodes per axis and spacing `dx` on every axis.
    pub fn uniform(shape: &[usize], origin: &[f64], dx: f64) -> Self {
        assert!((1..=3).contains(&shape.len()), "grids are 1- to 3-dimensional");
        assert!(dx > 0.0, "grid spacing must be positive");
        assert!(shape.iter().all(|&n| n >= 2), "need at least two nodes per axis");
        let dim = shape.len();
        let mut s = [1usize; 3];
        let mut o = [0.0f64; 3];
        s[..dim].copy_from_slice(shape);
        o[..dim].copy_from_slice(origin);
        Self { shape: s, dim, dx, origin: o }
    }

    /// 1D grid of `n` nodes starting at `x0`.
    pub fn line(n: usize, x0: f64, dx: f64) -> Self {
        Self::uniform(&[n], &[x0], dx)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        debug_assert!(ijk.iter().zip(&self.shape).all(|(&i, &n)| i < n));
        ijk[0] + self.shape[0] * (ijk[1] + self.shape[1] * ijk[2])
    }

    #[inline]
    pub fn decompose(&self, node: usize) -> [usize; 3] {
        let i = node % self.shape[0];
        let rest = node / self.shape[0];
        [i, rest % self.shape[1], rest / self.shape[1]]
    }

    #[inline]
    pub fn position(&self, node: usize) -> [f64; 3] {
        let ijk = self.decompose(node);
        let mut x = [0.0; 3];
        for d in 0..3 {
            x[d] = self.origin[d] + ijk[d] as f64 * self.dx;
        }
        x
    }

    /// True when the node touches any face of the given axis.
    #[inline]
    pub fn on_face(&self, ijk: [usize; 3], axis: usize) -> bool {
        ijk[axis] == 0 || ijk[axis] + 1 == self.shape[axis]
    }
}

/// Wraps a possibly out-of-range signed index onto `0..n`.
#[inline]
pub fn wrap(i: isize, n: usize) -> usize {
    let n = n as isize;
    (((i % n) + n) % n) as usize
}

/// What happens at one face of the domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceRule {
    /// The axis wraps; must be paired with `Periodic` on the opposite face.
    Periodic,
    /// Populations streaming in from outside are set to the equilibrium of
    /// the prescribed boundary value.
    Inflow,
    /// Nine-speed characteristic closure: unknown populations are filled
    /// from non-equilibrium relations against the prescribed value.
    Closure,
}

/// Per-axis pair of face rules, plus the prescribed boundary values that the
/// non-periodic rules read. `prescribed` is a full-grid field; only entries
/// at boundary nodes are ever consulted.
#[derive(Clone)]
pub struct BoundarySpec {
    pub faces: [[FaceRule; 2]; 3],
    pub prescribed: Option<Arc<Vec<f64>>>,
}

/// How one axis behaves, derived from its face pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AxisRule {
    Periodic,
    Bounded,
}

impl BoundarySpec {
    pub fn periodic() -> Self {
        Self { faces: [[FaceRule::Periodic; 2]; 3], prescribed: None }
    }

    /// Inflow-equilibrium fill on every face, reading `prescribed`.
    pub fn inflow(prescribed: Vec<f64>) -> Self {
        Self { faces: [[FaceRule::Inflow; 2]; 3], prescribed: Some(Arc::new(prescribed)) }
    }

    /// Characteristic closure on every face (nine-speed model only).
    pub fn closure(prescribed: Vec<f64>) -> Self {
        Self { faces: [[FaceRule::Closure; 2]; 3], prescribed: Some(Arc::new(prescribed)) }
    }

    pub fn axis_rule(&self, axis: usize) -> AxisRule {
        if self.faces[axis][0] == FaceRule::Periodic {
            AxisRule::Periodic
        } else {
            AxisRule::Bounded
        }
    }

    pub fn is_fully_periodic(&self, dim: usize) -> bool {
        (0..dim).all(|d| self.axis_rule(d) == AxisRule::Periodic)
    }

    /// Structural validation against a grid: periodic faces pair up, and any
    /// non-periodic face needs prescribed values of the right length.
    pub fn validate(&self, grid: &Grid) -> Result<(), String> {
        let mut needs_values = false;
        for d in 0..grid.dim() {
            let [lo, hi] = self.faces[d];
            if (lo == FaceRule::Periodic) != (hi == FaceRule::Periodic) {
                return Err(format!("axis {d}: periodic face paired with a non-periodic one"));
            }
            if lo != FaceRule::Periodic {
                needs_values = true;
            }
        }
        if needs_values {
            match &self.prescribed {
                None => return Err("bounded faces need prescribed boundary values".into()),
                Some(v) if v.len() != grid.len() => {
                    return Err(format!(
                        "prescribed boundary field has {} entries, grid has {}",
                        v.len(),
                        grid.len()
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
