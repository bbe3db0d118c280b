//! Velocity lattices, equilibrium and source population models, and the
//! subcharacteristic (numerical-diffusion positivity) checks.
//!
//! Population ordering follows a fixed convention per lattice:
//! - two-speed 1D: `+λ, -λ`
//! - three-speed 1D (centred and upwind): `+λ, 0, -λ`
//! - upwind sets: positive axes in order, then rest, then negative axes
//! - nine-speed 2D: `(1,0), (0,1), (1,1), (-1,1), (0,0), (-1,0), (0,-1),
//!   (-1,-1), (1,-1)` in lattice units.

use crate::flux::{quadrature_split_comb, ScalarFlux};
use thiserror::Error;

/// Largest population count over all lattices; per-node scratch buffers can
/// be sized to this.
pub const MAX_Q: usize = 9;

/// Tolerance scale under which a computed subcharacteristic margin still
/// counts as satisfied; absorbs closed-form eigenvalue roundoff so that
/// analytically tight choices (zero margin) pass.
const SUBCHAR_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("lattice speed must be positive and finite, got {0}")]
    InvalidSpeed(f64),
    #[error("model `{model}` is {model_dim}-dimensional but the flux has {flux_dim} directions")]
    DimensionMismatch { model: &'static str, model_dim: usize, flux_dim: usize },
    #[error("flux partition applies to the nine-speed 2D model only")]
    PartitionUnsupported,
    #[error("partition fraction must lie in [0, 1], got {0}")]
    InvalidPartition(f64),
    #[error("unknown model name `{0}`")]
    UnknownModel(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    D1Q2,
    D1Q3,
    UpwindD1Q3,
    UpwindD2Q5,
    UpwindD3Q7,
    D2Q9,
}

const OFFSETS_D1Q2: [[i32; 3]; 2] = [[1, 0, 0], [-1, 0, 0]];
const OFFSETS_D1Q3: [[i32; 3]; 3] = [[1, 0, 0], [0, 0, 0], [-1, 0, 0]];
const OFFSETS_D2Q5: [[i32; 3]; 5] = [[1, 0, 0], [0, 1, 0], [0, 0, 0], [-1, 0, 0], [0, -1, 0]];
const OFFSETS_D3Q7: [[i32; 3]; 7] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
    [-1, 0, 0],
    [0, -1, 0],
    [0, 0, -1],
];
const OFFSETS_D2Q9: [[i32; 3]; 9] = [
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [-1, 1, 0],
    [0, 0, 0],
    [-1, 0, 0],
    [0, -1, 0],
    [-1, -1, 0],
    [1, -1, 0],
];

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::D1Q2 | ModelKind::D1Q3 | ModelKind::UpwindD1Q3 => 1,
            ModelKind::UpwindD2Q5 | ModelKind::D2Q9 => 2,
            ModelKind::UpwindD3Q7 => 3,
        }
    }

    pub fn q(self) -> usize {
        self.offsets().len()
    }

    /// Integer lattice offsets of each population, in population order.
    pub fn offsets(self) -> &'static [[i32; 3]] {
        match self {
            ModelKind::D1Q2 => &OFFSETS_D1Q2,
            ModelKind::D1Q3 | ModelKind::UpwindD1Q3 => &OFFSETS_D1Q3,
            ModelKind::UpwindD2Q5 => &OFFSETS_D2Q5,
            ModelKind::UpwindD3Q7 => &OFFSETS_D3Q7,
            ModelKind::D2Q9 => &OFFSETS_D2Q9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::D1Q2 => "d1q2",
            ModelKind::D1Q3 => "d1q3",
            ModelKind::UpwindD1Q3 => "upwind-d1q3",
            ModelKind::UpwindD2Q5 => "upwind-d2q5",
            ModelKind::UpwindD3Q7 => "upwind-d3q7",
            ModelKind::D2Q9 => "d2q9",
        }
    }

    pub fn parse(name: &str) -> Result<Self, ModelError> {
        Ok(match name {
            "d1q2" => ModelKind::D1Q2,
            "d1q3" => ModelKind::D1Q3,
            "upwind-d1q3" => ModelKind::UpwindD1Q3,
            "upwind-d2q5" => ModelKind::UpwindD2Q5,
            "upwind-d3q7" => ModelKind::UpwindD3Q7,
            "d2q9" => ModelKind::D2Q9,
            other => return Err(ModelError::UnknownModel(other.to_string())),
        })
    }
}

/// How the nine-speed model distributes the coordinate fluxes over the
/// coordinate and diagonal transport directions. `alpha_fraction = t` keeps
/// `t·G¹` and `t·G²` on the axes and routes the remainder diagonally.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Partition {
    alpha_fraction: f64,
}

impl Partition {
    /// All flux on the coordinate axes: γ and ζ components vanish and the
    /// model degenerates to the five-speed upwind one.
    pub fn coordinate() -> Self {
        Self { alpha_fraction: 1.0 }
    }

    /// All flux routed diagonally: α and β components vanish.
    pub fn diagonal() -> Self {
        Self { alpha_fraction: 0.0 }
    }

    pub fn custom(alpha_fraction: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&alpha_fraction) {
            return Err(ModelError::InvalidPartition(alpha_fraction));
        }
        Ok(Self { alpha_fraction })
    }

    pub fn alpha_fraction(&self) -> f64 {
        self.alpha_fraction
    }

    /// `(c1, c2)` per transport component so that the component flux is
    /// `c1·G¹ + c2·G²`; order α, β, γ, ζ.
    pub(crate) fn coefficients(&self) -> [(f64, f64); 4] {
        let t = self.alpha_fraction;
        let r = 0.5 * (1.0 - t);
        [(t, 0.0), (0.0, t), (r, r), (-r, r)]
    }
}

/// Completes a flux partition: given the coordinate fluxes and the chosen
/// axis-aligned components, returns the diagonal components `(Gγ, Gζ)` so
/// that `Gα + Gγ - Gζ = G¹` and `Gβ + Gγ + Gζ = G²`.
pub fn d2q9_partition(g1: f64, g2: f64, g_alpha: f64, g_beta: f64) -> (f64, f64) {
    (0.5 * ((g2 + g1) - (g_beta + g_alpha)), 0.5 * ((g2 - g1) - (g_beta - g_alpha)))
}

/// A velocity lattice bound to a lattice speed `λ = Δx/Δt` (uniform across
/// directions) and, for the nine-speed model, a flux partition.
#[derive(Clone, Copy, Debug)]
pub struct Model {
    pub kind: ModelKind,
    lambda: f64,
    partition: Partition,
}

impl Model {
    pub fn new(kind: ModelKind, lambda: f64) -> Result<Self, ModelError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ModelError::InvalidSpeed(lambda));
        }
        Ok(Self { kind, lambda, partition: Partition::coordinate() })
    }

    pub fn with_partition(mut self, partition: Partition) -> Result<Self, ModelError> {
        if self.kind != ModelKind::D2Q9 {
            return Err(ModelError::PartitionUnsupported);
        }
        self.partition = partition;
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Changes the lattice speed (adaptive speed selection between steps).
    pub fn set_lambda(&mut self, lambda: f64) -> Result<(), ModelError> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ModelError::InvalidSpeed(lambda));
        }
        self.lambda = lambda;
        Ok(())
    }

    pub fn partition(&self) -> Partition {
        self.partition
    }

    pub fn q(&self) -> usize {
        self.kind.q()
    }

    pub fn check_flux(&self, flux: &dyn ScalarFlux) -> Result<(), ModelError> {
        if flux.dim() != self.kind.dim() {
            return Err(ModelError::DimensionMismatch {
                model: self.kind.name(),
                model_dim: self.kind.dim(),
                flux_dim: flux.dim(),
            });
        }
        Ok(())
    }

    /// Writes the equilibrium populations for state `u` into `out[..q]`.
    ///
    /// The zeroth moment of the result is `u` and the first moments are the
    /// flux components, both up to roundoff.
    pub fn equilibrium_into(&self, flux: &dyn ScalarFlux, u: f64, out: &mut [f64]) {
        let lam = self.lambda;
        match self.kind {
            ModelKind::D1Q2 => {
                let gh = flux.eval(0, u) / (2.0 * lam);
                out[0] = 0.5 * u + gh;
                out[1] = 0.5 * u - gh;
            }
            ModelKind::D1Q3 => {
                let gh = flux.eval(0, u) / (2.0 * lam);
                let third = u / 3.0;
                out[0] = third + gh;
                out[1] = third;
                out[2] = third - gh;
            }
            ModelKind::UpwindD1Q3 => {
                let (p, m) = flux.split(0, u);
                out[0] = p / lam;
                out[1] = u - (p + m) / lam;
                out[2] = m / lam;
            }
            ModelKind::UpwindD2Q5 | ModelKind::UpwindD3Q7 => {
                let dim = self.kind.dim();
                let mut carried = 0.0;
                for d in 0..dim {
                    let (p, m) = flux.split(d, u);
                    out[d] = p / lam;
                    out[dim + 1 + d] = m / lam;
                    carried += (p + m) / lam;
                }
                out[dim] = u - carried;
            }
            ModelKind::D2Q9 => {
                let comps = self.partition.coefficients();
                let mut carried = 0.0;
                for (l, &c) in comps.iter().enumerate() {
                    let (p, m) = component_split(flux, c, u);
                    out[l] = p / lam;
                    out[5 + l] = m / lam;
                    carried += (p + m) / lam;
                }
                out[4] = u - carried;
            }
        }
    }

    /// Validated equilibrium populations for state `u`.
    pub fn equilibrium(&self, flux: &dyn ScalarFlux, u: f64) -> Result<Vec<f64>, ModelError> {
        self.check_flux(flux)?;
        let mut out = vec![0.0; self.q()];
        self.equilibrium_into(flux, u, &mut out);
        Ok(out)
    }

    /// Writes the per-population source increments for source value `s` at
    /// state `u` into `out[..q]`.
    ///
    /// The increments mirror the equilibrium structure with the sign-split
    /// jacobian in place of the split flux, so the zeroth moment is `s` and
    /// the first moments are `∂G^d · s` — the well-balancing property.
    pub fn source_into(&self, flux: &dyn ScalarFlux, u: f64, s: f64, out: &mut [f64]) {
        let lam = self.lambda;
        match self.kind {
            ModelKind::D1Q2 => {
                let jh = flux.jacobian(0, u) * s / (2.0 * lam);
                out[0] = 0.5 * s + jh;
                out[1] = 0.5 * s - jh;
            }
            ModelKind::D1Q3 => {
                let jh = flux.jacobian(0, u) * s / (2.0 * lam);
                let third = s / 3.0;
                out[0] = third + jh;
                out[1] = third;
                out[2] = third - jh;
            }
            ModelKind::UpwindD1Q3 => {
                let (jp, jm) = flux.split_jacobian(0, u);
                out[0] = jp * s / lam;
                out[1] = s - (jp + jm) * s / lam;
                out[2] = jm * s / lam;
            }
            ModelKind::UpwindD2Q5 | ModelKind::UpwindD3Q7 => {
                let dim = self.kind.dim();
                let mut carried = 0.0;
                for d in 0..dim {
                    let (jp, jm) = flux.split_jacobian(d, u);
                    out[d] = jp * s / lam;
                    out[dim + 1 + d] = jm * s / lam;
                    carried += (jp + jm) * s / lam;
                }
                out[dim] = s - carried;
            }
            ModelKind::D2Q9 => {
                let comps = self.partition.coefficients();
                let mut carried = 0.0;
                for (l, &c) in comps.iter().enumerate() {
                    let (jp, jm) = component_split_jacobian(flux, c, u);
                    out[l] = jp * s / lam;
                    out[5 + l] = jm * s / lam;
                    carried += (jp + jm) * s / lam;
                }
                out[4] = s - carried;
            }
        }
    }

    /// Validated source increments.
    pub fn source_populations(
        &self,
        flux: &dyn ScalarFlux,
        u: f64,
        s: f64,
    ) -> Result<Vec<f64>, ModelError> {
        self.check_flux(flux)?;
        let mut out = vec![0.0; self.q()];
        self.source_into(flux, u, s, &mut out);
        Ok(out)
    }

    /// Split fluxes of the four nine-speed transport components at `u`,
    /// order α, β, γ, ζ. Exposed for the macroscopic reconstruction.
    pub fn d2q9_component_splits(&self, flux: &dyn ScalarFlux, u: f64) -> [(f64, f64); 4] {
        let comps = self.partition.coefficients();
        let mut out = [(0.0, 0.0); 4];
        for (l, &c) in comps.iter().enumerate() {
            out[l] = component_split(flux, c, u);
        }
        out
    }

    /// A lattice speed sufficient for the subcharacteristic condition on the
    /// sampled states (before verification; callers should still check the
    /// margin and enlarge if needed).
    pub fn sufficient_speed(&self, flux: &dyn ScalarFlux, samples: &[f64]) -> f64 {
        let mut speed = 0.0f64;
        for &u in samples {
            let s = match self.kind {
                ModelKind::D1Q2 => flux.jacobian(0, u).abs(),
                // centred three-speed: diffusion coefficient is (2/3)λ² - a².
                ModelKind::D1Q3 => (1.5f64).sqrt() * flux.jacobian(0, u).abs(),
                _ => (0..self.kind.dim()).map(|d| flux.jacobian(d, u).abs()).sum(),
            };
            speed = speed.max(s);
        }
        speed
    }
}

/// Split flux of one nine-speed transport component `c1·G¹ + c2·G²`.
///
/// Exact paths: a vanishing component is exactly zero; a single-direction
/// component reuses (and scales) the flux's own split; a mixed component of
/// a linear flux clips the combined constant speed. Only a mixed component
/// of a nonlinear flux falls back to quadrature.
fn component_split(flux: &dyn ScalarFlux, (c1, c2): (f64, f64), u: f64) -> (f64, f64) {
    if c1 == 0.0 && c2 == 0.0 {
        return (0.0, 0.0);
    }
    if c2 == 0.0 {
        return scaled_split(flux, 0, c1, u);
    }
    if c1 == 0.0 {
        return scaled_split(flux, 1, c2, u);
    }
    if let (Some(a1), Some(a2)) = (flux.wave_speed_if_linear(0), flux.wave_speed_if_linear(1)) {
        let c = c1 * a1 + c2 * a2;
        return if c > 0.0 {
            (c * u, 0.0)
        } else if c < 0.0 {
            (0.0, -c * u)
        } else {
            (0.0, 0.0)
        };
    }
    quadrature_split_comb(flux, c1, c2, u)
}

/// Split of `c·G^d`: positive scales pass through, negative ones swap the
/// roles of the two primitives.
fn scaled_split(flux: &dyn ScalarFlux, d: usize, c: f64, u: f64) -> (f64, f64) {
    let (p, m) = flux.split(d, u);
    if c == 1.0 {
        (p, m)
    } else if c > 0.0 {
        (c * p, c * m)
    } else {
        (-c * m, -c * p)
    }
}

/// Clipped jacobian of one transport component; exact in all cases since no
/// integration is involved.
fn component_split_jacobian(flux: &dyn ScalarFlux, (c1, c2): (f64, f64), u: f64) -> (f64, f64) {
    if c1 == 0.0 && c2 == 0.0 {
        return (0.0, 0.0);
    }
    let j = if c2 == 0.0 {
        c1 * flux.jacobian(0, u)
    } else if c1 == 0.0 {
        c2 * flux.jacobian(1, u)
    } else {
        c1 * flux.jacobian(0, u) + c2 * flux.jacobian(1, u)
    };
    if j > 0.0 {
        (j, 0.0)
    } else {
        (0.0, -j)
    }
}

/// Outcome of a subcharacteristic check: the smallest eigenvalue of the
/// numerical-diffusion coefficient over the sampled states, and whether it
/// is non-negative (within roundoff).
#[derive(Clone, Copy, Debug)]
pub struct SubcharReport {
    pub ok: bool,
    pub margin: f64,
}

/// Evaluates the subcharacteristic condition of `model` for `flux` over the
/// sampled states. The margin is the minimum eigenvalue of the diffusion
/// coefficient matrix; zero margin passes (non-strict inequality).
pub fn subcharacteristic_margin(
    model: &Model,
    flux: &dyn ScalarFlux,
    samples: &[f64],
) -> SubcharReport {
    let lam = model.lambda();
    let mut margin = f64::INFINITY;
    for &u in samples {
        let m = match model.kind {
            ModelKind::D1Q2 => {
                let a = flux.jacobian(0, u);
                lam * lam - a * a
            }
            ModelKind::D1Q3 => {
                let a = flux.jacobian(0, u);
                (2.0 / 3.0) * lam * lam - a * a
            }
            ModelKind::UpwindD1Q3 => {
                let a = flux.jacobian(0, u);
                lam * a.abs() - a * a
            }
            ModelKind::UpwindD2Q5 => {
                let a = [flux.jacobian(0, u), flux.jacobian(1, u)];
                sym2_min_eig(
                    lam * a[0].abs() - a[0] * a[0],
                    -a[0] * a[1],
                    lam * a[1].abs() - a[1] * a[1],
                )
            }
            ModelKind::UpwindD3Q7 => {
                let a = [flux.jacobian(0, u), flux.jacobian(1, u), flux.jacobian(2, u)];
                let mut m = [[0.0; 3]; 3];
                for d in 0..3 {
                    for i in 0..3 {
                        m[d][i] = if d == i { lam * a[d].abs() } else { 0.0 } - a[d] * a[i];
                    }
                }
                sym3_min_eig(m)
            }
            ModelKind::D2Q9 => {
                let comps = model.partition().coefficients();
                // |∂(component)| per component, order α, β, γ, ζ.
                let mut mag = [0.0; 4];
                for (l, &c) in comps.iter().enumerate() {
                    let (jp, jm) = component_split_jacobian(flux, c, u);
                    mag[l] = jp + jm;
                }
                let a1 = flux.jacobian(0, u);
                let a2 = flux.jacobian(1, u);
                sym2_min_eig(
                    lam * (mag[0] + mag[2] + mag[3]) - a1 * a1,
                    lam * (mag[2] - mag[3]) - a1 * a2,
                    lam * (mag[1] + mag[2] + mag[3]) - a2 * a2,
                )
            }
        };
        margin = margin.min(m);
    }
    let scale = (lam * lam).max(1.0);
    SubcharReport { ok: margin >= -SUBCHAR_TOL * scale, margin }
}

fn sym2_min_eig(a11: f64, a12: f64, a22: f64) -> f64 {
    let mean = 0.5 * (a11 + a22);
    let disc = (0.5 * (a11 - a22)).hypot(a12);
    mean - disc
}

/// Smallest eigenvalue of a symmetric 3×3 matrix (trigonometric closed
/// form; accurate to roundoff, which the check tolerance absorbs).
fn sym3_min_eig(m: [[f64; 3]; 3]) -> f64 {
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    if p1 == 0.0 {
        return m[0][0].min(m[1][1]).min(m[2][2]);
    }
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut b = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            b[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1])
        - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
        + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    let r = (det / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    // Eigenvalues are q + 2p·cos(φ + 2kπ/3); k = 1 gives the smallest.
    q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos()
}
