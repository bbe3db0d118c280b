//! Collision–streaming evolution of the population field.
//!
//! One step is a barrier-separated pipeline: build equilibria (and source
//! populations) from the current macroscopic field, relax every population
//! toward its equilibrium, shift each population by its integer lattice
//! offset, repair the populations entering through non-periodic faces, and
//! re-sum moments — through a per-node scalar root solve when a source term
//! is active, since the half-step source share makes the moment equation
//! implicit.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::flux::ScalarFlux;
use crate::grid::{AxisRule, BoundarySpec, FaceRule, Grid};
use crate::lattice::{subcharacteristic_margin, Model, ModelError, ModelKind, MAX_Q};
use crate::macrofd::MacroHistory;

/// Residual tolerance of the implicit moment solve: the returned state
/// satisfies |U − (Δt/2)S(U) − ΣF| ≤ this.
pub const MOMENT_SOLVE_TOL: f64 = 1e-12;

const HISTORY_CAP: usize = 64;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("relaxation factor {0} outside (0, 2)")]
    RelaxationRate(f64),
    #[error("boundary specification: {0}")]
    Boundary(String),
    #[error("model is {model_dim}-dimensional but the grid is {grid_dim}-dimensional")]
    GridDimension { model_dim: usize, grid_dim: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("initial field has {got} values, grid has {want} nodes")]
    FieldLength { got: usize, want: usize },
    #[error("characteristic closure needs the nine-speed model on a fully bounded 2-D grid, without a source term")]
    ClosureUnsupported,
    #[error("moment solve failed at node {node}: {reason}")]
    MomentSolve { node: usize, reason: String },
    #[error("subcharacteristic condition violated at step {step}: margin {margin:.3e} at lattice speed {lambda}")]
    Subcharacteristic { step: u64, margin: f64, lambda: f64 },
    #[error("no admissible lattice speed found (reached {lambda}, margin {margin:.3e})")]
    SpeedSelection { lambda: f64, margin: f64 },
    #[error("recording reconstruction history requires a fully periodic domain")]
    HistoryNeedsPeriodic,
    #[error("worker pool: {0}")]
    ThreadPool(String),
}

/// How the relaxation rate ω enters the collision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelaxKind {
    /// ω̂ = ω; diffusion positivity needs 0 < ω̂ < 2.
    Explicit,
    /// ω̂ = ω/(1+ω), always in (0,1) — no upper bound on ω itself.
    SemiImplicit,
}

/// Relaxation rate plus its treatment. Two modes with equal effective ω̂
/// produce identical collisions, which is what makes the semi-implicit
/// variant testable against the explicit one.
#[derive(Clone, Copy, Debug)]
pub struct RelaxationMode {
    pub kind: RelaxKind,
    pub omega: f64,
}

impl RelaxationMode {
    pub fn explicit(omega: f64) -> Self {
        Self { kind: RelaxKind::Explicit, omega }
    }

    pub fn semi_implicit(omega: f64) -> Self {
        Self { kind: RelaxKind::SemiImplicit, omega }
    }

    /// The factor that actually multiplies the equilibrium in a collision.
    pub fn omega_hat(&self) -> f64 {
        match self.kind {
            RelaxKind::Explicit => self.omega,
            RelaxKind::SemiImplicit => self.omega / (1.0 + self.omega),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let w = self.omega_hat();
        if w.is_finite() && w > 0.0 && w < 2.0 {
            Ok(())
        } else {
            Err(SolverError::RelaxationRate(w))
        }
    }
}

/// Scalar source term S(x, U) with its U-derivative. The derivative drives
/// the Newton iteration of the implicit moment solve; the well-balanced
/// source populations are built from the flux jacobian, not from this.
pub trait SourceTerm: Send + Sync {
    fn eval(&self, x: [f64; 3], u: f64) -> f64;
    fn d_du(&self, x: [f64; 3], u: f64) -> f64;
}

/// Lattice-speed policy. `Fixed` keeps the model's λ for the whole run
/// (Δt = Δx/λ constant). `Auto` re-selects λ each step from the current
/// field (plus prescribed boundary values) so the subcharacteristic
/// condition keeps holding; λ never decreases, so Δt never increases.
#[derive(Clone, Copy, Debug)]
pub enum SpeedPolicy {
    Fixed,
    Auto { floor: f64, safety: f64 },
}

/// What to do when the subcharacteristic condition fails on the current
/// field: abort the step, record a warning once, or skip the check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubcharPolicy {
    Fail,
    Warn,
    Off,
}

/// Full problem description handed to [`Solver::new`]. Fields are public:
/// construct literally and override what the defaults get wrong.
#[derive(Clone)]
pub struct Problem {
    pub grid: Grid,
    pub model: Model,
    pub flux: Arc<dyn ScalarFlux>,
    pub mode: RelaxationMode,
    pub boundary: BoundarySpec,
    pub source: Option<Arc<dyn SourceTerm>>,
    pub speed: SpeedPolicy,
    pub subchar: SubcharPolicy,
    /// Search interval for the bisection fallback of the moment solve.
    pub newton_bracket: (f64, f64),
    /// Record one macroscopic history level per step for the multi-step
    /// reconstruction oracle (periodic domains only).
    pub record_history: bool,
    /// Worker threads for collision/streaming/moment loops; 1 = serial.
    /// Parallel execution is bit-identical to serial (no reductions are
    /// reordered).
    pub threads: usize,
}

impl Problem {
    pub fn new(grid: Grid, model: Model, flux: Arc<dyn ScalarFlux>) -> Self {
        Self {
            grid,
            model,
            flux,
            mode: RelaxationMode::explicit(1.0),
            boundary: BoundarySpec::periodic(),
            source: None,
            speed: SpeedPolicy::Fixed,
            subchar: SubcharPolicy::Warn,
            newton_bracket: (-1e6, 1e6),
            record_history: false,
            threads: 1,
        }
    }
}

/// Relaxes every population toward its equilibrium, nodewise:
/// `out = (1−ω̂)·f + ω̂·eq`, plus `(Δt/2)·r` when source populations are
/// given. Rejects effective rates outside (0, 2).
pub fn collide(
    out: &mut [Vec<f64>],
    f: &[Vec<f64>],
    eq: &[Vec<f64>],
    mode: RelaxationMode,
    source: Option<(&[Vec<f64>], f64)>,
) -> Result<(), SolverError> {
    mode.validate()?;
    let w = mode.omega_hat();
    let keep = 1.0 - w;
    for (q, o) in out.iter_mut().enumerate() {
        collide_one(o, &f[q], &eq[q], keep, w, source.map(|(r, dt)| (&r[q][..], dt)));
    }
    Ok(())
}

fn collide_one(
    out: &mut [f64],
    f: &[f64],
    eq: &[f64],
    keep: f64,
    w: f64,
    source: Option<(&[f64], f64)>,
) {
    match source {
        None => {
            for ((o, &fv), &ev) in out.iter_mut().zip(f).zip(eq) {
                *o = keep * fv + w * ev;
            }
        }
        Some((r, dt)) => {
            let half = 0.5 * dt;
            for (((o, &fv), &ev), &rv) in out.iter_mut().zip(f).zip(eq).zip(r) {
                *o = keep * fv + w * ev + half * rv;
            }
        }
    }
}

/// Shifts every population by its integer lattice offset: an exact copy,
/// wrapping on periodic axes. Populations whose source node lies outside a
/// bounded axis are zeroed; the boundary pass fills them afterwards.
pub fn stream(
    out: &mut [Vec<f64>],
    f: &[Vec<f64>],
    grid: &Grid,
    boundary: &BoundarySpec,
    kind: ModelKind,
) {
    let offsets = kind.offsets();
    for (q, o) in out.iter_mut().enumerate() {
        stream_one(o, &f[q], grid, boundary, offsets[q]);
    }
}

fn axis_source_map(n: usize, m: i32, rule: AxisRule) -> Vec<Option<usize>> {
    (0..n)
        .map(|dst| {
            let s = dst as isize - m as isize;
            match rule {
                AxisRule::Periodic => Some(crate::grid::wrap(s, n)),
                AxisRule::Bounded => (0 <= s && s < n as isize).then_some(s as usize),
            }
        })
        .collect()
}

fn stream_one(out: &mut [f64], f: &[f64], grid: &Grid, boundary: &BoundarySpec, m: [i32; 3]) {
    let [nx, ny, nz] = grid.shape();
    let mx = axis_source_map(nx, m[0], boundary.axis_rule(0));
    let my = axis_source_map(ny, m[1], boundary.axis_rule(1));
    let mz = axis_source_map(nz, m[2], boundary.axis_rule(2));
    let mut dst = 0;
    for k in 0..nz {
        for j in 0..ny {
            let plane = match (mz[k], my[j]) {
                (Some(sk), Some(sj)) => Some((sk * ny + sj) * nx),
                _ => None,
            };
            for sx in mx.iter().take(nx) {
                out[dst] = match (plane, sx) {
                    (Some(base), Some(si)) => f[base + si],
                    _ => 0.0,
                };
                dst += 1;
            }
        }
    }
}

/// Zeroth moment per node: `U_i = Σ_q f_q(i)`, accumulated in fixed
/// population order (so parallel and serial execution agree bitwise).
pub fn moments(u: &mut [f64], f: &[Vec<f64>]) {
    u.copy_from_slice(&f[0]);
    for fq in &f[1..] {
        for (uv, &fv) in u.iter_mut().zip(fq) {
            *uv += fv;
        }
    }
}

/// Solves `U − (Δt/2)·S(U) = f_sum` for U. Newton iteration from `guess`
/// (the previous-step nodal value), at most 50 iterations; when Newton
/// stalls or leaves the floats, falls back to bisection on the sign-change
/// subinterval of `bracket` nearest the guess. Succeeds only with residual
/// at or below [`MOMENT_SOLVE_TOL`].
pub fn newton_moment_solve(
    f_sum: f64,
    s: impl Fn(f64) -> f64,
    ds: impl Fn(f64) -> f64,
    dt: f64,
    guess: f64,
    bracket: (f64, f64),
) -> Result<f64, String> {
    let g = |u: f64| u - 0.5 * dt * s(u) - f_sum;
    let mut u = guess;
    for _ in 0..50 {
        let gv = g(u);
        if gv.abs() <= MOMENT_SOLVE_TOL {
            return Ok(u);
        }
        let slope = 1.0 - 0.5 * dt * ds(u);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = u - gv / slope;
        if !next.is_finite() {
            break;
        }
        u = next;
    }
    if u.is_finite() && g(u).abs() <= MOMENT_SOLVE_TOL {
        return Ok(u);
    }

    let (lo, hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    let cells = 256;
    let h = (hi - lo) / cells as f64;
    let mut best: Option<(f64, f64, f64)> = None;
    let mut xa = lo;
    let mut ga = g(xa);
    if ga.abs() <= MOMENT_SOLVE_TOL {
        return Ok(xa);
    }
    for c in 1..=cells {
        let xb = if c == cells { hi } else { lo + c as f64 * h };
        let gb = g(xb);
        if gb.abs() <= MOMENT_SOLVE_TOL {
            return Ok(xb);
        }
        if ga * gb < 0.0 {
            let closer = match &best {
                None => true,
                Some((blo, bhi, _)) => {
                    (0.5 * (xa + xb) - guess).abs() < (0.5 * (blo + bhi) - guess).abs()
                }
            };
            if closer {
                best = Some((xa, xb, ga));
            }
        }
        xa = xb;
        ga = gb;
    }
    let (mut blo, mut bhi, mut glo) =
        best.ok_or_else(|| format!("no sign change in [{lo}, {hi}] after Newton stalled"))?;
    for _ in 0..200 {
        let mid = 0.5 * (blo + bhi);
        let gm = g(mid);
        if gm.abs() <= MOMENT_SOLVE_TOL {
            return Ok(mid);
        }
        if gm * glo > 0.0 {
            blo = mid;
            glo = gm;
        } else {
            bhi = mid;
        }
        if bhi - blo <= f64::EPSILON * mid.abs().max(1.0) {
            break;
        }
    }
    Err(format!(
        "bisection stalled at residual {:.3e}",
        g(0.5 * (blo + bhi)).abs()
    ))
}

/// Fills the unknown boundary populations of the nine-speed model from
/// prescribed macroscopic boundary values.
///
/// Measured against the equilibrium of the prescribed value, each face
/// balances every entering population against its opposite plus an equal
/// share of the face-parallel trio: `f_u^neq = −f_o^neq − t` with
/// `t = (f_a + f_5 + f_b)^neq / 3`. Corners pair the three entering
/// populations with their opposites (`f_u^neq = −f_o^neq`), and the two
/// diagonal populations that neither enter nor leave split the rest
/// population's defect (`−f_5^neq/2` each). Every rule cancels defects
/// pairwise, so `Σ_q f_q^neq = 0` at each boundary node up to roundoff —
/// the boundary moment evaluates to the prescribed value automatically.
pub fn apply_d2q9_boundaries(
    f: &mut [Vec<f64>],
    grid: &Grid,
    model: &Model,
    flux: &dyn ScalarFlux,
    prescribed: &[f64],
) -> Result<(), SolverError> {
    if model.kind != ModelKind::D2Q9 || grid.dim() != 2 {
        return Err(SolverError::ClosureUnsupported);
    }
    let [nx, ny, _] = grid.shape();
    let mut close = |i: usize, j: usize, eqb: &mut [f64; MAX_Q], neq: &mut [f64; MAX_Q]| {
        let node = grid.index([i, j, 0]);
        model.equilibrium_into(flux, prescribed[node], eqb);
        for q in 0..9 {
            neq[q] = f[q][node] - eqb[q];
        }
        let (left, right) = (i == 0, i == nx - 1);
        let (bottom, top) = (j == 0, j == ny - 1);
        let fill: &[usize] = match (left, right, bottom, top) {
            (true, _, true, _) => {
                neq[0] = -neq[5];
                neq[1] = -neq[6];
                neq[2] = -neq[7];
                let share = -0.5 * neq[4];
                neq[3] = share;
                neq[8] = share;
                &[0, 1, 2, 3, 8]
            }
            (_, true, true, _) => {
                neq[5] = -neq[0];
                neq[1] = -neq[6];
                neq[3] = -neq[8];
                let share = -0.5 * neq[4];
                neq[2] = share;
                neq[7] = share;
                &[5, 1, 3, 2, 7]
            }
            (true, _, _, true) => {
                neq[0] = -neq[5];
                neq[6] = -neq[1];
                neq[8] = -neq[3];
                let share = -0.5 * neq[4];
                neq[2] = share;
                neq[7] = share;
                &[0, 6, 8, 2, 7]
            }
            (_, true, _, true) => {
                neq[5] = -neq[0];
                neq[6] = -neq[1];
                neq[7] = -neq[2];
                let share = -0.5 * neq[4];
                neq[3] = share;
                neq[8] = share;
                &[5, 6, 7, 3, 8]
            }
            (true, ..) => {
                let t = (neq[1] + neq[4] + neq[6]) / 3.0;
                neq[0] = -neq[5] - t;
                neq[2] = -neq[7] - t;
                neq[8] = -neq[3] - t;
                &[0, 2, 8]
            }
            (_, true, ..) => {
                let t = (neq[1] + neq[4] + neq[6]) / 3.0;
                neq[5] = -neq[0] - t;
                neq[3] = -neq[8] - t;
                neq[7] = -neq[2] - t;
                &[5, 3, 7]
            }
            (_, _, true, _) => {
                let t = (neq[0] + neq[4] + neq[5]) / 3.0;
                neq[1] = -neq[6] - t;
                neq[2] = -neq[7] - t;
                neq[3] = -neq[8] - t;
                &[1, 2, 3]
            }
            (_, _, _, true) => {
                let t = (neq[0] + neq[4] + neq[5]) / 3.0;
                neq[6] = -neq[1] - t;
                neq[7] = -neq[2] - t;
                neq[8] = -neq[3] - t;
                &[6, 7, 8]
            }
            _ => unreachable!("interior node passed to the boundary closure"),
        };
        for &q in fill {
            f[q][node] = eqb[q] + neq[q];
        }
    };

    let mut eqb = [0.0; MAX_Q];
    let mut neq = [0.0; MAX_Q];
    for j in 0..ny {
        close(0, j, &mut eqb, &mut neq);
        close(nx - 1, j, &mut eqb, &mut neq);
    }
    for i in 1..nx - 1 {
        close(i, 0, &mut eqb, &mut neq);
        close(i, ny - 1, &mut eqb, &mut neq);
    }
    Ok(())
}

/// The time-marching state: population field, its macroscopic moment, and
/// the clock. Construct with [`Solver::new`] (populations start at the
/// equilibrium of the initial field) and advance with [`Solver::step`].
pub struct Solver {
    grid: Grid,
    model: Model,
    flux: Arc<dyn ScalarFlux>,
    mode: RelaxationMode,
    boundary: BoundarySpec,
    source: Option<Arc<dyn SourceTerm>>,
    speed: SpeedPolicy,
    subchar: SubcharPolicy,
    newton_bracket: (f64, f64),
    pool: Option<rayon::ThreadPool>,
    f: Vec<Vec<f64>>,
    scratch: Vec<Vec<f64>>,
    eq: Vec<Vec<f64>>,
    src: Vec<Vec<f64>>,
    u: Vec<f64>,
    time: f64,
    steps: u64,
    dt: f64,
    history: Option<MacroHistory>,
    warnings: Vec<String>,
    warned_subchar: bool,
}

impl Solver {
    pub fn new(problem: Problem, u0: Vec<f64>) -> Result<Self, SolverError> {
        let Problem {
            grid,
            model,
            flux,
            mode,
            boundary,
            source,
            speed,
            subchar,
            newton_bracket,
            record_history,
            threads,
        } = problem;
        mode.validate()?;
        model.check_flux(&*flux)?;
        if model.kind.dim() != grid.dim() {
            return Err(SolverError::GridDimension {
                model_dim: model.kind.dim(),
                grid_dim: grid.dim(),
            });
        }
        boundary.validate(&grid).map_err(SolverError::Boundary)?;
        if u0.len() != grid.len() {
            return Err(SolverError::FieldLength { got: u0.len(), want: grid.len() });
        }
        let uses_closure = (0..grid.dim())
            .any(|d| boundary.faces[d].contains(&FaceRule::Closure));
        if uses_closure {
            let all_closure =
                (0..grid.dim()).all(|d| boundary.faces[d] == [FaceRule::Closure; 2]);
            if !all_closure
                || model.kind != ModelKind::D2Q9
                || grid.dim() != 2
                || source.is_some()
            {
                return Err(SolverError::ClosureUnsupported);
            }
        }
        if record_history && !boundary.is_fully_periodic(grid.dim()) {
            return Err(SolverError::HistoryNeedsPeriodic);
        }
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| SolverError::ThreadPool(e.to_string()))?,
            )
        } else {
            None
        };

        let n = grid.len();
        let qn = model.q();
        let history = record_history.then(|| MacroHistory::new(grid.clone(), mode.omega_hat(), HISTORY_CAP));
        let mut warnings = Vec::new();
        if matches!(speed, SpeedPolicy::Auto { .. }) && (mode.omega_hat() - 1.0).abs() > 0.0 {
            warnings.push(
                "adaptive lattice speed with effective rate != 1: per-step dt changes; \
                 the fixed-dt consistency estimate no longer applies"
                    .to_string(),
            );
        }

        let mut solver = Self {
            grid,
            model,
            flux,
            mode,
            boundary,
            source,
            speed,
            subchar,
            newton_bracket,
            pool,
            f: vec![vec![0.0; n]; qn],
            scratch: vec![vec![0.0; n]; qn],
            eq: vec![vec![0.0; n]; qn],
            src: vec![vec![0.0; n]; qn],
            u: u0,
            time: 0.0,
            steps: 0,
            dt: 0.0,
            history,
            warnings,
            warned_subchar: false,
        };
        solver.select_speed()?;
        solver.build_equilibrium();
        for q in 0..qn {
            solver.f[q].copy_from_slice(&solver.eq[q]);
        }
        Ok(solver)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Accumulated simulation time. For reference evaluation prefer
    /// `steps() as f64 * dt()` on fixed-speed runs — products do not carry
    /// the accumulation roundoff.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lambda(&self) -> f64 {
        self.model.lambda()
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn populations(&self) -> &[Vec<f64>] {
        &self.f
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn history(&self) -> Option<&MacroHistory> {
        self.history.as_ref()
    }

    /// One full collide → stream → boundary → moment cycle; advances the
    /// clock by Δt = Δx/λ.
    pub fn step(&mut self) -> Result<(), SolverError> {
        self.select_speed()?;
        self.check_subchar()?;
        if self.history.is_some() {
            let model = self.model;
            let flux = Arc::clone(&self.flux);
            let dt = self.dt;
            if let Some(h) = self.history.as_mut() {
                h.record(&model, &*flux, &self.u, dt);
            }
        }
        self.build_equilibrium();
        let has_source = self.source.is_some();
        if has_source {
            self.build_source();
        }

        let src_arg = if has_source { Some((&self.src[..], self.dt)) } else { None };
        match &self.pool {
            None => collide(&mut self.scratch, &self.f, &self.eq, self.mode, src_arg)?,
            Some(pool) => {
                // mode was validated at construction; rates cannot change.
                let w = self.mode.omega_hat();
                let (scratch, f, eq) = (&mut self.scratch, &self.f, &self.eq);
                pool.install(|| collide_par(scratch, f, eq, w, src_arg));
            }
        }

        match &self.pool {
            None => stream(&mut self.f, &self.scratch, &self.grid, &self.boundary, self.model.kind),
            Some(pool) => {
                let (f, scratch, grid, boundary) =
                    (&mut self.f, &self.scratch, &self.grid, &self.boundary);
                let kind = self.model.kind;
                pool.install(|| stream_par(f, scratch, grid, boundary, kind));
            }
        }

        self.apply_boundaries()?;
        self.update_moments()?;

        if has_source {
            // restore physical populations: f = F + (Δt/2)·r at the new state
            self.build_source();
            let half = 0.5 * self.dt;
            for q in 0..self.model.q() {
                for (fv, &rv) in self.f[q].iter_mut().zip(&self.src[q]) {
                    *fv += half * rv;
                }
            }
        }

        self.time += self.dt;
        self.steps += 1;
        Ok(())
    }

    pub fn run_steps(&mut self, n: usize) -> Result<(), SolverError> {
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    /// Advances until the clock first reaches `t_final` (1e-12 guard), so
    /// the final time may overshoot by less than one Δt. Returns the number
    /// of steps taken.
    pub fn run_until(&mut self, t_final: f64) -> Result<usize, SolverError> {
        let guard = 1e-12 * t_final.abs().max(1.0);
        let mut taken = 0;
        while self.time < t_final - guard {
            self.step()?;
            taken += 1;
        }
        Ok(taken)
    }

    fn select_speed(&mut self) -> Result<(), SolverError> {
        if let SpeedPolicy::Auto { floor, safety } = self.speed {
            let flux = Arc::clone(&self.flux);
            let mut lam = self.model.sufficient_speed(&*flux, &self.u) * safety;
            if let Some(p) = &self.boundary.prescribed {
                lam = lam.max(self.model.sufficient_speed(&*flux, p) * safety);
            }
            lam = lam.max(floor).max(self.model.lambda());
            self.model.set_lambda(lam)?;
            let mut rep = self.margin_over_all(&*flux);
            let mut tries = 0;
            while !rep.ok && tries < 64 {
                lam *= 1.05;
                self.model.set_lambda(lam)?;
                rep = self.margin_over_all(&*flux);
                tries += 1;
            }
            if !rep.ok {
                return Err(SolverError::SpeedSelection { lambda: lam, margin: rep.margin });
            }
        }
        self.dt = self.grid.dx() / self.model.lambda();
        Ok(())
    }

    fn margin_over_all(&self, flux: &dyn ScalarFlux) -> crate::lattice::SubcharReport {
        let mut rep = subcharacteristic_margin(&self.model, flux, &self.u);
        if let Some(p) = &self.boundary.prescribed {
            let rb = subcharacteristic_margin(&self.model, flux, p);
            if rb.margin < rep.margin {
                rep = rb;
            }
        }
        rep
    }

    fn check_subchar(&mut self) -> Result<(), SolverError> {
        if self.subchar == SubcharPolicy::Off || matches!(self.speed, SpeedPolicy::Auto { .. }) {
            return Ok(()); // Auto already guarantees an admissible margin
        }
        let flux = Arc::clone(&self.flux);
        let rep = self.margin_over_all(&*flux);
        if rep.ok {
            return Ok(());
        }
        match self.subchar {
            SubcharPolicy::Fail => Err(SolverError::Subcharacteristic {
                step: self.steps,
                margin: rep.margin,
                lambda: self.model.lambda(),
            }),
            _ => {
                if !self.warned_subchar {
                    self.warnings.push(format!(
                        "subcharacteristic margin {:.3e} < 0 at step {} (lattice speed {}); continuing",
                        rep.margin,
                        self.steps,
                        self.model.lambda()
                    ));
                    self.warned_subchar = true;
                }
                Ok(())
            }
        }
    }

    fn build_equilibrium(&mut self) {
        let model = self.model;
        let flux = Arc::clone(&self.flux);
        let qn = model.q();
        let mut buf = [0.0; MAX_Q];
        for (i, &uv) in self.u.iter().enumerate() {
            model.equilibrium_into(&*flux, uv, &mut buf);
            for q in 0..qn {
                self.eq[q][i] = buf[q];
            }
        }
    }

    fn build_source(&mut self) {
        let model = self.model;
        let flux = Arc::clone(&self.flux);
        let term = self.source.clone().expect("source field built without a source term");
        let qn = model.q();
        let mut buf = [0.0; MAX_Q];
        for (i, &uv) in self.u.iter().enumerate() {
            let s = term.eval(self.grid.position(i), uv);
            model.source_into(&*flux, uv, s, &mut buf);
            for q in 0..qn {
                self.src[q][i] = buf[q];
            }
        }
    }

    fn apply_boundaries(&mut self) -> Result<(), SolverError> {
        if self.boundary.is_fully_periodic(self.grid.dim()) {
            return Ok(());
        }
        let uses_closure = (0..self.grid.dim())
            .any(|d| self.boundary.faces[d].contains(&FaceRule::Closure));
        if uses_closure {
            let prescribed = Arc::clone(
                self.boundary.prescribed.as_ref().expect("validated at construction"),
            );
            return apply_d2q9_boundaries(
                &mut self.f,
                &self.grid,
                &self.model,
                &*self.flux,
                &prescribed,
            );
        }
        self.fill_inflow();
        Ok(())
    }

    /// Dirichlet repair: every population at a prescribed-value face node is
    /// reset to the equilibrium of that value, so the node holds its boundary
    /// state regardless of what streamed in (and regardless of the source
    /// term, which `update_moments` likewise skips there). Filling only the
    /// populations entering from off-domain would let a source term act on
    /// the face node and drift it away from the prescribed value.
    fn fill_inflow(&mut self) {
        let model = self.model;
        let flux = Arc::clone(&self.flux);
        let prescribed = Arc::clone(
            self.boundary.prescribed.as_ref().expect("validated at construction"),
        );
        let qn = model.q();
        let f = &mut self.f;
        let mut eqb = [0.0; MAX_Q];
        for_each_face_node(&self.grid, &self.boundary, FaceRule::Inflow, |node| {
            model.equilibrium_into(&*flux, prescribed[node], &mut eqb);
            for (pops, &e) in f.iter_mut().zip(eqb.iter()).take(qn) {
                pops[node] = e;
            }
        });
    }

    fn update_moments(&mut self) -> Result<(), SolverError> {
        match self.source.clone() {
            None => {
                match &self.pool {
                    None => moments(&mut self.u, &self.f),
                    Some(pool) => {
                        let (u, f) = (&mut self.u, &self.f);
                        pool.install(|| moments_par(u, f));
                    }
                }
            }
            Some(term) => {
                let qn = self.model.q();
                let dt = self.dt;
                let bracket = self.newton_bracket;
                for i in 0..self.u.len() {
                    let mut fsum = self.f[0][i];
                    for q in 1..qn {
                        fsum += self.f[q][i];
                    }
                    let x = self.grid.position(i);
                    self.u[i] = newton_moment_solve(
                        fsum,
                        |uu| term.eval(x, uu),
                        |uu| term.d_du(x, uu),
                        dt,
                        self.u[i],
                        bracket,
                    )
                    .map_err(|reason| SolverError::MomentSolve { node: i, reason })?;
                }
            }
        }
        // Dirichlet faces hold their prescribed value exactly: the summation
        // and source solve above are overridden at those nodes.
        if self.boundary.prescribed.is_some() {
            let prescribed = Arc::clone(self.boundary.prescribed.as_ref().unwrap());
            let u = &mut self.u;
            for_each_face_node(&self.grid, &self.boundary, FaceRule::Inflow, |node| {
                u[node] = prescribed[node];
            });
        }
        Ok(())
    }
}

/// Visits every node on each bounded face whose rule matches `rule`.
/// Corner nodes shared by two matching faces are visited once per face;
/// all uses here write the same value, so the repeat is harmless.
fn for_each_face_node(
    grid: &Grid,
    boundary: &BoundarySpec,
    rule: FaceRule,
    mut visit: impl FnMut(usize),
) {
    let shape = grid.shape();
    for d in 0..grid.dim() {
        if boundary.axis_rule(d) != AxisRule::Bounded {
            continue;
        }
        let (a1, a2) = match d {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for side in 0..2 {
            if boundary.faces[d][side] != rule {
                continue;
            }
            let mut ijk = [0usize; 3];
            ijk[d] = if side == 0 { 0 } else { shape[d] - 1 };
            for c2 in 0..shape[a2] {
                for c1 in 0..shape[a1] {
                    ijk[a1] = c1;
                    ijk[a2] = c2;
                    visit(grid.index(ijk));
                }
            }
        }
    }
}

fn collide_par(
    out: &mut [Vec<f64>],
    f: &[Vec<f64>],
    eq: &[Vec<f64>],
    w: f64,
    source: Option<(&[Vec<f64>], f64)>,
) {
    let keep = 1.0 - w;
    out.par_iter_mut().enumerate().for_each(|(q, o)| {
        collide_one(o, &f[q], &eq[q], keep, w, source.map(|(r, dt)| (&r[q][..], dt)));
    });
}

fn stream_par(
    out: &mut [Vec<f64>],
    f: &[Vec<f64>],
    grid: &Grid,
    boundary: &BoundarySpec,
    kind: ModelKind,
) {
    let offsets = kind.offsets();
    out.par_iter_mut().enumerate().for_each(|(q, o)| {
        stream_one(o, &f[q], grid, boundary, offsets[q]);
    });
}

fn moments_par(u: &mut [f64], f: &[Vec<f64>]) {
    const CHUNK: usize = 4096;
    u.par_chunks_mut(CHUNK).enumerate().for_each(|(c, uc)| {
        let base = c * CHUNK;
        for (o, uv) in uc.iter_mut().enumerate() {
            let i = base + o;
            let mut s = f[0][i];
            for fq in &f[1..] {
                s += fq[i];
            }
            *uv = s;
        }
    });
}
