//! Scalar flux functions and their jacobian-sign splits.
//!
//! Every flux component is split as `G = G⁺ - G⁻` where
//! `G⁺(u) = ∫₀ᵘ max(G'(s), 0) ds` and `G⁻(u) = ∫₀ᵘ max(-G'(s), 0) ds`.
//! Both integrands are non-negative, so both primitives are non-decreasing
//! in `u` (and therefore negative for negative `u`); their derivatives are
//! the non-negative wave-speed parts used by the upwind equilibria.

use std::sync::Arc;
use thiserror::Error;

/// Tolerance on `G(0)` beyond which the sign-split primitives (anchored at
/// `u = 0`) can no longer reproduce the flux.
pub const ZERO_DATUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("flux `{name}`: u = {u} outside admissible range [{lo}, {hi}]")]
    Domain { name: String, u: f64, lo: f64, hi: f64 },
    #[error("flux `{name}`: G({d}, 0) = {value}, split primitives require G(0) = 0")]
    ZeroDatum { name: String, d: usize, value: f64 },
}

/// A scalar flux with one component per spatial direction.
///
/// `split` defaults to adaptive quadrature of the sign-clipped jacobian, so
/// implementors only have to provide `eval` and `jacobian`; closed forms
/// should override it. `wave_speed_if_linear` lets downstream code combine
/// flux components exactly when `G^d(u) = c·u`.
pub trait ScalarFlux: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, d: usize, u: f64) -> f64;
    fn jacobian(&self, d: usize, u: f64) -> f64;

    /// `(G⁺(u), G⁻(u))` for direction `d`.
    fn split(&self, d: usize, u: f64) -> (f64, f64) {
        quadrature_split(self, d, u)
    }

    /// `(max(G'(u), 0), max(-G'(u), 0))`; both parts are non-negative and
    /// their difference is the jacobian. A zero jacobian belongs to the
    /// minus branch by convention, making both parts zero there.
    fn split_jacobian(&self, d: usize, u: f64) -> (f64, f64) {
        let a = self.jacobian(d, u);
        if a > 0.0 {
            (a, 0.0)
        } else {
            (0.0, -a)
        }
    }

    /// `Some(c)` when `G^d(u) = c·u` for a constant `c`.
    fn wave_speed_if_linear(&self, _d: usize) -> Option<f64> {
        None
    }
}

/// One-dimensional linear advection `G(u) = a·u`.
#[derive(Clone, Copy, Debug)]
pub struct LinearAdvection {
    pub a: f64,
}

impl ScalarFlux for LinearAdvection {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, _d: usize, u: f64) -> f64 {
        self.a * u
    }
    fn jacobian(&self, _d: usize, _u: f64) -> f64 {
        self.a
    }
    fn split(&self, _d: usize, u: f64) -> (f64, f64) {
        linear_split(self.a, u)
    }
    fn wave_speed_if_linear(&self, _d: usize) -> Option<f64> {
        Some(self.a)
    }
}

/// `G^d(u) = u` in every direction: advection at unit speed along the main
/// diagonal of the domain.
#[derive(Clone, Copy, Debug)]
pub struct UniformAdvection {
    pub dim: usize,
}

impl ScalarFlux for UniformAdvection {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _d: usize, u: f64) -> f64 {
        u
    }
    fn jacobian(&self, _d: usize, _u: f64) -> f64 {
        1.0
    }
    fn split(&self, _d: usize, u: f64) -> (f64, f64) {
        (u, 0.0)
    }
    fn wave_speed_if_linear(&self, _d: usize) -> Option<f64> {
        Some(1.0)
    }
}

/// Two-dimensional advection at angle θ: `G¹ = a·u`, `G² = b·u` with
/// `a = cos θ`, `b = sin θ`.
#[derive(Clone, Copy, Debug)]
pub struct ObliqueAdvection {
    pub a: f64,
    pub b: f64,
}

impl ObliqueAdvection {
    pub fn from_angle(theta: f64) -> Self {
        Self { a: theta.cos(), b: theta.sin() }
    }

    fn speed(&self, d: usize) -> f64 {
        if d == 0 {
            self.a
        } else {
            self.b
        }
    }
}

impl ScalarFlux for ObliqueAdvection {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, d: usize, u: f64) -> f64 {
        self.speed(d) * u
    }
    fn jacobian(&self, d: usize, _u: f64) -> f64 {
        self.speed(d)
    }
    fn split(&self, d: usize, u: f64) -> (f64, f64) {
        linear_split(self.speed(d), u)
    }
    fn wave_speed_if_linear(&self, d: usize) -> Option<f64> {
        Some(self.speed(d))
    }
}

/// Inviscid Burgers flux `G(u) = u²/2`.
#[derive(Clone, Copy, Debug)]
pub struct Burgers;

impl ScalarFlux for Burgers {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, _d: usize, u: f64) -> f64 {
        0.5 * u * u
    }
    fn jacobian(&self, _d: usize, u: f64) -> f64 {
        u
    }
    fn split(&self, _d: usize, u: f64) -> (f64, f64) {
        // G' = u: the positive part integrates to u²/2 on u > 0, the
        // negative part to -u²/2 on u < 0 (primitives stay non-decreasing).
        if u > 0.0 {
            (0.5 * u * u, 0.0)
        } else if u < 0.0 {
            (0.0, -0.5 * u * u)
        } else {
            (0.0, 0.0)
        }
    }
}

fn linear_split(a: f64, u: f64) -> (f64, f64) {
    if a > 0.0 {
        (a * u, 0.0)
    } else if a < 0.0 {
        (0.0, -a * u)
    } else {
        (0.0, 0.0)
    }
}

/// A named flux together with the `U` interval its split is validated over.
#[derive(Clone)]
pub struct FluxEntry {
    pub name: &'static str,
    pub flux: Arc<dyn ScalarFlux>,
    pub admissible: (f64, f64),
}

impl FluxEntry {
    pub fn linear(a: f64) -> Self {
        Self { name: "linear-advection", flux: Arc::new(LinearAdvection { a }), admissible: (-1e9, 1e9) }
    }

    pub fn uniform(dim: usize) -> Self {
        Self { name: "uniform-advection", flux: Arc::new(UniformAdvection { dim }), admissible: (-1e9, 1e9) }
    }

    pub fn oblique(theta: f64) -> Self {
        Self {
            name: "oblique-advection",
            flux: Arc::new(ObliqueAdvection::from_angle(theta)),
            admissible: (-1e9, 1e9),
        }
    }

    pub fn burgers() -> Self {
        Self { name: "burgers", flux: Arc::new(Burgers), admissible: (-16.0, 16.0) }
    }
}

/// The built-in fluxes with default parameters.
pub fn flux_library() -> Vec<FluxEntry> {
    vec![
        FluxEntry::linear(1.0),
        FluxEntry::burgers(),
        FluxEntry::uniform(2),
        FluxEntry::oblique(std::f64::consts::FRAC_PI_4),
    ]
}

/// Validated sign split of an entry's flux at `u`.
///
/// Errors if `u` leaves the entry's admissible interval or if `G(0)` is not
/// zero (the primitives are anchored at the origin and could not reproduce
/// such a flux).
pub fn split_by_sign(entry: &FluxEntry, d: usize, u: f64) -> Result<(f64, f64), FluxError> {
    let (lo, hi) = entry.admissible;
    if !(u >= lo && u <= hi) {
        return Err(FluxError::Domain { name: entry.name.to_string(), u, lo, hi });
    }
    let datum = entry.flux.eval(d, 0.0);
    if datum.abs() > ZERO_DATUM_TOL {
        return Err(FluxError::ZeroDatum { name: entry.name.to_string(), d, value: datum });
    }
    Ok(entry.flux.split(d, u))
}

/// Result of sweeping `|(G⁺ - G⁻) - G|` over sample states.
#[derive(Clone, Copy, Debug)]
pub struct SplitCheck {
    pub max_defect: f64,
    pub ok: bool,
}

/// Checks that the split reproduces the flux on the given samples in every
/// direction. Passes when the largest defect is at most 1e-12.
pub fn verify_split_consistency(flux: &dyn ScalarFlux, samples: &[f64]) -> SplitCheck {
    let mut max_defect = 0.0f64;
    for d in 0..flux.dim() {
        for &u in samples {
            let (p, m) = flux.split(d, u);
            let defect = ((p - m) - flux.eval(d, u)).abs();
            max_defect = max_defect.max(defect);
        }
    }
    SplitCheck { max_defect, ok: max_defect <= 1e-12 }
}

/// Sign-split primitives by adaptive Simpson quadrature of the clipped
/// jacobian. Fallback for fluxes without a closed-form split.
pub fn quadrature_split<F: ScalarFlux + ?Sized>(flux: &F, d: usize, u: f64) -> (f64, f64) {
    if u == 0.0 {
        return (0.0, 0.0);
    }
    let clip = |s: f64| {
        let a = flux.jacobian(d, s);
        if a > 0.0 {
            (a, 0.0)
        } else {
            (0.0, -a)
        }
    };
    let (lo, hi, sign) = if u > 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
    let (p, m) = adaptive_simpson_pair(&clip, lo, hi, 1e-13, 48);
    (sign * p, sign * m)
}

/// Sign-split primitives of the combined component `c1·G⁰ + c2·G¹` by
/// adaptive quadrature of its clipped jacobian. Fallback for nonlinear
/// fluxes recombined across directions.
pub(crate) fn quadrature_split_comb(
    flux: &dyn ScalarFlux,
    c1: f64,
    c2: f64,
    u: f64,
) -> (f64, f64) {
    if u == 0.0 {
        return (0.0, 0.0);
    }
    let clip = |s: f64| {
        let a = c1 * flux.jacobian(0, s) + c2 * flux.jacobian(1, s);
        if a > 0.0 {
            (a, 0.0)
        } else {
            (0.0, -a)
        }
    };
    let (lo, hi, sign) = if u > 0.0 { (0.0, u, 1.0) } else { (u, 0.0, -1.0) };
    let (p, m) = adaptive_simpson_pair(&clip, lo, hi, 1e-13, 48);
    (sign * p, sign * m)
}

/// Adaptive Simpson of a pair of integrands sharing evaluation points.
fn adaptive_simpson_pair<F: Fn(f64) -> (f64, f64)>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, m, b, fa, fm, fb, whole, tol, depth)
}

fn simpson(fa: (f64, f64), fm: (f64, f64), fb: (f64, f64), h: f64) -> (f64, f64) {
    (
        h / 6.0 * (fa.0 + 4.0 * fm.0 + fb.0),
        h / 6.0 * (fa.1 + 4.0 * fm.1 + fb.1),
    )
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> (f64, f64)>(
    f: &F,
    a: f64,
    m: f64,
    b: f64,
    fa: (f64, f64),
    fm: (f64, f64),
    fb: (f64, f64),
    whole: (f64, f64),
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let err = ((left.0 + right.0 - whole.0).abs(), (left.1 + right.1 - whole.1).abs());
    if depth == 0 || (err.0 <= 15.0 * tol && err.1 <= 15.0 * tol) {
        return (left.0 + right.0, left.1 + right.1);
    }
    let l = recurse(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = recurse(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    (l.0 + r.0, l.1 + r.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A flux that relies on the default quadrature split.
    struct QuadOnlyBurgers;

    impl ScalarFlux for QuadOnlyBurgers {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _d: usize, u: f64) -> f64 {
            0.5 * u * u
        }
        fn jacobian(&self, _d: usize, u: f64) -> f64 {
            u
        }
    }

    #[test]
    fn burgers_split_closed_values() {
        let (p, m) = Burgers.split(0, -0.5);
        assert_eq!(p, 0.0);
        assert_eq!(m, -0.125);
        let (p, m) = Burgers.split(0, 1.0);
        assert_eq!(p, 0.5);
        assert_eq!(m, 0.0);
        assert_eq!(Burgers.split(0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn split_difference_recovers_flux() {
        let samples: Vec<f64> = (-40..=40).map(|k| k as f64 * 0.2).collect();
        for flux in [&Burgers as &dyn ScalarFlux, &LinearAdvection { a: -1.3 }, &UniformAdvection { dim: 3 }]
        {
            let check = verify_split_consistency(flux, &samples);
            assert!(check.ok, "defect {}", check.max_defect);
        }
        let oblique = ObliqueAdvection::from_angle(0.7);
        assert!(verify_split_consistency(&oblique, &samples).ok);
    }

    #[test]
    fn split_jacobian_parts_are_nonnegative_and_sum_to_jacobian() {
        for &u in &[-2.0, -0.1, 0.0, 0.3, 5.0] {
            let (jp, jm) = Burgers.split_jacobian(0, u);
            assert!(jp >= 0.0 && jm >= 0.0);
            assert_eq!(jp - jm, u);
        }
    }

    /// Independent oracle: composite Simpson with a fixed fine subdivision,
    /// written without reference to the production adaptive routine.
    fn composite_split(flux: &dyn ScalarFlux, u: f64, panels: usize) -> (f64, f64) {
        let mut p = 0.0;
        let mut m = 0.0;
        let h = u / panels as f64;
        for k in 0..panels {
            let x0 = k as f64 * h;
            let x1 = x0 + 0.5 * h;
            let x2 = x0 + h;
            let val = |x: f64| {
                let a = flux.jacobian(0, x);
                (a.max(0.0), (-a).max(0.0))
            };
            let (p0, m0) = val(x0);
            let (p1, m1) = val(x1);
            let (p2, m2) = val(x2);
            p += h / 6.0 * (p0 + 4.0 * p1 + p2);
            m += h / 6.0 * (m0 + 4.0 * m1 + m2);
        }
        (p, m)
    }

    #[test]
    fn closed_form_split_matches_quadrature_on_a_thousand_points() {
        // Deterministic low-discrepancy sweep of the admissible interval.
        let entry = FluxEntry::burgers();
        let (lo, hi) = entry.admissible;
        for k in 0..1000 {
            let t = (k as f64 * 0.6180339887498949) % 1.0;
            let u = lo + t * (hi - lo);
            let closed = entry.flux.split(0, u);
            let quad = composite_split(entry.flux.as_ref(), u, 1000);
            assert!(
                (closed.0 - quad.0).abs() <= 1e-10 && (closed.1 - quad.1).abs() <= 1e-10,
                "u = {u}: closed {closed:?} vs quadrature {quad:?}"
            );
        }
    }

    #[test]
    fn default_split_uses_adaptive_quadrature() {
        for &u in &[-3.0, -1.0, -0.25, 0.0, 0.5, 2.0, 7.5] {
            let (p, m) = QuadOnlyBurgers.split(0, u);
            let (cp, cm) = Burgers.split(0, u);
            assert!((p - cp).abs() <= 1e-10, "u = {u}: {p} vs {cp}");
            assert!((m - cm).abs() <= 1e-10, "u = {u}: {m} vs {cm}");
        }
    }

    #[test]
    fn split_by_sign_rejects_out_of_range_states() {
        let entry = FluxEntry::burgers();
        assert!(split_by_sign(&entry, 0, 17.0).is_err());
        assert!(split_by_sign(&entry, 0, -0.5).is_ok());
    }

    #[test]
    fn split_by_sign_rejects_nonzero_flux_datum() {
        struct Shifted;
        impl ScalarFlux for Shifted {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, _d: usize, u: f64) -> f64 {
                u + 1.0
            }
            fn jacobian(&self, _d: usize, _u: f64) -> f64 {
                1.0
            }
        }
        let entry =
            FluxEntry { name: "shifted", flux: Arc::new(Shifted), admissible: (-1.0, 1.0) };
        match split_by_sign(&entry, 0, 0.5) {
            Err(FluxError::ZeroDatum { value, .. }) => assert_eq!(value, 1.0),
            other => panic!("expected zero-datum rejection, got {other:?}"),
        }
    }

    #[test]
    fn zero_speed_split_is_zero() {
        assert_eq!(LinearAdvection { a: 0.0 }.split(0, 3.0), (0.0, 0.0));
    }

    #[test]
    fn primitives_are_monotone() {
        let mut prev = Burgers.split(0, -16.0);
        let mut u = -16.0;
        while u < 16.0 {
            u += 0.125;
            let cur = Burgers.split(0, u);
            assert!(cur.0 >= prev.0 && cur.1 >= prev.1, "split not monotone at u = {u}");
            prev = cur;
        }
    }
}
