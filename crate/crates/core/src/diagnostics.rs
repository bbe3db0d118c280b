//! Quantitative measures for solver runs: total variation, error norms,
//! convergence orders, positivity scans, and the convex-combination
//! relaxation-inequality monitor.
//!
//! Every function reduces serially in index order, so repeated runs produce
//! identical values bit for bit.

use thiserror::Error;

use crate::grid::Grid;

#[derive(Debug, Error, PartialEq)]
pub enum DiagError {
    #[error("fields have different lengths: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("need at least two resolutions")]
    TooFewResolutions,
    #[error("resolutions must refine strictly: spacing {0} followed by {1}")]
    NonMonotone(f64, f64),
}

/// One-sided total variation of a 1D field: `Σ |f_{i+1} − f_i}|`.
pub fn total_variation(field: &[f64]) -> f64 {
    field.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Total variation of a 1D field with the periodic closure term.
pub fn total_variation_periodic(field: &[f64]) -> f64 {
    match field {
        [] | [_] => 0.0,
        _ => total_variation(field) + (field[0] - field[field.len() - 1]).abs(),
    }
}

/// Per-axis total variation of a gridded field: along each axis, the line
/// TVs summed over all lines. Unused axes report zero.
pub fn total_variation_axes(grid: &Grid, field: &[f64], periodic: bool) -> [f64; 3] {
    debug_assert_eq!(field.len(), grid.len());
    let shape = grid.shape();
    let strides = [1, shape[0], shape[0] * shape[1]];
    let mut tv = [0.0; 3];
    for d in 0..grid.dim() {
        let n = shape[d];
        if n < 2 {
            continue;
        }
        let stride = strides[d];
        let mut acc = 0.0;
        for (node, &v) in field.iter().enumerate() {
            let coord = (node / stride) % n;
            if coord + 1 < n {
                acc += (field[node + stride] - v).abs();
            } else if periodic {
                acc += (field[node + stride - n * stride] - v).abs();
            }
        }
        tv[d] = acc;
    }
    tv
}

/// Sum of [`total_variation_axes`] over the grid's axes.
pub fn total_variation_grid(grid: &Grid, field: &[f64], periodic: bool) -> f64 {
    total_variation_axes(grid, field, periodic).iter().sum()
}

/// Scaled root-sum-square error between two aligned fields:
/// `sqrt(Σ_i (u_i − r_i)²) / (M − 1)` with `M` the node count. This is the
/// normalization that reproduces the published convergence-table values on
/// periodic grids storing the M unique nodes of an (M+1)-point domain.
pub fn l2_error(numeric: &[f64], reference: &[f64]) -> Result<f64, DiagError> {
    if numeric.len() != reference.len() {
        return Err(DiagError::ShapeMismatch(numeric.len(), reference.len()));
    }
    let ss: f64 = numeric.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ss.sqrt() / (numeric.len() as f64 - 1.0))
}

/// One row of a convergence study at a single resolution.
#[derive(Clone, Copy, Debug)]
pub struct NormReport {
    /// Advertised resolution (grid points of the study, including any
    /// duplicated periodic endpoint).
    pub n: usize,
    pub dx: f64,
    pub l2: f64,
    /// Order against the previous (coarser) row; `None` on the first.
    pub order: Option<f64>,
}

/// Pairwise convergence orders `log(e_c/e_f)/log(Δx_c/Δx_f)` for successive
/// rows, coarsest first.
pub fn convergence_order(reports: &[NormReport]) -> Result<Vec<f64>, DiagError> {
    if reports.len() < 2 {
        return Err(DiagError::TooFewResolutions);
    }
    reports
        .windows(2)
        .map(|w| {
            let (coarse, fine) = (w[0], w[1]);
            if fine.dx >= coarse.dx {
                return Err(DiagError::NonMonotone(coarse.dx, fine.dx));
            }
            Ok((coarse.l2 / fine.l2).ln() / (coarse.dx / fine.dx).ln())
        })
        .collect()
}

/// Outcome of the convex-combination inequality audit of one collision.
#[derive(Clone, Copy, Debug)]
pub struct HReport {
    /// Largest `H(f*) − [(1−ω̂)H(f) + ω̂H(f^eq)]` over all populations and
    /// nodes; at or below zero the inequality held everywhere.
    pub max_violation: f64,
    pub worst_q: usize,
    pub worst_node: usize,
}

/// Audits `H((1−ω̂)f + ω̂f^eq) ≤ (1−ω̂)H(f) + ω̂H(f^eq)` nodewise for a
/// convex `H` (e.g. `|f|` or `f²`). For rates in (0,1] the right side is a
/// convex combination and the inequality is Jensen's; over-relaxed rates
/// fall outside it and genuine violations are expected.
pub fn h_monitor(
    f: &[Vec<f64>],
    eq: &[Vec<f64>],
    omega_hat: f64,
    h: impl Fn(f64) -> f64,
) -> HReport {
    let keep = 1.0 - omega_hat;
    let mut report = HReport { max_violation: f64::NEG_INFINITY, worst_q: 0, worst_node: 0 };
    for (q, (fq, eqq)) in f.iter().zip(eq).enumerate() {
        for (i, (&fv, &ev)) in fq.iter().zip(eqq).enumerate() {
            let post = keep * fv + omega_hat * ev;
            let violation = h(post) - (keep * h(fv) + omega_hat * h(ev));
            if violation > report.max_violation {
                report = HReport { max_violation: violation, worst_q: q, worst_node: i };
            }
        }
    }
    report
}

/// Minimum of a field and the first strictly negative node, if any.
#[derive(Clone, Copy, Debug)]
pub struct PositivityReport {
    pub min: f64,
    pub first_negative: Option<usize>,
}

pub fn positivity_scan(field: &[f64]) -> PositivityReport {
    let mut min = f64::INFINITY;
    let mut first_negative = None;
    for (i, &v) in field.iter().enumerate() {
        if v < min {
            min = v;
        }
        if v < 0.0 && first_negative.is_none() {
            first_negative = Some(i);
        }
    }
    PositivityReport { min, first_negative }
}

/// One diagnostics record in the `step, time, metric, value` CSV schema.
#[derive(Clone, Debug)]
pub struct DiagRow {
    pub step: u64,
    pub time: f64,
    pub metric: String,
    pub value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tv_of_a_step_counts_its_jump_once() {
        assert_eq!(total_variation(&[0.0, 0.0, 1.0, 1.0]), 1.0);
        assert_eq!(total_variation_periodic(&[0.0, 0.0, 1.0, 1.0]), 2.0);
    }

    #[test]
    fn tv_of_constants_is_zero() {
        assert_eq!(total_variation(&[0.7; 9]), 0.0);
        assert_eq!(total_variation_periodic(&[0.7; 9]), 0.0);
        let grid = Grid::uniform(&[4, 5], &[0.0, 0.0], 0.1);
        assert_eq!(total_variation_grid(&grid, &[0.7; 20], true), 0.0);
    }

    #[test]
    fn tv_matches_a_naive_resummation_on_a_sine() {
        let n = 41;
        let field: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).sin())
            .collect();
        let got = total_variation_periodic(&field);
        // independent route: reversed accumulation order
        let mut naive = (field[0] - field[n - 1]).abs();
        for i in (1..n).rev() {
            naive += (field[i] - field[i - 1]).abs();
        }
        assert!((got - naive).abs() <= 1e-15);
    }

    #[test]
    fn tv_axes_separate_the_directions() {
        let grid = Grid::uniform(&[3, 2], &[0.0, 0.0], 1.0);
        // rows [0,1,0] stacked twice: x-variation 2 per row, none in y
        let field = vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let tv = total_variation_axes(&grid, &field, false);
        assert_eq!(tv, [4.0, 0.0, 0.0]);
        let tv_periodic = total_variation_axes(&grid, &field, true);
        assert_eq!(tv_periodic, [4.0, 0.0, 0.0]); // wrap terms vanish here
    }

    #[test]
    fn l2_error_of_identical_fields_is_zero() {
        let f = vec![0.3, -0.7, 1.1, 0.0];
        assert_eq!(l2_error(&f, &f).unwrap(), 0.0);
        assert_eq!(
            l2_error(&f, &[0.0; 3]).unwrap_err(),
            DiagError::ShapeMismatch(4, 3)
        );
    }

    #[test]
    fn l2_error_normalization_is_the_scaled_node_count() {
        // 40 nodes, uniform pointwise error e: sqrt(40 e²)/39
        let e = 1e-3;
        let numeric = vec![e; 40];
        let reference = vec![0.0; 40];
        let expect = (40.0f64).sqrt() * e / 39.0;
        assert!((l2_error(&numeric, &reference).unwrap() - expect).abs() <= 1e-18);
    }

    #[test]
    fn convergence_orders_recover_synthetic_rates() {
        let reports = [
            NormReport { n: 41, dx: 0.05, l2: 4e-3, order: None },
            NormReport { n: 81, dx: 0.025, l2: 1e-3, order: None },
        ];
        let orders = convergence_order(&reports).unwrap();
        assert!((orders[0] - 2.0).abs() <= 1e-12);

        let first_order = [
            NormReport { n: 10, dx: 0.1, l2: 0.2, order: None },
            NormReport { n: 20, dx: 0.05, l2: 0.1, order: None },
            NormReport { n: 40, dx: 0.025, l2: 0.05, order: None },
        ];
        for o in convergence_order(&first_order).unwrap() {
            assert!((o - 1.0).abs() <= 1e-12);
        }

        assert_eq!(
            convergence_order(&reports[..1]).unwrap_err(),
            DiagError::TooFewResolutions
        );
        let bad = [
            NormReport { n: 81, dx: 0.025, l2: 1e-3, order: None },
            NormReport { n: 41, dx: 0.05, l2: 4e-3, order: None },
        ];
        assert!(matches!(
            convergence_order(&bad).unwrap_err(),
            DiagError::NonMonotone(..)
        ));
    }

    fn lcg_fields(seed: u64, q: usize, n: usize) -> Vec<Vec<f64>> {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        (0..q).map(|_| (0..n).map(|_| next()).collect()).collect()
    }

    #[test]
    fn h_inequality_is_tight_at_unit_rate() {
        let f = lcg_fields(0x1234, 3, 40);
        let eq = lcg_fields(0x5678, 3, 40);
        let report = h_monitor(&f, &eq, 1.0, |v| v * v);
        assert!(report.max_violation <= 0.0);
    }

    #[test]
    fn h_inequality_holds_for_under_relaxation() {
        for seed in 0..50u64 {
            let f = lcg_fields(seed * 2 + 1, 3, 64);
            let eq = lcg_fields(seed * 2 + 2, 3, 64);
            for &w in &[0.1, 0.5, 0.9, 1.0] {
                let sq = h_monitor(&f, &eq, w, |v| v * v);
                assert!(sq.max_violation <= 1e-15, "rate {w}: {:.3e}", sq.max_violation);
                let ab = h_monitor(&f, &eq, w, f64::abs);
                assert!(ab.max_violation <= 1e-15, "rate {w}: {:.3e}", ab.max_violation);
            }
        }
    }

    #[test]
    fn h_inequality_breaks_beyond_unit_rate() {
        let f = vec![vec![1.0]];
        let eq = vec![vec![0.0]];
        let report = h_monitor(&f, &eq, 1.9, |v| v * v);
        // post-collision value -0.9 has H = 0.81, combination gives -0.9
        assert!((report.max_violation - 1.71).abs() <= 1e-15);
        assert_eq!((report.worst_q, report.worst_node), (0, 0));
    }

    #[test]
    fn positivity_scan_reports_the_first_offender() {
        let pass = positivity_scan(&[0.1, 0.0, 2.0]);
        assert_eq!(pass.first_negative, None);
        assert_eq!(pass.min, 0.0);
        let fail = positivity_scan(&[0.1, -1e-16, 2.0, -5.0]);
        assert_eq!(fail.first_negative, Some(1));
        assert_eq!(fail.min, -5.0);
    }

    proptest! {
        #[test]
        fn tv_is_invariant_under_reversal_and_rotation(
            field in prop::collection::vec(-10.0f64..10.0, 2..60),
            shift in 0usize..60,
        ) {
            let base = total_variation_periodic(&field);
            let reversed: Vec<f64> = field.iter().rev().copied().collect();
            prop_assert!((total_variation_periodic(&reversed) - base).abs() <= 1e-12);
            let k = shift % field.len();
            let mut rotated = field.clone();
            rotated.rotate_left(k);
            prop_assert!((total_variation_periodic(&rotated) - base).abs() <= 1e-12);
        }

        #[test]
        fn l2_error_satisfies_the_triangle_inequality(
            a in prop::collection::vec(-100.0f64..100.0, 8),
            b in prop::collection::vec(-100.0f64..100.0, 8),
            c in prop::collection::vec(-100.0f64..100.0, 8),
        ) {
            let ac = l2_error(&a, &c).unwrap();
            let ab = l2_error(&a, &b).unwrap();
            let bc = l2_error(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-13);
        }
    }
}
