//! Expansion-rate estimates for the derivative cocycle: multiplier ranges over
//! periodic orbits, worst-case norm growth of Dg^{+-n} along probe orbits that
//! stay in the filtration bidisk, and the regularity/dimension bounds they
//! imply for the escape-rate functions.

use serde::Serialize;
use rayon::prelude::*;

use crate::algebra::{HenonMap, Matrix2C, PointC2};
use crate::classify::Direction;
use crate::sampler::PeriodicSearch;
use crate::{Error, Result};

/// Multiplier-based rates at one period: extremes of (1/n) log |lambda_u|
/// over the saddle orbits of g^n.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PeriodicRateRow {
    pub n: usize,
    pub s_min: f64,
    pub s_max: f64,
    /// Fixed points of g^n on saddle cycles (multiplicities summed).
    pub saddle_points: usize,
}

/// Per-period multiplier ranges. Errors on a period with no saddle cycles.
pub fn growth_rates_periodic(searches: &[PeriodicSearch]) -> Result<Vec<PeriodicRateRow>> {
    let mut rows = Vec::with_capacity(searches.len());
    for search in searches {
        if search.saddles.is_empty() {
            return Err(Error::EmptyOrbitList);
        }
        let n = search.period;
        let mut s_min = f64::INFINITY;
        let mut s_max = f64::NEG_INFINITY;
        for orbit in &search.saddles {
            let rate = orbit.lambda_u.norm().ln() / n as f64;
            s_min = s_min.min(rate);
            s_max = s_max.max(rate);
        }
        rows.push(PeriodicRateRow {
            n,
            s_min,
            s_max,
            saddle_points: search.saddle_point_count(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormRateRow {
    pub n: usize,
    /// (1/n) log of the largest spectral norm of Dg^{+-n} over surviving probes.
    pub rate: f64,
    pub survivors: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionalRate {
    pub direction: Direction,
    pub rows: Vec<NormRateRow>,
    pub radius_used: f64,
}

/// Log spectral norms of the accumulated cocycle along one probe orbit,
/// entry k-1 holding log |Dg^{+-k}(p)|. Stops at the first step that leaves
/// the bidisk. Products are renormalized each step so nothing overflows.
fn cocycle_log_norms(
    map: &HenonMap,
    p: PointC2,
    dir: Direction,
    n_max: usize,
    radius: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max);
    let mut current = p;
    if current.sup_norm() > radius {
        return out;
    }
    let mut acc = Matrix2C::identity();
    let mut log_scale = 0.0_f64;
    for _ in 0..n_max {
        let jac = match dir {
            Direction::Forward => map.jacobian(current),
            Direction::Backward => map.jacobian_inverse(current),
        };
        acc = jac.mul(&acc);
        let scale = acc.max_abs_entry();
        if scale == 0.0 || !scale.is_finite() {
            break;
        }
        acc = acc.scale(1.0 / scale);
        log_scale += scale.ln();
        let next = match dir {
            Direction::Forward => map.eval(current),
            Direction::Backward => map.eval_inverse(current),
        };
        current = match next {
            Ok(q) if q.sup_norm() <= radius => q,
            _ => break,
        };
        out.push(log_scale + acc.spectral_norm().ln());
    }
    out
}

/// Worst-case norm growth of the cocycle over a probe family: for each
/// n <= n_max, the max of (1/n) log |Dg^{+-n}| over probes whose orbit stayed
/// inside the bidisk through step n. Dropped probes are counted, never
/// silently ignored; an n with no survivors is an error.
pub fn norm_rates(
    map: &HenonMap,
    probes: &[PointC2],
    dir: Direction,
    n_max: usize,
    radius: Option<f64>,
) -> Result<DirectionalRate> {
    assert!(n_max >= 1);
    let radius = radius.unwrap_or_else(|| map.escape_radius());
    let per_probe: Vec<Vec<f64>> = probes
        .par_iter()
        .map(|p| cocycle_log_norms(map, *p, dir, n_max, radius))
        .collect();
    let mut rows = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let mut best = f64::NEG_INFINITY;
        let mut survivors = 0usize;
        for logs in &per_probe {
            if logs.len() >= n {
                survivors += 1;
                best = best.max(logs[n - 1] / n as f64);
            }
        }
        if survivors == 0 {
            return Err(Error::AllProbesDropped {
                n,
                total: probes.len(),
            });
        }
        rows.push(NormRateRow {
            n,
            rate: best,
            survivors,
            dropped: probes.len() - survivors,
        });
    }
    Ok(DirectionalRate {
        direction: dir,
        rows,
        radius_used: radius,
    })
}

/// Regularity of the escape-rate functions and the dimension lower bounds it
/// yields: exponent min(1, log d / s) for the corresponding direction, and
/// dim lower bound 2 + exponent for the associated boundary set.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HolderBounds {
    pub exponent_forward: f64,
    pub exponent_backward: f64,
    pub dim_lower_forward: f64,
    pub dim_lower_backward: f64,
}

pub fn holder_bounds(degree: u64, s_plus: f64, s_minus: f64) -> HolderBounds {
    let logd = (degree as f64).ln();
    let exponent_forward = (logd / s_plus).min(1.0);
    let exponent_backward = (logd / s_minus).min(1.0);
    HolderBounds {
        exponent_forward,
        exponent_backward,
        dim_lower_forward: 2.0 + exponent_forward,
        dim_lower_backward: 2.0 + exponent_backward,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{find_periodic_from_seeds, grid_seeds};
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn horseshoe() -> HenonMap {
        HenonMap::from_parts(vec![(vec![c(-6.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], c(0.3, 0.0))])
            .unwrap()
    }

    fn saddle_multiplier(w: f64) -> f64 {
        (w + (w * w + 0.3).sqrt()).abs()
    }

    fn fixed_points() -> [PointC2; 2] {
        let disc = (0.7_f64 * 0.7 + 24.0).sqrt();
        [
            PointC2::from_re((0.7 + disc) / 2.0, (0.7 + disc) / 2.0),
            PointC2::from_re((0.7 - disc) / 2.0, (0.7 - disc) / 2.0),
        ]
    }

    #[test]
    fn periodic_rates_match_fixed_point_multipliers() {
        let map = horseshoe();
        let search = find_periodic_from_seeds(&map, 1, &grid_seeds(map.escape_radius(), 7), 1e-12)
            .unwrap();
        let rows = growth_rates_periodic(std::slice::from_ref(&search)).unwrap();
        assert_eq!(rows.len(), 1);
        let row = rows[0];
        let [pp, pm] = fixed_points();
        let lam_plus = saddle_multiplier(pp.w.re);
        let lam_minus = (pm.w.re - (pm.w.re * pm.w.re + 0.3).sqrt()).abs();
        let hi = lam_plus.max(lam_minus).ln();
        let lo = lam_plus.min(lam_minus).ln();
        assert!((row.s_max - hi).abs() < 1e-9);
        assert!((row.s_min - lo).abs() < 1e-9);
        assert_eq!(row.saddle_points, 2);
        assert!(row.s_min <= row.s_max);
    }

    #[test]
    fn norm_rate_at_saddle_approaches_multiplier() {
        // A single probe sitting on the fixed saddle: |Dg^n| grows like
        // lambda_u^n, so the per-n rate converges to log lambda_u from above
        // (the norm also sees the off-diagonal transient).
        let map = horseshoe();
        let p = fixed_points()[0];
        let lam = saddle_multiplier(p.w.re).ln();
        let rates = norm_rates(&map, &[p], Direction::Forward, 10, None).unwrap();
        for row in &rates.rows {
            assert_eq!(row.survivors, 1);
            assert_eq!(row.dropped, 0);
            assert!(row.rate >= lam - 1e-9, "norm rate below multiplier at n={}", row.n);
        }
        let last = rates.rows.last().unwrap();
        assert!((last.rate - lam).abs() < 0.1, "rate {} vs multiplier {lam}", last.rate);
    }

    #[test]
    fn backward_norm_rate_sees_inverse_expansion() {
        // Backward along the same saddle: |Dg^{-n}| grows like |lambda_s|^{-n}
        // = (lambda_u / |a|)^n.
        let map = horseshoe();
        let p = fixed_points()[0];
        let lam_s_inv = (saddle_multiplier(p.w.re) / 0.3).ln();
        let rates = norm_rates(&map, &[p], Direction::Backward, 10, None).unwrap();
        let last = rates.rows.last().unwrap();
        assert!((last.rate - lam_s_inv).abs() < 0.1, "rate {} vs {lam_s_inv}", last.rate);
    }

    #[test]
    fn rates_are_insensitive_to_radius_doubling() {
        let map = horseshoe();
        let probes = fixed_points();
        let r = map.escape_radius();
        let a = norm_rates(&map, &probes, Direction::Forward, 8, Some(r)).unwrap();
        let b = norm_rates(&map, &probes, Direction::Forward, 8, Some(2.0 * r)).unwrap();
        let ra = a.rows.last().unwrap().rate;
        let rb = b.rows.last().unwrap().rate;
        assert!((ra - rb).abs() < 0.05, "radius sensitivity {} vs {}", ra, rb);
        assert!((a.radius_used - r).abs() < 1e-12);
        assert!((b.radius_used - 2.0 * r).abs() < 1e-12);
    }

    #[test]
    fn escaping_probes_are_dropped_and_counted() {
        let map = horseshoe();
        let saddle = fixed_points()[0];
        let far = PointC2::from_re(0.0, 3.0);
        let rates = norm_rates(&map, &[saddle, far], Direction::Forward, 8, None).unwrap();
        let first = &rates.rows[0];
        let last = rates.rows.last().unwrap();
        assert_eq!(first.survivors + first.dropped, 2);
        assert_eq!(last.survivors, 1, "only the saddle survives to n=8");
        assert_eq!(last.dropped, 1);
    }

    #[test]
    fn all_probes_escaping_is_an_error() {
        let map = horseshoe();
        let far = [PointC2::from_re(0.0, 5.0), PointC2::from_re(0.0, -7.0)];
        match norm_rates(&map, &far, Direction::Forward, 8, None) {
            Err(Error::AllProbesDropped { total: 2, .. }) => {}
            other => panic!("expected all-dropped error, got {other:?}"),
        }
    }

    #[test]
    fn holder_bounds_follow_the_rates() {
        let b = holder_bounds(2, 1.74, 2.94);
        let logd = 2.0_f64.ln();
        assert!((b.exponent_forward - logd / 1.74).abs() < 1e-12);
        assert!((b.exponent_backward - logd / 2.94).abs() < 1e-12);
        assert!((b.dim_lower_forward - (2.0 + logd / 1.74)).abs() < 1e-12);
        assert!((b.dim_lower_backward - (2.0 + logd / 2.94)).abs() < 1e-12);
        // A rate below log d caps the exponent at 1.
        let capped = holder_bounds(2, 0.3, 0.5);
        assert_eq!(capped.exponent_forward, 1.0);
        assert_eq!(capped.dim_lower_forward, 3.0);
    }

    #[test]
    fn norm_rate_is_monotone_under_longer_horizons() {
        // Rows for shared n agree when n_max grows: the computation is a
        // prefix property of each orbit.
        let map = horseshoe();
        let probes = fixed_points();
        let a = norm_rates(&map, &probes, Direction::Forward, 5, None).unwrap();
        let b = norm_rates(&map, &probes, Direction::Forward, 9, None).unwrap();
        for (ra, rb) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(ra.n, rb.n);
            assert!((ra.rate - rb.rate).abs() < 1e-14);
            assert_eq!(ra.survivors, rb.survivors);
        }
    }
}
