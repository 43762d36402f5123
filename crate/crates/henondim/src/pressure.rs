//! Topological pressure on the saddle part of the dynamics, its zeros, and
//! box-counting dimension fits.
//!
//! Two estimators are implemented: sums over periodic saddle multipliers, and
//! Birkhoff-weighted sums over greedily built Bowen-separated sets. Their
//! agreement is the working consistency check for the dimension report.

use serde::Serialize;
use crate::algebra::{HenonMap, PointC2};
use crate::sampler::{push_direction, stable_direction, unstable_direction, PeriodicSearch};
use crate::{Error, Result};

/// Ascending-order summation of nonnegative terms: deterministic and as
/// accurate as a single pass can be.
fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PressurePoint {
    pub t: f64,
    /// (1/n) log sum over saddle points of |lambda_u|^{-t}.
    pub unstable: f64,
    /// (1/n) log sum over saddle points of |lambda_s|^{t}.
    pub stable: f64,
}

/// Pressure at parameter t from the saddle cycles of one periodic search.
pub fn pressure_periodic(search: &PeriodicSearch, t: f64) -> Result<PressurePoint> {
    if search.saddles.is_empty() {
        return Err(Error::EmptyOrbitList);
    }
    let n = search.period as f64;
    let mut terms_u = Vec::with_capacity(search.saddles.len());
    let mut terms_s = Vec::with_capacity(search.saddles.len());
    for orbit in &search.saddles {
        let mult = orbit.multiplicity as f64;
        terms_u.push(mult * (-t * orbit.lambda_u.norm().ln()).exp());
        terms_s.push(mult * (t * orbit.lambda_s.norm().ln()).exp());
    }
    Ok(PressurePoint {
        t,
        unstable: sorted_sum(terms_u).ln() / n,
        stable: sorted_sum(terms_s).ln() / n,
    })
}

pub fn pressure_curve(search: &PeriodicSearch, ts: &[f64]) -> Result<Vec<PressurePoint>> {
    ts.iter().map(|&t| pressure_periodic(search, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PressureSide {
    Unstable,
    Stable,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RootResult {
    pub t: f64,
    pub side: PressureSide,
    /// Upper end of the bracket that was actually used.
    pub bracket_hi: f64,
    /// True when the default bracket (0, 2) had to be widened.
    pub expanded: bool,
}

const ROOT_WIDTH: f64 = 1e-9;

/// Zero of t -> pressure(t) on the chosen side by bisection. The pressure is
/// strictly decreasing there (saddle multipliers are expanding/contracting),
/// so the zero is simple; the bracket (0, 2) is widened once to 4 if needed.
pub fn bowen_ruelle_root(search: &PeriodicSearch, side: PressureSide) -> Result<RootResult> {
    let eval = |t: f64| -> Result<f64> {
        let p = pressure_periodic(search, t)?;
        Ok(match side {
            PressureSide::Unstable => p.unstable,
            PressureSide::Stable => p.stable,
        })
    };
    let lo0 = 0.0;
    if eval(lo0)? <= 0.0 {
        return Err(Error::NoRootBracket { lo: lo0, hi: lo0 });
    }
    let mut hi = 2.0;
    let mut expanded = false;
    if eval(hi)? > 0.0 {
        hi = 4.0;
        expanded = true;
        if eval(hi)? > 0.0 {
            return Err(Error::NoRootBracket { lo: lo0, hi });
        }
    }
    let (mut lo, bracket_hi) = (lo0, hi);
    while hi - lo > ROOT_WIDTH {
        let mid = 0.5 * (lo + hi);
        if eval(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RootResult {
        t: 0.5 * (lo + hi),
        side,
        bracket_hi,
        expanded,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeparatedPressure {
    pub t: f64,
    pub n: usize,
    pub eps: f64,
    pub unstable: f64,
    pub stable: f64,
    /// Size of the greedy (n, eps)-separated set.
    pub set_size: usize,
    pub candidates: usize,
    /// Candidates dropped because an orbit or direction left the bidisk.
    pub dropped: usize,
}

struct SeparatedPoint {
    orbit: Vec<PointC2>,
    /// Birkhoff sum of log |Dg v_u| along the orbit.
    sum_u: f64,
    /// Birkhoff sum of log |Dg v_s| along the orbit.
    sum_s: f64,
}

fn prepare_candidate(
    map: &HenonMap,
    p: PointC2,
    n: usize,
    m_dir: usize,
    radius: f64,
) -> Option<SeparatedPoint> {
    let mut orbit = Vec::with_capacity(n);
    let mut q = p;
    for _ in 0..n {
        if q.sup_norm() > radius {
            return None;
        }
        orbit.push(q);
        q = map.eval(q).ok()?;
    }
    let mut v_u = unstable_direction(map, p, m_dir).ok()?;
    let mut sum_u = 0.0;
    for &pk in &orbit {
        let jv = map.jacobian(pk).apply(v_u);
        let norm = (jv.0.norm_sqr() + jv.1.norm_sqr()).sqrt();
        if norm == 0.0 {
            return None;
        }
        sum_u += norm.ln();
        v_u = push_direction(map, pk, v_u);
    }
    // Stable field by pull-back from the end of the segment: backward
    // application of Dg^{-1} re-aligns toward the contracting direction, so
    // the sweep is self-correcting.
    let mut vs = vec![(num_complex::Complex64::default(), num_complex::Complex64::default()); n];
    vs[n - 1] = stable_direction(map, orbit[n - 1], m_dir).ok()?;
    for k in (0..n - 1).rev() {
        let pulled = map.jacobian_inverse(orbit[k + 1]).apply(vs[k + 1]);
        let norm = (pulled.0.norm_sqr() + pulled.1.norm_sqr()).sqrt();
        if norm == 0.0 {
            return None;
        }
        vs[k] = (pulled.0 / norm, pulled.1 / norm);
    }
    let mut sum_s = 0.0;
    for (k, &pk) in orbit.iter().enumerate() {
        let jv = map.jacobian(pk).apply(vs[k]);
        let norm = (jv.0.norm_sqr() + jv.1.norm_sqr()).sqrt();
        if norm == 0.0 {
            return None;
        }
        sum_s += norm.ln();
    }
    Some(SeparatedPoint { orbit, sum_u, sum_s })
}

// Separation is tested on the recurrence track w only: z at step k repeats w
// at step k - 1, so full planar distance would distinguish one pre-window
// value on top of the n in-window ones and bias the count by a factor of d.
fn bowen_separated(a: &SeparatedPoint, b: &SeparatedPoint, eps: f64) -> bool {
    for (x, y) in a.orbit.iter().zip(b.orbit.iter()) {
        if (x.w - y.w).norm() >= eps {
            return true;
        }
    }
    false
}

/// Pressure from a greedy maximal (n, eps)-separated subset of the candidate
/// points, weighted by Birkhoff sums of the directional expansion observables.
/// Candidates are processed in lexicographic order, so the separated set (and
/// hence the value) is deterministic.
pub fn pressure_separated(
    map: &HenonMap,
    candidates: &[PointC2],
    n: usize,
    eps: f64,
    t: f64,
    m_dir: usize,
    radius: Option<f64>,
) -> Result<SeparatedPressure> {
    assert!(n >= 1);
    assert!(eps > 0.0);
    let radius = radius.unwrap_or_else(|| map.escape_radius());
    let mut sorted: Vec<PointC2> = candidates.to_vec();
    sorted.sort_by(|a, b| a.lex_cmp(b));
    sorted.dedup_by(|a, b| a == b);
    use rayon::prelude::*;
    let prepared: Vec<Option<SeparatedPoint>> = sorted
        .par_iter()
        .map(|p| prepare_candidate(map, *p, n, m_dir, radius))
        .collect();
    let survivors: Vec<SeparatedPoint> = prepared.into_iter().flatten().collect();
    let dropped = sorted.len() - survivors.len();
    let mut kept: Vec<&SeparatedPoint> = Vec::new();
    'next: for cand in &survivors {
        for k in &kept {
            if !bowen_separated(cand, k, eps) {
                continue 'next;
            }
        }
        kept.push(cand);
    }
    if kept.len() < 2 {
        return Err(Error::SeparatedSetTooSmall { got: kept.len() });
    }
    let terms_u: Vec<f64> = kept.iter().map(|sp| (-t * sp.sum_u).exp()).collect();
    let terms_s: Vec<f64> = kept.iter().map(|sp| (t * sp.sum_s).exp()).collect();
    Ok(SeparatedPressure {
        t,
        n,
        eps,
        unstable: sorted_sum(terms_u).ln() / n as f64,
        stable: sorted_sum(terms_s).ln() / n as f64,
        set_size: kept.len(),
        candidates: sorted.len(),
        dropped,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoxDimension {
    /// Least-squares slope of log N against log (1/eps).
    pub slope: f64,
    /// Root-mean-square residual of the fit in log N.
    pub residual: f64,
    pub scales: usize,
}

/// Box-counting fit from per-depth retained-box counts (depth k means boxes
/// of half-width radius / 2^k). Requires at least four scales spanning at
/// least two octaves.
pub fn box_dimension(counts: &[(u32, usize)]) -> Result<BoxDimension> {
    if counts.len() < 4 {
        return Err(Error::TooFewScales {
            need: 4,
            got: counts.len(),
        });
    }
    let lo = counts.iter().map(|(d, _)| *d).min().unwrap();
    let hi = counts.iter().map(|(d, _)| *d).max().unwrap();
    if hi - lo < 2 {
        return Err(Error::DegenerateFit);
    }
    let ln2 = std::f64::consts::LN_2;
    let xs: Vec<f64> = counts.iter().map(|(d, _)| *d as f64 * ln2).collect();
    let ys: Vec<f64> = counts.iter().map(|(_, n)| (*n as f64).ln()).collect();
    let m = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss: f64 = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (y - (slope * x + intercept)).powi(2))
        .sum();
    Ok(BoxDimension {
        slope,
        residual: (ss / m).sqrt(),
        scales: counts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::HenonMap;
    use crate::sampler::{
        find_periodic_from_seeds, grid_seeds, sample, unstable_cloud, CloudOptions, SaddleOrbit,
        SampleOptions, SampleTarget,
    };
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn horseshoe() -> HenonMap {
        HenonMap::from_parts(vec![(vec![c(-6.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], c(0.3, 0.0))])
            .unwrap()
    }

    fn conservative() -> HenonMap {
        HenonMap::from_parts(vec![(vec![c(-10.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)], c(1.0, 0.0))])
            .unwrap()
    }

    fn search_for(map: &HenonMap, n: usize) -> PeriodicSearch {
        // Ascend through the periods, feeding every found orbit point back in
        // as a seed for the next level.
        let r = map.escape_radius();
        let mut seeds = grid_seeds(r, 7);
        seeds.extend(crate::sampler::polar_seeds(r / 2.0, 2, 24));
        let mut last = None;
        for k in 1..=n {
            let search = find_periodic_from_seeds(map, k, &seeds, 1e-12).unwrap();
            for o in search.saddles.iter().chain(search.non_saddles.iter()) {
                let mut q = o.representative;
                for _ in 0..o.primitive_period {
                    seeds.push(q);
                    q = map.eval(q).unwrap();
                }
            }
            last = Some(search);
        }
        last.unwrap()
    }

    #[test]
    fn stable_and_unstable_pressure_differ_by_the_jacobian_term() {
        let map = horseshoe();
        let search = search_for(&map, 4);
        assert_eq!(search.fix_count, 16);
        let log_a = 0.3_f64.ln();
        for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let p = pressure_periodic(&search, t).unwrap();
            assert!(
                (p.stable - p.unstable - t * log_a).abs() < 1e-10,
                "identity off at t={t}: {} vs {}",
                p.stable - p.unstable,
                t * log_a
            );
        }
    }

    #[test]
    fn pressure_at_zero_counts_saddle_points() {
        let map = horseshoe();
        let search = search_for(&map, 3);
        let p = pressure_periodic(&search, 0.0).unwrap();
        let expect = (search.saddle_point_count() as f64).ln() / 3.0;
        assert!((p.unstable - expect).abs() < 1e-12);
        assert!((p.stable - expect).abs() < 1e-12);
    }

    #[test]
    fn pressure_is_decreasing_in_t() {
        let map = horseshoe();
        let search = search_for(&map, 4);
        let ts: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let curve = pressure_curve(&search, &ts).unwrap();
        for pair in curve.windows(2) {
            assert!(pair[1].unstable < pair[0].unstable);
            assert!(pair[1].stable < pair[0].stable);
        }
    }

    #[test]
    fn root_matches_closed_form_for_uniform_multipliers() {
        // One synthetic cycle family, every multiplier of modulus L: the
        // unstable pressure is (1/n)(log m - t log L) with zero at
        // t = log m / log L.
        let lam = 5.0_f64;
        let count = 16usize;
        let n = 4usize;
        let search = PeriodicSearch {
            period: n,
            saddles: vec![SaddleOrbit {
                representative: PointC2::from_re(0.0, 0.0),
                period: n,
                primitive_period: n,
                multiplicity: count,
                lambda_u: c(lam, 0.0),
                lambda_s: c(0.01, 0.0),
                newton_residual: 0.0,
            }],
            non_saddles: vec![],
            fix_count: count,
            seeds_used: 0,
            seeds_rejected: 0,
        };
        let root = bowen_ruelle_root(&search, PressureSide::Unstable).unwrap();
        let expect = (count as f64).ln() / lam.ln();
        assert!((root.t - expect).abs() < 1e-8, "{} vs {expect}", root.t);
        assert!(!root.expanded);
    }

    #[test]
    fn root_lies_in_the_multiplier_sandwich() {
        let map = horseshoe();
        let search = search_for(&map, 6);
        assert_eq!(search.fix_count, 64);
        let root = bowen_ruelle_root(&search, PressureSide::Unstable).unwrap();
        let rows = crate::rates::growth_rates_periodic(std::slice::from_ref(&search)).unwrap();
        let count_rate = (search.saddle_point_count() as f64).ln() / 6.0;
        let lo = count_rate / rows[0].s_max;
        let hi = count_rate / rows[0].s_min;
        assert!(root.t >= lo - 1e-9 && root.t <= hi + 1e-9, "{} not in [{lo}, {hi}]", root.t);
    }

    #[test]
    fn stable_root_relation_under_full_saddle_count() {
        // With d^n saddle points, convexity puts the stable root below
        // t_u log d / (log d - t_u log |a|).
        let map = horseshoe();
        let search = search_for(&map, 6);
        let tu = bowen_ruelle_root(&search, PressureSide::Unstable).unwrap().t;
        let ts = bowen_ruelle_root(&search, PressureSide::Stable).unwrap().t;
        let logd = 2.0_f64.ln();
        let loga = 0.3_f64.ln();
        let bound = tu * logd / (logd - tu * loga);
        assert!(ts <= bound + 1e-9, "stable root {ts} above bound {bound}");
        assert!(ts <= tu + 1e-12, "stable root should not exceed unstable");
    }

    #[test]
    fn volume_preserving_roots_coincide_bitwise() {
        let map = conservative();
        let search = search_for(&map, 4);
        assert_eq!(search.fix_count, 16);
        let tu = bowen_ruelle_root(&search, PressureSide::Unstable).unwrap().t;
        let ts = bowen_ruelle_root(&search, PressureSide::Stable).unwrap().t;
        assert_eq!(tu.to_bits(), ts.to_bits(), "|a| = 1 collapses the two sides");
    }

    #[test]
    fn separated_pressure_tracks_periodic_pressure() {
        let map = horseshoe();
        let saddles = search_for(&map, 1);
        let mut anchors = Vec::new();
        for o in &saddles.saddles {
            anchors.extend(
                unstable_cloud(&map, o.representative, 1, &CloudOptions {
                    refine_dist: 0.02,
                    max_points: 120_000,
                    ..CloudOptions::default()
                })
                .unwrap(),
            );
        }
        let s = sample(
            &map,
            SampleTarget::J,
            4,
            5,
            &SampleOptions {
                anchors,
                ..SampleOptions::default()
            },
        )
        .unwrap();
        let candidates = s.probe_cloud();
        let search = search_for(&map, 6);
        for t in [0.0, 1.0] {
            let per = pressure_periodic(&search, t).unwrap();
            let sep = pressure_separated(&map, &candidates, 6, 0.4, t, 4, None).unwrap();
            assert!(sep.set_size >= 8, "separated set too small: {}", sep.set_size);
            assert!(
                (sep.unstable - per.unstable).abs() < 0.35,
                "unstable estimators disagree at t={t}: {} vs {}",
                sep.unstable,
                per.unstable
            );
            assert!(
                (sep.stable - per.stable).abs() < 0.35,
                "stable estimators disagree at t={t}: {} vs {}",
                sep.stable,
                per.stable
            );
        }
    }

    #[test]
    fn separated_pressure_is_deterministic() {
        let map = horseshoe();
        let search = search_for(&map, 1);
        let mut candidates = Vec::new();
        for o in &search.saddles {
            candidates.extend(
                unstable_cloud(&map, o.representative, 1, &CloudOptions {
                    refine_dist: 0.05,
                    max_points: 20_000,
                    ..CloudOptions::default()
                })
                .unwrap(),
            );
        }
        let a = pressure_separated(&map, &candidates, 4, 0.5, 1.0, 10, None).unwrap();
        let b = pressure_separated(&map, &candidates, 4, 0.5, 1.0, 10, None).unwrap();
        assert_eq!(a.unstable.to_bits(), b.unstable.to_bits());
        assert_eq!(a.stable.to_bits(), b.stable.to_bits());
        assert_eq!(a.set_size, b.set_size);
    }

    #[test]
    fn tiny_candidate_sets_error_out() {
        let map = horseshoe();
        let p = PointC2::from_re(10.0, 10.0);
        match pressure_separated(&map, &[p], 4, 0.5, 1.0, 10, None) {
            Err(Error::SeparatedSetTooSmall { got: 0 }) => {}
            other => panic!("expected too-small error, got {other:?}"),
        }
    }

    #[test]
    fn solid_cube_counts_fit_slope_four() {
        let counts: Vec<(u32, usize)> = (1..=5).map(|d| (d, 16usize.pow(d))).collect();
        let fit = box_dimension(&counts).unwrap();
        assert!((fit.slope - 4.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.scales, 5);
    }

    #[test]
    fn single_box_counts_fit_slope_zero() {
        let counts: Vec<(u32, usize)> = (1..=4).map(|d| (d, 1usize)).collect();
        let fit = box_dimension(&counts).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn box_dimension_input_validation() {
        match box_dimension(&[(1, 2), (2, 4), (3, 8)]) {
            Err(Error::TooFewScales { need: 4, got: 3 }) => {}
            other => panic!("expected too-few-scales, got {other:?}"),
        }
        match box_dimension(&[(3, 2), (3, 4), (4, 8), (4, 16)]) {
            Err(Error::DegenerateFit) => {}
            other => panic!("expected degenerate fit, got {other:?}"),
        }
    }
}
