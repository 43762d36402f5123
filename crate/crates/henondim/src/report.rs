//! One-call dimension analysis: bootstrap a saddle, trace its invariant
//! manifolds, cover the non-escaping sets with dyadic boxes, enumerate
//! periodic points period by period, and assemble the expansion rates,
//! pressure roots, and dimension table they determine.

use serde::Serialize;

use crate::algebra::{HenonMap, PointC2};
use crate::classify::Direction;
use crate::pressure::{
    bowen_ruelle_root, box_dimension, pressure_curve, pressure_periodic, pressure_separated,
    PressureSide,
};
use crate::rates::{
    growth_rates_periodic, holder_bounds, norm_rates, DirectionalRate, HolderBounds,
    PeriodicRateRow,
};
use crate::sampler::{
    find_periodic_from_seeds, grid_seeds, polar_seeds, sample, seeds_from_sample, stable_cloud,
    unstable_cloud, CloudOptions, JuliaSample, PeriodicSearch, SaddleOrbit, SampleOptions,
    SampleTarget,
};
use crate::{Error, Result};

/// Jittered Newton seeds per retained box (center plus two jitters).
const SEEDS_PER_BOX: usize = 3;
/// Strided cap on in-box anchor seeds at low periods.
const ANCHOR_CAP: usize = 32;
/// From this period on, every in-box anchor becomes a Newton seed; exhausting
/// the root count at high periods is the hard case and needs the density.
const UNCAP_FROM: usize = 7;
/// Polar seed grid shape: rings and spokes per coordinate.
const POLAR_RADIAL: usize = 2;
const POLAR_ANGULAR: usize = 24;
/// Bootstrap grid resolution per real axis.
const BOOTSTRAP_GRID: usize = 7;
/// t values probed when recording the worst pressure-identity deviation.
const IDENTITY_TS: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

/// Knobs of the analysis pipeline. The defaults match the accuracy the
/// integration suite expects; shrink them for quick looks at a new map.
#[derive(Debug, Clone, Serialize)]
pub struct ReportOptions {
    /// Periodic searches run for every n in 1..=max_period.
    pub max_period: usize,
    /// Periods at which the pressure roots are solved; the largest one
    /// supplies the dimension table. Entries must lie in 1..=max_period.
    pub root_periods: Vec<usize>,
    /// Dyadic depth of the box cover of J used for Newton seeding.
    pub sample_depth: u32,
    /// Escape horizon for that cover; loose on purpose so points slightly
    /// off the set still qualify as probes and seeds.
    pub seed_horizon: usize,
    /// Depth and horizon of the cover used for the box-counting check of the
    /// backward non-escaping set.
    pub kminus_depth: u32,
    pub kminus_horizon: usize,
    /// Manifold tracing: refinement distance and point budget per cloud.
    pub cloud_refine: f64,
    pub cloud_max_points: usize,
    /// Horizon for the directional norm rates s+ and s-.
    pub norm_horizon: usize,
    /// Cap on cloud probes fed to the norm-rate estimator.
    pub rate_probe_cap: usize,
    /// Separated-set pressure cross-check: orbit length, separation scale,
    /// direction horizon, candidate cap.
    pub sep_n: usize,
    pub sep_eps: f64,
    pub sep_m_dir: usize,
    pub sep_candidate_cap: usize,
    /// Newton acceptance tolerance, scaled internally by the conditioning of
    /// the iterated derivative.
    pub newton_tol: f64,
    pub jitter_seed: u64,
    /// Probe budget per box while sampling.
    pub probes: usize,
    /// Parameter grid for the tabulated pressure curves.
    pub curve_ts: Vec<f64>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            max_period: 8,
            root_periods: vec![4, 6, 8],
            sample_depth: 6,
            seed_horizon: 4,
            kminus_depth: 6,
            kminus_horizon: 6,
            cloud_refine: 0.01,
            cloud_max_points: 400_000,
            norm_horizon: 8,
            rate_probe_cap: 20_000,
            sep_n: 6,
            sep_eps: 2.0,
            sep_m_dir: 4,
            sep_candidate_cap: 150_000,
            newton_tol: 1e-12,
            jitter_seed: 7,
            probes: 32,
            curve_ts: (0..=20).map(|k| k as f64 * 0.1).collect(),
        }
    }
}

fn validate(opts: &ReportOptions) {
    assert!(opts.max_period >= 1);
    assert!(
        !opts.root_periods.is_empty(),
        "need at least one root period"
    );
    assert!(
        opts.root_periods
            .iter()
            .all(|n| (1..=opts.max_period).contains(n)),
        "root periods must lie in 1..=max_period"
    );
    assert!(
        (1..=opts.max_period).contains(&opts.sep_n),
        "sep_n must lie in 1..=max_period"
    );
    assert!(opts.sample_depth >= 1);
    assert!(opts.kminus_depth >= 4, "box fit needs at least four scales");
    assert!(opts.norm_horizon >= 1);
    assert!(
        !opts.curve_ts.is_empty() && opts.curve_ts.iter().all(|t| t.is_finite()),
        "pressure curve grid must be nonempty and finite"
    );
}

/// Count summaries, one row per searched period.
pub fn fix_count_rows(searches: &[PeriodicSearch]) -> Vec<FixCountRow> {
    searches
        .iter()
        .map(|s| FixCountRow {
            n: s.period,
            fix_count: s.fix_count,
            saddle_points: s.saddle_point_count(),
            orbits: s.saddles.len() + s.non_saddles.len(),
            max_residual: s
                .saddles
                .iter()
                .chain(s.non_saddles.iter())
                .map(|o| o.newton_residual)
                .fold(0.0, f64::max),
            seeds_used: s.seeds_used,
        })
        .collect()
}

/// Root-count summary of one periodic search.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixCountRow {
    pub n: usize,
    /// Fixed points of g^n found (multiplicities over cycles summed).
    pub fix_count: usize,
    pub saddle_points: usize,
    pub orbits: usize,
    /// Largest raw closing error over the accepted cycles.
    pub max_residual: f64,
    pub seeds_used: usize,
}

/// Pressure roots at one period.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RootRow {
    pub n: usize,
    pub unstable: f64,
    pub stable: f64,
}

/// One tabulated point of the periodic pressure curves.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PressureCurveRow {
    pub n: usize,
    pub t: f64,
    pub unstable: f64,
    pub stable: f64,
}

/// Two-sided bound on dim J from the extreme multiplier rates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MultiplierWindow {
    /// Extremes of (1/n) log |lambda_u| over every saddle cycle found.
    pub s_inf: f64,
    pub s_sup: f64,
    pub lower: f64,
    pub upper: f64,
    pub contains_dim_j: bool,
}

/// One pressure root bounded through the other by the twist modulus.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RootBoundCheck {
    pub bounded_side: PressureSide,
    pub observed: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Box-counting slope of a one-sided non-escaping set against the slope the
/// dissipation rate allows.
#[derive(Debug, Clone, Serialize)]
pub struct BoxCheck {
    /// Which set was covered, named for the input map.
    pub set: String,
    pub depth: u32,
    pub horizon: usize,
    pub slope: f64,
    pub residual: f64,
    pub scales: usize,
    /// 4 - 2 log(1/|a|) / s-, the volume-contraction ceiling for the slope.
    pub upper_bound: f64,
    /// Retained-box count per depth, the raw data behind the fit.
    pub counts: Vec<(u32, usize)>,
}

/// Separated-set pressure against periodic-orbit pressure at one t.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EstimatorGap {
    pub t: f64,
    pub n: usize,
    pub eps: f64,
    pub periodic_unstable: f64,
    pub separated_unstable: f64,
    pub gap_unstable: f64,
    pub periodic_stable: f64,
    pub separated_stable: f64,
    pub gap_stable: f64,
    pub set_size: usize,
}

/// Where the manifold clouds were rooted.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SaddleSource {
    pub period: usize,
    pub representative: PointC2,
    /// Saddle cycles of that period whose manifolds were traced.
    pub saddles_used: usize,
    pub lambda_u_mod: f64,
    pub lambda_s_mod: f64,
}

/// Assembled dimension analysis of one map.
#[derive(Debug, Clone, Serialize)]
pub struct DimensionReport {
    pub degree: u64,
    /// Twist modulus of the map the pipeline actually ran on (at most 1).
    pub twist_modulus: f64,
    /// Twist modulus of the map as given.
    pub input_twist_modulus: f64,
    pub escape_radius: f64,
    /// True when the input had expanding twist and its inverse normal form
    /// was analyzed instead. Side-dependent fields are relabeled so they
    /// describe the input map; `saddle_source`, the count rows, and the
    /// multiplier rates describe the analyzed inverse (the counts agree).
    pub inverted: bool,
    pub saddle_source: SaddleSource,
    pub fix_counts: Vec<FixCountRow>,
    pub periodic_rates: Vec<PeriodicRateRow>,
    pub roots: Vec<RootRow>,
    /// Periodic pressure tabulated over the configured t grid, per period.
    pub pressure_curve: Vec<PressureCurveRow>,
    /// Pressure roots at the deepest requested period.
    pub t_hat_u: f64,
    pub t_hat_s: f64,
    /// Worst deviation from stable pressure = unstable pressure + t log|a|
    /// over the probed t grid at the deepest root period.
    pub pressure_identity_gap: f64,
    pub dim_j: f64,
    pub dim_j_plus: f64,
    pub dim_j_minus: f64,
    pub multiplier_window: MultiplierWindow,
    pub stable_root_check: RootBoundCheck,
    /// Twist small enough (|a| <= degree^(-1/2)) that transversals to the
    /// invariant laminations are totally disconnected.
    pub cantor_small_twist: bool,
    /// Topological dimensions, reported only when every detected cycle is a
    /// clean saddle and the small-twist flag holds: J is then totally
    /// disconnected and each one-sided set is laminated by planes.
    pub topological_dim_j: Option<u32>,
    pub topological_dim_j_plus: Option<u32>,
    pub topological_dim_j_minus: Option<u32>,
    pub rate_forward: DirectionalRate,
    pub rate_backward: DirectionalRate,
    /// Norm growth rates at the configured horizon.
    pub s_plus: f64,
    pub s_minus: f64,
    pub holder: HolderBounds,
    pub box_check: BoxCheck,
    pub estimator_gaps: Vec<EstimatorGap>,
    pub hyperbolicity_doubtful: bool,
}

impl DimensionReport {
    /// Relabel every side-dependent field after analyzing the inverse normal
    /// form: forward data of the analyzed map is backward data of the input
    /// and vice versa, and the covered one-sided set flips.
    fn swap_sides(&mut self) {
        std::mem::swap(&mut self.t_hat_u, &mut self.t_hat_s);
        std::mem::swap(&mut self.dim_j_plus, &mut self.dim_j_minus);
        std::mem::swap(&mut self.s_plus, &mut self.s_minus);
        std::mem::swap(&mut self.rate_forward, &mut self.rate_backward);
        self.rate_forward.direction = Direction::Forward;
        self.rate_backward.direction = Direction::Backward;
        std::mem::swap(
            &mut self.holder.exponent_forward,
            &mut self.holder.exponent_backward,
        );
        std::mem::swap(
            &mut self.holder.dim_lower_forward,
            &mut self.holder.dim_lower_backward,
        );
        for row in self.roots.iter_mut() {
            std::mem::swap(&mut row.unstable, &mut row.stable);
        }
        for row in self.pressure_curve.iter_mut() {
            std::mem::swap(&mut row.unstable, &mut row.stable);
        }
        self.stable_root_check.bounded_side = match self.stable_root_check.bounded_side {
            PressureSide::Stable => PressureSide::Unstable,
            PressureSide::Unstable => PressureSide::Stable,
        };
        self.box_check.set = "K+".to_string();
        std::mem::swap(
            &mut self.topological_dim_j_plus,
            &mut self.topological_dim_j_minus,
        );
        for gap in self.estimator_gaps.iter_mut() {
            std::mem::swap(&mut gap.periodic_unstable, &mut gap.periodic_stable);
            std::mem::swap(&mut gap.separated_unstable, &mut gap.separated_stable);
            std::mem::swap(&mut gap.gap_unstable, &mut gap.gap_stable);
        }
    }
}

/// Intermediate products of the search stage: the bootstrap saddles' manifold
/// clouds, the box cover of J they anchor, and the periodic searches seeded
/// from it. Reused by everything downstream that needs the same probes.
#[derive(Debug, Clone, Serialize)]
pub struct SearchPipeline {
    pub saddle_source: SaddleSource,
    /// Points collected on the unstable manifolds of the bootstrap saddles;
    /// their backward orbits stay bounded.
    pub unstable_points: Vec<PointC2>,
    /// Same on the stable side; forward orbits stay bounded.
    pub stable_points: Vec<PointC2>,
    pub sample: JuliaSample,
    /// One search per period 1..=max_period.
    pub searches: Vec<PeriodicSearch>,
    /// Every point of every cycle found, indexed by period.
    pub cycle_points_by_period: Vec<Vec<PointC2>>,
}

impl SearchPipeline {
    pub fn all_cycle_points(&self) -> Vec<PointC2> {
        self.cycle_points_by_period
            .iter()
            .flatten()
            .copied()
            .collect()
    }
}

/// Bootstrap the lowest-period saddles and trace their invariant manifolds.
/// The unstable cloud stays bounded backward, the stable cloud forward, so
/// they anchor box covers of the one-sided sets and of J.
pub fn manifold_anchors(
    map: &HenonMap,
    opts: &ReportOptions,
) -> Result<(SaddleSource, Vec<PointC2>, Vec<PointC2>)> {
    let (boot_period, boot_saddles) = bootstrap_saddles(map, opts)?;
    let copts = CloudOptions {
        refine_dist: opts.cloud_refine,
        max_points: opts.cloud_max_points,
        ..CloudOptions::default()
    };
    let mut u_cloud: Vec<PointC2> = Vec::new();
    let mut s_cloud: Vec<PointC2> = Vec::new();
    for orbit in &boot_saddles {
        u_cloud.extend(unstable_cloud(
            map,
            orbit.representative,
            orbit.primitive_period,
            &copts,
        )?);
        s_cloud.extend(stable_cloud(
            map,
            orbit.representative,
            orbit.primitive_period,
            &copts,
        )?);
    }
    let first = &boot_saddles[0];
    let saddle_source = SaddleSource {
        period: boot_period,
        representative: first.representative,
        saddles_used: boot_saddles.len(),
        lambda_u_mod: first.lambda_u.norm(),
        lambda_s_mod: first.lambda_s.norm(),
    };
    Ok((saddle_source, u_cloud, s_cloud))
}

/// Bootstrap saddles, trace their manifolds, cover J, and run the seeded
/// periodic searches for every period up to the configured maximum.
pub fn periodic_pipeline(map: &HenonMap, opts: &ReportOptions) -> Result<SearchPipeline> {
    assert!(opts.max_period >= 1);
    let radius = map.escape_radius();
    let (saddle_source, u_cloud, s_cloud) = manifold_anchors(map, opts)?;

    // Box cover of J, anchored on both manifold clouds.
    let mut anchors = u_cloud.clone();
    anchors.extend_from_slice(&s_cloud);
    let jsample = sample(
        map,
        SampleTarget::J,
        opts.sample_depth,
        opts.seed_horizon,
        &SampleOptions {
            probes: opts.probes,
            radius: None,
            anchors,
        },
    )?;

    // Periodic searches, reseeding each period with the cycles of its
    // divisors.
    let mut searches: Vec<PeriodicSearch> = Vec::with_capacity(opts.max_period);
    let mut points_by_period: Vec<Vec<PointC2>> = vec![Vec::new(); opts.max_period + 1];
    for n in 1..=opts.max_period {
        let cap = if n >= UNCAP_FROM { usize::MAX } else { ANCHOR_CAP };
        let mut seeds = seeds_from_sample(&jsample, SEEDS_PER_BOX, cap, opts.jitter_seed);
        seeds.extend(polar_seeds(radius / 2.0, POLAR_RADIAL, POLAR_ANGULAR));
        #[allow(clippy::needless_range_loop)]
        for m in 1..n {
            if n.is_multiple_of(m) {
                seeds.extend_from_slice(&points_by_period[m]);
            }
        }
        let search = find_periodic_from_seeds(map, n, &seeds, opts.newton_tol)?;
        let mut pts = Vec::new();
        for orbit in search.saddles.iter().chain(search.non_saddles.iter()) {
            pts.extend(cycle_points(map, orbit)?);
        }
        points_by_period[n] = pts;
        searches.push(search);
    }
    Ok(SearchPipeline {
        saddle_source,
        unstable_points: u_cloud,
        stable_points: s_cloud,
        sample: jsample,
        searches,
        cycle_points_by_period: points_by_period,
    })
}

/// Run the full analysis. Inputs with expanding twist (|a| > 1) are handled
/// by analyzing the inverse normal form and relabeling the sides, so the
/// report always describes the map that was passed in.
pub fn analyze(map: &HenonMap, opts: &ReportOptions) -> Result<DimensionReport> {
    let input_twist = map.twist_modulus();
    if input_twist > 1.0 {
        let inv = map.inverse_normal_form()?;
        let mut rep = analyze_core(&inv, opts)?;
        rep.inverted = true;
        rep.input_twist_modulus = input_twist;
        rep.swap_sides();
        return Ok(rep);
    }
    analyze_core(map, opts)
}

fn analyze_core(map: &HenonMap, opts: &ReportOptions) -> Result<DimensionReport> {
    validate(opts);
    let radius = map.escape_radius();
    let degree = map.degree();
    let logd = (degree as f64).ln();
    let twist = map.twist_modulus();
    let log_twist = twist.ln();
    let contraction = -log_twist;

    let pipeline = periodic_pipeline(map, opts)?;
    let SearchPipeline {
        saddle_source,
        unstable_points: u_cloud,
        stable_points: s_cloud,
        sample: jsample,
        searches,
        ..
    } = &pipeline;
    let fix_counts = fix_count_rows(searches);
    let all_cycle_points = pipeline.all_cycle_points();
    let saddle_source = *saddle_source;

    // Multiplier rates and the dimension window they pin down.
    let periodic_rates = growth_rates_periodic(searches)?;
    let s_inf = periodic_rates
        .iter()
        .map(|r| r.s_min)
        .fold(f64::INFINITY, f64::min);
    let s_sup = periodic_rates
        .iter()
        .map(|r| r.s_max)
        .fold(f64::NEG_INFINITY, f64::max);
    let window_at = |s: f64| (1.0 / s + 1.0 / (s + contraction)) * logd;

    // Pressure roots per requested period; the deepest row is the headline.
    let mut roots = Vec::with_capacity(opts.root_periods.len());
    for &n in &opts.root_periods {
        let search = &searches[n - 1];
        let u = bowen_ruelle_root(search, PressureSide::Unstable)?;
        let s = bowen_ruelle_root(search, PressureSide::Stable)?;
        roots.push(RootRow {
            n,
            unstable: u.t,
            stable: s.t,
        });
    }
    let best = *roots.iter().max_by_key(|r| r.n).unwrap();
    let (t_hat_u, t_hat_s) = (best.unstable, best.stable);
    let mut curve_rows = Vec::new();
    for search in searches.iter().filter(|s| !s.saddles.is_empty()) {
        for point in pressure_curve(search, &opts.curve_ts)? {
            curve_rows.push(PressureCurveRow {
                n: search.period,
                t: point.t,
                unstable: point.unstable,
                stable: point.stable,
            });
        }
    }
    let top_search = &searches[best.n - 1];
    let mut pressure_identity_gap = 0.0_f64;
    for &t in IDENTITY_TS.iter() {
        let p = pressure_periodic(top_search, t)?;
        pressure_identity_gap = pressure_identity_gap.max((p.stable - p.unstable - t * log_twist).abs());
    }

    let dim_j = t_hat_u + t_hat_s;
    let (lower, upper) = (window_at(s_sup), window_at(s_inf));
    let multiplier_window = MultiplierWindow {
        s_inf,
        s_sup,
        lower,
        upper,
        contains_dim_j: lower - 1e-9 <= dim_j && dim_j <= upper + 1e-9,
    };
    let bound = t_hat_u * logd / (logd - t_hat_u * log_twist);
    let stable_root_check = RootBoundCheck {
        bounded_side: PressureSide::Stable,
        observed: t_hat_s,
        bound,
        ok: t_hat_s <= bound + 1e-9,
    };

    // Directional norm rates: forward orbits stay bounded on the stable
    // side, backward orbits on the unstable side; the cycles survive both.
    let mut fwd_probes = thin(s_cloud, opts.rate_probe_cap);
    fwd_probes.extend_from_slice(&all_cycle_points);
    let rate_forward = norm_rates(map, &fwd_probes, Direction::Forward, opts.norm_horizon, None)?;
    let mut bwd_probes = thin(u_cloud, opts.rate_probe_cap);
    bwd_probes.extend_from_slice(&all_cycle_points);
    let rate_backward = norm_rates(
        map,
        &bwd_probes,
        Direction::Backward,
        opts.norm_horizon,
        None,
    )?;
    let s_plus = rate_forward.rows.last().unwrap().rate;
    let s_minus = rate_backward.rows.last().unwrap().rate;
    let holder = holder_bounds(degree, s_plus, s_minus);

    // Box-counting slope of the backward non-escaping set.
    let ksample = sample(
        map,
        SampleTarget::KMinus,
        opts.kminus_depth,
        opts.kminus_horizon,
        &SampleOptions {
            probes: opts.probes,
            radius: None,
            anchors: u_cloud.clone(),
        },
    )?;
    let kfit = box_dimension(&ksample.per_depth_counts)?;
    let box_check = BoxCheck {
        set: "K-".to_string(),
        depth: opts.kminus_depth,
        horizon: opts.kminus_horizon,
        slope: kfit.slope,
        residual: kfit.residual,
        scales: kfit.scales,
        upper_bound: if s_minus > 0.0 {
            4.0 - 2.0 * contraction / s_minus
        } else {
            4.0
        },
        counts: ksample.per_depth_counts.clone(),
    };

    // Separated-set pressure against the periodic estimator.
    let sep_search = &searches[opts.sep_n - 1];
    let cloud = jsample.probe_cloud();
    let mut candidates = thin(&cloud, opts.sep_candidate_cap);
    candidates.extend_from_slice(&all_cycle_points);
    let mut estimator_gaps = Vec::with_capacity(2);
    for &t in [0.0, 1.0].iter() {
        let per = pressure_periodic(sep_search, t)?;
        let sep = pressure_separated(
            map,
            &candidates,
            opts.sep_n,
            opts.sep_eps,
            t,
            opts.sep_m_dir,
            None,
        )?;
        estimator_gaps.push(EstimatorGap {
            t,
            n: opts.sep_n,
            eps: opts.sep_eps,
            periodic_unstable: per.unstable,
            separated_unstable: sep.unstable,
            gap_unstable: (sep.unstable - per.unstable).abs(),
            periodic_stable: per.stable,
            separated_stable: sep.stable,
            gap_stable: (sep.stable - per.stable).abs(),
            set_size: sep.set_size,
        });
    }

    let hyperbolicity_doubtful = searches.iter().any(|s| s.hyperbolicity_doubtful());
    let cantor_small_twist = twist <= (degree as f64).powf(-0.5);
    let clean = !hyperbolicity_doubtful && cantor_small_twist;

    Ok(DimensionReport {
        degree,
        twist_modulus: twist,
        input_twist_modulus: twist,
        escape_radius: radius,
        inverted: false,
        saddle_source,
        fix_counts,
        periodic_rates,
        roots,
        pressure_curve: curve_rows,
        t_hat_u,
        t_hat_s,
        pressure_identity_gap,
        dim_j,
        dim_j_plus: 2.0 + t_hat_u,
        dim_j_minus: 2.0 + t_hat_s,
        multiplier_window,
        stable_root_check,
        cantor_small_twist,
        topological_dim_j: clean.then_some(0),
        topological_dim_j_plus: clean.then_some(2),
        topological_dim_j_minus: clean.then_some(2),
        rate_forward,
        rate_backward,
        s_plus,
        s_minus,
        holder,
        box_check,
        estimator_gaps,
        hyperbolicity_doubtful,
    })
}

/// One dissipation level of the twist sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub twist_modulus: f64,
    pub s_minus: f64,
    /// 4 - 2 log(1/|a|) / s-.
    pub box_bound: f64,
}

/// Rescale the twist coefficients to each requested modulus (phases kept,
/// the adjustment split evenly across factors), estimate the backward norm
/// growth of each rescaled map, and report the box-dimension ceiling it
/// implies for the backward non-escaping set.
pub fn sweep(map: &HenonMap, moduli: &[f64], opts: &ReportOptions) -> Result<Vec<SweepRow>> {
    let m = map.factors().len() as f64;
    let base = map.twist_modulus();
    let mut rows = Vec::with_capacity(moduli.len());
    for &target in moduli {
        assert!(
            target > 0.0 && target <= 1.0 && target.is_finite(),
            "sweep moduli must lie in (0, 1]"
        );
        let scale = (target / base).powf(1.0 / m);
        let parts = map
            .factors()
            .iter()
            .map(|f| (f.poly.coeffs().to_vec(), f.twist * scale))
            .collect();
        let scaled = HenonMap::from_parts(parts)?;
        let s_minus = backward_rate(&scaled, opts)?;
        let contraction = -scaled.twist_modulus().ln();
        rows.push(SweepRow {
            twist_modulus: scaled.twist_modulus(),
            s_minus,
            box_bound: 4.0 - 2.0 * contraction / s_minus,
        });
    }
    Ok(rows)
}

/// Backward norm-growth rate at the configured horizon, probed from the
/// unstable manifolds of the bootstrap saddles and the cycles themselves.
fn backward_rate(map: &HenonMap, opts: &ReportOptions) -> Result<f64> {
    let (_, saddles) = bootstrap_saddles(map, opts)?;
    let copts = CloudOptions {
        refine_dist: opts.cloud_refine,
        max_points: opts.cloud_max_points,
        ..CloudOptions::default()
    };
    let per_cloud = opts.rate_probe_cap / saddles.len().max(1);
    let mut probes = Vec::new();
    for orbit in &saddles {
        let cloud = unstable_cloud(map, orbit.representative, orbit.primitive_period, &copts)?;
        probes.extend(thin(&cloud, per_cloud));
        probes.extend(cycle_points(map, orbit)?);
    }
    let rate = norm_rates(map, &probes, Direction::Backward, opts.norm_horizon, None)?;
    Ok(rate.rows.last().unwrap().rate)
}

/// Saddle cycles at the lowest period that has any, from grid and polar
/// seeds over the bidisk.
fn bootstrap_saddles(map: &HenonMap, opts: &ReportOptions) -> Result<(usize, Vec<SaddleOrbit>)> {
    let radius = map.escape_radius();
    let mut seeds = grid_seeds(radius, BOOTSTRAP_GRID);
    seeds.extend(polar_seeds(radius / 2.0, POLAR_RADIAL, POLAR_ANGULAR));
    for n in 1..=opts.max_period {
        let search = find_periodic_from_seeds(map, n, &seeds, opts.newton_tol)?;
        if !search.saddles.is_empty() {
            return Ok((n, search.saddles));
        }
    }
    Err(Error::EmptyOrbitList)
}

/// All points of a cycle, starting from its representative.
fn cycle_points(map: &HenonMap, orbit: &SaddleOrbit) -> Result<Vec<PointC2>> {
    let mut pts = Vec::with_capacity(orbit.primitive_period);
    let mut p = orbit.representative;
    for _ in 0..orbit.primitive_period {
        pts.push(p);
        p = map.eval(p)?;
    }
    Ok(pts)
}

/// Deterministic stride subsample: at most cap points, order preserved.
fn thin(points: &[PointC2], cap: usize) -> Vec<PointC2> {
    if points.len() <= cap {
        return points.to_vec();
    }
    let step = points.len().div_ceil(cap);
    points.iter().copied().step_by(step).collect()
}
