//! Command line front end: parse a map file, run the requested pipeline, and
//! write reproducible JSON reports and CSV tables.
//!
//! Every output carries a header with the tool version, a hash of the
//! canonical map description, a hash of the effective computation parameters,
//! and the probe seed, so a result can always be traced back to its inputs.
//! Files are written atomically (temp file in the target directory, then
//! rename). Identical inputs produce byte-identical outputs regardless of
//! `--threads`; the thread count and the output directory are therefore
//! excluded from the config hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::algebra::{map_from_json, map_to_json, HenonMap, PointC2};
use crate::classify::{classify_backward, classify_forward, green, Direction, EscapeStatus};
use crate::pressure::{box_dimension, pressure_curve, pressure_periodic};
use crate::rates::{growth_rates_periodic, norm_rates};
use crate::report::{
    analyze, fix_count_rows, manifold_anchors, periodic_pipeline, sweep, ReportOptions,
};
use crate::sampler::{
    find_periodic_from_seeds, grid_seeds, polar_seeds, sample, SampleOptions, SampleTarget,
};
use crate::{Error, Result};

const TOOL: &str = "henondim";
const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment override for the output directory; the only env the CLI reads.
const OUT_ENV: &str = "HENONDIM_OUT";

/// Run with the given argv; returns the process exit code.
pub fn run(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = err.exit_code();
            let _ = err.print();
            return if code == 0 { 0 } else { 2 };
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(failure) => {
            if let Error::Usage(msg) = &failure.error {
                eprintln!("error: {msg}");
                eprintln!("run '{TOOL} --help' for usage");
                2
            } else {
                eprintln!("error [stage: {}]: {}", failure.stage, failure.error);
                1
            }
        }
    }
}

#[derive(Parser)]
#[command(name = TOOL, version, about = "Dimension estimates for composed complex Henon maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Escape-time classification of seeded random probe points
    Classify(ClassifyArgs),
    /// Escape-rate potentials G+ and G- at seeded random probe points
    Green(GreenArgs),
    /// Dyadic box cover of an invariant set (j, j+, j-, k-)
    Sample(SampleArgs),
    /// Periodic orbits and fixed-point counts up to a period bound
    PeriodicOrbits(PeriodicArgs),
    /// Multiplier ranges per period and directional cocycle growth rates
    Rates(RatesArgs),
    /// Periodic pressure tabulated over a parameter grid
    PressureCurve(CurveArgs),
    /// Full dimension analysis: roots, verdicts, and side tables
    DimensionReport(ReportArgs),
    /// Box-counting slope of a covered invariant set
    BoxDim(BoxDimArgs),
    /// Box-dimension ceiling across a sweep of dissipation levels
    Sweep(SweepArgs),
    /// Exact-identity checks on the built-in fixture maps
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Map file (JSON), or builtin:horseshoe | builtin:conservative | builtin:near-1d
    #[arg(long, value_name = "file")]
    map: String,
    /// Output directory (HENONDIM_OUT overrides)
    #[arg(long, value_name = "dir", default_value = "henondim-out")]
    out: PathBuf,
    /// Seed for probe jitter; recorded in every output
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads, 0 = one per core
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Orbit horizon for the escape test
    #[arg(long = "nmax", default_value_t = 64)]
    n_max: usize,
    /// Number of random probe points
    #[arg(long, default_value_t = 2000)]
    count: usize,
}

#[derive(Args)]
struct GreenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Iteration cap for the potential
    #[arg(long = "nmax", default_value_t = 256)]
    n_max: usize,
    /// Number of random probe points
    #[arg(long, default_value_t = 500)]
    count: usize,
    /// Convergence tolerance for successive refinements
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target set: j, j+, j-, or k-
    #[arg(long, default_value = "j", value_parser = parse_target)]
    target: SampleTarget,
    /// Bisection depth of the box cover
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..=9))]
    depth: u32,
    /// Escape horizon used when probing boxes
    #[arg(long = "nmax", default_value_t = 5)]
    n_max: usize,
}

#[derive(Args)]
struct PeriodicArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Periods to search, e.g. 1..8
    #[arg(long, default_value = "1..8", value_parser = parse_periods)]
    periods: Periods,
    /// Bisection depth of the seeding cover of J
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=9))]
    depth: u32,
}

#[derive(Args)]
struct RatesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Periods feeding the multiplier table, e.g. 1..8
    #[arg(long, default_value = "1..8", value_parser = parse_periods)]
    periods: Periods,
    /// Bisection depth of the seeding cover of J
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=9))]
    depth: u32,
    /// Horizon for the directional norm rates
    #[arg(long = "nmax", default_value_t = 8)]
    n_max: usize,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Periods to tabulate, e.g. 1..8
    #[arg(long, default_value = "1..8", value_parser = parse_periods)]
    periods: Periods,
    /// Bisection depth of the seeding cover of J
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=9))]
    depth: u32,
    /// Parameter grid start:stop:step
    #[arg(long, default_value = "0:2:0.1", value_parser = parse_tgrid)]
    tgrid: TGrid,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Periods to search, e.g. 1..8
    #[arg(long, default_value = "1..8", value_parser = parse_periods)]
    periods: Periods,
    /// Bisection depth of the box cover of J
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=9))]
    depth: u32,
    /// Escape horizon used when probing boxes
    #[arg(long = "nmax", default_value_t = 4)]
    n_max: usize,
    /// Parameter grid for the tabulated pressure curves, start:stop:step
    #[arg(long, default_value = "0:2:0.1", value_parser = parse_tgrid)]
    tgrid: TGrid,
    /// Separation scale of the separated-set pressure cross-check
    #[arg(long, default_value_t = 2.0)]
    eps: f64,
}

#[derive(Args)]
struct BoxDimArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Target set: j, j+, j-, or k-
    #[arg(long, default_value = "k-", value_parser = parse_target)]
    target: SampleTarget,
    /// Bisection depth of the box cover
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(4..=9))]
    depth: u32,
    /// Escape horizon used when probing boxes
    #[arg(long = "nmax", default_value_t = 6)]
    n_max: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dissipation moduli to rescale the twist to, e.g. 0.3,0.1,0.03
    #[arg(long, default_value = "0.3,0.1,0.03", value_parser = parse_moduli)]
    moduli: Moduli,
}

#[derive(Args)]
struct SelftestArgs {
    /// Output directory (HENONDIM_OUT overrides)
    #[arg(long, value_name = "dir", default_value = "henondim-out")]
    out: PathBuf,
    /// Seed for the round-trip probe points
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads, 0 = one per core
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

// --- flag value parsing ---------------------------------------------------

#[derive(Clone, Copy)]
struct Periods {
    max: usize,
}

fn parse_periods(s: &str) -> std::result::Result<Periods, String> {
    let max = if let Some((lo, hi)) = s.split_once("..") {
        if lo.trim() != "1" {
            return Err("period ranges start at 1, e.g. 1..8".into());
        }
        hi.trim().parse::<usize>().map_err(|e| e.to_string())?
    } else {
        s.trim().parse::<usize>().map_err(|e| e.to_string())?
    };
    if !(1..=10).contains(&max) {
        return Err("period bound must lie in 1..=10".into());
    }
    Ok(Periods { max })
}

#[derive(Clone)]
struct TGrid(Vec<f64>);

fn parse_tgrid(s: &str) -> std::result::Result<TGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err("expected start:stop:step, e.g. 0:2:0.1".into());
    };
    let start: f64 = start.trim().parse().map_err(|_| "bad grid start")?;
    let stop: f64 = stop.trim().parse().map_err(|_| "bad grid stop")?;
    let step: f64 = step.trim().parse().map_err(|_| "bad grid step")?;
    if !start.is_finite() || !stop.is_finite() || !step.is_finite() || step <= 0.0 || stop < start
    {
        return Err("grid needs finite start <= stop and step > 0".into());
    }
    if (stop - start) / step > 1000.0 {
        return Err("grid has more than 1000 points".into());
    }
    let mut ts = Vec::new();
    let mut k = 0u32;
    loop {
        let t = start + f64::from(k) * step;
        if t > stop + 1e-9 * step {
            break;
        }
        ts.push(t);
        k += 1;
    }
    Ok(TGrid(ts))
}

#[derive(Clone)]
struct Moduli(Vec<f64>);

fn parse_moduli(s: &str) -> std::result::Result<Moduli, String> {
    let vals: std::result::Result<Vec<f64>, String> = s
        .split(',')
        .map(|part| {
            let v: f64 = part.trim().parse().map_err(|_| format!("bad modulus '{part}'"))?;
            if v > 0.0 && v <= 1.0 {
                Ok(v)
            } else {
                Err(format!("modulus {v} outside (0, 1]"))
            }
        })
        .collect();
    let vals = vals?;
    if vals.is_empty() || vals.len() > 64 {
        return Err("need between 1 and 64 moduli".into());
    }
    Ok(Moduli(vals))
}

fn parse_target(s: &str) -> std::result::Result<SampleTarget, String> {
    SampleTarget::parse(s).ok_or_else(|| "target must be one of: j, j+, j-, k-".into())
}

// --- failure plumbing -----------------------------------------------------

struct Failure {
    stage: &'static str,
    error: Error,
}

fn stage<T>(name: &'static str, result: Result<T>) -> std::result::Result<T, Failure> {
    result.map_err(|error| Failure { stage: name, error })
}

type Run = std::result::Result<String, Failure>;

// --- shared helpers -------------------------------------------------------

#[derive(Serialize, Clone)]
struct Header {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    map_hash: String,
    config_hash: String,
    seed: u64,
}

fn sha_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn header(command: &'static str, map_json: &str, config: &serde_json::Value, seed: u64) -> Header {
    Header {
        tool: TOOL,
        version: VERSION,
        command,
        map_hash: sha_hex(map_json.as_bytes()),
        config_hash: sha_hex(config.to_string().as_bytes()),
        seed,
    }
}

fn builtin_map(name: &str) -> Option<HenonMap> {
    let c = |re: f64| Complex64::new(re, 0.0);
    let parts = match name {
        "horseshoe" => vec![(vec![c(-6.0), c(0.0), c(1.0)], c(0.3))],
        "conservative" => vec![(vec![c(-10.0), c(0.0), c(1.0)], c(1.0))],
        "near-1d" => vec![(vec![c(0.0), c(0.0), c(1.0)], c(0.01))],
        _ => return None,
    };
    Some(HenonMap::from_parts(parts).expect("builtin fixtures are valid"))
}

fn load_map(arg: &str) -> Result<HenonMap> {
    if let Some(name) = arg.strip_prefix("builtin:") {
        return builtin_map(name).ok_or_else(|| {
            Error::Usage(format!(
                "unknown builtin map '{name}' (builtin:horseshoe, builtin:conservative, builtin:near-1d)"
            ))
        });
    }
    let text = std::fs::read_to_string(arg).map_err(|source| Error::Io {
        path: arg.to_string(),
        source,
    })?;
    map_from_json(&text)
}

fn init_threads(threads: usize) -> std::result::Result<(), Failure> {
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure {
            stage: "thread-pool",
            error: Error::Usage(format!("cannot size the worker pool: {e}")),
        })
}

fn resolve_out(flag: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => flag.to_path_buf(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn write_atomic(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    use std::io::Write;
    let mut tmp = tempfile::Builder::new()
        .prefix(".tmp-")
        .tempfile_in(dir)
        .map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    tmp.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: tmp.path().display().to_string(),
        source,
    })?;
    let path = dir.join(name);
    tmp.persist(&path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(path)
}

fn json_doc<T: Serialize>(header: &Header, report: &T) -> Result<String> {
    let value = serde_json::json!({
        "header": header,
        "report": serde_json::to_value(report).map_err(|source| Error::Json {
            context: "report serialization".into(),
            source,
        })?,
    });
    let mut text = serde_json::to_string_pretty(&value).map_err(|source| Error::Json {
        context: "document serialization".into(),
        source,
    })?;
    text.push('\n');
    Ok(text)
}

fn csv_doc(header: &Header, columns: &str) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "# tool: {} {}", header.tool, header.version);
    let _ = writeln!(text, "# command: {}", header.command);
    let _ = writeln!(text, "# map_hash: {}", header.map_hash);
    let _ = writeln!(text, "# config_hash: {}", header.config_hash);
    let _ = writeln!(text, "# seed: {}", header.seed);
    let _ = writeln!(text, "{columns}");
    text
}

/// Uniformly seeded probe points with coordinates in [-radius, radius].
fn random_points(radius: f64, count: usize, seed: u64) -> Vec<PointC2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut coord = || rng.gen_range(-radius..radius);
            PointC2::from_coords([coord(), coord(), coord(), coord()])
        })
        .collect()
}

/// Manifold anchors appropriate for covering the given target set: points on
/// the stable manifolds stay bounded forward (J+ side), points on the
/// unstable manifolds backward (J- and K- side).
fn anchors_for(map: &HenonMap, target: SampleTarget, opts: &ReportOptions) -> Result<Vec<PointC2>> {
    let (_, u_cloud, mut s_cloud) = manifold_anchors(map, opts)?;
    Ok(match target {
        SampleTarget::J => {
            let mut both = u_cloud;
            both.append(&mut s_cloud);
            both
        }
        SampleTarget::JPlus => s_cloud,
        SampleTarget::JMinus | SampleTarget::KMinus => u_cloud,
    })
}

/// Options for the standalone cover/orbit subcommands: lighter manifold
/// clouds than the full report, since they only serve as probe anchors here.
fn light_options(seed: u64) -> ReportOptions {
    ReportOptions {
        cloud_refine: 0.02,
        cloud_max_points: 200_000,
        jitter_seed: seed,
        ..ReportOptions::default()
    }
}

fn pipeline_options(max_period: usize, depth: u32, seed: u64) -> ReportOptions {
    let defaults = ReportOptions::default();
    let mut root_periods: Vec<usize> = defaults
        .root_periods
        .iter()
        .copied()
        .filter(|&n| n <= max_period)
        .collect();
    if root_periods.is_empty() {
        root_periods = vec![max_period];
    }
    ReportOptions {
        max_period,
        root_periods,
        sep_n: defaults.sep_n.min(max_period),
        sample_depth: depth,
        jitter_seed: seed,
        ..defaults
    }
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

// --- subcommands ----------------------------------------------------------

fn dispatch(cli: Cli) -> Run {
    match cli.command {
        Command::Classify(args) => run_classify(args),
        Command::Green(args) => run_green(args),
        Command::Sample(args) => run_sample(args),
        Command::PeriodicOrbits(args) => run_periodic(args),
        Command::Rates(args) => run_rates(args),
        Command::PressureCurve(args) => run_curve(args),
        Command::DimensionReport(args) => run_report(args),
        Command::BoxDim(args) => run_box_dim(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Selftest(args) => run_selftest(args),
    }
}

fn run_classify(args: ClassifyArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "classify",
        "n_max": args.n_max,
        "count": args.count,
        "seed": args.common.seed,
    });
    let head = header("classify", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let radius = map.escape_radius();
    let probes = random_points(radius, args.count, args.common.seed);
    use rayon::prelude::*;
    let rows: Vec<(PointC2, crate::classify::EscapeResult, crate::classify::EscapeResult)> =
        probes
            .par_iter()
            .map(|&p| {
                (
                    p,
                    classify_forward(&map, p, args.n_max),
                    classify_backward(&map, p, args.n_max),
                )
            })
            .collect();

    let mut text = csv_doc(
        &head,
        "z_re,z_im,w_re,w_im,forward,forward_step,backward,backward_step",
    );
    let mut fwd_escaped = 0usize;
    for (p, f, b) in &rows {
        let cell = |r: &crate::classify::EscapeResult| match r.status {
            EscapeStatus::Escaped { step } => ("escaped", step.to_string()),
            EscapeStatus::Bounded => ("bounded", String::new()),
        };
        let (fs, fstep) = cell(f);
        let (bs, bstep) = cell(b);
        if f.escaped() {
            fwd_escaped += 1;
        }
        let _ = writeln!(
            text,
            "{},{},{},{},{fs},{fstep},{bs},{bstep}",
            p.z.re, p.z.im, p.w.re, p.w.im
        );
    }
    let path = stage("write-output", write_atomic(&out, "classify.csv", &text))?;
    Ok(format!(
        "classify: {} probes, {} escaped forward by step {} -> {}",
        rows.len(),
        fwd_escaped,
        args.n_max,
        path.display()
    ))
}

fn run_green(args: GreenArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "green",
        "n_max": args.n_max,
        "count": args.count,
        "tol": args.tol,
        "seed": args.common.seed,
    });
    let head = header("green", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let radius = map.escape_radius();
    let probes = random_points(radius, args.count, args.common.seed);
    use rayon::prelude::*;
    let values: Vec<Result<(crate::classify::GreenValue, crate::classify::GreenValue)>> = probes
        .par_iter()
        .map(|&p| {
            let fwd = green(&map, p, Direction::Forward, args.tol, args.n_max)?;
            let bwd = green(&map, p, Direction::Backward, args.tol, args.n_max)?;
            Ok((fwd, bwd))
        })
        .collect();

    let mut text = csv_doc(
        &head,
        "z_re,z_im,w_re,w_im,green_plus,plus_iterations,plus_converged,green_minus,minus_iterations,minus_converged",
    );
    let mut positive = 0usize;
    for (p, value) in probes.iter().zip(values) {
        let (fwd, bwd) = stage("green-evaluation", value)?;
        if fwd.value > 0.0 {
            positive += 1;
        }
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            p.z.re,
            p.z.im,
            p.w.re,
            p.w.im,
            fwd.value,
            fwd.iterations,
            fwd.converged,
            bwd.value,
            bwd.iterations,
            bwd.converged
        );
    }
    let path = stage("write-output", write_atomic(&out, "green.csv", &text))?;
    Ok(format!(
        "green: {} probes, {} with positive forward potential -> {}",
        probes.len(),
        positive,
        path.display()
    ))
}

fn run_sample(args: SampleArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "sample",
        "target": args.target.name(),
        "depth": args.depth,
        "n_max": args.n_max,
        "seed": args.common.seed,
    });
    let head = header("sample", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let opts = light_options(args.common.seed);
    let anchors = stage("manifold-anchors", anchors_for(&map, args.target, &opts))?;
    let cover = stage(
        "sampling",
        sample(
            &map,
            args.target,
            args.depth,
            args.n_max,
            &SampleOptions {
                probes: opts.probes,
                radius: None,
                anchors,
            },
        ),
    )?;

    let payload = serde_json::json!({
        "target": cover.target.name(),
        "depth": cover.depth,
        "n_max": cover.n_max,
        "radius": cover.radius,
        "resolution": cover.resolution,
        "boxes": cover.boxes.len(),
        "per_depth_counts": cover.per_depth_counts,
    });
    let doc = stage("write-output", json_doc(&head, &payload))?;
    let path = stage("write-output", write_atomic(&out, "sample.json", &doc))?;

    let mut text = csv_doc(&head, "z_re,z_im,w_re,w_im,half_width");
    for b in &cover.boxes {
        let c = b.center_point();
        let _ = writeln!(
            text,
            "{},{},{},{},{}",
            c.z.re, c.z.im, c.w.re, c.w.im, b.half_width
        );
    }
    stage("write-output", write_atomic(&out, "sample_boxes.csv", &text))?;
    Ok(format!(
        "sample: {} covered by {} boxes at resolution {:.3e} -> {}",
        cover.target.name(),
        cover.boxes.len(),
        cover.resolution,
        path.display()
    ))
}

fn run_periodic(args: PeriodicArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "periodic-orbits",
        "max_period": args.periods.max,
        "depth": args.depth,
        "seed": args.common.seed,
    });
    let head = header("periodic-orbits", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let opts = pipeline_options(args.periods.max, args.depth, args.common.seed);
    let pipe = stage("periodic-search", periodic_pipeline(&map, &opts))?;
    let counts = fix_count_rows(&pipe.searches);
    let doubtful = pipe.searches.iter().any(|s| s.hyperbolicity_doubtful());

    let payload = serde_json::json!({
        "counts": counts,
        "hyperbolicity_doubtful": doubtful,
        "bootstrap": pipe.saddle_source,
    });
    let doc = stage("write-output", json_doc(&head, &payload))?;
    let path = stage(
        "write-output",
        write_atomic(&out, "periodic_orbits.json", &doc),
    )?;

    let mut text = csv_doc(
        &head,
        "period,primitive_period,multiplicity,z_re,z_im,w_re,w_im,lambda_u_mod,lambda_s_mod,residual,saddle",
    );
    for search in &pipe.searches {
        for orbit in search.saddles.iter().chain(search.non_saddles.iter()) {
            let p = orbit.representative;
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{},{},{},{},{}",
                orbit.period,
                orbit.primitive_period,
                orbit.multiplicity,
                p.z.re,
                p.z.im,
                p.w.re,
                p.w.im,
                orbit.lambda_u.norm(),
                orbit.lambda_s.norm(),
                orbit.newton_residual,
                fmt_bool(orbit.is_saddle())
            );
        }
    }
    stage(
        "write-output",
        write_atomic(&out, "periodic_orbits.csv", &text),
    )?;
    let total: usize = counts.iter().map(|r| r.fix_count).sum();
    Ok(format!(
        "periodic-orbits: {} fixed points over periods 1..={} -> {}",
        total,
        args.periods.max,
        path.display()
    ))
}

fn run_rates(args: RatesArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "rates",
        "max_period": args.periods.max,
        "depth": args.depth,
        "n_max": args.n_max,
        "seed": args.common.seed,
    });
    let head = header("rates", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let opts = pipeline_options(args.periods.max, args.depth, args.common.seed);
    let pipe = stage("periodic-search", periodic_pipeline(&map, &opts))?;
    let periodic = stage("multiplier-rates", growth_rates_periodic(&pipe.searches))?;

    let cycles = pipe.all_cycle_points();
    let mut fwd_probes = pipe.stable_points.clone();
    fwd_probes.extend_from_slice(&cycles);
    let mut bwd_probes = pipe.unstable_points.clone();
    bwd_probes.extend_from_slice(&cycles);
    let forward = stage(
        "norm-rates",
        norm_rates(&map, &fwd_probes, Direction::Forward, args.n_max, None),
    )?;
    let backward = stage(
        "norm-rates",
        norm_rates(&map, &bwd_probes, Direction::Backward, args.n_max, None),
    )?;
    let s_plus = forward.rows.last().map(|r| r.rate).unwrap_or(f64::NAN);
    let s_minus = backward.rows.last().map(|r| r.rate).unwrap_or(f64::NAN);

    let payload = serde_json::json!({
        "periodic": periodic,
        "forward": forward,
        "backward": backward,
        "s_plus": s_plus,
        "s_minus": s_minus,
    });
    let doc = stage("write-output", json_doc(&head, &payload))?;
    let path = stage("write-output", write_atomic(&out, "rates.json", &doc))?;

    let mut text = csv_doc(&head, "series,n,value,survivors,dropped");
    for row in &periodic {
        let _ = writeln!(text, "periodic_s_min,{},{},,", row.n, row.s_min);
        let _ = writeln!(text, "periodic_s_max,{},{},,", row.n, row.s_max);
    }
    for (name, rate) in [("forward", &forward), ("backward", &backward)] {
        for row in &rate.rows {
            let _ = writeln!(
                text,
                "{name},{},{},{},{}",
                row.n, row.rate, row.survivors, row.dropped
            );
        }
    }
    stage("write-output", write_atomic(&out, "rates.csv", &text))?;
    Ok(format!(
        "rates: s+ = {s_plus:.4}, s- = {s_minus:.4} at horizon {} -> {}",
        args.n_max,
        path.display()
    ))
}

fn run_curve(args: CurveArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "pressure-curve",
        "max_period": args.periods.max,
        "depth": args.depth,
        "tgrid": args.tgrid.0,
        "seed": args.common.seed,
    });
    let head = header("pressure-curve", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let opts = pipeline_options(args.periods.max, args.depth, args.common.seed);
    let pipe = stage("periodic-search", periodic_pipeline(&map, &opts))?;

    let mut text = csv_doc(&head, "n,t,unstable,stable");
    let mut rows = 0usize;
    for search in pipe.searches.iter().filter(|s| !s.saddles.is_empty()) {
        let points = stage("pressure-evaluation", pressure_curve(search, &args.tgrid.0))?;
        for point in points {
            let _ = writeln!(
                text,
                "{},{},{},{}",
                search.period, point.t, point.unstable, point.stable
            );
            rows += 1;
        }
    }
    let path = stage(
        "write-output",
        write_atomic(&out, "pressure_curve.csv", &text),
    )?;
    Ok(format!(
        "pressure-curve: {rows} rows over {} grid points -> {}",
        args.tgrid.0.len(),
        path.display()
    ))
}

fn run_report(args: ReportArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "dimension-report",
        "max_period": args.periods.max,
        "depth": args.depth,
        "n_max": args.n_max,
        "tgrid": args.tgrid.0,
        "eps": args.eps,
        "seed": args.common.seed,
    });
    let head = header("dimension-report", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let mut opts = pipeline_options(args.periods.max, args.depth, args.common.seed);
    opts.seed_horizon = args.n_max;
    opts.sep_eps = args.eps;
    opts.curve_ts = args.tgrid.0.clone();
    let report = stage("analysis", analyze(&map, &opts))?;

    let doc = stage("write-output", json_doc(&head, &report))?;
    let path = stage(
        "write-output",
        write_atomic(&out, "dimension_report.json", &doc),
    )?;

    let mut curves = csv_doc(&head, "n,t,unstable,stable");
    for row in &report.pressure_curve {
        let _ = writeln!(curves, "{},{},{},{}", row.n, row.t, row.unstable, row.stable);
    }
    stage(
        "write-output",
        write_atomic(&out, "pressure_curves.csv", &curves),
    )?;

    let mut boxes = csv_doc(&head, "depth,scale,count");
    for &(depth, count) in &report.box_check.counts {
        let scale = report.escape_radius / f64::from(1u32 << depth);
        let _ = writeln!(boxes, "{depth},{scale},{count}");
    }
    stage("write-output", write_atomic(&out, "box_counts.csv", &boxes))?;

    let mut rates = csv_doc(&head, "series,n,value,survivors,dropped");
    for row in &report.periodic_rates {
        let _ = writeln!(rates, "periodic_s_min,{},{},,", row.n, row.s_min);
        let _ = writeln!(rates, "periodic_s_max,{},{},,", row.n, row.s_max);
    }
    for (name, rate) in [
        ("forward", &report.rate_forward),
        ("backward", &report.rate_backward),
    ] {
        for row in &rate.rows {
            let _ = writeln!(
                rates,
                "{name},{},{},{},{}",
                row.n, row.rate, row.survivors, row.dropped
            );
        }
    }
    stage("write-output", write_atomic(&out, "rate_tables.csv", &rates))?;

    Ok(format!(
        "dimension-report: dim_J = {:.4} (t_u = {:.4}, t_s = {:.4}), cantor = {} -> {}",
        report.dim_j,
        report.t_hat_u,
        report.t_hat_s,
        fmt_bool(report.cantor_small_twist),
        path.display()
    ))
}

fn run_box_dim(args: BoxDimArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "box-dim",
        "target": args.target.name(),
        "depth": args.depth,
        "n_max": args.n_max,
        "seed": args.common.seed,
    });
    let head = header("box-dim", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let opts = light_options(args.common.seed);
    let anchors = stage("manifold-anchors", anchors_for(&map, args.target, &opts))?;
    let cover = stage(
        "sampling",
        sample(
            &map,
            args.target,
            args.depth,
            args.n_max,
            &SampleOptions {
                probes: opts.probes,
                radius: None,
                anchors,
            },
        ),
    )?;
    let fit = stage("box-fit", box_dimension(&cover.per_depth_counts))?;

    let payload = serde_json::json!({
        "target": cover.target.name(),
        "depth": cover.depth,
        "n_max": cover.n_max,
        "slope": fit.slope,
        "residual": fit.residual,
        "scales": fit.scales,
        "per_depth_counts": cover.per_depth_counts,
    });
    let doc = stage("write-output", json_doc(&head, &payload))?;
    let path = stage("write-output", write_atomic(&out, "box_dim.json", &doc))?;

    let mut text = csv_doc(&head, "depth,scale,count");
    for &(depth, count) in &cover.per_depth_counts {
        let scale = cover.radius / f64::from(1u32 << depth);
        let _ = writeln!(text, "{depth},{scale},{count}");
    }
    stage("write-output", write_atomic(&out, "box_counts.csv", &text))?;
    Ok(format!(
        "box-dim: {} slope {:.4} over {} scales -> {}",
        cover.target.name(),
        fit.slope,
        fit.scales,
        path.display()
    ))
}

fn run_sweep(args: SweepArgs) -> Run {
    init_threads(args.common.threads)?;
    let map = stage("load-map", load_map(&args.common.map))?;
    let map_json = map_to_json(&map);
    let config = serde_json::json!({
        "command": "sweep",
        "moduli": args.moduli.0,
        "seed": args.common.seed,
    });
    let head = header("sweep", &map_json, &config, args.common.seed);
    let out = resolve_out(&args.common.out);
    stage("output-dir", ensure_dir(&out))?;

    let opts = ReportOptions {
        jitter_seed: args.common.seed,
        ..ReportOptions::default()
    };
    let rows = stage("sweep", sweep(&map, &args.moduli.0, &opts))?;

    let mut text = csv_doc(&head, "twist_modulus,s_minus,box_bound");
    for row in &rows {
        let _ = writeln!(text, "{},{},{}", row.twist_modulus, row.s_minus, row.box_bound);
    }
    let path = stage("write-output", write_atomic(&out, "sweep.csv", &text))?;
    let decreasing = rows.windows(2).all(|w| w[1].box_bound < w[0].box_bound);
    let first = rows.first().map(|r| r.box_bound).unwrap_or(f64::NAN);
    let last = rows.last().map(|r| r.box_bound).unwrap_or(f64::NAN);
    Ok(format!(
        "sweep: box bound {first:.4} -> {last:.4} across {} moduli (strictly decreasing: {}) -> {}",
        rows.len(),
        fmt_bool(decreasing),
        path.display()
    ))
}

#[derive(Serialize)]
struct SelftestRow {
    fixture: &'static str,
    map_hash: String,
    round_trip_max: f64,
    det_drift_max: f64,
    identity_gap_max: f64,
    pass: bool,
}

fn selftest_fixture(name: &'static str, seed: u64) -> Result<SelftestRow> {
    let map = builtin_map(name).expect("selftest fixture");
    let radius = map.escape_radius();

    let mut round_trip_max = 0.0_f64;
    let mut det_drift_max = 0.0_f64;
    let constant_det = map.jacobian_det();
    for p in random_points(radius, 1000, seed) {
        if let Ok(q) = map.eval(p) {
            if let Ok(back) = map.eval_inverse(q) {
                round_trip_max = round_trip_max.max(back.dist(&p));
            }
        }
        if let Ok(q) = map.eval_inverse(p) {
            if let Ok(back) = map.eval(q) {
                round_trip_max = round_trip_max.max(back.dist(&p));
            }
        }
        det_drift_max = det_drift_max.max((map.jacobian(p).det() - constant_det).norm());
    }

    // The stable/unstable pressure identity holds per saddle cycle, so any
    // nonempty saddle collection tests it exactly.
    let mut seeds = grid_seeds(radius, 7);
    seeds.extend(polar_seeds(radius / 2.0, 2, 24));
    let log_twist = map.twist_modulus().ln();
    let mut identity_gap_max = 0.0_f64;
    for n in 1..=3 {
        let search = find_periodic_from_seeds(&map, n, &seeds, 1e-12)?;
        if search.saddles.is_empty() {
            continue;
        }
        for t in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let p = pressure_periodic(&search, t)?;
            identity_gap_max =
                identity_gap_max.max((p.stable - p.unstable - t * log_twist).abs());
        }
    }

    Ok(SelftestRow {
        fixture: name,
        map_hash: sha_hex(map_to_json(&map).as_bytes()),
        round_trip_max,
        det_drift_max,
        identity_gap_max,
        pass: round_trip_max < 1e-12 && det_drift_max < 1e-12 && identity_gap_max < 1e-10,
    })
}

fn run_selftest(args: SelftestArgs) -> Run {
    init_threads(args.threads)?;
    let config = serde_json::json!({
        "command": "selftest",
        "seed": args.seed,
    });
    let head = header("selftest", "builtin", &config, args.seed);
    let out = resolve_out(&args.out);
    stage("output-dir", ensure_dir(&out))?;

    let mut rows = Vec::new();
    for name in ["horseshoe", "conservative", "near-1d"] {
        rows.push(stage("selftest", selftest_fixture(name, args.seed))?);
    }
    let failed = rows.iter().filter(|r| !r.pass).count();

    let payload = serde_json::json!({ "fixtures": rows, "failed": failed });
    let doc = stage("write-output", json_doc(&head, &payload))?;
    let path = stage("write-output", write_atomic(&out, "selftest.json", &doc))?;
    if failed > 0 {
        return Err(Failure {
            stage: "selftest",
            error: Error::SelftestFailed {
                failed,
                total: rows.len(),
            },
        });
    }
    Ok(format!(
        "selftest: {} fixtures, round trips / determinant constancy / pressure identity all hold -> {}",
        rows.len(),
        path.display()
    ))
}
