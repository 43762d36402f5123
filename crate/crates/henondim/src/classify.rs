//! Orbit classification against the standard filtration: a forward orbit is
//! declared escaped once it enters { |w| > R, |w| >= |z| }, which the escape
//! radius makes forward invariant with |w| at least doubling per step; the
//! backward test mirrors it in z. Also the Green functions G = lim d^{-n}
//! log+ |g^{+-n}| and probe-based box statuses used by the sampler.

use serde::Serialize;
use num_complex::Complex64;

use crate::algebra::{HenonMap, PointC2};
use crate::Result;

/// Which iteration direction an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EscapeStatus {
    /// Entered the escape sector at this step (0 = the point itself).
    Escaped { step: usize },
    /// Still inside the filtration region after n_max steps.
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeResult {
    pub status: EscapeStatus,
    /// Point at the moment of escape, or after n_max steps.
    pub last_point: PointC2,
}

impl EscapeResult {
    pub fn escaped(&self) -> bool {
        matches!(self.status, EscapeStatus::Escaped { .. })
    }
}

fn in_sector(p: &PointC2, radius: f64, dir: Direction) -> bool {
    match dir {
        Direction::Forward => p.w.norm() > radius && p.w.norm() >= p.z.norm(),
        Direction::Backward => p.z.norm() > radius && p.z.norm() >= p.w.norm(),
    }
}

fn classify_dir(map: &HenonMap, p: PointC2, n_max: usize, radius: f64, dir: Direction) -> EscapeResult {
    let mut q = p;
    for step in 0..=n_max {
        if in_sector(&q, radius, dir) {
            return EscapeResult {
                status: EscapeStatus::Escaped { step },
                last_point: q,
            };
        }
        if step == n_max {
            break;
        }
        let next = match dir {
            Direction::Forward => map.eval(q),
            Direction::Backward => map.eval_inverse(q),
        };
        match next {
            Ok(r) => q = r,
            // Overflowing the magnitude cap certainly left the filtration.
            Err(_) => {
                return EscapeResult {
                    status: EscapeStatus::Escaped { step: step + 1 },
                    last_point: q,
                }
            }
        }
    }
    EscapeResult {
        status: EscapeStatus::Bounded,
        last_point: q,
    }
}

pub fn classify_forward(map: &HenonMap, p: PointC2, n_max: usize) -> EscapeResult {
    classify_dir(map, p, n_max, map.escape_radius(), Direction::Forward)
}

pub fn classify_backward(map: &HenonMap, p: PointC2, n_max: usize) -> EscapeResult {
    classify_dir(map, p, n_max, map.escape_radius(), Direction::Backward)
}

/// Same tests against an enlarged filtration radius (any radius >= the map's
/// own is again a filtration radius).
pub fn classify_forward_with_radius(map: &HenonMap, p: PointC2, n_max: usize, radius: f64) -> EscapeResult {
    classify_dir(map, p, n_max, radius, Direction::Forward)
}

pub fn classify_backward_with_radius(map: &HenonMap, p: PointC2, n_max: usize, radius: f64) -> EscapeResult {
    classify_dir(map, p, n_max, radius, Direction::Backward)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenValue {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn ln_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// Green function of the chosen direction: the limit of d^{-n} log+ |g^{+-n}(p)|.
/// Iterates until the orbit escapes, then refines until successive partial
/// values differ by less than `tol`; once coordinates are astronomically large
/// the recursion continues on log-magnitudes, where one factor application
/// sends log|w| to deg * log|w| + log|lead| up to a vanishing correction.
/// Returns 0 with `converged = false` when still bounded at the horizon.
pub fn green(map: &HenonMap, p: PointC2, dir: Direction, tol: f64, n_max: usize) -> Result<GreenValue> {
    let d = map.degree() as f64;
    let radius = map.escape_radius();
    let coeff_scale: f64 = map
        .factors()
        .iter()
        .map(|f| {
            f.poly.coeffs().iter().map(|c| c.norm()).sum::<f64>() + f.twist.norm() + 1.0 / f.twist.norm()
        })
        .fold(1.0, f64::max);
    let switch = 1e12 * coeff_scale.max(1.0);

    let step = |q: PointC2| -> Result<PointC2> {
        match dir {
            Direction::Forward => map.eval(q),
            Direction::Backward => map.eval_inverse(q),
        }
    };

    let mut q = p;
    let mut n: usize = 0;
    // Escape phase.
    while !in_sector(&q, radius, dir) {
        if n >= n_max {
            return Ok(GreenValue {
                value: 0.0,
                iterations: n,
                converged: false,
            });
        }
        q = step(q)?;
        n += 1;
    }
    // Refinement on actual coordinates.
    let mut prev: Option<f64> = None;
    while q.sup_norm() < switch {
        let v = (1.0 / d).powi(n as i32) * ln_plus(q.norm());
        if let Some(pv) = prev {
            if (v - pv).abs() < tol {
                return Ok(GreenValue {
                    value: v,
                    iterations: n,
                    converged: true,
                });
            }
        }
        prev = Some(v);
        q = step(q)?;
        n += 1;
    }
    // Log-magnitude recursion; the dominant coordinate is w forward, z backward.
    let (mut ell_dom, mut ell_other) = match dir {
        Direction::Forward => (q.w.norm().ln(), ln_plus(q.z.norm())),
        Direction::Backward => (q.z.norm().ln(), ln_plus(q.w.norm())),
    };
    loop {
        let v = (1.0 / d).powi(n as i32) * ell_dom;
        if let Some(pv) = prev {
            if (v - pv).abs() < tol {
                return Ok(GreenValue {
                    value: v,
                    iterations: n,
                    converged: true,
                });
            }
        }
        prev = Some(v);
        match dir {
            Direction::Forward => {
                for f in map.factors().iter().rev() {
                    let deg = f.poly.degree() as f64;
                    let lead = f.poly.coeffs()[f.poly.degree()].norm();
                    let new_dom = deg * ell_dom + lead.ln();
                    ell_other = ell_dom;
                    ell_dom = new_dom;
                }
            }
            Direction::Backward => {
                for f in map.factors().iter() {
                    let deg = f.poly.degree() as f64;
                    let lead = f.poly.coeffs()[f.poly.degree()].norm();
                    let new_dom = deg * ell_dom + (lead / f.twist.norm()).ln();
                    ell_other = ell_dom;
                    ell_dom = new_dom;
                }
            }
        }
        let _ = ell_other;
        n += 1;
        if n > n_max + 10_000 {
            // Unreachable for degree >= 2: the tail is geometric.
            return Ok(GreenValue {
                value: prev.unwrap_or(0.0),
                iterations: n,
                converged: false,
            });
        }
    }
}

// --- boxes and probe statuses -----------------------------------------------

/// Axis-aligned cube in R^4 = C^2, coordinates (Re z, Im z, Re w, Im w).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxR4 {
    pub center: [f64; 4],
    pub half_width: f64,
}

impl BoxR4 {
    pub fn new(center: [f64; 4], half_width: f64) -> Self {
        Self { center, half_width }
    }

    pub fn root(radius: f64) -> Self {
        Self::new([0.0; 4], radius)
    }

    pub fn center_point(&self) -> PointC2 {
        PointC2::from_coords(self.center)
    }

    pub fn contains(&self, p: &PointC2) -> bool {
        let c = p.coords();
        (0..4).all(|i| (c[i] - self.center[i]).abs() <= self.half_width + 1e-12 * self.half_width)
    }

    pub fn corners(&self) -> Vec<PointC2> {
        let mut out = Vec::with_capacity(16);
        for mask in 0..16u32 {
            let mut c = self.center;
            for (i, ci) in c.iter_mut().enumerate() {
                let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                *ci += s * self.half_width;
            }
            out.push(PointC2::from_coords(c));
        }
        out
    }

    /// The 16 children of one bisection in every coordinate.
    pub fn children(&self) -> Vec<BoxR4> {
        let h = self.half_width / 2.0;
        let mut out = Vec::with_capacity(16);
        for mask in 0..16u32 {
            let mut c = self.center;
            for (i, ci) in c.iter_mut().enumerate() {
                let s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
                *ci += s * h;
            }
            out.push(BoxR4::new(c, h));
        }
        out
    }

    /// Whether the box meets the closed bidisk { |z| <= r, |w| <= r }.
    pub fn intersects_bidisk(&self, r: f64) -> bool {
        let near = |cx: f64, cy: f64| -> f64 {
            let dx = (cx.abs() - self.half_width).max(0.0);
            let dy = (cy.abs() - self.half_width).max(0.0);
            dx * dx + dy * dy
        };
        near(self.center[0], self.center[1]) <= r * r && near(self.center[2], self.center[3]) <= r * r
    }

    /// Deterministic probe points: the 16 corners, the center, every supplied
    /// anchor lying in the box, then a Halton sequence filling up to `probes`
    /// points. The sequence is nested in `probes`, so enlarging the budget only
    /// appends.
    pub fn probe_points(&self, probes: usize, anchors: &[PointC2]) -> Vec<PointC2> {
        let mut pts = self.corners();
        pts.push(self.center_point());
        for a in anchors {
            if self.contains(a) {
                pts.push(*a);
            }
        }
        let bases = [2u64, 3, 5, 7];
        let mut i = 1u64;
        while pts.len() < probes {
            let mut c = [0.0; 4];
            for (k, ck) in c.iter_mut().enumerate() {
                *ck = self.center[k] + (2.0 * halton(i, bases[k]) - 1.0) * self.half_width;
            }
            pts.push(PointC2::from_coords(c));
            i += 1;
        }
        pts
    }
}

/// Radical-inverse (van der Corput) value of index i in the given base.
fn halton(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoxClass {
    AllEscape,
    AllBounded,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoxStatus {
    pub forward: BoxClass,
    pub backward: BoxClass,
}

impl BoxStatus {
    pub fn meets_boundary(&self, dir: Direction) -> bool {
        match dir {
            Direction::Forward => self.forward == BoxClass::Mixed,
            Direction::Backward => self.backward == BoxClass::Mixed,
        }
    }
}

fn class_of(escaped_seen: bool, bounded_seen: bool) -> BoxClass {
    match (escaped_seen, bounded_seen) {
        (true, true) => BoxClass::Mixed,
        (true, false) => BoxClass::AllEscape,
        (false, true) => BoxClass::AllBounded,
        (false, false) => BoxClass::AllEscape, // no probes: treat as escaping
    }
}

/// Classify a box by probing: runs both escape tests on every probe point.
/// `probes` must be at least 16 (the corners are always included); anchors are
/// extra probe points and are used whenever they lie inside the box.
pub fn box_status(
    map: &HenonMap,
    bx: &BoxR4,
    n_max: usize,
    probes: usize,
    anchors: &[PointC2],
) -> BoxStatus {
    debug_assert!(probes >= 16);
    let pts = bx.probe_points(probes, anchors);
    let mut fwd = (false, false);
    let mut bwd = (false, false);
    for p in pts {
        if classify_forward(map, p, n_max).escaped() {
            fwd.0 = true;
        } else {
            fwd.1 = true;
        }
        if classify_backward(map, p, n_max).escaped() {
            bwd.0 = true;
        } else {
            bwd.1 = true;
        }
        if fwd.0 && fwd.1 && bwd.0 && bwd.1 {
            break; // both directions already Mixed; further probes cannot change that
        }
    }
    BoxStatus {
        forward: class_of(fwd.0, fwd.1),
        backward: class_of(bwd.0, bwd.1),
    }
}

/// Verdict of `green` plus the classification, bundled for CSV export.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbeVerdict {
    pub point: PointC2,
    pub forward: EscapeResult,
    pub backward: EscapeResult,
    pub green_plus: GreenValue,
    pub green_minus: GreenValue,
}

/// Classify a probe in both directions and evaluate both Green functions.
pub fn probe_verdict(map: &HenonMap, p: PointC2, n_max: usize, tol: f64) -> Result<ProbeVerdict> {
    Ok(ProbeVerdict {
        point: p,
        forward: classify_forward(map, p, n_max),
        backward: classify_backward(map, p, n_max),
        green_plus: green(map, p, Direction::Forward, tol, n_max)?,
        green_minus: green(map, p, Direction::Backward, tol, n_max)?,
    })
}

pub fn complex_from_polar(r: f64, theta: f64) -> Complex64 {
    Complex64::from_polar(r, theta)
}
