//! Integration paths in the complex plane and adaptive quadrature along them.
//!
//! A [`ComplexPath`] is an ordered list of line segments, rays and circular
//! arcs. Integration uses a global adaptive Gauss–Kronrod (7/15) scheme: all
//! panels of all segments share one priority queue keyed by their error
//! estimate, so effort goes where the integrand is hardest. Rays are cut into
//! panels of doubling length until the integrand has fallen below
//! `ray_truncation_drop` times its peak, and the last panel's absolute
//! integral is carried as the truncation tail bound.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

type C64 = Complex64;

/// How the integrand family assigned to a ray is known to decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayCertificate {
    /// At least like e^{-c|z|} along the ray.
    Exponential,
    /// Like e^{-c|z|²}, e.g. the e^{-γt²/2} factor of the critical kernel.
    Gaussian,
    /// Like e^{-c|z|³}, the Airy-type exponent.
    Cubic,
    /// Faster than any exponential, e.g. 1/Γ(s) on a vertical line.
    SuperExponential,
}

/// One smooth piece of a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    /// Straight segment from `start` to `end`.
    Line { start: C64, end: C64 },
    /// Half-line `origin + u·direction`, u ≥ 0, with unit `direction`.
    /// When `inbound` the ray is traversed from infinity towards `origin`.
    /// `scale` is the length of the first quadrature panel.
    Ray { origin: C64, direction: C64, inbound: bool, scale: f64, decay: DecayCertificate },
    /// Arc `center + radius·e^{iθ}` for θ from `theta_start` to `theta_end`.
    Arc { center: C64, radius: f64, theta_start: f64, theta_end: f64 },
}

impl Segment {
    pub fn line(start: C64, end: C64) -> Self {
        Segment::Line { start, end }
    }

    /// Outbound ray from `origin` in direction `dir` (normalised here).
    pub fn ray(origin: C64, dir: C64) -> Self {
        Segment::Ray {
            origin,
            direction: dir / dir.norm(),
            inbound: false,
            scale: 1.0,
            decay: DecayCertificate::Exponential,
        }
    }

    pub fn arc(center: C64, radius: f64, theta_start: f64, theta_end: f64) -> Self {
        Segment::Arc { center, radius, theta_start, theta_end }
    }

    /// Replaces the decay certificate of a ray; other kinds are unchanged.
    pub fn with_decay(self, d: DecayCertificate) -> Self {
        match self {
            Segment::Ray { origin, direction, inbound, scale, .. } => {
                Segment::Ray { origin, direction, inbound, scale, decay: d }
            }
            other => other,
        }
    }

    /// Replaces the first-panel length of a ray; other kinds are unchanged.
    pub fn with_scale(self, s: f64) -> Self {
        match self {
            Segment::Ray { origin, direction, inbound, decay, .. } => {
                Segment::Ray { origin, direction, inbound, scale: s, decay }
            }
            other => other,
        }
    }

    /// The same point set traversed in the opposite direction.
    pub fn reversed(self) -> Self {
        match self {
            Segment::Line { start, end } => Segment::Line { start: end, end: start },
            Segment::Ray { origin, direction, inbound, scale, decay } => {
                Segment::Ray { origin, direction, inbound: !inbound, scale, decay }
            }
            Segment::Arc { center, radius, theta_start, theta_end } => {
                Segment::Arc { center, radius, theta_start: theta_end, theta_end: theta_start }
            }
        }
    }

    /// Starting point, `None` for an inbound ray (starts at infinity).
    pub fn start(&self) -> Option<C64> {
        match *self {
            Segment::Line { start, .. } => Some(start),
            Segment::Ray { origin, inbound, .. } => (!inbound).then_some(origin),
            Segment::Arc { center, radius, theta_start, .. } => {
                Some(center + C64::from_polar(radius, theta_start))
            }
        }
    }

    /// End point, `None` for an outbound ray (ends at infinity).
    pub fn end(&self) -> Option<C64> {
        match *self {
            Segment::Line { end, .. } => Some(end),
            Segment::Ray { origin, inbound, .. } => inbound.then_some(origin),
            Segment::Arc { center, radius, theta_end, .. } => {
                Some(center + C64::from_polar(radius, theta_end))
            }
        }
    }

    /// Point and derivative dz/du at parameter `u` in the segment's own
    /// parametrisation (unit interval for lines, angle for arcs, arclength
    /// from the origin for rays; inbound rays carry a negative sign).
    fn eval(&self, u: f64) -> (C64, C64) {
        match *self {
            Segment::Line { start, end } => (start + (end - start) * u, end - start),
            Segment::Ray { origin, direction, inbound, .. } => {
                let sign = if inbound { -1.0 } else { 1.0 };
                (origin + direction * u, direction * sign)
            }
            Segment::Arc { center, radius, .. } => {
                let e = C64::from_polar(radius, u);
                (center + e, C64::new(0.0, 1.0) * e)
            }
        }
    }

    /// Polyline approximation, rays truncated at length `ray_len`.
    fn polyline(&self, ray_len: f64) -> Vec<C64> {
        match *self {
            Segment::Line { start, end } => vec![start, end],
            Segment::Ray { origin, direction, .. } => {
                (0..=64).map(|k| origin + direction * (ray_len * (k as f64 / 64.0).powi(3))).collect()
            }
            Segment::Arc { center, radius, theta_start, theta_end } => {
                let n = 512;
                (0..=n)
                    .map(|k| {
                        let th = theta_start + (theta_end - theta_start) * k as f64 / n as f64;
                        center + C64::from_polar(radius, th)
                    })
                    .collect()
            }
        }
    }
}

/// A piecewise-smooth oriented integration contour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexPath {
    pub segments: Vec<Segment>,
    /// +1 to integrate along the segments as listed, −1 for the reverse.
    pub orientation: i8,
}

impl ComplexPath {
    pub fn new(segments: Vec<Segment>) -> Self {
        ComplexPath { segments, orientation: 1 }
    }

    /// The upward vertical line Re z = c.
    pub fn vertical_line(c: f64) -> Self {
        let p = C64::new(c, 0.0);
        let up = C64::new(0.0, 1.0);
        ComplexPath::new(vec![
            Segment::ray(p, -up).with_decay(DecayCertificate::SuperExponential).reversed(),
            Segment::ray(p, up).with_decay(DecayCertificate::SuperExponential),
        ])
    }

    /// The closed polygon through `vertices` (last joined back to first).
    pub fn polygon(vertices: &[C64]) -> Self {
        let n = vertices.len();
        ComplexPath::new((0..n).map(|i| Segment::line(vertices[i], vertices[(i + 1) % n])).collect())
    }

    /// The same path traversed backwards.
    pub fn reversed(&self) -> Self {
        ComplexPath { segments: self.segments.clone(), orientation: -self.orientation }
    }

    /// Concatenation of two paths, both taken with their own orientation.
    pub fn join(&self, other: &ComplexPath) -> Self {
        let mut segs = self.oriented_segments();
        segs.extend(other.oriented_segments());
        ComplexPath::new(segs)
    }

    /// Segments listed in traversal order with orientation folded in.
    pub fn oriented_segments(&self) -> Vec<Segment> {
        if self.orientation >= 0 {
            self.segments.clone()
        } else {
            self.segments.iter().rev().map(|s| s.reversed()).collect()
        }
    }

    /// True when the last end point coincides with the first start point.
    pub fn is_closed(&self) -> bool {
        let segs = self.oriented_segments();
        match (segs.first().and_then(|s| s.start()), segs.last().and_then(|s| s.end())) {
            (Some(a), Some(b)) => (a - b).norm() <= 1e-12 * (1.0 + a.norm()),
            _ => false,
        }
    }

    /// True when consecutive segments share their end points.
    pub fn is_connected(&self) -> bool {
        let segs = self.oriented_segments();
        segs.windows(2).all(|w| match (w[0].end(), w[1].start()) {
            (Some(a), Some(b)) => (a - b).norm() <= 1e-12 * (1.0 + a.norm()),
            _ => false,
        })
    }

    /// Polyline through the path; rays are cut at length `ray_len`.
    pub fn sample_points(&self, ray_len: f64) -> Vec<C64> {
        let mut pts = Vec::new();
        for s in self.oriented_segments() {
            let mut p = s.polyline(ray_len);
            if let Segment::Ray { inbound: true, .. } = s {
                p.reverse();
            }
            pts.extend(p);
        }
        pts
    }

    /// Winding number about `z`. Open paths (with rays) are closed by the
    /// straight chord between their far ends.
    pub fn winding_number(&self, z: C64) -> i64 {
        let mut pts = self.sample_points(1e7);
        if let Some(&first) = pts.first() {
            pts.push(first);
        }
        let mut total = 0.0;
        for w in pts.windows(2) {
            let a = w[0] - z;
            let b = w[1] - z;
            total += (b / a).arg();
        }
        (total / (2.0 * PI)).round() as i64
    }

    /// Smallest distance between the polyline approximations of two paths.
    pub fn min_separation(&self, other: &ComplexPath) -> f64 {
        let a = self.polylines(1e3);
        let b = other.polylines(1e3);
        let mut best = f64::INFINITY;
        for pa in &a {
            for wa in pa.windows(2) {
                for pb in &b {
                    for wb in pb.windows(2) {
                        best = best.min(segment_distance(wa[0], wa[1], wb[0], wb[1]));
                    }
                }
            }
        }
        best
    }

    fn polylines(&self, ray_len: f64) -> Vec<Vec<C64>> {
        self.segments.iter().map(|s| s.polyline(ray_len)).collect()
    }

    /// Splits every segment at the listed points that lie on it.
    pub fn split_at(&self, points: &[C64]) -> ComplexPath {
        let mut out = Vec::new();
        for seg in self.oriented_segments() {
            let mut pieces = vec![seg];
            for &p in points {
                let mut next = Vec::new();
                for s in pieces {
                    next.extend(split_segment(s, p));
                }
                pieces = next;
            }
            out.extend(pieces);
        }
        ComplexPath::new(out)
    }

    /// JSON description of the segment list.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("paths serialise")
    }
}

fn split_segment(seg: Segment, p: C64) -> Vec<Segment> {
    const TOL: f64 = 1e-12;
    match seg {
        Segment::Line { start, end } => {
            let d = end - start;
            let u = ((p - start) * d.conj()).re / d.norm_sqr();
            let on = (start + d * u - p).norm() <= TOL * (1.0 + p.norm());
            if on && u > TOL && u < 1.0 - TOL {
                vec![Segment::line(start, p), Segment::line(p, end)]
            } else {
                vec![seg]
            }
        }
        _ => vec![seg],
    }
}

fn segment_distance(a0: C64, a1: C64, b0: C64, b1: C64) -> f64 {
    if segments_intersect(a0, a1, b0, b1) {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}

fn point_segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let u = (((p - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (a + d * u - p).norm()
}

fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn segments_intersect(a0: C64, a1: C64, b0: C64, b1: C64) -> bool {
    let d1 = cross(a1 - a0, b0 - a0);
    let d2 = cross(a1 - a0, b1 - a0);
    let d3 = cross(b1 - b0, a0 - b0);
    let d4 = cross(b1 - b0, a1 - b0);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Tolerances and limits for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    /// Stop extending a ray once the integrand falls below this fraction of its peak.
    pub ray_truncation_drop: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { rel_tol: 1e-10, abs_tol: 1e-14, max_subdivisions: 2000, ray_truncation_drop: 1e-16 }
    }
}

impl QuadSpec {
    /// Validates positivity of tolerances and `max_subdivisions ≥ 1`.
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize, ray_truncation_drop: f64) -> Result<Self> {
        if !(rel_tol > 0.0) || !(abs_tol > 0.0) || !(ray_truncation_drop > 0.0) {
            return Err(Error::invalid("QuadSpec", "tolerances must be positive"));
        }
        if max_subdivisions == 0 {
            return Err(Error::invalid("QuadSpec", "max_subdivisions must be at least 1"));
        }
        Ok(QuadSpec { rel_tol, abs_tol, max_subdivisions, ray_truncation_drop })
    }
}

/// Value of a path integral ∫ f(z) dz with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: C64,
    /// Estimated absolute error, including ray truncation tails.
    pub err: f64,
    /// Sum of the ray truncation tail bounds (already included in `err`).
    pub tail: f64,
    pub converged: bool,
    pub evaluations: usize,
}

impl QuadResult {
    /// Converts a non-converged result into [`Error::NoConvergence`].
    pub fn into_result(self) -> Result<QuadResult> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence { value_re: self.value.re, value_im: self.value.im, err: self.err })
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    seg: usize,
    a: f64,
    b: f64,
    value: C64,
    /// Reducible quadrature error of this panel.
    err: f64,
    /// Error inherited from inner integrals (not reduced by bisection).
    inner: f64,
    /// ∫|f||dz| over the panel.
    abs: f64,
    /// Largest |f·dz/du| seen at the nodes.
    peak: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Evaluation strategy for the 15 Kronrod nodes of a panel.
trait NodeEval: Sync {
    fn eval(&self, z: &[C64]) -> Vec<(C64, f64)>;
}

struct Serial<F>(F);
impl<F: Fn(C64) -> (C64, f64) + Sync> NodeEval for Serial<F> {
    fn eval(&self, z: &[C64]) -> Vec<(C64, f64)> {
        z.iter().map(|&w| (self.0)(w)).collect()
    }
}

struct Parallel<F>(F);
impl<F: Fn(C64) -> (C64, f64) + Sync> NodeEval for Parallel<F> {
    fn eval(&self, z: &[C64]) -> Vec<(C64, f64)> {
        z.par_iter().map(|&w| (self.0)(w)).collect()
    }
}

fn gk15(f: &dyn NodeEval, seg: &Segment, idx: usize, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut us = [0.0; 15];
    us[0] = c;
    for j in 0..7 {
        us[1 + 2 * j] = c - h * XGK[j];
        us[2 + 2 * j] = c + h * XGK[j];
    }
    let mut zs = [C64::new(0.0, 0.0); 15];
    let mut dz = [C64::new(0.0, 0.0); 15];
    for k in 0..15 {
        let (z, d) = seg.eval(us[k]);
        zs[k] = z;
        dz[k] = d;
    }
    let vals = f.eval(&zs);
    let g = |k: usize| vals[k].0 * dz[k];
    let fc = g(0);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut resabs = fc.norm() * WGK[7];
    let mut inner = vals[0].1 * dz[0].norm() * WGK[7];
    let mut peak = fc.norm();
    for j in 0..7 {
        let f1 = g(1 + 2 * j);
        let f2 = g(2 + 2 * j);
        resk += (f1 + f2) * WGK[j];
        resabs += (f1.norm() + f2.norm()) * WGK[j];
        inner += (vals[1 + 2 * j].1 * dz[1 + 2 * j].norm() + vals[2 + 2 * j].1 * dz[2 + 2 * j].norm()) * WGK[j];
        peak = peak.max(f1.norm()).max(f2.norm());
        if j % 2 == 1 {
            resg += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = resk * 0.5;
    let mut resasc = WGK[7] * (fc - mean).norm();
    for j in 0..7 {
        resasc += WGK[j] * ((g(1 + 2 * j) - mean).norm() + (g(2 + 2 * j) - mean).norm());
    }
    let hh = h.abs();
    let value = resk * h;
    let resabs = resabs * hh;
    let resasc = resasc * hh;
    let mut err = ((resk - resg) * h).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    if !value.re.is_finite() || !value.im.is_finite() {
        err = f64::INFINITY;
    }
    Panel { seg: idx, a, b, value, err, inner: inner * hh, abs: resabs, peak }
}

/// Integrates a function that also reports an absolute error for each of
/// its values (used when the integrand is itself an integral).
pub fn integrate_with_error<F>(f: F, path: &ComplexPath, spec: &QuadSpec) -> QuadResult
where
    F: Fn(C64) -> (C64, f64) + Sync,
{
    integrate_core(&Serial(f), path, spec)
}

/// Path integral ∫_path f(z) dz (no 1/(2πi) factor).
pub fn integrate<F>(f: F, path: &ComplexPath, spec: &QuadSpec) -> QuadResult
where
    F: Fn(C64) -> C64 + Sync,
{
    integrate_core(&Serial(|z| (f(z), 0.0)), path, spec)
}

/// As [`integrate_with_error`], evaluating the Kronrod nodes of each panel in parallel.
pub fn integrate_with_error_par<F>(f: F, path: &ComplexPath, spec: &QuadSpec) -> QuadResult
where
    F: Fn(C64) -> (C64, f64) + Sync,
{
    integrate_core(&Parallel(f), path, spec)
}

fn integrate_core(f: &dyn NodeEval, path: &ComplexPath, spec: &QuadSpec) -> QuadResult {
    let segs = path.oriented_segments();
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    let mut tail = 0.0;
    let mut evaluations = 0usize;
    let mut converged = true;

    for (i, seg) in segs.iter().enumerate() {
        match *seg {
            Segment::Line { .. } => {
                heap.push(gk15(f, seg, i, 0.0, 1.0));
                evaluations += 15;
            }
            Segment::Arc { theta_start, theta_end, .. } => {
                let n = (((theta_end - theta_start).abs() / (PI / 2.0)).ceil() as usize).max(1);
                for k in 0..n {
                    let a = theta_start + (theta_end - theta_start) * k as f64 / n as f64;
                    let b = theta_start + (theta_end - theta_start) * (k + 1) as f64 / n as f64;
                    heap.push(gk15(f, seg, i, a, b));
                    evaluations += 15;
                }
            }
            Segment::Ray { scale, .. } => {
                let mut u0 = 0.0;
                let mut len = scale;
                let mut peak: f64 = 0.0;
                let mut done = false;
                for k in 0..80 {
                    let p = gk15(f, seg, i, u0, u0 + len);
                    evaluations += 15;
                    peak = peak.max(p.peak);
                    let small = p.peak <= spec.ray_truncation_drop * peak || p.peak == 0.0;
                    heap.push(p);
                    u0 += len;
                    len *= 2.0;
                    if k >= 1 && small {
                        tail += p.abs;
                        done = true;
                        break;
                    }
                }
                if !done {
                    converged = false;
                    tail = f64::INFINITY;
                }
            }
        }
    }

    let sum = |heap: &BinaryHeap<Panel>, frozen: &[Panel]| {
        let mut v = C64::new(0.0, 0.0);
        let mut e = 0.0;
        let mut inner = 0.0;
        let mut abs = 0.0;
        for p in heap.iter().chain(frozen.iter()) {
            v += p.value;
            e += p.err;
            inner += p.inner;
            abs += p.abs;
        }
        (v, e, inner, abs)
    };

    let (mut value, mut err, _, mut abs_total) = sum(&heap, &frozen);
    let mut subdivisions = 0usize;
    // A ray that never decayed cannot be rescued by bisection.
    let budget = if tail.is_finite() { spec.max_subdivisions } else { 0 };
    loop {
        // Cancellation below the rounding level of ∫|f| cannot be resolved by bisection.
        let roundoff = 200.0 * f64::EPSILON * abs_total;
        let tol = spec.abs_tol.max(spec.rel_tol * value.norm()).max(roundoff);
        if err + tail <= tol {
            break;
        }
        if subdivisions >= budget {
            converged = false;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        if worst.err.is_nan() {
            converged = false;
            frozen.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        if (worst.b - worst.a).abs() <= 1e-13 * (1.0 + worst.a.abs().max(worst.b.abs())) || mid == worst.a || mid == worst.b {
            frozen.push(worst);
            if heap.is_empty() {
                converged = false;
                break;
            }
            continue;
        }
        let seg = &segs[worst.seg];
        let l = gk15(f, seg, worst.seg, worst.a, mid);
        let r = gk15(f, seg, worst.seg, mid, worst.b);
        evaluations += 30;
        subdivisions += 1;
        value += l.value + r.value - worst.value;
        err += l.err + r.err - worst.err;
        abs_total += l.abs + r.abs - worst.abs;
        heap.push(l);
        heap.push(r);
        if subdivisions % 64 == 0 || !err.is_finite() {
            let s = sum(&heap, &frozen);
            value = s.0;
            err = s.1;
            abs_total = s.3;
        }
    }
    let (value, err, inner, _) = sum(&heap, &frozen);
    QuadResult { value, err: err + inner + tail, tail, converged, evaluations }
}

/// Iterated double integral ∫_{path_t} dt ∫_{path_s} ds F(s, t), inner in s.
///
/// The paths must stay at least 1e-8 apart so that singular factors such as
/// 1/(s − t) remain bounded.
pub fn integrate_double<F>(f: F, path_s: &ComplexPath, path_t: &ComplexPath, spec: &QuadSpec) -> Result<QuadResult>
where
    F: Fn(C64, C64) -> C64 + Sync,
{
    let sep = path_s.min_separation(path_t);
    if sep < 1e-8 {
        return Err(Error::PathCollision { separation: sep });
    }
    Ok(integrate_double_unchecked(f, path_s, path_t, spec, spec))
}

/// Iterated double integral without the separation check. Callers that let
/// the paths cross split `path_t` at the crossing points beforehand.
pub fn integrate_double_unchecked<F>(
    f: F,
    path_s: &ComplexPath,
    path_t: &ComplexPath,
    outer: &QuadSpec,
    inner: &QuadSpec,
) -> QuadResult
where
    F: Fn(C64, C64) -> C64 + Sync,
{
    let mut ok = true;
    let flag = std::sync::atomic::AtomicBool::new(true);
    let res = integrate_with_error_par(
        |t| {
            let r = integrate(|s| f(s, t), path_s, inner);
            if !r.converged {
                flag.store(false, std::sync::atomic::Ordering::Relaxed);
            }
            (r.value, r.err)
        },
        path_t,
        outer,
    );
    ok &= flag.load(std::sync::atomic::Ordering::Relaxed);
    QuadResult { converged: res.converged && ok, ..res }
}

/// Positively oriented rectangle enclosing 0, −1, …, −N+1 with clearance `pad`.
pub fn sigma_encircling(n: usize, pad: f64) -> Result<ComplexPath> {
    if n == 0 {
        return Err(Error::invalid("N", "must be at least 1"));
    }
    if !(pad > 0.0 && pad < 0.5) {
        return Err(Error::invalid("pad", format!("must lie in (0, 1/2), got {pad}")));
    }
    let left = -(n as f64) + 1.0 - pad;
    Ok(ComplexPath::polygon(&[
        C64::new(pad, -pad),
        C64::new(pad, pad),
        C64::new(left, pad),
        C64::new(left, -pad),
    ]))
}

/// The closed wedge-and-box contour Σ_−(a): vertex at `a`, horizontal sides
/// at Im = ±1/4, closing wall at Re = −N + 1/2. Encloses the integers in
/// (−N + 1/2, a).
pub fn sigma_minus(a: f64, n: usize) -> Result<ComplexPath> {
    let nf = n as f64;
    if n == 0 || !(a > -nf + 1.0 && a < 1.0) {
        return Err(Error::invalid("a", format!("must lie in (-N+1, 1), got {a} with N={n}")));
    }
    let q = 0.25;
    let wall = -nf + 0.5;
    Ok(ComplexPath::new(vec![
        Segment::line(C64::new(a, 0.0), C64::new(a - 0.5, q)),
        Segment::line(C64::new(a - 0.5, q), C64::new(wall, q)),
        Segment::line(C64::new(wall, q), C64::new(wall, -q)),
        Segment::line(C64::new(wall, -q), C64::new(a - 0.5, -q)),
        Segment::line(C64::new(a - 0.5, -q), C64::new(a, 0.0)),
    ]))
}

/// The closed contour Σ_+(b): vertex at `b`, horizontal sides at Im = ±1/4,
/// closing wall at Re = 1. Encloses the integers in (b, 1).
pub fn sigma_plus(b: f64, n: usize) -> Result<ComplexPath> {
    let nf = n as f64;
    if n == 0 || !(b > -nf + 1.0 && b < 0.5) {
        return Err(Error::invalid("b", format!("must lie in (-N+1, 1/2), got {b} with N={n}")));
    }
    let q = 0.25;
    Ok(ComplexPath::new(vec![
        Segment::line(C64::new(b, 0.0), C64::new(b + 0.5, -q)),
        Segment::line(C64::new(b + 0.5, -q), C64::new(1.0, -q)),
        Segment::line(C64::new(1.0, -q), C64::new(1.0, q)),
        Segment::line(C64::new(1.0, q), C64::new(b + 0.5, q)),
        Segment::line(C64::new(b + 0.5, q), C64::new(b, 0.0)),
    ]))
}

/// Hairpin from −∞ − iε around the non-positive integers to −∞ + iε,
/// crossing the real axis at `cross` ∈ (0, 1).
pub fn hairpin(cross: f64, eps: f64) -> ComplexPath {
    let lo = C64::new(cross - eps, -eps);
    let hi = C64::new(cross - eps, eps);
    let left = C64::new(-1.0, 0.0);
    ComplexPath::new(vec![
        Segment::ray(lo, left).with_decay(DecayCertificate::Gaussian).reversed(),
        Segment::line(lo, C64::new(cross, 0.0)),
        Segment::line(C64::new(cross, 0.0), hi),
        Segment::ray(hi, left).with_decay(DecayCertificate::Gaussian),
    ])
}

/// Σ_{−∞}: hairpin at heights ±iε crossing the real axis at 1/2.
pub fn sigma_minus_infty(eps: f64) -> Result<ComplexPath> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::invalid("eps", format!("must lie in (0, 1/2), got {eps}")));
    }
    Ok(hairpin(0.5, eps))
}

/// The Airy wedges (Σ^R_>, 𝒞^R_<), both upward oriented. `r = None` gives
/// the untruncated contours.
pub fn airy_wedges(r: Option<f64>) -> Result<(ComplexPath, ComplexPath)> {
    if let Some(r) = r {
        if !(r > 0.0) {
            return Err(Error::invalid("R", "must be positive"));
        }
    }
    let build = |vertex: C64, lower: f64, upper: f64| -> ComplexPath {
        let dl = C64::from_polar(1.0, lower);
        let du = C64::from_polar(1.0, upper);
        match r {
            None => ComplexPath::new(vec![
                Segment::ray(vertex, dl).with_decay(DecayCertificate::Cubic).reversed(),
                Segment::ray(vertex, du).with_decay(DecayCertificate::Cubic),
            ]),
            Some(r) => ComplexPath::new(vec![
                Segment::line(vertex + dl * r, vertex),
                Segment::line(vertex, vertex + du * r),
            ]),
        }
    };
    let sigma = build(C64::new(-1.0, 0.0), -2.0 * PI / 3.0, 2.0 * PI / 3.0);
    let cee = build(C64::new(1.0, 0.0), -PI / 3.0, PI / 3.0);
    Ok((sigma, cee))
}

/// q_M(φ) = (M+1)(sin φ / sin((1 − 1/(M+1))φ) · e^{iφ/(M+1)} − 1).
pub fn q_m(phi: f64, m: usize) -> C64 {
    let mp = m as f64 + 1.0;
    let ratio = if phi.abs() < 1e-8 {
        mp / m as f64
    } else {
        phi.sin() / ((1.0 - 1.0 / mp) * phi).sin()
    };
    (C64::from_polar(ratio, phi / mp) - 1.0) * mp
}

/// h_M(φ) = Re q_M(φ).
pub fn h_m(phi: f64, m: usize) -> f64 {
    q_m(phi, m).re
}

/// q_∞(θ) = (θ / sin θ) e^{iθ}.
pub fn q_infty(theta: f64) -> C64 {
    let r = if theta.abs() < 1e-8 { 1.0 } else { theta / theta.sin() };
    C64::from_polar(r, theta)
}

/// Steepest-descent geometry for the strongly correlated regime, in the
/// rescaled variable τ = (M+1)t/N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case3Paths {
    /// Closed curve {q_M(φ)} ∪ {conj q_M(φ)}, φ ∈ [0, π], positively oriented.
    pub sigma: ComplexPath,
    /// Upward vertical line 𝒞_θ through h_M(θ).
    pub s_line: ComplexPath,
    /// Points where `s_line` meets `sigma`: q_M(θ) and its conjugate.
    pub crossing: (C64, C64),
}

/// Polyline vertices of q_M on [0, φ_end], always including `extra`.
fn q_m_vertices(m: usize, phi_end: f64, extra: f64, count: usize) -> Vec<C64> {
    let mut phis: Vec<f64> = (0..=count).map(|k| phi_end * k as f64 / count as f64).collect();
    if extra > 0.0 && extra < phi_end {
        phis.push(extra);
    }
    phis.sort_by(|a, b| a.total_cmp(b));
    phis.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    phis.into_iter().map(|p| q_m(p, m)).collect()
}

/// The closed polyline through q_M(φ) for φ ∈ [0, φ_end] and its mirror
/// image, closed by a vertical wall at Re = h_M(φ_end). Scaled by `scale`.
pub(crate) fn q_m_closed_path(m: usize, phi_end: f64, theta: f64, scale: f64, count: usize) -> ComplexPath {
    let upper = q_m_vertices(m, phi_end, theta, count);
    let mut pts: Vec<C64> = upper.iter().map(|z| z * scale).collect();
    let lower: Vec<C64> = upper.iter().rev().map(|z| z.conj() * scale).collect();
    // upper runs from q(0) on the real axis to q(φ_end); walk it, drop down the wall,
    // then come back along the conjugate branch to q(0).
    let mut segs = Vec::new();
    for w in pts.windows(2) {
        segs.push(Segment::line(w[0], w[1]));
    }
    let top = *pts.last().unwrap();
    let bottom = lower[0];
    if (top - bottom).norm() > 0.0 {
        segs.push(Segment::line(top, bottom));
    }
    for w in lower.windows(2) {
        segs.push(Segment::line(w[0], w[1]));
    }
    pts.clear();
    ComplexPath::new(segs)
}

/// Solves h_M(φ) = target for φ ∈ [0, π] by bisection (h_M is decreasing).
pub fn h_m_inverse(target: f64, m: usize) -> f64 {
    let (mut lo, mut hi) = (0.0f64, PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = if mid >= PI { -(m as f64 + 1.0) } else { h_m(mid, m) };
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The q_M steepest-descent curve and the line 𝒞_θ.
pub fn steepest_path_case3(theta: f64, m: usize) -> Result<Case3Paths> {
    if !(0.0..PI).contains(&theta) {
        return Err(Error::invalid("theta", format!("must lie in [0, pi), got {theta}")));
    }
    if m == 0 {
        return Err(Error::invalid("M", "must be at least 1"));
    }
    let sigma = q_m_closed_path(m, PI, theta, 1.0, 400);
    let s_line = ComplexPath::vertical_line(h_m(theta, m));
    let q = q_m(theta, m);
    Ok(Case3Paths { sigma, s_line, crossing: (q, q.conj()) })
}

/// Gauss–Legendre nodes and weights on [−1, 1], nodes in increasing order.
///
/// Roots of P_n are found by Newton iteration from the Chebyshev-like
/// initial guesses cos(π(i − 1/4)/(n + 1/2)).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }
    fn two_pi_i() -> C64 {
        c(0.0, 2.0 * PI)
    }
    fn tight() -> QuadSpec {
        QuadSpec { rel_tol: 1e-13, abs_tol: 1e-15, max_subdivisions: 4000, ray_truncation_drop: 1e-18 }
    }

    #[test]
    fn residue_of_reciprocal() {
        let circle = ComplexPath::new(vec![Segment::arc(c(0.3, -0.2), 1.5, 0.0, 2.0 * PI)]);
        let r = integrate(|t| t.inv(), &circle, &tight());
        assert!((r.value / two_pi_i() - 1.0).norm() < 1e-13);
        let r = integrate(|t| t, &sigma_encircling(3, 0.25).unwrap(), &tight());
        assert!(r.value.norm() < 1e-13);
    }

    #[test]
    fn gaussian_on_imaginary_axis() {
        let r = integrate(|s| (s * s / 2.0).exp(), &ComplexPath::vertical_line(0.0), &tight());
        let v = r.value / c(0.0, (2.0 * PI).sqrt());
        assert!((v - 1.0).norm() < 1e-12, "{v}");
        assert!(r.converged);
    }

    #[test]
    fn encircling_geometry() {
        let p = sigma_encircling(1, 0.25).unwrap();
        assert!(p.is_closed() && p.is_connected());
        assert_eq!(p.winding_number(c(0.0, 0.0)), 1);
        let p4 = sigma_encircling(4, 0.2).unwrap();
        assert_eq!(p4.winding_number(c(-3.0, 0.0)), 1);
        assert_eq!(p4.winding_number(c(-4.0, 0.0)), 0);
        assert!(sigma_encircling(2, 0.5).is_err());
        let r = integrate(|t| crate::specfun::log_gamma_unchecked(t).exp(), &p, &tight());
        assert!((r.value / two_pi_i() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn sigma_boxes() {
        let p = sigma_minus(0.5, 3).unwrap();
        assert!(p.is_closed() && p.is_connected());
        for k in 0..3 {
            assert_eq!(p.winding_number(c(-(k as f64), 0.0)), 1);
        }
        assert_eq!(p.winding_number(c(-3.0, 0.0)), 0);
        assert_eq!(p.winding_number(c(1.0, 0.0)), 0);
        let q = sigma_plus(-1.5, 4).unwrap();
        assert!(q.is_closed());
        assert_eq!(q.winding_number(c(0.0, 0.0)), 1);
        assert_eq!(q.winding_number(c(-1.0, 0.0)), 1);
        assert_eq!(q.winding_number(c(-2.0, 0.0)), 0);
        assert!(sigma_minus(1.0, 3).is_err());
        assert!(sigma_plus(0.5, 3).is_err());
    }

    #[test]
    fn hairpin_residue_series() {
        let p = sigma_minus_infty(0.25).unwrap();
        assert_eq!(p.winding_number(c(0.0, 0.0)), 1);
        assert_eq!(p.winding_number(c(-7.0, 0.0)), 1);
        assert_eq!(p.winding_number(c(1.0, 0.0)), 0);
        let g = |t: C64| crate::specfun::log_gamma_unchecked(t).exp();
        let r = integrate(|t| g(t) * (-t * t / 2.0).exp(), &p, &tight());
        let mut oracle = 0.0;
        let mut fact = 1.0;
        for n in 0..40 {
            if n > 0 {
                fact *= n as f64;
            }
            oracle += (-1f64).powi(n) * (-(n * n) as f64 / 2.0).exp() / fact;
        }
        assert!((r.value / two_pi_i() - oracle).norm() < 1e-10);
    }

    #[test]
    fn airy_wedge_integral() {
        let (sig, cee) = airy_wedges(None).unwrap();
        assert!(sig.min_separation(&cee) > 1.0);
        let r = integrate(|s| (s * s * s / 3.0).exp(), &cee, &tight());
        assert!((r.value / two_pi_i() - 0.355_028_053_887_817_2).norm() < 1e-12);
    }

    #[test]
    fn q_m_properties() {
        assert!((q_m(0.0, 5) - c(6.0 / 5.0, 0.0)).norm() < 1e-12);
        assert!(h_m(0.5, 8) > h_m(2.0, 8));
        assert!((q_m(1.0, 64) - q_infty(1.0)).norm() <= 2.0 / 64.0);
        let p = steepest_path_case3(1.0, 4).unwrap();
        assert!(p.sigma.is_closed() && p.sigma.is_connected());
        assert_eq!(p.sigma.winding_number(c(0.0, 0.0)), 1);
        assert!(steepest_path_case3(PI, 4).is_err());
        let phi = h_m_inverse(h_m(1.3, 4), 4);
        assert!((phi - 1.3).abs() < 1e-10);
    }

    #[test]
    fn double_integral_collision_and_product() {
        let circle = ComplexPath::new(vec![Segment::arc(c(0.0, 0.0), 0.5, 0.0, 2.0 * PI)]);
        let line = ComplexPath::vertical_line(0.5);
        assert!(matches!(
            integrate_double(|_, _| c(1.0, 0.0), &line, &circle, &QuadSpec::default()),
            Err(Error::PathCollision { .. })
        ));
        let line = ComplexPath::vertical_line(1.0);
        let r = integrate_double(|s, t| (s * s).exp() * t.inv(), &line, &circle, &tight()).unwrap();
        let a = integrate(|s| (s * s).exp(), &line, &tight()).value;
        assert!((r.value - a * two_pi_i()).norm() < 1e-10);
        let r2 = integrate_double(|s, t| (s * s).exp() * t.inv(), &line.reversed(), &circle.reversed(), &tight()).unwrap();
        assert!((r.value - r2.value).norm() < 1e-10);
    }

    #[test]
    fn path_json_roundtrip() {
        let p = sigma_minus_infty(0.3).unwrap();
        let back: ComplexPath = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in [1usize, 2, 5, 16, 61] {
            let (x, w) = gauss_legendre(n);
            let total: f64 = w.iter().sum();
            assert!((total - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((q - exact).abs() < 1e-13, "n={n}: {q} vs {exact}");
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }
}
