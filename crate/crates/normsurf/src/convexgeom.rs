//! Normed perimeters of planar convex sets, shortcuts past the apex of a
//! sharp trihedral cone, and the rescaling experiment showing that a long
//! geodesic on a convex surface stops being a shortest path.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesics::shoot_extended;
use crate::linalg::Vector;
use crate::norms::{MinkowskiNorm, NormSpec};
use crate::surfaces::{Chart, Domain, ImmersedSurface};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

fn norm2(norm: &MinkowskiNorm, v: [f64; 2]) -> f64 {
    norm.eval(&Vector::from_column_slice(&v))
}

fn norm3(norm: &MinkowskiNorm, v: [f64; 3]) -> f64 {
    norm.eval(&Vector::from_column_slice(&v))
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn unit3(a: [f64; 3]) -> [f64; 3] {
    scale3(a, 1.0 / dot3(a, a).sqrt())
}

fn cross2(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Length of a broken line in the given norm.
pub fn broken_line_length(norm: &MinkowskiNorm, points: &[[f64; 3]]) -> f64 {
    points.windows(2).map(|w| norm3(norm, sub3(w[1], w[0]))).sum()
}

/// Normed length of the closed polygon through `points`.
pub fn polygon_perimeter(points: &[[f64; 2]], norm: &MinkowskiNorm) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::Validation("a polygon needs at least 3 vertices".into()));
    }
    let n = points.len();
    Ok((0..n)
        .map(|i| {
            let (a, b) = (points[i], points[(i + 1) % n]);
            norm2(norm, [b[0] - a[0], b[1] - a[1]])
        })
        .sum())
}

/// Counter-clockwise convex hull, collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross2(hull[hull.len() - 2], hull[hull.len() - 1], *p) <= 0.0 {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

fn is_ccw_convex(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    n >= 3 && (0..n).all(|i| cross2(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) > 0.0)
}

/// Whether `p` lies in the counter-clockwise convex polygon, up to `tol`.
fn contains_convex(poly: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        cross2(a, b, p) >= -tol * len
    })
}

/// Keeps the part of a convex polygon to the left of the directed line
/// `a → b`.
pub fn clip_halfplane(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| cross2(a, b, p);
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let (sp, sq) = (side(p), side(q));
        if sp >= 0.0 {
            out.push(p);
        }
        if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub inner_perimeter: f64,
    pub outer_perimeter: f64,
    /// Perimeter after each cut along an edge line of the inner polygon.
    pub cut_perimeters: Vec<f64>,
    /// Largest increase of the perimeter over a single cut.
    pub max_increase: f64,
    pub holds: bool,
}

/// Compares the perimeters of nested convex polygons and replays the
/// reduction of the outer one to the inner one by cuts along edge lines,
/// checking that no cut lengthens the boundary.
pub fn perimeter_monotonicity_check(
    inner: &[[f64; 2]],
    outer: &[[f64; 2]],
    norm: &MinkowskiNorm,
) -> Result<MonotonicityReport> {
    let orient = |p: &[[f64; 2]]| {
        let mut v = p.to_vec();
        let area: f64 = (0..v.len()).map(|i| cross2([0.0, 0.0], v[i], v[(i + 1) % v.len()])).sum();
        if area < 0.0 {
            v.reverse();
        }
        v
    };
    let (inner, outer) = (orient(inner), orient(outer));
    if !is_ccw_convex(&inner) || !is_ccw_convex(&outer) {
        return Err(Error::Validation("polygons must be strictly convex".into()));
    }
    let scale = outer.iter().fold(0.0f64, |m, p| m.max(p[0].abs()).max(p[1].abs()));
    if let Some(p) = inner.iter().find(|p| !contains_convex(&outer, **p, 1e-12 * scale)) {
        return Err(Error::Validation(format!("inner vertex ({}, {}) lies outside the outer polygon", p[0], p[1])));
    }
    let inner_perimeter = polygon_perimeter(&inner, norm)?;
    let outer_perimeter = polygon_perimeter(&outer, norm)?;
    let mut current = outer.clone();
    let mut last = outer_perimeter;
    let mut cut_perimeters = Vec::with_capacity(inner.len());
    let mut max_increase = f64::NEG_INFINITY;
    for i in 0..inner.len() {
        current = clip_halfplane(&current, inner[i], inner[(i + 1) % inner.len()]);
        let p = polygon_perimeter(&current, norm)?;
        max_increase = max_increase.max(p - last);
        cut_perimeters.push(p);
        last = p;
    }
    let tol = 1e-10 * outer_perimeter.max(1.0);
    Ok(MonotonicityReport {
        holds: max_increase <= tol && inner_perimeter <= outer_perimeter + tol && (last - inner_perimeter).abs() <= tol,
        inner_perimeter,
        outer_perimeter,
        cut_perimeters,
        max_increase,
    })
}

/// `{x : ⟨nᵢ, x⟩ ≤ 0, i = 1, 2, 3}` with outward face normals `nᵢ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrihedralCone {
    pub normals: [[f64; 3]; 3],
}

impl TrihedralCone {
    /// Rejects cones whose normals are linearly dependent; those contain a
    /// line or have empty interior.
    pub fn new(normals: [[f64; 3]; 3]) -> Result<Self> {
        let det = dot3(normals[0], cross3(normals[1], normals[2]));
        let scale: f64 = normals.iter().map(|n| dot3(*n, *n).sqrt()).product();
        if !(det.abs() > 1e-12 * scale) {
            return Err(Error::Validation("trihedral cone is not sharp".into()));
        }
        Ok(Self { normals })
    }

    /// Edge ray direction of the faces `i` and `j`.
    pub fn edge(&self, i: usize, j: usize) -> [f64; 3] {
        let k = 3 - i - j;
        let d = cross3(self.normals[i], self.normals[j]);
        if dot3(self.normals[k], d) < 0.0 {
            d
        } else {
            scale3(d, -1.0)
        }
    }

    pub fn contains(&self, x: [f64; 3], tol: f64) -> bool {
        self.normals.iter().all(|n| dot3(*n, x) <= tol)
    }

    /// Index of the face `x` lies on.
    fn face_of(&self, x: [f64; 3]) -> usize {
        (0..3)
            .min_by(|&a, &b| {
                let ra = dot3(self.normals[a], x).abs() / dot3(self.normals[a], self.normals[a]).sqrt();
                let rb = dot3(self.normals[b], x).abs() / dot3(self.normals[b], self.normals[b]).sqrt();
                ra.total_cmp(&rb)
            })
            .unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortcutKind {
    /// `p = q`.
    Trivial,
    /// `p` and `q` on one face: the straight segment.
    SameFace,
    /// `[p, -vt, q]` along the edge of the two faces.
    Edge,
    /// `[p, a(t), b(t), q]` across the third face.
    Cut,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShortcutReport {
    pub kind: ShortcutKind,
    pub path: Vec<[f64; 3]>,
    pub length: f64,
    /// `len[p, 0, q]`.
    pub broken_length: f64,
    pub margin: f64,
    pub t: f64,
    /// `f'(0)` for `f(t) = ‖p - vt‖ + ‖q - vt‖`.
    pub f_prime0: f64,
    /// `v`, outward along the common edge of the faces of `p` and `q`.
    pub v: [f64; 3],
    /// `‖v - v₁‖ + ‖v - v₂‖ - ‖v₁ - v₂‖`.
    pub limit_slope: f64,
    /// Difference estimate of `lim (f(t) - g(t))/t`.
    pub fd_slope: f64,
    /// Largest distance of a path vertex from the plane of the path,
    /// relative to the path size.
    pub planarity: f64,
}

/// Golden-section minimization of `f` on `[a, b]`.
fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn planarity(path: &[[f64; 3]]) -> f64 {
    if path.len() < 4 {
        return 0.0;
    }
    let size = path.iter().fold(0.0f64, |m, p| m.max(dot3(sub3(*p, path[0]), sub3(*p, path[0])).sqrt()));
    let n = cross3(sub3(path[1], path[0]), sub3(path[path.len() - 1], path[0]));
    let nn = dot3(n, n).sqrt();
    if nn == 0.0 || size == 0.0 {
        return 0.0;
    }
    path.iter()
        .map(|p| dot3(sub3(*p, path[0]), n).abs() / nn / size)
        .fold(0.0, f64::max)
}

/// A planar path on the boundary of `cone` from `p` to `q` that is
/// shorter than `[p, 0, q]`.
pub fn cone_shortcut(norm: &MinkowskiNorm, cone: &TrihedralCone, p: [f64; 3], q: [f64; 3]) -> Result<ShortcutReport> {
    if norm.dim() != 3 {
        return Err(Error::Validation("cone shortcuts need a 3-dimensional norm".into()));
    }
    let size = dot3(p, p).sqrt().max(dot3(q, q).sqrt());
    if !(size > 0.0) || dot3(p, p) == 0.0 || dot3(q, q) == 0.0 {
        return Err(Error::Validation("p and q must be non-zero".into()));
    }
    let tol = 1e-9 * size * cone.normals.iter().map(|n| dot3(*n, *n).sqrt()).fold(0.0, f64::max);
    let (i, j) = (cone.face_of(p), cone.face_of(q));
    for (x, f) in [(p, i), (q, j)] {
        if !cone.contains(x, tol) || dot3(cone.normals[f], x).abs() > tol {
            return Err(Error::Validation("p and q must lie on the boundary of the cone".into()));
        }
    }
    let f0 = norm3(norm, p) + norm3(norm, q);
    let base = |kind, path: Vec<[f64; 3]>| {
        let length = broken_line_length(norm, &path);
        ShortcutReport {
            kind,
            planarity: planarity(&path),
            path,
            length,
            broken_length: f0,
            margin: f0 - length,
            t: 0.0,
            f_prime0: f64::NAN,
            v: [0.0; 3],
            limit_slope: f64::NAN,
            fd_slope: f64::NAN,
        }
    };
    if sub3(p, q).iter().all(|c| c.abs() <= 1e-15 * size) {
        return Ok(base(ShortcutKind::Trivial, vec![p]));
    }
    if i == j {
        let r = base(ShortcutKind::SameFace, vec![p, q]);
        return if r.margin > 1e-12 * f0 {
            Ok(r)
        } else {
            Err(Error::Domain("p and q lie on one generator; no shortcut exists".into()))
        };
    }
    let k = 3 - i - j;
    let v = scale3(cone.edge(i, j), -1.0);
    let v = scale3(v, size / norm3(norm, v));
    let f = |t: f64| norm3(norm, sub3(p, scale3(v, t))) + norm3(norm, sub3(q, scale3(v, t)));
    let grad = |x: [f64; 3]| {
        let l = norm.legendre(&Vector::from_column_slice(&x));
        let phi = norm3(norm, x);
        [l.0[0] / phi, l.0[1] / phi, l.0[2] / phi]
    };
    let f_prime0 = -dot3(add3(grad(p), grad(q)), v);
    let nk = cone.normals[k];
    let cut_point = |x: [f64; 3], t: f64| {
        let s = dot3(nk, x) / (dot3(nk, x) - t * dot3(nk, v));
        add3(x, scale3(sub3(scale3(v, t), x), s))
    };
    let g = |t: f64| {
        let (a, b) = (cut_point(p, t), cut_point(q, t));
        norm3(norm, sub3(a, p)) + norm3(norm, sub3(b, a)) + norm3(norm, sub3(q, b))
    };
    let v1 = sub3(v, scale3(p, dot3(nk, v) / dot3(nk, p)));
    let v2 = sub3(v, scale3(q, dot3(nk, v) / dot3(nk, q)));
    let limit_slope = norm3(norm, sub3(v, v1)) + norm3(norm, sub3(v, v2)) - norm3(norm, sub3(v1, v2));
    let slope = |t: f64| (f(t) - g(t)) / t;
    let h = 1e-5;
    let fd_slope = 2.0 * slope(h / 2.0) - slope(h);

    let mut report = if f_prime0 > 0.0 {
        // f is convex, so f(-t) decreases until its minimum
        let mut hi = 1.0;
        while f(-hi) < f0 && hi < 1e6 {
            hi *= 2.0;
        }
        let t = golden_min(&|t| f(-t), 0.0, hi, 1e-12 * hi);
        let mut r = base(ShortcutKind::Edge, vec![p, scale3(v, -t), q]);
        r.t = t;
        r
    } else {
        // g is only known to dip below f(0) for small t; scan, then refine
        let ts: Vec<f64> = (0..=240).map(|m| 10f64.powf(-8.0 + 9.0 * m as f64 / 240.0)).collect();
        let mut best = (f64::INFINITY, 0usize);
        for (m, t) in ts.iter().enumerate() {
            let gt = g(*t);
            if gt < best.0 {
                best = (gt, m);
            }
        }
        let lo = ts[best.1.saturating_sub(1)];
        let hi = ts[(best.1 + 1).min(ts.len() - 1)];
        let t = golden_min(&g, lo, hi, 1e-12 * hi);
        let t = if g(t) <= best.0 { t } else { ts[best.1] };
        let mut r = base(ShortcutKind::Cut, vec![p, cut_point(p, t), cut_point(q, t), q]);
        r.t = t;
        r
    };
    report.f_prime0 = f_prime0;
    report.v = v;
    report.limit_slope = limit_slope;
    report.fd_slope = fd_slope;
    if !(report.margin > 1e-12 * f0) {
        return Err(Error::NoConvergence {
            what: "cone shortcut",
            iterations: 0,
            residual: report.margin,
        });
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicSeed {
    pub start: [f64; 2],
    pub direction: [f64; 2],
}

fn default_lambdas() -> Vec<f64> {
    (1..=8).map(|k| 2f64.powi(k)).collect()
}

fn default_dt() -> f64 {
    0.02
}

fn default_samples() -> usize {
    2048
}

/// A convex surface given as the graph of a convex function over the
/// plane, with the body `B` its epigraph, plus the geodesic to test.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexScene {
    pub norm: NormSpec,
    pub surface: Chart,
    pub geodesic: GeodesicSeed,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Boundary samples per section arc.
    #[serde(default = "default_samples")]
    pub section_samples: usize,
}

impl ConvexScene {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Asymptotic cone of the body above a graph chart.
#[derive(Clone, Debug, PartialEq)]
pub enum AsymptoticCone {
    /// `z ≥ √(a²x² + b²y²)`.
    Elliptic { a: f64, b: f64 },
    /// Cones without interior or bodies containing lines; not handled.
    Unsupported(String),
}

pub fn asymptotic_cone(chart: &Chart) -> AsymptoticCone {
    match chart {
        Chart::Hyperboloid { a, b, .. } if *a > 0.0 && *b > 0.0 => AsymptoticCone::Elliptic { a: *a, b: *b },
        Chart::QuadraticGraph { .. } | Chart::QuarticGraph { .. } => AsymptoticCone::Unsupported(
            "asymptotic cone is a single ray, a cone without interior".into(),
        ),
        Chart::Cylinder { .. } => AsymptoticCone::Unsupported("the body contains a straight line".into()),
        Chart::Sphere { .. } => AsymptoticCone::Unsupported("the body is compact".into()),
        _ => AsymptoticCone::Unsupported("surface is not the graph of a convex function".into()),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LambdaResult {
    pub lambda: f64,
    pub p: [f64; 3],
    pub q: [f64; 3],
    /// Section arc length at the finer resolution.
    pub competitor_length: f64,
    /// Competitor length plus the change between resolutions.
    pub upper_bound: f64,
    /// Largest distance of a competitor vertex from the rescaled surface.
    pub surface_residual: f64,
    pub shortcut_margin: f64,
    pub refutes: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefuteStatus {
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RefuteReport {
    pub status: RefuteStatus,
    pub reason: Option<String>,
    pub refuted_at: Option<f64>,
    pub results: Vec<LambdaResult>,
    /// Competitor at the first refuting scale.
    pub competitor: Vec<[f64; 3]>,
}

impl RefuteReport {
    fn inconclusive(reason: String) -> Self {
        Self {
            status: RefuteStatus::Inconclusive,
            reason: Some(reason),
            refuted_at: None,
            results: vec![],
            competitor: vec![],
        }
    }

    /// CSV with columns `x,y,z`.
    pub fn write_competitor_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z")?;
        for p in &self.competitor {
            writeln!(w, "{},{},{}", p[0], p[1], p[2])?;
        }
        Ok(())
    }
}

/// Supporting trihedral cone of `z ≥ √(a²x² + b²y²)` at `p` and `q`.
fn supporting_trihedral(norm: &MinkowskiNorm, a: f64, b: f64, p: [f64; 3], q: [f64; 3]) -> Result<TrihedralCone> {
    let normal = |x: [f64; 3]| {
        let r = (a * a * x[0] * x[0] + b * b * x[1] * x[1]).sqrt();
        [a * a * x[0] / r, b * b * x[1] / r, -1.0]
    };
    let (n1, n2) = (normal(p), normal(q));
    let d = cross3(n1, n2);
    if dot3(d, d).sqrt() < 1e-12 {
        return Err(Error::Domain("p and q share a supporting plane".into()));
    }
    // third plane at the generator farthest from the line H₁ ∩ H₂
    let dist = |g: [f64; 3]| {
        let m = 4.0 * norm3(norm, g) / norm3(norm, d);
        let s = golden_min(&|s| norm3(norm, sub3(g, scale3(d, s))), -m, m, 1e-10 * m);
        norm3(norm, sub3(g, scale3(d, s))) / norm3(norm, g)
    };
    let generator = |phi: f64| [phi.cos() / a, phi.sin() / b, 1.0];
    let mut phis: Vec<f64> = (0..720).map(|k| std::f64::consts::TAU * k as f64 / 720.0).collect();
    phis.sort_by(|x, y| dist(generator(*y)).total_cmp(&dist(generator(*x))));
    for phi in phis {
        let n3 = [a * phi.cos(), b * phi.sin(), -1.0];
        if let Ok(c) = TrihedralCone::new([n1, n2, n3]) {
            if dot3(n3, d).abs() > 1e-6 * dot3(d, d).sqrt() * dot3(n3, n3).sqrt() {
                return Ok(c);
            }
        }
    }
    Err(Error::Domain("no third supporting plane misses the edge line".into()))
}

/// Boundary arcs between `p` and `q` of the section of the rescaled body
/// `{λz ≥ h(λx, λy)}` by the plane through `o`, `p`, `q`; returns the
/// shorter finite one as a polyline, or `None` if both are unbounded.
fn section_arc(
    height: &dyn Fn(f64, f64) -> f64,
    lambda: f64,
    o: [f64; 3],
    p: [f64; 3],
    q: [f64; 3],
    samples: usize,
    norm: &MinkowskiNorm,
) -> Option<Vec<[f64; 3]>> {
    let outside = |x: [f64; 3]| height(lambda * x[0], lambda * x[1]) - lambda * x[2];
    let e1 = unit3(sub3(q, p));
    let n = unit3(cross3(sub3(p, o), sub3(q, o)));
    let e2 = cross3(n, e1);
    let at = |th: f64, r: f64| add3(o, add3(scale3(e1, r * th.cos()), scale3(e2, r * th.sin())));
    let angle = |x: [f64; 3]| {
        let d = sub3(x, o);
        dot3(d, e2).atan2(dot3(d, e1))
    };
    let size = dot3(sub3(q, p), sub3(q, p)).sqrt();
    let exit = |th: f64| -> Option<f64> {
        let mut hi = size;
        while outside(at(th, hi)) <= 0.0 {
            hi *= 2.0;
            if hi > 1e4 * size {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if outside(at(th, mid)) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    };
    let (tp, tq) = (angle(p), angle(q));
    let mut best: Option<(f64, Vec<[f64; 3]>)> = None;
    for dir in [1.0, -1.0] {
        let mut span = dir * (tq - tp);
        span = span.rem_euclid(std::f64::consts::TAU);
        let mut arc = vec![p];
        let mut ok = true;
        for k in 1..samples {
            let th = tp + dir * span * k as f64 / samples as f64;
            match exit(th) {
                Some(r) => arc.push(at(th, r)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        arc.push(q);
        let len = broken_line_length(norm, &arc);
        if best.as_ref().is_none_or(|(l, _)| len < *l) {
            best = Some((len, arc));
        }
    }
    best.map(|(_, arc)| arc)
}

/// Rescales a long geodesic on the surface by `1/λ` and looks for a
/// shorter path between its ends in a planar section of the rescaled body.
pub fn geodesic_line_refute(scene: &ConvexScene) -> Result<RefuteReport> {
    let norm = Arc::new(scene.norm.build()?);
    if norm.dim() != 3 {
        return Err(Error::Validation("refutation scenes need a 3-dimensional norm".into()));
    }
    let (a, b) = match asymptotic_cone(&scene.surface) {
        AsymptoticCone::Elliptic { a, b } => (a, b),
        AsymptoticCone::Unsupported(reason) => return Ok(RefuteReport::inconclusive(reason)),
    };
    let lambda_max = scene.lambdas.iter().fold(0.0f64, |m, l| m.max(*l));
    if !(lambda_max > 0.0) {
        return Err(Error::Validation("need at least one positive scale".into()));
    }
    let reach = 2.0 * lambda_max * (1.0 + 1.0 / a.min(b));
    let surface = ImmersedSurface::new(norm.clone(), scene.surface.clone(), Domain::square(reach))?;
    let path = shoot_extended(
        &surface,
        scene.geodesic.start,
        scene.geodesic.direction,
        lambda_max,
        lambda_max,
        scene.dt,
    )?;
    if path.truncated {
        return Err(Error::Domain("geodesic left the chart domain".into()));
    }
    let chart = scene.surface.clone();
    let height = move |x: f64, y: f64| chart.point([x, y])[2];
    let cone_height = |x: f64, y: f64| (a * a * x * x + b * b * y * y).sqrt();
    let mut results: Vec<(LambdaResult, Vec<[f64; 3]>)> = scene
        .lambdas
        .par_iter()
        .map(|&lambda| -> Result<(LambdaResult, Vec<[f64; 3]>)> {
            let end = |t: f64| {
                let s = surface.point(path.eval(t).0);
                [s[0] / lambda, s[1] / lambda, s[2] / lambda]
            };
            let (p, q) = (end(-lambda), end(lambda));
            let onto_cone = |x: [f64; 3]| [x[0], x[1], cone_height(x[0], x[1])];
            let (pc, qc) = (onto_cone(p), onto_cone(q));
            let cone = supporting_trihedral(&norm, a, b, pc, qc)?;
            let cut = cone_shortcut(&norm, &cone, pc, qc)?;
            // interior point of the shortcut plane, off the line pq
            let mid = scale3(add3(pc, qc), 0.5);
            let third = cut.path[cut.path.len() / 2];
            let inside = |x: [f64; 3]| cone_height(x[0], x[1]) < x[2];
            let mut o = None;
            for s in [0.25, -0.25, 0.1, -0.1, 0.03, -0.03] {
                let cand = add3(mid, scale3(sub3(third, mid), s));
                if inside(cand) {
                    o = Some(cand);
                    break;
                }
            }
            let o = o.ok_or_else(|| Error::Domain("no interior point on the shortcut plane".into()))?;
            let coarse = section_arc(&height, lambda, o, p, q, scene.section_samples, &norm);
            let fine = section_arc(&height, lambda, o, p, q, 2 * scene.section_samples, &norm);
            let (lc, lf) = match (&coarse, &fine) {
                (Some(c), Some(f)) => (broken_line_length(&norm, c), broken_line_length(&norm, f)),
                _ => (f64::INFINITY, f64::INFINITY),
            };
            let fine = fine.unwrap_or_default();
            let surface_residual = fine
                .iter()
                .map(|x| (height(lambda * x[0], lambda * x[1]) / lambda - x[2]).abs())
                .fold(0.0, f64::max);
            let upper_bound = lf + (lf - lc).abs();
            Ok((
                LambdaResult {
                    lambda,
                    p,
                    q,
                    competitor_length: lf,
                    upper_bound,
                    surface_residual,
                    shortcut_margin: cut.margin,
                    refutes: upper_bound < 2.0 && surface_residual < 1e-8,
                },
                fine,
            ))
        })
        .collect::<Result<_>>()?;
    results.sort_by(|x, y| x.0.lambda.total_cmp(&y.0.lambda));
    let first = results.iter().position(|(r, _)| r.refutes);
    let competitor = first.map(|i| results[i].1.clone()).unwrap_or_default();
    Ok(RefuteReport {
        status: if first.is_some() { RefuteStatus::Refuted } else { RefuteStatus::Inconclusive },
        reason: if first.is_some() { None } else { Some("no shorter section arc up to the largest scale".into()) },
        refuted_at: first.map(|i| results[i].0.lambda),
        results: results.into_iter().map(|(r, _)| r).collect(),
        competitor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::norms::QuarticTerm;

    fn quartic2() -> MinkowskiNorm {
        MinkowskiNorm::quartic_perturbed(
            Matrix::identity(2, 2),
            vec![QuarticTerm::new(1.0, vec![1.0, 0.0]), QuarticTerm::new(1.0, vec![0.0, 1.0])],
            0.5,
        )
        .unwrap()
    }

    const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

    #[test]
    fn square_perimeters() {
        let e = MinkowskiNorm::euclidean(2);
        assert!((polygon_perimeter(&SQUARE, &e).unwrap() - 4.0).abs() < 1e-15);
        let q = quartic2();
        let p = polygon_perimeter(&SQUARE, &q).unwrap();
        // equivalence constants over the Euclidean circle
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..3600 {
            let t = std::f64::consts::TAU * k as f64 / 3600.0;
            let n = norm2(&q, [t.cos(), t.sin()]);
            lo = lo.min(n);
            hi = hi.max(n);
        }
        assert!(p >= 4.0 * lo - 1e-12 && p <= 4.0 * hi + 1e-12);
        assert!(p > 4.0 && p < 8.0);
        let mut rev = SQUARE.to_vec();
        rev.reverse();
        assert!((polygon_perimeter(&rev, &q).unwrap() - p).abs() < 1e-14);
    }

    #[test]
    fn nested_squares() {
        let outer: Vec<[f64; 2]> = SQUARE.iter().map(|p| [2.0 * p[0] - 0.5, 2.0 * p[1] - 0.5]).collect();
        let r = perimeter_monotonicity_check(&SQUARE, &outer, &MinkowskiNorm::euclidean(2)).unwrap();
        assert!(r.holds);
        assert!((r.inner_perimeter - 4.0).abs() < 1e-14 && (r.outer_perimeter - 8.0).abs() < 1e-14);
        assert!(perimeter_monotonicity_check(&outer, &SQUARE, &MinkowskiNorm::euclidean(2)).is_err());
    }

    #[test]
    fn perimeter_scales_with_the_body() {
        let q = quartic2();
        let poly: Vec<[f64; 2]> = (0..7)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 7.0;
                [t.cos() + 0.2, 0.6 * t.sin() - 0.1]
            })
            .collect();
        let base = polygon_perimeter(&poly, &q).unwrap();
        for eps in [0.1, 0.01, 0.001] {
            let s = |f: f64| -> Vec<[f64; 2]> { poly.iter().map(|p| [f * p[0], f * p[1]]).collect() };
            let (lo, hi) = (s(1.0 - eps), s(1.0 + eps));
            // a body squeezed between the two scaled copies
            let mut pts = lo.clone();
            pts.push(hi[2]);
            let between = convex_hull(&pts);
            let pb = polygon_perimeter(&between, &q).unwrap();
            let rep = perimeter_monotonicity_check(&lo, &hi, &q).unwrap();
            assert!(rep.holds);
            assert!(pb >= (1.0 - eps) * base - 1e-12 && pb <= (1.0 + eps) * base + 1e-12);
            assert!(((rep.outer_perimeter - base) / base - eps).abs() < 1e-12);
        }
    }

    fn pyramid() -> TrihedralCone {
        // generators g₁, g₂, g₃ around the z axis
        let g: Vec<[f64; 3]> = (0..3)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / 3.0;
                [t.cos(), t.sin(), 1.0]
            })
            .collect();
        let face = |a: [f64; 3], b: [f64; 3], c: [f64; 3]| {
            let n = cross3(a, b);
            if dot3(n, c) > 0.0 {
                scale3(n, -1.0)
            } else {
                n
            }
        };
        TrihedralCone::new([face(g[0], g[1], g[2]), face(g[1], g[2], g[0]), face(g[2], g[0], g[1])]).unwrap()
    }

    #[test]
    fn symmetric_shortcut_beats_brute_force_bound() {
        let cone = pyramid();
        let e = MinkowskiNorm::euclidean(3);
        let g = |k: usize| {
            let t = std::f64::consts::TAU * k as f64 / 3.0;
            [t.cos(), t.sin(), 1.0]
        };
        // midpoints of two faces at the same height
        let p = scale3(add3(g(0), g(1)), 0.5);
        let q = scale3(add3(g(1), g(2)), 0.5);
        let r = cone_shortcut(&e, &cone, p, q).unwrap();
        assert!(r.margin > 0.0);
        assert!(r.planarity < 1e-10);
        for x in &r.path {
            assert!(cone.contains(*x, 1e-12));
        }
        // brute force over broken lines through one point of the shared edge
        let edge = g(1);
        let mut best = f64::INFINITY;
        for k in 0..=4000 {
            let s = 2.0 * k as f64 / 4000.0;
            let x = scale3(edge, s);
            best = best.min(broken_line_length(&e, &[p, x, q]));
        }
        assert!(r.length <= best + 1e-9, "{} vs {}", r.length, best);
        assert!(r.length < r.broken_length);
    }

    #[test]
    fn trivial_and_invalid_inputs() {
        let cone = pyramid();
        let e = MinkowskiNorm::euclidean(3);
        let p = scale3(add3([1.0, 0.0, 1.0], [-0.5, 3f64.sqrt() / 2.0, 1.0]), 0.5);
        let r = cone_shortcut(&e, &cone, p, p).unwrap();
        assert_eq!(r.kind, ShortcutKind::Trivial);
        assert!(cone_shortcut(&e, &cone, [0.0, 0.0, 1.0], p).is_err());
    }

    #[test]
    fn unsupported_bodies_are_inconclusive() {
        let scene = ConvexScene {
            norm: NormSpec::from_norm(&MinkowskiNorm::euclidean(3)).unwrap(),
            surface: Chart::Cylinder { radius: 1.0 },
            geodesic: GeodesicSeed {
                start: [0.0, 0.0],
                direction: [1.0, 0.0],
            },
            lambdas: default_lambdas(),
            dt: 0.02,
            section_samples: 64,
        };
        let r = geodesic_line_refute(&scene).unwrap();
        assert_eq!(r.status, RefuteStatus::Inconclusive);
    }

    #[test]
    fn bundled_scene_is_refuted() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenes/hyperboloid_refute.json");
        let r = geodesic_line_refute(&ConvexScene::load(Path::new(path)).unwrap()).unwrap();
        assert_eq!(r.status, RefuteStatus::Refuted);
        assert!(r.refuted_at.unwrap() <= 256.0);
        for x in &r.results {
            assert!(x.surface_residual < 1e-8);
        }
        let mut csv = Vec::new();
        r.write_competitor_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("x,y,z\n"));
    }

    #[test]
    fn hull_drops_interior_points() {
        let h = convex_hull(&[[0.0, 0.0], [1.0, 0.0], [0.5, 0.2], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]);
        assert_eq!(h.len(), 4);
        assert!(is_ccw_convex(&h));
    }
}
