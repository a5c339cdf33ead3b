//! Immersed surfaces in a normed space, induced Finsler metrics and the
//! saddle classifier.

mod chart;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use chart::{Chart, ChartJet};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues, Matrix, Vector};
use crate::norms::MinkowskiNorm;

pub const IMMERSION_TOL: f64 = 1e-8;
const SWEEP_NORMALS: usize = 720;
const DEGENERACY_TOL: f64 = 1e-10;

/// Axis-aligned parameter rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Domain {
    pub fn square(half: f64) -> Self {
        Self {
            x: [-half, half],
            y: [-half, half],
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }

    /// Whether `p` lies at least `margin` inside the rectangle.
    pub fn contains_with_margin(&self, p: [f64; 2], margin: f64) -> bool {
        p[0] >= self.x[0] + margin
            && p[0] <= self.x[1] - margin
            && p[1] >= self.y[0] + margin
            && p[1] <= self.y[1] - margin
    }
}

#[derive(Clone, Debug)]
pub struct ImmersedSurface {
    pub ambient: Arc<MinkowskiNorm>,
    pub chart: Chart,
    pub domain: Domain,
}

impl ImmersedSurface {
    pub fn new(ambient: Arc<MinkowskiNorm>, chart: Chart, domain: Domain) -> Result<Self> {
        if chart.ambient_dim() != ambient.dim() {
            return Err(Error::Config(format!(
                "chart maps into R^{} but the ambient norm has dimension {}",
                chart.ambient_dim(),
                ambient.dim()
            )));
        }
        if !(domain.x[0] < domain.x[1] && domain.y[0] < domain.y[1]) {
            return Err(Error::Config("empty parameter domain".into()));
        }
        Ok(Self {
            ambient,
            chart,
            domain,
        })
    }

    pub fn dim(&self) -> usize {
        self.ambient.dim()
    }

    pub fn point(&self, x: [f64; 2]) -> Vector {
        self.chart.point(x)
    }

    pub fn jet(&self, x: [f64; 2]) -> ChartJet {
        self.chart.jet(x)
    }

    /// Jet at `x` after checking that `dS(x)` has full rank.
    pub fn checked_jet(&self, x: [f64; 2]) -> Result<ChartJet> {
        let jet = self.chart.jet(x);
        let smin = smallest_singular_value(&jet);
        if !(smin > IMMERSION_TOL) {
            return Err(Error::Immersion {
                x: x[0],
                y: x[1],
                sigma_min: smin,
            });
        }
        Ok(jet)
    }

    /// The pullback `v ↦ Φ(dS(x) v)`.
    pub fn induced_metric(&self, x: [f64; 2]) -> Result<MinkowskiNorm> {
        let jet = self.checked_jet(x)?;
        MinkowskiNorm::pullback(self.ambient.clone(), jet.differential())
    }

    /// `φ_x(v)` without building the pullback norm.
    pub fn metric_eval(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.ambient.eval(&self.chart.jet(x).push(v))
    }

    /// Second fundamental forms `II_k(u, w) = Q(d²S(u, w), n_k)` for a
    /// `Q`-orthonormal basis of the `Q`-normal space, where `Q` is the half
    /// Hessian of the ambient norm at `dS(x) q_direction`.
    pub fn second_fundamental_pencil(
        &self,
        x: [f64; 2],
        q_direction: [f64; 2],
    ) -> Result<Vec<[[f64; 2]; 2]>> {
        if q_direction == [0.0, 0.0] {
            return Err(Error::Domain("q_direction must be non-zero".into()));
        }
        let jet = self.checked_jet(x)?;
        let q = self.ambient.half_hessian(&jet.push(q_direction));
        let normals = q_normal_basis(&q, &jet)?;
        Ok(normals
            .iter()
            .map(|n| {
                let qn = &q * n;
                let a = jet.dxx.dot(&qn);
                let b = jet.dxy.dot(&qn);
                let c = jet.dyy.dot(&qn);
                [[a, b], [b, c]]
            })
            .collect())
    }

    pub fn saddle_classify(&self, x: [f64; 2], q_direction: [f64; 2]) -> Result<SaddleVerdict> {
        let forms = self.second_fundamental_pencil(x, q_direction)?;
        Ok(SaddleVerdict::from_pencil(x, &forms))
    }

    pub fn classify_region(&self, grid: &Grid, q_direction: [f64; 2]) -> Result<RegionReport> {
        let nodes = grid.nodes();
        if let Some(p) = nodes.iter().find(|p| !self.domain.contains(**p)) {
            return Err(Error::Validation(format!(
                "grid node ({}, {}) lies outside the surface domain",
                p[0], p[1]
            )));
        }
        let verdicts = nodes
            .par_iter()
            .map(|p| self.saddle_classify(*p, q_direction))
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionReport::new(verdicts))
    }
}

fn smallest_singular_value(jet: &ChartJet) -> f64 {
    let d = jet.differential();
    let g = d.transpose() * d;
    sym_eigenvalues(&g)[0].max(0.0).sqrt()
}

/// Gram–Schmidt in the inner product `Q`, starting from the tangent plane and
/// greedily adding the ambient basis vector with the largest remainder.
fn q_normal_basis(q: &Matrix, jet: &ChartJet) -> Result<Vec<Vector>> {
    let n = q.nrows();
    let ip = |a: &Vector, b: &Vector| a.dot(&(q * b));
    let mut basis: Vec<Vector> = Vec::with_capacity(n);
    for t in [&jet.dx, &jet.dy] {
        let mut r = t.clone();
        for b in &basis {
            r -= b * ip(b, &r);
        }
        let len = ip(&r, &r).sqrt();
        if !(len > IMMERSION_TOL) {
            return Err(Error::Domain("degenerate tangent plane".into()));
        }
        basis.push(r / len);
    }
    let mut normals = Vec::with_capacity(n - 2);
    while normals.len() < n - 2 {
        let mut best: Option<(f64, Vector)> = None;
        for i in 0..n {
            let mut r = Vector::zeros(n);
            r[i] = 1.0;
            for b in basis.iter().chain(&normals) {
                r -= b * ip(b, &r);
            }
            let len = ip(&r, &r).sqrt();
            if best.as_ref().map_or(true, |(l, _)| len > *l + 1e-12) {
                best = Some((len, r));
            }
        }
        let (len, r) = best.expect("ambient dimension at least 3");
        if !(len > 1e-8) {
            return Err(Error::Domain("degenerate normal space".into()));
        }
        normals.push(r / len);
    }
    Ok(normals)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaddleClass {
    StrictlySaddle,
    Saddle,
    NotSaddle,
}

impl fmt::Display for SaddleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SaddleClass::StrictlySaddle => "strictly_saddle",
            SaddleClass::Saddle => "saddle",
            SaddleClass::NotSaddle => "not_saddle",
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SaddleVerdict {
    pub point: [f64; 2],
    pub class: SaddleClass,
    pub det_a: f64,
    /// Second determinant and mixed coefficient of the pencil (4D only).
    pub det_b: Option<f64>,
    pub mixed: Option<f64>,
    /// Largest `det(II_ν)` over a brute-force sweep of unit normals.
    pub sweep_max: f64,
    pub sweep_class: SaddleClass,
    /// Set when the pencil sits within round-off of a class boundary.
    pub boundary: bool,
}

fn det2(a: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

impl SaddleVerdict {
    pub fn from_pencil(point: [f64; 2], forms: &[[[f64; 2]; 2]]) -> Self {
        let scale = forms
            .iter()
            .flat_map(|f| f.iter().flatten())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol2 = DEGENERACY_TOL * scale * scale;
        let tol4 = tol2 * scale * scale;
        let (class, det_a, det_b, mixed, boundary, sweep_max) = match forms {
            [a] => {
                let d = det2(a);
                let class = if d < -tol2 {
                    SaddleClass::StrictlySaddle
                } else if d <= tol2 {
                    SaddleClass::Saddle
                } else {
                    SaddleClass::NotSaddle
                };
                (class, d, None, None, d.abs() <= tol2, d)
            }
            [a, b] => {
                let da = det2(a);
                let db = det2(b);
                let m = a[0][0] * b[1][1] + a[1][1] * b[0][0] - 2.0 * a[0][1] * b[0][1];
                let disc = da * db - 0.25 * m * m;
                let class = if da < -tol2 && disc > tol4 {
                    SaddleClass::StrictlySaddle
                } else if da <= tol2 && db <= tol2 && disc >= -tol4 {
                    SaddleClass::Saddle
                } else {
                    SaddleClass::NotSaddle
                };
                let boundary = (da.abs() <= tol2 || db.abs() <= tol2 || disc.abs() <= tol4)
                    && class != SaddleClass::NotSaddle;
                let sweep = pencil_sweep_max(da, db, m);
                (class, da, Some(db), Some(m), boundary, sweep)
            }
            _ => unreachable!("pencils have one or two forms"),
        };
        let sweep_class = if sweep_max < -tol2 {
            SaddleClass::StrictlySaddle
        } else if sweep_max <= tol2 {
            SaddleClass::Saddle
        } else {
            SaddleClass::NotSaddle
        };
        SaddleVerdict {
            point,
            class,
            det_a,
            det_b,
            mixed,
            sweep_max,
            sweep_class,
            boundary,
        }
    }

    /// The binary quadratic `det(αA + βB)`.
    pub fn pencil_quadratic(&self, alpha: f64, beta: f64) -> f64 {
        match (self.det_b, self.mixed) {
            (Some(db), Some(m)) => self.det_a * alpha * alpha + m * alpha * beta + db * beta * beta,
            _ => self.det_a * alpha * alpha,
        }
    }
}

/// Maximum of `det(cos θ A + sin θ B)` over the normal circle: a uniform
/// sweep followed by golden-section refinement around the best sample.
fn pencil_sweep_max(da: f64, db: f64, m: f64) -> f64 {
    let f = |t: f64| {
        let (c, s) = (t.cos(), t.sin());
        da * c * c + m * c * s + db * s * s
    };
    let step = std::f64::consts::PI / SWEEP_NORMALS as f64 * 2.0;
    let (mut best_t, mut best) = (0.0, f(0.0));
    for k in 1..SWEEP_NORMALS {
        let t = k as f64 * step;
        let v = f(t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    let (mut lo, mut hi) = (best_t - step, best_t + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) > f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.max(f(0.5 * (lo + hi)))
}

/// Uniform `nx × ny` node grid over a rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn nodes(&self) -> Vec<[f64; 2]> {
        let coord = |r: [f64; 2], n: usize, k: usize| {
            if n <= 1 {
                0.5 * (r[0] + r[1])
            } else {
                r[0] + (r[1] - r[0]) * k as f64 / (n - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                out.push([coord(self.x, self.nx, i), coord(self.y, self.ny, j)]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegionReport {
    pub verdicts: Vec<SaddleVerdict>,
    pub strictly_saddle: usize,
    pub saddle: usize,
    pub not_saddle: usize,
    /// Nodes where the closed-form class and the normal sweep disagree.
    pub disagreements: usize,
}

impl RegionReport {
    fn new(verdicts: Vec<SaddleVerdict>) -> Self {
        let count = |c| verdicts.iter().filter(|v| v.class == c).count();
        Self {
            strictly_saddle: count(SaddleClass::StrictlySaddle),
            saddle: count(SaddleClass::Saddle),
            not_saddle: count(SaddleClass::NotSaddle),
            disagreements: verdicts
                .iter()
                .filter(|v| v.class != v.sweep_class && !v.boundary)
                .count(),
            verdicts,
        }
    }

    /// CSV with columns `x,y,class,detA,detB,m`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,class,detA,detB,m")?;
        for v in &self.verdicts {
            let opt = |o: Option<f64>| o.map_or(String::new(), |x| format!("{x:.12e}"));
            writeln!(
                w,
                "{},{},{},{:.12e},{},{}",
                v.point[0],
                v.point[1],
                v.class,
                v.det_a,
                opt(v.det_b),
                opt(v.mixed)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(n: usize) -> Arc<MinkowskiNorm> {
        Arc::new(MinkowskiNorm::euclidean(n))
    }

    fn surface(chart: Chart) -> ImmersedSurface {
        let n = chart.ambient_dim();
        ImmersedSurface::new(euclid(n), chart, Domain::square(1.0)).unwrap()
    }

    #[test]
    fn induced_metric_of_stretched_plane() {
        let s = surface(Chart::Affine {
            origin: vec![0.0; 3],
            e1: vec![2.0, 0.0, 0.0],
            e2: vec![0.0, 1.0, 0.0],
        });
        let phi = s.induced_metric([0.1, 0.2]).unwrap();
        assert_eq!(phi.eval(&Vector::from_vec(vec![1.0, 0.0])), 2.0);
    }

    #[test]
    fn saddle_graph_pencil() {
        let s = surface(Chart::QuadraticGraph { a: 1.0, b: 0.0, c: -1.0 });
        let forms = s.second_fundamental_pencil([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(forms.len(), 1);
        let f = forms[0];
        // the normal's sign is a convention; compare up to sign
        let sgn = f[0][0].signum();
        assert!((sgn * f[0][0] - 2.0).abs() < 1e-14 && (sgn * f[1][1] + 2.0).abs() < 1e-14);
        assert_eq!(f[0][1], 0.0);
        let v = s.saddle_classify([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(v.class, SaddleClass::StrictlySaddle);
    }

    #[test]
    fn f0_pencil_is_negative_definite() {
        let s = surface(Chart::FSigma { sigma: 0.0 });
        let forms = s.second_fundamental_pencil([0.0, 0.0], [1.0, 0.0]).unwrap();
        let v = SaddleVerdict::from_pencil([0.0, 0.0], &forms);
        assert_eq!(v.class, SaddleClass::StrictlySaddle);
        assert!((v.det_a + 4.0).abs() < 1e-14);
        assert!((v.det_b.unwrap() + 1.0).abs() < 1e-14);
        assert!(v.mixed.unwrap().abs() < 1e-14);
        assert!((v.pencil_quadratic(0.6, 0.8) - (-4.0 * 0.36 - 0.64)).abs() < 1e-14);
        assert!((v.sweep_max + 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_paraboloid_cylinder_classes() {
        let plane = surface(Chart::Affine {
            origin: vec![0.0; 4],
            e1: vec![1.0, 0.0, 0.0, 0.0],
            e2: vec![0.0, 1.0, 1.0, 0.0],
        });
        assert_eq!(plane.saddle_classify([0.2, 0.1], [0.0, 1.0]).unwrap().class, SaddleClass::Saddle);
        let para = surface(Chart::QuadraticGraph { a: 1.0, b: 0.0, c: 1.0 });
        let v = para.saddle_classify([0.0, 0.0], [1.0, 0.0]).unwrap();
        assert_eq!(v.class, SaddleClass::NotSaddle);
        assert!((v.det_a - 4.0).abs() < 1e-14);
        let cyl = surface(Chart::Cylinder { radius: 1.0 });
        let g = Grid { x: [-0.5, 0.5], y: [-0.5, 0.5], nx: 5, ny: 5 };
        let r = cyl.classify_region(&g, [1.0, 1.0]).unwrap();
        assert_eq!(r.saddle, 25);
    }

    #[test]
    fn immersion_failure_is_reported() {
        let s = surface(Chart::Affine {
            origin: vec![0.0; 3],
            e1: vec![1.0, 0.0, 0.0],
            e2: vec![2.0, 0.0, 0.0],
        });
        assert!(matches!(s.induced_metric([0.0, 0.0]), Err(Error::Immersion { .. })));
    }

    #[test]
    fn csv_header() {
        let s = surface(Chart::FSigma { sigma: 0.01 });
        let g = Grid { x: [-0.05, 0.05], y: [-0.05, 0.05], nx: 3, ny: 3 };
        let r = s.classify_region(&g, [1.0, 0.0]).unwrap();
        assert_eq!(r.strictly_saddle, 9);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,class,detA,detB,m\n"));
        assert_eq!(text.lines().count(), 10);
    }
}
