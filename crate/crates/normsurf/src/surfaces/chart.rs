//! Built-in parameterizations `S: U ⊂ R² → R^n`.
//!
//! Each chart is written once over dual numbers; value, Jacobian and second
//! derivatives all come from the same code path.

use nalgebra::SVector;
use num_dual::{hessian, Dual2SVec64, Dual64, DualNum};
use serde::{Deserialize, Serialize};

use crate::embedding::fsigma::f_sigma_generic;
use crate::linalg::Vector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Chart {
    /// `origin + x e1 + y e2`.
    Affine {
        origin: Vec<f64>,
        e1: Vec<f64>,
        e2: Vec<f64>,
    },
    /// Graph of `a x² + b xy + c y²` in `R³`.
    QuadraticGraph { a: f64, b: f64, c: f64 },
    /// Longitude/latitude chart of the round sphere.
    Sphere { radius: f64 },
    /// `(r cos x, r sin x, y)`.
    Cylinder { radius: f64 },
    /// Upper sheet `z = sqrt(c² + a²x² + b²y²)`, asymptotic to a sharp cone.
    Hyperboloid { a: f64, b: f64, c: f64 },
    /// Convex non-quadric cap `z = κ (x² + y² + μ (x⁴ + y⁴))`.
    QuarticGraph { kappa: f64, mu: f64 },
    /// `F_σ` into `R⁴`.
    FSigma { sigma: f64 },
    /// `x ↦ ε F_σ(T x / ε)`.
    ScaledFSigma {
        sigma: f64,
        transform: [[f64; 2]; 2],
        epsilon: f64,
    },
    /// `x ↦ inner(M x + offset)`.
    Reparam {
        inner: Box<Chart>,
        matrix: [[f64; 2]; 2],
        offset: [f64; 2],
    },
}

/// Point, first and second partial derivatives of a chart.
#[derive(Clone, Debug)]
pub struct ChartJet {
    pub point: Vector,
    pub dx: Vector,
    pub dy: Vector,
    pub dxx: Vector,
    pub dxy: Vector,
    pub dyy: Vector,
}

impl ChartJet {
    /// `dS` as an `n × 2` matrix.
    pub fn differential(&self) -> crate::linalg::Matrix {
        crate::linalg::Matrix::from_columns(&[self.dx.clone(), self.dy.clone()])
    }

    pub fn push(&self, v: [f64; 2]) -> Vector {
        &self.dx * v[0] + &self.dy * v[1]
    }

    /// `d²S(u, w)`.
    pub fn second(&self, u: [f64; 2], w: [f64; 2]) -> Vector {
        &self.dxx * (u[0] * w[0]) + &self.dxy * (u[0] * w[1] + u[1] * w[0]) + &self.dyy * (u[1] * w[1])
    }
}

impl Chart {
    pub fn ambient_dim(&self) -> usize {
        match self {
            Chart::Affine { origin, .. } => origin.len(),
            Chart::QuadraticGraph { .. }
            | Chart::Sphere { .. }
            | Chart::Cylinder { .. }
            | Chart::Hyperboloid { .. }
            | Chart::QuarticGraph { .. } => 3,
            Chart::FSigma { .. } | Chart::ScaledFSigma { .. } => 4,
            Chart::Reparam { inner, .. } => inner.ambient_dim(),
        }
    }

    pub fn point_generic<D: DualNum<Primitive = f64> + Copy>(&self, x: D, y: D) -> Vec<D> {
        match self {
            Chart::Affine { origin, e1, e2 } => origin
                .iter()
                .zip(e1.iter().zip(e2))
                .map(|(o, (a, b))| x * *a + y * *b + *o)
                .collect(),
            Chart::QuadraticGraph { a, b, c } => {
                vec![x, y, x * x * *a + x * y * *b + y * y * *c]
            }
            Chart::Sphere { radius } => {
                let cy = y.cos();
                vec![cy * x.cos() * *radius, cy * x.sin() * *radius, y.sin() * *radius]
            }
            Chart::Cylinder { radius } => vec![x.cos() * *radius, x.sin() * *radius, y],
            Chart::Hyperboloid { a, b, c } => {
                let z = (x * x * (a * a) + y * y * (b * b) + c * c).sqrt();
                vec![x, y, z]
            }
            Chart::QuarticGraph { kappa, mu } => {
                let z = (x * x + y * y + (x.powi(4) + y.powi(4)) * *mu) * *kappa;
                vec![x, y, z]
            }
            Chart::FSigma { sigma } => f_sigma_generic(*sigma, x, y).to_vec(),
            Chart::ScaledFSigma {
                sigma,
                transform: t,
                epsilon,
            } => {
                let u = (x * t[0][0] + y * t[0][1]) / *epsilon;
                let w = (x * t[1][0] + y * t[1][1]) / *epsilon;
                f_sigma_generic(*sigma, u, w)
                    .iter()
                    .map(|c| *c * *epsilon)
                    .collect()
            }
            Chart::Reparam {
                inner,
                matrix: m,
                offset,
            } => {
                let u = x * m[0][0] + y * m[0][1] + offset[0];
                let w = x * m[1][0] + y * m[1][1] + offset[1];
                inner.point_generic(u, w)
            }
        }
    }

    pub fn point(&self, x: [f64; 2]) -> Vector {
        Vector::from_vec(self.point_generic(x[0], x[1]))
    }

    /// `dS(x) d`, from a single forward-mode pass.
    pub fn push_forward(&self, x: [f64; 2], d: [f64; 2]) -> Vector {
        let u = Dual64::new(x[0], d[0]);
        let w = Dual64::new(x[1], d[1]);
        Vector::from_iterator(
            self.ambient_dim(),
            self.point_generic(u, w).into_iter().map(|c| c.eps),
        )
    }

    pub fn jet(&self, x: [f64; 2]) -> ChartJet {
        let p = SVector::<f64, 2>::new(x[0], x[1]);
        let comps = hessian(
            |v: SVector<Dual2SVec64<2>, 2>| self.point_generic(v[0], v[1]),
            &p,
        );
        let n = comps.len();
        let mut jet = ChartJet {
            point: Vector::zeros(n),
            dx: Vector::zeros(n),
            dy: Vector::zeros(n),
            dxx: Vector::zeros(n),
            dxy: Vector::zeros(n),
            dyy: Vector::zeros(n),
        };
        for (i, (f, g, h)) in comps.into_iter().enumerate() {
            jet.point[i] = f;
            jet.dx[i] = g[0];
            jet.dy[i] = g[1];
            jet.dxx[i] = h[(0, 0)];
            jet.dxy[i] = h[(0, 1)];
            jet.dyy[i] = h[(1, 1)];
        }
        jet
    }

    /// Central-difference jet with step `h`, for cross-checking.
    pub fn jet_fd(&self, x: [f64; 2], h: f64) -> ChartJet {
        let p = |dx: f64, dy: f64| self.point([x[0] + dx, x[1] + dy]);
        let c = p(0.0, 0.0);
        let (xp, xm, yp, ym) = (p(h, 0.0), p(-h, 0.0), p(0.0, h), p(0.0, -h));
        let (pp, pm, mp, mm) = (p(h, h), p(h, -h), p(-h, h), p(-h, -h));
        ChartJet {
            dx: (&xp - &xm) / (2.0 * h),
            dy: (&yp - &ym) / (2.0 * h),
            dxx: (&xp - &c * 2.0 + &xm) / (h * h),
            dyy: (&yp - &c * 2.0 + &ym) / (h * h),
            dxy: (pp - pm - mp + mm) / (4.0 * h * h),
            point: c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_jet_matches_differences() {
        let c = Chart::Sphere { radius: 1.3 };
        let x = [0.4, -0.2];
        let a = c.jet(x);
        let b = c.jet_fd(x, 1e-4);
        assert!((&a.dx - &b.dx).norm() < 1e-7);
        assert!((&a.dxx - &b.dxx).norm() < 1e-6);
        assert!((&a.dxy - &b.dxy).norm() < 1e-6);
        let pf = c.push_forward(x, [0.3, -2.0]);
        assert!((pf - a.push([0.3, -2.0])).norm() < 1e-15);
    }

    #[test]
    fn affine_has_no_curvature() {
        let c = Chart::Affine {
            origin: vec![1.0, 2.0, 3.0],
            e1: vec![1.0, 0.0, 1.0],
            e2: vec![0.0, 1.0, 0.0],
        };
        let j = c.jet([0.3, 0.7]);
        assert_eq!(j.dxx.norm() + j.dxy.norm() + j.dyy.norm(), 0.0);
        assert_eq!(j.point, Vector::from_vec(vec![1.3, 2.7, 3.3]));
    }

    #[test]
    fn chart_json_roundtrip() {
        let c = Chart::Reparam {
            inner: Box::new(Chart::FSigma { sigma: 0.01 }),
            matrix: [[1.0, 0.5], [0.0, 2.0]],
            offset: [0.1, 0.0],
        };
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Chart>(&s).unwrap(), c);
    }
}
