//! A norm on `R⁴ = {(w, u)}` whose unit sphere contains the patch
//! `dF_σ(S_φ U′)`.
//!
//! `Φ′(w, u)² = ‖w‖² + E(w, u)`, where `‖·‖ = φ(0, ·)` and `E` depends on
//! `τ = |D(w)⁻¹u|`, the linearized base coordinate of the point
//! (`D(w) = [[2ξ, -2η], [η, ξ]]` for `w = (ξ, η)`):
//!
//! * `τ ≤ ρ₁`: the exact gauge, `Φ′(dF_σ(z)v) = φ(εz, v)`;
//! * `ρ₁ < τ < ρ₂`: blend into the model `‖(I + A₂)w‖² - ‖w‖²`, with `A₂` the
//!   quadratic part of the deviation matrix at the linearized coordinate;
//! * `ρ₂ < τ < ρ₃`: logarithmic ramp from the model to `μ|u|²`;
//! * `τ ≥ ρ₃`: `μ|u|²`.

use nalgebra::SVector;
use num_dual::{hessian, jacobian, Dual, Dual2SVec64, DualNum, DualSVec64};
use serde::{Deserialize, Serialize};

use super::fsigma::tangent_map_generic;
use super::metric::{MetricField, MetricSpec};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::norms::HalfSquareJet;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GluedParams {
    pub sigma: f64,
    /// Blow-up scale; the exact zone reproduces `φ(εz, v)`.
    pub epsilon: f64,
    /// Source metric in normalized coordinates.
    pub metric: MetricSpec,
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct GluedNorm {
    params: GluedParams,
    metric: MetricField,
}

/// `6t⁵ - 15t⁴ + 10t³` clamped to `[0, 1]`.
fn smoothstep<D: DualNum<Primitive = f64> + Copy>(t: D) -> D {
    let r = t.re();
    if r <= 0.0 {
        D::from(0.0)
    } else if r >= 1.0 {
        D::from(1.0)
    } else {
        t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
    }
}

/// Gaussian elimination with partial pivoting on the real parts.
fn solve4<D: DualNum<Primitive = f64> + Copy>(mut a: [[D; 4]; 4], mut b: [D; 4]) -> Option<[D; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].re().abs().total_cmp(&a[j][col].re().abs()))?;
        if a[piv][col].re() == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                let t = a[col][k];
                a[row][k] -= f * t;
            }
            let t = b[col];
            b[row] -= f * t;
        }
    }
    let mut x = [D::from(0.0); 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

impl GluedNorm {
    pub fn from_params(params: GluedParams) -> Result<Self> {
        let p = &params;
        if !(p.sigma >= 0.0 && p.sigma < 1.0) {
            return Err(Error::Config("glued norm: sigma must lie in [0, 1)".into()));
        }
        if !(p.epsilon >= 0.0) {
            return Err(Error::Config("glued norm: epsilon must be >= 0".into()));
        }
        if !(p.rho1 > 0.0 && p.rho2 > p.rho1 && p.rho3 > p.rho2 && p.rho3 < 0.5) {
            return Err(Error::Config(
                "glued norm: zone radii must satisfy 0 < rho1 < rho2 < rho3 < 0.5".into(),
            ));
        }
        if !(p.mu > 0.0) {
            return Err(Error::Config("glued norm: mu must be positive".into()));
        }
        let metric = MetricField::from_spec(&p.metric)?;
        Ok(Self { params, metric })
    }

    pub fn params(&self) -> GluedParams {
        self.params.clone()
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    /// Solves `dF_σ(z)v = p` for `(z, v)` near `(D(w)⁻¹u, w)`; the result
    /// carries the derivatives of `p`.
    pub fn inverse_tangent_map<D: DualNum<Primitive = f64> + Copy>(&self, p: &[D; 4]) -> Option<[D; 4]> {
        let s = self.params.sigma;
        let pr = p.map(|c| c.re());
        let xl = lin_coordinate(&[pr[0], pr[1]], &[pr[2], pr[3]])?;
        let mut q = SVector::<f64, 4>::new(xl[0], xl[1], pr[0], pr[1]);
        let target = SVector::<f64, 4>::from(pr);
        let mut ok = false;
        for _ in 0..30 {
            let (g, j) = jacobian(
                |v: SVector<DualSVec64<4>, 4>| SVector::from(tangent_map_generic(s, [v[0], v[1], v[2], v[3]])),
                &q,
            );
            let r = g - target;
            let step = j.lu().solve(&r)?;
            q -= step;
            if step.norm() <= 1e-15 * (1.0 + q.norm()) {
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
        // two Newton steps in the dual algebra make first and second
        // derivatives exact
        let mut x = [D::from(q[0]), D::from(q[1]), D::from(q[2]), D::from(q[3])];
        for _ in 0..2 {
            let g = tangent_map_generic(s, x);
            let mut jm = [[D::from(0.0); 4]; 4];
            for k in 0..4 {
                let mut xd: [Dual<D>; 4] = x.map(Dual::from_re);
                xd[k].eps = D::from(1.0);
                let col = tangent_map_generic(s, xd);
                for (i, c) in col.iter().enumerate() {
                    jm[i][k] = c.eps;
                }
            }
            let r = [g[0] - p[0], g[1] - p[1], g[2] - p[2], g[3] - p[3]];
            let d = solve4(jm, r)?;
            for k in 0..4 {
                x[k] -= d[k];
            }
        }
        Some(x)
    }

    fn base<D: DualNum<Primitive = f64> + Copy>(&self, w: [D; 2]) -> D {
        self.metric.eval_generic([D::from(0.0), D::from(0.0)], w)
    }

    /// `‖(I + A₂(x))w‖² - ‖w‖²`.
    fn model<D: DualNum<Primitive = f64> + Copy>(&self, w: [D; 2], x: [D; 2], base_sq: D) -> D {
        let s = self.params.sigma;
        let s2 = s * s;
        let (a, b) = (x[0], x[1]);
        let a11 = a * a * (3.0 * s + 3.0 * s2) + b * b * s2;
        let a22 = b * b * (3.0 * s + 3.0 * s2) + a * a * s2;
        let a12 = a * b * (2.0 * s2);
        let v = [w[0] + a11 * w[0] + a12 * w[1], w[1] + a12 * w[0] + a22 * w[1]];
        let n = self.base(v);
        n * n - base_sq
    }

    fn exact<D: DualNum<Primitive = f64> + Copy>(&self, p: &[D; 4], base_sq: D) -> Option<D> {
        let zv = self.inverse_tangent_map(p)?;
        let e = self.params.epsilon;
        let n = self.metric.eval_generic([zv[0] * e, zv[1] * e], [zv[2], zv[3]]);
        Some(n * n - base_sq)
    }

    /// Largest `E_model(w, u) / |u|²` over `‖w‖ = 1` at `|D(w)⁻¹u| = tau`.
    /// The outer weight `μ` must exceed it for the ramp to stay convex.
    pub fn model_ceiling(sigma: f64, metric: &MetricField, tau: f64) -> f64 {
        let probe = GluedNorm {
            params: GluedParams {
                sigma,
                epsilon: 0.0,
                metric: MetricSpec::StereographicSphere { radius: 1.0 },
                rho1: 1.0,
                rho2: 2.0,
                rho3: 3.0,
                mu: 1.0,
            },
            metric: metric.clone(),
        };
        let mut best: f64 = 0.0;
        for i in 0..72 {
            let th = std::f64::consts::PI * i as f64 / 72.0;
            let dir = [th.cos(), th.sin()];
            let n = probe.base(dir);
            let w = [dir[0] / n, dir[1] / n];
            for j in 0..72 {
                let ps = std::f64::consts::PI * j as f64 / 72.0;
                let x = [tau * ps.cos(), tau * ps.sin()];
                let u = [2.0 * (w[0] * x[0] - w[1] * x[1]), w[1] * x[0] + w[0] * x[1]];
                let e = probe.model(w, x, 1.0);
                best = best.max(e / (u[0] * u[0] + u[1] * u[1]));
            }
        }
        best
    }

    pub fn eval_generic<D: DualNum<Primitive = f64> + Copy>(&self, p: &[D; 4]) -> D {
        let w = [p[0], p[1]];
        let u = [p[2], p[3]];
        let base = self.base(w);
        let base_sq = base * base;
        let iso = (u[0] * u[0] + u[1] * u[1]) * self.params.mu;
        let Some(x) = lin_coordinate(&w, &u) else {
            return (base_sq + iso).sqrt();
        };
        let tau = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let t = tau.re();
        let GluedParams { rho1, rho2, rho3, .. } = self.params;
        let e = if t >= rho3 {
            iso
        } else if t >= rho2 {
            let b = smoothstep((tau / rho2).ln() / (rho3 / rho2).ln());
            self.model(w, x, base_sq) * (-b + 1.0) + iso * b
        } else {
            let exact = self.exact(p, base_sq);
            match exact {
                Some(ex) if t <= rho1 => ex,
                Some(ex) => {
                    let c = smoothstep((tau - rho1) / (rho2 - rho1));
                    ex * (-c + 1.0) + self.model(w, x, base_sq) * c
                }
                None => D::from(f64::NAN),
            }
        };
        (base_sq + e).sqrt()
    }

    pub fn eval(&self, p: &[f64; 4]) -> f64 {
        if p.iter().all(|c| *c == 0.0) {
            return 0.0;
        }
        self.eval_generic(p)
    }

    pub fn half_square_jet(&self, p: &[f64; 4]) -> HalfSquareJet {
        let x = SVector::<f64, 4>::from(*p);
        let (f, g, h) = hessian(
            |v: SVector<Dual2SVec64<4>, 4>| {
                let n = self.eval_generic(&[v[0], v[1], v[2], v[3]]);
                n * n * 0.5
            },
            &x,
        );
        HalfSquareJet {
            value: f,
            gradient: Vector::from_column_slice(g.as_slice()),
            hessian: Matrix::from_column_slice(4, 4, h.as_slice()),
        }
    }
}

/// `D(w)⁻¹u`, or `None` when `w = 0`.
fn lin_coordinate<D: DualNum<Primitive = f64> + Copy>(w: &[D; 2], u: &[D; 2]) -> Option<[D; 2]> {
    let det = (w[0] * w[0] + w[1] * w[1]) * 2.0;
    if det.re() == 0.0 {
        return None;
    }
    // D = [[2ξ, -2η], [η, ξ]], D⁻¹ = [[ξ, 2η], [-η, 2ξ]] / det
    Some([
        (w[0] * u[0] + w[1] * u[1] * 2.0) / det,
        (-w[1] * u[0] + w[0] * u[1] * 2.0) / det,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::fsigma::tangent_map_generic;
    use crate::norms::NormSpec;

    fn euclid_params() -> GluedParams {
        GluedParams {
            sigma: 0.05,
            epsilon: 0.0,
            metric: MetricSpec::Constant {
                norm: NormSpec::from_norm(&crate::norms::MinkowskiNorm::euclidean(2)).unwrap(),
            },
            rho1: 2e-4,
            rho2: 4e-4,
            rho3: 4e-2,
            mu: 0.1,
        }
    }

    #[test]
    fn patch_points_are_unit() {
        let g = GluedNorm::from_params(euclid_params()).unwrap();
        for &(x, y, th) in &[(1e-4, -5e-5, 0.3), (0.0, 1.5e-4, 2.0), (-1e-4, -1e-4, 4.0)] {
            let p = tangent_map_generic(0.05, [x, y, th.cos(), th.sin()]);
            assert!((g.eval(&p) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_map_roundtrip_with_derivatives() {
        let g = GluedNorm::from_params(euclid_params()).unwrap();
        let p = tangent_map_generic(0.05, [1e-4, 2e-5, 0.6, 0.8]);
        let zv: [f64; 4] = g.inverse_tangent_map::<f64>(&p).unwrap();
        assert!((zv[0] - 1e-4).abs() < 1e-16 && (zv[3] - 0.8).abs() < 1e-15);
        // derivative of the inverse against differences
        let x = SVector::<f64, 4>::from(p);
        let (_, j) = jacobian(
            |v: SVector<DualSVec64<4>, 4>| SVector::from(g.inverse_tangent_map(&[v[0], v[1], v[2], v[3]]).unwrap()),
            &x,
        );
        let h = 1e-7;
        for k in 0..4 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += h;
            pm[k] -= h;
            let a = g.inverse_tangent_map(&pp).unwrap();
            let b = g.inverse_tangent_map(&pm).unwrap();
            for i in 0..4 {
                assert!(((a[i] - b[i]) / (2.0 * h) - j[(i, k)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn norm_is_even_and_homogeneous() {
        let g = GluedNorm::from_params(euclid_params()).unwrap();
        for p in [[0.3f64, -0.2, 1e-5, 2e-5], [0.1, 0.5, 0.3, -0.7], [0.0, 0.0, 1.0, 2.0], [0.9, 0.1, 1e-3, 0.0]] {
            let n = g.eval(&p);
            let m = g.eval(&p.map(|c| -c));
            assert!((n - m).abs() < 1e-14 * n);
            assert!((g.eval(&p.map(|c| 3.0 * c)) - 3.0 * n).abs() < 1e-13 * n);
        }
    }
}

