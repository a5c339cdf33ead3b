//! Position-dependent planar norms `φ(x, v)`, the source data of the
//! embedding pipeline.

use std::sync::Arc;

use num_dual::DualNum;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::norms::{MinkowskiNorm, NormSpec};

/// JSON form of a [`MetricField`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    /// The same norm at every point.
    Constant { norm: NormSpec },
    /// Round sphere of the given radius in stereographic coordinates,
    /// `φ(x, v) = 2|v| / (1 + |x|²/R²)`.
    StereographicSphere { radius: f64 },
    /// Riemannian `φ(x, v)² = vᵀ(A₀ + x₁A₁ + x₂A₂ + |x|²A₃)v`.
    VaryingQuadratic {
        a0: [[f64; 2]; 2],
        a1: [[f64; 2]; 2],
        a2: [[f64; 2]; 2],
        #[serde(default)]
        a3: [[f64; 2]; 2],
    },
    /// `φ(M⁻¹y, M⁻¹w)` for an inner metric `φ`.
    Linear {
        inner: Box<MetricSpec>,
        /// `M⁻¹`.
        inverse: [[f64; 2]; 2],
    },
}

#[derive(Clone, Debug)]
pub enum MetricField {
    Constant(Arc<MinkowskiNorm>),
    StereographicSphere {
        radius: f64,
    },
    VaryingQuadratic {
        a: [[[f64; 2]; 2]; 4],
    },
    Linear {
        inner: Box<MetricField>,
        inverse: [[f64; 2]; 2],
    },
}

fn symmetric(m: &[[f64; 2]; 2]) -> bool {
    (m[0][1] - m[1][0]).abs() <= 1e-14 * (m[0][1].abs() + m[1][0].abs()).max(1.0)
}

impl MetricField {
    pub fn constant(norm: Arc<MinkowskiNorm>) -> Result<Self> {
        if norm.dim() != 2 {
            return Err(Error::Config("metric field needs a planar norm".into()));
        }
        Ok(MetricField::Constant(norm))
    }

    pub fn from_spec(spec: &MetricSpec) -> Result<Self> {
        Ok(match spec {
            MetricSpec::Constant { norm } => Self::constant(Arc::new(norm.build()?))?,
            MetricSpec::StereographicSphere { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("sphere radius must be positive".into()));
                }
                MetricField::StereographicSphere { radius: *radius }
            }
            MetricSpec::VaryingQuadratic { a0, a1, a2, a3 } => {
                let a = [*a0, *a1, *a2, *a3];
                if !a.iter().all(symmetric) {
                    return Err(Error::Config("metric coefficients must be symmetric".into()));
                }
                MinkowskiNorm::quadratic(Matrix::from_row_slice(2, 2, &[a0[0][0], a0[0][1], a0[1][0], a0[1][1]]))?;
                MetricField::VaryingQuadratic { a }
            }
            MetricSpec::Linear { inner, inverse } => MetricField::Linear {
                inner: Box::new(Self::from_spec(inner)?),
                inverse: *inverse,
            },
        })
    }

    pub fn to_spec(&self) -> Result<MetricSpec> {
        Ok(match self {
            MetricField::Constant(n) => MetricSpec::Constant { norm: NormSpec::from_norm(n)? },
            MetricField::StereographicSphere { radius } => MetricSpec::StereographicSphere { radius: *radius },
            MetricField::VaryingQuadratic { a } => MetricSpec::VaryingQuadratic {
                a0: a[0],
                a1: a[1],
                a2: a[2],
                a3: a[3],
            },
            MetricField::Linear { inner, inverse } => MetricSpec::Linear {
                inner: Box::new(inner.to_spec()?),
                inverse: *inverse,
            },
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_spec(&serde_json::from_str(s)?)
    }

    /// `φ(M⁻¹y, M⁻¹w)`, the field in coordinates `y = Mx`.
    pub fn in_coordinates(self, inverse: [[f64; 2]; 2]) -> Self {
        MetricField::Linear {
            inner: Box::new(self),
            inverse,
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            MetricField::Constant(_) => true,
            MetricField::Linear { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }

    pub fn is_riemannian(&self) -> bool {
        match self {
            MetricField::Constant(n) => matches!(n.family(), crate::norms::Family::Quadratic { .. }),
            MetricField::Linear { inner, .. } => inner.is_riemannian(),
            _ => true,
        }
    }

    pub fn eval_generic<D: DualNum<Primitive = f64> + Copy>(&self, x: [D; 2], v: [D; 2]) -> D {
        match self {
            MetricField::Constant(n) => n.eval_generic(&v),
            MetricField::StereographicSphere { radius } => {
                let r2 = (x[0] * x[0] + x[1] * x[1]) / (radius * radius);
                (v[0] * v[0] + v[1] * v[1]).sqrt() * 2.0 / (r2 + 1.0)
            }
            MetricField::VaryingQuadratic { a } => {
                let w = [D::from(1.0), x[0], x[1], x[0] * x[0] + x[1] * x[1]];
                let mut q = D::from(0.0);
                for (wk, m) in w.iter().zip(a) {
                    let form = v[0] * v[0] * m[0][0] + v[0] * v[1] * (m[0][1] + m[1][0]) + v[1] * v[1] * m[1][1];
                    q += *wk * form;
                }
                q.sqrt()
            }
            MetricField::Linear { inner, inverse: m } => {
                let map = |p: [D; 2]| [p[0] * m[0][0] + p[1] * m[0][1], p[0] * m[1][0] + p[1] * m[1][1]];
                inner.eval_generic(map(x), map(v))
            }
        }
    }

    pub fn eval(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        self.eval_generic(x, v)
    }

    /// The norm `φ(x, ·)` as a [`MinkowskiNorm`].
    pub fn norm_at(&self, x: [f64; 2]) -> Result<MinkowskiNorm> {
        match self {
            MetricField::Constant(n) => Ok((**n).clone()),
            MetricField::StereographicSphere { radius } => {
                let f = 2.0 / (1.0 + (x[0] * x[0] + x[1] * x[1]) / (radius * radius));
                MinkowskiNorm::quadratic(Matrix::identity(2, 2) * (f * f))
            }
            MetricField::VaryingQuadratic { a } => {
                let w = [1.0, x[0], x[1], x[0] * x[0] + x[1] * x[1]];
                let mut m = Matrix::zeros(2, 2);
                for (wk, ak) in w.iter().zip(a) {
                    m += Matrix::from_row_slice(2, 2, &[ak[0][0], ak[0][1], ak[1][0], ak[1][1]]) * *wk;
                }
                MinkowskiNorm::quadratic(m)
            }
            MetricField::Linear { inner, inverse: m } => {
                let y = [m[0][0] * x[0] + m[0][1] * x[1], m[1][0] * x[0] + m[1][1] * x[1]];
                let base = inner.norm_at(y)?;
                match base.family() {
                    crate::norms::Family::Quadratic { a } => {
                        let mm = Matrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
                        MinkowskiNorm::quadratic(mm.transpose() * a * &mm)
                    }
                    _ => MinkowskiNorm::pullback(
                        Arc::new(base),
                        Matrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]),
                    ),
                }
            }
        }
    }

    /// `φ(0, ·)`.
    pub fn at_origin(&self) -> Result<MinkowskiNorm> {
        self.norm_at([0.0, 0.0])
    }

    /// Gauss curvature of a Riemannian field at `x`, from the Brioschi
    /// formula on second differences of the metric coefficients. `None` for
    /// non-Riemannian fields.
    pub fn gauss_curvature(&self, x: [f64; 2]) -> Option<f64> {
        if !self.is_riemannian() {
            return None;
        }
        if self.is_constant() {
            return Some(0.0);
        }
        let coeffs = |p: [f64; 2]| -> Option<[f64; 3]> {
            let e = self.eval(p, [1.0, 0.0]).powi(2);
            let g = self.eval(p, [0.0, 1.0]).powi(2);
            let d = self.eval(p, [1.0, 1.0]).powi(2);
            Some([e, 0.5 * (d - e - g), g])
        };
        let h = 1e-4;
        let at = |dx: f64, dy: f64| coeffs([x[0] + dx, x[1] + dy]);
        let c = at(0.0, 0.0)?;
        let (xp, xm, yp, ym) = (at(h, 0.0)?, at(-h, 0.0)?, at(0.0, h)?, at(0.0, -h)?);
        let (pp, pm, mp, mm) = (at(h, h)?, at(h, -h)?, at(-h, h)?, at(-h, -h)?);
        let d1 = |a: &[f64; 3], b: &[f64; 3], k| (a[k] - b[k]) / (2.0 * h);
        let d2 = |a: &[f64; 3], b: &[f64; 3], k| (a[k] - 2.0 * c[k] + b[k]) / (h * h);
        let (e, f, g) = (c[0], c[1], c[2]);
        let (eu, ev) = (d1(&xp, &xm, 0), d1(&yp, &ym, 0));
        let (fu, fv) = (d1(&xp, &xm, 1), d1(&yp, &ym, 1));
        let (gu, gv) = (d1(&xp, &xm, 2), d1(&yp, &ym, 2));
        let evv = d2(&yp, &ym, 0);
        let guu = d2(&xp, &xm, 2);
        let fuv = (pp[1] - pm[1] - mp[1] + mm[1]) / (4.0 * h * h);
        let m1 = Matrix::from_row_slice(
            3,
            3,
            &[
                -0.5 * evv + fuv - 0.5 * guu,
                0.5 * eu,
                fu - 0.5 * ev,
                fv - 0.5 * gu,
                e,
                f,
                0.5 * gv,
                f,
                g,
            ],
        );
        let m2 = Matrix::from_row_slice(3, 3, &[0.0, 0.5 * ev, 0.5 * gu, 0.5 * ev, e, f, 0.5 * gu, f, g]);
        let det = e * g - f * f;
        Some((m1.determinant() - m2.determinant()) / (det * det))
    }
}

impl Serialize for MetricField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MetricField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = MetricSpec::deserialize(d)?;
        Self::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

/// Matrix inverse of a 2×2 array.
pub fn inverse2(m: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;

    #[test]
    fn sphere_curvature_is_inverse_square_radius() {
        let m = MetricField::StereographicSphere { radius: 2.0 };
        let k = m.gauss_curvature([0.3, -0.2]).unwrap();
        assert!((k - 0.25).abs() < 1e-5, "{k}");
        assert!((m.eval([0.0, 0.0], [1.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn linear_change_matches_norm_at() {
        let m = MetricField::VaryingQuadratic {
            a: [
                [[2.0, 0.3], [0.3, 1.0]],
                [[0.1, 0.0], [0.0, 0.2]],
                [[0.0, 0.05], [0.05, 0.0]],
                [[0.0; 2]; 2],
            ],
        }
        .in_coordinates([[1.0, 0.5], [0.0, 2.0]]);
        let x = [0.2, 0.1];
        let v = [0.7, -0.4];
        let n = m.norm_at(x).unwrap();
        assert!((n.eval(&Vector::from_column_slice(&v)) - m.eval(x, v)).abs() < 1e-14);
    }

    #[test]
    fn spec_roundtrip() {
        let s = r#"{"kind":"stereographic_sphere","radius":1.5}"#;
        let m = MetricField::from_json(s).unwrap();
        let back = serde_json::to_string(&m).unwrap();
        assert_eq!(back, s);
        assert!(MetricField::from_json(r#"{"kind":"stereographic_sphere","radius":1.5,"x":1}"#).is_err());
    }
}
