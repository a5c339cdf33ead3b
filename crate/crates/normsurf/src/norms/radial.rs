//! Planar norms given by a table of radii of the unit circle.
//!
//! The gauge `1/r(θ)` is interpolated by a trigonometric polynomial, so the
//! interpolant is smooth and periodic and its derivatives are exact
//! derivatives of the interpolant. Only even harmonics survive after the
//! table is symmetrized, which makes `Φ(-v) = Φ(v)` hold exactly.

use std::f64::consts::PI;

use num_dual::DualNum;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RadialTable {
    radii: Vec<f64>,
    // (cos, sin) coefficients of harmonic 2k, k = 0..
    even_coeffs: Vec<(f64, f64)>,
}

impl RadialTable {
    /// Builds a table from radii sampled at the uniform angles `2πk/n`.
    pub fn from_uniform_radii(radii: Vec<f64>) -> Result<Self> {
        let n = radii.len();
        if n < 8 || n % 2 != 0 {
            return Err(Error::Config(format!(
                "radial table needs an even number (>= 8) of samples, got {n}"
            )));
        }
        if radii.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::Config("radial table radii must be finite and positive".into()));
        }
        let half = n / 2;
        let sym: Vec<f64> = (0..n)
            .map(|k| 0.5 * (radii[k] + radii[(k + half) % n]))
            .collect();
        let gauge: Vec<f64> = sym.iter().map(|r| 1.0 / r).collect();

        let mut even_coeffs = Vec::with_capacity(half / 2 + 1);
        let nf = n as f64;
        let mut j = 0;
        while j <= half {
            let (mut a, mut b) = (0.0, 0.0);
            for (k, g) in gauge.iter().enumerate() {
                let theta = 2.0 * PI * (k as f64) * (j as f64) / nf;
                a += g * theta.cos();
                b += g * theta.sin();
            }
            let scale = if j == 0 || j == half { 1.0 / nf } else { 2.0 / nf };
            let b = if j == half { 0.0 } else { b * scale };
            even_coeffs.push((a * scale, b));
            j += 2;
        }
        Ok(Self {
            radii: sym,
            even_coeffs,
        })
    }

    /// Samples `radius(θ)` densely enough that held-out mid-angle rays are
    /// reproduced within `target` (relative).
    pub fn from_radius_fn<F>(radius: F, target: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64,
    {
        let mut n = 64;
        loop {
            let radii: Vec<f64> = (0..n)
                .map(|k| radius(2.0 * PI * k as f64 / n as f64))
                .collect();
            let table = Self::from_uniform_radii(radii)?;
            let err = (0..n)
                .map(|k| {
                    let theta = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                    let exact = radius(theta);
                    let got = 1.0 / table.gauge_at(theta);
                    ((got - exact) / exact).abs()
                })
                .fold(0.0, f64::max);
            if err < target {
                return Ok(table);
            }
            if n >= 1 << 14 {
                return Err(Error::NoConvergence {
                    what: "radial table refinement",
                    iterations: n,
                    residual: err,
                });
            }
            n *= 2;
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// `[angle, radius]` pairs of the (symmetrized) table.
    pub fn pairs(&self) -> Vec<[f64; 2]> {
        let n = self.radii.len() as f64;
        self.radii
            .iter()
            .enumerate()
            .map(|(k, r)| [2.0 * PI * k as f64 / n, *r])
            .collect()
    }

    fn gauge_at(&self, theta: f64) -> f64 {
        self.eval_generic(&[theta.cos(), theta.sin()])
    }

    /// Gauge `Φ(v) = |v| ψ(θ)` for any dual-number scalar.
    pub fn eval_generic<D: DualNum<Primitive = f64> + Copy>(&self, v: &[D]) -> D {
        let r = (v[0] * v[0] + v[1] * v[1]).sqrt();
        let c1 = v[0] / r;
        let s1 = v[1] / r;
        let c2 = c1 * c1 - s1 * s1;
        let s2 = c1 * s1 * 2.0;
        let mut ck = D::from(1.0);
        let mut sk = D::from(0.0);
        let mut acc = D::from(0.0);
        for (a, b) in &self.even_coeffs {
            acc += ck * *a + sk * *b;
            let next_c = ck * c2 - sk * s2;
            sk = sk * c2 + ck * s2;
            ck = next_c;
        }
        r * acc
    }
}
