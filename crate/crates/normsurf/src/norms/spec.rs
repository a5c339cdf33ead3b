//! JSON description of norms: `{"family": ..., "dim": n, "params": {...}}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Family, MinkowskiNorm, RadialTable};
use crate::embedding::glued::{GluedNorm, GluedParams};
use crate::error::{Error, Result};
use crate::linalg::{matrix, rows_of};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuarticTerm {
    pub weight: f64,
    pub direction: Vec<f64>,
}

impl QuarticTerm {
    pub fn new(weight: f64, direction: Vec<f64>) -> Self {
        Self { weight, direction }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSpec {
    pub family: String,
    pub dim: usize,
    #[serde(default)]
    pub params: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    a: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuarticParams {
    a: Vec<Vec<f64>>,
    terms: Vec<QuarticTerm>,
    lambda: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadialParams {
    /// `[angle, radius]` pairs at uniformly spaced angles starting from 0.
    table: Vec<[f64; 2]>,
}

fn params<T: for<'de> Deserialize<'de>>(family: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| Error::Config(format!("bad params for norm family '{family}': {e}")))
}

impl NormSpec {
    pub fn build(&self) -> Result<MinkowskiNorm> {
        let norm = self.build_unchecked()?;
        norm.validate()?;
        Ok(norm)
    }

    /// Builds the norm checking only structural constraints, so that a
    /// convexity failure can be inspected.
    pub fn build_unchecked(&self) -> Result<MinkowskiNorm> {
        let norm = match self.family.as_str() {
            "euclidean" => MinkowskiNorm::euclidean(self.dim),
            "quadratic" => {
                let p: QuadraticParams = params(&self.family, &self.params)?;
                MinkowskiNorm::quadratic(matrix(&p.a)?)?
            }
            "quartic_perturbed" => {
                let p: QuarticParams = params(&self.family, &self.params)?;
                MinkowskiNorm::quartic_perturbed_unchecked(matrix(&p.a)?, p.terms, p.lambda)?
            }
            "radial_sampled" => {
                if self.dim != 2 {
                    return Err(Error::Config(
                        "radial_sampled norms are only supported in dimension 2".into(),
                    ));
                }
                let p: RadialParams = params(&self.family, &self.params)?;
                let n = p.table.len();
                for (k, [angle, _]) in p.table.iter().enumerate() {
                    let expected = std::f64::consts::TAU * k as f64 / n as f64;
                    if (angle - expected).abs() > 1e-9 {
                        return Err(Error::Config(format!(
                            "radial table angles must be uniform from 0: entry {k} has {angle}, expected {expected}"
                        )));
                    }
                }
                let radii = p.table.iter().map(|p| p[1]).collect();
                MinkowskiNorm::radial_sampled(RadialTable::from_uniform_radii(radii)?)?
            }
            "glued" => {
                let p: GluedParams = params(&self.family, &self.params)?;
                MinkowskiNorm::glued(GluedNorm::from_params(p)?)
            }
            other => return Err(Error::Config(format!("unknown norm family '{other}'"))),
        };
        if norm.dim() != self.dim {
            return Err(Error::Config(format!(
                "norm declares dim {} but its parameters have dimension {}",
                self.dim,
                norm.dim()
            )));
        }
        Ok(norm)
    }

    pub fn from_norm(norm: &MinkowskiNorm) -> Result<Self> {
        let (family, params) = match norm.family() {
            Family::Quadratic { a } => (
                "quadratic",
                serde_json::to_value(QuadraticParams { a: rows_of(a) })?,
            ),
            Family::QuarticPerturbed { a, terms, lambda } => (
                "quartic_perturbed",
                serde_json::to_value(QuarticParams {
                    a: rows_of(a),
                    terms: terms.clone(),
                    lambda: *lambda,
                })?,
            ),
            Family::RadialSampled(t) => (
                "radial_sampled",
                serde_json::to_value(RadialParams { table: t.pairs() })?,
            ),
            Family::Glued(g) => ("glued", serde_json::to_value(g.params())?),
            Family::Pullback { .. } => {
                return Err(Error::Validation(
                    "pullback norms are derived objects and have no JSON form".into(),
                ))
            }
        };
        Ok(Self {
            family: family.into(),
            dim: norm.dim(),
            params,
        })
    }
}

impl MinkowskiNorm {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: NormSpec = serde_json::from_str(s)?;
        spec.build()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&NormSpec::from_norm(self)?)?)
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }
}
