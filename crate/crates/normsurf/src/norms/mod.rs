//! Smooth strictly convex norms on `R^n` and their Legendre data.
//!
//! Every norm exposes the half square `e(v) = ½Φ(v)²` together with its
//! gradient (the Legendre transform `ℒ(v)`) and Hessian. Inversion of `ℒ`
//! and the dual norm go through a damped Newton iteration on
//! `e(v) - ⟨L, v⟩`.

mod radial;
mod spec;

use std::sync::Arc;

use nalgebra::SVector;
use num_dual::{hessian, Dual2SVec64, DualNum};

pub use radial::RadialTable;
pub use spec::{NormSpec, QuarticTerm};

use crate::embedding::glued::GluedNorm;
use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, sample_directions, solve, Matrix, Vector};

/// A linear functional, kept apart from vectors so pairings stay explicit.
#[derive(Clone, Debug, PartialEq)]
pub struct Covector(pub Vector);

impl Covector {
    pub fn from_slice(xs: &[f64]) -> Self {
        Covector(Vector::from_column_slice(xs))
    }

    pub fn pair(&self, v: &Vector) -> f64 {
        self.0.dot(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }
}

/// Value, gradient and Hessian of `½Φ²` at a point.
#[derive(Clone, Debug)]
pub struct HalfSquareJet {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

#[derive(Clone, Debug)]
pub enum Family {
    /// `Φ(v)² = vᵀAv`.
    Quadratic { a: Matrix },
    /// `Φ(v)² = vᵀAv + λ P(v) / vᵀAv` with `P(v) = Σ w_k ⟨b_k, v⟩⁴`.
    QuarticPerturbed {
        a: Matrix,
        terms: Vec<QuarticTerm>,
        lambda: f64,
    },
    /// Planar norm interpolated from a table of unit-circle radii.
    RadialSampled(RadialTable),
    /// `Φ(v) = base(Mv)` for an injective linear map `M`.
    Pullback { base: Arc<MinkowskiNorm>, map: Matrix },
    /// Four-dimensional norm synthesized around an embedded patch.
    Glued(Arc<GluedNorm>),
}

#[derive(Clone, Debug)]
pub struct MinkowskiNorm {
    dim: usize,
    family: Family,
}

const NEWTON_MAX_ITER: usize = 100;
pub const SWEEP_DIRECTIONS_2D: usize = 360;
pub const SWEEP_DIRECTIONS_ND: usize = 2000;

impl MinkowskiNorm {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            dim,
            family: Family::Quadratic {
                a: Matrix::identity(dim, dim),
            },
        }
    }

    pub fn quadratic(a: Matrix) -> Result<Self> {
        check_spd(&a)?;
        Ok(Self {
            dim: a.nrows(),
            family: Family::Quadratic { a },
        })
    }

    pub fn quartic_perturbed(a: Matrix, terms: Vec<QuarticTerm>, lambda: f64) -> Result<Self> {
        let norm = Self::quartic_perturbed_unchecked(a, terms, lambda)?;
        norm.validate()?;
        Ok(norm)
    }

    /// Like [`Self::quartic_perturbed`] without the convexity sweep, for
    /// diagnosing parameters that break convexity.
    pub fn quartic_perturbed_unchecked(a: Matrix, terms: Vec<QuarticTerm>, lambda: f64) -> Result<Self> {
        check_spd(&a)?;
        let dim = a.nrows();
        if !lambda.is_finite() {
            return Err(Error::Config("lambda must be finite".into()));
        }
        for t in &terms {
            if t.direction.len() != dim || !t.weight.is_finite() {
                return Err(Error::Config(format!(
                    "quartic term direction must have length {dim} and a finite weight"
                )));
            }
        }
        let norm = Self {
            dim,
            family: Family::QuarticPerturbed { a, terms, lambda },
        };
        Ok(norm)
    }

    pub fn radial_sampled(table: RadialTable) -> Result<Self> {
        let norm = Self {
            dim: 2,
            family: Family::RadialSampled(table),
        };
        norm.validate()?;
        Ok(norm)
    }

    /// `v ↦ base(Mv)`; `M` must have full column rank.
    pub fn pullback(base: Arc<MinkowskiNorm>, map: Matrix) -> Result<Self> {
        if map.nrows() != base.dim {
            return Err(Error::Config(format!(
                "pullback map has {} rows, base norm has dimension {}",
                map.nrows(),
                base.dim
            )));
        }
        let gram = map.transpose() * &map;
        if min_sym_eigenvalue(&gram) <= 1e-24 * gram.norm().max(1.0) {
            return Err(Error::Config("pullback map is not injective".into()));
        }
        Ok(Self {
            dim: map.ncols(),
            family: Family::Pullback { base, map },
        })
    }

    pub fn glued(inner: GluedNorm) -> Self {
        Self {
            dim: 4,
            family: Family::Glued(Arc::new(inner)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    /// Sweeps directions and rejects the norm if the Hessian of `½Φ²` is not
    /// positive definite everywhere sampled.
    pub fn validate(&self) -> Result<()> {
        let (min_eig, dir) = self.convexity_sweep(if self.dim == 2 {
            SWEEP_DIRECTIONS_2D
        } else {
            SWEEP_DIRECTIONS_ND
        });
        if !(min_eig > 0.0) {
            return Err(Error::Config(format!(
                "norm is not strictly convex: Hessian of the half square has eigenvalue {min_eig:.3e} in direction {:?}",
                dir.as_slice()
            )));
        }
        Ok(())
    }

    /// Smallest Hessian eigenvalue of `½Φ²` over unit-norm sample directions.
    pub fn convexity_sweep(&self, count: usize) -> (f64, Vector) {
        let mut worst = (f64::INFINITY, Vector::zeros(self.dim));
        for d in sample_directions(self.dim, count, 0x5eed) {
            let phi = self.eval(&d);
            if !(phi > 0.0) || !phi.is_finite() {
                return (f64::NEG_INFINITY, d);
            }
            let u = &d / phi;
            let ev = min_sym_eigenvalue(&self.half_square_jet(&u).hessian);
            if ev < worst.0 || ev.is_nan() {
                worst = (ev, u);
            }
        }
        worst
    }

    fn check_dim(&self, n: usize) {
        assert_eq!(n, self.dim, "dimension mismatch: norm has dimension {}", self.dim);
    }

    pub fn eval(&self, v: &Vector) -> f64 {
        self.check_dim(v.len());
        match &self.family {
            Family::Quadratic { a } => v.dot(&(a * v)).max(0.0).sqrt(),
            Family::QuarticPerturbed { a, terms, lambda } => {
                let q = v.dot(&(a * v));
                if q <= 0.0 {
                    return 0.0;
                }
                let p: f64 = terms
                    .iter()
                    .map(|t| t.weight * dot_slice(&t.direction, v).powi(4))
                    .sum();
                (q + lambda * p / q).max(0.0).sqrt()
            }
            Family::RadialSampled(t) => {
                if v[0] == 0.0 && v[1] == 0.0 {
                    0.0
                } else {
                    t.eval_generic(&[v[0], v[1]])
                }
            }
            Family::Pullback { base, map } => base.eval(&(map * v)),
            Family::Glued(g) => g.eval(&[v[0], v[1], v[2], v[3]]),
        }
    }

    /// `Φ` evaluated on dual numbers, for automatic differentiation through
    /// compositions with the norm.
    pub fn eval_generic<D: DualNum<Primitive = f64> + Copy>(&self, v: &[D]) -> D {
        self.check_dim(v.len());
        match &self.family {
            Family::Quadratic { a } => quad_form(a, v).sqrt(),
            Family::QuarticPerturbed { a, terms, lambda } => {
                let q = quad_form(a, v);
                let mut p = D::from(0.0);
                for t in terms {
                    let mut s = D::from(0.0);
                    for (b, x) in t.direction.iter().zip(v) {
                        s += *x * *b;
                    }
                    p += s.powi(4) * t.weight;
                }
                (q + p * *lambda / q).sqrt()
            }
            Family::RadialSampled(t) => t.eval_generic(v),
            Family::Pullback { base, map } => {
                let w: Vec<D> = (0..map.nrows())
                    .map(|i| {
                        let mut s = D::from(0.0);
                        for (j, x) in v.iter().enumerate() {
                            s += *x * map[(i, j)];
                        }
                        s
                    })
                    .collect();
                base.eval_generic(&w)
            }
            Family::Glued(g) => g.eval_generic(&[v[0], v[1], v[2], v[3]]),
        }
    }

    /// `½Φ²` with gradient and Hessian. Undefined at the origin.
    pub fn half_square_jet(&self, v: &Vector) -> HalfSquareJet {
        self.check_dim(v.len());
        match &self.family {
            Family::Quadratic { a } => {
                let av = a * v;
                HalfSquareJet {
                    value: 0.5 * v.dot(&av),
                    gradient: av,
                    hessian: a.clone(),
                }
            }
            Family::QuarticPerturbed { a, terms, lambda } => quartic_jet(a, terms, *lambda, v),
            Family::RadialSampled(t) => {
                let x = SVector::<f64, 2>::new(v[0], v[1]);
                let (f, g, h) = hessian(
                    |w: SVector<Dual2SVec64<2>, 2>| {
                        let phi = t.eval_generic(&[w[0], w[1]]);
                        phi * phi * 0.5
                    },
                    &x,
                );
                HalfSquareJet {
                    value: f,
                    gradient: Vector::from_column_slice(g.as_slice()),
                    hessian: Matrix::from_column_slice(2, 2, h.as_slice()),
                }
            }
            Family::Pullback { base, map } => {
                let j = base.half_square_jet(&(map * v));
                HalfSquareJet {
                    value: j.value,
                    gradient: map.transpose() * j.gradient,
                    hessian: map.transpose() * j.hessian * map,
                }
            }
            Family::Glued(g) => g.half_square_jet(&[v[0], v[1], v[2], v[3]]),
        }
    }

    /// `ℒ(v) = d(½Φ²)(v)`.
    pub fn legendre(&self, v: &Vector) -> Covector {
        Covector(self.half_square_jet(v).gradient)
    }

    /// `½ d²(Φ²)(v)`, symmetric positive definite away from the origin.
    pub fn half_hessian(&self, v: &Vector) -> Matrix {
        self.half_square_jet(v).hessian
    }

    /// Solves `ℒ(v) = L` for `v`.
    pub fn legendre_inverse(&self, l: &Covector) -> Result<Vector> {
        self.check_dim(l.dim());
        let lnorm = l.0.norm();
        if lnorm == 0.0 {
            return Err(Error::Domain("legendre inverse of the zero covector".into()));
        }
        if let Family::Quadratic { a } = &self.family {
            return solve(a, &l.0);
        }
        // ℒ is 1-homogeneous, so work with the unit covector and rescale
        let target = &l.0 / lnorm;
        let h0 = self.half_hessian(&target);
        let mut v = solve(&h0, &target).unwrap_or_else(|_| target.clone());
        let psi = |w: &Vector, j: &HalfSquareJet| j.value - target.dot(w);
        let mut jet = self.half_square_jet(&v);
        let tol = 1e-14;
        for _ in 0..NEWTON_MAX_ITER {
            let grad = &jet.gradient - &target;
            if grad.norm() <= tol {
                return Ok(v * lnorm);
            }
            let step = match solve(&jet.hessian, &grad) {
                Ok(s) => -s,
                Err(_) => -grad.clone(),
            };
            if step.norm() <= 1e-15 * v.norm() {
                return Ok(v * lnorm);
            }
            let slope = grad.dot(&step);
            let f0 = psi(&v, &jet);
            let mut alpha = 1.0;
            loop {
                let trial = &v + &step * alpha;
                if trial.norm() > 0.0 {
                    let tj = self.half_square_jet(&trial);
                    let ft = psi(&trial, &tj);
                    // near the minimum ψ is flat to round-off, so a drop in
                    // the gradient residual also counts as progress
                    let tr = (&tj.gradient - &target).norm();
                    if ft <= f0 + 1e-4 * alpha * slope || tr < (1.0 - 1e-4 * alpha) * grad.norm() || alpha < 1e-12 {
                        v = trial;
                        jet = tj;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    return Err(Error::NoConvergence {
                        what: "legendre inverse line search",
                        iterations: NEWTON_MAX_ITER,
                        residual: grad.norm(),
                    });
                }
            }
        }
        let residual = (&jet.gradient - &target).norm();
        if residual < 1e-11 {
            return Ok(v * lnorm);
        }
        Err(Error::NoConvergence {
            what: "legendre inverse",
            iterations: NEWTON_MAX_ITER,
            residual,
        })
    }

    /// Dual norm `Φ*(L) = sup_{Φ(v)=1} L(v)`.
    pub fn dual_eval(&self, l: &Covector) -> Result<f64> {
        if l.0.iter().all(|x| *x == 0.0) {
            return Ok(0.0);
        }
        let v = self.legendre_inverse(l)?;
        Ok(self.eval(&v))
    }

    /// The unit vector where `L` attains `Φ*(L)`.
    pub fn dual_maximizer(&self, l: &Covector) -> Result<(f64, Vector)> {
        let v = self.legendre_inverse(l)?;
        let phi = self.eval(&v);
        Ok((phi, v / phi))
    }
}

fn check_spd(a: &Matrix) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Config("norm matrix must be square and non-empty".into()));
    }
    if (a - a.transpose()).amax() > 1e-12 * a.amax().max(1.0) {
        return Err(Error::Config("norm matrix must be symmetric".into()));
    }
    let ev = min_sym_eigenvalue(a);
    if !(ev > 0.0) {
        return Err(Error::Config(format!(
            "norm matrix must be positive definite, smallest eigenvalue {ev:.3e}"
        )));
    }
    Ok(())
}

fn dot_slice(b: &[f64], v: &Vector) -> f64 {
    b.iter().zip(v.iter()).map(|(x, y)| x * y).sum()
}

fn quad_form<D: DualNum<Primitive = f64> + Copy>(a: &Matrix, v: &[D]) -> D {
    let mut q = D::from(0.0);
    for i in 0..v.len() {
        for j in 0..v.len() {
            q += v[i] * v[j] * a[(i, j)];
        }
    }
    q
}

fn quartic_jet(a: &Matrix, terms: &[QuarticTerm], lambda: f64, v: &Vector) -> HalfSquareJet {
    let n = v.len();
    let av = a * v;
    let q = v.dot(&av);
    let mut p = 0.0;
    let mut dp = Vector::zeros(n);
    let mut d2p = Matrix::zeros(n, n);
    for t in terms {
        let b = Vector::from_column_slice(&t.direction);
        let s = b.dot(v);
        p += t.weight * s.powi(4);
        dp += &b * (4.0 * t.weight * s.powi(3));
        d2p += &b * b.transpose() * (12.0 * t.weight * s * s);
    }
    let dq = &av * 2.0;
    let d2q = a * 2.0;
    let r = p / q;
    let dr = &dp / q - &dq * (p / (q * q));
    let d2r = &d2p / q - (&dp * dq.transpose() + &dq * dp.transpose()) / (q * q)
        + (&dq * dq.transpose() * (2.0 / q.powi(3)) - &d2q / (q * q)) * p;
    HalfSquareJet {
        value: 0.5 * (q + lambda * r),
        gradient: av + dr * (0.5 * lambda),
        hessian: a + d2r * (0.5 * lambda),
    }
}
