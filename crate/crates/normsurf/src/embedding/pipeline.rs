//! End-to-end saddle isometric embedding of a planar Finsler patch into a
//! four-dimensional normed space, with every stage checked numerically.

use std::path::Path;
use std::sync::Arc;

use num_dual::Dual64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fsigma::{deviation_matrix, tangent_map_generic};
use super::glued::{GluedNorm, GluedParams};
use super::metric::{inverse2, MetricField, MetricSpec};
use super::parallelogram::{parallelogram_normalize, planar_convexity_constant, support_coefficient_bound, Normalization};
use crate::error::{Error, Result};
use crate::linalg::{gaussian, min_sym_eigenvalue, sample_directions, Vector};
use crate::norms::MinkowskiNorm;
use crate::surfaces::{Chart, Domain, ImmersedSurface, SaddleClass, SaddleVerdict};

const SIGMA_FLOOR: f64 = 1e-6;
const VIOLATION_MARGIN: f64 = 1e-12;

/// The data the patch `Σ_ε = {dF_σ(z)v : |z| ≤ r, φ(εz, v) = 1}` is built
/// from, in parallelogram-normalized coordinates.
#[derive(Clone, Debug)]
pub struct PatchSetup {
    pub metric: MetricField,
    pub sigma: f64,
    pub u_radius: f64,
    /// Blow-up scale; irrelevant for constant metrics.
    pub epsilon: f64,
}

impl PatchSetup {
    /// `φ(εz, ·)`-unit vector in direction `theta`.
    fn unit(&self, z: [f64; 2], theta: f64) -> [f64; 2] {
        let d = [theta.cos(), theta.sin()];
        let n = self.metric.eval([self.epsilon * z[0], self.epsilon * z[1]], d);
        [d[0] / n, d[1] / n]
    }

    fn point(&self, z: [f64; 2], v: [f64; 2]) -> [f64; 4] {
        tangent_map_generic(self.sigma, [z[0], z[1], v[0], v[1]])
    }

    fn effective_epsilon(&self) -> f64 {
        if self.metric.is_constant() {
            0.0
        } else {
            self.epsilon
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreconvexityOptions {
    pub fibers: usize,
    /// Radii of the base-point rings as fractions of the patch radius.
    pub rings: Vec<f64>,
    pub ring_points: usize,
    pub directions: usize,
    /// Extra directions within two degrees of each fiber point.
    pub near_directions: usize,
}

impl Default for PreconvexityOptions {
    fn default() -> Self {
        Self {
            fibers: 64,
            rings: vec![0.1, 0.3, 0.6, 1.0],
            ring_points: 12,
            directions: 360,
            near_directions: 40,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreconvexityReport {
    /// Largest `c` with `L(q) ≤ 1 - c(|z|² + |v - v₀|²)` on the grid.
    pub c_est: f64,
    /// `max L(q) - 1` over sampled `q ≠ p`.
    pub max_violation: f64,
    /// `(x, y, ξ, η)` where `c_est` is attained.
    pub worst: [f64; 4],
    pub worst_fiber_angle: f64,
    pub samples: usize,
    pub passed: bool,
}

/// Supporting functional of the patch at `p = dF(0)v₀`.
///
/// Its `w` part is `ℒ(v₀)` of the norm at the origin. For a varying metric
/// the patch tilts in `u`, which the `u` part cancels to first order.
struct FiberFunctional {
    v0: [f64; 2],
    l0: [f64; 2],
    ell: [f64; 2],
}

fn fiber_functional(setup: &PatchSetup, base: &MinkowskiNorm, theta: f64) -> FiberFunctional {
    let v0 = setup.unit([0.0, 0.0], theta);
    let l = base.legendre(&Vector::from_column_slice(&v0));
    let eps = setup.effective_epsilon();
    let mut g = [0.0; 2];
    if eps != 0.0 {
        for (j, gj) in g.iter_mut().enumerate() {
            let mut x = [Dual64::from(0.0); 2];
            x[j] = Dual64::new(0.0, 1.0);
            *gj = eps * setup.metric.eval_generic(x, [Dual64::from(v0[0]), Dual64::from(v0[1])]).eps;
        }
    }
    // ℓ = g D(v₀)⁻¹ with D⁻¹ = [[ξ, 2η], [-η, 2ξ]] / 2|v₀|²
    let det = 2.0 * (v0[0] * v0[0] + v0[1] * v0[1]);
    let dinv = [[v0[0] / det, 2.0 * v0[1] / det], [-v0[1] / det, 2.0 * v0[0] / det]];
    let ell = [
        g[0] * dinv[0][0] + g[1] * dinv[1][0],
        g[0] * dinv[0][1] + g[1] * dinv[1][1],
    ];
    FiberFunctional {
        v0,
        l0: [l.0[0], l.0[1]],
        ell,
    }
}

fn base_points(radius: f64, opts: &PreconvexityOptions) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0, 0.0]];
    for f in &opts.rings {
        for k in 0..opts.ring_points {
            let a = std::f64::consts::TAU * k as f64 / opts.ring_points as f64;
            out.push([f * radius * a.cos(), f * radius * a.sin()]);
        }
    }
    out
}

/// Checks the patch against the supporting functional of every fiber point
/// over the origin.
pub fn preconvexity_verify(setup: &PatchSetup, opts: &PreconvexityOptions) -> Result<PreconvexityReport> {
    let base = setup.metric.norm_at([0.0, 0.0])?;
    let zs = base_points(setup.u_radius, opts);
    let per_fiber: Vec<(f64, f64, [f64; 4], f64, usize)> = (0..opts.fibers)
        .into_par_iter()
        .map(|k| {
            let theta0 = std::f64::consts::TAU * k as f64 / opts.fibers as f64;
            let fib = fiber_functional(setup, &base, theta0);
            let mut thetas: Vec<f64> = (0..opts.directions)
                .map(|j| std::f64::consts::TAU * j as f64 / opts.directions as f64)
                .collect();
            let near = std::f64::consts::PI / 90.0;
            for j in 0..opts.near_directions {
                let s = (j as f64 + 0.5) / opts.near_directions as f64;
                thetas.push(theta0 + near * (2.0 * s - 1.0));
            }
            let mut best = (f64::INFINITY, f64::NEG_INFINITY, [0.0; 4], theta0, 0usize);
            for z in &zs {
                for &t in &thetas {
                    let v = setup.unit(*z, t);
                    let q = setup.point(*z, v);
                    // 1 - L(q) assembled from small pieces; with L(p) = 1 and
                    // df_σ(z)v = v - A(z)v nothing cancels
                    let a = deviation_matrix(setup.sigma, z[0], z[1]);
                    let av = [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]];
                    let gap = fib.l0[0] * (fib.v0[0] - v[0] + av[0]) + fib.l0[1] * (fib.v0[1] - v[1] + av[1])
                        - fib.ell[0] * q[2]
                        - fib.ell[1] * q[3];
                    let d2 = z[0] * z[0] + z[1] * z[1] + (v[0] - fib.v0[0]).powi(2) + (v[1] - fib.v0[1]).powi(2);
                    if d2 < 1e-24 {
                        continue;
                    }
                    best.4 += 1;
                    best.1 = best.1.max(-gap);
                    let c = gap / d2;
                    if c < best.0 {
                        best.0 = c;
                        best.2 = [z[0], z[1], v[0], v[1]];
                    }
                }
            }
            best
        })
        .collect();
    let mut report = PreconvexityReport {
        c_est: f64::INFINITY,
        max_violation: f64::NEG_INFINITY,
        worst: [0.0; 4],
        worst_fiber_angle: 0.0,
        samples: 0,
        passed: false,
    };
    for (c, viol, worst, theta, n) in per_fiber {
        report.samples += n;
        report.max_violation = report.max_violation.max(viol);
        if c < report.c_est {
            report.c_est = c;
            report.worst = worst;
            report.worst_fiber_angle = theta;
        }
    }
    report.passed = report.max_violation <= VIOLATION_MARGIN && report.c_est > 0.0;
    Ok(report)
}

/// Shape constants of the normalized unit ball and the bounds derived
/// from them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProofConstants {
    pub a0: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub sigma0: f64,
}

impl ProofConstants {
    pub fn estimate(base: &MinkowskiNorm) -> Self {
        let a0 = support_coefficient_bound(base, 720);
        let c0 = planar_convexity_constant(base, 360);
        let c1 = a0 / 18.0;
        let c2 = a0 / 3.0;
        let c3 = c0 * c1 * c1 / 100.0;
        Self {
            a0,
            c0,
            c1,
            c2,
            c3,
            sigma0: (1.0 / (c2 * c2)).min(0.1) / 2.0,
        }
    }

    /// Patch radius for a given `σ`, strictly inside `√(c₃σ/10)`.
    pub fn radius(&self, sigma: f64) -> f64 {
        0.9 * (self.c3 * sigma / 10.0).sqrt()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaSearch {
    pub constants: ProofConstants,
    pub sigma: f64,
    pub u_radius: f64,
    pub bisections: usize,
    pub preconvexity: PreconvexityReport,
}

/// Halves `σ` from the seed value until the patch is pre-convex.
pub fn sigma_search(metric: &MetricField, epsilon: f64, opts: &PreconvexityOptions) -> Result<SigmaSearch> {
    let constants = ProofConstants::estimate(&metric.norm_at([0.0, 0.0])?);
    if !(constants.a0 > 0.0 && constants.c0 > 0.0) {
        return Err(Error::Validation(format!(
            "unit ball is not strictly convex enough: a0 = {:.3e}, c0 = {:.3e}",
            constants.a0, constants.c0
        )));
    }
    let mut sigma = constants.sigma0;
    let mut bisections = 0;
    loop {
        let setup = PatchSetup {
            metric: metric.clone(),
            sigma,
            u_radius: constants.radius(sigma),
            epsilon,
        };
        let rep = preconvexity_verify(&setup, opts)?;
        if rep.passed {
            return Ok(SigmaSearch {
                u_radius: setup.u_radius,
                constants,
                sigma,
                bisections,
                preconvexity: rep,
            });
        }
        sigma /= 2.0;
        bisections += 1;
        if sigma < SIGMA_FLOOR {
            return Err(Error::NoConvergence {
                what: "sigma search",
                iterations: bisections,
                residual: rep.max_violation,
            });
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupReport {
    /// Scales tried, halving each time.
    pub epsilons: Vec<f64>,
    /// Distance from `Σ_ε` to the constant-metric patch `Σ_0`.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub epsilon: f64,
    /// Set when the metric is constant and no rescaling happened.
    pub identity: bool,
}

/// Largest displacement between matching samples of `Σ_ε` and `Σ_0`.
pub fn patch_distance(setup: &PatchSetup) -> f64 {
    let flat = PatchSetup {
        epsilon: 0.0,
        ..setup.clone()
    };
    let opts = PreconvexityOptions::default();
    let mut d: f64 = 0.0;
    for z in base_points(setup.u_radius, &opts) {
        for k in 0..72 {
            let t = std::f64::consts::TAU * k as f64 / 72.0;
            let p = setup.point(z, setup.unit(z, t));
            let q = flat.point(z, flat.unit(z, t));
            let e = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d = d.max(e);
        }
    }
    d
}

/// Shrinks `ε` from `epsilon0` until `Σ_ε` is seen converging to the
/// constant-metric patch and passes the pre-convexity check.
pub fn blowup_reduce(
    metric: &MetricField,
    sigma: f64,
    u_radius: f64,
    epsilon0: f64,
    opts: &PreconvexityOptions,
    max_halvings: usize,
) -> Result<(BlowupReport, PreconvexityReport)> {
    let mut setup = PatchSetup {
        metric: metric.clone(),
        sigma,
        u_radius,
        epsilon: epsilon0,
    };
    if metric.is_constant() {
        let rep = preconvexity_verify(&setup, opts)?;
        let report = BlowupReport {
            epsilons: vec![epsilon0],
            distances: vec![0.0],
            ratios: vec![],
            epsilon: epsilon0,
            identity: true,
        };
        return Ok((report, rep));
    }
    let mut report = BlowupReport {
        epsilons: vec![],
        distances: vec![],
        ratios: vec![],
        epsilon: epsilon0,
        identity: false,
    };
    for k in 0..=max_halvings {
        setup.epsilon = epsilon0 / 2f64.powi(k as i32);
        let d = patch_distance(&setup);
        if let Some(prev) = report.distances.last() {
            report.ratios.push(if *prev > 0.0 { d / prev } else { 0.0 });
        }
        report.epsilons.push(setup.epsilon);
        report.distances.push(d);
        let converging = report.ratios.last().is_some_and(|r| *r <= 0.6);
        if k == 6 && !converging {
            return Err(Error::NoConvergence {
                what: "blow-up patch convergence",
                iterations: 6,
                residual: report.ratios.last().copied().unwrap_or(f64::NAN),
            });
        }
        if converging {
            let rep = preconvexity_verify(&setup, opts)?;
            if rep.passed {
                report.epsilon = setup.epsilon;
                return Ok((report, rep));
            }
        }
    }
    Err(Error::NoConvergence {
        what: "blow-up pre-convexity",
        iterations: max_halvings,
        residual: report.distances.last().copied().unwrap_or(f64::NAN),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub directions: usize,
    /// Smallest Hessian eigenvalue of `½Φ′²` on the unit sphere.
    pub min_eigenvalue: f64,
    pub worst_direction: [f64; 4],
    /// `max |Φ′(p) - 1|` over patch samples.
    pub patch_residual: f64,
    /// `max |Φ′(p) - Φ′(-p)|` over the sweep.
    pub symmetry_residual: f64,
    pub passed: bool,
}

/// Zone radii and outer weight for a patch.
pub fn glued_params(setup: &PatchSetup) -> Result<GluedParams> {
    let r = setup.u_radius;
    let rho1 = 1.1 * r;
    let rho2 = 2.2 * r;
    let rho3 = (100.0 * rho2).min(0.4);
    let ceiling = GluedNorm::model_ceiling(setup.sigma, &setup.metric, rho2)
        .max(GluedNorm::model_ceiling(setup.sigma, &setup.metric, rho3));
    Ok(GluedParams {
        sigma: setup.sigma,
        epsilon: setup.effective_epsilon(),
        metric: setup.metric.to_spec()?,
        rho1,
        rho2,
        rho3,
        mu: 1.5 * ceiling.max(setup.sigma * setup.sigma),
    })
}

/// Builds the four-dimensional norm around the patch and sweeps its
/// convexity over `directions` unit directions, half uniform and half
/// concentrated near the patch across all zones.
pub fn extend_and_synthesize(setup: &PatchSetup, directions: usize, seed: u64) -> Result<(GluedNorm, ConvexityReport)> {
    let params = glued_params(setup)?;
    let glued = GluedNorm::from_params(params.clone())?;
    let mut dirs: Vec<[f64; 4]> = sample_directions(4, directions / 2, seed)
        .iter()
        .map(|d| [d[0], d[1], d[2], d[3]])
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a7c);
    let (lo, hi) = ((setup.u_radius / 100.0).ln(), (1.2 * params.rho3).ln());
    while dirs.len() < directions {
        let tau = rng.random_range(lo..hi).exp();
        let psi = rng.random_range(0.0..std::f64::consts::TAU);
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let z = [tau * psi.cos(), tau * psi.sin()];
        let v = [theta.cos(), theta.sin()];
        let mut p = setup.point(z, v);
        if dirs.len() % 2 == 1 {
            let s = 0.1 * tau;
            p[2] += s * gaussian(&mut rng);
            p[3] += s * gaussian(&mut rng);
        }
        dirs.push(p);
    }
    let results: Vec<(f64, [f64; 4], f64)> = dirs
        .par_iter()
        .map(|d| {
            let phi = glued.eval(d);
            let asym = (phi - glued.eval(&d.map(|c| -c))).abs();
            if !(phi.is_finite() && phi > 0.0) {
                return (f64::NEG_INFINITY, *d, asym);
            }
            let u = d.map(|c| c / phi);
            let ev = min_sym_eigenvalue(&glued.half_square_jet(&u).hessian);
            (if ev.is_nan() { f64::NEG_INFINITY } else { ev }, u, asym)
        })
        .collect();
    let mut report = ConvexityReport {
        directions: dirs.len(),
        min_eigenvalue: f64::INFINITY,
        worst_direction: [0.0; 4],
        patch_residual: 0.0,
        symmetry_residual: 0.0,
        passed: false,
    };
    for (ev, u, asym) in results {
        report.symmetry_residual = report.symmetry_residual.max(asym);
        if ev < report.min_eigenvalue {
            report.min_eigenvalue = ev;
            report.worst_direction = u;
        }
    }
    for p in patch_samples(setup, 72) {
        report.patch_residual = report.patch_residual.max((glued.eval(&p) - 1.0).abs());
    }
    report.passed = report.min_eigenvalue > 0.0 && report.patch_residual < 1e-7;
    Ok((glued, report))
}

/// Patch points over the origin and over rings of base points.
pub fn patch_samples(setup: &PatchSetup, per_fiber: usize) -> Vec<[f64; 4]> {
    let opts = PreconvexityOptions {
        ring_points: 8,
        rings: vec![0.5, 1.0],
        ..PreconvexityOptions::default()
    };
    let mut out = Vec::new();
    for z in base_points(setup.u_radius, &opts) {
        for k in 0..per_fiber {
            let t = std::f64::consts::TAU * k as f64 / per_fiber as f64;
            out.push(setup.point(z, setup.unit(z, t)));
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsometryReport {
    /// `max |Φ′(dF(z)v) - 1|` over unit `v` on the base grid.
    pub max_deviation: f64,
    /// Relative error of the induced metric against the source metric.
    pub induced_metric_error: f64,
    pub samples: usize,
    pub grid_nodes: usize,
    pub strictly_saddle: usize,
    pub verdicts: Vec<SaddleVerdict>,
    pub passed: bool,
}

/// The embedding in source coordinates, `x ↦ εF_σ(Tx/ε)`.
pub fn embedding_chart(setup: &PatchSetup, transform: [[f64; 2]; 2]) -> Chart {
    Chart::ScaledFSigma {
        sigma: setup.sigma,
        transform,
        epsilon: chart_epsilon(setup),
    }
}

fn chart_epsilon(setup: &PatchSetup) -> f64 {
    if setup.effective_epsilon() == 0.0 {
        1.0
    } else {
        setup.epsilon
    }
}

/// Source coordinates of the normalized base point `z`.
fn source_point(setup: &PatchSetup, tinv: &[[f64; 2]; 2], z: [f64; 2]) -> [f64; 2] {
    let e = chart_epsilon(setup);
    [
        e * (tinv[0][0] * z[0] + tinv[0][1] * z[1]),
        e * (tinv[1][0] * z[0] + tinv[1][1] * z[1]),
    ]
}

/// Checks that the chart is an isometry onto the patch and that the
/// immersed surface is strictly saddle at every node of the base grid.
pub fn isometry_certify(
    source: &MetricField,
    setup: &PatchSetup,
    transform: [[f64; 2]; 2],
    glued: &GluedNorm,
    samples: usize,
    grid: usize,
    seed: u64,
) -> Result<IsometryReport> {
    let tinv = inverse2(transform).ok_or_else(|| Error::Domain("singular normalization".into()))?;
    let r = setup.u_radius;
    let half = r / 2f64.sqrt();
    let nodes: Vec<[f64; 2]> = (0..grid * grid)
        .map(|k| {
            let (i, j) = (k % grid, k / grid);
            let c = |n: usize| if grid == 1 { 0.0 } else { -half + 2.0 * half * n as f64 / (grid - 1) as f64 };
            [c(i), c(j)]
        })
        .collect();
    let mut max_deviation: f64 = 0.0;
    for z in &nodes {
        for k in 0..72 {
            let t = std::f64::consts::TAU * k as f64 / 72.0;
            let p = setup.point(*z, setup.unit(*z, t));
            max_deviation = max_deviation.max((glued.eval(&p) - 1.0).abs());
        }
    }
    let e = chart_epsilon(setup);
    let reach = |row: [f64; 2]| 1.01 * e * r * row[0].hypot(row[1]);
    let (hx, hy) = (reach(tinv[0]), reach(tinv[1]));
    let surface = ImmersedSurface::new(
        Arc::new(MinkowskiNorm::glued(glued.clone())),
        embedding_chart(setup, transform),
        Domain {
            x: [-hx, hx],
            y: [-hy, hy],
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<([f64; 2], [f64; 2])> = (0..samples)
        .map(|_| {
            let rad = r * rng.random_range(0.0f64..1.0).sqrt();
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            (source_point(setup, &tinv, [rad * a.cos(), rad * a.sin()]), [t.cos(), t.sin()])
        })
        .collect();
    let errors: Vec<f64> = draws
        .par_iter()
        .map(|(x, v)| {
            let induced = surface.induced_metric(*x)?.eval(&Vector::from_column_slice(v));
            let want = source.eval(*x, *v);
            Ok(((induced - want) / want).abs())
        })
        .collect::<Result<_>>()?;
    let induced_metric_error = errors.into_iter().fold(0.0, f64::max);
    let verdicts: Vec<SaddleVerdict> = nodes
        .par_iter()
        .map(|z| surface.saddle_classify(source_point(setup, &tinv, *z), [1.0, 0.0]))
        .collect::<Result<_>>()?;
    let strictly_saddle = verdicts.iter().filter(|v| v.class == SaddleClass::StrictlySaddle).count();
    Ok(IsometryReport {
        passed: max_deviation < 1e-6 && induced_metric_error < 1e-6 && strictly_saddle == verdicts.len(),
        max_deviation,
        induced_metric_error,
        samples,
        grid_nodes: verdicts.len(),
        strictly_saddle,
        verdicts,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbedOptions {
    pub preconvexity: PreconvexityOptions,
    pub sweep_directions: usize,
    pub isometry_samples: usize,
    pub grid: usize,
    /// Starting blow-up scale for varying metrics.
    pub epsilon0: f64,
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        Self {
            preconvexity: PreconvexityOptions::default(),
            sweep_directions: 10_000,
            isometry_samples: 1000,
            grid: 9,
            epsilon0: 1.0,
            max_halvings: 40,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificates {
    pub sigma_search: SigmaSearch,
    pub blowup: BlowupReport,
    pub preconvexity: PreconvexityReport,
    pub convexity: ConvexityReport,
    pub isometry: IsometryReport,
}

/// Everything needed to rebuild and recheck an embedding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingArtifact {
    pub source_metric: MetricSpec,
    pub sigma: f64,
    pub u_radius: f64,
    pub epsilon: f64,
    pub parallelogram: Normalization,
    /// Sample of `Σ_ε` in `R⁴`.
    pub patch: Vec<[f64; 4]>,
    pub norm: GluedParams,
    pub certificates: Certificates,
    pub passed: bool,
}

impl EmbeddingArtifact {
    pub fn parallelogram_transform(&self) -> [[f64; 2]; 2] {
        self.parallelogram.transform
    }

    pub fn ambient(&self) -> Result<MinkowskiNorm> {
        Ok(MinkowskiNorm::glued(GluedNorm::from_params(self.norm.clone())?))
    }

    pub fn chart(&self) -> Chart {
        Chart::ScaledFSigma {
            sigma: self.sigma,
            transform: self.parallelogram.transform,
            epsilon: if self.norm.epsilon == 0.0 { 1.0 } else { self.epsilon },
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Runs the whole pipeline on a source metric.
pub fn embed(source: &MetricField, opts: &EmbedOptions) -> Result<EmbeddingArtifact> {
    let parallelogram = parallelogram_normalize(&source.at_origin()?)?;
    let tinv = inverse2(parallelogram.transform).ok_or_else(|| Error::Domain("singular normalization".into()))?;
    let metric = source.clone().in_coordinates(tinv);
    let search = sigma_search(&metric, 0.0, &opts.preconvexity)?;
    let (mut blowup, mut preconvexity) = blowup_reduce(
        &metric,
        search.sigma,
        search.u_radius,
        opts.epsilon0,
        &opts.preconvexity,
        opts.max_halvings,
    )?;
    let mut setup = PatchSetup {
        metric,
        sigma: search.sigma,
        u_radius: search.u_radius,
        epsilon: blowup.epsilon,
    };
    let (glued, convexity) = loop {
        let (glued, convexity) = extend_and_synthesize(&setup, opts.sweep_directions, opts.seed)?;
        if convexity.passed || setup.metric.is_constant() || blowup.epsilons.len() > opts.max_halvings {
            break (glued, convexity);
        }
        setup.epsilon /= 2.0;
        let d = patch_distance(&setup);
        if let Some(prev) = blowup.distances.last() {
            blowup.ratios.push(if *prev > 0.0 { d / prev } else { 0.0 });
        }
        blowup.distances.push(d);
        blowup.epsilons.push(setup.epsilon);
        blowup.epsilon = setup.epsilon;
        preconvexity = preconvexity_verify(&setup, &opts.preconvexity)?;
    };
    let isometry = isometry_certify(
        source,
        &setup,
        parallelogram.transform,
        &glued,
        opts.isometry_samples,
        opts.grid,
        opts.seed,
    )?;
    let passed = preconvexity.passed && preconvexity.c_est > 0.0 && convexity.passed && isometry.passed;
    Ok(EmbeddingArtifact {
        source_metric: source.to_spec()?,
        sigma: setup.sigma,
        u_radius: setup.u_radius,
        epsilon: setup.epsilon,
        patch: patch_samples(&setup, 16),
        norm: glued.params(),
        parallelogram,
        certificates: Certificates {
            sigma_search: search,
            blowup,
            preconvexity,
            convexity,
            isometry,
        },
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::norms::{NormSpec, QuarticTerm};

    fn euclid() -> MetricField {
        MetricField::constant(Arc::new(MinkowskiNorm::euclidean(2))).unwrap()
    }

    #[test]
    fn euclidean_patch_is_preconvex() {
        let setup = PatchSetup {
            metric: euclid(),
            sigma: 0.02,
            u_radius: 1e-4 * 0.02,
            epsilon: 1.0,
        };
        let rep = preconvexity_verify(&setup, &PreconvexityOptions::default()).unwrap();
        assert!(rep.passed && rep.c_est > 0.0, "{rep:?}");
    }

    #[test]
    fn flat_fiber_gives_planar_constant() {
        // σ = 0 and only the fiber over the origin: the planar bound
        let opts = PreconvexityOptions {
            rings: vec![],
            ..PreconvexityOptions::default()
        };
        let setup = PatchSetup {
            metric: euclid(),
            sigma: 0.0,
            u_radius: 1e-4,
            epsilon: 1.0,
        };
        let rep = preconvexity_verify(&setup, &opts).unwrap();
        assert!((rep.c_est - 0.5).abs() < 1e-6, "{}", rep.c_est);
    }

    fn quartic_metric(b: [f64; 2]) -> MetricField {
        let q = MinkowskiNorm::quartic_perturbed(
            Matrix::identity(2, 2),
            vec![QuarticTerm::new(1.0, b.to_vec())],
            0.05,
        )
        .unwrap();
        MetricField::constant(Arc::new(q)).unwrap()
    }

    #[test]
    fn reflection_invariance() {
        let run = |m: MetricField| {
            let setup = PatchSetup {
                metric: m,
                sigma: 0.02,
                u_radius: 3e-5,
                epsilon: 1.0,
            };
            preconvexity_verify(&setup, &PreconvexityOptions::default()).unwrap().c_est
        };
        let a = run(quartic_metric([1.0, 0.3]));
        let b = run(quartic_metric([-1.0, 0.3]));
        let c = run(quartic_metric([0.3, 1.0]));
        assert!((a - b).abs() < 1e-9 * a.abs(), "{a} {b}");
        assert!((a - c).abs() < 1e-9 * a.abs(), "{a} {c}");
    }

    #[test]
    fn euclidean_search_and_monotonicity() {
        let opts = PreconvexityOptions::default();
        let s = sigma_search(&euclid(), 0.0, &opts).unwrap();
        assert!(s.constants.a0 >= 1.0 / 2f64.sqrt() - 1e-12);
        assert!(s.bisections <= 12);
        assert!(s.u_radius < (s.constants.c3 * s.sigma / 10.0).sqrt());
        let half = PatchSetup {
            metric: euclid(),
            sigma: s.sigma,
            u_radius: s.u_radius / 2.0,
            epsilon: 0.0,
        };
        assert!(preconvexity_verify(&half, &opts).unwrap().passed);
    }

    #[test]
    fn quartic_ball_search_succeeds() {
        let s = sigma_search(&quartic_metric([1.0, 0.3]), 0.0, &PreconvexityOptions::default()).unwrap();
        assert!(s.preconvexity.c_est > 0.0);
    }

    #[test]
    fn constant_metric_reduction_is_identity() {
        let (b, _) = blowup_reduce(&euclid(), 0.05, 1e-4, 1.0, &PreconvexityOptions::default(), 10).unwrap();
        assert!(b.identity);
    }

    #[test]
    fn sphere_patch_converges_quadratically() {
        let m = MetricField::from_spec(&MetricSpec::StereographicSphere { radius: 1.0 })
            .unwrap()
            .in_coordinates([[0.5, 0.0], [0.0, 0.5]]);
        let (b, rep) = blowup_reduce(&m, 0.05, 1e-4, 1.0, &PreconvexityOptions::default(), 20).unwrap();
        assert!(rep.passed);
        for w in b.ratios.windows(2) {
            assert!(w[1] <= w[0] * 1.01, "{:?}", b.ratios);
        }
        assert!(b.ratios.iter().all(|r| *r <= 0.6));
    }

    #[test]
    fn sphere_patch_end_to_end() {
        let m = MetricField::from_spec(&MetricSpec::StereographicSphere { radius: 1.0 }).unwrap();
        let opts = EmbedOptions {
            sweep_directions: 2000,
            isometry_samples: 200,
            grid: 5,
            ..EmbedOptions::default()
        };
        let a = embed(&m, &opts).unwrap();
        assert!(a.passed, "{:?}", a.certificates.convexity);
        assert_eq!(a.certificates.blowup.epsilons.len(), a.certificates.blowup.distances.len());
        // the bundle rebuilds the same chart and norm
        let back: EmbeddingArtifact = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        let p = a.patch[5];
        let v = Vector::from_column_slice(&p);
        assert_eq!(back.ambient().unwrap().eval(&v), a.ambient().unwrap().eval(&v));
        assert_eq!(back.chart(), a.chart());
    }

    #[test]
    fn spec_of_normalized_metric_roundtrips() {
        let m = MetricField::constant(Arc::new(MinkowskiNorm::euclidean(2))).unwrap();
        let spec = m.in_coordinates([[0.5, 0.0], [0.0, 1.0]]).to_spec().unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("linear"));
        let _ = NormSpec::from_norm(&MinkowskiNorm::euclidean(2)).unwrap();
    }
}
