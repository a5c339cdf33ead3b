//! Unit-speed geodesics on immersed surfaces.
//!
//! A curve `γ = S ∘ c` is a geodesic when `d/dt ℒ(γ̇)` annihilates the
//! tangent plane. In chart coordinates this is the 2×2 system
//! `M c̈ = b` with `M = dSᵀ H dS`, `b = -dSᵀ H d²S(ċ, ċ)` and `H` the half
//! Hessian of the ambient norm at `γ̇`.

use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian, solve2, Vector};
use crate::surfaces::ImmersedSurface;

pub const DEFAULT_DT: f64 = 1e-3;
const MAX_MASS_CONDITION: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub t: f64,
    pub c: [f64; 2],
    pub v: [f64; 2],
    pub a: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    pub step: f64,
    /// `|φ(ċ) - 1|` per sample.
    pub speed_residual: Vec<f64>,
    /// `max_i |⟨K_γ, ∂_i S⟩|` per sample, `K_γ` by finite differences.
    pub tangency_residual: Vec<f64>,
    /// The integration stopped at the domain boundary before reaching `T`.
    pub truncated: bool,
}

/// Chart acceleration `c̈` of the geodesic through `c` with velocity `v`.
pub fn acceleration(surface: &ImmersedSurface, c: [f64; 2], v: [f64; 2]) -> Result<[f64; 2]> {
    let jet = surface.jet(c);
    let gdot = jet.push(v);
    if gdot.iter().all(|x| *x == 0.0) {
        return Err(Error::Domain("zero velocity".into()));
    }
    let h = surface.ambient.half_hessian(&gdot);
    let hx = &h * &jet.dx;
    let hy = &h * &jet.dy;
    let m = [
        [jet.dx.dot(&hx), jet.dx.dot(&hy)],
        [jet.dy.dot(&hx), jet.dy.dot(&hy)],
    ];
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (lo, hi) = (0.5 * tr - disc, 0.5 * tr + disc);
    if !(lo > 0.0) || hi / lo > MAX_MASS_CONDITION {
        return Err(Error::IllConditioned {
            what: "geodesic mass matrix",
            cond: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    let s2 = jet.second(v, v);
    let b = [-s2.dot(&hx), -s2.dot(&hy)];
    solve2(m, b).ok_or(Error::IllConditioned {
        what: "geodesic mass matrix",
        cond: f64::INFINITY,
    })
}

fn add(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * b[0], a[1] + s * b[1]]
}

/// Integrates the geodesic from `x0` in direction `v0` (rescaled to unit
/// speed) for arclength `length` with RK4 steps of at most `dt`.
pub fn shoot(
    surface: &ImmersedSurface,
    x0: [f64; 2],
    v0: [f64; 2],
    length: f64,
    dt: f64,
) -> Result<GeodesicPath> {
    shoot_extended(surface, x0, v0, 0.0, length, dt)
}

/// Like [`shoot`], but also integrates backwards for arclength `back`
/// (rounded up to whole steps), so the path covers `t ∈ [-back, length]`.
pub fn shoot_extended(
    surface: &ImmersedSurface,
    x0: [f64; 2],
    v0: [f64; 2],
    back: f64,
    length: f64,
    dt: f64,
) -> Result<GeodesicPath> {
    if !(length >= 0.0) || !(back >= 0.0) || !(dt > 0.0) {
        return Err(Error::Validation("lengths must be >= 0 and dt > 0".into()));
    }
    if !surface.domain.contains(x0) {
        return Err(Error::Validation(format!(
            "start point ({}, {}) outside the chart domain",
            x0[0], x0[1]
        )));
    }
    let speed = surface.metric_eval(x0, v0);
    if !(speed > 0.0) {
        return Err(Error::Domain("initial velocity must be non-zero".into()));
    }
    let v = [v0[0] / speed, v0[1] / speed];
    let n = ((length / dt) - 1e-9).ceil().max(1.0) as usize;
    let h = if length > 0.0 { length / n as f64 } else { dt };
    let n = if length > 0.0 { n } else { 0 };
    let (forward, trunc_f) = integrate(surface, x0, v, h, n)?;
    let nb = if back > 0.0 { ((back / h) - 1e-9).ceil() as usize } else { 0 };
    let mut samples = Vec::with_capacity(forward.len() + nb);
    let mut truncated = trunc_f;
    if nb > 0 {
        let (backward, trunc_b) = integrate(surface, x0, [-v[0], -v[1]], h, nb)?;
        truncated |= trunc_b;
        samples.extend(backward.iter().skip(1).rev().map(|p| PathSample {
            t: -p.t,
            c: p.c,
            v: [-p.v[0], -p.v[1]],
            a: p.a,
        }));
    }
    samples.extend(forward);
    Ok(GeodesicPath::with_residuals(surface, samples, h, truncated))
}

fn integrate(
    surface: &ImmersedSurface,
    x0: [f64; 2],
    v0: [f64; 2],
    h: f64,
    n: usize,
) -> Result<(Vec<PathSample>, bool)> {
    let (mut c, mut v) = (x0, v0);
    let mut a = acceleration(surface, c, v)?;
    let mut samples = vec![PathSample { t: 0.0, c, v, a }];
    for k in 0..n {
        let k1v = a;
        let k1c = v;
        let c2 = add(c, k1c, 0.5 * h);
        let v2 = add(v, k1v, 0.5 * h);
        let k2v = acceleration(surface, c2, v2)?;
        let c3 = add(c, v2, 0.5 * h);
        let v3 = add(v, k2v, 0.5 * h);
        let k3v = acceleration(surface, c3, v3)?;
        let c4 = add(c, v3, h);
        let v4 = add(v, k3v, h);
        let k4v = acceleration(surface, c4, v4)?;
        let nc = [
            c[0] + h / 6.0 * (k1c[0] + 2.0 * v2[0] + 2.0 * v3[0] + v4[0]),
            c[1] + h / 6.0 * (k1c[1] + 2.0 * v2[1] + 2.0 * v3[1] + v4[1]),
        ];
        let nv = [
            v[0] + h / 6.0 * (k1v[0] + 2.0 * k2v[0] + 2.0 * k3v[0] + k4v[0]),
            v[1] + h / 6.0 * (k1v[1] + 2.0 * k2v[1] + 2.0 * k3v[1] + k4v[1]),
        ];
        if !surface.domain.contains(nc) {
            return Ok((samples, true));
        }
        c = nc;
        v = nv;
        a = acceleration(surface, c, v)?;
        samples.push(PathSample {
            t: (k + 1) as f64 * h,
            c,
            v,
            a,
        });
    }
    Ok((samples, false))
}

impl GeodesicPath {
    fn with_residuals(
        surface: &ImmersedSurface,
        samples: Vec<PathSample>,
        step: f64,
        truncated: bool,
    ) -> Self {
        let jets: Vec<_> = samples.iter().map(|s| surface.jet(s.c)).collect();
        let speed_residual = samples
            .iter()
            .zip(&jets)
            .map(|(s, j)| (surface.ambient.eval(&j.push(s.v)) - 1.0).abs())
            .collect();
        let ls: Vec<Vector> = samples
            .iter()
            .zip(&jets)
            .map(|(s, j)| surface.ambient.legendre(&j.push(s.v)).0)
            .collect();
        let n = ls.len();
        let tangency_residual = if n < 3 {
            vec![0.0; n]
        } else {
            (0..n)
                .map(|i| {
                    let k = if i == 0 {
                        (&ls[1] * 4.0 - &ls[0] * 3.0 - &ls[2]) / (2.0 * step)
                    } else if i == n - 1 {
                        (&ls[n - 1] * 3.0 - &ls[n - 2] * 4.0 + &ls[n - 3]) / (2.0 * step)
                    } else {
                        (&ls[i + 1] - &ls[i - 1]) / (2.0 * step)
                    };
                    k.dot(&jets[i].dx).abs().max(k.dot(&jets[i].dy).abs())
                })
                .collect()
        };
        Self {
            samples,
            step,
            speed_residual,
            tangency_residual,
            truncated,
        }
    }

    /// Arclength actually integrated.
    pub fn duration(&self) -> f64 {
        self.t_end() - self.t_start()
    }

    pub fn t_start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn t_end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn start(&self) -> [f64; 2] {
        self.samples[0].c
    }

    pub fn end(&self) -> [f64; 2] {
        self.samples[self.samples.len() - 1].c
    }

    pub fn max_speed_residual(&self) -> f64 {
        self.speed_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_tangency_residual(&self) -> f64 {
        self.tangency_residual.iter().copied().fold(0.0, f64::max)
    }

    /// Length measured by Simpson's rule on the sampled speeds.
    pub fn length(&self, surface: &ImmersedSurface) -> f64 {
        let speeds: Vec<f64> = self
            .samples
            .iter()
            .map(|s| surface.metric_eval(s.c, s.v))
            .collect();
        let n = speeds.len() - 1;
        if n == 0 {
            return 0.0;
        }
        let h = self.step;
        if n % 2 == 0 {
            let mut acc = speeds[0] + speeds[n];
            for (i, s) in speeds.iter().enumerate().take(n).skip(1) {
                acc += if i % 2 == 1 { 4.0 * s } else { 2.0 * s };
            }
            acc * h / 3.0
        } else {
            // trapezoid on the last interval, Simpson elsewhere
            let mut acc = 0.0;
            if n > 1 {
                acc = speeds[0] + speeds[n - 1];
                for (i, s) in speeds.iter().enumerate().take(n - 1).skip(1) {
                    acc += if i % 2 == 1 { 4.0 * s } else { 2.0 * s };
                }
                acc *= h / 3.0;
            }
            acc + 0.5 * h * (speeds[n - 1] + speeds[n])
        }
    }

    /// Quintic Hermite interpolation of `(c, ċ, c̈)` at arclength `t`.
    pub fn eval(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let n = self.samples.len();
        if n == 1 {
            let s = &self.samples[0];
            return (s.c, s.v, s.a);
        }
        let h = self.step;
        let k = (((t - self.samples[0].t) / h).floor().max(0.0) as usize).min(n - 2);
        let (p, q) = (&self.samples[k], &self.samples[k + 1]);
        let s = (t - p.t) / h;
        let (s2, s3, s4, s5) = (s * s, s * s * s, s.powi(4), s.powi(5));
        let hb = [
            1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
            s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
            0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
            0.5 * s3 - s4 + 0.5 * s5,
            -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
            10.0 * s3 - 15.0 * s4 + 6.0 * s5,
        ];
        let d1 = [
            -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
            1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
            s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
            1.5 * s2 - 4.0 * s3 + 2.5 * s4,
            -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
            30.0 * s2 - 60.0 * s3 + 30.0 * s4,
        ];
        let d2 = [
            -60.0 * s + 180.0 * s2 - 120.0 * s3,
            -36.0 * s + 96.0 * s2 - 60.0 * s3,
            1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3,
            3.0 * s - 12.0 * s2 + 10.0 * s3,
            -24.0 * s + 84.0 * s2 - 60.0 * s3,
            60.0 * s - 180.0 * s2 + 120.0 * s3,
        ];
        let comb = |w: &[f64; 6], i: usize| {
            w[0] * p.c[i]
                + w[1] * h * p.v[i]
                + w[2] * h * h * p.a[i]
                + w[3] * h * h * q.a[i]
                + w[4] * h * q.v[i]
                + w[5] * q.c[i]
        };
        (
            [comb(&hb, 0), comb(&hb, 1)],
            [comb(&d1, 0) / h, comb(&d1, 1) / h],
            [comb(&d2, 0) / (h * h), comb(&d2, 1) / (h * h)],
        )
    }

    /// CSV with columns `t,x,y,xdot,ydot,speed_residual,tangency_residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,y,xdot,ydot,speed_residual,tangency_residual")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(
                w,
                "{:.12e},{:.15e},{:.15e},{:.15e},{:.15e},{:.3e},{:.3e}",
                s.t, s.c[0], s.c[1], s.v[0], s.v[1], self.speed_residual[i], self.tangency_residual[i]
            )?;
        }
        Ok(())
    }
}

const GL3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

fn segment_length_rule(
    surface: &ImmersedSurface,
    p: [f64; 2],
    q: [f64; 2],
    panels: usize,
    rule: &[(f64, f64)],
) -> f64 {
    let d = [q[0] - p[0], q[1] - p[1]];
    let w = 1.0 / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * w;
        for (x, wt) in rule {
            let s = mid + 0.5 * w * x;
            let pt = [p[0] + s * d[0], p[1] + s * d[1]];
            acc += wt * 0.5 * w * surface.ambient.eval(&surface.chart.push_forward(pt, d));
        }
    }
    acc
}

/// Length `∫ φ(ċ)` of a polyline in parameter space, by composite
/// Gauss–Legendre quadrature refined until the relative change is below
/// `1e-9`.
pub fn length(surface: &ImmersedSurface, polyline: &[[f64; 2]]) -> f64 {
    polyline
        .windows(2)
        .map(|w| {
            let mut panels = 1;
            let mut prev = segment_length_rule(surface, w[0], w[1], panels, &GL5);
            loop {
                panels *= 2;
                let next = segment_length_rule(surface, w[0], w[1], panels, &GL5);
                if (next - prev).abs() <= 1e-9 * next.abs() || panels >= 4096 {
                    return next;
                }
                prev = next;
            }
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectOptions {
    pub dt: f64,
    pub bvp_tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for ConnectOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            bvp_tol: 1e-8,
            max_restarts: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectSolution {
    pub angle: f64,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct ConnectResult {
    pub path: GeodesicPath,
    pub length: f64,
    /// Distinct solutions found across restarts, shortest first.
    pub solutions: Vec<ConnectSolution>,
    pub converged_restarts: usize,
    pub multiple: bool,
}

fn unit_dir(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

/// Newton on `(θ, T) ↦ c(T; θ) - x1`; the `T` column of the Jacobian is the
/// end velocity, the `θ` column a forward difference.
fn newton_connect(
    surface: &ImmersedSurface,
    x0: [f64; 2],
    x1: [f64; 2],
    mut theta: f64,
    mut t: f64,
    opts: &ConnectOptions,
) -> Option<(f64, f64, GeodesicPath)> {
    for _ in 0..40 {
        let path = shoot(surface, x0, unit_dir(theta), t, opts.dt).ok()?;
        if path.truncated {
            return None;
        }
        let end = path.samples[path.samples.len() - 1];
        let r = [end.c[0] - x1[0], end.c[1] - x1[1]];
        if r[0].hypot(r[1]) < opts.bvp_tol {
            return Some((theta.rem_euclid(std::f64::consts::TAU), t, path));
        }
        let delta = 1e-7;
        let pd = shoot(surface, x0, unit_dir(theta + delta), t, opts.dt).ok()?;
        let ed = pd.end();
        let jt = [(ed[0] - end.c[0]) / delta, (ed[1] - end.c[1]) / delta];
        let jac = [[jt[0], end.v[0]], [jt[1], end.v[1]]];
        let step = solve2(jac, [-r[0], -r[1]])?;
        let scale = (step[0].abs() / 0.5).max(step[1].abs() / (0.5 * t)).max(1.0);
        theta += step[0] / scale;
        t += step[1] / scale;
        if !(t > 0.0) || !t.is_finite() {
            return None;
        }
    }
    None
}

/// Geodesic from `x0` to `x1` by shooting with random restarts.
pub fn connect(
    surface: &ImmersedSurface,
    x0: [f64; 2],
    x1: [f64; 2],
    opts: &ConnectOptions,
) -> Result<ConnectResult> {
    let d = [x1[0] - x0[0], x1[1] - x0[1]];
    if d == [0.0, 0.0] {
        return Err(Error::Validation("connect needs distinct endpoints".into()));
    }
    let theta0 = d[1].atan2(d[0]);
    let t0 = surface.metric_eval(x0, d);
    let runs: Vec<Option<(f64, f64, GeodesicPath)>> = (0..opts.max_restarts.max(1))
        .into_par_iter()
        .map(|i| {
            let (theta, t) = if i == 0 {
                (theta0, t0)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(i as u64));
                (
                    theta0 + 0.5 * (1.0 + i as f64 / 4.0) * gaussian(&mut rng),
                    t0 * rng.random_range(0.9..1.8),
                )
            };
            newton_connect(surface, x0, x1, theta, t, opts)
        })
        .collect();
    let converged: Vec<_> = runs.into_iter().flatten().collect();
    if converged.is_empty() {
        return Err(Error::NoConvergence {
            what: "connect (no restart reached the target)",
            iterations: opts.max_restarts,
            residual: f64::NAN,
        });
    }
    let mut solutions: Vec<ConnectSolution> = Vec::new();
    let tol = (opts.bvp_tol * 100.0).max(1e-6);
    for (angle, length, _) in &converged {
        let dup = solutions.iter_mut().find(|s| {
            let da = (s.angle - angle).rem_euclid(std::f64::consts::TAU);
            da.min(std::f64::consts::TAU - da) < tol && (s.length - length).abs() < tol
        });
        let sol = ConnectSolution {
            angle: *angle,
            length: *length,
        };
        match dup {
            // keep the best-converged representative of each cluster
            Some(s) if sol.length < s.length => *s = sol,
            Some(_) => {}
            None => solutions.push(sol),
        }
    }
    solutions.sort_by(|a, b| a.length.total_cmp(&b.length));
    let converged_restarts = converged.len();
    let best = converged
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    Ok(ConnectResult {
        length: best.1,
        path: best.2,
        multiple: solutions.len() > 1,
        solutions,
        converged_restarts,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitorOptions {
    pub tube_radius: f64,
    pub n_nodes: usize,
    pub multistarts: usize,
    pub seed: u64,
}

impl Default for CompetitorOptions {
    fn default() -> Self {
        Self {
            tube_radius: 0.01,
            n_nodes: 33,
            multistarts: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompetitorResult {
    pub geodesic_length: f64,
    pub best_length: f64,
    /// `geodesic_length - best_length`; positive means the geodesic lost.
    pub improvement: f64,
    pub best_polyline: Vec<[f64; 2]>,
}

struct Search<'a> {
    surface: &'a ImmersedSurface,
    refs: Vec<[f64; 2]>,
    tube: f64,
}

impl Search<'_> {
    fn seg(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        segment_length_rule(self.surface, a, b, 1, &GL3)
    }

    fn total(&self, nodes: &[[f64; 2]]) -> f64 {
        nodes.windows(2).map(|w| self.seg(w[0], w[1])).sum()
    }

    fn clamp(&self, k: usize, p: [f64; 2]) -> [f64; 2] {
        let r = self.refs[k];
        let d = [p[0] - r[0], p[1] - r[1]];
        let n = d[0].hypot(d[1]);
        let p = if n > self.tube {
            [r[0] + d[0] * self.tube / n, r[1] + d[1] * self.tube / n]
        } else {
            p
        };
        if self.surface.domain.contains(p) {
            p
        } else {
            r
        }
    }

    /// Pattern search over interior nodes; each move re-evaluates only the
    /// two adjacent segments.
    fn descend(&self, nodes: &mut [[f64; 2]]) {
        let n = nodes.len();
        let mut step = self.tube * 0.25;
        while step > self.tube * 1e-7 {
            for _sweep in 0..8 {
                let mut improved = false;
                for k in 1..n - 1 {
                    let (prev, next) = (nodes[k - 1], nodes[k + 1]);
                    let local = |p: [f64; 2]| self.seg(prev, p) + self.seg(p, next);
                    let mut best = local(nodes[k]);
                    let mid = [0.5 * (prev[0] + next[0]), 0.5 * (prev[1] + next[1])];
                    let towards = [mid[0] - nodes[k][0], mid[1] - nodes[k][1]];
                    let moves = [
                        [step, 0.0],
                        [-step, 0.0],
                        [0.0, step],
                        [0.0, -step],
                        [0.5 * towards[0], 0.5 * towards[1]],
                    ];
                    for m in moves {
                        let cand = self.clamp(k, [nodes[k][0] + m[0], nodes[k][1] + m[1]]);
                        let v = local(cand);
                        if v < best {
                            best = v;
                            nodes[k] = cand;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            step *= 0.5;
        }
    }
}

/// Searches for polylines with the geodesic's endpoints, interior nodes
/// confined to discs of radius `tube_radius` around the geodesic, that are
/// shorter than the geodesic.
pub fn competitor_search(
    surface: &ImmersedSurface,
    path: &GeodesicPath,
    opts: &CompetitorOptions,
) -> Result<CompetitorResult> {
    if opts.n_nodes < 3 {
        return Err(Error::Validation("competitor search needs at least 3 nodes".into()));
    }
    let (t0, total) = (path.t_start(), path.duration());
    let refs: Vec<[f64; 2]> = (0..opts.n_nodes)
        .map(|k| path.eval(t0 + total * k as f64 / (opts.n_nodes - 1) as f64).0)
        .collect();
    let search = Search {
        surface,
        refs: refs.clone(),
        tube: opts.tube_radius,
    };
    let geodesic_length = path.length(surface);
    let results: Vec<(f64, Vec<[f64; 2]>)> = (0..opts.multistarts.max(1))
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x9e37_79b9 * (i as u64 + 1)));
            let mut nodes = refs.clone();
            if i > 0 {
                let amp = opts.tube_radius * rng.random_range(0.05..1.0);
                for k in 1..nodes.len() - 1 {
                    let r = amp * rng.random_range(0.0f64..1.0).sqrt();
                    let a = rng.random_range(0.0..std::f64::consts::TAU);
                    nodes[k] = search.clamp(k, [refs[k][0] + r * a.cos(), refs[k][1] + r * a.sin()]);
                }
            }
            search.descend(&mut nodes);
            let mut best = (search.total(&nodes), nodes);
            // annealing: shrinking random kicks, keep improvements
            for round in 0..3 {
                let amp = opts.tube_radius * 0.1 * 0.3f64.powi(round);
                let mut trial = best.1.clone();
                for k in 1..trial.len() - 1 {
                    let kick = [amp * gaussian(&mut rng), amp * gaussian(&mut rng)];
                    trial[k] = search.clamp(k, [trial[k][0] + kick[0], trial[k][1] + kick[1]]);
                }
                search.descend(&mut trial);
                let v = search.total(&trial);
                if v < best.0 {
                    best = (v, trial);
                }
            }
            best
        })
        .collect();
    let (_, best_polyline) = results
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one start");
    let best_length = length(surface, &best_polyline);
    Ok(CompetitorResult {
        geodesic_length,
        best_length,
        improvement: geodesic_length - best_length,
        best_polyline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::MinkowskiNorm;
    use crate::surfaces::{Chart, Domain};
    use std::sync::Arc;

    fn sphere() -> ImmersedSurface {
        ImmersedSurface::new(
            Arc::new(MinkowskiNorm::euclidean(3)),
            Chart::Sphere { radius: 1.0 },
            Domain {
                x: [-4.0, 4.0],
                y: [-1.4, 1.4],
            },
        )
        .unwrap()
    }

    fn plane(norm: MinkowskiNorm) -> ImmersedSurface {
        ImmersedSurface::new(
            Arc::new(norm),
            Chart::Affine {
                origin: vec![0.0; 3],
                e1: vec![1.0, 0.0, 0.0],
                e2: vec![0.0, 1.0, 0.0],
            },
            Domain::square(5.0),
        )
        .unwrap()
    }

    #[test]
    fn plane_geodesic_is_straight() {
        let s = plane(MinkowskiNorm::euclidean(3));
        let p = shoot(&s, [0.1, 0.2], [3.0, 4.0], 1.0, 1e-2).unwrap();
        let e = p.end();
        assert!((e[0] - 0.7).abs() < 1e-13 && (e[1] - 1.0).abs() < 1e-13);
        assert!(!p.truncated);
    }

    #[test]
    fn great_circle() {
        let s = sphere();
        let a: f64 = 0.7;
        let p = shoot(&s, [0.0, 0.0], [a.cos(), a.sin()], 1.0, 1e-3).unwrap();
        let got = s.point(p.end());
        let exact = Vector::from_vec(vec![1f64.cos(), 1f64.sin() * a.cos(), 1f64.sin() * a.sin()]);
        assert!((got - exact).norm() < 1e-6);
        assert!(p.max_speed_residual() < 1e-7);
        assert!(p.max_tangency_residual() < 1e-5);
    }

    #[test]
    fn hermite_interpolation_hits_samples() {
        let s = sphere();
        let p = shoot(&s, [0.0, 0.1], [1.0, 0.3], 0.5, 1e-2).unwrap();
        let k = 17;
        let (c, v, a) = p.eval(p.samples[k].t);
        for i in 0..2 {
            assert!((c[i] - p.samples[k].c[i]).abs() < 1e-13);
            assert!((v[i] - p.samples[k].v[i]).abs() < 1e-12);
            assert!((a[i] - p.samples[k].a[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn quarter_circle_length() {
        let s = sphere();
        let poly: Vec<[f64; 2]> = (0..=64)
            .map(|k| [std::f64::consts::FRAC_PI_2 * k as f64 / 64.0, 0.0])
            .collect();
        assert!((length(&s, &poly) - std::f64::consts::FRAC_PI_2).abs() < 1e-8);
        let rev: Vec<_> = poly.iter().rev().copied().collect();
        assert!((length(&s, &poly) - length(&s, &rev)).abs() < 1e-14);
    }

    #[test]
    fn connect_on_plane_is_segment() {
        let s = plane(MinkowskiNorm::euclidean(3));
        let r = connect(&s, [0.0, 0.0], [0.3, 0.4], &ConnectOptions::default()).unwrap();
        assert!((r.length - 0.5).abs() < 1e-8);
        assert!(!r.multiple);
    }

    #[test]
    fn extended_shot_is_reversible() {
        let s = sphere();
        let p = shoot_extended(&s, [0.2, 0.1], [1.0, 0.5], 0.3, 0.6, 1e-3).unwrap();
        assert!((p.t_start() + 0.3).abs() < 1e-12 && (p.t_end() - 0.6).abs() < 1e-12);
        let (c, v, _) = p.eval(0.0);
        assert!((c[0] - 0.2).abs() < 1e-14 && (c[1] - 0.1).abs() < 1e-14);
        let back = shoot(&s, p.end(), [-p.samples.last().unwrap().v[0], -p.samples.last().unwrap().v[1]], 0.9, 1e-3).unwrap();
        let e = back.end();
        let first = p.samples[0].c;
        assert!((e[0] - first[0]).abs() < 1e-6 && (e[1] - first[1]).abs() < 1e-6);
        assert!(v[0] > 0.0);
    }

    #[test]
    fn truncation_at_boundary() {
        let s = plane(MinkowskiNorm::euclidean(3));
        let p = shoot(&s, [4.9, 0.0], [1.0, 0.0], 1.0, 1e-2).unwrap();
        assert!(p.truncated);
    }
}
