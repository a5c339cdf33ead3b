//! Implicit calibrator of a geodesic and the `(t, s)` coordinates built
//! from it.
//!
//! For a unit-speed geodesic `γ` on a surface `S`, `h(x)` is the parameter
//! `t` near the projection of `x` with
//! `⟨ℒ(γ̇_S(t)), S(x) - γ_S(t)⟩ = 0`. The `s`-lines of the coordinates are
//! level sets of `h`, the `t`-lines are trajectories of
//! `V̂ = ℒ_φ⁻¹(dh) / dh(ℒ_φ⁻¹(dh))`, and `ρ = Φ²(r'_t) = 1/φ*(dh)²`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesics::{competitor_search, shoot, shoot_extended, CompetitorOptions, GeodesicPath, DEFAULT_DT};
use crate::linalg::{solve2, Vector};
use crate::norms::Covector;
use crate::surfaces::ImmersedSurface;

const H_TOL: f64 = 1e-13;
const LEVEL_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibratorOptions {
    /// Tube half-width in `s`; defaults to `0.05 · length`.
    pub s_max: Option<f64>,
    pub n_t: usize,
    pub n_s: usize,
    pub dt: f64,
}

impl Default for CalibratorOptions {
    fn default() -> Self {
        Self {
            s_max: None,
            n_t: 21,
            n_s: 11,
            dt: DEFAULT_DT,
        }
    }
}

/// Base curve data at one parameter value.
#[derive(Clone, Debug)]
pub struct BasePoint {
    pub c: [f64; 2],
    pub point: Vector,
    pub velocity: Vector,
    pub acceleration: Vector,
    /// `ℒ(γ̇_S)`.
    pub l: Vector,
    /// `K = d/dt ℒ(γ̇_S)`.
    pub k: Vector,
}

#[derive(Clone, Debug)]
pub struct CalibratorField {
    pub surface: ImmersedSurface,
    /// The geodesic on `[0, length]`.
    pub base_path: GeodesicPath,
    /// The same geodesic extended beyond `[0, length]` on both sides.
    pub path: GeodesicPath,
    pub length: f64,
    pub s_max: f64,
    pub t_ref: f64,
    pub opts: CalibratorOptions,
    seeds: Vec<(f64, Vector)>,
}

impl CalibratorField {
    /// Shoots the geodesic of the given length from `x0` in direction `v0`
    /// and prepares the implicit function.
    pub fn new(
        surface: ImmersedSurface,
        x0: [f64; 2],
        v0: [f64; 2],
        length: f64,
        opts: CalibratorOptions,
    ) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::Validation("geodesic length must be positive".into()));
        }
        let margin = 0.25 * length;
        let path = shoot_extended(&surface, x0, v0, margin, length + margin, opts.dt)?;
        if path.truncated {
            return Err(Error::Validation(
                "geodesic leaves the chart domain before the requested length".into(),
            ));
        }
        check_embedded(&path)?;
        let base_path = shoot(&surface, x0, v0, length, opts.dt)?;
        let s_max = opts.s_max.unwrap_or(0.05 * length);
        let seeds = path
            .samples
            .iter()
            .map(|s| (s.t, surface.point(s.c)))
            .collect();
        Ok(Self {
            surface,
            base_path,
            path,
            length,
            s_max,
            t_ref: 0.5 * length,
            opts,
            seeds,
        })
    }

    pub fn base(&self, t: f64) -> BasePoint {
        let (c, cd, cdd) = self.path.eval(t);
        let jet = self.surface.jet(c);
        let velocity = jet.push(cd);
        let acceleration = jet.push(cdd) + jet.second(cd, cd);
        let hj = self.surface.ambient.half_square_jet(&velocity);
        let k = &hj.hessian * &acceleration;
        BasePoint {
            c,
            point: jet.point,
            velocity,
            acceleration,
            l: hj.gradient,
            k,
        }
    }

    fn t_bounds(&self) -> (f64, f64) {
        (self.path.t_start(), self.path.t_end())
    }

    /// Parameter of the nearest base sample, used to seed Newton.
    fn seed_t(&self, p: &Vector) -> f64 {
        self.seeds
            .iter()
            .map(|(t, q)| (*t, (q - p).norm_squared()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(t, _)| t)
            .unwrap_or(self.t_ref)
    }

    pub fn h_eval(&self, x: [f64; 2]) -> Result<f64> {
        self.h_eval_from(x, None)
    }

    /// Newton on `R(t) = ⟨ℒ(γ̇_S(t)), S(x) - γ_S(t)⟩` with
    /// `R'(t) = ⟨K(t), S(x) - γ_S(t)⟩ - 1`.
    pub fn h_eval_from(&self, x: [f64; 2], hint: Option<f64>) -> Result<f64> {
        let p = self.surface.point(x);
        let (lo, hi) = self.t_bounds();
        let mut t = hint.unwrap_or_else(|| self.seed_t(&p));
        for _ in 0..50 {
            let b = self.base(t);
            let d = &p - &b.point;
            let r = b.l.dot(&d);
            let dr = b.k.dot(&d) - 1.0;
            if dr.abs() < 1e-3 {
                return Err(Error::OutOfTube { x: x[0], y: x[1] });
            }
            let step = r / dr;
            t -= step;
            if !(t >= lo && t <= hi) {
                return Err(Error::OutOfTube { x: x[0], y: x[1] });
            }
            if step.abs() < H_TOL {
                return Ok(t);
            }
        }
        Err(Error::NoConvergence {
            what: "calibrator implicit solve",
            iterations: 50,
            residual: f64::NAN,
        })
    }

    /// `dh(x)` in chart coordinates, by implicit differentiation.
    pub fn dh_eval(&self, x: [f64; 2]) -> Result<(f64, Covector)> {
        self.dh_eval_from(x, None)
    }

    pub fn dh_eval_from(&self, x: [f64; 2], hint: Option<f64>) -> Result<(f64, Covector)> {
        let t = self.h_eval_from(x, hint)?;
        let b = self.base(t);
        let jet = self.surface.jet(x);
        let denom = 1.0 - b.k.dot(&(&jet.point - &b.point));
        Ok((
            t,
            Covector::from_slice(&[b.l.dot(&jet.dx) / denom, b.l.dot(&jet.dy) / denom]),
        ))
    }

    /// `φ*_x(dh(x))`.
    pub fn phi_star_dh(&self, x: [f64; 2]) -> Result<f64> {
        let (_, dh) = self.dh_eval(x)?;
        self.surface.induced_metric(x)?.dual_eval(&dh)
    }

    /// `ρ = 1 / φ*(dh)²` at a chart point.
    pub fn rho_at_point(&self, x: [f64; 2]) -> Result<f64> {
        let d = self.phi_star_dh(x)?;
        Ok(1.0 / (d * d))
    }

    /// `V̂(x)`, the steepest-ascent direction of `h` scaled to `dh(V̂) = 1`.
    pub fn unit_gradient(&self, x: [f64; 2], hint: Option<f64>) -> Result<(f64, [f64; 2])> {
        let (t, dh) = self.dh_eval_from(x, hint)?;
        if dh.0.norm() == 0.0 {
            return Err(Error::Domain("dh vanishes".into()));
        }
        let v = self.surface.induced_metric(x)?.legendre_inverse(&dh)?;
        let scale = dh.pair(&v);
        Ok((t, [v[0] / scale, v[1] / scale]))
    }

    /// Unit tangent of the level set of `h` through `x`, oriented so that
    /// `(V̂, w)` is positively oriented.
    fn level_direction(&self, x: [f64; 2], hint: Option<f64>) -> Result<[f64; 2]> {
        let (_, dh) = self.dh_eval_from(x, hint)?;
        let w = [-dh.0[1], dh.0[0]];
        let n = self.surface.metric_eval(x, w);
        if !(n > 0.0) {
            return Err(Error::Domain("dh vanishes".into()));
        }
        Ok([w[0] / n, w[1] / n])
    }

    /// Pulls `x` back onto `{h = t}` along `V̂`.
    fn project_to_level(&self, mut x: [f64; 2], t: f64) -> Result<[f64; 2]> {
        for _ in 0..3 {
            let (ht, v) = self.unit_gradient(x, Some(t))?;
            let e = ht - t;
            x = [x[0] - e * v[0], x[1] - e * v[1]];
            if e.abs() < 1e-14 {
                break;
            }
        }
        Ok(x)
    }

    /// Point on the reference level set `{h = t_ref}` at induced arclength
    /// `s` from the geodesic. Uses a fixed number of steps so the result
    /// is smooth in `s`.
    pub fn reference_point(&self, s: f64) -> Result<[f64; 2]> {
        let mut x = self.base(self.t_ref).c;
        if s == 0.0 {
            return Ok(x);
        }
        let h = s / LEVEL_STEPS as f64;
        let t = Some(self.t_ref);
        for _ in 0..LEVEL_STEPS {
            let k1 = self.level_direction(x, t)?;
            let k2 = self.level_direction([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], t)?;
            let k3 = self.level_direction([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], t)?;
            let k4 = self.level_direction([x[0] + h * k3[0], x[1] + h * k3[1]], t)?;
            x = [
                x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            ];
            x = self.project_to_level(x, self.t_ref)?;
        }
        Ok(x)
    }

    /// `r(t, s)` for every `t` in `ts` (sorted ascending), following the
    /// `V̂`-trajectory through `reference_point(s)`.
    pub fn t_line(&self, s: f64, ts: &[f64]) -> Result<Vec<[f64; 2]>> {
        let start = self.reference_point(s)?;
        let max_step = self.length / 200.0;
        let mut out = vec![[f64::NAN; 2]; ts.len()];
        let split = ts.partition_point(|t| *t < self.t_ref);
        for (range, dir) in [((split..ts.len()).collect::<Vec<_>>(), 1.0), ((0..split).rev().collect(), -1.0)] {
            let (mut x, mut t) = (start, self.t_ref);
            for i in range {
                let target = ts[i];
                let span = target - t;
                debug_assert!(span * dir >= 0.0);
                let n = (span.abs() / max_step).ceil().max(1.0) as usize;
                let h = span / n as f64;
                for _ in 0..n {
                    x = self.flow_step(x, t, h)?;
                    t += h;
                    x = self.project_to_level(x, t)?;
                }
                t = target;
                out[i] = x;
            }
        }
        Ok(out)
    }

    fn flow_step(&self, x: [f64; 2], t: f64, h: f64) -> Result<[f64; 2]> {
        let f = |p: [f64; 2], tt: f64| self.unit_gradient(p, Some(tt)).map(|r| r.1);
        let k1 = f(x, t)?;
        let k2 = f([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]], t + 0.5 * h)?;
        let k3 = f([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]], t + 0.5 * h)?;
        let k4 = f([x[0] + h * k3[0], x[1] + h * k3[1]], t + h)?;
        Ok([
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ])
    }

    pub fn t_nodes(&self, n_t: usize) -> Vec<f64> {
        let n = n_t.max(2);
        (0..n).map(|i| self.length * i as f64 / (n - 1) as f64).collect()
    }

    pub fn s_nodes(&self, n_s: usize) -> Vec<f64> {
        let n = n_s.max(2);
        (0..n)
            .map(|j| -self.s_max + 2.0 * self.s_max * j as f64 / (n - 1) as f64)
            .collect()
    }

    /// The `(t, s)` grid over `[0, length] × [-s_max, s_max]`.
    pub fn special_coordinates(&self) -> Result<SpecialGrid> {
        let ts = self.t_nodes(self.opts.n_t);
        let ss = self.s_nodes(self.opts.n_s);
        let points = ss
            .par_iter()
            .map(|s| self.t_line(*s, &ts))
            .collect::<Result<Vec<_>>>()?;
        let rho = points
            .par_iter()
            .map(|line| line.iter().map(|x| self.rho_at_point(*x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let mut level_residual: f64 = 0.0;
        for line in &points {
            for (x, t) in line.iter().zip(&ts) {
                level_residual = level_residual.max((self.h_eval_from(*x, Some(*t))? - t).abs());
            }
        }
        let zero = ss.iter().position(|s| *s == 0.0);
        let base_residual = zero.map_or(0.0, |j| {
            points[j]
                .iter()
                .zip(&ts)
                .map(|(x, t)| {
                    let c = self.base(*t).c;
                    (x[0] - c[0]).hypot(x[1] - c[1])
                })
                .fold(0.0, f64::max)
        });
        Ok(SpecialGrid {
            t: ts,
            s: ss,
            points,
            rho,
            level_residual,
            base_residual,
        })
    }

    /// Finite-difference `ρ'_s(t, 0)` and Richardson-extrapolated
    /// `ρ''_ss(t, 0)` at every `t` node.
    pub fn verify_rho(&self) -> Result<RhoReport> {
        let ts = self.t_nodes(self.opts.n_t);
        let h1 = self.s_max / 50.0;
        let h2 = self.s_max / 10.0;
        let offsets = [0.0, h1, -h1, h2, -h2, 0.5 * h2, -0.5 * h2];
        let lines = offsets
            .par_iter()
            .map(|s| {
                self.t_line(*s, &ts).and_then(|line| {
                    line.iter().map(|x| self.rho_at_point(*x)).collect::<Result<Vec<_>>>()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rows = Vec::with_capacity(ts.len());
        for (i, t) in ts.iter().enumerate() {
            let r = |k: usize| lines[k][i];
            let rho_s = (r(1) - r(2)) / (2.0 * h1);
            let d_h = (r(3) - 2.0 * r(0) + r(4)) / (h2 * h2);
            let d_half = (r(5) - 2.0 * r(0) + r(6)) / (0.25 * h2 * h2);
            let rho_ss = (4.0 * d_half - d_h) / 3.0;
            rows.push(RhoRow {
                t: *t,
                rho0: r(0),
                rho_s,
                rho_ss,
            });
        }
        Ok(RhoReport {
            rho_s_max: rows.iter().map(|r| r.rho_s.abs()).fold(0.0, f64::max),
            rho_ss_min: rows.iter().map(|r| r.rho_ss).fold(f64::INFINITY, f64::min),
            rho0_deviation: rows.iter().map(|r| (r.rho0 - 1.0).abs()).fold(0.0, f64::max),
            rows,
        })
    }

    /// Ambient `R(t, s) = S(r(t, s))` on a `(2m+1)²` stencil around
    /// `(t0, 0)` with spacing `(dt, ds)`.
    fn ambient_stencil(&self, t0: f64, dt: f64, ds: f64, m: i32) -> Result<Vec<Vec<Vector>>> {
        let ts: Vec<f64> = (-m..=m).map(|i| t0 + i as f64 * dt).collect();
        (-m..=m)
            .into_par_iter()
            .map(|j| {
                let line = self.t_line(j as f64 * ds, &ts)?;
                Ok(line.iter().map(|x| self.surface.point(*x)).collect())
            })
            .collect()
    }

    /// Independent evaluations of `½ρ''_ss(t0, 0)`: finite differences of
    /// `ρ`, the second-fundamental-form expression and the
    /// `Q(v'_s, v'_s) + L(v''_ss)` expansion, plus `⟨L, v'_s⟩`.
    pub fn identity_check(&self, t0: f64) -> Result<IdentityCheck> {
        let hs = self.s_max / 10.0;
        let ht = hs;
        let g = self.ambient_stencil(t0, ht, hs, 2)?;
        // g[j][i] = R(t0 + (i-2) ht, (j-2) hs)
        let at = |i: usize, j: usize| &g[j][i];
        let d_t = |j: usize| (at(3, j) - at(1, j)) / (2.0 * ht);
        let r_tt = (at(3, 2) - at(2, 2) * 2.0 + at(1, 2)) / (ht * ht);
        let r_ss = (at(2, 3) - at(2, 2) * 2.0 + at(2, 1)) / (hs * hs);
        let r_ts = (at(3, 3) - at(3, 1) - at(1, 3) + at(1, 1)) / (4.0 * ht * hs);
        let v_ss = (d_t(3) - d_t(2) * 2.0 + d_t(1)) / (hs * hs);

        let b = self.base(t0);
        let jet = self.surface.ambient.half_square_jet(&b.velocity);
        let q = &jet.hessian;
        let qf = |a: &Vector, c: &Vector| a.dot(&(q * c));
        let x0 = b.c;
        let sj = self.surface.jet(x0);
        let normal = q_normal_along(q, &sj.dx, &sj.dy, &b.acceleration);
        let second_form = qf(&r_ts, &r_ts) - qf(&r_tt, &normal) * qf(&r_ss, &normal);
        let expansion = qf(&r_ts, &r_ts) + jet.gradient.dot(&v_ss);

        let rho = |s: f64| -> Result<f64> {
            let line = self.t_line(s, &[t0])?;
            self.rho_at_point(line[0])
        };
        let r0 = rho(0.0)?;
        let d_h = (rho(hs)? - 2.0 * r0 + rho(-hs)?) / (hs * hs);
        let d_half = (rho(0.5 * hs)? - 2.0 * r0 + rho(-0.5 * hs)?) / (0.25 * hs * hs);
        let half_rho_ss = 0.5 * (4.0 * d_half - d_h) / 3.0;
        Ok(IdentityCheck {
            t0,
            half_rho_ss,
            second_form,
            expansion,
            l_dot_v_s: b.l.dot(&r_ts),
        })
    }

    /// Evaluates `g = (1 - σ s²) h` on the tube grid for a logarithmic sweep
    /// of `σ` and reports `max φ*(dg)` for each.
    pub fn calibrate_correct(&self, sigmas: &[f64]) -> Result<CorrectionReport> {
        let ts = self.t_nodes(self.opts.n_t);
        let ss = self.s_nodes(self.opts.n_s);
        let ds = self.s_max / 50.0;
        // per node: chart point, h, dh, ds covector, induced metric
        let nodes = ss
            .par_iter()
            .map(|s| -> Result<Vec<CorrectionNode>> {
                let mid = self.t_line(*s, &ts)?;
                let plus = self.t_line(s + ds, &ts)?;
                let minus = self.t_line(s - ds, &ts)?;
                mid.iter()
                    .zip(plus.iter().zip(&minus))
                    .zip(&ts)
                    .map(|((x, (p, m)), t)| {
                        let (h, dh) = self.dh_eval_from(*x, Some(*t))?;
                        let (_, rt) = self.unit_gradient(*x, Some(*t))?;
                        let rs = [(p[0] - m[0]) / (2.0 * ds), (p[1] - m[1]) / (2.0 * ds)];
                        // rows of the inverse of [r_t r_s] are dt and ds
                        let e1 = solve2([[rt[0], rs[0]], [rt[1], rs[1]]], [1.0, 0.0])
                            .ok_or(Error::Domain("degenerate (t, s) coordinates".into()))?;
                        let e2 = solve2([[rt[0], rs[0]], [rt[1], rs[1]]], [0.0, 1.0])
                            .ok_or(Error::Domain("degenerate (t, s) coordinates".into()))?;
                        // J⁻¹ = [[e1[0], e2[0]], [e1[1], e2[1]]]; second row is ds
                        let ds_cov = [e1[1], e2[1]];
                        Ok(CorrectionNode {
                            x: *x,
                            s: *s,
                            h,
                            dh: [dh.0[0], dh.0[1]],
                            ds: ds_cov,
                        })
                    })
                    .collect()
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect::<Vec<_>>();
        let metrics = nodes
            .iter()
            .map(|n| self.surface.induced_metric(n.x))
            .collect::<Result<Vec<_>>>()?;
        let phi_star_dh_max = nodes
            .iter()
            .zip(&metrics)
            .map(|(n, m)| m.dual_eval(&Covector::from_slice(&n.dh)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let sweep = sigmas
            .par_iter()
            .map(|sigma| -> Result<SigmaResult> {
                let mut worst: f64 = 0.0;
                for (n, m) in nodes.iter().zip(&metrics) {
                    let damp = 1.0 - sigma * n.s * n.s;
                    let corr = 2.0 * sigma * n.s * n.h;
                    let dg = Covector::from_slice(&[
                        damp * n.dh[0] - corr * n.ds[0],
                        damp * n.dh[1] - corr * n.ds[1],
                    ]);
                    worst = worst.max(m.dual_eval(&dg)?);
                }
                Ok(SigmaResult {
                    sigma: *sigma,
                    phi_star_dg_max: worst,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let witness = sweep.iter().find(|r| r.phi_star_dg_max <= 1.0 + 1e-9);
        let best = sweep
            .iter()
            .map(|r| r.phi_star_dg_max)
            .fold(f64::INFINITY, f64::min);
        Ok(CorrectionReport {
            sigma_witness: witness.map(|w| w.sigma),
            phi_star_dg_max: witness.map_or(best, |w| w.phi_star_dg_max),
            phi_star_dh_max,
            sweep,
        })
    }
}

/// Summary written by the `calibrate` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub rho_s_max: f64,
    pub rho_ss_min: f64,
    pub sigma_witness: Option<f64>,
    pub phi_star_dg_max: f64,
    /// Best competitor length minus geodesic length; negative means a
    /// shorter path was found.
    pub competitor_gap: f64,
}

impl CalibrationReport {
    /// The findings agree with minimality: `ρ` passes, a witness exists and
    /// no competitor wins by more than `1e-6`.
    pub fn certifies(&self, fd_tol: f64) -> bool {
        self.rho_s_max < fd_tol
            && self.rho_ss_min > -fd_tol
            && self.sigma_witness.is_some()
            && self.competitor_gap >= -1e-6
    }
}

/// Runs `verify_rho`, the `σ` sweep and a competitor search.
pub fn calibrate(
    field: &CalibratorField,
    competitor: &CompetitorOptions,
) -> Result<(CalibrationReport, RhoReport, CorrectionReport)> {
    let rho = field.verify_rho()?;
    let corr = field.calibrate_correct(&default_sigma_sweep())?;
    let comp = competitor_search(&field.surface, &field.base_path, competitor)?;
    Ok((
        CalibrationReport {
            rho_s_max: rho.rho_s_max,
            rho_ss_min: rho.rho_ss_min,
            sigma_witness: corr.sigma_witness,
            phi_star_dg_max: corr.phi_star_dg_max,
            competitor_gap: comp.best_length - comp.geodesic_length,
        },
        rho,
        corr,
    ))
}

/// 25 log-spaced values in `[1e-4, 1]`.
pub fn default_sigma_sweep() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 24.0)).collect()
}

/// `Q`-unit normal, `Q`-orthogonal to `span(a, b)`, along the normal part
/// of `w` (or along any normal direction when `w` is tangent).
fn q_normal_along(q: &crate::linalg::Matrix, a: &Vector, b: &Vector, w: &Vector) -> Vector {
    let ip = |x: &Vector, y: &Vector| x.dot(&(q * y));
    let e1 = a / ip(a, a).sqrt();
    let b2 = b - &e1 * ip(&e1, b);
    let e2 = &b2 / ip(&b2, &b2).sqrt();
    let project = |v: &Vector| v - &e1 * ip(&e1, v) - &e2 * ip(&e2, v);
    let mut n = project(w);
    if ip(&n, &n).sqrt() <= 1e-12 * ip(w, w).sqrt().max(1e-300) {
        let dim = a.len();
        n = (0..dim)
            .map(|i| {
                let mut e = Vector::zeros(dim);
                e[i] = 1.0;
                project(&e)
            })
            .max_by(|x, y| ip(x, x).total_cmp(&ip(y, y)))
            .expect("non-empty");
    }
    &n / ip(&n, &n).sqrt()
}

/// Rejects base curves whose chart image crosses itself.
fn check_embedded(path: &GeodesicPath) -> Result<()> {
    let stride = (path.samples.len() / 400).max(1);
    let pts: Vec<[f64; 2]> = path.samples.iter().step_by(stride).map(|s| s.c).collect();
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    for i in 0..pts.len().saturating_sub(1) {
        for j in i + 2..pts.len().saturating_sub(1) {
            let (p, q, r, s) = (pts[i], pts[i + 1], pts[j], pts[j + 1]);
            let d1 = cross(p, q, r);
            let d2 = cross(p, q, s);
            let d3 = cross(r, s, p);
            let d4 = cross(r, s, q);
            if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
                return Err(Error::Validation(
                    "geodesic is not embedded in the chart".into(),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct CorrectionNode {
    x: [f64; 2],
    s: f64,
    h: f64,
    dh: [f64; 2],
    ds: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecialGrid {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `points[j][i] = r(t_i, s_j)` in chart coordinates.
    pub points: Vec<Vec<[f64; 2]>>,
    pub rho: Vec<Vec<f64>>,
    /// `max |h(r(t, s)) - t|`.
    pub level_residual: f64,
    /// `max |r(t, 0) - γ(t)|` in chart coordinates.
    pub base_residual: f64,
}

impl SpecialGrid {
    /// CSV with columns `t,s,x,y,rho`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,s,x,y,rho")?;
        for (j, s) in self.s.iter().enumerate() {
            for (i, t) in self.t.iter().enumerate() {
                let p = self.points[j][i];
                writeln!(w, "{t:.12e},{s:.12e},{:.15e},{:.15e},{:.15e}", p[0], p[1], self.rho[j][i])?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoRow {
    pub t: f64,
    pub rho0: f64,
    pub rho_s: f64,
    pub rho_ss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhoReport {
    pub rho_s_max: f64,
    pub rho_ss_min: f64,
    /// `max |ρ(t, 0) - 1|`.
    pub rho0_deviation: f64,
    pub rows: Vec<RhoRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub t0: f64,
    pub half_rho_ss: f64,
    pub second_form: f64,
    pub expansion: f64,
    pub l_dot_v_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaResult {
    pub sigma: f64,
    pub phi_star_dg_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub sigma_witness: Option<f64>,
    /// At the witness if there is one, otherwise the best over the sweep.
    pub phi_star_dg_max: f64,
    pub phi_star_dh_max: f64,
    pub sweep: Vec<SigmaResult>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::MinkowskiNorm;
    use crate::surfaces::{Chart, Domain};
    use std::sync::Arc;

    fn plane_field() -> CalibratorField {
        let s = ImmersedSurface::new(
            Arc::new(MinkowskiNorm::euclidean(3)),
            Chart::Affine {
                origin: vec![0.0; 3],
                e1: vec![1.0, 0.0, 0.0],
                e2: vec![0.0, 1.0, 0.0],
            },
            Domain::square(3.0),
        )
        .unwrap();
        CalibratorField::new(s, [0.0, 0.0], [0.6, 0.8], 1.0, CalibratorOptions::default()).unwrap()
    }

    #[test]
    fn plane_h_is_foot_of_perpendicular() {
        let f = plane_field();
        let x = [0.5, -0.1];
        let t = f.h_eval(x).unwrap();
        assert!((t - (0.6 * 0.5 - 0.8 * 0.1)).abs() < 1e-12);
        let g = f.base(0.3).c;
        assert!((f.h_eval(g).unwrap() - 0.3).abs() < 1e-12);
        let (_, dh) = f.dh_eval(x).unwrap();
        assert!((dh.0[0] - 0.6).abs() < 1e-12 && (dh.0[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn plane_special_coordinates_are_orthogonal() {
        let f = plane_field();
        let grid = f.special_coordinates().unwrap();
        let (t, s) = (grid.t[7], grid.s[2]);
        let p = grid.points[2][7];
        let expect = [0.6 * t - 0.8 * s, 0.8 * t + 0.6 * s];
        assert!((p[0] - expect[0]).abs() < 1e-10 && (p[1] - expect[1]).abs() < 1e-10);
        assert!(grid.level_residual < 1e-12);
        let r = f.verify_rho().unwrap();
        assert!(r.rho_s_max < 1e-8 && r.rho_ss_min.abs() < 1e-6);
    }

    #[test]
    fn sweep_grid() {
        let s = default_sigma_sweep();
        assert_eq!(s.len(), 25);
        assert!((s[0] - 1e-4).abs() < 1e-18 && (s[24] - 1.0).abs() < 1e-12);
    }
}

#[cfg(test)]
mod curved_tests {
    use super::*;
    use crate::norms::MinkowskiNorm;
    use crate::surfaces::{Chart, Domain};
    use std::sync::Arc;

    fn fsigma_field(ambient: MinkowskiNorm) -> CalibratorField {
        let s = ImmersedSurface::new(
            Arc::new(ambient),
            Chart::FSigma { sigma: 0.01 },
            Domain::square(1.0),
        )
        .unwrap();
        CalibratorField::new(s, [-0.04, 0.01], [1.0, 0.2], 0.1, CalibratorOptions::default()).unwrap()
    }

    fn paraboloid_field(length: f64) -> CalibratorField {
        let s = ImmersedSurface::new(
            Arc::new(MinkowskiNorm::euclidean(3)),
            Chart::QuadraticGraph { a: 1.0, b: 0.0, c: 1.0 },
            Domain::square(3.0),
        )
        .unwrap();
        let mut o = CalibratorOptions::default();
        o.dt = 1e-3;
        CalibratorField::new(s, [-0.5 * length, 0.0], [1.0, 0.0], length, o).unwrap()
    }

    #[test]
    fn h_is_the_base_parameter_and_dh_matches_differences() {
        let f = fsigma_field(MinkowskiNorm::euclidean(4));
        for t in [0.0, 0.03, 0.07, 0.1] {
            let c = f.base(t).c;
            assert!((f.h_eval(c).unwrap() - t).abs() < 1e-9);
            let d = f.phi_star_dh(c).unwrap();
            assert!((d - 1.0).abs() < 1e-7);
        }
        let eps = 1e-5;
        for k in 0..100 {
            let t = 0.1 * (k as f64 + 0.5) / 100.0;
            let off = f.s_max * ((k * 37 % 100) as f64 / 50.0 - 1.0);
            let c = f.base(t).c;
            let x = [c[0] - 0.2 * off, c[1] + off];
            let (_, dh) = f.dh_eval(x).unwrap();
            let dx = (f.h_eval([x[0] + eps, x[1]]).unwrap() - f.h_eval([x[0] - eps, x[1]]).unwrap()) / (2.0 * eps);
            let dy = (f.h_eval([x[0], x[1] + eps]).unwrap() - f.h_eval([x[0], x[1] - eps]).unwrap()) / (2.0 * eps);
            assert!((dx - dh.0[0]).abs() < 1e-6 && (dy - dh.0[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn level_direction_keeps_h() {
        let f = fsigma_field(MinkowskiNorm::euclidean(4));
        let t0 = 0.04;
        let c = f.base(t0).c;
        let w = f.level_direction(c, Some(t0)).unwrap();
        let x = [c[0] + 1e-3 * w[0], c[1] + 1e-3 * w[1]];
        assert!((f.h_eval(x).unwrap() - t0).abs() < 1e-6);
    }

    #[test]
    fn k_annihilates_the_tangent_plane() {
        let f = fsigma_field(MinkowskiNorm::euclidean(4));
        for t in [0.01, 0.05, 0.09] {
            let b = f.base(t);
            let j = f.surface.jet(b.c);
            assert!(b.k.dot(&j.dx).abs() < 1e-5 && b.k.dot(&j.dy).abs() < 1e-5);
        }
    }

    #[test]
    fn fsigma_rho_is_convex_and_identity_holds() {
        let f = fsigma_field(MinkowskiNorm::euclidean(4));
        let grid = f.special_coordinates().unwrap();
        assert!(grid.level_residual < 1e-7 && grid.base_residual < 1e-6);
        let r = f.verify_rho().unwrap();
        assert!(r.rho0_deviation < 1e-7);
        assert!(r.rho_s_max < 1e-4 && r.rho_ss_min > -1e-4);
        for k in 1..=20 {
            let t0 = 0.1 * k as f64 / 21.0;
            let c = f.identity_check(t0).unwrap();
            let scale = c.half_rho_ss.abs().max(1e-12);
            assert!((c.half_rho_ss - c.second_form).abs() / scale < 1e-3);
            assert!((c.half_rho_ss - c.expansion).abs() / scale < 1e-3);
            assert!(c.l_dot_v_s.abs() < 1e-5);
        }
    }

    #[test]
    fn fsigma_is_calibrated_and_polylines_are_longer() {
        use rand::{RngExt, SeedableRng};
        let f = fsigma_field(MinkowskiNorm::euclidean(4));
        let c = f.calibrate_correct(&default_sigma_sweep()).unwrap();
        assert!(c.sigma_witness.is_some());
        assert!(c.phi_star_dg_max <= 1.0 + 1e-9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let ts = f.t_nodes(9);
        let lines: Vec<Vec<[f64; 2]>> = f
            .s_nodes(5)
            .iter()
            .map(|s| f.t_line(*s, &ts).unwrap())
            .collect();
        for _ in 0..200 {
            let mut poly = vec![f.base_path.start()];
            for i in 1..ts.len() - 1 {
                poly.push(lines[rng.random_range(0..lines.len())][i]);
            }
            poly.push(f.base_path.end());
            assert!(crate::geodesics::length(&f.surface, &poly) >= f.length - 1e-6);
        }
    }

    #[test]
    fn fsigma_report_certifies() {
        let f = fsigma_field(MinkowskiNorm::euclidean(4));
        let opts = CompetitorOptions {
            tube_radius: f.s_max,
            multistarts: 8,
            ..Default::default()
        };
        let (rep, _, _) = calibrate(&f, &opts).unwrap();
        assert!(rep.certifies(1e-4), "{rep:?}");
    }

    #[test]
    fn long_paraboloid_geodesic_loses() {
        let s = ImmersedSurface::new(
            Arc::new(MinkowskiNorm::euclidean(3)),
            Chart::QuadraticGraph { a: 1.0, b: 0.0, c: 1.0 },
            Domain::square(3.0),
        )
        .unwrap();
        // arclength of the meridian between x = -2 and x = 2
        let len = 2.0 * (17f64.sqrt() + 4f64.asinh() / 4.0);
        let path = shoot(&s, [-2.0, 0.0], [1.0, 0.0], len, 1e-3).unwrap();
        assert!((path.end()[0] - 2.0).abs() < 1e-6);
        let opts = CompetitorOptions {
            tube_radius: 0.3,
            multistarts: 8,
            ..Default::default()
        };
        let r = competitor_search(&s, &path, &opts).unwrap();
        assert!(r.improvement > 1e-6);
    }

    #[test]
    fn paraboloid_is_detected() {
        let f = paraboloid_field(1.0);
        let r = f.verify_rho().unwrap();
        assert!(r.rho_ss_min < 0.0);
        let c = f.identity_check(0.5).unwrap();
        assert!((c.half_rho_ss - c.second_form).abs() < 1e-3 * c.half_rho_ss.abs());
    }
}
