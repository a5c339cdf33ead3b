//! Command line driver: experiment configs, scene files and report output.
//!
//! Every command reads one JSON input file and writes `report.json` plus
//! command specific CSV files into the output directory. Reports carry the
//! resolved config and the build version and contain no timestamps, so two
//! runs with the same inputs produce identical files.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calibrator::{calibrate, CalibratorField, CalibratorOptions};
use crate::convexgeom::{cone_shortcut, geodesic_line_refute, ConvexScene, RefuteStatus, TrihedralCone};
use crate::embedding::metric::{MetricField, MetricSpec};
use crate::embedding::pipeline::{embed, EmbedOptions};
use crate::error::{Error, Result};
use crate::geodesics::{connect, shoot, CompetitorOptions, ConnectOptions, ConnectSolution, DEFAULT_DT};
use crate::norms::{NormSpec, SWEEP_DIRECTIONS_2D, SWEEP_DIRECTIONS_ND};
use crate::surfaces::{Chart, Domain, Grid, ImmersedSurface};

pub const VERSION: &str = env!("NORMSURF_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CONTRADICTION: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    NormCheck,
    Classify,
    Shoot,
    Connect,
    Calibrate,
    Embed,
    ConeShortcut,
    RefuteLine,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::NormCheck => "norm-check",
            Command::Classify => "classify",
            Command::Shoot => "shoot",
            Command::Connect => "connect",
            Command::Calibrate => "calibrate",
            Command::Embed => "embed",
            Command::ConeShortcut => "cone-shortcut",
            Command::RefuteLine => "refute-line",
        }
    }
}

/// Tolerances a run may override. Every value is multiplied by `scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub scale: f64,
    /// Bound on `|∂_s ρ|` and `-∂²_s ρ` for `calibrate`.
    pub calibrate_fd: f64,
    /// Endpoint residual for `connect`.
    pub connect_bvp: f64,
    /// How much shorter than the geodesic a competitor must be to count.
    pub competitor_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            scale: 1.0,
            calibrate_fd: 1e-6,
            connect_bvp: 1e-8,
            competitor_gap: 1e-6,
        }
    }
}

impl Tolerances {
    fn get(&self, v: f64) -> f64 {
        v * self.scale
    }
}

/// A complete run description, loadable from JSON with `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    /// Scene file, or metric file for `embed`. Relative paths in a config
    /// file resolve against the config's directory.
    pub input: PathBuf,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.input.is_relative() {
            cfg.input = base.join(&cfg.input);
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }
}

#[derive(Debug, Parser)]
#[command(name = "normsurf", version = VERSION, about = "Surfaces, geodesics and calibrators in normed spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<CliCommand>,
    /// Experiment config; flags given alongside it take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to `out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for restarts and multistarts.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Multiplies every tolerance.
    #[arg(long, global = true)]
    pub tol_scale: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Sweep the Hessian of the half squared norm.
    NormCheck(SceneArg),
    /// Saddle classification over a parameter grid.
    Classify(SceneArg),
    /// Integrate one geodesic.
    Shoot(SceneArg),
    /// Solve the two point problem by shooting.
    Connect(SceneArg),
    /// Build the calibrator of a geodesic and search for competitors.
    Calibrate(SceneArg),
    /// Embed a planar metric as a saddle surface in a 4D normed space.
    Embed {
        /// Metric file.
        #[arg(long)]
        metric: Option<PathBuf>,
    },
    /// Shortcut across a trihedral cone.
    ConeShortcut(SceneArg),
    /// Look for a shorter path between far points of a convex surface geodesic.
    RefuteLine(SceneArg),
}

#[derive(Debug, clap::Args)]
pub struct SceneArg {
    /// Scene file.
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

impl CliCommand {
    fn split(&self) -> (Command, Option<PathBuf>) {
        match self {
            CliCommand::NormCheck(a) => (Command::NormCheck, a.scene.clone()),
            CliCommand::Classify(a) => (Command::Classify, a.scene.clone()),
            CliCommand::Shoot(a) => (Command::Shoot, a.scene.clone()),
            CliCommand::Connect(a) => (Command::Connect, a.scene.clone()),
            CliCommand::Calibrate(a) => (Command::Calibrate, a.scene.clone()),
            CliCommand::Embed { metric } => (Command::Embed, metric.clone()),
            CliCommand::ConeShortcut(a) => (Command::ConeShortcut, a.scene.clone()),
            CliCommand::RefuteLine(a) => (Command::RefuteLine, a.scene.clone()),
        }
    }
}

impl Cli {
    /// Merges the config file, if any, with the flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => Some(ExperimentConfig::load(p)?),
            None => None,
        };
        if let Some(cmd) = &self.command {
            let (command, input) = cmd.split();
            match (&mut cfg, input) {
                (Some(c), input) => {
                    if c.command != command {
                        return Err(Error::Config(format!(
                            "config is for '{}' but '{}' was requested",
                            c.command.name(),
                            command.name()
                        )));
                    }
                    if let Some(i) = input {
                        c.input = i;
                    }
                }
                (None, Some(input)) => {
                    cfg = Some(ExperimentConfig {
                        command,
                        input,
                        out: default_out(),
                        seed: 0,
                        tolerances: Tolerances::default(),
                    })
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "'{}' needs an input file or --config",
                        command.name()
                    )))
                }
            }
        }
        let mut cfg = cfg.ok_or_else(|| Error::Config("give a subcommand or --config".into()))?;
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.tol_scale {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config("--tol-scale must be positive".into()));
            }
            cfg.tolerances.scale = t;
        }
        Ok(cfg)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Errors are printed to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = cli.resolve().and_then(|cfg| match cli.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run(&cfg)),
        None => run(&cfg),
    });
    match outcome {
        Ok(o) => {
            eprintln!("{}: {}", o.command.name(), o.summary);
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub command: Command,
    pub exit_code: i32,
    pub summary: String,
    pub report: PathBuf,
}

#[derive(Serialize)]
struct Envelope<'a, R: Serialize> {
    command: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    exit_code: i32,
    result: R,
}

struct Out<'a> {
    cfg: &'a ExperimentConfig,
}

impl Out<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn csv(&self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        write(&mut w)?;
        use std::io::Write;
        w.flush()?;
        Ok(())
    }

    fn finish<R: Serialize>(self, exit_code: i32, summary: String, result: R) -> Result<Outcome> {
        let env = Envelope {
            command: self.cfg.command.name(),
            version: VERSION,
            config: self.cfg,
            exit_code,
            result,
        };
        let report = self.path("report.json");
        std::fs::write(&report, serde_json::to_string_pretty(&env)? + "\n")?;
        Ok(Outcome {
            command: self.cfg.command,
            exit_code,
            summary,
            report,
        })
    }
}

fn read_scene<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Runs one experiment and writes its report files.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    if !(cfg.tolerances.scale > 0.0 && cfg.tolerances.scale.is_finite()) {
        return Err(Error::Config("tolerance scale must be positive".into()));
    }
    std::fs::create_dir_all(&cfg.out)?;
    let out = Out { cfg };
    match cfg.command {
        Command::NormCheck => run_norm_check(cfg, out),
        Command::Classify => run_classify(cfg, out),
        Command::Shoot => run_shoot(cfg, out),
        Command::Connect => run_connect(cfg, out),
        Command::Calibrate => run_calibrate(cfg, out),
        Command::Embed => run_embed(cfg, out),
        Command::ConeShortcut => run_cone_shortcut(cfg, out),
        Command::RefuteLine => run_refute_line(cfg, out),
    }
}

#[derive(Serialize)]
struct NormCheckResult {
    strictly_convex: bool,
    directions: usize,
    min_eigenvalue: f64,
    worst_direction: Vec<f64>,
    /// Hessian eigenvalues of `½Φ²` at the worst direction.
    eigenvalues: Vec<f64>,
}

fn run_norm_check(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let spec: NormSpec = read_scene(&cfg.input)?;
    let norm = spec.build_unchecked()?;
    let directions = if norm.dim() == 2 {
        SWEEP_DIRECTIONS_2D
    } else {
        SWEEP_DIRECTIONS_ND
    };
    let (min_eig, dir) = norm.convexity_sweep(directions);
    let eigenvalues = if dir.iter().all(|x| x.is_finite()) && dir.norm() > 0.0 {
        let mut e: Vec<f64> = crate::linalg::sym_eigenvalues(&norm.half_hessian(&dir)).iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    } else {
        Vec::new()
    };
    let ok = min_eig > 0.0;
    let result = NormCheckResult {
        strictly_convex: ok,
        directions,
        min_eigenvalue: min_eig,
        worst_direction: dir.iter().copied().collect(),
        eigenvalues,
    };
    let summary = format!(
        "{} (smallest Hessian eigenvalue {:.3e})",
        if ok { "quadratically convex" } else { "NOT convex" },
        min_eig
    );
    // A norm that fails the sweep cannot be used downstream: operational error.
    out.finish(if ok { EXIT_OK } else { EXIT_ERROR }, summary, result)
}

/// Surface part shared by the surface scenes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyScene {
    pub norm: NormSpec,
    pub chart: Chart,
    pub domain: Domain,
    pub grid: Grid,
    /// Direction for the saddle normal sweep's reference.
    #[serde(default = "default_q")]
    pub q_direction: [f64; 2],
}

fn default_q() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn surface(norm: &NormSpec, chart: &Chart, domain: Domain) -> Result<ImmersedSurface> {
    ImmersedSurface::new(Arc::new(norm.build()?), chart.clone(), domain)
}

fn run_classify(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let scene: ClassifyScene = read_scene(&cfg.input)?;
    let s = surface(&scene.norm, &scene.chart, scene.domain)?;
    let report = s.classify_region(&scene.grid, scene.q_direction)?;
    out.csv("verdicts.csv", |w| report.write_csv(w))?;
    let summary = format!(
        "{} strictly saddle, {} saddle, {} not saddle, {} disagreements",
        report.strictly_saddle, report.saddle, report.not_saddle, report.disagreements
    );
    // The closed form and the normal sweep must agree.
    let code = if report.disagreements > 0 {
        EXIT_CONTRADICTION
    } else {
        EXIT_OK
    };
    out.finish(code, summary, report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootScene {
    pub norm: NormSpec,
    pub chart: Chart,
    pub domain: Domain,
    pub start: [f64; 2],
    pub direction: [f64; 2],
    pub length: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Serialize)]
struct ShootResult {
    samples: usize,
    length: f64,
    end: [f64; 2],
    truncated: bool,
    max_speed_residual: f64,
    max_tangency_residual: f64,
}

fn run_shoot(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let scene: ShootScene = read_scene(&cfg.input)?;
    let s = surface(&scene.norm, &scene.chart, scene.domain)?;
    let path = shoot(&s, scene.start, scene.direction, scene.length, scene.dt)?;
    out.csv("path.csv", |w| path.write_csv(w))?;
    let result = ShootResult {
        samples: path.samples.len(),
        length: path.length(&s),
        end: path.end(),
        truncated: path.truncated,
        max_speed_residual: path.max_speed_residual(),
        max_tangency_residual: path.max_tangency_residual(),
    };
    let summary = format!(
        "length {:.9}{}",
        result.length,
        if result.truncated { " (truncated at the domain boundary)" } else { "" }
    );
    out.finish(EXIT_OK, summary, result)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectScene {
    pub norm: NormSpec,
    pub chart: Chart,
    pub domain: Domain,
    pub from: [f64; 2],
    pub to: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
}

fn default_restarts() -> usize {
    ConnectOptions::default().max_restarts
}

#[derive(Serialize)]
struct ConnectSummary {
    length: f64,
    solutions: Vec<ConnectSolution>,
    converged_restarts: usize,
    multiple: bool,
}

fn run_connect(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let scene: ConnectScene = read_scene(&cfg.input)?;
    let s = surface(&scene.norm, &scene.chart, scene.domain)?;
    let opts = ConnectOptions {
        dt: scene.dt,
        bvp_tol: cfg.tolerances.get(cfg.tolerances.connect_bvp),
        max_restarts: scene.max_restarts,
        seed: cfg.seed,
    };
    let res = connect(&s, scene.from, scene.to, &opts)?;
    out.csv("path.csv", |w| res.path.write_csv(w))?;
    let summary = format!(
        "length {:.9}, {} distinct solution(s)",
        res.length,
        res.solutions.len()
    );
    out.finish(
        EXIT_OK,
        summary,
        ConnectSummary {
            length: res.length,
            solutions: res.solutions,
            converged_restarts: res.converged_restarts,
            multiple: res.multiple,
        },
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateScene {
    pub norm: NormSpec,
    pub chart: Chart,
    pub domain: Domain,
    pub start: [f64; 2],
    pub direction: [f64; 2],
    pub length: f64,
    #[serde(default)]
    pub calibrator: CalibratorOptions,
    #[serde(default)]
    pub competitor: Option<CompetitorScene>,
}

/// Competitor search settings; the seed comes from the run config.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitorScene {
    pub tube_radius: f64,
    pub n_nodes: usize,
    pub multistarts: usize,
}

#[derive(Serialize)]
struct CalibrateResult {
    certified: bool,
    summary: crate::calibrator::CalibrationReport,
    rho: crate::calibrator::RhoReport,
    correction: crate::calibrator::CorrectionReport,
}

fn run_calibrate(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let scene: CalibrateScene = read_scene(&cfg.input)?;
    let s = surface(&scene.norm, &scene.chart, scene.domain)?;
    let field = CalibratorField::new(s, scene.start, scene.direction, scene.length, scene.calibrator)?;
    let d = CompetitorOptions::default();
    let c = scene.competitor.unwrap_or(CompetitorScene {
        tube_radius: d.tube_radius,
        n_nodes: d.n_nodes,
        multistarts: d.multistarts,
    });
    let comp = CompetitorOptions {
        tube_radius: c.tube_radius,
        n_nodes: c.n_nodes,
        multistarts: c.multistarts,
        seed: cfg.seed,
    };
    let (summary, rho, correction) = calibrate(&field, &comp)?;
    let grid = field.special_coordinates()?;
    out.csv("special_coordinates.csv", |w| grid.write_csv(w))?;
    out.csv("rho.csv", |w| {
        use std::io::Write;
        writeln!(w, "t,rho0,rho_s,rho_ss")?;
        for r in &rho.rows {
            writeln!(w, "{:.12e},{:.15e},{:.15e},{:.15e}", r.t, r.rho0, r.rho_s, r.rho_ss)?;
        }
        Ok(())
    })?;
    let tol = &cfg.tolerances;
    let fd = tol.get(tol.calibrate_fd);
    let certified = summary.rho_s_max < fd
        && summary.rho_ss_min > -fd
        && summary.sigma_witness.is_some()
        && summary.competitor_gap >= -tol.get(tol.competitor_gap);
    let text = format!(
        "{} (sigma witness {:?}, competitor gap {:.3e})",
        if certified { "certified" } else { "NOT certified" },
        summary.sigma_witness,
        summary.competitor_gap
    );
    let code = if certified { EXIT_OK } else { EXIT_CONTRADICTION };
    out.finish(
        code,
        text,
        CalibrateResult {
            certified,
            summary,
            rho,
            correction,
        },
    )
}

fn run_embed(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let spec: MetricSpec = read_scene(&cfg.input)?;
    let metric = MetricField::from_spec(&spec)?;
    let opts = EmbedOptions {
        seed: cfg.seed,
        ..EmbedOptions::default()
    };
    let artifact = embed(&metric, &opts)?;
    artifact.write_json(&out.path("artifact.json"))?;
    let summary = format!(
        "{} (sigma {:.3e}, epsilon {:.3e})",
        if artifact.passed { "certified" } else { "NOT certified" },
        artifact.sigma,
        artifact.epsilon
    );
    let code = if artifact.passed {
        EXIT_OK
    } else {
        EXIT_CONTRADICTION
    };
    out.finish(code, summary, &artifact.certificates)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeScene {
    pub norm: NormSpec,
    pub cone: TrihedralCone,
    pub p: [f64; 3],
    pub q: [f64; 3],
}

fn run_cone_shortcut(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let scene: ConeScene = read_scene(&cfg.input)?;
    let norm = scene.norm.build()?;
    let cone = TrihedralCone::new(scene.cone.normals)?;
    let report = cone_shortcut(&norm, &cone, scene.p, scene.q)?;
    out.csv("path.csv", |w| {
        use std::io::Write;
        writeln!(w, "x,y,z")?;
        for p in &report.path {
            writeln!(w, "{},{},{}", p[0], p[1], p[2])?;
        }
        Ok(())
    })?;
    let summary = format!(
        "{:?} shortcut, length {:.9} vs broken line {:.9}",
        report.kind, report.length, report.broken_length
    );
    // Across a sharp cone the broken line through the apex is never shortest.
    let code = if report.margin > 0.0 {
        EXIT_OK
    } else {
        EXIT_CONTRADICTION
    };
    out.finish(code, summary, report)
}

fn run_refute_line(cfg: &ExperimentConfig, out: Out) -> Result<Outcome> {
    let scene = ConvexScene::load(&cfg.input)
        .map_err(|e| Error::Config(format!("{}: {e}", cfg.input.display())))?;
    let report = geodesic_line_refute(&scene)?;
    out.csv("competitor.csv", |w| report.write_competitor_csv(w))?;
    out.csv("lambdas.csv", |w| {
        use std::io::Write;
        writeln!(w, "lambda,competitor_length,upper_bound,surface_residual,shortcut_margin,refutes")?;
        for r in &report.results {
            writeln!(
                w,
                "{},{:.15e},{:.15e},{:.3e},{:.15e},{}",
                r.lambda, r.competitor_length, r.upper_bound, r.surface_residual, r.shortcut_margin, r.refutes
            )?;
        }
        Ok(())
    })?;
    let summary = match (report.status, report.refuted_at) {
        (RefuteStatus::Refuted, Some(l)) => format!("refuted at lambda {l}"),
        _ => format!(
            "inconclusive{}",
            report.reason.as_deref().map(|r| format!(": {r}")).unwrap_or_default()
        ),
    };
    out.finish(EXIT_OK, summary, report)
}
