//! End-to-end experiment runner: configuration, single runs, table sweeps and
//! plot data, with JSON and CSV writers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::assemble::{assemble_aprfm, assemble_rfm, rescale_rows, write_debug_dump, AssembleOptions};
use crate::basis::{Activation, FeatureModel, PouKind};
use crate::collocation::{evaluation_grid, kink_collisions, CollocationSet, PhasePoint};
use crate::error::{Error, Result};
use crate::problems::{catalog, ProblemId, ProblemSpec};
use crate::quadrature::AngularRule;
use crate::reference::{
    exact_density, exact_field, fdm_reference, relative_l2, spatial_points, FdmOptions, GridField, Solution,
};
use crate::solve::{lstsq, SolveMethod, SolveOptions};

/// Mask applied to the run seed for the `g` model so `rho` and `g` features differ.
pub const G_SEED_MASK: u64 = 0xA5A5_A5A5_A5A5_A5A5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rfm,
    #[default]
    Aprfm,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rfm" => Ok(Method::Rfm),
            "aprfm" => Ok(Method::Aprfm),
            _ => Err(Error::InvalidConfig(format!("unknown method '{s}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rfm => "rfm",
            Method::Aprfm => "aprfm",
        })
    }
}

/// Parameters of one run. `None` fields take problem-dependent defaults in [`RunConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub method: Method,
    /// Constant Knudsen number; `None` means the built-in profile (ex3 only).
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jrho: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jg: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mx1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mx2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mv: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx1: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx2: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nv: Option<usize>,
    pub nq: usize,
    pub b_range: f64,
    pub seed: u64,
    pub activation: Activation,
    pub pou: PouKind,
    pub rank_tol: f64,
    pub solver: SolveMethod,
    pub zero_mean_rows: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdm_refine: Option<usize>,
    pub seeds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemId::Ex1,
            method: Method::Aprfm,
            epsilon: None,
            j: None,
            jrho: None,
            jg: None,
            mx: None,
            mx1: None,
            mx2: None,
            mv: None,
            nx: None,
            nx1: None,
            nx2: None,
            nv: None,
            nq: 16,
            b_range: 1.0,
            seed: 0,
            activation: Activation::Tanh,
            pou: PouKind::PhiB,
            rank_tol: 1e-12,
            solver: SolveMethod::Svd,
            zero_mean_rows: false,
            fdm_refine: None,
            seeds: 3,
            out: None,
            dump: None,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse::<V>()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::InvalidConfig(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::InvalidConfig(m),
        other => other,
    }
}

impl RunConfig {
    /// Applies one `key = value` setting. Keys match the command-line flag names;
    /// underscores and dashes are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "problem" => self.problem = value.parse().map_err(config_err)?,
            "method" => self.method = value.parse()?,
            "epsilon" | "eps" => {
                self.epsilon = if value.eq_ignore_ascii_case("profile") {
                    None
                } else {
                    Some(parse(&key, value)?)
                }
            }
            "j" => self.j = Some(parse(&key, value)?),
            "jrho" => self.jrho = Some(parse(&key, value)?),
            "jg" => self.jg = Some(parse(&key, value)?),
            "mx" => self.mx = Some(parse(&key, value)?),
            "mx1" => self.mx1 = Some(parse(&key, value)?),
            "mx2" => self.mx2 = Some(parse(&key, value)?),
            "mv" => self.mv = Some(parse(&key, value)?),
            "nx" => self.nx = Some(parse(&key, value)?),
            "nx1" => self.nx1 = Some(parse(&key, value)?),
            "nx2" => self.nx2 = Some(parse(&key, value)?),
            "nv" => self.nv = Some(parse(&key, value)?),
            "nq" => self.nq = parse(&key, value)?,
            "b-range" => self.b_range = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "activation" => self.activation = value.parse().map_err(config_err)?,
            "pou" => self.pou = value.parse().map_err(config_err)?,
            "rank-tol" => self.rank_tol = parse(&key, value)?,
            "solver" => self.solver = value.parse().map_err(config_err)?,
            "zero-mean" | "zero-mean-rows" => self.zero_mean_rows = parse_bool(&key, value)?,
            "fdm-refine" => self.fdm_refine = Some(parse(&key, value)?),
            "seeds" => self.seeds = parse(&key, value)?,
            "out" => self.out = Some(value.to_string()),
            "dump" => self.dump = Some(value.to_string()),
            _ => return Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses flat `key = value` lines; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::InvalidConfig(format!("line {}: {}", lineno + 1, e)))?;
        }
        Ok(())
    }

    pub fn from_config_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::default();
        cfg.apply_config_text(&text)?;
        Ok(cfg)
    }

    pub fn spatial_dim(&self) -> usize {
        self.problem.spatial_dim()
    }

    /// Fills every unset field with the defaults for the problem and method and checks ranges.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = self.clone();
        let two_d = c.spatial_dim() == 2;
        // (jrho, jg, m_x, m_v, n_x, n_v) per problem for the micro-macro method
        let (jr, jg, mx, mv, nx, nv) = match c.problem {
            ProblemId::Ex1 => (32, 32, 1, 1, 128, 256),
            ProblemId::Ex2 | ProblemId::Ex3 => (64, 128, 2, 4, 128, 256),
            ProblemId::Ex4 => (32, 32, 1, 1, 32, 64),
            ProblemId::Ex5 => (64, 128, 1, 4, 32, 32),
            ProblemId::Ex6 => (64, 128, 1, 4, 32, 64),
        };
        let (mx, mv, nx, nv) = match (c.method, c.problem) {
            (Method::Rfm, ProblemId::Ex1) => (1, 1, 64, 128),
            _ => (mx, mv, nx, nv),
        };
        if c.problem.has_profile() {
            c.epsilon = None;
        } else {
            c.epsilon = Some(c.epsilon.unwrap_or(1.0));
        }
        match c.method {
            Method::Rfm => {
                c.j = Some(c.j.unwrap_or(128));
                c.jrho = None;
                c.jg = None;
            }
            Method::Aprfm => {
                c.jrho = Some(c.jrho.or(c.j).unwrap_or(jr));
                c.jg = Some(c.jg.or(c.j).unwrap_or(jg));
                c.j = None;
            }
        }
        c.mv = Some(c.mv.unwrap_or(mv));
        c.nv = Some(c.nv.unwrap_or(nv));
        if two_d {
            c.mx1 = Some(c.mx1.or(c.mx).unwrap_or(mx));
            c.mx2 = Some(c.mx2.or(c.mx).unwrap_or(mx));
            c.nx1 = Some(c.nx1.or(c.nx).unwrap_or(nx));
            c.nx2 = Some(c.nx2.or(c.nx).unwrap_or(nx));
            c.mx = None;
            c.nx = None;
        } else {
            c.mx = Some(c.mx.unwrap_or(mx));
            c.nx = Some(c.nx.unwrap_or(nx));
            c.mx1 = None;
            c.mx2 = None;
            c.nx1 = None;
            c.nx2 = None;
        }
        let counts = [c.j, c.jrho, c.jg, c.mx, c.mx1, c.mx2, c.mv];
        if counts.iter().flatten().any(|&v| v == 0) || c.nq == 0 || c.seeds == 0 {
            return Err(Error::InvalidConfig("feature, partition and seed counts must be positive".into()));
        }
        if [c.nx, c.nx1, c.nx2, c.nv].iter().flatten().any(|&v| v < 2) {
            return Err(Error::InvalidConfig("collocation counts must be at least 2".into()));
        }
        if !(2..=128).contains(&c.nq) {
            return Err(Error::InvalidConfig(format!("nq must lie in 2..=128, got {}", c.nq)));
        }
        if !(c.b_range > 0.0 && c.b_range.is_finite()) {
            return Err(Error::InvalidConfig("b-range must be positive".into()));
        }
        if !(c.rank_tol > 0.0 && c.rank_tol < 1.0) {
            return Err(Error::InvalidConfig("rank-tol must lie in (0, 1)".into()));
        }
        if let Some(e) = c.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidConfig(format!("epsilon must be positive, got {e}")));
            }
        }
        if let Some(r) = c.fdm_refine {
            if r == 0 || r % 2 == 0 {
                return Err(Error::InvalidConfig("fdm-refine must be odd".into()));
            }
        }
        Ok(c)
    }

    /// Spatial partition counts of a resolved config.
    pub fn spatial_partition(&self) -> Vec<usize> {
        if self.spatial_dim() == 2 {
            vec![self.mx1.unwrap_or(1), self.mx2.unwrap_or(1)]
        } else {
            vec![self.mx.unwrap_or(1)]
        }
    }

    /// Spatial collocation counts of a resolved config.
    pub fn spatial_collocation(&self) -> Vec<usize> {
        if self.spatial_dim() == 2 {
            vec![self.nx1.unwrap_or(2), self.nx2.unwrap_or(2)]
        } else {
            vec![self.nx.unwrap_or(2)]
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec<f64>> {
        catalog(self.problem, self.epsilon.unwrap_or(1.0)).map_err(config_err)
    }
}

/// Reference values on the evaluation grid.
#[derive(Debug, Clone)]
pub struct Reference {
    pub kind: &'static str,
    pub phase: GridField<f64>,
    pub density: GridField<f64>,
    pub fdm_iterations: Option<usize>,
    pub seconds: f64,
}

/// Exact fields when the problem has them, otherwise the upwind oracle.
pub fn compute_reference(spec: &ProblemSpec<f64>, nq: usize, fdm_refine: Option<usize>) -> Result<Reference> {
    let t = Instant::now();
    let grid = evaluation_grid(spec)?;
    let xs = spatial_points(&grid);
    if spec.exact_f.is_some() {
        return Ok(Reference {
            kind: "exact",
            phase: exact_field(spec, &grid)?,
            density: exact_density(spec, &xs)?,
            fdm_iterations: None,
            seconds: t.elapsed().as_secs_f64(),
        });
    }
    let rule = AngularRule::new(spec.spatial_dim(), nq)?;
    let r = fdm_reference(spec, &rule, &grid, FdmOptions { refine: fdm_refine, ..Default::default() })?;
    Ok(Reference {
        kind: "fdm",
        phase: r.phase,
        density: r.density,
        fdm_iterations: Some(r.iterations),
        seconds: t.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub assembly: f64,
    pub solve: f64,
    pub evaluation: f64,
    pub reference: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    /// Primary metric: `error_f` in 1D, `error_rho` in 2D.
    pub error: f64,
    pub error_f: f64,
    pub error_rho: f64,
    pub reference: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fdm_iterations: Option<usize>,
    pub residual_norm: f64,
    pub rank: usize,
    pub condition_estimate: f64,
    pub solver: SolveMethod,
    pub z: usize,
    pub n: usize,
    pub n_int: usize,
    pub n_bdy: usize,
    pub lambda: LambdaStats,
    pub kink_collisions: usize,
    pub timings: Timings,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub coeffs: Vec<f64>,
    pub phase_approx: GridField<f64>,
    pub phase_ref: GridField<f64>,
    pub density_approx: GridField<f64>,
    pub density_ref: GridField<f64>,
}

/// Full pipeline for one configuration.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    run_with_reference(config, None)
}

/// As [`run`], reusing a precomputed reference for the same problem and epsilon.
pub fn run_with_reference(config: &RunConfig, reference: Option<&Reference>) -> Result<RunOutput> {
    let t_total = Instant::now();
    let cfg = config.resolve()?;
    let spec = cfg.problem_spec()?;
    let d = spec.spatial_dim();
    let rule = AngularRule::new(d, cfg.nq).map_err(config_err)?;
    let sp_counts = cfg.spatial_partition();
    let n_sp = cfg.spatial_collocation();
    let mv = cfg.mv.unwrap();
    let nv = cfg.nv.unwrap();
    let colloc = CollocationSet::build(&spec, &n_sp, nv).map_err(config_err)?;
    let (x_lo, x_hi) = spec.geometry.bounds();
    let (p_lo, p_hi) = spec.phase_bounds();
    let mut phase_counts = sp_counts.clone();
    phase_counts.push(mv);
    let b = cfg.b_range;

    let t_asm = Instant::now();
    let (models, sys) = match cfg.method {
        Method::Rfm => {
            let m = FeatureModel::random(
                p_lo, p_hi, phase_counts, cfg.j.unwrap(), b, cfg.seed, cfg.activation, cfg.pou,
            )
            .map_err(config_err)?;
            let sys = assemble_rfm(&spec, &m, &colloc, &rule)?;
            (vec![m], sys)
        }
        Method::Aprfm => {
            let r = FeatureModel::random(
                x_lo, x_hi, sp_counts, cfg.jrho.unwrap(), b, cfg.seed, cfg.activation, cfg.pou,
            )
            .map_err(config_err)?;
            let g = FeatureModel::random(
                p_lo,
                p_hi,
                phase_counts,
                cfg.jg.unwrap(),
                b,
                cfg.seed ^ G_SEED_MASK,
                cfg.activation,
                cfg.pou,
            )
            .map_err(config_err)?;
            let sys = assemble_aprfm(
                &spec,
                &r,
                &g,
                &colloc,
                &rule,
                AssembleOptions { zero_mean_rows: cfg.zero_mean_rows },
            )?;
            (vec![r, g], sys)
        }
    };
    let sys = rescale_rows(sys)?;
    let assembly = t_asm.elapsed().as_secs_f64();
    if let Some(path) = &cfg.dump {
        write_debug_dump(&sys, Path::new(path))?;
    }
    let lambda = LambdaStats {
        min: sys.lambda.iter().copied().fold(f64::INFINITY, f64::min),
        max: sys.lambda.iter().copied().fold(0.0, f64::max),
        mean: sys.lambda.iter().sum::<f64>() / sys.n_rows as f64,
    };
    let kinks: usize = (0..d)
        .map(|k| kink_collisions(models[0].partition(), k, n_sp[k]))
        .sum();

    let sol = lstsq(&sys, SolveOptions { rank_tol: cfg.rank_tol, method: cfg.solver })?;
    let (z, n, n_int, n_bdy) = (sys.n_cols, sys.n_rows, sys.n_int, sys.n_bdy);
    drop(sys);
    if sol.coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("solver produced non-finite coefficients".into()));
    }

    let owned;
    let reference = match reference {
        Some(r) => r,
        None => {
            owned = compute_reference(&spec, cfg.nq, cfg.fdm_refine)?;
            &owned
        }
    };

    let t_eval = Instant::now();
    let solution = match cfg.method {
        Method::Rfm => Solution::Rfm { model: &models[0], coeffs: &sol.coeffs },
        Method::Aprfm => Solution::Aprfm { rho: &models[0], g: &models[1], coeffs: &sol.coeffs },
    };
    let grid = evaluation_grid(&spec)?;
    let xs = spatial_points(&grid);
    let phase_approx = GridField::new(grid.clone(), solution.phase_values(&spec, &grid)?)?;
    let density_approx =
        GridField::new(reference.density.points.clone(), solution.density_values(&spec, &rule, &xs)?)?;
    let evaluation = t_eval.elapsed().as_secs_f64();
    let error_f = relative_l2(&phase_approx, &reference.phase)?;
    let error_rho = relative_l2(&density_approx, &reference.density)?;

    let report = RunReport {
        error: if d == 1 { error_f } else { error_rho },
        error_f,
        error_rho,
        reference: reference.kind,
        fdm_iterations: reference.fdm_iterations,
        residual_norm: sol.residual_norm,
        rank: sol.rank,
        condition_estimate: sol.condition_estimate,
        solver: sol.method,
        z,
        n,
        n_int,
        n_bdy,
        lambda,
        kink_collisions: kinks,
        timings: Timings {
            assembly,
            solve: sol.wall_time,
            evaluation,
            reference: reference.seconds,
            total: t_total.elapsed().as_secs_f64(),
        },
        config: cfg,
    };
    Ok(RunOutput {
        report,
        coeffs: sol.coeffs,
        phase_approx,
        phase_ref: reference.phase.clone(),
        density_approx,
        density_ref: reference.density.clone(),
    })
}

/// Six significant digits in scientific notation.
pub fn fmt_sci(v: f64) -> String {
    format!("{v:.5e}")
}

/// Tidy CSV of the field a run is scored on: `(x, v, f)` in 1D, `(x1, x2, rho)` in 2D.
pub fn run_csv(out: &RunOutput) -> String {
    if out.report.config.spatial_dim() == 1 {
        plot_csv(out, PlotKind::HeatmapF)
    } else {
        plot_csv(out, PlotKind::HeatmapRho)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    HeatmapF,
    HeatmapRho,
    ErrorVsDof,
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heatmap-f" => Ok(PlotKind::HeatmapF),
            "heatmap-rho" => Ok(PlotKind::HeatmapRho),
            "error-vs-dof" => Ok(PlotKind::ErrorVsDof),
            _ => Err(Error::InvalidConfig(format!("unknown plot kind '{s}'"))),
        }
    }
}

/// Heatmap CSV of a finished run. `ErrorVsDof` needs several runs; see [`error_vs_dof`].
pub fn plot_csv(out: &RunOutput, kind: PlotKind) -> String {
    let two_d = out.report.config.spatial_dim() == 2;
    let mut s = String::new();
    match kind {
        PlotKind::HeatmapF => {
            s.push_str(if two_d { "x1,x2,alpha,f_approx,f_ref\n" } else { "x,v,f_approx,f_ref\n" });
            for ((p, a), r) in out.phase_approx.points.iter().zip(&out.phase_approx.values).zip(&out.phase_ref.values) {
                if two_d {
                    let _ = writeln!(s, "{},{},{},{},{}", fmt_sci(p.x[0]), fmt_sci(p.x[1]), fmt_sci(p.v), fmt_sci(*a), fmt_sci(*r));
                } else {
                    let _ = writeln!(s, "{},{},{},{}", fmt_sci(p.x[0]), fmt_sci(p.v), fmt_sci(*a), fmt_sci(*r));
                }
            }
        }
        PlotKind::HeatmapRho | PlotKind::ErrorVsDof => {
            s.push_str(if two_d { "x1,x2,rho_approx,rho_ref\n" } else { "x,rho_approx,rho_ref\n" });
            for ((p, a), r) in
                out.density_approx.points.iter().zip(&out.density_approx.values).zip(&out.density_ref.values)
            {
                if two_d {
                    let _ = writeln!(s, "{},{},{},{}", fmt_sci(p.x[0]), fmt_sci(p.x[1]), fmt_sci(*a), fmt_sci(*r));
                } else {
                    let _ = writeln!(s, "{},{},{}", fmt_sci(p.x[0]), fmt_sci(*a), fmt_sci(*r));
                }
            }
        }
    }
    s
}

/// One cell of a sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub table: String,
    pub problem: ProblemId,
    pub method: Method,
    pub epsilon: Option<f64>,
    pub setting: String,
    pub z: usize,
    pub mean_error: f64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
}

impl FromStr for Table {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T1" => Ok(Table::T1),
            "T2" => Ok(Table::T2),
            "T3" => Ok(Table::T3),
            "T4" => Ok(Table::T4),
            "T5" => Ok(Table::T5),
            "T6" => Ok(Table::T6),
            _ => Err(Error::InvalidConfig(format!("unknown table '{s}'"))),
        }
    }
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

const SLAB_EPS: [f64; 4] = [1e-2, 1e-4, 1e-8, 1e-16];
const SLAB_GRIDS: [(usize, usize); 4] = [(16, 32), (32, 64), (64, 128), (128, 256)];

/// Cells of a table: `(label, config)` built on top of `base` (which supplies seed,
/// activation, PoU kind, quadrature and solver settings).
pub fn table_cells(table: Table, base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut out = Vec::new();
    let fresh = |problem: ProblemId, method: Method, eps: f64| RunConfig {
        problem,
        method,
        epsilon: Some(eps),
        j: None,
        jrho: None,
        jg: None,
        mx: None,
        mx1: None,
        mx2: None,
        mv: None,
        nx: None,
        nx1: None,
        nx2: None,
        nv: None,
        out: None,
        dump: None,
        ..base.clone()
    };
    match table {
        Table::T1 | Table::T4 => {
            let (method, js, grid): (Method, &[usize], (usize, usize)) = if table == Table::T1 {
                (Method::Rfm, &[16, 32, 64, 128, 256], (64, 128))
            } else {
                (Method::Aprfm, &[8, 16, 32, 64, 128], (128, 256))
            };
            for eps in SLAB_EPS {
                for &j in js {
                    let mut c = fresh(ProblemId::Ex1, method, eps);
                    c.j = Some(j);
                    c.mx = Some(1);
                    c.mv = Some(1);
                    c.nx = Some(grid.0);
                    c.nv = Some(grid.1);
                    out.push((format!("J={j}"), c));
                }
            }
        }
        Table::T2 | Table::T5 => {
            let method = if table == Table::T2 { Method::Rfm } else { Method::Aprfm };
            for eps in SLAB_EPS {
                for (nx, nv) in SLAB_GRIDS {
                    let mut c = fresh(ProblemId::Ex1, method, eps);
                    c.j = Some(128);
                    c.mx = Some(1);
                    c.mv = Some(1);
                    c.nx = Some(nx);
                    c.nv = Some(nv);
                    out.push((format!("N=({nx},{nv})"), c));
                }
            }
        }
        Table::T3 => {
            for eps in SLAB_EPS {
                for (mx, mv) in [(1, 1), (2, 1), (1, 2), (4, 1), (1, 4)] {
                    let mut c = fresh(ProblemId::Ex1, Method::Rfm, eps);
                    c.j = Some(128);
                    c.mx = Some(mx);
                    c.mv = Some(mv);
                    c.nx = Some(64);
                    c.nv = Some(128);
                    out.push((format!("M=({mx},{mv})"), c));
                }
            }
        }
        Table::T6 => {
            for eps in [1.0, 1e-1] {
                for mv in [1, 2, 4, 8] {
                    let mut c = fresh(ProblemId::Ex5, Method::Aprfm, eps);
                    c.jrho = Some(64);
                    c.jg = Some(128);
                    c.mx1 = Some(1);
                    c.mx2 = Some(1);
                    c.mv = Some(mv);
                    c.nx1 = Some(32);
                    c.nx2 = Some(32);
                    c.nv = Some(32);
                    out.push((format!("M=(1,1,{mv})"), c));
                }
            }
        }
    }
    out
}

/// Runs every config over `seeds` consecutive seeds starting at `config.seed` and
/// averages the primary error. References are shared between cells with the same
/// problem and epsilon.
pub fn sweep_cells(table_name: &str, cells: &[(String, RunConfig)], seeds: usize) -> Result<Vec<SweepRow>> {
    let mut refs: HashMap<(ProblemId, Option<u64>), Reference> = HashMap::new();
    let mut rows = Vec::with_capacity(cells.len());
    for (label, cfg) in cells {
        let resolved = cfg.resolve()?;
        let key = (resolved.problem, resolved.epsilon.map(f64::to_bits));
        if let std::collections::hash_map::Entry::Vacant(e) = refs.entry(key) {
            let spec = resolved.problem_spec()?;
            e.insert(compute_reference(&spec, resolved.nq, resolved.fdm_refine)?);
        }
        let reference = &refs[&key];
        let mut errors = Vec::with_capacity(seeds);
        let mut z = 0;
        for s in 0..seeds as u64 {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(s);
            let out = run_with_reference(&c, Some(reference))?;
            z = out.report.z;
            errors.push(out.report.error);
        }
        rows.push(SweepRow {
            table: table_name.to_string(),
            problem: resolved.problem,
            method: resolved.method,
            epsilon: resolved.epsilon,
            setting: label.clone(),
            z,
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            errors,
        });
    }
    Ok(rows)
}

pub fn sweep(table: Table, base: &RunConfig) -> Result<Vec<SweepRow>> {
    sweep_cells(&table.to_string(), &table_cells(table, base), base.seeds)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let seeds = rows.iter().map(|r| r.errors.len()).max().unwrap_or(0);
    let mut s = String::from("table,problem,method,epsilon,setting,z,mean_error");
    for k in 0..seeds {
        let _ = write!(s, ",error_seed{k}");
    }
    s.push('\n');
    for r in rows {
        let eps = r.epsilon.map(fmt_sci).unwrap_or_else(|| "profile".into());
        let _ = write!(
            s,
            "{},{},{},{},\"{}\",{},{}",
            r.table,
            r.problem,
            r.method,
            eps,
            r.setting,
            r.z,
            fmt_sci(r.mean_error)
        );
        for e in &r.errors {
            let _ = write!(s, ",{}", fmt_sci(*e));
        }
        s.push('\n');
    }
    s
}

/// Error against degrees of freedom for `J = 2^3 .. 2^7` (`J^rho = J^g = J` for the micro-macro method).
pub fn error_vs_dof(base: &RunConfig) -> Result<Vec<SweepRow>> {
    let cells: Vec<(String, RunConfig)> = (3..=7)
        .map(|n| {
            let j = 1usize << n;
            let mut c = base.clone();
            c.j = Some(j);
            c.jrho = Some(j);
            c.jg = Some(j);
            c.out = None;
            c.dump = None;
            (format!("J={j}"), c)
        })
        .collect();
    sweep_cells("error-vs-dof", &cells, base.seeds)
}

pub fn error_vs_dof_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("j,z,error\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.setting.trim_start_matches("J="), r.z, fmt_sci(r.mean_error));
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn to_json<S: Serialize>(value: &S) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Points of a tensor evaluation grid, exposed for plotting front ends.
pub fn evaluation_points(spec: &ProblemSpec<f64>) -> Result<Vec<PhasePoint<f64>>> {
    evaluation_grid(spec)
}
