//! Experiment configuration and runners behind the `monofem` binary.
//!
//! Config files are line oriented `key = value` text; `#` starts a comment. Unknown keys
//! are rejected. Every run is deterministic given its config.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::adapt::{adaptive_solve_with, write_iterations_csv, write_summary_csv, AdaptConfig, AdaptReport};
use crate::error::{invalid, Error, Result};
use crate::mesh::{read_mesh_text, write_vtk, DataField, Mesh};
use crate::problems::{builtin, true_error, ProblemDef};
use crate::solver::{run_fixed_point, StopRule};
use crate::space::{build_space, CoefVector, FeSpace};

/// Exit code for an invalid config or command line.
pub const EXIT_INVALID_CONFIG: i32 = 2;
/// Exit code for a numeric or linear-solver failure.
pub const EXIT_NUMERIC: i32 = 3;
/// Exit code for I/O failures.
pub const EXIT_IO: i32 = 1;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) | Error::Parse { .. } => EXIT_INVALID_CONFIG,
        Error::Numeric { .. } | Error::Solver { .. } => EXIT_NUMERIC,
        Error::Io(_) => EXIT_IO,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    AprioriP,
    AprioriH,
    Adaptive,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::AprioriP => "apriori-p",
            Experiment::AprioriH => "apriori-h",
            Experiment::Adaptive => "adaptive",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apriori-p" => Ok(Experiment::AprioriP),
            "apriori-h" => Ok(Experiment::AprioriH),
            "adaptive" => Ok(Experiment::Adaptive),
            _ => Err(invalid(format!("unknown experiment '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshKind {
    Tri,
    Quad,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: String,
    /// `ε` for ex2 and ex3; `None` uses the problem default.
    pub eps: Option<f64>,
    /// Adaptive runs over several `ε` values, one run each.
    pub eps_sweep: Vec<f64>,
    pub mesh: MeshKind,
    /// Cells per side of the initial uniform mesh.
    pub n: usize,
    /// Overrides `mesh` and `n` for adaptive runs.
    pub mesh_file: Option<PathBuf>,
    /// Degree for apriori-h and adaptive runs.
    pub p: usize,
    pub p_min: usize,
    pub p_max: usize,
    /// Range of `N` for apriori-h, meshes `2^N x 2^N`.
    pub level_min: usize,
    pub level_max: usize,
    /// Budget multipliers: `C·p` or `C·N` steps.
    pub budgets: Vec<usize>,
    /// Residual tolerance of the reference runs.
    pub tolerance: f64,
    /// Step cap of the reference runs.
    pub max_iterations: usize,
    pub theta: Option<f64>,
    pub refine_fraction: f64,
    pub derefine_fraction: f64,
    pub max_meshes: usize,
    pub max_iterations_per_mesh: usize,
    pub target_bound: f64,
    pub vtk: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: "apriori".into(),
            eps: None,
            eps_sweep: Vec::new(),
            mesh: MeshKind::Quad,
            n: 8,
            mesh_file: None,
            p: 2,
            p_min: 1,
            p_max: 6,
            level_min: 3,
            level_max: 6,
            budgets: vec![1, 2, 3],
            tolerance: 1e-14,
            max_iterations: 1000,
            theta: None,
            refine_fraction: 0.25,
            derefine_fraction: 0.05,
            max_meshes: 10,
            max_iterations_per_mesh: 200,
            target_bound: 0.0,
            vtk: false,
        }
    }
}

fn parse_value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse { line, message: format!("bad value '{v}' for {key}") })
}

fn parse_list<T: FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_value(line, key, s.trim())).collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected 'key = value', got '{body}'") })?;
            let (key, v) = (key.trim(), value.trim());
            match key {
                "problem" => c.problem = v.to_string(),
                "eps" => c.eps = Some(parse_value(line, key, v)?),
                "eps_sweep" => c.eps_sweep = parse_list(line, key, v)?,
                "mesh" => {
                    c.mesh = match v {
                        "tri" => MeshKind::Tri,
                        "quad" => MeshKind::Quad,
                        _ => return Err(Error::Parse { line, message: format!("mesh must be tri or quad, got '{v}'") }),
                    }
                }
                "n" => c.n = parse_value(line, key, v)?,
                "mesh_file" => c.mesh_file = Some(PathBuf::from(v)),
                "p" => c.p = parse_value(line, key, v)?,
                "p_min" => c.p_min = parse_value(line, key, v)?,
                "p_max" => c.p_max = parse_value(line, key, v)?,
                "level_min" => c.level_min = parse_value(line, key, v)?,
                "level_max" => c.level_max = parse_value(line, key, v)?,
                "budgets" => c.budgets = parse_list(line, key, v)?,
                "tolerance" => c.tolerance = parse_value(line, key, v)?,
                "max_iterations" => c.max_iterations = parse_value(line, key, v)?,
                "theta" => c.theta = Some(parse_value(line, key, v)?),
                "refine_fraction" => c.refine_fraction = parse_value(line, key, v)?,
                "derefine_fraction" => c.derefine_fraction = parse_value(line, key, v)?,
                "max_meshes" => c.max_meshes = parse_value(line, key, v)?,
                "max_iterations_per_mesh" => c.max_iterations_per_mesh = parse_value(line, key, v)?,
                "target_bound" => c.target_bound = parse_value(line, key, v)?,
                "vtk" => c.vtk = parse_value(line, key, v)?,
                _ => return Err(Error::Parse { line, message: format!("unknown key '{key}'") }),
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Switches desk-scale sizes to the sizes of the original study.
    pub fn full_scale(&mut self, experiment: Experiment) {
        match experiment {
            Experiment::AprioriP => self.n = self.n.max(16),
            Experiment::AprioriH => self.level_max = self.level_max.max(8),
            Experiment::Adaptive => self.max_meshes = self.max_meshes.max(20),
        }
    }

    pub fn validate(&self, experiment: Experiment) -> Result<()> {
        builtin(&self.problem, self.eps)?;
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.budgets.contains(&0) {
            return Err(invalid("budgets must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        match experiment {
            Experiment::AprioriP => {
                if self.p_min == 0 || self.p_min > self.p_max {
                    return Err(invalid("need 1 <= p_min <= p_max"));
                }
            }
            Experiment::AprioriH => {
                if self.p == 0 || self.level_min > self.level_max || self.level_max > 12 {
                    return Err(invalid("need p >= 1 and level_min <= level_max <= 12"));
                }
            }
            Experiment::Adaptive => {
                if self.p == 0 {
                    return Err(invalid("p must be positive"));
                }
                for &e in &self.eps_sweep {
                    builtin(&self.problem, Some(e))?;
                }
                self.adapt_config(self.theta.unwrap_or(1.0)).validate()?;
            }
        }
        Ok(())
    }

    fn adapt_config(&self, default_theta: f64) -> AdaptConfig {
        AdaptConfig {
            theta: self.theta.unwrap_or(default_theta),
            refine_fraction: self.refine_fraction,
            derefine_fraction: self.derefine_fraction,
            max_meshes: self.max_meshes,
            max_iterations_per_mesh: self.max_iterations_per_mesh,
            target_bound: self.target_bound,
        }
    }

    fn uniform_mesh(&self, n: usize) -> Result<Mesh> {
        match self.mesh {
            MeshKind::Tri => Mesh::unit_square_tri(n),
            MeshKind::Quad => Mesh::unit_square_quad(n),
        }
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        writeln!(f, "problem = {}", self.problem)?;
        if let Some(e) = self.eps {
            writeln!(f, "eps = {e:e}")?;
        }
        if !self.eps_sweep.is_empty() {
            writeln!(f, "eps_sweep = {}", list(&self.eps_sweep))?;
        }
        writeln!(f, "mesh = {}", if self.mesh == MeshKind::Tri { "tri" } else { "quad" })?;
        writeln!(f, "n = {}", self.n)?;
        if let Some(path) = &self.mesh_file {
            writeln!(f, "mesh_file = {}", path.display())?;
        }
        writeln!(f, "p = {}", self.p)?;
        writeln!(f, "p_min = {}", self.p_min)?;
        writeln!(f, "p_max = {}", self.p_max)?;
        writeln!(f, "level_min = {}", self.level_min)?;
        writeln!(f, "level_max = {}", self.level_max)?;
        let b: Vec<String> = self.budgets.iter().map(|b| b.to_string()).collect();
        writeln!(f, "budgets = {}", b.join(", "))?;
        writeln!(f, "tolerance = {:e}", self.tolerance)?;
        writeln!(f, "max_iterations = {}", self.max_iterations)?;
        if let Some(t) = self.theta {
            writeln!(f, "theta = {t:e}")?;
        }
        writeln!(f, "refine_fraction = {:e}", self.refine_fraction)?;
        writeln!(f, "derefine_fraction = {:e}", self.derefine_fraction)?;
        writeln!(f, "max_meshes = {}", self.max_meshes)?;
        writeln!(f, "max_iterations_per_mesh = {}", self.max_iterations_per_mesh)?;
        writeln!(f, "target_bound = {:e}", self.target_bound)?;
        writeln!(f, "vtk = {}", self.vtk)
    }
}

/// Which stopping rule produced an error value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    /// `C·p` or `C·N` steps.
    Steps(usize),
    /// Residual tolerance reference run.
    Reference,
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Budget::Steps(c) => write!(f, "{c}"),
            Budget::Reference => f.write_str("reference"),
        }
    }
}

/// One point of an a priori convergence curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRow {
    /// `p` for apriori-p, `N` for apriori-h.
    pub level: usize,
    pub budget: Budget,
    pub error: f64,
    pub iterations: usize,
}

fn solve_and_measure(space: Arc<FeSpace>, problem: &Arc<ProblemDef>, rule: StopRule) -> Result<(f64, usize)> {
    let u0 = CoefVector::zeros(&space);
    let (coef, history) = run_fixed_point(space.clone(), problem.clone(), u0, rule)?;
    Ok((true_error(&space, &coef, problem)?, history.len()))
}

fn apriori_rows(config: &ExperimentConfig, level: usize, space: Arc<FeSpace>, steps_per_budget: usize) -> Result<Vec<ErrorRow>> {
    let problem = Arc::new(builtin(&config.problem, config.eps)?);
    if problem.exact.is_none() {
        return Err(invalid(format!("problem '{}' has no exact solution", config.problem)));
    }
    let mut rows = Vec::new();
    for &c in &config.budgets {
        let (error, iterations) = solve_and_measure(space.clone(), &problem, StopRule::MaxIterations(c * steps_per_budget))?;
        rows.push(ErrorRow { level, budget: Budget::Steps(c), error, iterations });
    }
    let rule = StopRule::Residual { tol: config.tolerance, max_iterations: config.max_iterations };
    let (error, iterations) = solve_and_measure(space, &problem, rule)?;
    if iterations >= config.max_iterations {
        log::warn!("reference run at level {level} stopped at the step cap");
    }
    rows.push(ErrorRow { level, budget: Budget::Reference, error, iterations });
    Ok(rows)
}

/// Fixed mesh, increasing `p`, budgets `C_p·p` plus a reference run.
pub fn run_apriori_p(config: &ExperimentConfig) -> Result<Vec<ErrorRow>> {
    config.validate(Experiment::AprioriP)?;
    let mesh = Arc::new(config.uniform_mesh(config.n)?);
    let mut rows = Vec::new();
    for p in config.p_min..=config.p_max {
        let space = Arc::new(build_space(mesh.clone(), p)?);
        rows.extend(apriori_rows(config, p, space, p)?);
    }
    Ok(rows)
}

/// Fixed `p`, meshes `2^N x 2^N`, budgets `C_N·N` plus a reference run.
pub fn run_apriori_h(config: &ExperimentConfig) -> Result<Vec<ErrorRow>> {
    config.validate(Experiment::AprioriH)?;
    let mut rows = Vec::new();
    for level in config.level_min..=config.level_max {
        let mesh = Arc::new(config.uniform_mesh(1 << level)?);
        let space = Arc::new(build_space(mesh, config.p)?);
        rows.extend(apriori_rows(config, level, space, level)?);
    }
    Ok(rows)
}

/// Writes `<level_name>,budget,error` rows.
pub fn write_error_csv<W: Write>(mut w: W, level_name: &str, rows: &[ErrorRow]) -> Result<()> {
    writeln!(w, "{level_name},budget,error")?;
    for r in rows {
        writeln!(w, "{},{},{:.10e}", r.level, r.budget, r.error)?;
    }
    Ok(())
}

/// One adaptive run of a sweep.
#[derive(Debug)]
pub struct AdaptiveRun {
    pub eps: Option<f64>,
    pub report: AdaptReport,
}

/// Runs the adaptive loop, once per `ε` in the sweep or once without a sweep.
///
/// With `out` set, writes per-step and per-mesh CSVs and, if enabled, one VTK file per
/// mesh with the indicators and the vertex values of the solution.
pub fn run_adaptive(config: &ExperimentConfig, out: Option<&Path>) -> Result<Vec<AdaptiveRun>> {
    config.validate(Experiment::Adaptive)?;
    let eps_list: Vec<Option<f64>> = if config.eps_sweep.is_empty() {
        vec![config.eps]
    } else {
        config.eps_sweep.iter().map(|&e| Some(e)).collect()
    };
    let mut runs = Vec::new();
    for eps in eps_list {
        let problem = Arc::new(builtin(&config.problem, eps)?);
        let mesh = match &config.mesh_file {
            Some(path) => read_mesh_text(BufReader::new(File::open(path)?))?,
            None => config.uniform_mesh(config.n)?,
        };
        let adapt = config.adapt_config(problem.theta);
        let stem = match eps {
            Some(e) if !config.eps_sweep.is_empty() => format!("adaptive_eps{e:e}"),
            _ => "adaptive".to_string(),
        };
        let report = adaptive_solve_with(problem, mesh, config.p, &adapt, |snap| {
            if let (Some(dir), true) = (out, config.vtk) {
                let path = dir.join(format!("{stem}_mesh{:03}.vtk", snap.record.mesh_index));
                let vertex_values = vertex_values(snap.space, snap.solution);
                write_vtk(
                    BufWriter::new(File::create(path)?),
                    snap.space.mesh(),
                    &[
                        DataField { name: "eta", values: &snap.indicators.eta },
                        DataField { name: "gamma", values: &snap.indicators.gamma },
                    ],
                    &[DataField { name: "u", values: &vertex_values }],
                )?;
            }
            Ok(())
        })?;
        if let Some(dir) = out {
            write_iterations_csv(BufWriter::new(File::create(dir.join(format!("{stem}_steps.csv")))?), &report.iterations)?;
            write_summary_csv(BufWriter::new(File::create(dir.join(format!("{stem}_summary.csv")))?), &report.records)?;
        }
        runs.push(AdaptiveRun { eps, report });
    }
    Ok(runs)
}

/// Values of a finite element function at the mesh vertices.
fn vertex_values(space: &FeSpace, coef: &CoefVector) -> Vec<f64> {
    // vertex DOFs carry the vertex id
    (0..space.mesh().n_vertices())
        .map(|v| space.free_index(v).map_or(0.0, |i| coef.values[i]))
        .collect()
}

/// Runs `experiment`, writes its outputs and the effective config into `out`, and returns
/// the sorted names of the files in `out`.
pub fn run(experiment: Experiment, config: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(out)?;
    let csv = |name: &str, level: &str, rows: &[ErrorRow]| -> Result<()> {
        write_error_csv(BufWriter::new(File::create(out.join(name))?), level, rows)
    };
    match experiment {
        Experiment::AprioriP => csv("apriori_p.csv", "p", &run_apriori_p(config)?)?,
        Experiment::AprioriH => csv("apriori_h.csv", "N", &run_apriori_h(config)?)?,
        Experiment::Adaptive => {
            run_adaptive(config, Some(out))?;
        }
    }
    std::fs::write(out.join("config.used"), config.to_string())?;
    let mut names: Vec<String> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    Ok(names)
}

/// Groups rows of an error table by budget, ordered by level.
pub fn curves(rows: &[ErrorRow]) -> BTreeMap<String, Vec<(usize, f64)>> {
    let mut out: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        out.entry(r.budget.to_string()).or_default().push((r.level, r.error));
    }
    for v in out.values_mut() {
        v.sort_by_key(|&(l, _)| l);
    }
    out
}
