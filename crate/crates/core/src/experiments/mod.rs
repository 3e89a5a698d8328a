//! Declarative experiment drivers: penalization and mesh rate studies,
//! exterior source identification, and Dirichlet control, with CSV and
//! field outputs and threshold checks.

mod config;

pub use config::{ExperimentConfig, ExperimentKind, KappaSpec, Reference, Thresholds};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::assembly::{
    assemble_exterior_mass, assemble_source, assemble_stiffness, CoefficientField, FemFunction,
};
use crate::benchmark::{l2_distance, l2_distance_mesh, l2_error, ExactSolution, SOURCE};
use crate::control::{optimize, Bounds, ControlProblem, OptimizationResult, OptimizeOptions};
use crate::error::{Error, Result};
use crate::kernel::{FractionalOrder, TailPolicy};
use crate::mesh::{generate_with_dofs, partition_dofs, write_field, Mesh, Region};
use crate::solver::{dirichlet_eliminated, penalized_with};

/// Error table with a least-squares log-log fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub s: f64,
    /// Penalty, for mesh studies.
    pub n: Option<f64>,
    /// `(parameter, error)` rows: `(n, error)` or `(dofs, error)`.
    pub rows: Vec<(f64, f64)>,
    pub slope: f64,
    pub r_squared: f64,
}

impl RateReport {
    /// Fits `log error = a + slope log param` over all rows.
    pub fn fit(s: f64, n: Option<f64>, rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::InvalidArgument(format!("a rate fit needs at least 3 rows, got {}", rows.len())));
        }
        if rows.iter().any(|&(p, e)| !(p > 0.0) || !(e > 0.0)) {
            return Err(Error::InvalidArgument("rate rows must be positive".into()));
        }
        let pts: Vec<(f64, f64)> = rows.iter().map(|&(p, e)| (p.ln(), e.ln())).collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::InvalidArgument("rate parameters must not all coincide".into()));
        }
        let slope = sxy / sxx;
        let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
        Ok(RateReport { s, n, rows, slope, r_squared })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,error\n");
        for (p, e) in &self.rows {
            let _ = writeln!(out, "{p},{e}");
        }
        out
    }
}

/// One optimization run of a control sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRun {
    pub s: f64,
    pub xi: f64,
    pub n: f64,
    pub dofs: usize,
    /// `||z*||` in the control norm.
    pub control_norm: f64,
    /// `||u* - u_d||_{L^2(Omega)}`.
    pub tracking_error: f64,
    /// `||u(0) - u_d||_{L^2(Omega)}`.
    pub baseline_error: f64,
    /// `||z* - z_true|| / ||z_true||` when the data come from a known
    /// control.
    pub recovery_error: Option<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Rates(Vec<RateReport>),
    Control(Vec<ControlRun>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Runs the configured experiment and writes its outputs.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::RateVsN => run_rate_vs_n(cfg).map(Outcome::Rates),
        ExperimentKind::RateVsDofs => run_rate_vs_dofs(cfg).map(Outcome::Rates),
        ExperimentKind::SourceId => run_source_identification(cfg).map(Outcome::Control),
        ExperimentKind::DirichletControl => run_dirichlet_control(cfg).map(Outcome::Control),
    }
}

fn pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))
}

fn kappa_field(mesh: &Mesh, spec: KappaSpec) -> Result<CoefficientField> {
    match spec {
        KappaSpec::Exterior => Ok(CoefficientField::exterior(mesh)),
        KappaSpec::Control => Ok(CoefficientField::control(mesh)),
        KappaSpec::Value(v) => CoefficientField::indicator(mesh, v, |r| r == Region::ControlSupport),
    }
}

fn build_mesh(cfg: &ExperimentConfig, target: usize) -> Result<Mesh> {
    generate_with_dofs(&cfg.geometry_spec()?, target)
}

struct Output {
    root: Option<PathBuf>,
}

impl Output {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        if let Some(root) = &cfg.output {
            std::fs::create_dir_all(root)?;
        }
        Ok(Output { root: cfg.output.clone() })
    }

    fn dir(&self, name: &str) -> Result<Option<PathBuf>> {
        match &self.root {
            None => Ok(None),
            Some(r) => {
                let d = r.join(name);
                std::fs::create_dir_all(&d)?;
                Ok(Some(d))
            }
        }
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        if let Some(r) = &self.root {
            std::fs::write(r.join(name), text)?;
        }
        Ok(())
    }

    fn manifest(&self, cfg: &ExperimentConfig, times: &[(String, f64)], total: f64) -> Result<()> {
        let mut m = String::new();
        let _ = writeln!(m, "fracext {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "[config]");
        m.push_str(&cfg.echo());
        let _ = writeln!(m, "[wall_time_seconds]");
        for (name, t) in times {
            let _ = writeln!(m, "{name} = {t:.3}");
        }
        let _ = writeln!(m, "total = {total:.3}");
        self.write("manifest.txt", &m)
    }
}

fn rate_summary(reports: &[RateReport]) -> String {
    let mut out = String::from("s,n,slope,r_squared,rows\n");
    for r in reports {
        let n = r.n.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.s, n, r.slope, r.r_squared, r.rows.len());
    }
    out
}

/// Penalization study on a fixed mesh: error of the penalized solution
/// against the reference for every `n`, fitted against `n`.
pub fn run_rate_vs_n(cfg: &ExperimentConfig) -> Result<Vec<RateReport>> {
    if cfg.n.len() < 3 {
        return Err(Error::Config(format!("rate_vs_n needs at least 3 values of n, got {}", cfg.n.len())));
    }
    let start = Instant::now();
    let out = Output::new(cfg)?;
    let spec = cfg.geometry_spec()?;
    let dim = spec.dim();
    let mesh = build_mesh(cfg, cfg.dofs[0])?;
    let kappa = kappa_field(&mesh, cfg.kappa_spec())?;
    let m = assemble_exterior_mass(&mesh, &kappa)?;
    let source = assemble_source(&mesh, &|_| SOURCE);
    let free = partition_dofs(&mesh).free_interior();

    let results: Vec<Result<(Vec<RateReport>, f64)>> = pool(cfg)?.install(|| {
        cfg.s
            .par_iter()
            .map(|&s| {
                let t0 = Instant::now();
                let order = FractionalOrder::new(s, dim)?;
                let exact = ExactSolution::new(order);
                let z = exact.interpolate(&mesh);
                let a = assemble_stiffness(&mesh, order, TailPolicy::Analytic)?;
                let reference = match cfg.reference {
                    Reference::Dirichlet => Some(dirichlet_eliminated(&a, &free, &source, z.values(), cfg.tol)?.0),
                    Reference::Exact => None,
                };
                let mut rows = Vec::with_capacity(cfg.n.len());
                let mut last = None;
                for &n in &cfg.n {
                    let (u, _) = penalized_with(&a, &m, n, &source, z.values(), cfg.tol)?;
                    let err = match &reference {
                        Some(u_d) => l2_distance_mesh(&mesh, &u, u_d)?,
                        None => l2_error(&mesh, &u, &|x| exact.eval(x))?,
                    };
                    rows.push((n, err));
                    last = Some(u);
                }
                let report = RateReport::fit(s, None, rows)?;
                if let Some(dir) = out.dir(&format!("s{s}"))? {
                    std::fs::write(dir.join("rates.csv"), report.to_csv())?;
                    if let Some(u) = last {
                        write_field(dir.join("state.field"), &mesh, u.values())?;
                    }
                }
                Ok((vec![report], t0.elapsed().as_secs_f64()))
            })
            .collect()
    });
    finish_rates(cfg, &out, results, start)
}

fn finish_rates(
    cfg: &ExperimentConfig,
    out: &Output,
    results: Vec<Result<(Vec<RateReport>, f64)>>,
    start: Instant,
) -> Result<Vec<RateReport>> {
    let mut reports = Vec::new();
    let mut times = Vec::new();
    for (r, &s) in results.into_iter().zip(&cfg.s) {
        let (reps, t) = r?;
        times.push((format!("s{s}"), t));
        reports.extend(reps);
    }
    out.write("summary.csv", &rate_summary(&reports))?;
    out.manifest(cfg, &times, start.elapsed().as_secs_f64())?;
    Ok(reports)
}

/// Mesh study against the closed-form solution: one error curve per
/// `(s, n)`, fitted against the number of dofs.
pub fn run_rate_vs_dofs(cfg: &ExperimentConfig) -> Result<Vec<RateReport>> {
    let targets = cfg.mesh_targets();
    if targets.len() < 3 {
        return Err(Error::Config(format!("rate_vs_dofs needs at least 3 mesh levels, got {}", targets.len())));
    }
    let start = Instant::now();
    let out = Output::new(cfg)?;
    let dim = cfg.geometry_spec()?.dim();
    let meshes: Vec<Mesh> = targets.iter().map(|&t| build_mesh(cfg, t)).collect::<Result<_>>()?;

    let results: Vec<Result<(Vec<RateReport>, f64)>> = pool(cfg)?.install(|| {
        cfg.s
            .par_iter()
            .map(|&s| {
                let t0 = Instant::now();
                let order = FractionalOrder::new(s, dim)?;
                let exact = ExactSolution::new(order);
                let mut rows = vec![Vec::with_capacity(meshes.len()); cfg.n.len()];
                for mesh in &meshes {
                    let a = assemble_stiffness(mesh, order, TailPolicy::Analytic)?;
                    let m = assemble_exterior_mass(mesh, &kappa_field(mesh, cfg.kappa_spec())?)?;
                    let source = assemble_source(mesh, &|_| SOURCE);
                    let z = exact.interpolate(mesh);
                    for (k, &n) in cfg.n.iter().enumerate() {
                        let (u, _) = penalized_with(&a, &m, n, &source, z.values(), cfg.tol)?;
                        rows[k].push((mesh.num_nodes() as f64, l2_error(mesh, &u, &|x| exact.eval(x))?));
                    }
                }
                let mut reports = Vec::new();
                for (k, &n) in cfg.n.iter().enumerate() {
                    let report = RateReport::fit(s, Some(n), std::mem::take(&mut rows[k]))?;
                    if let Some(dir) = out.dir(&format!("s{s}_n{n}"))? {
                        std::fs::write(dir.join("rates.csv"), report.to_csv())?;
                    }
                    reports.push(report);
                }
                Ok((reports, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });
    finish_rates(cfg, &out, results, start)
}

struct Sweep {
    mesh: Arc<Mesh>,
    problem: ControlProblem,
    z_true: Option<Vec<f64>>,
    baseline: f64,
}

fn optimize_best(problem: &ControlProblem, opts: &OptimizeOptions) -> Result<(OptimizationResult, bool)> {
    let z0 = vec![0.0; problem.control_dofs().len()];
    match optimize(problem, &z0, opts) {
        Ok(r) => Ok((r, true)),
        Err(Error::MaxIterations { best }) => Ok((*best, false)),
        Err(e) => Err(e),
    }
}

fn control_sweep(cfg: &ExperimentConfig, setup: &(dyn Fn(f64, &Arc<Mesh>) -> Result<Sweep> + Sync)) -> Result<Vec<ControlRun>> {
    let start = Instant::now();
    let out = Output::new(cfg)?;
    let mesh = Arc::new(build_mesh(cfg, cfg.dofs[0])?);
    let opts = OptimizeOptions { tol: cfg.opt_tol, max_iter: cfg.max_iter, ..Default::default() };
    let results: Vec<Result<(Vec<ControlRun>, f64)>> = pool(cfg)?.install(|| {
        cfg.s
            .par_iter()
            .map(|&s| {
                let t0 = Instant::now();
                let sweep = setup(s, &mesh)?;
                let mut runs = Vec::new();
                for &xi in &cfg.xi {
                    let prob = sweep.problem.with_xi(xi)?;
                    let (res, converged) = optimize_best(&prob, &opts)?;
                    let tracking = l2_distance(&sweep.mesh, &res.u, prob.target())?;
                    let recovery_error = sweep.z_true.as_ref().map(|zt| {
                        let d: Vec<f64> = res.z.iter().zip(zt).map(|(a, b)| a - b).collect();
                        (prob.control_norm_sq(&d) / prob.control_norm_sq(zt)).sqrt()
                    });
                    if let Some(dir) = out.dir(&format!("s{s}_xi{xi}"))? {
                        write_field(dir.join("control.field"), &sweep.mesh, prob.extend(&res.z).values())?;
                        write_field(dir.join("state.field"), &sweep.mesh, res.u.values())?;
                        write_field(dir.join("adjoint.field"), &sweep.mesh, res.p.values())?;
                        write_field(dir.join("target.field"), &sweep.mesh, prob.target().values())?;
                        res.write_history(dir.join("history.csv"))?;
                    }
                    runs.push(ControlRun {
                        s,
                        xi,
                        n: prob.n(),
                        dofs: sweep.mesh.num_nodes(),
                        control_norm: prob.control_norm_sq(&res.z).sqrt(),
                        tracking_error: tracking,
                        baseline_error: sweep.baseline,
                        recovery_error,
                        objective: res.objective,
                        iterations: res.iterations,
                        converged,
                    });
                }
                Ok((runs, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut runs = Vec::new();
    let mut times = Vec::new();
    for (r, &s) in results.into_iter().zip(&cfg.s) {
        let (rs, t) = r?;
        times.push((format!("s{s}"), t));
        runs.extend(rs);
    }
    out.write("summary.csv", &control_summary(&runs))?;
    out.manifest(cfg, &times, start.elapsed().as_secs_f64())?;
    Ok(runs)
}

fn control_summary(runs: &[ControlRun]) -> String {
    let mut out = String::from(
        "s,xi,n,dofs,control_norm,tracking_error,baseline_error,recovery_error,objective,iterations,converged\n",
    );
    for r in runs {
        let rec = r.recovery_error.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.s,
            r.xi,
            r.n,
            r.dofs,
            r.control_norm,
            r.tracking_error,
            r.baseline_error,
            rec,
            r.objective,
            r.iterations,
            r.converged
        );
    }
    out
}

fn base_problem(cfg: &ExperimentConfig, s: f64, mesh: &Arc<Mesh>) -> Result<ControlProblem> {
    let order = FractionalOrder::new(s, mesh.dim())?;
    let a = assemble_stiffness(mesh, order, TailPolicy::Analytic)?;
    let kappa = kappa_field(mesh, cfg.kappa_spec())?;
    let prob = ControlProblem::from_stiffness(
        mesh.clone(),
        order,
        &a,
        cfg.variant,
        cfg.n[0],
        &kappa,
        cfg.xi[0],
        FemFunction::zeros(mesh),
    )?;
    let len = prob.control_dofs().len();
    let bounds = match cfg.lower_bound {
        Some(l) => Bounds { lower: vec![l; len], upper: vec![f64::INFINITY; len] },
        None => Bounds::unbounded(len),
    };
    prob.with_bounds(bounds)
}

/// Identifies an exterior source from noisy interior observations of the
/// state generated by `z = 1` on the support.
pub fn run_source_identification(cfg: &ExperimentConfig) -> Result<Vec<ControlRun>> {
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(format!("noise_std: {e}")))?;
    control_sweep(cfg, &|s, mesh| {
        let prob = base_problem(cfg, s, mesh)?;
        let z_true = vec![1.0; prob.control_dofs().len()];
        let (clean, _) = prob.state(&z_true)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let observed: Vec<f64> = clean.values().iter().map(|v| v + noise.sample(&mut rng)).collect();
        let target = FemFunction::from(observed);
        let uncontrolled = prob.state(&vec![0.0; z_true.len()])?.0;
        let baseline = l2_distance(mesh, &uncontrolled, &target)?;
        Ok(Sweep { mesh: mesh.clone(), problem: prob.with_target(target)?, z_true: Some(z_true), baseline })
    })
}

/// Dirichlet control towards `u_d = 1` on `Omega`.
pub fn run_dirichlet_control(cfg: &ExperimentConfig) -> Result<Vec<ControlRun>> {
    control_sweep(cfg, &|s, mesh| {
        let prob = base_problem(cfg, s, mesh)?;
        let target = FemFunction::interpolate(mesh, |_| 1.0);
        let uncontrolled = prob.state(&vec![0.0; prob.control_dofs().len()])?.0;
        let baseline = l2_distance(mesh, &uncontrolled, &target)?;
        Ok(Sweep { mesh: mesh.clone(), problem: prob.with_target(target)?, z_true: None, baseline })
    })
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

/// Evaluates the configured thresholds against an outcome.
pub fn check(cfg: &ExperimentConfig, result: &Outcome) -> Vec<CheckResult> {
    let th = &cfg.thresholds;
    let mut out = Vec::new();
    match result {
        Outcome::Rates(reports) => {
            if th.slope_min.is_some() || th.slope_max.is_some() {
                let lo = th.slope_min.unwrap_or(f64::NEG_INFINITY);
                let hi = th.slope_max.unwrap_or(f64::INFINITY);
                for r in reports {
                    let label = match r.n {
                        Some(n) => format!("slope s={} n={}", r.s, n),
                        None => format!("slope s={}", r.s),
                    };
                    out.push(outcome(&label, r.slope >= lo && r.slope <= hi, format!("{:.4} in [{lo}, {hi}]", r.slope)));
                }
            }
            if let Some(tol) = th.n_stability {
                for &s in &cfg.s {
                    let curves: Vec<&RateReport> = reports.iter().filter(|r| r.s == s && r.n.is_some()).collect();
                    let Some(reference) = curves.iter().max_by(|a, b| a.n.partial_cmp(&b.n).unwrap()) else { continue };
                    let mut worst = 0.0f64;
                    for c in &curves {
                        for (row, ref_row) in c.rows.iter().zip(&reference.rows) {
                            worst = worst.max((row.1 - ref_row.1).abs() / ref_row.1);
                        }
                    }
                    out.push(outcome(&format!("n-stability s={s}"), worst < tol, format!("max deviation {worst:.4} < {tol}")));
                }
            }
        }
        Outcome::Control(runs) => {
            let mut s_values: Vec<f64> = runs.iter().map(|r| r.s).collect();
            s_values.dedup();
            let mut xis: Vec<f64> = runs.iter().map(|r| r.xi).collect();
            xis.sort_by(|a, b| b.partial_cmp(a).unwrap());
            xis.dedup();
            let find = |s: f64, xi: f64| runs.iter().find(|r| r.s == s && r.xi == xi);
            if th.monotone_xi {
                for &s in &s_values {
                    let norms: Vec<f64> = xis.iter().filter_map(|&xi| find(s, xi)).map(|r| r.control_norm).collect();
                    let ok = norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
                    out.push(outcome(&format!("monotone in xi s={s}"), ok, format!("norms by decreasing xi {norms:?}")));
                }
            }
            if let Some(sat) = th.saturation_xi {
                let tol = th.saturation_tol.unwrap_or(0.1);
                for &s in &s_values {
                    let norms: Vec<f64> =
                        xis.iter().filter(|&&xi| xi <= sat).filter_map(|&xi| find(s, xi)).map(|r| r.control_norm).collect();
                    let max = norms.iter().cloned().fold(0.0, f64::max);
                    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
                    let spread = if max > 0.0 { (max - min) / max } else { 0.0 };
                    out.push(outcome(
                        &format!("saturation by xi={sat} s={s}"),
                        norms.len() >= 2 && spread <= tol,
                        format!("relative spread {spread:.4} <= {tol} over {} runs", norms.len()),
                    ));
                }
            }
            let s_min = s_values.iter().cloned().fold(f64::INFINITY, f64::min);
            let s_max = s_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if let Some(ratio) = th.ratio_max {
                for &xi in &xis {
                    if let (Some(lo), Some(hi)) = (find(s_min, xi), find(s_max, xi)) {
                        let r = hi.control_norm / lo.control_norm;
                        out.push(outcome(
                            &format!("norm ratio s={s_max}/s={s_min} xi={xi}"),
                            r <= ratio,
                            format!("{r:.4} <= {ratio}"),
                        ));
                    }
                }
            }
            if let Some(bound) = th.recovery_max {
                let xi_min = xis.last().cloned().unwrap_or(0.0);
                let rec = find(s_min, xi_min).and_then(|r| r.recovery_error).unwrap_or(f64::INFINITY);
                out.push(outcome(
                    &format!("recovery s={s_min} xi={xi_min}"),
                    rec < bound,
                    format!("relative control error {rec:.4} < {bound}"),
                ));
            }
            if th.tracking_order {
                for &xi in &xis {
                    if let (Some(lo), Some(hi)) = (find(s_min, xi), find(s_max, xi)) {
                        out.push(outcome(
                            &format!("tracking s={s_min} < s={s_max} xi={xi}"),
                            lo.tracking_error < hi.tracking_error,
                            format!("{:.4e} < {:.4e}", lo.tracking_error, hi.tracking_error),
                        ));
                    }
                }
            }
            if th.below_baseline {
                for r in runs {
                    out.push(outcome(
                        &format!("below baseline s={} xi={}", r.s, r.xi),
                        r.tracking_error < r.baseline_error,
                        format!("{:.4e} < {:.4e}", r.tracking_error, r.baseline_error),
                    ));
                }
            }
        }
    }
    out
}

/// Output directory used when the configuration names none.
pub fn default_output(config_path: &Path) -> PathBuf {
    let stem = config_path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    PathBuf::from("out").join(stem)
}
