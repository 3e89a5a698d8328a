//! Reduced optimization for exterior control: objective, adjoint-based
//! gradient, box projection, and a projected limited-memory BFGS driver.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::assembly::{
    assemble_cell_mass, assemble_exterior_mass, assemble_interior_mass, assemble_stiffness, CoefficientField,
    FemFunction, SymmetricSparseMatrix,
};
use crate::error::{Error, Result};
use crate::kernel::{FractionalOrder, TailPolicy};
use crate::mesh::{partition_dofs, Mesh, Region};
use crate::solver::{dot, PreparedOperator, DEFAULT_TOL};

/// Operators at or below this size are factorized densely for the many
/// repeated solves of an optimization run.
pub const CONTROL_DIRECT_THRESHOLD: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// `N_s u + n kappa u = n kappa z`, control norm unweighted.
    DirichletViaRobin,
    /// `N_s u + kappa u = kappa z`, control norm weighted by `kappa`.
    Robin,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dirichlet" => Ok(Variant::DirichletViaRobin),
            "robin" => Ok(Variant::Robin),
            _ => Err(Error::Config(format!("unknown control variant '{s}' (expected dirichlet or robin)"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::DirichletViaRobin => "dirichlet",
            Variant::Robin => "robin",
        })
    }
}

/// Componentwise box on the control dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// `z >= 0`.
    pub fn nonnegative(len: usize) -> Self {
        Bounds { lower: vec![0.0; len], upper: vec![f64::INFINITY; len] }
    }

    pub fn unbounded(len: usize) -> Self {
        Bounds { lower: vec![f64::NEG_INFINITY; len], upper: vec![f64::INFINITY; len] }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::InvalidArgument("bound vectors differ in length".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidArgument("lower bound exceeds upper bound".into()));
        }
        Ok(())
    }
}

/// `max(lower, min(upper, z))`.
pub fn project(z: &[f64], bounds: &Bounds) -> Vec<f64> {
    z.iter().zip(bounds.lower.iter().zip(&bounds.upper)).map(|(&v, (&l, &u))| v.min(u).max(l)).collect()
}

/// Exterior control problem with tracking on `Omega`:
/// `J(z) = 1/2 ||u(z) - u_d||^2 + xi/2 ||z||^2`.
#[derive(Clone)]
pub struct ControlProblem {
    mesh: Arc<Mesh>,
    order: FractionalOrder,
    variant: Variant,
    n: f64,
    xi: f64,
    u_d: FemFunction,
    source: Vec<f64>,
    bounds: Bounds,
    control: Vec<usize>,
    operator: Arc<PreparedOperator>,
    // coupling `c M_kappa`, restricted to columns on control dofs
    coupling: Arc<Coupling>,
    tracking: Arc<SymmetricSparseMatrix>,
    // control mass restricted to control dofs and its lumped diagonal
    control_mass: Arc<SymmetricSparseMatrix>,
    lumped: Arc<Vec<f64>>,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("order", &self.order)
            .field("variant", &self.variant)
            .field("n", &self.n)
            .field("xi", &self.xi)
            .field("control_dofs", &self.control.len())
            .finish()
    }
}

impl ControlProblem {
    /// Assembles the stiffness matrix and builds the problem with zero
    /// source and `z >= 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: Mesh,
        order: FractionalOrder,
        variant: Variant,
        n: f64,
        kappa: &CoefficientField,
        xi: f64,
        u_d: FemFunction,
    ) -> Result<Self> {
        let a = assemble_stiffness(&mesh, order, TailPolicy::Analytic)?;
        Self::from_stiffness(Arc::new(mesh), order, &a, variant, n, kappa, xi, u_d)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_stiffness(
        mesh: Arc<Mesh>,
        order: FractionalOrder,
        a: &SymmetricSparseMatrix,
        variant: Variant,
        n: f64,
        kappa: &CoefficientField,
        xi: f64,
        u_d: FemFunction,
    ) -> Result<Self> {
        if !(n >= 1.0) {
            return Err(Error::InvalidArgument(format!("penalty must be at least 1, got {n}")));
        }
        if !(xi >= 0.0) {
            return Err(Error::InvalidArgument(format!("regularization weight must be nonnegative, got {xi}")));
        }
        if u_d.len() != mesh.num_nodes() || a.dim() != mesh.num_nodes() {
            return Err(Error::InvalidArgument("target or stiffness does not match the mesh".into()));
        }
        let control = partition_dofs(&mesh).control;
        if control.is_empty() {
            return Err(Error::InvalidArgument("mesh has no control support".into()));
        }
        if kappa.integral(&mesh) <= 0.0 {
            return Err(Error::InvalidArgument("coefficient vanishes; the state equation is not coupled to the control".into()));
        }
        let m = assemble_exterior_mass(&mesh, kappa)?;
        let c = match variant {
            Variant::DirichletViaRobin => n,
            Variant::Robin => 1.0,
        };
        let k = a.add_scaled(&m, c)?;
        let operator = PreparedOperator::new(k, DEFAULT_TOL, CONTROL_DIRECT_THRESHOLD)?;

        // control mass over the support cells; kappa-weighted for Robin
        let weights: Vec<f64> = (0..mesh.num_cells())
            .map(|cell| match (mesh.region(cell), variant) {
                (Region::ControlSupport, Variant::DirichletViaRobin) => 1.0,
                (Region::ControlSupport, Variant::Robin) => kappa.per_cell()[cell],
                _ => 0.0,
            })
            .collect();
        let control_mass = assemble_cell_mass(&mesh, &weights)?.restrict(&control);
        let lumped: Vec<f64> = (0..control.len()).map(|i| control_mass.row(i).1.iter().sum()).collect();
        if lumped.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::InvalidArgument("control mass is degenerate on the support".into()));
        }

        let mut trip = Vec::new();
        let mut pos = vec![usize::MAX; mesh.num_nodes()];
        for (k, &i) in control.iter().enumerate() {
            pos[i] = k;
        }
        for (i, j, v) in m.iter() {
            if pos[j] != usize::MAX {
                trip.push((i, pos[j], c * v));
            }
        }
        let coupling = Coupling::new(mesh.num_nodes(), control.len(), &trip);

        let bounds = Bounds::nonnegative(control.len());
        Ok(ControlProblem {
            source: vec![0.0; mesh.num_nodes()],
            tracking: Arc::new(assemble_interior_mass(&mesh)),
            mesh,
            order,
            variant,
            n,
            xi,
            u_d,
            bounds,
            control,
            operator: Arc::new(operator),
            coupling: Arc::new(coupling),
            control_mass: Arc::new(control_mass),
            lumped: Arc::new(lumped),
        })
    }

    pub fn with_xi(&self, xi: f64) -> Result<Self> {
        if !(xi >= 0.0) {
            return Err(Error::InvalidArgument(format!("regularization weight must be nonnegative, got {xi}")));
        }
        Ok(ControlProblem { xi, ..self.clone() })
    }

    pub fn with_target(&self, u_d: FemFunction) -> Result<Self> {
        if u_d.len() != self.mesh.num_nodes() {
            return Err(Error::InvalidArgument("target does not match the mesh".into()));
        }
        Ok(ControlProblem { u_d, ..self.clone() })
    }

    pub fn with_bounds(&self, bounds: Bounds) -> Result<Self> {
        bounds.validate()?;
        if bounds.len() != self.control.len() {
            return Err(Error::InvalidArgument("bounds do not match the control dofs".into()));
        }
        Ok(ControlProblem { bounds, ..self.clone() })
    }

    /// Interior load `int_Omega f phi_i`.
    pub fn with_source(&self, source: Vec<f64>) -> Result<Self> {
        if source.len() != self.mesh.num_nodes() {
            return Err(Error::InvalidArgument("source does not match the mesh".into()));
        }
        Ok(ControlProblem { source, ..self.clone() })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn order(&self) -> FractionalOrder {
        self.order
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn target(&self) -> &FemFunction {
        &self.u_d
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Global node ids of the control dofs.
    pub fn control_dofs(&self) -> &[usize] {
        &self.control
    }

    /// Consistent control mass on the control dofs.
    pub fn control_mass(&self) -> &SymmetricSparseMatrix {
        &self.control_mass
    }

    /// Diagonal of the lumped control mass.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    /// `||z||^2` in the control norm.
    pub fn control_norm_sq(&self, z: &[f64]) -> f64 {
        self.control_mass.inner(z, z)
    }

    /// Inner product used for gradients and quasi-Newton updates.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(self.lumped.iter()).map(|((x, y), d)| d * x * y).sum()
    }

    /// Extends a control vector by zero to all nodes.
    pub fn extend(&self, z: &[f64]) -> FemFunction {
        let mut v = vec![0.0; self.mesh.num_nodes()];
        for (&i, &zi) in self.control.iter().zip(z) {
            v[i] = zi;
        }
        FemFunction::from(v)
    }

    fn check_len(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.control.len() {
            return Err(Error::InvalidArgument(format!(
                "control vector has length {}, expected {}",
                z.len(),
                self.control.len()
            )));
        }
        Ok(())
    }

    fn coupled(&self, z: &[f64]) -> Vec<f64> {
        self.coupling.mul(z)
    }

    /// State `u(z)` and the solver iteration count.
    pub fn state(&self, z: &[f64]) -> Result<(FemFunction, usize)> {
        self.check_len(z)?;
        let rhs: Vec<f64> = self.source.iter().zip(self.coupled(z)).map(|(b, v)| b + v).collect();
        let (u, rep) = self.operator.solve(&rhs)?;
        Ok((FemFunction::from(u), rep.iterations))
    }

    /// The linear control-to-state map without source.
    pub fn apply_state(&self, z: &[f64]) -> Result<FemFunction> {
        self.check_len(z)?;
        Ok(FemFunction::from(self.operator.solve(&self.coupled(z))?.0))
    }

    /// Adjoint state for the tracking residual `w`: `K p = M_Omega w`.
    pub fn adjoint(&self, w: &[f64]) -> Result<FemFunction> {
        Ok(FemFunction::from(self.operator.solve(&self.tracking.mul(w))?.0))
    }

    /// The adjoint of [`Self::apply_state`] with respect to the interior
    /// `L^2` product and the control inner product.
    pub fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        let p = self.adjoint(w)?;
        Ok(self.riesz(&self.coupling.tmul(p.values())))
    }

    fn riesz(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(self.lumped.iter()).map(|(x, d)| x / d).collect()
    }

    /// `(w, v)_{L^2(Omega)}`.
    pub fn interior_inner(&self, w: &[f64], v: &[f64]) -> f64 {
        self.tracking.inner(w, v)
    }

    fn misfit(&self, u: &FemFunction) -> Vec<f64> {
        u.values().iter().zip(self.u_d.values()).map(|(a, b)| a - b).collect()
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        let (u, _) = self.state(z)?;
        Ok(self.objective_at(z, &u))
    }

    fn objective_at(&self, z: &[f64], u: &FemFunction) -> f64 {
        let r = self.misfit(u);
        0.5 * self.tracking.inner(&r, &r) + 0.5 * self.xi * self.control_norm_sq(z)
    }

    /// Riesz representative of the reduced gradient in the control inner
    /// product.
    pub fn reduced_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (u, _) = self.state(z)?;
        Ok(self.gradient_at(z, &u)?.0)
    }

    fn gradient_at(&self, z: &[f64], u: &FemFunction) -> Result<(Vec<f64>, FemFunction)> {
        let p = self.adjoint(&self.misfit(u))?;
        let mut g = self.coupling.tmul(p.values());
        for (gi, mz) in g.iter_mut().zip(self.control_mass.mul(z)) {
            *gi += self.xi * mz;
        }
        Ok((self.riesz(&g), p))
    }
}

/// Sparse rectangular matrix, rows over all nodes and columns over the
/// control dofs.
#[derive(Debug, Clone)]
struct Coupling {
    rows: Vec<Vec<(usize, f64)>>,
    cols: usize,
}

impl Coupling {
    fn new(nrows: usize, cols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(i, j, v) in trip {
            rows[i].push((j, v));
        }
        Coupling { rows, cols }
    }

    fn mul(&self, z: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * z[j]).sum()).collect()
    }

    fn tmul(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &pi) in self.rows.iter().zip(p) {
            for &(j, v) in r {
                out[j] += v * pi;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// Stop once the projected-gradient norm falls below `tol` times its
    /// initial value.
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
    pub armijo: f64,
    pub backtrack: f64,
    pub initial_step: f64,
    pub min_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            tol: 1e-8,
            max_iter: 500,
            memory: 10,
            armijo: 1e-4,
            backtrack: 0.5,
            initial_step: 1.0,
            min_step: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    pub objective: f64,
    pub projected_gradient_norm: f64,
    pub step: f64,
    pub state_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    /// Control on the control dofs.
    pub z: Vec<f64>,
    pub u: FemFunction,
    pub p: FemFunction,
    pub gradient: Vec<f64>,
    pub objective: f64,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub history: Vec<HistoryRow>,
}

impl OptimizationResult {
    pub fn write_history(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iteration,objective,projected_gradient_norm,step,state_iterations")?;
        for r in &self.history {
            writeln!(f, "{},{},{},{},{}", r.iteration, r.objective, r.projected_gradient_norm, r.step, r.state_iterations)?;
        }
        f.flush()?;
        Ok(())
    }
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
}

/// Projected limited-memory BFGS with Armijo backtracking along the
/// projected path. Quasi-Newton scaling acts on the inactive set; bound
/// constrained components take projected gradient steps.
pub fn optimize(problem: &ControlProblem, z0: &[f64], opts: &OptimizeOptions) -> Result<OptimizationResult> {
    problem.check_len(z0)?;
    if !(opts.tol > 0.0) || !(opts.armijo > 0.0 && opts.armijo < 1.0) || !(opts.backtrack > 0.0 && opts.backtrack < 1.0) {
        return Err(Error::InvalidArgument("optimizer options out of range".into()));
    }
    let bounds = problem.bounds();
    let d = problem.lumped_mass();
    let mut z = project(z0, bounds);
    let (mut u, mut state_its) = problem.state(&z)?;
    let mut j = problem.objective_at(&z, &u);
    let (mut g, mut p) = problem.gradient_at(&z, &u)?;
    let pg_vec = |z: &[f64], g: &[f64]| -> Vec<f64> {
        let trial: Vec<f64> = z.iter().zip(g).map(|(a, b)| a - b).collect();
        z.iter().zip(project(&trial, bounds)).map(|(a, b)| a - b).collect()
    };
    let mut pg = pg_vec(&z, &g);
    let mut pg_norm = problem.inner(&pg, &pg).sqrt();
    let target = opts.tol * pg_norm;
    let mut history =
        vec![HistoryRow { iteration: 0, objective: j, projected_gradient_norm: pg_norm, step: 0.0, state_iterations: state_its }];
    let mut memory: VecDeque<Pair> = VecDeque::new();
    let result = |z: Vec<f64>, u, p, g, j, pg_norm, k, history| OptimizationResult {
        z,
        u,
        p,
        gradient: g,
        objective: j,
        projected_gradient_norm: pg_norm,
        iterations: k,
        history,
    };

    let mut k = 0;
    while pg_norm > target {
        if k == opts.max_iter {
            let best = result(z, u, p, g, j, pg_norm, k, history);
            return Err(Error::MaxIterations { best: Box::new(best) });
        }
        k += 1;

        let eps = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let active: Vec<bool> = (0..z.len())
            .map(|i| (z[i] - bounds.lower[i] <= eps && g[i] > 0.0) || (bounds.upper[i] - z[i] <= eps && g[i] < 0.0))
            .collect();
        let masked = |a: &[f64], b: &[f64]| -> f64 {
            (0..a.len()).filter(|&i| !active[i]).map(|i| d[i] * a[i] * b[i]).sum()
        };

        let mut dir = two_loop(&g, &memory, &active, &masked);
        let mut gd = problem.inner(&g, &dir);
        if !(gd < 0.0) {
            memory.clear();
            dir = g.iter().map(|v| -v).collect();
            gd = -problem.inner(&g, &g);
        }
        debug_assert!(gd < 0.0);

        let mut alpha = opts.initial_step;
        let (z_new, delta_u, dj) = loop {
            let trial: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + alpha * b).collect();
            let z_t = project(&trial, bounds);
            let step: Vec<f64> = z_t.iter().zip(&z).map(|(a, b)| a - b).collect();
            let du = problem.apply_state(&step)?;
            let dj = objective_change(problem, &z, &u, &step, &du);
            let slope = problem.inner(&g, &step);
            if dj < 0.0 && dj <= opts.armijo * slope {
                break (z_t, du, dj);
            }
            alpha *= opts.backtrack;
            if alpha < opts.min_step {
                return Err(Error::LineSearchFailure { iteration: k, min_step: opts.min_step });
            }
        };

        let (u_new, its) = problem.state(&z_new)?;
        debug_assert!(u_new.values().iter().zip(u.values()).zip(delta_u.values()).all(|((a, b), c)| {
            (a - b - c).abs() <= 1e-6 * (1.0 + a.abs())
        }));
        state_its = its;
        let (g_new, p_new) = problem.gradient_at(&z_new, &u_new)?;
        let s: Vec<f64> = z_new.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = problem.inner(&s, &y);
        if sy > 1e-12 * problem.inner(&s, &s).sqrt() * problem.inner(&y, &y).sqrt() {
            memory.push_back(Pair { s, y });
            if memory.len() > opts.memory {
                memory.pop_front();
            }
        }
        z = z_new;
        u = u_new;
        g = g_new;
        p = p_new;
        j += dj;
        pg = pg_vec(&z, &g);
        pg_norm = problem.inner(&pg, &pg).sqrt();
        history.push(HistoryRow {
            iteration: k,
            objective: j,
            projected_gradient_norm: pg_norm,
            step: alpha,
            state_iterations: state_its,
        });
    }
    let j_final = problem.objective_at(&z, &u);
    Ok(result(z, u, p, g, j_final, pg_norm, k, history))
}

/// `H g` on the inactive set by the two-loop recursion, `-g` on the active
/// set. Pairs whose curvature on the inactive set is not positive are
/// skipped.
fn two_loop(g: &[f64], memory: &VecDeque<Pair>, active: &[bool], masked: &dyn Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let mut q: Vec<f64> = g.iter().zip(active).map(|(&v, &a)| if a { 0.0 } else { v }).collect();
    let usable: Vec<(&Pair, f64)> = memory
        .iter()
        .filter_map(|pair| {
            let sy = masked(&pair.s, &pair.y);
            let ss = masked(&pair.s, &pair.s);
            let yy = masked(&pair.y, &pair.y);
            (sy > 1e-12 * (ss * yy).sqrt()).then_some((pair, 1.0 / sy))
        })
        .collect();
    let mut alphas = Vec::with_capacity(usable.len());
    for &(pair, rho) in usable.iter().rev() {
        let a = rho * masked(&pair.s, &q);
        for (i, qi) in q.iter_mut().enumerate() {
            if !active[i] {
                *qi -= a * pair.y[i];
            }
        }
        alphas.push(a);
    }
    alphas.reverse();
    let gamma = usable.last().map(|&(pair, rho)| 1.0 / (rho * masked(&pair.y, &pair.y))).unwrap_or(1.0);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for (&(pair, rho), a) in usable.iter().zip(alphas) {
        let b = rho * masked(&pair.y, &q);
        for (i, qi) in q.iter_mut().enumerate() {
            if !active[i] {
                *qi += (a - b) * pair.s[i];
            }
        }
    }
    q.iter().zip(g).zip(active).map(|((&h, &gi), &a)| if a { -gi } else { -h }).collect()
}

/// `J(z + dz) - J(z)` evaluated from the increments, free of the
/// cancellation in subtracting two objective values.
fn objective_change(problem: &ControlProblem, z: &[f64], u: &FemFunction, dz: &[f64], du: &FemFunction) -> f64 {
    let r = problem.misfit(u);
    let du = du.values();
    let m = &problem.tracking;
    let tracking = m.inner(du, &r) + 0.5 * m.inner(du, du);
    let mz = problem.control_mass.mul(z);
    let reg = dot(dz, &mz) + 0.5 * problem.control_norm_sq(dz);
    tracking + problem.xi * reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, GeometrySpec};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small(variant: Variant, xi: f64) -> ControlProblem {
        let spec = GeometrySpec::Interval { omega: (-0.5, 0.5), outer: (-1.5, 1.5), control: vec![(0.7, 1.2)] };
        let mesh = generate(&spec, 0.1).unwrap();
        let order = FractionalOrder::new(0.4, 1).unwrap();
        let kappa = CoefficientField::control(&mesh);
        let u_d = FemFunction::interpolate(&mesh, |x| 0.3 + 0.2 * x[0]);
        ControlProblem::new(mesh, order, variant, 1e3, &kappa, xi, u_d).unwrap()
    }

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn projection_examples() {
        let b = Bounds::nonnegative(2);
        assert_eq!(project(&[-1.0, 0.5], &b), vec![0.0, 0.5]);
        assert_eq!(project(&[0.2, 3.0], &b), vec![0.2, 3.0]);
        let once = project(&[-2.0, 1.0], &b);
        assert_eq!(project(&once, &b), once);
    }

    #[test]
    fn invalid_bounds_rejected() {
        let b = Bounds { lower: vec![1.0], upper: vec![0.0] };
        assert!(b.validate().is_err());
    }

    #[test]
    fn trivial_objective_values() {
        let prob = small(Variant::DirichletViaRobin, 0.0);
        let m = prob.control_dofs().len();
        let zero = prob.with_target(FemFunction::zeros(prob.mesh())).unwrap();
        assert_eq!(zero.objective(&vec![0.0; m]).unwrap(), 0.0);

        let z0: Vec<f64> = (0..m).map(|i| 1.0 + 0.1 * i as f64).collect();
        let (u0, _) = prob.state(&z0).unwrap();
        let fit = prob.with_target(u0).unwrap();
        assert!(fit.objective(&z0).unwrap().abs() < 1e-28);
        assert!(fit.reduced_gradient(&z0).unwrap().iter().all(|g| g.abs() < 1e-12));

        let reg = fit.with_xi(0.3).unwrap();
        let expect = 0.15 * reg.control_norm_sq(&z0);
        assert!((reg.objective(&z0).unwrap() - expect).abs() < 1e-14 * expect);
        let g = reg.reduced_gradient(&z0).unwrap();
        let mz = reg.control_mass.mul(&z0);
        for i in 0..m {
            assert!((g[i] - 0.3 * mz[i] / reg.lumped_mass()[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_consistency() {
        for variant in [Variant::DirichletViaRobin, Variant::Robin] {
            let prob = small(variant, 0.0);
            let z = random(prob.control_dofs().len(), 1);
            let w = random(prob.mesh().num_nodes(), 2);
            let sz = prob.apply_state(&z).unwrap();
            let lhs = prob.interior_inner(&w, sz.values());
            let rhs = prob.inner(&prob.apply_adjoint(&w).unwrap(), &z);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-3), "{variant}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for variant in [Variant::DirichletViaRobin, Variant::Robin] {
            let prob = small(variant, 1e-2);
            let m = prob.control_dofs().len();
            let z: Vec<f64> = random(m, 3).iter().map(|v| v + 2.0).collect();
            let g = prob.reduced_gradient(&z).unwrap();
            for seed in 10..15 {
                let dz = random(m, seed);
                let fd = |h: f64| {
                    let zp: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + h * b).collect();
                    let zm: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a - h * b).collect();
                    (prob.objective(&zp).unwrap() - prob.objective(&zm).unwrap()) / (2.0 * h)
                };
                let (d1, d2) = (fd(1e-5), fd(5e-6));
                let richardson = (4.0 * d2 - d1) / 3.0;
                let exact = prob.inner(&g, &dz);
                assert!((richardson - exact).abs() < 1e-5 * exact.abs(), "{variant}: {richardson} vs {exact}");
            }
        }
    }

    #[test]
    fn unconstrained_quadratic_matches_normal_equations() {
        let prob = small(Variant::DirichletViaRobin, 1e-3);
        let m = prob.control_dofs().len();
        let prob = prob.with_bounds(Bounds::unbounded(m)).unwrap();
        // dense reduced Hessian column by column
        let mut s_cols = Vec::new();
        for k in 0..m {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            s_cols.push(prob.apply_state(&e).unwrap().into_values());
        }
        let mut h = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        let u_free = prob.state(&vec![0.0; m]).unwrap().0;
        let r: Vec<f64> = prob.target().values().iter().zip(u_free.values()).map(|(a, b)| a - b).collect();
        for a in 0..m {
            for b in 0..m {
                h[(a, b)] = prob.interior_inner(&s_cols[a], &s_cols[b]) + prob.xi() * prob.control_mass.get(a, b);
            }
            rhs[a] = prob.interior_inner(&s_cols[a], &r);
        }
        let z_exact = h.cholesky().unwrap().solve(&rhs);
        let res = optimize(&prob, &vec![0.0; m], &OptimizeOptions::default()).unwrap();
        let err: f64 = res.z.iter().zip(z_exact.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * z_exact.norm(), "err {err}");
        assert!(res.projected_gradient_norm <= 1e-8 * res.history[0].projected_gradient_norm);
    }

    #[test]
    fn descent_and_stationarity_with_bounds() {
        let prob = small(Variant::DirichletViaRobin, 1e-4);
        let target = FemFunction::interpolate(prob.mesh(), |x| 0.5 - x[0]);
        let prob = prob.with_target(target).unwrap();
        let m = prob.control_dofs().len();
        let res = optimize(&prob, &vec![1.0; m], &OptimizeOptions::default()).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        assert!(res.z.iter().all(|&v| v >= 0.0));
        assert!(res.z.iter().any(|&v| v == 0.0), "expected an active bound");
        let resid: Vec<f64> = res.z.iter().zip(&res.gradient).map(|(a, b)| a.min(*b)).collect();
        let norm = prob.inner(&resid, &resid).sqrt();
        assert!(norm <= 10.0 * 1e-8 * res.history[0].projected_gradient_norm);
    }

    #[test]
    fn inverse_crime_recovers_control() {
        // three control dofs: the exterior-to-interior map is severely
        // smoothing, so finer control spaces are dominated by the
        // regularization bias at xi = 1e-10
        let spec = GeometrySpec::Interval { omega: (-0.5, 0.5), outer: (-1.5, 1.5), control: vec![(0.7, 1.2)] };
        let mesh = generate(&spec, 0.25).unwrap();
        let order = FractionalOrder::new(0.4, 1).unwrap();
        let kappa = CoefficientField::control(&mesh);
        let u_d = FemFunction::zeros(&mesh);
        let prob = ControlProblem::new(mesh, order, Variant::DirichletViaRobin, 1e3, &kappa, 1e-10, u_d).unwrap();
        let m = prob.control_dofs().len();
        assert_eq!(m, 3);
        let z_true: Vec<f64> = (0..m).map(|i| 1.0 + 0.5 * (i as f64 / m as f64)).collect();
        let u = prob.state(&z_true).unwrap().0;
        let prob = prob.with_target(u).unwrap();
        let res = optimize(&prob, &vec![0.0; m], &OptimizeOptions::default()).unwrap();
        let diff: Vec<f64> = res.z.iter().zip(&z_true).map(|(a, b)| a - b).collect();
        let rel = (prob.control_norm_sq(&diff) / prob.control_norm_sq(&z_true)).sqrt();
        assert!(rel < 1e-2, "relative control error {rel}");
    }

    #[test]
    fn regularization_path_is_monotone() {
        let prob = small(Variant::DirichletViaRobin, 0.0);
        let m = prob.control_dofs().len();
        let mut prev = f64::INFINITY;
        for xi in [1e-4, 1e-2, 1.0] {
            let res = optimize(&prob.with_xi(xi).unwrap(), &vec![0.0; m], &OptimizeOptions::default()).unwrap();
            let nz = prob.control_norm_sq(&res.z).sqrt();
            assert!(nz <= prev * (1.0 + 1e-9), "xi {xi}: {nz} > {prev}");
            prev = nz;
        }
    }

    #[test]
    fn large_regularization_recovers_uncontrolled_state() {
        let prob = small(Variant::Robin, 1e8);
        let m = prob.control_dofs().len();
        let res = optimize(&prob, &vec![0.5; m], &OptimizeOptions::default()).unwrap();
        assert!(prob.control_norm_sq(&res.z).sqrt() < 1e-6);
    }

    #[test]
    fn history_csv_round_trip() {
        let prob = small(Variant::Robin, 1e-2);
        let m = prob.control_dofs().len();
        let res = optimize(&prob, &vec![0.0; m], &OptimizeOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        res.write_history(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), res.history.len() + 1);
        assert!(text.starts_with("iteration,objective,projected_gradient_norm,step,state_iterations"));
    }

    #[test]
    fn iteration_limit_returns_best() {
        let prob = small(Variant::DirichletViaRobin, 1e-6);
        let m = prob.control_dofs().len();
        let opts = OptimizeOptions { max_iter: 1, tol: 1e-14, ..Default::default() };
        match optimize(&prob, &vec![0.0; m], &opts) {
            Err(Error::MaxIterations { best }) => assert_eq!(best.iterations, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
