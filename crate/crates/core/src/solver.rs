//! Linear solvers for the Robin, penalized Dirichlet, and eliminated
//! Dirichlet systems.

use std::time::Instant;

use nalgebra::{Cholesky, DVector, Dyn};

use crate::assembly::{
    assemble_exterior_mass, assemble_source, assemble_stiffness, CoefficientField, FemFunction, SymmetricSparseMatrix,
};
use crate::error::{Error, Result};
use crate::kernel::{FractionalOrder, TailPolicy};
use crate::mesh::{partition_dofs, Mesh};

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Systems smaller than this are factorized densely.
pub const DIRECT_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// `||K u - b|| / ||b||`.
    pub final_residual: f64,
    /// Seconds.
    pub wall_time: f64,
}

/// `(A + n M) u = rhs`.
#[derive(Debug, Clone)]
pub struct RobinSystem {
    pub a: SymmetricSparseMatrix,
    pub m: SymmetricSparseMatrix,
    pub n: f64,
    pub rhs: Vec<f64>,
}

impl RobinSystem {
    pub fn operator(&self) -> Result<SymmetricSparseMatrix> {
        self.a.add_scaled(&self.m, self.n)
    }
}

enum Method {
    Dense(Cholesky<f64, Dyn>),
    Cg { diag_inv: Vec<f64> },
}

/// A symmetric positive definite operator prepared for repeated solves:
/// factorized densely below a size threshold, otherwise solved by
/// Jacobi-preconditioned conjugate gradients.
pub struct PreparedOperator {
    matrix: SymmetricSparseMatrix,
    method: Method,
    tol: f64,
    max_iter: usize,
}

impl PreparedOperator {
    pub fn new(matrix: SymmetricSparseMatrix, tol: f64, direct_threshold: usize) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        let n = matrix.dim();
        let method = if n < direct_threshold {
            let chol = matrix
                .to_dense()
                .cholesky()
                .ok_or_else(|| Error::SingularSystem("matrix is not positive definite".into()))?;
            Method::Dense(chol)
        } else {
            let diag = matrix.diagonal();
            if diag.iter().any(|&d| !(d > 0.0)) {
                return Err(Error::SingularSystem("nonpositive diagonal entry".into()));
            }
            Method::Cg { diag_inv: diag.iter().map(|d| 1.0 / d).collect() }
        };
        Ok(PreparedOperator { max_iter: 10 * n.max(1), matrix, method, tol })
    }

    pub fn matrix(&self) -> &SymmetricSparseMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.method, Method::Dense(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
        let start = Instant::now();
        let n = self.dim();
        if rhs.len() != n {
            return Err(Error::InvalidArgument(format!("right-hand side has length {} for a {n}x{n} system", rhs.len())));
        }
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            let report = SolveReport { iterations: 0, final_residual: 0.0, wall_time: start.elapsed().as_secs_f64() };
            return Ok((vec![0.0; n], report));
        }
        let (x, iterations) = match &self.method {
            Method::Dense(chol) => (chol.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(), 1),
            Method::Cg { diag_inv } => self.pcg(rhs, diag_inv, bnorm, start)?,
        };
        let r = residual(&self.matrix, &x, rhs);
        let report = SolveReport { iterations, final_residual: norm(&r) / bnorm, wall_time: start.elapsed().as_secs_f64() };
        if report.final_residual > self.tol.max(1e-13) && !self.is_direct() {
            return Err(Error::NonConvergence { report });
        }
        Ok((x, report))
    }

    fn pcg(&self, b: &[f64], diag_inv: &[f64], bnorm: f64, start: Instant) -> Result<(Vec<f64>, usize)> {
        let n = b.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(diag_inv).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for it in 1..=self.max_iter {
            self.matrix.matvec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::SingularSystem("conjugate gradients met a nonpositive curvature".into()));
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            if norm(&r) <= self.tol * bnorm {
                // guard against drift of the recursive residual
                let true_r = residual(&self.matrix, &x, b);
                if norm(&true_r) <= self.tol * bnorm {
                    return Ok((x, it));
                }
                r = true_r;
            }
            for k in 0..n {
                z[k] = r[k] * diag_inv[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let res = norm(&residual(&self.matrix, &x, b)) / bnorm;
        Err(Error::NonConvergence {
            report: SolveReport { iterations: self.max_iter, final_residual: res, wall_time: start.elapsed().as_secs_f64() },
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &SymmetricSparseMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul(x);
    b.iter().zip(ax).map(|(bi, yi)| bi - yi).collect()
}

/// Detects the non-uniqueness of the Robin problem without exterior
/// coupling: a vanishing mass term together with constants in the kernel
/// of the stiffness matrix.
fn check_singular(a: &SymmetricSparseMatrix, m: &SymmetricSparseMatrix, n: f64) -> Result<()> {
    let mass_vanishes = n == 0.0 || m.max_abs() == 0.0;
    if !mass_vanishes {
        return Ok(());
    }
    let ones = vec![1.0; a.dim()];
    let r = norm(&a.mul(&ones));
    if r <= 1e-10 * a.max_abs() * (a.dim() as f64).sqrt() {
        return Err(Error::SingularSystem("the coefficient vanishes and constants solve the homogeneous problem".into()));
    }
    Ok(())
}

/// Solves `(A + n M) u = rhs`.
pub fn solve_robin(system: &RobinSystem, tol: f64) -> Result<(FemFunction, SolveReport)> {
    if system.rhs.len() != system.a.dim() || system.m.dim() != system.a.dim() {
        return Err(Error::InvalidArgument("system dimensions disagree".into()));
    }
    if !(system.n >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty must be nonnegative, got {}", system.n)));
    }
    check_singular(&system.a, &system.m, system.n)?;
    let op = PreparedOperator::new(system.operator()?, tol, DIRECT_THRESHOLD)?;
    let (u, report) = op.solve(&system.rhs)?;
    Ok((FemFunction::from(u), report))
}

/// The Robin-penalized approximation of the Dirichlet problem with source
/// `f` and exterior datum `z`: `(A + n M_kappa) u = b_f + n M_kappa z`.
#[allow(clippy::too_many_arguments)]
pub fn solve_dirichlet_penalized(
    mesh: &Mesh,
    order: FractionalOrder,
    kappa: &CoefficientField,
    n: f64,
    f: &dyn Fn([f64; 2]) -> f64,
    z: &FemFunction,
    tol: f64,
) -> Result<(FemFunction, SolveReport)> {
    if !(n >= 1.0) {
        return Err(Error::InvalidArgument(format!("penalty must be at least 1, got {n}")));
    }
    let a = assemble_stiffness(mesh, order, TailPolicy::Analytic)?;
    let m = assemble_exterior_mass(mesh, kappa)?;
    let source = assemble_source(mesh, f);
    penalized_with(&a, &m, n, &source, z.values(), tol)
}

/// [`solve_dirichlet_penalized`] on assembled operators.
pub fn penalized_with(
    a: &SymmetricSparseMatrix,
    m: &SymmetricSparseMatrix,
    n: f64,
    source: &[f64],
    z: &[f64],
    tol: f64,
) -> Result<(FemFunction, SolveReport)> {
    let mz = m.mul(z);
    let rhs: Vec<f64> = source.iter().zip(&mz).map(|(b, v)| b + n * v).collect();
    solve_robin(&RobinSystem { a: a.clone(), m: m.clone(), n, rhs }, tol)
}

/// Dirichlet problem by elimination: `u = z` on every node not in `free`,
/// and `A_FF u_F = source_F - A_FC z_C`.
pub fn dirichlet_eliminated(
    a: &SymmetricSparseMatrix,
    free: &[usize],
    source: &[f64],
    z: &[f64],
    tol: f64,
) -> Result<(FemFunction, SolveReport)> {
    let n = a.dim();
    let mut is_free = vec![false; n];
    for &i in free {
        is_free[i] = true;
    }
    let mut zc = z.to_vec();
    for &i in free {
        zc[i] = 0.0;
    }
    let az = a.mul(&zc);
    let rhs: Vec<f64> = free.iter().map(|&i| source[i] - az[i]).collect();
    let op = PreparedOperator::new(a.restrict(free), tol, DIRECT_THRESHOLD)?;
    let (uf, report) = op.solve(&rhs)?;
    let mut u = zc;
    for (k, &i) in free.iter().enumerate() {
        u[i] = uf[k];
    }
    Ok((FemFunction::from(u), report))
}

/// Adjoint with homogeneous exterior condition imposed by elimination:
/// `p = 0` off the free interior nodes and `A_FF p_F = w_F`.
pub fn solve_dirichlet_adjoint(mesh: &Mesh, order: FractionalOrder, w: &[f64], tol: f64) -> Result<FemFunction> {
    if w.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("load does not match the mesh".into()));
    }
    let a = assemble_stiffness(mesh, order, TailPolicy::Analytic)?;
    let free = partition_dofs(mesh).free_interior();
    let zero = vec![0.0; mesh.num_nodes()];
    Ok(dirichlet_eliminated(&a, &free, w, &zero, tol)?.0)
}
