//! Python bindings: meshes, operator assembly, the penalized solver, the
//! control problem and the experiment driver.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use fracext::assembly::{assemble_exterior_mass, assemble_source, assemble_stiffness, CoefficientField, FemFunction, SymmetricSparseMatrix};
use fracext::benchmark::{self, ExactSolution};
use fracext::control::{self, Bounds, ControlProblem, OptimizeOptions, Variant};
use fracext::error::Error;
use fracext::experiments::{self, ExperimentConfig, Outcome};
use fracext::kernel::{FractionalOrder, TailPolicy};
use fracext::mesh::{self, GeometrySpec, Region};
use fracext::solver;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::InvalidOrder(_)
        | Error::UnsupportedDimension(_)
        | Error::InvalidGeometry(_)
        | Error::InvalidMesh(_)
        | Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn kappa_field(mesh: &mesh::Mesh, kappa: &str) -> PyResult<CoefficientField> {
    match kappa {
        "exterior" => Ok(CoefficientField::exterior(mesh)),
        "control" => Ok(CoefficientField::control(mesh)),
        other => Err(PyValueError::new_err(format!("unknown kappa '{other}': expected 'exterior' or 'control'"))),
    }
}

fn order_for(mesh: &mesh::Mesh, s: f64) -> PyResult<FractionalOrder> {
    FractionalOrder::new(s, mesh.dim()).map_err(to_py)
}

/// A simplicial mesh of the truncated domain with per-cell region tags.
#[pyclass(name = "Mesh", frozen)]
#[derive(Clone)]
struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    /// Generates a named geometry with mesh size `h` or about `dofs` nodes.
    #[staticmethod]
    #[pyo3(signature = (geometry, h=None, dofs=None))]
    fn generate(geometry: &str, h: Option<f64>, dofs: Option<usize>) -> PyResult<Self> {
        let spec = GeometrySpec::from_name(geometry).map_err(to_py)?;
        let inner = match (h, dofs) {
            (Some(h), None) => mesh::generate(&spec, h),
            (None, Some(d)) => mesh::generate_with_dofs(&spec, d),
            _ => return Err(PyValueError::new_err("give exactly one of h and dofs")),
        }
        .map_err(to_py)?;
        Ok(PyMesh { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyMesh { inner: mesh::read_mesh(path).map_err(to_py)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        mesh::write_mesh(path, &self.inner).map_err(to_py)
    }

    fn refine(&self) -> Self {
        PyMesh { inner: self.inner.refine() }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_cells(&self) -> usize {
        self.inner.num_cells()
    }

    #[getter]
    fn max_diameter(&self) -> f64 {
        self.inner.max_diameter()
    }

    /// Node coordinates, one list per node.
    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.inner.num_nodes()).map(|i| self.inner.node(i).to_vec()).collect()
    }

    fn cells(&self) -> Vec<Vec<usize>> {
        self.inner.cells().map(|c| c.to_vec()).collect()
    }

    fn regions(&self) -> Vec<&'static str> {
        self.inner.regions().iter().map(|r| r.as_str()).collect()
    }

    /// Measure of the cells tagged `region`.
    fn region_measure(&self, region: &str) -> PyResult<f64> {
        let target: Region = region.parse().map_err(to_py)?;
        Ok(self.inner.region_measure(|r| r == target))
    }

    /// Evaluates the nodal field `values` at `x`, or None outside the mesh.
    fn evaluate(&self, values: Vec<f64>, x: Vec<f64>) -> PyResult<Option<f64>> {
        if values.len() != self.inner.num_nodes() || x.len() != self.inner.dim() {
            return Err(PyValueError::new_err("field or point does not match the mesh"));
        }
        let p = [x[0], x.get(1).copied().unwrap_or(0.0)];
        Ok(self.inner.evaluate(&values, p))
    }

    fn __repr__(&self) -> String {
        format!("Mesh(dim={}, nodes={}, cells={})", self.inner.dim(), self.inner.num_nodes(), self.inner.num_cells())
    }
}

/// Symmetric sparse matrix in row-compressed form.
#[pyclass(name = "SparseMatrix", frozen)]
struct PyMatrix {
    inner: SymmetricSparseMatrix,
}

#[pymethods]
impl PyMatrix {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.inner.dim() || j >= self.inner.dim() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(i, j))
    }

    fn diagonal(&self) -> Vec<f64> {
        self.inner.diagonal()
    }

    fn matvec(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err("vector length does not match the matrix"));
        }
        Ok(self.inner.mul(&x))
    }

    /// Stored entries as `(row, col, value)`.
    fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.inner.iter().collect()
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        let d = self.inner.to_dense();
        (0..d.nrows()).map(|i| d.row(i).iter().copied().collect()).collect()
    }
}

/// Stiffness matrix of the fractional Laplacian of order `s`.
#[pyfunction]
#[pyo3(signature = (mesh, s, tail=true))]
fn stiffness(py: Python<'_>, mesh: &PyMesh, s: f64, tail: bool) -> PyResult<PyMatrix> {
    let order = order_for(&mesh.inner, s)?;
    let policy = if tail { TailPolicy::Analytic } else { TailPolicy::None };
    let inner = py.allow_threads(|| assemble_stiffness(&mesh.inner, order, policy)).map_err(to_py)?;
    Ok(PyMatrix { inner })
}

/// Exterior mass matrix weighted by `kappa` ("exterior" or "control").
#[pyfunction]
#[pyo3(signature = (mesh, kappa="exterior"))]
fn exterior_mass(mesh: &PyMesh, kappa: &str) -> PyResult<PyMatrix> {
    let k = kappa_field(&mesh.inner, kappa)?;
    Ok(PyMatrix { inner: assemble_exterior_mass(&mesh.inner, &k).map_err(to_py)? })
}

/// Penalized Dirichlet solve with constant source `f` and exterior datum
/// `z` (nodal values, zero by default). Returns `(u, iterations)`.
#[pyfunction]
#[pyo3(signature = (mesh, s, n, f=benchmark::SOURCE, z=None, kappa="exterior", tol=solver::DEFAULT_TOL))]
#[allow(clippy::too_many_arguments)]
fn solve_dirichlet(
    py: Python<'_>,
    mesh: &PyMesh,
    s: f64,
    n: f64,
    f: f64,
    z: Option<Vec<f64>>,
    kappa: &str,
    tol: f64,
) -> PyResult<(Vec<f64>, usize)> {
    let m = &mesh.inner;
    let order = order_for(m, s)?;
    let k = kappa_field(m, kappa)?;
    let z = match z {
        Some(v) => FemFunction::new(m, v).map_err(to_py)?,
        None => FemFunction::zeros(m),
    };
    let (u, report) = py
        .allow_threads(|| solver::solve_dirichlet_penalized(m, order, &k, n, &|_| f, &z, tol))
        .map_err(to_py)?;
    Ok((u.into_values(), report.iterations))
}

/// Load vector of a constant source.
#[pyfunction]
fn source_vector(mesh: &PyMesh, f: f64) -> Vec<f64> {
    assemble_source(&mesh.inner, &|_| f)
}

/// Nodal interpolant of the two-bump benchmark solution for source 2.
#[pyfunction]
fn exact_solution(mesh: &PyMesh, s: f64) -> PyResult<Vec<f64>> {
    let order = order_for(&mesh.inner, s)?;
    Ok(ExactSolution::new(order).interpolate(&mesh.inner).into_values())
}

/// L2 distance over the interior between two nodal fields.
#[pyfunction]
fn l2_distance(mesh: &PyMesh, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    let m = &mesh.inner;
    let u = FemFunction::new(m, u).map_err(to_py)?;
    let v = FemFunction::new(m, v).map_err(to_py)?;
    benchmark::l2_distance(m, &u, &v).map_err(to_py)
}

/// Tracking-type optimal control of the exterior datum.
#[pyclass(name = "ControlProblem", frozen)]
struct PyControlProblem {
    inner: ControlProblem,
}

#[pymethods]
impl PyControlProblem {
    #[new]
    #[pyo3(signature = (mesh, s, target, xi, n=1e5, variant="dirichlet", kappa=None, lower_bound=Some(0.0)))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        py: Python<'_>,
        mesh: &PyMesh,
        s: f64,
        target: Vec<f64>,
        xi: f64,
        n: f64,
        variant: &str,
        kappa: Option<&str>,
        lower_bound: Option<f64>,
    ) -> PyResult<Self> {
        let m = mesh.inner.clone();
        let order = order_for(&m, s)?;
        let variant: Variant = variant.parse().map_err(to_py)?;
        let default_kappa = match variant {
            Variant::DirichletViaRobin => "exterior",
            Variant::Robin => "control",
        };
        let k = kappa_field(&m, kappa.unwrap_or(default_kappa))?;
        let u_d = FemFunction::new(&m, target).map_err(to_py)?;
        let problem = py
            .allow_threads(|| ControlProblem::new(m, order, variant, n, &k, xi, u_d))
            .map_err(to_py)?;
        let len = problem.control_dofs().len();
        let bounds = match lower_bound {
            Some(lo) => Bounds { lower: vec![lo; len], upper: vec![f64::INFINITY; len] },
            None => Bounds::unbounded(len),
        };
        Ok(PyControlProblem { inner: problem.with_bounds(bounds).map_err(to_py)? })
    }

    /// Mesh node indices carrying a control value.
    fn control_dofs(&self) -> Vec<usize> {
        self.inner.control_dofs().to_vec()
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.inner.xi()
    }

    fn objective(&self, z: Vec<f64>) -> PyResult<f64> {
        self.check_len(&z)?;
        self.inner.objective(&z).map_err(to_py)
    }

    /// Riesz representative of the reduced gradient on the control dofs.
    fn gradient(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&z)?;
        self.inner.reduced_gradient(&z).map_err(to_py)
    }

    /// State for the control `z`, as nodal values on the whole mesh.
    fn state(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_len(&z)?;
        Ok(self.inner.state(&z).map_err(to_py)?.0.into_values())
    }

    /// Runs projected L-BFGS from `z0` (zero by default). Returns a dict with
    /// `z`, `u`, `p`, `objective`, `projected_gradient_norm`, `iterations`
    /// and `converged`.
    #[pyo3(signature = (z0=None, tol=1e-8, max_iter=500))]
    fn optimize(&self, py: Python<'_>, z0: Option<Vec<f64>>, tol: f64, max_iter: usize) -> PyResult<PyObject> {
        let z0 = z0.unwrap_or_else(|| vec![0.0; self.inner.control_dofs().len()]);
        self.check_len(&z0)?;
        let opts = OptimizeOptions { tol, max_iter, ..OptimizeOptions::default() };
        let (res, converged) = match py.allow_threads(|| control::optimize(&self.inner, &z0, &opts)) {
            Ok(r) => (r, true),
            Err(Error::MaxIterations { best }) => (*best, false),
            Err(e) => return Err(to_py(e)),
        };
        let d = pyo3::types::PyDict::new_bound(py);
        d.set_item("z", res.z)?;
        d.set_item("u", res.u.into_values())?;
        d.set_item("p", res.p.into_values())?;
        d.set_item("objective", res.objective)?;
        d.set_item("projected_gradient_norm", res.projected_gradient_norm)?;
        d.set_item("iterations", res.iterations)?;
        d.set_item("converged", converged)?;
        Ok(d.into_any().unbind())
    }
}

impl PyControlProblem {
    fn check_len(&self, z: &[f64]) -> PyResult<()> {
        let want = self.inner.control_dofs().len();
        if z.len() != want {
            return Err(PyValueError::new_err(format!("control has {} entries, expected {want}", z.len())));
        }
        Ok(())
    }
}

fn load_config(path: PathBuf, output: Option<PathBuf>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&path).map_err(to_py)?;
    if let Some(o) = output {
        cfg.output = Some(o);
    } else if cfg.output.is_none() {
        cfg.output = Some(experiments::default_output(&path));
    }
    Ok(cfg)
}

fn run_config(py: Python<'_>, cfg: &ExperimentConfig) -> PyResult<Outcome> {
    py.allow_threads(|| experiments::run(cfg)).map_err(to_py)
}

/// Runs the experiment in the config file and returns its summary rows.
#[pyfunction]
#[pyo3(signature = (config, output=None))]
fn run_experiment(py: Python<'_>, config: PathBuf, output: Option<PathBuf>) -> PyResult<Vec<(String, f64)>> {
    let cfg = load_config(config, output)?;
    Ok(match run_config(py, &cfg)? {
        Outcome::Rates(reports) => reports
            .iter()
            .map(|r| (format!("slope s={} n={:?}", r.s, r.n), r.slope))
            .collect(),
        Outcome::Control(runs) => runs
            .iter()
            .map(|r| (format!("tracking s={} xi={:e}", r.s, r.xi), r.tracking_error))
            .collect(),
    })
}

/// Runs the experiment and evaluates its thresholds as
/// `(name, passed, detail)` rows.
#[pyfunction]
#[pyo3(signature = (config, output=None))]
fn check_experiment(py: Python<'_>, config: PathBuf, output: Option<PathBuf>) -> PyResult<Vec<(String, bool, String)>> {
    let cfg = load_config(config, output)?;
    let outcome = run_config(py, &cfg)?;
    Ok(experiments::check(&cfg, &outcome)
        .into_iter()
        .map(|c| (c.name, c.passed, c.detail))
        .collect())
}

#[pymodule]
#[pyo3(name = "fracext")]
fn fracext_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyControlProblem>()?;
    m.add_function(wrap_pyfunction!(stiffness, m)?)?;
    m.add_function(wrap_pyfunction!(exterior_mass, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(source_vector, m)?)?;
    m.add_function(wrap_pyfunction!(exact_solution, m)?)?;
    m.add_function(wrap_pyfunction!(l2_distance, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(check_experiment, m)?)?;
    Ok(())
}
