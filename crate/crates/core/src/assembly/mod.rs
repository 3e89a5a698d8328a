//! Global discrete operators: nonlocal stiffness, weighted masses, loads,
//! and the interaction operator.

mod interaction;
mod mass;
mod matrix;
mod stiffness;

pub use interaction::{eval_interaction, interaction_integral};
pub use mass::{assemble_cell_mass, assemble_exterior_mass, assemble_interior_mass, assemble_load, assemble_source};
pub use matrix::SymmetricSparseMatrix;
pub use stiffness::{assemble_stiffness, DROP_TOLERANCE};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Region};

/// Nodal coefficients of a continuous piecewise-linear function.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction {
    values: Vec<f64>,
}

impl FemFunction {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::InvalidArgument(format!(
                "{} coefficients for a mesh with {} nodes",
                values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(FemFunction { values })
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        FemFunction { values: vec![0.0; mesh.num_nodes()] }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn([f64; 2]) -> f64) -> Self {
        FemFunction { values: (0..mesh.num_nodes()).map(|i| f(mesh.point(i))).collect() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Piecewise-constant nonnegative coefficient `kappa`, one value per cell,
/// vanishing on interior cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    per_cell: Vec<f64>,
}

impl CoefficientField {
    pub fn new(mesh: &Mesh, per_cell: Vec<f64>) -> Result<Self> {
        if per_cell.len() != mesh.num_cells() {
            return Err(Error::InvalidArgument("one coefficient per cell is required".into()));
        }
        for (c, &k) in per_cell.iter().enumerate() {
            if !(k >= 0.0) || !k.is_finite() {
                return Err(Error::InvalidArgument(format!("coefficient on cell {c} is {k}; must be finite and >= 0")));
            }
            if k != 0.0 && mesh.region(c) == Region::Interior {
                return Err(Error::InvalidArgument(format!("coefficient must vanish on interior cell {c}")));
            }
        }
        Ok(CoefficientField { per_cell })
    }

    pub fn zero(mesh: &Mesh) -> Self {
        CoefficientField { per_cell: vec![0.0; mesh.num_cells()] }
    }

    /// `value` on every cell whose region satisfies `pred` (interior cells
    /// are always excluded).
    pub fn indicator(mesh: &Mesh, value: f64, pred: impl Fn(Region) -> bool) -> Result<Self> {
        let per_cell =
            mesh.regions().iter().map(|&r| if r.is_exterior() && pred(r) { value } else { 0.0 }).collect();
        Self::new(mesh, per_cell)
    }

    /// One on the whole truncated exterior.
    pub fn exterior(mesh: &Mesh) -> Self {
        Self::indicator(mesh, 1.0, |_| true).expect("unit coefficient is valid")
    }

    /// One on the control support.
    pub fn control(mesh: &Mesh) -> Self {
        Self::indicator(mesh, 1.0, |r| r == Region::ControlSupport).expect("unit coefficient is valid")
    }

    pub fn per_cell(&self) -> &[f64] {
        &self.per_cell
    }

    pub fn is_zero(&self) -> bool {
        self.per_cell.iter().all(|&k| k == 0.0)
    }

    /// `int kappa dx`.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        self.per_cell.iter().enumerate().map(|(c, k)| k * mesh.cell_measure(c)).sum()
    }
}

impl From<Vec<f64>> for FemFunction {
    fn from(values: Vec<f64>) -> Self {
        FemFunction { values }
    }
}
