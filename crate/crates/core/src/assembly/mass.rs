use super::{CoefficientField, FemFunction, SymmetricSparseMatrix};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Region};
use crate::quadrature::QuadratureRule;

/// Consistent P1 mass matrix with a constant weight per cell.
pub fn assemble_cell_mass(mesh: &Mesh, weights: &[f64]) -> Result<SymmetricSparseMatrix> {
    if weights.len() != mesh.num_cells() {
        return Err(Error::InvalidArgument("one weight per cell is required".into()));
    }
    let nv = mesh.dim() + 1;
    let denom = ((nv) * (nv + 1)) as f64;
    let mut triplets = Vec::new();
    for c in 0..mesh.num_cells() {
        let w = weights[c];
        if w == 0.0 {
            continue;
        }
        let m = w * mesh.cell_measure(c) / denom;
        let v = mesh.cell(c);
        for p in 0..nv {
            for q in 0..nv {
                triplets.push((v[p], v[q], if p == q { 2.0 * m } else { m }));
            }
        }
    }
    SymmetricSparseMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// `M[i][j] = int kappa phi_i phi_j` over the exterior.
pub fn assemble_exterior_mass(mesh: &Mesh, kappa: &CoefficientField) -> Result<SymmetricSparseMatrix> {
    if kappa.per_cell().len() != mesh.num_cells() {
        return Err(Error::InvalidArgument("coefficient does not match the mesh".into()));
    }
    if kappa.per_cell().iter().any(|&k| k < 0.0) {
        return Err(Error::InvalidArgument("negative coefficient".into()));
    }
    assemble_cell_mass(mesh, kappa.per_cell())
}

/// Mass matrix over the interior cells.
pub fn assemble_interior_mass(mesh: &Mesh) -> SymmetricSparseMatrix {
    let w: Vec<f64> = mesh.regions().iter().map(|&r| if r == Region::Interior { 1.0 } else { 0.0 }).collect();
    assemble_cell_mass(mesh, &w).expect("weights match the mesh")
}

/// `b[i] = int_Omega f phi_i`, degree-4 quadrature per cell.
pub fn assemble_source(mesh: &Mesh, f: &dyn Fn([f64; 2]) -> f64) -> Vec<f64> {
    let rule = QuadratureRule::simplex(mesh.dim(), 4);
    let mut b = vec![0.0; mesh.num_nodes()];
    for c in 0..mesh.num_cells() {
        if mesh.region(c) != Region::Interior {
            continue;
        }
        let pts = mesh.cell_points(c);
        let v = mesh.cell(c);
        let meas = mesh.cell_measure(c);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 2];
            for (l, p) in lam.iter().zip(&pts) {
                x[0] += l * p[0];
                x[1] += l * p[1];
            }
            let fx = f(x) * w * meas;
            for (k, &node) in v.iter().enumerate() {
                b[node] += fx * lam[k];
            }
        }
    }
    b
}

/// `b[i] = int_Omega f phi_i + int kappa z phi_i`. The penalty factor is
/// applied by the caller.
pub fn assemble_load(mesh: &Mesh, f: &dyn Fn([f64; 2]) -> f64, kappa: &CoefficientField, z: &FemFunction) -> Result<Vec<f64>> {
    if z.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("exterior datum does not match the mesh".into()));
    }
    let mut b = assemble_source(mesh, f);
    let m = assemble_exterior_mass(mesh, kappa)?;
    for (bi, mz) in b.iter_mut().zip(m.mul(z.values())) {
        *bi += mz;
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, GeometrySpec};

    #[test]
    fn single_interval_block() {
        let mesh = Mesh::new(1, vec![0.5, 2.0], vec![0, 1], vec![Region::Exterior]).unwrap();
        let m = assemble_exterior_mass(&mesh, &CoefficientField::exterior(&mesh)).unwrap();
        let h = 1.5;
        assert!((m.get(0, 0) - h / 3.0).abs() < 1e-15);
        assert!((m.get(0, 1) - h / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficient_gives_zero_matrix() {
        let mesh = generate(&GeometrySpec::benchmark_disk(), 0.3).unwrap();
        let m = assemble_exterior_mass(&mesh, &CoefficientField::zero(&mesh)).unwrap();
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn total_mass_is_weighted_measure() {
        let mesh = generate(&GeometrySpec::annulus_control(), 0.15).unwrap();
        let kappa = CoefficientField::indicator(&mesh, 2.5, |r| r == Region::ControlSupport).unwrap();
        let m = assemble_exterior_mass(&mesh, &kappa).unwrap();
        let ones = vec![1.0; mesh.num_nodes()];
        let exact = 2.5 * mesh.region_measure(|r| r == Region::ControlSupport);
        assert!((m.inner(&ones, &ones) - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn coefficient_validation() {
        let mesh = generate(&GeometrySpec::benchmark_interval(), 0.5).unwrap();
        assert!(CoefficientField::new(&mesh, vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(CoefficientField::new(&mesh, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(CoefficientField::new(&mesh, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0]).is_ok());
    }

    #[test]
    fn constant_source_sums_to_twice_the_area() {
        let mesh = generate(&GeometrySpec::benchmark_disk(), 0.1).unwrap();
        let b = assemble_source(&mesh, &|_| 2.0);
        let area = mesh.region_measure(|r| r == Region::Interior);
        assert!((b.iter().sum::<f64>() - 2.0 * area).abs() < 1e-12);
    }

    #[test]
    fn exterior_load_sums_to_support_measure() {
        let mesh = generate(&GeometrySpec::annulus_control(), 0.2).unwrap();
        let kappa = CoefficientField::control(&mesh);
        let z = FemFunction::interpolate(&mesh, |_| 1.0);
        let b = assemble_load(&mesh, &|_| 0.0, &kappa, &z).unwrap();
        let exact = mesh.region_measure(|r| r == Region::ControlSupport);
        assert!((b.iter().sum::<f64>() - exact).abs() < 1e-12);
        let zero = assemble_load(&mesh, &|_| 0.0, &kappa, &FemFunction::zeros(&mesh)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }
}
