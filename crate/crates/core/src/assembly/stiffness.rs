use rayon::prelude::*;

use super::SymmetricSparseMatrix;
use crate::error::Result;
use crate::kernel::{normalization_constant, tail_density, FractionalOrder, PairIntegrator, TailPolicy, TAIL_DEGREE};
use crate::mesh::{Mesh, Region};
use crate::quadrature::QuadratureRule;

/// Entries smaller than this fraction of the largest entry are not stored.
pub const DROP_TOLERANCE: f64 = 1e-14;

/// Interior cells are split into this many chunks, accumulated separately
/// and merged in chunk order, so results do not depend on the thread count.
const CHUNKS: usize = 4;

/// Accumulator for one chunk: dense rows for nodes of interior cells, and a
/// local block per exterior cell for pairs of nodes that are both outside.
struct Accumulator {
    rows: Vec<f64>,
    exterior: Vec<[[f64; 3]; 3]>,
}

/// Nonlocal stiffness matrix
/// `A[i][j] = C/2 * int int_{Q} (phi_i(x) - phi_i(y)) (phi_j(x) - phi_j(y)) |x - y|^{-(N + 2s)}`
/// where `Q` is the square of the truncated domain minus the square of its
/// exterior part, plus the far-field term selected by `tail`.
pub fn assemble_stiffness(mesh: &Mesh, order: FractionalOrder, tail: TailPolicy) -> Result<SymmetricSparseMatrix> {
    let integ = PairIntegrator::new(mesh, order)?;
    let n = mesh.num_nodes();
    let interior_cells: Vec<usize> = (0..mesh.num_cells()).filter(|&c| mesh.region(c) == Region::Interior).collect();
    // rows of the dense accumulator
    let mut row_of = vec![usize::MAX; n];
    let mut row_nodes = Vec::new();
    for &c in &interior_cells {
        for &v in mesh.cell(c) {
            if row_of[v] == usize::MAX {
                row_of[v] = 0;
            }
        }
    }
    for (i, r) in row_of.iter_mut().enumerate() {
        if *r == 0 {
            *r = row_nodes.len();
            row_nodes.push(i);
        }
    }
    let m = row_nodes.len();
    let half_c = 0.5 * normalization_constant(order);
    let chunk_len = interior_cells.len().div_ceil(CHUNKS).max(1);

    let partials: Vec<Result<Accumulator>> = interior_cells
        .par_chunks(chunk_len)
        .map(|chunk| {
            let mut acc = Accumulator { rows: vec![0.0; m * n], exterior: vec![[[0.0; 3]; 3]; mesh.num_cells()] };
            for &a in chunk {
                for b in 0..mesh.num_cells() {
                    let b_interior = mesh.region(b) == Region::Interior;
                    if b_interior && b < a {
                        continue;
                    }
                    let weight = if a == b { half_c } else { 2.0 * half_c };
                    let block = integ.block(a, b)?;
                    let nodes = block.nodes();
                    for (p, &i) in nodes.iter().enumerate() {
                        let ri = row_of[i];
                        if ri != usize::MAX {
                            let row = &mut acc.rows[ri * n..(ri + 1) * n];
                            for (q, &j) in nodes.iter().enumerate() {
                                row[j] += weight * block.values[p][q];
                            }
                        } else {
                            // both outside: i and j are vertices of b
                            let cb = mesh.cell(b);
                            let lp = cb.iter().position(|&v| v == i).unwrap();
                            for (q, &j) in nodes.iter().enumerate() {
                                if row_of[j] == usize::MAX {
                                    let lq = cb.iter().position(|&v| v == j).unwrap();
                                    acc.exterior[b][lp][lq] += weight * block.values[p][q];
                                }
                            }
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut rows = vec![0.0; m * n];
    let mut exterior = vec![[[0.0; 3]; 3]; mesh.num_cells()];
    for part in partials {
        let part = part?;
        for (r, v) in rows.iter_mut().zip(&part.rows) {
            *r += v;
        }
        for (e, v) in exterior.iter_mut().zip(&part.exterior) {
            for p in 0..3 {
                for q in 0..3 {
                    e[p][q] += v[p][q];
                }
            }
        }
    }
    if tail == TailPolicy::Analytic {
        add_tail(mesh, order, half_c, &row_of, &mut rows, n);
    }

    // Dense rows are exactly symmetric among themselves up to summation
    // order; average to make storage symmetric bitwise.
    for a in 0..m {
        for b in a + 1..m {
            let (i, j) = (row_nodes[a], row_nodes[b]);
            let v = 0.5 * (rows[a * n + j] + rows[b * n + i]);
            rows[a * n + j] = v;
            rows[b * n + i] = v;
        }
    }
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    for (a, &i) in row_nodes.iter().enumerate() {
        for j in 0..n {
            let v = rows[a * n + j];
            if v != 0.0 {
                triplets.push((i, j, v));
                if row_of[j] == usize::MAX {
                    triplets.push((j, i, v));
                }
            }
        }
    }
    for (b, e) in exterior.iter().enumerate() {
        let cb = mesh.cell(b);
        for (p, &i) in cb.iter().enumerate() {
            for (q, &j) in cb.iter().enumerate() {
                if row_of[i] == usize::MAX && row_of[j] == usize::MAX && e[p][q] != 0.0 {
                    // symmetric by construction of the pair blocks
                    triplets.push((i, j, 0.5 * (e[p][q] + e[q][p])));
                }
            }
        }
    }
    triplets.sort_by_key(|&(i, j, _)| (i, j));
    let max = triplets.iter().fold(0.0f64, |mx, t| mx.max(t.2.abs()));
    let cut = DROP_TOLERANCE * max;
    Ok(SymmetricSparseMatrix::from_sorted(n, triplets.into_iter().filter(|t| t.2.abs() >= cut)))
}

/// Adds `C/2 * 2 int_Omega phi_i phi_j rho` to the dense rows.
fn add_tail(mesh: &Mesh, order: FractionalOrder, half_c: f64, row_of: &[usize], rows: &mut [f64], n: usize) {
    let rule = QuadratureRule::simplex(mesh.dim(), TAIL_DEGREE);
    for c in 0..mesh.num_cells() {
        if mesh.region(c) != Region::Interior {
            continue;
        }
        let pts = mesh.cell_points(c);
        let xs: Vec<[f64; 2]> = rule
            .points
            .iter()
            .map(|lam| {
                let mut x = [0.0; 2];
                for (l, p) in lam.iter().zip(&pts) {
                    x[0] += l * p[0];
                    x[1] += l * p[1];
                }
                x
            })
            .collect();
        let rho = tail_density(mesh, order, &xs);
        let meas = mesh.cell_measure(c);
        let v = mesh.cell(c);
        for (k, lam) in rule.points.iter().enumerate() {
            let w = 2.0 * half_c * rule.weights[k] * meas * rho[k];
            for (p, &i) in v.iter().enumerate() {
                let row = &mut rows[row_of[i] * n..(row_of[i] + 1) * n];
                for (q, &j) in v.iter().enumerate() {
                    row[j] += w * lam[p] * lam[q];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, GeometrySpec};

    #[test]
    fn constants_are_in_the_kernel_without_tail() {
        let mesh = generate(&GeometrySpec::benchmark_interval(), 0.25).unwrap();
        let order = FractionalOrder::new(0.4, 1).unwrap();
        let a = assemble_stiffness(&mesh, order, TailPolicy::None).unwrap();
        let r = a.mul(&vec![1.0; mesh.num_nodes()]);
        let scale = a.max_abs();
        assert!(r.iter().all(|v| v.abs() < 1e-12 * scale), "{r:?}");
        assert!(a.is_symmetric());
    }

    #[test]
    fn tail_adds_positive_energy_to_interior_functions() {
        let mesh = generate(&GeometrySpec::benchmark_interval(), 0.25).unwrap();
        let order = FractionalOrder::new(0.5, 1).unwrap();
        let a0 = assemble_stiffness(&mesh, order, TailPolicy::None).unwrap();
        let a1 = assemble_stiffness(&mesh, order, TailPolicy::Analytic).unwrap();
        let ones = vec![1.0; mesh.num_nodes()];
        let e0 = a0.inner(&ones, &ones);
        let e1 = a1.inner(&ones, &ones);
        assert!(e0.abs() < 1e-12);
        // the constant function interacts with the far field only from Omega:
        // C/2 * 2 int_Omega rho
        let c = normalization_constant(order);
        let exact = c * crate::quadrature::tanh_sinh(
            |x, _, _| ((x + 1.5f64).powf(-1.0) + (1.5 - x).powf(-1.0)) / 1.0,
            -0.5,
            0.5,
            1e-14,
        );
        // degree-4 quadrature of the smooth density
        assert!((e1 - exact).abs() < 1e-6 * exact, "{e1} vs {exact}");
    }

    #[test]
    fn disk_stiffness_is_symmetric_with_constant_kernel() {
        let mesh = generate(&GeometrySpec::benchmark_disk(), 0.3).unwrap();
        let order = FractionalOrder::new(0.5, 2).unwrap();
        let a = assemble_stiffness(&mesh, order, TailPolicy::None).unwrap();
        assert!(a.is_symmetric());
        let r = a.mul(&vec![1.0; mesh.num_nodes()]);
        assert!(r.iter().all(|v| v.abs() < 1e-10 * a.max_abs()));
    }
}
