//! A pair integral of affine functions over `T_a x T_b` equals the sum over
//! all child pairs after uniform refinement. The children of a cell touch
//! each other by vertices and edges, so this ties the identical, edge,
//! vertex and near-field rules to each other.

use fracext::kernel::{FractionalOrder, PairIntegrator};
use fracext::mesh::{Mesh, Region};

fn contract(integ: &PairIntegrator, a: usize, b: usize, f: &[f64], g: &[f64]) -> f64 {
    let blk = integ.block(a, b).unwrap();
    let nodes = blk.nodes();
    let mut acc = 0.0;
    for (p, &i) in nodes.iter().enumerate() {
        for (q, &j) in nodes.iter().enumerate() {
            acc += f[i] * blk.values[p][q] * g[j];
        }
    }
    acc
}

fn nodal(mesh: &Mesh, h: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..mesh.num_nodes()).map(|i| h(mesh.point(i))).collect()
}

/// Compares the parent pair `(a, b)` with the sum over children after
/// `levels` refinements. Returns the relative discrepancy.
fn discrepancy(mesh: &Mesh, a: usize, b: usize, s: f64, levels: u32) -> f64 {
    let order = FractionalOrder::new(s, mesh.dim()).unwrap();
    let f = |x: [f64; 2]| 1.0 + 2.0 * x[0] - x[1];
    let g = |x: [f64; 2]| 0.5 - x[0] + 3.0 * x[1];
    let parent = PairIntegrator::new(mesh, order).unwrap();
    let reference = contract(&parent, a, b, &nodal(mesh, f), &nodal(mesh, g));
    let mut fine = mesh.clone();
    for _ in 0..levels {
        fine = fine.refine();
    }
    let k = if mesh.dim() == 1 { 2usize.pow(levels) } else { 4usize.pow(levels) };
    let integ = PairIntegrator::new(&fine, order).unwrap();
    let (ff, gg) = (nodal(&fine, f), nodal(&fine, g));
    // children of cell c are the k consecutive cells starting at c * k
    let mut total = 0.0;
    for ca in a * k..(a + 1) * k {
        for cb in b * k..(b + 1) * k {
            total += contract(&integ, ca, cb, &ff, &gg);
        }
    }
    (total - reference).abs() / reference.abs()
}

fn two_triangles(shared_edge: bool) -> Mesh {
    let coords = if shared_edge {
        vec![0.0, 0.0, 1.0, 0.1, 0.3, 0.9, 0.9, -0.8]
    } else {
        vec![0.0, 0.0, 1.0, 0.1, 0.3, 0.9, -0.2, -0.9, 0.7, -0.6]
    };
    let cells = if shared_edge { vec![0, 1, 2, 1, 0, 3] } else { vec![0, 1, 2, 0, 3, 4] };
    Mesh::new(2, coords, cells, vec![Region::Interior; 2]).unwrap()
}

#[test]
fn identical_triangle_is_consistent_with_its_children() {
    let mesh = Mesh::new(2, vec![0.0, 0.0, 1.0, 0.2, 0.35, 0.8], vec![0, 1, 2], vec![Region::Interior]).unwrap();
    for s in [0.1, 0.5, 0.9] {
        for levels in [1, 2] {
            let d = discrepancy(&mesh, 0, 0, s, levels);
            println!("identical s={s} levels={levels}: {d:e}");
            assert!(d < 1e-7, "s={s} levels={levels}: {d:e}");
        }
    }
}

#[test]
fn edge_pair_is_consistent_with_its_children() {
    let mesh = two_triangles(true);
    for s in [0.1, 0.5, 0.9] {
        let d = discrepancy(&mesh, 0, 1, s, 1);
        println!("edge s={s}: {d:e}");
        assert!(d < 1e-7, "s={s}: {d:e}");
    }
}

#[test]
fn vertex_pair_is_consistent_with_its_children() {
    let mesh = two_triangles(false);
    for s in [0.1, 0.5, 0.9] {
        let d = discrepancy(&mesh, 0, 1, s, 1);
        println!("vertex s={s}: {d:e}");
        assert!(d < 1e-7, "s={s}: {d:e}");
    }
}

#[test]
fn interval_pairs_are_consistent_with_their_children() {
    let mesh = Mesh::new(1, vec![0.0, 0.7, 1.5], vec![0, 1, 1, 2], vec![Region::Interior; 2]).unwrap();
    for s in [0.1, 0.5, 0.9] {
        for (a, b) in [(0, 0), (0, 1)] {
            let d = discrepancy(&mesh, a, b, s, 3);
            println!("1d ({a},{b}) s={s}: {d:e}");
            assert!(d < 1e-10, "({a},{b}) s={s}: {d:e}");
        }
    }
}

fn moment_contract(integ: &PairIntegrator, a: usize, b: usize, f: &[f64]) -> f64 {
    let (nodes, len, m) = integ.moment(a, b).unwrap();
    (0..len).map(|p| f[nodes[p]] * m[p]).sum()
}

#[test]
fn first_moments_are_consistent_with_children() {
    let f = |x: [f64; 2]| 1.0 + 2.0 * x[0] - x[1];
    let meshes = [
        two_triangles(true),
        two_triangles(false),
        Mesh::new(1, vec![0.0, 0.7, 1.5], vec![0, 1, 1, 2], vec![Region::Interior; 2]).unwrap(),
    ];
    for mesh in &meshes {
        for s in [0.2, 0.8] {
            let order = FractionalOrder::new(s, mesh.dim()).unwrap();
            let parent = PairIntegrator::new(mesh, order).unwrap();
            let reference = moment_contract(&parent, 0, 1, &nodal(mesh, f));
            let fine = mesh.refine().refine();
            let k = if mesh.dim() == 1 { 4 } else { 16 };
            let integ = PairIntegrator::new(&fine, order).unwrap();
            let ff = nodal(&fine, f);
            let mut total = 0.0;
            for ca in 0..k {
                for cb in k..2 * k {
                    total += moment_contract(&integ, ca, cb, &ff);
                }
            }
            let d = (total - reference).abs() / reference.abs();
            assert!(d < 1e-7, "dim {} s={s}: {d:e}", mesh.dim());
        }
    }
}
