use super::{Mesh, Region};

/// Node index sets by region. A node belongs to a set when some cell of
/// that region contains it, so interface nodes on the boundary of the
/// observation domain appear in both `interior` and `exterior`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DofPartition {
    pub interior: Vec<usize>,
    pub exterior: Vec<usize>,
    pub control: Vec<usize>,
}

impl DofPartition {
    /// Nodes touched only by exterior cells.
    pub fn exterior_only(&self) -> Vec<usize> {
        let mut in_interior = vec![false; self.max_index()];
        for &i in &self.interior {
            in_interior[i] = true;
        }
        self.exterior.iter().copied().filter(|&i| !in_interior[i]).collect()
    }

    /// Interior nodes away from the interface; these are the unknowns of a
    /// problem with homogeneous exterior data imposed by elimination.
    pub fn free_interior(&self) -> Vec<usize> {
        let mut in_exterior = vec![false; self.max_index()];
        for &i in &self.exterior {
            in_exterior[i] = true;
        }
        self.interior.iter().copied().filter(|&i| !in_exterior[i]).collect()
    }

    fn max_index(&self) -> usize {
        let m = |v: &[usize]| v.last().map_or(0, |&i| i + 1);
        m(&self.interior).max(m(&self.exterior)).max(m(&self.control))
    }
}

pub fn partition_dofs(mesh: &Mesh) -> DofPartition {
    let n = mesh.num_nodes();
    let mut masks = [vec![false; n], vec![false; n], vec![false; n]];
    for c in 0..mesh.num_cells() {
        let r = mesh.region(c);
        for &v in mesh.cell(c) {
            match r {
                Region::Interior => masks[0][v] = true,
                Region::Exterior => masks[1][v] = true,
                Region::ControlSupport => {
                    masks[1][v] = true;
                    masks[2][v] = true;
                }
            }
        }
    }
    let collect = |m: &[bool]| (0..n).filter(|&i| m[i]).collect::<Vec<_>>();
    DofPartition { interior: collect(&masks[0]), exterior: collect(&masks[1]), control: collect(&masks[2]) }
}
