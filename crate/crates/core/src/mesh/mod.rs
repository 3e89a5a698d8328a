//! Simplicial meshes of the truncated domain with region tags.

mod generate;
mod io;
mod partition;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use generate::{generate, generate_with_dofs, m_shape_polygon, GeometrySpec};
pub use io::{read_field, read_mesh, write_field, write_mesh};
pub use partition::{partition_dofs, DofPartition};

use crate::error::{Error, Result};

/// Region tag carried by every cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Inside the observation domain.
    Interior,
    /// In the truncated exterior, outside the control support.
    Exterior,
    /// In the truncated exterior and inside the control support.
    ControlSupport,
}

impl Region {
    pub fn is_exterior(self) -> bool {
        !matches!(self, Region::Interior)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Interior => "interior",
            Region::Exterior => "exterior",
            Region::ControlSupport => "control",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interior" => Ok(Region::Interior),
            "exterior" => Ok(Region::Exterior),
            "control" => Ok(Region::ControlSupport),
            other => Err(Error::InvalidMesh(format!("unknown region tag '{other}'"))),
        }
    }
}

/// Conforming simplicial mesh in one or two dimensions.
///
/// Coordinates and connectivity are stored flat: node `i` occupies
/// `coords[dim * i..dim * (i + 1)]` and cell `c` occupies
/// `cells[(dim + 1) * c..(dim + 1) * (c + 1)]`. Triangles are stored
/// counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dim: usize,
    coords: Vec<f64>,
    cells: Vec<usize>,
    regions: Vec<Region>,
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant. Clockwise
    /// triangles are reoriented.
    pub fn new(dim: usize, coords: Vec<f64>, mut cells: Vec<usize>, regions: Vec<Region>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidMesh("coordinate array length is not a multiple of dim".into()));
        }
        let nv = dim + 1;
        if cells.len() % nv != 0 || cells.len() / nv != regions.len() {
            return Err(Error::InvalidMesh("cell array and region tags disagree in length".into()));
        }
        if dim == 2 {
            for c in cells.chunks_mut(3) {
                if c.iter().any(|&v| v >= coords.len() / 2) {
                    break; // reported by validate
                }
                let p = |v: usize| [coords[2 * v], coords[2 * v + 1]];
                if signed_area(p(c[0]), p(c[1]), p(c[2])) < 0.0 {
                    c.swap(1, 2);
                }
            }
        }
        let mesh = Mesh { dim, coords, cells, regions };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.regions.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[self.dim * i..self.dim * (i + 1)]
    }

    /// Node coordinates padded to two components.
    pub fn point(&self, i: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coords[i], 0.0]
        } else {
            [self.coords[2 * i], self.coords[2 * i + 1]]
        }
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        let nv = self.dim + 1;
        &self.cells[nv * c..nv * (c + 1)]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[usize]> {
        self.cells.chunks(self.dim + 1)
    }

    pub fn region(&self, c: usize) -> Region {
        self.regions[c]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn cell_points(&self, c: usize) -> [[f64; 2]; 3] {
        let v = self.cell(c);
        let mut out = [[0.0; 2]; 3];
        for (k, &i) in v.iter().enumerate() {
            out[k] = self.point(i);
        }
        out
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        match self.dim {
            1 => (p[1][0] - p[0][0]).abs(),
            _ => signed_area(p[0], p[1], p[2]),
        }
    }

    pub fn cell_diameter(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        match self.dim {
            1 => (p[1][0] - p[0][0]).abs(),
            _ => dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[0], p[2])),
        }
    }

    pub fn cell_centroid(&self, c: usize) -> [f64; 2] {
        let p = self.cell_points(c);
        let k = (self.dim + 1) as f64;
        let mut out = [0.0; 2];
        for q in p.iter().take(self.dim + 1) {
            out[0] += q[0] / k;
            out[1] += q[1] / k;
        }
        out
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_diameter(c)).fold(0.0, f64::max)
    }

    pub fn min_diameter(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.cell_diameter(c)).fold(f64::INFINITY, f64::min)
    }

    /// Ratio of the largest to the smallest cell diameter.
    pub fn quasi_uniformity(&self) -> f64 {
        self.max_diameter() / self.min_diameter()
    }

    /// Total measure of the cells satisfying `pred`.
    pub fn region_measure(&self, pred: impl Fn(Region) -> bool) -> f64 {
        (0..self.num_cells()).filter(|&c| pred(self.region(c))).map(|c| self.cell_measure(c)).sum()
    }

    /// Facets (sorted vertex lists) that belong to exactly one cell: the
    /// boundary of the truncated domain.
    pub fn boundary_facets(&self) -> Vec<Vec<usize>> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in 0..self.num_cells() {
            for f in facets_of(self.cell(c)) {
                *count.entry(f).or_default() += 1;
            }
        }
        let mut out: Vec<Vec<usize>> = count.into_iter().filter(|(_, n)| *n == 1).map(|(f, _)| f).collect();
        out.sort();
        out
    }

    /// Boolean mask of nodes on the outer boundary.
    pub fn boundary_nodes(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_nodes()];
        for f in self.boundary_facets() {
            for v in f {
                mask[v] = true;
            }
        }
        mask
    }

    /// Locates the cell containing `x` and returns its barycentric coordinates.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let tol = 1e-12;
        (0..self.num_cells()).find_map(|c| {
            let lam = self.barycentric(c, x);
            lam.iter().take(self.dim + 1).all(|&l| l >= -tol).then_some((c, lam))
        })
    }

    /// Barycentric coordinates of `x` with respect to cell `c`.
    pub fn barycentric(&self, c: usize, x: [f64; 2]) -> [f64; 3] {
        let p = self.cell_points(c);
        match self.dim {
            1 => {
                let t = (x[0] - p[0][0]) / (p[1][0] - p[0][0]);
                [1.0 - t, t, 0.0]
            }
            _ => {
                let area = signed_area(p[0], p[1], p[2]);
                let l1 = signed_area(p[0], x, p[2]) / area;
                let l2 = signed_area(p[0], p[1], x) / area;
                [1.0 - l1 - l2, l1, l2]
            }
        }
    }

    /// Evaluates a nodal P1 function at `x`; `None` outside the mesh.
    pub fn evaluate(&self, values: &[f64], x: [f64; 2]) -> Option<f64> {
        let (c, lam) = self.locate(x)?;
        Some(self.cell(c).iter().zip(lam).map(|(&v, l)| l * values[v]).sum())
    }

    /// Uniform refinement: intervals are bisected, triangles split into four.
    /// Region tags are inherited and original nodes keep their indices.
    pub fn refine(&self) -> Mesh {
        let mut coords = self.coords.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, coords: &mut Vec<f64>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let id = coords.len() / self.dim;
                for d in 0..self.dim {
                    let v = 0.5 * (coords[self.dim * a + d] + coords[self.dim * b + d]);
                    coords.push(v);
                }
                id
            })
        };
        let mut cells = Vec::new();
        let mut regions = Vec::new();
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            let r = self.region(c);
            if self.dim == 1 {
                let m = mid(v[0], v[1], &mut coords);
                cells.extend_from_slice(&[v[0], m, m, v[1]]);
                regions.extend_from_slice(&[r, r]);
            } else {
                let m01 = mid(v[0], v[1], &mut coords);
                let m12 = mid(v[1], v[2], &mut coords);
                let m02 = mid(v[0], v[2], &mut coords);
                cells.extend_from_slice(&[v[0], m01, m02, m01, v[1], m12, m02, m12, v[2], m01, m12, m02]);
                regions.extend_from_slice(&[r, r, r, r]);
            }
        }
        Mesh { dim: self.dim, coords, cells, regions }
    }

    /// Checks distinct in-range vertices, positive measure, conformity and
    /// the placement of the control support.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        for c in 0..self.num_cells() {
            let v = self.cell(c);
            if v.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("cell {c} references a node out of range")));
            }
            for a in 0..v.len() {
                for b in a + 1..v.len() {
                    if v[a] == v[b] {
                        return Err(Error::InvalidMesh(format!("cell {c} repeats vertex {}", v[a])));
                    }
                }
            }
            let m = self.cell_measure(c);
            let h = self.cell_diameter(c);
            if !(m > 1e-14 * h.powi(self.dim as i32)) {
                return Err(Error::InvalidMesh(format!("cell {c} is degenerate")));
            }
        }
        self.check_conformity()?;
        // control support may not touch the closure of the interior
        let mut touches_interior = vec![false; n];
        for c in 0..self.num_cells() {
            if self.region(c) == Region::Interior {
                for &v in self.cell(c) {
                    touches_interior[v] = true;
                }
            }
        }
        for c in 0..self.num_cells() {
            if self.region(c) == Region::ControlSupport && self.cell(c).iter().any(|&v| touches_interior[v]) {
                return Err(Error::InvalidMesh(format!("control cell {c} touches the interior region")));
            }
        }
        Ok(())
    }

    fn check_conformity(&self) -> Result<()> {
        if self.dim == 1 {
            let mut spans: Vec<(f64, f64)> = (0..self.num_cells())
                .map(|c| {
                    let p = self.cell_points(c);
                    (p[0][0].min(p[1][0]), p[0][0].max(p[1][0]))
                })
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in spans.windows(2) {
                if w[1].0 < w[0].1 - 1e-12 * (w[0].1 - w[0].0) {
                    return Err(Error::InvalidMesh("overlapping intervals".into()));
                }
            }
            return Ok(());
        }
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in 0..self.num_cells() {
            for f in facets_of(self.cell(c)) {
                *count.entry(f).or_default() += 1;
            }
        }
        if let Some((f, _)) = count.iter().find(|(_, &k)| k > 2) {
            return Err(Error::InvalidMesh(format!("edge {f:?} is shared by more than two cells")));
        }
        // hanging nodes show up as nodes lying inside boundary edges
        let boundary: Vec<&Vec<usize>> = count.iter().filter(|(_, &k)| k == 1).map(|(f, _)| f).collect();
        let h = self.max_diameter();
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let key = |p: [f64; 2]| ((p[0] / h).floor() as i64, (p[1] / h).floor() as i64);
        for i in 0..self.num_nodes() {
            grid.entry(key(self.point(i))).or_default().push(i);
        }
        for f in boundary {
            let a = self.point(f[0]);
            let b = self.point(f[1]);
            let len = dist(a, b);
            let (ka, kb) = (key(a), key(b));
            for gx in ka.0.min(kb.0) - 1..=ka.0.max(kb.0) + 1 {
                for gy in ka.1.min(kb.1) - 1..=ka.1.max(kb.1) + 1 {
                    for &i in grid.get(&(gx, gy)).map(Vec::as_slice).unwrap_or(&[]) {
                        if i == f[0] || i == f[1] {
                            continue;
                        }
                        let p = self.point(i);
                        let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
                        if t > 1e-9 && t < 1.0 - 1e-9 && signed_area(a, b, p).abs() < 1e-10 * len * len {
                            return Err(Error::InvalidMesh(format!("hanging node {i} on edge {f:?}")));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn facets_of(cell: &[usize]) -> Vec<Vec<usize>> {
    if cell.len() == 2 {
        return vec![vec![cell[0]], vec![cell[1]]];
    }
    let mut out = Vec::with_capacity(3);
    for k in 0..3 {
        let mut f = vec![cell[k], cell[(k + 1) % 3]];
        f.sort_unstable();
        out.push(f);
    }
    out
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
