//! The fractional kernel |x - y|^{-(N + 2s)}: its normalization constant,
//! element-pair double integrals against P1 basis differences, and the far
//! field beyond the truncated domain.

mod regular;
mod singular;
mod tail;

use std::fmt;
use std::str::FromStr;

pub use tail::{tail_density, tail_integral, TailPolicy, TAIL_DEGREE};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::special::gamma;

/// Fractional order `s` in (0, 1) together with the spatial dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    s: f64,
    dim: usize,
}

impl FractionalOrder {
    pub fn new(s: f64, dim: usize) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidOrder(s));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(FractionalOrder { s, dim })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The kernel exponent N + 2s.
    pub fn exponent(&self) -> f64 {
        self.dim as f64 + 2.0 * self.s
    }
}

impl fmt::Display for FractionalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s={} N={}", self.s, self.dim)
    }
}

impl FromStr for TailPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TailPolicy::None),
            "analytic" => Ok(TailPolicy::Analytic),
            other => Err(Error::Config(format!("unknown tail policy '{other}'"))),
        }
    }
}

/// C_{N,s} = s 2^{2s} Gamma((N + 2s)/2) / (pi^{N/2} Gamma(1 - s)).
pub fn normalization_constant(order: FractionalOrder) -> f64 {
    let s = order.s;
    let n = order.dim as f64;
    s * 4f64.powf(s) * gamma(0.5 * (2.0 * s + n)) / (std::f64::consts::PI.powf(0.5 * n) * gamma(1.0 - s))
}

/// Local interaction matrix of one ordered cell pair.
///
/// `nodes[..len]` lists the vertices of `cell_a` followed by the vertices of
/// `cell_b` not shared with `cell_a`; `values[p][q]` is
/// the integral over `T_a x T_b` of
/// `(phi_p(x) - phi_p(y)) (phi_q(x) - phi_q(y)) |x - y|^{-(N + 2s)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBlock {
    pub nodes: [usize; 6],
    pub len: usize,
    pub values: [[f64; 6]; 6],
}

impl PairBlock {
    pub fn nodes(&self) -> &[usize] {
        &self.nodes[..self.len]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let slot = |v: usize| self.nodes().iter().position(|&n| n == v);
        match (slot(i), slot(j)) {
            (Some(p), Some(q)) => self.values[p][q],
            _ => 0.0,
        }
    }

    /// Adds a block expressed in local slot order.
    fn add_local(&mut self, slots: &[usize], local: &[[f64; 6]; 6]) {
        for (p, &sp) in slots.iter().enumerate() {
            for (q, &sq) in slots.iter().enumerate() {
                self.values[sp][sq] += local[p][q];
            }
        }
    }
}

/// Geometry of one cell as used by the pair integrators.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CellGeom {
    pub dim: usize,
    pub verts: [[f64; 2]; 3],
    pub measure: f64,
    /// Gradients of the barycentric coordinates.
    pub grads: [[f64; 2]; 3],
}

impl CellGeom {
    pub fn new(mesh: &Mesh, c: usize) -> Self {
        let dim = mesh.dim();
        let verts = mesh.cell_points(c);
        let measure = mesh.cell_measure(c);
        let mut grads = [[0.0; 2]; 3];
        if dim == 1 {
            let l = verts[1][0] - verts[0][0];
            grads[0] = [-1.0 / l, 0.0];
            grads[1] = [1.0 / l, 0.0];
        } else {
            for (i, g) in grads.iter_mut().enumerate() {
                let b = verts[(i + 1) % 3];
                let c = verts[(i + 2) % 3];
                *g = [(b[1] - c[1]) / (2.0 * measure), (c[0] - b[0]) / (2.0 * measure)];
            }
        }
        CellGeom { dim, verts, measure, grads }
    }

    pub fn nv(&self) -> usize {
        self.dim + 1
    }
}

/// Evaluates element-pair integrals on one mesh for one fractional order.
pub struct PairIntegrator<'m> {
    mesh: &'m Mesh,
    order: FractionalOrder,
    geoms: Vec<CellGeom>,
    regular: regular::RegularIntegrator,
}

impl<'m> PairIntegrator<'m> {
    pub fn new(mesh: &'m Mesh, order: FractionalOrder) -> Result<Self> {
        if mesh.dim() != order.dim() {
            return Err(Error::InvalidArgument(format!(
                "order is for dimension {} but the mesh has dimension {}",
                order.dim(),
                mesh.dim()
            )));
        }
        let geoms: Vec<CellGeom> = (0..mesh.num_cells()).map(|c| CellGeom::new(mesh, c)).collect();
        let regular = regular::RegularIntegrator::new(&geoms, order);
        Ok(PairIntegrator { mesh, order, geoms, regular })
    }

    pub fn order(&self) -> FractionalOrder {
        self.order
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Local interaction matrix of the ordered pair `(cell_a, cell_b)`.
    pub fn block(&self, cell_a: usize, cell_b: usize) -> Result<PairBlock> {
        let layout = self.layout(cell_a, cell_b);
        let mut block = PairBlock { nodes: layout.nodes, len: layout.len, values: [[0.0; 6]; 6] };
        let (ga, gb) = (&self.geoms[cell_a], &self.geoms[cell_b]);
        let s = self.order.s();
        let nv = ga.nv();
        match layout.shared.len() {
            0 => {
                let sums = self.regular.sums(ga, gb, cell_a, cell_b)?;
                let slot_a: Vec<usize> = (0..nv).collect();
                self.regular.accumulate(&sums, &slot_a, &layout.slot_b[..nv], &mut block);
            }
            k if k == nv => {
                let local = singular::identical(ga, s);
                let slots: Vec<usize> = (0..nv).collect();
                block.add_local(&slots, &local);
            }
            k => {
                let mut sink = singular::Outer::new();
                let slots = if k == 1 {
                    let (pa, pb) = layout.shared[0];
                    singular::vertex(ga, gb, pa, pb, s, &layout.slot_b, &mut sink)
                } else {
                    singular::edge(ga, gb, &layout.shared, s, &layout.slot_b, &mut sink)
                };
                block.add_local(&slots, &sink.symmetrized(slots.len()));
            }
        }
        Ok(block)
    }

    /// First moments of the ordered pair: entry `p` of the result is the
    /// integral over `x in T_a`, `y in T_b` of `(phi_p(x) - phi_p(y))
    /// |x - y|^{-(N + 2s)}`, in the node order of [`PairBlock`]. The cells
    /// must be distinct.
    pub fn moment(&self, cell_a: usize, cell_b: usize) -> Result<([usize; 6], usize, [f64; 6])> {
        if cell_a == cell_b {
            return Err(Error::InvalidArgument("first moments need two distinct cells".into()));
        }
        let layout = self.layout(cell_a, cell_b);
        let (ga, gb) = (&self.geoms[cell_a], &self.geoms[cell_b]);
        let s = self.order.s();
        let nv = ga.nv();
        let mut out = [0.0; 6];
        match layout.shared.len() {
            0 => {
                let sums = self.regular.sums(ga, gb, cell_a, cell_b)?;
                for p in 0..nv {
                    out[p] += sums.va[p];
                    out[layout.slot_b[p]] -= sums.vb[p];
                }
            }
            k => {
                let mut sink = singular::Moment([0.0; 6]);
                let slots = if k == 1 {
                    let (pa, pb) = layout.shared[0];
                    singular::vertex(ga, gb, pa, pb, s, &layout.slot_b, &mut sink)
                } else {
                    singular::edge(ga, gb, &layout.shared, s, &layout.slot_b, &mut sink)
                };
                for (k, &slot) in slots.iter().enumerate() {
                    out[slot] += sink.0[k];
                }
            }
        }
        Ok((layout.nodes, layout.len, out))
    }

    fn layout(&self, cell_a: usize, cell_b: usize) -> Layout {
        let va = self.mesh.cell(cell_a);
        let vb = self.mesh.cell(cell_b);
        let mut nodes = [usize::MAX; 6];
        let mut len = 0;
        for &v in va {
            nodes[len] = v;
            len += 1;
        }
        let mut slot_b = [0usize; 3];
        let mut shared: Vec<(usize, usize)> = Vec::new();
        for (k, &v) in vb.iter().enumerate() {
            match va.iter().position(|&w| w == v) {
                Some(p) => {
                    slot_b[k] = p;
                    shared.push((p, k));
                }
                None => {
                    slot_b[k] = len;
                    nodes[len] = v;
                    len += 1;
                }
            }
        }
        // canonical order so that (a, b) and (b, a) use mirrored rules
        shared.sort_by_key(|&(p, _)| va[p]);
        Layout { nodes, len, slot_b, shared }
    }
}

struct Layout {
    nodes: [usize; 6],
    len: usize,
    slot_b: [usize; 3],
    shared: Vec<(usize, usize)>,
}

/// Integral over `T_a x T_b` of `(phi_i(x) - phi_i(y)) (phi_j(x) - phi_j(y))
/// |x - y|^{-(N + 2s)}` for the global hat functions of nodes `i` and `j`.
pub fn pair_integral(mesh: &Mesh, cell_a: usize, cell_b: usize, i: usize, j: usize, order: FractionalOrder) -> Result<f64> {
    let integrator = PairIntegrator::new(mesh, order)?;
    Ok(integrator.block(cell_a, cell_b)?.get(i, j))
}
