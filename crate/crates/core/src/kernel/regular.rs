//! Element pairs without a common vertex. The integrand is smooth; the rule
//! is chosen from the separation of the two cells relative to their size,
//! and pairs that are too close for either rule are subdivided.

use super::{CellGeom, FractionalOrder, PairBlock};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;

/// Gap-to-diameter ratio above which the low-order rule is used.
const FAR_SEPARATION: f64 = 4.0;
/// Ratio above which the high-order rule is used without subdivision.
const MID_SEPARATION: f64 = 1.0;
/// Subdivision depth caps. In 1D only the near child recurses, so cost is
/// linear in depth and strongly graded meshes are affordable; in 2D the
/// near set grows geometrically along close edges.
const MAX_DEPTH_1D: usize = 64;
const MAX_DEPTH_2D: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Patch {
    /// Barycentric coordinates of the patch vertices in the parent cell.
    lam: [[f64; 3]; 3],
    verts: [[f64; 2]; 3],
    measure: f64,
}

impl Patch {
    fn whole(g: &CellGeom) -> Self {
        let mut lam = [[0.0; 3]; 3];
        for (k, row) in lam.iter_mut().enumerate().take(g.nv()) {
            row[k] = 1.0;
        }
        Patch { lam, verts: g.verts, measure: g.measure }
    }

    fn extent(&self, nv: usize) -> ([f64; 2], f64, f64) {
        let mut c = [0.0; 2];
        for v in &self.verts[..nv] {
            c[0] += v[0] / nv as f64;
            c[1] += v[1] / nv as f64;
        }
        let mut radius: f64 = 0.0;
        let mut diam: f64 = 0.0;
        for i in 0..nv {
            radius = radius.max(dist(c, self.verts[i]));
            for j in i + 1..nv {
                diam = diam.max(dist(self.verts[i], self.verts[j]));
            }
        }
        (c, radius, diam)
    }

    fn children(&self, nv: usize) -> Vec<Patch> {
        let mid = |i: usize, j: usize| -> ([f64; 3], [f64; 2]) {
            let mut l = [0.0; 3];
            for k in 0..3 {
                l[k] = 0.5 * (self.lam[i][k] + self.lam[j][k]);
            }
            let v = [0.5 * (self.verts[i][0] + self.verts[j][0]), 0.5 * (self.verts[i][1] + self.verts[j][1])];
            (l, v)
        };
        if nv == 2 {
            let (lm, vm) = mid(0, 1);
            let m = 0.5 * self.measure;
            return vec![
                Patch { lam: [self.lam[0], lm, [0.0; 3]], verts: [self.verts[0], vm, [0.0; 2]], measure: m },
                Patch { lam: [lm, self.lam[1], [0.0; 3]], verts: [vm, self.verts[1], [0.0; 2]], measure: m },
            ];
        }
        let (l01, v01) = mid(0, 1);
        let (l12, v12) = mid(1, 2);
        let (l02, v02) = mid(0, 2);
        let m = 0.25 * self.measure;
        let (l, v) = (self.lam, self.verts);
        vec![
            Patch { lam: [l[0], l01, l02], verts: [v[0], v01, v02], measure: m },
            Patch { lam: [l01, l[1], l12], verts: [v01, v[1], v12], measure: m },
            Patch { lam: [l02, l12, l[2]], verts: [v02, v12, v[2]], measure: m },
            Patch { lam: [l01, l12, l02], verts: [v01, v12, v02], measure: m },
        ]
    }

    fn points(&self, rule: &QuadratureRule, nv: usize) -> Points {
        let mut pts = Points::default();
        for (mu, &w) in rule.points.iter().zip(&rule.weights) {
            let mut lam = [0.0; 3];
            let mut x = [0.0; 2];
            for k in 0..nv {
                for (l, pl) in lam.iter_mut().zip(&self.lam[k]) {
                    *l += mu[k] * pl;
                }
                x[0] += mu[k] * self.verts[k][0];
                x[1] += mu[k] * self.verts[k][1];
            }
            pts.x.push(x);
            pts.lam.push(lam);
            pts.w.push(w * self.measure);
        }
        pts
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Default)]
struct Points {
    x: Vec<[f64; 2]>,
    lam: Vec<[f64; 3]>,
    w: Vec<f64>,
}

/// Partial sums of one pair: with `k` the kernel and `l_a`, `l_b` the
/// barycentric coordinates, `aa = int int k l_a l_a^T`, `ab = int int k l_a
/// l_b^T`, `bb = int int k l_b l_b^T`, `va = int int k l_a`, `vb = int int k l_b`.
#[derive(Default)]
pub(crate) struct Sums {
    pub aa: [[f64; 3]; 3],
    pub ab: [[f64; 3]; 3],
    pub bb: [[f64; 3]; 3],
    pub va: [f64; 3],
    pub vb: [f64; 3],
}

pub(crate) struct RegularIntegrator {
    dim: usize,
    half_expo: f64,
    far: QuadratureRule,
    mid: QuadratureRule,
    cached: Vec<Points>,
}

impl RegularIntegrator {
    pub fn new(geoms: &[CellGeom], order: FractionalOrder) -> Self {
        let dim = order.dim();
        let (far, mid) = if dim == 1 {
            (QuadratureRule::interval(11), QuadratureRule::interval(31))
        } else {
            (QuadratureRule::triangle(4), QuadratureRule::triangle(8))
        };
        let cached = geoms.iter().map(|g| Patch::whole(g).points(&far, dim + 1)).collect();
        RegularIntegrator { dim, half_expo: -0.5 * order.exponent(), far, mid, cached }
    }

    pub fn sums(&self, ga: &CellGeom, gb: &CellGeom, cell_a: usize, cell_b: usize) -> Result<Sums> {
        let nv = self.dim + 1;
        let pa = Patch::whole(ga);
        let pb = Patch::whole(gb);
        let mut sums = Sums::default();
        if separation(&pa, &pb, nv) >= FAR_SEPARATION {
            self.add_points(&self.cached[cell_a], &self.cached[cell_b], nv, &mut sums);
        } else {
            self.recurse(pa, pb, 0, &mut sums).map_err(|_| Error::QuadratureNonConvergence { cell_a, cell_b })?;
        }
        Ok(sums)
    }

    pub fn accumulate(&self, sums: &Sums, slot_a: &[usize], slot_b: &[usize], block: &mut PairBlock) {
        let nv = self.dim + 1;
        for p in 0..nv {
            for q in 0..nv {
                block.values[slot_a[p]][slot_a[q]] += sums.aa[p][q];
                block.values[slot_b[p]][slot_b[q]] += sums.bb[p][q];
                block.values[slot_a[p]][slot_b[q]] -= sums.ab[p][q];
                block.values[slot_b[q]][slot_a[p]] -= sums.ab[p][q];
            }
        }
    }

    fn recurse(&self, pa: Patch, pb: Patch, depth: usize, sums: &mut Sums) -> std::result::Result<(), ()> {
        let nv = self.dim + 1;
        let sep = separation(&pa, &pb, nv);
        if sep >= FAR_SEPARATION {
            return {
                self.add_points(&pa.points(&self.far, nv), &pb.points(&self.far, nv), nv, sums);
                Ok(())
            };
        }
        if sep >= MID_SEPARATION {
            self.add_points(&pa.points(&self.mid, nv), &pb.points(&self.mid, nv), nv, sums);
            return Ok(());
        }
        if depth >= if self.dim == 1 { MAX_DEPTH_1D } else { MAX_DEPTH_2D } {
            return Err(());
        }
        let (_, _, da) = pa.extent(nv);
        let (_, _, db) = pb.extent(nv);
        if da >= db {
            for child in pa.children(nv) {
                self.recurse(child, pb, depth + 1, sums)?;
            }
        } else {
            for child in pb.children(nv) {
                self.recurse(pa, child, depth + 1, sums)?;
            }
        }
        Ok(())
    }

    fn add_points(&self, xa: &Points, yb: &Points, nv: usize, sums: &mut Sums) {
        let mut colsum = vec![0.0; yb.x.len()];
        for i in 0..xa.x.len() {
            let x = xa.x[i];
            let mut rowsum = 0.0;
            let mut cross = [0.0; 3];
            for j in 0..yb.x.len() {
                let y = yb.x[j];
                let r2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
                let k = r2.powf(self.half_expo);
                let kw = k * yb.w[j];
                rowsum += kw;
                for q in 0..nv {
                    cross[q] += kw * yb.lam[j][q];
                }
                colsum[j] += k * xa.w[i];
            }
            let wi = xa.w[i];
            let la = &xa.lam[i];
            for p in 0..nv {
                sums.va[p] += wi * rowsum * la[p];
                let wp = wi * rowsum * la[p];
                for q in p..nv {
                    sums.aa[p][q] += wp * la[q];
                }
                for q in 0..nv {
                    sums.ab[p][q] += wi * la[p] * cross[q];
                }
            }
        }
        for j in 0..yb.x.len() {
            let wj = yb.w[j] * colsum[j];
            let lb = &yb.lam[j];
            for p in 0..nv {
                sums.vb[p] += wj * lb[p];
                let wp = wj * lb[p];
                for q in p..nv {
                    sums.bb[p][q] += wp * lb[q];
                }
            }
        }
        for p in 0..nv {
            for q in 0..p {
                sums.aa[p][q] = sums.aa[q][p];
                sums.bb[p][q] = sums.bb[q][p];
            }
        }
    }
}

/// Lower bound on the gap between two patches divided by the larger diameter.
fn separation(pa: &Patch, pb: &Patch, nv: usize) -> f64 {
    let (ca, ra, da) = pa.extent(nv);
    let (cb, rb, db) = pb.extent(nv);
    (dist(ca, cb) - ra - rb) / da.max(db)
}
