//! Element pairs that share at least one vertex.
//!
//! Identical cells are reduced to a one-dimensional angular integral using
//! the overlap measure `|T n (T + w)| = |T| (1 - sum_i max(0, grad l_i . w))^N`.
//! Touching cells are mapped to coordinates relative to the shared vertex or
//! edge in which the integrand is positively homogeneous; the radial
//! variable is then integrated exactly and the remaining smooth integrals
//! use Gauss rules.

use std::f64::consts::PI;

use super::CellGeom;
use crate::quadrature::gauss_legendre;

const ANGULAR_POINTS: usize = 24;
const VERTEX_POINTS_1D: usize = 24;
const VERTEX_POINTS_2D: usize = 8;
const EDGE_POINTS: usize = 12;

pub(crate) type Local = [[f64; 6]; 6];

/// Receives weighted basis-difference vectors `d` at quadrature points.
pub(crate) trait Sink {
    /// Number of difference factors in the integrand: 2 for the bilinear
    /// block, 1 for first moments.
    const FACTORS: usize;
    fn add(&mut self, d: &[f64], w: f64);
}

/// Accumulates the upper triangle of `sum w d d^T`.
pub(crate) struct Outer(pub Local);

impl Sink for Outer {
    const FACTORS: usize = 2;

    fn add(&mut self, d: &[f64], w: f64) {
        for p in 0..d.len() {
            let wp = w * d[p];
            for q in p..d.len() {
                self.0[p][q] += wp * d[q];
            }
        }
    }
}

impl Outer {
    pub fn new() -> Self {
        Outer([[0.0; 6]; 6])
    }

    pub fn symmetrized(mut self, n: usize) -> Local {
        for p in 0..n {
            for q in 0..p {
                self.0[p][q] = self.0[q][p];
            }
        }
        self.0
    }
}

/// Accumulates `sum w d`.
pub(crate) struct Moment(pub [f64; 6]);

impl Sink for Moment {
    const FACTORS: usize = 1;

    fn add(&mut self, d: &[f64], w: f64) {
        for (m, v) in self.0.iter_mut().zip(d) {
            *m += w * v;
        }
    }
}

/// Block of a cell with itself, in the cell's vertex order.
pub(crate) fn identical(g: &CellGeom, s: f64) -> Local {
    let nv = g.nv();
    if g.dim == 1 {
        let mut m = [[0.0; 6]; 6];
        let l = g.measure;
        let factor = 2.0 * l.powf(3.0 - 2.0 * s) / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s));
        for p in 0..2 {
            for q in 0..2 {
                m[p][q] = g.grads[p][0] * g.grads[q][0] * factor;
            }
        }
        return m;
    }
    // c(theta) = sum_i max(0, grad l_i . e) has kinks where e is orthogonal
    // to a gradient; it is pi-periodic, as is the rest of the integrand.
    let mut breaks: Vec<f64> = vec![0.0, PI];
    for gr in &g.grads {
        let t = (gr[1].atan2(gr[0]) + 0.5 * PI).rem_euclid(PI);
        breaks.push(t);
    }
    breaks.sort_by(f64::total_cmp);
    let (x, w) = gauss_legendre(ANGULAR_POINTS);
    let beta = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s));
    let mut m = Outer::new();
    for seg in breaks.windows(2) {
        let len = seg[1] - seg[0];
        if len <= 1e-15 {
            continue;
        }
        for k in 0..x.len() {
            let t = seg[0] + len * x[k];
            let e = [t.cos(), t.sin()];
            let proj: Vec<f64> = g.grads.iter().map(|gr| gr[0] * e[0] + gr[1] * e[1]).collect();
            let c: f64 = proj.iter().map(|v| v.max(0.0)).sum();
            m.add(&proj, 2.0 * len * w[k] * c.powf(2.0 * s - 2.0) * g.measure * beta);
        }
    }
    m.symmetrized(nv)
}

/// Pair sharing exactly one vertex: `pa`-th vertex of `ga` equals the
/// `pb`-th vertex of `gb`. Feeds the sink in the local order (shared,
/// other vertices of a, other vertices of b) and returns the block slots
/// of that order.
pub(crate) fn vertex<S: Sink>(ga: &CellGeom, gb: &CellGeom, pa: usize, pb: usize, s: f64, slot_b: &[usize], sink: &mut S) -> Vec<usize> {
    let nv = ga.nv();
    let q = S::FACTORS as f64;
    let others_a: Vec<usize> = (0..nv).filter(|&k| k != pa).collect();
    let others_b: Vec<usize> = (0..nv).filter(|&k| k != pb).collect();
    let mut slots = vec![pa];
    slots.extend(others_a.iter().copied());
    slots.extend(others_b.iter().map(|&k| slot_b[k]));
    let p0 = ga.verts[pa];
    let edge = |g: &CellGeom, k: usize| [g.verts[k][0] - p0[0], g.verts[k][1] - p0[1]];
    if ga.dim == 1 {
        let a = edge(ga, others_a[0])[0].abs();
        let b = edge(gb, others_b[0])[0].abs();
        let expo = -1.0 - 2.0 * s;
        // radial integral of xi^{q - 1 - 2s} xi over [0, 1]
        let factor = a * b / (q + 1.0 - 2.0 * s);
        let (x, w) = gauss_legendre(VERTEX_POINTS_1D);
        for k in 0..x.len() {
            let eta = x[k];
            // s >= t: x = P + a, y = P + eta b
            sink.add(&[eta - 1.0, 1.0, -eta], factor * w[k] * (a + eta * b).powf(expo));
            // t >= s
            sink.add(&[1.0 - eta, eta, -1.0], factor * w[k] * (eta * a + b).powf(expo));
        }
        return slots;
    }
    let a1 = edge(ga, others_a[0]);
    let a2 = edge(ga, others_a[1]);
    let b1 = edge(gb, others_b[0]);
    let b2 = edge(gb, others_b[1]);
    let half_expo = -0.5 * (2.0 + 2.0 * s);
    // Jacobians 2|T_a| 2|T_b| and the radial integral of xi^{q - 2 - 2s} xi^3
    let factor = 4.0 * ga.measure * gb.measure / (q + 2.0 - 2.0 * s);
    let (x, w) = gauss_legendre(VERTEX_POINTS_2D);
    let n = x.len();
    for i in 0..n {
        let p = x[i];
        let u = [p * a1[0] + (1.0 - p) * a2[0], p * a1[1] + (1.0 - p) * a2[1]];
        for k in 0..n {
            let q = x[k];
            let v = [q * b1[0] + (1.0 - q) * b2[0], q * b1[1] + (1.0 - q) * b2[1]];
            for j in 0..n {
                let r = x[j];
                let wt = factor * w[i] * w[j] * w[k] * r;
                // sigma >= tau: s = (p, 1 - p), t = r (q, 1 - q)
                let dx = u[0] - r * v[0];
                let dy = u[1] - r * v[1];
                let ker = (dx * dx + dy * dy).powf(half_expo);
                sink.add(&[r - 1.0, p, 1.0 - p, -r * q, -r * (1.0 - q)], wt * ker);
                // tau >= sigma: t = (q, 1 - q), s = r (p, 1 - p)
                let dx = r * u[0] - v[0];
                let dy = r * u[1] - v[1];
                let ker = (dx * dx + dy * dy).powf(half_expo);
                sink.add(&[1.0 - r, r * p, r * (1.0 - p), -q, -(1.0 - q)], wt * ker);
            }
        }
    }
    slots
}

/// Pair of triangles sharing an edge. `shared` lists (vertex in a, vertex
/// in b) for both shared vertices. Local order: P, Q, A, B with PQ the
/// shared edge and A, B the opposite vertices.
pub(crate) fn edge<S: Sink>(ga: &CellGeom, gb: &CellGeom, shared: &[(usize, usize)], s: f64, slot_b: &[usize], sink: &mut S) -> Vec<usize> {
    let (pa, _) = shared[0];
    let (qa, _) = shared[1];
    let ia = 3 - pa - qa;
    let ib = 3 - shared[0].1 - shared[1].1;
    let slots = vec![pa, qa, ia, slot_b[ib]];
    let p0 = ga.verts[pa];
    let rel = |x: [f64; 2]| [x[0] - p0[0], x[1] - p0[1]];
    let e = rel(ga.verts[qa]);
    let a = rel(ga.verts[ia]);
    let b = rel(gb.verts[ib]);
    let q = S::FACTORS as f64;
    let half_expo = -0.5 * (2.0 + 2.0 * s);
    // t1 is integrated exactly; the radial integral of
    // rho^2 rho^{q - 2 - 2s} (1 - rho h) over [0, 1/h] leaves h^{2s - q - 1}.
    let hexp = 2.0 * s - q - 1.0;
    let factor = 4.0 * ga.measure * gb.measure / ((q + 1.0 - 2.0 * s) * (q + 2.0 - 2.0 * s));
    let (x, w) = gauss_legendre(EDGE_POINTS);
    let n = x.len();
    // c = (c1, c2, c3) = (s1 - t1, s2, t2) on |c1| + c2 + c3 = 1.
    let mut eval = |c1: f64, c2: f64, c3: f64, wt: f64| {
        let h = c3.max(c2 + c1) + (-c1).max(0.0);
        let dx = c1 * e[0] + c2 * a[0] - c3 * b[0];
        let dy = c1 * e[1] + c2 * a[1] - c3 * b[1];
        let ker = (dx * dx + dy * dy).powf(half_expo);
        sink.add(&[-c1 - c2 + c3, c1, c2, -c3], factor * wt * ker * h.powf(hexp));
    };
    for (lo, hi) in [(0.0, 0.5), (0.5, 1.0)] {
        for i in 0..n {
            let t = lo + (hi - lo) * x[i];
            for j in 0..n {
                let u = x[j] * (1.0 - t);
                let wt = w[i] * w[j] * (hi - lo) * (1.0 - t);
                // c1 >= 0, split along c3 = t
                eval(1.0 - u - t, u, t, wt);
                // c1 <= 0, split along c2 = t
                eval(-(1.0 - u - t), t, u, wt);
            }
        }
    }
    slots
}
