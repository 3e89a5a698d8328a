//! Far field beyond the truncated domain.
//!
//! For `x` inside the mesh, `rho(x) = int_{R^N \ mesh} |x - y|^{-(N + 2s)} dy`.
//! In 1D this is `((x - l)^{-2s} + (r - x)^{-2s}) / (2s)`. In 2D, polar
//! coordinates around `x` give `rho(x) = (1 / 2s) int R(theta)^{-2s} dtheta`
//! where `R(theta)` is the distance to the outer boundary; each straight
//! boundary edge at distance `d` contributes `int (cos(phi) / d)^{2s} dphi`.
//! The 2D formula requires the meshed domain to be star-shaped with respect
//! to `x`, which holds for the convex outer disks used here.

use super::FractionalOrder;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Region};
use crate::quadrature::{gauss_legendre, QuadratureRule};

/// Treatment of the interaction with the complement of the truncated domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailPolicy {
    /// Drop it.
    None,
    /// Add `2 int_Omega u v rho`.
    #[default]
    Analytic,
}

const EDGE_POINTS: usize = 8;

/// Exactness degree of the cell rule applied to `phi_i phi_j rho`.
pub const TAIL_DEGREE: usize = 8;

/// The far-field density `rho` at the points `xs`.
pub fn tail_density(mesh: &Mesh, order: FractionalOrder, xs: &[[f64; 2]]) -> Vec<f64> {
    let s = order.s();
    if mesh.dim() == 1 {
        let (lo, hi) = mesh.coords().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        return xs.iter().map(|x| ((x[0] - lo).powf(-2.0 * s) + (hi - x[0]).powf(-2.0 * s)) / (2.0 * s)).collect();
    }
    let edges: Vec<([f64; 2], [f64; 2])> =
        mesh.boundary_facets().iter().map(|f| (mesh.point(f[0]), mesh.point(f[1]))).collect();
    let (gx, gw) = gauss_legendre(EDGE_POINTS);
    xs.iter()
        .map(|&x| {
            let mut total = 0.0;
            for &(a, b) in &edges {
                let ra = [a[0] - x[0], a[1] - x[1]];
                let rb = [b[0] - x[0], b[1] - x[1]];
                let ex = [b[0] - a[0], b[1] - a[1]];
                let len = ex[0].hypot(ex[1]);
                // distance from x to the edge line
                let d = (ra[0] * ex[1] - ra[1] * ex[0]).abs() / len;
                // angles measured from the foot of the perpendicular
                let ta = (ra[0] * ex[0] + ra[1] * ex[1]) / len;
                let tb = (rb[0] * ex[0] + rb[1] * ex[1]) / len;
                let (pa, pb) = ((ta / d).atan(), (tb / d).atan());
                let span = pb - pa;
                let mut acc = 0.0;
                for k in 0..gx.len() {
                    let phi = pa + span * gx[k];
                    acc += gw[k] * (phi.cos() / d).powf(2.0 * s);
                }
                total += acc * span.abs();
            }
            total / (2.0 * s)
        })
        .collect()
}

/// `2 int_Omega phi_node^2 rho` for the hat function of `node`.
pub fn tail_integral(mesh: &Mesh, node: usize, order: FractionalOrder, policy: TailPolicy) -> Result<f64> {
    if node >= mesh.num_nodes() {
        return Err(Error::InvalidArgument(format!("node {node} out of range")));
    }
    if policy == TailPolicy::None {
        return Ok(0.0);
    }
    if mesh.boundary_nodes()[node] {
        return Err(Error::InvalidArgument(format!("node {node} lies on the outer boundary")));
    }
    let rule = QuadratureRule::simplex(mesh.dim(), TAIL_DEGREE);
    let mut total = 0.0;
    for c in 0..mesh.num_cells() {
        if mesh.region(c) != Region::Interior {
            continue;
        }
        let Some(k) = mesh.cell(c).iter().position(|&v| v == node) else { continue };
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
        let cell_sum: f64 = rule.points.iter().zip(&rule.weights).zip(&rho).map(|((lam, w), r)| w * lam[k] * lam[k] * r).sum();
        total += 2.0 * mesh.cell_measure(c) * cell_sum;
    }
    Ok(total)
}
