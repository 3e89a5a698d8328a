//! The two-bump exact solution on `Omega = B(1/2)`:
//! `u = [(1 - |x|^2)_+^s + (1/4 - |x|^2)_+^s] / lambda` solves
//! `(-Delta)^s u = 2` in `Omega`, where `lambda = (-Delta)^s (1 - |x|^2)_+^s`
//! inside the unit ball.

use crate::assembly::FemFunction;
use crate::error::{Error, Result};
use crate::kernel::{normalization_constant, FractionalOrder};
use crate::mesh::{Mesh, Region};
use crate::quadrature::{tanh_sinh, QuadratureRule};
use crate::special::gamma;

/// Right-hand side of the benchmark.
pub const SOURCE: f64 = 2.0;

/// `(-Delta)^s (1 - |x|^2)_+^s` in the unit ball. Closed form in 2D; in 1D
/// the hypersingular integral at the origin is evaluated numerically:
/// `2 C [int_0^1 (1 - (1 - y^2)^s) y^(-1-2s) dy + 1/(2s)]`.
pub fn bump_constant(order: FractionalOrder) -> f64 {
    let s = order.s();
    match order.dim() {
        2 => 4f64.powf(s) * gamma(1.0 + s).powi(2),
        _ => {
            let inner = tanh_sinh(
                |y, _, db| {
                    let t = if y < 0.5 { -((-y * y).ln_1p() * s).exp_m1() } else { 1.0 - (db * (2.0 - db)).powf(s) };
                    t * y.powf(-1.0 - 2.0 * s)
                },
                0.0,
                1.0,
                1e-14,
            );
            2.0 * normalization_constant(order) * (inner + 0.5 / s)
        }
    }
}

/// Precomputed exact solution for one order.
#[derive(Debug, Clone, Copy)]
pub struct ExactSolution {
    s: f64,
    scale: f64,
}

impl ExactSolution {
    pub fn new(order: FractionalOrder) -> Self {
        ExactSolution { s: order.s(), scale: 1.0 / bump_constant(order) }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let p = |t: f64| if t > 0.0 { t.powf(self.s) } else { 0.0 };
        self.scale * (p(1.0 - r2) + p(0.25 - r2))
    }

    pub fn interpolate(&self, mesh: &Mesh) -> FemFunction {
        FemFunction::interpolate(mesh, |x| self.eval(x))
    }
}

fn l2_over(mesh: &Mesh, u: &[f64], g: &dyn Fn([f64; 2]) -> f64, interior_only: bool) -> Result<f64> {
    if u.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("nodal vector does not match the mesh".into()));
    }
    let rule = QuadratureRule::simplex(mesh.dim(), 4);
    let mut sum = 0.0;
    for c in 0..mesh.num_cells() {
        if interior_only && mesh.region(c) != Region::Interior {
            continue;
        }
        let pts = mesh.cell_points(c);
        let v = mesh.cell(c);
        let meas = mesh.cell_measure(c);
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 2];
            let mut uh = 0.0;
            for (k, l) in lam.iter().enumerate() {
                x[0] += l * pts[k][0];
                x[1] += l * pts[k][1];
                uh += l * u[v[k]];
            }
            let d = uh - g(x);
            sum += w * meas * d * d;
        }
    }
    Ok(sum.sqrt())
}

/// `||u_h - g||_{L^2(Omega)}` by degree-4 quadrature.
pub fn l2_error(mesh: &Mesh, u: &FemFunction, g: &dyn Fn([f64; 2]) -> f64) -> Result<f64> {
    l2_over(mesh, u.values(), g, true)
}

/// `||u - v||_{L^2(Omega)}` for two discrete functions.
pub fn l2_distance(mesh: &Mesh, u: &FemFunction, v: &FemFunction) -> Result<f64> {
    let d: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
    l2_over(mesh, &d, &|_| 0.0, true)
}

/// `||u - v||` over the whole mesh.
pub fn l2_distance_mesh(mesh: &Mesh, u: &FemFunction, v: &FemFunction) -> Result<f64> {
    let d: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
    l2_over(mesh, &d, &|_| 0.0, false)
}
