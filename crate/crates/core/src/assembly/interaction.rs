use super::FemFunction;
use crate::error::{Error, Result};
use crate::kernel::{normalization_constant, tail_density, FractionalOrder, PairIntegrator, TailPolicy};
use crate::mesh::{Mesh, Region};
use crate::quadrature::QuadratureRule;

const MAX_DEPTH: usize = 14;

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
    ((p[0] - a[0] - t * ab[0]).powi(2) + (p[1] - a[1] - t * ab[1]).powi(2)).sqrt()
}

/// Distance from `x` to a cell (zero inside).
fn cell_distance(mesh: &Mesh, c: usize, x: [f64; 2]) -> f64 {
    let p = mesh.cell_points(c);
    if mesh.dim() == 1 {
        let (lo, hi) = (p[0][0].min(p[1][0]), p[0][0].max(p[1][0]));
        return (lo - x[0]).max(x[0] - hi).max(0.0);
    }
    let lam = mesh.barycentric(c, x);
    if lam.iter().all(|&l| l >= 0.0) {
        return 0.0;
    }
    (0..3).map(|k| point_segment_distance(x, p[k], p[(k + 1) % 3])).fold(f64::INFINITY, f64::min)
}

/// `int_T (u(x) - u(y)) |x - y|^{-(N + 2s)} dy` for one cell `T`, by
/// subdivision until the cell pieces are well separated from `x`.
fn cell_integral(
    verts: &[[f64; 2]],
    uv: &[f64],
    ux: f64,
    x: [f64; 2],
    half_expo: f64,
    rule: &QuadratureRule,
    depth: usize,
) -> std::result::Result<f64, ()> {
    let nv = verts.len();
    let mut c = [0.0; 2];
    for v in verts {
        c[0] += v[0] / nv as f64;
        c[1] += v[1] / nv as f64;
    }
    let mut diam: f64 = 0.0;
    let mut radius: f64 = 0.0;
    for i in 0..nv {
        radius = radius.max(((verts[i][0] - c[0]).powi(2) + (verts[i][1] - c[1]).powi(2)).sqrt());
        for j in i + 1..nv {
            diam = diam.max(((verts[i][0] - verts[j][0]).powi(2) + (verts[i][1] - verts[j][1]).powi(2)).sqrt());
        }
    }
    let gap = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt() - radius;
    if gap >= diam {
        let meas = if nv == 2 {
            (verts[1][0] - verts[0][0]).abs()
        } else {
            0.5 * ((verts[1][0] - verts[0][0]) * (verts[2][1] - verts[0][1])
                - (verts[2][0] - verts[0][0]) * (verts[1][1] - verts[0][1]))
                .abs()
        };
        let mut acc = 0.0;
        for (lam, w) in rule.points.iter().zip(&rule.weights) {
            let mut y = [0.0; 2];
            let mut uy = 0.0;
            for k in 0..nv {
                y[0] += lam[k] * verts[k][0];
                y[1] += lam[k] * verts[k][1];
                uy += lam[k] * uv[k];
            }
            let r2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
            acc += w * (ux - uy) * r2.powf(half_expo);
        }
        return Ok(acc * meas);
    }
    if depth >= MAX_DEPTH {
        return Err(());
    }
    let mid = |i: usize, j: usize| [0.5 * (verts[i][0] + verts[j][0]), 0.5 * (verts[i][1] + verts[j][1])];
    let umid = |i: usize, j: usize| 0.5 * (uv[i] + uv[j]);
    let mut total = 0.0;
    if nv == 2 {
        let m = mid(0, 1);
        let um = umid(0, 1);
        total += cell_integral(&[verts[0], m], &[uv[0], um], ux, x, half_expo, rule, depth + 1)?;
        total += cell_integral(&[m, verts[1]], &[um, uv[1]], ux, x, half_expo, rule, depth + 1)?;
    } else {
        let (m01, m12, m02) = (mid(0, 1), mid(1, 2), mid(0, 2));
        let (u01, u12, u02) = (umid(0, 1), umid(1, 2), umid(0, 2));
        let children = [
            ([verts[0], m01, m02], [uv[0], u01, u02]),
            ([m01, verts[1], m12], [u01, uv[1], u12]),
            ([m02, m12, verts[2]], [u02, u12, uv[2]]),
            ([m01, m12, m02], [u01, u12, u02]),
        ];
        for (v, u) in children {
            total += cell_integral(&v, &u, ux, x, half_expo, rule, depth + 1)?;
        }
    }
    Ok(total)
}

/// The interaction operator `N_s u(x) = C int_Omega (u(x) - u(y)) |x - y|^{-(N + 2s)} dy`
/// at exterior points at least one interior cell diameter away from Omega.
pub fn eval_interaction(mesh: &Mesh, u: &FemFunction, order: FractionalOrder, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if u.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("function does not match the mesh".into()));
    }
    let interior: Vec<usize> = (0..mesh.num_cells()).filter(|&c| mesh.region(c) == Region::Interior).collect();
    let h = interior.iter().map(|&c| mesh.cell_diameter(c)).fold(0.0, f64::max);
    let rule = QuadratureRule::simplex(mesh.dim(), 8);
    let half_expo = -0.5 * order.exponent();
    let c_ns = normalization_constant(order);
    let mut out = Vec::with_capacity(points.len());
    for &x in points {
        let d = interior.iter().map(|&c| cell_distance(mesh, c, x)).fold(f64::INFINITY, f64::min);
        if d < h {
            return Err(Error::InvalidArgument(format!(
                "point {x:?} is within {h} of the interior region (distance {d})"
            )));
        }
        let ux = mesh
            .evaluate(u.values(), x)
            .ok_or_else(|| Error::InvalidArgument(format!("point {x:?} lies outside the mesh")))?;
        let mut total = 0.0;
        for &c in &interior {
            let verts: Vec<[f64; 2]> = mesh.cell(c).iter().map(|&v| mesh.point(v)).collect();
            let uv: Vec<f64> = mesh.cell(c).iter().map(|&v| u.values()[v]).collect();
            total += cell_integral(&verts, &uv, ux, x, half_expo, &rule, 0)
                .map_err(|_| Error::QuadratureNonConvergence { cell_a: c, cell_b: c })?;
        }
        out.push(c_ns * total);
    }
    Ok(out)
}

/// `int_{R^N \ Omega} N_s u dx` for a discrete `u` that vanishes beyond the
/// truncated domain. The part over the truncated exterior uses the singular
/// pair rules; with [`TailPolicy::Analytic`] the part beyond contributes
/// `-C int_Omega u rho`.
pub fn interaction_integral(mesh: &Mesh, u: &FemFunction, order: FractionalOrder, tail: TailPolicy) -> Result<f64> {
    if u.len() != mesh.num_nodes() {
        return Err(Error::InvalidArgument("function does not match the mesh".into()));
    }
    let integ = PairIntegrator::new(mesh, order)?;
    let c_ns = normalization_constant(order);
    let interior: Vec<usize> = (0..mesh.num_cells()).filter(|&c| mesh.region(c) == Region::Interior).collect();
    let mut total = 0.0;
    for b in 0..mesh.num_cells() {
        if mesh.region(b) == Region::Interior {
            continue;
        }
        for &a in &interior {
            let (nodes, len, m) = integ.moment(b, a)?;
            total += (0..len).map(|p| u.values()[nodes[p]] * m[p]).sum::<f64>();
        }
    }
    if tail == TailPolicy::Analytic {
        let rule = QuadratureRule::simplex(mesh.dim(), 4);
        for &c in &interior {
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
            for (k, lam) in rule.points.iter().enumerate() {
                let uy: f64 = mesh.cell(c).iter().zip(lam).map(|(&v, l)| l * u.values()[v]).sum();
                total -= rule.weights[k] * meas * uy * rho[k];
            }
        }
    }
    Ok(c_ns * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate, GeometrySpec};

    #[test]
    fn constants_have_zero_interaction() {
        let mesh = generate(&GeometrySpec::benchmark_disk(), 0.25).unwrap();
        let order = FractionalOrder::new(0.6, 2).unwrap();
        let u = FemFunction::interpolate(&mesh, |_| 3.0);
        let v = eval_interaction(&mesh, &u, order, &[[1.0, 0.0], [0.0, -1.2]]).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12));
        assert!(interaction_integral(&mesh, &u, order, TailPolicy::None).unwrap().abs() < 1e-12);
    }

    #[test]
    fn interval_indicator_matches_closed_form() {
        let mesh = generate(&GeometrySpec::benchmark_interval(), 0.05).unwrap();
        let order = FractionalOrder::new(0.5, 1).unwrap();
        let u = FemFunction::interpolate(&mesh, |x| if x[0].abs() <= 0.5 + 1e-12 { 1.0 } else { 0.0 });
        let v = eval_interaction(&mesh, &u, order, &[[1.0, 0.0]]).unwrap()[0];
        let exact = -4.0 / (3.0 * std::f64::consts::PI);
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn points_near_omega_are_rejected() {
        let mesh = generate(&GeometrySpec::benchmark_interval(), 0.1).unwrap();
        let order = FractionalOrder::new(0.5, 1).unwrap();
        let u = FemFunction::zeros(&mesh);
        assert!(eval_interaction(&mesh, &u, order, &[[0.55, 0.0]]).is_err());
        assert!(eval_interaction(&mesh, &u, order, &[[0.0, 0.0]]).is_err());
    }
}
