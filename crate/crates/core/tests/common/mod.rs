//! Brute-force 1D reference assembly by nested tanh-sinh quadrature.
//!
//! Every cell pair is integrated directly in physical coordinates. Near the
//! diagonal and at shared vertices the distance `|x - y|` is formed from
//! endpoint offsets, so it never suffers cancellation.

#![allow(dead_code)]

use fracext::kernel::{normalization_constant, FractionalOrder};
use fracext::mesh::{Mesh, Region};

const T_MAX: f64 = 6.0;

/// Fixed-step tanh-sinh rule for `int_0^len f(d_left, d_right)` with
/// `d_left + d_right = len` and vector-valued `f`. Step `h` in the
/// transformed variable; algebraic endpoint singularities converge at the
/// same double-exponential rate as smooth integrands.
pub fn tanh_sinh<const K: usize>(len: f64, h: f64, f: &dyn Fn(f64, f64) -> [f64; K]) -> [f64; K] {
    let mut acc = [0.0; K];
    if len <= 0.0 {
        return acc;
    }
    let hp = std::f64::consts::FRAC_PI_2;
    let steps = (T_MAX / h) as i64;
    for k in -steps..=steps {
        let t = k as f64 * h;
        let u = hp * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // offset from the nearer endpoint, computed without cancellation
        let near = len * e / (1.0 + e);
        // the dropped mass is below 1e-39 even for |x - y|^{-0.8}, and
        // |x - y|^{-1.4} stays finite
        if near < 1e-200 {
            continue;
        }
        let far = len - near;
        let w = h * hp * t.cosh() * 4.0 * e / (1.0 + e).powi(2) * 0.5 * len;
        let v = if u < 0.0 { f(near, far) } else { f(far, near) };
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    acc
}

/// Cell endpoints as `(left node, right node, left x, right x)`.
fn ends(mesh: &Mesh, c: usize) -> (usize, usize, f64, f64) {
    let v = mesh.cell(c);
    let (p, q) = (mesh.point(v[0])[0], mesh.point(v[1])[0]);
    if p < q {
        (v[0], v[1], p, q)
    } else {
        (v[1], v[0], q, p)
    }
}

/// Nodes of the pair `(a, b)`: those of `a`, then those of `b` not in `a`.
pub fn pair_nodes(mesh: &Mesh, a: usize, b: usize) -> Vec<usize> {
    let mut nodes: Vec<usize> = mesh.cell(a).to_vec();
    nodes.extend(mesh.cell(b).iter().filter(|v| !mesh.cell(a).contains(v)));
    nodes
}

/// `int_{T_a} int_{T_b} (phi_p(x) - phi_p(y)) (phi_q(x) - phi_q(y)) |x - y|^{-1-2s}`
/// for the pair nodes `p, q`, flattened row-major with stride 4.
///
/// Points are carried as offsets from both cell ends, and every hat
/// difference is formed from the small offsets, so no digits are lost as
/// `x` approaches `y`.
pub fn pair_block(mesh: &Mesh, a: usize, b: usize, s: f64, h: f64) -> [f64; 16] {
    let nodes = pair_nodes(mesh, a, b);
    let (al, ar, a0, a1) = ends(mesh, a);
    let (bl, br, b0, b1) = ends(mesh, b);
    let (la, lb) = (a1 - a0, b1 - b0);
    let e = 1.0 + 2.0 * s;
    // `diff(n)` gives phi_n(x) - phi_n(y); the kernel is split between the
    // two factors so tiny distances stay finite
    let outer = |diff: &dyn Fn(usize) -> f64, dist: f64| {
        let k = dist.powf(-0.5 * e);
        let mut d = [0.0; 4];
        for (slot, &n) in d.iter_mut().zip(&nodes) {
            *slot = diff(n) * k;
        }
        let mut out = [0.0; 16];
        for p in 0..4 {
            for q in 0..4 {
                out[4 * p + q] = d[p] * d[q];
            }
        }
        out
    };
    // hats of a point given by its offsets (l, r) from the ends of a cell
    let hat = |left: usize, right: usize, len: f64, n: usize, l: f64, r: f64| {
        if n == left {
            r / len
        } else if n == right {
            l / len
        } else {
            0.0
        }
    };
    if a == b {
        // y - x = sign * d; the hats change by -+ (y - x) / len
        let same = |sign: f64, d: f64| {
            outer(
                &|n| {
                    if n == al {
                        sign * d / la
                    } else {
                        -sign * d / la
                    }
                },
                d,
            )
        };
        tanh_sinh(la, h, &|xl, xr| {
            let mut left = tanh_sinh(xl, h, &|d, _| same(-1.0, d));
            let right = tanh_sinh(xr, h, &|d, _| same(1.0, d));
            for (u, v) in left.iter_mut().zip(right) {
                *u += v;
            }
            left
        })
    } else if ar == bl {
        tanh_sinh(la, h, &|xl, xr| {
            tanh_sinh(lb, h, &|yl, yr| {
                let diff = |n: usize| {
                    if n == ar {
                        yl / lb - xr / la
                    } else {
                        hat(al, ar, la, n, xl, xr) - hat(bl, br, lb, n, yl, yr)
                    }
                };
                outer(&diff, xr + yl)
            })
        })
    } else if br == al {
        tanh_sinh(la, h, &|xl, xr| {
            tanh_sinh(lb, h, &|yl, yr| {
                let diff = |n: usize| {
                    if n == al {
                        yr / lb - xl / la
                    } else {
                        hat(al, ar, la, n, xl, xr) - hat(bl, br, lb, n, yl, yr)
                    }
                };
                outer(&diff, xl + yr)
            })
        })
    } else {
        tanh_sinh(la, h, &|xl, xr| {
            tanh_sinh(lb, h, &|yl, yr| {
                let diff = |n: usize| hat(al, ar, la, n, xl, xr) - hat(bl, br, lb, n, yl, yr);
                outer(&diff, ((a0 + xl) - (b0 + yl)).abs())
            })
        })
    }
}

/// Dense stiffness matrix without the far-field term: `C/2` times the sum
/// over all ordered cell pairs that are not both exterior.
pub fn dense_stiffness(mesh: &Mesh, s: f64, h: f64) -> Vec<Vec<f64>> {
    let order = FractionalOrder::new(s, 1).unwrap();
    let half_c = 0.5 * normalization_constant(order);
    let n = mesh.num_nodes();
    let mut out = vec![vec![0.0; n]; n];
    for a in 0..mesh.num_cells() {
        for b in 0..mesh.num_cells() {
            if mesh.region(a) != Region::Interior && mesh.region(b) != Region::Interior {
                continue;
            }
            let nodes = pair_nodes(mesh, a, b);
            let block = pair_block(mesh, a, b, s, h);
            for (p, &i) in nodes.iter().enumerate() {
                for (q, &j) in nodes.iter().enumerate() {
                    out[i][j] += half_c * block[4 * p + q];
                }
            }
        }
    }
    out
}

/// `C int_Omega phi_i phi_j rho` with `rho(x) = int_{R minus [l, r]} |x - y|^{-1-2s} dy`.
pub fn dense_tail(mesh: &Mesh, s: f64, h: f64) -> Vec<Vec<f64>> {
    let order = FractionalOrder::new(s, 1).unwrap();
    let c = normalization_constant(order);
    let xs: Vec<f64> = (0..mesh.num_nodes()).map(|i| mesh.point(i)[0]).collect();
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let rho = |x: f64| ((x - lo).powf(-2.0 * s) + (hi - x).powf(-2.0 * s)) / (2.0 * s);
    let n = mesh.num_nodes();
    let mut out = vec![vec![0.0; n]; n];
    for cell in 0..mesh.num_cells() {
        if mesh.region(cell) != Region::Interior {
            continue;
        }
        let (l, r, x0, x1) = ends(mesh, cell);
        for &i in &[l, r] {
            for &j in &[l, r] {
                out[i][j] += c * tanh_sinh(x1 - x0, h, &|dl, dr| {
                    let f = |n: usize| if n == l { dr / (x1 - x0) } else { dl / (x1 - x0) };
                    [f(i) * f(j) * rho(x0 + dl)]
                })[0];
            }
        }
    }
    out
}

/// Nonuniform 1D mesh of `[-1.5, 1.5]` with interior `[-0.5, 0.5]`.
pub fn small_interval() -> Mesh {
    let coords = vec![-1.5, -1.1, -0.7, -0.5, -0.2, 0.05, 0.3, 0.5, 0.8, 1.2, 1.5];
    let cells: Vec<usize> = (0..10).flat_map(|c| [c, c + 1]).collect();
    let regions = (0..10)
        .map(|c| if (3..7).contains(&c) { Region::Interior } else { Region::Exterior })
        .collect();
    Mesh::new(1, coords, cells, regions).unwrap()
}

/// 1D mesh of `[-1.5, 1.5]` with interior `[-0.5, 0.5]` and the given extra
/// breakpoints, each a fraction of its region.
pub fn interval_with_cuts(left: &[f64], interior: &[f64], right: &[f64]) -> Mesh {
    let mut coords = vec![-1.5];
    let mut regions = Vec::new();
    for (cuts, lo, hi, region) in [
        (left, -1.5, -0.5, Region::Exterior),
        (interior, -0.5, 0.5, Region::Interior),
        (right, 0.5, 1.5, Region::Exterior),
    ] {
        let mut pts: Vec<f64> = cuts.iter().map(|t| lo + t * (hi - lo)).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        pts.retain(|&x| x - lo > 1e-3 && hi - x > 1e-3);
        pts.push(hi);
        for x in pts {
            coords.push(x);
            regions.push(region);
        }
    }
    let cells: Vec<usize> = (0..regions.len()).flat_map(|c| [c, c + 1]).collect();
    Mesh::new(1, coords, cells, regions).unwrap()
}
