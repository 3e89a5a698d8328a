//! Quadrature rules on the unit interval and the reference triangle, plus a
//! double-exponential integrator for endpoint-singular 1D integrals.

use std::sync::OnceLock;

/// A quadrature rule on a reference simplex. Points are barycentric
/// coordinates; weights are normalized so that they sum to one, i.e. the
/// integral over a simplex `T` is approximated by `|T| * sum(w_k f(x_k))`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Gauss rule on the reference interval exact for the given degree.
    pub fn interval(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (x, w) = gauss_legendre(n);
        QuadratureRule {
            points: x.iter().map(|&t| vec![1.0 - t, t]).collect(),
            weights: w.to_vec(),
            exactness_degree: 2 * n - 1,
        }
    }

    /// Rule on the reference triangle exact for the given degree. Degree 4
    /// uses the classical six-point symmetric rule; other degrees use a
    /// collapsed Gauss product.
    pub fn triangle(degree: usize) -> Self {
        if degree <= 4 {
            return dunavant_degree4();
        }
        let n = degree.div_ceil(2) + 1;
        collapsed_triangle(n)
    }

    /// Rule for a simplex of the given dimension.
    pub fn simplex(dim: usize, degree: usize) -> Self {
        match dim {
            1 => Self::interval(degree),
            _ => Self::triangle(degree),
        }
    }
}

fn dunavant_degree4() -> QuadratureRule {
    let groups = [
        (0.445_948_490_915_965, 0.223_381_589_678_011),
        (0.091_576_213_509_771, 0.109_951_743_655_322),
    ];
    let mut points = Vec::with_capacity(6);
    let mut weights = Vec::with_capacity(6);
    for (a, w) in groups {
        let b = 1.0 - 2.0 * a;
        for p in [[b, a, a], [a, b, a], [a, a, b]] {
            points.push(p.to_vec());
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    QuadratureRule { points, weights, exactness_degree: 4 }
}

/// Collapsed product rule with `n` Gauss points per direction; exact for
/// polynomials of degree `2n - 2`.
pub fn collapsed_triangle(n: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let xi = x[i];
            let eta = x[j] * (1.0 - xi);
            points.push(vec![1.0 - xi - eta, xi, eta]);
            weights.push(2.0 * w[i] * w[j] * (1.0 - xi));
        }
    }
    QuadratureRule { points, weights, exactness_degree: 2 * n - 2 }
}

const MAX_CACHED: usize = 64;

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    assert!((1..=MAX_CACHED).contains(&n), "Gauss-Legendre order {n} out of range");
    let cache = CACHE.get_or_init(|| (1..=MAX_CACHED).map(compute_gauss_legendre).collect());
    &cache[n - 1]
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Newton on P_n starting from the Chebyshev-like guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[i] = 0.5 * (1.0 - z);
        nodes[n - 1 - i] = 0.5 * (1.0 + z);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Double-exponential (tanh-sinh) integration of `f` over `[a, b]`.
///
/// The integrand receives the abscissa together with its distances to the
/// two endpoints, which stay accurate where `x` itself has lost digits.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, tol: f64) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    let half = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let eval = |t: f64| -> f64 {
        let u = half_pi * t.sinh();
        let cosh_u = u.cosh();
        // distance to the nearer endpoint: half * (1 - tanh|u|) = half * 2 / (1 + e^{2|u|})
        let e = (2.0 * u.abs()).exp();
        let near = 2.0 * half / (1.0 + e);
        let far = 2.0 * half - near;
        let (da, db) = if u < 0.0 { (near, far) } else { (far, near) };
        if near <= 0.0 {
            return 0.0;
        }
        let x = if u < 0.0 { a + da } else { b - db };
        let weight = half * half_pi * t.cosh() / (cosh_u * cosh_u);
        weight * f(x, da, db)
    };
    let t_max = 4.5;
    let mut h = 0.5;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= t_max {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut estimate = sum * h;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        let mut add = 0.0;
        while (k as f64) * h <= t_max {
            let t = k as f64 * h;
            add += eval(t) + eval(-t);
            k += 2;
        }
        sum += add;
        let next = sum * h;
        let converged = (next - estimate).abs() <= tol * next.abs().max(1e-300);
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}
