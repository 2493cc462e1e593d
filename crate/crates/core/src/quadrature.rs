//! Gauss rules on intervals and triangles, and adaptive 1D integration.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(n);
    x.iter().zip(&w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
}

/// Quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Debug, Clone)]
pub struct TriangleRule {
    /// Reference coordinates `(xi, eta)`.
    pub points: Vec<[f64; 2]>,
    /// Weights summing to the reference area 1/2.
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor Gauss rule exact for polynomials of total
    /// degree `degree`. No point lies on the triangle boundary.
    pub fn with_degree(degree: usize) -> Self {
        let n = (degree + 2).div_ceil(2).max(1);
        let g = gauss_legendre_unit(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for &(s, ws) in &g {
            for &(t, wt) in &g {
                points.push([s, t * (1.0 - s)]);
                weights.push(ws * wt * (1.0 - s));
            }
        }
        TriangleRule {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Adaptive Gauss–Legendre integration of `f` over `[a, b]` to absolute
/// tolerance `tol` (7-point panels, bisected until two levels agree).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let rule = gauss_legendre_unit(7);
    let panel = |lo: f64, hi: f64| -> f64 {
        let len = hi - lo;
        rule.iter().map(|&(x, w)| w * f(lo + len * x)).sum::<f64>() * len
    };
    fn recurse<P: Fn(f64, f64) -> f64>(panel: &P, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let left = panel(a, m);
        let right = panel(m, b);
        let both = left + right;
        if depth == 0 || (both - whole).abs() <= tol {
            return both;
        }
        recurse(panel, a, m, left, 0.5 * tol, depth - 1) + recurse(panel, m, b, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&panel, a, b, panel(a, b), tol, 50)
}
