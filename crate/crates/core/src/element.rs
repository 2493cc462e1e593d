//! Quadratic Lagrange triangle.
//!
//! Local node order: vertices 0, 1, 2, then the midpoints of edges
//! (0,1), (1,2), (2,0).

use crate::quadrature::TriangleRule;

pub const NODES: usize = 6;
/// Two velocity components per node.
pub const DOFS: usize = 2 * NODES;

/// Basis values at reference point `(xi, eta)`.
pub fn shape(xi: f64, eta: f64) -> [f64; NODES] {
    let l = [1.0 - xi - eta, xi, eta];
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

/// Reference gradients `[d/dxi, d/deta]` at `(xi, eta)`.
pub fn shape_grad(xi: f64, eta: f64) -> [[f64; 2]; NODES] {
    let l = [1.0 - xi - eta, xi, eta];
    let dl = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    let vertex = |i: usize| {
        let c = 4.0 * l[i] - 1.0;
        [c * dl[i][0], c * dl[i][1]]
    };
    let edge = |i: usize, j: usize| {
        [
            4.0 * (dl[i][0] * l[j] + l[i] * dl[j][0]),
            4.0 * (dl[i][1] * l[j] + l[i] * dl[j][1]),
        ]
    };
    [vertex(0), vertex(1), vertex(2), edge(0, 1), edge(1, 2), edge(2, 0)]
}

/// Affine map of a physical triangle.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    pub origin: [f64; 2],
    /// Columns are the edge vectors `p1 - p0` and `p2 - p0`.
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// `J^{-T}`, mapping reference gradients to physical ones.
    pub inv_t: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn new(p: [[f64; 2]; 3]) -> Self {
        let jac = [
            [p[1][0] - p[0][0], p[2][0] - p[0][0]],
            [p[1][1] - p[0][1], p[2][1] - p[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv_t = [[jac[1][1] / det, -jac[1][0] / det], [-jac[0][1] / det, jac[0][0] / det]];
        AffineMap {
            origin: p[0],
            jac,
            det,
            inv_t,
        }
    }

    pub fn to_physical(&self, xi: f64, eta: f64) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi + self.jac[0][1] * eta,
            self.origin[1] + self.jac[1][0] * xi + self.jac[1][1] * eta,
        ]
    }

    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }
}

/// Basis values and reference gradients tabulated at the points of a rule.
#[derive(Debug, Clone)]
pub struct Tabulation {
    pub rule: TriangleRule,
    pub values: Vec<[f64; NODES]>,
    pub grads: Vec<[[f64; 2]; NODES]>,
}

impl Tabulation {
    pub fn new(rule: TriangleRule) -> Self {
        let values = rule.points.iter().map(|p| shape(p[0], p[1])).collect();
        let grads = rule.points.iter().map(|p| shape_grad(p[0], p[1])).collect();
        Tabulation { rule, values, grads }
    }

    pub fn with_degree(degree: usize) -> Self {
        Self::new(TriangleRule::with_degree(degree))
    }

    /// Physical gradients of the six basis functions at point `q`.
    pub fn physical_grads(&self, map: &AffineMap, q: usize) -> [[f64; 2]; NODES] {
        let mut out = [[0.0; 2]; NODES];
        for (o, g) in out.iter_mut().zip(&self.grads[q]) {
            *o = map.grad(*g);
        }
        out
    }
}

/// Local velocity values and gradient `G[i][j] = d u_i / d x_j` from local
/// coefficients laid out as `[u0x, u0y, u1x, ...]`.
pub fn eval_velocity(coeffs: &[f64; DOFS], phi: &[f64; NODES], dphi: &[[f64; 2]; NODES]) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut u = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for k in 0..NODES {
        for c in 0..2 {
            let a = coeffs[2 * k + c];
            u[c] += a * phi[k];
            g[c][0] += a * dphi[k][0];
            g[c][1] += a * dphi[k][1];
        }
    }
    (u, g)
}

pub fn sym(g: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let off = 0.5 * (g[0][1] + g[1][0]);
    [[g[0][0], off], [off, g[1][1]]]
}

pub fn frob(a: [[f64; 2]; 2]) -> f64 {
    (a[0][0] * a[0][0] + a[0][1] * a[0][1] + a[1][0] * a[1][0] + a[1][1] * a[1][1]).sqrt()
}

pub fn ddot(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}
