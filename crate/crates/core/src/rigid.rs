//! Rigid-mode diagnostics for the semicoercive problem: the load
//! compatibility check and the metric projection onto the cone of
//! admissible rigid motions.
//!
//! Both experiments admit a single rigid ray, a vertical translation, so only
//! that cone is implemented.

use crate::element::{eval_velocity, AffineMap, Tabulation, DOFS};
use crate::mesh::Mesh;
use crate::spaces::{Spaces, TraceOperator};

/// The ray `{(0, theta) : sign * theta >= 0}` of vertical translations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalRay {
    /// `-1` for downward motion (`theta <= 0`), `+1` for upward motion.
    pub sign: f64,
}

impl VerticalRay {
    pub const DOWN: VerticalRay = VerticalRay { sign: -1.0 };
    pub const UP: VerticalRay = VerticalRay { sign: 1.0 };

    fn clamp(self, theta: f64) -> f64 {
        if self.sign * theta >= 0.0 {
            theta
        } else {
            0.0
        }
    }
}

/// Generators of the admissible rigid cone, as velocity coefficient vectors.
#[derive(Debug, Clone)]
pub struct RigidCone {
    pub generators: Vec<Vec<f64>>,
    /// `W^{1,r}` norm of each generator.
    pub norms: Vec<f64>,
}

impl RigidCone {
    /// Unit vertical translation along `ray`; its `W^{1,r}` norm is
    /// `|Omega|^(1/r)`.
    pub fn vertical(mesh: &Mesh, spaces: &Spaces, ray: VerticalRay, r: f64) -> Self {
        let g = spaces.interpolate(|_| [0.0, ray.sign]);
        RigidCone {
            generators: vec![g],
            norms: vec![mesh.total_area().powf(1.0 / r)],
        }
    }

    /// Largest value of `Gamma g` over edges and generators; non-positive for
    /// a cone contained in the admissible set.
    pub fn max_trace(&self, trace: &TraceOperator) -> f64 {
        self.generators
            .iter()
            .flat_map(|g| trace.apply(g))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `f^T g` per generator.
    pub pairings: Vec<f64>,
    /// `min_g (-f^T g / ||g||)`; positive iff the check passes.
    pub margin: f64,
    pub passed: bool,
}

/// The load must pair strictly negatively with every nonzero admissible
/// rigid motion.
pub fn compatibility_check(load: &[f64], cone: &RigidCone) -> CompatibilityReport {
    let pairings: Vec<f64> = cone
        .generators
        .iter()
        .map(|g| g.iter().zip(load).map(|(a, b)| a * b).sum())
        .collect();
    let margin = pairings
        .iter()
        .zip(&cone.norms)
        .map(|(p, n)| -p / n)
        .fold(f64::INFINITY, f64::min);
    let passed = pairings.iter().all(|&p| p < 0.0);
    CompatibilityReport {
        pairings,
        margin,
        passed,
    }
}

/// Velocity values `v(x_q)` with weights `w_q` at quadrature points; the
/// gradient is irrelevant for a translation projection.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    pub weights: Vec<f64>,
    pub values: Vec<[f64; 2]>,
}

impl Samples {
    /// Samples a discrete velocity with a rule of the given degree.
    pub fn from_coefficients(mesh: &Mesh, spaces: &Spaces, u: &[f64], degree: usize) -> Self {
        let tab = Tabulation::with_degree(degree);
        let mut out = Samples::default();
        for t in 0..mesh.num_triangles() {
            let map = AffineMap::new(mesh.triangle_coords(t));
            let dofs = spaces.triangle_dofs(t);
            let mut c = [0.0; DOFS];
            for (ci, &d) in c.iter_mut().zip(&dofs) {
                *ci = u[d];
            }
            for q in 0..tab.rule.len() {
                let dphi = tab.physical_grads(&map, q);
                let (v, _) = eval_velocity(&c, &tab.values[q], &dphi);
                out.weights.push(tab.rule.weights[q] * map.det);
                out.values.push(v);
            }
        }
        out
    }

    /// `int |v - (0, theta)|^r`.
    pub fn shifted_lr(&self, theta: f64, r: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v[0].hypot(v[1] - theta).powf(r))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Vertical translation speed of the projected rigid part.
    pub theta: f64,
    /// Objective `int |v - (0, theta)|^r` at the minimizer.
    pub objective: f64,
}

/// Nearest point of `ray` to the sampled field in the `W^{1,r}` norm.
///
/// Translations have zero gradient, so only the `L^r` part of the norm
/// depends on `theta`. The objective is convex and differentiable in `theta`;
/// its derivative is bisected over the range of `v_y` and the root is then
/// clamped onto the ray.
pub fn project_vertical(samples: &Samples, r: f64, ray: VerticalRay) -> Projection {
    let (lo, hi) = samples
        .values
        .iter()
        .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v[1]), hi.max(v[1])));
    // Derivative up to the positive factor r.
    let slope = |t: f64| -> f64 {
        samples
            .weights
            .iter()
            .zip(&samples.values)
            .map(|(w, v)| {
                let dy = v[1] - t;
                let m = v[0].hypot(dy);
                if m == 0.0 {
                    0.0
                } else {
                    -w * m.powf(r - 2.0) * dy
                }
            })
            .sum()
    };
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let theta = ray.clamp(0.5 * (a + b));
    Projection {
        theta,
        objective: samples.shifted_lr(theta, r),
    }
}

/// Projection of a discrete velocity onto the vertical ray.
pub fn rigid_projection(mesh: &Mesh, spaces: &Spaces, u: &[f64], r: f64, ray: VerticalRay) -> Projection {
    project_vertical(&Samples::from_coefficients(mesh, spaces, u, 6), r, ray)
}
