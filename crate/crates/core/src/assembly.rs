//! Element-loop assembly of the viscous operator, its Jacobian, the
//! divergence and multiplier couplings, and the load vectors.
//!
//! Local element arrays are computed independently per triangle (in parallel
//! when requested) and scattered into the global arrays sequentially in
//! triangle order, so both execution paths give identical results.

use crate::element::{eval_velocity, frob, sym, AffineMap, Tabulation, DOFS, NODES};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre_unit, integrate_adaptive};
use crate::rheology::Rheology;
use crate::spaces::{Spaces, TraceOperator};
use crate::sparse::SparseMatrix;

/// Quadrature degree for the nonlinear viscous terms.
pub const DEFAULT_DEGREE: usize = 6;

/// Below this strain-rate norm the rank-one Jacobian term is dropped.
const RANK_ONE_CUTOFF: f64 = 1e-14;

/// The nonlinear viscous operator `A_eps` on a fixed mesh, with its sparsity
/// pattern and scatter positions precomputed.
#[derive(Debug, Clone)]
pub struct StokesOperator {
    maps: Vec<AffineMap>,
    dofs: Vec<[usize; DOFS]>,
    tab: Tabulation,
    pattern: SparseMatrix,
    positions: Vec<[usize; DOFS * DOFS]>,
    exec: Execution,
}

impl StokesOperator {
    pub fn new(mesh: &Mesh, spaces: &Spaces, exec: Execution) -> Self {
        Self::with_degree(mesh, spaces, DEFAULT_DEGREE, exec)
    }

    pub fn with_degree(mesh: &Mesh, spaces: &Spaces, degree: usize, exec: Execution) -> Self {
        let maps: Vec<AffineMap> = (0..mesh.num_triangles())
            .map(|t| AffineMap::new(mesh.triangle_coords(t)))
            .collect();
        let dofs: Vec<[usize; DOFS]> = (0..mesh.num_triangles()).map(|t| spaces.triangle_dofs(t)).collect();
        let n = spaces.n_velocity();
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for d in &dofs {
            for &i in d {
                rows[i].extend_from_slice(d);
            }
        }
        let pattern = SparseMatrix::from_pattern(n, n, rows);
        let positions = dofs
            .iter()
            .map(|d| {
                let mut pos = [0; DOFS * DOFS];
                for a in 0..DOFS {
                    for b in 0..DOFS {
                        pos[a * DOFS + b] = pattern.position(d[a], d[b]).expect("pattern covers element");
                    }
                }
                pos
            })
            .collect();
        StokesOperator {
            maps,
            dofs,
            tab: Tabulation::with_degree(degree),
            pattern,
            positions,
            exec,
        }
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    pub fn dim(&self) -> usize {
        self.pattern.nrows
    }

    fn local_coeffs(&self, t: usize, u: &[f64]) -> [f64; DOFS] {
        let mut c = [0.0; DOFS];
        for (ci, &d) in c.iter_mut().zip(&self.dofs[t]) {
            *ci = u[d];
        }
        c
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "velocity vector has length {}, expected {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `[A_eps(u)]_i = int alpha (eps + |Du|)^(r-2) Du : Dv_i`.
    pub fn residual(&self, rheology: &Rheology, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let locals = map_indexed(self.exec, self.maps.len(), |t| self.local_residual(t, rheology, u));
        let mut out = vec![0.0; self.dim()];
        for (t, local) in locals.iter().enumerate() {
            for (a, &d) in self.dofs[t].iter().enumerate() {
                out[d] += local[a];
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("viscous residual"));
        }
        Ok(out)
    }

    /// Jacobian of [`Self::residual`] at `u`.
    pub fn jacobian(&self, rheology: &Rheology, u: &[f64]) -> Result<SparseMatrix> {
        self.check_len(u)?;
        let locals = map_indexed(self.exec, self.maps.len(), |t| self.local_jacobian(t, rheology, u));
        let mut mat = self.pattern.clone();
        for (t, local) in locals.iter().enumerate() {
            for (k, &p) in self.positions[t].iter().enumerate() {
                mat.values[p] += local[k];
            }
        }
        if mat.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("viscous Jacobian"));
        }
        Ok(mat)
    }

    /// `int alpha (eps + |Du|)^(r-2) |Du|^2`, i.e. `<A_eps(u), u>`.
    pub fn dissipation(&self, rheology: &Rheology, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let parts = map_indexed(self.exec, self.maps.len(), |t| {
            let c = self.local_coeffs(t, u);
            let map = &self.maps[t];
            let mut acc = 0.0;
            for q in 0..self.tab.rule.len() {
                let dphi = self.tab.physical_grads(map, q);
                let (_, g) = eval_velocity(&c, &self.tab.values[q], &dphi);
                let du = sym(g);
                let s = frob(du);
                acc += self.tab.rule.weights[q] * map.det * rheology.stress_coefficient(s) * s * s;
            }
            acc
        });
        Ok(parts.iter().sum())
    }

    fn local_residual(&self, t: usize, rh: &Rheology, u: &[f64]) -> [f64; DOFS] {
        let c = self.local_coeffs(t, u);
        let map = &self.maps[t];
        let mut out = [0.0; DOFS];
        for q in 0..self.tab.rule.len() {
            let dphi = self.tab.physical_grads(map, q);
            let (_, g) = eval_velocity(&c, &self.tab.values[q], &dphi);
            let du = sym(g);
            let scale = self.tab.rule.weights[q] * map.det * rh.stress_coefficient(frob(du));
            for k in 0..NODES {
                for comp in 0..2 {
                    // Du : Dv for v = phi_k e_comp, using symmetry of Du.
                    let dv = du[comp][0] * dphi[k][0] + du[comp][1] * dphi[k][1];
                    out[2 * k + comp] += scale * dv;
                }
            }
        }
        out
    }

    fn local_jacobian(&self, t: usize, rh: &Rheology, u: &[f64]) -> [f64; DOFS * DOFS] {
        let c = self.local_coeffs(t, u);
        let map = &self.maps[t];
        let mut out = [0.0; DOFS * DOFS];
        for q in 0..self.tab.rule.len() {
            let dphi = self.tab.physical_grads(map, q);
            let (_, g) = eval_velocity(&c, &self.tab.values[q], &dphi);
            let du = sym(g);
            let s = frob(du);
            let w = self.tab.rule.weights[q] * map.det;
            let coef = w * rh.stress_coefficient(s);
            let rank_one = if s < RANK_ONE_CUTOFF || rh.r == 2.0 {
                0.0
            } else {
                w * rh.stress_coefficient_derivative(s) / s
            };
            let mut proj = [0.0; DOFS];
            for k in 0..NODES {
                for comp in 0..2 {
                    proj[2 * k + comp] = du[comp][0] * dphi[k][0] + du[comp][1] * dphi[k][1];
                }
            }
            for k in 0..NODES {
                for l in 0..NODES {
                    let gkl = dphi[k][0] * dphi[l][0] + dphi[k][1] * dphi[l][1];
                    for cc in 0..2 {
                        for dd in 0..2 {
                            // Dv_a : Dv_b = (delta_cd g_k.g_l + g_k[d] g_l[c]) / 2.
                            let delta = if cc == dd { gkl } else { 0.0 };
                            let dvv = 0.5 * (delta + dphi[k][dd] * dphi[l][cc]);
                            let a = 2 * k + cc;
                            let b = 2 * l + dd;
                            out[a * DOFS + b] += coef * dvv + rank_one * proj[a] * proj[b];
                        }
                    }
                }
            }
        }
        out
    }
}

/// `B_ij = int (div v_i) q_j` with `q_j` the indicator of triangle `j`.
pub fn assemble_b(mesh: &Mesh, spaces: &Spaces) -> SparseMatrix {
    let tab = Tabulation::with_degree(2);
    let mut trip = Vec::with_capacity(mesh.num_triangles() * DOFS);
    for t in 0..mesh.num_triangles() {
        let map = AffineMap::new(mesh.triangle_coords(t));
        let dofs = spaces.triangle_dofs(t);
        let mut local = [0.0; DOFS];
        for q in 0..tab.rule.len() {
            let dphi = tab.physical_grads(&map, q);
            let w = tab.rule.weights[q] * map.det;
            for k in 0..NODES {
                local[2 * k] += w * dphi[k][0];
                local[2 * k + 1] += w * dphi[k][1];
            }
        }
        for (a, &d) in dofs.iter().enumerate() {
            trip.push((d, t, local[a]));
        }
    }
    SparseMatrix::from_triplets(spaces.n_velocity(), mesh.num_triangles(), &trip)
}

/// Multiplier coupling `D_ij = int_{e_j} v_i . n ds`.
pub fn assemble_d(trace: &TraceOperator) -> SparseMatrix {
    trace.coupling.clone()
}

/// Load from a known velocity gradient, pressure and bed normal stress:
///
/// `f_i = int alpha (eps + |Du|)^(r-2) Du : Dv_i - int (div v_i) p - int_bed lambda v_i . n`.
///
/// Volume terms use a collapsed Gauss rule of the given degree; the bed term
/// uses adaptive quadrature on every edge.
pub struct FieldLoad<'a> {
    pub velocity_gradient: &'a (dyn Fn([f64; 2]) -> [[f64; 2]; 2] + Sync),
    pub pressure: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
    pub bed_stress: &'a (dyn Fn([f64; 2]) -> f64 + Sync),
}

pub fn assemble_field_load(
    mesh: &Mesh,
    spaces: &Spaces,
    rheology: &Rheology,
    trace: &TraceOperator,
    fields: &FieldLoad<'_>,
    degree: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    let tab = Tabulation::with_degree(degree);
    let locals = map_indexed(exec, mesh.num_triangles(), |t| {
        let map = AffineMap::new(mesh.triangle_coords(t));
        let mut local = [0.0; DOFS];
        for q in 0..tab.rule.len() {
            let [xi, eta] = tab.rule.points[q];
            let x = map.to_physical(xi, eta);
            let dphi = tab.physical_grads(&map, q);
            let du = sym((fields.velocity_gradient)(x));
            let mu = rheology.stress_coefficient(frob(du));
            let p = (fields.pressure)(x);
            let w = tab.rule.weights[q] * map.det;
            for k in 0..NODES {
                for comp in 0..2 {
                    let dv = du[comp][0] * dphi[k][0] + du[comp][1] * dphi[k][1];
                    local[2 * k + comp] += w * (mu * dv - dphi[k][comp] * p);
                }
            }
        }
        local
    });
    let mut f = vec![0.0; spaces.n_velocity()];
    for (t, local) in locals.iter().enumerate() {
        for (a, &d) in spaces.triangle_dofs(t).iter().enumerate() {
            f[d] += local[a];
        }
    }

    let edge_parts = map_indexed(exec, spaces.bed_edges.len(), |i| {
        let e = &spaces.bed_edges[i];
        let pa = spaces.node_coords[e.nodes[0]];
        let pb = mesh.vertices[e.vertices[1]];
        let point = |t: f64| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        let basis = [
            |t: f64| (1.0 - t) * (1.0 - 2.0 * t),
            |t: f64| 4.0 * t * (1.0 - t),
            |t: f64| t * (2.0 * t - 1.0),
        ];
        let mut out = [0.0; 3];
        for (k, phi) in basis.iter().enumerate() {
            let g = |t: f64| (fields.bed_stress)(point(t)) * phi(t);
            out[k] = e.length * integrate_adaptive(&g, 0.0, 1.0, 1e-15);
        }
        out
    });
    for (i, part) in edge_parts.iter().enumerate() {
        let e = &spaces.bed_edges[i];
        let n = trace.normals[i];
        for (k, &node) in e.nodes.iter().enumerate() {
            f[2 * node] -= part[k] * n[0];
            f[2 * node + 1] -= part[k] * n[1];
        }
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("load vector"));
    }
    Ok(f)
}

/// Cavity load `f_i = p_e int_bed v_i . n ds` with the outward normal of the
/// trace operator. It is equivalent to a normal traction `-p_e` on the top
/// surface after shifting the pressure by `p_e`.
pub fn assemble_load_cavity(trace: &TraceOperator, p_e: f64) -> Vec<f64> {
    let ones = vec![p_e; trace.lengths.len()];
    trace.coupling.mul_vec(&ones)
}

/// Gauss–Legendre integral of `g(t)` over an edge parameter `t in [0, 1]`.
pub fn edge_gauss<F: Fn(f64) -> f64>(g: F, points: usize) -> f64 {
    gauss_legendre_unit(points).iter().map(|&(t, w)| w * g(t)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_cavity_mesh, generate_unit_square};
    use crate::spaces::ContactNormal;

    fn setup(n: usize) -> (Mesh, Spaces) {
        let mesh = generate_unit_square(n).unwrap();
        let spaces = Spaces::new(&mesh);
        (mesh, spaces)
    }

    #[test]
    fn zero_and_rigid_residual() {
        let (mesh, spaces) = setup(3);
        let op = StokesOperator::new(&mesh, &spaces, Execution::Sequential);
        let rh = Rheology::from_r(0.5, 1.5, 1e-4).unwrap();
        let zero = op.residual(&rh, &vec![0.0; spaces.n_velocity()]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let rigid = spaces.interpolate(|p| [0.3 * p[1] + 1.0, -0.3 * p[0] - 2.0]);
        let res = op.residual(&rh, &rigid).unwrap();
        assert!(res.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn linear_case_matches_matrix() {
        let (mesh, spaces) = setup(2);
        let op = StokesOperator::new(&mesh, &spaces, Execution::Sequential);
        let rh = Rheology::new(0.5, 1.0, 1e-4).unwrap();
        let u: Vec<f64> = (0..spaces.n_velocity())
            .map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0)
            .collect();
        let a0 = op.jacobian(&rh, &vec![0.0; u.len()]).unwrap();
        let a1 = op.jacobian(&rh, &u).unwrap();
        assert_eq!(a0.values, a1.values);
        let au = a0.mul_vec(&u);
        let res = op.residual(&rh, &u).unwrap();
        for (x, y) in au.iter().zip(&res) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn b_matrix_examples() {
        let (mesh, spaces) = setup(3);
        let b = assemble_b(&mesh, &spaces);
        let c = spaces.interpolate(|_| [1.5, -0.5]);
        assert!(b.mul_vec_t(&c).iter().all(|v| v.abs() < 1e-14));
        let rot = spaces.interpolate(|p| [p[1], -p[0]]);
        assert!(b.mul_vec_t(&rot).iter().all(|v| v.abs() < 1e-14));
        // div (x, 0) = 1 integrates to the triangle area.
        let stretch = spaces.interpolate(|p| [p[0], 0.0]);
        for (t, v) in b.mul_vec_t(&stretch).iter().enumerate() {
            assert!((v - mesh.signed_area(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_triangle_divergence() {
        use crate::mesh::{BoundaryEdge, BoundaryTag};
        let mesh = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge {
                    vertices: [0, 1],
                    tag: BoundaryTag::BedContact,
                },
                BoundaryEdge {
                    vertices: [1, 2],
                    tag: BoundaryTag::Traction,
                },
                BoundaryEdge {
                    vertices: [2, 0],
                    tag: BoundaryTag::Traction,
                },
            ],
            vec![],
        )
        .unwrap();
        let spaces = Spaces::new(&mesh);
        let b = assemble_b(&mesh, &spaces);
        let v = spaces.interpolate(|p| [p[0], 0.0]);
        assert!((b.mul_vec_t(&v)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cavity_load_pairing() {
        let mesh = generate_cavity_mesh(8, 2, 0.0).unwrap();
        let spaces = Spaces::new(&mesh);
        let trace = TraceOperator::new(&spaces, ContactNormal::Outward);
        let f = assemble_load_cavity(&trace, 1.2);
        let down = spaces.interpolate(|_| [0.0, -1.0]);
        let pairing: f64 = f.iter().zip(&down).map(|(a, b)| a * b).sum();
        assert!((pairing - 1.2).abs() < 1e-14);
        let up = spaces.interpolate(|_| [0.0, 1.0]);
        let pairing: f64 = f.iter().zip(&up).map(|(a, b)| a * b).sum();
        assert!((pairing + 1.2).abs() < 1e-14);
        assert!(assemble_load_cavity(&trace, 0.0).iter().all(|&v| v == 0.0));
        // Support on bed dofs only.
        let bed: Vec<usize> = spaces.bed_edges.iter().flat_map(|e| e.nodes).collect();
        for (k, pair) in f.chunks(2).enumerate() {
            if !bed.contains(&k) {
                assert_eq!(pair, [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let (mesh, spaces) = setup(6);
        let rh = Rheology::from_r(0.5, 1.25, 1e-4).unwrap();
        let u: Vec<f64> = (0..spaces.n_velocity()).map(|i| ((i * 31 % 17) as f64).sin()).collect();
        let seq = StokesOperator::new(&mesh, &spaces, Execution::Sequential);
        let par = StokesOperator::new(&mesh, &spaces, Execution::Parallel);
        assert_eq!(seq.residual(&rh, &u).unwrap(), par.residual(&rh, &u).unwrap());
        assert_eq!(seq.jacobian(&rh, &u).unwrap(), par.jacobian(&rh, &u).unwrap());
    }

    #[test]
    fn length_mismatch_rejected() {
        let (mesh, spaces) = setup(1);
        let op = StokesOperator::new(&mesh, &spaces, Execution::Sequential);
        let rh = Rheology::new(0.5, 1.0, 0.0).unwrap();
        assert!(op.residual(&rh, &[0.0; 3]).is_err());
    }
}
