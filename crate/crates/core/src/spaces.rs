//! Degree-of-freedom maps for the P2 velocity / P0 pressure / P0 bed
//! multiplier triple, and the discrete normal trace on the bed.

use std::collections::HashMap;

use crate::element::NODES;
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::SparseMatrix;

/// A bed edge carrying one multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BedEdge {
    /// Mesh vertices, left to right.
    pub vertices: [usize; 2],
    /// Velocity nodes at the left end, midpoint and right end.
    pub nodes: [usize; 3],
    pub triangle: usize,
    pub length: f64,
    /// Outward unit normal of the domain.
    pub outward_normal: [f64; 2],
}

/// Numbering of velocity nodes (P2 vertices and edge midpoints), pressure
/// cells and bed multipliers. Periodic slave entities share the number of
/// their master. Velocity dof of node `k`, component `c` is `2k + c`.
#[derive(Debug, Clone)]
pub struct Spaces {
    pub num_nodes: usize,
    /// Coordinates of each velocity node (master copy for periodic nodes).
    pub node_coords: Vec<[f64; 2]>,
    /// Six node numbers per triangle, in local element order.
    pub triangle_nodes: Vec<[usize; NODES]>,
    pub bed_edges: Vec<BedEdge>,
    /// Nodes on [`BoundaryTag::NormalClamp`] edges.
    pub clamp_nodes: Vec<usize>,
    /// Nodes on [`BoundaryTag::NoSlip`] edges.
    pub noslip_nodes: Vec<usize>,
    /// Nodes on [`BoundaryTag::Traction`] edges.
    pub traction_nodes: Vec<usize>,
    /// Velocity dofs identified with a master, as `(master, slave)` in raw
    /// (pre-identification) node numbering.
    pub periodic_node_pairs: Vec<(usize, usize)>,
}

impl Spaces {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.num_vertices();
        let (edges, tri_edges) = mesh.edges();
        let edge_id: HashMap<[usize; 2], usize> = edges.iter().enumerate().map(|(e, &k)| (k, e)).collect();
        let key = |a: usize, b: usize| if a < b { [a, b] } else { [b, a] };

        // Raw nodes: vertices then edges. Resolve periodic masters.
        let raw_count = nv + edges.len();
        let mut master: Vec<usize> = (0..raw_count).collect();
        let vmaster: HashMap<usize, usize> = mesh.periodic_pairs.iter().map(|&(m, s)| (s, m)).collect();
        let mut periodic_node_pairs = Vec::new();
        for (&s, &m) in &vmaster {
            master[s] = m;
        }
        for (e, &[a, b]) in edges.iter().enumerate() {
            if let (Some(&ma), Some(&mb)) = (vmaster.get(&a), vmaster.get(&b)) {
                if let Some(&me) = edge_id.get(&key(ma, mb)) {
                    master[nv + e] = nv + me;
                }
            }
        }
        for (raw, &m) in master.iter().enumerate() {
            if m != raw {
                periodic_node_pairs.push((m, raw));
            }
        }
        periodic_node_pairs.sort_unstable();

        let mut number = vec![usize::MAX; raw_count];
        let mut node_coords = Vec::new();
        let raw_coord = |raw: usize| -> [f64; 2] {
            if raw < nv {
                mesh.vertices[raw]
            } else {
                let [a, b] = edges[raw - nv];
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
            }
        };
        for raw in 0..raw_count {
            if master[raw] == raw {
                number[raw] = node_coords.len();
                node_coords.push(raw_coord(raw));
            }
        }
        for raw in 0..raw_count {
            number[raw] = number[master[raw]];
        }

        let triangle_nodes = mesh
            .triangles
            .iter()
            .zip(&tri_edges)
            .map(|(t, te)| {
                [
                    number[t[0]],
                    number[t[1]],
                    number[t[2]],
                    number[nv + te[0]],
                    number[nv + te[1]],
                    number[nv + te[2]],
                ]
            })
            .collect();

        // Owning triangle of every boundary edge.
        let mut owner: HashMap<[usize; 2], usize> = HashMap::new();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                owner.insert(key(tri[k], tri[(k + 1) % 3]), t);
            }
        }

        let bed_edges = mesh
            .bed_chain()
            .into_iter()
            .map(|[a, b]| {
                let t = owner[&key(a, b)];
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                let length = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
                let tangent = [(pb[0] - pa[0]) / length, (pb[1] - pa[1]) / length];
                let third = mesh.triangles[t].iter().copied().find(|&v| v != a && v != b).unwrap();
                let pc = mesh.vertices[third];
                let mut normal = [tangent[1], -tangent[0]];
                if normal[0] * (pc[0] - pa[0]) + normal[1] * (pc[1] - pa[1]) > 0.0 {
                    normal = [-normal[0], -normal[1]];
                }
                let mid = number[nv + edge_id[&key(a, b)]];
                BedEdge {
                    vertices: [a, b],
                    nodes: [number[a], mid, number[b]],
                    triangle: t,
                    length,
                    outward_normal: normal,
                }
            })
            .collect();

        let nodes_with = |tag: BoundaryTag| -> Vec<usize> {
            let mut out: Vec<usize> = mesh
                .edges_with_tag(tag)
                .flat_map(|e| {
                    let [a, b] = e.vertices;
                    [number[a], number[b], number[nv + edge_id[&key(a, b)]]]
                })
                .collect();
            out.sort_unstable();
            out.dedup();
            out
        };

        Spaces {
            num_nodes: node_coords.len(),
            node_coords,
            triangle_nodes,
            bed_edges,
            clamp_nodes: nodes_with(BoundaryTag::NormalClamp),
            noslip_nodes: nodes_with(BoundaryTag::NoSlip),
            traction_nodes: nodes_with(BoundaryTag::Traction),
            periodic_node_pairs,
        }
    }

    /// Velocity dimension `N_v`.
    pub fn n_velocity(&self) -> usize {
        2 * self.num_nodes
    }

    /// Pressure dimension `N_q` (one per triangle).
    pub fn n_pressure(&self) -> usize {
        self.triangle_nodes.len()
    }

    /// Multiplier dimension `N_mu` (one per bed edge).
    pub fn n_multiplier(&self) -> usize {
        self.bed_edges.len()
    }

    /// Twelve velocity dofs of triangle `t` in local order.
    pub fn triangle_dofs(&self, t: usize) -> [usize; 2 * NODES] {
        let n = &self.triangle_nodes[t];
        let mut out = [0; 2 * NODES];
        for k in 0..NODES {
            out[2 * k] = 2 * n[k];
            out[2 * k + 1] = 2 * n[k] + 1;
        }
        out
    }

    /// Coefficients of the field `f` sampled at every velocity node.
    pub fn interpolate<F: Fn([f64; 2]) -> [f64; 2]>(&self, f: F) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity()];
        for (k, &p) in self.node_coords.iter().enumerate() {
            let v = f(p);
            out[2 * k] = v[0];
            out[2 * k + 1] = v[1];
        }
        out
    }
}

/// Orientation of the contact normal used by the trace and the multiplier
/// coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContactNormal {
    /// Outward unit normal of the domain.
    #[default]
    Outward,
    /// Reversed (inward) normal.
    Inward,
}

/// Discrete normal trace `Gamma` (edge averages of `v . n`) and the coupling
/// `D` with `D_ij = int_{e_j} v_i . n ds`, so that `Gamma = diag(1/|e|) D^T`.
#[derive(Debug, Clone)]
pub struct TraceOperator {
    pub orientation: ContactNormal,
    /// `N_v x N_mu`.
    pub coupling: SparseMatrix,
    /// `N_mu x N_v`.
    pub gamma: SparseMatrix,
    pub lengths: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
}

impl TraceOperator {
    /// Edge integrals of the quadratic trace by Simpson's rule (exact).
    pub fn new(spaces: &Spaces, orientation: ContactNormal) -> Self {
        let sign = match orientation {
            ContactNormal::Outward => 1.0,
            ContactNormal::Inward => -1.0,
        };
        let n_mu = spaces.n_multiplier();
        let mut d_trip = Vec::with_capacity(n_mu * 6);
        let mut g_trip = Vec::with_capacity(n_mu * 6);
        let mut lengths = Vec::with_capacity(n_mu);
        let mut normals = Vec::with_capacity(n_mu);
        for (i, e) in spaces.bed_edges.iter().enumerate() {
            let n = [sign * e.outward_normal[0], sign * e.outward_normal[1]];
            let weights = [1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0];
            for (&node, w) in e.nodes.iter().zip(weights) {
                for c in 0..2 {
                    d_trip.push((2 * node + c, i, w * e.length * n[c]));
                    g_trip.push((i, 2 * node + c, w * n[c]));
                }
            }
            lengths.push(e.length);
            normals.push(n);
        }
        let nv = spaces.n_velocity();
        TraceOperator {
            orientation,
            coupling: SparseMatrix::from_triplets(nv, n_mu, &d_trip),
            gamma: SparseMatrix::from_triplets(n_mu, nv, &g_trip),
            lengths,
            normals,
        }
    }

    /// Per-edge average normal velocity.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.gamma.mul_vec(u)
    }
}
