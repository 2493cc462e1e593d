//! Triangulations with tagged boundary edges and optional periodic pairing.

mod io;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use io::{read_mesh, write_mesh};

const PERIODIC_TOL: f64 = 1e-12;

/// Boundary condition class attached to a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Contact boundary carrying the multiplier.
    BedContact,
    /// Natural (traction) boundary.
    Traction,
    /// Boundary on which the normal velocity is prescribed.
    NormalClamp,
    /// Homogeneous Dirichlet boundary.
    NoSlip,
}

impl BoundaryTag {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::BedContact => "BedContact",
            BoundaryTag::Traction => "Traction",
            BoundaryTag::NormalClamp => "NormalClamp",
            BoundaryTag::NoSlip => "NoSlip",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "BedContact" => Ok(BoundaryTag::BedContact),
            "Traction" => Ok(BoundaryTag::Traction),
            "NormalClamp" => Ok(BoundaryTag::NormalClamp),
            "NoSlip" => Ok(BoundaryTag::NoSlip),
            other => Err(Error::InvalidInput(format!("unknown boundary tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// A 2D triangulation. Triangles are counterclockwise.
///
/// `periodic_pairs` holds `(master, slave)` vertex pairs; the master sits on
/// the left boundary and the slave on the right one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub periodic_pairs: Vec<(usize, usize)>,
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        periodic_pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
            periodic_pairs,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Signed area (positive for counterclockwise triangles).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Maximum triangle diameter.
    pub fn max_diameter(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| {
                let p = self.triangle_coords(t);
                dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
            })
            .fold(0.0, f64::max)
    }

    /// Unique undirected edges in first-seen order, plus the three edge ids
    /// of each triangle (local edges `(0,1)`, `(1,2)`, `(2,0)`).
    pub fn edges(&self) -> (Vec<[usize; 2]>, Vec<[usize; 3]>) {
        let mut lookup: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut tri_edges = Vec::with_capacity(self.triangles.len());
        for tri in &self.triangles {
            let mut ids = [0; 3];
            for (k, id) in ids.iter_mut().enumerate() {
                let key = sorted_pair(tri[k], tri[(k + 1) % 3]);
                *id = *lookup.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
            }
            tri_edges.push(ids);
        }
        (edges, tri_edges)
    }

    /// Boundary edges with the given tag.
    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    /// Bed edges ordered by the x coordinate of their midpoints, each
    /// oriented left to right.
    pub fn bed_chain(&self) -> Vec<[usize; 2]> {
        let mut chain: Vec<[usize; 2]> = self
            .edges_with_tag(BoundaryTag::BedContact)
            .map(|e| {
                let [a, b] = e.vertices;
                if self.vertices[a][0] <= self.vertices[b][0] {
                    [a, b]
                } else {
                    [b, a]
                }
            })
            .collect();
        chain.sort_by(|p, q| {
            let mp = self.vertices[p[0]][0] + self.vertices[p[1]][0];
            let mq = self.vertices[q[0]][0] + self.vertices[q[1]][0];
            mp.total_cmp(&mq)
        });
        chain
    }

    /// Bed vertices in chain order (`edges + 1` entries).
    pub fn bed_vertices(&self) -> Vec<usize> {
        let chain = self.bed_chain();
        let mut out: Vec<usize> = chain.iter().map(|e| e[0]).collect();
        if let Some(last) = chain.last() {
            out.push(last[1]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = self.signed_area(t);
            if !(area > 0.0) {
                return Err(Error::NonPositiveArea { triangle: t, area });
            }
        }

        let mut owners: HashMap<[usize; 2], usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *owners.entry(sorted_pair(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut seen = HashMap::new();
        for (i, e) in self.boundary_edges.iter().enumerate() {
            let key = sorted_pair(e.vertices[0], e.vertices[1]);
            match owners.get(&key) {
                Some(1) => {}
                Some(n) => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {i} {key:?} is shared by {n} triangles"
                    )))
                }
                None => {
                    return Err(Error::InvalidMesh(format!(
                        "boundary edge {i} {key:?} is not a triangle edge"
                    )))
                }
            }
            if seen.insert(key, i).is_some() {
                return Err(Error::InvalidMesh(format!("boundary edge {key:?} is tagged twice")));
            }
        }

        for &(m, s) in &self.periodic_pairs {
            if m >= nv || s >= nv {
                return Err(Error::InvalidMesh("periodic pair references a missing vertex".into()));
            }
            if (self.vertices[m][1] - self.vertices[s][1]).abs() > PERIODIC_TOL {
                return Err(Error::InvalidMesh(format!(
                    "periodic pair ({m}, {s}) does not match in y"
                )));
            }
        }

        self.check_bed_chain()
    }

    fn check_bed_chain(&self) -> Result<()> {
        let chain = self.bed_chain();
        let slave_to_master: HashMap<usize, usize> = self.periodic_pairs.iter().map(|&(m, s)| (s, m)).collect();
        let canon = |v: usize| *slave_to_master.get(&v).unwrap_or(&v);
        for w in chain.windows(2) {
            if canon(w[0][1]) != canon(w[1][0]) {
                return Err(Error::InvalidMesh("bed edges do not form a connected chain".into()));
            }
        }
        Ok(())
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Which diagonal splits each cell of a structured square mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// Bottom-left to top-right.
    #[default]
    Right,
    /// Top-left to bottom-right.
    Left,
}

/// Structured triangulation of `[0,1]^2` with `n` cells per side, each cell
/// split by its bottom-left to top-right diagonal.
///
/// `{y=0}` is tagged [`BoundaryTag::BedContact`], `{x=0}`
/// [`BoundaryTag::NormalClamp`], the rest [`BoundaryTag::Traction`].
pub fn generate_unit_square(n: usize) -> Result<Mesh> {
    generate_unit_square_with(n, Diagonal::Right)
}

/// Same as [`generate_unit_square`] with a chosen cell diagonal.
pub fn generate_unit_square_with(n: usize, diagonal: Diagonal) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidInput("unit square needs n >= 1".into()));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            match diagonal {
                Diagonal::Right => {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                }
                Diagonal::Left => {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
    }
    let mut boundary_edges = Vec::with_capacity(4 * n);
    for i in 0..n {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(i, 0), idx(i + 1, 0)],
            tag: BoundaryTag::BedContact,
        });
    }
    for j in 0..n {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(n, j), idx(n, j + 1)],
            tag: BoundaryTag::Traction,
        });
    }
    for i in (0..n).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(i + 1, n), idx(i, n)],
            tag: BoundaryTag::Traction,
        });
    }
    for j in (0..n).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(0, j + 1), idx(0, j)],
            tag: BoundaryTag::NormalClamp,
        });
    }
    Mesh::new(vertices, triangles, boundary_edges, Vec::new())
}

/// Sinusoidal bed `b(x) = (amplitude / 2) cos(2 pi x)`; crest at `x = 0`.
pub fn bed_profile(amplitude: f64, x: f64) -> f64 {
    0.5 * amplitude * (2.0 * PI * x).cos()
}

/// Periodic cell of unit length between the bed `b(x)` and `y = 1`.
///
/// Vertices are arranged in `nx + 1` columns of `ny + 1` vertices, linearly
/// stretched between the bed and the top. The left and right columns are
/// periodic pairs.
pub fn generate_cavity_mesh(nx: usize, ny: usize, amplitude: f64) -> Result<Mesh> {
    if nx < 2 || ny < 1 {
        return Err(Error::InvalidInput("cavity mesh needs nx >= 2 and ny >= 1".into()));
    }
    if !(0.0..1.0).contains(&amplitude) {
        return Err(Error::InvalidInput(format!(
            "bed amplitude must lie in [0, 1), got {amplitude}"
        )));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = i as f64 / nx as f64;
            let b = bed_profile(amplitude, x);
            let s = j as f64 / ny as f64;
            vertices.push([x, b + (1.0 - b) * s]);
        }
    }
    // Exact periodic copies of the left column.
    for j in 0..=ny {
        vertices[idx(nx, j)][1] = vertices[idx(0, j)][1];
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * nx);
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(i, 0), idx(i + 1, 0)],
            tag: BoundaryTag::BedContact,
        });
    }
    for i in (0..nx).rev() {
        boundary_edges.push(BoundaryEdge {
            vertices: [idx(i + 1, ny), idx(i, ny)],
            tag: BoundaryTag::Traction,
        });
    }
    let periodic_pairs = (0..=ny).map(|j| (idx(0, j), idx(nx, j))).collect();
    Mesh::new(vertices, triangles, boundary_edges, periodic_pairs)
}

/// Splits every triangle into four through its edge midpoints.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let (edges, tri_edges) = mesh.edges();
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::with_capacity(edges.len());
    for (e, &[a, b]) in edges.iter().enumerate() {
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        midpoint.insert([a, b], nv + e);
    }
    let mid = |a: usize, b: usize| midpoint[&sorted_pair(a, b)];

    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for (tri, te) in mesh.triangles.iter().zip(&tri_edges) {
        let [a, b, c] = *tri;
        let (mab, mbc, mca) = (nv + te[0], nv + te[1], nv + te[2]);
        triangles.push([a, mab, mca]);
        triangles.push([mab, b, mbc]);
        triangles.push([mca, mbc, c]);
        triangles.push([mab, mbc, mca]);
    }

    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let [a, b] = e.vertices;
        let m = mid(a, b);
        boundary_edges.push(BoundaryEdge {
            vertices: [a, m],
            tag: e.tag,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [m, b],
            tag: e.tag,
        });
    }

    let mut periodic_pairs = mesh.periodic_pairs.clone();
    let master_of: HashMap<usize, usize> = mesh.periodic_pairs.iter().map(|&(m, s)| (s, m)).collect();
    for &[a, b] in &edges {
        if let (Some(&ma), Some(&mb)) = (master_of.get(&a), master_of.get(&b)) {
            if let Some(&mm) = midpoint.get(&sorted_pair(ma, mb)) {
                periodic_pairs.push((mm, mid(a, b)));
            }
        }
    }

    Mesh::new(vertices, triangles, boundary_edges, periodic_pairs)
}

/// Moves the bed vertices to `roof` (one height per bed vertex in chain
/// order) and restretches every column linearly between the new bed and its
/// fixed top vertex.
pub fn deform_to_profile(mesh: &Mesh, roof: &[f64]) -> Result<Mesh> {
    let bed = mesh.bed_vertices();
    if roof.len() != bed.len() {
        return Err(Error::InvalidInput(format!(
            "expected {} roof heights, got {}",
            bed.len(),
            roof.len()
        )));
    }
    if roof.iter().any(|h| !h.is_finite()) {
        return Err(Error::NonFinite("roof profile"));
    }

    // Column membership by x coordinate.
    let mut column_of_x: Vec<(f64, usize)> = bed.iter().enumerate().map(|(k, &v)| (mesh.vertices[v][0], k)).collect();
    column_of_x.sort_by(|a, b| a.0.total_cmp(&b.0));
    let find_column = |x: f64| -> Option<usize> {
        let pos = column_of_x.partition_point(|c| c.0 < x - 1e-12);
        column_of_x.get(pos).filter(|c| (c.0 - x).abs() <= 1e-12).map(|c| c.1)
    };

    let mut column = vec![0usize; mesh.num_vertices()];
    let mut top = vec![f64::NEG_INFINITY; bed.len()];
    for (v, p) in mesh.vertices.iter().enumerate() {
        let k =
            find_column(p[0]).ok_or_else(|| Error::InvalidMesh(format!("vertex {v} does not lie on a bed column")))?;
        column[v] = k;
        top[k] = top[k].max(p[1]);
    }

    let mut vertices = mesh.vertices.clone();
    for (v, p) in vertices.iter_mut().enumerate() {
        let k = column[v];
        let old_bed = mesh.vertices[bed[k]][1];
        let height = top[k] - old_bed;
        let s = if height > 0.0 { (p[1] - old_bed) / height } else { 0.0 };
        p[1] = if v == bed[k] {
            roof[k]
        } else if p[1] == top[k] {
            top[k]
        } else {
            roof[k] + (top[k] - roof[k]) * s
        };
    }

    let deformed = Mesh {
        vertices,
        triangles: mesh.triangles.clone(),
        boundary_edges: mesh.boundary_edges.clone(),
        periodic_pairs: mesh.periodic_pairs.clone(),
    };
    for t in 0..deformed.num_triangles() {
        let area = deformed.signed_area(t);
        if !(area > 0.0) {
            return Err(Error::NonPositiveArea { triangle: t, area });
        }
    }
    for &(m, s) in &deformed.periodic_pairs {
        if (deformed.vertices[m][1] - deformed.vertices[s][1]).abs() > PERIODIC_TOL {
            return Err(Error::InvalidInput(
                "roof heights at periodic bed vertices differ".into(),
            ));
        }
    }
    Ok(deformed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let m = generate_unit_square(1).unwrap();
        assert_eq!(m.num_triangles(), 2);
        assert_eq!(m.boundary_edges.len(), 4);
        assert!((m.max_diameter() - 2f64.sqrt()).abs() < 1e-15);

        let m2 = generate_unit_square(2).unwrap();
        assert_eq!(m2.num_triangles(), 8);
        assert!((m2.max_diameter() - 0.5 * 2f64.sqrt()).abs() < 1e-15);

        let m4 = generate_unit_square(4).unwrap();
        let bed = m4.bed_chain();
        assert_eq!(bed.len(), 4);
        assert_eq!(m4.vertices[bed[0][0]], [0.0, 0.0]);
        assert_eq!(m4.vertices[bed[3][1]], [1.0, 0.0]);
        assert!((m4.max_diameter() - 3.54e-1).abs() < 5e-4);
        assert!((m4.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_square_rejects_zero() {
        assert!(generate_unit_square(0).is_err());
    }

    #[test]
    fn cavity_mesh_geometry() {
        let flat = generate_cavity_mesh(8, 4, 0.0).unwrap();
        for v in flat.bed_vertices() {
            assert_eq!(flat.vertices[v][1], 0.0);
        }

        let m = generate_cavity_mesh(32, 32, 0.08).unwrap();
        assert_eq!(m.edges_with_tag(BoundaryTag::BedContact).count(), 32);
        let ys: Vec<f64> = m.bed_vertices().iter().map(|&v| m.vertices[v][1]).collect();
        let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((lo + 0.04).abs() < 1e-15);
        assert!((hi - 0.04).abs() < 1e-15);

        let m4 = generate_cavity_mesh(4, 3, 0.08).unwrap();
        assert_eq!(m4.periodic_pairs.len(), 4);
        for &(a, b) in &m4.periodic_pairs {
            assert_eq!(m4.vertices[a][0], 0.0);
            assert_eq!(m4.vertices[b][0], 1.0);
        }
    }

    #[test]
    fn cavity_mesh_rejects_large_amplitude() {
        assert!(generate_cavity_mesh(8, 4, 1.0).is_err());
        assert!(generate_cavity_mesh(1, 4, 0.1).is_err());
    }

    #[test]
    fn refinement_quarters_triangles() {
        let m = generate_unit_square(1).unwrap();
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.num_triangles(), 8);
        assert_eq!(r.edges_with_tag(BoundaryTag::BedContact).count(), 2);
        let h0 = generate_unit_square(2).unwrap().max_diameter();
        let h1 = refine_uniform(&generate_unit_square(2).unwrap())
            .unwrap()
            .max_diameter();
        assert!((h0 - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((h1 - 0.3535533905932738).abs() < 1e-12);
        for t in 0..m.num_triangles() {
            let parent = m.signed_area(t);
            for c in 0..4 {
                assert!((r.signed_area(4 * t + c) - parent / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn refinement_keeps_periodic_pairs() {
        let m = generate_cavity_mesh(4, 2, 0.08).unwrap();
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.periodic_pairs.len(), 2 * 2 + 1);
        r.validate().unwrap();
    }

    #[test]
    fn identity_and_uniform_deformation() {
        let m = generate_cavity_mesh(8, 4, 0.08).unwrap();
        let bed = m.bed_vertices();
        let b: Vec<f64> = bed.iter().map(|&v| m.vertices[v][1]).collect();
        let same = deform_to_profile(&m, &b).unwrap();
        for (p, q) in m.vertices.iter().zip(&same.vertices) {
            assert!((p[1] - q[1]).abs() < 1e-14);
        }
        let raised: Vec<f64> = b.iter().map(|y| y + 0.01).collect();
        let d = deform_to_profile(&m, &raised).unwrap();
        for (k, &v) in bed.iter().enumerate() {
            assert!((d.vertices[v][1] - b[k] - 0.01).abs() < 1e-15);
        }
        for (p, q) in m.vertices.iter().zip(&d.vertices) {
            if p[1] == 1.0 {
                assert_eq!(q[1], 1.0);
            }
        }
    }

    #[test]
    fn deformation_rejects_inverted_cells() {
        let m = generate_cavity_mesh(8, 4, 0.0).unwrap();
        let mut roof = vec![0.0; 9];
        roof[3] = 1.5;
        assert!(matches!(
            deform_to_profile(&m, &roof),
            Err(Error::NonPositiveArea { .. })
        ));
    }

    #[test]
    fn tags_round_trip_through_names() {
        for tag in [
            BoundaryTag::BedContact,
            BoundaryTag::Traction,
            BoundaryTag::NormalClamp,
            BoundaryTag::NoSlip,
        ] {
            assert_eq!(tag.name().parse::<BoundaryTag>().unwrap(), tag);
        }
        assert!("Bed".parse::<BoundaryTag>().is_err());
    }
}
