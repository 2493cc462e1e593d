//! Plain-text mesh format.
//!
//! ```text
//! rstokes-mesh 1
//! vertices <N>
//! <x> <y>                 (N lines, shortest round-trip decimal)
//! triangles <M>
//! <a> <b> <c>             (M lines, counterclockwise)
//! boundary_edges <K>
//! <a> <b> <Tag>           (K lines)
//! periodic_pairs <P>
//! <master> <slave>        (P lines)
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, Mesh};
use crate::error::{Error, Result};

const MAGIC: &str = "rstokes-mesh 1";

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "vertices {}", mesh.vertices.len());
    for p in &mesh.vertices {
        let _ = writeln!(out, "{:?} {:?}", p[0], p[1]);
    }
    let _ = writeln!(out, "triangles {}", mesh.triangles.len());
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "boundary_edges {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let _ = writeln!(out, "{} {} {}", e.vertices[0], e.vertices[1], e.tag);
    }
    let _ = writeln!(out, "periodic_pairs {}", mesh.periodic_pairs.len());
    for (m, s) in &mesh.periodic_pairs {
        let _ = writeln!(out, "{m} {s}");
    }
    out
}

pub fn read_mesh(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "empty file".into(),
    })?;
    if header != MAGIC {
        return Err(Error::Parse {
            line,
            message: format!("expected `{MAGIC}`"),
        });
    }

    let mut section = |name: &str| -> Result<Vec<(usize, Vec<String>)>> {
        let (line, head) = lines.next().ok_or(Error::Parse {
            line: 0,
            message: format!("missing `{name}` section"),
        })?;
        let mut parts = head.split_whitespace();
        if parts.next() != Some(name) {
            return Err(Error::Parse {
                line,
                message: format!("expected `{name} <count>`"),
            });
        }
        let count: usize = parts.next().and_then(|c| c.parse().ok()).ok_or(Error::Parse {
            line,
            message: "bad count".into(),
        })?;
        (0..count)
            .map(|_| {
                lines
                    .next()
                    .map(|(l, s)| (l, s.split_whitespace().map(str::to_owned).collect()))
                    .ok_or(Error::Parse {
                        line,
                        message: format!("truncated `{name}` section"),
                    })
            })
            .collect()
    };

    fn field<T: std::str::FromStr>(line: usize, fields: &[String], k: usize) -> Result<T> {
        fields.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            line,
            message: format!("bad field {k}"),
        })
    }
    fn arity(line: usize, fields: &[String], n: usize) -> Result<()> {
        if fields.len() == n {
            Ok(())
        } else {
            Err(Error::Parse {
                line,
                message: format!("expected {n} fields, got {}", fields.len()),
            })
        }
    }

    let vertices = section("vertices")?
        .into_iter()
        .map(|(l, f)| {
            arity(l, &f, 2)?;
            Ok([field(l, &f, 0)?, field(l, &f, 1)?])
        })
        .collect::<Result<Vec<[f64; 2]>>>()?;
    let triangles = section("triangles")?
        .into_iter()
        .map(|(l, f)| {
            arity(l, &f, 3)?;
            Ok([field(l, &f, 0)?, field(l, &f, 1)?, field(l, &f, 2)?])
        })
        .collect::<Result<Vec<[usize; 3]>>>()?;
    let boundary_edges = section("boundary_edges")?
        .into_iter()
        .map(|(l, f)| {
            arity(l, &f, 3)?;
            Ok(BoundaryEdge {
                vertices: [field(l, &f, 0)?, field(l, &f, 1)?],
                tag: f[2].parse().map_err(|e: Error| Error::Parse {
                    line: l,
                    message: e.to_string(),
                })?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let periodic_pairs = section("periodic_pairs")?
        .into_iter()
        .map(|(l, f)| {
            arity(l, &f, 2)?;
            Ok((field(l, &f, 0)?, field(l, &f, 1)?))
        })
        .collect::<Result<Vec<_>>>()?;

    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse {
            line,
            message: "trailing content".into(),
        });
    }
    Mesh::new(vertices, triangles, boundary_edges, periodic_pairs)
}

impl Mesh {
    pub fn load(path: impl AsRef<Path>) -> Result<Mesh> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        read_mesh(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, write_mesh(self)).map_err(|e| Error::io(path, e))
    }
}
