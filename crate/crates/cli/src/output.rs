//! CSV, VTK and manifest writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rstokes::cavity::{CavityState, StepReport};
use rstokes::solver::NewtonStats;
use rstokes::{Mesh, Spaces};

use crate::error::CliError;

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn newton_csv(stats: &NewtonStats) -> String {
    let mut out = String::from("iteration,residual,active_set_size\n");
    for (k, r) in stats.residuals.iter().enumerate() {
        let active = stats.active_sizes.get(k).map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{k},{},{active}", num(*r));
    }
    out
}

/// Linear-triangle VTK file with the velocity at the vertices and a cell
/// pressure.
pub fn vtk(title: &str, mesh: &Mesh, spaces: &Spaces, u: &[f64], pressure: &[f64]) -> String {
    let mut node_of_vertex = vec![0usize; mesh.num_vertices()];
    for (tri, nodes) in mesh.triangles.iter().zip(&spaces.triangle_nodes) {
        for k in 0..3 {
            node_of_vertex[tri[k]] = nodes[k];
        }
    }
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let mut out =
        format!("# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\nPOINTS {nv} double\n");
    for p in &mesh.vertices {
        let _ = writeln!(out, "{} {} 0", num(p[0]), num(p[1]));
    }
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in &mesh.triangles {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }
    let _ = writeln!(out, "POINT_DATA {nv}\nVECTORS velocity double");
    for &k in &node_of_vertex {
        let _ = writeln!(out, "{} {} 0", num(u[2 * k]), num(u[2 * k + 1]));
    }
    let _ = writeln!(out, "CELL_DATA {nt}\nSCALARS pressure double 1\nLOOKUP_TABLE default");
    for p in pressure {
        let _ = writeln!(out, "{}", num(*p));
    }
    out
}

pub fn roof_csv(state: &CavityState) -> String {
    let mut out = String::from("x,b,h_c,gamma_n_u,lambda\n");
    let m = state.gamma_n_u.len();
    for k in 0..state.x.len() {
        // Edge quantities are reported at the left end of each edge; the
        // periodic copy repeats the first edge.
        let e = k % m;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            num(state.x[k]),
            num(state.bed[k]),
            num(state.roof[k]),
            num(state.gamma_n_u[e]),
            num(state.solution.lambda[e])
        );
    }
    out
}

pub fn summary_header() -> &'static str {
    "t,cavity_volume,max_abs_gnu,newton_iters,active_edges,compat_pairing,compat_passed\n"
}

pub fn summary_row(r: &StepReport) -> String {
    let pairing = r
        .compatibility
        .pairings
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    format!(
        "{},{},{},{},{},{},{}\n",
        num(r.time),
        num(r.volume),
        num(r.max_abs_gamma),
        r.newton_iters,
        r.attached_edges,
        num(pairing),
        r.compatibility.passed
    )
}

/// `roof_t0.1000.csv` style names.
pub fn snapshot_name(prefix: &str, time: f64, ext: &str) -> String {
    format!("{prefix}_t{time:.4}.{ext}")
}

pub fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

/// Location of the resolved configuration, loadable with `--config`.
pub fn config_path(out: &Path) -> PathBuf {
    sibling(out, "config.toml")
}

fn sibling(out: &Path, name: &str) -> PathBuf {
    if out.extension().is_some() {
        let stem = out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        out.with_file_name(format!("{stem}_{name}"))
    } else {
        out.join(name)
    }
}
