//! Subglacial cavity evolution over a periodic sinusoidal bed.
//!
//! Each time step solves the contact problem on the current geometry, moves
//! the cavity roof with the upstream edge-average normal velocity (explicit
//! Euler) and re-stretches the mesh columns between the new roof and the
//! fixed top.

use crate::assembly::{assemble_b, assemble_load_cavity, StokesOperator};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh::{bed_profile, deform_to_profile, generate_cavity_mesh, Mesh};
use crate::rheology::Rheology;
use crate::rigid::{compatibility_check, CompatibilityReport, RigidCone, VerticalRay};
use crate::solver::{
    contact_metrics, semismooth_newton, ActiveSetSeed, Constraints, ContactMetrics, ContactProblem, MixedState,
    NewtonConfig, Obstacles,
};
use crate::spaces::{ContactNormal, Spaces, TraceOperator};

/// Distance below which a roof vertex counts as sitting on the bed.
pub const ATTACH_TOL: f64 = 1e-12;

/// Which bed edges carry a non-penetration constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContactRule {
    /// Every edge is constrained so that its downstream roof vertex cannot
    /// pass below the bed during the next step:
    /// `Gamma u_i <= gap_{i+1} / (dt sqrt(1 + s_i^2))`. On the attached part
    /// this is `Gamma u <= 0`.
    #[default]
    Kinematic,
    /// Only edges with both ends on the bed are constrained (`Gamma u <= 0`);
    /// the rest are traction free. Overshoot is corrected by the clamp.
    Attached,
}

impl ContactRule {
    pub fn name(self) -> &'static str {
        match self {
            ContactRule::Kinematic => "kinematic",
            ContactRule::Attached => "attached",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "kinematic" => Some(ContactRule::Kinematic),
            "attached" => Some(ContactRule::Attached),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CavityConfig {
    pub nx: usize,
    pub ny: usize,
    /// Peak-to-trough bed amplitude.
    pub amplitude: f64,
    pub glen_a: f64,
    pub glen_n: f64,
    pub eps_reg: f64,
    /// Horizontal velocity imposed on the top surface.
    pub u_i: f64,
    /// Effective pressure.
    pub p_e: f64,
    pub dt: f64,
    pub t_end: f64,
    /// The run stops once `max |Gamma u|` drops below this value.
    pub steady_tol: f64,
    pub snapshots: Vec<f64>,
    pub contact_rule: ContactRule,
    pub newton: NewtonConfig,
    pub exec: Execution,
}

impl Default for CavityConfig {
    fn default() -> Self {
        CavityConfig {
            nx: 32,
            ny: 32,
            amplitude: 0.08,
            glen_a: 0.5,
            glen_n: 3.0,
            eps_reg: 1e-2,
            u_i: 1.0,
            p_e: 1.2,
            dt: 0.025,
            t_end: 3.0,
            steady_tol: 1e-3,
            snapshots: vec![0.0, 0.1, 3.0],
            contact_rule: ContactRule::default(),
            newton: NewtonConfig::default(),
            exec: Execution::default(),
        }
    }
}

impl CavityConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.nx < 2 || self.ny < 1 {
            return bad(format!(
                "cavity mesh needs nx >= 2 and ny >= 1, got {} x {}",
                self.nx, self.ny
            ));
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return bad(format!("amplitude must lie in [0, 1), got {}", self.amplitude));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.steady_tol >= 0.0) {
            return bad(format!("steady_tol must be non-negative, got {}", self.steady_tol));
        }
        if !self.u_i.is_finite() || !self.p_e.is_finite() {
            return bad("u_i and p_e must be finite".into());
        }
        if self.snapshots.iter().any(|t| !t.is_finite()) {
            return bad("snapshot times must be finite".into());
        }
        self.rheology()?;
        self.newton.validate()
    }

    /// Courant number `|u_i| dt nx` of the roof update. The upstream update
    /// carries the horizontal transport of the roof slope, so it is stable
    /// only up to about one; halve `dt` when doubling `nx`.
    pub fn courant(&self) -> f64 {
        self.u_i.abs() * self.dt * self.nx as f64
    }

    pub fn rheology(&self) -> Result<Rheology> {
        Rheology::new(self.glen_a, self.glen_n, self.eps_reg)
    }
}

/// Geometry and solution after one solve.
#[derive(Debug, Clone)]
pub struct CavityState {
    pub time: f64,
    /// Mesh whose bed follows `roof`.
    pub mesh: Mesh,
    /// Bed vertex abscissae in chain order (the last one is the periodic
    /// copy of the first).
    pub x: Vec<f64>,
    /// Bed heights `b(x)` at the bed vertices.
    pub bed: Vec<f64>,
    /// Roof heights `h_c(x)` at the bed vertices.
    pub roof: Vec<f64>,
    /// Per bed edge: did it carry a non-penetration constraint?
    pub contact: Vec<bool>,
    /// Per bed edge: the constraint is active (ice pressed on the bed, or
    /// about to land on it).
    pub attached: Vec<bool>,
    /// Per bed edge outward normal velocity average.
    pub gamma_n_u: Vec<f64>,
    pub solution: MixedState,
    /// Solver pressure plus `p_e`.
    pub pressure: Vec<f64>,
}

impl CavityState {
    /// Bed edge midpoints.
    pub fn edge_midpoints(&self) -> Vec<f64> {
        self.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn volume(&self) -> f64 {
        cavity_volume(&self.x, &self.bed, &self.roof)
    }

    pub fn max_abs_gamma(&self) -> f64 {
        self.gamma_n_u.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn num_attached(&self) -> usize {
        self.attached.iter().filter(|&&a| a).count()
    }

    /// Edges whose roof is off the bed at either end, or where the ice moves
    /// away from the bed.
    pub fn detached(&self) -> Vec<bool> {
        (0..self.attached.len())
            .map(|i| {
                let off = |k: usize| self.roof[k] - self.bed[k] > ATTACH_TOL;
                !self.attached[i] || off(i) || off(i + 1)
            })
            .collect()
    }

    /// Location and value of the most negative bed stress.
    pub fn lambda_peak(&self) -> (usize, f64) {
        self.solution
            .lambda
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, l)| if l < best.1 { (i, l) } else { best },
            )
    }

    /// Most negative bed stress on edges whose midpoint lies within `window`
    /// of the downstream end of the cavity, as `(edge, lambda)`.
    pub fn reattachment_peak(&self, window: f64) -> Option<(usize, f64)> {
        let ext = self.cavity_extent()?;
        self.edge_midpoints()
            .iter()
            .enumerate()
            .filter(|(_, &m)| {
                let d = (m - ext.reattach_x).abs();
                d.min(1.0 - d) <= window
            })
            .map(|(i, _)| (i, self.solution.lambda[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// The cavity as a periodic run of detached edges, if there is one.
    pub fn cavity_extent(&self) -> Option<CavityExtent> {
        cavity_extent(&self.detached(), &self.x)
    }
}

/// A single periodic run of detached edges `first..=last` (indices may wrap).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityExtent {
    pub first: usize,
    pub last: usize,
    /// Left end of the first detached edge.
    pub detach_x: f64,
    /// Right end of the last detached edge.
    pub reattach_x: f64,
    /// Number of separate detached runs; one for a single cavity.
    pub runs: usize,
}

/// Finds the longest periodic run of `true` entries.
pub fn cavity_extent(detached: &[bool], x: &[f64]) -> Option<CavityExtent> {
    let m = detached.len();
    if m == 0 || detached.iter().all(|d| !d) {
        return None;
    }
    if detached.iter().all(|&d| d) {
        return Some(CavityExtent {
            first: 0,
            last: m - 1,
            detach_x: x[0],
            reattach_x: x[m],
            runs: 1,
        });
    }
    let starts: Vec<usize> = (0..m).filter(|&i| detached[i] && !detached[(i + m - 1) % m]).collect();
    let mut best = (0usize, 0usize);
    for &s in &starts {
        let mut len = 0;
        while detached[(s + len) % m] {
            len += 1;
        }
        if len > best.1 {
            best = (s, len);
        }
    }
    let (first, len) = best;
    let last = (first + len - 1) % m;
    Some(CavityExtent {
        first,
        last,
        detach_x: x[first],
        reattach_x: x[last + 1],
        runs: starts.len(),
    })
}

/// Trapezoidal `int (h_c - b) dx` over the bed vertices.
pub fn cavity_volume(x: &[f64], bed: &[f64], roof: &[f64]) -> f64 {
    (1..x.len())
        .map(|i| 0.5 * (x[i] - x[i - 1]) * ((roof[i] - bed[i]) + (roof[i - 1] - bed[i - 1])))
        .sum()
}

/// Explicit Euler update of the roof.
///
/// Vertex `i` moves with the normal velocity of its upstream edge
/// `(i - 1, i)` (periodic wrap), converted to a vertical speed by the edge
/// metric factor `sqrt(1 + s^2)`, and is then clamped to the bed. `roof`,
/// `bed` and `x` hold `m + 1` values for `m` edges; the last vertex is the
/// periodic copy of the first.
pub fn advect_roof(x: &[f64], bed: &[f64], roof: &[f64], gamma_n_u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let m = gamma_n_u.len();
    if m == 0 || x.len() != m + 1 || bed.len() != m + 1 || roof.len() != m + 1 {
        return Err(Error::InvalidInput(format!(
            "advect_roof expects {} vertices for {m} edges, got x {}, bed {}, roof {}",
            m + 1,
            x.len(),
            bed.len(),
            roof.len()
        )));
    }
    let mut next = vec![0.0; m + 1];
    for i in 0..m {
        let e = (i + m - 1) % m;
        let dx = x[e + 1] - x[e];
        let slope = (roof[e + 1] - roof[e]) / dx;
        let h = roof[i] - dt * gamma_n_u[e] * (1.0 + slope * slope).sqrt();
        next[i] = h.max(bed[i]);
    }
    next[m] = next[0];
    if next.iter().any(|h| !h.is_finite()) {
        return Err(Error::NonFinite("roof profile"));
    }
    Ok(next)
}

/// Discrete problem on one cavity geometry.
pub struct CavityProblem {
    pub mesh: Mesh,
    pub spaces: Spaces,
    pub trace: TraceOperator,
    pub b: crate::sparse::SparseMatrix,
    pub operator: StokesOperator,
    pub rheology: Rheology,
    pub load: Vec<f64>,
    pub constraints: Constraints,
    pub obstacles: Obstacles,
    /// Per bed edge: constrained by contact.
    pub contact: Vec<bool>,
}

impl CavityProblem {
    /// Builds the system on `mesh`, whose bed vertices sit at the roof
    /// heights. Obstacles follow `config.contact_rule`.
    pub fn new(mesh: Mesh, bed: &[f64], config: &CavityConfig) -> Result<Self> {
        let rheology = config.rheology()?;
        let spaces = Spaces::new(&mesh);
        let trace = TraceOperator::new(&spaces, ContactNormal::Outward);
        let b = assemble_b(&mesh, &spaces);
        let operator = StokesOperator::new(&mesh, &spaces, config.exec);
        let load = assemble_load_cavity(&trace, config.p_e);
        let constraints = Constraints::new(spaces.traction_nodes.iter().map(|&k| (2 * k, config.u_i)).collect());

        let bed_vertices = mesh.bed_vertices();
        if bed_vertices.len() != bed.len() {
            return Err(Error::InvalidInput(format!(
                "{} bed heights for {} bed vertices",
                bed.len(),
                bed_vertices.len()
            )));
        }
        let point = |k: usize| mesh.vertices[bed_vertices[k]];
        let gap = |k: usize| {
            let g = point(k)[1] - bed[k];
            if g <= ATTACH_TOL {
                0.0
            } else {
                g
            }
        };
        let chi_bar: Vec<f64> = (0..spaces.n_multiplier())
            .map(|i| match config.contact_rule {
                ContactRule::Attached if gap(i) == 0.0 && gap(i + 1) == 0.0 => 0.0,
                ContactRule::Attached => f64::INFINITY,
                ContactRule::Kinematic => {
                    let (a, c) = (point(i), point(i + 1));
                    let slope = (c[1] - a[1]) / (c[0] - a[0]);
                    gap(i + 1) / (config.dt * (1.0 + slope * slope).sqrt())
                }
            })
            .collect();
        let contact = chi_bar.iter().map(|c| c.is_finite()).collect();
        let obstacles = Obstacles {
            rho_bar: vec![0.0; chi_bar.len()],
            chi_bar,
        };
        Ok(CavityProblem {
            mesh,
            spaces,
            trace,
            b,
            operator,
            rheology,
            load,
            constraints,
            obstacles,
            contact,
        })
    }

    pub fn problem(&self) -> ContactProblem<'_> {
        ContactProblem {
            operator: &self.operator,
            rheology: self.rheology,
            b: &self.b,
            trace: &self.trace,
            load: &self.load,
            constraints: &self.constraints,
            obstacles: &self.obstacles,
        }
    }

    /// Pairing of the load with upward translation. Without any contact edge
    /// downward translation is admissible too and the check fails.
    pub fn compatibility(&self) -> CompatibilityReport {
        let up = RigidCone::vertical(&self.mesh, &self.spaces, VerticalRay::UP, self.rheology.r);
        let mut report = compatibility_check(&self.load, &up);
        if !self.contact.iter().any(|&c| c) {
            let down = RigidCone::vertical(&self.mesh, &self.spaces, VerticalRay::DOWN, self.rheology.r);
            let other = compatibility_check(&self.load, &down);
            report.pairings.extend(other.pairings);
            report.margin = report.margin.min(other.margin);
            report.passed &= other.passed;
        }
        report
    }

    pub fn metrics(&self, state: &MixedState) -> ContactMetrics {
        contact_metrics(state, &self.b, &self.trace, &self.obstacles)
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub newton_iters: usize,
    pub compatibility: CompatibilityReport,
    pub metrics: ContactMetrics,
    pub volume: f64,
    pub max_abs_gamma: f64,
    pub attached_edges: usize,
    pub min_lambda: f64,
    pub max_lambda: f64,
    /// `min (h_c - b)` over the roof used in this solve.
    pub min_gap: f64,
}

/// Solves on the geometry given by `roof` at time `time`, warm-started from
/// `previous` when given.
pub fn solve_at(
    base: &Mesh,
    bed: &[f64],
    roof: &[f64],
    time: f64,
    previous: Option<&MixedState>,
    config: &CavityConfig,
) -> Result<(CavityState, StepReport)> {
    let mesh = deform_to_profile(base, roof)?;
    let x: Vec<f64> = mesh.bed_vertices().iter().map(|&v| mesh.vertices[v][0]).collect();
    let problem = CavityProblem::new(mesh, bed, config)?;
    let compatibility = problem.compatibility();
    if !compatibility.passed {
        return Err(Error::Incompatible {
            pairing: compatibility.pairings.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let mut newton = config.newton.clone();
    let initial = match previous {
        Some(s) => s.clone(),
        None => {
            // Simple shear matching the top velocity keeps the strain rate
            // away from zero, where the power-law viscosity is stiffest.
            newton.active_set_seed = ActiveSetSeed::AllActive;
            let mut s = MixedState::for_spaces(&problem.spaces);
            s.u = problem.spaces.interpolate(|p| [config.u_i * p[1], 0.0]);
            s
        }
    };
    let (solution, stats) = semismooth_newton(&problem.problem(), &newton, initial)
        .map_err(|e| e.context(format!("cavity solve at t = {time}")))?;
    let metrics = problem.metrics(&solution);
    let gamma_n_u = problem.trace.apply(&solution.u);
    let attached: Vec<bool> = stats
        .active
        .iter()
        .zip(&problem.contact)
        .map(|(&a, &c)| a && c)
        .collect();
    let pressure = solution.p.iter().map(|p| p + config.p_e).collect();
    let (min_lambda, max_lambda) = solution
        .lambda
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| {
            (lo.min(l), hi.max(l))
        });
    let min_gap = roof.iter().zip(bed).map(|(h, b)| h - b).fold(f64::INFINITY, f64::min);
    let state = CavityState {
        time,
        x,
        bed: bed.to_vec(),
        roof: roof.to_vec(),
        contact: problem.contact.clone(),
        attached,
        gamma_n_u,
        solution,
        pressure,
        mesh: problem.mesh,
    };
    let report = StepReport {
        time,
        newton_iters: stats.iterations,
        compatibility,
        metrics,
        volume: state.volume(),
        max_abs_gamma: state.max_abs_gamma(),
        attached_edges: state.num_attached(),
        min_lambda,
        max_lambda,
        min_gap,
    };
    Ok((state, report))
}

/// Initial geometry: the undeformed cavity mesh and its bed heights.
pub fn initial_geometry(config: &CavityConfig) -> Result<(Mesh, Vec<f64>)> {
    let mesh = generate_cavity_mesh(config.nx, config.ny, config.amplitude)?;
    let bed = mesh
        .bed_vertices()
        .iter()
        .map(|&v| bed_profile(config.amplitude, mesh.vertices[v][0]))
        .collect();
    Ok((mesh, bed))
}

/// Advances a solved state by one time step: roof advection, then a solve
/// on the deformed mesh at `time + dt`.
pub fn step(base: &Mesh, state: &CavityState, config: &CavityConfig) -> Result<(CavityState, StepReport)> {
    let roof = advect_roof(&state.x, &state.bed, &state.roof, &state.gamma_n_u, config.dt)?;
    solve_at(
        base,
        &state.bed,
        &roof,
        state.time + config.dt,
        Some(&state.solution),
        config,
    )
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct CavityRun {
    /// One report per solve, in time order.
    pub reports: Vec<StepReport>,
    /// Requested snapshot time and the state solved nearest to it. Times
    /// after an early steady stop receive the final (steady) state.
    pub snapshots: Vec<(f64, CavityState)>,
    /// Last solved state.
    pub last: CavityState,
    /// Time at which `max |Gamma u| < steady_tol` first held.
    pub steady_time: Option<f64>,
}

/// Runs from the fully attached state until `t_end` or steady state.
pub fn run(config: &CavityConfig) -> Result<CavityRun> {
    run_with(config, |_, _| {})
}

/// Same as [`run`], calling `observe` after every solve.
pub fn run_with<F: FnMut(&CavityState, &StepReport)>(config: &CavityConfig, mut observe: F) -> Result<CavityRun> {
    config.validate()?;
    let (base, bed) = initial_geometry(config)?;
    let mut pending: Vec<f64> = config.snapshots.clone();
    pending.sort_by(f64::total_cmp);
    pending.dedup();
    let mut snapshots = Vec::new();
    let mut reports = Vec::new();

    let (mut state, mut report) = solve_at(&base, &bed, &bed, 0.0, None, config)?;
    let half = 0.5 * config.dt;
    let mut k = 0usize;
    let steady_time = loop {
        observe(&state, &report);
        while let Some(&s) = pending.first() {
            if s <= state.time + half {
                snapshots.push((s, state.clone()));
                pending.remove(0);
            } else {
                break;
            }
        }
        let steady = report.max_abs_gamma < config.steady_tol;
        reports.push(report);
        if steady {
            break Some(state.time);
        }
        let next_time = (k + 1) as f64 * config.dt;
        if next_time > config.t_end + 1e-9 * config.dt {
            break None;
        }
        let (s, r) = step(&base, &state, config)?;
        state = CavityState { time: next_time, ..s };
        report = StepReport { time: next_time, ..r };
        k += 1;
    };
    for s in pending {
        if s <= config.t_end + half {
            snapshots.push((s, state.clone()));
        }
    }
    Ok(CavityRun {
        reports,
        snapshots,
        last: state,
        steady_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_roof_rises_with_uniform_upward_motion() {
        let x = [0.0, 0.25, 0.5, 0.75, 1.0];
        let bed = [0.0; 5];
        let w = 0.3;
        let roof = advect_roof(&x, &bed, &bed, &[-w; 4], 0.1).unwrap();
        for h in roof {
            assert!((h - 0.03).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_velocity_is_a_fixed_point() {
        let x = [0.0, 0.5, 1.0];
        let bed = [0.0, -0.1, 0.0];
        let roof = [0.05, 0.0, 0.05];
        assert_eq!(advect_roof(&x, &bed, &roof, &[0.0, 0.0], 0.5).unwrap(), roof.to_vec());
    }

    #[test]
    fn clamp_keeps_roof_on_bed() {
        let x = [0.0, 0.5, 1.0];
        let bed = [0.0, 0.0, 0.0];
        let roof = advect_roof(&x, &bed, &bed, &[0.1, 0.0], 0.5).unwrap();
        assert_eq!(roof, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn upstream_edge_and_slope_factor() {
        // Vertex 1 is moved by edge 0, vertex 0 by the wrapped edge 1.
        let x = [0.0, 0.5, 1.0];
        let bed = [-1.0; 3];
        let roof = [0.0, 0.5, 0.0];
        let next = advect_roof(&x, &bed, &roof, &[-1.0, -2.0], 0.1).unwrap();
        let f = 2f64.sqrt();
        assert!((next[1] - (0.5 + 0.1 * f)).abs() < 1e-15);
        assert!((next[0] - (0.0 + 0.2 * f)).abs() < 1e-15);
        assert_eq!(next[0], next[2]);
    }

    #[test]
    fn volume_and_extent() {
        let x = [0.0, 0.25, 0.5, 0.75, 1.0];
        let bed = [0.0; 5];
        let roof = [0.0, 0.1, 0.1, 0.0, 0.0];
        assert!((cavity_volume(&x, &bed, &roof) - 0.05).abs() < 1e-15);
        let ext = cavity_extent(&[true, false, false, true], &x).unwrap();
        assert_eq!((ext.first, ext.last, ext.runs), (3, 0, 1));
        assert_eq!((ext.detach_x, ext.reattach_x), (0.75, 0.25));
        assert!(cavity_extent(&[false; 4], &x).is_none());
    }

    #[test]
    fn config_validation() {
        assert!(CavityConfig::default().validate().is_ok());
        let bad = CavityConfig {
            dt: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = CavityConfig {
            glen_n: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
