//! Primal-dual active set (semismooth Newton) solver for the discrete mixed
//! contact problem
//!
//! ```text
//! A_eps(u) - B p - D lambda = f,   B^T u = 0,
//! lambda - rho + max(0, -(lambda - rho) + c (Gamma u - chi)) = 0.
//! ```

use crate::assembly::StokesOperator;
use crate::error::{Error, Result};
use crate::linsolve::{linear_solve_symmetric, norm};
use crate::rheology::Rheology;
use crate::spaces::{Spaces, TraceOperator};
use crate::sparse::SparseMatrix;

/// Velocity, pressure and multiplier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl MixedState {
    pub fn zeros(n_v: usize, n_q: usize, n_mu: usize) -> Self {
        MixedState {
            u: vec![0.0; n_v],
            p: vec![0.0; n_q],
            lambda: vec![0.0; n_mu],
        }
    }

    pub fn for_spaces(spaces: &Spaces) -> Self {
        Self::zeros(spaces.n_velocity(), spaces.n_pressure(), spaces.n_multiplier())
    }

    /// Largest absolute componentwise difference over all three fields.
    pub fn max_abs_diff(&self, other: &MixedState) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        d(&self.u, &other.u)
            .max(d(&self.p, &other.p))
            .max(d(&self.lambda, &other.lambda))
    }
}

/// Per-edge averages of the kinematic obstacle `chi` and the stress obstacle
/// `rho`. An infinite `chi` marks an edge without a contact constraint; its
/// multiplier is pinned to `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacles {
    pub chi_bar: Vec<f64>,
    pub rho_bar: Vec<f64>,
}

impl Obstacles {
    pub fn zero(n_mu: usize) -> Self {
        Obstacles {
            chi_bar: vec![0.0; n_mu],
            rho_bar: vec![0.0; n_mu],
        }
    }

    pub fn len(&self) -> usize {
        self.chi_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chi_bar.is_empty()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.chi_bar[i] == f64::INFINITY
    }
}

/// Initial active set policy.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ActiveSetSeed {
    /// Apply the activity rule to the initial state.
    #[default]
    FromState,
    AllActive,
    AllInactive,
    Given(Vec<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    /// Absolute tolerance on the Euclidean norm of the combined residual.
    pub tol_residual: f64,
    pub max_iters: usize,
    /// Complementarity scaling `c > 0`.
    pub c_comp: f64,
    pub active_set_seed: ActiveSetSeed,
    /// Upper bound on the number of edges switching state per iteration.
    pub max_set_changes: Option<usize>,
    /// Backtrack along the Newton direction until the combined residual norm
    /// decreases (Armijo test). Without it the full step is always taken.
    pub line_search: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol_residual: 1e-10,
            max_iters: 60,
            c_comp: 1.0,
            active_set_seed: ActiveSetSeed::FromState,
            max_set_changes: None,
            line_search: true,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(Error::InvalidInput(format!(
                "newton_tol must be positive, got {}",
                self.tol_residual
            )));
        }
        if !(self.c_comp > 0.0) || !self.c_comp.is_finite() {
            return Err(Error::InvalidInput(format!(
                "c_comp must be positive, got {}",
                self.c_comp
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("newton_max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Velocity dofs with prescribed values, eliminated from the Newton system.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraints {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl Constraints {
    /// Later entries for the same dof override earlier ones.
    pub fn new(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.reverse();
        pairs.sort_by_key(|p| p.0);
        pairs.dedup_by_key(|p| p.0);
        let (dofs, values) = pairs.into_iter().unzip();
        Constraints { dofs, values }
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dofs.iter().copied().zip(self.values.iter().copied())
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &d in &self.dofs {
            m[d] = true;
        }
        m
    }

    pub fn apply(&self, u: &mut [f64]) {
        for (d, v) in self.iter() {
            u[d] = v;
        }
    }
}

/// Everything needed to evaluate the discrete system on one mesh.
pub struct ContactProblem<'a> {
    pub operator: &'a StokesOperator,
    pub rheology: Rheology,
    pub b: &'a SparseMatrix,
    pub trace: &'a TraceOperator,
    pub load: &'a [f64],
    pub constraints: &'a Constraints,
    pub obstacles: &'a Obstacles,
}

/// Iteration history of one solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    /// Newton steps taken.
    pub iterations: usize,
    /// Combined residual norm before each step and at the final state.
    pub residuals: Vec<f64>,
    /// Number of active edges used in each step.
    pub active_sizes: Vec<usize>,
    /// Active set of the final state.
    pub active: Vec<bool>,
    /// Iterations at which the active set was frozen to break a cycle.
    pub frozen: Vec<usize>,
    /// Step length accepted in each iteration.
    pub step_lengths: Vec<f64>,
}

/// `(lambda - rho) + max(0, -(lambda - rho) + c (Gamma u - chi))`, per edge.
/// Edges without a contact constraint return `lambda - rho`.
pub fn complementarity_residual(lambda: &[f64], gamma_u: &[f64], obstacles: &Obstacles, c_comp: f64) -> Vec<f64> {
    (0..lambda.len())
        .map(|i| {
            let dl = lambda[i] - obstacles.rho_bar[i];
            if obstacles.is_free(i) {
                dl
            } else {
                dl + (-dl + c_comp * (gamma_u[i] - obstacles.chi_bar[i])).max(0.0)
            }
        })
        .collect()
}

fn activity(lambda: &[f64], gamma_u: &[f64], obstacles: &Obstacles, c_comp: f64) -> Vec<f64> {
    (0..lambda.len())
        .map(|i| {
            if obstacles.is_free(i) {
                f64::NEG_INFINITY
            } else {
                -(lambda[i] - obstacles.rho_bar[i]) + c_comp * (gamma_u[i] - obstacles.chi_bar[i])
            }
        })
        .collect()
}

/// Worst-case violations of the discrete contact conditions.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactMetrics {
    /// `max(Gamma u - chi, 0)`.
    pub feasibility: f64,
    /// `max(lambda - rho, 0)`.
    pub sign: f64,
    /// `max |(Gamma u - chi)(lambda - rho)|`.
    pub complementarity: f64,
    /// `||B^T u||_inf`.
    pub divergence: f64,
}

impl ContactMetrics {
    pub fn worst_contact(&self) -> f64 {
        self.feasibility.max(self.sign).max(self.complementarity)
    }
}

pub fn contact_metrics(
    state: &MixedState,
    b: &SparseMatrix,
    trace: &TraceOperator,
    obstacles: &Obstacles,
) -> ContactMetrics {
    let gu = trace.apply(&state.u);
    let mut m = ContactMetrics::default();
    for i in 0..gu.len() {
        let dl = state.lambda[i] - obstacles.rho_bar[i];
        m.sign = m.sign.max(dl);
        if obstacles.is_free(i) {
            continue;
        }
        let gap = gu[i] - obstacles.chi_bar[i];
        m.feasibility = m.feasibility.max(gap);
        m.complementarity = m.complementarity.max((gap * dl).abs());
    }
    m.divergence = b.mul_vec_t(&state.u).iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    m
}

struct Residuals {
    r1: Vec<f64>,
    r2: Vec<f64>,
    r3: Vec<f64>,
}

impl Residuals {
    fn norm(&self, free: &[bool]) -> f64 {
        let r1: f64 = self.r1.iter().zip(free).filter(|(_, f)| **f).map(|(v, _)| v * v).sum();
        let rest: f64 = self.r2.iter().chain(&self.r3).map(|v| v * v).sum();
        (r1 + rest).sqrt()
    }
}

impl ContactProblem<'_> {
    fn check_sizes(&self, state: &MixedState) -> Result<()> {
        let n_v = self.operator.dim();
        let n_q = self.b.ncols;
        let n_mu = self.trace.lengths.len();
        if state.u.len() != n_v
            || state.p.len() != n_q
            || state.lambda.len() != n_mu
            || self.load.len() != n_v
            || self.obstacles.len() != n_mu
            || self.obstacles.rho_bar.len() != n_mu
        {
            return Err(Error::InvalidInput("inconsistent problem dimensions".into()));
        }
        Ok(())
    }

    fn residuals(&self, state: &MixedState, gamma_u: &[f64], c_comp: f64) -> Result<Residuals> {
        let au = self.operator.residual(&self.rheology, &state.u)?;
        let bp = self.b.mul_vec(&state.p);
        let dl = self.trace.coupling.mul_vec(&state.lambda);
        let r1 = (0..au.len()).map(|i| au[i] - bp[i] - dl[i] - self.load[i]).collect();
        let r2 = self.b.mul_vec_t(&state.u).iter().map(|v| -v).collect();
        let r3 = complementarity_residual(&state.lambda, gamma_u, self.obstacles, c_comp);
        Ok(Residuals { r1, r2, r3 })
    }
}

/// Runs the primal-dual active set iteration from `initial`.
///
/// Constrained velocity dofs are set to their prescribed values before the
/// first step and never updated. The solve stops when the combined residual
/// norm is below the tolerance and the active set of the current state
/// equals the one used in the last step.
pub fn semismooth_newton(
    problem: &ContactProblem<'_>,
    config: &NewtonConfig,
    initial: MixedState,
) -> Result<(MixedState, NewtonStats)> {
    config.validate()?;
    problem.check_sizes(&initial)?;
    let mut state = initial;
    problem.constraints.apply(&mut state.u);
    let n_v = state.u.len();
    let n_q = state.p.len();
    let n_mu = state.lambda.len();
    let c = config.c_comp;
    let obs = problem.obstacles;

    let constrained = problem.constraints.mask(n_v);
    let free: Vec<bool> = constrained.iter().map(|c| !c).collect();
    let mut free_index = vec![usize::MAX; n_v];
    let mut n_f = 0;
    for i in 0..n_v {
        if free[i] {
            free_index[i] = n_f;
            n_f += 1;
        }
    }
    let b_rows: Vec<Vec<(usize, f64)>> = (0..n_v).map(|i| problem.b.row(i).collect()).collect();
    let d_rows: Vec<Vec<(usize, f64)>> = (0..n_v).map(|i| problem.trace.coupling.row(i).collect()).collect();

    let mut stats = NewtonStats::default();
    let mut history: Vec<Vec<bool>> = Vec::new();

    for k in 0..=config.max_iters {
        let gamma_u = problem.trace.apply(&state.u);
        let indicator = activity(&state.lambda, &gamma_u, obs, c);
        let from_state: Vec<bool> = indicator.iter().map(|&a| a > 0.0).collect();

        let res = problem.residuals(&state, &gamma_u, c)?;
        let res_norm = res.norm(&free);
        if !res_norm.is_finite() {
            return Err(Error::NonFinite("Newton residual"));
        }
        stats.residuals.push(res_norm);
        if k > 0 && res_norm <= config.tol_residual && history.last() == Some(&from_state) {
            stats.iterations = k;
            stats.active = from_state;
            return Ok((state, stats));
        }
        if k == config.max_iters {
            return Err(Error::MaxIters {
                iterations: k,
                residual: res_norm,
            });
        }

        let mut active = if k == 0 {
            match &config.active_set_seed {
                ActiveSetSeed::FromState => from_state,
                ActiveSetSeed::AllActive => (0..n_mu).map(|i| !obs.is_free(i)).collect(),
                ActiveSetSeed::AllInactive => vec![false; n_mu],
                ActiveSetSeed::Given(set) => {
                    if set.len() != n_mu {
                        return Err(Error::InvalidInput("seed active set has the wrong length".into()));
                    }
                    set.iter().enumerate().map(|(i, &a)| a && !obs.is_free(i)).collect()
                }
            }
        } else {
            from_state
        };
        if let (Some(limit), Some(prev)) = (config.max_set_changes, history.last()) {
            let mut changes: Vec<usize> = (0..n_mu).filter(|&i| active[i] != prev[i]).collect();
            if changes.len() > limit {
                changes.sort_by(|&a, &b| indicator[b].abs().total_cmp(&indicator[a].abs()));
                for &i in &changes[limit..] {
                    active[i] = prev[i];
                }
            }
        }
        let len = history.len();
        if len >= 2 && active == history[len - 2] && active != history[len - 1] {
            active = history[len - 1].clone();
            stats.frozen.push(k);
            if stats.frozen.len() > config.max_iters / 2 {
                return Err(Error::Cycling { iteration: k });
            }
        }

        // Inactive multipliers sit on their obstacle.
        let mut lambda_shift = vec![0.0; n_mu];
        for i in 0..n_mu {
            if !active[i] {
                lambda_shift[i] = obs.rho_bar[i] - state.lambda[i];
            }
        }
        let active_index: Vec<usize> = (0..n_mu).filter(|&i| active[i]).collect();
        let n_a = active_index.len();
        let mut col_of_edge = vec![usize::MAX; n_mu];
        for (a, &i) in active_index.iter().enumerate() {
            col_of_edge[i] = n_f + n_q + a;
        }

        let jac = problem.operator.jacobian(&problem.rheology, &state.u)?;
        let shift_force = problem.trace.coupling.mul_vec(&lambda_shift);
        let dim = n_f + n_q + n_a;
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(jac.nnz() + 4 * n_v);
        let mut rhs = vec![0.0; dim];
        for i in 0..n_v {
            let fi = free_index[i];
            if fi == usize::MAX {
                continue;
            }
            for (j, v) in jac.row(i) {
                let fj = free_index[j];
                if fj != usize::MAX {
                    trip.push((fi, fj, v));
                }
            }
            for &(q, v) in &b_rows[i] {
                trip.push((fi, n_f + q, -v));
                trip.push((n_f + q, fi, -v));
            }
            for &(e, v) in &d_rows[i] {
                let col = col_of_edge[e];
                if col != usize::MAX {
                    trip.push((fi, col, -v));
                    trip.push((col, fi, -v));
                }
            }
            rhs[fi] = -res.r1[i] + shift_force[i];
        }
        for q in 0..n_q {
            rhs[n_f + q] = -res.r2[q];
        }
        for (a, &i) in active_index.iter().enumerate() {
            rhs[n_f + n_q + a] = problem.trace.lengths[i] * (gamma_u[i] - obs.chi_bar[i]);
        }
        let kkt = SparseMatrix::from_triplets(dim, dim, &trip);
        let signs: Vec<i8> = (0..dim).map(|i| if i < n_f { 1 } else { -1 }).collect();
        let sol = linear_solve_symmetric(&kkt, &rhs, &signs).map_err(|e| match e {
            Error::SingularMatrix { pivot, .. } => Error::SingularMatrix {
                pivot,
                hint: Some(format!(
                    "{} of {} contact edges active at iteration {k}; run the compatibility check on the load",
                    n_a, n_mu
                )),
            },
            other => other,
        })?;

        let mut step = MixedState {
            u: vec![0.0; n_v],
            p: sol[n_f..n_f + n_q].to_vec(),
            lambda: lambda_shift,
        };
        for i in 0..n_v {
            if free_index[i] != usize::MAX {
                step.u[i] = sol[free_index[i]];
            }
        }
        for (a, &i) in active_index.iter().enumerate() {
            step.lambda[i] += sol[n_f + n_q + a];
        }
        let t = if config.line_search {
            line_search(problem, &state, &step, res_norm, c, &free)?
        } else {
            1.0
        };
        axpy(&mut state, t, &step);
        stats.step_lengths.push(t);
        stats.active_sizes.push(n_a);
        history.push(active);
    }
    unreachable!("loop returns on the final iteration")
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

fn axpy(state: &mut MixedState, t: f64, step: &MixedState) {
    for (x, d) in state.u.iter_mut().zip(&step.u) {
        *x += t * d;
    }
    for (x, d) in state.p.iter_mut().zip(&step.p) {
        *x += t * d;
    }
    for (x, d) in state.lambda.iter_mut().zip(&step.lambda) {
        *x += t * d;
    }
}

/// Halves the step until the Armijo condition holds on the combined residual
/// norm; if it never does, returns the trial length with the smallest norm.
fn line_search(
    problem: &ContactProblem<'_>,
    state: &MixedState,
    step: &MixedState,
    current: f64,
    c_comp: f64,
    free: &[bool],
) -> Result<f64> {
    let mut t = 1.0;
    let mut best = (f64::INFINITY, 1.0);
    for _ in 0..MAX_BACKTRACKS {
        let mut trial = state.clone();
        axpy(&mut trial, t, step);
        let gamma_u = problem.trace.apply(&trial.u);
        let norm = match problem.residuals(&trial, &gamma_u, c_comp) {
            Ok(res) => res.norm(free),
            Err(Error::NonFinite(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if norm <= (1.0 - ARMIJO * t) * current {
            return Ok(t);
        }
        if norm < best.0 {
            best = (norm, t);
        }
        t *= 0.5;
    }
    Ok(best.1)
}

/// Combined residual norm of a state, as used by the Newton stopping test.
pub fn combined_residual(problem: &ContactProblem<'_>, state: &MixedState, c_comp: f64) -> Result<f64> {
    problem.check_sizes(state)?;
    let gamma_u = problem.trace.apply(&state.u);
    let res = problem.residuals(state, &gamma_u, c_comp)?;
    let free: Vec<bool> = problem.constraints.mask(state.u.len()).iter().map(|c| !c).collect();
    Ok(res.norm(&free))
}

/// Euclidean norm, exposed for diagnostics.
pub fn l2_norm(v: &[f64]) -> f64 {
    norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obstacles() -> Obstacles {
        Obstacles {
            chi_bar: vec![0.0, 0.2, 0.0, f64::INFINITY],
            rho_bar: vec![0.0, 0.0, 0.3, 0.1],
        }
    }

    #[test]
    fn complementarity_examples() {
        let obs = Obstacles::zero(1);
        assert_eq!(complementarity_residual(&[0.0], &[-0.5], &obs, 1.0), vec![0.0]);
        assert_eq!(complementarity_residual(&[-1.0], &[0.0], &obs, 1.0), vec![0.0]);
        assert_eq!(complementarity_residual(&[-1.0], &[-0.5], &obs, 1.0), vec![-0.5]);
    }

    #[test]
    fn shifted_and_free_edges() {
        let obs = obstacles();
        let r = complementarity_residual(&[0.0, -1.0, 0.3, 0.5], &[-1.0, 0.2, -0.1, 7.0], &obs, 2.0);
        assert_eq!(r, vec![0.0, 0.0, 0.0, 0.4]);
    }

    #[test]
    fn constraints_override_and_sort() {
        let c = Constraints::new(vec![(4, 1.0), (1, 2.0), (4, 3.0)]);
        assert_eq!(c.iter().collect::<Vec<_>>(), vec![(1, 2.0), (4, 3.0)]);
        let mut u = vec![0.0; 5];
        c.apply(&mut u);
        assert_eq!(u, vec![0.0, 2.0, 0.0, 0.0, 3.0]);
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        let bad = NewtonConfig {
            c_comp: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = NewtonConfig {
            tol_residual: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
