//! Manufactured-solution experiment on the unit square: exact fields,
//! obstacles, discrete setup, error norms and observed convergence orders.
//!
//! The contact normal on `{y = 0}` is the upward one, `n = (0, 1)`. With that
//! choice `u . n = -x^alpha` on the bed, the obstacles are feasible and the
//! admissible rigid motions are the downward translations.

use crate::assembly::{assemble_b, assemble_field_load, FieldLoad, StokesOperator};
use crate::element::{eval_velocity, frob, sym, AffineMap, Tabulation, DOFS};
use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::mesh::{generate_unit_square_with, Diagonal, Mesh};
use crate::quadrature::integrate_adaptive;
use crate::rheology::Rheology;
use crate::rigid::{compatibility_check, project_vertical, CompatibilityReport, RigidCone, Samples, VerticalRay};
use crate::solver::{
    contact_metrics, semismooth_newton, ActiveSetSeed, Constraints, ContactMetrics, ContactProblem, MixedState,
    NewtonConfig, NewtonStats, Obstacles,
};
use crate::spaces::{ContactNormal, Spaces, TraceOperator};
use crate::sparse::SparseMatrix;

const ALPHA_EXP: f64 = 1.01;

/// Exact velocity, pressure and bed stress of the manufactured problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactFields {
    pub r: f64,
    /// Radial exponent of the velocity, `1.01`.
    pub alpha_exp: f64,
    /// `-1 + 2/r + 0.01`.
    pub gamma_exp: f64,
}

impl ExactFields {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 1.0 && r <= 2.0) {
            return Err(Error::InvalidInput(format!("r must lie in (1, 2], got {r}")));
        }
        Ok(ExactFields {
            r,
            alpha_exp: ALPHA_EXP,
            gamma_exp: -1.0 + 2.0 / r + 0.01,
        })
    }

    /// `|x|^(alpha-1) (y, -x)`.
    pub fn velocity(&self, p: [f64; 2]) -> [f64; 2] {
        let rho = p[0].hypot(p[1]);
        if rho == 0.0 {
            return [0.0, 0.0];
        }
        let s = rho.powf(self.alpha_exp - 1.0);
        [s * p[1], -s * p[0]]
    }

    /// `G[i][j] = d u_i / d x_j`.
    pub fn velocity_gradient(&self, p: [f64; 2]) -> [[f64; 2]; 2] {
        let [x, y] = p;
        let rho2 = x * x + y * y;
        if rho2 == 0.0 {
            return [[0.0; 2]; 2];
        }
        let a = self.alpha_exp;
        let s = rho2.powf(0.5 * (a - 1.0));
        let t = (a - 1.0) * rho2.powf(0.5 * (a - 3.0));
        [[t * x * y, s + t * y * y], [-s - t * x * x, -t * x * y]]
    }

    /// `|x|^gamma`.
    pub fn pressure(&self, p: [f64; 2]) -> f64 {
        p[0].hypot(p[1]).powf(self.gamma_exp)
    }

    /// Bed normal stress `-x^gamma`.
    pub fn multiplier(&self, x: f64) -> f64 {
        -x.max(0.0).powf(self.gamma_exp)
    }

    /// `u . n = -x^alpha` on the bed.
    pub fn normal_velocity(&self, x: f64) -> f64 {
        -x.max(0.0).powf(self.alpha_exp)
    }

    /// Kinematic obstacle: `-x^alpha` up to `x = 1/2`, then `-2^(-alpha)`.
    pub fn chi(&self, x: f64) -> f64 {
        if x <= 0.5 {
            self.normal_velocity(x)
        } else {
            -(2f64.powf(-self.alpha_exp))
        }
    }

    /// Stress obstacle: `lambda (4x - 1)` up to `x = 1/2`, then `lambda`.
    pub fn rho(&self, x: f64) -> f64 {
        if x <= 0.5 {
            self.multiplier(x) * (4.0 * x - 1.0)
        } else {
            self.multiplier(x)
        }
    }
}

/// Average of `f` over `[a, b]`, splitting at the kink `x = 1/2`.
fn edge_average<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let tol = 1e-15;
    let integral = if a < 0.5 && 0.5 < b {
        integrate_adaptive(&f, a, 0.5, tol) + integrate_adaptive(&f, 0.5, b, tol)
    } else {
        integrate_adaptive(&f, a, b, tol)
    };
    integral / (b - a)
}

/// Per-edge endpoints `(x_a, x_b)` of a flat bed.
fn bed_intervals(spaces: &Spaces) -> Vec<(f64, f64)> {
    spaces
        .bed_edges
        .iter()
        .map(|e| (spaces.node_coords[e.nodes[0]][0], spaces.node_coords[e.nodes[2]][0]))
        .collect()
}

/// Settings shared by every manufactured-solution solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsSettings {
    pub glen_a: f64,
    pub eps_reg: f64,
    /// Quadrature degree for the viscous operator and its Jacobian.
    pub operator_degree: usize,
    /// Quadrature degree for the load vector.
    pub load_degree: usize,
    /// Quadrature degree for error norms.
    pub error_degree: usize,
    /// Cell diagonal of the structured meshes.
    pub diagonal: Diagonal,
    pub newton: NewtonConfig,
    /// Start shear-thinning solves (`r < 2`) from the converged Newtonian
    /// solution instead of from zero.
    pub continuation: bool,
    pub exec: Execution,
}

impl Default for MmsSettings {
    fn default() -> Self {
        MmsSettings {
            glen_a: 0.5,
            eps_reg: 1e-4,
            operator_degree: crate::assembly::DEFAULT_DEGREE,
            load_degree: 10,
            error_degree: 10,
            diagonal: Diagonal::Left,
            newton: NewtonConfig::default(),
            continuation: false,
            exec: Execution::default(),
        }
    }
}

/// Discrete manufactured problem on the `n x n` unit square.
#[derive(Debug, Clone)]
pub struct MmsProblem {
    pub n: usize,
    pub mesh: Mesh,
    pub spaces: Spaces,
    pub trace: TraceOperator,
    pub b: SparseMatrix,
    pub operator: StokesOperator,
    pub exact: ExactFields,
    pub rheology: Rheology,
    pub load: Vec<f64>,
    pub constraints: Constraints,
    pub obstacles: Obstacles,
}

impl MmsProblem {
    pub fn new(n: usize, r: f64, settings: &MmsSettings) -> Result<Self> {
        let mesh = generate_unit_square_with(n, settings.diagonal)?;
        Self::on_mesh(mesh, r, settings)
    }

    /// Uses a given unit-square mesh (it must carry the unit-square tags).
    pub fn on_mesh(mesh: Mesh, r: f64, settings: &MmsSettings) -> Result<Self> {
        let rheology = Rheology::from_r(settings.glen_a, r, settings.eps_reg)?;
        let exact = ExactFields::new(r)?;
        let spaces = Spaces::new(&mesh);
        let trace = TraceOperator::new(&spaces, ContactNormal::Inward);
        let b = assemble_b(&mesh, &spaces);
        let operator = StokesOperator::with_degree(&mesh, &spaces, settings.operator_degree, settings.exec);
        let grad = |p: [f64; 2]| exact.velocity_gradient(p);
        let pressure = |p: [f64; 2]| exact.pressure(p);
        let stress = |p: [f64; 2]| exact.multiplier(p[0]);
        let fields = FieldLoad {
            velocity_gradient: &grad,
            pressure: &pressure,
            bed_stress: &stress,
        };
        let load = assemble_field_load(
            &mesh,
            &spaces,
            &rheology,
            &trace,
            &fields,
            settings.load_degree,
            settings.exec,
        )?;

        // u . n = u . (-1, 0) prescribed on {x = 0}: interpolate u_x = y^alpha.
        let mut pairs: Vec<(usize, f64)> = spaces
            .clamp_nodes
            .iter()
            .map(|&k| (2 * k, exact.velocity(spaces.node_coords[k])[0]))
            .collect();
        for &k in &spaces.noslip_nodes {
            pairs.push((2 * k, 0.0));
            pairs.push((2 * k + 1, 0.0));
        }
        let constraints = Constraints::new(pairs);

        let intervals = bed_intervals(&spaces);
        let obstacles = Obstacles {
            chi_bar: intervals
                .iter()
                .map(|&(a, b)| edge_average(|x| exact.chi(x), a, b))
                .collect(),
            rho_bar: intervals
                .iter()
                .map(|&(a, b)| edge_average(|x| exact.rho(x), a, b))
                .collect(),
        };
        Ok(MmsProblem {
            n: spaces.n_multiplier(),
            mesh,
            spaces,
            trace,
            b,
            operator,
            exact,
            rheology,
            load,
            constraints,
            obstacles,
        })
    }

    pub fn h(&self) -> f64 {
        self.mesh.max_diameter()
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

    pub fn rigid_cone(&self) -> RigidCone {
        RigidCone::vertical(&self.mesh, &self.spaces, VerticalRay::DOWN, self.rheology.r)
    }

    pub fn compatibility(&self) -> CompatibilityReport {
        compatibility_check(&self.load, &self.rigid_cone())
    }

    pub fn solve(&self, config: &NewtonConfig) -> Result<(MixedState, NewtonStats)> {
        self.solve_from(config, MixedState::for_spaces(&self.spaces))
    }

    pub fn solve_from(&self, config: &NewtonConfig, initial: MixedState) -> Result<(MixedState, NewtonStats)> {
        semismooth_newton(&self.problem(), config, initial)
    }

    pub fn metrics(&self, state: &MixedState) -> ContactMetrics {
        contact_metrics(state, &self.b, &self.trace, &self.obstacles)
    }

    /// Exact fields sampled at the velocity nodes, with the pressure and
    /// multiplier replaced by cell and edge averages.
    pub fn interpolate_exact(&self) -> MixedState {
        let u = self.spaces.interpolate(|p| self.exact.velocity(p));
        let tab = Tabulation::with_degree(10);
        let p = (0..self.mesh.num_triangles())
            .map(|t| {
                let map = AffineMap::new(self.mesh.triangle_coords(t));
                let mut acc = 0.0;
                for (pt, w) in tab.rule.points.iter().zip(&tab.rule.weights) {
                    acc += w * self.exact.pressure(map.to_physical(pt[0], pt[1]));
                }
                acc * 2.0
            })
            .collect();
        let lambda = self.exact_multiplier_averages();
        MixedState { u, p, lambda }
    }

    /// Per-edge averages of the exact bed stress.
    pub fn exact_multiplier_averages(&self) -> Vec<f64> {
        bed_intervals(&self.spaces)
            .iter()
            .map(|&(a, b)| edge_average(|x| self.exact.multiplier(x), a, b))
            .collect()
    }

    pub fn errors(&self, state: &MixedState, degree: usize) -> ErrorRecord {
        error_norms(self, state, degree)
    }
}

/// Discretization errors of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRecord {
    pub h: f64,
    /// `||D(u - u_h)||_{L^r}`.
    pub err_d: f64,
    /// `||u - u_h||_{W^{1,r}}`.
    pub err_v: f64,
    /// `||F(Du) - F(Du_h)||_{L^2}` with `F(D) = |D|^((r-2)/2) D`.
    pub err_f: f64,
    /// `||p - p_h||_{L^{r'}}`.
    pub err_p: f64,
    /// `h^(1/r') ||avg(lambda) - lambda_h||_{L^{r'}(bed)}`.
    pub err_lambda: f64,
    /// `W^{1,r}` norm of the rigid part of the velocity error.
    pub err_v_rigid: f64,
    /// `W^{1,r}` norm of the velocity error with its rigid part removed.
    pub err_v_nonrigid: f64,
}

fn f_map(d: [[f64; 2]; 2], r: f64) -> [[f64; 2]; 2] {
    let n = frob(d);
    if n == 0.0 {
        return [[0.0; 2]; 2];
    }
    let s = n.powf(0.5 * (r - 2.0));
    [[s * d[0][0], s * d[0][1]], [s * d[1][0], s * d[1][1]]]
}

fn sub(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

/// Volume norms by the given triangle rule, multiplier norm against exact
/// edge averages.
pub fn error_norms(problem: &MmsProblem, state: &MixedState, degree: usize) -> ErrorRecord {
    let r = problem.rheology.r;
    let rc = problem.rheology.r_conjugate();
    let exact = &problem.exact;
    let tab = Tabulation::with_degree(degree);
    let mut sum_d = 0.0;
    let mut sum_l = 0.0;
    let mut sum_g = 0.0;
    let mut sum_f = 0.0;
    let mut sum_p = 0.0;
    let mut gradient_part = 0.0;
    let mut samples = Samples::default();
    for t in 0..problem.mesh.num_triangles() {
        let map = AffineMap::new(problem.mesh.triangle_coords(t));
        let dofs = problem.spaces.triangle_dofs(t);
        let mut c = [0.0; DOFS];
        for (ci, &d) in c.iter_mut().zip(&dofs) {
            *ci = state.u[d];
        }
        for q in 0..tab.rule.len() {
            let [xi, eta] = tab.rule.points[q];
            let x = map.to_physical(xi, eta);
            let w = tab.rule.weights[q] * map.det;
            let dphi = tab.physical_grads(&map, q);
            let (uh, gh) = eval_velocity(&c, &tab.values[q], &dphi);
            let ue = exact.velocity(x);
            let ge = exact.velocity_gradient(x);
            let e = [ue[0] - uh[0], ue[1] - uh[1]];
            let ge_diff = sub(ge, gh);
            let de = sym(ge_diff);
            sum_d += w * frob(de).powf(r);
            let grad_r = w * frob(ge_diff).powf(r);
            sum_l += w * e[0].hypot(e[1]).powf(r);
            sum_g += grad_r;
            gradient_part += grad_r;
            let fd = sub(f_map(sym(ge), r), f_map(sym(gh), r));
            sum_f += w * frob(fd).powi(2);
            sum_p += w * (exact.pressure(x) - state.p[t]).abs().powf(rc);
            samples.weights.push(w);
            samples.values.push(e);
        }
    }
    let avg = problem.exact_multiplier_averages();
    let h = problem.h();
    let sum_lambda: f64 = problem
        .spaces
        .bed_edges
        .iter()
        .enumerate()
        .map(|(i, e)| e.length * (avg[i] - state.lambda[i]).abs().powf(rc))
        .sum();

    let projection = project_vertical(&samples, r, VerticalRay::DOWN);
    let area = problem.mesh.total_area();
    ErrorRecord {
        h,
        err_d: sum_d.powf(1.0 / r),
        err_v: (sum_l + sum_g).powf(1.0 / r),
        err_f: sum_f.sqrt(),
        err_p: sum_p.powf(1.0 / rc),
        err_lambda: h.powf(1.0 / rc) * sum_lambda.powf(1.0 / rc),
        err_v_rigid: projection.theta.abs() * area.powf(1.0 / r),
        err_v_nonrigid: (projection.objective + gradient_part).powf(1.0 / r),
    }
}

/// One `(r, n)` entry of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelResult {
    pub r: f64,
    pub n: usize,
    pub errors: ErrorRecord,
    pub newton_iters: usize,
    pub metrics: ContactMetrics,
    pub compatibility: CompatibilityReport,
    pub residuals: Vec<f64>,
}

/// Observed orders `log2(e_h / e_{h/2})` between consecutive entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Orders {
    pub d: f64,
    pub v: f64,
    pub f: f64,
    pub p: f64,
    pub lambda: f64,
}

fn order(coarse: f64, fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (coarse / fine).ln() / (h_coarse / h_fine).ln()
}

pub fn orders(coarse: &ErrorRecord, fine: &ErrorRecord) -> Orders {
    let o = |a: f64, b: f64| order(a, b, coarse.h, fine.h);
    Orders {
        d: o(coarse.err_d, fine.err_d),
        v: o(coarse.err_v, fine.err_v),
        f: o(coarse.err_f, fine.err_f),
        p: o(coarse.err_p, fine.err_p),
        lambda: o(coarse.err_lambda, fine.err_lambda),
    }
}

/// Solves the manufactured problem for one exponent and mesh.
pub fn solve_level(r: f64, n: usize, settings: &MmsSettings) -> Result<LevelResult> {
    let problem = MmsProblem::new(n, r, settings)?;
    let mut initial = MixedState::for_spaces(&problem.spaces);
    let mut warm_iters = 0;
    if settings.continuation && r < 2.0 {
        let newtonian = MmsProblem::new(n, 2.0, settings)?;
        let (state, stats) = newtonian
            .solve(&settings.newton)
            .map_err(|e| e.context(format!("Newtonian start for r = {r}, n = {n}")))?;
        warm_iters = stats.iterations;
        initial = state;
    }
    let mut config = settings.newton.clone();
    if warm_iters > 0 {
        config.active_set_seed = ActiveSetSeed::FromState;
    }
    let (state, stats) = problem
        .solve_from(&config, initial)
        .map_err(|e| e.context(format!("r = {r}, n = {n}")))?;
    Ok(LevelResult {
        r,
        n,
        errors: problem.errors(&state, settings.error_degree),
        newton_iters: stats.iterations,
        metrics: problem.metrics(&state),
        compatibility: problem.compatibility(),
        residuals: stats.residuals,
    })
}

/// Solves every `(r, n)` pair (concurrently when parallel execution is
/// selected) and returns the results grouped by `r`, each group ordered by
/// increasing `n`.
pub fn convergence_study(rs: &[f64], levels: &[usize], settings: &MmsSettings) -> Result<Vec<Vec<LevelResult>>> {
    if levels.len() < 2 {
        return Err(Error::InvalidInput(
            "a convergence study needs at least two levels".into(),
        ));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_unstable();
    let jobs: Vec<(f64, usize)> = rs.iter().flat_map(|&r| sorted.iter().map(move |&n| (r, n))).collect();
    // Element loops run sequentially inside each job; the jobs themselves are
    // the parallel unit.
    let inner = MmsSettings {
        exec: Execution::Sequential,
        ..settings.clone()
    };
    let results = map_slice(settings.exec, &jobs, |&(r, n)| solve_level(r, n, &inner));
    let mut grouped: Vec<Vec<LevelResult>> = Vec::with_capacity(rs.len());
    let mut it = results.into_iter();
    for _ in rs {
        let mut group = Vec::with_capacity(sorted.len());
        for _ in &sorted {
            group.push(it.next().expect("one result per job")?);
        }
        grouped.push(group);
    }
    Ok(grouped)
}

/// Convergence table in CSV form, one row per `(r, n)`; orders are empty on
/// the coarsest row of each exponent.
pub fn convergence_csv(groups: &[Vec<LevelResult>]) -> String {
    let mut out = String::from("r,h,err_D,order_D,err_V,order_V,err_p,order_p,err_lambda,order_lambda,newton_iters\n");
    let num = |x: f64| format!("{x:.11e}");
    for group in groups {
        for (k, level) in group.iter().enumerate() {
            let e = &level.errors;
            let o = (k > 0).then(|| orders(&group[k - 1].errors, e));
            let ord = |f: fn(&Orders) -> f64| o.as_ref().map(|o| num(f(o))).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                num(level.r),
                num(e.h),
                num(e.err_d),
                ord(|o| o.d),
                num(e.err_v),
                ord(|o| o.v),
                num(e.err_p),
                ord(|o| o.p),
                num(e.err_lambda),
                ord(|o| o.lambda),
                level.newton_iters
            ));
        }
    }
    out
}

/// The exponents `r = 1 + 1/n` for Glen exponents `n = 1, 2, 3, 4`.
pub fn default_exponents() -> Vec<f64> {
    (1..=4).map(|n| 1.0 + 1.0 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_field_examples() {
        let ex = ExactFields::new(2.0).unwrap();
        assert_eq!(ex.velocity([1.0, 0.0]), [0.0, -1.0]);
        assert!((ex.gamma_exp - 0.01).abs() < 1e-15);
        assert_eq!(ex.pressure([1.0, 0.0]), 1.0);
        assert!((ex.chi(0.75) + 0.4965).abs() < 1e-4);
        assert!(ExactFields::new(2.5).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ex = ExactFields::new(1.5).unwrap();
        let h = 1e-6;
        for p in [[0.3, 0.2], [0.9, 0.05], [0.1, 0.7]] {
            let g = ex.velocity_gradient(p);
            for j in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[j] += h;
                pm[j] -= h;
                let (up, um) = (ex.velocity(pp), ex.velocity(pm));
                for i in 0..2 {
                    let fd = (up[i] - um[i]) / (2.0 * h);
                    assert!((fd - g[i][j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn exact_state_satisfies_contact_conditions() {
        let ex = ExactFields::new(1.25).unwrap();
        for k in 1..100 {
            let x = k as f64 / 100.0;
            let gap = ex.normal_velocity(x) - ex.chi(x);
            let dl = ex.multiplier(x) - ex.rho(x);
            assert!(gap <= 1e-15 && dl <= 1e-15 && (gap * dl).abs() < 1e-15);
        }
    }

    #[test]
    fn obstacle_averages_on_aligned_edges() {
        let settings = MmsSettings::default();
        let pb = MmsProblem::new(4, 2.0, &settings).unwrap();
        let a = pb.exact.alpha_exp;
        // chi on [0.75, 1] is constant.
        assert!((pb.obstacles.chi_bar[3] + 2f64.powf(-a)).abs() < 1e-14);
        // chi on [0, 0.25] averages -x^a: -(0.25^(a+1)/(a+1))/0.25.
        let expect = -(0.25f64.powf(a + 1.0) / (a + 1.0)) / 0.25;
        assert!((pb.obstacles.chi_bar[0] - expect).abs() < 1e-13);
    }

    #[test]
    fn orders_of_exact_power_law() {
        let e = |h: f64| ErrorRecord {
            h,
            err_d: h,
            err_v: h * h,
            err_f: h,
            err_p: h.sqrt(),
            err_lambda: h,
            ..Default::default()
        };
        let o = orders(&e(0.2), &e(0.1));
        assert!((o.d - 1.0).abs() < 1e-12 && (o.v - 2.0).abs() < 1e-12 && (o.p - 0.5).abs() < 1e-12);
    }
}
