//! Fast invariant suites behind the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rstokes::assembly::StokesOperator;
use rstokes::cavity::{self, CavityConfig, CavityProblem};
use rstokes::mesh::generate_unit_square;
use rstokes::rigid::{project_vertical, Samples, VerticalRay};
use rstokes::verification::{default_exponents, MmsProblem, MmsSettings};
use rstokes::{Execution, Rheology, Spaces};

use crate::error::CliError;

pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn contact(settings: &MmsSettings) -> Result<SuiteResult, CliError> {
    let mut worst: f64 = 0.0;
    let mut div: f64 = 0.0;
    let mut pairing = f64::NEG_INFINITY;
    for r in default_exponents() {
        let problem = MmsProblem::new(8, r, settings)?;
        let (state, _) = problem.solve(&settings.newton)?;
        let m = problem.metrics(&state);
        worst = worst.max(m.worst_contact());
        div = div.max(m.divergence);
        pairing = pairing.max(
            problem
                .compatibility()
                .pairings
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
        );
    }
    Ok(SuiteResult {
        name: "mms-contact",
        passed: worst <= 1e-10 && div <= 1e-10 && pairing < 0.0,
        detail: format!("contact residual {worst:.1e}, divergence {div:.1e}, max pairing {pairing:.3e}"),
    })
}

fn jacobian(rng: &mut ChaCha8Rng) -> Result<SuiteResult, CliError> {
    let mesh = generate_unit_square(3)?;
    let spaces = Spaces::new(&mesh);
    let op = StokesOperator::new(&mesh, &spaces, Execution::Sequential);
    let (mut worst, mut asym): (f64, f64) = (0.0, 0.0);
    let h = 1e-6;
    for k in 0..20 {
        let rheology = Rheology::from_r(0.5, default_exponents()[k % 4], 1e-4)?;
        let u: Vec<f64> = (0..op.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..op.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jac = op.jacobian(&rheology, &u)?;
        let jv = jac.mul_vec(&v);
        let at = |t: f64| -> Result<Vec<f64>, CliError> {
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            Ok(op.residual(&rheology, &w)?)
        };
        let (p, m) = (at(h)?, at(-h)?);
        let err: f64 = (0..jv.len())
            .map(|i| ((p[i] - m[i]) / (2.0 * h) - jv[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = jv.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
        asym = asym.max(jac.max_asymmetry());
    }
    Ok(SuiteResult {
        name: "jacobian",
        passed: worst <= 1e-6 && asym <= 1e-12,
        detail: format!("finite-difference error {worst:.1e}, asymmetry {asym:.1e}"),
    })
}

fn projection(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut err: f64 = 0.0;
    let mut clamped = true;
    for _ in 0..20 {
        let n = 40;
        let shift = rng.random_range(-1.0..1.0);
        let samples = Samples {
            weights: (0..n).map(|_| rng.random_range(0.1..1.0)).collect(),
            values: (0..n)
                .map(|_| [rng.random_range(-1.0..1.0), shift + rng.random_range(-1.0..1.0)])
                .collect(),
        };
        let total: f64 = samples.weights.iter().sum();
        let mean = samples
            .weights
            .iter()
            .zip(&samples.values)
            .map(|(w, v)| w * v[1])
            .sum::<f64>()
            / total;
        for ray in [VerticalRay::DOWN, VerticalRay::UP] {
            let expected = if ray.sign * mean >= 0.0 { mean } else { 0.0 };
            err = err.max((project_vertical(&samples, 2.0, ray).theta - expected).abs());
            for r in default_exponents() {
                let p = project_vertical(&samples, r, ray);
                clamped &= ray.sign * p.theta >= 0.0;
                let rigid = Samples {
                    weights: samples.weights.clone(),
                    values: vec![[0.0, p.theta]; n],
                };
                err = err.max((project_vertical(&rigid, r, ray).theta - p.theta).abs());
            }
        }
    }
    SuiteResult {
        name: "rigid-projection",
        passed: err <= 1e-9 && clamped,
        detail: format!("idempotence and closed-form error {err:.1e}"),
    }
}

fn cavity_short() -> Result<SuiteResult, CliError> {
    let config = CavityConfig {
        nx: 16,
        ny: 16,
        dt: 0.05,
        t_end: 0.2,
        ..CavityConfig::default()
    };
    let mut worst: f64 = 0.0;
    let mut max_lambda = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut compatible = true;
    cavity::run_with(&config, |_, r| {
        worst = worst.max(r.metrics.worst_contact());
        max_lambda = max_lambda.max(r.max_lambda);
        min_gap = min_gap.min(r.min_gap);
        compatible &= r.compatibility.passed;
    })?;
    let zero = CavityConfig { p_e: 0.0, ..config };
    let (base, bed) = cavity::initial_geometry(&zero)?;
    let zero_rejected = !CavityProblem::new(base, &bed, &zero)?.compatibility().passed;
    Ok(SuiteResult {
        name: "cavity",
        passed: worst <= 1e-10 && max_lambda <= 0.0 && min_gap >= 0.0 && compatible && zero_rejected,
        detail: format!(
            "contact residual {worst:.1e}, max lambda {max_lambda:.1e}, min gap {min_gap:.1e}, p_e = 0 rejected: {zero_rejected}"
        ),
    })
}

pub fn run_all(settings: &MmsSettings, seed: u64) -> Result<Vec<SuiteResult>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        contact(settings)?,
        jacobian(&mut rng)?,
        projection(&mut rng),
        cavity_short()?,
    ])
}
