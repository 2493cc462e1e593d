// Negated comparisons are used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod check;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rstokes::cavity;
use rstokes::mesh::generate_unit_square_with;
use rstokes::verification::{convergence_csv, convergence_study, orders, MmsProblem};
use rstokes::Mesh;
use serde_json::json;

use config::Settings;
use error::CliError;
use output::num;

const VERSION: &str = env!("RSTOKES_VERSION");

#[derive(Debug, Parser)]
#[command(name = "rstokes", version = VERSION, about = "Nonlinear Stokes flow with unilateral contact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML file with parameter values; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (converge) or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the manufactured problem once.
    SolveMms(Common),
    /// Convergence study over exponents and uniformly refined meshes.
    Converge(Common),
    /// Subglacial cavity time stepping.
    Cavity(Common),
    /// Run the invariant suites; exit code 3 on failure.
    Check(Common),
}

impl Common {
    fn resolve(&self) -> Result<Settings, CliError> {
        let file = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        Ok(file.overlay(self.settings.clone()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SolveMms(c) => solve_mms(&c.resolve()?, c.out.as_deref()),
        Command::Converge(c) => converge(&c.resolve()?, c.out.as_deref()),
        Command::Cavity(c) => run_cavity(&c.resolve()?, c.out.as_deref()),
        Command::Check(c) => run_check(&c.resolve()?),
    }
}

/// Writes the run manifest and the resolved configuration next to `out`.
fn write_manifest(
    out: &Path,
    subcommand: &str,
    config: &Settings,
    timings: serde_json::Value,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    output::write(&output::config_path(out), &config.to_toml())?;
    output::write(
        &output::manifest_path(out),
        &manifest(subcommand, config, timings, extra),
    )
}

fn manifest(subcommand: &str, config: &Settings, timings: serde_json::Value, extra: serde_json::Value) -> String {
    let doc = json!({
        "program": "rstokes",
        "version": VERSION,
        "subcommand": subcommand,
        "config": config,
        "timings_s": timings,
        "results": extra,
    });
    serde_json::to_string_pretty(&doc).expect("manifest serializes") + "\n"
}

fn save_mesh(settings: &Settings, mesh: &Mesh) -> Result<(), CliError> {
    if let Some(path) = &settings.save_mesh {
        mesh.save(path)?;
    }
    Ok(())
}

fn solve_mms(settings: &Settings, out: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let mms = settings.mms()?;
    let rs = settings.exponents()?;
    let [r] = rs[..] else {
        return Err(CliError::Usage("solve-mms takes a single exponent".into()));
    };
    let r = if settings.r.is_none() && settings.glen_n.is_none() {
        2.0
    } else {
        r
    };
    let n = settings.n.unwrap_or(8);
    let mesh = match &settings.mesh {
        Some(path) => Mesh::load(path)?,
        None => generate_unit_square_with(n, mms.diagonal)?,
    };
    save_mesh(settings, &mesh)?;
    let problem = MmsProblem::on_mesh(mesh, r, &mms)?;
    let (state, stats) = problem.solve(&mms.newton)?;
    let errors = problem.errors(&state, mms.error_degree);
    let metrics = problem.metrics(&state);
    let compat = problem.compatibility();
    let elapsed = start.elapsed().as_secs_f64();

    println!(
        "r = {r}, h = {:.3e}: {} Newton iterations, err_D = {:.4e}, err_V = {:.4e}, err_p = {:.4e}, err_lambda = {:.4e}",
        errors.h, stats.iterations, errors.err_d, errors.err_v, errors.err_p, errors.err_lambda
    );
    if let Some(dir) = out {
        output::write(&dir.join("newton.csv"), &output::newton_csv(&stats))?;
        let summary = format!(
            "r,h,err_D,err_V,err_p,err_lambda,newton_iters,feasibility,sign,complementarity,divergence,compat_pairing,compat_passed\n{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            num(r),
            num(errors.h),
            num(errors.err_d),
            num(errors.err_v),
            num(errors.err_p),
            num(errors.err_lambda),
            stats.iterations,
            num(metrics.feasibility),
            num(metrics.sign),
            num(metrics.complementarity),
            num(metrics.divergence),
            num(compat.pairings[0]),
            compat.passed
        );
        output::write(&dir.join("summary.csv"), &summary)?;
        output::write(
            &dir.join("solution.vtk"),
            &output::vtk(
                "manufactured solution",
                &problem.mesh,
                &problem.spaces,
                &state.u,
                &state.p,
            ),
        )?;
        let mut resolved = Settings::from_mms(&mms, &[r]);
        resolved.n = Some(n);
        resolved.mesh = settings.mesh.clone();
        write_manifest(
            dir,
            "solve-mms",
            &resolved,
            json!({ "total": elapsed }),
            json!({ "newton_iters": stats.iterations, "compatibility_pairing": compat.pairings, "compatibility_passed": compat.passed }),
        )?;
    }
    Ok(())
}

fn converge(settings: &Settings, out: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let mms = settings.mms()?;
    let rs = settings.exponents()?;
    let levels = settings.level_sizes()?;
    let groups = convergence_study(&rs, &levels, &mms)?;
    let csv = convergence_csv(&groups);
    let elapsed = start.elapsed().as_secs_f64();

    for group in &groups {
        for k in 1..group.len() {
            let o = orders(&group[k - 1].errors, &group[k].errors);
            println!(
                "r = {:.4}, h = {:.3e}: orders D {:.3}, V {:.3}, p {:.3}, lambda {:.3}",
                group[k].r, group[k].errors.h, o.d, o.v, o.p, o.lambda
            );
        }
    }
    let incompatible = groups.iter().flatten().filter(|l| !l.compatibility.passed).count();
    match out {
        Some(path) => {
            output::write(path, &csv)?;
            let mut resolved = Settings::from_mms(&mms, &rs);
            resolved.levels = Some(levels.len());
            resolved.base_n = Some(levels[0]);
            write_manifest(
                path,
                "converge",
                &resolved,
                json!({ "total": elapsed }),
                json!({ "levels": levels, "incompatible_solves": incompatible }),
            )?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run_cavity(settings: &Settings, out: Option<&Path>) -> Result<(), CliError> {
    let start = Instant::now();
    let config = settings.cavity()?;
    if config.courant() > 1.0 {
        eprintln!(
            "warning: Courant number u_i dt nx = {:.2} exceeds 1; the roof update may be unstable (reduce dt)",
            config.courant()
        );
    }
    let out = out.unwrap_or(Path::new("cavity_out"));
    if settings.save_mesh.is_some() {
        save_mesh(settings, &cavity::initial_geometry(&config)?.0)?;
    }
    let mut summary = String::from(output::summary_header());
    let run = cavity::run_with(&config, |_, r| summary.push_str(&output::summary_row(r)))?;
    let elapsed = start.elapsed().as_secs_f64();

    output::write(&out.join("summary.csv"), &summary)?;
    let mut files = Vec::new();
    for (t, state) in &run.snapshots {
        let roof = output::snapshot_name("roof", *t, "csv");
        let fields = output::snapshot_name("fields", *t, "vtk");
        output::write(&out.join(&roof), &output::roof_csv(state))?;
        let spaces = rstokes::Spaces::new(&state.mesh);
        output::write(
            &out.join(&fields),
            &output::vtk(
                &format!("cavity t = {t}"),
                &state.mesh,
                &spaces,
                &state.solution.u,
                &state.pressure,
            ),
        )?;
        files.push(roof);
        files.push(fields);
    }
    let extent = run.last.cavity_extent();
    let (edge, peak) = run.last.lambda_peak();
    let resolved = Settings::from_cavity(&config, settings.seed);
    write_manifest(
        out,
        "cavity",
        &resolved,
        json!({ "total": elapsed }),
        json!({
            "steady_criterion": format!("max |Gamma u| < {}", config.steady_tol),
            "steady_time": run.steady_time,
            "final_time": run.last.time,
            "steps": run.reports.len(),
            "courant": config.courant(),
            "cavity_volume": run.last.volume(),
            "detach_x": extent.map(|e| e.detach_x),
            "reattach_x": extent.map(|e| e.reattach_x),
            "lambda_min": peak,
            "lambda_min_edge": edge,
            "reattachment_peak": run.last.reattachment_peak(0.05).map(|p| p.1),
            "files": files,
        }),
    )?;
    println!(
        "{} steps to t = {:.4}, steady at {}, cavity volume {:.4e}, {:.1} s",
        run.reports.len(),
        run.last.time,
        run.steady_time.map_or("-".to_string(), |t| format!("{t:.4}")),
        run.last.volume(),
        elapsed
    );
    Ok(())
}

fn run_check(settings: &Settings) -> Result<(), CliError> {
    let results = check::run_all(&settings.mms()?, settings.seed.unwrap_or(0))?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    for r in &results {
        println!("{}: {} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failed.join(", ")))
    }
}
