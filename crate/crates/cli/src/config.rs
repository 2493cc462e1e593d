//! Run parameters: a flat TOML file overlaid with command-line flags.
//!
//! Every field is optional at this level. Missing values fall back to the
//! defaults of the experiment being run, so an empty file and no flags
//! reproduce the published settings.

use std::path::{Path, PathBuf};

use clap::Args;
use rstokes::cavity::{CavityConfig, ContactRule};
use rstokes::verification::{default_exponents, MmsSettings};
use rstokes::{Diagonal, Execution, NewtonConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Glen fluidity A.
    #[arg(long = "glen_a", alias = "glen-a")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glen_a: Option<f64>,
    /// Glen exponent n (r = 1 + 1/n); must be at least 1.
    #[arg(long = "glen_n", alias = "glen-n")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glen_n: Option<f64>,
    /// Viscosity regularization epsilon.
    #[arg(long = "eps_reg", alias = "eps-reg")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_reg: Option<f64>,

    /// Absolute tolerance on the Newton residual.
    #[arg(long = "newton_tol", alias = "newton-tol")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[arg(long = "newton_max_iters", alias = "newton-max-iters")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub newton_max_iters: Option<usize>,
    /// Complementarity scaling c > 0.
    #[arg(long = "c_comp", alias = "c-comp")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_comp: Option<f64>,
    #[arg(long = "line_search", alias = "line-search")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line_search: Option<bool>,
    /// Run element loops and independent solves on one thread.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequential: Option<bool>,
    /// Seed for the randomized checks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Exponents r, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    /// Cells per side of the unit square (solve-mms).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of refinement levels (converge).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    /// Cells per side on the coarsest level (converge).
    #[arg(long = "base_n", alias = "base-n")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_n: Option<usize>,
    /// Start r < 2 solves from the Newtonian solution.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuation: Option<bool>,
    /// Cell diagonal of the unit-square meshes: `left` or `right`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagonal: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nx: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ny: Option<usize>,
    /// Peak-to-trough bed amplitude.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Sliding velocity imposed on the top surface.
    #[arg(long = "u_i", alias = "u-i")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_i: Option<f64>,
    /// Effective pressure.
    #[arg(long = "p_e", alias = "p-e")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_e: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[arg(long = "t_end", alias = "t-end")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    /// Stop once max |Gamma u| falls below this value.
    #[arg(long = "steady_tol", alias = "steady-tol")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_tol: Option<f64>,
    /// Snapshot times, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Vec<f64>>,
    /// Roof constraint: `kinematic` or `attached`.
    #[arg(long = "contact_rule", alias = "contact-rule")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact_rule: Option<String>,

    /// Mesh file to solve on (solve-mms).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    /// Write the mesh used by the run to this file.
    #[arg(long = "save_mesh", alias = "save-mesh")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub save_mesh: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        Settings { $($field: $top.$field.or($base.$field),)* }
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("settings serialize to TOML")
    }

    /// Values set in `top` win over those in `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        overlay!(
            self,
            top,
            glen_a,
            glen_n,
            eps_reg,
            newton_tol,
            newton_max_iters,
            c_comp,
            line_search,
            sequential,
            seed,
            r,
            n,
            levels,
            base_n,
            continuation,
            diagonal,
            nx,
            ny,
            amplitude,
            u_i,
            p_e,
            dt,
            t_end,
            steady_tol,
            snapshots,
            contact_rule,
            mesh,
            save_mesh,
        )
    }

    fn exec(&self) -> Execution {
        if self.sequential.unwrap_or(false) {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    pub fn newton(&self) -> Result<NewtonConfig, CliError> {
        let d = NewtonConfig::default();
        let config = NewtonConfig {
            tol_residual: self.newton_tol.unwrap_or(d.tol_residual),
            max_iters: self.newton_max_iters.unwrap_or(d.max_iters),
            c_comp: self.c_comp.unwrap_or(d.c_comp),
            line_search: self.line_search.unwrap_or(d.line_search),
            ..d
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    fn check_glen_n(&self) -> Result<(), CliError> {
        match self.glen_n {
            Some(n) if !(n >= 1.0 && n.is_finite()) => Err(CliError::Usage(format!("glen_n must be >= 1, got {n}"))),
            _ => Ok(()),
        }
    }

    /// Exponents of a manufactured-solution run. An explicit `r` list wins;
    /// otherwise `glen_n` selects a single exponent.
    pub fn exponents(&self) -> Result<Vec<f64>, CliError> {
        self.check_glen_n()?;
        let rs = match (&self.r, self.glen_n) {
            (Some(r), _) => r.clone(),
            (None, Some(n)) => vec![1.0 + 1.0 / n],
            (None, None) => default_exponents(),
        };
        if rs.is_empty() {
            return Err(CliError::Usage("r list is empty".into()));
        }
        if let Some(r) = rs.iter().find(|r| !(**r > 1.0 && **r <= 2.0)) {
            return Err(CliError::Usage(format!("r must lie in (1, 2], got {r}")));
        }
        Ok(rs)
    }

    pub fn mms(&self) -> Result<MmsSettings, CliError> {
        self.check_glen_n()?;
        let d = MmsSettings::default();
        let diagonal = match self.diagonal.as_deref() {
            None => d.diagonal,
            Some("left") => Diagonal::Left,
            Some("right") => Diagonal::Right,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "diagonal must be `left` or `right`, got `{other}`"
                )))
            }
        };
        let settings = MmsSettings {
            glen_a: self.glen_a.unwrap_or(d.glen_a),
            eps_reg: self.eps_reg.unwrap_or(d.eps_reg),
            diagonal,
            newton: self.newton()?,
            continuation: self.continuation.unwrap_or(d.continuation),
            exec: self.exec(),
            ..d
        };
        if !(settings.glen_a > 0.0) || !(settings.eps_reg >= 0.0) {
            return Err(CliError::Usage(
                "glen_a must be positive and eps_reg non-negative".into(),
            ));
        }
        Ok(settings)
    }

    /// Mesh sizes `base_n * 2^k` for `k < levels`.
    pub fn level_sizes(&self) -> Result<Vec<usize>, CliError> {
        let levels = self.levels.unwrap_or(4);
        let base = self.base_n.unwrap_or(4);
        if levels < 2 || base == 0 || levels > 12 {
            return Err(CliError::Usage(format!(
                "need 2 <= levels <= 12 and base_n >= 1, got {levels} and {base}"
            )));
        }
        Ok((0..levels).map(|k| base << k).collect())
    }

    pub fn cavity(&self) -> Result<CavityConfig, CliError> {
        self.check_glen_n()?;
        let d = CavityConfig::default();
        let contact_rule = match self.contact_rule.as_deref() {
            None => d.contact_rule,
            Some(name) => ContactRule::from_name(name).ok_or_else(|| {
                CliError::Usage(format!("contact_rule must be `kinematic` or `attached`, got `{name}`"))
            })?,
        };
        let config = CavityConfig {
            nx: self.nx.unwrap_or(d.nx),
            ny: self.ny.unwrap_or(d.ny),
            amplitude: self.amplitude.unwrap_or(d.amplitude),
            glen_a: self.glen_a.unwrap_or(d.glen_a),
            glen_n: self.glen_n.unwrap_or(d.glen_n),
            eps_reg: self.eps_reg.unwrap_or(d.eps_reg),
            u_i: self.u_i.unwrap_or(d.u_i),
            p_e: self.p_e.unwrap_or(d.p_e),
            dt: self.dt.unwrap_or(d.dt),
            t_end: self.t_end.unwrap_or(d.t_end),
            steady_tol: self.steady_tol.unwrap_or(d.steady_tol),
            snapshots: self.snapshots.clone().unwrap_or(d.snapshots),
            contact_rule,
            newton: self.newton()?,
            exec: self.exec(),
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }

    /// Fully specified settings for a cavity run, suitable for `--config`.
    pub fn from_cavity(c: &CavityConfig, seed: Option<u64>) -> Settings {
        Settings {
            glen_a: Some(c.glen_a),
            glen_n: Some(c.glen_n),
            eps_reg: Some(c.eps_reg),
            seed,
            nx: Some(c.nx),
            ny: Some(c.ny),
            amplitude: Some(c.amplitude),
            u_i: Some(c.u_i),
            p_e: Some(c.p_e),
            dt: Some(c.dt),
            t_end: Some(c.t_end),
            steady_tol: Some(c.steady_tol),
            snapshots: Some(c.snapshots.clone()),
            contact_rule: Some(c.contact_rule.name().to_string()),
            ..Settings::from_newton(&c.newton, c.exec)
        }
    }

    /// Fully specified settings for a manufactured-solution run.
    pub fn from_mms(s: &MmsSettings, rs: &[f64]) -> Settings {
        Settings {
            glen_a: Some(s.glen_a),
            eps_reg: Some(s.eps_reg),
            r: Some(rs.to_vec()),
            continuation: Some(s.continuation),
            diagonal: Some(
                match s.diagonal {
                    Diagonal::Left => "left",
                    Diagonal::Right => "right",
                }
                .to_string(),
            ),
            ..Settings::from_newton(&s.newton, s.exec)
        }
    }

    fn from_newton(n: &NewtonConfig, exec: Execution) -> Settings {
        Settings {
            newton_tol: Some(n.tol_residual),
            newton_max_iters: Some(n.max_iters),
            c_comp: Some(n.c_comp),
            line_search: Some(n.line_search),
            sequential: Some(exec == Execution::Sequential),
            ..Settings::default()
        }
    }
}
