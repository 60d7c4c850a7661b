//! Run configuration: a JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use cusp_spectra::bound::{NumericPoincareConfig, PoincareStrategy, SearchConfig};
use cusp_spectra::eigen::{InnerConfig, SolverConfig};
use cusp_spectra::BoundParams;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bound,
    Solve,
    Verify,
    Sweep,
    MeshInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainSection {
    pub gamma1: f64,
    pub n: usize,
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { gamma1: 2.0, n: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            p: 2.0,
            q: 2.0,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    #[serde(rename = "N")]
    pub n: usize,
    /// `None` picks `max(1, γ_1)`.
    pub kappa: Option<f64>,
}

impl Default for MeshSection {
    fn default() -> Self {
        Self { n: 32, kappa: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Inverse iteration for `q = 2`, nonlinear inverse power method otherwise.
    #[default]
    Iterative,
    /// Dense generalized eigensolve; `p = q = 2` only.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Method,
    /// Seed of a random start; `None` uses the smooth default start.
    pub start_seed: Option<u64>,
    pub max_iter: usize,
    pub tol: f64,
    pub weak_tol: f64,
    pub collapse_tol: f64,
    pub inner: InnerConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            method: Method::default(),
            start_seed: None,
            max_iter: s.max_iter,
            tol: s.tol,
            weak_tol: s.weak_tol,
            collapse_tol: s.collapse_tol,
            inner: s.inner,
        }
    }
}

impl SolverSection {
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            weak_tol: self.weak_tol,
            collapse_tol: self.collapse_tol,
            inner: self.inner,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoincareSection {
    pub strategy: PoincareStrategy,
    /// Required by the `user` strategy.
    pub value: Option<f64>,
    /// Whether a user value is a proven bound.
    pub certified: bool,
    /// Level of the reference-triangle mesh for `numeric_lower`.
    #[serde(rename = "N")]
    pub n: usize,
    pub numeric: NumericPoincareConfig,
}

impl Default for PoincareSection {
    fn default() -> Self {
        Self {
            strategy: PoincareStrategy::NumericLower,
            value: None,
            certified: false,
            n: 8,
            numeric: NumericPoincareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// `None`: 0 for a certified constant, 0.1 otherwise.
    pub slack: Option<f64>,
}

/// Grids for `sweep`; an empty list means the single base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub gamma1: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub domain: DomainSection,
    pub problem: ProblemSection,
    pub mesh: MeshSection,
    pub solver: SolverSection,
    pub search: SearchConfig,
    pub poincare: PoincareSection,
    /// Evaluate the bound at this `(a, s, r)` instead of optimizing.
    pub fixed: Option<BoundParams>,
    pub verify: VerifySection,
    pub sweep: SweepSection,
    pub out: Option<PathBuf>,
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub gamma1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Mesh level.
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub start_seed: Option<u64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub weak_tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kkt_tol: Option<f64>,
    #[arg(long)]
    pub grid_a: Option<usize>,
    #[arg(long)]
    pub grid_s: Option<usize>,
    #[arg(long)]
    pub grid_r: Option<usize>,
    #[arg(long)]
    pub golden_passes: Option<usize>,
    /// Poincaré constant provider: user, payne_weinberger or numeric_lower.
    #[arg(long, value_parser = parse_strategy)]
    pub poincare: Option<PoincareStrategy>,
    /// Value of B for the user provider.
    #[arg(long, allow_hyphen_values = true)]
    pub b_value: Option<f64>,
    #[arg(long)]
    pub b_certified: Option<bool>,
    /// Reference mesh level for the numeric provider.
    #[arg(long = "poincare-N")]
    pub poincare_n: Option<usize>,
    #[arg(long)]
    pub poincare_starts: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub slack: Option<f64>,
    /// Comma-separated sweep grid.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep_gamma1: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep_p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep_q: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep_alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<PoincareStrategy, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown strategy {s:?} (user, payne_weinberger, numeric_lower)"))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("config: {e}")))
    }

    /// Load the file (if any), apply the flags and validate.
    pub fn resolve(command: Command, o: &Overrides) -> Result<Self, CliError> {
        let mut c = match &o.config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        c.command = Some(command);
        c.apply(o)?;
        c.validate()?;
        Ok(c)
    }

    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        set(&mut self.domain.gamma1, o.gamma1);
        set(&mut self.problem.p, o.p);
        set(&mut self.problem.q, o.q);
        set(&mut self.problem.alpha, o.alpha);
        set(&mut self.mesh.n, o.n);
        if o.kappa.is_some() {
            self.mesh.kappa = o.kappa;
        }
        set(&mut self.solver.method, o.method);
        if o.start_seed.is_some() {
            self.solver.start_seed = o.start_seed;
        }
        set(&mut self.solver.max_iter, o.max_iter);
        set(&mut self.solver.tol, o.tol);
        set(&mut self.solver.weak_tol, o.weak_tol);
        set(&mut self.solver.inner.kkt_tol, o.kkt_tol);
        set(&mut self.search.grid_a, o.grid_a);
        set(&mut self.search.grid_s, o.grid_s);
        set(&mut self.search.grid_r, o.grid_r);
        set(&mut self.search.golden_passes, o.golden_passes);
        set(&mut self.poincare.strategy, o.poincare);
        if o.b_value.is_some() {
            self.poincare.value = o.b_value;
        }
        set(&mut self.poincare.certified, o.b_certified);
        set(&mut self.poincare.n, o.poincare_n);
        set(&mut self.poincare.numeric.starts, o.poincare_starts);
        match (o.a, o.s, o.r) {
            (None, None, None) => {}
            (Some(a), Some(s), Some(r)) => self.fixed = Some(BoundParams::new(a, s, r)),
            _ => return Err(CliError::Invalid("--a, --s and --r must be given together".into())),
        }
        if o.slack.is_some() {
            self.verify.slack = o.slack;
        }
        set(&mut self.sweep.gamma1, o.sweep_gamma1.clone());
        set(&mut self.sweep.p, o.sweep_p.clone());
        set(&mut self.sweep.q, o.sweep_q.clone());
        set(&mut self.sweep.alpha, o.sweep_alpha.clone());
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        Ok(())
    }

    /// Plumbing checks; the parameter theory is checked by each command.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                bad.push(format!("{name} = {v} must be positive and finite"));
            }
        };
        positive("solver.tol", self.solver.tol);
        positive("solver.weak_tol", self.solver.weak_tol);
        positive("solver.collapse_tol", self.solver.collapse_tol);
        positive("solver.inner.tol", self.solver.inner.tol);
        positive("solver.inner.kkt_tol", self.solver.inner.kkt_tol);
        positive("solver.inner.eps_min", self.solver.inner.eps_min);
        positive("solver.inner.cg_tol", self.solver.inner.cg_tol);
        positive("search.tol", self.search.tol);
        positive("poincare.numeric.tol", self.poincare.numeric.tol);
        if !(self.solver.inner.eps_rho > 0.0 && self.solver.inner.eps_rho < 1.0) {
            bad.push(format!("solver.inner.eps_rho = {} must lie in (0, 1)", self.solver.inner.eps_rho));
        }
        if !(self.search.boundary_margin.is_finite() && self.search.boundary_margin >= 0.0) {
            bad.push("search.boundary_margin must be nonnegative".into());
        }
        for (name, v) in [
            ("mesh.N", self.mesh.n),
            ("solver.max_iter", self.solver.max_iter),
            ("solver.inner.max_iter", self.solver.inner.max_iter),
            ("solver.inner.cg_max_iter", self.solver.inner.cg_max_iter),
            ("search.grid_a", self.search.grid_a),
            ("search.grid_s", self.search.grid_s),
            ("search.grid_r", self.search.grid_r),
            ("poincare.N", self.poincare.n),
            ("poincare.numeric.starts", self.poincare.numeric.starts),
            ("poincare.numeric.max_iter", self.poincare.numeric.max_iter),
        ] {
            if v == 0 {
                bad.push(format!("{name} must be at least 1"));
            }
        }
        if self.domain.n != 2 {
            bad.push(format!("domain.n = {} unsupported: meshes are planar (n = 2)", self.domain.n));
        }
        if let Some(k) = self.mesh.kappa {
            if !(k.is_finite() && k >= 1.0) {
                bad.push(format!("mesh.kappa = {k} must be at least 1"));
            }
        }
        if let Some(s) = self.verify.slack {
            if !(s.is_finite() && (0.0..1.0).contains(&s)) {
                bad.push(format!("verify.slack = {s} must lie in [0, 1)"));
            }
        }
        let finite = [self.domain.gamma1, self.problem.p, self.problem.q, self.problem.alpha];
        let grids = [&self.sweep.gamma1, &self.sweep.p, &self.sweep.q, &self.sweep.alpha];
        if finite.iter().chain(grids.into_iter().flatten()).any(|v| !v.is_finite()) {
            bad.push("parameters must be finite".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(bad.join("; ")))
        }
    }

    pub fn kappa(&self, gamma1: f64) -> f64 {
        self.mesh
            .kappa
            .unwrap_or_else(|| cusp_spectra::mesh::default_kappa(gamma1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_json(r#"{"problem": {"p": 2, "r": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"meshes": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"solver": {"inner": {"foo": 1}}}"#).is_err());
        let c = RunConfig::from_json(r#"{"mesh": {"N": 12}}"#).unwrap();
        assert_eq!(c.mesh.n, 12);
    }

    #[test]
    fn flags_win() {
        let o = Overrides {
            p: Some(3.0),
            n: Some(7),
            sweep_alpha: Some(vec![-0.5, 0.0]),
            ..Default::default()
        };
        let mut c = RunConfig::from_json(r#"{"problem": {"p": 1.5, "q": 1.2}, "mesh": {"N": 4}}"#).unwrap();
        c.apply(&o).unwrap();
        assert_eq!((c.problem.p, c.problem.q, c.mesh.n), (3.0, 1.2, 7));
        assert_eq!(c.sweep.alpha, vec![-0.5, 0.0]);
    }

    #[test]
    fn zero_tolerance_is_invalid() {
        let mut c = RunConfig::default();
        c.solver.tol = 0.0;
        assert!(matches!(c.validate(), Err(CliError::Invalid(_))));
    }

    #[test]
    fn strategy_names() {
        assert_eq!(parse_strategy("payne-weinberger").unwrap(), PoincareStrategy::PayneWeinberger);
        assert!(parse_strategy("guess").is_err());
    }
}
