//! Run configuration: a flat TOML file with command-line overrides.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::DoubleMeshMode;
use crate::discretization::Variant;
use crate::error::{Error, Result};
use crate::mesh::check_n;
use crate::problem::{builtin_problem, BuiltinProblem, ProblemSpec};

/// Largest `N` kept by the desk preset.
pub const DESK_MAX_N: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: BuiltinProblem,
    pub epsilons: Vec<f64>,
    pub ns: Vec<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub variant: Variant,
    pub double_mesh: DoubleMeshMode,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: BuiltinProblem::Example1,
            epsilons: (1..=6).map(|k| 10f64.powi(-k)).collect(),
            ns: vec![32, 64, 128, 256, 512, 1024],
            alpha: None,
            beta: None,
            variant: Variant::Transformed,
            double_mesh: DoubleMeshMode::Bisect,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Drops every `N` above [`DESK_MAX_N`].
    pub fn desk(mut self) -> Self {
        self.ns.retain(|&n| n <= DESK_MAX_N);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilon list is empty".into()));
        }
        if self.ns.is_empty() {
            return Err(Error::Config("N list is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("epsilon = {e} must lie in (0, 1)")));
        }
        for &n in &self.ns {
            check_n(n)?;
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if let Some(v) = v.filter(|v| !(*v > 0.0)) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// The configured problem with `alpha`/`beta` overrides applied, at the first `epsilon`.
    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = builtin_problem(self.problem);
        if let Some(eps) = self.epsilons.first() {
            spec.epsilon = *eps;
        }
        if let Some(a) = self.alpha {
            spec.alpha = a;
        }
        if let Some(b) = self.beta {
            spec.beta = b;
        }
        spec
    }
}
