//! Experiment configuration file (TOML): model definition at the top level
//! plus one block per command.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{builtin_wf_mutation, Coefficient, ModelSpec};
use crate::sde::{SimConfig, DEFAULT_GUARD, DEFAULT_MAX_HALVINGS, DEFAULT_MEET_TOL};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: String,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub drift_expr: Option<String>,
    pub sigma_expr: Option<String>,
    pub mu_bound: Option<f64>,
    pub beta0: Option<f64>,
    pub b0: Option<f64>,
    pub beta1: Option<f64>,
    pub b1: Option<f64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub sim: SimBlock,
    pub hitting: Option<HittingBlock>,
    pub invariant: Option<InvariantBlock>,
    pub converge: Option<ConvergeBlock>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimBlock {
    pub dt: f64,
    pub t_max: f64,
    pub max_halvings: Option<u32>,
    pub record_stride: Option<usize>,
    pub guard: Option<f64>,
    pub meet_tol: Option<f64>,
}

impl Default for SimBlock {
    fn default() -> Self {
        SimBlock {
            dt: 1e-4,
            t_max: 50.0,
            max_halvings: None,
            record_stride: None,
            guard: None,
            meet_tol: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingBlock {
    pub m: f64,
    pub c: f64,
    pub n: usize,
    /// Start point for the lower-boundary checks; mirrored for the upper.
    /// Defaults to alpha/2.
    pub x0: Option<f64>,
    /// Subset of {"prop1", "prop2", "thm1", "occupation"}; all when absent.
    pub checks: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantBlock {
    pub alpha1: f64,
    pub alpha2: f64,
    pub bins: usize,
    pub n_cycles: usize,
    pub moment_m: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeBlock {
    pub x0: f64,
    pub times: Vec<f64>,
    pub n_replicas: usize,
    pub bins: usize,
    pub n_pairs: usize,
    /// (m, c) for the explicit envelope; reuses [hitting] when absent.
    pub m: Option<f64>,
    pub c: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        match self.family.as_str() {
            "wf_mutation" => {
                let t1 = self.require(self.theta1, "theta1")?;
                let t2 = self.require(self.theta2, "theta2")?;
                let eps = self.epsilon.unwrap_or(1.0);
                builtin_wf_mutation(t1, t2, eps)
            }
            "custom" => {
                let drift = Expr::parse(
                    self.drift_expr
                        .as_deref()
                        .ok_or_else(|| Error::Config("custom model needs drift_expr".into()))?,
                )?;
                let sigma = Expr::parse(
                    self.sigma_expr
                        .as_deref()
                        .ok_or_else(|| Error::Config("custom model needs sigma_expr".into()))?,
                )?;
                ModelSpec::new(
                    Coefficient::Expr(drift),
                    Coefficient::Expr(sigma),
                    self.epsilon.unwrap_or(1.0),
                    self.require(self.mu_bound, "mu_bound")?,
                    self.require(self.beta0, "beta0")?,
                    self.require(self.b0, "b0")?,
                    self.require(self.beta1, "beta1")?,
                    self.require(self.b1, "b1")?,
                )
            }
            other => Err(Error::Config(format!(
                "unknown family {other:?}; expected \"wf_mutation\" or \"custom\""
            ))),
        }
    }

    /// SimConfig with the file's seed unless overridden on the command line.
    pub fn build_sim(&self, seed_override: Option<u64>) -> Result<SimConfig> {
        let seed = seed_override.or(self.seed).unwrap_or(0);
        let mut cfg = SimConfig::new(self.sim.dt, self.sim.t_max, seed)?;
        cfg.max_halvings = self.sim.max_halvings.unwrap_or(DEFAULT_MAX_HALVINGS);
        cfg.record_stride = self.sim.record_stride.unwrap_or(1);
        cfg.guard = self.sim.guard.unwrap_or(DEFAULT_GUARD);
        cfg.meet_tol = self.sim.meet_tol.unwrap_or(DEFAULT_MEET_TOL);
        if !(cfg.guard > 0.0 && cfg.guard < 0.5) {
            return Err(Error::Config("guard must lie in (0, 1/2)".into()));
        }
        if !(cfg.meet_tol >= 0.0) {
            return Err(Error::Config("meet_tol must be nonnegative".into()));
        }
        Ok(cfg)
    }

    fn require(&self, v: Option<f64>, key: &str) -> Result<f64> {
        v.ok_or_else(|| Error::Config(format!("family {:?} needs key {key}", self.family)))
    }
}
