//! The JSON experiment configuration document.
//!
//! A document names an instance (explicit parameters or a seeded
//! generator), the policies to run with their knobs, replication and
//! seeding choices, optional extra horizons for regret-scaling runs,
//! and the diagnostics toggles. Unknown keys are rejected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mnl::Instance;
use crate::policy::{PolicyConfig, RunOptions};
use crate::{Error, Result};

/// Stream id reserved for instance generation so policy replication
/// streams never collide with it.
const GENERATOR_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InstanceSpec {
    Explicit(ExplicitInstance),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitInstance {
    pub cardinality_cap: usize,
    pub horizon: usize,
    pub revenues: Vec<f64>,
    pub inventories: Vec<u64>,
    pub utilities: Vec<f64>,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_products: usize,
    pub cardinality_cap: usize,
    pub horizon: usize,
    pub inventory: InventoryRule,
    pub utilities: Sampler,
    pub revenues: Sampler,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

fn default_v_max() -> f64 {
    1.0
}

/// How initial inventories are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum InventoryRule {
    /// `q_i = max(1, round(factor * T / N))` for every product.
    ScaledHorizon {
        factor: f64,
    },
    Explicit {
        values: Vec<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum Sampler {
    Uniform { low: f64, high: f64 },
    Fixed { values: Vec<f64> },
}

impl Sampler {
    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        match self {
            Sampler::Uniform { low, high } => {
                if low.is_nan() || high.is_nan() || low > high {
                    return Err(Error::config("sampler needs low <= high"));
                }
                Ok((0..n)
                    .map(|_| {
                        if low == high {
                            *low
                        } else {
                            rng.gen_range(*low..*high)
                        }
                    })
                    .collect())
            }
            Sampler::Fixed { values } => {
                if values.len() != n {
                    return Err(Error::config(format!(
                        "fixed sampler has {} values, instance needs {n}",
                        values.len()
                    )));
                }
                Ok(values.clone())
            }
        }
    }
}

impl InstanceSpec {
    pub fn is_explicit(&self) -> bool {
        matches!(self, InstanceSpec::Explicit(_))
    }

    /// Materializes the instance, sampling generator fields from a
    /// stream derived from `seed`.
    pub fn realize(&self, seed: u64) -> Result<Instance> {
        self.realize_with_horizon(seed, None)
    }

    /// As [`InstanceSpec::realize`] with an overridden horizon; the
    /// inventory rule is reapplied so scaled inventories track the new
    /// horizon, and generator draws reuse the same stream so the
    /// market itself is unchanged across horizons.
    pub fn realize_with_horizon(&self, seed: u64, horizon: Option<usize>) -> Result<Instance> {
        match self {
            InstanceSpec::Explicit(e) => Instance::new(
                e.cardinality_cap,
                horizon.unwrap_or(e.horizon),
                e.revenues.clone(),
                e.inventories.clone(),
                e.utilities.clone(),
                e.v_max,
            ),
            InstanceSpec::Generator(g) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(GENERATOR_STREAM);
                let t = horizon.unwrap_or(g.horizon);
                let utilities = g
                    .utilities
                    .sample(g.n_products, &mut rng)?
                    .iter()
                    .map(|v| v.min(g.v_max))
                    .collect();
                let revenues = g.revenues.sample(g.n_products, &mut rng)?;
                let inventories = match &g.inventory {
                    InventoryRule::ScaledHorizon { factor } => {
                        let q = (factor * t as f64 / g.n_products as f64).round() as u64;
                        vec![q.max(1); g.n_products]
                    }
                    InventoryRule::Explicit { values } => {
                        if values.len() != g.n_products {
                            return Err(Error::config("explicit inventories length mismatch"));
                        }
                        values.clone()
                    }
                };
                Instance::new(
                    g.cardinality_cap,
                    t,
                    revenues,
                    inventories,
                    utilities,
                    g.v_max,
                )
            }
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            InstanceSpec::Explicit(e) => e.horizon,
            InstanceSpec::Generator(g) => g.horizon,
        }
    }
}

/// Which policy a run entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyId {
    UcbKnapsack,
    UnconstrainedUcb,
    OracleStatic,
}

impl PolicyId {
    pub fn label(&self) -> &'static str {
        match self {
            PolicyId::UcbKnapsack => "ucb_knapsack",
            PolicyId::UnconstrainedUcb => "unconstrained_ucb",
            PolicyId::OracleStatic => "oracle_static",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub name: PolicyId,
    #[serde(default)]
    pub policy: PolicyConfig,
}

/// Statistical diagnostics toggles and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// Per-product mean of the epoch purchase counts vs the true
    /// utilities.
    pub unbiasedness: bool,
    /// Mean epoch length vs `1 + V(S)` for a fixed offered set.
    pub epoch_length: bool,
    /// Confidence-bound coverage over full policy runs.
    pub coverage: bool,
    /// Epoch count for the fixed-assortment checks.
    pub fixed_epochs: usize,
    /// Width of the acceptance bands, in standard deviations of the
    /// Monte-Carlo mean.
    pub sigma_band: f64,
    pub coverage_replications: usize,
    pub coverage_threshold: f64,
    /// Fault-injection hook: scales every recorded purchase count
    /// before it reaches the estimator. Exists so the coverage check
    /// can be shown to catch a corrupted estimator.
    pub corrupt_vhat_scale: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            unbiasedness: true,
            epoch_length: true,
            coverage: true,
            fixed_epochs: 10_000,
            sigma_band: 4.0,
            coverage_replications: 20,
            coverage_threshold: 0.99,
            corrupt_vhat_scale: None,
        }
    }
}

/// The root experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    #[serde(default = "default_replications")]
    pub replications: usize,
    pub policies: Vec<PolicyEntry>,
    #[serde(default)]
    pub seed: u64,
    /// When present, `regret_scaling` evaluates the first policy at
    /// each horizon.
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
    #[serde(default)]
    pub run_options: RunOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_replications() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(s).map_err(|e| Error::config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("at least one policy entry is required"));
        }
        for entry in &self.policies {
            entry.policy.validate()?;
        }
        if let Some(hs) = &self.horizons {
            if hs.is_empty() {
                return Err(Error::config("horizons must be nonempty when present"));
            }
        }
        // The instance must materialize.
        self.instance.realize(self.seed)?;
        Ok(())
    }
}
