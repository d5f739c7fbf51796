//! Policy run loops: the epoch-based exploration-exploitation policy
//! with knapsack-aware planning, plus two baselines.
//!
//! One replication walks periods `t = 1..T`. Whenever the previous
//! period ended in a no-purchase, a new epoch starts: the planner
//! solves the optimistic program on the current confidence bounds and
//! one assortment is sampled from the returned distribution, then
//! offered repeatedly until the next no-purchase closes the epoch and
//! updates the estimators. Every purchase decrements inventory; the
//! run stops at the first stockout or at the horizon. A final epoch
//! truncated by the horizon is excluded from estimator updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimation::{self, EstimatorState};
use crate::mnl::{self, Assortment, Instance};
use crate::planner::{self, OptimisticBounds, OracleMode, PlannerConfig, SparseDistribution};
use crate::{Error, Result};

/// Floor for the DP oracle's epsilon; smaller values blow up the guess
/// grids without changing desk-scale behavior.
pub const DP_EPS_FLOOR: f64 = 0.05;

/// How the shrinkage factor is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    /// Use the raw formula value; abort if it reaches 1.
    Raw,
    /// `min(raw, cap)`; logs a warning when the cap binds, since the
    /// regret guarantee is void there.
    Clamped { cap: f64 },
    /// A fixed value in `[0, 1)`.
    Manual { value: f64 },
}

impl Default for OmegaMode {
    fn default() -> Self {
        OmegaMode::Clamped { cap: 0.5 }
    }
}

/// Knobs of the epoch-based policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    /// Target approximation epsilon; `None` means `1/T`.
    pub epsilon_target: Option<f64>,
    pub oracle_mode: OracleMode,
    /// DP oracle epsilon; `None` resolves to
    /// `max(min(0.05, epsilon_target / (16 T)), DP_EPS_FLOOR)`.
    pub eps_oracle: Option<f64>,
    pub omega_mode: OmegaMode,
    /// Analysis constant in the shrinkage formula.
    pub c_const: f64,
    /// Concentration constant in the confidence radius. The formula
    /// value is 48; desk-scale experiments may lower it, since at 48
    /// the bounds stay vacuous for any horizon under ~10^5.
    pub confidence_constant: f64,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            epsilon_target: None,
            oracle_mode: OracleMode::Exact,
            eps_oracle: None,
            omega_mode: OmegaMode::default(),
            c_const: planner::DEFAULT_C_CONST,
            confidence_constant: estimation::DEFAULT_CONFIDENCE_CONSTANT,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilon_target {
            if e.is_nan() || e <= 0.0 {
                return Err(Error::config("epsilon_target must be positive"));
            }
        }
        match self.omega_mode {
            OmegaMode::Manual { value } if !(0.0..1.0).contains(&value) => {
                Err(Error::config("manual omega must lie in [0, 1)"))
            }
            OmegaMode::Clamped { cap } if !(0.0..1.0).contains(&cap) => {
                Err(Error::config("omega cap must lie in [0, 1)"))
            }
            _ => Ok(()),
        }
    }

    fn epsilon_target(&self, inst: &Instance) -> f64 {
        self.epsilon_target.unwrap_or(1.0 / inst.horizon() as f64)
    }

    fn resolved_eps_oracle(&self, inst: &Instance) -> f64 {
        self.eps_oracle.unwrap_or_else(|| {
            let t = inst.horizon() as f64;
            (self.epsilon_target(inst) / (16.0 * t)).clamp(DP_EPS_FLOOR, 0.05)
        })
    }

    fn planner_config(&self, inst: &Instance) -> PlannerConfig {
        PlannerConfig {
            oracle_mode: self.oracle_mode,
            eps_oracle: self.resolved_eps_oracle(inst),
            ..PlannerConfig::default()
        }
    }

    /// Shrinkage factor per the configured mode.
    pub fn resolve_omega(&self, inst: &Instance) -> Result<f64> {
        let raw = planner::compute_omega(inst, self.c_const);
        match self.omega_mode {
            OmegaMode::Raw => {
                if raw >= 1.0 {
                    Err(Error::config(format!(
                        "omega = {raw:.3} >= 1 at this scale; use omega_mode \
                         'clamped' or 'manual' instead"
                    )))
                } else {
                    Ok(raw)
                }
            }
            OmegaMode::Clamped { cap } => {
                if raw > cap {
                    log::warn!("omega {raw:.3} clamped to {cap}; the regret guarantee is void");
                    Ok(cap)
                } else {
                    Ok(raw)
                }
            }
            OmegaMode::Manual { value } => Ok(value),
        }
    }
}

/// What a run records beyond the totals, plus the estimator
/// fault-injection hook used by the coverage diagnostic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub record_periods: bool,
    pub record_bounds: bool,
    /// When set, every purchase count is scaled by this factor before
    /// reaching the estimator (the market itself is untouched). Lets
    /// tests demonstrate that the coverage check catches a corrupted
    /// estimator.
    pub corrupt_vhat_scale: Option<f64>,
}

/// Why a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCause {
    Horizon,
    Stockout { product: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub epoch: u64,
    pub choice: usize,
    pub revenue: f64,
}

/// One completed epoch as it appears in a trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub index: u64,
    pub assortment: Assortment,
    pub length: u64,
    pub revenue: f64,
    /// `R(S)` under the true utilities, logged for variance-reduced
    /// regret estimates.
    pub expected_revenue_per_period: f64,
}

/// Everything one replication produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub periods: Option<Vec<PeriodRecord>>,
    pub epochs: Vec<EpochRecord>,
    /// Per-epoch `(lcb, ucb)` snapshots taken after each update, when
    /// requested.
    pub bounds_history: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub total_revenue: f64,
    /// `sum_t R(S_t)`: the low-variance revenue estimator.
    pub total_expected_revenue: f64,
    pub stop_time: usize,
    pub stop_cause: StopCause,
    pub consumption: Vec<u64>,
}

/// Inverse-CDF draw from a sparse distribution.
pub fn sample_assortment<R: Rng + ?Sized>(dist: &SparseDistribution, rng: &mut R) -> Assortment {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (s, w) in dist.support() {
        cum += w;
        if u < cum {
            return s.clone();
        }
    }
    dist.support()
        .last()
        .map(|(s, _)| s.clone())
        .unwrap_or_else(Assortment::empty)
}

/// How the next epoch's assortment is chosen.
enum EpochPlan<'a> {
    /// Solve the optimistic knapsack program and sample.
    Knapsack(&'a PolicyConfig),
    /// Argmax of the optimistic revenue, capacities ignored.
    Unconstrained(&'a PolicyConfig),
}

/// The epoch-based policy of the toolkit: optimistic knapsack planning
/// with estimator updates at epoch boundaries.
pub fn run_ucb_knapsack<R: Rng + ?Sized>(
    inst: &Instance,
    cfg: &PolicyConfig,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<Trace> {
    let state = estimation::init_state_with_constant(inst, cfg.confidence_constant);
    run_epoch_policy(inst, EpochPlan::Knapsack(cfg), opts, state, rng)
}

/// As [`run_ucb_knapsack`] but starting from a caller-supplied
/// estimator state (benchmark hook: inject exact bounds).
pub fn run_ucb_knapsack_from_state<R: Rng + ?Sized>(
    inst: &Instance,
    cfg: &PolicyConfig,
    opts: &RunOptions,
    state: EstimatorState,
    rng: &mut R,
) -> Result<Trace> {
    run_epoch_policy(inst, EpochPlan::Knapsack(cfg), opts, state, rng)
}

/// Baseline: per-epoch argmax of the optimistic revenue with no
/// capacity planning. Inventory is still hard-enforced.
pub fn run_unconstrained_ucb<R: Rng + ?Sized>(
    inst: &Instance,
    cfg: &PolicyConfig,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<Trace> {
    let state = estimation::init_state_with_constant(inst, cfg.confidence_constant);
    run_epoch_policy(inst, EpochPlan::Unconstrained(cfg), opts, state, rng)
}

fn masked_bounds(state: &EstimatorState, remaining: &[u64]) -> Result<OptimisticBounds> {
    let mut ucb = state.ucbs();
    let mut lcb = state.lcbs();
    for (i, &q) in remaining.iter().enumerate() {
        if q == 0 {
            ucb[i] = 0.0;
            lcb[i] = 0.0;
        }
    }
    OptimisticBounds::new(ucb, lcb)
}

fn run_epoch_policy<R: Rng + ?Sized>(
    inst: &Instance,
    plan: EpochPlan<'_>,
    opts: &RunOptions,
    mut state: EstimatorState,
    rng: &mut R,
) -> Result<Trace> {
    let cfg = match &plan {
        EpochPlan::Knapsack(c) | EpochPlan::Unconstrained(c) => *c,
    };
    cfg.validate()?;
    let omega = cfg.resolve_omega(inst)?;
    let planner_cfg = cfg.planner_config(inst);
    let n = inst.n_products();
    let t_max = inst.horizon();

    let mut remaining: Vec<u64> = inst.inventories().to_vec();
    let mut consumption = vec![0u64; n];
    let mut trace = Trace {
        periods: opts.record_periods.then(Vec::new),
        epochs: Vec::new(),
        bounds_history: opts.record_bounds.then(Vec::new),
        total_revenue: 0.0,
        total_expected_revenue: 0.0,
        stop_time: t_max,
        stop_cause: StopCause::Horizon,
        consumption: vec![0; n],
    };

    let mut epoch_index: u64 = 1;
    // (assortment, R(S), counts, length, revenue) of the open epoch.
    let mut current: Option<(Assortment, f64, Vec<u64>, u64, f64)> = None;
    let mut prev_choice = 0usize;

    for t in 1..=t_max {
        if prev_choice == 0 {
            // A new epoch: plan and sample once.
            let bounds = masked_bounds(&state, &remaining)?;
            let assortment = match &plan {
                EpochPlan::Knapsack(_) => {
                    let reduced = planner::reduce(inst, &bounds, omega)?;
                    let dist = planner::solve_optimistic(&reduced, &bounds, inst, &planner_cfg)?;
                    sample_assortment(&dist, rng)
                }
                EpochPlan::Unconstrained(_) => planner::max_ucb_assortment(inst, &bounds)?.0,
            };
            let expected = mnl::revenue(inst, &assortment)?;
            current = Some((assortment, expected, vec![0u64; n], 0, 0.0));
        }

        let (assortment, expected, counts, length, epoch_revenue) =
            current.as_mut().expect("epoch in progress");
        let choice = mnl::sample_choice(inst, assortment, rng);
        *length += 1;
        trace.total_expected_revenue += *expected;
        let mut period_revenue = 0.0;
        if choice > 0 {
            period_revenue = inst.revenue_of(choice);
            trace.total_revenue += period_revenue;
            *epoch_revenue += period_revenue;
            counts[choice - 1] += 1;
            consumption[choice - 1] += 1;
            assert!(
                remaining[choice - 1] > 0,
                "sold product {choice} without stock"
            );
            remaining[choice - 1] -= 1;
        }
        if let Some(periods) = &mut trace.periods {
            periods.push(PeriodRecord {
                t,
                epoch: epoch_index,
                choice,
                revenue: period_revenue,
            });
        }

        if choice == 0 {
            // Epoch completed by a no-purchase: fold into the
            // estimators.
            let (assortment, expected, counts, length, epoch_revenue) =
                current.take().expect("epoch in progress");
            let estimator_counts: Vec<u64> = match opts.corrupt_vhat_scale {
                None => counts.clone(),
                Some(scale) => counts
                    .iter()
                    .map(|c| (*c as f64 * scale).round() as u64)
                    .collect(),
            };
            let estimator_length: u64 = estimator_counts.iter().sum::<u64>() + 1;
            let purchase_counts = estimator_counts
                .iter()
                .enumerate()
                .filter(|(_, c)| **c > 0)
                .map(|(i, c)| (i + 1, *c))
                .collect();
            let outcome = estimation::EpochOutcome::new(
                assortment.clone(),
                purchase_counts,
                estimator_length,
            )?;
            estimation::record_epoch(&mut state, &outcome, n);
            if let Some(history) = &mut trace.bounds_history {
                history.push((state.lcbs(), state.ucbs()));
            }
            trace.epochs.push(EpochRecord {
                index: epoch_index,
                assortment,
                length,
                revenue: epoch_revenue,
                expected_revenue_per_period: expected,
            });
            epoch_index += 1;
        } else if remaining[choice - 1] == 0 {
            trace.stop_time = t;
            trace.stop_cause = StopCause::Stockout { product: choice };
            break;
        }
        prev_choice = choice;
    }

    for (i, &c) in consumption.iter().enumerate() {
        assert!(
            c <= inst.inventory_of(i + 1),
            "consumption of product {} exceeded inventory",
            i + 1
        );
    }
    trace.consumption = consumption;
    Ok(trace)
}

/// Clairvoyant static benchmark: draws an assortment from the fluid
/// optimum independently every period. Inventory remains hard-enforced
/// with the shared stopping rule.
pub fn run_oracle_static<R: Rng + ?Sized>(
    inst: &Instance,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<Trace> {
    let (_, dist) = planner::solve_opt_lp(inst)?;
    run_oracle_static_with(inst, &dist, opts, rng)
}

/// As [`run_oracle_static`] with a precomputed fluid distribution.
pub fn run_oracle_static_with<R: Rng + ?Sized>(
    inst: &Instance,
    dist: &SparseDistribution,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<Trace> {
    let n = inst.n_products();
    let t_max = inst.horizon();
    let mut remaining: Vec<u64> = inst.inventories().to_vec();
    let mut consumption = vec![0u64; n];
    let mut trace = Trace {
        periods: opts.record_periods.then(Vec::new),
        epochs: Vec::new(),
        bounds_history: None,
        total_revenue: 0.0,
        total_expected_revenue: 0.0,
        stop_time: t_max,
        stop_cause: StopCause::Horizon,
        consumption: vec![0; n],
    };
    for t in 1..=t_max {
        let assortment = sample_assortment(dist, rng);
        trace.total_expected_revenue += mnl::revenue(inst, &assortment)?;
        let choice = mnl::sample_choice(inst, &assortment, rng);
        let mut period_revenue = 0.0;
        if choice > 0 {
            period_revenue = inst.revenue_of(choice);
            trace.total_revenue += period_revenue;
            consumption[choice - 1] += 1;
            assert!(
                remaining[choice - 1] > 0,
                "sold product {choice} without stock"
            );
            remaining[choice - 1] -= 1;
        }
        if let Some(periods) = &mut trace.periods {
            periods.push(PeriodRecord {
                t,
                epoch: t as u64,
                choice,
                revenue: period_revenue,
            });
        }
        if choice > 0 && remaining[choice - 1] == 0 {
            trace.stop_time = t;
            trace.stop_cause = StopCause::Stockout { product: choice };
            break;
        }
    }
    for (i, &c) in consumption.iter().enumerate() {
        assert!(c <= inst.inventory_of(i + 1));
    }
    trace.consumption = consumption;
    Ok(trace)
}
