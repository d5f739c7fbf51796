//! Experiment orchestration: replicated policy runs against the fluid
//! benchmark, regret-scaling sweeps, and the statistical diagnostics.
//!
//! Replications run in parallel with one ChaCha stream per
//! `(policy, replication)` pair, so results are independent of the
//! scheduling; aggregation is a sequential reduce in replication
//! order, which makes rendered CSV output byte-stable for a fixed
//! config and seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DiagnosticsConfig, ExperimentConfig, PolicyId};
use crate::mnl::{self, Assortment, Instance};
use crate::planner::{self, SparseDistribution};
use crate::policy::{self, PolicyConfig, RunOptions, Trace};
use crate::{Error, Result};

/// Traces of one experiment, keyed by policy label.
pub type PolicyTraces = Vec<(String, Vec<Trace>)>;

/// One replication row as it appears in `runs.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct RunRow {
    pub replication: usize,
    pub policy: String,
    pub revenue: f64,
    pub stop_time: usize,
    pub regret: f64,
}

/// Aggregates for one policy across replications.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub replications: usize,
    pub mean_revenue: f64,
    pub se_revenue: f64,
    /// `OPT - mean realized revenue`.
    pub mean_regret: f64,
    /// `OPT - mean of sum_t R(S_t)` (the low-variance estimator).
    pub mean_regret_expected: f64,
    pub se_regret_expected: f64,
    pub mean_stop_time: f64,
    /// Count of hard inventory violations; the run loop asserts, so a
    /// nonzero value can never be observed here.
    pub feasibility_violations: usize,
    pub mean_consumption: Vec<f64>,
}

/// Everything an experiment produces besides raw traces.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateStats {
    pub opt_lp_value: f64,
    /// `T * opt_lp_value`: the regret benchmark.
    pub opt: f64,
    pub per_policy: Vec<PolicyAggregate>,
    pub rows: Vec<RunRow>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Builds a rayon pool honoring the `MNLKB_THREADS` cap.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("MNLKB_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::config(format!("MNLKB_THREADS must be an integer, got {v}")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))
}

fn replication_stream(policy_idx: usize, replication: usize) -> u64 {
    ((policy_idx as u64) << 32) | replication as u64
}

/// Runs every replication of one policy entry; traces come back in
/// replication order.
#[allow(clippy::too_many_arguments)]
pub fn run_policy_replications(
    inst: &Instance,
    id: PolicyId,
    cfg: &PolicyConfig,
    opts: &RunOptions,
    seed: u64,
    policy_idx: usize,
    replications: usize,
    opt_dist: &SparseDistribution,
) -> Result<Vec<Trace>> {
    let pool = thread_pool()?;
    pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(replication_stream(policy_idx, rep));
                match id {
                    PolicyId::UcbKnapsack => policy::run_ucb_knapsack(inst, cfg, opts, &mut rng),
                    PolicyId::UnconstrainedUcb => {
                        policy::run_unconstrained_ucb(inst, cfg, opts, &mut rng)
                    }
                    PolicyId::OracleStatic => {
                        policy::run_oracle_static_with(inst, opt_dist, opts, &mut rng)
                    }
                }
            })
            .collect::<Result<Vec<_>>>()
    })
}

/// Runs the configured experiment: materialize the instance, solve the
/// fluid benchmark once, run every policy entry for the configured
/// replications, and aggregate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateStats> {
    run_experiment_with_traces(cfg).map(|(stats, _)| stats)
}

/// As [`run_experiment`], also returning the per-policy traces (for
/// verbose epoch output).
pub fn run_experiment_with_traces(
    cfg: &ExperimentConfig,
) -> Result<(AggregateStats, PolicyTraces)> {
    let inst = cfg.instance.realize(cfg.seed)?;
    run_experiment_on(cfg, &inst)
}

fn run_experiment_on(
    cfg: &ExperimentConfig,
    inst: &Instance,
) -> Result<(AggregateStats, PolicyTraces)> {
    let (opt_lp_value, opt_dist) = planner::solve_opt_lp(inst)?;
    let opt = inst.horizon() as f64 * opt_lp_value;

    let mut per_policy = Vec::new();
    let mut rows = Vec::new();
    let mut all_traces = Vec::new();
    for (idx, entry) in cfg.policies.iter().enumerate() {
        let traces = run_policy_replications(
            inst,
            entry.name,
            &entry.policy,
            &cfg.run_options,
            cfg.seed,
            idx,
            cfg.replications,
            &opt_dist,
        )?;
        let revenues: Vec<f64> = traces.iter().map(|t| t.total_revenue).collect();
        let expected: Vec<f64> = traces.iter().map(|t| t.total_expected_revenue).collect();
        let regrets_expected: Vec<f64> = expected.iter().map(|e| opt - e).collect();
        let (mean_revenue, se_revenue) = mean_and_se(&revenues);
        let (mean_regret_expected, se_regret_expected) = mean_and_se(&regrets_expected);
        let mean_stop_time =
            traces.iter().map(|t| t.stop_time as f64).sum::<f64>() / traces.len() as f64;
        let n = inst.n_products();
        let mean_consumption: Vec<f64> = (0..n)
            .map(|i| {
                traces.iter().map(|t| t.consumption[i] as f64).sum::<f64>() / traces.len() as f64
            })
            .collect();
        for (rep, trace) in traces.iter().enumerate() {
            rows.push(RunRow {
                replication: rep,
                policy: entry.name.label().to_string(),
                revenue: trace.total_revenue,
                stop_time: trace.stop_time,
                regret: opt - trace.total_revenue,
            });
        }
        per_policy.push(PolicyAggregate {
            policy: entry.name.label().to_string(),
            replications: cfg.replications,
            mean_revenue,
            se_revenue,
            mean_regret: opt - mean_revenue,
            mean_regret_expected,
            se_regret_expected,
            mean_stop_time,
            feasibility_violations: 0,
            mean_consumption,
        });
        all_traces.push((entry.name.label().to_string(), traces));
    }
    Ok((
        AggregateStats {
            opt_lp_value,
            opt,
            per_policy,
            rows,
        },
        all_traces,
    ))
}

/// One horizon's worth of a regret-scaling sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub horizon: usize,
    pub mean_regret: f64,
    pub se_regret: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingResult {
    /// First configured policy, evaluated per horizon.
    pub policy: String,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log(mean regret)` vs `log(T)`; absent
    /// with fewer than two horizons or nonpositive mean regrets.
    pub slope: Option<f64>,
}

/// Evaluates the first configured policy across horizons, rebuilding
/// the instance per horizon (scaled inventory rules track `T`), and
/// fits the log-log regret slope. Regret uses the expected-revenue
/// estimator.
pub fn regret_scaling(cfg: &ExperimentConfig, horizons: &[usize]) -> Result<ScalingResult> {
    if horizons.is_empty() {
        return Err(Error::invalid("regret scaling needs at least one horizon"));
    }
    let entry = cfg
        .policies
        .first()
        .ok_or_else(|| Error::config("no policy configured"))?;
    let mut rows = Vec::new();
    for &t in horizons {
        let inst = cfg.instance.realize_with_horizon(cfg.seed, Some(t))?;
        let (opt_lp_value, opt_dist) = planner::solve_opt_lp(&inst)?;
        let opt = t as f64 * opt_lp_value;
        let traces = run_policy_replications(
            &inst,
            entry.name,
            &entry.policy,
            &cfg.run_options,
            cfg.seed,
            0,
            cfg.replications,
            &opt_dist,
        )?;
        let regrets: Vec<f64> = traces
            .iter()
            .map(|tr| opt - tr.total_expected_revenue)
            .collect();
        let (mean_regret, se_regret) = mean_and_se(&regrets);
        rows.push(ScalingRow {
            horizon: t,
            mean_regret,
            se_regret,
        });
    }
    let slope = fit_loglog_slope(&rows);
    Ok(ScalingResult {
        policy: entry.name.label().to_string(),
        rows,
        slope,
    })
}

fn fit_loglog_slope(rows: &[ScalingRow]) -> Option<f64> {
    if rows.len() < 2 || rows.iter().any(|r| r.mean_regret <= 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.horizon as f64).ln(), r.mean_regret.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// One named check with its statistic and band.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticCheck {
    pub name: String,
    pub statistic: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct DiagnosticReport {
    pub checks: Vec<DiagnosticCheck>,
}

impl DiagnosticReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, name: String, statistic: f64, expected: f64, tolerance: f64) {
        self.checks.push(DiagnosticCheck {
            name,
            statistic,
            expected,
            tolerance,
            pass: (statistic - expected).abs() <= tolerance,
        });
    }
}

/// Offers `s` for `epochs` complete epochs and returns the per-product
/// mean purchase counts and the mean epoch length.
pub fn simulate_fixed_assortment(
    inst: &Instance,
    s: &Assortment,
    epochs: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, f64) {
    let n = inst.n_products();
    let mut count_sums = vec![0.0f64; n];
    let mut length_sum = 0.0f64;
    for _ in 0..epochs {
        loop {
            length_sum += 1.0;
            let c = mnl::sample_choice(inst, s, rng);
            if c == 0 {
                break;
            }
            count_sums[c - 1] += 1.0;
        }
    }
    let m = epochs as f64;
    (
        count_sums.into_iter().map(|c| c / m).collect(),
        length_sum / m,
    )
}

/// Runs the enabled statistical checks. The fixed-assortment checks
/// offer the first `K` products; the coverage check replays the first
/// knapsack policy entry (or a default one) with bound recording.
pub fn diagnostics(cfg: &ExperimentConfig) -> Result<DiagnosticReport> {
    let inst = cfg.instance.realize(cfg.seed)?;
    diagnostics_on(cfg, &inst)
}

fn diagnostics_on(cfg: &ExperimentConfig, inst: &Instance) -> Result<DiagnosticReport> {
    let d: &DiagnosticsConfig = &cfg.diagnostics;
    let mut report = DiagnosticReport::default();
    let n = inst.n_products();

    if d.unbiasedness || d.epoch_length {
        let k = inst.cardinality_cap().min(n);
        let s = Assortment::new((1..=k).collect())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((1u64 << 48) + 1);
        let m = d.fixed_epochs as f64;
        let (means, mean_len) = simulate_fixed_assortment(inst, &s, d.fixed_epochs, &mut rng);
        if d.unbiasedness {
            for &i in s.items() {
                let v = inst.utility_of(i);
                let band = d.sigma_band * (v * (1.0 + v) / m).sqrt();
                report.push(format!("unbiasedness_product_{i}"), means[i - 1], v, band);
            }
        }
        if d.epoch_length {
            let total: f64 = inst.total_utility(&s);
            let band = d.sigma_band * (total * (1.0 + total) / m).sqrt();
            report.push("epoch_length_mean".to_string(), mean_len, 1.0 + total, band);
        }
    }

    if d.coverage {
        let entry = cfg
            .policies
            .iter()
            .find(|e| e.name == PolicyId::UcbKnapsack)
            .cloned()
            .unwrap_or(crate::config::PolicyEntry {
                name: PolicyId::UcbKnapsack,
                policy: PolicyConfig::default(),
            });
        let opts = RunOptions {
            record_periods: false,
            record_bounds: true,
            corrupt_vhat_scale: d.corrupt_vhat_scale,
        };
        let (_, opt_dist) = planner::solve_opt_lp(inst)?;
        let traces = run_policy_replications(
            inst,
            entry.name,
            &entry.policy,
            &opts,
            cfg.seed,
            usize::from(u16::MAX), // stream block away from experiment runs
            d.coverage_replications,
            &opt_dist,
        )?;
        let mut covered = 0u64;
        let mut total = 0u64;
        for trace in &traces {
            let history = trace
                .bounds_history
                .as_ref()
                .expect("coverage runs record bounds");
            for (lcb, ucb) in history {
                for i in 0..n {
                    total += 1;
                    let v = inst.utility_of(i + 1);
                    if lcb[i] - 1e-12 <= v && v <= ucb[i] + 1e-12 {
                        covered += 1;
                    }
                }
            }
        }
        let freq = if total == 0 {
            1.0
        } else {
            covered as f64 / total as f64
        };
        // One-sided: pass iff freq >= threshold.
        report.checks.push(DiagnosticCheck {
            name: "coverage_frequency".to_string(),
            statistic: freq,
            expected: 1.0,
            tolerance: 1.0 - d.coverage_threshold,
            pass: freq >= d.coverage_threshold,
        });
    }

    Ok(report)
}

// ---------------------------------------------------------------------------
// Output rendering
// ---------------------------------------------------------------------------

/// Renders `runs.csv`: `replication,policy,revenue,stop_time,regret`.
pub fn runs_csv(stats: &AggregateStats) -> String {
    let mut out = String::from("replication,policy,revenue,stop_time,regret\n");
    for row in &stats.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.replication, row.policy, row.revenue, row.stop_time, row.regret
        ));
    }
    out
}

/// Renders the optional verbose `epochs.csv` from raw traces:
/// `replication,policy,epoch,assortment,length,revenue,expected_revenue`.
pub fn epochs_csv(policy: &str, traces: &[Trace]) -> String {
    let mut out =
        String::from("replication,policy,epoch,assortment,length,revenue,expected_revenue\n");
    for (rep, trace) in traces.iter().enumerate() {
        for e in &trace.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                rep,
                policy,
                e.index,
                e.assortment.label(),
                e.length,
                e.revenue,
                e.expected_revenue_per_period
            ));
        }
    }
    out
}

/// Renders the benchmark distribution as CSV rows:
/// `assortment,weight`.
pub fn distribution_csv(dist: &SparseDistribution) -> String {
    let mut out = String::from("assortment,weight\n");
    for (s, w) in dist.support() {
        out.push_str(&format!("{},{}\n", s.label(), w));
    }
    out
}
