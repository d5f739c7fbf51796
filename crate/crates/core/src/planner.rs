//! The optimistic per-epoch LP over distributions of assortments, and
//! the clairvoyant fluid benchmark.
//!
//! Given utility bounds `lcb <= ucb`, the optimistic program maximizes
//! `sum_S y_S * Rucb(S)` over distributions `y` subject to shrunk
//! per-product consumption caps `sum_S y_S * plcb(i, S) <= (1-w) q_i/T`,
//! where
//!
//! ```text
//! Rucb(S)    = sum_{i in S} r_i ucb_i / (1 + sum_{j in S} lcb_j)
//! plcb(i, S) = lcb_i / (1 + sum_{j in S} ucb_j)
//! ```
//!
//! The program has one column per assortment, so it is solved by
//! cutting planes: solve the restricted master over a pool of columns,
//! read the duals `(lambda, theta)`, and ask a separation oracle for
//! the assortment maximizing `Rucb(S) - sum_i theta_i pi_ucb(i, S)`
//! (a difference of two MNL revenues). A positive gap over `lambda`
//! adds the column; otherwise the pool is optimal and the master's
//! primal solution is the distribution to play. Products with
//! `lcb_i = 0` consume nothing under `plcb`, so their capacity rows are
//! vacuous; they form the zero-LCB index set of the reduced program.

use serde::{Deserialize, Serialize};

use crate::diff_assort::{self, DiffAssortInstance, DiffProduct};
use crate::lp::{LinearProgram, Relation};
use crate::mnl::{Assortment, Instance};
use crate::{lp, Error, Result};

/// Enumeration cap for building one LP column per assortment.
pub const DEFAULT_ENUM_CAP: usize = 14;

/// Enumeration cap for the exact separation oracle (one pass over all
/// subsets of size at most `K`, no LP columns materialized).
pub const SEPARATION_ENUM_CAP: usize = 22;

/// Default analysis constant `C` in the shrinkage factor, chosen as
/// `2 * max(C1, C2)` with `C1 = sqrt(72) + sqrt(24)` and `C2 = 144`.
pub const DEFAULT_C_CONST: f64 = 288.0;

/// Per-product confidence bounds fed to the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticBounds {
    pub ucb: Vec<f64>,
    pub lcb: Vec<f64>,
}

impl OptimisticBounds {
    pub fn new(ucb: Vec<f64>, lcb: Vec<f64>) -> Result<Self> {
        if ucb.len() != lcb.len() {
            return Err(Error::invalid("ucb/lcb length mismatch"));
        }
        for (i, (u, l)) in ucb.iter().zip(&lcb).enumerate() {
            if !(*l >= 0.0 && l <= u && u.is_finite()) {
                return Err(Error::invalid(format!(
                    "product {}: bounds must satisfy 0 <= lcb <= ucb, got [{l}, {u}]",
                    i + 1
                )));
            }
        }
        Ok(OptimisticBounds { ucb, lcb })
    }

    /// Bounds that coincide with the true utilities.
    pub fn exact(inst: &Instance) -> Self {
        OptimisticBounds {
            ucb: inst.true_utilities().to_vec(),
            lcb: inst.true_utilities().to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.ucb.len()
    }

    /// Optimistic revenue of `S`: UCB numerators over the LCB
    /// denominator.
    pub fn ucb_revenue(&self, inst: &Instance, s: &Assortment) -> f64 {
        let denom: f64 = 1.0 + s.items().iter().map(|&i| self.lcb[i - 1]).sum::<f64>();
        s.items()
            .iter()
            .map(|&i| inst.revenue_of(i) * self.ucb[i - 1])
            .sum::<f64>()
            / denom
    }

    /// Pessimistic consumption rate of product `i` under `S`: LCB
    /// numerator over the UCB denominator.
    pub fn lcb_consumption(&self, i: usize, s: &Assortment) -> f64 {
        if !s.contains(i) {
            return 0.0;
        }
        let denom: f64 = 1.0 + s.items().iter().map(|&j| self.ucb[j - 1]).sum::<f64>();
        self.lcb[i - 1] / denom
    }

    /// `pi_ucb(i, S)`: UCB numerator over the UCB denominator.
    pub fn ucb_share(&self, i: usize, s: &Assortment) -> f64 {
        if !s.contains(i) {
            return 0.0;
        }
        let denom: f64 = 1.0 + s.items().iter().map(|&j| self.ucb[j - 1]).sum::<f64>();
        self.ucb[i - 1] / denom
    }
}

/// Shrinkage factor: the six-term high-probability consumption bound
/// scaled by `1/q_min`. Returned raw; values at or above 1 make the
/// caps vacuous and are the caller's problem (see the policy layer).
pub fn compute_omega(inst: &Instance, c_const: f64) -> f64 {
    let k = inst.cardinality_cap() as f64;
    let t = inst.horizon() as f64;
    let n = inst.n_products() as f64;
    let v_max = inst.v_max();
    let q_min = inst.min_inventory() as f64;
    let ln_t = t.ln();
    let t_quarter = t.powf(0.25);
    let sum = (k + 1.0) * t_quarter
        + 8.0 * (k + 1.0) * ((k + 1.0) * t_quarter).sqrt() * ln_t
        + 5.0 * (v_max * t * ln_t).sqrt()
        + 3.0 * ln_t
        + 2.0 * c_const * (n.sqrt() * t.powi(4) + 1.0).ln() * (n + (k * n * t * v_max).sqrt())
        + (k + 1.0) * (6.0 * (k + 1.0) * t).sqrt() * ln_t;
    sum / q_min
}

/// The reduced program data: per-product scaled capacities and rewards
/// plus the zero-LCB index set whose capacity rows are vacuous.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProgram {
    /// `(1-w) q_i ucb_i / (T lcb_i)`, `None` on the zero-LCB set.
    pub reduced_caps: Vec<Option<f64>>,
    /// `r_i lcb_i / ucb_i` (zero when `ucb_i = 0`).
    pub reduced_rewards: Vec<f64>,
    /// 1-based indices with `lcb_i = 0`.
    pub zero_lcb_set: Vec<usize>,
    pub omega: f64,
}

/// Builds the reduced program; rejects `omega` outside `[0, 1)`.
pub fn reduce(inst: &Instance, bounds: &OptimisticBounds, omega: f64) -> Result<ReducedProgram> {
    if !(0.0..1.0).contains(&omega) {
        return Err(Error::invalid(format!(
            "omega must lie in [0, 1), got {omega}; clamp or pick a manual value"
        )));
    }
    if bounds.n() != inst.n_products() {
        return Err(Error::invalid("bounds do not match the instance size"));
    }
    let t = inst.horizon() as f64;
    let mut reduced_caps = Vec::with_capacity(bounds.n());
    let mut reduced_rewards = Vec::with_capacity(bounds.n());
    let mut zero_lcb_set = Vec::new();
    for i in 1..=bounds.n() {
        let (l, u) = (bounds.lcb[i - 1], bounds.ucb[i - 1]);
        if l == 0.0 {
            zero_lcb_set.push(i);
            reduced_caps.push(None);
        } else {
            reduced_caps.push(Some(
                (1.0 - omega) * inst.inventory_of(i) as f64 * u / (t * l),
            ));
        }
        reduced_rewards.push(if u > 0.0 {
            inst.revenue_of(i) * l / u
        } else {
            0.0
        });
    }
    Ok(ReducedProgram {
        reduced_caps,
        reduced_rewards,
        zero_lcb_set,
        omega,
    })
}

/// A dual point of the reduced program: `lambda` for the convexity row
/// and one `theta_i >= 0` per capacity row, zero on the zero-LCB set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub lambda: f64,
    pub thetas: Vec<f64>,
}

/// Which separation oracle the cutting-plane loop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Exact,
    Dp,
}

/// Cutting-plane solve configuration.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub oracle_mode: OracleMode,
    /// Epsilon for the DP oracle path.
    pub eps_oracle: f64,
    /// Stop when the returned violation is at most this.
    pub tol_cut: f64,
    /// Iteration cap is `max_cuts_per_product * N`.
    pub max_cuts_per_product: usize,
    pub enum_cap: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            oracle_mode: OracleMode::Exact,
            eps_oracle: 0.05,
            tol_cut: 1e-7,
            max_cuts_per_product: 50,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

/// A distribution over assortments with explicit support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDistribution {
    support: Vec<(Assortment, f64)>,
}

impl SparseDistribution {
    /// Keeps strictly positive weights and normalizes them to sum to
    /// one exactly; errors if the raw weights are not already within
    /// 1e-6 of a distribution.
    pub fn new(raw: Vec<(Assortment, f64)>) -> Result<Self> {
        let total: f64 = raw.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        if raw.iter().any(|(_, w)| *w < -1e-9) {
            return Err(Error::invalid("negative weight in distribution"));
        }
        let mut support: Vec<(Assortment, f64)> =
            raw.into_iter().filter(|(_, w)| *w > 1e-12).collect();
        let kept: f64 = support.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut support {
            *w /= kept;
        }
        Ok(SparseDistribution { support })
    }

    /// Point mass on one assortment.
    pub fn point(s: Assortment) -> Self {
        SparseDistribution {
            support: vec![(s, 1.0)],
        }
    }

    pub fn support(&self) -> &[(Assortment, f64)] {
        &self.support
    }

    /// Expected value of `f` under the distribution.
    pub fn expectation(&self, mut f: impl FnMut(&Assortment) -> f64) -> f64 {
        self.support.iter().map(|(s, w)| w * f(s)).sum()
    }
}

/// Statistics of one cutting-plane solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlannerStats {
    pub oracle_calls: usize,
    pub cuts_added: usize,
    pub master_value: f64,
}

/// Difference-of-MNL value of offering `S` at dual point `theta`
/// (reduced convention): `Rucb(S) - sum_{i in S} theta_i pi_ucb(i, S)`.
fn cut_value(inst: &Instance, bounds: &OptimisticBounds, thetas: &[f64], items: &[usize]) -> f64 {
    let mut num_pos = 0.0;
    let mut den_pos = 1.0;
    let mut num_neg = 0.0;
    let mut den_neg = 1.0;
    for &i in items {
        num_pos += inst.revenue_of(i) * bounds.ucb[i - 1];
        den_pos += bounds.lcb[i - 1];
        num_neg += thetas[i - 1] * bounds.ucb[i - 1];
        den_neg += bounds.ucb[i - 1];
    }
    num_pos / den_pos - num_neg / den_neg
}

/// Separation for the reduced dual: the assortment maximizing the
/// difference-of-MNL cut value (exactly or via the guess-grid DP), and
/// its violation `value - lambda`. The returned set is always scored
/// exactly, whichever oracle proposed it.
pub fn separation(
    inst: &Instance,
    reduced: &ReducedProgram,
    bounds: &OptimisticBounds,
    dual: &DualPoint,
    mode: OracleMode,
    eps: f64,
) -> Result<(Assortment, f64)> {
    let n = inst.n_products();
    if dual.thetas.len() != n {
        return Err(Error::invalid("dual point does not match the instance"));
    }
    for &i in &reduced.zero_lcb_set {
        if dual.thetas[i - 1] != 0.0 {
            return Err(Error::invalid(format!(
                "theta_{i} must be zero on the zero-LCB set"
            )));
        }
    }
    let best = match mode {
        OracleMode::Exact => exact_separation(inst, bounds, &dual.thetas)?,
        OracleMode::Dp => dp_separation(inst, bounds, &dual.thetas, eps)?,
    };
    let value = cut_value(inst, bounds, &dual.thetas, best.items());
    Ok((best, value - dual.lambda))
}

/// Exhaustive argmax of the cut value over subsets of size at most `K`.
fn exact_separation(
    inst: &Instance,
    bounds: &OptimisticBounds,
    thetas: &[f64],
) -> Result<Assortment> {
    let n = inst.n_products();
    if n > SEPARATION_ENUM_CAP {
        return Err(Error::capability(format!(
            "exact separation supports N <= {SEPARATION_ENUM_CAP}, got {n}"
        )));
    }
    let mut best_items: Vec<usize> = Vec::new();
    let mut best_value = 0.0f64; // the empty set certifies feasibility at 0
    let mut items = Vec::with_capacity(inst.cardinality_cap());
    for mask in 1u64..(1u64 << n) {
        if (mask.count_ones() as usize) > inst.cardinality_cap() {
            continue;
        }
        items.clear();
        for i in 0..n {
            if mask >> i & 1 == 1 {
                items.push(i + 1);
            }
        }
        let v = cut_value(inst, bounds, thetas, &items);
        if v > best_value || (v == best_value && !best_items.is_empty() && items < best_items) {
            best_value = v;
            best_items = items.clone();
        }
    }
    Assortment::new(best_items)
}

/// Guess-grid DP proposal. Zero-LCB products keep their optimistic
/// revenue weight `r_i * ucb_i` by substituting a tiny positive-side
/// utility (the standard zero-utility replacement); the caller rescores
/// the proposal exactly, so the substitution only affects which set is
/// proposed.
fn dp_separation(
    inst: &Instance,
    bounds: &OptimisticBounds,
    thetas: &[f64],
    eps: f64,
) -> Result<Assortment> {
    let n = inst.n_products();
    let u_min = bounds
        .lcb
        .iter()
        .chain(bounds.ucb.iter())
        .filter(|v| **v > 0.0)
        .fold(f64::INFINITY, |a, &b| a.min(b));
    if !u_min.is_finite() {
        return Ok(Assortment::empty()); // all utilities zero
    }
    let eta = eps * u_min / (4.0 * n as f64);
    let products: Vec<DiffProduct> = (1..=n)
        .map(|i| {
            let (l, u) = (bounds.lcb[i - 1], bounds.ucb[i - 1]);
            let pos_utility = if l > 0.0 { l } else { eta };
            DiffProduct {
                pos_reward: inst.revenue_of(i) * u / pos_utility,
                pos_utility,
                // The dual point is already in the reduced convention,
                // so theta_i is the penalty reward on the ucb family.
                penalty: thetas[i - 1],
                neg_utility: u.max(pos_utility),
            }
        })
        .collect();
    let oracle = DiffAssortInstance::new(products, inst.cardinality_cap())?;
    let (s, _) = diff_assort::approx_solve(&oracle, eps)?;
    Ok(s)
}

/// Restricted master over a column pool: maximize UCB revenue subject
/// to the shrunk consumption caps and the convexity row. Returns the
/// objective, the column weights, and the dual point.
fn solve_master(
    inst: &Instance,
    bounds: &OptimisticBounds,
    omega: f64,
    pool: &[Assortment],
) -> Result<(f64, Vec<f64>, DualPoint)> {
    let n = inst.n_products();
    let t = inst.horizon() as f64;
    let mut lp =
        LinearProgram::maximize(pool.iter().map(|s| bounds.ucb_revenue(inst, s)).collect());
    for i in 1..=n {
        let coeffs: Vec<f64> = pool.iter().map(|s| bounds.lcb_consumption(i, s)).collect();
        let cap = (1.0 - omega) * inst.inventory_of(i) as f64 / t;
        lp.push_constraint(coeffs, Relation::Le, cap);
    }
    lp.push_constraint(vec![1.0; pool.len()], Relation::Eq, 1.0);
    let sol = lp::solve_with_limit(&lp, 4_000_000)?;
    let opt = sol.expect_optimal("restricted master")?;
    // Reduced-convention duals attach to the pi_ucb rows.
    let thetas: Vec<f64> = (0..n)
        .map(|i| {
            let raw = opt.duals[i].max(0.0);
            if bounds.ucb[i] > 0.0 {
                raw * bounds.lcb[i] / bounds.ucb[i]
            } else {
                0.0
            }
        })
        .collect();
    let lambda = opt.duals[n];
    Ok((
        opt.objective,
        opt.primal.clone(),
        DualPoint { lambda, thetas },
    ))
}

fn distribution_from(pool: &[Assortment], weights: &[f64]) -> Result<SparseDistribution> {
    SparseDistribution::new(pool.iter().cloned().zip(weights.iter().cloned()).collect())
}

/// Cutting-plane solve of the optimistic program. See
/// [`solve_optimistic_with_stats`] for the oracle-call accounting.
pub fn solve_optimistic(
    reduced: &ReducedProgram,
    bounds: &OptimisticBounds,
    inst: &Instance,
    config: &PlannerConfig,
) -> Result<SparseDistribution> {
    solve_optimistic_with_stats(reduced, bounds, inst, config).map(|(d, _)| d)
}

pub fn solve_optimistic_with_stats(
    reduced: &ReducedProgram,
    bounds: &OptimisticBounds,
    inst: &Instance,
    config: &PlannerConfig,
) -> Result<(SparseDistribution, PlannerStats)> {
    let n = inst.n_products();
    let max_cuts = config.max_cuts_per_product * n;
    let mut pool = vec![Assortment::empty()];
    let mut stats = PlannerStats::default();
    loop {
        let (value, weights, dual) = solve_master(inst, bounds, reduced.omega, &pool)?;
        stats.master_value = value;
        stats.oracle_calls += 1;
        let (cut, violation) = separation(
            inst,
            reduced,
            bounds,
            &dual,
            config.oracle_mode,
            config.eps_oracle,
        )?;
        if violation <= config.tol_cut || pool.contains(&cut) {
            return Ok((distribution_from(&pool, &weights)?, stats));
        }
        if stats.cuts_added >= max_cuts {
            return Err(Error::SolverStall {
                cuts: stats.cuts_added,
                value,
                best: Box::new(distribution_from(&pool, &weights)?),
            });
        }
        pool.push(cut);
        stats.cuts_added += 1;
    }
}

/// Exact optimum of the optimistic program by enumerating one column
/// per assortment of size at most `K`.
pub fn exact_solve_optimistic(
    reduced: &ReducedProgram,
    bounds: &OptimisticBounds,
    inst: &Instance,
) -> Result<(f64, SparseDistribution)> {
    let n = inst.n_products();
    if n > DEFAULT_ENUM_CAP {
        return Err(Error::capability(format!(
            "exact optimistic solve supports N <= {DEFAULT_ENUM_CAP}, got {n}"
        )));
    }
    let pool = all_assortments(n, inst.cardinality_cap());
    let (value, weights, _) = solve_master(inst, bounds, reduced.omega, &pool)?;
    Ok((value, distribution_from(&pool, &weights)?))
}

/// Argmax of the optimistic revenue over assortments of size at most
/// `K` (the zero-theta cut); used by the unconstrained baseline.
pub fn max_ucb_assortment(inst: &Instance, bounds: &OptimisticBounds) -> Result<(Assortment, f64)> {
    let thetas = vec![0.0; inst.n_products()];
    let s = exact_separation(inst, bounds, &thetas)?;
    let v = cut_value(inst, bounds, &thetas, s.items());
    Ok((s, v))
}

/// Every assortment over `[1, n]` with at most `cap` items, in mask
/// order.
pub fn all_assortments(n: usize, cap: usize) -> Vec<Assortment> {
    let mut pool = Vec::new();
    for mask in 0u64..(1u64 << n) {
        if (mask.count_ones() as usize) > cap {
            continue;
        }
        let items: Vec<usize> = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| i + 1)
            .collect();
        pool.push(Assortment::new(items).expect("valid"));
    }
    pool
}

/// The fluid benchmark: the optimistic program at exact bounds and
/// zero shrinkage, whose constraints are the true consumption rates
/// `p_i(S) <= q_i / T`. Returns the per-period value; the regret
/// benchmark is `T` times it. Enumerates columns for small `N`, and
/// otherwise falls back to column generation with the exact oracle on
/// the self-pair (both utility families equal to the true utilities).
pub fn solve_opt_lp(inst: &Instance) -> Result<(f64, SparseDistribution)> {
    let bounds = OptimisticBounds::exact(inst);
    let reduced = reduce(inst, &bounds, 0.0)?;
    if inst.n_products() <= DEFAULT_ENUM_CAP {
        let (value, dist) = exact_solve_optimistic(&reduced, &bounds, inst)?;
        return Ok((value, dist));
    }
    let config = PlannerConfig::default();
    let (dist, stats) = solve_optimistic_with_stats(&reduced, &bounds, inst, &config)?;
    Ok((stats.master_value, dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnl;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(
        cap: usize,
        horizon: usize,
        revenues: Vec<f64>,
        inventories: Vec<u64>,
        utilities: Vec<f64>,
    ) -> Instance {
        Instance::new(cap, horizon, revenues, inventories, utilities, 1.0).unwrap()
    }

    #[test]
    fn omega_frozen_value() {
        // K=1, T=16, N=1, v_max=1, C=288, q_min=1.
        let inst = instance(1, 16, vec![1.0], vec![1], vec![1.0]);
        let omega = compute_omega(&inst, 288.0);
        assert!(
            (omega - 32151.4450474708).abs() < 1e-9,
            "omega = {omega:.10}"
        );
    }

    #[test]
    fn omega_scales_inversely_with_min_inventory() {
        let a = instance(2, 100, vec![1.0; 3], vec![7, 9, 11], vec![0.5; 3]);
        let b = instance(2, 100, vec![1.0; 3], vec![14, 90, 110], vec![0.5; 3]);
        let (wa, wb) = (compute_omega(&a, 288.0), compute_omega(&b, 288.0));
        assert!((wa / 2.0 - wb).abs() < 1e-12 * wa);
    }

    #[test]
    fn omega_vanishes_for_large_inventory() {
        let small = instance(1, 50, vec![1.0], vec![1], vec![0.5]);
        let big = instance(1, 50, vec![1.0], vec![1_000_000_000], vec![0.5]);
        assert!(compute_omega(&big, 288.0) < 1e-3 * compute_omega(&small, 288.0));
    }

    #[test]
    fn reduce_exact_knowledge() {
        let inst = instance(2, 10, vec![2.0, 3.0], vec![5, 5], vec![0.5, 0.4]);
        let bounds = OptimisticBounds::exact(&inst);
        let rp = reduce(&inst, &bounds, 0.2).unwrap();
        assert!(rp.zero_lcb_set.is_empty());
        for i in 0..2 {
            assert!((rp.reduced_rewards[i] - inst.revenues()[i]).abs() < 1e-15);
            let expected = 0.8 * inst.inventories()[i] as f64 / 10.0;
            assert!((rp.reduced_caps[i].unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_caps_respect_floor() {
        // q >= 1 and ucb >= lcb give q_tilde >= (1 - omega) / T.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..20 {
            let n = rng.gen_range(1..=5usize);
            let t = rng.gen_range(2..=60usize);
            let inst = instance(
                n,
                t,
                vec![1.0; n],
                (0..n).map(|_| rng.gen_range(1..=9)).collect(),
                (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            );
            let bounds = random_sandwich(&mut rng, &inst);
            let omega = rng.gen_range(0.0..0.9);
            let rp = reduce(&inst, &bounds, omega).unwrap();
            for cap in rp.reduced_caps.iter().flatten() {
                assert!(*cap >= (1.0 - omega) / t as f64 - 1e-12);
            }
        }
    }

    fn random_sandwich(rng: &mut ChaCha8Rng, inst: &Instance) -> OptimisticBounds {
        let lcb: Vec<f64> = inst
            .true_utilities()
            .iter()
            .map(|v| v * rng.gen_range(0.0..1.0))
            .collect();
        let ucb: Vec<f64> = inst
            .true_utilities()
            .iter()
            .map(|v| (v * rng.gen_range(1.0..2.0)).min(1.0))
            .collect();
        OptimisticBounds::new(ucb, lcb).unwrap()
    }

    #[test]
    fn reduce_zero_lcb_products() {
        let inst = instance(2, 10, vec![1.0, 1.0], vec![5, 5], vec![0.5, 0.4]);
        let bounds = OptimisticBounds::new(vec![0.9, 0.8], vec![0.0, 0.3]).unwrap();
        let rp = reduce(&inst, &bounds, 0.0).unwrap();
        assert_eq!(rp.zero_lcb_set, vec![1]);
        assert!(rp.reduced_caps[0].is_none());
        assert!(rp.reduced_caps[1].is_some());
        assert_eq!(rp.reduced_rewards[0], 0.0);
        for i in 0..2 {
            assert!(rp.reduced_rewards[i] <= inst.revenues()[i]);
        }
    }

    #[test]
    fn reduce_rejects_omega_outside_unit_interval() {
        let inst = instance(1, 10, vec![1.0], vec![5], vec![0.5]);
        let bounds = OptimisticBounds::exact(&inst);
        assert!(reduce(&inst, &bounds, 1.0).is_err());
        assert!(reduce(&inst, &bounds, -0.1).is_err());
    }

    /// The two program forms value every distribution identically: the
    /// scaled capacity rows and the split-family objective reproduce
    /// the original mixed-bound expressions.
    #[test]
    fn reduced_form_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(2..=5usize);
            let inst = instance(
                n,
                20,
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                vec![5; n],
                (0..n).map(|_| rng.gen_range(0.1..0.9)).collect(),
            );
            let lcb: Vec<f64> = (0..n)
                .map(|i| {
                    if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen_range(0.0..inst.true_utilities()[i])
                    }
                })
                .collect();
            let ucb: Vec<f64> = (0..n)
                .map(|i| rng.gen_range(inst.true_utilities()[i]..1.0))
                .collect();
            let bounds = OptimisticBounds::new(ucb, lcb).unwrap();
            let omega = rng.gen_range(0.0..0.9);
            let rp = reduce(&inst, &bounds, omega).unwrap();

            // Random distribution over <= 5 assortments.
            let pool = all_assortments(n, n);
            let mut weights = vec![0.0; pool.len()];
            for _ in 0..5 {
                weights[rng.gen_range(0..pool.len())] += rng.gen_range(0.1..1.0);
            }
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }

            // Objective: direct mixed-bound form vs split-family form.
            let direct: f64 = pool
                .iter()
                .zip(&weights)
                .map(|(s, w)| w * bounds.ucb_revenue(&inst, s))
                .sum();
            let split: f64 = pool
                .iter()
                .zip(&weights)
                .map(|(s, w)| {
                    let den_l: f64 =
                        1.0 + s.items().iter().map(|&i| bounds.lcb[i - 1]).sum::<f64>();
                    let v: f64 = s
                        .items()
                        .iter()
                        .map(|&i| {
                            let l = bounds.lcb[i - 1];
                            let u = bounds.ucb[i - 1];
                            if l > 0.0 {
                                // rho_i * pi_lcb(i, S) with rho_i = r_i u / l
                                (inst.revenue_of(i) * u / l) * (l / den_l)
                            } else {
                                inst.revenue_of(i) * u / den_l
                            }
                        })
                        .sum();
                    w * v
                })
                .sum();
            assert!((direct - split).abs() < 1e-12, "{direct} vs {split}");

            // Constraints: scaled pi_ucb rows match the plcb rows.
            for i in 1..=n {
                let Some(cap) = rp.reduced_caps[i - 1] else {
                    continue;
                };
                let lhs_orig: f64 = pool
                    .iter()
                    .zip(&weights)
                    .map(|(s, w)| w * bounds.lcb_consumption(i, s))
                    .sum();
                let lhs_reduced: f64 = pool
                    .iter()
                    .zip(&weights)
                    .map(|(s, w)| w * bounds.ucb_share(i, s))
                    .sum();
                let scale = bounds.lcb[i - 1] / bounds.ucb[i - 1];
                assert!((lhs_orig - lhs_reduced * scale).abs() < 1e-12);
                let rhs_orig = (1.0 - omega) * inst.inventory_of(i) as f64 / 20.0;
                assert!((rhs_orig - cap * scale).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn separation_certificate_when_lambda_large() {
        let inst = instance(2, 10, vec![1.0, 1.0], vec![5, 5], vec![0.5, 0.5]);
        let bounds = OptimisticBounds::exact(&inst);
        let rp = reduce(&inst, &bounds, 0.0).unwrap();
        // Best single-MNL revenue is at most max r = 1; lambda = 2.
        let dual = DualPoint {
            lambda: 2.0,
            thetas: vec![0.0, 0.0],
        };
        let (_, violation) =
            separation(&inst, &rp, &bounds, &dual, OracleMode::Exact, 0.05).unwrap();
        assert!(violation <= 0.0);
    }

    #[test]
    fn separation_negative_lambda_always_violated() {
        let inst = instance(1, 10, vec![1.0], vec![5], vec![0.5]);
        let bounds = OptimisticBounds::exact(&inst);
        let rp = reduce(&inst, &bounds, 0.0).unwrap();
        let dual = DualPoint {
            lambda: -1.0,
            thetas: vec![0.0],
        };
        let (_, violation) =
            separation(&inst, &rp, &bounds, &dual, OracleMode::Exact, 0.05).unwrap();
        assert!(violation > 0.0);
    }

    #[test]
    fn separation_exact_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(2..=8usize);
            let k = rng.gen_range(1..=n);
            let inst = instance(
                k,
                30,
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                vec![10; n],
                (0..n).map(|_| rng.gen_range(0.05..0.9)).collect(),
            );
            let lcb: Vec<f64> = inst.true_utilities().iter().map(|v| v * 0.7).collect();
            let bounds = OptimisticBounds::new(inst.true_utilities().to_vec(), lcb).unwrap();
            let rp = reduce(&inst, &bounds, 0.1).unwrap();
            let thetas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..0.5)).collect();
            let dual = DualPoint {
                lambda: 0.0,
                thetas: thetas.clone(),
            };
            let (s, violation) =
                separation(&inst, &rp, &bounds, &dual, OracleMode::Exact, 0.05).unwrap();
            let mut best = 0.0f64;
            for cand in all_assortments(n, k) {
                best = best.max(cut_value(&inst, &bounds, &thetas, cand.items()));
            }
            let got = cut_value(&inst, &bounds, &thetas, s.items());
            assert!((got - best).abs() < 1e-12);
            assert!((violation - best).abs() < 1e-12);
        }
    }

    #[test]
    fn dp_separation_meets_weak_guarantee_per_cut() {
        // The dp-mode proposal, re-scored exactly, stays within the
        // weak guarantee of the exact argmax for every dual point.
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let eps = 0.05;
        for _ in 0..20 {
            let n = rng.gen_range(2..=6usize);
            let k = rng.gen_range(1..=n);
            let inst = instance(
                k,
                30,
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                vec![10; n],
                (0..n).map(|_| rng.gen_range(0.05..0.9)).collect(),
            );
            let lcb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| v * rng.gen_range(0.2..1.0))
                .collect();
            let bounds = OptimisticBounds::new(inst.true_utilities().to_vec(), lcb).unwrap();
            let rp = reduce(&inst, &bounds, 0.1).unwrap();
            let thetas: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let dual = DualPoint {
                lambda: 0.0,
                thetas,
            };
            let (s_star, exact_violation) =
                separation(&inst, &rp, &bounds, &dual, OracleMode::Exact, eps).unwrap();
            let (_, dp_violation) =
                separation(&inst, &rp, &bounds, &dual, OracleMode::Dp, eps).unwrap();
            let den: f64 = 1.0
                + s_star
                    .items()
                    .iter()
                    .map(|&i| bounds.ucb[i - 1])
                    .sum::<f64>();
            let penalty_mass: f64 = s_star
                .items()
                .iter()
                .map(|&i| dual.thetas[i - 1] * bounds.ucb[i - 1] / den)
                .sum();
            let floor = (1.0 - 4.0 * eps) * exact_violation - 16.0 * eps * penalty_mass;
            assert!(
                dp_violation >= floor - 1e-9,
                "dp cut {dp_violation} below {floor} (exact {exact_violation})"
            );
        }
    }

    #[test]
    fn optimistic_unconstrained_concentrates_on_argmax() {
        // Slack capacities, exact bounds: the value is max_S R(S) and
        // the support concentrates on an argmax set.
        let inst = instance(
            2,
            10,
            vec![1.0, 0.8, 0.1],
            vec![100, 100, 100],
            vec![0.6, 0.5, 0.1],
        );
        let bounds = OptimisticBounds::exact(&inst);
        let rp = reduce(&inst, &bounds, 0.0).unwrap();
        let (dist, stats) =
            solve_optimistic_with_stats(&rp, &bounds, &inst, &PlannerConfig::default()).unwrap();
        let mut best = 0.0f64;
        for s in all_assortments(3, 2) {
            best = best.max(mnl::revenue(&inst, &s).unwrap());
        }
        assert!((stats.master_value - best).abs() < 1e-8);
        assert_eq!(dist.support().len(), 1);
        assert!(dist.support()[0].1 > 0.999999);
    }

    #[test]
    fn optimistic_single_product_hand_example() {
        // N=1, K=1, r=1, v=1, q=T/4, omega=0: val 0.25, y({1}) = 0.5.
        let inst = instance(1, 8, vec![1.0], vec![2], vec![1.0]);
        let bounds = OptimisticBounds::exact(&inst);
        let rp = reduce(&inst, &bounds, 0.0).unwrap();
        let (dist, stats) =
            solve_optimistic_with_stats(&rp, &bounds, &inst, &PlannerConfig::default()).unwrap();
        assert!((stats.master_value - 0.25).abs() < 1e-9);
        let w1 = dist
            .support()
            .iter()
            .find(|(s, _)| s.items() == [1])
            .map(|(_, w)| *w)
            .unwrap();
        let w0 = dist
            .support()
            .iter()
            .find(|(s, _)| s.is_empty())
            .map(|(_, w)| *w)
            .unwrap();
        assert!((w1 - 0.5).abs() < 1e-8);
        assert!((w0 - 0.5).abs() < 1e-8);

        let (exact_val, _) = exact_solve_optimistic(&rp, &bounds, &inst).unwrap();
        assert!((exact_val - stats.master_value).abs() < 1e-8);
    }

    #[test]
    fn exact_optimistic_zero_revenue() {
        let inst = instance(1, 10, vec![1.0], vec![5], vec![0.0]);
        let bounds = OptimisticBounds::new(vec![0.0], vec![0.0]).unwrap();
        let rp = reduce(&inst, &bounds, 0.0).unwrap();
        let (val, _) = exact_solve_optimistic(&rp, &bounds, &inst).unwrap();
        assert!(val.abs() < 1e-12);
    }

    #[test]
    fn exact_optimistic_omega_one_boundary() {
        // All capacities zero: only consumption-free columns are
        // feasible; with all lcb > 0 that is just the empty set.
        let inst = instance(2, 10, vec![1.0, 1.0], vec![5, 5], vec![0.5, 0.5]);
        let bounds = OptimisticBounds::exact(&inst);
        let rp = ReducedProgram {
            reduced_caps: vec![Some(0.0), Some(0.0)],
            reduced_rewards: inst.revenues().to_vec(),
            zero_lcb_set: vec![],
            omega: 1.0,
        };
        let (val, dist) = exact_solve_optimistic(&rp, &bounds, &inst).unwrap();
        assert!(val.abs() < 1e-9);
        assert_eq!(dist.support().len(), 1);
        assert!(dist.support()[0].0.is_empty());
    }

    #[test]
    fn cutting_planes_match_enumeration_exact_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let n = rng.gen_range(2..=6usize);
            let k = rng.gen_range(1..=3usize.min(n));
            let inst = instance(
                k,
                rng.gen_range(5..=50),
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(1..=8)).collect(),
                (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            );
            let lcb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| {
                    if rng.gen_bool(0.25) {
                        0.0
                    } else {
                        v * rng.gen_range(0.2..1.0)
                    }
                })
                .collect();
            let ucb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| (v * rng.gen_range(1.0..1.8)).min(1.0))
                .collect();
            let bounds = OptimisticBounds::new(ucb, lcb).unwrap();
            let omega = rng.gen_range(0.0..0.5);
            let rp = reduce(&inst, &bounds, omega).unwrap();
            let (exact_val, _) = exact_solve_optimistic(&rp, &bounds, &inst).unwrap();
            let (dist, stats) =
                solve_optimistic_with_stats(&rp, &bounds, &inst, &PlannerConfig::default())
                    .unwrap();
            assert!(
                (stats.master_value - exact_val).abs() < 1e-6,
                "cutting planes {} vs enumeration {exact_val}",
                stats.master_value
            );
            // Support is bounded by the oracle calls made.
            assert!(dist.support().len() <= stats.oracle_calls);
            // Feasibility of the returned distribution.
            for i in 1..=n {
                let used = dist.expectation(|s| bounds.lcb_consumption(i, s));
                let cap = (1.0 - omega) * inst.inventory_of(i) as f64 / inst.horizon() as f64;
                assert!(used <= cap + 1e-8);
            }
            // Primal value consistency.
            let val = dist.expectation(|s| bounds.ucb_revenue(&inst, s));
            assert!((val - stats.master_value).abs() < 1e-9);
        }
    }

    #[test]
    fn restricted_dual_objective_brackets_primal() {
        // The dual point read from the master satisfies
        // lambda + sum_i theta_i q_tilde_i >= primal value (equality at
        // the optimum by strong duality).
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..15 {
            let n = rng.gen_range(2..=5usize);
            let inst = instance(
                rng.gen_range(1..=n),
                rng.gen_range(5..=40),
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(1..=8)).collect(),
                (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            );
            let lcb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| v * rng.gen_range(0.2..1.0))
                .collect();
            let bounds = OptimisticBounds::new(inst.true_utilities().to_vec(), lcb).unwrap();
            let omega = rng.gen_range(0.0..0.4);
            let rp = reduce(&inst, &bounds, omega).unwrap();
            let pool = all_assortments(n, inst.cardinality_cap());
            let (value, _, dual) = solve_master(&inst, &bounds, omega, &pool).unwrap();
            let dual_obj: f64 = dual.lambda
                + dual
                    .thetas
                    .iter()
                    .zip(&rp.reduced_caps)
                    .map(|(th, cap)| th * cap.unwrap_or(0.0))
                    .sum::<f64>();
            assert!(
                dual_obj >= value - 1e-7,
                "dual objective {dual_obj} below primal {value}"
            );
            assert!(
                (dual_obj - value).abs() <= 1e-7 * (1.0 + value.abs()),
                "strong duality gap: {dual_obj} vs {value}"
            );
        }
    }

    #[test]
    fn opt_lp_column_generation_beyond_enum_cap() {
        // Above the enumeration cap the benchmark switches to column
        // generation; symmetric instances have the closed form
        // min(K v r / (1 + K v), N q r / T).
        for (n, k, v, r, q, t) in [
            (16usize, 3usize, 0.4f64, 1.2f64, 2u64, 50usize), // slack stock
            (16, 3, 0.4, 1.2, 1, 100),                        // binding stock
        ] {
            let inst = instance(k, t, vec![r; n], vec![q; n], vec![v; n]);
            let (val, dist) = solve_opt_lp(&inst).unwrap();
            let kv = k as f64 * v;
            let expected = (kv * r / (1.0 + kv)).min(n as f64 * q as f64 * r / t as f64);
            assert!(
                (val - expected).abs() < 1e-7,
                "n={n}: value {val} vs closed form {expected}"
            );
            // Returned distribution is feasible for the true rates.
            for i in 1..=n {
                let used = dist.expectation(|s| {
                    if s.contains(i) {
                        inst.utility_of(i) / (1.0 + inst.total_utility(s))
                    } else {
                        0.0
                    }
                });
                assert!(used <= q as f64 / t as f64 + 1e-8);
            }
        }
    }

    #[test]
    fn optimism_dominates_fluid_benchmark() {
        // With a valid sandwich, the optimistic value is at least
        // (1 - omega) times the fluid benchmark value.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..15 {
            let n = rng.gen_range(2..=5usize);
            let k = rng.gen_range(1..=n);
            let inst = instance(
                k,
                rng.gen_range(8..=40),
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(1..=10)).collect(),
                (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            );
            let lcb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| v * rng.gen_range(0.0..1.0))
                .collect();
            let ucb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| (v * rng.gen_range(1.0..2.0)).min(1.0))
                .collect();
            let bounds = OptimisticBounds::new(ucb, lcb).unwrap();
            let omega = rng.gen_range(0.0..0.6);
            let rp = reduce(&inst, &bounds, omega).unwrap();
            let (val, _) = exact_solve_optimistic(&rp, &bounds, &inst).unwrap();
            let (opt_lp, _) = solve_opt_lp(&inst).unwrap();
            assert!(
                val >= (1.0 - omega) * opt_lp - 1e-8,
                "val {val} < (1-{omega}) * {opt_lp}"
            );
        }
    }

    #[test]
    fn opt_lp_hand_examples() {
        // N=1, r=1, v=1, q=T/4 -> 0.25.
        let inst = instance(1, 8, vec![1.0], vec![2], vec![1.0]);
        let (val, dist) = solve_opt_lp(&inst).unwrap();
        assert!((val - 0.25).abs() < 1e-9);
        let w1: f64 = dist.expectation(|s| if s.is_empty() { 0.0 } else { 1.0 });
        assert!((w1 - 0.5).abs() < 1e-8);

        // All utilities zero -> 0.
        let dead = instance(1, 10, vec![1.0], vec![5], vec![0.0]);
        let (val, _) = solve_opt_lp(&dead).unwrap();
        assert!(val.abs() < 1e-12);

        // Slack inventories -> max_S R(S).
        let slack = instance(2, 10, vec![1.0, 0.7], vec![100, 100], vec![0.5, 0.4]);
        let (val, _) = solve_opt_lp(&slack).unwrap();
        let mut best = 0.0f64;
        for s in all_assortments(2, 2) {
            best = best.max(mnl::revenue(&slack, &s).unwrap());
        }
        assert!((val - best).abs() < 1e-9);
    }

    #[test]
    fn dp_oracle_respects_weak_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let eps = 0.05;
        for _ in 0..15 {
            let n = rng.gen_range(2..=6usize);
            let k = rng.gen_range(1..=3usize.min(n));
            let t = rng.gen_range(5..=100usize);
            let inst = instance(
                k,
                t,
                (0..n).map(|_| rng.gen_range(0.5..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(1..=8)).collect(),
                (0..n).map(|_| rng.gen_range(0.05..0.95)).collect(),
            );
            let lcb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| v * rng.gen_range(0.1..1.0))
                .collect();
            let ucb: Vec<f64> = inst
                .true_utilities()
                .iter()
                .map(|v| (v * rng.gen_range(1.0..1.5)).min(1.0))
                .collect();
            let bounds = OptimisticBounds::new(ucb, lcb).unwrap();
            let rp = reduce(&inst, &bounds, rng.gen_range(0.0..0.3)).unwrap();
            let (exact_val, _) = exact_solve_optimistic(&rp, &bounds, &inst).unwrap();
            let config = PlannerConfig {
                oracle_mode: OracleMode::Dp,
                eps_oracle: eps,
                ..PlannerConfig::default()
            };
            let (_, stats) = solve_optimistic_with_stats(&rp, &bounds, &inst, &config).unwrap();
            let factor = 1.0 / (1.0 + 16.0 * eps * t as f64) - 1e-6;
            assert!(
                stats.master_value >= factor * exact_val - 1e-9,
                "dp value {} below weak factor of {exact_val}",
                stats.master_value
            );
        }
    }
}
