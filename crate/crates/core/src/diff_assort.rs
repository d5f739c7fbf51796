//! Assortment maximization for a difference of two MNL revenues.
//!
//! Instances carry, per product, a reward and utility for the positive
//! MNL family and a penalty and utility for the negative family. The
//! objective of offering `S` is
//!
//! ```text
//! sum_{i in S} pos_reward_i * pos_utility_i / (1 + sum_{j in S} pos_utility_j)
//!   - sum_{i in S} penalty_i * neg_utility_i / (1 + sum_{j in S} neg_utility_j)
//! ```
//!
//! subject to `|S| <= K`. Two solvers are provided: exact enumeration
//! for small `N`, and a guess-grid procedure that brackets the four
//! achievable numerator/denominator sums on geometric grids and runs,
//! per guess, a min-cardinality feasibility dynamic program on
//! discretized coefficients. The DP witness satisfies each guessed
//! inequality up to a `(1 ± 2*eps)` factor, which yields a weak
//! approximation guarantee for the overall maximization: the returned
//! value is at least `(1 - 4*eps)` of the optimum minus a penalty-mass
//! term scaled by `16*eps`.

use std::collections::{BTreeMap, BTreeSet};

use crate::mnl::Assortment;
use crate::{Error, Result};

/// Enumeration cap for [`exact_solve`] and for the guess generation in
/// [`approx_solve`].
pub const DEFAULT_ENUM_CAP: usize = 14;

/// Cap on live DP states per product slice.
const DP_STATE_CAP: usize = 4_000_000;

/// Per-product data of a difference-of-MNL instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffProduct {
    pub pos_reward: f64,
    pub pos_utility: f64,
    pub penalty: f64,
    pub neg_utility: f64,
}

/// A difference-of-MNL assortment instance with cardinality cap.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffAssortInstance {
    products: Vec<DiffProduct>,
    cap: usize,
}

impl DiffAssortInstance {
    /// Validates nonnegative finite data with `pos_utility_i <=
    /// neg_utility_i` per product and `1 <= cap <= N`.
    pub fn new(products: Vec<DiffProduct>, cap: usize) -> Result<Self> {
        if products.is_empty() {
            return Err(Error::invalid("diff-assort instance needs products"));
        }
        if cap == 0 || cap > products.len() {
            return Err(Error::invalid(format!(
                "cardinality cap must be in [1, {}], got {cap}",
                products.len()
            )));
        }
        for (i, p) in products.iter().enumerate() {
            let vals = [p.pos_reward, p.pos_utility, p.penalty, p.neg_utility];
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::invalid(format!(
                    "product {} has negative or non-finite data",
                    i + 1
                )));
            }
            if p.pos_utility > p.neg_utility + 1e-12 {
                return Err(Error::invalid(format!(
                    "product {}: pos_utility {} exceeds neg_utility {}",
                    i + 1,
                    p.pos_utility,
                    p.neg_utility
                )));
            }
        }
        Ok(DiffAssortInstance { products, cap })
    }

    pub fn n(&self) -> usize {
        self.products.len()
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn products(&self) -> &[DiffProduct] {
        &self.products
    }
}

/// Objective value of offering `s`; zero for the empty set.
pub fn objective(inst: &DiffAssortInstance, s: &Assortment) -> Result<f64> {
    if s.len() > inst.cap {
        return Err(Error::invalid(format!(
            "assortment size {} exceeds cap {}",
            s.len(),
            inst.cap
        )));
    }
    if let Some(&last) = s.items().last() {
        if last > inst.n() {
            return Err(Error::invalid(format!(
                "assortment item {last} out of range [1, {}]",
                inst.n()
            )));
        }
    }
    Ok(objective_unchecked(inst, s.items()))
}

fn objective_unchecked(inst: &DiffAssortInstance, items: &[usize]) -> f64 {
    let mut pos_num = 0.0;
    let mut pos_den = 1.0;
    let mut neg_num = 0.0;
    let mut neg_den = 1.0;
    for &i in items {
        let p = &inst.products[i - 1];
        pos_num += p.pos_reward * p.pos_utility;
        pos_den += p.pos_utility;
        neg_num += p.penalty * p.neg_utility;
        neg_den += p.neg_utility;
    }
    pos_num / pos_den - neg_num / neg_den
}

/// Exact optimum by subset enumeration. Ties (exact value equality) go
/// to the lexicographically smallest item list; the empty set is always
/// a candidate, so the value is at least 0.
pub fn exact_solve(inst: &DiffAssortInstance) -> Result<(Assortment, f64)> {
    exact_solve_with_cap(inst, DEFAULT_ENUM_CAP)
}

pub fn exact_solve_with_cap(
    inst: &DiffAssortInstance,
    enum_cap: usize,
) -> Result<(Assortment, f64)> {
    let n = inst.n();
    if n > enum_cap {
        return Err(Error::capability(format!(
            "exact enumeration supports N <= {enum_cap}, got {n}"
        )));
    }
    let mut best_items: Vec<usize> = Vec::new();
    let mut best_value = 0.0f64;
    let mut items = Vec::with_capacity(inst.cap);
    for mask in 1u64..(1u64 << n) {
        if (mask.count_ones() as usize) > inst.cap {
            continue;
        }
        items.clear();
        for i in 0..n {
            if mask >> i & 1 == 1 {
                items.push(i + 1);
            }
        }
        let v = objective_unchecked(inst, &items);
        if v > best_value || (v == best_value && !best_items.is_empty() && items < best_items) {
            best_value = v;
            best_items = items.clone();
        }
    }
    Ok((Assortment::new(best_items)?, best_value))
}

// ---------------------------------------------------------------------------
// Guess grids
// ---------------------------------------------------------------------------

/// Geometric guess grids: `gamma` brackets the achievable numerator
/// sums, `delta` the achievable denominator sums.
#[derive(Debug, Clone)]
pub struct GuessGrids {
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
    pub eps: f64,
}

/// One guess tuple: numerator targets `(h1, h2)` drawn from `gamma`
/// (plus the exact guess `h2 = 0` for penalty-free sets) and
/// denominator targets `(g1, g2)` from `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guess {
    pub h1: f64,
    pub h2: f64,
    pub g1: f64,
    pub g2: f64,
}

/// Builds the grids from the instance's positive reward and utility
/// ranges: `gamma` spans `[r*u, N*R*U*(1+eps))` and `delta` spans
/// `[min(u,1), (1+N*U)*(1+eps))`, both with exact consecutive ratio
/// `1+eps`.
pub fn build_grids(inst: &DiffAssortInstance, eps: f64) -> Result<GuessGrids> {
    check_eps(eps)?;
    let mut u = f64::INFINITY;
    let mut cap_u = 0.0f64;
    let mut r = f64::INFINITY;
    let mut cap_r = 0.0f64;
    for p in &inst.products {
        for &util in &[p.pos_utility, p.neg_utility] {
            if util > 0.0 {
                u = u.min(util);
                cap_u = cap_u.max(util);
            }
        }
        for &rew in &[p.pos_reward, p.penalty] {
            if rew > 0.0 {
                r = r.min(rew);
                cap_r = cap_r.max(rew);
            }
        }
    }
    if !u.is_finite() || !r.is_finite() {
        return Err(Error::invalid(
            "grids need at least one positive utility and one positive reward",
        ));
    }
    let n = inst.n() as f64;
    let gamma = geometric_grid(r * u, n * cap_r * cap_u, eps);
    let delta = geometric_grid(u.min(1.0), 1.0 + n * cap_u, eps);
    Ok(GuessGrids { gamma, delta, eps })
}

fn check_eps(eps: f64) -> Result<()> {
    // 1/8 is the largest eps for which the (1-4e)/16e guarantee
    // constants still follow from the bracketing chain.
    if !(eps > 0.0 && eps < 0.125) {
        return Err(Error::invalid(format!(
            "eps must lie in (0, 1/8), got {eps}"
        )));
    }
    Ok(())
}

/// Points `start * (1+eps)^k` until `stop` is covered.
fn geometric_grid(start: f64, stop: f64, eps: f64) -> Vec<f64> {
    let mut pts = vec![start];
    let mut p = start;
    while p < stop {
        p *= 1.0 + eps;
        pts.push(p);
    }
    pts
}

/// Largest grid point `<= x`, if any.
fn bracket_below(grid: &[f64], x: f64) -> Option<f64> {
    match grid.partition_point(|g| *g <= x) {
        0 => None,
        k => Some(grid[k - 1]),
    }
}

/// Smallest grid point `>= x`, if any.
fn bracket_above(grid: &[f64], x: f64) -> Option<f64> {
    let k = grid.partition_point(|g| *g < x);
    grid.get(k).copied()
}

// ---------------------------------------------------------------------------
// Dynamic program
// ---------------------------------------------------------------------------

/// Discretized coefficients for one guess. Requirement-axis
/// contributions (`r_bar`, `vu_bar`) saturate at the threshold `cap_i`;
/// budget-axis contributions above `cap_j` mark the product unusable
/// for that guess.
#[derive(Debug, Clone)]
struct Discretized {
    r_bar: Vec<i64>,
    vl_bar: Vec<i64>,
    th_bar: Vec<i64>,
    vu_bar: Vec<i64>,
    v0_l: i64,
    v0_u: i64,
    cap_i: i64,
    cap_j: i64,
}

fn scale_down(value: f64, scale: f64, cap: i64) -> i64 {
    if scale <= 0.0 {
        return if value > 0.0 { cap } else { 0 };
    }
    let x = (value / scale).floor();
    if x >= cap as f64 {
        cap
    } else {
        x as i64
    }
}

fn scale_up(value: f64, scale: f64, cap: i64) -> i64 {
    if scale <= 0.0 {
        // Zero budget: positive usage is inadmissible.
        return if value > 0.0 { cap + 1 } else { 0 };
    }
    let x = (value / scale).ceil();
    if x > cap as f64 {
        cap + 1
    } else {
        x as i64
    }
}

fn discretize(inst: &DiffAssortInstance, guess: &Guess, eps: f64) -> Discretized {
    let n = inst.n() as f64;
    let cap_i = (n / eps).floor() as i64 - inst.n() as i64;
    let cap_j = ((n + 1.0) / eps).floor() as i64 + inst.n() as i64 + 1;
    let s1 = eps * guess.h1 / n;
    let s2 = eps * guess.g1 / (n + 1.0);
    let s3 = eps * guess.h2 / (n + 1.0);
    let s4 = eps * guess.g2 / n;
    let mut d = Discretized {
        r_bar: Vec::with_capacity(inst.n()),
        vl_bar: Vec::with_capacity(inst.n()),
        th_bar: Vec::with_capacity(inst.n()),
        vu_bar: Vec::with_capacity(inst.n()),
        v0_l: scale_up(1.0, s2, cap_j),
        v0_u: scale_down(1.0, s4, cap_i),
        cap_i,
        cap_j,
    };
    for p in &inst.products {
        d.r_bar
            .push(scale_down(p.pos_reward * p.pos_utility, s1, cap_i));
        d.vl_bar.push(scale_up(p.pos_utility, s2, cap_j));
        d.th_bar
            .push(scale_up(p.penalty * p.neg_utility, s3, cap_j));
        d.vu_bar.push(scale_down(p.neg_utility, s4, cap_i));
    }
    d
}

type StateKey = (i64, i64, i64, i64);

#[derive(Debug, Clone, Copy)]
struct DpEntry {
    card: u32,
    mask: u64,
}

type Slice = BTreeMap<StateKey, DpEntry>;

fn merge(slice: &mut Slice, key: StateKey, entry: DpEntry) {
    match slice.get_mut(&key) {
        None => {
            slice.insert(key, entry);
        }
        Some(existing) => {
            if entry.card < existing.card
                || (entry.card == existing.card
                    && mask_items(entry.mask) < mask_items(existing.mask))
            {
                *existing = entry;
            }
        }
    }
}

fn mask_items(mask: u64) -> Vec<usize> {
    (0..64)
        .filter(|i| mask >> i & 1 == 1)
        .map(|i| i + 1)
        .collect()
}

/// Advances the DP by one product: every state either skips or takes
/// product `p` (0-based).
fn dp_step(inst: &DiffAssortInstance, d: &Discretized, prev: &Slice, p: usize) -> Result<Slice> {
    let mut next = prev.clone();
    let max_card = inst.cap as u32;
    for (&(a1, a2, b1, b2), entry) in prev {
        if entry.card + 1 > max_card {
            continue;
        }
        let nb1 = b1 + d.vl_bar[p];
        let nb2 = b2 + d.th_bar[p];
        if nb1 > d.cap_j || nb2 > d.cap_j {
            continue;
        }
        let key = (
            (a1 + d.r_bar[p]).min(d.cap_i),
            (a2 + d.vu_bar[p]).min(d.cap_i),
            nb1,
            nb2,
        );
        merge(
            &mut next,
            key,
            DpEntry {
                card: entry.card + 1,
                mask: entry.mask | 1 << p,
            },
        );
    }
    if next.len() > DP_STATE_CAP {
        return Err(Error::capability(format!(
            "DP state table exceeded {DP_STATE_CAP} entries"
        )));
    }
    Ok(next)
}

fn dp_initial(d: &Discretized) -> Option<Slice> {
    if d.v0_l > d.cap_j {
        return None; // no set can fit the first denominator budget
    }
    let mut slice = Slice::new();
    slice.insert(
        (0, d.v0_u.min(d.cap_i), d.v0_l, 0),
        DpEntry { card: 0, mask: 0 },
    );
    Some(slice)
}

/// The per-guess feasibility table, retaining every product slice so
/// tests can probe intermediate thresholds.
#[derive(Debug)]
pub struct DpTable {
    slices: Vec<Slice>,
    /// Requirement-axis threshold `I = floor(N/eps) - N`.
    pub threshold_i: i64,
    /// Budget-axis threshold `J = floor((N+1)/eps) + N + 1`.
    pub threshold_j: i64,
}

impl DpTable {
    /// Runs the DP for `guess`, keeping all slices.
    pub fn build(inst: &DiffAssortInstance, guess: &Guess, eps: f64) -> Result<DpTable> {
        check_eps(eps)?;
        let d = discretize(inst, guess, eps);
        let mut slices = Vec::with_capacity(inst.n() + 1);
        let Some(init) = dp_initial(&d) else {
            return Ok(DpTable {
                slices: vec![Slice::new()],
                threshold_i: d.cap_i,
                threshold_j: d.cap_j,
            });
        };
        slices.push(init);
        for p in 0..inst.n() {
            let next = dp_step(inst, &d, slices.last().expect("nonempty"), p)?;
            slices.push(next);
        }
        Ok(DpTable {
            slices,
            threshold_i: d.cap_i,
            threshold_j: d.cap_j,
        })
    }

    /// Minimum cardinality of a subset of the first `p` products whose
    /// discretized sums meet the thresholds
    /// `(>= i1, >= i2, <= j1, <= j2)`, together with its witness.
    pub fn query(&self, p: usize, i1: i64, i2: i64, j1: i64, j2: i64) -> Option<(u32, Assortment)> {
        let slice = self.slices.get(p)?;
        let mut best: Option<(u32, Vec<usize>)> = None;
        for (&(a1, a2, b1, b2), entry) in slice {
            if a1 >= i1 && a2 >= i2 && b1 <= j1 && b2 <= j2 {
                let items = mask_items(entry.mask);
                match &best {
                    None => best = Some((entry.card, items)),
                    Some((c, it)) => {
                        if entry.card < *c || (entry.card == *c && items < *it) {
                            best = Some((entry.card, items));
                        }
                    }
                }
            }
        }
        best.map(|(c, items)| (c, Assortment::new(items).expect("valid items")))
    }
}

/// Runs the guess DP and returns a witness of cardinality at most `K`
/// whose four sums meet the guessed targets within `(1 ± 2*eps)`
/// factors, or `None` when no subset passes the discretized test.
pub fn dp_solve(inst: &DiffAssortInstance, guess: &Guess, eps: f64) -> Result<Option<Assortment>> {
    check_eps(eps)?;
    let d = discretize(inst, guess, eps);
    let Some(mut slice) = dp_initial(&d) else {
        return Ok(None);
    };
    for p in 0..inst.n() {
        slice = dp_step(inst, &d, &slice, p)?;
    }
    let mut best: Option<(u32, Vec<usize>)> = None;
    for (&(a1, a2, _b1, _b2), entry) in &slice {
        if a1 >= d.cap_i && a2 >= d.cap_i {
            let items = mask_items(entry.mask);
            match &best {
                None => best = Some((entry.card, items)),
                Some((c, it)) => {
                    if entry.card < *c || (entry.card == *c && items < *it) {
                        best = Some((entry.card, items));
                    }
                }
            }
        }
    }
    match best {
        Some((card, items)) if card as usize <= inst.cap => Ok(Some(Assortment::new(items)?)),
        _ => Ok(None),
    }
}

/// Checks the four relaxed guess inequalities for `s`:
/// `x1 >= h1(1-2e)`, `d1 <= g1(1+2e)`, `x2 <= h2(1+2e)`, `d2 >= g2(1-2e)`.
pub fn satisfies_dp_guarantee(
    inst: &DiffAssortInstance,
    s: &Assortment,
    guess: &Guess,
    eps: f64,
) -> bool {
    let (x1, d1, x2, d2) = sums(inst, s.items());
    x1 >= guess.h1 * (1.0 - 2.0 * eps) - 1e-12
        && d1 <= guess.g1 * (1.0 + 2.0 * eps) + 1e-12
        && x2 <= guess.h2 * (1.0 + 2.0 * eps) + 1e-12
        && d2 >= guess.g2 * (1.0 - 2.0 * eps) - 1e-12
}

fn sums(inst: &DiffAssortInstance, items: &[usize]) -> (f64, f64, f64, f64) {
    let mut x1 = 0.0;
    let mut d1 = 1.0;
    let mut x2 = 0.0;
    let mut d2 = 1.0;
    for &i in items {
        let p = &inst.products[i - 1];
        x1 += p.pos_reward * p.pos_utility;
        d1 += p.pos_utility;
        x2 += p.penalty * p.neg_utility;
        d2 += p.neg_utility;
    }
    (x1, d1, x2, d2)
}

// ---------------------------------------------------------------------------
// Approximate maximization over all guesses
// ---------------------------------------------------------------------------

/// Guess-grid approximate maximization.
///
/// Guesses are restricted to the bracket tuples of sums achievable by
/// some subset of size at most `K`; every other guess either fails the
/// DP or cannot improve on these candidates. The per-guess DP runs at
/// `eps/2` so its `(1 ± eps)` output factors compose with the
/// `(1+eps)` bracketing into the stated weak guarantee, and every
/// candidate witness is scored with the exact objective. The empty set
/// is always a candidate, so the value is nonnegative.
pub fn approx_solve(inst: &DiffAssortInstance, eps: f64) -> Result<(Assortment, f64)> {
    approx_solve_with_cap(inst, eps, DEFAULT_ENUM_CAP)
}

pub fn approx_solve_with_cap(
    inst: &DiffAssortInstance,
    eps: f64,
    enum_cap: usize,
) -> Result<(Assortment, f64)> {
    check_eps(eps)?;
    let n = inst.n();
    if n > enum_cap {
        return Err(Error::capability(format!(
            "guess enumeration supports N <= {enum_cap}, got {n}"
        )));
    }

    // Drop products with no live utility on either side; they cannot
    // move any sum.
    let kept: Vec<usize> = (0..n)
        .filter(|&i| {
            let p = &inst.products[i];
            p.pos_utility > 0.0 || p.neg_utility > 0.0
        })
        .collect();
    if !inst
        .products
        .iter()
        .any(|p| p.pos_reward > 0.0 && (p.pos_utility > 0.0 || p.neg_utility > 0.0))
    {
        // No set can have a positive revenue side, so nothing beats the
        // empty assortment.
        return Ok((Assortment::empty(), 0.0));
    }

    // Replace zero positive-side utilities so every kept product has a
    // geometric bracket: eps * u * r / (N * R) with u the smallest
    // strictly positive pos_utility.
    let u_pos = inst
        .products
        .iter()
        .filter(|p| p.pos_utility > 0.0)
        .map(|p| p.pos_utility)
        .fold(f64::INFINITY, f64::min);
    let mut r_min = f64::INFINITY;
    let mut r_max = 0.0f64;
    for p in &inst.products {
        for &rew in &[p.pos_reward, p.penalty] {
            if rew > 0.0 {
                r_min = r_min.min(rew);
                r_max = r_max.max(rew);
            }
        }
    }
    if !u_pos.is_finite() || !r_min.is_finite() {
        return Ok((Assortment::empty(), 0.0));
    }
    let replacement = eps * u_pos * r_min / (n as f64 * r_max);

    let work_products: Vec<DiffProduct> = kept
        .iter()
        .map(|&i| {
            let mut p = inst.products[i];
            if p.pos_utility == 0.0 {
                p.pos_utility = replacement;
                p.neg_utility = p.neg_utility.max(replacement);
            }
            p
        })
        .collect();
    let work = DiffAssortInstance::new(work_products, inst.cap.min(kept.len()))?;
    let grids = build_grids(&work, eps)?;

    // Bracket tuples of every achievable (x1, d1, x2, d2).
    let mut seen: BTreeSet<(u64, u64, u64, u64)> = BTreeSet::new();
    let mut guesses: Vec<Guess> = Vec::new();
    let wn = work.n();
    for mask in 1u64..(1u64 << wn) {
        if (mask.count_ones() as usize) > work.cap() {
            continue;
        }
        let items = mask_items(mask);
        let (x1, d1, x2, d2) = sums(&work, &items);
        if x1 <= 0.0 {
            continue; // dominated by the empty set
        }
        let Some(h1) = bracket_below(&grids.gamma, x1) else {
            continue;
        };
        let Some(g1) = bracket_above(&grids.delta, d1) else {
            continue;
        };
        let h2 = if x2 == 0.0 {
            0.0
        } else {
            match bracket_above(&grids.gamma, x2) {
                Some(h) => h,
                None => continue,
            }
        };
        let Some(g2) = bracket_below(&grids.delta, d2) else {
            continue;
        };
        let key = (h1.to_bits(), h2.to_bits(), g1.to_bits(), g2.to_bits());
        if seen.insert(key) {
            guesses.push(Guess { h1, h2, g1, g2 });
        }
    }

    let mut best_items: Vec<usize> = Vec::new();
    let mut best_value = 0.0f64;
    let dp_eps = eps / 2.0;
    for guess in &guesses {
        let Some(witness) = dp_solve(&work, guess, dp_eps)? else {
            continue;
        };
        // Map back to original product indices and score exactly.
        let items: Vec<usize> = witness.items().iter().map(|&i| kept[i - 1] + 1).collect();
        let v = objective_unchecked(inst, &items);
        if v > best_value || (v == best_value && !best_items.is_empty() && items < best_items) {
            best_value = v;
            best_items = items;
        }
    }
    Ok((Assortment::new(best_items)?, best_value))
}
