//! Ground-truth multinomial logit choice model.
//!
//! A market instance holds `N` products with revenues, initial
//! inventories, and true attraction utilities. A customer offered
//! assortment `S` buys product `i ∈ S` with probability
//! `v_i / (v0 + Σ_{j∈S} v_j)` and walks away (outcome `0`) with the
//! complementary probability, where the no-purchase utility `v0` is
//! normalized to 1.
//!
//! Product indices are 1-based in the public API; `0` is reserved for
//! the no-purchase option.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Utility of the no-purchase option (normalization).
pub const OUTSIDE_UTILITY: f64 = 1.0;

/// Immutable description of the market: products, revenues,
/// inventories, true utilities, cardinality cap and horizon.
///
/// Construction validates all invariants; an `Instance` is safe to
/// share across concurrent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    n_products: usize,
    cardinality_cap: usize,
    horizon: usize,
    revenues: Vec<f64>,
    inventories: Vec<u64>,
    true_utilities: Vec<f64>,
    v_max: f64,
}

impl Instance {
    /// Builds an instance, checking:
    /// `v_i ≤ v_max ≤ 1`, `1 ≤ K ≤ N`, `q_i ≥ 1`, `T ≥ 1`, `r_i > 0`.
    pub fn new(
        cardinality_cap: usize,
        horizon: usize,
        revenues: Vec<f64>,
        inventories: Vec<u64>,
        true_utilities: Vec<f64>,
        v_max: f64,
    ) -> Result<Self> {
        let n = revenues.len();
        if n == 0 {
            return Err(Error::invalid("instance needs at least one product"));
        }
        if inventories.len() != n || true_utilities.len() != n {
            return Err(Error::invalid(format!(
                "inconsistent lengths: {} revenues, {} inventories, {} utilities",
                n,
                inventories.len(),
                true_utilities.len()
            )));
        }
        if cardinality_cap == 0 || cardinality_cap > n {
            return Err(Error::invalid(format!(
                "cardinality cap must be in [1, {n}], got {cardinality_cap}"
            )));
        }
        if horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(v_max > 0.0 && v_max <= OUTSIDE_UTILITY) {
            return Err(Error::invalid(format!(
                "v_max must lie in (0, 1], got {v_max}"
            )));
        }
        if let Some(r) = revenues.iter().find(|r| !r.is_finite() || **r <= 0.0) {
            return Err(Error::invalid(format!(
                "revenues must be positive, got {r}"
            )));
        }
        if inventories.contains(&0) {
            return Err(Error::invalid("inventories must be at least 1"));
        }
        if let Some(v) = true_utilities
            .iter()
            .find(|v| v.is_nan() || **v < 0.0 || **v > v_max)
        {
            return Err(Error::invalid(format!(
                "utilities must lie in [0, v_max={v_max}], got {v}"
            )));
        }
        Ok(Instance {
            n_products: n,
            cardinality_cap,
            horizon,
            revenues,
            inventories,
            true_utilities,
            v_max,
        })
    }

    pub fn n_products(&self) -> usize {
        self.n_products
    }

    pub fn cardinality_cap(&self) -> usize {
        self.cardinality_cap
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    /// Revenue of product `i` (1-based).
    pub fn revenue_of(&self, i: usize) -> f64 {
        self.revenues[i - 1]
    }

    /// Initial inventory of product `i` (1-based).
    pub fn inventory_of(&self, i: usize) -> u64 {
        self.inventories[i - 1]
    }

    /// True utility of product `i` (1-based).
    pub fn utility_of(&self, i: usize) -> f64 {
        self.true_utilities[i - 1]
    }

    pub fn revenues(&self) -> &[f64] {
        &self.revenues
    }

    pub fn inventories(&self) -> &[u64] {
        &self.inventories
    }

    pub fn true_utilities(&self) -> &[f64] {
        &self.true_utilities
    }

    pub fn max_revenue(&self) -> f64 {
        self.revenues.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn min_inventory(&self) -> u64 {
        *self.inventories.iter().min().expect("nonempty")
    }

    /// Total attraction `V(S) = Σ_{i∈S} v_i` under the true utilities.
    pub fn total_utility(&self, s: &Assortment) -> f64 {
        s.items().iter().map(|&i| self.utility_of(i)).sum()
    }

    fn check_assortment(&self, s: &Assortment) -> Result<()> {
        if let Some(&last) = s.items().last() {
            if last > self.n_products {
                return Err(Error::invalid(format!(
                    "assortment item {last} out of range [1, {}]",
                    self.n_products
                )));
            }
        }
        if s.len() > self.cardinality_cap {
            return Err(Error::invalid(format!(
                "assortment size {} exceeds cardinality cap {}",
                s.len(),
                self.cardinality_cap
            )));
        }
        Ok(())
    }
}

/// A set of offered products: strictly increasing 1-based indices,
/// possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assortment {
    items: Vec<usize>,
}

impl Assortment {
    /// Builds an assortment from 1-based indices; sorts and rejects
    /// duplicates or zero indices.
    pub fn new(mut items: Vec<usize>) -> Result<Self> {
        items.sort_unstable();
        if items.first() == Some(&0) {
            return Err(Error::invalid("product indices are 1-based; 0 is reserved"));
        }
        if items.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("assortment contains duplicate products"));
        }
        Ok(Assortment { items })
    }

    pub fn empty() -> Self {
        Assortment { items: Vec::new() }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.items.binary_search(&i).is_ok()
    }

    /// Renders as space-separated indices, `-` for the empty set.
    pub fn label(&self) -> String {
        if self.items.is_empty() {
            "-".to_string()
        } else {
            self.items
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        }
    }
}

impl std::fmt::Display for Assortment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Purchase probability of outcome `i` (product index or 0 for
/// no-purchase) when `s` is offered.
///
/// Returns `v_i / (1 + Σ_{j∈s} v_j)` for `i ∈ s ∪ {0}` and 0 otherwise.
pub fn choice_prob(inst: &Instance, s: &Assortment, i: usize) -> Result<f64> {
    inst.check_assortment(s)?;
    if i > inst.n_products() {
        return Err(Error::invalid(format!(
            "outcome index {i} out of range [0, {}]",
            inst.n_products()
        )));
    }
    Ok(choice_prob_with_outside(
        inst.true_utilities(),
        s,
        i,
        OUTSIDE_UTILITY,
    ))
}

/// Same as [`choice_prob`] but over raw utilities with an explicit
/// no-purchase utility `v0`. Exists so scale-consistency can be checked
/// directly.
pub fn choice_prob_with_outside(utilities: &[f64], s: &Assortment, i: usize, v0: f64) -> f64 {
    let denom: f64 = v0 + s.items().iter().map(|&j| utilities[j - 1]).sum::<f64>();
    if i == 0 {
        v0 / denom
    } else if s.contains(i) {
        utilities[i - 1] / denom
    } else {
        0.0
    }
}

/// Expected revenue `R(S) = Σ_{i∈S} r_i p_i(S)`; zero for the empty
/// assortment.
pub fn revenue(inst: &Instance, s: &Assortment) -> Result<f64> {
    inst.check_assortment(s)?;
    let denom: f64 = OUTSIDE_UTILITY + inst.total_utility(s);
    Ok(s.items()
        .iter()
        .map(|&i| inst.revenue_of(i) * inst.utility_of(i))
        .sum::<f64>()
        / denom)
}

/// Samples the customer's choice from `s ∪ {0}`; 0 means no purchase.
///
/// Items are scanned in ascending index order with the no-purchase
/// outcome taking the residual mass, so draws are reproducible for a
/// fixed random stream.
pub fn sample_choice<R: Rng + ?Sized>(inst: &Instance, s: &Assortment, rng: &mut R) -> usize {
    let denom: f64 = OUTSIDE_UTILITY + inst.total_utility(s);
    let u: f64 = rng.gen::<f64>();
    let mut cum = 0.0;
    for &i in s.items() {
        cum += inst.utility_of(i) / denom;
        if u < cum {
            return i;
        }
    }
    0
}
