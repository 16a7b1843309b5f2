use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{choke_probabilities, log_countdown_rate, ChokeParams};
use crate::error::{Error, Result};

/// A neighbor-choking rule: when a peer's countdown fires and which link it
/// drops. The add step is shared by all rules.
pub trait ChokePolicy: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the rule needs the configuration's global utility.
    fn requires_global_utility(&self) -> bool {
        false
    }

    /// ln of the countdown rate, or `None` if the peer never fires.
    /// `surplus` is `|N| − N^max`; `utility` is only supplied to rules that
    /// ask for it.
    fn log_countdown_rate(
        &self,
        surplus: usize,
        rates: &[f64],
        params: &ChokeParams,
        utility: Option<f64>,
    ) -> Option<f64>;

    /// Probability of dropping each active link, aligned with `rates`.
    fn drop_distribution(&self, rates: &[f64], params: &ChokeParams) -> Vec<f64>;
}

/// Drops by softmin of link rate; fires at τ·(|N| − N^max)·Σ exp(−κx).
#[derive(Debug, Clone, Copy, Default)]
pub struct SoftWorst;

impl ChokePolicy for SoftWorst {
    fn name(&self) -> &'static str {
        "soft_worst"
    }

    fn log_countdown_rate(
        &self,
        surplus: usize,
        rates: &[f64],
        params: &ChokeParams,
        _: Option<f64>,
    ) -> Option<f64> {
        if surplus == 0 || rates.is_empty() {
            return None;
        }
        Some(log_countdown_rate(surplus, rates, params))
    }

    fn drop_distribution(&self, rates: &[f64], params: &ChokeParams) -> Vec<f64> {
        choke_probabilities(rates, params.kappa).unwrap_or_default()
    }
}

/// Fires at τ·exp(−κ·U(c)) per link, drops uniformly. Needs the global
/// utility, so only analysis runs can drive it.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformReference;

impl ChokePolicy for UniformReference {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn requires_global_utility(&self) -> bool {
        true
    }

    fn log_countdown_rate(
        &self,
        surplus: usize,
        rates: &[f64],
        params: &ChokeParams,
        utility: Option<f64>,
    ) -> Option<f64> {
        let utility = utility?;
        if surplus == 0 || rates.is_empty() {
            return None;
        }
        Some(params.tau.ln() - params.kappa * utility + (rates.len() as f64).ln())
    }

    fn drop_distribution(&self, rates: &[f64], _: &ChokeParams) -> Vec<f64> {
        vec![1.0 / rates.len() as f64; rates.len()]
    }
}

/// Always drops the slowest link (lowest index on ties), at a rate that
/// ignores link quality: τ·(|N| − N^max)·|links|.
#[derive(Debug, Clone, Copy, Default)]
pub struct HardWorst;

impl ChokePolicy for HardWorst {
    fn name(&self) -> &'static str {
        "hard_worst"
    }

    fn log_countdown_rate(
        &self,
        surplus: usize,
        rates: &[f64],
        params: &ChokeParams,
        _: Option<f64>,
    ) -> Option<f64> {
        if surplus == 0 || rates.is_empty() {
            return None;
        }
        Some(params.tau.ln() + (surplus as f64).ln() + (rates.len() as f64).ln())
    }

    fn drop_distribution(&self, rates: &[f64], _: &ChokeParams) -> Vec<f64> {
        let worst = rates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i);
        (0..rates.len())
            .map(|i| if Some(i) == worst { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Choke rules by name.
#[derive(Debug, Clone)]
pub struct PolicyRegistry {
    policies: BTreeMap<&'static str, Arc<dyn ChokePolicy>>,
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(SoftWorst));
        r.register(Arc::new(UniformReference));
        r.register(Arc::new(HardWorst));
        r
    }
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self {
            policies: BTreeMap::new(),
        }
    }

    /// Replaces any rule already registered under the same name.
    pub fn register(&mut self, policy: Arc<dyn ChokePolicy>) {
        self.policies.insert(policy.name(), policy);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ChokePolicy>> {
        self.policies
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownPolicy(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.policies.keys().copied()
    }
}
