//! Overlay reconfiguration by neighbor choking, and exact analysis of the
//! induced Markov chain on tiny configuration spaces.

mod policy;
mod space;
mod stationary;

pub use policy::{ChokePolicy, HardWorst, PolicyRegistry, SoftWorst, UniformReference};
pub use space::{enumerate_config_space, ConfigSpace, Transition, MAX_CONFIGS};
pub use stationary::{
    detailed_balance_residual, policy_transitions, run_chain, stationary_check, tv_distance,
    uniform_transitions, ChainLog, LogRate, StationaryAnalysis, SAMPLING_MARGIN,
};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Edge, HelperId, Overlay, PeerRef, Population, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChokeParams {
    pub kappa: f64,
    pub tau: f64,
}

impl Default for ChokeParams {
    fn default() -> Self {
        Self {
            kappa: 10.0,
            tau: 0.01,
        }
    }
}

impl ChokeParams {
    pub fn new(kappa: f64, tau: f64) -> Result<Self> {
        let p = Self { kappa, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// log Σ exp(v), stable for large magnitudes. −∞ for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Target distribution over configurations: softmax of κ·U.
pub fn gibbs_distribution(utilities: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if utilities.is_empty() {
        return Err(Error::Empty("utilities"));
    }
    if utilities.iter().any(|u| !u.is_finite()) || !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidArgument(
            "utilities and kappa must be finite, kappa ≥ 0".into(),
        ));
    }
    let logits: Vec<f64> = utilities.iter().map(|u| kappa * u).collect();
    Ok(softmax(&logits))
}

/// Drop probability per active link: softmin of the link rates.
pub fn choke_probabilities(rates: &[f64], kappa: f64) -> Result<Vec<f64>> {
    if rates.is_empty() {
        return Err(Error::Empty("active links"));
    }
    let logits: Vec<f64> = rates.iter().map(|x| -kappa * x).collect();
    Ok(softmax(&logits))
}

/// `|N| − N^max`, or the no-alternative signal when it is not positive.
pub fn candidate_surplus(candidates: usize, max_neighbors: usize) -> Result<usize> {
    if candidates <= max_neighbors {
        return Err(Error::NoAlternatives);
    }
    Ok(candidates - max_neighbors)
}

/// ln of the soft-worst countdown rate τ·(|N| − N^max)·Σ exp(−κx).
pub fn log_countdown_rate(surplus: usize, rates: &[f64], params: &ChokeParams) -> f64 {
    let logits: Vec<f64> = rates.iter().map(|x| -params.kappa * x).collect();
    params.tau.ln() + (surplus as f64).ln() + log_sum_exp(&logits)
}

/// Mean of the soft-worst countdown in seconds. Infinite when the rate
/// underflows or the peer has no links.
pub fn countdown_mean(
    candidates: usize,
    max_neighbors: usize,
    rates: &[f64],
    params: &ChokeParams,
) -> Result<f64> {
    let surplus = candidate_surplus(candidates, max_neighbors)?;
    Ok((-log_countdown_rate(surplus, rates, params)).exp())
}

/// Reference rate to each configuration adjacent to one with utility `utility`.
pub fn uniform_choke_rate(utility: f64, params: &ChokeParams) -> f64 {
    params.tau * (-params.kappa * utility).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChokeOutcome {
    Swapped {
        dropped: Edge,
        added: Edge,
    },
    /// No inactive candidate had spare degree; nothing changed.
    Aborted {
        dropped: Edge,
    },
}

/// Active links of a peer in edge order.
pub fn peer_edges(overlay: &Overlay, peer: PeerRef) -> Vec<Edge> {
    match peer {
        PeerRef::User(u) => overlay.helpers_of(u).map(|h| Edge::new(h, u)).collect(),
        PeerRef::Helper(h) => overlay.users_of(h).map(|u| Edge::new(h, u)).collect(),
    }
}

/// Links the peer could add: mutual candidates not already linked, other
/// than `exclude`, whose other endpoint has spare degree.
pub fn addable_edges(
    overlay: &Overlay,
    population: &Population,
    peer: PeerRef,
    exclude: Option<Edge>,
) -> Vec<Edge> {
    let spare_helper = |h: HelperId| {
        population
            .helpers
            .get(&h)
            .is_some_and(|n| overlay.helper_degree(h) < n.max_neighbors)
    };
    let spare_user = |u: UserId| {
        population
            .users
            .get(&u)
            .is_some_and(|n| overlay.user_degree(u) < n.max_neighbors)
    };
    let candidates: Vec<Edge> = match peer {
        PeerRef::User(u) => population
            .helpers
            .keys()
            .map(|&h| Edge::new(h, u))
            .filter(|e| spare_helper(e.helper))
            .collect(),
        PeerRef::Helper(h) => population
            .users
            .keys()
            .map(|&u| Edge::new(h, u))
            .filter(|e| spare_user(e.user))
            .collect(),
    };
    candidates
        .into_iter()
        .filter(|&e| Some(e) != exclude && !overlay.contains(e) && population.are_candidates(e))
        .collect()
}

/// One choke by `peer`: drop a link drawn from the policy's drop
/// distribution, then add a uniformly drawn addable link. On abort the
/// overlay is left as it was.
pub fn perform_choke<R: Rng + ?Sized>(
    overlay: &mut Overlay,
    population: &Population,
    peer: PeerRef,
    rate_of: impl Fn(Edge) -> f64,
    policy: &dyn ChokePolicy,
    params: &ChokeParams,
    rng: &mut R,
) -> Result<ChokeOutcome> {
    let active = peer_edges(overlay, peer);
    if active.is_empty() {
        return Err(Error::Empty("active links"));
    }
    let rates: Vec<f64> = active.iter().map(|&e| rate_of(e)).collect();
    let probs = policy.drop_distribution(&rates, params);
    let dropped = active[sample_index(&probs, rng)?];
    let options = addable_edges(overlay, population, peer, Some(dropped));
    let Some(&added) = options.choose(rng) else {
        log::debug!("choke by {peer} aborted: no addable link");
        return Ok(ChokeOutcome::Aborted { dropped });
    };
    overlay.remove(dropped);
    overlay.insert(added);
    Ok(ChokeOutcome::Swapped { dropped, added })
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.len() == 1 {
        return Ok(0);
    }
    let dist = WeightedIndex::new(probs)
        .map_err(|e| Error::InvalidArgument(format!("drop weights: {e}")))?;
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::validate_overlay;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gibbs_examples() {
        assert_eq!(
            gibbs_distribution(&[5.0, 5.0], 3.0).unwrap(),
            vec![0.5, 0.5]
        );
        let p = gibbs_distribution(&[1.0, 0.0], 9f64.ln()).unwrap();
        assert_abs_diff_eq!(p[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.1, epsilon = 1e-12);
        let p = gibbs_distribution(&[1.0, 0.0, -1.0], 1e4).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-12);
        assert!(gibbs_distribution(&[], 1.0).is_err());
    }

    #[test]
    fn gibbs_survives_huge_exponents() {
        let p = gibbs_distribution(&[44000.0, 43990.0], 10.0).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn choke_probability_examples() {
        assert_eq!(choke_probabilities(&[7.0; 4], 10.0).unwrap(), vec![0.25; 4]);
        let p = choke_probabilities(&[0.0, 100.0], 10.0).unwrap();
        assert_abs_diff_eq!(p[0], 1.0, epsilon = 1e-9);
        let p = choke_probabilities(&[1.0, 2.0, 3.0], 1.0).unwrap();
        let w = [(-1f64).exp(), (-2f64).exp(), (-3f64).exp()];
        let s: f64 = w.iter().sum();
        for (a, b) in p.iter().zip(w) {
            assert_abs_diff_eq!(*a, b / s, epsilon = 1e-12);
        }
        assert!(choke_probabilities(&[], 1.0).is_err());
    }

    #[test]
    fn countdown_examples() {
        let params = ChokeParams::new(10.0, 0.01).unwrap();
        assert_abs_diff_eq!(
            countdown_mean(13, 3, &[0.0], &params).unwrap(),
            10.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            countdown_mean(8, 3, &[0.0, 0.0], &params).unwrap(),
            10.0,
            epsilon = 1e-9
        );
        assert_eq!(
            countdown_mean(8, 3, &[1e6], &params).unwrap(),
            f64::INFINITY
        );
        assert!(matches!(
            countdown_mean(3, 3, &[0.0], &params),
            Err(Error::NoAlternatives)
        ));
    }

    #[test]
    fn uniform_rate_examples() {
        let p = ChokeParams::new(1.0, 1.0).unwrap();
        assert_eq!(uniform_choke_rate(0.0, &ChokeParams::default()), 0.01);
        assert_abs_diff_eq!(uniform_choke_rate(1.0, &p), (-1f64).exp(), epsilon = 1e-15);
        assert_eq!(uniform_choke_rate(1e6, &ChokeParams::default()), 0.0);
    }

    #[test]
    fn params_reject_nonpositive() {
        assert!(ChokeParams::new(0.0, 1.0).is_err());
        assert!(ChokeParams::new(1.0, -1.0).is_err());
    }

    fn two_helpers() -> Population {
        Population::new(
            vec![user(1, 0, 1, &[])],
            vec![helper(1, 300.0, 1e9, 1), helper(2, 300.0, 1e9, 1)],
        )
        .unwrap()
    }

    #[test]
    fn single_option_swaps_deterministically() {
        let pop = two_helpers();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut o = Overlay::from_edges([Edge::new(HelperId(1), UserId(1))]);
        let out = perform_choke(
            &mut o,
            &pop,
            PeerRef::User(UserId(1)),
            |_| 0.0,
            &SoftWorst,
            &ChokeParams::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(
            out,
            ChokeOutcome::Swapped {
                dropped: Edge::new(HelperId(1), UserId(1)),
                added: Edge::new(HelperId(2), UserId(1))
            }
        );
        assert!(validate_overlay(&o, &pop).valid);
    }

    #[test]
    fn full_candidates_abort_without_change() {
        let pop = Population::new(
            vec![user(1, 0, 1, &[]), user(2, 0, 1, &[])],
            vec![helper(1, 300.0, 1e9, 1), helper(2, 300.0, 1e9, 1)],
        )
        .unwrap();
        let mut o = Overlay::from_edges([
            Edge::new(HelperId(1), UserId(1)),
            Edge::new(HelperId(2), UserId(2)),
        ]);
        let before = o.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = perform_choke(
            &mut o,
            &pop,
            PeerRef::User(UserId(1)),
            |_| 0.0,
            &SoftWorst,
            &ChokeParams::default(),
            &mut rng,
        )
        .unwrap();
        assert!(matches!(out, ChokeOutcome::Aborted { .. }));
        assert_eq!(o, before);
    }

    #[test]
    fn zero_rate_link_is_dropped() {
        let pop = Population::new(
            vec![user(1, 0, 2, &[])],
            vec![
                helper(1, 300.0, 1e9, 1),
                helper(2, 300.0, 1e9, 1),
                helper(3, 300.0, 1e9, 1),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut o = Overlay::from_edges([
                Edge::new(HelperId(1), UserId(1)),
                Edge::new(HelperId(2), UserId(1)),
            ]);
            let rate = |e: Edge| if e.helper == HelperId(1) { 0.0 } else { 100.0 };
            let out = perform_choke(
                &mut o,
                &pop,
                PeerRef::User(UserId(1)),
                rate,
                &SoftWorst,
                &ChokeParams::default(),
                &mut rng,
            )
            .unwrap();
            assert!(
                matches!(out, ChokeOutcome::Swapped { dropped, .. } if dropped.helper == HelperId(1))
            );
        }
    }
}
