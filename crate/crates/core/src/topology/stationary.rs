use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::{
    addable_edges, gibbs_distribution, log_sum_exp, peer_edges, ChokeParams, ChokePolicy,
    ConfigSpace,
};
use crate::error::{Error, Result};
use crate::model::{Edge, PeerRef, Population};

/// Monte-Carlo allowance added to the bound before flagging a violation.
pub const SAMPLING_MARGIN: f64 = 0.05;

/// A chain transition `from → to` with its log rate.
pub type LogRate = (usize, usize, f64);

/// Reference rates: τ·exp(−κ·U(c)) to every adjacent configuration.
pub fn uniform_transitions(space: &ConfigSpace, params: &ChokeParams) -> Vec<LogRate> {
    (0..space.len())
        .flat_map(|c| {
            let log_rate = params.tau.ln() - params.kappa * space.utilities[c];
            space
                .neighbors(c)
                .into_iter()
                .map(move |to| (c, to, log_rate))
        })
        .collect()
}

/// Rates induced by peers running `policy` under per-configuration link
/// rates: countdown rate × drop probability ÷ number of addable links.
/// Swaps that leave the space are dropped.
pub fn policy_transitions(
    space: &ConfigSpace,
    population: &Population,
    link_rates: &[BTreeMap<Edge, f64>],
    policy: &dyn ChokePolicy,
    params: &ChokeParams,
) -> Result<Vec<LogRate>> {
    if link_rates.len() != space.len() {
        return Err(Error::Structural(
            "one rate map per configuration required".into(),
        ));
    }
    let peers: Vec<PeerRef> = population
        .users
        .keys()
        .map(|&u| PeerRef::User(u))
        .chain(population.helpers.keys().map(|&h| PeerRef::Helper(h)))
        .collect();
    let mut acc: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (c, overlay) in space.configurations.iter().enumerate() {
        for &peer in &peers {
            let (candidates, cap) = match peer {
                PeerRef::User(u) => {
                    let n = &population.users[&u];
                    (
                        n.candidates.count(population.helpers.len()),
                        n.max_neighbors,
                    )
                }
                PeerRef::Helper(h) => {
                    let n = &population.helpers[&h];
                    (n.candidates.count(population.users.len()), n.max_neighbors)
                }
            };
            let surplus = candidates.saturating_sub(cap);
            let active = peer_edges(overlay, peer);
            let rates: Vec<f64> = active
                .iter()
                .map(|e| link_rates[c].get(e).copied().unwrap_or(0.0))
                .collect();
            let utility = policy.requires_global_utility().then(|| space.utilities[c]);
            let Some(log_fire) = policy.log_countdown_rate(surplus, &rates, params, utility) else {
                continue;
            };
            let drop = policy.drop_distribution(&rates, params);
            for (&dropped, &p) in active.iter().zip(&drop) {
                if p <= 0.0 {
                    continue;
                }
                let options = addable_edges(overlay, population, peer, Some(dropped));
                let log_each = log_fire + p.ln() - (options.len() as f64).ln();
                for added in options {
                    let mut next = overlay.clone();
                    next.remove(dropped);
                    next.insert(added);
                    if let Some(to) = space.index_of(&next) {
                        acc.entry((c, to)).or_default().push(log_each);
                    }
                }
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|((a, b), v)| (a, b, log_sum_exp(&v)))
        .collect())
}

/// Largest relative violation of q(c,c')·p*(c) = q(c',c)·p*(c') over all
/// transitions, evaluated in log space.
pub fn detailed_balance_residual(transitions: &[LogRate], gibbs_log: &[f64]) -> f64 {
    let rates: BTreeMap<(usize, usize), f64> =
        transitions.iter().map(|&(a, b, r)| ((a, b), r)).collect();
    let mut worst: f64 = 0.0;
    for (&(a, b), &r) in &rates {
        let Some(&back) = rates.get(&(b, a)) else {
            return f64::INFINITY;
        };
        let diff = (r + gibbs_log[a]) - (back + gibbs_log[b]);
        worst = worst.max(diff.exp_m1().abs());
    }
    worst
}

/// Time spent per configuration, in log space so that sojourns of
/// exp(κU) magnitude do not overflow.
#[derive(Debug, Clone, Serialize)]
pub struct ChainLog {
    /// ln of total sojourn per configuration; −∞ when never visited, +∞ when
    /// the chain was absorbed there.
    pub log_time: Vec<f64>,
    pub visits: Vec<u64>,
    pub transitions: usize,
}

impl ChainLog {
    /// Sojourn-weighted visit distribution.
    pub fn empirical(&self) -> Result<Vec<f64>> {
        if self.log_time.iter().all(|t| *t == f64::NEG_INFINITY) {
            return Err(Error::Empty("chain log"));
        }
        if let Some(absorbed) = self.log_time.iter().position(|t| *t == f64::INFINITY) {
            return Ok((0..self.log_time.len())
                .map(|i| if i == absorbed { 1.0 } else { 0.0 })
                .collect());
        }
        let total = log_sum_exp(&self.log_time);
        Ok(self.log_time.iter().map(|t| (t - total).exp()).collect())
    }

    /// Configuration with the most sojourn time.
    pub fn most_visited(&self) -> Option<usize> {
        self.log_time
            .iter()
            .enumerate()
            .filter(|(_, t)| **t > f64::NEG_INFINITY)
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }
}

/// Simulates a continuous-time chain for `steps` jumps from `start`.
pub fn run_chain<R: Rng + ?Sized>(
    configs: usize,
    transitions: &[LogRate],
    start: usize,
    steps: usize,
    rng: &mut R,
) -> Result<ChainLog> {
    if start >= configs {
        return Err(Error::InvalidArgument(format!(
            "start {start} outside {configs} configurations"
        )));
    }
    let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); configs];
    for &(a, b, r) in transitions {
        if a >= configs || b >= configs {
            return Err(Error::InvalidArgument(
                "transition outside the space".into(),
            ));
        }
        if r > f64::NEG_INFINITY {
            out[a].push((b, r));
        }
    }
    let totals: Vec<f64> = out
        .iter()
        .map(|o| log_sum_exp(&o.iter().map(|t| t.1).collect::<Vec<_>>()))
        .collect();
    let mut log = ChainLog {
        log_time: vec![f64::NEG_INFINITY; configs],
        visits: vec![0; configs],
        transitions: 0,
    };
    let mut at = start;
    for _ in 0..steps {
        log.visits[at] += 1;
        if out[at].is_empty() {
            log.log_time[at] = f64::INFINITY;
            return Ok(log);
        }
        let e: f64 = Exp1.sample(rng);
        let sojourn = e.ln() - totals[at];
        log.log_time[at] = log_sum_exp(&[log.log_time[at], sojourn]);
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        let mut next = out[at].last().expect("non-empty").0;
        for &(to, r) in &out[at] {
            cumulative += (r - totals[at]).exp();
            if u < cumulative {
                next = to;
                break;
            }
        }
        at = next;
        log.transitions += 1;
    }
    Ok(log)
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryAnalysis {
    pub gibbs: Vec<f64>,
    pub empirical: Vec<f64>,
    pub tv_distance: f64,
    /// 1 − exp(−κ·B_max).
    pub tv_bound: f64,
    /// TV exceeded the bound plus the sampling margin.
    pub violated: bool,
}

/// Compares a chain's sojourn distribution with the target distribution.
/// `b_max` is the largest helper upload capacity in the instance.
pub fn stationary_check(
    space: &ConfigSpace,
    log: &ChainLog,
    kappa: f64,
    b_max: f64,
) -> Result<StationaryAnalysis> {
    if log.log_time.len() != space.len() {
        return Err(Error::Structural(
            "chain log does not match the space".into(),
        ));
    }
    let empirical = log.empirical()?;
    let gibbs = gibbs_distribution(&space.utilities, kappa)?;
    let tv = tv_distance(&gibbs, &empirical).clamp(0.0, 1.0);
    let tv_bound = -(-kappa * b_max).exp_m1();
    Ok(StationaryAnalysis {
        gibbs,
        empirical,
        tv_distance: tv,
        tv_bound,
        violated: tv > tv_bound + SAMPLING_MARGIN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::topology::enumerate_config_space;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> ConfigSpace {
        let pop = Population::new(
            vec![user(1, 0, 1, &[])],
            vec![helper(1, 1.0, 1.0, 1), helper(2, 1.0, 1.0, 1)],
        )
        .unwrap();
        let mut u = [1.0, 0.0].into_iter();
        enumerate_config_space(&pop, |_| Ok(u.next().unwrap())).unwrap()
    }

    #[test]
    fn pinned_chain_against_uniform_target() {
        let space = toy();
        let log = ChainLog {
            log_time: vec![0.0, f64::NEG_INFINITY],
            visits: vec![1, 0],
            transitions: 0,
        };
        let a = stationary_check(&space, &log, 0.0, 100.0).unwrap();
        assert_abs_diff_eq!(a.tv_distance, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn matching_distribution_has_zero_tv() {
        let space = toy();
        let gibbs = gibbs_distribution(&space.utilities, 1.0).unwrap();
        let log = ChainLog {
            log_time: gibbs.iter().map(|p| p.ln()).collect(),
            visits: vec![1, 1],
            transitions: 1,
        };
        assert_abs_diff_eq!(
            stationary_check(&space, &log, 1.0, 1.0)
                .unwrap()
                .tv_distance,
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn bound_formula() {
        let space = toy();
        let log = ChainLog {
            log_time: vec![0.0, 0.0],
            visits: vec![1, 1],
            transitions: 1,
        };
        let a = stationary_check(&space, &log, 0.001, 100.0).unwrap();
        assert_abs_diff_eq!(a.tv_bound, 1.0 - (-0.1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(a.tv_bound, 0.0952, epsilon = 1e-4);
    }

    #[test]
    fn empty_log_rejected() {
        let space = toy();
        let log = ChainLog {
            log_time: vec![f64::NEG_INFINITY; 2],
            visits: vec![0, 0],
            transitions: 0,
        };
        assert!(matches!(
            stationary_check(&space, &log, 1.0, 1.0),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn two_state_balance_example() {
        let space = toy();
        let params = ChokeParams {
            kappa: 1.0,
            tau: 1.0,
        };
        let q = uniform_transitions(&space, &params);
        let rates: BTreeMap<(usize, usize), f64> =
            q.iter().map(|&(a, b, r)| ((a, b), r.exp())).collect();
        assert_abs_diff_eq!(rates[&(0, 1)], (-1f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(rates[&(1, 0)], 1.0, epsilon = 1e-15);
        let p = gibbs_distribution(&space.utilities, 1.0).unwrap();
        assert_abs_diff_eq!(
            rates[&(0, 1)] * p[0],
            rates[&(1, 0)] * p[1],
            epsilon = 1e-12
        );
        let logp: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        assert!(detailed_balance_residual(&q, &logp) < 1e-12);
    }

    #[test]
    fn uniform_chain_matches_gibbs_on_toy() {
        let space = toy();
        let params = ChokeParams {
            kappa: 1.0,
            tau: 0.01,
        };
        let q = uniform_transitions(&space, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let log = run_chain(space.len(), &q, 0, 100_000, &mut rng).unwrap();
        let a = stationary_check(&space, &log, params.kappa, 1.0).unwrap();
        assert!(a.tv_distance < 0.02, "tv {}", a.tv_distance);
    }

    #[test]
    fn absorbing_state_pins_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let log = run_chain(2, &[(0, 1, 0.0)], 0, 10, &mut rng).unwrap();
        assert_eq!(log.empirical().unwrap(), vec![0.0, 1.0]);
    }
}
