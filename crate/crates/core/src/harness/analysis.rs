use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::population::sample_population;
use super::ScenarioConfig;
use crate::allocator::{oracle_solve, run_to_convergence, ConvergenceCriteria, Problem};
use crate::error::Result;
use crate::model::{AllocationState, Edge};
use crate::sim::streams;
use crate::topology::{
    enumerate_config_space, gibbs_distribution, log_sum_exp, policy_transitions, run_chain,
    stationary_check, PolicyRegistry,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigRow {
    pub id: usize,
    pub utility: f64,
    pub gibbs: f64,
    pub empirical: f64,
}

/// Chain behavior on an enumerated configuration space.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub seed: u64,
    pub policy: String,
    pub kappa: f64,
    pub tau: f64,
    pub rows: Vec<ConfigRow>,
    pub transitions: usize,
    pub tv_distance: f64,
    pub tv_bound: f64,
    pub violated: bool,
    pub most_visited: Option<usize>,
    pub argmax: Option<usize>,
    /// Worst relative violation of detailed balance against the Gibbs target.
    pub balance_residual: f64,
}

impl AnalysisReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(
            s,
            "policy: {} (kappa {}, tau {})",
            self.policy, self.kappa, self.tau
        );
        let _ = writeln!(s, "configurations: {}", self.rows.len());
        let _ = writeln!(s, "chain transitions: {}", self.transitions);
        let _ = writeln!(s, "tv distance: {}", self.tv_distance);
        let _ = writeln!(s, "tv bound 1-exp(-kappa*B_max): {}", self.tv_bound);
        let _ = writeln!(s, "bound violated: {}", self.violated);
        let _ = writeln!(s, "most visited: {:?}", self.most_visited);
        let _ = writeln!(s, "argmax U: {:?}", self.argmax);
        let _ = writeln!(s, "detailed balance residual: {}", self.balance_residual);
        s
    }
}

/// `config_id,utility,gibbs_p,empirical_p` with a versioned preamble.
pub fn stationary_csv(report: &AnalysisReport) -> String {
    let mut s = format!(
        "# plugvod stationary v1\n# scenario={}\n# seed={}\n# policy={}\n# kappa={}\n# tv_distance={}\n",
        report.scenario, report.seed, report.policy, report.kappa, report.tv_distance
    );
    s.push_str("config_id,utility,gibbs_p,empirical_p\n");
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{},{}", r.id, r.utility, r.gibbs, r.empirical);
    }
    s
}

fn link_rates(state: &AllocationState) -> BTreeMap<Edge, f64> {
    state.edges.iter().map(|(&e, v)| (e, v.x)).collect()
}

/// Enumerates the configuration space, scores each configuration with the
/// exhaustive oracle, settles the allocator on it for link rates, and runs
/// the scenario's choke policy as a continuous-time chain.
pub fn analyze(scenario: &ScenarioConfig, seed: u64) -> Result<AnalysisReport> {
    scenario.validate()?;
    let catalog = scenario.catalog()?;
    let population = sample_population(scenario, &mut streams::rng(seed, streams::POPULATION))?;
    let settings = &scenario.analysis;
    let space = enumerate_config_space(&population, |overlay| {
        let problem = Problem::new(overlay, &catalog, &population);
        Ok(oracle_solve(&problem, settings.resolution)?.utility)
    })?;

    let criteria = ConvergenceCriteria {
        max_ticks: settings.allocator_ticks,
        ..ConvergenceCriteria::default()
    };
    let rates = space
        .configurations
        .iter()
        .map(|overlay| {
            let problem = Problem::new(overlay, &catalog, &population);
            let zero = AllocationState::zero(overlay, &population, &catalog);
            let run =
                run_to_convergence(&zero, &problem, &scenario.allocator, &criteria, |_, _| {})?;
            Ok(if run.converged_at.is_some() {
                link_rates(&run.state)
            } else {
                link_rates(&run.tail_state)
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let policy = PolicyRegistry::default().get(&scenario.choke.policy)?;
    let params = scenario.choke.params();
    let transitions = policy_transitions(&space, &population, &rates, policy.as_ref(), &params)?;
    let chain = run_chain(
        space.len(),
        &transitions,
        0,
        settings.transitions,
        &mut streams::rng(seed, streams::CHOKES),
    )?;
    let b_max = population
        .helpers
        .values()
        .map(|h| h.upload_kbps)
        .fold(0.0, f64::max);
    let check = stationary_check(&space, &chain, params.kappa, b_max)?;

    let gibbs = gibbs_distribution(&space.utilities, params.kappa)?;
    let log_z = log_sum_exp(
        &space
            .utilities
            .iter()
            .map(|u| params.kappa * u)
            .collect::<Vec<_>>(),
    );
    let gibbs_log: Vec<f64> = space
        .utilities
        .iter()
        .map(|u| params.kappa * u - log_z)
        .collect();
    let rows = (0..space.len())
        .map(|c| ConfigRow {
            id: c,
            utility: space.utilities[c],
            gibbs: gibbs[c],
            empirical: check.empirical[c],
        })
        .collect();
    Ok(AnalysisReport {
        scenario: scenario.name.clone(),
        seed,
        policy: policy.name().to_string(),
        kappa: params.kappa,
        tau: params.tau,
        rows,
        transitions: chain.transitions,
        tv_distance: check.tv_distance,
        tv_bound: check.tv_bound,
        violated: check.violated,
        most_visited: chain.most_visited(),
        argmax: space.argmax_utility(),
        balance_residual: crate::topology::detailed_balance_residual(&transitions, &gibbs_log),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::bundled_scenario;

    fn quick(name: &str, policy: &str) -> ScenarioConfig {
        let mut s = bundled_scenario(name).unwrap();
        s.choke.policy = policy.into();
        s.analysis.transitions = 20_000;
        s.analysis.allocator_ticks = 4_000;
        s
    }

    #[test]
    fn pair_toy_has_two_configurations() {
        let r = analyze(&quick("tiny_pair", "uniform"), 1).unwrap();
        assert_eq!(r.rows.len(), 2);
        let total: f64 = r.rows.iter().map(|c| c.empirical).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(r.balance_residual < 1e-9);
        assert!(stationary_csv(&r).lines().count() == 6 + 1 + 2);
    }

    #[test]
    fn zero_kappa_targets_uniform() {
        let mut s = quick("tiny_pair", "uniform");
        s.choke.kappa = 0.0;
        let r = analyze(&s, 2).unwrap();
        for row in &r.rows {
            assert_eq!(row.gibbs, 0.5);
            assert!((row.empirical - 0.5).abs() < 0.05);
        }
    }
}
