//! Storage and bandwidth allocation on a fixed overlay.
//!
//! Each helper runs projected primal-dual dynamics over its edge rates `x`,
//! stored fractions `f`, bandwidth price `λ`, storage price `μ` and per-edge
//! availability prices `k`. Time is discretized with an Euler step; every rule
//! in a tick reads the tick-start state.

mod oracle;
mod waterfill;

pub use oracle::{kkt_point, max_flow_allocation, oracle_solve, OracleLimits, OracleSolution};
pub use waterfill::water_filling_storage;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    effective_contribution, AllocationState, Edge, HelperId, Overlay, Population, VideoCatalog,
    VideoId,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepSizes {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.01,
            gamma: 0.5,
            delta: 0.5,
            epsilon: 0.05,
        }
    }
}

impl StepSizes {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, epsilon: f64) -> Result<Self> {
        let s = Self {
            alpha,
            beta,
            gamma,
            delta,
            epsilon,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "step size {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Every step multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha * factor,
            beta: self.beta * factor,
            gamma: self.gamma * factor,
            delta: self.delta * factor,
            epsilon: self.epsilon * factor,
        }
    }
}

/// Units in which the storage rules measure video sizes, capacities and
/// durations. Rates stay in kbps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageScale {
    pub storage_unit_kbit: f64,
    pub duration_unit_s: f64,
}

impl Default for StorageScale {
    /// GiB and hours.
    fn default() -> Self {
        Self {
            storage_unit_kbit: 8.0 * 1024.0 * 1024.0,
            duration_unit_s: 3600.0,
        }
    }
}

impl StorageScale {
    /// kbit and seconds.
    pub fn native() -> Self {
        Self {
            storage_unit_kbit: 1.0,
            duration_unit_s: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.storage_unit_kbit > 0.0 && self.duration_unit_s > 0.0) {
            return Err(Error::InvalidArgument(
                "storage scale units must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocatorConfig {
    pub steps: StepSizes,
    pub scale: StorageScale,
}

/// The fixed-topology problem an allocator step operates on.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub overlay: &'a Overlay,
    pub catalog: &'a VideoCatalog,
    pub population: &'a Population,
}

impl<'a> Problem<'a> {
    pub fn new(
        overlay: &'a Overlay,
        catalog: &'a VideoCatalog,
        population: &'a Population,
    ) -> Self {
        Self {
            overlay,
            catalog,
            population,
        }
    }

    fn video_of(&self, edge: Edge) -> Result<usize> {
        self.population
            .users
            .get(&edge.user)
            .map(|u| u.video.0)
            .ok_or_else(|| Error::Structural(format!("edge {edge} names an absent user")))
    }
}

/// Which helpers update in a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    All,
    Helper(HelperId),
}

/// Where the x-rule gets each user's marginal utility.
#[derive(Debug, Clone, Copy)]
pub enum Marginals<'a> {
    /// Evaluated on the tick-start state.
    FromState,
    /// Last value reported per edge; missing entries count as 1.
    Reported(&'a BTreeMap<Edge, f64>),
}

/// Relative distance from a user's streaming rate treated as the kink.
pub const KINK_TOLERANCE: f64 = 1e-9;

/// Projected drift: blocks motion past `lower`/`upper`.
pub fn project_rate(h: f64, y: f64, lower: f64, upper: f64) -> f64 {
    if y >= upper {
        h.min(0.0)
    } else if y <= lower {
        h.max(0.0)
    } else {
        h
    }
}

/// Marginal utility of a user's received rate; 0 at and above the kink.
pub fn subgradient_g(sum_rates: f64, rate: f64) -> f64 {
    if sum_rates < rate {
        1.0
    } else {
        0.0
    }
}

fn marginals_from_state(state: &AllocationState, problem: &Problem) -> BTreeMap<Edge, f64> {
    let mut per_user = BTreeMap::new();
    for u in problem.population.users.values() {
        let total = state.user_rate(u.id, problem.overlay);
        per_user.insert(u.id, subgradient_g(total, problem.catalog.rate(u.video)));
    }
    problem
        .overlay
        .edges()
        .map(|e| (e, per_user.get(&e.user).copied().unwrap_or(1.0)))
        .collect()
}

fn check_scope(state: &AllocationState, problem: &Problem, scope: Scope) -> Result<()> {
    match scope {
        Scope::All => state.check_consistency(problem.overlay, problem.population, problem.catalog),
        Scope::Helper(j) => {
            let vars = state
                .helpers
                .get(&j)
                .ok_or_else(|| Error::Structural(format!("{j} has no variables")))?;
            if vars.f.len() != problem.catalog.len() {
                return Err(Error::Structural(format!(
                    "{j} has an f row of the wrong length"
                )));
            }
            for u in problem.overlay.users_of(j) {
                let e = Edge::new(j, u);
                if !state.edges.contains_key(&e) {
                    return Err(Error::Structural(format!("edge {e} has no variables")));
                }
            }
            let keyed = state.edges.keys().filter(|e| e.helper == j).count();
            if keyed != problem.overlay.helper_degree(j) {
                return Err(Error::Structural(format!(
                    "{j} has variables for edges not in the overlay"
                )));
            }
            Ok(())
        }
    }
}

/// One Euler tick of the dynamics, returning the new state.
pub fn primal_dual_step(
    state: &AllocationState,
    problem: &Problem,
    config: &AllocatorConfig,
    scope: Scope,
) -> Result<AllocationState> {
    let mut next = state.clone();
    step_in_place(&mut next, problem, config, scope, Marginals::FromState)?;
    Ok(next)
}

/// In-place tick. Helpers only read their own variables and the marginals,
/// which are fixed before any write, so updating helper by helper is the same
/// as a simultaneous update.
pub fn step_in_place(
    state: &mut AllocationState,
    problem: &Problem,
    config: &AllocatorConfig,
    scope: Scope,
    marginals: Marginals,
) -> Result<()> {
    check_scope(state, problem, scope)?;
    let owned;
    let g = match marginals {
        Marginals::FromState => {
            owned = marginals_from_state(state, problem);
            &owned
        }
        Marginals::Reported(map) => map,
    };
    let helpers: Vec<HelperId> = match scope {
        Scope::All => problem.population.helpers.keys().copied().collect(),
        Scope::Helper(j) => vec![j],
    };
    for j in helpers {
        update_helper(state, problem, config, j, g)?;
    }
    Ok(())
}

fn update_helper(
    state: &mut AllocationState,
    problem: &Problem,
    config: &AllocatorConfig,
    j: HelperId,
    g: &BTreeMap<Edge, f64>,
) -> Result<()> {
    let StepSizes {
        alpha,
        beta,
        gamma,
        delta,
        epsilon,
    } = config.steps;
    let scale = config.scale;
    let node = problem
        .population
        .helpers
        .get(&j)
        .ok_or_else(|| Error::Structural(format!("{j} is not in the population")))?;
    let catalog = problem.catalog;
    let vars = state.helpers[&j].clone();
    let edges: Vec<(Edge, usize)> = problem
        .overlay
        .users_of(j)
        .map(|u| {
            let e = Edge::new(j, u);
            problem.video_of(e).map(|m| (e, m))
        })
        .collect::<Result<_>>()?;

    let mut k_per_video = vec![0.0; catalog.len()];
    let mut total_x = 0.0;
    for &(e, m) in &edges {
        let ev = state.edges[&e];
        k_per_video[m] += ev.k;
        total_x += ev.x;
    }
    let stored: f64 = vars
        .f
        .iter()
        .zip(catalog.videos())
        .map(|(f, v)| f * v.size_kbit / scale.storage_unit_kbit)
        .sum();

    let mut new_edges = Vec::with_capacity(edges.len());
    for &(e, m) in &edges {
        let ev = state.edges[&e];
        let marginal = g.get(&e).copied().unwrap_or(1.0);
        let dx = alpha * project_rate(marginal - vars.lambda - ev.k, ev.x, 0.0, f64::INFINITY);
        let dk = epsilon
            * project_rate(
                ev.x - vars.f[m] * catalog.rate(VideoId(m)),
                ev.k,
                0.0,
                f64::INFINITY,
            );
        new_edges.push((e, (ev.x + dx).max(0.0), (ev.k + dk).max(0.0)));
    }
    let new_f: Vec<f64> = vars
        .f
        .iter()
        .enumerate()
        .map(|(m, &f)| {
            let l = catalog.videos()[m].duration_s / scale.duration_unit_s;
            let df = beta * project_rate(k_per_video[m] - l * vars.mu, f, 0.0, 1.0);
            (f + df).clamp(0.0, 1.0)
        })
        .collect();
    let dl = gamma * project_rate(total_x - node.upload_kbps, vars.lambda, 0.0, f64::INFINITY);
    let dm = delta
        * project_rate(
            stored - node.storage_kbit / scale.storage_unit_kbit,
            vars.mu,
            0.0,
            f64::INFINITY,
        );

    for (e, x, k) in new_edges {
        let ev = state.edges.get_mut(&e).expect("checked above");
        ev.x = x;
        ev.k = k;
    }
    let hv = state.helpers.get_mut(&j).expect("checked above");
    hv.f = new_f;
    hv.lambda = (vars.lambda + dl).max(0.0);
    hv.mu = (vars.mu + dm).max(0.0);
    Ok(())
}

/// Max-norm residual of each optimality-condition family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity_x: f64,
    pub stationarity_f: f64,
    pub comp_slack_lambda: f64,
    pub comp_slack_mu: f64,
    pub comp_slack_k: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity_x
            .max(self.stationarity_f)
            .max(self.comp_slack_lambda)
            .max(self.comp_slack_mu)
            .max(self.comp_slack_k)
    }
}

/// At a user's kink the marginal may be anything in [0, 1]; the residual uses
/// the value that best balances that user's edges.
pub fn kkt_residuals(
    state: &AllocationState,
    problem: &Problem,
    scale: &StorageScale,
) -> Result<KktResiduals> {
    state.check_consistency(problem.overlay, problem.population, problem.catalog)?;
    let catalog = problem.catalog;
    let mut r = KktResiduals::default();
    for u in problem.population.users.values() {
        let rate = catalog.rate(u.video);
        let terms: Vec<(f64, f64)> = problem
            .overlay
            .helpers_of(u.id)
            .map(|h| {
                let e = Edge::new(h, u.id);
                (
                    state.edges[&e].x,
                    state.helpers[&h].lambda + state.edges[&e].k,
                )
            })
            .collect();
        let total: f64 = terms.iter().map(|t| t.0).sum();
        let residual_at = |s: f64| {
            terms
                .iter()
                .map(|&(x, price)| project_rate(s - price, x, 0.0, f64::INFINITY).abs())
                .fold(0.0, f64::max)
        };
        let sx = if (total - rate).abs() <= KINK_TOLERANCE * rate {
            let mut candidates = vec![0.0, 1.0];
            for (i, a) in terms.iter().enumerate() {
                candidates.push(a.1);
                for b in &terms[i + 1..] {
                    candidates.push(0.5 * (a.1 + b.1));
                }
            }
            candidates
                .into_iter()
                .map(|s| residual_at(s.clamp(0.0, 1.0)))
                .fold(f64::INFINITY, f64::min)
        } else {
            residual_at(subgradient_g(total, rate))
        };
        r.stationarity_x = r.stationarity_x.max(sx);
    }
    for (&e, ev) in &state.edges {
        let m = problem.video_of(e)?;
        let slack = ev.k * (ev.x - state.helpers[&e.helper].f[m] * catalog.rate(VideoId(m)));
        r.comp_slack_k = r.comp_slack_k.max(slack.abs());
    }
    for (&j, hv) in &state.helpers {
        let node = &problem.population.helpers[&j];
        let mut k_per_video = vec![0.0; catalog.len()];
        for u in problem.overlay.users_of(j) {
            let e = Edge::new(j, u);
            k_per_video[problem.video_of(e)?] += state.edges[&e].k;
        }
        for (m, &f) in hv.f.iter().enumerate() {
            let l = catalog.videos()[m].duration_s / scale.duration_unit_s;
            let sf = project_rate(k_per_video[m] - l * hv.mu, f, 0.0, 1.0).abs();
            r.stationarity_f = r.stationarity_f.max(sf);
        }
        let lam = hv.lambda * (state.helper_rate(j) - node.upload_kbps);
        r.comp_slack_lambda = r.comp_slack_lambda.max(lam.abs());
        let stored = state.helper_storage(j, catalog) / scale.storage_unit_kbit;
        let mu = hv.mu * (stored - node.storage_kbit / scale.storage_unit_kbit);
        r.comp_slack_mu = r.comp_slack_mu.max(mu.abs());
    }
    Ok(r)
}

/// Weighted squared distance to a reference point, split by variable family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSnapshot {
    pub value: f64,
    pub x: f64,
    pub f: f64,
    pub lambda: f64,
    pub mu: f64,
    pub k: f64,
}

pub fn lyapunov(
    state: &AllocationState,
    reference: &AllocationState,
    steps: &StepSizes,
) -> Result<LyapunovSnapshot> {
    if !state.same_keys(reference) {
        return Err(Error::Structural(
            "state and reference are keyed differently".into(),
        ));
    }
    let mut s = LyapunovSnapshot::default();
    for (a, b) in state.edges.values().zip(reference.edges.values()) {
        s.x += (a.x - b.x).powi(2);
        s.k += (a.k - b.k).powi(2);
    }
    for (a, b) in state.helpers.values().zip(reference.helpers.values()) {
        s.lambda += (a.lambda - b.lambda).powi(2);
        s.mu += (a.mu - b.mu).powi(2);
        s.f +=
            a.f.iter()
                .zip(&b.f)
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>();
    }
    s.x /= 2.0 * steps.alpha;
    s.f /= 2.0 * steps.beta;
    s.lambda /= 2.0 * steps.gamma;
    s.mu /= 2.0 * steps.delta;
    s.k /= 2.0 * steps.epsilon;
    s.value = s.x + s.f + s.lambda + s.mu + s.k;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriteria {
    pub tolerance: f64,
    pub sustain_ticks: usize,
    pub max_ticks: usize,
    /// Fraction of the run averaged when convergence is never detected.
    pub tail_fraction: f64,
}

impl Default for ConvergenceCriteria {
    fn default() -> Self {
        Self {
            tolerance: 1e-3,
            sustain_ticks: 50,
            max_ticks: 20_000,
            tail_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRun {
    /// State at the detection tick, or the last state.
    pub state: AllocationState,
    /// Tick at which the residual stayed below tolerance for the sustain window.
    pub converged_at: Option<usize>,
    pub ticks: usize,
    pub residuals: KktResiduals,
    pub contribution: f64,
    /// Mean contribution over the tail window.
    pub tail_contribution: f64,
    /// Coordinate-wise mean state over the tail window.
    pub tail_state: AllocationState,
}

impl ConvergenceRun {
    /// Contribution at detection, or the tail mean for runs that never settle.
    pub fn settled_contribution(&self) -> f64 {
        if self.converged_at.is_some() {
            self.contribution
        } else {
            self.tail_contribution
        }
    }
}

/// Runs synchronized full-scope ticks until the residual criterion holds or
/// `max_ticks` elapse. `observer` sees every post-tick state.
pub fn run_to_convergence(
    initial: &AllocationState,
    problem: &Problem,
    config: &AllocatorConfig,
    criteria: &ConvergenceCriteria,
    mut observer: impl FnMut(usize, &AllocationState),
) -> Result<ConvergenceRun> {
    let mut state = initial.clone();
    let tail_len = ((criteria.max_ticks as f64 * criteria.tail_fraction).ceil() as usize).max(1);
    let tail_start = criteria.max_ticks.saturating_sub(tail_len);
    let mut tail_sum = zeroed_like(&state);
    let mut tail_contribution = 0.0;
    let mut tail_count = 0usize;
    let mut below = 0usize;
    let mut residuals = kkt_residuals(&state, problem, &config.scale)?;
    for tick in 1..=criteria.max_ticks {
        step_in_place(
            &mut state,
            problem,
            config,
            Scope::All,
            Marginals::FromState,
        )?;
        observer(tick, &state);
        residuals = kkt_residuals(&state, problem, &config.scale)?;
        if tick > tail_start {
            accumulate(&mut tail_sum, &state);
            tail_contribution += effective_contribution(
                problem.overlay,
                &state,
                problem.catalog,
                problem.population,
            );
            tail_count += 1;
        }
        if residuals.max() < criteria.tolerance {
            below += 1;
            if below >= criteria.sustain_ticks {
                let contribution = effective_contribution(
                    problem.overlay,
                    &state,
                    problem.catalog,
                    problem.population,
                );
                return Ok(ConvergenceRun {
                    tail_state: state.clone(),
                    state,
                    converged_at: Some(tick),
                    ticks: tick,
                    residuals,
                    contribution,
                    tail_contribution: contribution,
                });
            }
        } else {
            below = 0;
        }
    }
    let contribution =
        effective_contribution(problem.overlay, &state, problem.catalog, problem.population);
    let n = tail_count.max(1) as f64;
    scale_state(&mut tail_sum, 1.0 / n);
    Ok(ConvergenceRun {
        state,
        converged_at: None,
        ticks: criteria.max_ticks,
        residuals,
        contribution,
        tail_contribution: tail_contribution / n,
        tail_state: tail_sum,
    })
}

fn zeroed_like(state: &AllocationState) -> AllocationState {
    let mut z = state.clone();
    scale_state(&mut z, 0.0);
    z
}

fn accumulate(acc: &mut AllocationState, s: &AllocationState) {
    for (a, b) in acc.edges.values_mut().zip(s.edges.values()) {
        a.x += b.x;
        a.k += b.k;
    }
    for (a, b) in acc.helpers.values_mut().zip(s.helpers.values()) {
        a.lambda += b.lambda;
        a.mu += b.mu;
        for (p, q) in a.f.iter_mut().zip(&b.f) {
            *p += q;
        }
    }
}

fn scale_state(s: &mut AllocationState, c: f64) {
    for v in s.edges.values_mut() {
        v.x *= c;
        v.k *= c;
    }
    for h in s.helpers.values_mut() {
        h.lambda *= c;
        h.mu *= c;
        h.f.iter_mut().for_each(|f| *f *= c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::UserId;
    use approx::assert_abs_diff_eq;

    fn one_on_one(upload: f64) -> (VideoCatalog, Population, Overlay) {
        let catalog = VideoCatalog::from_rates(&[(400.0, 3600.0)]).unwrap();
        let pop =
            Population::new(vec![user(1, 0, 1, &[])], vec![helper(1, upload, 1e9, 1)]).unwrap();
        let overlay = Overlay::from_edges([Edge::new(HelperId(1), UserId(1))]);
        (catalog, pop, overlay)
    }

    const E: Edge = Edge {
        helper: HelperId(1),
        user: UserId(1),
    };

    #[test]
    fn projection_cases() {
        assert_eq!(project_rate(5.0, 10.0, 0.0, 10.0), 0.0);
        assert_eq!(project_rate(-3.0, 0.0, 0.0, f64::INFINITY), 0.0);
        assert_eq!(project_rate(-3.0, 2.0, 0.0, f64::INFINITY), -3.0);
        assert_eq!(project_rate(-3.0, 10.0, 0.0, 10.0), -3.0);
        assert_eq!(project_rate(4.0, 0.0, 0.0, 1.0), 4.0);
    }

    #[test]
    fn subgradient_cases() {
        assert_eq!(subgradient_g(250.0, 400.0), 1.0);
        assert_eq!(subgradient_g(400.0, 400.0), 0.0);
        assert_eq!(subgradient_g(500.0, 400.0), 0.0);
    }

    #[test]
    fn first_step_from_zero() {
        let (c, p, o) = one_on_one(300.0);
        let s = AllocationState::zero(&o, &p, &c);
        let next = primal_dual_step(
            &s,
            &Problem::new(&o, &c, &p),
            &AllocatorConfig::default(),
            Scope::All,
        )
        .unwrap();
        assert_eq!(next.x(E), 1.0);
        assert_eq!(next.k(E), 0.0);
        assert_eq!(next.helpers[&HelperId(1)].lambda, 0.0);
    }

    #[test]
    fn overloaded_helper_raises_lambda() {
        let (c, p, o) = one_on_one(300.0);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.edges.get_mut(&E).unwrap().x = 350.0;
        s.helpers.get_mut(&HelperId(1)).unwrap().lambda = 0.2;
        let cfg = AllocatorConfig::default();
        let next = primal_dual_step(&s, &Problem::new(&o, &c, &p), &cfg, Scope::All).unwrap();
        assert_abs_diff_eq!(
            next.helpers[&HelperId(1)].lambda,
            0.2 + 0.5 * 50.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn out_of_scope_helpers_unchanged() {
        let catalog = VideoCatalog::from_rates(&[(400.0, 3600.0)]).unwrap();
        let pop = Population::new(
            vec![user(1, 0, 2, &[])],
            vec![helper(1, 300.0, 1e9, 1), helper(2, 300.0, 1e9, 1)],
        )
        .unwrap();
        let o = Overlay::from_edges([
            Edge::new(HelperId(1), UserId(1)),
            Edge::new(HelperId(2), UserId(1)),
        ]);
        let s = AllocationState::zero(&o, &pop, &catalog);
        let next = primal_dual_step(
            &s,
            &Problem::new(&o, &catalog, &pop),
            &AllocatorConfig::default(),
            Scope::Helper(HelperId(2)),
        )
        .unwrap();
        assert_eq!(next.x(Edge::new(HelperId(1), UserId(1))), 0.0);
        assert_eq!(next.x(Edge::new(HelperId(2), UserId(1))), 1.0);
    }

    #[test]
    fn lonely_helper_prices_decay() {
        let catalog = VideoCatalog::from_rates(&[(400.0, 3600.0)]).unwrap();
        let pop = Population::new(vec![], vec![helper(1, 300.0, 1e9, 1)]).unwrap();
        let o = Overlay::new();
        let mut s = AllocationState::zero(&o, &pop, &catalog);
        let hv = s.helpers.get_mut(&HelperId(1)).unwrap();
        hv.lambda = 1.0;
        hv.mu = 1.0;
        hv.f = vec![0.5];
        let next = primal_dual_step(
            &s,
            &Problem::new(&o, &catalog, &pop),
            &AllocatorConfig::default(),
            Scope::All,
        )
        .unwrap();
        let hv = &next.helpers[&HelperId(1)];
        assert_eq!(hv.lambda, 0.0);
        assert!(hv.mu < 1.0);
        assert!(hv.f[0] < 0.5);
    }

    #[test]
    fn stale_keying_is_structural() {
        let (c, p, o) = one_on_one(300.0);
        let s = AllocationState::zero(&Overlay::new(), &p, &c);
        let err = primal_dual_step(
            &s,
            &Problem::new(&o, &c, &p),
            &AllocatorConfig::default(),
            Scope::All,
        );
        assert!(matches!(err, Err(Error::Structural(_))));
    }

    #[test]
    fn kkt_zero_state_has_unit_stationarity() {
        let (c, p, o) = one_on_one(300.0);
        let s = AllocationState::zero(&o, &p, &c);
        let r = kkt_residuals(&s, &Problem::new(&o, &c, &p), &StorageScale::default()).unwrap();
        assert_eq!(r.stationarity_x, 1.0);
    }

    #[test]
    fn kkt_lambda_slack() {
        let (c, p, o) = one_on_one(300.0);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.edges.get_mut(&E).unwrap().x = 100.0;
        s.helpers.get_mut(&HelperId(1)).unwrap().lambda = 0.5;
        let r = kkt_residuals(&s, &Problem::new(&o, &c, &p), &StorageScale::default()).unwrap();
        assert_eq!(r.comp_slack_lambda, 0.5 * 200.0);
    }

    #[test]
    fn lyapunov_examples() {
        let (c, p, o) = one_on_one(300.0);
        let a = AllocationState::zero(&o, &p, &c);
        let steps = StepSizes::default();
        assert_eq!(lyapunov(&a, &a, &steps).unwrap().value, 0.0);
        let mut b = a.clone();
        b.edges.get_mut(&E).unwrap().x = 2.0;
        let snap = lyapunov(&b, &a, &steps).unwrap();
        assert_eq!(snap.value, 2.0);
        assert_eq!(snap.x, 2.0);
        let mut d = a.clone();
        d.helpers.get_mut(&HelperId(1)).unwrap().f[0] = 0.1;
        assert!(lyapunov(&d, &a, &steps).unwrap().value > 0.0);
        let other = AllocationState::zero(&Overlay::new(), &p, &c);
        assert!(lyapunov(&other, &a, &steps).is_err());
    }

    #[test]
    fn step_sizes_validate() {
        assert!(StepSizes::new(1.0, 0.0, 1.0, 1.0, 1.0).is_err());
        let s = StepSizes::default().scaled(0.1);
        assert_abs_diff_eq!(s.beta, 0.001, epsilon = 1e-15);
    }

    #[test]
    fn f_rule_uses_duration_in_scale_units() {
        let (c, p, o) = one_on_one(300.0);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.edges.get_mut(&E).unwrap().k = 3.0;
        let hv = s.helpers.get_mut(&HelperId(1)).unwrap();
        hv.mu = 2.0;
        hv.f = vec![0.5];
        let next = primal_dual_step(
            &s,
            &Problem::new(&o, &c, &p),
            &AllocatorConfig::default(),
            Scope::All,
        )
        .unwrap();
        // one-hour video: drift is β·(3 − 1·2)
        assert_abs_diff_eq!(next.f(HelperId(1), VideoId(0)), 0.5 + 0.01, epsilon = 1e-12);
    }
}
