//! Exhaustive reference solver for tiny instances.
//!
//! For fixed stored fractions the best rates are a max-flow through
//! source → helper (B) → user (f·r) → sink (r). The outer search walks a grid
//! over each helper's storage face, then refines around the best point.

use std::collections::BTreeMap;

use super::{kkt_residuals, Problem, StorageScale};
use crate::error::{Error, Result};
use crate::model::{AllocationState, Edge, HelperId, UserId, VideoId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_helpers: usize,
    pub max_users: usize,
    pub max_videos: usize,
    pub min_resolution: u32,
}

impl Default for OracleLimits {
    fn default() -> Self {
        Self {
            max_helpers: 3,
            max_users: 4,
            max_videos: 3,
            min_resolution: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Optimal x and f; prices are zero.
    pub state: AllocationState,
    pub utility: f64,
}

const FLOW_EPS: f64 = 1e-12;

/// Best value so far, its face coordinates and storage rows.
type Candidate = (f64, Vec<f64>, BTreeMap<HelperId, Vec<f64>>);

struct Network {
    helpers: Vec<HelperId>,
    users: Vec<UserId>,
    cap: Vec<Vec<f64>>,
    flow: Vec<Vec<f64>>,
}

impl Network {
    const SOURCE: usize = 0;
    const SINK: usize = 1;

    fn helper_node(&self, idx: usize) -> usize {
        2 + idx
    }

    fn user_node(&self, idx: usize) -> usize {
        2 + self.helpers.len() + idx
    }

    fn build(problem: &Problem, f: &BTreeMap<HelperId, Vec<f64>>) -> Self {
        let helpers: Vec<HelperId> = problem.population.helpers.keys().copied().collect();
        let users: Vec<UserId> = problem.population.users.keys().copied().collect();
        let n = 2 + helpers.len() + users.len();
        let mut net = Self {
            helpers,
            users,
            cap: vec![vec![0.0; n]; n],
            flow: vec![vec![0.0; n]; n],
        };
        for (hi, h) in net.helpers.clone().iter().enumerate() {
            let node = net.helper_node(hi);
            net.cap[Self::SOURCE][node] = problem.population.helpers[h].upload_kbps;
        }
        for (ui, u) in net.users.clone().iter().enumerate() {
            let node = net.user_node(ui);
            let video = problem.population.users[u].video;
            net.cap[node][Self::SINK] = problem.catalog.rate(video);
            for h in problem.overlay.helpers_of(*u) {
                let hi = net
                    .helpers
                    .binary_search(&h)
                    .expect("overlay helper in population");
                let fr = f.get(&h).map_or(0.0, |row| row[video.0]) * problem.catalog.rate(video);
                let hn = net.helper_node(hi);
                net.cap[hn][node] = fr;
            }
        }
        net
    }

    fn residual(&self, a: usize, b: usize) -> f64 {
        self.cap[a][b] - self.flow[a][b] + self.flow[b][a]
    }

    /// Nodes reachable from `start` along positive residual capacity.
    fn reachable(&self, start: usize) -> Vec<bool> {
        let n = self.cap.len();
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(a) = queue.pop_front() {
            for b in 0..n {
                if !seen[b] && self.residual(a, b) > FLOW_EPS {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        seen
    }

    /// Edmonds-Karp.
    fn saturate(&mut self) -> f64 {
        let n = self.cap.len();
        let mut total = 0.0;
        loop {
            let mut parent = vec![usize::MAX; n];
            parent[Self::SOURCE] = Self::SOURCE;
            let mut queue = std::collections::VecDeque::from([Self::SOURCE]);
            while let Some(a) = queue.pop_front() {
                if a == Self::SINK {
                    break;
                }
                for b in 0..n {
                    if parent[b] == usize::MAX && self.residual(a, b) > FLOW_EPS {
                        parent[b] = a;
                        queue.push_back(b);
                    }
                }
            }
            if parent[Self::SINK] == usize::MAX {
                return total;
            }
            let mut bottleneck = f64::INFINITY;
            let mut b = Self::SINK;
            while b != Self::SOURCE {
                let a = parent[b];
                bottleneck = bottleneck.min(self.residual(a, b));
                b = a;
            }
            let mut b = Self::SINK;
            while b != Self::SOURCE {
                let a = parent[b];
                let cancel = self.flow[b][a].min(bottleneck);
                self.flow[b][a] -= cancel;
                self.flow[a][b] += bottleneck - cancel;
                b = a;
            }
            total += bottleneck;
        }
    }

    fn edge_flows(&self, problem: &Problem) -> BTreeMap<Edge, f64> {
        problem
            .overlay
            .edges()
            .map(|e| {
                let hi = self
                    .helpers
                    .binary_search(&e.helper)
                    .expect("helper indexed");
                let ui = self.users.binary_search(&e.user).expect("user indexed");
                (e, self.flow[self.helper_node(hi)][self.user_node(ui)])
            })
            .collect()
    }
}

/// Best rates for fixed stored fractions: (total contribution, per-edge rates).
pub fn max_flow_allocation(
    problem: &Problem,
    f: &BTreeMap<HelperId, Vec<f64>>,
) -> (f64, BTreeMap<Edge, f64>) {
    let mut net = Network::build(problem, f);
    let value = net.saturate();
    (value, net.edge_flows(problem))
}

/// How one helper's f row is generated from its free coordinates.
struct HelperFace {
    helper: HelperId,
    /// Videos with at least one neighbor watching.
    relevant: Vec<VideoId>,
    /// Storage binds: the last relevant video takes the remaining space.
    binding: bool,
    storage: f64,
}

impl HelperFace {
    fn free_dims(&self) -> usize {
        if self.binding {
            self.relevant.len().saturating_sub(1)
        } else {
            0
        }
    }

    fn row(&self, coords: &[f64], problem: &Problem) -> Option<Vec<f64>> {
        let mut row = vec![0.0; problem.catalog.len()];
        if !self.binding {
            for v in &self.relevant {
                row[v.0] = 1.0;
            }
            return Some(row);
        }
        let (last, rest) = self.relevant.split_last()?;
        let mut used = 0.0;
        for (v, &c) in rest.iter().zip(coords) {
            row[v.0] = c;
            used += c * problem.catalog.size(*v);
        }
        let last_size = problem.catalog.size(*last);
        let remaining = (self.storage - used) / last_size;
        if remaining < -1e-12 {
            return None;
        }
        row[last.0] = remaining.clamp(0.0, 1.0);
        // spill what the last video cannot take into the others, in order
        let mut spare = self.storage - used - last_size;
        for v in rest {
            if spare <= 0.0 {
                break;
            }
            let size = problem.catalog.size(*v);
            let add = ((1.0 - row[v.0]) * size).min(spare);
            row[v.0] += add / size;
            spare -= add;
        }
        Some(row)
    }
}

fn check_limits(problem: &Problem, resolution: u32, limits: &OracleLimits) -> Result<()> {
    let p = problem.population;
    if p.helpers.len() > limits.max_helpers
        || p.users.len() > limits.max_users
        || problem.catalog.len() > limits.max_videos
    {
        return Err(Error::TooLarge(format!(
            "oracle handles at most {} helpers, {} users and {} videos; got {}, {}, {}",
            limits.max_helpers,
            limits.max_users,
            limits.max_videos,
            p.helpers.len(),
            p.users.len(),
            problem.catalog.len()
        )));
    }
    if resolution < limits.min_resolution {
        return Err(Error::InvalidArgument(format!(
            "oracle resolution must be at least {}, got {resolution}",
            limits.min_resolution
        )));
    }
    Ok(())
}

/// Optimal fixed-topology allocation by grid search over stored fractions and
/// exact max-flow for rates.
pub fn oracle_solve(problem: &Problem, resolution: u32) -> Result<OracleSolution> {
    check_limits(problem, resolution, &OracleLimits::default())?;
    let faces: Vec<HelperFace> = problem
        .population
        .helpers
        .values()
        .map(|h| {
            let mut relevant: Vec<VideoId> = problem
                .overlay
                .users_of(h.id)
                .map(|u| problem.population.users[&u].video)
                .collect();
            relevant.sort();
            relevant.dedup();
            let need: f64 = relevant.iter().map(|v| problem.catalog.size(*v)).sum();
            HelperFace {
                helper: h.id,
                binding: need > h.storage_kbit,
                relevant,
                storage: h.storage_kbit,
            }
        })
        .collect();
    let dims: Vec<usize> = faces.iter().map(HelperFace::free_dims).collect();
    let total_dims: usize = dims.iter().sum();

    let evaluate = |coords: &[f64]| -> Option<(f64, BTreeMap<HelperId, Vec<f64>>)> {
        let mut rows = BTreeMap::new();
        let mut offset = 0;
        for (face, &d) in faces.iter().zip(&dims) {
            rows.insert(face.helper, face.row(&coords[offset..offset + d], problem)?);
            offset += d;
        }
        let (value, _) = max_flow_allocation(problem, &rows);
        Some((value, rows))
    };

    let mut best: Option<Candidate> = None;
    let consider = |coords: Vec<f64>, best: &mut Option<Candidate>| {
        if let Some((value, rows)) = evaluate(&coords) {
            if best.as_ref().is_none_or(|(b, _, _)| value > *b + 1e-12) {
                *best = Some((value, coords, rows));
            }
        }
    };

    let coarse: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    for point in grid(total_dims, |_| coarse.clone()) {
        consider(point, &mut best);
    }
    let finest = 1.0 / resolution as f64;
    let mut step = 0.1;
    while step > finest / 2.0 && total_dims > 0 {
        step /= 2.0;
        let Some((_, center, _)) = best.clone() else {
            break;
        };
        let offsets = [-2.0 * step, -step, 0.0, step, 2.0 * step];
        let snapped = grid(total_dims, |d| {
            offsets
                .iter()
                .map(|o| (center[d] + o).clamp(0.0, 1.0))
                .collect()
        });
        for point in snapped {
            consider(point, &mut best);
        }
    }

    let (utility, _, rows) =
        best.ok_or_else(|| Error::Structural("no feasible storage allocation found".into()))?;
    let (_, flows) = max_flow_allocation(problem, &rows);
    let mut state = AllocationState::zero(problem.overlay, problem.population, problem.catalog);
    for (e, x) in flows {
        state.edges.get_mut(&e).expect("flow on overlay edge").x = x;
    }
    for (h, row) in rows {
        state.helpers.get_mut(&h).expect("helper keyed").f = row;
    }
    Ok(OracleSolution { state, utility })
}

/// Cartesian product of per-dimension value lists.
fn grid(dims: usize, values: impl Fn(usize) -> Vec<f64>) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::with_capacity(dims)];
    for d in 0..dims {
        let vs = values(d);
        points = points
            .into_iter()
            .flat_map(|p| {
                vs.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Completes an optimal (x, f) with prices satisfying every optimality
/// condition the dynamics can reach, from a minimum cut of the flow network.
///
/// Fails when the stored fractions are not exactly optimal, since no storage
/// price then balances the cut's availability prices.
pub fn kkt_point(
    problem: &Problem,
    solution: &OracleSolution,
    scale: &StorageScale,
) -> Result<AllocationState> {
    let rows: BTreeMap<HelperId, Vec<f64>> = solution
        .state
        .helpers
        .iter()
        .map(|(h, v)| (*h, v.f.clone()))
        .collect();
    let mut net = Network::build(problem, &rows);
    net.saturate();
    let from_source = net.reachable(Network::SOURCE);
    let mut state = AllocationState::zero(problem.overlay, problem.population, problem.catalog);
    for (e, x) in net.edge_flows(problem) {
        state.edges.get_mut(&e).expect("edge keyed").x = x;
    }
    for (hi, &h) in net.helpers.iter().enumerate() {
        let hv = state.helpers.get_mut(&h).expect("helper keyed");
        hv.f = rows[&h].clone();
        hv.lambda = if from_source[net.helper_node(hi)] {
            0.0
        } else {
            1.0
        };
    }
    for (ui, &u) in net.users.iter().enumerate() {
        if from_source[net.user_node(ui)] {
            continue;
        }
        for h in problem.overlay.helpers_of(u) {
            let hi = net.helpers.binary_search(&h).expect("helper indexed");
            if from_source[net.helper_node(hi)] {
                state.edges.get_mut(&Edge::new(h, u)).expect("edge keyed").k = 1.0;
            }
        }
    }
    for &h in &net.helpers {
        let mut counts = vec![0.0; problem.catalog.len()];
        for u in problem.overlay.users_of(h) {
            counts[problem.population.users[&u].video.0] += state.k(Edge::new(h, u));
        }
        let node = &problem.population.helpers[&h];
        let f = &rows[&h];
        let mut lower: f64 = 0.0;
        let mut upper = f64::INFINITY;
        for (m, spec) in problem.catalog.videos().iter().enumerate() {
            let ratio = counts[m] / (spec.duration_s / scale.duration_unit_s);
            if f[m] <= 0.0 {
                lower = lower.max(ratio);
            } else if f[m] >= 1.0 {
                upper = upper.min(ratio);
            } else {
                lower = lower.max(ratio);
                upper = upper.min(ratio);
            }
        }
        let stored: f64 = f
            .iter()
            .zip(problem.catalog.videos())
            .map(|(f, v)| f * v.size_kbit)
            .sum();
        let tight = (stored - node.storage_kbit).abs() <= 1e-9 * node.storage_kbit.max(1.0);
        if lower > upper + 1e-12 || (!tight && lower > 0.0) {
            return Err(Error::Structural(format!(
                "no storage price balances {h}'s stored fractions"
            )));
        }
        state.helpers.get_mut(&h).expect("helper keyed").mu = if tight { lower } else { 0.0 };
    }
    let residuals = kkt_residuals(&state, problem, scale)?;
    if residuals.max() > 1e-9 {
        return Err(Error::Structural(format!(
            "cut prices leave optimality residual {:.3e}",
            residuals.max()
        )));
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{primal_dual_step, AllocatorConfig, Scope};
    use crate::model::fixtures::*;
    use crate::model::{Overlay, Population, VideoCatalog};

    fn single(upload: f64, rate: f64) -> (VideoCatalog, Population, Overlay) {
        let catalog = VideoCatalog::from_rates(&[(rate, 3600.0)]).unwrap();
        let pop =
            Population::new(vec![user(1, 0, 1, &[])], vec![helper(1, upload, 1e9, 1)]).unwrap();
        (
            catalog,
            pop,
            Overlay::from_edges([Edge::new(HelperId(1), UserId(1))]),
        )
    }

    #[test]
    fn supply_limited() {
        let (c, p, o) = single(300.0, 400.0);
        let sol = oracle_solve(&Problem::new(&o, &c, &p), 100).unwrap();
        assert_eq!(sol.utility, 300.0);
        assert_eq!(sol.state.f(HelperId(1), VideoId(0)), 1.0);
        assert_eq!(sol.state.x(Edge::new(HelperId(1), UserId(1))), 300.0);
    }

    #[test]
    fn demand_limited() {
        let (c, p, o) = single(500.0, 400.0);
        assert_eq!(
            oracle_solve(&Problem::new(&o, &c, &p), 100)
                .unwrap()
                .utility,
            400.0
        );
    }

    #[test]
    fn storage_picks_popular_video() {
        let catalog = VideoCatalog::from_rates(&[(300.0, 3600.0), (300.0, 3600.0)]).unwrap();
        let size = catalog.size(VideoId(0));
        let pop = Population::new(
            vec![user(1, 0, 1, &[]), user(2, 1, 1, &[]), user(3, 1, 1, &[])],
            vec![helper(1, 800.0, size, 3)],
        )
        .unwrap();
        let o = Overlay::from_edges((1..=3).map(|u| Edge::new(HelperId(1), UserId(u))));
        let sol = oracle_solve(&Problem::new(&o, &catalog, &pop), 100).unwrap();
        assert!((sol.utility - 600.0).abs() < 1e-9);
        assert_eq!(sol.state.helpers[&HelperId(1)].f, vec![0.0, 1.0]);
    }

    #[test]
    fn storage_band_narrower_than_grid() {
        // the feasible band for the big video is far thinner than one grid step
        let catalog = VideoCatalog::from_rates(&[(1000.0, 3000.0), (100.0, 100.0)]).unwrap();
        let storage = 0.78 * catalog.size(VideoId(0)) + catalog.size(VideoId(1));
        let pop = Population::new(
            vec![user(1, 0, 1, &[]), user(2, 1, 1, &[])],
            vec![helper(1, 350.0, storage, 2)],
        )
        .unwrap();
        let o = Overlay::from_edges((1..=2).map(|u| Edge::new(HelperId(1), UserId(u))));
        let sol = oracle_solve(&Problem::new(&o, &catalog, &pop), 100).unwrap();
        // 0.78 * 1000 caps the big user and the small one gets its 100
        assert!(sol.utility >= 350.0 - 1e-6);
    }

    #[test]
    fn refuses_large_instances() {
        let catalog = VideoCatalog::from_rates(&[(300.0, 3600.0)]).unwrap();
        let pop = Population::new(
            (1..=5).map(|u| user(u, 0, 1, &[])).collect(),
            vec![helper(1, 800.0, 1e9, 5)],
        )
        .unwrap();
        let o = Overlay::new();
        assert!(matches!(
            oracle_solve(&Problem::new(&o, &catalog, &pop), 100),
            Err(Error::TooLarge(_))
        ));
        let (c, p, o) = single(300.0, 400.0);
        assert!(oracle_solve(&Problem::new(&o, &c, &p), 50).is_err());
    }

    #[test]
    fn max_flow_respects_every_capacity() {
        let catalog = VideoCatalog::from_rates(&[(400.0, 3600.0)]).unwrap();
        let pop = Population::new(
            vec![user(1, 0, 2, &[]), user(2, 0, 2, &[])],
            vec![helper(1, 300.0, 1e9, 2), helper(2, 300.0, 1e9, 2)],
        )
        .unwrap();
        let o = Overlay::from_edges([
            Edge::new(HelperId(1), UserId(1)),
            Edge::new(HelperId(1), UserId(2)),
            Edge::new(HelperId(2), UserId(2)),
        ]);
        let rows = [(HelperId(1), vec![0.5]), (HelperId(2), vec![1.0])]
            .into_iter()
            .collect();
        let (value, flows) = max_flow_allocation(&Problem::new(&o, &catalog, &pop), &rows);
        // helper 1 sends at most 200 per edge; user 2 tops out at its 400
        assert!((value - 600.0).abs() < 1e-9);
        assert!(flows[&Edge::new(HelperId(1), UserId(1))] <= 200.0 + 1e-9);
    }

    #[test]
    fn kkt_point_is_fixed_point() {
        let (c, p, o) = single(300.0, 400.0);
        let problem = Problem::new(&o, &c, &p);
        let sol = oracle_solve(&problem, 100).unwrap();
        let star = kkt_point(&problem, &sol, &StorageScale::default()).unwrap();
        assert_eq!(star.helpers[&HelperId(1)].lambda, 1.0);
        let next =
            primal_dual_step(&star, &problem, &AllocatorConfig::default(), Scope::All).unwrap();
        for (a, b) in next.edges.values().zip(star.edges.values()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.k - b.k).abs() < 1e-9);
        }
        for (a, b) in next.helpers.values().zip(star.helpers.values()) {
            assert!((a.lambda - b.lambda).abs() < 1e-9 && (a.mu - b.mu).abs() < 1e-9);
            assert!(a.f.iter().zip(&b.f).all(|(p, q)| (p - q).abs() < 1e-9));
        }
    }

    #[test]
    fn kkt_point_with_binding_storage() {
        let catalog = VideoCatalog::from_rates(&[(300.0, 3600.0), (300.0, 3600.0)]).unwrap();
        let size = catalog.size(VideoId(0));
        let pop = Population::new(
            vec![user(1, 0, 1, &[]), user(2, 1, 1, &[]), user(3, 1, 1, &[])],
            vec![helper(1, 800.0, size, 3)],
        )
        .unwrap();
        let o = Overlay::from_edges((1..=3).map(|u| Edge::new(HelperId(1), UserId(u))));
        let problem = Problem::new(&o, &catalog, &pop);
        let sol = oracle_solve(&problem, 100).unwrap();
        let star = kkt_point(&problem, &sol, &StorageScale::default()).unwrap();
        assert!(
            kkt_residuals(&star, &problem, &StorageScale::default())
                .unwrap()
                .max()
                <= 1e-6
        );
        assert!(star.helpers[&HelperId(1)].mu > 0.0);
    }
}
