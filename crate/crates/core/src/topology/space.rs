use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{validate_overlay, Edge, HelperId, Overlay, PeerRef, Population, UserId};

pub const MAX_CONFIGS: usize = 5000;
const MAX_PAIRS: usize = 24;

/// A single-link swap initiated by one peer: it drops `dropped` and adds
/// `added`, both incident to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub initiator: PeerRef,
    pub dropped: Edge,
    pub added: Edge,
}

/// Every saturated configuration of a tiny population, with utilities and
/// single-swap adjacency.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    pub configurations: Vec<Overlay>,
    pub utilities: Vec<f64>,
    pub transitions: Vec<Transition>,
    index: BTreeMap<BTreeSet<Edge>, usize>,
}

impl ConfigSpace {
    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    pub fn index_of(&self, overlay: &Overlay) -> Option<usize> {
        self.index.get(overlay.edge_set()).copied()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.transitions.iter().any(|t| t.from == a && t.to == b)
    }

    /// Distinct neighbors of configuration `c`.
    pub fn neighbors(&self, c: usize) -> BTreeSet<usize> {
        self.transitions
            .iter()
            .filter(|t| t.from == c)
            .map(|t| t.to)
            .collect()
    }

    pub fn argmax_utility(&self) -> Option<usize> {
        self.utilities
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
    }
}

/// Enumerates maximal degree-feasible edge sets over mutual-candidate pairs
/// (no pair could be added without breaking a cap) and their swaps.
pub fn enumerate_config_space(
    population: &Population,
    mut utility_fn: impl FnMut(&Overlay) -> Result<f64>,
) -> Result<ConfigSpace> {
    let pairs: Vec<Edge> = population
        .helpers
        .keys()
        .flat_map(|&h| population.users.keys().map(move |&u| Edge::new(h, u)))
        .filter(|&e| population.are_candidates(e))
        .collect();
    if pairs.len() > MAX_PAIRS {
        return Err(Error::TooLarge(format!(
            "{} candidate links; up to 2^{} edge sets to search, limit is {MAX_PAIRS} links",
            pairs.len(),
            pairs.len()
        )));
    }
    let mut found = Vec::new();
    let mut chosen = Vec::new();
    let mut degrees = Degrees::default();
    search(population, &pairs, 0, &mut chosen, &mut degrees, &mut found)?;

    let configurations: Vec<Overlay> = found.into_iter().map(Overlay::from_edges).collect();
    for c in &configurations {
        debug_assert!(validate_overlay(c, population).valid);
    }
    let index: BTreeMap<BTreeSet<Edge>, usize> = configurations
        .iter()
        .enumerate()
        .map(|(i, c)| (c.edge_set().clone(), i))
        .collect();
    let utilities = configurations
        .iter()
        .map(&mut utility_fn)
        .collect::<Result<Vec<_>>>()?;

    let mut transitions = Vec::new();
    for (from, c) in configurations.iter().enumerate() {
        for dropped in c.edges() {
            for &added in &pairs {
                if c.contains(added) {
                    continue;
                }
                let initiator = if added.helper == dropped.helper {
                    PeerRef::Helper(added.helper)
                } else if added.user == dropped.user {
                    PeerRef::User(added.user)
                } else {
                    continue;
                };
                let mut next = c.edge_set().clone();
                next.remove(&dropped);
                next.insert(added);
                if let Some(&to) = index.get(&next) {
                    transitions.push(Transition {
                        from,
                        to,
                        initiator,
                        dropped,
                        added,
                    });
                }
            }
        }
    }
    Ok(ConfigSpace {
        configurations,
        utilities,
        transitions,
        index,
    })
}

#[derive(Default)]
struct Degrees {
    users: BTreeMap<UserId, usize>,
    helpers: BTreeMap<HelperId, usize>,
}

impl Degrees {
    fn spare(&self, population: &Population, e: Edge) -> bool {
        self.users.get(&e.user).copied().unwrap_or(0) < population.users[&e.user].max_neighbors
            && self.helpers.get(&e.helper).copied().unwrap_or(0)
                < population.helpers[&e.helper].max_neighbors
    }

    fn bump(&mut self, e: Edge, up: bool) {
        for d in [
            self.users.entry(e.user).or_default(),
            self.helpers.entry(e.helper).or_default(),
        ] {
            if up {
                *d += 1;
            } else {
                *d -= 1;
            }
        }
    }
}

fn search(
    population: &Population,
    pairs: &[Edge],
    at: usize,
    chosen: &mut Vec<Edge>,
    degrees: &mut Degrees,
    found: &mut Vec<Vec<Edge>>,
) -> Result<()> {
    if at == pairs.len() {
        let maximal = pairs
            .iter()
            .all(|e| chosen.contains(e) || !degrees.spare(population, *e));
        if maximal {
            if found.len() == MAX_CONFIGS {
                return Err(Error::TooLarge(format!(
                    "more than {MAX_CONFIGS} configurations over {} candidate links",
                    pairs.len()
                )));
            }
            found.push(chosen.clone());
        }
        return Ok(());
    }
    let e = pairs[at];
    if degrees.spare(population, e) {
        chosen.push(e);
        degrees.bump(e, true);
        search(population, pairs, at + 1, chosen, degrees, found)?;
        degrees.bump(e, false);
        chosen.pop();
    }
    search(population, pairs, at + 1, chosen, degrees, found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    fn count_links(o: &Overlay) -> f64 {
        o.len() as f64
    }

    #[test]
    fn one_user_two_helpers() {
        let pop = Population::new(
            vec![user(1, 0, 1, &[])],
            vec![helper(1, 1.0, 1.0, 1), helper(2, 1.0, 1.0, 1)],
        )
        .unwrap();
        let space = enumerate_config_space(&pop, |o| Ok(count_links(o))).unwrap();
        assert_eq!(space.len(), 2);
        assert!(space.adjacent(0, 1) && space.adjacent(1, 0));
    }

    #[test]
    fn two_users_two_helpers() {
        let pop = Population::new(
            vec![user(1, 0, 1, &[]), user(2, 0, 1, &[])],
            vec![helper(1, 1.0, 1.0, 2), helper(2, 1.0, 1.0, 2)],
        )
        .unwrap();
        let space = enumerate_config_space(&pop, |o| Ok(count_links(o))).unwrap();
        assert_eq!(space.len(), 4);
        for t in &space.transitions {
            assert!(space.adjacent(t.to, t.from));
        }
    }

    #[test]
    fn restricted_candidates_shrink_space() {
        let pop = Population::new(
            vec![user(1, 0, 1, &[1]), user(2, 0, 1, &[])],
            vec![helper(1, 1.0, 1.0, 1), helper(2, 1.0, 1.0, 1)],
        )
        .unwrap();
        let space = enumerate_config_space(&pop, |o| Ok(count_links(o))).unwrap();
        // user 1 only takes helper 1; user 2 then has helper 2, or nothing if
        // user 1 sits out
        let sets: Vec<Vec<Edge>> = space
            .configurations
            .iter()
            .map(|c| c.edges().collect())
            .collect();
        assert!(sets.contains(&vec![
            Edge::new(HelperId(1), UserId(1)),
            Edge::new(HelperId(2), UserId(2))
        ]));
        for c in &space.configurations {
            assert!(validate_overlay(c, &pop).valid);
        }
    }

    #[test]
    fn too_many_pairs_refused() {
        let users = (1..=5).map(|u| user(u, 0, 1, &[])).collect();
        let helpers = (1..=5).map(|h| helper(h, 1.0, 1.0, 1)).collect();
        let pop = Population::new(users, helpers).unwrap();
        assert!(matches!(
            enumerate_config_space(&pop, |_| Ok(0.0)),
            Err(Error::TooLarge(_))
        ));
    }
}
