use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Edge, HelperId, Population, UserId, VideoId};

/// The helper/user configuration: a set of edges with both adjacency views.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlay {
    edges: BTreeSet<Edge>,
    #[serde(skip)]
    by_user: BTreeMap<UserId, BTreeSet<HelperId>>,
    #[serde(skip)]
    by_helper: BTreeMap<HelperId, BTreeSet<UserId>>,
}

impl Overlay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges(edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut o = Self::new();
        for e in edges {
            o.insert(e);
        }
        o
    }

    /// Returns false if the edge was already present.
    pub fn insert(&mut self, edge: Edge) -> bool {
        if !self.edges.insert(edge) {
            return false;
        }
        self.by_user
            .entry(edge.user)
            .or_default()
            .insert(edge.helper);
        self.by_helper
            .entry(edge.helper)
            .or_default()
            .insert(edge.user);
        true
    }

    pub fn remove(&mut self, edge: Edge) -> bool {
        if !self.edges.remove(&edge) {
            return false;
        }
        if let Some(set) = self.by_user.get_mut(&edge.user) {
            set.remove(&edge.helper);
            if set.is_empty() {
                self.by_user.remove(&edge.user);
            }
        }
        if let Some(set) = self.by_helper.get_mut(&edge.helper) {
            set.remove(&edge.user);
            if set.is_empty() {
                self.by_helper.remove(&edge.helper);
            }
        }
        true
    }

    /// Removes every edge touching the user and returns them.
    pub fn remove_user(&mut self, user: UserId) -> Vec<Edge> {
        let edges: Vec<Edge> = self.helpers_of(user).map(|h| Edge::new(h, user)).collect();
        for &e in &edges {
            self.remove(e);
        }
        edges
    }

    pub fn remove_helper(&mut self, helper: HelperId) -> Vec<Edge> {
        let edges: Vec<Edge> = self
            .users_of(helper)
            .map(|u| Edge::new(helper, u))
            .collect();
        for &e in &edges {
            self.remove(e);
        }
        edges
    }

    pub fn contains(&self, edge: Edge) -> bool {
        self.edges.contains(&edge)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_set(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Active helpers of a user.
    pub fn helpers_of(&self, user: UserId) -> impl Iterator<Item = HelperId> + '_ {
        self.by_user.get(&user).into_iter().flatten().copied()
    }

    /// Active users of a helper, across all videos.
    pub fn users_of(&self, helper: HelperId) -> impl Iterator<Item = UserId> + '_ {
        self.by_helper.get(&helper).into_iter().flatten().copied()
    }

    pub fn user_degree(&self, user: UserId) -> usize {
        self.by_user.get(&user).map_or(0, BTreeSet::len)
    }

    pub fn helper_degree(&self, helper: HelperId) -> usize {
        self.by_helper.get(&helper).map_or(0, BTreeSet::len)
    }

    /// Active users of `helper` watching `video`.
    pub fn users_of_video<'a>(
        &'a self,
        helper: HelperId,
        video: VideoId,
        population: &'a Population,
    ) -> impl Iterator<Item = UserId> + 'a {
        self.users_of(helper)
            .filter(move |u| population.users.get(u).is_some_and(|n| n.video == video))
    }

    /// Rebuilds the adjacency maps after deserialization.
    pub fn reindex(&mut self) {
        let edges = std::mem::take(&mut self.edges);
        *self = Self::from_edges(edges);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Helper,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnknownUser(Edge),
    UnknownHelper(Edge),
    /// `side` does not list the other endpoint as a candidate.
    NotCandidate {
        edge: Edge,
        side: Side,
    },
    UserDegree {
        user: UserId,
        degree: usize,
        cap: usize,
    },
    HelperDegree {
        helper: HelperId,
        degree: usize,
        cap: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlayReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

/// Checks endpoint existence, mutual candidacy and both degree caps.
pub fn validate_overlay(overlay: &Overlay, population: &Population) -> OverlayReport {
    let mut violations = Vec::new();
    for edge in overlay.edges() {
        let user = population.users.get(&edge.user);
        let helper = population.helpers.get(&edge.helper);
        if user.is_none() {
            violations.push(Violation::UnknownUser(edge));
        }
        if helper.is_none() {
            violations.push(Violation::UnknownHelper(edge));
        }
        if let Some(u) = user {
            if !u.candidates.contains(&edge.helper) {
                violations.push(Violation::NotCandidate {
                    edge,
                    side: Side::User,
                });
            }
        }
        if let Some(h) = helper {
            if !h.candidates.contains(&edge.user) {
                violations.push(Violation::NotCandidate {
                    edge,
                    side: Side::Helper,
                });
            }
        }
    }
    for (id, u) in &population.users {
        let degree = overlay.user_degree(*id);
        if degree > u.max_neighbors {
            violations.push(Violation::UserDegree {
                user: *id,
                degree,
                cap: u.max_neighbors,
            });
        }
    }
    for (id, h) in &population.helpers {
        let degree = overlay.helper_degree(*id);
        if degree > h.max_neighbors {
            violations.push(Violation::HelperDegree {
                helper: *id,
                degree,
                cap: h.max_neighbors,
            });
        }
    }
    OverlayReport {
        valid: violations.is_empty(),
        violations,
    }
}
