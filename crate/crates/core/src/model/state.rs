use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Edge, HelperId, Overlay, Population, UserId, VideoCatalog, VideoId};
use crate::error::{Error, Result};

/// Per-edge rate and availability price.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeVars {
    pub x: f64,
    pub k: f64,
}

/// Per-helper prices and stored fractions (one entry per catalog video).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HelperVars {
    pub lambda: f64,
    pub mu: f64,
    pub f: Vec<f64>,
}

impl HelperVars {
    pub fn zero(videos: usize) -> Self {
        Self {
            lambda: 0.0,
            mu: 0.0,
            f: vec![0.0; videos],
        }
    }
}

/// Primal variables and dual prices for a fixed overlay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub edges: BTreeMap<Edge, EdgeVars>,
    pub helpers: BTreeMap<HelperId, HelperVars>,
}

impl AllocationState {
    /// All variables zero, keyed by the overlay's edges and every helper.
    pub fn zero(overlay: &Overlay, population: &Population, catalog: &VideoCatalog) -> Self {
        Self {
            edges: overlay.edges().map(|e| (e, EdgeVars::default())).collect(),
            helpers: population
                .helpers
                .keys()
                .map(|&h| (h, HelperVars::zero(catalog.len())))
                .collect(),
        }
    }

    pub fn x(&self, edge: Edge) -> f64 {
        self.edges.get(&edge).map_or(0.0, |v| v.x)
    }

    pub fn k(&self, edge: Edge) -> f64 {
        self.edges.get(&edge).map_or(0.0, |v| v.k)
    }

    pub fn f(&self, helper: HelperId, video: VideoId) -> f64 {
        self.helpers
            .get(&helper)
            .and_then(|h| h.f.get(video.0))
            .copied()
            .unwrap_or(0.0)
    }

    /// Σ x over the helper's edges.
    pub fn helper_rate(&self, helper: HelperId) -> f64 {
        self.edges
            .range(Edge::new(helper, UserId(0))..=Edge::new(helper, UserId(u32::MAX)))
            .map(|(_, v)| v.x)
            .sum()
    }

    /// Σ x into a user from its active helpers.
    pub fn user_rate(&self, user: UserId, overlay: &Overlay) -> f64 {
        overlay
            .helpers_of(user)
            .map(|h| self.x(Edge::new(h, user)))
            .sum()
    }

    /// Σ_m f_jm·V_m in kbit.
    pub fn helper_storage(&self, helper: HelperId, catalog: &VideoCatalog) -> f64 {
        self.helpers.get(&helper).map_or(0.0, |h| {
            h.f.iter()
                .zip(catalog.videos())
                .map(|(f, v)| f * v.size_kbit)
                .sum()
        })
    }

    /// Adds zeroed entries for a new edge. No-op if present.
    pub fn add_edge(&mut self, edge: Edge) {
        self.edges.entry(edge).or_default();
    }

    pub fn remove_edge(&mut self, edge: Edge) {
        self.edges.remove(&edge);
    }

    pub fn add_helper(&mut self, helper: HelperId, videos: usize) {
        self.helpers
            .entry(helper)
            .or_insert_with(|| HelperVars::zero(videos));
    }

    pub fn remove_helper(&mut self, helper: HelperId) {
        self.helpers.remove(&helper);
        self.edges.retain(|e, _| e.helper != helper);
    }

    pub fn remove_user(&mut self, user: UserId) {
        self.edges.retain(|e, _| e.user != user);
    }

    /// Checks that edge entries match the overlay exactly and that every
    /// helper has an f row of catalog length.
    pub fn check_consistency(
        &self,
        overlay: &Overlay,
        population: &Population,
        catalog: &VideoCatalog,
    ) -> Result<()> {
        if self.edges.len() != overlay.len()
            || !overlay.edges().all(|e| self.edges.contains_key(&e))
        {
            return Err(Error::Structural(
                "edge variables do not match the overlay".into(),
            ));
        }
        for e in overlay.edges() {
            if !population.users.contains_key(&e.user) {
                return Err(Error::Structural(format!("edge {e} names an absent user")));
            }
            if !self.helpers.contains_key(&e.helper) {
                return Err(Error::Structural(format!(
                    "edge {e} names a helper without variables"
                )));
            }
        }
        for id in population.helpers.keys() {
            match self.helpers.get(id) {
                Some(h) if h.f.len() == catalog.len() => {}
                Some(_) => {
                    return Err(Error::Structural(format!(
                        "{id} has an f row of the wrong length"
                    )))
                }
                None => return Err(Error::Structural(format!("{id} has no variables"))),
            }
        }
        if self.helpers.len() != population.helpers.len() {
            return Err(Error::Structural(
                "variables for a helper not in the population".into(),
            ));
        }
        Ok(())
    }

    /// True when x, k, λ, μ ≥ 0 and 0 ≤ f ≤ 1, all finite.
    pub fn within_bounds(&self) -> bool {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        self.edges.values().all(|v| nonneg(v.x) && nonneg(v.k))
            && self.helpers.values().all(|h| {
                nonneg(h.lambda)
                    && nonneg(h.mu)
                    && h.f
                        .iter()
                        .all(|&f| f.is_finite() && (0.0..=1.0).contains(&f))
            })
    }

    /// Same keys on both sides.
    pub fn same_keys(&self, other: &Self) -> bool {
        self.edges.keys().eq(other.edges.keys())
            && self.helpers.len() == other.helpers.len()
            && self
                .helpers
                .iter()
                .zip(&other.helpers)
                .all(|((a, ha), (b, hb))| a == b && ha.f.len() == hb.f.len())
    }
}

/// Σ over users of min(received rate, streaming rate).
pub fn effective_contribution(
    overlay: &Overlay,
    state: &AllocationState,
    catalog: &VideoCatalog,
    population: &Population,
) -> f64 {
    population
        .users
        .values()
        .map(|u| state.user_rate(u.id, overlay).min(catalog.rate(u.video)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    fn setup(n_helpers: u32) -> (VideoCatalog, Population, Overlay) {
        let catalog = VideoCatalog::from_rates(&[(400.0, 3600.0)]).unwrap();
        let helpers = (1..=n_helpers).map(|h| helper(h, 300.0, 1e9, 2)).collect();
        let pop = Population::new(vec![user(1, 0, 2, &[])], helpers).unwrap();
        let overlay =
            Overlay::from_edges((1..=n_helpers).map(|h| Edge::new(HelperId(h), UserId(1))));
        (catalog, pop, overlay)
    }

    #[test]
    fn zero_state_contributes_nothing() {
        let (c, p, o) = setup(2);
        let s = AllocationState::zero(&o, &p, &c);
        assert_eq!(effective_contribution(&o, &s, &c, &p), 0.0);
        s.check_consistency(&o, &p, &c).unwrap();
        assert!(s.within_bounds());
    }

    #[test]
    fn contribution_caps_at_rate() {
        let (c, p, o) = setup(2);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.edges
            .get_mut(&Edge::new(HelperId(1), UserId(1)))
            .unwrap()
            .x = 250.0;
        s.edges
            .get_mut(&Edge::new(HelperId(2), UserId(1)))
            .unwrap()
            .x = 250.0;
        assert_eq!(effective_contribution(&o, &s, &c, &p), 400.0);
    }

    #[test]
    fn contribution_below_cap_sums() {
        let (c, p, o) = setup(2);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.edges
            .get_mut(&Edge::new(HelperId(1), UserId(1)))
            .unwrap()
            .x = 100.0;
        s.edges
            .get_mut(&Edge::new(HelperId(2), UserId(1)))
            .unwrap()
            .x = 150.0;
        assert_eq!(effective_contribution(&o, &s, &c, &p), 250.0);
        assert_eq!(s.helper_rate(HelperId(2)), 150.0);
    }

    #[test]
    fn stale_edge_is_structural_error() {
        let (c, p, o) = setup(2);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.add_edge(Edge::new(HelperId(1), UserId(7)));
        assert!(matches!(
            s.check_consistency(&o, &p, &c),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn bounds_detect_negative_price() {
        let (c, p, o) = setup(1);
        let mut s = AllocationState::zero(&o, &p, &c);
        s.helpers.get_mut(&HelperId(1)).unwrap().lambda = -1e-12;
        assert!(!s.within_bounds());
    }
}
