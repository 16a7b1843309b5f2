//! Domain types shared by the allocator, topology and simulator.
//!
//! Rates are kbps, sizes are kilobits, times are seconds.

mod overlay;
mod state;

pub use overlay::{validate_overlay, Overlay, OverlayReport, Side, Violation};
pub use state::{effective_contribution, AllocationState, EdgeVars, HelperVars};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kilobits per megabyte, used once when ingesting storage sizes.
pub const KBIT_PER_MB: f64 = 8192.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HelperId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u32);

/// Zero-based index into a [`VideoCatalog`]. Displayed one-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VideoId(pub usize);

impl fmt::Display for HelperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for VideoId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0 + 1)
    }
}

/// A helper/user link. Ordering is (helper, user), which fixes iteration order
/// everywhere edges are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub helper: HelperId,
    pub user: UserId,
}

impl Edge {
    pub fn new(helper: HelperId, user: UserId) -> Self {
        Self { helper, user }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.helper, self.user)
    }
}

/// Either endpoint of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PeerRef {
    User(UserId),
    Helper(HelperId),
}

impl fmt::Display for PeerRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeerRef::User(u) => u.fmt(f),
            PeerRef::Helper(h) => h.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSpec {
    pub rate_kbps: f64,
    pub duration_s: f64,
    pub size_kbit: f64,
}

impl VideoSpec {
    pub fn new(rate_kbps: f64, duration_s: f64) -> Result<Self> {
        if !(rate_kbps > 0.0 && rate_kbps.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "video rate must be positive, got {rate_kbps}"
            )));
        }
        if !(duration_s > 0.0 && duration_s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "video duration must be positive, got {duration_s}"
            )));
        }
        Ok(Self {
            rate_kbps,
            duration_s,
            size_kbit: rate_kbps * duration_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VideoCatalog {
    videos: Vec<VideoSpec>,
}

impl VideoCatalog {
    pub fn new(videos: Vec<VideoSpec>) -> Self {
        Self { videos }
    }

    /// Builds a catalog from (rate, duration) pairs.
    pub fn from_rates(specs: &[(f64, f64)]) -> Result<Self> {
        specs
            .iter()
            .map(|&(r, l)| VideoSpec::new(r, l))
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn get(&self, id: VideoId) -> Option<&VideoSpec> {
        self.videos.get(id.0)
    }

    pub fn rate(&self, id: VideoId) -> f64 {
        self.videos[id.0].rate_kbps
    }

    pub fn duration(&self, id: VideoId) -> f64 {
        self.videos[id.0].duration_s
    }

    pub fn size(&self, id: VideoId) -> f64 {
        self.videos[id.0].size_kbit
    }

    pub fn ids(&self) -> impl Iterator<Item = VideoId> {
        (0..self.videos.len()).map(VideoId)
    }

    pub fn videos(&self) -> &[VideoSpec] {
        &self.videos
    }
}

/// A peer's candidate neighborhood.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Candidates<T: Ord> {
    /// Every peer of the opposite role currently in the system.
    All,
    Only(BTreeSet<T>),
}

impl<T: Ord> Candidates<T> {
    pub fn contains(&self, id: &T) -> bool {
        match self {
            Candidates::All => true,
            Candidates::Only(set) => set.contains(id),
        }
    }

    /// Candidate count given how many opposite-role peers are present.
    pub fn count(&self, opposite_population: usize) -> usize {
        match self {
            Candidates::All => opposite_population,
            Candidates::Only(set) => set.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserNode {
    pub id: UserId,
    pub video: VideoId,
    pub max_neighbors: usize,
    pub candidates: Candidates<HelperId>,
    pub update_period_s: f64,
    pub buffer_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelperNode {
    pub id: HelperId,
    pub upload_kbps: f64,
    pub storage_kbit: f64,
    pub max_neighbors: usize,
    pub candidates: Candidates<UserId>,
    pub update_period_s: f64,
}

/// The set of users and helpers, keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub users: BTreeMap<UserId, UserNode>,
    pub helpers: BTreeMap<HelperId, HelperNode>,
}

impl Population {
    pub fn new(users: Vec<UserNode>, helpers: Vec<HelperNode>) -> Result<Self> {
        let mut pop = Population::default();
        for u in users {
            if pop.users.insert(u.id, u).is_some() {
                return Err(Error::InvalidArgument("duplicate user id".into()));
            }
        }
        for h in helpers {
            if pop.helpers.insert(h.id, h).is_some() {
                return Err(Error::InvalidArgument("duplicate helper id".into()));
            }
        }
        Ok(pop)
    }

    /// Mutual candidacy: both endpoints list each other.
    pub fn are_candidates(&self, edge: Edge) -> bool {
        match (self.users.get(&edge.user), self.helpers.get(&edge.helper)) {
            (Some(u), Some(h)) => {
                u.candidates.contains(&edge.helper) && h.candidates.contains(&edge.user)
            }
            _ => false,
        }
    }

    /// Checks per-peer invariants that do not depend on the overlay.
    pub fn check(&self, segment_s: f64) -> Result<()> {
        for u in self.users.values() {
            if u.max_neighbors == 0 {
                return Err(Error::InvalidArgument(format!(
                    "{} has max_neighbors 0",
                    u.id
                )));
            }
            if u.candidates.count(self.helpers.len()) < u.max_neighbors {
                if let Candidates::Only(_) = u.candidates {
                    return Err(Error::InvalidArgument(format!(
                        "{} has fewer candidates than max_neighbors",
                        u.id
                    )));
                }
            }
            let segments = u.buffer_time_s / segment_s;
            if !(u.buffer_time_s > 0.0 && (segments - segments.round()).abs() < 1e-9) {
                return Err(Error::InvalidArgument(format!(
                    "{} buffer time {} is not a positive multiple of the {} s segment",
                    u.id, u.buffer_time_s, segment_s
                )));
            }
            if !(u.update_period_s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{} has non-positive update period",
                    u.id
                )));
            }
        }
        for h in self.helpers.values() {
            if !(h.upload_kbps > 0.0 && h.storage_kbit > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{} needs positive capacities",
                    h.id
                )));
            }
            if h.max_neighbors == 0 {
                return Err(Error::InvalidArgument(format!(
                    "{} has max_neighbors 0",
                    h.id
                )));
            }
            if !(h.update_period_s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "{} has non-positive update period",
                    h.id
                )));
            }
        }
        Ok(())
    }

    /// Total streaming demand of present users.
    pub fn demand(&self, catalog: &VideoCatalog) -> f64 {
        self.users.values().map(|u| catalog.rate(u.video)).sum()
    }

    pub fn supply(&self) -> f64 {
        self.helpers.values().map(|h| h.upload_kbps).sum()
    }
}

/// Total user demand minus total helper upload capacity.
///
/// Negative when helpers could cover every stream; when non-negative it is the
/// lower bound on server load.
pub fn intrinsic_deficit(catalog: &VideoCatalog, population: &Population) -> f64 {
    population.demand(catalog) - population.supply()
}
