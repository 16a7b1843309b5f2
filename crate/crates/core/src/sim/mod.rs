//! Seeded discrete-event simulation of helpers and users running the
//! allocation and choking protocols with their own clocks, link delays,
//! churn, playback buffers and server top-up.

mod buffer;
mod event;
mod metrics;
mod outbox;
mod world;

pub use buffer::{UserBuffer, WindowRecord};
pub use event::{Event, EventKind, EventQueue, Message};
pub use metrics::{HelperRow, MetricsLog, MetricsRow, RunMeta};
pub use outbox::{Outbox, PACKET_KBIT};

use std::collections::BTreeMap;

use crate::error::Result;
use crate::harness::ScenarioConfig;
use crate::model::{HelperId, UserId, VideoId};

/// Independent random streams, so toggling one subsystem leaves the draws
/// of the others unchanged.
pub mod streams {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub const POPULATION: u64 = 0;
    pub const OVERLAY: u64 = 1;
    pub const DELAYS: u64 = 2;
    pub const CHOKES: u64 = 3;
    pub const CHURN: u64 = 4;
    pub const CLOCKS: u64 = 5;

    pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Validate the overlay and allocation state after every event.
    pub check_invariants: bool,
}

/// Who moved in a channel switch, and how many movers each helper serves.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    pub at_s: f64,
    pub moved: Vec<(UserId, VideoId, VideoId)>,
    pub exposure: BTreeMap<HelperId, usize>,
}

impl SwitchRecord {
    /// The helper serving the most movers, lowest id on ties.
    pub fn most_exposed(&self) -> Option<HelperId> {
        self.exposure
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(h, _)| *h)
    }
}

/// Full output of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub switches: Vec<SwitchRecord>,
}

/// Runs `scenario` to its horizon. Identical inputs give identical output.
pub fn run(scenario: &ScenarioConfig, seed: u64) -> Result<MetricsLog> {
    run_with(scenario, seed, RunOptions::default()).map(|o| o.log)
}

pub fn run_with(scenario: &ScenarioConfig, seed: u64, options: RunOptions) -> Result<RunOutput> {
    let world = world::World::new(scenario, seed, options)?;
    let (log, switches) = world.run(seed)?;
    Ok(RunOutput { log, switches })
}
