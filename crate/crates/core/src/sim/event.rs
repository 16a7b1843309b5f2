use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::model::{Edge, HelperId, PeerRef, UserId};

/// In-flight payloads between a user and a helper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message {
    /// User → helper: marginal utility and the rate the user measured.
    Report { edge: Edge, g: f64, measured_x: f64 },
    /// Helper → user: a batch of whole packets.
    Packets { edge: Edge, kbit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Departure(PeerRef),
    Arrival,
    ChannelSwitch(usize),
    MessageDelivery(Message),
    UserRateUpdate(UserId),
    HelperTick(HelperId),
    HelperSend(HelperId),
    UserBufferRefill { user: UserId, epoch: u64 },
    Choke { peer: PeerRef, epoch: u64 },
    Sample,
}

impl EventKind {
    /// Tie-break among events at the same instant; lower runs first.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::Departure(_) => 0,
            EventKind::Arrival => 1,
            EventKind::ChannelSwitch(_) => 2,
            EventKind::MessageDelivery(_) => 3,
            EventKind::UserRateUpdate(_) => 4,
            EventKind::HelperTick(_) => 5,
            EventKind::HelperSend(_) => 6,
            EventKind::UserBufferRefill { .. } => 7,
            EventKind::Choke { .. } => 8,
            EventKind::Sample => 9,
        }
    }

    /// Stable tag for trace hashing.
    pub fn tag(&self) -> u8 {
        self.priority()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time_s: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time_s, self.kind.priority(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed so the max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, pa, sa) = self.key();
        let (tb, pb, sb) = other.key();
        tb.total_cmp(&ta).then(pb.cmp(&pa)).then(sb.cmp(&sa))
    }
}

/// Min-queue on (time, priority, insertion order).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `kind` at `time_s`, clamped to the current clock.
    pub fn push(&mut self, time_s: f64, kind: EventKind) {
        debug_assert!(time_s.is_finite());
        let time_s = time_s.max(self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time_s, seq, kind });
    }

    /// Pops the next event at or before `until`.
    pub fn pop_until(&mut self, until: f64) -> Option<Event> {
        if self.heap.peek()?.time_s > until {
            return None;
        }
        let e = self.heap.pop()?;
        self.now = e.time_s;
        Some(e)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
