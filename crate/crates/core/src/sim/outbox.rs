use std::collections::BTreeMap;

use crate::model::UserId;

/// One kilobyte packet, in kbit.
pub const PACKET_KBIT: f64 = 8.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Lane {
    queued: f64,
    pace: f64,
    allowance: f64,
}

/// A helper's outgoing buffer. Each tick queues `x·T` kbit per user; every
/// second each lane may release up to its allocated rate, the total is held
/// to the upload capacity, and only whole packets leave.
#[derive(Debug, Clone, Default)]
pub struct Outbox {
    lanes: BTreeMap<UserId, Lane>,
}

impl Outbox {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues `rate·period` per user, trimmed pro rata so the buffer never
    /// holds more than `capacity_kbit`.
    pub fn enqueue(&mut self, allocations: &[(UserId, f64)], period_s: f64, capacity_kbit: f64) {
        let held = self.queued();
        let wanted: f64 = allocations.iter().map(|(_, r)| r * period_s).sum();
        let room = (capacity_kbit - held).max(0.0);
        let scale = if wanted > room { room / wanted } else { 1.0 };
        for &(user, rate) in allocations {
            let lane = self.lanes.entry(user).or_default();
            lane.queued += rate * period_s * scale;
            lane.pace = rate;
        }
    }

    /// Releases one second of traffic under `budget_kbit`. Returns whole
    /// packet amounts per user; remainders stay queued.
    pub fn drain(&mut self, budget_kbit: f64) -> Vec<(UserId, f64)> {
        for lane in self.lanes.values_mut() {
            lane.allowance = (lane.allowance + lane.pace).min(lane.queued);
        }
        let wanted: f64 = self.lanes.values().map(|l| l.allowance).sum();
        let scale = if wanted > budget_kbit {
            budget_kbit / wanted
        } else {
            1.0
        };
        let mut sent = Vec::new();
        for (&user, lane) in &mut self.lanes {
            let amount = (lane.allowance * scale / PACKET_KBIT).floor() * PACKET_KBIT;
            if amount > 0.0 {
                lane.queued -= amount;
                lane.allowance -= amount;
                sent.push((user, amount));
            }
        }
        sent
    }

    /// Drops everything queued for `user`.
    pub fn remove(&mut self, user: UserId) -> f64 {
        self.lanes.remove(&user).map_or(0.0, |l| l.queued)
    }

    pub fn queued(&self) -> f64 {
        self.lanes.values().map(|l| l.queued).sum()
    }

    pub fn queued_for(&self, user: UserId) -> f64 {
        self.lanes.get(&user).map_or(0.0, |l| l.queued)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paced_release_matches_allocation() {
        let mut o = Outbox::new();
        o.enqueue(&[(UserId(1), 80.0), (UserId(2), 16.0)], 3.0, 1e9);
        for _ in 0..3 {
            assert_eq!(o.drain(1e9), vec![(UserId(1), 80.0), (UserId(2), 16.0)]);
        }
        assert_eq!(o.queued(), 0.0);
        assert!(o.drain(1e9).is_empty());
    }

    #[test]
    fn egress_is_capped_and_excess_carries_over() {
        let mut o = Outbox::new();
        o.enqueue(&[(UserId(1), 300.0), (UserId(2), 100.0)], 1.0, 1e9);
        let sent = o.drain(200.0);
        let total: f64 = sent.iter().map(|s| s.1).sum();
        assert!(total <= 200.0);
        assert_eq!(sent, vec![(UserId(1), 144.0), (UserId(2), 48.0)]);
        assert_eq!(o.queued(), 400.0 - 192.0);
    }

    #[test]
    fn sub_packet_rates_accumulate() {
        let mut o = Outbox::new();
        o.enqueue(&[(UserId(1), 3.0)], 4.0, 1e9);
        let released: Vec<f64> = (0..4)
            .map(|_| o.drain(1e9).iter().map(|s| s.1).sum())
            .collect();
        assert_eq!(released, vec![0.0, 0.0, 8.0, 0.0]);
        assert_eq!(o.queued(), 4.0);
    }

    #[test]
    fn capacity_trims_new_allocation() {
        let mut o = Outbox::new();
        o.enqueue(&[(UserId(1), 100.0), (UserId(2), 100.0)], 2.0, 300.0);
        assert_eq!(o.queued(), 300.0);
        assert_eq!(o.queued_for(UserId(1)), 150.0);
        assert_eq!(o.remove(UserId(1)), 150.0);
        assert_eq!(o.queued(), 150.0);
    }
}
