use serde::{Deserialize, Serialize};

use crate::model::UserId;

/// Service split of one completed playback window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub user: UserId,
    pub start_s: f64,
    pub size_kbit: f64,
    pub delivered_kbit: f64,
    pub topup_kbit: f64,
}

/// A user's playback buffer. The current window is fully provisioned;
/// helper packets credit the segments of the next window in order, and at
/// the boundary the server fills whatever is still missing.
#[derive(Debug, Clone)]
pub struct UserBuffer {
    rate_kbps: f64,
    buffer_time_s: f64,
    segment_kbit: f64,
    window_start_s: f64,
    next: Vec<f64>,
    current_topup_kbit: f64,
    overflow_kbit: f64,
    epoch: u64,
}

impl UserBuffer {
    /// Starts playback at `now` with the first window fetched from the
    /// server. Returns the buffer and that window's record.
    pub fn start(
        user: UserId,
        now: f64,
        rate_kbps: f64,
        buffer_time_s: f64,
        segment_s: f64,
    ) -> (Self, WindowRecord) {
        let segments = (buffer_time_s / segment_s).round().max(1.0) as usize;
        let size = rate_kbps * buffer_time_s;
        let buffer = Self {
            rate_kbps,
            buffer_time_s,
            segment_kbit: size / segments as f64,
            window_start_s: now,
            next: vec![0.0; segments],
            current_topup_kbit: size,
            overflow_kbit: 0.0,
            epoch: 0,
        };
        let record = WindowRecord {
            user,
            start_s: now,
            size_kbit: size,
            delivered_kbit: 0.0,
            topup_kbit: size,
        };
        (buffer, record)
    }

    /// Restarts playback of a different stream, keeping the epoch counter
    /// moving so stale refill timers can be recognised.
    pub fn restart(
        &mut self,
        user: UserId,
        now: f64,
        rate_kbps: f64,
        segment_s: f64,
    ) -> WindowRecord {
        let epoch = self.epoch + 1;
        let overflow = self.overflow_kbit;
        let (mut fresh, record) = Self::start(user, now, rate_kbps, self.buffer_time_s, segment_s);
        fresh.epoch = epoch;
        fresh.overflow_kbit = overflow;
        *self = fresh;
        record
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn window_end(&self) -> f64 {
        self.window_start_s + self.buffer_time_s
    }

    pub fn window_size(&self) -> f64 {
        self.rate_kbps * self.buffer_time_s
    }

    /// Credits helper packets to the earliest unfulfilled segments of the
    /// next window. Anything past the end of that window is discarded.
    pub fn credit(&mut self, kbit: f64) {
        let mut left = kbit;
        for seg in &mut self.next {
            if left <= 0.0 {
                break;
            }
            let take = (self.segment_kbit - *seg).min(left).max(0.0);
            *seg += take;
            left -= take;
        }
        if left > 0.0 {
            self.overflow_kbit += left;
        }
    }

    /// Moves playback into the next window and fetches its gaps from the
    /// server.
    pub fn refill(&mut self, user: UserId, now: f64) -> WindowRecord {
        let size = self.window_size();
        let delivered: f64 = self.next.iter().sum::<f64>().min(size);
        let topup = (size - delivered).max(0.0);
        self.next.iter_mut().for_each(|s| *s = 0.0);
        self.window_start_s = now;
        self.current_topup_kbit = topup;
        WindowRecord {
            user,
            start_s: now,
            size_kbit: size,
            delivered_kbit: delivered,
            topup_kbit: topup,
        }
    }

    /// Server top-up of the playing window spread over its duration.
    pub fn server_rate(&self) -> f64 {
        self.current_topup_kbit / self.buffer_time_s
    }

    pub fn pending_credit(&self) -> f64 {
        self.next.iter().sum()
    }

    /// Helper packets that arrived with nowhere to go.
    pub fn overflow(&self) -> f64 {
        self.overflow_kbit
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fresh() -> UserBuffer {
        UserBuffer::start(UserId(1), 0.0, 400.0, 30.0, 10.0).0
    }

    #[test]
    fn first_window_comes_from_server() {
        let (b, rec) = UserBuffer::start(UserId(1), 0.0, 400.0, 30.0, 10.0);
        assert_eq!(rec.topup_kbit, 12_000.0);
        assert_eq!(b.server_rate(), 400.0);
    }

    #[test]
    fn full_delivery_needs_no_server() {
        let mut b = fresh();
        b.credit(12_000.0);
        let rec = b.refill(UserId(1), 30.0);
        assert_eq!(rec.topup_kbit, 0.0);
        assert_eq!(b.server_rate(), 0.0);
    }

    #[test]
    fn nothing_delivered_fetches_whole_window() {
        let mut b = fresh();
        assert_eq!(b.refill(UserId(1), 30.0).topup_kbit, 12_000.0);
    }

    #[test]
    fn half_delivered_fetches_half() {
        let mut b = fresh();
        for _ in 0..30 {
            b.credit(200.0);
        }
        let rec = b.refill(UserId(1), 30.0);
        assert_eq!(rec.topup_kbit, 6_000.0);
        assert_eq!(rec.delivered_kbit + rec.topup_kbit, rec.size_kbit);
    }

    #[test]
    fn segments_fill_in_order_and_cap() {
        let mut b = fresh();
        b.credit(5_000.0);
        assert_eq!(b.next, vec![4_000.0, 1_000.0, 0.0]);
        b.credit(10_000.0);
        assert_eq!(b.next, vec![4_000.0; 3]);
        assert_eq!(b.overflow(), 3_000.0);
    }

    #[test]
    fn restart_bumps_epoch() {
        let mut b = fresh();
        b.credit(1_000.0);
        let rec = b.restart(UserId(1), 12.0, 800.0, 10.0);
        assert_eq!(b.epoch(), 1);
        assert_eq!(rec.topup_kbit, 24_000.0);
        assert_eq!(b.pending_credit(), 0.0);
        assert_eq!(b.window_end(), 42.0);
    }
}
