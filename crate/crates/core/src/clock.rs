use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::belief::Timestamp;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;

    /// Make every later `now` strictly greater than `t`. Wall clocks ignore it.
    fn catch_up(&self, _t: Timestamp) {}
}

/// Wall-clock milliseconds since the Unix epoch.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Monotone counter; every call to `now` advances by one tick. Used wherever
/// outputs must be byte-reproducible.
#[derive(Debug, Default)]
pub struct LogicalClock {
    next: AtomicU64,
}

impl LogicalClock {
    pub fn starting_at(t: Timestamp) -> Self {
        Self { next: AtomicU64::new(t) }
    }

    pub fn peek(&self) -> Timestamp {
        self.next.load(Ordering::SeqCst)
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> Timestamp {
        self.next.fetch_add(1, Ordering::SeqCst)
    }

    fn catch_up(&self, t: Timestamp) {
        self.next.fetch_max(t.saturating_add(1), Ordering::SeqCst);
    }
}
