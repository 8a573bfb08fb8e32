//! Time sources for budgets and latency accounting.
//!
//! Live runs use [`WallClock`]. Simulator runs with a scripted gateway use
//! [`VirtualClock`], which only moves when the engine charges it a fixed cost
//! per model call or device command, so traces and budgets are reproducible
//! byte for byte.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time since the clock was created.
    fn elapsed(&self) -> Duration;

    /// Charges simulated time. Wall clocks ignore this.
    fn advance(&self, by: Duration);
}

#[derive(Debug)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock { start: Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    fn advance(&self, _by: Duration) {}
}

#[derive(Debug, Default)]
pub struct VirtualClock {
    nanos: AtomicU64,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for VirtualClock {
    fn elapsed(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn advance(&self, by: Duration) {
        self.nanos.fetch_add(by.as_nanos() as u64, Ordering::SeqCst);
    }
}

/// Fixed simulated costs charged against a [`VirtualClock`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedCosts {
    pub llm_call: Duration,
    pub device_command: Duration,
}

impl Default for SimulatedCosts {
    fn default() -> Self {
        SimulatedCosts { llm_call: Duration::from_millis(500), device_command: Duration::from_millis(100) }
    }
}
