use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateLimit {
    /// Upper bound on concurrent backend calls.
    pub max_in_flight: usize,
    /// Minimum gap between the starts of two consecutive calls.
    pub min_interval_ms: u64,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            min_interval_ms: 0,
        }
    }
}

#[derive(Debug, Default)]
struct State {
    in_flight: usize,
    peak: usize,
    last_start: Option<Instant>,
}

/// Counting gate shared by every thread that talks to one backend.
#[derive(Debug)]
pub struct RateLimiter {
    limit: RateLimit,
    state: Mutex<State>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a RateLimiter,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().unwrap_or_else(|e| e.into_inner());
        state.in_flight -= 1;
        drop(state);
        self.limiter.freed.notify_one();
    }
}

impl RateLimiter {
    pub fn new(limit: RateLimit) -> Self {
        Self {
            limit: RateLimit {
                max_in_flight: limit.max_in_flight.max(1),
                ..limit
            },
            state: Mutex::new(State::default()),
            freed: Condvar::new(),
        }
    }

    pub fn max_in_flight(&self) -> usize {
        self.limit.max_in_flight
    }

    /// Blocks until a slot is free and the minimum interval has passed.
    pub fn acquire(&self) -> Permit<'_> {
        let gap = Duration::from_millis(self.limit.min_interval_ms);
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        loop {
            if state.in_flight < self.limit.max_in_flight {
                let wait = state
                    .last_start
                    .map(|t| gap.saturating_sub(t.elapsed()))
                    .unwrap_or_default();
                if wait.is_zero() {
                    break;
                }
                state = self
                    .freed
                    .wait_timeout(state, wait)
                    .unwrap_or_else(|e| e.into_inner())
                    .0;
            } else {
                state = self.freed.wait(state).unwrap_or_else(|e| e.into_inner());
            }
        }
        state.in_flight += 1;
        state.peak = state.peak.max(state.in_flight);
        state.last_start = Some(Instant::now());
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).in_flight
    }

    /// Highest concurrent permit count observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).peak
    }
}
