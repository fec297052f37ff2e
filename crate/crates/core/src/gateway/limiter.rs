use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{GatewayError, Limits};

/// Global in-flight cap plus a request-start spacing of `60s / rpm`.
pub struct Limiter {
    max_in_flight: usize,
    interval: Option<Duration>,
    state: Mutex<State>,
    released: Condvar,
}

struct State {
    in_flight: usize,
    next_slot: Option<Instant>,
}

/// Held for the duration of one transport attempt.
pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(limits: &Limits) -> Result<Self, GatewayError> {
        if limits.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be at least 1".into()));
        }
        let interval = match limits.requests_per_minute {
            Some(0) => return Err(GatewayError::Config("requests_per_minute must be positive".into())),
            Some(rpm) => Some(Duration::from_secs_f64(60.0 / f64::from(rpm))),
            None => None,
        };
        Ok(Self {
            max_in_flight: limits.max_in_flight,
            interval,
            state: Mutex::new(State { in_flight: 0, next_slot: None }),
            released: Condvar::new(),
        })
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn acquire(&self) -> Permit<'_> {
        let start_at = {
            let mut state = self.state.lock().expect("limiter poisoned");
            while state.in_flight >= self.max_in_flight {
                state = self.released.wait(state).expect("limiter poisoned");
            }
            state.in_flight += 1;
            self.interval.map(|interval| {
                let now = Instant::now();
                let slot = state.next_slot.map_or(now, |s| s.max(now));
                state.next_slot = Some(slot + interval);
                slot
            })
        };
        if let Some(at) = start_at {
            let now = Instant::now();
            if at > now {
                std::thread::sleep(at - now);
            }
        }
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().expect("limiter poisoned");
        state.in_flight -= 1;
        self.limiter.released.notify_one();
    }
}
