//! Fault-injection wrapper for exercising retry and resume paths.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use super::{Attempt, ChatRequest, GatewayError, Transport};

/// Wraps a transport and injects failures by request key or call count.
#[derive(Default)]
pub struct FaultPlan {
    /// Keys whose first `n` attempts fail with a transient error.
    pub flaky: HashMap<String, usize>,
    /// Keys that always fail with a transient error.
    pub dead: HashSet<String>,
    /// Keys answered with a content-filter hit.
    pub filtered: HashSet<String>,
    /// Abort with [`GatewayError::Interrupted`] on this global attempt (1-based),
    /// simulating a crash of the surveying process.
    pub crash_on_attempt: Option<usize>,
}

pub struct FaultyTransport {
    inner: Arc<dyn Transport>,
    plan: FaultPlan,
    attempts: AtomicUsize,
    per_key: Mutex<HashMap<String, usize>>,
    delivered: Mutex<HashMap<String, usize>>,
}

impl FaultyTransport {
    pub fn new(inner: Arc<dyn Transport>, plan: FaultPlan) -> Self {
        Self {
            inner,
            plan,
            attempts: AtomicUsize::new(0),
            per_key: Mutex::new(HashMap::new()),
            delivered: Mutex::new(HashMap::new()),
        }
    }

    /// Attempts seen, including injected failures.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    /// Attempts per request key.
    pub fn attempts_by_key(&self) -> HashMap<String, usize> {
        self.per_key.lock().expect("fault counters poisoned").clone()
    }

    /// Keys that reached the wrapped transport, with call counts.
    pub fn delivered(&self) -> HashMap<String, usize> {
        self.delivered.lock().expect("fault counters poisoned").clone()
    }
}

impl Transport for FaultyTransport {
    fn send(&self, request: &ChatRequest) -> Result<Attempt, GatewayError> {
        let n = self.attempts.fetch_add(1, Ordering::SeqCst) + 1;
        if self.plan.crash_on_attempt == Some(n) {
            return Err(GatewayError::Interrupted(format!("injected crash at attempt {n}")));
        }
        let key = &request.request_key;
        let seen = {
            let mut per_key = self.per_key.lock().expect("fault counters poisoned");
            let count = per_key.entry(key.clone()).or_insert(0);
            *count += 1;
            *count
        };
        if self.plan.dead.contains(key) {
            return Ok(Attempt::Transient(format!("injected outage for {key}")));
        }
        if self.plan.flaky.get(key).is_some_and(|&fails| seen <= fails) {
            return Ok(Attempt::Transient(format!("injected timeout {seen} for {key}")));
        }
        if self.plan.filtered.contains(key) {
            return Ok(Attempt::ContentFiltered);
        }
        *self.delivered.lock().expect("fault counters poisoned").entry(key.clone()).or_insert(0) += 1;
        self.inner.send(request)
    }
}
