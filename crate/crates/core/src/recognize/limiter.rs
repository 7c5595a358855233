//! Process-wide request pacing: a sliding-window rate cap and a concurrency gate.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Monotonic time since an arbitrary origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Manually advanced clock; `sleep` moves time forward instantly.
#[derive(Debug, Default)]
pub struct VirtualClock {
    nanos: AtomicU64,
}

impl VirtualClock {
    pub fn advance(&self, d: Duration) {
        self.nanos.fetch_add(d.as_nanos() as u64, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        Duration::from_nanos(self.nanos.load(Ordering::SeqCst))
    }

    fn sleep(&self, d: Duration) {
        self.advance(d);
    }
}

/// At most `limit` acquisitions inside any window of `window` length.
///
/// Keeps the timestamps of the last `limit` grants; a caller blocks until the
/// oldest one leaves the window. Waiters are served one at a time.
pub struct RateLimiter {
    limit: usize,
    window: Duration,
    grants: Mutex<VecDeque<Duration>>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32, clock: Arc<dyn Clock>) -> Self {
        Self::new(limit as usize, Duration::from_secs(60), clock)
    }

    /// `limit == 0` disables the cap.
    pub fn new(limit: usize, window: Duration, clock: Arc<dyn Clock>) -> Self {
        Self {
            limit,
            window,
            grants: Mutex::new(VecDeque::with_capacity(limit)),
            clock,
        }
    }

    /// Blocks until a request may be issued; returns the grant time.
    pub fn acquire(&self) -> Duration {
        if self.limit == 0 {
            return self.clock.now();
        }
        let mut grants = self.grants.lock().unwrap_or_else(|p| p.into_inner());
        loop {
            let now = self.clock.now();
            while grants.front().is_some_and(|&t| t + self.window <= now) {
                grants.pop_front();
            }
            if grants.len() < self.limit {
                grants.push_back(now);
                return now;
            }
            let oldest = *grants.front().expect("non-empty when at limit");
            self.clock.sleep(oldest + self.window - now);
        }
    }
}

/// Counting semaphore bounding in-flight requests.
pub struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|p| p.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n -= 1;
        Permit { sem: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.sem.freed.notify_one();
    }
}
