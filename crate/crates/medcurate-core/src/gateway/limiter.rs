//! Sliding-window request rate limiting with an injectable clock.
//!
//! The limiter tracks request timestamps over the trailing minute and makes
//! callers wait, never fail, once the window is full. Time is abstracted
//! behind [`Clock`] so the limiter's guarantee can be tested without real
//! sleeps.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

const WINDOW_MS: u64 = 60_000;

/// Monotonic time source in milliseconds.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep(&self, duration: Duration);
}

/// Wall-clock milliseconds since an arbitrary process-local epoch.
#[derive(Debug)]
pub struct SystemClock {
    epoch: std::time::Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { epoch: std::time::Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.epoch.elapsed().as_millis() as u64
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Manually advanced clock for tests. `sleep` advances time immediately, so
/// code under test runs at full speed while still observing the limiter's
/// pacing decisions.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: AtomicU64,
}

impl FakeClock {
    pub fn new() -> Self {
        FakeClock { now: AtomicU64::new(0) }
    }

    pub fn advance(&self, ms: u64) {
        self.now.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for FakeClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration.as_millis() as u64);
    }
}

/// At most `limit` acquisitions per trailing 60 second window. Excess
/// callers block until the window frees up.
pub struct RateLimiter {
    limit: usize,
    timestamps: Mutex<VecDeque<u64>>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32) -> Self {
        RateLimiter {
            limit: requests_per_minute.max(1) as usize,
            timestamps: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks until a slot is free, then records the acquisition at the
    /// clock's current time and returns that timestamp.
    pub fn acquire(&self, clock: &dyn Clock) -> u64 {
        let mut stamps = self.timestamps.lock().unwrap();
        loop {
            let now = clock.now_ms();
            while stamps.front().is_some_and(|&t| now.saturating_sub(t) >= WINDOW_MS) {
                stamps.pop_front();
            }
            if stamps.len() < self.limit {
                stamps.push_back(now);
                return now;
            }
            let wait_ms = WINDOW_MS - now.saturating_sub(stamps[0]);
            // Drop the lock while waiting so other threads can observe or
            // expire the window.
            drop(stamps);
            clock.sleep(Duration::from_millis(wait_ms.max(1)));
            stamps = self.timestamps.lock().unwrap();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every 60 s window of the acquisition log must respect the limit.
    fn assert_rate_respected(stamps: &[u64], limit: usize) {
        for (i, &start) in stamps.iter().enumerate() {
            let in_window =
                stamps[i..].iter().take_while(|&&t| t - start < WINDOW_MS).count();
            assert!(
                in_window <= limit,
                "{in_window} acquisitions within one minute of t={start}, limit {limit}"
            );
        }
    }

    #[test]
    fn burst_is_paced_to_the_limit() {
        let clock = FakeClock::new();
        let limiter = RateLimiter::new(5);
        let stamps: Vec<u64> = (0..23).map(|_| limiter.acquire(&clock)).collect();
        assert_rate_respected(&stamps, 5);
        assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn spaced_requests_never_wait() {
        let clock = FakeClock::new();
        let limiter = RateLimiter::new(2);
        for i in 0..10 {
            let before = clock.now_ms();
            limiter.acquire(&clock);
            assert_eq!(clock.now_ms(), before, "request {i} should not have slept");
            clock.advance(30_001);
        }
    }

    #[test]
    fn concurrent_acquirers_stay_under_limit() {
        let clock = FakeClock::new();
        let limiter = RateLimiter::new(4);
        let stamps = Mutex::new(Vec::new());
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    for _ in 0..6 {
                        let t = limiter.acquire(&clock);
                        stamps.lock().unwrap().push(t);
                    }
                });
            }
        });
        let mut stamps = stamps.into_inner().unwrap();
        stamps.sort_unstable();
        assert_eq!(stamps.len(), 24);
        assert_rate_respected(&stamps, 4);
    }
}
