//! Retry with exponential backoff, an in-flight cap and a token bucket.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 5, base_delay_ms: 500, max_delay_ms: 30_000 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): `min(max, base * 2^retry)`
    /// scaled by a uniform jitter factor in `[0.5, 1)`.
    pub fn delay(&self, retry: u32) -> Duration {
        let exp = self.base_delay_ms.saturating_mul(1u64 << retry.min(20));
        let capped = exp.min(self.max_delay_ms) as f64;
        let jitter = 0.5 + rand::random::<f64>() * 0.5;
        Duration::from_micros((capped * jitter * 1000.0) as u64)
    }

    /// Runs `call` until it succeeds, fails permanently, or attempts run out.
    /// Returns the value and the number of retries, or the last error and the
    /// number of attempts made.
    pub fn run<T>(
        &self,
        tag: &str,
        mut call: impl FnMut() -> Result<T, ServiceError>,
    ) -> Result<(T, u32), (ServiceError, u32)> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => {
                    if attempt > 1 {
                        log::info!("{tag}: succeeded after {} retries", attempt - 1);
                    }
                    return Ok((v, attempt - 1));
                }
                Err(e) if e.is_retryable() && attempt < attempts => {
                    let wait = self.delay(attempt - 1);
                    log::warn!("{tag}: attempt {attempt}/{attempts} failed ({e}); retrying in {wait:?}");
                    thread::sleep(wait);
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }
}

#[derive(Debug)]
struct Bucket {
    rate_per_sec: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

/// Caps concurrent upstream calls and, optionally, their rate.
#[derive(Debug)]
pub struct Limiter {
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    bucket: Option<Mutex<Bucket>>,
}

pub struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter lock") -= 1;
        self.0.freed.notify_one();
    }
}

impl Limiter {
    pub fn new(max_in_flight: usize, rate_per_sec: Option<f64>) -> Self {
        let bucket = rate_per_sec.filter(|r| *r > 0.0).map(|rate| {
            let capacity = (max_in_flight.max(1)) as f64;
            Mutex::new(Bucket { rate_per_sec: rate, capacity, tokens: capacity, last: Instant::now() })
        });
        Self { max_in_flight: max_in_flight.max(1), in_flight: Mutex::new(0), freed: Condvar::new(), bucket }
    }

    pub fn unlimited() -> Self {
        Self::new(usize::MAX, None)
    }

    pub fn acquire(&self) -> Permit<'_> {
        self.take_token();
        let mut n = self.in_flight.lock().expect("limiter lock");
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n += 1;
        Permit(self)
    }

    fn take_token(&self) {
        let Some(bucket) = &self.bucket else { return };
        loop {
            let wait = {
                let mut b = bucket.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(b.last).as_secs_f64() * b.rate_per_sec;
                b.tokens = (b.tokens + refill).min(b.capacity);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / b.rate_per_sec)
            };
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn fast() -> RetryPolicy {
        RetryPolicy { max_attempts: 5, base_delay_ms: 1, max_delay_ms: 4 }
    }

    #[test]
    fn retries_only_retryable_errors() {
        let mut n = 0;
        let r = fast().run("t", || {
            n += 1;
            if n < 3 { Err(ServiceError::Status { code: 429, body: String::new() }) } else { Ok(n) }
        });
        assert_eq!(r, Ok((3, 2)));

        let mut n = 0;
        let r: Result<((), u32), _> = fast().run("t", || {
            n += 1;
            Err(ServiceError::Status { code: 400, body: "bad".into() })
        });
        assert_eq!(r.unwrap_err().1, 1);

        let r: Result<((), u32), _> = fast().run("t", || Err(ServiceError::Transport("reset".into())));
        assert_eq!(r.unwrap_err().1, 5);
    }

    #[test]
    fn retryable_classes() {
        for code in [408, 429, 500, 503, 599] {
            assert!(ServiceError::Status { code, body: String::new() }.is_retryable());
        }
        for code in [400, 401, 404, 422] {
            assert!(!ServiceError::Status { code, body: String::new() }.is_retryable());
        }
        assert!(!ServiceError::Decode("x".into()).is_retryable());
    }

    #[test]
    fn backoff_is_bounded() {
        let p = RetryPolicy { max_attempts: 5, base_delay_ms: 100, max_delay_ms: 1000 };
        for retry in 0..10 {
            let d = p.delay(retry).as_millis() as u64;
            let cap = (100u64 << retry).min(1000);
            assert!(d >= cap / 2 && d <= cap, "{retry}: {d}");
        }
    }

    #[test]
    fn in_flight_cap_holds() {
        let limiter = Arc::new(Limiter::new(2, None));
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (l, c, p) = (limiter.clone(), current.clone(), peak.clone());
                thread::spawn(move || {
                    let _permit = l.acquire();
                    let now = c.fetch_add(1, Ordering::SeqCst) + 1;
                    p.fetch_max(now, Ordering::SeqCst);
                    thread::sleep(Duration::from_millis(5));
                    c.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn token_bucket_paces_calls() {
        let limiter = Limiter::new(1, Some(200.0));
        let start = Instant::now();
        for _ in 0..5 {
            drop(limiter.acquire());
        }
        // one token up front, four refills at 5 ms each
        assert!(start.elapsed() >= Duration::from_millis(15));
    }
}
