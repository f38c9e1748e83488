use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Token bucket shared by concurrent callers of one HTTP backend.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    /// Allows `requests_per_minute` sustained, with bursts up to one
    /// second's worth (at least one request).
    pub fn per_minute(requests_per_minute: u32) -> Self {
        let per_second = f64::from(requests_per_minute.max(1)) / 60.0;
        let capacity = per_second.max(1.0);
        TokenBucket { capacity, per_second, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Takes one token, or returns how long to wait before one is available.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut state = self.state.lock().unwrap();
        let now = Instant::now();
        let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
        state.0 = (state.0 + refill).min(self.capacity);
        state.1 = now;
        if state.0 >= 1.0 {
            state.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - state.0) / self.per_second))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            std::thread::sleep(wait);
        }
    }
}
