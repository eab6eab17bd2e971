//! Fixed-rate frame clock.

use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct FramePacer {
    period: Duration,
    next: Instant,
}

impl FramePacer {
    pub fn new(fps: f64) -> Self {
        let period = Duration::from_secs_f64(1.0 / fps.max(1e-3));
        Self {
            period,
            next: Instant::now() + period,
        }
    }

    pub fn period(&self) -> Duration {
        self.period
    }

    /// Sleeps until the next tick and returns how late the caller was. A
    /// caller more than one period behind is resynchronized instead of
    /// being allowed to burst.
    pub fn wait(&mut self) -> Duration {
        let now = Instant::now();
        if now < self.next {
            thread::sleep(self.next - now);
            self.next += self.period;
            return Duration::ZERO;
        }
        let late = now - self.next;
        self.next = if late > self.period { now + self.period } else { self.next + self.period };
        late
    }
}
