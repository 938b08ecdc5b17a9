//! Wall-clock budget that degrades to "never expires" where no clock exists.

#[cfg(not(target_arch = "wasm32"))]
mod imp {
    use std::time::{Duration, Instant};

    #[derive(Debug, Clone, Copy)]
    pub struct Deadline {
        start: Instant,
        budget: Option<Duration>,
    }

    impl Deadline {
        pub fn after_secs(secs: f64) -> Self {
            Self {
                start: Instant::now(),
                budget: (secs.is_finite() && secs >= 0.0).then(|| Duration::from_secs_f64(secs)),
            }
        }

        pub fn expired(&self) -> bool {
            self.budget.is_some_and(|b| self.start.elapsed() >= b)
        }

        pub fn elapsed_secs(&self) -> f64 {
            self.start.elapsed().as_secs_f64()
        }

        pub fn remaining_secs(&self) -> f64 {
            match self.budget {
                Some(b) => (b.as_secs_f64() - self.elapsed_secs()).max(0.0),
                None => f64::INFINITY,
            }
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod imp {
    #[derive(Debug, Clone, Copy)]
    pub struct Deadline;

    impl Deadline {
        pub fn after_secs(_secs: f64) -> Self {
            Deadline
        }

        pub fn expired(&self) -> bool {
            false
        }

        pub fn elapsed_secs(&self) -> f64 {
            0.0
        }

        pub fn remaining_secs(&self) -> f64 {
            f64::INFINITY
        }
    }
}

pub use imp::Deadline;
