//! Bookkeeping for the acceptance run: each criterion yields an
//! [`Outcome`] and [`run`] prints its PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Outcome of one criterion: pass flag and a short summary of the numbers.
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new() -> Self {
        Outcome { pass: true, detail: String::new() }
    }

    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&what.into());
        if !ok {
            self.detail.push_str(" [x]");
            self.pass = false;
        }
    }
}

impl Default for Outcome {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs one criterion, adds the runtime limit as a check and prints the
/// result line. Panics count as failures.
pub fn run(label: &str, limit: Duration, body: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(body));
    let elapsed = t0.elapsed();
    let mut o = result.unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Outcome { pass: false, detail: format!("panicked: {msg}") }
    });
    o.check(elapsed < limit, format!("{:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()));
    println!("{label}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

