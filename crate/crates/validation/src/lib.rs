//! Runner for the acceptance criteria.
//!
//! Every criterion runs even when an earlier one fails. Each prints exactly one
//! `PASS` or `FAIL` line with its wall-clock time, and a criterion that finishes
//! over its time limit fails.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Outcome of one criterion: a short summary on success, the first violated condition otherwise.
pub type Check = Result<String, String>;

pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub limit: Duration,
    pub run: fn() -> Check,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub id: u32,
    pub passed: bool,
    pub elapsed: Duration,
    pub line: String,
}

/// Fails the enclosing criterion with a formatted message unless `cond` holds.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panicked".into())
}

pub fn run_one(c: &Criterion) -> Verdict {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| Err(panic_message(&*p)));
    let elapsed = start.elapsed();
    let (passed, detail) = match result {
        Ok(d) if elapsed <= c.limit => (true, d),
        Ok(d) => (false, format!("{d}; over the {:.0?} limit", c.limit)),
        Err(e) => (false, e),
    };
    let line = format!(
        "criterion {} {}: {} in {:.2}s ({})",
        c.id,
        c.name,
        if passed { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        detail
    );
    Verdict {
        id: c.id,
        passed,
        elapsed,
        line,
    }
}

/// Runs every criterion in order, printing one line each, and returns whether all passed.
pub fn run_all(criteria: &[Criterion]) -> bool {
    // Panics are reported on the criterion line instead.
    let hook = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let verdicts: Vec<Verdict> = criteria
        .iter()
        .map(|c| {
            let v = run_one(c);
            println!("{}", v.line);
            v
        })
        .collect();
    panic::set_hook(hook);
    let passed = verdicts.iter().filter(|v| v.passed).count();
    println!("acceptance: {passed}/{} criteria passed", verdicts.len());
    passed == verdicts.len()
}
