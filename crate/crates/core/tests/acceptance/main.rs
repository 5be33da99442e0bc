//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails. An optional argument restricts the
//! run to criteria whose id contains it (e.g. `AC3`).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod oracle;
mod properties;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use criteria::Verdict;

struct Criterion {
    id: &'static str,
    title: &'static str,
    budget: Option<Duration>,
    run: fn() -> Verdict,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: "AC1", title: "flat-PSD exactness", budget: secs(1), run: criteria::ac1 },
    Criterion { id: "AC2", title: "Toeplitz-limit convergence", budget: secs(120), run: criteria::ac2 },
    Criterion { id: "AC3", title: "dominance vs finite-n consistency", budget: secs(300), run: criteria::ac3 },
    Criterion { id: "AC4", title: "discrete counterexample", budget: None, run: criteria::ac4 },
    Criterion { id: "AC5", title: "KKT singleton", budget: secs(300), run: criteria::ac5 },
    Criterion { id: "AC6", title: "Neyman-Pearson calibration", budget: None, run: criteria::ac6 },
    Criterion { id: "AC7", title: "threshold and statistic-mean trends", budget: secs(600), run: criteria::ac7 },
    Criterion { id: "AC8", title: "worst-case ordering and miss exponent", budget: secs(1200), run: criteria::ac8 },
    Criterion { id: "AC9", title: "regularity o(beta) trend", budget: None, run: criteria::ac9 },
    Criterion { id: "AC10", title: "invariant suites", budget: secs(600), run: properties::run_all },
];

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = Vec::new();
    for c in CRITERIA {
        if let Some(f) = &filter {
            if c.id != f.as_str() {
                continue;
            }
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = match verdict {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        if let Some(b) = c.budget {
            if elapsed > b {
                pass = false;
                detail = format!("{detail}; runtime over the {} s budget", b.as_secs());
            }
        }
        println!(
            "[{}] {} {} ({:.2} s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
