//! Runs every exact identity and bound check on 200 random instances and
//! prints a per-check tally with the tightest slack seen.

use std::collections::BTreeMap;

use lightning_opd::diagnostics::{verify_suite, SuiteConfig};

fn main() -> lightning_opd::Result<()> {
    let summary = verify_suite(&SuiteConfig::default())?;
    let mut tally: BTreeMap<&str, (usize, usize, usize, f64)> = BTreeMap::new();
    for r in &summary.reports {
        let e = tally.entry(&r.name).or_insert((0, 0, 0, f64::INFINITY));
        e.0 += 1;
        if r.pass {
            e.1 += 1;
        }
        if !r.asserted {
            e.2 += 1;
        }
        e.3 = e.3.min(r.slack);
    }
    println!(
        "{:<26} {:>6} {:>6} {:>11} {:>12}",
        "check", "runs", "pass", "descriptive", "min slack"
    );
    for (name, (runs, pass, desc, slack)) in &tally {
        println!("{name:<26} {runs:>6} {pass:>6} {desc:>11} {slack:>12.3e}");
    }
    println!("all asserted checks pass: {}", summary.all_pass());
    Ok(())
}
