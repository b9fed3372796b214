//! One PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

use std::time::Instant;

use pimsim::suite::run_acceptance;

fn main() {
    let t0 = Instant::now();
    let (checks, suite) = run_acceptance();
    println!();
    for c in &checks {
        println!("{c}");
    }
    if let Some(s) = suite {
        for r in &s.rows {
            let mark = if r.passed { "ok" } else { "off" };
            println!(
                "    {:<12} speedup {:6.2}% (target {:.0} +/- 5) energy saving {:6.2}%  {mark}",
                r.label, r.speedup_pct, r.target_pct, r.energy_saving_pct
            );
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("acceptance: {} passed, {failed} failed in {:.1?}", checks.len() - failed, t0.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
