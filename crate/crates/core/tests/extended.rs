//! Full-size runs. NTT fits the default pass; the others are ignored and
//! run with `cargo test --release -p pimsim-core --test extended -- --ignored --nocapture`.

use pimsim::config::SimConfig;
use pimsim::suite::Benchmark;
use pimsim::suite::{calibrate_plut_op, compare_pair, full_size_targets, ADD32_TARGET_PCT, SPEEDUP_TOLERANCE_PCT};
use pimsim::transfer::Mechanism;

fn run(filter: impl Fn(Benchmark) -> bool) {
    let base = SimConfig::default().platform(Mechanism::LisaRisc);
    let base = base.clone().with_plut_op(calibrate_plut_op(&base, ADD32_TARGET_PCT).unwrap());
    for t in full_size_targets().into_iter().filter(|t| filter(t.benchmark)) {
        let start = std::time::Instant::now();
        let r = compare_pair(&t, &base).unwrap();
        let sp = &r.rows[1];
        println!(
            "{}{}: speedup {:.2}% (target {}) energy saving {:.2}% in {:.1?}",
            t.benchmark,
            t.size,
            sp.speedup_pct,
            t.target_pct,
            sp.energy_saving_pct,
            start.elapsed()
        );
        assert!((sp.speedup_pct - t.target_pct).abs() <= SPEEDUP_TOLERANCE_PCT);
    }
}

#[test]
fn ntt_full_size() {
    run(|b| b == Benchmark::Ntt);
}

#[test]
#[ignore = "full-size PMM, tens of millions of nodes"]
fn pmm_full_size() {
    run(|b| b == Benchmark::Pmm);
}

#[test]
#[ignore = "full-size MM needs billions of nodes, graph search tens of GB"]
fn mm_and_graphs_full_size() {
    run(|b| matches!(b, Benchmark::Mm | Benchmark::Bfs | Benchmark::Dfs));
}
