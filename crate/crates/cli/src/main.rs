use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;

use pimsim::config::{parse_config_file, SimConfig};
use pimsim::report::{write_outputs, Summary};
use pimsim::scheduler::{comparison_from, metrics, simulate, Platform, Timeline};
use pimsim::suite::{
    self, benchmark_sweep, build_benchmark, calibrate_plut_op, copy_distance_sweep, copy_microbench, Benchmark,
    SweepPoint, ADD32_TARGET_PCT,
};
use pimsim::transfer::Mechanism;

/// Simulate in-DRAM LUT workloads under different inter-subarray copy
/// mechanisms and write comparison reports.
#[derive(Debug, Parser)]
#[command(name = "pimsim", version)]
struct RunSpec {
    /// wide_add, wide_mul, ntt, mm, pmm, bfs, dfs or copy_microbench
    #[arg(long, default_value = "copy_microbench")]
    benchmark: Benchmark,

    /// Problem size (matrix n, polynomial degree, graph nodes); defaults
    /// to the desk-scale size of the benchmark
    #[arg(long)]
    size: Option<usize>,

    /// Operand width of wide_add and wide_mul
    #[arg(long, default_value_t = 32)]
    bits: u32,

    /// Comma-separated mechanisms, baseline first
    #[arg(long, value_delimiter = ',')]
    mechanisms: Option<Vec<Mechanism>>,

    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Run every acceptance check and print a pass/fail table
    #[arg(long)]
    repro_paper: bool,

    /// Give each independent part of the workload its own banks. Always on
    /// for the application benchmarks, whose layout spans banks.
    #[arg(long)]
    full_parallelism: bool,

    /// Keep the configured LUT query latency instead of calibrating it on
    /// 32-bit addition first
    #[arg(long)]
    no_calibrate: bool,

    /// Skip the size sweep behind plot_<benchmark>.csv
    #[arg(long)]
    no_plot: bool,

    /// Rows kept in timeline.csv
    #[arg(long, default_value_t = 100_000)]
    timeline_rows: usize,
}

fn main() -> ExitCode {
    let spec = RunSpec::parse();
    match run(&spec) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn thread_pool() -> Result<()> {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = match std::env::var("PIMSIM_THREADS") {
        Ok(v) => v.trim().parse::<usize>().with_context(|| format!("PIMSIM_THREADS=`{v}` is not a count"))?.max(1),
        Err(_) => cores,
    };
    // a second initialisation in the same process is harmless
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cap.min(cores).max(1)).build_global();
    Ok(())
}

/// Returns whether every check passed; plain runs always pass.
fn run(spec: &RunSpec) -> Result<bool> {
    thread_pool()?;
    if spec.repro_paper {
        return repro(spec);
    }
    let mut cfg = match &spec.config {
        Some(p) => parse_config_file(p).with_context(|| format!("config {}", p.display()))?,
        None => SimConfig::default(),
    };
    let bench = spec.benchmark;
    let mechs = spec.mechanisms.clone().unwrap_or_else(|| match bench {
        Benchmark::CopyMicrobench => Mechanism::PLATFORM.to_vec(),
        _ => vec![Mechanism::LisaRisc, Mechanism::SharedPimBus],
    });
    if mechs.is_empty() {
        bail!("no mechanisms given");
    }
    let size = spec.size.unwrap_or(bench.default_size());
    let full = spec.full_parallelism || bench.is_application();
    if !spec.no_calibrate && bench != Benchmark::CopyMicrobench {
        let base = cfg.platform(Mechanism::LisaRisc).with_full_parallelism(true);
        cfg.compute.plut_op_4bit_ns = calibrate_plut_op(&base, ADD32_TARGET_PCT)?;
        println!("calibrated LUT query latency: {:.3} ns", cfg.compute.plut_op_4bit_ns);
    }
    let platforms: Vec<Platform> = mechs.iter().map(|&m| cfg.platform(m).with_full_parallelism(full)).collect();

    let (comparison, timeline, plot): (_, Option<Timeline>, Vec<SweepPoint>) = if bench == Benchmark::CopyMicrobench {
        let cmp = copy_microbench(&cfg, &mechs)?;
        let tl = simulate(&build_benchmark(bench, size, spec.bits)?, platforms.last().expect("non-empty"))?;
        let plot = if spec.no_plot { Vec::new() } else { copy_distance_sweep(&cfg, &mechs, usize::MAX)? };
        (cmp, Some(tl), plot)
    } else {
        let dag = build_benchmark(bench, size, spec.bits)?;
        let mut timelines: Vec<Timeline> = platforms.par_iter().map(|p| simulate(&dag, p)).collect::<Result<_, _>>()?;
        let all: Vec<_> = timelines.iter().zip(&platforms).map(|(t, p)| metrics(t, p)).collect();
        let cmp = comparison_from(dag.label.clone(), &platforms, &all);
        let plot = if spec.no_plot { Vec::new() } else { sweep(bench, size, spec.bits, &platforms)? };
        (cmp, timelines.pop(), plot)
    };

    print_comparison(&comparison);
    let summary = Summary {
        benchmark: bench.name().to_string(),
        size,
        bits: spec.bits,
        full_parallelism: full,
        config: cfg,
        comparison,
        checks: Vec::new(),
        timeline_rows: None,
    };
    let plot_arg = (!plot.is_empty()).then_some((mechs.as_slice(), plot.as_slice()));
    let files = write_outputs(&spec.out, &summary, plot_arg, timeline.as_ref().map(|t| (t, Some(spec.timeline_rows))))?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(true)
}

/// Plot x values: widths for the wide operations, a few sizes up to the
/// requested one otherwise.
fn sweep(bench: Benchmark, size: usize, bits: u32, platforms: &[Platform]) -> Result<Vec<SweepPoint>> {
    let xs: Vec<usize> = match bench {
        Benchmark::WideAdd | Benchmark::WideMul => {
            [4usize, 8, 16, 32, 64, 128].into_iter().filter(|&w| w <= bits.max(4) as usize).collect()
        }
        _ => {
            let floor = match bench {
                Benchmark::Ntt => 2,
                _ => 1,
            };
            let mut xs: Vec<usize> = [size / 4, size / 2, size].into_iter().map(|x| x.max(floor)).collect();
            xs.dedup();
            xs
        }
    };
    let points: Vec<Vec<SweepPoint>> =
        xs.par_iter().map(|&x| benchmark_sweep(bench, &[x], bits, platforms)).collect::<Result<_, _>>()?;
    Ok(points.into_iter().flatten().collect())
}

fn print_comparison(r: &pimsim::scheduler::ComparisonReport) {
    println!("{} (baseline {})", r.label, r.baseline);
    println!("{:<10} {:>14} {:>12} {:>10} {:>10}", "mechanism", "makespan_ns", "energy_uj", "speedup%", "energy%");
    for row in &r.rows {
        println!(
            "{:<10} {:>14.2} {:>12.4} {:>10.2} {:>10.2}",
            row.mechanism.name(),
            row.metrics.makespan_ns,
            row.metrics.transfer_energy_uj,
            row.speedup_pct,
            row.energy_saving_pct
        );
    }
}

fn repro(spec: &RunSpec) -> Result<bool> {
    let (checks, speedups) = suite::run_acceptance();
    for c in &checks {
        println!("{c}");
    }
    if let Some(s) = &speedups {
        for r in &s.rows {
            println!("    {:<12} {:6.2}% (target {:.0})", r.label, r.speedup_pct, r.target_pct);
        }
    }
    std::fs::create_dir_all(&spec.out).with_context(|| format!("creating {}", spec.out.display()))?;
    let path = spec.out.join("acceptance.json");
    let json = serde_json::json!({ "checks": checks, "speedups": speedups });
    std::fs::write(&path, serde_json::to_vec_pretty(&json)?).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(checks.iter().all(|c| c.passed))
}
