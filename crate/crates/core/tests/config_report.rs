use std::io::Write;

use pimsim::config::{parse_config, parse_config_file, ConfigFileError, SimConfig};
use pimsim::geometry::{validate_config, ConfigError};
use pimsim::report::{write_outputs, Summary};
use pimsim::scheduler::simulate;
use pimsim::suite::{copy_distance_sweep, copy_microbench};
use pimsim::transfer::Mechanism;
use pimsim::workloads::build_mm_segment;

#[test]
fn file_round_trip() {
    let dir = std::env::temp_dir().join(format!("pimsim-cfg-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fabric.cfg");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "# four banks only\nbanks_per_chip = 1\nlisa_extra_hop_ns = 12.0").unwrap();
    drop(f);
    let cfg = parse_config_file(&path).unwrap();
    assert_eq!(validate_config(&cfg.fabric).unwrap().total_banks(), 4);
    assert_eq!(cfg.mech.lisa_extra_hop_ns, 12.0);
    assert!(matches!(parse_config_file(&dir.join("missing.cfg")), Err(ConfigFileError::Io(_))));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_examples() {
    assert_eq!(parse_config("").unwrap(), SimConfig::default());
    let err = parse_config("\n\nsubarrays_per_bank = 0").unwrap_err();
    assert!(matches!(err, ConfigFileError::Invalid { line: 3, source: ConfigError::ZeroCount { .. } }));
    assert!(err.to_string().starts_with("line 3:"));
}

#[test]
fn hop_override_moves_lisa_sweep() {
    let cfg = parse_config("lisa_extra_hop_ns = 12.0").unwrap();
    let pts = copy_distance_sweep(&cfg, &[Mechanism::LisaRisc, Mechanism::SharedPimBus], 15).unwrap();
    assert_eq!(pts.len(), 15);
    for p in &pts {
        let d = p.x;
        assert_eq!(p.makespan_ns[0], Some(260.5 + 12.0 * (d - 1.0)));
        assert_eq!(p.makespan_ns[1], Some(52.75));
    }
}

#[test]
fn outputs_are_written_and_stable() {
    let cfg = SimConfig::default();
    let mechs = [Mechanism::MemcpyChannel, Mechanism::RowcloneInterSA, Mechanism::LisaRisc, Mechanism::SharedPimBus];
    let comparison = copy_microbench(&cfg, &mechs).unwrap();
    let sweep = copy_distance_sweep(&cfg, &mechs, 15).unwrap();
    let tl = simulate(&build_mm_segment(), &cfg.platform(Mechanism::LisaRisc)).unwrap();
    let summary = Summary {
        benchmark: "copy_microbench".into(),
        size: 0,
        bits: 0,
        full_parallelism: false,
        config: cfg,
        comparison,
        checks: Vec::new(),
        timeline_rows: None,
    };
    let dir = std::env::temp_dir().join(format!("pimsim-out-{}", std::process::id()));
    let write = || write_outputs(&dir, &summary, Some((&mechs, &sweep)), Some((&tl, Some(4)))).unwrap();
    let files = write();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["timeline.csv", "comparison.csv", "plot_copy_microbench.csv", "summary.json"]);
    let snapshot: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).unwrap()).collect();

    let comparison = String::from_utf8(snapshot[1].clone()).unwrap();
    let lat: Vec<f64> = comparison.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(lat, [1366.25, 1363.75, 260.5, 52.75]);
    let timeline = String::from_utf8(snapshot[0].clone()).unwrap();
    assert_eq!(timeline.lines().count(), 5);
    let json: serde_json::Value = serde_json::from_slice(&snapshot[3]).unwrap();
    assert_eq!(json["timeline_rows"][0], 4);

    // a rerun overwrites byte for byte
    let again: Vec<Vec<u8>> = write().iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(snapshot, again);
    std::fs::remove_dir_all(&dir).unwrap();
}
