//! Browser bindings for the demo page. Every export returns a JSON string
//! (an object with an `error` field on failure) so the same functions run
//! natively in tests.

use std::cell::Cell;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use pimsim::config::SimConfig;
use pimsim::scheduler::{compare, metrics, simulate, Platform, SimError, Tag};
use pimsim::suite::{calibrate_plut_op, copy_distance_sweep, SweepPoint, ADD32_TARGET_PCT};
use pimsim::transfer::Mechanism;
use pimsim::workloads::{build_mm_segment, build_wide_add, build_wide_mul};

pub const WIDTHS: [u32; 6] = [4, 8, 16, 32, 64, 128];

#[derive(Debug, Serialize)]
pub struct DistanceCurve {
    pub mechanisms: Vec<&'static str>,
    pub points: Vec<SweepPoint>,
}

/// Copy latency against subarray distance with the given LISA hop cost.
pub fn distance_curve(lisa_hop_ns: f64) -> Result<DistanceCurve, SimError> {
    let mut cfg = SimConfig::default();
    cfg.mech.lisa_extra_hop_ns = lisa_hop_ns.max(0.0);
    let mechs = Mechanism::PLATFORM;
    Ok(DistanceCurve {
        mechanisms: mechs.iter().map(|m| m.name()).collect(),
        points: copy_distance_sweep(&cfg, &mechs, 15)?,
    })
}

#[derive(Debug, Serialize)]
pub struct WidthPoint {
    pub bits: u32,
    pub lisa_ns: f64,
    pub sharedpim_ns: f64,
    pub speedup_pct: f64,
}

thread_local! {
    static CALIBRATED: Cell<Option<f64>> = const { Cell::new(None) };
}

/// LUT query latency calibrated on 32-bit addition, computed once.
pub fn calibrated_plut_op() -> Result<f64, SimError> {
    if let Some(c) = CALIBRATED.with(Cell::get) {
        return Ok(c);
    }
    let c = calibrate_plut_op(&Platform::new(Mechanism::LisaRisc), ADD32_TARGET_PCT)?;
    CALIBRATED.with(|cell| cell.set(Some(c)));
    Ok(c)
}

/// Shared-PIM speedup over LISA for wide addition (`mul = false`) or
/// multiplication at every supported width.
pub fn width_curve(mul: bool) -> Result<Vec<WidthPoint>, SimError> {
    let base = Platform::new(Mechanism::LisaRisc).with_plut_op(calibrated_plut_op()?);
    WIDTHS
        .iter()
        .map(|&bits| {
            let dag = if mul { build_wide_mul(bits)? } else { build_wide_add(bits)? };
            let r = compare(&dag, &[base.clone(), base.with_mechanism(Mechanism::SharedPimBus)])?;
            Ok(WidthPoint {
                bits,
                lisa_ns: r.rows[0].metrics.makespan_ns,
                sharedpim_ns: r.rows[1].metrics.makespan_ns,
                speedup_pct: r.rows[1].speedup_pct,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Bar {
    pub lane: String,
    pub start_ns: f64,
    pub end_ns: f64,
    pub tag: &'static str,
    pub node: usize,
}

#[derive(Debug, Serialize)]
pub struct Schedule {
    pub mechanism: &'static str,
    pub makespan_ns: f64,
    pub stall_ns: f64,
    pub nop_ns: f64,
    pub bars: Vec<Bar>,
}

/// The two-subarray matrix-multiply segment under LISA and Shared-PIM.
pub fn segment_schedules(plut_op_ns: f64) -> Result<Vec<Schedule>, SimError> {
    let dag = build_mm_segment();
    [Mechanism::LisaRisc, Mechanism::SharedPimBus]
        .into_iter()
        .map(|mech| {
            let p = Platform::new(mech).with_plut_op(plut_op_ns.max(1.0));
            let tl = simulate(&dag, &p)?;
            let m = metrics(&tl, &p);
            let bars = tl
                .intervals()
                .filter(|iv| iv.tag != Tag::Idle)
                .map(|iv| Bar {
                    lane: iv.lane.to_string(),
                    start_ns: iv.start_ns,
                    end_ns: iv.end_ns,
                    tag: iv.tag.name(),
                    node: iv.node,
                })
                .collect();
            Ok(Schedule {
                mechanism: mech.name(),
                makespan_ns: m.makespan_ns,
                stall_ns: m.stall_ns,
                nop_ns: m.nop_ns,
                bars,
            })
        })
        .collect()
}

fn json<T: Serialize>(r: Result<T, SimError>) -> String {
    let v = match r {
        Ok(v) => serde_json::to_value(v),
        Err(e) => Ok(serde_json::json!({ "error": e.to_string() })),
    };
    v.map_or_else(|e| format!(r#"{{"error":"{e}"}}"#), |v| v.to_string())
}

#[wasm_bindgen]
pub fn copy_latency_vs_distance(lisa_hop_ns: f64) -> String {
    json(distance_curve(lisa_hop_ns))
}

/// `op` is `"add"` or `"mul"`.
#[wasm_bindgen]
pub fn speedup_vs_bits(op: &str) -> String {
    json(width_curve(op == "mul"))
}

#[wasm_bindgen]
pub fn pipeline_timeline(plut_op_ns: f64) -> String {
    json(segment_schedules(plut_op_ns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_curve_shapes() {
        let c = distance_curve(9.0).unwrap();
        assert_eq!(c.points.len(), 15);
        let lisa = c.mechanisms.iter().position(|&m| m == "lisa").unwrap();
        let sp = c.mechanisms.iter().position(|&m| m == "sharedpim").unwrap();
        assert_eq!(c.points[0].makespan_ns[lisa], Some(260.5));
        assert_eq!(c.points[14].makespan_ns[lisa], Some(260.5 + 14.0 * 9.0));
        assert!(c.points.iter().all(|p| p.makespan_ns[sp] == Some(52.75)));
    }

    #[test]
    fn add_curve_hits_calibration_point() {
        let pts = width_curve(false).unwrap();
        let p32 = pts.iter().find(|p| p.bits == 32).unwrap();
        assert!((p32.speedup_pct - ADD32_TARGET_PCT).abs() < 0.01);
        assert_eq!(pts[0].speedup_pct, 0.0);
    }

    #[test]
    fn segment_shows_stalls_only_under_lisa() {
        let s = segment_schedules(100.0).unwrap();
        assert!(s[0].stall_ns > 0.0 && s[1].stall_ns == 0.0);
        assert!(s[1].makespan_ns < s[0].makespan_ns);
        assert!(s[0].bars.iter().any(|b| b.tag == "stall"));
    }

    #[test]
    fn exports_are_json() {
        let v: serde_json::Value = serde_json::from_str(&pipeline_timeline(50.0)).unwrap();
        assert_eq!(v[1]["mechanism"], "sharedpim");
        let v: serde_json::Value = serde_json::from_str(&copy_latency_vs_distance(12.0)).unwrap();
        assert_eq!(v["points"][2]["makespan_ns"][2], 284.5);
    }
}
