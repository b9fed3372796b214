//! Line-oriented `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Omitted keys keep the default
//! fabric, the preset timing of the chosen grade, the calibrated power
//! model and the default compute parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::PowerModel;
use crate::geometry::{validate_config, ConfigError, FabricConfig, TimingGrade};
use crate::scheduler::{ComputeParams, Platform};
use crate::timing::TimingParams;
use crate::transfer::{Mechanism, MechanismParams};

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: ConfigError },
    #[error("{0}")]
    Config(#[from] ConfigError),
}

/// Everything a platform needs apart from the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub fabric: FabricConfig,
    pub timing: TimingParams,
    pub mech: MechanismParams,
    pub power: PowerModel,
    pub compute: ComputeParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        let timing = TimingParams::default();
        SimConfig {
            fabric: FabricConfig::default(),
            timing,
            mech: MechanismParams::default(),
            power: PowerModel::default(),
            compute: ComputeParams::for_timing(&timing),
        }
    }
}

impl SimConfig {
    pub fn platform(&self, mechanism: Mechanism) -> Platform {
        Platform {
            config: self.fabric.clone(),
            timing: self.timing,
            mech_params: self.mech,
            power: self.power,
            mechanism,
            compute: self.compute,
            full_parallelism: false,
        }
    }
}

const FABRIC_COUNTS: [&str; 9] = [
    "channels",
    "ranks",
    "chips_per_rank",
    "banks_per_chip",
    "subarrays_per_bank",
    "rows_per_subarray",
    "row_size_bytes",
    "shared_rows_per_subarray",
    "bus_segments_per_bank",
];

pub fn parse_config_file(path: &Path) -> Result<SimConfig, ConfigFileError> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn parse_config(text: &str) -> Result<SimConfig, ConfigFileError> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| ConfigFileError::Parse { line, msg: format!("expected `key = value`, got `{content}`") })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ConfigFileError::Parse { line, msg: "empty key or value".into() });
        }
        pairs.push((line, k.to_string(), v.to_string()));
    }

    let mut cfg = SimConfig::default();
    // the grade picks the timing preset that explicit timing keys refine
    if let Some((line, _, v)) = pairs.iter().rev().find(|(_, k, _)| k == "timing_grade") {
        let grade: TimingGrade = v.parse().map_err(|e| ConfigFileError::Invalid { line: *line, source: e })?;
        cfg.fabric.timing_grade = grade;
        cfg.timing = TimingParams::preset(grade);
    }
    let mut plut_set = false;
    let mut fabric_line = 0;
    for (line, key, value) in &pairs {
        let line = *line;
        let float = || -> Result<f64, ConfigFileError> {
            let x: f64 = value
                .parse()
                .map_err(|_| ConfigFileError::Parse { line, msg: format!("`{key}` needs a number, got `{value}`") })?;
            if x.is_finite() && x >= 0.0 {
                Ok(x)
            } else {
                Err(ConfigFileError::Parse { line, msg: format!("`{key}` must be finite and non-negative") })
            }
        };
        let count = || -> Result<usize, ConfigFileError> {
            value.parse().map_err(|_| ConfigFileError::Parse {
                line,
                msg: format!("`{key}` needs a whole number, got `{value}`"),
            })
        };
        let k = key.as_str();
        if let Some(field) = FABRIC_COUNTS.iter().find(|&&f| f == k) {
            let n = count()?;
            if n == 0 {
                return Err(ConfigFileError::Invalid { line, source: ConfigError::ZeroCount { field } });
            }
            let f = &mut cfg.fabric;
            *match k {
                "channels" => &mut f.channels,
                "ranks" => &mut f.ranks,
                "chips_per_rank" => &mut f.chips_per_rank,
                "banks_per_chip" => &mut f.banks_per_chip,
                "subarrays_per_bank" => &mut f.subarrays_per_bank,
                "rows_per_subarray" => &mut f.rows_per_subarray,
                "row_size_bytes" => &mut f.row_size_bytes,
                "shared_rows_per_subarray" => &mut f.shared_rows_per_subarray,
                _ => &mut f.bus_segments_per_bank,
            } = n;
            fabric_line = line;
            continue;
        }
        match k {
            "timing_grade" => {}
            "t_ck_ns" => cfg.timing.t_ck_ns = float()?,
            "t_rcd_ns" => cfg.timing.t_rcd_ns = float()?,
            "t_rp_ns" => cfg.timing.t_rp_ns = float()?,
            "t_ras_ns" => cfg.timing.t_ras_ns = float()?,
            "aap_offset_ns" => cfg.timing.aap_offset_ns = float()?,
            "memcpy_ns" => cfg.mech.memcpy_ns = float()?,
            "rc_inter_ns" => cfg.mech.rc_inter_ns = float()?,
            "lisa_base_ns" => cfg.mech.lisa_base_ns = float()?,
            "lisa_extra_hop_ns" => cfg.mech.lisa_extra_hop_ns = float()?,
            "broadcast_limit" => cfg.mech.broadcast_limit = count()?,
            "p_local_copy_w" => cfg.power.p_local_copy_w = float()?,
            "p_bus_copy_w" => cfg.power.p_bus_copy_w = float()?,
            "p_memcpy_w" => cfg.power.p_memcpy_w = float()?,
            "p_rc_inter_w" => cfg.power.p_rc_inter_w = float()?,
            "sa_rows_active_bus" => cfg.power.sa_rows_active_bus = count()?,
            "plut_op_4bit_ns" => {
                cfg.compute.plut_op_4bit_ns = float()?;
                plut_set = true;
            }
            "aggregate_lut_entries" => cfg.compute.aggregate_lut_entries = count()? as u32,
            "shift_lut_entries" => cfg.compute.shift_lut_entries = count()? as u32,
            _ => return Err(ConfigFileError::UnknownKey { line, key: key.clone() }),
        }
    }
    if !plut_set {
        cfg.compute.plut_op_4bit_ns = ComputeParams::for_timing(&cfg.timing).plut_op_4bit_ns;
    }
    validate_config(&cfg.fabric).map_err(|source| match fabric_line {
        0 => ConfigFileError::Config(source),
        line => ConfigFileError::Invalid { line, source },
    })?;
    Ok(cfg)
}
