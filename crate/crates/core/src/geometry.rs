//! DRAM organization, row addressing and the shared-row / bank-bus extensions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{field}` must be at least 1")]
    ZeroCount { field: &'static str },
    #[error("at least one shared row per subarray is required")]
    NoSharedRows,
    #[error("shared rows ({shared}) must be fewer than rows per subarray ({rows})")]
    TooManySharedRows { shared: usize, rows: usize },
    #[error("{segments} bus segments cannot partition {subarrays} subarrays")]
    TooManySegments { segments: usize, subarrays: usize },
    #[error("unknown timing grade `{0}`")]
    UnknownGrade(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("flat row index {index} out of range (total rows {total})")]
    OutOfRange { index: usize, total: usize },
    #[error("row address {0} does not exist in this geometry")]
    Invalid(RowAddress),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(non_camel_case_types)]
pub enum TimingGrade {
    #[serde(rename = "DDR3_1600_11")]
    Ddr3_1600_11,
    #[serde(rename = "DDR4_2400T_17")]
    Ddr4_2400T_17,
}

impl TimingGrade {
    pub fn name(self) -> &'static str {
        match self {
            TimingGrade::Ddr3_1600_11 => "DDR3_1600_11",
            TimingGrade::Ddr4_2400T_17 => "DDR4_2400T_17",
        }
    }
}

impl fmt::Display for TimingGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TimingGrade {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "DDR3_1600_11" | "DDR3" => Ok(TimingGrade::Ddr3_1600_11),
            "DDR4_2400T_17" | "DDR4" => Ok(TimingGrade::Ddr4_2400T_17),
            _ => Err(ConfigError::UnknownGrade(s.to_string())),
        }
    }
}

/// Physical organization of the simulated memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabricConfig {
    pub channels: usize,
    pub ranks: usize,
    pub chips_per_rank: usize,
    pub banks_per_chip: usize,
    pub subarrays_per_bank: usize,
    pub rows_per_subarray: usize,
    pub row_size_bytes: usize,
    pub shared_rows_per_subarray: usize,
    pub bus_segments_per_bank: usize,
    pub timing_grade: TimingGrade,
}

impl Default for FabricConfig {
    /// 1 channel, 1 rank, 4 chips, 4 banks per chip, 16 subarrays per bank,
    /// 512 rows of 8 KiB, 2 shared rows per subarray, 4 bus segments.
    fn default() -> Self {
        FabricConfig {
            channels: 1,
            ranks: 1,
            chips_per_rank: 4,
            banks_per_chip: 4,
            subarrays_per_bank: 16,
            rows_per_subarray: 512,
            row_size_bytes: 8 * 1024,
            shared_rows_per_subarray: 2,
            bus_segments_per_bank: 4,
            timing_grade: TimingGrade::Ddr3_1600_11,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    Regular,
    /// Shared row reached through its local wordline.
    SharedLocal,
    /// Shared row reached through its global wordline (GWL) onto the bank bus.
    SharedGlobal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowAddress {
    /// Flattened bank index across channel/rank/chip/bank.
    pub bank: usize,
    pub subarray: usize,
    pub row: usize,
    pub kind: RowKind,
}

impl RowAddress {
    pub fn regular(bank: usize, subarray: usize, row: usize) -> Self {
        RowAddress { bank, subarray, row, kind: RowKind::Regular }
    }

    pub fn is_shared(&self) -> bool {
        self.kind != RowKind::Regular
    }

    /// Both addresses of a shared row name the same cells.
    pub fn same_storage(&self, other: &RowAddress) -> bool {
        self.bank == other.bank && self.subarray == other.subarray && self.row == other.row
    }
}

impl fmt::Display for RowAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            RowKind::Regular => "",
            RowKind::SharedLocal => "/lwl",
            RowKind::SharedGlobal => "/gwl",
        };
        write!(f, "b{}.sa{}.r{}{}", self.bank, self.subarray, self.row, tag)
    }
}

/// A validated configuration plus the quantities derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    config: FabricConfig,
    total_banks: usize,
    total_subarrays: usize,
}

pub fn validate_config(cfg: &FabricConfig) -> Result<Geometry, ConfigError> {
    let counts = [
        ("channels", cfg.channels),
        ("ranks", cfg.ranks),
        ("chips_per_rank", cfg.chips_per_rank),
        ("banks_per_chip", cfg.banks_per_chip),
        ("subarrays_per_bank", cfg.subarrays_per_bank),
        ("rows_per_subarray", cfg.rows_per_subarray),
        ("row_size_bytes", cfg.row_size_bytes),
        ("bus_segments_per_bank", cfg.bus_segments_per_bank),
    ];
    for (field, value) in counts {
        if value == 0 {
            return Err(ConfigError::ZeroCount { field });
        }
    }
    if cfg.shared_rows_per_subarray == 0 {
        return Err(ConfigError::NoSharedRows);
    }
    if cfg.shared_rows_per_subarray >= cfg.rows_per_subarray {
        return Err(ConfigError::TooManySharedRows {
            shared: cfg.shared_rows_per_subarray,
            rows: cfg.rows_per_subarray,
        });
    }
    if cfg.bus_segments_per_bank > cfg.subarrays_per_bank {
        return Err(ConfigError::TooManySegments {
            segments: cfg.bus_segments_per_bank,
            subarrays: cfg.subarrays_per_bank,
        });
    }
    let total_banks = cfg.channels * cfg.ranks * cfg.chips_per_rank * cfg.banks_per_chip;
    Ok(Geometry { config: cfg.clone(), total_banks, total_subarrays: total_banks * cfg.subarrays_per_bank })
}

impl Geometry {
    pub fn config(&self) -> &FabricConfig {
        &self.config
    }

    pub fn total_banks(&self) -> usize {
        self.total_banks
    }

    pub fn total_subarrays(&self) -> usize {
        self.total_subarrays
    }

    pub fn subarrays_per_bank(&self) -> usize {
        self.config.subarrays_per_bank
    }

    pub fn shared_rows(&self) -> usize {
        self.config.shared_rows_per_subarray
    }

    pub fn bus_segments(&self) -> usize {
        self.config.bus_segments_per_bank
    }

    pub fn total_rows(&self) -> usize {
        self.total_subarrays * self.config.rows_per_subarray
    }

    /// Subarray distance inside one bank.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        a.abs_diff(b)
    }

    /// Bus segment serving `subarray`. Segments cover contiguous runs of
    /// `subarrays / segments` subarrays; the last one absorbs the remainder.
    pub fn segment_of(&self, subarray: usize) -> usize {
        let per = self.config.subarrays_per_bank / self.config.bus_segments_per_bank;
        (subarray / per).min(self.config.bus_segments_per_bank - 1)
    }

    /// Row index of shared slot `slot`; shared rows sit at the top of the subarray.
    pub fn shared_row_index(&self, slot: usize) -> usize {
        self.config.rows_per_subarray - self.config.shared_rows_per_subarray + slot
    }

    /// Slot number if `row` is one of the shared rows.
    pub fn shared_slot_of(&self, row: usize) -> Option<usize> {
        let first = self.config.rows_per_subarray - self.config.shared_rows_per_subarray;
        (first..self.config.rows_per_subarray).contains(&row).then(|| row - first)
    }

    pub fn shared_address(&self, bank: usize, subarray: usize, slot: usize, kind: RowKind) -> RowAddress {
        RowAddress { bank, subarray, row: self.shared_row_index(slot), kind }
    }

    pub fn check_address(&self, addr: &RowAddress) -> Result<(), AddressError> {
        let in_range = addr.bank < self.total_banks
            && addr.subarray < self.config.subarrays_per_bank
            && addr.row < self.config.rows_per_subarray;
        let kind_ok = match addr.kind {
            RowKind::Regular => true,
            RowKind::SharedLocal | RowKind::SharedGlobal => self.shared_slot_of(addr.row).is_some(),
        };
        if in_range && kind_ok {
            Ok(())
        } else {
            Err(AddressError::Invalid(*addr))
        }
    }

    /// Row-major decode of a flat row index. Shared rows decode to their
    /// local-wordline address.
    pub fn decode_address(&self, flat: usize) -> Result<RowAddress, AddressError> {
        let total = self.total_rows();
        if flat >= total {
            return Err(AddressError::OutOfRange { index: flat, total });
        }
        let rows = self.config.rows_per_subarray;
        let subs = self.config.subarrays_per_bank;
        let row = flat % rows;
        let subarray = (flat / rows) % subs;
        let bank = flat / (rows * subs);
        let kind = if self.shared_slot_of(row).is_some() { RowKind::SharedLocal } else { RowKind::Regular };
        Ok(RowAddress { bank, subarray, row, kind })
    }

    /// Inverse of [`Geometry::decode_address`]; both addresses of a shared
    /// row encode to the same storage index.
    pub fn encode_address(&self, addr: &RowAddress) -> Result<usize, AddressError> {
        self.check_address(addr)?;
        let rows = self.config.rows_per_subarray;
        let subs = self.config.subarrays_per_bank;
        Ok((addr.bank * subs + addr.subarray) * rows + addr.row)
    }

    /// Same geometry with the bank widened to `subarrays` subarrays.
    pub fn widened(&self, subarrays: usize) -> Geometry {
        let mut cfg = self.config.clone();
        cfg.subarrays_per_bank = subarrays.max(cfg.subarrays_per_bank);
        let total_banks = self.total_banks;
        Geometry { total_subarrays: total_banks * cfg.subarrays_per_bank, config: cfg, total_banks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Geometry {
        validate_config(&FabricConfig {
            channels: 1,
            ranks: 1,
            chips_per_rank: 1,
            banks_per_chip: 2,
            subarrays_per_bank: 4,
            rows_per_subarray: 8,
            row_size_bytes: 64,
            shared_rows_per_subarray: 2,
            bus_segments_per_bank: 2,
            timing_grade: TimingGrade::Ddr3_1600_11,
        })
        .unwrap()
    }

    #[test]
    fn default_config_has_256_subarrays() {
        let g = validate_config(&FabricConfig::default()).unwrap();
        assert_eq!(g.total_subarrays(), 256);
        assert_eq!(g.total_banks(), 16);
    }

    #[test]
    fn zero_shared_rows_rejected() {
        let cfg = FabricConfig { shared_rows_per_subarray: 0, ..Default::default() };
        assert_eq!(validate_config(&cfg), Err(ConfigError::NoSharedRows));
    }

    #[test]
    fn zero_counts_rejected() {
        let cfg = FabricConfig { bus_segments_per_bank: 0, ..Default::default() };
        assert!(matches!(validate_config(&cfg), Err(ConfigError::ZeroCount { field: "bus_segments_per_bank" })));
        let cfg = FabricConfig { chips_per_rank: 0, ..Default::default() };
        assert!(matches!(validate_config(&cfg), Err(ConfigError::ZeroCount { .. })));
        let cfg = FabricConfig { rows_per_subarray: 2, ..Default::default() };
        assert!(matches!(validate_config(&cfg), Err(ConfigError::TooManySharedRows { .. })));
    }

    #[test]
    fn minimal_two_subarray_config() {
        let g = validate_config(&FabricConfig {
            channels: 1,
            ranks: 1,
            chips_per_rank: 1,
            banks_per_chip: 1,
            subarrays_per_bank: 2,
            rows_per_subarray: 4,
            row_size_bytes: 8,
            shared_rows_per_subarray: 1,
            bus_segments_per_bank: 1,
            timing_grade: TimingGrade::Ddr3_1600_11,
        })
        .unwrap();
        assert_eq!(g.total_subarrays(), 2);
        assert_eq!(g.distance(0, 1), 1);
        assert_eq!(g.distance(1, 1), 0);
    }

    #[test]
    fn decode_boundaries() {
        let g = validate_config(&FabricConfig::default()).unwrap();
        assert_eq!(g.decode_address(0).unwrap(), RowAddress::regular(0, 0, 0));
        assert_eq!(g.decode_address(512).unwrap(), RowAddress::regular(0, 1, 0));
        let last = g.decode_address(g.total_rows() - 1).unwrap();
        assert_eq!(last.kind, RowKind::SharedLocal);
        assert!(matches!(g.decode_address(g.total_rows()), Err(AddressError::OutOfRange { .. })));
    }

    #[test]
    fn exhaustive_round_trip_small_geometry() {
        let g = small();
        assert_eq!(g.total_rows(), 2 * 4 * 8);
        for flat in 0..g.total_rows() {
            let addr = g.decode_address(flat).unwrap();
            assert_eq!(g.encode_address(&addr).unwrap(), flat);
        }
    }

    #[test]
    fn shared_row_has_two_addresses_for_one_storage() {
        let g = small();
        let local = g.shared_address(1, 2, 0, RowKind::SharedLocal);
        let global = g.shared_address(1, 2, 0, RowKind::SharedGlobal);
        assert!(local.same_storage(&global));
        assert_eq!(g.encode_address(&local).unwrap(), g.encode_address(&global).unwrap());
        let bad = RowAddress { kind: RowKind::SharedGlobal, ..RowAddress::regular(0, 0, 0) };
        assert!(g.check_address(&bad).is_err());
    }

    #[test]
    fn segment_map_partitions_subarrays() {
        let g = validate_config(&FabricConfig::default()).unwrap();
        let mut counts = vec![0; g.bus_segments()];
        for sa in 0..g.subarrays_per_bank() {
            counts[g.segment_of(sa)] += 1;
        }
        assert_eq!(counts, vec![4, 4, 4, 4]);

        let g =
            validate_config(&FabricConfig { subarrays_per_bank: 10, bus_segments_per_bank: 4, ..Default::default() })
                .unwrap();
        let segs: Vec<_> = (0..10).map(|s| g.segment_of(s)).collect();
        assert_eq!(segs, vec![0, 0, 1, 1, 2, 2, 3, 3, 3, 3]);
    }
}
