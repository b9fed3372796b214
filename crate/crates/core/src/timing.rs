//! Command timing parameters and command-sequence legality.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{RowAddress, RowKind, TimingGrade};
use crate::TIME_EPS_NS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub t_ck_ns: f64,
    pub t_rcd_ns: f64,
    pub t_rp_ns: f64,
    pub t_ras_ns: f64,
    /// Delay between the two overlapped ACTIVATEs of an AAP copy.
    pub aap_offset_ns: f64,
}

impl TimingParams {
    pub fn preset(grade: TimingGrade) -> Self {
        match grade {
            // 11-11-11 at tCK = 1.25 ns
            TimingGrade::Ddr3_1600_11 => {
                TimingParams { t_ck_ns: 1.25, t_rcd_ns: 13.75, t_rp_ns: 13.75, t_ras_ns: 35.0, aap_offset_ns: 4.0 }
            }
            // 17-17-17 at tCK = 0.833 ns
            TimingGrade::Ddr4_2400T_17 => {
                TimingParams { t_ck_ns: 0.833, t_rcd_ns: 14.17, t_rp_ns: 14.17, t_ras_ns: 32.0, aap_offset_ns: 4.0 }
            }
        }
    }

    /// Row cycle, always `t_ras + t_rp`.
    pub fn t_rc_ns(&self) -> f64 {
        self.t_ras_ns + self.t_rp_ns
    }
}

impl Default for TimingParams {
    fn default() -> Self {
        TimingParams::preset(TimingGrade::Ddr3_1600_11)
    }
}

/// Latency of an ACTIVATE-ACTIVATE-PRECHARGE copy: the second ACTIVATE
/// trails the first by `aap_offset`, the PRECHARGE closes both rows.
pub fn aap_latency(t: &TimingParams) -> f64 {
    t.aap_offset_ns + t.t_ras_ns + t.t_rp_ns
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    Activate,
    Precharge,
    GwlActivate,
    Rbm,
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CommandTarget {
    Row(RowAddress),
    /// Local sense amplifiers of one subarray (PRECHARGE).
    Subarray {
        bank: usize,
        subarray: usize,
    },
    /// Bank-level bus (PRECHARGE of the bank sense amplifiers).
    Bus {
        bank: usize,
    },
    /// Row-buffer movement between linked subarrays.
    SubarrayPair {
        bank: usize,
        from: usize,
        to: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub kind: CommandKind,
    pub target: CommandTarget,
    pub issue_time_ns: f64,
}

impl Command {
    pub fn new(kind: CommandKind, target: CommandTarget, issue_time_ns: f64) -> Self {
        Command { kind, target, issue_time_ns }
    }

    pub fn activate(row: RowAddress, at: f64) -> Self {
        Command::new(CommandKind::Activate, CommandTarget::Row(row), at)
    }

    pub fn gwl_activate(row: RowAddress, at: f64) -> Self {
        Command::new(CommandKind::GwlActivate, CommandTarget::Row(row), at)
    }

    pub fn precharge_local(bank: usize, subarray: usize, at: f64) -> Self {
        Command::new(CommandKind::Precharge, CommandTarget::Subarray { bank, subarray }, at)
    }

    pub fn precharge_bus(bank: usize, at: f64) -> Self {
        Command::new(CommandKind::Precharge, CommandTarget::Bus { bank }, at)
    }

    /// Shift every issue time by `offset`.
    pub fn shifted(mut self, offset: f64) -> Self {
        self.issue_time_ns += offset;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TimingRule {
    /// Commands not sorted by issue time, or negative issue time.
    Ordering,
    /// Target not valid for the command kind.
    Target,
    /// ACTIVATE to an already-open row pair without an intervening PRECHARGE.
    DoubleActivate,
    /// Overlapped ACTIVATE closer than the AAP offset.
    AapOffset,
    /// PRECHARGE before tRAS elapsed.
    Tras,
    /// ACTIVATE before tRC elapsed since the previous ACTIVATE.
    Trc,
    /// ACTIVATE before tRP elapsed since PRECHARGE.
    Trp,
    /// Column or RBM command before tRCD, or to a closed subarray.
    Trcd,
}

impl fmt::Display for TimingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("command {index} violates {rule}")]
pub struct Violation {
    pub index: usize,
    pub rule: TimingRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Domain {
    Local { bank: usize, subarray: usize },
    Bus { bank: usize },
}

#[derive(Debug, Default)]
struct DomainState {
    open_rows: Vec<usize>,
    first_act: Option<f64>,
    last_act: Option<f64>,
    /// Issue time of the overlapped second ACTIVATE group, if any.
    second_group: Option<f64>,
    last_pre: Option<f64>,
}

fn lt(a: f64, b: f64) -> bool {
    a < b - TIME_EPS_NS
}

/// Check an issue-ordered command list against tRCD/tRAS/tRP/tRC and the AAP
/// overlap rule. Local wordline activations and GWL activations are tracked as
/// separate bitline domains (local sense amplifiers vs. bank sense amplifiers).
pub fn check_sequence_legal(cmds: &[Command], t: &TimingParams) -> Result<(), Violation> {
    let mut domains: HashMap<Domain, DomainState> = HashMap::new();
    // Subarrays whose sense amplifiers hold a buffer latched by an RBM.
    let mut latched: HashMap<(usize, usize), f64> = HashMap::new();
    let mut prev_time = 0.0_f64;
    for (index, cmd) in cmds.iter().enumerate() {
        let err = |rule| Err(Violation { index, rule });
        let now = cmd.issue_time_ns;
        if now < -TIME_EPS_NS || lt(now, prev_time) {
            return err(TimingRule::Ordering);
        }
        prev_time = now;
        match (cmd.kind, &cmd.target) {
            (CommandKind::Activate, CommandTarget::Row(row)) | (CommandKind::GwlActivate, CommandTarget::Row(row)) => {
                let domain = if cmd.kind == CommandKind::Activate {
                    if row.kind == RowKind::SharedGlobal {
                        return err(TimingRule::Target);
                    }
                    Domain::Local { bank: row.bank, subarray: row.subarray }
                } else {
                    if row.kind != RowKind::SharedGlobal {
                        return err(TimingRule::Target);
                    }
                    Domain::Bus { bank: row.bank }
                };
                let key = row.subarray * 1_000_003 + row.row;
                let st = domains.entry(domain).or_default();
                if st.open_rows.contains(&key) {
                    return err(TimingRule::DoubleActivate);
                }
                match st.first_act {
                    None => {
                        if let Some(pre) = st.last_pre {
                            if lt(now - pre, t.t_rp_ns) {
                                return err(TimingRule::Trp);
                            }
                        }
                        if let Some(prev) = st.last_act {
                            if lt(now - prev, t.t_rc_ns()) {
                                return err(TimingRule::Trc);
                            }
                        }
                        st.first_act = Some(now);
                    }
                    Some(first) => match st.second_group {
                        None => {
                            if lt(now - first, t.aap_offset_ns) {
                                return err(TimingRule::AapOffset);
                            }
                            st.second_group = Some(now);
                        }
                        // Several GWL destinations may open together (broadcast).
                        Some(group) if cmd.kind == CommandKind::GwlActivate && (now - group).abs() <= TIME_EPS_NS => {}
                        Some(_) => return err(TimingRule::DoubleActivate),
                    },
                }
                st.open_rows.push(key);
                st.last_act = Some(now);
            }
            (CommandKind::Precharge, CommandTarget::Subarray { bank, subarray }) => {
                let st = domains.entry(Domain::Local { bank: *bank, subarray: *subarray }).or_default();
                precharge(st, now, t).map_err(|rule| Violation { index, rule })?;
            }
            (CommandKind::Precharge, CommandTarget::Bus { bank }) => {
                let st = domains.entry(Domain::Bus { bank: *bank }).or_default();
                precharge(st, now, t).map_err(|rule| Violation { index, rule })?;
            }
            (CommandKind::Read | CommandKind::Write, CommandTarget::Row(row)) => {
                let st = domains.entry(Domain::Local { bank: row.bank, subarray: row.subarray }).or_default();
                match st.first_act {
                    Some(act) if !lt(now - act, t.t_rcd_ns) => {}
                    _ => return err(TimingRule::Trcd),
                }
            }
            (CommandKind::Rbm, CommandTarget::SubarrayPair { bank, from, to }) => {
                if from.abs_diff(*to) != 1 {
                    return err(TimingRule::Target);
                }
                let sensed = domains
                    .get(&Domain::Local { bank: *bank, subarray: *from })
                    .and_then(|st| st.first_act)
                    .is_some_and(|act| !lt(now - act, t.t_rcd_ns));
                let relayed = latched.get(&(*bank, *from)).is_some_and(|&at| !lt(now, at));
                if !(sensed || relayed) {
                    return err(TimingRule::Trcd);
                }
                latched.insert((*bank, *to), now);
            }
            _ => return err(TimingRule::Target),
        }
    }
    Ok(())
}

fn precharge(st: &mut DomainState, now: f64, t: &TimingParams) -> Result<(), TimingRule> {
    if let Some(last) = st.last_act {
        if st.first_act.is_some() && lt(now - last, t.t_ras_ns) {
            return Err(TimingRule::Tras);
        }
    }
    st.open_rows.clear();
    st.first_act = None;
    st.second_group = None;
    st.last_pre = Some(now);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ddr3() -> TimingParams {
        TimingParams::default()
    }

    #[test]
    fn aap_latency_ddr3() {
        // oracle: offset + tRAS + tRP
        assert!((aap_latency(&ddr3()) - (4.0 + 35.0 + 13.75)).abs() < 1e-12);
        assert!((aap_latency(&ddr3()) - 52.75).abs() < 1e-12);
    }

    #[test]
    fn aap_without_offset_is_one_row_cycle() {
        let t = TimingParams { aap_offset_ns: 0.0, ..ddr3() };
        assert!((aap_latency(&t) - t.t_rc_ns()).abs() < 1e-12);
    }

    #[test]
    fn aap_linear_in_trp() {
        let t = ddr3();
        let t2 = TimingParams { t_rp_ns: 2.0 * t.t_rp_ns, ..t };
        assert!((aap_latency(&t2) - aap_latency(&t) - t.t_rp_ns).abs() < 1e-12);
    }

    #[test]
    fn presets_respect_row_cycle() {
        for grade in [TimingGrade::Ddr3_1600_11, TimingGrade::Ddr4_2400T_17] {
            let t = TimingParams::preset(grade);
            assert!((t.t_rc_ns() - (t.t_ras_ns + t.t_rp_ns)).abs() < 1e-12);
            assert!(t.aap_offset_ns > 0.0);
        }
        assert!((TimingParams::preset(TimingGrade::Ddr3_1600_11).t_rcd_ns - 11.0 * 1.25).abs() < 1e-12);
    }

    fn row(r: usize) -> RowAddress {
        RowAddress::regular(0, 0, r)
    }

    #[test]
    fn act_pre_act_is_legal() {
        let cmds = vec![
            Command::activate(row(1), 0.0),
            Command::precharge_local(0, 0, 35.0),
            Command::activate(row(1), 48.75),
        ];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()), Ok(()));
    }

    #[test]
    fn early_precharge_violates_tras() {
        let cmds = vec![Command::activate(row(1), 0.0), Command::precharge_local(0, 0, 10.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()), Err(Violation { index: 1, rule: TimingRule::Tras }));
    }

    #[test]
    fn aap_pattern_is_legal() {
        let cmds =
            vec![Command::activate(row(1), 0.0), Command::activate(row(2), 4.0), Command::precharge_local(0, 0, 39.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()), Ok(()));
    }

    #[test]
    fn overlap_closer_than_offset_rejected() {
        let cmds = vec![Command::activate(row(1), 0.0), Command::activate(row(2), 2.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::AapOffset);
    }

    #[test]
    fn third_activation_rejected() {
        let cmds = vec![Command::activate(row(1), 0.0), Command::activate(row(2), 4.0), Command::activate(row(3), 8.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::DoubleActivate);
        let same = vec![Command::activate(row(1), 0.0), Command::activate(row(1), 10.0)];
        assert_eq!(check_sequence_legal(&same, &ddr3()).unwrap_err().rule, TimingRule::DoubleActivate);
    }

    #[test]
    fn reactivate_needs_trp_and_trc() {
        let cmds =
            vec![Command::activate(row(1), 0.0), Command::precharge_local(0, 0, 35.0), Command::activate(row(1), 45.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::Trp);
        let cmds =
            vec![Command::activate(row(1), 0.0), Command::precharge_local(0, 0, 35.0), Command::activate(row(1), 48.0)];
        assert!(check_sequence_legal(&cmds, &ddr3()).is_err());
    }

    #[test]
    fn unsorted_and_bad_targets() {
        let cmds = vec![Command::activate(row(1), 5.0), Command::activate(row(2), 1.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::Ordering);
        let cmds = vec![Command::gwl_activate(row(1), 0.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::Target);
        let rbm = |from, to, at| Command::new(CommandKind::Rbm, CommandTarget::SubarrayPair { bank: 0, from, to }, at);
        let cmds = vec![Command::activate(row(1), 0.0), rbm(0, 1, 5.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::Trcd);
        let cmds = vec![Command::activate(row(1), 0.0), rbm(0, 2, 20.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()).unwrap_err().rule, TimingRule::Target);
        let cmds = vec![Command::activate(row(1), 0.0), rbm(0, 1, 14.0), rbm(1, 2, 15.0)];
        assert_eq!(check_sequence_legal(&cmds, &ddr3()), Ok(()));
        let read = vec![Command::new(CommandKind::Read, CommandTarget::Row(row(1)), 0.0)];
        assert_eq!(check_sequence_legal(&read, &ddr3()).unwrap_err().rule, TimingRule::Trcd);
    }

    #[test]
    fn broadcast_gwl_group_is_legal() {
        let gwl = |sa| RowAddress { bank: 0, subarray: sa, row: 511, kind: RowKind::SharedGlobal };
        let mut cmds = vec![Command::gwl_activate(gwl(0), 0.0)];
        for sa in 1..=4 {
            cmds.push(Command::gwl_activate(gwl(sa), 4.0));
        }
        cmds.push(Command::precharge_bus(0, 39.0));
        assert_eq!(check_sequence_legal(&cmds, &ddr3()), Ok(()));
    }
}
