//! Latency, occupancy and command sequences of the inter-subarray copy mechanisms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{Geometry, RowAddress, RowKind};
use crate::timing::{aap_latency, Command, CommandKind, CommandTarget, TimingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mechanism {
    MemcpyChannel,
    RowcloneIntraSA,
    RowcloneInterSA,
    LisaRisc,
    SharedPimBus,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [
        Mechanism::MemcpyChannel,
        Mechanism::RowcloneIntraSA,
        Mechanism::RowcloneInterSA,
        Mechanism::LisaRisc,
        Mechanism::SharedPimBus,
    ];

    /// Mechanisms usable as a scheduler platform (inter-subarray capable).
    pub const PLATFORM: [Mechanism; 4] =
        [Mechanism::MemcpyChannel, Mechanism::RowcloneInterSA, Mechanism::LisaRisc, Mechanism::SharedPimBus];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::MemcpyChannel => "memcpy",
            Mechanism::RowcloneIntraSA => "rc-intra",
            Mechanism::RowcloneInterSA => "rc-inter",
            Mechanism::LisaRisc => "lisa",
            Mechanism::SharedPimBus => "sharedpim",
        }
    }

    /// Whether the copy keeps its endpoint subarrays from computing.
    pub fn blocks_compute(self) -> bool {
        self != Mechanism::SharedPimBus
    }

    pub fn is_bank_local(self) -> bool {
        matches!(self, Mechanism::RowcloneIntraSA | Mechanism::LisaRisc | Mechanism::SharedPimBus)
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mechanism `{0}`")]
pub struct UnknownMechanism(pub String);

impl FromStr for Mechanism {
    type Err = UnknownMechanism;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.trim().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "memcpy" | "memcpychannel" | "channel" => Ok(Mechanism::MemcpyChannel),
            "rcintra" | "rowcloneintrasa" | "rowcloneintra" => Ok(Mechanism::RowcloneIntraSA),
            "rcinter" | "rowcloneintersa" | "rowcloneinter" | "rowclone" | "rc" => Ok(Mechanism::RowcloneInterSA),
            "lisa" | "lisarisc" => Ok(Mechanism::LisaRisc),
            "sharedpim" | "sharedpimbus" | "sp" | "bus" => Ok(Mechanism::SharedPimBus),
            _ => Err(UnknownMechanism(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    pub memcpy_ns: f64,
    pub rc_inter_ns: f64,
    pub lisa_base_ns: f64,
    pub lisa_extra_hop_ns: f64,
    pub broadcast_limit: usize,
}

impl Default for MechanismParams {
    fn default() -> Self {
        MechanismParams {
            memcpy_ns: 1366.25,
            rc_inter_ns: 1363.75,
            lisa_base_ns: 260.5,
            lisa_extra_hop_ns: 9.0,
            broadcast_limit: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyRequest {
    pub mechanism: Mechanism,
    pub src: RowAddress,
    pub dsts: Vec<RowAddress>,
    /// Data already sits in the source shared row.
    pub staged: bool,
}

impl CopyRequest {
    pub fn new(mechanism: Mechanism, src: RowAddress, dst: RowAddress) -> Self {
        CopyRequest { mechanism, src, dsts: vec![dst], staged: true }
    }

    pub fn unstaged(mut self) -> Self {
        self.staged = false;
        self
    }

    /// Largest subarray distance between the source and any destination.
    pub fn distance(&self) -> usize {
        self.dsts.iter().map(|d| d.subarray.abs_diff(self.src.subarray)).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransferError {
    #[error("{mechanism} cannot copy across banks ({src} -> {dst})")]
    CrossBank { mechanism: Mechanism, src: RowAddress, dst: RowAddress },
    #[error("broadcast needs staged shared-row endpoints")]
    UnstagedBroadcast,
    #[error("broadcast to {requested} destinations exceeds the limit of {limit}")]
    BroadcastLimit { requested: usize, limit: usize },
    #[error("{0} copies to exactly one destination")]
    SingleDestination(Mechanism),
    #[error("copy request has no destination")]
    NoDestination,
    #[error("{0} is not a shared row")]
    NotShared(RowAddress),
    #[error("the geometry has no shared rows for the bank bus")]
    NoSharedRows,
}

/// How a shared row is being reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotAccess {
    Local,
    Global,
}

/// Resources a transaction holds for `duration_ns`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceClaim {
    pub bank: usize,
    /// Subarrays whose local sense amplifiers are blocked by a transfer.
    pub stalled_subarrays: BTreeSet<usize>,
    /// Subarrays doing useful local work (compute, stage/unstage copies).
    pub active_subarrays: BTreeSet<usize>,
    pub busy_bus_segments: BTreeSet<usize>,
    pub busy_shared_rows: BTreeMap<(usize, usize), SlotAccess>,
    pub uses_channel: bool,
    pub duration_ns: f64,
    pub blocks_compute_at_endpoints: bool,
}

impl ResourceClaim {
    pub fn compute(bank: usize, subarray: usize, duration_ns: f64) -> Self {
        ResourceClaim { bank, active_subarrays: BTreeSet::from([subarray]), duration_ns, ..Default::default() }
    }

    pub fn with_slot(mut self, subarray: usize, slot: usize, access: SlotAccess) -> Self {
        self.busy_shared_rows.insert((subarray, slot), access);
        self
    }

    /// Union of two claims; the longer duration wins.
    pub fn merged(mut self, other: &ResourceClaim) -> Self {
        self.stalled_subarrays.extend(&other.stalled_subarrays);
        self.active_subarrays.extend(&other.active_subarrays);
        self.busy_bus_segments.extend(&other.busy_bus_segments);
        for (k, v) in &other.busy_shared_rows {
            self.busy_shared_rows.entry(*k).or_insert(*v);
        }
        self.uses_channel |= other.uses_channel;
        self.duration_ns = self.duration_ns.max(other.duration_ns);
        self.blocks_compute_at_endpoints |= other.blocks_compute_at_endpoints;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.stalled_subarrays.is_empty()
            && self.active_subarrays.is_empty()
            && self.busy_bus_segments.is_empty()
            && self.busy_shared_rows.is_empty()
            && !self.uses_channel
    }
}

/// One step of a possibly multi-transaction copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    /// Local row into the source shared row.
    Stage,
    /// The copy proper (bus AAP, LISA hop chain, channel transfer, ...).
    Transfer,
    /// Destination shared row into a local row.
    Unstage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyStep {
    pub kind: StepKind,
    /// Offset from the start of the copy.
    pub offset_ns: f64,
    pub claim: ResourceClaim,
}

/// Slot a subarray transmits from and the one it receives into.
pub fn tx_slot(_g: &Geometry) -> usize {
    0
}

pub fn rx_slot(g: &Geometry) -> usize {
    g.shared_rows().saturating_sub(1)
}

fn validate(req: &CopyRequest, m: &MechanismParams) -> Result<(), TransferError> {
    if req.dsts.is_empty() {
        return Err(TransferError::NoDestination);
    }
    if req.mechanism != Mechanism::SharedPimBus && req.dsts.len() != 1 {
        return Err(TransferError::SingleDestination(req.mechanism));
    }
    if req.mechanism == Mechanism::SharedPimBus && req.dsts.len() > m.broadcast_limit {
        return Err(TransferError::BroadcastLimit { requested: req.dsts.len(), limit: m.broadcast_limit });
    }
    if req.mechanism.is_bank_local() {
        if let Some(dst) = req.dsts.iter().find(|d| d.bank != req.src.bank) {
            return Err(TransferError::CrossBank { mechanism: req.mechanism, src: req.src, dst: *dst });
        }
    }
    if req.mechanism == Mechanism::SharedPimBus && !req.staged && req.dsts.len() > 1 {
        return Err(TransferError::UnstagedBroadcast);
    }
    Ok(())
}

/// LISA hop-chain latency for a given distance; zero distance falls back
/// to an in-subarray AAP.
pub fn lisa_latency(distance: usize, t: &TimingParams, m: &MechanismParams) -> f64 {
    if distance == 0 {
        aap_latency(t)
    } else {
        m.lisa_base_ns + (distance - 1) as f64 * m.lisa_extra_hop_ns
    }
}

pub fn copy_latency(
    req: &CopyRequest,
    _g: &Geometry,
    t: &TimingParams,
    m: &MechanismParams,
) -> Result<f64, TransferError> {
    validate(req, m)?;
    Ok(match req.mechanism {
        Mechanism::MemcpyChannel => m.memcpy_ns,
        Mechanism::RowcloneInterSA => m.rc_inter_ns,
        Mechanism::RowcloneIntraSA => aap_latency(t),
        Mechanism::LisaRisc => lisa_latency(req.distance(), t, m),
        Mechanism::SharedPimBus if req.staged => aap_latency(t),
        Mechanism::SharedPimBus => 3.0 * aap_latency(t),
    })
}

fn slot_of(g: &Geometry, addr: &RowAddress, default: usize) -> usize {
    if addr.is_shared() {
        g.shared_slot_of(addr.row).unwrap_or(default)
    } else {
        default
    }
}

/// Decomposition into single transactions. Only unstaged bus copies have
/// more than one step.
pub fn copy_steps(
    req: &CopyRequest,
    g: &Geometry,
    t: &TimingParams,
    m: &MechanismParams,
) -> Result<Vec<CopyStep>, TransferError> {
    validate(req, m)?;
    let bank = req.src.bank;
    let aap = aap_latency(t);
    let mut claim = ResourceClaim { bank, ..Default::default() };
    let src = req.src.subarray;
    let dst = req.dsts[0].subarray;
    match req.mechanism {
        Mechanism::MemcpyChannel | Mechanism::RowcloneInterSA => {
            claim.stalled_subarrays = BTreeSet::from([src, dst]);
            claim.uses_channel = true;
            claim.blocks_compute_at_endpoints = true;
            claim.duration_ns = copy_latency(req, g, t, m)?;
        }
        Mechanism::RowcloneIntraSA => {
            claim.stalled_subarrays = BTreeSet::from([src]);
            claim.blocks_compute_at_endpoints = true;
            claim.duration_ns = aap;
        }
        Mechanism::LisaRisc => {
            claim.stalled_subarrays = (src.min(dst)..=src.max(dst)).collect();
            claim.blocks_compute_at_endpoints = true;
            claim.duration_ns = lisa_latency(req.distance(), t, m);
        }
        Mechanism::SharedPimBus => {
            if g.shared_rows() == 0 {
                return Err(TransferError::NoSharedRows);
            }
            let tx = slot_of(g, &req.src, tx_slot(g));
            claim.busy_bus_segments = (0..g.bus_segments()).collect();
            claim.busy_shared_rows.insert((src, tx), SlotAccess::Global);
            for d in &req.dsts {
                let rx = slot_of(g, d, rx_slot(g));
                claim.busy_shared_rows.entry((d.subarray, rx)).or_insert(SlotAccess::Global);
            }
            claim.duration_ns = aap;
            if !req.staged {
                let rx = slot_of(g, &req.dsts[0], rx_slot(g));
                let stage = ResourceClaim { bank, duration_ns: aap, ..Default::default() }.with_slot(
                    src,
                    tx,
                    SlotAccess::Local,
                );
                let mut stage = stage;
                stage.active_subarrays.insert(src);
                let mut unstage = ResourceClaim { bank, duration_ns: aap, ..Default::default() }.with_slot(
                    dst,
                    rx,
                    SlotAccess::Local,
                );
                unstage.active_subarrays.insert(dst);
                return Ok(vec![
                    CopyStep { kind: StepKind::Stage, offset_ns: 0.0, claim: stage },
                    CopyStep { kind: StepKind::Transfer, offset_ns: aap, claim },
                    CopyStep { kind: StepKind::Unstage, offset_ns: 2.0 * aap, claim: unstage },
                ]);
            }
        }
    }
    Ok(vec![CopyStep { kind: StepKind::Transfer, offset_ns: 0.0, claim }])
}

/// Everything the copy touches, folded into a single claim over its full duration.
pub fn occupancy(
    req: &CopyRequest,
    g: &Geometry,
    t: &TimingParams,
    m: &MechanismParams,
) -> Result<ResourceClaim, TransferError> {
    let steps = copy_steps(req, g, t, m)?;
    let total = steps.iter().map(|s| s.offset_ns + s.claim.duration_ns).fold(0.0, f64::max);
    let mut out = ResourceClaim { bank: req.src.bank, ..Default::default() };
    for s in &steps {
        out = out.merged(&s.claim);
    }
    // A shared row reached both ways across steps is reported by its global use.
    for s in &steps {
        for (k, v) in &s.claim.busy_shared_rows {
            if *v == SlotAccess::Global {
                out.busy_shared_rows.insert(*k, *v);
            }
        }
    }
    out.duration_ns = total;
    Ok(out)
}

/// One bus transaction from a staged source to up to `broadcast_limit` shared rows.
pub fn broadcast_claim(
    src: RowAddress,
    dsts: &[RowAddress],
    g: &Geometry,
    t: &TimingParams,
    m: &MechanismParams,
) -> Result<(f64, ResourceClaim), TransferError> {
    if dsts.len() > m.broadcast_limit {
        return Err(TransferError::BroadcastLimit { requested: dsts.len(), limit: m.broadcast_limit });
    }
    for a in std::iter::once(&src).chain(dsts) {
        if !a.is_shared() || g.shared_slot_of(a.row).is_none() {
            return Err(TransferError::NotShared(*a));
        }
    }
    let req = CopyRequest { mechanism: Mechanism::SharedPimBus, src, dsts: dsts.to_vec(), staged: true };
    let claim = occupancy(&req, g, t, m)?;
    Ok((claim.duration_ns, claim))
}

/// DRAM commands realising the copy, with issue times relative to its start.
pub fn command_sequence(
    req: &CopyRequest,
    g: &Geometry,
    t: &TimingParams,
    m: &MechanismParams,
) -> Result<Vec<Command>, TransferError> {
    let latency = copy_latency(req, g, t, m)?;
    let bank = req.src.bank;
    let src = req.src;
    let dst = req.dsts[0];
    let aap = aap_latency(t);
    // Regular row used as the local end of stage/unstage and AAP copies.
    let local = |sa: usize, row: usize| RowAddress::regular(bank, sa, row);
    let shared = |a: &RowAddress, kind: RowKind, default: usize| {
        g.shared_address(bank, a.subarray, slot_of(g, a, default), kind)
    };
    let in_sa_aap = |from: RowAddress, to: RowAddress, at: f64| {
        vec![
            Command::activate(from, at),
            Command::activate(to, at + t.aap_offset_ns),
            Command::precharge_local(bank, from.subarray, at + aap - t.t_rp_ns),
        ]
    };
    let second_row = |a: &RowAddress| {
        let r = if a.row == 0 { 1 } else { 0 };
        local(a.subarray, r)
    };
    let cmds = match req.mechanism {
        Mechanism::RowcloneIntraSA => {
            let to = if dst.row == src.row { second_row(&src) } else { local(src.subarray, dst.row) };
            in_sa_aap(local(src.subarray, src.row), to, 0.0)
        }
        Mechanism::LisaRisc if src.subarray == dst.subarray => {
            in_sa_aap(local(src.subarray, src.row), second_row(&src), 0.0)
        }
        Mechanism::LisaRisc => {
            let d = req.distance();
            let step: isize = if dst.subarray > src.subarray { 1 } else { -1 };
            let open_dst = latency - t.t_rp_ns - t.t_ras_ns;
            let window = open_dst - t.t_rcd_ns;
            let spacing = window / (2 * d) as f64;
            let mut cmds = vec![Command::activate(local(src.subarray, src.row), 0.0)];
            // two half-row passes, each relayed hop by hop
            for half in 0..2 {
                let mut from = src.subarray;
                for h in 0..d {
                    let to = (from as isize + step) as usize;
                    let at = t.t_rcd_ns + (half * d + h) as f64 * spacing;
                    cmds.push(Command::new(CommandKind::Rbm, CommandTarget::SubarrayPair { bank, from, to }, at));
                    from = to;
                }
            }
            cmds.push(Command::activate(local(dst.subarray, dst.row), open_dst));
            cmds.push(Command::precharge_local(bank, src.subarray, latency - t.t_rp_ns));
            cmds.push(Command::precharge_local(bank, dst.subarray, latency - t.t_rp_ns));
            cmds
        }
        Mechanism::MemcpyChannel | Mechanism::RowcloneInterSA => {
            let last = latency - t.t_rp_ns;
            let mut cmds = vec![Command::activate(local(src.subarray, src.row), 0.0)];
            if dst.subarray != src.subarray || dst.bank != bank {
                cmds.push(Command::activate(RowAddress::regular(dst.bank, dst.subarray, dst.row), 0.0));
            }
            cmds.push(Command::new(CommandKind::Read, CommandTarget::Row(local(src.subarray, src.row)), t.t_rcd_ns));
            cmds.push(Command::new(
                CommandKind::Write,
                CommandTarget::Row(RowAddress::regular(dst.bank, dst.subarray, dst.row)),
                last - t.t_ck_ns,
            ));
            cmds.push(Command::precharge_local(bank, src.subarray, last));
            if dst.subarray != src.subarray || dst.bank != bank {
                cmds.push(Command::precharge_local(dst.bank, dst.subarray, last));
            }
            cmds
        }
        Mechanism::SharedPimBus => {
            let tx = tx_slot(g);
            let rx = rx_slot(g);
            let bus_at = if req.staged { 0.0 } else { aap };
            let mut cmds = Vec::new();
            if !req.staged {
                let from = if src.is_shared() { second_row(&src) } else { local(src.subarray, src.row) };
                cmds.extend(in_sa_aap(from, shared(&src, RowKind::SharedLocal, tx), 0.0));
            }
            cmds.push(Command::gwl_activate(shared(&src, RowKind::SharedGlobal, tx), bus_at));
            for d in &req.dsts {
                cmds.push(Command::gwl_activate(shared(d, RowKind::SharedGlobal, rx), bus_at + t.aap_offset_ns));
            }
            cmds.push(Command::precharge_bus(bank, bus_at + aap - t.t_rp_ns));
            if !req.staged {
                let to = if dst.is_shared() { second_row(&dst) } else { local(dst.subarray, dst.row) };
                cmds.extend(in_sa_aap(shared(&dst, RowKind::SharedLocal, rx), to, 2.0 * aap));
            }
            cmds
        }
    };
    Ok(cmds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{validate_config, FabricConfig};
    use crate::timing::check_sequence_legal;

    fn env() -> (Geometry, TimingParams, MechanismParams) {
        (validate_config(&FabricConfig::default()).unwrap(), TimingParams::default(), MechanismParams::default())
    }

    fn row(sa: usize) -> RowAddress {
        RowAddress::regular(0, sa, 3)
    }

    fn gwl(g: &Geometry, sa: usize) -> RowAddress {
        g.shared_address(0, sa, 0, RowKind::SharedGlobal)
    }

    fn lat(mech: Mechanism, a: usize, b: usize) -> f64 {
        let (g, t, m) = env();
        copy_latency(&CopyRequest::new(mech, row(a), row(b)), &g, &t, &m).unwrap()
    }

    #[test]
    fn table_latencies() {
        assert_eq!(lat(Mechanism::MemcpyChannel, 0, 1), 1366.25);
        assert_eq!(lat(Mechanism::RowcloneInterSA, 0, 1), 1363.75);
        assert_eq!(lat(Mechanism::LisaRisc, 0, 1), 260.5);
        assert_eq!(lat(Mechanism::SharedPimBus, 0, 1), 52.75);
        assert_eq!(lat(Mechanism::SharedPimBus, 0, 15), 52.75);
        assert_eq!(lat(Mechanism::RowcloneIntraSA, 4, 4), 52.75);
    }

    #[test]
    fn unstaged_is_three_aaps() {
        let (g, t, m) = env();
        let req = CopyRequest::new(Mechanism::SharedPimBus, row(0), row(2)).unstaged();
        assert!((copy_latency(&req, &g, &t, &m).unwrap() - 3.0 * 52.75).abs() < 1e-9);
        assert!((copy_latency(&req, &g, &t, &m).unwrap() - 158.25).abs() < 1e-9);
    }

    #[test]
    fn lisa_affine_in_distance() {
        assert_eq!(lat(Mechanism::LisaRisc, 0, 3), 260.5 + 2.0 * 9.0);
        assert_eq!(lat(Mechanism::LisaRisc, 5, 3), 260.5 + 9.0);
        assert_eq!(lat(Mechanism::LisaRisc, 3, 3), 52.75);
    }

    #[test]
    fn mechanism_order_at_distance_one() {
        let (g, t, m) = env();
        let unstaged =
            copy_latency(&CopyRequest::new(Mechanism::SharedPimBus, row(0), row(1)).unstaged(), &g, &t, &m).unwrap();
        let sp = lat(Mechanism::SharedPimBus, 0, 1);
        assert!(sp < unstaged);
        assert!(unstaged < lat(Mechanism::LisaRisc, 0, 1));
        assert!(lat(Mechanism::LisaRisc, 0, 1) < lat(Mechanism::RowcloneInterSA, 0, 1));
        assert!(lat(Mechanism::RowcloneInterSA, 0, 1) < lat(Mechanism::MemcpyChannel, 0, 1));
    }

    #[test]
    fn lisa_stalls_the_whole_span() {
        let (g, t, m) = env();
        let c = occupancy(&CopyRequest::new(Mechanism::LisaRisc, row(0), row(2)), &g, &t, &m).unwrap();
        assert_eq!(c.stalled_subarrays, BTreeSet::from([0, 1, 2]));
        assert!(c.blocks_compute_at_endpoints);
        let c = occupancy(&CopyRequest::new(Mechanism::LisaRisc, row(3), row(3)), &g, &t, &m).unwrap();
        assert_eq!(c.stalled_subarrays, BTreeSet::from([3]));
        assert_eq!(c.duration_ns, 52.75);
    }

    #[test]
    fn bus_copy_stalls_nothing() {
        let (g, t, m) = env();
        let c = occupancy(&CopyRequest::new(Mechanism::SharedPimBus, gwl(&g, 0), gwl(&g, 2)), &g, &t, &m).unwrap();
        assert!(c.stalled_subarrays.is_empty());
        assert_eq!(c.busy_bus_segments, BTreeSet::from([0, 1, 2, 3]));
        assert!(!c.blocks_compute_at_endpoints);
        assert_eq!(c.busy_shared_rows.len(), 2);
    }

    #[test]
    fn broadcast_limits() {
        let (g, t, m) = env();
        let dsts: Vec<_> = (1..=4).map(|sa| gwl(&g, sa)).collect();
        let (d, claim) = broadcast_claim(gwl(&g, 0), &dsts, &g, &t, &m).unwrap();
        assert_eq!(d, 52.75);
        assert_eq!(claim.busy_shared_rows.len(), 5);
        let (one, _) = broadcast_claim(gwl(&g, 0), &dsts[..1], &g, &t, &m).unwrap();
        assert_eq!(one, lat(Mechanism::SharedPimBus, 0, 1));
        let five: Vec<_> = (1..=5).map(|sa| gwl(&g, sa)).collect();
        assert_eq!(
            broadcast_claim(gwl(&g, 0), &five, &g, &t, &m).unwrap_err(),
            TransferError::BroadcastLimit { requested: 5, limit: 4 }
        );
        assert!(matches!(broadcast_claim(row(0), &dsts, &g, &t, &m), Err(TransferError::NotShared(_))));
    }

    #[test]
    fn request_errors() {
        let (g, t, m) = env();
        let cross = CopyRequest::new(Mechanism::LisaRisc, row(0), RowAddress::regular(1, 0, 0));
        assert!(matches!(copy_latency(&cross, &g, &t, &m), Err(TransferError::CrossBank { .. })));
        let ok = CopyRequest::new(Mechanism::MemcpyChannel, row(0), RowAddress::regular(1, 0, 0));
        assert!(copy_latency(&ok, &g, &t, &m).is_ok());
        let bc =
            CopyRequest { mechanism: Mechanism::SharedPimBus, src: row(0), dsts: vec![row(1), row(2)], staged: false };
        assert_eq!(copy_latency(&bc, &g, &t, &m), Err(TransferError::UnstagedBroadcast));
        let multi =
            CopyRequest { mechanism: Mechanism::LisaRisc, src: row(0), dsts: vec![row(1), row(2)], staged: true };
        assert!(matches!(copy_latency(&multi, &g, &t, &m), Err(TransferError::SingleDestination(_))));
    }

    #[test]
    fn sequences_are_legal() {
        let (g, t, m) = env();
        for mech in Mechanism::ALL {
            for (a, b) in [(0, 1), (0, 15), (7, 2), (4, 4)] {
                let mut req = CopyRequest::new(mech, row(a), row(b));
                if mech == Mechanism::SharedPimBus {
                    req.src = gwl(&g, a);
                    req.dsts = vec![g.shared_address(0, b, rx_slot(&g), RowKind::SharedGlobal)];
                }
                let cmds = command_sequence(&req, &g, &t, &m).unwrap();
                check_sequence_legal(&cmds, &t).unwrap_or_else(|v| panic!("{mech} {a}->{b}: {v} in {cmds:?}"));
                let unstaged =
                    command_sequence(&CopyRequest::new(mech, row(a), row(b)).unstaged(), &g, &t, &m).unwrap();
                check_sequence_legal(&unstaged, &t).unwrap();
            }
        }
    }

    #[test]
    fn parse_names() {
        for mech in Mechanism::ALL {
            assert_eq!(mech.name().parse::<Mechanism>().unwrap(), mech);
        }
        assert_eq!("Shared-PIM".parse::<Mechanism>().unwrap(), Mechanism::SharedPimBus);
        assert!("warp".parse::<Mechanism>().is_err());
    }
}
