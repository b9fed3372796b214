//! Subarray-parallel memory controller: arbitrates resource claims over time.

use std::collections::BTreeMap;

use rustc_hash::FxHashMap;
use std::fmt;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::geometry::Geometry;
use crate::transfer::{ResourceClaim, SlotAccess};
use crate::TIME_EPS_NS;

/// Bits of controller state kept per subarray.
pub const TRACKING_BITS_PER_SUBARRAY: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageReport {
    pub bits: usize,
    pub bytes: usize,
}

pub fn tracking_storage(g: &Geometry) -> StorageReport {
    let bits = g.total_subarrays() * TRACKING_BITS_PER_SUBARRAY;
    StorageReport { bits, bytes: bits.div_ceil(8) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resource {
    Subarray { bank: usize, subarray: usize },
    BusSegment { bank: usize, segment: usize },
    SharedRow { bank: usize, subarray: usize, slot: usize },
    Channel { channel: usize },
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resource::Subarray { bank, subarray } => write!(f, "b{bank}.sa{subarray}"),
            Resource::BusSegment { bank, segment } => write!(f, "b{bank}.bus{segment}"),
            Resource::SharedRow { bank, subarray, slot } => write!(f, "b{bank}.sa{subarray}.shared{slot}"),
            Resource::Channel { channel } => write!(f, "ch{channel}"),
        }
    }
}

/// What a reservation does with a resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Use {
    Active,
    Stalled,
    Bus,
    Slot(SlotAccess),
    Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    /// A shared row would be reached through both of its addresses at once.
    SharedRowDualAccess,
    /// The shared row is already in use through the same address.
    SharedRowBusy,
    BusBusy,
    /// A transfer stalls the subarray (or the subarray is busy and a transfer wants to stall it).
    SubarrayStalled,
    /// The subarray is already computing or staging.
    SubarrayBusy,
    ChannelBusy,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("{kind:?} on {resource}, retry at {retry_at} ns")]
pub struct Conflict {
    pub kind: ConflictKind,
    pub retry_at: f64,
    pub resource: Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("grant {0} released twice or never granted")]
pub struct DoubleRelease(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grant {
    pub id: u64,
    pub start_ns: f64,
    pub end_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    end: f64,
    owner: u64,
    usage: Use,
}

/// Non-overlapping intervals keyed by start time. Non-negative floats order
/// like their bit patterns, which keeps the map key an integer.
#[derive(Debug, Clone, Default, PartialEq)]
struct IntervalSet {
    map: BTreeMap<u64, Entry>,
}

impl IntervalSet {
    /// Latest-ending entry overlapping `[a, b)`.
    fn blocking(&self, a: f64, b: f64) -> Option<(f64, Entry)> {
        let hi = (b - TIME_EPS_NS).max(0.0).to_bits();
        let mut worst: Option<(f64, Entry)> = None;
        for (k, e) in self.map.range((Bound::Unbounded, Bound::Excluded(hi))).rev() {
            if e.end <= a + TIME_EPS_NS {
                break;
            }
            let start = f64::from_bits(*k);
            if worst.is_none_or(|(_, w)| e.end > w.end) {
                worst = Some((start, *e));
            }
        }
        worst
    }

    /// First time from `end` on that opens a gap of at least `dur`.
    fn clear_after(&self, mut end: f64, dur: f64) -> f64 {
        for (k, e) in self.map.range(end.to_bits()..) {
            if f64::from_bits(*k) >= end + dur - TIME_EPS_NS {
                break;
            }
            end = end.max(e.end);
        }
        end
    }

    fn insert(&mut self, start: f64, e: Entry) {
        self.map.insert(start.to_bits(), e);
    }

    fn remove_owner(&mut self, start: f64, owner: u64) -> bool {
        let key = start.to_bits();
        if self.map.get(&key).is_some_and(|e| e.owner == owner) {
            self.map.remove(&key);
            true
        } else {
            false
        }
    }

    fn at(&self, t: f64) -> Option<Entry> {
        self.map.range(..=t.max(0.0).to_bits()).next_back().map(|(_, e)| *e).filter(|e| e.end > t + TIME_EPS_NS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlotState {
    Idle,
    LocalActive,
    GlobalActive,
}

/// Controller view of one subarray at an instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubarrayState {
    pub active: bool,
    pub stalled: bool,
    pub raised_wordline: Option<usize>,
    pub column_command_owner: bool,
    pub shared_slot_state: Vec<SlotState>,
}

/// Interval-based arbiter for every bank in a geometry plus the channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryController {
    geometry: Geometry,
    resources: FxHashMap<Resource, IntervalSet>,
    granted: BTreeMap<u64, (f64, Vec<Resource>)>,
    next_id: u64,
}

impl MemoryController {
    pub fn new(geometry: Geometry) -> Self {
        MemoryController { geometry, resources: FxHashMap::default(), granted: BTreeMap::new(), next_id: 0 }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    fn channel_of(&self, bank: usize) -> usize {
        let cfg = self.geometry.config();
        bank / (cfg.ranks * cfg.chips_per_rank * cfg.banks_per_chip)
    }

    /// Resources a claim touches and how.
    pub fn resources_of(&self, claim: &ResourceClaim) -> Vec<(Resource, Use)> {
        let mut out = Vec::new();
        self.each_resource(claim, |r, u| out.push((r, u)));
        out
    }

    fn each_resource(&self, claim: &ResourceClaim, mut f: impl FnMut(Resource, Use)) {
        let bank = claim.bank;
        for &subarray in &claim.stalled_subarrays {
            f(Resource::Subarray { bank, subarray }, Use::Stalled);
        }
        for &subarray in &claim.active_subarrays {
            if !claim.stalled_subarrays.contains(&subarray) {
                f(Resource::Subarray { bank, subarray }, Use::Active);
            }
        }
        for &segment in &claim.busy_bus_segments {
            f(Resource::BusSegment { bank, segment }, Use::Bus);
        }
        for (&(subarray, slot), &access) in &claim.busy_shared_rows {
            f(Resource::SharedRow { bank, subarray, slot }, Use::Slot(access));
        }
        if claim.uses_channel {
            f(Resource::Channel { channel: self.channel_of(bank) }, Use::Channel);
        }
    }

    /// First conflict of `claim` held over `[at, at + duration)`, if any.
    pub fn check(&self, claim: &ResourceClaim, at: f64) -> Result<(), Conflict> {
        let end = at + claim.duration_ns;
        if claim.duration_ns <= TIME_EPS_NS {
            return Ok(());
        }
        let mut first: Option<Conflict> = None;
        self.each_resource(claim, |res, usage| {
            let Some(set) = self.resources.get(&res) else { return };
            if let Some((_, held)) = set.blocking(at, end) {
                let kind = conflict_kind(held.usage, usage);
                let retry_at = set.clear_after(held.end, claim.duration_ns);
                let c = Conflict { kind, retry_at, resource: res };
                // report the most severe (latest-clearing) blocker, dual access first
                let replace = match &first {
                    None => true,
                    Some(f) => {
                        (c.kind == ConflictKind::SharedRowDualAccess && f.kind != ConflictKind::SharedRowDualAccess)
                            || (f.kind != ConflictKind::SharedRowDualAccess && c.retry_at > f.retry_at)
                    }
                };
                if replace {
                    first = Some(c);
                }
            }
        });
        first.map_or(Ok(()), Err)
    }

    pub fn reserve(&mut self, claim: &ResourceClaim, at: f64) -> Result<Grant, Conflict> {
        self.check(claim, at)?;
        let id = self.next_id;
        self.next_id += 1;
        let end = at + claim.duration_ns;
        let mut held = Vec::new();
        if claim.duration_ns > TIME_EPS_NS {
            for (res, usage) in self.resources_of(claim) {
                self.resources.entry(res).or_default().insert(at, Entry { end, owner: id, usage });
                held.push(res);
            }
            held.shrink_to_fit();
        }
        self.granted.insert(id, (at, held));
        Ok(Grant { id, start_ns: at, end_ns: end })
    }

    /// Earliest time `>= at` at which the claim fits, and the grant.
    pub fn reserve_earliest(&mut self, claim: &ResourceClaim, mut at: f64) -> Grant {
        loop {
            match self.reserve(claim, at) {
                Ok(g) => return g,
                Err(c) => {
                    debug_assert!(c.retry_at > at);
                    at = c.retry_at;
                }
            }
        }
    }

    pub fn release(&mut self, grant: &Grant) -> Result<(), DoubleRelease> {
        let (start, held) = self.granted.remove(&grant.id).ok_or(DoubleRelease(grant.id))?;
        for res in held {
            if let Some(set) = self.resources.get_mut(&res) {
                set.remove_owner(start, grant.id);
                if set.map.is_empty() {
                    self.resources.remove(&res);
                }
            }
        }
        Ok(())
    }

    /// Same reservations as `other`, ignoring grant numbering.
    pub fn same_reservations(&self, other: &MemoryController) -> bool {
        let norm = |c: &MemoryController| {
            let mut v: Vec<(Resource, u64, u64, Use)> = c
                .resources
                .iter()
                .flat_map(|(r, s)| s.map.iter().map(move |(k, e)| (*r, *k, e.end.to_bits(), e.usage)))
                .collect();
            v.sort();
            v
        };
        norm(self) == norm(other)
    }

    pub fn state_at(&self, bank: usize, subarray: usize, t: f64) -> SubarrayState {
        let here = self.resources.get(&Resource::Subarray { bank, subarray }).and_then(|s| s.at(t));
        let slots: Vec<SlotState> = (0..self.geometry.shared_rows())
            .map(|slot| match self.resources.get(&Resource::SharedRow { bank, subarray, slot }).and_then(|s| s.at(t)) {
                Some(Entry { usage: Use::Slot(SlotAccess::Local), .. }) => SlotState::LocalActive,
                Some(Entry { usage: Use::Slot(SlotAccess::Global), .. }) => SlotState::GlobalActive,
                _ => SlotState::Idle,
            })
            .collect();
        let raised =
            slots.iter().position(|s| *s == SlotState::LocalActive).map(|slot| self.geometry.shared_row_index(slot));
        let active = matches!(here, Some(Entry { usage: Use::Active, .. }));
        SubarrayState {
            active,
            stalled: matches!(here, Some(Entry { usage: Use::Stalled, .. })),
            raised_wordline: raised,
            column_command_owner: active,
            shared_slot_state: slots,
        }
    }

    /// End of the latest reservation on a resource (0 if none).
    pub fn busy_until(&self, res: &Resource) -> f64 {
        self.resources.get(res).and_then(|s| s.map.values().map(|e| e.end).reduce(f64::max)).unwrap_or(0.0)
    }
}

fn conflict_kind(held: Use, wanted: Use) -> ConflictKind {
    match (held, wanted) {
        (Use::Slot(a), Use::Slot(b)) if a != b => ConflictKind::SharedRowDualAccess,
        (Use::Slot(_), _) | (_, Use::Slot(_)) => ConflictKind::SharedRowBusy,
        (Use::Bus, _) | (_, Use::Bus) => ConflictKind::BusBusy,
        (Use::Channel, _) | (_, Use::Channel) => ConflictKind::ChannelBusy,
        (Use::Stalled, _) | (_, Use::Stalled) => ConflictKind::SubarrayStalled,
        (Use::Active, Use::Active) => ConflictKind::SubarrayBusy,
    }
}

/// One held resource interval of a finished schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldInterval {
    pub resource: Resource,
    pub start_ns: f64,
    pub end_ns: f64,
    pub usage: Use,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("{kind:?} on {resource}: [{a_start}, {a_end}) overlaps [{b_start}, {b_end})")]
pub struct AuditError {
    pub kind: ConflictKind,
    pub resource: Resource,
    pub a_start: f64,
    pub a_end: f64,
    pub b_start: f64,
    pub b_end: f64,
}

/// Sweep every resource's intervals and reject any overlap.
pub fn audit_intervals(intervals: &[HeldInterval]) -> Result<(), AuditError> {
    let mut by_res: FxHashMap<Resource, Vec<&HeldInterval>> = FxHashMap::default();
    for iv in intervals.iter().filter(|iv| iv.end_ns - iv.start_ns > TIME_EPS_NS) {
        by_res.entry(iv.resource).or_default().push(iv);
    }
    let mut keys: Vec<_> = by_res.keys().copied().collect();
    keys.sort();
    for res in keys {
        let v = by_res.get_mut(&res).expect("key present");
        v.sort_by(|a, b| a.start_ns.total_cmp(&b.start_ns));
        let mut reach: Option<&HeldInterval> = None;
        for iv in v.iter() {
            if let Some(prev) = reach {
                if iv.start_ns < prev.end_ns - TIME_EPS_NS {
                    return Err(AuditError {
                        kind: conflict_kind(prev.usage, iv.usage),
                        resource: res,
                        a_start: prev.start_ns,
                        a_end: prev.end_ns,
                        b_start: iv.start_ns,
                        b_end: iv.end_ns,
                    });
                }
            }
            if reach.is_none_or(|p| iv.end_ns > p.end_ns) {
                reach = Some(iv);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{validate_config, FabricConfig, RowKind};
    use crate::timing::TimingParams;
    use crate::transfer::{copy_steps, occupancy, CopyRequest, Mechanism, MechanismParams};

    fn geo() -> Geometry {
        validate_config(&FabricConfig::default()).unwrap()
    }

    fn bus_copy(g: &Geometry, a: usize, b: usize) -> ResourceClaim {
        let req = CopyRequest::new(
            Mechanism::SharedPimBus,
            g.shared_address(0, a, 0, RowKind::SharedGlobal),
            g.shared_address(0, b, 1, RowKind::SharedGlobal),
        );
        occupancy(&req, g, &TimingParams::default(), &MechanismParams::default()).unwrap()
    }

    #[test]
    fn storage_overhead() {
        assert_eq!(tracking_storage(&geo()), StorageReport { bits: 2816, bytes: 352 });
        let one = FabricConfig {
            chips_per_rank: 1,
            banks_per_chip: 1,
            subarrays_per_bank: 1,
            bus_segments_per_bank: 1,
            ..FabricConfig::default()
        };
        assert_eq!(tracking_storage(&validate_config(&one).unwrap()), StorageReport { bits: 11, bytes: 2 });
        let big =
            FabricConfig { chips_per_rank: 1, banks_per_chip: 1, subarrays_per_bank: 372, ..FabricConfig::default() };
        let r = tracking_storage(&validate_config(&big).unwrap());
        assert_eq!(r, StorageReport { bits: 4092, bytes: 512 });
        assert!(r.bytes <= 512);
    }

    #[test]
    fn dual_access_rejected_both_orders() {
        let g = geo();
        let local = ResourceClaim::compute(0, 2, 100.0).with_slot(2, 0, SlotAccess::Local);
        let global = bus_copy(&g, 2, 5);
        let mut mc = MemoryController::new(g.clone());
        mc.reserve(&local, 0.0).unwrap();
        let c = mc.reserve(&global, 50.0).unwrap_err();
        assert_eq!(c.kind, ConflictKind::SharedRowDualAccess);
        assert_eq!(c.retry_at, 100.0);

        let mut mc = MemoryController::new(g);
        mc.reserve(&global, 0.0).unwrap();
        let c = mc.reserve(&local, 10.0).unwrap_err();
        assert_eq!(c.kind, ConflictKind::SharedRowDualAccess);
        assert_eq!(c.retry_at, 52.75);
    }

    #[test]
    fn overlapping_bus_copies() {
        let g = geo();
        let mut mc = MemoryController::new(g.clone());
        let first = mc.reserve(&bus_copy(&g, 0, 1), 0.0).unwrap();
        let c = mc.reserve(&bus_copy(&g, 6, 9), 20.0).unwrap_err();
        assert_eq!(c.kind, ConflictKind::BusBusy);
        assert_eq!(c.retry_at, first.end_ns);
        assert!(mc.reserve(&bus_copy(&g, 6, 9), first.end_ns).is_ok());
    }

    #[test]
    fn lisa_blocks_compute_in_between() {
        let g = geo();
        let t = TimingParams::default();
        let m = MechanismParams::default();
        let req = CopyRequest::new(
            Mechanism::LisaRisc,
            crate::geometry::RowAddress::regular(0, 0, 0),
            crate::geometry::RowAddress::regular(0, 2, 0),
        );
        let claim = occupancy(&req, &g, &t, &m).unwrap();
        let mut mc = MemoryController::new(g);
        mc.reserve(&claim, 0.0).unwrap();
        let c = mc.reserve(&ResourceClaim::compute(0, 1, 10.0), 100.0).unwrap_err();
        assert_eq!(c.kind, ConflictKind::SubarrayStalled);
        assert_eq!(c.retry_at, 260.5 + 9.0);
        assert!(mc.state_at(0, 1, 5.0).stalled);
        assert!(!mc.state_at(0, 3, 5.0).stalled);
        assert!(mc.reserve(&ResourceClaim::compute(0, 3, 10.0), 100.0).is_ok());
    }

    #[test]
    fn earliest_fit_fills_gaps() {
        let g = geo();
        let mut mc = MemoryController::new(g);
        mc.reserve(&ResourceClaim::compute(0, 0, 10.0), 0.0).unwrap();
        mc.reserve(&ResourceClaim::compute(0, 0, 10.0), 30.0).unwrap();
        let gr = mc.reserve_earliest(&ResourceClaim::compute(0, 0, 20.0), 0.0);
        assert_eq!(gr.start_ns, 10.0);
        let gr = mc.reserve_earliest(&ResourceClaim::compute(0, 0, 5.0), 0.0);
        assert_eq!(gr.start_ns, 40.0);
    }

    #[test]
    fn release_round_trip() {
        let g = geo();
        let mut mc = MemoryController::new(g.clone());
        let initial = mc.clone();
        let gr = mc.reserve(&bus_copy(&g, 0, 3), 5.0).unwrap();
        assert_eq!(mc.state_at(0, 3, 6.0).shared_slot_state[1], SlotState::GlobalActive);
        mc.release(&gr).unwrap();
        assert!(mc.same_reservations(&initial));
        assert_eq!(mc.release(&gr), Err(DoubleRelease(gr.id)));
        let never = Grant { id: 99, start_ns: 0.0, end_ns: 1.0 };
        assert_eq!(mc.release(&never), Err(DoubleRelease(99)));
    }

    #[test]
    fn disjoint_grants_commute() {
        let g = geo();
        let a = ResourceClaim::compute(0, 1, 30.0);
        let b = bus_copy(&g, 4, 7);
        let mut x = MemoryController::new(g.clone());
        let ga = x.reserve(&a, 0.0).unwrap();
        let gb = x.reserve(&b, 10.0).unwrap();
        x.release(&ga).unwrap();
        let mut y = MemoryController::new(g);
        let gb2 = y.reserve(&b, 10.0).unwrap();
        let ga2 = y.reserve(&a, 0.0).unwrap();
        y.release(&ga2).unwrap();
        assert!(x.same_reservations(&y));
        x.release(&gb).unwrap();
        y.release(&gb2).unwrap();
        assert!(x.same_reservations(&y));
    }

    #[test]
    fn unstaged_steps_touch_slots_locally() {
        let g = geo();
        let req = CopyRequest::new(
            Mechanism::SharedPimBus,
            crate::geometry::RowAddress::regular(0, 0, 0),
            crate::geometry::RowAddress::regular(0, 1, 0),
        )
        .unstaged();
        let steps = copy_steps(&req, &g, &TimingParams::default(), &MechanismParams::default()).unwrap();
        let mut mc = MemoryController::new(g);
        for s in &steps {
            mc.reserve(&s.claim, s.offset_ns).unwrap();
        }
        assert_eq!(mc.state_at(0, 0, 1.0).shared_slot_state[0], SlotState::LocalActive);
        assert_eq!(mc.state_at(0, 0, 60.0).shared_slot_state[0], SlotState::GlobalActive);
        assert_eq!(mc.state_at(0, 1, 120.0).shared_slot_state[1], SlotState::LocalActive);
    }

    #[test]
    fn audit_catches_overlap() {
        let r = Resource::BusSegment { bank: 0, segment: 0 };
        let ok = [
            HeldInterval { resource: r, start_ns: 0.0, end_ns: 10.0, usage: Use::Bus },
            HeldInterval { resource: r, start_ns: 10.0, end_ns: 20.0, usage: Use::Bus },
        ];
        assert!(audit_intervals(&ok).is_ok());
        let bad = [ok[0], HeldInterval { resource: r, start_ns: 5.0, end_ns: 8.0, usage: Use::Bus }];
        assert_eq!(audit_intervals(&bad).unwrap_err().kind, ConflictKind::BusBusy);
    }
}
