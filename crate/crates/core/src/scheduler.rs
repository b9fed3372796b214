//! List scheduler: maps a workload DAG onto subarrays, buses and channels
//! under one transfer mechanism, arbitrated by the memory controller.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap as HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controller::{audit_intervals, AuditError, HeldInterval, MemoryController, Resource, Use};
use crate::energy::{copy_energy, PowerModel};
use crate::geometry::{validate_config, ConfigError, FabricConfig, Geometry, RowAddress};
use crate::timing::{aap_latency, TimingParams};
use crate::transfer::{
    lisa_latency, occupancy, rx_slot, tx_slot, CopyRequest, Mechanism, MechanismParams, ResourceClaim, SlotAccess,
};
use crate::workloads::{ComputeOp, NodeKind, WorkloadDag, WorkloadError};
use crate::TIME_EPS_NS;

/// Meta key a builder sets when its composites are laid out on aligned
/// blocks of that many subarrays, one block per bank.
pub const BANK_SPAN_KEY: &str = "bank_span";

/// Latency model of the LUT-based compute substrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeParams {
    /// Query time of a full 256-entry (4-bit x 4-bit) LUT.
    pub plut_op_4bit_ns: f64,
    /// Entries of the carry-aggregation LUT.
    pub aggregate_lut_entries: u32,
    /// Entries of the shift LUT.
    pub shift_lut_entries: u32,
}

/// Entries of a full 4-bit operand-pair LUT.
pub const FULL_LUT_ENTRIES: u32 = 256;

impl ComputeParams {
    pub fn for_timing(t: &TimingParams) -> Self {
        ComputeParams { plut_op_4bit_ns: 2.0 * t.t_rc_ns(), aggregate_lut_entries: 8, shift_lut_entries: 64 }
    }

    /// Query time scales with the number of LUT rows swept.
    pub fn latency(&self, op: ComputeOp) -> f64 {
        let entries = match op {
            ComputeOp::Lut4Add | ComputeOp::Lut4Mul => FULL_LUT_ENTRIES,
            ComputeOp::Aggregate => self.aggregate_lut_entries,
            ComputeOp::LutShift => self.shift_lut_entries,
        };
        self.plut_op_4bit_ns * entries as f64 / FULL_LUT_ENTRIES as f64
    }
}

impl Default for ComputeParams {
    fn default() -> Self {
        ComputeParams::for_timing(&TimingParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    pub config: FabricConfig,
    pub timing: TimingParams,
    pub mech_params: MechanismParams,
    pub power: PowerModel,
    pub mechanism: Mechanism,
    pub compute: ComputeParams,
    /// Give every independent part of the DAG its own banks and channel,
    /// widening banks as needed, instead of failing on capacity.
    pub full_parallelism: bool,
}

impl Platform {
    pub fn new(mechanism: Mechanism) -> Self {
        Platform {
            config: FabricConfig::default(),
            timing: TimingParams::default(),
            mech_params: MechanismParams::default(),
            power: PowerModel::default(),
            mechanism,
            compute: ComputeParams::default(),
            full_parallelism: false,
        }
    }

    pub fn with_mechanism(&self, mechanism: Mechanism) -> Self {
        Platform { mechanism, ..self.clone() }
    }

    pub fn with_full_parallelism(mut self, on: bool) -> Self {
        self.full_parallelism = on;
        self
    }

    pub fn with_plut_op(mut self, ns: f64) -> Self {
        self.compute.plut_op_4bit_ns = ns;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("workload needs subarray {needed} but the fabric has {available}")]
    Capacity { needed: usize, available: usize },
    #[error("{unscheduled} nodes could not be scheduled")]
    Deadlock { unscheduled: usize },
    #[error("platforms differ in more than their mechanism")]
    IncomparablePlatforms,
    #[error("{0} cannot serve as a platform mechanism")]
    UnsupportedMechanism(Mechanism),
    #[error("need at least two platforms to compare")]
    TooFewPlatforms,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Transfer(#[from] crate::transfer::TransferError),
}

/// A schedulable resource as it appears in a timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lane {
    Subarray { bank: usize, subarray: usize },
    Bus { bank: usize },
    SharedRow { bank: usize, subarray: usize, slot: usize },
    Channel { channel: usize },
}

impl Lane {
    fn shifted(self, banks: usize) -> Lane {
        match self {
            Lane::Subarray { bank, subarray } => Lane::Subarray { bank: bank + banks, subarray },
            Lane::Bus { bank } => Lane::Bus { bank: bank + banks },
            Lane::SharedRow { bank, subarray, slot } => Lane::SharedRow { bank: bank + banks, subarray, slot },
            Lane::Channel { channel } => Lane::Channel { channel: channel + banks },
        }
    }
}

impl std::fmt::Display for Lane {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lane::Subarray { bank, subarray } => write!(f, "b{bank}.sa{subarray}"),
            Lane::Bus { bank } => write!(f, "b{bank}.bus"),
            Lane::SharedRow { bank, subarray, slot } => write!(f, "b{bank}.sa{subarray}.shared{slot}"),
            Lane::Channel { channel } => write!(f, "ch{channel}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tag {
    Busy,
    /// Blocked by an in-flight transfer.
    Stall,
    /// Free, but waiting on data that is crossing the bus.
    Nop,
    Idle,
}

impl Tag {
    pub fn name(self) -> &'static str {
        match self {
            Tag::Busy => "busy",
            Tag::Stall => "stall",
            Tag::Nop => "nop",
            Tag::Idle => "idle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lane: Lane,
    pub start_ns: f64,
    pub end_ns: f64,
    pub tag: Tag,
    pub node: usize,
}

/// Schedule of one component, in its own bank numbering.
#[derive(Debug, Clone, PartialEq)]
struct Template {
    start: Vec<f64>,
    end: Vec<f64>,
    intervals: Vec<Interval>,
    move_energy: Vec<f64>,
    banks: usize,
    makespan: f64,
    busy_compute_ns: f64,
    stall_ns: f64,
    nop_ns: f64,
    subarrays_used: usize,
    moves: usize,
    computes: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Instance {
    template: usize,
    bank_base: usize,
    nodes: Vec<usize>,
}

/// Result of a simulation. Identical components share one stored schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub mechanism: Mechanism,
    templates: Vec<Arc<Template>>,
    instances: Vec<Instance>,
    /// (instance, local index) of every node.
    locate: Vec<(u32, u32)>,
}

impl Timeline {
    pub fn node_count(&self) -> usize {
        self.locate.len()
    }

    fn lookup(&self, id: usize) -> (&Template, usize) {
        let (inst, local) = self.locate[id];
        (&self.templates[self.instances[inst as usize].template], local as usize)
    }

    pub fn node_start(&self, id: usize) -> f64 {
        let (t, l) = self.lookup(id);
        t.start[l]
    }

    pub fn node_end(&self, id: usize) -> f64 {
        let (t, l) = self.lookup(id);
        t.end[l]
    }

    pub fn makespan(&self) -> f64 {
        self.templates.iter().map(|t| t.makespan).fold(0.0, f64::max)
    }

    /// Distinct component schedules actually simulated.
    pub fn distinct_components(&self) -> usize {
        self.templates.len()
    }

    pub fn interval_count(&self) -> usize {
        self.instances.iter().map(|i| self.templates[i.template].intervals.len()).sum()
    }

    pub fn intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.instances.iter().flat_map(move |inst| {
            self.templates[inst.template].intervals.iter().map(move |iv| Interval {
                lane: iv.lane.shifted(inst.bank_base),
                node: inst.nodes.get(iv.node).copied().unwrap_or(iv.node),
                ..*iv
            })
        })
    }

    /// Reservations as the controller would see them (NOP gaps excluded).
    pub fn held_intervals(&self) -> Vec<HeldInterval> {
        self.intervals()
            .filter(|iv| matches!(iv.tag, Tag::Busy | Tag::Stall))
            .map(|iv| {
                let (resource, usage) = match iv.lane {
                    Lane::Subarray { bank, subarray } => (
                        Resource::Subarray { bank, subarray },
                        if iv.tag == Tag::Stall { Use::Stalled } else { Use::Active },
                    ),
                    Lane::Bus { bank } => (Resource::BusSegment { bank, segment: 0 }, Use::Bus),
                    Lane::SharedRow { bank, subarray, slot } => {
                        (Resource::SharedRow { bank, subarray, slot }, Use::Slot(SlotAccess::Global))
                    }
                    Lane::Channel { channel } => (Resource::Channel { channel }, Use::Channel),
                };
                HeldInterval { resource, start_ns: iv.start_ns, end_ns: iv.end_ns, usage }
            })
            .collect()
    }

    pub fn audit(&self) -> Result<(), AuditError> {
        audit_intervals(&self.held_intervals())
    }

    /// `resource,start_ns,end_ns,tag,node_id`, at most `limit` rows.
    pub fn write_csv<W: Write>(&self, mut w: W, limit: Option<usize>) -> io::Result<usize> {
        writeln!(w, "resource,start_ns,end_ns,tag,node_id")?;
        let mut rows = 0;
        for iv in self.intervals().take(limit.unwrap_or(usize::MAX)) {
            writeln!(w, "{},{},{},{},{}", iv.lane, iv.start_ns, iv.end_ns, iv.tag.name(), iv.node)?;
            rows += 1;
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub makespan_ns: f64,
    pub transfer_energy_uj: f64,
    pub stall_ns: f64,
    pub nop_ns: f64,
    pub subarray_utilization: f64,
    pub move_count: usize,
    pub compute_count: usize,
}

pub fn metrics(tl: &Timeline, _p: &Platform) -> Metrics {
    let mut m = Metrics { makespan_ns: tl.makespan(), ..Default::default() };
    let (mut busy, mut used) = (0.0, 0usize);
    for inst in &tl.instances {
        let t = &tl.templates[inst.template];
        m.transfer_energy_uj += t.move_energy.iter().sum::<f64>();
        m.stall_ns += t.stall_ns;
        m.nop_ns += t.nop_ns;
        m.move_count += t.moves;
        m.compute_count += t.computes;
        busy += t.busy_compute_ns;
        used += t.subarrays_used;
    }
    if m.makespan_ns > 0.0 && used > 0 {
        m.subarray_utilization = (busy / (m.makespan_ns * used as f64)).clamp(0.0, 1.0);
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mechanism: Mechanism,
    pub metrics: Metrics,
    /// Latency reduction against the first platform.
    pub speedup_pct: f64,
    pub energy_saving_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub label: String,
    pub baseline: Mechanism,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, mech: Mechanism) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.mechanism == mech)
    }
}

pub fn percent_reduction(base: f64, new: f64) -> f64 {
    if base <= 0.0 {
        0.0
    } else {
        (1.0 - new / base) * 100.0
    }
}

/// Simulate the DAG on every platform; the first one is the baseline.
pub fn compare(dag: &WorkloadDag, platforms: &[Platform]) -> Result<ComparisonReport, SimError> {
    let [first, rest @ ..] = platforms else { return Err(SimError::TooFewPlatforms) };
    if rest.is_empty() {
        return Err(SimError::TooFewPlatforms);
    }
    if rest.iter().any(|p| p.config != first.config || p.full_parallelism != first.full_parallelism) {
        return Err(SimError::IncomparablePlatforms);
    }
    let all = platforms.iter().map(|p| simulate(dag, p).map(|tl| metrics(&tl, p))).collect::<Result<Vec<_>, _>>()?;
    Ok(comparison_from(dag.label.clone(), platforms, &all))
}

pub fn comparison_from(label: String, platforms: &[Platform], all: &[Metrics]) -> ComparisonReport {
    let base = all[0];
    let rows = platforms
        .iter()
        .zip(all)
        .map(|(p, m)| ComparisonRow {
            mechanism: p.mechanism,
            metrics: *m,
            speedup_pct: percent_reduction(base.makespan_ns, m.makespan_ns),
            energy_saving_pct: percent_reduction(base.transfer_energy_uj, m.transfer_energy_uj),
        })
        .collect();
    ComparisonReport { label, baseline: platforms[0].mechanism, rows }
}

/// Cheapest possible cost of a move under the platform's mechanism.
fn min_move_ns(p: &Platform) -> f64 {
    match p.mechanism {
        Mechanism::SharedPimBus | Mechanism::RowcloneIntraSA => aap_latency(&p.timing),
        Mechanism::LisaRisc => lisa_latency(1, &p.timing, &p.mech_params),
        Mechanism::RowcloneInterSA => p.mech_params.rc_inter_ns,
        Mechanism::MemcpyChannel => p.mech_params.memcpy_ns,
    }
}

/// Longest dependency path with computes at their LUT latency and every
/// cross-subarray move at the mechanism's fastest copy.
pub fn critical_path_ns(dag: &WorkloadDag, p: &Platform) -> Result<f64, SimError> {
    let order = dag.topo_order()?;
    let preds = dag.preds();
    let succs = dag.succs();
    let mut finish = vec![0.0f64; dag.len()];
    for v in order {
        let ready = preds[v].iter().map(|&u| finish[u]).fold(0.0, f64::max);
        let dur = match dag.nodes[v].kind {
            NodeKind::Compute(op) => p.compute.latency(op),
            NodeKind::Move { size_rows, .. } => {
                let src = preds[v].first().and_then(|&u| dag.nodes[u].preferred_subarray);
                let foreign = succs[v].iter().any(|&s| {
                    let d = dag.nodes[s].preferred_subarray;
                    d.is_none() || src.is_none() || d != src
                });
                if foreign {
                    min_move_ns(p) * size_rows as f64
                } else {
                    0.0
                }
            }
        };
        finish[v] = ready + dur;
    }
    Ok(finish.into_iter().fold(0.0, f64::max))
}

/// Per-component scheduling input, in local node numbering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Shape {
    kinds: Vec<NodeKind>,
    place: Vec<Option<(usize, usize)>>,
    edges: Vec<(usize, usize)>,
}

pub fn simulate(dag: &WorkloadDag, p: &Platform) -> Result<Timeline, SimError> {
    if !Mechanism::PLATFORM.contains(&p.mechanism) {
        return Err(SimError::UnsupportedMechanism(p.mechanism));
    }
    dag.validate()?;
    let base = validate_config(&p.config)?;
    let n = dag.len();
    if n == 0 {
        return Ok(Timeline {
            mechanism: p.mechanism,
            templates: Vec::new(),
            instances: Vec::new(),
            locate: Vec::new(),
        });
    }
    let groups: Vec<Vec<usize>> = if p.full_parallelism { components(dag) } else { vec![(0..n).collect()] };
    let span = dag.meta.get(BANK_SPAN_KEY).copied().filter(|&s| s > 0);

    let mut templates: Vec<Arc<Template>> = Vec::new();
    let mut memo: HashMap<Shape, usize> = HashMap::default();
    let mut instances = Vec::with_capacity(groups.len());
    let mut locate = vec![(0u32, 0u32); n];
    let mut bank_base = 0;
    let succs = dag.succs();
    let mut local = vec![0u32; n];
    for nodes in groups {
        for (l, &g) in nodes.iter().enumerate() {
            local[g] = l as u32;
        }
        let edges = local_edges(&succs, &nodes, &local);
        let (shape, geom) = if p.full_parallelism {
            parallel_shape(dag, &nodes, edges, span, &base)?
        } else {
            fixed_shape(dag, &nodes, edges, &base)?
        };
        let t = match memo.get(&shape) {
            Some(&t) => t,
            None => {
                let tpl = run_component(&shape, &geom, p)?;
                templates.push(Arc::new(tpl));
                memo.insert(shape, templates.len() - 1);
                templates.len() - 1
            }
        };
        let idx = instances.len();
        for (local, &g) in nodes.iter().enumerate() {
            locate[g] = (idx as u32, local as u32);
        }
        instances.push(Instance { template: t, bank_base, nodes });
        if p.full_parallelism {
            bank_base += templates[t].banks;
        }
    }
    Ok(Timeline { mechanism: p.mechanism, templates, instances, locate })
}

/// Weakly connected components, each sorted, ordered by smallest node id.
/// Root moves loading from the same subarray count as connected.
fn components(dag: &WorkloadDag) -> Vec<Vec<usize>> {
    let n = dag.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in &dag.edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    // loads of one stored value must see the same home
    let preds = dag.preds();
    let mut homes: HashMap<usize, usize> = HashMap::default();
    for (v, node) in dag.nodes.iter().enumerate() {
        if let (true, true, Some(s)) = (node.is_move(), preds[v].is_empty(), node.preferred_subarray) {
            let first = *homes.entry(s).or_insert(v);
            let (ra, rb) = (find(&mut parent, first), find(&mut parent, v));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut by_root: HashMap<usize, usize> = HashMap::default();
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        let slot = *by_root.entry(r).or_insert_with(|| {
            out.push(Vec::new());
            out.len() - 1
        });
        out[slot].push(v);
    }
    out
}

/// Edges inside one component in local numbering; `local` maps every
/// node of the component to its position.
fn local_edges(succs: &[Vec<usize>], nodes: &[usize], local: &[u32]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> =
        nodes.iter().enumerate().flat_map(|(l, &g)| succs[g].iter().map(move |&s| (l, local[s] as usize))).collect();
    edges.sort_unstable();
    edges
}

fn fixed_shape(
    dag: &WorkloadDag,
    nodes: &[usize],
    edges: Vec<(usize, usize)>,
    base: &Geometry,
) -> Result<(Shape, Geometry), SimError> {
    let spb = base.subarrays_per_bank();
    let mut place = Vec::with_capacity(nodes.len());
    for &g in nodes {
        let loc = match dag.nodes[g].preferred_subarray {
            Some(s) if s >= base.total_subarrays() => {
                return Err(SimError::Capacity { needed: s + 1, available: base.total_subarrays() })
            }
            Some(s) => Some((s / spb, s % spb)),
            None => None,
        };
        place.push(loc);
    }
    let kinds = nodes.iter().map(|&g| dag.nodes[g].kind).collect();
    Ok((Shape { kinds, place, edges }, base.clone()))
}

/// Relocate a component onto fresh banks: with a bank span, subarray `s`
/// sits in bank `s / span`; without, the component gets one wide bank.
fn parallel_shape(
    dag: &WorkloadDag,
    nodes: &[usize],
    edges: Vec<(usize, usize)>,
    span: Option<usize>,
    base: &Geometry,
) -> Result<(Shape, Geometry), SimError> {
    let placed: Vec<usize> = nodes.iter().filter_map(|&g| dag.nodes[g].preferred_subarray).collect();
    let lo = placed.iter().copied().min().unwrap_or(0);
    let hi = placed.iter().copied().max().unwrap_or(0);
    let (width, first_bank) = match span {
        Some(s) => (s, lo / s),
        None => (hi - lo + 1, 0),
    };
    let offset = match span {
        Some(_) => 0,
        None => lo,
    };
    let mut place = Vec::with_capacity(nodes.len());
    let mut banks = 1;
    for &g in nodes {
        let loc = dag.nodes[g].preferred_subarray.map(|s| {
            let s = s - offset;
            let b = s / width - first_bank;
            banks = banks.max(b + 1);
            (b, s % width)
        });
        place.push(loc);
    }
    let mut cfg = base.config().clone();
    cfg.subarrays_per_bank = cfg.subarrays_per_bank.max(width);
    cfg.channels = banks;
    cfg.ranks = 1;
    cfg.chips_per_rank = 1;
    cfg.banks_per_chip = 1;
    let geom = validate_config(&cfg)?;
    let kinds = nodes.iter().map(|&g| dag.nodes[g].kind).collect();
    Ok((Shape { kinds, place, edges }, geom))
}

/// A value sitting in a transmit row: a computed result, or a stored
/// value loaded from its home subarray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum StageKey {
    Value(usize),
    Home(usize, usize),
}

/// A bus transaction whose destination subarrays may sit idle meanwhile.
struct BusWindow {
    start: f64,
    end: f64,
    dsts: Vec<(usize, usize)>,
}

struct Engine<'a> {
    p: &'a Platform,
    g: Geometry,
    ctrl: MemoryController,
    aap: f64,
    intervals: Vec<Interval>,
    windows: Vec<BusWindow>,
    /// End of the transmit-row hold of each value staged for the bus.
    staged: HashMap<StageKey, f64>,
}

fn channel_of(g: &Geometry, bank: usize) -> usize {
    let c = g.config();
    bank / (c.ranks * c.chips_per_rank * c.banks_per_chip)
}

/// Earliest start `>= t` at which every offset claim of a plan fits.
fn fit(ctrl: &MemoryController, plan: &[(f64, ResourceClaim)], mut t: f64) -> f64 {
    'search: loop {
        for (off, c) in plan {
            if let Err(k) = ctrl.check(c, t + off) {
                t = t.max(k.retry_at - off);
                continue 'search;
            }
        }
        return t;
    }
}

impl Engine<'_> {
    fn reserve_plan(&mut self, plan: &[(f64, ResourceClaim)], t: f64) {
        for (off, c) in plan {
            self.ctrl.reserve(c, t + off).expect("plan was fitted before reserving");
        }
    }

    fn push(&mut self, lane: Lane, start_ns: f64, end_ns: f64, tag: Tag, node: usize) {
        if end_ns - start_ns > TIME_EPS_NS {
            self.intervals.push(Interval { lane, start_ns, end_ns, tag, node });
        }
    }

    fn compute(&mut self, node: usize, op: ComputeOp, (bank, sa): (usize, usize), ready: f64) -> (f64, f64) {
        let claim = ResourceClaim::compute(bank, sa, self.p.compute.latency(op));
        let grant = self.ctrl.reserve_earliest(&claim, ready);
        self.push(Lane::Subarray { bank, subarray: sa }, grant.start_ns, grant.end_ns, Tag::Busy, node);
        (grant.start_ns, grant.end_ns)
    }

    /// Claims of one bus transaction, one per bank touched.
    fn bus_claims(&self, src: (usize, usize), dsts: &[(usize, usize)], dur: f64) -> Vec<ResourceClaim> {
        let mut per_bank: Vec<ResourceClaim> = Vec::new();
        let claim_for = |bank: usize, per_bank: &mut Vec<ResourceClaim>| -> usize {
            if let Some(i) = per_bank.iter().position(|c| c.bank == bank) {
                return i;
            }
            per_bank.push(ResourceClaim {
                bank,
                busy_bus_segments: (0..self.g.bus_segments()).collect(),
                duration_ns: dur,
                ..Default::default()
            });
            per_bank.len() - 1
        };
        let i = claim_for(src.0, &mut per_bank);
        per_bank[i].busy_shared_rows.insert((src.1, tx_slot(&self.g)), SlotAccess::Global);
        for &(b, s) in dsts {
            let i = claim_for(b, &mut per_bank);
            per_bank[i].busy_shared_rows.insert((s, rx_slot(&self.g)), SlotAccess::Global);
        }
        per_bank
    }

    fn local_step(&self, (bank, sa): (usize, usize), slot: usize, dur: f64) -> ResourceClaim {
        let mut c =
            ResourceClaim { bank, duration_ns: dur, ..Default::default() }.with_slot(sa, slot, SlotAccess::Local);
        c.active_subarrays.insert(sa);
        c
    }

    /// Bus move; returns (start, end, energy).
    #[allow(clippy::too_many_arguments)]
    fn bus_move(
        &mut self,
        node: usize,
        src: (usize, usize),
        producer: Option<usize>,
        produced: f64,
        dsts: &[(usize, usize)],
        size: f64,
        ready: f64,
    ) -> (f64, f64, f64) {
        let aap = self.aap * size;
        let chunks: Vec<&[(usize, usize)]> = dsts.chunks(self.p.mech_params.broadcast_limit.max(1)).collect();
        let tx = tx_slot(&self.g);
        let rx = rx_slot(&self.g);
        let bus_plan = |eng: &Engine, lead: f64| -> Vec<(f64, ResourceClaim)> {
            chunks
                .iter()
                .enumerate()
                .flat_map(|(j, ch)| eng.bus_claims(src, ch, aap).into_iter().map(move |c| (lead + j as f64 * aap, c)))
                .collect()
        };
        let nbus = chunks.len() as f64;
        let power = &self.p.power;
        let bus_energy = nbus * copy_energy(Mechanism::SharedPimBus, aap, power);

        // staged: the result went straight into the transmit row when
        // produced, or is still there from an earlier move of the same value
        let key = producer.map_or(StageKey::Home(src.0, src.1), StageKey::Value);
        let held_from = self.staged.get(&key).copied().unwrap_or(produced);
        let plan = bus_plan(self, 0.0);
        let t = fit(&self.ctrl, &plan, ready.max(held_from));
        let hold = ResourceClaim { bank: src.0, duration_ns: t - held_from, ..Default::default() }.with_slot(
            src.1,
            tx,
            SlotAccess::Local,
        );
        if self.ctrl.check(&hold, held_from).is_ok() {
            self.ctrl.reserve(&hold, held_from).expect("checked");
            self.reserve_plan(&plan, t);
            let end = t + nbus * aap;
            self.push(Lane::SharedRow { bank: src.0, subarray: src.1, slot: tx }, held_from, end, Tag::Busy, node);
            self.record_bus(node, &chunks, src, t, aap);
            self.staged.insert(key, end);
            return (t, end, bus_energy);
        }

        // unstaged: stage into the transmit row, bus, then unstage at each destination
        let mut plan = vec![(0.0, self.local_step(src, tx, aap))];
        plan.extend(bus_plan(self, aap));
        let tail = aap + nbus * aap;
        for &d in dsts {
            plan.push((tail, self.local_step(d, rx, aap)));
        }
        let t = fit(&self.ctrl, &plan, ready);
        self.reserve_plan(&plan, t);
        self.push(Lane::Subarray { bank: src.0, subarray: src.1 }, t, t + aap, Tag::Busy, node);
        self.push(Lane::SharedRow { bank: src.0, subarray: src.1, slot: tx }, t, t + tail, Tag::Busy, node);
        self.record_bus(node, &chunks, src, t + aap, aap);
        for &(b, s) in dsts {
            self.push(Lane::Subarray { bank: b, subarray: s }, t + tail, t + tail + aap, Tag::Busy, node);
            self.push(Lane::SharedRow { bank: b, subarray: s, slot: rx }, t + tail, t + tail + aap, Tag::Busy, node);
        }
        let local = copy_energy(Mechanism::RowcloneIntraSA, aap, power) * (1 + dsts.len()) as f64;
        (t, t + tail + aap, bus_energy + local)
    }

    fn record_bus(&mut self, node: usize, chunks: &[&[(usize, usize)]], src: (usize, usize), t: f64, aap: f64) {
        let rx = rx_slot(&self.g);
        for (j, ch) in chunks.iter().enumerate() {
            let (s, e) = (t + j as f64 * aap, t + (j + 1) as f64 * aap);
            let mut banks: Vec<usize> = std::iter::once(src.0).chain(ch.iter().map(|d| d.0)).collect();
            banks.sort_unstable();
            banks.dedup();
            for b in banks {
                self.push(Lane::Bus { bank: b }, s, e, Tag::Busy, node);
            }
            for &(b, sa) in ch.iter() {
                self.push(Lane::SharedRow { bank: b, subarray: sa, slot: rx }, s, e, Tag::Busy, node);
            }
            self.windows.push(BusWindow { start: s, end: e, dsts: ch.to_vec() });
        }
    }

    /// One point-to-point copy under a blocking mechanism; returns (start, end, energy).
    fn blocking_copy(
        &mut self,
        node: usize,
        src: (usize, usize),
        dst: (usize, usize),
        size: f64,
        ready: f64,
    ) -> (f64, f64, f64) {
        let (p, mech) = (self.p, self.p.mechanism);
        let plan: Vec<(f64, ResourceClaim)> = if src.0 == dst.0 {
            let req =
                CopyRequest::new(mech, RowAddress::regular(src.0, src.1, 0), RowAddress::regular(dst.0, dst.1, 0));
            let mut c = occupancy(&req, &self.g, &p.timing, &p.mech_params).expect("bank-local request is valid");
            c.duration_ns *= size;
            vec![(0.0, c)]
        } else {
            let dur = size
                * match mech {
                    Mechanism::LisaRisc => lisa_latency(1, &p.timing, &p.mech_params),
                    Mechanism::RowcloneInterSA => p.mech_params.rc_inter_ns,
                    _ => p.mech_params.memcpy_ns,
                };
            let end_claim = |bank: usize, sa: usize, channel: bool| ResourceClaim {
                bank,
                stalled_subarrays: [sa].into(),
                uses_channel: channel,
                duration_ns: dur,
                blocks_compute_at_endpoints: true,
                ..Default::default()
            };
            let via_channel = mech != Mechanism::LisaRisc;
            let shared_channel = channel_of(&self.g, src.0) == channel_of(&self.g, dst.0);
            vec![
                (0.0, end_claim(src.0, src.1, via_channel)),
                (0.0, end_claim(dst.0, dst.1, via_channel && !shared_channel)),
            ]
        };
        let t = fit(&self.ctrl, &plan, ready);
        self.reserve_plan(&plan, t);
        let dur = plan[0].1.duration_ns;
        for (_, c) in &plan {
            for &sa in &c.stalled_subarrays {
                self.push(Lane::Subarray { bank: c.bank, subarray: sa }, t, t + dur, Tag::Stall, node);
            }
            if c.uses_channel {
                self.push(Lane::Channel { channel: channel_of(&self.g, c.bank) }, t, t + dur, Tag::Busy, node);
            }
        }
        (t, t + dur, copy_energy(mech, dur, &p.power))
    }

    /// Idle stretches of destination subarrays during incoming bus transfers.
    fn nop_intervals(&mut self) {
        let mut busy: HashMap<Lane, Vec<(f64, f64)>> = HashMap::default();
        for iv in &self.intervals {
            if matches!(iv.lane, Lane::Subarray { .. }) {
                busy.entry(iv.lane).or_default().push((iv.start_ns, iv.end_ns));
            }
        }
        for v in busy.values_mut() {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        let mut nops = Vec::new();
        for w in &self.windows {
            for &(bank, subarray) in &w.dsts {
                let lane = Lane::Subarray { bank, subarray };
                let mut cursor = w.start;
                let list = busy.get(&lane).map(Vec::as_slice).unwrap_or(&[]);
                let from = list.partition_point(|&(_, e)| e <= w.start + TIME_EPS_NS);
                for &(s, e) in &list[from..] {
                    if s >= w.end - TIME_EPS_NS {
                        break;
                    }
                    if s > cursor + TIME_EPS_NS {
                        nops.push((lane, cursor, s));
                    }
                    cursor = cursor.max(e);
                }
                if w.end > cursor + TIME_EPS_NS {
                    nops.push((lane, cursor, w.end));
                }
            }
        }
        for (lane, s, e) in nops {
            self.intervals.push(Interval { lane, start_ns: s, end_ns: e, tag: Tag::Nop, node: usize::MAX });
        }
    }
}

fn run_component(shape: &Shape, g: &Geometry, p: &Platform) -> Result<Template, SimError> {
    let n = shape.kinds.len();
    let mut preds = vec![Vec::new(); n];
    let mut succs = vec![Vec::new(); n];
    for &(a, b) in &shape.edges {
        preds[b].push(a);
        succs[a].push(b);
    }
    let place = resolve_placement(shape, g);

    let mut eng = Engine {
        p,
        g: g.clone(),
        ctrl: MemoryController::new(g.clone()),
        aap: aap_latency(&p.timing),
        intervals: Vec::new(),
        windows: Vec::new(),
        staged: HashMap::default(),
    };
    let mut start = vec![0.0; n];
    let mut end = vec![0.0; n];
    let mut move_energy = vec![0.0; n];
    let mut indeg: Vec<usize> = preds.iter().map(Vec::len).collect();
    let mut ready = vec![0.0f64; n];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        (0..n).filter(|&v| indeg[v] == 0).map(|v| Reverse((0f64.to_bits(), v))).collect();
    let mut done = 0;
    let (mut moves, mut computes) = (0, 0);

    while let Some(Reverse((bits, v))) = heap.pop() {
        let at = f64::from_bits(bits);
        done += 1;
        match shape.kinds[v] {
            NodeKind::Compute(op) => {
                computes += 1;
                let loc = place[v].expect("computes are placed");
                (start[v], end[v]) = eng.compute(v, op, loc, at);
            }
            NodeKind::Move { size_rows, .. } => {
                moves += 1;
                let producer = preds[v].first().copied();
                // a root move loads a stored value from its own subarray
                let src = producer.and_then(|u| place[u]).or(shape.place[v]).unwrap_or((0, 0));
                let produced = producer.map_or(at, |u| end[u]);
                let mut dsts: Vec<(usize, usize)> =
                    succs[v].iter().filter_map(|&s| place[s]).filter(|&d| d != src).collect();
                dsts.sort_unstable();
                dsts.dedup();
                let size = size_rows.max(1) as f64;
                if dsts.is_empty() {
                    (start[v], end[v]) = (at, at);
                } else if p.mechanism == Mechanism::SharedPimBus {
                    let (s, e, en) = eng.bus_move(v, src, producer, produced, &dsts, size, at);
                    (start[v], end[v], move_energy[v]) = (s, e, en);
                } else {
                    let (mut s0, mut e0, mut total) = (f64::INFINITY, at, 0.0);
                    for &d in &dsts {
                        let (s, e, en) = eng.blocking_copy(v, src, d, size, at);
                        s0 = s0.min(s);
                        e0 = e0.max(e);
                        total += en;
                    }
                    (start[v], end[v], move_energy[v]) = (s0, e0, total);
                }
            }
        }
        // consumers wait for the whole move, even when their own copy of a
        // multi-destination move lands early
        for &s in &succs[v] {
            ready[s] = ready[s].max(end[v]);
            indeg[s] -= 1;
            if indeg[s] == 0 {
                heap.push(Reverse((ready[s].to_bits(), s)));
            }
        }
    }
    if done != n {
        return Err(SimError::Deadlock { unscheduled: n - done });
    }
    eng.nop_intervals();

    let mut subarrays: Vec<(usize, usize)> =
        (0..n).filter(|&v| matches!(shape.kinds[v], NodeKind::Compute(_))).filter_map(|v| place[v]).collect();
    subarrays.sort_unstable();
    subarrays.dedup();
    let sum = |tag: Tag, compute_only: bool| {
        eng.intervals
            .iter()
            .filter(|iv| iv.tag == tag && matches!(iv.lane, Lane::Subarray { .. }))
            .filter(|iv| !compute_only || matches!(shape.kinds.get(iv.node), Some(NodeKind::Compute(_))))
            .map(|iv| iv.end_ns - iv.start_ns)
            .sum::<f64>()
    };
    let banks = g.total_banks();
    Ok(Template {
        makespan: end.iter().copied().fold(0.0, f64::max),
        busy_compute_ns: sum(Tag::Busy, true),
        stall_ns: sum(Tag::Stall, false),
        nop_ns: sum(Tag::Nop, false),
        subarrays_used: subarrays.len(),
        moves,
        computes,
        banks,
        start,
        end,
        move_energy,
        intervals: eng.intervals,
    })
}

/// Computes without a preferred subarray go to the least-loaded subarray
/// of bank 0, ties broken round-robin.
fn resolve_placement(shape: &Shape, g: &Geometry) -> Vec<Option<(usize, usize)>> {
    let spb = g.subarrays_per_bank();
    let mut load = vec![0usize; spb];
    for &(b, s) in shape.place.iter().flatten() {
        if b == 0 && s < spb {
            load[s] += 1;
        }
    }
    let mut cursor = 0;
    let mut place = shape.place.clone();
    for (v, kind) in shape.kinds.iter().enumerate() {
        if place[v].is_none() && matches!(kind, NodeKind::Compute(_)) {
            let best = (0..spb).map(|i| (cursor + i) % spb).min_by_key(|&s| load[s]).expect("bank has subarrays");
            load[best] += 1;
            cursor = (best + 1) % spb;
            place[v] = Some((0, best));
        }
    }
    place
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::DagBuilder;

    fn plat(m: Mechanism) -> Platform {
        Platform::new(m).with_plut_op(100.0)
    }

    #[test]
    fn single_compute() {
        let mut b = DagBuilder::new("one");
        b.compute(ComputeOp::Lut4Add, 0, &[]);
        let dag = b.finish();
        let p = plat(Mechanism::SharedPimBus);
        let m = metrics(&simulate(&dag, &p).unwrap(), &p);
        assert!((m.makespan_ns - 100.0).abs() < 1e-9);
        assert_eq!(m.transfer_energy_uj, 0.0);
    }

    #[test]
    fn bus_chain() {
        let mut b = DagBuilder::new("chain");
        let a = b.compute(ComputeOp::Lut4Add, 0, &[]);
        let c = b.compute(ComputeOp::Lut4Add, 3, &[]);
        b.deliver(a, &[c]);
        let dag = b.finish();
        let p = plat(Mechanism::SharedPimBus);
        let tl = simulate(&dag, &p).unwrap();
        assert!((tl.makespan() - (200.0 + 52.75)).abs() < 1e-9);
        tl.audit().unwrap();
    }

    #[test]
    fn lisa_stalls_the_path() {
        let mut b = DagBuilder::new("lisa");
        let a = b.compute(ComputeOp::Lut4Add, 0, &[]);
        let c = b.compute(ComputeOp::Lut4Add, 2, &[]);
        b.deliver(a, &[c]);
        let dag = b.finish();
        let p = plat(Mechanism::LisaRisc);
        let tl = simulate(&dag, &p).unwrap();
        assert!((tl.makespan() - (200.0 + 269.5)).abs() < 1e-9);
        let stalled: Vec<_> = tl.intervals().filter(|iv| iv.tag == Tag::Stall).collect();
        assert_eq!(stalled.len(), 3);
        let m = metrics(&tl, &p);
        assert!((m.stall_ns - 3.0 * 269.5).abs() < 1e-9);
    }

    #[test]
    fn empty_dag() {
        let dag = WorkloadDag::default();
        let p = plat(Mechanism::LisaRisc);
        assert_eq!(metrics(&simulate(&dag, &p).unwrap(), &p), Metrics::default());
    }

    #[test]
    fn busy_transmit_row_forces_unstaged_path() {
        // two results leave subarray 0 back to back; the second cannot be
        // written into the transmit row while the first still waits there
        let mut b = DagBuilder::new("two");
        let x = b.compute(ComputeOp::Aggregate, 0, &[]);
        let y = b.compute(ComputeOp::Aggregate, 0, &[x]);
        let u = b.compute(ComputeOp::Lut4Add, 1, &[]);
        let v = b.compute(ComputeOp::Lut4Add, 2, &[]);
        b.deliver(x, &[u]);
        b.deliver(y, &[v]);
        let dag = b.finish();
        let p = plat(Mechanism::SharedPimBus);
        let tl = simulate(&dag, &p).unwrap();
        tl.audit().unwrap();
        let m = metrics(&tl, &p);
        assert_eq!(m.stall_ns, 0.0);
        assert!(m.makespan_ns >= critical_path_ns(&dag, &p).unwrap() - 1e-9);
    }

    #[test]
    fn incomparable() {
        let dag = WorkloadDag::default();
        let a = plat(Mechanism::LisaRisc);
        let mut b = plat(Mechanism::SharedPimBus);
        b.config.subarrays_per_bank = 32;
        assert_eq!(compare(&dag, &[a.clone(), b]), Err(SimError::IncomparablePlatforms));
        let r = compare(&dag, &[a.clone(), a]).unwrap();
        assert_eq!(r.rows[1].speedup_pct, 0.0);
    }
}
