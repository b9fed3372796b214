//! Benchmark DAG builders: wide LUT arithmetic and the application kernels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Destinations one bus transaction can reach.
pub const MAX_BROADCAST: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComputeOp {
    Lut4Add,
    Lut4Mul,
    LutShift,
    Aggregate,
}

impl ComputeOp {
    pub fn name(self) -> &'static str {
        match self {
            ComputeOp::Lut4Add => "add4",
            ComputeOp::Lut4Mul => "mul4",
            ComputeOp::LutShift => "shift",
            ComputeOp::Aggregate => "agg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Compute(ComputeOp),
    Move { size_rows: u32, broadcast_width: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagNode {
    pub id: usize,
    pub kind: NodeKind,
    pub preferred_subarray: Option<usize>,
}

impl DagNode {
    pub fn is_move(&self) -> bool {
        matches!(self.kind, NodeKind::Move { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkloadError {
    #[error("unsupported width {0} bits (must be a positive multiple of 4)")]
    UnsupportedWidth(u32),
    #[error("size {0} is below the builder minimum")]
    TooSmall(usize),
    #[error("dependency cycle through node {0}")]
    Cycle(usize),
    #[error("node id {found} at position {pos}")]
    BadId { pos: usize, found: usize },
    #[error("edge {0} -> {1} references a missing node")]
    DanglingEdge(usize, usize),
    #[error("move {0} must have at most one predecessor, and it must compute")]
    BadMoveInput(usize),
    #[error("move {0} feeds another move")]
    MoveIntoMove(usize),
    #[error("move {id} has broadcast width {width}")]
    BadBroadcast { id: usize, width: u8 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A dependency graph of LUT operations and row moves.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorkloadDag {
    pub label: String,
    pub nodes: Vec<DagNode>,
    pub edges: Vec<(usize, usize)>,
    /// Builder-level counts (32-bit multiplies, visits, ...).
    pub meta: BTreeMap<String, usize>,
}

impl WorkloadDag {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn preds(&self) -> Vec<Vec<usize>> {
        let mut p = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            p[b].push(a);
        }
        p
    }

    pub fn succs(&self) -> Vec<Vec<usize>> {
        let mut s = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            s[a].push(b);
        }
        s
    }

    pub fn count_op(&self, op: ComputeOp) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Compute(op)).count()
    }

    pub fn move_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_move()).count()
    }

    /// Kahn order; errors on a cycle.
    pub fn topo_order(&self) -> Result<Vec<usize>, WorkloadError> {
        let n = self.nodes.len();
        let succs = self.succs();
        let mut indeg = vec![0usize; n];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        let mut stack: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &s in succs[v].iter().rev() {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    stack.push(s);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&v| indeg[v] > 0).unwrap_or(0);
            return Err(WorkloadError::Cycle(stuck));
        }
        Ok(order)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id != pos {
                return Err(WorkloadError::BadId { pos, found: node.id });
            }
            if let NodeKind::Move { broadcast_width, .. } = node.kind {
                if broadcast_width == 0 || broadcast_width as usize > MAX_BROADCAST {
                    return Err(WorkloadError::BadBroadcast { id: pos, width: broadcast_width });
                }
            }
        }
        let n = self.nodes.len();
        for &(a, b) in &self.edges {
            if a >= n || b >= n {
                return Err(WorkloadError::DanglingEdge(a, b));
            }
        }
        let preds = self.preds();
        for (v, p) in preds.iter().enumerate() {
            if self.nodes[v].is_move() && (p.len() > 1 || p.iter().any(|&u| self.nodes[u].is_move())) {
                return Err(WorkloadError::BadMoveInput(v));
            }
        }
        for &(a, b) in &self.edges {
            if self.nodes[a].is_move() && self.nodes[b].is_move() {
                return Err(WorkloadError::MoveIntoMove(a));
            }
        }
        self.topo_order().map(|_| ())
    }

    /// Line format: `node <id> <kind> [<subarray>]` then `edge <src> <dst>`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.nodes {
            let kind = match n.kind {
                NodeKind::Compute(op) => op.name().to_string(),
                NodeKind::Move { size_rows, broadcast_width } => format!("move:{size_rows}x{broadcast_width}"),
            };
            match n.preferred_subarray {
                Some(sa) => writeln!(s, "node {} {} {}", n.id, kind, sa),
                None => writeln!(s, "node {} {}", n.id, kind),
            }
            .expect("writing to a String");
        }
        for (a, b) in &self.edges {
            writeln!(s, "edge {a} {b}").expect("writing to a String");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<WorkloadDag, WorkloadError> {
        let mut dag = WorkloadDag { label: "imported".into(), ..Default::default() };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: &str| WorkloadError::Parse { line, msg: msg.to_string() };
            let words: Vec<&str> = raw.split_whitespace().collect();
            let num = |w: &str| w.parse::<usize>().map_err(|_| err(&format!("bad number `{w}`")));
            match words.as_slice() {
                [] => {}
                [c, ..] if c.starts_with('#') => {}
                ["node", id, kind, rest @ ..] => {
                    let kind = parse_kind(kind).ok_or_else(|| err(&format!("unknown kind `{kind}`")))?;
                    let preferred_subarray = match rest {
                        [] => None,
                        [sa] => Some(num(sa)?),
                        _ => return Err(err("trailing fields")),
                    };
                    dag.nodes.push(DagNode { id: num(id)?, kind, preferred_subarray });
                }
                ["edge", a, b] => dag.edges.push((num(a)?, num(b)?)),
                _ => return Err(err("expected `node` or `edge`")),
            }
        }
        dag.validate()?;
        Ok(dag)
    }
}

fn parse_kind(s: &str) -> Option<NodeKind> {
    let op = match s {
        "add4" => Some(ComputeOp::Lut4Add),
        "mul4" => Some(ComputeOp::Lut4Mul),
        "shift" => Some(ComputeOp::LutShift),
        "agg" => Some(ComputeOp::Aggregate),
        _ => None,
    };
    if let Some(op) = op {
        return Some(NodeKind::Compute(op));
    }
    let (rows, width) = s.strip_prefix("move:")?.split_once('x')?;
    Some(NodeKind::Move { size_rows: rows.parse().ok()?, broadcast_width: width.parse().ok()? })
}

/// Incremental DAG construction. Move broadcast widths are filled in from
/// their successors when the DAG is finished.
#[derive(Debug, Default)]
pub struct DagBuilder {
    dag: WorkloadDag,
}

impl DagBuilder {
    pub fn new(label: impl Into<String>) -> Self {
        DagBuilder { dag: WorkloadDag { label: label.into(), ..Default::default() } }
    }

    fn push(&mut self, kind: NodeKind, sa: Option<usize>, preds: &[usize]) -> usize {
        let id = self.dag.nodes.len();
        self.dag.nodes.push(DagNode { id, kind, preferred_subarray: sa });
        self.dag.edges.extend(preds.iter().map(|&p| (p, id)));
        id
    }

    pub fn compute(&mut self, op: ComputeOp, sa: usize, preds: &[usize]) -> usize {
        self.push(NodeKind::Compute(op), Some(sa), preds)
    }

    pub fn compute_anywhere(&mut self, op: ComputeOp, preds: &[usize]) -> usize {
        self.push(NodeKind::Compute(op), None, preds)
    }

    /// A move out of `from`; attach consumers with [`DagBuilder::edge`].
    pub fn movement(&mut self, from: Option<usize>, size_rows: u32) -> usize {
        let preds: Vec<usize> = from.into_iter().collect();
        self.push(NodeKind::Move { size_rows, broadcast_width: 1 }, None, &preds)
    }

    /// Send an operand to every consumer, one move per destination subarray.
    pub fn supply(&mut self, op: Operand, consumers: &[usize]) {
        match op {
            Operand::Resident => {}
            Operand::Value(v) => self.deliver(v, consumers),
            Operand::Stored(home) => {
                let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
                for &c in consumers {
                    let sa = self.subarray_of(c);
                    if sa != Some(home) {
                        groups.entry(sa).or_default().push(c);
                    }
                }
                for group in groups.into_values() {
                    let m = self.push(NodeKind::Move { size_rows: 1, broadcast_width: 1 }, Some(home), &[]);
                    for c in group {
                        self.edge(m, c);
                    }
                }
            }
        }
    }

    pub fn edge(&mut self, a: usize, b: usize) {
        self.dag.edges.push((a, b));
    }

    pub fn bump(&mut self, key: &str, by: usize) {
        *self.dag.meta.entry(key.to_string()).or_default() += by;
    }

    pub fn node_count(&self) -> usize {
        self.dag.nodes.len()
    }

    pub fn subarray_of(&self, id: usize) -> Option<usize> {
        self.dag.nodes[id].preferred_subarray
    }

    /// Send `value` (a compute node) to every consumer with one move per
    /// destination subarray. Consumers in the producer's own subarray read
    /// it in place.
    pub fn deliver(&mut self, value: usize, consumers: &[usize]) {
        self.fan_out(value, consumers, 1);
    }

    /// Like [`DagBuilder::deliver`], but each move reaches up to `width`
    /// destination subarrays at once.
    pub fn broadcast(&mut self, value: usize, consumers: &[usize]) {
        self.fan_out(value, consumers, MAX_BROADCAST);
    }

    fn fan_out(&mut self, value: usize, consumers: &[usize], width: usize) {
        let home = self.subarray_of(value);
        let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
        for &c in consumers {
            let sa = self.subarray_of(c);
            if sa.is_some() && sa == home {
                self.edge(value, c);
            } else {
                groups.entry(sa).or_default().push(c);
            }
        }
        let targets: Vec<Vec<usize>> = groups.into_values().collect();
        for chunk in targets.chunks(width) {
            let m = self.movement(Some(value), 1);
            for group in chunk {
                for &c in group {
                    self.edge(m, c);
                }
            }
        }
    }

    pub fn finish(mut self) -> WorkloadDag {
        let succs = self.dag.succs();
        for (v, out) in succs.iter().enumerate() {
            if let NodeKind::Move { size_rows, .. } = self.dag.nodes[v].kind {
                let dests: BTreeSet<Option<usize>> =
                    out.iter().map(|&s| self.dag.nodes[s].preferred_subarray).collect();
                let anon = out.iter().filter(|&&s| self.dag.nodes[s].preferred_subarray.is_none()).count();
                let width = (dests.iter().filter(|d| d.is_some()).count() + anon).clamp(1, MAX_BROADCAST);
                self.dag.nodes[v].kind = NodeKind::Move { size_rows, broadcast_width: width as u8 };
            }
        }
        self.dag.edges.sort_unstable();
        self.dag.edges.dedup();
        self.dag
    }
}

/// Where an operand of a composite comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    /// Already present wherever it is read.
    Resident,
    /// Result of a compute node.
    Value(usize),
    /// Kept in a subarray and loaded by root moves.
    Stored(usize),
}

/// Result of a composite operation: its final node and footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Composite {
    pub out: usize,
    pub out_subarray: usize,
    /// Subarrays used, starting at the base.
    pub width: usize,
}

fn nibbles(bits: u32) -> Result<usize, WorkloadError> {
    if bits == 0 || !bits.is_multiple_of(4) {
        return Err(WorkloadError::UnsupportedWidth(bits));
    }
    Ok((bits / 4) as usize)
}

/// Subarrays a `bits`-wide adder occupies.
pub fn add_width(bits: u32) -> usize {
    let k = (bits / 4).max(1) as usize;
    if k == 1 {
        1
    } else {
        k + 1
    }
}

/// Wide addition at `base`: one 4-bit adder per nibble, each sum moved to a
/// central aggregation subarray, then a carry-aggregation chain there.
/// `inputs` are delivered to every adder.
pub fn wide_add_into(
    b: &mut DagBuilder,
    bits: u32,
    base: usize,
    inputs: &[Operand],
) -> Result<Composite, WorkloadError> {
    add_parts(b, bits, base, inputs).map(|(c, _)| c)
}

/// [`wide_add_into`] that also returns the per-nibble adders.
fn add_parts(
    b: &mut DagBuilder,
    bits: u32,
    base: usize,
    inputs: &[Operand],
) -> Result<(Composite, Vec<usize>), WorkloadError> {
    let k = nibbles(bits)?;
    if k == 1 {
        let a = b.compute(ComputeOp::Lut4Add, base, &[]);
        for &v in inputs {
            b.supply(v, &[a]);
        }
        return Ok((Composite { out: a, out_subarray: base, width: 1 }, vec![a]));
    }
    let agg_sa = base + k / 2;
    let adder_sa = |i: usize| if i < k / 2 { base + i } else { base + i + 1 };
    let adders: Vec<usize> = (0..k).map(|i| b.compute(ComputeOp::Lut4Add, adder_sa(i), &[])).collect();
    for &v in inputs {
        b.supply(v, &adders);
    }
    // nearest nibbles reach the aggregator first
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| (adder_sa(i).abs_diff(agg_sa), i));
    let moves: Vec<usize> = order.iter().map(|&i| b.movement(Some(adders[i]), 1)).collect();
    let mut acc = b.compute(ComputeOp::Aggregate, agg_sa, &[moves[0], moves[1]]);
    for &m in &moves[2..] {
        acc = b.compute(ComputeOp::Aggregate, agg_sa, &[acc, m]);
    }
    Ok((Composite { out: acc, out_subarray: agg_sa, width: k + 1 }, adders))
}

/// Multipliers sharing one accumulator: a bank's worth of subarrays.
pub const MUL_GROUP: usize = 16;

/// Wide multiplication `a * b` at `base`, schoolbook by layers.
/// Multipliers are split into groups of at most [`MUL_GROUP`], each around
/// its own accumulator subarray holding `b`. For layer `j` every
/// accumulator extracts nibble `j` of `b` and sends it to its multipliers,
/// which hold `a`, form `a_i * b_j`, shift it into place and send it back.
/// The next layer's multiplies only wait for their nibble, so they may run
/// while earlier partial products are still moving. Group sums meet in the
/// first accumulator.
pub fn wide_mul_into(
    b: &mut DagBuilder,
    bits: u32,
    base: usize,
    a: Operand,
    bv: Operand,
) -> Result<Composite, WorkloadError> {
    let k = nibbles(bits)?;
    if k == 1 {
        let m = b.compute(ComputeOp::Lut4Mul, base, &[]);
        b.supply(a, &[m]);
        b.supply(bv, &[m]);
        return Ok(Composite { out: m, out_subarray: base, width: 1 });
    }
    let groups = k.div_ceil(MUL_GROUP);
    let mut group_out = Vec::new();
    let mut all_muls = Vec::new();
    let mut first_nibs = Vec::new();
    let mut cursor = base;
    let mut first_acc = None;
    for gi in 0..groups {
        let size = MUL_GROUP.min(k - gi * MUL_GROUP);
        let acc_sa = cursor + size / 2;
        first_acc.get_or_insert(acc_sa);
        let mul_sa: Vec<usize> = (0..size).map(|i| if i < size / 2 { cursor + i } else { cursor + i + 1 }).collect();
        cursor += size + 1;
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by_key(|&i| (mul_sa[i].abs_diff(acc_sa), i));
        let mut acc: Option<usize> = None;
        let mut nib: Option<usize> = None;
        for _ in 0..k {
            let layer: Vec<usize> = mul_sa.iter().map(|&sa| b.compute(ComputeOp::Lut4Mul, sa, &[])).collect();
            let n = b.compute(ComputeOp::LutShift, acc_sa, &nib.into_iter().collect::<Vec<_>>());
            if nib.is_none() {
                first_nibs.push(n);
            }
            nib = Some(n);
            b.deliver(n, &layer);
            all_muls.extend(&layer);
            for &i in &order {
                let s = b.compute(ComputeOp::LutShift, mul_sa[i], &[layer[i]]);
                let m = b.movement(Some(s), 1);
                let preds: Vec<usize> = acc.into_iter().chain([m]).collect();
                acc = Some(b.compute(ComputeOp::Aggregate, acc_sa, &preds));
            }
        }
        group_out.push(acc.expect("k > 1 has layers"));
    }
    b.supply(a, &all_muls);
    b.supply(bv, &first_nibs);
    let acc_sa = first_acc.expect("at least one group");
    let mut out = group_out[0];
    for &other in &group_out[1..] {
        let m = b.movement(Some(other), 1);
        out = b.compute(ComputeOp::Aggregate, acc_sa, &[out, m]);
    }
    Ok(Composite { out, out_subarray: acc_sa, width: cursor - base })
}

/// Subarrays a `bits`-wide multiplier occupies.
pub fn mul_width(bits: u32) -> usize {
    let k = (bits / 4).max(1) as usize;
    if k == 1 {
        1
    } else {
        k + k.div_ceil(MUL_GROUP)
    }
}

pub fn build_wide_add(bits: u32) -> Result<WorkloadDag, WorkloadError> {
    if ![4, 8, 16, 32, 64, 128].contains(&bits) && (bits == 0 || !bits.is_multiple_of(4)) {
        return Err(WorkloadError::UnsupportedWidth(bits));
    }
    let mut b = DagBuilder::new(format!("wide_add{bits}"));
    wide_add_into(&mut b, bits, 0, &[])?;
    b.bump("add", 1);
    Ok(b.finish())
}

pub fn build_wide_mul(bits: u32) -> Result<WorkloadDag, WorkloadError> {
    let mut b = DagBuilder::new(format!("wide_mul{bits}"));
    wide_mul_into(&mut b, bits, 0, Operand::Resident, Operand::Resident)?;
    b.bump("mul", 1);
    Ok(b.finish())
}

/// Value width of the application kernels.
pub const APP_BITS: u32 = 32;

/// Subarrays per block in application layouts. Each 32-bit composite gets
/// its own block, and blocks map one-to-one onto banks.
pub const APP_BANK_SPAN: usize = 16;

/// Hands out bank-aligned blocks for composites.
#[derive(Debug, Default)]
struct Blocks {
    next: usize,
}

impl Blocks {
    fn take(&mut self) -> usize {
        self.next += 1;
        (self.next - 1) * APP_BANK_SPAN
    }

    /// Homes for `count` input values, one bank each.
    fn store(&mut self, count: usize) -> Vec<Operand> {
        (0..count).map(|_| Operand::Stored(self.take())).collect()
    }
}

fn app_builder(label: String) -> DagBuilder {
    let mut b = DagBuilder::new(label);
    b.dag.meta.insert(crate::scheduler::BANK_SPAN_KEY.to_string(), APP_BANK_SPAN);
    b
}

fn add(b: &mut DagBuilder, blocks: &mut Blocks, x: Operand, y: Operand) -> Result<usize, WorkloadError> {
    b.bump("adds", 1);
    Ok(wide_add_into(b, APP_BITS, blocks.take(), &[x, y])?.out)
}

fn mul(b: &mut DagBuilder, blocks: &mut Blocks, x: Operand, y: Operand) -> Result<usize, WorkloadError> {
    Ok(wide_mul_into(b, APP_BITS, blocks.take(), x, y)?.out)
}

/// Pairwise reduction of `values` with 32-bit adds, each in a fresh block.
fn reduce_sum(b: &mut DagBuilder, blocks: &mut Blocks, mut values: Vec<usize>) -> Result<usize, WorkloadError> {
    while values.len() > 1 {
        let mut next = Vec::with_capacity(values.len().div_ceil(2));
        for pair in values.chunks(2) {
            match *pair {
                [x, y] => next.push(add(b, blocks, Operand::Value(x), Operand::Value(y))?),
                [x] => next.push(x),
                _ => unreachable!("chunks of two"),
            }
        }
        values = next;
    }
    Ok(values[0])
}

/// Sum of the products of `pairs` of stored operands. Every product has
/// its own multiplier; the sums form a tree.
fn dot_product(b: &mut DagBuilder, blocks: &mut Blocks, pairs: &[(Operand, Operand)]) -> Result<usize, WorkloadError> {
    let products: Vec<usize> = pairs.iter().map(|&(x, y)| mul(b, blocks, x, y)).collect::<Result<_, _>>()?;
    if products.len() > 1 {
        b.bump("app_moves", products.len());
    }
    reduce_sum(b, blocks, products)
}

/// Product of two `n`×`n` stored matrices: every output element multiplies
/// its `n` pairs in parallel and reduces the products with 32-bit adds.
/// Each input element is loaded into all `n` multipliers that use it.
pub fn build_mm(n: usize) -> Result<WorkloadDag, WorkloadError> {
    if n == 0 {
        return Err(WorkloadError::TooSmall(n));
    }
    let mut b = app_builder(format!("mm{n}"));
    let mut blocks = Blocks::default();
    let a = blocks.store(n * n);
    let m = blocks.store(n * n);
    for i in 0..n {
        for j in 0..n {
            let pairs: Vec<(Operand, Operand)> = (0..n).map(|k| (a[i * n + k], m[k * n + j])).collect();
            dot_product(&mut b, &mut blocks, &pairs)?;
        }
    }
    b.bump("multiplies", n * n * n);
    Ok(b.finish())
}

/// One 32-bit op per node: every product of an output element is computed
/// in subarray 0 and moved to subarray 1, which sums them.
pub fn build_mm_coarse(n: usize) -> Result<WorkloadDag, WorkloadError> {
    if n == 0 {
        return Err(WorkloadError::TooSmall(n));
    }
    let mut b = DagBuilder::new(format!("mm_coarse{n}"));
    for _ in 0..n * n {
        let products: Vec<usize> = (0..n).map(|_| b.compute(ComputeOp::Lut4Mul, 0, &[])).collect();
        b.bump("multiplies", n);
        if n == 1 {
            continue;
        }
        let arrived: Vec<usize> = products.iter().map(|&p| b.movement(Some(p), 1)).collect();
        let mut acc = b.compute(ComputeOp::Aggregate, 1, &[arrived[0], arrived[1]]);
        for &m in &arrived[2..] {
            acc = b.compute(ComputeOp::Aggregate, 1, &[acc, m]);
        }
    }
    Ok(b.finish())
}

/// Matrix-multiply segment on two subarrays: each computes three products,
/// and the first product of subarray 0 joins the first of subarray 1.
pub fn build_mm_segment() -> WorkloadDag {
    let mut b = DagBuilder::new("mm_segment");
    let left: Vec<usize> = (0..3).map(|_| b.compute(ComputeOp::Lut4Mul, 0, &[])).collect();
    let right: Vec<usize> = (0..3).map(|_| b.compute(ComputeOp::Lut4Mul, 1, &[])).collect();
    let moved = b.movement(Some(left[0]), 1);
    b.compute(ComputeOp::Aggregate, 1, &[moved, right[0]]);
    b.finish()
}

/// Naive product of two stored degree-`d` polynomials: every coefficient
/// pair is multiplied, and output coefficient `k` sums its contributions.
pub fn build_pmm(degree: usize) -> Result<WorkloadDag, WorkloadError> {
    let mut b = app_builder(format!("pmm{degree}"));
    let mut blocks = Blocks::default();
    let x = blocks.store(degree + 1);
    let y = blocks.store(degree + 1);
    for k in 0..=2 * degree {
        let lo = k.saturating_sub(degree);
        let pairs: Vec<(Operand, Operand)> = (lo..=k.min(degree)).map(|i| (x[i], y[k - i])).collect();
        debug_assert_eq!(pairs.len(), pmm_contributions(degree, k));
        dot_product(&mut b, &mut blocks, &pairs)?;
    }
    b.bump("multiplies", (degree + 1) * (degree + 1));
    Ok(b.finish())
}

/// Number of `a_i * b_j` terms with `i + j = k`.
pub fn pmm_contributions(d: usize, k: usize) -> usize {
    k.min(d) - k.saturating_sub(d) + 1
}

/// Transform size for a polynomial of `degree`: next power of two.
pub fn ntt_points(degree: usize) -> usize {
    degree.max(2).next_power_of_two()
}

/// Radix-2 transform over `ntt_points(degree)` stored points. Each
/// butterfly multiplies both inputs by stored twiddles, then forms sum and
/// difference. A stage with span `h` reads `2h` distinct twiddles (at most
/// `n`), so early stages share each twiddle among many butterflies.
pub fn build_ntt(degree: usize) -> Result<WorkloadDag, WorkloadError> {
    if degree < 2 {
        return Err(WorkloadError::TooSmall(degree));
    }
    let n = ntt_points(degree);
    let stages = n.trailing_zeros() as usize;
    let mut b = app_builder(format!("ntt{n}"));
    let mut blocks = Blocks::default();
    let mut current: Vec<Operand> = blocks.store(n);
    for level in 0..stages {
        let half = 1 << level;
        let twiddles = blocks.store(2 * half);
        let mut next = current.clone();
        for (i, j) in butterfly_pairs(n, level) {
            let slot = i % half;
            let ta = mul(&mut b, &mut blocks, current[i], twiddles[slot])?;
            let tb = mul(&mut b, &mut blocks, current[j], twiddles[half + slot])?;
            next[i] = Operand::Value(add(&mut b, &mut blocks, Operand::Value(ta), Operand::Value(tb))?);
            next[j] = Operand::Value(add(&mut b, &mut blocks, Operand::Value(ta), Operand::Value(tb))?);
            b.bump("butterflies", 1);
        }
        current = next;
        b.bump("stages", 1);
    }
    b.bump("points", n);
    Ok(b.finish())
}

/// Index pairs combined by the stage whose butterflies span `1 << level`.
pub fn butterfly_pairs(n: usize, level: usize) -> Vec<(usize, usize)> {
    let half = 1 << level;
    (0..n).step_by(2 * half).flat_map(|s| (s..s + half).map(move |i| (i, i + half))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchKind {
    Bfs,
    Dfs,
}

/// Scanner blocks shared by the comparisons of one visit.
pub const GRAPH_SCANNERS: usize = 8;

/// Worst-case search of a complete graph with a stored adjacency matrix.
/// Every node is visited once and all its neighbours are compared on a
/// fixed pool of scanner blocks; each scanner receives the visited node
/// once and compares it against the adjacency entries it loads. Each
/// scanner folds its results locally and sends one partial to the
/// frontier subarray, which releases the next visit. Breadth- and depth-first orders differ only in
/// which neighbour each comparison slot handles.
pub fn build_graph_search(nodes: usize, kind: SearchKind) -> Result<WorkloadDag, WorkloadError> {
    if nodes == 0 {
        return Err(WorkloadError::TooSmall(0));
    }
    let label = match kind {
        SearchKind::Bfs => "bfs",
        SearchKind::Dfs => "dfs",
    };
    let mut b = app_builder(format!("{label}{nodes}"));
    let mut blocks = Blocks::default();
    let frontier_sa = blocks.take();
    let adjacency = blocks.store(nodes * nodes);
    let pool = GRAPH_SCANNERS.min(nodes.saturating_sub(1)).max(1);
    let scanners: Vec<usize> = (0..pool).map(|_| blocks.take()).collect();
    let mut prev: Option<usize> = None;
    for v in 0..nodes {
        let visit = b.compute(ComputeOp::Aggregate, frontier_sa, &prev.into_iter().collect::<Vec<_>>());
        b.bump("visits", 1);
        let neighbours: Vec<usize> = match kind {
            SearchKind::Bfs => (0..nodes).filter(|&u| u != v).collect(),
            SearchKind::Dfs => (0..nodes).rev().filter(|&u| u != v).collect(),
        };
        let mut readers = vec![Vec::new(); scanners.len()];
        let mut partial: Vec<Option<usize>> = vec![None; scanners.len()];
        for (slot, &u) in neighbours.iter().enumerate() {
            let unit = slot % scanners.len();
            let (scan, adders) = add_parts(&mut b, APP_BITS, scanners[unit], &[adjacency[v * nodes + u]])?;
            readers[unit].extend(adders);
            b.bump("scans", 1);
            partial[unit] = Some(match partial[unit] {
                Some(p) => b.compute(ComputeOp::Aggregate, scan.out_subarray, &[p, scan.out]),
                None => scan.out,
            });
        }
        for r in &readers {
            b.deliver(visit, r);
        }
        let mut acc = visit;
        for p in partial.into_iter().flatten() {
            let m = b.movement(Some(p), 1);
            acc = b.compute(ComputeOp::Aggregate, frontier_sa, &[acc, m]);
        }
        prev = Some(acc);
    }
    Ok(b.finish())
}

/// Random valid DAG over `subarrays` subarrays: computes with random ops
/// and placement, moves fed by exactly one compute, edges only forward.
pub fn random_dag<R: rand::Rng>(rng: &mut R, nodes: usize, subarrays: usize) -> WorkloadDag {
    const OPS: [ComputeOp; 4] = [ComputeOp::Lut4Add, ComputeOp::Lut4Mul, ComputeOp::LutShift, ComputeOp::Aggregate];
    let mut b = DagBuilder::new("random");
    let mut computes: Vec<usize> = Vec::new();
    let mut moves: Vec<usize> = Vec::new();
    for _ in 0..nodes {
        if !computes.is_empty() && rng.gen_bool(0.35) {
            let from = computes[rng.gen_range(0..computes.len())];
            moves.push(b.movement(Some(from), 1));
            continue;
        }
        let op = OPS[rng.gen_range(0..OPS.len())];
        let sa = rng.gen_bool(0.85).then(|| rng.gen_range(0..subarrays.max(1)));
        let mut preds = Vec::new();
        for _ in 0..rng.gen_range(0..3) {
            let pool = if rng.gen_bool(0.5) { &moves } else { &computes };
            if !pool.is_empty() {
                preds.push(pool[rng.gen_range(0..pool.len())]);
            }
        }
        preds.sort_unstable();
        preds.dedup();
        let id = match sa {
            Some(sa) => b.compute(op, sa, &preds),
            None => b.compute_anywhere(op, &preds),
        };
        computes.push(id);
    }
    b.finish()
}
