use pimsim::workloads::*;

fn moves_and_aggregates(d: &WorkloadDag) -> (usize, usize) {
    (d.move_count(), d.count_op(ComputeOp::Aggregate))
}

#[test]
fn add16_decomposition() {
    // 4 nibble adders, each sum moved once, then 3 pairwise carry merges
    let d = build_wide_add(16).unwrap();
    let k = 16 / 4;
    assert_eq!(d.count_op(ComputeOp::Lut4Add), k);
    assert_eq!(moves_and_aggregates(&d), (k, k - 1));
    assert_eq!(d.len(), k + k + (k - 1));
}

#[test]
fn wide_counts_match_closed_forms() {
    for bits in (4..=128).step_by(4) {
        let k = (bits / 4) as usize;
        let add = build_wide_add(bits).unwrap();
        let (mv, agg) = if k == 1 { (0, 0) } else { (k, k - 1) };
        assert_eq!(add.count_op(ComputeOp::Lut4Add), k, "add{bits}");
        assert_eq!(moves_and_aggregates(&add), (mv, agg), "add{bits}");

        let mul = build_wide_mul(bits).unwrap();
        assert_eq!(mul.count_op(ComputeOp::Lut4Mul), k * k, "mul{bits}");
        if k > 1 {
            let groups = k.div_ceil(MUL_GROUP);
            // one shift per partial product plus one nibble extraction
            // per layer in every group
            assert_eq!(mul.count_op(ComputeOp::LutShift), k * k + groups * k, "mul{bits}");
            assert_eq!(mul.count_op(ComputeOp::Aggregate), k * k + groups - 1, "mul{bits}");
        }
    }
}

#[test]
fn mul8_schoolbook() {
    // 2 nibbles per operand: 4 partial products, 4 shifted terms summed
    let d = build_wide_mul(8).unwrap();
    let mut terms = 0;
    for i in 0..2 {
        for j in 0..2 {
            let _shift = 4 * (i + j);
            terms += 1;
        }
    }
    assert_eq!(d.count_op(ComputeOp::Lut4Mul), terms);
    assert_eq!(d.count_op(ComputeOp::Aggregate), terms);
    assert!(d.move_count() >= terms);
}

#[test]
fn single_nibble_ops() {
    let a = build_wide_add(4).unwrap();
    assert_eq!((a.len(), a.move_count()), (1, 0));
    let m = build_wide_mul(4).unwrap();
    assert_eq!((m.count_op(ComputeOp::Lut4Mul), m.len()), (1, 1));
}

#[test]
fn bad_widths() {
    for bits in [0, 3, 30] {
        assert!(matches!(build_wide_add(bits), Err(WorkloadError::UnsupportedWidth(_))));
        assert!(matches!(build_wide_mul(bits), Err(WorkloadError::UnsupportedWidth(_))));
    }
}

#[test]
fn mm_counts() {
    for n in 1..=4 {
        let d = build_mm(n).unwrap();
        assert_eq!(d.meta["multiplies"], n * n * n);
        assert_eq!(d.count_op(ComputeOp::Lut4Mul), n * n * n * 64);
        d.validate().unwrap();
    }
    // a single product never moves between composites
    let one = build_mm(1).unwrap();
    assert_eq!(one.meta.get("app_moves").copied().unwrap_or(0), 0);
    assert_eq!(one.meta.get("adds").copied().unwrap_or(0), 0);
    assert!(build_mm(0).is_err());
}

#[test]
fn mm200_multiply_count() {
    let n: usize = 200;
    let mut count = 0usize;
    for _i in 0..n {
        for _j in 0..n {
            count += n;
        }
    }
    assert_eq!(count, 8_000_000);
    assert_eq!(build_mm(3).unwrap().meta["multiplies"], 27);
}

#[test]
fn two_subarray_mapping_is_mostly_movement() {
    let d = build_mm_coarse(4).unwrap();
    // each output: 4 products moved over, 3 aggregates to sum them
    let (moves, aggs) = (16 * 4, 16 * 3);
    assert_eq!(moves_and_aggregates(&d), (moves, aggs));
    let frac = moves as f64 / (moves + aggs) as f64;
    assert!((frac - 0.6).abs() < 0.05, "{frac}");
}

#[test]
fn pmm_counts() {
    assert_eq!(build_pmm(0).unwrap().meta["multiplies"], 1);
    assert_eq!(build_pmm(4).unwrap().meta["multiplies"], 25);
    assert_eq!(301 * 301, 90_601);
    // brute force the convolution buckets
    let d = 3;
    for k in 0..=2 * d {
        let brute = (0..=d).flat_map(|i| (0..=d).map(move |j| (i, j))).filter(|&(i, j)| i + j == k).count();
        assert_eq!(pmm_contributions(d, k), brute, "k = {k}");
    }
    let dag = build_pmm(3).unwrap();
    assert_eq!(dag.count_op(ComputeOp::Lut4Mul), 16 * 64);
    // every bucket sums its terms pairwise
    let adds: usize = (0..=6).map(|k| pmm_contributions(3, k) - 1).sum();
    assert_eq!(dag.meta["adds"], adds);
}

#[test]
fn ntt_padding_and_stages() {
    let d = build_ntt(300).unwrap();
    assert_eq!(d.meta["points"], 512);
    assert_eq!(d.meta["stages"], 9);
    assert_eq!(d.meta["butterflies"], 9 * 256);
    assert_eq!(ntt_points(300), 512);
}

#[test]
fn ntt_smallest() {
    let d = build_ntt(2).unwrap();
    assert_eq!(d.meta["butterflies"], 1);
    assert!(build_ntt(1).is_err());
}

#[test]
fn butterfly_stages_cover_every_point() {
    let n = 16;
    for level in 0..4 {
        let pairs = butterfly_pairs(n, level);
        assert_eq!(pairs.len(), n / 2);
        let mut seen: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        assert!(pairs.iter().all(|&(i, j)| j - i == 1 << level));
    }
}

#[test]
fn graph_search_counts() {
    let d = build_graph_search(5, SearchKind::Bfs).unwrap();
    assert_eq!(d.meta["visits"], 5);
    assert_eq!(d.meta["scans"], 5 * 4);
    let one = build_graph_search(1, SearchKind::Dfs).unwrap();
    assert_eq!(one.meta["visits"], 1);
    assert_eq!(one.meta.get("scans").copied().unwrap_or(0), 0);
    assert_eq!(one.len(), 1);
    assert!(build_graph_search(0, SearchKind::Bfs).is_err());
}

#[test]
fn bfs_and_dfs_have_equal_shape() {
    for n in [2, 7, 100] {
        let b = build_graph_search(n, SearchKind::Bfs).unwrap();
        let d = build_graph_search(n, SearchKind::Dfs).unwrap();
        assert_eq!(b.len(), d.len());
        assert_eq!(b.edges.len(), d.edges.len());
        assert_eq!(b.move_count(), d.move_count());
    }
}

#[test]
fn every_builder_emits_valid_dags() {
    let dags = [
        build_mm(3).unwrap(),
        build_pmm(5).unwrap(),
        build_ntt(16).unwrap(),
        build_graph_search(6, SearchKind::Bfs).unwrap(),
        build_mm_coarse(3).unwrap(),
        build_mm_segment(),
    ];
    for d in dags {
        d.validate().unwrap();
        assert_eq!(d.topo_order().unwrap().len(), d.len());
        for n in &d.nodes {
            if let NodeKind::Move { broadcast_width, .. } = n.kind {
                assert!((1..=MAX_BROADCAST as u8).contains(&broadcast_width), "{}", d.label);
            }
        }
    }
}

#[test]
fn text_format_round_trip() {
    let d = build_pmm(2).unwrap();
    let text = d.to_text();
    assert!(text.lines().any(|l| l.starts_with("node ")));
    assert!(text.lines().any(|l| l.starts_with("edge ")));
    let back = WorkloadDag::from_text(&text).unwrap();
    assert_eq!((back.nodes, back.edges), (d.nodes, d.edges));
}

#[test]
fn cycles_are_rejected() {
    let text = "node 0 add4 0\nnode 1 add4 1\nedge 0 1\nedge 1 0\n";
    assert!(matches!(WorkloadDag::from_text(text), Err(WorkloadError::Cycle(_))));
}
