mod common;

use alegnn::ale::{
    aggregate_profiles, ale_approximate, ale_exact, center_profile, explain_subsets, feature_grid, sample_subsets,
    AleMode, AleProfile, AleRequest, BinGrid, BinStrategy, Normalization,
};
use alegnn::gnn::{forward_with_features, sigmoid, Arch, GnnModel, InferenceSession};
use alegnn::{build_graph, Graph};
use common::{random_graph, random_model};
use ndarray::Array2;
use proptest::prelude::*;

fn arch_of(i: u8) -> Arch {
    if i % 2 == 0 {
        Arch::Gcn
    } else {
        Arch::Gat
    }
}

/// Per-bin means computed with one full forward pass per evaluation.
/// `joint` moves a whole bin together, otherwise one node at a time.
fn brute_force(
    model: &GnnModel,
    g: &Graph,
    grid: &BinGrid,
    modified: &[usize],
    targets: &[usize],
    joint: bool,
) -> Vec<f64> {
    let f = grid.feature;
    let nb = grid.num_bins();
    let mut out = vec![0.0; nb];
    for h in 0..nb {
        let members: Vec<usize> = modified
            .iter()
            .copied()
            .filter(|&v| grid.bin_of(g.features()[[v, f]]) == Some(h))
            .collect();
        if members.is_empty() {
            continue;
        }
        let groups: Vec<Vec<usize>> = if joint {
            vec![members.clone()]
        } else {
            members.iter().map(|&v| vec![v]).collect()
        };
        let mut sum = 0.0;
        for group in groups {
            let mut x = g.features().clone();
            for &v in &group {
                x[[v, f]] = grid.upper(h);
            }
            let hi = forward_with_features(model, g, x.view()).unwrap();
            for &v in &group {
                x[[v, f]] = grid.lower(h);
            }
            let lo = forward_with_features(model, g, x.view()).unwrap();
            for &v in &group {
                for &u in targets {
                    sum += sigmoid(hi.row(v).dot(&hi.row(u))) - sigmoid(lo.row(v).dot(&lo.row(u)));
                }
            }
        }
        out[h] = sum / (members.len() * targets.len()) as f64;
    }
    out
}

fn quantile_grid(g: &Graph, feature: usize, bins: usize) -> BinGrid {
    let mut req = AleRequest::new(feature, 1, 1, 0, AleMode::Exact);
    req.num_bins = bins;
    feature_grid(g, &req).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimators_match_brute_force(
        seed in 0u64..1000,
        arch in 0u8..2,
        norm in any::<bool>(),
        n in 20usize..45,
        m in 3usize..12,
        k in 1usize..8,
    ) {
        let g = random_graph(n, 3, 0.08, seed);
        let model = random_model(arch_of(arch), &[3, 5, 4], norm, seed + 1);
        let session = InferenceSession::new(&model, &g).unwrap();
        let grid = quantile_grid(&g, 1, 4);
        let s = sample_subsets(n, m, k, seed).unwrap();
        for (mode, joint) in [(AleMode::Exact, false), (AleMode::Approximate, true)] {
            let (p, _) = explain_subsets(&session, &grid, &s.modified, &s.targets, mode, Normalization::PerBin).unwrap();
            let want = brute_force(&model, &g, &grid, &s.modified, &s.targets, joint);
            for (a, b) in p.local_effects.iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12, "{mode:?}: {a} vs {b}");
            }
            prop_assert_eq!(p.accumulated[0], 0.0);
            for h in 0..grid.num_bins() {
                let step = p.accumulated[h + 1] - p.accumulated[h];
                prop_assert!((step - p.local_effects[h]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn modified_order_does_not_matter(seed in 0u64..1000, arch in 0u8..2) {
        let g = random_graph(40, 3, 0.06, seed);
        let model = random_model(arch_of(arch), &[3, 4, 4], true, seed);
        let session = InferenceSession::new(&model, &g).unwrap();
        let grid = quantile_grid(&g, 0, 5);
        let s = sample_subsets(40, 12, 6, seed).unwrap();
        let mut reversed = s.modified.clone();
        reversed.reverse();
        for mode in [AleMode::Exact, AleMode::Approximate] {
            let (a, _) = explain_subsets(&session, &grid, &s.modified, &s.targets, mode, Normalization::PerBin).unwrap();
            let (b, _) = explain_subsets(&session, &grid, &reversed, &s.targets, mode, Normalization::PerBin).unwrap();
            prop_assert_eq!(a.accumulated, b.accumulated);
        }
    }

    #[test]
    fn estimators_agree_without_edges(seed in 0u64..1000, arch in 0u8..2, m in 2usize..20) {
        let g = random_graph(30, 2, 0.0, seed);
        prop_assert_eq!(g.num_edges(), 0);
        let model = random_model(arch_of(arch), &[2, 4, 3], false, seed);
        let req = AleRequest::new(1, m, 5, seed, AleMode::Exact);
        let e = ale_exact(&model, &g, &req).unwrap();
        let a = ale_approximate(&model, &g, &AleRequest { mode: AleMode::Approximate, ..req }).unwrap();
        for (x, y) in e.accumulated.iter().zip(&a.accumulated) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn global_normalization_rescales_per_bin(seed in 0u64..1000, arch in 0u8..2) {
        let g = random_graph(36, 3, 0.05, seed);
        let model = random_model(arch_of(arch), &[3, 4, 4], false, seed);
        let session = InferenceSession::new(&model, &g).unwrap();
        let grid = quantile_grid(&g, 2, 4);
        let s = sample_subsets(36, 10, 5, seed).unwrap();
        for mode in [AleMode::Exact, AleMode::Approximate] {
            let (per, _) = explain_subsets(&session, &grid, &s.modified, &s.targets, mode, Normalization::PerBin).unwrap();
            let (glob, _) = explain_subsets(&session, &grid, &s.modified, &s.targets, mode, Normalization::Global).unwrap();
            let total: usize = per.bin_counts.iter().sum();
            for h in 0..grid.num_bins() {
                let want = per.local_effects[h] * per.bin_counts[h] as f64 / total as f64;
                prop_assert!((glob.local_effects[h] - want).abs() <= 1e-14);
            }
        }
    }
}

#[test]
fn bin_only_separation_is_not_enough() {
    // Nodes 0 and 1 share a bin and are far apart, but target 3 is
    // adjacent to node 1, so moving the bin jointly leaks into node 0's
    // predictions.
    let x = Array2::from_shape_fn((6, 1), |(i, _)| [0.1, 0.15, 0.9, 0.5, 0.12, 0.95][i]);
    let g = build_graph(&[(1, 3), (4, 5)], x).unwrap();
    let model = random_model(Arch::Gcn, &[1, 4, 4], false, 9);
    let session = InferenceSession::new(&model, &g).unwrap();
    let grid = BinGrid::new(0, vec![0.0, 0.3, 1.0], BinStrategy::EqualWidth).unwrap();
    let modified = [0, 1, 2];
    let run = |mode, targets: &[usize]| {
        explain_subsets(&session, &grid, &modified, targets, mode, Normalization::PerBin)
            .unwrap()
            .0
            .accumulated
    };
    let gap = |targets: &[usize]| {
        let e = run(AleMode::Exact, targets);
        let a = run(AleMode::Approximate, targets);
        e.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    assert!(gap(&[3]) > 1e-6);
    // a target outside everyone's receptive field restores equality
    assert!(gap(&[5]) <= 1e-15);
}

#[test]
fn explanation_leaves_graph_and_counts_evaluations() {
    let g = random_graph(60, 3, 0.05, 4);
    let before = g.features().clone();
    let model = random_model(Arch::Gat, &[3, 6, 4], true, 4);
    let req = AleRequest::new(0, 20, 10, 3, AleMode::Exact);
    let e = ale_exact(&model, &g, &req).unwrap();
    assert_eq!(g.features(), &before);
    assert_eq!(e.m, 20);
    assert_eq!(e.k, 10);
    assert_eq!(e.evaluations, 2 * 20);
    assert_eq!(e.total_predictions(), 20 * 10);
    assert!(e.validate().is_ok());

    let a = ale_approximate(&model, &g, &AleRequest { mode: AleMode::Approximate, ..req.clone() }).unwrap();
    let occupied = a.bin_counts.iter().filter(|&&c| c > 0).count();
    assert_eq!(a.evaluations, 2 * occupied);
    assert_eq!(a.bin_counts, e.bin_counts);

    // same seed, same subsets, same result
    assert_eq!(ale_exact(&model, &g, &req).unwrap(), e);
    // estimator and request mode must agree
    assert!(ale_approximate(&model, &g, &req).is_err());
    // m + k larger than the graph
    assert!(ale_exact(&model, &g, &AleRequest::new(0, 55, 10, 0, AleMode::Exact)).is_err());
}

#[test]
fn aggregation_and_centering_rules() {
    let g = random_graph(50, 3, 0.05, 8);
    let model = random_model(Arch::Gcn, &[3, 4, 4], false, 8);
    let run = |seed, mode| {
        let req = AleRequest::new(1, 12, 6, seed, mode);
        match mode {
            AleMode::Exact => ale_exact(&model, &g, &req),
            AleMode::Approximate => ale_approximate(&model, &g, &req),
        }
        .unwrap()
    };
    let e: Vec<AleProfile> = (0..3).map(|s| run(s, AleMode::Exact)).collect();
    let agg = aggregate_profiles(&e).unwrap();
    assert_eq!(agg.m, e.iter().map(|p| p.m).sum::<usize>());
    assert_eq!(agg.total_predictions(), e.iter().map(|p| p.total_predictions()).sum::<u64>());
    assert_eq!(aggregate_profiles(&e[..1]).unwrap(), e[0]);
    assert!(aggregate_profiles(&[]).is_err());
    assert!(aggregate_profiles(&[e[0].clone(), run(0, AleMode::Approximate)]).is_err());

    let c = center_profile(&agg).unwrap();
    assert!(c.centered);
    let total: usize = c.bin_counts.iter().sum();
    let mean: f64 = (0..c.grid.num_bins())
        .map(|h| c.bin_counts[h] as f64 * 0.5 * (c.accumulated[h] + c.accumulated[h + 1]))
        .sum::<f64>()
        / total as f64;
    assert!(mean.abs() <= 1e-15);
    assert!(center_profile(&c).is_err());
    assert!(aggregate_profiles(&[c.clone(), c]).is_err());
}
