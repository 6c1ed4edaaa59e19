use alegnn::ale::{AleProfile, BinGrid, BinStrategy, Method};
use alegnn::stats::{
    chi2_curve_test, chi2_sf, gamma_q, ln_gamma, permutation_test, rmse_test, spearman, CurveGroup,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn chi2_matches_statrs() {
    for dof in 1..=40usize {
        let dist = ChiSquared::new(dof as f64).unwrap();
        for &x in &[1e-3, 0.1, 0.5, 1.0, 2.0, 3.3, 5.0, 8.0, 11.07, 15.0, 25.0, 40.0, 80.0] {
            let ours = chi2_sf(x, dof).unwrap();
            let theirs = dist.sf(x);
            assert!(
                (ours - theirs).abs() <= 1e-12 || close(ours, theirs, 1e-9),
                "dof {dof} x {x}: {ours} vs {theirs}"
            );
        }
    }
}

#[test]
fn chi2_two_dof_closed_form() {
    for i in 0..200 {
        let x = i as f64 * 0.37;
        assert!((chi2_sf(x, 2).unwrap() - (-x / 2.0).exp()).abs() <= 1e-10, "x={x}");
    }
}

#[test]
fn chi2_one_dof_matches_erfc() {
    assert!((chi2_sf(3.841, 1).unwrap() - 0.05).abs() <= 5e-4);
    assert_eq!(chi2_sf(0.0, 7).unwrap(), 1.0);
    for i in 0..100 {
        let x = i as f64 * 0.21;
        // statrs erfc is accurate to about 1e-10 here
        let want = statrs::function::erf::erfc((x / 2.0).sqrt());
        assert!((chi2_sf(x, 1).unwrap() - want).abs() <= 1e-9, "x={x}");
    }
}

#[test]
fn gamma_functions_match_statrs() {
    for &a in &[0.1, 0.5, 1.0, 2.5, 7.0, 30.0, 150.0] {
        assert!(close(ln_gamma(a), statrs::function::gamma::ln_gamma(a), 1e-12) || (ln_gamma(a)).abs() < 1e-12);
        for &x in &[0.01, 0.5, 1.0, 3.0, 10.0, 60.0, 200.0] {
            let ours = gamma_q(a, x).unwrap();
            let theirs = statrs::function::gamma::gamma_ur(a, x);
            assert!(
                (ours - theirs).abs() <= 1e-12 || close(ours, theirs, 1e-9),
                "a {a} x {x}: {ours} vs {theirs}"
            );
        }
    }
    assert!(gamma_q(-1.0, 1.0).is_err());
    assert!(chi2_sf(-1.0, 3).is_err());
}

fn brute_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| {
                let below = v.iter().filter(|b| *b < a).count() as f64;
                let equal = v.iter().filter(|b| *b == a).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

proptest! {
    #[test]
    fn spearman_matches_rank_pearson(v in prop::collection::vec((0u8..6, 0u8..6), 3..20)) {
        let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
        match spearman(&x, &y).unwrap() {
            Some(r) => prop_assert!((r - brute_spearman(&x, &y)).abs() <= 1e-12),
            None => prop_assert!(x.iter().all(|a| *a == x[0]) || y.iter().all(|b| *b == y[0])),
        }
    }
}

fn grid() -> BinGrid {
    BinGrid::new(0, vec![0.0, 0.25, 0.5, 0.75, 1.0], BinStrategy::EqualWidth).unwrap()
}

fn curve(rng: &mut ChaCha8Rng, shift: f64) -> AleProfile {
    let deltas: Vec<f64> = (0..4).map(|_| 0.1 + shift + rng.random_range(-0.05..0.05)).collect();
    let counts: Vec<usize> = (0..4).map(|_| rng.random_range(3..12)).collect();
    let preds = counts.iter().map(|&c| 8 * c as u64).collect();
    AleProfile::from_local_effects(grid(), deltas, counts, preds, Method::Exact)
}

fn groups(seed: u64, na: usize, nb: usize, shift: f64) -> (CurveGroup, CurveGroup) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..na).map(|_| curve(&mut rng, 0.0)).collect();
    let b = (0..nb).map(|_| curve(&mut rng, shift)).collect();
    (CurveGroup::new("a", a).unwrap(), CurveGroup::new("b", b).unwrap())
}

#[test]
fn permutation_null_p_values_look_uniform() {
    let reps = 100;
    let mut p: Vec<f64> = (0..reps)
        .map(|r| {
            let (a, b) = groups(r, 4, 6, 0.0);
            permutation_test(&a, &b, 300, r).unwrap().p_value.unwrap()
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let n = reps as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    assert!(ks < 0.15, "KS distance {ks}");
}

#[test]
fn permutation_detects_shift_and_is_symmetric() {
    let (a, b) = groups(3, 5, 5, 0.2);
    let r = permutation_test(&a, &b, 999, 1).unwrap();
    assert!(r.p_value.unwrap() <= 0.01);
    let (a, b) = groups(4, 3, 6, 0.0);
    let ab = permutation_test(&a, &b, 500, 9).unwrap();
    let ba = permutation_test(&b, &a, 500, 9).unwrap();
    assert_eq!(ab.p_value, ba.p_value);
    assert_eq!(ab.statistic, ba.statistic);
    assert!(close(ab.statistic, rmse_test(&a, &b).unwrap().statistic, 1e-15));
}

#[test]
fn chi2_curve_test_shapes() {
    let (a, b) = groups(5, 5, 5, 0.0);
    let r = chi2_curve_test(&a, &b).unwrap();
    assert_eq!(r.dof, Some(5));
    let p = r.p_value.unwrap();
    assert!((0.0..=1.0).contains(&p));
    let (a, b) = groups(6, 5, 5, 0.3);
    assert!(chi2_curve_test(&a, &b).unwrap().p_value.unwrap() < 1e-6);
    let (single, _) = groups(7, 1, 1, 0.0);
    assert!(chi2_curve_test(&single, &b).is_err());
}
