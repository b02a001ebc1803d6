use super::*;
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn unit_1d(weights_means: &[(f64, f64)]) -> GmmState {
    let cfg = EngineConfig {
        components: weights_means.len(),
        ridge: 0.0,
        ..EngineConfig::default()
    };
    GmmState::from_components(
        cfg,
        weights_means
            .iter()
            .map(|(w, mu)| (*w, vec![*mu], DMatrix::identity(1, 1)))
            .collect(),
    )
    .unwrap()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
                .collect()
        })
        .collect()
}

#[test]
fn standard_normal_scores() {
    let s = unit_1d(&[(1.0, 0.0)]);
    assert!((s.score_frame(&[0.0]).unwrap() - HALF_LN_2PI).abs() < 1e-12);
    assert!((s.score_frame(&[2.0]).unwrap() - (HALF_LN_2PI + 2.0)).abs() < 1e-12);
}

#[test]
fn symmetric_pair_score_matches_direct_density() {
    let s = unit_1d(&[(0.5, -3.0), (0.5, 3.0)]);
    let pdf = |x: f64, mu: f64| (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * PI).sqrt();
    let expected = -(0.5 * pdf(0.0, -3.0) + 0.5 * pdf(0.0, 3.0)).ln();
    assert!((s.score_frame(&[0.0]).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn score_is_clamped_for_far_points() {
    let s = unit_1d(&[(1.0, 0.0)]);
    assert_eq!(s.score_frame(&[1e6]).unwrap(), -LOG_DENSITY_FLOOR);
    assert!(s.log_mixture_density(&[1e6]).unwrap() < LOG_DENSITY_FLOOR);
}

#[test]
fn dimension_mismatch() {
    let s = unit_1d(&[(1.0, 0.0)]);
    assert!(matches!(s.score_frame(&[0.0, 1.0]), Err(EngineError::Shape { expected: 1, got: 2 })));
    let mut s2 = s.clone();
    assert!(s2.update_frame(&[]).is_err());
    assert_eq!(s2, s);
}

#[test]
fn batch_score_is_frame_mean() {
    let s = unit_1d(&[(1.0, 0.0)]);
    let same = vec![[1.5]; 7];
    assert!((s.score_batch(&same).unwrap() - s.score_frame(&[1.5]).unwrap()).abs() < 1e-12);
    // Scores 1.0 and 3.0 are reached at x^2/2 = 1 - HALF_LN_2PI and 3 - HALF_LN_2PI.
    let x1 = (2.0 * (1.0 - HALF_LN_2PI)).sqrt();
    let x3 = (2.0 * (3.0 - HALF_LN_2PI)).sqrt();
    assert!((s.score_batch(&[[x1], [x3]]).unwrap() - 2.0).abs() < 1e-12);
    assert!(matches!(s.score_batch::<[f64; 1]>(&[]), Err(EngineError::EmptyBatch)));
}

#[test]
fn config_validation() {
    let bad = |f: fn(&mut EngineConfig)| {
        let mut c = EngineConfig::default();
        f(&mut c);
        c.validate().is_err()
    };
    assert!(bad(|c| c.components = 0));
    assert!(bad(|c| c.forgetting_rate = 0.0));
    assert!(bad(|c| c.forgetting_rate = 1.0));
    assert!(bad(|c| c.ridge = -1.0));
    assert!(EngineConfig::default().validate().is_ok());
}

#[test]
fn init_single_component() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = random_rows(&mut rng, 20, 3, 1.0);
    let cfg = EngineConfig {
        components: 1,
        ..EngineConfig::default()
    };
    let s = GmmState::initialize(&rows, cfg).unwrap();
    let c = &s.components()[0];
    assert_eq!(c.weight(), 1.0);
    assert!(rows.iter().any(|r| r.as_slice() == c.mean().as_slice()));
    assert_eq!(c.mean_acc(), c.mean());
}

#[test]
fn init_too_few_frames() {
    let rows = vec![vec![1.0, 2.0]];
    assert!(matches!(
        GmmState::initialize(&rows, EngineConfig::default()),
        Err(EngineError::InsufficientData { needed: 2, got: 1 })
    ));
}

#[test]
fn init_spreads_means_across_clusters() {
    let mut rows = vec![vec![0.0, 0.0]; 10];
    rows.extend(vec![vec![50.0, 50.0]; 10]);
    for seed in 0..20 {
        let cfg = EngineConfig {
            seed,
            ..EngineConfig::default()
        };
        let s = GmmState::initialize(&rows, cfg).unwrap();
        let a = s.components()[0].mean()[0];
        let b = s.components()[1].mean()[0];
        assert_ne!(a, b, "seed {seed}");
    }
}

/// Brute force: every frame's minimum distance to the chosen set, the
/// next pick being the first frame attaining the maximum.
#[test]
fn farthest_points_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..20 {
        let rows = random_rows(&mut rng, 15, 3, 2.0);
        let picks = farthest_points(&rows, 4, trial);
        let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        for step in 1..picks.len() {
            let chosen = &picks[..step];
            let score = |i: usize| chosen.iter().map(|&c| d2(&rows[i], &rows[c])).fold(f64::INFINITY, f64::min);
            let best = (0..rows.len())
                .filter(|i| !chosen.contains(i))
                .fold(None::<usize>, |b, i| match b {
                    Some(b) if score(b) >= score(i) => Some(b),
                    _ => Some(i),
                })
                .unwrap();
            assert_eq!(picks[step], best);
        }
    }
}

#[test]
fn constant_dimension_is_ridged() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 7.0]).collect();
    let s = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    for c in s.components() {
        let v = c.covariance()[(1, 1)];
        assert!(v > 0.0);
        assert!(v < 1e-4);
        assert!(c.covariance().clone().cholesky().is_some());
    }
}

#[test]
fn responsibilities_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let rows = random_rows(&mut rng, 30, 4, 3.0);
    let mut s = GmmState::initialize(&rows, EngineConfig { components: 3, ..EngineConfig::default() }).unwrap();
    for x in random_rows(&mut rng, 200, 4, 5.0) {
        let g = s.update_frame(&x).unwrap();
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let w: f64 = s.components().iter().map(|c| c.weight()).sum();
        assert!((w - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_component_recurrence_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = random_rows(&mut rng, 10, 2, 1.0);
    let cfg = EngineConfig {
        components: 1,
        ..EngineConfig::default()
    };
    let mut s = GmmState::initialize(&rows, cfg).unwrap();
    for x in random_rows(&mut rng, 50, 2, 1.0) {
        let before = s.components()[0].mean_acc().clone();
        s.update_frame(&x).unwrap();
        let c = &s.components()[0];
        assert_eq!(c.weight(), 1.0);
        for d in 0..2 {
            assert_eq!(c.mean_acc()[d], 0.9 * before[d] + 0.1 * x[d]);
        }
    }
}

#[test]
fn consistency_identities_hold_after_updates() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let rows = random_rows(&mut rng, 40, 5, 2.0);
    let mut s = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    for x in random_rows(&mut rng, 300, 5, 2.0) {
        s.update_frame(&x).unwrap();
        for c in s.components() {
            let scale = c.mean().amax().max(1.0);
            let mean_err = (c.mean_acc() / c.weight() - c.mean()).amax();
            assert!(mean_err <= 1e-9 * scale);
            let ridge = c.applied_ridge(s.config().ridge);
            let rebuilt = c.cov_acc() / c.weight() - c.mean() * c.mean().transpose()
                + DMatrix::identity(5, 5) * ridge;
            let cov_err = (rebuilt - c.covariance()).amax();
            assert!(cov_err <= 1e-9 * c.covariance().amax(), "{cov_err}");
            assert_eq!(c.covariance(), &c.covariance().transpose());
        }
    }
}

#[test]
fn batch_update_is_a_fold() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rows = random_rows(&mut rng, 20, 3, 1.0);
    let s0 = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    let batch = random_rows(&mut rng, 25, 3, 1.5);
    let mut folded = s0.clone();
    for x in &batch {
        folded.update_frame(x).unwrap();
    }
    let mut batched = s0.clone();
    batched.update_batch(&batch).unwrap();
    assert_eq!(batched, folded);

    let mut one = s0.clone();
    one.update_batch(&batch[..1]).unwrap();
    let mut single = s0;
    single.update_frame(&batch[0]).unwrap();
    assert_eq!(one, single);
}

#[test]
fn identical_batches_pull_dominant_mean_to_the_frame() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let rows = random_rows(&mut rng, 30, 3, 1.0);
    let mut s = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    let target = vec![2.0, -1.0, 0.5];
    let batch = vec![target.clone(); 30];
    for _ in 0..20 {
        s.update_batch(&batch).unwrap();
    }
    let dominant = s
        .components()
        .iter()
        .max_by(|a, b| a.weight().total_cmp(&b.weight()))
        .unwrap();
    for (got, want) in dominant.mean().iter().zip(&target) {
        assert!((got - want).abs() < 1e-3);
    }
}

/// With one component the mean after a full pass of a repeated batch
/// converges to the discounted average of the period:
/// sum_p w_p x_p with w_p = r (1-r)^(N-1-p) / (1 - (1-r)^N).
#[test]
fn repeated_batch_reaches_discounted_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let batch = random_rows(&mut rng, 12, 2, 3.0);
    let cfg = EngineConfig {
        components: 1,
        ..EngineConfig::default()
    };
    let mut s = GmmState::initialize(&batch, cfg).unwrap();
    for _ in 0..60 {
        s.update_batch(&batch).unwrap();
    }
    let r = 0.1f64;
    let n = batch.len();
    let denom = 1.0 - (1.0 - r).powi(n as i32);
    for d in 0..2 {
        let fixed: f64 = batch
            .iter()
            .enumerate()
            .map(|(p, x)| r * (1.0 - r).powi((n - 1 - p) as i32) / denom * x[d])
            .sum();
        assert!((s.components()[0].mean()[d] - fixed).abs() < 1e-9);
    }
}

#[test]
fn representative_frame_at_component_mean() {
    let s = unit_1d(&[(0.5, -3.0), (0.5, 3.0)]);
    let batch = [[0.0], [2.9], [3.0], [-3.0], [-2.0]];
    assert_eq!(s.representative_frames(&batch).unwrap(), vec![3, 2]);
}

#[test]
fn identical_frames_pick_first() {
    let s = unit_1d(&[(0.5, -3.0), (0.5, 3.0)]);
    let batch = [[1.0]; 5];
    assert_eq!(s.representative_frames(&batch).unwrap(), vec![0, 0]);
    assert_eq!(s.outlier_frames(&batch, 3).unwrap(), vec![0, 1, 2]);
}

#[test]
fn far_frame_is_the_top_outlier() {
    let s = unit_1d(&[(0.5, -3.0), (0.5, 3.0)]);
    let batch = [[0.0], [3.0], [40.0], [-3.0], [-10.0]];
    let out = s.outlier_frames(&batch, 5).unwrap();
    assert_eq!(out[0], 2);
    assert_eq!(out[1], 4);
    let mut sorted = out.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    assert!(s.outlier_frames(&batch, 0).is_err());
    assert!(s.outlier_frames(&batch, 6).is_err());
    assert!(s.representative_frames::<[f64; 1]>(&[]).is_err());
}

#[test]
fn score_is_component_order_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let rows = random_rows(&mut rng, 30, 3, 2.0);
    let mut s = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    s.update_batch(&rows).unwrap();
    let mut swapped = s.clone();
    swapped.components.reverse();
    for x in random_rows(&mut rng, 20, 3, 3.0) {
        let a = s.score_frame(&x).unwrap();
        let b = swapped.score_frame(&x).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn snapshot_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let rows = random_rows(&mut rng, 30, 4, 2.0);
    let mut s = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    s.update_batch(&random_rows(&mut rng, 100, 4, 2.0)).unwrap();
    let text = s.to_json();
    let back = GmmState::from_json(&text).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.to_json(), text);
    // Continuing from the restored state stays identical.
    let x = [0.3, -0.2, 1.0, 4.0];
    let mut a = s.clone();
    let mut b = back;
    a.update_frame(&x).unwrap();
    b.update_frame(&x).unwrap();
    assert_eq!(a, b);
}

#[test]
fn snapshot_rejects_corruption() {
    let rows = vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]];
    let s = GmmState::initialize(&rows, EngineConfig::default()).unwrap();
    let mut snap = s.snapshot();
    snap.components[0].mean = "AAAA".into();
    assert!(GmmState::from_snapshot(&snap).is_err());
    let mut snap = s.snapshot();
    snap.components.pop();
    assert!(GmmState::from_snapshot(&snap).is_err());
    assert!(GmmState::from_json("{}").is_err());
}

#[test]
fn diagonal_mode_keeps_off_diagonals_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let rows = random_rows(&mut rng, 30, 4, 2.0);
    let cfg = EngineConfig {
        covariance_mode: CovarianceMode::Diagonal,
        ..EngineConfig::default()
    };
    let mut s = GmmState::initialize(&rows, cfg).unwrap();
    s.update_batch(&random_rows(&mut rng, 100, 4, 2.0)).unwrap();
    for c in s.components() {
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(c.covariance()[(i, j)], 0.0);
                    assert_eq!(c.cov_acc()[(i, j)], 0.0);
                }
            }
        }
    }
}

#[test]
fn unridged_collapse_is_reported() {
    let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
    let cfg = EngineConfig {
        components: 1,
        ridge: 0.0,
        forgetting_rate: 0.9,
        ..EngineConfig::default()
    };
    let mut s = GmmState::initialize(&rows, cfg).unwrap();
    let mut failed = false;
    for _ in 0..100 {
        match s.update_frame(&[1.0, 1.0]) {
            Ok(_) => {}
            Err(EngineError::NumericDegeneracy { component: 0, .. }) => {
                failed = true;
                break;
            }
            Err(e) => panic!("{e}"),
        }
    }
    assert!(failed);
}

#[test]
fn starved_component_stays_finite() {
    let cfg = EngineConfig {
        components: 2,
        ridge: 1e-6,
        ..EngineConfig::default()
    };
    let mut s = GmmState::from_components(
        cfg,
        vec![
            (0.5, vec![0.0], DMatrix::identity(1, 1)),
            (0.5, vec![1e4], DMatrix::identity(1, 1)),
        ],
    )
    .unwrap();
    for i in 0..10_000 {
        s.update_frame(&[(i % 7) as f64 * 0.1]).unwrap();
    }
    let far = &s.components()[1];
    assert!(far.weight() < f64::MIN_POSITIVE);
    assert!(far.mean()[0].is_finite());
    assert!(s.score_frame(&[0.2]).unwrap().is_finite());
}
