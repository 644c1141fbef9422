use bbf_metrics::{
    iqm, mean, normalize, optimality_gap, profile, stratified_bootstrap_ci, trimmed_mean, BootstrapConfig, GameScores,
    ScoreMatrix, Statistic,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, 1..40)
}

proptest! {
    #[test]
    fn iqm_between_extremes(v in scores()) {
        let q = iqm(&v).unwrap();
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(q >= lo - 1e-9 && q <= hi + 1e-9);
    }

    #[test]
    fn iqm_permutation_invariant(v in scores(), seed in any::<u64>()) {
        let mut w = v.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..w.len()).rev() {
            w.swap(i, rng.random_range(0..=i));
        }
        prop_assert!((iqm(&v).unwrap() - iqm(&w).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn untrimmed_is_mean(v in scores()) {
        prop_assert!((trimmed_mean(&v, 0.0).unwrap() - mean(&v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn normalize_is_affine(s in -1e3f64..1e3, r in -1e3f64..1e3, d in 0.1f64..1e3, a in 0.1f64..10.0, b in -1e3f64..1e3) {
        let e = r + d;
        let direct = normalize(s, r, e).unwrap();
        let moved = normalize(a * s + b, a * r + b, a * e + b).unwrap();
        prop_assert!((direct - moved).abs() < 1e-6 * (1.0 + direct.abs()));
    }

    #[test]
    fn profile_monotone(v in scores()) {
        let taus: Vec<f64> = (0..=160).map(|i| i as f64 * 0.05).collect();
        let p = profile(&v, &taus).unwrap();
        prop_assert!(p.windows(2).all(|w| w[1].1 <= w[0].1));
        prop_assert!(p.iter().all(|&(_, f)| (0.0..=1.0).contains(&f)));
    }

    #[test]
    fn gap_in_unit_interval(v in scores()) {
        let g = optimality_gap(&v).unwrap();
        prop_assert!(g >= 0.0);
        if v.iter().all(|&x| x >= 0.0) {
            prop_assert!(g <= 1.0);
        }
        if v.iter().all(|&x| x >= 1.0) {
            prop_assert!(g == 0.0);
        }
    }
}

fn synthetic(rng: &mut ChaCha8Rng, games: usize, runs: usize) -> ScoreMatrix {
    let g = (0..games)
        .map(|i| {
            let centre = rng.random_range(0.0..2.0);
            GameScores {
                name: format!("g{i}"),
                random: 0.0,
                expert: 1.0,
                runs: (0..runs).map(|_| centre + rng.random_range(-0.5..0.5)).collect(),
            }
        })
        .collect();
    ScoreMatrix::new(g, true).unwrap()
}

#[test]
fn point_estimate_inside_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = BootstrapConfig {
        resamples: 500,
        ..Default::default()
    };
    let trials = 200;
    for s in Statistic::ALL {
        let mut inside = 0;
        for t in 0..trials {
            let m = synthetic(&mut rng, 5, 6);
            let point = s.compute(&m.normalized()).unwrap();
            let ci = stratified_bootstrap_ci(&m, s, &BootstrapConfig { seed: t, ..cfg }).unwrap();
            if ci.lo <= point && point <= ci.hi {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.99 * trials as f64, "{}: {inside}/{trials}", s.name());
    }
}

#[test]
fn fewer_runs_widen_the_mean_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = BootstrapConfig {
        resamples: 400,
        ..Default::default()
    };
    let (mut full, mut half) = (0.0, 0.0);
    for t in 0..100 {
        let m = synthetic(&mut rng, 4, 10);
        let halved = ScoreMatrix::new(
            m.games()
                .iter()
                .map(|g| GameScores {
                    runs: g.runs[..5].to_vec(),
                    ..g.clone()
                })
                .collect(),
            true,
        )
        .unwrap();
        let a = stratified_bootstrap_ci(&m, Statistic::Mean, &BootstrapConfig { seed: t, ..cfg }).unwrap();
        let b = stratified_bootstrap_ci(&halved, Statistic::Mean, &BootstrapConfig { seed: t, ..cfg }).unwrap();
        full += a.hi - a.lo;
        half += b.hi - b.lo;
    }
    assert!(half >= full, "halved {half} vs full {full}");
}
