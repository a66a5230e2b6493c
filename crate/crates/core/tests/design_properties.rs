use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sensikit::design::{
    generate_morris_design, generate_saltelli_design, morris_delta, saltelli_rows, Block, Design,
    MorrisConfig, SaltelliConfig,
};
use sensikit::factors::{FactorSet, FactorSpec};
use sensikit::sobol::sobol_sequence;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn morris_trajectories_step_each_factor_once(
        k in 1usize..=8, r in 1usize..=6, half in 1usize..=3, seed in any::<u64>()
    ) {
        let p = 2 * half;
        let fs = FactorSet::uniform(k, -3.0, 7.0).unwrap();
        let d = generate_morris_design(&fs, MorrisConfig::new(r, p, seed)).unwrap();
        prop_assert_eq!(d.points.len(), r * (k + 1));
        let delta = morris_delta(p);
        for t in 0..r {
            let rows = d.trajectory_rows(t);
            let mut seen = vec![false; k];
            for w in rows.start..rows.end - 1 {
                let (a, b) = (&d.points[w], &d.points[w + 1]);
                let changed: Vec<usize> = (0..k).filter(|&c| a[c] != b[c]).collect();
                prop_assert_eq!(changed.len(), 1);
                let c = changed[0];
                prop_assert_eq!(d.perturbed[w + 1], Some(c));
                prop_assert!(!seen[c]);
                seen[c] = true;
                // level indices differ by exactly p/2
                let la = (a[c] * (p - 1) as f64).round() as i64;
                let lb = (b[c] * (p - 1) as f64).round() as i64;
                prop_assert_eq!((la - lb).unsigned_abs() as usize, p / 2);
                prop_assert!(((a[c] - b[c]).abs() - delta).abs() < 1e-12);
            }
            prop_assert!(seen.iter().all(|&s| s));
            for x in &d.points[rows] {
                prop_assert!(x.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn saltelli_row_counts(k in 1usize..=12, n in 2usize..=64) {
        let fs = FactorSet::uniform(k, 0.0, 1.0).unwrap();
        let ft = generate_saltelli_design(&fs, SaltelliConfig::new(n).first_and_total_only()).unwrap();
        prop_assert_eq!(ft.points.len(), n * (k + 2));
        prop_assert_eq!(saltelli_rows(n, k, false), (n * (k + 2)) as u128);
        if k >= 2 {
            let full = generate_saltelli_design(&fs, SaltelliConfig::new(n)).unwrap();
            prop_assert_eq!(full.points.len(), n * (2 * k + 2));
        }
    }

    #[test]
    fn physical_mapping_round_trips(
        min in -1e6f64..1e6, width in 1e-3f64..1e6, u in 0.0f64..=1.0
    ) {
        let f = FactorSpec::new("x", min, min + width);
        let x = f.to_physical(u).unwrap();
        let back = f.to_physical(f.to_unit(x)).unwrap();
        prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(width));
    }
}

#[test]
fn saltelli_cross_block_constraint_exhaustive() {
    for k in 2..=5 {
        for n in [2, 3, 8, 17] {
            let fs = FactorSet::uniform(k, 0.0, 1.0).unwrap();
            let d = generate_saltelli_design(&fs, SaltelliConfig::new(n)).unwrap();
            for j in 0..n {
                let a = &d.points[d.row_of(Block::A, j)];
                let b = &d.points[d.row_of(Block::B, j)];
                for i in 0..k {
                    let ab = &d.points[d.row_of(Block::AB(i), j)];
                    let ba = &d.points[d.row_of(Block::BA(i), j)];
                    for c in 0..k {
                        if c == i {
                            assert_eq!(ab[c], b[c]);
                            assert_eq!(ba[c], a[c]);
                        } else {
                            assert_eq!(ab[c], a[c]);
                            assert_eq!(ba[c], b[c]);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn designs_match_committed_fixtures() {
    let morris: Design = generate_morris_design(&FactorSet::uniform(3, 0.0, 1.0).unwrap(), MorrisConfig::new(2, 4, 7))
        .unwrap()
        .into();
    let saltelli: Design = generate_saltelli_design(&FactorSet::uniform(2, 0.0, 1.0).unwrap(), SaltelliConfig::new(4))
        .unwrap()
        .into();
    for (design, file) in [(morris, "morris_k3_r2_seed7.csv"), (saltelli, "saltelli_k2_n4.csv")] {
        let path = format!("{FIXTURES}/{file}");
        assert_eq!(design.to_csv(), std::fs::read_to_string(&path).unwrap(), "{file}");
        assert_eq!(Design::read(&path).unwrap(), design);
    }
}

#[test]
fn same_seed_same_bytes() {
    let fs = FactorSet::uniform(6, 0.0, 1.0).unwrap();
    let a: Design = generate_morris_design(&fs, MorrisConfig::new(5, 6, 99)).unwrap().into();
    let b: Design = generate_morris_design(&fs, MorrisConfig::new(5, 6, 99)).unwrap().into();
    let c: Design = generate_morris_design(&fs, MorrisConfig::new(5, 6, 100)).unwrap().into();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_ne!(a.to_csv(), c.to_csv());
}

/// Squared deviation of 16x16 cell counts from the uniform expectation.
fn grid_deviation(points: &[Vec<f64>]) -> f64 {
    let mut counts = [[0usize; 16]; 16];
    for p in points {
        counts[(p[0] * 16.0) as usize][(p[1] * 16.0) as usize] += 1;
    }
    let expect = points.len() as f64 / 256.0;
    counts.iter().flatten().map(|&c| (c as f64 - expect).powi(2)).sum()
}

#[test]
fn sobol_is_more_uniform_than_pseudo_random() {
    let sobol = sobol_sequence(2, 1024, 0).unwrap();
    let sobol_dev = grid_deviation(&sobol);
    assert_eq!(sobol_dev, 0.0);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random: Vec<Vec<f64>> = (0..1024).map(|_| vec![rng.random(), rng.random()]).collect();
        assert!(grid_deviation(&random) > sobol_dev + 100.0);
    }
}
