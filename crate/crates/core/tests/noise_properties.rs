use proptest::prelude::*;
use sis_sde::noise::{NormalStream, SeedInfo};
use sis_sde::WienerGrid;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn normals_pass_kolmogorov_smirnov() {
    let n = 100_000;
    let grid = WienerGrid::generate(77, 3, n, 0.01).unwrap();
    let mut z: Vec<f64> = grid.increments().iter().map(|dw| dw / 0.1).collect();
    z.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let d = z
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
        })
        .fold(0.0, f64::max);
    // Asymptotic 1% critical value.
    let critical = 1.6276 / (n as f64).sqrt();
    assert!(d < critical, "D = {d}, critical = {critical}");
}

#[test]
fn streams_are_pure_functions_of_seed_and_index() {
    let mut a = NormalStream::new(5, 9);
    let mut b = NormalStream::new(5, 9);
    let mut c = NormalStream::new(5, 10);
    let xs: Vec<f64> = (0..64).map(|_| a.next_normal()).collect();
    let ys: Vec<f64> = (0..64).map(|_| b.next_normal()).collect();
    let zs: Vec<f64> = (0..64).map(|_| c.next_normal()).collect();
    assert_eq!(xs, ys);
    assert_ne!(xs, zs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsening_preserves_total_increment(seed in any::<u64>(), path in 0u64..1000, log_m in 0u32..6, blocks in 1usize..40) {
        let m = 1usize << log_m;
        let fine = WienerGrid::generate(seed, path, m * blocks, 1.0 / 1024.0).unwrap();
        let coarse = fine.coarsen(m).unwrap();
        prop_assert_eq!(coarse.n_steps(), blocks);
        prop_assert_eq!(coarse.dt(), fine.dt() * m as f64);
        prop_assert_eq!(coarse.seed(), fine.seed());
        let total = |g: &WienerGrid| g.increments().iter().sum::<f64>();
        // Coarse blocks are left-to-right sums of fine increments, so the
        // totals agree up to regrouping round-off.
        let scale: f64 = fine.increments().iter().map(|x| x.abs()).sum();
        prop_assert!((total(&coarse) - total(&fine)).abs() <= 4.0 * f64::EPSILON * scale);
        for (j, block) in fine.increments().chunks(m).enumerate() {
            prop_assert_eq!(coarse.increments()[j], block.iter().sum::<f64>());
        }
    }

    #[test]
    fn dump_round_trips(seed in any::<u64>(), path in 0u64..(u32::MAX as u64), n in 1usize..200) {
        let grid = WienerGrid::generate(seed, path, n, 0.125).unwrap();
        let mut bytes = Vec::new();
        grid.write_to(&mut bytes).unwrap();
        prop_assert_eq!(bytes.len(), 32 + 8 * n);
        prop_assert_eq!(&bytes[..4], b"SISW");
        let back = WienerGrid::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back, grid);
    }
}

#[test]
fn from_increments_keeps_values() {
    let seed = SeedInfo {
        master_seed: 1,
        path_index: 2,
    };
    let grid = WienerGrid::from_increments(0.5, vec![0.25, -0.5, 1.0], seed).unwrap();
    assert_eq!(grid.increments(), &[0.25, -0.5, 1.0]);
    assert_eq!(grid.coarsen(3).unwrap().increments(), &[0.75]);
}
