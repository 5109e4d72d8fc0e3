use carsfit::batch::{fit_batch, item_seed, noisy_targets};
use carsfit::core::{
    build_library, sample_physical_parameters, train, FitOptions, OracleConfig, ParameterSpace,
    Sampling, WavenumberGrid,
};
use proptest::prelude::*;

#[test]
fn batches_keep_order_and_tolerate_duplicates() {
    let space = ParameterSpace::cars();
    let grid = WavenumberGrid::uniform(32).unwrap();
    let params = sample_physical_parameters(50, &space, 4).unwrap();
    let lib = build_library(
        &params,
        &space,
        Sampling::Random { seed: 4 },
        &grid,
        &OracleConfig::default(),
    )
    .unwrap();
    let model = train(&lib, 0.5).unwrap();
    let opts = FitOptions::default();

    let empty = fit_batch(&[], &model, &space, &opts, None).unwrap();
    assert!(empty.outcomes.is_empty());
    assert_eq!(empty.summary.count, 0);

    let target = lib.spectrum(7).to_vec();
    let report = fit_batch(&[target.clone(), target], &model, &space, &opts, None).unwrap();
    let a = report.outcomes[0].as_ref().unwrap();
    let b = report.outcomes[1].as_ref().unwrap();
    assert_eq!(a.x_star, b.x_star);
    assert_eq!(a.residual, b.residual);

    let truths = vec![params[7].clone()];
    let one = fit_batch(
        &[lib.spectrum(7).to_vec()],
        &model,
        &space,
        &opts,
        Some(&truths),
    )
    .unwrap();
    assert!(one.summary.errors.is_some());
    assert!(fit_batch(&[], &model, &space, &opts, Some(&truths)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn noise_is_seeded_per_item(seed in any::<u64>(), snr in 1.0f64..100.0) {
        let grid = WavenumberGrid::uniform(16).unwrap();
        let spectra = vec![vec![0.0; 16]; 3];
        let a = noisy_targets(&spectra, &grid, snr, seed).unwrap();
        let b = noisy_targets(&spectra, &grid, snr, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_ne!(&a[0], &a[1]);
        prop_assert_ne!(item_seed(seed, 0), item_seed(seed, 1));
        let clean = noisy_targets(&spectra, &grid, f64::INFINITY, seed).unwrap();
        prop_assert_eq!(clean, spectra);
    }
}
