use dheb_core::data::{read_csv, write_csv};
use dheb_core::simulation::{generate, write_truth_csv, SimConfig};
use dheb_core::{train_dheb, NormalParams, TrainConfig};

#[test]
fn unit_truths_scatter_around_their_branch_mean() {
    // One category, so every unit shares a branch whose mean is pinned at 1.
    let cfg = SimConfig {
        n_bid_units: 400,
        features: vec!["A".into()],
        implicit_hierarchy: vec!["A".into()],
        category_range: (1, 1),
        top_prior: NormalParams::new(1.0, 1e-12).unwrap(),
        child_variance: Some(1.0),
        seed: 11,
        ..SimConfig::default()
    };
    let sim = generate(&cfg).unwrap();
    let truths: Vec<f64> = sim.truth.values().copied().collect();
    assert_eq!(truths.len(), 400);
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    assert!((mean - 1.0).abs() < 3.0 / 20.0, "mean {mean}");
    let var = truths.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 399.0;
    assert!((var - 1.0).abs() < 0.25, "variance {var}");
}

#[test]
fn simulated_csv_trains_the_same_model() {
    let sim = generate(&SimConfig {
        seed: 4,
        y_zero_fraction: 0.5,
        ..SimConfig::default()
    })
    .unwrap();
    assert!(sim.dataset.observations().iter().all(|o| o.revenue >= 0.0));
    let mut buf = Vec::new();
    write_csv(&sim.dataset, &mut buf).unwrap();
    let back = read_csv(&buf[..], sim.dataset.schema()).unwrap().dataset;
    let cfg = TrainConfig::default();
    assert_eq!(train_dheb(&back, &cfg).unwrap(), train_dheb(&sim.dataset, &cfg).unwrap());

    let mut truth = Vec::new();
    write_truth_csv(&sim.truth, &mut truth).unwrap();
    let text = String::from_utf8(truth).unwrap();
    assert!(text.starts_with("bid_unit_id,true_rpc\n"));
    assert_eq!(text.lines().count(), 101);
}
