use bayesmi::data::{synthesize, SyntheticKind, SyntheticSpec, TokenDataset};
use bayesmi::probe::{
    compare_representations, run_learning_curve, ArchitectureSpace, CurveConfig, MlpArchitecture, ProbeAgent,
    TrainConfig,
};

fn small_space() -> ArchitectureSpace {
    ArchitectureSpace::default().with_max_hidden(64)
}

fn informative(seed: u64, n: usize) -> TokenDataset {
    let spec = SyntheticSpec::new(SyntheticKind::Informative, 4, 3, 0.6, seed).with_test_size(500);
    synthesize(&spec, n).unwrap().dataset
}

#[test]
fn curve_sizes_and_determinism() {
    let ds = informative(1, 1000);
    let cfg = CurveConfig {
        n_points: 4,
        trials: 2,
        seed: 11,
        space: small_space(),
        train: TrainConfig {
            max_epochs: 30,
            ..TrainConfig::default()
        },
        ..CurveConfig::default()
    };
    let a = run_learning_curve(&ds, &cfg).unwrap();
    assert_eq!(a.sizes(), vec![1, 10, 100, 1000]);
    assert_eq!(a.points.len(), 8);
    let b = run_learning_curve(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    let bits: Vec<u64> = a.points.iter().map(|p| p.bayesian_mi_bits.to_bits()).collect();
    assert_eq!(bits, b.points.iter().map(|p| p.bayesian_mi_bits.to_bits()).collect::<Vec<_>>());

    let parallel = CurveConfig {
        workers: Some(3),
        ..cfg.clone()
    };
    assert_eq!(run_learning_curve(&ds, &parallel).unwrap(), a);

    let too_big = CurveConfig {
        sizes: Some(vec![2000]),
        ..cfg
    };
    assert!(run_learning_curve(&ds, &too_big).is_err());
}

#[test]
fn identical_datasets_give_identical_curves() {
    let ds = informative(2, 200);
    let twin = ds.clone().with_repr("twin");
    let cfg = CurveConfig {
        n_points: 3,
        trials: 2,
        seed: 4,
        space: small_space(),
        ..CurveConfig::default()
    };
    let curves = compare_representations(&[&ds, &twin], &cfg).unwrap();
    assert_eq!(curves[0].points, curves[1].points);
    assert_eq!(curves[1].repr, "twin");
}

#[test]
fn pairing_requires_shared_labels() {
    let a = informative(3, 50);
    let spec = SyntheticSpec::new(SyntheticKind::Informative, 4, 4, 0.6, 3).with_test_size(500);
    let b = synthesize(&spec, 50).unwrap().dataset;
    assert!(compare_representations(&[&a, &b], &CurveConfig::default()).is_err());
    let c = informative(4, 50);
    assert!(compare_representations(&[&a, &c], &CurveConfig::default()).is_err());
}

#[test]
fn informative_curve_reaches_analytic_mi() {
    let spec = SyntheticSpec::new(SyntheticKind::Informative, 4, 3, 0.6, 5).with_test_size(5000);
    let data = synthesize(&spec, 2000).unwrap();
    let cfg = CurveConfig {
        sizes: Some(vec![2000]),
        trials: 3,
        seed: 5,
        space: small_space(),
        ..CurveConfig::default()
    };
    let curve = run_learning_curve(&data.dataset, &cfg).unwrap();
    let env = curve.envelope_at(2000).unwrap();
    assert!((env - data.analytic_mi).abs() < 0.05, "{env} vs {}", data.analytic_mi);
}

#[test]
fn envelope_grows_with_data_on_informative_inputs() {
    let mut holds = 0;
    for seed in 0..10 {
        let ds = informative(100 + seed, 1000);
        let cfg = CurveConfig {
            sizes: Some(vec![10, 1000]),
            trials: 2,
            seed,
            space: small_space(),
            ..CurveConfig::default()
        };
        let curve = run_learning_curve(&ds, &cfg).unwrap();
        if curve.envelope_at(1000).unwrap() >= curve.envelope_at(10).unwrap() - 0.02 {
            holds += 1;
        }
    }
    assert!(holds > 5, "{holds}/10");
}

#[test]
fn overfitting_noise_costs_information() {
    let mut negative = 0;
    for seed in 0..10 {
        let spec = SyntheticSpec::new(SyntheticKind::Noise, 256, 5, 1.0, seed).with_test_size(1000);
        let data = synthesize(&spec, 10).unwrap();
        let arch = MlpArchitecture::new(2, 128, 0.0).unwrap();
        let mut agent = ProbeAgent::new(arch, 256, 5, seed).unwrap();
        agent.map_train(data.dataset.train(), &TrainConfig::default().with_seed(seed)).unwrap();
        if agent.estimate_bayesian_mi(data.dataset.test()).unwrap() < 0.0 {
            negative += 1;
        }
    }
    assert!(negative >= 8, "{negative}/10");
}

#[test]
fn csv_rows_follow_points() {
    let ds = informative(6, 30);
    let cfg = CurveConfig {
        n_points: 2,
        trials: 2,
        space: small_space(),
        ..CurveConfig::default()
    };
    let curve = run_learning_curve(&ds, &cfg).unwrap();
    let rows = curve.rows();
    assert_eq!(rows.len(), curve.points.len());
    assert!(rows.iter().all(|r| r.repr == "informative" && r.task == "synthetic"));
    assert_eq!(rows[3].n, 30);
    assert_eq!(rows[3].trial, 1);
}
