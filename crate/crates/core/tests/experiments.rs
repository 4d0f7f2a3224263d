use bnmf::experiments::{
    convergence_experiment, model_selection_sweep, nested_cross_validation, noise_test,
    sparsity_test, split_train_test, std_dev, ArdMode, ConvergenceOptions, CvOptions,
    ExperimentConfig, ExperimentResult, ModelSelectOptions, Noise, NoiseOptions, SparsityOptions,
    SyntheticSpec,
};
use bnmf::model::HyperParams;
use bnmf::{Engine, MaskedMatrix, Model, SeededRng};
use ndarray::Array2;

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        rows: 20,
        cols: 15,
        k: 3,
        ..SyntheticSpec::nmf(seed)
    }
}

fn small_config(model: Model) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(model, 17);
    cfg.hyper = HyperParams::with_rank(3, 3);
    cfg.iterations = Some(40);
    cfg
}

type RowBits = (Engine, bool, Option<u64>, usize, u64, Option<u64>);

fn bits(r: &ExperimentResult) -> Vec<RowBits> {
    r.rows
        .iter()
        .map(|x| {
            (
                x.engine,
                x.ard,
                x.setting.map(f64::to_bits),
                x.fold,
                x.train_mse.to_bits(),
                x.test_mse.map(f64::to_bits),
            )
        })
        .collect()
}

#[test]
fn convergence_curves_have_one_point_per_sweep_plus_the_start() {
    let data = small_spec(1).generate().unwrap().data;
    let cfg = small_config(Model::Nmf);
    let res = convergence_experiment(&data, &cfg, &ConvergenceOptions { repeats: 2 }).unwrap();
    assert_eq!(res.rows.len(), 4 * 2);
    assert_eq!(res.curves.len(), 4);
    for c in &res.curves {
        assert_eq!(c.train_mse.len(), 41);
        assert_eq!(c.seconds.len(), 41);
    }
    assert!(res
        .rows
        .iter()
        .all(|r| r.test_mse.is_none() && r.iterations == 40));
}

#[test]
fn noise_rows_are_levels_times_engines() {
    let cfg = small_config(Model::Nmf);
    let res = noise_test(&cfg, &NoiseOptions::new(small_spec(2))).unwrap();
    assert_eq!(res.rows.len(), 5 * 4);
    assert!(res
        .rows
        .iter()
        .all(|r| r.test_mse.is_some_and(|m| m >= 0.0)));
}

#[test]
fn sparsity_rows_are_fractions_times_splits_times_engines() {
    // Large enough that a 90% hold-out still leaves each row and column a cell.
    let data = SyntheticSpec {
        rows: 60,
        cols: 50,
        ..small_spec(3)
    }
    .generate()
    .unwrap()
    .data;
    let mut cfg = small_config(Model::Nmtf);
    cfg.iterations = Some(10);
    let res = sparsity_test(&data, &cfg, &SparsityOptions::default()).unwrap();
    assert_eq!(res.rows.len(), 9 * 10 * 4);
}

#[test]
fn experiments_are_pure_functions_of_their_seed() {
    let data = small_spec(4).generate().unwrap().data;
    let cfg = small_config(Model::Nmf);
    let opts = SparsityOptions {
        fractions: vec![0.3],
        splits: 3,
    };
    let a = sparsity_test(&data, &cfg, &opts).unwrap();
    let b = sparsity_test(&data, &cfg, &opts).unwrap();
    assert_eq!(bits(&a), bits(&b));
    let c = sparsity_test(&data, &ExperimentConfig { seed: 18, ..cfg }, &opts).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn heavy_sparsity_split_keeps_every_row_and_column() {
    let data = SyntheticSpec::nmf(5).generate().unwrap().data;
    let (train, test) = split_train_test(&data, 0.9, &mut SeededRng::new(5, 0)).unwrap();
    assert_eq!(test.n_observed(), 7200);
    assert!((0..100).all(|i| !train.row_indices(i).is_empty()));
    assert!((0..80).all(|j| !train.col_indices(j).is_empty()));
}

#[test]
fn noise_free_data_is_recovered_by_gibbs() {
    let spec = SyntheticSpec::nmf(6);
    let mut cfg = ExperimentConfig::new(Model::Nmf, 6);
    cfg.engines = vec![Engine::Gibbs];
    let opts = NoiseOptions {
        levels: vec![0.0],
        ..NoiseOptions::new(spec)
    };
    let res = noise_test(&cfg, &opts).unwrap();
    let truth = SyntheticSpec {
        noise: Noise::Nsr(0.0),
        ..spec
    }
    .generate()
    .unwrap()
    .truth;
    let variance = std_dev(&truth).powi(2);
    let mse = res.rows[0].test_mse.unwrap();
    assert!(mse < 0.05 * variance, "{mse} vs variance {variance}");
}

#[test]
fn light_sparsity_reaches_the_noise_floor() {
    let data = SyntheticSpec::nmf(7).generate().unwrap().data;
    let cfg = ExperimentConfig::new(Model::Nmf, 7);
    let opts = SparsityOptions {
        fractions: vec![0.1],
        splits: 10,
    };
    let res = sparsity_test(&data, &cfg, &opts).unwrap();
    for e in Engine::ALL {
        let m = res.mean_test_mse(e, false, Some(0.1)).unwrap();
        assert!((0.8..=1.5).contains(&m), "{e}: {m}");
    }
}

#[test]
fn single_candidate_cross_validation_is_plain_k_fold() {
    let data = small_spec(8).generate().unwrap().data;
    let cfg = small_config(Model::Nmf);
    let res = nested_cross_validation(&data, &cfg, &CvOptions::new(vec![2])).unwrap();
    assert_eq!(res.rows.len(), 10 * 4);
    assert!(res.rows.iter().all(|r| r.chosen_k == Some(2)));
    let folds: std::collections::BTreeSet<usize> = res.rows.iter().map(|r| r.fold).collect();
    assert_eq!(folds.len(), 10);
}

#[test]
fn ard_runs_skip_the_inner_search() {
    let data = small_spec(9).generate().unwrap().data;
    let mut cfg = small_config(Model::Nmtf);
    cfg.engines = vec![Engine::Vb];
    cfg.ard_mode = ArdMode::On;
    let opts = CvOptions {
        outer_folds: 3,
        ..CvOptions::new(vec![1, 2])
    };
    let res = nested_cross_validation(&data, &cfg, &opts).unwrap();
    assert!(res.rows.iter().all(|r| r.chosen_k == Some(10)));
}

#[test]
fn nested_search_finds_the_true_rank() {
    let data = SyntheticSpec {
        noise: Noise::Nsr(0.0),
        ..small_spec(10)
    }
    .generate()
    .unwrap()
    .data;
    let mut cfg = ExperimentConfig::new(Model::Nmf, 10);
    cfg.engines = vec![Engine::Vb];
    cfg.iterations = Some(300);
    let res = nested_cross_validation(&data, &cfg, &CvOptions::new((1..=6).collect())).unwrap();
    let mut counts = [0usize; 7];
    for r in &res.rows {
        counts[r.chosen_k.unwrap()] += 1;
    }
    let modal = (1..=6)
        .max_by_key(|&k| (counts[k], std::cmp::Reverse(k)))
        .unwrap();
    assert_eq!(modal, 3, "chosen K counts {counts:?}");
}

#[test]
fn active_factor_counts_never_exceed_k() {
    let data = small_spec(11).generate().unwrap().data;
    let mut cfg = small_config(Model::Nmf);
    cfg.engines = vec![Engine::Gibbs, Engine::Icm, Engine::Vb];
    cfg.ard_mode = ArdMode::Both;
    let opts = ModelSelectOptions {
        folds: 3,
        ..ModelSelectOptions::new(vec![1, 4])
    };
    let res = model_selection_sweep(&data, &cfg, &opts).unwrap();
    assert_eq!(res.rows.len(), 2 * 3 * 2 * 3);
    for r in &res.rows {
        let k = r.setting.unwrap() as usize;
        match r.active_factors {
            Some(a) => assert!(r.ard && a <= k),
            None => assert!(!r.ard),
        }
    }
}

#[test]
fn test_cells_never_reach_training() {
    // Changing one observed value must leave the training error of the fold
    // that holds it out untouched, and change its test error.
    let data = small_spec(12).generate().unwrap().data;
    let mut values = data.values().to_owned();
    values[[4, 7]] += 50.0;
    let changed = MaskedMatrix::from_dense(values, data.mask().to_owned()).unwrap();
    let mut cfg = small_config(Model::Nmf);
    cfg.engines = vec![Engine::Vb];
    let opts = ModelSelectOptions {
        folds: 4,
        ..ModelSelectOptions::new(vec![2])
    };
    let a = model_selection_sweep(&data, &cfg, &opts).unwrap();
    let b = model_selection_sweep(&changed, &cfg, &opts).unwrap();
    let held_out: Vec<usize> = a
        .rows
        .iter()
        .zip(&b.rows)
        .filter(|(x, y)| x.train_mse == y.train_mse)
        .map(|(x, y)| {
            assert_ne!(x.test_mse, y.test_mse);
            x.fold
        })
        .collect();
    assert_eq!(held_out.len(), 1, "exactly one fold holds the cell out");
}

#[test]
fn masks_with_empty_rows_still_split() {
    let values = Array2::from_shape_fn((6, 5), |(i, j)| (i + j) as f64);
    let mut mask = Array2::from_elem((6, 5), true);
    mask.row_mut(2).fill(false);
    let data = MaskedMatrix::from_dense(values, mask).unwrap();
    let (train, test) = split_train_test(&data, 0.3, &mut SeededRng::new(1, 0)).unwrap();
    assert_eq!(train.n_observed() + test.n_observed(), 25);
}
