use bnmf::experiments::{
    k_folds, sparsity_test, split_train_test, ExperimentConfig, SparsityOptions,
};
use bnmf::io::{
    preprocess, read_csv, read_state, write_masked_csv, write_state, write_trace, CsvOptions,
    PreprocessSpec, SavedModel,
};
use bnmf::model::HyperParams;
use bnmf::{fit, Engine, FitConfig, MaskedMatrix, Model, SeededRng};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

fn random_masked(rows: usize, cols: usize, density: f64, seed: u64) -> MaskedMatrix {
    let mut rng = SeededRng::new(seed, 0);
    let values = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 5.0);
    let mut mask = Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() < density);
    // Every row and column keeps at least one observed cell.
    for i in 0..rows {
        mask[[i, i % cols]] = true;
    }
    for j in 0..cols {
        mask[[j % rows, j]] = true;
    }
    MaskedMatrix::from_dense(values, mask).unwrap()
}

fn with_garbage_in_missing(data: &MaskedMatrix, seed: u64) -> Array2<f64> {
    let mut rng = SeededRng::new(seed, 1);
    let mut values = data.values().to_owned();
    for ((i, j), v) in values.indexed_iter_mut() {
        if !data.is_observed(i, j) {
            *v = rng.random::<f64>() * 1e6 - 5e5;
        }
    }
    values
}

fn small_config(model: Model, engine: Engine, seed: u64) -> FitConfig {
    let mut cfg = FitConfig::new(model, engine, HyperParams::with_rank(2, 2), seed);
    cfg.iterations = 30;
    cfg
}

#[test]
fn unobserved_values_never_affect_a_fit() {
    let data = random_masked(7, 6, 0.6, 3);
    let mutated =
        MaskedMatrix::from_dense(with_garbage_in_missing(&data, 9), data.mask().to_owned())
            .unwrap();
    for model in Model::ALL {
        for engine in Engine::ALL {
            let cfg = small_config(model, engine, 5);
            let a = fit(&data, &cfg).unwrap();
            let b = fit(&mutated, &cfg).unwrap();
            assert_eq!(a.prediction, b.prediction, "{model} {engine}");
            assert_eq!(a.trace.train_mse(), b.trace.train_mse());
            assert_eq!(a.fitted, b.fitted);
        }
    }
}

#[test]
fn unobserved_values_never_affect_an_experiment() {
    let data = random_masked(10, 8, 0.7, 4);
    let mutated =
        MaskedMatrix::from_dense(with_garbage_in_missing(&data, 2), data.mask().to_owned())
            .unwrap();
    let mut cfg = ExperimentConfig::new(Model::Nmf, 8);
    cfg.hyper = HyperParams::with_rank(2, 2);
    cfg.iterations = Some(20);
    let opts = SparsityOptions {
        fractions: vec![0.2, 0.4],
        splits: 2,
    };
    let a = sparsity_test(&data, &cfg, &opts).unwrap();
    let b = sparsity_test(&mutated, &cfg, &opts).unwrap();
    let strip = |r: &bnmf::experiments::ExperimentResult| {
        r.rows
            .iter()
            .map(|x| {
                (
                    x.engine,
                    x.setting.map(f64::to_bits),
                    x.fold,
                    x.train_mse.to_bits(),
                    x.test_mse.map(f64::to_bits),
                )
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn fits_are_identical_across_thread_counts() {
    let data = random_masked(12, 9, 0.8, 6);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            Model::ALL
                .iter()
                .flat_map(|&m| Engine::ALL.iter().map(move |&e| (m, e)))
                .map(|(m, e)| fit(&data, &small_config(m, e, 11)).unwrap().prediction)
                .collect::<Vec<_>>()
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn trace_has_one_line_per_sweep_plus_the_start() {
    let data = random_masked(5, 4, 0.9, 1);
    let out = fit(&data, &small_config(Model::Nmf, Engine::Vb, 0)).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &out.trace).unwrap();
    let text = String::from_utf8(buf).unwrap();
    // Header plus n + 1 records.
    assert_eq!(text.lines().count(), 1 + 31);
}

#[test]
fn saved_states_round_trip_bit_for_bit() {
    let data = random_masked(6, 5, 0.8, 2);
    for model in Model::ALL {
        for engine in Engine::ALL {
            let mut cfg = small_config(model, engine, 4);
            if engine.is_bayesian() {
                cfg.hyper.ard = true;
            }
            let out = fit(&data, &cfg).unwrap();
            let saved = SavedModel {
                engine,
                hyper: cfg.hyper,
                prediction: Some(out.prediction.clone()),
                fitted: out.fitted,
            };
            let mut buf = Vec::new();
            write_state(&mut buf, &saved).unwrap();
            let back = read_state(buf.as_slice()).unwrap();
            assert_eq!(back, saved, "{model} {engine}");
            let mut again = Vec::new();
            write_state(&mut again, &back).unwrap();
            assert_eq!(buf, again);
            assert_eq!(back.predict(), out.prediction);
        }
    }
}

#[test]
fn header_only_csv_is_empty() {
    let opts = CsvOptions {
        header: true,
        ..CsvOptions::default()
    };
    assert!(matches!(
        read_csv("a,b,c\n".as_bytes(), &opts),
        Err(bnmf::Error::EmptyMatrix)
    ));
}

fn arb_masked() -> impl Strategy<Value = MaskedMatrix> {
    (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(-1e6..1e6f64, r * c),
            prop::collection::vec(any::<bool>(), r * c),
        )
            .prop_filter_map("needs an observed cell", move |(v, mut m)| {
                m[0] = true;
                MaskedMatrix::from_dense(
                    Array2::from_shape_vec((r, c), v).unwrap(),
                    Array2::from_shape_vec((r, c), m).unwrap(),
                )
                .ok()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trips_bit_for_bit(data in arb_masked()) {
        let mut buf = Vec::new();
        write_masked_csv(&mut buf, &data, "NA").unwrap();
        let opts = CsvOptions { missing: "NA".into(), header: false };
        let back = read_csv(buf.as_slice(), &opts).unwrap();
        prop_assert_eq!(back.mask(), data.mask());
        for (a, b) in back.values().iter().zip(data.values().iter()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn capping_and_filtering_are_idempotent(data in arb_masked(), cap in 1.0..1e5f64, min in 0usize..4) {
        let spec = PreprocessSpec { undo_natural_log: false, cap: Some(cap), drop_rows_with_fewer_than: Some(min) };
        if let Ok(once) = preprocess(&data, &spec) {
            let twice = preprocess(&once, &spec).unwrap();
            prop_assert_eq!(once, twice);
        }
    }

    #[test]
    fn split_partitions_the_observed_cells(seed in any::<u64>(), frac in 0.05..0.5f64) {
        let data = random_masked(8, 6, 0.8, seed);
        let (train, test) = split_train_test(&data, frac, &mut SeededRng::new(seed, 3)).unwrap();
        prop_assert_eq!(train.n_observed() + test.n_observed(), data.n_observed());
        for (i, j, v) in data.observed() {
            prop_assert!(train.is_observed(i, j) != test.is_observed(i, j));
            let part = if train.is_observed(i, j) { &train } else { &test };
            prop_assert_eq!(part.get(i, j), Some(v));
        }
        for i in 0..8 {
            prop_assert!(!train.row_indices(i).is_empty());
        }
        for j in 0..6 {
            prop_assert!(!train.col_indices(j).is_empty());
        }
    }

    #[test]
    fn folds_cover_each_observed_cell_once(seed in any::<u64>(), k in 2usize..6) {
        let data = random_masked(6, 7, 0.7, seed);
        let folds = k_folds(&data, k, &mut SeededRng::new(seed, 4)).unwrap();
        prop_assert_eq!(folds.len(), k);
        let sizes: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&b| b).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for ((i, j), &m) in data.mask().indexed_iter() {
            let hits = folds.iter().filter(|f| f[[i, j]]).count();
            prop_assert_eq!(hits, usize::from(m));
        }
    }
}
