//! Subcommand implementations. Values come from flags, then the config file,
//! then built-in defaults.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bnmf::experiments::{
    convergence_experiment, model_selection_sweep, nested_cross_validation, noise_test,
    sparsity_test, ArdMode, ConvergenceOptions, CvOptions, ExperimentConfig, ExperimentKind,
    ExperimentResult, ModelSelectOptions, Noise, NoiseOptions, SparsityOptions, SyntheticSpec,
};
use bnmf::io::{
    load_csv, load_state, preprocess, save_state, write_curves, write_dense_csv, write_masked_csv,
    write_results, write_timings, write_trace, write_trace_timings, CsvOptions, PreprocessSpec,
    ResultFormat, SavedModel,
};
use bnmf::{fit, Engine, FitConfig, HyperParams, InitStrategy, MaskedMatrix, Model};
use ndarray::Array2;
use serde_json::{json, Value};

use crate::args::{
    DataArgs, ExperimentArgs, FitArgs, GenerateArgs, ModelArgs, OutputArgs, PredictArgs,
    SyntheticArgs,
};
use crate::config::FileConfig;
use crate::error::CliError;

/// Environment variable naming the output directory when neither a flag nor
/// the config file does.
pub const OUTPUT_ENV: &str = "BNMF_OUTPUT_DIR";
pub const DEFAULT_OUTPUT: &str = "bnmf-out";
pub const DEFAULT_K_VALUES: std::ops::RangeInclusive<usize> = 1..=10;

type Result<T> = std::result::Result<T, CliError>;

macro_rules! say {
    ($quiet:expr, $($arg:tt)*) => {
        if !$quiet {
            println!($($arg)*);
        }
    };
}

fn output_dir(args: &OutputArgs, file: &FileConfig) -> Result<PathBuf> {
    let dir = args
        .output
        .clone()
        .or_else(|| file.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::user(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn model_of(args: &ModelArgs, file: &FileConfig) -> Model {
    args.model.or(file.model).unwrap_or(Model::Nmf)
}

fn hyper_params(args: &ModelArgs, file: &FileConfig, base: HyperParams) -> Result<HyperParams> {
    let model = model_of(args, file);
    let l = args.l.or(file.l);
    if model == Model::Nmf && l.is_some() {
        return Err(CliError::user("`l` only applies to the nmtf model"));
    }
    Ok(HyperParams {
        k: args.k.or(file.k).unwrap_or(base.k),
        l: l.unwrap_or(base.l),
        lambda: args.lambda.or(file.lambda).unwrap_or(base.lambda),
        alpha_tau: args.alpha_tau.or(file.alpha_tau).unwrap_or(base.alpha_tau),
        beta_tau: args.beta_tau.or(file.beta_tau).unwrap_or(base.beta_tau),
        alpha0: args.alpha0.or(file.alpha0).unwrap_or(base.alpha0),
        beta0: args.beta0.or(file.beta0).unwrap_or(base.beta0),
        ard: base.ard,
    })
}

fn default_hyper(model: Model) -> HyperParams {
    match model {
        Model::Nmf => HyperParams::with_rank(10, 10),
        Model::Nmtf => HyperParams::with_rank(5, 5),
    }
}

fn load_data(args: &DataArgs, file: &FileConfig) -> Result<MaskedMatrix> {
    let input = args
        .input
        .clone()
        .or_else(|| file.data.input.clone())
        .ok_or_else(|| CliError::user("no input matrix; pass --input or set data.input"))?;
    let opts = CsvOptions {
        missing: args
            .missing
            .clone()
            .or_else(|| file.data.missing.clone())
            .unwrap_or_default(),
        header: args.header || file.data.header.unwrap_or(false),
    };
    let raw =
        load_csv(&input, &opts).map_err(|e| CliError::user(format!("{}: {e}", input.display())))?;
    let spec = PreprocessSpec {
        undo_natural_log: args.undo_log || file.data.undo_natural_log.unwrap_or(false),
        cap: args.cap.or(file.data.cap),
        drop_rows_with_fewer_than: args
            .min_row_observations
            .or(file.data.drop_rows_with_fewer_than),
    };
    Ok(preprocess(&raw, &spec)?)
}

pub fn fit_cmd(args: &FitArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let model = model_of(&args.model, file);
    let engine = args.engine.or(file.engine).unwrap_or(Engine::Vb);
    let ard = args.ard || file.ard.map(|a| a.as_flag()).transpose()?.unwrap_or(false);
    let m = &args.model;
    let hyper = HyperParams {
        ard,
        ..hyper_params(m, file, default_hyper(model))?
    };
    let mut cfg = FitConfig::new(model, engine, hyper, m.seed.or(file.seed).unwrap_or(0));
    cfg.init = m.init.or(file.init).unwrap_or(InitStrategy::RandomDraw);
    cfg.iterations = m
        .iterations
        .or(file.iterations)
        .unwrap_or(engine.default_iterations());
    cfg.burn_in = m.burn_in.or(file.burn_in);
    cfg.thin = m.thin.or(file.thin).unwrap_or(cfg.thin);
    cfg.tolerance = m.tolerance.or(file.tolerance);
    cfg.validate()?;

    let data = load_data(&args.data, file)?;
    let dir = output_dir(&args.output, file)?;
    let out = fit(&data, &cfg)?;

    let saved = SavedModel {
        engine,
        hyper,
        fitted: out.fitted.clone(),
        prediction: matches!(engine, Engine::Gibbs | Engine::Icm).then(|| out.prediction.clone()),
    };
    save_state(dir.join("state.json"), &saved)?;
    write_trace(create(&dir.join("trace.csv"))?, &out.trace)?;
    write_trace_timings(create(&dir.join("trace_timings.csv"))?, &out.trace)?;

    let mut summary = json!({
        "model": model,
        "engine": engine,
        "ard": ard,
        "k": hyper.k,
        "rows": data.nrows(),
        "cols": data.ncols(),
        "observed": data.n_observed(),
        "iterations": out.trace.iterations(),
        "train_mse": out.train_mse(),
    });
    if model == Model::Nmtf {
        summary["l"] = json!(hyper.l);
    }
    if ard {
        summary["active_factors"] = json!(out.fitted.active_factors());
    }
    if let Some(elbo) = out.trace.last().and_then(|p| p.elbo) {
        summary["elbo"] = json!(elbo);
    }
    write_json(&dir.join("summary.json"), &summary)?;
    let seconds = out.trace.last().map_or(0.0, |p| p.seconds);
    write_json(
        &dir.join("timings.json"),
        &json!({
            "seconds": seconds,
            "seconds_per_iteration": out.trace.seconds_per_iteration(),
        }),
    )?;
    say!(
        quiet,
        "{model} {engine}: {} iterations, train MSE {:.6}, wrote {}",
        out.trace.iterations(),
        out.train_mse(),
        dir.display()
    );
    Ok(())
}

fn check_dim(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<()> {
    if got != want {
        return Err(CliError::user(format!(
            "{what} is {}x{} but the model reconstructs {}x{}",
            got.0, got.1, want.0, want.1
        )));
    }
    Ok(())
}

pub fn predict_cmd(args: &PredictArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let saved = load_state(&args.state)
        .map_err(|e| CliError::user(format!("{}: {e}", args.state.display())))?;
    let opts = CsvOptions {
        missing: args
            .missing
            .clone()
            .or_else(|| file.data.missing.clone())
            .unwrap_or_default(),
        header: args.header || file.data.header.unwrap_or(false),
    };
    let load =
        |p: &Path| load_csv(p, &opts).map_err(|e| CliError::user(format!("{}: {e}", p.display())));
    let dim = saved.dim();
    let input = args.input.as_deref().map(load).transpose()?;
    if let Some(m) = &input {
        check_dim("input", m.dim(), dim)?;
    }
    let truth = args.truth.as_deref().map(load).transpose()?;
    if let Some(t) = &truth {
        check_dim("truth", t.dim(), dim)?;
    }

    let dir = output_dir(&args.output, file)?;
    let prediction = saved.predict();
    write_dense_csv(create(&dir.join("prediction.csv"))?, &prediction)?;

    if let Some(truth) = truth {
        let (cells, mse) = held_out_mse(&truth, input.as_ref(), &prediction);
        write_json(
            &dir.join("predict_summary.json"),
            &json!({ "scored_cells": cells, "test_mse": mse }),
        )?;
        match mse {
            Some(m) => say!(quiet, "test MSE {m:.6} over {cells} cells"),
            None => say!(quiet, "no cells to score"),
        }
    }
    say!(quiet, "wrote {}", dir.join("prediction.csv").display());
    Ok(())
}

/// Squared error on cells observed in `truth` and, when `input` is given,
/// unobserved in it.
pub fn held_out_mse(
    truth: &MaskedMatrix,
    input: Option<&MaskedMatrix>,
    prediction: &Array2<f64>,
) -> (usize, Option<f64>) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (i, j, r) in truth.observed() {
        if input.is_some_and(|m| m.is_observed(i, j)) {
            continue;
        }
        n += 1;
        sum += (r - prediction[[i, j]]).powi(2);
    }
    (n, (n > 0).then(|| sum / n as f64))
}

fn synthetic_spec(
    model: Model,
    seed: u64,
    args: &SyntheticArgs,
    file: &FileConfig,
) -> Result<SyntheticSpec> {
    let s = &file.synthetic;
    let base = match model {
        Model::Nmf => SyntheticSpec::nmf(seed),
        Model::Nmtf => SyntheticSpec::nmtf(seed),
    };
    let l = args.true_l.or(s.l);
    if model == Model::Nmf && l.is_some() {
        return Err(CliError::user("a column rank only applies to nmtf data"));
    }
    let noise = match (args.noise_variance, args.nsr, s.noise_variance, s.nsr) {
        (Some(v), _, _, _) => Noise::Variance(v),
        (None, Some(r), _, _) => Noise::Nsr(r),
        (None, None, Some(_), Some(_)) => {
            return Err(CliError::user(
                "set either synthetic.noise_variance or synthetic.nsr, not both",
            ))
        }
        (None, None, Some(v), None) => Noise::Variance(v),
        (None, None, None, Some(r)) => Noise::Nsr(r),
        (None, None, None, None) => base.noise,
    };
    let spec = SyntheticSpec {
        rows: args.rows.or(s.rows).unwrap_or(base.rows),
        cols: args.cols.or(s.cols).unwrap_or(base.cols),
        k: args.true_k.or(s.k).unwrap_or(base.k),
        l: l.or(base.l),
        factor_rate: args
            .factor_rate
            .or(s.factor_rate)
            .unwrap_or(base.factor_rate),
        noise,
        seed: args.synthetic_seed.or(s.seed).unwrap_or(seed),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn experiment_cmd(args: &ExperimentArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let kind = args.kind;
    let m = &args.model;
    let model = model_of(m, file);
    let seed = m.seed.or(file.seed).unwrap_or(0);
    let mut cfg = ExperimentConfig::new(model, seed);
    cfg.hyper = hyper_params(m, file, cfg.hyper)?;
    cfg.engines = args
        .engines
        .clone()
        .or_else(|| file.engines.clone())
        .unwrap_or_else(|| match kind {
            ExperimentKind::ModelSelect => vec![Engine::Gibbs, Engine::Icm, Engine::Vb],
            _ => Engine::ALL.to_vec(),
        });
    cfg.ard_mode = args
        .ard
        .or(file.ard.map(|a| a.as_mode()))
        .unwrap_or(match kind {
            ExperimentKind::ModelSelect => ArdMode::Both,
            _ => ArdMode::Off,
        });
    cfg.init = m.init.or(file.init).unwrap_or(cfg.init);
    cfg.iterations = m.iterations.or(file.iterations);
    cfg.burn_in = m.burn_in.or(file.burn_in);
    cfg.thin = m.thin.or(file.thin).unwrap_or(cfg.thin);
    cfg.tolerance = m.tolerance.or(file.tolerance);
    cfg.validate()?;

    let x = &file.experiment;
    let has_input = args.data.input.is_some() || file.data.input.is_some();
    let spec = synthetic_spec(model, seed, &args.synthetic, file)?;
    let data = || -> Result<MaskedMatrix> {
        if has_input {
            load_data(&args.data, file)
        } else {
            Ok(spec.generate()?.data)
        }
    };
    let k_values = || -> Result<Vec<usize>> {
        match (&args.k_values, &x.k_values) {
            (Some(k), _) => Ok(k.0.clone()),
            (None, Some(k)) => k.resolve(),
            (None, None) => Ok(DEFAULT_K_VALUES.collect()),
        }
    };

    let result = match kind {
        ExperimentKind::Convergence => {
            let mut opts = ConvergenceOptions::default();
            opts.repeats = args.repeats.or(x.repeats).unwrap_or(opts.repeats);
            convergence_experiment(&data()?, &cfg, &opts)?
        }
        ExperimentKind::Noise => {
            if has_input {
                return Err(CliError::user(
                    "the noise experiment generates its own data; drop --input",
                ));
            }
            let mut opts = NoiseOptions::new(spec);
            opts.levels = args
                .levels
                .clone()
                .or_else(|| x.levels.clone())
                .unwrap_or(opts.levels);
            opts.splits = args.splits.or(x.splits).unwrap_or(opts.splits);
            opts.test_fraction = args
                .test_fraction
                .or(x.test_fraction)
                .unwrap_or(opts.test_fraction);
            noise_test(&cfg, &opts)?
        }
        ExperimentKind::Sparsity => {
            let mut opts = SparsityOptions::default();
            opts.fractions = args
                .fractions
                .clone()
                .or_else(|| x.fractions.clone())
                .unwrap_or(opts.fractions);
            opts.splits = args.splits.or(x.splits).unwrap_or(opts.splits);
            sparsity_test(&data()?, &cfg, &opts)?
        }
        ExperimentKind::Cv => {
            let mut opts = CvOptions::new(k_values()?);
            opts.outer_folds = args.folds.or(x.folds).unwrap_or(opts.outer_folds);
            opts.inner_folds = args
                .inner_folds
                .or(x.inner_folds)
                .unwrap_or(opts.inner_folds);
            opts.ard_k = args.ard_k.or(x.ard_k);
            nested_cross_validation(&data()?, &cfg, &opts)?
        }
        ExperimentKind::ModelSelect => {
            let mut opts = ModelSelectOptions::new(k_values()?);
            opts.folds = args.folds.or(x.folds).unwrap_or(opts.folds);
            model_selection_sweep(&data()?, &cfg, &opts)?
        }
    };

    let dir = output_dir(&args.output, file)?;
    write_experiment(&dir, &result)?;
    print_summary(&result, quiet);
    say!(quiet, "wrote {}", dir.display());
    Ok(())
}

/// Writes `results.csv`, `results.json`, `timings.csv` and, for convergence
/// runs, `curves.csv`.
pub fn write_experiment(dir: &Path, result: &ExperimentResult) -> Result<()> {
    write_results(create(&dir.join("results.csv"))?, result, ResultFormat::Csv)?;
    write_results(
        create(&dir.join("results.json"))?,
        result,
        ResultFormat::Json,
    )?;
    write_timings(create(&dir.join("timings.csv"))?, result)?;
    if result.kind == ExperimentKind::Convergence {
        write_curves(create(&dir.join("curves.csv"))?, result)?;
    }
    Ok(())
}

fn print_summary(result: &ExperimentResult, quiet: bool) {
    if result.kind == ExperimentKind::Convergence {
        for c in &result.curves {
            let last = c.train_mse.last().copied().unwrap_or(f64::NAN);
            say!(
                quiet,
                "{} ard={}: final train MSE {last:.6}",
                c.engine,
                c.ard
            );
        }
        return;
    }
    let mut seen: Vec<(Engine, bool, Option<u64>)> = Vec::new();
    for r in &result.rows {
        let key = (r.engine, r.ard, r.setting.map(f64::to_bits));
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        if let Some(mse) = result.mean_test_mse(r.engine, r.ard, r.setting) {
            let setting = r
                .setting
                .map(|s| format!(" {}={s}", result.kind.setting_name()))
                .unwrap_or_default();
            say!(
                quiet,
                "{} ard={}{setting}: mean test MSE {mse:.6}",
                r.engine,
                r.ard
            );
        }
    }
}

pub fn generate_cmd(args: &GenerateArgs, file: &FileConfig, quiet: bool) -> Result<()> {
    let model = args.model.or(file.model).unwrap_or(Model::Nmf);
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let spec = synthetic_spec(model, seed, &args.synthetic, file)?;
    let syn = spec.generate()?;
    let dir = output_dir(&args.output, file)?;
    write_masked_csv(create(&dir.join("data.csv"))?, &syn.data, "")?;
    write_dense_csv(create(&dir.join("truth.csv"))?, &syn.truth)?;
    write_json(
        &dir.join("generate.json"),
        &json!({ "spec": spec, "noise_variance": syn.noise_variance }),
    )?;
    say!(
        quiet,
        "{}x{} {model} data, noise variance {:.6}, wrote {}",
        spec.rows,
        spec.cols,
        syn.noise_variance,
        dir.display()
    );
    Ok(())
}
