//! CSV ingestion, preprocessing, and serialisation of states, traces and
//! experiment results.
//!
//! Floating-point values are written with 17 significant digits so every
//! finite value reads back to the same bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::distributions::GammaParams;
use crate::error::{invalid, Error, Result};
use crate::experiments::{ExperimentKind, ExperimentResult, ExperimentRow};
use crate::fit::{Engine, Fitted, Model};
use crate::masked::MaskedMatrix;
use crate::model::{HyperParams, NmfState, NmtfState, VbFactor, VbNmfState, VbNmtfState};
use crate::run::Trace;

/// Version written into every state and result JSON document.
pub const SCHEMA_VERSION: u32 = 1;

/// Column names of the results CSV; `setting` is renamed per experiment
/// (`nsr`, `missing_fraction` or `k`).
pub const RESULT_COLUMNS: [&str; 11] = [
    "experiment",
    "model",
    "engine",
    "ard",
    "setting",
    "fold",
    "train_mse",
    "test_mse",
    "iterations",
    "chosen_k",
    "active_factors",
];

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CsvOptions {
    /// Cells equal to this token (after trimming) are unobserved.
    pub missing: String,
    /// Skip the first record.
    pub header: bool,
}

/// Reads a rectangular numeric CSV into a masked matrix.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<MaskedMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut width = None;
    let mut n_rows = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::CsvCell {
                row,
                col: record.len().min(expected),
                reason: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            if cell == opts.missing {
                values.push(0.0);
                mask.push(false);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::CsvCell {
                row,
                col,
                reason: format!("cannot parse `{cell}` as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvCell {
                    row,
                    col,
                    reason: format!("non-finite value `{cell}`"),
                });
            }
            values.push(v);
            mask.push(true);
        }
        n_rows += 1;
    }
    let n_cols = width.unwrap_or(0);
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    let values =
        Array2::from_shape_vec((n_rows, n_cols), values).expect("rectangular by construction");
    let mask = Array2::from_shape_vec((n_rows, n_cols), mask).expect("rectangular by construction");
    MaskedMatrix::from_dense(values, mask)
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<MaskedMatrix> {
    read_csv(BufReader::new(File::open(path)?), opts)
}

/// Writes observed values, with `missing` in unobserved cells.
pub fn write_masked_csv<W: Write>(writer: W, data: &MaskedMatrix, missing: &str) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for i in 0..data.nrows() {
        let row: Vec<String> = (0..data.ncols())
            .map(|j| data.get(i, j).map_or_else(|| missing.to_string(), fmt_f64))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dense_csv<W: Write>(writer: W, m: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(writer);
    for row in m.rows() {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

/// Transforms applied to drug-sensitivity style data before fitting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSpec {
    /// Replace every observed value `x` by `exp(x)`.
    #[serde(default)]
    pub undo_natural_log: bool,
    /// Replace values above the cap by the cap.
    pub cap: Option<f64>,
    /// Drop rows with fewer observed cells than this.
    pub drop_rows_with_fewer_than: Option<usize>,
}

impl PreprocessSpec {
    pub fn validate(&self) -> Result<()> {
        match self.cap {
            Some(c) if !(c > 0.0 && c.is_finite()) => {
                Err(invalid("cap", format!("must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Applies exponentiation, then the cap, then the row filter. Dropped rows
/// are removed from the matrix.
pub fn preprocess(data: &MaskedMatrix, spec: &PreprocessSpec) -> Result<MaskedMatrix> {
    spec.validate()?;
    let mut values = data.values().to_owned();
    for ((i, j), v) in values.indexed_iter_mut() {
        if !data.is_observed(i, j) {
            continue;
        }
        if spec.undo_natural_log {
            *v = v.exp();
        }
        if let Some(cap) = spec.cap {
            *v = v.min(cap);
        }
    }
    let keep: Vec<usize> = (0..data.nrows())
        .filter(|&i| {
            spec.drop_rows_with_fewer_than
                .is_none_or(|n| data.row_indices(i).len() >= n)
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let values = values.select(ndarray::Axis(0), &keep);
    let mask = data.mask().select(ndarray::Axis(0), &keep);
    MaskedMatrix::from_dense(values, mask)
}

// JSON has no infinities; non-finite values are stored as strings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Num {
    Finite(f64),
    Special(Special),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Special {
    #[serde(rename = "inf")]
    Inf,
    #[serde(rename = "-inf")]
    NegInf,
    #[serde(rename = "nan")]
    Nan,
}

impl From<f64> for Num {
    fn from(x: f64) -> Self {
        if x.is_finite() {
            Num::Finite(x)
        } else if x.is_nan() {
            Num::Special(Special::Nan)
        } else if x > 0.0 {
            Num::Special(Special::Inf)
        } else {
            Num::Special(Special::NegInf)
        }
    }
}

impl From<Num> for f64 {
    fn from(n: Num) -> Self {
        match n {
            Num::Finite(x) => x,
            Num::Special(Special::Inf) => f64::INFINITY,
            Num::Special(Special::NegInf) => f64::NEG_INFINITY,
            Num::Special(Special::Nan) => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    /// Row-major values.
    data: Vec<Num>,
}

impl MatrixRepr {
    fn from(m: &Array2<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().map(|&x| x.into()).collect(),
        }
    }

    fn into_array(self, name: &str) -> Result<Array2<f64>> {
        let data: Vec<f64> = self.data.into_iter().map(f64::from).collect();
        Array2::from_shape_vec((self.rows, self.cols), data).map_err(|_| {
            Error::InvalidState(format!(
                "{name}: data length does not match {}x{}",
                self.rows, self.cols
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VbFactorRepr {
    mu: MatrixRepr,
    tau: MatrixRepr,
    mean: MatrixRepr,
    var: MatrixRepr,
}

impl VbFactorRepr {
    fn from(f: &VbFactor) -> Self {
        Self {
            mu: MatrixRepr::from(&f.mu),
            tau: MatrixRepr::from(&f.tau),
            mean: MatrixRepr::from(&f.mean),
            var: MatrixRepr::from(&f.var),
        }
    }

    fn into_factor(self, name: &str) -> Result<VbFactor> {
        let f = VbFactor {
            mu: self.mu.into_array(name)?,
            tau: self.tau.into_array(name)?,
            mean: self.mean.into_array(name)?,
            var: self.var.into_array(name)?,
        };
        let d = f.mu.dim();
        if f.tau.dim() != d || f.mean.dim() != d || f.var.dim() != d {
            return Err(Error::InvalidState(format!(
                "{name}: parameter shapes differ"
            )));
        }
        Ok(f)
    }
}

fn vec_repr(v: &Option<Array1<f64>>) -> Option<Vec<Num>> {
    v.as_ref().map(|a| a.iter().map(|&x| x.into()).collect())
}

fn vec_from(v: Option<Vec<Num>>) -> Option<Array1<f64>> {
    v.map(|a| a.into_iter().map(f64::from).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FittedRepr {
    PointNmf {
        u: MatrixRepr,
        v: MatrixRepr,
        tau: Num,
        ard: Option<Vec<Num>>,
    },
    PointNmtf {
        f: MatrixRepr,
        s: MatrixRepr,
        g: MatrixRepr,
        tau: Num,
        ard_f: Option<Vec<Num>>,
        ard_g: Option<Vec<Num>>,
    },
    VbNmf {
        u: VbFactorRepr,
        v: VbFactorRepr,
        tau: GammaParams,
        ard: Option<Vec<GammaParams>>,
    },
    VbNmtf {
        f: VbFactorRepr,
        s: VbFactorRepr,
        g: VbFactorRepr,
        tau: GammaParams,
        ard_f: Option<Vec<GammaParams>>,
        ard_g: Option<Vec<GammaParams>>,
    },
}

impl FittedRepr {
    fn from(f: &Fitted) -> Self {
        match f {
            Fitted::Nmf(s) => FittedRepr::PointNmf {
                u: MatrixRepr::from(&s.u),
                v: MatrixRepr::from(&s.v),
                tau: s.tau.into(),
                ard: vec_repr(&s.ard),
            },
            Fitted::Nmtf(s) => FittedRepr::PointNmtf {
                f: MatrixRepr::from(&s.f),
                s: MatrixRepr::from(&s.s),
                g: MatrixRepr::from(&s.g),
                tau: s.tau.into(),
                ard_f: vec_repr(&s.ard_f),
                ard_g: vec_repr(&s.ard_g),
            },
            Fitted::VbNmf(s) => FittedRepr::VbNmf {
                u: VbFactorRepr::from(&s.u),
                v: VbFactorRepr::from(&s.v),
                tau: s.tau,
                ard: s.ard.clone(),
            },
            Fitted::VbNmtf(s) => FittedRepr::VbNmtf {
                f: VbFactorRepr::from(&s.f),
                s: VbFactorRepr::from(&s.s),
                g: VbFactorRepr::from(&s.g),
                tau: s.tau,
                ard_f: s.ard_f.clone(),
                ard_g: s.ard_g.clone(),
            },
        }
    }

    fn into_fitted(self) -> Result<Fitted> {
        Ok(match self {
            FittedRepr::PointNmf { u, v, tau, ard } => {
                let s = NmfState {
                    u: u.into_array("U")?,
                    v: v.into_array("V")?,
                    tau: tau.into(),
                    ard: vec_from(ard),
                };
                s.validate()?;
                Fitted::Nmf(s)
            }
            FittedRepr::PointNmtf {
                f,
                s,
                g,
                tau,
                ard_f,
                ard_g,
            } => {
                let st = NmtfState {
                    f: f.into_array("F")?,
                    s: s.into_array("S")?,
                    g: g.into_array("G")?,
                    tau: tau.into(),
                    ard_f: vec_from(ard_f),
                    ard_g: vec_from(ard_g),
                };
                st.validate()?;
                Fitted::Nmtf(st)
            }
            FittedRepr::VbNmf { u, v, tau, ard } => {
                let (u, v) = (u.into_factor("U")?, v.into_factor("V")?);
                if u.dim().1 != v.dim().1 || ard.as_ref().is_some_and(|a| a.len() != u.dim().1) {
                    return Err(Error::InvalidState("U, V and ARD disagree on K".into()));
                }
                Fitted::VbNmf(VbNmfState { u, v, tau, ard })
            }
            FittedRepr::VbNmtf {
                f,
                s,
                g,
                tau,
                ard_f,
                ard_g,
            } => {
                let (f, s, g) = (
                    f.into_factor("F")?,
                    s.into_factor("S")?,
                    g.into_factor("G")?,
                );
                let (k, l) = s.dim();
                if f.dim().1 != k
                    || g.dim().1 != l
                    || ard_f.as_ref().is_some_and(|a| a.len() != k)
                    || ard_g.as_ref().is_some_and(|a| a.len() != l)
                {
                    return Err(Error::InvalidState(
                        "F, S, G and ARD disagree on K or L".into(),
                    ));
                }
                Fitted::VbNmtf(VbNmtfState {
                    f,
                    s,
                    g,
                    tau,
                    ard_f,
                    ard_g,
                })
            }
        })
    }
}

/// A fitted model together with what is needed to use it later.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub engine: Engine,
    pub hyper: HyperParams,
    pub fitted: Fitted,
    /// Averaged reconstruction of the sampling engines; absent when the
    /// factor product is the prediction.
    pub prediction: Option<Array2<f64>>,
}

impl SavedModel {
    pub fn model(&self) -> Model {
        self.fitted.model()
    }

    /// Rows and columns of the matrix the model reconstructs.
    pub fn dim(&self) -> (usize, usize) {
        let rows = self.fitted.row_factor().nrows();
        let cols = match &self.fitted {
            Fitted::Nmf(s) => s.v.nrows(),
            Fitted::Nmtf(s) => s.g.nrows(),
            Fitted::VbNmf(s) => s.v.mean.nrows(),
            Fitted::VbNmtf(s) => s.g.mean.nrows(),
        };
        (rows, cols)
    }

    pub fn predict(&self) -> Array2<f64> {
        use crate::model::Predict;
        self.prediction
            .clone()
            .unwrap_or_else(|| self.fitted.predict())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedRepr {
    schema_version: u32,
    model: Model,
    engine: Engine,
    rows: usize,
    cols: usize,
    hyper: HyperParams,
    state: FittedRepr,
    prediction: Option<MatrixRepr>,
}

fn check_version(value: &Value) -> Result<()> {
    let found = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::InvalidState("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found: u32::try_from(found).unwrap_or(u32::MAX),
        });
    }
    Ok(())
}

pub fn write_state<W: Write>(writer: W, saved: &SavedModel) -> Result<()> {
    let (rows, cols) = saved.dim();
    let repr = SavedRepr {
        schema_version: SCHEMA_VERSION,
        model: saved.model(),
        engine: saved.engine,
        rows,
        cols,
        hyper: saved.hyper,
        state: FittedRepr::from(&saved.fitted),
        prediction: saved.prediction.as_ref().map(MatrixRepr::from),
    };
    let mut w = BufWriter::new(writer);
    serde_json::to_writer_pretty(&mut w, &repr)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_state<R: Read>(reader: R) -> Result<SavedModel> {
    let value: Value = serde_json::from_reader(reader)?;
    check_version(&value)?;
    let repr: SavedRepr = serde_json::from_value(value)?;
    let fitted = repr.state.into_fitted()?;
    let prediction = repr
        .prediction
        .map(|p| p.into_array("prediction"))
        .transpose()?;
    let saved = SavedModel {
        engine: repr.engine,
        hyper: repr.hyper,
        fitted,
        prediction,
    };
    if saved.model() != repr.model {
        return Err(Error::InvalidState(
            "model does not match the stored factors".into(),
        ));
    }
    if saved.dim() != (repr.rows, repr.cols) {
        return Err(Error::InvalidState(format!(
            "factors give a {:?} matrix but the header says {:?}",
            saved.dim(),
            (repr.rows, repr.cols)
        )));
    }
    if let Some(p) = &saved.prediction {
        if p.dim() != saved.dim() {
            return Err(Error::InvalidState(
                "prediction shape does not match the factors".into(),
            ));
        }
    }
    Ok(saved)
}

pub fn save_state(path: impl AsRef<Path>, saved: &SavedModel) -> Result<()> {
    write_state(File::create(path)?, saved)
}

pub fn load_state(path: impl AsRef<Path>) -> Result<SavedModel> {
    read_state(BufReader::new(File::open(path)?))
}

/// Writes `iteration,train_mse,elbo`, one line per trace record. Timings are
/// left out so reruns produce identical files.
pub fn write_trace<W: Write>(writer: W, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "train_mse", "elbo"])?;
    for p in &trace.points {
        w.write_record([
            p.iteration.to_string(),
            fmt_f64(p.train_mse),
            p.elbo.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `iteration,seconds` for a trace.
pub fn write_trace_timings<W: Write>(writer: W, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "seconds"])?;
    for p in &trace.points {
        w.write_record([p.iteration.to_string(), fmt_f64(p.seconds)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Config(format!("unknown result format `{other}`"))),
        }
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn row_record(kind: ExperimentKind, r: &ExperimentRow) -> [String; 11] {
    [
        kind.as_str().to_string(),
        r.model.to_string(),
        r.engine.to_string(),
        r.ard.to_string(),
        r.setting.map(fmt_f64).unwrap_or_default(),
        r.fold.to_string(),
        fmt_f64(r.train_mse),
        r.test_mse.map(fmt_f64).unwrap_or_default(),
        r.iterations.to_string(),
        opt(r.chosen_k),
        opt(r.active_factors),
    ]
}

fn result_header(kind: ExperimentKind) -> Vec<&'static str> {
    let mut h = RESULT_COLUMNS.to_vec();
    h[4] = kind.setting_name();
    h
}

#[derive(Serialize)]
struct ResultJson<'a> {
    schema_version: u32,
    experiment: ExperimentKind,
    setting_name: &'static str,
    rows: &'a [ExperimentRow],
    curves: &'a [crate::experiments::ConvergenceCurve],
}

/// Writes the rows of an experiment. Timing information is not included.
pub fn write_results<W: Write>(
    writer: W,
    result: &ExperimentResult,
    format: ResultFormat,
) -> Result<()> {
    match format {
        ResultFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(result_header(result.kind))?;
            for r in &result.rows {
                w.write_record(row_record(result.kind, r))?;
            }
            w.flush()?;
        }
        ResultFormat::Json => {
            let doc = ResultJson {
                schema_version: SCHEMA_VERSION,
                experiment: result.kind,
                setting_name: result.kind.setting_name(),
                rows: &result.rows,
                curves: &result.curves,
            };
            let mut w = BufWriter::new(writer);
            serde_json::to_writer_pretty(&mut w, &doc)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Writes the averaged convergence curves as `model,engine,ard,iteration,train_mse`.
pub fn write_curves<W: Write>(writer: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "engine", "ard", "iteration", "train_mse"])?;
    for c in &result.curves {
        for (t, &m) in c.train_mse.iter().enumerate() {
            w.write_record([
                c.model.to_string(),
                c.engine.to_string(),
                c.ard.to_string(),
                t.to_string(),
                fmt_f64(m),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock seconds per row and mean seconds per iteration per curve.
pub fn write_timings<W: Write>(writer: W, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "model",
        "engine",
        "ard",
        result.kind.setting_name(),
        "fold",
        "seconds",
    ];
    header.push("seconds_per_iteration");
    w.write_record(&header)?;
    for r in &result.rows {
        let per_iter = if r.iterations > 0 {
            r.seconds / r.iterations as f64
        } else {
            0.0
        };
        w.write_record([
            r.model.to_string(),
            r.engine.to_string(),
            r.ard.to_string(),
            r.setting.map(fmt_f64).unwrap_or_default(),
            r.fold.to_string(),
            fmt_f64(r.seconds),
            fmt_f64(per_iter),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(missing: &str) -> CsvOptions {
        CsvOptions {
            missing: missing.into(),
            header: false,
        }
    }

    #[test]
    fn empty_cells_are_unobserved() {
        let m = read_csv("1,2\n3,\n".as_bytes(), &opts("")).unwrap();
        assert_eq!(m.dim(), (2, 2));
        assert_eq!(m.n_observed(), 3);
        assert!(!m.is_observed(1, 1));
    }

    #[test]
    fn custom_missing_token() {
        let m = read_csv("NA,5\n".as_bytes(), &opts("NA")).unwrap();
        assert_eq!(m.n_observed(), 1);
        assert_eq!(m.get(0, 1), Some(5.0));
    }

    #[test]
    fn bad_cell_names_its_position() {
        let err = read_csv("1,x\n".as_bytes(), &opts("")).unwrap_err();
        assert!(
            matches!(err, Error::CsvCell { row: 0, col: 1, .. }),
            "{err}"
        );
        let err = read_csv("1,2\n3\n".as_bytes(), &opts("")).unwrap_err();
        assert!(matches!(err, Error::CsvCell { row: 1, .. }), "{err}");
        assert!(matches!(
            read_csv(",\n".as_bytes(), &opts("")),
            Err(Error::NoObservations)
        ));
    }

    #[test]
    fn preprocess_exponentiates_then_caps() {
        let data = MaskedMatrix::fully_observed(ndarray::array![[5.0, 3.0]]).unwrap();
        let spec = PreprocessSpec {
            undo_natural_log: true,
            cap: Some(100.0),
            drop_rows_with_fewer_than: None,
        };
        let out = preprocess(&data, &spec).unwrap();
        assert_eq!(out.get(0, 0), Some(100.0));
        assert!((out.get(0, 1).unwrap() - 3f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn sparse_rows_are_dropped() {
        let data = MaskedMatrix::from_dense(
            ndarray::array![[1.0, 2.0], [3.0, 0.0], [5.0, 6.0]],
            ndarray::array![[true, true], [true, false], [true, true]],
        )
        .unwrap();
        let spec = PreprocessSpec {
            drop_rows_with_fewer_than: Some(2),
            ..PreprocessSpec::default()
        };
        let out = preprocess(&data, &spec).unwrap();
        assert_eq!(out.dim(), (2, 2));
        assert_eq!(out.get(1, 0), Some(5.0));
    }

    #[test]
    fn schema_version_is_checked() {
        let doc = r#"{"schema_version": 99}"#;
        assert!(matches!(
            read_state(doc.as_bytes()),
            Err(Error::SchemaVersion { found: 99, .. })
        ));
    }

    #[test]
    fn empty_result_is_header_only() {
        let mut out = Vec::new();
        write_results(
            &mut out,
            &ExperimentResult::new(ExperimentKind::Noise),
            ResultFormat::Csv,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "experiment,model,engine,ard,nsr,fold,train_mse,test_mse,iterations,chosen_k,active_factors\n"
        );
    }
}
