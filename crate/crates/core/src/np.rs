//! Non-probabilistic multiplicative updates minimising the I-divergence on
//! the observed cells.

use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use crate::error::Result;
use crate::masked::MaskedMatrix;
use crate::model::{init_nmf, init_nmtf, HyperParams, InitStrategy, NmfState, NmtfState, Predict};
use crate::run::{Clamp, Recorder, StopRule, Trace};

/// Entries are never allowed to drop below this value.
pub const FLOOR: f64 = 1e-15;

/// Outcome of one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepReport {
    /// Entries left unchanged because their update had a zero denominator.
    pub unchanged: usize,
}

// Q_ij = R_ij / P_ij on observed cells, zero elsewhere.
fn ratio(data: &MaskedMatrix, prediction: &Array2<f64>) -> Array2<f64> {
    let mut q = Array2::zeros(data.dim());
    Zip::from(&mut q)
        .and(&data.values())
        .and(&data.mask())
        .and(prediction)
        .par_for_each(|q, &r, &m, &p| {
            if m {
                *q = r / p;
            }
        });
    q
}

fn observed_indicator(data: &MaskedMatrix) -> Array2<f64> {
    data.mask().mapv(|m| if m { 1.0 } else { 0.0 })
}

// a_ik <- a_ik * num_ik / den_ik, leaving entries with den_ik == 0 unchanged.
fn apply(a: &mut Array2<f64>, num: &Array2<f64>, den: &Array2<f64>) -> usize {
    let mut unchanged = 0;
    Zip::from(a).and(num).and(den).for_each(|a, &n, &d| {
        if d > 0.0 {
            *a = (*a * n / d).max(FLOOR);
        } else {
            unchanged += 1;
        }
    });
    unchanged
}

/// Updates all of U, then all of V.
pub fn sweep_nmf(state: &mut NmfState, data: &MaskedMatrix, clamp: Clamp) -> SweepReport {
    let m = observed_indicator(data);
    let mut unchanged = 0;
    if !clamp.rows {
        let q = ratio(data, &state.predict());
        let num = q.dot(&state.v);
        let den = m.dot(&state.v);
        unchanged += apply(&mut state.u, &num, &den);
    }
    if !clamp.cols {
        let q = ratio(data, &state.predict());
        let num = q.t().dot(&state.u);
        let den = m.t().dot(&state.u);
        unchanged += apply(&mut state.v, &num, &den);
    }
    SweepReport { unchanged }
}

/// Updates F, then S, then G.
pub fn sweep_nmtf(state: &mut NmtfState, data: &MaskedMatrix, clamp: Clamp) -> SweepReport {
    let m = observed_indicator(data);
    let mut unchanged = 0;
    if !clamp.rows {
        let sg = state.g.dot(&state.s.t());
        let q = ratio(data, &state.f.dot(&sg.t()));
        unchanged += apply(&mut state.f, &q.dot(&sg), &m.dot(&sg));
    }
    if !clamp.middle {
        let q = ratio(data, &state.predict());
        // Σ_ij F_ik Q_ij G_jl = (Fᵀ Q G)_kl
        let num = state.f.t().dot(&q).dot(&state.g);
        let den = state.f.t().dot(&m).dot(&state.g);
        unchanged += apply(&mut state.s, &num, &den);
    }
    if !clamp.cols {
        let fs = state.f.dot(&state.s);
        let q = ratio(data, &fs.dot(&state.g.t()));
        unchanged += apply(&mut state.g, &q.t().dot(&fs), &m.t().dot(&fs));
    }
    SweepReport { unchanged }
}

fn positive_start(mut m: Array2<f64>) -> Array2<f64> {
    m.mapv_inplace(|x| x.max(FLOOR));
    m
}

fn mse(data: &MaskedMatrix, p: ArrayView2<'_, f64>) -> f64 {
    data.sum_sq_error(p) / data.n_observed() as f64
}

/// Runs multiplicative updates from an initial state drawn with `strategy`.
pub fn run_nmf<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    strategy: InitStrategy,
    stop: StopRule,
    rng: &mut R,
) -> Result<(NmfState, Trace)> {
    let mut state = init_nmf(
        data,
        &HyperParams {
            ard: false,
            ..*hyper
        },
        strategy,
        rng,
    )?;
    state.u = positive_start(state.u);
    state.v = positive_start(state.v);
    run_nmf_from(state, data, stop, Clamp::default())
}

pub fn run_nmf_from(
    mut state: NmfState,
    data: &MaskedMatrix,
    stop: StopRule,
    clamp: Clamp,
) -> Result<(NmfState, Trace)> {
    stop.validate()?;
    let mut rec = Recorder::start();
    rec.record(mse(data, state.predict().view()), None);
    while !stop.should_stop(&rec.trace) {
        sweep_nmf(&mut state, data, clamp);
        rec.record(mse(data, state.predict().view()), None);
    }
    Ok((state, rec.trace))
}

/// With k-means initialisation the raw indicators are used, floored away from zero.
pub fn run_nmtf<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    strategy: InitStrategy,
    stop: StopRule,
    rng: &mut R,
) -> Result<(NmtfState, Trace)> {
    let mut state = init_nmtf(
        data,
        &HyperParams {
            ard: false,
            ..*hyper
        },
        strategy,
        0.0,
        rng,
    )?;
    state.f = positive_start(state.f);
    state.s = positive_start(state.s);
    state.g = positive_start(state.g);
    run_nmtf_from(state, data, stop, Clamp::default())
}

pub fn run_nmtf_from(
    mut state: NmtfState,
    data: &MaskedMatrix,
    stop: StopRule,
    clamp: Clamp,
) -> Result<(NmtfState, Trace)> {
    stop.validate()?;
    let mut rec = Recorder::start();
    rec.record(mse(data, state.predict().view()), None);
    while !stop.should_stop(&rec.trace) {
        sweep_nmtf(&mut state, data, clamp);
        rec.record(mse(data, state.predict().view()), None);
    }
    Ok((state, rec.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SeededRng;
    use ndarray::array;

    fn random_positive(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() + 0.1)
    }

    #[test]
    fn exact_factorisation_is_a_fixed_point() {
        let mut rng = SeededRng::new(3, 0);
        let u = random_positive(6, 2, &mut rng);
        let v = random_positive(5, 2, &mut rng);
        let data = MaskedMatrix::fully_observed(u.dot(&v.t())).unwrap();
        let mut s = NmfState {
            u: u.clone(),
            v: v.clone(),
            tau: 1.0,
            ard: None,
        };
        sweep_nmf(&mut s, &data, Clamp::default());
        for (a, b) in s.u.iter().zip(u.iter()).chain(s.v.iter().zip(v.iter())) {
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_decreases() {
        let mut rng = SeededRng::new(4, 0);
        let data = MaskedMatrix::fully_observed(random_positive(10, 8, &mut rng) * 5.0).unwrap();
        let mut s = NmfState {
            u: random_positive(10, 3, &mut rng),
            v: random_positive(8, 3, &mut rng),
            tau: 1.0,
            ard: None,
        };
        let mut prev = data.i_divergence(s.predict().view()).unwrap();
        for _ in 0..200 {
            sweep_nmf(&mut s, &data, Clamp::default());
            let d = data.i_divergence(s.predict().view()).unwrap();
            assert!(d <= prev + 1e-9, "{d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn unobserved_row_is_left_alone() {
        let data = MaskedMatrix::from_dense(
            array![[1.0, 2.0], [3.0, 4.0]],
            array![[true, true], [false, false]],
        )
        .unwrap();
        let mut s = NmfState {
            u: array![[1.0], [2.0]],
            v: array![[1.0], [1.0]],
            tau: 1.0,
            ard: None,
        };
        let report = sweep_nmf(&mut s, &data, Clamp::default());
        assert_eq!(s.u[[1, 0]], 2.0);
        assert_eq!(report.unchanged, 1);
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let data = MaskedMatrix::fully_observed(array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let hyper = HyperParams::with_rank(1, 1);
        let (s0, trace) = run_nmf(
            &data,
            &hyper,
            InitStrategy::PriorMean,
            StopRule::fixed(0),
            &mut SeededRng::new(0, 0),
        )
        .unwrap();
        assert_eq!(trace.points.len(), 1);
        assert!(s0.u.iter().all(|&x| x == 10.0));
    }
}
