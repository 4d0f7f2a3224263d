//! Iterated conditional modes: every update takes the mode of its conditional.

use ndarray::Array2;

use crate::error::{invalid, Result};
use crate::gibbs::{
    init_rng, point_sweep_nmf, point_sweep_nmtf, run_chain, ChainOptions, PosteriorEstimate,
};
use crate::kernels::Rule;
use crate::masked::MaskedMatrix;
use crate::model::{init_nmf, init_nmtf, HyperParams, NmfState, NmtfState, KMEANS_SMOOTHING};
use crate::run::{Clamp, Trace};

/// Value given to factor entries whose mode is exactly zero.
pub const ZERO_RESET: f64 = 0.1;

fn reset_zeros(m: &mut Array2<f64>) {
    m.mapv_inplace(|x| if x == 0.0 { ZERO_RESET } else { x });
}

// Gamma modes need shape >= 1.
fn check_shapes(data: &MaskedMatrix, hyper: &HyperParams) -> Result<()> {
    if hyper.alpha_tau + data.n_observed() as f64 / 2.0 < 1.0 {
        return Err(invalid(
            "alpha_tau",
            "posterior shape of tau falls below 1; its mode is undefined",
        ));
    }
    if hyper.ard && hyper.alpha0 + (data.nrows().min(data.ncols()) as f64) < 1.0 {
        return Err(invalid(
            "alpha0",
            "posterior shape of the ARD rates falls below 1",
        ));
    }
    Ok(())
}

/// One ICM iteration. Zeros in each factor matrix are reset as soon as that
/// matrix has been updated, so the following updates see the reset values.
pub fn sweep_nmf(state: &mut NmfState, data: &MaskedMatrix, hyper: &HyperParams, clamp: Clamp) {
    let fixed = Clamp::all();
    if !clamp.rows {
        point_sweep_nmf(
            state,
            data,
            hyper,
            Rule::Mode,
            Clamp {
                rows: false,
                ..fixed
            },
        );
        reset_zeros(&mut state.u);
    }
    if !clamp.cols {
        point_sweep_nmf(
            state,
            data,
            hyper,
            Rule::Mode,
            Clamp {
                cols: false,
                ..fixed
            },
        );
        reset_zeros(&mut state.v);
    }
    let rest = Clamp {
        tau: clamp.tau,
        ard: clamp.ard,
        ..fixed
    };
    point_sweep_nmf(state, data, hyper, Rule::Mode, rest);
}

pub fn sweep_nmtf(state: &mut NmtfState, data: &MaskedMatrix, hyper: &HyperParams, clamp: Clamp) {
    let fixed = Clamp::all();
    if !clamp.rows {
        point_sweep_nmtf(
            state,
            data,
            hyper,
            Rule::Mode,
            Clamp {
                rows: false,
                ..fixed
            },
        );
        reset_zeros(&mut state.f);
    }
    if !clamp.middle {
        point_sweep_nmtf(
            state,
            data,
            hyper,
            Rule::Mode,
            Clamp {
                middle: false,
                ..fixed
            },
        );
        reset_zeros(&mut state.s);
    }
    if !clamp.cols {
        point_sweep_nmtf(
            state,
            data,
            hyper,
            Rule::Mode,
            Clamp {
                cols: false,
                ..fixed
            },
        );
        reset_zeros(&mut state.g);
    }
    let rest = Clamp {
        tau: clamp.tau,
        ard: clamp.ard,
        ..fixed
    };
    point_sweep_nmtf(state, data, hyper, Rule::Mode, rest);
}

/// Runs ICM; the returned estimate's mean averages the retained states.
pub fn run_nmf(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmfState>, Trace)> {
    let state = init_nmf(data, hyper, opts.init, &mut init_rng(opts.seed))?;
    run_nmf_from(state, data, hyper, opts)
}

pub fn run_nmf_from(
    state: NmfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmfState>, Trace)> {
    hyper.validate()?;
    check_shapes(data, hyper)?;
    let clamp = opts.clamp;
    run_chain(state, data, opts.schedule, |s, _| {
        sweep_nmf(s, data, hyper, clamp)
    })
}

pub fn run_nmtf(
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmtfState>, Trace)> {
    let state = init_nmtf(
        data,
        hyper,
        opts.init,
        KMEANS_SMOOTHING,
        &mut init_rng(opts.seed),
    )?;
    run_nmtf_from(state, data, hyper, opts)
}

pub fn run_nmtf_from(
    state: NmtfState,
    data: &MaskedMatrix,
    hyper: &HyperParams,
    opts: &ChainOptions,
) -> Result<(PosteriorEstimate<NmtfState>, Trace)> {
    hyper.validate()?;
    check_shapes(data, hyper)?;
    let clamp = opts.clamp;
    run_chain(state, data, opts.schedule, |s, _| {
        sweep_nmtf(s, data, hyper, clamp)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Predict;
    use ndarray::array;

    #[test]
    fn negative_conditional_mean_resets_to_point_one() {
        // A single observed zero pulls U towards a negative mean.
        let data = MaskedMatrix::fully_observed(array![[0.0]]).unwrap();
        let mut s = NmfState {
            u: array![[1.0]],
            v: array![[1.0]],
            tau: 1.0,
            ard: None,
        };
        sweep_nmf(
            &mut s,
            &data,
            &HyperParams::with_rank(1, 1),
            Clamp {
                cols: true,
                ..Clamp::default()
            },
        );
        assert_eq!(s.u[[0, 0]], ZERO_RESET);
    }

    #[test]
    fn noise_free_rank_one_fit() {
        let u = array![[1.0], [2.0], [0.5], [3.0]];
        let v = array![[2.0], [1.0], [4.0]];
        let data = MaskedMatrix::fully_observed(u.dot(&v.t())).unwrap();
        let hyper = HyperParams::with_rank(1, 1);
        let opts = ChainOptions::new(200, 1);
        let (est, trace) = run_nmf(&data, &hyper, &opts).unwrap();
        let mse = data.mse(est.predict().view()).unwrap();
        assert!(mse < 1e-4, "{mse}");
        assert_eq!(trace.points.len(), 201);
        let last = est.draws.last().unwrap();
        assert!(data.mse(last.predict().view()).unwrap() < 1e-4);
    }
}
