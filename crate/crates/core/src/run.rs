//! Iteration control and per-iteration traces shared by all engines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// When an iterative engine stops.
///
/// The relative-change rule compares the training MSE now with its value
/// `window` iterations earlier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub max_iterations: usize,
    pub tolerance: Option<f64>,
    pub window: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: Some(1e-8),
            window: 10,
        }
    }
}

impl StopRule {
    /// Exactly `n` iterations.
    pub fn fixed(n: usize) -> Self {
        Self {
            max_iterations: n,
            tolerance: None,
            window: 1,
        }
    }

    pub fn with_tolerance(max_iterations: usize, tolerance: f64, window: usize) -> Self {
        Self {
            max_iterations,
            tolerance: Some(tolerance),
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid("window", "must be at least 1"));
        }
        if let Some(t) = self.tolerance {
            if !(t >= 0.0) {
                return Err(invalid(
                    "tolerance",
                    format!("must be nonnegative, got {t}"),
                ));
            }
        }
        Ok(())
    }

    /// Whether to stop after the latest entry of `trace`.
    pub fn should_stop(&self, trace: &Trace) -> bool {
        let done = trace.iterations();
        if done >= self.max_iterations {
            return true;
        }
        let Some(tol) = self.tolerance else {
            return false;
        };
        let points = &trace.points;
        if points.len() <= self.window {
            return false;
        }
        let now = points[points.len() - 1].train_mse;
        let before = points[points.len() - 1 - self.window].train_mse;
        let scale = before.abs().max(f64::MIN_POSITIVE);
        ((now - before) / scale).abs() < tol
    }
}

/// One row of a trace; iteration 0 is the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Wall-clock seconds since the run started.
    pub seconds: f64,
    pub train_mse: f64,
    pub elbo: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub points: Vec<TraceRecord>,
}

impl Trace {
    /// Number of completed iterations (excluding the initial point).
    pub fn iterations(&self) -> usize {
        self.points.len().saturating_sub(1)
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.points.last()
    }

    pub fn train_mse(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.train_mse).collect()
    }

    pub fn elbo(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.elbo).collect()
    }

    /// Mean wall-clock seconds per iteration.
    pub fn seconds_per_iteration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) if self.iterations() > 0 => {
                (b.seconds - a.seconds) / self.iterations() as f64
            }
            _ => 0.0,
        }
    }
}

pub(crate) struct Recorder {
    start: Instant,
    pub trace: Trace,
}

impl Recorder {
    pub fn start() -> Self {
        Self {
            start: Instant::now(),
            trace: Trace::default(),
        }
    }

    pub fn record(&mut self, train_mse: f64, elbo: Option<f64>) {
        let iteration = self.trace.points.len();
        self.trace.points.push(TraceRecord {
            iteration,
            seconds: self.start.elapsed().as_secs_f64(),
            train_mse,
            elbo,
        });
    }
}

/// Factor matrices held at their current values instead of being updated.
///
/// For two-factor models `rows` is U and `cols` is V; for tri-factorisation
/// `rows` is F, `middle` is S and `cols` is G.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clamp {
    pub rows: bool,
    pub middle: bool,
    pub cols: bool,
    pub tau: bool,
    /// ARD rates, when the model has them.
    pub ard: bool,
}

impl Clamp {
    /// Everything held fixed.
    pub fn all() -> Self {
        Self {
            rows: true,
            middle: true,
            cols: true,
            tau: true,
            ard: true,
        }
    }
}

/// Burn-in and thinning for the sampling-style engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Schedule {
    /// Half the iterations as burn-in and a thinning of 2.
    pub fn with_defaults(iterations: usize) -> Self {
        Self {
            iterations,
            burn_in: iterations / 2,
            thin: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(invalid("thin", "must be at least 1"));
        }
        if self.burn_in >= self.iterations {
            return Err(invalid(
                "burn_in",
                format!(
                    "must be below the iteration count ({} >= {})",
                    self.burn_in, self.iterations
                ),
            ));
        }
        Ok(())
    }

    /// Whether the state after iteration `t` (1-based) is kept.
    pub fn retains(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(mse: &[f64]) -> Trace {
        Trace {
            points: mse
                .iter()
                .enumerate()
                .map(|(i, &m)| TraceRecord {
                    iteration: i,
                    seconds: i as f64,
                    train_mse: m,
                    elbo: None,
                })
                .collect(),
        }
    }

    #[test]
    fn schedule_counts() {
        let s = Schedule {
            iterations: 1000,
            burn_in: 500,
            thin: 5,
        };
        assert_eq!(s.retained(), 100);
        assert_eq!((1..=1000).filter(|&t| s.retains(t)).count(), 100);
        assert!(!s.retains(500));
        assert!(s.retains(505));
        let d = Schedule::with_defaults(11);
        assert_eq!((d.burn_in, d.thin), (5, 2));
        assert_eq!((1..=11).filter(|&t| d.retains(t)).count(), d.retained());
        assert!(Schedule {
            iterations: 10,
            burn_in: 10,
            thin: 1
        }
        .validate()
        .is_err());
        assert!(Schedule {
            iterations: 10,
            burn_in: 0,
            thin: 0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn stop_rules() {
        assert!(StopRule::fixed(0).should_stop(&trace(&[1.0])));
        assert!(!StopRule::fixed(3).should_stop(&trace(&[4.0, 3.0, 2.0])));
        assert!(StopRule::fixed(3).should_stop(&trace(&[4.0, 3.0, 2.0, 1.0])));
        let r = StopRule::with_tolerance(100, 1e-3, 2);
        assert!(!r.should_stop(&trace(&[4.0, 3.0])));
        assert!(!r.should_stop(&trace(&[4.0, 3.0, 2.0])));
        assert!(r.should_stop(&trace(&[4.0, 1.0, 1.0, 1.0])));
    }

    #[test]
    fn per_iteration_seconds() {
        assert_eq!(trace(&[1.0, 1.0, 1.0]).seconds_per_iteration(), 1.0);
        assert_eq!(trace(&[1.0]).seconds_per_iteration(), 0.0);
    }
}
