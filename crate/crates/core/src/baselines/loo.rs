use alloc::vec::Vec;

use crate::analytics::InfluenceSeries;
use crate::data::Dataset;
use crate::dit::TimeWindow;
use crate::numkit::{self, Batch, ModelSpec, Sample};
use crate::trainer::{counterfactual_visit, run_sgd, sample_batches, TrainConfig};
use crate::{Error, Result};

/// How the run without sample `j` picks its batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LooMode {
    /// Same batch sequence as the normal run with `j` skipped and the divisor
    /// kept at `|S_t|`. This is the quantity the influence estimators
    /// linearise.
    #[default]
    Replay,
    /// Fresh batches drawn from the other `N - 1` samples with the same seed.
    Resample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooResult {
    pub j: usize,
    pub window: TimeWindow,
    /// `[L(theta_{-j}[t2]) - L(theta_{-j}[t1])] - [L(theta[t2]) - L(theta[t1])]`
    /// with `L` the mean test loss.
    pub delta_test_loss: f64,
}

/// Normal-run test losses computed once and shared by every retraining.
pub struct LooHarness<'a> {
    dataset: &'a Dataset,
    model: &'a ModelSpec,
    config: &'a TrainConfig,
    batches: &'a [Batch],
    test_set: &'a [Sample],
    mode: LooMode,
    base: Vec<f64>,
}

impl<'a> LooHarness<'a> {
    pub fn new(
        dataset: &'a Dataset,
        model: &'a ModelSpec,
        config: &'a TrainConfig,
        batches: &'a [Batch],
        test_set: &'a [Sample],
        mode: LooMode,
    ) -> Result<Self> {
        config.validate(dataset.len())?;
        if test_set.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if batches.len() != config.steps {
            return Err(Error::InvalidConfig(alloc::format!(
                "batch sequence has {} entries for {} steps",
                batches.len(),
                config.steps
            )));
        }
        let initial = model.init_params(config.seed);
        let mut base = Vec::with_capacity(config.steps + 1);
        run_sgd(
            dataset,
            model,
            &initial,
            batches,
            |t| config.lr.at(t),
            None,
            |_, _, _, theta| {
                base.push(numkit::mean_loss(model, theta, test_set)?);
                Ok(())
            },
        )?;
        Ok(Self {
            dataset,
            model,
            config,
            batches,
            test_set,
            mode,
            base,
        })
    }

    /// Mean test loss of the normal run at `theta[t]`.
    pub fn base_loss(&self, t: usize) -> Option<f64> {
        self.base.get(t).copied()
    }

    pub fn mode(&self) -> LooMode {
        self.mode
    }

    /// Test loss of the run without `j` at each requested step.
    fn counterfactual_losses(&self, j: usize, at: &[usize]) -> Result<Vec<f64>> {
        self.dataset.get(j)?;
        if let Some(&t) = at.iter().find(|&&t| t > self.config.steps) {
            return Err(Error::InvalidWindow {
                t1: 0,
                t2: t,
                steps: self.config.steps,
            });
        }
        let mut out = alloc::vec![f64::NAN; at.len()];
        let mut visit = |t: usize, theta: &[f64]| -> Result<()> {
            let mut loss = None;
            for (slot, &s) in at.iter().enumerate() {
                if s == t {
                    let l = match loss {
                        Some(l) => l,
                        None => *loss.insert(numkit::mean_loss(self.model, theta, self.test_set)?),
                    };
                    out[slot] = l;
                }
            }
            Ok(())
        };
        match self.mode {
            LooMode::Replay => {
                counterfactual_visit(self.dataset, self.model, self.config, j, self.batches, visit)?;
            }
            LooMode::Resample => {
                let n = self.dataset.len();
                if n < 2 || self.config.batch_size > n - 1 {
                    return Err(Error::InvalidConfig(
                        "resampled LOO needs batch_size <= N - 1".into(),
                    ));
                }
                let shifted: Vec<Batch> =
                    sample_batches(n - 1, self.config.steps, self.config.batch_size, self.config.seed)?
                        .into_iter()
                        .map(|b| {
                            let idx = b
                                .indices()
                                .iter()
                                .map(|&k| if k < j { k } else { k + 1 })
                                .collect();
                            Batch::new(idx, n)
                        })
                        .collect::<Result<_>>()?;
                let initial = self.model.init_params(self.config.seed);
                run_sgd(
                    self.dataset,
                    self.model,
                    &initial,
                    &shifted,
                    |t| self.config.lr.at(t),
                    None,
                    |t, _, _, theta| visit(t, theta),
                )?;
            }
        }
        Ok(out)
    }

    /// Windowed deltas for several windows from a single retraining.
    pub fn deltas(&self, j: usize, windows: &[TimeWindow]) -> Result<Vec<f64>> {
        let mut at = Vec::with_capacity(2 * windows.len());
        for w in windows {
            TimeWindow::new(w.t1, w.t2, self.config.steps)?;
            at.push(w.t1);
            at.push(w.t2);
        }
        let cf = self.counterfactual_losses(j, &at)?;
        let out: Vec<f64> = windows
            .iter()
            .enumerate()
            .map(|(k, w)| (cf[2 * k + 1] - cf[2 * k]) - (self.base[w.t2] - self.base[w.t1]))
            .collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: self.config.steps,
            });
        }
        Ok(out)
    }

    pub fn influence(&self, j: usize, window: TimeWindow) -> Result<LooResult> {
        let delta_test_loss = self.deltas(j, &[window])?[0];
        Ok(LooResult {
            j,
            window,
            delta_test_loss,
        })
    }

    /// Per-epoch windows `[e E, (e+1) E]` for `e < epochs`, where `E` is the
    /// number of steps per epoch.
    pub fn epoch_windows(&self, epochs: usize) -> Result<Vec<TimeWindow>> {
        let spe = self.config.steps_per_epoch(self.dataset.len());
        (0..epochs)
            .map(|e| TimeWindow::epoch(e, spe, self.config.steps))
            .collect()
    }

    pub fn epoch_row(&self, j: usize, epochs: usize) -> Result<Vec<f64>> {
        self.deltas(j, &self.epoch_windows(epochs)?)
    }
}

/// Windowed leave-one-out test-loss change; `[0, T]` gives the
/// full-process value.
#[allow(clippy::too_many_arguments)]
pub fn loo_influence(
    dataset: &Dataset,
    model: &ModelSpec,
    config: &TrainConfig,
    batches: &[Batch],
    j: usize,
    test_set: &[Sample],
    window: TimeWindow,
) -> Result<LooResult> {
    LooHarness::new(dataset, model, config, batches, test_set, LooMode::Replay)?.influence(j, window)
}

/// Samples x epochs matrix of per-epoch windowed leave-one-out deltas.
pub fn loo_epoch_series(
    dataset: &Dataset,
    model: &ModelSpec,
    config: &TrainConfig,
    batches: &[Batch],
    subset: &[usize],
    epochs: usize,
    test_set: &[Sample],
) -> Result<InfluenceSeries> {
    let h = LooHarness::new(dataset, model, config, batches, test_set, LooMode::Replay)?;
    let rows = subset
        .iter()
        .map(|&j| h.epoch_row(j, epochs))
        .collect::<Result<Vec<_>>>()?;
    InfluenceSeries::new(subset.to_vec(), rows)
}
