//! Deterministic mini-batch SGD with trajectory logging, counterfactual
//! replay that skips one sample, and checkpoint-based logging and replay.
//!
//! Update rule for every step `t`:
//! `theta[t+1] = theta[t] - (lr_t / |S_t|) * sum_{i in S_t} grad(z_i; theta[t])`.
//! Gradients are summed in batch order and the scaled sum is subtracted
//! once, so the normal, counterfactual and replayed runs perform identical
//! floating-point operations wherever their inputs agree.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::numkit::{self, Batch, ModelSpec, ParamVector};
use crate::{Error, Result};

const BATCH_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// `(first_step, lr)` pairs sorted by step; the first must start at 0.
    StepDecay(Vec<(usize, f64)>),
}

impl LrSchedule {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            LrSchedule::Constant(lr) => *lr,
            LrSchedule::StepDecay(steps) => steps
                .iter()
                .take_while(|(s, _)| *s <= t)
                .last()
                .map_or(f64::NAN, |(_, lr)| *lr),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            LrSchedule::Constant(lr) => *lr,
            LrSchedule::StepDecay(steps) => steps.iter().map(|(_, lr)| *lr).fold(0.0, f64::max),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            LrSchedule::Constant(lr) => *lr > 0.0 && lr.is_finite(),
            LrSchedule::StepDecay(steps) => {
                !steps.is_empty()
                    && steps[0].0 == 0
                    && steps.windows(2).all(|w| w[0].0 < w[1].0)
                    && steps.iter().all(|(_, lr)| *lr > 0.0 && lr.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "learning rates must be positive and finite; step-decay must start at step 0 and increase"
                    .into(),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub seed: u64,
    /// Steps whose records are kept. `None` keeps all of `[0, steps)`.
    pub window: Option<Range<usize>>,
    pub checkpoint_interval: Option<usize>,
}

impl TrainConfig {
    pub fn new(steps: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        Self {
            steps,
            batch_size,
            lr: LrSchedule::Constant(lr),
            seed,
            window: None,
            checkpoint_interval: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        self.lr.validate()?;
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidConfig(alloc::format!(
                "batch size {} must lie in [1, {n}]",
                self.batch_size
            )));
        }
        if let Some(w) = &self.window {
            if w.start > w.end || w.end > self.steps {
                return Err(Error::InvalidConfig(alloc::format!(
                    "storage window {}..{} outside [0, {})",
                    w.start,
                    w.end,
                    self.steps
                )));
            }
        }
        if self.checkpoint_interval == Some(0) {
            return Err(Error::InvalidConfig(
                "checkpoint interval must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn storage_window(&self) -> Range<usize> {
        self.window.clone().unwrap_or(0..self.steps)
    }

    /// `ceil(N / batch_size)`.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }
}

/// The per-epoch permutation of `[0, n)` used by [`sample_batches`].
fn next_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let r = rng.random_range(0..=i);
        perm.swap(i, r);
    }
    perm
}

/// Pre-generates the batch sequence for a run.
///
/// Indices are consumed from a queue filled with one seeded permutation of
/// `[0, N)` per epoch; each batch takes the first `batch_size` queued
/// indices. When an epoch's leftovers do not fill a batch, the batch is
/// completed from the next epoch's permutation. An index that is already
/// in the batch being built is skipped over and stays at the front of the
/// queue for the following batch, so batches never contain duplicates.
pub fn sample_batches(n: usize, steps: usize, batch_size: usize, seed: u64) -> Result<Vec<Batch>> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::InvalidConfig(alloc::format!(
            "batch size {batch_size} must lie in [1, {n}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM);
    let mut queue: alloc::collections::VecDeque<usize> = alloc::collections::VecDeque::new();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut batch = Vec::with_capacity(batch_size);
        while batch.len() < batch_size {
            if queue.is_empty() {
                queue.extend(next_permutation(&mut rng, n));
            }
            match queue.iter().position(|i| !batch.contains(i)) {
                Some(pos) => batch.push(queue.remove(pos).expect("position in range")),
                None => queue.extend(next_permutation(&mut rng, n)),
            }
        }
        out.push(Batch::from_unchecked(batch));
    }
    Ok(out)
}

/// One logged SGD step: `S_t`, `lr_t` and `theta[t+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub batch: Batch,
    pub lr: f64,
    pub params_after: ParamVector,
}

/// Everything the influence sweep needs from a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStore {
    pub model: ModelSpec,
    pub n: usize,
    pub steps: usize,
    pub seed: u64,
    pub initial: ParamVector,
    pub window: Range<usize>,
    pub records: Vec<StepRecord>,
}

impl TrajectoryStore {
    pub fn num_params(&self) -> usize {
        self.initial.len()
    }

    pub fn record(&self, t: usize) -> Option<&StepRecord> {
        if !self.window.contains(&t) {
            return None;
        }
        self.records.get(t - self.window.start)
    }

    /// `theta[t]`, available for `t = 0` and for every `t` whose
    /// predecessor step is logged.
    pub fn params_at(&self, t: usize) -> Result<&ParamVector> {
        if t == 0 {
            return Ok(&self.initial);
        }
        self.record(t - 1)
            .map(|r| &r.params_after)
            .ok_or(Error::NotStored { step: t })
    }

    pub fn final_params(&self) -> Result<&ParamVector> {
        self.params_at(self.steps)
    }

    /// True when `theta[t]`, `S_t` and `lr_t` are available for all `t < end`.
    pub fn covers_prefix(&self, end: usize) -> bool {
        end == 0 || (self.window.start == 0 && self.window.end >= end)
    }
}

/// Runs SGD over the given batches, optionally skipping sample `exclude`,
/// calling `visit(t, theta[t])` for `t = 0..=T`. The scale stays
/// `lr_t / |S_t|` even when the excluded sample is dropped from `S_t`.
pub(crate) fn run_sgd<F>(
    dataset: &Dataset,
    model: &ModelSpec,
    initial: &[f64],
    batches: &[Batch],
    lrs: impl Fn(usize) -> f64,
    exclude: Option<usize>,
    mut visit: F,
) -> Result<ParamVector>
where
    F: FnMut(usize, &Batch, f64, &[f64]) -> Result<()>,
{
    let mut theta = initial.to_vec();
    let mut g = vec![0.0; theta.len()];
    for (t, batch) in batches.iter().enumerate() {
        let lr = lrs(t);
        visit(t, batch, lr, &theta)?;
        sgd_step(dataset, model, &mut theta, &mut g, batch, lr, exclude, t)?;
    }
    visit(batches.len(), &Batch::default(), f64::NAN, &theta)?;
    Ok(ParamVector::from(theta))
}

#[allow(clippy::too_many_arguments)]
fn sgd_step(
    dataset: &Dataset,
    model: &ModelSpec,
    theta: &mut [f64],
    g: &mut [f64],
    batch: &Batch,
    lr: f64,
    exclude: Option<usize>,
    t: usize,
) -> Result<()> {
    g.iter_mut().for_each(|v| *v = 0.0);
    for &i in batch.indices() {
        if Some(i) == exclude {
            continue;
        }
        numkit::grad_accumulate(model, theta, dataset.get(i)?, 1.0, g)?;
    }
    let scale = lr / batch.len() as f64;
    for (th, gi) in theta.iter_mut().zip(g.iter()) {
        *th -= scale * gi;
    }
    if !crate::linalg::all_finite(theta) {
        return Err(Error::Diverged { step: t });
    }
    Ok(())
}

fn check_batches(batches: &[Batch], steps: usize, n: usize) -> Result<()> {
    if batches.len() != steps {
        return Err(Error::InvalidConfig(alloc::format!(
            "batch sequence has {} entries for {steps} steps",
            batches.len()
        )));
    }
    for b in batches {
        if b.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(&i) = b.indices().iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange {
                what: "batch",
                index: i,
                len: n,
            });
        }
    }
    Ok(())
}

/// Trains with a freshly sampled batch sequence.
pub fn train(dataset: &Dataset, model: &ModelSpec, config: &TrainConfig) -> Result<TrajectoryStore> {
    config.validate(dataset.len())?;
    let batches = sample_batches(dataset.len(), config.steps, config.batch_size, config.seed)?;
    train_with_batches(dataset, model, config, &batches)
}

/// Trains over a caller-owned batch sequence and logs steps in the
/// configured storage window.
pub fn train_with_batches(
    dataset: &Dataset,
    model: &ModelSpec,
    config: &TrainConfig,
    batches: &[Batch],
) -> Result<TrajectoryStore> {
    config.validate(dataset.len())?;
    check_batches(batches, config.steps, dataset.len())?;
    let window = config.storage_window();
    let initial = model.init_params(config.seed);
    let mut records = Vec::with_capacity(window.len());
    let mut pending: Option<(usize, f64)> = None;
    run_sgd(
        dataset,
        model,
        &initial,
        batches,
        |t| config.lr.at(t),
        None,
        |t, _, lr, theta| {
            if let Some((prev, prev_lr)) = pending.take() {
                records.push(StepRecord {
                    t: prev,
                    batch: batches[prev].clone(),
                    lr: prev_lr,
                    params_after: ParamVector::from(theta.to_vec()),
                });
            }
            if window.contains(&t) {
                pending = Some((t, lr));
            }
            Ok(())
        },
    )?;
    Ok(TrajectoryStore {
        model: model.clone(),
        n: dataset.len(),
        steps: config.steps,
        seed: config.seed,
        initial,
        window,
        records,
    })
}

/// Replays the paired run without sample `j`: the same batches, the same
/// `theta[0]`, and the unchanged divisor `|S_t|`. Returns `theta_{-j}[t]`
/// for every `t` in `0..=T`.
pub fn counterfactual_train(
    dataset: &Dataset,
    model: &ModelSpec,
    config: &TrainConfig,
    j: usize,
    batches: &[Batch],
) -> Result<Vec<ParamVector>> {
    let mut out = Vec::with_capacity(batches.len() + 1);
    counterfactual_visit(dataset, model, config, j, batches, |_, theta| {
        out.push(ParamVector::from(theta.to_vec()));
        Ok(())
    })?;
    Ok(out)
}

/// Streaming form of [`counterfactual_train`]: `visit(t, theta_{-j}[t])`.
pub fn counterfactual_visit<F>(
    dataset: &Dataset,
    model: &ModelSpec,
    config: &TrainConfig,
    j: usize,
    batches: &[Batch],
    mut visit: F,
) -> Result<ParamVector>
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    config.validate(dataset.len())?;
    check_batches(batches, config.steps, dataset.len())?;
    dataset.get(j)?;
    let initial = model.init_params(config.seed);
    run_sgd(
        dataset,
        model,
        &initial,
        batches,
        |t| config.lr.at(t),
        Some(j),
        |t, _, _, theta| visit(t, theta),
    )
}

/// Counterfactual run driven by the batches and rates logged in a trajectory
/// that covers every step. Calls `visit(t, theta_{-j}[t])` for `t = 0..=T`.
pub fn counterfactual_from_trajectory<F>(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    j: usize,
    visit: F,
) -> Result<ParamVector>
where
    F: FnMut(usize, &[f64]) -> Result<()>,
{
    let (batches, lrs) = logged_schedule(trajectory)?;
    check_batches(&batches, trajectory.steps, dataset.len())?;
    dataset.get(j)?;
    let mut visit = visit;
    run_sgd(
        dataset,
        &trajectory.model,
        &trajectory.initial,
        &batches,
        |t| lrs[t],
        Some(j),
        |t, _, _, theta| visit(t, theta),
    )
}

/// Batches and learning rates of a fully logged trajectory.
pub fn logged_schedule(trajectory: &TrajectoryStore) -> Result<(Vec<Batch>, Vec<f64>)> {
    if !trajectory.covers_prefix(trajectory.steps) {
        let step = if trajectory.window.start > 0 {
            0
        } else {
            trajectory.window.end
        };
        return Err(Error::NotStored { step });
    }
    let records = &trajectory.records[..trajectory.steps];
    Ok((
        records.iter().map(|r| r.batch.clone()).collect(),
        records.iter().map(|r| r.lr).collect(),
    ))
}

/// Metadata and sparse parameter snapshots for checkpoint-based influence.
///
/// `checkpoints` maps a step `t` to `theta[t]`; snapshots are taken at
/// `t = 0, C, 2C, ..` and at the final step `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStore {
    pub model: ModelSpec,
    pub n: usize,
    pub steps: usize,
    pub seed: u64,
    pub interval: usize,
    pub batches: Vec<Batch>,
    pub lrs: Vec<f64>,
    pub checkpoints: BTreeMap<usize, ParamVector>,
}

impl CheckpointStore {
    /// Latest checkpoint step `<= t`.
    pub fn checkpoint_at_or_before(&self, t: usize) -> Option<usize> {
        self.checkpoints.range(..=t).next_back().map(|(k, _)| *k)
    }
}

pub fn train_with_checkpoints(
    dataset: &Dataset,
    model: &ModelSpec,
    config: &TrainConfig,
    batches: &[Batch],
) -> Result<CheckpointStore> {
    config.validate(dataset.len())?;
    check_batches(batches, config.steps, dataset.len())?;
    let interval = config
        .checkpoint_interval
        .ok_or_else(|| Error::InvalidConfig("checkpoint interval not set".into()))?;
    let initial = model.init_params(config.seed);
    let steps = config.steps;
    let mut checkpoints = BTreeMap::new();
    let lrs: Vec<f64> = (0..steps).map(|t| config.lr.at(t)).collect();
    run_sgd(
        dataset,
        model,
        &initial,
        batches,
        |t| lrs[t],
        None,
        |t, _, _, theta| {
            if t % interval == 0 || t == steps {
                checkpoints.insert(t, ParamVector::from(theta.to_vec()));
            }
            Ok(())
        },
    )?;
    Ok(CheckpointStore {
        model: model.clone(),
        n: dataset.len(),
        steps,
        seed: config.seed,
        interval,
        batches: batches.to_vec(),
        lrs,
        checkpoints,
    })
}

/// Reconstructs `theta[t]` for `from_step..=to_step` starting at the nearest
/// checkpoint at or before `from_step`. Stored checkpoints met on the way are
/// adopted as-is.
pub fn replay_segment(
    store: &CheckpointStore,
    dataset: &Dataset,
    from_step: usize,
    to_step: usize,
) -> Result<BTreeMap<usize, ParamVector>> {
    if from_step > to_step || to_step > store.steps {
        return Err(Error::InvalidWindow {
            t1: from_step,
            t2: to_step,
            steps: store.steps,
        });
    }
    if dataset.len() != store.n {
        return Err(Error::DimensionMismatch {
            what: "dataset size",
            expected: store.n,
            got: dataset.len(),
        });
    }
    let start = store
        .checkpoint_at_or_before(from_step)
        .ok_or(Error::MissingCheckpoint { step: from_step })?;
    let mut theta = store.checkpoints[&start].to_vec();
    let mut g = vec![0.0; theta.len()];
    let mut out = BTreeMap::new();
    for t in start..=to_step {
        if let Some(cp) = store.checkpoints.get(&t) {
            theta.copy_from_slice(cp);
        }
        if t >= from_step {
            out.insert(t, ParamVector::from(theta.clone()));
        }
        if t < to_step {
            sgd_step(
                dataset,
                &store.model,
                &mut theta,
                &mut g,
                &store.batches[t],
                store.lrs[t],
                None,
                t,
            )?;
        }
    }
    Ok(out)
}

/// Mean training loss at the end of each epoch, `theta[min((e+1) E, T)]`.
pub fn epoch_loss_curve(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    steps_per_epoch: usize,
) -> Result<Vec<f64>> {
    let epochs = trajectory.steps.div_ceil(steps_per_epoch.max(1));
    (0..epochs)
        .map(|e| {
            let t = ((e + 1) * steps_per_epoch).min(trajectory.steps);
            numkit::mean_loss(&trajectory.model, trajectory.params_at(t)?, dataset.samples())
        })
        .collect()
}
