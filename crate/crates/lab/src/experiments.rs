//! Experiment pipelines behind the CLI subcommands.
//!
//! Every seed is an independent unit of work: it regenerates (or re-splits)
//! its data, its batch sequence and its training run, so seeds and
//! leave-one-out samples run in parallel and results are merged in input
//! order. A pool of one thread is the reproducibility reference; more
//! threads give the same bytes.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use dit_core::analytics::{
    classify_patterns, detection_count, jaccard_top, kendall_tau, pearson, segment_stages, spearman,
    stage_correlation_table, InfluenceSeries, PatternConfig, PatternLabel, TopOrder,
};
use dit_core::baselines::{IfEstimator, LooHarness, LooMode};
use dit_core::data::{
    flip_labels, make_synthetic_split, sample_subset, train_test_split, Dataset, FlipRecord,
};
use dit_core::dit::{compute_influence_all, compute_influence_ckpt_all, QuerySpec, TimeWindow};
use dit_core::numkit::{self, Batch, ModelSpec};
use dit_core::trainer::{
    epoch_loss_curve, replay_segment, sample_batches, train_with_batches, train_with_checkpoints,
    CheckpointStore, TrainConfig, TrajectoryStore,
};

use crate::codec::{self, Artifact};
use crate::config::{ExperimentConfig, LooModeConfig, QueryConfig, SourceConfig, TrainSection, WindowConfig};
use crate::io::{load_csv, load_idx};
use crate::manifest::{sha256_hex, write_atomic};
use crate::{LabError, Result};

/// Everything one seed needs: data, model, schedule and batches.
pub struct SeedRun {
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub flips: Option<FlipRecord>,
    pub model: ModelSpec,
    /// As configured, including storage window and checkpoint interval.
    pub train_config: TrainConfig,
    pub batches: Vec<Batch>,
}

impl SeedRun {
    pub fn steps(&self) -> usize {
        self.train_config.steps
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train_config.steps_per_epoch(self.train.len())
    }

    pub fn epochs(&self) -> usize {
        self.steps().div_ceil(self.steps_per_epoch())
    }

    /// Same run with every step logged and no checkpoints.
    pub fn full_config(&self) -> TrainConfig {
        TrainConfig {
            window: None,
            checkpoint_interval: None,
            ..self.train_config.clone()
        }
    }

    pub fn test_set_loss(&self) -> QuerySpec {
        QuerySpec::TestSetLoss(self.test.samples().to_vec())
    }

    pub fn query(&self, q: &QueryConfig) -> Result<QuerySpec> {
        let test = |i: usize| {
            self.test
                .get(i)
                .cloned()
                .map_err(|_| LabError::Config(format!("test index {i} out of range")))
        };
        Ok(match q {
            QueryConfig::TestSetLoss => self.test_set_loss(),
            QueryConfig::TestLoss { index } => QuerySpec::TestLoss(test(*index)?),
            QueryConfig::Prediction { index } => QuerySpec::Prediction(test(*index)?.x),
            QueryConfig::ParamBasis { index } => QuerySpec::ParamBasis(*index),
            QueryConfig::FeatureImportance { index, feature } => QuerySpec::FeatureImportance {
                sample: test(*index)?,
                feature: *feature,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceRow {
    pub seed: u64,
    pub sample: usize,
    pub t1: usize,
    pub t2: usize,
    pub query: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub pearson: f64,
    pub spearman: f64,
    pub kendall: f64,
    pub jaccard: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["pearson", "spearman", "kendall", "jaccard"];

    pub fn values(&self) -> [f64; 4] {
        [self.pearson, self.spearman, self.kendall, self.jaccard]
    }
}

/// The four agreement metrics of an estimate against a reference.
pub fn comparison_metrics(estimate: &[f64], reference: &[f64], jaccard_fraction: f64) -> Result<Metrics> {
    Ok(Metrics {
        pearson: pearson(estimate, reference)?,
        spearman: spearman(estimate, reference)?,
        kendall: kendall_tau(estimate, reference)?,
        jaccard: jaccard_top(estimate, reference, jaccard_fraction, TopOrder::Descending)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSeed {
    pub seed: u64,
    pub dit: Metrics,
    pub influence_function: Option<Metrics>,
    pub dit_values: Vec<f64>,
    pub if_values: Option<Vec<f64>>,
    pub loo_values: Vec<f64>,
}

pub const DETECT_METHODS: [&str; 6] = [
    "dit_full",
    "dit_first_epoch",
    "dit_mid_epoch",
    "dit_last_epoch",
    "influence_function",
    "loo",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectSeed {
    pub seed: u64,
    pub flipped: usize,
    /// Correctly identified flipped samples, in [`DETECT_METHODS`] order.
    pub counts: [usize; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternSummary {
    pub tracked: Vec<usize>,
    pub labels: Vec<&'static str>,
    /// Percentages in [`PatternLabel::ALL`] order.
    pub distribution: [f64; 4],
    pub plurality: &'static str,
    pub centroids: Vec<Option<Vec<f64>>>,
    pub degenerate_epochs: Vec<usize>,
}

/// Labels the rows of an influence series.
pub fn summarize_patterns(series: &InfluenceSeries, config: PatternConfig) -> Result<PatternSummary> {
    let report = classify_patterns(series, config)?;
    Ok(PatternSummary {
        tracked: series.sample_ids().to_vec(),
        labels: report.labels.iter().map(|(_, l)| l.name()).collect(),
        distribution: report.distribution(),
        plurality: report.plurality().name(),
        centroids: report.centroids().into_iter().collect(),
        degenerate_epochs: report.degenerate_epochs.clone(),
    })
}

pub const STAGE_PAIRS: [&str; 6] = [
    "early-middle",
    "early-late",
    "middle-late",
    "early-full",
    "middle-full",
    "late-full",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub loss_curve: Vec<f64>,
    pub boundary_epochs: (usize, usize),
    pub boundary_steps: (usize, usize),
    pub fallback: bool,
    /// Kendall's tau in [`STAGE_PAIRS`] order.
    pub taus: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsSeed {
    pub seed: u64,
    pub patterns: PatternSummary,
    pub stages: StageSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySeed {
    pub seed: u64,
    pub interval: usize,
    /// Max over steps of `|theta_replay - theta_full|_inf`.
    pub max_param_diff: f64,
    /// Max over samples and windows of `|Q_ckpt - Q_full|`.
    pub max_influence_diff: f64,
    pub windows_checked: usize,
    pub codec_roundtrip: bool,
}

impl ReplaySeed {
    pub fn exact(&self) -> bool {
        self.max_param_diff == 0.0 && self.max_influence_diff == 0.0 && self.codec_roundtrip
    }
}

pub struct TrainedSeed {
    pub seed: u64,
    pub train_key: String,
    pub trajectory: TrajectoryStore,
    pub checkpoints: Option<CheckpointStore>,
    /// Training split, for fixture export.
    pub train: Dataset,
}

pub struct Lab {
    pub config: ExperimentConfig,
    pool: rayon::ThreadPool,
    cache: Option<PathBuf>,
    /// Loaded file dataset before splitting; `None` for synthetic data.
    source: Option<Dataset>,
}

fn source_error(e: dit_core::Error) -> LabError {
    LabError::Load(e.to_string())
}

impl Lab {
    /// Validates the config, loads file datasets and checks the config
    /// against the data. Nothing is computed or written yet.
    pub fn new(config: ExperimentConfig, jobs: usize, cache: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        let source = match &config.dataset.source {
            SourceConfig::Synthetic { .. } => None,
            SourceConfig::Csv {
                path,
                label_column,
                numeric_columns,
                categorical_columns,
                ..
            } => Some(load_csv(
                &config.resolve(path),
                label_column,
                numeric_columns,
                categorical_columns,
            )?),
            SourceConfig::Idx {
                images,
                labels,
                class_a,
                class_b,
                max_samples,
                ..
            } => {
                let ds = load_idx(
                    &config.resolve(images),
                    &config.resolve(labels),
                    *class_a,
                    *class_b,
                )?;
                match max_samples {
                    Some(m) if *m < ds.len() => {
                        let keep = sample_subset(ds.len(), *m, 0).map_err(source_error)?;
                        Some(ds.subset(&keep).map_err(source_error)?)
                    }
                    _ => Some(ds),
                }
            }
        };
        if let Some(ds) = &source {
            let f = match &config.dataset.source {
                SourceConfig::Csv { test_fraction, .. } | SourceConfig::Idx { test_fraction, .. } => {
                    *test_fraction
                }
                SourceConfig::Synthetic { .. } => unreachable!("file sources only"),
            };
            let n_test = (f * ds.len() as f64).round() as usize;
            if n_test == 0 || n_test >= ds.len() {
                return Err(LabError::Config(format!(
                    "test fraction {f} leaves an empty split of {} samples",
                    ds.len()
                )));
            }
            config.validate_for_data(ds.len() - n_test, n_test, ds.feature_dim())?;
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| LabError::Runtime(e.to_string()))?;
        Ok(Self {
            config,
            pool,
            cache,
            source,
        })
    }

    pub fn seeds(&self) -> &[u64] {
        &self.config.seeds
    }

    /// Runs `f` for every seed on the pool; results keep seed order.
    pub fn per_seed<T: Send>(&self, f: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
        self.pool
            .install(|| self.config.seeds.par_iter().map(|&s| f(s)).collect())
    }

    pub fn prepare(&self, seed: u64) -> Result<SeedRun> {
        let (train, test) = match (&self.config.dataset.source, &self.source) {
            (
                SourceConfig::Synthetic {
                    n,
                    test_n,
                    dim,
                    separation,
                },
                _,
            ) => make_synthetic_split(seed, *n, *test_n, *dim, *separation)?,
            (SourceConfig::Csv { test_fraction, .. } | SourceConfig::Idx { test_fraction, .. }, Some(ds)) => {
                train_test_split(ds, *test_fraction, seed)?
            }
            _ => return Err(LabError::Runtime("file dataset not loaded".into())),
        };
        let (train, flips) = match self.config.dataset.flip_rate {
            Some(rate) => {
                let (ds, rec) = flip_labels(&train, rate, seed)?;
                (ds, Some(rec))
            }
            None => (train, None),
        };
        let model = self.config.model.spec(train.feature_dim())?;
        let train_config = self.config.train.train_config(seed);
        let batches = sample_batches(train.len(), train_config.steps, train_config.batch_size, seed)?;
        Ok(SeedRun {
            seed,
            train,
            test,
            flips,
            model,
            train_config,
            batches,
        })
    }

    /// Hash of everything that determines the training run of `seed` under
    /// the given train section.
    pub fn train_key(&self, run: &SeedRun, section: &TrainSection) -> String {
        let key = serde_json::json!({
            "dataset": self.config.dataset,
            "model": self.config.model,
            "train": section,
            "seed": run.seed,
            "data_checksum": run.train.checksum(),
        });
        sha256_hex(&serde_json::to_vec(&key).expect("key serializes"))
    }

    fn full_section(&self) -> TrainSection {
        TrainSection {
            storage_window: None,
            checkpoint_interval: None,
            ..self.config.train.clone()
        }
    }

    /// Trains with `config`, reusing `$DIT_LAB_CACHE/<key>.dit1` when a
    /// matching file is present.
    fn trajectory_with(&self, run: &SeedRun, config: &TrainConfig, key: &str) -> Result<TrajectoryStore> {
        let cached = self.cache.as_ref().map(|d| d.join(format!("{key}.dit1")));
        if let Some(path) = &cached {
            if let Ok(bytes) = std::fs::read(path) {
                if let Ok(t) = codec::decode_trajectory(&bytes, &run.model) {
                    if check_trajectory(&t, run, config).is_ok() {
                        return Ok(t);
                    }
                }
            }
        }
        let t = train_with_batches(&run.train, &run.model, config, &run.batches)?;
        if let Some(path) = &cached {
            write_atomic(path, &codec::encode_trajectory(&t))?;
        }
        Ok(t)
    }

    /// Every step logged; used by the analyses that retrain internally.
    pub fn full_trajectory(&self, run: &SeedRun) -> Result<TrajectoryStore> {
        let key = self.train_key(run, &self.full_section());
        self.trajectory_with(run, &run.full_config(), &key)
    }

    pub fn train(&self) -> Result<Vec<TrainedSeed>> {
        self.per_seed(|seed| {
            let run = self.prepare(seed)?;
            let train_key = self.train_key(&run, &self.config.train);
            let trajectory = self.trajectory_with(&run, &run.train_config, &train_key)?;
            let checkpoints = match run.train_config.checkpoint_interval {
                Some(_) => Some(train_with_checkpoints(
                    &run.train,
                    &run.model,
                    &run.train_config,
                    &run.batches,
                )?),
                None => None,
            };
            Ok(TrainedSeed {
                seed,
                train_key,
                trajectory,
                checkpoints,
                train: run.train,
            })
        })
    }

    /// Windows of the configured kind for one run.
    pub fn windows(&self, run: &SeedRun, artifact: &Artifact) -> Result<Vec<TimeWindow>> {
        let steps = run.steps();
        if steps == 0 {
            return Err(LabError::Config(
                "influence needs at least one training step".into(),
            ));
        }
        let spe = run.steps_per_epoch();
        Ok(match &self.config.windows {
            WindowConfig::Full => vec![TimeWindow::full(steps)?],
            WindowConfig::Explicit { windows } => windows
                .iter()
                .map(|&(a, b)| TimeWindow::new(a, b, steps))
                .collect::<dit_core::Result<_>>()?,
            WindowConfig::Epochs => (0..run.epochs())
                .map(|e| TimeWindow::epoch(e, spe, steps))
                .collect::<dit_core::Result<_>>()?,
            WindowConfig::Stages => {
                let curve = loss_curve(artifact, &run.train, spe)?;
                let split = segment_stages(&curve)?.to_steps(spe, steps)?;
                vec![split.early(), split.middle(), split.late()]
            }
        })
    }

    /// Influence of every training sample for every configured window,
    /// ordered by window and then sample.
    pub fn influence(&self, run: &SeedRun, artifact: &Artifact) -> Result<Vec<InfluenceRow>> {
        check_artifact(artifact, run)?;
        let q = run.query(&self.config.query)?;
        let windows = self.windows(run, artifact)?;
        let per_window: Vec<Vec<f64>> = self.pool.install(|| {
            windows
                .par_iter()
                .map(|&w| {
                    let recs = match artifact {
                        Artifact::Trajectory(t) => compute_influence_all(t, &run.train, &q, w)?,
                        Artifact::Checkpoints(c) => compute_influence_ckpt_all(c, &run.train, &q, w)?,
                    };
                    Ok(recs.into_iter().map(|r| r.value).collect())
                })
                .collect::<Result<_>>()
        })?;
        let query = q.id();
        Ok(windows
            .iter()
            .zip(per_window)
            .flat_map(|(w, vals)| {
                let query = query.clone();
                vals.into_iter().enumerate().map(move |(j, value)| InfluenceRow {
                    seed: run.seed,
                    sample: j,
                    t1: w.t1,
                    t2: w.t2,
                    query: query.clone(),
                    value,
                })
            })
            .collect())
    }

    fn loo_mode(&self) -> LooMode {
        match self.config.baselines.loo_mode {
            LooModeConfig::Replay => LooMode::Replay,
            LooModeConfig::Resample => LooMode::Resample,
        }
    }

    /// Leave-one-out test-loss deltas of every sample for each window.
    fn loo_values(&self, run: &SeedRun, windows: &[TimeWindow]) -> Result<Vec<Vec<f64>>> {
        let config = run.full_config();
        let h = LooHarness::new(
            &run.train,
            &run.model,
            &config,
            &run.batches,
            run.test.samples(),
            self.loo_mode(),
        )?;
        let rows: Vec<Vec<f64>> = (0..run.train.len())
            .into_par_iter()
            .map(|j| Ok(h.deltas(j, windows)?))
            .collect::<Result<_>>()?;
        // rows are per sample; transpose to per window
        Ok((0..windows.len())
            .map(|w| rows.iter().map(|r| r[w]).collect())
            .collect())
    }

    fn if_values(&self, run: &SeedRun, traj: &TrajectoryStore) -> Result<Vec<f64>> {
        let est = IfEstimator::new(
            &run.train,
            &run.model,
            traj.final_params()?,
            run.test.samples(),
            self.config.baselines.damping,
        )?;
        Ok(est
            .score_all(&run.train)?
            .into_iter()
            .map(|r| r.removal_estimate)
            .collect())
    }

    /// DIT and the influence function against leave-one-out ground truth
    /// on the full window, all measured on the mean test loss.
    pub fn compare(&self) -> Result<Vec<CompareSeed>> {
        let b = &self.config.baselines;
        if !b.loo {
            return Err(LabError::Config("compare needs the loo baseline enabled".into()));
        }
        if self.config.train.steps == 0 {
            return Err(LabError::Config(
                "compare needs at least one training step".into(),
            ));
        }
        self.per_seed(|seed| {
            let run = self.prepare(seed)?;
            let traj = self.full_trajectory(&run)?;
            let w = TimeWindow::full(run.steps())?;
            let dit_values: Vec<f64> = compute_influence_all(&traj, &run.train, &run.test_set_loss(), w)?
                .into_iter()
                .map(|r| r.value)
                .collect();
            let loo_values = self.loo_values(&run, &[w])?.remove(0);
            let if_values = if b.influence_function {
                Some(self.if_values(&run, &traj)?)
            } else {
                None
            };
            Ok(CompareSeed {
                seed,
                dit: comparison_metrics(&dit_values, &loo_values, b.jaccard_fraction)?,
                influence_function: if_values
                    .as_ref()
                    .map(|v| comparison_metrics(v, &loo_values, b.jaccard_fraction))
                    .transpose()?,
                dit_values,
                if_values,
                loo_values,
            })
        })
    }

    /// Flipped samples found among the most harmful `k` by each method.
    pub fn detect(&self) -> Result<Vec<DetectSeed>> {
        if self.config.dataset.flip_rate.is_none() {
            return Err(LabError::Config("detect needs dataset.flip_rate".into()));
        }
        if self.config.train.steps == 0 {
            return Err(LabError::Config("detect needs at least one training step".into()));
        }
        self.per_seed(|seed| {
            let run = self.prepare(seed)?;
            let flips = run.flips.as_ref().expect("flip rate set");
            if flips.is_empty() {
                return Ok(DetectSeed {
                    seed,
                    flipped: 0,
                    counts: [0; 6],
                });
            }
            let traj = self.full_trajectory(&run)?;
            let steps = run.steps();
            let spe = run.steps_per_epoch();
            let epochs = run.epochs();
            let windows = [
                TimeWindow::full(steps)?,
                TimeWindow::epoch(0, spe, steps)?,
                TimeWindow::epoch(epochs / 2, spe, steps)?,
                TimeWindow::epoch(epochs - 1, spe, steps)?,
            ];
            let q = run.test_set_loss();
            let mut counts = [0; 6];
            for (k, w) in windows.iter().enumerate() {
                let vals: Vec<f64> = compute_influence_all(&traj, &run.train, &q, *w)?
                    .into_iter()
                    .map(|r| r.value)
                    .collect();
                counts[k] = detection_count(&vals, flips)?;
            }
            counts[4] = detection_count(&self.if_values(&run, &traj)?, flips)?;
            counts[5] = detection_count(&self.loo_values(&run, &windows[..1])?[0], flips)?;
            Ok(DetectSeed {
                seed,
                flipped: flips.len(),
                counts,
            })
        })
    }

    /// Pattern labels of per-epoch leave-one-out series for evenly spaced
    /// samples, and stage boundaries with the stage correlation table.
    pub fn dynamics(&self) -> Result<Vec<DynamicsSeed>> {
        let probe = self.prepare(self.config.seeds[0])?;
        let epochs = probe.epochs();
        if epochs < 6 {
            return Err(LabError::Config(format!(
                "dynamics needs >= 6 epochs, config gives {epochs}"
            )));
        }
        drop(probe);
        let d = &self.config.dynamics;
        let pattern_config = PatternConfig {
            p_threshold: d.p_threshold,
            fluct_threshold: d.fluct_threshold,
        };
        self.per_seed(|seed| {
            let run = self.prepare(seed)?;
            let n = run.train.len();
            let m = d.tracked_samples.min(n);
            let tracked: Vec<usize> = (0..m).map(|k| k * n / m).collect();
            let full_config = run.full_config();
            let h = LooHarness::new(
                &run.train,
                &run.model,
                &full_config,
                &run.batches,
                run.test.samples(),
                self.loo_mode(),
            )?;
            let rows: Vec<Vec<f64>> = tracked
                .par_iter()
                .map(|&j| Ok(h.epoch_row(j, epochs)?))
                .collect::<Result<_>>()?;
            let patterns = summarize_patterns(&InfluenceSeries::new(tracked, rows)?, pattern_config)?;

            let traj = self.full_trajectory(&run)?;
            let spe = run.steps_per_epoch();
            let loss_curve = epoch_loss_curve(&traj, &run.train, spe)?;
            let seg = segment_stages(&loss_curve)?;
            let split = seg.to_steps(spe, run.steps())?;
            let table = stage_correlation_table(&traj, &run.train, &run.query(&self.config.query)?, split)?;
            Ok(DynamicsSeed {
                seed,
                patterns,
                stages: StageSummary {
                    loss_curve,
                    boundary_epochs: seg.epochs,
                    boundary_steps: (split.b1, split.b2),
                    fallback: seg.fallback,
                    taus: table.entries().map(|(_, v)| v),
                },
            })
        })
    }

    /// Checkpoint replay against full logging, bit for bit.
    pub fn replay_check(&self) -> Result<Vec<ReplaySeed>> {
        if self.config.train.steps == 0 {
            return Err(LabError::Config(
                "replay-check needs at least one training step".into(),
            ));
        }
        self.per_seed(|seed| {
            let run = self.prepare(seed)?;
            let full = self.full_trajectory(&run)?;
            let interval = run
                .train_config
                .checkpoint_interval
                .unwrap_or(run.steps_per_epoch());
            let ckpt_config = TrainConfig {
                checkpoint_interval: Some(interval),
                ..run.full_config()
            };
            let store = train_with_checkpoints(&run.train, &run.model, &ckpt_config, &run.batches)?;
            let replayed = replay_segment(&store, &run.train, 0, run.steps())?;
            let mut max_param_diff: f64 = 0.0;
            for (t, theta) in &replayed {
                for (a, b) in theta.iter().zip(full.params_at(*t)?.iter()) {
                    max_param_diff = max_param_diff.max((a - b).abs());
                }
            }
            let steps = run.steps();
            let spe = run.steps_per_epoch();
            let mut windows = vec![TimeWindow::full(steps)?];
            if run.epochs() > 1 {
                windows.push(TimeWindow::epoch(run.epochs() / 2, spe, steps)?);
            }
            let q = run.test_set_loss();
            let mut max_influence_diff: f64 = 0.0;
            for w in &windows {
                let a = compute_influence_all(&full, &run.train, &q, *w)?;
                let b = compute_influence_ckpt_all(&store, &run.train, &q, *w)?;
                for (x, y) in a.iter().zip(&b) {
                    max_influence_diff = max_influence_diff.max((x.value - y.value).abs());
                }
            }
            let codec_roundtrip = codec::decode_trajectory(&codec::encode_trajectory(&full), &run.model)?
                == full
                && codec::decode_checkpoints(&codec::encode_checkpoints(&store), &run.model)? == store;
            Ok(ReplaySeed {
                seed,
                interval,
                max_param_diff,
                max_influence_diff,
                windows_checked: windows.len(),
                codec_roundtrip,
            })
        })
    }
}

/// Mean training loss at each epoch end.
fn loss_curve(artifact: &Artifact, dataset: &Dataset, spe: usize) -> Result<Vec<f64>> {
    match artifact {
        Artifact::Trajectory(t) => Ok(epoch_loss_curve(t, dataset, spe)?),
        Artifact::Checkpoints(c) => {
            let thetas = replay_segment(c, dataset, 0, c.steps)?;
            (0..c.steps.div_ceil(spe))
                .map(|e| {
                    let t = ((e + 1) * spe).min(c.steps);
                    Ok(numkit::mean_loss(&c.model, &thetas[&t], dataset.samples())?)
                })
                .collect()
        }
    }
}

fn mismatch(what: &str, file: impl std::fmt::Display, expected: impl std::fmt::Display) -> LabError {
    LabError::Artifact(format!("{what}: file has {file}, config gives {expected}"))
}

fn check_trajectory(t: &TrajectoryStore, run: &SeedRun, config: &TrainConfig) -> Result<()> {
    if t.steps != config.steps {
        return Err(mismatch("steps", t.steps, config.steps));
    }
    if t.window != config.storage_window() {
        return Err(mismatch(
            "storage window",
            format!("{:?}", t.window),
            format!("{:?}", config.storage_window()),
        ));
    }
    if t.records
        .iter()
        .any(|r| r.batch != run.batches[r.t] || r.lr != config.lr.at(r.t))
    {
        return Err(LabError::Artifact(
            "logged batches or learning rates differ from the config".into(),
        ));
    }
    Ok(())
}

/// The artifact must come from exactly the run the config describes.
pub fn check_artifact(artifact: &Artifact, run: &SeedRun) -> Result<()> {
    if artifact.seed() != run.seed {
        return Err(mismatch("seed", artifact.seed(), run.seed));
    }
    if artifact.n() != run.train.len() {
        return Err(mismatch("sample count", artifact.n(), run.train.len()));
    }
    let initial = run.model.init_params(run.seed);
    match artifact {
        Artifact::Trajectory(t) => {
            check_trajectory(t, run, &run.train_config)?;
            if t.initial != initial {
                return Err(LabError::Artifact("initial parameters differ".into()));
            }
        }
        Artifact::Checkpoints(c) => {
            if c.steps != run.steps() {
                return Err(mismatch("steps", c.steps, run.steps()));
            }
            if Some(c.interval) != run.train_config.checkpoint_interval {
                return Err(mismatch(
                    "checkpoint interval",
                    c.interval,
                    format!("{:?}", run.train_config.checkpoint_interval),
                ));
            }
            let lrs_match = c
                .lrs
                .iter()
                .enumerate()
                .all(|(t, lr)| *lr == run.train_config.lr.at(t));
            if c.batches != run.batches || !lrs_match {
                return Err(LabError::Artifact(
                    "logged batches or learning rates differ from the config".into(),
                ));
            }
            if c.checkpoints.get(&0) != Some(&initial) {
                return Err(LabError::Artifact("initial parameters differ".into()));
            }
        }
    }
    Ok(())
}

/// Human-readable pattern names in table order.
pub fn pattern_names() -> [&'static str; 4] {
    PatternLabel::ALL.map(|l| l.name())
}
