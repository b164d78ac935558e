//! The `dit-lab` command line.
//!
//! Exit codes: 0 success, 1 runtime error, 2 config error, 3 artifact
//! mismatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::codec::{self, Artifact};
use crate::config::{ExperimentConfig, SourceConfig};
use crate::experiments::{
    pattern_names, CompareSeed, DetectSeed, DynamicsSeed, InfluenceRow, Lab, Metrics, ReplaySeed,
    DETECT_METHODS, STAGE_PAIRS,
};
use crate::manifest::{sha256_hex, Emitter, RunManifest, StepTiming};
use crate::report::{num, summarize, svg_lines, Table};
use crate::{io, LabError, Result};

pub const CACHE_ENV: &str = "DIT_LAB_CACHE";

#[derive(Debug, Parser)]
#[command(
    name = "dit-lab",
    version,
    about = "Time-windowed training-sample influence experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. 1 is the reproducibility reference.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Run only this seed.
    #[arg(long, global = true)]
    pub seed_override: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every seed and write DIT1 (and DITC) trajectory files.
    Train,
    /// Influence of every training sample over the configured windows.
    Influence {
        /// Trajectory file; defaults to the train output of each seed.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// DIT and influence functions against leave-one-out ground truth.
    Compare,
    /// Flipped-label detection by six influence methods.
    Detect,
    /// Influence pattern labels and training-stage correlations.
    Dynamics,
    /// Checkpoint replay against full logging, bit for bit.
    ReplayCheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Influence { .. } => "influence",
            Command::Compare => "compare",
            Command::Detect => "detect",
            Command::Dynamics => "dynamics",
            Command::ReplayCheck => "replay-check",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Timings(Vec<StepTiming>);

impl Timings {
    fn time<T>(&mut self, step: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        self.0.push(StepTiming {
            step: step.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Runs the command and returns the text report printed on success.
pub fn execute(cli: &Cli) -> Result<String> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| LabError::Config("--config is required".into()))?;
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(k) = cli.seed_override {
        config.seeds = vec![k];
    }
    if cli.jobs == 0 {
        return Err(LabError::Config("--jobs must be positive".into()));
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| config.resolve(&config.output_dir));
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    let hash = config.hash();
    let mut timings = Timings(Vec::new());
    let lab = timings.time("load", || Lab::new(config, cli.jobs, cache))?;
    let mut emit = Emitter::new(&out);
    let text = match &cli.command {
        Command::Train => cmd_train(&lab, &mut emit, &mut timings)?,
        Command::Influence { trajectory } => {
            cmd_influence(&lab, &out, trajectory.as_deref(), &mut emit, &mut timings)?
        }
        Command::Compare => {
            let seeds = timings.time("compare", || lab.compare())?;
            render_compare(&lab, &seeds, &mut emit)?
        }
        Command::Detect => {
            let seeds = timings.time("detect", || lab.detect())?;
            render_detect(&seeds, &mut emit)?
        }
        Command::Dynamics => {
            let seeds = timings.time("dynamics", || lab.dynamics())?;
            render_dynamics(&seeds, &mut emit)?
        }
        Command::ReplayCheck => {
            let seeds = timings.time("replay-check", || lab.replay_check())?;
            let text = render_replay(&seeds, &mut emit)?;
            if let Some(bad) = seeds.iter().find(|s| !s.exact()) {
                emit.finish(&hash, cli.command.name(), timings.0)?;
                return Err(LabError::Runtime(format!(
                    "checkpoint replay is not exact for seed {}",
                    bad.seed
                )));
            }
            text
        }
    };
    emit.finish(&hash, cli.command.name(), timings.0)?;
    Ok(text)
}

fn json<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| LabError::Runtime(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}

fn emit_table(emit: &mut Emitter, stem: &str, table: &Table) -> Result<()> {
    emit.add(format!("{stem}.csv"), "csv", table.to_csv()?);
    Ok(())
}

pub fn trajectory_file(seed: u64) -> String {
    format!("trajectory_seed{seed}.dit1")
}

pub fn checkpoint_file(seed: u64) -> String {
    format!("checkpoints_seed{seed}.ditc")
}

fn cmd_train(lab: &Lab, emit: &mut Emitter, timings: &mut Timings) -> Result<String> {
    let trained = timings.time("train", || lab.train())?;
    let synthetic = matches!(lab.config.dataset.source, SourceConfig::Synthetic { .. });
    let mut table = Table::new(["seed", "steps", "logged", "checkpoints", "final_train_loss"]);
    for t in &trained {
        let e = emit.add(
            trajectory_file(t.seed),
            "dit1",
            codec::encode_trajectory(&t.trajectory),
        );
        e.seed = Some(t.seed);
        e.train_key = Some(t.train_key.clone());
        if let Some(c) = &t.checkpoints {
            let e = emit.add(checkpoint_file(t.seed), "ditc", codec::encode_checkpoints(c));
            e.seed = Some(t.seed);
            e.train_key = Some(t.train_key.clone());
        }
        if synthetic {
            emit.add(
                format!("train_seed{}.csv", t.seed),
                "csv",
                io::dataset_to_csv(&t.train)?,
            )
            .seed = Some(t.seed);
        }
        let final_loss = match t.trajectory.final_params() {
            Ok(theta) => num(dit_core::numkit::mean_loss(
                &t.trajectory.model,
                theta,
                t.train.samples(),
            )?),
            Err(_) => "-".into(),
        };
        table.push([
            t.seed.to_string(),
            t.trajectory.steps.to_string(),
            t.trajectory.records.len().to_string(),
            t.checkpoints
                .as_ref()
                .map_or(0, |c| c.checkpoints.len())
                .to_string(),
            final_loss,
        ]);
    }
    emit_table(emit, "train", &table)?;
    Ok(table.to_text())
}

/// Verifies a trajectory file against the manifest that lists it, if any.
fn check_manifest(path: &Path, bytes: &[u8], train_key: &str) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let Some(manifest) = RunManifest::read(dir)? else {
        return Ok(());
    };
    let Some(entry) = manifest.artifact(&name) else {
        return Ok(());
    };
    if entry.sha256 != sha256_hex(bytes) {
        return Err(LabError::Artifact(format!(
            "{} changed since it was written",
            path.display()
        )));
    }
    if entry.train_key.as_deref().is_some_and(|k| k != train_key) {
        return Err(LabError::Artifact(format!(
            "{} was trained from a different config or dataset",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_influence(
    lab: &Lab,
    out: &Path,
    trajectory: Option<&Path>,
    emit: &mut Emitter,
    timings: &mut Timings,
) -> Result<String> {
    let model = lab.prepare(lab.seeds()[0])?.model;
    let read = |path: &Path| -> Result<(Vec<u8>, Artifact)> {
        let bytes =
            std::fs::read(path).map_err(|e| LabError::Artifact(format!("{}: {e}", path.display())))?;
        let artifact = codec::decode_artifact(&bytes, &model)
            .map_err(|e| LabError::Artifact(format!("{}: {e}", path.display())))?;
        Ok((bytes, artifact))
    };
    let mut jobs: Vec<(PathBuf, Vec<u8>, Artifact)> = Vec::new();
    match trajectory {
        Some(path) => {
            let (bytes, artifact) = read(path)?;
            if !lab.seeds().contains(&artifact.seed()) {
                return Err(LabError::Artifact(format!(
                    "{} holds seed {}, not among the configured seeds",
                    path.display(),
                    artifact.seed()
                )));
            }
            jobs.push((path.to_path_buf(), bytes, artifact));
        }
        None => {
            for &seed in lab.seeds() {
                let full = out.join(trajectory_file(seed));
                let ckpt = out.join(checkpoint_file(seed));
                let path = if full.exists() && lab.config.train.storage_window.is_none() || !ckpt.exists() {
                    full
                } else {
                    ckpt
                };
                let (bytes, artifact) = read(&path)?;
                jobs.push((path, bytes, artifact));
            }
        }
    }
    let mut rows: Vec<InfluenceRow> = Vec::new();
    for (path, bytes, artifact) in &jobs {
        let run = lab.prepare(artifact.seed())?;
        check_manifest(path, bytes, &lab.train_key(&run, &lab.config.train))?;
        rows.extend(timings.time(&format!("influence seed {}", run.seed), || {
            lab.influence(&run, artifact)
        })?);
    }
    let mut table = Table::new(["seed", "sample", "t1", "t2", "query", "value"]);
    for r in &rows {
        table.push([
            r.seed.to_string(),
            r.sample.to_string(),
            r.t1.to_string(),
            r.t2.to_string(),
            r.query.clone(),
            num(r.value),
        ]);
    }
    emit_table(emit, "influence", &table)?;
    emit.add("influence.json", "json", json(&rows)?);
    let mut summary = Table::new(["seed", "t1", "t2", "rows", "min", "max"]);
    let mut k = 0;
    while k < rows.len() {
        let (s, t1, t2) = (rows[k].seed, rows[k].t1, rows[k].t2);
        let group: Vec<f64> = rows[k..]
            .iter()
            .take_while(|r| (r.seed, r.t1, r.t2) == (s, t1, t2))
            .map(|r| r.value)
            .collect();
        let (lo, hi) = group
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        summary.push([
            s.to_string(),
            t1.to_string(),
            t2.to_string(),
            group.len().to_string(),
            format!("{lo:.4e}"),
            format!("{hi:.4e}"),
        ]);
        k += group.len();
    }
    Ok(summary.to_text())
}

fn render_compare(lab: &Lab, seeds: &[CompareSeed], emit: &mut Emitter) -> Result<String> {
    let mut per_seed = Table::new(["seed", "method", "pearson", "spearman", "kendall", "jaccard"]);
    let push = |t: &mut Table, seed: u64, method: &str, m: &Metrics| {
        let mut row = vec![seed.to_string(), method.to_string()];
        row.extend(m.values().iter().map(|v| num(*v)));
        t.push(row);
    };
    for s in seeds {
        push(&mut per_seed, s.seed, "dit", &s.dit);
        if let Some(m) = &s.influence_function {
            push(&mut per_seed, s.seed, "influence_function", m);
        }
        let mut values = Table::new(["sample", "dit", "influence_function", "loo"]);
        for j in 0..s.dit_values.len() {
            values.push([
                j.to_string(),
                num(s.dit_values[j]),
                s.if_values.as_ref().map_or(String::new(), |v| num(v[j])),
                num(s.loo_values[j]),
            ]);
        }
        emit_table(emit, &format!("compare_values_seed{}", s.seed), &values)?;
    }
    let has_if = seeds.iter().all(|s| s.influence_function.is_some());
    let mut headers = vec!["run".to_string()];
    for m in Metrics::NAMES {
        headers.push(format!("{m}_dit"));
        if has_if {
            headers.push(format!("{m}_if"));
        }
    }
    let mut summary = Table::new(headers);
    let mut row = vec![lab.config.name.clone()];
    for k in 0..4 {
        row.push(summarize(
            &seeds.iter().map(|s| s.dit.values()[k]).collect::<Vec<_>>(),
        ));
        if has_if {
            row.push(summarize(
                &seeds
                    .iter()
                    .map(|s| s.influence_function.expect("checked").values()[k])
                    .collect::<Vec<_>>(),
            ));
        }
    }
    summary.push(row);
    emit_table(emit, "compare", &per_seed)?;
    emit_table(emit, "compare_summary", &summary)?;
    emit.add("compare.json", "json", json(seeds)?);
    let mut text = summary.to_text();
    if has_if {
        let wins = seeds
            .iter()
            .filter(|s| s.dit.kendall > s.influence_function.expect("checked").kendall)
            .count();
        text += &format!("\nDIT Kendall tau above IF in {wins} of {} seeds\n", seeds.len());
    }
    text += "\n";
    text += &per_seed.to_text();
    emit.add("compare.txt", "text", text.clone().into_bytes());
    Ok(text)
}

fn render_detect(seeds: &[DetectSeed], emit: &mut Emitter) -> Result<String> {
    let mut headers = vec!["seed", "flipped"];
    headers.extend(DETECT_METHODS);
    let mut table = Table::new(headers);
    for s in seeds {
        let mut row = vec![s.seed.to_string(), s.flipped.to_string()];
        row.extend(s.counts.iter().map(|c| c.to_string()));
        table.push(row);
    }
    let mut summary = Table::new(["method", "identified"]);
    for (k, m) in DETECT_METHODS.iter().enumerate() {
        let xs: Vec<f64> = seeds.iter().map(|s| s.counts[k] as f64).collect();
        summary.push([m.to_string(), summarize(&xs)]);
    }
    let flipped: Vec<f64> = seeds.iter().map(|s| s.flipped as f64).collect();
    emit_table(emit, "detect", &table)?;
    emit_table(emit, "detect_summary", &summary)?;
    emit.add("detect.json", "json", json(seeds)?);
    let text = format!(
        "flipped samples per seed: {}\n\n{}\n{}",
        summarize(&flipped),
        summary.to_text(),
        table.to_text()
    );
    emit.add("detect.txt", "text", text.clone().into_bytes());
    Ok(text)
}

fn render_dynamics(seeds: &[DynamicsSeed], emit: &mut Emitter) -> Result<String> {
    let names = pattern_names();
    let mut patterns = Table::new(
        std::iter::once("seed".to_string())
            .chain(names.iter().map(|n| n.to_string()))
            .chain(std::iter::once("plurality".to_string())),
    );
    let mut stages = Table::new(
        ["seed", "b1_epoch", "b2_epoch", "b1_step", "b2_step", "fallback"]
            .into_iter()
            .map(String::from)
            .chain(STAGE_PAIRS.iter().map(|p| p.to_string())),
    );
    for s in seeds {
        let mut row = vec![s.seed.to_string()];
        row.extend(s.patterns.distribution.iter().map(|v| num(*v)));
        row.push(s.patterns.plurality.to_string());
        patterns.push(row);
        let st = &s.stages;
        let mut row = vec![
            s.seed.to_string(),
            st.boundary_epochs.0.to_string(),
            st.boundary_epochs.1.to_string(),
            st.boundary_steps.0.to_string(),
            st.boundary_steps.1.to_string(),
            st.fallback.to_string(),
        ];
        row.extend(st.taus.iter().map(|v| num(*v)));
        stages.push(row);

        let epochs = s
            .patterns
            .centroids
            .iter()
            .flatten()
            .map(|c| c.len())
            .max()
            .unwrap_or(0);
        let mut centroids =
            Table::new(std::iter::once("epoch".to_string()).chain(names.iter().map(|n| n.to_string())));
        for e in 0..epochs {
            let mut row = vec![e.to_string()];
            row.extend(
                s.patterns
                    .centroids
                    .iter()
                    .map(|c| c.as_ref().map_or(String::new(), |c| num(c[e]))),
            );
            centroids.push(row);
        }
        emit_table(emit, &format!("dynamics_centroids_seed{}", s.seed), &centroids)?;
        let series: Vec<(String, Vec<f64>)> = names
            .iter()
            .zip(&s.patterns.centroids)
            .filter_map(|(n, c)| c.clone().map(|c| (n.to_string(), c)))
            .collect();
        emit.add(
            format!("dynamics_patterns_seed{}.svg", s.seed),
            "svg",
            svg_lines(&format!("Pattern centroids, seed {}", s.seed), "epoch", &series).into_bytes(),
        );
        emit.add(
            format!("dynamics_loss_seed{}.svg", s.seed),
            "svg",
            svg_lines(
                &format!("Training loss, seed {}", s.seed),
                "epoch",
                &[("loss".to_string(), st.loss_curve.clone())],
            )
            .into_bytes(),
        );
    }
    let mut pattern_summary = Table::new(names);
    pattern_summary.push(
        (0..4)
            .map(|k| {
                summarize(
                    &seeds
                        .iter()
                        .map(|s| s.patterns.distribution[k])
                        .collect::<Vec<_>>(),
                )
            })
            .collect::<Vec<_>>(),
    );
    let mut stage_summary = Table::new(STAGE_PAIRS);
    stage_summary.push(
        (0..6)
            .map(|k| summarize(&seeds.iter().map(|s| s.stages.taus[k]).collect::<Vec<_>>()))
            .collect::<Vec<_>>(),
    );
    emit_table(emit, "dynamics_patterns", &patterns)?;
    emit_table(emit, "dynamics_patterns_summary", &pattern_summary)?;
    emit_table(emit, "dynamics_stages", &stages)?;
    emit_table(emit, "dynamics_stages_summary", &stage_summary)?;
    emit.add("dynamics.json", "json", json(seeds)?);
    let text = format!(
        "Pattern distribution (%)\n{}\nStage Kendall tau\n{}\n{}\n{}",
        pattern_summary.to_text(),
        stage_summary.to_text(),
        patterns.to_text(),
        stages.to_text()
    );
    emit.add("dynamics.txt", "text", text.clone().into_bytes());
    Ok(text)
}

fn render_replay(seeds: &[ReplaySeed], emit: &mut Emitter) -> Result<String> {
    let mut table = Table::new([
        "seed",
        "interval",
        "max_param_diff",
        "max_influence_diff",
        "windows_checked",
        "codec_roundtrip",
        "exact",
    ]);
    for s in seeds {
        table.push([
            s.seed.to_string(),
            s.interval.to_string(),
            num(s.max_param_diff),
            num(s.max_influence_diff),
            s.windows_checked.to_string(),
            s.codec_roundtrip.to_string(),
            s.exact().to_string(),
        ]);
    }
    emit_table(emit, "replay_check", &table)?;
    Ok(table.to_text())
}
