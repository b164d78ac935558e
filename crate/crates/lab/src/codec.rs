//! Binary trajectory formats. All integers and floats are little-endian.
//!
//! `DIT1` (full trajectory over a storage window `W`):
//!
//! ```text
//! magic "DIT1" | version u32 | p u64 | T u64 | N u64 | seed u64
//! | W.start u64 | W.end u64 | theta[0]: p x f64
//! then for every t in W:
//!   t u64 | lr f64 | |S_t| u32 | indices: |S_t| x u32 | theta[t+1]: p x f64
//! ```
//!
//! `DITC` (checkpointed run):
//!
//! ```text
//! magic "DITC" | version u32 | p u64 | T u64 | N u64 | seed u64
//! | C u64 | K u64 | checkpoint steps: K x u64 (strictly increasing, first 0)
//! then for every t in [0, T):
//!   lr f64 | |S_t| u32 | indices: |S_t| x u32
//! then K x (theta[step]: p x f64) in checkpoint-step order
//! ```
//!
//! Neither format stores the model description; decoding takes the
//! [`ModelSpec`] from the experiment config and checks `p` against it.

use std::collections::BTreeMap;
use std::path::Path;

use dit_core::numkit::{Batch, ModelSpec, ParamVector};
use dit_core::trainer::{CheckpointStore, StepRecord, TrajectoryStore};

use crate::{LabError, Result};

pub const TRAJECTORY_MAGIC: [u8; 4] = *b"DIT1";
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DITC";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Trajectory(TrajectoryStore),
    Checkpoints(CheckpointStore),
}

impl Artifact {
    pub fn steps(&self) -> usize {
        match self {
            Artifact::Trajectory(t) => t.steps,
            Artifact::Checkpoints(c) => c.steps,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Artifact::Trajectory(t) => t.n,
            Artifact::Checkpoints(c) => c.n,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Artifact::Trajectory(t) => t.seed,
            Artifact::Checkpoints(c) => c.seed,
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_batch(out: &mut Vec<u8>, batch: &Batch) {
    put_u32(out, batch.len() as u32);
    for &i in batch.indices() {
        put_u32(out, i as u32);
    }
}

pub fn encode_trajectory(traj: &TrajectoryStore) -> Vec<u8> {
    let p = traj.num_params();
    let mut out = Vec::with_capacity(64 + 8 * p * (traj.records.len() + 1));
    out.extend_from_slice(&TRAJECTORY_MAGIC);
    put_u32(&mut out, VERSION);
    for v in [p, traj.steps, traj.n] {
        put_u64(&mut out, v as u64);
    }
    put_u64(&mut out, traj.seed);
    put_u64(&mut out, traj.window.start as u64);
    put_u64(&mut out, traj.window.end as u64);
    put_f64s(&mut out, &traj.initial);
    for r in &traj.records {
        put_u64(&mut out, r.t as u64);
        out.extend_from_slice(&r.lr.to_le_bytes());
        put_batch(&mut out, &r.batch);
        put_f64s(&mut out, &r.params_after);
    }
    out
}

pub fn encode_checkpoints(store: &CheckpointStore) -> Vec<u8> {
    let p = store.checkpoints.values().next().map_or(0, |c| c.len());
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, VERSION);
    for v in [p, store.steps, store.n] {
        put_u64(&mut out, v as u64);
    }
    put_u64(&mut out, store.seed);
    put_u64(&mut out, store.interval as u64);
    put_u64(&mut out, store.checkpoints.len() as u64);
    for &t in store.checkpoints.keys() {
        put_u64(&mut out, t as u64);
    }
    for (batch, lr) in store.batches.iter().zip(&store.lrs) {
        out.extend_from_slice(&lr.to_le_bytes());
        put_batch(&mut out, batch);
    }
    for theta in store.checkpoints.values() {
        put_f64s(&mut out, theta);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn bad(msg: impl Into<String>) -> LabError {
    LabError::Artifact(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| bad(format!("truncated file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn size(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("size field overflows usize"))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn params(&mut self, p: usize) -> Result<ParamVector> {
        let bytes = self.take(p.checked_mul(8).ok_or_else(|| bad("parameter block too large"))?)?;
        Ok(ParamVector::from(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<_>>(),
        ))
    }

    fn batch(&mut self, n: usize) -> Result<Batch> {
        let len = self.u32()? as usize;
        let mut idx = Vec::with_capacity(len.min(self.buf.len() / 4));
        for _ in 0..len {
            idx.push(self.u32()? as usize);
        }
        Batch::new(idx, n).map_err(|e| bad(format!("bad batch: {e}")))
    }

    fn lr(&mut self, t: usize) -> Result<f64> {
        let lr = self.f64()?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(bad(format!("learning rate {lr} at step {t}")));
        }
        Ok(lr)
    }

    fn header(&mut self, magic: [u8; 4], model: &ModelSpec) -> Result<(usize, usize, usize, u64)> {
        if self.take(4)? != magic {
            return Err(bad(format!(
                "expected magic {:?}",
                String::from_utf8_lossy(&magic)
            )));
        }
        let version = self.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let p = self.size()?;
        if p != model.num_params() {
            return Err(bad(format!(
                "file has p = {p}, configured model has p = {}",
                model.num_params()
            )));
        }
        let steps = self.size()?;
        let n = self.size()?;
        let seed = self.u64()?;
        Ok((p, steps, n, seed))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(bad(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_trajectory(bytes: &[u8], model: &ModelSpec) -> Result<TrajectoryStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (p, steps, n, seed) = r.header(TRAJECTORY_MAGIC, model)?;
    let (start, end) = (r.size()?, r.size()?);
    if start > end || end > steps {
        return Err(bad(format!("storage window {start}..{end} outside [0, {steps})")));
    }
    let initial = r.params(p)?;
    let mut records = Vec::with_capacity(end - start);
    for expected in start..end {
        let t = r.size()?;
        if t != expected {
            return Err(bad(format!("record for step {t} where {expected} was expected")));
        }
        let lr = r.lr(t)?;
        let batch = r.batch(n)?;
        let params_after = r.params(p)?;
        records.push(StepRecord {
            t,
            batch,
            lr,
            params_after,
        });
    }
    r.finish()?;
    Ok(TrajectoryStore {
        model: model.clone(),
        n,
        steps,
        seed,
        initial,
        window: start..end,
        records,
    })
}

pub fn decode_checkpoints(bytes: &[u8], model: &ModelSpec) -> Result<CheckpointStore> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let (p, steps, n, seed) = r.header(CHECKPOINT_MAGIC, model)?;
    let interval = r.size()?;
    if interval == 0 {
        return Err(bad("checkpoint interval 0"));
    }
    let k = r.size()?;
    if k > steps + 1 {
        return Err(bad(format!("{k} checkpoints for {steps} steps")));
    }
    let mut at = Vec::with_capacity(k);
    for _ in 0..k {
        at.push(r.size()?);
    }
    if at.first() != Some(&0) || at.windows(2).any(|w| w[0] >= w[1]) || at.last() > Some(&steps) {
        return Err(bad("checkpoint steps must start at 0, increase and end by T"));
    }
    let mut batches = Vec::with_capacity(steps);
    let mut lrs = Vec::with_capacity(steps);
    for t in 0..steps {
        lrs.push(r.lr(t)?);
        batches.push(r.batch(n)?);
    }
    let mut checkpoints = BTreeMap::new();
    for t in at {
        checkpoints.insert(t, r.params(p)?);
    }
    r.finish()?;
    Ok(CheckpointStore {
        model: model.clone(),
        n,
        steps,
        seed,
        interval,
        batches,
        lrs,
        checkpoints,
    })
}

/// Decodes either format by its magic.
pub fn decode_artifact(bytes: &[u8], model: &ModelSpec) -> Result<Artifact> {
    match bytes.get(..4) {
        Some(m) if m == TRAJECTORY_MAGIC => decode_trajectory(bytes, model).map(Artifact::Trajectory),
        Some(m) if m == CHECKPOINT_MAGIC => decode_checkpoints(bytes, model).map(Artifact::Checkpoints),
        _ => Err(bad("unknown magic")),
    }
}

pub fn read_artifact(path: &Path, model: &ModelSpec) -> Result<Artifact> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    decode_artifact(&bytes, model).map_err(|e| match e {
        LabError::Artifact(m) => LabError::Artifact(format!("{}: {m}", path.display())),
        other => other,
    })
}
