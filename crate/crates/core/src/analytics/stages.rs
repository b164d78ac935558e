use alloc::vec::Vec;

use super::metrics::kendall_tau;
use crate::data::Dataset;
use crate::dit::{compute_influence_all, QuerySpec, TimeWindow};
use crate::trainer::TrajectoryStore;
use crate::{Error, Result};

/// Early / middle / late split of `[0, T]` at steps `0 < b1 < b2 < T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSplit {
    pub b1: usize,
    pub b2: usize,
    pub steps: usize,
}

impl StageSplit {
    pub fn new(b1: usize, b2: usize, steps: usize) -> Result<Self> {
        if !(0 < b1 && b1 < b2 && b2 < steps) {
            return Err(Error::InvalidConfig(alloc::format!(
                "stage boundaries must satisfy 0 < {b1} < {b2} < {steps}"
            )));
        }
        Ok(Self { b1, b2, steps })
    }

    pub fn early(&self) -> TimeWindow {
        TimeWindow { t1: 0, t2: self.b1 }
    }

    pub fn middle(&self) -> TimeWindow {
        TimeWindow {
            t1: self.b1,
            t2: self.b2,
        }
    }

    pub fn late(&self) -> TimeWindow {
        TimeWindow {
            t1: self.b2,
            t2: self.steps,
        }
    }

    pub fn full(&self) -> TimeWindow {
        TimeWindow {
            t1: 0,
            t2: self.steps,
        }
    }
}

/// Stage boundaries found on a per-epoch loss curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Epoch indices `b1 < b2`.
    pub epochs: (usize, usize),
    /// True when the equal-thirds fallback was used.
    pub fallback: bool,
    /// Fitted `(a, b, c)` of `a exp(-b t) + c`, absent on fallback before a fit.
    pub fit: Option<(f64, f64, f64)>,
    pub residuals: Vec<f64>,
}

impl Segmentation {
    /// Converts epoch boundaries to steps.
    pub fn to_steps(&self, steps_per_epoch: usize, steps: usize) -> Result<StageSplit> {
        StageSplit::new(
            self.epochs.0 * steps_per_epoch,
            self.epochs.1 * steps_per_epoch,
            steps,
        )
    }
}

/// Least-squares `(a, c, sse)` for fixed decay rate `b`.
fn fit_linear_part(ys: &[f64], b: f64) -> (f64, f64, f64) {
    let n = ys.len() as f64;
    let f: Vec<f64> = (0..ys.len()).map(|t| libm::exp(-b * t as f64)).collect();
    let mf = f.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sff, mut sfy) = (0.0, 0.0);
    for (fi, y) in f.iter().zip(ys) {
        sff += (fi - mf) * (fi - mf);
        sfy += (fi - mf) * (y - my);
    }
    let a = if sff > 0.0 { sfy / sff } else { 0.0 };
    let c = my - a * mf;
    let sse = f
        .iter()
        .zip(ys)
        .map(|(fi, y)| {
            let r = y - a * fi - c;
            r * r
        })
        .sum();
    (a, c, sse)
}

/// Fits `a exp(-b t) + c` over `t = 0, 1, ..` by a log-spaced grid over `b`
/// followed by golden-section refinement.
pub fn fit_exponential_decay(ys: &[f64]) -> (f64, f64, f64) {
    const GRID: usize = 240;
    let grid: Vec<f64> = (0..GRID)
        .map(|k| libm::pow(10.0, -4.0 + 6.0 * k as f64 / (GRID - 1) as f64))
        .collect();
    let sse = |b: f64| fit_linear_part(ys, b).2;
    let best = (0..GRID)
        .min_by(|&i, &j| sse(grid[i]).total_cmp(&sse(grid[j])))
        .expect("non-empty grid");
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(GRID - 1)]);
    let phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (sse(x1), sse(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = sse(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = sse(x2);
        }
    }
    let mut b = 0.5 * (lo + hi);
    if sse(grid[best]) < sse(b) {
        b = grid[best];
    }
    let (a, c, _) = fit_linear_part(ys, b);
    (a, b, c)
}

fn thirds(epochs: usize) -> (usize, usize) {
    (epochs / 3, 2 * epochs / 3)
}

/// Finds two change points on a per-epoch loss curve: the two largest
/// absolute residuals of an exponential-decay fit among epochs
/// `1..epochs`, at least `ceil(epochs / 4)` apart, earlier epoch first on
/// ties. Falls back to equal thirds when the loss does not decrease or the
/// residuals vanish.
pub fn segment_stages(loss_curve: &[f64]) -> Result<Segmentation> {
    let e = loss_curve.len();
    if e < 6 {
        return Err(Error::InvalidConfig(alloc::format!(
            "stage segmentation needs >= 6 epochs, got {e}"
        )));
    }
    if loss_curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: usize::MAX });
    }
    if loss_curve[e - 1] >= loss_curve[0] {
        return Ok(Segmentation {
            epochs: thirds(e),
            fallback: true,
            fit: None,
            residuals: Vec::new(),
        });
    }
    let (a, b, c) = fit_exponential_decay(loss_curve);
    let residuals: Vec<f64> = loss_curve
        .iter()
        .enumerate()
        .map(|(t, y)| y - (a * libm::exp(-b * t as f64) + c))
        .collect();
    let span = loss_curve.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        - loss_curve.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let mut cand: Vec<usize> = (1..e).collect();
    cand.sort_by(|&i, &j| residuals[j].abs().total_cmp(&residuals[i].abs()).then(i.cmp(&j)));
    let sep = e.div_ceil(4);
    let first = cand[0];
    let second = cand.iter().copied().find(|&k| k.abs_diff(first) >= sep);
    let flat = residuals[first].abs() <= 1e-6 * span;
    match second {
        Some(s) if !flat => Ok(Segmentation {
            epochs: (first.min(s), first.max(s)),
            fallback: false,
            fit: Some((a, b, c)),
            residuals,
        }),
        _ => Ok(Segmentation {
            epochs: thirds(e),
            fallback: true,
            fit: Some((a, b, c)),
            residuals,
        }),
    }
}

/// Kendall's tau between DIT influence rankings of the stage windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTable {
    pub early_middle: f64,
    pub early_late: f64,
    pub middle_late: f64,
    pub early_full: f64,
    pub middle_full: f64,
    pub late_full: f64,
}

impl StageTable {
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("early-middle", self.early_middle),
            ("early-late", self.early_late),
            ("middle-late", self.middle_late),
            ("early-full", self.early_full),
            ("middle-full", self.middle_full),
            ("late-full", self.late_full),
        ]
    }
}

/// All-sample influence for each stage window and the full run, compared
/// pairwise by Kendall's tau.
pub fn stage_correlation_table(
    trajectory: &TrajectoryStore,
    dataset: &Dataset,
    q: &QuerySpec,
    split: StageSplit,
) -> Result<StageTable> {
    if split.steps != trajectory.steps {
        return Err(Error::InvalidConfig(
            "stage split does not match the run length".into(),
        ));
    }
    let values = |w: TimeWindow| -> Result<Vec<f64>> {
        Ok(compute_influence_all(trajectory, dataset, q, w)?
            .into_iter()
            .map(|r| r.value)
            .collect())
    };
    let early = values(split.early())?;
    let middle = values(split.middle())?;
    let late = values(split.late())?;
    let full = values(split.full())?;
    Ok(StageTable {
        early_middle: kendall_tau(&early, &middle)?,
        early_late: kendall_tau(&early, &late)?,
        middle_late: kendall_tau(&middle, &late)?,
        early_full: kendall_tau(&early, &full)?,
        middle_full: kendall_tau(&middle, &full)?,
        late_full: kendall_tau(&late, &full)?,
    })
}
