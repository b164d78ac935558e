//! Dataset loaders: CSV tables and IDX image files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use dit_core::data::{standardize_column, Dataset};
use dit_core::numkit::Sample;

use crate::{LabError, Result};

fn load_err(path: &Path, msg: impl std::fmt::Display) -> LabError {
    LabError::Load(format!("{}: {msg}", path.display()))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Reads a comma-separated file with a header row.
///
/// Features are the numeric columns in the given order, z-scored with the
/// sample standard deviation, followed by a one-hot block per categorical
/// column with levels in sorted order. Labels `0`/`1` are kept as is; any
/// other pair of label values maps the lexicographically smaller one to 0.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    numeric_columns: &[String],
    categorical_columns: &[String],
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| load_err(path, e))?;
    let headers = reader.headers().map_err(|e| load_err(path, e))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| load_err(path, format!("missing column {name:?}")))
    };
    let label_at = column(label_column)?;
    let numeric_at = numeric_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let categorical_at = categorical_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;

    let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); numeric_at.len()];
    let mut categorical: Vec<Vec<String>> = vec![Vec::new(); categorical_at.len()];
    let mut labels: Vec<String> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| load_err(path, format!("line {line}: {e}")))?;
        let field = |k: usize| {
            record
                .get(k)
                .ok_or_else(|| load_err(path, format!("line {line}: missing field {k}")))
        };
        for (col, &k) in numeric.iter_mut().zip(&numeric_at) {
            let raw = field(k)?;
            let v: f64 = raw
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| load_err(path, format!("line {line}: {raw:?} is not a finite number")))?;
            col.push(v);
        }
        for (col, &k) in categorical.iter_mut().zip(&categorical_at) {
            col.push(field(k)?.to_string());
        }
        labels.push(field(label_at)?.to_string());
    }
    if labels.is_empty() {
        return Err(load_err(path, "no data rows"));
    }

    let y = map_labels(&labels).map_err(|m| load_err(path, m))?;
    for (col, name) in numeric.iter_mut().zip(numeric_columns) {
        if !standardize_column(col) {
            eprintln!(
                "warning: {}: column {name:?} is constant; set to zero",
                path.display()
            );
        }
    }
    let levels: Vec<BTreeMap<&str, usize>> = categorical
        .iter()
        .map(|col| {
            let set: BTreeSet<&str> = col.iter().map(|s| s.as_str()).collect();
            set.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
        })
        .collect();
    let d = numeric.len() + levels.iter().map(|l| l.len()).sum::<usize>();
    let samples = (0..labels.len())
        .map(|i| {
            let mut x = Vec::with_capacity(d);
            x.extend(numeric.iter().map(|c| c[i]));
            for (col, lv) in categorical.iter().zip(&levels) {
                let mut block = vec![0.0; lv.len()];
                block[lv[col[i].as_str()]] = 1.0;
                x.extend(block);
            }
            Sample::new(x, y[i])
        })
        .collect();
    Ok(Dataset::new(dataset_name(path), d, samples)?)
}

fn map_labels(labels: &[String]) -> std::result::Result<Vec<f64>, String> {
    let distinct: BTreeSet<&str> = labels.iter().map(|s| s.as_str()).collect();
    if distinct.iter().all(|s| *s == "0" || *s == "1") {
        return Ok(labels.iter().map(|s| if s == "1" { 1.0 } else { 0.0 }).collect());
    }
    if distinct.len() != 2 {
        return Err(format!(
            "label column must have two values, found {}: {:?}",
            distinct.len(),
            distinct.iter().take(5).collect::<Vec<_>>()
        ));
    }
    let first = *distinct.iter().next().expect("two values");
    Ok(labels
        .iter()
        .map(|s| if s == first { 0.0 } else { 1.0 })
        .collect())
}

/// Features and label under a `x0,..,x{d-1},label` header.
pub fn dataset_to_csv(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..dataset.feature_dim()).map(|k| format!("x{k}")).collect();
    header.push("label".into());
    w.write_record(&header)
        .map_err(|e| LabError::Runtime(e.to_string()))?;
    for z in dataset.samples() {
        let mut row: Vec<String> = z.x.iter().map(|v| v.to_string()).collect();
        row.push(z.y.to_string());
        w.write_record(&row)
            .map_err(|e| LabError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| LabError::Runtime(e.to_string()))
}

pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    crate::manifest::write_atomic(path, &dataset_to_csv(dataset)?)
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    Some(u32::from_be_bytes(bytes.get(at..at + 4)?.try_into().ok()?))
}

/// Reads an IDX image file (magic `0x00000803`) and label file (magic
/// `0x00000801`), keeps the two classes, maps `class_a -> 0`, `class_b -> 1`
/// and scales pixels to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path, class_a: u8, class_b: u8) -> Result<Dataset> {
    let images = std::fs::read(images_path).map_err(|e| LabError::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| LabError::io(labels_path, e))?;
    idx_dataset(&images, &labels, class_a, class_b, &dataset_name(images_path))
        .map_err(|m| load_err(images_path, m))
}

fn idx_dataset(
    images: &[u8],
    labels: &[u8],
    class_a: u8,
    class_b: u8,
    name: &str,
) -> std::result::Result<Dataset, String> {
    if class_a == class_b {
        return Err("the two classes must differ".into());
    }
    match be_u32(images, 0) {
        Some(0x803) => {}
        m => return Err(format!("bad image magic {m:08x?}")),
    }
    match be_u32(labels, 0) {
        Some(0x801) => {}
        m => return Err(format!("bad label magic {m:08x?}")),
    }
    let header = |at| be_u32(images, at).ok_or_else(|| "truncated image header".to_string());
    let (count, rows, cols) = (header(4)? as usize, header(8)? as usize, header(12)? as usize);
    let label_count = be_u32(labels, 4).ok_or("truncated label header")? as usize;
    if label_count != count {
        return Err(format!("{count} images but {label_count} labels"));
    }
    let d = rows * cols;
    if images.len() != 16 + count * d {
        return Err(format!(
            "image payload is {} bytes, expected {}",
            images.len() - 16,
            count * d
        ));
    }
    if labels.len() != 8 + count {
        return Err(format!(
            "label payload is {} bytes, expected {count}",
            labels.len() - 8
        ));
    }
    let samples: Vec<Sample> = labels[8..]
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class_a || l == class_b)
        .map(|(i, &l)| {
            let px = &images[16 + i * d..16 + (i + 1) * d];
            let x = px.iter().map(|&b| b as f64 / 255.0).collect();
            Sample::new(x, if l == class_a { 0.0 } else { 1.0 })
        })
        .collect();
    if samples.is_empty() {
        return Err(format!("no samples of class {class_a} or {class_b}"));
    }
    Dataset::new(name, d, samples).map_err(|e| e.to_string())
}
