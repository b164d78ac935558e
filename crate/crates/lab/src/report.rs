//! Tables rendered as CSV and aligned text, mean ± std summaries and SVG
//! line plots.

use crate::{LabError, Result};

/// Sample mean and standard deviation (`n - 1` divisor); one value has
/// standard deviation 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

/// `0.99±0.01`
pub fn format_pm(mean: f64, std: f64) -> String {
    format!("{mean:.2}±{std:.2}")
}

pub fn summarize(xs: &[f64]) -> String {
    let (m, s) = mean_std(xs);
    format_pm(m, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let err = |e: csv::Error| LabError::Runtime(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| LabError::Runtime(e.to_string()))
    }

    /// Columns padded to the widest cell; first column left-aligned, the
    /// rest right-aligned.
    pub fn to_text(&self) -> String {
        let cols = self.headers.len();
        let width = |c: usize| {
            std::iter::once(&self.headers[c])
                .chain(self.rows.iter().map(|r| &r[c]))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        };
        let widths: Vec<usize> = (0..cols).map(width).collect();
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (c, cell) in cells.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    out += cell;
                    out += &" ".repeat(pad);
                } else {
                    out += "  ";
                    out += &" ".repeat(pad);
                    out += cell;
                }
            }
            out.trim_end().to_string() + "\n"
        };
        let mut out = line(&self.headers);
        let rule = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
        out += &"-".repeat(rule);
        out.push('\n');
        for r in &self.rows {
            out += &line(r);
        }
        out
    }
}

/// Shortest round-trip decimal form; identical values print identically.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Line plot of several series over a shared x axis `0..len`.
pub fn svg_lines(title: &str, x_label: &str, series: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let finite = series
        .iter()
        .flat_map(|(_, ys)| ys.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo <= 0.0 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let len = series.iter().map(|(_, ys)| ys.len()).max().unwrap_or(0);
    let sx = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len.max(2) - 1) as f64;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out += &format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
    out += &format!(
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>\n",
        b = H - PAD,
        r = W - PAD
    );
    out += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        W / 2.0,
        H - 12.0,
        escape(x_label)
    );
    for (v, y) in [(lo, sy(lo)), (hi, sy(hi))] {
        out += &format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{v:.3}</text>\n",
            PAD - 4.0,
            y + 4.0
        );
    }
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = ys
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", sx(i), sy(v)))
            .collect();
        out += &format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            pts.join(" ")
        );
        out += &format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            W - PAD - 150.0,
            PAD + 16.0 * k as f64,
            escape(name)
        );
    }
    out += "</svg>\n";
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_has_zero_std() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        assert_eq!(summarize(&[0.7]), "0.70±0.00");
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(format_pm(64.746, 7.2049), "64.75±7.20");
    }

    #[test]
    fn csv_and_text() {
        let mut t = Table::new(["method", "tau"]);
        t.push(["dit", "0.95±0.01"]);
        t.push(["if,x", "0.5"]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "method,tau\ndit,0.95±0.01\n\"if,x\",0.5\n");
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "method        tau");
        assert_eq!(lines[1], "-----------------");
        assert_eq!(lines[2], "dit     0.95±0.01");
        assert_eq!(lines[3], "if,x          0.5");
    }

    #[test]
    fn svg_is_well_formed() {
        let s = svg_lines(
            "a<b",
            "epoch",
            &[("x".into(), vec![1.0, 2.0, 0.5]), ("y".into(), vec![1.0; 3])],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert!(s.contains("a&lt;b"));
        let flat = svg_lines("t", "e", &[("c".into(), vec![0.0; 4])]);
        assert!(!flat.contains("NaN"));
    }
}
