//! CSV artifacts: response maps, point labels, metric logs and ablation
//! tables.

use std::io::{BufRead, Write};

use hpc_core::network::EpochMetrics;
use hpc_core::Point3;

pub fn write_response_csv(mut w: impl Write, points: &[Point3], response: &[f64]) -> std::io::Result<()> {
    writeln!(w, "index,x,y,z,response")?;
    for (i, (p, r)) in points.iter().zip(response).enumerate() {
        writeln!(w, "{i},{},{},{},{r}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// One `index,label` row per point.
pub fn write_label_csv(mut w: impl Write, labels: &[i32]) -> std::io::Result<()> {
    writeln!(w, "index,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    Ok(())
}

/// Reads what [`write_label_csv`] writes. Indices must run 0, 1, 2, ...
pub fn read_label_csv(r: impl BufRead) -> crate::Result<Vec<i32>> {
    let mut labels = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| crate::Error::Body(e.to_string()))?;
        let bad = |msg: &str| crate::Error::Body(format!("label csv line {}: {msg}", n + 1));
        if n == 0 {
            if line.trim() != "index,label" {
                return Err(bad("expected header 'index,label'"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (index, label) = line.trim().split_once(',').ok_or_else(|| bad("expected two fields"))?;
        let index: usize = index.parse().map_err(|_| bad("index is not an integer"))?;
        if index != labels.len() {
            return Err(bad(&format!("expected index {}, found {index}", labels.len())));
        }
        labels.push(label.parse().map_err(|_| bad("label is not an integer"))?);
    }
    Ok(labels)
}

/// Metric log rows. `seconds` is written only when timings are given, so
/// logs of identical runs can be compared byte for byte.
pub fn write_metric_log(mut w: impl Write, epochs: &[EpochMetrics], seconds: Option<&[f64]>) -> std::io::Result<()> {
    match seconds {
        Some(_) => writeln!(w, "epoch,loss,miou,seconds")?,
        None => writeln!(w, "epoch,loss,miou")?,
    }
    for (i, m) in epochs.iter().enumerate() {
        match seconds {
            Some(s) => writeln!(w, "{},{},{},{:.3}", m.epoch, m.loss, m.miou, s[i])?,
            None => writeln!(w, "{},{},{}", m.epoch, m.loss, m.miou)?,
        }
    }
    Ok(())
}

/// A header row plus string cells, rendered as CSV or as aligned text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",") + "\n";
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                self.rows
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = line(&self.header);
        out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
        for r in &self.rows {
            out.push_str(&line(r));
        }
        out
    }
}
