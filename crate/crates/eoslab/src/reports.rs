//! CSV report writers. Schemas:
//! - training:      step,loss,masked_acc,ms
//! - per-instance:  id,kind,score,semantic,eos,<difficulty axes...>
//! - axis summary:  axis_value,mean,count
//! - patch summary: layer,n_eos,control,frac_clean,frac_cf,frac_neither,count

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use eoslab_core::corpus::TaskKind;
use eoslab_core::diffusion::TrainingRecord;
use eoslab_core::evalmetrics::difficulty_table;
use serde::{Deserialize, Serialize};

/// One evaluated instance, with its difficulty axes (and any sweep axes such
/// as `length` or `eos_pad`) as extra columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: String,
    pub kind: TaskKind,
    pub score: f64,
    pub semantic: usize,
    pub eos: usize,
    pub axes: BTreeMap<String, u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSummaryRow {
    pub layer: usize,
    pub n_eos: usize,
    pub control: String,
    pub frac_clean: f64,
    pub frac_cf: f64,
    pub frac_neither: f64,
    pub count: usize,
}

pub fn write_training_csv(path: &Path, records: &[TrainingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["step", "loss", "masked_acc", "ms"])?;
    for r in records {
        w.write_record([
            r.step.to_string(),
            format!("{:.6}", r.loss),
            format!("{:.6}", r.masked_acc),
            r.ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Union of axis keys across rows becomes the trailing columns; rows missing
/// an axis leave the cell empty.
pub fn write_instance_csv(path: &Path, rows: &[InstanceRow]) -> Result<()> {
    let mut axes: Vec<String> = Vec::new();
    for r in rows {
        for k in r.axes.keys() {
            if !axes.contains(k) {
                axes.push(k.clone());
            }
        }
    }
    axes.sort();
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut header = vec![
        "id".to_string(),
        "kind".to_string(),
        "score".to_string(),
        "semantic".to_string(),
        "eos".to_string(),
    ];
    header.extend(axes.iter().cloned());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.id.clone(),
            r.kind.as_str().to_string(),
            format!("{:.6}", r.score),
            r.semantic.to_string(),
            r.eos.to_string(),
        ];
        for a in &axes {
            rec.push(r.axes.get(a).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instance_csv(path: &Path) -> Result<Vec<InstanceRow>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let mut axes = BTreeMap::new();
        for (i, name) in header.iter().enumerate().skip(5) {
            if let Some(v) = rec.get(i) {
                if !v.is_empty() {
                    axes.insert(name.to_string(), v.parse()?);
                }
            }
        }
        let kind = match rec.get(1).unwrap_or_default() {
            "addition" => TaskKind::Addition,
            "entity" => TaskKind::EntityTracking,
            "sudoku" => TaskKind::Sudoku,
            other => anyhow::bail!("unknown kind `{other}` in {}", path.display()),
        };
        rows.push(InstanceRow {
            id: rec.get(0).unwrap_or_default().to_string(),
            kind,
            score: rec.get(2).unwrap_or_default().parse()?,
            semantic: rec.get(3).unwrap_or_default().parse()?,
            eos: rec.get(4).unwrap_or_default().parse()?,
            axes,
        });
    }
    Ok(rows)
}

/// Mean score per value of one axis: axis_value,mean,count.
pub fn write_axis_summary_csv(path: &Path, rows: &[InstanceRow], axis: &str) -> Result<()> {
    let pairs: Vec<(u32, f64)> = rows
        .iter()
        .filter_map(|r| r.axes.get(axis).map(|&v| (v, r.score)))
        .collect();
    anyhow::ensure!(!pairs.is_empty(), "no rows carry axis `{axis}`");
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["axis_value", "mean", "count"])?;
    for (v, mean, n) in difficulty_table(&pairs) {
        w.write_record([v.to_string(), format!("{mean:.6}"), n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_patch_summary_csv(path: &Path, rows: &[PatchSummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "layer",
        "n_eos",
        "control",
        "frac_clean",
        "frac_cf",
        "frac_neither",
        "count",
    ])?;
    for r in rows {
        w.write_record([
            r.layer.to_string(),
            r.n_eos.to_string(),
            r.control.clone(),
            format!("{:.6}", r.frac_clean),
            format!("{:.6}", r.frac_cf),
            format!("{:.6}", r.frac_neither),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_csv_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        let recs = vec![TrainingRecord { step: 0, loss: 3.5, masked_acc: 0.25, ms: 12 }];
        write_training_csv(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,loss,masked_acc,ms\n"));
        assert!(text.contains("0,3.500000,0.250000,12"));
    }

    #[test]
    fn instance_csv_round_trips_with_axes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let rows = vec![
            InstanceRow {
                id: "a".into(),
                kind: TaskKind::Addition,
                score: 1.0,
                semantic: 2,
                eos: 3,
                axes: [("operand_count".to_string(), 3u32)].into_iter().collect(),
            },
            InstanceRow {
                id: "b".into(),
                kind: TaskKind::Sudoku,
                score: 0.5,
                semantic: 19,
                eos: 0,
                axes: [("empty_cells".to_string(), 4u32)].into_iter().collect(),
            },
        ];
        write_instance_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id,kind,score,semantic,eos,empty_cells,operand_count\n"));
        let back = read_instance_csv(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn axis_summary_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("axis.csv");
        let mk = |v: u32, s: f64| InstanceRow {
            id: format!("{v}-{s}"),
            kind: TaskKind::Addition,
            score: s,
            semantic: 0,
            eos: 0,
            axes: [("operand_count".to_string(), v)].into_iter().collect(),
        };
        write_axis_summary_csv(&path, &[mk(2, 1.0), mk(2, 0.0), mk(3, 1.0)], "operand_count")
            .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "axis_value,mean,count\n2,0.500000,2\n3,1.000000,1\n");
    }
}
