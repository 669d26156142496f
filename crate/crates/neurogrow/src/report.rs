//! Run outputs: `stages.csv`, `inactivity.csv` and `summary.json`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{InactivityStudy, RunReport, StageRecord};

pub const STAGES_CSV: &str = "stages.csv";
pub const INACTIVITY_CSV: &str = "inactivity.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Column order of `stages.csv`.
pub const STAGE_COLUMNS: &[&str] = &[
    "seed",
    "stage",
    "widths_before",
    "widths_after",
    "plan",
    "total_width",
    "adjustment_passes",
    "epochs",
    "best_epoch",
    "train_loss",
    "train_accuracy",
    "val_loss",
    "val_accuracy",
    "test_loss",
    "test_accuracy",
    "total_neurons",
    "inactive_total",
    "new_total",
    "inactive_new",
    "inactive_new_pct",
    "inactive_new_at_insert",
    "seconds",
];

/// Columns that depend on the machine rather than the computation.
pub const TIMING_COLUMNS: &[&str] = &["seconds"];

pub const INACTIVITY_COLUMNS: &[&str] = &[
    "seed",
    "extender",
    "width_before",
    "width_after",
    "base_epochs",
    "new_total",
    "inactive_new",
    "inactive_new_pct",
    "inactive_new_at_insert",
    "test_loss",
    "test_accuracy",
];

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn stage_row(r: &StageRecord) -> Vec<String> {
    let t = r.inactivity.totals();
    vec![
        r.seed.to_string(),
        r.stage.to_string(),
        join(&r.widths_before),
        join(&r.widths_after),
        join(&r.plan.per_layer_counts),
        r.total_width().to_string(),
        r.adjustment_passes.to_string(),
        r.epochs.to_string(),
        r.best_epoch.to_string(),
        r.train.loss.to_string(),
        opt(r.train.accuracy),
        r.val.loss.to_string(),
        opt(r.val.accuracy),
        r.test.loss.to_string(),
        opt(r.test.accuracy),
        t.total_neurons.to_string(),
        t.inactive_total.to_string(),
        t.new_total.to_string(),
        t.inactive_new.to_string(),
        t.inactive_new_pct().to_string(),
        r.inactive_new_at_insert.to_string(),
        r.seconds.to_string(),
    ]
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Report(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Report(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `stages.csv` and `summary.json` into `out_dir`, creating it.
pub fn emit_reports(report: &RunReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows = report.runs.iter().flat_map(|r| r.stages.iter().map(stage_row));
    write_csv(&out_dir.join(STAGES_CSV), STAGE_COLUMNS, rows)?;
    write_json(&out_dir.join(SUMMARY_JSON), report)
}

/// Writes `inactivity.csv` and `summary.json` into `out_dir`, creating it.
pub fn emit_inactivity(study: &InactivityStudy, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let rows = study.records.iter().map(|r| {
        vec![
            r.seed.to_string(),
            r.extender.name().to_string(),
            r.width_before.to_string(),
            r.width_after.to_string(),
            r.base_epochs.to_string(),
            r.new_total.to_string(),
            r.inactive_new.to_string(),
            r.inactive_new_pct.to_string(),
            r.inactive_new_at_insert.to_string(),
            r.test_loss.to_string(),
            opt(r.test_accuracy),
        ]
    });
    write_csv(&out_dir.join(INACTIVITY_CSV), INACTIVITY_COLUMNS, rows)?;
    write_json(&out_dir.join(SUMMARY_JSON), study)
}

/// Reads a CSV written by this module, dropping the named columns.
pub fn read_csv_without(path: &Path, drop: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::Report(e.to_string()))?.clone();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !drop.contains(&&header[i])).collect();
    let mut out = vec![keep.iter().map(|&i| header[i].to_string()).collect()];
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Report(e.to_string()))?;
        out.push(keep.iter().map(|&i| rec[i].to_string()).collect());
    }
    Ok(out)
}
