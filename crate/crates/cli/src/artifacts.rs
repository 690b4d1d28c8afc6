//! On-disk outputs: `history.csv`, `centralized_history.csv`,
//! `report.json` and `config.resolved.json`.

use std::path::Path;

use fedsim_core::{AlignedLoss, EpochRecord, EvalReport, GapCheck, ModelSpec, RoundRecord};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub model: ModelSpec,
    pub federated: EvalReport,
    #[serde(default)]
    pub centralized: Option<EvalReport>,
    #[serde(default)]
    pub epsilon_gap: Option<GapCheck>,
    #[serde(default)]
    pub aligned_loss: Vec<AlignedLoss>,
}

impl ReportFile {
    /// Accuracy that stands for the federated arm.
    pub fn federated_accuracy(&self) -> f64 {
        self.federated.accuracy
    }

    /// Accuracy that stands for the pooled-data arm: the centralized block
    /// when present, otherwise the file's only model.
    pub fn pooled_accuracy(&self) -> f64 {
        self.centralized
            .as_ref()
            .map_or(self.federated.accuracy, |c| c.accuracy)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(CliError::io(path))
}

fn label_headers(num_classes: usize) -> impl Iterator<Item = String> {
    (0..num_classes).map(|c| format!("acc_label_{c}"))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// One row per round; `sampled_ids` is `;`-separated, undefined per-label
/// accuracies are left empty.
pub fn write_history(path: &Path, history: &[RoundRecord], num_classes: usize) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header: Vec<String> = ["round", "mean_local_loss", "eval_loss", "accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(label_headers(num_classes));
    header.push("sampled_ids".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for r in history {
        let mut row = vec![
            r.round.to_string(),
            fmt_f64(r.mean_local_loss),
            fmt_f64(r.eval_loss),
            fmt_f64(r.accuracy),
        ];
        row.extend(r.per_label_accuracy.iter().map(|a| fmt_opt(*a)));
        row.push(
            r.sampled
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(";"),
        );
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn write_centralized_history(
    path: &Path,
    history: &[EpochRecord],
    num_classes: usize,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header: Vec<String> = ["epoch", "train_loss", "eval_loss", "accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(label_headers(num_classes));
    w.write_record(&header).map_err(csv_err(path))?;
    for r in history {
        let mut row = vec![
            r.epoch.to_string(),
            fmt_f64(r.train_loss),
            fmt_f64(r.eval_loss),
            fmt_f64(r.accuracy),
        ];
        row.extend(r.per_label_accuracy.iter().map(|a| fmt_opt(*a)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(CliError::io(path))
}
