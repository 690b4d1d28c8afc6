use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedsim_core::{
    compare_runs, epsilon_gap, evaluate, run_federation, train_centralized, CentralizedConfig,
    Executor, GapCheck,
};

use crate::artifacts::{write_centralized_history, write_history, write_json, ReportFile};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::{EXIT_GAP_FAILED, EXIT_OK};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's `output_dir`.
    pub output: Option<PathBuf>,
    /// Worker threads for client updates; `Some(0)` means one per core.
    /// Results are identical with or without it.
    pub parallel: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub report: ReportFile,
    pub exit_code: u8,
}

fn config_dir(path: &Path) -> &Path {
    path.parent().unwrap_or_else(|| Path::new("."))
}

pub fn cmd_run(config_path: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let exp = config.resolve(config_dir(config_path))?;
    let output_dir = opts
        .output
        .clone()
        .unwrap_or_else(|| exp.config.output_dir.clone());
    std::fs::create_dir_all(&output_dir).map_err(CliError::io(&output_dir))?;

    let executor = match opts.parallel {
        Some(threads) => Executor::parallel(threads)?,
        None => Executor::sequential(),
    };
    let num_classes = exp.fl.model.num_classes();
    let compare = exp.config.compare_centralized;

    let (federated, centralized) = executor.join(
        || run_federation(&exp.fl, &exp.train, exp.shards.clone(), &exp.test, executor.clone()),
        || {
            compare.then(|| {
                train_centralized(&exp.train, &CentralizedConfig::matching(&exp.fl), &exp.test)
            })
        },
    );
    let federated = federated?;
    let centralized = centralized.transpose()?;

    write_history(&output_dir.join("history.csv"), &federated.history, num_classes)?;
    let report = match &centralized {
        Some(central) => {
            write_centralized_history(
                &output_dir.join("centralized_history.csv"),
                &central.history,
                num_classes,
            )?;
            let cmp = compare_runs(&federated, central, &exp.test, exp.config.epsilon)?;
            let gap = *cmp.gap();
            ReportFile {
                model: exp.fl.model,
                federated: cmp.federated,
                centralized: Some(cmp.centralized),
                epsilon_gap: Some(gap),
                aligned_loss: cmp.aligned_loss,
            }
        }
        None => ReportFile {
            model: exp.fl.model,
            federated: evaluate(&federated.model, &federated.params, &exp.test)?,
            centralized: None,
            epsilon_gap: None,
            aligned_loss: Vec::new(),
        },
    };
    write_json(&output_dir.join("report.json"), &report)?;
    write_json(&output_dir.join("config.resolved.json"), &exp.config)?;

    let exit_code = match &report.epsilon_gap {
        Some(gap) if !gap.pass => EXIT_GAP_FAILED,
        _ => EXIT_OK,
    };
    Ok(RunOutcome {
        output_dir,
        report,
        exit_code,
    })
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub gap: GapCheck,
    pub text: String,
    pub exit_code: u8,
}

/// V_FED comes from the first report's federated model, V_SUM from the
/// second report's centralized model (or its only model).
pub fn cmd_compare(fl_report: &Path, pooled_report: &Path, epsilon: f64) -> Result<CompareOutcome, CliError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(CliError::Config(format!("--epsilon must be positive, got {epsilon}")));
    }
    let a = ReportFile::read(fl_report)?;
    let b = ReportFile::read(pooled_report)?;
    if a.model != b.model {
        return Err(CliError::Mismatch(format!(
            "model {:?} vs {:?}",
            a.model, b.model
        )));
    }
    let gap = epsilon_gap(a.federated_accuracy(), b.pooled_accuracy(), epsilon);
    let text = format!(
        "V_FED   {}\nV_SUM   {}\ngap     {}\nepsilon {}\nresult  {}\n",
        gap.v_fed,
        gap.v_sum,
        gap.gap,
        gap.epsilon,
        if gap.pass { "PASS" } else { "FAIL" }
    );
    Ok(CompareOutcome {
        gap,
        text,
        exit_code: if gap.pass { EXIT_OK } else { EXIT_GAP_FAILED },
    })
}

/// Per-client class histograms of the training data, plus a totals row.
pub fn cmd_partition_report(config_path: &Path) -> Result<String, CliError> {
    let config = ExperimentConfig::load(config_path)?;
    let exp = config.resolve(config_dir(config_path))?;
    let num_classes = exp.train.num_classes();
    let mut out = String::new();
    let mut header = format!("{:<8}", "client");
    for c in 0..num_classes {
        let _ = write!(header, "{:>10}", format!("class_{c}"));
    }
    let _ = writeln!(out, "{header}{:>10}", "total");
    let mut totals = vec![0usize; num_classes];
    for shard in &exp.shards {
        let counts = shard.class_counts(&exp.train);
        let _ = write!(out, "{:<8}", shard.owner_id);
        for (c, n) in counts.iter().enumerate() {
            totals[c] += n;
            let _ = write!(out, "{n:>10}");
        }
        let _ = writeln!(out, "{:>10}", shard.len());
    }
    let _ = write!(out, "{:<8}", "total");
    for n in &totals {
        let _ = write!(out, "{n:>10}");
    }
    let _ = writeln!(out, "{:>10}", totals.iter().sum::<usize>());
    Ok(out)
}
