use crate::data::LabeledDataset;
use crate::error::{config, Result};
use crate::model::{loss_and_gradient, ModelSpec};
use crate::optim::Optimizer;
use crate::params::ParamVector;

/// One pass over `rows` in the given visiting order, one optimizer step per
/// batch of `batch_size` (the last batch may be short). Returns the mean of
/// the per-batch losses observed before each step.
///
/// Both the centralized trainer and every federated client go through this
/// loop, which is what makes a single-client federation reproduce
/// centralized training bit for bit.
pub(crate) fn run_epoch(
    spec: &ModelSpec,
    params: &mut ParamVector,
    optimizer: &mut Optimizer,
    dataset: &LabeledDataset,
    rows: &[usize],
    order: &[usize],
    batch_size: usize,
) -> Result<f64> {
    if batch_size == 0 {
        return Err(config("batch size must be at least 1"));
    }
    let mut total = 0.0;
    let mut batches = 0usize;
    let mut picked = Vec::with_capacity(batch_size);
    for chunk in order.chunks(batch_size) {
        picked.clear();
        picked.extend(chunk.iter().map(|&pos| rows[pos]));
        let batch = dataset.gather(&picked)?;
        let (loss, grad) = loss_and_gradient(spec, params, &batch)?;
        optimizer.step(params, &grad)?;
        total += loss;
        batches += 1;
    }
    Ok(if batches == 0 { 0.0 } else { total / batches as f64 })
}
