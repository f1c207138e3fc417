use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainConfig;
use crate::autodiff::{adam_step, AdamState, Graph, Tensor};
use crate::data::{balanced_batches, Label, SubjectRecord};
use crate::error::{Error, Result};
use crate::model::{Mode, Model};
use crate::seed;

/// Records scored per eval-mode forward pass.
const EVAL_CHUNK: usize = 64;

/// Stacks the selected ROI rows of each record into `[B, k, T]`, where `T`
/// is the shortest series among `records`; longer series are truncated.
pub fn assemble_batch(records: &[&SubjectRecord], roi_subset: &[usize]) -> Result<Tensor> {
    let t = records
        .iter()
        .map(|r| r.time_len())
        .min()
        .ok_or_else(|| Error::InvalidShape("empty batch".into()))?;
    let k = roi_subset.len();
    let mut data = Vec::with_capacity(records.len() * k * t);
    for r in records {
        let full = r.time_len();
        for &roi in roi_subset {
            if roi >= r.n_rois() {
                return Err(Error::ExperimentConfig(format!(
                    "ROI {roi} out of range for subject {} with {} ROIs",
                    r.subject_id,
                    r.n_rois()
                )));
            }
            data.extend_from_slice(&r.series.data()[roi * full..roi * full + t]);
        }
    }
    Tensor::new(&[records.len(), k, t], data)
}

fn check_subset(roi_subset: &[usize]) -> Result<()> {
    if roi_subset.is_empty() {
        return Err(Error::ExperimentConfig("ROI subset is empty".into()));
    }
    Ok(())
}

/// Trains `model` on `records` restricted to `roi_subset` (fed in the given
/// order). Returns the trained model and the loss of every mini-batch.
pub fn train(
    mut model: Model,
    records: &[&SubjectRecord],
    roi_subset: &[usize],
    config: &TrainConfig,
) -> Result<(Model, Vec<f64>)> {
    check_subset(roi_subset)?;
    config.validate()?;
    let mut losses = Vec::new();
    if config.epochs == 0 {
        return Ok((model, losses));
    }
    let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, "batches"));
    let mut adam = AdamState::new(model.params(), config.learning_rate);
    for _ in 0..config.epochs {
        for batch in balanced_batches(&labels, config.batch_size, &mut rng)? {
            let members: Vec<&SubjectRecord> = batch.iter().map(|&i| records[i]).collect();
            let x = assemble_batch(&members, roi_subset)?;
            let y: Vec<usize> = members.iter().map(|r| r.label.index()).collect();
            let mut g = Graph::new();
            let vars = model.params().bind(&mut g);
            let out = model.forward(&mut g, &vars, &x, Mode::Train)?;
            let loss = g.softmax_cross_entropy(out.logits, &y)?;
            losses.push(g.value(loss).data()[0]);
            let mut grads = g.backward(loss)?;
            model.params_mut().accumulate(&mut grads, &vars)?;
            adam_step(&mut adam, model.params_mut(), config.l2_factor)?;
            model.apply_moments(&out.moments);
        }
    }
    Ok((model, losses))
}

/// Eval-mode class predictions (argmax of the logits, ties to HC).
pub fn predict(model: &Model, records: &[&SubjectRecord], roi_subset: &[usize]) -> Result<Vec<Label>> {
    check_subset(roi_subset)?;
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(EVAL_CHUNK) {
        let logits = model.classify_forward(&assemble_batch(chunk, roi_subset)?)?;
        for row in logits.data().chunks(2) {
            out.push(if row[1] > row[0] { Label::Adhd } else { Label::Hc });
        }
    }
    Ok(out)
}

/// Fraction of `records` whose predicted class matches the label.
pub fn evaluate_fold(model: &Model, records: &[&SubjectRecord], roi_subset: &[usize]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Evaluation("empty test set".into()));
    }
    let predicted = predict(model, records, roi_subset)?;
    let correct = predicted.iter().zip(records).filter(|(p, r)| **p == r.label).count();
    Ok(correct as f64 / records.len() as f64)
}
