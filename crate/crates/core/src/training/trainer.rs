use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{TrainConfig, Variant};
use super::loss::{mask_input, objective_loss_tape};
use crate::error::{Error, Result};
use crate::model::{predict_answer, LatentMode, LatentModel, ModelInput, OracleLatents, SlotFill};
use crate::numkernel::{adam_step, AdamConfig, OptimizerState, Tape};
use crate::polyomino::LoadedSample;
use crate::scalar::Scalar;
use crate::seeds::rng_for;

/// A sample encoded for the model, with its oracle latents.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample<T> {
    pub id: String,
    pub input: ModelInput<T>,
    pub oracle: OracleLatents<T>,
}

/// Encodes samples as the given variant sees them (panel B masked for
/// `MaskedLatent`).
pub fn prepare_examples<T: Scalar>(
    model: &LatentModel<T>,
    samples: &[LoadedSample],
    variant: Variant,
) -> Result<Vec<EncodedSample<T>>> {
    samples
        .iter()
        .map(|s| {
            let image = if variant.masks_input() { mask_input(&s.input)? } else { s.input.clone() };
            Ok(EncodedSample {
                id: s.id.clone(),
                input: model.encode_input(&image, &s.sample)?,
                oracle: model.oracle_latents(&s.intermediate, &s.id)?,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuickEval {
    Oracle,
    FreeRunning,
}

/// Fraction of examples answered correctly under teacher forcing or free running.
pub fn accuracy<T: Scalar>(model: &LatentModel<T>, examples: &[EncodedSample<T>], how: QuickEval) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for ex in examples {
        let mode = match how {
            QuickEval::Oracle => LatentMode::TeacherForced(&ex.oracle),
            QuickEval::FreeRunning => LatentMode::FreeRunning,
        };
        let out = model.forward(&ex.input, &mode)?;
        if predict_answer(&out.logits) == ex.input.answer {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_ce: f64,
    pub mean_align: f64,
    pub oracle_acc: f64,
    pub free_running_acc: f64,
    pub wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepEval {
    pub step: u64,
    pub epoch: usize,
    pub oracle_acc: f64,
    pub free_running_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub variant: Variant,
    pub epochs: Vec<EpochRecord>,
    pub step_evals: Vec<StepEval>,
}

impl TrainReport {
    pub const EPOCH_HEADER: &'static str = "epoch,mean_ce,mean_align,oracle_acc,free_running_acc";

    /// Per-epoch metrics. Timings are left out so reruns give identical files.
    pub fn epoch_csv(&self) -> String {
        let mut s = format!("{}\n", Self::EPOCH_HEADER);
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{},{},{}", e.epoch, e.mean_ce, e.mean_align, e.oracle_acc, e.free_running_acc);
        }
        s
    }

    pub fn step_csv(&self) -> String {
        let mut s = String::from("step,epoch,oracle_acc,free_running_acc\n");
        for e in &self.step_evals {
            let _ = writeln!(s, "{},{},{},{}", e.step, e.epoch, e.oracle_acc, e.free_running_acc);
        }
        s
    }
}

/// Optimizer steps `train` will take.
pub fn total_steps(n_train: usize, config: &TrainConfig) -> u64 {
    let micro = n_train.div_ceil(config.per_device_train_batch_size);
    (micro.div_ceil(config.gradient_accumulation_steps) * config.num_train_epochs) as u64
}

/// Trains `model` in place on `train`, evaluating on `eval` at the end of
/// every epoch and every `eval_steps` optimizer steps.
pub fn train<T: Scalar>(
    model: &mut LatentModel<T>,
    train: &[EncodedSample<T>],
    eval: &[EncodedSample<T>],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if config.latent_size != model.k() {
        return Err(Error::Config(format!(
            "train latent_size {} differs from the model's {}",
            config.latent_size,
            model.k()
        )));
    }
    if train.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    let start = Instant::now();
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        warmup_ratio: config.warmup_ratio,
        schedule: config.lr_scheduler_type,
        total_steps: total_steps(train.len(), config),
        ..AdamConfig::default()
    };
    let mut opt = OptimizerState::new(adam, &model.params);
    let mut shuffle_rng = rng_for(config.seed, "shuffle");
    let mut mix_rng = rng_for(config.seed, "mix");
    let gamma = T::lit(config.gamma);
    let accum = config.gradient_accumulation_steps;
    let scale = T::one() / T::lit(accum as f64);
    let mut report = TrainReport { variant: config.variant, epochs: Vec::new(), step_evals: Vec::new() };
    let mut order: Vec<usize> = (0..train.len()).collect();
    model.params.zero_grad();
    for epoch in 1..=config.num_train_epochs {
        order.shuffle(&mut shuffle_rng);
        let batches: Vec<&[usize]> = order.chunks(config.per_device_train_batch_size).collect();
        let (mut ce_sum, mut align_sum, mut seen) = (0.0, 0.0, 0usize);
        for (bi, batch) in batches.iter().enumerate() {
            // Free-running payloads are computed before the tape, without gradients.
            let mixed: Vec<Option<Vec<T>>> = batch
                .iter()
                .map(|&i| {
                    if config.variant.aligns()
                        && config.free_running_mix > 0.0
                        && mix_rng.random::<f64>() < config.free_running_mix
                    {
                        model.forward(&train[i].input, &LatentMode::FreeRunning).map(|o| Some(o.slot_inputs))
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?;
            let items: Vec<(&ModelInput<T>, SlotFill<'_, T>)> = batch
                .iter()
                .zip(&mixed)
                .map(|(&i, m)| {
                    let fill = match (config.variant, m) {
                        (Variant::Pause, _) => SlotFill::Pause,
                        (_, Some(v)) => SlotFill::Vectors(v),
                        (_, None) => SlotFill::Vectors(&train[i].oracle.vectors),
                    };
                    (&train[i].input, fill)
                })
                .collect();
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let out = model.forward_tape(&mut tape, &vars, &items)?;
            let targets: Vec<usize> = batch.iter().map(|&i| train[i].input.answer.index()).collect();
            let latents = match (config.variant.aligns(), out.latents) {
                (true, Some(z)) => {
                    let zstar: Vec<T> =
                        out.latent_items.iter().flat_map(|&j| train[batch[j]].oracle.vectors.iter().copied()).collect();
                    let zs = tape.leaf(zstar.len() / model.d(), model.d(), zstar, false)?;
                    Some((z, zs))
                }
                _ => None,
            };
            let (total, ce, align) =
                objective_loss_tape(&mut tape, out.logits, targets, latents, gamma, config.latent_loss_type)?;
            let total_v = tape.scalar_value(total);
            if !total_v.is_finite() {
                let ids: Vec<&str> = batch.iter().map(|&i| train[i].id.as_str()).collect();
                return Err(Error::NonFinite(format!(
                    "training loss at epoch {epoch}, optimizer step {}, batch {:?}",
                    opt.step, ids
                )));
            }
            tape.backward(total)?;
            for (id, g) in tape.param_grads() {
                model.params.accumulate(id, g, scale);
            }
            let n = batch.len() as f64;
            ce_sum += tape.scalar_value(ce).as_f64() * n;
            align_sum += align.map_or(0.0, |a| tape.scalar_value(a).as_f64()) * n;
            seen += batch.len();
            if (bi + 1) % accum == 0 || bi + 1 == batches.len() {
                adam_step(&mut model.params, &mut opt)?;
                model.params.zero_grad();
                if config.eval_steps > 0 && opt.step % config.eval_steps as u64 == 0 {
                    let rec = StepEval {
                        step: opt.step,
                        epoch,
                        oracle_acc: accuracy(model, eval, QuickEval::Oracle)?,
                        free_running_acc: accuracy(model, eval, QuickEval::FreeRunning)?,
                    };
                    log::debug!("step {} oracle {:.4} free {:.4}", rec.step, rec.oracle_acc, rec.free_running_acc);
                    report.step_evals.push(rec);
                }
            }
        }
        let rec = EpochRecord {
            epoch,
            mean_ce: ce_sum / seen as f64,
            mean_align: align_sum / seen as f64,
            oracle_acc: accuracy(model, eval, QuickEval::Oracle)?,
            free_running_acc: accuracy(model, eval, QuickEval::FreeRunning)?,
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {} ce {:.4} align {:.4} oracle {:.4} free {:.4} ({:.1}s)",
            rec.epoch,
            rec.mean_ce,
            rec.mean_align,
            rec.oracle_acc,
            rec.free_running_acc,
            rec.wall_clock_s
        );
        report.epochs.push(rec);
    }
    Ok(report)
}
