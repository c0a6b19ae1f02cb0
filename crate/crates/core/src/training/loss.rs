//! The joint objective: answer cross-entropy plus weighted latent alignment.

use super::config::LatentLoss;
use crate::error::{Error, Result};
use crate::model::{LatentModel, ModelInput, SlotFill};
use crate::numkernel::{self, ScalarFn, Tape, Var};
use crate::polyomino::{CellKind, GridImage, PanelTag};
use crate::scalar::Scalar;

/// Per-vector alignment distance `l(a, b)`: mean squared error, or one minus
/// cosine similarity.
pub fn latent_distance<T: Scalar>(a: &[T], b: &[T], loss: LatentLoss) -> Result<T> {
    match loss {
        LatentLoss::Mse => numkernel::mse(a, b),
        LatentLoss::Cosine => Ok(T::one() - numkernel::cosine_similarity(a, b)?.value),
    }
}

/// Loss terms of one item.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms<T> {
    pub ce: T,
    pub align: T,
    pub total: T,
}

/// `CE(logits, target) + gamma * (1/K) sum_k l(zhat_k, zstar_k)` for one item,
/// with `zhat` and `zstar` both `K x d`.
pub fn objective_loss<T: Scalar>(
    logits: &[T],
    target: usize,
    zhat: &[T],
    zstar: &[T],
    d: usize,
    gamma: T,
    loss: LatentLoss,
) -> Result<LossTerms<T>> {
    if d == 0 || zhat.len() != zstar.len() || zhat.len() % d != 0 || zhat.is_empty() {
        return Err(Error::Shape(format!("latents of {} and {} values with d = {d}", zhat.len(), zstar.len())));
    }
    let ce = numkernel::cross_entropy(logits, target)?;
    let k = zhat.len() / d;
    let mut align = T::zero();
    for j in 0..k {
        align += latent_distance(&zhat[j * d..(j + 1) * d], &zstar[j * d..(j + 1) * d], loss)?;
    }
    align /= T::lit(k as f64);
    Ok(LossTerms { ce, align, total: ce + gamma * align })
}

/// Batched objective on the tape. `zhat`/`zstar` stack the `K x d` blocks of
/// the aligned items; the alignment term averages over all their rows, which
/// equals the mean over items of the per-item term.
pub fn objective_loss_tape<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    targets: Vec<usize>,
    latents: Option<(Var, Var)>,
    gamma: T,
    loss: LatentLoss,
) -> Result<(Var, Var, Option<Var>)> {
    let ce = tape.cross_entropy(logits, targets)?;
    let Some((zhat, zstar)) = latents else {
        return Ok((ce, ce, None));
    };
    let align = match loss {
        LatentLoss::Mse => tape.mse(zhat, zstar)?,
        LatentLoss::Cosine => tape.cosine_distance(zhat, zstar)?,
    };
    let total = tape.add_scaled(ce, align, gamma)?;
    Ok((total, ce, Some(align)))
}

/// Copy of an input image with every cell of panel B set to MASK.
pub fn mask_input(image: &GridImage) -> Result<GridImage> {
    let rect = image.rect(PanelTag::B)?;
    let mut out = image.clone();
    for r in rect.row..rect.row + rect.height {
        for c in rect.col..rect.col + rect.width {
            out.set(r, c, CellKind::Mask);
        }
    }
    Ok(out)
}

/// The joint objective of a small batch as a function of every model
/// parameter, for finite-difference checks. Inputs to [`ScalarFn::build`] are
/// the parameters in storage order.
pub struct TrainObjective {
    pub model: LatentModel<f64>,
    pub items: Vec<(ModelInput<f64>, Vec<f64>)>,
    pub gamma: f64,
    pub loss: LatentLoss,
}

impl ScalarFn for TrainObjective {
    fn build<T: Scalar>(&self, tape: &mut Tape<T>, inputs: &[Var]) -> Result<Var> {
        let model: LatentModel<T> = self.model.cast();
        let cast = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let inputs_t: Vec<ModelInput<T>> = self
            .items
            .iter()
            .map(|(m, _)| ModelInput { panels: cast(&m.panels), question: m.question.clone(), answer: m.answer })
            .collect();
        let oracle: Vec<Vec<T>> = self.items.iter().map(|(_, z)| cast(z)).collect();
        let batch: Vec<(&ModelInput<T>, SlotFill<'_, T>)> =
            inputs_t.iter().zip(&oracle).map(|(m, z)| (m, SlotFill::Vectors(z))).collect();
        let out = model.forward_tape(tape, inputs, &batch)?;
        let zstar: Vec<T> = oracle.concat();
        let (rows, d) = (zstar.len() / model.d(), model.d());
        let zs = tape.leaf(rows, d, zstar, false)?;
        let targets = self.items.iter().map(|(m, _)| m.answer.index()).collect();
        let latents = out.latents.map(|z| (z, zs));
        let (total, _, _) = objective_loss_tape(tape, out.logits, targets, latents, T::lit(self.gamma), self.loss)?;
        Ok(total)
    }
}
