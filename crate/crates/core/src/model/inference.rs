//! Gradient-free forward pass with a key/value cache, used for evaluation
//! and free-running latent generation.

use super::encoder::OracleLatents;
use super::transformer::{LatentModel, ModelInput, SlotFill};
use super::vocab;
use crate::error::{Error, Result};
use crate::numkernel::kernels;
use crate::polyomino::Letter;
use crate::scalar::{MatMut, MatRef, Scalar};

/// How the latent slot is filled during a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum LatentMode<'a, T> {
    /// Each step feeds back the model's own previous latent.
    FreeRunning,
    /// Oracle latents z* fill the slot.
    TeacherForced(&'a OracleLatents<T>),
    /// An externally built payload fills the slot.
    Injected(&'a LatentBlock<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum LatentBlock<T> {
    /// `K x d` vectors.
    Vectors(Vec<T>),
    /// The learned pause embedding repeated over the slot.
    Pause,
    /// Empty slot; L_e follows L_s.
    Skip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput<T> {
    /// Logits over options a..d.
    pub logits: [T; 4],
    /// Latents read at L_s and slots 1..K-1 (`K x d`; empty under skip).
    pub latents: Vec<T>,
    /// Vectors actually placed in the latent slots (`K x d`; empty under skip).
    pub slot_inputs: Vec<T>,
}

/// Argmax option; ties go to the earlier letter.
pub fn predict_answer<T: Scalar>(logits: &[T; 4]) -> Letter {
    let mut best = 0;
    for i in 1..4 {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    Letter::ALL[best]
}

struct Cache<T> {
    keys: Vec<Vec<T>>,
    values: Vec<Vec<T>>,
    len: usize,
}

impl<T: Scalar> LatentModel<T> {
    fn embed_row(&self, id: Option<usize>, extra: &[T], position: usize, pause_row: Option<usize>) -> Vec<T> {
        let d = self.d();
        let mut row = vec![T::zero(); d];
        if let Some(id) = id {
            row.copy_from_slice(self.token_embedding(id));
        }
        for (r, &e) in row.iter_mut().zip(extra) {
            *r += e;
        }
        let pos = self.params.tensors[self.ids.pos].row(position);
        for (r, &p) in row.iter_mut().zip(pos) {
            *r += p;
        }
        if let (Some(p), Some(k)) = (self.ids.pause_slots, pause_row) {
            for (r, &v) in row.iter_mut().zip(self.params.tensors[p].row(k)) {
                *r += v;
            }
        }
        row
    }

    /// Runs `m` new embedded rows through every layer, extending the cache.
    /// Returns `(final-norm hidden, residual stream)`, each `m x d`.
    fn step(&self, cache: &mut Cache<T>, mut x: Vec<T>) -> (Vec<T>, Vec<T>) {
        let d = self.d();
        let m = x.len() / d;
        let layout = self.layout();
        let dh = layout.head_dim;
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let p = &self.params.tensors;
        let mut a = vec![T::zero(); m * d];
        for (li, l) in self.ids.layers.iter().enumerate() {
            kernels::layer_norm(&x, d, &p[l.ln1_g].data, &p[l.ln1_b].data, &mut a, None, None);
            let mut qkv = vec![T::zero(); m * 3 * d];
            kernels::linear(&a, m, d, &p[l.w_qkv].data, 3 * d, Some(&p[l.b_qkv].data), &mut qkv);
            for r in 0..m {
                cache.keys[li].extend_from_slice(&qkv[r * 3 * d + d..r * 3 * d + 2 * d]);
                cache.values[li].extend_from_slice(&qkv[r * 3 * d + 2 * d..(r + 1) * 3 * d]);
            }
            let total = cache.len + m;
            let mut att = vec![T::zero(); m * d];
            let mut probs = vec![T::zero(); m * total];
            for h in 0..layout.heads {
                let q = MatRef::block(&qkv, 3 * d, 0, m, h * dh, dh);
                let k = MatRef::block(&cache.keys[li], d, 0, total, h * dh, dh);
                let v = MatRef::block(&cache.values[li], d, 0, total, h * dh, dh);
                kernels::causal_head(
                    q,
                    k,
                    v,
                    cache.len,
                    scale,
                    &mut probs,
                    MatMut::block(&mut att, d, 0, m, h * dh, dh),
                );
            }
            let mut o = vec![T::zero(); m * d];
            kernels::linear(&att, m, d, &p[l.w_o].data, d, Some(&p[l.b_o].data), &mut o);
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv += *ov;
            }
            kernels::layer_norm(&x, d, &p[l.ln2_g].data, &p[l.ln2_b].data, &mut a, None, None);
            let f = self.config.ff_mult * d;
            let mut hid = vec![T::zero(); m * f];
            kernels::linear(&a, m, d, &p[l.w_fc].data, f, Some(&p[l.b_fc].data), &mut hid);
            for v in hid.iter_mut() {
                *v = kernels::gelu(*v);
            }
            let mut out = vec![T::zero(); m * d];
            kernels::linear(&hid, m, f, &p[l.w_proj].data, d, Some(&p[l.b_proj].data), &mut out);
            for (xv, ov) in x.iter_mut().zip(&out) {
                *xv += *ov;
            }
        }
        cache.len += m;
        let mut hf = vec![T::zero(); m * d];
        kernels::layer_norm(&x, d, &p[self.ids.lnf_g].data, &p[self.ids.lnf_b].data, &mut hf, None, None);
        (hf, x)
    }

    fn latent_view<'h>(&self, hf: &'h [T], resid: &'h [T]) -> &'h [T] {
        if self.config.align_after_final_norm {
            hf
        } else {
            resid
        }
    }

    fn letter_logits(&self, h: &[T]) -> [T; 4] {
        let mut out = [T::zero(); 4];
        for (i, o) in out.iter_mut().enumerate() {
            *o = h.iter().zip(self.token_embedding(vocab::LETTER_BASE + i)).map(|(&a, &b)| a * b).sum();
        }
        out
    }

    /// One forward pass over a single sample.
    ///
    /// Under [`LatentMode::FreeRunning`] the hidden state read at L_s is fed
    /// as the first slot input, the state read there as the next, and so on
    /// for K steps; L_e then follows and the option logits are read at L_e.
    pub fn forward(&self, input: &ModelInput<T>, mode: &LatentMode<'_, T>) -> Result<ForwardOutput<T>> {
        let d = self.d();
        let k = self.k();
        let fill = match mode {
            LatentMode::FreeRunning => SlotFill::Skip,
            LatentMode::TeacherForced(z) => {
                if z.k != k || z.d != d {
                    return Err(Error::Shape(format!("oracle latents are {}x{}, model expects {k}x{d}", z.k, z.d)));
                }
                SlotFill::Vectors(&z.vectors)
            }
            LatentMode::Injected(LatentBlock::Vectors(v)) => SlotFill::Vectors(v),
            LatentMode::Injected(LatentBlock::Pause) => SlotFill::Pause,
            LatentMode::Injected(LatentBlock::Skip) => SlotFill::Skip,
        };
        let seq = self.sequence(input, fill)?;
        let n_layers = self.config.n_layers;
        let mut cache = Cache { keys: vec![Vec::new(); n_layers], values: vec![Vec::new(); n_layers], len: 0 };
        let embed = |range: std::ops::Range<usize>| -> Vec<T> {
            range
                .flat_map(|i| self.embed_row(seq.ids[i], &seq.extra[i * d..(i + 1) * d], i, seq.pause_rows[i]))
                .collect()
        };
        if let LatentMode::FreeRunning = mode {
            if seq.latent_start + k + 2 > self.config.max_seq_len {
                return Err(Error::Input("free-running sequence exceeds max_seq_len".into()));
            }
            // Prefix through L_s, then one row per step.
            let (hf, resid) = self.step(&mut cache, embed(0..seq.latent_start + 1));
            let last = seq.latent_start;
            let mut z = self.latent_view(&hf, &resid)[last * d..(last + 1) * d].to_vec();
            let mut latents = z.clone();
            let mut slot_inputs = Vec::with_capacity(k * d);
            for step in 0..k {
                slot_inputs.extend_from_slice(&z);
                let row = self.embed_row(None, &z, seq.latent_start + 1 + step, None);
                let (hf, resid) = self.step(&mut cache, row);
                if step + 1 < k {
                    z = self.latent_view(&hf, &resid).to_vec();
                    latents.extend_from_slice(&z);
                }
            }
            let end = self.embed_row(Some(vocab::LATENT_END), &vec![T::zero(); d], seq.latent_start + 1 + k, None);
            let (hf, _) = self.step(&mut cache, end);
            return Ok(ForwardOutput { logits: self.letter_logits(&hf), latents, slot_inputs });
        }
        let n = seq.len();
        let (hf, resid) = self.step(&mut cache, embed(0..n));
        let le = seq.latent_end();
        let logits = self.letter_logits(&hf[le * d..(le + 1) * d]);
        let src = self.latent_view(&hf, &resid);
        let latents = src[seq.latent_start * d..(seq.latent_start + seq.slots) * d].to_vec();
        let slot_inputs = match fill {
            SlotFill::Vectors(v) => v.to_vec(),
            SlotFill::Pause => (0..k).flat_map(|j| self.pause_vector(j).to_vec()).collect(),
            SlotFill::Skip => Vec::new(),
        };
        Ok(ForwardOutput { logits, latents, slot_inputs })
    }
}
