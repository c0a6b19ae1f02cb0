//! Parameters, input layout and the differentiable batched forward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::encoder::{oracle_latents, GridEncoder, OracleLatents};
use super::vocab::{self, Vocab};
use crate::error::{Error, Result};
use crate::numkernel::kernels::HeadLayout;
use crate::numkernel::{ParamStore, Segment, Tape, Tensor, Var};
use crate::polyomino::{AnalogySample, GridImage, Letter, PanelTag};
use crate::scalar::Scalar;

/// Encoded prompt of one sample: pooled panel features and question tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T> {
    /// `7 x d`: panels A, B, C, a, b, c, d.
    pub panels: Vec<T>,
    pub question: Vec<usize>,
    pub answer: Letter,
}

/// What occupies the latent slot between L_s and L_e.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlotFill<'a, T> {
    /// K vectors fed directly as the slot inputs.
    Vectors(&'a [T]),
    /// The learned pause embedding in every slot.
    Pause,
    /// No slot: L_e follows L_s immediately.
    Skip,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LayerIds {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ParamIds {
    pub tok: usize,
    pub pos: usize,
    pub layers: Vec<LayerIds>,
    pub lnf_g: usize,
    pub lnf_b: usize,
    pub pause_slots: Option<usize>,
}

/// Names and shapes of every parameter, in storage order.
pub fn param_schema(config: &ModelConfig, vocab_len: usize) -> Vec<(String, Vec<usize>)> {
    let d = config.d_model;
    let f = config.ff_mult * d;
    let mut s = vec![("tok_emb".to_string(), vec![vocab_len, d]), ("pos_emb".to_string(), vec![config.max_seq_len, d])];
    for l in 0..config.n_layers {
        let p = |n: &str| format!("layers.{l}.{n}");
        s.extend([
            (p("ln1.gamma"), vec![d]),
            (p("ln1.beta"), vec![d]),
            (p("attn.w_qkv"), vec![d, 3 * d]),
            (p("attn.b_qkv"), vec![3 * d]),
            (p("attn.w_out"), vec![d, d]),
            (p("attn.b_out"), vec![d]),
            (p("ln2.gamma"), vec![d]),
            (p("ln2.beta"), vec![d]),
            (p("mlp.w_fc"), vec![d, f]),
            (p("mlp.b_fc"), vec![f]),
            (p("mlp.w_proj"), vec![f, d]),
            (p("mlp.b_proj"), vec![d]),
        ]);
    }
    s.push(("lnf.gamma".to_string(), vec![d]));
    s.push(("lnf.beta".to_string(), vec![d]));
    if config.distinct_pause_slots {
        s.push(("pause_slots".to_string(), vec![config.latent_size, d]));
    }
    s
}

fn param_ids(config: &ModelConfig) -> ParamIds {
    let layers = (0..config.n_layers)
        .map(|l| {
            let b = 2 + 12 * l;
            LayerIds {
                ln1_g: b,
                ln1_b: b + 1,
                w_qkv: b + 2,
                b_qkv: b + 3,
                w_o: b + 4,
                b_o: b + 5,
                ln2_g: b + 6,
                ln2_b: b + 7,
                w_fc: b + 8,
                b_fc: b + 9,
                w_proj: b + 10,
                b_proj: b + 11,
            }
        })
        .collect();
    let end = 2 + 12 * config.n_layers;
    ParamIds {
        tok: 0,
        pos: 1,
        layers,
        lnf_g: end,
        lnf_b: end + 1,
        pause_slots: config.distinct_pause_slots.then_some(end + 2),
    }
}

/// Decoder-only transformer over panel tokens, question tokens and a
/// latent slot, with a frozen grid encoder in front.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentModel<T> {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub encoder: GridEncoder,
    pub params: ParamStore<T>,
    pub(crate) ids: ParamIds,
}

/// Token rows of one sequence before embedding.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SequenceLayout<T> {
    /// Token id per row, `None` where the row is a pure vector.
    pub ids: Vec<Option<usize>>,
    /// Added vector per row (`n x d`, zeros where unused).
    pub extra: Vec<T>,
    /// Row index into the distinct pause table, per row.
    pub pause_rows: Vec<Option<usize>>,
    pub latent_start: usize,
    /// Number of slot rows between L_s and L_e.
    pub slots: usize,
}

impl<T> SequenceLayout<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn latent_end(&self) -> usize {
        self.latent_start + self.slots + 1
    }
}

/// Outputs of [`LatentModel::forward_tape`].
pub struct TapeForward {
    /// `B x 4` option logits.
    pub logits: Var,
    /// `(sum of K over items with vector or pause slots) x d` latents.
    pub latents: Option<Var>,
    /// Items contributing to `latents`, in row order.
    pub latent_items: Vec<usize>,
}

impl<T: Scalar> LatentModel<T> {
    /// Fresh model: token embeddings `N(0, token_init_std^2)`, zero position
    /// table, unit layer-norm gains, linear weights and biases
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(config: ModelConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = Vocab::from_template();
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let normal = Normal::new(0.0, config.token_init_std).map_err(|e| Error::Config(e.to_string()))?;
        let mut params = ParamStore::default();
        for (name, shape) in param_schema(&config, vocab.len()) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name == "tok_emb" || name == "pause_slots" {
                (0..n).map(|_| normal.sample(&mut rng)).collect()
            } else if name == "pos_emb" || name.ends_with(".beta") {
                vec![0.0; n]
            } else if name.ends_with(".gamma") {
                vec![1.0; n]
            } else {
                let fan_in = if shape.len() == 2 { shape[0] } else { bias_fan_in(&name, &config) };
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.push(name, Tensor::new(shape, data.into_iter().map(T::lit).collect())?);
        }
        let encoder = GridEncoder::new(config.d_model, config.panel, config.encoder_seed);
        let ids = param_ids(&config);
        Ok(LatentModel { config, vocab, encoder, params, ids })
    }

    /// Rebuilds a model around stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let vocab = Vocab::from_template();
        let schema = param_schema(&config, vocab.len());
        if schema.len() != params.len() {
            return Err(Error::Checkpoint(format!("expected {} parameters, found {}", schema.len(), params.len())));
        }
        for ((name, shape), (pn, t)) in schema.iter().zip(params.names.iter().zip(&params.tensors)) {
            if name != pn || shape != &t.shape {
                return Err(Error::Checkpoint(format!("parameter {pn} {:?} does not match {name} {shape:?}", t.shape)));
            }
            if !t.all_finite() {
                return Err(Error::Checkpoint(format!("parameter {pn} has non-finite values")));
            }
        }
        let encoder = GridEncoder::new(config.d_model, config.panel, config.encoder_seed);
        let ids = param_ids(&config);
        let mut params = params;
        for t in params.tensors.iter_mut() {
            if !t.requires_grad {
                *t = std::mem::replace(t, Tensor::zeros(&[0])).trainable();
            }
        }
        Ok(LatentModel { config, vocab, encoder, params, ids })
    }

    pub fn cast<U: Scalar>(&self) -> LatentModel<U> {
        LatentModel {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            encoder: self.encoder.clone(),
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    pub fn d(&self) -> usize {
        self.config.d_model
    }

    pub fn k(&self) -> usize {
        self.config.latent_size
    }

    pub fn layout(&self) -> HeadLayout {
        HeadLayout { heads: self.config.n_heads, head_dim: self.config.head_dim() }
    }

    pub fn encode_input(&self, image: &GridImage, sample: &AnalogySample) -> Result<ModelInput<T>> {
        Ok(ModelInput {
            panels: self.encoder.panel_means(image, &PanelTag::INPUT)?,
            question: self.vocab.tokenize_question(&sample.question)?,
            answer: sample.answer,
        })
    }

    pub fn oracle_latents(&self, intermediate: &GridImage, source: &str) -> Result<OracleLatents<T>> {
        oracle_latents(intermediate, &self.encoder, self.k(), source)
    }

    /// Token embedding row of `id`.
    pub fn token_embedding(&self, id: usize) -> &[T] {
        self.params.tensors[self.ids.tok].row(id)
    }

    /// Vector that fills latent slot `k` for [`SlotFill::Pause`].
    pub fn pause_vector(&self, k: usize) -> &[T] {
        match self.ids.pause_slots {
            Some(p) => self.params.tensors[p].row(k),
            None => self.token_embedding(vocab::PAUSE),
        }
    }

    pub(crate) fn sequence(&self, input: &ModelInput<T>, fill: SlotFill<'_, T>) -> Result<SequenceLayout<T>> {
        let d = self.d();
        let k = self.k();
        if input.panels.len() != 7 * d {
            return Err(Error::Shape(format!("input has {} panel values, expected {}", input.panels.len(), 7 * d)));
        }
        let mut ids: Vec<Option<usize>> = vec![Some(vocab::BOS)];
        let mut extra = vec![T::zero(); d];
        for i in 0..7 {
            ids.push(Some(vocab::panel_tag(i)));
            extra.extend_from_slice(&input.panels[i * d..(i + 1) * d]);
        }
        for &q in &input.question {
            if q >= self.vocab.len() {
                return Err(Error::Input(format!("token id {q} outside the vocabulary")));
            }
            ids.push(Some(q));
            extra.extend(std::iter::repeat_n(T::zero(), d));
        }
        let latent_start = ids.len();
        ids.push(Some(vocab::LATENT_START));
        extra.extend(std::iter::repeat_n(T::zero(), d));
        let mut pause_rows = vec![None; ids.len()];
        let slots = match fill {
            SlotFill::Skip => 0,
            SlotFill::Vectors(v) => {
                if v.len() != k * d {
                    return Err(Error::Shape(format!("latent payload has {} values, expected {}", v.len(), k * d)));
                }
                ids.extend(std::iter::repeat_n(None, k));
                pause_rows.extend(std::iter::repeat_n(None, k));
                extra.extend_from_slice(v);
                k
            }
            SlotFill::Pause => {
                match self.ids.pause_slots {
                    Some(_) => {
                        ids.extend(std::iter::repeat_n(None, k));
                        pause_rows.extend((0..k).map(Some));
                    }
                    None => {
                        ids.extend(std::iter::repeat_n(Some(vocab::PAUSE), k));
                        pause_rows.extend(std::iter::repeat_n(None, k));
                    }
                }
                extra.extend(std::iter::repeat_n(T::zero(), k * d));
                k
            }
        };
        ids.push(Some(vocab::LATENT_END));
        pause_rows.push(None);
        extra.extend(std::iter::repeat_n(T::zero(), d));
        if ids.len() > self.config.max_seq_len {
            return Err(Error::Input(format!(
                "sequence of {} exceeds max_seq_len {}",
                ids.len(),
                self.config.max_seq_len
            )));
        }
        Ok(SequenceLayout { ids, extra, pause_rows, latent_start, slots })
    }

    /// Registers every parameter on `tape`, returning vars in storage order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.params.tensors.iter().enumerate().map(|(i, t)| tape.param(i, t)).collect()
    }

    /// Packed forward pass of a batch on the tape, with parameters taken
    /// from `vars` (as returned by [`LatentModel::bind`], or leaves).
    pub fn forward_tape(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        items: &[(&ModelInput<T>, SlotFill<'_, T>)],
    ) -> Result<TapeForward> {
        if vars.len() != self.params.len() {
            return Err(Error::Shape(format!("{} parameter vars for {} parameters", vars.len(), self.params.len())));
        }
        if items.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let d = self.d();
        let mut ids = Vec::new();
        let mut extra = Vec::new();
        let mut pos = Vec::new();
        let mut pause = Vec::new();
        let mut segments = Vec::new();
        let mut answer_rows = Vec::new();
        let mut latent_rows = Vec::new();
        let mut latent_items = Vec::new();
        for (i, (input, fill)) in items.iter().enumerate() {
            let seq = self.sequence(input, *fill)?;
            let start = ids.len();
            segments.push(Segment { start, len: seq.len() });
            pos.extend((0..seq.len()).map(Some));
            answer_rows.push(start + seq.latent_end());
            if seq.slots > 0 {
                latent_items.push(i);
                // z_1 is read at L_s, z_{k+1} at slot k.
                latent_rows.extend((0..seq.slots).map(|j| start + seq.latent_start + j));
            }
            ids.extend(seq.ids);
            extra.extend(seq.extra);
            pause.extend(seq.pause_rows);
        }
        let n = ids.len();
        let tok = tape.gather(vars[self.ids.tok], ids)?;
        let ex = tape.leaf(n, d, extra, false)?;
        let mut x = tape.add(tok, ex)?;
        let pe = tape.gather(vars[self.ids.pos], pos)?;
        x = tape.add(x, pe)?;
        if let Some(p) = self.ids.pause_slots {
            if pause.iter().any(Option::is_some) {
                let pr = tape.gather(vars[p], pause)?;
                x = tape.add(x, pr)?;
            }
        }
        let layout = self.layout();
        for l in &self.ids.layers {
            let a = tape.layer_norm(x, vars[l.ln1_g], vars[l.ln1_b])?;
            let qkv = tape.linear(a, vars[l.w_qkv], Some(vars[l.b_qkv]))?;
            let att = tape.causal_attention(qkv, segments.clone(), layout)?;
            let o = tape.linear(att, vars[l.w_o], Some(vars[l.b_o]))?;
            x = tape.add(x, o)?;
            let m = tape.layer_norm(x, vars[l.ln2_g], vars[l.ln2_b])?;
            let f = tape.linear(m, vars[l.w_fc], Some(vars[l.b_fc]))?;
            let g = tape.gelu(f);
            let p = tape.linear(g, vars[l.w_proj], Some(vars[l.b_proj]))?;
            x = tape.add(x, p)?;
        }
        let hf = tape.layer_norm(x, vars[self.ids.lnf_g], vars[self.ids.lnf_b])?;
        let ans = tape.select_rows(hf, answer_rows)?;
        let letters = tape.select_rows(vars[self.ids.tok], (0..4).map(|i| vocab::LETTER_BASE + i).collect())?;
        let logits = tape.matmul_t(ans, letters)?;
        let latents = if latent_rows.is_empty() {
            None
        } else {
            let src = if self.config.align_after_final_norm { hf } else { x };
            Some(tape.select_rows(src, latent_rows)?)
        };
        Ok(TapeForward { logits, latents, latent_items })
    }
}

fn bias_fan_in(name: &str, c: &ModelConfig) -> usize {
    if name.ends_with("mlp.b_proj") {
        c.ff_mult * c.d_model
    } else {
        c.d_model
    }
}
