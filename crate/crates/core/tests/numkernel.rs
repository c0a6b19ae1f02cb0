use latentlab::numkernel::kernels::{softmax_prefix, HeadLayout};
use latentlab::numkernel::{grad_check, GradCheckOptions, ScalarFn, Segment, Tape, Tensor, Var};
use latentlab::{Result, Scalar};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One tape primitive, reduced to a scalar by an MSE against a fixed target
/// (or used directly when it already is a loss).
#[derive(Clone, Debug)]
enum Prim {
    Linear { bias: bool },
    MatMulT,
    Add,
    AddScaled(f64),
    Gelu,
    LayerNorm,
    Gather(Vec<Option<usize>>),
    SelectRows(Vec<usize>),
    Attention { segments: Vec<Segment>, layout: HeadLayout },
    CrossEntropy(Vec<usize>),
    Mse,
    Cosine,
}

struct Case {
    prim: Prim,
    target: Vec<f64>,
}

impl ScalarFn for Case {
    fn build<T: Scalar>(&self, tape: &mut Tape<T>, x: &[Var]) -> Result<Var> {
        let out = match &self.prim {
            Prim::Linear { bias } => tape.linear(x[0], x[1], bias.then(|| x[2]))?,
            Prim::MatMulT => tape.matmul_t(x[0], x[1])?,
            Prim::Add => tape.add(x[0], x[1])?,
            Prim::AddScaled(a) => tape.add_scaled(x[0], x[1], T::lit(*a))?,
            Prim::Gelu => tape.gelu(x[0]),
            Prim::LayerNorm => tape.layer_norm(x[0], x[1], x[2])?,
            Prim::Gather(ids) => tape.gather(x[0], ids.clone())?,
            Prim::SelectRows(r) => tape.select_rows(x[0], r.clone())?,
            Prim::Attention { segments, layout } => tape.causal_attention(x[0], segments.clone(), *layout)?,
            Prim::CrossEntropy(t) => return tape.cross_entropy(x[0], t.clone()),
            Prim::Mse => return tape.mse(x[0], x[1]),
            Prim::Cosine => return tape.cosine_distance(x[0], x[1]),
        };
        let (r, c) = tape.shape(out);
        let t = tape.leaf(r, c, self.target.iter().map(|&v| T::lit(v)).collect(), false)?;
        tape.mse(out, t)
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    // Values representable in f32, so both precisions see the same point.
    Tensor::from_fn(&[rows, cols], |_| rng.random_range(-1.5f64..1.5) as f32 as f64)
}

/// A random instance of `kind` with small random shapes.
fn instance(kind: usize, seed: u64) -> (Case, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..5);
    let k = rng.random_range(1..6);
    let m = rng.random_range(1..5);
    let mut t = |r, c| rand_tensor(&mut rng, r, c);
    let (prim, inputs, out_len) = match kind {
        0 => (Prim::Linear { bias: true }, vec![t(n, k), t(k, m), t(1, m)], n * m),
        1 => (Prim::Linear { bias: false }, vec![t(n, k), t(k, m)], n * m),
        2 => (Prim::MatMulT, vec![t(n, k), t(m, k)], n * m),
        3 => (Prim::Add, vec![t(n, k), t(n, k)], n * k),
        4 => (Prim::AddScaled(0.37), vec![t(n, k), t(n, k)], n * k),
        5 => (Prim::Gelu, vec![t(n, k)], n * k),
        6 => (Prim::LayerNorm, vec![t(n, k + 1), t(1, k + 1), t(1, k + 1)], n * (k + 1)),
        7 => (Prim::Gather(vec![Some(0), None, Some(m - 1), Some(0)]), vec![t(m, k)], 4 * k),
        8 => (Prim::SelectRows(vec![n - 1, 0, n - 1]), vec![t(n, k)], 3 * k),
        9 => {
            let layout = HeadLayout { heads: 2, head_dim: 2 };
            let segments = vec![Segment { start: 0, len: 3 }, Segment { start: 3, len: n }];
            (Prim::Attention { segments, layout }, vec![t(3 + n, 12)], (3 + n) * 4)
        }
        10 => (Prim::CrossEntropy((0..n).map(|i| i % (m + 1)).collect()), vec![t(n, m + 1)], 0),
        11 => (Prim::Mse, vec![t(n, k), t(n, k)], 0),
        _ => (Prim::Cosine, vec![t(n, k + 1), t(n, k + 1)], 0),
    };
    let target = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    (Case { prim, target }, inputs)
}

const KINDS: usize = 13;

#[test]
fn every_primitive_matches_finite_differences_in_f64() {
    for kind in 0..KINDS {
        for seed in 0..6 {
            let (case, inputs) = instance(kind, seed);
            let r = grad_check::<f64, _>(&case, &inputs, GradCheckOptions { step: 1e-5, eps: 1e-6 }).unwrap();
            assert!(r.max_rel_err < 1e-6, "{:?} seed {seed}: {r:?}", case.prim);
        }
    }
}

#[test]
fn every_primitive_matches_finite_differences_in_f32() {
    for kind in 0..KINDS {
        for seed in 0..6 {
            let (case, inputs) = instance(kind, seed);
            let r = grad_check::<f32, _>(&case, &inputs, GradCheckOptions { step: 1e-4, eps: 1e-6 }).unwrap();
            assert!(r.max_rel_err < 1e-3, "{:?} seed {seed}: {r:?}", case.prim);
        }
    }
}

/// One pre-norm transformer block followed by cross-entropy over its rows.
struct Block {
    layout: HeadLayout,
    targets: Vec<usize>,
}

impl ScalarFn for Block {
    fn build<T: Scalar>(&self, tape: &mut Tape<T>, p: &[Var]) -> Result<Var> {
        let (n, _) = tape.shape(p[0]);
        let a = tape.layer_norm(p[0], p[1], p[2])?;
        let qkv = tape.linear(a, p[3], Some(p[4]))?;
        let att = tape.causal_attention(qkv, vec![Segment { start: 0, len: n }], self.layout)?;
        let o = tape.linear(att, p[5], Some(p[6]))?;
        let x = tape.add(p[0], o)?;
        let m = tape.layer_norm(x, p[7], p[8])?;
        let f = tape.linear(m, p[9], Some(p[10]))?;
        let g = tape.gelu(f);
        let h = tape.linear(g, p[11], Some(p[12]))?;
        let y = tape.add(x, h)?;
        tape.cross_entropy(y, self.targets.clone())
    }
}

#[test]
fn transformer_block_with_cross_entropy() {
    let d = 8;
    for seed in 0..3 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut t = |r, c, s: f64| Tensor::from_fn(&[r, c], |_| (rng.random_range(-1.0f64..1.0) * s) as f32 as f64);
        let n = 5;
        let inputs = vec![
            t(n, d, 1.0),
            t(1, d, 1.0),
            t(1, d, 0.2),
            t(d, 3 * d, 0.5),
            t(1, 3 * d, 0.1),
            t(d, d, 0.5),
            t(1, d, 0.1),
            t(1, d, 1.0),
            t(1, d, 0.2),
            t(d, 4 * d, 0.5),
            t(1, 4 * d, 0.1),
            t(4 * d, d, 0.25),
            t(1, d, 0.1),
        ];
        let f = Block { layout: HeadLayout { heads: 2, head_dim: 4 }, targets: vec![1, 3, 0, 7, 2] };
        let r64 = grad_check::<f64, _>(&f, &inputs, GradCheckOptions { step: 1e-5, eps: 1e-6 }).unwrap();
        assert!(r64.max_rel_err < 1e-5, "{r64:?}");
        let r32 = grad_check::<f32, _>(&f, &inputs, GradCheckOptions { step: 1e-4, eps: 1e-5 }).unwrap();
        assert!(r32.max_rel_err < 1e-3, "{r32:?}");
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(row in prop::collection::vec(-50.0f64..50.0, 1..12), cut in 0usize..12) {
        let valid = 1 + cut % row.len();
        let mut r = row.clone();
        softmax_prefix(&mut r, valid);
        prop_assert!(r.iter().all(|&p| p >= 0.0));
        prop_assert!((r[..valid].iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(r[valid..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn forward_is_deterministic(seed in 0u64..1000) {
        let (case, inputs) = instance((seed % KINDS as u64) as usize, seed);
        let run = || {
            let mut tape = Tape::<f32>::new();
            let vars: Vec<Var> = inputs
                .iter()
                .map(|t| { let c = t.cast::<f32>(); tape.leaf(c.rows(), c.cols(), c.data, false).unwrap() })
                .collect();
            let out = case.build(&mut tape, &vars).unwrap();
            tape.scalar_value(out).to_bits()
        };
        prop_assert_eq!(run(), run());
    }
}
