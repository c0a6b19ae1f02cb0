#![allow(dead_code)]

use latentlab::model::{LatentModel, ModelConfig, ModelInput};
use latentlab::numkernel::{grad_check, GradCheckOptions, GradCheckReport, Tensor};
use latentlab::polyomino::{
    build_shape_library, generate_dataset, rasterize, AnalogySample, DatasetConfig, LibraryConfig, LoadedSample,
    PolyominoShape, Split,
};
use latentlab::training::{LatentLoss, TrainObjective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn library() -> Vec<PolyominoShape> {
    build_shape_library(&LibraryConfig::default())
}

pub fn load_in_memory(samples: Vec<AnalogySample>, lib: &[PolyominoShape], split: Split) -> Vec<LoadedSample> {
    samples
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let (input, intermediate) = rasterize(&s, lib, 8).unwrap();
            LoadedSample { id: split.sample_id(i), sample: s, input, intermediate }
        })
        .collect()
}

/// `(train, eval)` samples rendered in memory.
pub fn small_dataset(n_train: usize, n_eval: usize, seed: u64) -> (Vec<LoadedSample>, Vec<LoadedSample>) {
    let lib = library();
    let d = generate_dataset(&DatasetConfig { seed, n_train, n_eval, ..Default::default() }, &lib).unwrap();
    (load_in_memory(d.train, &lib, Split::Train), load_in_memory(d.eval, &lib, Split::Eval))
}

/// A random tiny model and two-item batch, with every parameter moved off
/// its structured initial value.
pub fn micro_objective(seed: u64) -> (TrainObjective, Vec<Tensor<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Layer norm over two features is ill-conditioned (every row maps to
    // +-gamma), which swamps f32 gradients, so widths start at 4.
    let heads = [1, 2][rng.random_range(0..2)];
    let d = [4, 8][rng.random_range(0..2)];
    let config = ModelConfig {
        d_model: d,
        n_layers: rng.random_range(1..3),
        n_heads: heads,
        ff_mult: rng.random_range(1..3),
        max_seq_len: 24,
        latent_size: [1, 2, 4][rng.random_range(0..3)],
        distinct_pause_slots: false,
        ..ModelConfig::default()
    };
    let mut model = LatentModel::<f64>::new(config, seed).unwrap();
    for t in &mut model.params.tensors {
        for v in &mut t.data {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + 0.2 * n) as f32 as f64;
        }
    }
    let (train, _) = small_dataset(2, 1, seed);
    let k = model.k();
    let items = train
        .iter()
        .map(|s| {
            let mut input: ModelInput<f64> = model.encode_input(&s.input, &s.sample).unwrap();
            for v in &mut input.panels {
                *v = *v as f32 as f64;
            }
            let z: Vec<f64> = (0..k * d).map(|_| rng.random_range(-1.0f64..1.0) as f32 as f64).collect();
            (input, z)
        })
        .collect();
    let loss = if rng.random_bool(0.5) { LatentLoss::Mse } else { LatentLoss::Cosine };
    let gamma = (rng.random_range(0.05f64..1.0) as f32) as f64;
    let inputs =
        model.params.tensors.iter().map(|t| Tensor::new(vec![t.rows(), t.cols()], t.data.clone()).unwrap()).collect();
    (TrainObjective { model, items, gamma, loss }, inputs)
}

/// Finite-difference check of the joint objective in f32 against f64
/// central differences.
pub fn objective_grad_check(seed: u64) -> GradCheckReport {
    let (f, inputs) = micro_objective(seed);
    grad_check::<f32, _>(&f, &inputs, GradCheckOptions { step: 1e-4, eps: 1e-4 }).unwrap()
}

type Cells = std::collections::BTreeSet<(i32, i32)>;

fn shift_to_origin(cells: &Cells) -> Cells {
    let r0 = cells.iter().map(|c| c.0).min().unwrap_or(0);
    let c0 = cells.iter().map(|c| c.1).min().unwrap_or(0);
    cells.iter().map(|&(r, c)| (r - r0, c - c0)).collect()
}

/// Quarter turn clockwise by the coordinate loop `(r, c) -> (c, H - 1 - r)`.
pub fn quarter_turn(cells: &Cells) -> Cells {
    let h = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    shift_to_origin(&cells.iter().map(|&(r, c)| (c, h - 1 - r)).collect())
}

fn connected(cells: &Cells) -> bool {
    let Some(&start) = cells.iter().next() else { return false };
    let mut seen = Cells::new();
    let mut stack = vec![start];
    while let Some((r, c)) = stack.pop() {
        if !seen.insert((r, c)) {
            continue;
        }
        for n in [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)] {
            if cells.contains(&n) && !seen.contains(&n) {
                stack.push(n);
            }
        }
    }
    seen.len() == cells.len()
}

/// `(fixed, one-sided, one-sided with four distinct rotations)` counts of
/// `n`-cell polyominoes, by testing every `n`-subset of an `n x n` box that
/// touches row 0 and column 0.
pub fn brute_force_polyomino_counts(n: usize) -> (usize, usize, Vec<Cells>) {
    let box_cells: Vec<(i32, i32)> = (0..n as i32).flat_map(|r| (0..n as i32).map(move |c| (r, c))).collect();
    let mut fixed = std::collections::BTreeSet::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let s: Cells = idx.iter().map(|&i| box_cells[i]).collect();
        if s.iter().any(|c| c.0 == 0) && s.iter().any(|c| c.1 == 0) && connected(&s) {
            fixed.insert(s);
        }
        // Next combination in lexicographic order.
        let m = box_cells.len();
        let mut i = n;
        while i > 0 && idx[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let mut classes: Vec<Cells> = Vec::new();
    let mut asym = Vec::new();
    let mut done = std::collections::BTreeSet::new();
    for s in &fixed {
        if done.contains(s) {
            continue;
        }
        let mut orbit = vec![s.clone()];
        for _ in 0..3 {
            let next = quarter_turn(orbit.last().unwrap());
            orbit.push(next);
        }
        let distinct: std::collections::BTreeSet<_> = orbit.iter().cloned().collect();
        if distinct.len() == 4 {
            asym.push(s.clone());
        }
        done.extend(distinct);
        classes.push(s.clone());
    }
    (fixed.len(), classes.len(), asym)
}

/// Samples where the number of rendered options matching the rendered
/// intermediate shape is not exactly one, or the match is not the answer.
pub fn unique_option_violations(samples: &[LoadedSample]) -> usize {
    use latentlab::polyomino::PanelTag;
    samples
        .iter()
        .filter(|s| {
            let target = s.intermediate.panel_shape(PanelTag::Intermediate).unwrap();
            let hits: Vec<usize> =
                (0..4).filter(|&i| s.input.panel_shape(PanelTag::option(i)).unwrap() == target).collect();
            hits != [s.sample.answer.index()]
        })
        .count()
}
