mod common;

use std::collections::{BTreeSet, HashSet};

use latentlab::model::oracle_latents;
use latentlab::model::GridEncoder;
use latentlab::polyomino::{
    build_shape_library, generate_dataset, generate_sample, rasterize, rotate, write_dataset, AnalogySample, CellKind,
    DatasetConfig, Family, GridImage, LibraryConfig, PanelTag, Rotation,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TURNS: [Rotation; 4] = Rotation::ALL;

#[test]
fn library_matches_brute_force_enumeration() {
    let lib = build_shape_library(&LibraryConfig::default());
    // Fixed / one-sided totals are the standard sequence values; the
    // asymmetric counts are what the filter keeps.
    let expected = [(Family::Tetromino, 19, 7, 3), (Family::Pentomino, 63, 18, 14), (Family::Hexomino, 216, 60, 48)];
    for (family, fixed, one_sided, asym) in expected {
        let (f, o, shapes) = common::brute_force_polyomino_counts(family.size());
        assert_eq!((f, o, shapes.len()), (fixed, one_sided, asym), "{family:?}");
        // Every library shape of the family is one of the enumerated classes up to rotation.
        let ours: Vec<BTreeSet<(i32, i32)>> =
            lib.iter().filter(|s| s.family == family).map(|s| s.cells.iter().copied().collect()).collect();
        assert_eq!(ours.len(), asym);
        let canon = |c: &BTreeSet<(i32, i32)>| {
            let mut o = vec![c.clone()];
            for _ in 0..3 {
                let n = common::quarter_turn(o.last().unwrap());
                o.push(n);
            }
            o.into_iter().min().unwrap()
        };
        let a: BTreeSet<_> = ours.iter().map(canon).collect();
        let b: BTreeSet<_> = shapes.iter().map(canon).collect();
        assert_eq!(a, b, "{family:?}");
    }
    let square: BTreeSet<(i32, i32)> = [(0, 0), (0, 1), (1, 0), (1, 1)].into();
    assert!(lib.iter().all(|s| s.cells.iter().copied().collect::<BTreeSet<_>>() != square));
}

#[test]
fn rotation_is_a_cyclic_group_on_every_shape() {
    for s in build_shape_library(&LibraryConfig::default()) {
        assert_eq!(rotate(&s, Rotation::R0), s);
        let mut r = s.clone();
        for _ in 0..4 {
            r = rotate(&r, Rotation::R90);
        }
        assert_eq!(r, s);
        assert_eq!(rotate(&rotate(&s, Rotation::R90), Rotation::R270), s);
        assert_eq!(rotate(&rotate(&s, Rotation::R90), Rotation::R90), rotate(&s, Rotation::R180));
        let looped: BTreeSet<(i32, i32)> = common::quarter_turn(&s.cells.iter().copied().collect());
        assert_eq!(rotate(&s, Rotation::R90).cells.iter().copied().collect::<BTreeSet<_>>(), looped);
        let all: HashSet<Vec<(i32, i32)>> = TURNS.iter().map(|&t| rotate(&s, t).cells).collect();
        assert_eq!(all.len(), 4, "{}", s.name);
        for t in TURNS {
            assert_eq!(rotate(&s, t).cells.len(), s.family.size());
        }
    }
}

#[test]
fn generated_splits_are_deterministic_disjoint_and_verified() {
    let lib = build_shape_library(&LibraryConfig::default());
    let cfg = DatasetConfig { n_train: 400, n_eval: 400, seed: 9, ..Default::default() };
    let a = generate_dataset(&cfg, &lib).unwrap();
    assert_eq!(a, generate_dataset(&cfg, &lib).unwrap());
    let train: HashSet<_> = a.train.iter().map(AnalogySample::tuple_key).collect();
    let eval: HashSet<_> = a.eval.iter().map(AnalogySample::tuple_key).collect();
    assert_eq!(train.len(), 400);
    assert!(train.is_disjoint(&eval));
    for split in [&a.train, &a.eval] {
        for (i, f) in latentlab::polyomino::letter_mix(split).iter().enumerate() {
            assert!((f - 0.25).abs() <= 0.03, "letter {i}: {f}");
        }
    }
    let loaded = common::load_in_memory(a.eval, &lib, latentlab::polyomino::Split::Eval);
    assert_eq!(common::unique_option_violations(&loaded), 0);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let small = generate_dataset(&DatasetConfig { n_train: 6, n_eval: 3, ..Default::default() }, &lib).unwrap();
    let f1 = write_dataset(d1.path(), &small, &lib, 8).unwrap();
    let f2 = write_dataset(d2.path(), &small, &lib, 8).unwrap();
    for (p, q) in f1.iter().zip(&f2) {
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
}

#[test]
fn identity_samples_show_unrotated_c() {
    let lib = build_shape_library(&LibraryConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut seen = 0;
    while seen < 10 {
        let s = generate_sample(&mut rng, &lib).unwrap();
        if s.transform != Rotation::R0 {
            continue;
        }
        seen += 1;
        let (input, _) = rasterize(&s, &lib, 8).unwrap();
        let c = lib.iter().find(|x| x.name == s.shape_c).unwrap();
        assert_eq!(input.panel_shape(PanelTag::option(s.answer.index())).unwrap(), c.cells);
        assert_eq!(s.option_transforms[s.answer.index()].description(), "identity");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rasterized_panels_recover_every_shape(seed in any::<u64>()) {
        let lib = build_shape_library(&LibraryConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = generate_sample(&mut rng, &lib).unwrap();
        let (input, inter) = rasterize(&s, &lib, 8).unwrap();
        let a = lib.iter().find(|x| x.name == s.shape_a).unwrap();
        let c = lib.iter().find(|x| x.name == s.shape_c).unwrap();
        prop_assert_eq!(input.panel_shape(PanelTag::A).unwrap(), a.cells.clone());
        prop_assert_eq!(input.panel_shape(PanelTag::B).unwrap(), rotate(a, s.transform).cells);
        prop_assert_eq!(input.panel_shape(PanelTag::C).unwrap(), c.cells.clone());
        for i in 0..4 {
            prop_assert_eq!(input.panel_shape(PanelTag::option(i)).unwrap(), rotate(c, s.option_transforms[i]).cells);
        }
        prop_assert_eq!(inter.panel_shape(PanelTag::Intermediate).unwrap(), rotate(c, s.transform).cells);
        prop_assert!(inter.cells.iter().all(|&k| k == CellKind::Empty || k == CellKind::Filled));
        let expected = 2 * a.cells.len() + 5 * c.cells.len();
        prop_assert_eq!(input.count(CellKind::Filled), expected);
        let parsed = AnalogySample::from_json_line(&s.to_json_line()).unwrap();
        prop_assert_eq!(parsed, s);
    }

    #[test]
    fn pooling_matches_scalar_group_means(seed in any::<u64>(), k_pow in 0u32..5) {
        let k = 1usize << k_pow;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = GridEncoder::new(12, 8, seed % 100);
        let mut img = GridImage::single_panel(8);
        for cell in &mut img.cells {
            *cell = if rng.random_bool(0.3) { CellKind::Filled } else { CellKind::Empty };
        }
        let z = oracle_latents::<f64>(&img, &enc, k, "x").unwrap();
        let group = 64 / k;
        for g in 0..k {
            for j in 0..12 {
                let mut sum = 0.0;
                for i in g * group..(g + 1) * group {
                    sum += enc.cell(img.get(i / 8, i % 8), i / 8, i % 8)[j];
                }
                prop_assert!((z.vectors[g * 12 + j] - sum / group as f64).abs() < 1e-6);
            }
        }
    }
}
