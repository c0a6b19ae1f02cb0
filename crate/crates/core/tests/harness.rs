use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use latentlab::harness::{
    diagnose_stage, eval_stage, gen_data, load_checkpoint, parse_specs, report_stage, run_pipeline, train_stage,
    ExperimentConfig, RunManifest, MANIFEST_FILE,
};
use latentlab::interventions::InterventionKind;
use latentlab::model::LatentMode;
use latentlab::polyomino::{load_split, Split};
use latentlab::training::{prepare_examples, Variant};

fn tiny(root: &Path, n_train: usize, n_eval: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.paths.data_dir = root.join("data");
    cfg.paths.checkpoint_dir = root.join("ckpt");
    cfg.paths.report_dir = root.join("reports");
    cfg.data.n_train = n_train;
    cfg.data.n_eval = n_eval;
    cfg.model.d_model = 16;
    cfg.model.n_layers = 1;
    cfg.model.n_heads = 2;
    cfg.model.latent_size = 4;
    cfg.training.num_train_epochs = 1;
    cfg.sync();
    cfg
}

fn files_under(dir: &Path, base: &Path, out: &mut BTreeSet<String>) {
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(&p, base, out);
        } else {
            out.insert(p.strip_prefix(base).unwrap().to_string_lossy().into_owned());
        }
    }
}

/// Every file in a stage directory is the manifest itself or listed in it.
fn assert_no_orphans(dir: &Path) {
    let m = RunManifest::load(dir).unwrap();
    m.verify(dir).unwrap();
    let mut on_disk = BTreeSet::new();
    files_under(dir, dir, &mut on_disk);
    on_disk.remove(MANIFEST_FILE);
    let listed: BTreeSet<String> = m.files().map(|f| f.path.clone()).collect();
    assert_eq!(on_disk, listed, "{}", dir.display());
}

#[test]
fn gen_data_writes_requested_records_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), 8, 4);
    let m1 = gen_data(&cfg, false).unwrap();
    assert_eq!(load_split(&cfg.paths.data_dir, Split::Train).unwrap().len(), 8);
    assert_eq!(load_split(&cfg.paths.data_dir, Split::Eval).unwrap().len(), 4);
    assert_no_orphans(&cfg.paths.data_dir);
    let err = gen_data(&cfg, false).unwrap_err().to_string();
    assert!(err.contains("--force"), "{err}");
    let m2 = gen_data(&cfg, true).unwrap();
    assert_eq!(m1.content_digest(), m2.content_digest());
    assert_eq!(m1.files().collect::<Vec<_>>(), m2.files().collect::<Vec<_>>());
    // 12 records, each with an input grid and an intermediate grid, plus two
    // JSONL files and the stored config.
    assert_eq!(m1.files().count(), 12 * 2 + 3);
}

#[test]
fn train_round_trips_and_refuses_to_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), 8, 4);
    gen_data(&cfg, false).unwrap();
    let out = train_stage(&cfg, false).unwrap();
    assert_no_orphans(&out.dir);
    let (model, stored) = load_checkpoint(&out.dir).unwrap();
    assert_eq!(stored.training, cfg.training);
    // Reload gives the same logits as retraining from scratch in memory.
    let eval = load_split(&cfg.paths.data_dir, Split::Eval).unwrap();
    let ex = prepare_examples(&model, &eval, Variant::Latent).unwrap();
    let again = train_stage(&cfg, true).unwrap();
    let (model2, _) = load_checkpoint(&again.dir).unwrap();
    for e in &ex {
        let a = model.forward(&e.input, &LatentMode::FreeRunning).unwrap();
        let b = model2.forward(&e.input, &LatentMode::FreeRunning).unwrap();
        assert_eq!(a.logits, b.logits);
    }
    assert_eq!(out.manifest.content_digest(), again.manifest.content_digest());
    let err = train_stage(&cfg, false).err().unwrap().to_string();
    assert!(err.contains("already exists"), "{err}");
}

#[test]
fn pause_training_reports_zero_alignment() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path(), 8, 4);
    cfg.training.variant = Variant::Pause;
    gen_data(&cfg, false).unwrap();
    let out = train_stage(&cfg, false).unwrap();
    let csv = fs::read_to_string(out.dir.join("train_epochs.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "mean_align").unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').nth(col).unwrap().parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn evaluation_is_logged_every_eval_steps() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path(), 170, 4);
    cfg.training.per_device_train_batch_size = 2;
    gen_data(&cfg, false).unwrap();
    let out = train_stage(&cfg, false).unwrap();
    // 85 steps: one evaluation at step 80.
    let steps: Vec<u64> = out.report.step_evals.iter().map(|e| e.step).collect();
    assert_eq!(steps, vec![80]);
    let csv = fs::read_to_string(out.dir.join("train_steps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn eval_all_writes_one_csv_per_spec_and_ordered_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path(), 8, 12);
    gen_data(&cfg, false).unwrap();
    let latent = train_stage(&cfg, false).unwrap();
    let all = parse_specs("all").unwrap();
    let err = eval_stage(&cfg, &latent.dir, &all, None).err().unwrap().to_string();
    assert!(err.contains("PAUSE"), "{err}");
    cfg.training.variant = Variant::Pause;
    train_stage(&cfg, false).unwrap();
    cfg.training.variant = Variant::Latent;

    let out = eval_stage(&cfg, &latent.dir, &all, None).unwrap();
    assert_no_orphans(&out.dir);
    let csvs = out.manifest.files().filter(|f| f.path.ends_with(".csv") && f.path != "summary.csv").count();
    assert_eq!(csvs, 7);
    assert!(out.manifest.file("summary.csv").is_some() && out.manifest.file("summary.json").is_some());
    let summary = fs::read_to_string(out.dir.join("summary.csv")).unwrap();
    let labels: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(labels, ["Oracle", "Standard", "Random Inter.", "Noise", "Zeros", "Skip", "Pause"]);

    let again = eval_stage(&cfg, &latent.dir, &all, None).unwrap();
    assert_eq!(out.manifest.content_digest(), again.manifest.content_digest());

    // A narrower rerun leaves no stale per-spec files behind.
    let few = eval_stage(&cfg, &latent.dir, &parse_specs("standard,zeros").unwrap(), None).unwrap();
    assert_no_orphans(&few.dir);
    assert!(!few.dir.join("oracle.csv").exists());
}

#[test]
fn unknown_spec_lists_valid_names() {
    let err = parse_specs("oracle,sideways").unwrap_err().to_string();
    for k in InterventionKind::ALL {
        assert!(err.contains(k.as_str()), "{err}");
    }
}

#[test]
fn diagnose_outputs_agree_and_check_the_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path(), 8, 12);
    gen_data(&cfg, false).unwrap();
    let latent = train_stage(&cfg, false).unwrap();
    let out = diagnose_stage(&cfg, &latent.dir).unwrap();
    assert_no_orphans(&out.dir);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.dir.join("diagnostics.json")).unwrap()).unwrap();
    for key in ["retrieval_at_1", "retrieval_at_5", "retrieval_at_10", "usp", "within_pred", "within_oracle"] {
        assert!(json[key].is_number(), "{key}");
    }
    assert_eq!(json["seed"], 42);
    let csv = fs::read_to_string(out.dir.join("diagnostics.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let (k, v) = line.split_once(',').unwrap();
        if let Some(n) = json.get(k).and_then(|x| x.as_f64()) {
            assert_eq!(n, v.parse::<f64>().unwrap(), "{k}");
        }
    }
    let svg = fs::read_to_string(out.dir.join("consecutive_similarity.svg")).unwrap();
    assert_eq!(svg.matches("data-points=\"3\"").count(), 2);

    // Same experiment against a dataset rendered with another panel size.
    let mut other = tiny(&tmp.path().join("other"), 8, 12);
    other.model.panel = 7;
    gen_data(&other, false).unwrap();
    let mut wrong = cfg.clone();
    wrong.paths.data_dir = other.paths.data_dir.clone();
    assert!(diagnose_stage(&wrong, &latent.dir).is_err());
    assert!(eval_stage(&wrong, &latent.dir, &[InterventionKind::Zeros], None).is_err());
}

#[test]
fn pipeline_reruns_reproduce_every_artifact() {
    let run = |root: &Path| {
        let mut cfg = tiny(root, 16, 12);
        cfg.interventions.specs = parse_specs("oracle,standard,zeros,noise,random_intermediate,skip").unwrap();
        let r = run_pipeline(&cfg, false).unwrap();
        let report = report_stage(&cfg).unwrap();
        assert!(fs::read_to_string(report).unwrap().contains("## Diagnostics"));
        let combined: RunManifest =
            serde_json::from_str(&fs::read_to_string(cfg.paths.report_dir.join("run_manifest.json")).unwrap()).unwrap();
        assert_eq!(
            combined.stages.iter().map(|s| s.stage.as_str()).collect::<Vec<_>>(),
            ["gen-data", "train", "eval", "diagnose", "report"]
        );
        (
            r.data.content_digest(),
            r.train.manifest.content_digest(),
            r.eval.manifest.content_digest(),
            r.diagnostics.unwrap().manifest.content_digest(),
        )
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}
