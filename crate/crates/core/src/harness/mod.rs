//! Experiment plumbing: configuration, per-stage manifests and the
//! gen-data / train / eval / diagnose / report pipeline.

pub mod config;
pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{parse_specs, DataSection, DiagnosticsSection, ExperimentConfig, InterventionSection, Paths};
pub use manifest::{hash_file, FileEntry, RunManifest, StageRecord, CODE_VERSION, MANIFEST_FILE};

use crate::diagnostics::{collect_corpus, diagnose, DiagnosticsReport};
use crate::error::{Error, IoContext, Result};
use crate::interventions::{bypass_report, evaluate, BypassReport, EvalResult, InterventionKind};
use crate::model::checkpoint;
use crate::polyomino::{
    build_shape_library, generate_dataset, grids_dir, load_split, write_dataset, GridImage, LibraryConfig,
    LoadedSample, Split,
};
use crate::training::{prepare_examples, train, TrainReport, Variant};
use crate::Model;

pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "model.json";
/// Overrides the report directory of any config.
pub const REPORT_DIR_ENV: &str = "LATENTLAB_REPORT_DIR";

/// Collects the files a stage writes so its manifest lists exactly them.
struct StageWriter {
    dir: PathBuf,
    files: Vec<String>,
    start: Instant,
}

impl StageWriter {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).io_ctx("creating output directory", dir)?;
        Ok(StageWriter { dir: dir.to_path_buf(), files: Vec::new(), start: Instant::now() })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).io_ctx("writing output", &path)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, stage: &str, cfg: &ExperimentConfig) -> Result<RunManifest> {
        self.write(CONFIG_FILE, cfg.record_toml())?;
        let m = RunManifest::for_stage(
            stage,
            &self.dir,
            &self.files,
            cfg.hash(),
            cfg.seed,
            self.start.elapsed().as_secs_f64(),
        )?;
        m.save(&self.dir)?;
        Ok(m)
    }
}

/// Deletes what an earlier run of a stage left in `dir`, going by its manifest.
fn clear_stage(dir: &Path) -> Result<()> {
    if let Ok(old) = RunManifest::load(dir) {
        for f in old.files() {
            let p = dir.join(&f.path);
            if p.exists() {
                fs::remove_file(&p).io_ctx("removing old output", &p)?;
            }
        }
    }
    for name in [MANIFEST_FILE, CONFIG_FILE] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).io_ctx("removing old output", &p)?;
        }
    }
    Ok(())
}

fn is_non_empty_dir(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn rel(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

/// Generates the dataset into `paths.data_dir`. A non-empty directory is
/// only overwritten with `force`.
pub fn gen_data(cfg: &ExperimentConfig, force: bool) -> Result<RunManifest> {
    let dir = &cfg.paths.data_dir;
    if is_non_empty_dir(dir) {
        if !force {
            return Err(Error::Precondition(format!("{} is not empty; pass --force to overwrite it", dir.display())));
        }
        clear_stage(dir)?;
        for name in [Split::Train.jsonl_name(), Split::Eval.jsonl_name()] {
            let p = dir.join(name);
            if p.exists() {
                fs::remove_file(&p).io_ctx("removing old output", &p)?;
            }
        }
        let g = grids_dir(dir);
        if g.exists() {
            fs::remove_dir_all(&g).io_ctx("removing old grids", &g)?;
        }
    }
    let mut w = StageWriter::new(dir)?;
    let library = build_shape_library(&LibraryConfig::default());
    let data = generate_dataset(&cfg.dataset(), &library)?;
    let written = write_dataset(dir, &data, &library, cfg.model.panel)?;
    w.files.extend(written.iter().map(|p| rel(dir, p)));
    log::info!("wrote {} train and {} eval records to {}", data.train.len(), data.eval.len(), dir.display());
    w.finish("gen-data", cfg)
}

/// Both splits, checked against the config's sizes and panel.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Vec<LoadedSample>, Vec<LoadedSample>)> {
    let dir = &cfg.paths.data_dir;
    let train = load_split(dir, Split::Train)?;
    let eval = load_split(dir, Split::Eval)?;
    if train.len() != cfg.data.n_train || eval.len() != cfg.data.n_eval {
        return Err(Error::Config(format!(
            "dataset at {} has {} train / {} eval records but the config expects {} / {}",
            dir.display(),
            train.len(),
            eval.len(),
            cfg.data.n_train,
            cfg.data.n_eval
        )));
    }
    check_panel(&eval, cfg.model.panel, dir)?;
    Ok((train, eval))
}

fn check_panel(samples: &[LoadedSample], panel: usize, dir: &Path) -> Result<()> {
    let want = GridImage::input_layout(panel);
    if let Some(s) = samples.iter().find(|s| (s.input.height, s.input.width) != (want.height, want.width)) {
        return Err(Error::Config(format!(
            "{} in {} is {}x{} but the model expects {}x{} grids (panel {panel})",
            s.id,
            dir.display(),
            s.input.height,
            s.input.width,
            want.height,
            want.width
        )));
    }
    Ok(())
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub report: TrainReport,
    pub manifest: RunManifest,
}

/// Trains `training.variant` and writes the checkpoint directory named by
/// [`ExperimentConfig::checkpoint_path`]. An existing run of the same config
/// is only replaced with `force`.
pub fn train_stage(cfg: &ExperimentConfig, force: bool) -> Result<TrainOutcome> {
    let variant = cfg.training.variant;
    let dir = cfg.checkpoint_path(variant);
    if dir.join(CHECKPOINT_FILE).exists() || dir.join(MANIFEST_FILE).exists() {
        if !force {
            return Err(Error::Precondition(format!(
                "a checkpoint for this config already exists at {}; pass --force to retrain",
                dir.display()
            )));
        }
        clear_stage(&dir)?;
    }
    let (train_s, eval_s) = load_dataset(cfg)?;
    let mut model = Model::new(cfg.model.clone(), cfg.init_seed())?;
    let a = prepare_examples(&model, &train_s, variant)?;
    let b = prepare_examples(&model, &eval_s, variant)?;
    log::info!("training {variant} on {} samples into {}", a.len(), dir.display());
    let report = train(&mut model, &a, &b, &cfg.training)?;
    let mut w = StageWriter::new(&dir)?;
    w.write(CHECKPOINT_FILE, checkpoint::to_json(&model, cfg.seed)?)?;
    w.write("train_epochs.csv", report.epoch_csv())?;
    w.write("train_steps.csv", report.step_csv())?;
    let manifest = w.finish("train", cfg)?;
    Ok(TrainOutcome { dir, report, manifest })
}

/// A trained model with the config it was trained under.
pub fn load_checkpoint(dir: &Path) -> Result<(Model, ExperimentConfig)> {
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).io_ctx("reading checkpoint config", &cfg_path)?;
    let stored = ExperimentConfig::from_toml(&text)?;
    let (model, _) = checkpoint::load::<f32>(&dir.join(CHECKPOINT_FILE))?;
    if model.config != stored.model {
        return Err(Error::Checkpoint(format!("{} disagrees with its stored config", dir.display())));
    }
    Ok((model, stored))
}

fn stage_name(checkpoint_dir: &Path) -> String {
    checkpoint_dir.file_name().map_or_else(|| "checkpoint".into(), |n| n.to_string_lossy().into_owned())
}

pub struct EvalOutcome {
    pub dir: PathBuf,
    pub results: Vec<EvalResult>,
    pub summary: Option<BypassReport>,
    pub manifest: RunManifest,
}

impl EvalOutcome {
    pub fn accuracy(&self, kind: InterventionKind) -> Option<f64> {
        self.results.iter().find(|r| r.spec.kind == kind).map(|r| r.accuracy)
    }
}

/// Evaluates a checkpoint under each spec on the eval split. PAUSE_BASELINE
/// runs the pause-trained checkpoint, `pause_checkpoint` or the one this
/// config would train.
pub fn eval_stage(
    cfg: &ExperimentConfig,
    checkpoint_dir: &Path,
    specs: &[InterventionKind],
    pause_checkpoint: Option<&Path>,
) -> Result<EvalOutcome> {
    if specs.is_empty() {
        return Err(Error::Input(format!(
            "no intervention specs given; valid names: {}",
            InterventionKind::valid_names()
        )));
    }
    let (model, stored) = load_checkpoint(checkpoint_dir)?;
    let eval_s = load_split(&cfg.paths.data_dir, Split::Eval)?;
    check_panel(&eval_s, model.config.panel, &cfg.paths.data_dir)?;
    let variant = stored.training.variant;
    let examples = prepare_examples(&model, &eval_s, variant)?;
    let mut results = Vec::with_capacity(specs.len());
    for &kind in specs {
        let spec = cfg.spec(kind);
        let r = if kind == InterventionKind::PauseBaseline && variant != Variant::Pause {
            let pause_dir = match pause_checkpoint {
                Some(p) => p.to_path_buf(),
                None => {
                    let mut c = stored.clone();
                    c.paths = cfg.paths.clone();
                    c.checkpoint_path(Variant::Pause)
                }
            };
            if !pause_dir.join(CHECKPOINT_FILE).exists() {
                return Err(Error::Precondition(format!(
                    "PAUSE_BASELINE needs a pause-trained checkpoint, none at {}; train variant PAUSE first or pass --pause-checkpoint",
                    pause_dir.display()
                )));
            }
            let (pause, pstored) = load_checkpoint(&pause_dir)?;
            if pstored.training.variant != Variant::Pause {
                return Err(Error::Precondition(format!("{} was not trained as a PAUSE model", pause_dir.display())));
            }
            evaluate(&pause, &prepare_examples(&pause, &eval_s, Variant::Pause)?, &spec)?
        } else {
            evaluate(&model, &examples, &spec)?
        };
        log::info!("{kind}: accuracy {:.4}", r.accuracy);
        results.push(r);
    }
    let summary = match bypass_report(&results, cfg.interventions.bypass_threshold) {
        Ok(s) => Some(s),
        Err(Error::Precondition(why)) => {
            log::warn!("no bypass summary: {why}");
            None
        }
        Err(e) => return Err(e),
    };
    let dir = cfg.paths.report_dir.join("eval").join(stage_name(checkpoint_dir));
    clear_stage(&dir)?;
    let mut w = StageWriter::new(&dir)?;
    for r in &results {
        w.write(&format!("{}.csv", r.spec.kind.as_str().to_ascii_lowercase()), r.to_csv())?;
    }
    let json = serde_json::json!({
        "seed": cfg.seed,
        "noise_seed": cfg.noise_seed(),
        "checkpoint": stage_name(checkpoint_dir),
        "variant": variant.as_str(),
        "results": results.iter().map(EvalResult::summary_json).collect::<Vec<_>>(),
        "bypass": summary,
    });
    w.write("summary.json", serde_json::to_string_pretty(&json)? + "\n")?;
    if let Some(s) = &summary {
        w.write("summary.csv", s.to_csv())?;
        w.write("summary.md", s.to_markdown())?;
    }
    let manifest = w.finish("eval", cfg)?;
    Ok(EvalOutcome { dir, results, summary, manifest })
}

pub struct DiagnoseOutcome {
    pub dir: PathBuf,
    pub report: DiagnosticsReport,
    pub manifest: RunManifest,
}

/// Collapse diagnostics of a checkpoint's free-running latents on the eval split.
pub fn diagnose_stage(cfg: &ExperimentConfig, checkpoint_dir: &Path) -> Result<DiagnoseOutcome> {
    let (model, stored) = load_checkpoint(checkpoint_dir)?;
    let variant = stored.training.variant;
    if variant == Variant::Pause {
        return Err(Error::Precondition("a PAUSE model has no latents to diagnose".into()));
    }
    let eval_s = load_split(&cfg.paths.data_dir, Split::Eval)?;
    check_panel(&eval_s, model.config.panel, &cfg.paths.data_dir)?;
    let corpus = collect_corpus(&model, &prepare_examples(&model, &eval_s, variant)?)?;
    let report = diagnose(&corpus)?;
    log::info!("{}", report.collapse_statement());
    let dir = cfg.paths.report_dir.join("diagnostics").join(stage_name(checkpoint_dir));
    clear_stage(&dir)?;
    let mut w = StageWriter::new(&dir)?;
    let mut json = serde_json::to_value(&report)?;
    if let Some(obj) = json.as_object_mut() {
        obj.insert("seed".into(), cfg.seed.into());
        obj.insert("collapse_statement".into(), report.collapse_statement().into());
    }
    w.write("diagnostics.json", serde_json::to_string_pretty(&json)? + "\n")?;
    w.write("diagnostics.csv", format!("{}seed,{}\n", report.to_csv(), cfg.seed))?;
    w.write("consecutive_similarity.svg", report.to_svg())?;
    let manifest = w.finish("diagnose", cfg)?;
    Ok(DiagnoseOutcome { dir, report, manifest })
}

fn sub_dirs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

/// Gathers every stage's outputs into `report.md` and a combined
/// `run_manifest.json` in the report directory.
pub fn report_stage(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let start = Instant::now();
    let mut md = format!("# Run report\n\nseed {} | config {} | {}\n", cfg.seed, &cfg.hash()[..12], CODE_VERSION);
    let mut stages: Vec<(PathBuf, RunManifest)> = Vec::new();
    let mut push = |dir: &Path| -> Result<Option<RunManifest>> {
        if !dir.join(MANIFEST_FILE).exists() {
            return Ok(None);
        }
        let m = RunManifest::load(dir)?;
        m.verify(dir)?;
        stages.push((dir.to_path_buf(), m.clone()));
        Ok(Some(m))
    };
    if let Some(m) = push(&cfg.paths.data_dir)? {
        let _ = writeln!(md, "\n## Dataset\n\n{} files in {}", m.files().count(), cfg.paths.data_dir.display());
    }
    for dir in sub_dirs(&cfg.paths.checkpoint_dir) {
        if push(&dir)?.is_some() {
            let csv = fs::read_to_string(dir.join("train_epochs.csv")).unwrap_or_default();
            let _ = writeln!(md, "\n## Training: {}\n\n```\n{}```", stage_name(&dir), csv);
        }
    }
    for dir in sub_dirs(&cfg.paths.report_dir.join("eval")) {
        if push(&dir)?.is_some() {
            let table = fs::read_to_string(dir.join("summary.md")).unwrap_or_else(|_| "(no bypass summary)\n".into());
            let _ = writeln!(md, "\n## Interventions: {}\n\n{table}", stage_name(&dir));
        }
    }
    for dir in sub_dirs(&cfg.paths.report_dir.join("diagnostics")) {
        if push(&dir)?.is_some() {
            let text = fs::read_to_string(dir.join("diagnostics.json")).io_ctx("reading diagnostics", &dir)?;
            let r: DiagnosticsReport = serde_json::from_str(&text)?;
            let _ = writeln!(
                md,
                "\n## Diagnostics: {}\n\n| R@1 | R@5 | R@10 | USP | Sim. within pred | Sim. within oracle |\n|---|---|---|---|---|---|\n| {:.1} | {:.1} | {:.1} | {:.1} | {:.3} | {:.3} |\n\n{}\n",
                stage_name(&dir),
                r.retrieval_at_1,
                r.retrieval_at_5,
                r.retrieval_at_10,
                r.usp,
                r.within_pred,
                r.within_oracle,
                r.collapse_statement()
            );
        }
    }
    let out = &cfg.paths.report_dir;
    fs::create_dir_all(out).io_ctx("creating report directory", out)?;
    let report_path = out.join("report.md");
    fs::write(&report_path, &md).io_ctx("writing report", &report_path)?;
    let mut combined =
        RunManifest { code_version: CODE_VERSION.into(), config_hash: cfg.hash(), seed: cfg.seed, stages: Vec::new() };
    for (dir, m) in stages {
        for mut s in m.stages {
            for f in &mut s.files {
                f.path = dir.join(&f.path).display().to_string();
            }
            combined.stages.push(s);
        }
    }
    let mut entry = hash_file(&report_path)?;
    entry.path = report_path.display().to_string();
    combined.stages.push(StageRecord {
        stage: "report".into(),
        files: vec![entry],
        wall_clock_s: start.elapsed().as_secs_f64(),
    });
    let mpath = out.join("run_manifest.json");
    fs::write(&mpath, serde_json::to_string_pretty(&combined)? + "\n").io_ctx("writing manifest", &mpath)?;
    Ok(report_path)
}

/// The four pipeline stages for one variant, in order, with the run's outputs.
pub struct PipelineRun {
    pub data: RunManifest,
    pub train: TrainOutcome,
    pub eval: EvalOutcome,
    pub diagnostics: Option<DiagnoseOutcome>,
}

/// gen-data, train, eval and (when enabled) diagnose under one config.
pub fn run_pipeline(cfg: &ExperimentConfig, force: bool) -> Result<PipelineRun> {
    let data = gen_data(cfg, force)?;
    let train = train_stage(cfg, force)?;
    let eval = eval_stage(cfg, &train.dir, &cfg.interventions.specs, None)?;
    let diagnostics = if cfg.diagnostics.enabled && cfg.training.variant != Variant::Pause {
        Some(diagnose_stage(cfg, &train.dir)?)
    } else {
        None
    };
    Ok(PipelineRun { data, train, eval, diagnostics })
}
