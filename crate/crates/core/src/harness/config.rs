use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::interventions::{InterventionKind, InterventionSpec};
use crate::model::ModelConfig;
use crate::polyomino::DatasetConfig;
use crate::seeds::{sha256_hex, substream};
use crate::training::{TrainConfig, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { data_dir: "data".into(), checkpoint_dir: "checkpoints".into(), report_dir: "reports".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_train: usize,
    pub n_eval: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { n_train: 4000, n_eval: 400 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterventionSection {
    pub specs: Vec<InterventionKind>,
    /// Defaults to the "noise" substream of the root seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_seed: Option<u64>,
    pub pairing_offset: usize,
    /// Percentage points.
    pub bypass_threshold: f64,
}

impl Default for InterventionSection {
    fn default() -> Self {
        InterventionSection {
            specs: InterventionKind::ALL.to_vec(),
            noise_seed: None,
            pairing_offset: 1,
            bypass_threshold: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub enabled: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { enabled: true }
    }
}

/// Everything a run needs, read from a sectioned `key = value` file (TOML).
/// `training.seed` and `training.latent_size` mirror the top-level seed and
/// `model.latent_size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: Paths,
    pub data: DataSection,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub interventions: InterventionSection,
    pub diagnostics: DiagnosticsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            paths: Paths::default(),
            data: DataSection::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            interventions: InterventionSection::default(),
            diagnostics: DiagnosticsSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut cfg: ExperimentConfig = raw.clone().try_into().map_err(|e| Error::Config(format!("{e}")))?;
        let training = raw.get("training").and_then(|t| t.as_table());
        let given = |key: &str| training.and_then(|t| t.get(key)).and_then(|v| v.as_integer());
        if let Some(s) = given("seed") {
            if s as u64 != cfg.seed {
                return Err(Error::Config(format!(
                    "training.seed = {s} disagrees with the top-level seed {}",
                    cfg.seed
                )));
            }
        }
        if let Some(k) = given("latent_size") {
            if k as usize != cfg.model.latent_size {
                return Err(Error::Config(format!(
                    "training.latent_size = {k} disagrees with model.latent_size = {}",
                    cfg.model.latent_size
                )));
            }
        }
        cfg.sync();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).io_ctx("reading config", path)?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn rebase(&mut self, base: &Path) {
        for p in [&mut self.paths.data_dir, &mut self.paths.checkpoint_dir, &mut self.paths.report_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Copies the top-level seed and K into the training section.
    pub fn sync(&mut self) {
        self.training.seed = self.seed;
        self.training.latent_size = self.model.latent_size;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.training.validate()?;
        if self.data.n_train == 0 || self.data.n_eval == 0 {
            return Err(Error::Config("n_train and n_eval must be positive".into()));
        }
        if self.interventions.specs.is_empty() {
            return Err(Error::Config("no intervention specs listed".into()));
        }
        if !(self.interventions.bypass_threshold >= 0.0) {
            return Err(Error::Config("bypass_threshold must be >= 0".into()));
        }
        Ok(())
    }

    /// The config as stored next to outputs: everything but `[paths]`, so
    /// the same experiment run in two places records the same file.
    pub fn record_toml(&self) -> String {
        let mut t = toml::Table::try_from(self).expect("config serializes");
        t.remove("paths");
        toml::to_string(&t).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.record_toml().as_bytes())
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig { seed: self.seed, n_train: self.data.n_train, n_eval: self.data.n_eval, panel: self.model.panel }
    }

    pub fn init_seed(&self) -> u64 {
        substream(self.seed, "init")
    }

    pub fn noise_seed(&self) -> u64 {
        self.interventions.noise_seed.unwrap_or_else(|| substream(self.seed, "noise"))
    }

    pub fn spec(&self, kind: InterventionKind) -> InterventionSpec {
        InterventionSpec { kind, noise_seed: self.noise_seed(), pairing_offset: self.interventions.pairing_offset }
    }

    /// Short hash of what determines a trained model: seed, data sizes, model
    /// and training settings.
    pub fn training_key(&self) -> String {
        let v = serde_json::json!({
            "seed": self.seed,
            "data": [self.data.n_train, self.data.n_eval],
            "model": self.model,
            "training": self.training,
        });
        sha256_hex(v.to_string().as_bytes())[..12].to_string()
    }

    /// Checkpoint directory of `variant` under this config.
    pub fn checkpoint_path(&self, variant: Variant) -> PathBuf {
        let mut c = self.clone();
        c.training.variant = variant;
        self.paths.checkpoint_dir.join(format!("{}-{}", variant.as_str().to_ascii_lowercase(), c.training_key()))
    }
}

/// Parses `all` or a comma-separated list of intervention names.
pub fn parse_specs(list: &str) -> Result<Vec<InterventionKind>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(InterventionKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let k: InterventionKind = name.parse()?;
        if !out.contains(&k) {
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(Error::Input(format!(
            "no intervention names given; valid names: {}",
            InterventionKind::valid_names()
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        assert!(text.contains("[training]") && text.contains("eval_steps = 80"));
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn stored_form_leaves_out_paths() {
        let mut a = ExperimentConfig::default();
        let h = a.hash();
        a.paths.data_dir = "/tmp/other".into();
        assert_eq!(a.hash(), h);
        assert!(!a.record_toml().contains("[paths]"));
        let back = ExperimentConfig::from_toml(&a.record_toml()).unwrap();
        assert_eq!(back.training, a.training);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[model]\nlatent_size = 4\n[training]\nnum_train_epochs = 2\n")
            .unwrap();
        assert_eq!((cfg.training.seed, cfg.training.latent_size, cfg.training.num_train_epochs), (7, 4, 2));
        assert_eq!(cfg.model.d_model, 64);
    }

    #[test]
    fn rejects_conflicts_and_unknown_keys() {
        assert!(ExperimentConfig::from_toml("seed = 1\n[training]\nseed = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("[training]\nlatent_size = 3\n").is_err());
        assert!(ExperimentConfig::from_toml("[training]\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[interventions]\nspecs = [\"SIDEWAYS\"]\n").is_err());
    }

    #[test]
    fn spec_lists() {
        assert_eq!(parse_specs("all").unwrap().len(), 7);
        assert_eq!(
            parse_specs("oracle, zeros,oracle").unwrap(),
            vec![InterventionKind::Oracle, InterventionKind::Zeros]
        );
        let e = parse_specs("oracle,bogus").unwrap_err().to_string();
        assert!(e.contains("PAUSE_BASELINE"), "{e}");
    }

    #[test]
    fn training_key_ignores_paths_and_interventions() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.paths.report_dir = "elsewhere".into();
        b.interventions.bypass_threshold = 5.0;
        assert_eq!(a.training_key(), b.training_key());
        b.training.gamma = 0.1;
        assert_ne!(a.training_key(), b.training_key());
        assert_ne!(a.checkpoint_path(Variant::Latent), a.checkpoint_path(Variant::Pause));
    }
}
