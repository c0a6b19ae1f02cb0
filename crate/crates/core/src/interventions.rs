//! Causal interventions on the latent slot: decode the answer after replacing
//! the latents with a chosen payload, and compare accuracies across payloads.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict_answer, LatentBlock, LatentMode, LatentModel};
use crate::polyomino::Letter;
use crate::scalar::Scalar;
use crate::seeds::{rng_for, sha256_hex};
use crate::training::EncodedSample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InterventionKind {
    /// Free-running latents (no intervention).
    Standard,
    /// The sample's own oracle latents.
    Oracle,
    Zeros,
    /// i.i.d. standard normal latents.
    Noise,
    /// Oracle latents of another sample.
    RandomIntermediate,
    /// Empty latent slot.
    Skip,
    /// The learned pause embedding in every slot.
    PauseBaseline,
}

impl InterventionKind {
    pub const ALL: [InterventionKind; 7] = [
        InterventionKind::Standard,
        InterventionKind::Oracle,
        InterventionKind::Zeros,
        InterventionKind::Noise,
        InterventionKind::RandomIntermediate,
        InterventionKind::Skip,
        InterventionKind::PauseBaseline,
    ];

    /// Row order of the summary table.
    pub const SUMMARY_ORDER: [InterventionKind; 7] = [
        InterventionKind::Oracle,
        InterventionKind::Standard,
        InterventionKind::RandomIntermediate,
        InterventionKind::Noise,
        InterventionKind::Zeros,
        InterventionKind::Skip,
        InterventionKind::PauseBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterventionKind::Standard => "STANDARD",
            InterventionKind::Oracle => "ORACLE",
            InterventionKind::Zeros => "ZEROS",
            InterventionKind::Noise => "NOISE",
            InterventionKind::RandomIntermediate => "RANDOM_INTERMEDIATE",
            InterventionKind::Skip => "SKIP",
            InterventionKind::PauseBaseline => "PAUSE_BASELINE",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InterventionKind::Standard => "Standard",
            InterventionKind::Oracle => "Oracle",
            InterventionKind::Zeros => "Zeros",
            InterventionKind::Noise => "Noise",
            InterventionKind::RandomIntermediate => "Random Inter.",
            InterventionKind::Skip => "Skip",
            InterventionKind::PauseBaseline => "Pause",
        }
    }

    /// Payloads carrying no information about the sample's intermediate image.
    pub fn is_uninformative(self) -> bool {
        matches!(
            self,
            InterventionKind::Zeros
                | InterventionKind::Noise
                | InterventionKind::RandomIntermediate
                | InterventionKind::Skip
        )
    }

    pub fn valid_names() -> String {
        InterventionKind::ALL.map(|k| k.as_str()).join(", ")
    }
}

impl fmt::Display for InterventionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<InterventionKind> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        InterventionKind::ALL.into_iter().find(|k| k.as_str() == norm).ok_or_else(|| {
            Error::Input(format!("unknown intervention {s:?}; valid names: {}", InterventionKind::valid_names()))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionSpec {
    pub kind: InterventionKind,
    pub noise_seed: u64,
    /// RANDOM_INTERMEDIATE pairs sample `i` with sample `(i + offset) mod n`.
    pub pairing_offset: usize,
}

impl InterventionSpec {
    pub fn new(kind: InterventionKind, noise_seed: u64) -> Self {
        InterventionSpec { kind, noise_seed, pairing_offset: 1 }
    }
}

/// Payload for sample `index` of `samples`, or `None` for free running.
pub fn build_injection<T: Scalar>(
    spec: &InterventionSpec,
    index: usize,
    samples: &[EncodedSample<T>],
    model: &LatentModel<T>,
) -> Result<Option<LatentBlock<T>>> {
    let n = samples.len();
    if index >= n {
        return Err(Error::Input(format!("sample index {index} out of range for {n} samples")));
    }
    let kd = model.k() * model.d();
    Ok(match spec.kind {
        InterventionKind::Standard => None,
        InterventionKind::Oracle => Some(LatentBlock::Vectors(samples[index].oracle.vectors.clone())),
        InterventionKind::Zeros => Some(LatentBlock::Vectors(vec![T::zero(); kd])),
        InterventionKind::Noise => {
            let mut rng = rng_for(spec.noise_seed, &format!("noise/{index}"));
            Some(LatentBlock::Vectors((0..kd).map(|_| T::lit(StandardNormal.sample(&mut rng))).collect()))
        }
        InterventionKind::RandomIntermediate => {
            let j = (index + spec.pairing_offset) % n;
            Some(LatentBlock::Vectors(samples[j].oracle.vectors.clone()))
        }
        InterventionKind::Skip => Some(LatentBlock::Skip),
        InterventionKind::PauseBaseline => Some(LatentBlock::Pause),
    })
}

/// Short hash of the vectors placed in the latent slot.
pub fn fingerprint<T: Scalar>(slot_inputs: &[T]) -> String {
    let mut bytes = Vec::with_capacity(slot_inputs.len() * 8);
    for v in slot_inputs {
        bytes.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    sha256_hex(&bytes)[..16].to_string()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub sample_id: String,
    pub gold: Letter,
    pub pred: Letter,
    pub correct: bool,
    pub fingerprint: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub spec: InterventionSpec,
    pub records: Vec<EvalRecord>,
    pub accuracy: f64,
}

impl EvalResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample_id,gold,pred,correct,spec,seed,fingerprint\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.sample_id,
                r.gold.as_str(),
                r.pred.as_str(),
                r.correct as u8,
                self.spec.kind,
                self.spec.noise_seed,
                r.fingerprint
            );
        }
        s
    }

    /// Aggregate without per-sample rows.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "spec": self.spec.kind.as_str(),
            "noise_seed": self.spec.noise_seed,
            "pairing_offset": self.spec.pairing_offset,
            "samples": self.records.len(),
            "correct": self.records.iter().filter(|r| r.correct).count(),
            "accuracy": self.accuracy,
        })
    }
}

/// Greedy answers of `model` on every sample under `spec`.
pub fn evaluate<T: Scalar>(
    model: &LatentModel<T>,
    samples: &[EncodedSample<T>],
    spec: &InterventionSpec,
) -> Result<EvalResult> {
    let d = model.d();
    if let Some(s) =
        samples.iter().find(|s| s.input.panels.len() != 7 * d || s.oracle.k != model.k() || s.oracle.d != d)
    {
        return Err(Error::Config(format!("sample {} was encoded for a different model configuration", s.id)));
    }
    let mut records = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let payload = build_injection(spec, i, samples, model)?;
        let mode = match &payload {
            None => LatentMode::FreeRunning,
            Some(p) => LatentMode::Injected(p),
        };
        let out = model.forward(&s.input, &mode)?;
        let pred = predict_answer(&out.logits);
        records.push(EvalRecord {
            sample_id: s.id.clone(),
            gold: s.input.answer,
            pred,
            correct: pred == s.input.answer,
            fingerprint: fingerprint(&out.slot_inputs),
        });
    }
    let correct = records.iter().filter(|r| r.correct).count();
    let accuracy = if records.is_empty() { 0.0 } else { correct as f64 / records.len() as f64 };
    Ok(EvalResult { spec: *spec, records, accuracy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub spec: InterventionKind,
    pub label: String,
    pub accuracy: f64,
    pub delta_vs_standard: f64,
    pub delta_vs_oracle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BypassReport {
    pub rows: Vec<SummaryRow>,
    pub threshold_points: f64,
    /// Some uninformative payload lands within the threshold of STANDARD.
    pub bypass: bool,
    pub best_uninformative: f64,
    /// ORACLE minus the best uninformative accuracy.
    pub reliance_gap: Option<f64>,
}

impl BypassReport {
    pub fn accuracy(&self, kind: InterventionKind) -> Option<f64> {
        self.rows.iter().find(|r| r.spec == kind).map(|r| r.accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("spec,label,accuracy,delta_vs_standard,delta_vs_oracle\n");
        for r in &self.rows {
            let dor = r.delta_vs_oracle.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.spec, r.label, r.accuracy, r.delta_vs_standard, dor);
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Intervention | Accuracy | vs Standard | vs Oracle |\n|---|---|---|---|\n");
        for r in &self.rows {
            let dor = r.delta_vs_oracle.map(|v| format!("{:+.1}", 100.0 * v)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "| {} | {:.1} | {:+.1} | {} |",
                r.label,
                100.0 * r.accuracy,
                100.0 * r.delta_vs_standard,
                dor
            );
        }
        let gap = self.reliance_gap.map(|g| format!("{:.1}", 100.0 * g)).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "\nBypass (an uninformative payload within {} points of Standard): {}\nReliance gap (Oracle - best uninformative): {gap} points",
            self.threshold_points,
            if self.bypass { "yes" } else { "no" }
        );
        s
    }
}

/// Accuracy table with deltas and the bypass flag. `threshold_points` is in
/// percentage points.
pub fn bypass_report(results: &[EvalResult], threshold_points: f64) -> Result<BypassReport> {
    let acc = |k: InterventionKind| results.iter().find(|r| r.spec.kind == k).map(|r| r.accuracy);
    let standard = acc(InterventionKind::Standard)
        .ok_or_else(|| Error::Precondition("bypass report needs a STANDARD result".into()))?;
    let uninformative: Vec<f64> =
        InterventionKind::ALL.into_iter().filter(|k| k.is_uninformative()).filter_map(acc).collect();
    if uninformative.is_empty() {
        return Err(Error::Precondition("bypass report needs at least one uninformative result".into()));
    }
    let oracle = acc(InterventionKind::Oracle);
    let rows = InterventionKind::SUMMARY_ORDER
        .into_iter()
        .filter_map(|k| {
            acc(k).map(|a| SummaryRow {
                spec: k,
                label: k.label().to_string(),
                accuracy: a,
                delta_vs_standard: a - standard,
                delta_vs_oracle: oracle.map(|o| a - o),
            })
        })
        .collect();
    // Compare in whole percentage points scaled up, so 0.02 counts as within 2.
    let tol = threshold_points + 1e-9;
    let bypass = uninformative.iter().any(|&u| (100.0 * (u - standard)).abs() <= tol);
    let best = uninformative.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BypassReport {
        rows,
        threshold_points,
        bypass,
        best_uninformative: best,
        reliance_gap: oracle.map(|o| o - best),
    })
}
