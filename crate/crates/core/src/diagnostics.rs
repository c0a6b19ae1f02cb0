//! Collapse diagnostics over predicted and oracle latents: retrieval@k,
//! unrelated self-generated preference (USP), within-set similarity and
//! consecutive-step similarity curves.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatentMode, LatentModel};
use crate::numkernel::cosine_similarity;
use crate::scalar::{gemm, MatMut, MatRef, Scalar};
use crate::training::EncodedSample;

/// `N` aligned pairs of `K x d` latent blocks, stored flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCorpus {
    pub k: usize,
    pub d: usize,
    pub ids: Vec<String>,
    pub pred: Vec<Vec<f64>>,
    pub oracle: Vec<Vec<f64>>,
}

impl LatentCorpus {
    /// Pairs predictions with oracles, truncating both to the shorter number
    /// of steps when they differ.
    pub fn new(ids: Vec<String>, pred: Vec<Vec<f64>>, oracle: Vec<Vec<f64>>, d: usize) -> Result<Self> {
        if pred.len() != oracle.len() || ids.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} ids, {} predictions, {} oracles",
                ids.len(),
                pred.len(),
                oracle.len()
            )));
        }
        if d == 0 {
            return Err(Error::Shape("latent width must be positive".into()));
        }
        let mut k = usize::MAX;
        for v in pred.iter().chain(&oracle) {
            if v.len() % d != 0 {
                return Err(Error::Shape(format!("latent block of {} values is not a multiple of d = {d}", v.len())));
            }
            k = k.min(v.len() / d);
        }
        if pred.is_empty() {
            k = 0;
        }
        let cut = |v: Vec<Vec<f64>>| {
            v.into_iter()
                .map(|mut x| {
                    x.truncate(k * d);
                    x
                })
                .collect()
        };
        Ok(LatentCorpus { k, d, ids, pred: cut(pred), oracle: cut(oracle) })
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    cosine_similarity(a, b).map_or(0.0, |c| c.value)
}

fn normalized(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.iter().map(Vec::len).sum());
    for r in rows {
        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let inv = if n == 0.0 { 0.0 } else { 1.0 / n };
        out.extend(r.iter().map(|x| x * inv));
    }
    out
}

/// `a.len() x b.len()` cosine matrix between two sets of equal-length vectors.
fn cosine_matrix(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    let (n, m) = (a.len(), b.len());
    let dim = a.first().or(b.first()).map_or(0, Vec::len);
    let (na, nb) = (normalized(a), normalized(b));
    let mut s = vec![0.0; n * m];
    gemm(1.0, MatRef::dense(&na, n, dim), MatRef::dense(&nb, m, dim).t(), 0.0, MatMut::dense(&mut s, n, m));
    for v in &mut s {
        *v = v.clamp(-1.0, 1.0);
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Retrieval {
    /// Percentage of predictions whose own oracle ranks in the top `k`.
    pub percent: f64,
    /// Predictions whose own oracle tied in similarity with another oracle.
    pub ties: usize,
}

/// Ranks of each prediction's own oracle among all oracles (1 = best).
/// Ties go to the lower index.
fn oracle_ranks(corpus: &LatentCorpus) -> (Vec<usize>, usize) {
    let n = corpus.len();
    let s = cosine_matrix(&corpus.pred, &corpus.oracle);
    let mut ties = 0;
    let ranks = (0..n)
        .map(|i| {
            let row = &s[i * n..(i + 1) * n];
            let own = row[i];
            let mut tied = false;
            let mut better = 0;
            for (j, &v) in row.iter().enumerate() {
                if j == i {
                    continue;
                }
                if v > own || (v == own && j < i) {
                    better += 1;
                }
                tied |= v == own;
            }
            ties += tied as usize;
            better + 1
        })
        .collect();
    (ranks, ties)
}

pub fn retrieval_at_k(corpus: &LatentCorpus, k: usize) -> Result<Retrieval> {
    let n = corpus.len();
    if n <= k {
        return Err(Error::Input(format!("retrieval@{k} needs more than {k} samples, corpus has {n}")));
    }
    let (ranks, ties) = oracle_ranks(corpus);
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(Retrieval { percent: 100.0 * hits as f64 / n as f64, ties })
}

/// Percentage of ordered pairs `(i, j != i)` where prediction `i` is strictly
/// closer to prediction `j` than to its own oracle.
pub fn usp(corpus: &LatentCorpus) -> Result<f64> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Input("USP needs at least 2 samples".into()));
    }
    let pp = cosine_matrix(&corpus.pred, &corpus.pred);
    let own: Vec<f64> = (0..n).map(|i| cosine(&corpus.pred[i], &corpus.oracle[i])).collect();
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if j != i && pp[i * n + j] > own[i] {
                count += 1;
            }
        }
    }
    Ok(100.0 * count as f64 / (n * (n - 1)) as f64)
}

/// Mean cosine over unordered distinct pairs.
pub fn within_similarity(set: &[Vec<f64>]) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::Input("within-set similarity needs at least 2 vectors".into()));
    }
    let s = cosine_matrix(set, set);
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += s[i * n + j];
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Entry `t`: mean over blocks of `cos(z_t, z_{t+1})`.
pub fn consecutive_similarity(blocks: &[Vec<f64>], k: usize, d: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::Input("consecutive similarity needs at least 2 steps".into()));
    }
    if blocks.is_empty() {
        return Err(Error::Input("consecutive similarity needs at least one block".into()));
    }
    let mut out = vec![0.0; k - 1];
    for b in blocks {
        if b.len() != k * d {
            return Err(Error::Shape(format!("block of {} values, expected {}", b.len(), k * d)));
        }
        for (t, o) in out.iter_mut().enumerate() {
            *o += cosine(&b[t * d..(t + 1) * d], &b[(t + 1) * d..(t + 2) * d]);
        }
    }
    for o in &mut out {
        *o /= blocks.len() as f64;
    }
    Ok(out)
}

/// Free-running predictions and oracle latents for every sample.
pub fn collect_corpus<T: Scalar>(model: &LatentModel<T>, samples: &[EncodedSample<T>]) -> Result<LatentCorpus> {
    let mut pred = Vec::with_capacity(samples.len());
    let mut oracle = Vec::with_capacity(samples.len());
    for s in samples {
        let out = model.forward(&s.input, &LatentMode::FreeRunning)?;
        pred.push(out.latents.iter().map(|v| v.as_f64()).collect());
        oracle.push(s.oracle.vectors.iter().map(|v| v.as_f64()).collect());
    }
    LatentCorpus::new(samples.iter().map(|s| s.id.clone()).collect(), pred, oracle, model.d())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub samples: usize,
    pub latent_steps: usize,
    pub retrieval_at_1: f64,
    pub retrieval_at_5: f64,
    pub retrieval_at_10: f64,
    pub retrieval_ties: usize,
    pub usp: f64,
    pub within_pred: f64,
    pub within_oracle: f64,
    /// Predicted latents are more alike each other than the oracles are.
    pub collapse: bool,
    pub consecutive_pred: Vec<f64>,
    pub consecutive_oracle: Vec<f64>,
}

pub fn diagnose(corpus: &LatentCorpus) -> Result<DiagnosticsReport> {
    let r1 = retrieval_at_k(corpus, 1)?;
    let r5 = retrieval_at_k(corpus, 5)?;
    let r10 = retrieval_at_k(corpus, 10)?;
    let within_pred = within_similarity(&corpus.pred)?;
    let within_oracle = within_similarity(&corpus.oracle)?;
    let (cp, co) = if corpus.k >= 2 {
        (
            consecutive_similarity(&corpus.pred, corpus.k, corpus.d)?,
            consecutive_similarity(&corpus.oracle, corpus.k, corpus.d)?,
        )
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(DiagnosticsReport {
        samples: corpus.len(),
        latent_steps: corpus.k,
        retrieval_at_1: r1.percent,
        retrieval_at_5: r5.percent,
        retrieval_at_10: r10.percent,
        retrieval_ties: r1.ties,
        usp: usp(corpus)?,
        within_pred,
        within_oracle,
        collapse: within_pred > within_oracle,
        consecutive_pred: cp,
        consecutive_oracle: co,
    })
}

impl DiagnosticsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `metric,value` rows; curve entries are named `consecutive_pred_<t>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        let mut row = |k: &str, v: String| {
            let _ = writeln!(s, "{k},{v}");
        };
        row("samples", self.samples.to_string());
        row("latent_steps", self.latent_steps.to_string());
        row("retrieval_at_1", self.retrieval_at_1.to_string());
        row("retrieval_at_5", self.retrieval_at_5.to_string());
        row("retrieval_at_10", self.retrieval_at_10.to_string());
        row("retrieval_ties", self.retrieval_ties.to_string());
        row("usp", self.usp.to_string());
        row("within_pred", self.within_pred.to_string());
        row("within_oracle", self.within_oracle.to_string());
        row("collapse", self.collapse.to_string());
        for (t, v) in self.consecutive_pred.iter().enumerate() {
            row(&format!("consecutive_pred_{}", t + 1), v.to_string());
        }
        for (t, v) in self.consecutive_oracle.iter().enumerate() {
            row(&format!("consecutive_oracle_{}", t + 1), v.to_string());
        }
        s
    }

    pub fn collapse_statement(&self) -> String {
        format!(
            "within-pred similarity {:.4} {} within-oracle similarity {:.4}: {}; retrieval@1 {:.2}% (chance {:.2}%)",
            self.within_pred,
            if self.collapse { ">" } else { "<=" },
            self.within_oracle,
            if self.collapse {
                "predicted latents are more concentrated than the oracles"
            } else {
                "no within-set collapse signature"
            },
            self.retrieval_at_1,
            100.0 / self.samples.max(1) as f64
        )
    }

    /// Line chart of the two consecutive-step curves.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (480.0, 300.0, 48.0);
        let n = self.consecutive_pred.len().max(2);
        let x = |t: usize| m + (w - 2.0 * m) * t as f64 / (n - 1) as f64;
        let y = |v: f64| h - m - (h - 2.0 * m) * (v.clamp(-1.0, 1.0) + 1.0) / 2.0;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
             <line x1=\"{m}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{}\" stroke=\"black\"/>\n",
            h - m,
            w - m,
            h - m,
            h - m
        );
        for v in [-1.0, 0.0, 1.0] {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{v}</text>",
                m - 6.0,
                y(v) + 4.0
            );
        }
        for t in 0..self.consecutive_pred.len() {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
                x(t),
                h - m + 16.0,
                t + 1
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">step t (cosine of z_t and z_t+1)</text>",
            w / 2.0,
            h - 8.0
        );
        for (name, color, series) in
            [("pred", "#d62728", &self.consecutive_pred), ("oracle", "#1f77b4", &self.consecutive_oracle)]
        {
            let pts: Vec<String> =
                series.iter().enumerate().map(|(t, &v)| format!("{:.2},{:.2}", x(t), y(v))).collect();
            let _ = writeln!(
                s,
                "<polyline data-series=\"{name}\" data-points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
                series.len(),
                pts.join(" ")
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#d62728\">pred</text>",
            w - m - 60.0,
            m - 20.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#1f77b4\">oracle</text>",
            w - m - 20.0,
            m - 20.0
        );
        s.push_str("</svg>\n");
        s
    }
}
