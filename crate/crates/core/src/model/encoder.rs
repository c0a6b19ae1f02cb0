//! Frozen grid encoder.
//!
//! Every cell is mapped independently: a cell-type vector plus row and
//! column vectors, passed through a fixed random two-layer tanh network.
//! The response of an EMPTY cell at the same position and the mean response
//! of the cell type over one panel are subtracted, so EMPTY cells encode to zero
//! and shapes are told apart by where their filled cells sit. All tables are
//! drawn once from a seed and never trained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::polyomino::{CellKind, GridImage, PanelTag};
use crate::scalar::Scalar;

const TYPE_SCALE: f64 = 0.5;
const HIDDEN_GAIN: f64 = 4.0;
const OUTPUT_SCALE: f64 = 6.0;

#[derive(Clone, Debug, PartialEq)]
pub struct GridEncoder {
    pub d: usize,
    /// Panel side; the column table has one extra entry for separator columns.
    pub panel: usize,
    type_emb: Vec<f64>,
    row_emb: Vec<f64>,
    col_emb: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    background: Vec<f64>,
    centre: Vec<f64>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).map(|x: f64| x * scale).collect()
}

impl GridEncoder {
    pub fn new(d: usize, panel: usize, seed: u64) -> GridEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = panel + 1;
        let h = 2 * d;
        let mut enc = GridEncoder {
            d,
            panel,
            type_emb: normal_vec(&mut rng, CellKind::ALL.len() * d, TYPE_SCALE),
            row_emb: normal_vec(&mut rng, panel * d, 1.0),
            col_emb: normal_vec(&mut rng, cols * d, 1.0),
            w1: normal_vec(&mut rng, d * h, HIDDEN_GAIN / (d as f64).sqrt()),
            w2: normal_vec(&mut rng, h * d, 1.0 / (h as f64).sqrt()),
            background: vec![0.0; panel * cols * d],
            centre: vec![0.0; CellKind::ALL.len() * d],
        };
        for r in 0..panel {
            for c in 0..cols {
                let v = enc.raw(CellKind::Empty, r, c);
                enc.background[(r * cols + c) * d..(r * cols + c + 1) * d].copy_from_slice(&v);
            }
        }
        for k in CellKind::ALL {
            let mut acc = vec![0.0; d];
            for r in 0..panel {
                for c in 0..panel {
                    let v = enc.raw(k, r, c);
                    let bg = enc.bg(r, c);
                    for j in 0..d {
                        acc[j] += v[j] - bg[j];
                    }
                }
            }
            let n = (panel * panel) as f64;
            for j in 0..d {
                enc.centre[k.index() * d + j] = acc[j] / n;
            }
        }
        enc
    }

    fn bg(&self, r: usize, c: usize) -> &[f64] {
        let i = r * (self.panel + 1) + c;
        &self.background[i * self.d..(i + 1) * self.d]
    }

    /// Network response before background and type-centre subtraction.
    fn raw(&self, k: CellKind, r: usize, c: usize) -> Vec<f64> {
        let d = self.d;
        let h = 2 * d;
        let t = &self.type_emb[k.index() * d..(k.index() + 1) * d];
        let re = &self.row_emb[r * d..(r + 1) * d];
        let ce = &self.col_emb[c * d..(c + 1) * d];
        let x: Vec<f64> = (0..d).map(|j| t[j] + re[j] + ce[j]).collect();
        let mut hid = vec![0.0; h];
        for (i, &xi) in x.iter().enumerate() {
            for (hv, &w) in hid.iter_mut().zip(&self.w1[i * h..(i + 1) * h]) {
                *hv += xi * w;
            }
        }
        let mut out = vec![0.0; d];
        for (i, hv) in hid.iter().enumerate() {
            let a = hv.tanh();
            for (o, &w) in out.iter_mut().zip(&self.w2[i * d..(i + 1) * d]) {
                *o += a * w;
            }
        }
        out
    }

    /// Feature of one cell at panel-local position `(r, c)`.
    pub fn cell(&self, k: CellKind, r: usize, c: usize) -> Vec<f64> {
        let raw = self.raw(k, r, c);
        let bg = self.bg(r, c);
        let cent = &self.centre[k.index() * self.d..(k.index() + 1) * self.d];
        (0..self.d).map(|j| OUTPUT_SCALE * (raw[j] - bg[j] - cent[j])).collect()
    }

    /// One `d`-vector per cell in row-major order. Positions are local to the
    /// panel stride, so a panel encodes the same wherever it sits in the image.
    pub fn encode_grid<T: Scalar>(&self, image: &GridImage) -> Result<Vec<T>> {
        if image.height > self.panel {
            return Err(Error::Input(format!("{}-row image exceeds the encoder's {} rows", image.height, self.panel)));
        }
        let stride = self.panel + 1;
        let mut out = Vec::with_capacity(image.height * image.width * self.d);
        for r in 0..image.height {
            for c in 0..image.width {
                out.extend(self.cell(image.get(r, c), r, c % stride).into_iter().map(T::lit));
            }
        }
        Ok(out)
    }

    /// Mean encoded feature of each listed panel, `tags.len() x d`.
    pub fn panel_means<T: Scalar>(&self, image: &GridImage, tags: &[PanelTag]) -> Result<Vec<T>> {
        let d = self.d;
        let mut out = Vec::with_capacity(tags.len() * d);
        for &tag in tags {
            let rect = image.rect(tag)?;
            if rect.height > self.panel || rect.width > self.panel {
                return Err(Error::Input(format!("panel {tag:?} larger than the encoder's panel size")));
            }
            let mut acc = vec![0.0f64; d];
            for i in 0..rect.height {
                for j in 0..rect.width {
                    let v = self.cell(image.get(rect.row + i, rect.col + j), i, j);
                    for (a, b) in acc.iter_mut().zip(v) {
                        *a += b;
                    }
                }
            }
            let n = (rect.height * rect.width) as f64;
            out.extend(acc.into_iter().map(|a| T::lit(a / n)));
        }
        Ok(out)
    }
}

/// Target latent sequence for one sample, `k x d` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleLatents<T> {
    pub k: usize,
    pub d: usize,
    pub vectors: Vec<T>,
    pub source: String,
}

/// Encodes a single-panel intermediate image and mean-pools its cells into
/// `k` contiguous raster-order groups.
pub fn oracle_latents<T: Scalar>(
    intermediate: &GridImage,
    encoder: &GridEncoder,
    k: usize,
    source: impl Into<String>,
) -> Result<OracleLatents<T>> {
    if intermediate.panels.len() != 1 {
        return Err(Error::Input("oracle latents need a single-panel image".into()));
    }
    let cells = intermediate.height * intermediate.width;
    if k == 0 || cells % k != 0 {
        return Err(Error::Input(format!("{cells} cells cannot be split into {k} equal groups")));
    }
    let feats: Vec<f64> = encoder.encode_grid(intermediate)?;
    let d = encoder.d;
    let g = cells / k;
    let mut vectors = Vec::with_capacity(k * d);
    for grp in 0..k {
        for j in 0..d {
            let s: f64 = (0..g).map(|i| feats[(grp * g + i) * d + j]).sum();
            vectors.push(T::lit(s / g as f64));
        }
    }
    Ok(OracleLatents { k, d, vectors, source: source.into() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> GridEncoder {
        GridEncoder::new(16, 8, 7)
    }

    #[test]
    fn output_length_and_empty_is_zero() {
        let e = enc();
        let img = GridImage::input_layout(8);
        let f: Vec<f64> = e.encode_grid(&img).unwrap();
        assert_eq!(f.len(), 8 * 62 * 16);
        assert!(f[..16].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_cell_change_is_local() {
        let e = enc();
        let a = GridImage::single_panel(8);
        let mut b = a.clone();
        b.set(3, 5, CellKind::Filled);
        let fa: Vec<f64> = e.encode_grid(&a).unwrap();
        let fb: Vec<f64> = e.encode_grid(&b).unwrap();
        let differing: Vec<usize> = (0..64).filter(|&i| fa[i * 16..(i + 1) * 16] != fb[i * 16..(i + 1) * 16]).collect();
        assert_eq!(differing, vec![3 * 8 + 5]);
    }

    #[test]
    fn swapping_distinct_cells_changes_encoding() {
        let e = enc();
        let mut a = GridImage::single_panel(8);
        a.set(1, 1, CellKind::Filled);
        let mut b = GridImage::single_panel(8);
        b.set(1, 2, CellKind::Filled);
        let fa: Vec<f64> = e.encode_grid(&a).unwrap();
        let fb: Vec<f64> = e.encode_grid(&b).unwrap();
        assert_ne!(fa, fb);
    }

    #[test]
    fn panel_encoding_is_translation_free_across_panels() {
        let e = enc();
        let mut img = GridImage::input_layout(8);
        let mut single = GridImage::single_panel(8);
        for (r, c) in [(2, 3), (3, 3), (4, 3), (4, 4)] {
            img.set(r, 4 * 9 + c, CellKind::Filled);
            single.set(r, c, CellKind::Filled);
        }
        let p: Vec<f64> = e.panel_means(&img, &[PanelTag::OptionB]).unwrap();
        let q: Vec<f64> = e.panel_means(&single, &[PanelTag::Intermediate]).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn oracle_pooling_cases() {
        let e = enc();
        let empty = GridImage::single_panel(8);
        let z = oracle_latents::<f64>(&empty, &e, 8, "s").unwrap();
        assert_eq!(z.vectors.len(), 8 * 16);
        assert!(z.vectors.iter().all(|&v| v == 0.0));
        let mut masked = GridImage::single_panel(8);
        masked.cells.fill(CellKind::Mask);
        let m: Vec<f64> = e.panel_means(&masked, &[PanelTag::Intermediate]).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-12));
        assert!(oracle_latents::<f64>(&empty, &e, 3, "s").is_err());
        let mut img = GridImage::single_panel(8);
        img.set(0, 0, CellKind::Filled);
        img.set(5, 6, CellKind::Filled);
        let one = oracle_latents::<f64>(&img, &e, 1, "s").unwrap();
        let f: Vec<f64> = e.encode_grid(&img).unwrap();
        for j in 0..16 {
            let m: f64 = (0..64).map(|i| f[i * 16 + j]).sum::<f64>() / 64.0;
            assert!((one.vectors[j] - m).abs() < 1e-12);
        }
    }
}
