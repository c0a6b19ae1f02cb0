use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::grid::{rasterize, GridImage, DEFAULT_PANEL};
use super::sample::{generate_sample_with_answer, AnalogySample, Letter};
use super::shape::{Family, PolyominoShape};
use crate::error::{Error, IoContext, Result};
use crate::seeds::rng_for;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_eval: usize,
    pub panel: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { seed: 42, n_train: 4000, n_eval: 400, panel: DEFAULT_PANEL }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }

    pub fn jsonl_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }

    pub fn sample_id(self, i: usize) -> String {
        format!("{}_{i:05}", self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDataset {
    pub train: Vec<AnalogySample>,
    pub eval: Vec<AnalogySample>,
}

/// Number of distinct (A, C, transform, option arrangement) tuples the
/// library supports.
pub fn candidate_tuple_count(library: &[PolyominoShape]) -> u128 {
    let n = library.len() as u128;
    n * n * 4 * 24
}

/// Answer letters for `n` samples: each letter `n / 4` times (remainder
/// spread over the first letters), then shuffled.
fn letter_schedule<R: rand::Rng>(rng: &mut R, n: usize) -> Vec<Letter> {
    let mut v: Vec<Letter> = (0..n).map(|i| Letter::ALL[i % 4]).collect();
    v.shuffle(rng);
    v
}

pub fn generate_dataset(config: &DatasetConfig, library: &[PolyominoShape]) -> Result<GeneratedDataset> {
    let total = config.n_train + config.n_eval;
    let available = candidate_tuple_count(library);
    if (total as u128) > available {
        return Err(Error::Dataset(format!("{total} samples requested but only {available} distinct tuples exist")));
    }
    let mut rng = rng_for(config.seed, "data");
    let mut seen = HashSet::new();
    let mut draw_split = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<AnalogySample>> {
        let letters = letter_schedule(rng, n);
        let mut out = Vec::with_capacity(n);
        for letter in letters {
            let mut tries = 0;
            loop {
                let s = generate_sample_with_answer(rng, library, letter)?;
                if seen.insert(s.tuple_key()) {
                    out.push(s);
                    break;
                }
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::Dataset("could not draw a new unique tuple".into()));
                }
            }
        }
        Ok(out)
    };
    let train = draw_split(config.n_train, &mut rng)?;
    let eval = draw_split(config.n_eval, &mut rng)?;
    Ok(GeneratedDataset { train, eval })
}

/// Share of drawn shapes (A and C both counted) per family.
pub fn family_mix(samples: &[AnalogySample]) -> Vec<(Family, f64)> {
    let total = (2 * samples.len()).max(1) as f64;
    Family::ALL
        .iter()
        .map(|&f| {
            let n = samples
                .iter()
                .map(|s| (s.shape_a_family == f) as usize + (s.shape_c_family == f) as usize)
                .sum::<usize>();
            (f, n as f64 / total)
        })
        .collect()
}

pub fn letter_mix(samples: &[AnalogySample]) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for s in samples {
        counts[s.answer.index()] += 1;
    }
    let n = samples.len().max(1) as f64;
    counts.map(|c| c as f64 / n)
}

pub fn grids_dir(dir: &Path) -> PathBuf {
    dir.join("grids")
}

/// Writes `train.jsonl`, `eval.jsonl` and one `.grid` / `.inter` sidecar per
/// sample. Returns every written path.
pub fn write_dataset(
    dir: &Path,
    data: &GeneratedDataset,
    library: &[PolyominoShape],
    panel: usize,
) -> Result<Vec<PathBuf>> {
    let gdir = grids_dir(dir);
    fs::create_dir_all(&gdir).io_ctx("creating dataset directory", &gdir)?;
    let mut written = Vec::new();
    for (split, samples) in [(Split::Train, &data.train), (Split::Eval, &data.eval)] {
        let mut jsonl = String::new();
        for (i, s) in samples.iter().enumerate() {
            jsonl.push_str(&s.to_json_line());
            jsonl.push('\n');
            let (input, inter) = rasterize(s, library, panel)?;
            let id = split.sample_id(i);
            for (ext, img) in [("grid", &input), ("inter", &inter)] {
                let path = gdir.join(format!("{id}.{ext}"));
                fs::write(&path, img.to_sidecar()).io_ctx("writing grid file", &path)?;
                written.push(path);
            }
        }
        let path = dir.join(split.jsonl_name());
        fs::write(&path, jsonl).io_ctx("writing dataset file", &path)?;
        written.push(path);
    }
    written.sort();
    Ok(written)
}

/// A parsed record together with its rendered grids.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedSample {
    pub id: String,
    pub sample: AnalogySample,
    pub input: GridImage,
    pub intermediate: GridImage,
}

pub fn load_split(dir: &Path, split: Split) -> Result<Vec<LoadedSample>> {
    let path = dir.join(split.jsonl_name());
    let text = fs::read_to_string(&path).io_ctx("reading dataset file", &path)?;
    let gdir = grids_dir(dir);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let sample = AnalogySample::from_json_line(line)
            .map_err(|e| Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let id = split.sample_id(i);
        let read = |ext: &str| -> Result<GridImage> {
            let p = gdir.join(format!("{id}.{ext}"));
            GridImage::from_sidecar(&fs::read_to_string(&p).io_ctx("reading grid file", &p)?)
        };
        out.push(LoadedSample { sample, input: read("grid")?, intermediate: read("inter")?, id });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyomino::shape::{build_shape_library, LibraryConfig};

    #[test]
    fn small_dataset_is_unique_and_balanced() {
        let lib = build_shape_library(&LibraryConfig::default());
        let cfg = DatasetConfig { n_train: 40, n_eval: 8, ..Default::default() };
        let d = generate_dataset(&cfg, &lib).unwrap();
        assert_eq!((d.train.len(), d.eval.len()), (40, 8));
        assert_eq!(letter_mix(&d.train), [0.25; 4]);
        let keys: HashSet<_> = d.train.iter().chain(&d.eval).map(AnalogySample::tuple_key).collect();
        assert_eq!(keys.len(), 48);
    }

    #[test]
    fn too_many_samples_is_an_error() {
        let lib = build_shape_library(&LibraryConfig { families: vec![Family::Tetromino] });
        // 3 shapes: 9 pairs, 4 transforms, 24 option orders.
        assert_eq!(candidate_tuple_count(&lib), 864);
        let cfg = DatasetConfig { n_train: 800, n_eval: 65, ..Default::default() };
        assert!(matches!(generate_dataset(&cfg, &lib), Err(Error::Dataset(_))));
    }
}
