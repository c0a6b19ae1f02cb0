use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shape::{Family, PolyominoShape, Rotation};
use crate::error::{Error, Result};

pub const DATASET_NAME: &str = "tetris_analogy";
pub const TRANSFORM_TYPE: &str = "rotation";

/// Target share of drawn shapes per family: tetromino, pentomino, hexomino.
pub const FAMILY_MIX: [(Family, f64); 3] =
    [(Family::Tetromino, 0.24), (Family::Pentomino, 0.41), (Family::Hexomino, 0.35)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Letter {
    A,
    B,
    C,
    D,
}

impl Letter {
    pub const ALL: [Letter; 4] = [Letter::A, Letter::B, Letter::C, Letter::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Letter> {
        Letter::ALL.get(i).copied().ok_or_else(|| Error::Input(format!("option index {i} out of range")))
    }

    pub fn as_str(self) -> &'static str {
        ["a", "b", "c", "d"][self.index()]
    }

    pub fn parse(s: &str) -> Result<Letter> {
        Letter::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Dataset(format!("answer {s:?} is not one of a, b, c, d")))
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn question_text(t: Rotation) -> String {
    format!(
        "Image (A) is to image (B) as image (C) is to which of the following options?\n\
         The transformation from (A) to (B) is: {}.\n\
         Options: (a) Option a\n(b) Option b\n(c) Option c\n(d) Option d",
        t.description()
    )
}

/// One A:B::C:? rotation analogy with four candidate rotations of C.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AnalogySample {
    pub question: String,
    pub answer: Letter,
    pub shape_a: String,
    pub shape_a_family: Family,
    pub shape_c: String,
    pub shape_c_family: Family,
    pub transform: Rotation,
    /// Rotation shown by options a, b, c, d.
    pub option_transforms: [Rotation; 4],
    pub intermediate_key: String,
}

pub fn intermediate_key(shape_c: &str, t: Rotation) -> String {
    format!("{shape_c}_{}", t.degrees())
}

impl AnalogySample {
    pub fn new(a: &PolyominoShape, c: &PolyominoShape, transform: Rotation, options: [Rotation; 4]) -> Result<Self> {
        let hits: Vec<usize> = (0..4).filter(|&i| options[i] == transform).collect();
        let mut sorted = options;
        sorted.sort();
        if hits.len() != 1 || sorted != Rotation::ALL {
            return Err(Error::Input("options must be the four distinct rotations".into()));
        }
        Ok(AnalogySample {
            question: question_text(transform),
            answer: Letter::from_index(hits[0])?,
            shape_a: a.name.clone(),
            shape_a_family: a.family,
            shape_c: c.name.clone(),
            shape_c_family: c.family,
            transform,
            option_transforms: options,
            intermediate_key: intermediate_key(&c.name, transform),
        })
    }

    /// Identity of the sample for uniqueness checks: shapes, transform and
    /// option arrangement.
    pub fn tuple_key(&self) -> (String, String, u8, [u8; 4]) {
        (
            self.shape_a.clone(),
            self.shape_c.clone(),
            self.transform.quarter_turns(),
            self.option_transforms.map(Rotation::quarter_turns),
        )
    }

    fn to_record(&self) -> Record {
        let d = |i: usize| self.option_transforms[i].description().to_string();
        Record {
            question: self.question.clone(),
            answer: self.answer.as_str().to_string(),
            dataset: DATASET_NAME.to_string(),
            transform_type: TRANSFORM_TYPE.to_string(),
            transform_description: self.transform.description().to_string(),
            shape_a_name: self.shape_a.clone(),
            shape_c_name: self.shape_c.clone(),
            shape_a_family: self.shape_a_family.as_str().to_string(),
            shape_c_family: self.shape_c_family.as_str().to_string(),
            option_transforms: OptionMap { a: d(0), b: d(1), c: d(2), d: d(3) },
            intermediate_key: self.intermediate_key.clone(),
        }
    }

    /// Single-line JSON with the fixed key order.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&self.to_record()).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let r: Record = serde_json::from_str(line)?;
        if r.dataset != DATASET_NAME || r.transform_type != TRANSFORM_TYPE {
            return Err(Error::Dataset(format!(
                "unexpected dataset/transform_type {}/{}",
                r.dataset, r.transform_type
            )));
        }
        let transform = Rotation::from_description(&r.transform_description)?;
        let o = &r.option_transforms;
        let options = [
            Rotation::from_description(&o.a)?,
            Rotation::from_description(&o.b)?,
            Rotation::from_description(&o.c)?,
            Rotation::from_description(&o.d)?,
        ];
        let s = AnalogySample {
            question: r.question,
            answer: Letter::parse(&r.answer)?,
            shape_a: r.shape_a_name,
            shape_a_family: Family::parse(&r.shape_a_family)?,
            shape_c: r.shape_c_name,
            shape_c_family: Family::parse(&r.shape_c_family)?,
            transform,
            option_transforms: options,
            intermediate_key: r.intermediate_key,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let hits = self.option_transforms.iter().filter(|&&t| t == self.transform).count();
        let mut sorted = self.option_transforms;
        sorted.sort();
        if hits != 1 || sorted != Rotation::ALL {
            return Err(Error::Dataset("option transforms are not the four distinct rotations".into()));
        }
        if self.option_transforms[self.answer.index()] != self.transform {
            return Err(Error::Dataset("answer does not point at the transformed option".into()));
        }
        if self.question != question_text(self.transform) {
            return Err(Error::Dataset("question text does not match the template".into()));
        }
        if self.intermediate_key != intermediate_key(&self.shape_c, self.transform) {
            return Err(Error::Dataset(format!("intermediate key {:?} inconsistent", self.intermediate_key)));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionMap {
    a: String,
    b: String,
    c: String,
    d: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    question: String,
    answer: String,
    dataset: String,
    transform_type: String,
    transform_description: String,
    #[serde(rename = "shape_A_name")]
    shape_a_name: String,
    #[serde(rename = "shape_C_name")]
    shape_c_name: String,
    #[serde(rename = "shape_A_family")]
    shape_a_family: String,
    #[serde(rename = "shape_C_family")]
    shape_c_family: String,
    option_transforms: OptionMap,
    intermediate_key: String,
}

/// Draws a family by [`FAMILY_MIX`], then a shape uniformly within it.
pub fn draw_shape<'a, R: Rng>(rng: &mut R, library: &'a [PolyominoShape]) -> Result<&'a PolyominoShape> {
    let available: Vec<(Family, f64)> =
        FAMILY_MIX.iter().copied().filter(|(f, _)| library.iter().any(|s| s.family == *f)).collect();
    let total: f64 = available.iter().map(|(_, w)| w).sum();
    if available.is_empty() {
        return Err(Error::Input("empty shape library".into()));
    }
    let mut u = rng.random::<f64>() * total;
    let mut family = available[available.len() - 1].0;
    for &(f, w) in &available {
        if u < w {
            family = f;
            break;
        }
        u -= w;
    }
    let members: Vec<&PolyominoShape> = library.iter().filter(|s| s.family == family).collect();
    Ok(members[rng.random_range(0..members.len())])
}

/// Draws A, C and the transform; the correct rotation of C is placed under
/// `answer` and the other three rotations fill the remaining letters in
/// random order.
pub fn generate_sample_with_answer<R: Rng>(
    rng: &mut R,
    library: &[PolyominoShape],
    answer: Letter,
) -> Result<AnalogySample> {
    let a = draw_shape(rng, library)?;
    let c = draw_shape(rng, library)?;
    let transform = Rotation::ALL[rng.random_range(0..4)];
    let mut others: Vec<Rotation> = Rotation::ALL.into_iter().filter(|&t| t != transform).collect();
    others.shuffle(rng);
    let mut options = [transform; 4];
    let mut rest = others.into_iter();
    for (i, slot) in options.iter_mut().enumerate() {
        if i != answer.index() {
            *slot = rest.next().expect("three distractors");
        }
    }
    AnalogySample::new(a, c, transform, options)
}

pub fn generate_sample<R: Rng>(rng: &mut R, library: &[PolyominoShape]) -> Result<AnalogySample> {
    let answer = Letter::ALL[rng.random_range(0..4)];
    generate_sample_with_answer(rng, library, answer)
}
