//! Fixed token inventory and the question tokenizer.

use crate::error::{Error, Result};
use crate::polyomino::sample::question_text;
use crate::polyomino::{Letter, Rotation};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const LATENT_START: usize = 2;
pub const LATENT_END: usize = 3;
pub const PAUSE: usize = 4;
pub const TAG_A: usize = 5;
pub const TAG_B: usize = 6;
pub const TAG_C: usize = 7;
/// Option letters a..d occupy consecutive ids; they double as the tags of
/// the option panels and as the answer tokens.
pub const LETTER_BASE: usize = 8;
const QUESTION_BASE: usize = 12;

/// Token id of an option letter.
pub fn letter_id(l: Letter) -> usize {
    LETTER_BASE + l.index()
}

/// Tag token of the `i`-th input panel (A, B, C, a, b, c, d).
pub fn panel_tag(i: usize) -> usize {
    match i {
        0 => TAG_A,
        1 => TAG_B,
        2 => TAG_C,
        _ => LETTER_BASE + i - 3,
    }
}

const SPECIAL_NAMES: [&str; 12] =
    ["<bos>", "<eos>", "<ls>", "<le>", "<pause>", "<A>", "<B>", "<C>", "a", "b", "c", "d"];

/// Token inventory: specials, panel tags, letters, then question entries.
///
/// Question entries are whitespace-separated word sequences. The fixed
/// sentences of the question template are single entries; the transform
/// descriptions contribute one entry per word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    question_entries: Vec<Vec<String>>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::from_template()
    }
}

impl Vocab {
    /// Builds the vocabulary from the four possible question strings: the
    /// parts shared by all of them become phrase entries, the rest words.
    pub fn from_template() -> Vocab {
        let texts: Vec<Vec<String>> =
            Rotation::ALL.iter().map(|&t| question_text(t).split_whitespace().map(str::to_string).collect()).collect();
        let prefix = common_prefix(&texts);
        let suffix = common_suffix(&texts);
        // Split the shared prefix at the sentence boundary ("...options?").
        let cut = texts[0][..prefix].iter().position(|w| w.ends_with('?')).map_or(prefix, |i| i + 1);
        let mut entries: Vec<Vec<String>> = vec![texts[0][..cut].to_vec()];
        if cut < prefix {
            entries.push(texts[0][cut..prefix].to_vec());
        }
        entries.push(texts[0][texts[0].len() - suffix..].to_vec());
        for t in &texts {
            for w in &t[prefix..t.len() - suffix] {
                let e = vec![w.clone()];
                if !entries.contains(&e) {
                    entries.push(e);
                }
            }
        }
        Vocab { question_entries: entries }
    }

    pub fn len(&self) -> usize {
        QUESTION_BASE + self.question_entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token_name(&self, id: usize) -> Option<String> {
        if id < QUESTION_BASE {
            return Some(SPECIAL_NAMES[id].to_string());
        }
        self.question_entries.get(id - QUESTION_BASE).map(|e| e.join(" "))
    }

    /// Greedy longest-match tokenization over whitespace-separated words.
    pub fn tokenize_question(&self, text: &str) -> Result<Vec<usize>> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let best = self
                .question_entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.len() <= words.len() - i && e.iter().zip(&words[i..]).all(|(a, b)| a == b))
                .max_by_key(|(j, e)| (e.len(), usize::MAX - j));
            match best {
                Some((j, e)) => {
                    out.push(QUESTION_BASE + j);
                    i += e.len();
                }
                None => return Err(Error::Dataset(format!("question word {:?} is not in the vocabulary", words[i]))),
            }
        }
        Ok(out)
    }
}

fn common_prefix(texts: &[Vec<String>]) -> usize {
    let min = texts.iter().map(Vec::len).min().unwrap_or(0);
    (0..min).take_while(|&i| texts.iter().all(|t| t[i] == texts[0][i])).count()
}

fn common_suffix(texts: &[Vec<String>]) -> usize {
    let min = texts.iter().map(Vec::len).min().unwrap_or(0);
    (0..min).take_while(|&i| texts.iter().all(|t| t[t.len() - 1 - i] == texts[0][texts[0].len() - 1 - i])).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inventory() {
        let v = Vocab::from_template();
        // 3 sentences + identity. 90° 180° 270° clockwise rotation.
        assert_eq!(v.len(), 12 + 3 + 6);
        assert_eq!(v.token_name(LETTER_BASE + 2).unwrap(), "c");
        assert!(v.token_name(QUESTION_BASE).unwrap().starts_with("Image (A)"));
    }

    #[test]
    fn question_lengths() {
        let v = Vocab::from_template();
        for t in Rotation::ALL {
            let ids = v.tokenize_question(&question_text(t)).unwrap();
            assert_eq!(ids.len(), if t == Rotation::R0 { 4 } else { 6 }, "{t:?}");
        }
        let a = v.tokenize_question(&question_text(Rotation::R90)).unwrap();
        let b = v.tokenize_question(&question_text(Rotation::R270)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn unseen_word_is_an_error() {
        let v = Vocab::from_template();
        assert!(matches!(v.tokenize_question("Image (A) is blue"), Err(Error::Dataset(_))));
    }
}
