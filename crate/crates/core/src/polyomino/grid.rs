use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sample::AnalogySample;
use super::shape::{rotate_cells, Cell, PolyominoShape};
use crate::error::{Error, Result};
use crate::seeds::hash_u64;

pub const DEFAULT_PANEL: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Empty,
    Filled,
    Mask,
    Sep,
}

impl CellKind {
    pub const ALL: [CellKind; 4] = [CellKind::Empty, CellKind::Filled, CellKind::Mask, CellKind::Sep];

    pub fn code(self) -> char {
        match self {
            CellKind::Empty => '.',
            CellKind::Filled => '#',
            CellKind::Mask => 'M',
            CellKind::Sep => '|',
        }
    }

    pub fn from_code(c: char) -> Result<CellKind> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.code() == c)
            .ok_or_else(|| Error::Input(format!("unknown cell code {c:?}")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PanelTag {
    A,
    B,
    C,
    OptionA,
    OptionB,
    OptionC,
    OptionD,
    Intermediate,
}

impl PanelTag {
    /// Left-to-right order of the input composite.
    pub const INPUT: [PanelTag; 7] = [
        PanelTag::A,
        PanelTag::B,
        PanelTag::C,
        PanelTag::OptionA,
        PanelTag::OptionB,
        PanelTag::OptionC,
        PanelTag::OptionD,
    ];

    pub fn option(i: usize) -> PanelTag {
        PanelTag::INPUT[3 + i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridImage {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<CellKind>,
    pub panels: Vec<(PanelTag, Rect)>,
}

impl GridImage {
    /// Blank input composite: seven `p x p` panels with one SEP column
    /// between neighbours.
    pub fn input_layout(p: usize) -> GridImage {
        let width = 7 * p + 6;
        let mut cells = vec![CellKind::Empty; p * width];
        let mut panels = Vec::new();
        for (i, tag) in PanelTag::INPUT.into_iter().enumerate() {
            let col = i * (p + 1);
            panels.push((tag, Rect { row: 0, col, height: p, width: p }));
            if i + 1 < 7 {
                for r in 0..p {
                    cells[r * width + col + p] = CellKind::Sep;
                }
            }
        }
        GridImage { height: p, width, cells, panels }
    }

    pub fn single_panel(p: usize) -> GridImage {
        GridImage {
            height: p,
            width: p,
            cells: vec![CellKind::Empty; p * p],
            panels: vec![(PanelTag::Intermediate, Rect { row: 0, col: 0, height: p, width: p })],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> CellKind {
        self.cells[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, k: CellKind) {
        self.cells[r * self.width + c] = k;
    }

    pub fn rect(&self, tag: PanelTag) -> Result<Rect> {
        self.panels
            .iter()
            .find(|(t, _)| *t == tag)
            .map(|(_, r)| *r)
            .ok_or_else(|| Error::Input(format!("image has no panel {tag:?}")))
    }

    /// Row-major cells of one panel.
    pub fn panel_cells(&self, tag: PanelTag) -> Result<Vec<CellKind>> {
        let r = self.rect(tag)?;
        let mut out = Vec::with_capacity(r.height * r.width);
        for i in 0..r.height {
            for j in 0..r.width {
                out.push(self.get(r.row + i, r.col + j));
            }
        }
        Ok(out)
    }

    /// FILLED cells of one panel, normalized to the shape's own origin.
    pub fn panel_shape(&self, tag: PanelTag) -> Result<Vec<Cell>> {
        let r = self.rect(tag)?;
        let mut cells = Vec::new();
        for i in 0..r.height {
            for j in 0..r.width {
                if self.get(r.row + i, r.col + j) == CellKind::Filled {
                    cells.push((i as i32, j as i32));
                }
            }
        }
        Ok(super::shape::normalize(&cells))
    }

    pub fn count(&self, k: CellKind) -> usize {
        self.cells.iter().filter(|&&c| c == k).count()
    }

    /// Text form: `"H W"` then one line of cell codes per row.
    pub fn to_sidecar(&self) -> String {
        let mut s = format!("{} {}\n", self.height, self.width);
        for r in 0..self.height {
            s.extend(self.cells[r * self.width..(r + 1) * self.width].iter().map(|k| k.code()));
            s.push('\n');
        }
        s
    }

    /// Parses the text form; the panel layout is recovered from the
    /// dimensions (a square image is a single panel).
    pub fn from_sidecar(text: &str) -> Result<GridImage> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Input("empty grid file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| Error::Input(format!("bad grid header {header:?}"))))
            .collect::<Result<_>>()?;
        let [h, w] = dims[..] else {
            return Err(Error::Input(format!("bad grid header {header:?}")));
        };
        let mut img = if h == w {
            GridImage::single_panel(h)
        } else if w == 7 * h + 6 {
            GridImage::input_layout(h)
        } else {
            return Err(Error::Input(format!("unrecognized grid layout {h}x{w}")));
        };
        for r in 0..h {
            let line = lines.next().ok_or_else(|| Error::Input(format!("grid truncated at row {r}")))?;
            let codes: Vec<char> = line.chars().collect();
            if codes.len() != w {
                return Err(Error::Input(format!("grid row {r} has {} cells, expected {w}", codes.len())));
            }
            for (c, ch) in codes.into_iter().enumerate() {
                img.set(r, c, CellKind::from_code(ch)?);
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Input("trailing rows in grid file".into()));
        }
        Ok(img)
    }
}

/// Paints `cells` into panel `tag` at `offset` inside the panel.
fn paint(img: &mut GridImage, tag: PanelTag, cells: &[Cell], offset: (usize, usize)) -> Result<()> {
    let r = img.rect(tag)?;
    for &(cr, cc) in cells {
        let (i, j) = (offset.0 + cr as usize, offset.1 + cc as usize);
        if i >= r.height || j >= r.width {
            return Err(Error::Input(format!("shape does not fit a {}x{} panel", r.height, r.width)));
        }
        img.set(r.row + i, r.col + j, CellKind::Filled);
    }
    Ok(())
}

fn random_offset(rng: &mut ChaCha8Rng, cells: &[Cell], p: usize) -> Result<(usize, usize)> {
    let (h, w) = super::shape::extent(cells);
    if h > p || w > p {
        return Err(Error::Input(format!("{h}x{w} shape exceeds {p}x{p} panel")));
    }
    Ok((rng.random_range(0..=p - h), rng.random_range(0..=p - w)))
}

fn lookup<'a>(library: &'a [PolyominoShape], name: &str) -> Result<&'a PolyominoShape> {
    library.iter().find(|s| s.name == name).ok_or_else(|| Error::Dataset(format!("shape {name:?} not in library")))
}

/// Renders the input composite and the colorless intermediate panel.
///
/// Each panel places its shape at an offset drawn from a generator seeded by
/// the sample's own JSON, so rendering is a pure function of the record. The
/// intermediate reuses the offset of the correct option.
pub fn rasterize(sample: &AnalogySample, library: &[PolyominoShape], p: usize) -> Result<(GridImage, GridImage)> {
    let a = lookup(library, &sample.shape_a)?;
    let c = lookup(library, &sample.shape_c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash_u64(sample.to_json_line().as_bytes()));
    let mut input = GridImage::input_layout(p);
    let mut contents: Vec<(PanelTag, Vec<Cell>)> = vec![
        (PanelTag::A, a.cells.clone()),
        (PanelTag::B, rotate_cells(&a.cells, sample.transform)),
        (PanelTag::C, c.cells.clone()),
    ];
    for (i, &t) in sample.option_transforms.iter().enumerate() {
        contents.push((PanelTag::option(i), rotate_cells(&c.cells, t)));
    }
    let mut answer_offset = (0, 0);
    for (tag, cells) in &contents {
        let off = random_offset(&mut rng, cells, p)?;
        paint(&mut input, *tag, cells, off)?;
        if *tag == PanelTag::option(sample.answer.index()) {
            answer_offset = off;
        }
    }
    let mut inter = GridImage::single_panel(p);
    paint(&mut inter, PanelTag::Intermediate, &rotate_cells(&c.cells, sample.transform), answer_offset)?;
    Ok((input, inter))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_geometry() {
        let img = GridImage::input_layout(8);
        assert_eq!((img.height, img.width), (8, 62));
        assert_eq!(img.count(CellKind::Sep), 6 * 8);
        let rects: Vec<Rect> = img.panels.iter().map(|p| p.1).collect();
        for (i, a) in rects.iter().enumerate() {
            for b in &rects[i + 1..] {
                assert!(a.col + a.width <= b.col, "panels overlap");
            }
        }
    }

    #[test]
    fn sidecar_round_trip_and_errors() {
        let mut img = GridImage::input_layout(8);
        img.set(3, 4, CellKind::Filled);
        img.set(0, 9, CellKind::Mask);
        let text = img.to_sidecar();
        assert!(text.starts_with("8 62\n"));
        assert_eq!(GridImage::from_sidecar(&text).unwrap(), img);
        assert!(GridImage::from_sidecar("2 2\n.x\n..\n").is_err());
        assert!(GridImage::from_sidecar("2 2\n..\n").is_err());
        assert!(GridImage::from_sidecar("2 3\n...\n...\n").is_err());
    }
}
