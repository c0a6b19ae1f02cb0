use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Cell = (i32, i32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tetromino,
    Pentomino,
    Hexomino,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Tetromino, Family::Pentomino, Family::Hexomino];

    pub fn size(self) -> usize {
        match self {
            Family::Tetromino => 4,
            Family::Pentomino => 5,
            Family::Hexomino => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tetromino => "tetromino",
            Family::Pentomino => "pentomino",
            Family::Hexomino => "hexomino",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Dataset(format!("unknown shape family {s:?}")))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Clockwise rotation by a multiple of 90 degrees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn quarter_turns(self) -> u8 {
        self as u8
    }

    pub fn from_quarter_turns(q: u32) -> Rotation {
        Rotation::ALL[(q % 4) as usize]
    }

    pub fn degrees(self) -> u32 {
        90 * self.quarter_turns() as u32
    }

    pub fn from_degrees(d: u32) -> Result<Rotation> {
        match d {
            0 | 90 | 180 | 270 => Ok(Rotation::from_quarter_turns(d / 90)),
            _ => Err(Error::Dataset(format!("rotation of {d} degrees is not a quarter turn"))),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Rotation::R0 => "identity",
            Rotation::R90 => "90° clockwise rotation",
            Rotation::R180 => "180° clockwise rotation",
            Rotation::R270 => "270° clockwise rotation",
        }
    }

    pub fn from_description(s: &str) -> Result<Rotation> {
        Rotation::ALL
            .into_iter()
            .find(|r| r.description() == s)
            .ok_or_else(|| Error::Dataset(format!("unknown transform description {s:?}")))
    }

    pub fn compose(self, other: Rotation) -> Rotation {
        Rotation::from_quarter_turns(self.quarter_turns() as u32 + other.quarter_turns() as u32)
    }

    pub fn inverse(self) -> Rotation {
        Rotation::from_quarter_turns(4 - self.quarter_turns() as u32)
    }
}

/// Shifts cells so the minimum row and column are 0, and sorts them.
pub fn normalize(cells: &[Cell]) -> Vec<Cell> {
    let r0 = cells.iter().map(|c| c.0).min().unwrap_or(0);
    let c0 = cells.iter().map(|c| c.1).min().unwrap_or(0);
    let mut out: Vec<Cell> = cells.iter().map(|&(r, c)| (r - r0, c - c0)).collect();
    out.sort_unstable();
    out
}

/// `(rows, cols)` of the bounding box of normalized cells.
pub fn extent(cells: &[Cell]) -> (usize, usize) {
    let h = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
    let w = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
    (h as usize, w as usize)
}

/// One clockwise quarter turn: `(r, c) -> (c, H - 1 - r)`, renormalized.
pub fn rotate_cw(cells: &[Cell]) -> Vec<Cell> {
    let n = normalize(cells);
    let h = extent(&n).0 as i32;
    normalize(&n.iter().map(|&(r, c)| (c, h - 1 - r)).collect::<Vec<_>>())
}

pub fn rotate_cells(cells: &[Cell], t: Rotation) -> Vec<Cell> {
    let mut out = normalize(cells);
    for _ in 0..t.quarter_turns() {
        out = rotate_cw(&out);
    }
    out
}

pub fn mirror(cells: &[Cell]) -> Vec<Cell> {
    normalize(&cells.iter().map(|&(r, c)| (r, -c)).collect::<Vec<_>>())
}

pub fn is_connected(cells: &[Cell]) -> bool {
    let Some(&first) = cells.first() else { return false };
    let set: BTreeSet<Cell> = cells.iter().copied().collect();
    let mut seen = BTreeSet::from([first]);
    let mut stack = vec![first];
    while let Some((r, c)) = stack.pop() {
        for n in [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)] {
            if set.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == set.len()
}

/// Number of distinct orientations under rotation (4 for asymmetric shapes).
pub fn rotation_orbit(cells: &[Cell]) -> usize {
    Rotation::ALL.iter().map(|&t| rotate_cells(cells, t)).collect::<BTreeSet<_>>().len()
}

/// Lexicographically smallest rotation, used as the canonical orientation.
pub fn canonical(cells: &[Cell]) -> Vec<Cell> {
    Rotation::ALL.iter().map(|&t| rotate_cells(cells, t)).min().unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PolyominoShape {
    pub name: String,
    pub family: Family,
    /// Normalized, sorted cell coordinates.
    pub cells: Vec<Cell>,
}

impl PolyominoShape {
    pub fn new(name: impl Into<String>, cells: &[Cell]) -> Result<Self> {
        let cells = normalize(cells);
        let family = match cells.len() {
            4 => Family::Tetromino,
            5 => Family::Pentomino,
            6 => Family::Hexomino,
            n => return Err(Error::Input(format!("{n} cells is not a tetromino, pentomino or hexomino"))),
        };
        if cells.iter().collect::<BTreeSet<_>>().len() != cells.len() {
            return Err(Error::Input("duplicate cells".into()));
        }
        if !is_connected(&cells) {
            return Err(Error::Input("cells are not edge-connected".into()));
        }
        Ok(PolyominoShape { name: name.into(), family, cells })
    }

    pub fn extent(&self) -> (usize, usize) {
        extent(&self.cells)
    }
}

pub fn rotate(shape: &PolyominoShape, t: Rotation) -> PolyominoShape {
    PolyominoShape { name: shape.name.clone(), family: shape.family, cells: rotate_cells(&shape.cells, t) }
}

/// Every fixed polyomino with `n` cells, normalized, grown cell by cell.
pub fn fixed_polyominoes(n: usize) -> BTreeSet<Vec<Cell>> {
    let mut level: BTreeSet<Vec<Cell>> = BTreeSet::from([vec![(0, 0)]]);
    for _ in 1..n {
        let mut next = BTreeSet::new();
        for shape in &level {
            let set: BTreeSet<Cell> = shape.iter().copied().collect();
            for &(r, c) in shape {
                for cand in [(r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)] {
                    if !set.contains(&cand) {
                        let mut grown = shape.clone();
                        grown.push(cand);
                        next.insert(normalize(&grown));
                    }
                }
            }
        }
        level = next;
    }
    level
}

/// Rotation classes of `n`-cell polyominoes (reflections kept distinct),
/// as canonical orientations.
pub fn one_sided_polyominoes(n: usize) -> BTreeSet<Vec<Cell>> {
    fixed_polyominoes(n).iter().map(|s| canonical(s)).collect()
}

const TETROMINO_NAMES: [(&str, [Cell; 4]); 3] = [
    ("T4", [(0, 0), (0, 1), (0, 2), (1, 1)]),
    ("L4", [(0, 0), (1, 0), (2, 0), (2, 1)]),
    ("J4", [(0, 1), (1, 1), (2, 1), (2, 0)]),
];

const PENTOMINO_NAMES: [(&str, [Cell; 5]); 9] = [
    ("F", [(0, 1), (0, 2), (1, 0), (1, 1), (2, 1)]),
    ("L", [(0, 0), (1, 0), (2, 0), (3, 0), (3, 1)]),
    ("N", [(0, 1), (1, 1), (2, 0), (2, 1), (3, 0)]),
    ("P", [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0)]),
    ("T", [(0, 0), (0, 1), (0, 2), (1, 1), (2, 1)]),
    ("U", [(0, 0), (0, 2), (1, 0), (1, 1), (1, 2)]),
    ("V", [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)]),
    ("W", [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)]),
    ("Y", [(0, 1), (1, 0), (1, 1), (2, 1), (3, 1)]),
];

/// Conventional names keyed by canonical orientation. Pentominoes take
/// their letter plus "5"; the mirror image of a chiral one adds "_m".
fn conventional_names() -> BTreeMap<Vec<Cell>, String> {
    let mut names = BTreeMap::new();
    for (name, cells) in TETROMINO_NAMES {
        names.insert(canonical(&cells), name.to_string());
    }
    for (letter, cells) in PENTOMINO_NAMES {
        let base = canonical(&cells);
        let mirrored = canonical(&mirror(&cells));
        if mirrored != base {
            names.insert(mirrored, format!("{letter}5_m"));
        }
        names.insert(base, format!("{letter}5"));
    }
    names
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LibraryConfig {
    pub families: Vec<Family>,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        LibraryConfig { families: Family::ALL.to_vec() }
    }
}

/// All one-sided polyominoes of the selected families whose four rotations
/// are pairwise distinct, grouped by family in size order. Tetrominoes and
/// pentominoes carry letter names; hexominoes are numbered `H_01`, `H_02`, ...
/// in canonical order.
pub fn build_shape_library(config: &LibraryConfig) -> Vec<PolyominoShape> {
    let names = conventional_names();
    let mut out = Vec::new();
    for family in Family::ALL {
        if !config.families.contains(&family) {
            continue;
        }
        let mut shapes: Vec<PolyominoShape> = Vec::new();
        let mut counter = 0;
        for cells in one_sided_polyominoes(family.size()) {
            if rotation_orbit(&cells) != 4 {
                continue;
            }
            let name = match names.get(&cells) {
                Some(n) => n.clone(),
                None => {
                    counter += 1;
                    format!("H_{counter:02}")
                }
            };
            shapes.push(PolyominoShape { name, family, cells });
        }
        if family != Family::Hexomino {
            shapes.sort_by(|a, b| a.name.cmp(&b.name));
        }
        out.extend(shapes);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_descriptions_round_trip() {
        for t in Rotation::ALL {
            assert_eq!(Rotation::from_description(t.description()).unwrap(), t);
            assert_eq!(Rotation::from_degrees(t.degrees()).unwrap(), t);
            assert_eq!(t.compose(t.inverse()), Rotation::R0);
        }
        assert_eq!(Rotation::R0.description(), "identity");
        assert!(Rotation::from_degrees(45).is_err());
    }

    #[test]
    fn l_tetromino_quarter_turn_matches_coordinate_loop() {
        let l = [(0, 0), (1, 0), (2, 0), (2, 1)];
        // Paint the 3x2 box, rotate the picture clockwise into a 2x3 box.
        let (h, w) = (3usize, 2usize);
        let mut grid = vec![vec![false; w]; h];
        for &(r, c) in &l {
            grid[r as usize][c as usize] = true;
        }
        let mut want = Vec::new();
        for (r, row) in grid.iter().enumerate() {
            for (c, &on) in row.iter().enumerate() {
                if on {
                    want.push((c as i32, (h - 1 - r) as i32));
                }
            }
        }
        want.sort();
        assert_eq!(rotate_cells(&l, Rotation::R90), want);
        assert_eq!(want, vec![(0, 0), (0, 1), (0, 2), (1, 0)]);
    }

    #[test]
    fn library_names_are_unique() {
        let lib = build_shape_library(&LibraryConfig::default());
        let names: BTreeSet<_> = lib.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names.len(), lib.len());
        assert!(names.contains("Y5") && names.contains("Y5_m") && names.contains("H_48"));
    }

    #[test]
    fn shape_constructor_validates() {
        assert!(PolyominoShape::new("x", &[(0, 0), (0, 1), (1, 1), (1, 2)]).is_ok());
        assert!(PolyominoShape::new("x", &[(0, 0), (0, 2), (1, 0), (1, 1)]).is_err());
        assert!(PolyominoShape::new("x", &[(0, 0), (0, 1), (0, 2)]).is_err());
    }
}
