//! Rotation-analogy puzzles over polyominoes: shape enumeration, sample
//! generation, rasterization and dataset files.

pub mod dataset;
pub mod grid;
pub mod sample;
pub mod shape;

pub use dataset::{
    candidate_tuple_count, family_mix, generate_dataset, grids_dir, letter_mix, load_split, write_dataset,
    DatasetConfig, GeneratedDataset, LoadedSample, Split,
};
pub use grid::{rasterize, CellKind, GridImage, PanelTag, Rect, DEFAULT_PANEL};
pub use sample::{generate_sample, AnalogySample, Letter};
pub use shape::{build_shape_library, rotate, Family, LibraryConfig, PolyominoShape, Rotation};
