//! Image datasets: IDX loading, label codebooks and synthetic obstructions.

mod codebook;
mod idx;
mod obstruction;

pub use codebook::{make_codebook, LabelCodebook, DEFAULT_CODE_DENSITY, DEFAULT_CODE_DIM};
pub use idx::{load_idx, load_split, resolve_split, save_idx, ImageSet, Split};
pub use obstruction::{apply_obstruction, obstruction_mask, Obstruction, ObstructionKind};

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_DIM: usize = IMAGE_SIDE * IMAGE_SIDE;
