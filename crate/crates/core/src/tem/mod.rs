//! Transformer encoder over a joint sequence of text tokens and image
//! patches.

mod encoder;
mod image;
mod text;

pub use encoder::{init_tem, tem_forward, TemConfig, TemMask, TemOutput};
pub use image::{parse_ppm, patchify, PatchGrid, RgbImage, PATCH_SIZE};
pub use text::{tokenize, Vocabulary, MASK, MASK_ID, PAD, PAD_ID, UNK, UNK_ID};
