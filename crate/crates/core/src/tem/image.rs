use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const PATCH_SIZE: usize = 16;

/// 8-bit RGB image, pixels row-major with channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::Image(format!(
                "{width}×{height} image needs {} bytes, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: rgb.repeat(width * height),
        }
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Binary PPM (`P6`) with maxval 255; `#` comments allowed in the header.
pub fn parse_ppm(bytes: &[u8]) -> Result<RgbImage> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Image("truncated PPM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(Error::Image(format!(
            "expected P6 magic, found {:?}",
            fields[0]
        )));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Image(format!("bad PPM {what} {s:?}")))
    };
    let width = num(&fields[1], "width")?;
    let height = num(&fields[2], "height")?;
    let maxval = num(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(Error::Image(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Image("missing raster".into()));
    }
    pos += 1;
    let need = width * height * 3;
    if bytes.len() - pos != need {
        return Err(Error::Image(format!(
            "raster has {} bytes, {width}×{height} needs {need}",
            bytes.len() - pos
        )));
    }
    RgbImage::new(width, height, bytes[pos..].to_vec())
}

/// Non-overlapping square patches in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    /// `[rows·cols × patch_size²·3]`, values in [0, 1].
    pub patches: Tensor,
}

impl PatchGrid {
    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    /// Grid (row, col) of patch `i`.
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.cols, i % self.cols)
    }
}

/// Each patch is flattened with pixels row-major and r, g, b interleaved
/// per pixel. Dimensions must be multiples of `patch_size`.
pub fn patchify(img: &RgbImage, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0
        || !img.width.is_multiple_of(patch_size)
        || !img.height.is_multiple_of(patch_size)
    {
        return Err(Error::Image(format!(
            "{}×{} is not divisible into {patch_size}×{patch_size} patches",
            img.width, img.height
        )));
    }
    let rows = img.height / patch_size;
    let cols = img.width / patch_size;
    let len = patch_size * patch_size * 3;
    let mut data = Vec::with_capacity(rows * cols * len);
    for pr in 0..rows {
        for pc in 0..cols {
            for y in 0..patch_size {
                let start = ((pr * patch_size + y) * img.width + pc * patch_size) * 3;
                data.extend(
                    img.pixels[start..start + patch_size * 3]
                        .iter()
                        .map(|&b| b as f64 / 255.0),
                );
            }
        }
    }
    Ok(PatchGrid {
        patch_size,
        rows,
        cols,
        patches: Tensor::new(vec![rows * cols, len], data)?,
    })
}
