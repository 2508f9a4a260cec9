//! Frame preprocessing applied before frames are sent to the agent.
//!
//! All operations work on [`RasterImage`], an 8-bit RGB raster that is read
//! from and written to binary PPM (P6) files.

mod blur;
mod clahe;
mod gray_world;
mod ppm;

pub use blur::{blur_boxes, gaussian_kernel, DEFAULT_BLUR_SIGMA};
pub use clahe::{clahe, ClaheParams};
pub use gray_world::gray_world;
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PreprocError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    Format(String),
}

/// Row-major interleaved RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PreprocError> {
        if data.len() != width * height * 3 {
            return Err(PreprocError::Format(format!(
                "{} samples for a {width}x{height} RGB image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub(crate) fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }
}

/// Integer BT.601 luma with weights 77/150/29 over 256.
#[inline]
pub(crate) fn luma([r, g, b]: [u8; 3]) -> u8 {
    ((77 * r as u32 + 150 * g as u32 + 29 * b as u32 + 128) >> 8) as u8
}
