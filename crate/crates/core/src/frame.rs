use crate::error::{Error, Result};

/// Width and height of a pixel lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
}

impl Geometry {
    pub fn new(width: usize, height: usize) -> Self {
        Geometry { width, height }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn ensure_same(&self, other: Geometry) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width: other.width,
                height: other.height,
            })
        }
    }
}

/// One luminance frame, row-major, at normalized time `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub t: u64,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, t: u64, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::ParameterOutOfRange {
                name: "frame size",
                value: (width * height) as f64,
                expected: "width > 0 and height > 0",
            });
        }
        if data.len() != width * height {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: width * height,
            });
        }
        Ok(Frame {
            width,
            height,
            t,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, t: u64, value: u8) -> Self {
        Frame {
            width,
            height,
            t,
            data: vec![value; width * height],
        }
    }

    /// Builds a frame from interleaved RGB triples.
    pub fn from_rgb(width: usize, height: usize, t: u64, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::LengthMismatch {
                left: rgb.len(),
                right: 3 * width * height,
            });
        }
        let data = rgb
            .chunks_exact(3)
            .map(|p| to_luminance(p[0], p[1], p[2]))
            .collect();
        Frame::new(width, height, t, data)
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// BT.601 luma: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn to_luminance(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}
