//! Minimal binary Netpbm codecs: PGM (P5) for intensity images, PBM (P4) for
//! binary maps.

use std::io::Write;

/// Decoded PGM contents, rescaled to 0..=255 when maxval differs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("missing {what}"))
    }
}

fn parse_header<'a>(bytes: &'a [u8], magic: &[u8; 2]) -> Result<Header<'a>, String> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(format!(
            "not a {} file",
            std::str::from_utf8(magic).unwrap_or("?")
        ));
    }
    Ok(Header { bytes, pos: 2 })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Gray8, String> {
    let mut h = parse_header(bytes, b"P5")?;
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    if maxval == 0 || maxval > 65535 {
        return Err(format!("invalid maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    h.pos += 1;
    let raster = &bytes[h.pos.min(bytes.len())..];
    let n = width * height;
    let data = if maxval < 256 {
        if raster.len() < n {
            return Err(format!("raster truncated: {} of {n} bytes", raster.len()));
        }
        let raw = &raster[..n];
        if maxval == 255 {
            raw.to_vec()
        } else {
            raw.iter()
                .map(|&v| rescale(u32::from(v), maxval as u32))
                .collect()
        }
    } else {
        if raster.len() < 2 * n {
            return Err(format!(
                "raster truncated: {} of {} bytes",
                raster.len(),
                2 * n
            ));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| rescale(u32::from(u16::from_be_bytes([c[0], c[1]])), maxval as u32))
            .collect()
    };
    Ok(Gray8 {
        width,
        height,
        data,
    })
}

fn rescale(v: u32, maxval: u32) -> u8 {
    ((v.min(maxval) * 255 + maxval / 2) / maxval) as u8
}

pub fn encode_pgm(width: usize, height: usize, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + 20);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to Vec");
    out.extend_from_slice(data);
    out
}

/// PBM rows are packed MSB-first and padded to a byte; 1 = black = set.
pub fn encode_pbm(width: usize, height: usize, bits: &[bool]) -> Vec<u8> {
    let row_bytes = width.div_ceil(8);
    let mut out = Vec::with_capacity(row_bytes * height + 20);
    write!(out, "P4\n{width} {height}\n").expect("write to Vec");
    for row in bits.chunks(width).take(height) {
        let mut packed = vec![0u8; row_bytes];
        for (x, &b) in row.iter().enumerate() {
            if b {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

pub fn decode_pbm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>), String> {
    let mut h = parse_header(bytes, b"P4")?;
    let width = h.number("width")?;
    let height = h.number("height")?;
    h.pos += 1;
    let row_bytes = width.div_ceil(8);
    let raster = &bytes[h.pos.min(bytes.len())..];
    if raster.len() < row_bytes * height {
        return Err("raster truncated".into());
    }
    let mut bits = Vec::with_capacity(width * height);
    for row in raster.chunks(row_bytes).take(height) {
        for x in 0..width {
            bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok((width, height, bits))
}
