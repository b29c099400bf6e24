//! Background behavior images: per-pixel maximum or mean of the training
//! events, and their on-disk format.
//!
//! File layout (little endian):
//!
//! ```text
//! "BSUB" | version u16 = 1 | kind u8 (0 max, 1 mean) | width u32 | height u32
//! | metadata length u32 | metadata (UTF-8 key=value lines)
//! | width*height f32 values | CRC32 of every preceding byte
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::config::{Config, KvDocument};
use crate::descriptor::Connectivity;
use crate::error::{Error, Result};
use crate::event::{DescriptorHistory, EventField};
use crate::frame::{Frame, Geometry};
use crate::pipeline::Pipeline;
use crate::pnm;

pub const MAGIC: [u8; 4] = *b"BSUB";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    /// Peak training activity; replaying the training video never exceeds it.
    Max,
    /// Average training activity, a per-pixel noise bias.
    Mean,
}

impl SurrogateKind {
    fn code(self) -> u8 {
        match self {
            SurrogateKind::Max => 0,
            SurrogateKind::Mean => 1,
        }
    }
}

impl FromStr for SurrogateKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "max" => Ok(SurrogateKind::Max),
            "mean" => Ok(SurrogateKind::Mean),
            other => Err(format!("surrogate must be max or mean, got {other:?}")),
        }
    }
}

impl fmt::Display for SurrogateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurrogateKind::Max => "max",
            SurrogateKind::Mean => "mean",
        })
    }
}

/// Training settings stored with a behavior image.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMetadata {
    /// Training length in frames.
    pub frames: usize,
    pub w: usize,
    pub n: usize,
    pub connectivity: Connectivity,
    pub tau: f64,
    pub rho: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl TrainingMetadata {
    pub fn from_config(config: &Config, frames: usize) -> Self {
        TrainingMetadata {
            frames,
            w: config.event.w,
            n: config.descriptor.n,
            connectivity: config.descriptor.connectivity,
            tau: config.tau,
            rho: config.rho,
            a1: config.event.a1,
            a2: config.event.a2,
            a3: config.event.a3,
        }
    }

    /// Human-readable differences between training and `config`; empty when
    /// events computed under `config` are comparable with this image.
    pub fn mismatches(&self, config: &Config) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |name: &str, trained: String, configured: String| {
            if trained != configured {
                out.push(format!("{name}: trained {trained}, configured {configured}"));
            }
        };
        check("w", self.w.to_string(), config.event.w.to_string());
        check("N", self.n.to_string(), config.descriptor.n.to_string());
        check(
            "connectivity",
            self.connectivity.as_number().to_string(),
            config.descriptor.connectivity.as_number().to_string(),
        );
        check("tau", self.tau.to_string(), config.tau.to_string());
        check("rho", self.rho.to_string(), config.rho.to_string());
        check("A1", self.a1.to_string(), config.event.a1.to_string());
        check("A2", self.a2.to_string(), config.event.a2.to_string());
        check("A3", self.a3.to_string(), config.event.a3.to_string());
        out
    }

    fn to_text(&self) -> String {
        format!(
            "M={}\nw={}\nN={}\ntau={}\nrho={}\nA1={}\nA2={}\nA3={}\nconnectivity={}\n",
            self.frames,
            self.w,
            self.n,
            self.tau,
            self.rho,
            self.a1,
            self.a2,
            self.a3,
            self.connectivity.as_number()
        )
    }

    fn from_text(text: &str) -> Result<Self> {
        let doc = KvDocument::parse("behavior metadata", text)?;
        let section = doc
            .sections
            .first()
            .ok_or_else(|| Error::MalformedBehavior("empty metadata".into()))?;
        let get = |key: &str| {
            section
                .get(key)
                .ok_or_else(|| Error::MalformedBehavior(format!("metadata lacks {key}")))
        };
        Ok(TrainingMetadata {
            frames: doc.value(get("M")?)?,
            w: doc.value(get("w")?)?,
            n: doc.value(get("N")?)?,
            connectivity: match section.get("connectivity") {
                Some(e) => doc.value(e)?,
                None => Connectivity::Eight,
            },
            tau: doc.value(get("tau")?)?,
            rho: doc.value(get("rho")?)?,
            a1: doc.value(get("A1")?)?,
            a2: doc.value(get("A2")?)?,
            a3: doc.value(get("A3")?)?,
        })
    }
}

/// Background behavior image B(x).
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorImage {
    pub width: usize,
    pub height: usize,
    pub kind: SurrogateKind,
    pub meta: TrainingMetadata,
    pub values: Vec<f32>,
}

/// Streaming per-pixel max or mean over warm event fields.
#[derive(Debug, Clone)]
pub struct BehaviorAccumulator {
    geometry: Geometry,
    kind: SurrogateKind,
    max: Vec<f32>,
    sum: Vec<f64>,
    count: u64,
}

impl BehaviorAccumulator {
    pub fn new(geometry: Geometry, kind: SurrogateKind) -> Self {
        let n = geometry.pixels();
        BehaviorAccumulator {
            geometry,
            kind,
            max: match kind {
                SurrogateKind::Max => vec![f32::NEG_INFINITY; n],
                SurrogateKind::Mean => Vec::new(),
            },
            sum: match kind {
                SurrogateKind::Max => Vec::new(),
                SurrogateKind::Mean => vec![0.0; n],
            },
            count: 0,
        }
    }

    pub fn add(&mut self, events: &EventField) -> Result<()> {
        self.geometry.ensure_same(events.geometry())?;
        match self.kind {
            SurrogateKind::Max => {
                for (b, &e) in self.max.iter_mut().zip(&events.values) {
                    *b = b.max(e);
                }
            }
            SurrogateKind::Mean => {
                for (s, &e) in self.sum.iter_mut().zip(&events.values) {
                    *s += f64::from(e);
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn samples(&self) -> u64 {
        self.count
    }

    pub fn finish(self, meta: TrainingMetadata) -> Result<BehaviorImage> {
        if self.count == 0 {
            return Err(Error::NoSamples);
        }
        let values = match self.kind {
            SurrogateKind::Max => self.max,
            SurrogateKind::Mean => {
                let m = self.count as f64;
                self.sum.iter().map(|&s| (s / m) as f32).collect()
            }
        };
        Ok(BehaviorImage {
            width: self.geometry.width,
            height: self.geometry.height,
            kind: self.kind,
            meta,
            values,
        })
    }
}

/// Runs the full pipeline over a training video and reduces the events of
/// every frame whose window is full.
pub fn train<I>(frames: I, geometry: Geometry, config: &Config) -> Result<BehaviorImage>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    let mut pipeline = Pipeline::new(geometry, config, DescriptorHistory::LabelsOnly)?;
    let mut acc = BehaviorAccumulator::new(geometry, config.surrogate);
    let mut events = EventField::zeros(geometry, config.event);
    let mut seen = 0usize;
    for frame in frames {
        pipeline.push(&frame?)?;
        seen += 1;
        if pipeline.is_warm() {
            pipeline.statistic_into(&mut events)?;
            acc.add(&events)?;
        }
    }
    if seen < config.event.w {
        return Err(Error::TrainingTooShort {
            frames: seen,
            window: config.event.w,
        });
    }
    acc.finish(TrainingMetadata::from_config(config, seen))
}

/// [`train`] over a frame source, checking the length before decoding.
pub fn train_source(source: crate::ingest::FrameSource, config: &Config) -> Result<BehaviorImage> {
    config.validate()?;
    if source.len() < config.event.w {
        return Err(Error::TrainingTooShort {
            frames: source.len(),
            window: config.event.w,
        });
    }
    let geometry = source.geometry();
    train(source, geometry, config)
}

/// Per-pixel min / mean / max of B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl BehaviorImage {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn stats(&self) -> ValueStats {
        let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in &self.values {
            let v = f64::from(v);
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        ValueStats {
            min,
            mean: sum / self.values.len() as f64,
            max,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.meta.to_text();
        let mut out = Vec::with_capacity(23 + meta.len() + 4 * self.values.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.code());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let malformed = |m: &str| Error::MalformedBehavior(m.to_string());
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            let mut found = [0u8; 4];
            let n = bytes.len().min(4);
            found[..n].copy_from_slice(&bytes[..n]);
            return Err(Error::BadMagic {
                expected: MAGIC,
                found,
            });
        }
        if bytes.len() < 4 + 2 + 1 + 4 + 4 + 4 + 4 {
            return Err(Error::ChecksumMismatch {
                stored: 0,
                computed: crc32fast::hash(bytes),
            });
        }
        let (payload, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4-byte tail"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let u32_at = |at: usize| u32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
        let version = u16::from_le_bytes([payload[4], payload[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                expected: VERSION,
                found: version,
            });
        }
        let kind = match payload[6] {
            0 => SurrogateKind::Max,
            1 => SurrogateKind::Mean,
            k => return Err(Error::MalformedBehavior(format!("unknown kind {k}"))),
        };
        let width = u32_at(7) as usize;
        let height = u32_at(11) as usize;
        let meta_len = u32_at(15) as usize;
        let meta_end = 19usize
            .checked_add(meta_len)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| malformed("metadata overruns file"))?;
        let meta_text = std::str::from_utf8(&payload[19..meta_end])
            .map_err(|_| malformed("metadata is not UTF-8"))?;
        let meta = TrainingMetadata::from_text(meta_text)?;
        let raster = &payload[meta_end..];
        if width == 0 || height == 0 || raster.len() != 4 * width * height {
            return Err(malformed("value block does not match width x height"));
        }
        let values = raster
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(BehaviorImage {
            width,
            height,
            kind,
            meta,
            values,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::PathNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Grayscale rendering scaled to the image maximum.
    pub fn to_pgm(&self) -> Vec<u8> {
        let max = self.stats().max.max(f64::MIN_POSITIVE);
        let data: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (f64::from(v) / max * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        pnm::encode_pgm(self.width, self.height, &data)
    }

    pub fn heap_bytes(&self) -> usize {
        self.values.capacity() * std::mem::size_of::<f32>()
    }
}
