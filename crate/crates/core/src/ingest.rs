//! Frame sources: directories of still images and packed raw 8-bit frame files.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frame::{to_luminance, Frame, Geometry};
use crate::pnm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    /// Directory of PGM (P5) or PNG stills, ordered by file name.
    ImageDir,
    /// Concatenated width×height byte frames plus a `.meta` sidecar.
    RawGray8,
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "image-dir" => Ok(SourceFormat::ImageDir),
            "raw-gray8" => Ok(SourceFormat::RawGray8),
            other => Err(format!("unknown format {other:?} (image-dir | raw-gray8)")),
        }
    }
}

enum Backing {
    Images {
        files: Vec<PathBuf>,
        // first image is decoded while opening to fix the geometry
        first: Option<Frame>,
    },
    Raw {
        reader: BufReader<File>,
    },
    Memory {
        frames: std::vec::IntoIter<Frame>,
    },
}

/// An ordered, single-pass sequence of frames with fixed geometry.
///
/// Yields frames with `t = 0, 1, 2, ...`; any frame whose geometry differs from
/// the first is reported as [`Error::GeometryMismatch`].
pub struct FrameSource {
    geometry: Geometry,
    count: usize,
    next_t: u64,
    backing: Backing,
}

impl std::fmt::Debug for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameSource")
            .field("geometry", &self.geometry)
            .field("count", &self.count)
            .field("next_t", &self.next_t)
            .finish()
    }
}

impl FrameSource {
    /// Wraps frames already in memory. Times are renumbered from zero.
    pub fn from_frames(frames: Vec<Frame>) -> Result<Self> {
        let first = frames.first().ok_or(Error::NoSamples)?;
        let geometry = first.geometry();
        for f in &frames {
            geometry.ensure_same(f.geometry())?;
        }
        Ok(FrameSource {
            geometry,
            count: frames.len(),
            next_t: 0,
            backing: Backing::Memory {
                frames: frames.into_iter(),
            },
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Total number of frames, including any already consumed.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn next_frame(&mut self) -> Option<Result<Frame>> {
        if self.next_t as usize >= self.count {
            return None;
        }
        let t = self.next_t;
        let geometry = self.geometry;
        let result = match &mut self.backing {
            Backing::Images { files, first } => match first.take() {
                Some(f) => Ok(f),
                None => decode_image(&files[t as usize], t).and_then(|f| {
                    geometry.ensure_same(f.geometry())?;
                    Ok(f)
                }),
            },
            Backing::Raw { reader } => {
                let mut data = vec![0u8; geometry.pixels()];
                reader
                    .read_exact(&mut data)
                    .map_err(Error::from)
                    .map(|_| Frame {
                        width: geometry.width,
                        height: geometry.height,
                        t,
                        data,
                    })
            }
            Backing::Memory { frames } => {
                let mut f = frames.next().expect("count tracks the frame vector");
                f.t = t;
                Ok(f)
            }
        };
        self.next_t += 1;
        if result.is_err() {
            // a broken source does not resume
            self.count = self.next_t as usize;
        }
        Some(result)
    }
}

impl Iterator for FrameSource {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame()
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.count.saturating_sub(self.next_t as usize);
        (left, Some(left))
    }
}

pub fn open_source(path: &Path, format: SourceFormat) -> Result<FrameSource> {
    if !path.exists() {
        return Err(Error::PathNotFound(path.to_path_buf()));
    }
    match format {
        SourceFormat::ImageDir => open_image_dir(path),
        SourceFormat::RawGray8 => open_raw(path),
    }
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("pgm" | "png")
    )
}

fn open_image_dir(dir: &Path) -> Result<FrameSource> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    files.sort();
    let Some(first_path) = files.first() else {
        return Err(Error::UndecodableImage {
            path: dir.to_path_buf(),
            reason: "directory holds no .pgm or .png files".into(),
        });
    };
    let first = decode_image(first_path, 0)?;
    Ok(FrameSource {
        geometry: first.geometry(),
        count: files.len(),
        next_t: 0,
        backing: Backing::Images {
            files,
            first: Some(first),
        },
    })
}

fn decode_image(path: &Path, t: u64) -> Result<Frame> {
    let bytes = fs::read(path)?;
    let undecodable = |reason: String| Error::UndecodableImage {
        path: path.to_path_buf(),
        reason,
    };
    let is_png = bytes.starts_with(b"\x89PNG");
    let (width, height, data) = if is_png {
        decode_png(&bytes).map_err(undecodable)?
    } else {
        let img = pnm::decode_pgm(&bytes).map_err(undecodable)?;
        (img.width, img.height, img.data)
    };
    Frame::new(width, height, t, data)
}

fn decode_png(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<u8>), String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| "image too large".to_string())?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];
    let data = match info.color_type {
        png::ColorType::Grayscale => buf.to_vec(),
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => buf
            .chunks_exact(3)
            .map(|p| to_luminance(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Rgba => buf
            .chunks_exact(4)
            .map(|p| to_luminance(p[0], p[1], p[2]))
            .collect(),
        png::ColorType::Indexed => return Err("palette not expanded".into()),
    };
    Ok((w, h, data))
}

/// Sidecar written next to `path`: `clip.raw` pairs with `clip.meta`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

fn find_sidecar(path: &Path) -> Option<PathBuf> {
    let replaced = sidecar_path(path);
    if replaced.is_file() {
        return Some(replaced);
    }
    let mut appended = path.as_os_str().to_owned();
    appended.push(".meta");
    let appended = PathBuf::from(appended);
    appended.is_file().then_some(appended)
}

/// Parsed `key=value` sidecar lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub extra: Vec<(String, String)>,
}

pub fn read_sidecar(meta: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(meta)?;
    let bad = |reason: String| Error::BadSidecar {
        path: meta.to_path_buf(),
        reason,
    };
    let (mut width, mut height, mut extra) = (None, None, Vec::new());
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        match k {
            "width" => width = Some(v.parse().map_err(|_| bad(format!("width {v:?}")))?),
            "height" => height = Some(v.parse().map_err(|_| bad(format!("height {v:?}")))?),
            _ => extra.push((k.to_string(), v.to_string())),
        }
    }
    match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => Ok(Sidecar {
            width: w,
            height: h,
            extra,
        }),
        _ => Err(bad("needs positive width and height".into())),
    }
}

pub fn write_sidecar(path: &Path, geometry: Geometry, extra: &[(&str, String)]) -> Result<()> {
    let mut text = format!("width={}\nheight={}\n", geometry.width, geometry.height);
    for (k, v) in extra {
        text.push_str(&format!("{k}={v}\n"));
    }
    fs::write(sidecar_path(path), text)?;
    Ok(())
}

fn open_raw(path: &Path) -> Result<FrameSource> {
    let meta_path = find_sidecar(path).ok_or_else(|| Error::BadSidecar {
        path: sidecar_path(path),
        reason: "missing".into(),
    })?;
    let meta = read_sidecar(&meta_path)?;
    let geometry = Geometry::new(meta.width, meta.height);
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let frame_bytes = geometry.pixels();
    if len % frame_bytes as u64 != 0 {
        return Err(Error::RawLength {
            path: path.to_path_buf(),
            len,
            frame_bytes,
        });
    }
    Ok(FrameSource {
        geometry,
        count: (len / frame_bytes as u64) as usize,
        next_t: 0,
        backing: Backing::Raw {
            reader: BufReader::new(file),
        },
    })
}

/// Streams frames into a raw-gray8 file and writes its sidecar.
pub struct RawWriter {
    out: BufWriter<File>,
    geometry: Geometry,
    frames: usize,
}

impl RawWriter {
    pub fn create(path: &Path, geometry: Geometry) -> Result<Self> {
        let out = BufWriter::new(File::create(path)?);
        write_sidecar(path, geometry, &[])?;
        Ok(RawWriter {
            out,
            geometry,
            frames: 0,
        })
    }

    pub fn write(&mut self, data: &[u8]) -> Result<()> {
        if data.len() != self.geometry.pixels() {
            return Err(Error::LengthMismatch {
                left: data.len(),
                right: self.geometry.pixels(),
            });
        }
        self.out.write_all(data)?;
        self.frames += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.frames)
    }
}

pub fn write_raw_gray8<'a>(path: &Path, frames: impl IntoIterator<Item = &'a Frame>) -> Result<usize> {
    let mut frames = frames.into_iter().peekable();
    let geometry = frames.peek().ok_or(Error::NoSamples)?.geometry();
    let mut w = RawWriter::create(path, geometry)?;
    for f in frames {
        geometry.ensure_same(f.geometry())?;
        w.write(&f.data)?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, t: u64) -> Frame {
        let data = (0..w * h).map(|i| (i as u64 * 7 + t * 13) as u8).collect();
        Frame::new(w, h, t, data).unwrap()
    }

    #[test]
    fn image_dir_of_pgm_files() {
        let dir = tempfile::tempdir().unwrap();
        // written out of order; reading sorts by name
        for t in [2u64, 0, 1] {
            let f = ramp(4, 4, t);
            fs::write(
                dir.path().join(format!("frame_{t:03}.pgm")),
                pnm::encode_pgm(4, 4, &f.data),
            )
            .unwrap();
        }
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let src = open_source(dir.path(), SourceFormat::ImageDir).unwrap();
        assert_eq!(src.len(), 3);
        assert_eq!(src.geometry(), Geometry::new(4, 4));
        let frames: Vec<Frame> = src.map(|f| f.unwrap()).collect();
        for (t, f) in frames.iter().enumerate() {
            assert_eq!(f.t, t as u64);
            assert_eq!(f.data, ramp(4, 4, t as u64).data);
        }
    }

    #[test]
    fn image_dir_geometry_drift_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), pnm::encode_pgm(4, 4, &[0; 16])).unwrap();
        fs::write(dir.path().join("b.pgm"), pnm::encode_pgm(5, 4, &[0; 20])).unwrap();
        let mut src = open_source(dir.path(), SourceFormat::ImageDir).unwrap();
        assert!(src.next().unwrap().is_ok());
        assert!(matches!(
            src.next().unwrap(),
            Err(Error::GeometryMismatch { width: 5, .. })
        ));
        assert!(src.next().is_none());
    }

    #[test]
    fn undecodable_image_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), pnm::encode_pgm(2, 2, &[0; 4])).unwrap();
        fs::write(dir.path().join("b.pgm"), b"garbage").unwrap();
        let mut src = open_source(dir.path(), SourceFormat::ImageDir).unwrap();
        src.next();
        match src.next().unwrap() {
            Err(Error::UndecodableImage { path, .. }) => assert!(path.ends_with("b.pgm")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(open_source(dir.path(), SourceFormat::ImageDir).is_err());
    }

    #[test]
    fn png_rgb_becomes_luminance() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        {
            let file = File::create(&path).unwrap();
            let mut enc = png::Encoder::new(BufWriter::new(file), 2, 1);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[255, 0, 0, 255, 255, 255]).unwrap();
        }
        let f = open_source(dir.path(), SourceFormat::ImageDir)
            .unwrap()
            .next()
            .unwrap()
            .unwrap();
        assert_eq!(f.data, vec![76, 255]);
    }

    #[test]
    fn raw_frame_count_from_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.raw");
        fs::write(&path, [0u8; 32]).unwrap();
        write_sidecar(&path, Geometry::new(4, 4), &[]).unwrap();
        let src = open_source(&path, SourceFormat::RawGray8).unwrap();
        assert_eq!(src.len(), 2);

        fs::write(&path, [0u8; 30]).unwrap();
        assert!(matches!(
            open_source(&path, SourceFormat::RawGray8),
            Err(Error::RawLength { len: 30, .. })
        ));
    }

    #[test]
    fn raw_sidecar_may_be_appended() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.raw");
        fs::write(&path, [0u8; 16]).unwrap();
        fs::write(dir.path().join("clip.raw.meta"), "width=4\nheight=4\n").unwrap();
        assert_eq!(open_source(&path, SourceFormat::RawGray8).unwrap().len(), 1);
    }

    #[test]
    fn raw_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.raw");
        let frames: Vec<Frame> = (0..5).map(|t| ramp(7, 3, t)).collect();
        assert_eq!(write_raw_gray8(&path, &frames).unwrap(), 5);
        let back: Vec<Frame> = open_source(&path, SourceFormat::RawGray8)
            .unwrap()
            .map(|f| f.unwrap())
            .collect();
        assert_eq!(back, frames);
    }

    #[test]
    fn missing_path() {
        assert!(matches!(
            open_source(Path::new("/definitely/not/here"), SourceFormat::RawGray8),
            Err(Error::PathNotFound(_))
        ));
    }

    #[test]
    fn bad_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clip.raw");
        fs::write(&path, [0u8; 16]).unwrap();
        fs::write(dir.path().join("clip.meta"), "width=4\n").unwrap();
        assert!(matches!(
            open_source(&path, SourceFormat::RawGray8),
            Err(Error::BadSidecar { .. })
        ));
    }

    #[test]
    fn memory_source_renumbers() {
        let frames = vec![ramp(2, 2, 9), ramp(2, 2, 4)];
        let ts: Vec<u64> = FrameSource::from_frames(frames)
            .unwrap()
            .map(|f| f.unwrap().t)
            .collect();
        assert_eq!(ts, vec![0, 1]);
    }
}
