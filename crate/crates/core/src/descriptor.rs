//! Object-size descriptor: the fraction of an N×N window around a moving pixel
//! occupied by moving pixels of the same connected component.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frame::Geometry;
use crate::motion::LabelField;
use crate::pnm;

/// Whether diagonal neighbours connect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    Eight,
}

impl Connectivity {
    pub fn as_number(self) -> u8 {
        match self {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

impl FromStr for Connectivity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            other => Err(format!("connectivity must be 4 or 8, got {other:?}")),
        }
    }
}

/// Per-pixel component ids; 0 marks background, components are numbered
/// `1..=count` in raster order of their first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    pub width: usize,
    pub height: usize,
    pub ids: Vec<u32>,
    pub count: u32,
}

impl ComponentMap {
    pub fn empty(geometry: Geometry) -> Self {
        ComponentMap {
            width: geometry.width,
            height: geometry.height,
            ids: vec![0; geometry.pixels()],
            count: 0,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    // smaller root wins so provisional order is preserved
    if ra < rb {
        parent[rb as usize] = ra;
    } else if rb < ra {
        parent[ra as usize] = rb;
    }
}

/// Reusable buffers for two-pass union-find labeling.
#[derive(Debug, Default, Clone)]
pub struct ComponentLabeler {
    parent: Vec<u32>,
    remap: Vec<u32>,
}

impl ComponentLabeler {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn heap_bytes(&self) -> usize {
        (self.parent.capacity() + self.remap.capacity()) * std::mem::size_of::<u32>()
    }

    pub fn label_into(
        &mut self,
        labels: &LabelField,
        connectivity: Connectivity,
        out: &mut ComponentMap,
    ) -> Result<()> {
        labels.geometry().ensure_same(out.geometry())?;
        let (w, h) = (labels.width, labels.height);
        let bits = &labels.bits;
        let ids = &mut out.ids;
        self.parent.clear();
        self.parent.push(0);

        for y in 0..h {
            let row = y * w;
            for x in 0..w {
                let i = row + x;
                if !bits[i] {
                    ids[i] = 0;
                    continue;
                }
                let mut label = 0u32;
                let merge = |label: &mut u32, other: u32, parent: &mut Vec<u32>| {
                    if other == 0 {
                        return;
                    }
                    if *label == 0 {
                        *label = other;
                    } else if *label != other {
                        union(parent, *label, other);
                    }
                };
                if x > 0 {
                    merge(&mut label, ids[i - 1], &mut self.parent);
                }
                if y > 0 {
                    let up = i - w;
                    merge(&mut label, ids[up], &mut self.parent);
                    if connectivity == Connectivity::Eight {
                        if x > 0 {
                            merge(&mut label, ids[up - 1], &mut self.parent);
                        }
                        if x + 1 < w {
                            merge(&mut label, ids[up + 1], &mut self.parent);
                        }
                    }
                }
                if label == 0 {
                    label = self.parent.len() as u32;
                    self.parent.push(label);
                }
                ids[i] = label;
            }
        }

        self.remap.clear();
        self.remap.resize(self.parent.len(), 0);
        let mut next = 0u32;
        for id in ids.iter_mut().filter(|id| **id != 0) {
            let root = find(&mut self.parent, *id) as usize;
            if self.remap[root] == 0 {
                next += 1;
                self.remap[root] = next;
            }
            *id = self.remap[root];
        }
        out.count = next;
        Ok(())
    }
}

/// Standard connected-component labeling of the moving pixels.
pub fn label_components(labels: &LabelField, connectivity: Connectivity) -> ComponentMap {
    let mut out = ComponentMap::empty(labels.geometry());
    ComponentLabeler::new()
        .label_into(labels, connectivity, &mut out)
        .expect("output built with matching geometry");
    out
}

/// Per-pixel descriptor values stored exactly as `count / scale`.
///
/// For the size descriptor, `scale = N²` and `count` is the number of
/// same-component moving pixels in the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptorField {
    pub width: usize,
    pub height: usize,
    pub t: u64,
    pub scale: u16,
    pub counts: Vec<u16>,
}

impl DescriptorField {
    pub fn zeros(geometry: Geometry, t: u64, scale: u16) -> Self {
        DescriptorField {
            width: geometry.width,
            height: geometry.height,
            t,
            scale,
            counts: vec![0; geometry.pixels()],
        }
    }

    pub fn from_counts(
        width: usize,
        height: usize,
        t: u64,
        scale: u16,
        counts: Vec<u16>,
    ) -> Result<Self> {
        if scale == 0 {
            return Err(Error::ParameterOutOfRange {
                name: "descriptor scale",
                value: 0.0,
                expected: "scale >= 1",
            });
        }
        if counts.len() != width * height {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: width * height,
            });
        }
        if let Some(&c) = counts.iter().find(|&&c| c > scale) {
            return Err(Error::ParameterOutOfRange {
                name: "descriptor count",
                value: f64::from(c),
                expected: "count <= scale",
            });
        }
        Ok(DescriptorField {
            width,
            height,
            t,
            scale,
            counts,
        })
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    #[inline]
    pub fn value(&self, i: usize) -> f64 {
        f64::from(self.counts[i]) / f64::from(self.scale)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.value(y * self.width + x)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.value(i)).collect()
    }

    /// Grayscale rendering with f = 1 mapped to 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let data: Vec<u8> = (0..self.counts.len())
            .map(|i| (self.value(i) * 255.0).round() as u8)
            .collect();
        pnm::encode_pgm(self.width, self.height, &data)
    }
}

/// Window size and connectivity of the size descriptor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DescriptorParams {
    pub n: usize,
    pub connectivity: Connectivity,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        DescriptorParams {
            n: 9,
            connectivity: Connectivity::Eight,
        }
    }
}

pub const MAX_WINDOW: usize = 255;

pub(crate) fn check_window(n: usize) -> Result<()> {
    if n % 2 == 1 && n <= MAX_WINDOW {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "N",
            value: n as f64,
            expected: "odd window size, 1 <= N <= 255",
        })
    }
}

impl DescriptorParams {
    pub fn new(n: usize, connectivity: Connectivity) -> Result<Self> {
        check_window(n)?;
        Ok(DescriptorParams { n, connectivity })
    }

    pub fn scale(&self) -> u16 {
        (self.n * self.n) as u16
    }
}

/// Computes size descriptors from component maps with a sliding per-row
/// histogram of component ids, so each pixel costs O(N) rather than O(N²).
#[derive(Debug, Default, Clone)]
pub struct SizeDescriptor {
    hist: Vec<u16>,
}

impl SizeDescriptor {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn heap_bytes(&self) -> usize {
        self.hist.capacity() * std::mem::size_of::<u16>()
    }

    pub fn compute_into(
        &mut self,
        labels: &LabelField,
        components: &ComponentMap,
        n: usize,
        out: &mut DescriptorField,
    ) -> Result<()> {
        check_window(n)?;
        let geometry = labels.geometry();
        geometry.ensure_same(components.geometry())?;
        geometry.ensure_same(out.geometry())?;
        let (w, h) = (geometry.width, geometry.height);
        let r = n / 2;
        out.t = labels.t;
        out.scale = (n * n) as u16;
        out.counts.fill(0);

        self.hist.clear();
        self.hist.resize(components.count as usize + 1, 0);
        let ids = &components.ids;
        let hist = &mut self.hist;

        for y in 0..h {
            let row = &labels.bits[y * w..(y + 1) * w];
            if !row.contains(&true) {
                continue;
            }
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
            let column = |x: usize, hist: &mut [u16], add: bool| {
                for yy in y0..=y1 {
                    let id = ids[yy * w + x] as usize;
                    if id != 0 {
                        if add {
                            hist[id] += 1;
                        } else {
                            hist[id] -= 1;
                        }
                    }
                }
            };
            for x in 0..=r.min(w - 1) {
                column(x, hist, true);
            }
            for x in 0..w {
                if x > 0 {
                    if x + r < w {
                        column(x + r, hist, true);
                    }
                    if x > r {
                        column(x - r - 1, hist, false);
                    }
                }
                if row[x] {
                    let i = y * w + x;
                    out.counts[i] = hist[ids[i] as usize];
                }
            }
            for x in (w - 1).saturating_sub(r)..w {
                column(x, hist, false);
            }
        }
        Ok(())
    }
}

/// f(x) = |{y in the N×N window at x : y moving and connected to x}| / N².
///
/// The window is clipped at the image border while the denominator stays N².
pub fn size_descriptor(
    labels: &LabelField,
    components: &ComponentMap,
    n: usize,
) -> Result<DescriptorField> {
    check_window(n)?;
    let mut out = DescriptorField::zeros(labels.geometry(), labels.t, (n * n) as u16);
    SizeDescriptor::new().compute_into(labels, components, n, &mut out)?;
    Ok(out)
}
