//! Sliding-window event statistic.
//!
//! Each pixel keeps its last `w` motion labels as a bit shift register (bit 0
//! is the newest sample) and the windowed sum of descriptor counts `f·l` as an
//! integer, so incremental updates are exact. Busy time and the transition
//! count are read off the register with popcounts.
//!
//! Descriptor samples leaving the window are either kept in a ring of counts
//! ([`DescriptorHistory::Stored`]) or recomputed by the caller from the label
//! plane being evicted ([`DescriptorHistory::LabelsOnly`]); the latter needs
//! only `ceil(w/8)` history bytes per pixel, which is what the detect path uses.
//!
//! The statistic is normalized by the window length (or by the number of
//! frames seen while the window is still filling):
//!
//! ```text
//! e(x) = (A1·Σl + A3·Σf·l + A2·κ) / min(frames, w)
//! ```

use crate::error::{Error, Result};
use crate::frame::Geometry;
use crate::motion::LabelField;
use crate::descriptor::DescriptorField;
use crate::pnm;

/// Window length and statistic weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventParams {
    pub w: usize,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        EventParams {
            w: 100,
            a1: 0.0,
            a2: 0.0,
            a3: 1.0,
        }
    }
}

pub const MAX_WINDOW: usize = u16::MAX as usize;

impl EventParams {
    pub fn validate(&self) -> Result<()> {
        if self.w == 0 || self.w > MAX_WINDOW {
            return Err(Error::ParameterOutOfRange {
                name: "w",
                value: self.w as f64,
                expected: "1 <= w <= 65535",
            });
        }
        for (name, v) in [("A1", self.a1), ("A2", self.a2), ("A3", self.a3)] {
            if !v.is_finite() {
                return Err(Error::ParameterOutOfRange {
                    name,
                    value: v,
                    expected: "finite weight",
                });
            }
        }
        Ok(())
    }

    /// Largest value the statistic can take when all weights are nonnegative.
    pub fn upper_bound(&self) -> f64 {
        self.a1 + self.a3 + self.a2 * (self.w as f64 - 1.0) / self.w as f64
    }
}

/// How descriptor samples are recovered when they leave the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorHistory {
    Stored,
    LabelsOnly,
}

/// Observed behavior image: one event value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct EventField {
    pub width: usize,
    pub height: usize,
    pub t: u64,
    pub values: Vec<f32>,
    pub params: EventParams,
    /// True once `w` frames have been pushed.
    pub warm: bool,
}

impl EventField {
    pub fn zeros(geometry: Geometry, params: EventParams) -> Self {
        EventField {
            width: geometry.width,
            height: geometry.height,
            t: 0,
            values: vec![0.0; geometry.pixels()],
            params,
            warm: false,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    /// Grayscale rendering, `value / max_value` mapped onto 0..=255.
    pub fn to_pgm(&self, max_value: f64) -> Vec<u8> {
        let data: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (f64::from(v) / max_value * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        pnm::encode_pgm(self.width, self.height, &data)
    }
}

/// Per-pixel sliding-window sufficient statistics.
#[derive(Debug, Clone)]
pub struct EventState {
    geometry: Geometry,
    w: usize,
    reg_bytes: usize,
    registers: Vec<u8>,
    sum_f: Vec<u32>,
    stored: Option<Vec<u16>>,
    head: usize,
    scale: Option<u16>,
    frames_seen: u64,
    retired: bool,
    t: u64,
}

impl EventState {
    pub fn new(geometry: Geometry, w: usize, history: DescriptorHistory) -> Result<Self> {
        EventParams {
            w,
            ..EventParams::default()
        }
        .validate()?;
        let reg_bytes = w.div_ceil(8);
        let n = geometry.pixels();
        Ok(EventState {
            geometry,
            w,
            reg_bytes,
            registers: vec![0; n * reg_bytes],
            sum_f: vec![0; n],
            stored: match history {
                DescriptorHistory::Stored => Some(vec![0; n * w]),
                DescriptorHistory::LabelsOnly => None,
            },
            head: 0,
            scale: None,
            frames_seen: 0,
            retired: false,
            t: 0,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn window(&self) -> usize {
        self.w
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Number of samples currently inside the window.
    pub fn filled(&self) -> usize {
        (self.frames_seen as usize).min(self.w)
    }

    pub fn is_warm(&self) -> bool {
        self.frames_seen >= self.w as u64
    }

    pub fn history(&self) -> DescriptorHistory {
        if self.stored.is_some() {
            DescriptorHistory::Stored
        } else {
            DescriptorHistory::LabelsOnly
        }
    }

    /// Descriptor denominator, fixed by the first push.
    pub fn scale(&self) -> Option<u16> {
        self.scale
    }

    #[inline]
    fn register(&self, i: usize) -> &[u8] {
        &self.registers[i * self.reg_bytes..(i + 1) * self.reg_bytes]
    }

    /// Σ l over the window at pixel `i`.
    pub fn busy_count(&self, i: usize) -> u32 {
        self.register(i).iter().map(|b| b.count_ones()).sum()
    }

    /// Σ f·l over the window at pixel `i`, in descriptor counts.
    pub fn descriptor_sum(&self, i: usize) -> u32 {
        self.sum_f[i]
    }

    /// Label flips between consecutive samples inside the window at pixel `i`.
    pub fn transitions(&self, i: usize) -> u32 {
        let filled = self.filled();
        if filled < 2 {
            return 0;
        }
        // pairs (j, j + 1) for j < filled - 1
        let pairs = filled - 1;
        let reg = self.register(i);
        let mut total = 0;
        for (k, &byte) in reg.iter().enumerate() {
            let lo = k * 8;
            if lo >= pairs {
                break;
            }
            let next = reg.get(k + 1).copied().unwrap_or(0);
            let shifted = (byte >> 1) | (next << 7);
            let mut diff = byte ^ shifted;
            let valid = pairs - lo;
            if valid < 8 {
                diff &= (1u8 << valid) - 1;
            }
            total += diff.count_ones();
        }
        total
    }

    /// Label of pixel `i`, `age` frames ago (0 = newest).
    pub fn label_at(&self, i: usize, age: usize) -> bool {
        age < self.filled() && self.register(i)[age / 8] & (1 << (age % 8)) != 0
    }

    /// Writes the label plane that the next push will evict; returns false
    /// while the window is not yet full.
    pub fn oldest_labels(&self, out: &mut LabelField) -> Result<bool> {
        self.geometry.ensure_same(out.geometry())?;
        if !self.is_warm() {
            return Ok(false);
        }
        let age = self.w - 1;
        let (byte, mask) = (age / 8, 1u8 << (age % 8));
        for (i, l) in out.bits.iter_mut().enumerate() {
            *l = self.registers[i * self.reg_bytes + byte] & mask != 0;
        }
        out.t = self.t.saturating_sub(self.w as u64 - 1);
        Ok(true)
    }

    /// Removes the oldest sample's descriptor mass ahead of the next push.
    ///
    /// `descriptors` must be the descriptor field originally pushed with the
    /// plane returned by [`EventState::oldest_labels`]. Only meaningful for
    /// [`DescriptorHistory::LabelsOnly`]; stored histories retire themselves.
    pub fn retire_oldest(&mut self, descriptors: &DescriptorField) -> Result<()> {
        self.geometry.ensure_same(descriptors.geometry())?;
        if self.stored.is_some() || !self.is_warm() || self.retired {
            return Ok(());
        }
        self.check_scale(descriptors.scale)?;
        let age = self.w - 1;
        let (byte, mask) = (age / 8, 1u8 << (age % 8));
        for (i, (s, &c)) in self.sum_f.iter_mut().zip(&descriptors.counts).enumerate() {
            if self.registers[i * self.reg_bytes + byte] & mask != 0 {
                *s -= u32::from(c);
            }
        }
        self.retired = true;
        Ok(())
    }

    fn check_scale(&mut self, scale: u16) -> Result<()> {
        match self.scale {
            None => {
                self.scale = Some(scale);
                Ok(())
            }
            Some(s) if s == scale => Ok(()),
            Some(_) => Err(Error::ParameterOutOfRange {
                name: "descriptor scale",
                value: f64::from(scale),
                expected: "same scale as earlier pushes",
            }),
        }
    }

    /// Appends one frame of labels and descriptors, evicting the oldest
    /// sample once the window is full.
    pub fn push(&mut self, labels: &LabelField, descriptors: &DescriptorField) -> Result<()> {
        self.geometry.ensure_same(labels.geometry())?;
        self.geometry.ensure_same(descriptors.geometry())?;
        self.check_scale(descriptors.scale)?;
        let full = self.is_warm();
        if full && self.stored.is_none() && !self.retired {
            return Err(Error::EvictionNotRetired);
        }
        let n = self.geometry.pixels();
        let rb = self.reg_bytes;
        let top_bits = self.w - 8 * (rb - 1);
        let top_mask: u8 = if top_bits == 8 { 0xff } else { (1u8 << top_bits) - 1 };

        if let Some(ring) = self.stored.as_mut() {
            let slot = &mut ring[self.head * n..(self.head + 1) * n];
            for i in 0..n {
                let c = if labels.bits[i] { descriptors.counts[i] } else { 0 };
                if full {
                    self.sum_f[i] -= u32::from(slot[i]);
                }
                slot[i] = c;
                self.sum_f[i] += u32::from(c);
            }
            self.head = (self.head + 1) % self.w;
        } else {
            for i in 0..n {
                if labels.bits[i] {
                    self.sum_f[i] += u32::from(descriptors.counts[i]);
                }
            }
        }

        for (reg, &l) in self.registers.chunks_exact_mut(rb).zip(&labels.bits) {
            let mut carry = u8::from(l);
            for byte in reg.iter_mut() {
                let out = *byte >> 7;
                *byte = (*byte << 1) | carry;
                carry = out;
            }
            reg[rb - 1] &= top_mask;
        }

        self.frames_seen += 1;
        self.retired = false;
        self.t = labels.t;
        Ok(())
    }

    /// Computes the normalized event statistic for every pixel.
    pub fn statistic(&self, params: &EventParams) -> Result<EventField> {
        let mut out = EventField::zeros(self.geometry, *params);
        self.statistic_into(params, &mut out)?;
        Ok(out)
    }

    pub fn statistic_into(&self, params: &EventParams, out: &mut EventField) -> Result<()> {
        if self.frames_seen == 0 {
            return Err(Error::EmptyState);
        }
        if params.w != self.w {
            return Err(Error::ParameterOutOfRange {
                name: "w",
                value: params.w as f64,
                expected: "window length of the event state",
            });
        }
        self.geometry.ensure_same(out.geometry())?;
        let scale = f64::from(self.scale.unwrap_or(1));
        let norm = self.filled() as f64;
        let use_l = params.a1 != 0.0;
        let use_k = params.a2 != 0.0;
        for (i, v) in out.values.iter_mut().enumerate() {
            let mut e = params.a3 * (f64::from(self.sum_f[i]) / scale);
            if use_l {
                e += params.a1 * f64::from(self.busy_count(i));
            }
            if use_k {
                e += params.a2 * f64::from(self.transitions(i));
            }
            *v = (e / norm) as f32;
        }
        out.t = self.t;
        out.params = *params;
        out.warm = self.is_warm();
        Ok(())
    }

    /// Heap bytes held across frames.
    pub fn heap_bytes(&self) -> usize {
        self.registers.capacity()
            + self.sum_f.capacity() * std::mem::size_of::<u32>()
            + self
                .stored
                .as_ref()
                .map_or(0, |s| s.capacity() * std::mem::size_of::<u16>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px(label: bool, count: u16, scale: u16) -> (LabelField, DescriptorField) {
        let l = LabelField::new(1, 1, 0, vec![label]).unwrap();
        let d = DescriptorField::from_counts(1, 1, 0, scale, vec![count]).unwrap();
        (l, d)
    }

    fn state(w: usize) -> EventState {
        EventState::new(Geometry::new(1, 1), w, DescriptorHistory::Stored).unwrap()
    }

    #[test]
    fn single_sample() {
        let mut s = state(4);
        let (l, d) = px(true, 1, 2);
        s.push(&l, &d).unwrap();
        assert_eq!(s.busy_count(0), 1);
        assert_eq!(f64::from(s.descriptor_sum(0)) / 2.0, 0.5);
        assert_eq!(s.transitions(0), 0);
    }

    #[test]
    fn two_flips() {
        let mut s = state(3);
        for b in [true, false, true] {
            let (l, d) = px(b, 0, 1);
            s.push(&l, &d).unwrap();
        }
        assert_eq!(s.transitions(0), 2);
        assert_eq!(s.busy_count(0), 2);
    }

    #[test]
    fn flip_leaving_the_window_is_dropped() {
        let mut s = state(3);
        for b in [true, false, false, false] {
            let (l, d) = px(b, 0, 1);
            s.push(&l, &d).unwrap();
        }
        assert_eq!(s.transitions(0), 0);
        assert_eq!(s.busy_count(0), 0);
    }

    #[test]
    fn statistic_examples() {
        let mut s = state(4);
        for (b, c) in [(true, 1), (false, 0), (true, 1), (true, 2)] {
            let (l, d) = px(b, c, 2);
            s.push(&l, &d).unwrap();
        }
        let e = s.statistic(&EventParams { w: 4, ..Default::default() }).unwrap();
        assert_eq!(e.values[0], 0.5);
        assert!(e.warm);

        let mut s = state(5);
        for _ in 0..7 {
            let (l, d) = px(false, 0, 81);
            s.push(&l, &d).unwrap();
        }
        let e = s.statistic(&EventParams { w: 5, ..Default::default() }).unwrap();
        assert_eq!(e.values[0], 0.0);

        let mut s = state(6);
        for _ in 0..6 {
            let (l, d) = px(true, 3, 81);
            s.push(&l, &d).unwrap();
        }
        let p = EventParams { w: 6, a1: 1.0, a2: 0.0, a3: 0.0 };
        assert_eq!(s.statistic(&p).unwrap().values[0], 1.0);
    }

    #[test]
    fn warm_up_normalizes_by_frames_seen() {
        let mut s = state(10);
        for _ in 0..2 {
            let (l, d) = px(true, 1, 1);
            s.push(&l, &d).unwrap();
        }
        let e = s.statistic(&EventParams { w: 10, ..Default::default() }).unwrap();
        assert_eq!(e.values[0], 1.0);
        assert!(!e.warm);
    }

    #[test]
    fn descriptor_ignored_on_idle_pixels() {
        let mut s = state(2);
        let (l, d) = px(false, 5, 9);
        s.push(&l, &d).unwrap();
        assert_eq!(s.descriptor_sum(0), 0);
    }

    #[test]
    fn empty_state_has_no_statistic() {
        assert!(matches!(
            state(3).statistic(&EventParams { w: 3, ..Default::default() }),
            Err(Error::EmptyState)
        ));
    }

    #[test]
    fn rejects_mismatched_geometry_and_window() {
        let mut s = EventState::new(Geometry::new(2, 2), 3, DescriptorHistory::Stored).unwrap();
        let (l, d) = px(true, 1, 1);
        assert!(matches!(s.push(&l, &d), Err(Error::GeometryMismatch { .. })));
        assert!(EventState::new(Geometry::new(1, 1), 0, DescriptorHistory::Stored).is_err());
        let mut s = state(3);
        s.push(&l, &d).unwrap();
        assert!(s.statistic(&EventParams { w: 4, ..Default::default() }).is_err());
    }

    #[test]
    fn labels_only_requires_retirement() {
        let mut s = EventState::new(Geometry::new(1, 1), 2, DescriptorHistory::LabelsOnly).unwrap();
        let (l, d) = px(true, 1, 1);
        s.push(&l, &d).unwrap();
        s.push(&l, &d).unwrap();
        assert!(matches!(s.push(&l, &d), Err(Error::EvictionNotRetired)));
        let mut oldest = LabelField::empty(Geometry::new(1, 1), 0);
        assert!(s.oldest_labels(&mut oldest).unwrap());
        assert!(oldest.bits[0]);
        s.retire_oldest(&d).unwrap();
        s.push(&l, &d).unwrap();
        assert_eq!(s.descriptor_sum(0), 2);
    }

    #[test]
    fn register_spans_bytes() {
        let w = 20;
        let mut s = state(w);
        let seq: Vec<bool> = (0..45).map(|k| (k * 7) % 5 < 2).collect();
        for &b in &seq {
            let (l, d) = px(b, 0, 1);
            s.push(&l, &d).unwrap();
        }
        let window = &seq[seq.len() - w..];
        let busy = window.iter().filter(|&&b| b).count() as u32;
        let flips = window.windows(2).filter(|p| p[0] != p[1]).count() as u32;
        assert_eq!(s.busy_count(0), busy);
        assert_eq!(s.transitions(0), flips);
        for age in 0..w {
            assert_eq!(s.label_at(0, age), seq[seq.len() - 1 - age]);
        }
    }

    #[test]
    fn upper_bound() {
        let p = EventParams { w: 10, a1: 1.0, a2: 2.0, a3: 0.5 };
        assert!((p.upper_bound() - (1.5 + 2.0 * 0.9)).abs() < 1e-12);
    }
}
