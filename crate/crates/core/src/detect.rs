//! Behavior subtraction: per-pixel `e_t(x) - B(x) > theta`.

use crate::behavior::BehaviorImage;
use crate::config::Config;
use crate::descriptor::{label_components, Connectivity};
use crate::error::{Error, Result};
use crate::event::{DescriptorHistory, EventField};
use crate::frame::{Frame, Geometry};
use crate::motion::LabelField;
use crate::pipeline::Pipeline;
use crate::pnm;

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    pub width: usize,
    pub height: usize,
    pub t: u64,
    /// False while the event window is still filling; no pixel is flagged then.
    pub warm: bool,
    pub decisions: Vec<bool>,
    /// `e - B` per pixel.
    pub scores: Vec<f32>,
}

impl AnomalyMap {
    pub fn empty(geometry: Geometry, t: u64) -> Self {
        AnomalyMap {
            width: geometry.width,
            height: geometry.height,
            t,
            warm: false,
            decisions: vec![false; geometry.pixels()],
            scores: vec![0.0; geometry.pixels()],
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.decisions[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.decisions.iter().filter(|&&d| d).count()
    }

    pub fn to_pbm(&self) -> Vec<u8> {
        pnm::encode_pbm(self.width, self.height, &self.decisions)
    }

    /// Raw little-endian f32 score plane.
    pub fn scores_le_bytes(&self) -> Vec<u8> {
        self.scores.iter().flat_map(|s| s.to_le_bytes()).collect()
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "theta",
            value: theta,
            expected: "finite real",
        })
    }
}

fn check_compatible(e: &EventField, b: &BehaviorImage) -> Result<()> {
    b.geometry().ensure_same(e.geometry())?;
    let p = &e.params;
    let m = &b.meta;
    let mut diffs = Vec::new();
    if p.w != m.w {
        diffs.push(format!("w: trained {}, events {}", m.w, p.w));
    }
    for (name, trained, now) in [("A1", m.a1, p.a1), ("A2", m.a2, p.a2), ("A3", m.a3, p.a3)] {
        if trained != now {
            diffs.push(format!("{name}: trained {trained}, events {now}"));
        }
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::MetadataMismatch(diffs))
    }
}

fn subtract_into(e: &EventField, b: &BehaviorImage, theta: f64, out: &mut AnomalyMap) {
    out.t = e.t;
    out.warm = e.warm;
    for ((d, s), (&ev, &bv)) in out
        .decisions
        .iter_mut()
        .zip(out.scores.iter_mut())
        .zip(e.values.iter().zip(&b.values))
    {
        let score = f64::from(ev) - f64::from(bv);
        *d = score > theta;
        *s = score as f32;
    }
}

/// Compares one event field against B. The window and weights recorded
/// with `e` must match those B was trained with.
pub fn subtract(e: &EventField, b: &BehaviorImage, theta: f64) -> Result<AnomalyMap> {
    check_theta(theta)?;
    check_compatible(e, b)?;
    let mut out = AnomalyMap::empty(e.geometry(), e.t);
    subtract_into(e, b, theta, &mut out);
    Ok(out)
}

/// Inclusive pixel bounds of one anomalous component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Blob {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    /// Pixels in the component, not the box.
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSummary {
    pub count: usize,
    pub fraction: f64,
    /// Ordered by first pixel in raster order.
    pub blobs: Vec<Blob>,
}

pub fn summarize(map: &AnomalyMap, connectivity: Connectivity) -> MapSummary {
    let labels = LabelField {
        width: map.width,
        height: map.height,
        t: map.t,
        bits: map.decisions.clone(),
    };
    let comps = label_components(&labels, connectivity);
    let mut blobs: Vec<Option<Blob>> = vec![None; comps.count as usize];
    let mut order = Vec::with_capacity(blobs.len());
    for y in 0..map.height {
        for x in 0..map.width {
            let id = comps.ids[y * map.width + x];
            if id == 0 {
                continue;
            }
            let slot = &mut blobs[id as usize - 1];
            match slot {
                Some(b) => {
                    b.x0 = b.x0.min(x);
                    b.x1 = b.x1.max(x);
                    b.y1 = y;
                    b.area += 1;
                }
                None => {
                    *slot = Some(Blob {
                        x0: x,
                        y0: y,
                        x1: x,
                        y1: y,
                        area: 1,
                    });
                    order.push(id as usize - 1);
                }
            }
        }
    }
    let count = map.count();
    let pixels = map.decisions.len().max(1);
    MapSummary {
        count,
        fraction: count as f64 / pixels as f64,
        blobs: order.into_iter().filter_map(|i| blobs[i]).collect(),
    }
}

/// Streaming detector: pipeline plus a trained behavior image.
#[derive(Debug, Clone)]
pub struct Detector {
    pipeline: Pipeline,
    behavior: BehaviorImage,
    theta: f64,
    events: EventField,
    map: AnomalyMap,
}

impl Detector {
    /// Fails with [`Error::MetadataMismatch`] listing every setting that
    /// differs between `config` and the training run.
    pub fn new(behavior: BehaviorImage, config: &Config) -> Result<Self> {
        config.validate()?;
        let diffs = behavior.meta.mismatches(config);
        if !diffs.is_empty() {
            return Err(Error::MetadataMismatch(diffs));
        }
        let geometry = behavior.geometry();
        Ok(Detector {
            pipeline: Pipeline::new(geometry, config, DescriptorHistory::LabelsOnly)?,
            theta: config.theta,
            events: EventField::zeros(geometry, config.event),
            map: AnomalyMap::empty(geometry, 0),
            behavior,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) -> Result<()> {
        check_theta(theta)?;
        self.theta = theta;
        Ok(())
    }

    pub fn behavior(&self) -> &BehaviorImage {
        &self.behavior
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    /// Most recent event field.
    pub fn events(&self) -> &EventField {
        &self.events
    }

    pub fn push(&mut self, frame: &Frame) -> Result<&AnomalyMap> {
        self.pipeline.push(frame)?;
        self.pipeline.statistic_into(&mut self.events)?;
        if self.events.warm {
            subtract_into(&self.events, &self.behavior, self.theta, &mut self.map);
        } else {
            self.map.t = self.events.t;
            self.map.warm = false;
            self.map.decisions.fill(false);
            for (s, (&e, &b)) in self
                .map
                .scores
                .iter_mut()
                .zip(self.events.values.iter().zip(&self.behavior.values))
            {
                *s = (f64::from(e) - f64::from(b)) as f32;
            }
        }
        Ok(&self.map)
    }

    /// Heap bytes carried between frames, B included.
    pub fn state_bytes(&self) -> usize {
        self.pipeline.state_bytes() + self.behavior.heap_bytes()
    }

    /// Heap bytes of per-frame buffers, the output map included.
    pub fn scratch_bytes(&self) -> usize {
        self.pipeline.scratch_bytes()
            + self.events.values.capacity() * std::mem::size_of::<f32>()
            + self.map.decisions.capacity()
            + self.map.scores.capacity() * std::mem::size_of::<f32>()
    }
}

/// Pixel-level agreement between detections and ground truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, predicted: &[bool], truth: &[bool]) -> Result<()> {
        if predicted.len() != truth.len() {
            return Err(Error::LengthMismatch {
                left: predicted.len(),
                right: truth.len(),
            });
        }
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
        Ok(())
    }

    /// 1 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// 1 when there was nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn iou(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{SurrogateKind, TrainingMetadata};
    use crate::event::EventParams;

    fn behavior(values: Vec<f32>, width: usize) -> BehaviorImage {
        BehaviorImage {
            width,
            height: values.len() / width,
            kind: SurrogateKind::Max,
            meta: TrainingMetadata::from_config(&Config::default(), 200),
            values,
        }
    }

    fn events(values: Vec<f32>, width: usize) -> EventField {
        EventField {
            width,
            height: values.len() / width,
            t: 7,
            values,
            params: EventParams::default(),
            warm: true,
        }
    }

    #[test]
    fn threshold_arithmetic() {
        let map = subtract(&events(vec![0.9], 1), &behavior(vec![0.3], 1), 0.5).unwrap();
        assert!(map.decisions[0]);
        assert!((map.scores[0] - 0.6).abs() < 1e-6);
        assert_eq!(map.t, 7);
    }

    #[test]
    fn equality_is_not_anomalous() {
        let v = vec![0.0, 0.25, 0.5, 1.0];
        let map = subtract(&events(v.clone(), 2), &behavior(v, 2), 0.0).unwrap();
        assert_eq!(map.count(), 0);
    }

    #[test]
    fn incompatible_inputs() {
        let b = behavior(vec![0.0; 4], 2);
        assert!(matches!(
            subtract(&events(vec![0.0; 4], 4), &b, 0.5),
            Err(Error::GeometryMismatch { .. })
        ));
        let mut e = events(vec![0.0; 4], 2);
        e.params.w = 50;
        assert!(matches!(subtract(&e, &b, 0.5), Err(Error::MetadataMismatch(_))));
        assert!(subtract(&events(vec![0.0; 4], 2), &b, f64::NAN).is_err());

        let mut c = Config::default();
        c.descriptor.n = 5;
        match Detector::new(b, &c) {
            Err(Error::MetadataMismatch(d)) => assert_eq!(d, ["N: trained 9, configured 5"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn summary_of_empty_map() {
        let s = summarize(&AnomalyMap::empty(Geometry::new(5, 4), 0), Connectivity::Eight);
        assert_eq!(s.count, 0);
        assert_eq!(s.fraction, 0.0);
        assert!(s.blobs.is_empty());
    }

    #[test]
    fn summary_of_block() {
        let mut map = AnomalyMap::empty(Geometry::new(8, 6), 0);
        for y in 1..4 {
            for x in 2..5 {
                map.decisions[y * 8 + x] = true;
            }
        }
        map.decisions[5 * 8 + 7] = true;
        let s = summarize(&map, Connectivity::Eight);
        assert_eq!(s.count, 10);
        assert_eq!(
            s.blobs,
            [
                Blob { x0: 2, y0: 1, x1: 4, y1: 3, area: 9 },
                Blob { x0: 7, y0: 5, x1: 7, y1: 5, area: 1 },
            ]
        );
    }

    #[test]
    fn confusion_scores() {
        let mut c = Confusion::default();
        c.add(&[true, true, false, false], &[true, false, true, false]).unwrap();
        assert_eq!(c.precision(), 0.5);
        assert_eq!(c.recall(), 0.5);
        assert!((c.iou() - 1.0 / 3.0).abs() < 1e-12);
        assert!(c.add(&[true], &[]).is_err());
        assert_eq!(Confusion::default().precision(), 1.0);
    }

    #[test]
    fn warm_up_is_silent() {
        let mut config = Config::default();
        config.event.w = 4;
        config.theta = 0.0;
        let mut b = behavior(vec![0.0; 16], 4);
        b.meta = TrainingMetadata::from_config(&config, 10);
        let mut d = Detector::new(b, &config).unwrap();
        for t in 0..4u64 {
            let v = if t % 2 == 0 { 0 } else { 255 };
            let map = d.push(&Frame::filled(4, 4, t, v)).unwrap();
            assert_eq!(map.warm, t == 3);
        }
        assert_eq!(d.push(&Frame::filled(4, 4, 4, 0)).unwrap().count(), 16);
    }
}
