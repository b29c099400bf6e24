//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every image accessor returns a `width * height * 4` RGBA buffer ready for
//! `ImageData`.

use behavsub::behavior::{train, BehaviorImage};
use behavsub::config::Config;
use behavsub::descriptor::{label_components, size_descriptor, Connectivity};
use behavsub::detect::{subtract, AnomalyMap, Confusion, Detector};
use behavsub::frame::Frame;
use behavsub::markov::{encode_runs, sequence_neg_log_prob_with, ChainParams, RunConvention};
use behavsub::motion::LabelField;
use behavsub::synth::SceneScript;
use wasm_bindgen::prelude::*;

fn gray_rgba(values: impl Iterator<Item = u8>, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * n);
    for v in values {
        out.extend_from_slice(&[v, v, v, 255]);
    }
    out
}

fn unit_to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn connectivity(c: u8) -> Connectivity {
    if c == 4 {
        Connectivity::Four
    } else {
        Connectivity::Eight
    }
}

/// Editable label field with its size descriptors.
#[wasm_bindgen]
pub struct DescriptorExplorer {
    labels: LabelField,
    n: usize,
    connectivity: Connectivity,
    counts: Vec<u16>,
    components: u32,
}

#[wasm_bindgen]
impl DescriptorExplorer {
    #[wasm_bindgen(constructor)]
    pub fn new(width: usize, height: usize) -> DescriptorExplorer {
        let labels = LabelField::new(width, height, 0, vec![false; width * height])
            .expect("label buffer matches geometry");
        let mut e = DescriptorExplorer {
            labels,
            n: 9,
            connectivity: Connectivity::Eight,
            counts: Vec::new(),
            components: 0,
        };
        e.refresh();
        e
    }

    fn refresh(&mut self) {
        let comps = label_components(&self.labels, self.connectivity);
        self.components = comps.count;
        self.counts = size_descriptor(&self.labels, &comps, self.n)
            .expect("window validated on entry")
            .counts;
    }

    pub fn width(&self) -> usize {
        self.labels.width
    }

    pub fn height(&self) -> usize {
        self.labels.height
    }

    pub fn toggle(&mut self, x: usize, y: usize) {
        if x < self.labels.width && y < self.labels.height {
            let i = y * self.labels.width + x;
            self.labels.bits[i] = !self.labels.bits[i];
            self.refresh();
        }
    }

    pub fn set(&mut self, x: usize, y: usize, moving: bool) {
        if x < self.labels.width && y < self.labels.height {
            self.labels.bits[y * self.labels.width + x] = moving;
            self.refresh();
        }
    }

    pub fn clear(&mut self) {
        self.labels.bits.fill(false);
        self.refresh();
    }

    /// Fills the field with moving pixels at the given density.
    pub fn scatter(&mut self, density: f64, seed: u64) {
        // splitmix64; good enough for a demo pattern
        let mut s = seed;
        for b in &mut self.labels.bits {
            s = s.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = s;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            z ^= z >> 31;
            *b = (z >> 11) as f64 / (1u64 << 53) as f64 <= density;
        }
        self.refresh();
    }

    /// Returns false and keeps the old window if `n` is even or too large.
    pub fn set_window(&mut self, n: usize) -> bool {
        if n % 2 == 0 || n > behavsub::descriptor::MAX_WINDOW {
            return false;
        }
        self.n = n;
        self.refresh();
        true
    }

    pub fn set_connectivity(&mut self, c: u8) {
        self.connectivity = connectivity(c);
        self.refresh();
    }

    pub fn component_count(&self) -> u32 {
        self.components
    }

    pub fn value_at(&self, x: usize, y: usize) -> f64 {
        if x >= self.labels.width || y >= self.labels.height {
            return 0.0;
        }
        f64::from(self.counts[y * self.labels.width + x]) / (self.n * self.n) as f64
    }

    /// Idle pixels dark blue, moving pixels from red (small) to yellow (large).
    pub fn rgba(&self) -> Vec<u8> {
        let scale = (self.n * self.n) as f64;
        let mut out = Vec::with_capacity(4 * self.counts.len());
        for (&moving, &c) in self.labels.bits.iter().zip(&self.counts) {
            if moving {
                let f = f64::from(c) / scale;
                out.extend_from_slice(&[230, unit_to_byte(f), 40, 255]);
            } else {
                out.extend_from_slice(&[20, 24, 48, 255]);
            }
        }
        out
    }
}

fn jitter_scripts() -> (String, String, Config) {
    let base = |actor: &str, frames: usize| {
        format!(
            "[scene]\nwidth=96\nheight=64\nframes={frames}\nbackground=50\n\
             [patch]\nrect=0,20,96,6\nintensity=170\n\
             [noise]\nkind=flicker\nrect=0,16,96,14\nprobability=0.2\namplitude=80\n{actor}"
        )
    };
    let mut c = Config::default();
    c.event.w = 20;
    c.theta = 0.5;
    (
        base("", 300),
        base("[actor]\nsize=16,16\nfrom=40,40\nintensity=250\nstart=40\nanomalous=true\n", 300),
        c,
    )
}

fn group_scripts() -> (String, String, Config) {
    let walker = |size: usize, start: usize, anomalous: bool| {
        let y = 24 - size as i64 / 2;
        format!(
            "[actor]\nsize={size},{size}\nfrom=-{size},{y}\nto=96,{y}\nspeed=0.5\nintensity=220\n\
             start={start}\nrepeat=true\nanomalous={anomalous}\n"
        )
    };
    let street = |actors: String, frames: usize| {
        format!("[scene]\nwidth=96\nheight=48\nframes={frames}\nbackground=40\n{actors}")
    };
    let mut c = Config::default();
    c.event.w = 4;
    c.theta = 0.3;
    (
        street(walker(6, 0, false), 400),
        street(walker(6, 0, false) + &walker(12, 30, true), 400),
        c,
    )
}

/// A trained detector stepping through a synthetic test video.
#[wasm_bindgen]
pub struct SceneDemo {
    config: Config,
    behavior: BehaviorImage,
    frames: Vec<Frame>,
    masks: Vec<Vec<bool>>,
    detector: Detector,
    map: AnomalyMap,
    next: usize,
    confusion: Confusion,
}

#[wasm_bindgen]
impl SceneDemo {
    /// `preset` is `"jitter"` or `"group"`.
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str, seed: u64) -> Result<SceneDemo, JsError> {
        let (train_text, test_text, config) = match preset {
            "group" => group_scripts(),
            _ => jitter_scripts(),
        };
        Self::build(&train_text, &test_text, config, seed).map_err(|e| JsError::new(&e))
    }

    /// Custom scenes: training and test scripts plus event window and threshold.
    pub fn from_scripts(
        train_text: &str,
        test_text: &str,
        w: usize,
        theta: f64,
        seed: u64,
    ) -> Result<SceneDemo, JsError> {
        let mut config = Config::default();
        config.event.w = w;
        config.theta = theta;
        Self::build(train_text, test_text, config, seed).map_err(|e| JsError::new(&e))
    }

    fn build(train_text: &str, test_text: &str, config: Config, seed: u64) -> Result<SceneDemo, String> {
        let e = |err: behavsub::Error| err.to_string();
        let train_scene = SceneScript::parse(train_text).map_err(e)?;
        let test_scene = SceneScript::parse(test_text).map_err(e)?;
        if train_scene.geometry() != test_scene.geometry() {
            return Err("training and test scenes differ in size".into());
        }
        let g = train_scene.geometry();
        let training = train_scene.render(seed).map_err(e)?;
        let behavior = train(training.frames.into_iter().map(Ok), g, &config).map_err(e)?;
        let test = test_scene.render(seed.wrapping_add(1)).map_err(e)?;
        let detector = Detector::new(behavior.clone(), &config).map_err(e)?;
        Ok(SceneDemo {
            map: AnomalyMap::empty(g, 0),
            config,
            behavior,
            frames: test.frames,
            masks: test.masks,
            detector,
            next: 0,
            confusion: Confusion::default(),
        })
    }

    pub fn width(&self) -> usize {
        self.behavior.width
    }

    pub fn height(&self) -> usize {
        self.behavior.height
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Index of the frame shown, or -1 before the first step.
    pub fn frame_index(&self) -> i64 {
        self.next as i64 - 1
    }

    pub fn theta(&self) -> f64 {
        self.config.theta
    }

    pub fn window(&self) -> usize {
        self.config.event.w
    }

    /// Advances one frame; false once the video is exhausted.
    pub fn step(&mut self) -> bool {
        let Some(frame) = self.frames.get(self.next) else {
            return false;
        };
        self.map = self.detector.push(frame).expect("demo frames match the detector").clone();
        if self.map.warm {
            self.confusion
                .add(&self.map.decisions, &self.masks[self.next])
                .expect("mask matches geometry");
        }
        self.next += 1;
        true
    }

    pub fn reset(&mut self) {
        self.detector = Detector::new(self.behavior.clone(), &self.config).expect("config was accepted before");
        self.map = AnomalyMap::empty(self.behavior.geometry(), 0);
        self.next = 0;
        self.confusion = Confusion::default();
    }

    /// Changes the threshold and re-tests the current frame. Running scores
    /// restart from here.
    pub fn set_theta(&mut self, theta: f64) {
        if !theta.is_finite() || self.detector.set_theta(theta).is_err() {
            return;
        }
        self.config.theta = theta;
        self.confusion = Confusion::default();
        if self.map.warm {
            if let Ok(m) = subtract(self.detector.events(), &self.behavior, theta) {
                self.map = m;
            }
        }
    }

    pub fn anomalous_pixels(&self) -> usize {
        self.map.count()
    }

    pub fn is_warm(&self) -> bool {
        self.map.warm
    }

    pub fn precision(&self) -> f64 {
        self.confusion.precision()
    }

    pub fn recall(&self) -> f64 {
        self.confusion.recall()
    }

    pub fn iou(&self) -> f64 {
        self.confusion.iou()
    }

    fn current(&self) -> Option<&Frame> {
        self.next.checked_sub(1).and_then(|i| self.frames.get(i))
    }

    pub fn frame_rgba(&self) -> Vec<u8> {
        let n = self.behavior.values.len();
        match self.current() {
            Some(f) => gray_rgba(f.data.iter().copied(), n),
            None => gray_rgba(std::iter::repeat_n(0, n), n),
        }
    }

    pub fn labels_rgba(&self) -> Vec<u8> {
        let bits = &self.detector.pipeline().labels().bits;
        gray_rgba(bits.iter().map(|&b| if b { 255 } else { 0 }), bits.len())
    }

    /// Current event field, scaled so 1.0 is white.
    pub fn events_rgba(&self) -> Vec<u8> {
        let v = &self.detector.events().values;
        gray_rgba(v.iter().map(|&e| unit_to_byte(f64::from(e))), v.len())
    }

    pub fn behavior_rgba(&self) -> Vec<u8> {
        let v = &self.behavior.values;
        gray_rgba(v.iter().map(|&e| unit_to_byte(f64::from(e))), v.len())
    }

    /// Frame with anomalies in red and ground truth outlined in green.
    pub fn anomaly_rgba(&self) -> Vec<u8> {
        let mut out = self.frame_rgba();
        let truth = self
            .next
            .checked_sub(1)
            .and_then(|i| self.masks.get(i));
        for (i, px) in out.chunks_exact_mut(4).enumerate() {
            let flagged = self.map.decisions[i];
            let truth = truth.is_some_and(|m| m[i]);
            match (flagged, truth) {
                (true, _) => px[..3].copy_from_slice(&[235, 40, 40]),
                (false, true) => px[1] = px[1].saturating_add(90),
                _ => {}
            }
        }
        out
    }
}

/// −log P of a `0`/`1` string under the two-state chain; `per_run` selects
/// the literal per-run product instead of the chain convention. NaN on
/// invalid input.
#[wasm_bindgen]
pub fn sequence_neg_log_prob(bits: &str, pi: f64, q: f64, p: f64, per_run: bool) -> f64 {
    let labels: Option<Vec<bool>> = bits
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect();
    let (Some(labels), Ok(params)) = (labels, ChainParams::new(pi, q, p)) else {
        return f64::NAN;
    };
    let Ok(runs) = encode_runs(&labels) else {
        return f64::NAN;
    };
    let convention = if per_run {
        RunConvention::PerRun
    } else {
        RunConvention::Chain
    };
    sequence_neg_log_prob_with(&runs, &params, convention)
}

/// Run lengths of a `0`/`1` string, comma-separated, prefixed by the first state.
#[wasm_bindgen]
pub fn run_lengths(bits: &str) -> String {
    let labels: Vec<bool> = bits.chars().filter_map(|c| match c {
        '0' => Some(false),
        '1' => Some(true),
        _ => None,
    }).collect();
    match encode_runs(&labels) {
        Ok(r) if !r.is_empty() => {
            let runs: Vec<String> = r.runs.iter().map(usize::to_string).collect();
            format!("{}:{}", if r.starts_busy { "busy" } else { "idle" }, runs.join(","))
        }
        _ => String::new(),
    }
}
