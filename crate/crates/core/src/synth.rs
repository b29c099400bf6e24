//! Scripted synthetic video with ground-truth masks.
//!
//! ```text
//! [scene]
//! width=64
//! height=48
//! frames=300
//! background=40
//!
//! [patch]              ; static scenery
//! rect=0,20,64,4       ; x,y,w,h
//! intensity=200
//!
//! [noise]
//! kind=flicker         ; flicker: independent +-amplitude jumps
//! rect=0,18,64,8       ; shimmer: cells toggle on/off, +amplitude when on
//! probability=0.2
//! amplitude=80
//! grain=1              ; cell size in pixels
//!
//! [actor]
//! shape=rect           ; rect | ellipse
//! size=6,6
//! from=-6,30
//! to=64,30
//! speed=2              ; pixels per frame along the path
//! intensity=230
//! start=0              ; active frames start..end
//! end=300
//! repeat=true          ; restart the path when it ends
//! anomalous=false      ; anomalous actors are written into the masks
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{KvDocument, KvEntry, KvSection};
use crate::error::{Error, Result};
use crate::frame::{Frame, Geometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    fn clipped(&self, g: Geometry) -> (usize, usize, usize, usize) {
        let x1 = (self.x + self.w).min(g.width);
        let y1 = (self.y + self.h).min(g.height);
        (self.x.min(x1), self.y.min(y1), x1, y1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub rect: Rect,
    pub intensity: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Flicker,
    Shimmer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    pub kind: NoiseKind,
    pub rect: Rect,
    pub probability: f64,
    pub amplitude: u8,
    pub grain: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Actor {
    pub shape: Shape,
    pub size: (usize, usize),
    /// Top-left corner at the start of the path; may lie outside the frame.
    pub from: (i64, i64),
    pub to: (i64, i64),
    pub speed: f64,
    pub intensity: u8,
    pub start: usize,
    pub end: usize,
    pub repeat: bool,
    pub anomalous: bool,
}

impl Actor {
    pub fn new(size: (usize, usize), from: (i64, i64), to: (i64, i64), frames: usize) -> Self {
        Actor {
            shape: Shape::Rect,
            size,
            from,
            to,
            speed: 1.0,
            intensity: 255,
            start: 0,
            end: frames,
            repeat: false,
            anomalous: false,
        }
    }

    pub fn is_active(&self, t: usize) -> bool {
        (self.start..self.end).contains(&t)
    }

    /// Top-left corner at frame `t`.
    pub fn position(&self, t: usize) -> (i64, i64) {
        let dx = (self.to.0 - self.from.0) as f64;
        let dy = (self.to.1 - self.from.1) as f64;
        let len = dx.hypot(dy);
        if len == 0.0 {
            return self.from;
        }
        let mut d = self.speed * t.saturating_sub(self.start) as f64;
        if self.repeat {
            d %= len + self.speed.max(f64::MIN_POSITIVE);
            d = d.min(len);
        } else {
            d = d.min(len);
        }
        let f = d / len;
        (
            self.from.0 + (dx * f).round() as i64,
            self.from.1 + (dy * f).round() as i64,
        )
    }

    fn covers(&self, dx: usize, dy: usize) -> bool {
        match self.shape {
            Shape::Rect => true,
            Shape::Ellipse => {
                let rx = self.size.0 as f64 / 2.0;
                let ry = self.size.1 as f64 / 2.0;
                let u = (dx as f64 + 0.5 - rx) / rx;
                let v = (dy as f64 + 0.5 - ry) / ry;
                u * u + v * v <= 1.0
            }
        }
    }

    /// Calls `f(index)` for every in-frame pixel the actor occupies at `t`.
    pub fn for_each_pixel(&self, g: Geometry, t: usize, mut f: impl FnMut(usize)) {
        if !self.is_active(t) {
            return;
        }
        let (px, py) = self.position(t);
        for dy in 0..self.size.1 {
            let y = py + dy as i64;
            if y < 0 || y >= g.height as i64 {
                continue;
            }
            for dx in 0..self.size.0 {
                let x = px + dx as i64;
                if x < 0 || x >= g.width as i64 || !self.covers(dx, dy) {
                    continue;
                }
                f(y as usize * g.width + x as usize);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneScript {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub background: u8,
    pub patches: Vec<Patch>,
    pub noise: Vec<Noise>,
    pub actors: Vec<Actor>,
}

impl SceneScript {
    pub fn new(width: usize, height: usize, frames: usize) -> Self {
        SceneScript {
            width,
            height,
            frames,
            background: 0,
            patches: Vec::new(),
            noise: Vec::new(),
            actors: Vec::new(),
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScript(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty geometry {}x{}", self.width, self.height));
        }
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        for n in &self.noise {
            if !(0.0..=1.0).contains(&n.probability) {
                return bad(format!("noise probability {} outside [0, 1]", n.probability));
            }
            if n.grain == 0 {
                return bad("noise grain must be at least 1".into());
            }
        }
        for (i, a) in self.actors.iter().enumerate() {
            if a.size.0 == 0 || a.size.1 == 0 {
                return bad(format!("actor {i} has empty size"));
            }
            if !a.speed.is_finite() || a.speed < 0.0 {
                return bad(format!("actor {i} speed {} must be finite and >= 0", a.speed));
            }
            if a.start >= a.end {
                return bad(format!("actor {i} start {} not before end {}", a.start, a.end));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = KvDocument::parse("scene script", text)?;
        let scene = doc
            .sections
            .iter()
            .find(|s| s.name == "scene")
            .ok_or_else(|| Error::InvalidScript("missing [scene] section".into()))?;
        let mut script = SceneScript::new(
            required(&doc, scene, "width")?,
            required(&doc, scene, "height")?,
            required(&doc, scene, "frames")?,
        );
        script.background = optional(&doc, scene, "background")?.unwrap_or(0);
        for section in &doc.sections {
            match section.name.as_str() {
                "scene" => known_keys(section, &["width", "height", "frames", "background"])?,
                "patch" => {
                    known_keys(section, &["rect", "intensity"])?;
                    script.patches.push(Patch {
                        rect: rect(&doc, section, "rect")?,
                        intensity: required(&doc, section, "intensity")?,
                    });
                }
                "noise" => {
                    known_keys(section, &["kind", "rect", "probability", "amplitude", "grain"])?;
                    let kind = match required::<String>(&doc, section, "kind")?.as_str() {
                        "flicker" => NoiseKind::Flicker,
                        "shimmer" => NoiseKind::Shimmer,
                        k => return Err(entry_error(&doc, section, "kind", format!("unknown noise kind {k:?}"))),
                    };
                    script.noise.push(Noise {
                        kind,
                        rect: rect(&doc, section, "rect")?,
                        probability: required(&doc, section, "probability")?,
                        amplitude: required(&doc, section, "amplitude")?,
                        grain: optional(&doc, section, "grain")?.unwrap_or(1),
                    });
                }
                "actor" => {
                    known_keys(
                        section,
                        &[
                            "shape", "size", "from", "to", "speed", "intensity", "start", "end",
                            "repeat", "anomalous",
                        ],
                    )?;
                    let size = pair::<usize>(&doc, section, "size")?;
                    let from = pair::<i64>(&doc, section, "from")?;
                    let mut actor = Actor::new(size, from, from, script.frames);
                    if section.get("to").is_some() {
                        actor.to = pair(&doc, section, "to")?;
                    }
                    actor.shape = match optional::<String>(&doc, section, "shape")?.as_deref() {
                        None | Some("rect") => Shape::Rect,
                        Some("ellipse") => Shape::Ellipse,
                        Some(s) => return Err(entry_error(&doc, section, "shape", format!("unknown shape {s:?}"))),
                    };
                    if let Some(v) = optional(&doc, section, "speed")? {
                        actor.speed = v;
                    }
                    if let Some(v) = optional(&doc, section, "intensity")? {
                        actor.intensity = v;
                    }
                    if let Some(v) = optional(&doc, section, "start")? {
                        actor.start = v;
                    }
                    if let Some(v) = optional(&doc, section, "end")? {
                        actor.end = v;
                    }
                    actor.repeat = optional(&doc, section, "repeat")?.unwrap_or(false);
                    actor.anomalous = optional(&doc, section, "anomalous")?.unwrap_or(false);
                    script.actors.push(actor);
                }
                other => {
                    return Err(Error::parse(
                        "scene script",
                        section.line,
                        format!("unknown section [{other}]"),
                    ))
                }
            }
        }
        script.validate()?;
        Ok(script)
    }

    pub fn renderer(&self, seed: u64) -> Result<SceneRenderer<'_>> {
        SceneRenderer::new(self, seed)
    }

    /// Renders every frame. Memory grows with the frame count; use
    /// [`SceneScript::renderer`] to stream long scenes.
    pub fn render(&self, seed: u64) -> Result<Rendered> {
        let mut frames = Vec::with_capacity(self.frames);
        let mut masks = Vec::with_capacity(self.frames);
        for item in self.renderer(seed)? {
            let (f, m) = item;
            frames.push(f);
            masks.push(m);
        }
        Ok(Rendered { frames, masks })
    }
}

fn entry_error(doc: &KvDocument, section: &KvSection, key: &str, reason: String) -> Error {
    let line = section.get(key).map_or(section.line, |e| e.line);
    Error::parse(&doc.context, line, reason)
}

fn known_keys(section: &KvSection, keys: &[&str]) -> Result<()> {
    match section.entries.iter().find(|e| !keys.contains(&e.key.as_str())) {
        Some(e) => Err(Error::parse(
            "scene script",
            e.line,
            format!("unknown key {:?} in [{}]", e.key, section.name),
        )),
        None => Ok(()),
    }
}

fn optional<T: std::str::FromStr>(doc: &KvDocument, section: &KvSection, key: &str) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    section.get(key).map(|e| doc.value(e)).transpose()
}

fn required<T: std::str::FromStr>(doc: &KvDocument, section: &KvSection, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    optional(doc, section, key)?.ok_or_else(|| {
        Error::parse(
            &doc.context,
            section.line,
            format!("[{}] lacks {key}", section.name),
        )
    })
}

fn numbers<T: std::str::FromStr>(doc: &KvDocument, entry: &KvEntry, n: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = entry.value.split(',').map(str::trim).collect();
    let parsed: Option<Vec<T>> = parts.iter().map(|p| p.parse().ok()).collect();
    match parsed {
        Some(v) if v.len() == n => Ok(v),
        _ => Err(Error::parse(
            &doc.context,
            entry.line,
            format!("{} = {:?}: expected {n} comma-separated numbers", entry.key, entry.value),
        )),
    }
}

fn pair<T: std::str::FromStr + Copy>(doc: &KvDocument, section: &KvSection, key: &str) -> Result<(T, T)> {
    let entry = section
        .get(key)
        .ok_or_else(|| Error::parse(&doc.context, section.line, format!("[{}] lacks {key}", section.name)))?;
    let v = numbers::<T>(doc, entry, 2)?;
    Ok((v[0], v[1]))
}

fn rect(doc: &KvDocument, section: &KvSection, key: &str) -> Result<Rect> {
    let entry = section
        .get(key)
        .ok_or_else(|| Error::parse(&doc.context, section.line, format!("[{}] lacks {key}", section.name)))?;
    let v = numbers::<usize>(doc, entry, 4)?;
    Ok(Rect::new(v[0], v[1], v[2], v[3]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub frames: Vec<Frame>,
    /// Anomalous-actor pixels per frame.
    pub masks: Vec<Vec<bool>>,
}

/// Frame-by-frame renderer yielding `(frame, mask)` pairs.
#[derive(Debug, Clone)]
pub struct SceneRenderer<'a> {
    script: &'a SceneScript,
    rng: ChaCha8Rng,
    t: usize,
    base: Vec<u8>,
    shimmer: Vec<Vec<bool>>,
}

impl<'a> SceneRenderer<'a> {
    fn new(script: &'a SceneScript, seed: u64) -> Result<Self> {
        script.validate()?;
        let g = script.geometry();
        let mut base = vec![script.background; g.pixels()];
        for p in &script.patches {
            let (x0, y0, x1, y1) = p.rect.clipped(g);
            for y in y0..y1 {
                base[y * g.width + x0..y * g.width + x1].fill(p.intensity);
            }
        }
        let shimmer = script
            .noise
            .iter()
            .map(|n| match n.kind {
                NoiseKind::Shimmer => {
                    let (cw, ch) = cells(n);
                    vec![false; cw * ch]
                }
                NoiseKind::Flicker => Vec::new(),
            })
            .collect();
        Ok(SceneRenderer {
            script,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 0,
            base,
            shimmer,
        })
    }
}

fn cells(n: &Noise) -> (usize, usize) {
    (n.rect.w.div_ceil(n.grain), n.rect.h.div_ceil(n.grain))
}

impl Iterator for SceneRenderer<'_> {
    type Item = (Frame, Vec<bool>);

    fn next(&mut self) -> Option<Self::Item> {
        let s = self.script;
        if self.t >= s.frames {
            return None;
        }
        let g = s.geometry();
        let t = self.t;
        let mut data = self.base.clone();
        let mut mask = vec![false; g.pixels()];
        for a in &s.actors {
            a.for_each_pixel(g, t, |i| {
                data[i] = a.intensity;
                if a.anomalous {
                    mask[i] = true;
                }
            });
        }
        for (k, n) in s.noise.iter().enumerate() {
            let (cw, ch) = cells(n);
            let (x0, y0, x1, y1) = n.rect.clipped(g);
            for cy in 0..ch {
                for cx in 0..cw {
                    let delta: i16 = match n.kind {
                        NoiseKind::Flicker => {
                            if self.rng.random_bool(n.probability) {
                                if self.rng.random_bool(0.5) {
                                    i16::from(n.amplitude)
                                } else {
                                    -i16::from(n.amplitude)
                                }
                            } else {
                                0
                            }
                        }
                        NoiseKind::Shimmer => {
                            let state = &mut self.shimmer[k][cy * cw + cx];
                            if self.rng.random_bool(n.probability) {
                                *state = !*state;
                            }
                            if *state {
                                i16::from(n.amplitude)
                            } else {
                                0
                            }
                        }
                    };
                    if delta == 0 {
                        continue;
                    }
                    let ys = (n.rect.y + cy * n.grain).max(y0);
                    let ye = (n.rect.y + (cy + 1) * n.grain).min(y1);
                    let xs = (n.rect.x + cx * n.grain).max(x0);
                    let xe = (n.rect.x + (cx + 1) * n.grain).min(x1);
                    for y in ys..ye {
                        for v in &mut data[y * g.width + xs..y * g.width + xe.max(xs)] {
                            *v = (i16::from(*v) + delta).clamp(0, 255) as u8;
                        }
                    }
                }
            }
        }
        self.t += 1;
        let frame = Frame {
            width: g.width,
            height: g.height,
            t: t as u64,
            data,
        };
        Some((frame, mask))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.script.frames - self.t;
        (left, Some(left))
    }
}

impl ExactSizeIterator for SceneRenderer<'_> {}
