#![allow(dead_code)]

use std::collections::VecDeque;

use behavsub::behavior::{train, BehaviorImage};
use behavsub::config::Config;
use behavsub::descriptor::Connectivity;
use behavsub::detect::{Confusion, Detector};
use behavsub::frame::Frame;
use behavsub::synth::{Rendered, SceneScript};

pub fn render(text: &str, seed: u64) -> Rendered {
    SceneScript::parse(text).unwrap().render(seed).unwrap()
}

pub fn train_on(frames: &[Frame], config: &Config) -> BehaviorImage {
    let g = frames[0].geometry();
    train(frames.iter().cloned().map(Ok), g, config).unwrap()
}

/// Detection and raw-label confusion over warm frames, plus totals for a
/// second mask (pixels to avoid).
pub struct Scores {
    pub detect: Confusion,
    pub raw: Confusion,
    pub warm_frames: usize,
}

pub fn score(b: &BehaviorImage, config: &Config, test: &Rendered) -> Scores {
    let mut d = Detector::new(b.clone(), config).unwrap();
    let mut s = Scores {
        detect: Confusion::default(),
        raw: Confusion::default(),
        warm_frames: 0,
    };
    for (f, m) in test.frames.iter().zip(&test.masks) {
        let map = d.push(f).unwrap().clone();
        if !map.warm {
            continue;
        }
        s.warm_frames += 1;
        s.detect.add(&map.decisions, m).unwrap();
        s.raw.add(&d.pipeline().labels().bits, m).unwrap();
    }
    s
}

pub fn flood_fill_ids(bits: &[bool], w: usize, h: usize, conn: Connectivity) -> Vec<usize> {
    let mut ids = vec![0usize; bits.len()];
    let mut next = 0;
    let offsets: &[(i64, i64)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
    };
    for start in 0..bits.len() {
        if !bits[start] || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] && ids[j] == 0 {
                    ids[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    ids
}

/// Counts, for every moving pixel, the window pixels in its own component.
pub fn brute_force_counts(bits: &[bool], w: usize, h: usize, n: usize, conn: Connectivity) -> Vec<u16> {
    let ids = flood_fill_ids(bits, w, h, conn);
    let r = (n / 2) as i64;
    let mut out = vec![0u16; bits.len()];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            if !bits[i] {
                continue;
            }
            let mut c = 0;
            for yy in y - r..=y + r {
                for xx in x - r..=x + r {
                    if xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 {
                        c += u16::from(ids[yy as usize * w + xx as usize] == ids[i]);
                    }
                }
            }
            out[i] = c;
        }
    }
    out
}

