//! One test per acceptance criterion. Each prints a single
//! `criterion N: PASS|FAIL` line with the measured value and its tolerance.

mod common;

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::time::Instant;

use behavsub::analyze::{report, trace_pixels, DEFAULT_BINS};
use behavsub::config::Config;
use behavsub::descriptor::{label_components, size_descriptor, Connectivity};
use behavsub::detect::Detector;
use behavsub::event::{DescriptorHistory, EventParams, EventState};
use behavsub::frame::Geometry;
use behavsub::markov::{encode_runs, fit_chain, sequence_neg_log_prob, ChainParams};
use behavsub::motion::LabelField;
use behavsub::SurrogateKind;
use common::{brute_force_counts, render, score, train_on};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPLAY_MAX_SECONDS: f64 = 30.0;
const NORMALIZATION_TOLERANCE: f64 = 1e-9;
const CHAIN_FIT_TOLERANCE: f64 = 0.02;
const JITTER_MIN_PRECISION: f64 = 0.9;
const JITTER_MIN_RECALL: f64 = 0.7;
const JITTER_MAX_RAW_PRECISION: f64 = 0.5;
const GROUP_MIN_IOU: f64 = 0.5;
const GROUP_MAX_SMALL_COVERAGE: f64 = 0.01;
const TARGET_FPS: f64 = 20.0;
const FLOOR_FPS: f64 = 10.0;
const MAX_STATE_BYTES_PER_PIXEL: f64 = 16.0;
const IDLE_MIN_LOW_MASS: f64 = 0.9;
const TRAFFIC_MAX_LOW_MASS: f64 = 0.5;

/// Tracks live heap bytes per thread so parallel tests do not interfere.
struct CountingAlloc;

thread_local! {
    static LIVE: Cell<isize> = const { Cell::new(0) };
}

fn track(delta: isize) {
    let _ = LIVE.try_with(|c| c.set(c.get() + delta));
}

unsafe impl GlobalAlloc for CountingAlloc {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        track(layout.size() as isize);
        unsafe { System.alloc(layout) }
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        track(layout.size() as isize);
        unsafe { System.alloc_zeroed(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        track(-(layout.size() as isize));
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        track(new_size as isize - layout.size() as isize);
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn live_bytes() -> isize {
    LIVE.with(Cell::get)
}

fn verdict(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

const REPLAY_SCENES: [&str; 3] = [
    "[scene]\nwidth=64\nheight=48\nframes=500\nbackground=40\n\
     [patch]\nrect=0,10,64,4\nintensity=190\n\
     [noise]\nkind=flicker\nrect=0,8,64,8\nprobability=0.2\namplitude=80\n\
     [actor]\nsize=8,8\nfrom=-8,30\nto=64,30\nspeed=1.5\nintensity=230\nrepeat=true\n",
    "[scene]\nwidth=64\nheight=48\nframes=500\nbackground=70\n\
     [noise]\nkind=shimmer\nrect=0,28,64,20\nprobability=0.15\namplitude=70\ngrain=2\n\
     [actor]\nshape=ellipse\nsize=10,6\nfrom=0,4\nto=54,16\nspeed=0.8\nintensity=10\nrepeat=true\n\
     [actor]\nsize=5,5\nfrom=60,40\nto=0,2\nspeed=2\nintensity=250\nstart=100\nend=400\nrepeat=true\n",
    "[scene]\nwidth=64\nheight=48\nframes=500\nbackground=120\n\
     [patch]\nrect=20,0,6,48\nintensity=20\n\
     [noise]\nkind=flicker\nrect=17,0,12,48\nprobability=0.35\namplitude=90\ngrain=1\n\
     [noise]\nkind=shimmer\nrect=40,30,24,18\nprobability=0.3\namplitude=60\ngrain=3\n\
     [actor]\nsize=12,12\nfrom=0,36\nto=52,0\nspeed=1\nintensity=255\nrepeat=true\n",
];

#[test]
fn criterion_01_zero_false_alarm_replay() {
    let start = Instant::now();
    let mut config = Config::default();
    config.event.w = 50;
    config.theta = 0.0;
    config.surrogate = SurrogateKind::Max;
    let mut total = 0usize;
    let mut warm = 0usize;
    for (k, text) in REPLAY_SCENES.iter().enumerate() {
        let video = render(text, 100 + k as u64);
        assert_eq!(video.frames.len(), 500);
        let b = train_on(&video.frames, &config);
        let mut d = Detector::new(b, &config).unwrap();
        for f in &video.frames {
            let map = d.push(f).unwrap();
            total += map.count();
            warm += usize::from(map.warm);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        total == 0 && warm == 3 * 451 && secs < REPLAY_MAX_SECONDS,
        format!("{total} anomalous pixels over {warm} warm frames of 3 videos in {secs:.2} s (need 0, < {REPLAY_MAX_SECONDS} s)"),
    );
}

#[test]
fn criterion_02_descriptor_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatched = 0;
    let mut checked = 0;
    for field in 0..100 {
        let density = 0.1 + 0.8 * (field as f64 / 99.0);
        let bits: Vec<bool> = (0..32 * 32).map(|_| rng.random_bool(density)).collect();
        let labels = LabelField::new(32, 32, 0, bits).unwrap();
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let comps = label_components(&labels, conn);
            for n in [3, 5, 9] {
                let got = size_descriptor(&labels, &comps, n).unwrap();
                let want = brute_force_counts(&labels.bits, 32, 32, n, conn);
                checked += 1;
                mismatched += usize::from(got.counts != want || usize::from(got.scale) != n * n);
            }
        }
    }
    verdict(
        2,
        mismatched == 0,
        format!("{mismatched} of {checked} (field, N, connectivity) cases differ from brute force (need 0)"),
    );
}

#[test]
fn criterion_03_probability_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = ChainParams::new(rng.random(), rng.random(), rng.random()).unwrap();
        for w in 1..=12usize {
            let total: f64 = (0u32..1 << w)
                .map(|code| {
                    let labels: Vec<bool> = (0..w).map(|b| code >> b & 1 == 1).collect();
                    (-sequence_neg_log_prob(&encode_runs(&labels).unwrap(), &c)).exp()
                })
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    verdict(
        3,
        worst <= NORMALIZATION_TOLERANCE,
        format!("max |sum - 1| = {worst:.3e} over 20 triples, w = 1..=12 (need <= {NORMALIZATION_TOLERANCE:e})"),
    );
}

#[test]
fn criterion_04_incremental_equals_batch() {
    let g = Geometry::new(12, 10);
    let pixels = g.pixels();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut history: Vec<(Vec<bool>, Vec<u16>)> = Vec::new();
    let mut fields = Vec::new();
    for t in 0..1000u64 {
        let density = rng.random_range(0.0..0.8);
        let bits: Vec<bool> = (0..pixels).map(|_| rng.random_bool(density)).collect();
        let labels = LabelField::new(g.width, g.height, t, bits).unwrap();
        let d = size_descriptor(&labels, &label_components(&labels, Connectivity::Eight), 5).unwrap();
        history.push((labels.bits.clone(), d.counts.clone()));
        fields.push((labels, d));
    }
    let mut mismatches = 0u64;
    let mut comparisons = 0u64;
    for w in [5usize, 24, 100] {
        let params = EventParams { w, a1: 0.5, a2: 0.25, a3: 1.0 };
        let mut stored = EventState::new(g, w, DescriptorHistory::Stored).unwrap();
        let mut compact = EventState::new(g, w, DescriptorHistory::LabelsOnly).unwrap();
        for (k, (labels, d)) in fields.iter().enumerate() {
            if k >= w {
                let (old_labels, old_descriptors) = &fields[k - w];
                let mut out = LabelField::empty(g, 0);
                assert!(compact.oldest_labels(&mut out).unwrap());
                assert_eq!(&out.bits, &old_labels.bits);
                compact.retire_oldest(old_descriptors).unwrap();
            }
            stored.push(labels, d).unwrap();
            compact.push(labels, d).unwrap();
            let window = &history[(k + 1).saturating_sub(w)..=k];
            let es = stored.statistic(&params).unwrap();
            let ec = compact.statistic(&params).unwrap();
            for i in 0..pixels {
                let busy: u32 = window.iter().map(|s| u32::from(s.0[i])).sum();
                let mass: u32 = window.iter().map(|s| u32::from(s.1[i])).sum();
                let flips: u32 = window.windows(2).map(|p| u32::from(p[0].0[i] != p[1].0[i])).sum();
                let e = (params.a3 * (f64::from(mass) / 25.0)
                    + params.a1 * f64::from(busy)
                    + params.a2 * f64::from(flips))
                    / window.len() as f64;
                let e = e as f32;
                for state in [&stored, &compact] {
                    comparisons += 1;
                    if state.busy_count(i) != busy
                        || state.descriptor_sum(i) != mass
                        || state.transitions(i) != flips
                    {
                        mismatches += 1;
                    }
                }
                comparisons += 2;
                mismatches += u64::from(es.values[i] != e) + u64::from(ec.values[i] != e);
            }
        }
    }
    verdict(
        4,
        mismatches == 0,
        format!("{mismatches} of {comparisons} per-pixel comparisons differ, w in {{5, 24, 100}}, 1000 frames (need 0)"),
    );
}

#[test]
fn criterion_05_chain_fit() {
    let truth = ChainParams::new(0.5, 0.9, 0.95).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // 10^4 chains of 10 steps: 10^5 simulated steps in total
    let chains: Vec<Vec<bool>> = (0..10_000)
        .map(|_| {
            let mut s = vec![rng.random_bool(truth.pi)];
            for _ in 1..10 {
                let prev = *s.last().unwrap();
                let stay = if prev { truth.q } else { truth.p };
                s.push(if rng.random_bool(stay) { prev } else { !prev });
            }
            s
        })
        .collect();
    assert_eq!(chains.iter().map(Vec::len).sum::<usize>(), 100_000);
    let fit = fit_chain(chains.iter().map(Vec::as_slice)).unwrap();
    let err = (fit.pi - truth.pi)
        .abs()
        .max((fit.q - truth.q).abs())
        .max((fit.p - truth.p).abs());
    verdict(
        5,
        err <= CHAIN_FIT_TOLERANCE,
        format!(
            "fit pi={:.4} q={:.4} p={:.4}, max error {err:.4} (need <= {CHAIN_FIT_TOLERANCE})",
            fit.pi, fit.q, fit.p
        ),
    );
}

fn jitter_scene(actor: &str, frames: usize) -> String {
    format!(
        "[scene]\nwidth=96\nheight=64\nframes={frames}\nbackground=50\n\
         [patch]\nrect=0,20,96,6\nintensity=170\n\
         [noise]\nkind=flicker\nrect=0,16,96,14\nprobability=0.2\namplitude=80\n{actor}"
    )
}

#[test]
fn criterion_06_jitter_resilience() {
    let train = render(&jitter_scene("", 400), 61);
    let test = render(
        &jitter_scene(
            "[actor]\nsize=16,16\nfrom=40,40\nintensity=250\nstart=40\nanomalous=true\n",
            300,
        ),
        62,
    );
    let mut config = Config::default();
    config.event.w = 20;
    config.theta = 0.5;
    let b = train_on(&train.frames, &config);
    let s = score(&b, &config, &test);
    let (p, r, raw) = (s.detect.precision(), s.detect.recall(), s.raw.precision());
    verdict(
        6,
        p >= JITTER_MIN_PRECISION && r >= JITTER_MIN_RECALL && raw < JITTER_MAX_RAW_PRECISION,
        format!(
            "precision {p:.3} (>= {JITTER_MIN_PRECISION}), recall {r:.3} (>= {JITTER_MIN_RECALL}), \
             raw label precision {raw:.3} (< {JITTER_MAX_RAW_PRECISION}) over {} frames",
            s.warm_frames
        ),
    );
}

fn walker(size: usize, start: usize, anomalous: bool) -> String {
    let y = 24 - size as i64 / 2;
    format!(
        "[actor]\nsize={size},{size}\nfrom=-{size},{y}\nto=96,{y}\nspeed=0.5\nintensity=220\n\
         start={start}\nrepeat=true\nanomalous={anomalous}\n"
    )
}

fn street(actors: String, frames: usize) -> String {
    format!("[scene]\nwidth=96\nheight=48\nframes={frames}\nbackground=40\n{actors}")
}

#[test]
fn criterion_07_group_versus_individual() {
    let mut config = Config::default();
    config.event.w = 4;
    config.theta = 0.3;
    let train = render(&street(walker(6, 0, false), 600), 71);
    let b = train_on(&train.frames, &config);
    // large actor: 12x12, four times the 6x6 training actor
    let mixed = render(&street(walker(6, 0, false) + &walker(12, 30, true), 400), 72);
    let large = score(&b, &config, &mixed);
    let lone = render(&street(walker(6, 0, true), 400), 73);
    let small = score(&b, &config, &lone);
    let iou = large.detect.iou();
    let covered = small.detect.recall();
    verdict(
        7,
        iou >= GROUP_MIN_IOU && covered < GROUP_MAX_SMALL_COVERAGE,
        format!(
            "large actor IoU {iou:.3} (>= {GROUP_MIN_IOU}), small actor coverage {:.2}% (< {}%)",
            100.0 * covered,
            100.0 * GROUP_MAX_SMALL_COVERAGE
        ),
    );
}

#[test]
fn criterion_08_throughput() {
    let scene = |frames: usize| {
        format!(
            "[scene]\nwidth=352\nheight=240\nframes={frames}\nbackground=60\n\
             [patch]\nrect=0,100,352,10\nintensity=180\n\
             [noise]\nkind=flicker\nrect=0,96,352,18\nprobability=0.2\namplitude=80\n\
             [noise]\nkind=shimmer\nrect=0,180,352,60\nprobability=0.1\namplitude=60\ngrain=2\n\
             [actor]\nsize=30,20\nfrom=-30,130\nto=352,130\nspeed=3\nintensity=230\nrepeat=true\n\
             [actor]\nshape=ellipse\nsize=12,24\nfrom=352,20\nto=-12,60\nspeed=1.5\nintensity=10\nrepeat=true\n"
        )
    };
    let config = Config::default();
    let train = render(&scene(150), 81);
    let b = train_on(&train.frames, &config);
    let test = render(&scene(300), 82);
    let mut d = Detector::new(b, &config).unwrap();
    let start = Instant::now();
    let mut flagged = 0;
    for f in &test.frames {
        flagged += d.push(f).unwrap().count();
    }
    let fps = test.frames.len() as f64 / start.elapsed().as_secs_f64();
    println!(
        "throughput: {fps:.1} frames/s on 352x240 ({} target {TARGET_FPS}, {flagged} flagged pixels)",
        if fps >= TARGET_FPS { "meets" } else { "below" }
    );
    verdict(8, fps >= FLOOR_FPS, format!("{fps:.1} frames/s (floor {FLOOR_FPS}, target {TARGET_FPS})"));
}

#[test]
fn criterion_09_memory_accounting() {
    let mut config = Config::default();
    config.event.w = 24;
    config.event.a1 = 0.0;
    config.event.a2 = 0.0;
    let text = "[scene]\nwidth=96\nheight=64\nframes=120\nbackground=30\n\
                [noise]\nkind=flicker\nrect=0,0,96,10\nprobability=0.3\namplitude=90\n\
                [actor]\nsize=10,10\nfrom=-10,30\nto=96,30\nspeed=2\nintensity=200\nrepeat=true\n";
    let video = render(text, 91);
    let b = train_on(&video.frames, &config);
    let pixels = b.geometry().pixels() as f64;

    let before = live_bytes();
    let mut d = Detector::new(b.clone(), &config).unwrap();
    for f in &video.frames {
        d.push(f).unwrap();
    }
    let live = (live_bytes() - before) as usize;
    let state = d.state_bytes();
    let scratch = d.scratch_bytes();
    drop(d);
    let leaked = live_bytes() - before;
    let per_pixel = state as f64 / pixels;
    verdict(
        9,
        live == state + scratch && leaked == 0 && per_pixel <= MAX_STATE_BYTES_PER_PIXEL,
        format!(
            "persistent state {per_pixel:.2} B/pixel (<= {MAX_STATE_BYTES_PER_PIXEL}), per-frame scratch {:.2} B/pixel, \
             counted heap {live} B = state {state} + scratch {scratch}",
            scratch as f64 / pixels
        ),
    );
}

#[test]
fn criterion_10_histogram_shapes() {
    let text = "[scene]\nwidth=64\nheight=48\nframes=600\nbackground=40\n\
                [actor]\nsize=10,10\nfrom=-10,30\nto=64,30\nspeed=2\nintensity=220\nrepeat=true\n";
    let video = render(text, 10);
    let config = Config::default();
    let idle = (10, 5);
    let traffic = (32, 35);
    let traces = trace_pixels(
        video.frames.iter().cloned().map(Ok),
        Geometry::new(64, 48),
        &config,
        &[idle, traffic],
    )
    .unwrap();
    let idle_low = report(&traces[0], &config, DEFAULT_BINS).unwrap().histogram.mass(0);
    let traffic_low = report(&traces[1], &config, DEFAULT_BINS).unwrap().histogram.mass(0);
    verdict(
        10,
        idle_low >= IDLE_MIN_LOW_MASS && traffic_low < TRAFFIC_MAX_LOW_MASS,
        format!(
            "lowest-bin mass: idle {idle_low:.3} (>= {IDLE_MIN_LOW_MASS}), traffic {traffic_low:.3} (< {TRAFFIC_MAX_LOW_MASS})"
        ),
    );
}
