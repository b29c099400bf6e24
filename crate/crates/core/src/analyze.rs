//! Per-pixel event distributions and fitted label chains.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::event::{DescriptorHistory, EventField};
use crate::frame::{Frame, Geometry};
use crate::markov::{fit_chain_windows, ChainParams, EventHistogram};
use crate::pipeline::Pipeline;

pub const DEFAULT_BINS: usize = 20;

/// Labels of every frame and events of every warm frame at one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelTrace {
    pub x: usize,
    pub y: usize,
    pub labels: Vec<bool>,
    pub events: Vec<f64>,
}

pub fn trace_pixels<I>(
    frames: I,
    geometry: Geometry,
    config: &Config,
    pixels: &[(usize, usize)],
) -> Result<Vec<PixelTrace>>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    for &(x, y) in pixels {
        if x >= geometry.width || y >= geometry.height {
            return Err(Error::PixelOutOfBounds {
                x,
                y,
                width: geometry.width,
                height: geometry.height,
            });
        }
    }
    let mut traces: Vec<PixelTrace> = pixels
        .iter()
        .map(|&(x, y)| PixelTrace {
            x,
            y,
            labels: Vec::new(),
            events: Vec::new(),
        })
        .collect();
    let mut pipeline = Pipeline::new(geometry, config, DescriptorHistory::LabelsOnly)?;
    let mut events = EventField::zeros(geometry, config.event);
    for frame in frames {
        pipeline.push(&frame?)?;
        let warm = pipeline.is_warm();
        if warm {
            pipeline.statistic_into(&mut events)?;
        }
        for tr in &mut traces {
            let i = tr.y * geometry.width + tr.x;
            tr.labels.push(pipeline.labels().bits[i]);
            if warm {
                tr.events.push(f64::from(events.values[i]));
            }
        }
    }
    Ok(traces)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelReport {
    pub x: usize,
    pub y: usize,
    /// Over `[0, upper bound of e]`.
    pub histogram: EventHistogram,
    /// Fitted on the label history cut into windows of `w` frames.
    pub chain: ChainParams,
}

pub fn report(trace: &PixelTrace, config: &Config, bins: usize) -> Result<PixelReport> {
    let ev = &config.event;
    let lower = ev.a2.min(0.0) * (ev.w.saturating_sub(1)) as f64 / ev.w as f64;
    let histogram = EventHistogram::with_range(&trace.events, lower, ev.upper_bound(), bins)?;
    let chain = fit_chain_windows(&trace.labels, ev.w.max(2))?;
    Ok(PixelReport {
        x: trace.x,
        y: trace.y,
        histogram,
        chain,
    })
}

/// Fitted chains as a CSV table.
pub fn chain_table(reports: &[PixelReport]) -> String {
    let mut out = String::from("x,y,pi,q,p\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.x, r.y, r.chain.pi, r.chain.q, r.chain.p
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_bounds_pixel() {
        let frames = (0..3).map(|t| Ok(Frame::filled(4, 4, t, 0)));
        let err = trace_pixels(frames, Geometry::new(4, 4), &Config::default(), &[(4, 0)]).unwrap_err();
        assert!(matches!(err, Error::PixelOutOfBounds { x: 4, .. }));
    }

    #[test]
    fn idle_pixel_peaks_at_zero() {
        let mut config = Config::default();
        config.event.w = 5;
        let frames = (0..30).map(|t| Ok(Frame::filled(4, 4, t, 90)));
        let traces = trace_pixels(frames, Geometry::new(4, 4), &config, &[(1, 2)]).unwrap();
        assert_eq!(traces[0].labels.len(), 30);
        assert_eq!(traces[0].events.len(), 26);
        let r = report(&traces[0], &config, DEFAULT_BINS).unwrap();
        assert_eq!(r.histogram.mass(0), 1.0);
        assert!(r.chain.p > 0.9);
        assert!(chain_table(&[r]).starts_with("x,y,pi,q,p\n1,2,"));
    }
}
