//! Motion labels from thresholded differencing against a running-average
//! background.

use crate::error::{Error, Result};
use crate::frame::{Frame, Geometry};
use crate::pnm;

/// Binary moving/static labels for one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    pub width: usize,
    pub height: usize,
    pub t: u64,
    pub bits: Vec<bool>,
}

impl LabelField {
    pub fn new(width: usize, height: usize, t: u64, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::LengthMismatch {
                left: bits.len(),
                right: width * height,
            });
        }
        Ok(LabelField {
            width,
            height,
            t,
            bits,
        })
    }

    pub fn empty(geometry: Geometry, t: u64) -> Self {
        LabelField {
            width: geometry.width,
            height: geometry.height,
            t,
            bits: vec![false; geometry.pixels()],
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_pbm(&self) -> Vec<u8> {
        pnm::encode_pbm(self.width, self.height, &self.bits)
    }
}

/// Running-average background `b` with update rate `rho` and threshold `tau`.
#[derive(Debug, Clone)]
pub struct BackgroundModel {
    geometry: Geometry,
    background: Vec<f32>,
    rho: f32,
    tau: f32,
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "rho",
            value: rho,
            expected: "0 < rho < 1",
        })
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau >= 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange {
            name: "tau",
            value: tau,
            expected: "finite tau >= 0",
        })
    }
}

impl BackgroundModel {
    /// Seeds the background with the first frame.
    pub fn init(first_frame: &Frame, rho: f64, tau: f64) -> Result<Self> {
        check_rho(rho)?;
        check_tau(tau)?;
        Ok(BackgroundModel {
            geometry: first_frame.geometry(),
            background: first_frame.data.iter().map(|&v| f32::from(v)).collect(),
            rho: rho as f32,
            tau: tau as f32,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn background(&self) -> &[f32] {
        &self.background
    }

    /// Labels `frame` against the current background, then blends the frame in.
    pub fn step(&mut self, frame: &Frame) -> Result<LabelField> {
        let mut labels = LabelField::empty(self.geometry, frame.t);
        self.step_into(frame, &mut labels)?;
        Ok(labels)
    }

    pub fn step_into(&mut self, frame: &Frame, labels: &mut LabelField) -> Result<()> {
        self.geometry.ensure_same(frame.geometry())?;
        self.geometry.ensure_same(labels.geometry())?;
        labels.t = frame.t;
        let (rho, tau) = (self.rho, self.tau);
        for ((b, &i), l) in self
            .background
            .iter_mut()
            .zip(&frame.data)
            .zip(labels.bits.iter_mut())
        {
            let i = f32::from(i);
            *l = (i - *b).abs() > tau;
            *b = (1.0 - rho) * *b + rho * i;
        }
        Ok(())
    }

    pub(crate) fn heap_bytes(&self) -> usize {
        self.background.capacity() * std::mem::size_of::<f32>()
    }
}
