//! Two-state (idle/busy) Markov model of a pixel's label sequence, the
//! exponential descriptor likelihood attached to busy frames, and empirical
//! distributions of event values.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Initial busy probability `pi`, busy self-transition `q`, idle
/// self-transition `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub pi: f64,
    pub q: f64,
    pub p: f64,
}

impl ChainParams {
    pub fn new(pi: f64, q: f64, p: f64) -> Result<Self> {
        for (name, v) in [("pi", pi), ("q", q), ("p", p)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::ParameterOutOfRange {
                    name,
                    value: v,
                    expected: "probability in [0, 1]",
                });
            }
        }
        Ok(ChainParams { pi, q, p })
    }
}

/// Alternating run lengths of a binary sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLengthEncoding {
    pub starts_busy: bool,
    /// Run lengths in order, alternating state starting with `starts_busy`.
    pub runs: Vec<usize>,
    /// busy → idle flips
    pub m: usize,
    /// idle → busy flips
    pub n: usize,
}

impl RunLengthEncoding {
    pub fn len(&self) -> usize {
        self.runs.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.runs.is_empty()
    }

    fn runs_of(&self, busy: bool) -> impl Iterator<Item = usize> + '_ {
        let skip = usize::from(self.starts_busy != busy);
        self.runs.iter().copied().skip(skip).step_by(2)
    }

    /// β_1, β_2, ...
    pub fn busy_runs(&self) -> Vec<usize> {
        self.runs_of(true).collect()
    }

    /// ι_1, ι_2, ...
    pub fn idle_runs(&self) -> Vec<usize> {
        self.runs_of(false).collect()
    }

    pub fn busy_time(&self) -> usize {
        self.runs_of(true).sum()
    }

    pub fn idle_time(&self) -> usize {
        self.runs_of(false).sum()
    }
}

pub fn encode_runs(labels: &[bool]) -> Result<RunLengthEncoding> {
    let (&first, _) = labels.split_first().ok_or(Error::NoSamples)?;
    let mut runs = Vec::new();
    let (mut m, mut n) = (0, 0);
    let mut current = first;
    let mut len = 0;
    for &l in labels {
        if l == current {
            len += 1;
        } else {
            runs.push(len);
            if current {
                m += 1;
            } else {
                n += 1;
            }
            current = l;
            len = 1;
        }
    }
    runs.push(len);
    Ok(RunLengthEncoding {
        starts_busy: first,
        runs,
        m,
        n,
    })
}

/// How run lengths enter the sequence probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunConvention {
    /// First sample drawn from the initial distribution, every later sample
    /// from one transition: a run of length r contributes r − 1 self
    /// transitions. Probabilities of all 2^w sequences sum to one.
    #[default]
    Chain,
    /// Every run of length r contributes its self-transition probability to
    /// the power r (the product written as π q^β1 (1−q) p^ι1 ...). Does not
    /// normalize over sequences; kept for comparison.
    PerRun,
}

/// `k · ln(x)` with `0 · ln 0 = 0`.
fn xlogy(k: f64, x: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * x.ln()
    }
}

/// −log P of the label sequence under the two-state chain.
///
/// Returns `+inf` when the sequence needs a factor that is zero (e.g. a
/// busy → idle flip with `q = 1`).
pub fn sequence_neg_log_prob(runs: &RunLengthEncoding, params: &ChainParams) -> f64 {
    sequence_neg_log_prob_with(runs, params, RunConvention::Chain)
}

pub fn sequence_neg_log_prob_with(
    runs: &RunLengthEncoding,
    params: &ChainParams,
    convention: RunConvention,
) -> f64 {
    if runs.is_empty() {
        return 0.0;
    }
    let initial = if runs.starts_busy { params.pi } else { 1.0 - params.pi };
    let busy_runs = runs.runs_of(true).count();
    let idle_runs = runs.runs_of(false).count();
    let (stay_busy, stay_idle) = match convention {
        RunConvention::Chain => (runs.busy_time() - busy_runs, runs.idle_time() - idle_runs),
        RunConvention::PerRun => (runs.busy_time(), runs.idle_time()),
    };
    let log_p = xlogy(1.0, initial)
        + xlogy(stay_busy as f64, params.q)
        + xlogy(stay_idle as f64, params.p)
        + xlogy(runs.m as f64, 1.0 - params.q)
        + xlogy(runs.n as f64, 1.0 - params.p);
    if log_p.is_nan() {
        f64::INFINITY
    } else {
        -log_p
    }
}

/// ln Z1 with Z1 = ∫₀¹ e^{−A3 f} df, the normalizer of the busy-frame
/// descriptor density.
pub fn descriptor_log_partition(a3: f64) -> f64 {
    if a3.abs() < 1e-8 {
        // series of ln((1 - e^{-a}) / a) around 0
        -a3 / 2.0 + a3 * a3 / 24.0
    } else {
        (-(-a3).exp_m1() / a3).ln()
    }
}

/// Terms of the joint −log likelihood of a label/descriptor sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointNegLogLikelihood {
    /// −log P(labels)
    pub labels: f64,
    /// A3 · Σ f·l
    pub descriptors: f64,
    /// (Σ l) · log Z1; identical for every sequence with the same busy time
    pub partition: f64,
}

impl JointNegLogLikelihood {
    pub fn total(&self) -> f64 {
        self.labels + self.descriptors + self.partition
    }

    /// Everything except the partition constant.
    pub fn statistic(&self) -> f64 {
        self.labels + self.descriptors
    }
}

/// Label likelihood plus the exponential descriptor model on busy frames
/// (point mass at zero on idle frames).
///
/// A nonzero descriptor on an idle frame has probability zero and is reported
/// as [`Error::DescriptorOnIdle`].
pub fn joint_neg_log_likelihood(
    labels: &[bool],
    descriptors: &[f64],
    params: &ChainParams,
    a3: f64,
) -> Result<JointNegLogLikelihood> {
    if labels.len() != descriptors.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: descriptors.len(),
        });
    }
    if let Some((index, &value)) = descriptors
        .iter()
        .enumerate()
        .find(|&(i, &f)| !labels[i] && f != 0.0)
    {
        return Err(Error::DescriptorOnIdle { index, value });
    }
    let runs = encode_runs(labels)?;
    let mass: f64 = labels
        .iter()
        .zip(descriptors)
        .filter(|(&l, _)| l)
        .map(|(_, &f)| f)
        .sum();
    let busy = runs.busy_time() as f64;
    Ok(JointNegLogLikelihood {
        labels: sequence_neg_log_prob(&runs, params),
        descriptors: a3 * mass,
        partition: busy * descriptor_log_partition(a3),
    })
}

/// Maximum-likelihood chain parameters with add-one smoothing.
///
/// Each sequence contributes its first sample to the estimate of `pi` and its
/// consecutive pairs to the transition counts.
pub fn fit_chain<'a, I>(sequences: I) -> Result<ChainParams>
where
    I: IntoIterator<Item = &'a [bool]>,
{
    let (mut starts, mut busy_starts) = (0u64, 0u64);
    let (mut bb, mut b_any, mut ii, mut i_any) = (0u64, 0u64, 0u64, 0u64);
    for seq in sequences {
        let Some(&first) = seq.first() else { continue };
        starts += 1;
        busy_starts += u64::from(first);
        for pair in seq.windows(2) {
            if pair[0] {
                b_any += 1;
                bb += u64::from(pair[1]);
            } else {
                i_any += 1;
                ii += u64::from(!pair[1]);
            }
        }
    }
    if starts == 0 || b_any + i_any == 0 {
        return Err(Error::NoSamples);
    }
    let smooth = |k: u64, n: u64| (k as f64 + 1.0) / (n as f64 + 2.0);
    Ok(ChainParams {
        pi: smooth(busy_starts, starts),
        q: smooth(bb, b_any),
        p: smooth(ii, i_any),
    })
}

/// Fits one pixel's label history cut into consecutive windows of `w` frames.
pub fn fit_chain_windows(history: &[bool], w: usize) -> Result<ChainParams> {
    if w < 2 {
        return Err(Error::ParameterOutOfRange {
            name: "w",
            value: w as f64,
            expected: "w >= 2 for transition counts",
        });
    }
    fit_chain(history.chunks(w).filter(|c| c.len() >= 2))
}

/// Fraction of samples with value ≥ `eta`.
pub fn empirical_cdf(samples: &[f64], eta: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    let above = samples.iter().filter(|&&s| s >= eta).count();
    Ok(above as f64 / samples.len() as f64)
}

/// Fixed-width histogram of event values.
#[derive(Debug, Clone, PartialEq)]
pub struct EventHistogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl EventHistogram {
    /// Bins `[lo, hi)` split evenly; values outside land in the end bins.
    pub fn with_range(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::ParameterOutOfRange {
                name: "histogram range",
                value: hi - lo,
                expected: "bins >= 1 and hi > lo",
            });
        }
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &s in samples {
            let k = ((s - lo) / width).floor();
            let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
            counts[k] += 1;
        }
        Ok(EventHistogram {
            lo,
            hi,
            counts,
            total: samples.len() as u64,
        })
    }

    /// Range taken from the samples themselves.
    pub fn from_samples(samples: &[f64], bins: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::NoSamples);
        }
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi <= lo {
            hi = lo + 1.0;
        } else {
            // keep the maximum inside the last bin
            hi += (hi - lo) * 1e-9;
        }
        Self::with_range(samples, lo, hi, bins)
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.lo + k as f64 * w, self.lo + (k + 1) as f64 * w)
    }

    pub fn mass(&self, k: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[k] as f64 / self.total as f64
        }
    }

    /// `bin_lo,bin_hi,count` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let (lo, hi) = self.bin_edges(k);
            writeln!(out, "{lo},{hi},{c}").expect("write to String");
        }
        out
    }
}
