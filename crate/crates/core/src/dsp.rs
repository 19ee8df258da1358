//! Reference transforms and filters.
//!
//! Everything here is evaluated directly from its defining sum. These are
//! the yardsticks the learned front-ends are compared against, so clarity
//! and exactness matter more than speed (inputs stay below a few thousand
//! samples).

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-domain samples with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl RealSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Size("signal must contain at least one sample".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Complex spectrum stored as separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }

    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r * r + i * i).sum()
    }
}

/// `e^{-2πi·num/den}` with the phase reduced modulo `den` first.
fn twiddle(num: usize, den: usize) -> (f64, f64) {
    let angle = -2.0 * PI * ((num % den) as f64) / den as f64;
    (angle.cos(), angle.sin())
}

/// `e^{-2πi·k/n}` for `k = 0..n`; index with the phase reduced modulo `n`.
fn twiddles(n: usize) -> Vec<(f64, f64)> {
    (0..n)
.map(|k| twiddle(k, n)).collect()
}

/// Direct `X[m] = Σ_n x[n] e^{-2πi nm/N}` with output length N.
pub fn dft(x: &[f64]) -> ComplexSpectrum {
    let n = x.len();
    let tw = twiddles(n);
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for m in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            let (c, s) = tw[(t * m) % n];
            sr += v * c;
            si += v * s;
        }
        re[m] = sr;
        im[m] = si;
    }
    ComplexSpectrum { re, im }
}

/// Magnitudes of bins `0..=N/2` of the DFT.
pub fn one_sided_magnitudes(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let half = n / 2;
    let tw = twiddles(n);
    (0..=half)
        .map(|m| {
            let (mut sr, mut si) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let (c, s) = tw[(t * m) % n];
                sr += v * c;
                si += v * s;
            }
            sr.hypot(si)
        })
        .collect()
}

/// Type-I DCT:
/// `X_k = ½(x_0 + (-1)^k x_{N-1}) + Σ_{n=1}^{N-2} x_n cos(π n k / (N-1))`.
pub fn dct1(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Size(format!("dct1 needs at least 2 samples, got {n}")));
    }
    let last = x[n - 1];
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| {
            let edge_sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let mut acc = 0.5 * (x[0] + edge_sign * last);
            for (i, &v) in x.iter().enumerate().take(n - 1).skip(1) {
                // Reduce n·k modulo 2(N-1) so the cosine argument stays small.
                let phase = ((i * k) % (2 * (n - 1))) as f64;
                acc += v * (PI * phase / denom).cos();
            }
            acc
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Hann,
    Hamming,
}

impl FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" | "boxcar" => Ok(WindowKind::Rectangular),
            "hann" | "hanning" => Ok(WindowKind::Hann),
            "hamming" => Ok(WindowKind::Hamming),
            other => Err(Error::Config(format!("unknown window kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub kind: WindowKind,
    pub values: Vec<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Symmetric window of length `n` (denominator `n - 1`).
pub fn make_window(kind: WindowKind, n: usize) -> Result<Window> {
    if n < 2 {
        return Err(Error::Size(format!("window length must be at least 2, got {n}")));
    }
    let denom = (n - 1) as f64;
    let values = (0..n)
        .map(|i| {
            let c = (2.0 * PI * i as f64 / denom).cos();
            match kind {
                WindowKind::Rectangular => 1.0,
                WindowKind::Hann => 0.5 * (1.0 - c),
                WindowKind::Hamming => 0.54 - 0.46 * c,
            }
        })
        .collect();
    Ok(Window { kind, values })
}

fn check_frames(x: &[f64], window: &Window, hop: usize) -> Result<usize> {
    if hop == 0 {
        return Err(Error::Config("hop must be positive".into()));
    }
    if window.len() > x.len() {
        return Err(Error::Size(format!(
            "window length {} exceeds signal length {}",
            window.len(),
            x.len()
        )));
    }
    Ok((x.len() - window.len()) / hop + 1)
}

/// Short-time transform: frame `t` is the DFT of `window ⊙ x[t·hop .. t·hop+N]`.
/// Trailing samples that do not fill a frame are dropped.
pub fn stft(x: &[f64], window: &Window, hop: usize) -> Result<Vec<ComplexSpectrum>> {
    let frames = check_frames(x, window, hop)?;
    let n = window.len();
    Ok((0..frames)
        .map(|t| {
            let start = t * hop;
            let patch: Vec<f64> = x[start..start + n]
                .iter()
                .zip(&window.values)
                .map(|(a, w)| a * w)
                .collect();
            dft(&patch)
        })
        .collect())
}

/// One STFT channel computed as a filter-bank output: modulate the signal
/// by `e^{-jω_k n}`, convolve with the time-reversed window, and sample at
/// the frame starts. The modulation is referenced to absolute time, so each
/// sample is rotated by `e^{jω_k·start}` to match the frame-local phase of
/// [`stft`]. Returns `(re, im)` per frame.
pub fn stft_via_filterbank(x: &[f64], window: &Window, hop: usize, bin: usize) -> Result<Vec<(f64, f64)>> {
    let frames = check_frames(x, window, hop)?;
    let n = window.len();
    if bin >= n {
        return Err(Error::Index { index: bin, len: n });
    }
    // x_k(t) = x(t) e^{-jω_k t}
    let modulated: Vec<(f64, f64)> = x
        .iter()
        .enumerate()
        .map(|(t, &v)| {
            let (c, s) = twiddle(t * bin, n);
            (v * c, v * s)
        })
        .collect();
    // FLIP(w)(j) = w(-j), nonzero for j in (-N, 0].
    let flipped = |j: isize| -> f64 {
        if j <= 0 && j > -(n as isize) {
            window.values[(-j) as usize]
        } else {
            0.0
        }
    };
    Ok((0..frames)
        .map(|t| {
            let m = (t * hop) as isize;
            // (x_k * FLIP(w))(m) = Σ_t x_k(t) FLIP(w)(m - t)
            let (mut re, mut im) = (0.0, 0.0);
            for (time, &(mr, mi)) in modulated.iter().enumerate() {
                let w = flipped(m - time as isize);
                if w != 0.0 {
                    re += mr * w;
                    im += mi * w;
                }
            }
            let (c, s) = twiddle(t * hop * bin, n);
            // multiply by e^{+jω_k m} = conj(twiddle)
            (re * c + im * s, im * c - re * s)
        })
        .collect())
}

/// Feed-forward comb `y[n] = x[n] + α x[n-K]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombParams {
    pub alpha: f64,
    pub delay: usize,
}

impl CombParams {
    pub fn new(alpha: f64, delay: usize) -> Result<Self> {
        if delay == 0 {
            return Err(Error::Config("comb delay must be at least one sample".into()));
        }
        Ok(Self { alpha, delay })
    }

    /// Time-domain application with zero initial state.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(n, &v)| {
                let delayed = n.checked_sub(self.delay).map_or(0.0, |i| x[i]);
                v + self.alpha * delayed
            })
            .collect()
    }
}

/// `|1 + α e^{-jωK}|` at `nbins` evenly spaced ω covering `[0, π]`.
pub fn comb_magnitude_response(p: CombParams, nbins: usize) -> Result<Vec<f64>> {
    if nbins < 2 {
        return Err(Error::Size(format!("need at least 2 bins, got {nbins}")));
    }
    Ok((0..nbins)
        .map(|i| {
            let omega = PI * i as f64 / (nbins - 1) as f64;
            let phase = omega * p.delay as f64;
            let re = 1.0 + p.alpha * phase.cos();
            let im = -p.alpha * phase.sin();
            re.hypot(im)
        })
        .collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn peak_bin(mags: &[f64]) -> Result<usize> {
    if mags.is_empty() {
        return Err(Error::Size("peak_bin on empty input".into()));
    }
    let mut best = 0;
    for (i, &v) in mags.iter().enumerate().skip(1) {
        if v > mags[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Indices that are strict local maxima (first of any plateau), endpoints
/// included.
pub fn local_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left_ok = i == 0 || values[i] > values[i - 1];
            let right_ok = i + 1 == n || values[i] >= values[i + 1];
            left_ok && right_ok && n > 1
        })
        .collect()
}
