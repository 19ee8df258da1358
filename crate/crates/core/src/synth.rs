//! Deterministic synthetic audio and the cent-scale label grid.
//!
//! Every example is generated from its own RNG stream derived from
//! `(seed, index)`, so datasets are reproducible bit for bit and can be
//! generated in any order.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::RealSignal;
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
/// 40 ms at 16 kHz.
pub const SNIPPET_LEN: usize = 640;
/// Peak amplitude every generated waveform is normalised to.
pub const PEAK: f64 = 0.9;

pub const DATASET_MAGIC: &[u8; 4] = b"ADFT";
pub const DATASET_VERSION: u32 = 1;

/// Geometric pitch grid plus one trailing noise class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub f_min: f64,
    pub f_max: f64,
    pub n_pitch_classes: usize,
}

impl Default for LabelSpec {
    fn default() -> Self {
        Self::full()
    }
}

impl LabelSpec {
    /// 78 classes over 40–540 Hz.
    pub fn full() -> Self {
        Self {
            f_min: 40.0,
            f_max: 540.0,
            n_pitch_classes: 78,
        }
    }

    /// 21 classes over 80–400 Hz, used for desk-scale experiments.
    pub fn reduced() -> Self {
        Self {
            f_min: 80.0,
            f_max: 400.0,
            n_pitch_classes: 21,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_max > self.f_min) || self.n_pitch_classes < 2 {
            return Err(Error::Config(format!("invalid label grid {self:?}")));
        }
        Ok(())
    }

    pub fn noise_class(&self) -> usize {
        self.n_pitch_classes
    }

    pub fn total_classes(&self) -> usize {
        self.n_pitch_classes + 1
    }

    /// Width of one class in cents.
    pub fn cents_per_class(&self) -> f64 {
        1200.0 * (self.f_max / self.f_min).log2() / (self.n_pitch_classes - 1) as f64
    }

    /// Nearest class centre, rounding halves upward.
    pub fn f0_to_class(&self, f0: f64) -> Result<usize> {
        if !(f0 >= self.f_min && f0 <= self.f_max) {
            return Err(Error::Range {
                value: f0,
                min: self.f_min,
                max: self.f_max,
            });
        }
        let steps = (self.n_pitch_classes - 1) as f64;
        let position = steps * (f0 / self.f_min).ln() / (self.f_max / self.f_min).ln();
        // The small slack keeps exact half-way points from rounding down
        // after the logarithms.
        let class = (position + 0.5 + 1e-9).floor() as usize;
        Ok(class.min(self.n_pitch_classes - 1))
    }

    pub fn class_to_f0(&self, class: usize) -> Result<f64> {
        if class == self.noise_class() {
            return Err(Error::Contract("the noise class has no frequency".into()));
        }
        if class > self.noise_class() {
            return Err(Error::Index {
                index: class,
                len: self.total_classes(),
            });
        }
        let steps = (self.n_pitch_classes - 1) as f64;
        Ok(self.f_min * (self.f_max / self.f_min).powf(class as f64 / steps))
    }
}

/// Mixes a seed and an index into an independent stream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(seed ^ splitmix(index))
}

fn normalize_peak(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let gain = PEAK / peak;
        samples.iter_mut().for_each(|v| *v *= gain);
    }
}

/// Highest harmonic number strictly below Nyquist.
pub fn max_harmonic(f0: f64, sample_rate: u32) -> usize {
    let nyquist = sample_rate as f64 / 2.0;
    let mut h = (nyquist / f0).floor() as usize;
    while h > 0 && h as f64 * f0 >= nyquist {
        h -= 1;
    }
    h
}

fn harmonic_sum(f0: f64, amplitudes: &[(usize, f64)], phases: &[f64], len: usize, sr: u32) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (&(h, amp), &phase) in amplitudes.iter().zip(phases) {
        let step = 2.0 * PI * h as f64 * f0 / sr as f64;
        for (n, v) in out.iter_mut().enumerate() {
            *v += amp * (step * n as f64 + phase).sin();
        }
    }
    out
}

/// `Σ_h h^{-decay} sin(2π h f0 n / sr + φ_h)` with phases drawn from
/// `phase_seed`, peak-normalised to 0.9. Harmonics at or above Nyquist
/// are dropped.
pub fn gen_harmonic(
    f0: f64,
    n_harmonics: usize,
    decay: f64,
    phase_seed: u64,
    len: usize,
    sample_rate: u32,
) -> Result<RealSignal> {
    if !(f0 > 0.0) {
        return Err(Error::Range {
            value: f0,
            min: 0.0,
            max: f64::INFINITY,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(phase_seed);
    let mut samples = harmonic_complex(f0, n_harmonics, decay, len, sample_rate, &mut rng);
    normalize_peak(&mut samples);
    RealSignal::new(samples, sample_rate)
}

fn harmonic_complex(f0: f64, n_harmonics: usize, decay: f64, len: usize, sr: u32, rng: &mut impl Rng) -> Vec<f64> {
    let count = n_harmonics.min(max_harmonic(f0, sr));
    let amps: Vec<(usize, f64)> = (1..=count).map(|h| (h, (h as f64).powf(-decay))).collect();
    let phases: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    harmonic_sum(f0, &amps, &phases, len, sr)
}

/// Waveform families of the timbre task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Sine,
    Square,
    Sawtooth,
    Triangle,
    AmTone,
    NoiseBurst,
    Chirp,
    HarmonicDecay,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Sine,
        Family::Square,
        Family::Sawtooth,
        Family::Triangle,
        Family::AmTone,
        Family::NoiseBurst,
        Family::Chirp,
        Family::HarmonicDecay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Sine => "sine",
            Family::Square => "square",
            Family::Sawtooth => "sawtooth",
            Family::Triangle => "triangle",
            Family::AmTone => "am_tone",
            Family::NoiseBurst => "noise_burst",
            Family::Chirp => "chirp",
            Family::HarmonicDecay => "harmonic_decay",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown waveform family {s:?}")))
    }
}

/// Band-limited periodic waveform: odd/all harmonics with the given
/// amplitude law and a shared phase offset so the shape is preserved.
fn additive(f0: f64, phase: f64, len: usize, sr: u32, odd_only: bool, amp: impl Fn(usize) -> f64) -> Vec<f64> {
    let count = max_harmonic(f0, sr);
    let (amps, phases): (Vec<(usize, f64)>, Vec<f64>) = (1..=count)
        .filter(|h| !odd_only || h % 2 == 1)
        .map(|h| ((h, amp(h)), h as f64 * phase))
        .unzip();
    harmonic_sum(f0, &amps, &phases, len, sr)
}

fn white_noise(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn family_waveform(family: Family, f0: f64, cfg: &DatasetConfig, rng: &mut impl Rng) -> Vec<f64> {
    let (len, sr) = (cfg.length, cfg.sample_rate);
    let t = |n: usize| n as f64 / sr as f64;
    let phase = rng.random_range(0.0..2.0 * PI);
    match family {
        Family::Sine => additive(f0, phase, len, sr, false, |h| if h == 1 { 1.0 } else { 0.0 }),
        Family::Square => additive(f0, phase, len, sr, true, |h| 1.0 / h as f64),
        Family::Sawtooth => additive(f0, phase, len, sr, false, |h| {
            let sign = if h % 2 == 1 { 1.0 } else { -1.0 };
            sign / h as f64
        }),
        Family::Triangle => additive(f0, phase, len, sr, true, |h| {
            let sign = if (h / 2) % 2 == 0 { 1.0 } else { -1.0 };
            sign / (h * h) as f64
        }),
        Family::AmTone => {
            let depth = rng.random_range(0.5..1.0);
            let rate = rng.random_range(30.0..120.0);
            let mod_phase = rng.random_range(0.0..2.0 * PI);
            (0..len)
                .map(|n| {
                    let env = 1.0 + depth * (2.0 * PI * rate * t(n) + mod_phase).sin();
                    env * (2.0 * PI * f0 * t(n) + phase).sin()
                })
                .collect()
        }
        Family::NoiseBurst => {
            let onset = rng.random_range(0..len / 2);
            let tau = rng.random_range(0.002..0.010);
            let noise = white_noise(len, rng);
            noise
                .into_iter()
                .enumerate()
                .map(|(n, v)| if n < onset { 0.0 } else { v * (-(t(n - onset)) / tau).exp() })
                .collect()
        }
        Family::Chirp => {
            let ratio = rng.random_range(2.0..4.0);
            let upward = rng.random_bool(0.5);
            let (start, end) = if upward { (f0, f0 * ratio) } else { (f0 * ratio, f0) };
            let end = end.min(0.45 * sr as f64);
            let duration = len as f64 / sr as f64;
            (0..len)
                .map(|n| {
                    let tn = t(n);
                    let inst = start * tn + (end - start) * tn * tn / (2.0 * duration);
                    (2.0 * PI * inst + phase).sin()
                })
                .collect()
        }
        Family::HarmonicDecay => {
            let count = rng.random_range(cfg.harmonics[0]..=cfg.harmonics[1]);
            let tau = rng.random_range(0.005..0.020);
            harmonic_complex(f0, count, cfg.decay, len, sr, rng)
                .into_iter()
                .enumerate()
                .map(|(n, v)| v * (-t(n) / tau).exp())
                .collect()
        }
    }
}

/// Adds white noise at a signal-to-noise ratio in dB.
fn add_noise(samples: &mut [f64], snr_db: f64, rng: &mut impl Rng) {
    let power = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    if power == 0.0 {
        return;
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    for v in samples.iter_mut() {
        *v += sigma * rng.sample::<f64, _>(StandardNormal);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Pitch,
    Timbre,
    Mixture,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pitch" => Ok(Task::Pitch),
            "timbre" => Ok(Task::Timbre),
            "mixture" => Ok(Task::Mixture),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

/// Generator settings for one dataset split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub task: Task,
    pub n_examples: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub length: usize,
    /// Pitch grid for the pitch and mixture tasks.
    pub labels: LabelSpec,
    /// Inclusive range of harmonic counts for harmonic complexes.
    pub harmonics: [usize; 2],
    /// Amplitude of harmonic h is `h^-decay`.
    pub decay: f64,
    /// Share of white-noise examples (pitch task only).
    pub noise_fraction: f64,
    /// Timbre classes, in label order.
    pub families: Vec<String>,
    /// Fundamental range of timbre examples, Hz.
    pub timbre_f0: [f64; 2],
    /// Additive white-noise SNR range, dB.
    pub snr_db: [f64; 2],
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            task: Task::Pitch,
            n_examples: 1000,
            seed: 0,
            sample_rate: SAMPLE_RATE,
            length: SNIPPET_LEN,
            labels: LabelSpec::full(),
            harmonics: [1, 10],
            decay: 1.0,
            noise_fraction: 0.1,
            families: Family::ALL.iter().map(|f| f.name().to_string()).collect(),
            timbre_f0: [100.0, 1000.0],
            snr_db: [10.0, 40.0],
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_examples == 0 {
            return Err(Error::Config("n_examples must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::Config(format!(
                "noise_fraction {} outside [0, 1]",
                self.noise_fraction
            )));
        }
        if self.length == 0 || self.sample_rate == 0 {
            return Err(Error::Config("length and sample_rate must be positive".into()));
        }
        if self.harmonics[0] == 0 || self.harmonics[0] > self.harmonics[1] {
            return Err(Error::Config(format!("bad harmonic range {:?}", self.harmonics)));
        }
        if !(self.snr_db[0] <= self.snr_db[1]) {
            return Err(Error::Config(format!("bad SNR range {:?}", self.snr_db)));
        }
        if !(self.timbre_f0[0] > 0.0 && self.timbre_f0[0] <= self.timbre_f0[1]) {
            return Err(Error::Config(format!("bad timbre f0 range {:?}", self.timbre_f0)));
        }
        self.labels.validate()?;
        if self.task == Task::Timbre {
            if self.families.is_empty() {
                return Err(Error::Config("timbre task needs at least one family".into()));
            }
            self.family_list()?;
        }
        Ok(())
    }

    fn family_list(&self) -> Result<Vec<Family>> {
        self.families.iter().map(|s| s.parse()).collect()
    }

    pub fn label_arity(&self) -> usize {
        match self.task {
            Task::Pitch | Task::Mixture => self.labels.total_classes(),
            Task::Timbre => self.families.len(),
        }
    }

    pub fn num_noise_examples(&self) -> usize {
        match self.task {
            Task::Pitch => (self.n_examples as f64 * self.noise_fraction).round() as usize,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub waveform: Vec<f64>,
    pub label: usize,
    /// Sub-domain of the mixture task (0 = harmonic complex, 1 = square/saw);
    /// 0 elsewhere.
    pub domain: u8,
    /// Ground-truth fundamental; `None` for noise and after loading from disk.
    pub f0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    pub label_arity: usize,
    pub sample_rate: u32,
    pub version: u32,
}

fn rounded_to_f32(mut samples: Vec<f64>) -> Vec<f64> {
    // Waveforms are stored as f32 on disk; keeping them f32-exact in memory
    // makes a save/load cycle lossless.
    samples.iter_mut().for_each(|v| *v = *v as f32 as f64);
    samples
}

fn log_uniform(lo: f64, hi: f64, rng: &mut impl Rng) -> f64 {
    if hi <= lo {
        return lo;
    }
    lo * (hi / lo).powf(rng.random_range(0.0..1.0))
}

fn pitched_example(cfg: &DatasetConfig, rng: &mut impl Rng, domain: u8) -> Result<Example> {
    let spec = cfg.labels;
    let f0 = log_uniform(spec.f_min, spec.f_max, rng).clamp(spec.f_min, spec.f_max);
    let mut samples = if domain == 0 {
        let count = rng.random_range(cfg.harmonics[0]..=cfg.harmonics[1]);
        harmonic_complex(f0, count, cfg.decay, cfg.length, cfg.sample_rate, rng)
    } else {
        let family = if rng.random_bool(0.5) {
            Family::Square
        } else {
            Family::Sawtooth
        };
        family_waveform(family, f0, cfg, rng)
    };
    let snr = rng.random_range(cfg.snr_db[0]..=cfg.snr_db[1]);
    add_noise(&mut samples, snr, rng);
    normalize_peak(&mut samples);
    Ok(Example {
        waveform: rounded_to_f32(samples),
        label: spec.f0_to_class(f0)?,
        domain,
        f0: Some(f0),
    })
}

fn noise_example(cfg: &DatasetConfig, rng: &mut impl Rng) -> Example {
    let mut samples = white_noise(cfg.length, rng);
    normalize_peak(&mut samples);
    Example {
        waveform: rounded_to_f32(samples),
        label: cfg.labels.noise_class(),
        domain: 0,
        f0: None,
    }
}

fn timbre_example(cfg: &DatasetConfig, family: Family, label: usize, rng: &mut impl Rng) -> Example {
    let f0 = log_uniform(cfg.timbre_f0[0], cfg.timbre_f0[1], rng);
    let mut samples = family_waveform(family, f0, cfg, rng);
    let snr = rng.random_range(cfg.snr_db[0]..=cfg.snr_db[1]);
    add_noise(&mut samples, snr, rng);
    normalize_peak(&mut samples);
    Example {
        waveform: rounded_to_f32(samples),
        label,
        domain: 0,
        f0: Some(f0),
    }
}

/// Generates a full dataset split from its configuration.
pub fn gen_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_examples;
    // Seeded slot assignment: slot < n_noise is noise (pitch), slot % k is
    // the class (timbre) or domain (mixture). Counts are exact by construction.
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX)));
    let families = if cfg.task == Task::Timbre {
        cfg.family_list()?
    } else {
        Vec::new()
    };
    let n_noise = cfg.num_noise_examples();
    let examples = slots
        .iter()
        .enumerate()
        .map(|(i, &slot)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
            match cfg.task {
                Task::Pitch if slot < n_noise => Ok(noise_example(cfg, &mut rng)),
                Task::Pitch => pitched_example(cfg, &mut rng, 0),
                Task::Mixture => pitched_example(cfg, &mut rng, (slot % 2) as u8),
                Task::Timbre => {
                    let class = slot % families.len();
                    Ok(timbre_example(cfg, families[class], class, &mut rng))
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        examples,
        label_arity: cfg.label_arity(),
        sample_rate: cfg.sample_rate,
        version: DATASET_VERSION,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn waveform_len(&self) -> usize {
        self.examples.first().map_or(0, |e| e.waveform.len())
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.waveform_len();
        for (i, e) in self.examples.iter().enumerate() {
            if e.waveform.len() != len {
                return Err(Error::Size(format!(
                    "example {i} has {} samples, expected {len}",
                    e.waveform.len()
                )));
            }
            if e.label >= self.label_arity {
                return Err(Error::Index {
                    index: e.label,
                    len: self.label_arity,
                });
            }
        }
        Ok(())
    }

    /// Binary encoding: header then `label u16, domain u8, pad u8,
    /// waveform f32…` per example, all little-endian.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        if self.label_arity > u16::MAX as usize + 1 {
            return Err(Error::Config(format!("label arity {} exceeds u16", self.label_arity)));
        }
        let len = self.waveform_len();
        let mut out = Vec::with_capacity(24 + self.len() * (4 + 4 * len));
        out.extend_from_slice(DATASET_MAGIC);
        for v in [
            self.version,
            self.sample_rate,
            self.len() as u32,
            len as u32,
            self.label_arity as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for e in &self.examples {
            out.extend_from_slice(&(e.label as u16).to_le_bytes());
            out.push(e.domain);
            out.push(0);
            for &s in &e.waveform {
                out.extend_from_slice(&(s as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut cur, &mut magic, "dataset magic")?;
        if &magic != DATASET_MAGIC {
            return Err(Error::format(
                format!("magic {:?}", String::from_utf8_lossy(DATASET_MAGIC)),
                format!("{:?}", String::from_utf8_lossy(&magic)),
            ));
        }
        let version = read_u32(&mut cur)?;
        if version != DATASET_VERSION {
            return Err(Error::format(
                format!("dataset version {DATASET_VERSION}"),
                format!("version {version}"),
            ));
        }
        let sample_rate = read_u32(&mut cur)?;
        let count = read_u32(&mut cur)? as usize;
        let len = read_u32(&mut cur)? as usize;
        let label_arity = read_u32(&mut cur)? as usize;
        let record = 4 + 4 * len;
        if cur.len() != count * record {
            return Err(Error::format(
                format!("{} payload bytes", count * record),
                format!("{} bytes", cur.len()),
            ));
        }
        let examples = cur
            .chunks_exact(record)
            .map(|rec| Example {
                label: u16::from_le_bytes([rec[0], rec[1]]) as usize,
                domain: rec[2],
                waveform: rec[4..]
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                    .collect(),
                f0: None,
            })
            .collect();
        let ds = Dataset {
            examples,
            label_arity,
            sample_rate,
            version,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut file = fs::File::create(path)?;
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Number of examples per label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_arity];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }
}

fn read_exact(cur: &mut &[u8], buf: &mut [u8], what: &str) -> Result<()> {
    cur.read_exact(buf)
        .map_err(|_| Error::format(what.to_string(), "end of file".to_string()))
}

pub(crate) fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b, "u32 field")?;
    Ok(u32::from_le_bytes(b))
}
