//! Turning trained weights into inspectable maps: frequency-sorted kernel
//! spectra, comb maps over the head, neuron profiles, router statistics and
//! the image/CSV exports.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsp::{one_sided_magnitudes, peak_bin};
use crate::error::{Error, Result};
use crate::frontends::{argmax, Model};
use crate::synth::Dataset;
use crate::tensor::Tensor;

/// Width of each comb-template bump, in cents.
pub const TEMPLATE_SIGMA_CENTS: f64 = 30.0;

/// Kernel spectra sorted by peak frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedFilterMap {
    /// `permutation[r]` is the original neuron shown in row `r`.
    pub permutation: Vec<usize>,
    /// `[M × (N/2+1)]` one-sided DFT magnitudes in sorted order.
    pub magnitudes: Tensor,
    pub peak_bins: Vec<usize>,
    /// −3 dB width in bins; `None` for all-zero kernels.
    pub bandwidths: Vec<Option<f64>>,
    /// Kernel length the spectra were taken over.
    pub kernel_len: usize,
    pub sample_rate: u32,
}

impl SortedFilterMap {
    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.kernel_len as f64
    }

    /// Peak frequency of each row, Hz.
    pub fn peak_hz(&self) -> Vec<f64> {
        let hz = self.bin_hz();
        self.peak_bins.iter().map(|&b| b as f64 * hz).collect()
    }

    /// Share of neurons whose peak lies strictly below `f_hz`.
    pub fn fraction_below(&self, f_hz: f64) -> f64 {
        let below = self.peak_hz().iter().filter(|&&p| p < f_hz).count();
        below as f64 / self.peak_bins.len() as f64
    }
}

/// Sorts the rows of a kernel bank `[M×N]` by the bin of their DFT peak.
/// The sort is stable, so equal peaks keep their original order.
pub fn sort_neurons_by_peak(w: &Tensor, sample_rate: u32) -> Result<SortedFilterMap> {
    let (m, n) = w
        .matrix_dims()
        .ok_or_else(|| Error::Size(format!("kernel bank must be a matrix, got shape {:?}", w.shape())))?;
    if m == 0 || n == 0 {
        return Err(Error::Size(format!("kernel bank {m}x{n} is empty")));
    }
    let spectra: Vec<Vec<f64>> = (0..m).map(|r| one_sided_magnitudes(w.row(r))).collect();
    let peaks = spectra.iter().map(|s| peak_bin(s)).collect::<Result<Vec<_>>>()?;
    let mut permutation: Vec<usize> = (0..m).collect();
    permutation.sort_by_key(|&r| peaks[r]);
    let bins = n / 2 + 1;
    let mut data = Vec::with_capacity(m * bins);
    for &r in &permutation {
        data.extend_from_slice(&spectra[r]);
    }
    Ok(SortedFilterMap {
        peak_bins: permutation.iter().map(|&r| peaks[r]).collect(),
        bandwidths: permutation.iter().map(|&r| bandwidth_db(&spectra[r], 3.0)).collect(),
        permutation,
        magnitudes: Tensor::new(vec![m, bins], data)?,
        kernel_len: n,
        sample_rate,
    })
}

/// `fraction_below` of a kernel bank without keeping the map.
pub fn bank_fraction_below(w: &Tensor, sample_rate: u32, f_hz: f64) -> Result<f64> {
    Ok(sort_neurons_by_peak(w, sample_rate)?.fraction_below(f_hz))
}

/// Width in bins of the contiguous region around the peak where the
/// magnitude stays at or above `peak · 10^(−drop_db/20)`.
///
/// Edges are linearly interpolated between bins; a region that runs into
/// the end of the array stops there. The result is at least one bin.
/// Returns `None` when every magnitude is zero.
pub fn bandwidth_db(mags: &[f64], drop_db: f64) -> Option<f64> {
    let peak = peak_bin(mags).ok()?;
    let top = mags[peak];
    if !(top > 0.0) {
        return None;
    }
    let level = top * 10f64.powf(-drop_db / 20.0);
    let crossing = |inside: usize, outside: usize| -> f64 {
        let (a, b) = (mags[inside], mags[outside]);
        let frac = (a - level) / (a - b);
        inside as f64 + frac * (outside as f64 - inside as f64)
    };
    let mut lo = peak;
    while lo > 0 && mags[lo - 1] >= level {
        lo -= 1;
    }
    let left = if lo == 0 { 0.0 } else { crossing(lo, lo - 1) };
    let mut hi = peak;
    while hi + 1 < mags.len() && mags[hi + 1] >= level {
        hi += 1;
    }
    let right = if hi + 1 == mags.len() {
        hi as f64
    } else {
        crossing(hi, hi + 1)
    };
    Some((right - left).max(1.0))
}

/// Spectral summary of a single kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronProfile {
    pub neuron: usize,
    pub kernel: Vec<f64>,
    pub peak_hz: f64,
    pub bandwidth_hz: Option<f64>,
    pub centroid_hz: f64,
}

pub fn neuron_profile(neuron: usize, kernel: &[f64], sample_rate: u32) -> Result<NeuronProfile> {
    if kernel.is_empty() {
        return Err(Error::Size("empty kernel".into()));
    }
    let mags = one_sided_magnitudes(kernel);
    let hz = sample_rate as f64 / kernel.len() as f64;
    let total: f64 = mags.iter().sum();
    let centroid = if total > 0.0 {
        mags.iter().enumerate().map(|(b, m)| b as f64 * hz * m).sum::<f64>() / total
    } else {
        0.0
    };
    Ok(NeuronProfile {
        neuron,
        kernel: kernel.to_vec(),
        peak_hz: peak_bin(&mags)? as f64 * hz,
        bandwidth_hz: bandwidth_db(&mags, 3.0).map(|b| b * hz),
        centroid_hz: centroid,
    })
}

/// Profiles of every kernel in a bank, in original neuron order.
pub fn neuron_profiles(w: &Tensor, sample_rate: u32) -> Result<Vec<NeuronProfile>> {
    let (m, _) = w
        .matrix_dims()
        .ok_or_else(|| Error::Size(format!("kernel bank must be a matrix, got shape {:?}", w.shape())))?;
    (0..m).map(|r| neuron_profile(r, w.row(r), sample_rate)).collect()
}

/// Head weights with columns in the first layer's sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct CombMap {
    pub matrix: Tensor,
    pub permutation: Vec<usize>,
}

/// Reorders the columns of `w2: [C×M]` so column `j` holds original column `perm[j]`.
pub fn comb_map(w2: &Tensor, perm: &[usize]) -> Result<CombMap> {
    let (c, m) = w2
        .matrix_dims()
        .ok_or_else(|| Error::Size(format!("head weights must be a matrix, got shape {:?}", w2.shape())))?;
    if perm.len() != m {
        return Err(Error::dim("comb_map", &[c, m], &[perm.len()]));
    }
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || std::mem::replace(&mut seen[p], true) {
            return Err(Error::Contract(format!("{perm:?} is not a permutation of 0..{m}")));
        }
    }
    let mut data = Vec::with_capacity(c * m);
    for r in 0..c {
        let row = w2.row(r);
        data.extend(perm.iter().map(|&p| row[p]));
    }
    Ok(CombMap {
        matrix: Tensor::new(vec![c, m], data)?,
        permutation: perm.to_vec(),
    })
}

pub fn inverse_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn cents(a: f64, b: f64) -> f64 {
    1200.0 * (a / b).log2()
}

/// Ideal comb over frequency-sorted neurons: a Gaussian bump in cents
/// around the neuron nearest each harmonic `h·f0` below Nyquist. Neurons
/// with a DC peak get 0.
pub fn harmonic_template(f0: f64, peaks_hz: &[f64], sample_rate: u32) -> Vec<f64> {
    let nyquist = sample_rate as f64 / 2.0;
    let harmonics = (nyquist / f0).floor() as usize;
    let centers: Vec<f64> = (1..=harmonics)
        .filter_map(|h| {
            let target = h as f64 * f0;
            peaks_hz
                .iter()
                .copied()
                .filter(|&p| p > 0.0)
                .min_by(|a, b| (a - target).abs().total_cmp(&(b - target).abs()))
        })
        .collect();
    peaks_hz
        .iter()
        .map(|&p| {
            if p <= 0.0 {
                return 0.0;
            }
            centers
                .iter()
                .map(|&c| {
                    let d = cents(p, c) / TEMPLATE_SIGMA_CENTS;
                    (-0.5 * d * d).exp()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Pearson correlation; `None` if either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation between `|row|` and the ideal comb for `f0`.
///
/// `row` must be in sorted-neuron order with `peaks_hz` giving each
/// position's peak frequency. `None` when the row (or template) is constant.
pub fn harmonic_template_score(row: &[f64], f0: f64, peaks_hz: &[f64], sample_rate: u32) -> Result<Option<f64>> {
    if row.len() != peaks_hz.len() {
        return Err(Error::dim("harmonic_template_score", &[row.len()], &[peaks_hz.len()]));
    }
    let template = harmonic_template(f0, peaks_hz, sample_rate);
    let abs: Vec<f64> = row.iter().map(|v| v.abs()).collect();
    Ok(pearson(&abs, &template))
}

/// Observed comb scores against a permutation null.
#[derive(Debug, Clone, PartialEq)]
pub struct CombEmergence {
    pub observed_mean: f64,
    /// Mean score of each permutation draw.
    pub null_means: Vec<f64>,
    pub null_mean: f64,
    pub null_sd: f64,
    /// `null_sd / √draws`.
    pub standard_error: f64,
    /// `observed_mean − null_mean`.
    pub gap: f64,
}

impl CombEmergence {
    /// Gap in units of the null's standard error.
    pub fn gap_in_standard_errors(&self) -> f64 {
        self.gap / self.standard_error
    }

    /// Gap in units of the null's standard deviation.
    pub fn z_score(&self) -> f64 {
        self.gap / self.null_sd
    }
}

/// Mean template score of the rows of `map` against their pitch, compared
/// with `draws` random reorderings of the neurons. Rows with an undefined
/// score are left out of both means.
pub fn comb_emergence(map: &CombMap, f0s: &[f64], peaks_hz: &[f64], sample_rate: u32, draws: usize, seed: u64) -> Result<CombEmergence> {
    let (c, m) = map.matrix.matrix_dims().expect("comb map is a matrix");
    if f0s.len() > c {
        return Err(Error::dim("comb_emergence", &[c], &[f0s.len()]));
    }
    if draws < 2 {
        return Err(Error::Config("comb emergence needs at least two permutation draws".into()));
    }
    let templates: Vec<Vec<f64>> = f0s.iter().map(|&f| harmonic_template(f, peaks_hz, sample_rate)).collect();
    let mean_score = |order: &[usize]| -> Result<f64> {
        let (mut sum, mut count) = (0.0, 0usize);
        for (r, t) in templates.iter().enumerate() {
            let row = map.matrix.row(r);
            let abs: Vec<f64> = order.iter().map(|&j| row[j].abs()).collect();
            if let Some(s) = pearson(&abs, t) {
                sum += s;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Contract("no row has a defined comb score".into()));
        }
        Ok(sum / count as f64)
    };
    let identity: Vec<usize> = (0..m).collect();
    let observed_mean = mean_score(&identity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = identity;
    let null_means = (0..draws)
        .map(|_| {
            order.shuffle(&mut rng);
            mean_score(&order)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = draws as f64;
    let null_mean = null_means.iter().sum::<f64>() / k;
    let var = null_means.iter().map(|v| (v - null_mean).powi(2)).sum::<f64>() / (k - 1.0);
    let null_sd = var.sqrt();
    Ok(CombEmergence {
        observed_mean,
        null_means,
        null_mean,
        null_sd,
        standard_error: null_sd / k.sqrt(),
        gap: observed_mean - null_mean,
    })
}

/// Mutual information, in bits, of the joint count table `[rows][cols]`.
pub fn mutual_information_bits(joint: &[Vec<usize>]) -> f64 {
    let total: usize = joint.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let cols = joint.iter().map(|r| r.len()).max().unwrap_or(0);
    let row_sums: Vec<f64> = joint.iter().map(|r| r.iter().sum::<usize>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols)
        .map(|c| joint.iter().map(|r| r.get(c).copied().unwrap_or(0)).sum::<usize>() as f64)
        .collect();
    let mut mi = 0.0;
    for (r, row) in joint.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            if count > 0 {
                let p = count as f64 / n;
                mi += p * (count as f64 * n / (row_sums[r] * col_sums[c])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// Which expert each domain is sent to.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterUsage {
    /// `joint[domain][expert]` counts of hard-argmax choices.
    pub joint: Vec<Vec<usize>>,
    pub expert_totals: Vec<usize>,
    pub mi_bits: f64,
    /// Share of inputs whose largest gate weight is at least 0.999.
    pub one_hot_fraction: f64,
}

pub fn router_usage(model: &Model, ds: &Dataset) -> Result<RouterUsage> {
    let k = model.config().experts;
    let domains = ds.examples.iter().map(|e| e.domain as usize + 1).max().unwrap_or(1);
    let mut joint = vec![vec![0usize; k]; domains];
    let mut one_hot = 0usize;
    for e in &ds.examples {
        let gates = model
            .gates(&e.waveform)?
            .ok_or_else(|| Error::Contract("router statistics need an adaptive model".into()))?;
        joint[e.domain as usize][argmax(&gates)] += 1;
        if gates.iter().cloned().fold(f64::MIN, f64::max) >= 0.999 {
            one_hot += 1;
        }
    }
    if ds.is_empty() && model.router_scores(&vec![0.0; model.config().input_len])?.is_none() {
        return Err(Error::Contract("router statistics need an adaptive model".into()));
    }
    let expert_totals = (0..k).map(|x| joint.iter().map(|r| r[x]).sum()).collect();
    Ok(RouterUsage {
        mi_bits: mutual_information_bits(&joint),
        expert_totals,
        joint,
        one_hot_fraction: if ds.is_empty() { 0.0 } else { one_hot as f64 / ds.len() as f64 },
    })
}

/// Binary PGM (P5) of a matrix, min-max scaled to 0..255. A constant matrix
/// is drawn in mid-gray (128).
pub fn heatmap_pgm(matrix: &Tensor) -> Result<Vec<u8>> {
    let (rows, cols) = match matrix.shape() {
        [r, c] => (*r, *c),
        [c] => (1, *c),
        other => return Err(Error::Size(format!("heatmap needs a matrix, got shape {other:?}"))),
    };
    if !matrix.all_finite() {
        return Err(Error::Contract("heatmap matrix has non-finite values".into()));
    }
    let (lo, hi) = matrix
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(matrix.data().iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    }));
    Ok(out)
}

pub fn export_heatmap(matrix: &Tensor, path: &Path) -> Result<()> {
    let bytes = heatmap_pgm(matrix)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Parses a binary PGM with maxval 255; returns `(width, height, pixels)`.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PGM header", "end of file"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::format("P5", fields[0].clone()));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::format("integer", s.to_string()));
    let (w, h, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(Error::format("maxval 255", max.to_string()));
    }
    let pixels = bytes.get(pos..).unwrap_or(&[]);
    if pixels.len() != w * h {
        return Err(Error::format(format!("{} pixels", w * h), format!("{}", pixels.len())));
    }
    Ok((w, h, pixels.to_vec()))
}

/// One kernel per row with its index, peak and −3 dB bandwidth.
pub fn export_kernels_csv(w: &Tensor, sample_rate: u32, path: &Path) -> Result<()> {
    let (m, n) = w
        .matrix_dims()
        .ok_or_else(|| Error::Size(format!("kernel bank must be a matrix, got shape {:?}", w.shape())))?;
    if !w.all_finite() {
        return Err(Error::Contract("kernel bank has non-finite values".into()));
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["neuron".to_string(), "peak_hz".into(), "bandwidth_hz".into()];
    header.extend((0..n).map(|k| format!("k{k}")));
    writer.write_record(&header)?;
    for r in 0..m {
        let p = neuron_profile(r, w.row(r), sample_rate)?;
        let mut rec = vec![
            r.to_string(),
            format!("{:.16e}", p.peak_hz),
            p.bandwidth_hz.map(|b| format!("{b:.16e}")).unwrap_or_default(),
        ];
        rec.extend(w.row(r).iter().map(|v| format!("{v:.16e}")));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Contents of a kernel CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub header: Vec<String>,
    pub neurons: Vec<usize>,
    pub peak_hz: Vec<f64>,
    pub bandwidth_hz: Vec<Option<f64>>,
    pub kernels: Vec<Vec<f64>>,
}

pub fn read_kernels_csv(path: &Path) -> Result<KernelTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header.len() < 3 || header[..3] != ["neuron", "peak_hz", "bandwidth_hz"] {
        return Err(Error::format("neuron,peak_hz,bandwidth_hz header", header.join(",")));
    }
    let float = |s: &str| s.parse::<f64>().map_err(|_| Error::format("number", s.to_string()));
    let mut table = KernelTable {
        header,
        neurons: Vec::new(),
        peak_hz: Vec::new(),
        bandwidth_hz: Vec::new(),
        kernels: Vec::new(),
    };
    for rec in reader.records() {
        let rec = rec?;
        table
            .neurons
            .push(rec[0].parse().map_err(|_| Error::format("neuron index", rec[0].to_string()))?);
        table.peak_hz.push(float(&rec[1])?);
        table
            .bandwidth_hz
            .push(if rec[2].is_empty() { None } else { Some(float(&rec[2])?) });
        table
            .kernels
            .push(rec.iter().skip(3).map(float).collect::<Result<Vec<_>>>()?);
    }
    Ok(table)
}

/// Neuron profiles as CSV text (`neuron,peak_hz,bandwidth_hz,centroid_hz`).
pub fn write_profiles_csv(profiles: &[NeuronProfile], path: &Path) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "neuron,peak_hz,bandwidth_hz,centroid_hz")?;
    for p in profiles {
        let bw = p.bandwidth_hz.map(|b| format!("{b:.3}")).unwrap_or_default();
        writeln!(out, "{},{:.3},{},{:.3}", p.neuron, p.peak_hz, bw, p.centroid_hz)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn bandwidth_edge_cases() {
        assert_eq!(bandwidth_db(&[0.0, 0.0, 5.0, 0.0], 3.0), Some(1.0));
        assert_eq!(bandwidth_db(&[2.0; 6], 3.0), Some(5.0));
        assert_eq!(bandwidth_db(&[0.0; 4], 3.0), None);
    }

    #[test]
    fn bandwidth_interpolates() {
        let level = 10f64.powf(-3.0 / 20.0);
        let mags = [0.5, 0.9, 1.0, 0.9, 0.5];
        let frac = (0.9 - level) / 0.4;
        let got = bandwidth_db(&mags, 3.0).unwrap();
        assert!((got - (2.0 + 2.0 * frac)).abs() < 1e-12);
    }

    #[test]
    fn cosine_rows_sort_into_frequency_order() {
        let n = 32;
        let order = [5usize, 1, 7, 3, 0, 6, 2, 4];
        let rows: Vec<Vec<f64>> = order
            .iter()
            .map(|&k| (0..n).map(|t| (2.0 * PI * (k + 1) as f64 * t as f64 / n as f64).cos()).collect())
            .collect();
        let map = sort_neurons_by_peak(&Tensor::from_rows(&rows), 16000).unwrap();
        let expected: Vec<usize> = (0..8).map(|k| order.iter().position(|&o| o == k).unwrap()).collect();
        assert_eq!(map.permutation, expected);
        assert_eq!(map.peak_bins, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn comb_map_reorders_columns() {
        let w2 = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let cm = comb_map(&w2, &[2, 0, 1]).unwrap();
        assert_eq!(cm.matrix.data(), &[3.0, 1.0, 2.0, 6.0, 4.0, 5.0]);
        assert!(matches!(comb_map(&w2, &[0, 1]), Err(Error::Dimension { .. })));
        assert!(comb_map(&w2, &[0, 0, 1]).is_err());
    }

    #[test]
    fn mi_fixtures() {
        assert_eq!(mutual_information_bits(&[vec![50, 0], vec![0, 50]]), 1.0);
        assert!(mutual_information_bits(&[vec![25, 25], vec![25, 25]]).abs() < 1e-12);
        assert_eq!(mutual_information_bits(&[vec![]]), 0.0);
    }

    #[test]
    fn heatmap_endpoints() {
        let m = Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (w, h, px) = read_pgm(&heatmap_pgm(&m).unwrap()).unwrap();
        assert_eq!((w, h, px), (2, 2, vec![0, 255, 255, 0]));
        let (_, _, px) = read_pgm(&heatmap_pgm(&Tensor::filled(&[2, 3], 7.5)).unwrap()).unwrap();
        assert_eq!(px, vec![128; 6]);
    }

    #[test]
    fn template_peaks_at_harmonics() {
        let peaks: Vec<f64> = (0..=320).map(|b| b as f64 * 25.0).collect();
        let t = harmonic_template(200.0, &peaks, 16000);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[8], 1.0);
        assert_eq!(t[16], 1.0);
        assert!(t[12] < 1e-6);
    }
}
