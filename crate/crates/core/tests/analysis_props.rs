mod common;

use std::f64::consts::PI;

use adaptft::analysis::{
    bandwidth_db, comb_map, export_heatmap, export_kernels_csv, harmonic_template, harmonic_template_score,
    inverse_permutation, mutual_information_bits, read_kernels_csv, read_pgm, router_usage, sort_neurons_by_peak,
};
use adaptft::dsp::{make_window, one_sided_magnitudes, WindowKind};
use adaptft::frontends::{FrontEndKind, Model, ModelConfig};
use adaptft::synth::{gen_dataset, DatasetConfig, LabelSpec, Task};
use adaptft::{Error, Tensor};
use common::{rng, uniform};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn bank(rows: usize, cols: usize, seed: u64) -> Tensor {
    Tensor::new(vec![rows, cols], uniform(&mut rng(seed), rows * cols, -1.0, 1.0)).unwrap()
}

/// Sorted peak frequencies of 512 neurons spread over 0..8 kHz in 25 Hz bins.
fn sorted_peaks() -> Vec<f64> {
    (0..512).map(|j| ((j * 321) / 512) as f64 * 25.0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sort_is_a_bijection_and_idempotent(rows in 1usize..12, cols in 2usize..40, seed in any::<u64>()) {
        let w = bank(rows, cols, seed);
        let map = sort_neurons_by_peak(&w, 16_000).unwrap();
        let mut seen = map.permutation.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..rows).collect::<Vec<_>>());
        prop_assert!(map.peak_bins.windows(2).all(|p| p[0] <= p[1]));

        let sorted_rows: Vec<Vec<f64>> = map.permutation.iter().map(|&i| w.row(i).to_vec()).collect();
        let again = sort_neurons_by_peak(&Tensor::from_rows(&sorted_rows), 16_000).unwrap();
        prop_assert_eq!(again.permutation, (0..rows).collect::<Vec<_>>());
    }

    #[test]
    fn comb_map_inverts(rows in 1usize..8, cols in 1usize..30, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let w2 = bank(rows, cols, seed);
        let mut perm: Vec<usize> = (0..cols).collect();
        perm.shuffle(&mut rng(seed ^ 1));
        let cm = comb_map(&w2, &perm).unwrap();
        let back = comb_map(&cm.matrix, &inverse_permutation(&perm)).unwrap();
        prop_assert_eq!(back.matrix.data(), w2.data());
    }

    #[test]
    fn template_score_ignores_positive_scale(scale in 1e-6f64..1e6, seed in 0u64..1000) {
        let peaks = sorted_peaks();
        let row = uniform(&mut rng(seed), 512, -1.0, 1.0);
        let scaled: Vec<f64> = row.iter().map(|v| v * scale).collect();
        let a = harmonic_template_score(&row, 180.0, &peaks, 16_000).unwrap().unwrap();
        let b = harmonic_template_score(&scaled, 180.0, &peaks, 16_000).unwrap().unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn fraction_below_is_monotone(rows in 1usize..20, seed in any::<u64>(), a in 0.0f64..9000.0, b in 0.0f64..9000.0) {
        let map = sort_neurons_by_peak(&bank(rows, 64, seed), 16_000).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(map.fraction_below(lo) <= map.fraction_below(hi));
        prop_assert_eq!(map.fraction_below(0.0), 0.0);
        prop_assert_eq!(map.fraction_below(8001.0), 1.0);
    }

    #[test]
    fn deterministic_balanced_mi_is_log2_k(k in 1usize..9, per in 1usize..50) {
        let joint: Vec<Vec<usize>> = (0..k).map(|i| (0..k).map(|j| if i == j { per } else { 0 }).collect()).collect();
        prop_assert!((mutual_information_bits(&joint) - (k as f64).log2()).abs() < 1e-9);
    }

    #[test]
    fn independent_mi_is_zero(rows in prop::collection::vec(1usize..20, 1..5), cols in prop::collection::vec(1usize..20, 1..5)) {
        let joint: Vec<Vec<usize>> = rows.iter().map(|&r| cols.iter().map(|&c| r * c).collect()).collect();
        prop_assert!(mutual_information_bits(&joint).abs() < 1e-9);
    }

    #[test]
    fn pgm_round_trip(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let m = bank(rows, cols, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pgm");
        export_heatmap(&m, &path).unwrap();
        let (w, h, px) = read_pgm(&std::fs::read(&path).unwrap()).unwrap();
        prop_assert_eq!((w, h), (cols, rows));
        let (lo, hi) = m.data().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        for (p, v) in px.iter().zip(m.data()) {
            let want = if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 128 };
            prop_assert_eq!(*p, want);
        }
    }
}

#[test]
fn hann_main_lobe_is_about_1_44_bins() {
    // 8x zero padding samples the main lobe finely enough for the
    // interpolated crossing to approach the continuous width.
    let n = 640;
    let pad = 8;
    let w = make_window(WindowKind::Hann, n).unwrap();
    for k0 in [40.0, 101.0, 200.0] {
        let mut x = vec![0.0; n * pad];
        for (t, v) in x.iter_mut().take(n).enumerate() {
            *v = w.values[t] * (2.0 * PI * k0 * t as f64 / n as f64).cos();
        }
        let width = bandwidth_db(&one_sided_magnitudes(&x), 3.0).unwrap() / pad as f64;
        assert!((width - 1.44).abs() < 0.1, "bin {k0}: {width}");
    }
}

#[test]
fn bandwidth_degenerate_cases() {
    assert_eq!(bandwidth_db(&[0.0, 0.0, 5.0, 0.0], 3.0), Some(1.0));
    assert_eq!(bandwidth_db(&[2.0; 9], 3.0), Some(8.0));
    assert_eq!(bandwidth_db(&[0.0; 4], 3.0), None);
}

#[test]
fn comb_map_fixture_lands_on_sorted_positions() {
    use rand::seq::SliceRandom;
    let m = 40;
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng(12));
    let mut row = vec![0.0; m];
    for s in [10, 20, 30] {
        row[perm[s]] = 1.0;
    }
    let cm = comb_map(&Tensor::from_rows(&[row]), &perm).unwrap();
    let ones: Vec<usize> = cm.matrix.data().iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
    assert_eq!(ones, vec![10, 20, 30]);
    assert!(matches!(comb_map(&cm.matrix, &perm[..39]), Err(Error::Dimension { .. })));
}

#[test]
fn template_scores_order_self_partial_and_noise() {
    let peaks = sorted_peaks();
    for f0 in [90.0, 150.0, 310.0] {
        let template = harmonic_template(f0, &peaks, 16_000);
        let own = harmonic_template_score(&template, f0, &peaks, 16_000).unwrap().unwrap();
        assert!((own - 1.0).abs() < 1e-12);

        // Drop the bump of the second harmonic.
        let partial: Vec<f64> = template
            .iter()
            .zip(&peaks)
            .map(|(&t, &p)| if p > 0.0 && (1200.0 * (p / (2.0 * f0)).log2()).abs() < 150.0 { 0.0 } else { t })
            .collect();
        let part = harmonic_template_score(&partial, f0, &peaks, 16_000).unwrap().unwrap();

        let mut worst_noise = 0.0f64;
        for seed in 0..100 {
            let mut r = rng(seed);
            let noise: Vec<f64> = (0..512).map(|_| StandardNormal.sample(&mut r)).collect();
            let s = harmonic_template_score(&noise, f0, &peaks, 16_000).unwrap().unwrap();
            worst_noise = worst_noise.max(s.abs());
        }
        assert!(worst_noise < 0.2, "f0 {f0}: noise score {worst_noise}");
        assert!(part < own && part > worst_noise, "f0 {f0}: {part}");
    }
    assert!(harmonic_template_score(&[1.0; 512], 100.0, &peaks, 16_000).unwrap().is_none());
}

#[test]
fn kernel_csv_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let w = Tensor::new(vec![3, 7], vec![1.0 / 3.0, -2e-300, 5e300, 0.1, -0.0, 123456789.123456789, 1e-5]
        .into_iter().cycle().take(21).collect()).unwrap();
    let path = dir.path().join("k.csv");
    export_kernels_csv(&w, 16_000, &path).unwrap();
    let table = read_kernels_csv(&path).unwrap();
    assert_eq!(&table.header[..3], ["neuron", "peak_hz", "bandwidth_hz"]);
    assert_eq!(table.header[3..], (0..7).map(|k| format!("k{k}")).collect::<Vec<_>>());
    assert_eq!(table.neurons, vec![0, 1, 2]);
    for r in 0..3 {
        let bits: Vec<u64> = table.kernels[r].iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = w.row(r).iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
    }

    let empty = dir.path().join("empty.csv");
    export_kernels_csv(&Tensor::zeros(&[0, 4]), 16_000, &empty).unwrap();
    let text = std::fs::read_to_string(&empty).unwrap();
    assert_eq!(text, "neuron,peak_hz,bandwidth_hz,k0,k1,k2,k3\n");
}

#[test]
fn router_usage_contracts() {
    let ds = gen_dataset(&DatasetConfig {
        task: Task::Mixture,
        n_examples: 60,
        labels: LabelSpec::reduced(),
        ..Default::default()
    })
    .unwrap();
    let base = ModelConfig { kernels: 8, kernel_len: 31, router_width: 8, classes: 22, ..Default::default() };
    let uniform_router = Model::new(&ModelConfig { frontend: FrontEndKind::Adaptive, alpha: 0.0, ..base.clone() }).unwrap();
    let usage = router_usage(&uniform_router, &ds).unwrap();
    assert!(usage.mi_bits.abs() < 1e-9);
    assert_eq!(usage.expert_totals.iter().sum::<usize>(), 60);

    let plain = Model::new(&ModelConfig { frontend: FrontEndKind::Conv, ..base }).unwrap();
    assert!(matches!(router_usage(&plain, &ds), Err(Error::Contract(_))));
}
