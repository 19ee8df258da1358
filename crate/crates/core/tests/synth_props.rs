use adaptft::dsp::{one_sided_magnitudes, peak_bin};
use adaptft::synth::{gen_dataset, gen_harmonic, Dataset, DatasetConfig, LabelSpec, Task, SAMPLE_RATE, SNIPPET_LEN};
use adaptft::Error;
use proptest::prelude::*;

fn cents(a: f64, b: f64) -> f64 {
    1200.0 * (a / b).log2()
}

proptest! {
    #[test]
    fn class_lookup_is_monotone(a in 40.0f64..=540.0, b in 40.0f64..=540.0) {
        let spec = LabelSpec::full();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(spec.f0_to_class(lo).unwrap() <= spec.f0_to_class(hi).unwrap());
    }

    #[test]
    fn every_f0_lies_within_half_a_class(f0 in 40.0f64..=540.0) {
        let spec = LabelSpec::full();
        let c = spec.f0_to_class(f0).unwrap();
        let half = 0.5 * cents(540.0, 40.0) / 77.0;
        prop_assert!(cents(f0, spec.class_to_f0(c).unwrap()).abs() <= half + 1e-9);
    }

    #[test]
    fn harmonic_peak_near_fundamental(f0 in 75.0f64..4000.0, harmonics in 1usize..12, seed in any::<u64>()) {
        let sig = gen_harmonic(f0, harmonics, 1.0, seed, SNIPPET_LEN, SAMPLE_RATE).unwrap();
        let peak = peak_bin(&one_sided_magnitudes(sig.samples())).unwrap() as f64;
        let expected = (f0 * SNIPPET_LEN as f64 / SAMPLE_RATE as f64).round();
        prop_assert!((peak - expected).abs() <= 1.0, "peak {} expected {}", peak, expected);
    }
}

#[test]
fn class_round_trip() {
    for spec in [LabelSpec::full(), LabelSpec::reduced()] {
        for c in 0..spec.n_pitch_classes {
            assert_eq!(spec.f0_to_class(spec.class_to_f0(c).unwrap()).unwrap(), c);
        }
    }
}

#[test]
fn reduced_grid_keeps_the_cent_construction() {
    let r = LabelSpec::reduced();
    assert_eq!(r.total_classes(), 22);
    assert!((r.class_to_f0(0).unwrap() - 80.0).abs() < 1e-12);
    assert!((r.class_to_f0(20).unwrap() - 400.0).abs() < 1e-9);
    assert!((r.cents_per_class() - cents(400.0, 80.0) / 20.0).abs() < 1e-9);
}

#[test]
fn out_of_range_f0_is_rejected() {
    let spec = LabelSpec::full();
    assert!(matches!(spec.f0_to_class(39.9), Err(Error::Range { .. })));
    assert!(matches!(spec.f0_to_class(f64::NAN), Err(Error::Range { .. })));
}

#[test]
fn generated_pitch_labels_match_their_f0() {
    for task in [Task::Pitch, Task::Mixture] {
        let cfg = DatasetConfig { task, n_examples: 400, seed: 21, ..Default::default() };
        let ds = gen_dataset(&cfg).unwrap();
        let half = 0.5 * cfg.labels.cents_per_class();
        for ex in &ds.examples {
            match ex.f0 {
                Some(f0) => {
                    let centre = cfg.labels.class_to_f0(ex.label).unwrap();
                    assert!(cents(f0, centre).abs() <= half + 1e-9, "{f0} labelled {}", ex.label);
                }
                None => assert_eq!(ex.label, cfg.labels.noise_class()),
            }
            assert_eq!(ex.waveform.len(), SNIPPET_LEN);
            let peak = ex.waveform.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 0.9).abs() < 1e-6);
        }
    }
}

#[test]
fn generation_is_deterministic_and_seeded() {
    let cfg = DatasetConfig { task: Task::Timbre, n_examples: 64, seed: 5, ..Default::default() };
    let a = gen_dataset(&cfg).unwrap();
    assert_eq!(a, gen_dataset(&cfg).unwrap());
    let b = gen_dataset(&DatasetConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(a.examples[0].waveform, b.examples[0].waveform);
}

#[test]
fn serialization_round_trips_bitwise() {
    for task in [Task::Pitch, Task::Timbre, Task::Mixture] {
        let ds = gen_dataset(&DatasetConfig { task, n_examples: 50, seed: 8, ..Default::default() }).unwrap();
        let bytes = ds.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.label_arity, ds.label_arity);
        for (a, b) in ds.examples.iter().zip(&back.examples) {
            assert_eq!(a.waveform, b.waveform);
            assert_eq!((a.label, a.domain), (b.label, b.domain));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        ds.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
        assert_eq!(Dataset::load(&path).unwrap().to_bytes().unwrap(), bytes);
    }
}

#[test]
fn truncated_dataset_is_a_format_error() {
    let ds = gen_dataset(&DatasetConfig { n_examples: 4, ..Default::default() }).unwrap();
    let bytes = ds.to_bytes().unwrap();
    for cut in [0, 3, 8, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Dataset::from_bytes(&bytes[..cut]), Err(Error::Format { .. })), "cut at {cut}");
    }
}
