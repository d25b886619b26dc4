//! End-to-end estimation on analytically drifted multi-tone signals: each
//! channel samples the same band-limited waveform at `r (1 + ε_m)`, so the
//! ground truth needs no resampler.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use srosync::likelihood::profile_log_likelihood;
use srosync::pairwise::{grid_init, GridConfig};
use srosync::{
    estimate, estimate_joint, EstimatorConfig, JointConfig, Method, SpectrogramSet, SroVector,
    TimeSignal, PPM,
};

const RATE: f64 = 16000.0;

struct Tone {
    hz: f64,
    phase: f64,
    amp: f64,
}

fn tones(rng: &mut ChaCha8Rng, count: usize) -> Vec<Tone> {
    (0..count)
        .map(|_| {
            let hz: f64 = rng.random_range(60.0..7000.0);
            Tone {
                hz,
                phase: rng.random_range(0.0..2.0 * PI),
                amp: 1.0 / (1.0 + (hz / 500.0).powi(2)),
            }
        })
        .collect()
}

/// Channel `m` of a drifted recording: sample `τ` is taken at time
/// `τ / (r (1 + ε_m)) - delay_m`, plus white noise.
fn render(
    sros_ppm: &[f64],
    delays: &[f64],
    seconds: f64,
    noise: f64,
    seed: u64,
) -> Vec<TimeSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = tones(&mut rng, 120);
    let len = (seconds * RATE) as usize;
    sros_ppm
        .iter()
        .zip(delays)
        .map(|(&ppm, &delay)| {
            let rate = RATE * (1.0 + ppm * PPM);
            let samples = (0..len)
                .map(|i| {
                    let t = i as f64 / rate - delay / RATE;
                    let clean: f64 = source
                        .iter()
                        .map(|s| s.amp * (2.0 * PI * s.hz * t + s.phase).sin())
                        .sum();
                    let n: f64 = StandardNormal.sample(&mut rng);
                    clean + noise * n
                })
                .collect();
            TimeSignal::new(samples, RATE).unwrap()
        })
        .collect()
}

#[test]
fn recovers_offset_of_a_drifted_pair() {
    let signals = render(&[0.0, 62.5], &[0.0, 7.0], 10.0, 0.01, 1);
    let config = EstimatorConfig::default();
    let set = SpectrogramSet::analyze(&signals, &config.stft).unwrap();
    let init = grid_init(&set, &GridConfig::default(), config.form).unwrap();
    assert!((init.get(1) / PPM - 62.5).abs() <= GridConfig::default().step() / PPM);
    let est = estimate_joint(&set, &init, &config.joint).unwrap();
    assert!(
        (est.sro.get(1) / PPM - 62.5).abs() < 1.0,
        "{:?}",
        est.sro.to_ppm()
    );
    assert_eq!(est.trace.len(), est.iterations + 1);
    for w in est.trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
    }
}

#[test]
fn truth_is_a_fixed_point_neighbourhood() {
    let truth = [0.0, -40.0, 25.0];
    let signals = render(&truth, &[0.0, 3.0, 11.0], 8.0, 0.01, 2);
    let config = EstimatorConfig::default();
    let set = SpectrogramSet::analyze(&signals, &config.stft).unwrap();
    let init = SroVector::from_ppm(&truth).unwrap();
    let joint = JointConfig {
        outer_iterations: 5,
        tolerance: 0.0,
        ..JointConfig::default()
    };
    let est = estimate_joint(&set, &init, &joint).unwrap();
    assert!(
        est.sro.max_abs_diff(&init) / PPM < 0.1,
        "{:?}",
        est.sro.to_ppm()
    );
}

#[test]
fn all_methods_agree_on_clean_data() {
    let truth = [0.0, 31.0, -55.0, 12.0];
    let signals = render(&truth, &[0.0, 4.0, 9.0, 20.0], 8.0, 0.01, 3);
    let config = EstimatorConfig::default();
    let set = SpectrogramSet::analyze(&signals, &config.stft).unwrap();
    for method in Method::ALL {
        let est = estimate(&set, method, &config).unwrap();
        assert_eq!(est.sro.get(0), 0.0);
        for (e, t) in est.sro.to_ppm().iter().zip(truth) {
            assert!((e - t).abs() < 1.0, "{method}: {:?}", est.sro.to_ppm());
        }
        assert_eq!(est.trace.len(), est.iterations + 1);
    }
}

#[test]
fn joint_estimate_does_not_depend_on_reference_choice() {
    let truth = [0.0, 20.0, -35.0, 50.0];
    let signals = render(&truth, &[0.0, 5.0, 13.0, 2.0], 8.0, 0.05, 4);
    let config = EstimatorConfig::default();
    let run = |order: &[usize]| {
        let picked: Vec<TimeSignal> = order.iter().map(|&i| signals[i].clone()).collect();
        let set = SpectrogramSet::analyze(&picked, &config.stft).unwrap();
        let est = estimate(&set, Method::Joint, &config).unwrap();
        let mut by_channel = [0.0; 4];
        for (k, &i) in order.iter().enumerate() {
            by_channel[i] = est.sro.get(k) / PPM;
        }
        by_channel
    };
    let base = run(&[0, 1, 2, 3]);
    let swapped = run(&[2, 0, 3, 1]);
    for m in 0..4 {
        for n in 0..4 {
            let a = base[n] - base[m];
            let b = swapped[n] - swapped[m];
            assert!((a - b).abs() < 0.05, "pair ({m},{n}): {a} vs {b}");
        }
    }
}

#[test]
fn likelihood_prefers_the_true_offsets() {
    let truth = [0.0, 45.0];
    let signals = render(&truth, &[0.0, 0.0], 5.0, 0.01, 5);
    let config = EstimatorConfig::default();
    let set = SpectrogramSet::analyze(&signals, &config.stft).unwrap();
    let at_truth =
        profile_log_likelihood(&set, &SroVector::from_ppm(&truth).unwrap(), 1e-6).unwrap();
    let off =
        profile_log_likelihood(&set, &SroVector::from_ppm(&[0.0, 40.0]).unwrap(), 1e-6).unwrap();
    assert!(at_truth > off);
}
