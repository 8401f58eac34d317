mod common;

use proptest::prelude::*;

use isr_core::corpus::{corrupt_clip, default_plans, phase_seed, NullSidecar};
use isr_core::energy::{
    apply_intermittency, duty_cycle, nulls_to_frame_ranges, EnergyHarvestConfig, FrameRange,
    IntermittentClip, NullSegment,
};
use isr_core::metrics::{edit_distance, wer, Transcript};
use isr_core::neural::{unet_forward, ComplexUNet, MaskMode, UNetConfig};
use isr_core::recovery::{combine, interpolate, interpolation_ratio};
use isr_core::signal::{istft, stft, AudioClip, StftConfig, Window};

fn signal(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    (300..max_len).prop_flat_map(|n| prop::collection::vec(-1.0f64..1.0, n))
}

fn stft_config() -> impl Strategy<Value = StftConfig> {
    (
        prop::sample::select(vec![64usize, 128, 256]),
        prop::sample::select(vec![4usize, 8]),
    )
        .prop_map(|(w, d)| StftConfig::new(w, w / d, Window::Hann).unwrap())
}

/// Sorted, separated null segments inside `[0, n)`.
fn schedule(n: usize) -> impl Strategy<Value = Vec<NullSegment>> {
    prop::collection::vec((1usize..n / 4 + 2, 1usize..n / 6 + 2), 0..6).prop_map(move |pairs| {
        let mut out = Vec::new();
        let mut s = 0;
        for (gap, len) in pairs {
            let start = s + gap;
            let end = (start + len).min(n);
            if start >= n {
                break;
            }
            out.push(NullSegment::new(start, end).unwrap());
            s = end;
        }
        out
    })
}

fn cut(x: &[f64], nulls: &[NullSegment]) -> IntermittentClip {
    let mut y = x.to_vec();
    for s in nulls {
        y[s.start..s.end].iter_mut().for_each(|v| *v = 0.0);
    }
    IntermittentClip::new(AudioClip::new(y, 16_000).unwrap(), nulls.to_vec()).unwrap()
}

fn tokens(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "the"]), 0..max)
        .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip_interior(x in signal(3000), cfg in stft_config()) {
        let clip = AudioClip::new(x.clone(), 16_000).unwrap();
        let y = istft(&stft(&clip, &cfg).unwrap()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        let w = cfg.window_length();
        prop_assume!(x.len() > 2 * w);
        for i in w..x.len() - w {
            prop_assert!((x[i] - y.samples()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn stft_is_linear(x in signal(2000), a in -3.0f64..3.0, b in -3.0f64..3.0, cfg in stft_config()) {
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = stft(&AudioClip::new(x, 16_000).unwrap(), &cfg).unwrap();
        let sy = stft(&AudioClip::new(y, 16_000).unwrap(), &cfg).unwrap();
        let sm = stft(&AudioClip::new(mix, 16_000).unwrap(), &cfg).unwrap();
        for ((p, q), m) in sx.data().iter().zip(sy.data()).zip(sm.data()) {
            prop_assert!((p * a + q * b - m).norm() < 1e-9);
        }
    }

    #[test]
    fn duty_cycle_balances_energy(
        c in 1e-6f64..1e-2,
        v_off in 0.5f64..3.0,
        dv in 0.01f64..2.0,
        load in 1e-3f64..1e-1,
        frac in 0.01f64..0.99,
    ) {
        let cfg = EnergyHarvestConfig { capacitance: c, v_on: v_off + dv, v_off, source_power: frac * load, load_power: load };
        let d = duty_cycle(&cfg).unwrap();
        let e = cfg.cycle_energy();
        prop_assert!(!d.always_on);
        prop_assert!((cfg.source_power * d.t_off - e).abs() <= 1e-12 * e);
        prop_assert!(((load - cfg.source_power) * d.t_on - e).abs() <= 1e-12 * e);
        let always = duty_cycle(&EnergyHarvestConfig { source_power: load * (1.0 + frac), ..cfg }).unwrap();
        prop_assert!(always.always_on);
    }

    #[test]
    fn intermittency_zeros_exactly_the_nulls(x in signal(4000), mw in 1.0f64..5.5, seed in any::<u64>()) {
        let clip = AudioClip::new(x.clone(), 16_000).unwrap();
        let duty = duty_cycle(&EnergyHarvestConfig::microphone(mw * 1e-3)).unwrap();
        let out = apply_intermittency(&clip, &duty, None, seed).unwrap();
        let mut inside = vec![false; x.len()];
        let mut prev_end = None;
        for s in out.nulls() {
            prop_assert!(s.start < s.end && s.end <= x.len());
            if let Some(p) = prev_end { prop_assert!(s.start > p); }
            prev_end = Some(s.end);
            inside[s.start..s.end].iter_mut().for_each(|v| *v = true);
        }
        for (i, v) in out.clip().samples().iter().enumerate() {
            prop_assert_eq!(v.to_bits(), if inside[i] { 0.0f64.to_bits() } else { x[i].to_bits() });
        }
        let again = apply_intermittency(&clip, &duty, None, seed).unwrap();
        prop_assert_eq!(again.nulls(), out.nulls());
    }

    #[test]
    fn interpolation_keeps_recorded_frames_and_is_idempotent(x in signal(3000), cfg in stft_config(), sched_seed in 0usize..1000) {
        let n = x.len();
        let nulls: Vec<NullSegment> = {
            let start = (sched_seed * 7) % (n / 2);
            vec![NullSegment::new(start, (start + n / 5 + 1).min(n)).unwrap()]
        };
        let clip = cut(&x, &nulls);
        let spec = stft(clip.clip(), &cfg).unwrap();
        let ranges = nulls_to_frame_ranges(clip.nulls(), &cfg, spec.frames());
        let (once, _) = interpolate(&spec, &ranges).unwrap();
        let (twice, _) = interpolate(&once, &ranges).unwrap();
        let mut null_frame = vec![false; spec.frames()];
        for r in &ranges {
            null_frame[r.start..r.end].iter_mut().for_each(|v| *v = true);
        }
        for t in 0..spec.frames() {
            if !null_frame[t] {
                prop_assert_eq!(once.frame(t), spec.frame(t));
            }
            for (a, b) in once.frame(t).iter().zip(twice.frame(t)) {
                prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
            }
        }
    }

    #[test]
    fn interpolation_ratio_is_monotone(first in 0usize..100, len in 1usize..50) {
        let last = first + len - 1;
        let mut prev = 0.0;
        for t in first..=last {
            let r = interpolation_ratio(t, first, last);
            prop_assert!(r > prev && r < 1.0);
            prev = r;
        }
    }

    #[test]
    fn combination_selects_by_indicator(x in signal(3000), e_seed in any::<u64>(), frac in 0.0f64..1.0) {
        let n = x.len();
        let start = ((n as f64) * frac * 0.8) as usize;
        let nulls = vec![NullSegment::new(start, (start + n / 7 + 1).min(n)).unwrap()];
        let clip = cut(&x, &nulls);
        let enhanced: Vec<f64> = (0..n).map(|i| ((i as u64).wrapping_mul(e_seed | 1) % 1000) as f64 / 1000.0).collect();
        let out = combine(&clip, &AudioClip::new(enhanced.clone(), 16_000).unwrap()).unwrap();
        for i in 0..n {
            let want = if i >= nulls[0].start && i < nulls[0].end { enhanced[i] } else { clip.clip().samples()[i] };
            prop_assert_eq!(out.samples()[i].to_bits(), want.to_bits());
        }
        // combining with itself is the identity
        let same = combine(&clip, clip.clip()).unwrap();
        prop_assert_eq!(same.samples(), clip.clip().samples());
    }

    #[test]
    fn wer_matches_dp_oracle(r in tokens(10), h in tokens(10)) {
        prop_assume!(!r.is_empty());
        let expect = common::dp_edit_distance(&r, &h) as f64 / r.len() as f64;
        let tr = Transcript::from_tokens(r.clone());
        prop_assert_eq!(wer(&tr, &Transcript::from_tokens(h)).unwrap(), expect);
        prop_assert_eq!(wer(&tr, &tr).unwrap(), 0.0);
        prop_assert_eq!(wer(&tr, &Transcript::from_tokens(Vec::<String>::new())).unwrap(), 1.0);
    }

    #[test]
    fn edit_distance_is_a_metric(a in tokens(8), b in tokens(8), c in tokens(8)) {
        let d = |x: &[String], y: &[String]| edit_distance(x, y);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert_eq!(d(&a, &b), common::dp_edit_distance(&a, &b));
    }

    #[test]
    fn sidecar_json_round_trips(
        id in "[a-z0-9_]{1,12}",
        power in 1.0f64..6.0,
        phase in 0.0f64..0.5,
        seed in any::<u64>(),
        nulls in schedule(5000),
    ) {
        let side = NullSidecar {
            source_id: id,
            clean_path: "clean/x.wav".into(),
            sample_rate: 16_000,
            total_samples: 5000,
            nulls,
            source_power_mw: power,
            phase_s: phase,
            seed,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        side.save(&path).unwrap();
        prop_assert_eq!(NullSidecar::load(&path).unwrap(), side);
    }

    #[test]
    fn corruption_is_deterministic(id in "[a-z]{1,8}", k in 0usize..4, seed in any::<u64>()) {
        let (_, plan) = default_plans(seed);
        let mw = plan.powers_mw[k];
        let clean = AudioClip::new((0..4000).map(|i| (i as f64 * 0.01).sin()).collect(), 16_000).unwrap();
        let (a, pa) = corrupt_clip(&clean, &id, &plan, mw).unwrap();
        let (b, pb) = corrupt_clip(&clean, &id, &plan, mw).unwrap();
        prop_assert_eq!(pa.to_bits(), pb.to_bits());
        prop_assert_eq!(a.nulls(), b.nulls());
        prop_assert_eq!(phase_seed(seed, &id, mw), phase_seed(seed, &id, mw));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bounded_mask_stays_in_unit_disc(seed in any::<u64>(), x in signal(2500), scale in 0.01f64..100.0) {
        let model = ComplexUNet::new(
            UNetConfig { channels: vec![2, 4], kernel: [3, 3], mask: MaskMode::Bounded, ..UNetConfig::default() },
            seed,
        )
        .unwrap();
        let cfg = StftConfig::new(128, 32, Window::Hann).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let spec = stft(&AudioClip::new(scaled, 16_000).unwrap(), &cfg).unwrap();
        let mask = unet_forward(&spec, &model).unwrap();
        prop_assert_eq!((mask.frames, mask.bins), (spec.frames(), spec.bins()));
        prop_assert!(mask.max_magnitude() <= 1.0);
    }
}

#[test]
fn frame_ranges_lie_inside_the_spectrogram() {
    let cfg = StftConfig::default();
    for n in [600usize, 4000, 16_000] {
        let frames = cfg.frames_for(n);
        let nulls = vec![
            NullSegment::new(0, n / 3).unwrap(),
            NullSegment::new(n / 2, n).unwrap(),
        ];
        for FrameRange { start, end } in nulls_to_frame_ranges(&nulls, &cfg, frames) {
            assert!(start < end && end <= frames);
        }
    }
}
