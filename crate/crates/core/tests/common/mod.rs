//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance runner.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use isr_core::corpus::NullSidecar;
use isr_core::energy::{nulls_to_frame_ranges, IntermittentClip, NullSegment};
use isr_core::neural::{
    loss_and_gradients, ComplexConvLayer, ComplexTensor, ComplexUNet, ConvFeatureEncoder,
    Direction, EncoderConfig, LossKind, LossRegion, TrainExample, UNetConfig,
};
use isr_core::recovery::interpolate;
use isr_core::signal::{load_wav, stft, AudioClip, StftConfig, Window};
use isr_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- finite-difference gradient check ----

/// Relative error denominator floor for parameters whose gradient is ~0.
pub const FLOOR: f64 = 1e-6;
/// Model/data seed whose activations sit clear of every leaky-ReLU and L1
/// kink for steps of 1e-4; across a kink central differences are meaningless.
pub const KINK_FREE_SEED: u64 = 10;

pub fn tiny_model(seed: u64) -> ComplexUNet {
    let model = ComplexUNet::new(
        UNetConfig {
            channels: vec![2, 4],
            kernel: [3, 3],
            stride: [2, 1],
            ..UNetConfig::default()
        },
        seed,
    )
    .unwrap();
    assert!(model.parameter_count() < 2000);
    model
}

pub fn tiny_example(seed: u64) -> TrainExample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 200;
    let clean: Vec<f64> = (0..n)
        .map(|i| 0.4 * (i as f64 * 0.3).sin() + rng.gen_range(-0.1..0.1))
        .collect();
    let nulls = vec![NullSegment::new(80, 120).unwrap()];
    let mut cut = clean.clone();
    cut[80..120].iter_mut().for_each(|v| *v = 0.0);
    let cfg = StftConfig::new(32, 8, Window::Hann).unwrap();
    let clean = AudioClip::new(clean, 16000).unwrap();
    let inter = IntermittentClip::new(AudioClip::new(cut, 16000).unwrap(), nulls).unwrap();
    let spec = stft(inter.clip(), &cfg).unwrap();
    let ranges = nulls_to_frame_ranges(inter.nulls(), &cfg, spec.frames());
    let (spec, _) = interpolate(&spec, &ranges).unwrap();
    TrainExample::new(spec, ranges, inter, clean).unwrap()
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter of [`tiny_model`].
pub fn worst_relative_error(kind: LossKind, region: LossRegion, seed: u64, eps: f64) -> f64 {
    let phi = ConvFeatureEncoder::new(EncoderConfig::default(), 5).unwrap();
    let ex = tiny_example(seed);
    let model = tiny_model(seed);
    let (_, grads) = loss_and_gradients(&model, &ex, kind, region, &phi).unwrap();
    let analytic: Vec<f64> = grads
        .slices()
        .iter()
        .flat_map(|s| s.iter().copied())
        .collect();
    assert_eq!(analytic.len(), model.parameter_count());
    let eval = |k: usize, delta: f64| {
        let mut m = model.clone();
        let mut idx = k;
        for p in m.parameters_mut() {
            if idx < p.len() {
                p[idx] += delta;
                break;
            }
            idx -= p.len();
        }
        loss_and_gradients(&m, &ex, kind, region, &phi).unwrap().0
    };
    analytic
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let fd = (eval(k, eps) - eval(k, -eps)) / (2.0 * eps);
            (a - fd).abs() / a.abs().max(fd.abs()).max(FLOOR)
        })
        .fold(0.0, f64::max)
}

// ---- STOI reference fixtures ----

pub fn stoi_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/stoi")
}

/// `(pair name, reference score)` rows frozen from the Python implementation.
pub fn stoi_reference() -> Vec<(String, f64)> {
    let mut rdr = csv::Reader::from_path(stoi_data_dir().join("reference.csv")).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].to_owned(), r[1].parse().unwrap())
        })
        .collect()
}

/// Clean clip and its zeroed counterpart for one fixture pair.
pub fn fixture_pair(pair: &str) -> (AudioClip, AudioClip) {
    let dir = stoi_data_dir();
    let side = NullSidecar::load(&dir.join(format!("{pair}.json"))).unwrap();
    let clean = load_wav(dir.join(&side.clean_path)).unwrap();
    let mut degraded = clean.samples().to_vec();
    for s in &side.nulls {
        degraded[s.start..s.end].iter_mut().for_each(|v| *v = 0.0);
    }
    let degraded = AudioClip::new(degraded, clean.sample_rate()).unwrap();
    (clean, degraded)
}

// ---- naive complex convolution ----

/// Direct complex-arithmetic evaluation of a layer, one output (or one
/// input, for the transposed direction) element at a time.
pub fn naive_complex_conv(input: &ComplexTensor, layer: &ComplexConvLayer) -> ComplexTensor {
    let [cin, h, w] = input.shape();
    let g = layer.geometry;
    let (kh, kw) = (g.kernel[0], g.kernel[1]);
    let cout = layer.out_channels;
    let weight = |small: usize, big: usize, a: usize, b: usize| {
        let big_n = match layer.direction {
            Direction::Down => cin,
            Direction::Up => cout,
        };
        let k = ((small * big_n + big) * kh + a) * kw + b;
        Complex64::new(layer.params.weight_re[k], layer.params.weight_im[k])
    };
    let x = |c: usize, i: usize, j: usize| {
        let k = input.index(c, i, j);
        Complex64::new(input.re[k], input.im[k])
    };
    let shape = layer.output_shape(input.shape()).unwrap();
    let [_, oh, ow] = shape;
    let mut out = vec![Complex64::new(0.0, 0.0); cout * oh * ow];
    match layer.direction {
        Direction::Down => {
            for co in 0..cout {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for ci in 0..cin {
                            for a in 0..kh {
                                for b in 0..kw {
                                    let y = (i * g.stride[0] + a) as isize - g.padding[0] as isize;
                                    let z = (j * g.stride[1] + b) as isize - g.padding[1] as isize;
                                    if y >= 0 && z >= 0 && (y as usize) < h && (z as usize) < w {
                                        acc += weight(co, ci, a, b) * x(ci, y as usize, z as usize);
                                    }
                                }
                            }
                        }
                        out[(co * oh + i) * ow + j] = acc;
                    }
                }
            }
        }
        Direction::Up => {
            for ci in 0..cin {
                for i in 0..h {
                    for j in 0..w {
                        for co in 0..cout {
                            for a in 0..kh {
                                for b in 0..kw {
                                    let y = (i * g.stride[0] + a) as isize - g.padding[0] as isize;
                                    let z = (j * g.stride[1] + b) as isize - g.padding[1] as isize;
                                    if y >= 0 && z >= 0 && (y as usize) < oh && (z as usize) < ow {
                                        out[(co * oh + y as usize) * ow + z as usize] +=
                                            weight(ci, co, a, b) * x(ci, i, j);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for co in 0..cout {
        let bias = Complex64::new(layer.params.bias_re[co], layer.params.bias_im[co]);
        out[co * oh * ow..(co + 1) * oh * ow]
            .iter_mut()
            .for_each(|v| *v += bias);
    }
    ComplexTensor::from_parts(
        shape,
        out.iter().map(|c| c.re).collect(),
        out.iter().map(|c| c.im).collect(),
    )
    .unwrap()
}

// ---- word-level edit distance ----

/// Textbook full-matrix Levenshtein distance.
pub fn dp_edit_distance(a: &[String], b: &[String]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}
