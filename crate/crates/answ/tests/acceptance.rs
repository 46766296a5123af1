//! Acceptance suite: one test per release criterion, each printing a PASS
//! line (visible with `--nocapture`). Tolerances are pinned in the asserts.

mod common;

use std::time::Instant;

use rand::Rng;

use answ::allocation::{allocate_weights, entropy_table, AllocationConfig, PrecisionParams};
use answ::allocation::{entropy_loss, entropy_loss_grad, LayerPrecision};
use answ::container::{read_model, write_model};
use answ::distributions::{
    delta_h_bound, entropy_bound_bytes, histogram, shannon_entropy, Distribution,
};
use answ::quantizer::{make_quantizer, quantize, QuantizerSpec, ScalePolicy};
use answ::stream::{encode_layer, encode_layer_raw, LayerBundle, LayerPayload};
use answ::tans::{build_tables, decode, encode, lut_footprint, measured_rate, normalize_freqs};
use answ::{Error, Tensor};

use common::*;

/// Criterion 1: lossless round-trips across alphabet sizes 2..256, table
/// sizes {64,128,256,1024} and lengths 0..100000; 10^4 cases, zero failures,
/// under 60 s.
#[test]
fn c01_losslessness_property_sweep() {
    let start = Instant::now();
    let mut r = rng(0xA11CE);
    let table_sizes = [64usize, 128, 256, 1024];
    let cases = 10_000usize;
    for case in 0..cases {
        let l = table_sizes[case % table_sizes.len()];
        let alphabet = r.random_range(2..=l.min(256));
        let counts: Vec<u64> = (0..alphabet).map(|_| r.random_range(1..=1000)).collect();
        let dist = Distribution::from_counts(counts).unwrap();
        let hist = normalize_freqs(&dist, l).unwrap();
        let (enc, dec) = build_tables(&hist);

        let len = match case {
            0 => 0usize,
            1 => 100_000,
            _ => {
                let exp: f64 = r.random_range(0.0..17.0);
                (exp.exp2() as usize).min(100_000)
            }
        };
        let symbols: Vec<u8> = (0..len)
            .map(|_| r.random_range(0..alphabet as u16) as u8)
            .collect();

        let stream = encode(&symbols, &enc).unwrap();
        let back = decode(&stream, &dec, len).unwrap();
        assert_eq!(back, symbols, "case {case}: alphabet {alphabet}, l {l}, len {len}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "sweep took {elapsed:.1} s");
    println!("acceptance 01 losslessness ({cases} cases, {elapsed:.1} s): PASS");
}

/// Criterion 2: for p = (0.9, 0.1) at n = 10^6 and l = 256, the measured
/// rate is within 0.01 bits of H and within twice the rate-gap bound.
#[test]
fn c02_rate_close_to_entropy() {
    let start = Instant::now();
    const H: f64 = 0.468_995_593_589_281_2; // -0.9 log2 0.9 - 0.1 log2 0.1
    let counts = [900_000u64, 100_000];
    let symbols = exact_composition(&counts, 0xBEEF);
    let dist = Distribution::from_counts(counts.to_vec()).unwrap();
    assert!((shannon_entropy(&dist).unwrap() - H).abs() < 1e-12);

    let hist = normalize_freqs(&dist, 256).unwrap();
    let (enc, dec) = build_tables(&hist);
    let stream = encode(&symbols, &enc).unwrap();
    assert_eq!(decode(&stream, &dec, symbols.len()).unwrap(), symbols);

    let rate = measured_rate(&stream).unwrap();
    let gap = rate - H;
    let bound = delta_h_bound(&dist, 256).unwrap();
    assert!(gap <= 0.01, "gap {gap} above 0.01 bits");
    assert!(gap <= 2.0 * bound, "gap {gap} above 2x bound {bound}");
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "rate check took {elapsed:.1} s");
    println!(
        "acceptance 02 rate vs entropy (gap {gap:.6} <= min(0.01, 2x{bound:.6})): PASS"
    );
}

fn compress_model(l: usize, parallel: bool) -> (Vec<LayerBundle>, usize) {
    let model = synthetic_model(0x30DE1);
    let bins = synthetic_model_bins();
    let bundles: Vec<LayerBundle> = model
        .iter()
        .zip(&bins)
        .map(|(t, &b)| {
            let spec = make_quantizer(&t.data, b, ScalePolicy::MaxAbs, &t.name).unwrap();
            encode_layer(t, &spec, l, 1, parallel).unwrap()
        })
        .collect();
    let bytes = write_model(&bundles).unwrap();
    (bundles, bytes.len())
}

/// Criterion 3: on the fixed synthetic model the archive shrinks strictly as
/// the table grows, and at l = 256 it sits within 3% of the entropy bound.
#[test]
fn c03_table_size_ordering_and_entropy_gap() {
    let (_, total64) = compress_model(64, true);
    let (_, total128) = compress_model(128, true);
    let (_, total256) = compress_model(256, true);
    assert!(
        total64 > total128 && total128 > total256,
        "sizes not strictly ordered: {total64} / {total128} / {total256}"
    );

    let model = synthetic_model(0x30DE1);
    let bins = synthetic_model_bins();
    let mut bound_bytes = 0.0f64;
    for (t, &b) in model.iter().zip(&bins) {
        let spec = make_quantizer(&t.data, b, ScalePolicy::MaxAbs, &t.name).unwrap();
        let symbols = quantize(&t.data, &spec);
        let dist = histogram(&symbols, b).unwrap();
        bound_bytes += entropy_bound_bytes(&dist, t.weight_count() as u64).unwrap();
    }
    let ratio = total256 as f64 / bound_bytes;
    assert!(ratio <= 1.03, "l=256 total is {ratio:.4}x the entropy bound");
    assert!(ratio >= 0.98, "archive below the entropy bound: {ratio:.4}");
    println!(
        "acceptance 03 table-size ordering ({total64} > {total128} > {total256} bytes, \
         gap {:.2}%): PASS",
        (ratio - 1.0) * 100.0
    );
}

/// Criterion 4: with >= 2048 symbols per stream, per-channel streams cost at
/// most 1% over a single stream.
#[test]
fn c04_parallelization_overhead() {
    let (bundles, parallel_total) = compress_model(256, true);
    let (_, single_total) = compress_model(256, false);
    for bundle in &bundles {
        let per_stream = bundle.weight_count() / bundle.stream_count();
        assert!(per_stream >= 2048, "fixture must keep streams long");
    }
    let ratio = parallel_total as f64 / single_total as f64;
    assert!(
        ratio <= 1.01,
        "parallel archive is {ratio:.4}x the single-stream archive"
    );
    println!(
        "acceptance 04 parallel overhead ({parallel_total} vs {single_total} bytes, \
         x{ratio:.4}): PASS"
    );
}

/// Criterion 5: the decode LUT costs exactly 3l bytes; 192 at l = 64.
#[test]
fn c05_lut_footprint() {
    for l in [2usize, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096] {
        let dist = Distribution::from_counts(vec![3, 1]).unwrap();
        let hist = normalize_freqs(&dist, l).unwrap();
        let (_, dec) = build_tables(&hist);
        assert_eq!(lut_footprint(&dec), 3 * l);
    }
    let dist = Distribution::from_counts(vec![9, 1]).unwrap();
    let (_, dec) = build_tables(&normalize_freqs(&dist, 64).unwrap());
    assert_eq!(lut_footprint(&dec), 192);
    println!("acceptance 05 LUT footprint (3l, 192 bytes at l=64): PASS");
}

/// Criterion 6: a 0.9-skewed 5-symbol source compresses below one bit per
/// weight at the container level, strictly beating a Huffman oracle that
/// cannot go under one bit.
#[test]
fn c06_sub_binary_rate_beats_huffman() {
    let counts = [180_000u64, 5_000, 5_000, 5_000, 5_000];
    let n: u64 = counts.iter().sum();
    let symbols = exact_composition(&counts, 0x5B1);

    // weights sitting exactly on the 5-bin reconstruction levels
    let spec = QuantizerSpec::new(5, 1.0, "skewed").unwrap();
    let weights: Vec<f32> = symbols
        .iter()
        .map(|&s| (f64::from(s) - 2.0) as f32 * 0.5)
        .collect();
    let tensor = Tensor::new("skewed", vec![10, 20, 1000], weights).unwrap();
    assert_eq!(quantize(&tensor.data, &spec), symbols);

    let bundle = encode_layer(&tensor, &spec, 256, 1, true).unwrap();
    let archive = write_model(&[bundle]).unwrap();
    let container_bits_per_weight = archive.len() as f64 * 8.0 / n as f64;

    let huffman_bits = huffman_total_bits(&counts);
    let huffman_rate = huffman_bits as f64 / n as f64;
    assert!(huffman_rate >= 1.0, "huffman oracle under one bit");
    assert!(
        container_bits_per_weight < 1.0,
        "container rate {container_bits_per_weight:.4} not sub-binary"
    );
    assert!(container_bits_per_weight < huffman_rate);
    println!(
        "acceptance 06 sub-binary rate ({container_bits_per_weight:.4} bits/weight vs \
         Huffman {huffman_rate:.4}): PASS"
    );
}

/// Criterion 7: the analytic gradient matches central finite differences of
/// the loss within 1e-8 over 100 random configurations.
#[test]
fn c07_gradient_matches_finite_differences() {
    let mut r = rng(0x6EAD);
    let mut checked = 0usize;
    while checked < 100 {
        let layer_count = r.random_range(1..=5);
        let lambda_min = 1.0;
        let lambda_max = 15.0;
        let layers: Vec<LayerPrecision> = (0..layer_count)
            .map(|i| {
                let entropy_by_bins = ((lambda_min as i64)..=(lambda_max as i64))
                    .map(|g| ((2 * g + 1) as usize, r.random_range(0.0..5.0)))
                    .collect();
                let grid = r.random_range(1..15) as f64;
                let frac = r.random_range(0.05..0.95);
                LayerPrecision {
                    name: format!("l{i}"),
                    lambda: grid + frac,
                    weight_count: r.random_range(1_000..1_000_000),
                    entropy_by_bins,
                    mse_by_bins: Default::default(),
                }
            })
            .collect();
        let params = PrecisionParams {
            layers,
            lambda_min,
            lambda_max,
        };
        let total: f64 = params
            .layers
            .iter()
            .map(|l| {
                let lf = l.lambda.floor() as i64;
                let frac = l.lambda - lf as f64;
                let lo = l.entropy_by_bins[&((2 * lf + 1) as usize)];
                let hi = l.entropy_by_bins[&((2 * lf + 3) as usize)];
                l.weight_count as f64 * ((1.0 - frac) * lo + frac * hi)
            })
            .sum();
        let target = total * r.random_range(0.3..1.7);
        if (total - target).abs() < 1e-3 * target {
            continue; // keep the sign of (sum - target) constant across +-eps
        }
        let cfg = AllocationConfig::new(target / 8.0);
        let grads = entropy_loss_grad(&params, &cfg).unwrap();
        let eps = 1e-4;
        for i in 0..params.layers.len() {
            let mut plus = params.clone();
            plus.layers[i].lambda += eps;
            let mut minus = params.clone();
            minus.layers[i].lambda -= eps;
            let fd = (entropy_loss(&plus, &cfg).unwrap()
                - entropy_loss(&minus, &cfg).unwrap())
                / (2.0 * eps);
            assert!(
                (grads[i] - fd).abs() <= 1e-8,
                "config {checked}, layer {i}: analytic {} vs fd {fd}",
                grads[i]
            );
        }
        checked += 1;
    }
    println!("acceptance 07 gradient vs finite differences (100 configs): PASS");
}

/// Criterion 8: at sigma = 0.25 * scale the 5-bin zero-point quantizer
/// produces lower-entropy symbols than the equal-step 4-level quantizer
/// with no zero level.
#[test]
fn c08_zero_point_entropy_advantage() {
    let n = 100_000;
    let scale = 1.0;
    let weights = gaussian_weights(n, 0.25 * scale, 0x0DD);

    let spec = QuantizerSpec::new(5, scale, "g").unwrap();
    let h5 = shannon_entropy(&histogram(&quantize(&weights, &spec), 5).unwrap()).unwrap();
    let h4 =
        shannon_entropy(&histogram(&quantize_even4(&weights, scale), 4).unwrap()).unwrap();
    assert!(
        h5 < h4,
        "zero-point entropy {h5:.4} not below no-zero entropy {h4:.4}"
    );
    println!("acceptance 08 zero-point entropy ({h5:.4} < {h4:.4} bits): PASS");
}

/// Criterion 9: a single-layer target of |W| * H(13 bins) converges to 13
/// bins; infeasible targets fail loudly instead of clamping.
#[test]
fn c09_allocation_convergence_and_feasibility() {
    let n = 65_536;
    let tensor = Tensor::new("solo", vec![n], gaussian_weights(n, 0.05, 0xA110C)).unwrap();
    let grid_bins: Vec<usize> = (1..=15).map(|g| 2 * g + 1).collect();
    let table = entropy_table(&tensor.data, &grid_bins, ScalePolicy::MaxAbs).unwrap();

    // sweep oracle: entropy strictly increases with bins on this tensor, so
    // |W| * H(13) is hit by 13 bins alone
    let mut prev = f64::NEG_INFINITY;
    for &b in &grid_bins {
        assert!(table[&b] > prev, "entropy not strictly increasing at {b} bins");
        prev = table[&b];
    }

    let target_bytes = n as f64 * table[&13] / 8.0;
    let result =
        allocate_weights(&[tensor.clone()], ScalePolicy::MaxAbs, &AllocationConfig::new(target_bytes))
            .unwrap();
    assert!(result.converged, "allocation did not converge");
    assert_eq!(result.per_layer[0].bins, 13);

    let too_high = AllocationConfig::new(n as f64 * table[&31] * 1.01 / 8.0);
    match allocate_weights(&[tensor.clone()], ScalePolicy::MaxAbs, &too_high) {
        Err(Error::InfeasibleTarget { min_bits, max_bits, .. }) => {
            assert!((min_bits - n as f64 * table[&3]).abs() < 1e-6);
            assert!((max_bits - n as f64 * table[&31]).abs() < 1e-6);
        }
        other => panic!("expected infeasible target, got {other:?}"),
    }
    let too_low = AllocationConfig::new(n as f64 * table[&3] * 0.5 / 8.0);
    assert!(matches!(
        allocate_weights(&[tensor], ScalePolicy::MaxAbs, &too_low),
        Err(Error::InfeasibleTarget { .. })
    ));
    println!("acceptance 09 allocation convergence (13 bins, infeasible rejected): PASS");
}

/// Criterion 10: archives survive exhaustive truncation with diagnostics,
/// and read(write(m)) is the identity on 100 random models.
#[test]
fn c10_container_robustness() {
    let mut r = rng(0xC0FFEE);
    for model_idx in 0..100 {
        let layer_count = r.random_range(1..=3);
        let mut bundles = Vec::new();
        for li in 0..layer_count {
            let rank = r.random_range(1..=4);
            let shape: Vec<usize> = (0..rank).map(|_| r.random_range(1..=6)).collect();
            let n: usize = shape.iter().product();
            let name = format!("m{model_idx}_l{li}");
            let data = gaussian_weights(n, 0.3, r.random());
            let tensor = Tensor::new(&name, shape.clone(), data).unwrap();
            let bundle = if r.random_range(0..5) == 0 {
                encode_layer_raw(&tensor).unwrap()
            } else {
                let bins = [3usize, 5, 7][r.random_range(0..3)];
                let spec = make_quantizer(&tensor.data, bins, ScalePolicy::MaxAbs, &name).unwrap();
                let axis = r.random_range(0..rank);
                encode_layer(&tensor, &spec, 64, axis, r.random()).unwrap()
            };
            bundles.push(bundle);
        }
        let bytes = write_model(&bundles).unwrap();
        let back = read_model(&bytes).unwrap();
        assert_eq!(write_model(&back).unwrap(), bytes, "model {model_idx}");
        for (a, b) in bundles.iter().zip(&back) {
            assert_eq!(a.layer_id, b.layer_id);
            assert_eq!(a.tensor_shape, b.tensor_shape);
            assert_eq!(a.split_axis, b.split_axis);
            match (&a.payload, &b.payload) {
                (
                    LayerPayload::Tans { streams: s1, .. },
                    LayerPayload::Tans { streams: s2, .. },
                ) => assert_eq!(s1, s2),
                (LayerPayload::Raw { bytes: b1, .. }, LayerPayload::Raw { bytes: b2, .. }) => {
                    assert_eq!(b1, b2)
                }
                _ => panic!("payload kind changed"),
            }
        }

        if model_idx == 0 {
            for cut in 0..bytes.len() {
                match read_model(&bytes[..cut]) {
                    Err(_) => {}
                    Ok(_) => panic!("prefix of {cut}/{} bytes parsed", bytes.len()),
                }
            }
        }
    }
    println!("acceptance 10 container robustness (100 models, full truncation fuzz): PASS");
}
