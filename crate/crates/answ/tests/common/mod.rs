//! Shared fixtures and independent oracles for the integration suites.
//!
//! Everything here is deliberately implementation-independent: the Huffman
//! coder, the even (no-zero-point) quantizer and the exact-composition
//! sampler exist to check the production code from the outside.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use answ::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_weights(n: usize, sigma: f64, seed: u64) -> Vec<f32> {
    let normal = Normal::new(0.0f64, sigma).unwrap();
    let mut r = rng(seed);
    (0..n).map(|_| normal.sample(&mut r) as f32).collect()
}

/// A symbol sequence whose histogram equals `counts` exactly, in a seeded
/// shuffled order.
pub fn exact_composition(counts: &[u64], seed: u64) -> Vec<u8> {
    let mut symbols = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for (s, &c) in counts.iter().enumerate() {
        symbols.extend(std::iter::repeat(s as u8).take(c as usize));
    }
    symbols.shuffle(&mut rng(seed));
    symbols
}

/// Canonical Huffman code lengths for the positive-count symbols.
/// A single-symbol alphabet still pays one bit per symbol.
pub fn huffman_code_lengths(counts: &[u64]) -> Vec<u32> {
    #[derive(Clone)]
    enum Node {
        Leaf(usize),
        Join(usize, usize),
    }
    let mut nodes: Vec<Node> = Vec::new();
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    for (s, &c) in counts.iter().enumerate() {
        if c > 0 {
            nodes.push(Node::Leaf(s));
            heap.push(Reverse((c, nodes.len() - 1)));
        }
    }
    let mut lengths = vec![0u32; counts.len()];
    if heap.is_empty() {
        return lengths;
    }
    if heap.len() == 1 {
        let Reverse((_, idx)) = heap.pop().unwrap();
        if let Node::Leaf(s) = nodes[idx] {
            lengths[s] = 1;
        }
        return lengths;
    }
    while heap.len() > 1 {
        let Reverse((w1, n1)) = heap.pop().unwrap();
        let Reverse((w2, n2)) = heap.pop().unwrap();
        nodes.push(Node::Join(n1, n2));
        heap.push(Reverse((w1 + w2, nodes.len() - 1)));
    }
    let Reverse((_, root)) = heap.pop().unwrap();
    let mut stack = vec![(root, 0u32)];
    while let Some((idx, depth)) = stack.pop() {
        match nodes[idx] {
            Node::Leaf(s) => lengths[s] = depth.max(1),
            Node::Join(a, b) => {
                stack.push((a, depth + 1));
                stack.push((b, depth + 1));
            }
        }
    }
    lengths
}

/// Total Huffman-coded size of data with the given composition, in bits.
pub fn huffman_total_bits(counts: &[u64]) -> u64 {
    let lengths = huffman_code_lengths(counts);
    counts
        .iter()
        .zip(&lengths)
        .map(|(&c, &len)| c * u64::from(len))
        .sum()
}

/// Even-bin comparison quantizer: four levels, same step as a 5-bin
/// zero-point quantizer over the same scale, levels offset half a step so
/// none of them is zero. Cells are `(-inf,-a/2) [-a/2,0) [0,a/2) [a/2,inf)`
/// with levels at the cell centers `-3a/4, -a/4, a/4, 3a/4`.
pub fn quantize_even4(weights: &[f32], scale: f64) -> Vec<u8> {
    let step = scale / 2.0;
    weights
        .iter()
        .map(|&w| {
            let cell = (f64::from(w) / step).floor();
            (cell.clamp(-2.0, 1.0) + 2.0) as u8
        })
        .collect()
}

/// The fixed synthetic model used by the size-oriented criteria: eight
/// Gaussian conv-like layers of 64k weights each, 8 channels on axis 1
/// (8192 symbols per stream).
pub fn synthetic_model(seed: u64) -> Vec<Tensor> {
    let shape = vec![8usize, 8, 32, 32];
    let n: usize = shape.iter().product();
    (0..8)
        .map(|i| {
            Tensor::new(
                format!("layer{i:02}"),
                shape.clone(),
                gaussian_weights(n, 0.05, seed.wrapping_add(i as u64)),
            )
            .unwrap()
        })
        .collect()
}

/// Bin counts paired with [`synthetic_model`] layers.
pub fn synthetic_model_bins() -> Vec<usize> {
    vec![5, 7, 9, 11, 13, 5, 7, 9]
}
