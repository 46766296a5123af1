//! Lossless entropy coding for quantized neural-network weights.
//!
//! The pipeline: quantize each layer with a zero-point uniform quantizer
//! ([`quantizer`]), optionally pick per-layer bin counts against a total
//! entropy target ([`allocation`]), split the symbols into per-channel
//! streams coded by one shared tabled-ANS automaton ([`tans`], [`stream`]),
//! and serialize everything into a bit-exact archive ([`container`]).
//!
//! Entropy statistics and the table-size rate-gap bound live in
//! [`distributions`].

pub mod allocation;
mod bitio;
pub mod container;
pub mod distributions;
mod error;
mod par;
pub mod quantizer;
pub mod stream;
pub mod tans;

pub use error::{Error, Result};

/// A named row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(Error::ShapeMismatch {
                shape,
                count: data.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            shape,
            data,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.data.len()
    }
}
