//! Layer-level coding: split a quantized tensor into per-channel streams,
//! encode them against one shared table, and decode them independently.
//!
//! All streams of a layer share a single normalized histogram, so one 3l-byte
//! LUT serves every stream. Streams carry no cross-stream state: any decode
//! schedule (sequential, reversed, concurrent) reconstructs the same tensor.

use crate::distributions::histogram;
use crate::error::{Error, Result};
use crate::par::try_map_indexed;
use crate::quantizer::{self, QuantizerSpec};
use crate::tans::{
    build_tables, decode_with_stats, encode, normalize_freqs, DecodeStats, EncodedStream,
    NormalizedHistogram,
};
use crate::Tensor;

/// Compressed form of one layer.
#[derive(Debug, Clone)]
pub struct LayerBundle {
    pub layer_id: String,
    pub tensor_shape: Vec<usize>,
    pub split_axis: usize,
    pub payload: LayerPayload,
}

/// Either tANS streams against a shared table, or raw 8-bit symbols for
/// layers that stay uncompressed.
#[derive(Debug, Clone)]
pub enum LayerPayload {
    Tans {
        quantizer: QuantizerSpec,
        histogram: NormalizedHistogram,
        streams: Vec<EncodedStream>,
    },
    Raw {
        scale: f64,
        bytes: Vec<u8>,
    },
}

impl LayerBundle {
    pub fn weight_count(&self) -> usize {
        self.tensor_shape.iter().product()
    }

    pub fn is_uncompressed(&self) -> bool {
        matches!(self.payload, LayerPayload::Raw { .. })
    }

    pub fn stream_count(&self) -> usize {
        match &self.payload {
            LayerPayload::Tans { streams, .. } => streams.len(),
            LayerPayload::Raw { .. } => 0,
        }
    }

    /// Longest stream in symbols; the lockstep (SIMD-style) decode makespan.
    pub fn makespan(&self) -> u64 {
        match &self.payload {
            LayerPayload::Tans { streams, .. } => {
                streams.iter().map(|s| s.symbol_count).max().unwrap_or(0)
            }
            LayerPayload::Raw { bytes, .. } => bytes.len() as u64,
        }
    }

    fn validate(&self) -> Result<()> {
        let count = self.weight_count();
        match &self.payload {
            LayerPayload::Tans { streams, .. } => {
                let total: u64 = streams.iter().map(|s| s.symbol_count).sum();
                if total != count as u64 {
                    return Err(Error::ShapeMismatch {
                        shape: self.tensor_shape.clone(),
                        count: total as usize,
                    });
                }
                if self.split_axis >= self.tensor_shape.len() {
                    return Err(Error::AxisOutOfRange {
                        axis: self.split_axis,
                        rank: self.tensor_shape.len(),
                    });
                }
                if streams.len() != 1 && streams.len() != self.tensor_shape[self.split_axis] {
                    return Err(Error::ShapeMismatch {
                        shape: self.tensor_shape.clone(),
                        count: streams.len(),
                    });
                }
            }
            LayerPayload::Raw { bytes, .. } => {
                if bytes.len() != count {
                    return Err(Error::ShapeMismatch {
                        shape: self.tensor_shape.clone(),
                        count: bytes.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn check_axis(shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::AxisOutOfRange {
            axis,
            rank: shape.len(),
        });
    }
    Ok(())
}

fn check_shape(shape: &[usize], count: usize) -> Result<()> {
    let product: usize = shape.iter().product();
    if shape.is_empty() || product != count {
        return Err(Error::ShapeMismatch {
            shape: shape.to_vec(),
            count,
        });
    }
    Ok(())
}

/// Partitions a row-major tensor into one sequence per index along `axis`,
/// each keeping row-major order.
pub fn split_streams(symbols: &[u8], shape: &[usize], axis: usize) -> Result<Vec<Vec<u8>>> {
    check_axis(shape, axis)?;
    check_shape(shape, symbols.len())?;
    let extent = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let per_stream = symbols.len() / extent;
    let mut streams = vec![Vec::with_capacity(per_stream); extent];
    for (flat, &sym) in symbols.iter().enumerate() {
        streams[(flat / inner) % extent].push(sym);
    }
    Ok(streams)
}

/// Inverse of [`split_streams`].
pub fn merge_streams(streams: &[Vec<u8>], shape: &[usize], axis: usize) -> Result<Vec<u8>> {
    check_axis(shape, axis)?;
    let count: usize = streams.iter().map(Vec::len).sum();
    check_shape(shape, count)?;
    let extent = shape[axis];
    if streams.len() != extent {
        return Err(Error::ShapeMismatch {
            shape: shape.to_vec(),
            count: streams.len(),
        });
    }
    let inner: usize = shape[axis + 1..].iter().product();
    let mut cursors = vec![0usize; extent];
    let mut out = Vec::with_capacity(count);
    for flat in 0..count {
        let stream = (flat / inner) % extent;
        let sym = *streams[stream]
            .get(cursors[stream])
            .ok_or(Error::CorruptStream("stream shorter than its slice"))?;
        cursors[stream] += 1;
        out.push(sym);
    }
    Ok(out)
}

/// Quantizes and entropy-codes one layer.
///
/// A single histogram over the whole layer feeds one shared table.
/// `parallel = true` makes one stream per index along `axis`; otherwise the
/// flat tensor becomes a single stream.
pub fn encode_layer(
    tensor: &Tensor,
    spec: &QuantizerSpec,
    l: usize,
    axis: usize,
    parallel: bool,
) -> Result<LayerBundle> {
    if tensor.data.is_empty() {
        return Err(Error::EmptyTensor);
    }
    check_shape(&tensor.shape, tensor.data.len())?;
    check_axis(&tensor.shape, axis)?;
    let symbols = quantizer::quantize(&tensor.data, spec);
    let dist = histogram(&symbols, spec.bins())?;
    let hist = normalize_freqs(&dist, l)?;
    let (enc, _) = build_tables(&hist);

    let split = if parallel {
        split_streams(&symbols, &tensor.shape, axis)?
    } else {
        vec![symbols]
    };
    let streams = try_map_indexed(&split, |_, chunk| encode(chunk, &enc))?;

    let bundle = LayerBundle {
        layer_id: tensor.name.clone(),
        tensor_shape: tensor.shape.clone(),
        split_axis: axis,
        payload: LayerPayload::Tans {
            quantizer: spec.clone(),
            histogram: hist,
            streams,
        },
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Stores a layer as raw 8-bit symbols with no table, for layers kept
/// uncompressed. Scale is max-abs.
pub fn encode_layer_raw(tensor: &Tensor) -> Result<LayerBundle> {
    if tensor.data.is_empty() {
        return Err(Error::EmptyTensor);
    }
    check_shape(&tensor.shape, tensor.data.len())?;
    let scale = tensor
        .data
        .iter()
        .map(|&w| f64::from(w).abs())
        .fold(0.0f64, f64::max);
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::DegenerateScale);
    }
    Ok(LayerBundle {
        layer_id: tensor.name.clone(),
        tensor_shape: tensor.shape.clone(),
        split_axis: 0,
        payload: LayerPayload::Raw {
            scale,
            bytes: quantizer::quantize_u8(&tensor.data, scale),
        },
    })
}

/// Decodes a bundle back to its symbol tensor (row-major).
pub fn decode_layer(bundle: &LayerBundle) -> Result<Vec<u8>> {
    decode_layer_with_stats(bundle).map(|(symbols, _)| symbols)
}

/// [`decode_layer`] plus per-stream operation counters.
pub fn decode_layer_with_stats(bundle: &LayerBundle) -> Result<(Vec<u8>, Vec<DecodeStats>)> {
    bundle.validate()?;
    match &bundle.payload {
        LayerPayload::Raw { bytes, .. } => Ok((bytes.clone(), Vec::new())),
        LayerPayload::Tans {
            histogram, streams, ..
        } => {
            let (_, dec) = build_tables(histogram);
            let decoded = try_map_indexed(streams, |index, stream| {
                decode_with_stats(stream, &dec, stream.symbol_count as usize).map_err(|e| {
                    Error::StreamDecode {
                        index,
                        source: Box::new(e),
                    }
                })
            })?;
            let mut stats = Vec::with_capacity(decoded.len());
            let mut chunks = Vec::with_capacity(decoded.len());
            for (symbols, s) in decoded {
                chunks.push(symbols);
                stats.push(s);
            }
            let symbols = if chunks.len() == 1 {
                chunks.into_iter().next().unwrap()
            } else {
                merge_streams(&chunks, &bundle.tensor_shape, bundle.split_axis)?
            };
            Ok((symbols, stats))
        }
    }
}

/// Decodes and dequantizes a bundle back to weights.
pub fn dequantize_layer(bundle: &LayerBundle) -> Result<Tensor> {
    let symbols = decode_layer(bundle)?;
    let data = match &bundle.payload {
        LayerPayload::Tans { quantizer: q, .. } => quantizer::dequantize(&symbols, q)?,
        LayerPayload::Raw { scale, .. } => quantizer::dequantize_u8(&symbols, *scale),
    };
    Ok(Tensor {
        name: bundle.layer_id.clone(),
        shape: bundle.tensor_shape.clone(),
        data,
    })
}

/// Exact byte accounting of a bundle's serialized form.
///
/// `total_bytes` equals the length of the layer's record in the archive;
/// the container tests hold the two implementations to byte equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    /// Entropy-coded (or raw) payload bytes, streams byte-aligned.
    pub payload_bytes: usize,
    /// Per-stream headers: final state, bit length, symbol count.
    pub stream_header_bytes: usize,
    /// Table descriptor: table size field plus normalized frequencies.
    pub table_bytes: usize,
    /// Name, shape, flags, quantizer fields and the stream count.
    pub metadata_bytes: usize,
    pub total_bytes: usize,
}

/// Fixed serialized cost of one stream header in bytes.
pub const STREAM_HEADER_BYTES: usize = 2 + 4 + 4;

pub fn bundle_size_report(bundle: &LayerBundle) -> SizeReport {
    let common_meta = 2 + bundle.layer_id.len() // name
        + 1 + 4 * bundle.tensor_shape.len()     // shape
        + 1                                     // flags
        + 2 + 8; // bins + scale
    let (payload_bytes, stream_header_bytes, table_bytes, metadata_bytes) = match &bundle.payload {
        LayerPayload::Tans {
            quantizer: q,
            streams,
            ..
        } => (
            streams
                .iter()
                .map(|s| s.payload.len())
                .sum::<usize>(),
            streams.len() * STREAM_HEADER_BYTES,
            2 + 2 * q.bins(),
            common_meta + 4, // + stream count
        ),
        LayerPayload::Raw { bytes, .. } => (bytes.len(), 0, 0, common_meta),
    };
    SizeReport {
        payload_bytes,
        stream_header_bytes,
        table_bytes,
        metadata_bytes,
        total_bytes: payload_bytes + stream_header_bytes + table_bytes + metadata_bytes,
    }
}
