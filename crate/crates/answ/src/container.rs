//! Bit-exact model archive and the tensor manifest.
//!
//! Archive layout (all integers little-endian):
//!
//! ```text
//! magic "ANSW" | version u16 | layer_count u16
//! per layer:
//!   name_len u16 | name (UTF-8)
//!   rank u8 | dim u32 * rank
//!   flags u8            bit 0: 1 = tANS streams, 0 = raw bytes
//!                       bits 4..7: split axis
//!   bins u16 | scale f64
//!   tANS layers:
//!     table_size u16
//!     freq u16 * bins   normalized slot counts, zero = absent symbol
//!     stream_count u32
//!     per stream: final_state u16 | bit_length u32 | symbol_count u32
//!     payloads, each stream byte-aligned
//!   raw layers:
//!     one byte per weight
//! ```
//!
//! Every length a reader needs is declared before the bytes it governs, so a
//! layer can be skipped without decoding it. Decode tables are rebuilt from
//! the stored frequencies; the archive never stores the LUT itself.
//!
//! The manifest is a TOML file naming the raw tensors:
//!
//! ```toml
//! [[layers]]
//! name = "conv1"
//! shape = [64, 16, 3, 3]
//! data = "conv1.bin"
//! dtype = "f32"
//! ```
//!
//! `data` paths are resolved relative to the manifest file and point at
//! row-major little-endian f32 buffers.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::QuantizerSpec;
use crate::stream::{LayerBundle, LayerPayload};
use crate::tans::{EncodedStream, NormalizedHistogram, MAX_TABLE_SIZE};
use crate::Tensor;

pub const MAGIC: [u8; 4] = *b"ANSW";
pub const VERSION: u16 = 1;

/// Sentinel bin count marking a raw 8-bit layer with no table.
pub const RAW_BINS_SENTINEL: u16 = 256;

const FLAG_COMPRESSED: u8 = 0b0000_0001;
const MAX_RANK: usize = 15; // split axis travels in the flags high nibble

fn payload_len(bit_length: u64) -> usize {
    ((bit_length + 7) / 8) as usize
}

/// Serializes bundles into the archive byte stream. Deterministic: equal
/// inputs produce byte-identical archives on every platform.
pub fn write_model(bundles: &[LayerBundle]) -> Result<Vec<u8>> {
    if bundles.len() > usize::from(u16::MAX) {
        return Err(Error::InvalidConfig("too many layers for a u16 count"));
    }
    let mut seen = HashSet::new();
    for b in bundles {
        if !seen.insert(b.layer_id.as_str()) {
            return Err(Error::DuplicateLayer(b.layer_id.clone()));
        }
    }

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(bundles.len() as u16).to_le_bytes());

    for bundle in bundles {
        let name = bundle.layer_id.as_bytes();
        if name.len() > usize::from(u16::MAX) {
            return Err(Error::InvalidConfig("layer name too long"));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);

        let rank = bundle.tensor_shape.len();
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::InvalidConfig("tensor rank must be in 1..=15"));
        }
        out.push(rank as u8);
        for &dim in &bundle.tensor_shape {
            let dim = u32::try_from(dim)
                .map_err(|_| Error::InvalidConfig("dimension exceeds u32"))?;
            out.extend_from_slice(&dim.to_le_bytes());
        }

        if bundle.split_axis >= rank {
            return Err(Error::AxisOutOfRange {
                axis: bundle.split_axis,
                rank,
            });
        }
        let mut flags = (bundle.split_axis as u8) << 4;

        match &bundle.payload {
            LayerPayload::Tans {
                quantizer,
                histogram,
                streams,
            } => {
                flags |= FLAG_COMPRESSED;
                out.push(flags);
                out.extend_from_slice(&(quantizer.bins() as u16).to_le_bytes());
                out.extend_from_slice(&quantizer.scale().to_le_bytes());

                if histogram.alphabet_size() != quantizer.bins() {
                    return Err(Error::InvalidConfig(
                        "histogram alphabet must match the quantizer bins",
                    ));
                }
                out.extend_from_slice(&(histogram.table_size() as u16).to_le_bytes());
                for &f in histogram.freqs() {
                    out.extend_from_slice(&(f as u16).to_le_bytes());
                }

                out.extend_from_slice(&(streams.len() as u32).to_le_bytes());
                for s in streams {
                    let bits = u32::try_from(s.bit_length)
                        .map_err(|_| Error::InvalidConfig("stream exceeds u32 bits"))?;
                    let count = u32::try_from(s.symbol_count)
                        .map_err(|_| Error::InvalidConfig("stream exceeds u32 symbols"))?;
                    out.extend_from_slice(&s.final_state.to_le_bytes());
                    out.extend_from_slice(&bits.to_le_bytes());
                    out.extend_from_slice(&count.to_le_bytes());
                }
                for s in streams {
                    debug_assert_eq!(s.payload.len(), payload_len(s.bit_length));
                    out.extend_from_slice(&s.payload);
                }
            }
            LayerPayload::Raw { scale, bytes } => {
                out.push(flags);
                out.extend_from_slice(&RAW_BINS_SENTINEL.to_le_bytes());
                out.extend_from_slice(&scale.to_le_bytes());
                out.extend_from_slice(bytes);
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(Error::Truncated("length overflow"))?;
        if end > self.bytes.len() {
            return Err(Error::Truncated(what));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parses and validates an archive, rebuilding every layer bundle.
pub fn read_model(bytes: &[u8]) -> Result<Vec<LayerBundle>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let layer_count = r.u16("layer count")?;

    let mut bundles = Vec::with_capacity(usize::from(layer_count));
    let mut seen = HashSet::new();
    for _ in 0..layer_count {
        let name_len = usize::from(r.u16("name length")?);
        let name = std::str::from_utf8(r.take(name_len, "layer name")?)
            .map_err(|_| Error::InvalidArchive("layer name is not UTF-8".into()))?
            .to_owned();
        if !seen.insert(name.clone()) {
            return Err(Error::DuplicateLayer(name));
        }

        let rank = usize::from(r.u8("rank")?);
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::InvalidArchive(format!("rank {rank} out of range")));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut count: usize = 1;
        for _ in 0..rank {
            let dim = r.u32("dimension")? as usize;
            if dim == 0 {
                return Err(Error::InvalidArchive("zero-sized dimension".into()));
            }
            count = count
                .checked_mul(dim)
                .ok_or_else(|| Error::InvalidArchive("shape product overflow".into()))?;
            shape.push(dim);
        }

        let flags = r.u8("flags")?;
        let split_axis = usize::from(flags >> 4);
        let compressed = flags & FLAG_COMPRESSED != 0;
        if split_axis >= rank {
            return Err(Error::InvalidArchive(format!(
                "split axis {split_axis} out of range for rank {rank}"
            )));
        }

        let bins = r.u16("bins")?;
        let scale = r.f64("scale")?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArchive("scale must be positive".into()));
        }

        let payload = if compressed {
            let quantizer = QuantizerSpec::new(usize::from(bins), scale, name.clone())
                .map_err(|e| Error::InvalidArchive(format!("bad quantizer: {e}")))?;
            let l = usize::from(r.u16("table size")?);
            if !l.is_power_of_two() || l < 2 || l > MAX_TABLE_SIZE {
                return Err(Error::InvalidArchive(format!("bad table size {l}")));
            }
            let mut freqs = Vec::with_capacity(usize::from(bins));
            for _ in 0..bins {
                freqs.push(u32::from(r.u16("frequency")?));
            }
            let histogram = match NormalizedHistogram::new(l, freqs) {
                Ok(h) => h,
                Err(e @ Error::InvalidFreqSum { .. }) => return Err(e),
                Err(e) => return Err(Error::InvalidArchive(format!("bad table: {e}"))),
            };

            let stream_count = r.u32("stream count")? as usize;
            if stream_count != 1 && stream_count != shape[split_axis] {
                return Err(Error::InvalidArchive(format!(
                    "{stream_count} streams for axis extent {}",
                    shape[split_axis]
                )));
            }
            // 10 header bytes per stream must still fit; rejects forged
            // counts before any allocation sized by them.
            if stream_count > (bytes.len() - r.pos) / 10 {
                return Err(Error::Truncated("stream headers"));
            }
            let mut headers = Vec::with_capacity(stream_count);
            let mut symbol_total: u64 = 0;
            for _ in 0..stream_count {
                let final_state = r.u16("final state")?;
                let bit_length = u64::from(r.u32("bit length")?);
                let symbol_count = u64::from(r.u32("symbol count")?);
                if usize::from(final_state) < l || usize::from(final_state) >= 2 * l {
                    return Err(Error::InvalidArchive("final state outside range".into()));
                }
                symbol_total += symbol_count;
                headers.push((final_state, bit_length, symbol_count));
            }
            if symbol_total != count as u64 {
                return Err(Error::InvalidArchive(format!(
                    "streams hold {symbol_total} symbols, shape holds {count}"
                )));
            }
            let mut streams = Vec::with_capacity(stream_count);
            for (final_state, bit_length, symbol_count) in headers {
                let payload = r.take(payload_len(bit_length), "stream payload")?.to_vec();
                streams.push(EncodedStream {
                    payload,
                    bit_length,
                    final_state,
                    symbol_count,
                });
            }
            LayerPayload::Tans {
                quantizer,
                histogram,
                streams,
            }
        } else {
            if bins != RAW_BINS_SENTINEL {
                return Err(Error::InvalidArchive(format!(
                    "raw layer carries bins {bins}, expected {RAW_BINS_SENTINEL}"
                )));
            }
            LayerPayload::Raw {
                scale,
                bytes: r.take(count, "raw payload")?.to_vec(),
            }
        };

        bundles.push(LayerBundle {
            layer_id: name,
            tensor_shape: shape,
            split_axis,
            payload,
        });
    }

    if r.pos != bytes.len() {
        return Err(Error::InvalidArchive(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    Ok(bundles)
}

fn default_dtype() -> String {
    "f32".to_owned()
}

/// One manifest row: a named tensor backed by a raw binary file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: String,
    #[serde(default = "default_dtype")]
    pub dtype: String,
}

/// The parsed manifest: an ordered list of tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorManifest {
    pub layers: Vec<ManifestEntry>,
}

/// Parses and validates manifest text.
pub fn parse_manifest(text: &str) -> Result<TensorManifest> {
    let manifest: TensorManifest =
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    if manifest.layers.is_empty() {
        return Err(Error::Manifest("manifest lists no layers".into()));
    }
    let mut seen = HashSet::new();
    for entry in &manifest.layers {
        if !seen.insert(entry.name.as_str()) {
            return Err(Error::DuplicateLayer(entry.name.clone()));
        }
        if entry.shape.is_empty() || entry.shape.len() > MAX_RANK {
            return Err(Error::Manifest(format!(
                "layer {:?}: rank must be in 1..=15",
                entry.name
            )));
        }
        if entry.shape.iter().any(|&d| d == 0) {
            return Err(Error::Manifest(format!(
                "layer {:?}: zero-sized dimension",
                entry.name
            )));
        }
        if entry.dtype != "f32" {
            return Err(Error::Manifest(format!(
                "layer {:?}: unsupported dtype {:?} (only f32)",
                entry.name, entry.dtype
            )));
        }
    }
    Ok(manifest)
}

/// Renders a manifest back to TOML.
pub fn manifest_to_string(manifest: &TensorManifest) -> String {
    toml::to_string(manifest).expect("manifest serialization cannot fail")
}

/// Loads every tensor a manifest file references. File lengths are checked
/// against the declared shapes before any float is parsed.
pub fn load_tensors(manifest_path: &Path) -> Result<Vec<Tensor>> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| {
        Error::Manifest(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest = parse_manifest(&text)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut tensors = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let path = base.join(&entry.data);
        let meta = std::fs::metadata(&path).map_err(|e| {
            Error::Manifest(format!(
                "layer {:?}: data file {}: {e}",
                entry.name,
                path.display()
            ))
        })?;
        let count: usize = entry.shape.iter().product();
        let expected = 4 * count as u64;
        if meta.len() != expected {
            return Err(Error::LengthMismatch {
                path: path.display().to_string(),
                expected,
                actual: meta.len(),
            });
        }
        let bytes = std::fs::read(&path)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            data,
        });
    }
    Ok(tensors)
}

/// Writes a tensor as raw little-endian f32 bytes.
pub fn write_tensor_data(path: &Path, data: &[f32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(4 * data.len());
    for &w in data {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{make_quantizer, ScalePolicy};
    use crate::stream::{bundle_size_report, encode_layer, encode_layer_raw};

    fn sample_tensor(name: &str, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: (0..n)
                .map(|i| (((i * 37 + 11) % 101) as f32 / 50.0) - 1.0)
                .collect(),
        }
    }

    fn sample_bundle(name: &str, parallel: bool) -> LayerBundle {
        let t = sample_tensor(name, &[2, 4, 3, 3]);
        let spec = make_quantizer(&t.data, 5, ScalePolicy::MaxAbs, name).unwrap();
        encode_layer(&t, &spec, 64, 1, parallel).unwrap()
    }

    #[test]
    fn empty_model_is_eight_bytes() {
        let bytes = write_model(&[]).unwrap();
        assert_eq!(bytes.len(), 8);
        assert_eq!(&bytes[..4], b"ANSW");
        assert!(read_model(&bytes).unwrap().is_empty());
    }

    #[test]
    fn roundtrip_preserves_every_field() {
        let bundles = vec![sample_bundle("a", false), sample_bundle("b", true)];
        let bytes = write_model(&bundles).unwrap();
        let back = read_model(&bytes).unwrap();
        assert_eq!(back.len(), 2);
        for (orig, read) in bundles.iter().zip(&back) {
            assert_eq!(orig.layer_id, read.layer_id);
            assert_eq!(orig.tensor_shape, read.tensor_shape);
            assert_eq!(orig.split_axis, read.split_axis);
            match (&orig.payload, &read.payload) {
                (
                    LayerPayload::Tans {
                        quantizer: q1,
                        histogram: h1,
                        streams: s1,
                    },
                    LayerPayload::Tans {
                        quantizer: q2,
                        histogram: h2,
                        streams: s2,
                    },
                ) => {
                    assert_eq!(q1, q2);
                    assert_eq!(h1, h2);
                    assert_eq!(s1, s2);
                }
                _ => panic!("payload kind changed"),
            }
        }
        // byte-for-byte on re-write
        assert_eq!(write_model(&back).unwrap(), bytes);
    }

    #[test]
    fn raw_layer_roundtrip() {
        let t = sample_tensor("head", &[10, 4]);
        let bundle = encode_layer_raw(&t).unwrap();
        let bytes = write_model(&[bundle.clone()]).unwrap();
        let back = read_model(&bytes).unwrap();
        assert!(back[0].is_uncompressed());
        assert_eq!(write_model(&back).unwrap(), bytes);
    }

    #[test]
    fn report_total_matches_serialized_length() {
        for parallel in [false, true] {
            let bundle = sample_bundle("x", parallel);
            let report = bundle_size_report(&bundle);
            let bytes = write_model(&[bundle]).unwrap();
            assert_eq!(report.total_bytes, bytes.len() - 8);
        }
        let raw = encode_layer_raw(&sample_tensor("r", &[6, 6])).unwrap();
        let report = bundle_size_report(&raw);
        let bytes = write_model(&[raw]).unwrap();
        assert_eq!(report.total_bytes, bytes.len() - 8);
    }

    #[test]
    fn corrupted_magic_is_detected() {
        let mut bytes = write_model(&[sample_bundle("a", true)]).unwrap();
        bytes[0] = b'X';
        assert!(matches!(read_model(&bytes), Err(Error::BadMagic)));
    }

    #[test]
    fn unsupported_version_is_detected() {
        let mut bytes = write_model(&[]).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            read_model(&bytes),
            Err(Error::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn bad_freq_sum_is_detected() {
        let bundle = sample_bundle("a", false);
        let bytes = write_model(&[bundle.clone()]).unwrap();
        // frequencies start right after name/shape/flags/quantizer/l
        let name_len = bundle.layer_id.len();
        let freq_off = 8 + 2 + name_len + 1 + 4 * 4 + 1 + 2 + 8 + 2;
        let mut corrupted = bytes.clone();
        let f = u16::from_le_bytes([corrupted[freq_off], corrupted[freq_off + 1]]);
        corrupted[freq_off..freq_off + 2].copy_from_slice(&(f + 1).to_le_bytes());
        assert!(matches!(
            read_model(&corrupted),
            Err(Error::InvalidFreqSum { .. })
        ));
    }

    #[test]
    fn truncation_always_errors_cleanly() {
        let bundles = vec![sample_bundle("a", true), sample_bundle("b", false)];
        let bytes = write_model(&bundles).unwrap();
        for cut in 0..bytes.len() {
            let res = read_model(&bytes[..cut]);
            assert!(res.is_err(), "prefix of {cut} bytes parsed");
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = write_model(&[sample_bundle("a", true)]).unwrap();
        bytes.push(0);
        assert!(matches!(read_model(&bytes), Err(Error::InvalidArchive(_))));
    }

    #[test]
    fn duplicate_layer_names_rejected() {
        let bundles = vec![sample_bundle("a", false), sample_bundle("a", true)];
        assert!(matches!(
            write_model(&bundles),
            Err(Error::DuplicateLayer(_))
        ));
    }

    #[test]
    fn manifest_roundtrip_and_validation() {
        let text = r#"
            [[layers]]
            name = "conv1"
            shape = [4, 2]
            data = "conv1.bin"
        "#;
        let manifest = parse_manifest(text).unwrap();
        assert_eq!(manifest.layers[0].dtype, "f32");
        let rendered = manifest_to_string(&manifest);
        let again = parse_manifest(&rendered).unwrap();
        assert_eq!(again.layers[0].name, "conv1");
        assert_eq!(again.layers[0].shape, vec![4, 2]);
    }

    #[test]
    fn manifest_duplicate_names_rejected() {
        let text = r#"
            [[layers]]
            name = "a"
            shape = [2]
            data = "a.bin"

            [[layers]]
            name = "a"
            shape = [2]
            data = "b.bin"
        "#;
        assert!(matches!(
            parse_manifest(text),
            Err(Error::DuplicateLayer(_))
        ));
    }

    #[test]
    fn manifest_bad_dtype_rejected() {
        let text = r#"
            [[layers]]
            name = "a"
            shape = [2]
            data = "a.bin"
            dtype = "f64"
        "#;
        assert!(matches!(parse_manifest(text), Err(Error::Manifest(_))));
    }

    #[test]
    fn load_tensors_checks_length_first() {
        let dir = std::env::temp_dir().join(format!("answ-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let manifest_path = dir.join("m.toml");
        std::fs::write(
            &manifest_path,
            "[[layers]]\nname = \"t\"\nshape = [2, 2]\ndata = \"t.bin\"\n",
        )
        .unwrap();
        std::fs::write(dir.join("t.bin"), [0u8; 15]).unwrap();
        let err = load_tensors(&manifest_path).unwrap_err();
        assert!(matches!(err, Error::LengthMismatch { expected: 16, actual: 15, .. }));

        write_tensor_data(&dir.join("t.bin"), &[1.0, -1.0, 0.5, 0.0]).unwrap();
        let tensors = load_tensors(&manifest_path).unwrap();
        assert_eq!(tensors[0].data, vec![1.0, -1.0, 0.5, 0.0]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn load_tensors_missing_file() {
        let dir = std::env::temp_dir().join(format!("answ-miss-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let manifest_path = dir.join("m.toml");
        std::fs::write(
            &manifest_path,
            "[[layers]]\nname = \"t\"\nshape = [2]\ndata = \"absent.bin\"\n",
        )
        .unwrap();
        assert!(matches!(
            load_tensors(&manifest_path),
            Err(Error::Manifest(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
