use std::collections::HashSet;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use answ::allocation::{allocate_weights, bins_for_lambda, AllocationConfig};
use answ::container::{
    load_tensors, manifest_to_string, read_model, write_model, write_tensor_data, ManifestEntry,
    TensorManifest,
};
use answ::distributions::{entropy_bound_bytes, histogram, shannon_entropy, Distribution};
use answ::quantizer::{self, make_quantizer, QuantizerSpec};
use answ::stream::{
    bundle_size_report, decode_layer_with_stats, encode_layer, encode_layer_raw, LayerBundle,
};
use answ::tans::{build_tables, lut_footprint, normalize_freqs};
use answ::Tensor;

use crate::output::{self, Table};
use crate::{
    AllocateArgs, BenchDecodeArgs, CliError, CompressArgs, DecompressArgs, QuantizeArgs,
    StatsArgs, TableArgs,
};

const MEGABYTE: f64 = 1e6; // decimal MB throughout the reports

fn fixed_width_bits(bins: usize) -> f64 {
    (bins as f64).log2().ceil()
}

/// File-system-safe layer file name, made unique within `used`.
fn tensor_file_name(name: &str, used: &mut HashSet<String>) -> String {
    let mut base: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    if base.is_empty() {
        base = "layer".to_string();
    }
    let mut candidate = format!("{base}.bin");
    let mut suffix = 2;
    while !used.insert(candidate.clone()) {
        candidate = format!("{base}_{suffix}.bin");
        suffix += 1;
    }
    candidate
}

pub(crate) fn stats(args: StatsArgs) -> Result<(), CliError> {
    let tensors = load_tensors(&args.manifest)?;
    let bins = args.lambda.map(bins_for_lambda).unwrap_or(args.bins);

    let mut rows = Vec::new();
    let mut total_weights = 0u64;
    let mut total_entropy_mb = 0.0;
    let mut total_quantized_mb = 0.0;
    for t in &tensors {
        let spec = make_quantizer(&t.data, bins, args.scale_policy, &t.name)?;
        let symbols = quantizer::quantize(&t.data, &spec);
        let dist = histogram(&symbols, bins)?;
        let h = shannon_entropy(&dist)?;
        let count = t.weight_count() as u64;
        let entropy_mb = entropy_bound_bytes(&dist, count)? / MEGABYTE;
        let quantized_mb = count as f64 * fixed_width_bits(bins) / 8.0 / MEGABYTE;
        total_weights += count;
        total_entropy_mb += entropy_mb;
        total_quantized_mb += quantized_mb;
        rows.push(output::StatsRow {
            layer: t.name.clone(),
            weights: count,
            bins,
            entropy_bits_per_weight: h,
            entropy_mb,
            quantized_mb,
        });
    }
    let peak = rows
        .iter()
        .max_by(|a, b| a.entropy_mb.total_cmp(&b.entropy_mb))
        .expect("manifest has at least one layer");
    let report = output::StatsReport {
        peak_layer: peak.layer.clone(),
        peak_entropy_mb: peak.entropy_mb,
        total_weights,
        total_entropy_mb,
        total_quantized_mb,
        layers: rows,
    };

    let mut table = Table::new(&[
        "layer",
        "weights",
        "bins",
        "H(bits/w)",
        "HxW(MB)",
        "quantized(MB)",
    ]);
    for r in &report.layers {
        table.row(vec![
            r.layer.clone(),
            r.weights.to_string(),
            r.bins.to_string(),
            format!("{:.6}", r.entropy_bits_per_weight),
            format!("{:.6}", r.entropy_mb),
            format!("{:.6}", r.quantized_mb),
        ]);
    }
    table.row(vec![
        "total".to_string(),
        report.total_weights.to_string(),
        String::new(),
        String::new(),
        format!("{:.6}", report.total_entropy_mb),
        format!("{:.6}", report.total_quantized_mb),
    ]);
    table.print();
    println!(
        "peak layer: {} ({:.6} MB entropy bound)",
        report.peak_layer, report.peak_entropy_mb
    );

    if let Some(path) = &args.json {
        output::write_json(path, &report)?;
    }
    Ok(())
}

pub(crate) fn quantize(args: QuantizeArgs) -> Result<(), CliError> {
    let tensors = load_tensors(&args.manifest)?;
    std::fs::create_dir_all(&args.out)?;

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut used = HashSet::new();
    for t in &tensors {
        let spec = make_quantizer(&t.data, args.bins, args.scale_policy, &t.name)?;
        let symbols = quantizer::quantize(&t.data, &spec);
        let deq = quantizer::dequantize(&symbols, &spec)?;
        let dist = histogram(&symbols, args.bins)?;
        let file = tensor_file_name(&t.name, &mut used);
        write_tensor_data(&args.out.join(&file), &deq)?;
        entries.push(ManifestEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            data: file,
            dtype: "f32".to_string(),
        });
        rows.push(output::QuantizeRow {
            layer: t.name.clone(),
            weights: t.weight_count() as u64,
            bins: args.bins,
            scale: spec.scale(),
            step: spec.step(),
            mse: quantizer::quantization_mse(&t.data, &spec)?,
            entropy_bits_per_weight: shannon_entropy(&dist)?,
        });
    }
    let manifest_path = args.out.join("manifest.toml");
    std::fs::write(
        &manifest_path,
        manifest_to_string(&TensorManifest { layers: entries }),
    )?;

    let mut table = Table::new(&["layer", "weights", "bins", "scale", "step", "mse", "H(bits/w)"]);
    for r in &rows {
        table.row(vec![
            r.layer.clone(),
            r.weights.to_string(),
            r.bins.to_string(),
            format!("{:.6}", r.scale),
            format!("{:.6}", r.step),
            format!("{:.8}", r.mse),
            format!("{:.6}", r.entropy_bits_per_weight),
        ]);
    }
    table.print();
    println!("manifest: {}", manifest_path.display());

    if let Some(path) = &args.json {
        let report = output::QuantizeReport {
            layers: rows,
            manifest: manifest_path.display().to_string(),
        };
        output::write_json(path, &report)?;
    }
    Ok(())
}

/// Layers whose rank does not reach past the split axis are stored as a
/// single stream; splitting a bias vector channel-wise would make one-symbol
/// streams.
fn encode_one(
    tensor: &Tensor,
    spec: &QuantizerSpec,
    l: usize,
    axis: usize,
    parallel: bool,
) -> Result<LayerBundle, CliError> {
    let (axis, parallel) = if tensor.shape.len() > axis && tensor.shape.len() >= 2 {
        (axis, parallel)
    } else {
        (0, false)
    };
    Ok(encode_layer(tensor, spec, l, axis, parallel)?)
}

pub(crate) fn compress(args: CompressArgs) -> Result<(), CliError> {
    let tensors = load_tensors(&args.manifest)?;
    let raw_names: HashSet<&str> = args.raw.iter().map(String::as_str).collect();
    for name in &raw_names {
        if !tensors.iter().any(|t| t.name == *name) {
            return Err(CliError::Input(format!(
                "--raw names unknown layer {name:?}"
            )));
        }
    }

    let mut bins_by_name: Vec<(String, usize)> = Vec::new();
    if let Some(target_mb) = args.target_mb {
        let coded: Vec<Tensor> = tensors
            .iter()
            .filter(|t| !raw_names.contains(t.name.as_str()))
            .cloned()
            .collect();
        if coded.is_empty() {
            return Err(CliError::Input(
                "every layer is raw; nothing to allocate".to_string(),
            ));
        }
        let mut cfg = AllocationConfig::new(target_mb * MEGABYTE);
        cfg.beta = args.beta;
        let result = allocate_weights(&coded, args.scale_policy, &cfg)?;
        if !result.converged {
            eprintln!(
                "warning: allocation did not converge (achieved {:.6} MB, target {:.6} MB)",
                result.achieved_bits / 8.0 / MEGABYTE,
                result.target_bits / 8.0 / MEGABYTE
            );
        }
        for layer in result.per_layer {
            bins_by_name.push((layer.name, layer.bins));
        }
    }
    let bins_for = |name: &str| -> Option<usize> {
        if let Some(fixed) = args.bins {
            Some(fixed)
        } else {
            bins_by_name
                .iter()
                .find(|(n, _)| n == name)
                .map(|&(_, b)| b)
        }
    };

    let mut bundles = Vec::new();
    let mut rows = Vec::new();
    let mut total_weights = 0u64;
    for t in &tensors {
        let bundle = if raw_names.contains(t.name.as_str()) {
            encode_layer_raw(t)?
        } else {
            let bins = bins_for(&t.name).expect("allocation covers every coded layer");
            let spec = make_quantizer(&t.data, bins, args.scale_policy, &t.name)?;
            encode_one(t, &spec, args.table_size, args.axis, args.parallel)?
        };
        let report = bundle_size_report(&bundle);
        let bins = match &bundle.payload {
            answ::stream::LayerPayload::Tans { quantizer, .. } => quantizer.bins(),
            answ::stream::LayerPayload::Raw { .. } => 256,
        };
        total_weights += t.weight_count() as u64;
        rows.push(output::CompressRow {
            layer: t.name.clone(),
            weights: t.weight_count() as u64,
            bins,
            streams: bundle.stream_count(),
            bytes: report.total_bytes,
            bits_per_weight: report.total_bytes as f64 * 8.0 / t.weight_count() as f64,
        });
        bundles.push(bundle);
    }

    let bytes = write_model(&bundles)?;
    std::fs::write(&args.out, &bytes)?;

    let mut table = Table::new(&["layer", "weights", "bins", "streams", "bytes", "bits/weight"]);
    for r in &rows {
        table.row(vec![
            r.layer.clone(),
            r.weights.to_string(),
            r.bins.to_string(),
            r.streams.to_string(),
            r.bytes.to_string(),
            format!("{:.4}", r.bits_per_weight),
        ]);
    }
    let overall = bytes.len() as f64 * 8.0 / total_weights as f64;
    table.row(vec![
        "total".to_string(),
        total_weights.to_string(),
        String::new(),
        String::new(),
        bytes.len().to_string(),
        format!("{overall:.4}"),
    ]);
    table.print();
    println!("archive: {} ({} bytes)", args.out.display(), bytes.len());

    if let Some(path) = &args.json {
        let report = output::CompressReport {
            layers: rows,
            total_weights,
            archive_bytes: bytes.len(),
            bits_per_weight: overall,
        };
        output::write_json(path, &report)?;
    }
    Ok(())
}

pub(crate) fn decompress(args: DecompressArgs) -> Result<(), CliError> {
    let bytes = std::fs::read(&args.archive)?;
    let bundles = read_model(&bytes)?;
    std::fs::create_dir_all(&args.out)?;

    let mut entries = Vec::new();
    let mut used = HashSet::new();
    for bundle in &bundles {
        let tensor = answ::stream::dequantize_layer(bundle)?;
        let file = tensor_file_name(&tensor.name, &mut used);
        write_tensor_data(&args.out.join(&file), &tensor.data)?;
        println!(
            "{}  {} weights  -> {}",
            tensor.name,
            tensor.weight_count(),
            file
        );
        entries.push(ManifestEntry {
            name: tensor.name,
            shape: tensor.shape,
            data: file,
            dtype: "f32".to_string(),
        });
    }
    let manifest_path = args.out.join("manifest.toml");
    std::fs::write(
        &manifest_path,
        manifest_to_string(&TensorManifest { layers: entries }),
    )?;
    println!("manifest: {}", manifest_path.display());
    Ok(())
}

pub(crate) fn allocate(args: AllocateArgs) -> Result<(), CliError> {
    let tensors = load_tensors(&args.manifest)?;
    let mut cfg = AllocationConfig::new(args.target_mb * MEGABYTE);
    cfg.beta = args.beta;
    cfg.learning_rate = args.learning_rate;
    cfg.max_iters = args.iters;
    let result = allocate_weights(&tensors, args.scale_policy, &cfg)?;

    let mut table = Table::new(&["layer", "weights", "bins", "H(bits/w)"]);
    let mut rows = Vec::new();
    for layer in &result.per_layer {
        table.row(vec![
            layer.name.clone(),
            layer.weight_count.to_string(),
            layer.bins.to_string(),
            format!("{:.6}", layer.entropy_bits_per_weight),
        ]);
        rows.push(output::AllocateRow {
            layer: layer.name.clone(),
            weights: layer.weight_count,
            bins: layer.bins,
            entropy_bits_per_weight: layer.entropy_bits_per_weight,
        });
    }
    table.print();
    let achieved_mb = result.achieved_bits / 8.0 / MEGABYTE;
    let target_mb = result.target_bits / 8.0 / MEGABYTE;
    println!(
        "achieved entropy: {achieved_mb:.6} MB (target {target_mb:.6} MB) after {} iterations",
        result.iterations
    );
    println!(
        "{}",
        if result.converged {
            "converged"
        } else {
            "NOT converged: achieved entropy is more than 5% from the target"
        }
    );

    if let Some(path) = &args.json {
        let report = output::AllocateReport {
            layers: rows,
            achieved_mb,
            target_mb,
            converged: result.converged,
            iterations: result.iterations,
        };
        output::write_json(path, &report)?;
    }
    Ok(())
}

pub(crate) fn bench_decode(args: BenchDecodeArgs) -> Result<(), CliError> {
    if args.repeats == 0 {
        return Err(CliError::Input("--repeats must be at least 1".to_string()));
    }
    let bytes = std::fs::read(&args.archive)?;
    let bundles = read_model(&bytes)?;

    // Reference pass: symbols plus exact op counters per layer.
    let mut reference = Vec::new();
    let mut table = Table::new(&["layer", "streams", "makespan", "lookups"]);
    let mut total_symbols = 0u64;
    let mut total_lookups = 0u64;
    for bundle in &bundles {
        let (symbols, stats) = decode_layer_with_stats(bundle)?;
        let lookups: u64 = stats.iter().map(|s| s.lookups).sum();
        total_symbols += symbols.len() as u64;
        total_lookups += lookups;
        table.row(vec![
            bundle.layer_id.clone(),
            bundle.stream_count().to_string(),
            bundle.makespan().to_string(),
            lookups.to_string(),
        ]);
        reference.push(symbols);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut rates = Vec::with_capacity(args.repeats);
    for _ in 0..args.repeats {
        let mut order: Vec<usize> = (0..bundles.len()).collect();
        order.shuffle(&mut rng);
        let start = Instant::now();
        for &idx in &order {
            let (symbols, _) = decode_layer_with_stats(&bundles[idx])?;
            if symbols != reference[idx] {
                return Err(CliError::Input(
                    "decode produced schedule-dependent output".to_string(),
                ));
            }
        }
        let elapsed = start.elapsed().as_secs_f64();
        rates.push(total_symbols as f64 / elapsed.max(1e-9));
    }
    rates.sort_by(f64::total_cmp);
    let median = rates[rates.len() / 2];

    table.print();
    println!("total lookups: {total_lookups}");
    println!(
        "decoded {total_symbols} symbols x {} repeats, outputs identical across schedules",
        args.repeats
    );
    println!("median throughput: {:.1} Msymbols/s", median / 1e6);
    Ok(())
}

pub(crate) fn table(args: TableArgs) -> Result<(), CliError> {
    let dist = if !args.counts.is_empty() {
        Distribution::from_counts(args.counts.clone())?
    } else {
        let manifest = args.manifest.as_ref().expect("clap group guarantees this");
        let layer_name = args.layer.as_ref().expect("clap group requires --layer");
        let tensors = load_tensors(manifest)?;
        let tensor = tensors
            .iter()
            .find(|t| &t.name == layer_name)
            .ok_or_else(|| CliError::Input(format!("layer {layer_name:?} not in manifest")))?;
        let spec = make_quantizer(&tensor.data, args.bins, args.scale_policy, layer_name)?;
        let symbols = quantizer::quantize(&tensor.data, &spec);
        histogram(&symbols, args.bins)?
    };
    let hist = normalize_freqs(&dist, args.table_size)?;
    let (_, dec) = build_tables(&hist);

    println!("state,symbol,nb_bits,new_x");
    let l = dec.table_size();
    for (i, e) in dec.entries().iter().enumerate() {
        println!(
            "{},{},{},{}",
            l + i,
            e.symbol,
            e.nb_bits,
            l + e.new_x as usize
        );
    }
    println!("# footprint: {} bytes", lut_footprint(&dec));
    Ok(())
}
