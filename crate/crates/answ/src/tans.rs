//! Tabled asymmetric numeral systems.
//!
//! The automaton works on states `x` in `[l, 2l)` with `l` a power of two.
//! Decoding state `x` looks up one table entry, emits its symbol, reads
//! `nb_bits` from the payload and jumps to `new_x + bits`. Encoding walks the
//! symbol sequence in reverse and lays the emitted bit groups out so the
//! decoder consumes the payload front to back; the encoder's final state is
//! carried in the stream header and is where the decoder starts.

use crate::bitio::{BitReader, BitWriter};
use crate::distributions::Distribution;
use crate::error::{Error, Result};

pub const MIN_TABLE_SIZE: usize = 2;
pub const MAX_TABLE_SIZE: usize = 4096;

/// Initial encoder state, as an offset from `l`. Any fixed choice is valid;
/// fixed at the lowest working state for determinism.
const INITIAL_STATE_OFFSET: usize = 0;

fn validate_table_size(l: usize) -> Result<()> {
    if !l.is_power_of_two() || l < MIN_TABLE_SIZE || l > MAX_TABLE_SIZE {
        return Err(Error::InvalidTableSize(l));
    }
    Ok(())
}

/// Per-symbol slot counts `L_s` summing exactly to the table size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedHistogram {
    l: usize,
    freqs: Vec<u32>,
}

impl NormalizedHistogram {
    /// Validates and wraps raw frequencies. Zero entries mark symbols absent
    /// from the alphabet; every present symbol must hold at least one slot,
    /// which the sum check enforces together with construction sites.
    pub fn new(l: usize, freqs: Vec<u32>) -> Result<Self> {
        validate_table_size(l)?;
        if freqs.is_empty() || freqs.len() > 256 {
            return Err(Error::InvalidAlphabet(freqs.len()));
        }
        let sum: u64 = freqs.iter().map(|&f| u64::from(f)).sum();
        if sum != l as u64 {
            return Err(Error::InvalidFreqSum {
                sum,
                expected: l as u64,
            });
        }
        Ok(Self { l, freqs })
    }

    pub fn table_size(&self) -> usize {
        self.l
    }

    pub fn table_log(&self) -> u32 {
        self.l.trailing_zeros()
    }

    pub fn alphabet_size(&self) -> usize {
        self.freqs.len()
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }
}

/// Apportions `l` table slots to symbols proportionally to their counts.
///
/// Largest-remainder rounding with a floor of one slot per present symbol;
/// any remaining deficit or surplus is settled on the symbols with the
/// largest gap to their ideal share, ties broken on the lowest symbol id.
pub fn normalize_freqs(dist: &Distribution, l: usize) -> Result<NormalizedHistogram> {
    validate_table_size(l)?;
    if dist.total() == 0 {
        return Err(Error::EmptyDistribution);
    }
    let support = dist.support_size();
    if support > l {
        return Err(Error::TableTooSmall {
            symbols: support,
            table_size: l,
        });
    }

    let total = dist.total() as f64;
    let mut freqs = vec![0u32; dist.alphabet_size()];
    let mut ideals = vec![0.0f64; dist.alphabet_size()];
    let mut assigned: i64 = 0;
    for (s, &count) in dist.counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        let ideal = count as f64 * l as f64 / total;
        let base = (ideal.floor() as u32).max(1);
        ideals[s] = ideal;
        freqs[s] = base;
        assigned += i64::from(base);
    }

    let mut diff = l as i64 - assigned;
    while diff > 0 {
        // Grant one slot to the present symbol furthest below its share.
        let mut best: Option<usize> = None;
        let mut best_gap = f64::NEG_INFINITY;
        for s in 0..freqs.len() {
            if freqs[s] == 0 {
                continue;
            }
            let gap = ideals[s] - f64::from(freqs[s]);
            if gap > best_gap {
                best_gap = gap;
                best = Some(s);
            }
        }
        freqs[best.expect("support is nonempty")] += 1;
        diff -= 1;
    }
    while diff < 0 {
        // Reclaim a slot from the symbol furthest above its share, never
        // dropping a present symbol below one slot.
        let mut best: Option<usize> = None;
        let mut best_gap = f64::NEG_INFINITY;
        for s in 0..freqs.len() {
            if freqs[s] <= 1 {
                continue;
            }
            let gap = f64::from(freqs[s]) - ideals[s];
            if gap > best_gap {
                best_gap = gap;
                best = Some(s);
            }
        }
        freqs[best.expect("some symbol holds surplus slots")] -= 1;
        diff += 1;
    }

    NormalizedHistogram::new(l, freqs)
}

/// One decoder LUT entry: emitted symbol, payload bits to read, and the base
/// of the next state. `new_x` is stored relative to `l`; the next state
/// offset is `new_x + bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeEntry {
    pub symbol: u8,
    pub nb_bits: u8,
    pub new_x: u16,
}

/// Decoder automaton: `l` entries indexed by state offset.
#[derive(Debug, Clone)]
pub struct DecodeTable {
    l: usize,
    table_log: u32,
    entries: Vec<DecodeEntry>,
}

impl DecodeTable {
    pub fn table_size(&self) -> usize {
        self.l
    }

    pub fn table_log(&self) -> u32 {
        self.table_log
    }

    pub fn entries(&self) -> &[DecodeEntry] {
        &self.entries
    }

    /// State arithmetic width in bits: states live in `[l, 2l)`.
    pub fn state_bits(&self) -> u32 {
        self.table_log + 1
    }
}

/// Encoder side: per-symbol transition tables over the same slot assignment.
#[derive(Debug, Clone)]
pub struct EncodeTable {
    l: usize,
    freqs: Vec<u32>,
    starts: Vec<u32>,
    next_state: Vec<u16>,
}

impl EncodeTable {
    pub fn table_size(&self) -> usize {
        self.l
    }

    #[inline]
    fn encode_symbol(&self, state: u32, symbol: u8) -> Result<(u16, u8, u32)> {
        let f = self.freqs[symbol as usize];
        if f == 0 {
            return Err(Error::UnencodableSymbol(symbol));
        }
        let mut nb = 0u8;
        while (state >> nb) >= 2 * f {
            nb += 1;
        }
        let bits = (state & ((1u32 << nb) - 1)) as u16;
        let idx = self.starts[symbol as usize] + ((state >> nb) - f);
        Ok((bits, nb, u32::from(self.next_state[idx as usize])))
    }
}

/// Builds the encode/decode automaton pair for a normalized histogram.
///
/// Symbol slots are assigned by the classic step spread: positions advance by
/// `(5/8)l + 3` (forced odd so the walk is a full cycle) while symbols are
/// taken in id order. Decoding at state `l + i` yields the symbol of slot
/// `i`; its counter `x_s` runs through `[L_s, 2 L_s)` and the entry jumps to
/// `x_s << nb_bits`, back inside `[l, 2l)`.
pub fn build_tables(hist: &NormalizedHistogram) -> (EncodeTable, DecodeTable) {
    let l = hist.table_size();
    let table_log = hist.table_log();
    let freqs = hist.freqs();

    let step = ((l >> 1) + (l >> 3) + 3) | 1;
    let mut spread = vec![0u8; l];
    let mut pos = 0usize;
    for (sym, &f) in freqs.iter().enumerate() {
        for _ in 0..f {
            spread[pos] = sym as u8;
            pos = (pos + step) & (l - 1);
        }
    }
    debug_assert_eq!(pos, 0, "spread walk must close its cycle");

    let mut starts = vec![0u32; freqs.len()];
    let mut acc = 0u32;
    for (s, &f) in freqs.iter().enumerate() {
        starts[s] = acc;
        acc += f;
    }

    let mut counters: Vec<u32> = freqs.to_vec();
    let mut entries = Vec::with_capacity(l);
    let mut next_state = vec![0u16; l];
    for (i, &sym) in spread.iter().enumerate() {
        let s = sym as usize;
        let x_s = counters[s];
        counters[s] += 1;
        let nb = table_log - (31 - x_s.leading_zeros());
        let new_x_full = (x_s as usize) << nb;
        debug_assert!(new_x_full >= l && new_x_full < 2 * l);
        entries.push(DecodeEntry {
            symbol: sym,
            nb_bits: nb as u8,
            new_x: (new_x_full - l) as u16,
        });
        next_state[(starts[s] + (x_s - freqs[s])) as usize] = (l + i) as u16;
    }

    (
        EncodeTable {
            l,
            freqs: freqs.to_vec(),
            starts,
            next_state,
        },
        DecodeTable {
            l,
            table_log,
            entries,
        },
    )
}

/// Hardware storage cost of the decode LUT in bytes: one symbol byte, one
/// bit-count byte and one transition byte per state, i.e. `3l`. The
/// in-memory table widens `new_x` past 256 states; this reports the packed
/// cost.
pub fn lut_footprint(table: &DecodeTable) -> usize {
    3 * table.table_size()
}

/// One encoded symbol stream. The payload is consumed front to back by the
/// decoder; `final_state` is the decoder's entry point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedStream {
    pub payload: Vec<u8>,
    pub bit_length: u64,
    pub final_state: u16,
    pub symbol_count: u64,
}

/// Encodes a symbol sequence against an encode table.
///
/// Deterministic: identical input yields identical bytes.
pub fn encode(symbols: &[u8], table: &EncodeTable) -> Result<EncodedStream> {
    let l = table.l as u32;
    let mut state = l + INITIAL_STATE_OFFSET as u32;
    let mut groups: Vec<(u16, u8)> = Vec::with_capacity(symbols.len());
    for &sym in symbols.iter().rev() {
        let (bits, nb, next) = table.encode_symbol(state, sym)?;
        groups.push((bits, nb));
        state = next;
    }
    // Written in reverse emission order so the first group the decoder needs
    // sits at the front of the payload.
    let mut writer = BitWriter::new();
    for &(bits, nb) in groups.iter().rev() {
        writer.write(u32::from(bits), nb);
    }
    let bit_length = writer.bit_len();
    Ok(EncodedStream {
        payload: writer.finish(),
        bit_length,
        final_state: state as u16,
        symbol_count: symbols.len() as u64,
    })
}

/// Operation counters from an instrumented decode. Every decoded symbol costs
/// exactly one table lookup and one bit-read (which may be zero bits wide).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    pub lookups: u64,
    pub bit_reads: u64,
    pub bits_read: u64,
    pub zero_bit_steps: u64,
}

/// Decodes `count` symbols in forward order.
///
/// Fails with a corrupt-stream error on bit underrun, leftover payload bits,
/// or a terminal state that does not match the encoder's fixed start state.
pub fn decode(stream: &EncodedStream, table: &DecodeTable, count: usize) -> Result<Vec<u8>> {
    decode_with_stats(stream, table, count).map(|(symbols, _)| symbols)
}

/// [`decode`] plus exact operation counts.
pub fn decode_with_stats(
    stream: &EncodedStream,
    table: &DecodeTable,
    count: usize,
) -> Result<(Vec<u8>, DecodeStats)> {
    if stream.symbol_count != count as u64 {
        return Err(Error::SymbolCountMismatch {
            requested: count,
            actual: stream.symbol_count as usize,
        });
    }
    let l = table.l;
    let fs = stream.final_state as usize;
    if fs < l || fs >= 2 * l {
        return Err(Error::CorruptStream("final state outside working range"));
    }
    let mut reader = BitReader::new(&stream.payload, stream.bit_length)?;
    let mut state = fs - l;
    let mut out = Vec::with_capacity(count);
    let mut stats = DecodeStats::default();
    for _ in 0..count {
        let entry = table.entries[state];
        out.push(entry.symbol);
        let bits = reader.read(entry.nb_bits)?;
        state = entry.new_x as usize + bits as usize;
        stats.lookups += 1;
        stats.bit_reads += 1;
        stats.bits_read += u64::from(entry.nb_bits);
        if entry.nb_bits == 0 {
            stats.zero_bit_steps += 1;
        }
    }
    if state != INITIAL_STATE_OFFSET {
        return Err(Error::CorruptStream("terminal state mismatch"));
    }
    if reader.bits_consumed() != stream.bit_length {
        return Err(Error::CorruptStream("payload bits left over"));
    }
    Ok((out, stats))
}

/// Achieved code length in bits per symbol, payload only; header and state
/// costs are accounted separately by the layer codec.
pub fn measured_rate(stream: &EncodedStream) -> Result<f64> {
    if stream.symbol_count == 0 {
        return Err(Error::EmptyStream);
    }
    Ok(stream.bit_length as f64 / stream.symbol_count as f64)
}
