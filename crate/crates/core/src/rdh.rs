//! On-the-fly reversible embedding of protected measurements.
//!
//! Measurements arrive one at a time. Whenever no complete chunk is waiting,
//! the incoming measurement becomes *payload*: it is written as a 16-bit
//! two's-complement word, XORed with the next 16 keystream bits, and cut
//! MSB-first into `n`-bit chunks (a short leftover is carried in front of the
//! next payload's bits). While chunks are waiting, each measurement is a
//! *carrier*: with the constant predictor its prediction error is
//! `d = y - c` (`c = 0` for Hadamard streams) and it is emitted as
//!
//! ```text
//! D = 2^n·d + bn             if -T <= d <= T   (expanded, carries a chunk)
//! D = d + bn_max·T + bn_max  if d > T          (shifted up)
//! D = d - bn_max·T           if d < -T         (shifted down)
//! ```
//!
//! with `bn_max = 2^n - 1`. The three output ranges are disjoint, so the
//! receiver can classify every value and invert it exactly.
//!
//! End of stream: the embedder is told which measurement is the last one.
//! If at that point the waiting chunks still hold bits of an *earlier*
//! payload, or only a carried leftover remains, the last measurement is
//! expanded unconditionally with the next chunk (the leftover zero-padded to
//! `n` bits). This keeps every truncation confined to the final payload;
//! whatever is still pending afterwards is dropped and reported as
//! `tail_bits`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::keystream::KeySource;
use crate::sensing::MeasurementStream;

/// Bits per protected payload measurement.
pub const PAYLOAD_BITS: u32 = 16;

/// Embedding knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedParams {
    /// Insertion levels `n` (bits per carrier), `1..=16`.
    pub levels: u32,
    /// Eligibility threshold `T`: errors in `[-T, T]` are expanded.
    pub threshold: u32,
    /// Constant predictor `c`; zero for zero-mean Hadamard streams.
    pub predictor_offset: i32,
    /// Skip the `T <= T_max(n)` check for non-loose thresholds.
    pub allow_overflow: bool,
}

impl EmbedParams {
    pub fn new(levels: u32, threshold: u32) -> Result<Self> {
        if !(1..=16).contains(&levels) {
            return Err(Error::BadLevels(levels));
        }
        Ok(Self {
            levels,
            threshold,
            predictor_offset: 0,
            allow_overflow: false,
        })
    }

    /// Threshold `S/2`: every measurement of an order-`S` scene is eligible.
    pub fn loose(levels: u32, order: usize) -> Result<Self> {
        Self::new(levels, (order / 2) as u32)
    }

    pub fn with_predictor_offset(mut self, offset: i32) -> Self {
        self.predictor_offset = offset;
        self
    }

    pub fn allowing_overflow(mut self, allow: bool) -> Self {
        self.allow_overflow = allow;
        self
    }

    pub fn bn_max(&self) -> i64 {
        (1i64 << self.levels) - 1
    }

    pub fn is_loose_for(&self, order: usize) -> bool {
        u64::from(self.threshold) >= (order / 2) as u64
    }

    /// Rejects thresholds above `T_max(n)` unless loose or explicitly allowed.
    pub fn check_overflow_guard(&self, order: usize) -> Result<()> {
        if self.allow_overflow || self.is_loose_for(order) {
            return Ok(());
        }
        let limit = crate::capacity::t_max(self.levels);
        if self.threshold > limit {
            return Err(Error::UnsafeThreshold {
                threshold: self.threshold,
                limit,
                levels: self.levels,
            });
        }
        Ok(())
    }
}

/// Which branch of the expansion produced a marked value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkedClass {
    Expanded,
    ShiftedUp,
    ShiftedDown,
}

/// Two's-complement 16-bit word of `y`, XORed with the next 16 key bits.
pub fn encode_payload<K: KeySource + ?Sized>(y: i32, key: &mut K) -> Result<u16> {
    let v = i16::try_from(y).map_err(|_| Error::PayloadOutOfRange(i64::from(y)))?;
    Ok((v as u16) ^ key.next_u16())
}

/// Inverse of [`encode_payload`].
pub fn decode_payload<K: KeySource + ?Sized>(cipher: u16, key: &mut K) -> i16 {
    (cipher ^ key.next_u16()) as i16
}

/// The 16 bits of a payload word, MSB first.
pub fn word_bits(word: u16) -> [u8; 16] {
    std::array::from_fn(|i| ((word >> (15 - i)) & 1) as u8)
}

/// FIFO of `n`-bit chunks plus the carried leftover (< `n` bits).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkBuffer {
    levels: u32,
    pending: VecDeque<u32>,
    remainder: u32,
    remainder_len: u32,
}

impl ChunkBuffer {
    pub fn new(levels: u32) -> Self {
        assert!((1..=16).contains(&levels), "levels must be 1..=16");
        Self {
            levels,
            pending: VecDeque::new(),
            remainder: 0,
            remainder_len: 0,
        }
    }

    /// Appends `width` bits of `value` (MSB first) behind the leftover and
    /// slices complete chunks off the front.
    pub fn push_bits(&mut self, value: u32, width: u32) {
        debug_assert!(width <= 16);
        let mut acc = (u64::from(self.remainder) << width) | u64::from(value & mask(width));
        let mut len = self.remainder_len + width;
        while len >= self.levels {
            len -= self.levels;
            self.pending.push_back(((acc >> len) & u64::from(mask(self.levels))) as u32);
        }
        acc &= u64::from(mask(len));
        self.remainder = acc as u32;
        self.remainder_len = len;
    }

    /// Bit-slice form of [`push_bits`](Self::push_bits).
    pub fn push_bit_slice(&mut self, bits: &[u8]) {
        for &b in bits {
            self.push_bits(u32::from(b & 1), 1);
        }
    }

    pub fn pop(&mut self) -> Option<u32> {
        self.pending.pop_front()
    }

    pub fn pending_chunks(&self) -> impl Iterator<Item = u32> + '_ {
        self.pending.iter().copied()
    }

    pub fn has_chunk(&self) -> bool {
        !self.pending.is_empty()
    }

    /// `(bits, length)` of the carried leftover.
    pub fn remainder(&self) -> (u32, u32) {
        (self.remainder, self.remainder_len)
    }

    /// Leftover bits as the leading part of one chunk, zero padded.
    pub fn take_padded_remainder(&mut self) -> Option<u32> {
        if self.remainder_len == 0 {
            return None;
        }
        let chunk = self.remainder << (self.levels - self.remainder_len);
        self.remainder = 0;
        self.remainder_len = 0;
        Some(chunk)
    }

    pub fn pending_bits(&self) -> u32 {
        self.pending.len() as u32 * self.levels + self.remainder_len
    }
}

fn mask(width: u32) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

fn check_i32(v: i64) -> Result<i64> {
    if i32::try_from(v).is_err() {
        return Err(Error::Overflow(v));
    }
    Ok(v)
}

/// Expands an eligible prediction error with chunk `bn`, or shifts an
/// ineligible one (then `bn` must be absent).
pub fn expand_or_shift(d: i64, bn: Option<u32>, levels: u32, threshold: u32) -> Result<i64> {
    if !(1..=16).contains(&levels) {
        return Err(Error::BadLevels(levels));
    }
    let bn_max = (1i64 << levels) - 1;
    let t = i64::from(threshold);
    if (-t..=t).contains(&d) {
        let bn = bn.ok_or(Error::MissingChunk(d))?;
        if i64::from(bn) > bn_max {
            return Err(Error::BadChunk {
                chunk: i64::from(bn),
                levels,
            });
        }
        Ok((d << levels) + i64::from(bn))
    } else {
        if let Some(bn) = bn {
            return Err(Error::BadChunk {
                chunk: i64::from(bn),
                levels,
            });
        }
        if d > t {
            Ok(d + bn_max * t + bn_max)
        } else {
            Ok(d - bn_max * t)
        }
    }
}

/// Range test on a marked value.
pub fn classify_marked_value(marked: i64, levels: u32, threshold: u32) -> MarkedClass {
    let bn_max = (1i64 << levels) - 1;
    let t = i64::from(threshold);
    let lo = -(t << levels);
    let hi = (t << levels) + bn_max;
    if marked > hi {
        MarkedClass::ShiftedUp
    } else if marked >= lo {
        MarkedClass::Expanded
    } else {
        MarkedClass::ShiftedDown
    }
}

/// Inverse of [`expand_or_shift`]: `(d, Some(bn))` for expanded values and
/// `(d, None)` for shifted ones.
pub fn invert_expansion(marked: i64, levels: u32, threshold: u32) -> (i64, Option<u32>) {
    let bn_max = (1i64 << levels) - 1;
    let t = i64::from(threshold);
    match classify_marked_value(marked, levels, threshold) {
        MarkedClass::Expanded => split_expanded(marked, levels),
        MarkedClass::ShiftedUp => (marked - bn_max * t - bn_max, None),
        MarkedClass::ShiftedDown => (marked + bn_max * t, None),
    }
}

// floor division by 2^n; the low n bits are the chunk
fn split_expanded(marked: i64, levels: u32) -> (i64, Option<u32>) {
    let d = marked >> levels;
    (d, Some((marked - (d << levels)) as u32))
}

/// Counters gathered while embedding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmbedStats {
    /// Measurements consumed as payload.
    pub payloads: usize,
    /// Carriers expanded with a chunk (the data-carrying count `x`).
    pub expanded: usize,
    /// Carriers that were only shifted.
    pub shifted: usize,
    /// Keystream bits used (16 per payload).
    pub key_bits: u64,
    /// The last measurement was expanded by the end-of-stream rule.
    pub forced_final: bool,
}

impl EmbedStats {
    /// Chunk bits placed in carriers.
    pub fn embedded_bits(&self, levels: u32) -> u64 {
        self.expanded as u64 * u64::from(levels)
    }
}

/// Output of the embedder: the transmitted values and the side information.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkedStream {
    pub values: Vec<i32>,
    /// Sorted indexes (into the source stream) of payload measurements.
    pub location_map: Vec<usize>,
    pub levels: u32,
    /// Payload bits that never reached a carrier.
    pub tail_bits: u32,
    pub source_len: usize,
    pub stats: EmbedStats,
}

impl MarkedStream {
    /// Position of the payload that lost bits, if any.
    pub fn truncated_position(&self) -> Option<usize> {
        if self.tail_bits > 0 {
            self.location_map.last().copied()
        } else {
            None
        }
    }

    /// Source positions of the transmitted values, in order.
    pub fn carrier_positions(&self) -> Vec<usize> {
        complement(&self.location_map, self.source_len)
    }
}

pub(crate) fn complement(sorted: &[usize], len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len.saturating_sub(sorted.len()));
    let mut it = sorted.iter().peekable();
    for i in 0..len {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

/// Sequential embedding state machine.
pub struct Embedder<K: KeySource> {
    params: EmbedParams,
    key: K,
    buffer: ChunkBuffer,
    index: usize,
    // chunks placed so far (each n bits)
    chunks_sent: u64,
    values: Vec<i32>,
    location_map: Vec<usize>,
    stats: EmbedStats,
    finished: bool,
}

impl<K: KeySource> Embedder<K> {
    pub fn new(params: EmbedParams, key: K) -> Self {
        Self {
            buffer: ChunkBuffer::new(params.levels),
            params,
            key,
            index: 0,
            chunks_sent: 0,
            values: Vec::new(),
            location_map: Vec::new(),
            stats: EmbedStats::default(),
            finished: false,
        }
    }

    /// Feeds a measurement that is not the last one. Returns the value to
    /// transmit, or `None` if the measurement was consumed as payload.
    pub fn push(&mut self, y: i16) -> Result<Option<i32>> {
        self.step(y, false)
    }

    /// Feeds the final measurement; no further input is accepted.
    pub fn push_last(&mut self, y: i16) -> Result<Option<i32>> {
        self.step(y, true)
    }

    fn consume(&mut self, y: i16) -> Result<Option<i32>> {
        let word = encode_payload(i32::from(y), &mut self.key)?;
        self.buffer.push_bits(u32::from(word), PAYLOAD_BITS);
        self.location_map.push(self.index);
        self.stats.payloads += 1;
        self.stats.key_bits += u64::from(PAYLOAD_BITS);
        Ok(None)
    }

    // bits of payloads other than the newest one that are still waiting
    fn older_bits_pending(&self) -> i64 {
        let older = PAYLOAD_BITS as i64 * (self.stats.payloads as i64 - 1);
        older - self.chunks_sent as i64 * i64::from(self.params.levels)
    }

    fn emit_expanded(&mut self, d: i64, chunk: u32) -> Result<Option<i32>> {
        let v = check_i32((d << self.params.levels) + i64::from(chunk))?;
        self.chunks_sent += 1;
        self.stats.expanded += 1;
        Ok(Some(v as i32))
    }

    fn step(&mut self, y: i16, last: bool) -> Result<Option<i32>> {
        if self.finished {
            return Err(Error::Inconsistent("measurement after the last one".into()));
        }
        self.finished = last;
        let out = self.dispatch(y, last);
        self.index += 1;
        let out = out?;
        if let Some(v) = out {
            self.values.push(v);
        }
        Ok(out)
    }

    fn dispatch(&mut self, y: i16, last: bool) -> Result<Option<i32>> {
        if self.index == 0 {
            return self.consume(y);
        }
        let d = i64::from(y) - i64::from(self.params.predictor_offset);
        if last {
            if self.buffer.has_chunk() && self.older_bits_pending() > 0 {
                let chunk = self.buffer.pop().expect("chunk present");
                self.stats.forced_final = true;
                return self.emit_expanded(d, chunk);
            }
            if !self.buffer.has_chunk() {
                if let Some(chunk) = self.buffer.take_padded_remainder() {
                    self.stats.forced_final = true;
                    return self.emit_expanded(d, chunk);
                }
            }
        }
        if !self.buffer.has_chunk() {
            return self.consume(y);
        }
        let t = i64::from(self.params.threshold);
        if (-t..=t).contains(&d) {
            let chunk = self.buffer.pop().expect("chunk present");
            self.emit_expanded(d, chunk)
        } else {
            let v = check_i32(expand_or_shift(d, None, self.params.levels, self.params.threshold)?)?;
            self.stats.shifted += 1;
            Ok(Some(v as i32))
        }
    }

    /// Closes the stream. Pending bits are dropped and counted as
    /// `tail_bits`.
    pub fn finish(self) -> MarkedStream {
        let total = PAYLOAD_BITS as u64 * self.stats.payloads as u64;
        let sent = self.chunks_sent * u64::from(self.params.levels);
        MarkedStream {
            values: self.values,
            location_map: self.location_map,
            levels: self.params.levels,
            tail_bits: total.saturating_sub(sent) as u32,
            source_len: self.index,
            stats: self.stats,
        }
    }
}

/// Embeds a whole measurement sequence.
pub fn embed_values<K, I>(source: I, params: &EmbedParams, key: K) -> Result<MarkedStream>
where
    K: KeySource,
    I: IntoIterator<Item = i16>,
{
    let mut it = source.into_iter().peekable();
    if it.peek().is_none() {
        return Err(Error::EmptyStream);
    }
    let mut emb = Embedder::new(*params, key);
    while let Some(y) = it.next() {
        if it.peek().is_some() {
            emb.push(y)?;
        } else {
            emb.push_last(y)?;
        }
    }
    Ok(emb.finish())
}

/// Embeds an acquired stream, enforcing the overflow guard for its order.
pub fn embed_stream<K: KeySource>(
    source: &MeasurementStream,
    params: &EmbedParams,
    key: K,
) -> Result<MarkedStream> {
    params.check_overflow_guard(source.descriptor.order)?;
    embed_values(source.values.iter().copied(), params, key)
}

/// Result of authorized extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub values: Vec<i16>,
    /// Source position of a payload that could only be partly recovered
    /// (its missing low bits are zero).
    pub truncated: Option<usize>,
}

impl Extraction {
    pub fn is_exact(&self) -> bool {
        self.truncated.is_none()
    }
}

/// Restores the original stream from marked values, the location map, the
/// secret threshold and the key.
pub fn extract_stream<K: KeySource>(
    marked: &MarkedStream,
    params: &EmbedParams,
    mut key: K,
) -> Result<Extraction> {
    let levels = params.levels;
    if marked.levels != levels {
        return Err(Error::Inconsistent(format!(
            "stream has {} levels, parameters say {levels}",
            marked.levels
        )));
    }
    let len = marked.source_len;
    if marked.values.len() + marked.location_map.len() != len {
        return Err(Error::Inconsistent(format!(
            "{} marked values + {} map entries != {len}",
            marked.values.len(),
            marked.location_map.len()
        )));
    }
    crate::sensing::validate_location_map(&marked.location_map, len)?;
    if marked.location_map.is_empty() {
        // nothing was embedded: every value is a plain inversion
        let values = marked
            .values
            .iter()
            .map(|&v| {
                let (d, _) = invert_expansion(i64::from(v), levels, params.threshold);
                let y = d + i64::from(params.predictor_offset);
                i16::try_from(y).map_err(|_| Error::Inconsistent(format!("value {y} exceeds 16 bits")))
            })
            .collect::<Result<_>>()?;
        return Ok(Extraction {
            values,
            truncated: None,
        });
    }
    if marked.location_map[0] != 0 {
        return Err(Error::Inconsistent("first measurement must be payload".into()));
    }

    let n = i64::from(levels);
    let c = i64::from(params.predictor_offset);
    let mut out = vec![0i16; len];
    let mut chunks = ChunkBuffer::new(16);
    let mut chunk_bits: u64 = 0;
    let mut popped: i64 = 0;
    let mut payloads: i64 = 0;
    let mut map = marked.location_map.iter().peekable();
    let mut marked_values = marked.values.iter();

    for i in 0..len {
        // waiting payload bits as the embedder saw them before step i
        let queue_bits = PAYLOAD_BITS as i64 * payloads - n * popped;
        let has_chunk = queue_bits >= n;
        if map.peek() == Some(&&i) {
            map.next();
            if i > 0 && has_chunk {
                return Err(Error::Inconsistent(format!(
                    "payload at {i} while chunks were pending"
                )));
            }
            payloads += 1;
            continue;
        }
        let d_marked = i64::from(*marked_values.next().expect("length checked"));
        if !has_chunk && !(i == len - 1 && queue_bits > 0) {
            return Err(Error::Inconsistent(format!("carrier at {i} with no data pending")));
        }
        let older = PAYLOAD_BITS as i64 * (payloads - 1) - n * popped;
        let forced = i == len - 1 && ((has_chunk && older > 0) || (!has_chunk && queue_bits > 0));
        let (d, bn) = if forced {
            split_expanded(d_marked, levels)
        } else {
            invert_expansion(d_marked, levels, params.threshold)
        };
        if let Some(bn) = bn {
            let mut b = u64::from(bn);
            // a padded leftover only contributes its real bits
            let take = if !has_chunk { queue_bits as u32 } else { levels };
            b >>= levels - take;
            chunks.push_bits(b as u32, take);
            chunk_bits += u64::from(take);
            popped += 1;
        }
        let y = d + c;
        out[i] = i16::try_from(y).map_err(|_| {
            Error::Inconsistent(format!("recovered value {y} at {i} exceeds 16 bits"))
        })?;
    }

    let needed = PAYLOAD_BITS as u64 * marked.location_map.len() as u64;
    let expected = needed - u64::from(marked.tail_bits).min(needed);
    if chunk_bits < expected {
        return Err(Error::Inconsistent(format!(
            "recovered {chunk_bits} payload bits, header promises {expected}"
        )));
    }

    let mut truncated = None;
    let mut remaining = chunk_bits;
    for &pos in &marked.location_map {
        let word = chunks.pop();
        let have = remaining.min(u64::from(PAYLOAD_BITS)) as u32;
        remaining -= u64::from(have);
        let key_word = key.next_u16();
        out[pos] = match word {
            Some(w) if have == PAYLOAD_BITS => ((w as u16) ^ key_word) as i16,
            _ => {
                // partial word: known high bits, unknown bits zeroed
                let (rem, rem_len) = chunks.remainder();
                let known = if word.is_none() && rem_len == have { rem } else { 0 };
                let cipher = if have == 0 { 0 } else { known << (PAYLOAD_BITS - have) };
                let keep = !mask(PAYLOAD_BITS - have) & 0xFFFF;
                truncated = Some(pos);
                (((cipher as u16) ^ key_word) & keep as u16) as i16
            }
        };
    }
    Ok(Extraction {
        values: out,
        truncated,
    })
}
