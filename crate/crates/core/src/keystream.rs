//! Seeded keystream and XOR protection.
//!
//! The keystream is ChaCha20 (20 rounds, 64-bit block counter, 64-bit
//! nonce as in the original construction). The 256-bit ChaCha key is
//! `SHA-256(key material)`; the nonce is the caller's stream id, which the
//! stream pipeline sets to the operator seed so separate acquisitions under
//! one key file draw disjoint pads. Keystream bytes are consumed in order and
//! each byte is read most-significant bit first.
//!
//! Reference vector: the raw all-zero ChaCha key with nonce 0 starts with
//! bytes `76 b8 e0 ad a0 f1 3d 90`.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MIN_KEY_BYTES: usize = 16;

/// Key material plus a position in its keystream.
#[derive(Clone, PartialEq, Eq)]
pub struct KeySpec {
    material: Vec<u8>,
    stream_id: u64,
    position: u64,
}

impl std::fmt::Debug for KeySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeySpec")
            .field("material", &format_args!("<{} bytes>", self.material.len()))
            .field("stream_id", &self.stream_id)
            .field("position", &self.position)
            .finish()
    }
}

impl KeySpec {
    pub fn new(material: &[u8]) -> Result<Self> {
        if material.len() < MIN_KEY_BYTES {
            return Err(Error::ShortKey(material.len()));
        }
        Ok(Self {
            material: material.to_vec(),
            stream_id: 0,
            position: 0,
        })
    }

    pub fn with_stream(mut self, stream_id: u64) -> Self {
        self.stream_id = stream_id;
        self
    }

    /// Bit offset into the keystream.
    pub fn at_position(mut self, bits: u64) -> Self {
        self.position = bits;
        self
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    fn chacha_key(&self) -> [u8; 32] {
        Sha256::digest(&self.material).into()
    }

    /// A cursor positioned at this key's offset.
    pub fn stream(&self) -> Keystream {
        let mut ks = Keystream::from_raw_key(self.chacha_key(), self.stream_id);
        ks.seek(self.position);
        ks
    }
}

/// Anything that can hand out protection bits in order.
pub trait KeySource {
    /// Next `width` (≤ 64) bits, first bit in the most significant position.
    fn next_bits(&mut self, width: u32) -> u64;

    /// Total bits handed out so far.
    fn bits_consumed(&self) -> u64;

    fn next_u16(&mut self) -> u16 {
        self.next_bits(16) as u16
    }
}

const BUF_BYTES: usize = 64;

/// Sequential ChaCha20 keystream reader.
pub struct Keystream {
    rng: ChaCha20Rng,
    buf: [u8; BUF_BYTES],
    // bit index into `buf`; BUF_BYTES * 8 means empty
    bit: usize,
    consumed: u64,
}

impl Keystream {
    pub fn from_raw_key(key: [u8; 32], stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream_id);
        Self {
            rng,
            buf: [0; BUF_BYTES],
            bit: BUF_BYTES * 8,
            consumed: 0,
        }
    }

    /// Jumps to absolute bit offset `bits`.
    pub fn seek(&mut self, bits: u64) {
        self.rng.set_word_pos(u128::from(bits / 32));
        self.bit = BUF_BYTES * 8;
        self.refill();
        self.bit = (bits % 32) as usize;
        self.consumed = 0;
    }

    fn refill(&mut self) {
        // whole-word fills keep the ChaCha word position aligned with `buf`
        self.rng.fill_bytes(&mut self.buf);
        self.bit = 0;
    }

    fn next_bit(&mut self) -> u64 {
        if self.bit == BUF_BYTES * 8 {
            self.refill();
        }
        let byte = self.buf[self.bit / 8];
        let b = (byte >> (7 - (self.bit % 8))) & 1;
        self.bit += 1;
        u64::from(b)
    }
}

impl KeySource for Keystream {
    fn next_bits(&mut self, width: u32) -> u64 {
        assert!(width <= 64);
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.next_bit();
        }
        self.consumed += u64::from(width);
        v
    }

    fn bits_consumed(&self) -> u64 {
        self.consumed
    }
}

/// A non-secret source repeating one 16-bit pattern; handy for worked
/// examples (all-zero key) and tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstantKey {
    pattern: u16,
    consumed: u64,
}

impl ConstantKey {
    pub fn new(pattern: u16) -> Self {
        Self {
            pattern,
            consumed: 0,
        }
    }

    pub fn zeros() -> Self {
        Self::new(0)
    }

    pub fn ones() -> Self {
        Self::new(u16::MAX)
    }
}

impl KeySource for ConstantKey {
    fn next_bits(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for _ in 0..width {
            let idx = (self.consumed % 16) as u32;
            let b = (self.pattern >> (15 - idx)) & 1;
            v = (v << 1) | u64::from(b);
            self.consumed += 1;
        }
        v
    }

    fn bits_consumed(&self) -> u64 {
        self.consumed
    }
}

/// `count` keystream bits (values 0/1) starting at the key's position.
pub fn keystream_bits(key: &KeySpec, count: usize) -> Vec<u8> {
    let mut ks = key.stream();
    (0..count).map(|_| ks.next_bits(1) as u8).collect()
}

/// Bitwise XOR of two equal-length bit sequences.
pub fn xor_protect(plain: &[u8], key: &[u8]) -> Result<Vec<u8>> {
    if plain.len() != key.len() {
        return Err(Error::SizeMismatch {
            expected: plain.len(),
            actual: key.len(),
        });
    }
    Ok(plain.iter().zip(key).map(|(p, k)| p ^ k).collect())
}
