//! Counter-based random numbers.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! a 128-bit counter, computed with Philox4x32-10 (Salmon et al., "Parallel
//! random numbers: as easy as 1, 2, 3"). Nothing depends on iteration order or
//! worker count.
//!
//! Key layout (generator version [`GENERATOR_VERSION`]):
//!
//! * A *domain key* is derived from the user seed as
//!   `philox(key = seed, ctr = [domain, 0, 0, 0])`, words 0 and 1 packed
//!   little-endian into a `u64`. Domains are the `DOMAIN_*` constants.
//! * Displacement-class streams use the class domain key and counter
//!   `[code_lo, code_hi, block_lo, block_hi]`, where `code` is
//!   [`encode_lattice`] of the canonical displacement and `block` counts
//!   4-word output blocks from zero.
//! * Per-pair uniforms use the pair domain key and counter
//!   `[disp_lo, disp_hi, point_lo, point_hi]` with the encoded displacement
//!   and the encoded smaller endpoint.
//! * Replica seeds use the replica domain key and counter `[i_lo, i_hi, 0, 0]`.

use rand_core::RngCore;

pub const GENERATOR_VERSION: &str = "philox4x32-10/v1";

pub const DOMAIN_CLASS: u32 = 0x434c_4153; // "CLAS"
pub const DOMAIN_PAIR: u32 = 0x5041_4952; // "PAIR"
pub const DOMAIN_REPLICA: u32 = 0x5245_504c; // "REPL"
pub const DOMAIN_BOOTSTRAP: u32 = 0x424f_4f54; // "BOOT"
pub const DOMAIN_AUX: u32 = 0x4155_5856; // "AUXV"

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

#[inline]
fn split(v: u64) -> (u32, u32) {
    (v as u32, (v >> 32) as u32)
}

#[inline]
fn key_of(seed: u64) -> [u32; 2] {
    let (lo, hi) = split(seed);
    [lo, hi]
}

/// Derives the key for one random domain from a user seed.
pub fn domain_key(seed: u64, domain: u32) -> u64 {
    let out = philox4x32([domain, 0, 0, 0], key_of(seed));
    (out[0] as u64) | ((out[1] as u64) << 32)
}

/// Evaluates the generator at a 128-bit counter given as two `u64` halves.
#[inline]
pub fn block(key: u64, lo: u64, hi: u64) -> [u32; 4] {
    let (a, b) = split(lo);
    let (c, d) = split(hi);
    philox4x32([a, b, c, d], key_of(key))
}

/// Uniform in `[0, 1)` with 53 bits of precision from the first two words.
#[inline]
pub fn unit_f64(words: [u32; 4]) -> f64 {
    let bits = ((words[0] as u64) | ((words[1] as u64) << 32)) >> 11;
    bits as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed for replica `index` of an experiment seeded with `seed0`.
pub fn replica_seed(seed0: u64, index: u64) -> u64 {
    let w = block(domain_key(seed0, DOMAIN_REPLICA), index, 0);
    (w[0] as u64) | ((w[1] as u64) << 32)
}

/// Packs a lattice point into 64 bits: each coordinate zigzag-encoded into
/// `64 / d` bits, first coordinate in the low bits. Returns `None` if a
/// coordinate does not fit.
pub fn encode_lattice(point: &[i64]) -> Option<u64> {
    let d = point.len();
    if d == 0 || d > 64 {
        return None;
    }
    let bits = 64 / d as u32;
    let mut out = 0u64;
    for (i, &x) in point.iter().enumerate() {
        let z = ((x << 1) ^ (x >> 63)) as u64;
        if bits < 64 && z >> bits != 0 {
            return None;
        }
        out |= z << (bits * i as u32);
    }
    Some(out)
}

/// Largest coordinate magnitude that [`encode_lattice`] accepts in dimension `d`.
pub fn max_encodable(d: usize) -> i64 {
    let bits = 64 / d.max(1) as u32;
    if bits >= 64 {
        i64::MAX / 2
    } else {
        (1i64 << (bits - 1)) - 1
    }
}

/// A sequential stream over consecutive counters `[id_lo, id_hi, n, n>>32]`.
#[derive(Clone, Debug)]
pub struct PhiloxStream {
    key: u64,
    id: u64,
    next_block: u64,
    buf: [u32; 4],
    pos: usize,
}

impl PhiloxStream {
    pub fn new(key: u64, id: u64) -> Self {
        Self {
            key,
            id,
            next_block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Stream `id` in `domain` for user seed `seed`.
    pub fn for_domain(seed: u64, domain: u32, id: u64) -> Self {
        Self::new(domain_key(seed, domain), id)
    }

    #[inline]
    fn refill(&mut self) {
        self.buf = block(self.key, self.id, self.next_block);
        self.next_block += 1;
        self.pos = 0;
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            let lo = m as u64;
            if lo >= n || lo >= n.wrapping_neg() % n {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for PhiloxStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors from the Random123 distribution (kat_vectors).
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn stream_is_reproducible_and_distinct() {
        let mut a = PhiloxStream::for_domain(7, DOMAIN_CLASS, 3);
        let mut b = PhiloxStream::for_domain(7, DOMAIN_CLASS, 3);
        let mut c = PhiloxStream::for_domain(7, DOMAIN_CLASS, 4);
        let xa: Vec<u64> = (0..10).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..10).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..10).map(|_| c.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn lattice_encoding_is_injective_on_small_range() {
        let mut seen = std::collections::HashSet::new();
        for x in -20..=20 {
            for y in -20..=20 {
                assert!(seen.insert(encode_lattice(&[x, y]).unwrap()));
            }
        }
        assert!(encode_lattice(&[1 << 40, 0]).is_none());
        assert!(encode_lattice(&[max_encodable(2), -max_encodable(2)]).is_some());
    }

    #[test]
    fn below_stays_in_range() {
        let mut s = PhiloxStream::new(1, 2);
        for n in [1u64, 2, 3, 7, 1000, u64::MAX] {
            for _ in 0..100 {
                assert!(s.below(n) < n);
            }
        }
    }
}
