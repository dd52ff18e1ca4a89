//! Philox4x32-10 counter-based random numbers.
//!
//! Salmon, Moraes, Dror & Shaw, "Parallel random numbers: as easy as 1, 2, 3"
//! (SC'11). The generator is a keyed bijection on 128-bit counters, so any
//! block of any stream can be computed directly without touching the others.
//!
//! A Monte Carlo trial owns the stream keyed by the run seed whose counter is
//! `[block_lo, block_hi, trial_lo, trial_hi]`. Random bits are taken from the
//! words of each block in order, least significant bit first.

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const ROUNDS: usize = 10;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32-10 block.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..ROUNDS {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

/// The random stream of one trial.
#[derive(Debug, Clone)]
pub struct TrialStream {
    key: [u32; 2],
    trial: u64,
    block: u64,
    words: [u32; 4],
    word_idx: usize,
    bits: u32,
    bits_left: u32,
}

impl TrialStream {
    pub fn new(seed: u64, trial: u64) -> Self {
        TrialStream {
            key: [seed as u32, (seed >> 32) as u32],
            trial,
            block: 0,
            words: [0; 4],
            word_idx: 4,
            bits: 0,
            bits_left: 0,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.word_idx == 4 {
            let ctr = [self.block as u32, (self.block >> 32) as u32, self.trial as u32, (self.trial >> 32) as u32];
            self.words = philox4x32(ctr, self.key);
            self.block += 1;
            self.word_idx = 0;
        }
        let w = self.words[self.word_idx];
        self.word_idx += 1;
        w
    }

    /// A fair coin flip.
    pub fn bit(&mut self) -> u8 {
        if self.bits_left == 0 {
            self.bits = self.next_u32();
            self.bits_left = 32;
        }
        let b = (self.bits & 1) as u8;
        self.bits >>= 1;
        self.bits_left -= 1;
        b
    }

    /// Uniform in `0..4`, from two coin flips (low bit first).
    pub fn two_bits(&mut self) -> u8 {
        let lo = self.bit();
        lo | (self.bit() << 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors distributed with Random123 (kat_vectors, philox4x32_10).
    #[test]
    fn known_answers() {
        assert_eq!(philox4x32([0; 4], [0; 2]), [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]);
        assert_eq!(philox4x32([u32::MAX; 4], [u32::MAX; 2]), [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]);
        assert_eq!(
            philox4x32([0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344], [0xa409_3822, 0x299f_31d0]),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn streams_are_replayable_and_distinct() {
        let a: Vec<u32> = {
            let mut s = TrialStream::new(42, 7);
            (0..9).map(|_| s.next_u32()).collect()
        };
        let b: Vec<u32> = {
            let mut s = TrialStream::new(42, 7);
            (0..9).map(|_| s.next_u32()).collect()
        };
        let c: Vec<u32> = {
            let mut s = TrialStream::new(42, 8);
            (0..9).map(|_| s.next_u32()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bits_follow_words_lsb_first() {
        let mut words = TrialStream::new(1, 2);
        let w = words.next_u32();
        let mut bits = TrialStream::new(1, 2);
        let rebuilt = (0..32).fold(0u32, |acc, i| acc | (u32::from(bits.bit()) << i));
        assert_eq!(rebuilt, w);
    }

    #[test]
    fn coin_is_roughly_fair() {
        let mut s = TrialStream::new(2024, 0);
        let ones: u32 = (0..100_000).map(|_| u32::from(s.bit())).sum();
        // 5 standard deviations of Bin(1e5, 1/2)
        assert!((f64::from(ones) - 50_000.0).abs() < 5.0 * 158.2);
    }
}
