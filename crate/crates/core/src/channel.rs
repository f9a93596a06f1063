//! Seeded binary erasure channel and the feedback session harness.
//!
//! The channel consumes exactly one uniform draw per use, so transcripts are
//! bit-reproducible from the 64-bit seed (ChaCha8, a portable counter-based
//! generator). The harness enforces unit-delay feedback by construction: the
//! encoder commits to an input before the output for that step exists.

use alloc::vec::Vec;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::capacity::ErasureProb;
use crate::coding::{StepKind, Transcript};
use crate::{Error, Result};

/// Channel output alphabet: the input bit or the erasure symbol '?'.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ternary {
    Zero,
    One,
    Erased,
}

impl Ternary {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Ternary::One
        } else {
            Ternary::Zero
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Ternary::Zero => '0',
            Ternary::One => '1',
            Ternary::Erased => '?',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub epsilon: ErasureProb,
    pub seed: u64,
}

/// Memoryless erasure channel: each input is erased independently with
/// probability ε, using one rng draw per transmission.
#[derive(Debug, Clone)]
pub struct ErasureChannel {
    epsilon: f64,
    rng: ChaCha8Rng,
}

impl ErasureChannel {
    pub fn new(config: ChannelConfig) -> Self {
        ErasureChannel {
            epsilon: config.epsilon.value(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        }
    }

    pub fn transmit(&mut self, x: bool) -> Ternary {
        let u: f64 = self.rng.gen();
        if u < self.epsilon {
            Ternary::Erased
        } else {
            Ternary::from_bit(x)
        }
    }
}

/// True iff the sequence has no two consecutive ones.
pub fn check_rll(x: &[bool]) -> bool {
    x.windows(2).all(|w| !(w[0] && w[1]))
}

/// Erasure indicator sequence, θ_i ~ Ber(ε) independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErasurePattern {
    pub theta: Vec<bool>,
}

impl ErasurePattern {
    pub fn sample(eps: ErasureProb, len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = (0..len).map(|_| rng.gen::<f64>() < eps.value()).collect();
        ErasurePattern { theta }
    }
}

/// Zeroes the input wherever the pattern erases it. The channel output is
/// unchanged by this substitution and the no-consecutive-ones constraint is
/// preserved, since ones only ever become zeros.
pub fn erasure_replace(x: &[bool], theta: &[bool]) -> Result<Vec<bool>> {
    if x.len() != theta.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: theta.len(),
        });
    }
    Ok(x.iter().zip(theta).map(|(&xi, &ti)| xi && !ti).collect())
}

/// Deterministic channel action for a fixed erasure pattern.
pub fn apply_pattern(x: &[bool], theta: &[bool]) -> Result<Vec<Ternary>> {
    if x.len() != theta.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: theta.len(),
        });
    }
    Ok(x.iter()
        .zip(theta)
        .map(|(&xi, &ti)| if ti { Ternary::Erased } else { Ternary::from_bit(xi) })
        .collect())
}

/// What a decoder reports about its state after absorbing one output.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo<'a> {
    pub kind: StepKind,
    pub set_size: &'a BigUint,
    pub delivered_bits: f64,
}

/// Encoder side of a feedback session. `next_input` must depend only on the
/// message and the outputs observed so far; the harness calls it strictly
/// before the output of the current step exists.
pub trait FeedbackEncoder {
    fn next_input(&mut self) -> bool;
    fn observe(&mut self, y: Ternary) -> Result<()>;
    fn finished(&self) -> bool;
}

/// Decoder side of a feedback session, driven purely by channel outputs.
pub trait FeedbackDecoder {
    fn observe(&mut self, y: Ternary) -> Result<()>;
    fn finished(&self) -> bool;
    fn step_info(&self) -> StepInfo<'_>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRun {
    pub transcript: Transcript,
    /// False when the use budget ran out first; the decoder's surviving set
    /// still contains the true message in that case.
    pub completed: bool,
}

/// Drives one encoder/decoder pair over a fresh channel until the decoder
/// finishes or `max_uses` is spent.
pub fn run_session<E: FeedbackEncoder, D: FeedbackDecoder>(
    encoder: &mut E,
    decoder: &mut D,
    config: ChannelConfig,
    max_uses: u64,
) -> Result<SessionRun> {
    let mut channel = ErasureChannel::new(config);
    let mut transcript = Transcript::new();
    while !decoder.finished() {
        if transcript.channel_uses >= max_uses {
            return Ok(SessionRun {
                transcript,
                completed: false,
            });
        }
        let x = encoder.next_input();
        let y = channel.transmit(x);
        encoder.observe(y)?;
        decoder.observe(y)?;
        transcript.record(x, y, &decoder.step_info());
    }
    Ok(SessionRun {
        transcript,
        completed: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eps(e: f64) -> ErasureProb {
        ErasureProb::new(e).unwrap()
    }

    #[test]
    fn transmit_extremes() {
        let mut clean = ErasureChannel::new(ChannelConfig { epsilon: eps(0.0), seed: 1 });
        for _ in 0..100 {
            assert_eq!(clean.transmit(true), Ternary::One);
            assert_eq!(clean.transmit(false), Ternary::Zero);
        }
        let mut dead = ErasureChannel::new(ChannelConfig { epsilon: eps(1.0), seed: 1 });
        for _ in 0..100 {
            assert_eq!(dead.transmit(false), Ternary::Erased);
        }
    }

    #[test]
    fn erasure_positions_independent_of_input() {
        // one draw per use: the erasure pattern depends only on the seed
        let mut a = ErasureChannel::new(ChannelConfig { epsilon: eps(0.5), seed: 42 });
        let mut b = ErasureChannel::new(ChannelConfig { epsilon: eps(0.5), seed: 42 });
        for _ in 0..1000 {
            let ya = a.transmit(false);
            let yb = b.transmit(true);
            assert_eq!(ya == Ternary::Erased, yb == Ternary::Erased);
        }
    }

    #[test]
    fn erasure_fraction_matches_epsilon() {
        let mut ch = ErasureChannel::new(ChannelConfig { epsilon: eps(0.5), seed: 9 });
        let erased = (0..1_000_000).filter(|_| ch.transmit(false) == Ternary::Erased).count();
        let fraction = erased as f64 / 1e6;
        assert!((fraction - 0.5).abs() < 0.002, "fraction {fraction}");
    }

    #[test]
    fn rll_checks() {
        assert!(check_rll(&[true, false, true, false, true]));
        assert!(!check_rll(&[false, true, true, false]));
        assert!(check_rll(&[]));
    }

    #[test]
    fn erasure_replace_cases() {
        let x = [true, false, true];
        assert_eq!(erasure_replace(&x, &[false, true, false]).unwrap(), [true, false, true]);
        assert_eq!(erasure_replace(&x, &[true, false, false]).unwrap(), [false, false, true]);
        assert!(erasure_replace(&x, &[false, false]).is_err());
    }

    #[test]
    fn replaced_inputs_give_identical_outputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let len = rng.gen_range(0..64usize);
            // random sequence respecting the constraint
            let mut x = Vec::with_capacity(len);
            let mut prev = false;
            for _ in 0..len {
                let bit = !prev && rng.gen::<bool>();
                x.push(bit);
                prev = bit;
            }
            let theta: Vec<bool> = (0..len).map(|_| rng.gen::<f64>() < 0.4).collect();
            let replaced = erasure_replace(&x, &theta).unwrap();
            assert_eq!(apply_pattern(&x, &theta).unwrap(), apply_pattern(&replaced, &theta).unwrap());
            assert!(check_rll(&replaced));
        }
    }
}
