//! Zero-error feedback coding scheme over the constrained erasure channel.
//!
//! Messages are identified with equally spaced points of the unit interval.
//! At every step the current message set carries one of two labellings: L1
//! puts the '1' block on the topmost `floor(p·size)` ranks, L2 on the block
//! immediately below it. The encoder transmits the label of its message's
//! rank; erasures swap the labelling (which preserves the no-consecutive-ones
//! constraint), a received symbol filters the set down to the matching label
//! class, and a received '1' forces one '0' transmission before the next
//! round. Both parties see the same outputs, so they track identical state
//! and no decoding error is possible — channel noise only stretches time.
//!
//! Sets are never materialized: a set is its size plus the log of filter
//! events, each of which keeps one or two contiguous rank blocks. The encoder
//! tracks its message as a single rank; the decoder inverts the event log
//! once at the end. All size arithmetic is exact big-integer work, so encoder
//! and decoder stay bit-identical for message spaces of any size.
//!
//! A transmission runs this interval scheme until at most `2^λ` messages
//! remain, then sends the surviving rank with a repetition code: each residual
//! bit is sent as the pair (bit, 0) until the pair's first slot arrives
//! unerased.

use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::capacity::{binary_entropy_unchecked, feedback_capacity, optimal_p, ErasureProb};
use crate::channel::{ErasureChannel, FeedbackDecoder, FeedbackEncoder, StepInfo, Ternary};
use crate::{Error, Result};

/// A probability stored exactly as `num / 2^shift`.
///
/// `f64` values are dyadic rationals, so this representation is lossless and
/// makes `floor(p·n)` an exact integer computation &mdash; the one place where
/// encoder and decoder must agree bit-for-bit on rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicProb {
    num: u64,
    shift: u32,
}

impl DyadicProb {
    pub fn from_f64(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityOutOfRange { name: "p", value: p });
        }
        if p == 0.0 {
            return Ok(DyadicProb { num: 0, shift: 0 });
        }
        let bits = p.to_bits();
        let exp_field = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (mut num, exp) = if exp_field == 0 {
            (frac, -1074i64)
        } else {
            (frac | (1u64 << 52), exp_field - 1075)
        };
        let mut shift = (-exp) as u32;
        while num & 1 == 0 && shift > 0 {
            num >>= 1;
            shift -= 1;
        }
        Ok(DyadicProb { num, shift })
    }

    pub fn value(self) -> f64 {
        self.num as f64 * libm::exp2(-(self.shift as f64))
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    /// `floor(p·n)`, exactly.
    pub fn floor_mul(self, n: &BigUint) -> BigUint {
        (n * self.num) >> self.shift
    }
}

/// `ceil(log2(n))` for n ≥ 1; the number of bits needed to index n items.
pub(crate) fn ceil_log2(n: &BigUint) -> u64 {
    if n <= &BigUint::one() {
        0
    } else {
        (n - 1u32).bits()
    }
}

/// `log2(n)` as f64, accurate to roundoff for any magnitude.
pub(crate) fn log2_biguint(n: &BigUint) -> f64 {
    let b = n.bits();
    if b == 0 {
        return f64::NEG_INFINITY;
    }
    if b <= 53 {
        libm::log2(n.to_f64().expect("fits in f64"))
    } else {
        let top = (n >> (b - 53)).to_f64().expect("53 bits fit");
        libm::log2(top) + (b - 53) as f64
    }
}

/// The two alternating partitions of the rank space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelVariant {
    /// '1' block on the topmost `ones_count` ranks.
    L1,
    /// '1' block immediately below the L1 block.
    L2,
}

/// A partition of ranks `0..size` into a '0' class and a contiguous '1' block
/// of `floor(p·size)` ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labelling {
    size: BigUint,
    ones_count: BigUint,
    variant: LabelVariant,
}

impl Labelling {
    /// Builds the labelling for a set of `size` ranks.
    ///
    /// L2 needs room for two disjoint blocks of `floor(p·size)` ranks, which
    /// always holds for p ≤ 1/2.
    pub fn build(p: DyadicProb, size: &BigUint, variant: LabelVariant) -> Result<Self> {
        if size.is_zero() {
            return Err(Error::LabellingTooSmall { size: 0, ones_count: 0 });
        }
        let ones_count = p.floor_mul(size);
        if variant == LabelVariant::L2 && &ones_count + &ones_count > *size {
            return Err(Error::LabellingTooSmall {
                size: size.to_u64().unwrap_or(u64::MAX),
                ones_count: ones_count.to_u64().unwrap_or(u64::MAX),
            });
        }
        Ok(Labelling {
            size: size.clone(),
            ones_count,
            variant,
        })
    }

    pub fn size(&self) -> &BigUint {
        &self.size
    }

    pub fn ones_count(&self) -> &BigUint {
        &self.ones_count
    }

    pub fn variant(&self) -> LabelVariant {
        self.variant
    }

    /// Half-open rank range `[lo, hi)` carrying label '1'.
    pub fn ones_block(&self) -> (BigUint, BigUint) {
        match self.variant {
            LabelVariant::L1 => (&self.size - &self.ones_count, self.size.clone()),
            LabelVariant::L2 => (
                &self.size - (&self.ones_count << 1),
                &self.size - &self.ones_count,
            ),
        }
    }

    pub fn label_of(&self, rank: &BigUint) -> bool {
        let (lo, hi) = self.ones_block();
        *rank >= lo && *rank < hi
    }

    /// The other labelling over the same set; the swap flips every '1' to a
    /// '0', never '1' to '1', so consecutive transmissions cannot both be '1'.
    pub fn swapped(&self) -> Result<Self> {
        let variant = match self.variant {
            LabelVariant::L1 => LabelVariant::L2,
            LabelVariant::L2 => LabelVariant::L1,
        };
        if variant == LabelVariant::L2 && &self.ones_count + &self.ones_count > self.size {
            return Err(Error::LabellingTooSmall {
                size: self.size.to_u64().unwrap_or(u64::MAX),
                ones_count: self.ones_count.to_u64().unwrap_or(u64::MAX),
            });
        }
        Ok(Labelling {
            size: self.size.clone(),
            ones_count: self.ones_count.clone(),
            variant,
        })
    }
}

/// Convenience wrapper matching the operation-style API.
pub fn build_labelling(p: f64, size: u64, variant: LabelVariant) -> Result<Labelling> {
    Labelling::build(DyadicProb::from_f64(p)?, &BigUint::from(size), variant)
}

/// One surviving-class filter: which labelling was active and which label was
/// received. Together with the replayable sizes this fixes the rank maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterEvent {
    pub variant: LabelVariant,
    pub received_one: bool,
}

/// Maps a pre-filter rank to its post-filter rank, or `None` if filtered out.
/// `s` is the size before the filter, `k` the ones count.
fn forward_rank(ev: FilterEvent, s: &BigUint, k: &BigUint, rank: &BigUint) -> Option<BigUint> {
    let zeros_top = s - k; // L1 '1' block starts here
    match (ev.variant, ev.received_one) {
        (LabelVariant::L1, true) => (rank >= &zeros_top).then(|| rank - &zeros_top),
        (LabelVariant::L1, false) => (rank < &zeros_top).then(|| rank.clone()),
        (LabelVariant::L2, true) => {
            let lo = s - (k << 1);
            (rank >= &lo && rank < &zeros_top).then(|| rank - &lo)
        }
        (LabelVariant::L2, false) => {
            let lo = s - (k << 1);
            if rank < &lo {
                Some(rank.clone())
            } else if rank >= &zeros_top {
                Some(rank - k)
            } else {
                None
            }
        }
    }
}

/// Inverse of [`forward_rank`] on the surviving class.
fn backward_rank(ev: FilterEvent, s: &BigUint, k: &BigUint, rank: &BigUint) -> BigUint {
    match (ev.variant, ev.received_one) {
        (LabelVariant::L1, true) => rank + (s - k),
        (LabelVariant::L1, false) => rank.clone(),
        (LabelVariant::L2, true) => rank + (s - (k << 1)),
        (LabelVariant::L2, false) => {
            let lo = s - (k << 1);
            if rank < &lo {
                rank.clone()
            } else {
                rank + k
            }
        }
    }
}

fn size_after(ev: FilterEvent, s: &BigUint, k: &BigUint) -> BigUint {
    if ev.received_one {
        k.clone()
    } else {
        s - k
    }
}

/// The ordered set of still-possible messages.
///
/// Rank `r` of the current set corresponds to the point `r/size` of the unit
/// interval; the original message indices are recovered by inverting the
/// filter log, and remain in ascending order because every filter keeps rank
/// blocks in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageSet {
    initial_size: BigUint,
    size: BigUint,
    p: DyadicProb,
    events: Vec<FilterEvent>,
}

impl MessageSet {
    pub fn new(total_messages: BigUint, p: DyadicProb) -> Self {
        MessageSet {
            size: total_messages.clone(),
            initial_size: total_messages,
            p,
            events: Vec::new(),
        }
    }

    pub fn size(&self) -> &BigUint {
        &self.size
    }

    pub fn initial_size(&self) -> &BigUint {
        &self.initial_size
    }

    pub fn is_singleton(&self) -> bool {
        self.size == BigUint::one()
    }

    pub fn events(&self) -> &[FilterEvent] {
        &self.events
    }

    /// Sizes and ones counts at the time of each recorded filter.
    fn replay(&self) -> Vec<(BigUint, BigUint)> {
        let mut out = Vec::with_capacity(self.events.len());
        let mut s = self.initial_size.clone();
        for &ev in &self.events {
            let k = self.p.floor_mul(&s);
            let next = size_after(ev, &s, &k);
            out.push((s, k));
            s = next;
        }
        out
    }

    /// Original message index sitting at `rank` of the current set.
    pub fn original_index(&self, rank: &BigUint) -> Result<BigUint> {
        if rank >= &self.size {
            return Err(Error::UnknownMessage);
        }
        let sizes = self.replay();
        let mut r = rank.clone();
        for (&ev, (s, k)) in self.events.iter().zip(&sizes).rev() {
            r = backward_rank(ev, s, k, &r);
        }
        Ok(r)
    }

    /// Current rank of an original message index, if it is still possible.
    pub fn rank_of(&self, original: &BigUint) -> Result<BigUint> {
        if original >= &self.initial_size {
            return Err(Error::UnknownMessage);
        }
        let sizes = self.replay();
        let mut r = original.clone();
        for (&ev, (s, k)) in self.events.iter().zip(&sizes) {
            r = forward_rank(ev, s, k, &r).ok_or(Error::UnknownMessage)?;
        }
        Ok(r)
    }

    /// All surviving original indices in rank order. Linear in
    /// `size × events`; meant for small sets.
    pub fn members(&self) -> Vec<BigUint> {
        let mut out = Vec::new();
        let mut r = BigUint::zero();
        while r < self.size {
            out.push(self.original_index(&r).expect("rank below size"));
            r += 1u32;
        }
        out
    }

    fn apply_filter(&mut self, labelling: &Labelling, received_one: bool) -> Result<()> {
        debug_assert_eq!(&self.size, labelling.size());
        if received_one && labelling.ones_count().is_zero() {
            return Err(Error::EmptyLabelClass);
        }
        let ev = FilterEvent {
            variant: labelling.variant(),
            received_one,
        };
        self.size = size_after(ev, &self.size, labelling.ones_count());
        self.events.push(ev);
        Ok(())
    }

    /// Keeps the members whose rank carries the received label and renumbers
    /// them onto `0..new_size`.
    pub fn filter_and_expand(&self, labelling: &Labelling, received_one: bool) -> Result<Self> {
        let mut next = self.clone();
        next.apply_filter(labelling, received_one)?;
        Ok(next)
    }
}

/// Protocol phase of one transmission procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// A fresh procedure: the set was just (re)expanded and labelled L1.
    GroundFresh,
    /// Inside an erasure run; the labelling alternates L1 ↔ L2.
    ErasureAlternating,
    /// A '1' was received: the next transmission is '0' regardless of the
    /// message, and the following advance ignores the outcome.
    ForcedZero,
}

/// Per-step tag recorded in transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Ground,
    ErasureAlt,
    ForcedZero,
    Fallback,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Ground => "ground",
            StepKind::ErasureAlt => "erasure_alt",
            StepKind::ForcedZero => "forced_zero",
            StepKind::Fallback => "fallback",
        }
    }
}

fn phase_kind(phase: Phase) -> StepKind {
    match phase {
        Phase::GroundFresh => StepKind::Ground,
        Phase::ErasureAlternating => StepKind::ErasureAlt,
        Phase::ForcedZero => StepKind::ForcedZero,
    }
}

/// Shared protocol state of the interval phase. The encoder and the decoder
/// hold separate instances and drive them with the same outputs, so the two
/// copies must stay equal step for step.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    set: MessageSet,
    labelling: Labelling,
    phase: Phase,
    p_star: f64,
    epsilon: f64,
}

impl SessionState {
    /// Fresh state over `total_messages` points, with p set to the
    /// capacity-achieving parameter for ε.
    pub fn new(eps: ErasureProb, total_messages: BigUint) -> Result<Self> {
        if total_messages.is_zero() {
            return Err(Error::UnknownMessage);
        }
        let p_star = feedback_capacity(eps).p_star;
        let p = DyadicProb::from_f64(p_star)?;
        let labelling = Labelling::build(p, &total_messages, LabelVariant::L1)?;
        Ok(SessionState {
            set: MessageSet::new(total_messages, p),
            labelling,
            phase: Phase::GroundFresh,
            p_star,
            epsilon: eps.value(),
        })
    }

    pub fn message_set(&self) -> &MessageSet {
        &self.set
    }

    pub fn labelling(&self) -> &Labelling {
        &self.labelling
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn p_star(&self) -> f64 {
        self.p_star
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Moves the state by one received symbol.
    ///
    /// Erasures swap the labelling; a received symbol filters the set and
    /// starts a fresh L1 round, with a received '1' first interposing the
    /// forced-zero step. The step after a forced zero returns to ground no
    /// matter what arrives, since the input was '0' by construction.
    pub fn advance(&mut self, y: Ternary) -> Result<()> {
        if self.phase == Phase::ForcedZero {
            self.labelling = Labelling::build(self.set.p, &self.set.size, LabelVariant::L1)?;
            self.phase = Phase::GroundFresh;
            return Ok(());
        }
        match y {
            Ternary::Erased => {
                self.labelling = self.labelling.swapped()?;
                self.phase = Phase::ErasureAlternating;
            }
            Ternary::Zero => {
                self.set.apply_filter(&self.labelling, false)?;
                self.labelling = Labelling::build(self.set.p, &self.set.size, LabelVariant::L1)?;
                self.phase = Phase::GroundFresh;
            }
            Ternary::One => {
                self.set.apply_filter(&self.labelling, true)?;
                self.labelling = Labelling::build(self.set.p, &self.set.size, LabelVariant::L1)?;
                self.phase = Phase::ForcedZero;
            }
        }
        Ok(())
    }
}

/// The channel input the encoder produces for a given message.
pub fn encode_step(state: &SessionState, message_index: &BigUint) -> Result<bool> {
    let rank = state.set.rank_of(message_index)?;
    Ok(match state.phase {
        Phase::ForcedZero => false,
        _ => state.labelling.label_of(&rank),
    })
}

/// Full record of one feedback session.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub inputs: Vec<bool>,
    pub outputs: Vec<Ternary>,
    /// θ_i = 1 exactly where the output is an erasure.
    pub erasure_flags: Vec<bool>,
    pub channel_uses: u64,
    /// Accumulated log2 shrinkage of the message set, plus one bit per
    /// resolved repetition-phase bit.
    pub delivered_bits: f64,
    step_kinds: Vec<StepKind>,
    /// Post-step set sizes, run-length encoded.
    set_sizes: Vec<(BigUint, u64)>,
}

/// One transcript row.
#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptStep<'a> {
    pub t: u64,
    pub input: bool,
    pub output: Ternary,
    pub erased: bool,
    pub kind: StepKind,
    pub set_size: &'a BigUint,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript {
            inputs: Vec::new(),
            outputs: Vec::new(),
            erasure_flags: Vec::new(),
            channel_uses: 0,
            delivered_bits: 0.0,
            step_kinds: Vec::new(),
            set_sizes: Vec::new(),
        }
    }

    pub fn record(&mut self, input: bool, output: Ternary, info: &StepInfo<'_>) {
        self.inputs.push(input);
        self.outputs.push(output);
        self.erasure_flags.push(output == Ternary::Erased);
        self.channel_uses += 1;
        self.delivered_bits = info.delivered_bits;
        self.step_kinds.push(info.kind);
        match self.set_sizes.last_mut() {
            Some((size, run)) if size == info.set_size => *run += 1,
            _ => self.set_sizes.push((info.set_size.clone(), 1)),
        }
    }

    pub fn step_kinds(&self) -> &[StepKind] {
        &self.step_kinds
    }

    pub fn steps(&self) -> impl Iterator<Item = TranscriptStep<'_>> {
        let sizes = self
            .set_sizes
            .iter()
            .flat_map(|(size, run)| core::iter::repeat_n(size, *run as usize));
        self.inputs
            .iter()
            .zip(&self.outputs)
            .zip(&self.step_kinds)
            .zip(sizes)
            .enumerate()
            .map(|(t, (((input, output), kind), set_size))| TranscriptStep {
                t: t as u64,
                input: *input,
                output: *output,
                erased: *output == Ternary::Erased,
                kind: *kind,
                set_size,
            })
    }

    /// True when no two consecutive inputs are '1'.
    pub fn rll_ok(&self) -> bool {
        crate::channel::check_rll(&self.inputs)
    }

    /// Channel uses of every completed interval-phase procedure, in order.
    ///
    /// A procedure runs from one ground state to the next: an erasure run,
    /// the received symbol ending it, and the forced zero when that symbol
    /// was '1'. Repetition-phase steps belong to no procedure; a truncated
    /// trailing procedure is not counted.
    pub fn procedure_lengths(&self) -> Vec<u64> {
        let mut lengths = Vec::new();
        let mut current = 0u64;
        for (i, kind) in self.step_kinds.iter().enumerate() {
            match kind {
                StepKind::Ground => {
                    current += 1;
                    lengths.push(current);
                    current = 0;
                }
                StepKind::ErasureAlt | StepKind::ForcedZero => current += 1,
                StepKind::Fallback => {
                    // the step that lands on ground and triggers the phase
                    // switch reports as fallback; it still closes a procedure
                    if i > 0 && self.step_kinds[i - 1] != StepKind::Fallback {
                        current += 1;
                        lengths.push(current);
                    }
                    break;
                }
            }
        }
        lengths
    }
}

impl Default for Transcript {
    fn default() -> Self {
        Self::new()
    }
}

enum EncoderStage {
    Main,
    Fallback { bits: Vec<bool>, next: usize, pending: Option<Ternary> },
    Done,
}

/// Encoder side of the full two-phase scheme.
pub struct SchemeEncoder {
    state: SessionState,
    rank: BigUint,
    threshold: BigUint,
    stage: EncoderStage,
    kind: StepKind,
}

impl SchemeEncoder {
    pub fn new(
        eps: ErasureProb,
        total_messages: BigUint,
        message_index: BigUint,
        lambda: u32,
    ) -> Result<Self> {
        let minimum = min_lambda(eps)?;
        if lambda < minimum {
            return Err(Error::LambdaTooSmall { lambda, minimum });
        }
        if message_index >= total_messages {
            return Err(Error::UnknownMessage);
        }
        let state = SessionState::new(eps, total_messages)?;
        let mut enc = SchemeEncoder {
            state,
            rank: message_index,
            threshold: BigUint::one() << lambda,
            stage: EncoderStage::Main,
            kind: StepKind::Ground,
        };
        enc.maybe_enter_fallback();
        Ok(enc)
    }

    pub fn session_state(&self) -> &SessionState {
        &self.state
    }

    /// `(width, resolved bits, mid-pair)` while in the repetition phase.
    pub fn fallback_progress(&self) -> Option<(u32, u32, bool)> {
        match &self.stage {
            EncoderStage::Fallback { bits, next, pending } => {
                Some((bits.len() as u32, *next as u32, pending.is_some()))
            }
            _ => None,
        }
    }

    fn maybe_enter_fallback(&mut self) {
        if !matches!(self.stage, EncoderStage::Main) || self.state.phase != Phase::GroundFresh {
            return;
        }
        if self.state.set.size > self.threshold {
            return;
        }
        let width = ceil_log2(&self.state.set.size);
        if width == 0 {
            self.stage = EncoderStage::Done;
            return;
        }
        let bits = (0..width)
            .rev()
            .map(|i| ((&self.rank >> i) & BigUint::one()) == BigUint::one())
            .collect();
        self.stage = EncoderStage::Fallback {
            bits,
            next: 0,
            pending: None,
        };
        self.kind = StepKind::Fallback;
    }
}

impl FeedbackEncoder for SchemeEncoder {
    fn next_input(&mut self) -> bool {
        match &self.stage {
            EncoderStage::Main => match self.state.phase {
                Phase::ForcedZero => false,
                _ => self.state.labelling.label_of(&self.rank),
            },
            EncoderStage::Fallback { bits, next, pending } => {
                if pending.is_some() {
                    false
                } else {
                    bits[*next]
                }
            }
            EncoderStage::Done => false,
        }
    }

    fn observe(&mut self, y: Ternary) -> Result<()> {
        match &mut self.stage {
            EncoderStage::Main => {
                if self.state.phase != Phase::ForcedZero && y != Ternary::Erased {
                    let s = self.state.set.size.clone();
                    let k = self.state.labelling.ones_count().clone();
                    let ev = FilterEvent {
                        variant: self.state.labelling.variant(),
                        received_one: y == Ternary::One,
                    };
                    // the feedback equals the unerased input, so the encoder's
                    // own message always survives the filter
                    self.rank = forward_rank(ev, &s, &k, &self.rank)
                        .ok_or(Error::UnknownMessage)?;
                }
                self.state.advance(y)?;
                self.kind = phase_kind(self.state.phase);
                self.maybe_enter_fallback();
            }
            EncoderStage::Fallback { bits, next, pending } => {
                match pending {
                    None => *pending = Some(y),
                    Some(first) => {
                        if *first != Ternary::Erased {
                            *next += 1;
                        }
                        *pending = None;
                        if *next == bits.len() {
                            self.stage = EncoderStage::Done;
                        }
                    }
                }
                self.kind = StepKind::Fallback;
            }
            EncoderStage::Done => {}
        }
        Ok(())
    }

    fn finished(&self) -> bool {
        matches!(self.stage, EncoderStage::Done)
    }
}

enum DecoderStage {
    Main,
    Fallback { width: u32, collected: Vec<bool>, pending: Option<Ternary> },
    Done { decoded: BigUint },
}

/// Decoder side; driven purely by the channel outputs.
pub struct SchemeDecoder {
    state: SessionState,
    threshold: BigUint,
    stage: DecoderStage,
    delivered_bits: f64,
    kind: StepKind,
}

impl SchemeDecoder {
    pub fn new(eps: ErasureProb, total_messages: BigUint, lambda: u32) -> Result<Self> {
        let minimum = min_lambda(eps)?;
        if lambda < minimum {
            return Err(Error::LambdaTooSmall { lambda, minimum });
        }
        let state = SessionState::new(eps, total_messages)?;
        let mut dec = SchemeDecoder {
            state,
            threshold: BigUint::one() << lambda,
            stage: DecoderStage::Main,
            delivered_bits: 0.0,
            kind: StepKind::Ground,
        };
        dec.maybe_enter_fallback()?;
        Ok(dec)
    }

    pub fn session_state(&self) -> &SessionState {
        &self.state
    }

    pub fn fallback_progress(&self) -> Option<(u32, u32, bool)> {
        match &self.stage {
            DecoderStage::Fallback { width, collected, pending } => {
                Some((*width, collected.len() as u32, pending.is_some()))
            }
            _ => None,
        }
    }

    /// The decoded original message index, once the session is complete.
    pub fn decoded(&self) -> Option<&BigUint> {
        match &self.stage {
            DecoderStage::Done { decoded } => Some(decoded),
            _ => None,
        }
    }

    /// Original indices still possible from the decoder's point of view.
    pub fn possible_messages(&self) -> Vec<BigUint> {
        self.state.set.members()
    }

    fn maybe_enter_fallback(&mut self) -> Result<()> {
        if !matches!(self.stage, DecoderStage::Main) || self.state.phase != Phase::GroundFresh {
            return Ok(());
        }
        if self.state.set.size > self.threshold {
            return Ok(());
        }
        let width = ceil_log2(&self.state.set.size);
        if width == 0 {
            let decoded = self.state.set.original_index(&BigUint::zero())?;
            self.stage = DecoderStage::Done { decoded };
            return Ok(());
        }
        self.stage = DecoderStage::Fallback {
            width: width as u32,
            collected: Vec::with_capacity(width as usize),
            pending: None,
        };
        self.kind = StepKind::Fallback;
        Ok(())
    }
}

impl FeedbackDecoder for SchemeDecoder {
    fn observe(&mut self, y: Ternary) -> Result<()> {
        match &mut self.stage {
            DecoderStage::Main => {
                if self.state.phase != Phase::ForcedZero && y != Ternary::Erased {
                    let before = log2_biguint(&self.state.set.size);
                    self.state.advance(y)?;
                    self.delivered_bits += before - log2_biguint(&self.state.set.size);
                } else {
                    self.state.advance(y)?;
                }
                self.kind = phase_kind(self.state.phase);
                self.maybe_enter_fallback()?;
            }
            DecoderStage::Fallback { width, collected, pending } => {
                match pending {
                    None => *pending = Some(y),
                    Some(first) => {
                        if *first != Ternary::Erased {
                            collected.push(*first == Ternary::One);
                            self.delivered_bits += 1.0;
                        }
                        *pending = None;
                        if collected.len() == *width as usize {
                            let mut rank = BigUint::zero();
                            for &bit in collected.iter() {
                                rank <<= 1u32;
                                if bit {
                                    rank += 1u32;
                                }
                            }
                            let decoded = self.state.set.original_index(&rank)?;
                            self.stage = DecoderStage::Done { decoded };
                        }
                    }
                }
                self.kind = StepKind::Fallback;
            }
            DecoderStage::Done { .. } => {}
        }
        Ok(())
    }

    fn finished(&self) -> bool {
        matches!(self.stage, DecoderStage::Done { .. })
    }

    fn step_info(&self) -> StepInfo<'_> {
        StepInfo {
            kind: self.kind,
            set_size: &self.state.set.size,
            delivered_bits: self.delivered_bits,
        }
    }
}

/// Smallest λ for which the interval phase always has a non-empty '1' block:
/// `2^λ ≥ 1/p_ε`, so any set larger than `2^λ` satisfies `floor(p·size) ≥ 1`.
pub fn min_lambda(eps: ErasureProb) -> Result<u32> {
    let p = if eps.value() >= 1.0 {
        feedback_capacity(eps).p_star
    } else {
        optimal_p(eps)?
    };
    let dy = DyadicProb::from_f64(p)?;
    if dy.is_zero() {
        return Err(Error::ProbabilityOutOfRange { name: "p", value: 0.0 });
    }
    let target = BigUint::one() << dy.shift;
    let num_bits = 64 - dy.num.leading_zeros();
    let mut lambda = (dy.shift + 1).saturating_sub(num_bits);
    while (BigUint::from(dy.num) << lambda) < target {
        lambda += 1;
    }
    while lambda > 0 && (BigUint::from(dy.num) << (lambda - 1)) >= target {
        lambda -= 1;
    }
    Ok(lambda)
}

/// Result of one complete transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitOutcome {
    pub decoded: BigUint,
    pub transcript: Transcript,
}

/// Channel-use budget used by [`transmit_message`]: 50× the expected length,
/// floored generously for tiny messages.
pub fn default_session_budget(eps: ErasureProb, total_messages: &BigUint, lambda: u32) -> u64 {
    let cap = feedback_capacity(eps);
    if cap.capacity_bits <= 0.0 {
        return 1000 + 10 * lambda as u64;
    }
    let bits = log2_biguint(total_messages).max(1.0);
    let expected = bits / cap.capacity_bits
        + 2.0 * lambda as f64 * eps.inv_complement()
        + eps.inv_complement()
        + 1.0;
    (50.0 * expected).min(9e15) as u64 + 1000
}

/// Runs the full scheme for one message over a fresh seeded channel.
///
/// Interval phase while more than `2^λ` messages survive, repetition phase
/// for the rest. The decoded index always equals the transmitted one; the
/// channel randomness only affects the transcript length.
pub fn transmit_message(
    eps: ErasureProb,
    message_index: &BigUint,
    total_messages: &BigUint,
    lambda: u32,
    seed: u64,
) -> Result<TransmitOutcome> {
    let mut encoder = SchemeEncoder::new(eps, total_messages.clone(), message_index.clone(), lambda)?;
    let mut decoder = SchemeDecoder::new(eps, total_messages.clone(), lambda)?;
    let config = crate::channel::ChannelConfig { epsilon: eps, seed };
    let max_uses = default_session_budget(eps, total_messages, lambda);
    let run = crate::channel::run_session(&mut encoder, &mut decoder, config, max_uses)?;
    if !run.completed {
        return Err(Error::MaxUsesExhausted { max_uses });
    }
    let decoded = decoder.decoded().expect("completed session").clone();
    Ok(TransmitOutcome {
        decoded,
        transcript: run.transcript,
    })
}

/// Outcome of sending raw bits with the repetition code.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackRun {
    pub channel_uses: u64,
    pub inputs: Vec<bool>,
    pub decoded: Vec<bool>,
}

/// Sends each bit as the pair (bit, 0) until the pair's first slot arrives
/// unerased; the received first slot is the bit. Expected cost is `2/(1−ε)`
/// uses per bit, i.e. rate `(1−ε)/2`.
pub fn fallback_transmit(bits: &[bool], channel: &mut ErasureChannel) -> FallbackRun {
    let mut inputs = Vec::new();
    let mut decoded = Vec::with_capacity(bits.len());
    for &bit in bits {
        loop {
            inputs.push(bit);
            let first = channel.transmit(bit);
            inputs.push(false);
            let _second = channel.transmit(false);
            match first {
                Ternary::Erased => continue,
                Ternary::One => {
                    decoded.push(true);
                    break;
                }
                Ternary::Zero => {
                    decoded.push(false);
                    break;
                }
            }
        }
    }
    FallbackRun {
        channel_uses: inputs.len() as u64,
        inputs,
        decoded,
    }
}

/// Expected channel uses of one ground-to-ground procedure: `1/(1−ε) + p_ε`.
pub fn expected_procedure_length(eps: ErasureProb) -> Result<f64> {
    if eps.value() >= 1.0 {
        return Err(Error::ErasureProbIsOne);
    }
    Ok(eps.inv_complement() + optimal_p(eps)?)
}

/// Guaranteed rate of the two-phase scheme carrying `n·R` message bits with
/// split parameter λ: the interval phase runs at least at
/// `H_b(p − 2^{−λ}) / (1/(1−ε) + p)` and the λ residual bits at `(1−ε)/2`.
pub fn rate_lower_bound(n: u64, rate_r: f64, lambda: u32, eps: ErasureProb) -> Result<f64> {
    if eps.value() >= 1.0 {
        return Err(Error::ErasureProbIsOne);
    }
    let n_r = n as f64 * rate_r;
    if lambda == 0 || n_r <= lambda as f64 {
        return Err(Error::LambdaTooSmall {
            lambda,
            minimum: 1,
        });
    }
    let p = optimal_p(eps)?;
    // below the feasibility floor the '1' block can be empty and the interval
    // phase is not guaranteed to deliver anything
    let worst_p = (p - libm::exp2(-(lambda as f64))).max(0.0);
    let main_rate = binary_entropy_unchecked(worst_p) / (eps.inv_complement() + p);
    let lam = lambda as f64;
    Ok((n_r - lam) / n_r * main_rate + lam / n_r * eps.complement() / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;

    fn eps(e: f64) -> ErasureProb {
        ErasureProb::new(e).unwrap()
    }

    fn big(n: u64) -> BigUint {
        BigUint::from(n)
    }

    #[test]
    fn dyadic_floor_mul_is_exact() {
        let p = DyadicProb::from_f64(0.4).unwrap();
        assert_eq!(p.floor_mul(&big(10)), big(4));
        assert_eq!(p.floor_mul(&big(1)), big(0));
        let half = DyadicProb::from_f64(0.5).unwrap();
        assert_eq!(half.floor_mul(&big(101)), big(50));
        assert_eq!(DyadicProb::from_f64(0.5).unwrap().value(), 0.5);
        let p_star = 0.4301597090019467;
        assert_eq!(DyadicProb::from_f64(p_star).unwrap().value(), p_star);
    }

    #[test]
    fn labelling_blocks() {
        let l1 = build_labelling(0.4, 10, LabelVariant::L1).unwrap();
        assert_eq!(l1.ones_block(), (big(6), big(10)));
        assert!(!l1.label_of(&big(5)));
        assert!(l1.label_of(&big(6)) && l1.label_of(&big(9)));

        let l2 = build_labelling(0.4, 10, LabelVariant::L2).unwrap();
        assert_eq!(l2.ones_block(), (big(2), big(6)));

        // a rank is never '1' under both labellings
        for r in 0..10u64 {
            assert!(!(l1.label_of(&big(r)) && l2.label_of(&big(r))));
        }

        let tiny = build_labelling(0.4, 1, LabelVariant::L1).unwrap();
        assert_eq!(tiny.ones_count(), &big(0));

        assert!(build_labelling(0.9, 3, LabelVariant::L2).is_err());
    }

    #[test]
    fn filter_keeps_rank_order() {
        let p = DyadicProb::from_f64(0.4).unwrap();
        let set = MessageSet::new(big(10), p);
        let l1 = Labelling::build(p, set.size(), LabelVariant::L1).unwrap();

        let zeros = set.filter_and_expand(&l1, false).unwrap();
        assert_eq!(zeros.size(), &big(6));
        assert_eq!(zeros.members(), (0..6u64).map(big).collect::<Vec<_>>());

        let l2 = Labelling::build(p, set.size(), LabelVariant::L2).unwrap();
        let zeros2 = set.filter_and_expand(&l2, false).unwrap();
        assert_eq!(zeros2.size(), &big(6));
        assert_eq!(
            zeros2.members(),
            [0u64, 1, 6, 7, 8, 9].iter().map(|&n| big(n)).collect::<Vec<_>>()
        );

        let ones = set.filter_and_expand(&l1, true).unwrap();
        assert_eq!(ones.size(), &big(4));
        assert_eq!(ones.members(), (6..10u64).map(big).collect::<Vec<_>>());

        // singleton with an empty '1' class stays put on '0'
        let single = MessageSet::new(big(1), p);
        let l = Labelling::build(p, single.size(), LabelVariant::L1).unwrap();
        let same = single.filter_and_expand(&l, false).unwrap();
        assert_eq!(same.size(), &big(1));
        assert!(single.filter_and_expand(&l, true).is_err());
    }

    #[test]
    fn rank_maps_round_trip() {
        let p = DyadicProb::from_f64(0.37).unwrap();
        let mut set = MessageSet::new(big(1000), p);
        let l1 = Labelling::build(p, set.size(), LabelVariant::L1).unwrap();
        set.apply_filter(&l1, false).unwrap();
        let l2 = Labelling::build(p, set.size(), LabelVariant::L2).unwrap();
        set.apply_filter(&l2, true).unwrap();
        let members = set.members();
        for (rank, original) in members.iter().enumerate() {
            assert_eq!(&set.original_index(&big(rank as u64)).unwrap(), original);
            assert_eq!(set.rank_of(original).unwrap(), big(rank as u64));
        }
        assert!(members.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn encode_step_cases() {
        let state = SessionState::new(eps(0.0), big(1 << 10)).unwrap();
        // fresh state: topmost block carries '1'
        assert!(encode_step(&state, &big(1023)).unwrap());
        assert!(!encode_step(&state, &big(0)).unwrap());
        assert!(encode_step(&state, &big(5000)).is_err());

        let single = SessionState::new(eps(0.5), big(1)).unwrap();
        assert!(!encode_step(&single, &big(0)).unwrap());
    }

    #[test]
    fn advance_follows_protocol() {
        let mut state = SessionState::new(eps(0.5), big(10)).unwrap();
        let size0 = state.message_set().size().clone();

        state.advance(Ternary::Erased).unwrap();
        assert_eq!(state.phase(), Phase::ErasureAlternating);
        assert_eq!(state.labelling().variant(), LabelVariant::L2);
        assert_eq!(state.message_set().size(), &size0);

        state.advance(Ternary::Erased).unwrap();
        assert_eq!(state.labelling().variant(), LabelVariant::L1);

        state.advance(Ternary::One).unwrap();
        assert_eq!(state.phase(), Phase::ForcedZero);
        assert!(state.message_set().size() < &size0);

        // return to ground regardless of the outcome of the forced zero
        state.advance(Ternary::Erased).unwrap();
        assert_eq!(state.phase(), Phase::GroundFresh);
        assert_eq!(state.labelling().variant(), LabelVariant::L1);
    }

    #[test]
    fn min_lambda_is_two_for_all_eps() {
        // p_ε ∈ (0.38, 0.5], so 2^2 = 4 ≥ 1/p always, and 2^1 = 2 < 1/p at ε = 0
        assert_eq!(min_lambda(eps(0.0)).unwrap(), 2);
        assert_eq!(min_lambda(eps(0.9)).unwrap(), 2);
        assert!(SchemeEncoder::new(eps(0.5), big(100), big(3), 1).is_err());
    }

    #[test]
    fn transmit_decodes_correctly_without_erasures() {
        let total = BigUint::one() << 16u32;
        let out = transmit_message(eps(0.0), &big(40961), &total, 4, 11).unwrap();
        assert_eq!(out.decoded, big(40961));
        assert!(out.transcript.rll_ok());
        // two-phase expectation at ε = 0: 12 interval-phase bits at the
        // capacity 0.6942 plus ≤ 4 residual bits at 2 uses each
        let uses = out.transcript.channel_uses as f64;
        assert!(uses >= 16.0 / 0.6942 * 0.95, "{uses}");
        assert!(uses <= (12.0 / 0.6942 + 8.0) * 1.05, "{uses}");
        // the interval phase alone runs at the capacity, within 5%
        let main_uses: u64 = out.transcript.procedure_lengths().iter().sum();
        let fallback_uses = out.transcript.channel_uses - main_uses;
        let main_bits = 16.0 - fallback_uses as f64 / 2.0;
        let per_bit = main_uses as f64 / main_bits;
        assert!((per_bit - 1.0 / 0.6942).abs() / (1.0 / 0.6942) < 0.05, "{per_bit}");
    }

    #[test]
    fn transmit_many_random_messages() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let total = big(4096);
        for trial in 0..200u64 {
            let msg = big(rng.gen_range(0..4096u64));
            let out = transmit_message(eps(0.5), &msg, &total, 3, 1000 + trial).unwrap();
            assert_eq!(out.decoded, msg);
            assert!(out.transcript.rll_ok());
        }
    }

    #[test]
    fn transmit_is_deterministic() {
        let total = big(1 << 20);
        let a = transmit_message(eps(0.3), &big(777), &total, 4, 99).unwrap();
        let b = transmit_message(eps(0.3), &big(777), &total, 4, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dead_channel_never_shrinks_the_set() {
        let mut enc = SchemeEncoder::new(eps(1.0), big(64), big(17), 2).unwrap();
        let mut dec = SchemeDecoder::new(eps(1.0), big(64), 2).unwrap();
        let config = ChannelConfig { epsilon: eps(1.0), seed: 4 };
        let run = crate::channel::run_session(&mut enc, &mut dec, config, 200).unwrap();
        assert!(!run.completed);
        assert_eq!(dec.session_state().message_set().size(), &big(64));
        assert!(dec.possible_messages().contains(&big(17)));
        assert!(run.transcript.rll_ok());
    }

    #[test]
    fn fallback_two_uses_per_bit_without_erasures() {
        let mut ch = ErasureChannel::new(ChannelConfig { epsilon: eps(0.0), seed: 1 });
        let run = fallback_transmit(&[true], &mut ch);
        assert_eq!(run.channel_uses, 2);
        assert_eq!(run.decoded, [true]);
        let run0 = fallback_transmit(&[false], &mut ch);
        assert_eq!(run0.channel_uses, 2);
        assert_eq!(run0.decoded, [false]);
        assert!(crate::channel::check_rll(&run.inputs));
    }

    #[test]
    fn fallback_recovers_random_bits() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let bits: Vec<bool> = (0..500).map(|_| rng.gen()).collect();
        let mut ch = ErasureChannel::new(ChannelConfig { epsilon: eps(0.6), seed: 3 });
        let run = fallback_transmit(&bits, &mut ch);
        assert_eq!(run.decoded, bits);
        assert!(crate::channel::check_rll(&run.inputs));
    }

    #[test]
    fn expected_length_values() {
        assert!((expected_procedure_length(eps(0.0)).unwrap() - 1.381966011250105).abs() < 1e-12);
        assert!((expected_procedure_length(eps(0.5)).unwrap() - 2.4301597090019467).abs() < 1e-12);
        assert!(expected_procedure_length(eps(1.0)).is_err());
    }

    #[test]
    fn rate_bound_values() {
        let c = feedback_capacity(eps(0.5)).capacity_bits;
        let bound = rate_lower_bound(100_000, c, 20, eps(0.5)).unwrap();
        assert!((bound - 0.4056083205118031).abs() < 1e-12);
        assert!((c - bound).abs() < 1e-3);
        // the bound never exceeds the capacity
        for lambda in [1u32, 5, 20, 40] {
            for n in [100u64, 10_000] {
                let b = rate_lower_bound(n, c, lambda, eps(0.5)).unwrap();
                assert!(b <= c + 1e-12);
            }
        }
        assert!(rate_lower_bound(10, 0.1, 20, eps(0.5)).is_err());
    }

    #[test]
    fn transcript_procedures_and_steps() {
        let total = big(1 << 16);
        let out = transmit_message(eps(0.5), &big(12345), &total, 2, 21).unwrap();
        let lengths = out.transcript.procedure_lengths();
        assert!(!lengths.is_empty());
        assert!(lengths.iter().all(|&l| l >= 1));
        // rows align with the raw vectors
        let rows: Vec<_> = out.transcript.steps().collect();
        assert_eq!(rows.len(), out.transcript.channel_uses as usize);
        assert_eq!(rows[0].t, 0);
        for row in &rows {
            assert_eq!(row.erased, row.output == Ternary::Erased);
        }
    }
}
