//! Closed-form feedback capacity of the constrained erasure channel.
//!
//! For erasure probability ε the capacity is the maximum over p ∈ [0, 1/2] of
//! `H_b(p) / (p + 1/(1−ε))`. The maximizer `p_ε` is the unique root of
//! `p^(1/ε̄) = (1−p)^(1+1/ε̄)` and is found here by bisection on the strictly
//! increasing log form. The same objective reappears as the entropy-rate bound
//! of a two-state Markov chain, which shows that telling the encoder about
//! erasures ahead of time does not raise the capacity.

use crate::{Error, Result};

/// Erasure probability ε ∈ [0, 1] with its derived quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErasureProb(f64);

impl ErasureProb {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::ProbabilityOutOfRange {
                name: "epsilon",
                value: epsilon,
            });
        }
        Ok(ErasureProb(epsilon))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// ε̄ = 1 − ε, the success probability.
    pub fn complement(self) -> f64 {
        1.0 - self.0
    }

    /// 1/ε̄, the expected channel uses per unerased symbol (∞ at ε = 1).
    pub fn inv_complement(self) -> f64 {
        1.0 / (1.0 - self.0)
    }
}

/// Capacity at a given ε together with the achieving input parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityResult {
    pub epsilon: f64,
    /// The maximizing p ∈ (0, 1/2]. At ε = 1 this is a numerical limit point.
    pub p_star: f64,
    /// Capacity in bits per channel use.
    pub capacity_bits: f64,
    /// True only at ε = 1, where the capacity is 0 and `p_star` reports
    /// the limit of the maximizer as ε → 1 rather than an actual argmax.
    pub degenerate: bool,
}

/// Two-state input chain of the non-causal setting and its entropy-rate bound.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainSummary {
    /// Row-stochastic transition matrix over {previous input 0, 1}.
    pub transition_matrix: [[f64; 2]; 2],
    /// Stationary distribution `[1/(1+ε̄p), ε̄p/(1+ε̄p)]`.
    pub stationary: [f64; 2],
    /// `ε̄·H_b(p)·stationary[0]`, in bits per channel use.
    pub entropy_rate_bound: f64,
}

fn check_prob(name: &'static str, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange { name, value: p });
    }
    Ok(p)
}

/// `−p·log2(p)` with the convention `0·log2(0) = 0`.
#[inline]
fn nlog2n(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        -p * libm::log2(p)
    }
}

pub(crate) fn binary_entropy_unchecked(p: f64) -> f64 {
    nlog2n(p) + nlog2n(1.0 - p)
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_prob("p", p)?;
    Ok(binary_entropy_unchecked(p))
}

/// Ternary entropy in bits; the arguments must sum to one within 1e-12.
pub fn ternary_entropy(a1: f64, a2: f64, a3: f64) -> Result<f64> {
    check_prob("a1", a1)?;
    check_prob("a2", a2)?;
    check_prob("a3", a3)?;
    let sum = a1 + a2 + a3;
    if libm::fabs(sum - 1.0) > 1e-12 {
        return Err(Error::SimplexViolation { sum });
    }
    Ok(nlog2n(a1) + nlog2n(a2) + nlog2n(a3))
}

/// The capacity objective `H_b(p) / (p + 1/(1−ε))`.
///
/// At ε = 1 the denominator diverges and the value is 0 by limit, which is
/// what this returns.
pub fn capacity_objective(eps: ErasureProb, p: f64) -> Result<f64> {
    check_prob("p", p)?;
    if eps.value() >= 1.0 {
        return Ok(0.0);
    }
    Ok(binary_entropy_unchecked(p) / (p + eps.inv_complement()))
}

/// The unique maximizer `p_ε ∈ (0, 1/2]` of the capacity objective.
///
/// Bisection on `g(p) = (1/ε̄)·ln p − (1 + 1/ε̄)·ln(1−p)`, which is strictly
/// increasing with `g(0+) = −∞` and `g(1/2) = ln 2 > 0`. The bracket is
/// narrowed until floating point cannot split it further, so the residual
/// `|g(p_ε)|` stays below 1e-12 even for ε near 1.
pub fn optimal_p(eps: ErasureProb) -> Result<f64> {
    if eps.value() >= 1.0 {
        return Err(Error::ErasureProbIsOne);
    }
    let inv_eb = eps.inv_complement();
    let g = |p: f64| inv_eb * libm::log(p) - (1.0 + inv_eb) * libm::log(1.0 - p);
    let mut lo = 1e-15;
    let mut hi = 0.5;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Feedback capacity `max_{0 ≤ p ≤ 1/2} H_b(p)/(p + 1/(1−ε))`.
///
/// At ε = 1 the capacity is exactly 0; `p_star` then carries the numerical
/// limit of the maximizer (evaluated at ε = 1 − 1e-9) and the result is
/// flagged degenerate.
pub fn feedback_capacity(eps: ErasureProb) -> CapacityResult {
    if eps.value() >= 1.0 {
        let near_one = ErasureProb(1.0 - 1e-9);
        let p_star = optimal_p(near_one).expect("epsilon below 1");
        return CapacityResult {
            epsilon: eps.value(),
            p_star,
            capacity_bits: 0.0,
            degenerate: true,
        };
    }
    let p_star = optimal_p(eps).expect("epsilon below 1");
    let capacity_bits = capacity_objective(eps, p_star).expect("p_star in range");
    CapacityResult {
        epsilon: eps.value(),
        p_star,
        capacity_bits,
        degenerate: false,
    }
}

/// The capacity rewritten as `−log2(p_ε) / (1 + 1/(1−ε))`.
///
/// Algebraically identical to [`feedback_capacity`]; kept as an independent
/// route for cross-checking.
pub fn capacity_alt_form(eps: ErasureProb) -> Result<f64> {
    if eps.value() >= 1.0 {
        return Err(Error::ErasureProbIsOne);
    }
    let p_star = optimal_p(eps)?;
    Ok(-libm::log2(p_star) / (1.0 + eps.inv_complement()))
}

/// Input chain of an encoder that transmits '1' with probability p whenever
/// it is free to (previous input 0, no erasure) and '0' otherwise.
///
/// The entropy rate of any such chain is at most `entropy_rate_bound`, and
/// maximizing that bound over p recovers the feedback capacity.
pub fn noncausal_chain(eps: ErasureProb, p: f64) -> Result<MarkovChainSummary> {
    check_prob("p", p)?;
    let eb = eps.complement();
    let transition_matrix = [[eps.value() + eb * (1.0 - p), eb * p], [1.0, 0.0]];
    let s0 = 1.0 / (1.0 + eb * p);
    let stationary = [s0, eb * p * s0];
    let entropy_rate_bound = eb * binary_entropy_unchecked(p) * s0;
    Ok(MarkovChainSummary {
        transition_matrix,
        stationary,
        entropy_rate_bound,
    })
}
