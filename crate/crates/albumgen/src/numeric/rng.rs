//! splitmix64 PRNG. Every random decision in the pipeline flows through this
//! one stream so that manifests, training runs, and generated audio reproduce
//! bit-for-bit from their seeds, in any implementation language.

use super::NumericError;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 generator; single-owner, never shared across threads.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn set_state(&mut self, state: u64) {
        self.state = state;
    }

    /// Next 64-bit value of the splitmix64 sequence.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn uniform01(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform01()
    }

    /// Standard gaussian via Box-Muller over two uniforms (cosine branch).
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform01();
        let u2 = self.uniform01();
        // 1 - u1 lies in (0, 1], so the log is finite.
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle, iterating i from n-1 down to 1 with
    /// j = next_u64() mod (i+1).
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        let n = items.len();
        if n < 2 {
            return;
        }
        for i in (1..n).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}

/// Derive a decorrelated stream seed from a master seed and a stage index:
/// the first splitmix64 output for state master+index.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    Rng::new(master.wrapping_add(index)).next_u64()
}

/// Index of the first entry whose cumulative probability exceeds u, for
/// u in [0, 1). Probabilities are renormalized internally; their sum must be
/// positive and within 1e-6 of 1.
pub fn categorical(probs: &[f64], u: f64) -> Result<usize, NumericError> {
    if probs.is_empty() {
        return Err(NumericError::EmptyDistribution);
    }
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(NumericError::InvalidDistribution {
            reason: "negative or non-finite probability".into(),
        });
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 || (total - 1.0).abs() > 1e-6 {
        return Err(NumericError::InvalidDistribution {
            reason: format!("probabilities sum to {total}, expected 1"),
        });
    }
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p / total;
        if cum > u {
            return Ok(i);
        }
    }
    // Rounding can leave the final cumulative sum a hair under u; fall back to
    // the last entry with mass.
    Ok(probs
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("distribution has positive total"))
}
