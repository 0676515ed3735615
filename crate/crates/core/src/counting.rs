//! Exact combinatorics of alignment-feasible offset configurations.
//!
//! Counts, with arbitrary-precision integers, how many offset pairs make a
//! 3-user broadcast channel feasible, how many K-user offset tuples contain
//! no feasible triple, and the corresponding exact-rational probabilities.
//! Brute-force enumerators and a seeded Monte Carlo estimator double-check
//! every closed form.

use crate::channel::ChannelConfig;
use num_bigint::{BigInt, BigUint};
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Enumeration ceiling for the brute-force oracles.
pub const BRUTE_FORCE_BUDGET: u64 = 100_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum CountingError {
    #[error("required boxes {required} exceed available boxes {boxes}")]
    RequiredBoxesExceedBoxes { boxes: u64, required: u64 },
    #[error("coherence time {0} is not a multiple of 4")]
    NotMultipleOfFour(u32),
    #[error("user count {0} is below 3")]
    TooFewUsers(u32),
    #[error("enumeration of {0} tuples exceeds the brute-force budget")]
    BudgetExceeded(f64),
    #[error("at least one sample is required")]
    ZeroSamples,
}

/// Exact probability with the natural (unreduced) denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Probability {
    pub numerator: BigUint,
    pub denominator: BigUint,
}

impl Probability {
    pub fn as_f64(&self) -> f64 {
        Ratio::new(
            BigInt::from(self.numerator.clone()),
            BigInt::from(self.denominator.clone()),
        )
        .to_f64()
        .unwrap_or(f64::NAN)
    }
}

/// Stirling number of the second kind via the standard recurrence.
pub fn stirling2(k: u64, mu: u64) -> BigUint {
    if mu > k {
        return BigUint::zero();
    }
    if mu == 0 {
        return if k == 0 { BigUint::one() } else { BigUint::zero() };
    }
    // row-by-row DP on S(i, j) for j <= mu
    let width = mu as usize + 1;
    let mut row = vec![BigUint::zero(); width];
    row[0] = BigUint::one();
    for _ in 1..=k {
        let mut next = vec![BigUint::zero(); width];
        for j in 1..width {
            next[j] = BigUint::from(j) * &row[j] + &row[j - 1];
        }
        next[0] = BigUint::zero();
        row = next;
    }
    row[mu as usize].clone()
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let mut r = BigUint::one();
    for i in 0..k.min(n - k) {
        r = r * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    r
}

/// Ways to place `balls` labeled balls into `boxes` labeled boxes so that
/// `required` designated boxes are all nonempty (inclusion-exclusion).
pub fn occupancy_count(boxes: u64, balls: u64, required: u64) -> Result<BigUint, CountingError> {
    if required > boxes {
        return Err(CountingError::RequiredBoxesExceedBoxes { boxes, required });
    }
    if balls < required {
        return Ok(BigUint::zero());
    }
    let mut total = BigInt::zero();
    for j in 0..=required {
        let term = BigInt::from(binomial(required, j)) * BigInt::from(boxes - j).pow(balls as u32);
        if j % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    debug_assert!(!total.is_negative());
    Ok(total.magnitude().clone())
}

/// Same count through the Stirling-number route; used as a cross-check.
pub fn occupancy_count_stirling(
    boxes: u64,
    balls: u64,
    required: u64,
) -> Result<BigUint, CountingError> {
    if required > boxes {
        return Err(CountingError::RequiredBoxesExceedBoxes { boxes, required });
    }
    let mut total = BigUint::zero();
    for k in required..=balls {
        let mut factorial = BigUint::one();
        for i in 2..=required {
            factorial *= BigUint::from(i);
        }
        total += binomial(balls, k)
            * factorial
            * stirling2(k, required)
            * BigUint::from(boxes - required).pow((balls - k) as u32);
    }
    Ok(total)
}

/// Minimum circular gap a triple must keep on the ring of `n` slot offsets.
pub fn min_required_gap(n: u32) -> u32 {
    n.div_ceil(4)
}

/// Circular gaps of three points on the ring of size `n`, in sorted-point order.
pub fn circular_gaps(n: u32, offsets: [u32; 3]) -> [u32; 3] {
    let mut p = offsets;
    p.sort_unstable();
    [p[1] - p[0], p[2] - p[1], n - p[2] + p[0]]
}

/// A triple is feasible when all three circular gaps reach the minimum.
pub fn triple_feasible(n: u32, offsets: [u32; 3]) -> bool {
    let req = min_required_gap(n);
    circular_gaps(n, offsets).iter().all(|&g| g >= req)
}

/// Number of offset pairs `(n2, n3)` that make the 3-user channel feasible,
/// by the closed form: sorted gap triples enumerated over the smallest gap,
/// with correction terms for coincident gap sizes.
pub fn feasible_pair_count(n: u32) -> BigUint {
    let n = n as i64;
    let mut total = 0i64;
    for s0 in (n + 3) / 4..=n / 3 {
        let half = (n - s0) / 2;
        total += 6 * (half - s0) + 3 - 3 * (half * 2 / (n - s0));
    }
    let all_equal = (n / 3) * 3 / n;
    BigUint::from((2 * total + 2 * all_equal) as u64)
}

/// Exhaustive count over all `n^2` offset pairs.
pub fn brute_force_feasible_pairs(n: u32) -> Result<BigUint, CountingError> {
    let pairs = (n as u64).pow(2);
    if pairs > BRUTE_FORCE_BUDGET {
        return Err(CountingError::BudgetExceeded(pairs as f64));
    }
    let mut count = 0u64;
    for n2 in 0..n {
        for n3 in 0..n {
            if triple_feasible(n, [0, n2, n3]) {
                count += 1;
            }
        }
    }
    Ok(BigUint::from(count))
}

fn gamma(boxes: u64, balls: u64, required: u64) -> BigInt {
    BigInt::from(occupancy_count(boxes, balls, required).expect("required <= boxes"))
}

/// Number of offset tuples `(n2, ..., nK)` among which no three users
/// (benchmark included) form a feasible triple. Requires `n` divisible by 4.
///
/// Events are split by the arc structure of the occupied ring positions: one
/// arc of length at most n/2 holding every user, or two arcs whose end boxes
/// are pinned nonempty, counted with the occupancy numbers.
pub fn no_feasible_triple_count(n: u32, k: u32) -> Result<BigUint, CountingError> {
    if !n.is_multiple_of(4) {
        return Err(CountingError::NotMultipleOfFour(n));
    }
    if k < 3 {
        return Err(CountingError::TooFewUsers(k));
    }
    let balls = (k - 1) as u64;
    let half = (n / 2) as u64;
    let quarter = (n / 4) as u64;

    // all users inside a single arc (length 1 covered by the leading 1)
    let mut total = BigInt::one();
    for m in 2..=half {
        let mb = BigInt::from(m);
        let pinned_one = BigInt::from(m).pow(balls as u32) - BigInt::from(m - 1).pow(balls as u32);
        total += 2 * pinned_one + (mb - 2) * gamma(m, balls, 2);
    }

    // two arcs; the two-box case first
    total += BigInt::from(2u8).pow(balls as u32) - 1;
    for m in 3..=quarter + 1 {
        let term = 2 * BigInt::from(m - 3) * gamma(m, balls, 3) + 3 * gamma(m, balls, 2);
        total += BigInt::from(m - 1) * term;
    }
    for m in 4..=quarter + 1 {
        let tri = BigInt::from((m - 3) * (m - 4) / 2);
        let term = tri * gamma(m, balls, 4) + BigInt::from(m - 3) * gamma(m, balls, 3);
        total += BigInt::from(m - 1) * term;
    }
    for m in quarter + 2..=half {
        let choices = half - m + 1;
        // sum of (j - 2) over the admissible inner-arc lengths
        let tri = BigInt::from(choices) * BigInt::from(m - 4) / 2;
        let term = 2 * BigInt::from(choices) * gamma(m, balls, 3) + tri * gamma(m, balls, 4);
        total += BigInt::from(m - 1) * term;
    }

    debug_assert!(!total.is_negative());
    Ok(total.magnitude().clone())
}

/// Does any triple of the given offsets keep all circular gaps at the minimum?
pub fn has_feasible_triple(n: u32, offsets: &[u32]) -> bool {
    let req = min_required_gap(n);
    let mut sorted = offsets.to_vec();
    sorted.sort_unstable();
    let k = sorted.len();
    for i in 0..k {
        for j in i + 1..k {
            if sorted[j] - sorted[i] < req {
                continue;
            }
            for l in j + 1..k {
                if sorted[l] - sorted[j] >= req && n - sorted[l] + sorted[i] >= req {
                    return true;
                }
            }
        }
    }
    false
}

/// Exhaustive count over all `n^(k-1)` offset tuples.
pub fn brute_force_no_feasible_triple(n: u32, k: u32) -> Result<BigUint, CountingError> {
    if k < 3 {
        return Err(CountingError::TooFewUsers(k));
    }
    let tuples = (n as f64).powi(k as i32 - 1);
    if tuples > BRUTE_FORCE_BUDGET as f64 {
        return Err(CountingError::BudgetExceeded(tuples));
    }
    let mut offsets = vec![0u32; k as usize];
    let mut count = 0u64;
    loop {
        if !has_feasible_triple(n, &offsets) {
            count += 1;
        }
        // odometer over the k-1 free offsets
        let mut i = 1;
        while i < offsets.len() {
            offsets[i] += 1;
            if offsets[i] < n {
                break;
            }
            offsets[i] = 0;
            i += 1;
        }
        if i == offsets.len() {
            break;
        }
    }
    Ok(BigUint::from(count))
}

/// Probability that a random 3-user channel is feasible: count over `n^2`.
pub fn feasible_probability(n: u32) -> Probability {
    Probability {
        numerator: feasible_pair_count(n),
        denominator: BigUint::from(n).pow(2),
    }
}

/// Probability that some triple of the K users is feasible:
/// `1 - no_feasible_triple_count / n^(k-1)`.
pub fn selection_probability(n: u32, k: u32) -> Result<Probability, CountingError> {
    let blocked = no_feasible_triple_count(n, k)?;
    let denominator = BigUint::from(n).pow(k - 1);
    Ok(Probability {
        numerator: &denominator - blocked,
        denominator,
    })
}

/// Monte Carlo estimate with binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
}

const MC_CHUNK: u64 = 4096;

/// Estimates the selection probability by sampling offset tuples uniformly.
///
/// Each fixed-size chunk of samples draws from its own RNG stream, so the
/// result depends only on `(seed, samples)` and not on the parallelism degree.
pub fn mc_selection_probability(
    n: u32,
    k: u32,
    samples: u64,
    seed: u64,
) -> Result<McEstimate, CountingError> {
    if samples == 0 {
        return Err(CountingError::ZeroSamples);
    }
    if k < 3 {
        return Err(CountingError::TooFewUsers(k));
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk + 1);
            let in_chunk = MC_CHUNK.min(samples - chunk * MC_CHUNK);
            let mut offsets = vec![0u32; k as usize];
            let mut hits = 0u64;
            for _ in 0..in_chunk {
                for o in offsets.iter_mut().skip(1) {
                    *o = rng.gen_range(0..n);
                }
                if has_feasible_triple(n, &offsets) {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let estimate = hits as f64 / samples as f64;
    let stderr = (estimate * (1.0 - estimate) / samples as f64).sqrt();
    Ok(McEstimate {
        estimate,
        stderr,
        hits,
        samples,
    })
}

/// Three users selected from a K-user config, with their ring gaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TripleSelection {
    /// User indices into the config, in lexicographic scan order.
    pub users: [usize; 3],
    pub gaps: [u32; 3],
}

/// First triple (lexicographic over user indices) whose circular gaps all
/// reach the minimum, or `None` when no triple qualifies.
pub fn find_feasible_triple(cfg: &ChannelConfig) -> Option<TripleSelection> {
    let n = cfg.coherence_time();
    let offsets = cfg.offsets();
    let k = offsets.len();
    for i in 0..k {
        for j in i + 1..k {
            for l in j + 1..k {
                let trio = [offsets[i], offsets[j], offsets[l]];
                if triple_feasible(n, trio) {
                    return Some(TripleSelection {
                        users: [i, j, l],
                        gaps: circular_gaps(n, trio),
                    });
                }
            }
        }
    }
    None
}
