//! Block-fading timeline model for homogeneous broadcast channels.
//!
//! All users share one coherence time `N`; user `i` starts its coherence
//! blocks at offset `n_offset[i]` with user 1 as the benchmark at offset 0.
//! The module derives the per-slot coherence-block index of every user, the
//! group structure of the timeline (maximal runs of slots over which every
//! user's channel is constant) and the 12-group pattern diagram of one
//! 4N-slot super-block. It also classifies arbitrary 4-slot selections into
//! alignment-feasible channel patterns and draws reproducible channel
//! realizations.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelError {
    #[error("coherence time must be at least 1")]
    ZeroCoherenceTime,
    #[error("at least 3 users are required, got {0}")]
    TooFewUsers(usize),
    #[error("benchmark user must have offset 0, got {0}")]
    NonzeroBenchmark(u32),
    #[error("offset {offset} of user {user} is outside [0, {n})")]
    OffsetOutOfRange { user: usize, offset: u32, n: u32 },
    #[error("user index {0} is out of range")]
    InvalidUser(usize),
    #[error("operation requires exactly 3 users, config has {0}")]
    NotThreeUsers(usize),
    #[error("slot indices must be strictly increasing")]
    SlotsNotIncreasing,
    #[error("degenerate group structure: coincident offsets produce an empty group")]
    DegenerateGroups,
}

/// Coherence time plus per-user block offsets; the ground truth of the
/// fading timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    #[serde(rename = "N")]
    coherence_time: u32,
    offsets: Vec<u32>,
}

impl ChannelConfig {
    pub fn new(coherence_time: u32, offsets: Vec<u32>) -> Result<Self, ChannelError> {
        if coherence_time == 0 {
            return Err(ChannelError::ZeroCoherenceTime);
        }
        if offsets.len() < 3 {
            return Err(ChannelError::TooFewUsers(offsets.len()));
        }
        if offsets[0] != 0 {
            return Err(ChannelError::NonzeroBenchmark(offsets[0]));
        }
        for (user, &offset) in offsets.iter().enumerate() {
            if offset >= coherence_time {
                return Err(ChannelError::OffsetOutOfRange {
                    user,
                    offset,
                    n: coherence_time,
                });
            }
        }
        Ok(Self {
            coherence_time,
            offsets,
        })
    }

    /// Re-validates a config that came in over the wire.
    pub fn validated(self) -> Result<Self, ChannelError> {
        Self::new(self.coherence_time, self.offsets)
    }

    pub fn coherence_time(&self) -> u32 {
        self.coherence_time
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn user_count(&self) -> usize {
        self.offsets.len()
    }

    /// Coherence-block index of `user` at slot `slot`: 0 before the user's
    /// offset, then advancing by one every `N` slots.
    pub fn block_index(&self, user: usize, slot: u64) -> Result<u64, ChannelError> {
        let offset = *self
            .offsets
            .get(user)
            .ok_or(ChannelError::InvalidUser(user))? as u64;
        let n = self.coherence_time as u64;
        Ok(if offset == 0 {
            slot / n
        } else if slot < offset {
            0
        } else {
            1 + (slot - offset) / n
        })
    }

    /// Restricts a K-user config to three of its users, re-benchmarked so the
    /// first selected user sits at offset 0.
    pub fn restrict(&self, users: [usize; 3]) -> Result<ChannelConfig, ChannelError> {
        let n = self.coherence_time;
        let mut offsets = Vec::with_capacity(3);
        for &u in &users {
            let o = *self.offsets.get(u).ok_or(ChannelError::InvalidUser(u))?;
            offsets.push(o);
        }
        let base = offsets[0];
        let shifted = offsets.iter().map(|&o| (o + n - base) % n).collect();
        ChannelConfig::new(n, shifted)
    }
}

/// Sizes of the three groups a coherence block splits into, together with
/// the user order that sorts the offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    sizes: [u32; 3],
    /// Original user indices in offset-sorted order; `sizes` is computed on
    /// the sorted offsets, this records which user is which.
    user_order: [usize; 3],
}

impl GroupStructure {
    pub fn from_sizes(sizes: [u32; 3]) -> Self {
        Self {
            sizes,
            user_order: [0, 1, 2],
        }
    }

    pub fn sizes(&self) -> [u32; 3] {
        self.sizes
    }

    /// Group size for any index of the 12-group super-block (period 3).
    pub fn size(&self, t: usize) -> u32 {
        self.sizes[t % 3]
    }

    pub fn total(&self) -> u32 {
        self.sizes.iter().sum()
    }

    pub fn min_size(&self) -> u32 {
        *self.sizes.iter().min().unwrap()
    }

    pub fn user_order(&self) -> [usize; 3] {
        self.user_order
    }
}

/// Group sizes `(s_0, s_1, s_2)` of a 3-user config, computed on the sorted
/// nonzero offsets `a <= b`: `s_0 = a`, `s_1 = b - a`, `s_2 = N - b`.
pub fn group_structure(cfg: &ChannelConfig) -> Result<GroupStructure, ChannelError> {
    if cfg.user_count() != 3 {
        return Err(ChannelError::NotThreeUsers(cfg.user_count()));
    }
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&u| cfg.offsets[u]);
    let a = cfg.offsets[order[1]];
    let b = cfg.offsets[order[2]];
    Ok(GroupStructure {
        sizes: [a, b - a, cfg.coherence_time - b],
        user_order: order,
    })
}

/// One 4N-slot super-block laid out as 12 consecutive groups; all slots in a
/// group share every user's coherence block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDiagram {
    groups: [Vec<u64>; 12],
    period: u64,
}

impl PatternDiagram {
    pub fn groups(&self) -> &[Vec<u64>; 12] {
        &self.groups
    }

    pub fn period(&self) -> u64 {
        self.period
    }
}

/// Lays out the 12 groups of one super-block starting at slot 0, with group
/// boundaries at the sorted offsets `{0, a, b, N, N+a, ...}`.
pub fn build_pattern_diagram(cfg: &ChannelConfig) -> Result<PatternDiagram, ChannelError> {
    let s = group_structure(cfg)?;
    if s.sizes().contains(&0) {
        return Err(ChannelError::DegenerateGroups);
    }
    let n = cfg.coherence_time as u64;
    let [s0, s1, _] = s.sizes();
    let cum = [0, s0 as u64, (s0 + s1) as u64];
    let groups: [Vec<u64>; 12] = std::array::from_fn(|t| {
        let start = (t as u64 / 3) * n + cum[t % 3];
        (start..start + s.size(t) as u64).collect()
    });
    Ok(PatternDiagram {
        groups,
        period: 4 * n,
    })
}

/// Per-user split of a 4-slot selection: user `i` sees its first `splits[i]`
/// slots in one coherence block and the rest in the next one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockPattern {
    Feasible { splits: [u8; 3] },
    Infeasible,
}

impl BlockPattern {
    pub fn is_feasible(&self) -> bool {
        matches!(self, BlockPattern::Feasible { .. })
    }

    pub fn splits(&self) -> Option<[u8; 3]> {
        match self {
            BlockPattern::Feasible { splits } => Some(*splits),
            BlockPattern::Infeasible => None,
        }
    }
}

/// Classifies 4 slots: feasible iff every user's block sequence is two
/// constant runs and the three split lengths are exactly {1, 2, 3}.
pub fn classify_block(cfg: &ChannelConfig, slots: [u64; 4]) -> Result<BlockPattern, ChannelError> {
    if cfg.user_count() != 3 {
        return Err(ChannelError::NotThreeUsers(cfg.user_count()));
    }
    if !slots.windows(2).all(|w| w[0] < w[1]) {
        return Err(ChannelError::SlotsNotIncreasing);
    }
    let mut splits = [0u8; 3];
    for user in 0..3 {
        let blocks: Vec<u64> = slots
            .iter()
            .map(|&n| cfg.block_index(user, n))
            .collect::<Result<_, _>>()?;
        let split = match run_split(&blocks) {
            Some(k) => k,
            None => return Ok(BlockPattern::Infeasible),
        };
        splits[user] = split;
    }
    let mut sorted = splits;
    sorted.sort_unstable();
    if sorted == [1, 2, 3] {
        Ok(BlockPattern::Feasible { splits })
    } else {
        Ok(BlockPattern::Infeasible)
    }
}

/// Length of the first run when the sequence is exactly two constant runs of
/// distinct values; `None` otherwise.
fn run_split(blocks: &[u64]) -> Option<u8> {
    let first = blocks[0];
    let last = *blocks.last().unwrap();
    if first == last {
        return None;
    }
    let k = blocks.iter().take_while(|&&b| b == first).count();
    if blocks[k..].iter().all(|&b| b == last) {
        Some(k as u8)
    } else {
        None
    }
}

/// Complex channel coefficients per (user, antenna, coherence block), drawn
/// i.i.d. unit-variance circularly-symmetric Gaussian from a fixed seed.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    seed: u64,
    /// coeffs[user][block][antenna]
    coeffs: Vec<Vec<[Complex64; 2]>>,
}

impl ChannelRealization {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_blocks(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn coeff(&self, user: usize, antenna: usize, block: u64) -> Complex64 {
        self.coeffs[user][block as usize][antenna]
    }
}

/// Draws `num_blocks` coefficient vectors per user. Identical seeds yield
/// bit-identical realizations.
pub fn sample_realization(cfg: &ChannelConfig, seed: u64, num_blocks: usize) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Per-component std dev 1/sqrt(2) so E|h|^2 = 1.
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).unwrap();
    let coeffs = (0..cfg.user_count())
        .map(|_| {
            (0..num_blocks)
                .map(|_| {
                    std::array::from_fn(|_| {
                        Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
                    })
                })
                .collect()
        })
        .collect();
    ChannelRealization { seed, coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: u32, offsets: &[u32]) -> ChannelConfig {
        ChannelConfig::new(n, offsets.to_vec()).unwrap()
    }

    #[test]
    fn config_rejects_bad_offsets() {
        assert_eq!(
            ChannelConfig::new(0, vec![0, 1, 2]).unwrap_err(),
            ChannelError::ZeroCoherenceTime
        );
        assert_eq!(
            ChannelConfig::new(7, vec![0, 1]).unwrap_err(),
            ChannelError::TooFewUsers(2)
        );
        assert_eq!(
            ChannelConfig::new(7, vec![1, 2, 3]).unwrap_err(),
            ChannelError::NonzeroBenchmark(1)
        );
        assert!(matches!(
            ChannelConfig::new(7, vec![0, 9, 3]).unwrap_err(),
            ChannelError::OffsetOutOfRange { user: 1, .. }
        ));
    }

    #[test]
    fn block_index_examples() {
        let c = cfg(7, &[0, 2, 4]);
        // slots before a user's offset belong to block 0
        assert_eq!(c.block_index(1, 1).unwrap(), 0);
        // first slot of the benchmark's second coherence block
        assert_eq!(c.block_index(0, 7).unwrap(), 1);
        assert_eq!(c.block_index(2, 11).unwrap(), 2);
        assert!(matches!(
            c.block_index(5, 0).unwrap_err(),
            ChannelError::InvalidUser(5)
        ));
    }

    #[test]
    fn group_structure_examples() {
        assert_eq!(group_structure(&cfg(7, &[0, 2, 4])).unwrap().sizes(), [2, 2, 3]);
        assert_eq!(group_structure(&cfg(4, &[0, 0, 0])).unwrap().sizes(), [0, 0, 4]);
        // offsets are sorted before the gap computation
        let s = group_structure(&cfg(12, &[0, 9, 3])).unwrap();
        assert_eq!(s.sizes(), [3, 6, 3]);
        assert_eq!(s.user_order(), [0, 2, 1]);
    }

    #[test]
    fn pattern_diagram_sizes_and_coverage() {
        let d = build_pattern_diagram(&cfg(7, &[0, 2, 4])).unwrap();
        let sizes: Vec<usize> = d.groups().iter().map(|g| g.len()).collect();
        assert_eq!(sizes, vec![2, 2, 3, 2, 2, 3, 2, 2, 3, 2, 2, 3]);
        let all: Vec<u64> = d.groups().iter().flatten().copied().collect();
        assert_eq!(all, (0..28).collect::<Vec<_>>());

        let d = build_pattern_diagram(&cfg(3, &[0, 1, 2])).unwrap();
        assert!(d.groups().iter().all(|g| g.len() == 1));

        assert_eq!(
            build_pattern_diagram(&cfg(8, &[0, 0, 4])).unwrap_err(),
            ChannelError::DegenerateGroups
        );
    }

    #[test]
    fn groups_share_block_indices() {
        let c = cfg(7, &[0, 2, 4]);
        let d = build_pattern_diagram(&c).unwrap();
        for g in d.groups() {
            for user in 0..3 {
                let b0 = c.block_index(user, g[0]).unwrap();
                assert!(g.iter().all(|&n| c.block_index(user, n).unwrap() == b0));
            }
        }
    }

    #[test]
    fn classify_paper_and_derived_blocks() {
        let c = cfg(7, &[0, 2, 4]);
        let p = classify_block(&c, [8, 10, 12, 14]).unwrap();
        assert_eq!(p.splits(), Some([3, 1, 2]));
        // all four slots inside user 1's first coherence block
        assert_eq!(
            classify_block(&c, [0, 1, 2, 3]).unwrap(),
            BlockPattern::Infeasible
        );
        let c = cfg(8, &[0, 2, 4]);
        let p = classify_block(&c, [1, 3, 5, 9]).unwrap();
        assert_eq!(p.splits(), Some([3, 1, 2]));
        assert_eq!(
            classify_block(&c, [1, 3, 3, 9]).unwrap_err(),
            ChannelError::SlotsNotIncreasing
        );
    }

    #[test]
    fn realization_is_seed_deterministic() {
        let c = cfg(7, &[0, 2, 4]);
        let r1 = sample_realization(&c, 42, 8);
        let r2 = sample_realization(&c, 42, 8);
        let r3 = sample_realization(&c, 43, 8);
        for user in 0..3 {
            for block in 0..8 {
                for antenna in 0..2 {
                    assert_eq!(
                        r1.coeff(user, antenna, block),
                        r2.coeff(user, antenna, block)
                    );
                }
            }
        }
        assert_ne!(r1.coeff(0, 0, 0), r3.coeff(0, 0, 0));
    }

    #[test]
    fn realization_mean_power_near_unity() {
        let c = cfg(4, &[0, 1, 2]);
        let blocks = 100_000 / 6;
        let r = sample_realization(&c, 7, blocks);
        let mut sum = 0.0;
        let mut count = 0usize;
        for user in 0..3 {
            for block in 0..blocks as u64 {
                for antenna in 0..2 {
                    sum += r.coeff(user, antenna, block).norm_sqr();
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
    }

    #[test]
    fn config_json_round_trip() {
        let c = cfg(7, &[0, 2, 4]);
        let js = serde_json::to_string(&c).unwrap();
        assert_eq!(js, r#"{"N":7,"offsets":[0,2,4]}"#);
        let back: ChannelConfig = serde_json::from_str(&js).unwrap();
        assert_eq!(back.validated().unwrap(), c);
    }

    #[test]
    fn restrict_rebenchmarks() {
        let c = ChannelConfig::new(8, vec![0, 1, 2, 4, 6]).unwrap();
        let r = c.restrict([0, 2, 3]).unwrap();
        assert_eq!(r.offsets(), &[0, 2, 4]);
        let r = c.restrict([2, 3, 4]).unwrap();
        assert_eq!(r.offsets(), &[0, 2, 4]);
    }
}
