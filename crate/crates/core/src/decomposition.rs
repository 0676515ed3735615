//! Feasibility test and complete decomposition of the pattern diagram.
//!
//! A 3-user config is accepted when the three group sizes satisfy
//! `s_0 + s_1 + s_2 <= 4 * min(s_0, s_1, s_2)`. The constructive side turns
//! the cyclic 12-group pattern diagram into `N` threads, each claiming one
//! slot from four consecutive groups, so that every slot of a 4N-slot period
//! is claimed exactly once. Threads that cross the end of a super-block wrap
//! into the next one; a decomposition is flagged `contiguous` when the
//! periodic schedule admits a cut with no thread straddling it, in which case
//! one period's quads exactly cover a contiguous 4N-slot window.

use crate::channel::{
    classify_block, group_structure, BlockPattern, ChannelConfig, ChannelError, GroupStructure,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("group structure {0:?} is not feasible")]
    NotFeasible([u32; 3]),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Sufficient feasibility condition on the group sizes: the whole coherence
/// period fits into four copies of the smallest group.
pub fn is_feasible(s: &GroupStructure) -> bool {
    s.total() <= 4 * s.min_size()
}

/// Number of threads beginning at each of the 12 groups of a super-block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadTable {
    counts: [u64; 12],
}

impl ThreadTable {
    pub fn counts(&self) -> [u64; 12] {
        self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Thread counts for a feasible group structure.
///
/// The closed-form table is stated for the smallest group in role 0; other
/// cases are handled by cyclically rotating the group roles (the size
/// sequence has period 3, so a role shift is a shift of the 12-group index)
/// and rotating the result back.
pub fn thread_table(s: &GroupStructure) -> Result<ThreadTable, DecompositionError> {
    if !is_feasible(s) {
        return Err(DecompositionError::NotFeasible(s.sizes()));
    }
    let sizes = s.sizes();
    let m = (0..3).min_by_key(|&i| sizes[i]).unwrap();
    let s0 = sizes[m] as i64;
    let s1 = sizes[(m + 1) % 3] as i64;
    let s2 = sizes[(m + 2) % 3] as i64;
    let rotated = [
        0,
        s1 - s0,
        2 * s0 - s1,
        0,
        s1 - s0,
        s2 - s0,
        3 * s0 - s1 - s2,
        s1 - s0,
        s2 - s0,
        0,
        2 * s0 - s2,
        s2 - s0,
    ];
    let counts = std::array::from_fn(|t| {
        let v = rotated[(t + 12 - m) % 12];
        debug_assert!(v >= 0);
        v as u64
    });
    Ok(ThreadTable { counts })
}

/// One supersymbol: four slots, one from each of four consecutive groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quad {
    pub slots: [u64; 4],
    /// Channel pattern as (split, 4 - split) per user.
    pub pattern: [[u8; 2]; 3],
}

/// `N` supersymbols forming one period of the periodic schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decomposition {
    pub quads: Vec<Quad>,
    pub period: u64,
    pub window_start: u64,
    /// True when the quads exactly cover `[window_start, window_start + period)`.
    pub contiguous: bool,
}

struct GroupLayout {
    n: u64,
    cum: [u64; 3],
    sizes: [u32; 3],
}

impl GroupLayout {
    fn new(cfg: &ChannelConfig, s: &GroupStructure) -> Self {
        let [s0, s1, _] = s.sizes();
        Self {
            n: cfg.coherence_time() as u64,
            cum: [0, s0 as u64, (s0 + s1) as u64],
            sizes: s.sizes(),
        }
    }

    /// First slot of global group `g` (three groups per coherence block).
    fn start(&self, g: u64) -> u64 {
        (g / 3) * self.n + self.cum[(g % 3) as usize]
    }

    /// Global group index of a slot.
    fn group_of(&self, slot: u64) -> u64 {
        let within = slot % self.n;
        let t = if within >= self.cum[2] {
            2
        } else if within >= self.cum[1] {
            1
        } else {
            0
        };
        (slot / self.n) * 3 + t
    }

    fn size(&self, g: u64) -> u64 {
        self.sizes[(g % 3) as usize] as u64
    }
}

/// Decomposes a feasible 3-user config into `N` quads per 4N-slot period.
///
/// Slot choice within a group is deterministic: threads are realized in
/// start-group order and each takes the earliest slot not claimed by an
/// earlier thread. When a straddle-free cut of the periodic schedule exists
/// the quads are translated into one contiguous window; otherwise the window
/// starts at the diagram origin and exact cover holds modulo the period.
pub fn decompose(cfg: &ChannelConfig) -> Result<Decomposition, DecompositionError> {
    let s = group_structure(cfg)?;
    if s.sizes().contains(&0) {
        return Err(DecompositionError::Channel(ChannelError::DegenerateGroups));
    }
    if !is_feasible(&s) {
        return Err(DecompositionError::NotFeasible(s.sizes()));
    }
    let l = thread_table(&s)?.counts();
    let layout = GroupLayout::new(cfg, &s);
    let period = 4 * layout.n;

    // Steady-state slot of the j-th thread of cohort g inside group g + k:
    // groups are consumed by cohorts g-3, g-2, g-1, g in that order.
    let slot_of = |g: u64, j: u64, k: u64| -> u64 {
        let h = g + k;
        let mut offset = j;
        for c in (h - 3)..g {
            offset += l[(c % 12) as usize];
        }
        debug_assert!(offset < layout.size(h));
        layout.start(h) + offset
    };

    // Base quads: the threads of super-block 1 (so wrapped consumers from the
    // previous period occupy well-defined early slots).
    let mut raw: Vec<[u64; 4]> = Vec::new();
    for t in 0..12u64 {
        for j in 0..l[t as usize] {
            let g = 12 + t;
            raw.push(std::array::from_fn(|k| slot_of(g, j, k as u64)));
        }
    }

    let (mut raw, window_start, contiguous) = match search_cut(&raw, period) {
        Some(cut) => {
            // Translate each quad into [cut, cut + period), then shift the
            // whole window as close to the origin as slot indices allow.
            let shift = cut / period * period;
            let translated: Vec<[u64; 4]> = raw
                .iter()
                .map(|q| {
                    let k = (cut + period - 1 - q[0]) / period * period;
                    q.map(|x| x + k - shift)
                })
                .collect();
            (translated, cut - shift, true)
        }
        None => (
            raw.iter_mut().map(|q| q.map(|x| x - period)).collect(),
            0,
            false,
        ),
    };
    raw.sort_unstable();

    let quads = raw
        .into_iter()
        .map(|slots| {
            let pattern = match classify_block(cfg, slots)? {
                BlockPattern::Feasible { splits } => splits.map(|a| [a, 4 - a]),
                BlockPattern::Infeasible => unreachable!("constructed quads classify feasible"),
            };
            Ok(Quad { slots, pattern })
        })
        .collect::<Result<Vec<_>, DecompositionError>>()?;

    Ok(Decomposition {
        quads,
        period,
        window_start,
        contiguous,
    })
}

/// Cut position `W` such that no quad of the periodic schedule has slots on
/// both sides of `W + k * period` for any `k`.
fn search_cut(quads: &[[u64; 4]], period: u64) -> Option<u64> {
    let base = quads.iter().map(|q| q[0]).min()?;
    (base..base + period).find(|&w| {
        quads.iter().all(|q| {
            let span = q[3] - q[0];
            let d = (w + 2 * period - 1 - q[0]) % period;
            d >= span
        })
    })
}

/// Start of a 4N window containing all quads of one period, when one exists.
///
/// Such a window exists only when the periodic schedule has a straddle-free
/// cut, which is not the case for every feasible config (for instance group
/// sizes (2,3,3)); `None` means the schedule is valid only modulo the period.
pub fn find_wrap_free_window(decomp: &Decomposition) -> Option<u64> {
    let slots: Vec<[u64; 4]> = decomp.quads.iter().map(|q| q.slots).collect();
    search_cut(&slots, decomp.period)
}

/// What a decomposition check found.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SlotBeforeWindow { slot: u64 },
    DuplicateSlot { slot: u64 },
    NonConsecutiveGroups { quad: [u64; 4] },
    InfeasiblePattern { quad: [u64; 4] },
    WindowNotCovered { window_slot: u64 },
    QuadOutsideWindow { quad: [u64; 4] },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_violation(&self) -> Option<&Violation> {
        self.violations.first()
    }
}

/// Checks exact cover per period, consecutive-group quads and feasible
/// classification; for contiguous decompositions additionally that every quad
/// lies inside the reported window.
pub fn validate_decomposition(cfg: &ChannelConfig, decomp: &Decomposition) -> ValidationReport {
    let mut violations = Vec::new();
    let layout = match group_structure(cfg) {
        Ok(s) => GroupLayout::new(cfg, &s),
        Err(_) => {
            return ValidationReport {
                violations: vec![Violation::WindowNotCovered { window_slot: 0 }],
            }
        }
    };

    // (a) each residue of the period claimed exactly once
    let mut seen = vec![false; decomp.period as usize];
    for quad in &decomp.quads {
        for &slot in &quad.slots {
            if slot < decomp.window_start {
                violations.push(Violation::SlotBeforeWindow { slot });
                continue;
            }
            let r = ((slot - decomp.window_start) % decomp.period) as usize;
            if seen[r] {
                violations.push(Violation::DuplicateSlot { slot });
            }
            seen[r] = true;
        }
    }
    if let Some(r) = seen.iter().position(|&used| !used) {
        violations.push(Violation::WindowNotCovered {
            window_slot: decomp.window_start + r as u64,
        });
    }

    for quad in &decomp.quads {
        // (b) four consecutive groups
        let g0 = layout.group_of(quad.slots[0]);
        let consecutive = quad
            .slots
            .iter()
            .enumerate()
            .all(|(k, &slot)| layout.group_of(slot) == g0 + k as u64);
        if !consecutive {
            violations.push(Violation::NonConsecutiveGroups { quad: quad.slots });
        }
        // (c) feasible channel pattern
        match classify_block(cfg, quad.slots) {
            Ok(BlockPattern::Feasible { splits }) if splits.map(|a| [a, 4 - a]) == quad.pattern => {}
            _ => violations.push(Violation::InfeasiblePattern { quad: quad.slots }),
        }
        if decomp.contiguous
            && !(quad.slots[0] >= decomp.window_start
                && quad.slots[3] < decomp.window_start + decomp.period)
        {
            violations.push(Violation::QuadOutsideWindow { quad: quad.slots });
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;

    fn cfg(n: u32, offsets: &[u32]) -> ChannelConfig {
        ChannelConfig::new(n, offsets.to_vec()).unwrap()
    }

    fn gs(sizes: [u32; 3]) -> GroupStructure {
        GroupStructure::from_sizes(sizes)
    }

    #[test]
    fn feasibility_boundary_cases() {
        assert!(is_feasible(&gs([2, 2, 3])));
        assert!(is_feasible(&gs([1, 1, 2])));
        assert!(!is_feasible(&gs([1, 2, 4])));
        assert!(!is_feasible(&gs([0, 0, 4])));
    }

    #[test]
    fn thread_table_frozen_values() {
        assert_eq!(
            thread_table(&gs([2, 2, 3])).unwrap().counts(),
            [0, 0, 2, 0, 0, 1, 1, 0, 1, 0, 1, 1]
        );
        assert_eq!(
            thread_table(&gs([1, 1, 1])).unwrap().counts(),
            [0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0]
        );
        assert_eq!(
            thread_table(&gs([1, 2, 4])).unwrap_err(),
            DecompositionError::NotFeasible([1, 2, 4])
        );
    }

    fn check_window_identity(sizes: [u32; 3]) {
        let l = thread_table(&gs(sizes)).unwrap().counts();
        assert_eq!(l.iter().sum::<u64>(), sizes.iter().sum::<u32>() as u64);
        for t in 0..12usize {
            let sum: u64 = (0..4).map(|k| l[(t + 12 - k) % 12]).sum();
            assert_eq!(sum, sizes[t % 3] as u64, "t={t} sizes={sizes:?} l={l:?}");
        }
    }

    #[test]
    fn thread_table_window_identity_rotations() {
        // min in each of the three roles
        check_window_identity([2, 2, 3]);
        check_window_identity([3, 2, 3]);
        check_window_identity([3, 3, 2]);
        check_window_identity([5, 6, 7]);
        check_window_identity([7, 5, 6]);
        check_window_identity([6, 7, 5]);
    }

    #[test]
    fn decompose_paper_example_is_contiguous() {
        let c = cfg(7, &[0, 2, 4]);
        let d = decompose(&c).unwrap();
        assert_eq!(d.quads.len(), 7);
        assert_eq!(d.period, 28);
        assert!(d.contiguous);
        assert!(validate_decomposition(&c, &d).passed());
        let mut covered: Vec<u64> = d.quads.iter().flat_map(|q| q.slots).collect();
        covered.sort_unstable();
        let expect: Vec<u64> = (d.window_start..d.window_start + 28).collect();
        assert_eq!(covered, expect);
        // the paper's slots 8,10,12,14 instance: splits (3,1,2)
        assert!(d.quads.iter().any(|q| q.pattern == [[3, 1], [1, 3], [2, 2]]));
    }

    #[test]
    fn decompose_unit_groups() {
        let c = cfg(3, &[0, 1, 2]);
        let d = decompose(&c).unwrap();
        assert_eq!(d.quads.len(), 3);
        assert!(d.contiguous);
        assert!(validate_decomposition(&c, &d).passed());
        for q in &d.quads {
            assert!(q.slots.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn decompose_rejects_infeasible_and_degenerate() {
        assert_eq!(
            decompose(&cfg(7, &[0, 1, 2])).unwrap_err(),
            DecompositionError::NotFeasible([1, 1, 5])
        );
        assert_eq!(
            decompose(&cfg(8, &[0, 0, 4])).unwrap_err(),
            DecompositionError::Channel(ChannelError::DegenerateGroups)
        );
    }

    #[test]
    fn no_contiguous_window_for_2_3_3() {
        // s = (2,3,3): feasible, but no rotation has two equal adjacent group
        // sizes preceded by a larger one, so no straddle-free cut exists.
        let c = cfg(8, &[0, 2, 5]);
        let d = decompose(&c).unwrap();
        assert!(!d.contiguous);
        assert_eq!(find_wrap_free_window(&d), None);
        assert!(validate_decomposition(&c, &d).passed());
    }

    #[test]
    fn validator_catches_broken_decompositions() {
        let c = cfg(7, &[0, 2, 4]);
        let mut d = decompose(&c).unwrap();
        let orig = d.clone();

        d.quads[0].slots = d.quads[1].slots;
        d.quads[0].pattern = d.quads[1].pattern;
        let report = validate_decomposition(&c, &d);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DuplicateSlot { .. })));

        let mut d = orig.clone();
        // push one slot out of its group sequence
        d.quads[0].slots[3] += d.period;
        let report = validate_decomposition(&c, &d);
        assert!(!report.passed());

        assert!(validate_decomposition(&c, &orig).passed());
    }

    #[test]
    fn decomposition_json_round_trip() {
        let c = cfg(7, &[0, 2, 4]);
        let d = decompose(&c).unwrap();
        let js = serde_json::to_string(&d).unwrap();
        let back: Decomposition = serde_json::from_str(&js).unwrap();
        assert_eq!(back, d);
        assert!(validate_decomposition(&c, &back).passed());
    }
}
