//! Beamforming, alignment verification, zero-forcing decoding and rate
//! simulation over feasible 4-slot blocks.
//!
//! Each user's signaling vector is the 0/1 indicator of the two slots that
//! straddle its coherence-block boundary, identical on both transmit
//! antennas. At every receiver the two interfering users' symbol pairs then
//! collapse onto their own support indicators, leaving a 4x4 system with two
//! desired and two interference directions.

use crate::channel::{BlockPattern, ChannelConfig, ChannelError, ChannelRealization};
use crate::decomposition::{decompose, DecompositionError};
use crate::{channel::sample_realization, decomposition::Quad};
use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Collinearity tolerance for alignment verification.
pub const COLLINEARITY_TOL: f64 = 1e-10;
/// Condition-number ceiling before a decode is declared singular.
pub const SINGULAR_COND: f64 = 1e12;

#[derive(Debug, Error, PartialEq)]
pub enum AlignmentError {
    #[error("block pattern is not alignment-feasible")]
    InfeasiblePattern,
    #[error("decoding matrix is numerically singular (condition {0:.3e})")]
    SingularDecoder(f64),
    #[error("at least one trial is required")]
    ZeroTrials,
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
}

/// The three 0/1 signaling vectors of a feasible block; both antennas use
/// the same vector per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamformerSet {
    vectors: [[f64; 4]; 3],
    splits: [u8; 3],
}

impl BeamformerSet {
    pub fn vector(&self, user: usize) -> [f64; 4] {
        self.vectors[user]
    }

    /// Slot positions (0-based) where `user`'s vector is nonzero.
    pub fn support(&self, user: usize) -> [usize; 2] {
        let a = self.splits[user] as usize;
        [a - 1, a]
    }

    pub fn splits(&self) -> [u8; 3] {
        self.splits
    }
}

/// Signaling vectors for a feasible pattern: user `i` with split `a` gets the
/// indicator of slots `{a, a+1}` (1-based), which straddles its own block
/// boundary and stays inside a single block of each interfered user.
pub fn beamformers_for_pattern(pattern: &BlockPattern) -> Result<BeamformerSet, AlignmentError> {
    let splits = pattern.splits().ok_or(AlignmentError::InfeasiblePattern)?;
    let vectors = std::array::from_fn(|i| {
        let a = splits[i] as usize;
        let mut v = [0.0; 4];
        v[a - 1] = 1.0;
        v[a] = 1.0;
        v
    });
    Ok(BeamformerSet { vectors, splits })
}

/// Per-slot coefficients from antenna `antenna` to `receiver`, weighted by a
/// signaling vector: the diagonal channel matrix applied to the vector.
pub fn steered(
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    slots: [u64; 4],
    receiver: usize,
    antenna: usize,
    weights: [f64; 4],
) -> Result<[Complex64; 4], ChannelError> {
    let mut out = [Complex64::default(); 4];
    for (p, &slot) in slots.iter().enumerate() {
        let block = cfg.block_index(receiver, slot)?;
        out[p] = realization.coeff(receiver, antenna, block) * weights[p];
    }
    Ok(out)
}

/// True iff at every receiver each interfering user's two transmitted
/// directions are collinear on the support of its signaling vector.
pub fn verify_alignment(
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    slots: [u64; 4],
    bf: &BeamformerSet,
) -> Result<bool, ChannelError> {
    for receiver in 0..3 {
        for interferer in 0..3 {
            if interferer == receiver {
                continue;
            }
            let x = steered(realization, cfg, slots, receiver, 0, bf.vector(interferer))?;
            let y = steered(realization, cfg, slots, receiver, 1, bf.vector(interferer))?;
            let [p, q] = bf.support(interferer);
            let cross = (x[p] * y[q] - x[q] * y[p]).norm();
            let scale = (x[p].norm_sqr() + x[q].norm_sqr()).sqrt()
                * (y[p].norm_sqr() + y[q].norm_sqr()).sqrt();
            if cross > COLLINEARITY_TOL * scale {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Received 4-slot signal vectors of the three users for one supersymbol.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBlock {
    pub slots: [u64; 4],
    /// received[receiver][slot position]
    pub received: [[Complex64; 4]; 3],
}

/// Superimposes the six data symbols on the four slots and adds receiver
/// noise of variance `10^(-snr_db/10)`; `None` means noiseless.
pub fn encode_block(
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    slots: [u64; 4],
    bf: &BeamformerSet,
    symbols: &[[Complex64; 3]; 2],
    snr_db: Option<f64>,
    rng: &mut impl Rng,
) -> Result<EncodedBlock, ChannelError> {
    let mut received = [[Complex64::default(); 4]; 3];
    for receiver in 0..3 {
        let mut y = [Complex64::default(); 4];
        for antenna in 0..2 {
            for user in 0..3 {
                let dir = steered(realization, cfg, slots, receiver, antenna, bf.vector(user))?;
                for p in 0..4 {
                    y[p] += dir[p] * symbols[antenna][user];
                }
            }
        }
        if let Some(snr) = snr_db {
            let sigma = (10f64.powf(-snr / 10.0) / 2.0).sqrt();
            let noise = Normal::new(0.0, sigma).unwrap();
            for v in y.iter_mut() {
                *v += Complex64::new(noise.sample(rng), noise.sample(rng));
            }
        }
        received[receiver] = y;
    }
    Ok(EncodedBlock {
        slots,
        received,
    })
}

fn indicator(support: [usize; 2]) -> Vector4<Complex64> {
    let mut v = Vector4::from_element(Complex64::default());
    v[support[0]] = Complex64::new(1.0, 0.0);
    v[support[1]] = Complex64::new(1.0, 0.0);
    v
}

/// Stacked desired-plus-interference directions at `receiver`: its own two
/// steered vectors and the support indicators of the two interferers (valid
/// interference basis because alignment makes each pair parallel to it).
fn decoding_matrix(
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    slots: [u64; 4],
    bf: &BeamformerSet,
    receiver: usize,
) -> Result<Matrix4<Complex64>, ChannelError> {
    let d1 = steered(realization, cfg, slots, receiver, 0, bf.vector(receiver))?;
    let d2 = steered(realization, cfg, slots, receiver, 1, bf.vector(receiver))?;
    let others: Vec<usize> = (0..3).filter(|&u| u != receiver).collect();
    Ok(Matrix4::from_columns(&[
        Vector4::from_row_slice(&d1),
        Vector4::from_row_slice(&d2),
        indicator(bf.support(others[0])),
        indicator(bf.support(others[1])),
    ]))
}

/// Zero-forcing decode of `receiver`'s two symbols from one encoded block.
pub fn zf_decode(
    realization: &ChannelRealization,
    cfg: &ChannelConfig,
    block: &EncodedBlock,
    bf: &BeamformerSet,
    receiver: usize,
) -> Result<(Complex64, Complex64), AlignmentError> {
    let a = decoding_matrix(realization, cfg, block.slots, bf, receiver)?;
    let sv = a.svd(false, false).singular_values;
    let cond = sv[0] / sv[3];
    if !cond.is_finite() || cond > SINGULAR_COND {
        return Err(AlignmentError::SingularDecoder(cond));
    }
    let y = Vector4::from_row_slice(&block.received[receiver]);
    let x = a
        .lu()
        .solve(&y)
        .ok_or(AlignmentError::SingularDecoder(cond))?;
    Ok((x[0], x[1]))
}

/// Average sum rate at one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub snr_db: f64,
    pub sum_rate: f64,
    pub stderr: f64,
    pub trials: u64,
    pub singular_skipped: u64,
}

// splitmix64, used to derive independent per-trial seeds
fn derive_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed
        .wrapping_add((trial + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn blocks_needed(cfg: &ChannelConfig, quads: &[Quad]) -> Result<usize, ChannelError> {
    let mut max_block = 0;
    for quad in quads {
        for user in 0..cfg.user_count() {
            for &slot in &quad.slots {
                max_block = max_block.max(cfg.block_index(user, slot)?);
            }
        }
    }
    Ok(max_block as usize + 1)
}

/// Simulated average sum rate (bits per slot) over the config's supersymbol
/// schedule: interference is zero-forced exactly, then the Shannon rate of
/// the remaining 2-dimensional desired subspace is accumulated per receiver
/// and divided by the four slots of the block.
///
/// Trials run in parallel; each derives its own RNG stream from
/// `(seed, trial)`, so the output is independent of the parallelism degree.
pub fn simulate_rate_curve(
    cfg: &ChannelConfig,
    snr_grid_db: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<RatePoint>, AlignmentError> {
    if trials == 0 {
        return Err(AlignmentError::ZeroTrials);
    }
    let decomp = decompose(cfg)?;
    let blocks = blocks_needed(cfg, &decomp.quads)?;

    struct TrialOutcome {
        rates: Vec<f64>,
        skipped: u64,
    }

    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let realization = sample_realization(cfg, derive_seed(seed, trial), blocks);
            let mut gram = Vec::new();
            let mut skipped = 0u64;
            for quad in &decomp.quads {
                let pattern = BlockPattern::Feasible {
                    splits: quad.pattern.map(|p| p[0]),
                };
                let bf = beamformers_for_pattern(&pattern).expect("quad patterns are feasible");
                for receiver in 0..3 {
                    let a = decoding_matrix(&realization, cfg, quad.slots, &bf, receiver)
                        .expect("slots are valid");
                    let sv = a.svd(false, false).singular_values;
                    if sv[3] <= 0.0 || sv[0] / sv[3] > SINGULAR_COND {
                        skipped += 1;
                        continue;
                    }
                    // project the desired directions onto the interference null space
                    let b: Matrix4x2<Complex64> =
                        Matrix4x2::from_columns(&[a.column(2).into_owned(), a.column(3).into_owned()]);
                    let bhb = (b.adjoint() * b)
                        .try_inverse()
                        .expect("independent interference supports");
                    let d: Matrix4x2<Complex64> =
                        Matrix4x2::from_columns(&[a.column(0).into_owned(), a.column(1).into_owned()]);
                    let projected: Matrix4x2<Complex64> = d - b * bhb * (b.adjoint() * d);
                    gram.push(projected.adjoint() * projected);
                }
            }
            let quads = decomp.quads.len() as f64;
            let rates = snr_grid_db
                .iter()
                .map(|&snr_db| {
                    let rho = 10f64.powf(snr_db / 10.0);
                    let total: f64 = gram
                        .iter()
                        .map(|g| {
                            let m = Matrix2::identity() + g * Complex64::new(rho, 0.0);
                            let det = (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re;
                            det.max(1.0).log2()
                        })
                        .sum();
                    total / (4.0 * quads)
                })
                .collect();
            TrialOutcome { rates, skipped }
        })
        .collect();

    let skipped: u64 = outcomes.iter().map(|o| o.skipped).sum();
    Ok(snr_grid_db
        .iter()
        .enumerate()
        .map(|(i, &snr_db)| {
            let values: Vec<f64> = outcomes.iter().map(|o| o.rates[i]).collect();
            let mean = values.iter().sum::<f64>() / trials as f64;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (trials as f64).max(2.0).mul_add(1.0, -1.0).max(1.0);
            RatePoint {
                snr_db,
                sum_rate: mean,
                stderr: (var / trials as f64).sqrt(),
                trials,
                singular_skipped: skipped,
            }
        })
        .collect())
}

/// Convenience: a fresh noise RNG for a given seed.
pub fn noise_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
