//! Blind interference alignment on homogeneous 3-user 2x1 broadcast
//! channels: staggered-coherence channel model, supersymbol (pattern
//! diagram) decomposition, beamforming/zero-forcing simulation, and exact
//! feasibility combinatorics.

pub mod alignment;
pub mod channel;
pub mod counting;
pub mod decomposition;
