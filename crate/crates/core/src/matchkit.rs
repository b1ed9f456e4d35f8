//! Pairwise template comparison.
//!
//! The float score is the cosine of the two flattened descriptors, with each
//! descriptor normalized only over the partner's foreground, mapped to
//! `[0, 1]`:
//!
//! ```text
//! s(q, g) = ½ · ⟨q, g⟩ / ((‖q ⊙ h_g‖ + ε)(‖g ⊙ h_q‖ + ε)) + ½
//! ```
//!
//! Because each descriptor is zero outside its own mask, the inner product
//! only sees the overlap, and `‖q ⊙ h_g‖² = Σ_cells h_g · cellnorm_q`.

use crate::error::{FddError, Result};
use crate::kernels::{dot_f64, masked_hamming};
use crate::mask::CELLS;
use crate::scalar::Scalar;
use crate::template::{BinaryFddTemplate, FddTemplate};

/// Guard added to each normalization factor.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchResult {
    /// Similarity in `[0, 1]`.
    pub score: f64,
    /// Cells where both masks are set.
    pub overlap_cells: u32,
    /// The masks are disjoint; `score` is 0.
    pub empty_overlap: bool,
}

impl MatchResult {
    pub(crate) fn empty() -> Self {
        Self {
            score: 0.0,
            overlap_cells: 0,
            empty_overlap: true,
        }
    }
}

/// Maps an inner product and the two squared partial norms to a score.
#[inline]
pub(crate) fn cosine_score(dot: f64, q_norm_sq: f64, g_norm_sq: f64) -> f64 {
    let denom = (q_norm_sq.sqrt() + NORM_EPSILON) * (g_norm_sq.sqrt() + NORM_EPSILON);
    (0.5 * dot / denom + 0.5).clamp(0.0, 1.0)
}

/// Float-template similarity.
pub fn match_templates<T: Scalar>(q: &FddTemplate<T>, g: &FddTemplate<T>) -> Result<MatchResult> {
    if q.c() != g.c() {
        return Err(FddError::param(format!(
            "cannot match templates with c = {} and c = {}",
            q.c(),
            g.c()
        )));
    }
    let overlap = q.mask().intersect(g.mask());
    if overlap.is_empty() {
        return Ok(MatchResult::empty());
    }
    let dot = dot_f64(q.flatten(), g.flatten());
    let q_part: [f64; CELLS] = q.cell_norms();
    let g_part: [f64; CELLS] = g.cell_norms();
    let q_norm_sq = dot_f64(&q_part, &g.mask().to_weights());
    let g_norm_sq = dot_f64(&g_part, &q.mask().to_weights());
    Ok(MatchResult {
        score: cosine_score(dot, q_norm_sq, g_norm_sq),
        overlap_cells: overlap.count(),
        empty_overlap: false,
    })
}

/// Binary similarity: fraction of agreeing bits over the overlap, with
/// `overlap_cells · 2c` bits compared.
pub fn match_binary(q: &BinaryFddTemplate, g: &BinaryFddTemplate) -> Result<MatchResult> {
    if q.c() != g.c() {
        return Err(FddError::param(format!(
            "cannot match binary templates with c = {} and c = {}",
            q.c(),
            g.c()
        )));
    }
    let overlap = q.mask().intersect(g.mask());
    if overlap.is_empty() {
        return Ok(MatchResult::empty());
    }
    let cells = overlap.count();
    let compared = cells as u64 * 2 * q.c() as u64;
    let diff = masked_hamming(q.bits(), g.bits(), overlap.words()) as u64;
    Ok(MatchResult {
        score: binary_score(diff, compared),
        overlap_cells: cells,
        empty_overlap: false,
    })
}

#[inline]
pub(crate) fn binary_score(diff: u64, compared: u64) -> f64 {
    1.0 - diff as f64 / compared as f64
}

/// Weighted mean of `(score, weight)` pairs.
pub fn fuse(scores: &[(f64, f64)]) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(s, w) in scores {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(FddError::param(format!(
                "fusion weight must be finite and ≥ 0, got {w}"
            )));
        }
        if !s.is_finite() {
            return Err(FddError::param(format!("fusion score must be finite, got {s}")));
        }
        num += w * s;
        den += w;
    }
    if den <= 0.0 {
        return Err(FddError::param("at least one fusion weight must be positive"));
    }
    Ok(num / den)
}
