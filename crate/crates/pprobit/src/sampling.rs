//! Second-pass sampling: k independent single-slot weighted reservoir
//! samplers draw rows with probability proportional to their sensitivity
//! score, producing the weighted coreset. One item per sampler keeps the
//! draws i.i.d. with replacement, which is what the sampling guarantee
//! assumes.
//!
//! Each sampler's accept decisions are keyed on (seed, sampler id, row
//! index), so feeding disjoint shards and merging gives the same
//! distribution as a sequential feed, and rebuilding from the same inputs is
//! byte-identical.

use crate::error::{Error, Result};
use crate::linalg::{qr_r_factor, upper_triangular_inverse};
use crate::objective::FoldedDesignMatrix;
use crate::rng::{mix2, mix3, mix3_finish, mix3_partial, unit_f64};
use ndarray::Array2;

const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;

/// The shared accept rule: item with `score` arriving at running total
/// `new_total` (inclusive) replaces the kept item iff the keyed draw falls
/// under score/new_total, compared in 64-bit integer space.
#[inline]
fn accept_threshold(score: f64, new_total: f64) -> u64 {
    ((score / new_total) * TWO_POW_64) as u64
}

/// Weighted coreset (X', w): rows sampled from the input with weights that
/// make the weighted loss an unbiased estimate of the full loss.
#[derive(Debug, Clone)]
pub struct WeightedCoreset {
    pub rows: Array2<f64>,
    pub weights: Vec<f64>,
    pub source_indices: Vec<usize>,
    pub method_tag: String,
}

impl WeightedCoreset {
    pub fn k(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }
}

/// Single-slot weighted reservoir sampler: after feeding items with scores
/// s_1..s_n (any order), P[kept = i] = s_i / Σ s_j exactly.
#[derive(Debug, Clone)]
pub struct ReservoirSampler {
    kept: Option<KeptItem>,
    total_weight: f64,
    seed: u64,
    id: u64,
}

#[derive(Debug, Clone)]
struct KeptItem {
    index: usize,
    row: Vec<f64>,
    score: f64,
}

impl ReservoirSampler {
    pub fn new(seed: u64, id: u64) -> Self {
        ReservoirSampler {
            kept: None,
            total_weight: 0.0,
            seed,
            id,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Feed one item; the replace decision comes from the keyed generator.
    pub fn feed(&mut self, index: usize, row: &[f64], score: f64) -> Result<bool> {
        if !(score > 0.0) || !score.is_finite() {
            return Err(Error::invalid(format!(
                "reservoir score must be positive and finite, got {score}"
            )));
        }
        let threshold = accept_threshold(score, self.total_weight + score);
        let accept = mix3(self.seed, self.id, index as u64) < threshold;
        Ok(self.feed_drawn(index, row, score, accept))
    }

    /// Transition with an externally supplied decision. Exposed so tests can
    /// enumerate every accept/reject branch and verify the kept-item
    /// distribution exactly; production code uses `feed`.
    pub fn feed_drawn(&mut self, index: usize, row: &[f64], score: f64, accept: bool) -> bool {
        self.total_weight += score;
        if accept || self.kept.is_none() {
            self.kept = Some(KeptItem {
                index,
                row: row.to_vec(),
                score,
            });
            true
        } else {
            false
        }
    }

    /// Merge two samplers fed on disjoint shards: keep `a`'s item with
    /// probability W_a/(W_a + W_b). `salt` distinguishes merge events.
    pub fn merge(a: ReservoirSampler, b: ReservoirSampler, salt: u64) -> ReservoirSampler {
        let u = unit_f64(mix3(a.seed ^ 0x6D65_7267_6553_616C, a.id, salt));
        let keep_a = u < a.total_weight / (a.total_weight + b.total_weight);
        ReservoirSampler {
            kept: if a.kept.is_none() {
                b.kept
            } else if b.kept.is_none() || keep_a {
                a.kept
            } else {
                b.kept
            },
            total_weight: a.total_weight + b.total_weight,
            seed: a.seed,
            id: a.id,
        }
    }

    pub fn kept_index(&self) -> Option<usize> {
        self.kept.as_ref().map(|item| item.index)
    }
}

/// Bank of k independent samplers fed in lockstep; the streaming pipelines
/// drive it row by row. Laid out as parallel arrays so the per-row loop
/// touches one 8-byte key per sampler: every sampler sees the same feed
/// sequence, hence the same running total and accept threshold, and its
/// decision reduces to one keyed hash and one compare. Decisions agree
/// bit-for-bit with feeding `ReservoirSampler`s individually.
pub struct SamplerBank {
    /// mix2(seed, id) per sampler, the hoisted half of the mix3 key.
    keys: Vec<u64>,
    kept: Vec<Option<KeptItem>>,
    sum_scores: f64,
    rows_seen: usize,
}

impl SamplerBank {
    pub fn new(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("coreset size k must be at least 1"));
        }
        Ok(SamplerBank {
            keys: (0..k as u64).map(|j| mix2(seed, j)).collect(),
            kept: vec![None; k],
            sum_scores: 0.0,
            rows_seen: 0,
        })
    }

    pub fn feed(&mut self, index: usize, row: &[f64], score: f64) -> Result<()> {
        if !(score > 0.0) || !score.is_finite() {
            return Err(Error::invalid(format!(
                "reservoir score must be positive and finite, got {score}"
            )));
        }
        let new_total = self.sum_scores + score;
        let threshold = accept_threshold(score, new_total);
        let partial = mix3_partial(index as u64);
        let first_item = self.rows_seen == 0;
        for (j, &key) in self.keys.iter().enumerate() {
            if mix3_finish(key, partial) < threshold || first_item {
                self.kept[j] = Some(KeptItem {
                    index,
                    row: row.to_vec(),
                    score,
                });
            }
        }
        self.sum_scores = new_total;
        self.rows_seen += 1;
        Ok(())
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn sum_scores(&self) -> f64 {
        self.sum_scores
    }

    /// State footprint in bytes: keys plus k kept rows.
    pub fn state_bytes(&self) -> usize {
        self.keys.len() * 8
            + self
                .kept
                .iter()
                .map(|slot| {
                    16 + slot
                        .as_ref()
                        .map(|item| item.row.len() * 8 + 40)
                        .unwrap_or(0)
                })
                .sum::<usize>()
    }

    /// Assemble the coreset: row j is sampler j's kept item with weight
    /// S/(k·s_{i(j)}) — the unnormalized 1/(k·s) scaled by the final total.
    pub fn into_coreset(self, method_tag: &str) -> Result<WeightedCoreset> {
        let k = self.keys.len();
        let missing = || Error::invalid("reservoir sampler saw no rows");
        let d = self.kept[0].as_ref().ok_or_else(missing)?.row.len();
        let mut rows = Array2::zeros((k, d));
        let mut weights = Vec::with_capacity(k);
        let mut source_indices = Vec::with_capacity(k);
        for (j, slot) in self.kept.iter().enumerate() {
            let item = slot.as_ref().ok_or_else(missing)?;
            for (col, &v) in item.row.iter().enumerate() {
                rows[[j, col]] = v;
            }
            weights.push(self.sum_scores / (k as f64 * item.score));
            source_indices.push(item.index);
        }
        Ok(WeightedCoreset {
            rows,
            weights,
            source_indices,
            method_tag: method_tag.to_string(),
        })
    }
}

/// Single-pass coreset from precomputed sensitivity scores.
pub fn build_coreset_pass(
    x: &FoldedDesignMatrix,
    scores: &crate::conditioning::SensitivityScores,
    k: usize,
    seed: u64,
) -> Result<WeightedCoreset> {
    if scores.s.len() != x.n() {
        return Err(Error::dim(format!(
            "{} scores for {} rows",
            scores.s.len(),
            x.n()
        )));
    }
    let mut bank = SamplerBank::new(k, seed)?;
    for i in 0..x.n() {
        bank.feed(i, x.row(i).as_slice().unwrap(), scores.s[i])?;
    }
    bank.into_coreset("pprobit")
}

/// Uniform-sampling baseline: constant scores, weights n/k.
pub fn uniform_coreset(x: &FoldedDesignMatrix, k: usize, seed: u64) -> Result<WeightedCoreset> {
    let n = x.n();
    let mut bank = SamplerBank::new(k, seed)?;
    for i in 0..n {
        // Constant score: 1.0 (feeding exactly 1/n gives the same accept
        // probabilities; integer-valued totals keep them exact).
        bank.feed(i, x.row(i).as_slice().unwrap(), 1.0)?;
    }
    let mut coreset = bank.into_coreset("uniform")?;
    for w in coreset.weights.iter_mut() {
        *w = n as f64 / k as f64;
    }
    Ok(coreset)
}

/// Exact ℓ2 leverage scores (diagonal of the hat matrix) via QR on X itself.
pub fn l2_leverage_scores(x: &FoldedDesignMatrix) -> Result<Vec<f64>> {
    let r = qr_r_factor(&x.rows())?;
    let r_inv = upper_triangular_inverse(&r.view(), 1e-12)?;
    let d = x.dim();
    let mut scores = Vec::with_capacity(x.n());
    for i in 0..x.n() {
        let row = x.row(i);
        let mut lev = 0.0;
        for col in 0..d {
            let mut v = 0.0;
            for j in 0..d {
                v += row[j] * r_inv[[j, col]];
            }
            lev += v * v;
        }
        scores.push(lev);
    }
    Ok(scores)
}

/// ℓ2-leverage baseline: scores ℓ_i (or √ℓ_i) + 1/n through the same
/// reservoir pipeline.
pub fn l2_leverage_coreset(
    x: &FoldedDesignMatrix,
    k: usize,
    seed: u64,
    sqrt_scores: bool,
) -> Result<WeightedCoreset> {
    let leverage = l2_leverage_scores(x)?;
    let n = x.n();
    let inv_n = 1.0 / n as f64;
    let mut bank = SamplerBank::new(k, seed)?;
    for i in 0..n {
        let base = if sqrt_scores {
            leverage[i].max(0.0).sqrt()
        } else {
            leverage[i]
        };
        bank.feed(i, x.row(i).as_slice().unwrap(), base + inv_n)?;
    }
    bank.into_coreset(if sqrt_scores { "sqrt-l2" } else { "l2" })
}
