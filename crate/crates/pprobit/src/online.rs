//! Single-pass online coreset for p = 2: online ℓ2 leverage scores
//! ℓ_i = min{x_iᵀ M_i† x_i, 1} with M_i the inclusive prefix Gram matrix,
//! maintained by Sherman-Morrison rank-one updates. A full pseudoinverse and
//! column-space recompute happens only when a row leaves the current span
//! (at most d times in exact arithmetic) or when the drift guard trips.

use crate::error::{Error, Result};
use crate::linalg::{column_space_basis, max_abs, pseudo_inverse_psd};
use crate::sampling::{SamplerBank, WeightedCoreset};
use ndarray::{Array1, Array2};

/// Span-membership tolerance: a row counts as inside col(M) when
/// ‖Qᵀx‖₂ ≥ (1 − 1e−10)·‖x‖₂ (exact equality is unattainable in floats).
const SPAN_TOL: f64 = 1e-10;

/// Check M·M_inv against the column-space projector every this many
/// Sherman-Morrison updates.
const DRIFT_CHECK_EVERY: usize = 1000;
const DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct OnlineLeverageState {
    m: Array2<f64>,
    m_inv: Array2<f64>,
    q_basis: Array2<f64>,
    rank: usize,
    rank_tolerance: f64,
    sm_updates_since_check: usize,
    pub recompute_events: usize,
    pub drift_repairs: usize,
    rows_seen: usize,
}

impl OnlineLeverageState {
    pub fn new(d: usize) -> Self {
        OnlineLeverageState {
            m: Array2::zeros((d, d)),
            m_inv: Array2::zeros((d, d)),
            q_basis: Array2::zeros((d, 0)),
            rank: 0,
            rank_tolerance: 1e-10,
            sm_updates_since_check: 0,
            recompute_events: 0,
            drift_repairs: 0,
            rows_seen: 0,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rows_seen(&self) -> usize {
        self.rows_seen
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// State footprint in bytes (M, M_inv, Q).
    pub fn state_bytes(&self) -> usize {
        (self.m.len() + self.m_inv.len() + self.q_basis.len()) * 8
    }

    fn in_span(&self, x: &Array1<f64>, x_norm: f64) -> bool {
        if x_norm == 0.0 {
            return true;
        }
        if self.rank == 0 {
            return false;
        }
        let projected = self.q_basis.t().dot(x);
        projected.dot(&projected).sqrt() >= (1.0 - SPAN_TOL) * x_norm
    }

    fn recompute(&mut self) -> Result<()> {
        let (pinv, rank) = pseudo_inverse_psd(&self.m.view(), self.rank_tolerance)?;
        self.m_inv = pinv;
        self.q_basis = column_space_basis(&self.m.view(), self.rank_tolerance)?;
        self.rank = rank.max(self.q_basis.ncols());
        self.sm_updates_since_check = 0;
        Ok(())
    }

    /// Add row x to the Gram accumulator and return its online leverage
    /// score ℓ ∈ [0, 1].
    pub fn update(&mut self, x: &[f64]) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::dim(format!(
                "row has length {}, expected {d}",
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("online update got a non-finite row"));
        }
        let x = Array1::from_iter(x.iter().cloned());
        let x_norm = x.dot(&x).sqrt();

        // M ← M + x xᵀ
        for i in 0..d {
            for j in 0..d {
                self.m[[i, j]] += x[i] * x[j];
            }
        }

        if self.in_span(&x, x_norm) {
            // Sherman-Morrison: M_inv ← M_inv − (M_inv x xᵀ M_inv)/(1 + xᵀ M_inv x).
            let mx = self.m_inv.dot(&x);
            let denom = 1.0 + x.dot(&mx);
            for i in 0..d {
                for j in 0..d {
                    self.m_inv[[i, j]] -= mx[i] * mx[j] / denom;
                }
            }
            self.sm_updates_since_check += 1;
            if self.sm_updates_since_check >= DRIFT_CHECK_EVERY {
                self.sm_updates_since_check = 0;
                let projector = self.q_basis.dot(&self.q_basis.t());
                let resid = &self.m.dot(&self.m_inv) - &projector;
                if max_abs(&resid.view()) > DRIFT_TOL {
                    self.recompute()?;
                    self.drift_repairs += 1;
                }
            }
        } else {
            self.recompute()?;
            self.recompute_events += 1;
        }

        self.rows_seen += 1;
        let raw = x.dot(&self.m_inv.dot(&x));
        Ok(raw.clamp(0.0, 1.0))
    }
}

/// Stats reported alongside an online coreset build.
#[derive(Debug, Clone)]
pub struct OnlineStats {
    pub sum_leverage: f64,
    pub recompute_events: usize,
    pub drift_repairs: usize,
    pub uniform_term_omitted: bool,
}

/// Algorithm: stream rows once, score each with its online leverage plus
/// 1/n, and feed k reservoir samplers. `n_hint` supplies n when the caller
/// knows the stream length; without it the 1/n term is omitted and the
/// method tag records the deviation.
pub fn online_coreset<I, R>(
    rows: I,
    d: usize,
    k: usize,
    seed: u64,
    n_hint: Option<usize>,
) -> Result<(WeightedCoreset, OnlineStats)>
where
    I: IntoIterator<Item = (usize, R)>,
    R: AsRef<[f64]>,
{
    let mut state = OnlineLeverageState::new(d);
    let mut bank = SamplerBank::new(k, seed)?;
    let uniform_term = n_hint.map(|n| 1.0 / n as f64);
    let mut sum_leverage = 0.0;
    for (index, row) in rows {
        let row = row.as_ref();
        let ell = state.update(row)?;
        sum_leverage += ell;
        let score = ell + uniform_term.unwrap_or(0.0);
        if score > 0.0 {
            bank.feed(index, row, score)?;
        }
        // A zero score (possible only without the 1/n term) has sampling
        // probability zero; skipping the feed is the same distribution.
    }
    let tag = if uniform_term.is_some() {
        "online-l2"
    } else {
        "online-l2-no-uniform"
    };
    let coreset = bank.into_coreset(tag)?;
    Ok((
        coreset,
        OnlineStats {
            sum_leverage,
            recompute_events: state.recompute_events,
            drift_repairs: state.drift_repairs,
            uniform_term_omitted: uniform_term.is_none(),
        },
    ))
}
