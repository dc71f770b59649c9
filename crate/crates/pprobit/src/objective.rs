//! The weighted p-probit loss f_w(Xβ) = Σ w_i g(x_i β), its gradient and
//! Hessian, the substitute function G⁺, and a sampled lower-bound estimator
//! for the complexity parameter μ.
//!
//! Rows are processed in fixed-size chunks whose partial sums are combined
//! in chunk order with compensated summation, so results are identical for
//! any worker count and stable to row-level rounding beyond ~1e-13 relative.

use crate::error::{Error, Result};
use crate::gennorm::{self, ShapeP};
use crate::linalg::KahanSum;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Rows per accumulation chunk. Fixed (not tied to thread count) so serial
/// and parallel evaluation produce bitwise-identical sums.
const CHUNK: usize = 1024;

/// Design matrix with labels already folded in: row i is x_i = −(2y_i−1)·z_i.
#[derive(Debug, Clone)]
pub struct FoldedDesignMatrix {
    rows: Array2<f64>,
}

impl FoldedDesignMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self> {
        if rows.nrows() == 0 || rows.ncols() == 0 {
            return Err(Error::invalid("design matrix must be at least 1x1"));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("design matrix contains non-finite entries"));
        }
        Ok(FoldedDesignMatrix { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn rows(&self) -> ArrayView2<'_, f64> {
        self.rows.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.rows
    }
}

/// Per-row weights; `Uniform` avoids materializing a vector of ones.
#[derive(Debug, Clone, Copy)]
pub enum Weights<'a> {
    Uniform,
    Custom(&'a [f64]),
}

impl<'a> Weights<'a> {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Weights::Uniform => Ok(()),
            Weights::Custom(w) => {
                if w.len() != n {
                    return Err(Error::dim(format!(
                        "weight vector has length {}, expected {n}",
                        w.len()
                    )));
                }
                if w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::invalid("weights must be positive and finite"));
                }
                Ok(())
            }
        }
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        match self {
            Weights::Uniform => 1.0,
            Weights::Custom(w) => w[i],
        }
    }
}

fn check_dims(x: &FoldedDesignMatrix, w: &Weights, beta: &ArrayView1<f64>) -> Result<()> {
    if beta.len() != x.dim() {
        return Err(Error::dim(format!(
            "beta has length {}, design matrix has {} columns",
            beta.len(),
            x.dim()
        )));
    }
    w.validate(x.n())
}

/// What a single evaluation pass should produce.
#[derive(Debug, Clone, Copy, PartialEq)]
enum EvalKind {
    Loss,
    LossGrad,
    Full,
}

/// Loss, and optionally gradient and Hessian, in one pass over the rows.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: Option<Array1<f64>>,
    pub hessian: Option<Array2<f64>>,
}

struct ChunkAccum {
    loss: KahanSum,
    grad: Option<(Array1<f64>, Array1<f64>)>,
    hess: Option<(Array2<f64>, Array2<f64>)>,
}

impl ChunkAccum {
    fn new(d: usize, kind: EvalKind) -> Self {
        ChunkAccum {
            loss: KahanSum::default(),
            grad: if kind != EvalKind::Loss {
                Some((Array1::zeros(d), Array1::zeros(d)))
            } else {
                None
            },
            hess: if kind == EvalKind::Full {
                Some((Array2::zeros((d, d)), Array2::zeros((d, d))))
            } else {
                None
            },
        }
    }

    #[inline]
    fn add_grad(&mut self, i: usize, value: f64) {
        let (sum, comp) = self.grad.as_mut().unwrap();
        let y = value - comp[i];
        let t = sum[i] + y;
        comp[i] = (t - sum[i]) - y;
        sum[i] = t;
    }

    #[inline]
    fn add_hess(&mut self, i: usize, j: usize, value: f64) {
        let (sum, comp) = self.hess.as_mut().unwrap();
        let y = value - comp[[i, j]];
        let t = sum[[i, j]] + y;
        comp[[i, j]] = (t - sum[[i, j]]) - y;
        sum[[i, j]] = t;
    }
}

fn eval_chunk(
    x: &FoldedDesignMatrix,
    w: &Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
    range: std::ops::Range<usize>,
    kind: EvalKind,
) -> Result<ChunkAccum> {
    let d = x.dim();
    let mut acc = ChunkAccum::new(d, kind);
    for i in range {
        let row = x.row(i);
        let r = row.dot(beta);
        let wi = w.get(i);
        match kind {
            EvalKind::Loss => {
                acc.loss.add(wi * gennorm::g(r, p)?);
            }
            EvalKind::LossGrad => {
                let lsf = gennorm::log_sf(r, p)?;
                let gp = (gennorm::ln_pdf(r, p)? - lsf).exp();
                acc.loss.add(wi * -lsf);
                let scale = wi * gp;
                for j in 0..d {
                    acc.add_grad(j, scale * row[j]);
                }
            }
            EvalKind::Full => {
                let (g, gp, gs) = gennorm::g_all(r, p)?;
                acc.loss.add(wi * g);
                let gscale = wi * gp;
                let hscale = wi * gs;
                for j in 0..d {
                    acc.add_grad(j, gscale * row[j]);
                    for l in j..d {
                        acc.add_hess(j, l, hscale * row[j] * row[l]);
                    }
                }
            }
        }
    }
    Ok(acc)
}

fn evaluate_kind(
    x: &FoldedDesignMatrix,
    w: &Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
    kind: EvalKind,
) -> Result<Evaluation> {
    check_dims(x, w, beta)?;
    let n = x.n();
    let d = x.dim();
    let ranges: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(CHUNK)
        .map(|start| start..(start + CHUNK).min(n))
        .collect();
    let partials: Vec<Result<ChunkAccum>> = ranges
        .into_par_iter()
        .map(|range| eval_chunk(x, w, beta, p, range, kind))
        .collect();

    // Fixed-order reduction over chunk partials.
    let mut loss = KahanSum::default();
    let mut grad = if kind != EvalKind::Loss {
        Some((Array1::<f64>::zeros(d), Array1::<f64>::zeros(d)))
    } else {
        None
    };
    let mut hess = if kind == EvalKind::Full {
        Some((Array2::<f64>::zeros((d, d)), Array2::<f64>::zeros((d, d))))
    } else {
        None
    };
    for partial in partials {
        let partial = partial?;
        loss.add(partial.loss.value());
        if let (Some((gsum, gcomp)), Some((psum, _))) = (grad.as_mut(), partial.grad.as_ref()) {
            for j in 0..d {
                let y = psum[j] - gcomp[j];
                let t = gsum[j] + y;
                gcomp[j] = (t - gsum[j]) - y;
                gsum[j] = t;
            }
        }
        if let (Some((hsum, hcomp)), Some((psum, _))) = (hess.as_mut(), partial.hess.as_ref()) {
            for j in 0..d {
                for l in j..d {
                    let y = psum[[j, l]] - hcomp[[j, l]];
                    let t = hsum[[j, l]] + y;
                    hcomp[[j, l]] = (t - hsum[[j, l]]) - y;
                    hsum[[j, l]] = t;
                }
            }
        }
    }
    let gradient = grad.map(|(sum, _)| sum);
    let hessian = hess.map(|(sum, _)| {
        let mut full = sum;
        for j in 0..d {
            for l in 0..j {
                full[[j, l]] = full[[l, j]];
            }
        }
        full
    });
    Ok(Evaluation {
        loss: loss.value(),
        gradient,
        hessian,
    })
}

/// f_w(Xβ) = Σ w_i g(x_i β).
pub fn loss(
    x: &FoldedDesignMatrix,
    w: Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
) -> Result<f64> {
    Ok(evaluate_kind(x, &w, beta, p, EvalKind::Loss)?.loss)
}

/// ∇f_w(Xβ) = Σ w_i g'(x_i β) x_iᵀ.
pub fn gradient(
    x: &FoldedDesignMatrix,
    w: Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
) -> Result<Array1<f64>> {
    Ok(evaluate_kind(x, &w, beta, p, EvalKind::LossGrad)?
        .gradient
        .unwrap())
}

/// Hessian Σ w_i g''(x_i β) x_iᵀ x_i; symmetric PSD up to rounding.
pub fn hessian(
    x: &FoldedDesignMatrix,
    w: Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
) -> Result<Array2<f64>> {
    Ok(evaluate_kind(x, &w, beta, p, EvalKind::Full)?
        .hessian
        .unwrap())
}

/// Loss + gradient in one pass.
pub fn loss_gradient(
    x: &FoldedDesignMatrix,
    w: Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
) -> Result<(f64, Array1<f64>)> {
    let eval = evaluate_kind(x, &w, beta, p, EvalKind::LossGrad)?;
    Ok((eval.loss, eval.gradient.unwrap()))
}

/// Loss + gradient + Hessian in one pass (the Newton iteration workhorse).
pub fn loss_gradient_hessian(
    x: &FoldedDesignMatrix,
    w: Weights,
    beta: &ArrayView1<f64>,
    p: &ShapeP,
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let eval = evaluate_kind(x, &w, beta, p, EvalKind::Full)?;
    Ok((eval.loss, eval.gradient.unwrap(), eval.hessian.unwrap()))
}

/// The substitute function G⁺(r) = r^p/p for r ≥ 0, else 0. Lower-bounds g
/// up to the additive constant of the sandwich bound.
pub fn g_plus(r: f64, p: &ShapeP) -> f64 {
    if r >= 0.0 {
        r.powf(p.value()) / p.value()
    } else {
        0.0
    }
}

/// Sampled lower bound on the complexity parameter
/// μ_p(X) = sup_β Σ_{x_iβ>0}|x_iβ|^p / Σ_{x_iβ<0}|x_iβ|^p.
#[derive(Debug, Clone)]
pub struct MuEstimate {
    /// Max ratio over the tried directions; +∞ when some direction has an
    /// empty negative part.
    pub mu_lower: f64,
    pub directions_tried: usize,
    pub seed: u64,
    /// A direction achieving an unbounded ratio, when one was found.
    pub unbounded_direction: Option<Vec<f64>>,
}

/// Evaluate the μ ratio over the 2d signed coordinate axes plus
/// `num_directions` uniform directions on the unit sphere. The result is a
/// certified lower bound on μ_p(X) (the true value is a supremum over all
/// directions).
pub fn estimate_mu_lower(
    x: &FoldedDesignMatrix,
    p: &ShapeP,
    num_directions: usize,
    seed: u64,
) -> Result<MuEstimate> {
    let d = x.dim();
    if x.rows().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("mu estimate of an all-zero matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    let mut unbounded: Option<Vec<f64>> = None;
    let mut tried = 0;

    let consider = |beta: &Array1<f64>, best: &mut f64, unbounded: &mut Option<Vec<f64>>| {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for i in 0..x.n() {
            let r = x.row(i).dot(beta);
            if r > 0.0 {
                pos += r.abs().powf(p.value());
            } else if r < 0.0 {
                neg += r.abs().powf(p.value());
            }
        }
        // The supremum ranges over ±β, so take both orientations.
        for (num, den, flip) in [(pos, neg, false), (neg, pos, true)] {
            if num == 0.0 {
                continue;
            }
            if den == 0.0 {
                if unbounded.is_none() {
                    let dir: Vec<f64> =
                        beta.iter().map(|&v| if flip { -v } else { v }).collect();
                    *unbounded = Some(dir);
                }
                *best = f64::INFINITY;
            } else {
                *best = best.max(num / den);
            }
        }
    };

    for j in 0..d {
        let mut beta = Array1::zeros(d);
        beta[j] = 1.0;
        consider(&beta, &mut best, &mut unbounded);
        beta[j] = -1.0;
        consider(&beta, &mut best, &mut unbounded);
        tried += 2;
    }
    for _ in 0..num_directions {
        let mut beta = Array1::zeros(d);
        let mut norm_sq = 0.0;
        while norm_sq == 0.0 {
            for j in 0..d {
                beta[j] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            norm_sq = beta.dot(&beta);
        }
        beta /= norm_sq.sqrt();
        consider(&beta, &mut best, &mut unbounded);
        tried += 1;
    }
    Ok(MuEstimate {
        mu_lower: best,
        directions_tried: tried,
        seed,
        unbounded_direction: unbounded,
    })
}
