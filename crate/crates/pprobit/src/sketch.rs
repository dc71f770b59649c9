//! First-pass streaming sketch ΠX. Π hashes each row to one of n′ buckets
//! with a random sign; for p ≠ 2 the row is additionally scaled by
//! 1/λ_i^{1/p} with λ_i ~ Exp(1), embedding ℓp into the bucket space. The
//! per-row draws are pure functions of (seed, row index), so both passes and
//! any sharding see the identical realization of Π.

use crate::error::{Error, Result};
use crate::gennorm::ShapeP;
use crate::rng::{exponential_from, mix3};
use ndarray::{Array1, Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

const BUCKET_SALT: u64 = 0x5B7C_0000_0000_0001;
const SIGN_SALT: u64 = 0x5B7C_0000_0000_0002;
const EXP_SALT: u64 = 0x5B7C_0000_0000_0003;

/// Seeded description of the sketching operator Π.
#[derive(Debug, Clone)]
pub struct SketchOperator {
    n_prime: usize,
    p: ShapeP,
    seed: u64,
    identity: bool,
}

/// Realized per-row draw: target bucket and the signed scaling applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowDraw {
    pub bucket: usize,
    pub scale: f64,
}

/// Bucket count for the sketch: min(n, 4d²) for p ∈ [1,2], and
/// min(n, ⌈n^{1−2/p}·ln n·d·⌈ln d + 1⌉⌉ + 4d²) for p > 2.
pub fn sketch_size(n: usize, d: usize, p: &ShapeP) -> usize {
    let base = 4 * d * d;
    let size = if p.value() <= 2.0 {
        base
    } else {
        let nf = n as f64;
        let df = d as f64;
        let moment = nf.powf(1.0 - 2.0 / p.value()) * nf.ln().max(0.0) * df * (df.ln() + 1.0).ceil();
        moment.ceil() as usize + base
    };
    size.clamp(1, n.max(1))
}

/// Bucket count when the row count is not yet known (streaming first pass):
/// the p ∈ [1,2] size depends only on d, so the cap at n is dropped.
pub fn sketch_size_unbounded(d: usize, p: &ShapeP) -> Result<usize> {
    if p.value() > 2.0 {
        return Err(Error::invalid(
            "sketch sizing for p > 2 requires the row count",
        ));
    }
    Ok(4 * d * d)
}

impl SketchOperator {
    /// Operator sized for an n×d input.
    pub fn new(n: usize, d: usize, p: &ShapeP, seed: u64) -> Self {
        Self::with_buckets(sketch_size(n, d, p), p, seed)
    }

    pub fn with_buckets(n_prime: usize, p: &ShapeP, seed: u64) -> Self {
        SketchOperator {
            n_prime: n_prime.max(1),
            p: *p,
            seed,
            identity: false,
        }
    }

    /// Trivial operator: row i goes to bucket i with scale 1 (Π = I).
    pub fn identity(n: usize, p: &ShapeP) -> Self {
        SketchOperator {
            n_prime: n.max(1),
            p: *p,
            seed: 0,
            identity: true,
        }
    }

    pub fn n_prime(&self) -> usize {
        self.n_prime
    }

    pub fn shape(&self) -> &ShapeP {
        &self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The draw for row i; a pure function of (seed, i).
    pub fn draw(&self, i: usize) -> RowDraw {
        if self.identity {
            return RowDraw {
                bucket: i % self.n_prime,
                scale: 1.0,
            };
        }
        let i = i as u64;
        let bucket = (mix3(self.seed, i, BUCKET_SALT) % self.n_prime as u64) as usize;
        let sign = if mix3(self.seed, i, SIGN_SALT) >> 63 == 1 {
            -1.0
        } else {
            1.0
        };
        let scale = if self.p.value() == 2.0 {
            sign
        } else {
            let lambda = exponential_from(mix3(self.seed, i, EXP_SALT));
            sign / lambda.powf(1.0 / self.p.value())
        };
        RowDraw { bucket, scale }
    }
}

/// The accumulated sketch ΠX.
#[derive(Debug, Clone)]
pub struct SketchMatrix {
    pub data: Array2<f64>,
    pub rows_processed: usize,
}

/// Accumulate the sketch over a single pass of (index, row) pairs; indices
/// must cover 0..n exactly once in any order.
pub fn sketch_apply_stream<I, R>(
    op: &SketchOperator,
    n: usize,
    d: usize,
    rows: I,
) -> Result<SketchMatrix>
where
    I: IntoIterator<Item = (usize, R)>,
    R: AsRef<[f64]>,
{
    let mut acc = SketchAccumulator::new(op.clone(), n, d);
    for (index, row) in rows {
        acc.feed(index, row.as_ref())?;
    }
    acc.finish()
}

/// Incremental form of `sketch_apply_stream` for callers that drive the
/// pass themselves (the streaming pipeline).
pub struct SketchAccumulator {
    op: SketchOperator,
    n: Option<usize>,
    data: Array2<f64>,
    seen: Vec<u64>,
    rows_processed: usize,
}

impl SketchAccumulator {
    pub fn new(op: SketchOperator, n: usize, d: usize) -> Self {
        let n_prime = op.n_prime();
        SketchAccumulator {
            op,
            n: Some(n),
            data: Array2::zeros((n_prime, d)),
            seen: vec![0u64; n.div_ceil(64)],
            rows_processed: 0,
        }
    }

    /// Accumulator for a stream of unknown length; the seen-bitmap grows on
    /// demand and the caller checks the final count itself.
    pub fn new_unbounded(op: SketchOperator, d: usize) -> Self {
        let n_prime = op.n_prime();
        SketchAccumulator {
            op,
            n: None,
            data: Array2::zeros((n_prime, d)),
            seen: Vec::new(),
            rows_processed: 0,
        }
    }

    pub fn feed(&mut self, index: usize, row: &[f64]) -> Result<()> {
        if let Some(n) = self.n {
            if index >= n {
                return Err(Error::invalid(format!(
                    "row index {index} out of range for n={n}"
                )));
            }
        }
        let (word, bit) = (index / 64, index % 64);
        if word >= self.seen.len() {
            self.seen.resize(word + 1, 0);
        }
        if self.seen[word] >> bit & 1 == 1 {
            return Err(Error::invalid(format!("row index {index} fed twice")));
        }
        self.seen[word] |= 1 << bit;
        if row.len() != self.data.ncols() {
            return Err(Error::dim(format!(
                "row {index} has length {}, expected {}",
                row.len(),
                self.data.ncols()
            )));
        }
        let draw = self.op.draw(index);
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                self.data[[draw.bucket, j]] += draw.scale * v;
            }
        }
        self.rows_processed += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<SketchMatrix> {
        if let Some(n) = self.n {
            if self.rows_processed != n {
                return Err(Error::invalid(format!(
                    "sketch pass saw {} rows, expected {n}",
                    self.rows_processed
                )));
            }
        }
        Ok(SketchMatrix {
            data: self.data,
            rows_processed: self.rows_processed,
        })
    }

    /// Finish against a row count learned only during the pass.
    pub fn finish_with_expected(self, n: usize) -> Result<SketchMatrix> {
        if self.rows_processed != n {
            return Err(Error::invalid(format!(
                "sketch pass saw {} rows, expected {n}",
                self.rows_processed
            )));
        }
        Ok(SketchMatrix {
            data: self.data,
            rows_processed: self.rows_processed,
        })
    }

    /// State footprint in bytes (bucket matrix + seen bitmap).
    pub fn state_bytes(&self) -> usize {
        self.data.len() * 8 + self.seen.len() * 8
    }
}

/// Enumerated contiguous rows of a dense matrix, in the form the streaming
/// entry points consume.
pub fn enumerated_rows<'a, S>(
    x: &'a ndarray::ArrayBase<S, ndarray::Ix2>,
) -> impl Iterator<Item = (usize, &'a [f64])>
where
    S: ndarray::Data<Elem = f64>,
{
    x.rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| (i, r.to_slice().expect("contiguous row")))
}

/// Dense realization of Π (n′×n) for oracle comparisons in tests.
pub fn dense_operator(op: &SketchOperator, n: usize) -> Array2<f64> {
    let mut pi = Array2::zeros((op.n_prime(), n));
    for i in 0..n {
        let draw = op.draw(i);
        pi[[draw.bucket, i]] = draw.scale;
    }
    pi
}

/// Johnson-Lindenstrauss compressor G (d×m, m = ⌈ln n⌉, entries N(0, 1/m));
/// used for p = 2 when ln n < d.
#[derive(Debug, Clone)]
pub struct JlCompressor {
    pub g: Array2<f64>,
    pub seed: u64,
}

pub fn make_jl_compressor(d: usize, n: usize, seed: u64) -> Result<JlCompressor> {
    if n < 2 {
        return Err(Error::invalid("JL compressor needs n >= 2"));
    }
    let m = (n as f64).ln().ceil().max(1.0) as usize;
    let std = (1.0 / m as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Array2::from_shape_fn((d, m), |_| {
        std * rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    Ok(JlCompressor { g, seed })
}

impl JlCompressor {
    pub fn m(&self) -> usize {
        self.g.ncols()
    }
}

/// Worst observed distortion max(‖ΠXβ‖_q/‖Xβ‖_p, ‖Xβ‖_p/‖ΠXβ‖_q) over
/// random unit directions; q = 2 for p ∈ [1,2] and q = ∞ for p > 2.
#[derive(Debug, Clone)]
pub struct DistortionStats {
    pub max_distortion: f64,
    pub trials: usize,
}

pub fn embedding_distortion_check(
    x: &ArrayView2<f64>,
    op: &SketchOperator,
    trials: usize,
    seed: u64,
) -> Result<DistortionStats> {
    let (n, d) = x.dim();
    let sketch = sketch_apply_stream(op, n, d, enumerated_rows(x))?;
    let p = op.shape().value();
    let use_inf = p > 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 1.0f64;
    for _ in 0..trials {
        let mut beta = Array1::zeros(d);
        let mut norm_sq = 0.0;
        while norm_sq == 0.0 {
            for j in 0..d {
                beta[j] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            norm_sq = beta.dot(&beta);
        }
        beta /= norm_sq.sqrt();
        let xb = x.dot(&beta);
        let full: f64 = xb.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
        let sb = sketch.data.dot(&beta);
        let sketched = if use_inf {
            sb.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        } else {
            sb.dot(&sb).sqrt()
        };
        if full > 0.0 && sketched > 0.0 {
            worst = worst.max(sketched / full).max(full / sketched);
        }
    }
    Ok(DistortionStats {
        max_distortion: worst,
        trials,
    })
}
