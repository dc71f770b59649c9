//! Coreset pipelines over row streams. The two-pass construction sketches
//! on the first pass, conditions the sketch, then scores and samples on the
//! second; the online p=2 construction does everything in a single pass.
//! Build reports carry pass counts, phase timings, and the peak working-state
//! footprint so the streaming contract can be checked from the outside.

use crate::conditioning::{build_transform, row_score};
use crate::error::{Error, Result};
use crate::gennorm::ShapeP;
use crate::online;
use crate::sampling::{SamplerBank, WeightedCoreset};
use crate::sketch::{
    make_jl_compressor, sketch_size, sketch_size_unbounded, SketchAccumulator, SketchOperator,
};
use crate::stream::RowSource;
use serde::Serialize;
use std::time::Instant;

/// Which reduction builds the coreset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionMethod {
    Pprobit,
    Uniform,
    L2,
    SqrtL2,
    OnlineL2,
}

impl ReductionMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pprobit" => Ok(ReductionMethod::Pprobit),
            "uniform" => Ok(ReductionMethod::Uniform),
            "l2" => Ok(ReductionMethod::L2),
            "sqrt-l2" => Ok(ReductionMethod::SqrtL2),
            "online-l2" => Ok(ReductionMethod::OnlineL2),
            other => Err(Error::invalid(format!(
                "unknown method {other:?}; expected pprobit|uniform|l2|sqrt-l2|online-l2"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReductionMethod::Pprobit => "pprobit",
            ReductionMethod::Uniform => "uniform",
            ReductionMethod::L2 => "l2",
            ReductionMethod::SqrtL2 => "sqrt-l2",
            ReductionMethod::OnlineL2 => "online-l2",
        }
    }
}

/// Options for the two-pass build.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub seed: u64,
    /// Round scores up to powers of two clipped at S₀/n (costs one extra
    /// pass on file streams because the clip needs the full score sum).
    pub rounding: bool,
    /// Use the JL compressor when p = 2 and ln n < d.
    pub allow_jl: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            seed: 0,
            rounding: false,
            allow_jl: true,
        }
    }
}

/// Provenance and accounting for one coreset build.
#[derive(Debug, Clone, Serialize)]
pub struct BuildReport {
    pub method: String,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub seed: u64,
    pub p: f64,
    pub n_prime: Option<usize>,
    pub jl_applied: bool,
    pub rounding: bool,
    pub passes: usize,
    pub sum_scores: f64,
    pub score_min: f64,
    pub score_max: f64,
    /// Peak bytes held by sketch + transform + samplers + score buffers.
    pub state_bytes: usize,
    pub t_sketch_ms: f64,
    pub t_sample_ms: f64,
}

fn score_stats(scores: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    for s in scores {
        min = min.min(s);
        max = max.max(s);
    }
    (min, max)
}

/// Two-pass sensitivity-sampling coreset (the main construction).
pub fn two_pass_coreset(
    source: &mut dyn RowSource,
    p: &ShapeP,
    k: usize,
    options: &PipelineOptions,
) -> Result<(WeightedCoreset, BuildReport)> {
    if k == 0 {
        return Err(Error::invalid("coreset size k must be at least 1"));
    }
    let t0 = Instant::now();
    let mut peak_state = 0usize;

    // Sizing. With known n the exact rule applies; otherwise p ∈ [1,2] is
    // sized by d alone and p > 2 needs a metadata pass through the caller.
    let known_n = source.known_rows();
    let mut accumulator: Option<SketchAccumulator> = None;
    let mut count = 0usize;
    source.pass(&mut |index, row| {
        if accumulator.is_none() {
            let d = row.len();
            let n_prime = match known_n {
                Some(n) => sketch_size(n, d, p),
                None => sketch_size_unbounded(d, p)?,
            };
            let op = SketchOperator::with_buckets(n_prime, p, options.seed);
            accumulator = Some(match known_n {
                Some(n) => SketchAccumulator::new(op, n, d),
                None => SketchAccumulator::new_unbounded(op, d),
            });
        }
        count += 1;
        accumulator.as_mut().unwrap().feed(index, row)
    })?;
    let n = count;
    let accumulator = accumulator.ok_or_else(|| Error::invalid("empty input stream"))?;
    peak_state = peak_state.max(accumulator.state_bytes());
    let sketch = accumulator.finish_with_expected(n)?;
    let d = sketch.data.ncols();
    let n_prime = sketch.data.nrows();

    let jl = if options.allow_jl && p.value() == 2.0 && (n as f64).ln() < d as f64 && n >= 2 {
        Some(make_jl_compressor(
            d,
            n,
            crate::rng::mix2(options.seed, 0x4A4C),
        )?)
    } else {
        None
    };
    let transform = build_transform(&sketch, p, jl.as_ref())?;
    drop(sketch);
    let t_sketch = t0.elapsed().as_secs_f64() * 1e3;

    // Second pass: score rows and feed the samplers. With rounding the clip
    // value S₀/n needs the full score sum first, so scores are buffered and
    // rows are re-streamed in one extra pass.
    let t1 = Instant::now();
    let inv_n = 1.0 / n as f64;
    let mut bank = SamplerBank::new(k, options.seed)?;
    let (score_min, score_max);
    if options.rounding {
        let mut q = Vec::with_capacity(n);
        source.pass(&mut |_, row| {
            q.push(row_score(&ndarray::ArrayView1::from(row), &transform));
            Ok(())
        })?;
        let scores = crate::conditioning::finalize_scores(&q, true)?;
        peak_state = peak_state.max(
            transform.state_bytes() + bank.state_bytes() + scores.s.len() * 8 + q.len() * 8,
        );
        source.pass(&mut |index, row| bank.feed(index, row, scores.s[index]))?;
        let (lo, hi) = score_stats(scores.s.iter().cloned());
        score_min = lo;
        score_max = hi;
    } else {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        source.pass(&mut |index, row| {
            let s = row_score(&ndarray::ArrayView1::from(row), &transform) + inv_n;
            lo = lo.min(s);
            hi = hi.max(s);
            bank.feed(index, row, s)
        })?;
        score_min = lo;
        score_max = hi;
        peak_state = peak_state.max(transform.state_bytes() + bank.state_bytes());
    }
    let sum_scores = bank.sum_scores();
    let coreset = bank.into_coreset("pprobit")?;
    let t_sample = t1.elapsed().as_secs_f64() * 1e3;

    let report = BuildReport {
        method: "pprobit".into(),
        n,
        dim: d,
        k,
        seed: options.seed,
        p: p.value(),
        n_prime: Some(n_prime),
        jl_applied: transform.jl_applied(),
        rounding: options.rounding,
        passes: source.passes_made(),
        sum_scores,
        score_min,
        score_max,
        state_bytes: peak_state,
        t_sketch_ms: t_sketch,
        t_sample_ms: t_sample,
    };
    Ok((coreset, report))
}

/// Uniform-sampling baseline over a stream (single pass).
pub fn uniform_coreset_stream(
    source: &mut dyn RowSource,
    p: &ShapeP,
    k: usize,
    options: &PipelineOptions,
) -> Result<(WeightedCoreset, BuildReport)> {
    let t0 = Instant::now();
    let mut bank = SamplerBank::new(k, options.seed)?;
    let mut dim = 0usize;
    source.pass(&mut |index, row| {
        dim = row.len();
        bank.feed(index, row, 1.0)
    })?;
    let n = bank.rows_seen();
    let state = bank.state_bytes();
    let mut coreset = bank.into_coreset("uniform")?;
    for w in coreset.weights.iter_mut() {
        *w = n as f64 / k as f64;
    }
    Ok((
        coreset,
        BuildReport {
            method: "uniform".into(),
            n,
            dim,
            k,
            seed: options.seed,
            p: p.value(),
            n_prime: None,
            jl_applied: false,
            rounding: false,
            passes: source.passes_made(),
            sum_scores: 1.0,
            score_min: 1.0 / n as f64,
            score_max: 1.0 / n as f64,
            state_bytes: state,
            t_sketch_ms: 0.0,
            t_sample_ms: t0.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

/// Online p=2 coreset over a stream (single pass, Sherman-Morrison scores).
pub fn online_coreset_stream(
    source: &mut dyn RowSource,
    p: &ShapeP,
    k: usize,
    options: &PipelineOptions,
) -> Result<(WeightedCoreset, BuildReport)> {
    if p.value() != 2.0 {
        return Err(Error::invalid(
            "the online coreset is defined for p = 2 only",
        ));
    }
    let t0 = Instant::now();
    let n_hint = source.known_rows();
    let inv_n = n_hint.map(|n| 1.0 / n as f64);
    let mut state: Option<online::OnlineLeverageState> = None;
    let mut bank = SamplerBank::new(k, options.seed)?;
    let mut sum_leverage = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    source.pass(&mut |index, row| {
        if state.is_none() {
            state = Some(online::OnlineLeverageState::new(row.len()));
        }
        let ell = state.as_mut().unwrap().update(row)?;
        sum_leverage += ell;
        let score = ell + inv_n.unwrap_or(0.0);
        if score > 0.0 {
            lo = lo.min(score);
            hi = hi.max(score);
            bank.feed(index, row, score)?;
        }
        Ok(())
    })?;
    let state = state.ok_or_else(|| Error::invalid("empty input stream"))?;
    let n = state.rows_seen();
    let peak_state = state.state_bytes() + bank.state_bytes();
    let sum_scores = bank.sum_scores();
    let tag = if inv_n.is_some() {
        "online-l2"
    } else {
        "online-l2-no-uniform"
    };
    let coreset = bank.into_coreset(tag)?;
    Ok((
        coreset,
        BuildReport {
            method: tag.into(),
            n,
            dim: state.dim(),
            k,
            seed: options.seed,
            p: p.value(),
            n_prime: None,
            jl_applied: false,
            rounding: false,
            passes: source.passes_made(),
            sum_scores,
            score_min: lo,
            score_max: hi,
            state_bytes: peak_state,
            t_sketch_ms: 0.0,
            t_sample_ms: t0.elapsed().as_secs_f64() * 1e3,
        },
    ))
}

/// Budget the two-pass working state is held to: c·(n′d + kd + n) doubles.
pub fn state_budget_bytes(n: usize, n_prime: usize, k: usize, d: usize) -> usize {
    4 * 8 * (n_prime * d + k * d + n)
}
