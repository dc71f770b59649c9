//! The standardized p-generalized normal distribution and the pointwise
//! probit loss `g` derived from it.
//!
//! Density `φ_p(r) = p^{1−1/p}/(2Γ(1/p)) · exp(−|r|^p/p)`; p=1 is the
//! Laplace distribution, p=2 the standard normal. The cdf reduces to the
//! regularized lower incomplete gamma via the substitution u = t^p/p:
//!
//! `Φ_p(x) = 1/2 + sgn(x) · P(1/p, |x|^p/p) / 2`
//!
//! The loss of a single point is `g(r) = −ln Φ_p(−r) = −ln(1 − Φ_p(r))`,
//! which is convex and strictly increasing; its derivative is the hazard
//! `g'(r) = φ_p(r)/(1 − Φ_p(r))`. Survival probabilities are carried in log
//! space so `g` stays accurate far in the upper tail where `1 − Φ_p(r)`
//! underflows (around r ≈ 40 for p = 2).

use crate::error::{Error, Result};
use crate::special::{ln_gamma, ln_reg_gamma_upper, reg_gamma_pair};

const LN_2: f64 = std::f64::consts::LN_2;

/// Shape parameter of the p-generalized normal, restricted to p ≥ 1 so the
/// induced loss stays convex. Construction precomputes the constants shared
/// by every evaluation; p = 2 additionally short-circuits `|r|^p` to `r²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeP {
    p: f64,
    inv_p: f64,
    /// ln of the density normalizer p^{1−1/p}/(2Γ(1/p)).
    ln_norm: f64,
    is_two: bool,
}

impl ShapeP {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p < 1.0 {
            return Err(Error::domain(format!(
                "shape parameter must be finite and >= 1, got {p}"
            )));
        }
        let inv_p = 1.0 / p;
        let ln_norm = (1.0 - inv_p) * p.ln() - LN_2 - ln_gamma(inv_p);
        Ok(ShapeP {
            p,
            inv_p,
            ln_norm,
            is_two: p == 2.0,
        })
    }

    pub fn value(&self) -> f64 {
        self.p
    }

    /// |x|^p / p, the exponent argument of the density.
    #[inline]
    fn power_term(&self, x: f64) -> f64 {
        if self.is_two {
            0.5 * x * x
        } else {
            x.abs().powf(self.p) * self.inv_p
        }
    }

    /// Switch point above which survival probabilities move to log space.
    #[inline]
    fn tail_threshold(&self) -> f64 {
        2.0 * 8f64.powf(self.inv_p)
    }

    /// Normalizing constant C_p = ∫ exp(−|t|^p/p) dt = 2Γ(1/p)/p^{1−1/p}.
    pub fn normalizer(&self) -> f64 {
        (-self.ln_norm).exp()
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("argument must be finite, got {x}")))
    }
}

/// ln φ_p(x).
pub fn ln_pdf(x: f64, p: &ShapeP) -> Result<f64> {
    check_finite(x)?;
    Ok(p.ln_norm - p.power_term(x))
}

/// Density φ_p(x); even in x and maximized at 0.
pub fn pdf(x: f64, p: &ShapeP) -> Result<f64> {
    Ok(ln_pdf(x, p)?.exp())
}

/// Cumulative distribution Φ_p(x).
pub fn cdf(x: f64, p: &ShapeP) -> Result<f64> {
    check_finite(x)?;
    if x == 0.0 {
        return Ok(0.5);
    }
    let (lower, _) = reg_gamma_pair(p.inv_p, p.power_term(x))?;
    Ok(if x > 0.0 {
        0.5 + 0.5 * lower
    } else {
        0.5 - 0.5 * lower
    })
}

/// ln(1 − Φ_p(x)), finite for every finite x.
pub fn log_sf(x: f64, p: &ShapeP) -> Result<f64> {
    check_finite(x)?;
    let t = p.power_term(x);
    if x <= 0.0 {
        // 1 − Φ_p(x) = 1 − Q(1/p, t)/2 ∈ [1/2, 1): ln1p keeps it exact.
        let (_, upper) = reg_gamma_pair(p.inv_p, t)?;
        Ok((-0.5 * upper).ln_1p())
    } else if x < p.tail_threshold() {
        // 1 − Φ_p(x) = Q(1/p, t)/2, computed directly by the continued
        // fraction or series — no cancellation against 1.
        let (_, upper) = reg_gamma_pair(p.inv_p, t)?;
        Ok(upper.ln() - LN_2)
    } else {
        // Deep tail: ln Q underflow-free.
        Ok(ln_reg_gamma_upper(p.inv_p, t)? - LN_2)
    }
}

/// Pointwise loss g(r) = −ln Φ_p(−r); g(0) = ln 2, strictly increasing and
/// convex, grows like r^p/p for large positive r.
pub fn g(r: f64, p: &ShapeP) -> Result<f64> {
    Ok(-log_sf(r, p)?)
}

/// g'(r) = φ_p(r)/(1 − Φ_p(r)) > 0, evaluated as exp(ln φ − ln sf) so the
/// ratio survives both tails.
pub fn g_prime(r: f64, p: &ShapeP) -> Result<f64> {
    Ok((ln_pdf(r, p)? - log_sf(r, p)?).exp())
}

/// g''(r) = g'(r) · (g'(r) − sgn(r)|r|^{p−1}) ≥ 0.
///
/// At r = 0 the sign term is taken as 0 (for p = 1 the one-sided limits of
/// sgn(r)|r|^{p−1} differ; the midpoint preserves the even symmetry of g'').
pub fn g_second(r: f64, p: &ShapeP) -> Result<f64> {
    let gp = g_prime(r, p)?;
    let signed_power = if r == 0.0 {
        0.0
    } else {
        r.signum() * r.abs().powf(p.value() - 1.0)
    };
    Ok(gp * (gp - signed_power))
}

/// One-shot evaluation of (g, g', g'') sharing the survival computation;
/// used by the objective where all three are needed per row.
pub fn g_all(r: f64, p: &ShapeP) -> Result<(f64, f64, f64)> {
    let lsf = log_sf(r, p)?;
    let gp = (ln_pdf(r, p)? - lsf).exp();
    let signed_power = if r == 0.0 {
        0.0
    } else {
        r.signum() * r.abs().powf(p.value() - 1.0)
    };
    Ok((-lsf, gp, gp * (gp - signed_power)))
}

/// Bundled distribution values at a point, mainly for reporting.
#[derive(Debug, Clone, Copy)]
pub struct GennormEval {
    pub pdf_value: f64,
    pub cdf_value: f64,
    pub log_sf: f64,
}

pub fn evaluate(x: f64, p: &ShapeP) -> Result<GennormEval> {
    Ok(GennormEval {
        pdf_value: pdf(x, p)?,
        cdf_value: cdf(x, p)?,
        log_sf: log_sf(x, p)?,
    })
}
