//! Minimizes the convex loss f_w(Xβ) by damped Newton-Raphson with a
//! gradient-descent fallback. The Newton system is solved by Cholesky with
//! Levenberg-style damping (H + λI); λ starts at zero and grows tenfold on a
//! failed factorization or a non-descent step, with an eigendecomposition
//! solve as the rank-revealing fallback. Backtracking line search enforces a
//! monotone objective.

use crate::error::{Error, Result};
use crate::gennorm::ShapeP;
use crate::linalg::{cholesky, cholesky_solve, pseudo_inverse_psd};
use crate::objective::{self, FoldedDesignMatrix, Weights};
use crate::sampling::WeightedCoreset;
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Newton,
    GradientDescent,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Convergence threshold on the sup-norm of the gradient.
    pub grad_tol: f64,
    pub damping_init: f64,
    /// Line search: step shrink factor in (0,1).
    pub backtrack_shrink: f64,
    /// Line search: sufficient-decrease constant in (0,1).
    pub backtrack_c: f64,
    pub method: Method,
}

impl SolverConfig {
    /// Defaults scaled to the instance: grad_tol = 1e−8·max(1, n),
    /// 100 Newton iterations or 5000 for gradient descent.
    pub fn for_problem(n: usize, method: Method) -> Self {
        SolverConfig {
            max_iter: match method {
                Method::Newton => 100,
                Method::GradientDescent => 5000,
            },
            grad_tol: 1e-8 * (n as f64).max(1.0),
            damping_init: 0.0,
            backtrack_shrink: 0.5,
            backtrack_c: 1e-4,
            method,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::invalid("max_iter must be at least 1"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid("grad_tol must be positive"));
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(Error::invalid("backtrack shrink must lie in (0,1)"));
        }
        if !(self.backtrack_c > 0.0 && self.backtrack_c < 1.0) {
            return Err(Error::invalid("backtrack constant must lie in (0,1)"));
        }
        if !(self.damping_init >= 0.0) {
            return Err(Error::invalid("damping must be nonnegative"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::for_problem(1, Method::Newton)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_hat: Vec<f64>,
    pub final_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    /// Set when ‖β‖ escapes past 1e6 while the gradient norm stalls — the
    /// signature of separable data, where no finite minimizer exists.
    pub mle_may_not_exist: bool,
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Solve (H + λI) dir = −grad, escalating λ until the factorization succeeds
/// and the direction is a descent direction. Returns (direction, λ used).
fn newton_direction(
    hess: &Array2<f64>,
    grad: &Array1<f64>,
    lambda_init: f64,
) -> Option<(Array1<f64>, f64)> {
    let d = hess.nrows();
    let mean_diag = (0..d).map(|i| hess[[i, i]].abs()).sum::<f64>() / d as f64;
    let lambda_floor = 1e-10 * (1.0 + mean_diag);
    let mut lambda = lambda_init;
    for _ in 0..60 {
        let mut damped = hess.clone();
        for i in 0..d {
            damped[[i, i]] += lambda;
        }
        let solved = cholesky(&damped.view())
            .map(|l| -cholesky_solve(&l.view(), &grad.view()))
            .or_else(|| {
                // Rank-revealing fallback for a factorization that failed
                // even with damping.
                pseudo_inverse_psd(&damped.view(), 1e-12)
                    .ok()
                    .map(|(pinv, _)| -pinv.dot(grad))
            });
        if let Some(dir) = solved {
            if dir.iter().all(|v| v.is_finite()) && dir.dot(grad) < 0.0 {
                return Some((dir, lambda));
            }
        }
        lambda = if lambda == 0.0 {
            lambda_floor
        } else {
            lambda * 10.0
        };
    }
    None
}

/// Backtracking line search from t = 1. Returns the accepted (t, new_loss)
/// or None when no sufficient decrease is found at any representable step.
fn line_search(
    x: &FoldedDesignMatrix,
    w: Weights,
    p: &ShapeP,
    beta: &Array1<f64>,
    dir: &Array1<f64>,
    current_loss: f64,
    slope: f64,
    shrink: f64,
    c: f64,
) -> Result<Option<(f64, f64, Array1<f64>)>> {
    let mut t = 1.0;
    for _ in 0..80 {
        let candidate = beta + &(dir * t);
        let new_loss = objective::loss(x, w, &candidate.view(), p)?;
        if new_loss.is_finite() && new_loss <= current_loss + c * t * slope {
            return Ok(Some((t, new_loss, candidate)));
        }
        t *= shrink;
    }
    Ok(None)
}

/// Fit β̂ minimizing f_w(Xβ) starting from `beta0` (zero when None).
pub fn fit(
    x: &FoldedDesignMatrix,
    w: Weights,
    p: &ShapeP,
    config: &SolverConfig,
    beta0: Option<&ArrayView1<f64>>,
) -> Result<FitResult> {
    config.validate()?;
    let d = x.dim();
    let mut beta: Array1<f64> = match beta0 {
        Some(b) => {
            if b.len() != d {
                return Err(Error::dim(format!(
                    "beta0 has length {}, expected {d}",
                    b.len()
                )));
            }
            b.to_owned()
        }
        None => Array1::zeros(d),
    };

    let mut mle_may_not_exist = false;
    let mut current_loss = f64::INFINITY;
    let mut gd_step = 1.0;
    // Separability certificate: a non-separable instance has, for every β,
    // at least one row with x_iβ ≥ 0, so f_w ≥ min(w)·ln 2. Any iterate
    // below that floor proves a separating direction exists and the MLE is
    // an infimum at infinity — the gradient test alone would "converge" on
    // that runaway ray as the gradient decays to zero.
    let min_weight = match w {
        Weights::Uniform => 1.0,
        Weights::Custom(values) => values.iter().cloned().fold(f64::INFINITY, f64::min),
    };
    let loss_floor = min_weight * std::f64::consts::LN_2 * (1.0 - 1e-9);
    let converged_at =
        |grad_norm: f64, loss: f64| grad_norm <= config.grad_tol && loss >= loss_floor;

    for iter in 0..config.max_iter {
        let (loss_value, grad, hess) = match config.method {
            Method::Newton => {
                let (l, g, h) = objective::loss_gradient_hessian(x, w, &beta.view(), p)?;
                (l, g, Some(h))
            }
            Method::GradientDescent => {
                let (l, g) = objective::loss_gradient(x, w, &beta.view(), p)?;
                (l, g, None)
            }
        };
        current_loss = loss_value;
        let grad_norm = inf_norm(&grad);

        if converged_at(grad_norm, current_loss) {
            return Ok(FitResult {
                beta_hat: beta.to_vec(),
                final_loss: current_loss,
                iterations: iter,
                converged: true,
                gradient_norm: grad_norm,
                mle_may_not_exist,
            });
        }

        if current_loss < loss_floor {
            mle_may_not_exist = true;
        }
        // Escape heuristic kept alongside the certificate: coefficients past
        // 1e6 without the gradient reaching its target.
        let beta_norm = beta.dot(&beta).sqrt();
        if beta_norm > 1e6 && grad_norm > config.grad_tol {
            mle_may_not_exist = true;
        }

        let step = match config.method {
            Method::Newton => {
                let hess = hess.unwrap();
                match newton_direction(&hess, &grad, config.damping_init) {
                    Some((dir, _lambda)) => {
                        let slope = dir.dot(&grad);
                        line_search(
                            x,
                            w,
                            p,
                            &beta,
                            &dir,
                            current_loss,
                            slope,
                            config.backtrack_shrink,
                            config.backtrack_c,
                        )?
                    }
                    None => None,
                }
            }
            Method::GradientDescent => None,
        };

        let step = match step {
            Some(s) => Some(s),
            None => {
                // Gradient direction, with a step length carried across
                // iterations so descent resumes quickly.
                let dir = -&grad;
                let slope = dir.dot(&grad);
                let scaled = &dir * gd_step;
                let found = line_search(
                    x,
                    w,
                    p,
                    &beta,
                    &scaled,
                    current_loss,
                    slope * gd_step,
                    config.backtrack_shrink,
                    config.backtrack_c,
                )?;
                found.map(|(t, l, b)| {
                    gd_step = (gd_step * t * 2.0).min(1e30);
                    (t, l, b)
                })
            }
        };

        match step {
            Some((_t, new_loss, new_beta)) => {
                debug_assert!(new_loss <= current_loss + 1e-12 * current_loss.abs().max(1.0));
                beta = new_beta;
                current_loss = new_loss;
            }
            None => {
                // No descent direction at any step length.
                return Ok(FitResult {
                    beta_hat: beta.to_vec(),
                    final_loss: current_loss,
                    iterations: iter,
                    converged: false,
                    gradient_norm: grad_norm,
                    mle_may_not_exist,
                });
            }
        }
    }

    let grad = objective::gradient(x, w, &beta.view(), p)?;
    let grad_norm = inf_norm(&grad);
    Ok(FitResult {
        beta_hat: beta.to_vec(),
        final_loss: current_loss,
        iterations: config.max_iter,
        converged: converged_at(grad_norm, current_loss),
        gradient_norm: grad_norm,
        mle_may_not_exist,
    })
}

/// Fit on a weighted coreset: same contract as `fit` applied to (X', w).
pub fn fit_on_coreset(
    coreset: &WeightedCoreset,
    p: &ShapeP,
    config: &SolverConfig,
    beta0: Option<&ArrayView1<f64>>,
) -> Result<FitResult> {
    let x = FoldedDesignMatrix::new(coreset.rows.clone())?;
    fit(&x, Weights::Custom(&coreset.weights), p, config, beta0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn shape(p: f64) -> ShapeP {
        ShapeP::new(p).unwrap()
    }

    #[test]
    fn symmetric_two_point_instance_has_zero_minimizer() {
        let x = FoldedDesignMatrix::new(array![[1.0], [-1.0]]).unwrap();
        for &pv in &[1.0, 2.0, 3.0] {
            let config = SolverConfig::for_problem(2, Method::Newton);
            let fit = fit(&x, Weights::Uniform, &shape(pv), &config, None).unwrap();
            assert!(fit.converged);
            assert!(fit.beta_hat[0].abs() < 1e-8);
            assert!((fit.final_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-10);
        }
    }

    #[test]
    fn separable_single_row_does_not_converge() {
        // Loss is monotone decreasing in β: infimum at infinity.
        let x = FoldedDesignMatrix::new(array![[-1.0]]).unwrap();
        let config = SolverConfig::for_problem(1, Method::Newton);
        let result = fit(&x, Weights::Uniform, &shape(2.0), &config, None).unwrap();
        assert!(!result.converged);
        assert_eq!(result.iterations, config.max_iter);
        assert!(result.beta_hat[0] > 0.0);
    }

    #[test]
    fn separable_instance_sets_escape_flag_with_enough_iterations() {
        let x = FoldedDesignMatrix::new(array![[-1.0], [-0.5]]).unwrap();
        let mut config = SolverConfig::for_problem(2, Method::GradientDescent);
        config.max_iter = 20_000;
        let result = fit(&x, Weights::Uniform, &shape(1.0), &config, None).unwrap();
        assert!(!result.converged);
        assert!(result.mle_may_not_exist, "beta={:?}", result.beta_hat);
    }

    fn random_solvable(n: usize, d: usize, seed: u64) -> FoldedDesignMatrix {
        // Pulling rows from both half-spaces makes the MLE exist.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5));
        FoldedDesignMatrix::new(rows).unwrap()
    }

    #[test]
    fn newton_and_gradient_descent_agree() {
        let x = random_solvable(200, 5, 9);
        let p = shape(2.0);
        let newton = fit(
            &x,
            Weights::Uniform,
            &p,
            &SolverConfig::for_problem(200, Method::Newton),
            None,
        )
        .unwrap();
        let gd = fit(
            &x,
            Weights::Uniform,
            &p,
            &SolverConfig::for_problem(200, Method::GradientDescent),
            None,
        )
        .unwrap();
        assert!(newton.converged, "newton: {newton:?}");
        assert!(gd.converged, "gd: {gd:?}");
        assert!(newton.final_loss <= gd.final_loss + 1e-8);
        assert!((newton.final_loss - gd.final_loss).abs() < 1e-5);
    }

    #[test]
    fn fit_is_deterministic() {
        let x = random_solvable(80, 4, 10);
        let p = shape(1.5);
        let config = SolverConfig::for_problem(80, Method::Newton);
        let a = fit(&x, Weights::Uniform, &p, &config, None).unwrap();
        let b = fit(&x, Weights::Uniform, &p, &config, None).unwrap();
        assert_eq!(a.beta_hat, b.beta_hat);
        assert_eq!(a.final_loss, b.final_loss);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn weight_scaling_leaves_minimizer_unchanged() {
        let x = random_solvable(60, 3, 11);
        let p = shape(2.0);
        let config = SolverConfig::for_problem(60, Method::Newton);
        let base = fit(&x, Weights::Uniform, &p, &config, None).unwrap();
        let w: Vec<f64> = vec![2.0; 60];
        let scaled = fit(&x, Weights::Custom(&w), &p, &config, None).unwrap();
        assert!(scaled.converged);
        for j in 0..3 {
            assert!((base.beta_hat[j] - scaled.beta_hat[j]).abs() < 1e-6);
        }
        assert!((scaled.final_loss - 2.0 * base.final_loss).abs() < 1e-6 * base.final_loss);
    }

    #[test]
    fn coreset_of_full_data_with_unit_weights_reproduces_fit() {
        let x = random_solvable(50, 3, 12);
        let p = shape(2.0);
        let config = SolverConfig::for_problem(50, Method::Newton);
        let direct = fit(&x, Weights::Uniform, &p, &config, None).unwrap();
        let coreset = WeightedCoreset {
            rows: x.rows().to_owned(),
            weights: vec![1.0; 50],
            source_indices: (0..50).collect(),
            method_tag: "identity".into(),
        };
        let via_coreset = fit_on_coreset(&coreset, &p, &config, None).unwrap();
        assert_eq!(direct.beta_hat, via_coreset.beta_hat);
        assert_eq!(direct.final_loss, via_coreset.final_loss);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let x = random_solvable(10, 2, 13);
        let mut config = SolverConfig::for_problem(10, Method::Newton);
        config.max_iter = 0;
        assert!(fit(&x, Weights::Uniform, &shape(2.0), &config, None).is_err());
        let mut config = SolverConfig::for_problem(10, Method::Newton);
        config.grad_tol = 0.0;
        assert!(fit(&x, Weights::Uniform, &shape(2.0), &config, None).is_err());
    }
}
