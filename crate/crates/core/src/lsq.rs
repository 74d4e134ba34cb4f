//! Damped (Levenberg–Marquardt) nonlinear least squares with a
//! central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative parameter step below which the fit is converged.
    pub xtol: f64,
    /// Relative cost decrease below which the fit is converged.
    pub ftol: f64,
    /// Infinity norm of the gradient below which the fit is converged.
    pub gtol: f64,
    pub initial_lambda: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, xtol: 1e-13, ftol: 1e-15, gtol: 1e-30, initial_lambda: 1e-3 }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    /// σ² (JᵀJ)⁻¹ with σ² = RSS / (m − n); `None` when singular or m ≤ n.
    pub covariance: Option<DMatrix<f64>>,
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn jacobian<F>(f: &F, p: &[f64], r0_len: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = p.len();
    let mut jac = DMatrix::zeros(r0_len, n);
    let mut q = p.to_vec();
    for j in 0..n {
        let h = 1e-6 * p[j].abs().max(1e-3);
        q[j] = p[j] + h;
        let rp = f(&q)?;
        q[j] = p[j] - h;
        let rm = f(&q)?;
        q[j] = p[j];
        for i in 0..r0_len {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn is_small_step(step: &DVector<f64>, p: &[f64], xtol: f64) -> bool {
    step.iter().zip(p).all(|(d, x)| d.abs() <= xtol * (x.abs() + xtol))
}

pub fn levenberg_marquardt<F>(residuals: F, p0: &[f64], opts: &LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p)?;
    let m = r.len();
    if m < n {
        return Err(Error::Fit { message: format!("{m} residuals for {n} parameters"), residual_history: vec![] });
    }
    let mut c = cost(&r);
    let mut history = vec![c];
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&residuals, &p, m)?;
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.amax() <= opts.gtol || c == 0.0 {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-300);
            }
            let Some(step) = a.clone().cholesky().map(|ch| ch.solve(&(-&grad))).or_else(|| a.lu().solve(&(-&grad))) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            let r_new = match residuals(&trial) {
                Ok(v) if v.iter().all(|x| x.is_finite()) => v,
                _ => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let c_new = cost(&r_new);
            if c_new < c {
                let small_step = is_small_step(&step, &p, opts.xtol);
                let small_gain = c - c_new <= opts.ftol * c;
                p = trial;
                r = r_new;
                c = c_new;
                history.push(c);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain;
                break;
            }
            if is_small_step(&step, &p, opts.xtol) {
                // no descent left at machine resolution
                converged = true;
                break;
            }
            lambda *= 4.0;
        }
        if converged || !accepted {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit {
            message: format!("no convergence after {} iterations", opts.max_iterations),
            residual_history: history,
        });
    }
    let jac = jacobian(&residuals, &p, m)?;
    let covariance = if m > n {
        let sigma2 = 2.0 * c / (m - n) as f64;
        (jac.transpose() * &jac).try_inverse().map(|inv| inv * sigma2)
    } else {
        None
    };
    Ok(LmOutcome { params: p, residuals: r, cost_history: history, iterations, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_exact_data() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let truth = [2.5, 1.3, 0.2];
        let y: Vec<f64> = t.iter().map(|x| truth[0] * (-truth[1] * x).exp() + truth[2]).collect();
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(t.iter().zip(&y).map(|(x, v)| p[0] * (-p[1] * x).exp() + p[2] - v).collect())
        };
        let out = levenberg_marquardt(f, &[1.0, 0.5, 0.0], &LmOptions::default()).unwrap();
        for (a, b) in out.params.iter().zip(truth) {
            assert!((a - b).abs() < 1e-9 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn underdetermined_is_an_error() {
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0] + p[1]]) };
        assert!(matches!(levenberg_marquardt(f, &[0.0, 0.0], &LmOptions::default()), Err(Error::Fit { .. })));
    }

    #[test]
    fn covariance_scales_with_noise() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().enumerate().map(|(i, x)| 3.0 * x + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(t.iter().zip(&y).map(|(x, v)| p[0] * x - v).collect()) };
        let out = levenberg_marquardt(f, &[1.0], &LmOptions::default()).unwrap();
        let cov = out.covariance.unwrap();
        assert!(cov[(0, 0)] > 0.0 && cov[(0, 0)] < 1e-5);
    }
}
