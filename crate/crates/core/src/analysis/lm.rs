//! Small dense Levenberg-Marquardt solver with a forward-difference Jacobian.
//! Sized for the handful-of-parameter fits in this crate; parameter
//! uncertainties come from the Jacobian-based covariance at the optimum.

use nalgebra::{DMatrix, DVector};

use crate::error::{KerrError, Result};

/// Result of a nonlinear least-squares fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One-sigma parameter uncertainties from the covariance diagonal.
    pub sigmas: Vec<f64>,
    pub names: Vec<&'static str>,
    /// RMS of the weighted residuals at the optimum.
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.params[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.sigmas[i])
    }
}

const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-10;

/// Minimizes sum_i w_i (y_i - model(p, x_i))^2 over `p`.
///
/// `weights` default to 1. `scales` gives the characteristic magnitude of
/// each parameter; the finite-difference step is 1e-6 of it. This matters
/// when a parameter's absolute value dwarfs its meaningful variation, e.g. a
/// GHz-scale line center constrained to within kHz. The model may return an
/// `Err` for parameter values it cannot evaluate; such trial steps are
/// rejected.
pub fn levenberg_marquardt(
    model: &dyn Fn(&[f64], f64) -> Result<f64>,
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    p0: &[f64],
    scales: &[f64],
    names: &[&'static str],
) -> Result<FitResult> {
    let n = xs.len();
    let m = p0.len();
    if n != ys.len() || m != names.len() || m != scales.len() || m == 0 {
        return Err(KerrError::DegenerateData(
            "mismatched fit input lengths".into(),
        ));
    }
    if n <= m {
        return Err(KerrError::InsufficientSpan(format!(
            "{n} data points cannot constrain {m} parameters"
        )));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(KerrError::DegenerateData("weights length mismatch".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

    let residuals = |p: &[f64]| -> Result<DVector<f64>> {
        let mut r = DVector::zeros(n);
        for i in 0..n {
            r[i] = sqrt_w[i] * (ys[i] - model(p, xs[i])?);
        }
        Ok(r)
    };
    if scales.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
        return Err(KerrError::DegenerateData(
            "parameter scales must be finite and positive".into(),
        ));
    }
    let jacobian = |p: &[f64], r0: &DVector<f64>| -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(n, m);
        let mut pt = p.to_vec();
        for k in 0..m {
            let h = 1e-6 * scales[k];
            pt[k] = p[k] + h;
            let r1 = residuals(&pt)?;
            pt[k] = p[k];
            for i in 0..n {
                // d residual / d p = -(d model / d p) * sqrt(w).
                j[(i, k)] = (r1[i] - r0[i]) / h;
            }
        }
        Ok(j)
    };

    let mut p = p0.to_vec();
    let mut r = residuals(&p)?;
    let mut cost = r.norm_squared();
    let cost0 = cost;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITERATIONS {
        iterations = it + 1;
        let j = jacobian(&p, &r)?;
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for k in 0..m {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-30);
            }
            let step = match a.clone().lu().solve(&(-&jtr)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = (0..m).map(|k| p[k] + step[k]).collect();
            match residuals(&trial) {
                Ok(rt) => {
                    let ct = rt.norm_squared();
                    if ct < cost {
                        let rel = (cost - ct) / cost.max(1e-300);
                        let max_step = (0..m)
                            .map(|k| (step[k] / scales[k]).abs())
                            .fold(0.0_f64, f64::max);
                        p = trial;
                        r = rt;
                        cost = ct;
                        lambda = (lambda * 0.1).max(1e-14);
                        improved = true;
                        if rel < REL_TOL || cost <= 1e-24 * cost0 || max_step < 1e-9 {
                            converged = true;
                        }
                        break;
                    }
                    lambda *= 10.0;
                }
                Err(_) => lambda *= 10.0,
            }
            if lambda > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !improved {
            // No damping level yields a lower cost: the iterate is a (local)
            // minimum to working precision.
            converged = true;
            break;
        }
    }

    // Covariance at the optimum: (J^T J)^-1 scaled by the residual variance.
    let j = jacobian(&p, &r)?;
    let jtj = j.transpose() * &j;
    let dof = (n - m) as f64;
    let s2 = cost / dof;
    let sigmas = match jtj.try_inverse() {
        Some(cov) => (0..m).map(|k| (cov[(k, k)].max(0.0) * s2).sqrt()).collect(),
        None => vec![f64::NAN; m],
    };
    if !converged {
        return Err(KerrError::NotConverged {
            iterations,
            residual: (cost / n as f64).sqrt(),
        });
    }
    Ok(FitResult {
        params: p,
        sigmas,
        names: names.to_vec(),
        residual_rms: (cost / n as f64).sqrt(),
        converged,
        iterations,
    })
}
