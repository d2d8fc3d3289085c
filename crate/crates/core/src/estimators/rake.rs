//! Exponential-tilting calibration of inverse-probability weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const TOL: f64 = 1e-8;
const MAX_ITER: usize = 200;
const MIN_GRADIENT: f64 = 1e-14;

/// Calibrated weights `a_i / Π_i` with `a_i = exp(-λ m_i)` on phase-2 rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RakeSolution {
    pub lambda: f64,
    /// Scale factors of the phase-2 rows, in record order.
    pub a: Vec<f64>,
    /// Calibrated sampling probabilities `Π / a` (unchanged on phase-1-only rows).
    pub pi_star: Vec<f64>,
    /// `Σ_{Δ=1} (a_i/Π_i) m_i − Σ_all m_i` at the solution.
    pub constraint_residual: f64,
}

/// Calibration residual `F(λ) = Σ_{Δ=1} exp(−λ m_i) m_i / Π_i − Σ_all m_i` and its derivative.
fn residual(lambda: f64, m2: &[f64], pi2: &[f64], target: f64) -> (f64, f64) {
    let mut f = -target;
    let mut df = 0.0;
    for (&m, &p) in m2.iter().zip(pi2) {
        let e = (-lambda * m).exp() / p;
        f += e * m;
        df -= e * m * m;
    }
    (f, df)
}

/// Solves the calibration equation for λ by damped Newton–Raphson from λ = 0.
pub fn rake_weights(mbar: &[f64], pi: &[f64], delta: &[bool]) -> Result<RakeSolution> {
    let n = mbar.len();
    if pi.len() != n || delta.len() != n {
        return Err(Error::InvalidInput("raking inputs differ in length".into()));
    }
    if pi.iter().zip(delta).any(|(&p, &d)| d && !(p > 0.0)) {
        return Err(Error::InvalidInput("phase-2 sampling probabilities must be positive".into()));
    }
    if mbar.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidInput("non-finite calibration variable".into()));
    }
    let target: f64 = mbar.iter().sum();
    let (m2, pi2): (Vec<f64>, Vec<f64>) = (0..n).filter(|&i| delta[i]).map(|i| (mbar[i], pi[i])).unzip();

    let solved = |lambda: f64, f: f64| {
        let a: Vec<f64> = m2.iter().map(|m| (-lambda * m).exp()).collect();
        let mut pi_star = pi.to_vec();
        let mut j = 0;
        for i in 0..n {
            if delta[i] {
                pi_star[i] = pi[i] / a[j];
                j += 1;
            }
        }
        RakeSolution {
            lambda,
            a,
            pi_star,
            constraint_residual: f,
        }
    };

    let (f0, _) = residual(0.0, &m2, &pi2, target);
    if f0.abs() < TOL {
        return Ok(solved(0.0, f0));
    }
    if m2.iter().all(|&m| m == 0.0) {
        return Err(Error::InfeasibleCalibration(format!(
            "calibration variable is zero on every phase-2 row but sums to {target:e}"
        )));
    }
    // F is decreasing; with one-signed m on phase 2 its range is one-sided.
    if m2.iter().all(|&m| m >= 0.0) && target <= 0.0 || m2.iter().all(|&m| m <= 0.0) && target >= 0.0 {
        return Err(Error::InfeasibleCalibration(format!(
            "target {target:e} is outside the attainable range of the calibrated total"
        )));
    }

    let mut lambda = 0.0;
    let mut f = f0;
    for _ in 0..MAX_ITER {
        let (_, df) = residual(lambda, &m2, &pi2, target);
        if df.abs() < MIN_GRADIENT {
            return Err(Error::NoProgress(format!(
                "gradient {df:e} vanished with residual {f:e} at lambda = {lambda}"
            )));
        }
        let step = -f / df;
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = lambda + scale * step;
            let (fc, _) = residual(cand, &m2, &pi2, target);
            if fc.is_finite() && fc.abs() < f.abs() {
                lambda = cand;
                f = fc;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if f.abs() < TOL {
            // one polishing step to pin λ to machine precision
            let (_, df) = residual(lambda, &m2, &pi2, target);
            let cand = lambda - f / df;
            let (fc, _) = residual(cand, &m2, &pi2, target);
            if fc.abs() <= f.abs() {
                lambda = cand;
                f = fc;
            }
            return Ok(solved(lambda, f));
        }
        if !moved {
            return Err(Error::NoProgress(format!("line search stalled with residual {f:e}")));
        }
    }
    Err(Error::InfeasibleCalibration(format!(
        "no solution after {MAX_ITER} Newton iterations (residual {f:e})"
    )))
}

/// Calibration on several variables at once: `a_i = exp(−λ·h_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiRakeSolution {
    pub lambda: Vec<f64>,
    /// Calibrated sampling probabilities (unchanged on phase-1-only rows).
    pub pi_star: Vec<f64>,
    /// Largest absolute calibration residual at the solution, in the variables' units.
    pub max_residual: f64,
}

/// Vector calibration `Σ_{Δ=1} a_i h_i / Π_i = Σ_all h_i`, solved by damped Newton on
/// the convex dual `Φ(λ) = Σ_{Δ=1} exp(−λ·h_i)/Π_i + λ·Σ_all h_i`. Collinear
/// calibration variables are handled through a pseudo-inverse of the Hessian.
pub fn rake_weights_multi(h: &[Vec<f64>], pi: &[f64], delta: &[bool]) -> Result<MultiRakeSolution> {
    let n = h.len();
    if pi.len() != n || delta.len() != n {
        return Err(Error::InvalidInput("raking inputs differ in length".into()));
    }
    let k = h.first().map_or(0, Vec::len);
    if k == 0 || h.iter().any(|r| r.len() != k || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("calibration variables must be finite rows of equal, non-zero width".into()));
    }
    if pi.iter().zip(delta).any(|(&p, &d)| d && !(p > 0.0)) {
        return Err(Error::InvalidInput("phase-2 sampling probabilities must be positive".into()));
    }
    // Column scaling leaves the calibration constraints unchanged but keeps the
    // Newton system well conditioned when the variables differ in magnitude.
    let col_scale: Vec<f64> = (0..k)
        .map(|c| {
            let ss: f64 = h.iter().map(|r| r[c] * r[c]).sum();
            let rms = (ss / n as f64).sqrt();
            if rms > 0.0 { rms } else { 1.0 }
        })
        .collect();
    let scaled = |r: &[f64]| DVector::from_iterator(k, r.iter().zip(&col_scale).map(|(v, s)| v / s));
    let target = h.iter().fold(DVector::zeros(k), |acc, r| acc + scaled(r));
    let rows: Vec<(DVector<f64>, f64)> = (0..n).filter(|&i| delta[i]).map(|i| (scaled(&h[i]), 1.0 / pi[i])).collect();
    let tol = TOL * (n as f64).sqrt().max(1.0);

    let dual = |lambda: &DVector<f64>| -> f64 {
        rows.iter().map(|(x, w)| w * (-lambda.dot(x)).exp()).sum::<f64>() + lambda.dot(&target)
    };
    let residual = |lambda: &DVector<f64>| -> DVector<f64> {
        rows.iter().fold(-target.clone(), |acc, (x, w)| acc + w * (-lambda.dot(x)).exp() * x)
    };
    let mut lambda = DVector::<f64>::zeros(k);
    let mut phi = dual(&lambda);
    for _ in 0..MAX_ITER {
        let f = residual(&lambda);
        let mut hess = DMatrix::<f64>::zeros(k, k);
        for (x, w) in &rows {
            hess += w * (-lambda.dot(x)).exp() * x * x.transpose();
        }
        let max_res = f.amax();
        if max_res < tol {
            let pi_star = (0..n)
                .map(|i| if delta[i] { pi[i] * lambda.dot(&scaled(&h[i])).exp() } else { pi[i] })
                .collect();
            let max_residual = f.iter().zip(&col_scale).map(|(r, s)| (r * s).abs()).fold(0.0, f64::max);
            return Ok(MultiRakeSolution {
                lambda: lambda.iter().zip(&col_scale).map(|(l, s)| l / s).collect(),
                pi_star,
                max_residual,
            });
        }
        let eps = 1e-12 * hess.amax().max(f64::MIN_POSITIVE);
        let step = hess
            .svd(true, true)
            .solve(&f, eps)
            .map_err(|e| Error::NoProgress(format!("calibration Hessian: {e}")))?;
        // Newton direction for Φ is +step since ∇Φ = −F.
        let slope = -f.dot(&step);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = &lambda + t * &step;
            let pc = dual(&cand);
            if pc.is_finite() && pc < phi && pc <= phi + 1e-4 * t * slope {
                lambda = cand;
                phi = pc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // Close to the optimum the decrease in Φ drops below its rounding
            // error; fall back to requiring a smaller residual.
            let norm = f.norm();
            t = 1.0;
            for _ in 0..60 {
                let cand = &lambda + t * &step;
                let fc = residual(&cand).norm();
                if fc.is_finite() && fc < norm {
                    phi = dual(&cand);
                    lambda = cand;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !moved {
            return Err(Error::InfeasibleCalibration(format!(
                "calibration stalled with residual {max_res:e}; the targets may be unattainable"
            )));
        }
    }
    Err(Error::InfeasibleCalibration(format!("no solution after {MAX_ITER} Newton iterations")))
}
