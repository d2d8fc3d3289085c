//! Weighted GLM engine (Gaussian and Bernoulli families) and the one-dimensional
//! offset logistic fits used by every targeting step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Clipping bound applied to probabilities before taking logits in fitting pipelines.
pub const P_MIN: f64 = 1e-6;
/// Clipping bound for the standalone [`logit`].
const LOGIT_CLIP: f64 = 1e-12;

const MAX_IRLS_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-10;
const RIDGE_FACTOR: f64 = 1e-8;

const FLUCT_BRACKET: f64 = 20.0;
const FLUCT_TOL: f64 = 1e-8;
const FLUCT_MAX_ITER: usize = 200;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-odds of `p`, clipped into `[1e-12, 1 - 1e-12]` first.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLIP, 1.0 - LOGIT_CLIP);
    (p / (1.0 - p)).ln()
}

pub fn clip_prob(p: f64, p_min: f64) -> f64 {
    p.clamp(p_min, 1.0 - p_min)
}

/// Log-odds of a probability clipped at [`P_MIN`].
pub fn logit_clipped(p: f64) -> f64 {
    logit(clip_prob(p, P_MIN))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Bernoulli,
}

/// A fitted GLM with an intercept. `coefficients[0]` is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub family: Family,
    pub converged: bool,
    pub n_iter: usize,
    pub feature_dim: usize,
    /// Ridge penalty actually used (zero unless the fallback fired).
    pub ridge: f64,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.feature_dim);
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.linear_predictor(x);
        match self.family {
            Family::Gaussian => eta,
            Family::Bernoulli => clip_prob(expit(eta), LOGIT_CLIP),
        }
    }

    /// Max-norm of the (unpenalized) weighted score equations at the fit.
    pub fn score_max(&self, rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> f64 {
        let mut score = vec![0.0; self.feature_dim + 1];
        for ((x, &yi), &wi) in rows.iter().zip(y).zip(w) {
            let eta = self.linear_predictor(x);
            let mu = match self.family {
                Family::Gaussian => eta,
                Family::Bernoulli => expit(eta),
            };
            let r = wi * (yi - mu);
            score[0] += r;
            for (s, v) in score[1..].iter_mut().zip(x) {
                *s += r * v;
            }
        }
        score.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Fits a weighted GLM with intercept by IRLS.
///
/// Rows with zero weight do not influence the fit. A singular weighted Gram
/// matrix, or a Bernoulli fit that fails to converge (separation), is retried
/// with a ridge penalty of `1e-8 * trace / dim` on the non-intercept coefficients.
pub fn fit_glm(rows: &[Vec<f64>], y: &[f64], w: &[f64], family: Family) -> Result<GlmFit> {
    let n = rows.len();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {n} rows, {} responses, {} weights",
            y.len(),
            w.len()
        )));
    }
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput("ragged feature rows".into()));
    }
    if w.iter().any(|&wi| !(wi >= 0.0) || !wi.is_finite()) {
        return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
    }
    if !w.iter().any(|&wi| wi > 0.0) {
        return Err(Error::InvalidInput("no positive weight".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite response or feature".into()));
    }
    if family == Family::Bernoulli && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidInput("bernoulli response outside [0, 1]".into()));
    }

    let design = Design::new(rows, w);
    let ridge = RIDGE_FACTOR * design.weighted_trace() / (dim + 1) as f64;
    let first = match family {
        Family::Gaussian => design.least_squares(y, 0.0),
        Family::Bernoulli => design.irls(y, 0.0),
    };
    match first {
        Some(fit) if fit.converged => Ok(fit),
        _ => {
            let retry = match family {
                Family::Gaussian => design.least_squares(y, ridge),
                Family::Bernoulli => design.irls(y, ridge),
            };
            retry.ok_or(Error::Singular)
        }
    }
}

/// Weighted design with an implicit leading intercept column.
struct Design<'a> {
    rows: &'a [Vec<f64>],
    w: &'a [f64],
    p: usize,
}

impl<'a> Design<'a> {
    fn new(rows: &'a [Vec<f64>], w: &'a [f64]) -> Self {
        let p = rows.first().map_or(0, Vec::len) + 1;
        Design { rows, w, p }
    }

    fn x(&self, i: usize, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            self.rows[i][j - 1]
        }
    }

    fn weighted_trace(&self) -> f64 {
        let mut t = 0.0;
        for (i, &wi) in self.w.iter().enumerate() {
            for j in 0..self.p {
                let x = self.x(i, j);
                t += wi * x * x;
            }
        }
        t
    }

    /// Solves `(X' diag(v) X + ridge * P) beta = X' r`, P penalizing non-intercept terms.
    fn solve(&self, v: &[f64], r: &[f64], ridge: f64, extra: Option<&[f64]>) -> Option<DVector<f64>> {
        let p = self.p;
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = extra.map_or_else(|| DVector::zeros(p), DVector::from_column_slice);
        let mut xi = vec![0.0; p];
        for i in 0..self.rows.len() {
            if v[i] == 0.0 && r[i] == 0.0 {
                continue;
            }
            for (j, x) in xi.iter_mut().enumerate() {
                *x = self.x(i, j);
            }
            for j in 0..p {
                rhs[j] += xi[j] * r[i];
                let vj = v[i] * xi[j];
                for k in 0..=j {
                    gram[(j, k)] += vj * xi[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                gram[(k, j)] = gram[(j, k)];
            }
        }
        for j in 1..p {
            gram[(j, j)] += ridge;
        }
        let chol = gram.cholesky()?;
        let diag_ok = (0..p).all(|j| {
            let d = chol.l_dirty()[(j, j)];
            d.is_finite() && d > 0.0
        });
        if !diag_ok || rcond_estimate(&chol) < 1e-14 {
            return None;
        }
        let sol = chol.solve(&rhs);
        sol.iter().all(|b| b.is_finite()).then_some(sol)
    }

    fn least_squares(&self, y: &[f64], ridge: f64) -> Option<GlmFit> {
        let r: Vec<f64> = self.w.iter().zip(y).map(|(w, y)| w * y).collect();
        let beta = self.solve(self.w, &r, ridge, None)?;
        Some(GlmFit {
            coefficients: beta.iter().copied().collect(),
            family: Family::Gaussian,
            converged: true,
            n_iter: 1,
            feature_dim: self.p - 1,
            ridge,
        })
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        (0..self.p).map(|j| beta[j] * self.x(i, j)).sum()
    }

    fn penalized_deviance(&self, y: &[f64], beta: &[f64], ridge: f64) -> f64 {
        let mut dev = 0.0;
        for (i, (&yi, &wi)) in y.iter().zip(self.w).enumerate() {
            if wi == 0.0 {
                continue;
            }
            let eta = self.eta(beta, i);
            // -log-likelihood of a fractional Bernoulli response, computed stably
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            dev += wi * (softplus - yi * eta);
        }
        dev + 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>()
    }

    /// Newton-Raphson (IRLS) for the Bernoulli family with step halving.
    fn irls(&self, y: &[f64], ridge: f64) -> Option<GlmFit> {
        let n = self.rows.len();
        let p = self.p;
        let wsum: f64 = self.w.iter().sum();
        let ybar = self.w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / wsum;
        let mut beta = vec![0.0; p];
        beta[0] = logit(ybar.clamp(P_MIN, 1.0 - P_MIN));
        let mut dev = self.penalized_deviance(y, &beta, ridge);
        let mut v = vec![0.0; n];
        let mut r = vec![0.0; n];
        let mut converged = false;
        let mut iter = 0;
        while iter < MAX_IRLS_ITER {
            iter += 1;
            for i in 0..n {
                let mu = expit(self.eta(&beta, i));
                v[i] = self.w[i] * mu * (1.0 - mu);
                r[i] = self.w[i] * (y[i] - mu);
            }
            // Newton direction: (X'VX + ridge P) step = X'(w (y - mu)) - ridge P beta
            let pen: Vec<f64> = (0..p)
                .map(|j| if j == 0 { 0.0 } else { -ridge * beta[j] })
                .collect();
            let step = self.solve(&v, &r, ridge, Some(&pen))?;
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
                let trial_dev = self.penalized_deviance(y, &trial, ridge);
                if trial_dev.is_finite() && trial_dev <= dev + 1e-12 * dev.abs().max(1.0) {
                    beta = trial;
                    dev = trial_dev;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            let max_step = step.iter().fold(0.0f64, |m, s| m.max((scale * s).abs()));
            if !accepted {
                break;
            }
            if max_step <= IRLS_TOL {
                converged = true;
                break;
            }
        }
        Some(GlmFit {
            coefficients: beta,
            family: Family::Bernoulli,
            converged,
            n_iter: iter,
            feature_dim: p - 1,
            ridge,
        })
    }
}

/// Cheap reciprocal-condition proxy from the Cholesky diagonal.
fn rcond_estimate(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = chol.l_dirty();
    let p = l.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for j in 0..p {
        let d = l[(j, j)] * l[(j, j)];
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Fitted coefficient of a one-dimensional offset logistic fluctuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationFit {
    pub epsilon: f64,
    pub n_iter: usize,
}

impl FluctuationFit {
    pub const ZERO: FluctuationFit = FluctuationFit {
        epsilon: 0.0,
        n_iter: 0,
    };

    /// Fluctuated probability `expit(offset + epsilon * h)`.
    pub fn apply(&self, offset_logit: f64, h: f64) -> f64 {
        expit(offset_logit + self.epsilon * h)
    }
}

/// Weighted score `sum w h (y - expit(offset + eps h))` of the fluctuation submodel.
pub fn fluctuation_score(y: &[f64], offset_logit: &[f64], h: &[f64], w: &[f64], eps: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        if w[i] != 0.0 && h[i] != 0.0 {
            s += w[i] * h[i] * (y[i] - expit(offset_logit[i] + eps * h[i]));
        }
    }
    s
}

fn fluctuation_slope(offset_logit: &[f64], h: &[f64], w: &[f64], eps: f64) -> f64 {
    let mut d = 0.0;
    for i in 0..h.len() {
        if w[i] != 0.0 && h[i] != 0.0 {
            let p = expit(offset_logit[i] + eps * h[i]);
            d -= w[i] * h[i] * h[i] * p * (1.0 - p);
        }
    }
    d
}

/// Solves the weighted univariate offset-logistic score equation for epsilon.
///
/// Safeguarded Newton inside the bracket `[-20, 20]`, falling back to bisection.
/// The score is non-increasing in epsilon, so a sign change on the bracket
/// guarantees a root.
pub fn fit_fluctuation(y: &[f64], offset_logit: &[f64], h: &[f64], w: &[f64]) -> Result<FluctuationFit> {
    let n = y.len();
    if offset_logit.len() != n || h.len() != n || w.len() != n {
        return Err(Error::InvalidInput("fluctuation inputs differ in length".into()));
    }
    if offset_logit.iter().any(|o| !o.is_finite()) || h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite fluctuation offset or covariate".into()));
    }
    if w.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidInput("negative fluctuation weight".into()));
    }
    let score = |e: f64| fluctuation_score(y, offset_logit, h, w, e);
    let s0 = score(0.0);
    if s0.abs() <= FLUCT_TOL * 1e-2 || h.iter().zip(w).all(|(hi, wi)| *hi == 0.0 || *wi == 0.0) {
        return Ok(FluctuationFit::ZERO);
    }

    // Newton from zero, accepted only while it stays inside the bracket.
    let (mut lo, mut hi) = (-FLUCT_BRACKET, FLUCT_BRACKET);
    let (s_lo, s_hi) = (score(lo), score(hi));
    let bracketed = s_lo >= 0.0 && s_hi <= 0.0;
    let mut eps = 0.0;
    let mut s = s0;
    for it in 1..=FLUCT_MAX_ITER {
        if s > 0.0 {
            lo = lo.max(eps);
        } else {
            hi = hi.min(eps);
        }
        let d = fluctuation_slope(offset_logit, h, w, eps);
        let newton = if d < 0.0 { eps - s / d } else { f64::NAN };
        let next = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else if bracketed {
            0.5 * (lo + hi)
        } else {
            break;
        };
        let step = (next - eps).abs();
        eps = next;
        s = score(eps);
        if s.abs() <= FLUCT_TOL * 1e-2 || step <= 1e-15 * (1.0 + eps.abs()) {
            return Ok(FluctuationFit { epsilon: eps, n_iter: it });
        }
    }
    if s.abs() <= FLUCT_TOL {
        return Ok(FluctuationFit {
            epsilon: eps,
            n_iter: FLUCT_MAX_ITER,
        });
    }
    if !bracketed {
        return Err(Error::DegenerateFluctuation(format!(
            "score has no sign change on [-{FLUCT_BRACKET}, {FLUCT_BRACKET}] (score(0) = {s0:e})"
        )));
    }
    // Plain bisection as a last resort.
    let (mut a, mut b) = (-FLUCT_BRACKET, FLUCT_BRACKET);
    for it in 0..200 {
        let m = 0.5 * (a + b);
        let sm = score(m);
        if sm.abs() <= FLUCT_TOL * 1e-2 || (b - a) <= 1e-15 {
            return Ok(FluctuationFit {
                epsilon: m,
                n_iter: FLUCT_MAX_ITER + it,
            });
        }
        if sm > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(FluctuationFit {
        epsilon: 0.5 * (a + b),
        n_iter: FLUCT_MAX_ITER + 200,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Weighted least squares via explicit normal equations, solved by Gauss-Jordan.
    fn wls_oracle(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
        let p = rows[0].len() + 1;
        let mut m = vec![vec![0.0; p + 1]; p];
        for ((x, &yi), &wi) in rows.iter().zip(y).zip(w) {
            let xi: Vec<f64> = std::iter::once(1.0).chain(x.iter().copied()).collect();
            for j in 0..p {
                for k in 0..p {
                    m[j][k] += wi * xi[j] * xi[k];
                }
                m[j][p] += wi * xi[j] * yi;
            }
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            m.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for k in c..=p {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
        (0..p).map(|j| m[j][p] / m[j][j]).collect()
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn expit_logit_basics() {
        assert_eq!(expit(0.0), 0.5);
        assert_eq!(logit(0.5), 0.0);
        for i in -50..=50 {
            let x = i as f64 * 0.37;
            assert!((expit(-x) - (1.0 - expit(x))).abs() < 1e-15);
        }
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((expit(logit(p)) - p).abs() < 1e-10);
        }
        assert!(logit(0.0).is_finite() && logit(1.0).is_finite());
    }

    #[test]
    fn intercept_only_bernoulli_is_weighted_mean() {
        let rows = vec![vec![]; 4];
        let fit = fit_glm(&rows, &[0.0, 1.0, 1.0, 1.0], &[1.0; 4], Family::Bernoulli).unwrap();
        assert!(fit.converged);
        assert!((fit.predict(&[]) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn gaussian_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let rows = random_design(&mut rng, 40, 3);
            let y: Vec<f64> = rows.iter().map(|x| x[0] - 2.0 * x[2] + rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..40).map(|_| rng.random_range(0.1..3.0)).collect();
            let fit = fit_glm(&rows, &y, &w, Family::Gaussian).unwrap();
            let oracle = wls_oracle(&rows, &y, &w);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn weight_two_equals_duplicated_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = random_design(&mut rng, 30, 2);
        let y: Vec<f64> = (0..30).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let mut w = vec![1.0; 30];
        w[4] = 2.0;
        let mut rows2 = rows.clone();
        rows2.push(rows[4].clone());
        let mut y2 = y.clone();
        y2.push(y[4]);
        for fam in [Family::Gaussian, Family::Bernoulli] {
            let a = fit_glm(&rows, &y, &w, fam).unwrap();
            let b = fit_glm(&rows2, &y2, &[1.0; 31], fam).unwrap();
            for (x, z) in a.coefficients.iter().zip(&b.coefficients) {
                assert!((x - z).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_weight_rows_have_no_influence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = random_design(&mut rng, 50, 2);
        let y: Vec<f64> = rows.iter().map(|x| (x[0] + x[1] > 0.3) as u8 as f64).collect();
        let y = y.iter().enumerate().map(|(i, v)| if i % 7 == 0 { 1.0 - v } else { *v }).collect::<Vec<_>>();
        let mut w = vec![1.0; 50];
        let mut y_alt = y.clone();
        for i in 40..50 {
            w[i] = 0.0;
            y_alt[i] = 1.0 - y[i];
        }
        let a = fit_glm(&rows, &y, &w, Family::Bernoulli).unwrap();
        let b = fit_glm(&rows, &y_alt, &w, Family::Bernoulli).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert!(a.converged);
        assert!(a.score_max(&rows, &y, &w) < 1e-8);
    }

    #[test]
    fn separable_data_stays_finite() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 - 9.5]).collect();
        let y: Vec<f64> = (0..20).map(|i| (i >= 10) as u8 as f64).collect();
        let fit = fit_glm(&rows, &y, &[1.0; 20], Family::Bernoulli).unwrap();
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
        assert!(fit.ridge > 0.0);
        assert!(fit.predict(&[5.0]) > 0.99 && fit.predict(&[-5.0]) < 0.01);
    }

    #[test]
    fn collinear_design_uses_ridge() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 1.0 + 3.0 * i as f64).collect();
        let fit = fit_glm(&rows, &y, &[1.0; 10], Family::Gaussian).unwrap();
        assert!(fit.ridge > 0.0);
        for (x, yi) in rows.iter().zip(&y) {
            assert!((fit.predict(x) - yi).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let rows = vec![vec![1.0]; 3];
        assert!(fit_glm(&rows, &[0.0, 1.0], &[1.0; 3], Family::Gaussian).is_err());
        assert!(fit_glm(&rows, &[0.0; 3], &[0.0; 3], Family::Gaussian).is_err());
        assert!(fit_glm(&rows, &[0.0, f64::NAN, 1.0], &[1.0; 3], Family::Gaussian).is_err());
    }

    #[test]
    fn fluctuation_zero_cases() {
        let off = [-1.0, 0.2, 0.7];
        let y: Vec<f64> = off.iter().map(|&o| expit(o)).collect();
        let fit = fit_fluctuation(&y, &off, &[1.0, -3.0, 0.5], &[1.0; 3]).unwrap();
        assert_eq!(fit.epsilon, 0.0);
        let fit = fit_fluctuation(&[1.0, 0.0, 1.0], &off, &[0.0; 3], &[1.0; 3]).unwrap();
        assert_eq!(fit.epsilon, 0.0);
    }

    fn bisect(y: &[f64], off: &[f64], h: &[f64], w: &[f64]) -> f64 {
        let (mut a, mut b) = (-20.0, 20.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if fluctuation_score(y, off, h, w, m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn fluctuation_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let off: Vec<f64> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..20).map(|_| rng.random_range(0.2..2.0)).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
            let fit = fit_fluctuation(&y, &off, &h, &w).unwrap();
            assert!((fit.epsilon - bisect(&y, &off, &h, &w)).abs() < 1e-8);
            assert!(fluctuation_score(&y, &off, &h, &w, fit.epsilon).abs() < 1e-8);
        }
    }

    #[test]
    fn fluctuation_without_root_errors() {
        // every residual has the same sign as h, so the score never crosses zero
        let r = fit_fluctuation(&[1.0, 1.0], &[0.0, 0.0], &[0.1, 0.1], &[1.0, 1.0]);
        assert!(matches!(r, Err(Error::DegenerateFluctuation(_))));
    }

    proptest! {
        #[test]
        fn fluctuation_is_scale_equivariant(
            seed in 0u64..1000,
            c in 0.1f64..5.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let off: Vec<f64> = (0..25).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..25).map(|_| (rng.random::<f64>() < 0.5) as u8 as f64).collect();
            let w = vec![1.0; 25];
            let hc: Vec<f64> = h.iter().map(|v| v * c).collect();
            let a = fit_fluctuation(&y, &off, &h, &w);
            let b = fit_fluctuation(&y, &off, &hc, &w);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.epsilon / c - b.epsilon).abs() < 1e-8 * (1.0 + a.epsilon.abs()));
                for i in 0..25 {
                    prop_assert!((a.apply(off[i], h[i]) - b.apply(off[i], hc[i])).abs() < 1e-8);
                }
            }
        }

        #[test]
        fn gaussian_oracle_equivalence(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = random_design(&mut rng, 15, 2);
            let y: Vec<f64> = (0..15).map(|_| rng.random_range(-5.0..5.0)).collect();
            let w: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..2.0)).collect();
            let fit = fit_glm(&rows, &y, &w, Family::Gaussian).unwrap();
            let oracle = wls_oracle(&rows, &y, &w);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()));
            }
        }
    }
}
