use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, YKind};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family, GlmFit};
use crate::nuisance::{Frame, LearnerSpec, NuisanceSet};

use super::{rake_weights_multi, EstimateResult, EstimatorId, Setup};

/// Main-terms working model of Y on (A, W) fit to one design.
struct WorkingModel {
    fit: GlmFit,
    x: Vec<Vec<f64>>,
    x1: Vec<Vec<f64>>,
    x0: Vec<Vec<f64>>,
}

impl WorkingModel {
    /// `a` and `w` give each row's treatment and covariates; `spec` selects columns of `(A, W)`.
    fn fit(spec: &LearnerSpec, a: &[u8], w: &[Vec<f64>], y: &[f64], weights: &[f64], family: Family) -> Result<WorkingModel> {
        let layout = |arm: &dyn Fn(usize) -> u8| -> Result<Vec<Vec<f64>>> {
            let rows: Vec<Vec<f64>> = w
                .iter()
                .enumerate()
                .map(|(j, w)| std::iter::once(f64::from(arm(j))).chain(w.iter().copied()).collect())
                .collect();
            spec.select(&rows)
        };
        let x = layout(&|j| a[j])?;
        let x1 = layout(&|_| 1)?;
        let x0 = layout(&|_| 0)?;
        let fit = fit_glm(&x, y, weights, family)?;
        Ok(WorkingModel { fit, x, x1, x0 })
    }

    fn variance(&self, mu: f64) -> f64 {
        match self.fit.family {
            Family::Gaussian => 1.0,
            Family::Bernoulli => mu * (1.0 - mu),
        }
    }

    /// Weighted g-computation effect, its influence values, and the influence
    /// vectors of the coefficients, for every row.
    fn influence(&self, y: &[f64], weights: &[f64]) -> Result<Influence> {
        let p = self.fit.feature_dim + 1;
        let tilde = |x: &[f64]| DVector::from_iterator(p, std::iter::once(1.0).chain(x.iter().copied()));
        let mut info = DMatrix::<f64>::zeros(p, p);
        let mut grad = DVector::<f64>::zeros(p);
        let (mut psi, mut total) = (0.0, 0.0);
        let mut contrast = Vec::with_capacity(y.len());
        for (j, &w) in weights.iter().enumerate() {
            let xt = tilde(&self.x[j]);
            let mu = self.fit.predict(&self.x[j]);
            info += w * self.variance(mu) * &xt * xt.transpose();
            let (m1, m0) = (self.fit.predict(&self.x1[j]), self.fit.predict(&self.x0[j]));
            grad += w * (self.variance(m1) * tilde(&self.x1[j]) - self.variance(m0) * tilde(&self.x0[j]));
            psi += w * (m1 - m0);
            total += w;
            contrast.push(m1 - m0);
        }
        info /= total;
        grad /= total;
        psi /= total;
        let inv = info.try_inverse().ok_or(Error::Singular)?;
        let u = &inv * &grad;
        let mut effect = Vec::with_capacity(y.len());
        let mut coef = Vec::with_capacity(y.len());
        for j in 0..y.len() {
            let score = tilde(&self.x[j]) * (y[j] - self.fit.predict(&self.x[j]));
            effect.push(u.dot(&score) + contrast[j] - psi);
            coef.push((&inv * score).iter().copied().collect());
        }
        Ok(Influence { psi, effect, coef })
    }
}

struct Influence {
    psi: f64,
    effect: Vec<f64>,
    coef: Vec<Vec<f64>>,
}

/// Regression imputation of the phase-2 covariates from V, for every record.
fn impute_w(frame: &Frame, w1_dim: usize) -> Result<Vec<Vec<f64>>> {
    let v2 = frame.v2();
    let ones = vec![1.0; v2.len()];
    let w2_dim = frame.w.first().map_or(0, |w| w.len() - w1_dim);
    let mut fits = Vec::with_capacity(w2_dim);
    for k in 0..w2_dim {
        let target: Vec<f64> = frame.w.iter().map(|w| w[w1_dim + k]).collect();
        fits.push(fit_glm(&v2, &target, &ones, Family::Gaussian)?);
    }
    Ok(frame
        .v
        .iter()
        .map(|v| v[..w1_dim].iter().copied().chain(fits.iter().map(|f| f.predict(v))).collect())
        .collect())
}

/// Generalized-raking estimator with a parametric working model for Q.
///
/// The calibration variables are the working model's influence functions for
/// its coefficients and for the effect, computed on a regression-imputed full
/// sample so that they depend on V only. Π is raked on all of them at once, and
/// the working model is refit on phase 2 with the calibrated weights. The target
/// is the working model's (census) effect.
pub fn estimate_raking(ds: &Dataset, ns: &NuisanceSet) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let frame = &s.frame;
    let family = match ds.y_kind() {
        YKind::Binary => Family::Bernoulli,
        YKind::Continuous => Family::Gaussian,
    };

    let imputed = impute_w(frame, ds.w1_dim())?;
    let ones = vec![1.0; frame.n];
    let full = WorkingModel::fit(&ns.q_spec, &frame.a, &imputed, &frame.y, &ones, family)?;
    let aux = full.influence(&frame.y, &ones)?;
    let h: Vec<Vec<f64>> = aux
        .coef
        .iter()
        .zip(&aux.effect)
        .map(|(c, &e)| c.iter().copied().chain(std::iter::once(e)).collect())
        .collect();
    let pi_star = rake_weights_multi(&h, &s.ev.pi, &frame.delta)?.pi_star;

    let a2: Vec<u8> = frame.phase2.iter().map(|&i| frame.a[i]).collect();
    let y2: Vec<f64> = frame.phase2.iter().map(|&i| frame.y[i]).collect();
    let w2: Vec<f64> = frame.phase2.iter().map(|&i| 1.0 / pi_star[i]).collect();
    let calibrated = WorkingModel::fit(&ns.q_spec, &a2, &frame.w, &y2, &w2, family)?;
    let inf = calibrated.influence(&y2, &w2)?;

    // Calibration removes the part of the influence explained by the auxiliaries:
    // D = Δ/Π*(IF − ĥ) + ĥ with ĥ the weighted projection of IF on h.
    let k = h[0].len();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut cross = DVector::<f64>::zeros(k);
    for (j, &i) in frame.phase2.iter().enumerate() {
        let x = DVector::from_column_slice(&h[i]);
        gram += w2[j] * &x * x.transpose();
        cross += w2[j] * inf.effect[j] * &x;
    }
    let eps = 1e-12 * gram.amax().max(f64::MIN_POSITIVE);
    let b = gram.svd(true, true).solve(&cross, eps).map_err(|_| Error::Singular)?;
    let mut d: Vec<f64> = h.iter().map(|x| b.dot(&DVector::from_column_slice(x))).collect();
    for (j, &i) in frame.phase2.iter().enumerate() {
        d[i] += (inf.effect[j] - d[i]) / pi_star[i];
    }
    s.finish(EstimatorId::Raking, inf.psi, &d, 1, true)
}
