use super::dgp::{draw_unit, mean_sin_n11, rng_for, Dgp};
use crate::data::YKind;
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family};

/// Smallest Monte-Carlo size accepted for a truth computation.
pub const MIN_MC: usize = 1_000_000;

fn check_mc(n_mc: usize) -> Result<()> {
    if n_mc < MIN_MC {
        return Err(Error::InvalidInput(format!("n_mc = {n_mc} is below the minimum {MIN_MC}")));
    }
    Ok(())
}

/// Monte-Carlo average of `Q(1,W) − Q(0,W)` under the design's covariate law.
pub fn true_psi(dgp: &Dgp, n_mc: usize, seed: u64) -> Result<f64> {
    true_psi_mc(dgp, n_mc, seed).map(|(psi, _)| psi)
}

/// [`true_psi`] together with its Monte-Carlo standard error.
pub fn true_psi_mc(dgp: &Dgp, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    check_mc(n_mc)?;
    dgp.validate()?;
    let mut rng = rng_for(seed);
    let (mut mean, mut m2) = (0.0, 0.0);
    for k in 1..=n_mc {
        let u = draw_unit(dgp, &mut rng);
        let x = u.q1 - u.q0;
        let d = x - mean;
        mean += d / k as f64;
        m2 += d * (x - mean);
    }
    let var = m2 / (n_mc - 1) as f64;
    Ok((mean, (var / n_mc as f64).sqrt()))
}

/// Effect under a main-term working model for Q fit to `n_mc` uncensored draws:
/// the g-computation contrast of the population-scale fit.
pub fn census_psi(dgp: &Dgp, n_mc: usize, seed: u64) -> Result<f64> {
    check_mc(n_mc)?;
    dgp.validate()?;
    let mut rng = rng_for(seed);
    let mut rows = Vec::with_capacity(n_mc);
    let mut y = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let u = draw_unit(dgp, &mut rng);
        rows.push(vec![f64::from(u.a), u.w[0], u.w[1], u.w[2], u.w[3]]);
        y.push(u.y);
    }
    let family = match dgp.y_kind() {
        YKind::Binary => Family::Bernoulli,
        YKind::Continuous => Family::Gaussian,
    };
    let fit = fit_glm(&rows, &y, &vec![1.0; n_mc], family)?;
    let mut sum = 0.0;
    for r in &mut rows {
        r[0] = 1.0;
        let m1 = fit.predict(r);
        r[0] = 0.0;
        sum += m1 - fit.predict(r);
    }
    Ok(sum / n_mc as f64)
}

/// Reference values used by the study runner, computed once at 10^7 draws
/// (the census slope as a common-random-numbers difference of gamma = 1 and 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub psi: f64,
    /// Monte-Carlo standard error of `psi` (zero when closed form).
    pub psi_mc_se: f64,
    pub census: Option<f64>,
}

pub(crate) const KANG_DR_PSI: f64 = 0.24446109466147078;
pub(crate) const KANG_DR_PSI_SE: f64 = 1.609e-5;
pub(crate) const MISSING_RATE_PSI: f64 = 0.25929656233526438;
pub(crate) const MISSING_RATE_PSI_SE: f64 = 3.659e-5;
pub(crate) const MISSING_RATE_CENSUS: f64 = 0.24157449018856195;
pub(crate) const NEAR_POSITIVITY_PSI: f64 = 0.16725216740843871;
pub(crate) const NEAR_POSITIVITY_PSI_SE: f64 = 1.050e-5;
/// Census effect per unit of `gamma` in `raking_gap`; the constant-effect part of
/// Q is linear in W, so the least-squares A-coefficient is linear in gamma.
pub(crate) const RAKING_GAP_CENSUS_SLOPE: f64 = 1.62641657299177065;

/// `E[2.5 I(W>1) − 2.5 I(W<0) + 2 sin(W)]` for `W ~ N(1,1)`; the causal effect per unit gamma.
pub fn raking_gap_effect_slope() -> f64 {
    let normal_cdf = |x: f64| 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2);
    2.5 * 0.5 - 2.5 * normal_cdf(-1.0) + 2.0 * mean_sin_n11()
}

/// Pinned reference values for a design.
pub fn reference(dgp: &Dgp) -> Reference {
    match *dgp {
        Dgp::KangDr => Reference {
            psi: KANG_DR_PSI,
            psi_mc_se: KANG_DR_PSI_SE,
            census: None,
        },
        Dgp::MissingRate { .. } => Reference {
            psi: MISSING_RATE_PSI,
            psi_mc_se: MISSING_RATE_PSI_SE,
            census: Some(MISSING_RATE_CENSUS),
        },
        Dgp::RakingGap { gamma } => Reference {
            psi: gamma * raking_gap_effect_slope(),
            psi_mc_se: 0.0,
            census: Some(gamma * RAKING_GAP_CENSUS_SLOPE),
        },
        Dgp::NearPositivity => Reference {
            psi: NEAR_POSITIVITY_PSI,
            psi_mc_se: NEAR_POSITIVITY_PSI_SE,
            census: None,
        },
    }
}

/// The gamma at which `|causal − census|` equals `gap`.
pub fn raking_gap_gamma_for(gap: f64) -> f64 {
    gap / (raking_gap_effect_slope() - RAKING_GAP_CENSUS_SLOPE).abs()
}
