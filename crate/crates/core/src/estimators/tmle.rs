use crate::data::Dataset;
use crate::eic::{aipcw_eic, components, mean, slope_at, Pieces, Submodel};
use crate::error::Result;
use crate::glm::{expit, fit_fluctuation, logit_clipped};
use crate::nuisance::{fit_v_probability, NuisanceSet, Predictor};

use super::{
    hajek_plugin, pi_step, q_step, rake_weights, score_solved, EstimateResult, EstimatorId, EstimatorOptions, Mode,
    Setup, VRegressor,
};

/// Single weighted targeting step of Q, then the weighted plug-in.
///
/// Inference uses the weighted full-data EIC `Δ/Π D^F`, which ignores the
/// efficiency contribution of Π and is conservative when Π is estimated.
pub fn estimate_ipcw_tmle(ds: &Dataset, ns: &NuisanceSet) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let (frame, pi) = (&s.frame, &s.ev.pi);
    let (mut q1, mut q0) = (s.ev.q1.clone(), s.ev.q0.clone());
    q_step(frame, pi, &s.ev.g1, &mut q1, &mut q0)?;
    let psi = hajek_plugin(frame, pi, &q1, &q0);
    let dbar = Pieces::new(frame, &s.ev.g1, &q1, &q0).dbar();
    let mut d = vec![0.0; frame.n];
    for (j, &i) in frame.phase2.iter().enumerate() {
        d[i] = (dbar[j] - psi) / pi[i];
    }
    s.finish(EstimatorId::IpcwTmle, psi, &d, 1, true)
}

#[derive(Clone, Copy)]
enum PiUpdate {
    Fluctuate,
    Rake,
}

/// Iterates Q- and Π-targeting until `|P_n D| ≤ σ_n/(√n log n)`.
pub fn estimate_ipcw_tmle_target_pi(ds: &Dataset, ns: &NuisanceSet, mode: Mode, opts: &EstimatorOptions) -> Result<EstimateResult> {
    iterate(ds, ns, mode, PiUpdate::Fluctuate, opts, EstimatorId::IpcwTmleTargetPi(mode))
}

/// As [`estimate_ipcw_tmle_target_pi`], with Π recalibrated by raking instead of a fluctuation.
pub fn estimate_ipcw_tmle_rake_pi(ds: &Dataset, ns: &NuisanceSet, opts: &EstimatorOptions) -> Result<EstimateResult> {
    iterate(ds, ns, Mode::Refit, PiUpdate::Rake, opts, EstimatorId::IpcwTmleRakePi)
}

fn iterate(ds: &Dataset, ns: &NuisanceSet, mode: Mode, update: PiUpdate, opts: &EstimatorOptions, id: EstimatorId) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let frame = &s.frame;
    let g1 = &s.ev.g1;
    let reg = VRegressor::new(&ns.mbar, frame);
    let mut pi = s.ev.pi.clone();
    let (mut q1, mut q0) = (s.ev.q1.clone(), s.ev.q0.clone());

    // Linearized mode: m̄ along the submodel is m̄_0 + ε m̄'_0, both fit once.
    let linear = match mode {
        Mode::Refit => None,
        Mode::Linearized => {
            let dbar0 = Pieces::new(frame, g1, &q1, &q0).dbar();
            let slope0: Vec<f64> = frame
                .phase2
                .iter()
                .enumerate()
                .map(|(j, &i)| slope_at(frame.a[i], g1[j], q1[j], q0[j], Submodel::Logistic).0)
                .collect();
            Some((reg.mbar(&dbar0)?, reg.slope(&slope0)?))
        }
    };
    let mbar_at = |dbar: &[f64], eps: f64| -> Result<Vec<f64>> {
        match &linear {
            None => reg.mbar(dbar),
            Some((m0, md)) => Ok(m0.iter().zip(md).map(|(m, d)| m + eps * d).collect()),
        }
    };

    let mut eps_cum = 0.0;
    let mut k = 0;
    // At least one targeting round, even if the initial fit already meets the threshold.
    loop {
        eps_cum += q_step(frame, &pi, g1, &mut q1, &mut q0)?;
        let dbar = Pieces::new(frame, g1, &q1, &q0).dbar();
        let mbar = mbar_at(&dbar, eps_cum)?;
        let psi = hajek_plugin(frame, &pi, &q1, &q0);
        let h: Vec<f64> = mbar.iter().map(|m| m - psi).collect();
        pi = match update {
            PiUpdate::Fluctuate => {
                let cov: Vec<f64> = h.iter().zip(&pi).map(|(h, p)| h / p).collect();
                pi_step(frame, &pi, &cov, ns.trunc_pi.0)?
            }
            PiUpdate::Rake => rake_weights(&h, &pi, &frame.delta)?.pi_star,
        };
        k += 1;
        let psi = hajek_plugin(frame, &pi, &q1, &q0);
        let d = aipcw_eic(frame, &pi, &dbar, &mbar, psi);
        let converged = score_solved(&d);
        if converged || k >= opts.max_outer_iter {
            return s.finish(id, psi, &d, k, converged);
        }
    }
}

/// Regressions of Q(1,W) and Q(0,W) on V over phase-2 rows, evaluated everywhere.
fn gamma_regressions(reg: &VRegressor, frame: &crate::nuisance::Frame, q1: &[f64], q0: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = reg.spec();
    let v2 = frame.v2();
    let f1 = fit_v_probability(&v2, q1, &spec)?;
    let f0 = fit_v_probability(&v2, q0, &spec)?;
    Ok((
        frame.v.iter().map(|v| f1.predict(v)).collect(),
        frame.v.iter().map(|v| f0.predict(v)).collect(),
    ))
}

/// Logistic fluctuation of a Γ-regression with covariate 1/Π on phase-2 rows.
fn gamma_step(frame: &crate::nuisance::Frame, pi: &[f64], target: &[f64], m: &mut [f64]) -> Result<()> {
    let y = target.to_vec();
    let off: Vec<f64> = frame.phase2.iter().map(|&i| logit_clipped(m[i])).collect();
    let h: Vec<f64> = frame.phase2.iter().map(|&i| 1.0 / pi[i]).collect();
    let gamma = fit_fluctuation(&y, &off, &h, &vec![1.0; y.len()])?.epsilon;
    for (j, &i) in frame.phase2.iter().enumerate() {
        m[i] = expit(off[j] + gamma * h[j]);
    }
    Ok(())
}

/// TMLE built on the four-component representation of the EIC: alternate Q- and
/// Π-targeting on the residual components, then target the Γ-regressions and
/// plug in their empirical mean over all records.
pub fn estimate_tmle_alt(ds: &Dataset, ns: &NuisanceSet, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let frame = &s.frame;
    let g1 = &s.ev.g1;
    let reg = VRegressor::new(&ns.mbar, frame);
    let mut pi = s.ev.pi.clone();
    let (mut q1, mut q0) = (s.ev.q1.clone(), s.ev.q0.clone());

    let finalize = |pi: &[f64], q1: &[f64], q0: &[f64], pieces: &Pieces, rbar: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (mut m1, mut m0) = gamma_regressions(&reg, frame, q1, q0)?;
        gamma_step(frame, pi, q1, &mut m1)?;
        gamma_step(frame, pi, q0, &mut m0)?;
        let cbar: Vec<f64> = m1.iter().zip(&m0).map(|(a, b)| a - b).collect();
        let psi = mean(&cbar);
        Ok((psi, components(frame, pi, pieces, rbar, &cbar, psi).sum()))
    };

    let mut k = 0;
    loop {
        q_step(frame, &pi, g1, &mut q1, &mut q0)?;
        let pieces = Pieces::new(frame, g1, &q1, &q0);
        let rbar = reg.linear(&pieces.hr)?;
        let cov: Vec<f64> = rbar.iter().zip(&pi).map(|(r, p)| r / p).collect();
        pi = pi_step(frame, &pi, &cov, ns.trunc_pi.0)?;
        k += 1;

        // The Γ- and P_V-components have mean zero after the Γ-steps, so the
        // full EIC meets the threshold exactly when the Q- and Π-components do.
        let (psi, d) = finalize(&pi, &q1, &q0, &pieces, &rbar)?;
        let converged = score_solved(&d);
        if converged || k >= opts.max_outer_iter {
            return s.finish(EstimatorId::TmleAlt, psi, &d, k, converged);
        }
    }
}
