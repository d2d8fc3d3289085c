//! The eight ATE estimators and their shared targeting steps.
//!
//! Every estimator works on a dataset whose outcome is scaled to `[0, 1]` and
//! reports the effect, its standard error and the EIC diagnostics on the raw
//! outcome scale.

mod onestep;
mod rake;
mod raking;
mod tmle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{scale_outcome, Dataset, OutcomeScale};
use crate::eic::{convergence_threshold, eic_variance, mean};
use crate::error::{Error, Result};
use crate::glm::{expit, fit_fluctuation, logit_clipped};
use crate::nuisance::{fit_nuisances, Evaluated, Frame, NuisanceConfig, NuisanceSet};

pub use onestep::{estimate_aipcw, estimate_eee, estimate_quasi_tmle};
pub use rake::{rake_weights, rake_weights_multi, MultiRakeSolution, RakeSolution};
pub use raking::estimate_raking;
pub use tmle::{estimate_ipcw_tmle, estimate_ipcw_tmle_rake_pi, estimate_ipcw_tmle_target_pi, estimate_tmle_alt};

/// How regressions of the fluctuated full-data EIC on V are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Re-fit at every fluctuation.
    #[default]
    Refit,
    /// First-order expansion around the initial fit; regressions fit once.
    Linearized,
}

/// Estimator selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorId {
    Aipcw,
    IpcwTmle,
    IpcwTmleTargetPi(Mode),
    IpcwTmleRakePi,
    Raking,
    Eee,
    QuasiTmle(Mode),
    TmleAlt,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 8] = [
        EstimatorId::Aipcw,
        EstimatorId::IpcwTmle,
        EstimatorId::IpcwTmleTargetPi(Mode::Refit),
        EstimatorId::IpcwTmleRakePi,
        EstimatorId::Raking,
        EstimatorId::Eee,
        EstimatorId::QuasiTmle(Mode::Refit),
        EstimatorId::TmleAlt,
    ];

    /// Plug-in estimators that iterate to solve the EIC equation.
    pub fn is_tmle_family(&self) -> bool {
        matches!(
            self,
            EstimatorId::IpcwTmle
                | EstimatorId::IpcwTmleTargetPi(_)
                | EstimatorId::IpcwTmleRakePi
                | EstimatorId::QuasiTmle(_)
                | EstimatorId::TmleAlt
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::Aipcw => "aipcw",
            EstimatorId::IpcwTmle => "ipcw_tmle",
            EstimatorId::IpcwTmleTargetPi(Mode::Refit) => "ipcw_tmle_target_pi",
            EstimatorId::IpcwTmleTargetPi(Mode::Linearized) => "ipcw_tmle_target_pi_linearized",
            EstimatorId::IpcwTmleRakePi => "ipcw_tmle_rake_pi",
            EstimatorId::Raking => "raking",
            EstimatorId::Eee => "eee",
            EstimatorId::QuasiTmle(Mode::Refit) => "quasi_tmle",
            EstimatorId::QuasiTmle(Mode::Linearized) => "quasi_tmle_linearized",
            EstimatorId::TmleAlt => "tmle_alt",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = EstimatorId::ALL
            .into_iter()
            .chain([EstimatorId::IpcwTmleTargetPi(Mode::Linearized), EstimatorId::QuasiTmle(Mode::Linearized)]);
        for id in all {
            if id.as_str() == s {
                return Ok(id);
            }
        }
        Err(Error::Config(format!("unknown estimator '{s}'")))
    }
}

impl Serialize for EstimatorId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EstimatorId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("unknown estimator '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOptions {
    #[serde(default = "default_max_outer_iter")]
    pub max_outer_iter: usize,
}

fn default_max_outer_iter() -> usize {
    50
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            max_outer_iter: default_max_outer_iter(),
        }
    }
}

/// Point estimate, EIC-based inference and solver diagnostics, on the raw outcome scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimator: EstimatorId,
    pub psi_hat: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    /// `|P_n D|` at the final fit.
    pub eic_mean_abs: f64,
    /// `σ_n / (√n log n)` at the final fit.
    pub threshold: f64,
    pub n_outer_iterations: usize,
    pub converged: bool,
}

/// Scales the outcome, fits the nuisances and runs one estimator.
pub fn estimate(ds: &Dataset, cfg: &NuisanceConfig, id: EstimatorId, opts: &EstimatorOptions) -> Result<EstimateResult> {
    let scaled = scale_outcome(ds)?;
    let ns = fit_nuisances(&scaled, cfg)?;
    run(&scaled, &ns, id, opts)
}

/// Runs one estimator on a scaled dataset with fitted nuisances.
pub fn run(ds: &Dataset, ns: &NuisanceSet, id: EstimatorId, opts: &EstimatorOptions) -> Result<EstimateResult> {
    match id {
        EstimatorId::Aipcw => estimate_aipcw(ds, ns),
        EstimatorId::IpcwTmle => estimate_ipcw_tmle(ds, ns),
        EstimatorId::IpcwTmleTargetPi(mode) => estimate_ipcw_tmle_target_pi(ds, ns, mode, opts),
        EstimatorId::IpcwTmleRakePi => estimate_ipcw_tmle_rake_pi(ds, ns, opts),
        EstimatorId::Raking => estimate_raking(ds, ns),
        EstimatorId::Eee => estimate_eee(ds, ns),
        EstimatorId::QuasiTmle(mode) => estimate_quasi_tmle(ds, ns, mode),
        EstimatorId::TmleAlt => estimate_tmle_alt(ds, ns, opts),
    }
}

/// Column view plus initial nuisance evaluations.
pub(crate) struct Setup {
    pub frame: Frame,
    pub ev: Evaluated,
    pub scale: OutcomeScale,
}

impl Setup {
    pub fn new(ds: &Dataset, ns: &NuisanceSet) -> Result<Setup> {
        if !ds.is_scaled() {
            return Err(Error::InvalidInput(
                "estimators expect an outcome scaled to [0, 1]; call scale_outcome first".into(),
            ));
        }
        let frame = Frame::new(ds);
        let ev = ns.evaluate(&frame);
        if let Some(p) = ev.pi.iter().find(|p| !(**p > 0.0)) {
            return Err(Error::InvalidInput(format!("sampling probability {p} is not positive")));
        }
        Ok(Setup {
            frame,
            ev,
            scale: ds.outcome_scale(),
        })
    }

    /// Packs a scaled-outcome estimate and its influence values into a result.
    pub fn finish(&self, id: EstimatorId, psi: f64, d: &[f64], n_iter: usize, converged: bool) -> Result<EstimateResult> {
        let var = eic_variance(d)?;
        let k = self.scale.hi - self.scale.lo;
        let psi_hat = psi * k;
        let se = var.se * k;
        Ok(EstimateResult {
            estimator: id,
            psi_hat,
            se,
            ci95: (psi_hat - 1.96 * se, psi_hat + 1.96 * se),
            eic_mean_abs: mean(d).abs() * k,
            threshold: convergence_threshold(var.sigma2.sqrt(), d.len()) * k,
            n_outer_iterations: n_iter,
            converged,
        })
    }
}

/// Stopping check `|P_n D| ≤ σ_n/(√n log n)`.
pub(crate) fn score_solved(d: &[f64]) -> bool {
    let sigma = eic_variance(d).map(|v| v.sigma2.sqrt()).unwrap_or(0.0);
    mean(d).abs() <= convergence_threshold(sigma, d.len())
}

/// Weighted plug-in `Σ_{Δ=1} (Q(1)−Q(0))/Π / Σ_{Δ=1} 1/Π`.
pub(crate) fn hajek_plugin(frame: &Frame, pi: &[f64], q1: &[f64], q0: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &i) in frame.phase2.iter().enumerate() {
        num += (q1[j] - q0[j]) / pi[i];
        den += 1.0 / pi[i];
    }
    num / den
}

/// One logistic fluctuation of Q along H with weights Δ/Π; updates `q1`, `q0` in place.
pub(crate) fn q_step(frame: &Frame, pi: &[f64], g1: &[f64], q1: &mut [f64], q0: &mut [f64]) -> Result<f64> {
    let n2 = frame.n2();
    let mut y = Vec::with_capacity(n2);
    let mut off = Vec::with_capacity(n2);
    let mut h = Vec::with_capacity(n2);
    let mut w = Vec::with_capacity(n2);
    for (j, &i) in frame.phase2.iter().enumerate() {
        let a = frame.a[i];
        y.push(frame.y[i]);
        off.push(logit_clipped(if a == 1 { q1[j] } else { q0[j] }));
        h.push(crate::eic::clever_covariate(a, g1[j]));
        w.push(1.0 / pi[i]);
    }
    let eps = fit_fluctuation(&y, &off, &h, &w)?.epsilon;
    if eps != 0.0 {
        for j in 0..n2 {
            q1[j] = expit(logit_clipped(q1[j]) + eps / g1[j]);
            q0[j] = expit(logit_clipped(q0[j]) - eps / (1.0 - g1[j]));
        }
    }
    Ok(eps)
}

/// Rows whose sampling probability is numerically one carry no Π-score.
const PI_SATURATED: f64 = 1.0 - 1e-6;

/// One logistic fluctuation of Π with covariate `cov` over all rows; returns the update.
pub(crate) fn pi_step(frame: &Frame, pi: &[f64], cov: &[f64], floor: f64) -> Result<Vec<f64>> {
    let y: Vec<f64> = frame.delta.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect();
    let off: Vec<f64> = pi.iter().map(|&p| logit_clipped(p)).collect();
    let w: Vec<f64> = pi.iter().map(|&p| if p >= PI_SATURATED { 0.0 } else { 1.0 }).collect();
    let delta = fit_fluctuation(&y, &off, cov, &w)?.epsilon;
    Ok(pi
        .iter()
        .zip(off.iter().zip(cov))
        .zip(&w)
        .map(|((&p, (&o, &c)), &wi)| {
            if wi == 0.0 || delta == 0.0 {
                p
            } else {
                expit(o + delta * c).max(floor)
            }
        })
        .collect())
}

/// Regressions on V over phase-2 rows, as configured by the nuisance set.
pub(crate) struct VRegressor<'a> {
    model: &'a crate::nuisance::MbarModel,
    frame: &'a Frame,
}

impl<'a> VRegressor<'a> {
    pub fn new(model: &'a crate::nuisance::MbarModel, frame: &'a Frame) -> Self {
        VRegressor { model, frame }
    }

    /// m̄: the configured regression of the uncentered full-data EIC.
    pub fn mbar(&self, dbar: &[f64]) -> Result<Vec<f64>> {
        self.model.evaluate(self.frame, dbar)
    }

    /// A regression of auxiliary values that is linear in them. A fixed m̄ contributes
    /// nothing to derivatives, so slopes regress to zero under a fixed model.
    pub fn slope(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self.model {
            crate::nuisance::MbarModel::Fit(_) => self.model.evaluate(self.frame, values),
            crate::nuisance::MbarModel::Fixed(_) => Ok(vec![0.0; self.frame.n]),
        }
    }

    /// Linear regression of arbitrary phase-2 values with the m̄ learner (default when fixed).
    pub fn linear(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self.model {
            crate::nuisance::MbarModel::Fit(_) => self.model.evaluate(self.frame, values),
            crate::nuisance::MbarModel::Fixed(_) => crate::nuisance::MbarModel::default().evaluate(self.frame, values),
        }
    }

    pub fn spec(&self) -> crate::nuisance::LearnerSpec {
        match self.model {
            crate::nuisance::MbarModel::Fit(s) => s.clone(),
            crate::nuisance::MbarModel::Fixed(_) => crate::nuisance::LearnerSpec::default(),
        }
    }
}
