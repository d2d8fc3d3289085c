use crate::data::Dataset;
use crate::eic::{aipcw_eic, mean, slope_at, Pieces, Submodel};
use crate::error::Result;
use crate::glm::{expit, logit_clipped};
use crate::nuisance::NuisanceSet;

use super::{hajek_plugin, EstimateResult, EstimatorId, Mode, Setup, VRegressor};

/// Solution of the estimating equation `P_n D = 0` at the initial nuisances.
pub fn estimate_aipcw(ds: &Dataset, ns: &NuisanceSet) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let frame = &s.frame;
    let dbar = Pieces::new(frame, &s.ev.g1, &s.ev.q1, &s.ev.q0).dbar();
    let mbar = VRegressor::new(&ns.mbar, frame).mbar(&dbar)?;
    let uncentered = aipcw_eic(frame, &s.ev.pi, &dbar, &mbar, 0.0);
    let psi = mean(&uncentered);
    let d: Vec<f64> = uncentered.iter().map(|v| v - psi).collect();
    s.finish(EstimatorId::Aipcw, psi, &d, 0, true)
}

/// m̄ shifted by the Δ/Π-weighted mean residual, then averaged over all records.
pub fn estimate_eee(ds: &Dataset, ns: &NuisanceSet) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let frame = &s.frame;
    let pi = &s.ev.pi;
    let dbar = Pieces::new(frame, &s.ev.g1, &s.ev.q1, &s.ev.q0).dbar();
    let mbar = VRegressor::new(&ns.mbar, frame).mbar(&dbar)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (j, &i) in frame.phase2.iter().enumerate() {
        num += (dbar[j] - mbar[i]) / pi[i];
        den += 1.0 / pi[i];
    }
    let zeta = num / den;
    let targeted: Vec<f64> = mbar.iter().map(|m| m + zeta).collect();
    let psi = mean(&targeted);
    let d = aipcw_eic(frame, pi, &dbar, &targeted, psi);
    s.finish(EstimatorId::Eee, psi, &d, 0, true)
}

const QUASI_TOL: f64 = 1e-10;
const QUASI_BRACKET: f64 = 10.0;
const QUASI_MAX_ITER: usize = 100;

struct QuasiPoint {
    f: f64,
    psi: f64,
    dbar: Vec<f64>,
    mbar_star: Vec<f64>,
}

/// Plug-in estimator solving the EIC equation along a Q-fluctuation ε and an
/// m̄-shift γ(ε) chosen so that `P_n m̄_{ε,γ} = Ψ(Q_ε)`; ε is found by secant.
pub fn estimate_quasi_tmle(ds: &Dataset, ns: &NuisanceSet, mode: Mode) -> Result<EstimateResult> {
    let s = Setup::new(ds, ns)?;
    let frame = &s.frame;
    let (pi, g1) = (&s.ev.pi, &s.ev.g1);
    let reg = VRegressor::new(&ns.mbar, frame);
    let n = frame.n as f64;
    let lq1: Vec<f64> = s.ev.q1.iter().map(|&q| logit_clipped(q)).collect();
    let lq0: Vec<f64> = s.ev.q0.iter().map(|&q| logit_clipped(q)).collect();
    let pn_w = frame.phase2.iter().map(|&i| 1.0 / pi[i]).sum::<f64>() / n;
    let pn_w2 = frame.phase2.iter().map(|&i| 1.0 / (pi[i] * pi[i])).sum::<f64>() / n;

    let linear = match mode {
        Mode::Refit => None,
        Mode::Linearized => {
            let dbar0 = Pieces::new(frame, g1, &s.ev.q1, &s.ev.q0).dbar();
            let slope0: Vec<f64> = frame
                .phase2
                .iter()
                .enumerate()
                .map(|(j, &i)| slope_at(frame.a[i], g1[j], s.ev.q1[j], s.ev.q0[j], Submodel::Logistic).0)
                .collect();
            Some((reg.mbar(&dbar0)?, reg.slope(&slope0)?))
        }
    };

    let eval = |eps: f64| -> Result<QuasiPoint> {
        let q1: Vec<f64> = lq1.iter().zip(g1).map(|(l, g)| expit(l + eps / g)).collect();
        let q0: Vec<f64> = lq0.iter().zip(g1).map(|(l, g)| expit(l - eps / (1.0 - g))).collect();
        let dbar = Pieces::new(frame, g1, &q1, &q0).dbar();
        let mbar = match &linear {
            None => reg.mbar(&dbar)?,
            Some((m0, md)) => m0.iter().zip(md).map(|(m, d)| m + eps * d).collect(),
        };
        let psi = hajek_plugin(frame, pi, &q1, &q0);
        let gamma = (psi - mean(&mbar)) / pn_w;
        let resid = frame
            .phase2
            .iter()
            .enumerate()
            .map(|(j, &i)| (dbar[j] - mbar[i]) / pi[i])
            .sum::<f64>()
            / n;
        let mut mbar_star = mbar;
        for &i in &frame.phase2 {
            mbar_star[i] += gamma / pi[i];
        }
        Ok(QuasiPoint {
            f: resid - gamma * pn_w2,
            psi,
            dbar,
            mbar_star,
        })
    };

    let (point, iters, solved) = solve_secant(&eval)?;
    let d = aipcw_eic(frame, pi, &point.dbar, &point.mbar_star, point.psi);
    s.finish(EstimatorId::QuasiTmle(mode), point.psi, &d, iters, solved)
}

/// Secant from ε = 0 inside `[-10, 10]`, with bisection as the fallback.
fn solve_secant(eval: &dyn Fn(f64) -> Result<QuasiPoint>) -> Result<(QuasiPoint, usize, bool)> {
    let p0 = eval(0.0)?;
    if p0.f.abs() <= QUASI_TOL {
        return Ok((p0, 0, true));
    }
    let mut best = (0.0, p0.f.abs());
    let (mut x0, mut f0) = (0.0, p0.f);
    let mut x1 = 1e-3 * -f0.signum();
    let mut p1 = eval(x1)?;
    for it in 1..=QUASI_MAX_ITER {
        if p1.f.abs() < best.1 {
            best = (x1, p1.f.abs());
        }
        if p1.f.abs() <= QUASI_TOL {
            return Ok((p1, it, true));
        }
        let denom = p1.f - f0;
        if denom == 0.0 {
            break;
        }
        let x2 = x1 - p1.f * (x1 - x0) / denom;
        if !x2.is_finite() || x2.abs() > QUASI_BRACKET {
            break;
        }
        (x0, f0) = (x1, p1.f);
        x1 = x2;
        p1 = eval(x1)?;
    }

    let (mut lo, mut hi) = (-QUASI_BRACKET, QUASI_BRACKET);
    let (flo, fhi) = (eval(lo)?.f, eval(hi)?.f);
    if flo.signum() == fhi.signum() {
        let p = eval(best.0)?;
        return Ok((p, QUASI_MAX_ITER, false));
    }
    let mut flo_sign = flo.signum();
    for it in 0..200 {
        let mid = 0.5 * (lo + hi);
        let p = eval(mid)?;
        if p.f.abs() <= QUASI_TOL || hi - lo < 1e-14 {
            let ok = p.f.abs() <= QUASI_TOL;
            return Ok((p, QUASI_MAX_ITER + it, ok));
        }
        if p.f.signum() == flo_sign {
            lo = mid;
            flo_sign = p.f.signum();
        } else {
            hi = mid;
        }
    }
    let p = eval(0.5 * (lo + hi))?;
    let ok = p.f.abs() <= QUASI_TOL;
    Ok((p, QUASI_MAX_ITER + 200, ok))
}
