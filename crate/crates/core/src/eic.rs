//! Efficient influence curve evaluations: the full-data EIC, the observed-data
//! EIC in augmented-IPCW form and as a sum of four components, the slope of the
//! fluctuated full-data EIC, and EIC-based variance.

use crate::data::{Dataset, ObservedRecord};
use crate::error::{Error, Result};
use crate::nuisance::{Frame, MbarModel, NuisanceSet, Predictor};

/// `H(a, w) = a / g(1|w) - (1 - a) / g(0|w)`.
pub fn clever_covariate(a: u8, g1: f64) -> f64 {
    if a == 1 {
        1.0 / g1
    } else {
        -1.0 / (1.0 - g1)
    }
}

/// Clever covariate evaluated through a treatment-mechanism predictor on W features.
pub fn clever_covariate_at(a: u8, w: &[f64], g: &dyn Predictor) -> f64 {
    clever_covariate(a, g.predict(w))
}

/// Per-row building blocks of the full-data EIC (phase-2 rows).
#[derive(Debug, Clone)]
pub(crate) struct Pieces {
    /// H(A, W)
    pub h: Vec<f64>,
    /// H(A, W) (Y - Q(A, W))
    pub hr: Vec<f64>,
    /// Q(1, W) - Q(0, W)
    pub contrast: Vec<f64>,
}

impl Pieces {
    pub fn new(frame: &Frame, g1: &[f64], q1: &[f64], q0: &[f64]) -> Pieces {
        let n2 = frame.n2();
        let mut h = Vec::with_capacity(n2);
        let mut hr = Vec::with_capacity(n2);
        let mut contrast = Vec::with_capacity(n2);
        for (j, &i) in frame.phase2.iter().enumerate() {
            let a = frame.a[i];
            let hj = clever_covariate(a, g1[j]);
            let qa = if a == 1 { q1[j] } else { q0[j] };
            h.push(hj);
            hr.push(hj * (frame.y[i] - qa));
            contrast.push(q1[j] - q0[j]);
        }
        Pieces { h, hr, contrast }
    }

    /// Uncentered full-data EIC `H (Y - Q(A)) + Q(1) - Q(0)`.
    pub fn dbar(&self) -> Vec<f64> {
        self.hr.iter().zip(&self.contrast).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullDataEic {
    pub h: Vec<f64>,
    pub dbar_f: Vec<f64>,
    pub d_f: Vec<f64>,
}

fn q_at(q: &dyn Predictor, a: u8, w: &[f64]) -> f64 {
    let mut x = Vec::with_capacity(w.len() + 1);
    x.push(f64::from(a));
    x.extend_from_slice(w);
    q.predict(&x)
}

/// Full-data EIC `(D̄^F, D^F)` of one phase-2 record.
pub fn fulldata_eic_record(rec: &ObservedRecord, q: &dyn Predictor, g: &dyn Predictor, psi: f64) -> Result<(f64, f64)> {
    let w = rec
        .w_features()
        .ok_or_else(|| Error::InvalidInput("full-data EIC requested for a delta=0 record".into()))?;
    let h = clever_covariate_at(rec.a, &w, g);
    let dbar = h * (rec.y - q_at(q, rec.a, &w)) + q_at(q, 1, &w) - q_at(q, 0, &w);
    Ok((dbar, dbar - psi))
}

/// Full-data EIC over the phase-2 rows of `ds`, in dataset order.
pub fn fulldata_eic(ds: &Dataset, q: &dyn Predictor, g: &dyn Predictor, psi: f64) -> FullDataEic {
    let mut out = FullDataEic {
        h: Vec::new(),
        dbar_f: Vec::new(),
        d_f: Vec::new(),
    };
    for rec in ds.records().iter().filter(|r| r.delta) {
        let (dbar, d) = fulldata_eic_record(rec, q, g, psi).expect("phase-2 record");
        out.h.push(clever_covariate_at(rec.a, &rec.w_features().expect("phase-2 record"), g));
        out.dbar_f.push(dbar);
        out.d_f.push(d);
    }
    out
}

/// Observed-data EIC in the rearranged A-IPCW form
/// `Δ/Π (D̄^F − m̄) + m̄ − ψ` with an uncentered `m̄`.
pub(crate) fn aipcw_eic(frame: &Frame, pi: &[f64], dbar: &[f64], mbar: &[f64], psi: f64) -> Vec<f64> {
    let mut d: Vec<f64> = mbar.iter().map(|m| m - psi).collect();
    for (j, &i) in frame.phase2.iter().enumerate() {
        d[i] += (dbar[j] - mbar[i]) / pi[i];
    }
    d
}

/// The four-component decomposition of the observed-data EIC.
#[derive(Debug, Clone, PartialEq)]
pub struct EicComponents {
    pub q_comp: Vec<f64>,
    pub pi_comp: Vec<f64>,
    pub gamma_comp: Vec<f64>,
    pub pv_comp: Vec<f64>,
}

impl EicComponents {
    pub fn sum(&self) -> Vec<f64> {
        (0..self.q_comp.len())
            .map(|i| self.q_comp[i] + self.pi_comp[i] + self.gamma_comp[i] + self.pv_comp[i])
            .collect()
    }
}

/// Components built from the residual regression `r̄ = E[H(Y−Q)|Δ=1,V]` and the
/// contrast regression `c̄ = E[Q(1,W)−Q(0,W)|Δ=1,V]`.
pub(crate) fn components(frame: &Frame, pi: &[f64], pieces: &Pieces, rbar: &[f64], cbar: &[f64], psi: f64) -> EicComponents {
    let n = frame.n;
    let mut q_comp = vec![0.0; n];
    let mut gamma_comp = vec![0.0; n];
    let mut pi_comp = vec![0.0; n];
    let pv_comp: Vec<f64> = cbar.iter().map(|c| c - psi).collect();
    for i in 0..n {
        let delta = if frame.delta[i] { 1.0 } else { 0.0 };
        pi_comp[i] = -(delta - pi[i]) / pi[i] * rbar[i];
    }
    for (j, &i) in frame.phase2.iter().enumerate() {
        q_comp[i] = pieces.hr[j] / pi[i];
        gamma_comp[i] = (pieces.contrast[j] - cbar[i]) / pi[i];
    }
    EicComponents {
        q_comp,
        pi_comp,
        gamma_comp,
        pv_comp,
    }
}

const CONSISTENCY_TOL: f64 = 1e-8;

/// Compares the two EIC representations; every row in debug builds, 1% of rows otherwise.
pub(crate) fn check_consistency(d_obs: &[f64], comps: &EicComponents) -> Result<()> {
    let stride = if cfg!(debug_assertions) { 1 } else { 100 };
    for i in (0..d_obs.len()).step_by(stride) {
        let sum = comps.q_comp[i] + comps.pi_comp[i] + comps.gamma_comp[i] + comps.pv_comp[i];
        let gap = (sum - d_obs[i]).abs();
        if gap > CONSISTENCY_TOL * (1.0 + d_obs[i].abs()) {
            return Err(Error::Consistency { row: i, gap });
        }
    }
    Ok(())
}

/// Full evaluation of the observed-data EIC at a nuisance set and centering value.
#[derive(Debug, Clone, PartialEq)]
pub struct EicEvaluation {
    /// `H(A,W)`; `None` on phase-1-only rows.
    pub h: Vec<Option<f64>>,
    pub dbar_f: Vec<Option<f64>>,
    pub d_f: Vec<Option<f64>>,
    pub d_obs: Vec<f64>,
    pub components: EicComponents,
    pub psi: f64,
}

/// Evaluates the observed-data EIC in both representations and checks they agree.
///
/// With a fitted `mbar`, the three regressions of D̄^F, H(Y−Q) and Q(1)−Q(0) on V are
/// fit separately; with a fixed `mbar`, the contrast regression is taken as `m̄ − r̄`.
pub fn observed_eic(ds: &Dataset, ns: &NuisanceSet, psi: f64, mbar: &MbarModel) -> Result<EicEvaluation> {
    let frame = Frame::new(ds);
    let ev = ns.evaluate(&frame);
    let pieces = Pieces::new(&frame, &ev.g1, &ev.q1, &ev.q0);
    let dbar = pieces.dbar();
    let m = mbar.evaluate(&frame, &dbar)?;
    let (rbar, cbar) = match mbar {
        MbarModel::Fit(_) => (mbar.evaluate(&frame, &pieces.hr)?, mbar.evaluate(&frame, &pieces.contrast)?),
        MbarModel::Fixed(_) => {
            let spec = crate::nuisance::LearnerSpec::default();
            let rbar = MbarModel::Fit(spec).evaluate(&frame, &pieces.hr)?;
            let cbar = m.iter().zip(&rbar).map(|(m, r)| m - r).collect();
            (rbar, cbar)
        }
    };
    let d_obs = aipcw_eic(&frame, &ev.pi, &dbar, &m, psi);
    let comps = components(&frame, &ev.pi, &pieces, &rbar, &cbar, psi);
    check_consistency(&d_obs, &comps)?;

    let mut h = vec![None; frame.n];
    let mut dbar_f = vec![None; frame.n];
    let mut d_f = vec![None; frame.n];
    for (j, &i) in frame.phase2.iter().enumerate() {
        h[i] = Some(pieces.h[j]);
        dbar_f[i] = Some(dbar[j]);
        d_f[i] = Some(dbar[j] - psi);
    }
    Ok(EicEvaluation {
        h,
        dbar_f,
        d_f,
        d_obs,
        components: comps,
        psi,
    })
}

/// Fluctuation submodel along which the full-data EIC is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Submodel {
    /// `Q_ε = Q + ε H`
    Linear,
    /// `logit Q_ε = logit Q + ε H`
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedEic {
    /// d D̄^F_ε / dε at ε = 0, per phase-2 row.
    pub slope: Vec<f64>,
    /// `J(A, W) = Q(A, W)(1 − Q(A, W))`, per phase-2 row.
    pub j: Vec<f64>,
}

/// Slope of the fluctuated uncentered full-data EIC at ε = 0 for one record.
pub(crate) fn slope_at(a: u8, g1: f64, q1: f64, q0: f64, submodel: Submodel) -> (f64, f64) {
    let h1 = clever_covariate(1, g1);
    let h0 = clever_covariate(0, g1);
    let (ha, qa) = if a == 1 { (h1, q1) } else { (h0, q0) };
    let ja = qa * (1.0 - qa);
    let slope = match submodel {
        Submodel::Linear => h1 - h0 - ha * ha,
        Submodel::Logistic => q1 * (1.0 - q1) * h1 - q0 * (1.0 - q0) * h0 - ja * ha * ha,
    };
    (slope, ja)
}

pub fn linearized_slope(ds: &Dataset, q: &dyn Predictor, g: &dyn Predictor, submodel: Submodel) -> LinearizedEic {
    let mut out = LinearizedEic {
        slope: Vec::new(),
        j: Vec::new(),
    };
    for rec in ds.records().iter().filter(|r| r.delta) {
        let w = rec.w_features().expect("phase-2 record");
        let (s, j) = slope_at(rec.a, g.predict(&w), q_at(q, 1, &w), q_at(q, 0, &w), submodel);
        out.slope.push(s);
        out.j.push(j);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EicVariance {
    pub sigma2: f64,
    pub se: f64,
}

impl EicVariance {
    pub fn ci95(&self, psi: f64) -> (f64, f64) {
        (psi - 1.96 * self.se, psi + 1.96 * self.se)
    }
}

/// Unbiased sample variance of the EIC values and the implied standard error.
pub fn eic_variance(d: &[f64]) -> Result<EicVariance> {
    let n = d.len();
    if n < 2 {
        return Err(Error::InvalidInput("EIC variance needs at least two records".into()));
    }
    // shifted two-pass: exact for constant input
    let shift = d[0];
    let mean = d.iter().map(|x| x - shift).sum::<f64>() / n as f64;
    let sigma2 = d
        .iter()
        .map(|x| {
            let c = x - shift - mean;
            c * c
        })
        .sum::<f64>()
        / (n - 1) as f64;
    Ok(EicVariance {
        sigma2,
        se: (sigma2 / n as f64).sqrt(),
    })
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Stopping threshold `σ / (√n · log n)` for iterative targeting.
pub fn convergence_threshold(sigma: f64, n: usize) -> f64 {
    let n = n as f64;
    sigma / (n.sqrt() * n.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, YKind};
    use crate::glm::{expit, logit};
    use crate::nuisance::{constant, fix_known, LearnerSpec, SharedPredictor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn clever_covariate_values() {
        assert_eq!(clever_covariate(1, 0.5), 2.0);
        assert_eq!(clever_covariate(0, 0.5), -2.0);
        assert_eq!(clever_covariate(1, 0.25), 4.0);
        assert!((clever_covariate(0, 0.25) + 1.0 / 0.75).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g: f64 = rng.random_range(0.01..0.99);
            assert!((clever_covariate(1, g) * g - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_record_hand_arithmetic() {
        let rec = ObservedRecord::phase2(vec![0.0], vec![0.0], 1, 1.0);
        let half = fix_known(|_| 0.5, (0.01, 0.99));
        let (dbar, d) = fulldata_eic_record(&rec, half.as_ref(), half.as_ref(), 0.0).unwrap();
        assert_eq!(dbar, 1.0);
        assert_eq!(d, 1.0);
        let rec0 = ObservedRecord::phase1(vec![0.0], 1, 1.0);
        assert!(fulldata_eic_record(&rec0, half.as_ref(), half.as_ref(), 0.0).is_err());
    }

    #[test]
    fn exact_q_gives_zero_mean() {
        // Q(a, w) = expit(w + a); Y set to Q(A, W) exactly
        let q: SharedPredictor = fix_known(|x: &[f64]| expit(x[1] + x[0]), (0.0, 1.0));
        let g = fix_known(|x: &[f64]| expit(0.3 * x[0]), (0.01, 0.99));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<ObservedRecord> = (0..50)
            .map(|_| {
                let w: f64 = rng.random_range(-1.0..1.0);
                let a = u8::from(rng.random::<bool>());
                ObservedRecord::phase2(vec![w], vec![], a, expit(w + f64::from(a)))
            })
            .collect();
        let psi = records
            .iter()
            .map(|r| expit(r.w1[0] + 1.0) - expit(r.w1[0]))
            .sum::<f64>()
            / 50.0;
        let mut schema = Schema::generated(1, 0, YKind::Continuous);
        schema.y_bounds = Some((0.0, 1.0));
        let ds = Dataset::new(records, schema).unwrap();
        let f = fulldata_eic(&ds, q.as_ref(), g.as_ref(), psi);
        assert!(mean(&f.d_f).abs() < 1e-12);
    }

    fn random_instance(seed: u64, n: usize) -> (Dataset, NuisanceSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<ObservedRecord> = (0..n)
            .map(|_| {
                let w1 = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let a = u8::from(rng.random::<f64>() < 0.4);
                let y = f64::from(u8::from(rng.random::<f64>() < 0.5));
                if rng.random::<f64>() < 0.6 {
                    ObservedRecord::phase2(w1, vec![rng.random_range(-1.0..1.0)], a, y)
                } else {
                    ObservedRecord::phase1(w1, a, y)
                }
            })
            .collect();
        let ds = Dataset::new(records, Schema::generated(2, 1, YKind::Binary)).unwrap();
        let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let ns = NuisanceSet {
            pi: fix_known(move |v: &[f64]| expit(0.2 + c[0] * v[0] + 0.5 * v[3]), (0.01, 1.0)),
            g: fix_known(move |w: &[f64]| expit(c[1] * w[0] - w[2]), (0.01, 0.99)),
            q: fix_known(move |x: &[f64]| expit(-0.3 + 0.8 * x[0] + c[2] * x[1] + x[3]), (0.0, 1.0)),
            mbar: MbarModel::default(),
            q_spec: LearnerSpec::default(),
            trunc_pi: (0.01, 1.0),
            trunc_g: (0.01, 0.99),
        };
        (ds, ns)
    }

    #[test]
    fn representations_agree_on_random_instances() {
        for seed in 0..20 {
            let (ds, ns) = random_instance(seed, 60);
            let ev = observed_eic(&ds, &ns, 0.1 * seed as f64, &ns.mbar).unwrap();
            for (a, b) in ev.components.sum().iter().zip(&ev.d_obs) {
                assert!((a - b).abs() < 1e-10);
            }
            for (i, rec) in ds.records().iter().enumerate() {
                if !rec.delta {
                    assert_eq!(ev.components.q_comp[i], 0.0);
                    assert_eq!(ev.components.gamma_comp[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn unit_pi_reduces_to_full_data_eic() {
        let (ds, mut ns) = random_instance(3, 40);
        let records: Vec<ObservedRecord> = ds
            .records()
            .iter()
            .map(|r| ObservedRecord::phase2(r.w1.clone(), vec![0.5], r.a, r.y))
            .collect();
        let ds = ds.with_records(records).unwrap();
        ns.pi = fix_known(|_| 1.0, (0.01, 1.0));
        let ev = observed_eic(&ds, &ns, 0.2, &ns.mbar).unwrap();
        for (d, df) in ev.d_obs.iter().zip(&ev.d_f) {
            assert!((d - df.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mbar_is_weighted_full_data_eic() {
        let (ds, ns) = random_instance(4, 40);
        let psi = 0.05;
        let ev = observed_eic(&ds, &ns, psi, &MbarModel::Fixed(constant(0.0))).unwrap();
        for (i, rec) in ds.records().iter().enumerate() {
            let pi = ns.pi.predict(&rec.v_features());
            let expected = match ev.dbar_f[i] {
                Some(dbar) => dbar / pi - psi,
                None => -psi,
            };
            assert!((ev.d_obs[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn five_record_hand_oracle() {
        // Π, g, Q and m̄ fixed; values computed from the displayed A-IPCW formula.
        let records = vec![
            ObservedRecord::phase2(vec![0.0], vec![1.0], 1, 1.0),
            ObservedRecord::phase2(vec![1.0], vec![0.0], 0, 0.0),
            ObservedRecord::phase1(vec![0.5], 1, 0.0),
            ObservedRecord::phase2(vec![-1.0], vec![2.0], 0, 1.0),
            ObservedRecord::phase1(vec![2.0], 0, 1.0),
        ];
        let ds = Dataset::new(records, Schema::generated(1, 1, YKind::Binary)).unwrap();
        let ns = NuisanceSet {
            pi: fix_known(|_| 0.5, (0.01, 1.0)),
            g: fix_known(|_| 0.25, (0.01, 0.99)),
            q: fix_known(|x: &[f64]| if x[0] == 1.0 { 0.6 } else { 0.4 }, (0.0, 1.0)),
            mbar: MbarModel::Fixed(constant(0.3)),
            q_spec: LearnerSpec::default(),
            trunc_pi: (0.01, 1.0),
            trunc_g: (0.01, 0.99),
        };
        let ev = observed_eic(&ds, &ns, 0.1, &ns.mbar).unwrap();
        // row 1: H=4, D̄ = 4(1-0.6)+0.2 = 1.8;   D = 2(1.8-0.3)+0.3-0.1 = 3.2
        // row 2: H=-4/3, D̄ = -4/3(0-0.4)+0.2;   D = 2(D̄-0.3)+0.2
        // rows 3, 5: D = 0.3 - 0.1
        // row 4: H=-4/3, D̄ = -4/3(1-0.4)+0.2 = -0.6; D = 2(-0.9)+0.2 = -1.6
        let d2 = 2.0 * (4.0 / 3.0 * 0.4 + 0.2 - 0.3) + 0.2;
        let expected = [3.2, d2, 0.2, -1.6, 0.2];
        for (a, b) in ev.d_obs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn slope_examples() {
        let (s, j) = slope_at(1, 0.5, 0.5, 0.5, Submodel::Logistic);
        assert_eq!(j, 0.25);
        assert_eq!(s, 0.0);
        for a in [0, 1] {
            assert_eq!(slope_at(a, 0.5, 0.3, 0.8, Submodel::Linear).0, 0.0);
        }
    }

    fn fluctuated_dbar(a: u8, y: f64, g1: f64, q1: f64, q0: f64, eps: f64) -> f64 {
        let f1 = expit(logit(q1) + eps * clever_covariate(1, g1));
        let f0 = expit(logit(q0) + eps * clever_covariate(0, g1));
        let fa = if a == 1 { f1 } else { f0 };
        clever_covariate(a, g1) * (y - fa) + f1 - f0
    }

    #[test]
    fn slope_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let a = u8::from(rng.random::<bool>());
            let y: f64 = rng.random();
            let g1 = rng.random_range(0.05..0.95);
            let q1 = rng.random_range(0.02..0.98);
            let q0 = rng.random_range(0.02..0.98);
            let e = 1e-5;
            let fd = (fluctuated_dbar(a, y, g1, q1, q0, e) - fluctuated_dbar(a, y, g1, q1, q0, -e)) / (2.0 * e);
            let (s, _) = slope_at(a, g1, q1, q0, Submodel::Logistic);
            assert!((fd - s).abs() <= 1e-6 * s.abs().max(1.0), "{fd} vs {s}");
        }
    }

    #[test]
    fn variance_examples() {
        let v = eic_variance(&[0.3; 10]).unwrap();
        assert_eq!(v.sigma2, 0.0);
        assert_eq!(v.ci95(1.0), (1.0, 1.0));
        let v = eic_variance(&[-1.0, 1.0]).unwrap();
        assert_eq!(v.sigma2, 2.0);
        assert_eq!(v.se, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!((eic_variance(&d).unwrap().sigma2 - 1.0).abs() < 0.05);
        assert!(eic_variance(&[1.0]).is_err());
    }
}
