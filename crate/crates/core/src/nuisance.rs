//! Nuisance functions: the phase-2 sampling mechanism Π(V), the treatment
//! mechanism g(1|W), the outcome regression Q(A,W) and regressions on V over
//! phase-2 rows (m̄ and friends).
//!
//! Feature layouts are fixed: Π and every V-regression see `[w1.., a, y]`,
//! g sees `[w1.., w2..]`, Q sees `[a, w1.., w2..]`.

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;

use crate::data::{Dataset, ObservedRecord, Schema};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family, GlmFit};

pub const DEFAULT_TRUNC_PI: (f64, f64) = (0.01, 1.0);
pub const DEFAULT_TRUNC_G: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputRange {
    Probability,
    Real,
}

/// A fitted (or known) regression function.
pub trait Predictor: Send + Sync + fmt::Debug {
    fn predict(&self, features: &[f64]) -> f64;
    fn output_range(&self) -> OutputRange;
}

pub type SharedPredictor = Arc<dyn Predictor>;

/// GLM-backed predictor over a subset of the layout's columns.
#[derive(Debug, Clone)]
pub struct GlmPredictor {
    fit: GlmFit,
    columns: Option<Vec<usize>>,
    bounds: Option<(f64, f64)>,
}

impl GlmPredictor {
    pub fn fit(&self) -> &GlmFit {
        &self.fit
    }
}

impl Predictor for GlmPredictor {
    fn predict(&self, features: &[f64]) -> f64 {
        let raw = match &self.columns {
            None => self.fit.predict(features),
            Some(cols) => {
                let x: Vec<f64> = cols.iter().map(|&c| features[c]).collect();
                self.fit.predict(&x)
            }
        };
        match self.bounds {
            Some((lo, hi)) => raw.clamp(lo, hi),
            None => raw,
        }
    }

    fn output_range(&self) -> OutputRange {
        match self.fit.family {
            Family::Bernoulli => OutputRange::Probability,
            Family::Gaussian => OutputRange::Real,
        }
    }
}

type MechanismFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A closed-form mechanism supplied by the caller, clipped to its bounds.
#[derive(Clone)]
pub struct KnownMechanism {
    f: Arc<MechanismFn>,
    bounds: Option<(f64, f64)>,
    range: OutputRange,
}

impl fmt::Debug for KnownMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnownMechanism")
            .field("bounds", &self.bounds)
            .field("range", &self.range)
            .finish_non_exhaustive()
    }
}

impl Predictor for KnownMechanism {
    fn predict(&self, features: &[f64]) -> f64 {
        let v = (self.f)(features);
        match self.bounds {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    fn output_range(&self) -> OutputRange {
        self.range
    }
}

/// Wraps a known probability mechanism, still subject to truncation.
pub fn fix_known<F>(f: F, trunc: (f64, f64)) -> SharedPredictor
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(KnownMechanism {
        f: Arc::new(f),
        bounds: Some(trunc),
        range: OutputRange::Probability,
    })
}

/// Re-clips an arbitrary probability predictor to `trunc`.
pub fn truncated(inner: SharedPredictor, trunc: (f64, f64)) -> SharedPredictor {
    Arc::new(KnownMechanism {
        f: Arc::new(move |x: &[f64]| inner.predict(x)),
        bounds: Some(trunc),
        range: OutputRange::Probability,
    })
}

/// A real-valued constant function.
pub fn constant(c: f64) -> SharedPredictor {
    Arc::new(KnownMechanism {
        f: Arc::new(move |_: &[f64]| c),
        bounds: None,
        range: OutputRange::Real,
    })
}

/// Main-terms GLM learner over a column subset, with optional truncation override.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSpec {
    /// Column indices into the layout; `None` uses every column.
    #[serde(default)]
    pub columns: Option<Vec<usize>>,
    #[serde(default)]
    pub trunc: Option<(f64, f64)>,
}

impl LearnerSpec {
    /// Builds a spec selecting `names` from the layout `layout`.
    pub fn from_names(layout: &[String], names: &[String]) -> Result<Self> {
        let columns = names
            .iter()
            .map(|n| {
                layout
                    .iter()
                    .position(|l| l == n)
                    .ok_or_else(|| Error::Config(format!("unknown feature '{n}'; available: {}", layout.join(", "))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LearnerSpec {
            columns: Some(columns),
            trunc: None,
        })
    }

    pub(crate) fn select(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        match &self.columns {
            None => Ok(rows.to_vec()),
            Some(cols) => {
                let dim = rows.first().map_or(0, Vec::len);
                if let Some(&bad) = cols.iter().find(|&&c| c >= dim) {
                    return Err(Error::InvalidInput(format!(
                        "feature column {bad} out of range for a {dim}-column layout"
                    )));
                }
                Ok(rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect())
            }
        }
    }

    fn fit(&self, rows: &[Vec<f64>], y: &[f64], w: &[f64], family: Family, bounds: Option<(f64, f64)>) -> Result<GlmPredictor> {
        let x = self.select(rows)?;
        let fit = fit_glm(&x, y, w, family)?;
        Ok(GlmPredictor {
            fit,
            columns: self.columns.clone(),
            bounds: self.trunc.or(bounds),
        })
    }
}

pub fn v_layout(schema: &Schema) -> Vec<String> {
    let mut l = schema.w1.clone();
    l.push(schema.treatment.clone());
    l.push(schema.outcome.clone());
    l
}

pub fn w_layout(schema: &Schema) -> Vec<String> {
    schema.w1.iter().chain(&schema.w2).cloned().collect()
}

pub fn q_layout(schema: &Schema) -> Vec<String> {
    std::iter::once(schema.treatment.clone())
        .chain(w_layout(schema))
        .collect()
}

fn phase2_records(ds: &Dataset) -> impl Iterator<Item = &ObservedRecord> {
    ds.records().iter().filter(|r| r.delta)
}

fn check_pi_range(pi: &dyn Predictor) -> Result<()> {
    if pi.output_range() != OutputRange::Probability {
        return Err(Error::InvalidInput("sampling mechanism must be a probability predictor".into()));
    }
    Ok(())
}

/// Logistic regression of Δ on V over all records, truncated to `trunc`.
pub fn fit_pi(ds: &Dataset, spec: &LearnerSpec, trunc: (f64, f64)) -> Result<SharedPredictor> {
    let n2 = ds.n_phase2();
    if n2 == ds.n() {
        return Err(Error::Unidentifiable(
            "every record is in phase 2; the sampling mechanism cannot be fit".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = ds.records().iter().map(ObservedRecord::v_features).collect();
    let y: Vec<f64> = ds.records().iter().map(|r| f64::from(u8::from(r.delta))).collect();
    let w = vec![1.0; ds.n()];
    Ok(Arc::new(spec.fit(&rows, &y, &w, Family::Bernoulli, Some(trunc))?))
}

fn ipcw_rows(ds: &Dataset, pi: &dyn Predictor) -> Result<Vec<f64>> {
    check_pi_range(pi)?;
    phase2_records(ds)
        .map(|r| {
            let p = pi.predict(&r.v_features());
            if p > 0.0 && p.is_finite() {
                Ok(1.0 / p)
            } else {
                Err(Error::InvalidInput(format!("sampling probability {p} is not positive")))
            }
        })
        .collect()
}

/// Bernoulli regression of (scaled) Y on (A, W) over phase-2 rows, weighted by 1/Π.
pub fn fit_q_ipcw(ds: &Dataset, pi: &dyn Predictor, spec: &LearnerSpec) -> Result<SharedPredictor> {
    if !ds.is_scaled() {
        return Err(Error::InvalidInput("outcome must be scaled to [0, 1] before fitting Q".into()));
    }
    for arm in [0u8, 1] {
        let count = phase2_records(ds).filter(|r| r.a == arm).count();
        if count < 2 {
            return Err(Error::Unidentifiable(format!(
                "only {count} phase-2 records with A={arm}; Q({arm}, W) is not identified"
            )));
        }
    }
    let w = ipcw_rows(ds, pi)?;
    let rows: Vec<Vec<f64>> = phase2_records(ds)
        .map(|r| r.q_features(r.a).expect("phase-2 record"))
        .collect();
    let y: Vec<f64> = phase2_records(ds).map(|r| r.y).collect();
    Ok(Arc::new(spec.fit(&rows, &y, &w, Family::Bernoulli, None)?))
}

/// Logistic regression of A on W over phase-2 rows, weighted by 1/Π, truncated to `trunc`.
pub fn fit_g_ipcw(ds: &Dataset, pi: &dyn Predictor, spec: &LearnerSpec, trunc: (f64, f64)) -> Result<SharedPredictor> {
    for arm in [0u8, 1] {
        if !phase2_records(ds).any(|r| r.a == arm) {
            return Err(Error::Unidentifiable(format!("no phase-2 records with A={arm}")));
        }
    }
    let w = ipcw_rows(ds, pi)?;
    let rows: Vec<Vec<f64>> = phase2_records(ds)
        .map(|r| r.w_features().expect("phase-2 record"))
        .collect();
    let y: Vec<f64> = phase2_records(ds).map(|r| f64::from(r.a)).collect();
    Ok(Arc::new(spec.fit(&rows, &y, &w, Family::Bernoulli, Some(trunc))?))
}

/// Gaussian regression of per-phase-2-row `values` on V (Δ=1 rows only).
pub fn fit_mbar(ds: &Dataset, values: &[f64], spec: &LearnerSpec) -> Result<SharedPredictor> {
    let rows: Vec<Vec<f64>> = phase2_records(ds).map(ObservedRecord::v_features).collect();
    Ok(Arc::new(fit_v_regression(&rows, values, spec)?))
}

pub(crate) fn fit_v_regression(v_rows: &[Vec<f64>], values: &[f64], spec: &LearnerSpec) -> Result<GlmPredictor> {
    if values.len() != v_rows.len() {
        return Err(Error::InvalidInput(format!(
            "{} values supplied for {} phase-2 rows",
            values.len(),
            v_rows.len()
        )));
    }
    spec.fit(v_rows, values, &vec![1.0; values.len()], Family::Gaussian, None)
}

/// Fractional-response logistic regression of values in [0, 1] on V (Δ=1 rows only).
pub(crate) fn fit_v_probability(v_rows: &[Vec<f64>], values: &[f64], spec: &LearnerSpec) -> Result<GlmPredictor> {
    let y: Vec<f64> = values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    spec.fit(v_rows, &y, &vec![1.0; y.len()], Family::Bernoulli, None)
}

/// How a phase-2 regression on V is obtained inside the estimators.
#[derive(Debug, Clone)]
pub enum MbarModel {
    /// Re-fit by the given learner whenever the regressed values change.
    Fit(LearnerSpec),
    /// A fixed function (e.g. an analytic truth or a test double).
    Fixed(SharedPredictor),
}

impl Default for MbarModel {
    fn default() -> Self {
        MbarModel::Fit(LearnerSpec::default())
    }
}

impl MbarModel {
    /// Evaluates the regression of `values` (phase-2 rows) on V at every record.
    pub(crate) fn evaluate(&self, frame: &Frame, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            MbarModel::Fit(spec) => {
                let v2: Vec<Vec<f64>> = frame.phase2.iter().map(|&i| frame.v[i].clone()).collect();
                let fit = fit_v_regression(&v2, values, spec)?;
                Ok(frame.v.iter().map(|v| fit.predict(v)).collect())
            }
            MbarModel::Fixed(p) => Ok(frame.v.iter().map(|v| p.predict(v)).collect()),
        }
    }
}

/// Source of a probability mechanism (Π or g).
#[derive(Debug, Clone)]
pub enum MechanismSpec {
    Fit(LearnerSpec),
    Known(SharedPredictor),
}

impl Default for MechanismSpec {
    fn default() -> Self {
        MechanismSpec::Fit(LearnerSpec::default())
    }
}

#[derive(Debug, Clone)]
pub struct NuisanceConfig {
    pub pi: MechanismSpec,
    pub g: MechanismSpec,
    pub q: LearnerSpec,
    pub mbar: MbarModel,
    pub trunc_pi: (f64, f64),
    pub trunc_g: (f64, f64),
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        NuisanceConfig {
            pi: MechanismSpec::default(),
            g: MechanismSpec::default(),
            q: LearnerSpec::default(),
            mbar: MbarModel::default(),
            trunc_pi: DEFAULT_TRUNC_PI,
            trunc_g: DEFAULT_TRUNC_G,
        }
    }
}

impl NuisanceConfig {
    fn validate(&self) -> Result<()> {
        let (plo, phi) = self.trunc_pi;
        if !(plo > 0.0 && plo <= phi && phi <= 1.0) {
            return Err(Error::Config(format!("trunc_pi ({plo}, {phi}) must satisfy 0 < lo <= hi <= 1")));
        }
        let (glo, ghi) = self.trunc_g;
        if !(glo > 0.0 && glo <= ghi && ghi < 1.0) {
            return Err(Error::Config(format!("trunc_g ({glo}, {ghi}) must satisfy 0 < lo <= hi < 1")));
        }
        Ok(())
    }
}

/// The fitted nuisance functions an estimator consumes.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub pi: SharedPredictor,
    pub g: SharedPredictor,
    pub q: SharedPredictor,
    pub mbar: MbarModel,
    /// Working-model learner for Q, reused by the raking estimator.
    pub q_spec: LearnerSpec,
    pub trunc_pi: (f64, f64),
    pub trunc_g: (f64, f64),
}

/// Fits (or wraps) Π, then Q and g with IPCW weights. Expects a scaled dataset.
pub fn fit_nuisances(ds: &Dataset, cfg: &NuisanceConfig) -> Result<NuisanceSet> {
    cfg.validate()?;
    let pi = match &cfg.pi {
        MechanismSpec::Fit(spec) => fit_pi(ds, spec, cfg.trunc_pi)?,
        MechanismSpec::Known(p) => truncated(p.clone(), cfg.trunc_pi),
    };
    let g = match &cfg.g {
        MechanismSpec::Fit(spec) => fit_g_ipcw(ds, pi.as_ref(), spec, cfg.trunc_g)?,
        MechanismSpec::Known(p) => truncated(p.clone(), cfg.trunc_g),
    };
    let q = fit_q_ipcw(ds, pi.as_ref(), &cfg.q)?;
    Ok(NuisanceSet {
        pi,
        g,
        q,
        mbar: cfg.mbar.clone(),
        q_spec: cfg.q.clone(),
        trunc_pi: cfg.trunc_pi,
        trunc_g: cfg.trunc_g,
    })
}

/// Column-oriented view of a dataset used by the estimators.
#[derive(Debug, Clone)]
pub struct Frame {
    pub n: usize,
    pub delta: Vec<bool>,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    /// V features of every record.
    pub v: Vec<Vec<f64>>,
    /// Record indices of phase-2 rows, in dataset order.
    pub phase2: Vec<usize>,
    /// W features `[w1.., w2..]` of phase-2 rows (parallel to `phase2`).
    pub w: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(ds: &Dataset) -> Frame {
        let recs = ds.records();
        Frame {
            n: recs.len(),
            delta: recs.iter().map(|r| r.delta).collect(),
            a: recs.iter().map(|r| r.a).collect(),
            y: recs.iter().map(|r| r.y).collect(),
            v: recs.iter().map(ObservedRecord::v_features).collect(),
            phase2: recs.iter().enumerate().filter(|(_, r)| r.delta).map(|(i, _)| i).collect(),
            w: recs.iter().filter_map(ObservedRecord::w_features).collect(),
        }
    }

    pub fn n2(&self) -> usize {
        self.phase2.len()
    }

    /// V features of phase-2 rows.
    pub fn v2(&self) -> Vec<Vec<f64>> {
        self.phase2.iter().map(|&i| self.v[i].clone()).collect()
    }
}

/// Per-record evaluations of Π (all rows) and of g, Q(1,·), Q(0,·) (phase-2 rows).
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub pi: Vec<f64>,
    pub g1: Vec<f64>,
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
}

fn q_input(a: u8, w: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(w.len() + 1);
    x.push(f64::from(a));
    x.extend_from_slice(w);
    x
}

impl NuisanceSet {
    pub fn evaluate(&self, frame: &Frame) -> Evaluated {
        Evaluated {
            pi: frame.v.iter().map(|v| self.pi.predict(v)).collect(),
            g1: frame.w.iter().map(|w| self.g.predict(w)).collect(),
            q1: frame.w.iter().map(|w| self.q.predict(&q_input(1, w))).collect(),
            q0: frame.w.iter().map(|w| self.q.predict(&q_input(0, w))).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Schema, YKind};
    use crate::glm::expit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, seed: u64, p_delta: f64, p_y: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|_| {
                let w1 = vec![rng.random_range(-1.0..1.0)];
                let a = u8::from(rng.random::<f64>() < 0.5);
                let y = f64::from(u8::from(rng.random::<f64>() < p_y));
                if rng.random::<f64>() < p_delta {
                    ObservedRecord::phase2(w1, vec![rng.random_range(-1.0..1.0)], a, y)
                } else {
                    ObservedRecord::phase1(w1, a, y)
                }
            })
            .collect();
        Dataset::new(records, Schema::generated(1, 1, YKind::Binary)).unwrap()
    }

    fn intercept_only() -> LearnerSpec {
        LearnerSpec {
            columns: Some(vec![]),
            trunc: None,
        }
    }

    #[test]
    fn pi_coin_flip_is_half() {
        let ds = dataset(10_000, 1, 0.5, 0.3);
        let pi = fit_pi(&ds, &intercept_only(), DEFAULT_TRUNC_PI).unwrap();
        assert!((pi.predict(&[0.0, 1.0, 0.0]) - 0.5).abs() < 0.02);
    }

    #[test]
    fn pi_all_phase2_is_error() {
        let ds = dataset(50, 2, 1.0, 0.3);
        assert!(matches!(
            fit_pi(&ds, &LearnerSpec::default(), DEFAULT_TRUNC_PI),
            Err(Error::Unidentifiable(_))
        ));
    }

    #[test]
    fn q_and_g_large_sample() {
        let ds = dataset(10_000, 3, 0.7, 0.3);
        let pi = constant_prob(0.7);
        let q = fit_q_ipcw(&ds, pi.as_ref(), &intercept_only()).unwrap();
        assert!((q.predict(&[1.0, 0.0, 0.0]) - 0.3).abs() < 0.02);
        let g = fit_g_ipcw(&ds, pi.as_ref(), &intercept_only(), DEFAULT_TRUNC_G).unwrap();
        assert!((g.predict(&[0.0, 0.0]) - 0.5).abs() < 0.02);
    }

    fn constant_prob(p: f64) -> SharedPredictor {
        fix_known(move |_| p, (1e-9, 1.0))
    }

    #[test]
    fn weights_are_scale_invariant() {
        let ds = dataset(400, 4, 0.6, 0.4);
        let pi_a = fix_known(|v: &[f64]| expit(0.3 + v[0]), (0.01, 1.0));
        let pi_b = fix_known(|v: &[f64]| 0.5 * expit(0.3 + v[0]), (0.001, 1.0));
        let qa = fit_q_ipcw(&ds, pi_a.as_ref(), &LearnerSpec::default()).unwrap();
        let qb = fit_q_ipcw(&ds, pi_b.as_ref(), &LearnerSpec::default()).unwrap();
        for x in [[1.0, 0.2, -0.3], [0.0, -0.5, 0.9]] {
            assert!((qa.predict(&x) - qb.predict(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_pi_matches_unweighted_fit() {
        let ds = dataset(300, 5, 0.5, 0.4);
        let one = fix_known(|_| 1.0, (0.01, 1.0));
        let q = fit_q_ipcw(&ds, one.as_ref(), &LearnerSpec::default()).unwrap();
        let rows: Vec<Vec<f64>> = ds
            .records()
            .iter()
            .filter(|r| r.delta)
            .map(|r| r.q_features(r.a).unwrap())
            .collect();
        let y: Vec<f64> = ds.records().iter().filter(|r| r.delta).map(|r| r.y).collect();
        let direct = fit_glm(&rows, &y, &vec![1.0; y.len()], Family::Bernoulli).unwrap();
        for x in &rows {
            assert_eq!(q.predict(x), direct.predict(x));
        }
    }

    #[test]
    fn q_needs_both_arms() {
        let records = (0..10)
            .map(|i| ObservedRecord::phase2(vec![i as f64], vec![0.0], 1, f64::from(i % 2)))
            .chain(std::iter::once(ObservedRecord::phase1(vec![0.0], 0, 1.0)))
            .collect();
        let ds = Dataset::new(records, Schema::generated(1, 1, YKind::Binary)).unwrap();
        let pi = constant_prob(0.5);
        assert!(matches!(
            fit_q_ipcw(&ds, pi.as_ref(), &LearnerSpec::default()),
            Err(Error::Unidentifiable(_))
        ));
    }

    #[test]
    fn g_is_truncated() {
        let records = (0..40)
            .map(|i| {
                let w = i as f64 / 4.0 - 5.0;
                ObservedRecord::phase2(vec![w], vec![0.0], u8::from(w > 0.0), 0.0)
            })
            .collect();
        let ds = Dataset::new(records, Schema::generated(1, 1, YKind::Binary)).unwrap();
        let pi = constant_prob(1.0);
        let g = fit_g_ipcw(&ds, pi.as_ref(), &LearnerSpec::default(), DEFAULT_TRUNC_G).unwrap();
        assert_eq!(g.predict(&[-5.0, 0.0]), 0.01);
        assert_eq!(g.predict(&[5.0, 0.0]), 0.99);
    }

    #[test]
    fn mbar_regressions() {
        let ds = dataset(200, 6, 0.5, 0.5);
        let n2 = ds.n_phase2();
        let c = fit_mbar(&ds, &vec![2.5; n2], &LearnerSpec::default()).unwrap();
        let lin: Vec<f64> = ds
            .records()
            .iter()
            .filter(|r| r.delta)
            .map(|r| 1.0 + 2.0 * r.w1[0] - 0.5 * f64::from(r.a) + 3.0 * r.y)
            .collect();
        let m = fit_mbar(&ds, &lin, &LearnerSpec::default()).unwrap();
        let first: Vec<f64> = ds.records().iter().filter(|r| r.delta).map(|r| r.w1[0]).collect();
        let f = fit_mbar(&ds, &first, &LearnerSpec::default()).unwrap();
        for r in ds.records() {
            let v = r.v_features();
            assert!((c.predict(&v) - 2.5).abs() < 1e-10);
            let truth = 1.0 + 2.0 * r.w1[0] - 0.5 * f64::from(r.a) + 3.0 * r.y;
            assert!((m.predict(&v) - truth).abs() < 1e-8);
            if !r.delta {
                assert!((f.predict(&v) - r.w1[0]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn known_mechanisms() {
        let half = fix_known(|_| 0.5, DEFAULT_TRUNC_G);
        assert_eq!(half.predict(&[3.0]), 0.5);
        let pi = fix_known(|z: &[f64]| expit(-0.1 * z[0] + 0.1 * z[1]), DEFAULT_TRUNC_PI);
        assert_eq!(pi.predict(&[0.0, 0.0]), 0.5);
        let low = fix_known(|_| 0.001, DEFAULT_TRUNC_G);
        assert_eq!(low.predict(&[]), 0.01);
    }

    #[test]
    fn learner_spec_from_names() {
        let schema = Schema::generated(2, 1, YKind::Binary);
        let layout = q_layout(&schema);
        let spec = LearnerSpec::from_names(&layout, &["A".into(), "W2_1".into()]).unwrap();
        assert_eq!(spec.columns, Some(vec![0, 3]));
        assert!(LearnerSpec::from_names(&layout, &["nope".into()]).is_err());
    }
}
