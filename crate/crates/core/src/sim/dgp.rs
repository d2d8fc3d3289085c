use std::collections::HashMap;
use std::f64::consts::E;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ObservedRecord, Schema, YKind};
use crate::glm::expit;
use crate::nuisance::{fix_known, SharedPredictor};

/// The simulation designs. Every design has four covariates; the first two are
/// measured in phase 1 and the last two only in phase 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dgp {
    /// Latent normals seen only through nonlinear transforms; binary outcome.
    KangDr,
    /// Polynomial outcome with a treatment interaction; the intercept of the
    /// sampling model sets the missingness rate.
    MissingRate { intercept: f64 },
    /// Continuous outcome with treatment-effect heterogeneity scaled by `gamma`.
    RakingGap { gamma: f64 },
    /// Strong confounding through a phase-2 covariate; g stays in [0.01, 0.99]
    /// with much of its mass piled against those bounds.
    NearPositivity,
}

impl Dgp {
    pub fn name(&self) -> &'static str {
        match self {
            Dgp::KangDr => "kang_dr",
            Dgp::MissingRate { .. } => "missing_rate",
            Dgp::RakingGap { .. } => "raking_gap",
            Dgp::NearPositivity => "near_positivity",
        }
    }

    pub fn y_kind(&self) -> YKind {
        match self {
            Dgp::RakingGap { .. } => YKind::Continuous,
            _ => YKind::Binary,
        }
    }

    pub fn schema(&self) -> Schema {
        Schema::generated(2, 2, self.y_kind())
    }

    pub fn validate(&self) -> crate::Result<()> {
        match *self {
            Dgp::MissingRate { intercept } if !intercept.is_finite() => {
                Err(crate::Error::Config("missing_rate intercept must be finite".into()))
            }
            Dgp::RakingGap { gamma } if !(0.0..=1.0).contains(&gamma) => {
                Err(crate::Error::Config(format!("raking_gap gamma {gamma} must lie in [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Draws the latent/baseline covariates of one unit.
    fn draw_latent(&self, rng: &mut impl Rng) -> [f64; 4] {
        let mut z = [0.0; 4];
        for v in &mut z {
            let e: f64 = rng.sample(StandardNormal);
            *v = match self {
                Dgp::KangDr | Dgp::NearPositivity => e,
                Dgp::MissingRate { .. } | Dgp::RakingGap { .. } => 1.0 + e,
            };
        }
        z
    }

    /// Observed covariates `(W1, W2, W3, W4)` from the latent draw.
    fn observed(&self, z: &[f64; 4]) -> [f64; 4] {
        match self {
            Dgp::KangDr => [
                (z[0] / 2.0).exp(),
                z[1].powi(3),
                (z[3] * z[2] / 25.0 + 0.6).powi(3),
                (z[2] + z[3] + 20.0).powi(2),
            ],
            _ => *z,
        }
    }

    fn propensity(&self, z: &[f64; 4]) -> f64 {
        match self {
            Dgp::KangDr => expit(-0.2 * z[0] - 0.6 * z[1] + 0.9 * z[3]),
            Dgp::MissingRate { .. } | Dgp::RakingGap { .. } => expit(-0.2 * z[0] - 0.6 * z[1] + 0.2 * z[3]),
            Dgp::NearPositivity => 0.01 + 0.98 * expit(0.4 - 1.0 * z[0] + 2.8 * z[2]),
        }
    }

    /// `E[Y | A = a, latent]`.
    fn outcome_mean(&self, z: &[f64; 4], a: u8) -> f64 {
        let a = f64::from(a);
        match *self {
            Dgp::KangDr => expit(-1.0 + 0.6 * z[0] - 0.4 * z[1] + 0.2 * z[2] - 0.5 * z[3] + 1.2 * a),
            Dgp::MissingRate { .. } => expit(
                0.1 * z[0] * z[0] - 0.01 * z[1].powi(3) + 0.2 * z[2] - 0.1 * z[3] + 0.6 * a + 0.5 * a * z[1] * z[1],
            ),
            Dgp::RakingGap { gamma } => {
                let het = 2.5 * f64::from(u8::from(z[1] > 1.0)) - 2.5 * f64::from(u8::from(z[1] < 0.0)) + 2.0 * z[0].sin();
                -0.3 + 0.4 * z[0] - 0.4 * z[1] + 0.2 * z[2] - 0.1 * z[3] + gamma * a * het
            }
            Dgp::NearPositivity => expit(-0.3 + 0.6 * z[0] - 0.4 * z[1] + 0.5 * z[2] - 0.3 * z[3] + 0.8 * a),
        }
    }

    /// Phase-2 sampling probability. Its argument is V = (W1, W2, A, Y) only,
    /// so every design is coarsened at random by construction.
    pub fn sampling_probability(&self, v: &[f64]) -> f64 {
        let (w1, w2, y) = (v[0], v[1], v[3]);
        match *self {
            Dgp::KangDr => expit(-0.1 * 2.0 * w1.ln() + 0.1 * w2.cbrt()),
            Dgp::MissingRate { intercept } => expit(intercept + 0.2 * w1 + 0.2 * y),
            Dgp::RakingGap { .. } => expit(0.5 * w1),
            Dgp::NearPositivity => expit(0.3 + 0.4 * w1 + 0.3 * y),
        }
    }

    /// `P(A = 1 | W)` as a function of the observed covariates.
    ///
    /// For `kang_dr` the latent pair (Z3, Z4) is recovered from (W3, W4) only up
    /// to order; the two orderings are equally likely, so g averages over both.
    pub fn treatment_probability(&self, w: &[f64]) -> f64 {
        match self {
            Dgp::KangDr => {
                let z1 = 2.0 * w[0].ln();
                let z2 = w[1].cbrt();
                let prod = 25.0 * (w[2].cbrt() - 0.6);
                let sum = w[3].sqrt() - 20.0;
                let root = (sum * sum - 4.0 * prod).max(0.0).sqrt();
                let (t1, t2) = ((sum + root) / 2.0, (sum - root) / 2.0);
                0.5 * (self.propensity(&[z1, z2, t2, t1]) + self.propensity(&[z1, z2, t1, t2]))
            }
            _ => self.propensity(&[w[0], w[1], w[2], w[3]]),
        }
    }

    /// True Π as a predictor on V, clipped to `trunc`.
    pub fn known_pi(&self, trunc: (f64, f64)) -> SharedPredictor {
        let dgp = *self;
        fix_known(move |v| dgp.sampling_probability(v), trunc)
    }

    /// True g as a predictor on W, clipped to `trunc`.
    pub fn known_g(&self, trunc: (f64, f64)) -> SharedPredictor {
        let dgp = *self;
        fix_known(move |w| dgp.treatment_probability(w), trunc)
    }

    /// The propensity that generated each unit of a draw, served by exact lookup of
    /// its covariates. For `kang_dr` this is the latent propensity: the order of
    /// (Z3, Z4) is lost in W yet drives both A and Y, so only the latent g removes
    /// confounding. Unseen covariates fall back to [`Dgp::treatment_probability`].
    pub fn known_g_for(&self, truth: &Truth, trunc: (f64, f64)) -> SharedPredictor {
        let key = |w: &[f64]| -> [u64; 4] { std::array::from_fn(|j| w[j].to_bits()) };
        let table: HashMap<[u64; 4], f64> = truth.w_full.iter().zip(&truth.g).map(|(w, &g)| (key(w), g)).collect();
        let dgp = *self;
        fix_known(
            move |w| table.get(&key(w)).copied().unwrap_or_else(|| dgp.treatment_probability(w)),
            trunc,
        )
    }
}

/// Draw-level ground truth accompanying a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// Latent normals (`kang_dr`) or the covariates themselves, per unit.
    pub latent: Vec<[f64; 4]>,
    /// Full covariate vector, including the phase-2 part of censored units.
    pub w_full: Vec<[f64; 4]>,
    pub pi: Vec<f64>,
    pub g: Vec<f64>,
    pub q1: Vec<f64>,
    pub q0: Vec<f64>,
}

impl Truth {
    /// Sample average treatment effect `mean(Q(1,W) − Q(0,W))` over the drawn units.
    pub fn sample_effect(&self) -> f64 {
        let n = self.q1.len() as f64;
        self.q1.iter().zip(&self.q0).map(|(a, b)| a - b).sum::<f64>() / n
    }
}

/// A design, a sample size and a seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub dgp: Dgp,
    pub n: usize,
    pub seed: u64,
}

/// Uncensored draw of one unit: latent, observed covariates, A, Y and the true means.
pub(crate) struct Unit {
    pub latent: [f64; 4],
    pub w: [f64; 4],
    pub a: u8,
    pub y: f64,
    pub g: f64,
    pub q1: f64,
    pub q0: f64,
}

pub(crate) fn draw_unit(dgp: &Dgp, rng: &mut impl Rng) -> Unit {
    let latent = dgp.draw_latent(rng);
    let w = dgp.observed(&latent);
    let g = dgp.propensity(&latent);
    let a = u8::from(rng.random::<f64>() < g);
    let (q1, q0) = (dgp.outcome_mean(&latent, 1), dgp.outcome_mean(&latent, 0));
    let mean = if a == 1 { q1 } else { q0 };
    let y = match dgp.y_kind() {
        YKind::Binary => f64::from(u8::from(rng.random::<f64>() < mean)),
        YKind::Continuous => mean + rng.sample::<f64, _>(StandardNormal),
    };
    Unit { latent, w, a, y, g, q1, q0 }
}

/// The generator for a spec; the stream depends only on the seed.
pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a two-phase dataset and its ground truth.
pub fn generate(spec: &DgpSpec) -> crate::Result<(Dataset, Truth)> {
    spec.dgp.validate()?;
    let mut rng = rng_for(spec.seed);
    let mut records = Vec::with_capacity(spec.n);
    let mut truth = Truth {
        latent: Vec::with_capacity(spec.n),
        w_full: Vec::with_capacity(spec.n),
        pi: Vec::with_capacity(spec.n),
        g: Vec::with_capacity(spec.n),
        q1: Vec::with_capacity(spec.n),
        q0: Vec::with_capacity(spec.n),
    };
    for _ in 0..spec.n {
        let u = draw_unit(&spec.dgp, &mut rng);
        let pi = spec.dgp.sampling_probability(&[u.w[0], u.w[1], f64::from(u.a), u.y]);
        let delta = rng.random::<f64>() < pi;
        records.push(if delta {
            ObservedRecord::phase2(vec![u.w[0], u.w[1]], vec![u.w[2], u.w[3]], u.a, u.y)
        } else {
            ObservedRecord::phase1(vec![u.w[0], u.w[1]], u.a, u.y)
        });
        truth.latent.push(u.latent);
        truth.w_full.push(u.w);
        truth.pi.push(pi);
        truth.g.push(u.g);
        truth.q1.push(u.q1);
        truth.q0.push(u.q0);
    }
    Ok((Dataset::new(records, spec.dgp.schema())?, truth))
}

/// Mean of `sin(W)` for `W ~ N(1, 1)`.
pub(crate) fn mean_sin_n11() -> f64 {
    1f64.sin() / E.sqrt()
}
