use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate, Dgp, DgpSpec, Truth};
use super::truth::reference;
use crate::data::scale_outcome;
use crate::error::{Error, Result};
use crate::estimators::{run, EstimatorId, EstimatorOptions};
use crate::nuisance::{fit_nuisances, MechanismSpec, NuisanceConfig, DEFAULT_TRUNC_G, DEFAULT_TRUNC_PI};

/// Which estimand the metrics are computed against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Causal,
    Census,
}

impl Target {
    pub fn as_str(&self) -> &'static str {
        match self {
            Target::Causal => "causal",
            Target::Census => "census",
        }
    }
}

/// Nuisance settings of a simulation: which mechanisms are supplied from the
/// design instead of fit, and the truncation bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimNuisance {
    #[serde(default)]
    pub known_pi: bool,
    #[serde(default)]
    pub known_g: bool,
    #[serde(default = "default_trunc_pi")]
    pub trunc_pi: (f64, f64),
    #[serde(default = "default_trunc_g")]
    pub trunc_g: (f64, f64),
}

fn default_trunc_pi() -> (f64, f64) {
    DEFAULT_TRUNC_PI
}

fn default_trunc_g() -> (f64, f64) {
    DEFAULT_TRUNC_G
}

impl Default for SimNuisance {
    fn default() -> Self {
        SimNuisance {
            known_pi: false,
            known_g: false,
            trunc_pi: DEFAULT_TRUNC_PI,
            trunc_g: DEFAULT_TRUNC_G,
        }
    }
}

impl SimNuisance {
    pub fn config(&self, dgp: &Dgp, truth: &Truth) -> NuisanceConfig {
        let mut cfg = NuisanceConfig {
            trunc_pi: self.trunc_pi,
            trunc_g: self.trunc_g,
            ..NuisanceConfig::default()
        };
        if self.known_pi {
            cfg.pi = MechanismSpec::Known(dgp.known_pi(self.trunc_pi));
        }
        if self.known_g {
            cfg.g = MechanismSpec::Known(dgp.known_g_for(truth, self.trunc_g));
        }
        cfg
    }
}

/// One cell of a simulation: a design at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySpec {
    pub dgp: Dgp,
    pub n: usize,
    pub n_runs: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorId>,
    pub nuisance: SimNuisance,
    pub options: EstimatorOptions,
    pub targets: Vec<Target>,
}

impl StudySpec {
    pub fn new(dgp: Dgp, n: usize, n_runs: usize, base_seed: u64, estimators: Vec<EstimatorId>) -> Self {
        StudySpec {
            dgp,
            n,
            n_runs,
            base_seed,
            estimators,
            nuisance: SimNuisance::default(),
            options: EstimatorOptions::default(),
            targets: vec![Target::Causal],
        }
    }

    /// Seed of run `r`.
    pub fn seed(&self, r: usize) -> u64 {
        self.base_seed.wrapping_add(r as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.dgp.validate()?;
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(Error::Config(format!("sample size {} is too small", self.n)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators requested".into()));
        }
        if self.targets.is_empty() {
            return Err(Error::Config("no targets requested".into()));
        }
        if self.targets.contains(&Target::Census) && reference(&self.dgp).census.is_none() {
            return Err(Error::Config(format!("design {} has no census estimand", self.dgp.name())));
        }
        Ok(())
    }
}

/// A single estimate from one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Draw {
    pub psi_hat: f64,
    pub ci95: (f64, f64),
    pub se: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub runtime_s: f64,
}

/// A recorded estimator failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub seed: u64,
    pub estimator: EstimatorId,
    pub message: String,
}

/// Per-run outcome: one slot per requested estimator.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub draws: Vec<std::result::Result<Draw, String>>,
}

/// Aggregated metrics of one estimator against one estimand.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub estimator: EstimatorId,
    pub target: Target,
    pub reference: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub n_unconverged: usize,
    pub bias: f64,
    pub abs_bias: f64,
    /// Empirical SE (n−1 denominator); absent with fewer than two estimates.
    pub emp_se: Option<f64>,
    pub mse: f64,
    pub mean_analytic_se: f64,
    pub coverage: f64,
    /// Coverage of `ψ̂ ± 1.96·emp_se`; absent when `emp_se` is.
    pub oracle_coverage: Option<f64>,
    pub mean_runtime_s: f64,
}

/// Aggregates successful draws against `reference`.
pub fn summarize(estimator: EstimatorId, target: Target, reference: f64, draws: &[Draw], n_failed: usize) -> Summary {
    let k = draws.len();
    let kf = k as f64;
    let nan_if_empty = |v: f64| if k == 0 { f64::NAN } else { v };
    let mean = draws.iter().map(|d| d.psi_hat).sum::<f64>() / kf;
    let bias = mean - reference;
    let emp_se = (k >= 2).then(|| {
        let ss: f64 = draws.iter().map(|d| (d.psi_hat - mean).powi(2)).sum();
        (ss / (kf - 1.0)).sqrt()
    });
    let mse = draws.iter().map(|d| (d.psi_hat - reference).powi(2)).sum::<f64>() / kf;
    let covers = |lo: f64, hi: f64| lo <= reference && reference <= hi;
    let coverage = draws.iter().filter(|d| covers(d.ci95.0, d.ci95.1)).count() as f64 / kf;
    let oracle_coverage = emp_se.map(|s| {
        draws
            .iter()
            .filter(|d| covers(d.psi_hat - 1.96 * s, d.psi_hat + 1.96 * s))
            .count() as f64
            / kf
    });
    Summary {
        estimator,
        target,
        reference,
        n_ok: k,
        n_failed,
        n_unconverged: draws.iter().filter(|d| !d.converged).count(),
        bias: nan_if_empty(bias),
        abs_bias: nan_if_empty(bias.abs()),
        emp_se,
        mse: nan_if_empty(mse),
        mean_analytic_se: nan_if_empty(draws.iter().map(|d| d.se).sum::<f64>() / kf),
        coverage: nan_if_empty(coverage),
        oracle_coverage,
        mean_runtime_s: nan_if_empty(draws.iter().map(|d| d.runtime_s).sum::<f64>() / kf),
    }
}

/// Result of a study cell.
#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub spec: StudySpec,
    pub psi_true: f64,
    pub psi_census: Option<f64>,
    pub n_runs: usize,
    pub rows: Vec<Summary>,
    pub failures: Vec<Failure>,
    pub wall_time_s: f64,
}

impl SimReport {
    pub fn row(&self, estimator: EstimatorId, target: Target) -> Option<&Summary> {
        self.rows.iter().find(|r| r.estimator == estimator && r.target == target)
    }

    /// Largest per-estimator failure fraction.
    pub fn max_failure_rate(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.n_failed as f64 / self.n_runs as f64)
            .fold(0.0, f64::max)
    }
}

/// Generates the data of one run and applies every requested estimator to it.
pub fn run_once(spec: &StudySpec, r: usize) -> RunOutcome {
    let seed = spec.seed(r);
    let fail_all = |msg: String| RunOutcome {
        seed,
        draws: vec![Err(msg); spec.estimators.len()],
    };
    let prepared = generate(&DgpSpec {
        dgp: spec.dgp,
        n: spec.n,
        seed,
    })
    .and_then(|(ds, truth)| {
        let ds = scale_outcome(&ds)?;
        let ns = fit_nuisances(&ds, &spec.nuisance.config(&spec.dgp, &truth))?;
        Ok((ds, ns))
    });
    let (ds, ns) = match prepared {
        Ok(p) => p,
        Err(e) => return fail_all(format!("nuisance fitting failed: {e}")),
    };
    let draws = spec
        .estimators
        .iter()
        .map(|&id| {
            let start = Instant::now();
            run(&ds, &ns, id, &spec.options)
                .map(|e| Draw {
                    psi_hat: e.psi_hat,
                    ci95: e.ci95,
                    se: e.se,
                    converged: e.converged,
                    n_iter: e.n_outer_iterations,
                    runtime_s: start.elapsed().as_secs_f64(),
                })
                .map_err(|e| e.to_string())
        })
        .collect();
    RunOutcome { seed, draws }
}

/// Runs `spec.n_runs` independent replications on a pool of `parallelism`
/// workers; aggregation is in run order, so the report does not depend on scheduling.
pub fn run_study(spec: &StudySpec, parallelism: usize) -> Result<SimReport> {
    spec.validate()?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| (0..spec.n_runs).into_par_iter().map(|r| run_once(spec, r)).collect());

    let refs = reference(&spec.dgp);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (k, &id) in spec.estimators.iter().enumerate() {
        let mut draws = Vec::with_capacity(spec.n_runs);
        for o in &outcomes {
            match &o.draws[k] {
                Ok(d) => draws.push(*d),
                Err(msg) => failures.push(Failure {
                    seed: o.seed,
                    estimator: id,
                    message: msg.clone(),
                }),
            }
        }
        let n_failed = spec.n_runs - draws.len();
        for &t in &spec.targets {
            let value = match t {
                Target::Causal => refs.psi,
                Target::Census => refs.census.expect("validated"),
            };
            rows.push(summarize(id, t, value, &draws, n_failed));
        }
    }
    for f in &failures {
        log::warn!("run with seed {} failed for {}: {}", f.seed, f.estimator, f.message);
    }
    Ok(SimReport {
        spec: spec.clone(),
        psi_true: refs.psi,
        psi_census: refs.census,
        n_runs: spec.n_runs,
        rows,
        failures,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
