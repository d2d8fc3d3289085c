//! Run configuration: one TOML file drives either an estimate on a CSV
//! dataset or a grid of simulation studies.
//!
//! ```toml
//! mode = "simulate"
//! seed = 2024
//!
//! [simulate]
//! designs = [{ id = "kang_dr" }]
//! sizes = [2000]
//! n_runs = 500
//! estimators = ["aipcw", "ipcw_tmle"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::data::Schema;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, EstimatorOptions};
use crate::nuisance::{
    constant, q_layout, v_layout, w_layout, LearnerSpec, MbarModel, MechanismSpec, NuisanceConfig, DEFAULT_TRUNC_G,
    DEFAULT_TRUNC_PI,
};
use crate::sim::{Dgp, SimNuisance, StudySpec, Target};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Estimate,
    Simulate,
}

impl RunMode {
    fn section(self) -> &'static str {
        match self {
            RunMode::Estimate => "estimate",
            RunMode::Simulate => "simulate",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Spanned<RunMode>,
    #[serde(default)]
    seed: u64,
    parallelism: Option<Spanned<usize>>,
    out: Option<PathBuf>,
    estimate: Option<Spanned<RawEstimate>>,
    simulate: Option<Spanned<RawSimulate>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEstimate {
    data: PathBuf,
    schema: Schema,
    estimators: Vec<EstimatorId>,
    #[serde(default)]
    nuisance: RawNuisance,
    #[serde(default)]
    options: EstimatorOptions,
    #[serde(default = "default_estimate_file")]
    output: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNuisance {
    pi_features: Option<Vec<String>>,
    /// Known constant sampling probability, e.g. 1 for a fully observed sample.
    pi_constant: Option<f64>,
    g_features: Option<Vec<String>>,
    g_constant: Option<f64>,
    q_features: Option<Vec<String>>,
    mbar_features: Option<Vec<String>>,
    #[serde(default = "default_trunc_pi")]
    trunc_pi: (f64, f64),
    #[serde(default = "default_trunc_g")]
    trunc_g: (f64, f64),
}

impl Default for RawNuisance {
    fn default() -> Self {
        RawNuisance {
            pi_features: None,
            pi_constant: None,
            g_features: None,
            g_constant: None,
            q_features: None,
            mbar_features: None,
            trunc_pi: DEFAULT_TRUNC_PI,
            trunc_g: DEFAULT_TRUNC_G,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    designs: Vec<Dgp>,
    sizes: Vec<usize>,
    n_runs: usize,
    estimators: Vec<EstimatorId>,
    #[serde(default = "default_targets")]
    targets: Vec<Target>,
    #[serde(default)]
    nuisance: SimNuisance,
    #[serde(default)]
    options: EstimatorOptions,
    #[serde(default = "default_report_file")]
    report: String,
}

fn default_estimate_file() -> String {
    "estimates.csv".into()
}

fn default_report_file() -> String {
    "report.csv".into()
}

fn default_targets() -> Vec<Target> {
    vec![Target::Causal]
}

fn default_trunc_pi() -> (f64, f64) {
    DEFAULT_TRUNC_PI
}

fn default_trunc_g() -> (f64, f64) {
    DEFAULT_TRUNC_G
}

/// Estimate-mode task, with paths resolved.
#[derive(Debug, Clone)]
pub struct EstimateTask {
    pub data: PathBuf,
    pub schema: Schema,
    pub estimators: Vec<EstimatorId>,
    pub nuisance: NuisanceConfig,
    pub options: EstimatorOptions,
    pub output: String,
}

/// Simulate-mode task: one study per (design, size) cell.
#[derive(Debug, Clone)]
pub struct SimulateTask {
    pub cells: Vec<StudySpec>,
    pub report: String,
}

#[derive(Debug, Clone)]
pub enum Task {
    Estimate(EstimateTask),
    Simulate(SimulateTask),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: RunMode,
    pub seed: u64,
    pub parallelism: Option<usize>,
    pub out: PathBuf,
    pub task: Task,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<RunMode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

fn at_line(src: &str, offset: usize, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {}: {msg}", line_of(src, offset)))
}

fn error_at(src: &str, offset: usize) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) => at_line(src, offset, m),
        other => at_line(src, offset, other),
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let src = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config(&src, base, ov).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses configuration text; relative paths resolve against `base`.
pub fn parse_config(src: &str, base: &Path, ov: &Overrides) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let mode = ov.mode.unwrap_or(*raw.mode.get_ref());
    let mode_at = raw.mode.span().start;
    let wrong = match mode {
        RunMode::Estimate => raw.simulate.as_ref().map(|s| s.span().start),
        RunMode::Simulate => raw.estimate.as_ref().map(|s| s.span().start),
    };
    if let Some(at) = wrong {
        let other = if mode == RunMode::Estimate { "simulate" } else { "estimate" };
        return Err(at_line(src, at, format!("[{other}] section given but mode is {}", mode.section())));
    }
    if let Some(p) = &raw.parallelism {
        if *p.get_ref() == 0 {
            return Err(at_line(src, p.span().start, "parallelism must be at least 1"));
        }
    }
    let seed = ov.seed.unwrap_or(raw.seed);
    let task = match mode {
        RunMode::Estimate => {
            let est = raw
                .estimate
                .ok_or_else(|| at_line(src, mode_at, "mode is estimate but the [estimate] section is missing"))?;
            let at = est.span().start;
            Task::Estimate(resolve_estimate(est.into_inner(), base).map_err(error_at(src, at))?)
        }
        RunMode::Simulate => {
            let sim = raw
                .simulate
                .ok_or_else(|| at_line(src, mode_at, "mode is simulate but the [simulate] section is missing"))?;
            let at = sim.span().start;
            Task::Simulate(resolve_simulate(sim.into_inner(), seed).map_err(error_at(src, at))?)
        }
    };
    let out = ov
        .out
        .clone()
        .unwrap_or_else(|| base.join(raw.out.unwrap_or_else(|| PathBuf::from("out"))));
    Ok(RunConfig {
        mode,
        seed,
        parallelism: ov.parallelism.or(raw.parallelism.map(Spanned::into_inner)),
        out,
        task,
    })
}

fn check_file_name(name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(Error::Config(format!("output file name {name:?} must be a plain file name")));
    }
    Ok(())
}

fn resolve_estimate(raw: RawEstimate, base: &Path) -> Result<EstimateTask> {
    if raw.estimators.is_empty() {
        return Err(Error::Config("no estimators requested".into()));
    }
    check_file_name(&raw.output)?;
    let schema = raw.schema;
    let nz = raw.nuisance;
    let mechanism = |features: &Option<Vec<String>>, value: Option<f64>, layout: Vec<String>, key: &str| {
        match (features, value) {
            (Some(_), Some(_)) => Err(Error::Config(format!("{key}_features and {key}_constant are exclusive"))),
            (None, Some(c)) if !(c > 0.0 && c <= 1.0) => {
                Err(Error::Config(format!("{key}_constant = {c} must lie in (0, 1]")))
            }
            (None, Some(c)) => Ok(MechanismSpec::Known(constant(c))),
            (Some(names), None) => Ok(MechanismSpec::Fit(LearnerSpec::from_names(&layout, names)?)),
            (None, None) => Ok(MechanismSpec::Fit(LearnerSpec::default())),
        }
    };
    let learner = |features: &Option<Vec<String>>, layout: Vec<String>| match features {
        Some(names) => LearnerSpec::from_names(&layout, names),
        None => Ok(LearnerSpec::default()),
    };
    let nuisance = NuisanceConfig {
        pi: mechanism(&nz.pi_features, nz.pi_constant, v_layout(&schema), "pi")?,
        g: mechanism(&nz.g_features, nz.g_constant, w_layout(&schema), "g")?,
        q: learner(&nz.q_features, q_layout(&schema))?,
        mbar: MbarModel::Fit(learner(&nz.mbar_features, v_layout(&schema))?),
        trunc_pi: nz.trunc_pi,
        trunc_g: nz.trunc_g,
    };
    Ok(EstimateTask {
        data: base.join(raw.data),
        schema,
        estimators: raw.estimators,
        nuisance,
        options: raw.options,
        output: raw.output,
    })
}

fn resolve_simulate(raw: RawSimulate, seed: u64) -> Result<SimulateTask> {
    if raw.designs.is_empty() || raw.sizes.is_empty() {
        return Err(Error::Config("designs and sizes must both be non-empty".into()));
    }
    check_file_name(&raw.report)?;
    let mut cells = Vec::with_capacity(raw.designs.len() * raw.sizes.len());
    for &dgp in &raw.designs {
        for &n in &raw.sizes {
            let mut spec = StudySpec::new(dgp, n, raw.n_runs, seed, raw.estimators.clone());
            spec.nuisance = raw.nuisance;
            spec.options = raw.options;
            spec.targets = raw.targets.clone();
            spec.validate()?;
            cells.push(spec);
        }
    }
    Ok(SimulateTask {
        cells,
        report: raw.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIM: &str = r#"
mode = "simulate"
seed = 7

[simulate]
designs = [{ id = "kang_dr" }, { id = "missing_rate", intercept = 1.1 }]
sizes = [200, 400]
n_runs = 3
estimators = ["aipcw", "quasi_tmle_linearized"]

[simulate.nuisance]
known_pi = true
"#;

    fn parse(src: &str) -> Result<RunConfig> {
        parse_config(src, Path::new("/cfg"), &Overrides::default())
    }

    fn message(r: Result<RunConfig>) -> String {
        match r {
            Err(e) => e.to_string(),
            Ok(_) => panic!("expected an error"),
        }
    }

    #[test]
    fn simulate_grid() {
        let cfg = parse(SIM).unwrap();
        assert_eq!(cfg.mode, RunMode::Simulate);
        assert_eq!(cfg.out, PathBuf::from("/cfg/out"));
        let Task::Simulate(t) = cfg.task else { panic!() };
        assert_eq!(t.cells.len(), 4);
        assert!(t.cells.iter().all(|c| c.base_seed == 7 && c.nuisance.known_pi && !c.nuisance.known_g));
        assert_eq!(t.cells[3].n, 400);
        assert_eq!(t.cells[3].dgp, Dgp::MissingRate { intercept: 1.1 });
        assert_eq!(t.report, "report.csv");
    }

    #[test]
    fn overrides_win() {
        let ov = Overrides {
            seed: Some(99),
            out: Some("/elsewhere".into()),
            parallelism: Some(3),
            mode: None,
        };
        let cfg = parse_config(SIM, Path::new("/cfg"), &ov).unwrap();
        assert_eq!((cfg.seed, cfg.parallelism), (99, Some(3)));
        assert_eq!(cfg.out, PathBuf::from("/elsewhere"));
        let Task::Simulate(t) = cfg.task else { panic!() };
        assert!(t.cells.iter().all(|c| c.base_seed == 99));
    }

    #[test]
    fn unknown_key_is_pinpointed() {
        let src = SIM.replace("n_runs = 3", "n_runs = 3\nn_rnus = 4");
        let msg = message(parse(&src));
        assert!(msg.contains("line 9"), "{msg}");
        assert!(msg.contains("n_rnus"), "{msg}");
    }

    #[test]
    fn unknown_estimator_is_pinpointed() {
        let src = SIM.replace("\"aipcw\"", "\"aipwc\"");
        let msg = message(parse(&src));
        assert!(msg.contains("line 9") && msg.contains("aipwc"), "{msg}");
    }

    #[test]
    fn mode_section_mismatch() {
        let msg = message(parse(&SIM.replace("mode = \"simulate\"", "mode = \"estimate\"")));
        assert!(msg.contains("line 5") && msg.contains("[simulate] section"), "{msg}");
        let ov = Overrides {
            mode: Some(RunMode::Estimate),
            ..Overrides::default()
        };
        assert!(parse_config(SIM, Path::new(""), &ov).is_err());
    }

    #[test]
    fn invalid_cell_is_rejected() {
        let src = SIM.replace("sizes = [200, 400]", "sizes = [200, 4]");
        assert!(message(parse(&src)).contains("too small"));
        let src = SIM.replace("[simulate.nuisance]", "targets = [\"census\"]\n[simulate.nuisance]");
        assert!(message(parse(&src)).contains("no census estimand"));
    }

    const EST: &str = r#"
mode = "estimate"
out = "results"

[estimate]
data = "toy.csv"
estimators = ["ipcw_tmle"]

[estimate.schema]
treatment = "A"
outcome = "Y"
delta = "Delta"
w1 = ["W1"]
w2 = ["W2"]

[estimate.nuisance]
pi_constant = 1.0
q_features = ["A", "W1"]
"#;

    #[test]
    fn estimate_task() {
        let cfg = parse(EST).unwrap();
        assert_eq!(cfg.out, PathBuf::from("/cfg/results"));
        let Task::Estimate(t) = cfg.task else { panic!() };
        assert_eq!(t.data, PathBuf::from("/cfg/toy.csv"));
        assert!(matches!(t.nuisance.pi, MechanismSpec::Known(_)));
        assert_eq!(t.nuisance.q.columns, Some(vec![0, 1]));
        assert_eq!(t.output, "estimates.csv");
    }

    #[test]
    fn estimate_errors() {
        let msg = message(parse(&EST.replace("q_features = [\"A\", \"W1\"]", "q_features = [\"W9\"]")));
        assert!(msg.contains("W9") && msg.contains("line 5"), "{msg}");
        assert!(parse(&EST.replace("pi_constant = 1.0", "pi_constant = 1.5")).is_err());
        assert!(parse(&EST.replace("pi_constant = 1.0", "pi_constant = 1.0\npi_features = [\"W1\"]")).is_err());
        assert!(parse(&EST.replace("estimators = [\"ipcw_tmle\"]", "estimators = []")).is_err());
        assert!(parse(&EST.replace("mode = \"estimate\"", "mode = \"fit\"")).is_err());
    }
}
