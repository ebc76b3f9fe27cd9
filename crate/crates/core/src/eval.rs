//! Experiment protocol: repeated learn-then-infer trials, calibration curves
//! and CSV exports.
//!
//! A trial draws training data from a ground-truth network, learns Dirichlet
//! tables from it, and runs both second-order engines on a fixed set of
//! observed variables. Every `trials_per_ground_truth` trials a new ground
//! truth is drawn. Trials use their own random streams, so results do not
//! depend on thread count or completion order.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF, Normal};
use thiserror::Error;

use crate::bp::PropagationOptions;
use crate::error::InferenceError;
use crate::exact::{ancestral_sample, enumerate_query, learn_dirichlet, sample_dataset};
use crate::ingest::{
    builtin_structure, default_evidence, parse_network, resolve_evidence_variables, sample_ground_truth,
    ExperimentConfig, IngestError, Topology,
};
use crate::model::{Evidence, MarginalEstimate, NetworkStructure};
use crate::rng::{stream, Stream};
use crate::solbp::run_solbp_with_moments;
use crate::spn::{sospn_query_with_moments, Spn};

pub const TRIALS_SCHEMA: &str = "# solbp-trials v1";
pub const SCATTER_SCHEMA: &str = "# solbp-scatter v1";
pub const TIMING_SCHEMA: &str = "# solbp-timing v1";
pub const DECBOD_SCHEMA: &str = "# solbp-decbod v1";

pub const TRIALS_HEADER: [&str; 11] = [
    "trial",
    "ground_truth",
    "variable",
    "state",
    "cardinality",
    "truth",
    "solbp_mean",
    "solbp_variance",
    "sospn_mean",
    "sospn_variance",
    "solbp_rounds",
];
pub const SCATTER_HEADER: [&str; 7] = ["trial", "variable", "state", "mean_solbp", "mean_sospn", "var_solbp", "var_sospn"];
pub const TIMING_HEADER: [&str; 5] = ["trial", "solbp_seconds", "sospn_seconds", "solbp_rounds", "solbp_converged"];
pub const DECBOD_HEADER: [&str; 3] = ["gamma", "solbp", "sospn"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("variance {variance} exceeds the largest possible for mean {mean}")]
    InfeasibleVariance { mean: f64, variance: f64 },
    #[error("confidence level {0} outside [0, 1)")]
    InvalidGamma(f64),
    #[error("no trial records")]
    NoRecords,
    #[error("malformed trials file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Solbp,
    Sospn,
}

/// Moment feasibility slack for `variance <= mean (1 - mean)`.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Above this concentration the matched Beta is replaced by the normal with
/// the same moments; the regularized incomplete beta loses accuracy there.
pub const NORMAL_LIMIT: f64 = 1e6;

enum Matched {
    Degenerate,
    Beta(Beta),
    Normal(Normal),
}

impl Matched {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            Matched::Degenerate => unreachable!("degenerate intervals are handled by the caller"),
            Matched::Beta(d) => d.cdf(x),
            Matched::Normal(d) => d.cdf(x),
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self {
            Matched::Degenerate => unreachable!("degenerate intervals are handled by the caller"),
            Matched::Beta(d) => d.inverse_cdf(p),
            Matched::Normal(d) => d.inverse_cdf(p).clamp(0.0, 1.0),
        }
    }
}

fn matched(mean: f64, variance: f64) -> Result<Matched, EvalError> {
    if variance > mean * (1.0 - mean) + FEASIBILITY_SLACK || variance < 0.0 || !(0.0..=1.0).contains(&mean) {
        return Err(EvalError::InfeasibleVariance { mean, variance });
    }
    if variance == 0.0 {
        return Ok(Matched::Degenerate);
    }
    let nu = mean * (1.0 - mean) / variance - 1.0;
    if !(nu > 0.0) {
        return Ok(Matched::Degenerate);
    }
    if nu > NORMAL_LIMIT {
        return Ok(Normal::new(mean, variance.sqrt()).map_or(Matched::Degenerate, Matched::Normal));
    }
    Ok(Beta::new(mean * nu, (1.0 - mean) * nu).map_or(Matched::Degenerate, Matched::Beta))
}

/// Equal-tailed `gamma` interval of the Beta distribution matching `mean` and
/// `variance`. Zero variance, or moments on the feasibility boundary, give
/// the degenerate interval `[mean, mean]`.
pub fn confidence_interval(mean: f64, variance: f64, gamma: f64) -> Result<(f64, f64), EvalError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(EvalError::InvalidGamma(gamma));
    }
    match matched(mean, variance)? {
        Matched::Degenerate => Ok((mean, mean)),
        d => Ok((d.quantile((1.0 - gamma) / 2.0), d.quantile((1.0 + gamma) / 2.0))),
    }
}

/// Whether `truth` lies in the `gamma` interval. Evaluated as
/// `|F(truth) - 1/2| <= gamma / 2` on the matched CDF, which is the same
/// test without inverting the CDF. Infeasible moments count as the interval
/// `[0, 1]`.
pub fn covers(truth: f64, mean: f64, variance: f64, gamma: f64) -> bool {
    match matched(mean, variance) {
        Err(_) => true,
        Ok(Matched::Degenerate) => truth == mean,
        Ok(d) => (d.cdf(truth) - 0.5).abs() <= gamma / 2.0,
    }
}

/// One ground-truth probability paired with an engine's moments for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSample {
    pub truth: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecbodCurve {
    pub gammas: Vec<f64>,
    pub fractions: Vec<f64>,
}

impl DecbodCurve {
    /// Root-mean-square distance from the diagonal `fraction = gamma`.
    pub fn rms_deviation(&self) -> f64 {
        let sum: f64 = self.gammas.iter().zip(&self.fractions).map(|(g, f)| (f - g).powi(2)).sum();
        (sum / self.gammas.len() as f64).sqrt()
    }
}

pub fn decbod_samples(samples: &[CoverageSample], gammas: &[f64]) -> Result<DecbodCurve, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoRecords);
    }
    if let Some(&g) = gammas.iter().find(|g| !(0.0..1.0).contains(*g)) {
        return Err(EvalError::InvalidGamma(g));
    }
    let fractions = gammas
        .iter()
        .map(|&g| {
            let hits = samples.iter().filter(|s| covers(s.truth, s.mean, s.variance, g)).count();
            hits as f64 / samples.len() as f64
        })
        .collect();
    Ok(DecbodCurve { gammas: gammas.to_vec(), fractions })
}

/// States tested per node: only state 0 for binary nodes, every state otherwise.
fn tested_states(cardinality: usize) -> std::ops::Range<usize> {
    if cardinality == 2 {
        0..1
    } else {
        0..cardinality
    }
}

/// Per-node results of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub variable: usize,
    pub truth: Vec<f64>,
    pub solbp: MarginalEstimate,
    pub sospn: MarginalEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub ground_truth: usize,
    /// Every unobserved variable, in id order.
    pub nodes: Vec<NodeRecord>,
    pub solbp_rounds: usize,
    pub solbp_converged: bool,
    pub solbp_duration: Duration,
    pub sospn_duration: Duration,
}

pub fn coverage_samples(records: &[TrialRecord], engine: Engine) -> Vec<CoverageSample> {
    let mut out = Vec::new();
    for record in records {
        for node in &record.nodes {
            let estimate = match engine {
                Engine::Solbp => &node.solbp,
                Engine::Sospn => &node.sospn,
            };
            for y in tested_states(node.truth.len()) {
                out.push(CoverageSample { truth: node.truth[y], mean: estimate.mean[y], variance: estimate.variance(y) });
            }
        }
    }
    out
}

pub fn decbod(records: &[TrialRecord], engine: Engine, gammas: &[f64]) -> Result<DecbodCurve, EvalError> {
    decbod_samples(&coverage_samples(records, engine), gammas)
}

/// A resolved experiment: structure, observed variables and settings.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub structure: NetworkStructure,
    pub evidence_variables: Vec<usize>,
    pub config: ExperimentConfig,
}

impl ExperimentSetup {
    /// Resolve a configuration; `network_file` is taken relative to `base_dir`.
    pub fn from_config(config: ExperimentConfig, base_dir: &Path) -> Result<Self, EvalError> {
        config.validate()?;
        let (structure, topology) = match (&config.topology, &config.network_file) {
            (Some(name), _) => {
                let topology: Topology = name.parse()?;
                (builtin_structure(topology), Some(topology))
            }
            (None, Some(file)) => {
                let path = base_dir.join(file);
                let text = fs::read_to_string(&path).map_err(io_error(&path))?;
                (parse_network(&text)?.structure().clone(), None)
            }
            (None, None) => unreachable!("validated configuration names a network"),
        };
        let evidence_variables = match (&config.evidence_variables, topology) {
            (Some(names), _) => resolve_evidence_variables(&structure, names)?,
            (None, Some(topology)) => default_evidence(topology),
            (None, None) => unreachable!("validated configuration lists evidence for a network file"),
        };
        Ok(ExperimentSetup { structure, evidence_variables, config })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub trial: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// Successful trials in trial order.
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

fn run_trial(setup: &ExperimentSetup, spn: &Spn, trial: usize) -> Result<TrialRecord, InferenceError> {
    let config = &setup.config;
    let structure = &setup.structure;
    let ground_truth = trial / config.trials_per_ground_truth;
    let truth = sample_ground_truth(structure, &mut stream(config.seed, Stream::GroundTruth, ground_truth as u64));
    let observed = ancestral_sample(&truth, &mut stream(config.seed, Stream::Evidence, ground_truth as u64));
    let evidence = Evidence::from_pairs(structure, setup.evidence_variables.iter().map(|&v| (v, observed[v])))?;
    let data = sample_dataset(&truth, config.n_train, &mut stream(config.seed, Stream::TrainingData, trial as u64));
    let uncertain = learn_dirichlet(structure, &data);
    let moments = uncertain.moments();

    let options = PropagationOptions::new(config.epsilon, config.max_rounds);
    let mut schedule = stream(config.seed, Stream::Schedule, trial as u64);
    let start = Instant::now();
    let solbp = run_solbp_with_moments(structure, &moments, &evidence, &options, &mut schedule)?;
    let solbp_duration = start.elapsed();

    let start = Instant::now();
    let sospn = sospn_query_with_moments(spn, structure, &moments, &evidence)?;
    let sospn_duration = start.elapsed();

    let exact = enumerate_query(&truth, &evidence)?;
    let nodes = (0..structure.len())
        .filter(|&v| !evidence.contains(v))
        .map(|v| NodeRecord {
            variable: v,
            truth: exact.marginals[v].clone(),
            solbp: solbp.estimates[v].clone(),
            sospn: sospn[v].clone(),
        })
        .collect();
    Ok(TrialRecord {
        trial,
        ground_truth,
        nodes,
        solbp_rounds: solbp.report.rounds,
        solbp_converged: solbp.report.converged,
        solbp_duration,
        sospn_duration,
    })
}

/// Run every trial on `jobs` threads (0 means all available cores).
pub fn run_experiment(setup: &ExperimentSetup, jobs: usize) -> Result<ExperimentOutcome, EvalError> {
    let spn = Spn::compile(&setup.structure)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let results: Vec<Result<TrialRecord, TrialFailure>> = pool.install(|| {
        (0..setup.config.n_runs)
            .into_par_iter()
            .map(|trial| run_trial(setup, &spn, trial).map_err(|e| TrialFailure { trial, reason: e.to_string() }))
            .collect()
    });
    let mut outcome = ExperimentOutcome { records: Vec::new(), failures: Vec::new() };
    for result in results {
        match result {
            Ok(record) => outcome.records.push(record),
            Err(failure) => outcome.failures.push(failure),
        }
    }
    Ok(outcome)
}

/// One line of the trials file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub ground_truth: usize,
    pub variable: String,
    pub state: usize,
    pub cardinality: usize,
    pub truth: f64,
    pub solbp_mean: f64,
    pub solbp_variance: f64,
    pub sospn_mean: f64,
    pub sospn_variance: f64,
    pub solbp_rounds: usize,
}

/// One line of the scatter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub trial: usize,
    pub variable: String,
    pub state: usize,
    pub mean_solbp: f64,
    pub mean_sospn: f64,
    pub var_solbp: f64,
    pub var_sospn: f64,
}

pub fn trial_rows(records: &[TrialRecord], structure: &NetworkStructure) -> Vec<TrialRow> {
    let mut rows = Vec::new();
    for record in records {
        for node in &record.nodes {
            for state in 0..node.truth.len() {
                rows.push(TrialRow {
                    trial: record.trial,
                    ground_truth: record.ground_truth,
                    variable: structure.variable(node.variable).name.clone(),
                    state,
                    cardinality: node.truth.len(),
                    truth: node.truth[state],
                    solbp_mean: node.solbp.mean[state],
                    solbp_variance: node.solbp.variance(state),
                    sospn_mean: node.sospn.mean[state],
                    sospn_variance: node.sospn.variance(state),
                    solbp_rounds: record.solbp_rounds,
                });
            }
        }
    }
    rows
}

/// SOLBP against SOSPN, one row per (trial, node, state).
pub fn scatter_export(records: &[TrialRecord], structure: &NetworkStructure) -> Vec<ScatterRow> {
    trial_rows(records, structure)
        .into_iter()
        .map(|r| ScatterRow {
            trial: r.trial,
            variable: r.variable,
            state: r.state,
            mean_solbp: r.solbp_mean,
            mean_sospn: r.sospn_mean,
            var_solbp: r.solbp_variance,
            var_sospn: r.sospn_variance,
        })
        .collect()
}

/// Coverage samples recovered from trials-file rows, using the same
/// per-node state selection as [`coverage_samples`].
pub fn coverage_from_rows(rows: &[TrialRow], engine: Engine) -> Vec<CoverageSample> {
    rows.iter()
        .filter(|r| tested_states(r.cardinality).contains(&r.state))
        .map(|r| {
            let (mean, variance) = match engine {
                Engine::Solbp => (r.solbp_mean, r.solbp_variance),
                Engine::Sospn => (r.sospn_mean, r.sospn_variance),
            };
            CoverageSample { truth: r.truth, mean, variance }
        })
        .collect()
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn write_table<T: Serialize>(schema: &str, header: &[&str], rows: &[T]) -> Result<Vec<u8>, EvalError> {
    let mut out = Vec::new();
    writeln!(out, "{schema}").expect("writing to memory");
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer.write_record(header)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.into_inner().map_err(|e| EvalError::Csv(e.into_error().into()))
}

pub fn trials_csv(rows: &[TrialRow]) -> Result<Vec<u8>, EvalError> {
    write_table(TRIALS_SCHEMA, &TRIALS_HEADER, rows)
}

pub fn scatter_csv(rows: &[ScatterRow]) -> Result<Vec<u8>, EvalError> {
    write_table(SCATTER_SCHEMA, &SCATTER_HEADER, rows)
}

pub fn timing_csv(records: &[TrialRecord]) -> Result<Vec<u8>, EvalError> {
    let rows: Vec<(usize, f64, f64, usize, bool)> = records
        .iter()
        .map(|r| {
            (r.trial, r.solbp_duration.as_secs_f64(), r.sospn_duration.as_secs_f64(), r.solbp_rounds, r.solbp_converged)
        })
        .collect();
    write_table(TIMING_SCHEMA, &TIMING_HEADER, &rows)
}

pub fn decbod_csv(solbp: &DecbodCurve, sospn: &DecbodCurve) -> Result<Vec<u8>, EvalError> {
    let rows: Vec<(f64, f64, f64)> =
        solbp.gammas.iter().zip(&solbp.fractions).zip(&sospn.fractions).map(|((g, a), b)| (*g, *a, *b)).collect();
    write_table(DECBOD_SCHEMA, &DECBOD_HEADER, &rows)
}

pub fn parse_trials_csv(text: &str) -> Result<Vec<TrialRow>, EvalError> {
    let body = text
        .strip_prefix(TRIALS_SCHEMA)
        .ok_or_else(|| EvalError::Malformed(format!("missing `{TRIALS_SCHEMA}` line")))?;
    let mut reader = csv::ReaderBuilder::new().from_reader(body.trim_start_matches(['\r', '\n']).as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != TRIALS_HEADER {
        return Err(EvalError::Malformed(format!("unexpected header {}", header.join(","))));
    }
    Ok(reader.deserialize().collect::<Result<Vec<TrialRow>, _>>()?)
}

/// Reproducibility record written beside experiment outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: &'a ExperimentConfig,
    pub evidence_variables: Vec<String>,
    pub jobs: usize,
    pub successful_trials: usize,
    pub failed_trials: Vec<(usize, String)>,
    pub files: Vec<&'static str>,
}

pub const TRIALS_FILE: &str = "trials.csv";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const DECBOD_FILE: &str = "decbod.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), EvalError> {
    fs::write(path, bytes).map_err(io_error(path))
}

/// Write trials, scatter and timing CSVs plus the manifest into `dir`.
pub fn write_experiment(
    dir: &Path,
    setup: &ExperimentSetup,
    outcome: &ExperimentOutcome,
    jobs: usize,
) -> Result<Vec<PathBuf>, EvalError> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let rows = trial_rows(&outcome.records, &setup.structure);
    let outputs = [
        (TRIALS_FILE, trials_csv(&rows)?),
        (SCATTER_FILE, scatter_csv(&scatter_export(&outcome.records, &setup.structure))?),
        (TIMING_FILE, timing_csv(&outcome.records)?),
    ];
    let mut written = Vec::new();
    for (name, bytes) in &outputs {
        let path = dir.join(name);
        write_file(&path, bytes)?;
        written.push(path);
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &setup.config,
        evidence_variables: setup
            .evidence_variables
            .iter()
            .map(|&v| setup.structure.variable(v).name.clone())
            .collect(),
        jobs,
        successful_trials: outcome.records.len(),
        failed_trials: outcome.failures.iter().map(|f| (f.trial, f.reason.clone())).collect(),
        files: vec![TRIALS_FILE, SCATTER_FILE, TIMING_FILE],
    };
    let path = dir.join(MANIFEST_FILE);
    write_file(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Beta as BetaSampler, Distribution};

    #[test]
    fn uniform_interval() {
        let (lo, hi) = confidence_interval(0.5, 1.0 / 12.0, 0.5).unwrap();
        assert_abs_diff_eq!(lo, 0.25, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 0.75, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_interval() {
        assert_eq!(confidence_interval(0.3, 0.0, 0.8).unwrap(), (0.3, 0.3));
        assert_eq!(confidence_interval(0.3, 0.21, 0.8).unwrap(), (0.3, 0.3));
    }

    #[test]
    fn beta22_interval_matches_cubic_quantiles() {
        // Beta(2,2) CDF is 3x^2 - 2x^3; bisect it independently
        let quantile = |p: f64| {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 3.0 * mid * mid - 2.0 * mid.powi(3) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let (lo, hi) = confidence_interval(0.5, 0.05, 0.9).unwrap();
        assert_abs_diff_eq!(lo, quantile(0.05), epsilon = 1e-8);
        assert_abs_diff_eq!(hi, quantile(0.95), epsilon = 1e-8);
    }

    #[test]
    fn infeasible_variance_is_an_error() {
        assert!(matches!(confidence_interval(0.5, 0.3, 0.5), Err(EvalError::InfeasibleVariance { .. })));
        assert!(matches!(confidence_interval(0.5, 0.01, 1.0), Err(EvalError::InvalidGamma(_))));
    }

    #[test]
    fn covers_agrees_with_interval() {
        let mut rng = crate::rng::stream(1, Stream::Fixture, 0);
        for _ in 0..500 {
            let mean: f64 = rng.random_range(0.05..0.95);
            let variance = mean * (1.0 - mean) * rng.random_range(0.01..0.5);
            let gamma: f64 = rng.random_range(0.0..0.99);
            let truth: f64 = rng.random_range(0.0..1.0);
            let (lo, hi) = confidence_interval(mean, variance, gamma).unwrap();
            if (truth - lo).abs() > 1e-9 && (truth - hi).abs() > 1e-9 {
                assert_eq!(covers(truth, mean, variance, gamma), lo <= truth && truth <= hi);
            }
        }
    }

    #[test]
    fn exact_engine_covers_everywhere() {
        let samples: Vec<CoverageSample> =
            (1..100).map(|k| CoverageSample { truth: k as f64 / 100.0, mean: k as f64 / 100.0, variance: 1e-12 }).collect();
        let curve = decbod_samples(&samples, &[0.1, 0.5, 0.9]).unwrap();
        assert!(curve.fractions.iter().all(|&f| f == 1.0));
        let (lo, hi) = confidence_interval(0.37, 1e-14, 0.9).unwrap();
        assert!(lo < 0.37 && 0.37 < hi && hi - lo < 1e-6);
    }

    #[test]
    fn zero_gamma_covers_nothing() {
        let mut rng = crate::rng::stream(2, Stream::Fixture, 0);
        let samples: Vec<CoverageSample> = (0..1000)
            .map(|_| CoverageSample { truth: rng.random_range(0.0..1.0), mean: 0.5, variance: 0.02 })
            .collect();
        let curve = decbod_samples(&samples, &[0.0]).unwrap();
        assert!(curve.fractions[0] < 0.01);
    }

    #[test]
    fn calibrated_samples_follow_the_diagonal() {
        let mut rng = crate::rng::stream(3, Stream::Fixture, 0);
        let samples: Vec<CoverageSample> = (0..1000)
            .map(|_| {
                let a: f64 = rng.random_range(1.0..20.0);
                let b: f64 = rng.random_range(1.0..20.0);
                let truth = BetaSampler::new(a, b).unwrap().sample(&mut rng);
                let s = a + b;
                CoverageSample { truth, mean: a / s, variance: a * b / (s * s * (s + 1.0)) }
            })
            .collect();
        let gammas = crate::ingest::default_gamma_grid();
        let curve = decbod_samples(&samples, &gammas).unwrap();
        for (g, f) in curve.gammas.iter().zip(&curve.fractions) {
            assert!((f - g).abs() < 0.04, "gamma {g}: fraction {f}");
        }
        assert!(curve.fractions.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn empty_scatter_still_has_header() {
        let text = String::from_utf8(scatter_csv(&[]).unwrap()).unwrap();
        assert_eq!(text, format!("{SCATTER_SCHEMA}\n{}\n", SCATTER_HEADER.join(",")));
    }

    #[test]
    fn trials_round_trip() {
        let rows = vec![TrialRow {
            trial: 3,
            ground_truth: 0,
            variable: "B".into(),
            state: 1,
            cardinality: 2,
            truth: 0.125,
            solbp_mean: 0.2,
            solbp_variance: 0.01,
            sospn_mean: 0.2,
            sospn_variance: 0.01,
            solbp_rounds: 4,
        }];
        let text = String::from_utf8(trials_csv(&rows).unwrap()).unwrap();
        assert_eq!(parse_trials_csv(&text).unwrap(), rows);
        assert!(parse_trials_csv("trial\n").is_err());
    }

    #[test]
    fn pearson_of_lines() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0, epsilon = 1e-12);
        // sxy = 4.5, sxx = 2, syy = 61/6
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]), 4.5 / (2.0f64 * 61.0 / 6.0).sqrt(), epsilon = 1e-12);
    }
}
