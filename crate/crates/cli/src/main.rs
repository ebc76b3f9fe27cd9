//! `solbp` command-line interface.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage error, 3 unreadable or
//! malformed input, 4 evidence with zero probability, 5 propagation did not
//! converge (only with `--strict`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use solbp_core::bp::{run_bp, PropagationOptions};
use solbp_core::eval::{
    self, coverage_from_rows, decbod_csv, decbod_samples, parse_trials_csv, run_experiment, write_experiment,
    write_file, Engine, EvalError, ExperimentSetup, DECBOD_FILE,
};
use solbp_core::exact::{enumerate_query, learn_dirichlet, monte_carlo_second_order, sample_dataset, ancestral_sample};
use solbp_core::ingest::{
    self, builtin_structure, default_evidence, parse_evidence, parse_experiment_config, parse_network,
    sample_ground_truth, serialize_concrete, serialize_dataset, serialize_evidence, serialize_uncertain,
    ExperimentConfig, IngestError, ParsedNetwork, Topology,
};
use solbp_core::model::{Evidence, MarginalEstimate, NetworkMoments, NetworkStructure, RowMoments};
use nalgebra::DMatrix;
use solbp_core::rng::{stream, Stream};
use solbp_core::solbp::run_solbp_with_moments;
use solbp_core::spn::{sospn_query_with_moments, Spn};
use solbp_core::InferenceError;

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_INCONSISTENT: u8 = 4;
const EXIT_NOT_CONVERGED: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "solbp", version, about = "Second-order inference for Bayesian networks with Dirichlet tables")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Convergence threshold on the largest change of any message mean.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Round limit for loopy propagation.
    #[arg(long, global = true)]
    max_rounds: Option<usize>,
    /// Directory for every file the command writes.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads for trials; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Exit with code 5 when propagation stops before converging.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineFlag {
    Bp,
    Solbp,
    Sospn,
    Enum,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TopologyFlag {
    Chain3,
    Tent3,
    V3,
    Triangle,
    Diamond,
    Net21,
}

impl From<TopologyFlag> for Topology {
    fn from(t: TopologyFlag) -> Self {
        match t {
            TopologyFlag::Chain3 => Topology::Chain3,
            TopologyFlag::Tent3 => Topology::Tent3,
            TopologyFlag::V3 => Topology::V3,
            TopologyFlag::Triangle => Topology::Triangle,
            TopologyFlag::Diamond => Topology::Diamond,
            TopologyFlag::Net21 => Topology::Net21,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-node marginal means and variances for one network and evidence set.
    Infer {
        /// Network document (probabilities or alphas).
        #[arg(long)]
        network: PathBuf,
        /// Evidence document; no evidence when omitted.
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = EngineFlag::Solbp)]
        engine: EngineFlag,
        /// Parameter draws for the Monte-Carlo engine.
        #[arg(long, default_value_t = 10_000)]
        mc_samples: usize,
    },
    /// Run the SOLBP-versus-SOSPN trial protocol and write trials, scatter and timing CSVs.
    Compare {
        /// Experiment document.
        #[arg(long, conflicts_with = "topology")]
        config: Option<PathBuf>,
        /// Built-in topology with default settings, instead of a document.
        #[arg(long, value_enum)]
        topology: Option<TopologyFlag>,
        /// Override the number of trials.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Calibration curves from a trials CSV.
    Decbod {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        gamma_step: f64,
    },
    /// Time both second-order engines on a built-in topology.
    Bench {
        #[arg(long, value_enum, default_value_t = TopologyFlag::Net21)]
        topology: TopologyFlag,
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
    /// Write a ground-truth network, training data, learned network, evidence and experiment config.
    Gen {
        #[arg(long, value_enum)]
        topology: TopologyFlag,
        #[arg(long, default_value_t = 100)]
        n_train: usize,
    },
    /// Compile a network into an arithmetic circuit and report its size.
    CompileSpn {
        #[arg(long)]
        network: PathBuf,
    },
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, error: anyhow!(message.into()) }
    }
}

fn inference_code(e: &InferenceError) -> u8 {
    match e {
        InferenceError::InconsistentEvidence => EXIT_INCONSISTENT,
        _ => EXIT_OTHER,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = if let Some(e) = error.downcast_ref::<InferenceError>() {
            inference_code(e)
        } else if error.downcast_ref::<IngestError>().is_some() {
            EXIT_PARSE
        } else if let Some(e) = error.downcast_ref::<EvalError>() {
            match e {
                EvalError::Ingest(_) | EvalError::Malformed(_) | EvalError::Csv(_) | EvalError::Json(_) => EXIT_PARSE,
                EvalError::Inference(e) => inference_code(e),
                EvalError::InvalidGamma(_) => EXIT_USAGE,
                _ => EXIT_OTHER,
            }
        } else if error.downcast_ref::<std::io::Error>().is_some() {
            EXIT_PARSE
        } else {
            EXIT_OTHER
        };
        Failure { code, error }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error);
            ExitCode::from(failure.code)
        }
    }
}

fn validate(common: &Common) -> Outcome {
    if let Some(e) = common.epsilon {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Failure::usage("--epsilon must be a positive number"));
        }
    }
    if common.max_rounds == Some(0) {
        return Err(Failure::usage("--max-rounds must be positive"));
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    validate(&cli.common)?;
    let common = &cli.common;
    match cli.command {
        Command::Infer { network, evidence, engine, mc_samples } => {
            if engine == EngineFlag::Mc && mc_samples < 2 {
                return Err(Failure::usage("--mc-samples must be at least 2"));
            }
            infer(common, &network, evidence.as_deref(), engine, mc_samples)
        }
        Command::Compare { config, topology, runs } => {
            if runs == Some(0) {
                return Err(Failure::usage("--runs must be positive"));
            }
            let (config, base) = match (config, topology) {
                (Some(path), _) => {
                    let text = read(&path)?;
                    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
                    (parse_experiment_config(&text).with_context(|| path.display().to_string())?, base)
                }
                (None, Some(_)) if common.output_dir.is_none() => {
                    return Err(Failure::usage("compare --topology needs --output-dir"));
                }
                (None, Some(t)) => (ExperimentConfig::for_topology(t.into()), PathBuf::new()),
                (None, None) => return Err(Failure::usage("compare needs --config or --topology")),
            };
            compare(common, config, &base, runs)
        }
        Command::Decbod { trials, gamma_step } => {
            if !(gamma_step > 0.0 && gamma_step <= 0.99) {
                return Err(Failure::usage("--gamma-step must lie in (0, 0.99]"));
            }
            decbod(common, &trials, gamma_step)
        }
        Command::Bench { topology, runs } => {
            if runs == 0 {
                return Err(Failure::usage("--runs must be positive"));
            }
            bench(common, topology.into(), runs)
        }
        Command::Gen { topology, n_train } => generate(common, topology.into(), n_train),
        Command::CompileSpn { network } => compile_spn(common, &network),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).map_err(Failure::from)
}

fn output_dir(common: &Common) -> Result<Option<&Path>, Failure> {
    match &common.output_dir {
        None => Ok(None),
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            Ok(Some(dir))
        }
    }
}

fn options(common: &Common) -> PropagationOptions {
    PropagationOptions::new(
        common.epsilon.unwrap_or_else(ingest::default_epsilon),
        common.max_rounds.unwrap_or_else(ingest::default_max_rounds),
    )
}

fn moments_of(network: &ParsedNetwork) -> NetworkMoments {
    match network {
        ParsedNetwork::Uncertain(u) => u.moments(),
        ParsedNetwork::Concrete(c) => NetworkMoments {
            tables: c
                .tables()
                .iter()
                .map(|t| {
                    t.rows
                        .iter()
                        .map(|r| RowMoments { mean: r.clone(), cov: DMatrix::zeros(r.len(), r.len()) })
                        .collect()
                })
                .collect(),
        },
    }
}

fn first_order(estimates: Vec<Vec<f64>>) -> Vec<MarginalEstimate> {
    estimates
        .into_iter()
        .enumerate()
        .map(|(variable, mean)| {
            let n = mean.len();
            MarginalEstimate { variable, mean, cov: DMatrix::zeros(n, n) }
        })
        .collect()
}

fn not_converged(rounds: usize) -> Failure {
    Failure { code: EXIT_NOT_CONVERGED, error: anyhow!("propagation stopped after {rounds} rounds without converging") }
}

fn infer(
    common: &Common,
    network_path: &Path,
    evidence_path: Option<&Path>,
    engine: EngineFlag,
    mc_samples: usize,
) -> Outcome {
    let network = parse_network(&read(network_path)?).with_context(|| network_path.display().to_string())?;
    let structure = network.structure().clone();
    let evidence = match evidence_path {
        Some(path) => parse_evidence(&read(path)?, &structure).with_context(|| path.display().to_string())?,
        None => Evidence::new(),
    };
    let seed = common.seed.unwrap_or(0);
    let mut schedule = stream(seed, Stream::Schedule, 0);
    let options = options(common);
    let mut unconverged = None;
    let estimates = match engine {
        EngineFlag::Bp | EngineFlag::Enum => {
            let concrete = match &network {
                ParsedNetwork::Concrete(c) => c.clone(),
                ParsedNetwork::Uncertain(u) => u.mean_network(),
            };
            if engine == EngineFlag::Bp {
                let out = run_bp(&concrete, &evidence, &options, &mut schedule).map_err(anyhow::Error::from)?;
                if !out.report.converged {
                    unconverged = Some(out.report.rounds);
                }
                first_order(out.beliefs)
            } else {
                first_order(enumerate_query(&concrete, &evidence).map_err(anyhow::Error::from)?.marginals)
            }
        }
        EngineFlag::Solbp => {
            let out = run_solbp_with_moments(&structure, &moments_of(&network), &evidence, &options, &mut schedule)
                .map_err(anyhow::Error::from)?;
            if !out.report.converged {
                unconverged = Some(out.report.rounds);
            }
            out.estimates
        }
        EngineFlag::Sospn => {
            let spn = Spn::compile(&structure).map_err(anyhow::Error::from)?;
            sospn_query_with_moments(&spn, &structure, &moments_of(&network), &evidence).map_err(anyhow::Error::from)?
        }
        EngineFlag::Mc => {
            let ParsedNetwork::Uncertain(uncertain) = &network else {
                return Err(Failure::usage("the mc engine needs a network with alphas"));
            };
            let mc = monte_carlo_second_order(uncertain, &evidence, mc_samples, seed).map_err(anyhow::Error::from)?;
            let mut all = first_order(
                (0..structure.len())
                    .map(|v| {
                        let mut p = vec![0.0; structure.cardinality(v)];
                        if let Some(s) = evidence.get(v) {
                            p[s] = 1.0;
                        }
                        p
                    })
                    .collect(),
            );
            for estimate in mc.estimates {
                let v = estimate.variable;
                all[v] = estimate;
            }
            all
        }
    };
    let table = estimate_table(&structure, &estimates, '\t');
    print!("{table}");
    if let Some(dir) = output_dir(common)? {
        let path = dir.join("infer.csv");
        let text = format!("# solbp-infer v1\n{}", estimate_table(&structure, &estimates, ','));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    match unconverged {
        Some(rounds) if common.strict => Err(not_converged(rounds)),
        Some(rounds) => {
            eprintln!("warning: propagation stopped after {rounds} rounds without converging");
            Ok(())
        }
        None => Ok(()),
    }
}

fn estimate_table(structure: &NetworkStructure, estimates: &[MarginalEstimate], sep: char) -> String {
    let mut out = format!("variable{sep}state{sep}mean{sep}variance\n");
    for e in estimates {
        let var = structure.variable(e.variable);
        for (s, name) in var.states.iter().enumerate() {
            writeln!(out, "{}{sep}{}{sep}{}{sep}{}", var.name, name, e.mean[s], e.variance(s)).unwrap();
        }
    }
    out
}

fn compare(common: &Common, mut config: ExperimentConfig, base: &Path, runs: Option<usize>) -> Outcome {
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(epsilon) = common.epsilon {
        config.epsilon = epsilon;
    }
    if let Some(max_rounds) = common.max_rounds {
        config.max_rounds = max_rounds;
    }
    if let Some(runs) = runs {
        config.n_runs = runs;
    }
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    let dir = config.output_dir.clone();
    let setup = ExperimentSetup::from_config(config, base).map_err(anyhow::Error::from)?;
    let outcome = run_experiment(&setup, common.jobs).map_err(anyhow::Error::from)?;
    let written = write_experiment(&dir, &setup, &outcome, common.jobs).map_err(anyhow::Error::from)?;
    let unconverged = outcome.records.iter().filter(|r| !r.solbp_converged).count();
    println!(
        "{} trials succeeded, {} failed, {} did not converge",
        outcome.records.len(),
        outcome.failures.len(),
        unconverged
    );
    for path in written {
        println!("wrote {}", path.display());
    }
    if common.strict && unconverged > 0 {
        let rounds = setup.config.max_rounds;
        return Err(not_converged(rounds));
    }
    Ok(())
}

fn decbod(common: &Common, trials: &Path, gamma_step: f64) -> Outcome {
    let rows = parse_trials_csv(&read(trials)?).map_err(anyhow::Error::from)?;
    let gammas = ingest::gamma_grid(gamma_step);
    let solbp = decbod_samples(&coverage_from_rows(&rows, Engine::Solbp), &gammas).map_err(anyhow::Error::from)?;
    let sospn = decbod_samples(&coverage_from_rows(&rows, Engine::Sospn), &gammas).map_err(anyhow::Error::from)?;
    let bytes = decbod_csv(&solbp, &sospn).map_err(anyhow::Error::from)?;
    println!("RMS distance from the diagonal: SOLBP {:.4}, SOSPN {:.4}", solbp.rms_deviation(), sospn.rms_deviation());
    match output_dir(common)? {
        Some(dir) => {
            let path = dir.join(DECBOD_FILE);
            write_file(&path, &bytes).map_err(anyhow::Error::from)?;
            println!("wrote {}", path.display());
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    Ok(())
}

fn bench(common: &Common, topology: Topology, runs: usize) -> Outcome {
    let mut config = ExperimentConfig::for_topology(topology);
    config.n_runs = runs;
    config.seed = common.seed.unwrap_or(0);
    if let Some(epsilon) = common.epsilon {
        config.epsilon = epsilon;
    }
    if let Some(max_rounds) = common.max_rounds {
        config.max_rounds = max_rounds;
    }
    let setup = ExperimentSetup::from_config(config, Path::new("")).map_err(anyhow::Error::from)?;
    let spn = Spn::compile(&setup.structure).map_err(anyhow::Error::from)?;
    let jobs = if common.jobs == 0 { 1 } else { common.jobs };
    let outcome = run_experiment(&setup, jobs).map_err(anyhow::Error::from)?;
    let n = outcome.records.len().max(1) as f64;
    let solbp: f64 = outcome.records.iter().map(|r| r.solbp_duration.as_secs_f64()).sum::<f64>() / n;
    let sospn: f64 = outcome.records.iter().map(|r| r.sospn_duration.as_secs_f64()).sum::<f64>() / n;
    let faster = outcome.records.iter().filter(|r| r.solbp_duration < r.sospn_duration).count();
    println!("topology {topology}: {} nodes, circuit {} nodes / {} edges", setup.structure.len(), spn.len(), spn.edge_count());
    println!("mean per-trial time: SOLBP {:.3e} s, SOSPN {:.3e} s", solbp, sospn);
    println!("SOLBP faster in {faster}/{} trials", outcome.records.len());
    if let Some(dir) = output_dir(common)? {
        let path = dir.join(eval::TIMING_FILE);
        write_file(&path, &eval::timing_csv(&outcome.records).map_err(anyhow::Error::from)?)
            .map_err(anyhow::Error::from)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn generate(common: &Common, topology: Topology, n_train: usize) -> Outcome {
    let Some(dir) = output_dir(common)? else {
        return Err(Failure::usage("gen needs --output-dir"));
    };
    let seed = common.seed.unwrap_or(0);
    let structure = builtin_structure(topology);
    let truth = sample_ground_truth(&structure, &mut stream(seed, Stream::GroundTruth, 0));
    let data = sample_dataset(&truth, n_train, &mut stream(seed, Stream::TrainingData, 0));
    let learned = learn_dirichlet(&structure, &data);
    let observed = ancestral_sample(&truth, &mut stream(seed, Stream::Evidence, 0));
    let evidence =
        Evidence::from_pairs(&structure, default_evidence(topology).into_iter().map(|v| (v, observed[v])))
            .map_err(|e| anyhow::Error::from(InferenceError::from(e)))?;
    let mut config = ExperimentConfig::for_topology(topology);
    config.seed = seed;
    config.n_train = n_train;
    let name = topology.name();
    let files = [
        (format!("{name}-truth.json"), serialize_concrete(&truth)),
        (format!("{name}-learned.json"), serialize_uncertain(&learned)),
        (format!("{name}-data.csv"), serialize_dataset(&data, &structure)),
        (format!("{name}-evidence.json"), serialize_evidence(&evidence, &structure)),
        (
            format!("{name}-experiment.json"),
            serde_json::to_string_pretty(&config).context("serializing experiment")? + "\n",
        ),
    ];
    for (file, text) in files {
        let path = dir.join(file);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn compile_spn(common: &Common, network_path: &Path) -> Outcome {
    let network = parse_network(&read(network_path)?).with_context(|| network_path.display().to_string())?;
    let spn = Spn::compile(network.structure()).map_err(anyhow::Error::from)?;
    println!("circuit: {} nodes, {} edges", spn.len(), spn.edge_count());
    if let Some(dir) = output_dir(common)? {
        let path = dir.join("circuit.txt");
        fs::write(&path, spn.dump()).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
