//! Network, evidence, dataset and experiment documents, plus the built-in
//! benchmark topologies and random ground-truth generation.
//!
//! Network documents are JSON:
//!
//! ```text
//! {
//!   "edges": [["A", "B"]],
//!   "format": "solbp-network",
//!   "tables": [
//!     {"probabilities": [{"given": [], "values": [0.3, 0.7]}], "variable": "A"},
//!     {"probabilities": [{"given": ["s0"], "values": [...]}, ...], "variable": "B"}
//!   ],
//!   "variables": [{"name": "A", "states": ["s0", "s1"]}, ...],
//!   "version": 1
//! }
//! ```
//!
//! A table holds either `probabilities` (concrete network) or `alphas`
//! (uncertain network); all tables in one document must agree. A variable's
//! parent order is the order its incoming edges appear in `edges`, and each
//! row's `given` lists parent states in that order. Rows may appear in any
//! order in the document; the canonical serialization writes them in
//! mixed-radix order with sorted keys and 17 significant digits.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{sample_dirichlet_row, Dataset};
use crate::model::{
    parent_config_states, ConcreteCpt, ConcreteNetwork, DirichletCpt, Evidence, ModelError, NetworkStructure,
    UncertainNetwork, Variable, ROW_SUM_TOLERANCE,
};
use crate::rng::{stream, Stream};

pub const NETWORK_FORMAT: &str = "solbp-network";
pub const EVIDENCE_FORMAT: &str = "solbp-evidence";
pub const EXPERIMENT_FORMAT: &str = "solbp-experiment";
pub const FORMAT_VERSION: u32 = 1;

/// Seed of the 21-node topology generator.
pub const NET21_SEED: u64 = 21;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("expected format `{expected}`, found `{found}`")]
    WrongFormat { expected: &'static str, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("edge references unknown parent `{0}`")]
    UnknownParent(String),
    #[error("variable `{variable}` has no state `{state}`")]
    UnknownState { variable: String, state: String },
    #[error("duplicate table for `{0}`")]
    DuplicateTable(String),
    #[error("missing table for `{0}`")]
    MissingTable(String),
    #[error("table for `{0}` must hold exactly one of `probabilities` or `alphas`")]
    AmbiguousTable(String),
    #[error("document mixes probability and alpha tables")]
    MixedTableKinds,
    #[error("table `{variable}` is missing the row given {given:?}")]
    MissingRow { variable: String, given: Vec<String> },
    #[error("table `{variable}` repeats the row given {given:?}")]
    DuplicateRow { variable: String, given: Vec<String> },
    #[error("row of `{variable}` has {found} entries, expected {expected}")]
    RowLength { variable: String, expected: usize, found: usize },
    #[error("row of `{variable}` given {given:?} sums to {sum}")]
    RowSum { variable: String, given: Vec<String>, sum: f64 },
    #[error("row of `{variable}` has negative or non-finite probability {value}")]
    InvalidProbability { variable: String, value: f64 },
    #[error("row of `{variable}` has non-positive alpha {value}")]
    NonPositiveAlpha { variable: String, value: f64 },
    #[error("directed cycle through `{0}`")]
    Cycle(String),
    #[error("variable `{0}` observed more than once")]
    DuplicateObservation(String),
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ModelError> for IngestError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Cycle(name) => IngestError::Cycle(name),
            ModelError::DuplicateVariable(name) => IngestError::DuplicateVariable(name),
            other => IngestError::Model(other),
        }
    }
}

fn syntax(e: serde_json::Error) -> IngestError {
    IngestError::Syntax { line: e.line(), column: e.column(), message: e.to_string() }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    format: String,
    version: u32,
    variables: Vec<VariableDoc>,
    edges: Vec<(String, String)>,
    tables: Vec<TableDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableDoc {
    name: String,
    states: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    variable: String,
    probabilities: Option<Vec<RowDoc>>,
    alphas: Option<Vec<RowDoc>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDoc {
    given: Vec<String>,
    values: Vec<f64>,
}

/// Either kind of network a document can describe.
#[derive(Debug, Clone, PartialEq)]
pub enum ParsedNetwork {
    Concrete(ConcreteNetwork),
    Uncertain(UncertainNetwork),
}

impl ParsedNetwork {
    pub fn structure(&self) -> &NetworkStructure {
        match self {
            ParsedNetwork::Concrete(n) => n.structure(),
            ParsedNetwork::Uncertain(n) => n.structure(),
        }
    }
}

fn check_header(format: &str, version: u32, expected: &'static str) -> Result<(), IngestError> {
    if format != expected {
        return Err(IngestError::WrongFormat { expected, found: format.to_string() });
    }
    if version != FORMAT_VERSION {
        return Err(IngestError::UnsupportedVersion(version));
    }
    Ok(())
}

pub fn parse_network(text: &str) -> Result<ParsedNetwork, IngestError> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(syntax)?;
    check_header(&doc.format, doc.version, NETWORK_FORMAT)?;

    let mut index = HashMap::new();
    let mut variables = Vec::with_capacity(doc.variables.len());
    for (id, v) in doc.variables.into_iter().enumerate() {
        if index.insert(v.name.clone(), id).is_some() {
            return Err(IngestError::DuplicateVariable(v.name));
        }
        variables.push(Variable::new(id, v.name, v.states)?);
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (parent, child) in &doc.edges {
        let p = *index.get(parent).ok_or_else(|| IngestError::UnknownParent(parent.clone()))?;
        let c = *index.get(child).ok_or_else(|| IngestError::UnknownVariable(child.clone()))?;
        edges.push((p, c));
    }
    let structure = NetworkStructure::from_edges(variables, &edges)?;

    let mut tables: Vec<Option<(bool, Vec<RowDoc>)>> = (0..structure.len()).map(|_| None).collect();
    let mut saw_concrete = false;
    let mut saw_uncertain = false;
    for table in doc.tables {
        let id = *index.get(&table.variable).ok_or_else(|| IngestError::UnknownVariable(table.variable.clone()))?;
        let (concrete, rows) = match (table.probabilities, table.alphas) {
            (Some(rows), None) => (true, rows),
            (None, Some(rows)) => (false, rows),
            _ => return Err(IngestError::AmbiguousTable(table.variable)),
        };
        saw_concrete |= concrete;
        saw_uncertain |= !concrete;
        if tables[id].replace((concrete, rows)).is_some() {
            return Err(IngestError::DuplicateTable(table.variable));
        }
    }
    if saw_concrete && saw_uncertain {
        return Err(IngestError::MixedTableKinds);
    }

    let mut rows_by_variable = Vec::with_capacity(structure.len());
    for (id, table) in tables.into_iter().enumerate() {
        let name = &structure.variable(id).name;
        let (concrete, rows) = table.ok_or_else(|| IngestError::MissingTable(name.clone()))?;
        rows_by_variable.push(order_rows(&structure, id, rows, concrete)?);
    }

    if saw_uncertain {
        let tables = rows_by_variable.into_iter().map(|rows| DirichletCpt { rows }).collect();
        Ok(ParsedNetwork::Uncertain(UncertainNetwork::new(structure, tables)?))
    } else {
        let tables = rows_by_variable.into_iter().map(|rows| ConcreteCpt { rows }).collect();
        Ok(ParsedNetwork::Concrete(ConcreteNetwork::new(structure, tables)?))
    }
}

/// Validate rows and place them at their mixed-radix position.
fn order_rows(
    structure: &NetworkStructure,
    id: usize,
    rows: Vec<RowDoc>,
    concrete: bool,
) -> Result<Vec<Vec<f64>>, IngestError> {
    let variable = &structure.variable(id).name;
    let card = structure.cardinality(id);
    let parents = structure.parents(id);
    let mut slots: Vec<Option<Vec<f64>>> = vec![None; structure.row_count(id)];
    for row in rows {
        if row.given.len() != parents.len() {
            return Err(IngestError::RowLength { variable: variable.clone(), expected: parents.len(), found: row.given.len() });
        }
        let mut position = 0;
        for (&p, state) in parents.iter().zip(&row.given) {
            let parent = structure.variable(p);
            let s = parent.state_index(state).ok_or_else(|| IngestError::UnknownState {
                variable: parent.name.clone(),
                state: state.clone(),
            })?;
            position = position * parent.cardinality() + s;
        }
        if row.values.len() != card {
            return Err(IngestError::RowLength { variable: variable.clone(), expected: card, found: row.values.len() });
        }
        if concrete {
            if let Some(&value) = row.values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                return Err(IngestError::InvalidProbability { variable: variable.clone(), value });
            }
            let sum: f64 = row.values.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(IngestError::RowSum { variable: variable.clone(), given: row.given, sum });
            }
        } else if let Some(&value) = row.values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(IngestError::NonPositiveAlpha { variable: variable.clone(), value });
        }
        if slots[position].replace(row.values).is_some() {
            return Err(IngestError::DuplicateRow { variable: variable.clone(), given: row.given });
        }
    }
    let cards = structure.parent_cardinalities(id);
    slots
        .into_iter()
        .enumerate()
        .map(|(position, slot)| {
            slot.ok_or_else(|| IngestError::MissingRow {
                variable: variable.clone(),
                given: given_names(structure, id, &cards, position),
            })
        })
        .collect()
}

fn given_names(structure: &NetworkStructure, id: usize, cards: &[usize], position: usize) -> Vec<String> {
    let states = parent_config_states(position, cards).expect("row index within table");
    structure
        .parents(id)
        .iter()
        .zip(states)
        .map(|(&p, s)| structure.variable(p).states[s].clone())
        .collect()
}

/// 17 significant digits.
fn number(x: f64) -> String {
    format!("{x:.16e}")
}

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn write_network(structure: &NetworkStructure, kind: &str, rows: &dyn Fn(usize) -> Vec<Vec<f64>>) -> String {
    let mut out = String::new();
    out.push_str("{\n  \"edges\": [");
    let edges = structure.edges();
    for (k, (p, c)) in edges.iter().enumerate() {
        let sep = if k + 1 == edges.len() { "\n  " } else { "," };
        let _ = write!(
            out,
            "\n    [{}, {}]{sep}",
            quoted(&structure.variable(*p).name),
            quoted(&structure.variable(*c).name)
        );
    }
    let _ = write!(out, "],\n  \"format\": {},\n  \"tables\": [", quoted(NETWORK_FORMAT));
    for id in 0..structure.len() {
        let cards = structure.parent_cardinalities(id);
        let _ = write!(out, "\n    {{\n      \"{kind}\": [");
        let table = rows(id);
        for (position, values) in table.iter().enumerate() {
            let given: Vec<String> = given_names(structure, id, &cards, position).iter().map(|s| quoted(s)).collect();
            let values: Vec<String> = values.iter().map(|&v| number(v)).collect();
            let sep = if position + 1 == table.len() { "\n      " } else { "," };
            let _ = write!(
                out,
                "\n        {{\"given\": [{}], \"values\": [{}]}}{sep}",
                given.join(", "),
                values.join(", ")
            );
        }
        let sep = if id + 1 == structure.len() { "\n  " } else { "," };
        let _ = write!(out, "],\n      \"variable\": {}\n    }}{sep}", quoted(&structure.variable(id).name));
    }
    out.push_str("],\n  \"variables\": [");
    for (k, v) in structure.variables().iter().enumerate() {
        let states: Vec<String> = v.states.iter().map(|s| quoted(s)).collect();
        let sep = if k + 1 == structure.len() { "\n  " } else { "," };
        let _ = write!(out, "\n    {{\"name\": {}, \"states\": [{}]}}{sep}", quoted(&v.name), states.join(", "));
    }
    let _ = write!(out, "],\n  \"version\": {FORMAT_VERSION}\n}}\n");
    out
}

pub fn serialize_concrete(network: &ConcreteNetwork) -> String {
    write_network(network.structure(), "probabilities", &|id| network.table(id).rows.clone())
}

pub fn serialize_uncertain(network: &UncertainNetwork) -> String {
    write_network(network.structure(), "alphas", &|id| network.tables()[id].rows.clone())
}

pub fn serialize_network(network: &ParsedNetwork) -> String {
    match network {
        ParsedNetwork::Concrete(n) => serialize_concrete(n),
        ParsedNetwork::Uncertain(n) => serialize_uncertain(n),
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct EvidenceDoc {
    format: String,
    observations: Vec<(String, String)>,
    version: u32,
}

pub fn parse_evidence(text: &str, structure: &NetworkStructure) -> Result<Evidence, IngestError> {
    let doc: EvidenceDoc = serde_json::from_str(text).map_err(syntax)?;
    check_header(&doc.format, doc.version, EVIDENCE_FORMAT)?;
    let mut evidence = Evidence::new();
    for (name, state) in doc.observations {
        let variable = structure.variable_by_name(&name).ok_or_else(|| IngestError::UnknownVariable(name.clone()))?;
        let s = variable
            .state_index(&state)
            .ok_or_else(|| IngestError::UnknownState { variable: name.clone(), state })?;
        if evidence.contains(variable.id) {
            return Err(IngestError::DuplicateObservation(name));
        }
        evidence.observe(structure, variable.id, s)?;
    }
    Ok(evidence)
}

pub fn serialize_evidence(evidence: &Evidence, structure: &NetworkStructure) -> String {
    let doc = EvidenceDoc {
        format: EVIDENCE_FORMAT.to_string(),
        observations: evidence
            .iter()
            .map(|(v, s)| {
                let var = structure.variable(v);
                (var.name.clone(), var.states[s].clone())
            })
            .collect(),
        version: FORMAT_VERSION,
    };
    serde_json::to_string_pretty(&doc).expect("evidence serializes") + "\n"
}

/// CSV with a header of variable names and one row of state names per observation.
pub fn parse_dataset(text: &str, structure: &NetworkStructure) -> Result<Dataset, IngestError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| IngestError::Dataset(e.to_string()))?.clone();
    let mut columns = Vec::with_capacity(header.len());
    for name in header.iter() {
        let v = structure.variable_by_name(name).ok_or_else(|| IngestError::UnknownVariable(name.to_string()))?;
        columns.push(v.id);
    }
    let distinct: HashSet<usize> = columns.iter().copied().collect();
    if distinct.len() != structure.len() || columns.len() != structure.len() {
        return Err(IngestError::Dataset("header must name every variable exactly once".into()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::Dataset(e.to_string()))?;
        let mut row = vec![0; structure.len()];
        for (&id, value) in columns.iter().zip(record.iter()) {
            let variable = structure.variable(id);
            row[id] = variable.state_index(value).ok_or_else(|| IngestError::UnknownState {
                variable: variable.name.clone(),
                state: value.to_string(),
            })?;
        }
        rows.push(row);
    }
    Ok(Dataset::new(structure, rows)?)
}

pub fn serialize_dataset(data: &Dataset, structure: &NetworkStructure) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(structure.variables().iter().map(|v| v.name.as_str()))
        .expect("in-memory write");
    for row in data.rows() {
        writer
            .write_record(row.iter().enumerate().map(|(id, &s)| structure.variable(id).states[s].as_str()))
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 names")
}

/// Benchmark topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Chain3,
    Tent3,
    V3,
    Triangle,
    Diamond,
    Net21,
}

impl Topology {
    pub const ALL: [Topology; 6] =
        [Topology::Chain3, Topology::Tent3, Topology::V3, Topology::Triangle, Topology::Diamond, Topology::Net21];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Chain3 => "chain3",
            Topology::Tent3 => "tent3",
            Topology::V3 => "v3",
            Topology::Triangle => "triangle",
            Topology::Diamond => "diamond",
            Topology::Net21 => "net21",
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topology::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| IngestError::UnknownTopology(s.to_string()))
    }
}

fn small_structure(names: &[&str], edges: &[(usize, usize)]) -> NetworkStructure {
    let variables = names
        .iter()
        .enumerate()
        .map(|(id, n)| Variable::with_cardinality(id, *n, 2).expect("binary"))
        .collect();
    NetworkStructure::from_edges(variables, edges).expect("built-in topologies are acyclic")
}

pub fn builtin_structure(topology: Topology) -> NetworkStructure {
    match topology {
        Topology::Chain3 => small_structure(&["A", "B", "C"], &[(0, 1), (1, 2)]),
        Topology::Tent3 => small_structure(&["A", "B", "C"], &[(0, 1), (0, 2)]),
        Topology::V3 => small_structure(&["A", "B", "C"], &[(0, 2), (1, 2)]),
        Topology::Triangle => small_structure(&["A", "B", "C"], &[(0, 1), (0, 2), (1, 2)]),
        Topology::Diamond => small_structure(&["A", "B", "C", "D"], &[(0, 1), (0, 2), (1, 3), (2, 3)]),
        Topology::Net21 => net21_structure(),
    }
}

/// The 21-node loopy network.
///
/// Generated from [`NET21_SEED`]: nodes are created in topological order;
/// nodes 0 and 1 are roots, every later node draws one (p = 0.6), two
/// (p = 0.3) or three (p = 0.1) distinct parents from the five nodes created
/// just before it, and each node is binary or tri-valued with equal odds.
/// Attempts are repeated on successive streams until the skeleton is
/// connected with between 3 and 8 independent loops.
pub fn net21_structure() -> NetworkStructure {
    const NODES: usize = 21;
    const WINDOW: usize = 5;
    for attempt in 0.. {
        let mut rng = stream(NET21_SEED, Stream::Topology, attempt);
        let cards: Vec<usize> = (0..NODES).map(|_| if rng.random_bool(0.5) { 3 } else { 2 }).collect();
        let mut parents: Vec<Vec<usize>> = vec![Vec::new(); NODES];
        for (node, list) in parents.iter_mut().enumerate().skip(2) {
            let u: f64 = rng.random();
            let want = if u < 0.6 { 1 } else if u < 0.9 { 2 } else { 3 };
            let mut pool: Vec<usize> = (node.saturating_sub(WINDOW)..node).collect();
            pool.shuffle(&mut rng);
            pool.truncate(want);
            pool.sort_unstable();
            *list = pool;
        }
        let variables = (0..NODES)
            .map(|id| Variable::with_cardinality(id, format!("N{id:02}"), cards[id]).expect("cardinality >= 2"))
            .collect();
        let structure = NetworkStructure::new(variables, parents).expect("parents precede children");
        let loops = structure.undirected_loop_count();
        let edges = structure.edges().len();
        // connected iff edges - loops == nodes - 1
        if edges - loops == NODES - 1 && (3..=8).contains(&loops) {
            return structure;
        }
    }
    unreachable!("the generator loop only exits by returning")
}

/// Variables observed in the benchmark protocol.
///
/// Small networks observe the nodes incident with exactly one edge; when no
/// such node exists (triangle, diamond) the sources and sinks are observed
/// instead. The 21-node network observes 11 nodes drawn once from the
/// [`Stream::Evidence`] stream of [`NET21_SEED`].
pub fn default_evidence(topology: Topology) -> Vec<usize> {
    let structure = builtin_structure(topology);
    if topology == Topology::Net21 {
        let mut ids: Vec<usize> = (0..structure.len()).collect();
        ids.shuffle(&mut stream(NET21_SEED, Stream::Evidence, 0));
        ids.truncate(structure.len().div_ceil(2));
        ids.sort_unstable();
        return ids;
    }
    let leaves: Vec<usize> = (0..structure.len()).filter(|&v| structure.degree(v) == 1).collect();
    if !leaves.is_empty() {
        return leaves;
    }
    (0..structure.len())
        .filter(|&v| structure.parents(v).is_empty() || structure.children(v).is_empty())
        .collect()
}

/// Ground truth: every row drawn from the uniform Dirichlet.
pub fn sample_ground_truth<R: Rng + ?Sized>(structure: &NetworkStructure, rng: &mut R) -> ConcreteNetwork {
    let tables = (0..structure.len())
        .map(|v| {
            let ones = vec![1.0; structure.cardinality(v)];
            ConcreteCpt { rows: (0..structure.row_count(v)).map(|_| sample_dirichlet_row(&ones, rng)).collect() }
        })
        .collect();
    ConcreteNetwork::new(structure.clone(), tables).expect("normalized Dirichlet rows")
}

/// Uniform-prior uncertain network (every alpha 1).
pub fn prior_network(structure: &NetworkStructure) -> UncertainNetwork {
    let tables = (0..structure.len())
        .map(|v| DirichletCpt { rows: vec![vec![1.0; structure.cardinality(v)]; structure.row_count(v)] })
        .collect();
    UncertainNetwork::new(structure.clone(), tables).expect("unit alphas")
}

/// Settings for one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "experiment_format")]
    pub format: String,
    #[serde(default = "format_version")]
    pub version: u32,
    /// Built-in topology name; mutually exclusive with `network_file`.
    #[serde(default)]
    pub topology: Option<String>,
    /// Network document whose structure is used (tables are ignored).
    #[serde(default)]
    pub network_file: Option<PathBuf>,
    /// Evidence variables; defaults to the built-in evidence set for a topology.
    #[serde(default)]
    pub evidence_variables: Option<Vec<String>>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    #[serde(default = "default_trials_per_ground_truth")]
    pub trials_per_ground_truth: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn experiment_format() -> String {
    EXPERIMENT_FORMAT.to_string()
}
fn format_version() -> u32 {
    FORMAT_VERSION
}
fn default_n_train() -> usize {
    100
}
fn default_n_runs() -> usize {
    1000
}
fn default_trials_per_ground_truth() -> usize {
    100
}
pub fn default_epsilon() -> f64 {
    1e-8
}
pub fn default_max_rounds() -> usize {
    200
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// 0, 0.01, ..., 0.99.
pub fn default_gamma_grid() -> Vec<f64> {
    gamma_grid(0.01)
}

/// `0, step, 2 step, ...` up to and including 0.99.
pub fn gamma_grid(step: f64) -> Vec<f64> {
    let count = (0.99 / step + 1e-9).floor() as usize;
    (0..=count).map(|k| (k as f64 * step * 1e12).round() / 1e12).collect()
}

impl ExperimentConfig {
    pub fn for_topology(topology: Topology) -> Self {
        ExperimentConfig {
            format: experiment_format(),
            version: FORMAT_VERSION,
            topology: Some(topology.name().to_string()),
            network_file: None,
            evidence_variables: None,
            n_train: default_n_train(),
            n_runs: default_n_runs(),
            trials_per_ground_truth: default_trials_per_ground_truth(),
            epsilon: default_epsilon(),
            max_rounds: default_max_rounds(),
            gamma_grid: default_gamma_grid(),
            seed: 0,
            output_dir: default_output_dir(),
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        check_header(&self.format, self.version, EXPERIMENT_FORMAT)?;
        let bad = |m: &str| Err(IngestError::InvalidConfig(m.to_string()));
        match (&self.topology, &self.network_file) {
            (Some(name), None) => {
                name.parse::<Topology>()?;
            }
            (None, Some(_)) => {}
            _ => return bad("exactly one of `topology` or `network_file` is required"),
        }
        if self.network_file.is_some() && self.evidence_variables.is_none() {
            return bad("`evidence_variables` is required with `network_file`");
        }
        if self.n_runs == 0 || self.trials_per_ground_truth == 0 {
            return bad("`n_runs` and `trials_per_ground_truth` must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("`epsilon` must be positive");
        }
        if self.max_rounds == 0 {
            return bad("`max_rounds` must be positive");
        }
        if self.gamma_grid.is_empty()
            || self.gamma_grid.windows(2).any(|w| w[0] >= w[1])
            || self.gamma_grid.iter().any(|g| !(0.0..1.0).contains(g))
        {
            return bad("`gamma_grid` must be strictly increasing within [0, 1)");
        }
        Ok(())
    }
}

pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig, IngestError> {
    let config: ExperimentConfig = serde_json::from_str(text).map_err(syntax)?;
    config.validate()?;
    Ok(config)
}

pub fn resolve_evidence_variables(
    structure: &NetworkStructure,
    names: &[String],
) -> Result<Vec<usize>, IngestError> {
    let mut ids = Vec::with_capacity(names.len());
    for name in names {
        let v = structure.variable_by_name(name).ok_or_else(|| IngestError::UnknownVariable(name.clone()))?;
        if ids.contains(&v.id) {
            return Err(IngestError::DuplicateObservation(name.clone()));
        }
        ids.push(v.id);
    }
    ids.sort_unstable();
    Ok(ids)
}
