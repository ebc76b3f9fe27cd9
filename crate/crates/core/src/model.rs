//! Discrete Bayesian networks with point-valued or Dirichlet-distributed
//! conditional probability tables, plus the second-order statistics
//! (mean vector and covariance matrix) propagated by the inference engines.
//!
//! Rows of a conditional table are addressed by a mixed-radix index over the
//! parent states, with the first-listed parent most significant. Every other
//! module (storage, circuit compilation, message passing) relies on that one
//! convention.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance used when checking that a concrete row sums to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("length mismatch: {0} states for {1} cardinalities")]
    LengthMismatch(usize, usize),
    #[error("state {state} out of range for cardinality {cardinality}")]
    StateOutOfRange { state: usize, cardinality: usize },
    #[error("parent configuration index {index} out of range ({rows} rows)")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("variable `{0}` must have at least two states")]
    InvalidCardinality(String),
    #[error("variable `{variable}` has duplicate state `{state}`")]
    DuplicateState { variable: String, state: String },
    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),
    #[error("variable {child} references unknown parent {parent}")]
    UnknownParent { child: usize, parent: usize },
    #[error("variable {0} lists the same parent twice")]
    DuplicateParent(usize),
    #[error("directed cycle through variable `{0}`")]
    Cycle(String),
    #[error("non-positive Dirichlet parameter {0}")]
    NonPositiveAlpha(f64),
    #[error("row {row} of `{variable}` sums to {sum}, expected 1")]
    RowNotNormalized { variable: String, row: usize, sum: f64 },
    #[error("row {row} of `{variable}` has invalid entry {value}")]
    InvalidProbability { variable: String, row: usize, value: f64 },
    #[error("table for `{variable}` has shape {found}, expected {expected}")]
    TableShape { variable: String, expected: String, found: String },
    #[error("variable {0} observed more than once")]
    DuplicateEvidence(usize),
    #[error("unknown variable id {0}")]
    UnknownVariable(usize),
}

/// Encode parent states as a row index; the first parent is most significant.
pub fn parent_config_index(states: &[usize], cardinalities: &[usize]) -> Result<usize, ModelError> {
    if states.len() != cardinalities.len() {
        return Err(ModelError::LengthMismatch(states.len(), cardinalities.len()));
    }
    let mut index = 0;
    for (&state, &cardinality) in states.iter().zip(cardinalities) {
        if state >= cardinality {
            return Err(ModelError::StateOutOfRange { state, cardinality });
        }
        index = index * cardinality + state;
    }
    Ok(index)
}

/// Inverse of [`parent_config_index`].
pub fn parent_config_states(index: usize, cardinalities: &[usize]) -> Result<Vec<usize>, ModelError> {
    let rows: usize = cardinalities.iter().product();
    if index >= rows {
        return Err(ModelError::RowOutOfRange { index, rows });
    }
    let mut states = vec![0; cardinalities.len()];
    let mut rest = index;
    for (slot, &cardinality) in states.iter_mut().zip(cardinalities).rev() {
        *slot = rest % cardinality;
        rest /= cardinality;
    }
    Ok(states)
}

/// Visit every parent configuration in mixed-radix order as `(row, states)`.
pub fn for_each_config(cardinalities: &[usize], mut visit: impl FnMut(usize, &[usize])) {
    let rows: usize = cardinalities.iter().product();
    let mut states = vec![0usize; cardinalities.len()];
    for row in 0..rows {
        visit(row, &states);
        for (slot, &cardinality) in states.iter_mut().zip(cardinalities).rev() {
            *slot += 1;
            if *slot < cardinality {
                break;
            }
            *slot = 0;
        }
    }
}

/// Mean of a Dirichlet distribution: `alpha / sum(alpha)`.
pub fn dirichlet_mean(alpha: &[f64]) -> Result<Vec<f64>, ModelError> {
    check_alpha(alpha)?;
    let strength: f64 = alpha.iter().sum();
    Ok(alpha.iter().map(|a| a / strength).collect())
}

/// Covariance of a Dirichlet distribution,
/// `mu_k (delta_kk' - mu_k') / (S + 1)`.
pub fn dirichlet_covariance(alpha: &[f64]) -> Result<DMatrix<f64>, ModelError> {
    let mean = dirichlet_mean(alpha)?;
    let strength: f64 = alpha.iter().sum();
    let n = alpha.len();
    Ok(DMatrix::from_fn(n, n, |k, l| {
        let delta = if k == l { 1.0 } else { 0.0 };
        mean[k] * (delta - mean[l]) / (strength + 1.0)
    }))
}

fn check_alpha(alpha: &[f64]) -> Result<(), ModelError> {
    match alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        Some(&bad) => Err(ModelError::NonPositiveAlpha(bad)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variable {
    pub id: usize,
    pub name: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn new(id: usize, name: impl Into<String>, states: Vec<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if states.len() < 2 {
            return Err(ModelError::InvalidCardinality(name));
        }
        let mut seen = HashSet::new();
        for state in &states {
            if !seen.insert(state.as_str()) {
                return Err(ModelError::DuplicateState { variable: name, state: state.clone() });
            }
        }
        Ok(Variable { id, name, states })
    }

    /// Binary-or-wider variable with states named `s0, s1, ...`.
    pub fn with_cardinality(id: usize, name: impl Into<String>, cardinality: usize) -> Result<Self, ModelError> {
        Variable::new(id, name, (0..cardinality).map(|k| format!("s{k}")).collect())
    }

    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, state: &str) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }
}

/// The DAG: variables plus an ordered parent list per variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkStructure {
    variables: Vec<Variable>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topological: Vec<usize>,
}

impl NetworkStructure {
    pub fn new(variables: Vec<Variable>, parents: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        if variables.len() != parents.len() {
            return Err(ModelError::LengthMismatch(parents.len(), variables.len()));
        }
        let mut names = HashSet::new();
        for (position, variable) in variables.iter().enumerate() {
            if variable.id != position {
                return Err(ModelError::UnknownVariable(variable.id));
            }
            if !names.insert(variable.name.as_str()) {
                return Err(ModelError::DuplicateVariable(variable.name.clone()));
            }
        }
        let n = variables.len();
        let mut children = vec![Vec::new(); n];
        for (child, list) in parents.iter().enumerate() {
            let mut seen = HashSet::new();
            for &parent in list {
                if parent >= n {
                    return Err(ModelError::UnknownParent { child, parent });
                }
                if !seen.insert(parent) {
                    return Err(ModelError::DuplicateParent(child));
                }
                children[parent].push(child);
            }
        }
        let topological = topological_order(&parents, &children)
            .map_err(|node| ModelError::Cycle(variables[node].name.clone()))?;
        Ok(NetworkStructure { variables, parents, children, topological })
    }

    /// Build from edges `(parent, child)`; parent order follows edge order.
    pub fn from_edges(variables: Vec<Variable>, edges: &[(usize, usize)]) -> Result<Self, ModelError> {
        let n = variables.len();
        let mut parents = vec![Vec::new(); n];
        for &(parent, child) in edges {
            if child >= n {
                return Err(ModelError::UnknownVariable(child));
            }
            parents[child].push(parent);
        }
        NetworkStructure::new(variables, parents)
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, id: usize) -> &Variable {
        &self.variables[id]
    }

    pub fn variable_by_name(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn cardinality(&self, id: usize) -> usize {
        self.variables[id].cardinality()
    }

    pub fn parents(&self, id: usize) -> &[usize] {
        &self.parents[id]
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn parent_cardinalities(&self, id: usize) -> Vec<usize> {
        self.parents[id].iter().map(|&p| self.cardinality(p)).collect()
    }

    /// Number of parent configurations (rows) of a variable's table.
    pub fn row_count(&self, id: usize) -> usize {
        self.parents[id].iter().map(|&p| self.cardinality(p)).product()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topological
    }

    /// All edges as `(parent, child)`, grouped by child in parent order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parents
            .iter()
            .enumerate()
            .flat_map(|(child, ps)| ps.iter().map(move |&p| (p, child)))
            .collect()
    }

    /// Number of edges touching a node, ignoring direction.
    pub fn degree(&self, id: usize) -> usize {
        self.parents[id].len() + self.children[id].len()
    }

    /// Cyclomatic number of the undirected skeleton (independent loops).
    pub fn undirected_loop_count(&self) -> usize {
        let n = self.len();
        let mut component: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while c[root] != root {
                root = c[root];
            }
            let mut cur = x;
            while c[cur] != root {
                let next = c[cur];
                c[cur] = root;
                cur = next;
            }
            root
        }
        let mut loops = 0;
        for (parent, child) in self.edges() {
            let (a, b) = (find(&mut component, parent), find(&mut component, child));
            if a == b {
                loops += 1;
            } else {
                component[a] = b;
            }
        }
        loops
    }

    pub fn is_polytree(&self) -> bool {
        self.undirected_loop_count() == 0
    }

    pub fn total_rows(&self) -> usize {
        (0..self.len()).map(|id| self.row_count(id)).sum()
    }
}

/// Kahn's algorithm; on failure returns a node that lies on (or behind) a cycle.
fn topological_order(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Result<Vec<usize>, usize> {
    let n = parents.len();
    let mut pending: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| pending[v] == 0).rev().collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &c in children[v].iter().rev() {
            pending[c] -= 1;
            if pending[c] == 0 {
                ready.push(c);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).find(|&v| pending[v] > 0).unwrap_or(0))
    }
}

/// Point-valued conditional table: one probability vector per parent configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteCpt {
    pub rows: Vec<Vec<f64>>,
}

/// Dirichlet-parameterized conditional table: one alpha vector per parent configuration.
/// Rows are independent, so no cross-row covariance exists anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletCpt {
    pub rows: Vec<Vec<f64>>,
}

fn check_shape(structure: &NetworkStructure, id: usize, rows: &[Vec<f64>]) -> Result<(), ModelError> {
    let expected_rows = structure.row_count(id);
    let card = structure.cardinality(id);
    if rows.len() != expected_rows || rows.iter().any(|r| r.len() != card) {
        return Err(ModelError::TableShape {
            variable: structure.variable(id).name.clone(),
            expected: format!("{expected_rows}x{card}"),
            found: format!(
                "{}x{}",
                rows.len(),
                rows.iter().map(Vec::len).find(|&l| l != card).unwrap_or(card)
            ),
        });
    }
    Ok(())
}

/// A first-order Bayesian network.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcreteNetwork {
    structure: NetworkStructure,
    tables: Vec<ConcreteCpt>,
}

impl ConcreteNetwork {
    pub fn new(structure: NetworkStructure, tables: Vec<ConcreteCpt>) -> Result<Self, ModelError> {
        if tables.len() != structure.len() {
            return Err(ModelError::LengthMismatch(tables.len(), structure.len()));
        }
        for (id, table) in tables.iter().enumerate() {
            check_shape(&structure, id, &table.rows)?;
            let variable = &structure.variable(id).name;
            for (row, probs) in table.rows.iter().enumerate() {
                if let Some(&value) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                    return Err(ModelError::InvalidProbability { variable: variable.clone(), row, value });
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(ModelError::RowNotNormalized { variable: variable.clone(), row, sum });
                }
            }
        }
        Ok(ConcreteNetwork { structure, tables })
    }

    pub fn structure(&self) -> &NetworkStructure {
        &self.structure
    }

    pub fn tables(&self) -> &[ConcreteCpt] {
        &self.tables
    }

    pub fn table(&self, id: usize) -> &ConcreteCpt {
        &self.tables[id]
    }

    /// Probability vector of `id` given the full parent configuration `row`.
    pub fn row(&self, id: usize, row: usize) -> &[f64] {
        &self.tables[id].rows[row]
    }
}

/// A second-order Bayesian network.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainNetwork {
    structure: NetworkStructure,
    tables: Vec<DirichletCpt>,
}

impl UncertainNetwork {
    pub fn new(structure: NetworkStructure, tables: Vec<DirichletCpt>) -> Result<Self, ModelError> {
        if tables.len() != structure.len() {
            return Err(ModelError::LengthMismatch(tables.len(), structure.len()));
        }
        for (id, table) in tables.iter().enumerate() {
            check_shape(&structure, id, &table.rows)?;
            for row in &table.rows {
                check_alpha(row)?;
            }
        }
        Ok(UncertainNetwork { structure, tables })
    }

    pub fn structure(&self) -> &NetworkStructure {
        &self.structure
    }

    pub fn tables(&self) -> &[DirichletCpt] {
        &self.tables
    }

    pub fn alphas(&self, id: usize, row: usize) -> &[f64] {
        &self.tables[id].rows[row]
    }

    /// Materialized per-row means and covariances.
    pub fn moments(&self) -> NetworkMoments {
        let tables = self
            .tables
            .iter()
            .map(|t| {
                t.rows
                    .iter()
                    .map(|alpha| RowMoments {
                        // alphas were validated on construction
                        mean: dirichlet_mean(alpha).expect("validated alphas"),
                        cov: dirichlet_covariance(alpha).expect("validated alphas"),
                    })
                    .collect()
            })
            .collect();
        NetworkMoments { tables }
    }

    /// The concrete network at the posterior means.
    pub fn mean_network(&self) -> ConcreteNetwork {
        let tables = self
            .tables
            .iter()
            .map(|t| ConcreteCpt {
                rows: t.rows.iter().map(|a| normalized_mean(a)).collect(),
            })
            .collect();
        ConcreteNetwork { structure: self.structure.clone(), tables }
    }

    /// Same network with every alpha multiplied by `factor` (same means, tighter rows).
    pub fn scaled(&self, factor: f64) -> Result<UncertainNetwork, ModelError> {
        let tables = self
            .tables
            .iter()
            .map(|t| DirichletCpt {
                rows: t.rows.iter().map(|r| r.iter().map(|a| a * factor).collect()).collect(),
            })
            .collect();
        UncertainNetwork::new(self.structure.clone(), tables)
    }
}

fn normalized_mean(alpha: &[f64]) -> Vec<f64> {
    let strength: f64 = alpha.iter().sum();
    alpha.iter().map(|a| a / strength).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// `tables[variable][row]` moments of every conditional row.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMoments {
    pub tables: Vec<Vec<RowMoments>>,
}

impl NetworkMoments {
    pub fn row(&self, id: usize, row: usize) -> &RowMoments {
        &self.tables[id][row]
    }

    pub fn row_count(&self) -> usize {
        self.tables.iter().map(Vec::len).sum()
    }

    /// Copy with every covariance multiplied by `factor` (0 collapses all uncertainty).
    pub fn with_scaled_covariance(&self, factor: f64) -> NetworkMoments {
        let tables = self
            .tables
            .iter()
            .map(|rows| {
                rows.iter()
                    .map(|m| RowMoments { mean: m.mean.clone(), cov: &m.cov * factor })
                    .collect()
            })
            .collect();
        NetworkMoments { tables }
    }
}

/// Observed states keyed by variable id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    assignments: BTreeMap<usize, usize>,
}

impl Evidence {
    pub fn new() -> Self {
        Evidence::default()
    }

    pub fn from_pairs(
        structure: &NetworkStructure,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ModelError> {
        let mut evidence = Evidence::new();
        for (variable, state) in pairs {
            evidence.observe(structure, variable, state)?;
        }
        Ok(evidence)
    }

    pub fn observe(&mut self, structure: &NetworkStructure, variable: usize, state: usize) -> Result<(), ModelError> {
        if variable >= structure.len() {
            return Err(ModelError::UnknownVariable(variable));
        }
        let cardinality = structure.cardinality(variable);
        if state >= cardinality {
            return Err(ModelError::StateOutOfRange { state, cardinality });
        }
        if self.assignments.insert(variable, state).is_some() {
            return Err(ModelError::DuplicateEvidence(variable));
        }
        Ok(())
    }

    pub fn get(&self, variable: usize) -> Option<usize> {
        self.assignments.get(&variable).copied()
    }

    pub fn contains(&self, variable: usize) -> bool {
        self.assignments.contains_key(&variable)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignments.iter().map(|(&v, &s)| (v, s))
    }
}

/// Mean and covariance of one message or internal value.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageStats {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl MessageStats {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Self {
        debug_assert_eq!(cov.nrows(), mean.len());
        MessageStats { mean, cov }
    }

    /// Mean with zero covariance.
    pub fn certain(mean: Vec<f64>) -> Self {
        let n = mean.len();
        MessageStats { mean, cov: DMatrix::zeros(n, n) }
    }

    pub fn uniform(cardinality: usize) -> Self {
        MessageStats::certain(vec![1.0 / cardinality as f64; cardinality])
    }

    pub fn ones(cardinality: usize) -> Self {
        MessageStats::certain(vec![1.0; cardinality])
    }

    pub fn one_hot(cardinality: usize, state: usize) -> Self {
        let mut mean = vec![0.0; cardinality];
        mean[state] = 1.0;
        MessageStats::certain(mean)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Posterior mean and covariance of `p(Y | e)` for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEstimate {
    pub variable: usize,
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

impl MarginalEstimate {
    pub fn variance(&self, state: usize) -> f64 {
        self.cov[(state, state)]
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.mean.len()).map(|k| self.cov[(k, k)]).collect()
    }
}

/// Largest `|c - c^T|` entry.
pub fn asymmetry(cov: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..cov.nrows() {
        for j in 0..i {
            worst = worst.max((cov[(i, j)] - cov[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    if cov.is_empty() {
        return 0.0;
    }
    let sym = (cov + cov.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn binary(id: usize, name: &str) -> Variable {
        Variable::with_cardinality(id, name, 2).unwrap()
    }

    #[test]
    fn parent_config_index_examples() {
        assert_eq!(parent_config_index(&[], &[]).unwrap(), 0);
        assert_eq!(parent_config_index(&[1, 0], &[2, 3]).unwrap(), 3);
        assert_eq!(parent_config_index(&[1, 2], &[2, 3]).unwrap(), 5);
        assert_eq!(parent_config_states(5, &[2, 3]).unwrap(), vec![1, 2]);
        assert_eq!(parent_config_states(0, &[]).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn configs_follow_index_order() {
        let cards = [2, 3, 2];
        let mut seen = 0;
        for_each_config(&cards, |row, states| {
            assert_eq!(parent_config_index(states, &cards).unwrap(), row);
            seen += 1;
        });
        assert_eq!(seen, 12);
        let mut roots = 0;
        for_each_config(&[], |row, states| {
            assert_eq!((row, states.len()), (0, 0));
            roots += 1;
        });
        assert_eq!(roots, 1);
    }

    #[test]
    fn parent_config_index_errors() {
        assert_eq!(parent_config_index(&[0], &[2, 2]), Err(ModelError::LengthMismatch(1, 2)));
        assert_eq!(
            parent_config_index(&[2], &[2]),
            Err(ModelError::StateOutOfRange { state: 2, cardinality: 2 })
        );
        assert!(parent_config_states(6, &[2, 3]).is_err());
    }

    #[test]
    fn dirichlet_mean_examples() {
        assert_eq!(dirichlet_mean(&[2.0, 2.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(dirichlet_mean(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(dirichlet_mean(&[1.0, 1.0, 2.0]).unwrap(), vec![0.25, 0.25, 0.5]);
        assert!(matches!(dirichlet_mean(&[1.0, 0.0]), Err(ModelError::NonPositiveAlpha(_))));
        assert!(dirichlet_covariance(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn dirichlet_covariance_examples() {
        let c = dirichlet_covariance(&[2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 0.05, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(0, 1)], -0.05, epsilon = 1e-15);
        let c = dirichlet_covariance(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[(1, 0)], -1.0 / 12.0, epsilon = 1e-15);
        let c = dirichlet_covariance(&[3.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(c[(0, 0)], 0.04, epsilon = 1e-15);
    }

    #[test]
    fn covariance_shrinks_with_strength() {
        let mean = [0.2, 0.3, 0.5];
        let mut previous = f64::INFINITY;
        for strength in [4.0, 40.0, 400.0] {
            let alpha: Vec<f64> = mean.iter().map(|m| m * strength).collect();
            let c = dirichlet_covariance(&alpha).unwrap();
            let largest = c.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(largest < previous);
            previous = largest;
        }
    }

    fn chain3() -> NetworkStructure {
        NetworkStructure::from_edges(vec![binary(0, "A"), binary(1, "B"), binary(2, "C")], &[(0, 1), (1, 2)])
            .unwrap()
    }

    #[test]
    fn moments_views() {
        let root = NetworkStructure::new(vec![binary(0, "A")], vec![vec![]]).unwrap();
        let net = UncertainNetwork::new(root, vec![DirichletCpt { rows: vec![vec![2.0, 2.0]] }]).unwrap();
        let m = net.moments();
        assert_eq!(m.row_count(), 1);
        assert_eq!(m.row(0, 0).mean, vec![0.5, 0.5]);

        let pair = NetworkStructure::from_edges(vec![binary(0, "A"), binary(1, "B")], &[(0, 1)]).unwrap();
        let ones = |rows: usize| DirichletCpt { rows: vec![vec![1.0, 1.0]; rows] };
        let net = UncertainNetwork::new(pair, vec![ones(1), ones(2)]).unwrap();
        let m = net.moments();
        assert_eq!(m.tables[1].len(), 2);
        for row in &m.tables[1] {
            assert_eq!(row.mean, vec![0.5, 0.5]);
            assert_abs_diff_eq!(row.cov[(0, 0)], 1.0 / 12.0, epsilon = 1e-15);
        }

        let net = UncertainNetwork::new(chain3(), vec![ones(1), ones(2), ones(2)]).unwrap();
        assert_eq!(net.moments().row_count(), 5);
    }

    #[test]
    fn structure_rejects_cycles_and_bad_parents() {
        let vars = vec![binary(0, "A"), binary(1, "B")];
        assert!(matches!(
            NetworkStructure::from_edges(vars.clone(), &[(0, 1), (1, 0)]),
            Err(ModelError::Cycle(_))
        ));
        assert!(matches!(
            NetworkStructure::new(vars.clone(), vec![vec![], vec![5]]),
            Err(ModelError::UnknownParent { .. })
        ));
        assert!(matches!(
            NetworkStructure::new(vec![binary(0, "A"), binary(1, "A")], vec![vec![], vec![]]),
            Err(ModelError::DuplicateVariable(_))
        ));
        let s = chain3();
        assert_eq!(s.topological_order(), &[0, 1, 2]);
        assert!(s.is_polytree());
        assert_eq!(s.degree(1), 2);
    }

    #[test]
    fn variable_validation() {
        assert!(Variable::with_cardinality(0, "A", 1).is_err());
        assert!(matches!(
            Variable::new(0, "A", vec!["x".into(), "x".into()]),
            Err(ModelError::DuplicateState { .. })
        ));
    }

    #[test]
    fn concrete_rows_must_normalize() {
        let s = NetworkStructure::new(vec![binary(0, "A")], vec![vec![]]).unwrap();
        let bad = ConcreteNetwork::new(s.clone(), vec![ConcreteCpt { rows: vec![vec![0.5, 1.0]] }]);
        assert!(matches!(bad, Err(ModelError::RowNotNormalized { .. })));
        let missing = ConcreteNetwork::new(s, vec![ConcreteCpt { rows: vec![] }]);
        assert!(matches!(missing, Err(ModelError::TableShape { .. })));
    }

    #[test]
    fn evidence_validation() {
        let s = chain3();
        let mut e = Evidence::new();
        e.observe(&s, 0, 1).unwrap();
        assert_eq!(e.observe(&s, 0, 0), Err(ModelError::DuplicateEvidence(0)));
        assert!(e.observe(&s, 1, 2).is_err());
        assert!(e.observe(&s, 9, 0).is_err());
    }

    proptest! {
        #[test]
        fn mixed_radix_round_trips(cards in prop::collection::vec(2usize..5, 0..5), seed in any::<u64>()) {
            let rows: usize = cards.iter().product();
            let index = (seed as usize) % rows;
            let states = parent_config_states(index, &cards).unwrap();
            prop_assert_eq!(parent_config_index(&states, &cards).unwrap(), index);
        }

        #[test]
        fn dirichlet_moments_are_consistent(alpha in prop::collection::vec(0.01f64..100.0, 2..6)) {
            let mean = dirichlet_mean(&alpha).unwrap();
            prop_assert!((mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let cov = dirichlet_covariance(&alpha).unwrap();
            prop_assert!(asymmetry(&cov) < 1e-15);
            prop_assert!(min_eigenvalue(&cov) > -1e-12);
            for row in cov.row_iter() {
                prop_assert!(row.sum().abs() < 1e-12);
            }
        }
    }
}
