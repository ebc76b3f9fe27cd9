//! Sum-product network compilation and second-order queries over it.
//!
//! A network is compiled by variable elimination into a circuit whose root
//! computes the network polynomial `Σ_y Π_v λ_{y_v} θ_{y_v|pa_v}`. Setting the
//! indicators `λ` from the evidence and evaluating bottom-up gives `p(e)`;
//! the reverse pass gives `∂p(e)/∂θ` for every table cell, from which joint
//! marginals and the delta-method covariance of `p(y|e)` follow.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::InferenceError;
use crate::model::{
    for_each_config, ConcreteNetwork, Evidence, MarginalEstimate, NetworkMoments, NetworkStructure, UncertainNetwork,
};

/// Largest intermediate factor the compiler will build.
pub const FACTOR_LIMIT: u128 = 1 << 25;

pub const DUMP_HEADER: &str = "solbp-spn 1";

/// `θ[variable][row][state]`.
pub type Parameters = [Vec<Vec<f64>>];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SpnNode {
    Sum(Vec<usize>),
    Product(Vec<usize>),
    Indicator { variable: usize, state: usize },
    Parameter { variable: usize, row: usize, state: usize },
}

/// A compiled circuit. Node ids are a topological order: children always
/// have smaller ids than their parents.
#[derive(Debug, Clone, PartialEq)]
pub struct Spn {
    nodes: Vec<SpnNode>,
    root: usize,
    indicators: Vec<Vec<usize>>,
    parameters: Vec<Vec<Vec<usize>>>,
}

/// Forward values and root derivatives for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpnEvaluation {
    pub root: usize,
    pub values: Vec<f64>,
    pub derivatives: Vec<f64>,
}

impl SpnEvaluation {
    pub fn root_value(&self) -> f64 {
        self.values[self.root]
    }
}

/// How variables are ordered for elimination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EliminationOrder {
    /// Children before parents, ties broken by fewest fill-in edges, then lowest id.
    MinFill,
    Explicit(Vec<usize>),
}

struct Factor {
    scope: Vec<usize>,
    entries: Vec<usize>,
}

struct Builder {
    nodes: Vec<SpnNode>,
    interned: HashMap<SpnNode, usize>,
}

impl Builder {
    fn add(&mut self, node: SpnNode) -> usize {
        if let Some(&id) = self.interned.get(&node) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(node.clone());
        self.interned.insert(node, id);
        id
    }

    fn combine(&mut self, mut children: Vec<usize>, sum: bool) -> usize {
        if children.len() == 1 {
            return children[0];
        }
        children.sort_unstable();
        self.add(if sum { SpnNode::Sum(children) } else { SpnNode::Product(children) })
    }
}

fn fill_in(scopes: &[&Factor], variable: usize) -> usize {
    let mut neighbours: Vec<usize> = scopes
        .iter()
        .filter(|f| f.scope.contains(&variable))
        .flat_map(|f| f.scope.iter().copied())
        .filter(|&v| v != variable)
        .collect();
    neighbours.sort_unstable();
    neighbours.dedup();
    let mut missing = 0;
    for (a, &u) in neighbours.iter().enumerate() {
        for &w in &neighbours[a + 1..] {
            if !scopes.iter().any(|f| f.scope.contains(&u) && f.scope.contains(&w)) {
                missing += 1;
            }
        }
    }
    missing
}

fn min_fill_order(structure: &NetworkStructure) -> Vec<usize> {
    let n = structure.len();
    let mut scopes: Vec<Factor> = (0..n)
        .map(|v| {
            let mut scope = structure.parents(v).to_vec();
            scope.push(v);
            Factor { scope, entries: Vec::new() }
        })
        .collect();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let refs: Vec<&Factor> = scopes.iter().collect();
        let next = (0..n)
            .filter(|&v| !eliminated[v] && structure.children(v).iter().all(|&c| eliminated[c]))
            .min_by_key(|&v| (fill_in(&refs, v), v))
            .expect("a DAG always has an uneliminated sink");
        eliminated[next] = true;
        order.push(next);
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            scopes.into_iter().partition(|f| f.scope.contains(&next));
        let mut merged: Vec<usize> = touching.iter().flat_map(|f| f.scope.iter().copied()).filter(|&v| v != next).collect();
        merged.sort_unstable();
        merged.dedup();
        scopes = rest;
        scopes.push(Factor { scope: merged, entries: Vec::new() });
    }
    order
}

impl Spn {
    /// Compile with the default elimination heuristic.
    pub fn compile(structure: &NetworkStructure) -> Result<Spn, InferenceError> {
        Spn::compile_with(structure, &EliminationOrder::MinFill)
    }

    pub fn compile_with(structure: &NetworkStructure, order: &EliminationOrder) -> Result<Spn, InferenceError> {
        let n = structure.len();
        let order = match order {
            EliminationOrder::MinFill => min_fill_order(structure),
            EliminationOrder::Explicit(order) => {
                let mut seen = vec![false; n];
                if order.len() != n || order.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
                    return Err(InferenceError::InvalidArgument(
                        "elimination order must list every variable exactly once".into(),
                    ));
                }
                order.clone()
            }
        };
        let mut builder = Builder { nodes: Vec::new(), interned: HashMap::new() };
        let indicators: Vec<Vec<usize>> = (0..n)
            .map(|v| {
                (0..structure.cardinality(v))
                    .map(|state| builder.add(SpnNode::Indicator { variable: v, state }))
                    .collect()
            })
            .collect();
        let mut parameters = Vec::with_capacity(n);
        let mut factors = Vec::with_capacity(n);
        for v in 0..n {
            let card = structure.cardinality(v);
            let parent_cards = structure.parent_cardinalities(v);
            let mut cells = vec![Vec::new(); structure.row_count(v)];
            let mut entries = vec![0; structure.row_count(v) * card];
            for_each_config(&parent_cards, |row, _| {
                for state in 0..card {
                    let leaf = builder.add(SpnNode::Parameter { variable: v, row, state });
                    cells[row].push(leaf);
                    entries[row * card + state] = builder.combine(vec![indicators[v][state], leaf], false);
                }
            });
            parameters.push(cells);
            let mut scope = structure.parents(v).to_vec();
            scope.push(v);
            factors.push(Factor { scope, entries });
        }

        for &variable in &order {
            let (touching, rest): (Vec<Factor>, Vec<Factor>) =
                factors.into_iter().partition(|f| f.scope.contains(&variable));
            factors = rest;
            if touching.is_empty() {
                continue;
            }
            let mut scope: Vec<usize> =
                touching.iter().flat_map(|f| f.scope.iter().copied()).filter(|&v| v != variable).collect();
            scope.sort_unstable();
            scope.dedup();
            let cards: Vec<usize> = scope.iter().map(|&v| structure.cardinality(v)).collect();
            let eliminated_card = structure.cardinality(variable);
            let needed = cards.iter().map(|&c| c as u128).product::<u128>() * eliminated_card as u128;
            if needed > FACTOR_LIMIT {
                return Err(InferenceError::Capacity { what: "circuit factor", needed, limit: FACTOR_LIMIT });
            }
            // position of each factor variable within the merged assignment; the
            // eliminated variable sits one past the end
            let positions: Vec<Vec<usize>> = touching
                .iter()
                .map(|f| {
                    f.scope
                        .iter()
                        .map(|v| if *v == variable { scope.len() } else { scope.iter().position(|u| u == v).unwrap() })
                        .collect()
                })
                .collect();
            let mut entries = Vec::new();
            let mut assignment = vec![0; scope.len() + 1];
            for_each_config(&cards, |_, states| {
                assignment[..states.len()].copy_from_slice(states);
                let mut terms = Vec::with_capacity(eliminated_card);
                for z in 0..eliminated_card {
                    assignment[scope.len()] = z;
                    let children = touching
                        .iter()
                        .zip(&positions)
                        .map(|(f, pos)| {
                            let mut index = 0;
                            for (&p, &v) in pos.iter().zip(&f.scope) {
                                index = index * structure.cardinality(v) + assignment[p];
                            }
                            f.entries[index]
                        })
                        .collect();
                    terms.push(builder.combine(children, false));
                }
                entries.push(builder.combine(terms, true));
            });
            factors.push(Factor { scope, entries });
        }
        let roots: Vec<usize> = factors.iter().map(|f| f.entries[0]).collect();
        let root = builder.combine(roots, false);
        let nodes = builder.nodes;
        Ok(Spn { nodes, root, indicators, parameters })
    }

    pub fn nodes(&self) -> &[SpnNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                SpnNode::Sum(c) | SpnNode::Product(c) => c.len(),
                _ => 0,
            })
            .sum()
    }

    pub fn indicator(&self, variable: usize, state: usize) -> usize {
        self.indicators[variable][state]
    }

    pub fn parameter(&self, variable: usize, row: usize, state: usize) -> usize {
        self.parameters[variable][row][state]
    }

    /// Root value with indicators set from `evidence`.
    pub fn forward(&self, theta: &Parameters, evidence: &Evidence) -> f64 {
        let values = self.values(theta, evidence);
        values[self.root]
    }

    fn values(&self, theta: &Parameters, evidence: &Evidence) -> Vec<f64> {
        let mut values = vec![0.0; self.nodes.len()];
        for (id, node) in self.nodes.iter().enumerate() {
            values[id] = match node {
                SpnNode::Indicator { variable, state } => match evidence.get(*variable) {
                    Some(observed) if observed != *state => 0.0,
                    _ => 1.0,
                },
                SpnNode::Parameter { variable, row, state } => theta[*variable][*row][*state],
                SpnNode::Sum(children) => children.iter().map(|&c| values[c]).sum(),
                SpnNode::Product(children) => children.iter().map(|&c| values[c]).product(),
            };
        }
        values
    }

    /// Forward pass followed by the reverse pass.
    pub fn evaluate(&self, theta: &Parameters, evidence: &Evidence) -> SpnEvaluation {
        let values = self.values(theta, evidence);
        let mut derivatives = vec![0.0; self.nodes.len()];
        derivatives[self.root] = 1.0;
        let mut prefix = Vec::new();
        for id in (0..self.nodes.len()).rev() {
            let d = derivatives[id];
            if d == 0.0 {
                continue;
            }
            match &self.nodes[id] {
                SpnNode::Sum(children) => {
                    for &c in children {
                        derivatives[c] += d;
                    }
                }
                SpnNode::Product(children) => {
                    // product of the siblings via prefix and suffix products, so zero
                    // siblings need no division
                    prefix.clear();
                    let mut running = 1.0;
                    for &c in children {
                        prefix.push(running);
                        running *= values[c];
                    }
                    let mut suffix = 1.0;
                    for (k, &c) in children.iter().enumerate().rev() {
                        derivatives[c] += d * prefix[k] * suffix;
                        suffix *= values[c];
                    }
                }
                _ => {}
            }
        }
        SpnEvaluation { root: self.root, values, derivatives }
    }

    /// `∂p(e)/∂θ[variable][row][state]` from an evaluation.
    pub fn parameter_gradient(&self, evaluation: &SpnEvaluation) -> Vec<Vec<Vec<f64>>> {
        self.parameters
            .iter()
            .map(|rows| rows.iter().map(|cells| cells.iter().map(|&id| evaluation.derivatives[id]).collect()).collect())
            .collect()
    }

    /// `p(Y = y, e)` for every variable, as `Σ_rows ∂p(e)/∂θ_{y|row} θ_{y|row}`.
    pub fn joint_marginals(&self, theta: &Parameters, evaluation: &SpnEvaluation) -> Vec<Vec<f64>> {
        self.parameters
            .iter()
            .enumerate()
            .map(|(v, rows)| {
                let card = rows.first().map_or(0, Vec::len);
                let mut joint = vec![0.0; card];
                for (r, cells) in rows.iter().enumerate() {
                    for (y, &id) in cells.iter().enumerate() {
                        joint[y] += evaluation.derivatives[id] * theta[v][r][y];
                    }
                }
                joint
            })
            .collect()
    }

    /// Line-oriented text form: a header, the root id, then one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{DUMP_HEADER}").unwrap();
        writeln!(out, "nodes {} edges {} root {}", self.nodes.len(), self.edge_count(), self.root).unwrap();
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                SpnNode::Sum(c) | SpnNode::Product(c) => {
                    let kind = if matches!(node, SpnNode::Sum(_)) { "sum" } else { "product" };
                    let children: Vec<String> = c.iter().map(usize::to_string).collect();
                    writeln!(out, "{id} {kind} {}", children.join(" ")).unwrap();
                }
                SpnNode::Indicator { variable, state } => writeln!(out, "{id} indicator {variable} {state}").unwrap(),
                SpnNode::Parameter { variable, row, state } => {
                    writeln!(out, "{id} parameter {variable} {row} {state}").unwrap()
                }
            }
        }
        out
    }
}

/// `θ[variable][row][state]` of a concrete network.
pub fn concrete_parameters(bn: &ConcreteNetwork) -> Vec<Vec<Vec<f64>>> {
    bn.tables().iter().map(|t| t.rows.clone()).collect()
}

/// Row means of a set of table moments.
pub fn mean_parameters(moments: &NetworkMoments) -> Vec<Vec<Vec<f64>>> {
    moments.tables.iter().map(|rows| rows.iter().map(|m| m.mean.clone()).collect()).collect()
}

/// Second-order marginals of every variable by the delta method on
/// `g_y(θ) = p(y, e) / p(e)`, with all gradients taken from circuit reverse passes.
pub fn sospn_query(
    spn: &Spn,
    uncertain: &UncertainNetwork,
    evidence: &Evidence,
) -> Result<Vec<MarginalEstimate>, InferenceError> {
    sospn_query_with_moments(spn, uncertain.structure(), &uncertain.moments(), evidence)
}

pub fn sospn_query_with_moments(
    spn: &Spn,
    structure: &NetworkStructure,
    moments: &NetworkMoments,
    evidence: &Evidence,
) -> Result<Vec<MarginalEstimate>, InferenceError> {
    let theta = mean_parameters(moments);
    let base = spn.evaluate(&theta, evidence);
    let evidence_probability = base.root_value();
    if !(evidence_probability > 0.0) {
        return Err(InferenceError::InconsistentEvidence);
    }
    let base_gradient = spn.parameter_gradient(&base);
    let uncertain_rows: Vec<(usize, usize)> = moments
        .tables
        .iter()
        .enumerate()
        .flat_map(|(v, rows)| {
            rows.iter().enumerate().filter(|(_, m)| m.cov.iter().any(|&x| x != 0.0)).map(move |(r, _)| (v, r))
        })
        .collect();

    let estimate = |variable: usize| -> MarginalEstimate {
        let card = structure.cardinality(variable);
        if let Some(observed) = evidence.get(variable) {
            let mut mean = vec![0.0; card];
            mean[observed] = 1.0;
            return MarginalEstimate { variable, mean, cov: DMatrix::zeros(card, card) };
        }
        let mut mean = vec![0.0; card];
        // rows of J: one per state, over all uncertain table cells
        let mut jacobian_rows = Vec::with_capacity(card);
        for y in 0..card {
            let mut clamped = evidence.clone();
            clamped.observe(structure, variable, y).expect("variable and state in range");
            let evaluation = spn.evaluate(&theta, &clamped);
            let joint = evaluation.root_value();
            mean[y] = joint / evidence_probability;
            let gradient = spn.parameter_gradient(&evaluation);
            let row: Vec<Vec<f64>> = uncertain_rows
                .iter()
                .map(|&(v, r)| {
                    gradient[v][r]
                        .iter()
                        .zip(&base_gradient[v][r])
                        .map(|(dj, de)| (evidence_probability * dj - joint * de) / (evidence_probability * evidence_probability))
                        .collect()
                })
                .collect();
            jacobian_rows.push(row);
        }
        let mut cov = DMatrix::zeros(card, card);
        for (k, &(v, r)) in uncertain_rows.iter().enumerate() {
            let sigma = &moments.tables[v][r].cov;
            let cells = sigma.nrows();
            let jac = DMatrix::from_fn(card, cells, |y, c| jacobian_rows[y][k][c]);
            cov += &jac * sigma * jac.transpose();
        }
        for i in 0..card {
            for j in 0..i {
                let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = avg;
                cov[(j, i)] = avg;
            }
        }
        MarginalEstimate { variable, mean, cov }
    };
    Ok((0..structure.len()).map(estimate).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::enumerate_query;
    use crate::model::{ConcreteCpt, DirichletCpt, Variable};
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn binary(n: usize) -> Vec<Variable> {
        (0..n).map(|i| Variable::with_cardinality(i, format!("V{i}"), 2).unwrap()).collect()
    }

    fn random_network(structure: &NetworkStructure, rng: &mut impl Rng) -> ConcreteNetwork {
        let tables = (0..structure.len())
            .map(|v| {
                let rows = (0..structure.row_count(v))
                    .map(|_| {
                        let raw: Vec<f64> = (0..structure.cardinality(v)).map(|_| rng.random::<f64>() + 0.01).collect();
                        let s: f64 = raw.iter().sum();
                        raw.iter().map(|x| x / s).collect()
                    })
                    .collect();
                ConcreteCpt { rows }
            })
            .collect();
        ConcreteNetwork::new(structure.clone(), tables).unwrap()
    }

    fn diamond() -> NetworkStructure {
        NetworkStructure::from_edges(binary(4), &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap()
    }

    fn chain3() -> NetworkStructure {
        NetworkStructure::from_edges(binary(3), &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn single_root_is_sum_of_two_products() {
        let s = NetworkStructure::new(binary(1), vec![vec![]]).unwrap();
        let spn = Spn::compile(&s).unwrap();
        let SpnNode::Sum(children) = &spn.nodes()[spn.root()] else { panic!("root should be a sum") };
        assert_eq!(children.len(), 2);
        for &c in children {
            let SpnNode::Product(leaves) = &spn.nodes()[c] else { panic!("expected product") };
            assert_eq!(leaves.len(), 2);
            assert!(leaves.iter().any(|&l| matches!(spn.nodes()[l], SpnNode::Indicator { .. })));
            assert!(leaves.iter().any(|&l| matches!(spn.nodes()[l], SpnNode::Parameter { .. })));
        }
    }

    #[test]
    fn chain3_marginalizes_to_one() {
        let s = chain3();
        let spn = Spn::compile(&s).unwrap();
        let mut rng = stream(3, Stream::Fixture, 0);
        for _ in 0..100 {
            let bn = random_network(&s, &mut rng);
            let value = spn.forward(&concrete_parameters(&bn), &Evidence::new());
            assert_abs_diff_eq!(value, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn diamond_matches_enumeration() {
        let s = diamond();
        let spn = Spn::compile(&s).unwrap();
        let mut rng = stream(4, Stream::Fixture, 0);
        for _ in 0..50 {
            let bn = random_network(&s, &mut rng);
            let mut e = Evidence::new();
            for v in 0..4 {
                if rng.random_bool(0.5) {
                    e.observe(&s, v, rng.random_range(0..2)).unwrap();
                }
            }
            let theta = concrete_parameters(&bn);
            let exact = enumerate_query(&bn, &e).unwrap();
            let evaluation = spn.evaluate(&theta, &e);
            assert_abs_diff_eq!(evaluation.root_value(), exact.evidence_probability, epsilon = 1e-12);
            let joints = spn.joint_marginals(&theta, &evaluation);
            for v in 0..4 {
                for y in 0..2 {
                    assert_abs_diff_eq!(joints[v][y], exact.joints[v][y], epsilon = 1e-12);
                }
                assert_abs_diff_eq!(joints[v].iter().sum::<f64>(), exact.evidence_probability, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn full_evidence_is_product_of_cells() {
        let s = diamond();
        let spn = Spn::compile(&s).unwrap();
        let bn = random_network(&s, &mut stream(5, Stream::Fixture, 0));
        let e = Evidence::from_pairs(&s, [(0, 1), (1, 0), (2, 1), (3, 1)]).unwrap();
        let expected = bn.row(0, 0)[1] * bn.row(1, 1)[0] * bn.row(2, 1)[1] * bn.row(3, 1)[1];
        assert_abs_diff_eq!(spn.forward(&concrete_parameters(&bn), &e), expected, epsilon = 1e-15);
    }

    #[test]
    fn gradients_match_central_differences() {
        let s = chain3();
        let spn = Spn::compile(&s).unwrap();
        let mut rng = stream(6, Stream::Fixture, 0);
        let e = Evidence::from_pairs(&s, [(2, 1)]).unwrap();
        for _ in 0..10 {
            let bn = random_network(&s, &mut rng);
            let theta = concrete_parameters(&bn);
            let gradient = spn.parameter_gradient(&spn.evaluate(&theta, &e));
            for v in 0..3 {
                for r in 0..theta[v].len() {
                    for y in 0..2 {
                        let h = 1e-6;
                        let mut up = theta.clone();
                        up[v][r][y] += h;
                        let mut down = theta.clone();
                        down[v][r][y] -= h;
                        let fd = (spn.forward(&up, &e) - spn.forward(&down, &e)) / (2.0 * h);
                        let scale = gradient[v][r][y].abs().max(1e-3);
                        assert!((fd - gradient[v][r][y]).abs() / scale < 1e-6);
                    }
                }
            }
        }
    }

    #[test]
    fn elimination_order_does_not_change_values() {
        let s = diamond();
        let a = Spn::compile(&s).unwrap();
        let b = Spn::compile_with(&s, &EliminationOrder::Explicit(vec![0, 1, 2, 3])).unwrap();
        let mut rng = stream(8, Stream::Fixture, 0);
        for _ in 0..20 {
            let bn = random_network(&s, &mut rng);
            let e = Evidence::from_pairs(&s, [(3, rng.random_range(0..2))]).unwrap();
            let theta = concrete_parameters(&bn);
            assert_abs_diff_eq!(a.forward(&theta, &e), b.forward(&theta, &e), epsilon = 1e-12);
        }
        assert!(Spn::compile_with(&s, &EliminationOrder::Explicit(vec![0, 0, 1, 2])).is_err());
    }

    #[test]
    fn sospn_single_root() {
        let s = NetworkStructure::new(binary(1), vec![vec![]]).unwrap();
        let u = UncertainNetwork::new(s.clone(), vec![DirichletCpt { rows: vec![vec![2.0, 2.0]] }]).unwrap();
        let spn = Spn::compile(&s).unwrap();
        let out = sospn_query(&spn, &u, &Evidence::new()).unwrap();
        assert_abs_diff_eq!(out[0].mean[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out[0].variance(0), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn sospn_observed_node_is_one_hot() {
        let s = chain3();
        let tables = vec![
            DirichletCpt { rows: vec![vec![1.0, 1.0]] },
            DirichletCpt { rows: vec![vec![1.0, 1.0], vec![1.0, 1.0]] },
            DirichletCpt { rows: vec![vec![1.0, 1.0], vec![1.0, 1.0]] },
        ];
        let u = UncertainNetwork::new(s.clone(), tables).unwrap();
        let spn = Spn::compile(&s).unwrap();
        let e = Evidence::from_pairs(&s, [(0, 1)]).unwrap();
        let out = sospn_query(&spn, &u, &e).unwrap();
        assert_eq!(out[0].mean, vec![0.0, 1.0]);
        assert_eq!(out[0].cov, DMatrix::zeros(2, 2));
    }

    #[test]
    fn dump_lists_every_node() {
        let spn = Spn::compile(&chain3()).unwrap();
        let text = spn.dump();
        assert!(text.starts_with(DUMP_HEADER));
        assert_eq!(text.lines().count(), spn.len() + 2);
    }
}
