//! First-order belief propagation with π/λ messages, and the randomized
//! loopy schedule that the second-order engine reuses.
//!
//! The schedule keeps one π-message (parent to child) and one λ-message
//! (child to parent) per edge. Every round visits all messages once in a
//! fresh random order; a node recomputes its internal π (resp. λ) value as
//! soon as all of its incoming π (resp. λ) messages have been refreshed in
//! the current round. Observed nodes keep one-hot internal values. The loop
//! stops once no message mean moved by more than `epsilon` over a round.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::InferenceError;
use crate::model::{for_each_config, ConcreteNetwork, Evidence, NetworkStructure};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub epsilon: f64,
    pub max_rounds: usize,
    /// Rescale each λ-message so its largest mean entry is 1.
    pub rescale_lambda: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions { epsilon: 1e-8, max_rounds: 200, rescale_lambda: true }
    }
}

impl PropagationOptions {
    pub fn new(epsilon: f64, max_rounds: usize) -> Self {
        PropagationOptions { epsilon, max_rounds, ..Default::default() }
    }

    fn validate(&self) -> Result<(), InferenceError> {
        if !(self.epsilon > 0.0) {
            return Err(InferenceError::InvalidArgument(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceReport {
    pub rounds: usize,
    /// Largest change of any message mean over the last round.
    pub max_delta: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Pi,
    Lambda,
}

/// `Pi` flows parent to child, `Lambda` child to parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MessageKey {
    pub kind: MessageKind,
    pub from: usize,
    pub to: usize,
}

/// Message operations the schedule needs; implemented for point values
/// and for mean/covariance pairs.
pub(crate) trait MessageAlgebra {
    type Value: Clone;

    fn mean(value: &Self::Value) -> &[f64];
    fn certain(mean: Vec<f64>) -> Self::Value;
    fn internal_pi(&self, node: usize, parent_messages: &[&Self::Value]) -> Self::Value;
    fn internal_lambda(&self, node: usize, child_messages: &[&Self::Value]) -> Self::Value;
    fn pi_message(&self, internal_pi: &Self::Value, other_child_messages: &[&Self::Value]) -> Self::Value;
    /// λ-message from `node` to its parent at position `slot`; `parent_messages`
    /// holds all incoming π-messages in parent order.
    fn lambda_message(
        &self,
        node: usize,
        slot: usize,
        internal_lambda: &Self::Value,
        parent_messages: &[&Self::Value],
    ) -> Self::Value;
    fn rescale_lambda(&self, value: &mut Self::Value);
}

/// Converged (or capped) state of a propagation run.
#[derive(Debug, Clone)]
pub(crate) struct Propagation<V> {
    pub internal_pi: Vec<V>,
    pub internal_lambda: Vec<V>,
    pub report: ConvergenceReport,
}

pub(crate) fn propagate<A: MessageAlgebra, R: Rng + ?Sized>(
    algebra: &A,
    structure: &NetworkStructure,
    evidence: &Evidence,
    options: &PropagationOptions,
    rng: &mut R,
) -> Result<Propagation<A::Value>, InferenceError> {
    options.validate()?;
    let n = structure.len();
    let edges = structure.edges();
    let edge_count = edges.len();
    let mut parent_edges = vec![Vec::new(); n];
    let mut child_edges = vec![Vec::new(); n];
    for (e, &(parent, child)) in edges.iter().enumerate() {
        parent_edges[child].push(e);
        child_edges[parent].push(e);
    }

    let mut pi: Vec<A::Value> = edges
        .iter()
        .map(|&(parent, _)| {
            let card = structure.cardinality(parent);
            A::certain(vec![1.0 / card as f64; card])
        })
        .collect();
    let mut lambda: Vec<A::Value> =
        edges.iter().map(|&(parent, _)| A::certain(vec![1.0; structure.cardinality(parent)])).collect();

    let mut internal_pi = Vec::with_capacity(n);
    let mut internal_lambda = Vec::with_capacity(n);
    for v in 0..n {
        match evidence.get(v) {
            Some(state) => {
                let mut hot = vec![0.0; structure.cardinality(v)];
                hot[state] = 1.0;
                internal_pi.push(A::certain(hot.clone()));
                internal_lambda.push(A::certain(hot));
            }
            None => {
                let incoming: Vec<&A::Value> = parent_edges[v].iter().map(|&e| &pi[e]).collect();
                internal_pi.push(algebra.internal_pi(v, &incoming));
                let incoming: Vec<&A::Value> = child_edges[v].iter().map(|&e| &lambda[e]).collect();
                internal_lambda.push(algebra.internal_lambda(v, &incoming));
            }
        }
    }

    // messages 0..E are π on edge e, E..2E are λ on edge e - E
    let mut previous: Vec<Vec<f64>> =
        (0..2 * edge_count).map(|m| vec![0.0; structure.cardinality(edges[m % edge_count.max(1)].0)]).collect();
    let max_change = |pi: &[A::Value], lambda: &[A::Value], previous: &[Vec<f64>]| {
        let mut worst: f64 = 0.0;
        for (m, old) in previous.iter().enumerate() {
            let now = if m < edge_count { A::mean(&pi[m]) } else { A::mean(&lambda[m - edge_count]) };
            for (a, b) in now.iter().zip(old) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    };

    let mut order: Vec<usize> = (0..2 * edge_count).collect();
    let mut pi_done = vec![0usize; n];
    let mut lambda_done = vec![0usize; n];
    let mut rounds = 0;
    let mut delta = max_change(&pi, &lambda, &previous);
    let mut converged = false;
    loop {
        if !(delta > options.epsilon) {
            converged = true;
            break;
        }
        if rounds == options.max_rounds {
            break;
        }
        for (m, slot) in previous.iter_mut().enumerate() {
            let now = if m < edge_count { A::mean(&pi[m]) } else { A::mean(&lambda[m - edge_count]) };
            slot.copy_from_slice(now);
        }
        pi_done.iter_mut().for_each(|c| *c = 0);
        lambda_done.iter_mut().for_each(|c| *c = 0);
        order.shuffle(rng);
        for &m in &order {
            if m < edge_count {
                let e = m;
                let (from, to) = edges[e];
                let siblings: Vec<&A::Value> =
                    child_edges[from].iter().filter(|&&c| c != e).map(|&c| &lambda[c]).collect();
                pi[e] = algebra.pi_message(&internal_pi[from], &siblings);
                pi_done[to] += 1;
                if pi_done[to] == parent_edges[to].len() && !evidence.contains(to) {
                    let incoming: Vec<&A::Value> = parent_edges[to].iter().map(|&p| &pi[p]).collect();
                    internal_pi[to] = algebra.internal_pi(to, &incoming);
                }
            } else {
                let e = m - edge_count;
                let (to, from) = edges[e];
                let slot = parent_edges[from].iter().position(|&p| p == e).expect("edge is a parent edge");
                let incoming: Vec<&A::Value> = parent_edges[from].iter().map(|&p| &pi[p]).collect();
                let mut message = algebra.lambda_message(from, slot, &internal_lambda[from], &incoming);
                if options.rescale_lambda {
                    algebra.rescale_lambda(&mut message);
                }
                lambda[e] = message;
                lambda_done[to] += 1;
                if lambda_done[to] == child_edges[to].len() && !evidence.contains(to) {
                    let incoming: Vec<&A::Value> = child_edges[to].iter().map(|&c| &lambda[c]).collect();
                    internal_lambda[to] = algebra.internal_lambda(to, &incoming);
                }
            }
        }
        rounds += 1;
        delta = max_change(&pi, &lambda, &previous);
    }

    Ok(Propagation { internal_pi, internal_lambda, report: ConvergenceReport { rounds, max_delta: delta, converged } })
}

/// `π_Y(y) = Σ_x θ_{y|x} Π_i π_i(x_i)`; roots return their prior row.
pub fn internal_pi(rows: &[Vec<f64>], parent_cardinalities: &[usize], incoming: &[&[f64]]) -> Vec<f64> {
    let card = rows[0].len();
    let mut out = vec![0.0; card];
    for_each_config(parent_cardinalities, |row, states| {
        let weight: f64 = incoming.iter().zip(states).map(|(m, &s)| m[s]).product();
        if weight != 0.0 {
            for (o, theta) in out.iter_mut().zip(&rows[row]) {
                *o += weight * theta;
            }
        }
    });
    out
}

/// Elementwise product of the children's λ-messages; leaves return all ones.
pub fn internal_lambda(cardinality: usize, incoming: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0; cardinality];
    for message in incoming {
        for (o, m) in out.iter_mut().zip(message.iter()) {
            *o *= m;
        }
    }
    out
}

/// `π_Y(y) Π_{j≠i} λ_{Y,Z_j}(y)`, before normalization.
pub fn pi_message(internal_pi: &[f64], other_child_messages: &[&[f64]]) -> Vec<f64> {
    let mut out = internal_pi.to_vec();
    for message in other_child_messages {
        for (o, m) in out.iter_mut().zip(message.iter()) {
            *o *= m;
        }
    }
    out
}

/// `λ_{X_i}(x_i) = Σ_y λ_Y(y) Σ_{x ~ x_i} θ_{y|x} Π_{j≠i} π_j(x_j)`.
/// `incoming` holds all parents' π-messages; entry `slot` is ignored.
pub fn lambda_message(
    rows: &[Vec<f64>],
    parent_cardinalities: &[usize],
    slot: usize,
    internal_lambda: &[f64],
    incoming: &[&[f64]],
) -> Vec<f64> {
    let mut out = vec![0.0; parent_cardinalities[slot]];
    for_each_config(parent_cardinalities, |row, states| {
        let mut weight = 1.0;
        for (j, (m, &s)) in incoming.iter().zip(states).enumerate() {
            if j != slot {
                weight *= m[s];
            }
        }
        let fit: f64 = internal_lambda.iter().zip(&rows[row]).map(|(l, t)| l * t).sum();
        out[states[slot]] += weight * fit;
    });
    out
}

/// Normalized `λ_Y π_Y`.
pub fn belief(internal_pi: &[f64], internal_lambda: &[f64]) -> Result<Vec<f64>, InferenceError> {
    let product: Vec<f64> = internal_pi.iter().zip(internal_lambda).map(|(p, l)| p * l).collect();
    let total: f64 = product.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(InferenceError::InconsistentEvidence);
    }
    Ok(product.into_iter().map(|x| x / total).collect())
}

fn normalize_in_place(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 && total.is_finite() {
        values.iter_mut().for_each(|v| *v /= total);
    }
}

struct FirstOrder<'a> {
    bn: &'a ConcreteNetwork,
    parent_cards: Vec<Vec<usize>>,
}

impl MessageAlgebra for FirstOrder<'_> {
    type Value = Vec<f64>;

    fn mean(value: &Vec<f64>) -> &[f64] {
        value
    }

    fn certain(mean: Vec<f64>) -> Vec<f64> {
        mean
    }

    fn internal_pi(&self, node: usize, parent_messages: &[&Vec<f64>]) -> Vec<f64> {
        let incoming: Vec<&[f64]> = parent_messages.iter().map(|m| m.as_slice()).collect();
        internal_pi(&self.bn.table(node).rows, &self.parent_cards[node], &incoming)
    }

    fn internal_lambda(&self, node: usize, child_messages: &[&Vec<f64>]) -> Vec<f64> {
        let incoming: Vec<&[f64]> = child_messages.iter().map(|m| m.as_slice()).collect();
        internal_lambda(self.bn.structure().cardinality(node), &incoming)
    }

    fn pi_message(&self, internal: &Vec<f64>, other_child_messages: &[&Vec<f64>]) -> Vec<f64> {
        let incoming: Vec<&[f64]> = other_child_messages.iter().map(|m| m.as_slice()).collect();
        let mut message = pi_message(internal, &incoming);
        normalize_in_place(&mut message);
        message
    }

    fn lambda_message(&self, node: usize, slot: usize, internal: &Vec<f64>, parent_messages: &[&Vec<f64>]) -> Vec<f64> {
        let incoming: Vec<&[f64]> = parent_messages.iter().map(|m| m.as_slice()).collect();
        lambda_message(&self.bn.table(node).rows, &self.parent_cards[node], slot, internal, &incoming)
    }

    fn rescale_lambda(&self, value: &mut Vec<f64>) {
        let top = value.iter().copied().fold(0.0f64, f64::max);
        if top > 0.0 && top.is_finite() {
            value.iter_mut().for_each(|v| *v /= top);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpResult {
    /// `p(Y | e)` for every variable.
    pub beliefs: Vec<Vec<f64>>,
    pub report: ConvergenceReport,
}

/// Loopy belief propagation on a concrete network.
pub fn run_bp<R: Rng + ?Sized>(
    bn: &ConcreteNetwork,
    evidence: &Evidence,
    options: &PropagationOptions,
    rng: &mut R,
) -> Result<BpResult, InferenceError> {
    let structure = bn.structure();
    let algebra = FirstOrder { bn, parent_cards: (0..structure.len()).map(|v| structure.parent_cardinalities(v)).collect() };
    let state = propagate(&algebra, structure, evidence, options, rng)?;
    let beliefs = state
        .internal_pi
        .iter()
        .zip(&state.internal_lambda)
        .map(|(p, l)| belief(p, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BpResult { beliefs, report: state.report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConcreteCpt, Variable};
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;

    const ROWS: [[f64; 2]; 2] = [[0.2, 0.8], [0.6, 0.4]];

    fn rows() -> Vec<Vec<f64>> {
        ROWS.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn internal_pi_examples() {
        assert_eq!(internal_pi(&[vec![0.3, 0.7]], &[], &[]), vec![0.3, 0.7]);
        assert_eq!(internal_pi(&rows(), &[2], &[&[1.0, 0.0]]), vec![0.2, 0.8]);
        let out = internal_pi(&rows(), &[2], &[&[0.3, 0.7]]);
        assert_abs_diff_eq!(out[0], 0.48, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.52, epsilon = 1e-15);
    }

    #[test]
    fn internal_lambda_examples() {
        assert_eq!(internal_lambda(2, &[]), vec![1.0, 1.0]);
        assert_eq!(internal_lambda(2, &[&[2.0, 1.0], &[0.5, 3.0]]), vec![1.0, 3.0]);
        assert_eq!(internal_lambda(2, &[&[0.4, 0.9]]), vec![0.4, 0.9]);
    }

    #[test]
    fn pi_message_examples() {
        assert_eq!(pi_message(&[0.3, 0.7], &[]), vec![0.3, 0.7]);
        assert_eq!(pi_message(&[0.5, 0.5], &[&[1.0, 1.0]]), vec![0.5, 0.5]);
        let out = pi_message(&[0.4, 0.6], &[&[0.2, 0.1]]);
        assert_abs_diff_eq!(out[0], 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.06, epsilon = 1e-15);
    }

    #[test]
    fn lambda_message_examples() {
        let neutral = lambda_message(&rows(), &[2], 0, &[1.0, 1.0], &[&[0.5, 0.5]]);
        assert_abs_diff_eq!(neutral[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(neutral[1], 1.0, epsilon = 1e-15);
        assert_eq!(lambda_message(&rows(), &[2], 0, &[1.0, 0.0], &[&[0.5, 0.5]]), vec![0.2, 0.6]);
        let copy = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(lambda_message(&copy, &[2], 0, &[0.0, 1.0], &[&[0.5, 0.5]]), vec![0.0, 1.0]);
    }

    #[test]
    fn two_parent_lambda_message_by_hand() {
        // θ rows for (x1, x2) = 00, 01, 10, 11
        let rows = vec![vec![0.1, 0.9], vec![0.4, 0.6], vec![0.7, 0.3], vec![0.5, 0.5]];
        let lambda = [0.3, 1.0];
        let pi2 = [0.25, 0.75];
        let out = lambda_message(&rows, &[2, 2], 0, &lambda, &[&[0.5, 0.5], &pi2]);
        let fit = |r: &[f64]| lambda[0] * r[0] + lambda[1] * r[1];
        assert_abs_diff_eq!(out[0], 0.25 * fit(&rows[0]) + 0.75 * fit(&rows[1]), epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.25 * fit(&rows[2]) + 0.75 * fit(&rows[3]), epsilon = 1e-15);
    }

    #[test]
    fn belief_examples() {
        assert_eq!(belief(&[0.48, 0.52], &[1.0, 1.0]).unwrap(), vec![0.48, 0.52]);
        let b = belief(&[0.5, 0.5], &[0.2, 0.6]).unwrap();
        assert_abs_diff_eq!(b[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.75, epsilon = 1e-15);
        assert_eq!(belief(&[1.0, 0.0], &[0.0, 1.0]), Err(InferenceError::InconsistentEvidence));
    }

    #[test]
    fn lambda_scale_does_not_change_belief() {
        let pi = internal_pi(&rows(), &[2], &[&[0.3, 0.7]]);
        let a = [0.3, 0.9];
        let b = [0.5, 0.25];
        let scaled: Vec<f64> = a.iter().map(|x| x * 17.0).collect();
        let base = belief(&pi, &internal_lambda(2, &[&a, &b])).unwrap();
        let moved = belief(&pi, &internal_lambda(2, &[&scaled, &b])).unwrap();
        for (x, y) in base.iter().zip(&moved) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn root_belief_without_evidence_is_prior() {
        let vars = (0..3).map(|i| Variable::with_cardinality(i, format!("V{i}"), 2).unwrap()).collect();
        let s = NetworkStructure::from_edges(vars, &[(0, 1), (1, 2)]).unwrap();
        let bn = ConcreteNetwork::new(
            s,
            vec![
                ConcreteCpt { rows: vec![vec![0.3, 0.7]] },
                ConcreteCpt { rows: rows() },
                ConcreteCpt { rows: rows() },
            ],
        )
        .unwrap();
        let r = run_bp(&bn, &Evidence::new(), &PropagationOptions::default(), &mut stream(1, Stream::Schedule, 0))
            .unwrap();
        assert_abs_diff_eq!(r.beliefs[0][0], 0.3, epsilon = 1e-15);
        assert!(r.report.converged);
        assert!(r.report.rounds <= 3);
    }

    #[test]
    fn epsilon_must_be_positive() {
        let vars = vec![Variable::with_cardinality(0, "A", 2).unwrap()];
        let s = NetworkStructure::new(vars, vec![vec![]]).unwrap();
        let bn = ConcreteNetwork::new(s, vec![ConcreteCpt { rows: vec![vec![0.5, 0.5]] }]).unwrap();
        let options = PropagationOptions::new(0.0, 10);
        assert!(run_bp(&bn, &Evidence::new(), &options, &mut stream(1, Stream::Schedule, 0)).is_err());
    }
}
