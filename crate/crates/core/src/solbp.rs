//! Second-order loopy belief propagation.
//!
//! Every π- and λ-message, and every internal value, carries a mean vector
//! and a covariance matrix. Means follow the first-order message equations
//! evaluated at the input means. Covariances follow the delta method: each
//! update is linearized around the input means and the input covariances
//! (conditional-table rows and incoming messages, taken as mutually
//! independent) are pushed through the Jacobians, `Σ_k J_k σ_k J_kᵀ`.
//!
//! Diagonal Jacobians are evaluated in product form (`Π_{j≠i} λ_j(y)` rather
//! than `μ[π_out(y)] / μ[λ_i(y)]`), which agrees with the ratio form
//! wherever the latter is defined and stays finite at zero means.
//!
//! π-messages are normalized to sum to one and λ-messages are rescaled so
//! their largest mean entry is one. Beliefs are invariant to the scale of
//! any single message, and by the same argument the linearized beliefs are
//! invariant to the scale Jacobian, so neither step changes the output.

use nalgebra::DMatrix;
use rand::Rng;

use crate::bp::{propagate, ConvergenceReport, MessageAlgebra, PropagationOptions};
use crate::error::InferenceError;
use crate::model::{
    for_each_config, Evidence, MarginalEstimate, MessageStats, NetworkMoments, NetworkStructure, RowMoments,
    UncertainNetwork,
};

fn is_zero(m: &DMatrix<f64>) -> bool {
    m.iter().all(|&x| x == 0.0)
}

/// `cov += J σ Jᵀ`.
fn add_sandwich(cov: &mut DMatrix<f64>, jacobian: &DMatrix<f64>, sigma: &DMatrix<f64>) {
    if is_zero(sigma) {
        return;
    }
    *cov += jacobian * sigma * jacobian.transpose();
}

/// `cov += D σ D` for diagonal `D`.
fn add_diagonal_sandwich(cov: &mut DMatrix<f64>, diagonal: &[f64], sigma: &DMatrix<f64>) {
    if is_zero(sigma) {
        return;
    }
    let n = diagonal.len();
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] += diagonal[i] * sigma[(i, j)] * diagonal[j];
        }
    }
}

fn symmetrize(cov: &mut DMatrix<f64>) {
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
}

fn product_except(messages: &[&MessageStats], skip: &[usize], states: &[usize]) -> f64 {
    let mut w = 1.0;
    for (j, (m, &s)) in messages.iter().zip(states).enumerate() {
        if !skip.contains(&j) {
            w *= m.mean[s];
        }
    }
    w
}

/// Jacobians of the internal π update.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalPiJacobians {
    /// `∂π_Y/∂θ_{·|x} = w_x I` with `w_x = Π_i μ[π_i(x_i)]`, one scalar per row.
    pub theta: Vec<f64>,
    /// `∂π_Y(y)/∂π_i(x_i) = Σ_{x~x_i} μ[θ_{y|x}] Π_{j≠i} μ[π_j(x_j)]`, one per parent.
    pub parents: Vec<DMatrix<f64>>,
}

pub fn internal_pi_jacobians(
    rows: &[RowMoments],
    parent_cardinalities: &[usize],
    incoming: &[&MessageStats],
) -> InternalPiJacobians {
    let card = rows[0].mean.len();
    let mut theta = vec![0.0; rows.len()];
    let mut parents: Vec<DMatrix<f64>> = parent_cardinalities.iter().map(|&c| DMatrix::zeros(card, c)).collect();
    for_each_config(parent_cardinalities, |row, states| {
        theta[row] = product_except(incoming, &[], states);
        for (i, jac) in parents.iter_mut().enumerate() {
            let w = product_except(incoming, &[i], states);
            for (y, t) in rows[row].mean.iter().enumerate() {
                jac[(y, states[i])] += t * w;
            }
        }
    });
    InternalPiJacobians { theta, parents }
}

/// Internal π statistics of a node from its table moments and incoming π-messages.
pub fn so_internal_pi(rows: &[RowMoments], parent_cardinalities: &[usize], incoming: &[&MessageStats]) -> MessageStats {
    let card = rows[0].mean.len();
    let mut mean = vec![0.0; card];
    let mut cov = DMatrix::zeros(card, card);
    let uncertain_parents: Vec<usize> = (0..incoming.len()).filter(|&i| !is_zero(&incoming[i].cov)).collect();
    let mut parent_jacobians: Vec<DMatrix<f64>> =
        uncertain_parents.iter().map(|&i| DMatrix::zeros(card, parent_cardinalities[i])).collect();
    for_each_config(parent_cardinalities, |row, states| {
        let weight: f64 = incoming.iter().zip(states).map(|(m, &s)| m.mean[s]).product();
        let moments = &rows[row];
        if weight != 0.0 {
            for (o, theta) in mean.iter_mut().zip(&moments.mean) {
                *o += weight * theta;
            }
            cov += &moments.cov * (weight * weight);
        }
        for (jac, &i) in parent_jacobians.iter_mut().zip(&uncertain_parents) {
            let w = product_except(incoming, &[i], states);
            for (y, t) in moments.mean.iter().enumerate() {
                jac[(y, states[i])] += t * w;
            }
        }
    });
    for (jac, &i) in parent_jacobians.iter().zip(&uncertain_parents) {
        add_sandwich(&mut cov, jac, &incoming[i].cov);
    }
    symmetrize(&mut cov);
    MessageStats { mean, cov }
}

/// Diagonals of `∂λ_Y/∂λ_{Y,Z_j} = diag(Π_{l≠j} μ[λ_l])`, one per child.
pub fn internal_lambda_jacobians(cardinality: usize, incoming: &[&MessageStats]) -> Vec<Vec<f64>> {
    (0..incoming.len())
        .map(|j| {
            (0..cardinality)
                .map(|y| incoming.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, m)| m.mean[y]).product())
                .collect()
        })
        .collect()
}

pub fn so_internal_lambda(cardinality: usize, incoming: &[&MessageStats]) -> MessageStats {
    let mut mean = vec![1.0; cardinality];
    for message in incoming {
        for (o, m) in mean.iter_mut().zip(&message.mean) {
            *o *= m;
        }
    }
    let mut cov = DMatrix::zeros(cardinality, cardinality);
    if incoming.iter().any(|m| !is_zero(&m.cov)) {
        for (diagonal, message) in internal_lambda_jacobians(cardinality, incoming).iter().zip(incoming) {
            add_diagonal_sandwich(&mut cov, diagonal, &message.cov);
        }
    }
    symmetrize(&mut cov);
    MessageStats { mean, cov }
}

/// Diagonal Jacobians of a π-message before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMessageJacobians {
    /// `∂π_{Z_i,Y}(y)/∂π_Y(y) = Π_{j≠i} μ[λ_j(y)]`.
    pub internal: Vec<f64>,
    /// `∂π_{Z_i,Y}(y)/∂λ_j(y) = μ[π_Y(y)] Π_{l≠i,j} μ[λ_l(y)]`, one per other child.
    pub siblings: Vec<Vec<f64>>,
}

pub fn pi_message_jacobians(internal_pi: &MessageStats, siblings: &[&MessageStats]) -> PiMessageJacobians {
    let card = internal_pi.len();
    let internal = (0..card).map(|y| siblings.iter().map(|m| m.mean[y]).product()).collect();
    let siblings = (0..siblings.len())
        .map(|j| {
            (0..card)
                .map(|y| {
                    internal_pi.mean[y]
                        * siblings.iter().enumerate().filter(|&(l, _)| l != j).map(|(_, m)| m.mean[y]).product::<f64>()
                })
                .collect()
        })
        .collect();
    PiMessageJacobians { internal, siblings }
}

/// Unnormalized π-message statistics `π_Y ⊙ Π_{j≠i} λ_j`.
pub fn so_pi_message(internal_pi: &MessageStats, siblings: &[&MessageStats]) -> MessageStats {
    let card = internal_pi.len();
    let mut mean = internal_pi.mean.clone();
    for message in siblings {
        for (o, m) in mean.iter_mut().zip(&message.mean) {
            *o *= m;
        }
    }
    if siblings.is_empty() {
        return MessageStats { mean, cov: internal_pi.cov.clone() };
    }
    let mut cov = DMatrix::zeros(card, card);
    let jac = pi_message_jacobians(internal_pi, siblings);
    add_diagonal_sandwich(&mut cov, &jac.internal, &internal_pi.cov);
    for (diagonal, message) in jac.siblings.iter().zip(siblings) {
        add_diagonal_sandwich(&mut cov, diagonal, &message.cov);
    }
    symmetrize(&mut cov);
    MessageStats { mean, cov }
}

/// `∂(m / Σm)/∂m = (I - h 1ᵀ) / Σm`.
pub fn normalization_jacobian(mean: &[f64]) -> DMatrix<f64> {
    let total: f64 = mean.iter().sum();
    let n = mean.len();
    DMatrix::from_fn(n, n, |k, l| {
        let delta = if k == l { 1.0 } else { 0.0 };
        (delta - mean[k] / total) / total
    })
}

/// Normalize a message to sum to one, linearizing the normalization.
/// Messages with zero total are left untouched.
pub fn normalize_stats(stats: &mut MessageStats) {
    let total: f64 = stats.mean.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return;
    }
    if !is_zero(&stats.cov) {
        let jac = normalization_jacobian(&stats.mean);
        stats.cov = &jac * &stats.cov * jac.transpose();
        symmetrize(&mut stats.cov);
    }
    stats.mean.iter_mut().for_each(|m| *m /= total);
}

/// Rescale so the largest mean entry is one; covariance scales by the square.
pub fn rescale_stats(stats: &mut MessageStats) {
    let top = stats.mean.iter().copied().fold(0.0f64, f64::max);
    if top > 0.0 && top.is_finite() && top != 1.0 {
        stats.mean.iter_mut().for_each(|m| *m /= top);
        stats.cov /= top * top;
    }
}

/// Jacobians of the λ-message from a node to its parent at `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMessageJacobians {
    /// Per row `x`: `∂λ(x_i)/∂θ_{y|x} = μ[λ_Y(y)] Π_{j≠i} μ[π_j(x_j)]`, nonzero only on output `x_i`.
    pub theta: Vec<DMatrix<f64>>,
    /// `∂λ(x_i)/∂π_j(x_j) = Σ_y μ[λ_Y(y)] Σ_{x~x_i,x_j} μ[θ_{y|x}] Π_{l≠i,j} μ[π_l(x_l)]`; `None` at `slot`.
    pub parents: Vec<Option<DMatrix<f64>>>,
    /// `∂λ(x_i)/∂λ_Y(y) = Σ_{x~x_i} μ[θ_{y|x}] Π_{j≠i} μ[π_j(x_j)]`.
    pub lambda: DMatrix<f64>,
}

pub fn lambda_message_jacobians(
    rows: &[RowMoments],
    parent_cardinalities: &[usize],
    slot: usize,
    internal_lambda: &MessageStats,
    incoming: &[&MessageStats],
) -> LambdaMessageJacobians {
    let card = internal_lambda.len();
    let out_card = parent_cardinalities[slot];
    let mut theta = vec![DMatrix::zeros(out_card, card); rows.len()];
    let mut parents: Vec<Option<DMatrix<f64>>> = parent_cardinalities
        .iter()
        .enumerate()
        .map(|(j, &c)| (j != slot).then(|| DMatrix::zeros(out_card, c)))
        .collect();
    let mut lambda = DMatrix::zeros(out_card, card);
    for_each_config(parent_cardinalities, |row, states| {
        let xi = states[slot];
        let w = product_except(incoming, &[slot], states);
        let theta_mean = &rows[row].mean;
        for y in 0..card {
            theta[row][(xi, y)] = internal_lambda.mean[y] * w;
            lambda[(xi, y)] += theta_mean[y] * w;
        }
        let fit: f64 = internal_lambda.mean.iter().zip(theta_mean).map(|(l, t)| l * t).sum();
        for (j, jac) in parents.iter_mut().enumerate() {
            if let Some(jac) = jac {
                jac[(xi, states[j])] += fit * product_except(incoming, &[slot, j], states);
            }
        }
    });
    LambdaMessageJacobians { theta, parents, lambda }
}

/// λ-message statistics from a node to the parent at `slot`; `incoming` holds
/// every parent's π-message in parent order (entry `slot` is not used).
pub fn so_lambda_message(
    rows: &[RowMoments],
    parent_cardinalities: &[usize],
    slot: usize,
    internal_lambda: &MessageStats,
    incoming: &[&MessageStats],
) -> MessageStats {
    let card = internal_lambda.len();
    let out_card = parent_cardinalities[slot];
    let mut mean = vec![0.0; out_card];
    let mut cov = DMatrix::zeros(out_card, out_card);
    let lambda_uncertain = !is_zero(&internal_lambda.cov);
    let mut lambda_jac = DMatrix::zeros(out_card, card);
    let uncertain_parents: Vec<usize> =
        (0..incoming.len()).filter(|&j| j != slot && !is_zero(&incoming[j].cov)).collect();
    let mut parent_jacobians: Vec<DMatrix<f64>> =
        uncertain_parents.iter().map(|&j| DMatrix::zeros(out_card, parent_cardinalities[j])).collect();
    let mut scratch = vec![0.0; card];
    for_each_config(parent_cardinalities, |row, states| {
        let xi = states[slot];
        let mut weight = 1.0;
        for (j, (m, &s)) in incoming.iter().zip(states).enumerate() {
            if j != slot {
                weight *= m.mean[s];
            }
        }
        let moments = &rows[row];
        let fit: f64 = internal_lambda.mean.iter().zip(&moments.mean).map(|(l, t)| l * t).sum();
        mean[xi] += weight * fit;
        if weight != 0.0 {
            // λᵀ σ_x λ, scaled by the weight squared, lands on the x_i diagonal
            for (s, k) in scratch.iter_mut().zip(0..card) {
                *s = (0..card).map(|l| moments.cov[(k, l)] * internal_lambda.mean[l]).sum();
            }
            let quad: f64 = scratch.iter().zip(&internal_lambda.mean).map(|(s, l)| s * l).sum();
            cov[(xi, xi)] += weight * weight * quad;
            if lambda_uncertain {
                for y in 0..card {
                    lambda_jac[(xi, y)] += moments.mean[y] * weight;
                }
            }
        }
        for (jac, &j) in parent_jacobians.iter_mut().zip(&uncertain_parents) {
            jac[(xi, states[j])] += fit * product_except(incoming, &[slot, j], states);
        }
    });
    for (jac, &j) in parent_jacobians.iter().zip(&uncertain_parents) {
        add_sandwich(&mut cov, jac, &incoming[j].cov);
    }
    if lambda_uncertain {
        add_sandwich(&mut cov, &lambda_jac, &internal_lambda.cov);
    }
    symmetrize(&mut cov);
    MessageStats { mean, cov }
}

/// Jacobians of `p(y|e) = λ(y)π(y) / Σ λπ`:
/// `∂p(y)/∂λ(y') = μ[π(y')](δ_{yy'} - μ[p(y)]) / Z` and the same with π and λ swapped.
/// Returns `(∂p/∂π, ∂p/∂λ)`, or `None` when `Σ λπ = 0`.
pub fn belief_jacobians(internal_pi: &[f64], internal_lambda: &[f64]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let n = internal_pi.len();
    let total: f64 = internal_pi.iter().zip(internal_lambda).map(|(p, l)| p * l).sum();
    if !(total > 0.0) || !total.is_finite() {
        return None;
    }
    let p: Vec<f64> = internal_pi.iter().zip(internal_lambda).map(|(a, b)| a * b / total).collect();
    let d_pi = DMatrix::from_fn(n, n, |y, yp| {
        let delta = if y == yp { 1.0 } else { 0.0 };
        internal_lambda[yp] * (delta - p[y]) / total
    });
    let d_lambda = DMatrix::from_fn(n, n, |y, yp| {
        let delta = if y == yp { 1.0 } else { 0.0 };
        internal_pi[yp] * (delta - p[y]) / total
    });
    Some((d_pi, d_lambda))
}

pub fn so_belief(
    variable: usize,
    internal_pi: &MessageStats,
    internal_lambda: &MessageStats,
) -> Result<MarginalEstimate, InferenceError> {
    let (d_pi, d_lambda) =
        belief_jacobians(&internal_pi.mean, &internal_lambda.mean).ok_or(InferenceError::InconsistentEvidence)?;
    let product: Vec<f64> = internal_pi.mean.iter().zip(&internal_lambda.mean).map(|(p, l)| p * l).collect();
    let total: f64 = product.iter().sum();
    let mean = product.into_iter().map(|x| x / total).collect();
    let n = internal_pi.len();
    let mut cov = DMatrix::zeros(n, n);
    add_sandwich(&mut cov, &d_lambda, &internal_lambda.cov);
    add_sandwich(&mut cov, &d_pi, &internal_pi.cov);
    symmetrize(&mut cov);
    Ok(MarginalEstimate { variable, mean, cov })
}

struct SecondOrder<'a> {
    structure: &'a NetworkStructure,
    moments: &'a NetworkMoments,
    parent_cards: Vec<Vec<usize>>,
}

impl MessageAlgebra for SecondOrder<'_> {
    type Value = MessageStats;

    fn mean(value: &MessageStats) -> &[f64] {
        &value.mean
    }

    fn certain(mean: Vec<f64>) -> MessageStats {
        MessageStats::certain(mean)
    }

    fn internal_pi(&self, node: usize, parent_messages: &[&MessageStats]) -> MessageStats {
        so_internal_pi(&self.moments.tables[node], &self.parent_cards[node], parent_messages)
    }

    fn internal_lambda(&self, node: usize, child_messages: &[&MessageStats]) -> MessageStats {
        so_internal_lambda(self.structure.cardinality(node), child_messages)
    }

    fn pi_message(&self, internal: &MessageStats, other_child_messages: &[&MessageStats]) -> MessageStats {
        let mut message = so_pi_message(internal, other_child_messages);
        normalize_stats(&mut message);
        message
    }

    fn lambda_message(
        &self,
        node: usize,
        slot: usize,
        internal: &MessageStats,
        parent_messages: &[&MessageStats],
    ) -> MessageStats {
        so_lambda_message(&self.moments.tables[node], &self.parent_cards[node], slot, internal, parent_messages)
    }

    fn rescale_lambda(&self, value: &mut MessageStats) {
        rescale_stats(value);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolbpResult {
    /// One estimate per variable; observed variables are one-hot with zero covariance.
    pub estimates: Vec<MarginalEstimate>,
    pub report: ConvergenceReport,
}

/// Second-order loopy belief propagation on an uncertain network.
pub fn run_solbp<R: Rng + ?Sized>(
    uncertain: &UncertainNetwork,
    evidence: &Evidence,
    options: &PropagationOptions,
    rng: &mut R,
) -> Result<SolbpResult, InferenceError> {
    run_solbp_with_moments(uncertain.structure(), &uncertain.moments(), evidence, options, rng)
}

/// Same as [`run_solbp`] with explicit row moments.
pub fn run_solbp_with_moments<R: Rng + ?Sized>(
    structure: &NetworkStructure,
    moments: &NetworkMoments,
    evidence: &Evidence,
    options: &PropagationOptions,
    rng: &mut R,
) -> Result<SolbpResult, InferenceError> {
    let algebra = SecondOrder {
        structure,
        moments,
        parent_cards: (0..structure.len()).map(|v| structure.parent_cardinalities(v)).collect(),
    };
    let state = propagate(&algebra, structure, evidence, options, rng)?;
    let estimates = state
        .internal_pi
        .iter()
        .zip(&state.internal_lambda)
        .enumerate()
        .map(|(v, (p, l))| so_belief(v, p, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SolbpResult { estimates, report: state.report })
}
