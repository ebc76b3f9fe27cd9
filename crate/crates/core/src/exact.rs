//! Ground-truth machinery: exact inference by enumeration, ancestral
//! sampling, conjugate learning of Dirichlet tables, and a Monte-Carlo
//! estimate of the second-order statistics of `p(Y | e)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::InferenceError;
use crate::model::{
    ConcreteCpt, ConcreteNetwork, DirichletCpt, Evidence, MarginalEstimate, ModelError, NetworkStructure,
    UncertainNetwork,
};
use crate::rng::{stream, Stream};

/// Upper bound on the number of free joint assignments enumerated.
pub const ENUMERATION_LIMIT: u128 = 1 << 25;

/// Complete observations, one state index per variable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    rows: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(structure: &NetworkStructure, rows: Vec<Vec<usize>>) -> Result<Self, ModelError> {
        for row in &rows {
            if row.len() != structure.len() {
                return Err(ModelError::LengthMismatch(row.len(), structure.len()));
            }
            for (id, &state) in row.iter().enumerate() {
                let cardinality = structure.cardinality(id);
                if state >= cardinality {
                    return Err(ModelError::StateOutOfRange { state, cardinality });
                }
            }
        }
        Ok(Dataset { rows })
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Enumeration {
    /// `p(Y_i | e)` for every variable; observed variables are one-hot.
    pub marginals: Vec<Vec<f64>>,
    /// `p(Y_i = y, e)` before normalization.
    pub joints: Vec<Vec<f64>>,
    pub evidence_probability: f64,
}

/// Number of joint assignments consistent with the evidence.
pub fn free_assignments(structure: &NetworkStructure, evidence: &Evidence) -> u128 {
    (0..structure.len())
        .filter(|&v| !evidence.contains(v))
        .map(|v| structure.cardinality(v) as u128)
        .product()
}

/// Exact `p(Y_i | e)` for every variable by summing the joint over all
/// assignments compatible with the evidence.
pub fn enumerate_query(bn: &ConcreteNetwork, evidence: &Evidence) -> Result<Enumeration, InferenceError> {
    let structure = bn.structure();
    let needed = free_assignments(structure, evidence);
    if needed > ENUMERATION_LIMIT {
        return Err(InferenceError::Capacity { what: "enumeration", needed, limit: ENUMERATION_LIMIT });
    }
    let n = structure.len();
    let mut joints: Vec<Vec<f64>> = (0..n).map(|v| vec![0.0; structure.cardinality(v)]).collect();
    let mut assignment = vec![0usize; n];
    let mut walker = Walker { bn, evidence, order: structure.topological_order(), assignment: &mut assignment, joints: &mut joints };
    walker.visit(0, 1.0);

    let evidence_probability: f64 = joints.first().map(|j| j.iter().sum()).unwrap_or(1.0);
    if !(evidence_probability > 0.0) {
        return Err(InferenceError::InconsistentEvidence);
    }
    let marginals = joints
        .iter()
        .map(|j| j.iter().map(|p| p / evidence_probability).collect())
        .collect();
    Ok(Enumeration { marginals, joints, evidence_probability })
}

struct Walker<'a> {
    bn: &'a ConcreteNetwork,
    evidence: &'a Evidence,
    order: &'a [usize],
    assignment: &'a mut [usize],
    joints: &'a mut [Vec<f64>],
}

impl Walker<'_> {
    fn visit(&mut self, depth: usize, weight: f64) {
        if depth == self.order.len() {
            for (v, &state) in self.assignment.iter().enumerate() {
                self.joints[v][state] += weight;
            }
            return;
        }
        let v = self.order[depth];
        let structure = self.bn.structure();
        let mut row = 0;
        for &p in structure.parents(v) {
            row = row * structure.cardinality(p) + self.assignment[p];
        }
        let probs = self.bn.row(v, row);
        let states = match self.evidence.get(v) {
            Some(s) => s..s + 1,
            None => 0..probs.len(),
        };
        for state in states {
            let w = weight * probs[state];
            if w == 0.0 {
                continue;
            }
            self.assignment[v] = state;
            self.visit(depth + 1, w);
        }
    }
}

fn draw_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // round-off: fall back to the last state with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// One complete assignment drawn in topological order.
pub fn ancestral_sample<R: Rng + ?Sized>(bn: &ConcreteNetwork, rng: &mut R) -> Vec<usize> {
    let structure = bn.structure();
    let mut assignment = vec![0usize; structure.len()];
    for &v in structure.topological_order() {
        let mut row = 0;
        for &p in structure.parents(v) {
            row = row * structure.cardinality(p) + assignment[p];
        }
        assignment[v] = draw_categorical(bn.row(v, row), rng);
    }
    assignment
}

pub fn sample_dataset<R: Rng + ?Sized>(bn: &ConcreteNetwork, count: usize, rng: &mut R) -> Dataset {
    Dataset { rows: (0..count).map(|_| ancestral_sample(bn, rng)).collect() }
}

/// Alpha = 1 + count of matching rows; unobserved parent configurations keep the uniform prior.
pub fn learn_dirichlet(structure: &NetworkStructure, data: &Dataset) -> UncertainNetwork {
    let mut tables: Vec<DirichletCpt> = (0..structure.len())
        .map(|v| DirichletCpt { rows: vec![vec![1.0; structure.cardinality(v)]; structure.row_count(v)] })
        .collect();
    for row in data.rows() {
        for (v, table) in tables.iter_mut().enumerate() {
            let mut index = 0;
            for &p in structure.parents(v) {
                index = index * structure.cardinality(p) + row[p];
            }
            table.rows[index][row[v]] += 1.0;
        }
    }
    UncertainNetwork::new(structure.clone(), tables).expect("counts are positive and shaped by the structure")
}

/// Draw one probability vector from `Dirichlet(alpha)` via normalized unit-rate Gamma variates.
pub fn sample_dirichlet_row<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut draws: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
            .collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            draws.iter_mut().for_each(|d| *d /= sum);
            return draws;
        }
    }
}

/// A concrete network with every row drawn independently from its Dirichlet.
pub fn sample_parameters<R: Rng + ?Sized>(uncertain: &UncertainNetwork, rng: &mut R) -> ConcreteNetwork {
    let tables = uncertain
        .tables()
        .iter()
        .map(|t| ConcreteCpt { rows: t.rows.iter().map(|alpha| sample_dirichlet_row(alpha, rng)).collect() })
        .collect();
    ConcreteNetwork::new(uncertain.structure().clone(), renormalize(tables))
        .expect("sampled rows are normalized")
}

// Division by the sum can leave a row 1 ulp off; fold the residue into the largest entry.
fn renormalize(mut tables: Vec<ConcreteCpt>) -> Vec<ConcreteCpt> {
    for table in &mut tables {
        for row in &mut table.rows {
            let sum: f64 = row.iter().sum();
            let (k, _) = row
                .iter()
                .enumerate()
                .fold((0, f64::MIN), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
            row[k] += 1.0 - sum;
        }
    }
    tables
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloEstimate {
    /// Sample mean and unbiased sample covariance for every unobserved variable.
    pub estimates: Vec<MarginalEstimate>,
    /// Standard error of each diagonal entry of `cov`, per estimate and state.
    pub variance_standard_errors: Vec<Vec<f64>>,
    pub accepted: usize,
    pub attempts: usize,
}

/// Monte-Carlo second-order oracle: draw parameters, enumerate, and return
/// the sample moments of `p(Y | e)`. Draw `i` uses its own stream so the
/// result is independent of thread count. Draws under which the evidence has
/// zero probability are rejected, up to `10 * n_samples` attempts.
pub fn monte_carlo_second_order(
    uncertain: &UncertainNetwork,
    evidence: &Evidence,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloEstimate, InferenceError> {
    if n_samples < 2 {
        return Err(InferenceError::InvalidArgument("need at least two Monte-Carlo samples".into()));
    }
    let structure = uncertain.structure();
    let needed = free_assignments(structure, evidence);
    if needed > ENUMERATION_LIMIT {
        return Err(InferenceError::Capacity { what: "enumeration", needed, limit: ENUMERATION_LIMIT });
    }
    let queried: Vec<usize> = (0..structure.len()).filter(|&v| !evidence.contains(v)).collect();
    let max_attempts = 10 * n_samples;

    let mut accepted: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_samples);
    let mut attempts = 0;
    while accepted.len() < n_samples && attempts < max_attempts {
        let batch = (n_samples - accepted.len()).min(max_attempts - attempts);
        let results: Vec<Option<Vec<Vec<f64>>>> = (attempts..attempts + batch)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, Stream::MonteCarlo, i as u64);
                let bn = sample_parameters(uncertain, &mut rng);
                match enumerate_query(&bn, evidence) {
                    Ok(e) => Some(queried.iter().map(|&v| e.marginals[v].clone()).collect()),
                    Err(_) => None,
                }
            })
            .collect();
        attempts += batch;
        accepted.extend(results.into_iter().flatten());
    }
    if accepted.len() < n_samples {
        return Err(InferenceError::InconsistentEvidence);
    }

    let n = accepted.len() as f64;
    let mut estimates = Vec::with_capacity(queried.len());
    let mut standard_errors = Vec::with_capacity(queried.len());
    for (slot, &v) in queried.iter().enumerate() {
        let card = structure.cardinality(v);
        let mut mean = vec![0.0; card];
        for sample in &accepted {
            for (m, x) in mean.iter_mut().zip(&sample[slot]) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut cov = DMatrix::zeros(card, card);
        let mut fourth = vec![0.0; card];
        for sample in &accepted {
            let d: Vec<f64> = sample[slot].iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..card {
                fourth[i] += d[i].powi(4);
                for j in 0..card {
                    cov[(i, j)] += d[i] * d[j];
                }
            }
        }
        let biased: Vec<f64> = (0..card).map(|k| cov[(k, k)] / n).collect();
        cov /= n - 1.0;
        let se = (0..card)
            .map(|k| {
                let m4 = fourth[k] / n;
                let m2 = biased[k];
                ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
            })
            .collect();
        estimates.push(MarginalEstimate { variable: v, mean, cov });
        standard_errors.push(se);
    }
    Ok(MonteCarloEstimate {
        estimates,
        variance_standard_errors: standard_errors,
        accepted: accepted.len(),
        attempts,
    })
}
