//! Learning-accuracy and consensus metrics over run traces.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::Graph;
use crate::{Error, Result};

/// Everything one synchronous round produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// `y_{k,t}` per learner.
    pub labels: Vec<f64>,
    /// Row-major `K × K`: entry `[k][l]` is learner `l`'s round-start
    /// function evaluated at learner `k`'s input. The diagonal holds the
    /// learners' own predictions.
    pub cross: Vec<f64>,
    /// Per learner, the prediction-time loss of each kernel function.
    pub kernel_losses: Vec<Vec<f64>>,
    /// Per learner, the combination weights used for the prediction.
    pub weights: Vec<Vec<f64>>,
}

impl RoundRecord {
    pub fn num_learners(&self) -> usize {
        self.labels.len()
    }

    pub fn prediction(&self, k: usize) -> f64 {
        self.cross[k * self.labels.len() + k]
    }

    /// Learner `l`'s function at learner `k`'s input.
    pub fn cross_prediction(&self, k: usize, l: usize) -> f64 {
        self.cross[k * self.labels.len() + l]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    num_learners: usize,
    rounds: Vec<RoundRecord>,
}

impl RunTrace {
    pub fn new(num_learners: usize, rounds: Vec<RoundRecord>) -> Self {
        Self {
            num_learners,
            rounds,
        }
    }

    pub fn num_learners(&self) -> usize {
        self.num_learners
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    /// The first `t` rounds.
    pub fn truncated(&self, t: usize) -> Self {
        Self {
            num_learners: self.num_learners,
            rounds: self.rounds[..t.min(self.rounds.len())].to_vec(),
        }
    }
}

/// A metric as a function of the round index; `values[0]` is round 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCurve {
    pub values: Vec<f64>,
    pub algorithm: String,
    pub trial_seed: u64,
}

impl MetricCurve {
    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// Running average of a per-round quantity with the round-1 value pinned to 1.
fn running_mean_pinned(per_round: impl Iterator<Item = f64>, denom_per_round: f64) -> Vec<f64> {
    let mut acc = 0.0;
    per_round
        .enumerate()
        .map(|(i, v)| {
            acc += v;
            if i == 0 {
                1.0
            } else {
                acc / ((i + 1) as f64 * denom_per_round)
            }
        })
        .collect()
}

/// `MSE(t) = 1/(tK) Σ_{τ≤t} Σ_k (f̂_k(x_{k,τ}) - y_{k,τ})²`, with `MSE(1) = 1`.
pub fn mse_curve(trace: &RunTrace) -> Vec<f64> {
    let k = trace.num_learners;
    running_mean_pinned(
        trace.rounds.iter().map(|r| {
            (0..k)
                .map(|i| {
                    let e = r.prediction(i) - r.labels[i];
                    e * e
                })
                .sum()
        }),
        k as f64,
    )
}

/// `CV(t) = 1/(tK(K-1)) Σ_{τ≤t} Σ_k Σ_{l≠k} (f̂_k(x_{k,τ}) - f̂_l(x_{k,τ}))²`,
/// with `CV(1) = 1`.
pub fn cv_curve(trace: &RunTrace) -> Result<Vec<f64>> {
    let k = trace.num_learners;
    if k < 2 {
        return Err(Error::Undefined("consensus violation needs at least two learners"));
    }
    Ok(running_mean_pinned(
        trace.rounds.iter().map(|r| {
            let mut s = 0.0;
            for i in 0..k {
                let own = r.prediction(i);
                for l in (0..k).filter(|&l| l != i) {
                    let d = own - r.cross_prediction(i, l);
                    s += d * d;
                }
            }
            s
        }),
        (k * (k - 1)) as f64,
    ))
}

/// `regret_a^k = Σ_t (f̂_k(x_{k,t}) - y)² - hindsight[t][k]`, per learner.
/// `hindsight[t][k]` is the loss of the best fixed function at `(k, t)`.
pub fn regret_accuracy(trace: &RunTrace, hindsight_losses: &[Vec<f64>]) -> Result<Vec<f64>> {
    crate::error::check_dim(trace.len(), hindsight_losses.len())?;
    let k = trace.num_learners;
    let mut out = vec![0.0; k];
    for (r, h) in trace.rounds.iter().zip(hindsight_losses) {
        crate::error::check_dim(k, h.len())?;
        for i in 0..k {
            let e = r.prediction(i) - r.labels[i];
            out[i] += e * e - h[i];
        }
    }
    Ok(out)
}

/// `regret_d^k = Σ_t [Σ_{l∈N_k} (f̂_k(x_{k,t}) - f̂_l(x_{k,t}))]²`, per learner.
/// The neighbor differences are summed before squaring.
pub fn regret_discrepancy(trace: &RunTrace, graph: &Graph) -> Result<Vec<f64>> {
    let k = trace.num_learners;
    crate::error::check_dim(k, graph.num_nodes())?;
    let mut out = vec![0.0; k];
    for r in &trace.rounds {
        for (i, o) in out.iter_mut().enumerate() {
            let own = r.prediction(i);
            let s: f64 = graph
                .neighbors(i)
                .iter()
                .map(|&l| own - r.cross_prediction(i, l))
                .sum();
            *o += s * s;
        }
    }
    Ok(out)
}
