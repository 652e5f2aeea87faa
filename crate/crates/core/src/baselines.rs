//! Comparison algorithms: a centralized multi-kernel learner fed the whole
//! network's batch, and a single-kernel diffusion learner.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{NetworkAlgorithm, SampleRef};
use crate::error::check_dim;
use crate::features::FeatureMap;
use crate::graph::Graph;
use crate::hedge::HedgeState;
use crate::linalg::{axpy, dot};
use crate::metrics::RoundRecord;
use crate::{Error, Result};

/// Default OGD step for both baselines.
pub const DEFAULT_OGD_STEP: f64 = 0.1;

/// How the centralized learner turns `K` per-sample losses into one
/// Hedge loss per kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchLoss {
    #[default]
    Sum,
    Mean,
}

fn check_step(step: f64) -> Result<()> {
    if step >= 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("step size must be nonnegative, got {step}")))
    }
}

/// `-2(θᵀz - y)`, the negative quadratic-loss gradient coefficient.
fn residual_coeff(theta: &[f64], z: &[f64], y: f64) -> f64 {
    -2.0 * (dot(theta, z) - y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComklState {
    pub thetas: Vec<Vec<f64>>,
    pub hedge: HedgeState,
    pub step_size: f64,
    pub batch_loss: BatchLoss,
}

impl ComklState {
    pub fn new(maps: &[FeatureMap], step_size: f64, eta_global: f64, batch_loss: BatchLoss) -> Result<Self> {
        check_step(step_size)?;
        Ok(Self {
            thetas: maps.iter().map(|m| vec![0.0; m.output_dim()]).collect(),
            hedge: HedgeState::new(maps.len(), eta_global)?,
            step_size,
            batch_loss,
        })
    }

    pub fn weights(&self) -> &[f64] {
        self.hedge.weights()
    }
}

/// Per-sample, per-kernel features of a batch: `out[k][p] = z_p(x_k)`.
fn batch_features(batch: &[SampleRef<'_>], maps: &[FeatureMap]) -> Result<Vec<Vec<Vec<f64>>>> {
    batch
        .iter()
        .map(|s| maps.iter().map(|m| m.map(s.x)).collect())
        .collect()
}

struct ComklOutcome {
    predictions: Vec<f64>,
    kernel_losses: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

fn comkl_step_inner(
    state: &mut ComklState,
    batch: &[SampleRef<'_>],
    maps: &[FeatureMap],
    expected_batch: usize,
) -> Result<ComklOutcome> {
    check_dim(expected_batch, batch.len())?;
    check_dim(state.thetas.len(), maps.len())?;
    let zs = batch_features(batch, maps)?;
    let weights = state.hedge.weights().to_vec();
    let mut predictions = Vec::with_capacity(batch.len());
    let mut kernel_losses = Vec::with_capacity(batch.len());
    for (s, z) in batch.iter().zip(&zs) {
        let per_kernel: Vec<f64> = state.thetas.iter().zip(z).map(|(th, zp)| dot(th, zp)).collect();
        predictions.push(per_kernel.iter().zip(&weights).map(|(f, q)| f * q).sum());
        kernel_losses.push(per_kernel.iter().map(|f| (f - s.y) * (f - s.y)).collect::<Vec<f64>>());
    }
    let k = batch.len() as f64;
    let scale = state.step_size / k;
    for (p, theta) in state.thetas.iter_mut().enumerate() {
        let mut step = vec![0.0; theta.len()];
        for (s, z) in batch.iter().zip(&zs) {
            axpy(residual_coeff(theta, &z[p], s.y), &z[p], &mut step);
        }
        axpy(scale, &step, theta);
    }
    let mut batch_losses: Vec<f64> = (0..maps.len())
        .map(|p| kernel_losses.iter().map(|l| l[p]).sum())
        .collect();
    if state.batch_loss == BatchLoss::Mean {
        batch_losses.iter_mut().for_each(|l| *l /= k);
    }
    state.hedge.accumulate(&batch_losses)?;
    let q = state.hedge.local_weights();
    state.hedge.set_weights(q)?;
    Ok(ComklOutcome {
        predictions,
        kernel_losses,
        weights,
    })
}

/// Mini-batch OGD over every kernel,
/// `θ_p ← θ_p - (η/K) Σ_k 2(θ_pᵀz_p(x_k) - y_k) z_p(x_k)`, then a
/// single-agent Hedge update. Returns the round-start predictions.
pub fn comkl_step(
    state: &mut ComklState,
    batch: &[SampleRef<'_>],
    maps: &[FeatureMap],
    expected_batch: usize,
) -> Result<Vec<f64>> {
    Ok(comkl_step_inner(state, batch, maps, expected_batch)?.predictions)
}

/// The centralized learner seen as a `K`-learner network in which every
/// learner holds the same function.
#[derive(Debug, Clone)]
pub struct ComklNetwork {
    num_learners: usize,
    maps: Arc<[FeatureMap]>,
    state: ComklState,
}

impl ComklNetwork {
    pub fn new(
        num_learners: usize,
        maps: Arc<[FeatureMap]>,
        step_size: f64,
        eta_global: f64,
        batch_loss: BatchLoss,
    ) -> Result<Self> {
        if num_learners == 0 {
            return Err(Error::Parameter("need at least one learner".into()));
        }
        let state = ComklState::new(&maps, step_size, eta_global, batch_loss)?;
        Ok(Self {
            num_learners,
            maps,
            state,
        })
    }

    pub fn state(&self) -> &ComklState {
        &self.state
    }
}

impl NetworkAlgorithm for ComklNetwork {
    fn num_learners(&self) -> usize {
        self.num_learners
    }

    fn round(&mut self, samples: &[SampleRef<'_>]) -> Result<RoundRecord> {
        let k = self.num_learners;
        let out = comkl_step_inner(&mut self.state, samples, &self.maps, k)?;
        let mut cross = vec![0.0; k * k];
        for (i, p) in out.predictions.iter().enumerate() {
            cross[i * k..(i + 1) * k].fill(*p);
        }
        Ok(RoundRecord {
            labels: samples.iter().map(|s| s.y).collect(),
            cross,
            kernel_losses: out.kernel_losses,
            weights: vec![out.weights; k],
        })
    }
}

/// Combination rule of the diffusion learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CombineRule {
    /// `1 / (|N_k| + 1)` on every member of the closed neighborhood.
    #[default]
    UniformClosed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub theta: Vec<f64>,
    pub step_size: f64,
    pub rule: CombineRule,
}

impl DiffusionState {
    pub fn zeros(dim: usize, step_size: f64) -> Result<Self> {
        check_step(step_size)?;
        Ok(Self {
            theta: vec![0.0; dim],
            step_size,
            rule: CombineRule::UniformClosed,
        })
    }
}

/// Adapt then combine: `ψ_k = θ_k - η·2(θ_kᵀz_k - y_k) z_k`, then
/// `θ_k ← mean of ψ over {k} ∪ N_k`.
pub fn rff_dokl_step(
    states: &mut [DiffusionState],
    graph: &Graph,
    samples: &[SampleRef<'_>],
    map: &FeatureMap,
) -> Result<()> {
    check_dim(graph.num_nodes(), states.len())?;
    check_dim(states.len(), samples.len())?;
    let mut psis = Vec::with_capacity(states.len());
    for (st, s) in states.iter().zip(samples) {
        check_dim(map.output_dim(), st.theta.len())?;
        let z = map.map(s.x)?;
        let mut psi = st.theta.clone();
        axpy(st.step_size * residual_coeff(&st.theta, &z, s.y), &z, &mut psi);
        psis.push(psi);
    }
    for (k, st) in states.iter_mut().enumerate() {
        match st.rule {
            CombineRule::UniformClosed => {
                let nbrs = graph.neighbors(k);
                let w = 1.0 / (nbrs.len() + 1) as f64;
                let mut acc = psis[k].clone();
                for &l in nbrs {
                    axpy(1.0, &psis[l], &mut acc);
                }
                acc.iter_mut().for_each(|v| *v *= w);
                st.theta = acc;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DiffusionNetwork {
    graph: Graph,
    map: Arc<FeatureMap>,
    states: Vec<DiffusionState>,
}

impl DiffusionNetwork {
    pub fn new(graph: Graph, map: Arc<FeatureMap>, step_size: f64) -> Result<Self> {
        let states = (0..graph.num_nodes())
            .map(|_| DiffusionState::zeros(map.output_dim(), step_size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { graph, map, states })
    }

    pub fn states(&self) -> &[DiffusionState] {
        &self.states
    }
}

impl NetworkAlgorithm for DiffusionNetwork {
    fn num_learners(&self) -> usize {
        self.graph.num_nodes()
    }

    fn round(&mut self, samples: &[SampleRef<'_>]) -> Result<RoundRecord> {
        let k = self.graph.num_nodes();
        check_dim(k, samples.len())?;
        let mut cross = vec![0.0; k * k];
        for (i, s) in samples.iter().enumerate() {
            let z = self.map.map(s.x)?;
            for (l, st) in self.states.iter().enumerate() {
                cross[i * k + l] = dot(&st.theta, &z);
            }
        }
        rff_dokl_step(&mut self.states, &self.graph, samples, &self.map)?;
        Ok(RoundRecord {
            labels: samples.iter().map(|s| s.y).collect(),
            kernel_losses: (0..k)
                .map(|i| {
                    let e = cross[i * k + i] - samples[i].y;
                    vec![e * e]
                })
                .collect(),
            cross,
            weights: vec![vec![1.0]; k],
        })
    }
}
