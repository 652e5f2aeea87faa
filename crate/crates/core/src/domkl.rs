//! Multi-kernel learner nodes and the network that steps them.
//!
//! A round at learner `k` is split at the exchange:
//!
//! 1. [`LearnerNode::local_step`]: predict with round-start state, score
//!    every kernel, take the ADMM θ step against last round's neighbor
//!    parameters, accumulate Hedge losses and emit a [`RoundExchange`].
//! 2. [`LearnerNode::absorb`]: with this round's neighbor exchanges, update
//!    the combination weights and the duals.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dokl::{
    gamma_hat, lambda_update, predict, theta_update_quadratic, AdmmConfig, KernelLearnerState, LossModel,
    Quadratic,
};
use crate::engine::{NetworkAlgorithm, SampleRef};
use crate::error::check_dim;
use crate::features::FeatureMap;
use crate::graph::Graph;
use crate::hedge::{combine_weights, mp_combine_weights, outgoing_message, HedgeState};
use crate::metrics::RoundRecord;
use crate::{Error, Result};

/// How a learner turns cumulative losses into combination weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HedgeVariant {
    /// Own losses plus the one-hop neighbors' losses of the same round.
    #[default]
    Product,
    /// Losses propagated along the tree by messages, one hop per round.
    /// Only exact on forests; `allow_cyclic` lifts the check.
    MessagePassing { allow_cyclic: bool },
}

/// What a learner sends to each neighbor after its local step.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundExchange {
    pub sender: usize,
    /// Updated θ for every kernel.
    pub thetas: Vec<Vec<f64>>,
    /// Cumulative Hedge loss per kernel (the log of `ŵ` up to `-1/η_g`).
    pub cumulative_losses: Vec<f64>,
    /// Message-passing variant only: `(recipient, log message)` pairs.
    pub messages: Vec<(usize, Vec<f64>)>,
}

impl RoundExchange {
    /// Canonical little-endian encoding: `sender`, `P`, `2M`, the `P` θ
    /// vectors, the `P` cumulative losses, the message count, then each
    /// message as `recipient` followed by `P` values. Integers are `u64`,
    /// reals are `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = self.thetas.len();
        let dim = self.thetas.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(8 * (4 + p * dim + p + self.messages.len() * (p + 1)));
        let put_u = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u64).to_le_bytes());
        put_u(&mut out, self.sender);
        put_u(&mut out, p);
        put_u(&mut out, dim);
        for th in &self.thetas {
            for v in th {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.cumulative_losses {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u(&mut out, self.messages.len());
        for (to, m) in &self.messages {
            put_u(&mut out, *to);
            for v in m {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut word = || -> Result<[u8; 8]> {
            let w = bytes
                .get(pos..pos + 8)
                .ok_or_else(|| Error::Parameter("truncated exchange".into()))?;
            pos += 8;
            Ok(w.try_into().expect("8 bytes"))
        };
        let sender = u64::from_le_bytes(word()?) as usize;
        let p = u64::from_le_bytes(word()?) as usize;
        let dim = u64::from_le_bytes(word()?) as usize;
        let mut thetas = Vec::with_capacity(p);
        for _ in 0..p {
            let mut th = Vec::with_capacity(dim);
            for _ in 0..dim {
                th.push(f64::from_le_bytes(word()?));
            }
            thetas.push(th);
        }
        let mut cumulative_losses = Vec::with_capacity(p);
        for _ in 0..p {
            cumulative_losses.push(f64::from_le_bytes(word()?));
        }
        let count = u64::from_le_bytes(word()?) as usize;
        let mut messages = Vec::new();
        for _ in 0..count {
            let to = u64::from_le_bytes(word()?) as usize;
            let mut m = Vec::with_capacity(p);
            for _ in 0..p {
                m.push(f64::from_le_bytes(word()?));
            }
            messages.push((to, m));
        }
        if pos != bytes.len() {
            return Err(Error::Parameter("trailing bytes after exchange".into()));
        }
        Ok(Self {
            sender,
            thetas,
            cumulative_losses,
            messages,
        })
    }
}

/// Output of the local half of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOutcome {
    pub prediction: f64,
    pub kernel_losses: Vec<f64>,
    pub outgoing: RoundExchange,
}

#[derive(Debug, Clone)]
pub struct LearnerNode {
    node_id: usize,
    neighbors: Vec<usize>,
    maps: Arc<[FeatureMap]>,
    kernel_states: Vec<KernelLearnerState>,
    hedge: HedgeState,
    variant: HedgeVariant,
    /// Neighbor θ's from the last exchange, aligned with `neighbors`.
    neighbor_thetas: Vec<Vec<Vec<f64>>>,
    /// Last round's incoming log messages, aligned with `neighbors`.
    inbox: Vec<Vec<f64>>,
}

impl LearnerNode {
    pub fn new(
        node_id: usize,
        neighbors: Vec<usize>,
        maps: Arc<[FeatureMap]>,
        eta_global: f64,
        variant: HedgeVariant,
    ) -> Result<Self> {
        let p = maps.len();
        let hedge = HedgeState::new(p, eta_global)?;
        let kernel_states: Vec<_> = maps.iter().map(|m| KernelLearnerState::zeros(m.output_dim())).collect();
        let zero_thetas: Vec<Vec<f64>> = kernel_states.iter().map(|s| s.theta.clone()).collect();
        Ok(Self {
            node_id,
            neighbor_thetas: vec![zero_thetas; neighbors.len()],
            inbox: vec![vec![0.0; p]; neighbors.len()],
            neighbors,
            maps,
            kernel_states,
            hedge,
            variant,
        })
    }

    pub fn node_id(&self) -> usize {
        self.node_id
    }

    pub fn kernel_states(&self) -> &[KernelLearnerState] {
        &self.kernel_states
    }

    pub fn hedge(&self) -> &HedgeState {
        &self.hedge
    }

    pub fn weights(&self) -> &[f64] {
        self.hedge.weights()
    }

    /// `z_p(x)` for every kernel.
    pub fn features(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.maps.iter().map(|m| m.map(x)).collect()
    }

    /// `Σ_p q_p θ_pᵀ z_p` from precomputed features.
    pub fn predict_features(&self, zs: &[Vec<f64>]) -> Result<f64> {
        check_dim(self.kernel_states.len(), zs.len())?;
        let mut acc = 0.0;
        for ((q, st), z) in self.hedge.weights().iter().zip(&self.kernel_states).zip(zs) {
            acc += q * predict(&st.theta, z)?;
        }
        Ok(acc)
    }

    pub fn predict_combined(&self, x: &[f64]) -> Result<f64> {
        self.predict_features(&self.features(x)?)
    }

    pub fn local_step(&mut self, x: &[f64], y: f64, cfg: &AdmmConfig) -> Result<LocalOutcome> {
        let zs = self.features(x)?;
        self.local_step_features(&zs, y, cfg)
    }

    pub fn local_step_features(&mut self, zs: &[Vec<f64>], y: f64, cfg: &AdmmConfig) -> Result<LocalOutcome> {
        let prediction = self.predict_features(zs)?;
        let degree = self.neighbors.len();
        let mut kernel_losses = Vec::with_capacity(zs.len());
        let mut new_thetas = Vec::with_capacity(zs.len());
        for (p, (st, z)) in self.kernel_states.iter().zip(zs).enumerate() {
            kernel_losses.push(Quadratic.evaluate(predict(&st.theta, z)?, y));
            let gamma = gamma_hat(&st.theta, self.neighbor_thetas.iter().map(|nb| nb[p].as_slice()))?;
            new_thetas.push(theta_update_quadratic(st, z, y, &gamma, degree, cfg)?);
        }
        for (st, th) in self.kernel_states.iter_mut().zip(&new_thetas) {
            st.theta.clone_from(th);
        }
        self.hedge.accumulate(&kernel_losses)?;
        let messages = match self.variant {
            HedgeVariant::Product => Vec::new(),
            HedgeVariant::MessagePassing { .. } => {
                let own = self.hedge.log_weights();
                let incoming: Vec<(usize, &[f64])> =
                    self.neighbors.iter().zip(&self.inbox).map(|(&i, m)| (i, m.as_slice())).collect();
                self.neighbors
                    .iter()
                    .map(|&l| outgoing_message(&own, &incoming, l).map(|m| (l, m)))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(LocalOutcome {
            prediction,
            kernel_losses,
            outgoing: RoundExchange {
                sender: self.node_id,
                thetas: new_thetas,
                cumulative_losses: self.hedge.cumulative_loss().to_vec(),
                messages,
            },
        })
    }

    /// Second half of the round. `exchanges` must be exactly this round's
    /// outputs of the node's neighbors, in any order.
    pub fn absorb(&mut self, exchanges: &[&RoundExchange], cfg: &AdmmConfig) -> Result<()> {
        let protocol = |reason: alloc::string::String| Error::Protocol {
            learner: self.node_id,
            reason,
        };
        if exchanges.len() != self.neighbors.len() {
            return Err(protocol(format!(
                "expected {} neighbor exchanges, got {}",
                self.neighbors.len(),
                exchanges.len()
            )));
        }
        let mut ordered: Vec<&RoundExchange> = Vec::with_capacity(exchanges.len());
        for &n in &self.neighbors {
            let ex = exchanges
                .iter()
                .find(|e| e.sender == n)
                .ok_or_else(|| protocol(format!("missing exchange from neighbor {n}")))?;
            if ex.thetas.len() != self.kernel_states.len() || ex.cumulative_losses.len() != self.kernel_states.len() {
                return Err(protocol(format!("exchange from {n} has the wrong kernel count")));
            }
            ordered.push(ex);
        }

        let weights = match self.variant {
            HedgeVariant::Product => {
                let nb: Vec<&[f64]> = ordered.iter().map(|e| e.cumulative_losses.as_slice()).collect();
                combine_weights(self.hedge.cumulative_loss(), &nb, self.hedge.eta_global())?
            }
            HedgeVariant::MessagePassing { .. } => {
                let inc: Vec<&[f64]> = self.inbox.iter().map(Vec::as_slice).collect();
                let q = mp_combine_weights(&self.hedge.log_weights(), &inc)?;
                for (slot, ex) in self.inbox.iter_mut().zip(&ordered) {
                    let (_, m) = ex
                        .messages
                        .iter()
                        .find(|(to, _)| *to == self.node_id)
                        .ok_or_else(|| Error::Protocol {
                            learner: self.node_id,
                            reason: format!("no message from {}", ex.sender),
                        })?;
                    slot.clone_from(m);
                }
                q
            }
        };
        self.hedge.set_weights(weights)?;

        for (p, st) in self.kernel_states.iter_mut().enumerate() {
            st.lambda = lambda_update(st, &st.theta, ordered.iter().map(|e| e.thetas[p].as_slice()), cfg)?;
        }
        for (slot, ex) in self.neighbor_thetas.iter_mut().zip(&ordered) {
            slot.clone_from(&ex.thetas);
        }
        Ok(())
    }
}

/// All learners of a multi-kernel network sharing one set of feature maps.
#[derive(Debug, Clone)]
pub struct DomklNetwork {
    graph: Graph,
    cfg: AdmmConfig,
    nodes: Vec<LearnerNode>,
}

impl DomklNetwork {
    pub fn new(
        graph: Graph,
        maps: Arc<[FeatureMap]>,
        cfg: AdmmConfig,
        eta_global: f64,
        variant: HedgeVariant,
    ) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Parameter("at least one feature map is required".into()));
        }
        if variant == (HedgeVariant::MessagePassing { allow_cyclic: false }) && !graph.is_forest() {
            return Err(Error::CyclicGraph);
        }
        let nodes = (0..graph.num_nodes())
            .map(|k| LearnerNode::new(k, graph.neighbors(k).to_vec(), maps.clone(), eta_global, variant))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { graph, cfg, nodes })
    }

    pub fn nodes(&self) -> &[LearnerNode] {
        &self.nodes
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// One round with the local halves executed in `order`.
    pub fn round_with_order(&mut self, samples: &[SampleRef<'_>], order: &[usize]) -> Result<RoundRecord> {
        let k = self.nodes.len();
        check_dim(k, samples.len())?;
        // every node shares the same maps, so node 0 can featurize for all
        let zs: Vec<Vec<Vec<f64>>> = samples
            .iter()
            .map(|s| self.nodes[0].features(s.x))
            .collect::<Result<_>>()?;
        let mut cross = vec![0.0; k * k];
        for (i, z) in zs.iter().enumerate() {
            for (l, node) in self.nodes.iter().enumerate() {
                cross[i * k + l] = node.predict_features(z)?;
            }
        }
        let weights: Vec<Vec<f64>> = self.nodes.iter().map(|n| n.weights().to_vec()).collect();

        let mut outcomes: Vec<Option<LocalOutcome>> = vec![None; k];
        for &i in order {
            outcomes[i] = Some(self.nodes[i].local_step_features(&zs[i], samples[i].y, &self.cfg)?);
        }
        let outcomes: Vec<LocalOutcome> = outcomes
            .into_iter()
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Parameter("round order must visit every learner".into()))?;

        for i in 0..k {
            let ex: Vec<&RoundExchange> = self.graph.neighbors(i).iter().map(|&l| &outcomes[l].outgoing).collect();
            self.nodes[i].absorb(&ex, &self.cfg)?;
        }
        Ok(RoundRecord {
            labels: samples.iter().map(|s| s.y).collect(),
            cross,
            kernel_losses: outcomes.into_iter().map(|o| o.kernel_losses).collect(),
            weights,
        })
    }
}

impl NetworkAlgorithm for DomklNetwork {
    fn num_learners(&self) -> usize {
        self.nodes.len()
    }

    fn round(&mut self, samples: &[SampleRef<'_>]) -> Result<RoundRecord> {
        let order: Vec<usize> = (0..self.nodes.len()).collect();
        self.round_with_order(samples, &order)
    }
}
