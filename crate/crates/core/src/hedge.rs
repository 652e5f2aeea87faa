//! Kernel combination weights.
//!
//! A learner's unnormalized Hedge weight for kernel `p` is
//! `ŵ_p = exp(-L_p / η_g)` where `L_p` is its cumulative loss. The weights
//! are never materialized: learners keep and exchange `L_p`, and the
//! normalized weights come out of a max-shifted softmax, so large losses
//! cannot underflow.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::check_dim;
use crate::graph::Graph;
use crate::{Error, Result};

pub const DEFAULT_ETA_GLOBAL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct HedgeState {
    eta_global: f64,
    cumulative_loss: Vec<f64>,
    weights: Vec<f64>,
}

impl HedgeState {
    /// Zero cumulative loss (every `ŵ = 1`) and uniform weights.
    pub fn new(num_kernels: usize, eta_global: f64) -> Result<Self> {
        if num_kernels == 0 {
            return Err(Error::Parameter("hedge needs at least one kernel".into()));
        }
        if !(eta_global > 0.0 && eta_global.is_finite()) {
            return Err(Error::Parameter(format!(
                "eta_global must be positive, got {eta_global}"
            )));
        }
        Ok(Self {
            eta_global,
            cumulative_loss: vec![0.0; num_kernels],
            weights: vec![1.0 / num_kernels as f64; num_kernels],
        })
    }

    pub fn eta_global(&self) -> f64 {
        self.eta_global
    }

    pub fn num_kernels(&self) -> usize {
        self.cumulative_loss.len()
    }

    pub fn cumulative_loss(&self) -> &[f64] {
        &self.cumulative_loss
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `log ŵ_p = -L_p / η_g`
    pub fn log_weights(&self) -> Vec<f64> {
        self.cumulative_loss
            .iter()
            .map(|l| -l / self.eta_global)
            .collect()
    }

    pub fn accumulate(&mut self, instantaneous_losses: &[f64]) -> Result<()> {
        check_dim(self.num_kernels(), instantaneous_losses.len())?;
        if let Some(bad) = instantaneous_losses.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::Parameter(format!(
                "hedge losses must be nonnegative, got {bad}"
            )));
        }
        for (c, l) in self.cumulative_loss.iter_mut().zip(instantaneous_losses) {
            *c += l;
        }
        Ok(())
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        check_dim(self.num_kernels(), weights.len())?;
        self.weights = weights;
        Ok(())
    }

    /// Weights from the learner's own losses alone.
    pub fn local_weights(&self) -> Vec<f64> {
        softmax(&self.log_weights())
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| libm::exp(v - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Neighbor-product weights: `q_p ∝ ŵ_{k,p} Π_{l∈N_k} ŵ_{l,p}`, i.e. a
/// softmax of `-(L_{k,p} + Σ_l L_{l,p}) / η_g`.
pub fn combine_weights(
    own_cumulative: &[f64],
    neighbor_cumulatives: &[&[f64]],
    eta_global: f64,
) -> Result<Vec<f64>> {
    let mut total = own_cumulative.to_vec();
    for nb in neighbor_cumulatives {
        check_dim(total.len(), nb.len())?;
        for (t, v) in total.iter_mut().zip(nb.iter()) {
            *t += v;
        }
    }
    let logits: Vec<f64> = total.iter().map(|l| -l / eta_global).collect();
    Ok(softmax(&logits))
}

/// Message-passing weights: softmax of own `log ŵ` plus the incoming log messages.
pub fn mp_combine_weights(own_log_w: &[f64], incoming_log_messages: &[&[f64]]) -> Result<Vec<f64>> {
    let mut logits = own_log_w.to_vec();
    for m in incoming_log_messages {
        check_dim(logits.len(), m.len())?;
        for (a, b) in logits.iter_mut().zip(m.iter()) {
            *a += b;
        }
    }
    Ok(softmax(&logits))
}

/// `log m_{k→l} = log ŵ_k + Σ_{i∈N_k, i≠l} log m_{i→k}` where `incoming`
/// pairs each neighbor `i` with its last message to `k`.
pub fn outgoing_message(own_log_w: &[f64], incoming: &[(usize, &[f64])], recipient: usize) -> Result<Vec<f64>> {
    let mut out = own_log_w.to_vec();
    for (sender, m) in incoming {
        if *sender == recipient {
            continue;
        }
        check_dim(out.len(), m.len())?;
        for (a, b) in out.iter_mut().zip(m.iter()) {
            *a += b;
        }
    }
    Ok(out)
}

/// Log messages on every directed edge of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBoard {
    num_kernels: usize,
    graph: Graph,
    /// Indexed `2e` for `a→b` and `2e + 1` for `b→a`, where `(a, b)` is
    /// edge `e` with `a < b`.
    messages: Vec<Vec<f64>>,
}

impl MessageBoard {
    /// All messages start at `log m = 0`.
    pub fn new(graph: &Graph, num_kernels: usize) -> Self {
        Self {
            num_kernels,
            graph: graph.clone(),
            messages: vec![vec![0.0; num_kernels]; 2 * graph.num_edges()],
        }
    }

    fn slot(&self, from: usize, to: usize) -> Option<usize> {
        self.graph
            .edge_index(from, to)
            .filter(|_| self.graph.has_edge(from, to))
            .map(|e| 2 * e + usize::from(from > to))
    }

    pub fn message(&self, from: usize, to: usize) -> Option<&[f64]> {
        self.slot(from, to).map(|s| self.messages[s].as_slice())
    }

    /// Messages addressed to `node`, paired with their senders.
    pub fn incoming(&self, node: usize) -> Vec<(usize, &[f64])> {
        self.graph
            .neighbors(node)
            .iter()
            .map(|&i| (i, self.message(i, node).expect("neighbor edge")))
            .collect()
    }
}

/// One synchronous message update over the whole graph. Requires a forest
/// unless `allow_cyclic` is set; on cycles a node's own losses return to it.
pub fn mp_update_messages(
    board: &MessageBoard,
    graph: &Graph,
    latest_log_w: &[Vec<f64>],
    allow_cyclic: bool,
) -> Result<MessageBoard> {
    if board.graph != *graph {
        return Err(Error::Parameter("message board was built for another graph".into()));
    }
    check_dim(graph.num_nodes(), latest_log_w.len())?;
    if !allow_cyclic && !graph.is_forest() {
        return Err(Error::CyclicGraph);
    }
    let mut next = board.clone();
    for k in 0..graph.num_nodes() {
        check_dim(board.num_kernels, latest_log_w[k].len())?;
        let incoming = board.incoming(k);
        for &l in graph.neighbors(k) {
            let msg = outgoing_message(&latest_log_w[k], &incoming, l)?;
            let slot = board.slot(k, l).expect("neighbor edge");
            next.messages[slot] = msg;
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn assert_simplex(q: &[f64]) {
        let s: f64 = q.iter().sum();
        assert!((s - 1.0).abs() <= 1e-12, "sum {s}");
        assert!(q.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn accumulate_examples() {
        let mut h = HedgeState::new(3, 10.0).unwrap();
        let before = h.clone();
        h.accumulate(&[0.0; 3]).unwrap();
        assert_eq!(h, before);

        h.accumulate(&[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(h.log_weights(), vec![-0.05, -0.1, -0.2]);
        h.accumulate(&[0.25, 0.0, 1.0]).unwrap();
        assert_eq!(h.cumulative_loss(), &[0.75, 1.0, 3.0]);

        assert!(h.accumulate(&[0.0, -1.0, 0.0]).is_err());
        assert!(h.accumulate(&[0.0, 1.0]).is_err());
        assert!(HedgeState::new(0, 1.0).is_err());
        assert!(HedgeState::new(2, 0.0).is_err());
    }

    #[test]
    fn combine_examples() {
        let q = combine_weights(&[3.0; 4], &[&[1.0; 4][..]], 10.0).unwrap();
        for v in &q {
            assert!((v - 0.25).abs() < 1e-15);
        }
        // ratio q1/q2 = exp(Δ/η) for Δ = L2 - L1
        let q = combine_weights(&[1.0, 4.0], &[&[0.5, 2.0][..]], 10.0).unwrap();
        let delta = (4.0 + 2.0) - (1.0 + 0.5);
        assert!((q[0] / q[1] - libm::exp(delta / 10.0)).abs() < 1e-12);

        let mut rng = seeded_rng(4);
        for _ in 0..200 {
            let own: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..50.0)).collect();
            let nb: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..50.0)).collect();
            assert_simplex(&combine_weights(&own, &[&nb], 3.0).unwrap());
        }
    }

    #[test]
    fn weights_survive_huge_losses() {
        let own = [1e6, 1e6 + 5.0, 2e6];
        let q = combine_weights(&own, &[&[1e6, 1e6, 1e6][..]], 10.0).unwrap();
        assert!(q.iter().all(|v| v.is_finite()));
        assert_simplex(&q);
        assert!(q[0] > q[1] && q[1] > q[2]);
    }

    #[test]
    fn message_passing_leaf_and_zero() {
        let g = Graph::path(2).unwrap();
        let b = MessageBoard::new(&g, 2);
        let zero = mp_update_messages(&b, &g, &[vec![0.0; 2], vec![0.0; 2]], false).unwrap();
        assert_eq!(zero, b);

        let w = vec![vec![-0.3, -0.1], vec![-0.2, -0.9]];
        let b1 = mp_update_messages(&b, &g, &w, false).unwrap();
        assert_eq!(b1.message(0, 1).unwrap(), &w[0][..]);
        assert_eq!(b1.message(1, 0).unwrap(), &w[1][..]);
    }

    #[test]
    fn message_passing_rejects_cycles_without_override() {
        let g = Graph::cycle(3).unwrap();
        let b = MessageBoard::new(&g, 1);
        let w = vec![vec![-1.0]; 3];
        assert_eq!(mp_update_messages(&b, &g, &w, false), Err(Error::CyclicGraph));
        // with the override losses echo back around the cycle
        let mut cur = b;
        for _ in 0..4 {
            cur = mp_update_messages(&cur, &g, &w, true).unwrap();
        }
        assert!(cur.message(0, 1).unwrap()[0] < -1.0);
    }

    /// Unrolls the 3-path by hand: with per-round losses `a_t`, `b_t`, `c_t`
    /// on nodes 0, 1, 2 and messages lagging one round, node 2's logit at the
    /// end of round t collects its own losses to t, node 1's to t-1 and
    /// node 0's to t-2.
    #[test]
    fn three_path_delayed_sums() {
        let g = Graph::path(3).unwrap();
        let eta = 2.0;
        let losses = [[0.3, 0.7, 0.1, 0.9, 0.4], [0.5, 0.2, 0.8, 0.6, 0.3], [0.05, 0.25, 0.45, 0.65, 0.85]];
        let mut cum = [0.0f64; 3];
        let mut board = MessageBoard::new(&g, 1);
        for t in 0..5 {
            for n in 0..3 {
                cum[n] += losses[n][t];
            }
            let log_w: Vec<Vec<f64>> = cum.iter().map(|c| vec![-c / eta]).collect();
            let inc = board.incoming(2);
            let logit = log_w[2][0] + inc.iter().map(|(_, m)| m[0]).sum::<f64>();
            let own: f64 = losses[2][..=t].iter().sum();
            let mid: f64 = losses[1][..t].iter().sum();
            let far: f64 = losses[0][..t.saturating_sub(1)].iter().sum();
            assert!((logit + (own + mid + far) / eta).abs() < 1e-14, "t={t}");
            board = mp_update_messages(&board, &g, &log_w, false).unwrap();
        }
    }

    #[test]
    fn two_path_message_passing_matches_product() {
        let g = Graph::path(2).unwrap();
        let eta = 10.0;
        let own = [1.0, 2.5, 0.3];
        let nb = [0.7, 0.1, 4.0];
        let log_w: Vec<Vec<f64>> = [own, nb].iter().map(|c| c.iter().map(|v| -v / eta).collect()).collect();
        let board = mp_update_messages(&MessageBoard::new(&g, 3), &g, &log_w, false).unwrap();
        let q_mp = mp_combine_weights(&log_w[0], &[board.message(1, 0).unwrap()]).unwrap();
        let q_prod = combine_weights(&own, &[&nb[..]], eta).unwrap();
        for (a, b) in q_mp.iter().zip(&q_prod) {
            assert!((a - b).abs() < 1e-15);
        }
        let u = mp_combine_weights(&[0.0; 4], &[&[0.0; 4][..]]).unwrap();
        assert!(u.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn shift_invariance(l in proptest::collection::vec(0.0f64..100.0, 5), c in -50.0f64..50.0) {
            let shifted: Vec<f64> = l.iter().map(|v| v + c).collect();
            let a = combine_weights(&l, &[], 10.0).unwrap();
            let b = combine_weights(&shifted, &[], 10.0).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn monotone_in_own_loss(l in proptest::collection::vec(0.0f64..100.0, 4), i in 0usize..4, bump in 0.01f64..10.0) {
            let a = combine_weights(&l, &[], 10.0).unwrap();
            let mut m = l.clone();
            m[i] += bump;
            let b = combine_weights(&m, &[], 10.0).unwrap();
            prop_assert!(b[i] < a[i]);
        }

        #[test]
        fn mp_weights_on_simplex(l in proptest::collection::vec(-100.0f64..0.0, 3), m in proptest::collection::vec(-100.0f64..0.0, 3)) {
            let q = mp_combine_weights(&l, &[&m]).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
