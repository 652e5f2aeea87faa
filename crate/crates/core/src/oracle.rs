//! Brute-force references for the distributed updates and for the
//! best fixed function in hindsight.
//!
//! Consensus is encoded edge by edge: every undirected edge `{k, l}` owns
//! an auxiliary vector `γ_{kl}`, and the constraints `θ_k = γ_{kl}` and
//! `θ_l = γ_{kl}` carry the duals `λ_(k,l)` and `λ_(l,k)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dokl::{AdmmConfig, LossModel};
use crate::error::check_dim;
use crate::graph::Graph;
use crate::linalg::{axpy, dot, norm, SquareMatrix};
use crate::{Error, Result};

/// Ridge used by [`hindsight_best`].
pub const HINDSIGHT_RIDGE: f64 = 1e-8;

/// One joint step of edge-wise consensus ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStepProblem {
    pub graph: Graph,
    /// `z_k`, one per node.
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    /// `θ̂_k` from the previous step.
    pub prev_thetas: Vec<Vec<f64>>,
    /// `γ_{kl}` aligned with `graph.edges()`.
    pub gammas: Vec<Vec<f64>>,
    /// Slot `2e` holds `λ_(a,b)` and slot `2e + 1` holds `λ_(b,a)` for
    /// edge `e = (a, b)`.
    pub duals: Vec<Vec<f64>>,
    pub cfg: AdmmConfig,
}

impl JointStepProblem {
    /// Zero duals and the midpoints of `prev_thetas` as auxiliaries.
    pub fn from_thetas(
        graph: Graph,
        features: Vec<Vec<f64>>,
        labels: Vec<f64>,
        prev_thetas: Vec<Vec<f64>>,
        cfg: AdmmConfig,
    ) -> Result<Self> {
        let dim = prev_thetas.first().map_or(0, Vec::len);
        let mut p = Self {
            gammas: Vec::new(),
            duals: vec![vec![0.0; dim]; 2 * graph.num_edges()],
            graph,
            features,
            labels,
            prev_thetas,
            cfg,
        };
        p.gammas = midpoints(&p.graph, &p.prev_thetas);
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.prev_thetas.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.graph.num_nodes();
        let e = self.graph.num_edges();
        check_dim(k, self.features.len())?;
        check_dim(k, self.labels.len())?;
        check_dim(k, self.prev_thetas.len())?;
        check_dim(e, self.gammas.len())?;
        check_dim(2 * e, self.duals.len())?;
        let d = self.dim();
        for v in self
            .features
            .iter()
            .chain(&self.prev_thetas)
            .chain(&self.gammas)
            .chain(&self.duals)
        {
            check_dim(d, v.len())?;
        }
        Ok(())
    }

    /// Slot of `λ_(from,to)`.
    pub fn dual_slot(&self, from: usize, to: usize) -> Option<usize> {
        let e = self.graph.edge_index(from, to)?;
        Some(if from < to { 2 * e } else { 2 * e + 1 })
    }

    /// `Σ_{l∈N_k} λ_(k,l)`
    pub fn aggregated_dual(&self, node: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &l in self.graph.neighbors(node) {
            let s = self.dual_slot(node, l).expect("neighbor has an edge");
            axpy(1.0, &self.duals[s], &mut out);
        }
        out
    }

    /// The θ-part of the augmented Lagrangian plus the proximal term.
    pub fn objective<L: LossModel + ?Sized>(&self, loss: &L, thetas: &[Vec<f64>]) -> f64 {
        let mut f = 0.0;
        for (k, th) in thetas.iter().enumerate() {
            f += loss.evaluate(dot(th, &self.features[k]), self.labels[k]);
            for (a, b) in th.iter().zip(&self.prev_thetas[k]) {
                f += self.cfg.eta_local / 2.0 * (a - b) * (a - b);
            }
            for &l in self.graph.neighbors(k) {
                let e = self.graph.edge_index(k, l).expect("edge");
                let lam = &self.duals[self.dual_slot(k, l).expect("edge")];
                for ((t, g), la) in th.iter().zip(&self.gammas[e]).zip(lam) {
                    f += la * (t - g) + self.cfg.rho / 2.0 * (t - g) * (t - g);
                }
            }
        }
        f
    }

    fn gradient<L: LossModel + ?Sized>(&self, loss: &L, thetas: &[Vec<f64>]) -> Vec<Vec<f64>> {
        thetas
            .iter()
            .enumerate()
            .map(|(k, th)| {
                let z = &self.features[k];
                let g = loss.gradient(dot(th, z), self.labels[k]);
                let mut out: Vec<f64> = th
                    .iter()
                    .zip(&self.prev_thetas[k])
                    .zip(z)
                    .map(|((t, p), zi)| g * zi + self.cfg.eta_local * (t - p))
                    .collect();
                for &l in self.graph.neighbors(k) {
                    let e = self.graph.edge_index(k, l).expect("edge");
                    let lam = &self.duals[self.dual_slot(k, l).expect("edge")];
                    for (((o, t), gm), la) in out.iter_mut().zip(th).zip(&self.gammas[e]).zip(lam) {
                        *o += la + self.cfg.rho * (t - gm);
                    }
                }
                out
            })
            .collect()
    }
}

fn midpoints(graph: &Graph, thetas: &[Vec<f64>]) -> Vec<Vec<f64>> {
    graph
        .edges()
        .iter()
        .map(|&(a, b)| thetas[a].iter().zip(&thetas[b]).map(|(x, y)| (x + y) / 2.0).collect())
        .collect()
}

/// Joint minimizer over all `K` stacked parameters for the quadratic
/// loss, from one dense `2MK × 2MK` solve.
pub fn joint_theta_step(p: &JointStepProblem) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    let d = p.dim();
    let k = p.graph.num_nodes();
    let n = d * k;
    let mut a = SquareMatrix::zeros(n);
    let mut b = vec![0.0; n];
    for node in 0..k {
        let off = node * d;
        let z = &p.features[node];
        let deg = p.graph.degree(node) as f64;
        for i in 0..d {
            for j in 0..d {
                a[(off + i, off + j)] += 2.0 * z[i] * z[j];
            }
            a[(off + i, off + i)] += p.cfg.eta_local + p.cfg.rho * deg;
            b[off + i] = 2.0 * p.labels[node] * z[i] + p.cfg.eta_local * p.prev_thetas[node][i];
        }
        for &l in p.graph.neighbors(node) {
            let e = p.graph.edge_index(node, l).expect("edge");
            let lam = &p.duals[p.dual_slot(node, l).expect("edge")];
            for i in 0..d {
                b[off + i] += p.cfg.rho * p.gammas[e][i] - lam[i];
            }
        }
    }
    let x = a.solve(&b)?;
    Ok(x.chunks(d.max(1)).take(k).map(<[f64]>::to_vec).collect())
}

/// Joint minimizer for an arbitrary convex loss by gradient descent with
/// backtracking, to gradient norm `tol`.
pub fn joint_theta_step_general<L: LossModel + ?Sized>(
    p: &JointStepProblem,
    loss: &L,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    let max_deg = (0..p.graph.num_nodes()).map(|k| p.graph.degree(k)).max().unwrap_or(0);
    let max_zz = p.features.iter().map(|z| dot(z, z)).fold(0.0, f64::max);
    let curv = loss.curvature_bound().unwrap_or(0.0) * max_zz;
    let base = 1.0 / (p.cfg.eta_local + p.cfg.rho * max_deg as f64 + curv);
    let mut thetas = p.prev_thetas.clone();
    let mut f = p.objective(loss, &thetas);
    let mut gn = f64::INFINITY;
    for _ in 0..max_iters {
        let g = p.gradient(loss, &thetas);
        gn = libm::sqrt(g.iter().map(|v| dot(v, v)).sum());
        if gn <= tol {
            return Ok(thetas);
        }
        let mut step = base;
        loop {
            let cand: Vec<Vec<f64>> = thetas
                .iter()
                .zip(&g)
                .map(|(t, gk)| t.iter().zip(gk).map(|(a, b)| a - step * b).collect())
                .collect();
            let fc = p.objective(loss, &cand);
            let flat = fc <= f + 8.0 * f64::EPSILON * (f.abs() + 1.0)
                && libm::sqrt(p.gradient(loss, &cand).iter().map(|v| dot(v, v)).sum()) < gn;
            if fc <= f - 1e-4 * step * gn * gn || flat {
                thetas = cand;
                f = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-30 {
                return Err(Error::Convergence { iterations: max_iters, grad_norm: gn });
            }
        }
    }
    Err(Error::Convergence { iterations: max_iters, grad_norm: gn })
}

/// `γ_{kl} = (θ_k + θ_l)/2 + (λ_(k,l) + λ_(l,k)) / (2ρ)`, the exact
/// γ-minimizer. The dual term vanishes when the duals are antisymmetric.
pub fn joint_gamma_step(p: &JointStepProblem, new_thetas: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    check_dim(p.graph.num_nodes(), new_thetas.len())?;
    let mut out = midpoints(&p.graph, new_thetas);
    for (e, g) in out.iter_mut().enumerate() {
        for (gi, (u, v)) in g.iter_mut().zip(p.duals[2 * e].iter().zip(&p.duals[2 * e + 1])) {
            *gi += (u + v) / (2.0 * p.cfg.rho);
        }
    }
    Ok(out)
}

/// `λ_(l,k) + ρ(θ_l - γ_{kl})` with `γ` from [`joint_gamma_step`], in the
/// simplified form `ρ/2 (θ_l - θ_k) + (λ_(l,k) - λ_(k,l))/2`. The two
/// directions are computed from the same difference, so the result is
/// antisymmetric bit for bit.
pub fn edge_dual_step(p: &JointStepProblem, new_thetas: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    check_dim(p.graph.num_nodes(), new_thetas.len())?;
    let mut out = p.duals.clone();
    for (e, &(a, b)) in p.graph.edges().iter().enumerate() {
        let fwd: Vec<f64> = (0..p.dim())
            .map(|i| {
                p.cfg.rho / 2.0 * (new_thetas[a][i] - new_thetas[b][i])
                    + (p.duals[2 * e][i] - p.duals[2 * e + 1][i]) / 2.0
            })
            .collect();
        out[2 * e + 1] = fwd.iter().map(|v| -v).collect();
        out[2 * e] = fwd;
    }
    Ok(out)
}

/// `λ_(l,k) + ρ(θ_l - γ_{kl})` evaluated literally for given auxiliaries.
pub fn edge_dual_step_literal(
    p: &JointStepProblem,
    new_thetas: &[Vec<f64>],
    new_gammas: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    check_dim(p.graph.num_edges(), new_gammas.len())?;
    let mut out = p.duals.clone();
    for (e, &(a, b)) in p.graph.edges().iter().enumerate() {
        for (slot, node) in [(2 * e, a), (2 * e + 1, b)] {
            for i in 0..p.dim() {
                out[slot][i] += p.cfg.rho * (new_thetas[node][i] - new_gammas[e][i]);
            }
        }
    }
    Ok(out)
}

/// Best fixed parameter on pooled data and its cumulative quadratic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightFit {
    pub theta: Vec<f64>,
    pub cumulative_loss: f64,
}

impl HindsightFit {
    pub fn loss_at(&self, z: &[f64], y: f64) -> f64 {
        let e = dot(&self.theta, z) - y;
        e * e
    }
}

/// Least squares over pooled `(z, y)` pairs with ridge [`HINDSIGHT_RIDGE`].
pub fn hindsight_best(features: &[Vec<f64>], labels: &[f64]) -> Result<HindsightFit> {
    check_dim(features.len(), labels.len())?;
    let Some(first) = features.first() else {
        return Err(Error::Parameter("hindsight fit needs at least one sample".into()));
    };
    let d = first.len();
    let mut a = SquareMatrix::zeros(d);
    let mut b = vec![0.0; d];
    for (z, y) in features.iter().zip(labels) {
        check_dim(d, z.len())?;
        a.add_outer(1.0, z, z);
        axpy(*y, z, &mut b);
    }
    a.add_diagonal(HINDSIGHT_RIDGE);
    let theta = a.solve(&b)?;
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hindsight fit"));
    }
    let mut fit = HindsightFit { theta, cumulative_loss: 0.0 };
    fit.cumulative_loss = features.iter().zip(labels).map(|(z, y)| fit.loss_at(z, *y)).sum();
    Ok(fit)
}

/// Minimizes the γ-part of the Lagrangian for one edge numerically, as a
/// check on [`joint_gamma_step`].
pub fn numeric_gamma_argmin(
    theta_a: &[f64],
    theta_b: &[f64],
    lambda_ab: &[f64],
    lambda_ba: &[f64],
    rho: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    check_dim(theta_a.len(), theta_b.len())?;
    let mut g = vec![0.0; theta_a.len()];
    // Gradient of -λ_abᵀγ - λ_baᵀγ + ρ/2‖θ_a-γ‖² + ρ/2‖θ_b-γ‖²; step 1/(4ρ)
    // leaves room below the 1/(2ρ) stability bound.
    for _ in 0..100_000 {
        let grad: Vec<f64> = (0..g.len())
            .map(|i| -lambda_ab[i] - lambda_ba[i] + rho * (2.0 * g[i] - theta_a[i] - theta_b[i]))
            .collect();
        if norm(&grad) <= tol {
            return Ok(g);
        }
        axpy(-1.0 / (4.0 * rho), &grad, &mut g);
    }
    Err(Error::Parameter(format!("gamma argmin did not reach tolerance {tol}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dokl::{gamma_hat, lambda_update, theta_update_quadratic, KernelLearnerState, LogCosh, Quadratic};
    use crate::features::{FeatureMap, KernelSpec};
    use crate::seeded_rng;
    use rand::Rng as _;

    fn rv(rng: &mut crate::Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn triangle() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    #[test]
    fn single_node_matches_closed_form() {
        let mut rng = seeded_rng(1);
        let cfg = AdmmConfig::new(3.0, 2.0).unwrap();
        let z = rv(&mut rng, 4);
        let th = rv(&mut rng, 4);
        let p = JointStepProblem::from_thetas(Graph::empty(1).unwrap(), vec![z.clone()], vec![0.4], vec![th.clone()], cfg).unwrap();
        let joint = joint_theta_step(&p).unwrap();
        let st = KernelLearnerState { theta: th, lambda: vec![0.0; 4] };
        let local = theta_update_quadratic(&st, &z, 0.4, &[0.0; 4], 0, &cfg).unwrap();
        for (a, b) in joint[0].iter().zip(&local) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_problem_gives_zero() {
        let p = JointStepProblem::from_thetas(
            Graph::path(3).unwrap(),
            vec![vec![0.0; 2]; 3],
            vec![0.0; 3],
            vec![vec![0.0; 2]; 3],
            AdmmConfig::default(),
        )
        .unwrap();
        assert!(joint_theta_step(&p).unwrap().iter().flatten().all(|v| *v == 0.0));
    }

    /// Runs the distributed learners and the edge-wise joint representation
    /// in lockstep, checking θ, aggregated duals and antisymmetry each round.
    fn lockstep(graph: Graph, m: usize, rounds: usize, seed: u64) {
        let mut rng = seeded_rng(seed);
        let k = graph.num_nodes();
        let cfg = AdmmConfig::new(rng.random_range(0.5..50.0), rng.random_range(0.5..20.0)).unwrap();
        let map = FeatureMap::build(KernelSpec::new(0.7).unwrap(), 2, m, seed).unwrap();
        let dim = 2 * m;
        let mut states = vec![KernelLearnerState::zeros(dim); k];
        let mut duals = vec![vec![0.0; dim]; 2 * graph.num_edges()];
        for _ in 0..rounds {
            let xs: Vec<Vec<f64>> = (0..k).map(|_| rv(&mut rng, 2)).collect();
            let zs: Vec<Vec<f64>> = xs.iter().map(|x| map.map(x).unwrap()).collect();
            let ys: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let prev: Vec<Vec<f64>> = states.iter().map(|s| s.theta.clone()).collect();
            let mut p = JointStepProblem::from_thetas(graph.clone(), zs.clone(), ys.clone(), prev.clone(), cfg).unwrap();
            p.duals = duals.clone();
            let joint = joint_theta_step(&p).unwrap();
            let local: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    let nb = graph.neighbors(i);
                    let g = gamma_hat(&prev[i], nb.iter().map(|&l| prev[l].as_slice())).unwrap();
                    theta_update_quadratic(&states[i], &zs[i], ys[i], &g, nb.len(), &cfg).unwrap()
                })
                .collect();
            for (a, b) in joint.iter().flatten().zip(local.iter().flatten()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
            let gammas = joint_gamma_step(&p, &local).unwrap();
            let literal = edge_dual_step_literal(&p, &local, &gammas).unwrap();
            duals = edge_dual_step(&p, &local).unwrap();
            for (u, v) in literal.iter().flatten().zip(duals.iter().flatten()) {
                assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
            for e in 0..graph.num_edges() {
                for (u, v) in duals[2 * e].iter().zip(&duals[2 * e + 1]) {
                    assert_eq!(*u, -*v);
                }
            }
            for i in 0..k {
                let nb = graph.neighbors(i);
                states[i].lambda = lambda_update(&states[i], &local[i], nb.iter().map(|&l| local[l].as_slice()), &cfg).unwrap();
            }
            for (s, th) in states.iter_mut().zip(&local) {
                s.theta = th.clone();
            }
            let mut q = p.clone();
            q.duals = duals.clone();
            for i in 0..k {
                for (a, b) in q.aggregated_dual(i).iter().zip(&states[i].lambda) {
                    assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn decomposition_small_graphs() {
        for (i, g) in [Graph::path(3).unwrap(), Graph::star(4).unwrap(), triangle()].into_iter().enumerate() {
            for m in [1, 2] {
                lockstep(g.clone(), m, 40, 100 + 10 * i as u64 + m as u64);
            }
        }
    }

    #[test]
    fn general_solver_matches_dense() {
        let mut rng = seeded_rng(5);
        let g = triangle();
        let cfg = AdmmConfig::new(4.0, 1.5).unwrap();
        let mut p = JointStepProblem::from_thetas(
            g,
            (0..3).map(|_| rv(&mut rng, 4)).collect(),
            vec![0.3, -0.2, 1.0],
            (0..3).map(|_| rv(&mut rng, 4)).collect(),
            cfg,
        )
        .unwrap();
        p.duals = (0..6).map(|_| rv(&mut rng, 4)).collect();
        let dense = joint_theta_step(&p).unwrap();
        let gd = joint_theta_step_general(&p, &Quadratic, 1e-10, 100_000).unwrap();
        for (a, b) in dense.iter().flatten().zip(gd.iter().flatten()) {
            assert!((a - b).abs() < 1e-8);
        }
        let lc = joint_theta_step_general(&p, &LogCosh, 1e-10, 100_000).unwrap();
        assert!(p.objective(&LogCosh, &lc) <= p.objective(&LogCosh, &dense) + 1e-12);
    }

    #[test]
    fn gamma_examples() {
        let p = JointStepProblem::from_thetas(
            Graph::path(2).unwrap(),
            vec![vec![0.0; 2]; 2],
            vec![0.0; 2],
            vec![vec![0.0; 2]; 2],
            AdmmConfig::default(),
        )
        .unwrap();
        let g = joint_gamma_step(&p, &[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(g[0], vec![1.0, 1.0]);
        let g = joint_gamma_step(&p, &[vec![0.3, -1.0], vec![0.3, -1.0]]).unwrap();
        assert_eq!(g[0], vec![0.3, -1.0]);
        let d = edge_dual_step(&p, &[vec![0.3, -1.0], vec![0.3, -1.0]]).unwrap();
        assert!(d.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn gamma_numeric_argmin() {
        let mut rng = seeded_rng(8);
        for _ in 0..20 {
            let a = rv(&mut rng, 3);
            let b = rv(&mut rng, 3);
            let lam = rv(&mut rng, 3);
            let neg: Vec<f64> = lam.iter().map(|v| -v).collect();
            let num = numeric_gamma_argmin(&a, &b, &lam, &neg, 7.0, 1e-12).unwrap();
            for i in 0..3 {
                assert!((num[i] - (a[i] + b[i]) / 2.0).abs() < 1e-10);
            }
            // without antisymmetry the dual term shows up
            let other = rv(&mut rng, 3);
            let mut p = JointStepProblem::from_thetas(
                Graph::path(2).unwrap(),
                vec![vec![0.0; 3]; 2],
                vec![0.0; 2],
                vec![vec![0.0; 3]; 2],
                AdmmConfig::new(7.0, 1.0).unwrap(),
            )
            .unwrap();
            p.duals = vec![lam.clone(), other.clone()];
            let closed = joint_gamma_step(&p, &[a.clone(), b.clone()]).unwrap();
            let num = numeric_gamma_argmin(&a, &b, &lam, &other, 7.0, 1e-12).unwrap();
            for i in 0..3 {
                assert!((num[i] - closed[0][i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hindsight_recovers_generator() {
        let map = FeatureMap::build(KernelSpec::new(0.5).unwrap(), 2, 3, 21).unwrap();
        let mut rng = seeded_rng(3);
        let theta: Vec<f64> = rv(&mut rng, 6);
        let zs: Vec<Vec<f64>> = (0..400).map(|_| map.map(&rv(&mut rng, 2)).unwrap()).collect();
        let ys: Vec<f64> = zs.iter().map(|z| dot(&theta, z)).collect();
        let fit = hindsight_best(&zs, &ys).unwrap();
        for (a, b) in fit.theta.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(fit.cumulative_loss < 1e-10);

        let mut dup_z = zs.clone();
        dup_z.push(zs[0].clone());
        let mut dup_y = ys.clone();
        dup_y.push(ys[0]);
        let dup = hindsight_best(&dup_z, &dup_y).unwrap();
        for (a, b) in dup.theta.iter().zip(&fit.theta) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn hindsight_single_sample() {
        let z = vec![0.6, 0.8, 0.0];
        let fit = hindsight_best(&[z.clone()], &[2.0]).unwrap();
        assert!(fit.cumulative_loss < 1e-12);
        // minimum-norm interpolant is parallel to z
        for (a, b) in fit.theta.iter().zip(&z) {
            assert!((a - 2.0 * b).abs() < 1e-6);
        }
        assert!(hindsight_best(&[], &[]).is_err());
    }
}
