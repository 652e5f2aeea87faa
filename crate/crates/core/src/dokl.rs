//! Single-kernel online consensus ADMM.
//!
//! Each learner keeps a parameter `θ` and an aggregated dual `λ` per
//! kernel. A step minimizes
//!
//! ```text
//! L(θᵀz, y) + λᵀθ + ρ/2 Σ_{l∈N_k} ‖θ - (θ_k + θ_l)/2‖² + η_l/2 ‖θ - θ_k‖²
//! ```
//!
//! using the neighbors' previous-round parameters, then after the exchange
//! of the new parameters moves `λ += ρ/2 Σ_l (θ_k' - θ_l')`.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{NetworkAlgorithm, SampleRef};
use crate::error::check_dim;
use crate::features::FeatureMap;
use crate::graph::Graph;
use crate::linalg::{axpy, dot, norm};
use crate::metrics::RoundRecord;
use crate::{Error, Result};

pub const DEFAULT_RHO: f64 = 100.0;
pub const DEFAULT_ETA_LOCAL: f64 = 10.0;

/// Consensus penalty `ρ` and proximal coefficient `η_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    pub eta_local: f64,
}

impl AdmmConfig {
    pub fn new(rho: f64, eta_local: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        if !(eta_local > 0.0 && eta_local.is_finite()) {
            return Err(Error::Parameter(format!(
                "eta_local must be positive, got {eta_local}"
            )));
        }
        Ok(Self { rho, eta_local })
    }
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            eta_local: DEFAULT_ETA_LOCAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelLearnerState {
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl KernelLearnerState {
    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: vec![0.0; dim],
            lambda: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// A convex loss of the scalar prediction.
pub trait LossModel {
    fn evaluate(&self, prediction: f64, label: f64) -> f64;
    /// Derivative with respect to `prediction`.
    fn gradient(&self, prediction: f64, label: f64) -> f64;
    /// Upper bound on the second derivative, if one is known.
    fn curvature_bound(&self) -> Option<f64> {
        None
    }
}

/// `(y - ŷ)²`
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quadratic;

impl LossModel for Quadratic {
    fn evaluate(&self, prediction: f64, label: f64) -> f64 {
        let r = prediction - label;
        r * r
    }

    fn gradient(&self, prediction: f64, label: f64) -> f64 {
        2.0 * (prediction - label)
    }

    fn curvature_bound(&self) -> Option<f64> {
        Some(2.0)
    }
}

/// `log cosh(ŷ - y)`, a smooth robust loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogCosh;

impl LossModel for LogCosh {
    fn evaluate(&self, prediction: f64, label: f64) -> f64 {
        let r = (prediction - label).abs();
        // log cosh r = r + log(1 + e^{-2r}) - log 2, stable for large r
        r + libm::log1p(libm::exp(-2.0 * r)) - core::f64::consts::LN_2
    }

    fn gradient(&self, prediction: f64, label: f64) -> f64 {
        libm::tanh(prediction - label)
    }

    fn curvature_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// `Σ_{l∈N_k} (θ_k + θ_l) / 2`: a sum of midpoints, not an average.
pub fn gamma_hat<'a, I>(own_theta: &[f64], neighbor_thetas: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut g = vec![0.0; own_theta.len()];
    for nb in neighbor_thetas {
        check_dim(own_theta.len(), nb.len())?;
        for ((gi, a), b) in g.iter_mut().zip(own_theta).zip(nb) {
            *gi += (a + b) / 2.0;
        }
    }
    Ok(g)
}

fn check_step_inputs(state: &KernelLearnerState, z: &[f64], gamma: &[f64]) -> Result<()> {
    check_dim(state.dim(), state.lambda.len())?;
    check_dim(state.dim(), z.len())?;
    check_dim(state.dim(), gamma.len())?;
    Ok(())
}

/// Right-hand side `2yz + η_l θ + ργ - λ` of the quadratic-loss normal equations.
pub(crate) fn quadratic_rhs(
    state: &KernelLearnerState,
    z: &[f64],
    label: f64,
    gamma: &[f64],
    cfg: &AdmmConfig,
) -> Vec<f64> {
    state
        .theta
        .iter()
        .zip(&state.lambda)
        .zip(z.iter().zip(gamma))
        .map(|((th, la), (zi, gi))| 2.0 * label * zi + cfg.eta_local * th + cfg.rho * gi - la)
        .collect()
}

/// Closed-form step for the quadratic loss: solves
/// `(2zzᵀ + αI) θ = b` with `α = η_l + ρ·degree` by the Sherman–Morrison
/// identity, `θ = b/α - 2(zᵀb) / (α(α + 2zᵀz)) · z`.
pub fn theta_update_quadratic(
    state: &KernelLearnerState,
    z: &[f64],
    label: f64,
    gamma: &[f64],
    degree: usize,
    cfg: &AdmmConfig,
) -> Result<Vec<f64>> {
    check_step_inputs(state, z, gamma)?;
    if !label.is_finite() || z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("theta update input"));
    }
    let alpha = cfg.eta_local + cfg.rho * degree as f64;
    let b = quadratic_rhs(state, z, label, gamma, cfg);
    let zb = dot(z, &b);
    let zz = dot(z, z);
    let c = 2.0 * zb / (alpha * (alpha + 2.0 * zz));
    let out: Vec<f64> = b.iter().zip(z).map(|(bi, zi)| bi / alpha - c * zi).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("theta update"));
    }
    Ok(out)
}

/// The per-learner step objective at `theta`, up to an additive constant
/// that does not depend on `theta`.
#[allow(clippy::too_many_arguments)]
pub fn local_objective<L: LossModel + ?Sized>(
    state: &KernelLearnerState,
    loss: &L,
    z: &[f64],
    label: f64,
    gamma: &[f64],
    degree: usize,
    cfg: &AdmmConfig,
    theta: &[f64],
) -> f64 {
    let deg = degree as f64;
    let prox: f64 = theta
        .iter()
        .zip(&state.theta)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    loss.evaluate(dot(theta, z), label)
        + dot(&state.lambda, theta)
        + cfg.rho / 2.0 * (deg * dot(theta, theta) - 2.0 * dot(theta, gamma))
        + cfg.eta_local / 2.0 * prox
}

#[allow(clippy::too_many_arguments)]
fn local_gradient<L: LossModel + ?Sized>(
    state: &KernelLearnerState,
    loss: &L,
    z: &[f64],
    label: f64,
    gamma: &[f64],
    degree: usize,
    cfg: &AdmmConfig,
    theta: &[f64],
) -> Vec<f64> {
    let g = loss.gradient(dot(theta, z), label);
    let deg = degree as f64;
    (0..theta.len())
        .map(|i| {
            g * z[i]
                + state.lambda[i]
                + cfg.rho * (deg * theta[i] - gamma[i])
                + cfg.eta_local * (theta[i] - state.theta[i])
        })
        .collect()
}

const ARMIJO: f64 = 1e-4;
const SHRINK: f64 = 0.5;

/// Step for an arbitrary convex loss: gradient descent with Armijo
/// backtracking from `θ_t` until the gradient norm drops to `tol`.
#[allow(clippy::too_many_arguments)]
pub fn theta_update_general<L: LossModel + ?Sized>(
    state: &KernelLearnerState,
    loss: &L,
    z: &[f64],
    label: f64,
    gamma: &[f64],
    degree: usize,
    cfg: &AdmmConfig,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    check_step_inputs(state, z, gamma)?;
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut theta = state.theta.clone();
    let mut f = local_objective(state, loss, z, label, gamma, degree, cfg, &theta);
    // 1/λ_max of the Hessian when the loss curvature is bounded, else 1/α
    // and let the line search shrink it.
    let alpha = cfg.eta_local + cfg.rho * degree as f64;
    let base_step = 1.0 / (alpha + loss.curvature_bound().unwrap_or(0.0) * dot(z, z));
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iters {
        let grad = local_gradient(state, loss, z, label, gamma, degree, cfg, &theta);
        grad_norm = norm(&grad);
        if !grad_norm.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        if grad_norm <= tol {
            return Ok(theta);
        }
        let g2 = grad_norm * grad_norm;
        let mut step = base_step;
        loop {
            let mut cand = theta.clone();
            axpy(-step, &grad, &mut cand);
            let fc = local_objective(state, loss, z, label, gamma, degree, cfg, &cand);
            // Near the optimum the decrease drops below the rounding of f;
            // then a smaller gradient is accepted as progress.
            let flat = fc <= f + 8.0 * f64::EPSILON * (f.abs() + 1.0)
                && norm(&local_gradient(state, loss, z, label, gamma, degree, cfg, &cand)) < grad_norm;
            if fc <= f - ARMIJO * step * g2 || flat {
                theta = cand;
                f = fc;
                break;
            }
            step *= SHRINK;
            if step < 1e-30 {
                // No representable decrease left; the gradient test decides.
                return if grad_norm <= tol {
                    Ok(theta)
                } else {
                    Err(Error::Convergence {
                        iterations: max_iters,
                        grad_norm,
                    })
                };
            }
        }
    }
    let grad = local_gradient(state, loss, z, label, gamma, degree, cfg, &theta);
    let final_norm = norm(&grad);
    if final_norm <= tol {
        Ok(theta)
    } else {
        Err(Error::Convergence {
            iterations: max_iters,
            grad_norm: final_norm.min(grad_norm),
        })
    }
}

/// `λ + ρ/2 Σ_l (θ_k' - θ_l')` with the freshly exchanged parameters.
pub fn lambda_update<'a, I>(
    state: &KernelLearnerState,
    own_theta_new: &[f64],
    neighbor_thetas_new: I,
    cfg: &AdmmConfig,
) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    check_dim(state.lambda.len(), own_theta_new.len())?;
    let mut diff = vec![0.0; own_theta_new.len()];
    for nb in neighbor_thetas_new {
        check_dim(own_theta_new.len(), nb.len())?;
        for ((d, a), b) in diff.iter_mut().zip(own_theta_new).zip(nb) {
            *d += a - b;
        }
    }
    let half_rho = cfg.rho / 2.0;
    Ok(state
        .lambda
        .iter()
        .zip(&diff)
        .map(|(l, d)| l + half_rho * d)
        .collect())
}

/// `θᵀz`
pub fn predict(theta: &[f64], z: &[f64]) -> Result<f64> {
    check_dim(theta.len(), z.len())?;
    Ok(dot(theta, z))
}

/// All learners of a single-kernel network, stepped in lockstep.
#[derive(Debug, Clone)]
pub struct DoklNetwork {
    graph: Graph,
    map: Arc<FeatureMap>,
    cfg: AdmmConfig,
    states: Vec<KernelLearnerState>,
}

impl DoklNetwork {
    pub fn new(graph: Graph, map: Arc<FeatureMap>, cfg: AdmmConfig) -> Self {
        let states = (0..graph.num_nodes())
            .map(|_| KernelLearnerState::zeros(map.output_dim()))
            .collect();
        Self {
            graph,
            map,
            cfg,
            states,
        }
    }

    pub fn states(&self) -> &[KernelLearnerState] {
        &self.states
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// One synchronous round where the local θ steps run in `order`.
    /// Every step reads only round-start parameters, so the order cannot
    /// change the result.
    pub fn round_with_order(
        &mut self,
        samples: &[SampleRef<'_>],
        order: &[usize],
    ) -> Result<RoundRecord> {
        let k = self.graph.num_nodes();
        check_dim(k, samples.len())?;
        let zs = samples
            .iter()
            .map(|s| self.map.map(s.x))
            .collect::<Result<Vec<_>>>()?;
        let mut cross = vec![0.0; k * k];
        for (i, z) in zs.iter().enumerate() {
            for (l, st) in self.states.iter().enumerate() {
                cross[i * k + l] = predict(&st.theta, z)?;
            }
        }
        let mut new_thetas: Vec<Vec<f64>> = vec![Vec::new(); k];
        for &i in order {
            let st = &self.states[i];
            let nbrs = self.graph.neighbors(i);
            let gamma = gamma_hat(&st.theta, nbrs.iter().map(|&l| self.states[l].theta.as_slice()))?;
            new_thetas[i] =
                theta_update_quadratic(st, &zs[i], samples[i].y, &gamma, nbrs.len(), &self.cfg)?;
        }
        if new_thetas.iter().any(|t| t.is_empty()) {
            return Err(Error::Parameter("round order must visit every learner".into()));
        }
        for i in 0..k {
            let nbrs = self.graph.neighbors(i);
            let lambda = lambda_update(
                &self.states[i],
                &new_thetas[i],
                nbrs.iter().map(|&l| new_thetas[l].as_slice()),
                &self.cfg,
            )?;
            self.states[i].lambda = lambda;
        }
        for (st, th) in self.states.iter_mut().zip(new_thetas) {
            st.theta = th;
        }
        let kernel_losses = (0..k)
            .map(|i| vec![Quadratic.evaluate(cross[i * k + i], samples[i].y)])
            .collect();
        Ok(RoundRecord {
            labels: samples.iter().map(|s| s.y).collect(),
            cross,
            kernel_losses,
            weights: vec![vec![1.0]; k],
        })
    }
}

impl NetworkAlgorithm for DoklNetwork {
    fn num_learners(&self) -> usize {
        self.graph.num_nodes()
    }

    fn round(&mut self, samples: &[SampleRef<'_>]) -> Result<RoundRecord> {
        let order: Vec<usize> = (0..self.graph.num_nodes()).collect();
        self.round_with_order(samples, &order)
    }
}
