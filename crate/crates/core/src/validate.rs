//! Fast invariant suite, with a hook to break the dual update on purpose.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dokl::{gamma_hat, theta_update_quadratic, AdmmConfig, DoklNetwork, KernelLearnerState};
use crate::domkl::{DomklNetwork, HedgeVariant};
use crate::engine::{NetworkAlgorithm, SampleRef};
use crate::features::{default_dictionary, FeatureMap, KernelSpec};
use crate::graph::{sample_connected_er, Graph};
use crate::linalg::norm_sq;
use crate::oracle::{edge_dual_step, joint_theta_step, JointStepProblem};
use crate::{seeded_rng, Result};

/// Deliberate defects for checking that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Adds the neighbor parameters in the dual update instead of subtracting them.
    DualSignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> CheckResult {
    match outcome {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_x(rng: &mut crate::Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

fn feature_norm(samples: usize) -> Result<(bool, String)> {
    let map = FeatureMap::build(KernelSpec::new(1.0)?, 5, 50, 1)?;
    let mut rng = seeded_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        worst = worst.max((norm_sq(&map.map(&x)?) - 1.0).abs());
    }
    Ok((worst <= 1e-12, format!("max |‖z‖²-1| = {worst:.3e}")))
}

struct Instance {
    graph: Graph,
    maps: Arc<[FeatureMap]>,
    xs: Vec<Vec<Vec<f64>>>,
    ys: Vec<Vec<f64>>,
}

fn instance(k: usize, p: usize, rounds: usize, seed: u64) -> Result<Instance> {
    let graph = sample_connected_er(k, 0.5, seed, 1000)?.graph;
    let dict = default_dictionary().with_seed(seed);
    let maps: Vec<FeatureMap> = dict.feature_maps(3, 10)?.into_iter().take(p).collect();
    let mut rng = seeded_rng(seed ^ 0xda7a);
    let xs: Vec<Vec<Vec<f64>>> = (0..rounds).map(|_| (0..k).map(|_| random_x(&mut rng, 3)).collect()).collect();
    let ys = xs
        .iter()
        .map(|r| r.iter().map(|x| libm::sin(3.0 * x[0]) + x[1] * x[2]).collect())
        .collect();
    Ok(Instance {
        graph,
        maps: maps.into(),
        xs,
        ys,
    })
}

fn drive<A: NetworkAlgorithm>(alg: &mut A, inst: &Instance) -> Result<Vec<crate::metrics::RoundRecord>> {
    inst.xs
        .iter()
        .zip(&inst.ys)
        .map(|(xr, yr)| {
            let s: Vec<SampleRef<'_>> = xr.iter().zip(yr).map(|(x, y)| SampleRef { x, y: *y }).collect();
            alg.round(&s)
        })
        .collect()
}

fn simplex() -> Result<(bool, String)> {
    let inst = instance(6, 17, 60, 3)?;
    let mut worst: f64 = 0.0;
    let mut negative = false;
    for variant in [HedgeVariant::Product, HedgeVariant::MessagePassing { allow_cyclic: true }] {
        let mut net = DomklNetwork::new(inst.graph.clone(), inst.maps.clone(), AdmmConfig::default(), 10.0, variant)?;
        for r in drive(&mut net, &inst)? {
            for w in &r.weights {
                worst = worst.max((w.iter().sum::<f64>() - 1.0).abs());
                negative |= w.iter().any(|v| *v < 0.0);
            }
        }
    }
    Ok((worst <= 1e-12 && !negative, format!("max |Σq-1| = {worst:.3e}")))
}

/// Σ_k λ_k over `rounds` single-kernel rounds, with an optional defect.
fn dual_sum(rounds: usize, fault: Fault) -> Result<(bool, String)> {
    let k = 6;
    let inst = instance(k, 1, rounds, 4)?;
    let cfg = AdmmConfig::default();
    let map = &inst.maps[0];
    let mut states = vec![KernelLearnerState::zeros(map.output_dim()); k];
    let sign = match fault {
        Fault::None => 1.0,
        Fault::DualSignFlip => -1.0,
    };
    let mut worst_ratio: f64 = 0.0;
    for (t, (xr, yr)) in inst.xs.iter().zip(&inst.ys).enumerate() {
        let prev: Vec<Vec<f64>> = states.iter().map(|s| s.theta.clone()).collect();
        let mut next = Vec::with_capacity(k);
        for i in 0..k {
            let nb = inst.graph.neighbors(i);
            let g = gamma_hat(&prev[i], nb.iter().map(|&l| prev[l].as_slice()))?;
            next.push(theta_update_quadratic(&states[i], &map.map(&xr[i])?, yr[i], &g, nb.len(), &cfg)?);
        }
        for i in 0..k {
            for &l in inst.graph.neighbors(i) {
                for j in 0..next[i].len() {
                    states[i].lambda[j] += cfg.rho / 2.0 * (next[i][j] - sign * next[l][j]);
                }
            }
        }
        for (s, th) in states.iter_mut().zip(next) {
            s.theta = th;
        }
        let total = (0..map.output_dim())
            .map(|j| states.iter().map(|s| s.lambda[j]).sum::<f64>().abs())
            .fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(total / (t + 1) as f64);
    }
    Ok((worst_ratio <= 1e-9, format!("max ‖Σλ‖∞ / t = {worst_ratio:.3e}")))
}

fn antisymmetry_and_decomposition() -> Result<(bool, String)> {
    let graph = Graph::path(3)?;
    let map = FeatureMap::build(KernelSpec::new(0.5)?, 2, 2, 5)?;
    let cfg = AdmmConfig::default();
    let mut rng = seeded_rng(6);
    let mut thetas = vec![vec![0.0; 4]; 3];
    let mut duals = vec![vec![0.0; 4]; 4];
    let mut states = vec![KernelLearnerState::zeros(4); 3];
    let mut worst: f64 = 0.0;
    let mut antisym = true;
    for _ in 0..30 {
        let zs: Vec<Vec<f64>> = (0..3).map(|_| map.map(&random_x(&mut rng, 2))).collect::<Result<_>>()?;
        let ys: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut p = JointStepProblem::from_thetas(graph.clone(), zs.clone(), ys.clone(), thetas.clone(), cfg)?;
        p.duals = duals.clone();
        let joint = joint_theta_step(&p)?;
        for i in 0..3 {
            let nb = graph.neighbors(i);
            let g = gamma_hat(&thetas[i], nb.iter().map(|&l| thetas[l].as_slice()))?;
            let local = theta_update_quadratic(&states[i], &zs[i], ys[i], &g, nb.len(), &cfg)?;
            for (a, b) in local.iter().zip(&joint[i]) {
                worst = worst.max((a - b).abs());
            }
        }
        duals = edge_dual_step(&p, &joint)?;
        for e in 0..graph.num_edges() {
            antisym &= duals[2 * e].iter().zip(&duals[2 * e + 1]).all(|(u, v)| *u == -*v);
        }
        p.duals = duals.clone();
        for (i, st) in states.iter_mut().enumerate() {
            st.lambda = p.aggregated_dual(i);
            st.theta = joint[i].clone();
        }
        thetas = joint;
    }
    Ok((
        antisym && worst <= 1e-6,
        format!("antisymmetric: {antisym}, max |θ_local - θ_joint| = {worst:.3e}"),
    ))
}

fn single_kernel_equivalence() -> Result<(bool, String)> {
    let inst = instance(5, 1, 40, 7)?;
    let cfg = AdmmConfig::default();
    let mut a = DomklNetwork::new(inst.graph.clone(), inst.maps.clone(), cfg, 10.0, HedgeVariant::Product)?;
    let mut b = DoklNetwork::new(inst.graph.clone(), Arc::new(inst.maps[0].clone()), cfg);
    let ra = drive(&mut a, &inst)?;
    let rb = drive(&mut b, &inst)?;
    let same = ra.iter().zip(&rb).all(|(x, y)| {
        x.cross.iter().zip(&y.cross).all(|(u, v)| u.to_bits() == v.to_bits())
    });
    Ok((same, format!("{} rounds compared bitwise", ra.len())))
}

fn determinism() -> Result<(bool, String)> {
    let run = || -> Result<Vec<crate::metrics::RoundRecord>> {
        let inst = instance(5, 17, 30, 8)?;
        let mut net = DomklNetwork::new(inst.graph.clone(), inst.maps.clone(), AdmmConfig::default(), 10.0, HedgeVariant::Product)?;
        drive(&mut net, &inst)
    };
    let a = run()?;
    let b = run()?;
    let same = a.iter().zip(&b).all(|(x, y)| {
        x.cross.iter().zip(&y.cross).all(|(u, v)| u.to_bits() == v.to_bits())
            && x.weights.iter().flatten().zip(y.weights.iter().flatten()).all(|(u, v)| u.to_bits() == v.to_bits())
    });
    Ok((same && a.len() == b.len(), String::from("two identical runs compared bitwise")))
}

/// Every check with default sizes.
pub fn run_invariant_suite(fault: Fault) -> Vec<CheckResult> {
    vec![
        check("feature_norm", feature_norm(10_000)),
        check("hedge_simplex", simplex()),
        check("dual_sum", dual_sum(200, fault)),
        check("edge_duals", antisymmetry_and_decomposition()),
        check("single_kernel", single_kernel_equivalence()),
        check("determinism", determinism()),
    ]
}
