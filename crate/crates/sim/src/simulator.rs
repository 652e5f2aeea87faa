//! Multi-trial experiment runner.

use std::sync::Arc;

use rayon::prelude::*;

use domkl_core::baselines::{BatchLoss, ComklNetwork, DiffusionNetwork};
use domkl_core::data::{partition_regression, partition_timeseries_interleaved, synth_streams, Dataset, Streams, SyntheticRegressionSpec};
use domkl_core::dokl::{AdmmConfig, DoklNetwork};
use domkl_core::domkl::{DomklNetwork, HedgeVariant};
use domkl_core::engine::{run_streams, NetworkAlgorithm};
use domkl_core::features::{FeatureMap, KernelDictionary, KernelSpec};
use domkl_core::graph::{sample_connected_er, Graph};
use domkl_core::metrics::{cv_curve, mse_curve, regret_accuracy, regret_discrepancy, RunTrace};
use domkl_core::oracle::hindsight_best;
use domkl_core::seeded_rng;

use crate::error::{SimError, SimResult};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "DOMKL_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub input_dim: usize,
    pub generating_bandwidth: f64,
    pub generator_features: usize,
    pub noise_std: f64,
    pub rounds: usize,
    /// Draw the target over the trial's own dictionary map with the
    /// generating bandwidth instead of an independent map, so that the
    /// matching kernel can represent it exactly.
    pub share_dictionary_map: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TaskData {
    /// A fresh target and sample set every trial.
    Synthetic(SyntheticTask),
    /// Rows split into contiguous blocks, optionally shuffled per trial first.
    Regression { dataset: Arc<Dataset>, shuffle: bool },
    /// Lag-embedded series split round robin.
    TimeSeries { dataset: Arc<Dataset> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    ErdosRenyi { connection_prob: f64, max_attempts: usize },
    Fixed(Graph),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmSpec {
    Domkl { admm: AdmmConfig, eta_global: f64 },
    Dokl { admm: AdmmConfig, bandwidth: f64 },
    Comkl { step_size: f64, eta_global: f64, batch_loss: BatchLoss },
    RffDokl { step_size: f64, bandwidth: f64 },
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Domkl { .. } => "domkl",
            Self::Dokl { .. } => "dokl",
            Self::Comkl { .. } => "comkl",
            Self::RffDokl { .. } => "rff_dokl",
        }
    }

    pub fn is_decentralized(&self) -> bool {
        !matches!(self, Self::Comkl { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskData,
    pub learners: usize,
    pub topology: Topology,
    pub algorithms: Vec<AlgorithmSpec>,
    pub num_features: usize,
    /// Kernel bandwidths `σ²` of the dictionary.
    pub dictionary: Vec<f64>,
    pub hedge: HedgeVariant,
    pub trials: usize,
    pub master_seed: u64,
    pub compute_regret: bool,
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> SimResult<()> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.learners == 0 {
            return bad("learners must be at least 1".into());
        }
        if self.learners < 2 && self.algorithms.iter().any(AlgorithmSpec::is_decentralized) {
            return bad("decentralized algorithms need at least 2 learners".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        if self.num_features == 0 {
            return bad("num_features must be positive".into());
        }
        if self.dictionary.is_empty() {
            return bad("the kernel dictionary is empty".into());
        }
        if let Topology::Fixed(g) = &self.topology {
            if g.num_nodes() != self.learners {
                return bad(format!("graph has {} nodes but learners = {}", g.num_nodes(), self.learners));
            }
        }
        match &self.task {
            TaskData::Synthetic(s) if s.rounds == 0 || s.input_dim == 0 || s.generator_features == 0 => {
                bad("synthetic tasks need positive rounds, input_dim and generator_features".into())
            }
            TaskData::Regression { dataset, .. } | TaskData::TimeSeries { dataset } if dataset.len() < self.learners => {
                bad(format!("{} samples cannot feed {} learners", dataset.len(), self.learners))
            }
            _ => Ok(()),
        }
    }

    fn input_dim(&self) -> usize {
        match &self.task {
            TaskData::Synthetic(s) => s.input_dim,
            TaskData::Regression { dataset, .. } | TaskData::TimeSeries { dataset } => dataset.input_dim(),
        }
    }
}

/// Per-trial seeds, each a fixed labeled offset from `master ⊕ trial`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub graph: u64,
    pub features: u64,
    pub data: u64,
    pub noise: u64,
}

impl TrialSeeds {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        let base = master_seed ^ trial_index;
        Self {
            graph: base,
            features: base.wrapping_add(1 << 32),
            data: base.wrapping_add(2 << 32),
            noise: base.wrapping_add(3 << 32),
        }
    }
}

/// Everything the algorithms of one trial share.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub seeds: TrialSeeds,
    pub graph: Graph,
    pub graph_attempts: usize,
    pub maps: Arc<[FeatureMap]>,
    pub streams: Streams,
    pub target: Option<SyntheticRegressionSpec>,
}

impl TrialContext {
    /// The dictionary map with bandwidth `bw`, or a map built for it alone.
    pub fn map_for(&self, bw: f64) -> SimResult<FeatureMap> {
        if let Some(m) = self.maps.iter().find(|m| m.spec().bandwidth() == bw) {
            return Ok(m.clone());
        }
        let d = self.maps[0].input_dim();
        let m = self.maps[0].num_features();
        Ok(FeatureMap::build(KernelSpec::new(bw)?, d, m, self.seeds.features.wrapping_add(1_000_003))?)
    }
}

pub fn prepare_trial(cfg: &ExperimentConfig, trial_index: u64) -> SimResult<TrialContext> {
    let seeds = TrialSeeds::new(cfg.master_seed, trial_index);
    let (graph, graph_attempts) = match &cfg.topology {
        Topology::ErdosRenyi { connection_prob, max_attempts } => {
            let s = sample_connected_er(cfg.learners, *connection_prob, seeds.graph, *max_attempts)?;
            (s.graph, s.attempts)
        }
        Topology::Fixed(g) => (g.clone(), 0),
    };
    let dict = KernelDictionary::from_bandwidths(&cfg.dictionary, seeds.features)?;
    let maps: Arc<[FeatureMap]> = dict.feature_maps(cfg.input_dim(), cfg.num_features)?.into();
    let (streams, target) = match &cfg.task {
        TaskData::Synthetic(s) => {
            let mut spec = SyntheticRegressionSpec::random(s.generating_bandwidth, s.input_dim, s.generator_features, s.noise_std, seeds.data)?;
            if s.share_dictionary_map {
                let Some(m) = maps.iter().find(|m| m.spec().bandwidth() == s.generating_bandwidth) else {
                    return Err(SimError::Invalid(format!(
                        "generating bandwidth {} is not in the dictionary",
                        s.generating_bandwidth
                    )));
                };
                let theta = SyntheticRegressionSpec::random(s.generating_bandwidth, s.input_dim, cfg.num_features, s.noise_std, seeds.data)?.true_theta;
                spec = SyntheticRegressionSpec::new(m.clone(), theta, s.noise_std)?;
            }
            (synth_streams(&spec, cfg.learners, s.rounds, seeds.noise)?, Some(spec))
        }
        TaskData::Regression { dataset, shuffle } => {
            let streams = if *shuffle {
                let mut idx: Vec<usize> = (0..dataset.len()).collect();
                rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut seeded_rng(seeds.data));
                let shuffled = Dataset::new(
                    dataset.name.clone(),
                    idx.iter().map(|&i| dataset.features[i].clone()).collect(),
                    idx.iter().map(|&i| dataset.labels[i]).collect(),
                )?;
                partition_regression(&shuffled, cfg.learners)?
            } else {
                partition_regression(dataset, cfg.learners)?
            };
            (streams, None)
        }
        TaskData::TimeSeries { dataset } => (partition_timeseries_interleaved(dataset, cfg.learners)?, None),
    };
    Ok(TrialContext {
        seeds,
        graph,
        graph_attempts,
        maps,
        streams,
        target,
    })
}

pub fn build_algorithm(
    spec: &AlgorithmSpec,
    ctx: &TrialContext,
    hedge: HedgeVariant,
) -> SimResult<Box<dyn NetworkAlgorithm + Send>> {
    Ok(match *spec {
        AlgorithmSpec::Domkl { admm, eta_global } => Box::new(DomklNetwork::new(
            ctx.graph.clone(),
            ctx.maps.clone(),
            admm,
            eta_global,
            hedge,
        )?),
        AlgorithmSpec::Dokl { admm, bandwidth } => {
            Box::new(DoklNetwork::new(ctx.graph.clone(), Arc::new(ctx.map_for(bandwidth)?), admm))
        }
        AlgorithmSpec::Comkl { step_size, eta_global, batch_loss } => Box::new(ComklNetwork::new(
            ctx.graph.num_nodes(),
            ctx.maps.clone(),
            step_size,
            eta_global,
            batch_loss,
        )?),
        AlgorithmSpec::RffDokl { step_size, bandwidth } => Box::new(DiffusionNetwork::new(
            ctx.graph.clone(),
            Arc::new(ctx.map_for(bandwidth)?),
            step_size,
        )?),
    })
}

/// Final regrets averaged over learners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretSummary {
    pub accuracy: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone)]
pub struct AlgorithmTrace {
    pub name: &'static str,
    pub trace: RunTrace,
    pub regret: Option<RegretSummary>,
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub context: TrialContext,
    pub traces: Vec<AlgorithmTrace>,
}

/// Per-round, per-learner loss of the best single dictionary kernel fitted
/// on all samples of the trial. Indexed `[t][k]`.
pub fn hindsight_losses(maps: &[FeatureMap], streams: &Streams) -> SimResult<Vec<Vec<f64>>> {
    let k = streams.num_learners();
    let t = streams.len();
    let ys: Vec<f64> = (0..t).flat_map(|r| (0..k).map(move |i| (r, i))).map(|(r, i)| streams.sample(i, r).y).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for map in maps {
        let zs: Vec<Vec<f64>> = (0..t)
            .flat_map(|r| (0..k).map(move |i| (r, i)))
            .map(|(r, i)| map.map(&streams.sample(i, r).x))
            .collect::<domkl_core::Result<_>>()?;
        let fit = hindsight_best(&zs, &ys)?;
        if best.as_ref().is_none_or(|(l, _)| fit.cumulative_loss < *l) {
            let losses = zs.iter().zip(&ys).map(|(z, y)| fit.loss_at(z, *y)).collect();
            best = Some((fit.cumulative_loss, losses));
        }
    }
    let flat = best.expect("at least one map").1;
    Ok(flat.chunks(k).map(<[f64]>::to_vec).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn run_trial(cfg: &ExperimentConfig, trial_index: u64) -> SimResult<TrialRun> {
    let wrap = |source| SimError::Trial { trial: trial_index, source };
    let ctx = prepare_trial(cfg, trial_index).map_err(|e| match e {
        SimError::Core(c) => wrap(c),
        other => other,
    })?;
    let hindsight = if cfg.compute_regret {
        Some(hindsight_losses(&ctx.maps, &ctx.streams)?)
    } else {
        None
    };
    let mut traces = Vec::with_capacity(cfg.algorithms.len());
    for spec in &cfg.algorithms {
        let mut alg = build_algorithm(spec, &ctx, cfg.hedge)?;
        let trace = run_streams(alg.as_mut(), &ctx.streams).map_err(wrap)?;
        let regret = match &hindsight {
            Some(h) => Some(RegretSummary {
                accuracy: mean(&regret_accuracy(&trace, h).map_err(wrap)?),
                discrepancy: mean(&regret_discrepancy(&trace, &ctx.graph).map_err(wrap)?),
            }),
            None => None,
        };
        traces.push(AlgorithmTrace {
            name: spec.name(),
            trace,
            regret,
        });
    }
    Ok(TrialRun { context: ctx, traces })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub name: String,
    pub mse_mean: Vec<f64>,
    pub mse_std: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_std: Vec<f64>,
    pub regret: Option<RegretSummary>,
}

impl AlgorithmSummary {
    pub fn final_mse(&self) -> f64 {
        self.mse_mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn final_cv(&self) -> f64 {
        self.cv_mean.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub trials: usize,
    pub algorithms: Vec<AlgorithmSummary>,
}

impl AggregateResult {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.name == name)
    }
}

/// Pointwise mean and sample standard deviation (0 for a single curve).
fn mean_std(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = curves.len() as f64;
    let len = curves[0].len();
    let mut m = vec![0.0; len];
    for c in curves {
        for (a, v) in m.iter_mut().zip(c) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    let s = (0..len)
        .map(|t| {
            if curves.len() < 2 {
                return 0.0;
            }
            let ss: f64 = curves.iter().map(|c| (c[t] - m[t]) * (c[t] - m[t])).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    (m, s)
}

/// Curves of one trial: `(mse, cv)` per algorithm.
type TrialCurves = Vec<(Vec<f64>, Vec<f64>, Option<RegretSummary>)>;

fn trial_curves(cfg: &ExperimentConfig, trial: u64) -> SimResult<TrialCurves> {
    let run = run_trial(cfg, trial)?;
    run.traces
        .into_iter()
        .map(|a| {
            let cv = cv_curve(&a.trace).map_err(|source| SimError::Trial { trial, source })?;
            Ok((mse_curve(&a.trace), cv, a.regret))
        })
        .collect()
}

/// Worker threads from [`THREADS_ENV`], if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

fn all_trials(cfg: &ExperimentConfig) -> SimResult<Vec<TrialCurves>> {
    let n = cfg.trials as u64;
    if !cfg.parallel {
        return (0..n).map(|t| trial_curves(cfg, t)).collect();
    }
    let go = || (0..n).into_par_iter().map(|t| trial_curves(cfg, t)).collect();
    match configured_threads() {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| SimError::Invalid(format!("{THREADS_ENV}: {e}")))?
            .install(go),
        None => go(),
    }
}

/// Runs every trial and aggregates in trial-index order, so sequential and
/// parallel execution give identical results.
pub fn run_experiment(cfg: &ExperimentConfig) -> SimResult<AggregateResult> {
    cfg.validate()?;
    let trials = all_trials(cfg)?;
    let algorithms = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let mse: Vec<Vec<f64>> = trials.iter().map(|t| t[a].0.clone()).collect();
            let cv: Vec<Vec<f64>> = trials.iter().map(|t| t[a].1.clone()).collect();
            let (mse_mean, mse_std) = mean_std(&mse);
            let (cv_mean, cv_std) = mean_std(&cv);
            let regrets: Option<Vec<RegretSummary>> = trials.iter().map(|t| t[a].2).collect();
            let regret = regrets.map(|r| RegretSummary {
                accuracy: r.iter().map(|s| s.accuracy).sum::<f64>() / r.len() as f64,
                discrepancy: r.iter().map(|s| s.discrepancy).sum::<f64>() / r.len() as f64,
            });
            AlgorithmSummary {
                name: spec.name().to_owned(),
                mse_mean,
                mse_std,
                cv_mean,
                cv_std,
                regret,
            }
        })
        .collect();
    Ok(AggregateResult {
        trials: cfg.trials,
        algorithms,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub algorithm: String,
    pub eta_g: f64,
    pub rho: f64,
    pub final_mse: f64,
    pub final_cv: f64,
}

/// `cfg` with `ρ` and `η_g` replaced wherever an algorithm uses them.
pub fn with_hyper(cfg: &ExperimentConfig, rho: f64, eta_g: f64) -> SimResult<ExperimentConfig> {
    let mut out = cfg.clone();
    for a in &mut out.algorithms {
        match a {
            AlgorithmSpec::Domkl { admm, eta_global } => {
                *admm = AdmmConfig::new(rho, admm.eta_local)?;
                *eta_global = eta_g;
            }
            AlgorithmSpec::Dokl { admm, .. } => *admm = AdmmConfig::new(rho, admm.eta_local)?,
            AlgorithmSpec::Comkl { eta_global, .. } => *eta_global = eta_g,
            AlgorithmSpec::RffDokl { .. } => {}
        }
    }
    Ok(out)
}

/// Full experiments over the grid, `η_g` in the outer loop and `ρ` inner,
/// each in the order given.
pub fn sweep(cfg: &ExperimentConfig, rhos: &[f64], eta_gs: &[f64]) -> SimResult<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &eta_g in eta_gs {
        for &rho in rhos {
            let res = run_experiment(&with_hyper(cfg, rho, eta_g)?)?;
            rows.extend(res.algorithms.iter().map(|a| SweepRow {
                algorithm: a.name.clone(),
                eta_g,
                rho,
                final_mse: a.final_mse(),
                final_cv: a.final_cv(),
            }));
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestKernel {
    pub index: usize,
    pub bandwidth: f64,
    /// Final MSE of single-kernel DOKL per dictionary entry, averaged over trials.
    pub mean_final_mse: Vec<f64>,
}

/// Runs single-kernel DOKL with every dictionary kernel on identical trials
/// and returns the kernel with the lowest mean final MSE, the first on ties.
pub fn exhaustive_best_kernel(cfg: &ExperimentConfig) -> SimResult<BestKernel> {
    cfg.validate()?;
    let admm = cfg
        .algorithms
        .iter()
        .find_map(|a| match a {
            AlgorithmSpec::Dokl { admm, .. } | AlgorithmSpec::Domkl { admm, .. } => Some(*admm),
            _ => None,
        })
        .unwrap_or_default();
    let per_trial = |t: u64| -> SimResult<Vec<f64>> {
        let ctx = prepare_trial(cfg, t)?;
        ctx.maps
            .iter()
            .map(|m| {
                let mut net = DoklNetwork::new(ctx.graph.clone(), Arc::new(m.clone()), admm);
                let trace = run_streams(&mut net, &ctx.streams).map_err(|source| SimError::Trial { trial: t, source })?;
                Ok(*mse_curve(&trace).last().expect("nonempty trace"))
            })
            .collect()
    };
    let n = cfg.trials as u64;
    let finals: Vec<Vec<f64>> = if cfg.parallel {
        (0..n).into_par_iter().map(per_trial).collect::<SimResult<_>>()?
    } else {
        (0..n).map(per_trial).collect::<SimResult<_>>()?
    };
    let p = cfg.dictionary.len();
    let mean_final_mse: Vec<f64> = (0..p)
        .map(|i| finals.iter().map(|f| f[i]).sum::<f64>() / finals.len() as f64)
        .collect();
    let mut index = 0;
    for (i, v) in mean_final_mse.iter().enumerate() {
        if *v < mean_final_mse[index] {
            index = i;
        }
    }
    Ok(BestKernel {
        index,
        bandwidth: cfg.dictionary[index],
        mean_final_mse,
    })
}
