//! TOML experiment files.
//!
//! ```toml
//! [experiment]
//! task = "synthetic"          # synthetic | regression | timeseries
//! trials = 20
//! seed = 7
//! rounds = 1000               # synthetic only
//! num_features = 50
//! algorithms = ["domkl", "dokl", "comkl", "rff_dokl"]
//! hedge = "product"           # product | message_passing | message_passing_cyclic
//!
//! [network]
//! learners = 20
//! connection_prob = 0.5       # or topology = "path" | "star" | "cycle" | "complete", or edges_file
//!
//! [algorithm.domkl]
//! rho = 100.0
//! eta_local = 10.0
//! eta_global = 10.0
//!
//! [data]
//! input_dim = 5
//! generating_bandwidth = 0.01
//! noise_std = 0.05
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use domkl_core::baselines::{BatchLoss, DEFAULT_OGD_STEP};
use domkl_core::data::{ar_embed, normalize_minmax, synth_ar, ArSpec};
use domkl_core::dokl::{AdmmConfig, DEFAULT_ETA_LOCAL, DEFAULT_RHO};
use domkl_core::domkl::HedgeVariant;
use domkl_core::features::{default_dictionary, DEFAULT_NUM_FEATURES};
use domkl_core::graph::Graph;
use domkl_core::hedge::DEFAULT_ETA_GLOBAL;

use crate::error::{SimError, SimResult};
use crate::io::{load_csv, load_series};
use crate::simulator::{AlgorithmSpec, ExperimentConfig, SyntheticTask, TaskData, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Synthetic,
    Regression,
    Timeseries,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HedgeKind {
    #[default]
    Product,
    MessagePassing,
    MessagePassingCyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Er,
    Complete,
    Path,
    Star,
    Cycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchLossKind {
    #[default]
    Sum,
    Mean,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_features() -> usize {
    DEFAULT_NUM_FEATURES
}

fn default_attempts() -> usize {
    1000
}

fn default_ar_order() -> usize {
    5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawExperiment {
    pub task: TaskKind,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub rounds: Option<usize>,
    #[serde(default = "default_features")]
    pub num_features: usize,
    pub algorithms: Vec<String>,
    #[serde(default)]
    pub hedge: HedgeKind,
    /// Kernel bandwidths; the 17-kernel default when absent.
    pub dictionary: Option<Vec<f64>>,
    #[serde(default)]
    pub compute_regret: bool,
    #[serde(default = "yes")]
    pub parallel: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    pub learners: usize,
    pub topology: Option<TopologyKind>,
    pub connection_prob: Option<f64>,
    pub edges_file: Option<PathBuf>,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDomkl {
    pub rho: Option<f64>,
    pub eta_local: Option<f64>,
    pub eta_global: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDokl {
    pub rho: Option<f64>,
    pub eta_local: Option<f64>,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawComkl {
    pub step_size: Option<f64>,
    pub eta_global: Option<f64>,
    #[serde(default)]
    pub batch_loss: BatchLossKind,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRffDokl {
    pub step_size: Option<f64>,
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAlgorithms {
    pub domkl: Option<RawDomkl>,
    pub dokl: Option<RawDokl>,
    pub comkl: Option<RawComkl>,
    pub rff_dokl: Option<RawRffDokl>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawData {
    // files
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub label_column: usize,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default)]
    pub shuffle: bool,
    #[serde(default = "default_ar_order")]
    pub ar_order: usize,
    // synthetic regression
    pub input_dim: Option<usize>,
    pub generating_bandwidth: Option<f64>,
    pub generator_features: Option<usize>,
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub share_dictionary_map: bool,
    // synthetic series
    pub samples: Option<usize>,
    pub ar_intercept: Option<f64>,
    pub ar_coefficients: Option<Vec<f64>>,
    pub ar_noise_std: Option<f64>,
    pub ar_seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub experiment: RawExperiment,
    pub network: RawNetwork,
    #[serde(default)]
    pub algorithm: RawAlgorithms,
    #[serde(default)]
    pub data: RawData,
}

fn invalid<T>(m: impl Into<String>) -> SimResult<T> {
    Err(SimError::Invalid(m.into()))
}

fn admm(rho: Option<f64>, eta: Option<f64>) -> SimResult<AdmmConfig> {
    AdmmConfig::new(rho.unwrap_or(DEFAULT_RHO), eta.unwrap_or(DEFAULT_ETA_LOCAL))
        .map_err(|e| SimError::Invalid(e.to_string()))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RawConfig {
    pub fn parse(text: &str, path: &Path) -> SimResult<Self> {
        toml::from_str(text).map_err(|e| SimError::Config {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_owned(),
        })
    }

    /// Validates and loads referenced files.
    pub fn resolve(self, base_dir: &Path) -> SimResult<ExperimentConfig> {
        let ex = &self.experiment;
        let algorithms = ex
            .algorithms
            .iter()
            .map(|name| self.algorithm_spec(name))
            .collect::<SimResult<Vec<_>>>()?;
        for (i, a) in algorithms.iter().enumerate() {
            if algorithms[..i].iter().any(|b| b.name() == a.name()) {
                return invalid(format!("algorithm `{}` listed twice", a.name()));
            }
        }
        let net = &self.network;
        let topology = match (net.topology, &net.edges_file) {
            (Some(_), Some(_)) => return invalid("give either network.topology or network.edges_file"),
            (_, Some(f)) => {
                let path = resolve(base_dir, f);
                let text = std::fs::read_to_string(&path).map_err(|source| SimError::Io { path: path.clone(), source })?;
                Topology::Fixed(Graph::parse_edge_list(&text).map_err(|e| SimError::Config {
                    path,
                    message: e.to_string(),
                })?)
            }
            (None | Some(TopologyKind::Er), None) => match net.connection_prob {
                Some(p) => Topology::ErdosRenyi {
                    connection_prob: p,
                    max_attempts: net.max_attempts,
                },
                None => return invalid("network.connection_prob is required for random graphs"),
            },
            (Some(kind), None) => {
                let k = net.learners;
                let g = match kind {
                    TopologyKind::Complete => Graph::complete(k),
                    TopologyKind::Path => Graph::path(k),
                    TopologyKind::Star => Graph::star(k),
                    TopologyKind::Cycle => Graph::cycle(k),
                    TopologyKind::Er => unreachable!(),
                };
                Topology::Fixed(g.map_err(|e| SimError::Invalid(e.to_string()))?)
            }
        };
        let hedge = match ex.hedge {
            HedgeKind::Product => HedgeVariant::Product,
            HedgeKind::MessagePassing => HedgeVariant::MessagePassing { allow_cyclic: false },
            HedgeKind::MessagePassingCyclic => HedgeVariant::MessagePassing { allow_cyclic: true },
        };
        let dictionary = match &ex.dictionary {
            Some(d) => d.clone(),
            None => default_dictionary().specs().iter().map(|s| s.bandwidth()).collect(),
        };
        let task = self.task(base_dir)?;
        if ex.rounds.is_some() && !matches!(task, TaskData::Synthetic(_)) {
            return invalid("experiment.rounds only applies to synthetic tasks; file tasks use ⌊N/K⌋");
        }
        let cfg = ExperimentConfig {
            task,
            learners: net.learners,
            topology,
            algorithms,
            num_features: ex.num_features,
            dictionary,
            hedge,
            trials: ex.trials,
            master_seed: ex.seed,
            compute_regret: ex.compute_regret,
            parallel: ex.parallel,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn algorithm_spec(&self, name: &str) -> SimResult<AlgorithmSpec> {
        let a = &self.algorithm;
        Ok(match name {
            "domkl" => {
                let r = a.domkl.clone().unwrap_or_default();
                AlgorithmSpec::Domkl {
                    admm: admm(r.rho, r.eta_local)?,
                    eta_global: r.eta_global.unwrap_or(DEFAULT_ETA_GLOBAL),
                }
            }
            "dokl" => {
                let r = a.dokl.clone().unwrap_or_default();
                AlgorithmSpec::Dokl {
                    admm: admm(r.rho, r.eta_local)?,
                    bandwidth: r.bandwidth.unwrap_or(1.0),
                }
            }
            "comkl" => {
                let r = a.comkl.clone().unwrap_or_default();
                AlgorithmSpec::Comkl {
                    step_size: r.step_size.unwrap_or(DEFAULT_OGD_STEP),
                    eta_global: r.eta_global.unwrap_or(DEFAULT_ETA_GLOBAL),
                    batch_loss: match r.batch_loss {
                        BatchLossKind::Sum => BatchLoss::Sum,
                        BatchLossKind::Mean => BatchLoss::Mean,
                    },
                }
            }
            "rff_dokl" => {
                let r = a.rff_dokl.clone().unwrap_or_default();
                AlgorithmSpec::RffDokl {
                    step_size: r.step_size.unwrap_or(DEFAULT_OGD_STEP),
                    bandwidth: r.bandwidth.unwrap_or(1.0),
                }
            }
            other => {
                return invalid(format!(
                    "unknown algorithm `{other}`, expected one of domkl, dokl, comkl, rff_dokl"
                ))
            }
        })
    }

    fn task(&self, base_dir: &Path) -> SimResult<TaskData> {
        let d = &self.data;
        let normalized = |ds| -> SimResult<_> {
            if d.normalize {
                Ok(normalize_minmax(&ds)?.0)
            } else {
                Ok(ds)
            }
        };
        Ok(match self.experiment.task {
            TaskKind::Synthetic => {
                let Some(rounds) = self.experiment.rounds else {
                    return invalid("experiment.rounds is required for synthetic tasks");
                };
                TaskData::Synthetic(SyntheticTask {
                    input_dim: d.input_dim.unwrap_or(5),
                    generating_bandwidth: d.generating_bandwidth.unwrap_or(1.0),
                    generator_features: d.generator_features.unwrap_or(self.experiment.num_features),
                    noise_std: d.noise_std.unwrap_or(0.05),
                    rounds,
                    share_dictionary_map: d.share_dictionary_map,
                })
            }
            TaskKind::Regression => {
                let Some(p) = &d.path else {
                    return invalid("data.path is required for regression tasks");
                };
                let ds = load_csv(&resolve(base_dir, p), d.label_column, d.has_header)?;
                TaskData::Regression {
                    dataset: Arc::new(normalized(ds)?),
                    shuffle: d.shuffle,
                }
            }
            TaskKind::Timeseries => {
                let series = match (&d.path, &d.ar_coefficients) {
                    (Some(p), None) => load_series(&resolve(base_dir, p), d.label_column, d.has_header)?,
                    (None, Some(coef)) => {
                        let spec = ArSpec {
                            intercept: d.ar_intercept.unwrap_or(0.0),
                            coefficients: coef.clone(),
                            noise_std: d.ar_noise_std.unwrap_or(0.1),
                        };
                        let Some(n) = d.samples else {
                            return invalid("data.samples is required for a synthetic series");
                        };
                        synth_ar(&spec, n, d.ar_seed.unwrap_or(self.experiment.seed))?
                    }
                    _ => return invalid("time series need exactly one of data.path or data.ar_coefficients"),
                };
                let ds = ar_embed(&series, d.ar_order, "series")?;
                TaskData::TimeSeries {
                    dataset: Arc::new(normalized(ds)?),
                }
            }
        })
    }
}

pub fn parse_config(text: &str, path: &Path) -> SimResult<ExperimentConfig> {
    let base = path.parent().unwrap_or(Path::new("."));
    RawConfig::parse(text, path)?.resolve(base)
}

pub fn load_config(path: &Path) -> SimResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text, path)
}
