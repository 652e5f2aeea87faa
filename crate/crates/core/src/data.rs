//! Datasets, their distribution across learners, and synthetic sources.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::features::{FeatureMap, KernelSpec};
use crate::linalg::dot;
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
    pub name: String,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Parameter(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(d) = features.first().map(Vec::len) {
            if let Some(bad) = features.iter().position(|r| r.len() != d) {
                return Err(Error::Parameter(format!("row {bad} has a different width")));
            }
        }
        if features.iter().flatten().chain(&labels).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self {
            features,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub learner: usize,
    /// 1-based arrival time.
    pub time: usize,
    pub x: Vec<f64>,
    pub y: f64,
}

/// One equal-length stream per learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Streams {
    learners: Vec<Vec<StreamSample>>,
}

impl Streams {
    pub fn new(learners: Vec<Vec<StreamSample>>) -> Result<Self> {
        let t = learners.first().map_or(0, Vec::len);
        if learners.iter().any(|s| s.len() != t) {
            return Err(Error::Parameter("streams must share one length".into()));
        }
        Ok(Self { learners })
    }

    pub fn num_learners(&self) -> usize {
        self.learners.len()
    }

    /// Rounds available, `T`.
    pub fn len(&self) -> usize {
        self.learners.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Learner `k`'s sample at 0-based round `t`.
    pub fn sample(&self, k: usize, t: usize) -> &StreamSample {
        &self.learners[k][t]
    }

    pub fn learner(&self, k: usize) -> &[StreamSample] {
        &self.learners[k]
    }

    /// First `t` rounds of every stream.
    pub fn truncated(&self, t: usize) -> Self {
        Self {
            learners: self.learners.iter().map(|s| s[..t.min(s.len())].to_vec()).collect(),
        }
    }
}

/// Affine map `v ↦ (v - min) / (max - min)`; constant columns have `span = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub span: f64,
}

impl MinMax {
    fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let min = values.clone().fold(f64::INFINITY, f64::min);
        let max = values.fold(f64::NEG_INFINITY, f64::max);
        Self { min, span: max - min }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.span > 0.0 {
            (v - self.min) / self.span
        } else {
            0.0
        }
    }

    pub fn invert(&self, v: f64) -> f64 {
        self.min + v * self.span
    }
}

/// Column-wise scaling parameters from [`normalize_minmax`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub features: Vec<MinMax>,
    pub label: MinMax,
}

/// Maps every feature column and the label affinely onto `[0, 1]`.
/// Constant columns become all zeros.
pub fn normalize_minmax(ds: &Dataset) -> Result<(Dataset, Scaling)> {
    if ds.len() < 2 {
        return Err(Error::Parameter("normalization needs at least two rows".into()));
    }
    let d = ds.input_dim();
    let features: Vec<MinMax> = (0..d)
        .map(|j| MinMax::fit(ds.features.iter().map(move |r| r[j])))
        .collect();
    let label = MinMax::fit(ds.labels.iter().copied());
    let rows = ds
        .features
        .iter()
        .map(|r| r.iter().zip(&features).map(|(v, s)| s.apply(*v)).collect())
        .collect();
    let labels = ds.labels.iter().map(|v| label.apply(*v)).collect();
    Ok((
        Dataset {
            features: rows,
            labels,
            name: ds.name.clone(),
        },
        Scaling { features, label },
    ))
}

fn check_split(n: usize, k: usize) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::Parameter(format!(
            "cannot split {n} samples across {k} learners"
        )));
    }
    Ok(n / k)
}

fn to_sample(ds: &Dataset, idx: usize, learner: usize, time: usize) -> StreamSample {
    StreamSample {
        learner,
        time,
        x: ds.features[idx].clone(),
        y: ds.labels[idx],
    }
}

/// Contiguous blocks of `T = ⌊N/K⌋` samples, learner `k` taking rows
/// `kT..(k+1)T`. The remainder is dropped.
pub fn partition_regression(ds: &Dataset, k: usize) -> Result<Streams> {
    let t = check_split(ds.len(), k)?;
    Streams::new(
        (0..k)
            .map(|l| (0..t).map(|i| to_sample(ds, l * t + i, l, i + 1)).collect())
            .collect(),
    )
}

/// Round-robin split for time series: learner `k` (0-based) receives
/// global indices `K·t + k` for `t = 0..⌊N/K⌋`, keeping temporal order.
pub fn partition_timeseries_interleaved(ds: &Dataset, k: usize) -> Result<Streams> {
    let t = check_split(ds.len(), k)?;
    Streams::new(
        (0..k)
            .map(|l| (0..t).map(|i| to_sample(ds, k * i + l, l, i + 1)).collect())
            .collect(),
    )
}

/// Lag embedding: `x_t = [y_{t-1}, …, y_{t-s}]` with target `y_t`,
/// producing `N - s` pairs in temporal order.
pub fn ar_embed(series: &[f64], order: usize, name: &str) -> Result<Dataset> {
    if order == 0 || series.len() <= order {
        return Err(Error::Parameter(format!(
            "series of length {} is too short for order {order}",
            series.len()
        )));
    }
    let features = (order..series.len())
        .map(|t| (1..=order).map(|lag| series[t - lag]).collect())
        .collect();
    Dataset::new(name, features, series[order..].to_vec())
}

/// `y_t = c + Σ_i γ_i y_{t-i} + n_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArSpec {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub noise_std: f64,
}

impl ArSpec {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// `Σ|γ_i| < 1`, a sufficient condition for a stable recursion.
    pub fn is_stable(&self) -> bool {
        self.coefficients.iter().map(|c| c.abs()).sum::<f64>() < 1.0
    }
}

/// Runs the AR recursion from an all-zero history.
pub fn synth_ar(spec: &ArSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    if spec.order() == 0 {
        return Err(Error::Parameter("AR order must be at least 1".into()));
    }
    if !(spec.noise_std >= 0.0) {
        return Err(Error::Parameter("noise_std must be nonnegative".into()));
    }
    let noise = Normal::new(0.0, spec.noise_std).map_err(|_| Error::NonFinite("noise_std"))?;
    let mut rng = seeded_rng(seed);
    let mut out: Vec<f64> = Vec::with_capacity(n);
    for t in 0..n {
        let mut y = spec.intercept + noise.sample(&mut rng);
        for (i, g) in spec.coefficients.iter().enumerate() {
            if t > i {
                y += g * out[t - 1 - i];
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// A known target `f(x) = θ*ᵀ z(x)` over a fixed random feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRegressionSpec {
    pub map: FeatureMap,
    pub true_theta: Vec<f64>,
    pub noise_std: f64,
}

impl SyntheticRegressionSpec {
    pub fn new(map: FeatureMap, true_theta: Vec<f64>, noise_std: f64) -> Result<Self> {
        crate::error::check_dim(map.output_dim(), true_theta.len())?;
        if !(noise_std >= 0.0) {
            return Err(Error::Parameter("noise_std must be nonnegative".into()));
        }
        Ok(Self {
            map,
            true_theta,
            noise_std,
        })
    }

    /// Target with `θ*` drawn i.i.d. `N(0, 1)`, generating map seeded by `seed`.
    pub fn random(
        generating_bandwidth: f64,
        input_dim: usize,
        num_features: usize,
        noise_std: f64,
        seed: u64,
    ) -> Result<Self> {
        let map = FeatureMap::build(KernelSpec::new(generating_bandwidth)?, input_dim, num_features, seed)?;
        let mut rng = seeded_rng(seed ^ 0x5eed_7e7a);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let theta = (0..map.output_dim()).map(|_| normal.sample(&mut rng)).collect();
        Self::new(map, theta, noise_std)
    }

    pub fn generating_bandwidth(&self) -> f64 {
        self.map.spec().bandwidth()
    }

    pub fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    /// Noise-free target value.
    pub fn target(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.true_theta, &self.map.map(x)?))
    }
}

/// `N` samples with `x ~ U[0,1]^d` and `y = θ*ᵀz(x) + N(0, noise_std²)`.
pub fn synth_regression(spec: &SyntheticRegressionSpec, n: usize, seed: u64) -> Result<Dataset> {
    let noise = Normal::new(0.0, spec.noise_std).map_err(|_| Error::NonFinite("noise_std"))?;
    let mut rng = seeded_rng(seed);
    let d = spec.input_dim();
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        labels.push(spec.target(&x)? + noise.sample(&mut rng));
        features.push(x);
    }
    Dataset::new("synthetic", features, labels)
}

/// Splits a pooled dataset so every learner gets `t` samples, the layout
/// used for synthetic tasks: learner `k` takes rows `kT..(k+1)T`.
pub fn synth_streams(spec: &SyntheticRegressionSpec, learners: usize, rounds: usize, seed: u64) -> Result<Streams> {
    let ds = synth_regression(spec, learners * rounds, seed)?;
    partition_regression(&ds, learners)
}
