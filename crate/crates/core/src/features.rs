//! Gaussian kernels and their random Fourier feature maps.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::error::check_dim;
use crate::{seeded_rng, Error, Result};

/// Default number of spectral samples per kernel.
pub const DEFAULT_NUM_FEATURES: usize = 50;

/// A Gaussian kernel `exp(-‖x - x'‖² / (2 σ²))`, identified by its
/// bandwidth `σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    bandwidth: f64,
}

impl KernelSpec {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if bandwidth > 0.0 && bandwidth.is_finite() {
            Ok(Self { bandwidth })
        } else {
            Err(Error::Parameter(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )))
        }
    }

    /// The variance parameter `σ²`.
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}

/// Exact Gaussian kernel value.
pub fn gaussian_kernel(spec: KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    check_dim(x.len(), x2.len())?;
    let d2: f64 = x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(libm::exp(-d2 / (2.0 * spec.bandwidth)))
}

/// Ordered set of kernels; the position is the kernel index `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDictionary {
    specs: Vec<KernelSpec>,
    shared_seed: u64,
}

impl KernelDictionary {
    pub fn new(specs: Vec<KernelSpec>, shared_seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Parameter("kernel dictionary is empty".into()));
        }
        Ok(Self { specs, shared_seed })
    }

    pub fn from_bandwidths(bandwidths: &[f64], shared_seed: u64) -> Result<Self> {
        let specs = bandwidths
            .iter()
            .map(|&b| KernelSpec::new(b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(specs, shared_seed)
    }

    pub fn specs(&self) -> &[KernelSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn shared_seed(&self) -> u64 {
        self.shared_seed
    }

    pub fn with_seed(&self, shared_seed: u64) -> Self {
        Self {
            specs: self.specs.clone(),
            shared_seed,
        }
    }

    /// Seed of kernel `p`'s map: `shared_seed + p`.
    pub fn seed_for(&self, p: usize) -> u64 {
        self.shared_seed.wrapping_add(p as u64)
    }

    /// One feature map per kernel, all with the same `input_dim` and `num_features`.
    pub fn feature_maps(&self, input_dim: usize, num_features: usize) -> Result<Vec<FeatureMap>> {
        self.specs
            .iter()
            .enumerate()
            .map(|(p, spec)| {
                FeatureMap::build(*spec, input_dim, num_features, self.seed_for(p))
                    .map(|fm| fm.with_kernel_index(p))
            })
            .collect()
    }
}

/// The 17-kernel dictionary with `σ_p² = 10^((p - 9) / 2)`, `p = 1..=17`.
pub fn default_dictionary() -> KernelDictionary {
    let specs = (1..=17)
        .map(|p: i32| KernelSpec {
            bandwidth: libm::pow(10.0, f64::from(p - 9) / 2.0),
        })
        .collect();
    KernelDictionary {
        specs,
        shared_seed: 0,
    }
}

/// Random Fourier feature map `z(x) = M^{-1/2} [sin(vᵢᵀx)…, cos(vᵢᵀx)…]`
/// with spectral rows `vᵢ ~ N(0, σ⁻² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    spec: KernelSpec,
    input_dim: usize,
    num_features: usize,
    kernel_index: usize,
    seed: u64,
    /// Row-major `num_features × input_dim`.
    spectral: Vec<f64>,
    scale: f64,
}

impl FeatureMap {
    pub fn build(spec: KernelSpec, input_dim: usize, num_features: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || num_features == 0 {
            return Err(Error::Parameter(format!(
                "feature map needs input_dim >= 1 and num_features >= 1, got {input_dim} and {num_features}"
            )));
        }
        let std = 1.0 / libm::sqrt(spec.bandwidth);
        let normal = Normal::new(0.0, std).map_err(|_| Error::NonFinite("spectral std"))?;
        let mut rng = seeded_rng(seed);
        let spectral = (0..num_features * input_dim)
            .map(|_| normal.sample(&mut rng))
            .collect();
        Ok(Self {
            spec,
            input_dim,
            num_features,
            kernel_index: 0,
            seed,
            spectral,
            scale: 1.0 / libm::sqrt(num_features as f64),
        })
    }

    pub fn with_kernel_index(mut self, p: usize) -> Self {
        self.kernel_index = p;
        self
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// Length of `z(x)`, i.e. `2M`.
    pub fn output_dim(&self) -> usize {
        2 * self.num_features
    }

    pub fn kernel_index(&self) -> usize {
        self.kernel_index
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Spectral row `vᵢ`.
    pub fn spectral_row(&self, i: usize) -> &[f64] {
        &self.spectral[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = alloc::vec![0.0; self.output_dim()];
        self.map_into(x, &mut z)?;
        Ok(z)
    }

    pub fn map_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.input_dim, x.len())?;
        check_dim(self.output_dim(), out.len())?;
        let m = self.num_features;
        for i in 0..m {
            let proj = crate::linalg::dot(self.spectral_row(i), x);
            out[i] = self.scale * libm::sin(proj);
            out[m + i] = self.scale * libm::cos(proj);
        }
        Ok(())
    }

    /// FNV-1a over every field; equal maps give equal fingerprints.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.spec.bandwidth.to_bits());
        eat(self.input_dim as u64);
        eat(self.num_features as u64);
        eat(self.kernel_index as u64);
        eat(self.seed);
        for v in &self.spectral {
            eat(v.to_bits());
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm_sq};
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn dictionary_bandwidths() {
        let d = default_dictionary();
        assert_eq!(d.len(), 17);
        assert_eq!(d.specs()[8].bandwidth(), 1.0);
        assert!((d.specs()[0].bandwidth() - 1e-4).abs() < 1e-18);
        assert!((d.specs()[16].bandwidth() - 1e4).abs() < 1e-10);
        assert!((d.specs()[7].bandwidth() - libm::sqrt(0.1)).abs() < 1e-15);
    }

    #[test]
    fn kernel_values() {
        let s = KernelSpec::new(2.0).unwrap();
        assert_eq!(gaussian_kernel(s, &[0.3, 0.1], &[0.3, 0.1]).unwrap(), 1.0);
        // ‖Δ‖² = 4 = 2σ²
        let v = gaussian_kernel(s, &[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - 0.367_879_441_171_442_3).abs() < 1e-15);
        let s = KernelSpec::new(0.5).unwrap();
        let v = gaussian_kernel(s, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((v - libm::exp(-1.0)).abs() < 1e-15);
        assert!(gaussian_kernel(s, &[1.0], &[0.0, 0.0]).is_err());
        assert!(KernelSpec::new(0.0).is_err());
        assert!(KernelSpec::new(-1.0).is_err());
    }

    #[test]
    fn map_is_deterministic() {
        let s = KernelSpec::new(0.3).unwrap();
        let a = FeatureMap::build(s, 3, 20, 42).unwrap();
        let b = FeatureMap::build(s, 3, 20, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = FeatureMap::build(s, 3, 20, 43).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert!(FeatureMap::build(s, 0, 20, 1).is_err());
        assert!(FeatureMap::build(s, 2, 0, 1).is_err());
    }

    #[test]
    fn spectral_moments() {
        let fm = FeatureMap::build(KernelSpec::new(1.0).unwrap(), 1, 100_000, 5).unwrap();
        let mean: f64 = (0..100_000).map(|i| fm.spectral_row(i)[0]).sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "mean {mean}");

        let fm = FeatureMap::build(KernelSpec::new(4.0).unwrap(), 1, 100_000, 6).unwrap();
        let vals: Vec<f64> = (0..100_000).map(|i| fm.spectral_row(i)[0]).collect();
        let mean = vals.iter().sum::<f64>() / 1e5;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (1e5 - 1.0);
        assert!((var - 0.25).abs() <= 0.05 * 0.25, "var {var}");
    }

    #[test]
    fn map_at_origin() {
        let fm = FeatureMap::build(KernelSpec::new(1.0).unwrap(), 4, 8, 1).unwrap();
        let z = fm.map(&[0.0; 4]).unwrap();
        let inv = 1.0 / libm::sqrt(8.0);
        assert!(z[..8].iter().all(|&v| v == 0.0));
        assert!(z[8..].iter().all(|&v| (v - inv).abs() < 1e-15));
        assert!(fm.map(&[0.0; 3]).is_err());
    }

    #[test]
    fn rff_approximates_kernel() {
        let spec = KernelSpec::new(1.0).unwrap();
        let fm = FeatureMap::build(spec, 5, 2000, 77).unwrap();
        let mut rng = seeded_rng(3);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            let y: Vec<f64> = (0..5).map(|_| rng.random()).collect();
            let approx = dot(&fm.map(&x).unwrap(), &fm.map(&y).unwrap());
            let exact = gaussian_kernel(spec, &x, &y).unwrap();
            worst = worst.max((approx - exact).abs());
        }
        assert!(worst <= 0.05, "worst {worst}");
    }

    proptest! {
        #[test]
        fn unit_norm(x in proptest::collection::vec(-50.0f64..50.0, 3), bw in 1e-4f64..1e4, seed in any::<u64>()) {
            let fm = FeatureMap::build(KernelSpec::new(bw).unwrap(), 3, 16, seed).unwrap();
            let z = fm.map(&x).unwrap();
            prop_assert!((norm_sq(&z) - 1.0).abs() <= 1e-12);
        }
    }
}
