//! Gaussian kernel density over embedding vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// One-dimensional Gaussian kernel applied to the Euclidean distance,
    /// normalized by `1 / (n h)`. Comparable across slices, but not a
    /// proper density in more than one dimension.
    #[default]
    AsWritten,
    /// Isotropic d-dimensional Gaussian, `(2 pi)^(-d/2) h^(-d)` per point.
    MultivariateNormalized,
}

/// Kernel density estimate over a borrowed sample.
#[derive(Debug, Clone)]
pub struct KdeModel<'a> {
    sample: Vec<&'a [f64]>,
    dim: usize,
    bandwidth: f64,
    mode: KernelMode,
}

impl<'a> KdeModel<'a> {
    pub fn new(sample: Vec<&'a [f64]>, bandwidth: f64, mode: KernelMode) -> Result<Self> {
        let dim = sample
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidArgument("KDE sample is empty".into()))?;
        if sample.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidArgument("KDE sample vectors differ in dimension".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
        }
        Ok(KdeModel {
            sample,
            dim,
            bandwidth,
            mode,
        })
    }

    pub fn n(&self) -> usize {
        self.sample.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        kde_density(self, x)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Density of `model` at `x`, summed exactly over the sample in order.
pub fn kde_density(model: &KdeModel<'_>, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch {
            id: "query".into(),
            expected: model.dim,
            found: x.len(),
        });
    }
    let h = model.bandwidth;
    let n = model.sample.len() as f64;
    let inv_2h2 = 0.5 / (h * h);
    let kernel_sum: f64 = model
        .sample
        .iter()
        .map(|xi| (-squared_distance(x, xi) * inv_2h2).exp())
        .sum();
    Ok(match model.mode {
        KernelMode::AsWritten => kernel_sum * INV_SQRT_2PI / (n * h),
        KernelMode::MultivariateNormalized => {
            let d = model.dim as f64;
            let log_norm = -0.5 * d * (2.0 * std::f64::consts::PI).ln() - d * h.ln();
            kernel_sum * log_norm.exp() / n
        }
    })
}

/// Scott's rule with a scalar bandwidth: `n^(-1/(d+4))` times the mean
/// per-coordinate sample standard deviation. `None` when the sample has
/// no spread (fewer than two points or all points identical).
pub fn scott_bandwidth(sample: &[&[f64]]) -> Option<f64> {
    let n = sample.len();
    if n < 2 {
        return None;
    }
    let d = sample[0].len();
    let mut sd_sum = 0.0;
    for k in 0..d {
        let mean = sample.iter().map(|v| v[k]).sum::<f64>() / n as f64;
        let var = sample.iter().map(|v| (v[k] - mean) * (v[k] - mean)).sum::<f64>() / (n - 1) as f64;
        sd_sum += var.sqrt();
    }
    let sigma = sd_sum / d as f64;
    let h = (n as f64).powf(-1.0 / (d as f64 + 4.0)) * sigma;
    (h > 0.0 && h.is_finite()).then_some(h)
}
