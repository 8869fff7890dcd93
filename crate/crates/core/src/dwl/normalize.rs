use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, Result};

/// Per-channel running mean and variance (parallel Welford merge).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
    /// Normalized values are clipped to `[-clip, clip]`.
    pub clip: f64,
    /// Standard deviations below this are raised to it.
    pub min_std: f64,
    /// When false the transform is the identity.
    pub enabled: bool,
}

impl RunningNorm {
    pub fn new(dim: usize, enabled: bool) -> Self {
        Self { mean: vec![0.0; dim], var: vec![1.0; dim], count: 0.0, clip: 10.0, min_std: 1e-2, enabled }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a batch of rows into the statistics.
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<()> {
        let d = self.dim();
        let mut n = 0.0;
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let mut batch: Vec<&[f64]> = Vec::new();
        for r in rows {
            check_len("normalizer row", d, r.len())?;
            batch.push(r);
        }
        if batch.is_empty() {
            return Ok(());
        }
        for r in &batch {
            n += 1.0;
            for k in 0..d {
                sum[k] += r[k];
            }
        }
        let bmean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        for r in &batch {
            for k in 0..d {
                let e = r[k] - bmean[k];
                sq[k] += e * e;
            }
        }
        if self.count == 0.0 {
            self.mean = bmean;
            self.var = sq.iter().map(|s| s / n).collect();
            self.count = n;
            return Ok(());
        }
        let total = self.count + n;
        for k in 0..d {
            let delta = bmean[k] - self.mean[k];
            let m2 = self.var[k] * self.count + sq[k] + delta * delta * self.count * n / total;
            self.mean[k] += delta * n / total;
            self.var[k] = m2 / total;
        }
        self.count = total;
        Ok(())
    }

    fn std(&self, k: usize) -> f64 {
        libm::sqrt(self.var[k]).max(self.min_std)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if !self.enabled {
            return x.to_vec();
        }
        x.iter().enumerate().map(|(k, v)| ((v - self.mean[k]) / self.std(k)).clamp(-self.clip, self.clip)).collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        if !self.enabled {
            return x.to_vec();
        }
        x.iter().enumerate().map(|(k, v)| v * self.std(k) + self.mean[k]).collect()
    }
}
