use ndarray::{Array1, Array2, Axis, Ix1};

use super::{Param, ParamMut, ParamRef};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// True for running statistics, which are stored with the parameters but
/// never receive updates from an optimizer.
pub fn is_buffer(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

/// Batch normalization over the rows of a `batch × dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub weight: Param<Ix1>,
    pub bias: Param<Ix1>,
    pub running_mean: Param<Ix1>,
    pub running_var: Param<Ix1>,
}

/// Batch statistics and normalized inputs of one training-mode pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
}

impl BatchNorm {
    pub fn new(prefix: &str, dim: usize) -> Self {
        Self {
            weight: Param::new(format!("{prefix}.weight"), Array1::ones(dim)),
            bias: Param::zeros(format!("{prefix}.bias"), dim),
            running_mean: Param::zeros(format!("{prefix}.running_mean"), dim),
            running_var: Param::new(format!("{prefix}.running_var"), Array1::ones(dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.weight.value.len()
    }

    /// Normalizes with the statistics of `x` itself.
    pub fn forward_train(&self, x: &Array2<f64>) -> (Array2<f64>, BatchNormCache) {
        let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
        let centered = x - &mean;
        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        let xhat = centered * &inv_std;
        let y = &xhat * &self.weight.value + &self.bias.value;
        (y, BatchNormCache { xhat, inv_std, mean, var })
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Array2<f64> {
        let inv_std = self.running_var.value.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
        (x - &self.running_mean.value) * &inv_std * &self.weight.value + &self.bias.value
    }

    /// Moves the running statistics toward the batch ones (unbiased variance).
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let n = cache.xhat.nrows() as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        self.running_mean
            .value
            .zip_mut_with(&cache.mean, |r, &m| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
        self.running_var
            .value
            .zip_mut_with(&cache.var, |r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * correction);
    }

    /// Accumulates weight and bias gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Array2<f64>) -> Array2<f64> {
        let n = dy.nrows() as f64;
        self.weight.grad += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.bias.grad += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.weight.value;
        let sum = dxhat.sum_axis(Axis(0));
        let dot = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        (dxhat * n - &sum - &cache.xhat * &dot) * &cache.inv_std / n
    }

    pub fn params(&self) -> [ParamRef<'_>; 4] {
        [
            self.weight.as_ref(),
            self.bias.as_ref(),
            self.running_mean.as_ref(),
            self.running_var.as_ref(),
        ]
    }

    pub fn params_mut(&mut self) -> [ParamMut<'_>; 4] {
        [
            self.weight.as_mut(),
            self.bias.as_mut(),
            self.running_mean.as_mut(),
            self.running_var.as_mut(),
        ]
    }
}
