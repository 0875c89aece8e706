use ndarray::{Array, Dimension, ShapeBuilder};
use rand::Rng;

/// A named learnable array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<D: Dimension> {
    name: String,
    shape: Vec<usize>,
    pub value: Array<f64, D>,
    pub grad: Array<f64, D>,
}

impl<D: Dimension> Param<D> {
    pub fn new(name: impl Into<String>, value: Array<f64, D>) -> Self {
        let value = value.as_standard_layout().into_owned();
        let grad = Array::zeros(value.raw_dim());
        Self {
            name: name.into(),
            shape: value.shape().to_vec(),
            value,
            grad,
        }
    }

    pub fn zeros<Sh: ShapeBuilder<Dim = D>>(name: impl Into<String>, shape: Sh) -> Self {
        Self::new(name, Array::zeros(shape))
    }

    /// Entries drawn from `uniform(-scale, scale)`.
    pub fn uniform<Sh: ShapeBuilder<Dim = D>, R: Rng>(name: impl Into<String>, shape: Sh, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(name, shape);
        if scale > 0.0 {
            p.value.mapv_inplace(|_| rng.gen_range(-scale..scale));
        }
        p
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn as_ref(&self) -> ParamRef<'_> {
        ParamRef {
            name: &self.name,
            shape: self.value.shape(),
            value: self.value.as_slice().expect("parameters are kept in standard layout"),
            grad: self.grad.as_slice().expect("parameters are kept in standard layout"),
        }
    }

    pub fn as_mut(&mut self) -> ParamMut<'_> {
        ParamMut {
            name: &self.name,
            shape: &self.shape,
            value: self.value.as_slice_mut().expect("parameters are kept in standard layout"),
            grad: self.grad.as_slice_mut().expect("parameters are kept in standard layout"),
        }
    }
}

/// Flat read-only view of one parameter.
#[derive(Debug, Clone, Copy)]
pub struct ParamRef<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub value: &'a [f64],
    pub grad: &'a [f64],
}

/// Flat mutable view of one parameter.
#[derive(Debug)]
pub struct ParamMut<'a> {
    pub name: &'a str,
    pub shape: &'a [usize],
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Anything that owns learnable parameters, visited in a fixed order.
pub trait Parameters {
    fn params(&self) -> Vec<ParamRef<'_>>;
    fn params_mut(&mut self) -> Vec<ParamMut<'_>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

/// Global L2 norm of the gradients.
pub fn grad_norm(params: &[ParamMut<'_>]) -> f64 {
    params
        .iter()
        .flat_map(|p| p.grad.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut [ParamMut<'_>], max_norm: f64) -> f64 {
    let norm = grad_norm(params);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}
