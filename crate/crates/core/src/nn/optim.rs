use serde::{Deserialize, Serialize};

use super::{is_buffer, NnError, ParamMut};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub const fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    name: String,
    m: Vec<f64>,
    v: Vec<f64>,
    /// Updates applied to this parameter; frozen parameters do not advance.
    steps: u64,
}

/// Optimizer state. Moments are keyed by parameter position and created lazily.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    moments: Vec<Moments>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            moments: Vec::new(),
            step: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Number of `step` calls so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter and zeroes all gradients.
    /// `trainable` selects parameters by name; the rest, and running
    /// statistics, keep their values.
    pub fn step(&mut self, params: &mut [ParamMut<'_>], lr: f64, trainable: &dyn Fn(&str) -> bool) -> Result<(), NnError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NnError::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    name: p.name.to_string(),
                    ..Default::default()
                })
                .collect();
        }
        if self.moments.len() != params.len() || self.moments.iter().zip(params.iter()).any(|(m, p)| m.name != p.name) {
            return Err(NnError::Shape("parameter set changed between optimizer steps".into()));
        }
        self.step += 1;
        for (p, st) in params.iter_mut().zip(&mut self.moments) {
            if trainable(p.name) && !is_buffer(p.name) {
                match self.kind {
                    OptimizerKind::Sgd => {
                        if p.value.iter().zip(p.grad.iter()).any(|(v, g)| !(v - lr * g).is_finite()) {
                            return Err(NnError::NonFinite(format!("update of {}", p.name)));
                        }
                        for (v, g) in p.value.iter_mut().zip(p.grad.iter()) {
                            *v -= lr * g;
                        }
                    }
                    OptimizerKind::Adam { beta1, beta2, eps } => {
                        if st.m.is_empty() {
                            st.m = vec![0.0; p.value.len()];
                            st.v = vec![0.0; p.value.len()];
                        }
                        st.steps += 1;
                        let bc1 = 1.0 - beta1.powi(st.steps as i32);
                        let bc2 = 1.0 - beta2.powi(st.steps as i32);
                        for (((v, &g), m), s) in p.value.iter_mut().zip(p.grad.iter()).zip(&mut st.m).zip(&mut st.v) {
                            *m = beta1 * *m + (1.0 - beta1) * g;
                            *s = beta2 * *s + (1.0 - beta2) * g * g;
                            let update = lr * (*m / bc1) / ((*s / bc2).sqrt() + eps);
                            if !update.is_finite() {
                                return Err(NnError::NonFinite(format!("update of {}", p.name)));
                            }
                            *v -= update;
                        }
                    }
                }
            }
            p.grad.fill(0.0);
        }
        Ok(())
    }
}

/// Trains everything.
pub fn all_trainable(_: &str) -> bool {
    true
}
