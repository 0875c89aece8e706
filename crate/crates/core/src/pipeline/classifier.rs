use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis, Ix1, Ix2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{
    gradient_check_piecewise, softmax_cross_entropy, BatchNorm, BatchNormCache, Encoder, GradCheckReport, LmConfig,
    NnError, Param, ParamMut, ParamRef, Parameters,
};

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_HEAD_HIDDEN: usize = 50;
/// Half-width of the uniform init of the output layer. Small, so the fresh
/// head starts near uniform class probabilities.
pub const OUT_INIT_SCALE: f64 = 1e-3;

/// How the encoder's hidden states are summarised for the head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// `[last, mean, max]` over the unpadded positions.
    #[default]
    Concat,
    /// Last unpadded hidden state only.
    Final,
}

impl Pooling {
    pub fn width(self, hidden: usize) -> usize {
        match self {
            Self::Concat => 3 * hidden,
            Self::Final => hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden: usize,
    pub pooling: Pooling,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HEAD_HIDDEN,
            pooling: Pooling::Concat,
        }
    }
}

/// Pretrained encoder plus a head with two outputs:
/// pool → batch norm → linear → ReLU → batch norm → linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    encoder_config: LmConfig,
    pooling: Pooling,
    pub encoder: Encoder,
    pub pool_norm: BatchNorm,
    /// `head_hidden × pool_width`
    pub hidden_weight: Param<Ix2>,
    pub hidden_bias: Param<Ix1>,
    pub hidden_norm: BatchNorm,
    /// `2 × head_hidden`
    pub out_weight: Param<Ix2>,
    pub out_bias: Param<Ix1>,
}

struct Pooled {
    features: Array2<f64>,
    /// time index of the max for each `(row, unit)`
    argmax: Array2<usize>,
}

/// Cached activations of one classifier forward pass.
pub struct ClassifierPass {
    encoder: crate::nn::EncoderPass,
    pooled: Pooled,
    pool_norm: Option<BatchNormCache>,
    pool_out: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden_norm: Option<BatchNormCache>,
    hidden_out: Array2<f64>,
    pub logits: Array2<f64>,
}

impl ClassifierPass {
    /// Max-pool winners followed by the sign of every hidden ReLU input; the
    /// loss is smooth in the parameters wherever this stays fixed.
    pub fn activation_pattern(&self) -> Vec<usize> {
        self.pooled
            .argmax
            .iter()
            .copied()
            .chain(self.hidden_pre.iter().map(|&z| usize::from(z > 0.0)))
            .collect()
    }
}

/// Batch statistics during training, running statistics otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

fn normalize(bn: &BatchNorm, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, Option<BatchNormCache>) {
    match mode {
        Mode::Train => {
            let (y, cache) = bn.forward_train(x);
            (y, Some(cache))
        }
        Mode::Eval => (bn.forward_eval(x), None),
    }
}

impl ClassifierModel {
    /// Wraps `encoder` with a freshly initialised head.
    pub fn new(encoder: Encoder, encoder_config: LmConfig, head: HeadConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = head.pooling.width(encoder.top_hidden());
        Self {
            pool_norm: BatchNorm::new("head.pool_norm", pool),
            hidden_norm: BatchNorm::new("head.hidden_norm", head.hidden),
            hidden_weight: Param::uniform("head.hidden.weight", (head.hidden, pool), 1.0 / (pool as f64).sqrt(), &mut rng),
            hidden_bias: Param::zeros("head.hidden.bias", head.hidden),
            out_weight: Param::uniform("head.out.weight", (NUM_CLASSES, head.hidden), OUT_INIT_SCALE, &mut rng),
            out_bias: Param::zeros("head.out.bias", NUM_CLASSES),
            pooling: head.pooling,
            encoder,
            encoder_config,
        }
    }

    /// Classifier with a randomly initialised encoder.
    pub fn from_scratch(encoder_config: LmConfig, head: HeadConfig, seed: u64) -> Result<Self, NnError> {
        encoder_config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e4c0);
        let encoder = Encoder::init(&encoder_config, &mut rng);
        Ok(Self::new(encoder, encoder_config, head, seed))
    }

    pub fn encoder_config(&self) -> &LmConfig {
        &self.encoder_config
    }

    pub fn head_config(&self) -> HeadConfig {
        HeadConfig {
            hidden: self.hidden_bias.value.len(),
            pooling: self.pooling,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.encoder.layers.len()
    }

    fn pool(&self, outputs: &Array3<f64>, lengths: &[usize]) -> Pooled {
        let (_, batch, h) = outputs.dim();
        let width = self.pooling.width(h);
        let mut features = Array2::zeros((batch, width));
        let mut argmax = Array2::zeros((batch, h));
        for (b, &len) in lengths.iter().enumerate() {
            let seq = outputs.slice(s![..len, b, ..]);
            features.slice_mut(s![b, 0..h]).assign(&seq.row(len - 1));
            if self.pooling == Pooling::Concat {
                features
                    .slice_mut(s![b, h..2 * h])
                    .assign(&(seq.sum_axis(Axis(0)) / len as f64));
                for k in 0..h {
                    let col = seq.column(k);
                    let (best_t, best) = col
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (t, &v)| if v > acc.1 { (t, v) } else { acc });
                    features[[b, 2 * h + k]] = best;
                    argmax[[b, k]] = best_t;
                }
            }
        }
        Pooled { features, argmax }
    }

    /// Forward pass over `ids` (`batch × time`, right-padded) with true `lengths`.
    pub fn forward(
        &self,
        ids: ArrayView2<usize>,
        lengths: &[usize],
        mode: Mode,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<ClassifierPass, NnError> {
        let (batch, steps) = ids.dim();
        if lengths.len() != batch || lengths.iter().any(|&l| l == 0 || l > steps) {
            return Err(NnError::Shape(format!("lengths {lengths:?} invalid for {batch}×{steps} batch")));
        }
        let encoder = self.encoder.forward(ids, &self.encoder.zero_state(batch), dropout_rng)?;
        let pooled = self.pool(&encoder.outputs, lengths);
        let (pool_out, pool_norm) = normalize(&self.pool_norm, &pooled.features, mode);
        let hidden_pre = pool_out.dot(&self.hidden_weight.value.t()) + &self.hidden_bias.value;
        let (hidden_out, hidden_norm) = normalize(&self.hidden_norm, &hidden_pre.mapv(|v| v.max(0.0)), mode);
        let logits = hidden_out.dot(&self.out_weight.value.t()) + &self.out_bias.value;
        Ok(ClassifierPass {
            encoder,
            pooled,
            pool_norm,
            pool_out,
            hidden_pre,
            hidden_norm,
            hidden_out,
            logits,
        })
    }

    /// Mean cross-entropy of the batch in training mode; accumulates gradients
    /// for every parameter and advances the running statistics.
    pub fn loss_and_grads(
        &mut self,
        ids: ArrayView2<usize>,
        lengths: &[usize],
        labels: &[usize],
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<f64, NnError> {
        let pass = self.forward(ids, lengths, Mode::Train, dropout_rng)?;
        let (loss, d_logits) = softmax_cross_entropy(pass.logits.view(), labels)?;
        if !loss.is_finite() {
            return Err(NnError::NonFinite("classifier loss".into()));
        }
        let (pool_cache, hidden_cache) = (pass.pool_norm.as_ref(), pass.hidden_norm.as_ref());
        let (pool_cache, hidden_cache) = (pool_cache.expect("train mode"), hidden_cache.expect("train mode"));
        self.out_weight.grad += &d_logits.t().dot(&pass.hidden_out);
        self.out_bias.grad += &d_logits.sum_axis(Axis(0));
        let mut d_hidden = self.hidden_norm.backward(hidden_cache, &d_logits.dot(&self.out_weight.value));
        d_hidden.zip_mut_with(&pass.hidden_pre, |d, &z| {
            if z <= 0.0 {
                *d = 0.0;
            }
        });
        self.hidden_weight.grad += &d_hidden.t().dot(&pass.pool_out);
        self.hidden_bias.grad += &d_hidden.sum_axis(Axis(0));
        let d_pool = self
            .pool_norm
            .backward(pool_cache, &d_hidden.dot(&self.hidden_weight.value));
        self.pool_norm.update_running(pool_cache);
        self.hidden_norm.update_running(hidden_cache);

        let (steps, batch, h) = pass.encoder.outputs.dim();
        let mut d_out = Array3::zeros((steps, batch, h));
        for (b, &len) in lengths.iter().enumerate() {
            let mut last = d_out.slice_mut(s![len - 1, b, ..]);
            last += &d_pool.slice(s![b, 0..h]);
            if self.pooling == Pooling::Concat {
                let mean: Array1<f64> = d_pool.slice(s![b, h..2 * h]).mapv(|v| v / len as f64);
                for t in 0..len {
                    let mut row = d_out.slice_mut(s![t, b, ..]);
                    row += &mean;
                }
                for k in 0..h {
                    d_out[[pass.pooled.argmax[[b, k]], b, k]] += d_pool[[b, 2 * h + k]];
                }
            }
        }
        self.encoder.backward(&pass.encoder, d_out);
        Ok(loss)
    }

    /// Replaces the running statistics of both normalization layers with the
    /// exact population statistics of `sequences` under the current weights.
    pub fn recalibrate_norms(&mut self, sequences: &[Vec<usize>], batch_size: usize) -> Result<(), NnError> {
        if sequences.is_empty() {
            return Ok(());
        }
        let examples: Vec<(Vec<usize>, usize)> = sequences.iter().map(|s| (s.clone(), 0)).collect();
        let batches = crate::text::make_classifier_batches(&examples, batch_size.max(1), crate::text::PAD_ID)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        let mut rows = Vec::with_capacity(batches.len());
        for batch in &batches {
            let pass = self.encoder.forward(batch.ids.view(), &self.encoder.zero_state(batch.len()), None)?;
            rows.push(self.pool(&pass.outputs, &batch.lengths).features);
        }
        let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
        let pooled = ndarray::concatenate(Axis(0), &views).expect("equal widths");
        set_population_stats(&mut self.pool_norm, &pooled);
        let hidden = (self.pool_norm.forward_eval(&pooled).dot(&self.hidden_weight.value.t()) + &self.hidden_bias.value)
            .mapv(|v| v.max(0.0));
        set_population_stats(&mut self.hidden_norm, &hidden);
        Ok(())
    }

    /// Inference logits: running statistics, no dropout.
    pub fn logits(&self, ids: ArrayView2<usize>, lengths: &[usize]) -> Result<Array2<f64>, NnError> {
        Ok(self.forward(ids, lengths, Mode::Eval, None)?.logits)
    }

    /// Predicted class of each sequence, evaluated in batches of `batch_size`.
    pub fn predict(&self, sequences: &[Vec<usize>], batch_size: usize) -> Result<Vec<usize>, NnError> {
        let mut preds = vec![0; sequences.len()];
        if sequences.is_empty() {
            return Ok(preds);
        }
        let examples: Vec<(Vec<usize>, usize)> = sequences.iter().map(|s| (s.clone(), 0)).collect();
        let batches = crate::text::make_classifier_batches(&examples, batch_size.max(1), crate::text::PAD_ID)
            .map_err(|e| NnError::Shape(e.to_string()))?;
        for batch in batches {
            let logits = self.logits(batch.ids.view(), &batch.lengths)?;
            for (row, &i) in logits.rows().into_iter().zip(&batch.indices) {
                // ties go to class 0
                preds[i] = usize::from(row[1] > row[0]);
            }
        }
        Ok(preds)
    }
}

fn set_population_stats(bn: &mut BatchNorm, x: &Array2<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let var = (x - &mean).mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty");
    bn.running_mean.value.assign(&mean);
    bn.running_var.value.assign(&var);
}

impl Parameters for ClassifierModel {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        self.encoder.collect_params(&mut out);
        out.extend(self.pool_norm.params());
        out.extend([self.hidden_weight.as_ref(), self.hidden_bias.as_ref()]);
        out.extend(self.hidden_norm.params());
        out.extend([self.out_weight.as_ref(), self.out_bias.as_ref()]);
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        self.encoder.collect_params_mut(&mut out);
        out.extend(self.pool_norm.params_mut());
        out.extend([self.hidden_weight.as_mut(), self.hidden_bias.as_mut()]);
        out.extend(self.hidden_norm.params_mut());
        out.extend([self.out_weight.as_mut(), self.out_bias.as_mut()]);
        out
    }
}

/// Which parameters train when the top `unfrozen` LSTM layers are open
/// (`None` opens everything, embedding included). The head always trains.
pub fn unfreeze_predicate(num_layers: usize, unfrozen: Option<usize>) -> impl Fn(&str) -> bool {
    move |name: &str| {
        if name.starts_with("head.") {
            return true;
        }
        let Some(n) = unfrozen else {
            return true;
        };
        if n >= num_layers && name == "embedding" {
            return true;
        }
        name.strip_prefix("lstm.")
            .and_then(|rest| rest.split('.').next())
            .and_then(|l| l.parse::<usize>().ok())
            .is_some_and(|l| l + n >= num_layers)
    }
}

/// Training-mode gradient check of the classifier loss on one batch, without
/// dropout. Probes that move a max-pool winner or flip a ReLU get a smaller step.
pub fn check_classifier_gradients(
    model: &mut ClassifierModel,
    ids: ArrayView2<usize>,
    lengths: &[usize],
    labels: &[usize],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheckReport, NnError> {
    gradient_check_piecewise(model, epsilon, samples, seed, |m| {
        let pattern = m.forward(ids, lengths, Mode::Train, None)?.activation_pattern();
        Ok((m.loss_and_grads(ids, lengths, labels, None)?, pattern))
    })
}
