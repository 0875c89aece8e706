//! Embedding + stacked LSTM encoder and the next-token language model on top of it.

use ndarray::{Array2, Array3, ArrayView2, Axis, Ix1, Ix2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{row_nll, softmax_cross_entropy};
use super::lstm::{LstmCache, LstmLayer, LstmState};
use super::{NnError, Param, ParamMut, ParamRef, Parameters};
use crate::text::LmBatch;

/// Architecture of the shared encoder and the LM decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    /// Decoder reuses the embedding matrix; the top layer then has `embed_dim` units.
    pub tie_weights: bool,
    /// Inter-layer dropout, training only.
    pub dropout: f64,
}

impl LmConfig {
    /// Desk-scale defaults: d=100, 3×256 LSTM, untied, dropout 0.1.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 100,
            hidden_size: 256,
            num_layers: 3,
            tie_weights: false,
            dropout: 0.1,
        }
    }

    /// `(input, hidden)` for each layer, bottom first.
    pub fn layer_sizes(&self) -> Vec<(usize, usize)> {
        (0..self.num_layers)
            .map(|l| {
                let input = if l == 0 { self.embed_dim } else { self.hidden_size };
                let hidden = if self.tie_weights && l + 1 == self.num_layers {
                    self.embed_dim
                } else {
                    self.hidden_size
                };
                (input, hidden)
            })
            .collect()
    }

    pub fn top_hidden(&self) -> usize {
        self.layer_sizes().last().map_or(0, |&(_, h)| h)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_size == 0 || self.num_layers == 0 {
            return Err(NnError::Config("vocab, embedding, hidden and layer counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Token embedding followed by the LSTM stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    /// `vocab × embed_dim`
    pub embedding: Param<Ix2>,
    pub layers: Vec<LstmLayer>,
    pub dropout: f64,
}

/// Everything the encoder's backward pass needs.
#[derive(Debug, Clone)]
pub struct EncoderPass {
    /// Top-layer hidden states, `time × batch × hidden`.
    pub outputs: Array3<f64>,
    /// Final state per layer, for carrying into the next window.
    pub state: Vec<LstmState>,
    ids: Array2<usize>,
    caches: Vec<LstmCache>,
    /// Inverted-dropout masks applied to the outputs of every layer but the top.
    masks: Vec<Option<Array3<f64>>>,
}

impl Encoder {
    pub fn zeros(config: &LmConfig) -> Self {
        Self {
            embedding: Param::zeros("embedding", (config.vocab_size, config.embed_dim)),
            layers: config
                .layer_sizes()
                .into_iter()
                .enumerate()
                .map(|(l, (i, h))| LstmLayer::zeros(&format!("lstm.{l}"), i, h))
                .collect(),
            dropout: config.dropout,
        }
    }

    pub fn init<R: Rng>(config: &LmConfig, rng: &mut R) -> Self {
        Self {
            embedding: Param::uniform("embedding", (config.vocab_size, config.embed_dim), 0.1, rng),
            layers: config
                .layer_sizes()
                .into_iter()
                .enumerate()
                .map(|(l, (i, h))| LstmLayer::init(&format!("lstm.{l}"), i, h, rng))
                .collect(),
            dropout: config.dropout,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.value.nrows()
    }

    pub fn top_hidden(&self) -> usize {
        self.layers.last().map_or(0, LstmLayer::hidden_size)
    }

    pub fn zero_state(&self, batch: usize) -> Vec<LstmState> {
        self.layers.iter().map(|l| LstmState::zeros(batch, l.hidden_size())).collect()
    }

    pub fn collect_params<'a>(&'a self, out: &mut Vec<ParamRef<'a>>) {
        out.push(self.embedding.as_ref());
        for l in &self.layers {
            out.extend(l.params());
        }
    }

    pub fn collect_params_mut<'a>(&'a mut self, out: &mut Vec<ParamMut<'a>>) {
        out.push(self.embedding.as_mut());
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
    }

    /// Runs `ids` (`batch × time`) through the stack starting from `state`.
    /// Dropout is applied only when an RNG is supplied.
    pub fn forward(
        &self,
        ids: ArrayView2<usize>,
        state: &[LstmState],
        mut dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<EncoderPass, NnError> {
        let (batch, steps) = ids.dim();
        let vocab = self.vocab_size();
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(NnError::TokenOutOfRange { id: bad, vocab });
        }
        if state.len() != self.layers.len() {
            return Err(NnError::Shape(format!(
                "{} carried states for {} layers",
                state.len(),
                self.layers.len()
            )));
        }
        let ids_tb = ids.t().to_owned();
        let dim = self.embedding.value.ncols();
        let mut x = Array3::from_shape_fn((steps, batch, dim), |(t, b, k)| self.embedding.value[[ids_tb[[t, b]], k]]);

        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut final_state = Vec::with_capacity(self.layers.len());
        let top = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(&x, &state[l])?;
            let mut hidden = out.hidden;
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if l < top && self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let mask = Array3::from_shape_simple_fn(hidden.raw_dim(), || {
                        if rng.gen::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    });
                    hidden *= &mask;
                    Some(mask)
                }
                _ => None,
            };
            caches.push(out.cache);
            masks.push(mask);
            final_state.push(out.state);
            x = hidden;
        }
        Ok(EncoderPass {
            outputs: x,
            state: final_state,
            ids: ids_tb,
            caches,
            masks,
        })
    }

    /// Accumulates gradients given `d_outputs` for the top-layer states.
    pub fn backward(&mut self, pass: &EncoderPass, d_outputs: Array3<f64>) {
        let mut d = d_outputs;
        for l in (0..self.layers.len()).rev() {
            if let Some(mask) = &pass.masks[l] {
                d *= mask;
            }
            d = self.layers[l].backward(&pass.caches[l], &d);
        }
        for ((t, b), &id) in pass.ids.indexed_iter() {
            let mut row = self.embedding.grad.row_mut(id);
            row += &d.slice(ndarray::s![t, b, ..]);
        }
    }
}

/// Loss and carried state from one training window.
#[derive(Debug, Clone)]
pub struct LmStep {
    pub loss: f64,
    pub state: Vec<LstmState>,
}

/// Next-token language model: encoder plus a linear decoder over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    config: LmConfig,
    pub encoder: Encoder,
    /// `vocab × top_hidden`; `None` when tied to the embedding.
    pub decoder_weight: Option<Param<Ix2>>,
    pub decoder_bias: Param<Ix1>,
}

impl LanguageModel {
    pub fn zeros(config: LmConfig) -> Result<Self, NnError> {
        config.validate()?;
        let encoder = Encoder::zeros(&config);
        let decoder_weight = (!config.tie_weights).then(|| Param::zeros("decoder.weight", (config.vocab_size, config.top_hidden())));
        Ok(Self {
            decoder_bias: Param::zeros("decoder.bias", config.vocab_size),
            encoder,
            decoder_weight,
            config,
        })
    }

    /// Fresh model with the standard initialization, seeded.
    pub fn new(config: LmConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::init(&config, &mut rng);
        let top = config.top_hidden();
        let decoder_weight = (!config.tie_weights)
            .then(|| Param::uniform("decoder.weight", (config.vocab_size, top), 1.0 / (top as f64).sqrt(), &mut rng));
        Ok(Self {
            decoder_bias: Param::zeros("decoder.bias", config.vocab_size),
            encoder,
            decoder_weight,
            config,
        })
    }

    /// Reassembles a model from parts; shapes are checked against `config`.
    pub fn from_parts(
        config: LmConfig,
        encoder: Encoder,
        decoder_weight: Option<Param<Ix2>>,
        decoder_bias: Param<Ix1>,
    ) -> Result<Self, NnError> {
        let mut model = Self::zeros(config)?;
        let fresh = model.params().iter().map(|p| (p.name.to_string(), p.shape.to_vec())).collect::<Vec<_>>();
        model.encoder = encoder;
        model.decoder_weight = decoder_weight;
        model.decoder_bias = decoder_bias;
        let got = model.params().iter().map(|p| (p.name.to_string(), p.shape.to_vec())).collect::<Vec<_>>();
        if fresh != got {
            return Err(NnError::Shape("parameter layout does not match the configuration".into()));
        }
        Ok(model)
    }

    pub fn config(&self) -> &LmConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    pub fn decoder_matrix(&self) -> &Array2<f64> {
        match &self.decoder_weight {
            Some(w) => &w.value,
            None => &self.encoder.embedding.value,
        }
    }

    pub fn zero_state(&self, batch: usize) -> Vec<LstmState> {
        self.encoder.zero_state(batch)
    }

    /// Decoder logits with rows in time-major order (`t·batch + b`).
    fn decode(&self, outputs: &Array3<f64>) -> Array2<f64> {
        let (t, b, h) = outputs.dim();
        let flat = outputs.to_shape((t * b, h)).expect("contiguous");
        flat.dot(&self.decoder_matrix().t()) + &self.decoder_bias.value
    }

    fn flat_targets(targets: ArrayView2<usize>) -> Vec<usize> {
        // time-major to match `decode`
        targets.t().iter().copied().collect()
    }

    /// Mean next-token cross-entropy over the window; accumulates exact BPTT
    /// gradients into every parameter. The returned state is detached.
    pub fn loss_and_grads(
        &mut self,
        batch: &LmBatch,
        state: &[LstmState],
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<LmStep, NnError> {
        let pass = self.encoder.forward(batch.inputs.view(), state, dropout_rng)?;
        let logits = self.decode(&pass.outputs);
        let targets = Self::flat_targets(batch.targets.view());
        let (loss, d_logits) = softmax_cross_entropy(logits.view(), &targets)?;
        if !loss.is_finite() {
            return Err(NnError::NonFinite("language model loss".into()));
        }

        let (t, b, h) = pass.outputs.dim();
        let flat = pass.outputs.to_shape((t * b, h)).expect("contiguous");
        let d_w = d_logits.t().dot(&flat);
        match &mut self.decoder_weight {
            Some(w) => w.grad += &d_w,
            None => self.encoder.embedding.grad += &d_w,
        }
        self.decoder_bias.grad += &d_logits.sum_axis(Axis(0));
        let d_out = d_logits
            .dot(self.decoder_matrix())
            .into_shape_with_order((t, b, h))
            .expect("decoder gradient reshapes to the output grid");
        self.encoder.backward(&pass, d_out);
        Ok(LmStep {
            loss,
            state: pass.state,
        })
    }

    /// Summed negative log-likelihood of the window without gradients.
    pub fn window_nll(&self, batch: &LmBatch, state: &[LstmState]) -> Result<(f64, Vec<LstmState>), NnError> {
        let pass = self.encoder.forward(batch.inputs.view(), state, None)?;
        let logits = self.decode(&pass.outputs);
        let nll = row_nll(logits.view(), &Self::flat_targets(batch.targets.view()))?;
        Ok((nll.sum(), pass.state))
    }

    /// `exp(mean NLL)` of each token given its prefix, streamed through
    /// windows of `bptt_len` with the state carried across windows.
    pub fn perplexity(&self, ids: &[usize], bptt_len: usize) -> Result<f64, NnError> {
        if ids.len() < 2 {
            return Err(NnError::EmptyCorpus);
        }
        let bptt_len = bptt_len.max(1);
        let mut state = self.zero_state(1);
        let mut total = 0.0;
        let mut start = 0;
        while start + 1 < ids.len() {
            let len = bptt_len.min(ids.len() - 1 - start);
            let batch = LmBatch {
                inputs: Array2::from_shape_vec((1, len), ids[start..start + len].to_vec()).expect("1×len"),
                targets: Array2::from_shape_vec((1, len), ids[start + 1..start + 1 + len].to_vec()).expect("1×len"),
            };
            let (nll, next) = self.window_nll(&batch, &state)?;
            total += nll;
            state = next;
            start += len;
        }
        let ppl = (total / (ids.len() - 1) as f64).exp();
        if ppl.is_finite() {
            Ok(ppl)
        } else {
            Err(NnError::NonFinite("perplexity".into()))
        }
    }
}

impl Parameters for LanguageModel {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        self.encoder.collect_params(&mut out);
        if let Some(w) = &self.decoder_weight {
            out.push(w.as_ref());
        }
        out.push(self.decoder_bias.as_ref());
        out
    }

    fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        self.encoder.collect_params_mut(&mut out);
        if let Some(w) = &mut self.decoder_weight {
            out.push(w.as_mut());
        }
        out.push(self.decoder_bias.as_mut());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(tie: bool) -> LmConfig {
        LmConfig {
            vocab_size: 7,
            embed_dim: 4,
            hidden_size: 5,
            num_layers: 2,
            tie_weights: tie,
            dropout: 0.0,
        }
    }

    fn batch() -> LmBatch {
        LmBatch {
            inputs: array![[1, 2, 3], [4, 5, 6]],
            targets: array![[2, 3, 4], [5, 6, 0]],
        }
    }

    #[test]
    fn zero_model_loss_is_log_vocab() {
        let mut m = LanguageModel::zeros(tiny(false)).unwrap();
        let step = m.loss_and_grads(&batch(), &m.zero_state(2), None).unwrap();
        assert!((step.loss - 7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_model_perplexity_is_vocab_size() {
        let m = LanguageModel::zeros(tiny(false)).unwrap();
        let ppl = m.perplexity(&[1, 2, 3, 4, 5, 6, 0, 1, 2], 4).unwrap();
        assert!((ppl - 7.0).abs() < 1e-9);
        assert!(matches!(m.perplexity(&[1], 4), Err(NnError::EmptyCorpus)));
    }

    #[test]
    fn two_token_corpus_with_hand_set_decoder() {
        // zero encoder => top states are 0, so logits equal the decoder bias
        let mut m = LanguageModel::zeros(tiny(false)).unwrap();
        m.decoder_bias.value.assign(&array![0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        let ppl = m.perplexity(&[1, 2], 8).unwrap();
        // -log p(2) with logits [0,1,2,0,0,0,0]: log(5 + e + e^2) - 2
        let expected = ((5.0 + 1f64.exp() + 2f64.exp()).ln() - 2.0).exp();
        assert!((ppl - expected).abs() < 1e-12);
        assert!((ppl - 2.044_555_857_354_505).abs() < 1e-12);
    }

    #[test]
    fn tied_model_has_no_decoder_weight() {
        let m = LanguageModel::new(tiny(true), 3).unwrap();
        assert!(m.decoder_weight.is_none());
        assert_eq!(m.config().top_hidden(), 4);
        let names: Vec<_> = m.params().iter().map(|p| p.name.to_string()).collect();
        assert_eq!(
            names,
            [
                "embedding", "lstm.0.w_x", "lstm.0.w_h", "lstm.0.bias", "lstm.1.w_x", "lstm.1.w_h", "lstm.1.bias",
                "decoder.bias"
            ]
        );
    }

    #[test]
    fn forward_is_deterministic() {
        let mut a = LanguageModel::new(tiny(false), 11).unwrap();
        let mut b = LanguageModel::new(tiny(false), 11).unwrap();
        assert_eq!(a, b);
        let la = a.loss_and_grads(&batch(), &a.zero_state(2), None).unwrap().loss;
        let lb = b.loss_and_grads(&batch(), &b.zero_state(2), None).unwrap().loss;
        assert_eq!(la.to_bits(), lb.to_bits());
    }

    #[test]
    fn out_of_range_token() {
        let mut m = LanguageModel::zeros(tiny(false)).unwrap();
        let bad = LmBatch {
            inputs: array![[7]],
            targets: array![[0]],
        };
        assert!(matches!(
            m.loss_and_grads(&bad, &m.zero_state(1), None),
            Err(NnError::TokenOutOfRange { id: 7, vocab: 7 })
        ));
    }

    #[test]
    fn dropout_masks_only_with_rng() {
        let mut cfg = tiny(false);
        cfg.dropout = 0.5;
        let m = LanguageModel::new(cfg, 5).unwrap();
        let plain = m.encoder.forward(batch().inputs.view(), &m.zero_state(2), None).unwrap();
        let again = m.encoder.forward(batch().inputs.view(), &m.zero_state(2), None).unwrap();
        assert_eq!(plain.outputs, again.outputs);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dropped = m.encoder.forward(batch().inputs.view(), &m.zero_state(2), Some(&mut rng)).unwrap();
        assert_ne!(plain.outputs, dropped.outputs);
    }

    #[test]
    fn invalid_config() {
        let mut cfg = tiny(false);
        cfg.num_layers = 0;
        assert!(LanguageModel::zeros(cfg).is_err());
        let mut cfg = tiny(false);
        cfg.dropout = 1.0;
        assert!(LanguageModel::new(cfg, 0).is_err());
    }
}
