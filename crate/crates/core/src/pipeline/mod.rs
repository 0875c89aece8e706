//! The three training stages: general LM pretraining, opinion LM fine-tuning
//! and classifier fine-tuning, plus the checkpoint handoff between them.

mod classifier;
mod config;

use std::io::BufRead;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use classifier::{
    check_classifier_gradients, unfreeze_predicate, ClassifierModel, ClassifierPass, HeadConfig, Mode, Pooling,
    DEFAULT_HEAD_HIDDEN, NUM_CLASSES, OUT_INIT_SCALE,
};
pub use config::{slanted_triangular, FreezeStep, Schedule, StageConfig};

use crate::nn::{
    clip_grad_norm, Architecture, Checkpoint, CheckpointError, LanguageModel, LmConfig, NnError, Optimizer,
    OptimizerKind, Param, Parameters, Stage,
};
use crate::text::{make_classifier_batches, make_lm_batches, TextConfig, TextError, Vocabulary, PAD_ID};

/// Global gradient-norm bound applied before every update.
pub const CLIP_NORM: f64 = 0.25;
/// Fraction of the general corpus held out for validation perplexity.
pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid stage configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A sentence with its claim label (1 = claim, 0 = non-claim).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub label: usize,
    pub text: String,
}

/// Reads `label<TAB>text` lines. Labels are `1`/`0` or `claim`/`non_claim`;
/// a leading `label<TAB>text` header is skipped.
pub fn read_labeled<R: BufRead>(reader: R) -> Result<Vec<LabeledSentence>, PipelineError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (n == 0 && line.starts_with("label\t")) {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| PipelineError::Data(format!("line {}: expected label<TAB>text", n + 1)))?;
        let label = match label.trim() {
            "1" | "claim" => 1,
            "0" | "non_claim" => 0,
            other => return Err(PipelineError::Data(format!("line {}: unknown label {other:?}", n + 1))),
        };
        out.push(LabeledSentence {
            label,
            text: text.to_string(),
        });
    }
    Ok(out)
}

pub fn read_labeled_file(path: &Path) -> Result<Vec<LabeledSentence>, PipelineError> {
    read_labeled(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Token ids (`<bos> … <eos>`) and label for every sentence.
pub fn encode_labeled(data: &[LabeledSentence], vocab: &Vocabulary, text: TextConfig) -> Vec<(Vec<usize>, usize)> {
    data.iter()
        .map(|s| (text.encode_sentence(&s.text, vocab), s.label))
        .collect()
}

/// Splits off the last `⌊n·fraction⌋` sentences as a validation set.
pub fn holdout_split<T>(items: &[T], fraction: f64) -> (&[T], &[T]) {
    let n_valid = (items.len() as f64 * fraction).floor() as usize;
    items.split_at(items.len() - n_valid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_perplexity: f64,
    pub valid_perplexity: Option<f64>,
    pub last_lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub unfrozen_layers: Option<usize>,
    pub last_lr: f64,
}

/// Language model tagged with the stage that produced it.
#[derive(Debug, Clone)]
pub struct TrainedLm {
    pub model: LanguageModel,
    pub stage: Stage,
    pub history: Vec<LmEpoch>,
}

impl TrainedLm {
    pub fn checkpoint(&self, vocab: &Vocabulary) -> Checkpoint {
        lm_checkpoint(&self.model, self.stage, vocab)
    }
}

pub fn lm_checkpoint(model: &LanguageModel, stage: Stage, vocab: &Vocabulary) -> Checkpoint {
    Checkpoint::capture(
        model,
        stage,
        vocab.content_hash(),
        Architecture::LanguageModel {
            encoder: model.config().clone(),
        },
    )
}

pub fn classifier_checkpoint(model: &ClassifierModel, vocab: &Vocabulary) -> Checkpoint {
    let head = model.head_config();
    Checkpoint::capture(
        model,
        Stage::Classifier,
        vocab.content_hash(),
        Architecture::Classifier {
            encoder: model.encoder_config().clone(),
            head_hidden: head.hidden,
            pooling: head.pooling,
        },
    )
}

/// Rebuilds a language model from a checkpoint written against `vocab`.
pub fn load_lm(checkpoint: &Checkpoint, vocab: &Vocabulary) -> Result<LanguageModel, PipelineError> {
    checkpoint.check_vocab(vocab)?;
    let Architecture::LanguageModel { encoder } = &checkpoint.header.architecture else {
        return Err(CheckpointError::StageMismatch {
            expected: "a language model".into(),
            found: checkpoint.stage(),
        }
        .into());
    };
    let mut model = LanguageModel::zeros(encoder.clone())?;
    checkpoint.restore_into(&mut model)?;
    Ok(model)
}

pub fn load_classifier(checkpoint: &Checkpoint, vocab: &Vocabulary) -> Result<ClassifierModel, PipelineError> {
    checkpoint.check_vocab(vocab)?;
    let Architecture::Classifier {
        encoder,
        head_hidden,
        pooling,
    } = &checkpoint.header.architecture
    else {
        return Err(CheckpointError::StageMismatch {
            expected: Stage::Classifier.to_string(),
            found: checkpoint.stage(),
        }
        .into());
    };
    let mut model = ClassifierModel::new(
        crate::nn::Encoder::zeros(encoder),
        encoder.clone(),
        HeadConfig {
            hidden: *head_hidden,
            pooling: *pooling,
        },
        0,
    );
    checkpoint.restore_into(&mut model)?;
    Ok(model)
}

/// Trains `model` on the token stream `train` with Adam, the configured
/// schedule and gradient clipping; reports validation perplexity on `valid`
/// after every epoch when it has at least two tokens.
pub fn train_lm(
    model: &mut LanguageModel,
    train: &[usize],
    valid: &[usize],
    config: &StageConfig,
) -> Result<Vec<LmEpoch>, PipelineError> {
    config.validate()?;
    if train.len() < 2 {
        return Err(PipelineError::Data("training stream needs at least two tokens".into()));
    }
    let batch_size = config.batch_size.min(train.len() / 2).max(1);
    if batch_size < config.batch_size {
        log::warn!("training stream of {} tokens; batch size reduced to {batch_size}", train.len());
    }
    let batches = make_lm_batches(train, batch_size, config.bptt_len)?;
    let total = config.epochs * batches.len();
    let mut optimizer = Optimizer::new(OptimizerKind::adam());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut state = model.zero_state(batch_size);
        let (mut nll, mut count) = (0.0, 0usize);
        let mut lr = config.lr_max;
        for batch in &batches {
            lr = config.learning_rate(step, total)?;
            let out = model.loss_and_grads(batch, &state, Some(&mut dropout_rng))?;
            state = out.state;
            let tokens = batch.inputs.len();
            nll += out.loss * tokens as f64;
            count += tokens;
            let mut params = model.params_mut();
            clip_grad_norm(&mut params, CLIP_NORM);
            optimizer.step(&mut params, lr, &crate::nn::all_trainable)?;
            step += 1;
        }
        let train_loss = nll / count as f64;
        let valid_perplexity = if valid.len() >= 2 {
            Some(model.perplexity(valid, config.bptt_len)?)
        } else {
            None
        };
        log::info!(
            "epoch {epoch}: train ppl {:.3}{}",
            train_loss.exp(),
            valid_perplexity.map(|p| format!(", valid ppl {p:.3}")).unwrap_or_default()
        );
        history.push(LmEpoch {
            epoch,
            train_loss,
            train_perplexity: train_loss.exp(),
            valid_perplexity,
            last_lr: lr,
        });
    }
    Ok(history)
}

fn sentence_stream<S: AsRef<str>>(sentences: &[S], vocab: &Vocabulary, text: TextConfig) -> Vec<usize> {
    text.encode_stream(sentences.iter().map(|s| s.as_ref()), vocab)
}

/// Stage one: a language model trained from scratch on the general corpus.
pub fn pretrain_general<S: AsRef<str>>(
    train: &[S],
    valid: &[S],
    vocab: &Vocabulary,
    architecture: &LmConfig,
    config: &StageConfig,
    text: TextConfig,
) -> Result<TrainedLm, PipelineError> {
    if architecture.vocab_size != vocab.len() {
        return Err(PipelineError::Config(format!(
            "architecture vocabulary {} differs from vocabulary size {}",
            architecture.vocab_size,
            vocab.len()
        )));
    }
    let mut model = LanguageModel::new(architecture.clone(), config.seed)?;
    let history = train_lm(
        &mut model,
        &sentence_stream(train, vocab, text),
        &sentence_stream(valid, vocab, text),
        config,
    )?;
    Ok(TrainedLm {
        model,
        stage: Stage::General,
        history,
    })
}

/// Re-indexes a language model onto `new` vocabulary. Shared tokens keep
/// their rows; new tokens get the mean of all old rows (embedding and untied
/// decoder) and the mean old decoder bias.
pub fn transfer_vocab(model: &LanguageModel, old: &Vocabulary, new: &Vocabulary) -> Result<LanguageModel, PipelineError> {
    if old.len() != model.vocab_size() {
        return Err(PipelineError::Config(format!(
            "model has {} rows but the old vocabulary has {} entries",
            model.vocab_size(),
            old.len()
        )));
    }
    let remap = |m: &Array2<f64>| -> Array2<f64> {
        let mean = m.mean_axis(Axis(0)).expect("vocabulary is non-empty");
        let mut out = Array2::zeros((new.len(), m.ncols()));
        for (id, mut row) in out.rows_mut().into_iter().enumerate() {
            match new.token(id).and_then(|t| old.id(t)) {
                Some(old_id) => row.assign(&m.row(old_id)),
                None => row.assign(&mean),
            }
        }
        out
    };
    let old_bias = &model.decoder_bias.value;
    let mean_bias = old_bias.mean().expect("vocabulary is non-empty");
    let bias: Array1<f64> = (0..new.len())
        .map(|id| new.token(id).and_then(|t| old.id(t)).map_or(mean_bias, |o| old_bias[o]))
        .collect();

    let mut config = model.config().clone();
    config.vocab_size = new.len();
    let mut encoder = model.encoder.clone();
    encoder.embedding = Param::new("embedding", remap(&model.encoder.embedding.value));
    let decoder_weight = model
        .decoder_weight
        .as_ref()
        .map(|w| Param::new("decoder.weight", remap(&w.value)));
    Ok(LanguageModel::from_parts(
        config,
        encoder,
        decoder_weight,
        Param::new("decoder.bias", bias),
    )?)
}

/// Stage two: continues training a stage-one model on the opinion corpus.
#[allow(clippy::too_many_arguments)]
pub fn finetune_lm<S: AsRef<str>>(
    general: &LanguageModel,
    general_stage: Stage,
    general_vocab: &Vocabulary,
    vocab: &Vocabulary,
    train: &[S],
    valid: &[S],
    config: &StageConfig,
    text: TextConfig,
) -> Result<TrainedLm, PipelineError> {
    if general_stage != Stage::General {
        return Err(CheckpointError::StageMismatch {
            expected: Stage::General.to_string(),
            found: general_stage,
        }
        .into());
    }
    let mut model = transfer_vocab(general, general_vocab, vocab)?;
    let history = train_lm(
        &mut model,
        &sentence_stream(train, vocab, text),
        &sentence_stream(valid, vocab, text),
        config,
    )?;
    Ok(TrainedLm {
        model,
        stage: Stage::Imho,
        history,
    })
}

/// Puts a fresh classification head on a language model's encoder.
pub fn build_classifier(lm: &LanguageModel, stage: Stage, head: HeadConfig, seed: u64) -> Result<ClassifierModel, PipelineError> {
    if stage == Stage::Classifier {
        return Err(CheckpointError::StageMismatch {
            expected: "a language model".into(),
            found: stage,
        }
        .into());
    }
    Ok(ClassifierModel::new(lm.encoder.clone(), lm.config().clone(), head, seed))
}

/// Stage three: fine-tunes `model` on labelled token sequences with gradual
/// unfreezing. Every epoch reshuffles the examples into fresh mini-batches
/// (seeded); each batch is length-sorted and padded. Normalization statistics
/// are recomputed over the training set at the end.
pub fn train_classifier(
    model: &mut ClassifierModel,
    examples: &[(Vec<usize>, usize)],
    config: &StageConfig,
) -> Result<Vec<ClassifierEpoch>, PipelineError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(PipelineError::Data("no training examples".into()));
    }
    if let Some(&(_, bad)) = examples.iter().find(|(_, l)| *l >= NUM_CLASSES) {
        return Err(PipelineError::Data(format!("label {bad} is not 0 or 1")));
    }
    if examples.iter().all(|(_, l)| *l == examples[0].1) {
        log::warn!("training data contains a single class ({})", examples[0].1);
    }
    let per_epoch = examples.len().div_ceil(config.batch_size);
    let total = config.epochs * per_epoch;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut optimizer = Optimizer::new(OptimizerKind::adam());
    let layers = model.num_layers();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let unfrozen = config.unfrozen_layers(epoch);
        let trainable = unfreeze_predicate(layers, unfrozen);
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let mut lr = config.lr_max;
        for chunk in order.chunks(config.batch_size) {
            let picked: Vec<(Vec<usize>, usize)> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let batch = make_classifier_batches(&picked, picked.len(), PAD_ID)?.remove(0);
            lr = config.learning_rate(step, total)?;
            let loss = model.loss_and_grads(batch.ids.view(), &batch.lengths, &batch.labels, Some(&mut dropout_rng))?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            let mut params = model.params_mut();
            clip_grad_norm(&mut params, CLIP_NORM);
            optimizer.step(&mut params, lr, &trainable)?;
            step += 1;
        }
        history.push(ClassifierEpoch {
            epoch,
            train_loss: loss_sum / seen as f64,
            unfrozen_layers: unfrozen,
            last_lr: lr,
        });
    }
    if config.epochs > 0 {
        let sequences: Vec<Vec<usize>> = examples.iter().map(|(ids, _)| ids.clone()).collect();
        model.recalibrate_norms(&sequences, config.batch_size)?;
    }
    Ok(history)
}
