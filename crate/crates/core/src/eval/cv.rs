use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate_runs, ConfusionMatrix, EvalError, EvalReport, FoldAssignment, PerClass, Scores};
use crate::nn::LanguageModel;
use crate::nn::LmConfig;
use crate::pipeline::{encode_labeled, train_classifier, ClassifierModel, HeadConfig, LabeledSentence, StageConfig};
use crate::text::{TextConfig, Vocabulary};

/// Anything that can be trained on one split and predict labels for another.
pub trait System: Sync {
    fn name(&self) -> &str;

    fn fit_predict(&self, train: &[LabeledSentence], test: &[LabeledSentence], seed: u64)
        -> Result<Vec<usize>, EvalError>;
}

/// Always predicts the most frequent training label (ties go to non-claim).
pub struct MajorityClass;

impl System for MajorityClass {
    fn name(&self) -> &str {
        "majority"
    }

    fn fit_predict(&self, train: &[LabeledSentence], test: &[LabeledSentence], _: u64) -> Result<Vec<usize>, EvalError> {
        let claims = train.iter().filter(|s| s.label == 1).count();
        let label = usize::from(2 * claims > train.len());
        Ok(vec![label; test.len()])
    }
}

/// Where the classifier's encoder comes from.
#[derive(Debug, Clone)]
pub enum EncoderInit {
    /// Copy the encoder of a trained language model.
    Pretrained(LanguageModel),
    /// Fresh weights drawn from the fold seed.
    Random(LmConfig),
}

/// Encoder plus concat-pooling head, fine-tuned per fold.
pub struct UlmfitSystem {
    pub name: String,
    pub vocab: Vocabulary,
    pub text: TextConfig,
    pub init: EncoderInit,
    pub head: HeadConfig,
    /// Stage settings; `None` uses the classifier defaults for the training size.
    pub config: Option<StageConfig>,
}

impl UlmfitSystem {
    fn classifier(&self, seed: u64) -> Result<ClassifierModel, EvalError> {
        Ok(match &self.init {
            EncoderInit::Pretrained(lm) => ClassifierModel::new(lm.encoder.clone(), lm.config().clone(), self.head, seed),
            EncoderInit::Random(cfg) => ClassifierModel::from_scratch(cfg.clone(), self.head, seed)?,
        })
    }

    /// Trains on `train` and returns the fitted classifier.
    pub fn fit(&self, train: &[LabeledSentence], seed: u64) -> Result<ClassifierModel, EvalError> {
        let mut config = self.config.clone().unwrap_or_else(|| StageConfig::classifier(train.len()));
        config.seed = seed;
        let mut model = self.classifier(seed)?;
        train_classifier(&mut model, &encode_labeled(train, &self.vocab, self.text), &config)?;
        Ok(model)
    }

    pub fn predict(&self, model: &ClassifierModel, test: &[LabeledSentence]) -> Result<Vec<usize>, EvalError> {
        let ids: Vec<Vec<usize>> = test.iter().map(|s| self.text.encode_sentence(&s.text, &self.vocab)).collect();
        Ok(model.predict(&ids, 64)?)
    }
}

impl System for UlmfitSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit_predict(&self, train: &[LabeledSentence], test: &[LabeledSentence], seed: u64) -> Result<Vec<usize>, EvalError> {
        let model = self.fit(train, seed)?;
        self.predict(&model, test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub run: usize,
    pub fold: usize,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    /// Fold-averaged scores of this run.
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Report file contents: run-averaged scores, their spread, and every run and fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub per_class: PerClass,
    #[serde(rename = "macro")]
    pub macro_avg: Scores,
    pub sd: EvalReport,
    pub runs: Vec<RunResult>,
    pub folds: Vec<FoldResult>,
}

impl CvReport {
    pub fn mean(&self) -> EvalReport {
        EvalReport {
            per_class: self.per_class,
            macro_avg: self.macro_avg,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    /// Run-0 prediction for every example, assembled from the held-out folds.
    pub pooled_predictions: Vec<usize>,
}

/// Runs `runs × k` train/test rounds; run `r` uses seed `base_seed + r`.
/// Scores are averaged over the folds of each run and then over runs.
pub fn cross_validate(
    system: &dyn System,
    data: &[LabeledSentence],
    folds: &FoldAssignment,
    runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<CvOutcome, EvalError> {
    if folds.len() != data.len() {
        return Err(EvalError::LengthMismatch {
            left: folds.len(),
            right: data.len(),
        });
    }
    if runs == 0 {
        return Err(EvalError::Empty("runs"));
    }
    let tasks: Vec<(usize, usize)> = (0..runs).flat_map(|r| (0..folds.k).map(move |f| (r, f))).collect();
    let run_task = |&(run, fold): &(usize, usize)| -> Result<(FoldResult, Vec<usize>, Vec<usize>), EvalError> {
        let (train_idx, test_idx) = folds.split(fold);
        if test_idx.is_empty() {
            return Err(EvalError::BadFolds(format!("fold {fold} is empty")));
        }
        let train: Vec<LabeledSentence> = train_idx.iter().map(|&i| data[i].clone()).collect();
        let test: Vec<LabeledSentence> = test_idx.iter().map(|&i| data[i].clone()).collect();
        let seed = base_seed + run as u64;
        let preds = system.fit_predict(&train, &test, seed)?;
        let golds: Vec<usize> = test.iter().map(|s| s.label).collect();
        let confusion = ConfusionMatrix::from_predictions(&preds, &golds)?;
        log::info!("{} run {run} fold {fold}: claim F1 {:.3}", system.name(), EvalReport::from_confusion(&confusion).per_class.claim.f1);
        Ok((
            FoldResult {
                run,
                fold,
                seed,
                confusion,
                report: EvalReport::from_confusion(&confusion),
            },
            test_idx,
            preds,
        ))
    };
    let results: Vec<_> = if jobs <= 1 {
        tasks.iter().map(run_task).collect::<Result<_, _>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| EvalError::Parallel(e.to_string()))?
            .install(|| tasks.par_iter().map(run_task).collect::<Result<Vec<_>, _>>())?
    };

    let mut pooled = vec![0; data.len()];
    let mut fold_results = Vec::with_capacity(results.len());
    for (fr, idx, preds) in results {
        if fr.run == 0 {
            for (i, p) in idx.into_iter().zip(preds) {
                pooled[i] = p;
            }
        }
        fold_results.push(fr);
    }
    fold_results.sort_by_key(|f| (f.run, f.fold));
    let mut run_results = Vec::with_capacity(runs);
    for run in 0..runs {
        let reports: Vec<EvalReport> = fold_results.iter().filter(|f| f.run == run).map(|f| f.report).collect();
        run_results.push(RunResult {
            run,
            seed: base_seed + run as u64,
            report: aggregate_runs(&reports)?.mean,
        });
    }
    let overall = aggregate_runs(&run_results.iter().map(|r| r.report).collect::<Vec<_>>())?;
    Ok(CvOutcome {
        report: CvReport {
            per_class: overall.mean.per_class,
            macro_avg: overall.mean.macro_avg,
            sd: overall.sd,
            runs: run_results,
            folds: fold_results,
        },
        pooled_predictions: pooled,
    })
}
