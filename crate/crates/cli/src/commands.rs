use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::json;

use claimlab::analysis::TfIdfIndex;
use claimlab::corpus::{mine_corpus, read_corpus_sentences, MineOptions};
use claimlab::eval::{
    chi_squared_test, cross_validate, dataset_stats, format_table, make_folds, EncoderInit, FoldAssignment,
    MajorityClass, System, UlmfitSystem,
};
use claimlab::nn::{Checkpoint, LanguageModel, LmConfig, Stage};
use claimlab::pipeline::{
    build_classifier, classifier_checkpoint, encode_labeled, finetune_lm as finetune_stage, holdout_split, load_lm,
    pretrain_general, read_labeled_file, train_classifier, HeadConfig, LmEpoch, Pooling, Schedule, StageConfig,
    HOLDOUT_FRACTION,
};
use claimlab::text::{TextConfig, Vocabulary};

use crate::manifest::{with_suffix, write_atomic, RunManifest};
use crate::{
    ArchArgs, EvaluateArgs, FinetuneArgs, Format, Global, HeadArgs, MineArgs, NeighborsArgs, PoolingArg,
    PretrainArgs, ScheduleArg, SignificanceArgs, StageArgs, TrainClfArgs, VocabArgs,
};

const DEFAULT_SEED: u64 = 42;

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    fn emit(&self, value: &impl Serialize, table: impl FnOnce() -> String) -> Result<()> {
        let mut out = std::io::stdout().lock();
        match self.format {
            Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
            Format::Table => write!(out, "{}", table())?,
        }
        Ok(())
    }
}

impl StageArgs {
    fn any_set(&self) -> bool {
        self.config.is_some()
            || self.epochs.is_some()
            || self.batch_size.is_some()
            || self.bptt_len.is_some()
            || self.lr_max.is_some()
            || self.schedule.is_some()
    }

    /// `base`, replaced by the config file if one is given, then flag overrides.
    fn resolve(&self, base: StageConfig, seed: Option<u64>) -> Result<StageConfig> {
        let mut cfg = match &self.config {
            Some(path) => StageConfig::from_json_file(path)?,
            None => base,
        };
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.bptt_len {
            cfg.bptt_len = v;
        }
        if let Some(v) = self.lr_max {
            cfg.lr_max = v;
        }
        if let Some(s) = self.schedule {
            cfg.schedule = match s {
                ScheduleArg::Constant => Schedule::Constant,
                ScheduleArg::SlantedTriangular => Schedule::SlantedTriangular,
            };
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ArchArgs {
    fn config(&self, vocab_size: usize) -> LmConfig {
        LmConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_size: self.hidden_size,
            num_layers: self.num_layers,
            tie_weights: self.tie_weights,
            dropout: self.dropout,
        }
    }
}

impl HeadArgs {
    fn config(&self) -> HeadConfig {
        HeadConfig {
            hidden: self.head_hidden,
            pooling: match self.pooling {
                PoolingArg::Concat => Pooling::Concat,
                PoolingArg::Final => Pooling::Final,
            },
        }
    }
}

fn read_sentences(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_corpus_sentences(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Vocabulary::read_tsv(BufReader::new(file)).with_context(|| format!("reading vocabulary {}", path.display()))
}

fn write_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    write_atomic(path, |w| vocab.write_tsv(w))
}

fn sidecar(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".vocab.tsv")
}

/// Loads a language-model checkpoint together with its sidecar vocabulary.
fn load_lm_checkpoint(path: &Path) -> Result<(LanguageModel, Stage, Vocabulary)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let vocab = read_vocab(&sidecar(path))?;
    let lm = load_lm(&ck, &vocab).with_context(|| format!("restoring {}", path.display()))?;
    Ok((lm, ck.stage(), vocab))
}

/// Saves a checkpoint, its sidecar vocabulary and the run manifest.
fn save_model(ck: &Checkpoint, vocab: &Vocabulary, out: &Path, mut manifest: RunManifest) -> Result<()> {
    ck.save(out).with_context(|| format!("writing {}", out.display()))?;
    let side = sidecar(out);
    write_vocab(vocab, &side)?;
    manifest.vocab_hash = Some(vocab.content_hash());
    manifest.output(out)?.output(&side)?;
    manifest.write_beside(out)?;
    Ok(())
}

fn lm_history_table(history: &[LmEpoch]) -> String {
    let mut s = format!("{:<6}{:>12}{:>12}{:>12}\n", "epoch", "train_ppl", "valid_ppl", "lr");
    for e in history {
        let valid = e.valid_perplexity.map_or("-".to_string(), |p| format!("{p:.3}"));
        let _ = writeln!(s, "{:<6}{:>12.3}{:>12}{:>12.2e}", e.epoch, e.train_perplexity, valid, e.last_lr);
    }
    s
}

pub fn mine(g: &Global, a: MineArgs) -> Result<()> {
    ensure!(g.jobs > 0, "--jobs must be at least 1");
    let options = MineOptions {
        dedupe: a.dedupe,
        min_tokens: a.min_tokens,
        plain: a.plain,
        jobs: g.jobs,
    };
    let stats = mine_corpus(&a.inputs, &a.out, options)?;
    let mut manifest = RunManifest::new(
        "mine",
        g.seed(),
        json!({ "dedupe": a.dedupe, "min_tokens": a.min_tokens, "plain": a.plain, "jobs": g.jobs, "stats": stats }),
    )?;
    for p in &a.inputs {
        manifest.input(p)?;
    }
    manifest.output(&a.out)?;
    manifest.write_beside(&a.out)?;
    g.emit(&stats, || {
        format!(
            "lines_read\t{}\nparse_failures\t{}\ncomments_matched\t{}\nsentences_emitted\t{}\nsentences_discarded_short\t{}\nduplicates_dropped\t{}\n",
            stats.lines_read,
            stats.parse_failures,
            stats.comments_matched,
            stats.sentences_emitted,
            stats.sentences_discarded_short,
            stats.duplicates_dropped
        )
    })
}

pub fn vocab(g: &Global, a: VocabArgs) -> Result<()> {
    let text = TextConfig::default();
    let mut sentences = Vec::new();
    for p in &a.corpus {
        sentences.extend(read_sentences(p)?);
    }
    let vocab = Vocabulary::build(sentences.iter().flat_map(|s| text.vocab_tokens(s)), a.max_size, a.min_freq)?;
    write_vocab(&vocab, &a.out)?;
    let mut manifest = RunManifest::new(
        "vocab",
        g.seed(),
        json!({ "max_size": a.max_size, "min_freq": a.min_freq, "text": text }),
    )?;
    for p in &a.corpus {
        manifest.input(p)?;
    }
    manifest.vocab_hash = Some(vocab.content_hash());
    manifest.output(&a.out)?.write_beside(&a.out)?;
    let summary = json!({ "size": vocab.len(), "sentences": sentences.len(), "hash": vocab.content_hash() });
    g.emit(&summary, || {
        format!("size\t{}\nsentences\t{}\nhash\t{}\n", vocab.len(), sentences.len(), vocab.content_hash())
    })
}

pub fn pretrain(g: &Global, a: PretrainArgs) -> Result<()> {
    let text = TextConfig::default();
    let config = a.stage.resolve(StageConfig::language_model(), g.seed)?;
    let vocab = read_vocab(&a.vocab)?;
    let sentences = read_sentences(&a.corpus)?;
    let (train, valid) = holdout_split(&sentences, HOLDOUT_FRACTION);
    let arch = a.arch.config(vocab.len());
    let trained = pretrain_general(train, valid, &vocab, &arch, &config, text)?;
    let mut manifest = RunManifest::new(
        "pretrain",
        config.seed,
        json!({ "stage": config, "architecture": arch, "text": text, "history": trained.history }),
    )?;
    manifest.input(&a.corpus)?.input(&a.vocab)?;
    save_model(&trained.checkpoint(&vocab), &vocab, &a.out, manifest)?;
    g.emit(&trained.history, || lm_history_table(&trained.history))
}

pub fn finetune_lm(g: &Global, a: FinetuneArgs) -> Result<()> {
    let text = TextConfig::default();
    let config = a.stage.resolve(StageConfig::language_model(), g.seed)?;
    let (general, stage, general_vocab) = load_lm_checkpoint(&a.lm)?;
    let vocab = match &a.vocab {
        Some(p) => read_vocab(p)?,
        None => general_vocab.clone(),
    };
    let sentences = read_sentences(&a.corpus)?;
    let (train, valid) = holdout_split(&sentences, HOLDOUT_FRACTION);
    let trained = finetune_stage(&general, stage, &general_vocab, &vocab, train, valid, &config, text)?;
    let mut manifest = RunManifest::new(
        "finetune-lm",
        config.seed,
        json!({ "stage": config, "text": text, "history": trained.history }),
    )?;
    manifest.input(&a.lm)?.input(&sidecar(&a.lm))?.input(&a.corpus)?;
    if let Some(p) = &a.vocab {
        manifest.input(p)?;
    }
    save_model(&trained.checkpoint(&vocab), &vocab, &a.out, manifest)?;
    g.emit(&trained.history, || lm_history_table(&trained.history))
}

pub fn train_clf(g: &Global, a: TrainClfArgs) -> Result<()> {
    let text = TextConfig::default();
    let (lm, stage, vocab) = load_lm_checkpoint(&a.lm)?;
    let data = read_labeled_file(&a.data)?;
    let config = a.stage.resolve(StageConfig::classifier(data.len()), g.seed)?;
    let head = a.head.config();
    let mut model = build_classifier(&lm, stage, head, config.seed)?;
    let history = train_classifier(&mut model, &encode_labeled(&data, &vocab, text), &config)?;
    let mut manifest = RunManifest::new(
        "train-clf",
        config.seed,
        json!({ "stage": config, "head": head, "text": text, "source_stage": stage, "history": history }),
    )?;
    manifest.input(&a.lm)?.input(&sidecar(&a.lm))?.input(&a.data)?;
    save_model(&classifier_checkpoint(&model, &vocab), &vocab, &a.out, manifest)?;
    g.emit(&history, || {
        let mut s = format!("{:<6}{:>12}{:>10}{:>12}\n", "epoch", "train_loss", "unfrozen", "lr");
        for e in &history {
            let unfrozen = e.unfrozen_layers.map_or("all".to_string(), |n| n.to_string());
            let _ = writeln!(s, "{:<6}{:>12.4}{:>10}{:>12.2e}", e.epoch, e.train_loss, unfrozen, e.last_lr);
        }
        s
    })
}

fn load_or_make_folds(g: &Global, path: &Path, labels: &[usize], k: usize, data_path: &Path) -> Result<FoldAssignment> {
    if path.exists() {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let folds = FoldAssignment::read_tsv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
        ensure!(
            folds.len() == labels.len(),
            "{} assigns {} examples but the dataset has {}",
            path.display(),
            folds.len(),
            labels.len()
        );
        return Ok(folds);
    }
    let folds = make_folds(labels, k, g.seed())?;
    write_atomic(path, |w| folds.write_tsv(w))?;
    let mut manifest = RunManifest::new("evaluate", g.seed(), json!({ "k": k }))?;
    manifest.input(data_path)?.output(path)?.write_beside(path)?;
    log::info!("wrote {k} stratified folds to {}", path.display());
    Ok(folds)
}

pub fn evaluate(g: &Global, a: EvaluateArgs) -> Result<()> {
    ensure!(g.jobs > 0, "--jobs must be at least 1");
    let text = TextConfig::default();
    let data = read_labeled_file(&a.data)?;
    let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
    let folds = load_or_make_folds(g, &a.folds, &labels, a.k, &a.data)?;
    let head = a.head.config();
    let config = if a.stage.any_set() {
        let train_size = data.len() - data.len() / folds.k.max(1);
        Some(a.stage.resolve(StageConfig::classifier(train_size), g.seed)?)
    } else {
        None
    };

    let mut inputs = vec![a.data.clone(), a.folds.clone()];
    let system: Box<dyn System> = if a.majority {
        Box::new(MajorityClass)
    } else if let Some(lm_path) = &a.lm {
        let (lm, stage, vocab) = load_lm_checkpoint(lm_path)?;
        ensure!(stage != Stage::Classifier, "{} is a classifier checkpoint", lm_path.display());
        inputs.push(lm_path.clone());
        inputs.push(sidecar(lm_path));
        Box::new(UlmfitSystem {
            name: format!("ulmfit-{stage}"),
            vocab,
            text,
            init: EncoderInit::Pretrained(lm),
            head,
            config: config.clone(),
        })
    } else {
        let vocab_path = a.vocab.as_ref().ok_or_else(|| anyhow!("--random-init needs --vocab"))?;
        let vocab = read_vocab(vocab_path)?;
        inputs.push(vocab_path.clone());
        let arch = a.arch.config(vocab.len());
        arch.validate()?;
        Box::new(UlmfitSystem {
            name: "random-init".into(),
            vocab,
            text,
            init: EncoderInit::Random(arch),
            head,
            config: config.clone(),
        })
    };

    let outcome = cross_validate(system.as_ref(), &data, &folds, a.runs, g.seed(), g.jobs)?;
    let manifest_config = json!({
        "system": system.name(),
        "runs": a.runs,
        "k": folds.k,
        "stage": config,
        "head": head,
        "architecture": a.random_init.then(|| a.arch.config(0)),
        "jobs": g.jobs,
    });
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        write_atomic(out, |w| {
            serde_json::to_writer_pretty(&mut *w, &outcome.report)?;
            w.write_all(b"\n")
        })?;
        outputs.push(out.clone());
    }
    if let Some(path) = &a.predictions {
        write_atomic(path, |w| {
            for (i, (p, s)) in outcome.pooled_predictions.iter().zip(&data).enumerate() {
                writeln!(w, "{i}\t{}\t{p}", s.label)?;
            }
            Ok(())
        })?;
        outputs.push(path.clone());
    }
    if let Some(primary) = outputs.first() {
        let mut manifest = RunManifest::new("evaluate", g.seed(), manifest_config)?;
        for p in &inputs {
            manifest.input(p)?;
        }
        for p in &outputs {
            manifest.output(p)?;
        }
        manifest.write_beside(primary)?;
    }

    let stats = dataset_stats(&data);
    g.emit(&outcome.report, || {
        let sd = outcome.report.sd;
        let title = format!(
            "{} on {} ({} sentences, {:.2}% claims; {} runs × {} folds)",
            system.name(),
            a.data.display(),
            stats.sentences,
            stats.claim_pct,
            a.runs,
            folds.k
        );
        format_table(&title, &outcome.report.mean(), &sd)
    })
}

/// Reads `example_index<TAB>[gold<TAB>]prediction` lines.
fn read_predictions(path: &Path) -> Result<BTreeMap<usize, usize>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let parse = |s: &str| s.trim().parse::<usize>().ok();
        let (Some(i), Some(p)) = (parse(cols[0]), cols.last().and_then(|c| parse(c))) else {
            bail!("{}:{}: expected example_index<TAB>prediction", path.display(), n + 1);
        };
        ensure!(cols.len() >= 2 && p <= 1, "{}:{}: bad prediction {line:?}", path.display(), n + 1);
        ensure!(out.insert(i, p).is_none(), "{}:{}: duplicate index {i}", path.display(), n + 1);
    }
    Ok(out)
}

pub fn significance(g: &Global, a: SignificanceArgs) -> Result<()> {
    let data = read_labeled_file(&a.data)?;
    let pa = read_predictions(&a.a)?;
    let pb = read_predictions(&a.b)?;
    let correct = |preds: &BTreeMap<usize, usize>, path: &Path| -> Result<Vec<bool>> {
        ensure!(
            preds.len() == data.len() && preds.keys().enumerate().all(|(pos, &i)| pos == i),
            "{} does not cover examples 0..{}",
            path.display(),
            data.len()
        );
        Ok(preds.values().zip(&data).map(|(&p, s)| p == s.label).collect())
    };
    let result = chi_squared_test(&correct(&pa, &a.a)?, &correct(&pb, &a.b)?)?;
    g.emit(&result, || {
        let [[ca, ia], [cb, ib]] = result.table;
        format!(
            "system\tcorrect\tincorrect\nA\t{ca}\t{ia}\nB\t{cb}\t{ib}\nchi2\t{:.6}\np\t{:.6e}\n",
            result.statistic, result.p_value
        )
    })
}

/// Query lines may be plain sentences, mined TSV rows or labelled `label<TAB>text` rows.
fn read_queries(path: &Path) -> Result<Vec<String>> {
    Ok(read_sentences(path)?
        .into_iter()
        .map(|s| match s.split_once('\t') {
            Some((label, text)) if matches!(label, "0" | "1") => text.to_string(),
            _ => s,
        })
        .collect())
}

pub fn neighbors(g: &Global, a: NeighborsArgs) -> Result<()> {
    ensure!(a.k > 0, "-k must be at least 1");
    let docs = read_sentences(&a.index)?;
    let index = TfIdfIndex::build(&docs, a.min_df)?;
    let query_path = Path::new(&a.query);
    let queries = if query_path.is_file() {
        read_queries(query_path)?
    } else {
        vec![a.query.clone()]
    };
    let results: Vec<_> = queries.iter().map(|q| (q, index.nearest_neighbors(q, a.k))).collect();
    let json_results: Vec<_> = results
        .iter()
        .map(|(q, ns)| {
            let ranked: Vec<_> = ns
                .iter()
                .enumerate()
                .map(|(r, n)| json!({ "rank": r + 1, "score": n.score, "doc": n.doc, "text": n.text }))
                .collect();
            json!({ "query": q, "neighbors": ranked })
        })
        .collect();
    g.emit(&json_results, || {
        let mut s = String::new();
        for (q, ns) in &results {
            if results.len() > 1 {
                let _ = writeln!(s, "# {q}");
            }
            for (r, n) in ns.iter().enumerate() {
                let _ = writeln!(s, "{}\t{:.6}\t{}", r + 1, n.score, n.text);
            }
        }
        s
    })
}
