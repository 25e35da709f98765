use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use finlm::corpus::{read_corpus, read_labeled, synth_corpus, write_lines, Document, SynthConfig};
use finlm::lexicon::{load_lexicon, Lexicon};
use finlm::masking::{mask_batch, masking_stats, write_masked_dataset, Masker, MaskingPolicy, Stage, StageSplit};
use finlm::metrics::{score_files, Task};
use finlm::selftest::{run_selftest, SelftestOptions};
use finlm::sweep::{render_table, run_sweep, SweepInputs, SweepSpec};
use finlm::tinymodel::{
    finetune_classifier, load_checkpoint, perplexity, phrase_probability, pretrain, save_checkpoint, validation_set,
    Checkpoint, FinetuneConfig, Pooling, PretrainConfig,
};
use finlm::tokenizer::{TokenId, Tokenizer};
use serde_json::json;

use crate::*;

/// A run that completed but whose result is a failure (exit code 1).
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// 1 check failure, 2 usage, 3 I/O.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<CheckFailed>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<finlm::Error>() {
            return match e {
                finlm::Error::Config(_) | finlm::Error::Contract(_) => 2,
                finlm::Error::Io { .. } | finlm::Error::Format { .. } | finlm::Error::Json(_) => 3,
                finlm::Error::NonFinite { .. } | finlm::Error::Diverged { .. } => 1,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::BuildLexicon(a) => build_lexicon(a),
        Command::Mask(a) => mask(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::EvalPpl(a) => eval_ppl(a),
        Command::Finetune(a) => finetune(a),
        Command::Score(a) => score(a),
        Command::Sweep(a) => sweep(a),
        Command::Selftest(a) => selftest(a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn synth(a: SynthArgs) -> Result<()> {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        train_docs: a.train_docs.unwrap_or(defaults.train_docs),
        valid_docs: a.valid_docs.unwrap_or(defaults.valid_docs),
        seed: a.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let corpus = synth_corpus(&config)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_lines(a.out.join("train.txt"), &corpus.train)?;
    write_lines(a.out.join("valid.txt"), &corpus.valid)?;
    write_lines(a.out.join("dictionary.txt"), &corpus.dictionary)?;
    corpus.tokenizer.save(a.out.join("vocab.txt"))?;
    for (name, docs, topics) in [
        ("train_cls.jsonl", &corpus.train, &corpus.train_topics),
        ("valid_cls.jsonl", &corpus.valid, &corpus.valid_topics),
    ] {
        let lines: Vec<String> = docs
            .iter()
            .zip(topics)
            .enumerate()
            .map(|(i, (text, topic))| json!({"id": i, "text": text, "label": topic}).to_string())
            .collect();
        write_lines(a.out.join(name), &lines)?;
    }
    log::info!("wrote {} training and {} validation documents to {}", corpus.train.len(), corpus.valid.len(), a.out.display());
    Ok(())
}

fn build_lexicon(a: BuildLexiconArgs) -> Result<()> {
    let tokenizer = Tokenizer::from_file(&a.vocab)?;
    let lexicon = load_lexicon(&a.dicts, &tokenizer)?;
    lexicon.save(&a.out)?;
    let summary = json!({
        "terms": lexicon.len(),
        "phrases": lexicon.phrase_count(),
        "rejected": lexicon.rejected().len(),
        "source_digest": lexicon.source_digest(),
    });
    emit(None, &pretty(&summary))
}

fn load_policy(o: &PolicyOverrides) -> Result<MaskingPolicy> {
    let mut p = match &o.policy {
        Some(path) => MaskingPolicy::load(path)?,
        None => MaskingPolicy::default(),
    };
    if let Some(v) = o.total_rate {
        p.total_rate = v;
    }
    if let Some(v) = o.fin_share {
        p.fin_share = v;
    }
    if let Some(v) = o.phrase_rate {
        p.phrase_rate = v;
    }
    if let Some(v) = o.geo_p {
        p.geo_p = v;
    }
    if let Some(v) = o.max_span {
        p.max_span = v;
    }
    p.validate()?;
    Ok(p)
}

fn check_vocab(lexicon: &Lexicon, tokenizer: &Tokenizer) -> Result<()> {
    let base = lexicon.base_vocab();
    if base.size != tokenizer.size() || base.special != tokenizer.special() {
        return Err(finlm::Error::Contract(format!(
            "lexicon was built for a {}-token vocabulary, the vocabulary file has {}",
            base.size,
            tokenizer.size()
        ))
        .into());
    }
    Ok(())
}

fn encode(docs: &[Document], tokenizer: Option<&Tokenizer>, max_len: usize, path: &Path) -> Result<Vec<Vec<TokenId>>> {
    docs.iter()
        .map(|d| match (d, tokenizer) {
            (Document::Ids(ids), _) => Ok(ids.clone()),
            (d, Some(t)) => Ok(d.to_ids(t, max_len)),
            (Document::Text(_), None) => {
                Err(finlm::Error::Config(format!("{} holds text; pass --vocab to tokenize it", path.display())).into())
            }
        })
        .collect()
}

fn mask(a: MaskArgs) -> Result<()> {
    let lexicon = Lexicon::load(&a.lexicon)?;
    let tokenizer = a.vocab.as_deref().map(Tokenizer::from_file).transpose()?;
    if let Some(t) = &tokenizer {
        check_vocab(&lexicon, t)?;
    }
    let policy = load_policy(&a.policy)?;
    let stage = a.stage.map_or(policy.stage, Stage::from);
    let seed = a.seed.unwrap_or(policy.seed);
    let docs = read_corpus(&a.corpus)?;
    let seqs = encode(&docs, tokenizer.as_ref(), a.max_len, &a.corpus)?;
    let masker = Masker::new(lexicon, policy)?;
    let records = mask_batch(&masker, &seqs, stage, seed);
    let failed = records.iter().filter(|r| r.example().is_none()).count();
    if failed > 0 {
        log::warn!("{failed} of {} sequences could not be masked", records.len());
    }
    write_masked_dataset(create(&a.out)?, &records).with_context(|| format!("writing {}", a.out.display()))?;
    let stats = masking_stats(records.iter().filter_map(|r| r.example()), &masker.special());
    emit(a.stats.as_deref(), &pretty(&stats))
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Self {
        match s {
            StageArg::WordOnly => Stage::WordOnly,
            StageArg::WordAndPhrase => Stage::WordAndPhrase,
        }
    }
}

fn load_train_config(o: &TrainOverrides) -> Result<PretrainConfig> {
    let mut c = match &o.config {
        Some(path) => PretrainConfig::load(path)?,
        None => PretrainConfig::default(),
    };
    if let Some(v) = o.epochs {
        c.epochs = v;
        if o.word_only_epochs.is_none() && c.stage_split.word_only_epochs > v {
            c.stage_split.word_only_epochs = v / 2;
        }
    }
    if let Some(v) = o.word_only_epochs {
        c.stage_split = StageSplit { word_only_epochs: v };
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.lr {
        c.adam.lr = v;
    }
    if let Some(v) = o.lambda1 {
        c.weights.lambda1 = v;
    }
    if let Some(v) = o.lambda2 {
        c.weights.lambda2 = v;
    }
    if let Some(v) = o.d_model {
        c.encoder.d_model = v;
    }
    if let Some(v) = o.layers {
        c.encoder.n_layers = v;
    }
    if let Some(v) = o.heads {
        c.encoder.n_heads = v;
    }
    if let Some(v) = o.ffn_dim {
        c.encoder.ffn_dim = v;
    }
    if let Some(v) = o.max_len {
        c.encoder.max_len = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    Ok(c)
}

struct Data {
    tokenizer: Tokenizer,
    lexicon: Lexicon,
    train: Vec<Vec<TokenId>>,
    valid: Vec<Vec<TokenId>>,
}

fn load_data(a: &DataArgs, max_len: usize) -> Result<Data> {
    let tokenizer = Tokenizer::from_file(&a.vocab)?;
    let lexicon = Lexicon::load(&a.lexicon)?;
    check_vocab(&lexicon, &tokenizer)?;
    let mut train = encode(&read_corpus(&a.corpus)?, Some(&tokenizer), max_len, &a.corpus)?;
    let valid = match &a.valid {
        Some(path) => encode(&read_corpus(path)?, Some(&tokenizer), max_len, path)?,
        None => {
            if train.len() < 2 {
                return Err(finlm::Error::Config("need at least two documents to hold out a validation set".into()).into());
            }
            let held = (train.len() / 10).max(1);
            log::info!("holding out the last {held} training documents for validation");
            train.split_off(train.len() - held)
        }
    };
    if train.is_empty() || valid.is_empty() {
        return Err(finlm::Error::Config("training and validation corpora must be non-empty".into()).into());
    }
    Ok(Data {
        tokenizer,
        lexicon,
        train,
        valid,
    })
}

fn pretrain_cmd(a: PretrainArgs) -> Result<()> {
    let config = load_train_config(&a.train)?;
    let policy = load_policy(&a.policy)?;
    let data = load_data(&a.data, config.encoder.max_len)?;
    let masker = Masker::new(data.lexicon.clone(), policy.clone())?;
    let valid = validation_set(&masker, &data.valid, config.seed);
    let run = pretrain(&data.train, &valid, &masker, &config)?;
    let ckpt = Checkpoint {
        state: run.state,
        tokenizer: data.tokenizer,
        lexicon: data.lexicon,
        policy,
    };
    save_checkpoint(&a.out, &ckpt)?;
    let report = json!({
        "config": ckpt.state.config,
        "policy_digest": ckpt.policy.digest(),
        "train_sequences": data.train.len(),
        "valid_sequences": valid.len(),
        "baseline": run.baseline,
        "baseline_phrase_probability": run.baseline_phrase_probability,
        "epochs": run.epochs,
        "diverged": run.diverged,
    });
    emit(a.report.as_deref(), &pretty(&report))?;
    if let Some(e) = &run.epochs.last() {
        let drop = 1.0 - e.perplexity.token_level / run.baseline.token_level;
        log::info!(
            "validation perplexity {:.3} -> {:.3} ({:.1}% lower)",
            run.baseline.token_level,
            e.perplexity.token_level,
            100.0 * drop
        );
    }
    if let Some(d) = run.diverged {
        bail!(CheckFailed(format!(
            "training diverged at epoch {}, step {}; saved the last finite state to {}",
            d.epoch,
            d.step,
            a.out.display()
        )));
    }
    Ok(())
}

fn eval_ppl(a: EvalPplArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let config = &ckpt.state.config;
    let docs = read_corpus(&a.corpus)?;
    let seqs = encode(&docs, Some(&ckpt.tokenizer), config.encoder.max_len, &a.corpus)?;
    let masker = Masker::new(ckpt.lexicon.clone(), ckpt.policy.clone())?;
    let seed = a.seed.unwrap_or(config.seed);
    let valid = validation_set(&masker, &seqs, seed);
    let generator = &ckpt.state.model.generator;
    let report = match &a.dump_logits {
        Some(path) => {
            let mut out = create(path)?;
            let r = perplexity(generator, &valid, Some(&mut out))?;
            out.flush().with_context(|| format!("writing {}", path.display()))?;
            r
        }
        None => perplexity(generator, &valid, None)?,
    };
    let out = json!({
        "seed": seed,
        "epoch": ckpt.state.epoch,
        "perplexity": report,
        "phrase_probability": phrase_probability(generator, &valid)?,
    });
    emit(a.out.as_deref(), &pretty(&out))
}

fn finetune(a: FinetuneArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let mut config = match &a.config {
        Some(path) => FinetuneConfig::load(path)?,
        None => FinetuneConfig::default(),
    };
    if let Some(v) = a.lambda {
        config.lambda = v;
    }
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.temperature {
        config.temperature = v;
    }
    if let Some(v) = a.lr {
        config.adam.lr = v;
    }
    if let Some(v) = a.pooling {
        config.pooling = match v {
            PoolingArg::First => Pooling::First,
            PoolingArg::Mean => Pooling::Mean,
        };
    }
    if a.freeze_encoder {
        config.freeze_encoder = true;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    let max_len = ckpt.state.config.encoder.max_len;
    let to_pairs = |path: &Path| -> Result<(Vec<serde_json::Value>, Vec<(Vec<TokenId>, usize)>)> {
        let examples = read_labeled(path)?;
        let ids = examples
            .iter()
            .enumerate()
            .map(|(i, e)| e.id.clone().unwrap_or_else(|| json!(i)))
            .collect();
        let pairs = examples.iter().map(|e| (e.to_ids(&ckpt.tokenizer, max_len), e.label)).collect();
        Ok((ids, pairs))
    };
    let (_, train) = to_pairs(&a.task_file)?;
    let (eval_ids, eval) = to_pairs(a.eval_file.as_deref().unwrap_or(&a.task_file))?;
    let classes = match a.classes {
        Some(c) => c,
        None => train.iter().chain(&eval).map(|(_, l)| l + 1).max().unwrap_or(0).max(2),
    };
    let encoder = &ckpt.state.model.discriminator.encoder;
    let (_, report) = finetune_classifier(encoder, &train, &eval, classes, &config)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if let Some(path) = &a.predictions {
        let lines: Vec<String> = eval_ids
            .iter()
            .zip(&report.predictions)
            .map(|(id, p)| json!({"id": id, "pred": p}).to_string())
            .collect();
        write_lines(path, &lines)?;
    }
    let out = json!({
        "config": config,
        "classes": classes,
        "train_examples": train.len(),
        "eval_examples": eval.len(),
        "report": report,
    });
    emit(a.out.as_deref(), &pretty(&out))
}

fn score(a: ScoreArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Cls => Task::Cls,
        TaskArg::Reg => Task::Reg,
        TaskArg::Rank => Task::Rank,
    };
    let report = score_files(task, &a.pred, &a.gold, a.k)?;
    emit(a.out.as_deref(), &pretty(&report))
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut spec = match (&a.spec, a.axis) {
        (Some(path), _) => SweepSpec::load(path)?,
        (None, Some(AxisArg::FinShare)) => SweepSpec::fin_share(),
        (None, Some(AxisArg::StageSplit)) => SweepSpec::stage_split(),
        (None, None) => unreachable!("clap requires --spec or --axis"),
    };
    if let Some(v) = a.seeds {
        spec.seeds = v;
    }
    if let Some(v) = a.workers {
        spec.workers = v;
    }
    let config = load_train_config(&a.train)?;
    let policy = load_policy(&a.policy)?;
    let data = load_data(&a.data, config.encoder.max_len)?;
    let inputs = SweepInputs {
        train: &data.train,
        valid: &data.valid,
        lexicon: &data.lexicon,
        policy: &policy,
        config: &config,
    };
    let report = run_sweep(&spec, &inputs)?;
    std::fs::write(&a.out, pretty(&report)).with_context(|| format!("writing {}", a.out.display()))?;
    let table = render_table(&report);
    if let Some(path) = &a.table {
        std::fs::write(path, &table).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed = report.rows.iter().flat_map(|r| &r.cells).filter(|c| c.failed).count();
    if failed > 0 {
        log::warn!("{failed} sweep cells failed");
    }
    emit(None, &table)
}

fn selftest(a: SelftestArgs) -> Result<()> {
    let report = run_selftest(&SelftestOptions {
        seed: a.seed,
        inject_wrong_gradient: a.inject_wrong_gradient,
    });
    print!("{}", report.render_table());
    if let Some(path) = &a.json {
        std::fs::write(path, pretty(&report)).with_context(|| format!("writing {}", path.display()))?;
    }
    if !report.passed() {
        bail!(CheckFailed(format!("{} self-test checks failed", report.failures())));
    }
    Ok(())
}
