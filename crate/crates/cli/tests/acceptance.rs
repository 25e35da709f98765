//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the console.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use finlm::corpus::{synth_corpus, SynthConfig};
use finlm::lexicon::{Lexicon, PhraseMatcher};
use finlm::linalg::Matrix;
use finlm::masking::{mask_batch, masking_stats, Masker, MaskingPolicy, Stage, TruncatedGeometric};
use finlm::metrics::{accuracy, f1_scores, mrr, mse_r2, ndcg, precision_at_k, RankedList};
use finlm::objectives::scl_loss;
use finlm::rng::{rng_from_seed, stream_rng};
use finlm::selftest::{run_selftest, SelftestOptions, CHI2_CRITICAL_9};
use finlm::tokenizer::TokenId;
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::Value;

struct Outcome {
    tier: &'static str,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn finlm<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_finlm"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Result<Output, String> {
    let out = finlm(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "finlm {} exited with {:?}: {}",
            args.first().map(|a| a.as_ref().to_string_lossy().into_owned()).unwrap_or_default(),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn json(p: &Path) -> Result<Value, String> {
    serde_json::from_slice(&read(p)?).map_err(|e| format!("{}: {e}", p.display()))
}

/// The default synthetic corpus, its lexicon, and a JSON config file.
struct Toy {
    root: PathBuf,
}

impl Toy {
    fn new(root: &Path, synth: &[&str], config: Value) -> Result<Self, String> {
        let data = root.join("data");
        let mut args = vec!["synth".to_string(), "--out".into(), s(&data)];
        args.extend(synth.iter().map(|a| a.to_string()));
        ok(&args)?;
        ok(&[
            "build-lexicon".into(),
            "--dict".into(),
            s(&data.join("dictionary.txt")),
            "--vocab".into(),
            s(&data.join("vocab.txt")),
            "--out".into(),
            s(&root.join("lexicon.json")),
        ])?;
        std::fs::write(root.join("config.json"), config.to_string()).map_err(|e| e.to_string())?;
        Ok(Toy { root: root.to_path_buf() })
    }

    fn p(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn data(&self, name: &str) -> PathBuf {
        self.root.join("data").join(name)
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--corpus".into(),
            s(&self.data("train.txt")),
            "--valid".into(),
            s(&self.data("valid.txt")),
            "--vocab".into(),
            s(&self.data("vocab.txt")),
            "--lexicon".into(),
            s(&self.p("lexicon.json")),
            "--config".into(),
            s(&self.p("config.json")),
        ]
    }
}

fn masking_budget() -> Result<(bool, String), String> {
    let corpus = synth_corpus(&SynthConfig {
        train_docs: 24_000,
        valid_docs: 0,
        seed: 41,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let lexicon = corpus.lexicon().map_err(|e| e.to_string())?;
    let mut seqs = Vec::new();
    let mut tokens = 0;
    for doc in corpus.encode(&corpus.train, 512) {
        if tokens >= 1_000_000 {
            break;
        }
        tokens += doc.len();
        seqs.push(doc);
    }
    let special = corpus.tokenizer.special();
    let body: usize = seqs.iter().map(|s| s.iter().filter(|t| !special.contains(**t)).count()).sum();
    let covered: usize = seqs.iter().map(|s| lexicon.find_occurrences(s).iter().map(|o| o.len()).sum::<usize>()).sum();
    let coverage = covered as f64 / body as f64;
    let masker = Masker::new(lexicon, MaskingPolicy::default()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let records = mask_batch(&masker, &seqs, Stage::WordAndPhrase, 2024);
    let secs = start.elapsed().as_secs_f64();
    let stats = masking_stats(records.iter().filter_map(|r| r.example()), &special);
    let failed = records.len() - stats.examples;
    let passed = failed == 0
        && coverage >= 0.10
        && (stats.mask_rate - 0.15).abs() <= 0.003
        && (stats.financial_share - 0.30).abs() <= 0.01
        && secs < 60.0;
    Ok((
        passed,
        format!(
            "{tokens} tokens, lexicon coverage {coverage:.3} (>= 0.10), mask rate {:.4} (0.15 +- 0.003), financial share {:.4} (0.30 +- 0.01), {secs:.1} s (< 60 s)",
            stats.mask_rate, stats.financial_share
        ),
    ))
}

fn span_lengths() -> Result<(bool, String), String> {
    let d = TruncatedGeometric::new(0.2, 10).map_err(|e| e.to_string())?;
    let exact: f64 = (1..=10).map(|l| l as f64 * (0.2 * 0.8f64.powi(l - 1))).sum::<f64>() / (1.0 - 0.8f64.powi(10));
    let mut rng = rng_from_seed(7);
    let draws = 1_000_000u64;
    let mut counts = [0u64; 11];
    for _ in 0..draws {
        counts[d.sample(&mut rng)] += 1;
    }
    let mean = (1..=10).map(|l| l as f64 * counts[l] as f64).sum::<f64>() / draws as f64;
    let chi2: f64 = (1..=10)
        .map(|l| {
            let p = 0.2 * 0.8f64.powi(l as i32 - 1) / (1.0 - 0.8f64.powi(10));
            let e = draws as f64 * p;
            (counts[l] as f64 - e).powi(2) / e
        })
        .sum();
    let passed = counts[0] == 0 && (mean - exact).abs() <= 0.05 && chi2 < CHI2_CRITICAL_9;
    Ok((
        passed,
        format!("mean {mean:.4} vs {exact:.7} (+- 0.05), chi2 {chi2:.2} < {CHI2_CRITICAL_9:.3} (df 9, alpha 0.01), 10^6 draws"),
    ))
}

fn phrase_matching() -> Result<(bool, String), String> {
    let mut rng = rng_from_seed(808);
    let mut mismatches = 0;
    let mut occurrences = 0;
    for _ in 0..1000 {
        let alphabet = rng.random_range(2..8);
        let mut patterns = BTreeMap::new();
        let mut matcher = PhraseMatcher::default();
        for id in 0..rng.random_range(1..16u32) {
            let len = rng.random_range(1..=5);
            let p: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..alphabet)).collect();
            if matcher.insert(&p, id) {
                patterns.insert(p, id);
            }
        }
        let n = rng.random_range(0..=512);
        let seq: Vec<TokenId> = (0..n).map(|_| rng.random_range(0..alphabet)).collect();
        let expect = common::brute_force_matches(&seq, &patterns);
        occurrences += expect.len();
        if matcher.find_all(&seq) != expect {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over 1000 sequences ({occurrences} occurrences)")))
}

fn gradient_suite() -> Result<(bool, String), String> {
    let start = Instant::now();
    let report = run_selftest(&SelftestOptions::default());
    let secs = start.elapsed().as_secs_f64();
    let grads: Vec<_> = report.checks.iter().filter(|c| c.group == "gradient").collect();
    let failed: Vec<&str> = grads.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let passed = !grads.is_empty() && failed.is_empty() && secs < 60.0;
    Ok((
        passed,
        format!(
            "{} of {} checks within rel. error 1e-4 (step 1e-5){}, {secs:.1} s for the whole self-test (< 60 s)",
            grads.len() - failed.len(),
            grads.len(),
            if failed.is_empty() { String::new() } else { format!(", failing: {}", failed.join(", ")) }
        ),
    ))
}

fn scl_oracle() -> Result<(bool, String), String> {
    let mut rng = rng_from_seed(515);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=6);
        let mut f = Matrix::zeros(n, d);
        for r in 0..n {
            let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6);
            for (c, v) in row.iter().enumerate() {
                f.set(r, c, v / norm);
            }
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let tau = rng.random_range(0.1..2.0);
        let got = scl_loss(&f, &labels, tau).map_err(|e| e.to_string())?.loss;
        worst = worst.max((got - common::scl_triple_loop(&f, &labels, tau)).abs());
    }
    Ok((worst < 1e-10, format!("max |scl - triple loop| = {worst:.2e} over 200 batches, N <= 8 (< 1e-10)")))
}

fn ranked(grades: &[f64], order: &[usize], query: usize) -> RankedList {
    let relevance = grades.iter().enumerate().map(|(i, g)| (format!("d{i}"), *g)).collect();
    RankedList::new(format!("q{query}"), order.iter().map(|i| format!("d{i}")).collect(), relevance).unwrap()
}

fn metric_oracles() -> Result<(bool, String), String> {
    let mut rng = rng_from_seed(616);
    let mut worst = BTreeMap::<&str, f64>::new();
    let mut bump = |name: &'static str, err: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(err);
    };
    let mut sorted_not_one = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let grades: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.truncate(rng.random_range(1..=n));
        let list = ranked(&grades, &order, 0);
        let rg: Vec<f64> = order.iter().map(|&i| grades[i]).collect();
        let k = rng.random_range(1..=n + 2);
        bump("ndcg", (ndcg(&list, Some(k)).unwrap() - common::ndcg_by_enumeration(&rg, &grades, k)).abs());
        bump("precision@k", (precision_at_k(&list, k, 0.0).unwrap() - common::precision_loop(&rg, k)).abs());

        let queries = rng.random_range(1..=5);
        let mut lists = Vec::new();
        let mut ranked_grades = Vec::new();
        for q in 0..queries {
            let m = rng.random_range(1..=6);
            let g: Vec<f64> = (0..m).map(|_| rng.random_range(0..3) as f64).collect();
            let mut o: Vec<usize> = (0..m).collect();
            o.shuffle(&mut rng);
            ranked_grades.push(o.iter().map(|&i| g[i]).collect::<Vec<f64>>());
            lists.push(ranked(&g, &o, q));
        }
        bump("mrr", (mrr(&lists, 0.0).unwrap() - common::mrr_loop(&ranked_grades)).abs());

        let len = rng.random_range(1..=40);
        let classes = rng.random_range(2..=5);
        let labels: Vec<usize> = (0..len).map(|_| rng.random_range(0..classes)).collect();
        let preds: Vec<usize> = (0..len).map(|_| rng.random_range(0..classes)).collect();
        let class_ids: Vec<usize> = (0..classes).collect();
        let f1 = f1_scores(&preds, &labels, &class_ids).unwrap();
        let oracle = common::f1_confusion(&preds, &labels, classes);
        let macro_oracle = oracle.iter().sum::<f64>() / classes as f64;
        let per_class = f1.per_class.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        bump("f1", per_class.max((f1.macro_f1 - macro_oracle).abs()));
        let hits = preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
        bump("accuracy", (accuracy(&preds, &labels).unwrap() - hits as f64 / len as f64).abs());

        let m = rng.random_range(2..=30);
        let t: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (mse, r2) = mse_r2(&p, &t).unwrap();
        let (mse_o, r2_o) = common::mse_r2_loop(&p, &t);
        bump("mse", (mse - mse_o).abs());
        bump("r2", (r2.unwrap() - r2_o.unwrap()).abs() / r2_o.unwrap().abs().max(1.0));

        let n = rng.random_range(1..=12);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        if g.iter().any(|&v| v > 0.0) {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|a, b| g[*b].total_cmp(&g[*a]));
            if ndcg(&ranked(&g, &o, 0), None).unwrap() != 1.0 {
                sorted_not_one += 1;
            }
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let parts: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    Ok((
        max < 1e-12 && sorted_not_one == 0,
        format!(
            "100 instances each, max error {} (< 1e-12); nDCG on grade-sorted rankings != 1 in {sorted_not_one} cases",
            parts.join(", ")
        ),
    ))
}

fn toy_config() -> Value {
    serde_json::json!({"version": 1, "epochs": 4, "stage_split": {"word_only_epochs": 2}, "seed": 0})
}

struct ToyRun {
    report: Value,
    secs: f64,
}

fn toy_pretraining(toy: &Toy) -> Result<ToyRun, String> {
    let mut args = vec!["pretrain".to_string()];
    args.extend(toy.data_args());
    args.extend(["--out".into(), s(&toy.p("toy.ckpt")), "--report".into(), s(&toy.p("toy.json"))]);
    let start = Instant::now();
    ok(&args)?;
    Ok(ToyRun {
        secs: start.elapsed().as_secs_f64(),
        report: json(&toy.p("toy.json"))?,
    })
}

fn toy_outcome(run: &ToyRun) -> Result<(bool, String), String> {
    let r = &run.report;
    let base = r["baseline"]["token_level"].as_f64().ok_or("no baseline")?;
    let last = r["epochs"].as_array().and_then(|e| e.last()).ok_or("no epochs")?;
    let ppl = last["perplexity"]["token_level"].as_f64().ok_or("no perplexity")?;
    let prob = last["phrase_probability"].as_f64().ok_or("no phrase probability")?;
    let vocab = r["config"]["encoder"]["vocab_size"].as_u64().ok_or("no vocab size")? as f64;
    let drop = 1.0 - ppl / base;
    let stages: Vec<&str> = r["epochs"].as_array().unwrap().iter().map(|e| e["stage"].as_str().unwrap_or("")).collect();
    let schedule = stages == ["word_only", "word_only", "word_and_phrase", "word_and_phrase"];
    let passed = schedule && drop >= 0.20 && prob > 10.0 / vocab && run.secs < 600.0;
    Ok((
        passed,
        format!(
            "perplexity {base:.2} -> {ppl:.2} ({:.1}% lower, >= 20%), phrase-id probability {prob:.4} > 10/V = {:.4}, stages {}, {:.1} s (< 600 s)",
            100.0 * drop,
            10.0 / vocab,
            stages.join(","),
            run.secs
        ),
    ))
}

fn stage_schedule(run: &ToyRun) -> Result<(bool, String), String> {
    let epochs = run.report["epochs"].as_array().ok_or("no epochs")?;
    let mut word_only = 0;
    let mut leaked = 0;
    let mut later = 0;
    for e in epochs {
        let c = e["phrase_collapses"].as_u64().ok_or("no collapse count")?;
        if e["stage"] == "word_only" {
            word_only += 1;
            leaked += c;
        } else {
            later += c;
        }
    }
    Ok((
        word_only > 0 && leaked == 0,
        format!("{leaked} phrase collapses in {word_only} word-only epochs (exactly 0); {later} in word-and-phrase epochs"),
    ))
}

fn sweep_structure(toy: &Toy) -> Result<(bool, String), String> {
    let mut problems = Vec::new();
    let mut summary = Vec::new();
    let mut tables = String::new();
    for (axis, rows, columns) in [("fin-share", 4, vec!["FV", "PFV"]), ("stage-split", 5, vec!["perplexity"])] {
        let out = toy.p(&format!("{axis}.json"));
        let mut args = vec!["sweep".to_string(), "--axis".into(), axis.into()];
        args.extend(toy.data_args());
        args.extend(["--out".into(), s(&out)]);
        let start = Instant::now();
        let printed = ok(&args)?;
        let secs = start.elapsed().as_secs_f64();
        tables.push_str(&String::from_utf8_lossy(&printed.stdout));
        let r = json(&out)?;
        let got_rows = r["rows"].as_array().ok_or("no rows")?;
        if got_rows.len() != rows {
            problems.push(format!("{axis}: {} rows, expected {rows}", got_rows.len()));
        }
        if r["columns"] != serde_json::json!(columns) {
            problems.push(format!("{axis}: columns {}", r["columns"]));
        }
        for row in got_rows {
            for cell in row["cells"].as_array().ok_or("no cells")? {
                let runs: Vec<f64> = cell["runs"].as_array().unwrap().iter().filter_map(|x| x["perplexity"].as_f64()).collect();
                let mean = cell["mean"].as_f64();
                if runs.len() != 3 {
                    problems.push(format!("{axis} {}: {} finished seeds", row["key"], runs.len()));
                } else if mean.is_none_or(|m| (m - runs.iter().sum::<f64>() / 3.0).abs() > 1e-12) {
                    problems.push(format!("{axis} {}: mean is not the seed average", row["key"]));
                }
            }
        }
        for f in r["findings"].as_array().ok_or("no findings")? {
            let verdict = match f["holds"].as_bool() {
                Some(true) => "holds",
                Some(false) => "does not hold",
                None => "undetermined",
            };
            summary.push(format!(
                "{axis} {}: lowest {} vs {} {verdict}",
                f["column"].as_str().unwrap_or(""),
                f["lowest"].as_str().unwrap_or("n/a"),
                f["expected"].as_str().unwrap_or("")
            ));
        }
        summary.push(format!("{axis} {secs:.0} s"));
    }
    for line in tables.lines() {
        println!("    | {line}");
    }
    let passed = problems.is_empty();
    let mut detail = if passed {
        "4 fin-share rows x FV/PFV, 5 stage-split rows, 3 seeds per cell".to_string()
    } else {
        problems.join("; ")
    };
    detail.push_str(&format!("; orderings (reported, not gating): {}", summary.join("; ")));
    Ok((passed, detail))
}

fn determinism(root: &Path) -> Result<(bool, String), String> {
    let config = serde_json::json!({
        "version": 1,
        "encoder": {"d_model": 8, "n_heads": 2, "n_layers": 1, "ffn_dim": 16, "max_len": 80},
        "epochs": 2,
        "stage_split": {"word_only_epochs": 1},
        "seed": 9
    });
    let spec = serde_json::json!({"version": 1, "axis": "stage_split", "values": [[1, 1], [0, 2]], "seeds": 2});
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for run in ["a", "b"] {
        let dir = root.join(run);
        let toy = Toy::new(&dir, &["--train-docs", "30", "--valid-docs", "8", "--seed", "12"], config.clone())?;
        std::fs::write(toy.p("spec.json"), spec.to_string()).map_err(|e| e.to_string())?;
        let mut captured: Vec<(String, Vec<u8>)> = Vec::new();
        let d = |name: &str| s(&toy.data(name));
        let p = |name: &str| s(&toy.p(name));
        ok(&["mask".into(), "--corpus".into(), d("train.txt"), "--vocab".into(), d("vocab.txt"), "--lexicon".into(), p("lexicon.json"), "--seed".into(), "4".into(), "--out".into(), p("masked.jsonl"), "--stats".into(), p("stats.json")])?;
        let mut args = vec!["pretrain".to_string()];
        args.extend(toy.data_args());
        args.extend(["--out".into(), p("m.ckpt"), "--report".into(), p("pretrain.json")]);
        ok(&args)?;
        let ppl = ok(&["eval-ppl".into(), "--ckpt".into(), p("m.ckpt"), "--corpus".into(), d("valid.txt"), "--dump-logits".into(), p("dump.jsonl")])?;
        captured.push(("eval-ppl stdout".into(), ppl.stdout));
        let ft = ok(&["finetune".into(), "--ckpt".into(), p("m.ckpt"), "--task-file".into(), d("train_cls.jsonl"), "--eval-file".into(), d("valid_cls.jsonl"), "--epochs".into(), "2".into(), "--predictions".into(), p("pred.jsonl")])?;
        captured.push(("finetune stdout".into(), ft.stdout));
        let sc = ok(&["score".into(), "--task".into(), "cls".into(), "--pred".into(), p("pred.jsonl"), "--gold".into(), d("valid_cls.jsonl")])?;
        captured.push(("score stdout".into(), sc.stdout));
        let mut args = vec!["sweep".to_string(), "--spec".into(), p("spec.json")];
        args.extend(toy.data_args());
        args.extend(["--out".into(), p("sweep.json"), "--table".into(), p("sweep.txt")]);
        ok(&args)?;
        let st = ok(&["selftest".to_string(), "--seed".into(), "3".into()])?;
        captured.push(("selftest stdout".into(), st.stdout));
        for name in [
            "data/train.txt",
            "data/valid.txt",
            "data/vocab.txt",
            "data/dictionary.txt",
            "data/train_cls.jsonl",
            "data/valid_cls.jsonl",
            "lexicon.json",
            "masked.jsonl",
            "stats.json",
            "m.ckpt",
            "pretrain.json",
            "dump.jsonl",
            "pred.jsonl",
            "sweep.json",
            "sweep.txt",
        ] {
            captured.push((name.into(), read(&toy.p(name))?));
        }
        outputs.push(captured);
    }
    let differing: Vec<&str> = outputs[0]
        .iter()
        .zip(&outputs[1])
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.as_str())
        .collect();
    Ok((
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} outputs of all 9 subcommands byte-identical across two runs", outputs[0].len())
        } else {
            format!("differ: {}", differing.join(", "))
        },
    ))
}

fn binding_parity(root: &Path) -> Result<(bool, String), String> {
    let toy = Toy::new(&root.join("parity"), &["--train-docs", "4", "--valid-docs", "1"], serde_json::json!({"version": 1}))?;
    let lexicon = Lexicon::load(toy.p("lexicon.json")).map_err(|e| e.to_string())?;
    let vocab = lexicon.base_vocab();
    let phrase_tokens: Vec<TokenId> = lexicon.terms().iter().filter(|t| t.is_phrase()).flat_map(|t| t.token_ids.clone()).collect();
    let masker = Masker::new(lexicon, MaskingPolicy::default()).map_err(|e| e.to_string())?;
    let mut rng = stream_rng(77, "parity");
    let (mut pairs, mut mismatches) = (0, 0);
    for round in 0..10u64 {
        let seed = rng.random::<u64>() >> 1;
        let seqs: Vec<Vec<TokenId>> = (0..100)
            .map(|_| {
                let len = rng.random_range(2..=512usize);
                let mut ids = vec![vocab.special.cls];
                while ids.len() < len - 1 {
                    ids.push(if rng.random_bool(0.2) {
                        phrase_tokens[rng.random_range(0..phrase_tokens.len())]
                    } else {
                        rng.random_range(5..vocab.size as TokenId)
                    });
                }
                ids.push(vocab.special.sep);
                ids
            })
            .collect();
        let lines: Vec<String> = seqs.iter().map(|ids| serde_json::json!({ "ids": ids }).to_string()).collect();
        let corpus = toy.p(&format!("ids{round}.jsonl"));
        std::fs::write(&corpus, lines.join("\n")).map_err(|e| e.to_string())?;
        let out = toy.p("cli.jsonl");
        ok(&["mask".into(), "--corpus".into(), s(&corpus), "--lexicon".into(), s(&toy.p("lexicon.json")), "--seed".into(), seed.to_string(), "--out".into(), s(&out), "--stats".into(), s(&toy.p("stats.json"))])?;
        let cli = String::from_utf8(read(&out)?).map_err(|e| e.to_string())?;
        let records = mask_batch(&masker, &seqs, Stage::WordAndPhrase, seed);
        for (line, rec) in cli.lines().zip(&records) {
            let a: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let b: Value = serde_json::from_str(&rec.to_json_line()).map_err(|e| e.to_string())?;
            if a.to_string() != b.to_string() {
                mismatches += 1;
            }
            pairs += 1;
        }
        mismatches += records.len().abs_diff(cli.lines().count());
    }
    Ok((
        mismatches == 0 && pairs == 1000,
        format!("{mismatches} mismatches over {pairs} (sequence, seed) pairs, CLI vs in-process mask_batch"),
    ))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();
    let mut outcomes = Vec::new();
    let mut record = |tier: &'static str, name: &'static str, result: Result<(bool, String), String>| {
        let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
        println!("{} [{tier}] {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        outcomes.push(Outcome {
            tier,
            name,
            passed,
            detail,
        });
    };
    println!("acceptance criteria");
    record("PRIMARY", "masking budget", masking_budget());
    record("PRIMARY", "truncated geometric spans", span_lengths());
    record("PRIMARY", "phrase matching", phrase_matching());
    record("PRIMARY", "gradient suite", gradient_suite());
    record("PRIMARY", "SCL oracle", scl_oracle());
    let toy = Toy::new(&root.join("toy"), &[], toy_config());
    let run = toy.as_ref().map_err(Clone::clone).and_then(toy_pretraining);
    record("PRIMARY", "toy pretraining", run.as_ref().map_err(Clone::clone).and_then(toy_outcome));
    record("PRIMARY", "stage schedule", run.as_ref().map_err(Clone::clone).and_then(stage_schedule));
    record("PRIMARY", "metrics", metric_oracles());
    record("PRIMARY", "sweep harness", toy.as_ref().map_err(Clone::clone).and_then(sweep_structure));
    record("PRIMARY", "determinism", determinism(&root.join("determinism")));
    record("SECONDARY", "binding parity (CLI side)", binding_parity(root));

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.passed).collect();
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    if !failed.is_empty() {
        for o in &failed {
            eprintln!("failed [{}] {}: {}", o.tier, o.name, o.detail);
        }
        std::process::exit(1);
    }
}
