//! Perplexity sweeps over the financial share of the masking budget and over
//! the word-only / word-and-phrase epoch split, averaged over seeds.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::masking::{Masker, MaskingPolicy, StageSplit};
use crate::tinymodel::{pretrain, validation_set, PretrainConfig};
use crate::tokenizer::TokenId;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "axis", content = "values", rename_all = "snake_case")]
pub enum SweepAxis {
    FinShare(Vec<f64>),
    /// `[word_only_epochs, word_and_phrase_epochs]` pairs.
    StageSplit(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub version: u32,
    #[serde(flatten)]
    pub axis: SweepAxis,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
}

fn default_seeds() -> usize {
    3
}

impl SweepSpec {
    pub fn fin_share() -> Self {
        SweepSpec {
            version: SPEC_VERSION,
            axis: SweepAxis::FinShare(vec![0.1, 0.2, 0.3, 0.4]),
            seeds: default_seeds(),
            workers: 0,
        }
    }

    pub fn stage_split() -> Self {
        SweepSpec {
            version: SPEC_VERSION,
            axis: SweepAxis::StageSplit(vec![[4, 0], [3, 1], [2, 2], [1, 3], [0, 4]]),
            seeds: default_seeds(),
            workers: 0,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SweepSpec = serde_json::from_str(&text).map_err(|e| Error::format("sweep spec", path, e))?;
        spec.validate().map_err(|e| Error::format("sweep spec", path, e))?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Config(format!("unsupported sweep spec version {}", self.version)));
        }
        if self.seeds == 0 {
            return Err(Error::Config("a sweep needs at least one seed".into()));
        }
        let empty = match &self.axis {
            SweepAxis::FinShare(v) => v.is_empty(),
            SweepAxis::StageSplit(v) => v.is_empty(),
        };
        if empty {
            return Err(Error::Config("a sweep needs at least one value".into()));
        }
        if let SweepAxis::StageSplit(v) = &self.axis {
            if let Some(s) = v.iter().find(|s| s[0] + s[1] == 0) {
                return Err(Error::Config(format!("stage split {s:?} has no epochs")));
            }
        }
        Ok(())
    }
}

/// Everything a sweep trains on. Validation sequences are masked once per
/// seed with `policy`, so every row of a column is scored on the same set.
#[derive(Debug, Clone, Copy)]
pub struct SweepInputs<'a> {
    pub train: &'a [Vec<TokenId>],
    pub valid: &'a [Vec<TokenId>],
    pub lexicon: &'a Lexicon,
    pub policy: &'a MaskingPolicy,
    pub config: &'a PretrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    /// Token-level validation perplexity after the last epoch.
    pub perplexity: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub runs: Vec<SeedRun>,
    /// Mean over seeds; `None` when any seed failed.
    pub mean: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub key: Vec<String>,
    pub cells: Vec<SweepCell>,
}

/// Whether the row with the lowest mean is the expected one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub column: String,
    pub expected: String,
    pub lowest: Option<String>,
    /// `None` when a failed cell leaves the comparison open.
    pub holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: String,
    pub key_columns: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub findings: Vec<Finding>,
}

struct Job {
    row: usize,
    column: usize,
    seed: u64,
    policy: MaskingPolicy,
    config: PretrainConfig,
}

struct Layout {
    axis: &'static str,
    key_columns: Vec<String>,
    columns: Vec<String>,
    keys: Vec<Vec<String>>,
    expected: Vec<String>,
}

fn percent(share: f64) -> String {
    format!("{}%", (share * 100.0).round())
}

fn plan(spec: &SweepSpec, inputs: &SweepInputs) -> (Layout, Vec<Job>) {
    let base = inputs.config;
    let seeds: Vec<u64> = (0..spec.seeds as u64).map(|i| base.seed.wrapping_add(i)).collect();
    let mut jobs = Vec::new();
    let layout = match &spec.axis {
        SweepAxis::FinShare(shares) => {
            // FV masks words only in every epoch; PFV uses the base split.
            let splits = [
                StageSplit {
                    word_only_epochs: base.epochs,
                },
                base.stage_split,
            ];
            for (row, &share) in shares.iter().enumerate() {
                for (column, split) in splits.iter().enumerate() {
                    for &seed in &seeds {
                        jobs.push(Job {
                            row,
                            column,
                            seed,
                            policy: MaskingPolicy {
                                fin_share: share,
                                ..inputs.policy.clone()
                            },
                            config: PretrainConfig {
                                stage_split: *split,
                                seed,
                                ..base.clone()
                            },
                        });
                    }
                }
            }
            Layout {
                axis: "fin_share",
                key_columns: vec!["fin share".into()],
                columns: vec!["FV".into(), "PFV".into()],
                keys: shares.iter().map(|&s| vec![percent(s)]).collect(),
                expected: vec![percent(0.3); 2],
            }
        }
        SweepAxis::StageSplit(splits) => {
            for (row, s) in splits.iter().enumerate() {
                for &seed in &seeds {
                    jobs.push(Job {
                        row,
                        column: 0,
                        seed,
                        policy: inputs.policy.clone(),
                        config: PretrainConfig {
                            epochs: s[0] + s[1],
                            stage_split: StageSplit { word_only_epochs: s[0] },
                            seed,
                            ..base.clone()
                        },
                    });
                }
            }
            Layout {
                axis: "stage_split",
                key_columns: vec!["FV".into(), "FV+PFV".into()],
                columns: vec!["perplexity".into()],
                keys: splits.iter().map(|s| vec![s[0].to_string(), s[1].to_string()]).collect(),
                expected: vec!["2 2".into()],
            }
        }
    };
    (layout, jobs)
}

fn run_job(job: &Job, inputs: &SweepInputs) -> SeedRun {
    let outcome = (|| -> Result<f64> {
        let masker = Masker::new(inputs.lexicon.clone(), job.policy.clone())?;
        let scorer = Masker::new(inputs.lexicon.clone(), inputs.policy.clone())?;
        let valid = validation_set(&scorer, inputs.valid, job.seed);
        let run = pretrain(inputs.train, &valid, &masker, &job.config)?;
        if let Some(d) = run.diverged {
            return Err(Error::Diverged {
                epoch: d.epoch,
                step: d.step,
            });
        }
        Ok(run.epochs.last().map_or(run.baseline.token_level, |e| e.perplexity.token_level))
    })();
    match outcome {
        Ok(p) => SeedRun {
            seed: job.seed,
            perplexity: Some(p),
            error: None,
        },
        Err(e) => {
            log::warn!("sweep cell (row {}, seed {}) failed: {e}", job.row, job.seed);
            SeedRun {
                seed: job.seed,
                perplexity: None,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Train every (row, column, seed) cell and tabulate final validation
/// perplexities. A failing cell is marked and the sweep carries on.
pub fn run_sweep(spec: &SweepSpec, inputs: &SweepInputs) -> Result<SweepReport> {
    spec.validate()?;
    inputs.config.resolved(inputs.lexicon.augment().total_size()).validate()?;
    inputs.policy.validate()?;
    let (layout, jobs) = plan(spec, inputs);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<SeedRun> = pool.install(|| jobs.par_iter().map(|j| run_job(j, inputs)).collect());

    let mut rows: Vec<SweepRow> = layout
        .keys
        .iter()
        .map(|key| SweepRow {
            key: key.clone(),
            cells: vec![
                SweepCell {
                    runs: Vec::new(),
                    mean: None,
                    failed: false,
                };
                layout.columns.len()
            ],
        })
        .collect();
    for (job, run) in jobs.iter().zip(results) {
        rows[job.row].cells[job.column].runs.push(run);
    }
    for cell in rows.iter_mut().flat_map(|r| r.cells.iter_mut()) {
        let values: Option<Vec<f64>> = cell.runs.iter().map(|r| r.perplexity).collect();
        cell.failed = values.is_none();
        cell.mean = values.map(|v| v.iter().sum::<f64>() / v.len() as f64);
    }
    let findings = layout
        .columns
        .iter()
        .enumerate()
        .map(|(c, column)| {
            let expected = layout.expected[c].clone();
            let means: Option<Vec<f64>> = rows.iter().map(|r| r.cells[c].mean).collect();
            let lowest = means.map(|m| {
                let best = (0..m.len()).fold(0, |b, i| if m[i] < m[b] { i } else { b });
                rows[best].key.join(" ")
            });
            let present = rows.iter().any(|r| r.key.join(" ") == expected);
            Finding {
                column: column.clone(),
                holds: lowest.as_ref().filter(|_| present).map(|l| *l == expected),
                expected,
                lowest,
            }
        })
        .collect();
    Ok(SweepReport {
        axis: layout.axis.into(),
        key_columns: layout.key_columns,
        columns: layout.columns,
        rows,
        findings,
    })
}

/// Aligned text table with one row per axis value, then one line per finding.
pub fn render_table(report: &SweepReport) -> String {
    let mut lines: Vec<Vec<String>> = vec![report.key_columns.iter().chain(&report.columns).cloned().collect()];
    for row in &report.rows {
        let mut line = row.key.clone();
        line.extend(
            row.cells
                .iter()
                .map(|c| c.mean.map_or_else(|| "failed".to_string(), |m| format!("{m:.3}"))),
        );
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|i| lines.iter().map(|l| l[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &lines {
        let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
    }
    for f in &report.findings {
        let verdict = match f.holds {
            Some(true) => "holds",
            Some(false) => "does not hold",
            None => "undetermined",
        };
        let lowest = f.lowest.as_deref().unwrap_or("n/a");
        writeln!(out, "{}: lowest at {lowest}, expected {}: {verdict}", f.column, f.expected).unwrap();
    }
    out
}
