//! Classification, regression, and ranking metrics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::contract(format!("length mismatch: {a} predictions, {b} labels")));
    }
    if a == 0 {
        return Err(Error::contract("no examples"));
    }
    Ok(())
}

pub fn accuracy<T: PartialEq>(preds: &[T], labels: &[T]) -> Result<f64> {
    same_len(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Mean squared error, and R² about the target mean (`None` when the
/// targets are constant or there are fewer than two).
pub fn mse_r2(preds: &[f64], targets: &[f64]) -> Result<(f64, Option<f64>)> {
    same_len(preds.len(), targets.len())?;
    let n = targets.len() as f64;
    let ss_res: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r2 = (targets.len() >= 2 && ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Ok((ss_res / n, r2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub per_class: Vec<f64>,
    pub macro_f1: f64,
}

/// `2PR / (P + R)`, zero when `P + R = 0`.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// One-vs-rest F1 for each class in `classes`, plus their unweighted mean.
pub fn f1_scores<T: PartialEq>(preds: &[T], labels: &[T], classes: &[T]) -> Result<F1Report> {
    same_len(preds.len(), labels.len())?;
    if let Some(i) = labels.iter().position(|l| !classes.contains(l)) {
        return Err(Error::contract(format!("label at {i} is not a listed class")));
    }
    let per_class: Vec<f64> = classes
        .iter()
        .map(|c| {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for (p, l) in preds.iter().zip(labels) {
                match (p == c, l == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            f1_from_counts(tp, fp, fn_)
        })
        .collect();
    let macro_f1 = if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().sum::<f64>() / per_class.len() as f64
    };
    Ok(F1Report { per_class, macro_f1 })
}

/// Unweighted mean of the positive-class F1 over several binary tasks.
pub fn mean_binary_f1(tasks: &[(&[bool], &[bool])]) -> Result<f64> {
    if tasks.is_empty() {
        return Err(Error::contract("no tasks"));
    }
    let mut total = 0.0;
    for (preds, labels) in tasks {
        total += f1_scores(preds, labels, &[false, true])?.per_class[1];
    }
    Ok(total / tasks.len() as f64)
}

/// One query's retrieved documents, best first, with graded relevance.
/// Documents missing from `relevance` have grade 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: String,
    pub docs: Vec<String>,
    pub relevance: BTreeMap<String, f64>,
}

impl RankedList {
    pub fn new(query: impl Into<String>, docs: Vec<String>, relevance: BTreeMap<String, f64>) -> Result<Self> {
        let query = query.into();
        let mut seen = HashSet::new();
        if let Some(d) = docs.iter().find(|d| !seen.insert(d.as_str())) {
            return Err(Error::contract(format!("query {query}: document {d} ranked twice")));
        }
        if let Some((d, g)) = relevance.iter().find(|(_, g)| !(**g >= 0.0 && g.is_finite())) {
            return Err(Error::contract(format!("query {query}: document {d} has grade {g}")));
        }
        Ok(RankedList { query, docs, relevance })
    }

    pub fn grade(&self, doc: &str) -> f64 {
        self.relevance.get(doc).copied().unwrap_or(0.0)
    }

    pub fn grades(&self) -> Vec<f64> {
        self.docs.iter().map(|d| self.grade(d)).collect()
    }
}

/// `Σ (2^g − 1) / log2(r + 1)` over the first `k` grades (all if `None`).
pub fn dcg(grades: &[f64], k: Option<usize>) -> f64 {
    let k = k.unwrap_or(grades.len()).min(grades.len());
    grades[..k]
        .iter()
        .enumerate()
        .map(|(i, g)| (2f64.powf(*g) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// nDCG, with the ideal ranking built from every judged document.
pub fn ndcg(ranked: &RankedList, k: Option<usize>) -> Result<f64> {
    if k == Some(0) {
        return Err(Error::contract("k must be at least 1"));
    }
    let mut ideal: Vec<f64> = ranked.relevance.values().copied().collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(&ranked.grades(), k) / idcg)
}

/// Mean reciprocal rank of the first document with grade above `threshold`.
pub fn mrr(lists: &[RankedList], threshold: f64) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::contract("no queries"));
    }
    let total: f64 = lists
        .iter()
        .map(|l| {
            l.grades()
                .iter()
                .position(|&g| g > threshold)
                .map_or(0.0, |r| 1.0 / (r + 1) as f64)
        })
        .sum();
    Ok(total / lists.len() as f64)
}

/// Relevant documents (grade above `threshold`) among the first `k`, over `k`.
pub fn precision_at_k(ranked: &RankedList, k: usize, threshold: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    let hits = ranked.grades().iter().take(k).filter(|&&g| g > threshold).count();
    Ok(hits as f64 / k as f64)
}

// ---- file scoring --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cls,
    Reg,
    Rank,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cls" => Ok(Task::Cls),
            "reg" => Ok(Task::Reg),
            "rank" => Ok(Task::Rank),
            other => Err(Error::Config(format!("unknown task {other:?}; expected cls, reg, or rank"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub task: Task,
    pub examples: usize,
    /// `None` marks an undefined value (R² on constant targets).
    pub metrics: BTreeMap<String, Option<f64>>,
}

impl ScoreReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied().flatten()
    }
}

fn key(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn read_records(path: &Path, what: &'static str) -> Result<BTreeMap<String, serde_json::Map<String, Value>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let bad = |detail: String| Error::format(what, path, format!("record {}: {detail}", i + 1));
        let mut obj: serde_json::Map<String, Value> = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let id = obj.remove("id").ok_or_else(|| bad("missing \"id\"".into()))?;
        if out.insert(key(&id), obj).is_some() {
            return Err(bad(format!("duplicate id {}", key(&id))));
        }
    }
    Ok(out)
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str, id: &str, path: &Path, what: &'static str) -> Result<&'a Value> {
    obj.get(name)
        .ok_or_else(|| Error::format(what, path, format!("id {id}: missing {name:?}")))
}

fn number(v: &Value, id: &str, path: &Path, what: &'static str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::format(what, path, format!("id {id}: expected a number, got {v}")))
}

/// Score a predictions file against a gold file, joined on `id`.
///
/// Predictions carry `pred` (cls, reg) or `ranking` (rank); gold records
/// carry `label` (cls, reg) or `relevance`, a map from document id to grade.
pub fn score_files(task: Task, pred: &Path, gold: &Path, k: usize) -> Result<ScoreReport> {
    let preds = read_records(pred, "predictions")?;
    let golds = read_records(gold, "gold")?;
    if let Some(id) = golds.keys().find(|id| !preds.contains_key(*id)) {
        return Err(Error::format("predictions", pred, format!("no prediction for id {id}")));
    }
    let mut metrics = BTreeMap::new();
    match task {
        Task::Cls => {
            let mut p = Vec::new();
            let mut l = Vec::new();
            for (id, g) in &golds {
                l.push(key(field(g, "label", id, gold, "gold")?));
                p.push(key(field(&preds[id], "pred", id, pred, "predictions")?));
            }
            let classes: Vec<String> = l.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
            metrics.insert("accuracy".into(), Some(accuracy(&p, &l)?));
            let f1 = f1_scores(&p, &l, &classes)?;
            metrics.insert("macro_f1".into(), Some(f1.macro_f1));
            for (c, v) in classes.iter().zip(&f1.per_class) {
                metrics.insert(format!("f1[{c}]"), Some(*v));
            }
        }
        Task::Reg => {
            let mut p = Vec::new();
            let mut t = Vec::new();
            for (id, g) in &golds {
                t.push(number(field(g, "label", id, gold, "gold")?, id, gold, "gold")?);
                p.push(number(field(&preds[id], "pred", id, pred, "predictions")?, id, pred, "predictions")?);
            }
            let (mse, r2) = mse_r2(&p, &t)?;
            metrics.insert("mse".into(), Some(mse));
            metrics.insert("r2".into(), r2);
        }
        Task::Rank => {
            let mut lists = Vec::new();
            for (id, g) in &golds {
                let rel = field(g, "relevance", id, gold, "gold")?
                    .as_object()
                    .ok_or_else(|| Error::format("gold", gold, format!("id {id}: relevance must be an object")))?;
                let mut relevance = BTreeMap::new();
                for (doc, grade) in rel {
                    relevance.insert(doc.clone(), number(grade, id, gold, "gold")?);
                }
                let docs = field(&preds[id], "ranking", id, pred, "predictions")?
                    .as_array()
                    .ok_or_else(|| Error::format("predictions", pred, format!("id {id}: ranking must be a list")))?
                    .iter()
                    .map(key)
                    .collect();
                lists.push(RankedList::new(id.clone(), docs, relevance)?);
            }
            let n = lists.len() as f64;
            let mean = |f: &dyn Fn(&RankedList) -> Result<f64>| -> Result<f64> {
                Ok(lists.iter().map(f).collect::<Result<Vec<_>>>()?.iter().sum::<f64>() / n)
            };
            metrics.insert(format!("ndcg@{k}"), Some(mean(&|l| ndcg(l, Some(k)))?));
            metrics.insert("ndcg".into(), Some(mean(&|l| ndcg(l, None))?));
            metrics.insert("mrr".into(), Some(mrr(&lists, 0.0)?));
            metrics.insert(format!("precision@{k}"), Some(mean(&|l| precision_at_k(l, k, 0.0))?));
        }
    }
    Ok(ScoreReport {
        task,
        examples: golds.len(),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(grades_in_rank_order: &[f64]) -> RankedList {
        let docs: Vec<String> = (0..grades_in_rank_order.len()).map(|i| format!("d{i}")).collect();
        let relevance = docs.iter().cloned().zip(grades_in_rank_order.iter().copied()).collect();
        RankedList::new("q", docs, relevance).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 1, 1, 0], &[1, 1, 1, 1]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn regression_cases() {
        assert_eq!(mse_r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), (0.0, Some(1.0)));
        let (_, r2) = mse_r2(&[2.0; 3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r2, Some(0.0));
        assert_eq!(mse_r2(&[1.0, 2.0], &[5.0, 5.0]).unwrap().1, None);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(f1_scores(&[0, 1, 1], &[0, 1, 1], &[0, 1]).unwrap().macro_f1, 1.0);
        assert_eq!(f1_scores(&[0, 0, 0], &[1, 0, 1], &[0, 1]).unwrap().per_class[1], 0.0);
        // class 1: tp 2, fp 1, fn 1 -> 2/3; class 0: tp 1, fp 1, fn 1 -> 1/2
        let r = f1_scores(&[1, 1, 0, 1, 0, 2], &[1, 1, 1, 0, 0, 2], &[0, 1, 2]).unwrap();
        assert!((r.per_class[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class[0] - 0.5).abs() < 1e-15);
        assert!((r.macro_f1 - (0.5 + 2.0 / 3.0 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ranking_cases() {
        assert_eq!(ndcg(&list(&[3.0, 2.0, 0.0]), None).unwrap(), 1.0);
        assert_eq!(ndcg(&list(&[0.0, 0.0]), Some(10)).unwrap(), 0.0);
        let l = list(&[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(mrr(&[l.clone()], 0.0).unwrap(), 0.25);
        assert_eq!(mrr(&[list(&[1.0]), list(&[0.0, 2.0])], 0.0).unwrap(), 0.75);
        assert_eq!(precision_at_k(&list(&[1.0, 0.0, 1.0, 0.0, 0.0]), 5, 0.0).unwrap(), 0.4);
        assert!(RankedList::new("q", vec!["a".into(), "a".into()], BTreeMap::new()).is_err());
    }
}
