mod common;

use std::collections::BTreeMap;

use common::*;
use finlm::metrics::*;
use finlm::rng::rng_from_seed;
use rand::seq::SliceRandom;
use rand::Rng;

fn ranked(grades: &[f64], order: &[usize]) -> RankedList {
    let relevance: BTreeMap<String, f64> = grades.iter().enumerate().map(|(i, g)| (format!("d{i}"), *g)).collect();
    RankedList::new("q", order.iter().map(|i| format!("d{i}")).collect(), relevance).unwrap()
}

#[test]
fn ndcg_grades_012_ranked_201() {
    // documents d0, d1, d2 have grades 0, 1, 2; the system ranks d2, d0, d1
    let l = ranked(&[0.0, 1.0, 2.0], &[2, 0, 1]);
    let got = ndcg(&l, Some(3)).unwrap();
    let expect = ndcg_by_enumeration(&[2.0, 0.0, 1.0], &[0.0, 1.0, 2.0], 3);
    assert!((got - expect).abs() < 1e-12);
    let dcg = 3.0 + 1.0 / 4f64.log2();
    let idcg = 3.0 + 1.0 / 3f64.log2();
    assert!((got - dcg / idcg).abs() < 1e-12);
    assert_eq!(ndcg(&ranked(&[0.0, 1.0, 2.0], &[2, 1, 0]), Some(3)).unwrap(), 1.0);
}

#[test]
fn ndcg_and_precision_match_oracles_on_random_lists() {
    let mut rng = rng_from_seed(61);
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let grades: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let retrieved = rng.random_range(1..=n);
        order.truncate(retrieved);
        let l = ranked(&grades, &order);
        let ranked_grades: Vec<f64> = order.iter().map(|&i| grades[i]).collect();
        let k = rng.random_range(1..=n + 2);
        let got = ndcg(&l, Some(k)).unwrap();
        assert!((got - ndcg_by_enumeration(&ranked_grades, &grades, k)).abs() < 1e-12);
        assert!((0.0..=1.0 + 1e-12).contains(&got));
        let p = precision_at_k(&l, k, 0.0).unwrap();
        assert_eq!(p, precision_loop(&ranked_grades, k));
    }
}

#[test]
fn ndcg_is_one_exactly_on_grade_sorted_rankings() {
    let mut rng = rng_from_seed(62);
    for _ in 0..100 {
        let n = rng.random_range(1..=12);
        let grades: Vec<f64> = (0..n).map(|_| rng.random_range(0..4) as f64).collect();
        if grades.iter().all(|&g| g == 0.0) {
            continue;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.sort_by(|&a, &b| grades[b].total_cmp(&grades[a]));
        let l = ranked(&grades, &order);
        assert_eq!(ndcg(&l, None).unwrap(), 1.0);
        assert_eq!(ndcg(&l, Some(10)).unwrap(), 1.0);
    }
}

#[test]
fn mrr_matches_oracle_and_ignores_query_order() {
    let mut rng = rng_from_seed(63);
    for _ in 0..100 {
        let q = rng.random_range(1..=5);
        let mut lists = Vec::new();
        let mut raw = Vec::new();
        for _ in 0..q {
            let n = rng.random_range(1..=8);
            let grades: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 }).collect();
            let order: Vec<usize> = (0..n).collect();
            lists.push(ranked(&grades, &order));
            raw.push(grades);
        }
        let got = mrr(&lists, 0.0).unwrap();
        assert!((got - mrr_loop(&raw)).abs() < 1e-12);
        lists.reverse();
        assert!((mrr(&lists, 0.0).unwrap() - got).abs() < 1e-12);
    }
}

#[test]
fn f1_and_accuracy_match_oracles() {
    let mut rng = rng_from_seed(64);
    for _ in 0..100 {
        let c = rng.random_range(2..=4);
        let n = rng.random_range(1..=30);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let classes: Vec<usize> = (0..c).collect();
        let r = f1_scores(&preds, &labels, &classes).unwrap();
        let oracle = f1_confusion(&preds, &labels, c);
        for (a, b) in r.per_class.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((r.macro_f1 - oracle.iter().sum::<f64>() / c as f64).abs() < 1e-12);
        let mut hits = 0;
        for i in 0..n {
            if preds[i] == labels[i] {
                hits += 1;
            }
        }
        assert_eq!(accuracy(&preds, &labels).unwrap(), hits as f64 / n as f64);

        // renaming classes consistently changes nothing
        let rename = |v: &[usize]| v.iter().map(|&x| (x + 1) % c).collect::<Vec<_>>();
        let renamed_classes: Vec<usize> = rename(&classes);
        let r2 = f1_scores(&rename(&preds), &rename(&labels), &renamed_classes).unwrap();
        assert!((r2.macro_f1 - r.macro_f1).abs() < 1e-12);
        assert_eq!(accuracy(&rename(&preds), &rename(&labels)).unwrap(), accuracy(&preds, &labels).unwrap());
    }
}

#[test]
fn mse_r2_match_oracle() {
    let mut rng = rng_from_seed(65);
    for _ in 0..100 {
        let n = rng.random_range(2..=12);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (mse, r2) = mse_r2(&p, &t).unwrap();
        let (omse, or2) = mse_r2_loop(&p, &t);
        assert!((mse - omse).abs() < 1e-9);
        assert!((r2.unwrap() - or2.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn mean_binary_f1_averages_tasks() {
    let a = ([true, true, false], [true, false, false]);
    let b = ([false, false], [true, true]);
    let m = mean_binary_f1(&[(&a.0, &a.1), (&b.0, &b.1)]).unwrap();
    assert!((m - (2.0 / 3.0 + 0.0) / 2.0).abs() < 1e-15);
}

#[test]
fn score_files_for_each_task() {
    let dir = tempfile::tempdir().unwrap();
    let w = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let pred = w("p.jsonl", "{\"id\":1,\"pred\":\"pos\"}\n{\"id\":2,\"pred\":\"neg\"}\n{\"id\":3,\"pred\":\"pos\"}\n");
    let gold = w("g.jsonl", "{\"id\":1,\"label\":\"pos\"}\n{\"id\":2,\"label\":\"pos\"}\n{\"id\":3,\"label\":\"pos\"}\n");
    let r = score_files(Task::Cls, &pred, &gold, 10).unwrap();
    assert!((r.get("accuracy").unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((r.get("f1[pos]").unwrap() - 0.8).abs() < 1e-15);

    let pred = w("pr.jsonl", "{\"id\":\"a\",\"pred\":1.0}\n{\"id\":\"b\",\"pred\":1.0}\n");
    let gold = w("gr.jsonl", "{\"id\":\"a\",\"label\":1.0}\n{\"id\":\"b\",\"label\":1.0}\n");
    let r = score_files(Task::Reg, &pred, &gold, 10).unwrap();
    assert_eq!(r.get("mse"), Some(0.0));
    assert_eq!(r.metrics["r2"], None);

    let pred = w("pk.jsonl", "{\"id\":\"q1\",\"ranking\":[\"x\",\"y\"]}\n{\"id\":\"q2\",\"ranking\":[\"u\",\"v\"]}\n");
    let gold = w("gk.jsonl", "{\"id\":\"q1\",\"relevance\":{\"x\":1}}\n{\"id\":\"q2\",\"relevance\":{\"v\":1}}\n");
    let r = score_files(Task::Rank, &pred, &gold, 2).unwrap();
    assert_eq!(r.get("mrr"), Some(0.75));
    assert_eq!(r.get("precision@2"), Some(0.5));

    let missing = w("m.jsonl", "{\"id\":\"q1\",\"ranking\":[]}\n");
    let err = score_files(Task::Rank, &missing, &gold, 2).unwrap_err();
    assert!(err.to_string().contains("q2"), "{err}");
}
