//! Retrieval and classification metrics: average precision, mean AP over
//! queries, micro AP over jointly ranked class predictions, and the three
//! nearest-neighbor classifiers used on top of ranked search results.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::error::{Error, Result};

/// Relevance judgements for one query. Ignored images are removed from the
/// ranking before average precision is computed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryRelevance {
    pub positives: BTreeSet<String>,
    pub ignores: BTreeSet<String>,
}

impl QueryRelevance {
    pub fn new(positives: BTreeSet<String>, ignores: BTreeSet<String>) -> Result<Self> {
        if let Some(overlap) = positives.intersection(&ignores).next() {
            return Err(Error::InvalidParameter(format!(
                "image `{overlap}` is both positive and ignored"
            )));
        }
        Ok(Self { positives, ignores })
    }
}

/// Per-query relevance judgements for a retrieval task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalGroundTruth {
    pub queries: BTreeMap<String, QueryRelevance>,
}

/// Class labels of the database images plus the (optional) true class of
/// each query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassGroundTruth {
    pub labels: BTreeMap<String, String>,
    pub query_classes: BTreeMap<String, Option<String>>,
}

impl ClassGroundTruth {
    /// Database-side class frequencies.
    pub fn class_frequencies(&self) -> BTreeMap<String, usize> {
        let mut freq = BTreeMap::new();
        for class in self.labels.values() {
            *freq.entry(class.clone()).or_insert(0usize) += 1;
        }
        freq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrediction {
    pub query_id: String,
    pub class: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierVariant {
    /// Class of the top-ranked image, its score as confidence.
    Cls1,
    /// Per class, the summed scores of its up-to-10 highest-ranked images.
    Cls2,
    /// Like Cls2 but accumulating sqrt(score) * ln(n_classes / frequency).
    Cls3,
}

/// Average precision of one ranking. Ignored ids are dropped first; queries
/// without positives are signalled as `None` and excluded from the mean.
pub fn average_precision(ranking: &[String], relevance: &QueryRelevance) -> Result<Option<f64>> {
    let mut seen = HashSet::with_capacity(ranking.len());
    for id in ranking {
        if !seen.insert(id) {
            return Err(Error::DuplicateRankingEntry(id.clone()));
        }
    }
    if relevance.positives.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    let mut rank = 0usize;
    let mut sum = 0.0f64;
    for id in ranking {
        if relevance.ignores.contains(id) {
            continue;
        }
        rank += 1;
        if relevance.positives.contains(id) {
            hits += 1;
            sum += hits as f64 / rank as f64;
        }
    }
    Ok(Some(sum / relevance.positives.len() as f64))
}

/// Arithmetic mean of the per-query average precisions, skipping queries
/// without positives. Queries missing from the ground truth are an error.
pub fn mean_average_precision(
    rankings: &[(String, Vec<String>)],
    gt: &RetrievalGroundTruth,
) -> Result<f64> {
    let mut total = 0.0f64;
    let mut used = 0usize;
    for (query, ranking) in rankings {
        let relevance = gt.queries.get(query).ok_or_else(|| {
            Error::InvalidParameter(format!("query `{query}` has no ground truth"))
        })?;
        if let Some(ap) = average_precision(ranking, relevance)? {
            total += ap;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NoUsableQueries("all queries lack positives"));
    }
    Ok(total / used as f64)
}

/// Micro (global) average precision: all predictions ranked jointly by
/// confidence, relevant when the predicted class equals the query's true
/// class, normalized by the number of queries that have a true class.
pub fn micro_average_precision(
    predictions: &[ClassPrediction],
    gt: &ClassGroundTruth,
) -> Result<f64> {
    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(&p.query_id) {
            return Err(Error::DuplicateRankingEntry(p.query_id.clone()));
        }
    }
    let labeled = gt.query_classes.values().filter(|c| c.is_some()).count();
    if labeled == 0 {
        return Err(Error::NoUsableQueries("no query has a true class"));
    }
    let mut order: Vec<&ClassPrediction> = predictions.iter().collect();
    order.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.query_id.cmp(&b.query_id))
    });
    let mut correct = 0usize;
    let mut sum = 0.0f64;
    for (i, p) in order.iter().enumerate() {
        let relevant = matches!(
            gt.query_classes.get(&p.query_id),
            Some(Some(true_class)) if *true_class == p.class
        );
        if relevant {
            correct += 1;
            sum += correct as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / labeled as f64)
}

/// Predicts a class from a ranked (image, score) list by accumulating the
/// top-ranked images per class. Images without a label are skipped. Returns
/// `None` when no labeled image is ranked. Ties between classes go to the
/// class appearing first in the ranking.
pub fn classify(
    query_id: &str,
    ranking: &[(String, f64)],
    labels: &BTreeMap<String, String>,
    variant: ClassifierVariant,
    class_freq: &BTreeMap<String, usize>,
    n_classes: usize,
) -> Result<Option<ClassPrediction>> {
    let per_class_budget = match variant {
        ClassifierVariant::Cls1 => 1usize,
        ClassifierVariant::Cls2 | ClassifierVariant::Cls3 => 10,
    };
    struct Tally {
        confidence: f64,
        members: usize,
        first_rank: usize,
    }
    let mut tallies: BTreeMap<&str, Tally> = BTreeMap::new();
    let mut order = 0usize;
    for (image, score) in ranking {
        let Some(class) = labels.get(image) else {
            continue;
        };
        if matches!(variant, ClassifierVariant::Cls3) && *score < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "negative score {score} cannot be square-rooted for CLS3"
            )));
        }
        let contribution = match variant {
            ClassifierVariant::Cls1 | ClassifierVariant::Cls2 => *score,
            ClassifierVariant::Cls3 => {
                let freq = *class_freq.get(class).ok_or_else(|| {
                    Error::InvalidParameter(format!("class `{class}` has no frequency"))
                })?;
                if freq == 0 || n_classes == 0 {
                    return Err(Error::InvalidParameter(
                        "class frequency and class count must be positive".into(),
                    ));
                }
                score.sqrt() * (n_classes as f64 / freq as f64).ln()
            }
        };
        let tally = tallies.entry(class).or_insert(Tally {
            confidence: 0.0,
            members: 0,
            first_rank: order,
        });
        if tally.members < per_class_budget {
            tally.confidence += contribution;
            tally.members += 1;
        }
        order += 1;
    }
    let best = tallies.into_iter().min_by(|a, b| {
        b.1.confidence
            .total_cmp(&a.1.confidence)
            .then(a.1.first_rank.cmp(&b.1.first_rank))
    });
    Ok(best.map(|(class, tally)| ClassPrediction {
        query_id: query_id.to_string(),
        class: class.to_string(),
        confidence: tally.confidence,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn relevance(positives: &[&str], ignores: &[&str]) -> QueryRelevance {
        QueryRelevance::new(
            positives.iter().map(|s| s.to_string()).collect(),
            ignores.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    /// Quadratic-time reference: precision at each positive rank is
    /// recomputed by scanning the whole prefix.
    fn ap_oracle(ranking: &[String], relevance: &QueryRelevance) -> Option<f64> {
        let filtered: Vec<&String> = ranking
            .iter()
            .filter(|id| !relevance.ignores.contains(*id))
            .collect();
        if relevance.positives.is_empty() {
            return None;
        }
        let mut sum = 0.0f64;
        for (k, id) in filtered.iter().enumerate() {
            if relevance.positives.contains(*id) {
                let hits = filtered[..=k]
                    .iter()
                    .filter(|x| relevance.positives.contains(**x))
                    .count();
                sum += hits as f64 / (k + 1) as f64;
            }
        }
        Some(sum / relevance.positives.len() as f64)
    }

    #[test]
    fn ap_formula_example() {
        let ranking = ids(&["a", "b", "c", "d"]);
        let rel = relevance(&["a", "c"], &[]);
        let ap = average_precision(&ranking, &rel).unwrap().unwrap();
        assert_relative_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ap_all_positives_first_is_one() {
        let ranking = ids(&["p1", "p2", "p3", "n1", "n2"]);
        let rel = relevance(&["p1", "p2", "p3"], &[]);
        assert_eq!(average_precision(&ranking, &rel).unwrap(), Some(1.0));
    }

    #[test]
    fn ap_ignores_are_removed_before_scoring() {
        // With the ignore removed, positives sit at ranks 1 and 2.
        let ranking = ids(&["p1", "x", "p2", "n"]);
        let rel = relevance(&["p1", "p2"], &["x"]);
        assert_eq!(average_precision(&ranking, &rel).unwrap(), Some(1.0));
    }

    #[test]
    fn ap_empty_positives_signals_skip() {
        let ranking = ids(&["a", "b"]);
        let rel = relevance(&[], &["b"]);
        assert_eq!(average_precision(&ranking, &rel).unwrap(), None);
    }

    #[test]
    fn ap_rejects_duplicate_ranking() {
        let ranking = ids(&["a", "a"]);
        let rel = relevance(&["a"], &[]);
        assert!(matches!(
            average_precision(&ranking, &rel),
            Err(Error::DuplicateRankingEntry(_))
        ));
    }

    #[test]
    fn ap_matches_quadratic_oracle_on_random_rankings() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        for _ in 0..300 {
            let n = rng.random_range(1..40usize);
            let pool: Vec<String> = (0..n).map(|i| format!("img{i}")).collect();
            let mut ranking = pool.clone();
            for i in (1..ranking.len()).rev() {
                ranking.swap(i, rng.random_range(0..=i));
            }
            let positives: BTreeSet<String> = pool
                .iter()
                .filter(|_| rng.random_bool(0.3))
                .cloned()
                .collect();
            let ignores: BTreeSet<String> = pool
                .iter()
                .filter(|id| !positives.contains(*id) && rng.random_bool(0.1))
                .cloned()
                .collect();
            let rel = QueryRelevance::new(positives, ignores).unwrap();
            let got = average_precision(&ranking, &rel).unwrap();
            let expected = ap_oracle(&ranking, &rel);
            match (got, expected) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                other => panic!("mismatch: {other:?}"),
            }
        }
    }

    #[test]
    fn ap_invariant_to_shuffling_negatives_below_last_positive() {
        let rel = relevance(&["p1", "p2"], &[]);
        let base = ids(&["n1", "p1", "n2", "p2", "n3", "n4", "n5"]);
        let ap = average_precision(&base, &rel).unwrap().unwrap();
        let swapped = ids(&["n1", "p1", "n2", "p2", "n5", "n3", "n4"]);
        assert_eq!(
            average_precision(&swapped, &rel).unwrap().unwrap(),
            ap
        );
        // AP = 1 iff the positives occupy the top |P| ranks.
        assert!(ap < 1.0);
        let perfect = ids(&["p2", "p1", "n1", "n2", "n3", "n4", "n5"]);
        assert_eq!(average_precision(&perfect, &rel).unwrap(), Some(1.0));
    }

    #[test]
    fn map_is_mean_over_usable_queries() {
        let mut gt = RetrievalGroundTruth::default();
        gt.queries.insert("q1".into(), relevance(&["a"], &[]));
        gt.queries.insert("q2".into(), relevance(&["b"], &[]));
        gt.queries.insert("q3".into(), relevance(&[], &[]));
        let rankings = vec![
            ("q1".to_string(), ids(&["a", "b"])),
            ("q2".to_string(), ids(&["a", "b"])),
            ("q3".to_string(), ids(&["a", "b"])),
        ];
        // q1: AP 1.0; q2: AP 0.5; q3 skipped.
        assert_relative_eq!(
            mean_average_precision(&rankings, &gt).unwrap(),
            0.75,
            epsilon = 1e-12
        );
        let single = vec![("q2".to_string(), ids(&["a", "b"]))];
        assert_relative_eq!(
            mean_average_precision(&single, &gt).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        let unusable = vec![("q3".to_string(), ids(&["a", "b"]))];
        assert!(matches!(
            mean_average_precision(&unusable, &gt),
            Err(Error::NoUsableQueries(_))
        ));
    }

    #[test]
    fn map_matches_oracle_mean_on_random_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let mut gt = RetrievalGroundTruth::default();
            let mut rankings = Vec::new();
            let mut oracle_aps = Vec::new();
            for q in 0..rng.random_range(1..8usize) {
                let pool: Vec<String> = (0..rng.random_range(2..20usize))
                    .map(|i| format!("i{i}"))
                    .collect();
                let mut ranking = pool.clone();
                for i in (1..ranking.len()).rev() {
                    ranking.swap(i, rng.random_range(0..=i));
                }
                let positives: BTreeSet<String> =
                    pool.iter().filter(|_| rng.random_bool(0.5)).cloned().collect();
                let rel = QueryRelevance::new(positives, BTreeSet::new()).unwrap();
                if let Some(ap) = ap_oracle(&ranking, &rel) {
                    oracle_aps.push(ap);
                }
                gt.queries.insert(format!("q{q}"), rel);
                rankings.push((format!("q{q}"), ranking));
            }
            if oracle_aps.is_empty() {
                continue;
            }
            let expected = oracle_aps.iter().sum::<f64>() / oracle_aps.len() as f64;
            assert!((mean_average_precision(&rankings, &gt).unwrap() - expected).abs() < 1e-12);
        }
    }

    fn class_gt(labels: &[(&str, &str)], queries: &[(&str, Option<&str>)]) -> ClassGroundTruth {
        ClassGroundTruth {
            labels: labels
                .iter()
                .map(|(i, c)| (i.to_string(), c.to_string()))
                .collect(),
            query_classes: queries
                .iter()
                .map(|(q, c)| (q.to_string(), c.map(|s| s.to_string())))
                .collect(),
        }
    }

    fn prediction(query: &str, class: &str, confidence: f64) -> ClassPrediction {
        ClassPrediction {
            query_id: query.to_string(),
            class: class.to_string(),
            confidence,
        }
    }

    #[test]
    fn micro_ap_all_correct_is_one() {
        let gt = class_gt(&[], &[("q1", Some("A")), ("q2", Some("B"))]);
        let preds = vec![prediction("q1", "A", 0.9), prediction("q2", "B", 0.4)];
        assert_relative_eq!(micro_average_precision(&preds, &gt).unwrap(), 1.0);
    }

    #[test]
    fn micro_ap_formula_example() {
        let gt = class_gt(&[], &[("q1", Some("A")), ("q2", Some("B"))]);
        // Higher-confidence prediction wrong, lower one right.
        let preds = vec![prediction("q1", "X", 0.9), prediction("q2", "B", 0.4)];
        assert_relative_eq!(micro_average_precision(&preds, &gt).unwrap(), 0.25);
    }

    #[test]
    fn micro_ap_unlabeled_queries_count_as_false_positives_only() {
        let gt = class_gt(&[], &[("q1", Some("A")), ("q2", None)]);
        // q2 outranks q1 but has no true class: precision at q1 drops.
        let preds = vec![prediction("q2", "A", 0.9), prediction("q1", "A", 0.4)];
        assert_relative_eq!(micro_average_precision(&preds, &gt).unwrap(), 0.5);
        // A missing prediction for a labeled query lowers the mean.
        let gt2 = class_gt(&[], &[("q1", Some("A")), ("q3", Some("C"))]);
        let preds2 = vec![prediction("q1", "A", 0.4)];
        assert_relative_eq!(micro_average_precision(&preds2, &gt2).unwrap(), 0.5);
    }

    #[test]
    fn micro_ap_matches_bruteforce_reimplementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let classes = ["A", "B", "C"];
        for _ in 0..200 {
            let n = rng.random_range(1..20usize);
            let mut gt = ClassGroundTruth::default();
            let mut preds = Vec::new();
            for q in 0..n {
                let true_class = if rng.random_bool(0.8) {
                    Some(classes[rng.random_range(0..3)].to_string())
                } else {
                    None
                };
                gt.query_classes.insert(format!("q{q:03}"), true_class);
                if rng.random_bool(0.9) {
                    preds.push(prediction(
                        &format!("q{q:03}"),
                        classes[rng.random_range(0..3)],
                        // Coarse confidences force ties.
                        (rng.random_range(0..5) as f64) / 4.0,
                    ));
                }
            }
            let m = gt.query_classes.values().filter(|c| c.is_some()).count();
            if m == 0 {
                continue;
            }
            // Brute force: stable sort on negated confidence then id.
            let mut order = preds.clone();
            order.sort_by(|a, b| {
                b.confidence
                    .partial_cmp(&a.confidence)
                    .unwrap()
                    .then(a.query_id.cmp(&b.query_id))
            });
            let mut correct = 0usize;
            let mut expected = 0.0f64;
            for (i, p) in order.iter().enumerate() {
                let rel = gt.query_classes.get(&p.query_id).unwrap().as_deref()
                    == Some(p.class.as_str());
                if rel {
                    correct += 1;
                    expected += correct as f64 / (i + 1) as f64;
                }
            }
            expected /= m as f64;
            assert!((micro_average_precision(&preds, &gt).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn micro_ap_is_monotone_in_correct_confidence() {
        let gt = class_gt(
            &[],
            &[("q1", Some("A")), ("q2", Some("B")), ("q3", Some("C"))],
        );
        let base = vec![
            prediction("q1", "A", 0.2),
            prediction("q2", "X", 0.8),
            prediction("q3", "C", 0.5),
        ];
        let before = micro_average_precision(&base, &gt).unwrap();
        let mut raised = base.clone();
        raised[0].confidence = 0.9;
        let after = micro_average_precision(&raised, &gt).unwrap();
        assert!(after >= before);
    }

    #[test]
    fn cls1_takes_top_image() {
        let gt = class_gt(&[("i1", "A")], &[]);
        let freq = gt.class_frequencies();
        let ranking = vec![("i1".to_string(), 0.4)];
        let pred = classify("q", &ranking, &gt.labels, ClassifierVariant::Cls1, &freq, 1)
            .unwrap()
            .unwrap();
        assert_eq!(pred.class, "A");
        assert_relative_eq!(pred.confidence, 0.4);
    }

    #[test]
    fn cls2_accumulates_per_class() {
        let gt = class_gt(&[("i1", "A"), ("i2", "B"), ("i3", "B")], &[]);
        let freq = gt.class_frequencies();
        let ranking = vec![
            ("i1".to_string(), 0.5),
            ("i2".to_string(), 0.4),
            ("i3".to_string(), 0.3),
        ];
        let pred = classify("q", &ranking, &gt.labels, ClassifierVariant::Cls2, &freq, 2)
            .unwrap()
            .unwrap();
        assert_eq!(pred.class, "B");
        assert_relative_eq!(pred.confidence, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn cls2_counts_only_top_ten_per_class() {
        let labels: BTreeMap<String, String> = (0..15)
            .map(|i| (format!("i{i}"), "A".to_string()))
            .collect();
        let freq: BTreeMap<String, usize> = [("A".to_string(), 15)].into();
        let ranking: Vec<(String, f64)> = (0..15).map(|i| (format!("i{i}"), 1.0)).collect();
        let pred = classify("q", &ranking, &labels, ClassifierVariant::Cls2, &freq, 1)
            .unwrap()
            .unwrap();
        assert_relative_eq!(pred.confidence, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn cls3_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let classes = ["A", "B", "C", "D"];
        for _ in 0..100 {
            let n_images = rng.random_range(1..30usize);
            let labels: BTreeMap<String, String> = (0..n_images)
                .map(|i| {
                    (
                        format!("i{i}"),
                        classes[rng.random_range(0..4)].to_string(),
                    )
                })
                .collect();
            let gt = ClassGroundTruth {
                labels: labels.clone(),
                query_classes: BTreeMap::new(),
            };
            let freq = gt.class_frequencies();
            let n_classes = freq.len();
            let mut ranking: Vec<(String, f64)> = labels
                .keys()
                .map(|id| (id.clone(), rng.random_range(0.0..1.0)))
                .collect();
            ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
            let pred =
                classify("q", &ranking, &labels, ClassifierVariant::Cls3, &freq, n_classes)
                    .unwrap()
                    .unwrap();
            // Direct formula, ties to the class first ranked.
            let mut acc: Vec<(String, f64, usize)> = Vec::new();
            for (rank, (id, score)) in ranking.iter().enumerate() {
                let class = &labels[id];
                let weight = (n_classes as f64 / freq[class] as f64).ln();
                match acc.iter_mut().find(|(c, _, _)| c == class) {
                    Some((_, value, members)) => {
                        if *members < 10 {
                            *value += score.sqrt() * weight;
                            *members += 1;
                        }
                    }
                    None => acc.push((class.clone(), score.sqrt() * weight, 1)),
                }
                let _ = rank;
            }
            let best = acc
                .iter()
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assert_eq!(pred.class, best.0);
            assert!((pred.confidence - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn cls3_rejects_negative_scores() {
        let gt = class_gt(&[("i1", "A")], &[]);
        let freq = gt.class_frequencies();
        let ranking = vec![("i1".to_string(), -0.1)];
        assert!(classify("q", &ranking, &gt.labels, ClassifierVariant::Cls3, &freq, 1).is_err());
    }

    #[test]
    fn classify_empty_ranking_has_no_prediction() {
        let gt = class_gt(&[("i1", "A")], &[]);
        let freq = gt.class_frequencies();
        assert_eq!(
            classify("q", &[], &gt.labels, ClassifierVariant::Cls1, &freq, 1).unwrap(),
            None
        );
        // A ranking with only unlabeled images gives no prediction either.
        let ranking = vec![("unknown".to_string(), 1.0)];
        assert_eq!(
            classify("q", &ranking, &gt.labels, ClassifierVariant::Cls1, &freq, 1).unwrap(),
            None
        );
    }

    #[test]
    fn classify_ties_go_to_first_ranked_class() {
        let gt = class_gt(&[("i1", "B"), ("i2", "A")], &[]);
        let freq = gt.class_frequencies();
        let ranking = vec![("i1".to_string(), 0.5), ("i2".to_string(), 0.5)];
        let pred = classify("q", &ranking, &gt.labels, ClassifierVariant::Cls2, &freq, 2)
            .unwrap()
            .unwrap();
        assert_eq!(pred.class, "B");
    }

    #[test]
    fn cls1_equals_cls2_when_classes_are_singletons() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        for _ in 0..50 {
            let n = rng.random_range(1..10usize);
            // Every image its own class: at most one per class in any top-10.
            let labels: BTreeMap<String, String> =
                (0..n).map(|i| (format!("i{i}"), format!("C{i}"))).collect();
            let freq: BTreeMap<String, usize> =
                labels.values().map(|c| (c.clone(), 1usize)).collect();
            let mut ranking: Vec<(String, f64)> = (0..n)
                .map(|i| (format!("i{i}"), rng.random_range(0.1..1.0)))
                .collect();
            ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
            let p1 = classify("q", &ranking, &labels, ClassifierVariant::Cls1, &freq, n)
                .unwrap()
                .unwrap();
            let p2 = classify("q", &ranking, &labels, ClassifierVariant::Cls2, &freq, n)
                .unwrap()
                .unwrap();
            assert_eq!(p1.class, p2.class);
            assert_eq!(p1.confidence, p2.confidence);
        }
    }

    #[test]
    fn classify_is_scale_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let gt = class_gt(&[("i1", "A"), ("i2", "B"), ("i3", "A")], &[]);
        let freq = gt.class_frequencies();
        let ranking: Vec<(String, f64)> = vec![
            ("i1".to_string(), rng.random_range(0.1..1.0)),
            ("i2".to_string(), rng.random_range(0.1..1.0)),
            ("i3".to_string(), rng.random_range(0.1..1.0)),
        ];
        let c = 3.5f64;
        let scaled: Vec<(String, f64)> =
            ranking.iter().map(|(id, s)| (id.clone(), s * c)).collect();
        for variant in [
            ClassifierVariant::Cls1,
            ClassifierVariant::Cls2,
            ClassifierVariant::Cls3,
        ] {
            let a = classify("q", &ranking, &gt.labels, variant, &freq, 2)
                .unwrap()
                .unwrap();
            let b = classify("q", &scaled, &gt.labels, variant, &freq, 2)
                .unwrap()
                .unwrap();
            assert_eq!(a.class, b.class);
            let expected = match variant {
                ClassifierVariant::Cls3 => a.confidence * c.sqrt(),
                _ => a.confidence * c,
            };
            assert_relative_eq!(b.confidence, expected, max_relative = 1e-12);
        }
    }
}
