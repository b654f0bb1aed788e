//! Scoring: span-level precision/recall/F1 for identification, class macro
//! scores for disambiguation, and similarity-score histograms.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{spans_from_tags, ADExample, BioTag, SpanKind, TaggedSentence};
use crate::disambig::{Prediction, PredictionSource, ThresholdPoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PRF {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl PRF {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        PRF {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: gold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiMetrics {
    pub short: PRF,
    pub long: PRF,
    /// Component-wise mean of the short and long scores.
    pub macro_avg: PRF,
}

/// Exact-boundary span matching per kind, pooled over the corpus.
pub fn ai_metrics(gold: &[TaggedSentence], pred: &[Vec<BioTag>]) -> Result<AiMetrics> {
    if gold.len() != pred.len() {
        return Err(Error::Config(format!(
            "{} gold sentences but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    // (correct, predicted, gold) per kind
    let mut tally: HashMap<SpanKind, (usize, usize, usize)> = HashMap::new();
    for (g, p) in gold.iter().zip(pred) {
        if g.tags.len() != p.len() {
            return Err(Error::record(
                &g.id,
                format!("{} gold tags but {} predicted", g.tags.len(), p.len()),
            ));
        }
        let gold_spans: HashSet<_> = spans_from_tags(&g.tags)?.into_iter().collect();
        let pred_spans =
            spans_from_tags(p).map_err(|e| Error::record(&g.id, format!("prediction: {e}")))?;
        for s in &gold_spans {
            tally.entry(s.kind).or_default().2 += 1;
        }
        for s in &pred_spans {
            let t = tally.entry(s.kind).or_default();
            t.1 += 1;
            if gold_spans.contains(s) {
                t.0 += 1;
            }
        }
    }
    let prf = |k: SpanKind| {
        let (c, p, g) = tally.get(&k).copied().unwrap_or_default();
        PRF::from_counts(c, p, g)
    };
    let (short, long) = (prf(SpanKind::Short), prf(SpanKind::Long));
    let macro_avg = PRF {
        precision: (short.precision + long.precision) / 2.0,
        recall: (short.recall + long.recall) / 2.0,
        f1: (short.f1 + long.f1) / 2.0,
        support: short.support + long.support,
    };
    Ok(AiMetrics {
        short,
        long,
        macro_avg,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdMetrics {
    /// Macro precision over gold and predicted classes, macro recall over
    /// gold classes, F1 of the two.
    pub macro_avg: PRF,
    /// Correct over all gold examples; abstentions count as wrong.
    pub accuracy: f64,
    pub answered: usize,
    pub total: usize,
    pub per_class: BTreeMap<String, PRF>,
}

/// Class-level scores for disambiguation. With `allow_abstain`, gold examples
/// without a prediction count as unanswered instead of being an error.
pub fn ad_metrics(
    gold: &[ADExample],
    pred: &[Prediction],
    allow_abstain: bool,
) -> Result<AdMetrics> {
    if gold.is_empty() {
        return Err(Error::Empty("gold examples"));
    }
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for p in pred {
        if by_id.insert(&p.id, &p.label).is_some() {
            return Err(Error::record(&p.id, "duplicate prediction"));
        }
    }
    let mut gold_ids = HashSet::new();
    // label -> (correct, predicted, gold)
    let mut tally: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let (mut correct, mut answered) = (0, 0);
    for g in gold {
        let label = g
            .label
            .as_deref()
            .ok_or_else(|| Error::record(&g.id, "unlabeled gold example"))?;
        if !gold_ids.insert(g.id.as_str()) {
            return Err(Error::record(&g.id, "duplicate gold id"));
        }
        tally.entry(label).or_default().2 += 1;
        match by_id.get(g.id.as_str()) {
            Some(&p) => {
                answered += 1;
                tally.entry(p).or_default().1 += 1;
                if p == label {
                    correct += 1;
                    tally.entry(label).or_default().0 += 1;
                }
            }
            None if allow_abstain => {}
            None => return Err(Error::record(&g.id, "no prediction for gold example")),
        }
    }
    if let Some(p) = pred.iter().find(|p| !gold_ids.contains(p.id.as_str())) {
        return Err(Error::record(
            &p.id,
            "prediction for an id absent from gold",
        ));
    }

    let per_class: BTreeMap<String, PRF> = tally
        .iter()
        .map(|(l, &(c, p, g))| (l.to_string(), PRF::from_counts(c, p, g)))
        .collect();
    let precision = per_class.values().map(|s| s.precision).sum::<f64>() / per_class.len() as f64;
    let gold_classes: Vec<&PRF> = per_class.values().filter(|s| s.support > 0).collect();
    let recall = gold_classes.iter().map(|s| s.recall).sum::<f64>() / gold_classes.len() as f64;
    Ok(AdMetrics {
        macro_avg: PRF {
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: gold.len(),
        },
        accuracy: ratio(correct, gold.len()),
        answered,
        total: gold.len(),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    /// Bin edges on [-1, 1]; `bins + 1` values.
    pub edges: Vec<f64>,
    /// Normalized to sum to 1; all zeros when `correct_count` is 0.
    pub correct: Vec<f64>,
    pub incorrect: Vec<f64>,
    pub correct_count: usize,
    pub incorrect_count: usize,
}

/// Similarity-score distributions of correct and incorrect nearest-neighbor
/// predictions, over equal-width bins on [-1, 1].
pub fn score_histogram(
    predictions: &[(Prediction, String)],
    bins: usize,
) -> Result<ScoreHistogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut correct = vec![0.0; bins];
    let mut incorrect = vec![0.0; bins];
    let (mut nc, mut ni) = (0, 0);
    for (p, gold) in predictions {
        let Some(score) = p
            .score
            .filter(|_| p.source == PredictionSource::NearestNeighbor)
        else {
            continue;
        };
        if !(-1.0..=1.0).contains(&score) {
            return Err(Error::record(
                &p.id,
                format!("score {score} outside [-1, 1]"),
            ));
        }
        let bin = (((score + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
        if p.label == *gold {
            correct[bin] += 1.0;
            nc += 1;
        } else {
            incorrect[bin] += 1.0;
            ni += 1;
        }
    }
    if nc + ni == 0 {
        return Err(Error::Empty("scored predictions"));
    }
    for (h, n) in [(&mut correct, nc), (&mut incorrect, ni)] {
        if n > 0 {
            h.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    let edges = (0..=bins)
        .map(|i| -1.0 + 2.0 * i as f64 / bins as f64)
        .collect();
    Ok(ScoreHistogram {
        edges,
        correct,
        incorrect,
        correct_count: nc,
        incorrect_count: ni,
    })
}

/// Everything the `report` command prints or stores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ai: Option<AiMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ad: Option<AdMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<ScoreHistogram>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<ThresholdPoint>,
}

impl EvaluationReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let row = |out: &mut String, name: &str, s: &PRF| {
            let _ = writeln!(
                out,
                "{name:<10} {:>9.2} {:>9.2} {:>9.2} {:>8}",
                100.0 * s.precision,
                100.0 * s.recall,
                100.0 * s.f1,
                s.support
            );
        };
        let header = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>8}\n",
            "", "precision", "recall", "f1", "support"
        );
        if let Some(ai) = &self.ai {
            out.push_str("identification\n");
            out.push_str(&header);
            row(&mut out, "short", &ai.short);
            row(&mut out, "long", &ai.long);
            row(&mut out, "macro", &ai.macro_avg);
        }
        if let Some(ad) = &self.ad {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str("disambiguation\n");
            out.push_str(&header);
            row(&mut out, "macro", &ad.macro_avg);
            let _ = writeln!(
                out,
                "accuracy {:.2}  answered {}/{}",
                100.0 * ad.accuracy,
                ad.answered,
                ad.total
            );
        }
        if !self.thresholds.is_empty() {
            out.push_str("\nthreshold precision    recall  coverage\n");
            for t in &self.thresholds {
                let _ = writeln!(
                    out,
                    "{:>9.3} {:>9.2} {:>9.2} {:>9.2}",
                    t.threshold,
                    100.0 * t.precision,
                    100.0 * t.recall,
                    100.0 * t.coverage
                );
            }
        }
        if let Some(h) = &self.histogram {
            let _ = writeln!(out, "\nscore bin        correct  incorrect");
            for (i, (c, w)) in h.correct.iter().zip(&h.incorrect).enumerate() {
                let _ = writeln!(
                    out,
                    "[{:>5.2},{:>5.2}) {:>9.4} {:>10.4}",
                    h.edges[i],
                    h.edges[i + 1],
                    c,
                    w
                );
            }
        }
        out
    }
}

/// Gold labels paired with predictions by id, for sweeps and histograms.
pub fn pair_with_gold(
    gold: &[ADExample],
    pred: &[Prediction],
) -> Result<Vec<(Prediction, String)>> {
    let labels: HashMap<&str, &str> = gold
        .iter()
        .filter_map(|g| g.label.as_deref().map(|l| (g.id.as_str(), l)))
        .collect();
    let mut seen = BTreeSet::new();
    pred.iter()
        .map(|p| {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::record(&p.id, "duplicate prediction"));
            }
            let gold = labels
                .get(p.id.as_str())
                .ok_or_else(|| Error::record(&p.id, "no gold label"))?;
            Ok((p.clone(), gold.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::random_valid_tags;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use BioTag::*;

    fn sent(id: &str, tags: Vec<BioTag>) -> TaggedSentence {
        let tokens = (0..tags.len()).map(|i| format!("w{i}")).collect();
        TaggedSentence::new(id, tokens, tags).unwrap()
    }

    fn ad(id: &str, label: &str) -> ADExample {
        ADExample::new(id, vec!["X".into()], 0, Some(label.into())).unwrap()
    }

    fn pred(id: &str, label: &str, score: Option<f64>) -> Prediction {
        Prediction {
            id: id.into(),
            label: label.into(),
            score,
            source: if score.is_some() {
                PredictionSource::NearestNeighbor
            } else {
                PredictionSource::ExpansionInSentence
            },
            matched_train_id: None,
        }
    }

    #[test]
    fn ai_examples() {
        let gold = vec![
            sent("a", vec![BShort, O, BLong, ILong, ILong]),
            sent("b", vec![O, BShort]),
        ];
        let tags: Vec<_> = gold.iter().map(|s| s.tags.clone()).collect();
        assert_eq!(ai_metrics(&gold, &tags).unwrap().macro_avg.f1, 1.0);

        let one = vec![sent("c", vec![BShort, O])];
        let m = ai_metrics(&one, &[vec![O, O]]).unwrap();
        assert_eq!(
            (m.short.precision, m.short.recall, m.short.f1),
            (0.0, 0.0, 0.0)
        );

        let long = vec![sent("d", vec![BLong, ILong, ILong, O])];
        let m = ai_metrics(&long, &[vec![BLong, ILong, O, O]]).unwrap();
        assert_eq!((m.long.precision, m.long.recall), (0.0, 0.0));

        let err = ai_metrics(&long, &[vec![O]]).unwrap_err();
        assert!(err.to_string().contains('d'));
    }

    #[test]
    fn ad_examples() {
        let gold = vec![ad("1", "A"), ad("2", "B")];
        let all = vec![pred("1", "A", None), pred("2", "B", None)];
        let m = ad_metrics(&gold, &all, false).unwrap();
        assert_eq!((m.macro_avg.f1, m.accuracy), (1.0, 1.0));

        let all_a = vec![pred("1", "A", None), pred("2", "A", None)];
        assert_eq!(
            ad_metrics(&gold, &all_a, false).unwrap().macro_avg.recall,
            0.5
        );

        assert!(ad_metrics(&gold, &all_a[..1], false).is_err());
        let partial = ad_metrics(&gold, &all_a[..1], true).unwrap();
        assert_eq!((partial.answered, partial.accuracy), (1, 0.5));
    }

    #[test]
    fn ad_hand_computed_fixture() {
        // gold A A B B C C, predicted A A B A C B.
        // A: P 2/3 R 1; B: P 1/2 R 1/2; C: P 1 R 1/2.
        // macro P 13/18, macro R 2/3, F1 52/75.
        let gold: Vec<_> = ["A", "A", "B", "B", "C", "C"]
            .iter()
            .enumerate()
            .map(|(i, l)| ad(&i.to_string(), l))
            .collect();
        let pred: Vec<_> = ["A", "A", "B", "A", "C", "B"]
            .iter()
            .enumerate()
            .map(|(i, l)| pred(&i.to_string(), l, None))
            .collect();
        let m = ad_metrics(&gold, &pred, false).unwrap();
        assert!((m.macro_avg.precision - 13.0 / 18.0).abs() < 1e-12);
        assert!((m.macro_avg.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_avg.f1 - 52.0 / 75.0).abs() < 1e-12);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn prediction_only_class_counts_for_precision() {
        let gold = vec![ad("1", "A"), ad("2", "A")];
        let pred = vec![pred("1", "A", None), pred("2", "Z", None)];
        let m = ad_metrics(&gold, &pred, false).unwrap();
        assert_eq!(m.macro_avg.precision, 0.5);
        assert_eq!(m.macro_avg.recall, 0.5);
    }

    #[test]
    fn histogram_examples() {
        let h = score_histogram(&[(pred("1", "A", Some(1.0)), "A".into())], 10).unwrap();
        assert_eq!(h.correct[9], 1.0);
        assert_eq!(h.incorrect_count, 0);
        assert!(h.incorrect.iter().all(|x| *x == 0.0));

        let rows = vec![
            (pred("1", "A", Some(-1.0)), "A".to_string()),
            (pred("2", "A", Some(0.3)), "B".to_string()),
            (pred("3", "A", Some(0.31)), "A".to_string()),
            (pred("4", "A", None), "A".to_string()),
        ];
        let h = score_histogram(&rows, 4).unwrap();
        assert!((h.correct.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((h.incorrect.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(h.correct[0], 0.5);
        assert!(score_histogram(&rows[3..], 4).is_err());
    }

    #[test]
    fn table_mentions_every_section() {
        let gold = vec![sent("a", vec![BShort])];
        let report = EvaluationReport {
            ai: Some(ai_metrics(&gold, &[vec![BShort]]).unwrap()),
            ..Default::default()
        };
        let text = report.render_table();
        assert!(text.contains("macro") && text.contains("100.00"));
    }

    proptest! {
        #[test]
        fn ai_monotonicity(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let gold: Vec<TaggedSentence> = (0..6)
                .map(|_| random_valid_tags(&mut rng, 12))
                .enumerate()
                .filter(|(_, t)| !t.is_empty())
                .map(|(i, t)| sent(&i.to_string(), t))
                .collect();
            let tags: Vec<Vec<BioTag>> = gold.iter().map(|s| s.tags.clone()).collect();
            let full = ai_metrics(&gold, &tags).unwrap();
            prop_assert!(full.macro_avg.f1 == 1.0 || full.short.support == 0 || full.long.support == 0);

            // Drop one correct span: recall cannot rise.
            for (i, s) in gold.iter().enumerate() {
                if let Some(span) = spans_from_tags(&s.tags).unwrap().first() {
                    let mut fewer = tags.clone();
                    fewer[i][span.start..span.end].iter_mut().for_each(|t| *t = O);
                    let m = ai_metrics(&gold, &fewer).unwrap();
                    prop_assert!(m.short.recall <= full.short.recall && m.long.recall <= full.long.recall);
                    break;
                }
            }
            // Add one wrong span on an O position: precision cannot rise.
            for (i, s) in gold.iter().enumerate() {
                if let Some(p) = (0..s.tags.len()).find(|&p| s.tags[p] == O && s.tags.get(p + 1).is_none_or(|t| !t.is_inside())) {
                    let mut more = tags.clone();
                    more[i][p] = BShort;
                    let m = ai_metrics(&gold, &more).unwrap();
                    prop_assert!(m.short.precision <= full.short.precision);
                    break;
                }
            }
        }

        #[test]
        fn accuracy_is_mean_correctness(rows in prop::collection::vec((0usize..3, 0usize..3), 1..30)) {
            let labels = ["A", "B", "C"];
            let gold: Vec<_> = rows.iter().enumerate().map(|(i, (g, _))| ad(&i.to_string(), labels[*g])).collect();
            let preds: Vec<_> = rows.iter().enumerate().map(|(i, (_, p))| pred(&i.to_string(), labels[*p], None)).collect();
            let m = ad_metrics(&gold, &preds, false).unwrap();
            let mean = rows.iter().filter(|(g, p)| g == p).count() as f64 / rows.len() as f64;
            prop_assert!((m.accuracy - mean).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&m.macro_avg.f1));
        }
    }
}
