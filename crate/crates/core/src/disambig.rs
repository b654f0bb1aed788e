//! Retrieval-based acronym disambiguation: in-sentence expansion override,
//! nearest-neighbor search over an embedded train index with mean-cosine
//! ensembling, and score-threshold abstention.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    find_phrase, long_form_tokens, lowercase_tokens, normalize_long_form, read_json_lines,
    write_json_lines, ADExample, ExpansionDictionary,
};
use crate::dedupe::DuplicateKey;
use crate::embed::{cosine_with_norms, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::par;

/// Scores within this distance of the best score count as tied.
pub const SCORE_TIE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionSource {
    ExpansionInSentence,
    NearestNeighbor,
    /// The most-frequent-expansion baseline.
    MostFrequent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub source: PredictionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_train_id: Option<String>,
}

impl Prediction {
    /// Whether the prediction is kept at threshold `tau`. Only
    /// nearest-neighbor predictions can abstain.
    pub fn passes(&self, tau: f64) -> bool {
        match self.source {
            PredictionSource::NearestNeighbor => self.score.is_some_and(|s| s >= tau),
            _ => true,
        }
    }
}

/// Where one ensemble member's sentence vectors come from.
pub enum MemberSource<'a> {
    Embedder(&'a dyn Embedder),
    /// Precomputed vectors keyed by example id.
    Vectors {
        name: String,
        vectors: &'a IndexMap<String, EmbeddingVector>,
    },
}

impl MemberSource<'_> {
    pub fn name(&self) -> &str {
        match self {
            MemberSource::Embedder(e) => e.name(),
            MemberSource::Vectors { name, .. } => name,
        }
    }

    pub fn vector(&self, example: &ADExample) -> Result<EmbeddingVector> {
        match self {
            MemberSource::Embedder(e) => Ok(e.embed(&example.tokens)),
            MemberSource::Vectors { name, vectors } => vectors
                .get(&example.id)
                .cloned()
                .ok_or_else(|| Error::MissingVector {
                    id: example.id.clone(),
                    member: name.clone(),
                }),
        }
    }
}

/// Query vectors for `example`, one per member in member order.
pub fn query_vectors(
    members: &[MemberSource<'_>],
    example: &ADExample,
) -> Result<Vec<EmbeddingVector>> {
    members.iter().map(|m| m.vector(example)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub key: DuplicateKey,
    pub label: String,
    pub vectors: Vec<EmbeddingVector>,
    norms: Vec<f64>,
}

impl IndexEntry {
    fn new(id: String, key: DuplicateKey, label: String, vectors: Vec<EmbeddingVector>) -> Self {
        let norms = vectors.iter().map(EmbeddingVector::norm).collect();
        IndexEntry {
            id,
            key,
            label,
            vectors,
            norms,
        }
    }
}

/// Immutable store of embedded, labeled train examples.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    members: Vec<String>,
    entries: Vec<IndexEntry>,
    global_label_counts: BTreeMap<String, usize>,
    by_label: HashMap<String, Vec<usize>>,
}

impl RetrievalIndex {
    fn from_entries(members: Vec<String>, entries: Vec<IndexEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("retrieval index"));
        }
        if members.is_empty() {
            return Err(Error::Empty("ensemble members"));
        }
        let mut dims: Vec<Option<usize>> = vec![None; members.len()];
        let mut global_label_counts = BTreeMap::new();
        let mut by_label: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.vectors.len() != members.len() {
                return Err(Error::record(
                    &e.id,
                    format!("{} vectors for {} members", e.vectors.len(), members.len()),
                ));
            }
            for (d, v) in dims.iter_mut().zip(&e.vectors) {
                let expected = *d.get_or_insert(v.dim());
                if v.dim() != expected {
                    return Err(Error::Dimension {
                        expected,
                        found: v.dim(),
                    });
                }
            }
            *global_label_counts.entry(e.label.clone()).or_insert(0) += 1;
            by_label
                .entry(normalize_long_form(&e.label))
                .or_default()
                .push(i);
        }
        Ok(RetrievalIndex {
            members,
            entries,
            global_label_counts,
            by_label,
        })
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn global_label_counts(&self) -> &BTreeMap<String, usize> {
        &self.global_label_counts
    }

    /// Concatenates two indexes built with the same members, e.g. train and dev.
    pub fn merge(self, other: RetrievalIndex) -> Result<Self> {
        if self.members != other.members {
            return Err(Error::Config(format!(
                "cannot merge indexes with members {:?} and {:?}",
                self.members, other.members
            )));
        }
        let mut entries = self.entries;
        entries.extend(other.entries);
        RetrievalIndex::from_entries(self.members, entries)
    }

    /// Mean cosine between `query` and entry `i` over all members. Member
    /// cosines are summed in sorted order so member order does not matter.
    fn score(&self, i: usize, query: &[(EmbeddingVector, f64)]) -> f64 {
        let e = &self.entries[i];
        let mut cosines: Vec<f64> = query
            .iter()
            .zip(e.vectors.iter().zip(&e.norms))
            .map(|((q, qn), (v, vn))| cosine_with_norms(q.values(), *qn, v.values(), *vn))
            .collect();
        cosines.sort_by(f64::total_cmp);
        cosines.iter().sum::<f64>() / cosines.len() as f64
    }
}

/// Embeds every labeled train example with every member.
pub fn build_index(train: &[ADExample], members: &[MemberSource<'_>]) -> Result<RetrievalIndex> {
    if train.is_empty() {
        return Err(Error::Empty("retrieval index"));
    }
    let entries = par::try_map(train, |ex| {
        let label = ex
            .label
            .clone()
            .ok_or_else(|| Error::record(&ex.id, "unlabeled train example"))?;
        Ok(IndexEntry::new(
            ex.id.clone(),
            DuplicateKey::of(ex),
            label,
            query_vectors(members, ex)?,
        ))
    })?;
    RetrievalIndex::from_entries(
        members.iter().map(|m| m.name().to_string()).collect(),
        entries,
    )
}

/// The dictionary long form of `example`'s short form that occurs verbatim
/// (case-insensitively) in the sentence; the longest one wins, then the
/// lexicographically smallest.
pub fn expansion_in_sentence(
    example: &ADExample,
    dict: &ExpansionDictionary,
) -> Result<Option<String>> {
    let candidates = dict
        .get(example.short_form())
        .ok_or_else(|| Error::UnknownShortForm(example.short_form().to_string()))?;
    let lower = lowercase_tokens(&example.tokens);
    let mut best: Option<(usize, &String)> = None;
    for long in candidates {
        let phrase = long_form_tokens(long);
        if find_phrase(&lower, &phrase).is_empty() {
            continue;
        }
        if best.is_none_or(|(n, _)| phrase.len() > n) {
            best = Some((phrase.len(), long));
        }
    }
    Ok(best.map(|(_, l)| l.clone()))
}

/// Predicts the long form for `example`: an expansion written in the sentence
/// if there is one, otherwise the label of the most similar index entry among
/// those labeled with one of the short form's dictionary expansions.
pub fn predict_expansion(
    example: &ADExample,
    index: &RetrievalIndex,
    dict: &ExpansionDictionary,
    query: &[EmbeddingVector],
) -> Result<Prediction> {
    if let Some(label) = expansion_in_sentence(example, dict)? {
        return Ok(Prediction {
            id: example.id.clone(),
            label,
            score: None,
            source: PredictionSource::ExpansionInSentence,
            matched_train_id: None,
        });
    }
    if query.len() != index.members.len() {
        return Err(Error::MissingVector {
            id: example.id.clone(),
            member: index.members.get(query.len()).cloned().unwrap_or_default(),
        });
    }
    for (q, e) in query.iter().zip(&index.entries[0].vectors) {
        if q.dim() != e.dim() {
            return Err(Error::Dimension {
                expected: e.dim(),
                found: q.dim(),
            });
        }
    }
    let query: Vec<(EmbeddingVector, f64)> = query.iter().map(|q| (q.clone(), q.norm())).collect();

    let candidates = dict
        .get(example.short_form())
        .expect("checked by expansion_in_sentence");
    let mut pool: Vec<usize> = candidates
        .iter()
        .filter_map(|l| index.by_label.get(l))
        .flatten()
        .copied()
        .collect();
    if pool.is_empty() {
        return Err(Error::NoCandidates(example.short_form().to_string()));
    }
    pool.sort_unstable();

    let scores: Vec<f64> = pool.iter().map(|&i| index.score(i, &query)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut winner: Option<usize> = None;
    for (&i, &s) in pool.iter().zip(&scores) {
        if s < best - SCORE_TIE_EPSILON {
            continue;
        }
        winner = match winner {
            None => Some(i),
            Some(w) => {
                let (a, b) = (&index.entries[i].label, &index.entries[w].label);
                let (ca, cb) = (index.global_label_counts[a], index.global_label_counts[b]);
                if ca > cb || (ca == cb && a < b) {
                    Some(i)
                } else {
                    Some(w)
                }
            }
        };
    }
    let entry = &index.entries[winner.expect("pool is non-empty")];
    Ok(Prediction {
        id: example.id.clone(),
        label: entry.label.clone(),
        score: Some(best),
        source: PredictionSource::NearestNeighbor,
        matched_train_id: Some(entry.id.clone()),
    })
}

/// Predicts every example; examples are processed in parallel when enabled.
pub fn predict_batch(
    examples: &[ADExample],
    index: &RetrievalIndex,
    dict: &ExpansionDictionary,
    members: &[MemberSource<'_>],
) -> Result<Vec<Prediction>> {
    par::try_map(examples, |ex| {
        if expansion_in_sentence(ex, dict)?.is_some() {
            return predict_expansion(ex, index, dict, &[]);
        }
        predict_expansion(ex, index, dict, &query_vectors(members, ex)?)
    })
}

pub type ShortFormCounts = BTreeMap<String, BTreeMap<String, usize>>;

/// Long-form counts per short form over labeled examples.
pub fn label_counts_by_short_form(data: &[ADExample]) -> ShortFormCounts {
    let mut counts = ShortFormCounts::new();
    for ex in data {
        if let Some(label) = &ex.label {
            *counts
                .entry(ex.short_form().to_string())
                .or_default()
                .entry(label.clone())
                .or_insert(0) += 1;
        }
    }
    counts
}

/// Most frequent training long form for the short form; ties lexicographic.
pub fn predict_most_frequent(example: &ADExample, counts: &ShortFormCounts) -> Result<Prediction> {
    let label = counts
        .get(example.short_form())
        .and_then(|c| {
            c.iter()
                .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
        })
        .map(|(l, _)| l.clone())
        .ok_or_else(|| Error::UnknownShortForm(example.short_form().to_string()))?;
    Ok(Prediction {
        id: example.id.clone(),
        label,
        score: None,
        source: PredictionSource::MostFrequent,
        matched_train_id: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    /// Correct over answered; 0 when nothing is answered.
    pub precision: f64,
    pub recall: f64,
    pub coverage: f64,
}

/// Precision, recall and coverage when nearest-neighbor predictions scoring
/// below each threshold abstain.
pub fn threshold_sweep(
    predictions: &[(Prediction, String)],
    thresholds: &[f64],
) -> Vec<ThresholdPoint> {
    let total = predictions.len();
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    thresholds
        .iter()
        .map(|&tau| {
            let answered: Vec<_> = predictions.iter().filter(|(p, _)| p.passes(tau)).collect();
            let correct = answered.iter().filter(|(p, gold)| p.label == *gold).count();
            ThresholdPoint {
                threshold: tau,
                precision: ratio(correct, answered.len()),
                recall: ratio(correct, total),
                coverage: ratio(answered.len(), total),
            }
        })
        .collect()
}

// --- files --------------------------------------------------------------------

const INDEX_FORMAT: &str = "acrokit-index";
const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format: String,
    version: u32,
    members: Vec<String>,
    entries: Vec<IndexFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexFileEntry {
    id: String,
    sentence: Vec<String>,
    short_form: String,
    label: String,
    vectors: Vec<EmbeddingVector>,
}

pub fn write_index(path: impl AsRef<Path>, index: &RetrievalIndex) -> Result<()> {
    let path = path.as_ref();
    let file = IndexFile {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        members: index.members.clone(),
        entries: index
            .entries
            .iter()
            .map(|e| IndexFileEntry {
                id: e.id.clone(),
                sentence: e.key.sentence.clone(),
                short_form: e.key.short_form.clone(),
                label: e.label.clone(),
                vectors: e.vectors.clone(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::Io {
        path: path.into(),
        source: e.into(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

pub fn read_index(path: impl AsRef<Path>) -> Result<RetrievalIndex> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let file: IndexFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    if file.format != INDEX_FORMAT || file.version != INDEX_VERSION {
        return Err(Error::Config(format!(
            "unsupported index {} v{}",
            file.format, file.version
        )));
    }
    let entries = file
        .entries
        .into_iter()
        .map(|e| {
            IndexEntry::new(
                e.id,
                DuplicateKey {
                    sentence: e.sentence,
                    short_form: e.short_form,
                },
                e.label,
                e.vectors,
            )
        })
        .collect();
    RetrievalIndex::from_entries(file.members, entries)
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    read_json_lines(std::io::BufReader::new(file), |line, p: Prediction| {
        if (p.source == PredictionSource::NearestNeighbor) != p.score.is_some() {
            return Err(Error::Parse {
                line,
                message: format!("prediction {}: score must accompany nearest_neighbor", p.id),
            });
        }
        if p.score.is_some_and(|s| !(-1.0..=1.0).contains(&s)) {
            return Err(Error::Parse {
                line,
                message: format!("prediction {}: score outside [-1, 1]", p.id),
            });
        }
        Ok(p)
    })
}

pub fn write_predictions(path: impl AsRef<Path>, predictions: &[Prediction]) -> Result<()> {
    write_json_lines(path.as_ref(), predictions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn ex(id: &str, text: &str, label: Option<&str>) -> ADExample {
        ADExample::new(id, toks(text), 0, label.map(String::from)).unwrap()
    }

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn dict() -> ExpansionDictionary {
        let mut d = ExpansionDictionary::new();
        d.insert(
            "CNN",
            ["convolutional neural network", "cable news network"],
        )
        .unwrap();
        d
    }

    #[test]
    fn index_shape_and_counts() {
        let train = vec![
            ex("1", "CNN a", Some("A")),
            ex("2", "CNN b", Some("A")),
            ex("3", "CNN c", Some("B")),
        ];
        let v1: IndexMap<String, EmbeddingVector> = ["1", "2", "3"]
            .iter()
            .map(|id| (id.to_string(), ev(&[1.0, 0.0])))
            .collect();
        let v2: IndexMap<String, EmbeddingVector> = ["1", "2", "3"]
            .iter()
            .map(|id| (id.to_string(), ev(&[0.0, 1.0, 2.0])))
            .collect();
        let members = [
            MemberSource::Vectors {
                name: "m1".into(),
                vectors: &v1,
            },
            MemberSource::Vectors {
                name: "m2".into(),
                vectors: &v2,
            },
        ];
        let index = build_index(&train, &members).unwrap();
        assert_eq!(index.len(), 3);
        assert!(index.entries().iter().all(|e| e.vectors.len() == 2));
        assert_eq!(index.global_label_counts()["A"], 2);
        assert_eq!(index.global_label_counts()["B"], 1);
        assert!(build_index(&[], &members).is_err());

        let mut partial = v1.clone();
        partial.shift_remove("3");
        let err = build_index(
            &train,
            &[MemberSource::Vectors {
                name: "m1".into(),
                vectors: &partial,
            }],
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingVector { ref id, .. } if id == "3"));
    }

    #[test]
    fn in_sentence_expansion_wins() {
        let train = vec![ex("1", "CNN news", Some("cable news network"))];
        let vecs: IndexMap<String, EmbeddingVector> =
            [("1".to_string(), ev(&[1.0]))].into_iter().collect();
        let index = build_index(
            &train,
            &[MemberSource::Vectors {
                name: "m".into(),
                vectors: &vecs,
            }],
        )
        .unwrap();
        let q = ex("q", "CNN ( Convolutional Neural Network ) layers", None);
        let p = predict_expansion(&q, &index, &dict(), &[ev(&[1.0])]).unwrap();
        assert_eq!(p.label, "convolutional neural network");
        assert_eq!(p.source, PredictionSource::ExpansionInSentence);
        assert_eq!(p.score, None);

        let unknown = ex("u", "RNN here", None);
        assert!(matches!(
            predict_expansion(&unknown, &index, &dict(), &[]),
            Err(Error::UnknownShortForm(_))
        ));
    }

    #[test]
    fn exact_duplicate_query() {
        let table = std::sync::Arc::new(synthetic::separable_word_table(1, 1));
        let dim = table.dim();
        let identity = nalgebra::DMatrix::identity(dim, dim);
        let mean = crate::twin::LinearTwinEmbedder::new(table, identity).unwrap();
        let train = vec![
            ex("1", "CNN kw0x0 fill1", Some("convolutional neural network")),
            ex("2", "CNN kw0x0 fill1", Some("cable news network")),
            ex("3", "CNN kw0x0 fill1", Some("cable news network")),
            ex("4", "CNN kw0x1 fill2", Some("convolutional neural network")),
        ];
        let members = [MemberSource::Embedder(&mean)];
        let index = build_index(&train, &members).unwrap();
        let q = ex("q", "CNN kw0x0 fill1", None);
        let p =
            predict_expansion(&q, &index, &dict(), &query_vectors(&members, &q).unwrap()).unwrap();
        assert!((p.score.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p.label, "cable news network");
        assert_eq!(p.matched_train_id.as_deref(), Some("2"));
    }

    #[test]
    fn most_frequent_baseline() {
        let mut data = vec![ex("c", "CNN x", Some("cable news network"))];
        data.extend((0..9).map(|i| {
            ex(
                &format!("v{i}"),
                "CNN y",
                Some("convolutional neural network"),
            )
        }));
        let counts = label_counts_by_short_form(&data);
        let q = ex("q", "CNN z", None);
        assert_eq!(
            predict_most_frequent(&q, &counts).unwrap().label,
            "convolutional neural network"
        );

        let tie: Vec<_> = (0..10)
            .map(|i| ex(&format!("t{i}"), "CNN y", Some(["b", "a"][i % 2])))
            .collect();
        assert_eq!(
            predict_most_frequent(&q, &label_counts_by_short_form(&tie))
                .unwrap()
                .label,
            "a"
        );
        assert!(predict_most_frequent(&ex("q", "RNN z", None), &counts).is_err());
    }

    fn scored(label: &str, score: Option<f64>) -> Prediction {
        Prediction {
            id: "x".into(),
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
    fn threshold_examples() {
        let preds = vec![
            (scored("A", Some(0.9)), "A".to_string()),
            (scored("B", Some(0.2)), "A".to_string()),
        ];
        let pts = threshold_sweep(&preds, &[-1.0, 0.5, 1.5]);
        assert_eq!(pts[0].coverage, 1.0);
        assert_eq!(pts[0].recall, 0.5);
        assert_eq!((pts[1].precision, pts[1].recall), (1.0, 0.5));
        assert_eq!(pts[2].coverage, 0.0);
        assert_eq!(pts[2].precision, 0.0);

        let with_exp = vec![
            (scored("A", None), "A".to_string()),
            (scored("A", Some(0.3)), "A".to_string()),
        ];
        assert_eq!(threshold_sweep(&with_exp, &[1.5])[0].coverage, 0.5);
    }

    #[test]
    fn index_and_predictions_round_trip() {
        let train = vec![ex("1", "CNN a", Some("A")), ex("2", "CNN b", Some("B"))];
        let vecs: IndexMap<String, EmbeddingVector> = [
            ("1".to_string(), ev(&[1.0, 0.5])),
            ("2".to_string(), ev(&[-0.25, 2.0])),
        ]
        .into_iter()
        .collect();
        let index = build_index(
            &train,
            &[MemberSource::Vectors {
                name: "m".into(),
                vectors: &vecs,
            }],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_index(dir.path().join("i.json"), &index).unwrap();
        assert_eq!(read_index(dir.path().join("i.json")).unwrap(), index);

        let merged = index.clone().merge(index.clone()).unwrap();
        assert_eq!(merged.len(), 4);
        assert_eq!(merged.global_label_counts()["A"], 2);

        let preds = vec![scored("A", Some(0.5)), scored("B", None)];
        write_predictions(dir.path().join("p.jsonl"), &preds).unwrap();
        assert_eq!(read_predictions(dir.path().join("p.jsonl")).unwrap(), preds);
    }

    /// Independent exhaustive search: mean cosine over members for every
    /// entry, label ranking by (score, global count, reverse label).
    fn brute_force(
        train: &[ADExample],
        train_vecs: &[Vec<Vec<f64>>],
        query: &[Vec<f64>],
        candidates: &[String],
    ) -> (String, f64) {
        let cos = |a: &[f64], b: &[f64]| {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).clamp(-1.0, 1.0)
            }
        };
        let count = |l: &str| {
            train
                .iter()
                .filter(|e| e.label.as_deref() == Some(l))
                .count()
        };
        let mut scored: Vec<(f64, &str)> = Vec::new();
        for (e, vs) in train.iter().zip(train_vecs) {
            let label = e.label.as_deref().unwrap();
            if !candidates.iter().any(|c| c == label) {
                continue;
            }
            let mut cs: Vec<f64> = vs.iter().zip(query).map(|(v, q)| cos(v, q)).collect();
            cs.sort_by(f64::total_cmp);
            scored.push((cs.iter().sum::<f64>() / cs.len() as f64, label));
        }
        let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let mut tied: Vec<&str> = scored
            .iter()
            .filter(|s| s.0 >= best - 1e-12)
            .map(|s| s.1)
            .collect();
        tied.sort_by(|a, b| count(b).cmp(&count(a)).then(a.cmp(b)));
        (tied[0].to_string(), best)
    }

    #[test]
    fn matches_brute_force_on_random_queries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let labels: Vec<String> = ["alpha", "beta", "gamma", "delta"]
            .map(String::from)
            .to_vec();
        let mut d = ExpansionDictionary::new();
        d.insert("ABC", &labels).unwrap();
        let dims = [3usize, 5];
        let mut grid = || -> f64 { f64::from(rng.random_range(-2i8..=2)) };
        let train: Vec<ADExample> = (0..60)
            .map(|i| ex(&format!("t{i}"), "ABC x", Some(&labels[i % 4])))
            .collect();
        let train_vecs: Vec<Vec<Vec<f64>>> = (0..60)
            .map(|_| {
                dims.iter()
                    .map(|&d| (0..d).map(|_| grid()).collect())
                    .collect()
            })
            .collect();
        let maps: Vec<IndexMap<String, EmbeddingVector>> = (0..2)
            .map(|m| {
                train
                    .iter()
                    .zip(&train_vecs)
                    .map(|(e, v)| (e.id.clone(), ev(&v[m])))
                    .collect()
            })
            .collect();
        let members: Vec<_> = maps
            .iter()
            .enumerate()
            .map(|(m, v)| MemberSource::Vectors {
                name: format!("m{m}"),
                vectors: v,
            })
            .collect();
        let index = build_index(&train, &members).unwrap();
        for _ in 0..200 {
            let q: Vec<Vec<f64>> = dims
                .iter()
                .map(|&d| (0..d).map(|_| grid()).collect())
                .collect();
            let qv: Vec<EmbeddingVector> = q.iter().map(|v| ev(v)).collect();
            let p = predict_expansion(&ex("q", "ABC y", None), &index, &d, &qv).unwrap();
            let (label, score) = brute_force(&train, &train_vecs, &q, &labels);
            assert_eq!(p.label, label);
            assert_eq!(p.score, Some(score));
        }
    }

    proptest! {
        #[test]
        fn member_order_does_not_matter(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels = ["a", "b", "c"];
            let mut d = ExpansionDictionary::new();
            d.insert("XY", labels).unwrap();
            let train: Vec<ADExample> = (0..12).map(|i| ex(&format!("t{i}"), "XY q", Some(labels[i % 3]))).collect();
            let mut maps: Vec<IndexMap<String, EmbeddingVector>> = Vec::new();
            for _ in 0..3 {
                maps.push(train.iter().map(|e| (e.id.clone(), ev(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))).collect());
            }
            let query: Vec<EmbeddingVector> = (0..3).map(|_| ev(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])).collect();
            let forward: Vec<_> = maps.iter().enumerate().map(|(m, v)| MemberSource::Vectors { name: format!("m{m}"), vectors: v }).collect();
            let reversed: Vec<_> = maps.iter().enumerate().rev().map(|(m, v)| MemberSource::Vectors { name: format!("m{m}"), vectors: v }).collect();
            let q = ex("q", "XY r", None);
            let rq: Vec<EmbeddingVector> = query.iter().rev().cloned().collect();
            let a = predict_expansion(&q, &build_index(&train, &forward).unwrap(), &d, &query).unwrap();
            let b = predict_expansion(&q, &build_index(&train, &reversed).unwrap(), &d, &rq).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn sweep_is_monotone(rows in prop::collection::vec((prop::option::of(-1.0f64..1.0), any::<bool>()), 1..40)) {
            let preds: Vec<(Prediction, String)> = rows
                .iter()
                .map(|(s, ok)| (scored("A", *s), if *ok { "A" } else { "B" }.to_string()))
                .collect();
            let taus: Vec<f64> = (-12..=12).map(|i| f64::from(i) / 10.0).collect();
            let pts = threshold_sweep(&preds, &taus);
            prop_assert_eq!(pts[0].coverage, 1.0);
            for w in pts.windows(2) {
                prop_assert!(w[1].coverage <= w[0].coverage);
                prop_assert!(w[1].recall <= w[0].recall);
            }
        }
    }
}
