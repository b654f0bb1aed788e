//! Distant-supervision builders: auxiliary identification data from a
//! (short, long) term table, auxiliary disambiguation data via
//! one-sense-per-discourse propagation, universal-acronym mining and
//! term-ratio subsampling.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acro_rules::{is_short_form, RuleConfig};
use crate::corpus::{
    find_phrase, long_form_tokens, lowercase_tokens, normalize_long_form, spans_from_tags,
    ADExample, AcronymSpan, BioTag, Document, ExpansionDictionary, SpanKind, TaggedSentence,
};
use crate::error::{Error, Result};
use crate::par;

/// Scraped (short form, long form) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermTable {
    pairs: Vec<(String, String)>,
}

impl TermTable {
    pub fn new<I, S, L>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, L)>,
        S: Into<String>,
        L: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let pairs = pairs
            .into_iter()
            .map(|(s, l)| (s.into(), normalize_long_form(l.as_ref())))
            .filter(|(s, l)| !s.is_empty() && !l.is_empty())
            .filter(|p| seen.insert(p.clone()))
            .collect();
        TermTable { pairs }
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Deserialize, Serialize)]
struct TermTableFile {
    pairs: Vec<(String, String)>,
}

pub fn read_term_table(path: impl AsRef<Path>) -> Result<TermTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let file: TermTableFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    Ok(TermTable::new(file.pairs))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalAcronymSet {
    pub acronyms: BTreeSet<String>,
    pub min_sentences: usize,
}

impl UniversalAcronymSet {
    pub fn contains(&self, token: &str) -> bool {
        self.acronyms.contains(token)
    }
}

/// Short forms tagged (as single-token spans) in at least `min_sentences`
/// sentences that contain no long span at all.
pub fn compute_universal_acronyms(
    train: &[TaggedSentence],
    min_sentences: usize,
) -> Result<UniversalAcronymSet> {
    if min_sentences == 0 {
        return Err(Error::Config("min_sentences must be at least 1".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in train {
        let spans = spans_from_tags(&s.tags).map_err(|e| Error::record(&s.id, e.to_string()))?;
        if spans.iter().any(|sp| sp.kind == SpanKind::Long) {
            continue;
        }
        let forms: BTreeSet<&str> = spans
            .iter()
            .filter(|sp| sp.kind == SpanKind::Short && sp.len() == 1)
            .map(|sp| s.tokens[sp.start].as_str())
            .collect();
        for f in forms {
            *counts.entry(f).or_default() += 1;
        }
    }
    Ok(UniversalAcronymSet {
        acronyms: counts
            .into_iter()
            .filter(|&(_, c)| c >= min_sentences)
            .map(|(f, _)| f.to_string())
            .collect(),
        min_sentences,
    })
}

fn label_sentence(
    tokens: &[String],
    terms: &HashMap<&str, Vec<Vec<String>>>,
    universal: &UniversalAcronymSet,
) -> Option<Vec<BioTag>> {
    let lower = lowercase_tokens(tokens);
    let mut short_positions = BTreeSet::new();
    let mut long_windows: Vec<AcronymSpan> = Vec::new();

    for (i, tok) in tokens.iter().enumerate() {
        if let Some(longs) = terms.get(tok.as_str()) {
            let mut matched = false;
            for long in longs {
                for start in find_phrase(&lower, long) {
                    matched = true;
                    long_windows.push(AcronymSpan::new(SpanKind::Long, start, start + long.len()));
                }
            }
            if matched {
                // Every occurrence of a matched short form is labeled.
                short_positions.extend(
                    tokens
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| *t == tok)
                        .map(|(k, _)| k),
                );
            }
        }
        if universal.contains(tok) {
            short_positions.insert(i);
        }
    }
    if short_positions.is_empty() {
        return None;
    }

    // Short tokens win over long windows; among long windows the longer, then
    // the leftmost, wins.
    long_windows.sort_by_key(|w| (std::cmp::Reverse(w.len()), w.start));
    long_windows.dedup();
    let mut tags = vec![BioTag::O; tokens.len()];
    for &i in &short_positions {
        tags[i] = BioTag::BShort;
    }
    for w in long_windows {
        if tags[w.start..w.end].iter().all(|&t| t == BioTag::O) {
            tags[w.start] = BioTag::BLong;
            for t in &mut tags[w.start + 1..w.end] {
                *t = BioTag::ILong;
            }
        }
    }
    Some(tags)
}

/// Labels document sentences with term-table pairs that co-occur in the
/// sentence and with universal acronyms. Unlabeled sentences are dropped.
pub fn build_auxai(
    docs: &[Document],
    terms: &TermTable,
    universal: &UniversalAcronymSet,
    cfg: &RuleConfig,
) -> Result<Vec<TaggedSentence>> {
    cfg.validate()?;
    let mut by_short: HashMap<&str, Vec<Vec<String>>> = HashMap::new();
    for (s, l) in terms.pairs() {
        if is_short_form(s, cfg) {
            by_short
                .entry(s.as_str())
                .or_default()
                .push(long_form_tokens(l));
        }
    }
    let per_doc = par::try_map(docs, |doc| {
        doc.sentences
            .iter()
            .enumerate()
            .filter_map(|(si, tokens)| {
                label_sentence(tokens, &by_short, universal).map(|tags| {
                    TaggedSentence::new(format!("{}-{si}", doc.doc_id), tokens.clone(), tags)
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_doc.into_iter().flatten().collect())
}

fn auxad_for_document(
    doc: &Document,
    longs: &HashMap<&str, Vec<(&String, Vec<String>)>>,
) -> Result<Vec<ADExample>> {
    // short form -> long forms it resolved to somewhere in the document
    let mut resolved: BTreeMap<&str, BTreeSet<&String>> = BTreeMap::new();
    for tokens in &doc.sentences {
        let lower = lowercase_tokens(tokens);
        for tok in tokens {
            let Some(cands) = longs.get(tok.as_str()) else {
                continue;
            };
            for (label, phrase) in cands {
                if !find_phrase(&lower, phrase).is_empty() {
                    resolved.entry(tok.as_str()).or_default().insert(label);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (si, tokens) in doc.sentences.iter().enumerate() {
        for (ti, tok) in tokens.iter().enumerate() {
            if let Some(labels) = resolved.get(tok.as_str()) {
                if labels.len() == 1 {
                    let label = (*labels.iter().next().unwrap()).clone();
                    out.push(ADExample::new(
                        format!("{}-{si}-{ti}", doc.doc_id),
                        tokens.clone(),
                        ti,
                        Some(label),
                    )?);
                }
            }
        }
    }
    Ok(out)
}

/// One-sense-per-discourse labeling: a short form resolved by an in-sentence
/// dictionary long form labels every occurrence of that short form in the
/// same document. Short forms resolved to two long forms in one document are
/// dropped for that document.
pub fn build_auxad(docs: &[Document], dict: &ExpansionDictionary) -> Result<Vec<ADExample>> {
    let longs: HashMap<&str, Vec<(&String, Vec<String>)>> = dict
        .iter()
        .map(|(s, ls)| {
            (
                s.as_str(),
                ls.iter().map(|l| (l, long_form_tokens(l))).collect(),
            )
        })
        .collect();
    let per_doc = par::try_map(docs, |doc| auxad_for_document(doc, &longs))?;
    Ok(per_doc.into_iter().flatten().collect())
}

fn sentence_terms(s: &TaggedSentence) -> Result<BTreeSet<String>> {
    let spans = spans_from_tags(&s.tags).map_err(|e| Error::record(&s.id, e.to_string()))?;
    Ok(spans
        .iter()
        .filter(|sp| sp.kind == SpanKind::Short)
        .map(|sp| s.tokens[sp.start..sp.end].join(" "))
        .collect())
}

/// Random subset whose unique-short-form-to-sentence ratio stays at or above
/// `target_ratio`: one random sentence per unseen term first, then further
/// random sentences while the ratio allows. Output keeps input order.
pub fn subsample_to_term_ratio(
    data: &[TaggedSentence],
    target_ratio: f64,
    seed: u64,
) -> Result<Vec<TaggedSentence>> {
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "target ratio {target_ratio} outside (0, 1]"
        )));
    }
    if data.is_empty() {
        return Err(Error::Empty("subsampling an empty dataset"));
    }
    let terms: Vec<BTreeSet<String>> = data.iter().map(sentence_terms).collect::<Result<_>>()?;
    let unique: BTreeSet<&String> = terms.iter().flatten().collect();
    if unique.is_empty() {
        return Err(Error::Unreachable(format!(
            "ratio {target_ratio} unreachable: dataset has no short-form terms"
        )));
    }
    let u = unique.len() as f64;

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut covered: BTreeSet<&String> = BTreeSet::new();
    let mut keep = vec![false; data.len()];
    let mut kept = 0usize;
    for &i in &order {
        if terms[i].iter().any(|t| !covered.contains(t)) {
            covered.extend(terms[i].iter());
            keep[i] = true;
            kept += 1;
        }
    }
    for &i in &order {
        if !keep[i] && u / (kept + 1) as f64 + 1e-12 >= target_ratio {
            keep[i] = true;
            kept += 1;
        }
    }
    Ok(data
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use BioTag::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn sent(id: &str, text: &str, tags: Vec<BioTag>) -> TaggedSentence {
        TaggedSentence::new(id, toks(text), tags).unwrap()
    }

    #[test]
    fn universal_acronym_threshold() {
        let train = vec![
            sent("1", "the USA is", vec![O, BShort, O]),
            sent("2", "USA again", vec![BShort, O]),
            sent("3", "a CNN", vec![O, BShort]),
        ];
        let mut with_long = Vec::new();
        for i in 0..5 {
            with_long.push(sent(
                &format!("l{i}"),
                "cable news network CNN",
                vec![BLong, ILong, ILong, BShort],
            ));
        }
        let all: Vec<_> = train.into_iter().chain(with_long).collect();
        let u = compute_universal_acronyms(&all, 2).unwrap();
        assert!(u.contains("USA"));
        assert!(!u.contains("CNN"));
        assert!(compute_universal_acronyms(&[], 2)
            .unwrap()
            .acronyms
            .is_empty());
    }

    #[test]
    fn auxai_examples() {
        let terms = TermTable::new([("CNN", "convolutional neural network")]);
        let universal = UniversalAcronymSet {
            acronyms: ["USA".to_string()].into(),
            min_sentences: 2,
        };
        let doc = Document::new(
            "d",
            vec![
                toks("convolutional neural network ( CNN ) models"),
                toks("we visited the USA"),
                toks("nothing to see"),
            ],
        )
        .unwrap();
        let out = build_auxai(&[doc], &terms, &universal, &RuleConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].tags, vec![BLong, ILong, ILong, O, BShort, O, O]);
        assert_eq!(out[1].tags, vec![O, O, O, BShort]);
    }

    #[test]
    fn auxai_requires_both_forms_and_resolves_overlaps() {
        let terms = TermTable::new([
            ("NN", "neural network"),
            ("CNN", "convolutional neural network"),
            ("RL", "reinforcement learning"),
        ]);
        let none = UniversalAcronymSet::default();
        let doc = Document::new(
            "d",
            vec![
                toks("a convolutional neural network CNN and NN"),
                toks("RL alone"),
            ],
        )
        .unwrap();
        let out = build_auxai(&[doc], &terms, &none, &RuleConfig::default()).unwrap();
        assert_eq!(out.len(), 1);
        // Longer window wins over the nested "neural network".
        assert_eq!(out[0].tags, vec![O, BLong, ILong, ILong, BShort, O, BShort]);
        assert!(spans_from_tags(&out[0].tags).is_ok());
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
    fn auxad_propagates_within_document() {
        let doc = Document::new(
            "p",
            vec![
                toks("convolutional neural network ( CNN )"),
                toks("CNN outperforms baselines"),
            ],
        )
        .unwrap();
        let out = build_auxad(&[doc], &dict()).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out
            .iter()
            .all(|e| e.label.as_deref() == Some("convolutional neural network")));
        assert_eq!(out[1].short_form(), "CNN");
    }

    #[test]
    fn auxad_drops_conflicts_and_unresolved() {
        let conflict = Document::new(
            "c",
            vec![
                toks("convolutional neural network CNN"),
                toks("the Cable News Network CNN"),
            ],
        )
        .unwrap();
        let unresolved = Document::new("u", vec![toks("CNN is used")]).unwrap();
        assert!(build_auxad(&[conflict, unresolved], &dict())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn subsample_examples() {
        let distinct: Vec<_> = (0..100)
            .map(|i| sent(&i.to_string(), &format!("T{i}X x"), vec![BShort, O]))
            .collect();
        assert_eq!(
            subsample_to_term_ratio(&distinct, 0.5, 1).unwrap().len(),
            100
        );

        let same: Vec<_> = (0..100)
            .map(|i| sent(&i.to_string(), "CNN x", vec![BShort, O]))
            .collect();
        let kept = subsample_to_term_ratio(&same, 0.5, 1).unwrap();
        assert_eq!(kept.len(), 2);
        // Brute force: the largest |S| with 1/|S| >= 0.5 over all subset sizes.
        let best = (1..=100usize)
            .filter(|&k| 1.0 / k as f64 >= 0.5)
            .max()
            .unwrap();
        assert_eq!(kept.len(), best);

        let dup: Vec<_> = (0..30)
            .map(|i| sent(&i.to_string(), &format!("T{}X x", i % 3), vec![BShort, O]))
            .collect();
        let kept = subsample_to_term_ratio(&dup, 1.0, 9).unwrap();
        assert_eq!(kept.len(), 3);
        let forms: BTreeSet<_> = kept.iter().map(|s| s.tokens[0].clone()).collect();
        assert_eq!(forms.len(), 3);
    }

    #[test]
    fn subsample_is_deterministic_and_errors() {
        let data: Vec<_> = (0..50)
            .map(|i| sent(&i.to_string(), &format!("T{}X x", i % 7), vec![BShort, O]))
            .collect();
        assert_eq!(
            subsample_to_term_ratio(&data, 0.3, 42).unwrap(),
            subsample_to_term_ratio(&data, 0.3, 42).unwrap()
        );
        let no_terms = vec![sent("a", "x y", vec![O, O])];
        assert!(subsample_to_term_ratio(&no_terms, 0.5, 0).is_err());
        assert!(subsample_to_term_ratio(&data, 0.0, 0).is_err());
    }
}
