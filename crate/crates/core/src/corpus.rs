//! Data model for acronym identification (AI) and disambiguation (AD) records,
//! expansion dictionaries and documents, plus their line-delimited JSON codecs
//! and the BIO <-> span conversion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of BIO tags; the width of every logit vector.
pub const TAG_COUNT: usize = 5;

/// The five acronym BIO tags. The discriminant is the logit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BioTag {
    #[serde(rename = "O")]
    O = 0,
    #[serde(rename = "B-short")]
    BShort = 1,
    #[serde(rename = "I-short")]
    IShort = 2,
    #[serde(rename = "B-long")]
    BLong = 3,
    #[serde(rename = "I-long")]
    ILong = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanKind {
    Short,
    Long,
}

impl BioTag {
    pub const ALL: [BioTag; TAG_COUNT] = [
        BioTag::O,
        BioTag::BShort,
        BioTag::IShort,
        BioTag::BLong,
        BioTag::ILong,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<BioTag> {
        BioTag::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BioTag::O => "O",
            BioTag::BShort => "B-short",
            BioTag::IShort => "I-short",
            BioTag::BLong => "B-long",
            BioTag::ILong => "I-long",
        }
    }

    pub fn begin(kind: SpanKind) -> BioTag {
        match kind {
            SpanKind::Short => BioTag::BShort,
            SpanKind::Long => BioTag::BLong,
        }
    }

    pub fn inside(kind: SpanKind) -> BioTag {
        match kind {
            SpanKind::Short => BioTag::IShort,
            SpanKind::Long => BioTag::ILong,
        }
    }

    /// Span kind of a B-/I- tag, `None` for O.
    pub fn kind(self) -> Option<SpanKind> {
        match self {
            BioTag::O => None,
            BioTag::BShort | BioTag::IShort => Some(SpanKind::Short),
            BioTag::BLong | BioTag::ILong => Some(SpanKind::Long),
        }
    }

    pub fn is_begin(self) -> bool {
        matches!(self, BioTag::BShort | BioTag::BLong)
    }

    pub fn is_inside(self) -> bool {
        matches!(self, BioTag::IShort | BioTag::ILong)
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BioTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        BioTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag {s:?}"))
    }
}

/// A word-tokenized sentence with one BIO tag per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<BioTag>,
}

impl TaggedSentence {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, tags: Vec<BioTag>) -> Result<Self> {
        let id = id.into();
        validate_tokens(&id, &tokens)?;
        if tags.len() != tokens.len() {
            return Err(Error::record(
                id,
                format!("{} tokens but {} labels", tokens.len(), tags.len()),
            ));
        }
        Ok(TaggedSentence { id, tokens, tags })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AcronymSpan {
    pub kind: SpanKind,
    pub start: usize,
    pub end: usize,
}

impl AcronymSpan {
    pub fn new(kind: SpanKind, start: usize, end: usize) -> Self {
        AcronymSpan { kind, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &AcronymSpan) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// One disambiguation example: a sentence, the index of the short form inside
/// it, and (when labeled) the gold long form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ADExample {
    pub id: String,
    pub tokens: Vec<String>,
    pub acronym_index: usize,
    pub label: Option<String>,
}

impl ADExample {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        acronym_index: usize,
        label: Option<String>,
    ) -> Result<Self> {
        let id = id.into();
        validate_tokens(&id, &tokens)?;
        if acronym_index >= tokens.len() {
            return Err(Error::record(
                id,
                format!(
                    "acronym index {acronym_index} out of bounds for {} tokens",
                    tokens.len()
                ),
            ));
        }
        Ok(ADExample {
            id,
            tokens,
            acronym_index,
            label,
        })
    }

    pub fn short_form(&self) -> &str {
        &self.tokens[self.acronym_index]
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

/// Short form -> candidate long forms. Long forms are kept lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl ExpansionDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds expansions for `short`; long forms are lowercased and deduplicated.
    pub fn insert<I, S>(&mut self, short: impl Into<String>, long_forms: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let short = short.into();
        let set: BTreeSet<String> = long_forms
            .into_iter()
            .map(|l| normalize_long_form(l.as_ref()))
            .filter(|l| !l.is_empty())
            .collect();
        if set.is_empty() && !self.entries.contains_key(&short) {
            return Err(Error::record(short, "empty long-form list"));
        }
        self.entries.entry(short).or_default().extend(set);
        Ok(())
    }

    pub fn get(&self, short: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(short)
    }

    pub fn contains(&self, short: &str) -> bool {
        self.entries.contains_key(short)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, sentences: Vec<Vec<String>>) -> Result<Self> {
        let doc_id = doc_id.into();
        if sentences.is_empty() {
            return Err(Error::record(doc_id, "document has no sentences"));
        }
        for s in &sentences {
            validate_tokens(&doc_id, s)?;
        }
        Ok(Document { doc_id, sentences })
    }
}

fn validate_tokens(id: &str, tokens: &[String]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::record(id, "no tokens"));
    }
    if let Some(t) = tokens
        .iter()
        .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
    {
        return Err(Error::record(id, format!("invalid token {t:?}")));
    }
    Ok(())
}

pub fn normalize_long_form(long: &str) -> String {
    long.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Lowercased tokens of a long form, as used for in-sentence matching.
pub fn long_form_tokens(long: &str) -> Vec<String> {
    long.split_whitespace().map(str::to_lowercase).collect()
}

/// Start positions where `phrase` occurs contiguously in `tokens`.
/// Both sides must already be lowercased.
pub fn find_phrase(tokens: &[String], phrase: &[String]) -> Vec<usize> {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return Vec::new();
    }
    tokens
        .windows(phrase.len())
        .enumerate()
        .filter(|(_, w)| *w == phrase)
        .map(|(i, _)| i)
        .collect()
}

pub fn lowercase_tokens(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

// --- BIO <-> spans -------------------------------------------------------------

/// Converts a valid BIO sequence into maximal spans sorted by start.
pub fn spans_from_tags(tags: &[BioTag]) -> Result<Vec<AcronymSpan>> {
    let mut spans = Vec::new();
    let mut open: Option<AcronymSpan> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag.kind() {
            None => {
                spans.extend(open.take());
            }
            Some(kind) if tag.is_begin() => {
                spans.extend(open.take());
                open = Some(AcronymSpan::new(kind, i, i + 1));
            }
            Some(kind) => match open.as_mut() {
                Some(span) if span.kind == kind => span.end = i + 1,
                Some(span) => {
                    return Err(Error::InvalidBio {
                        position: i,
                        reason: format!("{tag} continues a {:?} span", span.kind),
                    })
                }
                None => {
                    return Err(Error::InvalidBio {
                        position: i,
                        reason: format!("{tag} does not follow a B- or I- tag"),
                    })
                }
            },
        }
    }
    spans.extend(open);
    Ok(spans)
}

/// Inverse of [`spans_from_tags`].
pub fn tags_from_spans(length: usize, spans: &[AcronymSpan]) -> Result<Vec<BioTag>> {
    let mut sorted: Vec<&AcronymSpan> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(Error::OverlappingSpans {
                first: (pair[0].start, pair[0].end),
                second: (pair[1].start, pair[1].end),
            });
        }
    }
    let mut tags = vec![BioTag::O; length];
    for span in sorted {
        if span.is_empty() || span.end > length {
            return Err(Error::InvalidBio {
                position: span.start,
                reason: format!(
                    "span [{}, {}) outside sentence of length {length}",
                    span.start, span.end
                ),
            });
        }
        tags[span.start] = BioTag::begin(span.kind);
        for t in &mut tags[span.start + 1..span.end] {
            *t = BioTag::inside(span.kind);
        }
    }
    Ok(tags)
}

pub fn is_valid_bio(tags: &[BioTag]) -> bool {
    spans_from_tags(tags).is_ok()
}

/// Per-tag token fractions over a dataset. Every tag is present in the map.
pub fn tag_distribution(data: &[TaggedSentence]) -> Result<BTreeMap<BioTag, f64>> {
    let mut counts = [0usize; TAG_COUNT];
    for s in data {
        for t in &s.tags {
            counts[t.index()] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("tag distribution over an empty dataset"));
    }
    Ok(BioTag::ALL
        .into_iter()
        .map(|t| (t, counts[t.index()] as f64 / total as f64))
        .collect())
}

// --- codecs --------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AiRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    tokens: Vec<String>,
    labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AdRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    tokens: Vec<String>,
    acronym: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DocRecord {
    doc_id: String,
    sentences: Vec<Vec<String>>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Decodes one JSON value per non-blank line; the callback receives the
/// 1-based line number.
pub(crate) fn read_json_lines<T, U, R, F>(reader: R, mut convert: F) -> Result<Vec<U>>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
    F: FnMut(usize, T) -> Result<U>,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(convert(line_no, record)?);
    }
    Ok(out)
}

pub(crate) fn write_json_lines<T: Serialize>(
    path: &Path,
    records: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn parse_ai_dataset<R: BufRead>(reader: R) -> Result<Vec<TaggedSentence>> {
    read_json_lines(reader, |line, r: AiRecord| {
        let id = r.id.unwrap_or_else(|| format!("line-{line}"));
        let tags = r
            .labels
            .iter()
            .map(|l| l.parse::<BioTag>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::record(&id, e))?;
        TaggedSentence::new(id, r.tokens, tags)
    })
}

pub fn read_ai_dataset(path: impl AsRef<Path>) -> Result<Vec<TaggedSentence>> {
    parse_ai_dataset(open(path.as_ref())?)
}

pub fn write_ai_dataset(path: impl AsRef<Path>, data: &[TaggedSentence]) -> Result<()> {
    write_json_lines(
        path.as_ref(),
        data.iter().map(|s| AiRecord {
            id: Some(s.id.clone()),
            tokens: s.tokens.clone(),
            labels: s.tags.iter().map(|t| t.as_str().to_string()).collect(),
        }),
    )
}

pub fn parse_ad_dataset<R: BufRead>(reader: R) -> Result<Vec<ADExample>> {
    read_json_lines(reader, |line, r: AdRecord| {
        let id = r.id.unwrap_or_else(|| format!("line-{line}"));
        ADExample::new(id, r.tokens, r.acronym, r.label)
    })
}

pub fn read_ad_dataset(path: impl AsRef<Path>) -> Result<Vec<ADExample>> {
    parse_ad_dataset(open(path.as_ref())?)
}

pub fn write_ad_dataset(path: impl AsRef<Path>, data: &[ADExample]) -> Result<()> {
    write_json_lines(
        path.as_ref(),
        data.iter().map(|e| AdRecord {
            id: Some(e.id.clone()),
            tokens: e.tokens.clone(),
            acronym: e.acronym_index,
            label: e.label.clone(),
        }),
    )
}

pub fn parse_dictionary(text: &str) -> Result<ExpansionDictionary> {
    let raw: BTreeMap<String, Vec<String>> =
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    let mut dict = ExpansionDictionary::new();
    for (short, longs) in raw {
        dict.insert(short, longs)?;
    }
    Ok(dict)
}

pub fn read_dictionary(path: impl AsRef<Path>) -> Result<ExpansionDictionary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dictionary(&text)
}

pub fn write_dictionary(path: impl AsRef<Path>, dict: &ExpansionDictionary) -> Result<()> {
    let path = path.as_ref();
    let raw: BTreeMap<&String, Vec<&String>> = dict
        .iter()
        .map(|(s, ls)| (s, ls.iter().collect()))
        .collect();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &raw).map_err(|e| Error::io(path, e.into()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn parse_documents<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    read_json_lines(reader, |_, r: DocRecord| {
        Document::new(r.doc_id, r.sentences)
    })
}

pub fn read_documents(path: impl AsRef<Path>) -> Result<Vec<Document>> {
    parse_documents(open(path.as_ref())?)
}

pub fn write_documents(path: impl AsRef<Path>, docs: &[Document]) -> Result<()> {
    write_json_lines(
        path.as_ref(),
        docs.iter().map(|d| DocRecord {
            doc_id: d.doc_id.clone(),
            sentences: d.sentences.clone(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BioTag::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn reads_ai_record() {
        let data = parse_ai_dataset(
            r#"{"id":"s1","tokens":["deep","learning"],"labels":["O","O"]}"#.as_bytes(),
        )
        .unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].tokens.len(), 2);
        assert_eq!(data[0].tags, vec![O, O]);
    }

    #[test]
    fn empty_ai_file_is_empty_list() {
        assert!(parse_ai_dataset("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn ai_length_mismatch_names_record() {
        let err = parse_ai_dataset(
            r#"{"id":"bad7","tokens":["a","b","c"],"labels":["O","O"]}"#.as_bytes(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("bad7"), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let input = "{\"id\":\"a\",\"tokens\":[\"x\"],\"labels\":[\"O\"]}\n{not json\n";
        match parse_ai_dataset(input.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn missing_id_is_synthesized() {
        let data =
            parse_ai_dataset("\n{\"tokens\":[\"x\"],\"labels\":[\"B-short\"]}".as_bytes()).unwrap();
        assert_eq!(data[0].id, "line-2");
    }

    #[test]
    fn reads_ad_records() {
        let labeled = r#"{"id":"d1","tokens":["CNN","models"],"acronym":0,"label":"convolutional neural network"}"#;
        let d = parse_ad_dataset(labeled.as_bytes()).unwrap();
        assert_eq!(d[0].label.as_deref(), Some("convolutional neural network"));
        assert_eq!(d[0].short_form(), "CNN");

        let unlabeled = r#"{"id":"d1","tokens":["CNN","models"],"acronym":0}"#;
        assert!(!parse_ad_dataset(unlabeled.as_bytes()).unwrap()[0].is_labeled());

        let oob = r#"{"id":"d9","tokens":["CNN","models"],"acronym":5}"#;
        assert!(parse_ad_dataset(oob.as_bytes())
            .unwrap_err()
            .to_string()
            .contains("d9"));
    }

    #[test]
    fn dictionary_normalization() {
        let d =
            parse_dictionary(r#"{"CNN":["convolutional neural network","cable news network"]}"#)
                .unwrap();
        assert_eq!(d.get("CNN").unwrap().len(), 2);
        let d = parse_dictionary(r#"{"SVM":["Support Vector Machine","support vector machine"]}"#)
            .unwrap();
        assert_eq!(
            d.get("SVM").unwrap().iter().collect::<Vec<_>>(),
            vec!["support vector machine"]
        );
        assert!(parse_dictionary(r#"{"NN":[]}"#).is_err());
    }

    #[test]
    fn span_examples() {
        assert_eq!(
            spans_from_tags(&[O, BShort, IShort, O]).unwrap(),
            vec![AcronymSpan::new(SpanKind::Short, 1, 3)]
        );
        assert_eq!(
            spans_from_tags(&[BLong, ILong, BShort]).unwrap(),
            vec![
                AcronymSpan::new(SpanKind::Long, 0, 2),
                AcronymSpan::new(SpanKind::Short, 2, 3)
            ]
        );
        assert!(spans_from_tags(&[O, O]).unwrap().is_empty());
    }

    #[test]
    fn invalid_bio_is_rejected() {
        assert!(spans_from_tags(&[IShort]).is_err());
        assert!(spans_from_tags(&[O, ILong]).is_err());
        assert!(spans_from_tags(&[BLong, IShort]).is_err());
    }

    #[test]
    fn tags_from_span_examples() {
        assert_eq!(
            tags_from_spans(4, &[AcronymSpan::new(SpanKind::Short, 1, 3)]).unwrap(),
            vec![O, BShort, IShort, O]
        );
        assert_eq!(tags_from_spans(2, &[]).unwrap(), vec![O, O]);
        let overlap = [
            AcronymSpan::new(SpanKind::Long, 0, 2),
            AcronymSpan::new(SpanKind::Long, 1, 3),
        ];
        assert!(matches!(
            tags_from_spans(3, &overlap),
            Err(Error::OverlappingSpans { .. })
        ));
    }

    #[test]
    fn distribution_examples() {
        let one = TaggedSentence::new("a", toks("x y"), vec![O, O]).unwrap();
        let d = tag_distribution(&[one]).unwrap();
        assert_eq!(d[&O], 1.0);
        assert_eq!(d[&BShort], 0.0);
        assert_eq!(d.len(), TAG_COUNT);

        let a = TaggedSentence::new("a", toks("X"), vec![BShort]).unwrap();
        let b = TaggedSentence::new("b", toks("y"), vec![O]).unwrap();
        let d = tag_distribution(&[a, b]).unwrap();
        assert_eq!(d[&BShort], 0.5);
        assert_eq!(d[&O], 0.5);

        assert!(tag_distribution(&[]).is_err());
    }

    #[test]
    fn find_phrase_is_contiguous() {
        let t = toks("a b c a b");
        assert_eq!(find_phrase(&t, &toks("a b")), vec![0, 3]);
        assert!(find_phrase(&t, &toks("a c")).is_empty());
    }

    fn valid_tags() -> impl Strategy<Value = Vec<BioTag>> {
        // Build from a list of (kind?, length) segments so the output is valid BIO.
        prop::collection::vec((0u8..3, 1usize..4), 0..20).prop_map(|segs| {
            let mut tags = Vec::new();
            for (k, len) in segs {
                match k {
                    0 => tags.extend(std::iter::repeat_n(O, len)),
                    _ => {
                        let kind = if k == 1 {
                            SpanKind::Short
                        } else {
                            SpanKind::Long
                        };
                        tags.push(BioTag::begin(kind));
                        tags.extend(std::iter::repeat_n(BioTag::inside(kind), len - 1));
                    }
                }
            }
            tags
        })
    }

    proptest! {
        #[test]
        fn bio_round_trip(tags in valid_tags()) {
            let spans = spans_from_tags(&tags).unwrap();
            prop_assert!(spans.windows(2).all(|w| w[0].end <= w[1].start));
            prop_assert_eq!(tags_from_spans(tags.len(), &spans).unwrap(), tags);
        }

        #[test]
        fn ad_file_round_trip(
            words in prop::collection::vec("[A-Za-z]{1,6}", 1..8),
            idx in 0usize..8,
            label in prop::option::of("[a-z ]{1,12}"),
        ) {
            let idx = idx % words.len();
            let ex = ADExample::new("r", words, idx, label).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ad.jsonl");
            write_ad_dataset(&path, std::slice::from_ref(&ex)).unwrap();
            prop_assert_eq!(read_ad_dataset(&path).unwrap(), vec![ex]);
        }
    }
}
