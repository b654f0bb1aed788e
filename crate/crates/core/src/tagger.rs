//! Learned acronym identification: token embeddings projected onto BIO tag
//! logits, argmax decoding, BIO cleanup and logit-averaging ensembles.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_json_lines, BioTag, TaggedSentence, TAG_COUNT};
use crate::embed::fnv1a;
use crate::error::{Error, Result};
use crate::par;

pub type Logits = [f64; TAG_COUNT];

/// Serializable description of a token embedder, stored in model files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderSpec {
    Hashed { dim: usize, window: usize },
    File { name: String, dim: usize },
}

/// Maps the words of a sentence to one or more subunit vectors each.
pub trait TokenEmbedder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn spec(&self) -> EmbedderSpec;
    fn embed_words(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<Vec<f64>>>>;

    /// The vector of each word's first subunit.
    fn first_subunits(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
        self.embed_words(sentence_id, tokens)?
            .into_iter()
            .enumerate()
            .map(|(i, subunits)| {
                subunits
                    .into_iter()
                    .next()
                    .ok_or_else(|| Error::MissingVector {
                        id: format!("{sentence_id}#{i}"),
                        member: self.name().to_string(),
                    })
            })
            .collect()
    }
}

pub const DEFAULT_HASHED_DIM: usize = 256;

/// Feature-hashing embedder over character n-grams, word shape and the
/// identities and shapes of neighboring words. One subunit per word.
#[derive(Debug, Clone)]
pub struct HashedTokenEmbedder {
    dim: usize,
    window: usize,
}

impl Default for HashedTokenEmbedder {
    fn default() -> Self {
        HashedTokenEmbedder {
            dim: DEFAULT_HASHED_DIM,
            window: 1,
        }
    }
}

fn word_shape(word: &str) -> String {
    let mut shape = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if !shape.ends_with(s) {
            shape.push(s);
        }
    }
    shape
}

impl HashedTokenEmbedder {
    pub fn new(dim: usize, window: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config(
                "hashed embedder dimension must be positive".into(),
            ));
        }
        Ok(HashedTokenEmbedder { dim, window })
    }

    fn add(&self, v: &mut [f64], feature: &str) {
        let h = fnv1a(feature.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % self.dim as u64) as usize] += sign;
    }

    fn word_features(&self, v: &mut [f64], prefix: &str, word: &str) {
        let lower = word.to_lowercase();
        self.add(v, &format!("{prefix}w:{lower}"));
        self.add(v, &format!("{prefix}s:{}", word_shape(word)));
    }

    pub fn embed_word(&self, tokens: &[String], i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let word = &tokens[i];
        self.add(&mut v, "bias");
        self.word_features(&mut v, "", word);

        let bounded: Vec<char> = std::iter::once('<')
            .chain(word.to_lowercase().chars())
            .chain(std::iter::once('>'))
            .collect();
        for n in 2..=4 {
            for gram in bounded.windows(n) {
                self.add(&mut v, &format!("g{n}:{}", gram.iter().collect::<String>()));
            }
        }
        let letters = word.chars().filter(|c| c.is_alphabetic()).count();
        let caps = word.chars().filter(|c| c.is_uppercase()).count();
        if let Some(bucket) = (4 * caps).checked_div(letters) {
            self.add(&mut v, &format!("caps:{bucket}"));
        }
        self.add(&mut v, &format!("len:{}", word.chars().count().min(12)));

        for off in 1..=self.window {
            for (dir, j) in [
                ("p", i.checked_sub(off)),
                ("n", Some(i + off).filter(|&j| j < tokens.len())),
            ] {
                let prefix = format!("{dir}{off}:");
                match j {
                    Some(j) => self.word_features(&mut v, &prefix, &tokens[j]),
                    None => self.add(&mut v, &format!("{prefix}pad")),
                }
            }
        }
        let n = crate::embed::norm(&v);
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

impl TokenEmbedder for HashedTokenEmbedder {
    fn name(&self) -> &str {
        "hashed"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Hashed {
            dim: self.dim,
            window: self.window,
        }
    }

    fn embed_words(&self, _sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<Vec<f64>>>> {
        Ok((0..tokens.len())
            .map(|i| vec![self.embed_word(tokens, i)])
            .collect())
    }
}

/// Per-token vectors produced by an external encoder, keyed by
/// (sentence id, word index). A word may carry several subunits.
#[derive(Debug, Clone)]
pub struct FileTokenEmbedder {
    name: String,
    dim: usize,
    vectors: HashMap<(String, usize), Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct TokenEmbeddingRecord {
    id: String,
    word_index: usize,
    vectors: Vec<Vec<f64>>,
}

impl FileTokenEmbedder {
    pub fn new(
        name: impl Into<String>,
        vectors: HashMap<(String, usize), Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let name = name.into();
        let dim = vectors
            .values()
            .flat_map(|s| s.first())
            .map(Vec::len)
            .next()
            .ok_or(Error::Empty("token embedding table"))?;
        for ((id, i), subunits) in &vectors {
            if subunits.is_empty() {
                return Err(Error::record(
                    format!("{id}#{i}"),
                    "word has no subunit vectors",
                ));
            }
            if let Some(v) = subunits.iter().find(|v| v.len() != dim) {
                return Err(Error::Dimension {
                    expected: dim,
                    found: v.len(),
                });
            }
            if subunits.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::record(
                    format!("{id}#{i}"),
                    "non-finite vector entry",
                ));
            }
        }
        Ok(FileTokenEmbedder { name, dim, vectors })
    }

    pub fn load(name: impl Into<String>, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = File::open(path)
            .map(BufReader::new)
            .map_err(|e| Error::Io {
                path: path.into(),
                source: e,
            })?;
        let mut map = HashMap::new();
        read_json_lines(reader, |line, r: TokenEmbeddingRecord| {
            if map
                .insert((r.id.clone(), r.word_index), r.vectors)
                .is_some()
            {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate entry {}#{}", r.id, r.word_index),
                });
            }
            Ok(())
        })?;
        FileTokenEmbedder::new(name, map)
    }
}

impl TokenEmbedder for FileTokenEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::File {
            name: self.name.clone(),
            dim: self.dim,
        }
    }

    fn embed_words(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<Vec<Vec<f64>>>> {
        (0..tokens.len())
            .map(|i| {
                self.vectors
                    .get(&(sentence_id.to_string(), i))
                    .cloned()
                    .ok_or_else(|| Error::MissingVector {
                        id: format!("{sentence_id}#{i}"),
                        member: self.name.clone(),
                    })
            })
            .collect()
    }
}

/// Linear map from an `H`-dimensional token vector to tag logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagProjection {
    /// `TAG_COUNT` rows of length `H`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Logits,
}

impl TagProjection {
    pub fn zeros(hidden: usize) -> Self {
        TagProjection {
            weights: vec![vec![0.0; hidden]; TAG_COUNT],
            bias: [0.0; TAG_COUNT],
        }
    }

    pub fn hidden(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        if self.weights.len() != TAG_COUNT || self.weights.iter().any(|r| r.len() != h) {
            return Err(Error::Config(format!(
                "projection must be {TAG_COUNT} x {h}"
            )));
        }
        if self
            .weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite("tag projection parameter".into()));
        }
        Ok(())
    }

    pub fn logits(&self, h: &[f64]) -> Logits {
        let mut out = self.bias;
        for (o, row) in out.iter_mut().zip(&self.weights) {
            *o += crate::embed::dot(row, h);
        }
        out
    }
}

#[derive(Clone)]
pub struct TaggerModel {
    embedder: Arc<dyn TokenEmbedder>,
    projection: TagProjection,
}

impl std::fmt::Debug for TaggerModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TaggerModel")
            .field("embedder", &self.embedder.spec())
            .field("projection", &self.projection)
            .finish()
    }
}

const TAGGER_FORMAT: &str = "acrokit-tagger";
const TAGGER_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TaggerModelFile {
    format: String,
    version: u32,
    embedder: EmbedderSpec,
    hidden: usize,
    tags: Vec<BioTag>,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TaggerModel {
    pub fn new(embedder: Arc<dyn TokenEmbedder>, projection: TagProjection) -> Result<Self> {
        projection.validate()?;
        if projection.hidden() != embedder.dim() {
            return Err(Error::Dimension {
                expected: embedder.dim(),
                found: projection.hidden(),
            });
        }
        Ok(TaggerModel {
            embedder,
            projection,
        })
    }

    pub fn projection(&self) -> &TagProjection {
        &self.projection
    }

    pub fn embedder(&self) -> &Arc<dyn TokenEmbedder> {
        &self.embedder
    }

    /// One logit vector per word, computed from the word's first subunit.
    pub fn word_logits(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<Logits>> {
        Ok(self
            .embedder
            .first_subunits(sentence_id, tokens)?
            .iter()
            .map(|h| self.projection.logits(h))
            .collect())
    }

    pub fn predict(&self, sentence_id: &str, tokens: &[String]) -> Result<Vec<BioTag>> {
        Ok(cleanup_tags(&decode_tags(
            &self.word_logits(sentence_id, tokens)?,
        )?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = TaggerModelFile {
            format: TAGGER_FORMAT.into(),
            version: TAGGER_VERSION,
            embedder: self.embedder.spec(),
            hidden: self.projection.hidden(),
            tags: BioTag::ALL.to_vec(),
            weights: self.projection.weights.clone(),
            bias: self.projection.bias.to_vec(),
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

    /// Loads a model file. File-backed embedders must be supplied by the
    /// caller; the built-in hashed embedder is rebuilt from its stored config.
    pub fn load(
        path: impl AsRef<Path>,
        file_embedder: Option<Arc<dyn TokenEmbedder>>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let file: TaggerModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.format != TAGGER_FORMAT || file.version != TAGGER_VERSION {
            return Err(Error::Config(format!(
                "unsupported tagger model {} v{}",
                file.format, file.version
            )));
        }
        if file.tags != BioTag::ALL {
            return Err(Error::Config(
                "tag inventory differs from the built-in BIO tags".into(),
            ));
        }
        let embedder: Arc<dyn TokenEmbedder> = match &file.embedder {
            EmbedderSpec::Hashed { dim, window } => {
                Arc::new(HashedTokenEmbedder::new(*dim, *window)?)
            }
            EmbedderSpec::File { name, dim } => {
                let e = file_embedder.ok_or_else(|| {
                    Error::Config(format!("model expects token embeddings {name:?}"))
                })?;
                if e.dim() != *dim {
                    return Err(Error::Dimension {
                        expected: *dim,
                        found: e.dim(),
                    });
                }
                e
            }
        };
        let bias: Logits = file
            .bias
            .try_into()
            .map_err(|_| Error::Config(format!("bias must have {TAG_COUNT} entries")))?;
        TaggerModel::new(
            embedder,
            TagProjection {
                weights: file.weights,
                bias,
            },
        )
    }
}

/// Per-position argmax; ties go to the lowest tag index.
pub fn decode_tags(logits: &[Logits]) -> Result<Vec<BioTag>> {
    logits
        .iter()
        .enumerate()
        .map(|(pos, l)| {
            if l.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("logit at position {pos}")));
            }
            let mut best = 0;
            for k in 1..TAG_COUNT {
                if l[k] > l[best] {
                    best = k;
                }
            }
            Ok(BioTag::ALL[best])
        })
        .collect()
}

/// Rewrites every I- tag that does not continue a span of its own kind
/// (sentence start, after O, after the other kind) into the B- tag of its kind.
pub fn cleanup_tags(tags: &[BioTag]) -> Vec<BioTag> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev = BioTag::O;
    for &t in tags {
        let fixed = match t.kind() {
            Some(kind) if t.is_inside() && prev.kind() != Some(kind) => BioTag::begin(kind),
            _ => t,
        };
        out.push(fixed);
        prev = fixed;
    }
    out
}

/// Mean of the members' word logits, decoded and cleaned up.
pub fn ensemble_predict(
    models: &[TaggerModel],
    sentence_id: &str,
    tokens: &[String],
) -> Result<Vec<BioTag>> {
    let (first, rest) = models.split_first().ok_or(Error::Empty("ensemble"))?;
    let mut mean = first.word_logits(sentence_id, tokens)?;
    let k = models.len() as f64;
    // Accumulate deviations from the first member so identical members
    // reproduce its logits exactly.
    let reference = mean.clone();
    for m in rest {
        for (acc, (l, r)) in mean
            .iter_mut()
            .zip(m.word_logits(sentence_id, tokens)?.iter().zip(&reference))
        {
            for t in 0..TAG_COUNT {
                acc[t] += (l[t] - r[t]) / k;
            }
        }
    }
    Ok(cleanup_tags(&decode_tags(&mean)?))
}

/// Tags many sentences; sentences run in parallel when enabled.
pub fn ensemble_predict_batch(
    models: &[TaggerModel],
    sentences: &[(String, Vec<String>)],
) -> Result<Vec<Vec<BioTag>>> {
    par::try_map(sentences, |(id, tokens)| {
        ensemble_predict(models, id, tokens)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sentences per mini-batch.
    pub batch_size: usize,
    /// Loss weight of O-tagged words; below 1 down-weights them.
    pub o_weight: f64,
    pub seed: u64,
    /// Warm-start parameters, e.g. from a pretraining run.
    #[serde(skip)]
    pub initial: Option<TagProjection>,
}

impl Default for TaggerTrainConfig {
    fn default() -> Self {
        TaggerTrainConfig {
            learning_rate: 5.0,
            epochs: 10,
            batch_size: 16,
            o_weight: 1.0,
            seed: 0,
            initial: None,
        }
    }
}

impl TaggerTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a non-negative finite number".into(),
            ));
        }
        if !(self.o_weight > 0.0 && self.o_weight.is_finite()) {
            return Err(Error::Config("o_weight must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn softmax(l: &Logits) -> Logits {
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = l.map(|x| (x - max).exp());
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

fn cross_entropy(l: &Logits, gold: BioTag) -> f64 {
    let max = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + l.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    lse - l[gold.index()]
}

struct WordRow<'a> {
    h: &'a [f64],
    tag: BioTag,
    weight: f64,
}

fn mean_loss(p: &TagProjection, rows: &[WordRow<'_>]) -> f64 {
    let terms = par::map(rows, |r| r.weight * cross_entropy(&p.logits(r.h), r.tag));
    terms.iter().sum::<f64>() / rows.len() as f64
}

/// Trains the tag projection with the embedder frozen, by mini-batch
/// gradient descent on per-word weighted cross-entropy.
///
/// The curve holds the mean per-word loss at initialization followed by the
/// loss after each epoch.
pub fn train_tagger(
    data: &[TaggedSentence],
    embedder: Arc<dyn TokenEmbedder>,
    cfg: &TaggerTrainConfig,
) -> Result<(TaggerModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("tagger training data"));
    }
    let mut projection = cfg
        .initial
        .clone()
        .unwrap_or_else(|| TagProjection::zeros(embedder.dim()));
    projection.validate()?;
    if projection.hidden() != embedder.dim() {
        return Err(Error::Dimension {
            expected: embedder.dim(),
            found: projection.hidden(),
        });
    }

    let features = par::try_map(data, |s| embedder.first_subunits(&s.id, &s.tokens))?;
    let weight = |t: BioTag| if t == BioTag::O { cfg.o_weight } else { 1.0 };
    let sentence_rows: Vec<Vec<WordRow<'_>>> = data
        .iter()
        .zip(&features)
        .map(|(s, hs)| {
            s.tags
                .iter()
                .zip(hs)
                .map(|(&tag, h)| WordRow {
                    h,
                    tag,
                    weight: weight(tag),
                })
                .collect()
        })
        .collect();
    let all_rows: Vec<WordRow<'_>> = sentence_rows
        .iter()
        .flatten()
        .map(|r| WordRow {
            h: r.h,
            tag: r.tag,
            weight: r.weight,
        })
        .collect();

    let hidden = projection.hidden();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = vec![mean_loss(&projection, &all_rows)];
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WordRow<'_>> = chunk.iter().flat_map(|&i| &sentence_rows[i]).collect();
            let dlogits = par::map(&batch, |r| {
                let mut d = softmax(&projection.logits(r.h));
                d[r.tag.index()] -= 1.0;
                d.map(|x| x * r.weight)
            });
            let scale = cfg.learning_rate / batch.len() as f64;
            let mut grad_w = vec![vec![0.0; hidden]; TAG_COUNT];
            let mut grad_b = [0.0; TAG_COUNT];
            for (d, r) in dlogits.iter().zip(&batch) {
                for t in 0..TAG_COUNT {
                    if d[t] == 0.0 {
                        continue;
                    }
                    grad_b[t] += d[t];
                    for (g, x) in grad_w[t].iter_mut().zip(r.h) {
                        *g += d[t] * x;
                    }
                }
            }
            if grad_b
                .iter()
                .chain(grad_w.iter().flatten())
                .any(|g| !g.is_finite())
            {
                return Err(Error::NonFinite(format!(
                    "tagger gradient at epoch {epoch}, batch {b}"
                )));
            }
            for t in 0..TAG_COUNT {
                projection.bias[t] -= scale * grad_b[t];
                for (w, g) in projection.weights[t].iter_mut().zip(&grad_w[t]) {
                    *w -= scale * g;
                }
            }
        }
        let loss = mean_loss(&projection, &all_rows);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("tagger loss after epoch {epoch}")));
        }
        curve.push(loss);
    }
    Ok((TaggerModel::new(embedder, projection)?, curve))
}
