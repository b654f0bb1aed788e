//! Sentence representations: cosine similarity, SIF embeddings with common
//! component removal, and externally produced embedding files.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{read_json_lines, write_json_lines};
use crate::error::{Error, Result};
use crate::par;

/// Dense sentence vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding entry {v}")));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine from precomputed norms; zero vectors have similarity 0.
pub fn cosine_with_norms(a: &[f64], norm_a: f64, b: &[f64], norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(
        a.len(),
        b.len(),
        "cosine of vectors with different dimensions"
    );
    cosine_with_norms(a, norm(a), b, norm(b))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    cosine_slices(&a.0, &b.0)
}

/// Produces one vector per tokenized sentence.
pub trait Embedder: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, tokens: &[String]) -> EmbeddingVector;
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Unknown words contribute a zero vector.
    #[default]
    Zero,
    /// Unknown words get a pseudo-random vector seeded by the lowercased word.
    Hashed,
}

/// Word vectors plus unigram probabilities.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    vectors: HashMap<String, Vec<f64>>,
    frequencies: HashMap<String, f64>,
    oov_policy: OovPolicy,
    dim: usize,
}

impl WordVectorTable {
    pub fn new(
        vectors: HashMap<String, Vec<f64>>,
        frequencies: HashMap<String, f64>,
        oov_policy: OovPolicy,
    ) -> Result<Self> {
        let dim = vectors
            .values()
            .next()
            .map(Vec::len)
            .ok_or(Error::Empty("word-vector table"))?;
        if dim == 0 {
            return Err(Error::Config(
                "word vectors must have positive dimension".into(),
            ));
        }
        for (w, v) in &vectors {
            if v.len() != dim {
                return Err(Error::record(
                    w,
                    format!("vector dimension {} != {dim}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::record(w, "non-finite vector entry"));
            }
        }
        for (w, p) in &frequencies {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::record(w, format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(WordVectorTable {
            vectors,
            frequencies,
            oov_policy,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov_policy
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Exact lookup, then lowercased, then the OOV policy.
    pub fn vector(&self, word: &str) -> Option<Cow<'_, [f64]>> {
        if let Some(v) = self
            .vectors
            .get(word)
            .or_else(|| self.vectors.get(&word.to_lowercase()))
        {
            return Some(Cow::Borrowed(v));
        }
        match self.oov_policy {
            OovPolicy::Zero => None,
            OovPolicy::Hashed => {
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(word.to_lowercase().as_bytes()));
                let scale = 1.0 / (self.dim as f64).sqrt();
                Some(Cow::Owned(
                    (0..self.dim)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            scale * z
                        })
                        .collect(),
                ))
            }
        }
    }

    /// Unigram probability; unknown words have probability 0.
    pub fn probability(&self, word: &str) -> f64 {
        self.frequencies
            .get(word)
            .or_else(|| self.frequencies.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Weighted mean of word vectors, dividing by the token count.
    pub fn weighted_mean<F: Fn(&str) -> f64>(&self, tokens: &[String], weight: F) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if tokens.is_empty() {
            return acc;
        }
        for t in tokens {
            if let Some(v) = self.vector(t) {
                let w = weight(t);
                for (a, x) in acc.iter_mut().zip(v.iter()) {
                    *a += w * x;
                }
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn mean_vector(&self, tokens: &[String]) -> Vec<f64> {
        self.weighted_mean(tokens, |_| 1.0)
    }
}

#[derive(Deserialize)]
struct WordVectorRecord {
    word: String,
    vector: Vec<f64>,
}

#[derive(Deserialize)]
struct FrequencyRecord {
    word: String,
    p: f64,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

pub fn read_word_vectors(
    vectors_path: impl AsRef<Path>,
    frequencies_path: Option<&Path>,
    oov_policy: OovPolicy,
) -> Result<WordVectorTable> {
    let records = read_json_lines(open(vectors_path.as_ref())?, |_, r: WordVectorRecord| {
        Ok((r.word, r.vector))
    })?;
    let frequencies = match frequencies_path {
        Some(p) => read_json_lines(open(p)?, |_, r: FrequencyRecord| Ok((r.word, r.p)))?
            .into_iter()
            .collect(),
        None => HashMap::new(),
    };
    WordVectorTable::new(records.into_iter().collect(), frequencies, oov_policy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SifConfig {
    /// Smoothing weight in a / (a + p(w)).
    pub a: f64,
    pub remove_components: usize,
}

impl Default for SifConfig {
    fn default() -> Self {
        SifConfig {
            a: 1e-3,
            remove_components: 1,
        }
    }
}

pub fn sif_weight(p: f64, a: f64) -> f64 {
    a / (a + p)
}

pub fn sif_weighted_average(tokens: &[String], table: &WordVectorTable, a: f64) -> Vec<f64> {
    table.weighted_mean(tokens, |w| sif_weight(table.probability(w), a))
}

/// Top principal directions of a corpus, computed without mean-centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonComponents {
    directions: Vec<Vec<f64>>,
}

impl CommonComponents {
    pub fn fit(vectors: &[Vec<f64>], k: usize) -> Result<Self> {
        let d = vectors
            .first()
            .map(Vec::len)
            .ok_or(Error::Empty("component fitting"))?;
        if let Some(v) = vectors.iter().find(|v| v.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: v.len(),
            });
        }
        if k >= d && k > 0 {
            return Err(Error::Config(format!(
                "cannot remove {k} components from dimension {d}"
            )));
        }
        if k == 0 {
            return Ok(CommonComponents {
                directions: Vec::new(),
            });
        }
        // Right singular vectors of X are the eigenvectors of X^T X.
        let mut gram = DMatrix::<f64>::zeros(d, d);
        for v in vectors {
            for i in 0..d {
                if v[i] == 0.0 {
                    continue;
                }
                for j in i..d {
                    gram[(i, j)] += v[i] * v[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .total_cmp(&eig.eigenvalues[a])
                .then(a.cmp(&b))
        });
        let directions = order[..k]
            .iter()
            .map(|&c| {
                let col: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
                let n = norm(&col);
                col.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Ok(CommonComponents { directions })
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    /// Subtracts the projection onto every fitted direction.
    pub fn remove(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for u in &self.directions {
            let c = dot(v, u);
            for (o, x) in out.iter_mut().zip(u) {
                *o -= c * x;
            }
        }
        out
    }
}

pub fn remove_first_component(
    vectors: &[EmbeddingVector],
    k: usize,
) -> Result<Vec<EmbeddingVector>> {
    let raw: Vec<Vec<f64>> = vectors.iter().map(|v| v.0.clone()).collect();
    let comps = CommonComponents::fit(&raw, k)?;
    Ok(raw
        .iter()
        .map(|v| EmbeddingVector(comps.remove(v)))
        .collect())
}

/// SIF weighting followed by removal of the corpus's common components.
pub fn sif_embed_corpus(
    sentences: &[Vec<String>],
    table: &WordVectorTable,
    cfg: &SifConfig,
) -> Result<Vec<EmbeddingVector>> {
    Ok(SifEmbedder::fit(Arc::new(table.clone()), *cfg, sentences)?.1)
}

/// SIF embedder with components fitted on a reference corpus, so later
/// queries are projected consistently.
#[derive(Debug, Clone)]
pub struct SifEmbedder {
    table: Arc<WordVectorTable>,
    cfg: SifConfig,
    components: CommonComponents,
}

impl SifEmbedder {
    /// Fits the components on `corpus` and returns the embedder together with
    /// the corpus embeddings.
    pub fn fit(
        table: Arc<WordVectorTable>,
        cfg: SifConfig,
        corpus: &[Vec<String>],
    ) -> Result<(Self, Vec<EmbeddingVector>)> {
        if cfg.a.is_nan() || cfg.a <= 0.0 {
            return Err(Error::Config("SIF parameter a must be positive".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Empty("SIF corpus"));
        }
        let raw = par::map(corpus, |s| sif_weighted_average(s, &table, cfg.a));
        let components = CommonComponents::fit(&raw, cfg.remove_components)?;
        let out = par::map(&raw, |v| EmbeddingVector(components.remove(v)));
        Ok((
            SifEmbedder {
                table,
                cfg,
                components,
            },
            out,
        ))
    }

    pub fn components(&self) -> &CommonComponents {
        &self.components
    }
}

impl Embedder for SifEmbedder {
    fn name(&self) -> &str {
        "sif"
    }

    fn dimension(&self) -> usize {
        self.table.dim()
    }

    fn embed(&self, tokens: &[String]) -> EmbeddingVector {
        EmbeddingVector(self.components.remove(&sif_weighted_average(
            tokens,
            &self.table,
            self.cfg.a,
        )))
    }
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

pub fn parse_embedding_file<R: std::io::BufRead>(
    reader: R,
) -> Result<IndexMap<String, EmbeddingVector>> {
    let mut out = IndexMap::new();
    let mut dim: Option<usize> = None;
    read_json_lines(reader, |line, r: EmbeddingRecord| {
        let d = *dim.get_or_insert(r.vector.len());
        if r.vector.len() != d {
            return Err(Error::Parse {
                line,
                message: format!("vector dimension {} differs from {d}", r.vector.len()),
            });
        }
        let v = EmbeddingVector::new(r.vector).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if out.insert(r.id.clone(), v).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate id {:?}", r.id),
            });
        }
        Ok(())
    })?;
    Ok(out)
}

pub fn load_embedding_file(path: impl AsRef<Path>) -> Result<IndexMap<String, EmbeddingVector>> {
    parse_embedding_file(open(path.as_ref())?)
}

pub fn write_embedding_file<'a, I>(path: impl AsRef<Path>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = (&'a str, &'a EmbeddingVector)>,
{
    write_json_lines(
        path.as_ref(),
        rows.into_iter().map(|(id, v)| EmbeddingRecord {
            id: id.to_string(),
            vector: v.0.clone(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn cosine_examples() {
        let v = ev(&[0.3, -1.2, 4.0]);
        let neg = ev(&[-0.3, 1.2, -4.0]);
        assert_abs_diff_eq!(cosine(&v, &v), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cosine(&v, &neg), -1.0, epsilon = 1e-12);
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])), 0.0);
        assert_eq!(cosine(&EmbeddingVector::zeros(3), &v), 0.0);
    }

    fn table(words: &[(&str, Vec<f64>, f64)]) -> WordVectorTable {
        WordVectorTable::new(
            words
                .iter()
                .map(|(w, v, _)| (w.to_string(), v.clone()))
                .collect(),
            words.iter().map(|(w, _, p)| (w.to_string(), *p)).collect(),
            OovPolicy::Zero,
        )
        .unwrap()
    }

    #[test]
    fn sif_weight_formula() {
        let a = 1e-3;
        assert_eq!(sif_weight(0.0, a), 1.0);
        assert_eq!(sif_weight(a, a), 0.5);
        assert_abs_diff_eq!(sif_weight(1.0, a), a / (a + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn weighted_average_uses_token_count() {
        let t = table(&[("x", vec![2.0, 0.0], 0.0), ("y", vec![0.0, 4.0], 1e-3)]);
        let v = sif_weighted_average(&toks("x y unknown"), &t, 1e-3);
        assert_abs_diff_eq!(v[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(sif_weighted_average(&[], &t, 1e-3), vec![0.0, 0.0]);
    }

    #[test]
    fn rank_one_corpus_is_annihilated() {
        let t = table(&[("x", vec![1.0, 2.0, -1.0], 0.01)]);
        let corpus = vec![toks("x"), toks("x x"), toks("x x x")];
        for v in sif_embed_corpus(&corpus, &t, &SifConfig::default()).unwrap() {
            assert!(v.norm() <= 1e-8, "{v:?}");
        }
        assert!(sif_embed_corpus(&[], &t, &SifConfig::default()).is_err());
    }

    #[test]
    fn component_removal_examples() {
        let rank1 = vec![ev(&[1.0, 1.0]), ev(&[2.0, 2.0]), ev(&[-3.0, -3.0])];
        for v in remove_first_component(&rank1, 1).unwrap() {
            assert!(v.norm() <= 1e-8);
        }
        // Orthogonal to the dominant direction (x axis) -> unchanged.
        let vs = vec![
            ev(&[5.0, 0.0, 0.0]),
            ev(&[4.0, 0.0, 0.0]),
            ev(&[0.0, 1.0, 0.0]),
        ];
        let out = remove_first_component(&vs, 1).unwrap();
        assert_abs_diff_eq!(out[2].values()[1], 1.0, epsilon = 1e-8);
        assert_eq!(remove_first_component(&vs, 0).unwrap(), vs);
        assert!(remove_first_component(&vs, 3).is_err());
    }

    #[test]
    fn embedding_file_errors() {
        let ok = "{\"id\":\"d1\",\"vector\":[0.1,0.2]}\n{\"id\":\"d2\",\"vector\":[0.3,0.4]}\n";
        let m = parse_embedding_file(ok.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["d1"].dim(), 2);
        let dup = "{\"id\":\"d1\",\"vector\":[0.1]}\n{\"id\":\"d1\",\"vector\":[0.3]}\n";
        assert!(parse_embedding_file(dup.as_bytes()).is_err());
        let mixed = "{\"id\":\"a\",\"vector\":[0.1,0.2]}\n{\"id\":\"b\",\"vector\":[1,2,3]}\n";
        match parse_embedding_file(mixed.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn hashed_oov_is_deterministic() {
        let mut t = table(&[("x", vec![1.0, 0.0, 0.0, 0.0], 0.1)]);
        t.oov_policy = OovPolicy::Hashed;
        let a = t.vector("Unseen").unwrap().into_owned();
        assert_eq!(a, t.vector("unseen").unwrap().into_owned());
        assert_ne!(a, t.vector("other").unwrap().into_owned());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn cosine_symmetry_and_scale(a in vec3(), b in vec3(), s in 0.01f64..100.0) {
            let c = cosine_slices(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&c));
            prop_assert_eq!(c, cosine_slices(&b, &a));
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((cosine_slices(&scaled, &b) - c).abs() <= 1e-12);
        }

        #[test]
        fn removal_leaves_no_component(vs in prop::collection::vec(vec3(), 2..8)) {
            let comps = CommonComponents::fit(&vs, 1).unwrap();
            let u = &comps.directions()[0];
            for v in &vs {
                let r = comps.remove(v);
                prop_assert!(dot(&r, u).abs() <= 1e-8 * norm(v).max(1.0));
                let again = comps.remove(&r);
                for (x, y) in r.iter().zip(&again) {
                    prop_assert!((x - y).abs() <= 1e-8);
                }
            }
        }
    }
}
