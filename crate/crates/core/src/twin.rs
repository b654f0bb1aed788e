//! Twin-network training of a linear sentence encoder with the
//! mean-squared-error-on-cosine objective.
//!
//! The encoder averages frozen word vectors and applies a trainable projection
//! `P` (`d_out x d_w`). Both sentences of a pair go through the same `P`; the
//! loss is `(1/n) * sum (y - cos(P m1, P m2))^2` with `y = 1` when the two
//! source examples share a long form and `y = 0` otherwise.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::ADExample;
use crate::embed::{cosine, cosine_slices, Embedder, EmbeddingVector, WordVectorTable};
use crate::error::{Error, Result};
use crate::par;

/// Terms with more examples than this are subsampled before pair enumeration.
pub const MAX_EXAMPLES_PER_TERM: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairExample {
    pub s1: Vec<String>,
    pub s2: Vec<String>,
    pub y: f64,
    pub short_form: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pairs: Vec<PairExample>,
}

impl PairDataset {
    pub fn new(pairs: Vec<PairExample>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Empty("pair dataset"));
        }
        if let Some(p) = pairs.iter().find(|p| p.y != 0.0 && p.y != 1.0) {
            return Err(Error::record(
                &p.short_form,
                format!("pair target {} not in {{0, 1}}", p.y),
            ));
        }
        Ok(PairDataset { pairs })
    }

    pub fn pairs(&self) -> &[PairExample] {
        &self.pairs
    }

    pub fn n(&self) -> usize {
        self.pairs.len()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.y == 1.0).count()
    }

    pub fn negatives(&self) -> usize {
        self.n() - self.positives()
    }
}

/// Balanced positive/negative pairs sharing a short form: per term, up to
/// `per_term_cap` of each, and never more positives than negatives or vice versa.
pub fn generate_pairs(train: &[ADExample], per_term_cap: usize, seed: u64) -> Result<PairDataset> {
    let mut by_term: BTreeMap<&str, Vec<(&ADExample, &str)>> = BTreeMap::new();
    for ex in train {
        let label = ex
            .label
            .as_deref()
            .ok_or_else(|| Error::record(&ex.id, "unlabeled training example"))?;
        by_term
            .entry(ex.short_form())
            .or_default()
            .push((ex, label));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for (term, mut examples) in by_term {
        if examples.len() > MAX_EXAMPLES_PER_TERM {
            examples.shuffle(&mut rng);
            examples.truncate(MAX_EXAMPLES_PER_TERM);
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for i in 0..examples.len() {
            for j in i + 1..examples.len() {
                if examples[i].1 == examples[j].1 {
                    pos.push((i, j));
                } else {
                    neg.push((i, j));
                }
            }
        }
        let m = per_term_cap.min(pos.len()).min(neg.len());
        if m == 0 {
            continue;
        }
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        for (list, y) in [(&pos, 1.0), (&neg, 0.0)] {
            for &(i, j) in &list[..m] {
                pairs.push(PairExample {
                    s1: examples[i].0.tokens.clone(),
                    s2: examples[j].0.tokens.clone(),
                    y,
                    short_form: term.to_string(),
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Unreachable(
            "no balanced pairs: no short form has both same-label and different-label examples"
                .into(),
        ));
    }
    PairDataset::new(pairs)
}

/// Mean-word-vector encoder followed by a trainable linear projection.
#[derive(Debug, Clone)]
pub struct LinearTwinEmbedder {
    table: Arc<WordVectorTable>,
    projection: DMatrix<f64>,
}

impl LinearTwinEmbedder {
    pub fn new(table: Arc<WordVectorTable>, projection: DMatrix<f64>) -> Result<Self> {
        if projection.ncols() != table.dim() {
            return Err(Error::Dimension {
                expected: table.dim(),
                found: projection.ncols(),
            });
        }
        Ok(LinearTwinEmbedder { table, projection })
    }

    /// Gaussian initialization with standard deviation `scale`.
    pub fn random(table: Arc<WordVectorTable>, output_dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = table.dim();
        let projection = DMatrix::from_fn(output_dim, d, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        LinearTwinEmbedder { table, projection }
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.projection
    }

    pub fn table(&self) -> &Arc<WordVectorTable> {
        &self.table
    }

    fn project(&self, mean: &[f64]) -> Vec<f64> {
        project(&self.projection, mean)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = TwinModelFile {
            format: TWIN_FORMAT.into(),
            version: TWIN_VERSION,
            input_dim: self.projection.ncols(),
            output_dim: self.projection.nrows(),
            projection: self
                .projection
                .row_iter()
                .map(|r| r.iter().copied().collect())
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

    pub fn load(path: impl AsRef<Path>, table: Arc<WordVectorTable>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let file: TwinModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        if file.format != TWIN_FORMAT || file.version != TWIN_VERSION {
            return Err(Error::Config(format!(
                "unsupported twin model {} v{}",
                file.format, file.version
            )));
        }
        if file.projection.len() != file.output_dim
            || file.projection.iter().any(|r| r.len() != file.input_dim)
        {
            return Err(Error::Config(
                "projection shape disagrees with header".into(),
            ));
        }
        let flat: Vec<f64> = file.projection.into_iter().flatten().collect();
        let projection = DMatrix::from_row_slice(file.output_dim, file.input_dim, &flat);
        LinearTwinEmbedder::new(table, projection)
    }
}

const TWIN_FORMAT: &str = "acrokit-twin";
const TWIN_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TwinModelFile {
    format: String,
    version: u32,
    input_dim: usize,
    output_dim: usize,
    projection: Vec<Vec<f64>>,
}

impl Embedder for LinearTwinEmbedder {
    fn name(&self) -> &str {
        "twin"
    }

    fn dimension(&self) -> usize {
        self.projection.nrows()
    }

    fn embed(&self, tokens: &[String]) -> EmbeddingVector {
        EmbeddingVector::new(self.project(&self.table.mean_vector(tokens)))
            .unwrap_or_else(|_| EmbeddingVector::zeros(self.dimension()))
    }
}

fn project(p: &DMatrix<f64>, mean: &[f64]) -> Vec<f64> {
    (p * DVector::from_column_slice(mean))
        .iter()
        .copied()
        .collect()
}

pub fn dataset_loss(embedder: &dyn Embedder, data: &PairDataset) -> f64 {
    let terms = par::map(data.pairs(), |p| {
        let c = cosine(&embedder.embed(&p.s1), &embedder.embed(&p.s2));
        (p.y - c) * (p.y - c)
    });
    terms.iter().sum::<f64>() / data.n() as f64
}

/// Mean cosine over positive pairs and over negative pairs.
pub fn pair_cosine_means(embedder: &dyn Embedder, data: &PairDataset) -> (f64, f64) {
    let cos = par::map(data.pairs(), |p| {
        (p.y, cosine(&embedder.embed(&p.s1), &embedder.embed(&p.s2)))
    });
    let mean = |label: f64| {
        let xs: Vec<f64> = cos
            .iter()
            .filter(|(y, _)| *y == label)
            .map(|(_, c)| *c)
            .collect();
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    (mean(1.0), mean(0.0))
}

/// Per-pair pieces of the gradient: (coefficient on m1, m1, coefficient on m2, m2).
struct PairGrad {
    du: Vec<f64>,
    dv: Vec<f64>,
}

fn pair_gradient(p: &DMatrix<f64>, m1: &[f64], m2: &[f64], y: f64) -> Option<PairGrad> {
    let u = project(p, m1);
    let v = project(p, m2);
    let nu = crate::embed::norm(&u);
    let nv = crate::embed::norm(&v);
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let c = crate::embed::dot(&u, &v) / (nu * nv);
    let g = -2.0 * (y - c);
    let du = u
        .iter()
        .zip(&v)
        .map(|(ui, vi)| g * (vi / (nu * nv) - c * ui / (nu * nu)))
        .collect();
    let dv = u
        .iter()
        .zip(&v)
        .map(|(ui, vi)| g * (ui / (nu * nv) - c * vi / (nv * nv)))
        .collect();
    Some(PairGrad { du, dv })
}

fn batch_gradient(p: &DMatrix<f64>, batch: &[(&[f64], &[f64], f64)]) -> DMatrix<f64> {
    let parts = par::map(batch, |&(m1, m2, y)| pair_gradient(p, m1, m2, y));
    let mut grad = DMatrix::zeros(p.nrows(), p.ncols());
    for (part, &(m1, m2, _)) in parts.iter().zip(batch) {
        let Some(pg) = part else { continue };
        for r in 0..p.nrows() {
            for c in 0..p.ncols() {
                grad[(r, c)] += pg.du[r] * m1[c] + pg.dv[r] * m2[c];
            }
        }
    }
    grad / batch.len() as f64
}

/// Gradient of the batch-mean loss with respect to the projection matrix.
pub fn loss_gradient(embedder: &LinearTwinEmbedder, batch: &[PairExample]) -> Result<DMatrix<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("gradient batch"));
    }
    let means: Vec<(Vec<f64>, Vec<f64>)> = batch
        .iter()
        .map(|p| {
            (
                embedder.table.mean_vector(&p.s1),
                embedder.table.mean_vector(&p.s2),
            )
        })
        .collect();
    let rows: Vec<(&[f64], &[f64], f64)> = means
        .iter()
        .zip(batch)
        .map(|((a, b), p)| (a.as_slice(), b.as_slice(), p.y))
        .collect();
    Ok(batch_gradient(&embedder.projection, &rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwinTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
    pub output_dim: usize,
}

impl Default for TwinTrainConfig {
    fn default() -> Self {
        TwinTrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            init_scale: 0.1,
            output_dim: 64,
        }
    }
}

impl TwinTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a non-negative finite number".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.output_dim == 0 {
            return Err(Error::Config(
                "epochs, batch_size and output_dim must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn loss_from_means(p: &DMatrix<f64>, rows: &[(&[f64], &[f64], f64)]) -> f64 {
    let terms = par::map(rows, |&(m1, m2, y)| {
        let c = cosine_slices(&project(p, m1), &project(p, m2));
        (y - c) * (y - c)
    });
    terms.iter().sum::<f64>() / rows.len() as f64
}

/// Mini-batch gradient descent with seeded shuffling.
///
/// The returned curve has `epochs + 1` entries: the full-dataset loss at
/// initialization followed by the loss after each epoch.
pub fn train_twin(
    train_pairs: &PairDataset,
    table: Arc<WordVectorTable>,
    cfg: &TwinTrainConfig,
) -> Result<(LinearTwinEmbedder, Vec<f64>)> {
    cfg.validate()?;
    let mut model = LinearTwinEmbedder::random(table, cfg.output_dim, cfg.init_scale, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let means = par::map(train_pairs.pairs(), |p| {
        (
            model.table.mean_vector(&p.s1),
            model.table.mean_vector(&p.s2),
        )
    });
    let rows: Vec<(&[f64], &[f64], f64)> = means
        .iter()
        .zip(train_pairs.pairs())
        .map(|((a, b), p)| (a.as_slice(), b.as_slice(), p.y))
        .collect();

    let mut curve = vec![loss_from_means(&model.projection, &rows)];
    let mut order: Vec<usize> = (0..rows.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|&i| rows[i]).collect();
            let grad = batch_gradient(&model.projection, &batch);
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "twin gradient at epoch {epoch}, batch {b}"
                )));
            }
            model.projection -= grad * cfg.learning_rate;
        }
        let loss = loss_from_means(&model.projection, &rows);
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("twin loss after epoch {epoch}")));
        }
        curve.push(loss);
    }
    Ok((model, curve))
}
