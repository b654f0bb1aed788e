//! Duplicate detection, majority conflict resolution and train/eval overlap
//! auditing for disambiguation datasets.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::ADExample;
use crate::error::{Error, Result};

/// Exact sentence tokens plus the short form being disambiguated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DuplicateKey {
    pub sentence: Vec<String>,
    pub short_form: String,
}

impl DuplicateKey {
    pub fn of(example: &ADExample) -> Self {
        DuplicateKey {
            sentence: example.tokens.clone(),
            short_form: example.short_form().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub total: usize,
    pub unique_keys: usize,
    /// Share of eval examples whose key also occurs in train.
    pub eval_with_train_dup: f64,
    /// Among duplicated eval examples: share matching at least one train label.
    pub eval_dup_label_agree: f64,
    /// Among duplicated eval examples: share differing from at least one train label.
    pub eval_dup_label_conflict: f64,
}

/// Groups examples by [`DuplicateKey`] in first-occurrence order.
pub fn duplicate_groups(data: &[ADExample]) -> IndexMap<DuplicateKey, Vec<ADExample>> {
    let mut groups: IndexMap<DuplicateKey, Vec<ADExample>> = IndexMap::new();
    for ex in data {
        groups
            .entry(DuplicateKey::of(ex))
            .or_default()
            .push(ex.clone());
    }
    groups
}

pub fn label_counts(data: &[ADExample]) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for l in data.iter().filter_map(|e| e.label.as_ref()) {
        *counts.entry(l.clone()).or_insert(0) += 1;
    }
    counts
}

/// Majority label of a group; ties go to the globally more frequent label,
/// then to the lexicographically smaller one.
pub fn resolve_group_label(
    group: &[ADExample],
    global_counts: &HashMap<String, usize>,
) -> Result<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in group {
        let label = ex
            .label
            .as_deref()
            .ok_or_else(|| Error::record(&ex.id, "unlabeled example in duplicate group"))?;
        *counts.entry(label).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(la, ca), (lb, cb)| {
            let ga = global_counts.get(*la).copied().unwrap_or(0);
            let gb = global_counts.get(*lb).copied().unwrap_or(0);
            ca.cmp(cb).then(ga.cmp(&gb)).then(lb.cmp(la))
        })
        .map(|(l, _)| l.to_string())
        .ok_or(Error::Empty("duplicate group"))
}

/// One example per key, carrying the resolved label and the first occurrence's id.
pub fn dedupe_training(train: &[ADExample]) -> Result<Vec<ADExample>> {
    let global = label_counts(train);
    duplicate_groups(train)
        .into_values()
        .map(|group| {
            let label = resolve_group_label(&group, &global)?;
            let mut first = group.into_iter().next().expect("groups are non-empty");
            first.label = Some(label);
            Ok(first)
        })
        .collect()
}

/// Splits eval into (kept, removed) where removed examples share a key with train.
pub fn filter_eval_overlap(
    eval: &[ADExample],
    train: &[ADExample],
) -> (Vec<ADExample>, Vec<ADExample>) {
    let keys: HashSet<DuplicateKey> = train.iter().map(DuplicateKey::of).collect();
    eval.iter()
        .cloned()
        .partition(|e| !keys.contains(&DuplicateKey::of(e)))
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn overlap_report(train: &[ADExample], eval: &[ADExample]) -> OverlapStats {
    let mut train_labels: HashMap<DuplicateKey, BTreeSet<Option<&str>>> = HashMap::new();
    for ex in train {
        train_labels
            .entry(DuplicateKey::of(ex))
            .or_default()
            .insert(ex.label.as_deref());
    }
    let mut unique: HashSet<DuplicateKey> = train_labels.keys().cloned().collect();
    let (mut dup, mut agree, mut conflict) = (0usize, 0usize, 0usize);
    for ex in eval {
        let key = DuplicateKey::of(ex);
        if let Some(labels) = train_labels.get(&key) {
            dup += 1;
            let own = ex.label.as_deref();
            if labels.contains(&own) {
                agree += 1;
            }
            if labels.iter().any(|l| *l != own) {
                conflict += 1;
            }
        }
        unique.insert(key);
    }
    OverlapStats {
        total: train.len() + eval.len(),
        unique_keys: unique.len(),
        eval_with_train_dup: fraction(dup, eval.len()),
        eval_dup_label_agree: fraction(agree, dup),
        eval_dup_label_conflict: fraction(conflict, dup),
    }
}
