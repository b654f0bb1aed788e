//! Deterministic short-form detection and short/long alignment: the candidate
//! heuristic and the rule-based identification baseline.

use serde::{Deserialize, Serialize};

use crate::corpus::{AcronymSpan, BioTag, SpanKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub min_short_len: usize,
    pub max_short_len: usize,
    /// Minimum share of capitals among the alphabetic characters.
    pub capital_fraction: f64,
    /// Interior words a long-form window may skip.
    pub max_skip_words: usize,
    /// Leading characters a word (or hyphen piece) may contribute.
    pub max_chars_per_word: usize,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            min_short_len: 2,
            max_short_len: 10,
            capital_fraction: 0.5,
            max_skip_words: 1,
            max_chars_per_word: 3,
        }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_short_len < 2 {
            return Err(Error::Config("min_short_len must be at least 2".into()));
        }
        if self.max_short_len < self.min_short_len {
            return Err(Error::Config(
                "max_short_len must be >= min_short_len".into(),
            ));
        }
        if !(self.capital_fraction > 0.0 && self.capital_fraction <= 1.0) {
            return Err(Error::Config("capital_fraction must lie in (0, 1]".into()));
        }
        if self.max_chars_per_word == 0 {
            return Err(Error::Config("max_chars_per_word must be positive".into()));
        }
        Ok(())
    }
}

pub fn is_short_form(token: &str, cfg: &RuleConfig) -> bool {
    let letters = token.chars().filter(|c| c.is_alphabetic()).count();
    if letters == 0 || letters < cfg.min_short_len || token.chars().count() > cfg.max_short_len {
        return false;
    }
    let capitals = token.chars().filter(|c| c.is_uppercase()).count();
    capitals as f64 / letters as f64 >= cfg.capital_fraction
}

/// Characters of the short form that must be spelled by the long form.
fn short_letters(short: &str) -> Vec<char> {
    short
        .chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Lowercased alphanumeric content of each hyphen piece; empty when the word
/// cannot contribute letters (punctuation).
fn letter_groups(word: &str) -> Vec<Vec<char>> {
    word.split('-')
        .map(|p| {
            p.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

/// Positions in `target` reachable after a used word consumes leading
/// characters of its pieces: 1..=max from the first piece, 0..=max from the rest.
fn consume(groups: &[Vec<char>], target: &[char], pos: usize, max: usize, out: &mut Vec<usize>) {
    out.clear();
    if groups.is_empty() {
        return;
    }
    let mut reach = vec![pos];
    for (gi, group) in groups.iter().enumerate() {
        let min_take = usize::from(gi == 0);
        let mut next = Vec::new();
        for &p in &reach {
            for k in min_take..=max.min(group.len()) {
                if p + k <= target.len()
                    && group[..k] == target[p..p + k]
                    && !next.contains(&(p + k))
                {
                    next.push(p + k);
                }
            }
        }
        reach = next;
        if reach.is_empty() {
            return;
        }
    }
    out.extend(reach);
}

fn window_spells(groups: &[Vec<Vec<char>>], target: &[char], cfg: &RuleConfig) -> bool {
    let last = groups.len() - 1;
    // (position in target, skips used)
    let mut states = vec![(0usize, 0usize)];
    let mut scratch = Vec::new();
    for (j, word) in groups.iter().enumerate() {
        let mut next: Vec<(usize, usize)> = Vec::new();
        for &(pos, skips) in &states {
            if j != 0
                && j != last
                && skips < cfg.max_skip_words
                && !next.contains(&(pos, skips + 1))
            {
                next.push((pos, skips + 1));
            }
            consume(word, target, pos, cfg.max_chars_per_word, &mut scratch);
            for &p in &scratch {
                if !next.contains(&(p, skips)) {
                    next.push((p, skips));
                }
            }
        }
        if next.is_empty() {
            return false;
        }
        states = next;
    }
    states.iter().any(|&(p, _)| p == target.len())
}

/// Finds the leftmost, shortest window of `words` whose leading characters
/// spell `short`, restricted to windows of words accepted by `allowed`.
pub(crate) fn match_expansion_where<F>(
    short: &str,
    words: &[String],
    cfg: &RuleConfig,
    allowed: F,
) -> Option<AcronymSpan>
where
    F: Fn(usize) -> bool,
{
    let target = short_letters(short);
    if target.is_empty() {
        return None;
    }
    let groups: Vec<Vec<Vec<char>>> = words.iter().map(|w| letter_groups(w)).collect();
    let max_len = target.len() + cfg.max_skip_words;
    for start in 0..words.len() {
        if !allowed(start) {
            continue;
        }
        for end in start + 1..=words.len().min(start + max_len) {
            if !allowed(end - 1) {
                break;
            }
            if window_spells(&groups[start..end], &target, cfg) {
                return Some(AcronymSpan::new(SpanKind::Long, start, end));
            }
        }
    }
    None
}

pub fn match_expansion(short: &str, words: &[String], cfg: &RuleConfig) -> Option<AcronymSpan> {
    match_expansion_where(short, words, cfg, |_| true)
}

/// Rule-based identification baseline: single-token short forms plus their
/// in-sentence expansion windows.
pub fn extract_rule_based(tokens: &[String], cfg: &RuleConfig) -> Vec<BioTag> {
    let mut tags = vec![BioTag::O; tokens.len()];
    let shorts: Vec<usize> = (0..tokens.len())
        .filter(|&i| is_short_form(&tokens[i], cfg))
        .collect();
    for &i in &shorts {
        tags[i] = BioTag::BShort;
    }
    for &i in &shorts {
        let claimed = tags.clone();
        if let Some(span) =
            match_expansion_where(&tokens[i], tokens, cfg, |k| claimed[k] == BioTag::O)
        {
            tags[span.start] = BioTag::BLong;
            for t in &mut tags[span.start + 1..span.end] {
                *t = BioTag::ILong;
            }
        }
    }
    tags
}
