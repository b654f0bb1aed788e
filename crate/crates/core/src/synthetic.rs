//! Seeded synthetic datasets with known structure, used by the test suites
//! and the benchmarks.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::corpus::{ADExample, BioTag, TaggedSentence};
use crate::embed::{OovPolicy, WordVectorTable};

/// Senses per short form in the separable disambiguation fixture.
pub const SENSES_PER_TERM: usize = 2;
const FILLER_DIMS: usize = 12;
const FILLER_WORDS: usize = 60;
const FILLERS_PER_SENTENCE: usize = 3;
const TABLE_SEED: u64 = 0x5eed;

pub fn short_form(term: usize) -> String {
    format!("TRM{term}")
}

pub fn keyword(term: usize, sense: usize) -> String {
    format!("kw{term}x{sense}")
}

pub fn sense_label(term: usize, sense: usize) -> String {
    format!("term {term} sense {sense}")
}

fn filler(i: usize) -> String {
    format!("fill{i}")
}

/// Word table for [`separable_ad_examples`]: each keyword owns one basis
/// direction, filler words live in a disjoint subspace, short forms are OOV.
pub fn separable_word_table(n_terms: usize, keyword_scale: u32) -> WordVectorTable {
    let keyword_dims = n_terms * SENSES_PER_TERM;
    let dim = keyword_dims + FILLER_DIMS;
    let mut vectors = HashMap::new();
    for t in 0..n_terms {
        for s in 0..SENSES_PER_TERM {
            let mut v = vec![0.0; dim];
            v[t * SENSES_PER_TERM + s] = f64::from(keyword_scale);
            vectors.insert(keyword(t, s), v);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(TABLE_SEED);
    for i in 0..FILLER_WORDS {
        let mut v = vec![0.0; dim];
        for x in &mut v[keyword_dims..] {
            *x = StandardNormal.sample(&mut rng);
        }
        vectors.insert(filler(i), v);
    }
    WordVectorTable::new(vectors, HashMap::new(), OovPolicy::Zero).expect("valid synthetic table")
}

/// Disambiguation examples whose sense is planted as a keyword token:
/// `[short form, keyword, filler, filler, filler]`.
pub fn separable_ad_examples(n_terms: usize, per_sense: usize, seed: u64) -> Vec<ADExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for t in 0..n_terms {
        for s in 0..SENSES_PER_TERM {
            for k in 0..per_sense {
                let mut tokens = vec![short_form(t), keyword(t, s)];
                tokens.extend(
                    (0..FILLERS_PER_SENTENCE).map(|_| filler(rng.random_range(0..FILLER_WORDS))),
                );
                out.push(
                    ADExample::new(format!("t{t}s{s}n{k}"), tokens, 0, Some(sense_label(t, s)))
                        .expect("valid synthetic example"),
                );
            }
        }
    }
    out
}

fn pseudo_words(
    prefix_seed: u64,
    n: usize,
    upper: bool,
    min_len: usize,
    max_len: usize,
) -> Vec<String> {
    const LOWER: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    let mut rng = ChaCha8Rng::seed_from_u64(prefix_seed);
    let mut words: Vec<String> = Vec::with_capacity(n);
    while words.len() < n {
        let len = rng.random_range(min_len..=max_len);
        let w: String = (0..len)
            .map(|_| {
                let c = LOWER[rng.random_range(0..LOWER.len())] as char;
                if upper {
                    c.to_ascii_uppercase()
                } else {
                    c
                }
            })
            .collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

/// Vocabulary partitioned by tag: a token's tag is a function of the token.
pub struct TagVocabulary {
    pub outside: Vec<String>,
    pub short: Vec<String>,
    pub short_tail: Vec<String>,
    pub long_head: Vec<String>,
    pub long_tail: Vec<String>,
}

impl TagVocabulary {
    pub fn standard() -> Self {
        let mut outside = pseudo_words(1, 60, false, 3, 8);
        outside.extend(["(", ")", ",", "."].map(String::from));
        let short = pseudo_words(2, 30, true, 2, 5);
        let short_tail = ["2", "3D", "v2", "II", "++"].map(String::from).to_vec();
        let long_head: Vec<String> = pseudo_words(3, 25, false, 4, 9)
            .into_iter()
            .map(|w| format!("{w}al"))
            .collect();
        let long_tail: Vec<String> = pseudo_words(4, 35, false, 4, 9)
            .into_iter()
            .map(|w| format!("{w}ing"))
            .collect();
        TagVocabulary {
            outside,
            short,
            short_tail,
            long_head,
            long_tail,
        }
    }
}

/// Identification corpus where each tag is determined by the token identity.
pub fn separable_ai_corpus(n_sentences: usize, seed: u64) -> Vec<TaggedSentence> {
    let vocab = TagVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_sentences);
    for i in 0..n_sentences {
        let mut tokens: Vec<String> = Vec::new();
        let mut tags = Vec::new();
        let mut push = |tok: &String, tag: BioTag, tokens: &mut Vec<String>| {
            tokens.push(tok.clone());
            tags.push(tag);
        };
        for _ in 0..rng.random_range(1..5) {
            push(
                vocab.outside[..60].choose(&mut rng).unwrap(),
                BioTag::O,
                &mut tokens,
            );
        }
        if rng.random_bool(0.7) {
            push(
                vocab.long_head.choose(&mut rng).unwrap(),
                BioTag::BLong,
                &mut tokens,
            );
            for _ in 0..rng.random_range(1..4) {
                push(
                    vocab.long_tail.choose(&mut rng).unwrap(),
                    BioTag::ILong,
                    &mut tokens,
                );
            }
            push(&vocab.outside[60], BioTag::O, &mut tokens);
        }
        if rng.random_bool(0.8) {
            push(
                vocab.short.choose(&mut rng).unwrap(),
                BioTag::BShort,
                &mut tokens,
            );
            if rng.random_bool(0.15) {
                push(
                    vocab.short_tail.choose(&mut rng).unwrap(),
                    BioTag::IShort,
                    &mut tokens,
                );
            }
        }
        for _ in 0..rng.random_range(1..6) {
            push(
                vocab.outside.choose(&mut rng).unwrap(),
                BioTag::O,
                &mut tokens,
            );
        }
        out.push(
            TaggedSentence::new(format!("syn{i}"), tokens, tags).expect("valid synthetic sentence"),
        );
    }
    out
}

/// Uniform random tag sequence; usually not valid BIO.
pub fn random_tags<R: Rng>(rng: &mut R, max_len: usize) -> Vec<BioTag> {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| BioTag::ALL[rng.random_range(0..BioTag::ALL.len())])
        .collect()
}

/// Random valid BIO sequence built from O runs and typed spans.
pub fn random_valid_tags<R: Rng>(rng: &mut R, max_len: usize) -> Vec<BioTag> {
    let len = rng.random_range(0..=max_len);
    let mut tags = Vec::with_capacity(len);
    while tags.len() < len {
        match rng.random_range(0..3) {
            0 => tags.push(BioTag::O),
            k => {
                let kind = if k == 1 {
                    crate::corpus::SpanKind::Short
                } else {
                    crate::corpus::SpanKind::Long
                };
                tags.push(BioTag::begin(kind));
                let extra = rng.random_range(0..4).min(len - tags.len());
                tags.extend(std::iter::repeat_n(BioTag::inside(kind), extra));
            }
        }
    }
    tags
}
