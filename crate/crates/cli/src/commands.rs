use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use acrokit::acro_rules::extract_rule_based;
use acrokit::corpus::{
    read_ad_dataset, read_ai_dataset, read_dictionary, read_documents, write_ad_dataset,
    write_ai_dataset, ADExample, TaggedSentence,
};
use acrokit::dedupe::{dedupe_training, filter_eval_overlap, overlap_report};
use acrokit::disambig::{
    build_index, label_counts_by_short_form, predict_batch, predict_most_frequent, read_index,
    read_predictions, threshold_sweep, write_index, write_predictions, MemberSource, Prediction,
};
use acrokit::distant::{
    build_auxad, build_auxai, compute_universal_acronyms, read_term_table, subsample_to_term_ratio,
};
use acrokit::embed::{
    load_embedding_file, read_word_vectors, Embedder, EmbeddingVector, SifEmbedder, WordVectorTable,
};
use acrokit::evaluate::{
    ad_metrics, ai_metrics, pair_with_gold, score_histogram, EvaluationReport,
};
use acrokit::tagger::{
    cleanup_tags, ensemble_predict_batch, train_tagger, FileTokenEmbedder, HashedTokenEmbedder,
    TaggerModel, TokenEmbedder,
};
use acrokit::twin::{generate_pairs, train_twin, LinearTwinEmbedder};
use acrokit::{par, ErrorKind};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::write_manifests;
use crate::*;

type Result<T> = std::result::Result<T, CliError>;

/// Attaches the offending file to a library error, keeping its exit class.
fn at(path: &Path) -> impl Fn(acrokit::Error) -> CliError + '_ {
    move |e| {
        let msg = format!("{}: {e}", path.display());
        match e.kind() {
            ErrorKind::Data => CliError::Data(msg),
            ErrorKind::Runtime => CliError::Runtime(msg),
        }
    }
}

fn require_inputs<'a>(paths: impl IntoIterator<Item = &'a PathBuf>) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = paths.into_iter().cloned().collect();
    for p in &paths {
        if !p.is_file() {
            return Err(CliError::Data(format!(
                "{}: input file not found",
                p.display()
            )));
        }
    }
    Ok(paths)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
struct SentenceRecord {
    #[serde(default)]
    id: Option<String>,
    tokens: Vec<String>,
}

/// Reads id and tokens of an identification file; labels may be absent.
fn read_sentences(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let file =
        File::open(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: SentenceRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        let id = r.id.unwrap_or_else(|| format!("line-{}", i + 1));
        if !seen.insert(id.clone()) {
            return Err(CliError::Data(format!(
                "{}: duplicate sentence id {id:?}",
                path.display()
            )));
        }
        out.push((id, r.tokens));
    }
    Ok(out)
}

fn tagged(
    sentences: Vec<(String, Vec<String>)>,
    tags: Vec<Vec<acrokit::corpus::BioTag>>,
) -> Result<Vec<TaggedSentence>> {
    sentences
        .into_iter()
        .zip(tags)
        .map(|((id, tokens), t)| TaggedSentence::new(id, tokens, t).map_err(CliError::from))
        .collect()
}

fn read_ad_files(paths: &[PathBuf]) -> Result<Vec<ADExample>> {
    let mut all = Vec::new();
    let mut seen = HashSet::new();
    for p in paths {
        for ex in read_ad_dataset(p).map_err(at(p))? {
            if !seen.insert(ex.id.clone()) {
                return Err(CliError::Data(format!(
                    "{}: duplicate example id {:?}",
                    p.display(),
                    ex.id
                )));
            }
            all.push(ex);
        }
    }
    Ok(all)
}

fn file_token_embedder(args: &TokenEmbeddingArgs) -> Result<Option<Arc<dyn TokenEmbedder>>> {
    match &args.token_embeddings {
        Some(p) => Ok(Some(Arc::new(
            FileTokenEmbedder::load(args.encoder_name.clone(), p).map_err(at(p))?,
        ))),
        None => Ok(None),
    }
}

fn word_table(args: &WordVectorArgs, config: &RunConfig) -> Result<Arc<WordVectorTable>> {
    let table = read_word_vectors(&args.vectors, args.freqs.as_deref(), config.vectors.oov)
        .map_err(at(&args.vectors))?;
    Ok(Arc::new(table))
}

/// `NAME=PATH` or a bare path named after its file stem.
fn parse_member(spec: &str) -> Result<(String, PathBuf)> {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => {
            Ok((name.to_string(), PathBuf::from(path)))
        }
        Some(_) => Err(CliError::Usage(format!(
            "malformed embeddings argument {spec:?}"
        ))),
        None => {
            let path = PathBuf::from(spec);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| {
                    CliError::Usage(format!("cannot name embeddings member {spec:?}"))
                })?;
            Ok((name, path))
        }
    }
}

fn parse_members(specs: &[String]) -> Result<Vec<(String, PathBuf)>> {
    let members = specs
        .iter()
        .map(|s| parse_member(s))
        .collect::<Result<Vec<_>>>()?;
    let mut names = HashSet::new();
    if let Some((dup, _)) = members.iter().find(|(n, _)| !names.insert(n.clone())) {
        return Err(CliError::Usage(format!(
            "embeddings member {dup:?} given twice"
        )));
    }
    Ok(members)
}

fn load_members(members: &[(String, PathBuf)]) -> Result<Vec<IndexMap<String, EmbeddingVector>>> {
    members
        .iter()
        .map(|(_, p)| load_embedding_file(p).map_err(at(p)))
        .collect()
}

pub fn dispatch(command: Command, config: RunConfig) -> Result<()> {
    match command {
        Command::ExtractRules(a) => extract_rules(a, config),
        Command::BuildAuxai(a) => build_auxai_cmd(a, config),
        Command::BuildAuxad(a) => build_auxad_cmd(a, config),
        Command::Dedupe(a) => dedupe(a, config),
        Command::TrainTagger(a) => train_tagger_cmd(a, config),
        Command::Tag(a) => tag(a, config),
        Command::TrainTwin(a) => train_twin_cmd(a, config),
        Command::Embed(a) => embed(a, config),
        Command::BuildIndex(a) => build_index_cmd(a, config),
        Command::Disambiguate(a) => disambiguate(a, config),
        Command::EvaluateAi(a) => evaluate_ai(a, config),
        Command::EvaluateAd(a) => evaluate_ad(a, config),
        Command::Report(a) => report(a, config),
    }
}

fn extract_rules(a: ExtractRulesArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs([&a.input])?;
    config.rules.validate()?;
    let sentences = read_sentences(&a.input)?;
    let tags = par::map(&sentences, |(_, tokens)| {
        extract_rule_based(tokens, &config.rules)
    });
    write_ai_dataset(&a.out, &tagged(sentences, tags)?).map_err(at(&a.out))?;
    write_manifests("extract-rules", &config, &inputs, &[a.out])
}

fn build_auxai_cmd(a: BuildAuxaiArgs, mut config: RunConfig) -> Result<()> {
    let inputs = require_inputs([&a.docs, &a.terms].into_iter().chain(&a.train))?;
    if let Some(m) = a.min_universal {
        config.distant.universal_min_sentences = m;
    }
    if a.term_ratio.is_some() {
        config.distant.term_ratio = a.term_ratio;
    }
    let docs = read_documents(&a.docs).map_err(at(&a.docs))?;
    let terms = read_term_table(&a.terms).map_err(at(&a.terms))?;
    let universal = match &a.train {
        Some(p) => {
            let train = read_ai_dataset(p).map_err(at(p))?;
            compute_universal_acronyms(&train, config.distant.universal_min_sentences)?
        }
        None => Default::default(),
    };
    let mut data = build_auxai(&docs, &terms, &universal, &config.rules)?;
    if let Some(ratio) = config.distant.term_ratio {
        data = subsample_to_term_ratio(&data, ratio, config.seed)?;
    }
    write_ai_dataset(&a.out, &data).map_err(at(&a.out))?;
    write_manifests("build-auxai", &config, &inputs, &[a.out])
}

fn build_auxad_cmd(a: BuildAuxadArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs([&a.docs, &a.dict])?;
    let docs = read_documents(&a.docs).map_err(at(&a.docs))?;
    let dict = read_dictionary(&a.dict).map_err(at(&a.dict))?;
    let data = build_auxad(&docs, &dict)?;
    write_ad_dataset(&a.out, &data).map_err(at(&a.out))?;
    write_manifests("build-auxad", &config, &inputs, &[a.out])
}

fn dedupe(a: DedupeArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs([&a.input].into_iter().chain(&a.eval))?;
    let train = read_ad_dataset(&a.input).map_err(at(&a.input))?;
    let eval = match &a.eval {
        Some(p) => read_ad_dataset(p).map_err(at(p))?,
        None => Vec::new(),
    };
    let deduped = dedupe_training(&train).map_err(at(&a.input))?;
    let stats = overlap_report(&train, &eval);

    write_ad_dataset(&a.out, &deduped).map_err(at(&a.out))?;
    let line = serde_json::to_string(&stats).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&a.report, line + "\n")
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.report.display())))?;
    let mut outputs = vec![a.out, a.report];
    if let Some(out) = a.eval_out {
        let (kept, _) = filter_eval_overlap(&eval, &train);
        write_ad_dataset(&out, &kept).map_err(at(&out))?;
        outputs.push(out);
    }
    write_manifests("dedupe", &config, &inputs, &outputs)
}

fn train_tagger_cmd(a: TrainTaggerArgs, mut config: RunConfig) -> Result<()> {
    let inputs = require_inputs(
        [&a.train]
            .into_iter()
            .chain(&a.init)
            .chain(&a.tokens.token_embeddings),
    )?;
    let cfg = &mut config.tagger;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.learning_rate = a.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    cfg.o_weight = a.o_weight.unwrap_or(cfg.o_weight);
    cfg.validate()?;

    let data = read_ai_dataset(&a.train).map_err(at(&a.train))?;
    let file_embedder = file_token_embedder(&a.tokens)?;
    let mut cfg = config.tagger.clone();
    let embedder: Arc<dyn TokenEmbedder> = match (&a.init, &file_embedder) {
        (Some(init), _) => {
            let model = TaggerModel::load(init, file_embedder.clone()).map_err(at(init))?;
            cfg.initial = Some(model.projection().clone());
            model.embedder().clone()
        }
        (None, Some(e)) => e.clone(),
        (None, None) => Arc::new(HashedTokenEmbedder::default()),
    };
    let (model, curve) = train_tagger(&data, embedder, &cfg)?;
    model.save(&a.out).map_err(at(&a.out))?;
    let mut outputs = vec![a.out];
    if let Some(path) = a.curve {
        write_json(&path, &curve)?;
        outputs.push(path);
    }
    write_manifests("train-tagger", &config, &inputs, &outputs)
}

fn tag(a: TagArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs(
        a.models
            .iter()
            .chain([&a.input])
            .chain(&a.tokens.token_embeddings),
    )?;
    let file_embedder = file_token_embedder(&a.tokens)?;
    let models = a
        .models
        .iter()
        .map(|p| TaggerModel::load(p, file_embedder.clone()).map_err(at(p)))
        .collect::<Result<Vec<_>>>()?;
    let sentences = read_sentences(&a.input)?;
    let tags = ensemble_predict_batch(&models, &sentences).map_err(at(&a.input))?;
    let tags = tags.iter().map(|t| cleanup_tags(t)).collect();
    write_ai_dataset(&a.out, &tagged(sentences, tags)?).map_err(at(&a.out))?;
    write_manifests("tag", &config, &inputs, &[a.out])
}

fn train_twin_cmd(a: TrainTwinArgs, mut config: RunConfig) -> Result<()> {
    let inputs = require_inputs(
        [&a.train, &a.words.vectors]
            .into_iter()
            .chain(&a.words.freqs),
    )?;
    let cfg = &mut config.twin;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.learning_rate = a.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.output_dim = a.output_dim.unwrap_or(cfg.output_dim);
    cfg.validate()?;

    let train = read_ad_dataset(&a.train).map_err(at(&a.train))?;
    let table = word_table(&a.words, &config)?;
    let pairs =
        generate_pairs(&train, config.pairs.per_term_cap, config.seed).map_err(at(&a.train))?;
    let (model, curve) = train_twin(&pairs, table, &config.twin)?;
    model.save(&a.out).map_err(at(&a.out))?;
    let mut outputs = vec![a.out];
    if let Some(path) = a.curve {
        write_json(&path, &curve)?;
        outputs.push(path);
    }
    write_manifests("train-twin", &config, &inputs, &outputs)
}

fn embed(a: EmbedArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs(
        a.inputs
            .iter()
            .chain([&a.words.vectors])
            .chain(&a.words.freqs)
            .chain(&a.model),
    )?;
    let examples = read_ad_files(&a.inputs)?;
    let table = word_table(&a.words, &config)?;
    let sentences: Vec<Vec<String>> = examples.iter().map(|e| e.tokens.clone()).collect();
    let vectors = match a.method {
        // components are fitted on everything embedded in this call
        EmbedMethod::Sif => SifEmbedder::fit(table, config.sif, &sentences)?.1,
        EmbedMethod::Twin => {
            let path = a
                .model
                .as_ref()
                .ok_or_else(|| CliError::Usage("--model is required for twin".into()))?;
            let model = LinearTwinEmbedder::load(path, table).map_err(at(path))?;
            par::map(&sentences, |s| model.embed(s))
        }
        EmbedMethod::Mean => {
            par::try_map(&sentences, |s| EmbeddingVector::new(table.mean_vector(s)))?
        }
    };
    acrokit::embed::write_embedding_file(
        &a.out,
        examples.iter().map(|e| e.id.as_str()).zip(&vectors),
    )
    .map_err(at(&a.out))?;
    write_manifests("embed", &config, &inputs, &[a.out])
}

fn build_index_cmd(a: BuildIndexArgs, config: RunConfig) -> Result<()> {
    let members = parse_members(&a.embeddings)?;
    let inputs = require_inputs(
        a.train
            .iter()
            .chain(&a.aux)
            .chain(members.iter().map(|(_, p)| p)),
    )?;
    let files: Vec<PathBuf> = a.train.iter().chain(&a.aux).cloned().collect();
    let examples = read_ad_files(&files)?;
    let maps = load_members(&members)?;
    let sources: Vec<MemberSource<'_>> = members
        .iter()
        .zip(&maps)
        .map(|((name, _), vectors)| MemberSource::Vectors {
            name: name.clone(),
            vectors,
        })
        .collect();
    let index = build_index(&examples, &sources)?;
    write_index(&a.out, &index).map_err(at(&a.out))?;
    write_manifests("build-index", &config, &inputs, &[a.out])
}

fn disambiguate(a: DisambiguateArgs, config: RunConfig) -> Result<()> {
    let members = parse_members(&a.embeddings)?;
    let inputs = require_inputs(
        [&a.input, &a.dict]
            .into_iter()
            .chain(&a.index)
            .chain(&a.train)
            .chain(members.iter().map(|(_, p)| p)),
    )?;
    if let Some(t) = a.threshold {
        if !t.is_finite() {
            return Err(CliError::Usage("--threshold must be finite".into()));
        }
    }
    let examples = read_ad_dataset(&a.input).map_err(at(&a.input))?;
    let dict = read_dictionary(&a.dict).map_err(at(&a.dict))?;

    let predictions: Vec<Prediction> = match a.method {
        DisambiguationMethod::NearestNeighbor => {
            let mut index = None;
            for p in &a.index {
                let next = read_index(p).map_err(at(p))?;
                index = Some(match index {
                    None => next,
                    Some(prev) => {
                        acrokit::disambig::RetrievalIndex::merge(prev, next).map_err(at(p))?
                    }
                });
            }
            let index = index.ok_or_else(|| CliError::Usage("--index is required".into()))?;
            let by_name: BTreeMap<&str, &PathBuf> =
                members.iter().map(|(n, p)| (n.as_str(), p)).collect();
            let ordered = index
                .members()
                .iter()
                .map(|m| {
                    by_name
                        .get(m.as_str())
                        .map(|p| (m.clone(), (*p).clone()))
                        .ok_or_else(|| {
                            CliError::Usage(format!("no --embeddings given for index member {m:?}"))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            if ordered.len() != members.len() {
                return Err(CliError::Usage(
                    "--embeddings names members absent from the index".into(),
                ));
            }
            let maps = load_members(&ordered)?;
            let sources: Vec<MemberSource<'_>> = ordered
                .iter()
                .zip(&maps)
                .map(|((name, _), vectors)| MemberSource::Vectors {
                    name: name.clone(),
                    vectors,
                })
                .collect();
            let predictions =
                predict_batch(&examples, &index, &dict, &sources).map_err(at(&a.input))?;
            match a.threshold {
                Some(t) => predictions.into_iter().filter(|p| p.passes(t)).collect(),
                None => predictions,
            }
        }
        DisambiguationMethod::MostFrequent => {
            let train = read_ad_files(&a.train)?;
            let counts = label_counts_by_short_form(&train);
            // short forms never seen in training are left unanswered
            examples
                .iter()
                .filter(|e| counts.contains_key(e.short_form()))
                .map(|e| predict_most_frequent(e, &counts).map_err(CliError::from))
                .collect::<Result<_>>()?
        }
    };
    write_predictions(&a.out, &predictions).map_err(at(&a.out))?;
    write_manifests("disambiguate", &config, &inputs, &[a.out])
}

fn evaluate_ai(a: EvaluateAiArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs([&a.gold, &a.pred])?;
    let gold = read_ai_dataset(&a.gold).map_err(at(&a.gold))?;
    let pred = read_ai_dataset(&a.pred).map_err(at(&a.pred))?;
    let mut by_id: BTreeMap<&str, &TaggedSentence> = BTreeMap::new();
    for p in &pred {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(CliError::Data(format!(
                "{}: duplicate sentence id {:?}",
                a.pred.display(),
                p.id
            )));
        }
    }
    if by_id.len() != gold.len() {
        return Err(CliError::Data(format!(
            "{} predicted sentences for {} gold sentences",
            by_id.len(),
            gold.len()
        )));
    }
    let aligned = gold
        .iter()
        .map(|g| match by_id.get(g.id.as_str()) {
            Some(p) if p.tokens == g.tokens => Ok(p.tags.clone()),
            Some(_) => Err(CliError::Data(format!(
                "record {}: tokens differ from gold",
                g.id
            ))),
            None => Err(CliError::Data(format!("record {}: no prediction", g.id))),
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvaluationReport {
        ai: Some(ai_metrics(&gold, &aligned)?),
        ..Default::default()
    };
    write_json(&a.out, &report)?;
    write_manifests("evaluate-ai", &config, &inputs, &[a.out])
}

fn evaluate_ad(a: EvaluateAdArgs, mut config: RunConfig) -> Result<()> {
    let inputs = require_inputs([&a.gold, &a.pred])?;
    if let Some(b) = a.bins {
        config.evaluate.bins = b;
    }
    if let Some(t) = a.thresholds {
        config.evaluate.thresholds = t;
    }
    let gold = read_ad_dataset(&a.gold).map_err(at(&a.gold))?;
    let pred = read_predictions(&a.pred).map_err(at(&a.pred))?;
    let metrics = ad_metrics(&gold, &pred, a.allow_abstain)?;
    let paired = pair_with_gold(&gold, &pred)?;
    let report = EvaluationReport {
        ai: None,
        ad: Some(metrics),
        histogram: Some(score_histogram(&paired, config.evaluate.bins)?),
        thresholds: threshold_sweep(&paired, &config.evaluate.thresholds),
    };
    write_json(&a.out, &report)?;
    write_manifests("evaluate-ad", &config, &inputs, &[a.out])
}

fn report(a: ReportArgs, config: RunConfig) -> Result<()> {
    let inputs = require_inputs(&a.inputs)?;
    let mut text = String::new();
    for p in &a.inputs {
        let r: EvaluationReport = read_json(p)?;
        text.push_str(&format!("== {} ==\n{}\n", p.display(), r.render_table()));
    }
    print!("{text}");
    if let Some(out) = a.out {
        std::fs::write(&out, &text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
        write_manifests("report", &config, &inputs, &[out])?;
    }
    Ok(())
}
