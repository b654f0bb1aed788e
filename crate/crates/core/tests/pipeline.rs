use std::sync::Arc;

use acrokit::corpus::{
    parse_dictionary, read_ad_dataset, read_ai_dataset, write_ad_dataset, write_ai_dataset,
    ExpansionDictionary,
};
use acrokit::dedupe::dedupe_training;
use acrokit::disambig::{
    build_index, predict_batch, read_index, read_predictions, write_index, write_predictions,
    MemberSource, PredictionSource,
};
use acrokit::embed::{
    load_embedding_file, write_embedding_file, Embedder, EmbeddingVector, SifConfig, SifEmbedder,
};
use acrokit::evaluate::{ad_metrics, ai_metrics, pair_with_gold, score_histogram};
use acrokit::synthetic;
use acrokit::tagger::{
    train_tagger, HashedTokenEmbedder, TaggerModel, TaggerTrainConfig, TokenEmbedder,
};
use acrokit::twin::{generate_pairs, train_twin, TwinTrainConfig};
use indexmap::IndexMap;
use tempfile::TempDir;

fn dictionary(n_terms: usize) -> ExpansionDictionary {
    let mut dict = ExpansionDictionary::new();
    for t in 0..n_terms {
        let senses = (0..synthetic::SENSES_PER_TERM).map(|s| synthetic::sense_label(t, s));
        dict.insert(synthetic::short_form(t), senses).unwrap();
    }
    dict
}

#[test]
fn corpus_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let ai = synthetic::separable_ai_corpus(50, 9);
    write_ai_dataset(dir.path().join("ai.jsonl"), &ai).unwrap();
    assert_eq!(read_ai_dataset(dir.path().join("ai.jsonl")).unwrap(), ai);

    let ad = synthetic::separable_ad_examples(2, 4, 9);
    write_ad_dataset(dir.path().join("ad.jsonl"), &ad).unwrap();
    assert_eq!(read_ad_dataset(dir.path().join("ad.jsonl")).unwrap(), ad);
}

#[test]
fn trained_tagger_survives_save_and_load() {
    let dir = TempDir::new().unwrap();
    let data = synthetic::separable_ai_corpus(400, 1);
    let test = synthetic::separable_ai_corpus(50, 2);
    let embedder: Arc<dyn TokenEmbedder> = Arc::new(HashedTokenEmbedder::default());
    let cfg = TaggerTrainConfig {
        epochs: 4,
        ..Default::default()
    };
    let (model, curve) = train_tagger(&data, embedder, &cfg).unwrap();
    assert_eq!(curve.len(), 5);
    assert!(curve[4] < curve[0]);

    let path = dir.path().join("tagger.json");
    model.save(&path).unwrap();
    let loaded = TaggerModel::load(&path, None).unwrap();
    let predict = |m: &TaggerModel| -> Vec<_> {
        test.iter()
            .map(|s| m.predict(&s.id, &s.tokens).unwrap())
            .collect()
    };
    let (a, b) = (predict(&model), predict(&loaded));
    assert_eq!(a, b);
    assert!(ai_metrics(&test, &a).unwrap().macro_avg.f1 > 0.8);
}

#[test]
fn disambiguation_pipeline_through_files() {
    let dir = TempDir::new().unwrap();
    let n_terms = 3;
    let table = Arc::new(synthetic::separable_word_table(n_terms, 1));
    let train = dedupe_training(&synthetic::separable_ad_examples(n_terms, 15, 5)).unwrap();
    let test: Vec<_> = synthetic::separable_ad_examples(n_terms, 4, 6)
        .into_iter()
        .map(|e| {
            acrokit::corpus::ADExample::new(
                format!("q{}", e.id),
                e.tokens,
                e.acronym_index,
                e.label,
            )
            .unwrap()
        })
        .collect();
    let dict = dictionary(n_terms);
    let dict_text = serde_json::to_string(
        &dict
            .iter()
            .map(|(s, ls)| (s.clone(), ls.iter().cloned().collect::<Vec<_>>()))
            .collect::<IndexMap<_, _>>(),
    )
    .unwrap();
    assert_eq!(parse_dictionary(&dict_text).unwrap(), dict);

    let pairs = generate_pairs(&train, 512, 0).unwrap();
    let twin_cfg = TwinTrainConfig {
        output_dim: 8,
        ..Default::default()
    };
    let (twin, _) = train_twin(&pairs, table.clone(), &twin_cfg).unwrap();

    let sentences: Vec<Vec<String>> = train
        .iter()
        .chain(&test)
        .map(|e| e.tokens.clone())
        .collect();
    let (_, sif_vectors) = SifEmbedder::fit(table, SifConfig::default(), &sentences).unwrap();
    let ids: Vec<&str> = train.iter().chain(&test).map(|e| e.id.as_str()).collect();
    let sif_path = dir.path().join("sif.jsonl");
    write_embedding_file(&sif_path, ids.iter().copied().zip(&sif_vectors)).unwrap();
    let sif: IndexMap<String, EmbeddingVector> = load_embedding_file(&sif_path).unwrap();
    assert_eq!(sif.len(), ids.len());

    let members = [
        MemberSource::Embedder(&twin as &dyn Embedder),
        MemberSource::Vectors {
            name: "sif".into(),
            vectors: &sif,
        },
    ];
    let index = build_index(&train, &members).unwrap();
    let index_path = dir.path().join("index.json");
    write_index(&index_path, &index).unwrap();
    let reloaded = read_index(&index_path).unwrap();
    assert_eq!(reloaded, index);

    let predictions = predict_batch(&test, &reloaded, &dict, &members).unwrap();
    assert!(predictions
        .iter()
        .all(|p| p.source == PredictionSource::NearestNeighbor));
    let pred_path = dir.path().join("pred.jsonl");
    write_predictions(&pred_path, &predictions).unwrap();
    assert_eq!(read_predictions(&pred_path).unwrap(), predictions);

    let metrics = ad_metrics(&test, &predictions, false).unwrap();
    assert!(metrics.accuracy >= 0.9, "{metrics:?}");
    let hist = score_histogram(&pair_with_gold(&test, &predictions).unwrap(), 10).unwrap();
    assert_eq!(hist.correct_count + hist.incorrect_count, test.len());
}
