mod common;

use common::fd::toy_extractor_config;
use common::{assert_close, doc, oracles, rng, tokens, toy_table};
use dann::autodiff::{ParamStore, Tape, Tensor};
use dann::data::Document;
use dann::embeddings::{load_embeddings, EmbeddingLayer};
use dann::extractors::{fit_idf, EncodedDoc, Extractor, ExtractorConfig, ExtractorKind, ExtractorParams, IdfTable};
use proptest::prelude::*;

struct Setup {
    store: ParamStore,
    emb: EmbeddingLayer,
    ex: Extractor,
}

fn setup(kind: ExtractorKind, table_text: Option<&str>, seq_len: usize) -> Setup {
    let table = match table_text {
        Some(t) => load_embeddings(t.as_bytes(), None).unwrap(),
        None => toy_table(10, 3, 1),
    };
    let mut store = ParamStore::new();
    let emb = EmbeddingLayer::bind(&mut store, &table, false);
    let ex = Extractor::new(&mut store, &toy_extractor_config(kind), table.dim(), seq_len, &mut rng(2)).unwrap();
    Setup { store, emb, ex }
}

fn pooled(s: &Setup, d: &Document, idf: Option<&IdfTable>) -> Vec<f64> {
    let enc = EncodedDoc::encode(d, &s.emb, idf, 100).unwrap();
    let mut tape = Tape::eval();
    let out = s.ex.forward(&mut tape, &s.store, &s.emb, &[&enc], &mut rng(0)).unwrap();
    tape.value(out.pooled.unwrap()).data().to_vec()
}

fn features(s: &Setup, docs: &[Document]) -> Tensor {
    let enc: Vec<EncodedDoc> = docs.iter().map(|d| EncodedDoc::encode(d, &s.emb, None, 100).unwrap()).collect();
    let refs: Vec<&EncodedDoc> = enc.iter().collect();
    let mut tape = Tape::eval();
    let out = s.ex.forward(&mut tape, &s.store, &s.emb, &refs, &mut rng(0)).unwrap();
    tape.value(out.z).clone()
}

#[test]
fn feature_dims_follow_the_reference_architecture() {
    let dims: Vec<usize> = ExtractorKind::ALL
        .iter()
        .map(|&kind| ExtractorConfig { kind, ..ExtractorConfig::default() }.feature_dim())
        .collect();
    assert_eq!(dims, [100, 100, 300, 200]);
}

#[test]
fn mean_stage_examples() {
    let s = setup(ExtractorKind::Avg, Some("2 2\na 1 0\nb 0 1\n"), 4);
    let two = Document::new("x", vec!["a".into(), "b".into()], None, 0);
    assert_eq!(pooled(&s, &two, None), [0.5, 0.5]);
    let one = Document::new("y", vec!["b".into()], None, 0);
    assert_eq!(pooled(&s, &one, None), [0.0, 1.0]);
}

#[test]
fn tfidf_pooling_matches_scalar_oracle() {
    let s = setup(ExtractorKind::Tfidf, None, 4);
    let corpus = [vec![1, 2, 2], vec![2, 3], vec![4, 1, 5, 5, 5]];
    let docs: Vec<Document> = corpus.iter().map(|ids| Document::new("d", tokens(ids), None, 0)).collect();
    let idf = fit_idf(&docs).unwrap();
    assert_close(idf.idf("w2"), (4.0f64 / 3.0).ln() + 1.0, 1e-15);
    assert_close(idf.idf("unseen"), 4f64.ln() + 1.0, 1e-15);

    let table = toy_table(10, 3, 1);
    let names: Vec<Vec<String>> = corpus.iter().map(|ids| tokens(ids)).collect();
    let refs: Vec<Vec<&str>> = names.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
    let vectors = |w: &str| table.vector(w).unwrap().to_vec();
    for (d, words) in docs.iter().zip(&refs) {
        let got = pooled(&s, d, Some(&idf));
        let want = oracles::tfidf_pooled(words, &refs, &vectors);
        for (a, b) in got.iter().zip(&want) {
            assert_close(*a, *b, 1e-12);
        }
    }

    // One token: idf(w) * w.
    let single = Document::new("s", tokens(&[3]), None, 0);
    let got = pooled(&s, &single, Some(&idf));
    let v = table.vector("w3").unwrap();
    for (a, b) in got.iter().zip(v) {
        assert_close(*a, idf.idf("w3") * b, 1e-15);
    }
}

#[test]
fn cnn_zero_input_gives_zero_features() {
    let s = setup(ExtractorKind::Cnn, Some("1 2\nz 0 0\n"), 6);
    let z = features(&s, &[Document::new("z", vec!["z".into(); 4], None, 0)]);
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn cnn_ignores_extra_trailing_padding() {
    let text = "3 2\na 0.5 1\nb 1 0.25\nc 0.1 0.9\n";
    let d = Document::new("d", ["a", "b", "c", "a"].map(String::from).to_vec(), None, 0);
    let mut outputs = Vec::new();
    for seq_len in [5, 8, 12] {
        let mut s = setup(ExtractorKind::Cnn, Some(text), seq_len);
        // Nonnegative filters keep every activation >= 0, so padding windows never win the max.
        if let ExtractorParams::Cnn { banks } = &s.ex.params {
            for bank in banks.clone() {
                let w = s.store.value(bank.w).clone();
                let abs: Vec<f64> = w.data().iter().map(|x| x.abs()).collect();
                s.store.set_value(bank.w, Tensor::new(w.shape().to_vec(), abs).unwrap()).unwrap();
            }
        }
        outputs.push(features(&s, &[d.clone()]).data().to_vec());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn cnn_rejects_documents_shorter_than_the_widest_filter() {
    let mut store = ParamStore::new();
    let cfg = ExtractorConfig { kind: ExtractorKind::Cnn, ..ExtractorConfig::default() };
    assert!(Extractor::new(&mut store, &cfg, 3, 4, &mut rng(0)).is_err());
}

#[test]
fn han_single_token_document_has_unit_attention() {
    let s = setup(ExtractorKind::Han, None, 4);
    let d = doc("one", &[&[3]], None, 0);
    let enc = EncodedDoc::encode(&d, &s.emb, None, 100).unwrap();
    let mut tape = Tape::eval();
    let out = s.ex.forward(&mut tape, &s.store, &s.emb, &[&enc], &mut rng(0)).unwrap();
    let att = out.attention.unwrap();
    assert_eq!(tape.value(att.word_alpha).data(), &[1.0]);
    assert_eq!(tape.value(att.sent_alpha).data(), &[1.0]);
}

#[test]
fn han_attention_is_normalized_per_sentence_and_document() {
    let s = setup(ExtractorKind::Han, None, 4);
    let docs = [doc("a", &[&[1, 2, 3], &[4], &[5, 6]], None, 0), doc("b", &[&[7, 8, 9, 0, 1]], None, 0)];
    let enc: Vec<EncodedDoc> = docs.iter().map(|d| EncodedDoc::encode(d, &s.emb, None, 100).unwrap()).collect();
    let refs: Vec<&EncodedDoc> = enc.iter().collect();
    let mut tape = Tape::eval();
    let out = s.ex.forward(&mut tape, &s.store, &s.emb, &refs, &mut rng(0)).unwrap();
    let att = out.attention.unwrap();
    let words = tape.value(att.word_alpha).data();
    for r in &att.sentence_rows {
        assert!((words[r.clone()].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let sents = tape.value(att.sent_alpha).data();
    for r in &att.doc_sentences {
        assert!((sents[r.clone()].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn empty_documents_are_rejected() {
    let s = setup(ExtractorKind::Avg, None, 4);
    let empty = Document::new("e", vec![], None, 0);
    assert!(EncodedDoc::encode(&empty, &s.emb, None, 10).is_err());
}

proptest! {
    #[test]
    fn average_and_tfidf_pooling_ignore_token_order(ids in prop::collection::vec(0usize..10, 1..12), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = ids.clone();
        shuffled.shuffle(&mut rng(seed));
        let a = Document::new("a", tokens(&ids), None, 0);
        let b = Document::new("b", tokens(&shuffled), None, 0);
        let idf = fit_idf([&a, &Document::new("c", tokens(&[1, 2]), None, 0)]).unwrap();
        for (kind, idf) in [(ExtractorKind::Avg, None), (ExtractorKind::Tfidf, Some(&idf))] {
            let s = setup(kind, None, 4);
            let (pa, pb) = (pooled(&s, &a, idf), pooled(&s, &b, idf));
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
