//! Finite-difference cases for every primitive op, the recurrent and
//! attention blocks, each extractor and the full F -> GRL -> Q path.

use dann::autodiff::gradcheck::{check_gradients, rel_err, GradCheckReport};
use dann::autodiff::{wasserstein_loss, GrlConfig, ParamId, ParamStore, RowRef, Tape, Tensor, Var};
use dann::data::Document;
use dann::embeddings::EmbeddingLayer;
use dann::extractors::{
    attention_pool, fit_idf, gru_cell, AttentionParams, EncodedDoc, Extractor, ExtractorConfig, ExtractorKind,
    GruParams,
};
use dann::trainer::{build_model, critic_objective, CriticLoss, DannConfig, DataSpec};
use dann::Result;

use super::{doc, random_tensor, rng, toy_table};

pub const H: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-4;
pub const TOL: f64 = 1e-5;

/// `sum(x * c)` with a fixed pseudo-random `c`, so that every output element
/// gets a distinct upstream gradient.
fn probe(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let c = tape.constant(random_tensor(&mut rng(seed), &shape, 1.0))?;
    let y = tape.mul(x, c)?;
    tape.sum(y, None)
}

fn op_case<F>(shapes: &[&[usize]], seed: u64, f: F) -> GradCheckReport
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| store.add(format!("in{i}"), random_tensor(&mut r, s, 1.0), true))
        .collect();
    check_gradients(&mut store, &ids, H, FLOOR, |tape, store| {
        let vars = ids.iter().map(|&id| tape.param(store, id)).collect::<Result<Vec<_>>>()?;
        let out = f(tape, &vars)?;
        probe(tape, out, seed + 1000)
    })
    .unwrap()
}

pub fn primitive_cases() -> Vec<(&'static str, GradCheckReport)> {
    let segs = [0..2, 2..5];
    vec![
        ("matmul", op_case(&[&[3, 4], &[4, 2]], 1, |t, v| t.matmul(v[0], v[1]))),
        ("matmul_nt", op_case(&[&[3, 4], &[2, 4]], 2, |t, v| t.matmul_nt(v[0], v[1]))),
        ("add", op_case(&[&[3, 4], &[3, 4]], 3, |t, v| t.add(v[0], v[1]))),
        ("add_broadcast", op_case(&[&[3, 4], &[4]], 4, |t, v| t.add(v[0], v[1]))),
        ("sub", op_case(&[&[3, 4], &[3, 4]], 5, |t, v| t.sub(v[0], v[1]))),
        ("mul", op_case(&[&[3, 4], &[3, 4]], 6, |t, v| t.mul(v[0], v[1]))),
        ("scale", op_case(&[&[3, 4]], 7, |t, v| t.scale(v[0], -1.7))),
        ("relu", op_case(&[&[4, 5]], 8, |t, v| t.relu(v[0]))),
        ("tanh", op_case(&[&[4, 5]], 9, |t, v| t.tanh(v[0]))),
        ("sigmoid", op_case(&[&[4, 5]], 10, |t, v| t.sigmoid(v[0]))),
        ("exp", op_case(&[&[4, 5]], 11, |t, v| t.exp(v[0]))),
        ("softmax_rows", op_case(&[&[3, 4]], 12, |t, v| t.softmax(v[0], 1))),
        ("softmax_cols", op_case(&[&[3, 4]], 13, |t, v| t.softmax(v[0], 0))),
        ("sum_all", op_case(&[&[3, 4]], 14, |t, v| t.sum(v[0], None))),
        ("sum_axis0", op_case(&[&[3, 4]], 15, |t, v| t.sum(v[0], Some(0)))),
        ("sum_axis1", op_case(&[&[3, 4]], 16, |t, v| t.sum(v[0], Some(1)))),
        ("mean", op_case(&[&[3, 4]], 17, |t, v| t.mean(v[0], Some(0)))),
        ("segment_max", op_case(&[&[5, 3]], 18, move |t, v| t.segment_max(v[0], &segs))),
        ("max_over_time", op_case(&[&[5, 3]], 19, |t, v| t.max_over_time(v[0]))),
        ("concat_rows", op_case(&[&[2, 3], &[4, 3]], 20, |t, v| t.concat(&[v[0], v[1]], 0))),
        ("concat_cols", op_case(&[&[3, 2], &[3, 4]], 21, |t, v| t.concat(&[v[0], v[1]], 1))),
        ("slice_cols", op_case(&[&[3, 5]], 22, |t, v| t.slice_cols(v[0], 1, 3))),
        (
            "gather_rows",
            op_case(&[&[4, 3]], 23, |t, v| t.gather_rows(v[0], vec![Some(2), None, Some(0), Some(2)])),
        ),
        ("reshape", op_case(&[&[3, 4]], 24, |t, v| t.reshape(v[0], &[2, 6]))),
        ("grl", grl_case(0.7)),
        ("conv1d", op_case(&[&[10, 3], &[6, 4]], 26, |t, v| t.conv1d(v[0], v[1], 2, 5))),
        (
            "segment_softmax",
            op_case(&[&[6, 1]], 27, |t, v| t.segment_softmax(v[0], &[0..1, 1..4, 4..6])),
        ),
        (
            "segment_weighted_sum",
            op_case(&[&[6, 3], &[6, 1]], 28, |t, v| t.segment_weighted_sum(v[0], v[1], &[0..2, 2..6])),
        ),
        ("cross_entropy", op_case(&[&[3, 4]], 29, |t, v| t.cross_entropy(v[0], &[2, 0, 3]))),
        (
            "dropout",
            op_case(&[&[4, 5]], 30, |t, v| t.dropout(v[0], 0.4, &mut rng(99))),
        ),
        (
            "wasserstein_loss",
            op_case(&[&[4, 1], &[3, 1]], 31, |t, v| wasserstein_loss(t, v[0], v[1])),
        ),
        ("embed", embed_case()),
    ]
}

/// The reversal layer is the identity in the forward pass, so its oracle is
/// `-lambda` times the finite-difference gradient of the graph without it.
fn grl_case(lambda: f64) -> GradCheckReport {
    let mut store = ParamStore::new();
    let x = store.add("x", random_tensor(&mut rng(25), &[3, 4], 1.0), true);
    let forward = |store: &ParamStore, reverse: bool| -> (Tape, Var) {
        let mut tape = Tape::new();
        let v = tape.param(store, x).unwrap();
        let mut y = tape.tanh(v).unwrap();
        if reverse {
            y = tape.grl(y, GrlConfig::new(lambda).unwrap()).unwrap();
        }
        let loss = probe(&mut tape, y, 1025).unwrap();
        (tape, loss)
    };
    let (mut tape, loss) = forward(&store, true);
    tape.backward(loss, &mut store).unwrap();
    let analytic = store.grad(x).clone();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: None,
        worst_index: 0,
        checked: 0,
    };
    for i in 0..analytic.len() {
        let orig = store.value(x).data()[i];
        let mut at = |v: f64| {
            store.value_mut(x).data_mut()[i] = v;
            let (tape, loss) = forward(&store, false);
            tape.value(loss).item().unwrap()
        };
        let numeric = (at(orig + H) - at(orig - H)) / (2.0 * H);
        store.value_mut(x).data_mut()[i] = orig;
        let err = rel_err(analytic.data()[i], -lambda * numeric, FLOOR);
        report.checked += 1;
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_param = Some("x".into());
            report.worst_index = i;
        }
    }
    report
}

fn embed_case() -> GradCheckReport {
    let mut store = ParamStore::new();
    let mut r = rng(32);
    let table = store.add("table", random_tensor(&mut r, &[5, 3], 1.0), true);
    let oov = store.add("oov", random_tensor(&mut r, &[3], 1.0), true);
    let rows = vec![RowRef::Token(3), RowRef::Oov, RowRef::Pad, RowRef::Token(0), RowRef::Token(3)];
    check_gradients(&mut store, &[table, oov], H, FLOOR, |tape, store| {
        let x = tape.embed(store, table, oov, rows.clone())?;
        probe(tape, x, 33)
    })
    .unwrap()
}

pub fn gru_cell_case() -> GradCheckReport {
    let mut r = rng(40);
    let mut store = ParamStore::new();
    let p = GruParams::new(&mut store, "gru", 3, 4, &mut r);
    let x = store.add("x", random_tensor(&mut r, &[2, 3], 1.0), true);
    let h = store.add("h", random_tensor(&mut r, &[2, 4], 1.0), true);
    let mut ids = p.params();
    ids.extend([x, h]);
    check_gradients(&mut store, &ids, H, FLOOR, |tape, store| {
        let xv = tape.param(store, x)?;
        let hv = tape.param(store, h)?;
        let out = gru_cell(tape, store, &p, xv, hv)?;
        probe(tape, out, 41)
    })
    .unwrap()
}

pub fn attention_pool_case() -> GradCheckReport {
    let mut r = rng(50);
    let mut store = ParamStore::new();
    let p = AttentionParams::new(&mut store, "att", 4, 3, &mut r);
    let h = store.add("h", random_tensor(&mut r, &[5, 4], 1.0), true);
    let mut ids = p.params();
    ids.push(h);
    check_gradients(&mut store, &ids, H, FLOOR, |tape, store| {
        let hv = tape.param(store, h)?;
        let (s, alpha) = attention_pool(tape, store, &p, hv, &[0..2, 2..5])?;
        let a = probe(tape, s, 51)?;
        let b = probe(tape, alpha, 52)?;
        tape.add(a, b)
    })
    .unwrap()
}

pub fn toy_docs() -> Vec<Document> {
    vec![
        doc("a", &[&[0, 1, 2], &[3, 99]], Some(0), 0),
        doc("b", &[&[4, 4, 1, 5], &[2], &[6, 0]], Some(1), 0),
        doc("c", &[&[7, 3, 3]], Some(1), 1),
        doc("d", &[&[5, 6], &[1, 7, 0]], Some(0), 1),
    ]
}

pub fn toy_extractor_config(kind: ExtractorKind) -> ExtractorConfig {
    ExtractorConfig {
        kind,
        dense_units: 5,
        cnn_widths: vec![2, 3],
        cnn_maps: 3,
        gru_hidden: 2,
        max_len: 8,
        ..ExtractorConfig::default()
    }
}

pub fn extractor_case(kind: ExtractorKind) -> GradCheckReport {
    let table = toy_table(8, 3, 60);
    let mut store = ParamStore::new();
    let emb = EmbeddingLayer::bind(&mut store, &table, true);
    store.set_trainable(emb.table, true);
    let docs = toy_docs();
    let idf = (kind == ExtractorKind::Tfidf).then(|| fit_idf(&docs).unwrap());
    let encoded: Vec<EncodedDoc> = docs
        .iter()
        .map(|d| EncodedDoc::encode(d, &emb, idf.as_ref(), 8).unwrap())
        .collect();
    let refs: Vec<&EncodedDoc> = encoded.iter().collect();
    let ex = Extractor::new(&mut store, &toy_extractor_config(kind), 3, 6, &mut rng(61)).unwrap();
    let mut ids = ex.params();
    ids.extend([emb.table, emb.oov]);
    check_gradients(&mut store, &ids, H, FLOOR, |tape, store| {
        let out = ex.forward(tape, store, &emb, &refs, &mut rng(62))?;
        probe(tape, out.z, 63)
    })
    .unwrap()
}

/// Cross-entropy of P plus the critic objective through a reversal layer.
///
/// Finite differences see the reversal layer as the identity, so the oracle
/// differs per parameter group: P and Q parameters are checked against
/// `ce + q`, while F and projection parameters (which sit behind the
/// reversal layer on the critic path) are checked against `ce - lambda * q`.
pub fn composite_case(loss: CriticLoss, n_domains: usize) -> GradCheckReport {
    let table = toy_table(8, 3, 70);
    let cfg = DannConfig {
        extractor: toy_extractor_config(ExtractorKind::Avg),
        critic_hidden: 4,
        critic_loss: loss,
        n_domains,
        one_vs_rest: true,
        cross_lingual: true,
        lambda: 0.6,
        seed: 7,
        ..DannConfig::default()
    };
    let domains: Vec<String> = (0..n_domains.max(2)).map(|d| format!("d{d}")).collect();
    let spec = DataSpec::new(vec!["neg".into(), "pos".into()], domains, 1, 6);
    let model = build_model(&cfg, &spec, &table).unwrap();
    let mut docs = toy_docs();
    if n_domains > 2 {
        docs.push(doc("e", &[&[2, 6, 6, 1]], Some(1), 2));
    }
    let encoded: Vec<EncodedDoc> = docs.iter().map(|d| model.encode(d).unwrap()).collect();
    let refs: Vec<&EncodedDoc> = encoded.iter().collect();
    let class_labels: Vec<usize> = docs.iter().map(|d| d.label.unwrap()).collect();
    let critic_labels: Vec<usize> = docs.iter().map(|d| model.critic_label(d.domain).unwrap()).collect();

    let mut store = model.store.clone();
    // Scale Q up from its clipped-size init so its gradients clear the floor.
    for id in model.q_params() {
        let v = store.value(id).clone();
        let scaled: Vec<f64> = v.data().iter().map(|x| x * 20.0).collect();
        store.set_value(id, Tensor::new(v.shape().to_vec(), scaled).unwrap()).unwrap();
    }
    let graph = |tape: &mut Tape, store: &ParamStore| -> Result<(Var, Var)> {
        let f = model.extractor.forward(tape, store, &model.embedding, &refs, &mut rng(71))?;
        let logits = model.predictor.forward(tape, store, f.z, false)?;
        let ce = tape.cross_entropy(logits, &class_labels)?;
        let z = tape.grl(f.z, GrlConfig::new(cfg.lambda)?)?;
        let scores = model.critic.forward(tape, store, z, false)?;
        let q = critic_objective(tape, scores, &critic_labels, &cfg)?;
        Ok((ce, q))
    };
    let values = |store: &ParamStore| -> (f64, f64) {
        let mut tape = Tape::new();
        let (ce, q) = graph(&mut tape, store).unwrap();
        (tape.value(ce).item().unwrap(), tape.value(q).item().unwrap())
    };

    let behind_grl: Vec<ParamId> = model
        .p_params()
        .into_iter()
        .filter(|id| !model.predictor.params().contains(id))
        .collect();
    let mut ids = model.p_params();
    ids.extend(model.q_params());
    let ids: Vec<ParamId> = ids.into_iter().filter(|&id| store.is_trainable(id)).collect();

    store.zero_grad(&ids);
    let mut tape = Tape::new();
    let (ce, q) = graph(&mut tape, &store).unwrap();
    let total = tape.add(ce, q).unwrap();
    tape.backward(total, &mut store).unwrap();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: None,
        worst_index: 0,
        checked: 0,
    };
    for &id in &ids {
        let sign = if behind_grl.contains(&id) { -cfg.lambda } else { 1.0 };
        let analytic = store.grad(id).clone();
        for i in 0..analytic.len() {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + H;
            let (ce_p, q_p) = values(&store);
            store.value_mut(id).data_mut()[i] = orig - H;
            let (ce_m, q_m) = values(&store);
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = ((ce_p + sign * q_p) - (ce_m + sign * q_m)) / (2.0 * H);
            let err = rel_err(analytic.data()[i], numeric, FLOOR);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_param = Some(store.name(id).to_string());
                report.worst_index = i;
            }
        }
    }
    report
}

/// Every case, named, in a fixed order.
pub fn all_cases() -> Vec<(String, GradCheckReport)> {
    let mut out: Vec<(String, GradCheckReport)> = primitive_cases()
        .into_iter()
        .map(|(n, r)| (n.to_string(), r))
        .collect();
    out.push(("gru_cell".into(), gru_cell_case()));
    out.push(("attention_pool".into(), attention_pool_case()));
    for kind in ExtractorKind::ALL {
        out.push((format!("extractor {kind}"), extractor_case(kind)));
    }
    out.push(("F-GRL-Q wasserstein".into(), composite_case(CriticLoss::Wasserstein, 2)));
    out.push(("F-GRL-Q ce".into(), composite_case(CriticLoss::Ce, 2)));
    out.push(("F-GRL-Q 3 domains".into(), composite_case(CriticLoss::Wasserstein, 3)));
    out
}
