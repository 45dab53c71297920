mod common;

use common::{small_config, small_plan, small_synth};
use dann::autodiff::{ParamId, Tape, Tensor};
use dann::data::{make_splits, PreparedData, SynthData};
use dann::extractors::{EncodedDoc, ExtractorConfig, ExtractorKind};
use dann::trainer::{
    argmax, build_model, checkpoint_from_str, checkpoint_to_string, evaluate, joint_step, multi_domain_critic_loss,
    train, wasserstein_estimate, CriticLoss, DannConfig, DannModel, DataSpec, TrainOptions, Trainer,
};

fn prepared(synth: &SynthData, seed: u64, zero_shot: bool) -> PreparedData {
    make_splits(&synth.corpus, synth.target_domain, &small_plan(seed), zero_shot).unwrap()
}

fn model_for(cfg: &DannConfig, synth: &SynthData, data: &PreparedData) -> DannModel {
    let spec = DataSpec::from_prepared(data, cfg).unwrap();
    build_model(cfg, &spec, &synth.table).unwrap()
}

fn snapshot(model: &DannModel, ids: &[ParamId]) -> Vec<Vec<f64>> {
    ids.iter().map(|&id| model.store.value(id).data().to_vec()).collect()
}

fn binary_spec(n_domains: usize) -> DataSpec {
    let domains = (0..n_domains).map(|d| format!("d{d}")).collect();
    DataSpec::new(vec!["neg".into(), "pos".into()], domains, n_domains - 1, 10)
}

#[test]
fn critic_arity_follows_loss_and_domain_count() {
    let table = common::toy_table(5, 4, 0);
    let arity = |cfg: DannConfig, n: usize| build_model(&cfg, &binary_spec(n), &table).unwrap().critic_arity();
    assert_eq!(arity(DannConfig::default(), 2), 1);
    let five = DannConfig {
        n_domains: 5,
        one_vs_rest: true,
        ..DannConfig::default()
    };
    assert_eq!(arity(five.clone(), 5), 5);
    let ce = DannConfig {
        critic_loss: CriticLoss::Ce,
        ..five
    };
    assert_eq!(arity(ce.clone(), 5), 5);
    assert_eq!(arity(DannConfig { n_domains: 2, ..ce }, 2), 2);
}

#[test]
fn han_predictor_maps_200_features_to_classes() {
    let table = common::toy_table(5, 4, 0);
    let cfg = DannConfig {
        extractor: ExtractorConfig {
            kind: ExtractorKind::Han,
            ..ExtractorConfig::default()
        },
        ..DannConfig::default()
    };
    let model = build_model(&cfg, &binary_spec(2), &table).unwrap();
    assert_eq!(model.store.value(model.predictor.w).shape(), &[200, 2]);
}

#[test]
fn inconsistent_multi_domain_config_is_explained() {
    let table = common::toy_table(5, 4, 0);
    let cfg = DannConfig {
        n_domains: 3,
        one_vs_rest: false,
        ..DannConfig::default()
    };
    let err = build_model(&cfg, &binary_spec(3), &table).unwrap_err().to_string();
    assert!(err.contains("one_vs_rest"), "{err}");
    let mismatch = DannConfig {
        n_domains: 4,
        one_vs_rest: true,
        ..DannConfig::default()
    };
    assert!(build_model(&mismatch, &binary_spec(3), &table).is_err());
}

#[test]
fn projections_exist_only_in_cross_lingual_mode() {
    let table = common::toy_table(5, 4, 0);
    let plain = build_model(&DannConfig::default(), &binary_spec(2), &table).unwrap();
    assert!(plain.embedding.projections.is_empty());
    let cfg = DannConfig {
        cross_lingual: true,
        ..DannConfig::default()
    };
    let model = build_model(&cfg, &binary_spec(2), &table).unwrap();
    for d in 0..2 {
        let p = model.embedding.projection(d).unwrap();
        assert_eq!(model.store.value(p), &Tensor::identity(4));
    }
}

#[test]
fn critic_step_moves_and_clips_only_the_critic() {
    let synth = small_synth(1, 1);
    let data = prepared(&synth, 1, false);
    let cfg = DannConfig {
        clip: 0.01,
        ..small_config(ExtractorKind::Cnn, 1)
    };
    let mut t = Trainer::new(model_for(&cfg, &synth, &data), &data).unwrap();
    let others: Vec<ParamId> = t.model.p_params();
    let q = t.model.q_params();
    for _ in 0..20 {
        let before = snapshot(&t.model, &others);
        let q_before = snapshot(&t.model, &q);
        t.critic_update().unwrap();
        assert_eq!(snapshot(&t.model, &others), before);
        assert_ne!(snapshot(&t.model, &q), q_before);
        for &id in &q {
            assert!(t.model.store.value(id).max_abs() <= 0.01);
        }
    }
}

#[test]
fn joint_step_leaves_the_critic_alone() {
    let synth = small_synth(2, 1);
    let data = prepared(&synth, 2, false);
    let cfg = small_config(ExtractorKind::Avg, 2);
    let mut t = Trainer::new(model_for(&cfg, &synth, &data), &data).unwrap();
    for _ in 0..5 {
        t.critic_update().unwrap();
    }
    let (q, p) = (t.model.q_params(), t.model.p_params());
    for chunk in 0..5 {
        let src: Vec<&EncodedDoc> = t.source_train[chunk * 8..(chunk + 1) * 8].iter().collect();
        let tgt: Vec<&EncodedDoc> = t.target_unlabeled[chunk * 8..(chunk + 1) * 8].iter().collect();
        let (q_before, p_before) = (snapshot(&t.model, &q), snapshot(&t.model, &p));
        let out = joint_step(&mut t.model, &src, &tgt, &mut common::rng(0), &mut common::rng(1)).unwrap();
        assert!(out.adversarial.is_some());
        assert_eq!(snapshot(&t.model, &q), q_before);
        assert_ne!(snapshot(&t.model, &p), p_before);
    }
}

#[test]
fn zero_lambda_matches_non_adversarial_training_bit_for_bit() {
    for kind in [ExtractorKind::Avg, ExtractorKind::Cnn] {
        let synth = small_synth(3, 1);
        let data = prepared(&synth, 3, false);
        let base = small_config(kind, 3);
        let adv = DannConfig { lambda: 0.0, ..base.clone() };
        let plain = DannConfig {
            adversarial: false,
            ..base
        };
        let mut a = Trainer::new(model_for(&adv, &synth, &data), &data).unwrap();
        let mut b = Trainer::new(model_for(&plain, &synth, &data), &data).unwrap();
        let ids = a.model.p_params();
        for _ in 0..15 {
            let sa = a.outer_step().unwrap();
            let sb = b.outer_step().unwrap();
            assert_eq!(sa.p_loss.to_bits(), sb.p_loss.to_bits());
            assert!(sa.q_loss.is_some() && sb.q_loss.is_none());
            assert_eq!(snapshot(&a.model, &ids), snapshot(&b.model, &ids));
        }
    }
}

#[test]
fn swapping_domains_flips_the_wasserstein_estimate() {
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::matrix(2, 1, vec![0.3, -0.2]).unwrap()).unwrap();
    let a = wasserstein_estimate(&mut tape, s, &[0, 1]).unwrap();
    let b = wasserstein_estimate(&mut tape, s, &[1, 0]).unwrap();
    assert_eq!(tape.value(a).item().unwrap(), 0.5);
    assert_eq!(tape.value(b).item().unwrap(), -0.5);
    let mut t = Tape::new();
    let s = t.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap()).unwrap();
    assert!(wasserstein_estimate(&mut t, s, &[0, 0]).is_err());
}

#[test]
fn two_domain_one_vs_rest_is_a_multiple_of_the_binary_estimate() {
    let scores = vec![0.4, -0.1, 0.9, 0.2, -0.5, 0.3, 0.0, 0.7];
    let labels = [0, 1, 1, 0];
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::matrix(4, 2, scores.clone()).unwrap()).unwrap();
    let multi = multi_domain_critic_loss(&mut tape, s, &labels, 2, CriticLoss::Wasserstein).unwrap();
    let multi = tape.value(multi).item().unwrap();
    // Column 0 is "domain 0 vs rest", column 1 the reverse; feed the binary form a single column.
    let col0: Vec<f64> = scores.chunks(2).map(|r| r[0] - r[1]).collect();
    let c = tape.constant(Tensor::matrix(4, 1, col0).unwrap()).unwrap();
    let binary = wasserstein_estimate(&mut tape, c, &labels).unwrap();
    assert!((multi - 0.5 * tape.value(binary).item().unwrap()).abs() < 1e-15);
}

#[test]
fn separating_scores_beat_shuffled_ones() {
    let labels = [0, 1, 2, 0, 1, 2];
    let mut sep = vec![0.0; 18];
    for (i, &l) in labels.iter().enumerate() {
        sep[i * 3 + l] = 1.0;
    }
    let shuffled_labels = [1, 2, 0, 2, 0, 1];
    let mut tape = Tape::new();
    let s = tape.constant(Tensor::matrix(6, 3, sep).unwrap()).unwrap();
    let good = multi_domain_critic_loss(&mut tape, s, &labels, 3, CriticLoss::Wasserstein).unwrap();
    let bad = multi_domain_critic_loss(&mut tape, s, &shuffled_labels, 3, CriticLoss::Wasserstein).unwrap();
    assert!(tape.value(good).item().unwrap() > tape.value(bad).item().unwrap());
    assert!(multi_domain_critic_loss(&mut tape, s, &[0, 1, 2, 0, 1, 3], 3, CriticLoss::Wasserstein).is_err());
}

#[test]
fn argmax_breaks_ties_toward_the_lowest_index() {
    assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
    assert_eq!(argmax(&[0.0, 0.0]), 0);
    assert_eq!(argmax(&[-1.0, -3.0, -0.5]), 2);
}

#[test]
fn evaluate_counts_hits() {
    let synth = small_synth(4, 1);
    let data = prepared(&synth, 4, false);
    let cfg = small_config(ExtractorKind::Avg, 4);
    let mut model = model_for(&cfg, &synth, &data);
    let docs = model.encode_all(&data.target_test).unwrap();
    // Zero weights make every logit equal, so every document goes to class 0.
    let (w, b) = (model.predictor.w, model.predictor.b);
    let zeros = Tensor::zeros(model.store.value(w).shape());
    model.store.set_value(w, zeros).unwrap();
    let zeros_count = docs.iter().filter(|d| d.label == Some(0)).count();
    let acc = evaluate(&model, &docs).unwrap();
    assert_eq!(acc, zeros_count as f64 / docs.len() as f64);
    model.store.set_value(b, Tensor::vector(vec![0.0, 1.0])).unwrap();
    assert_eq!(evaluate(&model, &docs).unwrap(), (docs.len() - zeros_count) as f64 / docs.len() as f64);
    assert!(evaluate(&model, &[]).is_err());

    let labeled: Vec<_> = docs
        .iter()
        .cloned()
        .map(|mut d| {
            d.label = Some(1);
            d
        })
        .collect();
    assert_eq!(evaluate(&model, &labeled).unwrap(), 1.0);
}

#[test]
fn zero_shot_training_never_sees_target_labels() {
    let synth = small_synth(5, 1);
    let data = prepared(&synth, 5, true);
    assert!(data.target_labeled.is_empty());
    assert!(data.target_unlabeled.iter().all(|d| d.label.is_none()));
    let mut leaked = data.clone();
    leaked.target_labeled = data.target_test[..3].to_vec();
    let cfg = small_config(ExtractorKind::Avg, 5);
    assert!(Trainer::new(model_for(&cfg, &synth, &leaked), &leaked).is_err());
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let synth = small_synth(6, 1);
    let data = prepared(&synth, 6, false);
    for kind in ExtractorKind::ALL {
        let cfg = small_config(kind, 6);
        let (m1, h1) = train(&cfg, &data, &synth.table, &TrainOptions::default()).unwrap();
        let (m2, h2) = train(&cfg, &data, &synth.table, &TrainOptions::default()).unwrap();
        assert_eq!(h1.to_csv(false), h2.to_csv(false));
        assert_eq!(h1.records.len(), cfg.epochs);
        let text = checkpoint_to_string(&m1).unwrap();
        assert_eq!(text, checkpoint_to_string(&m2).unwrap());

        let restored = checkpoint_from_str(&text).unwrap();
        assert_eq!(checkpoint_to_string(&restored).unwrap(), text);
        let docs = m1.encode_all(&data.target_test).unwrap();
        let refs: Vec<_> = docs.iter().collect();
        assert_eq!(m1.predict(&refs).unwrap(), restored.predict(&refs).unwrap());
    }
}

#[test]
fn history_csv_has_the_documented_columns() {
    let synth = small_synth(7, 1);
    let data = prepared(&synth, 7, false);
    let (_, h) = train(&small_config(ExtractorKind::Avg, 7), &data, &synth.table, &TrainOptions::default()).unwrap();
    let csv = h.to_csv(true);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,p_loss,q_loss,src_acc,tgt_acc,lambda,seconds"));
    assert_eq!(lines.count(), 2);
    assert!(h.to_csv(false).lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn multi_domain_training_runs_with_a_five_way_critic() {
    let synth = small_synth(8, 4);
    let data = prepared(&synth, 8, false);
    for loss in [CriticLoss::Wasserstein, CriticLoss::Ce] {
        let cfg = DannConfig {
            n_domains: 5,
            one_vs_rest: true,
            critic_loss: loss,
            ..small_config(ExtractorKind::Avg, 8)
        };
        let (model, h) = train(&cfg, &data, &synth.table, &TrainOptions::default()).unwrap();
        assert_eq!(model.critic_arity(), 5);
        assert!(h.last().unwrap().q_loss.unwrap().is_finite());
    }
}
