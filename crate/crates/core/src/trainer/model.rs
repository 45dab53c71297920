use rand::Rng;

use super::config::{CriticLoss, DannConfig};
use crate::autodiff::{Adam, ParamId, ParamStore, Tape, Tensor, Var};
use crate::data::{Document, PreparedData};
use crate::embeddings::{EmbeddingLayer, EmbeddingTable};
use crate::error::{Error, Result};
use crate::extractors::{fit_idf, EncodedDoc, Extractor, ExtractorKind, FeatureOut, IdfTable};
use crate::nn::Dense;
use crate::rng;

/// What the model needs to know about the data it will see.
#[derive(Clone, Debug, PartialEq)]
pub struct DataSpec {
    pub class_names: Vec<String>,
    pub domain_names: Vec<String>,
    pub target_domain: usize,
    /// Padded length for the convolutional extractor.
    pub seq_len: usize,
    /// Per-domain idf tables (tfidf extractor only).
    pub idf: Vec<Option<IdfTable>>,
}

impl DataSpec {
    pub fn new(class_names: Vec<String>, domain_names: Vec<String>, target_domain: usize, seq_len: usize) -> Self {
        let n = domain_names.len();
        DataSpec {
            class_names,
            domain_names,
            target_domain,
            seq_len,
            idf: vec![None; n],
        }
    }

    /// Derives the spec from prepared splits. Idf tables are fitted on each
    /// domain's training documents; the target uses its unlabeled stream.
    pub fn from_prepared(data: &PreparedData, cfg: &DannConfig) -> Result<Self> {
        let longest = data.training_documents().map(Document::len).max().unwrap_or(0);
        let mut spec = DataSpec::new(
            data.class_names.clone(),
            data.domain_names.clone(),
            data.target_domain,
            longest.min(cfg.extractor.max_len),
        );
        if cfg.extractor.kind == ExtractorKind::Tfidf {
            for d in 0..spec.domain_names.len() {
                let docs: Vec<&Document> = data.training_documents().filter(|x| x.domain == d).collect();
                if !docs.is_empty() {
                    spec.idf[d] = Some(fit_idf(docs)?);
                }
            }
        }
        Ok(spec)
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_domains(&self) -> usize {
        self.domain_names.len()
    }
}

/// Domain critic: dense layer with ReLU, then a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub hidden: Dense,
    pub out: Dense,
}

impl Critic {
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var, frozen: bool) -> Result<Var> {
        let h = self.hidden.forward(tape, store, z, frozen)?;
        let h = tape.relu(h)?;
        self.out.forward(tape, store, h, frozen)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [self.hidden.params(), self.out.params()].concat()
    }
}

#[derive(Clone, Debug)]
pub struct DannModel {
    pub config: DannConfig,
    pub spec: DataSpec,
    pub store: ParamStore,
    pub embedding: EmbeddingLayer,
    pub extractor: Extractor,
    /// Label predictor P.
    pub predictor: Dense,
    /// Domain critic Q.
    pub critic: Critic,
    /// Optimizer over F, P and the projections (and embeddings when unfrozen).
    pub p_opt: Adam,
    pub q_opt: Adam,
}

/// Assembles and initialises a model from the `"init"` stream of the run seed.
pub fn build_model(cfg: &DannConfig, spec: &DataSpec, table: &EmbeddingTable) -> Result<DannModel> {
    cfg.validate()?;
    if spec.n_classes() < 2 {
        return Err(Error::config(format!("need at least 2 classes, got {}", spec.n_classes())));
    }
    if spec.target_domain >= spec.n_domains() {
        return Err(Error::config(format!(
            "target domain {} out of range for {} domains",
            spec.target_domain,
            spec.n_domains()
        )));
    }
    if cfg.n_domains > 2 && cfg.n_domains != spec.n_domains() {
        return Err(Error::config(format!(
            "n_domains = {} but the data has {} domains",
            cfg.n_domains,
            spec.n_domains()
        )));
    }
    let mut init = rng::stream(cfg.seed, "init");
    let mut store = ParamStore::new();
    let mut embedding = EmbeddingLayer::bind(&mut store, table, cfg.trainable_oov);
    store.set_trainable(embedding.table, cfg.train_embeddings);
    if cfg.cross_lingual {
        embedding.add_projections(&mut store, spec.n_domains(), None);
        if cfg.freeze_source_projection {
            for d in (0..spec.n_domains()).filter(|&d| d != spec.target_domain) {
                let id = embedding.projection(d).expect("projection per domain");
                store.set_trainable(id, false);
            }
        }
    }
    let k = table.dim();
    let extractor = Extractor::new(&mut store, &cfg.extractor, k, spec.seq_len, &mut init)?;
    let fd = extractor.feature_dim();
    let predictor = Dense::new(&mut store, "P", fd, spec.n_classes(), &mut init);
    let critic = Critic {
        hidden: Dense::new(&mut store, "Q.hidden", fd, cfg.critic_hidden, &mut init),
        out: Dense::new(&mut store, "Q.out", cfg.critic_hidden, cfg.critic_arity(), &mut init),
    };
    let mut p_ids = extractor.params();
    p_ids.extend(predictor.params());
    p_ids.extend(embedding.projections.iter().flatten().copied());
    p_ids.push(embedding.table);
    p_ids.push(embedding.oov);
    let p_opt = Adam::new(cfg.lr, p_ids);
    let q_opt = Adam::new(cfg.lr, critic.params());
    Ok(DannModel {
        config: cfg.clone(),
        spec: spec.clone(),
        store,
        embedding,
        extractor,
        predictor,
        critic,
        p_opt,
        q_opt,
    })
}

impl DannModel {
    pub fn critic_arity(&self) -> usize {
        self.critic.out.outputs(&self.store)
    }

    /// Class the critic assigns to a document domain: with two critic
    /// domains every source is pooled against the target.
    pub fn critic_label(&self, domain: usize) -> Result<usize> {
        if domain >= self.spec.n_domains() {
            return Err(Error::invalid(format!("unknown domain index {domain}")));
        }
        Ok(if self.config.n_domains == 2 {
            usize::from(domain == self.spec.target_domain)
        } else {
            domain
        })
    }

    pub fn encode(&self, doc: &Document) -> Result<EncodedDoc> {
        let idf = match self.extractor.kind() {
            ExtractorKind::Tfidf => Some(
                self.spec
                    .idf
                    .get(doc.domain)
                    .and_then(Option::as_ref)
                    .ok_or_else(|| Error::invalid(format!("no idf table for domain {}", doc.domain)))?,
            ),
            _ => None,
        };
        EncodedDoc::encode(doc, &self.embedding, idf, self.config.extractor.max_len)
    }

    pub fn encode_all(&self, docs: &[Document]) -> Result<Vec<EncodedDoc>> {
        docs.iter().map(|d| self.encode(d)).collect()
    }

    pub fn features<R: Rng>(&self, tape: &mut Tape, docs: &[&EncodedDoc], rng: &mut R) -> Result<FeatureOut> {
        self.extractor.forward(tape, &self.store, &self.embedding, docs, rng)
    }

    pub fn p_params(&self) -> Vec<ParamId> {
        self.p_opt.params().to_vec()
    }

    pub fn q_params(&self) -> Vec<ParamId> {
        self.critic.params()
    }

    /// Predicted class per document (evaluation mode, ties to the lowest index).
    pub fn predict(&self, docs: &[&EncodedDoc]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(docs.len());
        // Chunks keep the tape small on large test sets.
        for chunk in docs.chunks(256) {
            let mut tape = Tape::eval();
            let mut unused = rng::stream(0, "eval");
            let f = self.features(&mut tape, chunk, &mut unused)?;
            let logits = self.predictor.forward(&mut tape, &self.store, f.z, true)?;
            let t = tape.value(logits);
            out.extend((0..t.rows()).map(|i| argmax(t.row(i))));
        }
        Ok(out)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn check_labels(op: &'static str, scores: &Tensor, labels: &[usize], n_domains: usize) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::empty(op, "batch"));
    }
    if scores.rows() != labels.len() {
        return Err(Error::Shape {
            op,
            lhs: scores.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_domains) {
        return Err(Error::invalid(format!("{op}: domain label {bad} unseen for {n_domains} domains")));
    }
    Ok(())
}

/// Critic loss over `scores: [batch x n_domains]`.
///
/// CE mode returns the categorical cross-entropy of the domain labels. In
/// Wasserstein mode each output column `d` is a one-vs-rest critic and the
/// result is the mean over domains of
/// `mean(score_d | domain d) - mean(score_d | not domain d)`; domains that
/// are absent from the batch (or make up all of it) are skipped.
pub fn multi_domain_critic_loss(
    tape: &mut Tape,
    scores: Var,
    labels: &[usize],
    n_domains: usize,
    mode: CriticLoss,
) -> Result<Var> {
    let t = tape.value(scores).clone();
    check_labels("multi_domain_critic_loss", &t, labels, n_domains)?;
    if t.cols() != n_domains {
        return Err(Error::Shape {
            op: "multi_domain_critic_loss",
            lhs: t.shape().to_vec(),
            rhs: vec![labels.len(), n_domains],
        });
    }
    match mode {
        CriticLoss::Ce => tape.cross_entropy(scores, labels),
        CriticLoss::Wasserstein => {
            let b = labels.len();
            let mut counts = vec![0usize; n_domains];
            for &l in labels {
                counts[l] += 1;
            }
            let present: Vec<usize> = (0..n_domains).filter(|&d| counts[d] > 0 && counts[d] < b).collect();
            if present.is_empty() {
                return Err(Error::invalid("multi_domain_critic_loss: batch holds a single domain"));
            }
            let mut coef = vec![0.0; b * n_domains];
            for &d in &present {
                for (i, &l) in labels.iter().enumerate() {
                    coef[i * n_domains + d] = if l == d {
                        1.0 / counts[d] as f64
                    } else {
                        -1.0 / (b - counts[d]) as f64
                    };
                }
            }
            let c = tape.constant(Tensor::matrix(b, n_domains, coef)?)?;
            let weighted = tape.mul(scores, c)?;
            let total = tape.sum(weighted, None)?;
            tape.scale(total, 1.0 / present.len() as f64)
        }
    }
}

/// Binary Wasserstein estimate `mean(score | label 0) - mean(score | label 1)`
/// over `scores: [batch x 1]`.
pub fn wasserstein_estimate(tape: &mut Tape, scores: Var, labels: &[usize]) -> Result<Var> {
    let t = tape.value(scores).clone();
    check_labels("wasserstein_estimate", &t, labels, 2)?;
    let n1 = labels.iter().filter(|&&l| l == 1).count();
    let n0 = labels.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::empty("wasserstein_estimate", if n0 == 0 { "source batch" } else { "target batch" }));
    }
    let coef = labels
        .iter()
        .map(|&l| if l == 0 { 1.0 / n0 as f64 } else { -1.0 / n1 as f64 })
        .collect();
    let c = tape.constant(Tensor::matrix(labels.len(), 1, coef)?)?;
    let weighted = tape.mul(scores, c)?;
    tape.sum(weighted, None)
}

/// The quantity the critic minimizes: domain cross-entropy, or the negated
/// Wasserstein estimate.
pub fn critic_objective(tape: &mut Tape, scores: Var, labels: &[usize], cfg: &DannConfig) -> Result<Var> {
    match (cfg.critic_loss, tape.value(scores).cols()) {
        (CriticLoss::Ce, n) => multi_domain_critic_loss(tape, scores, labels, n, CriticLoss::Ce),
        (CriticLoss::Wasserstein, 1) => {
            let w = wasserstein_estimate(tape, scores, labels)?;
            tape.scale(w, -1.0)
        }
        (CriticLoss::Wasserstein, n) => {
            let w = multi_domain_critic_loss(tape, scores, labels, n, CriticLoss::Wasserstein)?;
            tape.scale(w, -1.0)
        }
    }
}
