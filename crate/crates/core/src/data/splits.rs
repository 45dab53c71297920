use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::document::{Corpus, Document};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Labeled target documents drawn for training.
    pub n_tgt: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            n_tgt: 500,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Train/test partitions of a corpus with one target domain.
///
/// `target_unlabeled` holds every target training document (the labeled
/// sample included) with its label removed; it feeds the domain critic.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub class_names: Vec<String>,
    pub domain_names: Vec<String>,
    pub target_domain: usize,
    pub zero_shot: bool,
    pub source_train: Vec<Document>,
    pub source_test: Vec<Document>,
    pub target_labeled: Vec<Document>,
    pub target_unlabeled: Vec<Document>,
    pub target_test: Vec<Document>,
}

/// Document ids per split, enough to rebuild [`PreparedData`] from the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub plan: SamplingPlan,
    pub zero_shot: bool,
    pub target_domain: String,
    pub class_names: Vec<String>,
    pub domain_names: Vec<String>,
    pub source_train: Vec<String>,
    pub source_test: Vec<String>,
    pub target_train_labeled: Vec<String>,
    pub target_train_unlabeled: Vec<String>,
    pub target_test: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub documents: usize,
    pub per_class: BTreeMap<String, usize>,
    pub avg_tokens: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub domains: BTreeMap<String, DomainStats>,
}

impl CorpusStats {
    pub fn of(corpus: &Corpus) -> Self {
        let mut domains: BTreeMap<String, DomainStats> = BTreeMap::new();
        let mut tokens: HashMap<usize, usize> = HashMap::new();
        for d in &corpus.documents {
            let s = domains.entry(corpus.domain_names[d.domain].clone()).or_default();
            s.documents += 1;
            if let Some(y) = d.label {
                *s.per_class.entry(corpus.class_names[y].clone()).or_default() += 1;
            }
            *tokens.entry(d.domain).or_default() += d.len();
        }
        for (i, name) in corpus.domain_names.iter().enumerate() {
            if let Some(s) = domains.get_mut(name) {
                s.avg_tokens = tokens[&i] as f64 / s.documents as f64;
            }
        }
        CorpusStats { domains }
    }
}

fn split_stratified(docs: &[usize], corpus: &Corpus, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for &i in docs {
        groups.entry(corpus.documents[i].label).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut g) in groups {
        g.shuffle(rng);
        let n = (g.len() as f64 * fraction).round() as usize;
        train.extend_from_slice(&g[..n]);
        test.extend_from_slice(&g[n..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Source domains: stratified train/test split per domain. Target domain:
/// `n_tgt` labeled training documents drawn uniformly (none in zero-shot
/// mode); the rest is split by `train_fraction` into unlabeled training
/// documents and the test set.
pub fn make_splits(corpus: &Corpus, target_domain: usize, plan: &SamplingPlan, zero_shot: bool) -> Result<PreparedData> {
    plan.validate()?;
    if target_domain >= corpus.domain_names.len() {
        return Err(Error::config(format!("target domain {target_domain} does not exist")));
    }
    if corpus.domain_names.len() < 2 {
        return Err(Error::config("need at least one source domain besides the target"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let (mut src_train, mut src_test) = (Vec::new(), Vec::new());
    for d in (0..corpus.domain_names.len()).filter(|&d| d != target_domain) {
        let docs: Vec<usize> = (0..corpus.len()).filter(|&i| corpus.documents[i].domain == d).collect();
        if let Some(&i) = docs.iter().find(|&&i| corpus.documents[i].label.is_none()) {
            return Err(Error::invalid(format!(
                "source document {} has no label",
                corpus.documents[i].id
            )));
        }
        let (tr, te) = split_stratified(&docs, corpus, plan.train_fraction, &mut rng);
        src_train.extend(tr);
        src_test.extend(te);
    }
    let mut target: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.documents[i].domain == target_domain)
        .collect();
    let n_tgt = if zero_shot { 0 } else { plan.n_tgt };
    if n_tgt > target.len() {
        return Err(Error::config(format!(
            "n_tgt = {n_tgt} exceeds the {} documents of the target domain",
            target.len()
        )));
    }
    target.shuffle(&mut rng);
    let mut labeled = target[..n_tgt].to_vec();
    labeled.sort_unstable();
    let (unl, test) = split_stratified(&target[n_tgt..], corpus, plan.train_fraction, &mut rng);
    let mut stream: Vec<usize> = labeled.iter().chain(&unl).copied().collect();
    stream.sort_unstable();

    let take = |ix: &[usize]| ix.iter().map(|&i| corpus.documents[i].clone()).collect::<Vec<_>>();
    Ok(PreparedData {
        class_names: corpus.class_names.clone(),
        domain_names: corpus.domain_names.clone(),
        target_domain,
        zero_shot,
        source_train: take(&src_train),
        source_test: take(&src_test),
        target_labeled: take(&labeled),
        target_unlabeled: stream.iter().map(|&i| corpus.documents[i].unlabeled()).collect(),
        target_test: take(&test),
    })
}

impl PreparedData {
    pub fn manifest(&self, plan: &SamplingPlan) -> Manifest {
        let ids = |docs: &[Document]| docs.iter().map(|d| d.id.clone()).collect::<Vec<_>>();
        let labeled: std::collections::HashSet<&str> = self.target_labeled.iter().map(|d| d.id.as_str()).collect();
        Manifest {
            plan: plan.clone(),
            zero_shot: self.zero_shot,
            target_domain: self.domain_names[self.target_domain].clone(),
            class_names: self.class_names.clone(),
            domain_names: self.domain_names.clone(),
            source_train: ids(&self.source_train),
            source_test: ids(&self.source_test),
            target_train_labeled: ids(&self.target_labeled),
            target_train_unlabeled: self
                .target_unlabeled
                .iter()
                .filter(|d| !labeled.contains(d.id.as_str()))
                .map(|d| d.id.clone())
                .collect(),
            target_test: ids(&self.target_test),
        }
    }

    /// Rebuilds the splits recorded in `manifest` from the corpus they came from.
    pub fn from_manifest(corpus: &Corpus, manifest: &Manifest) -> Result<Self> {
        let by_id: HashMap<&str, &Document> = corpus.documents.iter().map(|d| (d.id.as_str(), d)).collect();
        let get = |ids: &[String]| -> Result<Vec<Document>> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|d| (*d).clone())
                        .ok_or_else(|| Error::config(format!("manifest document {id} not found in corpus")))
                })
                .collect()
        };
        let target_domain = corpus
            .domain_index(&manifest.target_domain)
            .ok_or_else(|| Error::config(format!("unknown target domain {}", manifest.target_domain)))?;
        let target_labeled = get(&manifest.target_train_labeled)?;
        let mut unl = target_labeled.clone();
        unl.extend(get(&manifest.target_train_unlabeled)?);
        let order: HashMap<&str, usize> = corpus.documents.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
        unl.sort_by_key(|d| order[d.id.as_str()]);
        Ok(PreparedData {
            class_names: corpus.class_names.clone(),
            domain_names: corpus.domain_names.clone(),
            target_domain,
            zero_shot: manifest.zero_shot,
            source_train: get(&manifest.source_train)?,
            source_test: get(&manifest.source_test)?,
            target_labeled,
            target_unlabeled: unl.iter().map(Document::unlabeled).collect(),
            target_test: get(&manifest.target_test)?,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn n_domains(&self) -> usize {
        self.domain_names.len()
    }

    /// All documents seen during training, labeled or not.
    pub fn training_documents(&self) -> impl Iterator<Item = &Document> {
        self.source_train.iter().chain(&self.target_unlabeled)
    }
}
