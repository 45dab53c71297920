use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig};
use crate::autodiff::Tensor;
use crate::data::{load_jsonl, make_splits, synth_generate, Corpus, CorpusStats, Manifest, PreparedData};
use crate::diagnostics::{feature_report, normalized_attention, AttentionMap, DiagnosticsReport, ReportOptions};
use crate::embeddings::{load_embeddings_file, EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::rng::sub_seed;
use crate::trainer::{evaluate, load_checkpoint, CriticLoss, DannModel, TrainOptions, Trainer};

/// Corpus and word vectors of a run.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub corpus: Corpus,
    pub table: EmbeddingTable,
    pub target_domain: usize,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Appends a timestamped line to `run.log` in the output directory. Wall-clock
/// values only ever go here so that the other artifacts stay reproducible.
fn sidecar(cfg: &RunConfig, line: &str) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let path = cfg.out.join("run.log");
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{now:.3} {line}").map_err(|e| Error::io(&path, e))
}

fn merge_tables(cfg: &RunConfig, corpus: &Corpus) -> Result<EmbeddingTable> {
    let mut merged = Vocabulary::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut dim = None;
    for (key, path) in &cfg.embeddings {
        let domain = if key == "*" {
            None
        } else {
            Some(
                corpus
                    .domain_index(key)
                    .ok_or_else(|| Error::config(format!("embeddings given for unknown domain {key:?}")))?,
            )
        };
        let wanted: Vocabulary = Vocabulary::from_tokens(
            corpus
                .documents
                .iter()
                .filter(|d| domain.is_none_or(|x| x == d.domain))
                .flat_map(|d| d.tokens.iter().cloned())
                .collect::<HashSet<_>>()
                .into_iter()
                .collect::<std::collections::BTreeSet<_>>(),
        );
        let table = load_embeddings_file(path, Some(&wanted))?;
        if *dim.get_or_insert(table.dim()) != table.dim() {
            return Err(Error::config(format!(
                "{}: dimension {} differs from earlier embedding files",
                path.display(),
                table.dim()
            )));
        }
        for (i, tok) in table.vocab().tokens().iter().enumerate() {
            // Tokens shared between files keep their first vector.
            if !merged.contains(tok) {
                merged.insert(tok.clone());
                rows.extend_from_slice(table.matrix().row(i));
            }
        }
    }
    let dim = dim.ok_or_else(|| Error::config("no embedding files configured"))?;
    if merged.is_empty() {
        return Err(Error::config("no corpus token has an embedding"));
    }
    let n = merged.len();
    EmbeddingTable::new(merged, Tensor::matrix(n, dim, rows)?)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match cfg.data_source {
        DataSource::Synthetic => {
            let synth = synth_generate(&cfg.synth_spec(), sub_seed(cfg.seed, "synth"))?;
            let target_domain = match &cfg.target_domain {
                Some(name) => synth
                    .corpus
                    .domain_index(name)
                    .ok_or_else(|| Error::config(format!("unknown target domain {name:?}")))?,
                None => synth.target_domain,
            };
            Ok(Dataset {
                corpus: synth.corpus,
                table: synth.table,
                target_domain,
            })
        }
        DataSource::Jsonl => {
            let schema = cfg.schema();
            let mut corpus: Option<Corpus> = None;
            for path in &cfg.corpus {
                let (c, report) = load_jsonl(path, &schema)?;
                log::info!(
                    "{}: {} loaded, {} excluded, {} malformed",
                    path.display(),
                    report.loaded,
                    report.excluded,
                    report.malformed
                );
                match &mut corpus {
                    Some(all) => all.extend(c)?,
                    None => corpus = Some(c),
                }
            }
            let corpus = corpus.ok_or_else(|| Error::config("no corpus files"))?;
            let target_domain = match &cfg.target_domain {
                Some(name) => corpus
                    .domain_index(name)
                    .ok_or_else(|| Error::config(format!("unknown target domain {name:?}")))?,
                None => corpus
                    .domain_names
                    .len()
                    .checked_sub(1)
                    .ok_or_else(|| Error::config("corpus has no domains"))?,
            };
            let table = merge_tables(cfg, &corpus)?;
            Ok(Dataset {
                corpus,
                table,
                target_domain,
            })
        }
    }
}

fn manifest_path(cfg: &RunConfig) -> PathBuf {
    cfg.out.join("manifest.json")
}

/// Loads the corpus, draws the splits and writes `manifest.json` and
/// `stats.json` to the output directory.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<Manifest> {
    let ds = load_dataset(cfg)?;
    let plan = cfg.sampling_plan();
    let data = make_splits(&ds.corpus, ds.target_domain, &plan, cfg.zero_shot)?;
    let manifest = data.manifest(&plan);
    write_file(&manifest_path(cfg), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    let stats = CorpusStats::of(&ds.corpus);
    write_file(&cfg.out.join("stats.json"), &(serde_json::to_string_pretty(&stats)? + "\n"))?;
    Ok(manifest)
}

/// Splits recorded in the manifest, preparing them first if the manifest is
/// missing or was drawn with a different plan.
fn prepared(cfg: &RunConfig, ds: &Dataset) -> Result<PreparedData> {
    let path = manifest_path(cfg);
    let plan = cfg.sampling_plan();
    if path.exists() {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let target = &ds.corpus.domain_names[ds.target_domain];
        if manifest.plan == plan && manifest.zero_shot == cfg.zero_shot && &manifest.target_domain == target {
            return PreparedData::from_manifest(&ds.corpus, &manifest);
        }
        log::warn!("{} was drawn with other settings; preparing again", path.display());
    }
    cmd_prepare(cfg)?;
    make_splits(&ds.corpus, ds.target_domain, &plan, cfg.zero_shot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub extractor: String,
    pub lambda: f64,
    pub critic_loss: CriticLoss,
    pub adversarial: bool,
    pub zero_shot: bool,
    pub seed: u64,
    pub epochs: usize,
    pub src_acc: Option<f64>,
    pub tgt_acc: Option<f64>,
}

fn metrics(cfg: &RunConfig, model: &DannModel, epochs: usize, src_acc: Option<f64>, tgt_acc: Option<f64>) -> Metrics {
    Metrics {
        extractor: model.extractor.kind().to_string(),
        lambda: model.config.lambda,
        critic_loss: model.config.critic_loss,
        adversarial: model.config.adversarial,
        zero_shot: cfg.zero_shot,
        seed: model.config.seed,
        epochs,
        src_acc,
        tgt_acc,
    }
}

/// Trains one model; writes `checkpoint.txt`, `history.csv`, `metrics.json`
/// and the resolved `config.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<Metrics> {
    let ds = load_dataset(cfg)?;
    let data = prepared(cfg, &ds)?;
    let dann = cfg.dann_config();
    let spec = crate::trainer::DataSpec::from_prepared(&data, &dann)?;
    let model = crate::trainer::build_model(&dann, &spec, &ds.table)?;
    let mut trainer = Trainer::new(model, &data)?;
    let opts = TrainOptions {
        checkpoint: Some(cfg.out.join("checkpoint.txt")),
        verbose: true,
    };
    sidecar(cfg, &format!("train start: {} lambda {}", dann.extractor.kind, dann.lambda))?;
    let history = trainer.run(&opts)?;
    for r in &history.records {
        sidecar(cfg, &format!("epoch {} took {:.3}s", r.epoch, r.seconds))?;
    }
    history.write_csv(&cfg.out.join("history.csv"), false)?;
    write_file(&cfg.out.join("config.json"), &(serde_json::to_string_pretty(cfg)? + "\n"))?;
    let last = history.last();
    let m = metrics(
        cfg,
        &trainer.model,
        history.records.len(),
        last.and_then(|r| r.src_acc),
        last.and_then(|r| r.tgt_acc),
    );
    write_file(&cfg.out.join("metrics.json"), &(serde_json::to_string_pretty(&m)? + "\n"))?;
    sidecar(cfg, "train done")?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub critic_loss: CriticLoss,
    pub seed: u64,
    pub src_acc: Option<f64>,
    pub tgt_acc: Option<f64>,
    pub domain_sep: Option<f64>,
    pub class_sep: Option<f64>,
    /// `ok`, or the error that stopped the run.
    pub status: String,
}

fn sweep_run(base: &RunConfig, ds: &Dataset, lambda: f64, loss: CriticLoss, seed: u64) -> Result<SweepRow> {
    let cfg = RunConfig {
        seed,
        lambda: Some(lambda),
        critic_loss: loss,
        ..base.clone()
    };
    let plan = cfg.sampling_plan();
    let data = make_splits(&ds.corpus, ds.target_domain, &plan, cfg.zero_shot)?;
    let (model, history) = crate::trainer::train(&cfg.dann_config(), &data, &ds.table, &TrainOptions::default())?;
    let report = feature_report(&model, &data, &report_options(&cfg))?;
    let last = history.last();
    Ok(SweepRow {
        lambda,
        critic_loss: loss,
        seed,
        src_acc: last.and_then(|r| r.src_acc),
        tgt_acc: last.and_then(|r| r.tgt_acc),
        domain_sep: Some(report.domain_sep),
        class_sep: report.class_sep,
        status: "ok".into(),
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("lambda,critic_loss,seed,src_acc,tgt_acc,domain_sep,class_sep,status\n");
    for r in rows {
        let status = r.status.replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.lambda,
            r.critic_loss,
            r.seed,
            f(r.src_acc),
            f(r.tgt_acc),
            f(r.domain_sep),
            f(r.class_sep),
            status
        );
    }
    s
}

/// One training run per (λ, critic loss, seed); failed runs are recorded
/// and the sweep continues. Writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    if cfg.lambdas.is_empty() {
        return Err(Error::config("sweep needs at least one lambda"));
    }
    let ds = load_dataset(cfg)?;
    let seeds = if cfg.sweep_seeds.is_empty() { vec![cfg.seed] } else { cfg.sweep_seeds.clone() };
    let losses = if cfg.sweep_losses.is_empty() { vec![cfg.critic_loss] } else { cfg.sweep_losses.clone() };
    let mut rows = Vec::new();
    for &loss in &losses {
        for &lambda in &cfg.lambdas {
            for &seed in &seeds {
                let row = sweep_run(cfg, &ds, lambda, loss, seed).unwrap_or_else(|e| {
                    log::error!("sweep run lambda {lambda} {loss} seed {seed} failed: {e}");
                    SweepRow {
                        lambda,
                        critic_loss: loss,
                        seed,
                        src_acc: None,
                        tgt_acc: None,
                        domain_sep: None,
                        class_sep: None,
                        status: format!("error: {e}"),
                    }
                });
                sidecar(cfg, &format!("sweep lambda {lambda} {loss} seed {seed}: {}", row.status))?;
                rows.push(row);
            }
        }
    }
    write_file(&cfg.out.join("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

fn report_options(cfg: &RunConfig) -> ReportOptions {
    ReportOptions {
        max_per_group: cfg.report_max_per_group,
        top_k: cfg.report_top_k,
        seed: sub_seed(cfg.seed, "report"),
    }
}

fn checkpoint_or_default(cfg: &RunConfig, checkpoint: Option<&Path>) -> PathBuf {
    checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join("checkpoint.txt"))
}

/// Writes the feature report of a trained model to `diagnostics/` and, when
/// `attention_docs` is set, the normalized attention of that many target
/// test documents to `diagnostics/attention.json`.
pub fn cmd_diagnose(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    attention_docs: Option<usize>,
) -> Result<DiagnosticsReport> {
    let model = load_checkpoint(&checkpoint_or_default(cfg, checkpoint))?;
    if attention_docs.is_some() && model.extractor.kind() != crate::extractors::ExtractorKind::Han {
        return Err(Error::invalid(format!(
            "{} ({})",
            crate::diagnostics::ATTENTION_UNAVAILABLE,
            model.extractor.kind()
        )));
    }
    let ds = load_dataset(cfg)?;
    let data = prepared(cfg, &ds)?;
    let report = feature_report(&model, &data, &report_options(cfg))?;
    let dir = cfg.out.join("diagnostics");
    report.write(&dir)?;
    if let Some(n) = attention_docs {
        let maps: BTreeMap<String, AttentionMap> = data
            .target_test
            .iter()
            .take(n)
            .map(|d| Ok((d.id.clone(), normalized_attention(&model, d)?)))
            .collect::<Result<_>>()?;
        write_file(&dir.join("attention.json"), &(serde_json::to_string_pretty(&maps)? + "\n"))?;
    }
    Ok(report)
}

/// Accuracy of a checkpoint on the source and target test splits; writes `eval.json`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Metrics> {
    let model = load_checkpoint(&checkpoint_or_default(cfg, checkpoint))?;
    let ds = load_dataset(cfg)?;
    let data = prepared(cfg, &ds)?;
    let acc = |docs: &[crate::data::Document]| -> Result<Option<f64>> {
        if docs.is_empty() {
            return Ok(None);
        }
        evaluate(&model, &model.encode_all(docs)?).map(Some)
    };
    let m = metrics(cfg, &model, model.config.epochs, acc(&data.source_test)?, acc(&data.target_test)?);
    write_file(&cfg.out.join("eval.json"), &(serde_json::to_string_pretty(&m)? + "\n"))?;
    Ok(m)
}
