//! Experiment driver: loads data, runs one streaming scenario end to end and
//! writes the metric files.

mod config;
mod output;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use self::config::{preset_names, ModelKind, Preset, RunConfig, Scenario, PRESETS};
pub use self::output::{emit_drift_outputs, emit_outputs, format_lpp_csv};
use crate::baselines::BaselineModel;
use crate::checkpoint::Checkpoint;
use crate::corpus::{load_corpus, load_vocabulary, stream_by_label, stream_fixed, stream_timestamp, Document, Minibatch, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::{npmi, top_words, DocFrequencyIndex, EvalReport, HeldOutSet, LppConfig, NpmiConfig};
use crate::gctm::{train_minibatch, AdamState, GctmState, TrainOptions};
use crate::graph::{identity_features, load_edge_list, load_features, normalize, FeatureMatrix, KnowledgeGraph, NormalizedAdjacency};

/// Everything a run reads: vocabulary, documents, Â and the node features.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub vocab: Vocabulary,
    pub docs: Vec<Document>,
    pub adj: NormalizedAdjacency<f64>,
    pub features: FeatureMatrix<f64>,
}

impl ExperimentData {
    /// `graph = None` gives Â = I; `features = None` gives identity features.
    pub fn new(
        vocab: Vocabulary,
        docs: Vec<Document>,
        graph: Option<&KnowledgeGraph>,
        features: Option<FeatureMatrix<f64>>,
    ) -> Result<Self> {
        let v = vocab.len();
        if let Some(d) = docs.iter().find(|d| d.max_term() as usize >= v) {
            return Err(Error::Shape(format!("term {} outside vocabulary of {v}", d.max_term())));
        }
        let adj = match graph {
            Some(g) if g.num_nodes() != v => {
                return Err(Error::Shape(format!("graph has {} nodes, vocabulary has {v}", g.num_nodes())))
            }
            Some(g) => normalize(g),
            None => NormalizedAdjacency::identity(v),
        };
        let features = features.unwrap_or_else(|| identity_features(v));
        if features.nrows() != v {
            return Err(Error::Shape(format!("feature matrix has {} rows, vocabulary has {v}", features.nrows())));
        }
        Ok(Self { vocab, docs, adj, features })
    }

    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let vocab_path = cfg.vocab.as_ref().ok_or_else(|| Error::Config("vocab path is required".into()))?;
        let corpus_path = cfg.corpus.as_ref().ok_or_else(|| Error::Config("corpus path is required".into()))?;
        let vocab = load_vocabulary(vocab_path)?;
        let docs = load_corpus(corpus_path, &vocab)?;
        let graph = cfg.graph.as_ref().map(|p| load_edge_list(p, vocab.len())).transpose()?;
        let features = match &cfg.features {
            Some(p) => {
                let dim = cfg
                    .feature_dim
                    .ok_or_else(|| Error::Config("feature_dim is required with a features file".into()))?;
                Some(load_features(p, vocab.len(), dim)?)
            }
            None => None,
        };
        Self::new(vocab, docs, graph.as_ref(), features)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

/// A streaming learner of any supported kind.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Learner {
    Gctm {
        state: GctmState<f64>,
        adam: AdamState<f64>,
        opts: TrainOptions,
    },
    Baseline(BaselineModel<f64>),
}

impl Learner {
    pub fn init(cfg: &RunConfig, data: &ExperimentData, rng: &mut ChaCha8Rng) -> Result<Self> {
        let v = data.vocab_size();
        match cfg.model.baseline() {
            None => {
                let gcfg = cfg.gctm_config(v, data.features.ncols());
                Ok(Learner::Gctm {
                    state: GctmState::init(&gcfg, rng)?,
                    adam: AdamState::new(cfg.lr),
                    opts: TrainOptions {
                        inner_steps: cfg.inner_steps,
                        vb: cfg.vb_options(),
                    },
                })
            }
            Some(kind) => Ok(Learner::Baseline(BaselineModel::init(
                kind,
                cfg.baseline_config(),
                cfg.num_topics,
                v,
                cfg.alpha,
                rng,
            )?)),
        }
    }

    /// Resumes from a checkpoint; GCTM needs the training options back.
    pub fn from_checkpoint(ckpt: Checkpoint<f64>, cfg: &RunConfig) -> Self {
        match ckpt {
            Checkpoint::Gctm { state, adam } => Learner::Gctm {
                state,
                adam,
                opts: TrainOptions {
                    inner_steps: cfg.inner_steps,
                    vb: cfg.vb_options(),
                },
            },
            Checkpoint::Baseline(m) => Learner::Baseline(m),
        }
    }

    pub fn train(&mut self, batch: &Minibatch, data: &ExperimentData, cfg: &RunConfig) -> Result<()> {
        match self {
            Learner::Gctm { state, adam, opts } => {
                train_minibatch(state, batch, &data.features, &data.adj, adam, *opts)?;
            }
            Learner::Baseline(m) => {
                m.train_minibatch(batch, cfg.vb_options())?;
            }
        }
        Ok(())
    }

    /// Current topic-word distributions, rows on the simplex.
    pub fn topics(&self, data: &ExperimentData) -> Result<Array2<f64>> {
        match self {
            Learner::Gctm { state, .. } => Ok(state.topic_distribution(&data.features, &data.adj)?.prob),
            Learner::Baseline(m) => Ok(m.topics()),
        }
    }

    pub fn alpha(&self) -> &Array1<f64> {
        match self {
            Learner::Gctm { state, .. } => &state.alpha,
            Learner::Baseline(m) => &m.alpha,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint<f64> {
        match self {
            Learner::Gctm { state, adam, .. } => Checkpoint::Gctm {
                state: state.clone(),
                adam: adam.clone(),
            },
            Learner::Baseline(m) => Checkpoint::Baseline(m.clone()),
        }
    }
}

/// One row of the concept-drift view: LPP on minibatch `minibatch + 1`
/// after training through `minibatch`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub minibatch: usize,
    /// Class of the evaluated minibatch.
    pub label: String,
    /// The evaluated minibatch is the first of a new class.
    pub boundary: bool,
    pub lpp: f64,
}

/// Average LPP over the holdouts of classes `0..=class_index` once that
/// class has been fully streamed.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingRow {
    pub class_index: usize,
    pub label: String,
    pub avg_lpp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    pub drift: Vec<DriftRow>,
    pub forgetting: Vec<ForgettingRow>,
}

impl DriftReport {
    /// For the `n`-th boundary, the number of post-boundary minibatches
    /// trained before LPP is back within 10% of the last pre-boundary value.
    /// `None` if it never recovers in the stream.
    pub fn recovery_steps(&self, n: usize) -> Option<usize> {
        let b = self.drift.iter().enumerate().filter(|(_, r)| r.boundary).nth(n)?.0;
        let pre = self.drift[..b].last()?.lpp;
        self.drift[b..]
            .iter()
            .position(|r| (r.lpp - pre).abs() <= 0.1 * pre.abs())
    }
}

/// Result of one run: the metric report, the drift tables for drift runs,
/// and the final learner.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvalReport,
    pub drift: Option<DriftReport>,
    pub learner: Learner,
}

fn lpp_config(cfg: &RunConfig) -> LppConfig {
    LppConfig {
        ratio: cfg.lpp_ratio,
        num_splits: cfg.lpp_splits,
        seed: cfg.seed,
    }
}

fn final_metrics(learner: &Learner, data: &ExperimentData, cfg: &RunConfig) -> Result<(f64, Vec<Vec<u32>>)> {
    let beta = learner.topics(data)?;
    let topics = top_words(&beta, cfg.top_t)?;
    let index = DocFrequencyIndex::new(&data.docs, data.vocab_size())?;
    let ncfg = NpmiConfig {
        top_t: cfg.top_t,
        ..NpmiConfig::default()
    };
    Ok((npmi(&topics, &index, &ncfg)?, topics))
}

fn evaluate(learner: &Learner, held: &HeldOutSet, data: &ExperimentData, cfg: &RunConfig) -> Result<f64> {
    held.lpp(&learner.topics(data)?, learner.alpha(), cfg.vb_options())
}

fn check(cfg: &RunConfig, data: &ExperimentData) -> Result<()> {
    cfg.validate()?;
    if cfg.top_t > data.vocab_size() {
        return Err(Error::Config(format!(
            "top_t {} exceeds vocabulary size {}",
            cfg.top_t,
            data.vocab_size()
        )));
    }
    if data.docs.is_empty() {
        return Err(Error::Invalid("corpus is empty".into()));
    }
    Ok(())
}

/// Dispatches on `cfg.scenario`.
pub fn run(cfg: &RunConfig, data: &ExperimentData) -> Result<RunOutput> {
    check(cfg, data)?;
    match cfg.scenario {
        Scenario::Fixed | Scenario::Label => run_fixed(cfg, data),
        Scenario::Timestamp => run_timestamp(cfg, data),
    }
}

/// Fixed holdout of up to `test_size` documents with at least
/// `min_test_len` tokens, the rest streamed in shuffled (or label-ordered)
/// minibatches. LPP after every minibatch, NPMI at the end.
pub fn run_fixed(cfg: &RunConfig, data: &ExperimentData) -> Result<RunOutput> {
    check(cfg, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.docs.len()).collect();
    order.shuffle(&mut rng);
    let mut test = Vec::new();
    let mut train = Vec::new();
    for i in order {
        let d = &data.docs[i];
        if test.len() < cfg.test_size && d.len() >= cfg.min_test_len {
            test.push(d.clone());
        } else {
            train.push(d.clone());
        }
    }
    if test.is_empty() {
        return Err(Error::Invalid(format!("no document has at least {} tokens for the test set", cfg.min_test_len)));
    }
    if train.is_empty() {
        return Err(Error::Invalid("no training documents left after the holdout".into()));
    }
    let stream = match cfg.scenario {
        Scenario::Label => {
            if cfg.label_order.is_empty() {
                return Err(Error::Config("label scenario needs label_order".into()));
            }
            stream_by_label(&train, &cfg.label_order, cfg.batch_size)?
        }
        _ => stream_fixed(&train, cfg.batch_size, &mut rng)?,
    };
    let held = HeldOutSet::new(&test, &lpp_config(cfg))?;
    let mut learner = Learner::init(cfg, data, &mut rng)?;
    let mut lpp = Vec::with_capacity(stream.len());
    for batch in &stream {
        learner.train(batch, data, cfg)?;
        lpp.push((batch.index, evaluate(&learner, &held, data, cfg)?));
    }
    let (npmi, topics) = final_metrics(&learner, data, cfg)?;
    Ok(RunOutput {
        report: EvalReport { lpp, npmi, topics },
        drift: None,
        learner,
    })
}

fn eligible(docs: &[Document], min_len: u32) -> Vec<Document> {
    docs.iter().filter(|d| d.len() >= min_len).cloned().collect()
}

/// One minibatch per timestamp; after training on minibatch t the model is
/// scored on minibatch t+1.
pub fn run_timestamp(cfg: &RunConfig, data: &ExperimentData) -> Result<RunOutput> {
    check(cfg, data)?;
    let stream = stream_timestamp(&data.docs)?;
    if stream.len() < 2 {
        return Err(Error::Invalid(format!(
            "timestamp scenario needs at least 2 distinct timestamps, found {}",
            stream.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut learner = Learner::init(cfg, data, &mut rng)?;
    let mut lpp = Vec::new();
    for (t, batch) in stream.iter().enumerate() {
        learner.train(batch, data, cfg)?;
        let Some(next) = stream.get(t + 1) else { break };
        let test = eligible(&next.docs, cfg.min_test_len);
        if test.is_empty() {
            continue;
        }
        let held = HeldOutSet::new(&test, &lpp_config(cfg))?;
        lpp.push((batch.index, evaluate(&learner, &held, data, cfg)?));
    }
    let (npmi, topics) = final_metrics(&learner, data, cfg)?;
    Ok(RunOutput {
        report: EvalReport { lpp, npmi, topics },
        drift: None,
        learner,
    })
}

/// Classes streamed in `label_order`, each with its own holdout of up to
/// `holdout_per_class` documents.
pub fn run_drift(cfg: &RunConfig, data: &ExperimentData) -> Result<RunOutput> {
    check(cfg, data)?;
    if cfg.label_order.is_empty() {
        return Err(Error::Config("drift scenario needs label_order".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut holdouts = Vec::with_capacity(cfg.label_order.len());
    let mut train = Vec::new();
    for label in &cfg.label_order {
        let mut class: Vec<&Document> = data.docs.iter().filter(|d| d.label.as_deref() == Some(label)).collect();
        class.shuffle(&mut rng);
        let mut held = Vec::new();
        let mut class_train = Vec::new();
        for d in class {
            if held.len() < cfg.holdout_per_class && d.len() >= cfg.min_test_len {
                held.push(d.clone());
            } else {
                class_train.push(d.clone());
            }
        }
        if class_train.is_empty() {
            return Err(Error::Invalid(format!("class {label:?} has no training documents after the holdout")));
        }
        if held.is_empty() {
            return Err(Error::Invalid(format!(
                "class {label:?} has no document with at least {} tokens for its holdout",
                cfg.min_test_len
            )));
        }
        holdouts.push(HeldOutSet::new(&held, &lpp_config(cfg))?);
        train.extend(class_train);
    }
    let stream = stream_by_label(&train, &cfg.label_order, cfg.batch_size)?;
    let label_of = |b: &Minibatch| b.docs[0].label.clone().unwrap_or_default();

    let mut learner = Learner::init(cfg, data, &mut rng)?;
    let mut drift = Vec::new();
    let mut forgetting = Vec::new();
    let mut lpp = Vec::new();
    for (t, batch) in stream.iter().enumerate() {
        learner.train(batch, data, cfg)?;
        let label = label_of(batch);
        let next = stream.get(t + 1);
        if let Some(next) = next {
            let test = eligible(&next.docs, cfg.min_test_len);
            if !test.is_empty() {
                let held = HeldOutSet::new(&test, &lpp_config(cfg))?;
                let value = evaluate(&learner, &held, data, cfg)?;
                let next_label = label_of(next);
                drift.push(DriftRow {
                    minibatch: batch.index,
                    boundary: next_label != label,
                    label: next_label,
                    lpp: value,
                });
                lpp.push((batch.index, value));
            }
        }
        if next.is_none_or(|n| label_of(n) != label) {
            let c = cfg.label_order.iter().position(|l| *l == label).expect("label from order");
            let beta = learner.topics(data)?;
            let mut sum = 0.0;
            for h in &holdouts[..=c] {
                sum += h.lpp(&beta, learner.alpha(), cfg.vb_options())?;
            }
            forgetting.push(ForgettingRow {
                class_index: c,
                label,
                avg_lpp: sum / (c + 1) as f64,
            });
        }
    }
    let (npmi, topics) = final_metrics(&learner, data, cfg)?;
    Ok(RunOutput {
        report: EvalReport { lpp, npmi, topics },
        drift: Some(DriftReport { drift, forgetting }),
        learner,
    })
}
