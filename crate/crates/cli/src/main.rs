use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gctm::checkpoint::load_checkpoint;
use gctm::corpus::{load_corpus, load_vocabulary};
use gctm::eval::{format_topics, npmi, parse_topics, top_words, DocFrequencyIndex, NpmiConfig};
use gctm::graph::{load_edge_list, load_features};
use gctm::harness::{emit_outputs, preset_names, run, run_drift, ExperimentData, Learner, ModelKind, RunConfig, Scenario};

#[derive(Parser)]
#[command(name = "gctm", version, about = "Streaming topic models with knowledge-graph priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on a stream (fixed, timestamp or label scenario) and write metrics.
    Train(RunArgs),
    /// Label-ordered stream with per-class holdouts; writes drift and forgetting tables.
    Drift(RunArgs),
    /// Score a topics file against a corpus.
    EvalNpmi(NpmiArgs),
    /// Print the top words of a saved model.
    Topics(TopicsArgs),
    /// List the built-in presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    scenario: Option<Scenario>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// `identity` or a path to a feature file.
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    num_topics: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    min_test_len: Option<u32>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Comma-separated class labels.
    #[arg(long, value_delimiter = ',')]
    label_order: Option<Vec<String>>,
    #[arg(long)]
    holdout_per_class: Option<usize>,
    #[arg(long)]
    top_t: Option<usize>,

    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma_w: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    rho_init: Option<f64>,

    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    rho_pp: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    population: Option<f64>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(name) = &self.preset {
            cfg.apply_preset(name)?;
        }
        overlay!(
            cfg, self, model, scenario, seed, num_topics, alpha, batch_size, min_test_len, test_size, label_order,
            holdout_per_class, top_t, lr, inner_steps, num_layers, rho_init, eta, rho_pp, tau0, kappa, population, sigma,
        );
        for (slot, value) in [(&mut cfg.vocab, &self.vocab), (&mut cfg.corpus, &self.corpus), (&mut cfg.graph, &self.graph), (&mut cfg.out, &self.out)] {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        if self.sigma_w.is_some() {
            cfg.sigma_w = self.sigma_w;
        }
        if self.hidden_dim.is_some() {
            cfg.hidden_dim = self.hidden_dim;
        }
        if self.feature_dim.is_some() {
            cfg.feature_dim = self.feature_dim;
        }
        match self.features.as_deref() {
            Some("identity") => cfg.features = None,
            Some(p) => cfg.features = Some(PathBuf::from(p)),
            None => {}
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct NpmiArgs {
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Topics file, one line of space-separated tokens per topic.
    #[arg(long)]
    topics: PathBuf,
    #[arg(long, default_value_t = 20)]
    top_t: usize,
}

#[derive(Args)]
struct TopicsArgs {
    /// Output directory of a previous run (reads `config.resolved` and `checkpoint.bin`).
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    top_t: Option<usize>,
}

fn train(args: &RunArgs, drift: bool) -> Result<()> {
    let cfg = args.resolve()?;
    let out_dir = cfg.out.clone().context("--out is required")?;
    let data = ExperimentData::load(&cfg)?;
    let out = if drift { run_drift(&cfg, &data)? } else { run(&cfg, &data)? };
    emit_outputs(&out, &cfg, &data.vocab, &out_dir)?;
    if let Some((i, v)) = out.report.lpp.last() {
        println!("minibatches={} final_lpp={v:.6} (after minibatch {i})", out.report.lpp.len());
    }
    println!("npmi={:.6}", out.report.npmi);
    println!("outputs written to {}", out_dir.display());
    Ok(())
}

fn eval_npmi(args: &NpmiArgs) -> Result<()> {
    let vocab = load_vocabulary(&args.vocab)?;
    let docs = load_corpus(&args.corpus, &vocab)?;
    let text = fs::read_to_string(&args.topics).with_context(|| format!("reading {}", args.topics.display()))?;
    let topics = parse_topics(&text, &vocab)?;
    if topics.is_empty() {
        bail!("{} contains no topics", args.topics.display());
    }
    let topics: Vec<Vec<u32>> = topics.into_iter().map(|t| t.into_iter().take(args.top_t).collect()).collect();
    let top_t = topics.iter().map(Vec::len).min().unwrap_or(0).min(args.top_t);
    let index = DocFrequencyIndex::new(&docs, vocab.len())?;
    let score = npmi(&topics, &index, &NpmiConfig { top_t, ..NpmiConfig::default() })?;
    println!("{score}");
    Ok(())
}

fn topics(args: &TopicsArgs) -> Result<()> {
    let cfg = RunConfig::load(args.run.join("config.resolved"))?;
    let vocab = load_vocabulary(cfg.vocab.as_ref().context("config.resolved has no vocab path")?)?;
    let graph = cfg.graph.as_ref().map(|p| load_edge_list(p, vocab.len())).transpose()?;
    let features = match &cfg.features {
        Some(p) => Some(load_features(p, vocab.len(), cfg.feature_dim.context("config.resolved has no feature_dim")?)?),
        None => None,
    };
    let data = ExperimentData::new(vocab, Vec::new(), graph.as_ref(), features)?;
    let learner = Learner::from_checkpoint(load_checkpoint(args.run.join("checkpoint.bin"))?, &cfg);
    let beta = learner.topics(&data)?;
    print!("{}", format_topics(&top_words(&beta, args.top_t.unwrap_or(cfg.top_t))?, &data.vocab));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a, false),
        Command::Drift(a) => train(a, true),
        Command::EvalNpmi(a) => eval_npmi(a),
        Command::Topics(a) => topics(a),
        Command::Presets => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
