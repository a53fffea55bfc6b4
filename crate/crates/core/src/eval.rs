//! Log predictive probability on held-out tokens and NPMI topic coherence.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{split_holdout, Document, HoldoutSplit, Vocabulary};
use crate::error::{Error, Result};
use crate::inference::{local_vb, LogTopicMatrix, VbOptions};
use crate::scalar::Scalar;

/// Floor applied to β entries before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LppConfig {
    pub ratio: f64,
    pub num_splits: usize,
    pub seed: u64,
}

impl Default for LppConfig {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            num_splits: 5,
            seed: 0,
        }
    }
}

fn doc_seed(seed: u64, split: usize, doc: &Document) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    let mut mix = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    mix(split as u64);
    for &(t, c) in doc.entries() {
        mix(((t as u64) << 32) | c as u64);
    }
    h
}

/// Test documents with their observed/held-out splits drawn once, so the
/// same splits score every minibatch. Each document's split depends only on
/// (seed, split index, document), not on its position in the test set.
#[derive(Debug, Clone)]
pub struct HeldOutSet {
    splits: Vec<Vec<HoldoutSplit>>,
}

impl HeldOutSet {
    pub fn new(test_docs: &[Document], cfg: &LppConfig) -> Result<Self> {
        if cfg.num_splits == 0 {
            return Err(Error::Invalid("LPP needs at least one split".into()));
        }
        if test_docs.is_empty() {
            return Err(Error::Invalid("LPP test set is empty".into()));
        }
        let splits = (0..cfg.num_splits)
            .map(|s| {
                test_docs
                    .iter()
                    .map(|d| {
                        let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(cfg.seed, s, d));
                        split_holdout(d, cfg.ratio, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { splits })
    }

    pub fn num_docs(&self) -> usize {
        self.splits[0].len()
    }

    pub fn splits(&self) -> &[Vec<HoldoutSplit>] {
        &self.splits
    }

    /// Mean over splits of the per-document average held-out log-likelihood
    /// per token, with θ from normalized γ on the observed part.
    pub fn lpp<T: Scalar>(&self, beta: &Array2<T>, alpha: &Array1<T>, vb: VbOptions) -> Result<T> {
        check_simplex(beta)?;
        let floor = T::lit(PROB_FLOOR);
        let logbeta = LogTopicMatrix::from_probabilities(beta, floor)?;
        let mut total = T::zero();
        for split in &self.splits {
            let per_doc = split
                .par_iter()
                .map(|s| score_document(s, beta, &logbeta, alpha, vb, floor))
                .collect::<Result<Vec<T>>>()?;
            total += per_doc.iter().copied().sum::<T>() / T::from_usize_lossy(per_doc.len());
        }
        Ok(total / T::from_usize_lossy(self.splits.len()))
    }
}

fn check_simplex<T: Scalar>(beta: &Array2<T>) -> Result<()> {
    let tol = T::lit(1e-6).max(T::epsilon() * T::lit(1e3));
    for (k, row) in beta.rows().into_iter().enumerate() {
        if row.iter().any(|&b| b < T::zero() || !b.is_finite()) || (row.sum() - T::one()).abs() > tol {
            return Err(Error::Invalid(format!("topic {k} is not a probability distribution")));
        }
    }
    Ok(())
}

fn score_document<T: Scalar>(
    split: &HoldoutSplit,
    beta: &Array2<T>,
    logbeta: &LogTopicMatrix<T>,
    alpha: &Array1<T>,
    vb: VbOptions,
    floor: T,
) -> Result<T> {
    let theta = local_vb(&split.obs, logbeta, alpha, vb)?.theta();
    let mut log_p = T::zero();
    for &(w, c) in split.ho.entries() {
        let p: T = theta
            .iter()
            .zip(beta.column(w as usize))
            .map(|(&th, &b)| th * b.max(floor))
            .sum();
        log_p += T::from_count(c) * p.ln();
    }
    Ok(log_p / T::from_count(split.ho.len()))
}

/// One-shot LPP: draws the splits and scores `beta`.
pub fn lpp<T: Scalar>(
    test_docs: &[Document],
    beta: &Array2<T>,
    alpha: &Array1<T>,
    cfg: &LppConfig,
) -> Result<T> {
    HeldOutSet::new(test_docs, cfg)?.lpp(beta, alpha, VbOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpmiConfig {
    pub top_t: usize,
    pub smoothing: f64,
}

impl Default for NpmiConfig {
    fn default() -> Self {
        Self {
            top_t: 20,
            smoothing: 1e-2,
        }
    }
}

/// Per-term sorted lists of the documents containing the term.
#[derive(Debug, Clone)]
pub struct DocFrequencyIndex {
    num_docs: usize,
    postings: Vec<Vec<u32>>,
}

impl DocFrequencyIndex {
    pub fn new(docs: &[Document], vocab_size: usize) -> Result<Self> {
        let mut postings = vec![Vec::new(); vocab_size];
        for (d, doc) in docs.iter().enumerate() {
            for &(t, _) in doc.entries() {
                postings
                    .get_mut(t as usize)
                    .ok_or_else(|| Error::Invalid(format!("term {t} outside vocabulary")))?
                    .push(d as u32);
            }
        }
        Ok(Self {
            num_docs: docs.len(),
            postings,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.num_docs
    }

    pub fn vocab_size(&self) -> usize {
        self.postings.len()
    }

    pub fn df(&self, w: u32) -> usize {
        self.postings[w as usize].len()
    }

    pub fn co_df(&self, a: u32, b: u32) -> usize {
        let (x, y) = (&self.postings[a as usize], &self.postings[b as usize]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// NPMI of one word pair from document counts:
/// `−1 + (2 ln D − ln D(i) − ln D(j)) / (ln D − ln(D(i,j) + ε))`.
/// A word absent from every document scores −1.
pub fn pair_npmi(num_docs: usize, df_i: usize, df_j: usize, df_ij: usize, smoothing: f64) -> f64 {
    if df_i == 0 || df_j == 0 {
        return -1.0;
    }
    let ln_d = (num_docs as f64).ln();
    let num = 2.0 * ln_d - (df_i as f64).ln() - (df_j as f64).ln();
    let den = ln_d - (df_ij as f64 + smoothing).ln();
    -1.0 + num / den
}

/// Average pair NPMI over the first `top_t` words, weight 2 / (t (t − 1)).
pub fn topic_npmi(words: &[u32], index: &DocFrequencyIndex, cfg: &NpmiConfig) -> Result<f64> {
    let t = cfg.top_t;
    if t < 2 {
        return Err(Error::Invalid("NPMI needs top_t ≥ 2".into()));
    }
    if words.len() < t {
        return Err(Error::Invalid(format!("topic lists {} words, NPMI needs {t}", words.len())));
    }
    if let Some(&w) = words[..t].iter().find(|&&w| w as usize >= index.vocab_size()) {
        return Err(Error::Invalid(format!("term {w} outside vocabulary")));
    }
    let mut sum = 0.0;
    for i in 1..t {
        for j in 0..i {
            let (a, b) = (words[i], words[j]);
            sum += pair_npmi(index.num_docs(), index.df(a), index.df(b), index.co_df(a, b), cfg.smoothing);
        }
    }
    Ok(2.0 * sum / (t * (t - 1)) as f64)
}

/// NPMI averaged over topics.
pub fn npmi(topics: &[Vec<u32>], index: &DocFrequencyIndex, cfg: &NpmiConfig) -> Result<f64> {
    if cfg.top_t > index.vocab_size() {
        return Err(Error::Invalid(format!(
            "top_t {} exceeds vocabulary size {}",
            cfg.top_t,
            index.vocab_size()
        )));
    }
    if topics.is_empty() {
        return Err(Error::Invalid("no topics to score".into()));
    }
    let mut total = 0.0;
    for words in topics {
        total += topic_npmi(words, index, cfg)?;
    }
    Ok(total / topics.len() as f64)
}

/// Per topic, the `t` most probable term ids; ties go to the smaller id.
pub fn top_words<T: Scalar>(beta: &Array2<T>, t: usize) -> Result<Vec<Vec<u32>>> {
    if t > beta.ncols() {
        return Err(Error::Invalid(format!("t = {t} exceeds vocabulary size {}", beta.ncols())));
    }
    Ok(beta
        .rows()
        .into_iter()
        .map(|row| {
            let mut ids: Vec<u32> = (0..row.len() as u32).collect();
            ids.sort_by(|&a, &b| {
                row[b as usize]
                    .partial_cmp(&row[a as usize])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            ids.truncate(t);
            ids
        })
        .collect())
}

/// One line per topic, tokens separated by spaces.
pub fn format_topics(topics: &[Vec<u32>], vocab: &Vocabulary) -> String {
    let mut out = String::new();
    for words in topics {
        let line: Vec<&str> = words.iter().map(|&w| vocab.token(w).unwrap_or("<unk>")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_topics(text: &str, vocab: &Vocabulary) -> Result<Vec<Vec<u32>>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split_whitespace()
                .map(|tok| {
                    vocab
                        .id(tok)
                        .ok_or_else(|| Error::Invalid(format!("topic {i}: unknown token {tok:?}")))
                })
                .collect()
        })
        .collect()
}

/// Per-minibatch LPP series plus final coherence and topic lists.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub lpp: Vec<(usize, f64)>,
    pub npmi: f64,
    pub topics: Vec<Vec<u32>>,
}
