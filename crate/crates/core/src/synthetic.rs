//! Planted-topic corpora with known ground truth, and the oracle knowledge
//! graph that links words sharing a planted topic.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;

/// Ground-truth topics (rows sum to 1) over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTopics {
    pub topics: Array2<f64>,
}

impl PlantedTopics {
    /// Topic k puts all its mass on the word block
    /// `offset + k·width .. offset + (k+1)·width`, with weights ∝ (rank+1)^(−skew).
    pub fn blocks(vocab_size: usize, num_topics: usize, offset: usize, width: usize, skew: f64) -> Result<Self> {
        if width == 0 || offset + num_topics * width > vocab_size {
            return Err(Error::Invalid(format!(
                "{num_topics} blocks of {width} words from {offset} do not fit in {vocab_size}"
            )));
        }
        let mut topics = Array2::zeros((num_topics, vocab_size));
        for k in 0..num_topics {
            let start = offset + k * width;
            let weights: Vec<f64> = (0..width).map(|r| ((r + 1) as f64).powf(-skew)).collect();
            let total: f64 = weights.iter().sum();
            for (r, w) in weights.into_iter().enumerate() {
                topics[[k, start + r]] = w / total;
            }
        }
        Ok(Self { topics })
    }

    pub fn num_topics(&self) -> usize {
        self.topics.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.topics.ncols()
    }

    /// Words with non-zero mass in topic k.
    pub fn support(&self, k: usize) -> Vec<u32> {
        self.topics
            .row(k)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(v, _)| v as u32)
            .collect()
    }

    /// Draws documents of exactly `doc_len` tokens. Topic proportions come
    /// from a symmetric Dirichlet(`doc_alpha`); the label is the dominant
    /// topic's index prefixed by `label_prefix`.
    pub fn sample_documents<R: Rng + ?Sized>(
        &self,
        num_docs: usize,
        doc_len: usize,
        doc_alpha: f64,
        label_prefix: &str,
        rng: &mut R,
    ) -> Result<Vec<Document>> {
        if doc_len == 0 {
            return Err(Error::Invalid("documents need at least one token".into()));
        }
        let gamma = Gamma::new(doc_alpha, 1.0).map_err(|e| Error::Invalid(format!("doc alpha: {e}")))?;
        let word_dists = self
            .topics
            .rows()
            .into_iter()
            .map(|row| WeightedIndex::new(row.iter().copied()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Invalid(format!("planted topic: {e}")))?;
        let k = self.num_topics();
        let mut docs = Vec::with_capacity(num_docs);
        for _ in 0..num_docs {
            let mut theta: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
            if theta.iter().sum::<f64>() <= 0.0 {
                // all draws underflowed: fall back to one topic
                let pick = rng.random_range(0..k);
                theta = (0..k).map(|i| if i == pick { 1.0 } else { 0.0 }).collect();
            }
            let topic_dist = WeightedIndex::new(&theta).map_err(|e| Error::Invalid(e.to_string()))?;
            let tokens: Vec<u32> = (0..doc_len)
                .map(|_| word_dists[topic_dist.sample(rng)].sample(rng) as u32)
                .collect();
            let dominant = theta
                .iter()
                .enumerate()
                .fold(0, |best, (i, &t)| if t > theta[best] { i } else { best });
            docs.push(Document::from_tokens(tokens)?.with_label(format!("{label_prefix}{dominant}")));
        }
        Ok(docs)
    }

    /// Unit-weight clique over the support of each topic.
    pub fn oracle_graph(&self) -> Result<KnowledgeGraph> {
        let mut edges = std::collections::BTreeSet::new();
        for k in 0..self.num_topics() {
            let s = self.support(k);
            for (a, &i) in s.iter().enumerate() {
                for &j in &s[a + 1..] {
                    edges.insert((i.min(j), i.max(j)));
                }
            }
        }
        KnowledgeGraph::new(self.vocab_size(), edges.into_iter().map(|(i, j)| (i, j, 1.0)))
    }
}

/// Largest total overlap between learned and planted top-word sets over all
/// assignments of planted topics to distinct learned topics. Returns the
/// per-planted-topic overlaps of the best assignment.
pub fn best_permutation_overlap(learned: &[Vec<u32>], planted: &[Vec<u32>]) -> Vec<usize> {
    fn overlap(a: &[u32], b: &[u32]) -> usize {
        a.iter().filter(|w| b.contains(w)).count()
    }
    fn search(
        p: usize,
        learned: &[Vec<u32>],
        planted: &[Vec<u32>],
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        best: &mut (usize, Vec<usize>),
    ) {
        if p == planted.len() {
            let total: usize = current.iter().sum();
            if total > best.0 || best.1.is_empty() {
                *best = (total, current.clone());
            }
            return;
        }
        for l in 0..learned.len() {
            if used[l] {
                continue;
            }
            used[l] = true;
            current.push(overlap(&learned[l], &planted[p]));
            search(p + 1, learned, planted, used, current, best);
            current.pop();
            used[l] = false;
        }
    }
    let mut best = (0, Vec::new());
    search(0, learned, planted, &mut vec![false; learned.len()], &mut Vec::new(), &mut best);
    best.1
}
