//! Per-document mean-field inference for LDA-style models and the
//! sufficient statistics it produces.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::special::{digamma_pos, ln_gamma, softmax_in_place};

pub use crate::special::digamma;

/// K × V matrix of per-topic word log-probabilities (or their expectations).
#[derive(Debug, Clone, PartialEq)]
pub struct LogTopicMatrix<T>(pub Array2<T>);

impl<T: Scalar> LogTopicMatrix<T> {
    pub fn new(m: Array2<T>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log-topic matrix has a non-finite entry".into()));
        }
        Ok(Self(m))
    }

    /// Elementwise log of a topic-word probability matrix, floored at `floor`.
    pub fn from_probabilities(beta: &Array2<T>, floor: T) -> Result<Self> {
        Self::new(beta.mapv(|b| b.max(floor).ln()))
    }

    pub fn num_topics(&self) -> usize {
        self.0.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VbOptions {
    /// Threshold on the mean absolute change of γ between iterations.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for VbOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iter: 50,
        }
    }
}

/// Variational parameters of one document. `phi` has one row per document
/// entry (distinct term), aligned with [`Document::entries`].
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPosterior<T> {
    pub gamma: Array1<T>,
    pub phi: Array2<T>,
    pub iterations: usize,
}

impl<T: Scalar> LocalPosterior<T> {
    /// Posterior mean of θ, γ / Σγ.
    pub fn theta(&self) -> Array1<T> {
        let s = self.gamma.sum();
        self.gamma.mapv(|g| g / s)
    }
}

fn expected_log_theta<T: Scalar>(gamma: &Array1<T>) -> Array1<T> {
    let total = digamma_pos(gamma.sum());
    gamma.mapv(|g| digamma_pos(g) - total)
}

/// Coordinate ascent on (φ, γ) for one document against fixed `logbeta`.
pub fn local_vb<T: Scalar>(
    doc: &Document,
    logbeta: &LogTopicMatrix<T>,
    alpha: &Array1<T>,
    opts: VbOptions,
) -> Result<LocalPosterior<T>> {
    local_vb_entries(doc.entries(), logbeta, alpha, opts)
}

/// [`local_vb`] over raw `(term, count)` entries. Repeated terms are allowed
/// and behave like a single merged entry.
pub fn local_vb_entries<T: Scalar>(
    entries: &[(u32, u32)],
    logbeta: &LogTopicMatrix<T>,
    alpha: &Array1<T>,
    opts: VbOptions,
) -> Result<LocalPosterior<T>> {
    let k = logbeta.num_topics();
    if alpha.len() != k {
        return Err(Error::Shape(format!("alpha has {} entries, expected {k}", alpha.len())));
    }
    if entries.is_empty() {
        return Err(Error::Invalid("document has no tokens".into()));
    }
    if let Some(&(t, _)) = entries.iter().find(|&&(t, _)| t as usize >= logbeta.vocab_size()) {
        return Err(Error::Invalid(format!("term {t} outside vocabulary")));
    }
    let n_d: T = entries.iter().map(|&(_, c)| T::from_count(c)).sum();
    let tol = T::lit(opts.tol);
    let kt = T::from_usize_lossy(k);

    let mut gamma = alpha.mapv(|a| a + n_d / kt);
    let mut phi = Array2::<T>::zeros((entries.len(), k));
    let mut logits = vec![T::zero(); k];
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let elog_theta = expected_log_theta(&gamma);
        let mut new_gamma = alpha.clone();
        for (row, &(term, count)) in entries.iter().enumerate() {
            let col = logbeta.0.column(term as usize);
            for kk in 0..k {
                logits[kk] = elog_theta[kk] + col[kk];
            }
            softmax_in_place(&mut logits);
            let c = T::from_count(count);
            for kk in 0..k {
                phi[[row, kk]] = logits[kk];
                new_gamma[kk] += logits[kk] * c;
            }
        }
        if new_gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("local update produced a non-finite gamma".into()));
        }
        let change = new_gamma
            .iter()
            .zip(&gamma)
            .map(|(&a, &b)| (a - b).abs())
            .sum::<T>()
            / kt;
        gamma = new_gamma;
        if change < tol {
            break;
        }
    }
    Ok(LocalPosterior {
        gamma,
        phi,
        iterations,
    })
}

/// Runs [`local_vb`] on every document, in parallel, preserving order.
pub fn infer_batch<T: Scalar>(
    docs: &[Document],
    logbeta: &LogTopicMatrix<T>,
    alpha: &Array1<T>,
    opts: VbOptions,
) -> Result<Vec<LocalPosterior<T>>> {
    docs.par_iter()
        .enumerate()
        .map(|(i, d)| {
            local_vb(d, logbeta, alpha, opts).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("document {i}: {msg}")),
                other => other,
            })
        })
        .collect()
}

/// K × V matrix `ss[k, v] = Σ_d φ_dkv n_dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T>(pub Array2<T>);

impl<T: Scalar> SufficientStats<T> {
    pub fn zeros(k: usize, v: usize) -> Self {
        Self(Array2::zeros((k, v)))
    }

    pub fn total(&self) -> T {
        self.0.sum()
    }
}

/// Sums φ·n over documents in order (fixed reduction order).
pub fn collect_stats<T: Scalar>(
    posteriors: &[LocalPosterior<T>],
    docs: &[Document],
    num_topics: usize,
    vocab_size: usize,
) -> Result<SufficientStats<T>> {
    if posteriors.len() != docs.len() {
        return Err(Error::Shape(format!(
            "{} posteriors for {} documents",
            posteriors.len(),
            docs.len()
        )));
    }
    let mut ss = SufficientStats::zeros(num_topics, vocab_size);
    for (i, (post, doc)) in posteriors.iter().zip(docs).enumerate() {
        if post.phi.dim() != (doc.entries().len(), num_topics) {
            return Err(Error::Shape(format!("posterior {i} does not match its document")));
        }
        for (row, &(term, count)) in doc.entries().iter().enumerate() {
            let c = T::from_count(count);
            for k in 0..num_topics {
                ss.0[[k, term as usize]] += post.phi[[row, k]] * c;
            }
        }
    }
    Ok(ss)
}

/// Standard LDA per-document evidence lower bound for fixed `logbeta`.
pub fn document_elbo<T: Scalar>(
    entries: &[(u32, u32)],
    post: &LocalPosterior<T>,
    logbeta: &LogTopicMatrix<T>,
    alpha: &Array1<T>,
) -> T {
    let one = T::one();
    let elog_theta = expected_log_theta(&post.gamma);
    let mut bound = ln_gamma(alpha.sum()) - alpha.iter().map(|&a| ln_gamma(a)).sum::<T>();
    bound += alpha
        .iter()
        .zip(&elog_theta)
        .map(|(&a, &e)| (a - one) * e)
        .sum::<T>();
    bound -= ln_gamma(post.gamma.sum()) - post.gamma.iter().map(|&g| ln_gamma(g)).sum::<T>();
    bound -= post
        .gamma
        .iter()
        .zip(&elog_theta)
        .map(|(&g, &e)| (g - one) * e)
        .sum::<T>();
    for (row, &(term, count)) in entries.iter().enumerate() {
        let c = T::from_count(count);
        for k in 0..post.gamma.len() {
            let p = post.phi[[row, k]];
            if p > T::zero() {
                bound += c * p * (elog_theta[k] + logbeta.0[[k, term as usize]] - p.ln());
            }
        }
    }
    bound
}
