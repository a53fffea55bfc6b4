//! Streaming variational Bayes baselines for LDA: SVB, SVB with a power
//! prior (SVB-PP) and population variational Bayes (PVB). All three share
//! [`local_vb`](crate::inference::local_vb) and differ only in how λ is
//! updated from a minibatch's sufficient statistics.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::Minibatch;
use crate::error::{Error, Result};
use crate::inference::{collect_stats, infer_batch, LogTopicMatrix, SufficientStats, VbOptions};
use crate::scalar::Scalar;
use crate::special::digamma_pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Svb,
    SvbPp,
    Pvb,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Svb => "svb",
            BaselineKind::SvbPp => "svbpp",
            BaselineKind::Pvb => "pvb",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svb" => Ok(BaselineKind::Svb),
            "svbpp" => Ok(BaselineKind::SvbPp),
            "pvb" => Ok(BaselineKind::Pvb),
            other => Err(Error::Invalid(format!("unknown baseline {other:?}"))),
        }
    }
}

/// Variational Dirichlet parameters λ (K × V), strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletGlobal<T>(pub Array2<T>);

impl<T: Scalar> DirichletGlobal<T> {
    pub fn new(lambda: Array2<T>) -> Result<Self> {
        if lambda.iter().any(|&l| !(l > T::zero()) || !l.is_finite()) {
            return Err(Error::Invalid("lambda entries must be positive and finite".into()));
        }
        Ok(Self(lambda))
    }

    pub fn uniform(k: usize, v: usize, eta: f64) -> Self {
        Self(Array2::from_elem((k, v), T::lit(eta)))
    }

    /// Dirichlet mean λ_kv / Σ_v λ_kv, the point estimate used for scoring.
    pub fn mean(&self) -> Array2<T> {
        let sums = self.0.sum_axis(Axis(1));
        let mut m = self.0.clone();
        for (mut row, s) in m.rows_mut().into_iter().zip(sums) {
            row.mapv_inplace(|x| x / s);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// Symmetric Dirichlet prior on topics.
    pub eta: f64,
    /// Power-prior weight for SVB-PP, in (0, 1].
    pub rho_pp: f64,
    pub tau0: f64,
    /// PVB forgetting exponent, in (0, 1].
    pub kappa: f64,
    /// PVB population size S.
    pub population: f64,
    /// λ⁰ = η + init_noise · Gamma(100, 1/100); zero gives λ⁰ = η exactly.
    pub init_noise: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            rho_pp: 0.9,
            tau0: 1.0,
            kappa: 0.9,
            population: 1e4,
            init_noise: 1.0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Invalid(format!("baseline config: {what}")));
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.rho_pp > 0.0 && self.rho_pp <= 1.0) {
            return bad("rho_pp must lie in (0,1]");
        }
        if !(self.tau0 > 0.0) {
            return bad("tau0 must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad("kappa must lie in (0,1]");
        }
        if !(self.population > 0.0) {
            return bad("population must be positive");
        }
        if !(self.init_noise >= 0.0) {
            return bad("init_noise must be non-negative");
        }
        Ok(())
    }
}

/// E_q[log β_kv] = ψ(λ_kv) − ψ(Σ_v λ_kv).
pub fn expected_log_beta<T: Scalar>(lambda: &DirichletGlobal<T>) -> Result<LogTopicMatrix<T>> {
    if lambda.0.iter().any(|&l| !(l > T::zero())) {
        return Err(Error::Invalid("lambda must be positive".into()));
    }
    let mut out = Array2::zeros(lambda.0.raw_dim());
    for (k, row) in lambda.0.rows().into_iter().enumerate() {
        let total = digamma_pos(row.sum());
        for (v, &l) in row.iter().enumerate() {
            out[[k, v]] = digamma_pos(l) - total;
        }
    }
    LogTopicMatrix::new(out)
}

fn check_shape<T>(lambda: &DirichletGlobal<T>, ss: &SufficientStats<T>) -> Result<()> {
    if lambda.0.dim() != ss.0.dim() {
        return Err(Error::Shape(format!(
            "lambda {:?} vs stats {:?}",
            lambda.0.dim(),
            ss.0.dim()
        )));
    }
    Ok(())
}

/// λ^t = λ^{t−1} + ss.
pub fn svb_update<T: Scalar>(prev: &DirichletGlobal<T>, ss: &SufficientStats<T>) -> Result<DirichletGlobal<T>> {
    check_shape(prev, ss)?;
    Ok(DirichletGlobal(&prev.0 + &ss.0))
}

/// λ^t = ρ λ^{t−1} + (1 − ρ) η + ss.
pub fn svb_pp_update<T: Scalar>(
    prev: &DirichletGlobal<T>,
    eta: f64,
    rho_pp: f64,
    ss: &SufficientStats<T>,
) -> Result<DirichletGlobal<T>> {
    check_shape(prev, ss)?;
    if !(rho_pp > 0.0 && rho_pp <= 1.0) {
        return Err(Error::Invalid(format!("rho_pp {rho_pp} outside (0,1]")));
    }
    let rho = T::lit(rho_pp);
    let floor = (T::one() - rho) * T::lit(eta);
    let mut out = prev.0.mapv(|l| rho * l + floor);
    out += &ss.0;
    Ok(DirichletGlobal(out))
}

/// PVB step size ρ_t = (τ₀ + t)^{−κ}.
pub fn pvb_rate(tau0: f64, kappa: f64, t: usize) -> f64 {
    (tau0 + t as f64).powf(-kappa)
}

/// λ̃ = η + (S / B) ss, then λ^t = ρ_t λ̃ + (1 − ρ_t) λ^{t−1}. `batch_size`
/// is the size B of the minibatch that produced `ss`.
pub fn pvb_update<T: Scalar>(
    prev: &DirichletGlobal<T>,
    eta: f64,
    ss: &SufficientStats<T>,
    t: usize,
    cfg: &BaselineConfig,
    batch_size: usize,
) -> Result<DirichletGlobal<T>> {
    check_shape(prev, ss)?;
    if batch_size == 0 {
        return Err(Error::Invalid("PVB batch size must be positive".into()));
    }
    let rate = T::lit(pvb_rate(cfg.tau0, cfg.kappa, t));
    let scale = T::lit(cfg.population / batch_size as f64);
    let eta = T::lit(eta);
    let mut out = prev.0.clone();
    ndarray::Zip::from(&mut out).and(&ss.0).for_each(|l, &s| {
        let target = eta + scale * s;
        *l = rate * target + (T::one() - rate) * *l;
    });
    Ok(DirichletGlobal(out))
}

/// A streaming baseline learner holding λ and the minibatch counter.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel<T> {
    pub kind: BaselineKind,
    pub config: BaselineConfig,
    pub lambda: DirichletGlobal<T>,
    pub alpha: Array1<T>,
    pub t: usize,
}

impl<T: Scalar> BaselineModel<T> {
    pub fn init<R: Rng + ?Sized>(
        kind: BaselineKind,
        config: BaselineConfig,
        num_topics: usize,
        vocab_size: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if !(alpha > 0.0) {
            return Err(Error::Invalid("alpha must be positive".into()));
        }
        let eta = config.eta;
        let noise = config.init_noise;
        let gamma = Gamma::new(100.0, 0.01).expect("valid gamma");
        let lambda = Array2::from_shape_simple_fn((num_topics, vocab_size), || {
            let g = if noise > 0.0 { gamma.sample(rng) } else { 0.0 };
            T::lit(eta + noise * g)
        });
        Ok(Self {
            kind,
            config,
            lambda: DirichletGlobal(lambda),
            alpha: Array1::from_elem(num_topics, T::lit(alpha)),
            t: 0,
        })
    }

    pub fn num_topics(&self) -> usize {
        self.lambda.0.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.lambda.0.ncols()
    }

    /// Applies this learner's update rule to precomputed statistics.
    pub fn apply_stats(&mut self, ss: &SufficientStats<T>, batch_size: usize) -> Result<()> {
        let c = &self.config;
        self.lambda = match self.kind {
            BaselineKind::Svb => svb_update(&self.lambda, ss)?,
            BaselineKind::SvbPp => svb_pp_update(&self.lambda, c.eta, c.rho_pp, ss)?,
            BaselineKind::Pvb => pvb_update(&self.lambda, c.eta, ss, self.t, c, batch_size)?,
        };
        self.t += 1;
        Ok(())
    }

    /// Local inference on every document against E_q[log β], then the update.
    pub fn train_minibatch(&mut self, batch: &Minibatch, vb: VbOptions) -> Result<SufficientStats<T>> {
        if batch.is_empty() {
            return Err(Error::Invalid(format!("minibatch {} is empty", batch.index)));
        }
        let elog = expected_log_beta(&self.lambda)?;
        let posteriors = infer_batch(&batch.docs, &elog, &self.alpha, vb)?;
        let ss = collect_stats(&posteriors, &batch.docs, self.num_topics(), self.vocab_size())?;
        self.apply_stats(&ss, batch.len())?;
        Ok(ss)
    }

    pub fn topics(&self) -> Array2<T> {
        self.lambda.mean()
    }
}

/// Runs a baseline over a whole stream, returning λ after every minibatch.
pub fn run_baseline<T: Scalar>(
    model: &mut BaselineModel<T>,
    stream: &[Minibatch],
    vb: VbOptions,
) -> Result<Vec<DirichletGlobal<T>>> {
    let mut out = Vec::with_capacity(stream.len());
    for batch in stream {
        model.train_minibatch(batch, vb)?;
        out.push(model.lambda.clone());
    }
    Ok(out)
}
