//! Mean-field variational inference: state, coordinate-ascent E-step, ELBO.
//!
//! Tokens of the same term within a document share one `φ` vector, weighted
//! by the term's count. For the sigmoid and probit kinds the link term of the
//! objective is the first-order surrogate `log ψ(π̄)`, and that surrogate is
//! what every update ascends.
//!
//! The exponential link term is linear in each `φ`, so its closed-form update
//! is the exact coordinate maximizer. The sigmoid, probit and (for repeated
//! terms) Gaussian link terms are concave but not linear, so the closed-form
//! update is the maximizer of their linearization. When that candidate would
//! lower the objective, the step is halved along the segment from the old
//! `φ`. The directional derivative along that segment is nonnegative, so the
//! objective never decreases.

use ndarray::{Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, Document};
use crate::error::{Result, RtmError};
use crate::linkfn::{
    add_grad_phi_gaussian, expected_log_link_raw, log_probability_slope, LinkKind, LinkParams,
};
use crate::math::{dirichlet_expectation, dot, ln_dirichlet_norm, neg_entropy, softmax_in_place};

/// Parameters the E-step conditions on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `log β`, `K × V`.
    pub log_beta: Array2<f64>,
    pub alpha: Vec<f64>,
    /// `None` fits plain LDA: links are ignored.
    pub link: Option<LinkParams>,
}

impl ModelParams {
    pub fn num_topics(&self) -> usize {
        self.log_beta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.log_beta.ncols()
    }

    pub fn beta(&self) -> Array2<f64> {
        self.log_beta.mapv(f64::exp)
    }

    pub fn link_kind(&self) -> Option<LinkKind> {
        self.link.as_ref().map(|l| l.kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    /// Dirichlet parameters, `D × K`.
    pub gamma: Array2<f64>,
    /// Per document, one row per distinct term (in term-id order).
    pub phi: Vec<Array2<f64>>,
    /// `φ̄_d = (1/N_d) Σ_n φ_{d,n}`, `D × K`.
    pub phi_bar: Array2<f64>,
    /// `Var(z̄_{d,i}) = (1/N_d²) Σ_n φ_{d,n,i}(1 - φ_{d,n,i})`, `D × K`.
    pub var_bar: Array2<f64>,
}

impl VariationalState {
    pub fn num_docs(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn num_topics(&self) -> usize {
        self.gamma.ncols()
    }

    /// Recomputes the cached means and variances from `phi`.
    pub fn refresh_moments(&mut self, corpus: &Corpus) {
        for d in 0..self.num_docs() {
            let (mean, var) = doc_moments(corpus.doc(d), &self.phi[d]);
            self.phi_bar.row_mut(d).assign(&ArrayView1::from(&mean));
            self.var_bar.row_mut(d).assign(&ArrayView1::from(&var));
        }
    }
}

fn doc_moments(doc: &Document, phi: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let k = phi.ncols();
    let n = doc.len() as f64;
    let mut mean = vec![0.0; k];
    let mut var = vec![0.0; k];
    for (t, &(_, count)) in doc.terms().iter().enumerate() {
        let c = count as f64;
        for i in 0..k {
            let p = phi[[t, i]];
            mean[i] += c * p;
            var[i] += c * p * (1.0 - p);
        }
    }
    for i in 0..k {
        mean[i] /= n;
        var[i] /= n * n;
    }
    (mean, var)
}

/// Default relative noise added to the uniform `φ` initialization.
pub const DEFAULT_INIT_NOISE: f64 = 1.0;

/// `γ_d = α + N_d/K`; every `φ` uniform, perturbed by seeded noise of the
/// default scale and renormalized.
pub fn init_state(corpus: &Corpus, num_topics: usize, alpha: &[f64], seed: u64) -> Result<VariationalState> {
    init_state_with_noise(corpus, num_topics, alpha, seed, DEFAULT_INIT_NOISE)
}

/// As [`init_state`] with `φ_k ∝ 1 + noise·u_k`, `u_k ~ U(0,1)`.
pub fn init_state_with_noise(
    corpus: &Corpus,
    num_topics: usize,
    alpha: &[f64],
    seed: u64,
    noise: f64,
) -> Result<VariationalState> {
    if num_topics == 0 {
        return Err(RtmError::InvalidArgument("need at least one topic".into()));
    }
    if alpha.len() != num_topics || alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(RtmError::InvalidArgument(format!(
            "alpha must be {num_topics} positive values"
        )));
    }
    if !(noise >= 0.0) {
        return Err(RtmError::InvalidArgument("noise scale must be >= 0".into()));
    }
    let k = num_topics;
    let d_count = corpus.num_docs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gamma = Array2::zeros((d_count, k));
    let mut phi = Vec::with_capacity(d_count);
    for d in 0..d_count {
        let doc = corpus.doc(d);
        let n = doc.len() as f64;
        for i in 0..k {
            gamma[[d, i]] = alpha[i] + n / k as f64;
        }
        let mut rows = Array2::zeros((doc.num_distinct(), k));
        for mut row in rows.rows_mut() {
            let mut total = 0.0;
            for x in row.iter_mut() {
                let u: f64 = rng.random();
                *x = 1.0 + noise * u;
                total += *x;
            }
            row.mapv_inplace(|x| x / total);
        }
        phi.push(rows);
    }
    let mut state = VariationalState {
        gamma,
        phi,
        phi_bar: Array2::zeros((d_count, k)),
        var_bar: Array2::zeros((d_count, k)),
    };
    state.refresh_moments(corpus);
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElboBreakdown {
    pub link_term: f64,
    pub z_given_theta_term: f64,
    pub word_term: f64,
    pub theta_prior_term: f64,
    pub entropy_term: f64,
    pub total: f64,
}

/// Evaluates the evidence lower bound. The link term sums over observed
/// links only; for sigmoid/probit it is the first-order surrogate.
pub fn elbo(corpus: &Corpus, params: &ModelParams, state: &VariationalState) -> ElboBreakdown {
    elbo_counted(corpus, params, state).0
}

/// [`elbo`] plus the number of pair evaluations it performed.
pub fn elbo_counted(corpus: &Corpus, params: &ModelParams, state: &VariationalState) -> (ElboBreakdown, u64) {
    let k = params.num_topics();
    let alpha_norm = ln_dirichlet_norm(&params.alpha);
    let mut word_term = 0.0;
    let mut z_term = 0.0;
    let mut prior_term = 0.0;
    let mut entropy_term = 0.0;
    for d in 0..corpus.num_docs() {
        let doc = corpus.doc(d);
        let gamma = state.gamma.row(d).to_vec();
        let elog = dirichlet_expectation(&gamma);
        let phi = &state.phi[d];
        for (t, &(w, count)) in doc.terms().iter().enumerate() {
            let c = count as f64;
            let row = phi.row(t);
            let row = row.as_slice().expect("standard layout");
            let mut word = 0.0;
            for i in 0..k {
                if row[i] > 0.0 {
                    word += row[i] * params.log_beta[[i, w]];
                }
            }
            word_term += c * word;
            z_term += c * dot(row, &elog);
            entropy_term -= c * neg_entropy(row);
        }
        prior_term += alpha_norm
            + params
                .alpha
                .iter()
                .zip(&elog)
                .map(|(a, e)| (a - 1.0) * e)
                .sum::<f64>();
        entropy_term += -ln_dirichlet_norm(&gamma)
            - gamma
                .iter()
                .zip(&elog)
                .map(|(g, e)| (g - 1.0) * e)
                .sum::<f64>();
    }
    let mut link_term = 0.0;
    let mut evals = 0u64;
    if let Some(link) = &params.link {
        for &(a, b) in corpus.links() {
            link_term += pair_log_link(link, state, a, b);
            evals += 1;
        }
    }
    let total = link_term + z_term + word_term + prior_term + entropy_term;
    (
        ElboBreakdown {
            link_term,
            z_given_theta_term: z_term,
            word_term,
            theta_prior_term: prior_term,
            entropy_term,
            total,
        },
        evals,
    )
}

pub(crate) fn pair_log_link(link: &LinkParams, state: &VariationalState, a: usize, b: usize) -> f64 {
    let pa = state.phi_bar.row(a);
    let pb = state.phi_bar.row(b);
    let va = state.var_bar.row(a);
    let vb = state.var_bar.row(b);
    expected_log_link_raw(
        link,
        pa.as_slice().unwrap(),
        pb.as_slice().unwrap(),
        va.as_slice().unwrap(),
        vb.as_slice().unwrap(),
    )
}

#[derive(Debug, Clone)]
pub struct EStepOptions {
    /// Relative ELBO change that ends the E-step; also the per-document
    /// relative `γ` change that ends a document's local iterations.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_local_iters: usize,
    /// `Some(n)`: Jacobi sweeps on `n` threads, every document updated
    /// against the previous sweep's neighbor means. Results can differ from
    /// the sequential mode within the convergence tolerance and the ELBO is
    /// not guaranteed to increase every sweep. `None`: Gauss–Seidel in
    /// document order.
    pub parallel: Option<usize>,
}

impl Default for EStepOptions {
    fn default() -> Self {
        EStepOptions {
            tol: 1e-6,
            max_sweeps: 100,
            max_local_iters: 20,
            parallel: None,
        }
    }
}

/// Pair work done during one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    /// Link-term evaluations in the objective: one per observed link.
    pub link_terms: u64,
    /// Neighbor visits while forming `φ` gradients: one per neighbor per
    /// term update.
    pub link_gradients: u64,
    /// Extra link-term evaluations spent by the ascent safeguard.
    pub safeguard_terms: u64,
}

#[derive(Debug, Clone)]
pub struct EStepReport {
    /// ELBO before the first sweep.
    pub initial: f64,
    /// ELBO after each sweep.
    pub trace: Vec<f64>,
    pub sweeps: Vec<SweepStats>,
    pub converged: bool,
}

impl EStepReport {
    pub fn final_elbo(&self) -> f64 {
        self.trace.last().copied().unwrap_or(self.initial)
    }
}

/// Coordinate ascent over documents until the relative ELBO change falls
/// below `tol` or `max_sweeps` sweeps have run. At least one sweep runs.
pub fn run_e_step(
    corpus: &Corpus,
    params: &ModelParams,
    state: &mut VariationalState,
    opts: &EStepOptions,
) -> Result<EStepReport> {
    if !(opts.tol > 0.0) {
        return Err(RtmError::InvalidArgument("tolerance must be positive".into()));
    }
    let ctx = SweepContext::new(corpus, params, opts)?;
    let (first, _) = elbo_counted(corpus, params, state);
    check_finite(first.total, "initial ELBO", &first)?;
    let mut previous = first.total;
    let mut trace = Vec::new();
    let mut sweeps = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_sweeps.max(1) {
        let mut stats = match opts.parallel {
            None => ctx.sequential_sweep(state),
            Some(threads) => ctx.parallel_sweep(state, threads)?,
        };
        let (current, evals) = elbo_counted(corpus, params, state);
        stats.link_terms = evals;
        sweeps.push(stats);
        check_finite(current.total, "ELBO", &current)?;
        log::debug!("e-step sweep {}: elbo {:.10e}", trace.len() + 1, current.total);
        trace.push(current.total);
        let change = (current.total - previous).abs() / previous.abs().max(f64::MIN_POSITIVE);
        previous = current.total;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EStepReport {
        initial: first.total,
        trace,
        sweeps,
        converged,
    })
}

fn check_finite(value: f64, what: &str, parts: &ElboBreakdown) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(RtmError::Numeric(format!("{what} is not finite: {parts:?}")))
    }
}

/// Closed-form coordinate update for one term's `φ` in document `d`
/// (`term_index` indexes the document's distinct terms), given the current
/// state. Does not modify the state.
pub fn update_phi(
    corpus: &Corpus,
    params: &ModelParams,
    state: &VariationalState,
    d: usize,
    term_index: usize,
) -> Result<Vec<f64>> {
    let opts = EStepOptions::default();
    let ctx = SweepContext::new(corpus, params, &opts)?;
    let local = DocLocal::from_state(state, d);
    let elog = dirichlet_expectation(&local.gamma);
    let mut out = vec![0.0; params.num_topics()];
    let mut stats = SweepStats::default();
    ctx.phi_candidate(d, term_index, &local, &elog, &state.phi_bar, &mut out, &mut stats);
    Ok(out)
}

/// `γ_d = α + Σ_n φ_{d,n}` from the current `φ`.
pub fn update_gamma(corpus: &Corpus, state: &VariationalState, d: usize, alpha: &[f64]) -> Vec<f64> {
    let mut gamma = alpha.to_vec();
    for (t, &(_, count)) in corpus.doc(d).terms().iter().enumerate() {
        for (i, g) in gamma.iter_mut().enumerate() {
            *g += count as f64 * state.phi[d][[t, i]];
        }
    }
    gamma
}

/// One document's variational parameters while it is being updated.
#[derive(Debug, Clone)]
struct DocLocal {
    phi: Array2<f64>,
    gamma: Vec<f64>,
    phi_bar: Vec<f64>,
    var: Vec<f64>,
}

impl DocLocal {
    fn from_state(state: &VariationalState, d: usize) -> Self {
        DocLocal {
            phi: state.phi[d].clone(),
            gamma: state.gamma.row(d).to_vec(),
            phi_bar: state.phi_bar.row(d).to_vec(),
            var: state.var_bar.row(d).to_vec(),
        }
    }

    fn store(self, state: &mut VariationalState, d: usize) {
        state.gamma.row_mut(d).assign(&ArrayView1::from(&self.gamma));
        state.phi_bar.row_mut(d).assign(&ArrayView1::from(&self.phi_bar));
        state.var_bar.row_mut(d).assign(&ArrayView1::from(&self.var));
        state.phi[d] = self.phi;
    }
}

struct SweepContext<'a> {
    corpus: &'a Corpus,
    params: &'a ModelParams,
    opts: &'a EStepOptions,
    /// `log β` transposed to `V × K` for contiguous columns.
    log_beta_t: Array2<f64>,
}

impl<'a> SweepContext<'a> {
    fn new(corpus: &'a Corpus, params: &'a ModelParams, opts: &'a EStepOptions) -> Result<Self> {
        let k = params.num_topics();
        if params.vocab_size() != corpus.vocab_size() {
            return Err(RtmError::InvalidArgument(format!(
                "model vocabulary size {} does not match corpus vocabulary size {}",
                params.vocab_size(),
                corpus.vocab_size()
            )));
        }
        if params.alpha.len() != k {
            return Err(RtmError::InvalidArgument("alpha length must equal K".into()));
        }
        if let Some(link) = &params.link {
            if link.num_topics() != k {
                return Err(RtmError::InvalidArgument("link coefficients must have length K".into()));
            }
            link.validate()?;
        }
        let log_beta_t = params.log_beta.t().as_standard_layout().to_owned();
        for doc in corpus.docs() {
            for &(w, _) in doc.terms() {
                if log_beta_t.row(w).iter().all(|&x| x == f64::NEG_INFINITY) {
                    return Err(RtmError::Numeric(format!(
                        "topic matrix column for term {w} is all zero (unsmoothed model?)"
                    )));
                }
            }
        }
        Ok(SweepContext {
            corpus,
            params,
            opts,
            log_beta_t,
        })
    }

    fn active_link(&self, d: usize) -> Option<&'a LinkParams> {
        match &self.params.link {
            Some(link) if !self.corpus.neighbors(d).is_empty() => Some(link),
            _ => None,
        }
    }

    fn sequential_sweep(&self, state: &mut VariationalState) -> SweepStats {
        let mut stats = SweepStats::default();
        for d in 0..self.corpus.num_docs() {
            let mut local = DocLocal::from_state(state, d);
            self.update_document(d, &mut local, &state.phi_bar, &state.var_bar, &mut stats);
            local.store(state, d);
        }
        stats
    }

    fn parallel_sweep(&self, state: &mut VariationalState, threads: usize) -> Result<SweepStats> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| RtmError::InvalidArgument(format!("thread pool: {e}")))?;
        let snapshot: &VariationalState = state;
        let results: Vec<(DocLocal, SweepStats)> = pool.install(|| {
            (0..self.corpus.num_docs())
                .into_par_iter()
                .map(|d| {
                    let mut local = DocLocal::from_state(snapshot, d);
                    let mut stats = SweepStats::default();
                    self.update_document(d, &mut local, &snapshot.phi_bar, &snapshot.var_bar, &mut stats);
                    (local, stats)
                })
                .collect()
        });
        let mut total = SweepStats::default();
        for (d, (local, stats)) in results.into_iter().enumerate() {
            total.link_gradients += stats.link_gradients;
            total.safeguard_terms += stats.safeguard_terms;
            local.store(state, d);
        }
        Ok(total)
    }

    /// Local coordinate ascent for document `d` against fixed neighbor
    /// moments: every term's `φ` in term order, then `γ`, repeated until the
    /// relative change in `γ` is below tolerance.
    fn update_document(
        &self,
        d: usize,
        local: &mut DocLocal,
        others_mean: &Array2<f64>,
        others_var: &Array2<f64>,
        stats: &mut SweepStats,
    ) {
        let doc = self.corpus.doc(d);
        let k = self.params.num_topics();
        let n = doc.len() as f64;
        let link = self.active_link(d);
        let needs_safeguard = matches!(link, Some(l) if l.kind != LinkKind::Exponential);
        let mut candidate = vec![0.0; k];
        let mut old = vec![0.0; k];
        for _ in 0..self.opts.max_local_iters.max(1) {
            let elog = dirichlet_expectation(&local.gamma);
            for (t, &(_, count)) in doc.terms().iter().enumerate() {
                self.phi_candidate(d, t, local, &elog, others_mean, &mut candidate, stats);
                old.copy_from_slice(local.phi.row(t).as_slice().unwrap());
                let c = count as f64;
                if needs_safeguard {
                    let link = link.unwrap();
                    let base = self.term_objective(d, t, c, &old, &old, &elog, local, link, others_mean, others_var);
                    stats.safeguard_terms += self.corpus.neighbors(d).len() as u64;
                    let mut step = 1.0;
                    let mut accepted = false;
                    let mut trial = candidate.clone();
                    for _ in 0..40 {
                        for i in 0..k {
                            trial[i] = old[i] + step * (candidate[i] - old[i]);
                        }
                        let value =
                            self.term_objective(d, t, c, &old, &trial, &elog, local, link, others_mean, others_var);
                        stats.safeguard_terms += self.corpus.neighbors(d).len() as u64;
                        if value >= base {
                            accepted = true;
                            break;
                        }
                        step *= 0.5;
                    }
                    if !accepted {
                        continue;
                    }
                    candidate.copy_from_slice(&trial);
                }
                for i in 0..k {
                    let (p_new, p_old) = (candidate[i], old[i]);
                    local.phi_bar[i] += c * (p_new - p_old) / n;
                    local.var[i] += c * (p_new * (1.0 - p_new) - p_old * (1.0 - p_old)) / (n * n);
                }
                local.phi.row_mut(t).assign(&ArrayView1::from(&candidate));
            }
            let mut gamma = self.params.alpha.clone();
            for (t, &(_, count)) in doc.terms().iter().enumerate() {
                for i in 0..k {
                    gamma[i] += count as f64 * local.phi[[t, i]];
                }
            }
            let change = gamma
                .iter()
                .zip(&local.gamma)
                .map(|(a, b)| (a - b).abs() / b)
                .fold(0.0, f64::max);
            local.gamma = gamma;
            let (mean, var) = doc_moments(doc, &local.phi);
            local.phi_bar = mean;
            local.var = var;
            if change < self.opts.tol {
                break;
            }
        }
    }

    /// Writes the closed-form update for term `t` of document `d` into `out`.
    #[allow(clippy::too_many_arguments)]
    fn phi_candidate(
        &self,
        d: usize,
        t: usize,
        local: &DocLocal,
        elog: &[f64],
        others_mean: &Array2<f64>,
        out: &mut [f64],
        stats: &mut SweepStats,
    ) {
        let doc = self.corpus.doc(d);
        let (w, _) = doc.terms()[t];
        let k = out.len();
        let log_beta = self.log_beta_t.row(w);
        for i in 0..k {
            out[i] = elog[i] + log_beta[i];
        }
        if let Some(link) = self.active_link(d) {
            let n = doc.len() as f64;
            let neighbors = self.corpus.neighbors(d);
            stats.link_gradients += neighbors.len() as u64;
            match link.kind {
                LinkKind::Gaussian => {
                    let without: Vec<f64> = (0..k)
                        .map(|i| local.phi_bar[i] - local.phi[[t, i]] / n)
                        .collect();
                    for &o in neighbors {
                        let other = others_mean.row(o);
                        add_grad_phi_gaussian(link, other.as_slice().unwrap(), &without, n, out);
                    }
                }
                kind => {
                    for &o in neighbors {
                        let other = others_mean.row(o);
                        let other = other.as_slice().unwrap();
                        let mut x = link.nu;
                        for i in 0..k {
                            x += link.eta[i] * local.phi_bar[i] * other[i];
                        }
                        let slope = log_probability_slope(kind, x);
                        for i in 0..k {
                            out[i] += slope * link.eta[i] * other[i] / n;
                        }
                    }
                }
            }
        }
        softmax_in_place(out);
    }

    /// The part of the objective that depends on term `t`'s `φ`, evaluated
    /// at `trial` (with `current` the value the cached moments reflect).
    #[allow(clippy::too_many_arguments)]
    fn term_objective(
        &self,
        d: usize,
        t: usize,
        count: f64,
        current: &[f64],
        trial: &[f64],
        elog: &[f64],
        local: &DocLocal,
        link: &LinkParams,
        others_mean: &Array2<f64>,
        others_var: &Array2<f64>,
    ) -> f64 {
        let doc = self.corpus.doc(d);
        let (w, _) = doc.terms()[t];
        let k = trial.len();
        let n = doc.len() as f64;
        let log_beta = self.log_beta_t.row(w);
        let mut value = 0.0;
        for i in 0..k {
            if trial[i] > 0.0 {
                value += count * trial[i] * (log_beta[i] + elog[i] - trial[i].ln());
            }
        }
        let mut mean = local.phi_bar.clone();
        let mut var = local.var.clone();
        for i in 0..k {
            mean[i] += count * (trial[i] - current[i]) / n;
            var[i] += count * (trial[i] * (1.0 - trial[i]) - current[i] * (1.0 - current[i])) / (n * n);
        }
        for &o in self.corpus.neighbors(d) {
            let om = others_mean.row(o);
            let ov = others_var.row(o);
            value += expected_log_link_raw(link, &mean, om.as_slice().unwrap(), &var, ov.as_slice().unwrap());
        }
        value
    }
}

/// Number of tokens per topic implied by `φ`: `Σ_d Σ_n φ_{d,n}` as a
/// `K × V` expected count matrix.
pub fn expected_counts(corpus: &Corpus, state: &VariationalState) -> Array2<f64> {
    let k = state.num_topics();
    let mut counts = Array2::zeros((k, corpus.vocab_size()));
    for d in 0..corpus.num_docs() {
        for (t, &(w, count)) in corpus.doc(d).terms().iter().enumerate() {
            let row = state.phi[d].row(t);
            let mut col = counts.column_mut(w);
            col.scaled_add(count as f64, &row);
        }
    }
    counts
}

/// Convenience: sum of `γ` rows, used in tests and diagnostics.
pub fn gamma_totals(state: &VariationalState) -> Vec<f64> {
    state.gamma.sum_axis(Axis(1)).to_vec()
}
