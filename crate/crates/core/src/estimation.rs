//! M-step estimation of topics and link parameters, and the variational EM
//! driver.
//!
//! The quantity EM ascends is the ELBO plus the link regularizer plus the
//! log-density of the symmetric Dirichlet prior implied by the topic
//! smoothing. Each M-step maximizes (or, for sigmoid/probit, increases) that
//! objective, so it never decreases across iterations.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::corpus::Corpus;
use crate::error::{Result, RtmError};
use crate::inference::{
    elbo, expected_counts, init_state_with_noise, run_e_step, EStepOptions, ModelParams,
    VariationalState, DEFAULT_INIT_NOISE,
};
use crate::linkfn::{log_probability_of_linear, log_probability_slope, LinkKind, LinkParams};

/// Floor applied before logs in the exponential update.
const EXP_CLAMP: f64 = 1e-10;
const GAUSS_SPREAD_FLOOR: f64 = 1e-10;
const GAUSS_ETA_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationConfig {
    /// Pseudo non-link count. `None` uses the number of observed links.
    pub rho: Option<f64>,
    /// Weight of the `‖η‖²` penalty (sigmoid/probit only).
    pub lambda: f64,
    /// Pseudocount added to every topic-term count.
    pub smoothing: f64,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            rho: None,
            lambda: 0.0,
            smoothing: 0.01,
        }
    }
}

impl RegularizationConfig {
    pub fn resolved_rho(&self, num_links: usize) -> f64 {
        self.rho.unwrap_or(num_links as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(rho) = self.rho {
            if !(rho >= 0.0) || !rho.is_finite() {
                return Err(RtmError::InvalidArgument(format!("rho must be >= 0, got {rho}")));
            }
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(RtmError::InvalidArgument(format!("l2 weight must be >= 0, got {}", self.lambda)));
        }
        if !(self.smoothing > 0.0) || !self.smoothing.is_finite() {
            return Err(RtmError::InvalidArgument(format!(
                "smoothing must be > 0, got {}",
                self.smoothing
            )));
        }
        Ok(())
    }
}

/// Link statistics gathered from the posterior over the observed links.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub num_links: usize,
    /// `Σ_links φ̄_a ∘ φ̄_b`.
    pub pi_bar_sum: Vec<f64>,
    /// `(α/Σα) ∘ (α/Σα)`.
    pub pi_alpha: Vec<f64>,
    /// `Σ_links (φ̄_a − φ̄_b)²`.
    pub sq_diff_sum: Vec<f64>,
    /// `Σ_links (Var_a + Var_b)`.
    pub var_sum: Vec<f64>,
}

impl SufficientStats {
    pub fn from_state(corpus: &Corpus, state: &VariationalState, alpha: &[f64]) -> Self {
        let k = state.num_topics();
        let mut pi_bar_sum = vec![0.0; k];
        let mut sq_diff_sum = vec![0.0; k];
        let mut var_sum = vec![0.0; k];
        for &(a, b) in corpus.links() {
            for i in 0..k {
                let (pa, pb) = (state.phi_bar[[a, i]], state.phi_bar[[b, i]]);
                pi_bar_sum[i] += pa * pb;
                sq_diff_sum[i] += (pa - pb) * (pa - pb);
                var_sum[i] += state.var_bar[[a, i]] + state.var_bar[[b, i]];
            }
        }
        SufficientStats {
            num_links: corpus.num_links(),
            pi_bar_sum,
            pi_alpha: prior_pair_mean(alpha),
            sq_diff_sum,
            var_sum,
        }
    }

    /// Expected squared distance summed over links, including the
    /// variance of each document's mean assignment.
    pub fn gaussian_spread(&self) -> Vec<f64> {
        self.sq_diff_sum
            .iter()
            .zip(&self.var_sum)
            .map(|(s, v)| s + v)
            .collect()
    }
}

/// `(α/Σα) ∘ (α/Σα)`: the pair covariate of two documents at the prior mean.
pub fn prior_pair_mean(alpha: &[f64]) -> Vec<f64> {
    let total: f64 = alpha.iter().sum();
    alpha.iter().map(|a| (a / total) * (a / total)).collect()
}

/// `π̄` for every observed link, in link order.
pub fn link_covariates(corpus: &Corpus, phi_bar: &Array2<f64>) -> Vec<Vec<f64>> {
    corpus
        .links()
        .iter()
        .map(|&(a, b)| {
            phi_bar
                .row(a)
                .iter()
                .zip(phi_bar.row(b).iter())
                .map(|(x, y)| x * y)
                .collect()
        })
        .collect()
}

/// `β_k ∝ s + expected counts`, normalized per topic.
pub fn update_beta(corpus: &Corpus, state: &VariationalState, smoothing: f64) -> Array2<f64> {
    let mut beta = expected_counts(corpus, state);
    beta.mapv_inplace(|c| c + smoothing);
    for mut row in beta.rows_mut() {
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    beta
}

/// The regularized one-class objective for sigmoid and probit links:
/// `Σ_links log ψ(η·π̄ + ν) + ρ·log(1 − ψ(η·π̄_α + ν)) − λ‖η‖²`.
#[derive(Debug, Clone, Copy)]
pub struct OneClassObjective<'a> {
    pub kind: LinkKind,
    pub covariates: &'a [Vec<f64>],
    pub pi_alpha: &'a [f64],
    pub rho: f64,
    pub lambda: f64,
}

impl<'a> OneClassObjective<'a> {
    pub fn new(
        kind: LinkKind,
        covariates: &'a [Vec<f64>],
        pi_alpha: &'a [f64],
        rho: f64,
        lambda: f64,
    ) -> Result<Self> {
        if !matches!(kind, LinkKind::Sigmoid | LinkKind::Probit) {
            return Err(RtmError::InvalidArgument(format!(
                "gradient fitting applies to sigmoid and probit links, not {kind}"
            )));
        }
        if !(rho >= 0.0) || !(lambda >= 0.0) {
            return Err(RtmError::InvalidArgument("rho and l2 weight must be >= 0".into()));
        }
        if rho == 0.0 && lambda == 0.0 {
            return Err(RtmError::InvalidArgument(
                "with only positive links the objective is unbounded; set rho > 0 or l2 > 0".into(),
            ));
        }
        Ok(OneClassObjective {
            kind,
            covariates,
            pi_alpha,
            rho,
            lambda,
        })
    }

    fn linear(eta: &[f64], nu: f64, x: &[f64]) -> f64 {
        nu + eta.iter().zip(x).map(|(e, v)| e * v).sum::<f64>()
    }

    pub fn value(&self, eta: &[f64], nu: f64) -> f64 {
        let mut total = 0.0;
        for x in self.covariates {
            total += log_probability_of_linear(self.kind, Self::linear(eta, nu, x));
        }
        if self.rho > 0.0 {
            // log(1 − ψ(x)) = log ψ(−x) for both symmetric links
            let x = Self::linear(eta, nu, self.pi_alpha);
            total += self.rho * log_probability_of_linear(self.kind, -x);
        }
        total - self.lambda * eta.iter().map(|e| e * e).sum::<f64>()
    }

    /// Gradient with respect to `(η, ν)`.
    pub fn gradient(&self, eta: &[f64], nu: f64) -> (Vec<f64>, f64) {
        let mut g_eta: Vec<f64> = eta.iter().map(|e| -2.0 * self.lambda * e).collect();
        let mut g_nu = 0.0;
        for x in self.covariates {
            let s = log_probability_slope(self.kind, Self::linear(eta, nu, x));
            for (g, v) in g_eta.iter_mut().zip(x) {
                *g += s * v;
            }
            g_nu += s;
        }
        if self.rho > 0.0 {
            let x = Self::linear(eta, nu, self.pi_alpha);
            let s = -self.rho * log_probability_slope(self.kind, -x);
            for (g, v) in g_eta.iter_mut().zip(self.pi_alpha) {
                *g += s * v;
            }
            g_nu += s;
        }
        (g_eta, g_nu)
    }
}

pub const ASCENT_MAX_ITERS: usize = 500;
pub const ASCENT_GRAD_TOL: f64 = 1e-6;
const ASCENT_FIRST_STEP: f64 = 0.1;

/// Gradient ascent with backtracking from `start`; stops when the gradient's
/// max-norm is below `1e-6` or after 500 iterations.
pub fn fit_link_sigmoid_probit(objective: &OneClassObjective, start: &LinkParams) -> Result<LinkParams> {
    let mut eta = start.eta.clone();
    let mut nu = start.nu;
    let mut value = objective.value(&eta, nu);
    if !value.is_finite() {
        return Err(RtmError::Numeric(format!("link objective is not finite at the start ({value})")));
    }
    let mut step = ASCENT_FIRST_STEP;
    for _ in 0..ASCENT_MAX_ITERS {
        let (g_eta, g_nu) = objective.gradient(&eta, nu);
        let norm = g_eta.iter().fold(g_nu.abs(), |m, g| m.max(g.abs()));
        if !norm.is_finite() {
            return Err(RtmError::Numeric("link objective gradient is not finite".into()));
        }
        if norm < ASCENT_GRAD_TOL {
            break;
        }
        let mut moved = false;
        while step > 1e-30 {
            let trial_eta: Vec<f64> = eta.iter().zip(&g_eta).map(|(e, g)| e + step * g).collect();
            let trial_nu = nu + step * g_nu;
            let trial = objective.value(&trial_eta, trial_nu);
            if trial.is_finite() && trial >= value {
                eta = trial_eta;
                nu = trial_nu;
                value = trial;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
        step *= 2.0;
    }
    LinkParams::new(objective.kind, eta, nu)
}

/// Closed-form update for the exponential link.
pub fn fit_link_exponential(stats: &SufficientStats, rho: f64) -> Result<LinkParams> {
    if stats.num_links == 0 {
        return Err(RtmError::InvalidArgument("cannot fit link parameters without observed links".into()));
    }
    if !(rho >= 0.0) {
        return Err(RtmError::InvalidArgument("rho must be >= 0".into()));
    }
    let m = stats.num_links as f64;
    let total_pi: f64 = stats.pi_bar_sum.iter().sum();
    let alpha_mass: f64 = stats.pi_alpha.iter().sum();
    let slack = (m - total_pi).max(EXP_CLAMP);
    let nu = slack.ln() - (rho * (1.0 - alpha_mass).max(0.0) + slack).ln();
    let eta = stats
        .pi_bar_sum
        .iter()
        .zip(&stats.pi_alpha)
        .map(|(&p, &a)| {
            let p = p.max(EXP_CLAMP);
            p.ln() - (p + rho * a).ln() - nu
        })
        .collect();
    LinkParams::new(LinkKind::Exponential, eta, nu)
}

/// Variance-matching update for the Gaussian link.
pub fn fit_link_gaussian(stats: &SufficientStats, rho: f64) -> Result<LinkParams> {
    if stats.num_links == 0 {
        return Err(RtmError::InvalidArgument("cannot fit link parameters without observed links".into()));
    }
    let m = stats.num_links as f64;
    let k = stats.sq_diff_sum.len() as f64;
    let eta: Vec<f64> = stats
        .gaussian_spread()
        .iter()
        .map(|&s| (m / (2.0 * s.max(GAUSS_SPREAD_FLOOR))).max(GAUSS_ETA_FLOOR))
        .collect();
    let log_eta_sum: f64 = eta.iter().map(|e| e.ln()).sum();
    let nu = 0.5f64.ln() + 0.5 * k * std::f64::consts::PI.ln() + (rho + m).ln() - m.ln() - 0.5 * log_eta_sum;
    LinkParams::new(LinkKind::Gaussian, eta, nu.max(0.0))
}

/// Regularizer paired with each link kind in the EM objective.
pub fn link_regularizer(link: &LinkParams, stats: &SufficientStats, rho: f64, lambda: f64) -> f64 {
    let m = stats.num_links as f64;
    match link.kind {
        LinkKind::Sigmoid | LinkKind::Probit => {
            let x = link.linear(&stats.pi_alpha);
            let penalty = lambda * link.eta.iter().map(|e| e * e).sum::<f64>();
            let negative = if rho > 0.0 {
                rho * log_probability_of_linear(link.kind, -x)
            } else {
                0.0
            };
            negative - penalty
        }
        LinkKind::Exponential => {
            let log_one_minus_exp = |x: f64| (-x.exp_m1()).ln();
            let mut total = 0.0;
            for (a, e) in stats.pi_alpha.iter().zip(&link.eta) {
                if *a > 0.0 {
                    total += a * log_one_minus_exp(e + link.nu);
                }
            }
            let rest = 1.0 - stats.pi_alpha.iter().sum::<f64>();
            if rest > 1e-15 {
                total += rest * log_one_minus_exp(link.nu);
            }
            if rho > 0.0 {
                rho * total
            } else {
                0.0
            }
        }
        LinkKind::Gaussian => {
            m * link.nu
                + 0.5 * m * link.eta.iter().map(|e| (e / std::f64::consts::PI).ln()).sum::<f64>()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub num_topics: usize,
    pub alpha_total: f64,
    /// `None` disables the link model (plain LDA).
    pub link: Option<LinkKind>,
    pub reg: RegularizationConfig,
    pub seed: u64,
    pub em_iters: usize,
    pub tol: f64,
    pub estep: EStepOptions,
    pub init_noise: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            num_topics: 10,
            alpha_total: 1.0,
            link: Some(LinkKind::Exponential),
            reg: RegularizationConfig::default(),
            seed: 42,
            em_iters: 100,
            tol: 1e-6,
            estep: EStepOptions::default(),
            init_noise: DEFAULT_INIT_NOISE,
        }
    }
}

impl FitConfig {
    pub fn alpha(&self) -> Vec<f64> {
        vec![self.alpha_total / self.num_topics as f64; self.num_topics]
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 {
            return Err(RtmError::InvalidArgument("number of topics must be >= 1".into()));
        }
        if !(self.alpha_total > 0.0) || !self.alpha_total.is_finite() {
            return Err(RtmError::InvalidArgument("alpha total must be > 0".into()));
        }
        if !(self.tol > 0.0) {
            return Err(RtmError::InvalidArgument("tolerance must be > 0".into()));
        }
        if self.em_iters == 0 {
            return Err(RtmError::InvalidArgument("need at least one EM iteration".into()));
        }
        self.reg.validate()
    }
}

/// Posterior moments of the training documents at the end of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPosterior {
    pub gamma: Array2<f64>,
    pub phi_bar: Array2<f64>,
    pub var_bar: Array2<f64>,
}

impl TrainingPosterior {
    pub fn from_state(state: &VariationalState) -> Self {
        TrainingPosterior {
            gamma: state.gamma.clone(),
            phi_bar: state.phi_bar.clone(),
            var_bar: state.var_bar.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub params: ModelParams,
    pub config: FitConfig,
    /// ELBO after each EM iteration.
    pub elbo_trace: Vec<f64>,
    /// EM objective (ELBO + link regularizer + smoothing prior) after each
    /// EM iteration.
    pub objective_trace: Vec<f64>,
    /// E-step objective before and after every sweep, one list per
    /// iteration.
    pub estep_traces: Vec<Vec<f64>>,
    pub converged: bool,
    pub posterior: TrainingPosterior,
}

impl FittedModel {
    pub fn iterations(&self) -> usize {
        self.elbo_trace.len()
    }

    pub fn final_elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let kind = match self.config.link {
            Some(kind) => ModelKind::Rtm(kind),
            None => ModelKind::Lda,
        };
        ModelFile {
            kind,
            alpha_total: self.config.alpha_total,
            smoothing: self.config.reg.smoothing,
            log_beta: self.params.log_beta.clone(),
            link: self.params.link.clone(),
        }
    }
}

/// The objective variational EM ascends.
pub fn em_objective(
    corpus: &Corpus,
    params: &ModelParams,
    state: &VariationalState,
    reg: &RegularizationConfig,
) -> f64 {
    let mut total = elbo(corpus, params, state).total;
    if let Some(link) = &params.link {
        if corpus.num_links() > 0 {
            let stats = SufficientStats::from_state(corpus, state, &params.alpha);
            total += link_regularizer(link, &stats, reg.resolved_rho(corpus.num_links()), reg.lambda);
        }
    }
    total + reg.smoothing * params.log_beta.sum()
}

/// M-step: topics, then link parameters (skipped when there are no links).
pub fn m_step(
    corpus: &Corpus,
    state: &VariationalState,
    params: &mut ModelParams,
    reg: &RegularizationConfig,
) -> Result<()> {
    params.log_beta = update_beta(corpus, state, reg.smoothing).mapv(f64::ln);
    let Some(current) = params.link.clone() else {
        return Ok(());
    };
    if corpus.num_links() == 0 {
        return Ok(());
    }
    let rho = reg.resolved_rho(corpus.num_links());
    let stats = SufficientStats::from_state(corpus, state, &params.alpha);
    params.link = Some(match current.kind {
        LinkKind::Exponential => fit_link_exponential(&stats, rho)?,
        LinkKind::Gaussian => fit_link_gaussian(&stats, rho)?,
        kind => {
            let covariates = link_covariates(corpus, &state.phi_bar);
            let objective = OneClassObjective::new(kind, &covariates, &stats.pi_alpha, rho, reg.lambda)?;
            fit_link_sigmoid_probit(&objective, &current)?
        }
    });
    Ok(())
}

/// Variational EM from a seeded initialization: M-step, E-step, repeated
/// until the relative change in the EM objective drops below `tol`.
pub fn fit(corpus: &Corpus, config: &FitConfig) -> Result<FittedModel> {
    config.validate()?;
    let k = config.num_topics;
    let alpha = config.alpha();
    if let Some(kind) = config.link {
        if matches!(kind, LinkKind::Sigmoid | LinkKind::Probit)
            && corpus.num_links() > 0
            && config.reg.resolved_rho(corpus.num_links()) == 0.0
            && config.reg.lambda == 0.0
        {
            return Err(RtmError::InvalidArgument(
                "with only positive links the objective is unbounded; set rho > 0 or l2 > 0".into(),
            ));
        }
    }
    let mut state = init_state_with_noise(corpus, k, &alpha, config.seed, config.init_noise)?;
    let mut params = ModelParams {
        log_beta: Array2::zeros((k, corpus.vocab_size())),
        alpha,
        link: config.link.map(|kind| LinkParams::neutral(kind, k)),
    };
    let mut elbo_trace = Vec::new();
    let mut objective_trace = Vec::new();
    let mut estep_traces = Vec::new();
    let mut converged = false;
    for iter in 0..config.em_iters {
        m_step(corpus, &state, &mut params, &config.reg)?;
        let report = run_e_step(corpus, &params, &mut state, &config.estep)?;
        let mut sweep_trace = vec![report.initial];
        sweep_trace.extend(&report.trace);
        estep_traces.push(sweep_trace);
        let objective = em_objective(corpus, &params, &state, &config.reg);
        if !objective.is_finite() {
            return Err(RtmError::Numeric(format!("EM objective is not finite at iteration {}", iter + 1)));
        }
        log::info!("em iteration {}: elbo {:.10e} objective {:.10e}", iter + 1, report.final_elbo(), objective);
        elbo_trace.push(report.final_elbo());
        let previous = objective_trace.last().copied();
        objective_trace.push(objective);
        if let Some(prev) = previous {
            if ((objective - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < config.tol {
                converged = true;
                break;
            }
        }
    }
    Ok(FittedModel {
        params,
        config: config.clone(),
        elbo_trace,
        objective_trace,
        estep_traces,
        converged,
        posterior: TrainingPosterior::from_state(&state),
    })
}

/// What a model file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rtm(LinkKind),
    Lda,
    LdaRegression,
    Unigram,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Rtm(kind) => write!(f, "{kind}"),
            ModelKind::Lda => f.write_str("lda"),
            ModelKind::LdaRegression => f.write_str("lda_regression"),
            ModelKind::Unigram => f.write_str("unigram"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = RtmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lda" => Ok(ModelKind::Lda),
            "lda_regression" => Ok(ModelKind::LdaRegression),
            "unigram" => Ok(ModelKind::Unigram),
            other => other.parse().map(ModelKind::Rtm),
        }
    }
}

pub const MODEL_MAGIC: &str = "rtm-model v1";

/// Contents of a model file. Lda and unigram models store zero link
/// coefficients; lda_regression stores its sigmoid coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub alpha_total: f64,
    pub smoothing: f64,
    pub log_beta: Array2<f64>,
    pub link: Option<LinkParams>,
}

impl ModelFile {
    pub fn num_topics(&self) -> usize {
        self.log_beta.nrows()
    }

    pub fn params(&self) -> ModelParams {
        let k = self.num_topics();
        ModelParams {
            log_beta: self.log_beta.clone(),
            alpha: vec![self.alpha_total / k as f64; k],
            link: self.link.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let k = self.num_topics();
        let (eta, nu) = match &self.link {
            Some(l) => (l.eta.clone(), l.nu),
            None => (vec![0.0; k], 0.0),
        };
        let fmt_row = |row: &mut dyn Iterator<Item = f64>| {
            row.map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
        };
        let mut out = String::new();
        out.push_str(MODEL_MAGIC);
        out.push('\n');
        out.push_str(&format!(
            "{} {} {} {:.16e} {:.16e}\n",
            k,
            self.log_beta.ncols(),
            self.kind,
            self.alpha_total,
            self.smoothing
        ));
        out.push_str(&format!("{nu:.16e}\n"));
        out.push_str(&fmt_row(&mut eta.into_iter()));
        out.push('\n');
        for row in self.log_beta.rows() {
            out.push_str(&fmt_row(&mut row.iter().copied()));
            out.push('\n');
        }
        out
    }
}

/// Writes the model to a temporary file beside `path`, then renames it into
/// place, so a failed write never leaves a partial model.
pub fn save_model(model: &ModelFile, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RtmError::io(dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        w.write_all(model.to_text().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| RtmError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| RtmError::io(path, e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file = std::fs::File::open(path).map_err(|e| RtmError::io(path, e))?;
    let mut lines = Vec::new();
    for line in BufReader::new(file).lines() {
        lines.push(line.map_err(|e| RtmError::io(path, e))?);
    }
    parse_model(&lines).map_err(|(line, msg)| RtmError::parse(path, line, msg))
}

fn parse_floats(line: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let values: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
    let values = values.map_err(|e| format!("bad number: {e}"))?;
    if values.len() != expected {
        return Err(format!("expected {expected} values, found {}", values.len()));
    }
    Ok(values)
}

fn parse_model(lines: &[String]) -> std::result::Result<ModelFile, (usize, String)> {
    let get = |i: usize| lines.get(i).map(String::as_str).ok_or((i + 1, "unexpected end of file".to_string()));
    if get(0)?.trim() != MODEL_MAGIC {
        return Err((1, format!("expected header '{MODEL_MAGIC}'")));
    }
    let header: Vec<&str> = get(1)?.split_whitespace().collect();
    if header.len() != 5 {
        return Err((2, "expected 'K V kind alpha_total smoothing'".into()));
    }
    let k: usize = header[0].parse().map_err(|_| (2, "bad topic count".to_string()))?;
    let v: usize = header[1].parse().map_err(|_| (2, "bad vocabulary size".to_string()))?;
    let kind: ModelKind = header[2].parse().map_err(|e: RtmError| (2, e.to_string()))?;
    let alpha_total: f64 = header[3].parse().map_err(|_| (2, "bad alpha total".to_string()))?;
    let smoothing: f64 = header[4].parse().map_err(|_| (2, "bad smoothing".to_string()))?;
    if k == 0 || v == 0 || !(alpha_total > 0.0) {
        return Err((2, "K, V and alpha total must be positive".into()));
    }
    let nu = parse_floats(get(2)?, 1).map_err(|e| (3, e))?[0];
    let eta = parse_floats(get(3)?, k).map_err(|e| (4, e))?;
    let mut flat = Vec::with_capacity(k * v);
    for t in 0..k {
        let row = parse_floats(get(4 + t)?, v).map_err(|e| (5 + t, e))?;
        let mass: f64 = row.iter().map(|x| x.exp()).sum();
        if (mass - 1.0).abs() > 1e-8 {
            return Err((5 + t, format!("topic {t} sums to {mass}, not 1")));
        }
        flat.extend(row);
    }
    if lines.len() > 4 + k && lines[4 + k..].iter().any(|l| !l.trim().is_empty()) {
        return Err((5 + k, "trailing content".into()));
    }
    let log_beta = Array2::from_shape_vec((k, v), flat).expect("shape checked");
    let link = match kind {
        ModelKind::Rtm(lk) => Some(lk),
        ModelKind::LdaRegression => Some(LinkKind::Sigmoid),
        ModelKind::Lda | ModelKind::Unigram => None,
    }
    .map(|lk| LinkParams::new(lk, eta, nu).map_err(|e| (3, e.to_string())))
    .transpose()?;
    if kind == ModelKind::Unigram && k != 1 {
        return Err((2, "unigram models have one topic".into()));
    }
    Ok(ModelFile {
        kind,
        alpha_total,
        smoothing,
        log_beta,
        link,
    })
}
