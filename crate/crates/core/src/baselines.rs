//! Comparison models: plain LDA, LDA followed by a link regression on its
//! frozen posteriors, and a corpus-wide unigram.

use ndarray::Array2;

use crate::corpus::{Corpus, Document};
use crate::error::Result;
use crate::estimation::{
    fit, fit_link_sigmoid_probit, link_covariates, prior_pair_mean, FitConfig, FittedModel, ModelFile, ModelKind,
    OneClassObjective, RegularizationConfig, TrainingPosterior,
};
use crate::inference::ModelParams;
use crate::linkfn::{LinkKind, LinkParams};
use crate::prediction::{HeldoutPredictor, TopicPredictor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Lda,
    LdaRegression,
    Unigram,
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    /// For the unigram model: one topic holding the term distribution.
    pub params: ModelParams,
    pub alpha_total: f64,
    pub smoothing: f64,
    /// Training posterior of the LDA stage; absent for the unigram model.
    pub posterior: Option<TrainingPosterior>,
    pub lda_fit: Option<FittedModel>,
}

/// LDA through the same EM pipeline with the link model switched off.
pub fn fit_lda(corpus: &Corpus, config: &FitConfig) -> Result<BaselineModel> {
    let config = FitConfig {
        link: None,
        ..config.clone()
    };
    let fitted = fit(corpus, &config)?;
    Ok(BaselineModel {
        kind: BaselineKind::Lda,
        params: fitted.params.clone(),
        alpha_total: config.alpha_total,
        smoothing: config.reg.smoothing,
        posterior: Some(fitted.posterior.clone()),
        lda_fit: Some(fitted),
    })
}

/// Fits LDA, then a sigmoid link regression on the Hadamard products of the
/// frozen posterior means, with the same one-class regularization as the
/// joint model.
pub fn fit_lda_regression(corpus: &Corpus, config: &FitConfig, reg: &RegularizationConfig) -> Result<BaselineModel> {
    let mut model = fit_lda(corpus, config)?;
    model.params.link = Some(fit_regression_stage(corpus, &model, reg)?);
    model.kind = BaselineKind::LdaRegression;
    Ok(model)
}

/// The second stage alone, from a fitted LDA model.
pub fn fit_regression_stage(corpus: &Corpus, lda: &BaselineModel, reg: &RegularizationConfig) -> Result<LinkParams> {
    let k = lda.params.num_topics();
    let start = LinkParams::neutral(LinkKind::Sigmoid, k);
    let Some(posterior) = &lda.posterior else {
        return Ok(start);
    };
    if corpus.num_links() == 0 {
        return Ok(start);
    }
    let covariates = link_covariates(corpus, &posterior.phi_bar);
    let pi_alpha = prior_pair_mean(&lda.params.alpha);
    let objective = OneClassObjective::new(
        LinkKind::Sigmoid,
        &covariates,
        &pi_alpha,
        reg.resolved_rho(corpus.num_links()),
        reg.lambda,
    )?;
    fit_link_sigmoid_probit(&objective, &start)
}

/// Smoothed corpus-wide term frequencies.
pub fn unigram(corpus: &Corpus, smoothing: f64) -> BaselineModel {
    let v = corpus.vocab_size();
    let mut counts = vec![smoothing; v];
    for doc in corpus.docs() {
        for &(w, c) in doc.terms() {
            counts[w] += c as f64;
        }
    }
    let total: f64 = counts.iter().sum();
    let log_beta = Array2::from_shape_vec((1, v), counts.iter().map(|c| (c / total).ln()).collect())
        .expect("one row");
    BaselineModel {
        kind: BaselineKind::Unigram,
        params: ModelParams {
            log_beta,
            alpha: vec![1.0],
            link: None,
        },
        alpha_total: 1.0,
        smoothing,
        posterior: None,
        lda_fit: None,
    }
}

struct UnigramPredictor {
    dist: Vec<f64>,
}

impl HeldoutPredictor for UnigramPredictor {
    fn link_scores(&self, _words: &Document) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    fn word_distribution(&self, _neighbors: &[usize]) -> Result<Vec<f64>> {
        Ok(self.dist.clone())
    }
}

impl BaselineModel {
    pub fn distribution(&self) -> Vec<f64> {
        self.params.log_beta.row(0).iter().map(|x| x.exp()).collect()
    }

    /// Word prediction never uses the regression coefficients, so the
    /// regression baseline predicts words exactly as plain LDA does.
    pub fn predictor(&self) -> Box<dyn HeldoutPredictor + '_> {
        match (self.kind, &self.posterior) {
            (BaselineKind::Unigram, _) | (_, None) => Box::new(UnigramPredictor {
                dist: self.distribution(),
            }),
            (_, Some(posterior)) => {
                let mut p = TopicPredictor::new(self.params.clone(), posterior.clone());
                p.word_link = None;
                Box::new(p)
            }
        }
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            kind: match self.kind {
                BaselineKind::Lda => ModelKind::Lda,
                BaselineKind::LdaRegression => ModelKind::LdaRegression,
                BaselineKind::Unigram => ModelKind::Unigram,
            },
            alpha_total: self.alpha_total,
            smoothing: self.smoothing,
            log_beta: self.params.log_beta.clone(),
            link: self.params.link.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Corpus {
        let vocab = vec!["a".to_string(), "b".to_string()];
        let docs = vec![Document::from_counts([(0, 3)]), Document::from_counts([(1, 1)])];
        Corpus::new(vocab, docs, vec![(0, 1)]).unwrap()
    }

    #[test]
    fn unigram_frequencies() {
        let u = unigram(&toy(), 1e-12);
        let dist = u.distribution();
        assert!((dist[0] - 0.75).abs() < 1e-10 && (dist[1] - 0.25).abs() < 1e-10);
        let smoothed = unigram(&toy(), 0.5).distribution();
        assert!(smoothed.iter().all(|&p| p > 0.0));
        assert!(u.predictor().link_scores(&Document::from_counts([(0, 1)])).unwrap().is_none());
    }

    #[test]
    fn single_topic_lda_is_smoothed_frequency() {
        let cfg = FitConfig {
            num_topics: 1,
            em_iters: 3,
            ..Default::default()
        };
        let lda = fit_lda(&toy(), &cfg).unwrap();
        let u = unigram(&toy(), cfg.reg.smoothing);
        for (a, b) in lda.distribution().iter().zip(u.distribution()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_stage_leaves_topics_alone() {
        let c = toy();
        let cfg = FitConfig {
            num_topics: 2,
            em_iters: 4,
            ..Default::default()
        };
        let lda = fit_lda(&c, &cfg).unwrap();
        let reg = fit_lda_regression(&c, &cfg, &RegularizationConfig::default()).unwrap();
        assert_eq!(lda.params.log_beta, reg.params.log_beta);
        assert_eq!(reg.params.link.as_ref().unwrap().kind, LinkKind::Sigmoid);
    }
}
