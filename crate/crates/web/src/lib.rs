//! Browser bindings: link function curves, a synthetic network, and a small
//! fit with topic words and link suggestions.

use wasm_bindgen::prelude::*;

use rtm::cli::{suggest_links, top_words, words_to_document};
use rtm::corpus::{generate_synthetic, Corpus, SyntheticConfig, SyntheticTruth, TopicSpec};
use rtm::estimation::{fit, FitConfig, FittedModel};
use rtm::linkfn::{link_probability, LinkKind, LinkParams};
use rtm::prediction::TopicPredictor;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Link probability between a document fully in topic 0 and one with share
/// `t` in topic 0, for `t` on an even grid over `[0, 1]`.
pub fn curve(kind: LinkKind, eta: f64, nu: f64, points: usize) -> rtm::Result<Vec<f64>> {
    let link = LinkParams::new(kind, vec![eta, eta], nu)?;
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            link_probability(&link, &[1.0, 0.0], &[t, 1.0 - t])
        })
        .collect()
}

#[wasm_bindgen]
pub fn link_curve(kind: &str, eta: f64, nu: f64, points: usize) -> Result<Vec<f64>, JsError> {
    curve(kind.parse().map_err(js)?, eta, nu, points).map_err(js)
}

#[wasm_bindgen]
pub struct Network {
    corpus: Corpus,
    truth: SyntheticTruth,
    fitted: Option<FittedModel>,
}

#[wasm_bindgen]
impl Network {
    /// Two block topics over 20 terms with exponential links.
    #[wasm_bindgen(constructor)]
    pub fn new(num_docs: usize, eta: f64, nu: f64, noise: f64, seed: u64) -> Result<Network, JsError> {
        let config = SyntheticConfig {
            num_topics: 2,
            vocab_size: 20,
            num_docs,
            doc_length: 40,
            alpha: vec![0.5, 0.5],
            topics: TopicSpec::Blocks { noise },
            link: LinkParams::new(LinkKind::Exponential, vec![eta, eta], nu).map_err(js)?,
            seed,
        };
        let (corpus, truth) = generate_synthetic(&config).map_err(js)?;
        Ok(Network { corpus, truth, fitted: None })
    }

    pub fn num_docs(&self) -> usize {
        self.corpus.num_docs()
    }

    /// Flattened `(a, b)` pairs.
    pub fn links(&self) -> Vec<u32> {
        self.corpus.links().iter().flat_map(|&(a, b)| [a as u32, b as u32]).collect()
    }

    /// Share of topic 0 in each document's generating proportions.
    pub fn true_share(&self) -> Vec<f64> {
        self.truth.theta.iter().map(|t| t[0]).collect()
    }

    /// Fits a two-topic model and returns a one-line summary.
    pub fn fit(&mut self, link_fn: &str, em_iters: usize, seed: u64) -> Result<String, JsError> {
        let config = FitConfig {
            num_topics: 2,
            link: Some(link_fn.parse().map_err(js)?),
            em_iters,
            seed,
            ..Default::default()
        };
        let fitted = fit(&self.corpus, &config).map_err(js)?;
        let link = fitted.params.link.clone();
        let summary = format!(
            "{} iterations, bound {:.3}, link {:?}",
            fitted.iterations(),
            fitted.final_elbo(),
            link.map(|l| (l.eta, l.nu))
        );
        self.fitted = Some(fitted);
        Ok(summary)
    }

    /// Posterior share of fitted topic 0 per document; empty before a fit.
    pub fn fitted_share(&self) -> Vec<f64> {
        let Some(f) = &self.fitted else { return Vec::new() };
        f.posterior.gamma.rows().into_iter().map(|r| r[0] / r.sum()).collect()
    }

    /// Top words of a fitted topic, space separated.
    pub fn topic_words(&self, topic: usize, n: usize) -> String {
        let Some(f) = &self.fitted else { return String::new() };
        top_words(&f.params.log_beta, n)
            .get(topic)
            .map(|ws| ws.iter().map(|&(w, _)| self.corpus.vocab()[w].as_str()).collect::<Vec<_>>().join(" "))
            .unwrap_or_default()
    }

    /// Training documents most likely to link to a new document with the
    /// given words, as flattened `(doc, probability)` pairs.
    pub fn suggest(&self, words: &str, top_k: usize) -> Result<Vec<f64>, JsError> {
        let f = self.fitted.as_ref().ok_or_else(|| JsError::new("fit a model first"))?;
        let predictor = TopicPredictor::new(f.params.clone(), f.posterior.clone());
        let doc = words_to_document(self.corpus.vocab(), words);
        let ranked = suggest_links(&predictor, &doc, top_k).map_err(js)?;
        Ok(ranked.into_iter().flat_map(|(d, p)| [d as f64, p]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_are_probabilities() {
        for kind in LinkKind::ALL {
            let nu = if kind == LinkKind::Gaussian { 0.0 } else { -2.0 };
            let c = curve(kind, 1.5, nu, 11).unwrap();
            assert_eq!(c.len(), 11);
            assert!(c.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        let exp = curve(LinkKind::Exponential, 1.5, -2.0, 5).unwrap();
        assert!(exp.windows(2).all(|w| w[0] <= w[1]));
        assert!(curve(LinkKind::Exponential, 3.0, -2.0, 5).is_err());
    }

    #[test]
    fn network_fit_and_suggest() {
        let mut net = Network::new(20, 3.0, -3.5, 0.1, 7).unwrap();
        assert_eq!(net.links().len() % 2, 0);
        assert_eq!(net.true_share().len(), 20);
        assert!(net.fitted_share().is_empty());
        net.fit("exponential", 10, 1).unwrap();
        assert_eq!(net.fitted_share().len(), 20);
        assert_eq!(net.topic_words(0, 3).split(' ').count(), 3);
        let s = net.suggest("w0 w1 w2", 5).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.chunks(2).collect::<Vec<_>>().windows(2).all(|w| w[0][1] >= w[1][1]));
    }
}
