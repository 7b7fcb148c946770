//! Held-out inference, link and word prediction, and rank metrics.

use std::io::Write;
use std::path::Path;

use crate::corpus::{Document, FoldSplit};
use crate::error::{Result, RtmError};
use crate::estimation::TrainingPosterior;
use crate::inference::ModelParams;
use crate::linkfn::{
    add_grad_phi_gaussian, expected_log_link_raw, log_probability_slope, probability_of_linear,
    LinkKind, LinkParams,
};
use crate::math::{dirichlet_expectation, max_abs_diff, softmax_in_place};

/// Evidence about a document outside the training set.
#[derive(Debug, Clone, Copy)]
pub enum Evidence<'a> {
    Words(&'a Document),
    /// Training documents the new document links to.
    Links(&'a [usize]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceKind {
    WordsOnly,
    LinksOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeldoutPosterior {
    pub phi_bar: Vec<f64>,
    /// Variance of the mean assignment, per topic.
    pub var: Vec<f64>,
    pub gamma: Vec<f64>,
    pub evidence: EvidenceKind,
}

#[derive(Debug, Clone)]
pub struct HeldoutOptions {
    pub max_iters: usize,
    /// Relative change in `γ` that ends the iterations.
    pub tol: f64,
}

impl Default for HeldoutOptions {
    fn default() -> Self {
        HeldoutOptions {
            max_iters: 100,
            tol: 1e-6,
        }
    }
}

/// Posterior for a new document. Words-only evidence runs the no-link
/// document update; links-only evidence treats the document as a single
/// pseudo-token with no observed word, coupled to the fixed posteriors of the
/// training documents it links to.
pub fn infer_heldout(
    params: &ModelParams,
    train: &TrainingPosterior,
    evidence: Evidence,
    opts: &HeldoutOptions,
) -> Result<HeldoutPosterior> {
    match evidence {
        Evidence::Words(doc) => infer_from_words(params, doc, opts),
        Evidence::Links(neighbors) => infer_from_links(params, train, neighbors, opts),
    }
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max)
}

fn infer_from_words(params: &ModelParams, doc: &Document, opts: &HeldoutOptions) -> Result<HeldoutPosterior> {
    if doc.is_empty() {
        return Err(RtmError::InvalidArgument("held-out document has no words".into()));
    }
    let k = params.num_topics();
    let v = params.vocab_size();
    if let Some(&(w, _)) = doc.terms().iter().find(|&&(w, _)| w >= v) {
        return Err(RtmError::InvalidArgument(format!("term {w} outside vocabulary of size {v}")));
    }
    let n = doc.len() as f64;
    let mut gamma: Vec<f64> = params.alpha.iter().map(|a| a + n / k as f64).collect();
    let mut phi = vec![vec![1.0 / k as f64; k]; doc.num_distinct()];
    for _ in 0..opts.max_iters.max(1) {
        let elog = dirichlet_expectation(&gamma);
        for (t, &(w, _)) in doc.terms().iter().enumerate() {
            for i in 0..k {
                phi[t][i] = elog[i] + params.log_beta[[i, w]];
            }
            softmax_in_place(&mut phi[t]);
        }
        let mut next = params.alpha.clone();
        for (t, &(_, c)) in doc.terms().iter().enumerate() {
            for i in 0..k {
                next[i] += c as f64 * phi[t][i];
            }
        }
        let change = relative_change(&next, &gamma);
        gamma = next;
        if change < opts.tol {
            break;
        }
    }
    let mut phi_bar = vec![0.0; k];
    let mut var = vec![0.0; k];
    for (t, &(_, c)) in doc.terms().iter().enumerate() {
        for i in 0..k {
            let p = phi[t][i];
            phi_bar[i] += c as f64 * p / n;
            var[i] += c as f64 * p * (1.0 - p) / (n * n);
        }
    }
    Ok(HeldoutPosterior {
        phi_bar,
        var,
        gamma,
        evidence: EvidenceKind::WordsOnly,
    })
}

/// One update of the pseudo-token's `φ` given `E[log θ]` and the linked
/// training documents' mean assignments.
pub fn pseudo_token_update(link: Option<&LinkParams>, elog_theta: &[f64], phi: &[f64], neighbors: &[&[f64]]) -> Vec<f64> {
    let mut out = elog_theta.to_vec();
    if let Some(link) = link {
        match link.kind {
            LinkKind::Gaussian => {
                let without = vec![0.0; out.len()];
                for other in neighbors {
                    add_grad_phi_gaussian(link, other, &without, 1.0, &mut out);
                }
            }
            kind => {
                for other in neighbors {
                    let x = link.nu + (0..out.len()).map(|i| link.eta[i] * phi[i] * other[i]).sum::<f64>();
                    let slope = log_probability_slope(kind, x);
                    for i in 0..out.len() {
                        out[i] += slope * link.eta[i] * other[i];
                    }
                }
            }
        }
    }
    softmax_in_place(&mut out);
    out
}

fn infer_from_links(
    params: &ModelParams,
    train: &TrainingPosterior,
    neighbors: &[usize],
    opts: &HeldoutOptions,
) -> Result<HeldoutPosterior> {
    if neighbors.is_empty() {
        return Err(RtmError::InvalidArgument("held-out document has no links".into()));
    }
    let d = train.phi_bar.nrows();
    if let Some(&bad) = neighbors.iter().find(|&&n| n >= d) {
        return Err(RtmError::InvalidArgument(format!("linked document {bad} outside training set of {d}")));
    }
    let k = params.num_topics();
    let rows: Vec<Vec<f64>> = neighbors.iter().map(|&n| train.phi_bar.row(n).to_vec()).collect();
    let views: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let mut gamma: Vec<f64> = params.alpha.iter().map(|a| a + 1.0 / k as f64).collect();
    let mut phi = vec![1.0 / k as f64; k];
    for _ in 0..opts.max_iters.max(1) {
        let elog = dirichlet_expectation(&gamma);
        phi = pseudo_token_update(params.link.as_ref(), &elog, &phi, &views);
        let next: Vec<f64> = params.alpha.iter().zip(&phi).map(|(a, p)| a + p).collect();
        let change = relative_change(&next, &gamma);
        gamma = next;
        if change < opts.tol {
            break;
        }
    }
    let var = phi.iter().map(|p| p * (1.0 - p)).collect();
    Ok(HeldoutPosterior {
        phi_bar: phi,
        var,
        gamma,
        evidence: EvidenceKind::LinksOnly,
    })
}

/// Predictive link probability between a held-out document and a training
/// document: `ψ` at the posterior means (exact for the exponential link);
/// the Gaussian link exponentiates its expected log, variances included.
pub fn predict_link_prob(link: &LinkParams, heldout: &HeldoutPosterior, train_phi_bar: &[f64], train_var: &[f64]) -> f64 {
    match link.kind {
        LinkKind::Gaussian => {
            expected_log_link_raw(link, &heldout.phi_bar, train_phi_bar, &heldout.var, train_var).exp()
        }
        kind => {
            let x = link.nu
                + (0..link.eta.len())
                    .map(|i| link.eta[i] * heldout.phi_bar[i] * train_phi_bar[i])
                    .sum::<f64>();
            probability_of_linear(kind, x)
        }
    }
}

/// `φᵀβ`: the predictive distribution of a word in the held-out document.
pub fn predict_word_dist(params: &ModelParams, heldout: &HeldoutPosterior) -> Vec<f64> {
    let v = params.vocab_size();
    let mut out = vec![0.0; v];
    for (i, &p) in heldout.phi_bar.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (w, o) in out.iter_mut().enumerate() {
            *o += p * params.log_beta[[i, w]].exp();
        }
    }
    out
}

/// A model that can score held-out documents.
pub trait HeldoutPredictor {
    /// Link scores against every training document, or `None` if the model
    /// has no link component.
    fn link_scores(&self, words: &Document) -> Result<Option<Vec<f64>>>;
    /// Distribution over the vocabulary given links to training documents.
    fn word_distribution(&self, neighbors: &[usize]) -> Result<Vec<f64>>;
}

/// Topic model with a trained posterior over its training documents.
#[derive(Debug, Clone)]
pub struct TopicPredictor {
    pub params: ModelParams,
    pub posterior: TrainingPosterior,
    /// Link parameters used only for word prediction; `None` makes
    /// links-only inference fall back to the prior.
    pub word_link: Option<LinkParams>,
    pub opts: HeldoutOptions,
}

impl TopicPredictor {
    pub fn new(params: ModelParams, posterior: TrainingPosterior) -> Self {
        let word_link = params.link.clone();
        TopicPredictor {
            params,
            posterior,
            word_link,
            opts: HeldoutOptions::default(),
        }
    }
}

impl HeldoutPredictor for TopicPredictor {
    fn link_scores(&self, words: &Document) -> Result<Option<Vec<f64>>> {
        let Some(link) = &self.params.link else {
            return Ok(None);
        };
        let held = infer_heldout(&self.params, &self.posterior, Evidence::Words(words), &self.opts)?;
        let scores = (0..self.posterior.phi_bar.nrows())
            .map(|d| {
                let pb = self.posterior.phi_bar.row(d);
                let var = self.posterior.var_bar.row(d);
                predict_link_prob(link, &held, pb.as_slice().unwrap(), var.as_slice().unwrap())
            })
            .collect();
        Ok(Some(scores))
    }

    fn word_distribution(&self, neighbors: &[usize]) -> Result<Vec<f64>> {
        let params = ModelParams {
            link: self.word_link.clone(),
            ..self.params.clone()
        };
        let held = infer_heldout(&params, &self.posterior, Evidence::Links(neighbors), &self.opts)?;
        Ok(predict_word_dist(&self.params, &held))
    }
}

/// Rank of each target under descending scores, with ties sharing the
/// average of the positions they span: `#greater + (#equal + 1)/2`.
pub fn average_ranks(scores: &[f64], targets: &[usize]) -> Vec<f64> {
    targets
        .iter()
        .map(|&t| {
            let s = scores[t];
            let greater = scores.iter().filter(|&&x| x > s).count();
            let equal = scores.iter().filter(|&&x| x == s).count();
            greater as f64 + (equal as f64 + 1.0) / 2.0
        })
        .collect()
}

/// Candidate indices by descending score, ties by index.
pub fn ranked_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub top_k: usize,
    /// Average word ranks over distinct terms instead of occurrences.
    pub distinct_terms: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            top_k: 20,
            distinct_terms: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocReport {
    /// Document id in the full corpus.
    pub doc_id: usize,
    pub num_links: usize,
    pub link_rank: Option<f64>,
    pub word_rank: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rows: Vec<DocReport>,
    pub mean_link_rank: Option<f64>,
    pub mean_word_rank: Option<f64>,
    pub precision_at_k: Option<f64>,
    pub top_k: usize,
    /// Test documents with no link into the training set.
    pub docs_without_links: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores every test document of a fold: link rank from its words, word
/// rank from its links, and precision of the top-k retrieved training
/// documents.
pub fn evaluate_fold(
    predictor: &dyn HeldoutPredictor,
    split: &FoldSplit,
    test_docs: &[Document],
    opts: &EvalOptions,
) -> Result<RankReport> {
    if test_docs.len() != split.test_ids.len() {
        return Err(RtmError::InvalidArgument("one document per test id is required".into()));
    }
    let mut rows = Vec::with_capacity(test_docs.len());
    for ((&doc_id, doc), links) in split.test_ids.iter().zip(test_docs).zip(&split.test_links) {
        let mut row = DocReport {
            doc_id,
            num_links: links.len(),
            link_rank: None,
            word_rank: None,
            precision: None,
        };
        if !links.is_empty() {
            if let Some(scores) = predictor.link_scores(doc)? {
                row.link_rank = mean(average_ranks(&scores, links).into_iter());
                let k = opts.top_k.min(scores.len());
                if k > 0 {
                    let hits = ranked_order(&scores)[..k].iter().filter(|d| links.contains(d)).count();
                    row.precision = Some(hits as f64 / k as f64);
                }
            }
            let dist = predictor.word_distribution(links)?;
            let terms = doc.terms();
            let targets: Vec<usize> = terms.iter().map(|&(w, _)| w).collect();
            let ranks = average_ranks(&dist, &targets);
            row.word_rank = if opts.distinct_terms {
                mean(ranks.into_iter())
            } else {
                let total: f64 = terms.iter().map(|&(_, c)| c as f64).sum();
                Some(ranks.iter().zip(terms).map(|(r, &(_, c))| r * c as f64).sum::<f64>() / total)
            };
        }
        rows.push(row);
    }
    Ok(RankReport {
        mean_link_rank: mean(rows.iter().filter_map(|r| r.link_rank)),
        mean_word_rank: mean(rows.iter().filter_map(|r| r.word_rank)),
        precision_at_k: mean(rows.iter().filter_map(|r| r.precision)),
        docs_without_links: rows.iter().filter(|r| r.num_links == 0).count(),
        top_k: opts.top_k,
        rows,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"))
}

impl RankReport {
    /// Tab-separated `doc_id metric value` rows, then a summary block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("doc_id\tmetric\tvalue\n");
        for r in &self.rows {
            for (name, v) in [
                ("link_rank", r.link_rank),
                ("word_rank", r.word_rank),
                ("precision_at_k", r.precision),
            ] {
                if let Some(v) = v {
                    out.push_str(&format!("{}\t{name}\t{v:.6}\n", r.doc_id));
                }
            }
        }
        out.push_str(&format!("summary\tmean_link_rank\t{}\n", fmt_opt(self.mean_link_rank)));
        out.push_str(&format!("summary\tmean_word_rank\t{}\n", fmt_opt(self.mean_word_rank)));
        out.push_str(&format!("summary\tprecision_at_{}\t{}\n", self.top_k, fmt_opt(self.precision_at_k)));
        out.push_str(&format!("summary\tdocs_without_links\t{}\n", self.docs_without_links));
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| RtmError::io(path, e))?;
        f.write_all(self.to_tsv().as_bytes()).map_err(|e| RtmError::io(path, e))
    }
}

/// True when two distributions agree within `tol` in every entry.
pub fn distributions_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && max_abs_diff(a, b) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn params(beta: Vec<Vec<f64>>, link: Option<LinkParams>) -> ModelParams {
        let k = beta.len();
        let v = beta[0].len();
        ModelParams {
            log_beta: Array2::from_shape_vec((k, v), beta.into_iter().flatten().map(f64::ln).collect()).unwrap(),
            alpha: vec![1.0 / k as f64; k],
            link,
        }
    }

    fn posterior(rows: Vec<Vec<f64>>) -> TrainingPosterior {
        let d = rows.len();
        let k = rows[0].len();
        let phi_bar = Array2::from_shape_vec((d, k), rows.into_iter().flatten().collect()).unwrap();
        TrainingPosterior {
            gamma: Array2::ones((d, k)),
            var_bar: Array2::zeros((d, k)),
            phi_bar,
        }
    }

    #[test]
    fn single_topic_words_posterior() {
        let p = params(vec![vec![0.2, 0.8]], None);
        let doc = Document::from_counts([(0, 2), (1, 1)]);
        let h = infer_heldout(&p, &posterior(vec![vec![1.0]]), Evidence::Words(&doc), &HeldoutOptions::default()).unwrap();
        assert_eq!(h.phi_bar, vec![1.0]);
        assert_eq!(h.evidence, EvidenceKind::WordsOnly);
    }

    #[test]
    fn empty_evidence_is_an_error() {
        let p = params(vec![vec![0.5, 0.5]], None);
        let post = posterior(vec![vec![1.0]]);
        let empty = Document::from_counts([]);
        assert!(infer_heldout(&p, &post, Evidence::Words(&empty), &HeldoutOptions::default()).is_err());
        assert!(infer_heldout(&p, &post, Evidence::Links(&[]), &HeldoutOptions::default()).is_err());
    }

    #[test]
    fn exponential_pseudo_token_example() {
        let link = LinkParams::new(LinkKind::Exponential, vec![1.0, 1.0], -2.0).unwrap();
        let phi = pseudo_token_update(Some(&link), &[-1.0, -1.0], &[0.5, 0.5], &[&[0.9, 0.1]]);
        assert!((phi[0] - 0.6900).abs() < 1e-4 && (phi[1] - 0.3100).abs() < 1e-4);
        let e = std::f64::consts::E;
        assert!((phi[0] - e.powf(0.9) / (e.powf(0.9) + e.powf(0.1))).abs() < 1e-15);
    }

    #[test]
    fn link_probability_examples() {
        let held = HeldoutPosterior {
            phi_bar: vec![0.5, 0.5],
            var: vec![0.0, 0.0],
            gamma: vec![1.0, 1.0],
            evidence: EvidenceKind::WordsOnly,
        };
        let s = LinkParams::new(LinkKind::Sigmoid, vec![4.0, 4.0], -2.0).unwrap();
        assert_eq!(predict_link_prob(&s, &held, &[0.5, 0.5], &[0.0, 0.0]), 0.5);
        let g = LinkParams::new(LinkKind::Gaussian, vec![3.0, 3.0], 0.0).unwrap();
        assert_eq!(predict_link_prob(&g, &held, &[0.5, 0.5], &[0.0, 0.0]), 1.0);
        let e = LinkParams::new(LinkKind::Exponential, vec![0.5, -1.0], -0.5).unwrap();
        let direct = expected_log_link_raw(&e, &held.phi_bar, &[0.3, 0.7], &held.var, &[0.0, 0.0]).exp();
        assert_eq!(predict_link_prob(&e, &held, &[0.3, 0.7], &[0.0, 0.0]), direct);
    }

    #[test]
    fn word_distribution_examples() {
        let p = params(vec![vec![0.2, 0.8], vec![0.6, 0.4]], None);
        let mut h = HeldoutPosterior {
            phi_bar: vec![0.0, 1.0],
            var: vec![0.0; 2],
            gamma: vec![1.0; 2],
            evidence: EvidenceKind::LinksOnly,
        };
        assert!(distributions_close(&predict_word_dist(&p, &h), &[0.6, 0.4], 1e-15));
        h.phi_bar = vec![0.5, 0.5];
        assert!(distributions_close(&predict_word_dist(&p, &h), &[0.4, 0.6], 1e-15));
    }

    #[test]
    fn tie_ranks_average() {
        let r = average_ranks(&[1.0, 1.0, 1.0, 1.0], &[0, 3]);
        assert_eq!(r, vec![2.5, 2.5]);
        assert_eq!(average_ranks(&[0.1, 0.9, 0.5], &[1, 2, 0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(ranked_order(&[0.5, 0.9, 0.5]), vec![1, 0, 2]);
    }
}
