//! Document-network corpora: loading, writing, fold splits and synthetic
//! generation.
//!
//! File formats:
//!
//! * documents: one line per document, `M term:count [term:count ...]` with
//!   `M` the number of `term:count` entries on the line and 0-based term ids;
//! * vocabulary: one token per line, the token on line `i` has id `i`;
//! * links: one whitespace-separated `d1 d2` pair per line, 0-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Gamma};

use crate::error::{Result, RtmError};
use crate::linkfn::{link_probability, LinkParams};

/// A bag of words: distinct `(term_id, count)` entries sorted by term id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Document {
    terms: Vec<(usize, u32)>,
}

impl Document {
    /// Builds a document from possibly repeated entries; repeats are summed
    /// and zero counts dropped.
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(entries: I) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (term, count) in entries {
            if count > 0 {
                *merged.entry(term).or_insert(0) += count;
            }
        }
        Document {
            terms: merged.into_iter().collect(),
        }
    }

    pub fn from_tokens<I: IntoIterator<Item = usize>>(tokens: I) -> Self {
        Document::from_counts(tokens.into_iter().map(|t| (t, 1)))
    }

    pub fn terms(&self) -> &[(usize, u32)] {
        &self.terms
    }

    /// Total token count `N_d`.
    pub fn len(&self) -> u64 {
        self.terms.iter().map(|&(_, c)| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_distinct(&self) -> usize {
        self.terms.len()
    }
}

/// Documents over a shared vocabulary plus an undirected link set.
///
/// Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    vocab: Vec<String>,
    docs: Vec<Document>,
    /// Unordered pairs stored as `(a, b)` with `a < b`, sorted.
    links: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Corpus {
    /// Validates and builds a corpus. Links are deduplicated across
    /// orientation.
    pub fn new(vocab: Vec<String>, docs: Vec<Document>, links: Vec<(usize, usize)>) -> Result<Self> {
        let v = vocab.len();
        for (d, doc) in docs.iter().enumerate() {
            if doc.is_empty() {
                return Err(RtmError::InvalidCorpus(format!("document {d} has no tokens")));
            }
            if let Some(&(term, _)) = doc.terms.iter().find(|&&(t, _)| t >= v) {
                return Err(RtmError::InvalidCorpus(format!(
                    "document {d}: term id {term} out of range for vocabulary of size {v}"
                )));
            }
        }
        let n = docs.len();
        let mut set = BTreeSet::new();
        for (a, b) in links {
            if a >= n || b >= n {
                return Err(RtmError::InvalidCorpus(format!(
                    "link ({a}, {b}) references a document outside 0..{n}"
                )));
            }
            if a == b {
                return Err(RtmError::InvalidCorpus(format!("self-link on document {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let links: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in &links {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Corpus {
            vocab,
            docs,
            links,
            neighbors,
        })
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, d: usize) -> &Document {
        &self.docs[d]
    }

    pub fn links(&self) -> &[(usize, usize)] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn neighbors(&self, d: usize) -> &[usize] {
        &self.neighbors[d]
    }

    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().map(Document::len).sum()
    }

    pub fn isolated_docs(&self) -> Vec<usize> {
        (0..self.num_docs())
            .filter(|&d| self.neighbors[d].is_empty())
            .collect()
    }

    /// The same documents with every link removed.
    pub fn without_links(&self) -> Corpus {
        Corpus {
            vocab: self.vocab.clone(),
            docs: self.docs.clone(),
            links: Vec::new(),
            neighbors: vec![Vec::new(); self.docs.len()],
        }
    }

    /// Induced sub-corpus on `ids` (in the given order); only links with both
    /// endpoints kept survive, re-indexed to positions in `ids`.
    pub fn subset(&self, ids: &[usize]) -> Corpus {
        let mut position = vec![usize::MAX; self.num_docs()];
        for (i, &d) in ids.iter().enumerate() {
            position[d] = i;
        }
        let docs = ids.iter().map(|&d| self.docs[d].clone()).collect();
        let links = self
            .links
            .iter()
            .filter(|&&(a, b)| position[a] != usize::MAX && position[b] != usize::MAX)
            .map(|&(a, b)| (position[a], position[b]))
            .collect();
        Corpus::new(self.vocab.clone(), docs, links).expect("subset of a valid corpus is valid")
    }

    /// Removes documents without links. Returns the reduced corpus and the
    /// original index of every kept document.
    pub fn drop_isolated(&self) -> (Corpus, Vec<usize>) {
        let kept: Vec<usize> = (0..self.num_docs())
            .filter(|&d| !self.neighbors[d].is_empty())
            .collect();
        (self.subset(&kept), kept)
    }
}

/// Reads a corpus from the three text files.
pub fn load_corpus(docs_path: &Path, vocab_path: &Path, links_path: &Path) -> Result<Corpus> {
    let vocab = read_vocab(vocab_path)?;
    let docs = read_docs(docs_path, vocab.len())?;
    let links = read_links(links_path, docs.len())?;
    let corpus = Corpus::new(vocab, docs, links)?;
    let isolated = corpus.isolated_docs().len();
    if isolated > 0 {
        warn!(
            "{isolated} of {} documents have no links (use --drop-isolated to remove them)",
            corpus.num_docs()
        );
    }
    Ok(corpus)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| RtmError::io(path, e))
}

pub fn read_vocab(path: &Path) -> Result<Vec<String>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let token = line.trim();
            if token.is_empty() {
                Err(RtmError::parse(path, i + 1, "empty vocabulary token"))
            } else {
                Ok(token.to_string())
            }
        })
        .collect()
}

/// Parses a documents file; `vocab_size` bounds the term ids.
pub fn read_docs(path: &Path, vocab_size: usize) -> Result<Vec<Document>> {
    let text = read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| parse_doc_line(line, vocab_size).map_err(|msg| RtmError::parse(path, i + 1, msg)))
        .collect()
}

/// Parses one `M term:count ...` line.
pub fn parse_doc_line(line: &str, vocab_size: usize) -> std::result::Result<Document, String> {
    let mut fields = line.split_whitespace();
    let declared: usize = match fields.next() {
        None => return Err("empty line (zero-length document)".into()),
        Some(m) => m
            .parse()
            .map_err(|_| format!("expected entry count, found {m:?}"))?,
    };
    let mut entries = Vec::with_capacity(declared);
    for field in fields {
        let (term, count) = field
            .split_once(':')
            .ok_or_else(|| format!("expected term:count, found {field:?}"))?;
        let term: usize = term
            .parse()
            .map_err(|_| format!("bad term id in {field:?}"))?;
        let count: u32 = count
            .parse()
            .map_err(|_| format!("bad count in {field:?}"))?;
        if term >= vocab_size {
            return Err(format!(
                "term id {term} out of range for vocabulary of size {vocab_size}"
            ));
        }
        if count == 0 {
            return Err(format!("zero count in {field:?}"));
        }
        entries.push((term, count));
    }
    if entries.len() != declared {
        return Err(format!(
            "line declares {declared} entries but has {}",
            entries.len()
        ));
    }
    if entries.is_empty() {
        return Err("zero-length document".into());
    }
    Ok(Document::from_counts(entries))
}

pub fn read_links(path: &Path, num_docs: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut links = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let err = |msg: String| RtmError::parse(path, i + 1, msg);
        if fields.len() != 2 {
            return Err(err(format!("expected two document ids, found {}", fields.len())));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("bad document id {s:?}")))
        };
        let (a, b) = (parse(fields[0])?, parse(fields[1])?);
        if a >= num_docs || b >= num_docs {
            return Err(err(format!(
                "document id out of range for {num_docs} documents"
            )));
        }
        if a == b {
            return Err(err(format!("self-link on document {a}")));
        }
        links.push((a, b));
    }
    Ok(links)
}

/// Writes the corpus in the same formats `load_corpus` reads.
pub fn write_corpus(corpus: &Corpus, docs_path: &Path, vocab_path: &Path, links_path: &Path) -> Result<()> {
    write_with(docs_path, |w| {
        for doc in corpus.docs() {
            write!(w, "{}", doc.num_distinct())?;
            for &(t, c) in doc.terms() {
                write!(w, " {t}:{c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_with(vocab_path, |w| {
        for token in corpus.vocab() {
            writeln!(w, "{token}")?;
        }
        Ok(())
    })?;
    write_with(links_path, |w| {
        for &(a, b) in corpus.links() {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    })
}

fn write_with<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(|e| RtmError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| RtmError::io(path, e))
}

/// Assignment of every document to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    num_folds: usize,
    seed: u64,
}

/// One fold's train/test view of a corpus.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    /// Training corpus: test documents removed along with their links.
    pub train: Corpus,
    /// Original ids of the training documents, by train-corpus index.
    pub train_ids: Vec<usize>,
    /// Original ids of the held-out documents.
    pub test_ids: Vec<usize>,
    /// For each held-out document, its links into the training set as
    /// train-corpus indices.
    pub test_links: Vec<Vec<usize>>,
}

/// Uniform random assignment into `k` folds of near-equal size.
pub fn split_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    let n = corpus.num_docs();
    if k < 2 || k > n {
        return Err(RtmError::InvalidArgument(format!(
            "fold count must be in 2..={n}, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignments = vec![0; n];
    for (pos, &d) in order.iter().enumerate() {
        assignments[d] = pos % k;
    }
    Ok(FoldPlan {
        assignments,
        num_folds: k,
        seed,
    })
}

impl FoldPlan {
    pub fn num_folds(&self) -> usize {
        self.num_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, d: usize) -> usize {
        self.assignments[d]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn test_docs(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&d| self.assignments[d] == fold)
            .collect()
    }

    pub fn split(&self, corpus: &Corpus, fold: usize) -> FoldSplit {
        let test_ids = self.test_docs(fold);
        let train_ids: Vec<usize> = (0..corpus.num_docs())
            .filter(|&d| self.assignments[d] != fold)
            .collect();
        let mut position = vec![usize::MAX; corpus.num_docs()];
        for (i, &d) in train_ids.iter().enumerate() {
            position[d] = i;
        }
        let test_links = test_ids
            .iter()
            .map(|&d| {
                corpus
                    .neighbors(d)
                    .iter()
                    .filter(|&&n| position[n] != usize::MAX)
                    .map(|&n| position[n])
                    .collect()
            })
            .collect();
        FoldSplit {
            train: corpus.subset(&train_ids),
            train_ids,
            test_ids,
            test_links,
        }
    }
}

/// One Bernoulli link draw with success probability `ψ(z̄_a, z̄_b)`.
pub fn sample_link<R: Rng + ?Sized>(link: &LinkParams, zbar_a: &[f64], zbar_b: &[f64], rng: &mut R) -> Result<bool> {
    let p = link_probability(link, zbar_a, zbar_b)?;
    Ok(rng.random::<f64>() < p)
}

/// How synthetic topics are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum TopicSpec {
    /// Explicit `K × V` row-stochastic matrix.
    Given(Vec<Vec<f64>>),
    /// Topic `k` is uniform on the `k`-th contiguous block of `V/K` terms,
    /// mixed with weight `noise` into the uniform distribution on all terms.
    Blocks { noise: f64 },
    /// Each topic drawn from a symmetric Dirichlet.
    Dirichlet { concentration: f64 },
}

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub num_docs: usize,
    pub doc_length: usize,
    pub alpha: Vec<f64>,
    pub topics: TopicSpec,
    pub link: LinkParams,
    pub seed: u64,
}

/// Parameters and latent draws behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub beta: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub link: LinkParams,
    pub theta: Vec<Vec<f64>>,
    pub zbar: Vec<Vec<f64>>,
}

/// Samples a corpus from the generative process: `θ_d ~ Dir(α)`, tokens
/// `z ~ Mult(θ_d)`, `w ~ Mult(β_z)`, then one Bernoulli link draw per
/// unordered pair from `ψ(z̄_d, z̄_d')`. Only pairs with `y = 1` are kept.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Corpus, SyntheticTruth)> {
    let k = config.num_topics;
    let v = config.vocab_size;
    if k == 0 || v == 0 || config.doc_length == 0 {
        return Err(RtmError::InvalidArgument(
            "topics, vocabulary size and document length must be positive".into(),
        ));
    }
    if config.alpha.len() != k || config.alpha.iter().any(|&a| !(a > 0.0)) {
        return Err(RtmError::InvalidArgument(format!(
            "alpha must be {k} positive values"
        )));
    }
    if config.link.num_topics() != k {
        return Err(RtmError::InvalidArgument(format!(
            "link coefficients must have length {k}"
        )));
    }
    config.link.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let beta = draw_topics(&config.topics, k, v, &mut rng)?;
    let topic_samplers: Vec<WeightedIndex<f64>> = beta
        .iter()
        .map(|row| WeightedIndex::new(row).expect("topic rows are valid weights"))
        .collect();

    let gammas: Vec<Gamma<f64>> = config
        .alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape"))
        .collect();

    let mut docs = Vec::with_capacity(config.num_docs);
    let mut theta = Vec::with_capacity(config.num_docs);
    let mut zbar = Vec::with_capacity(config.num_docs);
    for _ in 0..config.num_docs {
        let th = draw_dirichlet(&gammas, &config.alpha, &mut rng);
        let assign = WeightedIndex::new(&th).expect("θ is a valid weight vector");
        let mut z_counts = vec![0usize; k];
        let mut tokens = Vec::with_capacity(config.doc_length);
        for _ in 0..config.doc_length {
            let z = assign.sample(&mut rng);
            z_counts[z] += 1;
            tokens.push(topic_samplers[z].sample(&mut rng));
        }
        docs.push(Document::from_tokens(tokens));
        zbar.push(
            z_counts
                .iter()
                .map(|&c| c as f64 / config.doc_length as f64)
                .collect::<Vec<_>>(),
        );
        theta.push(th);
    }

    let mut links = Vec::new();
    for a in 0..config.num_docs {
        for b in (a + 1)..config.num_docs {
            if sample_link(&config.link, &zbar[a], &zbar[b], &mut rng)? {
                links.push((a, b));
            }
        }
    }

    let vocab = (0..v).map(|i| format!("w{i}")).collect();
    let corpus = Corpus::new(vocab, docs, links)?;
    Ok((
        corpus,
        SyntheticTruth {
            beta,
            alpha: config.alpha.clone(),
            link: config.link.clone(),
            theta,
            zbar,
        },
    ))
}

fn draw_topics(spec: &TopicSpec, k: usize, v: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    match spec {
        TopicSpec::Given(beta) => {
            if beta.len() != k || beta.iter().any(|row| row.len() != v) {
                return Err(RtmError::InvalidArgument(format!("topics must be {k}×{v}")));
            }
            for row in beta {
                let s: f64 = row.iter().sum();
                if row.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > 1e-9 {
                    return Err(RtmError::InvalidArgument(
                        "topic rows must be probability vectors".into(),
                    ));
                }
            }
            Ok(beta.clone())
        }
        TopicSpec::Blocks { noise } => {
            if !(0.0..=1.0).contains(noise) || v < k {
                return Err(RtmError::InvalidArgument(
                    "block topics need 0 <= noise <= 1 and V >= K".into(),
                ));
            }
            let block = v / k;
            Ok((0..k)
                .map(|t| {
                    let lo = t * block;
                    let hi = if t + 1 == k { v } else { lo + block };
                    (0..v)
                        .map(|w| {
                            let inside = if (lo..hi).contains(&w) {
                                1.0 / (hi - lo) as f64
                            } else {
                                0.0
                            };
                            (1.0 - noise) * inside + noise / v as f64
                        })
                        .collect()
                })
                .collect())
        }
        TopicSpec::Dirichlet { concentration } => {
            if !(*concentration > 0.0) {
                return Err(RtmError::InvalidArgument(
                    "topic concentration must be positive".into(),
                ));
            }
            let conc = vec![*concentration; v];
            let g = Gamma::new(*concentration, 1.0).expect("positive shape");
            let gammas = vec![g; v];
            Ok((0..k).map(|_| draw_dirichlet(&gammas, &conc, rng)).collect())
        }
    }
}

/// Normalized Gamma draws; if every draw underflows, the mass goes to the
/// component with the largest parameter.
fn draw_dirichlet(gammas: &[Gamma<f64>], params: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter().map(|x| x / total).collect()
    } else {
        let best = params
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        (0..params.len()).map(|i| if i == best { 1.0 } else { 0.0 }).collect()
    }
}
