use proptest::prelude::*;

use rtm::corpus::{load_corpus, split_folds, write_corpus, Corpus, Document};
use rtm::estimation::{fit_link_exponential, update_beta, SufficientStats};
use rtm::inference::{elbo, init_state, run_e_step, EStepOptions, ModelParams};
use rtm::linkfn::{grad_pi, link_probability, probability_of_linear, LinkKind, LinkParams};
use rtm::math::softmax_in_place;
use rtm::prediction::{average_ranks, predict_word_dist, HeldoutPosterior};

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, k).prop_map(|mut v| {
        softmax_in_place(&mut v);
        v
    })
}

fn kind() -> impl Strategy<Value = LinkKind> {
    prop::sample::select(LinkKind::ALL.to_vec())
}

fn admissible_link(kind: LinkKind, k: usize) -> impl Strategy<Value = LinkParams> {
    (prop::collection::vec(-4.0f64..4.0, k), -4.0f64..2.0).prop_map(move |(mut eta, mut nu)| {
        match kind {
            LinkKind::Exponential => {
                eta.iter_mut().for_each(|e| *e = e.abs());
                let top = eta.iter().cloned().fold(0.0, f64::max);
                nu = -top - nu.abs();
            }
            LinkKind::Gaussian => {
                eta.iter_mut().for_each(|e| *e = e.abs() + 0.01);
                nu = nu.abs();
            }
            _ => {}
        }
        LinkParams::new(kind, eta, nu).unwrap()
    })
}

/// Small corpora with random links; every document has at least one token.
fn small_corpus() -> impl Strategy<Value = Corpus> {
    (2usize..6, 2usize..6).prop_flat_map(|(d, v)| {
        let doc = prop::collection::vec((0..v, 1u32..4), 1..5);
        (
            prop::collection::vec(doc, d),
            prop::collection::vec((0..d, 0..d), 0..6),
            Just(v),
        )
            .prop_map(|(docs, links, v)| {
                let links = links.into_iter().filter(|(a, b)| a != b).collect();
                let docs = docs.into_iter().map(|t| Document::from_counts(t)).collect();
                Corpus::new((0..v).map(|i| format!("t{i}")).collect(), docs, links).unwrap()
            })
    })
}

fn params_for(c: &Corpus, k: usize, link: Option<LinkParams>, seed: u64) -> ModelParams {
    let v = c.vocab_size();
    let mut logits: Vec<f64> = (0..k * v).map(|i| ((i as u64 * 2654435761 + seed) % 97) as f64 / 40.0).collect();
    for row in logits.chunks_mut(v) {
        softmax_in_place(row);
        row.iter_mut().for_each(|x| *x = x.ln());
    }
    ModelParams {
        log_beta: ndarray::Array2::from_shape_vec((k, v), logits).unwrap(),
        alpha: vec![0.5; k],
        link,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn link_probability_is_a_probability(link in kind().prop_flat_map(|k| admissible_link(k, 3)), a in simplex(3), b in simplex(3)) {
        let p = link_probability(&link, &a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn product_links_increase_with_the_linear_predictor(
        kind in prop::sample::select(vec![LinkKind::Sigmoid, LinkKind::Probit, LinkKind::Exponential]),
        x in -20.0f64..0.0,
        step in 1e-3f64..5.0,
    ) {
        prop_assert!(probability_of_linear(kind, x) <= probability_of_linear(kind, x + step));
    }

    #[test]
    fn grad_pi_matches_finite_differences(
        link in prop::sample::select(vec![LinkKind::Sigmoid, LinkKind::Probit, LinkKind::Exponential])
            .prop_flat_map(|k| admissible_link(k, 3)),
        pi in prop::collection::vec(0.0f64..0.5, 3),
    ) {
        let kind = link.kind;
        let g = grad_pi(&link, &pi).unwrap();
        let f = |p: &[f64]| probability_of_linear(kind, link.linear(p)).ln();
        for i in 0..3 {
            let h = 1e-6;
            let mut up = pi.clone();
            let mut down = pi.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn e_step_keeps_distributions_valid(c in small_corpus(), link in kind().prop_flat_map(|k| admissible_link(k, 2)), seed in 0u64..50) {
        let params = params_for(&c, 2, Some(link), seed);
        let mut state = init_state(&c, 2, &params.alpha, seed).unwrap();
        let report = run_e_step(&c, &params, &mut state, &EStepOptions::default()).unwrap();
        prop_assert!(state.gamma.iter().all(|&g| g > 0.0));
        for phi in &state.phi {
            for row in phi.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-9);
                prop_assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
        let parts = elbo(&c, &params, &state);
        let sum = parts.link_term + parts.z_given_theta_term + parts.word_term + parts.theta_prior_term + parts.entropy_term;
        prop_assert!((sum - parts.total).abs() < 1e-9 * (1.0 + sum.abs()));
        prop_assert!((report.final_elbo() - parts.total).abs() < 1e-9 * (1.0 + sum.abs()));
    }

    #[test]
    fn e_step_sweeps_never_decrease_the_bound(c in small_corpus(), seed in 0u64..50, exp in any::<bool>()) {
        let link = if exp {
            Some(LinkParams::new(LinkKind::Exponential, vec![1.0, 2.0], -2.5).unwrap())
        } else {
            None
        };
        let params = params_for(&c, 2, link, seed);
        let mut state = init_state(&c, 2, &params.alpha, seed).unwrap();
        let report = run_e_step(&c, &params, &mut state, &EStepOptions::default()).unwrap();
        let mut prev = report.initial;
        for &v in &report.trace {
            prop_assert!(v >= prev - 1e-9 * (1.0 + prev.abs()), "{} then {}", prev, v);
            prev = v;
        }
    }

    #[test]
    fn exponential_fit_is_admissible(c in small_corpus(), seed in 0u64..50) {
        prop_assume!(c.num_links() > 0);
        let params = params_for(&c, 3, None, seed);
        let mut state = init_state(&c, 3, &params.alpha, seed).unwrap();
        run_e_step(&c, &params, &mut state, &EStepOptions::default()).unwrap();
        let stats = SufficientStats::from_state(&c, &state, &params.alpha);
        let link = fit_link_exponential(&stats, c.num_links() as f64).unwrap();
        prop_assert!(link.nu < 0.0);
        prop_assert!(link.eta.iter().all(|&e| e + link.nu <= 0.0), "{:?}", link);
    }

    #[test]
    fn beta_update_is_row_stochastic(c in small_corpus(), smoothing in 1e-4f64..1.0, seed in 0u64..50) {
        let state = init_state(&c, 3, &[0.5; 3], seed).unwrap();
        let beta = update_beta(&c, &state, smoothing);
        for row in beta.rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&x| x > 0.0));
        }
    }

    #[test]
    fn ranks_survive_monotone_transforms(scores in prop::collection::vec(-5.0f64..5.0, 1..12), shift in -3.0f64..3.0) {
        let targets: Vec<usize> = (0..scores.len()).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| s * 8.0 - shift.floor()).collect();
        prop_assert_eq!(average_ranks(&scores, &targets), average_ranks(&transformed, &targets));
        let total: f64 = average_ranks(&scores, &targets).iter().sum();
        let n = scores.len() as f64;
        prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn word_distribution_sums_to_one(phi in simplex(3), c in small_corpus(), seed in 0u64..50) {
        let params = params_for(&c, 3, None, seed);
        let heldout = HeldoutPosterior { phi_bar: phi.clone(), var: vec![0.0; 3], gamma: phi, evidence: rtm::prediction::EvidenceKind::LinksOnly };
        let dist = predict_word_dist(&params, &heldout);
        prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folds_partition_and_balance(c in small_corpus(), k in 2usize..6, seed in 0u64..100) {
        prop_assume!(k <= c.num_docs());
        let plan = split_folds(&c, k, seed).unwrap();
        let mut seen = vec![0; c.num_docs()];
        let mut sizes = Vec::new();
        for f in 0..k {
            let docs = plan.test_docs(f);
            sizes.push(docs.len());
            for d in docs {
                seen[d] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn corpus_round_trips_through_files(c in small_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let (docs, vocab, links) = (dir.path().join("d"), dir.path().join("v"), dir.path().join("l"));
        write_corpus(&c, &docs, &vocab, &links).unwrap();
        let back = load_corpus(&docs, &vocab, &links).unwrap();
        prop_assert_eq!(back.vocab(), c.vocab());
        prop_assert_eq!(back.docs(), c.docs());
        prop_assert_eq!(back.links(), c.links());
    }
}
