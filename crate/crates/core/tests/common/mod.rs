//! Shared test helpers: random simplex points and Monte Carlo sampling of
//! mean topic assignments.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rtm::linkfn::{LinkKind, LinkParams};

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// A document's variational factors: groups of tokens sharing one `φ`.
pub struct DocFactors {
    pub groups: Vec<(u64, Vec<f64>)>,
}

impl DocFactors {
    pub fn random(rng: &mut ChaCha8Rng, k: usize, num_groups: usize, tokens: u64) -> Self {
        let base = tokens / num_groups as u64;
        let groups = (0..num_groups)
            .map(|g| {
                let c = if g == 0 { tokens - base * (num_groups as u64 - 1) } else { base };
                (c, random_simplex(rng, k))
            })
            .collect();
        DocFactors { groups }
    }

    pub fn len(&self) -> f64 {
        self.groups.iter().map(|g| g.0).sum::<u64>() as f64
    }

    pub fn mean(&self) -> Vec<f64> {
        let k = self.groups[0].1.len();
        let n = self.len();
        (0..k).map(|i| self.groups.iter().map(|(c, p)| *c as f64 * p[i]).sum::<f64>() / n).collect()
    }

    pub fn var(&self) -> Vec<f64> {
        let k = self.groups[0].1.len();
        let n = self.len();
        (0..k)
            .map(|i| self.groups.iter().map(|(c, p)| *c as f64 * p[i] * (1.0 - p[i])).sum::<f64>() / (n * n))
            .collect()
    }

    /// One draw of the mean topic assignment.
    pub fn sample_mean(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let k = self.groups[0].1.len();
        let mut counts = vec![0u64; k];
        for (c, p) in &self.groups {
            let mut remaining = *c;
            let mut rest = 1.0;
            for i in 0..k - 1 {
                if remaining == 0 {
                    break;
                }
                let q = if rest > 0.0 { (p[i] / rest).clamp(0.0, 1.0) } else { 0.0 };
                let x = Binomial::new(remaining, q).unwrap().sample(rng);
                counts[i] += x;
                remaining -= x;
                rest -= p[i];
            }
            counts[k - 1] += remaining;
        }
        let n = self.len();
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

/// Log link value written out from the link definitions.
pub fn log_link_value(link: &LinkParams, a: &[f64], b: &[f64]) -> f64 {
    match link.kind {
        LinkKind::Gaussian => {
            -link.nu - (0..a.len()).map(|i| link.eta[i] * (a[i] - b[i]).powi(2)).sum::<f64>()
        }
        kind => {
            let x = link.nu + (0..a.len()).map(|i| link.eta[i] * a[i] * b[i]).sum::<f64>();
            match kind {
                LinkKind::Sigmoid => -(1.0 + (-x).exp()).ln(),
                LinkKind::Exponential => x,
                LinkKind::Probit => (0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)).ln(),
                LinkKind::Gaussian => unreachable!(),
            }
        }
    }
}

/// Random admissible link parameters of the given kind.
pub fn random_link(rng: &mut ChaCha8Rng, kind: LinkKind, k: usize) -> LinkParams {
    let (eta, nu) = match kind {
        LinkKind::Exponential => {
            let nu = -2.0 * rng.random::<f64>();
            ((0..k).map(|_| -nu * rng.random::<f64>() - rng.random::<f64>()).collect(), nu)
        }
        LinkKind::Gaussian => ((0..k).map(|_| 5.0 * rng.random::<f64>()).collect(), rng.random::<f64>()),
        _ => ((0..k).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect(), 3.0 * rng.random::<f64>() - 2.0),
    };
    LinkParams::new(kind, eta, nu).unwrap()
}
