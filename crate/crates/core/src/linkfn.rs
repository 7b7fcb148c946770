//! Link probability functions and their expectations under the mean-field
//! posterior.
//!
//! Three of the kinds (sigmoid, exponential, probit) depend on the two
//! documents only through `π̄ = φ̄_a ∘ φ̄_b`; their expected log-probability is
//! evaluated at `π̄` (exact for the exponential kind, a first-order
//! approximation otherwise). The Gaussian kind depends on the squared
//! difference of the mean assignments and its expectation is exact once the
//! per-document variances of `z̄` are included.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, RtmError};
use crate::math::{dot, log_normal_cdf, log_sigmoid, normal_cdf, probit_ratio, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkKind {
    Sigmoid,
    Exponential,
    Probit,
    Gaussian,
}

impl LinkKind {
    pub const ALL: [LinkKind; 4] = [
        LinkKind::Sigmoid,
        LinkKind::Exponential,
        LinkKind::Probit,
        LinkKind::Gaussian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::Sigmoid => "sigmoid",
            LinkKind::Exponential => "exponential",
            LinkKind::Probit => "probit",
            LinkKind::Gaussian => "gaussian",
        }
    }

    /// Kinds whose link term is a function of `η·π̄ + ν`.
    pub fn uses_product(self) -> bool {
        !matches!(self, LinkKind::Gaussian)
    }
}

impl fmt::Display for LinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LinkKind {
    type Err = RtmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(LinkKind::Sigmoid),
            "exponential" => Ok(LinkKind::Exponential),
            "probit" => Ok(LinkKind::Probit),
            "gaussian" => Ok(LinkKind::Gaussian),
            other => Err(RtmError::InvalidArgument(format!(
                "unknown link function {other:?} (expected sigmoid|exponential|probit|gaussian)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub kind: LinkKind,
    pub eta: Vec<f64>,
    pub nu: f64,
}

impl LinkParams {
    pub fn new(kind: LinkKind, eta: Vec<f64>, nu: f64) -> Result<Self> {
        let params = LinkParams { kind, eta, nu };
        params.validate()?;
        Ok(params)
    }

    /// `η = 0, ν = 0`: admissible for every kind and carries no information.
    pub fn neutral(kind: LinkKind, num_topics: usize) -> Self {
        LinkParams {
            kind,
            eta: vec![0.0; num_topics],
            nu: 0.0,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.eta.len()
    }

    /// Checks that the function stays a probability over the reachable domain.
    ///
    /// Exponential uses the sufficient condition `ν ≤ 0, η_i + ν ≤ 0`;
    /// Gaussian requires `η ≥ 0, ν ≥ 0`.
    pub fn validate(&self) -> Result<()> {
        if !self.nu.is_finite() || self.eta.iter().any(|e| !e.is_finite()) {
            return Err(RtmError::InadmissibleLink(
                "non-finite coefficients".into(),
            ));
        }
        match self.kind {
            LinkKind::Sigmoid | LinkKind::Probit => Ok(()),
            LinkKind::Exponential => {
                if self.nu > 0.0 {
                    return Err(RtmError::InadmissibleLink(format!(
                        "exponential link needs nu <= 0, got {}",
                        self.nu
                    )));
                }
                if let Some((i, e)) = self
                    .eta
                    .iter()
                    .enumerate()
                    .find(|(_, &e)| e + self.nu > 0.0)
                {
                    return Err(RtmError::InadmissibleLink(format!(
                        "exponential link needs eta_i + nu <= 0, got eta_{i} + nu = {}",
                        e + self.nu
                    )));
                }
                Ok(())
            }
            LinkKind::Gaussian => {
                if self.nu < 0.0 || self.eta.iter().any(|&e| e < 0.0) {
                    return Err(RtmError::InadmissibleLink(
                        "gaussian link needs eta >= 0 and nu >= 0".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// `η·π̄ + ν`.
    pub fn linear(&self, pi_bar: &[f64]) -> f64 {
        dot(&self.eta, pi_bar) + self.nu
    }
}

/// `ψ(y = 1 | z̄_a, z̄_b)`.
pub fn link_probability(params: &LinkParams, zbar_a: &[f64], zbar_b: &[f64]) -> Result<f64> {
    params.validate()?;
    check_len(params, zbar_a)?;
    check_len(params, zbar_b)?;
    let p = match params.kind {
        LinkKind::Gaussian => {
            let dist: f64 = params
                .eta
                .iter()
                .zip(zbar_a.iter().zip(zbar_b))
                .map(|(e, (a, b))| e * (a - b) * (a - b))
                .sum();
            (-dist - params.nu).exp()
        }
        kind => {
            let x: f64 = params
                .eta
                .iter()
                .zip(zbar_a.iter().zip(zbar_b))
                .map(|(e, (a, b))| e * a * b)
                .sum::<f64>()
                + params.nu;
            probability_of_linear(kind, x)
        }
    };
    Ok(p.clamp(0.0, 1.0))
}

/// `ψ` as a function of the linear predictor, for the product-based kinds.
pub fn probability_of_linear(kind: LinkKind, x: f64) -> f64 {
    match kind {
        LinkKind::Sigmoid => sigmoid(x),
        LinkKind::Probit => normal_cdf(x),
        LinkKind::Exponential => x.exp(),
        LinkKind::Gaussian => panic!("gaussian link is not a function of the linear predictor"),
    }
}

/// `log ψ` as a function of the linear predictor, for the product-based kinds.
pub fn log_probability_of_linear(kind: LinkKind, x: f64) -> f64 {
    match kind {
        LinkKind::Sigmoid => log_sigmoid(x),
        LinkKind::Probit => log_normal_cdf(x),
        LinkKind::Exponential => x,
        LinkKind::Gaussian => panic!("gaussian link is not a function of the linear predictor"),
    }
}

/// `d log ψ / dx` at the linear predictor `x`.
pub fn log_probability_slope(kind: LinkKind, x: f64) -> f64 {
    match kind {
        LinkKind::Sigmoid => 1.0 - sigmoid(x),
        LinkKind::Probit => probit_ratio(x),
        LinkKind::Exponential => 1.0,
        LinkKind::Gaussian => panic!("gaussian link is not a function of the linear predictor"),
    }
}

/// Posterior summary of a linked pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairStat {
    /// `φ̄_a ∘ φ̄_b`.
    pub pi_bar: Vec<f64>,
    /// Means and `Var(z̄)` of both endpoints; needed by the Gaussian kind.
    pub moments: Option<PairMoments>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairMoments {
    pub phi_bar: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl PairStat {
    pub fn from_means(phi_bar_a: &[f64], phi_bar_b: &[f64]) -> Self {
        PairStat {
            pi_bar: hadamard(phi_bar_a, phi_bar_b),
            moments: None,
        }
    }

    pub fn with_variances(
        phi_bar_a: &[f64],
        phi_bar_b: &[f64],
        var_a: &[f64],
        var_b: &[f64],
    ) -> Self {
        PairStat {
            pi_bar: hadamard(phi_bar_a, phi_bar_b),
            moments: Some(PairMoments {
                phi_bar: [phi_bar_a.to_vec(), phi_bar_b.to_vec()],
                var: [var_a.to_vec(), var_b.to_vec()],
            }),
        }
    }
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `E_q[log ψ]` for a linked pair.
///
/// Sigmoid and probit use the first-order approximation `log ψ(π̄)`;
/// exponential and Gaussian are exact.
pub fn expected_log_link(params: &LinkParams, pair: &PairStat) -> Result<f64> {
    check_len(params, &pair.pi_bar)?;
    match params.kind {
        LinkKind::Gaussian => {
            let m = pair.moments.as_ref().ok_or_else(|| {
                RtmError::InvalidArgument(
                    "gaussian link needs per-document means and variances".into(),
                )
            })?;
            Ok(gaussian_expected_log(
                params,
                &m.phi_bar[0],
                &m.phi_bar[1],
                &m.var[0],
                &m.var[1],
            ))
        }
        kind => Ok(log_probability_of_linear(kind, params.linear(&pair.pi_bar))),
    }
}

/// `-ν - Σ_i η_i ((a_i - b_i)² + Var_a,i + Var_b,i)`.
pub(crate) fn gaussian_expected_log(
    params: &LinkParams,
    phi_bar_a: &[f64],
    phi_bar_b: &[f64],
    var_a: &[f64],
    var_b: &[f64],
) -> f64 {
    let mut acc = 0.0;
    for i in 0..params.eta.len() {
        let diff = phi_bar_a[i] - phi_bar_b[i];
        acc += params.eta[i] * (diff * diff + var_a[i] + var_b[i]);
    }
    -params.nu - acc
}

/// Expected log link of a pair given its document means (and variances for
/// the Gaussian kind, ignored otherwise). Hot-path form of
/// [`expected_log_link`].
pub(crate) fn expected_log_link_raw(
    params: &LinkParams,
    phi_bar_a: &[f64],
    phi_bar_b: &[f64],
    var_a: &[f64],
    var_b: &[f64],
) -> f64 {
    match params.kind {
        LinkKind::Gaussian => gaussian_expected_log(params, phi_bar_a, phi_bar_b, var_a, var_b),
        kind => {
            let x: f64 = params
                .eta
                .iter()
                .zip(phi_bar_a.iter().zip(phi_bar_b))
                .map(|(e, (a, b))| e * a * b)
                .sum::<f64>()
                + params.nu;
            log_probability_of_linear(kind, x)
        }
    }
}

/// Gradient of the expected log link with respect to `π̄`.
pub fn grad_pi(params: &LinkParams, pi_bar: &[f64]) -> Result<Vec<f64>> {
    if params.kind == LinkKind::Gaussian {
        return Err(RtmError::InvalidArgument(
            "grad_pi is undefined for the gaussian link; use grad_phi_gaussian".into(),
        ));
    }
    check_len(params, pi_bar)?;
    let slope = log_probability_slope(params.kind, params.linear(pi_bar));
    Ok(params.eta.iter().map(|e| slope * e).collect())
}

/// Gradient of the Gaussian expected log link with respect to one token's
/// `φ_{d,n}`:
///
/// `(2/N_d) η ∘ (φ̄_{d'} - φ̄_{d,-n} - 1/(2 N_d))`
///
/// where `φ̄_{d,-n} = φ̄_d - φ_{d,n}/N_d`. The expectation is linear in
/// `φ_{d,n}`, so this is also the exact coefficient of the coordinate update.
pub fn grad_phi_gaussian(
    params: &LinkParams,
    phi_bar_other: &[f64],
    phi_bar_without_token: &[f64],
    doc_len: f64,
) -> Result<Vec<f64>> {
    if doc_len <= 0.0 {
        return Err(RtmError::InvalidArgument(
            "document length must be positive".into(),
        ));
    }
    check_len(params, phi_bar_other)?;
    check_len(params, phi_bar_without_token)?;
    let mut out = vec![0.0; params.eta.len()];
    add_grad_phi_gaussian(
        params,
        phi_bar_other,
        phi_bar_without_token,
        doc_len,
        &mut out,
    );
    Ok(out)
}

pub(crate) fn add_grad_phi_gaussian(
    params: &LinkParams,
    phi_bar_other: &[f64],
    phi_bar_without_token: &[f64],
    doc_len: f64,
    out: &mut [f64],
) {
    let scale = 2.0 / doc_len;
    let half_inv = 0.5 / doc_len;
    for i in 0..out.len() {
        out[i] += scale
            * params.eta[i]
            * (phi_bar_other[i] - phi_bar_without_token[i] - half_inv);
    }
}

fn check_len(params: &LinkParams, v: &[f64]) -> Result<()> {
    if v.len() != params.eta.len() {
        return Err(RtmError::InvalidArgument(format!(
            "expected a {}-vector, got length {}",
            params.eta.len(),
            v.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(kind: LinkKind, eta: &[f64], nu: f64) -> LinkParams {
        LinkParams::new(kind, eta.to_vec(), nu).unwrap()
    }

    #[test]
    fn probability_at_zero_predictor() {
        let z = [0.5, 0.5];
        let p = params(LinkKind::Sigmoid, &[0.0, 0.0], 0.0);
        assert_eq!(link_probability(&p, &z, &z).unwrap(), 0.5);
        let p = params(LinkKind::Exponential, &[0.0, 0.0], 0.0);
        assert_eq!(link_probability(&p, &z, &z).unwrap(), 1.0);
        let p = params(LinkKind::Gaussian, &[3.0, 1.0], 0.0);
        assert_eq!(link_probability(&p, &[0.2, 0.8], &[0.2, 0.8]).unwrap(), 1.0);
    }

    #[test]
    fn admissibility_is_enforced() {
        assert!(LinkParams::new(LinkKind::Exponential, vec![0.5, -1.0], -0.2).is_err());
        assert!(LinkParams::new(LinkKind::Exponential, vec![0.1], 0.1).is_err());
        assert!(LinkParams::new(LinkKind::Gaussian, vec![-0.1], 0.0).is_err());
        assert!(LinkParams::new(LinkKind::Gaussian, vec![1.0], -0.1).is_err());
        let bad = LinkParams {
            kind: LinkKind::Exponential,
            eta: vec![1.0],
            nu: 0.0,
        };
        assert!(link_probability(&bad, &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn expected_log_examples() {
        let pair = PairStat::from_means(&[0.3, 0.7], &[0.9, 0.1]);
        let p = params(LinkKind::Exponential, &[0.0, 0.0], -0.5);
        assert_eq!(expected_log_link(&p, &pair).unwrap(), -0.5);

        let p = params(LinkKind::Sigmoid, &[0.0, 0.0], 0.0);
        let v = expected_log_link(&p, &pair).unwrap();
        assert!((v + std::f64::consts::LN_2).abs() < 1e-12);

        // one token per document with φ = (0.5, 0.5): Var = 0.25 per component
        let pair = PairStat::with_variances(&[0.5, 0.5], &[0.5, 0.5], &[0.25, 0.25], &[0.25, 0.25]);
        let p = params(LinkKind::Gaussian, &[1.0, 1.0], 0.0);
        assert!((expected_log_link(&p, &pair).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_needs_moments() {
        let pair = PairStat::from_means(&[0.5, 0.5], &[0.5, 0.5]);
        let p = params(LinkKind::Gaussian, &[1.0, 1.0], 0.0);
        assert!(expected_log_link(&p, &pair).is_err());
    }

    #[test]
    fn grad_pi_examples() {
        // η·π̄ + ν = 0 with η = (2, -1): pick π̄ = (0.25, 0.5)
        let p = params(LinkKind::Sigmoid, &[2.0, -1.0], 0.0);
        let g = grad_pi(&p, &[0.25, 0.5]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);

        let p = params(LinkKind::Exponential, &[-2.0, -1.0], -0.5);
        assert_eq!(grad_pi(&p, &[0.3, 0.1]).unwrap(), vec![-2.0, -1.0]);
        let p = LinkParams {
            kind: LinkKind::Exponential,
            eta: vec![2.0, -1.0],
            nu: -3.0,
        };
        assert_eq!(grad_pi(&p, &[0.7, 0.1]).unwrap(), vec![2.0, -1.0]);

        let p = params(LinkKind::Probit, &[1.0, 0.0], 0.0);
        let g = grad_pi(&p, &[0.0, 0.3]).unwrap();
        assert!((g[0] - 0.797_884_56).abs() < 1e-8 && g[1] == 0.0);

        let p = params(LinkKind::Gaussian, &[1.0, 0.0], 0.0);
        assert!(grad_pi(&p, &[0.0, 0.3]).is_err());
    }

    #[test]
    fn grad_phi_gaussian_examples() {
        let zero = params(LinkKind::Gaussian, &[0.0, 0.0], 0.0);
        assert_eq!(
            grad_phi_gaussian(&zero, &[1.0, 0.0], &[0.0, 0.0], 3.0).unwrap(),
            vec![0.0, 0.0]
        );

        // N_d = 1, φ̄_{d,-n} = 0, φ̄_{d'} = (1, 0), η = (1, 1):
        // 2·(1 - 0 - 1/2, 0 - 0 - 1/2) = (1, -1)
        let p = params(LinkKind::Gaussian, &[1.0, 1.0], 0.0);
        let g = grad_phi_gaussian(&p, &[1.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(g, vec![1.0, -1.0]);

        let p2 = params(LinkKind::Gaussian, &[2.0, 2.0], 0.0);
        let g2 = grad_phi_gaussian(&p2, &[1.0, 0.0], &[0.0, 0.0], 1.0).unwrap();
        assert_eq!(g2, vec![2.0, -2.0]);

        assert!(grad_phi_gaussian(&p, &[1.0, 0.0], &[0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn kind_strings_round_trip() {
        for kind in LinkKind::ALL {
            assert_eq!(kind.as_str().parse::<LinkKind>().unwrap(), kind);
        }
        assert!("logit".parse::<LinkKind>().is_err());
    }
}
