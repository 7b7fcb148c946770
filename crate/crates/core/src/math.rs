//! Scalar special functions and small vector helpers shared by the model code.

use statrs::function::erf::erfc;
pub use statrs::function::gamma::{digamma, ln_gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this argument the normal CDF is evaluated through the Mills ratio.
const PROBIT_TAIL: f64 = -8.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x)` without overflow for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Mills ratio `R(t) = (1 - Φ(t)) / φ(t)` for `t >= 8`, by backward
/// evaluation of its continued fraction.
fn mills_ratio(t: f64) -> f64 {
    let mut acc = t;
    for k in (1..=60).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// `log Φ(x)`, accurate deep into the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x < PROBIT_TAIL {
        -0.5 * x * x - LN_SQRT_2PI + mills_ratio(-x).ln()
    } else {
        normal_cdf(x).ln()
    }
}

/// `Φ'(x) / Φ(x)`, the inverse Mills ratio.
pub fn probit_ratio(x: f64) -> f64 {
    if x < PROBIT_TAIL {
        1.0 / mills_ratio(-x)
    } else {
        normal_pdf(x) / normal_cdf(x)
    }
}

/// `E[log θ]` under `Dir(gamma)`.
pub fn dirichlet_expectation(gamma: &[f64]) -> Vec<f64> {
    let total = digamma(gamma.iter().sum());
    gamma.iter().map(|&g| digamma(g) - total).collect()
}

/// `log Γ(Σ a) - Σ log Γ(a_k)`.
pub fn ln_dirichlet_norm(a: &[f64]) -> f64 {
    ln_gamma(a.iter().sum()) - a.iter().map(|&x| ln_gamma(x)).sum::<f64>()
}

/// Replaces `v` by `softmax(v)` in place, subtracting the max exponent first.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ p log p`, with `0 log 0 = 0`.
pub fn neg_entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sigmoid_matches_naive_in_safe_range() {
        for &x in &[-30.0, -2.0, 0.0, 0.5, 7.0, 30.0] {
            let naive = (1.0 / (1.0 + f64::exp(-x))).ln();
            assert!((log_sigmoid(x) - naive).abs() < 1e-12, "x = {x}");
        }
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(log_sigmoid(800.0), 0.0);
    }

    #[test]
    fn probit_tail_branch_is_continuous() {
        let x = PROBIT_TAIL;
        let tail = -0.5 * x * x - LN_SQRT_2PI + mills_ratio(-x).ln();
        assert!((tail - normal_cdf(x).ln()).abs() < 1e-10);
        let tail_ratio = 1.0 / mills_ratio(-x);
        let direct = normal_pdf(x) / normal_cdf(x);
        assert!((tail_ratio - direct).abs() / direct < 1e-10);
        // deep tail stays finite and approaches -x
        let r = probit_ratio(-200.0);
        assert!(r.is_finite() && (r - 200.0).abs() < 0.01);
        assert!(log_normal_cdf(-200.0).is_finite());
    }

    #[test]
    fn probit_ratio_at_zero() {
        assert!((probit_ratio(0.0) - 0.797_884_560_802_865_4).abs() < 1e-12);
    }

    #[test]
    fn softmax_survives_huge_exponents() {
        let mut v = vec![1000.0, 1000.0, -1000.0];
        softmax_in_place(&mut v);
        assert!((v[0] - 0.5).abs() < 1e-15 && v[2] == 0.0);
    }

    #[test]
    fn dirichlet_expectation_uniform() {
        // E[log θ_1] for Dir(1,1) is ψ(1) - ψ(2) = -1
        let e = dirichlet_expectation(&[1.0, 1.0]);
        assert!((e[0] + 1.0).abs() < 1e-12);
    }
}
