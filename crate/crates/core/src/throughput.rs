//! Closed-form long-run throughputs and the ALOHA density optimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_params, Params, ProtocolKind};
use crate::optimize::golden_section_max;

/// Long-run number of deliveries per unit time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputResult {
    pub value: f64,
    pub protocol: ProtocolKind,
    pub params: Params,
}

/// Poisson terms `e^{-lambda} lambda^n / n!` for `n = 0..=m`, by forward
/// recursion.
fn poisson_terms(lambda: f64, m: usize) -> impl Iterator<Item = f64> {
    let mut term = (-lambda).exp();
    (0..=m).map(move |n| {
        if n > 0 {
            term *= lambda / n as f64;
        }
        term
    })
}

/// `P(Poisson(lambda) <= m)`; `m = -1` gives 0.
pub fn poisson_cdf(lambda: f64, m: i64) -> f64 {
    if m < 0 {
        return 0.0;
    }
    poisson_terms(lambda, m as usize).sum::<f64>().min(1.0)
}

/// `lambda * P(Poi <= kappa - 1) / P(Poi <= kappa)`: lambda times the
/// probability that a Poisson(lambda) queue length, conditioned to be at
/// most kappa, leaves room for one more message.
pub fn s_csma(p: Params) -> Result<ThroughputResult> {
    let p = validate_params(p)?;
    // The common factor e^{-lambda} cancels; dropping it avoids underflow.
    let mut term = 1.0;
    let mut below = 0.0;
    for n in 0..p.kappa {
        if n > 0 {
            term *= p.lambda / n as f64;
        }
        below += term;
    }
    let full = below + term * p.lambda / p.kappa as f64;
    let value = p.lambda * below / full;
    Ok(ThroughputResult {
        value,
        protocol: ProtocolKind::Csma,
        params: p,
    })
}

/// `lambda e^{-(kappa+1) lambda / kappa} sum_{n<kappa} lambda^n/n! (kappa-n)/kappa`.
///
/// This is the rate for a channel model in which a rejected arrival also
/// holds the channel. The simulator in [`crate::event_sim`] does not let
/// rejected arrivals occupy anything, and there one ALOHA channel delivers
/// `lambda e^{-lambda} / (1 + lambda)`, which is larger (0.2022 against
/// 0.1839 at `lambda = 0.5`).
pub fn s_aloha(p: Params) -> Result<ThroughputResult> {
    let p = validate_params(p)?;
    Ok(ThroughputResult {
        value: aloha_sum_form(p.lambda, p.kappa),
        protocol: ProtocolKind::Aloha,
        params: p,
    })
}

pub(crate) fn aloha_sum_form(lambda: f64, kappa: u32) -> f64 {
    let k = kappa as f64;
    let mut term = 1.0;
    let mut sum = 0.0;
    for n in 0..kappa {
        if n > 0 {
            term *= lambda / n as f64;
        }
        sum += term * (k - n as f64) / k;
    }
    lambda * (-(k + 1.0) * lambda / k).exp() * sum
}

/// Two further forms of the ALOHA throughput, used to cross-check
/// [`s_aloha`]: the split sum and the Poisson-CDF form.
pub fn s_aloha_alternatives(lambda: f64, kappa: u32) -> (f64, f64) {
    let k = kappa as f64;
    let tilt = (-lambda / k).exp();
    let partial = |m: i64| -> f64 {
        if m < 0 {
            0.0
        } else {
            let mut term = 1.0;
            let mut sum = 1.0;
            for n in 1..=m {
                term *= lambda / n as f64;
                sum += term;
            }
            sum
        }
    };
    let k_i = kappa as i64;
    let split = lambda * tilt * (-lambda).exp() * (partial(k_i - 1) - lambda / k * partial(k_i - 2));
    let cdf = lambda * tilt * (poisson_cdf(lambda, k_i - 1) - lambda / k * poisson_cdf(lambda, k_i - 2));
    (split, cdf)
}

/// Dispatches on the protocol.
pub fn throughput(p: Params, proto: ProtocolKind) -> Result<ThroughputResult> {
    match proto {
        ProtocolKind::Csma => s_csma(p),
        ProtocolKind::Aloha => s_aloha(p),
    }
}

/// Large-kappa limit of `s_aloha(x kappa, kappa) / kappa`.
pub fn aloha_asymptotic(x: f64) -> f64 {
    x * (1.0 - x) * (-x).exp()
}

/// Maximizes `lambda -> s_aloha(lambda, kappa)` over `(0, 2 kappa]`.
///
/// A grid with step `kappa/200` locates the peak, then golden-section search
/// refines it on the two neighbouring grid cells. Two grid maxima that are
/// not neighbours but tie to within 1e-9 abort with [`Error::Multimodal`].
pub fn optimize_lambda_aloha(kappa: u32) -> Result<(f64, f64)> {
    if kappa == 0 {
        return Err(Error::ZeroKappa);
    }
    let k = kappa as f64;
    let step = k / 200.0;
    let grid: Vec<(f64, f64)> = (1..=400)
        .map(|i| {
            let l = step * i as f64;
            (l, aloha_sum_form(l, kappa))
        })
        .collect();
    let (best, &(_, vmax)) = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty grid");
    // Other local maxima of the grid that are as high as the best one.
    for (i, &(l, v)) in grid.iter().enumerate() {
        let local = (i == 0 || grid[i - 1].1 <= v) && (i + 1 == grid.len() || grid[i + 1].1 <= v);
        if local && i.abs_diff(best) > 1 && (vmax - v).abs() <= 1e-9 {
            return Err(Error::Multimodal {
                first: grid[best].0,
                second: l,
            });
        }
    }
    let lo = if best == 0 { 1e-12 } else { grid[best - 1].0 };
    let hi = grid[(best + 1).min(grid.len() - 1)].0;
    let (l, v) = golden_section_max(|l| aloha_sum_form(l, kappa), lo, hi, 1e-7);
    Ok((l, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lambda: f64, kappa: u32) -> Params {
        Params::new(lambda, kappa).unwrap()
    }

    #[test]
    fn poisson_cdf_examples() {
        assert!((poisson_cdf(1.0, 0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((poisson_cdf(2.0, 1) - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(poisson_cdf(1e-300, 3), 1.0);
        assert_eq!(poisson_cdf(3.0, -1), 0.0);
    }

    #[test]
    fn csma_examples() {
        assert!((s_csma(p(1.0, 1)).unwrap().value - 0.5).abs() < 1e-15);
        let big = s_csma(p(1000.0, 2)).unwrap().value;
        assert!((big - 2.0).abs() < 0.02);
        let v = s_csma(p(0.5, 3)).unwrap().value;
        assert!(v > 0.0 && v < 0.5);
    }

    #[test]
    fn aloha_closed_form_examples() {
        let half = s_aloha(p(0.5, 1)).unwrap().value;
        assert!((half - 1.0 / (2.0 * std::f64::consts::E)).abs() < 1e-15);
        assert!((s_aloha(p(1.0, 1)).unwrap().value - (-2.0f64).exp()).abs() < 1e-15);
        assert!(s_aloha(p(1e-9, 4)).unwrap().value < 1e-8);
    }

    #[test]
    fn asymptotic_examples() {
        assert_eq!(aloha_asymptotic(0.0), 0.0);
        assert_eq!(aloha_asymptotic(1.0), 0.0);
        let x = 0.4;
        let finite = s_aloha(p(x * 50.0, 50)).unwrap().value / 50.0;
        assert!((finite - aloha_asymptotic(x)).abs() < 0.01);
    }

    #[test]
    fn optimizer_single_channel() {
        let (l, v) = optimize_lambda_aloha(1).unwrap();
        assert!((l - 0.5).abs() < 1e-6);
        assert!((v - 1.0 / (2.0 * std::f64::consts::E)).abs() < 1e-12);
        assert_eq!(optimize_lambda_aloha(0), Err(Error::ZeroKappa));
    }
}
