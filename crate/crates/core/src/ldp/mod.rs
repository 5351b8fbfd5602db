//! Large-deviation rate functions for attempts and successes.
//!
//! The scaled cumulant generating function
//! `Lambda(A, B) = lim (1/n) log E exp(A sum A_i + B sum sigma_i)` is the log
//! spectral radius of the kernel tilted by `e^{A k + B s}`. Tilting by
//! `e^{B s}` only changes the exponential factor `e^{-lambda s}`, so
//!
//! ```text
//! W^{(A,B,lambda)} = W^{(D,0,lambda-B)},    D = A + log(lambda / (lambda - B)),
//! ```
//!
//! and only attempt tilts at a shifted intensity ever need to be
//! discretized. Rate functions are Legendre transforms of `Lambda` and their
//! rescalings.

mod operator;
mod rates;
mod tail;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Params, ProtocolKind};

pub use operator::{lambda_cgf, DiscretizedKernel, GridSpec, POWER_MAX_ITER, POWER_TOLERANCE};
pub use rates::{rate_i, rate_ia, rate_is, rate_j, RateEvaluator, RatePoint};
pub use tail::{tail_bound_check, TailReport, TailStatus};

/// Exponential tilt `e^{A k + B s}` of one kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedKernelSpec {
    pub a: f64,
    pub b: f64,
    pub protocol: ProtocolKind,
    pub params: Params,
}

/// `(D, lambda - B)` with `D = A + log(lambda / (lambda - B))`.
pub fn tilt_reduce(spec: &TiltedKernelSpec) -> Result<(f64, f64)> {
    let lambda = spec.params.lambda;
    let shifted = lambda - spec.b;
    if !(shifted > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tilt B = {} must be below lambda = {lambda}",
            spec.b
        )));
    }
    Ok((spec.a + (lambda / shifted).ln(), shifted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(a: f64, b: f64) -> TiltedKernelSpec {
        TiltedKernelSpec {
            a,
            b,
            protocol: ProtocolKind::Csma,
            params: Params::new(1.0, 1).unwrap(),
        }
    }

    #[test]
    fn reduction_examples() {
        assert_eq!(tilt_reduce(&spec(0.0, 0.0)).unwrap(), (0.0, 1.0));
        let (d, l) = tilt_reduce(&spec(0.0, 0.5)).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-15 && l == 0.5);
        let (d, l) = tilt_reduce(&spec(1.0, -1.0)).unwrap();
        assert!((d - (1.0 - 2f64.ln())).abs() < 1e-15 && l == 2.0);
        assert!(tilt_reduce(&spec(0.0, 1.0)).is_err());
    }
}
