//! Monte-Carlo check of the upper tail bound for `S(t)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_sim::{simulate, ArrivalStream};
use crate::model::{validate_params, Params, ProtocolKind, RandomSource};
use crate::throughput::throughput;

use super::rates::RateEvaluator;
use super::GridSpec;

/// Fewer occurrences than this make the Monte-Carlo rate meaningless.
pub const MIN_OCCURRENCES: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailStatus {
    Pass,
    Fail,
    Insufficient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub protocol: ProtocolKind,
    pub params: Params,
    pub s_target: f64,
    pub t: f64,
    pub runs: u64,
    /// Runs with `S(t) <= s_target t`.
    pub occurrences: u64,
    /// `-(1/t) log(occurrences / runs)`, when there were any.
    pub mc_rate: Option<f64>,
    /// `inf of I^S over [0, s_target]`.
    pub predicted_rate: f64,
    pub status: TailStatus,
}

/// Estimates `P(S(t) <= s_target t)` from `runs` simulations and checks
/// that its exponential decay rate is at least 0.9 times the predicted one.
///
/// Run `i` draws from stream `i` of the seed of `src`. Below the throughput
/// `I^S` decreases towards its zero, so its infimum over `[0, s_target]`
/// is its value at `s_target`; at or above the throughput the prediction is
/// zero and the check passes trivially.
pub fn tail_bound_check(
    proto: ProtocolKind,
    p: Params,
    s_target: f64,
    t: f64,
    runs: u64,
    src: &RandomSource,
    grid: GridSpec,
) -> Result<TailReport> {
    let p = validate_params(p)?;
    if !(s_target > 0.0) || !(t > 0.0) || runs == 0 {
        return Err(Error::InvalidArgument(format!(
            "tail check needs s_target > 0, t > 0 and runs > 0 (got {s_target}, {t}, {runs})"
        )));
    }
    let seed = src.seed();
    let threshold = s_target * t;
    let hits: Vec<bool> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let arrivals = ArrivalStream::poisson(RandomSource::new(seed, i), p.lambda);
            simulate(p, proto, arrivals, t).map(|tr| tr.counts.successes_total as f64 <= threshold)
        })
        .collect::<Result<_>>()?;
    let occurrences = hits.iter().filter(|h| **h).count() as u64;

    let predicted_rate = if s_target >= throughput(p, proto)?.value {
        0.0
    } else {
        RateEvaluator::new(proto, p, grid)?.rate_is(s_target)?.value
    };
    let mc_rate = (occurrences > 0).then(|| -(occurrences as f64 / runs as f64).ln() / t);
    let status = match mc_rate {
        Some(r) if occurrences >= MIN_OCCURRENCES => {
            if r >= 0.9 * predicted_rate {
                TailStatus::Pass
            } else {
                TailStatus::Fail
            }
        }
        _ => TailStatus::Insufficient,
    };
    Ok(TailReport {
        protocol: proto,
        params: p,
        s_target,
        t,
        runs,
        occurrences,
        mc_rate,
        predicted_rate,
        status,
    })
}
