//! Transition kernels of the admission chain and their samplers.
//!
//! Given the last `kappa - 1` gaps, the next step `(A, sigma)` has density
//!
//! ```text
//! CSMA : gamma^{k-1} / (k-1)! * lambda^k * exp(-lambda s)                      for s >= gamma
//! ALOHA: (gamma + B(s)/kappa)^{k-1} / (k-1)! * (1 - beta(s)/kappa)
//!        * lambda^k * exp(-lambda s)                                            for s >= gamma
//! ```
//!
//! with `gamma = [1 - sum of gaps]_+` the time until some channel frees up,
//! `beta(s)` the busy-channel count `s` after the last admission and `B(s)`
//! the integral of `beta` over `[gamma, s]`. Below `gamma` all channels are
//! busy and `beta` would integrate to `kappa * gamma`; that part is already
//! carried by `gamma` itself, which is why `B` starts at `gamma`.
//!
//! Neither kernel looks at the attempt counts of earlier steps, so a history
//! is just a [`HistoryWindow`] of gaps.

use crate::error::{Error, Result};
use crate::model::{HistoryWindow, Params, ProtocolKind, RandomSource, StepRecord};

/// Residual blocking time `[1 - sum of gaps]_+`; zero for an idle system.
pub fn gamma(h: &HistoryWindow) -> f64 {
    if h.is_idle() {
        return 0.0;
    }
    (1.0 - h.gaps().iter().sum::<f64>()).max(0.0)
}

/// Offsets `1 - c_m`, `m = 1..=kappa`, where `c_m` sums the `m - 1` newest
/// gaps. The `m`-th newest admission is still in service at offset `s`
/// exactly when `s <= 1 - c_m`. Decreasing in `m`.
fn release_offsets(h: &HistoryWindow) -> impl Iterator<Item = f64> + '_ {
    let mut acc = 0.0;
    std::iter::once(1.0).chain(h.gaps().iter().rev().map(move |g| {
        acc += g;
        1.0 - acc
    }))
}

/// Busy channels `s` time units after the last admission:
/// `max{m : s + c_m <= 1}`, or 0 when no `m` qualifies.
pub fn beta(h: &HistoryWindow, s: f64) -> u32 {
    if h.is_idle() {
        return 0;
    }
    release_offsets(h).take_while(|&r| s <= r).count() as u32
}

/// `B(s)`: integral of `beta` over `[gamma, s]`, zero for `s <= gamma`.
///
/// `beta` is a sum of indicators `1{r <= 1 - c_m}`, so each term contributes
/// the overlap of `[gamma, s]` with `[0, 1 - c_m]`.
pub fn beta_integral(h: &HistoryWindow, s: f64) -> f64 {
    if h.is_idle() {
        return 0.0;
    }
    let g = gamma(h);
    if s <= g {
        return 0.0;
    }
    release_offsets(h).map(|r| (s.min(r) - g).max(0.0)).sum()
}

pub(crate) fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// One transition kernel: protocol, parameters and the conditioning history.
#[derive(Debug, Clone, Copy)]
pub struct KernelDensity<'a> {
    pub protocol: ProtocolKind,
    pub params: Params,
    pub history: &'a HistoryWindow,
}

impl<'a> KernelDensity<'a> {
    pub fn new(protocol: ProtocolKind, params: Params, history: &'a HistoryWindow) -> Result<Self> {
        if !history.is_idle() && history.kappa() != params.kappa {
            return Err(Error::InvalidArgument(format!(
                "history holds {} gaps but kappa = {} needs {}",
                history.gaps().len(),
                params.kappa,
                params.kappa - 1
            )));
        }
        Ok(KernelDensity {
            protocol,
            params,
            history,
        })
    }

    /// Poisson mean of the refused attempts given the gap `s`, divided by
    /// lambda: `gamma` for CSMA, `gamma + B(s)/kappa` for ALOHA.
    pub fn refusal_exposure(&self, s: f64) -> f64 {
        let g = gamma(self.history);
        match self.protocol {
            ProtocolKind::Csma => g,
            ProtocolKind::Aloha => g + beta_integral(self.history, s) / self.params.kappa as f64,
        }
    }

    /// Joint density of `(A = k, sigma = s)`. Evaluated in log space.
    pub fn density(&self, k: u64, s: f64) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidArgument("attempt count k must be at least 1".into()));
        }
        if !(s > 0.0) || s < gamma(self.history) {
            return Ok(0.0);
        }
        let lambda = self.params.lambda;
        let kappa = self.params.kappa as f64;
        let admit = match self.protocol {
            ProtocolKind::Csma => 1.0,
            ProtocolKind::Aloha => 1.0 - beta(self.history, s) as f64 / kappa,
        };
        if admit <= 0.0 {
            return Ok(0.0);
        }
        let x = self.refusal_exposure(s);
        let power = if k == 1 {
            0.0
        } else if x <= 0.0 {
            return Ok(0.0);
        } else {
            (k - 1) as f64 * x.ln()
        };
        let log = power - ln_factorial(k - 1) + k as f64 * lambda.ln() - lambda * s + admit.ln();
        Ok(log.exp())
    }

    /// Marginal density of `sigma`, summed over `k` in closed form.
    pub fn gap_density(&self, s: f64) -> f64 {
        if !(s > 0.0) || s < gamma(self.history) {
            return 0.0;
        }
        let lambda = self.params.lambda;
        let admit = match self.protocol {
            ProtocolKind::Csma => 1.0,
            ProtocolKind::Aloha => 1.0 - beta(self.history, s) as f64 / self.params.kappa as f64,
        };
        admit * lambda * (lambda * (self.refusal_exposure(s) - s)).exp()
    }

    /// Draws one step.
    ///
    /// CSMA: `sigma = gamma + Exp(lambda)`, `A = 1 + Poisson(lambda gamma)`.
    /// ALOHA: arrivals after `gamma` are thinned; one at offset `r` is
    /// admitted with probability `1 - beta(r)/kappa`, otherwise refused.
    pub fn sample_step(&self, src: &mut RandomSource) -> StepRecord {
        let lambda = self.params.lambda;
        let g = gamma(self.history);
        let blocked = src.poisson(lambda * g);
        match self.protocol {
            ProtocolKind::Csma => StepRecord {
                attempts: 1 + blocked,
                gap: g + src.exponential(lambda),
            },
            ProtocolKind::Aloha => {
                let kappa = self.params.kappa as f64;
                let mut attempts = 1 + blocked;
                let mut r = g;
                loop {
                    r += src.exponential(lambda);
                    let busy = beta(self.history, r) as f64 / kappa;
                    if src.uniform() >= busy {
                        return StepRecord { attempts, gap: r };
                    }
                    attempts += 1;
                }
            }
        }
    }
}

/// Runs `n` chain steps from `init`, shifting the history by one gap per
/// step.
pub fn run_chain(
    p: Params,
    proto: ProtocolKind,
    n: usize,
    init: HistoryWindow,
    src: &mut RandomSource,
) -> Result<Vec<StepRecord>> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain length must be at least 1".into()));
    }
    let mut history = init;
    // Validates the history length against kappa.
    KernelDensity::new(proto, p, &history)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let step = KernelDensity {
            protocol: proto,
            params: p,
            history: &history,
        }
        .sample_step(src);
        history.push(step.gap);
        out.push(step);
    }
    Ok(out)
}
