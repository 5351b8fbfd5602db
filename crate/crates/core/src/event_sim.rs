//! Continuous-time discrete-event simulation of both protocols.
//!
//! Arrivals are processed in time order. A channel holding a message
//! admitted at `u` is busy on `[u, u + 1)`, so a completion and an arrival
//! at the same instant resolve completion-first.
//!
//! ALOHA: the arrival picks a channel uniformly. An idle channel admits it;
//! a busy one rejects it and destroys the resident, which still occupies the
//! channel until its service time ends. A message is delivered if nothing
//! hits its channel during its service time, so fates of messages admitted
//! shortly before the horizon are resolved by simulating one extra time
//! unit internally.
//!
//! CSMA: the arrival is admitted to the lowest-index idle channel, if any.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_params, Counts, Params, ProtocolKind, RandomSource, StepRecord};

/// Source of arrival times.
#[derive(Debug, Clone)]
pub enum ArrivalStream {
    /// Poisson process: i.i.d. Exp(lambda) inter-arrival times. The same
    /// source also drives ALOHA channel picks.
    Poisson { source: RandomSource, lambda: f64 },
    /// Explicit arrival times. `channels` drives ALOHA channel picks.
    Scripted {
        times: Vec<f64>,
        channels: RandomSource,
    },
}

impl ArrivalStream {
    pub fn poisson(source: RandomSource, lambda: f64) -> Self {
        ArrivalStream::Poisson { source, lambda }
    }

    /// Scripted arrivals with channel picks from stream `(0, 0)`.
    pub fn scripted(times: Vec<f64>) -> Self {
        ArrivalStream::Scripted {
            times,
            channels: RandomSource::new(0, 0),
        }
    }
}

/// Draws the next Poisson inter-arrival time.
pub fn next_interarrival(src: &mut RandomSource, lambda: f64) -> f64 {
    src.exponential(lambda)
}

/// Fate of an admitted message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Delivered,
    Destroyed,
}

/// Full output of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub params: Params,
    pub protocol: ProtocolKind,
    pub horizon: f64,
    /// Arrival times in `[0, horizon]`.
    pub arrivals: Vec<f64>,
    /// Admission times in `[0, horizon]`.
    pub admissions: Vec<f64>,
    /// One entry per admission.
    pub outcomes: Vec<Outcome>,
    /// `(A_i, sigma_i)` per admission, with the zeroth admission at time 0.
    pub steps: Vec<StepRecord>,
    pub counts: Counts,
}

#[derive(Clone, Copy)]
struct Resident {
    end: f64,
    /// Index into `admissions`, or `None` for admissions after the horizon.
    admission: Option<usize>,
}

/// Runs one protocol over `[0, horizon]`.
pub fn simulate(
    p: Params,
    proto: ProtocolKind,
    arrivals: ArrivalStream,
    horizon: f64,
) -> Result<Trace> {
    let p = validate_params(p)?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and finite (got {horizon})"
        )));
    }
    // ALOHA needs one more time unit to settle the fates of late admissions.
    let limit = match proto {
        ProtocolKind::Csma => horizon,
        ProtocolKind::Aloha => horizon + 1.0,
    };

    let kappa = p.kappa as usize;
    let mut channels: Vec<Option<Resident>> = vec![None; kappa];
    let mut trace = Trace {
        params: p,
        protocol: proto,
        horizon,
        arrivals: Vec::new(),
        admissions: Vec::new(),
        outcomes: Vec::new(),
        steps: Vec::new(),
        counts: Counts::default(),
    };
    let mut pending_attempts = 0u64;
    let mut last_admission = 0.0;

    let mut on_arrival = |u: f64, pick: &mut dyn FnMut() -> u32| {
        let observed = u <= horizon;
        if observed {
            trace.arrivals.push(u);
            pending_attempts += 1;
        }
        let idle = |slot: &Option<Resident>| slot.map_or(true, |r| r.end <= u);
        let target = match proto {
            ProtocolKind::Csma => channels.iter().position(idle),
            ProtocolKind::Aloha => {
                let c = pick() as usize;
                if idle(&channels[c]) {
                    Some(c)
                } else {
                    if let Some(Resident { admission: Some(i), .. }) = channels[c] {
                        trace.outcomes[i] = Outcome::Destroyed;
                    }
                    None
                }
            }
        };
        if let Some(c) = target {
            let admission = if observed {
                trace.steps.push(StepRecord {
                    attempts: pending_attempts,
                    gap: u - last_admission,
                });
                pending_attempts = 0;
                last_admission = u;
                trace.admissions.push(u);
                trace.outcomes.push(Outcome::Delivered);
                Some(trace.admissions.len() - 1)
            } else {
                None
            };
            channels[c] = Some(Resident { end: u + 1.0, admission });
        }
    };

    match arrivals {
        ArrivalStream::Poisson { mut source, lambda } => {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::NonPositiveLambda(lambda));
            }
            let mut t = 0.0;
            loop {
                t += next_interarrival(&mut source, lambda);
                if t > limit {
                    break;
                }
                let src = &mut source;
                on_arrival(t, &mut || src.channel(p.kappa));
            }
        }
        ArrivalStream::Scripted {
            times,
            channels: mut picks,
        } => {
            check_increasing(&times)?;
            for &t in times.iter().take_while(|&&t| t <= limit) {
                on_arrival(t, &mut || picks.channel(p.kappa));
            }
        }
    }

    let successes = trace
        .outcomes
        .iter()
        .filter(|o| **o == Outcome::Delivered)
        .count() as u64;
    trace.counts = Counts {
        attempts_total: trace.arrivals.len() as u64,
        successes_total: successes,
        potential_successes: trace.admissions.len() as u64,
    };
    Ok(trace)
}

fn check_increasing(times: &[f64]) -> Result<()> {
    let mut prev = 0.0;
    for (index, &value) in times.iter().enumerate() {
        if !(value > prev) || !value.is_finite() {
            return Err(Error::UnsortedArrivals { index, value });
        }
        prev = value;
    }
    Ok(())
}

/// Number of channels occupied at `time`.
pub fn busy_channels(tr: &Trace, time: f64) -> Result<u32> {
    if time > tr.horizon {
        return Err(Error::BeyondHorizon {
            time,
            horizon: tr.horizon,
        });
    }
    if time < 0.0 {
        return Err(Error::InvalidArgument(format!("negative query time {time}")));
    }
    // Admissions in (time - 1, time] are still in service.
    let hi = tr.admissions.partition_point(|&a| a <= time);
    let lo = tr.admissions.partition_point(|&a| a <= time - 1.0);
    Ok((hi - lo) as u32)
}

/// Simulates Poisson arrivals until at least `n` admissions are observed
/// and returns the first `n` chain steps.
pub fn admission_steps(
    p: Params,
    proto: ProtocolKind,
    source: RandomSource,
    n: usize,
) -> Result<Vec<StepRecord>> {
    let p = validate_params(p)?;
    // Every gap is at most one service time plus an exponential wait.
    let mut horizon = (n as f64 + 10.0) * (1.0 + 1.0 / p.lambda) * 1.1;
    loop {
        let tr = simulate(p, proto, ArrivalStream::poisson(source.clone(), p.lambda), horizon)?;
        if tr.steps.len() >= n {
            let mut steps = tr.steps;
            steps.truncate(n);
            return Ok(steps);
        }
        horizon *= 2.0;
    }
}

/// Parses newline-delimited decimal arrival times. Blank lines and lines
/// starting with `#` are ignored.
pub fn read_scripted_arrivals<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("bad arrival time '{line}' on line {}", lineno + 1)))?;
        out.push(t);
    }
    check_increasing(&out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(lambda: f64, kappa: u32) -> Params {
        Params::new(lambda, kappa).unwrap()
    }

    #[test]
    fn csma_single_channel_hand_trace() {
        let tr = simulate(
            params(1.0, 1),
            ProtocolKind::Csma,
            ArrivalStream::scripted(vec![0.2, 0.5, 1.5]),
            2.0,
        )
        .unwrap();
        assert_eq!(tr.admissions, vec![0.2, 1.5]);
        assert_eq!(tr.counts.attempts_total, 3);
        assert_eq!(tr.counts.successes_total, 2);
        assert_eq!(tr.steps.len(), 2);
        assert_eq!(tr.steps[0], StepRecord { attempts: 1, gap: 0.2 });
        assert_eq!(tr.steps[1].attempts, 2);
        assert!((tr.steps[1].gap - 1.3).abs() < 1e-12);
    }

    #[test]
    fn aloha_single_channel_hand_trace() {
        let tr = simulate(
            params(1.0, 1),
            ProtocolKind::Aloha,
            ArrivalStream::scripted(vec![0.2, 0.5, 1.5]),
            3.0,
        )
        .unwrap();
        assert_eq!(tr.admissions, vec![0.2, 1.5]);
        assert_eq!(tr.outcomes, vec![Outcome::Destroyed, Outcome::Delivered]);
        assert_eq!(tr.counts.successes_total, 1);
        assert_eq!(tr.counts.potential_successes, 2);
        assert_eq!(tr.counts.attempts_total, 3);
    }

    #[test]
    fn aloha_fate_resolved_past_horizon() {
        // Admitted at 1.8, hit at 2.3 after the horizon: not delivered.
        let tr = simulate(
            params(1.0, 1),
            ProtocolKind::Aloha,
            ArrivalStream::scripted(vec![1.8, 2.3]),
            2.0,
        )
        .unwrap();
        assert_eq!(tr.arrivals, vec![1.8]);
        assert_eq!(tr.outcomes, vec![Outcome::Destroyed]);
        assert_eq!(tr.counts.successes_total, 0);
    }

    #[test]
    fn completion_before_arrival_on_ties() {
        let tr = simulate(
            params(1.0, 1),
            ProtocolKind::Csma,
            ArrivalStream::scripted(vec![0.5, 1.5]),
            2.0,
        )
        .unwrap();
        assert_eq!(tr.admissions, vec![0.5, 1.5]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = params(1.0, 1);
        assert!(simulate(p, ProtocolKind::Csma, ArrivalStream::scripted(vec![0.1]), 0.0).is_err());
        let e = simulate(p, ProtocolKind::Csma, ArrivalStream::scripted(vec![0.3, 0.2]), 1.0)
            .unwrap_err();
        assert_eq!(e, Error::UnsortedArrivals { index: 1, value: 0.2 });
        assert!(simulate(p, ProtocolKind::Aloha, ArrivalStream::scripted(vec![0.0]), 1.0).is_err());
    }

    #[test]
    fn busy_channel_queries() {
        let tr = simulate(
            params(1.0, 2),
            ProtocolKind::Csma,
            ArrivalStream::scripted(vec![0.2, 0.5]),
            2.0,
        )
        .unwrap();
        assert_eq!(busy_channels(&tr, 0.6).unwrap(), 2);
        assert_eq!(busy_channels(&tr, 1.3).unwrap(), 1);
        assert_eq!(busy_channels(&tr, 1.6).unwrap(), 0);
        assert!(matches!(busy_channels(&tr, 2.5), Err(Error::BeyondHorizon { .. })));
    }

    #[test]
    fn exponential_draws_have_the_right_moments() {
        let mut src = RandomSource::new(11, 0);
        let n = 1_000_000;
        let mean = (0..n).map(|_| next_interarrival(&mut src, 2.0)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.002, "mean {mean}");
        let mut src = RandomSource::new(12, 0);
        let tail = (0..n).filter(|_| next_interarrival(&mut src, 1.0) > 1.0).count() as f64 / n as f64;
        assert!((tail - (-1.0f64).exp()).abs() < 0.003, "tail {tail}");
    }

    #[test]
    fn scripted_arrival_parsing() {
        let v = read_scripted_arrivals("# times\n0.25\n\n1.5\n".as_bytes()).unwrap();
        assert_eq!(v, vec![0.25, 1.5]);
        assert!(read_scripted_arrivals("1.0\n0.5\n".as_bytes()).is_err());
        assert!(read_scripted_arrivals("abc\n".as_bytes()).is_err());
    }
}
