//! Shared domain types: parameters, chain records, history windows, counts
//! and the seedable random source.
//!
//! Time is measured in service times: every admitted message occupies its
//! channel for exactly one unit.
//!
//! # History ordering
//!
//! A [`HistoryWindow`] stores the `kappa - 1` most recent admission gaps
//! ordered oldest to newest. In the kernel formulas the gaps are indexed
//! `t_1, ..., t_{kappa-1}` with `t_{kappa-1}` the most recent one, so
//! `gaps()[kappa - 2]` is `t_{kappa-1}` and `gaps()[0]` is `t_1`. The
//! busy-channel count walks the window from the newest end.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap value used for history slots that refer to no real admission.
///
/// Any value of at least one time unit drops out of every busy-channel term.
pub const SENTINEL_GAP: f64 = 2.0;

/// Arrival intensity and channel count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub lambda: f64,
    pub kappa: u32,
}

impl Params {
    /// Builds validated parameters.
    pub fn new(lambda: f64, kappa: u32) -> Result<Self> {
        validate_params(Params { lambda, kappa })
    }
}

/// Returns `p` unchanged if `lambda` is positive and finite and `kappa >= 1`.
pub fn validate_params(p: Params) -> Result<Params> {
    if p.lambda.is_nan() || p.lambda.is_infinite() {
        return Err(Error::NonFiniteLambda(p.lambda));
    }
    if p.lambda <= 0.0 {
        return Err(Error::NonPositiveLambda(p.lambda));
    }
    if p.kappa == 0 {
        return Err(Error::ZeroKappa);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Aloha,
    Csma,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolKind::Aloha => f.write_str("aloha"),
            ProtocolKind::Csma => f.write_str("csma"),
        }
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aloha" => Ok(ProtocolKind::Aloha),
            "csma" => Ok(ProtocolKind::Csma),
            other => Err(Error::Parse(format!("unknown protocol '{other}'"))),
        }
    }
}

/// One step of the admission chain: the attempts in an inter-admission
/// interval (the admitted one included) and the interval length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub attempts: u64,
    pub gap: f64,
}

impl StepRecord {
    pub fn new(attempts: u64, gap: f64) -> Result<Self> {
        if attempts == 0 {
            return Err(Error::InvalidArgument(
                "a step contains at least the admitted attempt".into(),
            ));
        }
        if !(gap > 0.0) || !gap.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step gap must be positive and finite (got {gap})"
            )));
        }
        Ok(StepRecord { attempts, gap })
    }
}

/// The `kappa - 1` most recent gaps, oldest first.
///
/// A window built by [`HistoryWindow::empty_system`] describes the state
/// before the first admission: no channel is busy and nothing blocks the
/// next arrival. That state is not expressible through gap values alone
/// (the newest-admission term of the busy count would still fire), so it is
/// carried as a flag which clears on the first [`push`](Self::push).
///
/// The first gap is measured from time 0, where nothing was admitted, so
/// it enters the window as [`SENTINEL_GAP`] rather than its real value.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    gaps: Vec<f64>,
    idle: bool,
}

impl HistoryWindow {
    /// A window of real gaps. Its length fixes `kappa = gaps.len() + 1`.
    pub fn new(gaps: Vec<f64>) -> Result<Self> {
        if let Some(bad) = gaps.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "history gaps must be positive and finite (got {bad})"
            )));
        }
        Ok(HistoryWindow { gaps, idle: false })
    }

    /// History of a system that has seen no admission yet.
    pub fn empty_system(kappa: u32) -> Self {
        let len = kappa.saturating_sub(1) as usize;
        HistoryWindow {
            gaps: vec![SENTINEL_GAP; len],
            idle: true,
        }
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn kappa(&self) -> u32 {
        self.gaps.len() as u32 + 1
    }

    pub fn is_idle(&self) -> bool {
        self.idle
    }

    /// Drops the oldest gap and appends `gap` as the newest.
    pub fn push(&mut self, gap: f64) {
        if !self.gaps.is_empty() {
            self.gaps.remove(0);
            self.gaps.push(if self.idle { SENTINEL_GAP } else { gap });
        }
        self.idle = false;
    }
}

/// Counting processes at a fixed time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    /// A(t): arrivals in [0, t].
    pub attempts_total: u64,
    /// S(t): successful transmissions.
    pub successes_total: u64,
    /// Admissions in [0, t]. For CSMA this equals `successes_total`.
    pub potential_successes: u64,
}

/// Seeded random stream. Equal `(seed, stream)` pairs replay identical draws.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform channel index in `0..kappa`.
    pub fn channel(&mut self, kappa: u32) -> u32 {
        self.rng.random_range(0..kappa)
    }

    /// Exp(lambda) draw; panics if `lambda` is not positive.
    pub fn exponential(&mut self, lambda: f64) -> f64 {
        Exp::new(lambda)
            .expect("exponential rate must be positive")
            .sample(&mut self.rng)
    }

    /// Poisson(mean) draw; a zero mean returns 0.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean)
            .expect("poisson mean must be finite")
            .sample(&mut self.rng) as u64
    }
}

/// Formats `x` like C's `%.17g`: 17 significant digits, trailing zeros
/// dropped. Enough digits for an exact `f64` round trip.
pub fn fmt_g17(x: f64) -> String {
    const PREC: i32 = 17;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (PREC - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -4 || exp >= PREC {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PREC - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes records as `index,attempts,gap` CSV with a header row; the index
/// starts at 1.
pub fn write_steps_csv<W: Write>(mut w: W, records: &[StepRecord]) -> Result<()> {
    writeln!(w, "index,attempts,gap")?;
    for (i, r) in records.iter().enumerate() {
        writeln!(w, "{},{},{}", i + 1, r.attempts, fmt_g17(r.gap))?;
    }
    Ok(())
}

/// Reads records written by [`write_steps_csv`]. Lines starting with `#`
/// (config headers) are skipped.
pub fn read_steps_csv<R: BufRead>(r: R) -> Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    let mut saw_header = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "index,attempts,gap" {
                return Err(Error::Parse(format!("unexpected header '{line}'")));
            }
            saw_header = true;
            continue;
        }
        let bad = || Error::Parse(format!("malformed record on line {}", lineno + 1));
        let mut fields = line.split(',');
        let _index: u64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let attempts: u64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let gap: f64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if fields.next().is_some() {
            return Err(bad());
        }
        out.push(StepRecord::new(attempts, gap)?);
    }
    Ok(out)
}
