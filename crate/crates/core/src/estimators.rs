//! Statistics over chain output: counting-process reconstruction, plug-in
//! throughput estimators, empirical string measures and a numerical check
//! of the chain's uniform ergodicity.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelDensity;
use crate::ldp::{DiscretizedKernel, GridSpec};
use crate::model::{fmt_g17, validate_params, Counts, HistoryWindow, Params, ProtocolKind, StepRecord};

/// Counts at time `t` recovered from chain records.
///
/// Arrivals after the last admission before `t` are not recorded in the
/// chain, so `A(t)` is only known to lie in
/// `[counts.attempts_total, attempts_upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub counts: Counts,
    pub attempts_upper: u64,
}

/// Inverts the partial sums of the gaps at time `t`.
///
/// `S~(t)` is the number of admissions in `[0, t]`. CSMA delivers every
/// admission. For ALOHA the success count is `2 S~(t) - sum of A_i`,
/// floored at zero.
pub fn reconstruct_counts(records: &[StepRecord], proto: ProtocolKind, t: f64) -> Result<Reconstruction> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive (got {t})")));
    }
    let covered: f64 = records.iter().map(|r| r.gap).sum();
    if covered < t {
        return Err(Error::InsufficientRecords {
            covered,
            requested: t,
            shortfall: t - covered,
        });
    }
    let mut elapsed = 0.0;
    let mut admitted = 0usize;
    let mut attempts = 0u64;
    for r in records {
        if elapsed + r.gap > t {
            break;
        }
        elapsed += r.gap;
        admitted += 1;
        attempts += r.attempts;
    }
    // Arrivals up to t that precede the next admission; that admission
    // itself lies after t.
    let attempts_upper = records
        .get(admitted)
        .map_or(attempts, |next| attempts + next.attempts - 1);
    let admitted = admitted as u64;
    let successes = match proto {
        ProtocolKind::Csma => admitted,
        ProtocolKind::Aloha => (2 * admitted).saturating_sub(attempts),
    };
    Ok(Reconstruction {
        counts: Counts {
            attempts_total: attempts,
            successes_total: successes,
            potential_successes: admitted,
        },
        attempts_upper,
    })
}

fn require_records(records: &[StepRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no records".into()));
    }
    Ok(())
}

/// Successes per unit time: `n / sum sigma` for CSMA and
/// `(2n - sum A) / sum sigma` for ALOHA.
///
/// The ALOHA form charges every rejected attempt with one destroyed message.
/// A message hit twice is charged twice, so the estimate is biased low: one
/// channel gives `lambda (1 - lambda) / (1 + lambda)` in the limit.
pub fn lln_throughput(records: &[StepRecord], proto: ProtocolKind) -> Result<f64> {
    require_records(records)?;
    let n = records.len() as f64;
    let time: f64 = records.iter().map(|r| r.gap).sum();
    Ok(match proto {
        ProtocolKind::Csma => n / time,
        ProtocolKind::Aloha => {
            let attempts: f64 = records.iter().map(|r| r.attempts as f64).sum();
            (2.0 * n - attempts) / time
        }
    })
}

/// Sample means of `A_i` and `sigma_i`.
pub fn pi_means(records: &[StepRecord]) -> Result<(f64, f64)> {
    require_records(records)?;
    let n = records.len() as f64;
    let a = records.iter().map(|r| r.attempts as f64).sum::<f64>() / n;
    let s = records.iter().map(|r| r.gap).sum::<f64>() / n;
    Ok((a, s))
}

/// Two-sample Kolmogorov-Smirnov distance between the gap samples.
pub fn ks_gaps(a: &[StepRecord], b: &[StepRecord]) -> Result<f64> {
    require_records(a)?;
    require_records(b)?;
    let sorted = |r: &[StepRecord]| {
        let mut v: Vec<f64> = r.iter().map(|x| x.gap).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let (x, y) = (sorted(a), sorted(b));
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / nx - j as f64 / ny).abs());
    }
    Ok(d)
}

/// Total variation distance between the attempt-count frequencies on
/// `1..=k_max`; larger counts are pooled into `k_max`.
pub fn tv_attempts(a: &[StepRecord], b: &[StepRecord], k_max: u64) -> Result<f64> {
    require_records(a)?;
    require_records(b)?;
    let pmf = |r: &[StepRecord]| {
        let mut v = vec![0.0; k_max as usize];
        for x in r {
            v[(x.attempts.min(k_max) - 1) as usize] += 1.0 / r.len() as f64;
        }
        v
    };
    let (p, q) = (pmf(a), pmf(b));
    Ok(0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Binning of `(A, sigma)` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringGrid {
    /// Width of the sigma bins on `[0, s_max)`.
    pub h: f64,
    /// Gaps at or beyond `s_max` land in one overflow bin.
    pub s_max: f64,
    /// Attempt counts above `k_max` are clamped to `k_max`.
    pub k_max: u64,
}

impl StringGrid {
    /// `h = 0.01`, `s_max = 1 + 20/lambda`, and `k_max` the smallest `k`
    /// with `P(Poisson(2 lambda) > k) < 1e-10`.
    pub fn default_for(lambda: f64) -> Self {
        let mean = 2.0 * lambda;
        let mut term = (-mean).exp();
        let mut cdf = term;
        let mut k = 0u64;
        while 1.0 - cdf >= 1e-10 && k < 100_000 {
            k += 1;
            term *= mean / k as f64;
            cdf += term;
        }
        StringGrid {
            h: 0.01,
            s_max: 1.0 + 20.0 / lambda,
            k_max: k.max(1),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !(self.s_max > self.h) || self.k_max == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid needs h > 0, s_max > h and k_max >= 1 (got h={}, s_max={}, k_max={})",
                self.h, self.s_max, self.k_max
            )));
        }
        Ok(())
    }

    fn sigma_bins(&self) -> u32 {
        (self.s_max / self.h).ceil() as u32
    }

    /// `(A bin, sigma bin)`; the second flag reports sigma overflow.
    fn cell(&self, r: &StepRecord) -> ([u32; 2], bool) {
        let a = r.attempts.min(self.k_max) as u32 - 1;
        let last = self.sigma_bins();
        if r.gap >= self.s_max {
            ([a, last], true)
        } else {
            ([a, ((r.gap / self.h) as u32).min(last - 1)], false)
        }
    }
}

/// Normalized histogram of consecutive `kappa`-strings of records.
///
/// A cell is the tuple `(a_1, s_1, ..., a_kappa, s_kappa)` of attempt and
/// gap bin indices; attempt bin `i` holds `A = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStringMeasure {
    pub kappa: u32,
    pub grid: StringGrid,
    counts: BTreeMap<Vec<u32>, u64>,
    windows: u64,
    overflow: u64,
    n: usize,
}

/// Histogram of the `n - kappa + 1` windows of length `kappa`.
pub fn build_string_measure(records: &[StepRecord], kappa: u32, grid: StringGrid) -> Result<EmpiricalStringMeasure> {
    grid.validate()?;
    if kappa == 0 {
        return Err(Error::ZeroKappa);
    }
    let k = kappa as usize;
    if records.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need at least kappa = {kappa} records (got {})",
            records.len()
        )));
    }
    let mut overflow = 0;
    let cells: Vec<[u32; 2]> = records
        .iter()
        .map(|r| {
            let (c, over) = grid.cell(r);
            overflow += over as u64;
            c
        })
        .collect();
    let mut counts = BTreeMap::new();
    for w in cells.windows(k) {
        *counts.entry(w.iter().flatten().copied().collect()).or_insert(0) += 1;
    }
    Ok(EmpiricalStringMeasure {
        kappa,
        grid,
        counts,
        windows: (records.len() - k + 1) as u64,
        overflow,
        n: records.len(),
    })
}

impl EmpiricalStringMeasure {
    /// Number of records the measure was built from.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Records whose gap fell into the overflow bin.
    pub fn overflow(&self) -> u64 {
        self.overflow
    }

    /// Cells with their normalized weights, in cell order.
    pub fn weights(&self) -> impl Iterator<Item = (&[u32], f64)> + '_ {
        let total = self.windows as f64;
        self.counts.iter().map(move |(c, &n)| (c.as_slice(), n as f64 / total))
    }

    /// Total variation distance between the projections onto the first and
    /// the last `kappa - 1` positions.
    pub fn marginal_defect(&self) -> f64 {
        let split = 2 * (self.kappa as usize - 1);
        if split == 0 {
            return 0.0;
        }
        let mut diff: BTreeMap<&[u32], i64> = BTreeMap::new();
        for (c, &n) in &self.counts {
            *diff.entry(&c[..split]).or_insert(0) += n as i64;
            *diff.entry(&c[2..]).or_insert(0) -= n as i64;
        }
        let l1: i64 = diff.values().map(|d| d.abs()).sum();
        0.5 * l1 as f64 / self.windows as f64
    }

    /// Adds the windows of `other`, which must share `kappa` and grid.
    pub fn merge(&mut self, other: &EmpiricalStringMeasure) -> Result<()> {
        if other.kappa != self.kappa || other.grid != self.grid {
            return Err(Error::InvalidArgument("measures differ in kappa or grid".into()));
        }
        for (c, &n) in &other.counts {
            *self.counts.entry(c.clone()).or_insert(0) += n;
        }
        self.windows += other.windows;
        self.overflow += other.overflow;
        self.n += other.n;
        Ok(())
    }

    /// Sparse CSV: `cell,weight`, cell indices joined by `;`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cell,weight")?;
        for (c, wt) in self.weights() {
            let cell: Vec<String> = c.iter().map(u32::to_string).collect();
            writeln!(w, "{},{}", cell.join(";"), fmt_g17(wt))?;
        }
        Ok(())
    }
}

/// Evaluation points of the ergodicity diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticGrid {
    /// History discretization used to compose the kernel.
    pub spec: GridSpec,
    /// Attempt counts to evaluate the final density at.
    pub ks: Vec<u64>,
    /// Gaps to evaluate the final density at.
    pub ss: Vec<f64>,
    /// Evaluate from every `stride`-th history state only.
    pub stride: usize,
}

impl DiagnosticGrid {
    pub fn default_for(kappa: u32) -> Self {
        let h = if kappa >= 3 { 0.05 } else { 0.01 };
        DiagnosticGrid {
            spec: GridSpec::with_h(h),
            ks: (1..=4).collect(),
            ss: (1..=60).map(|i| i as f64 * 0.05).collect(),
            stride: if kappa >= 3 { 3 } else { 1 },
        }
    }
}

/// Largest ratio between the `(kappa + 1)`-step densities started from two
/// different histories.
///
/// The first `kappa` steps are composed on the discretized history chain;
/// the last step uses the exact kernel density at each `(k, s)` grid point.
/// Points where every start gives zero density are skipped.
pub fn ergodicity_ratio_diagnostic(p: Params, proto: ProtocolKind, grid: &DiagnosticGrid) -> Result<f64> {
    let p = validate_params(p)?;
    if p.kappa > 3 {
        return Err(Error::KappaTooLarge(p.kappa));
    }
    if p.kappa == 1 {
        // No history to start from: every start gives the same law.
        return Ok(1.0);
    }
    let dk = DiscretizedKernel::assemble(p, proto, 0.0, &grid.spec)?;
    let states = dk.num_states();
    let histories: Vec<HistoryWindow> = (0..states).map(|i| dk.representative(i)).collect();
    // Final-step density from every history state, per grid point.
    let points: Vec<(u64, f64)> = grid.ks.iter().flat_map(|&k| grid.ss.iter().map(move |&s| (k, s))).collect();
    let mut final_density = vec![0.0; states * points.len()];
    for (i, h) in histories.iter().enumerate() {
        let kd = KernelDensity::new(proto, p, h)?;
        for (j, &(k, s)) in points.iter().enumerate() {
            final_density[i * points.len() + j] = kd.density(k, s)?;
        }
    }
    let mut hi = vec![0.0f64; points.len()];
    let mut lo = vec![f64::INFINITY; points.len()];
    for start in (0..states).step_by(grid.stride.max(1)) {
        let mut dist = vec![0.0; states];
        dist[start] = 1.0;
        for _ in 0..p.kappa {
            dist = dk.step_distribution(&dist);
        }
        for (j, (h, l)) in hi.iter_mut().zip(lo.iter_mut()).enumerate() {
            let f: f64 = dist
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(i, w)| w * final_density[i * points.len() + j])
                .sum();
            *h = h.max(f);
            *l = l.min(f);
        }
    }
    let mut ratio = 1.0f64;
    for (h, l) in hi.iter().zip(&lo) {
        if *h <= 0.0 {
            continue;
        }
        ratio = ratio.max(if *l > 0.0 { h / l } else { f64::INFINITY });
    }
    Ok(ratio)
}
