//! Independent oracles shared by the integration tests: quadrature, a
//! brute-force busy count, goodness-of-fit helpers.

#![allow(dead_code)]

use mac_renewal::kernel::KernelDensity;
use mac_renewal::{HistoryWindow, Params, ProtocolKind, RandomSource, StepRecord};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Composite 8-point Gauss-Legendre rule on `[a, b]` with `pieces` panels.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize) -> f64 {
    const X: [f64; 4] = [
        0.183_434_642_495_649_8,
        0.525_532_409_916_329_0,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_3,
    ];
    const W: [f64; 4] = [
        0.362_683_783_378_362_0,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / pieces as f64;
    let mut total = 0.0;
    for i in 0..pieces {
        let lo = a + i as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        for (x, w) in X.iter().zip(W) {
            total += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    total
}

/// Busy channels at offset `s` after the newest admission, recounted from
/// admission times: the admission `j` steps back happened `c_j` earlier and
/// is busy while `s + c_j <= 1`.
pub fn brute_beta(h: &HistoryWindow, s: f64) -> u32 {
    let mut back = 0.0;
    let mut busy = if s <= 1.0 { 1 } else { 0 };
    let mut contiguous = s <= 1.0;
    for g in h.gaps().iter().rev() {
        back += g;
        if contiguous && s + back <= 1.0 {
            busy += 1;
        } else {
            contiguous = false;
        }
    }
    busy
}

/// `int_gamma^s beta(r) dr` by the midpoint rule on `steps` cells.
pub fn numeric_beta_integral(h: &HistoryWindow, gamma: f64, s: f64, steps: usize) -> f64 {
    if s <= gamma {
        return 0.0;
    }
    let dx = (s - gamma) / steps as f64;
    (0..steps)
        .map(|i| brute_beta(h, gamma + (i as f64 + 0.5) * dx) as f64 * dx)
        .sum()
}

/// Points where the kernel density may jump: gamma, the busy-count
/// breakpoints and 1.
pub fn breakpoints(h: &HistoryWindow, gamma: f64) -> Vec<f64> {
    let mut pts = vec![gamma, 1.0];
    let mut acc = 0.0;
    for g in h.gaps().iter().rev() {
        acc += g;
        pts.push(1.0 - acc);
    }
    pts.retain(|&p| p >= gamma && p > 0.0);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Mass of `{A = k, sigma in [lo, hi]}` by Gauss-Legendre on each smooth
/// piece.
pub fn cell_mass(kd: &KernelDensity, gamma: f64, k: u64, lo: f64, hi: f64) -> f64 {
    let mut cuts: Vec<f64> = breakpoints(kd.history, gamma)
        .into_iter()
        .filter(|&p| p > lo && p < hi)
        .collect();
    cuts.insert(0, lo.max(gamma.min(hi)));
    cuts.push(hi);
    cuts.windows(2)
        .map(|w| {
            let pieces = ((w[1] - w[0]) / 0.05).ceil().max(1.0) as usize;
            gauss_legendre(|s| kd.density(k, s).unwrap(), w[0], w[1], pieces)
        })
        .sum()
}

/// Random history of real gaps for `kappa` channels; about a third of the
/// gaps are at least one time unit.
pub fn random_history(kappa: u32, src: &mut RandomSource) -> HistoryWindow {
    let gaps = (0..kappa.saturating_sub(1))
        .map(|_| 0.001 + 1.5 * src.uniform())
        .collect();
    HistoryWindow::new(gaps).unwrap()
}

/// Upper tail probability of a chi-square statistic.
pub fn chi_square_p(stat: f64, dof: usize) -> f64 {
    1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat)
}

/// Pearson statistic over cells with expected count at least 5; sparser
/// cells are pooled into one.
pub fn pearson(observed: &[f64], expected: &[f64]) -> (f64, usize) {
    let (mut stat, mut cells) = (0.0, 0usize);
    let (mut po, mut pe) = (0.0, 0.0);
    for (o, e) in observed.iter().zip(expected) {
        if *e >= 5.0 {
            stat += (o - e) * (o - e) / e;
            cells += 1;
        } else {
            po += o;
            pe += e;
        }
    }
    if pe > 0.0 {
        stat += (po - pe) * (po - pe) / pe.max(1e-300);
        cells += 1;
    }
    (stat, cells.saturating_sub(1))
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn params(lambda: f64, kappa: u32) -> Params {
    Params::new(lambda, kappa).unwrap()
}

pub const PROTOCOLS: [ProtocolKind; 2] = [ProtocolKind::Csma, ProtocolKind::Aloha];

pub fn gaps(records: &[StepRecord]) -> Vec<f64> {
    records.iter().map(|r| r.gap).collect()
}
