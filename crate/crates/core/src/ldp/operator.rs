//! Discretized tilted transfer operator and its spectral radius.
//!
//! A history coordinate is a gap bin of width `h` on `[0, 1)` or the tail
//! state "gap >= 1". Every kernel quantity depends on a gap of at least one
//! time unit only through that fact, so the tail state is exact and no upper
//! gap cutoff is needed. A history state is a `(kappa - 1)`-tuple of
//! coordinates, and a transition to gap bin `j` moves the state
//! `(c_1, ..., c_{kappa-1})` to `(c_2, ..., c_{kappa-1}, j)`.
//!
//! Entries are exact bin masses of the tilted kernel at the bin-midpoint
//! history. The sum over attempt counts is taken in closed form,
//!
//! ```text
//! sum_k e^{Dk} x^{k-1}/(k-1)! lambda^k = e^D lambda exp(e^D lambda x),
//! ```
//!
//! and between busy-count breakpoints the integrand in `s` is a single
//! exponential, so no quadrature is involved.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{beta, beta_integral, gamma};
use crate::model::{validate_params, HistoryWindow, Params, ProtocolKind, SENTINEL_GAP};

use super::{tilt_reduce, TiltedKernelSpec};

/// Power iteration stops once the Collatz-Wielandt bracket on the spectral
/// radius is this tight, relative to the radius.
pub const POWER_TOLERANCE: f64 = 1e-12;
/// Power iteration gives up after this many iterations.
pub const POWER_MAX_ITER: usize = 100_000;

/// Resolution of the history discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Gap bin width on `[0, 1)`.
    pub h: f64,
}

impl GridSpec {
    pub fn with_h(h: f64) -> Self {
        GridSpec { h }
    }

    /// `h = 0.005` up to two channels, `0.02` from three on.
    pub fn default_for(kappa: u32) -> Self {
        GridSpec::with_h(if kappa >= 3 { 0.02 } else { 0.005 })
    }

    fn bins(&self) -> Result<usize> {
        if !(self.h > 0.0) || self.h > 1.0 {
            return Err(Error::InvalidArgument(format!("grid width h must lie in (0, 1] (got {})", self.h)));
        }
        Ok((1.0 / self.h - 1e-9).ceil() as usize)
    }
}

/// Tilted kernel integrated over gap bins, one row per history state.
#[derive(Debug, Clone)]
pub struct DiscretizedKernel {
    pub protocol: ProtocolKind,
    pub params: Params,
    edges: Vec<f64>,
    states: usize,
    entries: Vec<f64>,
}

/// Coefficients of the integrand `c a(r) exp(q x(r) - mu r)` in `r`, where
/// `a` is the admission probability and `x` the refusal exposure.
#[derive(Clone, Copy)]
struct Integrand {
    c: f64,
    q: f64,
    mu: f64,
}

impl DiscretizedKernel {
    /// Kernel at intensity `p.lambda` tilted by `e^{d k}`.
    pub fn assemble(p: Params, proto: ProtocolKind, d: f64, grid: &GridSpec) -> Result<Self> {
        let p = validate_params(p)?;
        let f = Integrand {
            c: d.exp() * p.lambda,
            q: d.exp() * p.lambda,
            mu: p.lambda,
        };
        Self::build(p, proto, f, grid)
    }

    /// Kernel at intensity `p.lambda` tilted by `e^{a k + b s}`, assembled
    /// without the intensity shift.
    pub fn assemble_tilted(p: Params, proto: ProtocolKind, a: f64, b: f64, grid: &GridSpec) -> Result<Self> {
        let p = validate_params(p)?;
        if !(b < p.lambda) {
            return Err(Error::InvalidArgument(format!("tilt B = {b} must be below lambda = {}", p.lambda)));
        }
        let f = Integrand {
            c: a.exp() * p.lambda,
            q: a.exp() * p.lambda,
            mu: p.lambda - b,
        };
        Self::build(p, proto, f, grid)
    }

    /// Reduces `spec` to a pure attempt tilt at the shifted intensity and
    /// assembles that.
    pub fn from_spec(spec: &TiltedKernelSpec, grid: &GridSpec) -> Result<Self> {
        let (d, shifted) = tilt_reduce(spec)?;
        let p = Params::new(shifted, spec.params.kappa)?;
        Self::assemble(p, spec.protocol, d, grid)
    }

    fn build(p: Params, proto: ProtocolKind, f: Integrand, grid: &GridSpec) -> Result<Self> {
        let nb = grid.bins()?;
        let edges: Vec<f64> = (0..=nb).map(|j| (j as f64 * grid.h).min(1.0)).collect();
        let states = (nb + 1).pow(p.kappa - 1);
        let width = nb + 1;
        let mut entries = vec![0.0; states * width];
        let proto_weight = match proto {
            ProtocolKind::Csma => 0.0,
            ProtocolKind::Aloha => 1.0,
        };
        let shell = DiscretizedKernel {
            protocol: proto,
            params: p,
            edges,
            states,
            entries: Vec::new(),
        };
        entries.par_chunks_mut(width).enumerate().for_each(|(r, row)| {
            let h = shell.representative(r);
            shell.fill_row(&h, f, proto_weight, row);
        });
        Ok(DiscretizedKernel { entries, ..shell })
    }

    /// Bin masses for one history, the last one covering `[1, inf)`.
    fn fill_row(&self, h: &HistoryWindow, f: Integrand, w: f64, row: &mut [f64]) {
        let kappa = self.params.kappa as f64;
        let g = gamma(h);
        // Breakpoints of the busy count on [gamma, 1].
        let mut pts = vec![g];
        let mut acc = 0.0;
        for gap in h.gaps().iter().rev() {
            acc += gap;
            let r = 1.0 - acc;
            if r > g && r < 1.0 {
                pts.push(r);
            }
        }
        if g < 1.0 {
            pts.push(1.0);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();

        // Per segment: start, constant busy count, B at start, and the mass
        // accumulated before the start.
        struct Seg {
            start: f64,
            coef: f64,
            rate: f64,
            before: f64,
        }
        let segment = |start: f64, busy: f64, b_start: f64, before: f64| {
            let admit = 1.0 - w * busy / kappa;
            let coef = f.c * admit * (f.q * (g + w * b_start / kappa) - f.mu * start).exp();
            let rate = f.q * w * busy / kappa - f.mu;
            Seg {
                start,
                coef,
                rate,
                before,
            }
        };
        let seg_mass = |s: &Seg, len: f64| -> f64 {
            if len <= 0.0 {
                return 0.0;
            }
            let z = s.rate * len;
            let phi = if z.abs() < 1e-300 { 1.0 } else { z.exp_m1() / z };
            s.coef * len * phi
        };
        let mut segs: Vec<Seg> = Vec::with_capacity(pts.len());
        let mut before = 0.0;
        for win in pts.windows(2) {
            let (a, b) = (win[0], win[1]);
            let busy = beta(h, 0.5 * (a + b)) as f64;
            let s = segment(a, busy, beta_integral(h, a), before);
            before += seg_mass(&s, b - a);
            segs.push(s);
        }
        let tail_start = g.max(1.0);
        let tail = segment(tail_start, 0.0, beta_integral(h, tail_start), before);
        let tail_mass = if tail.rate < 0.0 { tail.coef / -tail.rate } else { f64::INFINITY };

        // Mass of [gamma, s] for s <= 1.
        let mut k = 0;
        let mut cum = |s: f64| -> f64 {
            if s <= g {
                return 0.0;
            }
            while k + 1 < segs.len() && segs[k + 1].start <= s {
                k += 1;
            }
            let sg = &segs[k];
            sg.before + seg_mass(sg, s - sg.start)
        };
        let nb = self.edges.len() - 1;
        let mut prev = cum(self.edges[0]);
        for j in 0..nb {
            let next = cum(self.edges[j + 1]);
            row[j] = (next - prev).max(0.0);
            prev = next;
        }
        row[nb] = tail_mass;
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    /// Number of gap bins per row, including the tail bin.
    pub fn num_bins(&self) -> usize {
        self.edges.len()
    }

    /// Lower and upper edge of gap bin `j`; the tail bin is `[1, inf)`.
    pub fn bin_edges(&self, j: usize) -> (f64, f64) {
        let nb = self.edges.len() - 1;
        if j == nb {
            (1.0, f64::INFINITY)
        } else {
            (self.edges[j], self.edges[j + 1])
        }
    }

    /// State reached from `state` when the new gap falls in bin `j`.
    pub fn next_state(&self, state: usize, j: usize) -> usize {
        (state * self.num_bins() + j) % self.states
    }

    /// Gap representing bin `j`: its midpoint, or a value past one for the
    /// tail bin.
    pub fn bin_value(&self, j: usize) -> f64 {
        let (lo, hi) = self.bin_edges(j);
        if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            SENTINEL_GAP
        }
    }

    /// History whose gaps represent `state`.
    pub fn representative(&self, state: usize) -> HistoryWindow {
        let width = self.num_bins();
        let len = self.params.kappa as usize - 1;
        let mut gaps = vec![0.0; len];
        let mut rest = state;
        for slot in gaps.iter_mut().rev() {
            *slot = self.bin_value(rest % width);
            rest /= width;
        }
        HistoryWindow::new(gaps).expect("bin values are positive")
    }

    pub fn entry(&self, state: usize, j: usize) -> f64 {
        self.entries[state * self.num_bins() + j]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let w = self.num_bins();
        &self.entries[state * w..(state + 1) * w]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.states).map(|r| self.row(r).iter().sum()).collect()
    }

    /// Pushes a distribution over states one step forward.
    pub fn step_distribution(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.states];
        for (r, &m) in dist.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (j, e) in self.row(r).iter().enumerate() {
                out[self.next_state(r, j)] += m * e;
            }
        }
        out
    }

    /// `(K v)(r) = sum_j K(r, j) v(next(r, j))`.
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self
                .row(r)
                .iter()
                .enumerate()
                .map(|(j, e)| e * v[self.next_state(r, j)])
                .sum();
        }
    }

    /// Spectral radius by shifted power iteration.
    ///
    /// Iterates `v <- (K + alpha I) v` with `alpha` the running estimate; the
    /// shift damps eigenvalues on the far side of the circle. For a positive
    /// `v`, `min_r (Kv)_r / v_r <= rho <= max_r (Kv)_r / v_r`, and the
    /// iteration stops when the two agree to [`POWER_TOLERANCE`].
    pub fn spectral_radius(&self) -> Result<f64> {
        let n = self.states;
        let mut v = vec![1.0; n];
        let mut kv = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for _ in 0..POWER_MAX_ITER {
            self.apply(&v, &mut kv);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (a, b) in kv.iter().zip(&v) {
                let q = a / b;
                lo = lo.min(q);
                hi = hi.max(q);
            }
            if !hi.is_finite() {
                return Ok(f64::INFINITY);
            }
            if hi == 0.0 {
                return Ok(0.0);
            }
            residual = (hi - lo) / hi;
            if residual <= POWER_TOLERANCE {
                return Ok(0.5 * (lo + hi));
            }
            let alpha = 0.5 * (lo + hi);
            let mut norm = 0.0f64;
            for (x, k) in v.iter_mut().zip(&kv) {
                *x = k + alpha * *x;
                norm = norm.max(*x);
            }
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Err(Error::NonConvergence {
            iterations: POWER_MAX_ITER,
            residual,
        })
    }
}

/// `Lambda(A, B)`: log spectral radius of the kernel tilted by
/// `e^{A k + B s}`, evaluated after [`tilt_reduce`].
pub fn lambda_cgf(spec: &TiltedKernelSpec, grid: &GridSpec) -> Result<f64> {
    let dk = DiscretizedKernel::from_spec(spec, grid)?;
    Ok(dk.spectral_radius()?.ln())
}
