//! Legendre transforms of `Lambda` and the contracted rate functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_params, Params, ProtocolKind};
use crate::optimize::{golden_section_max, golden_section_min};

use super::operator::{DiscretizedKernel, GridSpec};
use super::{tilt_reduce, TiltedKernelSpec};

/// Bound on `|A|` in the supremum defining `J`.
const A_BOUND: f64 = 50.0;
/// Bound on `|log(lambda - B)|` in the supremum defining `J`.
const U_BOUND: f64 = 30.0;
const NEWTON_MAX_ITER: usize = 200;

/// A rate function value and where it was evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// `(x, y)` for `J`, `(a, s)` for `I`, `(s)` or `(a)` for the
    /// contracted rates.
    pub location: Vec<f64>,
    pub value: f64,
    pub protocol: ProtocolKind,
    /// The optimization ran into the edge of its search box. With an
    /// infinite `value` the point lies outside the effective domain;
    /// otherwise the supremum is approached only in the limit.
    pub edge: bool,
}

/// Evaluates rate functions for one protocol and parameter set, reusing the
/// last optimal tilt as the next starting point.
#[derive(Debug, Clone)]
pub struct RateEvaluator {
    pub protocol: ProtocolKind,
    pub params: Params,
    pub grid: GridSpec,
    warm: (f64, f64),
}

struct Sup {
    value: f64,
    edge: bool,
}

impl RateEvaluator {
    pub fn new(protocol: ProtocolKind, params: Params, grid: GridSpec) -> Result<Self> {
        let params = validate_params(params)?;
        Ok(RateEvaluator {
            protocol,
            params,
            grid,
            warm: (0.0, 0.0),
        })
    }

    /// Uses [`GridSpec::default_for`].
    pub fn with_default_grid(protocol: ProtocolKind, params: Params) -> Result<Self> {
        Self::new(protocol, params, GridSpec::default_for(params.kappa))
    }

    /// `Lambda(A, B)`; `+inf` for `B >= lambda`.
    pub fn lambda(&self, a: f64, b: f64) -> Result<f64> {
        if !(b < self.params.lambda) {
            return Ok(f64::INFINITY);
        }
        let spec = TiltedKernelSpec {
            a,
            b,
            protocol: self.protocol,
            params: self.params,
        };
        let (d, shifted) = tilt_reduce(&spec)?;
        let p = Params::new(shifted, self.params.kappa)?;
        let dk = DiscretizedKernel::assemble(p, self.protocol, d, &self.grid)?;
        Ok(dk.spectral_radius()?.ln())
    }

    /// `sup_{A, B} [A x + B y - Lambda(A, B)]` by damped Newton steps with
    /// finite-difference derivatives.
    fn legendre(&mut self, x: f64, y: f64) -> Result<Sup> {
        let start = self.warm;
        let sup = self.newton(x, y, start)?;
        if sup.edge && start != (0.0, 0.0) {
            return self.newton(x, y, (0.0, 0.0));
        }
        Ok(sup)
    }

    /// Damped Newton ascent in `(A, u)` with `B = lambda - e^u`. Steps in `u`
    /// are relative to the distance from `lambda`, which keeps the finite
    /// differences well conditioned when the optimum has `B` far below 0.
    fn newton(&mut self, x: f64, y: f64, start: (f64, f64)) -> Result<Sup> {
        let lam = self.params.lambda;
        let to_u = |b: f64| (lam - b).ln().clamp(-U_BOUND, U_BOUND);
        let clamp = |a: f64, u: f64| (a.clamp(-A_BOUND, A_BOUND), u.clamp(-U_BOUND, U_BOUND));
        // Non-finite values (overflow, or underflow of the whole kernel)
        // count as -inf so the line search backs off.
        let objective = |me: &Self, a: f64, u: f64| -> Result<f64> {
            let b = lam - u.exp();
            let v = a * x + b * y - me.lambda(a, b)?;
            Ok(if v.is_finite() { v } else { f64::NEG_INFINITY })
        };

        let (mut a, mut u) = clamp(start.0, to_u(start.1));
        let mut f = objective(self, a, u)?;
        if !f.is_finite() {
            (a, u) = (0.0, lam.ln());
            f = objective(self, a, u)?;
        }
        // Gradient in (A, B), for the stopping and edge tests.
        let mut grad = (f64::INFINITY, f64::INFINITY);
        for _ in 0..NEWTON_MAX_ITER {
            let h = 1e-4;
            let g = |da: f64, du: f64| objective(self, a + da, u + du);
            let (fpa, fma, fpu, fmu) = (g(h, 0.0)?, g(-h, 0.0)?, g(0.0, h)?, g(0.0, -h)?);
            let (fpp, fpm, fmp, fmm) = (g(h, h)?, g(h, -h)?, g(-h, h)?, g(-h, -h)?);
            let ga = (fpa - fma) / (2.0 * h);
            let gu = (fpu - fmu) / (2.0 * h);
            let haa = (fpa - 2.0 * f + fma) / (h * h);
            let huu = (fpu - 2.0 * f + fmu) / (h * h);
            let hau = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            grad = (ga, -gu / u.exp());
            if !(ga.is_finite() && gu.is_finite()) {
                break;
            }
            let det = haa * huu - hau * hau;
            let (da, du) = if haa < 0.0 && det > 0.0 {
                (-(huu * ga - hau * gu) / det, -(haa * gu - hau * ga) / det)
            } else {
                let scale = haa.abs().max(huu.abs()).max(1.0);
                (ga / scale, gu / scale)
            };
            // Finite differences leave gradient noise near 1e-9, so ask
            // for no more than that.
            let predicted = ga * da + gu * du;
            if predicted.abs() < 1e-13 * f.abs().max(1.0) || ga.hypot(gu) < 1e-10 {
                break;
            }
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let (na, nu) = clamp(a + t * da, u + t * du);
                // A trial point far out can make the tilted chain mix too
                // slowly for power iteration; back off from it like from
                // any other non-improving point.
                let nf = match objective(self, na, nu) {
                    Err(Error::NonConvergence { .. }) => f64::NEG_INFINITY,
                    other => other?,
                };
                if nf > f {
                    (a, u, f) = (na, nu, nf);
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let b = lam - u.exp();
        let at_a_edge = (a <= -A_BOUND && grad.0 < 0.0) || (a >= A_BOUND && grad.0 > 0.0);
        // u at its upper bound is B at its lower one.
        let at_b_edge = (u >= U_BOUND && grad.1 < 0.0) || (u <= -U_BOUND && grad.1 > 0.0);
        let stuck = !(grad.0.abs() < 1e-4 && grad.1.abs() < 1e-4);
        let edge = at_a_edge || at_b_edge || stuck;
        let value = if stuck { f64::INFINITY } else { f.max(0.0) };
        self.warm = if edge { (0.0, 0.0) } else { (a, b) };
        Ok(Sup { value, edge })
    }

    /// `J(x, y) = sup_{A, B} [A x + B y - Lambda(A, B)]`.
    ///
    /// Since every `A_i >= 1`, `J` is infinite for `x < 1`. A unit interval
    /// holds at most `kappa` admissions, so it is also infinite for
    /// `y < 1/kappa`. At `y = 1/kappa` every admission would have to follow
    /// its channel's release without delay, which also has infinite cost.
    pub fn rate_j(&mut self, x: f64, y: f64) -> Result<RatePoint> {
        if !(y > 0.0) || !x.is_finite() {
            return Err(Error::InvalidArgument(format!("J needs finite x and y > 0 (got x={x}, y={y})")));
        }
        let sup = if x < 1.0 || y <= 1.0 / self.params.kappa as f64 {
            Sup {
                value: f64::INFINITY,
                edge: true,
            }
        } else {
            self.legendre(x, y)?
        };
        Ok(RatePoint {
            location: vec![x, y],
            value: sup.value,
            protocol: self.protocol,
            edge: sup.edge,
        })
    }

    /// Step count per unit time and the `J` arguments for `(a, s)`.
    ///
    /// CSMA takes `s t` steps, ALOHA `(a + s) t / 2` since each step adds one
    /// potential success and `S = 2 S~ - A`.
    fn scaling(&self, a: f64, s: f64) -> (f64, f64, f64) {
        match self.protocol {
            ProtocolKind::Csma => (s, a / s, 1.0 / s),
            ProtocolKind::Aloha => {
                let m = 0.5 * (a + s);
                (m, a / m, 1.0 / m)
            }
        }
    }

    /// `I(a, s)`, the rate of `(A(t)/t, S(t)/t)`.
    pub fn rate_i(&mut self, a: f64, s: f64) -> Result<RatePoint> {
        if !(a > 0.0) || !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("I needs a > 0 and s > 0 (got a={a}, s={s})")));
        }
        let (m, x, y) = self.scaling(a, s);
        let j = self.rate_j(x, y)?;
        Ok(RatePoint {
            location: vec![a, s],
            value: m * j.value,
            protocol: self.protocol,
            edge: j.edge,
        })
    }

    /// Minimizer `(a_min, s_min)` of `I` given the stationary means
    /// `(mean_a, mean_sigma)` of one step.
    pub fn minimizer(&self, mean_a: f64, mean_sigma: f64) -> (f64, f64) {
        match self.protocol {
            ProtocolKind::Csma => (mean_a / mean_sigma, 1.0 / mean_sigma),
            ProtocolKind::Aloha => (mean_a / mean_sigma, (2.0 - mean_a) / mean_sigma),
        }
    }

    /// `I^S(s) = inf_a I(a, s)`, by golden-section search over `a`.
    ///
    /// `a >= s` keeps `x >= 1`. For ALOHA `y >= 1/kappa` caps `a` at
    /// `2 kappa - s`; for CSMA the search stops at `s + 3 lambda + 3`.
    pub fn rate_is(&mut self, s: f64) -> Result<RatePoint> {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("I^S needs s > 0 (got {s})")));
        }
        let kappa = self.params.kappa as f64;
        let hi = match self.protocol {
            ProtocolKind::Csma => s + 3.0 * self.params.lambda + 3.0,
            ProtocolKind::Aloha => 2.0 * kappa - s,
        };
        if hi <= s || (self.protocol == ProtocolKind::Csma && s > kappa) {
            return Ok(RatePoint {
                location: vec![s],
                value: f64::INFINITY,
                protocol: self.protocol,
                edge: true,
            });
        }
        let mut failure = None;
        let mut edge_at = Vec::new();
        let (a, value) = golden_section_min(
            |a| match self.rate_i(a, s) {
                Ok(r) => {
                    if r.edge {
                        edge_at.push(a);
                    }
                    r.value
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            s,
            hi,
            1e-6,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let edge = edge_at.iter().any(|&e| (e - a).abs() < 1e-5) || !value.is_finite();
        Ok(RatePoint {
            location: vec![s],
            value,
            protocol: self.protocol,
            edge,
        })
    }

    /// CSMA only: `I^S(s) = s sup_B [B/s - Lambda(0, B)]`, the rate of the
    /// gap sum exceeding `t` after `s t` steps. Independent of
    /// [`rate_is`](Self::rate_is), which goes through the attempts as well.
    pub fn rate_is_direct(&self, s: f64) -> Result<f64> {
        if self.protocol != ProtocolKind::Csma {
            return Err(Error::InvalidArgument(
                "the direct I^S formula holds for CSMA only".into(),
            ));
        }
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!("I^S needs s > 0 (got {s})")));
        }
        let lam = self.params.lambda;
        let y = 1.0 / s;
        let mut failure = None;
        // Search in u = log(lambda - B), where the objective is unimodal.
        let (_, v) = golden_section_max(
            |u| {
                let b = lam - u.exp();
                match self.lambda(0.0, b) {
                    Ok(l) if l.is_finite() => b * y - l,
                    Ok(_) => f64::NEG_INFINITY,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            -U_BOUND,
            10.0,
            1e-9,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(s * v.max(0.0))
    }
}

/// `J(x, y)` on the default grid.
pub fn rate_j(x: f64, y: f64, proto: ProtocolKind, p: Params) -> Result<RatePoint> {
    RateEvaluator::with_default_grid(proto, p)?.rate_j(x, y)
}

/// `I(a, s)` on the default grid.
pub fn rate_i(a: f64, s: f64, proto: ProtocolKind, p: Params) -> Result<RatePoint> {
    RateEvaluator::with_default_grid(proto, p)?.rate_i(a, s)
}

/// `I^S(s)` on the default grid.
pub fn rate_is(s: f64, proto: ProtocolKind, p: Params) -> Result<RatePoint> {
    RateEvaluator::with_default_grid(proto, p)?.rate_is(s)
}

/// Rate of `A(t)/t`: the Poisson rate `lambda - a + a log(a/lambda)`. The
/// protocol does not matter since every arrival is an attempt.
pub fn rate_ia(a: f64, p: Params) -> Result<RatePoint> {
    let p = validate_params(p)?;
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("I^A needs a > 0 (got {a})")));
    }
    let lam = p.lambda;
    Ok(RatePoint {
        location: vec![a],
        value: lam - a + a * (a / lam).ln(),
        protocol: ProtocolKind::Csma,
        edge: false,
    })
}
