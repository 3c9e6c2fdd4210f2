//! Pointwise nonlinear algebra: the regularized flux `A_ε`, the limit flux
//! with a subgradient selection, the bilinear forms obtained by
//! differentiating `A_ε`, the gradient maps `G_{p,ε}` and `G_{2δ,ε}`, and
//! the energy density whose γ-gradient is `A_ε`.
//!
//! Everything here is a pure function of its arguments.

use crate::algebra::{Jacobian, Metric};
use crate::error::{Error, Result};
use crate::model::CoefficientModel;

/// Tolerance for subgradient selections.
const SUBGRADIENT_TOL: f64 = 1e-12;

/// `A_ε(x,t,ζ)` together with its two summands.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxSample {
    pub value: Jacobian,
    /// `√(ε² + |ζ|²_γ)`.
    pub v_eps: f64,
    /// `[A_{1,ε}, A_{p,ε}]`.
    pub parts: [Jacobian; 2],
}

/// Coefficient evaluations shared by the flux and its derivative.
#[derive(Clone, Copy, Debug)]
struct Frozen {
    metric: Metric,
    /// `ε² + |ζ|²_γ`.
    s: f64,
    a1: f64,
    ap: f64,
}

fn freeze(model: &CoefficientModel, eps: f64, x: &[f64], t: f64, zeta: &Jacobian) -> Frozen {
    let metric = model.metric(x, t);
    let n2 = metric.inner_jac(zeta, zeta).max(0.0);
    Frozen {
        metric,
        s: eps * eps + n2,
        a1: model.a1.eval(x, t),
        ap: model.ap.eval(x, t),
    }
}

pub fn flux_a_eps(
    model: &CoefficientModel,
    eps: f64,
    x: &[f64],
    t: f64,
    zeta: &Jacobian,
) -> FluxSample {
    let fr = freeze(model, eps, x, t, zeta);
    let c1 = if fr.a1 == 0.0 {
        0.0
    } else {
        fr.a1 * model.g1.value(fr.s)
    };
    let cp = fr.ap * model.gp.value(fr.s);
    let one = zeta.scaled(c1);
    let pp = zeta.scaled(cp);
    FluxSample {
        value: one.add(&pp),
        v_eps: fr.s.sqrt(),
        parts: [one, pp],
    }
}

/// Limit flux `a₁ Z + a_p g_p(|ζ|²_γ) ζ`.
///
/// `z = None` selects the canonical subgradient: `ζ/|ζ|_γ` off the origin and
/// `0` at `ζ = 0`. The p-part is taken as 0 at `ζ = 0`.
pub fn flux_a0(
    model: &CoefficientModel,
    x: &[f64],
    t: f64,
    zeta: &Jacobian,
    z: Option<&Jacobian>,
) -> Result<Jacobian> {
    let metric = model.metric(x, t);
    let norm = metric.norm_jac(zeta);
    let z = match z {
        None if norm == 0.0 => Jacobian::zeros(zeta.rows(), zeta.cols()),
        None => zeta.scaled(1.0 / norm),
        Some(z) => {
            let zn = metric.norm_jac(z);
            if zn > 1.0 + SUBGRADIENT_TOL {
                return Err(Error::SubgradientViolation(format!(
                    "|Z|_γ = {zn} exceeds 1"
                )));
            }
            if norm > 0.0 {
                let dev = metric.norm_jac(&z.sub(&zeta.scaled(1.0 / norm)));
                if dev > SUBGRADIENT_TOL {
                    return Err(Error::SubgradientViolation(format!(
                        "Z deviates from ζ/|ζ|_γ by {dev:e}"
                    )));
                }
            }
            z.clone()
        }
    };
    let a1 = model.a1.eval(x, t);
    let ap = model.ap.eval(x, t);
    let pp = if norm == 0.0 {
        Jacobian::zeros(zeta.rows(), zeta.cols())
    } else {
        zeta.scaled(ap * model.gp.value(norm * norm))
    };
    Ok(z.scaled(a1).add(&pp))
}

/// The symmetric forms `𝒜_ε`, `ℬ_ε`, `𝒞_ε` frozen at `(x,t,ζ,ε)`.
///
/// `ℬ_ε(ξ,η) = Σ_s a_s [g_s ⟨ξ|η⟩_γ + 2 g_s′ ⟨ζ|ξ⟩_γ ⟨ζ|η⟩_γ]` is the
/// derivative of `A_ε` in `ζ`. `𝒞_ε` acts on `ℝⁿ` with the correction term
/// `Σ_j ⟨ζ^j|ξ⟩_γ ⟨ζ^j|η⟩_γ`, and `𝒜_ε` acts on `n`-tuples of `N×n`
/// matrices as `Σ_{μν} γ_{μν} ℬ_ε(ξ_μ, η_ν)`.
#[derive(Clone, Debug)]
pub struct BilinearEvaluator {
    pub metric: Metric,
    pub zeta: Jacobian,
    pub eps: f64,
    /// `a₁g₁ + a_pg_p` at `ε² + |ζ|²_γ`.
    pub scalar: f64,
    /// `2(a₁g₁′ + a_pg_p′)` at `ε² + |ζ|²_γ`.
    pub correction: f64,
    s: f64,
    p: f64,
}

pub fn bilinear_forms(
    model: &CoefficientModel,
    p: f64,
    eps: f64,
    x: &[f64],
    t: f64,
    zeta: &Jacobian,
) -> BilinearEvaluator {
    let fr = freeze(model, eps, x, t, zeta);
    let (g1, d1) = if fr.a1 == 0.0 {
        (0.0, 0.0)
    } else {
        (
            fr.a1 * model.g1.value(fr.s),
            fr.a1 * model.g1.derivative(fr.s),
        )
    };
    BilinearEvaluator {
        metric: fr.metric,
        zeta: zeta.clone(),
        eps,
        scalar: g1 + fr.ap * model.gp.value(fr.s),
        correction: 2.0 * (d1 + fr.ap * model.gp.derivative(fr.s)),
        s: fr.s,
        p,
    }
}

impl BilinearEvaluator {
    /// `h_{s,ε}(ζ) = (ε² + |ζ|²_γ)^{s/2−1}`.
    pub fn h(&self, s: f64) -> f64 {
        self.s.powf(s / 2.0 - 1.0)
    }

    /// `h_{1,ε} + h_{p,ε}`, the upper weight of the sandwich.
    pub fn upper_weight(&self) -> f64 {
        self.h(1.0) + self.h(self.p)
    }

    pub fn lower_weight(&self) -> f64 {
        self.h(self.p)
    }

    pub fn b(&self, xi: &Jacobian, eta: &Jacobian) -> f64 {
        let m = &self.metric;
        self.scalar * m.inner_jac(xi, eta)
            + self.correction * m.inner_jac(&self.zeta, xi) * m.inner_jac(&self.zeta, eta)
    }

    pub fn c(&self, xi: &[f64], eta: &[f64]) -> f64 {
        let m = &self.metric;
        let corr: f64 = (0..self.zeta.rows())
            .map(|j| {
                let row = self.zeta.row(j);
                m.inner(row, xi) * m.inner(row, eta)
            })
            .sum();
        self.scalar * m.inner(xi, eta) + self.correction * corr
    }

    /// `xi[μ]`, `eta[μ]` for `μ = 0..n` are the `N×n` slices.
    pub fn a(&self, xi: &[Jacobian], eta: &[Jacobian]) -> f64 {
        let n = self.metric.dim();
        let mut acc = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                let g = self.metric.get(mu, nu);
                if g != 0.0 {
                    acc += g * self.b(&xi[mu], &eta[nu]);
                }
            }
        }
        acc
    }

    /// `|ξ|²` in the norm matching [`Self::a`]: `Σ γ_{μν} ⟨ξ_μ|ξ_ν⟩_γ`.
    pub fn a_norm_sq(&self, xi: &[Jacobian]) -> f64 {
        let n = self.metric.dim();
        let mut acc = 0.0;
        for mu in 0..n {
            for nu in 0..n {
                acc += self.metric.get(mu, nu) * self.metric.inner_jac(&xi[mu], &xi[nu]);
            }
        }
        acc
    }
}

/// `⟨A_ε(ζ₁) − A_ε(ζ₂) | ζ₁ − ζ₂⟩_γ`.
pub fn monotonicity_pairing(
    model: &CoefficientModel,
    eps: f64,
    x: &[f64],
    t: f64,
    z1: &Jacobian,
    z2: &Jacobian,
) -> f64 {
    let a = flux_a_eps(model, eps, x, t, z1).value;
    let b = flux_a_eps(model, eps, x, t, z2).value;
    model.metric(x, t).inner_jac(&a.sub(&b), &z1.sub(z2))
}

/// `G_{p,ε}(ζ) = (ε² + |ζ|²_γ)^{(p−1)/2} ζ`.
pub fn map_g_p_eps(
    model: &CoefficientModel,
    p: f64,
    eps: f64,
    x: &[f64],
    t: f64,
    zeta: &Jacobian,
) -> Jacobian {
    let m = model.metric(x, t).norm_jac(zeta);
    zeta.scaled(magnitude_map(p, eps, m) / if m == 0.0 { 1.0 } else { m })
}

#[inline]
fn magnitude_map(p: f64, eps: f64, m: f64) -> f64 {
    (eps * eps + m * m).powf((p - 1.0) / 2.0) * m
}

/// Inverse of [`map_g_p_eps`]: bisection on the magnitude, then rescaling.
pub fn map_g_p_eps_inverse(
    model: &CoefficientModel,
    p: f64,
    eps: f64,
    x: &[f64],
    t: f64,
    eta: &Jacobian,
) -> Result<Jacobian> {
    let target = model.metric(x, t).norm_jac(eta);
    if target == 0.0 {
        return Ok(Jacobian::zeros(eta.rows(), eta.cols()));
    }
    // (ε²+m²)^{(p−1)/2} m ≥ max(m^p, ε^{p−1} m), so the root lies below both.
    let mut hi = target.powf(1.0 / p).min(target / eps.powf(p - 1.0));
    let mut lo = 0.0;
    while magnitude_map(p, eps, hi) < target {
        hi *= 2.0;
    }
    let mut steps = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || (hi - lo) <= 1e-15 * hi {
            break;
        }
        if steps == 200 {
            return Err(Error::ConvergenceFailure(format!(
                "G_p inverse bisection did not converge for |η| = {target:e}"
            )));
        }
        steps += 1;
        if magnitude_map(p, eps, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m = 0.5 * (lo + hi);
    Ok(eta.scaled(m / target))
}

/// Which multiple of `δ` a truncation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationLevel {
    Delta,
    TwoDelta,
}

impl TruncationLevel {
    pub fn value(self, delta: f64) -> f64 {
        match self {
            TruncationLevel::Delta => delta,
            TruncationLevel::TwoDelta => 2.0 * delta,
        }
    }
}

/// `G_{level,ε}(ζ) = (√(ε²+|ζ|²_γ) − level)₊ ζ/|ζ|_γ`, with `G(0) = 0`.
///
/// The single-`δ` map is only defined for `ε < δ`. `eps = 0` gives the
/// unregularized map.
pub fn trunc_gradient(
    model: &CoefficientModel,
    eps: f64,
    x: &[f64],
    t: f64,
    zeta: &Jacobian,
    delta: f64,
    level: TruncationLevel,
) -> Result<Jacobian> {
    if level == TruncationLevel::Delta && eps >= delta {
        return Err(Error::TruncationOrder { eps, level: delta });
    }
    Ok(truncate(&model.metric(x, t), eps, zeta, level.value(delta)))
}

pub(crate) fn truncate(metric: &Metric, eps: f64, zeta: &Jacobian, level: f64) -> Jacobian {
    let m = metric.norm_jac(zeta);
    let v = (eps * eps + m * m).sqrt();
    if v <= level || m == 0.0 {
        return Jacobian::zeros(zeta.rows(), zeta.cols());
    }
    zeta.scaled((v - level) / m)
}

/// `a₁ e₁(|ζ|²_γ) + a_p e_p(|ζ|²_γ)` with `e_s(σ) = ½ ∫₀^σ g_s(ε²+τ) dτ`.
pub fn energy_density(
    model: &CoefficientModel,
    eps: f64,
    x: &[f64],
    t: f64,
    zeta: &Jacobian,
) -> Result<f64> {
    let fr = freeze(model, eps, x, t, zeta);
    let sigma = fr.s - eps * eps;
    energy_from_sigma(model, eps, fr.a1, fr.ap, sigma)
}

pub(crate) fn energy_from_sigma(
    model: &CoefficientModel,
    eps: f64,
    a1: f64,
    ap: f64,
    sigma: f64,
) -> Result<f64> {
    let e2 = eps * eps;
    let one = if a1 == 0.0 {
        0.0
    } else {
        a1 * model.g1.half_primitive(e2, sigma)?
    };
    Ok(one + ap * model.gp.half_primitive(e2, sigma)?)
}

/// Sampled supremum of `ℬ_ε(ξ,ξ) / ((h₁+h_p)|ξ|²_γ)`, an estimate of the
/// upper sandwich constant.
pub fn estimate_upper_constant(
    model: &CoefficientModel,
    p: f64,
    eps: f64,
    samples: &[(Vec<f64>, f64, Jacobian, Jacobian)],
) -> f64 {
    samples
        .iter()
        .map(|(x, t, zeta, xi)| {
            let ev = bilinear_forms(model, p, eps, x, *t, zeta);
            let n = ev.metric.inner_jac(xi, xi);
            if n == 0.0 {
                0.0
            } else {
                ev.b(xi, xi) / (ev.upper_weight() * n)
            }
        })
        .fold(0.0, f64::max)
}
