//! Problem data: scalar parameters, integrability exponents, coefficient
//! fields with their structural constants, and the external force.
//!
//! Structural conditions on user-supplied profiles are checked by sampling,
//! see [`structure_report`] and [`validate_structure`].

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Jacobian, Metric};
use crate::error::{Error, Result};
use crate::grid::Mesh;

/// Scalar knobs of a computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    /// Growth exponent of the p-Laplace part, `p > 1`.
    pub p: f64,
    /// Regularization `ε ∈ (0,1)`.
    pub eps: f64,
    /// Truncation parameter `δ ∈ (0,1)`.
    pub delta: f64,
    /// Spatial integrability of the force, `q ∈ (n,∞]` (`f64::INFINITY` allowed).
    pub q: f64,
    /// Temporal integrability of the force, `r ∈ (2,∞]`.
    pub r: f64,
    /// Fallback Hölder exponent used when `q = r = ∞`.
    pub beta0: f64,
    pub tau: f64,
    pub t_end: f64,
    /// Spatial dimension, 1 or 2.
    pub n: usize,
    /// Number of solution components `N`.
    pub components: usize,
    /// Cells per axis.
    pub resolution: usize,
}

impl Default for Parameters {
    fn default() -> Self {
        Parameters {
            p: 2.0,
            eps: 1e-3,
            delta: 0.05,
            q: f64::INFINITY,
            r: f64::INFINITY,
            beta0: 0.5,
            tau: 0.01,
            t_end: 0.1,
            n: 2,
            components: 1,
            resolution: 32,
        }
    }
}

impl Parameters {
    /// Checks the parameter invariants. With `truncation` set, also requires
    /// `ε < δ/4` as needed by the truncated-gradient diagnostics.
    pub fn validate(&self, truncation: bool) -> Result<()> {
        if !(self.p > 1.0) || !self.p.is_finite() {
            return Err(Error::domain(format!(
                "p > 1 required (got p = {})",
                self.p
            )));
        }
        if !(1..=2).contains(&self.n) {
            return Err(Error::domain(format!("n must be 1 or 2 (got {})", self.n)));
        }
        if self.components == 0 {
            return Err(Error::domain("at least one component required"));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::domain(format!(
                "eps must lie in (0,1) (got {})",
                self.eps
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain(format!(
                "delta must lie in (0,1) (got {})",
                self.delta
            )));
        }
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return Err(Error::domain(format!(
                "beta0 must lie in (0,1) (got {})",
                self.beta0
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::domain(format!(
                "tau > 0 required (got {})",
                self.tau
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::domain(format!(
                "t_end >= 0 required (got {})",
                self.t_end
            )));
        }
        if self.resolution < 2 {
            return Err(Error::domain(format!(
                "resolution >= 2 required (got {})",
                self.resolution
            )));
        }
        integrability_sum(self.n, self.q, self.r)?;
        if truncation && !(self.eps < self.delta / 4.0) {
            return Err(Error::TruncationOrder {
                eps: self.eps,
                level: self.delta / 4.0,
            });
        }
        Ok(())
    }
}

fn recip(v: f64) -> f64 {
    if v.is_infinite() {
        0.0
    } else {
        1.0 / v
    }
}

/// `n/q + 2/r`, rejecting the pair unless it is `< 1`.
fn integrability_sum(n: usize, q: f64, r: f64) -> Result<f64> {
    if q.is_nan() || r.is_nan() || q <= 0.0 || r <= 0.0 {
        return Err(Error::domain("q and r must be positive"));
    }
    let value = n as f64 * recip(q) + 2.0 * recip(r);
    if value >= 1.0 {
        return Err(Error::ExponentViolation { value });
    }
    Ok(value)
}

/// Critical exponent `p_c = 2n/(n+2)`.
pub fn critical_exponent(n: usize) -> f64 {
    2.0 * n as f64 / (n as f64 + 2.0)
}

/// `ς_c = (2−p)n/p`, defined as 0 for `p ≥ 2`.
pub fn sigma_critical(p: f64, n: usize) -> f64 {
    if p >= 2.0 {
        0.0
    } else {
        (2.0 - p) * n as f64 / p
    }
}

/// Conjugate of `s/2`, i.e. `s/(s−2)`; equals 1 for `s = ∞`.
pub fn half_conjugate(s: f64) -> f64 {
    if s.is_infinite() {
        1.0
    } else {
        s / (s - 2.0)
    }
}

/// Exponents of the local gradient bound: `π`, `d`, `e` together with the
/// auxiliary constants chosen to define them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoserExponents {
    pub pi: f64,
    pub d: f64,
    pub e: f64,
    /// The constant `σ > 2` used for `n = 2`; `None` otherwise.
    pub sigma: Option<f64>,
    /// Higher integrability exponent used in the subcritical branch.
    pub p_tilde: Option<f64>,
    /// Whether the side conditions defining `d` are satisfiable.
    pub hypotheses_hold: bool,
}

/// Evaluates `π`, `d`, `e` for any `n ≥ 1` (pure formulas, no range check on `n`).
///
/// For `n = 2` the free constant `σ` is fixed at `2 + min(1/4, (σ_max − 2)/2)`,
/// where `σ_max = min{1 + q/(2 r̂), 2/(2−p)₊}`. For `n = 1` the `n ≥ 3`
/// branch is used.
pub fn moser_exponents(p: f64, n: usize, q: f64, r: f64) -> MoserExponents {
    let nf = n as f64;
    let pc = critical_exponent(n);
    let pi = (1.0 / (p - 1.0)).max(2.0 / p);
    let r_hat = half_conjugate(r);

    let mut sigma = None;
    let mut p_tilde = None;
    let mut hypotheses_hold = true;

    let e = if n == 2 {
        let bound_q = if q.is_infinite() {
            f64::INFINITY
        } else {
            1.0 + q / (2.0 * r_hat)
        };
        let bound_p = if p >= 2.0 {
            f64::INFINITY
        } else {
            2.0 / (2.0 - p)
        };
        let upper = bound_q.min(bound_p);
        if upper <= 2.0 {
            hypotheses_hold = false;
        }
        let s = if upper.is_infinite() {
            2.25
        } else {
            2.0 + (0.25f64).min(((upper - 2.0) / 2.0).max(0.0))
        };
        sigma = Some(s);
        2.0 * s
    } else {
        nf + 2.0
    };

    let d = if p >= 2.0 {
        2.0
    } else if p > pc {
        match sigma {
            Some(s) => 2.0 - s * (2.0 - p),
            None => (nf + 2.0) * (p - pc),
        }
    } else {
        let lower = nf * (2.0 - p) / 2.0;
        let pt = if q.is_infinite() {
            (lower + 1.0).max(2.0)
        } else {
            let upper = p * q / 2.0;
            if upper <= lower.max(2.0) {
                hypotheses_hold = false;
            }
            (0.5 * (lower + upper)).max(2.0)
        };
        p_tilde = Some(pt);
        pt - lower
    };
    if d <= 0.0 {
        hypotheses_hold = false;
    }
    MoserExponents {
        pi,
        d,
        e,
        sigma,
        p_tilde,
        hypotheses_hold,
    }
}

/// Derived exponents for a parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub p_c: f64,
    pub sigma_c: f64,
    pub beta: f64,
    pub q_hat: f64,
    pub r_hat: f64,
    /// `n/q + 2/r`, always `< 1` in a valid report.
    pub integrability: f64,
    pub supercritical: bool,
    /// `p ≤ p_c`: extra local integrability of the solution is assumed.
    pub higher_integrability_required: bool,
    pub moser: MoserExponents,
}

impl ExponentReport {
    pub fn pi(&self) -> f64 {
        self.moser.pi
    }
    pub fn d(&self) -> f64 {
        self.moser.d
    }
    pub fn e(&self) -> f64 {
        self.moser.e
    }
}

pub fn validate_exponents(params: &Parameters) -> Result<ExponentReport> {
    let p = params.p;
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("p > 1 required (got p = {p})")));
    }
    if !(1..=2).contains(&params.n) {
        return Err(Error::domain(format!(
            "n must be 1 or 2 (got {})",
            params.n
        )));
    }
    let integrability = integrability_sum(params.n, params.q, params.r)?;
    let beta = if params.q.is_infinite() && params.r.is_infinite() {
        params.beta0
    } else {
        1.0 - integrability
    };
    let p_c = critical_exponent(params.n);
    Ok(ExponentReport {
        p_c,
        sigma_c: sigma_critical(p, params.n),
        beta,
        q_hat: half_conjugate(params.q),
        r_hat: half_conjugate(params.r),
        integrability,
        supercritical: p > p_c,
        higher_integrability_required: p <= p_c,
        moser: moser_exponents(p, params.n, params.q, params.r),
    })
}

/// Rule evaluated at a space-time point.
pub type ScalarRule = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type MetricRule = Arc<dyn Fn(&[f64], f64) -> Metric + Send + Sync>;
/// Vector-valued rule; writes `N` components into the output slice.
pub type VectorRule = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Rule {
        rule: ScalarRule,
        time_dependent: bool,
    },
}

impl ScalarField {
    #[inline]
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        match self {
            ScalarField::Constant(c) => *c,
            ScalarField::Rule { rule, .. } => rule(x, t),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(
            self,
            ScalarField::Rule {
                time_dependent: true,
                ..
            }
        )
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Rule { time_dependent, .. } => {
                write!(f, "Rule {{ time_dependent: {time_dependent} }}")
            }
        }
    }
}

/// The matrix field `γ(x,t)`.
#[derive(Clone)]
pub enum MetricField {
    Identity,
    Diagonal(Vec<f64>),
    /// `R(ωt) diag(major, minor) R(ωt)ᵀ` in two dimensions.
    Rotating {
        major: f64,
        minor: f64,
        omega: f64,
    },
    Rule {
        rule: MetricRule,
        time_dependent: bool,
    },
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricField::Identity => write!(f, "identity-gamma"),
            MetricField::Diagonal(d) => write!(f, "diag-gamma({d:?})"),
            MetricField::Rotating {
                major,
                minor,
                omega,
            } => {
                write!(
                    f,
                    "rotating-gamma(major={major}, minor={minor}, omega={omega})"
                )
            }
            MetricField::Rule { time_dependent, .. } => {
                write!(f, "Rule {{ time_dependent: {time_dependent} }}")
            }
        }
    }
}

impl MetricField {
    /// Parses the named presets `identity-gamma`, `diag-gamma(a,b)` and
    /// `rotating-gamma(ω)`. The rotating preset uses eigenvalues 2 and 1/2.
    pub fn from_preset(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "identity-gamma" {
            return Ok(MetricField::Identity);
        }
        let args = |prefix: &str| -> Option<Result<Vec<f64>>> {
            let inner = name.strip_prefix(prefix)?.strip_suffix(')')?;
            Some(
                inner
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::domain(format!("bad number `{s}` in `{name}`")))
                    })
                    .collect(),
            )
        };
        if let Some(vals) = args("diag-gamma(") {
            let vals = vals?;
            if vals.is_empty() || vals.len() > 2 || vals.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::domain(format!(
                    "diag-gamma needs 1 or 2 positive entries: `{name}`"
                )));
            }
            return Ok(MetricField::Diagonal(vals));
        }
        if let Some(vals) = args("rotating-gamma(") {
            let vals = vals?;
            if vals.len() != 1 {
                return Err(Error::domain(format!(
                    "rotating-gamma takes one argument: `{name}`"
                )));
            }
            return Ok(MetricField::Rotating {
                major: 2.0,
                minor: 0.5,
                omega: vals[0],
            });
        }
        Err(Error::domain(format!("unknown gamma preset `{name}`")))
    }

    #[inline]
    pub fn eval(&self, dim: usize, x: &[f64], t: f64) -> Metric {
        match self {
            MetricField::Identity => Metric::identity(dim),
            MetricField::Diagonal(d) => {
                if d.len() == dim {
                    Metric::diagonal(d)
                } else {
                    Metric::diagonal(&d[..dim])
                }
            }
            MetricField::Rotating {
                major,
                minor,
                omega,
            } => {
                if dim == 1 {
                    return Metric::diagonal(&[*major]);
                }
                let (s, c) = (omega * t).sin_cos();
                let off = (major - minor) * c * s;
                Metric::from_rows(
                    2,
                    [
                        [major * c * c + minor * s * s, off],
                        [off, major * s * s + minor * c * c],
                    ],
                )
            }
            MetricField::Rule { rule, .. } => rule(x, t),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        match self {
            MetricField::Rotating { omega, .. } => *omega != 0.0,
            MetricField::Rule { time_dependent, .. } => *time_dependent,
            _ => false,
        }
    }

    /// Whether every evaluation is a diagonal matrix.
    pub fn is_diagonal(&self) -> bool {
        matches!(self, MetricField::Identity | MetricField::Diagonal(_))
    }

    /// Closed-form upper bound of `Σ|γ_{αβ}| + Σ|∂_tγ_{αβ}|` for the presets.
    fn preset_bound(&self, dim: usize) -> Option<f64> {
        match self {
            MetricField::Identity => Some(dim as f64),
            MetricField::Diagonal(d) => Some(d.iter().take(dim).sum()),
            MetricField::Rotating {
                major,
                minor,
                omega,
            } => {
                let spread = (major - minor).abs();
                Some(major + minor + spread + 2.0 * std::f64::consts::SQRT_2 * spread * omega.abs())
            }
            MetricField::Rule { .. } => None,
        }
    }

    fn preset_ellipticity(&self) -> Option<f64> {
        let (lo, hi) = match self {
            MetricField::Identity => (1.0, 1.0),
            MetricField::Diagonal(d) => (
                d.iter().cloned().fold(f64::INFINITY, f64::min),
                d.iter().cloned().fold(0.0, f64::max),
            ),
            MetricField::Rotating { major, minor, .. } => (major.min(*minor), major.max(*minor)),
            MetricField::Rule { .. } => return None,
        };
        Some(lo.min(1.0 / hi))
    }
}

/// Diffusivity profile `g : (0,∞) → (0,∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `g(σ) = σ^{s/2−1}`.
    Power { s: f64 },
    /// Piecewise-linear interpolation of `(σ, g(σ))` samples, constant beyond the ends.
    Table { sigma: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn power(s: f64) -> Self {
        Profile::Power { s }
    }

    pub fn table(sigma: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if sigma.len() != values.len() || sigma.len() < 2 {
            return Err(Error::domain(
                "profile table needs at least two (sigma, value) pairs",
            ));
        }
        if sigma.windows(2).any(|w| !(w[1] > w[0])) || sigma[0] < 0.0 {
            return Err(Error::domain(
                "profile table sigma must be non-negative and increasing",
            ));
        }
        if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::domain("profile table values must be positive"));
        }
        Ok(Profile::Table { sigma, values })
    }

    fn segment(sigma: &[f64], s: f64) -> usize {
        match sigma.binary_search_by(|v| v.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(sigma.len() - 2),
            Err(i) => i.saturating_sub(1).min(sigma.len() - 2),
        }
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Profile::Power { s: exp } => {
                let k = exp / 2.0 - 1.0;
                if k == 0.0 {
                    1.0
                } else if k == -0.5 {
                    1.0 / s.sqrt()
                } else {
                    s.powf(k)
                }
            }
            Profile::Table { sigma, values } => {
                if s <= sigma[0] {
                    return values[0];
                }
                if s >= sigma[sigma.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = Self::segment(sigma, s);
                let w = (s - sigma[i]) / (sigma[i + 1] - sigma[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Profile::Power { s: exp } => {
                let k = exp / 2.0 - 1.0;
                if k == 0.0 {
                    0.0
                } else {
                    k * s.powf(k - 1.0)
                }
            }
            Profile::Table { sigma, values } => {
                if s < sigma[0] || s >= sigma[sigma.len() - 1] {
                    return 0.0;
                }
                let i = Self::segment(sigma, s);
                (values[i + 1] - values[i]) / (sigma[i + 1] - sigma[i])
            }
        }
    }

    /// `½ ∫₀^σ g(ε² + τ) dτ`.
    pub fn half_primitive(&self, eps2: f64, sigma: f64) -> Result<f64> {
        if sigma <= 0.0 {
            return Ok(0.0);
        }
        match self {
            Profile::Power { s } => {
                let k = s / 2.0;
                if k == 0.0 {
                    Ok(0.5 * ((eps2 + sigma).ln() - eps2.ln()))
                } else {
                    Ok(((eps2 + sigma).powf(k) - eps2.powf(k)) / (2.0 * k))
                }
            }
            Profile::Table { .. } => {
                let f = |tau: f64| self.value(eps2 + tau);
                Ok(0.5 * adaptive_simpson(&f, 0.0, sigma, 1e-12 * (1.0 + sigma), 40)?)
            }
        }
    }

    /// Slope of a linear modulus of continuity for `g′` on `[c1, c2]`, i.e.
    /// `max |g″|` there. Only available for power profiles.
    pub fn modulus_slope(&self, c1: f64, c2: f64) -> Option<f64> {
        match self {
            Profile::Power { s } => {
                let k = s / 2.0 - 1.0;
                let g2 = |x: f64| (k * (k - 1.0) * x.powf(k - 2.0)).abs();
                Some(g2(c1).max(g2(c2)))
            }
            Profile::Table { .. } => None,
        }
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::QuadratureFailure("non-finite integrand".into()));
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::QuadratureFailure(
                "maximum subdivision depth reached".into(),
            ));
        }
        Ok(
            recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)?
                + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)?,
        )
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, depth)
}

/// Coefficients `a₁, a_p, γ`, profiles `g₁, g_p`, and the structural constants.
#[derive(Clone, Debug)]
pub struct CoefficientModel {
    pub a1: ScalarField,
    pub ap: ScalarField,
    pub gamma: MetricField,
    pub g1: Profile,
    pub gp: Profile,
    /// `γ₀ ∈ (0,1)`.
    pub gamma0: f64,
    /// `Γ₀ ∈ (1,∞)`.
    pub big_gamma0: f64,
    /// `κ₀ > 0`.
    pub kappa0: f64,
    pub dim: usize,
}

impl CoefficientModel {
    /// Default power profiles with constant coefficients and the given metric.
    ///
    /// `κ₀ = min{1, p−1}`; `γ₀` and `Γ₀` are taken from closed-form bounds
    /// of the preset (for rule-based metrics they must be set by the caller).
    pub fn power_law(p: f64, dim: usize, a1: f64, ap: f64, gamma: MetricField) -> Self {
        let gamma0 = gamma.preset_ellipticity().unwrap_or(0.5).min(0.5);
        let growth_p = 1.0 + (p / 2.0 - 1.0).abs();
        let coefficient_bound = a1 + ap + gamma.preset_bound(dim).unwrap_or(dim as f64);
        let big_gamma0 = [
            1.5,
            growth_p,
            coefficient_bound,
            1.0 / ap.max(f64::MIN_POSITIVE),
        ]
        .into_iter()
        .fold(1.0 + 1e-9, f64::max);
        CoefficientModel {
            a1: ScalarField::Constant(a1),
            ap: ScalarField::Constant(ap),
            gamma,
            g1: Profile::power(1.0),
            gp: Profile::power(p),
            gamma0,
            big_gamma0,
            kappa0: (p - 1.0).min(1.0),
            dim,
        }
    }

    /// `a₁ = a_p = 1`, `γ = I`, default profiles: the plain `(1,p)`-Laplacian.
    pub fn standard(p: f64, dim: usize) -> Self {
        Self::power_law(p, dim, 1.0, 1.0, MetricField::Identity)
    }

    /// `λ₀ = κ₀ Γ₀⁻¹`.
    pub fn lambda0(&self) -> f64 {
        self.kappa0 / self.big_gamma0
    }

    #[inline]
    pub fn metric(&self, x: &[f64], t: f64) -> Metric {
        self.gamma.eval(self.dim, x, t)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.gamma.is_time_dependent() || self.a1.is_time_dependent() || self.ap.is_time_dependent()
    }

    /// Whether the p-part alone is active: `a₁ ≡ 0`.
    pub fn one_laplace_vanishes(&self) -> bool {
        matches!(self.a1, ScalarField::Constant(c) if c == 0.0)
    }

    /// Frozen scalar diffusivity `a₁ g₁(s) + a_p g_p(s)` at `s = ε² + |ζ|²_γ`.
    #[inline]
    pub fn diffusivity(&self, x: &[f64], t: f64, s: f64) -> f64 {
        let a1 = self.a1.eval(x, t);
        let one = if a1 == 0.0 {
            0.0
        } else {
            a1 * self.g1.value(s)
        };
        one + self.ap.eval(x, t) * self.gp.value(s)
    }
}

/// `|ζ|_γ` at `(x,t)`.
pub fn gamma_norm(model: &CoefficientModel, x: &[f64], t: f64, zeta: &Jacobian) -> f64 {
    model.metric(x, t).norm_jac(zeta)
}

/// External force `f : Ω_T → ℝᴺ`.
#[derive(Clone)]
pub struct ForcingTerm {
    pub components: usize,
    pub rule: VectorRule,
    pub time_dependent: bool,
    /// Set when the force is known to vanish identically.
    pub is_zero: bool,
    /// Optional time-independent nodal samples, node-major; these take
    /// precedence over `rule` when assembling the load.
    pub samples: Option<Vec<f64>>,
}

impl fmt::Debug for ForcingTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForcingTerm")
            .field("components", &self.components)
            .field("time_dependent", &self.time_dependent)
            .field("is_zero", &self.is_zero)
            .field("samples", &self.samples.as_ref().map(|s| s.len()))
            .finish()
    }
}

impl ForcingTerm {
    pub fn zero(components: usize) -> Self {
        ForcingTerm {
            components,
            rule: Arc::new(|_, _, out: &mut [f64]| out.fill(0.0)),
            time_dependent: false,
            is_zero: true,
            samples: None,
        }
    }

    pub fn constant(values: Vec<f64>) -> Self {
        let is_zero = values.iter().all(|&v| v == 0.0);
        let components = values.len();
        ForcingTerm {
            components,
            rule: Arc::new(move |_, _, out: &mut [f64]| out.copy_from_slice(&values)),
            time_dependent: false,
            is_zero,
            samples: None,
        }
    }

    pub fn from_rule(components: usize, time_dependent: bool, rule: VectorRule) -> Self {
        ForcingTerm {
            components,
            rule,
            time_dependent,
            is_zero: false,
            samples: None,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.rule)(x, t, out)
    }
}

/// `‖f‖_{L^r(0,T; L^q(Ω))}` on the implicit-Euler time grid `t_k = kτ`,
/// `k = 1..steps`, with centroid quadrature in space.
pub fn lq_lr_norm(f: &ForcingTerm, mesh: &Mesh, tau: f64, steps: usize, q: f64, r: f64) -> f64 {
    let mut buf = vec![0.0; f.components];
    let slice_norm = |t: f64, buf: &mut Vec<f64>| -> f64 {
        let mut acc = 0.0f64;
        for e in 0..mesh.element_count() {
            let c = mesh.centroid(e);
            f.eval(&c[..mesh.dim()], t, buf);
            let v = buf.iter().map(|x| x * x).sum::<f64>().sqrt();
            if q.is_infinite() {
                acc = acc.max(v);
            } else {
                acc += mesh.volume(e) * v.powf(q);
            }
        }
        if q.is_infinite() {
            acc
        } else {
            acc.powf(1.0 / q)
        }
    };
    let mut acc = 0.0f64;
    for k in 1..=steps {
        let v = slice_norm(k as f64 * tau, &mut buf);
        if r.is_infinite() {
            acc = acc.max(v);
        } else {
            acc += tau * v.powf(r);
        }
    }
    if r.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / r)
    }
}

/// How structural conditions are sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_count: usize,
    /// Regularization levels `ε = 2⁻ᵏ`.
    pub eps_levels: Vec<f64>,
    /// Box from which space points are drawn.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub t_max: f64,
    pub point_count: usize,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(dim: usize, seed: u64) -> Self {
        SamplingPlan {
            sigma_min: 1e-8,
            sigma_max: 1e8,
            sigma_count: 161,
            eps_levels: (1..=20).map(|k| 2f64.powi(-k)).collect(),
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
            t_max: 1.0,
            point_count: 256,
            seed,
        }
    }

    /// Log-spaced `σ` samples, with `σ = 0` prepended.
    pub fn sigmas(&self) -> Vec<f64> {
        let (lo, hi) = (self.sigma_min.ln(), self.sigma_max.ln());
        let m = self.sigma_count.max(2);
        std::iter::once(0.0)
            .chain((0..m).map(|i| (lo + (hi - lo) * i as f64 / (m - 1) as f64).exp()))
            .collect()
    }

    pub fn points(&self) -> Vec<(Vec<f64>, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.point_count)
            .map(|_| {
                let x = self
                    .lower
                    .iter()
                    .zip(&self.upper)
                    .map(|(&a, &b)| a + (b - a) * rng.random::<f64>())
                    .collect();
                (x, self.t_max * rng.random::<f64>())
            })
            .collect()
    }
}

/// One line of a [`StructureReport`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    /// Worst sampled margin; non-negative means satisfied.
    pub margin: f64,
    /// The sampled constant (e.g. the smallest ellipticity ratio).
    pub estimate: f64,
    pub witness: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub checks: Vec<ConditionCheck>,
}

impl StructureReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Relative slack absorbing rounding in sampled inequalities.
const STRUCTURE_RTOL: f64 = 1e-12;

struct Tracker {
    name: &'static str,
    margin: f64,
    estimate: f64,
    witness: String,
    tol: f64,
}

impl Tracker {
    fn new(name: &'static str, estimate: f64) -> Self {
        Tracker {
            name,
            margin: f64::INFINITY,
            estimate,
            witness: String::from("-"),
            tol: 0.0,
        }
    }

    fn observe(&mut self, margin: f64, scale: f64, witness: impl FnOnce() -> String) {
        if margin < self.margin || margin.is_nan() {
            self.margin = margin;
            self.tol = STRUCTURE_RTOL * scale.abs();
            self.witness = witness();
        }
    }

    fn finish(self) -> ConditionCheck {
        ConditionCheck {
            name: self.name.to_string(),
            pass: self.margin >= -self.tol,
            margin: self.margin,
            estimate: self.estimate,
            witness: self.witness,
        }
    }
}

/// Samples every structural condition and reports the worst margin of each.
///
/// Checks, by name:
/// `metric_symmetry`, `metric_ellipticity`, `p_ellipticity`, `one_ellipticity`,
/// `p_growth`, `one_growth`, `coefficient_bound`, `metric_time_lipschitz`,
/// `coefficient_positivity`.
pub fn structure_report(model: &CoefficientModel, p: f64, plan: &SamplingPlan) -> StructureReport {
    let sigmas = plan.sigmas();
    let points = plan.points();
    let dim = model.dim;
    let g0 = model.gamma0;
    let big = model.big_gamma0;

    let mut symmetry = Tracker::new("metric_symmetry", 0.0);
    let mut metric_ell = Tracker::new("metric_ellipticity", f64::INFINITY);
    for (x, t) in &points {
        let m = model.metric(x, *t);
        let asym = if dim == 2 {
            (m.get(0, 1) - m.get(1, 0)).abs()
        } else {
            0.0
        };
        symmetry.observe(-asym, m.abs_sum(), || format!("x={x:?}, t={t}"));
        symmetry.estimate = symmetry.estimate.max(asym);
        let (lo, hi) = m.eigen_extremes();
        metric_ell.estimate = metric_ell.estimate.min(lo.min(1.0 / hi));
        metric_ell.observe((lo - g0).min(1.0 / g0 - hi), hi, || {
            format!("x={x:?}, t={t}, eigenvalues=({lo}, {hi})")
        });
    }

    let mut p_ell = Tracker::new("p_ellipticity", f64::INFINITY);
    let mut one_ell = Tracker::new("one_ellipticity", f64::INFINITY);
    for &eps in &plan.eps_levels {
        let e2 = eps * eps;
        for &s in &sigmas {
            let arg = e2 + s;
            let lhs = model.gp.value(arg) + 2.0 * s * model.gp.derivative(arg).min(0.0);
            let rhs = arg.powf(p / 2.0 - 1.0);
            let ratio = lhs / rhs;
            p_ell.estimate = p_ell.estimate.min(ratio);
            p_ell.observe(ratio - model.kappa0, model.kappa0, || {
                format!("sigma={s:e}, eps={eps:e}")
            });

            let lhs1 = model.g1.value(arg) + 2.0 * s * model.g1.derivative(arg).min(0.0);
            let scale1 = model.g1.value(arg);
            one_ell.estimate = one_ell.estimate.min(lhs1 / scale1);
            one_ell.observe(lhs1 / scale1, 1.0, || format!("sigma={s:e}, eps={eps:e}"));
        }
    }

    let mut p_growth = Tracker::new("p_growth", 0.0);
    let mut one_growth = Tracker::new("one_growth", 0.0);
    for &s in sigmas.iter().filter(|&&s| s > 0.0) {
        let rp = (model.gp.value(s) + s * model.gp.derivative(s).abs()) / s.powf(p / 2.0 - 1.0);
        p_growth.estimate = p_growth.estimate.max(rp);
        p_growth.observe(big - rp, big, || format!("sigma={s:e}"));
        let r1 = (model.g1.value(s) + s * model.g1.derivative(s).abs()) * s.sqrt();
        one_growth.estimate = one_growth.estimate.max(r1);
        one_growth.observe(big - r1, big, || format!("sigma={s:e}"));
    }

    let fd = 1e-6;
    let fd_tol = 1e-6 * big;
    let mut bound = Tracker::new("coefficient_bound", 0.0);
    let mut time_lip = Tracker::new("metric_time_lipschitz", 0.0);
    let mut positivity = Tracker::new("coefficient_positivity", f64::INFINITY);
    for (x, t) in &points {
        let a1 = model.a1.eval(x, *t);
        let ap = model.ap.eval(x, *t);
        let m = model.metric(x, *t);
        let mut grads = 0.0;
        let mut xp = x.clone();
        let mut xm = x.clone();
        for a in 0..dim {
            xp[a] = x[a] + fd;
            xm[a] = x[a] - fd;
            let ga1 = (model.a1.eval(&xp, *t) - model.a1.eval(&xm, *t)) / (2.0 * fd);
            let gap = (model.ap.eval(&xp, *t) - model.ap.eval(&xm, *t)) / (2.0 * fd);
            let (mp, mm) = (model.metric(&xp, *t), model.metric(&xm, *t));
            let mut dg = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    dg += ((mp.get(i, j) - mm.get(i, j)) / (2.0 * fd)).abs();
                }
            }
            grads += ga1.abs() + gap.abs() + dg;
            xp[a] = x[a];
            xm[a] = x[a];
        }
        let (mp, mm) = (model.metric(x, t + fd), model.metric(x, t - fd));
        let mut dt = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                dt += ((mp.get(i, j) - mm.get(i, j)) / (2.0 * fd)).abs();
            }
        }
        let total = a1 + ap + m.abs_sum() + grads + dt;
        bound.estimate = bound.estimate.max(total);
        bound.observe(big - total + fd_tol, 0.0, || format!("x={x:?}, t={t}"));
        time_lip.estimate = time_lip.estimate.max(dt);
        time_lip.observe(big - dt + fd_tol, 0.0, || format!("x={x:?}, t={t}"));
        let pos = a1.min(ap - 1.0 / big);
        positivity.estimate = positivity.estimate.min(pos);
        positivity.observe(pos, 1.0 / big, || {
            format!("x={x:?}, t={t}, a1={a1}, ap={ap}")
        });
    }

    StructureReport {
        checks: vec![
            symmetry.finish(),
            metric_ell.finish(),
            p_ell.finish(),
            one_ell.finish(),
            p_growth.finish(),
            one_growth.finish(),
            bound.finish(),
            time_lip.finish(),
            positivity.finish(),
        ],
    }
}

/// Like [`structure_report`], but fails on the first violated condition.
pub fn validate_structure(
    model: &CoefficientModel,
    p: f64,
    plan: &SamplingPlan,
) -> Result<StructureReport> {
    if !(model.gamma0 > 0.0 && model.gamma0 < 1.0) {
        return Err(Error::domain(format!(
            "gamma0 must lie in (0,1) (got {})",
            model.gamma0
        )));
    }
    if !(model.big_gamma0 > 1.0) {
        return Err(Error::domain(format!(
            "Gamma0 must exceed 1 (got {})",
            model.big_gamma0
        )));
    }
    if !(model.kappa0 > 0.0) {
        return Err(Error::domain(format!(
            "kappa0 must be positive (got {})",
            model.kappa0
        )));
    }
    let report = structure_report(model, p, plan);
    if let Some(bad) = report.checks.iter().find(|c| !c.pass) {
        return Err(Error::StructureViolation {
            condition: bad.name.clone(),
            witness: bad.witness.clone(),
            margin: bad.margin,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_mesh, BoxDomain};

    fn params(n: usize, p: f64, q: f64, r: f64) -> Parameters {
        Parameters {
            n,
            p,
            q,
            r,
            ..Parameters::default()
        }
    }

    #[test]
    fn admissible_exponents_n2_r3() {
        let rep = validate_exponents(&params(2, 2.0, f64::INFINITY, 3.0)).unwrap();
        assert!((rep.integrability - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.p_c, 1.0);
        assert!(rep.supercritical);
        assert!(!rep.higher_integrability_required);
        assert!((rep.beta - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rep.q_hat, 1.0);
        assert!((rep.r_hat - 3.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_case_is_rejected() {
        let err = validate_exponents(&params(2, 2.0, 2.0, f64::INFINITY)).unwrap_err();
        assert!(matches!(err, Error::ExponentViolation { value } if value == 1.0));
    }

    #[test]
    fn q2_r4_is_rejected() {
        assert!(matches!(
            validate_exponents(&params(2, 2.0, 2.0, 4.0)),
            Err(Error::ExponentViolation { .. })
        ));
    }

    #[test]
    fn p_at_most_one_is_a_domain_error() {
        assert!(matches!(
            validate_exponents(&params(2, 1.0, 8.0, 8.0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            validate_exponents(&params(2, 0.9, 8.0, 8.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn sigma_c_for_p_1_2() {
        let rep = validate_exponents(&params(2, 1.2, f64::INFINITY, f64::INFINITY)).unwrap();
        assert!((rep.sigma_c - 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(rep.beta, 0.5);
    }

    #[test]
    fn sigma_c_is_at_least_two_in_subcritical_range_for_n3() {
        for n in 3..8 {
            let pc = critical_exponent(n);
            for k in 1..20 {
                let p = 1.0 + (pc - 1.0) * k as f64 / 20.0;
                assert!(sigma_critical(p, n) >= 2.0 - 1e-12, "n={n}, p={p}");
            }
            assert!((sigma_critical(pc, n) - 2.0).abs() < 1e-12);
        }
        assert_eq!(critical_exponent(2), 1.0);
    }

    #[test]
    fn moser_exponents_positive_in_supercritical_range() {
        for &p in &[1.1, 1.5, 1.9, 2.0, 3.0] {
            for &(q, r) in &[
                (f64::INFINITY, f64::INFINITY),
                (8.0, 8.0),
                (f64::INFINITY, 3.0),
            ] {
                let m = moser_exponents(p, 2, q, r);
                assert!(m.d > 0.0, "p={p} q={q} r={r}: {m:?}");
                assert!(m.hypotheses_hold);
                assert!(m.e > 4.0);
                assert!((m.pi - (1.0 / (p - 1.0)).max(2.0 / p)).abs() < 1e-15);
            }
        }
        let m = moser_exponents(3.0, 2, 10.0, 10.0);
        assert_eq!(m.d, 2.0);
    }

    #[test]
    fn truncation_precondition() {
        let mut p = Parameters::default();
        p.eps = 0.02;
        p.delta = 0.05;
        assert!(p.validate(false).is_ok());
        assert!(matches!(
            p.validate(true),
            Err(Error::TruncationOrder { .. })
        ));
        p.eps = 0.01;
        assert!(p.validate(true).is_ok());
    }

    #[test]
    fn default_profiles_pass_with_documented_constants() {
        for &p in &[1.5, 2.0, 3.0] {
            let model = CoefficientModel::standard(p, 2);
            let report = validate_structure(&model, p, &SamplingPlan::new(2, 0)).unwrap();
            assert_eq!(model.kappa0, (p - 1.0).min(1.0));
            let ell = report.get("p_ellipticity").unwrap();
            assert!(ell.estimate >= model.kappa0 * (1.0 - 1e-12));
            let g1 = report.get("one_growth").unwrap();
            assert!((g1.estimate - 1.5).abs() < 1e-12, "{}", g1.estimate);
        }
    }

    #[test]
    fn kappa_for_p_1_5_is_one_half() {
        let model = CoefficientModel::standard(1.5, 2);
        assert_eq!(model.kappa0, 0.5);
        let report = structure_report(&model, 1.5, &SamplingPlan::new(2, 1));
        let ell = report.get("p_ellipticity").unwrap();
        assert!(ell.pass);
        // The infimum is approached for sigma >> eps^2.
        assert!((ell.estimate - 0.5).abs() < 1e-6);
    }

    #[test]
    fn diagonal_metric_ellipticity_constant() {
        let model = CoefficientModel::power_law(
            2.0,
            2,
            1.0,
            1.0,
            MetricField::from_preset("diag-gamma(2, 0.5)").unwrap(),
        );
        assert_eq!(model.gamma0, 0.5);
        let report = validate_structure(&model, 2.0, &SamplingPlan::new(2, 3)).unwrap();
        let m = report.get("metric_ellipticity").unwrap();
        assert_eq!(m.estimate, 0.5);
        assert!(m.pass);
    }

    #[test]
    fn too_large_kappa_is_a_violation() {
        let mut model = CoefficientModel::standard(1.5, 2);
        model.kappa0 = 0.6;
        match validate_structure(&model, 1.5, &SamplingPlan::new(2, 0)) {
            Err(Error::StructureViolation { condition, .. }) => {
                assert_eq!(condition, "p_ellipticity")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn report_is_deterministic_for_seed() {
        let model = CoefficientModel::power_law(
            2.0,
            2,
            1.0,
            1.0,
            MetricField::from_preset("rotating-gamma(0.5)").unwrap(),
        );
        let a = structure_report(&model, 2.0, &SamplingPlan::new(2, 11));
        let b = structure_report(&model, 2.0, &SamplingPlan::new(2, 11));
        assert_eq!(a, b);
        assert!(a.all_pass(), "{a:?}");
    }

    #[test]
    fn gamma_norm_examples() {
        let id = CoefficientModel::standard(2.0, 2);
        let z = Jacobian::row_vector(&[3.0, 4.0]);
        assert_eq!(gamma_norm(&id, &[0.0, 0.0], 0.0, &z), 5.0);
        let diag =
            CoefficientModel::power_law(2.0, 2, 1.0, 1.0, MetricField::Diagonal(vec![4.0, 1.0]));
        assert_eq!(
            gamma_norm(&diag, &[0.0, 0.0], 0.0, &Jacobian::row_vector(&[1.0, 0.0])),
            2.0
        );
        assert_eq!(
            gamma_norm(&diag, &[0.0, 0.0], 0.0, &Jacobian::zeros(2, 2)),
            0.0
        );
    }

    #[test]
    fn table_profile_interpolates_and_integrates() {
        let prof = Profile::table(vec![0.0, 1.0, 2.0], vec![1.0, 3.0, 3.0]).unwrap();
        assert_eq!(prof.value(0.5), 2.0);
        assert_eq!(prof.derivative(0.5), 2.0);
        assert_eq!(prof.value(5.0), 3.0);
        // 1/2 * int_0^1 (1 + 2t) dt = 1
        let v = prof.half_primitive(0.0, 1.0).unwrap();
        assert!((v - 1.0).abs() < 1e-10, "{v}");
    }

    #[test]
    fn lq_lr_norm_examples() {
        let mesh = build_mesh(&BoxDomain::unit(2), &[4, 4]).unwrap();
        let c = ForcingTerm::constant(vec![-3.0]);
        let v = lq_lr_norm(&c, &mesh, 0.1, 10, 2.0, 2.0);
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(
            lq_lr_norm(&ForcingTerm::zero(1), &mesh, 0.1, 10, 2.0, 2.0),
            0.0
        );
        let one = ForcingTerm::constant(vec![1.0]);
        assert_eq!(
            lq_lr_norm(&one, &mesh, 0.1, 10, f64::INFINITY, f64::INFINITY),
            1.0
        );
    }

    #[test]
    fn preset_parsing() {
        assert!(matches!(
            MetricField::from_preset("identity-gamma"),
            Ok(MetricField::Identity)
        ));
        assert!(matches!(
            MetricField::from_preset("rotating-gamma(2)"),
            Ok(MetricField::Rotating { .. })
        ));
        assert!(MetricField::from_preset("diag-gamma(0, 1)").is_err());
        assert!(MetricField::from_preset("spiral").is_err());
    }
}
