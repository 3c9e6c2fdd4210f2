//! Canonical problems with known structure: the radial stationary solution
//! with a flat facet, laminar Bingham flow in a square pipe, and constants.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{build_mesh, BoxDomain, Mesh, VectorField};
use crate::model::{CoefficientModel, ForcingTerm, Parameters};
use crate::solver::{steady_state, BoundaryData, Scenario, SolverConfig};

/// `u(x) = (|x|−1)₊^{p′}/p′` and its gradient, `p′ = p/(p−1)`.
///
/// Solves `Δ₁u + Δ_pu = n` away from the facet `{|x| ≤ 1}`.
pub fn exact_radial(p: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let q = p / (p - 1.0);
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r <= 1.0 {
        return (0.0, vec![0.0; x.len()]);
    }
    let d = r - 1.0;
    let value = d.powf(q) / q;
    let slope = d.powf(q - 1.0);
    (value, x.iter().map(|v| slope * v / r).collect())
}

fn square_mesh(half_width: f64, resolution: usize) -> Result<Arc<Mesh>> {
    Ok(Arc::new(build_mesh(
        &BoxDomain::centered(2, half_width),
        &[resolution, resolution],
    )?))
}

/// Transfinite (Coons) interpolation of boundary values into a 2D box.
fn coons_fill(mesh: &Mesh, data: impl Fn(&[f64]) -> f64) -> VectorField {
    let d = mesh.domain();
    let (x0, x1, y0, y1) = (d.lower[0], d.upper[0], d.lower[1], d.upper[1]);
    VectorField::from_fn(mesh, 1, 0.0, |x, out| {
        let s = (x[0] - x0) / (x1 - x0);
        let t = (x[1] - y0) / (y1 - y0);
        let g = |a: f64, b: f64| data(&[a, b]);
        let edges =
            (1.0 - s) * g(x0, x[1]) + s * g(x1, x[1]) + (1.0 - t) * g(x[0], y0) + t * g(x[0], y1);
        let corners = (1.0 - s) * (1.0 - t) * g(x0, y0)
            + s * (1.0 - t) * g(x1, y0)
            + (1.0 - s) * t * g(x0, y1)
            + s * t * g(x1, y1);
        out[0] = edges - corners;
    })
}

/// Steady radial benchmark on `(−2,2)²`: `a₁ = a_p = 1`, `γ = I`, boundary
/// values from [`exact_radial`], and constant force `f ≡ −2`.
///
/// With the evolution written as `∂_t u − div A(Du) = f`, the stationary
/// state solving `Δ₁u + Δ_pu = n` needs `f = −n`. The initial field is the
/// Coons patch of the boundary data.
pub fn scenario_radial_steady(p: f64, resolution: usize, eps: f64, delta: f64) -> Result<Scenario> {
    let params = Parameters {
        p,
        eps,
        delta,
        n: 2,
        components: 1,
        resolution,
        tau: 10.0,
        t_end: 100.0,
        ..Parameters::default()
    };
    params.validate(false)?;
    let mesh = square_mesh(2.0, resolution)?;
    let initial = coons_fill(&mesh, |x| exact_radial(p, x).0);
    Ok(Scenario {
        name: "radial-steady".into(),
        descriptor: format!("radial-steady|p={p}|resolution={resolution}|eps={eps}|delta={delta}"),
        model: CoefficientModel::standard(p, 2),
        forcing: ForcingTerm::constant(vec![-2.0]),
        initial,
        boundary: BoundaryData::Rule {
            rule: Arc::new(move |x, _, out| out[0] = exact_radial(p, x).0),
            time_dependent: false,
        },
        mesh,
        params,
    })
}

/// Uniform pressure drop driving the pipe flow.
#[derive(Clone)]
pub enum PipeForcing {
    Constant(f64),
    /// `before` for `t < switch_time`, then `after`.
    Step {
        before: f64,
        after: f64,
        switch_time: f64,
    },
    Rule(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for PipeForcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipeForcing::Constant(c) => write!(f, "constant({c})"),
            PipeForcing::Step {
                before,
                after,
                switch_time,
            } => write!(f, "step({before},{after},{switch_time})"),
            PipeForcing::Rule(_) => write!(f, "rule"),
        }
    }
}

impl PipeForcing {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            PipeForcing::Constant(c) => *c,
            PipeForcing::Step {
                before,
                after,
                switch_time,
            } => {
                if t < *switch_time {
                    *before
                } else {
                    *after
                }
            }
            PipeForcing::Rule(r) => r(t),
        }
    }
}

/// Laminar Bingham flow through the square pipe `(−1,1)²`: `p = 2`,
/// `a₁ = a_p = 1`, `γ = I`, no-slip walls, fluid at rest initially.
pub fn scenario_bingham_pipe(
    forcing: PipeForcing,
    resolution: usize,
    eps: f64,
    delta: f64,
) -> Result<Scenario> {
    let params = Parameters {
        p: 2.0,
        eps,
        delta,
        n: 2,
        components: 1,
        resolution,
        tau: 0.05,
        t_end: 1.0,
        ..Parameters::default()
    };
    params.validate(false)?;
    let mesh = square_mesh(1.0, resolution)?;
    let descriptor =
        format!("bingham-pipe|forcing={forcing:?}|resolution={resolution}|eps={eps}|delta={delta}");
    let force = match forcing {
        PipeForcing::Constant(c) => ForcingTerm::constant(vec![c]),
        other => ForcingTerm::from_rule(
            1,
            true,
            Arc::new(move |_, t, out: &mut [f64]| out[0] = other.eval(t)),
        ),
    };
    Ok(Scenario {
        name: "bingham-pipe".into(),
        descriptor,
        model: CoefficientModel::standard(2.0, 2),
        forcing: force,
        initial: VectorField::zeros(&mesh, 1, 0.0),
        boundary: BoundaryData::Constant(vec![0.0]),
        mesh,
        params,
    })
}

/// Constant data `c` in every component on the unit box of dimension
/// `params.n`, with zero force. The constant is the exact solution.
pub fn scenario_constant(c: f64, params: &Parameters) -> Result<Scenario> {
    params.validate(false)?;
    let mesh = Arc::new(build_mesh(
        &BoxDomain::unit(params.n),
        &vec![params.resolution; params.n],
    )?);
    let value = vec![c; params.components];
    Ok(Scenario {
        name: "constant".into(),
        descriptor: format!("constant|c={c}"),
        model: CoefficientModel::standard(params.p, params.n),
        forcing: ForcingTerm::zero(params.components),
        initial: VectorField::constant(&mesh, &value, 0.0),
        boundary: BoundaryData::Constant(value),
        mesh,
        params: params.clone(),
    })
}

/// Largest constant pressure drop for which the steady pipe flow keeps
/// `|Du| ≤ δ` on every element, located by bisection on `[0, c_max]`.
///
/// Report-only: it approximates the yield threshold of the regularized,
/// discretized problem.
pub fn pipe_yield_threshold(
    resolution: usize,
    eps: f64,
    delta: f64,
    c_max: f64,
    bisections: usize,
    cfg: &SolverConfig,
) -> Result<f64> {
    if !(c_max > 0.0) {
        return Err(Error::invalid("c_max must be positive"));
    }
    let plugged = |c: f64| -> Result<bool> {
        let mut sc = scenario_bingham_pipe(PipeForcing::Constant(c), resolution, eps, delta)?;
        sc.params.tau = 1.0;
        let out = steady_state(&sc, cfg)?;
        let g = crate::grid::element_gradient(&sc.mesh, &out.field);
        Ok((0..g.element_count()).all(|e| {
            let s = g.slice(e);
            s.iter().map(|v| v * v).sum::<f64>().sqrt() <= delta
        }))
    };
    let (mut lo, mut hi) = (0.0, c_max);
    if plugged(hi)? {
        return Ok(hi);
    }
    for _ in 0..bisections {
        let mid = 0.5 * (lo + hi);
        if plugged(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
