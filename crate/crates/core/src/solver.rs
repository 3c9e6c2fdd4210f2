//! Implicit Euler time stepping for the regularized system with Dirichlet
//! data.
//!
//! Each step minimizes the step functional
//! `J(u) = Σ_e |e| E(Du) + Σ_i M_i/(2τ) |u_i − u_i^prev|² − Σ_i F_i·u_i`
//! over fields with the prescribed boundary values, first by lagged
//! diffusivity (Kačanov) iterations and optionally by a damped Newton
//! method once the residual is small.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algebra::Metric;
use crate::error::{Error, Result};
use crate::flux::energy_from_sigma;
use crate::grid::{
    element_gradient, element_metrics, lumped_load, GradientField, Mesh, VectorField,
};
use crate::model::{CoefficientModel, ForcingTerm, Parameters};
use crate::sparse::{pcg, CsrMatrix, Preconditioner};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerMode {
    Kacanov,
    NewtonAfterKacanov,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative nonlinear residual target.
    pub inner_tol: f64,
    pub max_inner: usize,
    /// Relative residual target of the conjugate gradient solves.
    pub linear_tol: f64,
    /// Kačanov under-relaxation in `(0, 1]`.
    pub damping: f64,
    pub mode: InnerMode,
    /// Relative residual below which Newton takes over from Kačanov.
    pub newton_switch: f64,
    /// `‖u^{k+1} − u^k‖_∞ / τ` threshold for [`steady_state`].
    pub steady_tol: f64,
    /// Step cap for [`steady_state`].
    pub max_steps: usize,
    /// Keep every `checkpoint_stride`-th state in a trajectory.
    pub checkpoint_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            inner_tol: 1e-8,
            max_inner: 200,
            linear_tol: 1e-10,
            damping: 1.0,
            mode: InnerMode::Kacanov,
            newton_switch: 1e-2,
            steady_tol: 1e-7,
            max_steps: 10_000,
            checkpoint_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0
            && self.linear_tol > 0.0
            && self.steady_tol > 0.0
            && self.newton_switch > 0.0)
        {
            return Err(Error::domain("solver tolerances must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::domain(format!(
                "damping must lie in (0,1] (got {})",
                self.damping
            )));
        }
        if self.max_inner == 0 || self.checkpoint_stride == 0 {
            return Err(Error::domain(
                "max_inner and checkpoint_stride must be positive",
            ));
        }
        Ok(())
    }
}

pub type BoundaryRule = Arc<dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync>;

/// Dirichlet data `u_⋆` on the lateral boundary.
#[derive(Clone)]
pub enum BoundaryData {
    Constant(Vec<f64>),
    Rule {
        rule: BoundaryRule,
        time_dependent: bool,
    },
}

impl fmt::Debug for BoundaryData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Constant(c) => write!(f, "Constant({c:?})"),
            BoundaryData::Rule { time_dependent, .. } => {
                write!(f, "Rule {{ time_dependent: {time_dependent} }}")
            }
        }
    }
}

impl BoundaryData {
    pub fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        match self {
            BoundaryData::Constant(c) => out.copy_from_slice(c),
            BoundaryData::Rule { rule, .. } => rule(x, t, out),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(
            self,
            BoundaryData::Rule {
                time_dependent: true,
                ..
            }
        )
    }

    /// Componentwise range of the data over the boundary nodes at time `t`.
    pub fn range(&self, mesh: &Mesh, components: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; components];
        let mut hi = vec![f64::NEG_INFINITY; components];
        let mut buf = vec![0.0; components];
        for &i in mesh.boundary_nodes() {
            self.eval(mesh.node(i), t, &mut buf);
            for j in 0..components {
                lo[j] = lo[j].min(buf[j]);
                hi[j] = hi[j].max(buf[j]);
            }
        }
        (lo, hi)
    }
}

/// Everything defining one initial-boundary value problem.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    /// Canonical text of the inputs the scenario was built from.
    pub descriptor: String,
    pub params: Parameters,
    pub model: CoefficientModel,
    pub forcing: ForcingTerm,
    pub initial: VectorField,
    pub boundary: BoundaryData,
    pub mesh: Arc<Mesh>,
}

impl Scenario {
    /// Hex SHA-256 of the descriptor together with the current parameters,
    /// coefficients, force and boundary data.
    pub fn hash(&self) -> String {
        let text = format!(
            "{}|{:?}|{:?}|{:?}|{:?}",
            self.descriptor, self.params, self.model, self.forcing, self.boundary
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Checks sizes, the parameter invariants, and compatibility of the
    /// initial field with the boundary data at `t = 0`.
    pub fn validate(&self) -> Result<()> {
        self.params.validate(false)?;
        self.initial.check(&self.mesh)?;
        if self.initial.components != self.params.components
            || self.forcing.components != self.params.components
        {
            return Err(Error::invalid(
                "component counts of initial field, forcing and parameters differ",
            ));
        }
        if self.mesh.dim() != self.params.n || self.model.dim != self.params.n {
            return Err(Error::invalid(
                "mesh, model and parameter dimensions differ",
            ));
        }
        let nc = self.params.components;
        let mut buf = vec![0.0; nc];
        for &i in self.mesh.boundary_nodes() {
            self.boundary
                .eval(self.mesh.node(i), self.initial.time, &mut buf);
            let u0 = self.initial.at(i);
            for j in 0..nc {
                if (u0[j] - buf[j]).abs() > 1e-12 * (1.0 + buf[j].abs()) {
                    return Err(Error::invalid(format!(
                        "initial value {} differs from boundary value {} at node {i}",
                        u0[j], buf[j]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether coefficients, forcing and boundary data ignore time.
    pub fn is_autonomous(&self) -> bool {
        !self.model.is_time_dependent()
            && !self.forcing.time_dependent
            && !self.boundary.is_time_dependent()
    }
}

/// Per-element data frozen at the end-of-step time.
struct StepData {
    metrics: Vec<Metric>,
    a1: Vec<f64>,
    ap: Vec<f64>,
    load: Vec<f64>,
    /// Boundary values, node-major (only boundary entries meaningful).
    boundary: Vec<f64>,
}

fn step_data(sc: &Scenario, t: f64) -> StepData {
    let mesh = &sc.mesh;
    let model = &sc.model;
    let metrics = element_metrics(mesh, model, t);
    let coeff = |f: &crate::model::ScalarField| -> Vec<f64> {
        match f {
            crate::model::ScalarField::Constant(c) => vec![*c; mesh.element_count()],
            _ => (0..mesh.element_count())
                .map(|e| f.eval(&mesh.centroid(e)[..mesh.dim()], t))
                .collect(),
        }
    };
    let nc = sc.params.components;
    let mut boundary = vec![0.0; mesh.node_count() * nc];
    for &i in mesh.boundary_nodes() {
        sc.boundary
            .eval(mesh.node(i), t, &mut boundary[i * nc..(i + 1) * nc]);
    }
    StepData {
        metrics,
        a1: coeff(&model.a1),
        ap: coeff(&model.ap),
        load: lumped_load(mesh, &sc.forcing, t),
        boundary,
    }
}

/// `|Du|²_γ` on element `e`.
#[inline]
fn grad_sq(metric: &Metric, g: &[f64]) -> f64 {
    metric.inner_rows(g, g).max(0.0)
}

/// Pointwise diffusivity `μ_e = a₁g₁(s) + a_pg_p(s)` for `s = ε² + |Du|²_γ`.
fn diffusivities(sc: &Scenario, data: &StepData, grad: &GradientField) -> Vec<f64> {
    let eps2 = sc.params.eps * sc.params.eps;
    let model = &sc.model;
    (0..grad.element_count())
        .map(|e| {
            let s = eps2 + grad_sq(&data.metrics[e], grad.slice(e));
            let one = if data.a1[e] == 0.0 {
                0.0
            } else {
                data.a1[e] * model.g1.value(s)
            };
            one + data.ap[e] * model.gp.value(s)
        })
        .collect()
}

/// `Σ_e |e| E(Du)`.
fn discrete_energy(sc: &Scenario, data: &StepData, grad: &GradientField) -> Result<f64> {
    let eps = sc.params.eps;
    let mut acc = 0.0;
    for e in 0..grad.element_count() {
        let sigma = grad_sq(&data.metrics[e], grad.slice(e));
        acc +=
            sc.mesh.volume(e) * energy_from_sigma(&sc.model, eps, data.a1[e], data.ap[e], sigma)?;
    }
    Ok(acc)
}

/// Discrete energy `Σ_e |e| E(Du)` of a field at time `t`.
pub fn field_energy(sc: &Scenario, u: &VectorField) -> Result<f64> {
    let data = step_data(sc, u.time);
    discrete_energy(sc, &data, &element_gradient(&sc.mesh, u))
}

/// `max_e √(ε² + |Du|²_γ)`.
pub fn field_sup_v_eps(sc: &Scenario, u: &VectorField) -> f64 {
    let metrics = element_metrics(&sc.mesh, &sc.model, u.time);
    let g = element_gradient(&sc.mesh, u);
    let eps2 = sc.params.eps * sc.params.eps;
    (0..g.element_count())
        .map(|e| (eps2 + grad_sq(&metrics[e], g.slice(e))).sqrt())
        .fold(0.0, f64::max)
}

struct StepContext<'a> {
    sc: &'a Scenario,
    cfg: &'a SolverConfig,
    data: StepData,
    tau: f64,
    prev: &'a [f64],
}

impl StepContext<'_> {
    fn nc(&self) -> usize {
        self.sc.params.components
    }

    /// `J(u)` restricted to the terms that vary with free unknowns.
    fn functional(&self, u: &[f64], grad: &GradientField) -> Result<f64> {
        let mass = self.sc.mesh.lumped_mass();
        let nc = self.nc();
        let mut acc = discrete_energy(self.sc, &self.data, grad)?;
        for i in 0..mass.len() {
            for j in 0..nc {
                let k = i * nc + j;
                let d = u[k] - self.prev[k];
                acc += mass[i] / (2.0 * self.tau) * d * d - self.data.load[k] * u[k];
            }
        }
        Ok(acc)
    }

    /// Residual on free unknowns (zero at boundary nodes) and its scale.
    fn residual(&self, u: &[f64], grad: &GradientField, mu: &[f64]) -> (Vec<f64>, f64) {
        let mesh = &self.sc.mesh;
        let nc = self.nc();
        let n = mesh.dim();
        let mass = mesh.lumped_mass();
        let mut flux = vec![0.0; u.len()];
        let mut tmp = [0.0; 2];
        for e in 0..mesh.element_count() {
            let g = grad.slice(e);
            let w = mesh.volume(e) * mu[e];
            let m = &self.data.metrics[e];
            for (&v, st) in mesh.element(e).iter().zip(mesh.stencil(e)) {
                m.apply(st, &mut tmp);
                for j in 0..nc {
                    let mut s = 0.0;
                    for a in 0..n {
                        s += g[j * n + a] * tmp[a];
                    }
                    flux[v * nc + j] += w * s;
                }
            }
        }
        let mut r = vec![0.0; u.len()];
        let (mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..mesh.node_count() {
            if mesh.is_boundary(i) {
                continue;
            }
            for j in 0..nc {
                let k = i * nc + j;
                let mu_ = mass[i] / self.tau * u[k];
                let mp = mass[i] / self.tau * self.prev[k];
                r[k] = mu_ - mp + flux[k] - self.data.load[k];
                s1 += mu_ * mu_;
                s2 += mp * mp;
                s3 += flux[k] * flux[k];
                s4 += self.data.load[k] * self.data.load[k];
            }
        }
        (r, s1.sqrt() + s2.sqrt() + s3.sqrt() + s4.sqrt())
    }

    fn relative(r: &[f64], scale: f64) -> f64 {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if scale == 0.0 {
            0.0
        } else {
            norm / scale
        }
    }

    fn linear_cap(&self, n: usize) -> usize {
        10 * n + 1000
    }

    /// One lagged-diffusivity solve, returning the undamped solution.
    fn kacanov_solve(&self, u: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        let mesh = &self.sc.mesh;
        let nc = self.nc();
        let mut mat = crate::grid::assemble_with_metrics(mesh, &self.data.metrics, mu)?;
        let mass = mesh.lumped_mass();
        for i in 0..mesh.node_count() {
            mat.add_at(i, i, mass[i] / self.tau);
        }
        let fixed = mesh.boundary_mask();
        let mut out = u.to_vec();
        let mut constrained: Option<(CsrMatrix, Preconditioner)> = None;
        for j in 0..nc {
            let mut rhs: Vec<f64> = (0..mesh.node_count())
                .map(|i| mass[i] / self.tau * self.prev[i * nc + j] + self.data.load[i * nc + j])
                .collect();
            let gvals: Vec<f64> = (0..mesh.node_count())
                .map(|i| self.data.boundary[i * nc + j])
                .collect();
            if constrained.is_none() {
                let mut m = mat.clone();
                let mut scratch = rhs.clone();
                m.constrain(fixed, &gvals, &mut scratch);
                let prec = Preconditioner::incomplete_cholesky(&m)?;
                constrained = Some((m, prec));
            }
            let (m, prec) = constrained.as_ref().expect("constrained operator built");
            // Lifting: b_i −= Σ_{j fixed} A_ij g_j using the unconstrained matrix.
            for i in 0..mesh.node_count() {
                if fixed[i] {
                    rhs[i] = gvals[i];
                    continue;
                }
                let (cols, vals) = mat.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    if fixed[c] {
                        rhs[i] -= v * gvals[c];
                    }
                }
            }
            let mut x: Vec<f64> = (0..mesh.node_count()).map(|i| u[i * nc + j]).collect();
            pcg(
                m,
                &rhs,
                &mut x,
                prec,
                self.cfg.linear_tol,
                self.linear_cap(rhs.len()),
            )?;
            for i in 0..mesh.node_count() {
                out[i * nc + j] = if fixed[i] { gvals[i] } else { x[i] };
            }
        }
        Ok(out)
    }

    /// Newton direction from the tangent `M/τ + ℬ_ε`, coupled over components.
    fn newton_direction(&self, grad: &GradientField, residual: &[f64]) -> Result<Vec<f64>> {
        let mesh = &self.sc.mesh;
        let nc = self.nc();
        let n = mesh.dim();
        let model = &self.sc.model;
        let eps2 = self.sc.params.eps * self.sc.params.eps;
        let pattern = Arc::new(mesh.pattern().blocked(nc));
        let mut mat = CsrMatrix::zeros(pattern);
        let k = mesh.vertices_per_element();
        let mut gs = [[0.0; 2]; 3];
        // ⟨ζ^j | ∇φ_a⟩_γ at index j*k + a
        let mut zp = vec![0.0; nc * k];
        for e in 0..mesh.element_count() {
            let g = grad.slice(e);
            let m = &self.data.metrics[e];
            let s = eps2 + grad_sq(m, g);
            let (a1, ap) = (self.data.a1[e], self.data.ap[e]);
            let (g1, d1) = if a1 == 0.0 {
                (0.0, 0.0)
            } else {
                (a1 * model.g1.value(s), a1 * model.g1.derivative(s))
            };
            let scalar = g1 + ap * model.gp.value(s);
            let corr = 2.0 * (d1 + ap * model.gp.derivative(s));
            let st = mesh.stencil(e);
            let el = mesh.element(e);
            for a in 0..k {
                m.apply(&st[a], &mut gs[a]);
            }
            for j in 0..nc {
                for a in 0..k {
                    zp[j * k + a] = (0..n).map(|c| g[j * n + c] * gs[a][c]).sum();
                }
            }
            let w = mesh.volume(e);
            for a in 0..k {
                for b in 0..k {
                    let base = w * scalar * (0..n).map(|c| gs[a][c] * st[b][c]).sum::<f64>();
                    for j in 0..nc {
                        for l in 0..nc {
                            let mut v = if j == l { base } else { 0.0 };
                            if corr != 0.0 {
                                v += w * corr * zp[j * k + a] * zp[l * k + b];
                            }
                            if v != 0.0 {
                                mat.add_at(el[a] * nc + j, el[b] * nc + l, v);
                            }
                        }
                    }
                }
            }
        }
        let mass = mesh.lumped_mass();
        for i in 0..mesh.node_count() {
            for j in 0..nc {
                mat.add_at(i * nc + j, i * nc + j, mass[i] / self.tau);
            }
        }
        let fixed: Vec<bool> = (0..mesh.node_count() * nc)
            .map(|d| mesh.is_boundary(d / nc))
            .collect();
        let mut rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
        let zeros = vec![0.0; rhs.len()];
        mat.constrain(&fixed, &zeros, &mut rhs);
        let prec = Preconditioner::incomplete_cholesky(&mat)?;
        let mut x = vec![0.0; rhs.len()];
        pcg(
            &mat,
            &rhs,
            &mut x,
            &prec,
            self.cfg.linear_tol,
            self.linear_cap(rhs.len()),
        )?;
        Ok(x)
    }
}

/// Result of one implicit step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub field: VectorField,
    pub inner_iterations: usize,
    pub newton_iterations: usize,
    /// Final relative residual.
    pub residual: f64,
    /// Step functional after each accepted iterate, starting with the initial guess.
    pub functional_trace: Vec<f64>,
}

/// Slack allowed when asserting monotone sequences.
pub const MONOTONE_RTOL: f64 = 1e-10;

impl StepOutcome {
    /// Whether the step functional never increased beyond the tolerance.
    pub fn is_descent(&self) -> bool {
        self.functional_trace.windows(2).all(|w| {
            let scale = w[0].abs().max(w[1].abs()).max(1e-300);
            w[1] <= w[0] + MONOTONE_RTOL * scale
        })
    }
}

/// Advances `state` by `tau`, with coefficients and data at the end time.
pub fn implicit_step(
    state: &VectorField,
    sc: &Scenario,
    cfg: &SolverConfig,
    tau: f64,
) -> Result<StepOutcome> {
    if !(sc.params.eps > 0.0) {
        return Err(Error::domain("eps > 0 required"));
    }
    if !(tau > 0.0) {
        return Err(Error::domain(format!("tau > 0 required (got {tau})")));
    }
    let mesh = &sc.mesh;
    let nc = sc.params.components;
    let t1 = state.time + tau;
    let ctx = StepContext {
        sc,
        cfg,
        data: step_data(sc, t1),
        tau,
        prev: &state.values,
    };
    let mut u = state.values.clone();
    for &i in mesh.boundary_nodes() {
        u[i * nc..(i + 1) * nc].copy_from_slice(&ctx.data.boundary[i * nc..(i + 1) * nc]);
    }
    let field = |values: Vec<f64>| VectorField {
        components: nc,
        values,
        time: t1,
    };
    let grad_of = |v: &[f64]| {
        element_gradient(
            mesh,
            &VectorField {
                components: nc,
                values: v.to_vec(),
                time: t1,
            },
        )
    };

    let mut grad = grad_of(&u);
    let mut mu = diffusivities(sc, &ctx.data, &grad);
    let (mut r, mut scale) = ctx.residual(&u, &grad, &mu);
    let mut rel = StepContext::relative(&r, scale);
    let mut trace = vec![ctx.functional(&u, &grad)?];
    let (mut iters, mut newton_iters) = (0, 0);
    let mut newton_enabled = cfg.mode == InnerMode::NewtonAfterKacanov;

    while rel > cfg.inner_tol {
        if iters == cfg.max_inner {
            return Err(Error::ConvergenceFailure(format!(
                "nonlinear residual {rel:e} after {iters} iterations at t = {t1}"
            )));
        }
        iters += 1;
        let mut accepted = false;
        if newton_enabled && rel < cfg.newton_switch {
            match ctx.newton_direction(&grad, &r) {
                Ok(dir) => {
                    let slope: f64 = r.iter().zip(&dir).map(|(a, b)| a * b).sum();
                    let j0 = *trace.last().expect("trace is non-empty");
                    let mut alpha = 1.0;
                    while slope < 0.0 && alpha > 1e-6 {
                        let cand: Vec<f64> =
                            u.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
                        let cg = grad_of(&cand);
                        let jc = ctx.functional(&cand, &cg)?;
                        if jc <= j0 + 1e-4 * alpha * slope + MONOTONE_RTOL * j0.abs() {
                            u = cand;
                            grad = cg;
                            trace.push(jc);
                            accepted = true;
                            newton_iters += 1;
                            break;
                        }
                        alpha *= 0.5;
                    }
                    if !accepted {
                        newton_enabled = false;
                    }
                }
                Err(Error::NonSpd(_)) | Err(Error::ConvergenceFailure(_)) => newton_enabled = false,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            let sol = ctx.kacanov_solve(&u, &mu)?;
            if cfg.damping == 1.0 {
                u = sol;
            } else {
                for (a, b) in u.iter_mut().zip(&sol) {
                    *a += cfg.damping * (b - *a);
                }
            }
            grad = grad_of(&u);
            trace.push(ctx.functional(&u, &grad)?);
        }
        mu = diffusivities(sc, &ctx.data, &grad);
        (r, scale) = ctx.residual(&u, &grad, &mu);
        rel = StepContext::relative(&r, scale);
    }
    let out = field(u);
    out.check(mesh)?;
    Ok(StepOutcome {
        field: out,
        inner_iterations: iters,
        newton_iterations: newton_iters,
        residual: rel,
        functional_trace: trace,
    })
}

/// One line of the per-step log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub inner_iters: usize,
    pub residual: f64,
    pub energy: f64,
    pub sup_v_eps: f64,
}

/// Stored states of a run, piecewise constant in time on `(t_{k−1}, t_k]`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub mesh: Arc<Mesh>,
    pub model: CoefficientModel,
    pub eps: f64,
    pub states: Vec<VectorField>,
}

impl Trajectory {
    /// A time-independent trajectory holding `field` on `[t0, t1]`.
    pub fn stationary(
        mesh: Arc<Mesh>,
        model: CoefficientModel,
        eps: f64,
        field: &VectorField,
        t0: f64,
        t1: f64,
    ) -> Self {
        let mut a = field.clone();
        a.time = t0;
        let mut b = field.clone();
        b.time = t1;
        Trajectory {
            mesh,
            model,
            eps,
            states: vec![a, b],
        }
    }

    pub fn start_time(&self) -> f64 {
        self.states.first().map_or(0.0, |s| s.time)
    }

    pub fn end_time(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.time)
    }

    pub fn last(&self) -> &VectorField {
        self.states
            .last()
            .expect("trajectory holds at least the initial state")
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub log: Vec<StepRecord>,
}

/// Time levels `t_k` of a run: full steps of `τ`, then one partial step if
/// `t_end` is not a multiple of `τ`.
pub fn time_levels(t0: f64, tau: f64, t_end: f64) -> Vec<f64> {
    let span = t_end - t0;
    if span <= 0.0 {
        return Vec::new();
    }
    let full = (span / tau * (1.0 + 1e-12)).floor() as usize;
    let mut levels: Vec<f64> = (1..=full).map(|k| t0 + k as f64 * tau).collect();
    let last = levels.last().copied().unwrap_or(t0);
    if t_end - last > 1e-12 * tau {
        levels.push(t_end);
    } else if let Some(l) = levels.last_mut() {
        *l = t_end;
    }
    levels
}

/// Runs from the initial field to `t_end`, reporting every accepted state
/// (and its log record) to `observer` as it is produced.
pub fn run_with_observer(
    sc: &Scenario,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&VectorField, Option<&StepRecord>) -> Result<()>,
) -> Result<RunOutput> {
    cfg.validate()?;
    sc.validate()?;
    let mut state = sc.initial.clone();
    observer(&state, None)?;
    let mut states = vec![state.clone()];
    let mut log = Vec::new();
    let levels = time_levels(state.time, sc.params.tau, sc.params.t_end);
    let count = levels.len();
    for (k, t) in levels.into_iter().enumerate() {
        let out = implicit_step(&state, sc, cfg, t - state.time)?;
        state = out.field;
        state.time = t;
        let rec = StepRecord {
            step: k + 1,
            t,
            inner_iters: out.inner_iterations,
            residual: out.residual,
            energy: field_energy(sc, &state)?,
            sup_v_eps: field_sup_v_eps(sc, &state),
        };
        observer(&state, Some(&rec))?;
        if (k + 1) % cfg.checkpoint_stride == 0 || k + 1 == count {
            states.push(state.clone());
        }
        log.push(rec);
    }
    Ok(RunOutput {
        trajectory: Trajectory {
            mesh: sc.mesh.clone(),
            model: sc.model.clone(),
            eps: sc.params.eps,
            states,
        },
        log,
    })
}

pub fn run(sc: &Scenario, cfg: &SolverConfig) -> Result<RunOutput> {
    run_with_observer(sc, cfg, |_, _| Ok(()))
}

#[derive(Clone, Debug)]
pub struct SteadyOutcome {
    pub field: VectorField,
    pub steps: usize,
    /// Final `‖u^{k+1} − u^k‖_∞ / τ`.
    pub rate: f64,
    pub log: Vec<StepRecord>,
}

/// Steps with the scenario's `τ` until the increment rate drops below
/// `steady_tol`.
pub fn steady_state(sc: &Scenario, cfg: &SolverConfig) -> Result<SteadyOutcome> {
    cfg.validate()?;
    sc.validate()?;
    if !sc.is_autonomous() {
        return Err(Error::invalid(
            "steady state requires time-independent data",
        ));
    }
    let tau = sc.params.tau;
    let mut state = sc.initial.clone();
    let mut rate = f64::INFINITY;
    let mut log = Vec::new();
    for step in 1..=cfg.max_steps {
        let out = implicit_step(&state, sc, cfg, tau)?;
        rate = out.field.max_abs_diff(&state) / tau;
        state = out.field;
        log.push(StepRecord {
            step,
            t: state.time,
            inner_iters: out.inner_iterations,
            residual: out.residual,
            energy: field_energy(sc, &state)?,
            sup_v_eps: field_sup_v_eps(sc, &state),
        });
        if rate <= cfg.steady_tol {
            return Ok(SteadyOutcome {
                field: state,
                steps: step,
                rate,
                log,
            });
        }
    }
    Err(Error::StagnationFailure {
        steps: cfg.max_steps,
        rate,
    })
}

/// Writes the step log as CSV.
pub fn write_step_log<W: std::io::Write>(w: W, log: &[StepRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for rec in log {
        out.serialize(rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_mesh, BoxDomain};
    use crate::model::MetricField;

    fn heat_1d(resolution: usize, tau: f64, f: f64) -> Scenario {
        let mesh = Arc::new(build_mesh(&BoxDomain::unit(1), &[resolution]).unwrap());
        let params = Parameters {
            n: 1,
            p: 2.0,
            tau,
            t_end: tau,
            resolution,
            ..Parameters::default()
        };
        Scenario {
            name: "heat".into(),
            descriptor: format!("heat-1d|{resolution}|{tau}|{f}"),
            model: CoefficientModel::power_law(2.0, 1, 0.0, 1.0, MetricField::Identity),
            forcing: ForcingTerm::constant(vec![f]),
            initial: VectorField::zeros(&mesh, 1, 0.0),
            boundary: BoundaryData::Constant(vec![0.0]),
            mesh,
            params,
        }
    }

    #[test]
    fn one_step_interior_value_is_one_third() {
        let mut sc = heat_1d(2, 0.25, 0.0);
        sc.initial.values[1] = 1.0;
        let out = implicit_step(&sc.initial, &sc, &SolverConfig::default(), 0.25).unwrap();
        assert!(
            (out.field.values[1] - 1.0 / 3.0).abs() < 1e-14,
            "{}",
            out.field.values[1]
        );
        assert_eq!(out.inner_iterations, 1);
        assert_eq!(out.field.values[0], 0.0);
    }

    #[test]
    fn time_levels_cover_partial_step() {
        assert_eq!(time_levels(0.0, 0.1, 0.0), Vec::<f64>::new());
        let l = time_levels(0.0, 0.25, 1.0);
        assert_eq!(l, vec![0.25, 0.5, 0.75, 1.0]);
        let l = time_levels(0.0, 0.3, 1.0);
        assert_eq!(l.len(), 4);
        assert_eq!(*l.last().unwrap(), 1.0);
        assert_eq!(time_levels(0.0, 0.1, 0.3).len(), 3);
    }

    #[test]
    fn steady_heat_profile() {
        let mut sc = heat_1d(8, 10.0, 1.0);
        sc.params.t_end = 1e9;
        let cfg = SolverConfig {
            steady_tol: 1e-12,
            inner_tol: 1e-13,
            linear_tol: 1e-14,
            ..SolverConfig::default()
        };
        let out = steady_state(&sc, &cfg).unwrap();
        for i in 0..=8 {
            let x = sc.mesh.node(i)[0];
            assert!((out.field.values[i] - x * (1.0 - x) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mismatched_initial_field_is_rejected() {
        let mut sc = heat_1d(4, 0.1, 0.0);
        sc.initial.values[0] = 1.0;
        assert!(matches!(sc.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn step_log_csv_header() {
        let rec = StepRecord {
            step: 1,
            t: 0.5,
            inner_iters: 3,
            residual: 1e-9,
            energy: 2.0,
            sup_v_eps: 1.5,
        };
        let mut buf = Vec::new();
        write_step_log(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,t,inner_iters,residual,energy,sup_v_eps\n1,0.5,3,"));
    }
}
