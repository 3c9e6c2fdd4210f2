//! Numerical checks on computed trajectories: gradient bounds, facet and
//! super-level measures, Hölder quotients of truncated gradients, the
//! maximum principle, and ε- and data-stability studies.
//!
//! Trajectories are read as piecewise constant in time: state `k` holds on
//! `(t_{k−1}, t_k]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{Jacobian, Metric};
use crate::error::{Error, Result};
use crate::flux::truncate;
use crate::grid::{
    element_gradient, element_metrics, GradientField, Mesh, MeshDescriptor, VectorField,
};
use crate::model::CoefficientModel;
use crate::solver::{run, Scenario, SolverConfig, Trajectory};

/// Absolute slack of the maximum-principle containment check.
pub const CONTAINMENT_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub key: String,
    pub value: f64,
    pub threshold: Option<f64>,
    pub pass: Option<bool>,
    pub refs: Vec<String>,
}

impl ReportEntry {
    /// An entry with a pass/fail verdict against `threshold`.
    pub fn check(key: &str, value: f64, threshold: f64, pass: bool) -> Self {
        ReportEntry {
            key: key.into(),
            value,
            threshold: Some(threshold),
            pass: Some(pass),
            refs: Vec::new(),
        }
    }

    /// An informational entry without verdict.
    pub fn info(key: &str, value: f64) -> Self {
        ReportEntry {
            key: key.into(),
            value,
            threshold: None,
            pass: None,
            refs: Vec::new(),
        }
    }

    pub fn with_refs(mut self, refs: &[&str]) -> Self {
        self.refs = refs.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_hash: String,
    pub mesh: MeshDescriptor,
    pub eps: f64,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub entries: Vec<ReportEntry>,
    pub provenance: Provenance,
}

impl DiagnosticsReport {
    pub fn new(provenance: Provenance) -> Self {
        DiagnosticsReport {
            entries: Vec::new(),
            provenance,
        }
    }

    /// Adds an entry; a verdict without threshold is rejected.
    pub fn push(&mut self, entry: ReportEntry) -> Result<()> {
        if entry.pass.is_some() && entry.threshold.is_none() {
            return Err(Error::invalid(format!(
                "entry `{}` has a verdict but no threshold",
                entry.key
            )));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    /// Whether no entry failed.
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass != Some(false))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `Q_ρ(x₀,t₀) = B_ρ(x₀) × (t₀−ρ², t₀]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: Vec<f64>,
    pub t0: f64,
    pub rho: f64,
}

impl Cylinder {
    pub fn new(center: Vec<f64>, t0: f64, rho: f64) -> Self {
        Cylinder { center, t0, rho }
    }

    pub fn contains_point(&self, x: &[f64]) -> bool {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2 < self.rho * self.rho
    }

    /// Checks that the cylinder lies in the computed space-time domain and
    /// spans at least two cells.
    pub fn check(&self, mesh: &Mesh, t_start: f64, t_end: f64) -> Result<()> {
        let d = mesh.domain();
        if self.center.len() != mesh.dim() {
            return Err(Error::CylinderOutOfDomain(
                "center dimension differs from mesh".into(),
            ));
        }
        if !(self.rho >= 2.0 * mesh.h() * (1.0 - 1e-12)) {
            return Err(Error::CylinderOutOfDomain(format!(
                "radius {} is below two cells ({})",
                self.rho,
                2.0 * mesh.h()
            )));
        }
        let slack = 1e-12 * (1.0 + self.rho);
        for a in 0..mesh.dim() {
            if self.center[a] - self.rho < d.lower[a] - slack
                || self.center[a] + self.rho > d.upper[a] + slack
            {
                return Err(Error::CylinderOutOfDomain(format!(
                    "ball of radius {} around {:?} leaves the box",
                    self.rho, self.center
                )));
            }
        }
        let tslack = 1e-12 * (1.0 + t_end.abs());
        if self.t0 - self.rho * self.rho < t_start - tslack || self.t0 > t_end + tslack {
            return Err(Error::CylinderOutOfDomain(format!(
                "time interval ({}, {}] is outside [{t_start}, {t_end}]",
                self.t0 - self.rho * self.rho,
                self.t0
            )));
        }
        Ok(())
    }
}

/// States overlapping the cylinder's time interval, with overlap length.
fn overlapping_states(traj: &Trajectory, cyl: &Cylinder) -> Vec<(usize, f64)> {
    let (a, b) = (cyl.t0 - cyl.rho * cyl.rho, cyl.t0);
    (1..traj.states.len())
        .filter_map(|k| {
            let lo = traj.states[k - 1].time.max(a);
            let hi = traj.states[k].time.min(b);
            (hi > lo).then_some((k, hi - lo))
        })
        .collect()
}

fn elements_in(mesh: &Mesh, cyl: &Cylinder) -> Vec<usize> {
    (0..mesh.element_count())
        .filter(|&e| cyl.contains_point(&mesh.centroid(e)[..mesh.dim()]))
        .collect()
}

/// Checked cylinder context: elements and overlapping states.
fn cylinder_view(traj: &Trajectory, cyl: &Cylinder) -> Result<(Vec<usize>, Vec<(usize, f64)>)> {
    cyl.check(&traj.mesh, traj.start_time(), traj.end_time())?;
    let states = overlapping_states(traj, cyl);
    let elements = elements_in(&traj.mesh, cyl);
    if states.is_empty() || elements.is_empty() {
        return Err(Error::CylinderOutOfDomain(
            "cylinder covers no computed data".into(),
        ));
    }
    Ok((elements, states))
}

fn state_data(traj: &Trajectory, k: usize) -> (GradientField, Vec<Metric>) {
    let s = &traj.states[k];
    (
        element_gradient(&traj.mesh, s),
        element_metrics(&traj.mesh, &traj.model, s.time),
    )
}

/// `max √(ε² + |Du|²_γ)` over elements and states in the cylinder.
pub fn sup_v_eps(traj: &Trajectory, cyl: &Cylinder) -> Result<f64> {
    let (elements, states) = cylinder_view(traj, cyl)?;
    let eps2 = traj.eps * traj.eps;
    let mut sup = 0.0f64;
    for (k, _) in states {
        let (g, m) = state_data(traj, k);
        for &e in &elements {
            let s = g.slice(e);
            sup = sup.max((eps2 + m[e].inner_rows(s, s).max(0.0)).sqrt());
        }
    }
    Ok(sup)
}

/// Total volume of elements with `|Du|_γ < δ`.
pub fn facet_measure(
    mesh: &Mesh,
    model: &CoefficientModel,
    eps: f64,
    state: &VectorField,
    delta: f64,
) -> Result<f64> {
    if delta <= eps {
        return Err(Error::TruncationOrder { eps, level: delta });
    }
    let g = element_gradient(mesh, state);
    let metrics = element_metrics(mesh, model, state.time);
    Ok((0..mesh.element_count())
        .filter(|&e| {
            let s = g.slice(e);
            metrics[e].inner_rows(s, s).max(0.0).sqrt() < delta
        })
        .map(|e| mesh.volume(e))
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Largest sampled quotient.
    pub value: f64,
    pub alpha: f64,
    pub pairs: usize,
    pub min_separation: f64,
    pub seed: u64,
}

/// A pair sample: state, element, and the truncated gradient there.
struct HolderPoint {
    x: [f64; 2],
    t: f64,
    g: Jacobian,
}

fn holder_points(traj: &Trajectory, delta: f64, cyl: &Cylinder) -> Result<Vec<HolderPoint>> {
    if !(traj.eps < delta / 4.0) {
        return Err(Error::TruncationOrder {
            eps: traj.eps,
            level: delta / 4.0,
        });
    }
    let (elements, states) = cylinder_view(traj, cyl)?;
    let mut pts = Vec::with_capacity(elements.len() * states.len());
    for (k, _) in states {
        let (g, m) = state_data(traj, k);
        for &e in &elements {
            pts.push(HolderPoint {
                x: traj.mesh.centroid(e),
                t: traj.states[k].time,
                g: truncate(&m[e], traj.eps, &g.jacobian(e), 2.0 * delta),
            });
        }
    }
    Ok(pts)
}

/// Sampled pairs `(i, j)` with parabolic distance at least `2h`.
fn holder_pairs(
    pts: &[HolderPoint],
    min_sep: f64,
    count: usize,
    seed: u64,
) -> Vec<(usize, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 20 * count && pts.len() > 1 {
        attempts += 1;
        let i = rng.random_range(0..pts.len());
        let j = rng.random_range(0..pts.len());
        let dx = ((pts[i].x[0] - pts[j].x[0]).powi(2) + (pts[i].x[1] - pts[j].x[1]).powi(2)).sqrt();
        let d = dx.max((pts[i].t - pts[j].t).abs().sqrt());
        if d >= min_sep {
            out.push((i, j, d));
        }
    }
    out
}

/// Largest sampled `|G(x,t) − G(y,s)| / d^α` for `G = G_{2δ,ε}(Du)` at
/// element centroids, `d = max(|x−y|, |t−s|^{1/2}) ≥ 2h`.
pub fn holder_seminorm(
    traj: &Trajectory,
    delta: f64,
    cyl: &Cylinder,
    alpha: f64,
    sample_count: usize,
    seed: u64,
) -> Result<HolderEstimate> {
    Ok(holder_seminorms(traj, delta, cyl, &[alpha], sample_count, seed)?.remove(0))
}

/// [`holder_seminorm`] for several exponents on one shared sample set.
pub fn holder_seminorms(
    traj: &Trajectory,
    delta: f64,
    cyl: &Cylinder,
    alphas: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<Vec<HolderEstimate>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::invalid(format!("alpha must lie in (0,1) (got {a})")));
    }
    let pts = holder_points(traj, delta, cyl)?;
    let min_sep = 2.0 * traj.mesh.h();
    let pairs = holder_pairs(&pts, min_sep, sample_count, seed);
    let diffs: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(i, j, d)| (pts[i].g.sub(&pts[j].g).norm(), d))
        .collect();
    Ok(alphas
        .iter()
        .map(|&alpha| HolderEstimate {
            value: diffs
                .iter()
                .map(|(g, d)| g / d.powf(alpha))
                .fold(0.0, f64::max),
            alpha,
            pairs: pairs.len(),
            min_separation: min_sep,
            seed,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperlevelMeasure {
    pub measure: f64,
    /// Discrete `|Q_ρ|`: ball elements times the covered time.
    pub cylinder_measure: f64,
    pub ratio: f64,
    /// Whether `μ > δ`.
    pub mu_exceeds_delta: bool,
}

/// Space-time measure of `{(x,t) ∈ Q_ρ : v_ε − δ > (1−ν)μ}`.
pub fn superlevel_measure(
    traj: &Trajectory,
    cyl: &Cylinder,
    mu: f64,
    nu: f64,
    delta: f64,
) -> Result<SuperlevelMeasure> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0,1) (got {nu})")));
    }
    let (elements, states) = cylinder_view(traj, cyl)?;
    let eps2 = traj.eps * traj.eps;
    let level = (1.0 - nu) * mu;
    let (mut measure, mut total) = (0.0, 0.0);
    for (k, dt) in states {
        let (g, m) = state_data(traj, k);
        for &e in &elements {
            let w = traj.mesh.volume(e) * dt;
            total += w;
            let s = g.slice(e);
            let v = (eps2 + m[e].inner_rows(s, s).max(0.0)).sqrt();
            if v - delta > level {
                measure += w;
            }
        }
    }
    Ok(SuperlevelMeasure {
        measure,
        cylinder_measure: total,
        ratio: measure / total,
        mu_exceeds_delta: mu > delta,
    })
}

/// Maximum principle entries.
///
/// For one component and zero force, checks that every computed state lies
/// in the range of the parabolic boundary data (initial field and lateral
/// values) within [`CONTAINMENT_TOL`], and that `sup u` does not increase
/// from step to step. Otherwise reports `sup |u|` only.
pub fn max_principle_check(traj: &Trajectory, sc: &Scenario) -> Vec<ReportEntry> {
    let sup_abs = traj
        .states
        .iter()
        .flat_map(|s| s.values.iter())
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if sc.params.components != 1 || !sc.forcing.is_zero {
        return vec![ReportEntry::info("max_principle.sup_abs", sup_abs)
            .with_refs(&["weak-maximum-principle"])];
    }
    let init = &traj.states[0];
    let (mut lo, mut hi) = init
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    for s in &traj.states {
        let (blo, bhi) = sc.boundary.range(&traj.mesh, 1, s.time);
        lo = lo.min(blo[0]);
        hi = hi.max(bhi[0]);
    }
    let mut excess = f64::NEG_INFINITY;
    let mut sups = Vec::new();
    for s in &traj.states[1..] {
        let (a, b) = s
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                (a.min(v), b.max(v))
            });
        excess = excess.max(b - hi).max(lo - a);
        sups.push(b);
    }
    if traj.states.len() == 1 {
        excess = 0.0;
    }
    let increase = sups.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    vec![
        ReportEntry::check(
            "max_principle.containment",
            excess,
            CONTAINMENT_TOL,
            excess <= CONTAINMENT_TOL,
        )
        .with_refs(&["weak-maximum-principle"]),
        ReportEntry::check(
            "max_principle.sup_increase",
            increase,
            CONTAINMENT_TOL,
            increase <= CONTAINMENT_TOL,
        )
        .with_refs(&["weak-maximum-principle"]),
        ReportEntry::info("max_principle.sup_abs", sup_abs),
    ]
}

fn same_discretization(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.mesh.descriptor() != b.mesh.descriptor() {
        return Err(Error::MismatchedDiscretization("meshes differ".into()));
    }
    if a.states.len() != b.states.len()
        || a.states
            .iter()
            .zip(&b.states)
            .any(|(x, y)| (x.time - y.time).abs() > 1e-12 * (1.0 + x.time.abs()))
    {
        return Err(Error::MismatchedDiscretization("time levels differ".into()));
    }
    if a.states[0].components != b.states[0].components {
        return Err(Error::MismatchedDiscretization(
            "component counts differ".into(),
        ));
    }
    Ok(())
}

/// `‖Du_a − Du_b‖_{L^s(Ω_T)}` with the γ-norm of the first trajectory.
pub fn gradient_distance(a: &Trajectory, b: &Trajectory, s: f64) -> Result<f64> {
    same_discretization(a, b)?;
    let mesh = &a.mesh;
    let mut acc = 0.0f64;
    for k in 1..a.states.len() {
        let dt = a.states[k].time - a.states[k - 1].time;
        let (ga, m) = state_data(a, k);
        let gb = element_gradient(mesh, &b.states[k]);
        for e in 0..mesh.element_count() {
            let d: Vec<f64> = ga
                .slice(e)
                .iter()
                .zip(gb.slice(e))
                .map(|(x, y)| x - y)
                .collect();
            let n = m[e].inner_rows(&d, &d).max(0.0).sqrt();
            if s.is_infinite() {
                acc = acc.max(n);
            } else {
                acc += dt * mesh.volume(e) * n.powf(s);
            }
        }
    }
    Ok(if s.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / s)
    })
}

/// `sup |G_{2δ,ε_a}(Du_a) − G_{2δ,ε_b}(Du_b)|_γ` over all elements and states.
fn truncated_distance(a: &Trajectory, b: &Trajectory, delta: f64) -> Result<f64> {
    same_discretization(a, b)?;
    let mut sup = 0.0f64;
    for k in 1..a.states.len() {
        let (ga, m) = state_data(a, k);
        let gb = element_gradient(&a.mesh, &b.states[k]);
        for e in 0..a.mesh.element_count() {
            let ta = truncate(&m[e], a.eps, &ga.jacobian(e), 2.0 * delta);
            let tb = truncate(&m[e], b.eps, &gb.jacobian(e), 2.0 * delta);
            sup = sup.max(m[e].norm_jac(&ta.sub(&tb)));
        }
    }
    Ok(sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub eps_a: f64,
    pub eps_b: f64,
    /// `‖Du_{ε_a} − Du_{ε_b}‖_{L^p(Ω_T)}`.
    pub gradient_distance: f64,
    /// Sup distance of the truncated gradients, when every ε is below 2δ.
    pub truncated_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsStudy {
    pub rows: Vec<EpsRow>,
    /// Each gradient distance is at most the previous one.
    pub cauchy: bool,
}

impl EpsStudy {
    pub fn from_rows(rows: Vec<EpsRow>) -> Self {
        let cauchy = rows
            .windows(2)
            .all(|w| w[1].gradient_distance <= w[0].gradient_distance);
        EpsStudy { rows, cauchy }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[1].gradient_distance < w[0].gradient_distance)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["eps_a", "eps_b", "gradient_distance", "truncated_distance"])?;
        for r in &self.rows {
            out.write_record([
                r.eps_a.to_string(),
                r.eps_b.to_string(),
                r.gradient_distance.to_string(),
                r.truncated_distance
                    .map_or(String::new(), |v| v.to_string()),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `f(item)` for every item on its own thread; results keep input order.
fn run_ordered<T: Sync, R: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.iter().map(|it| scope.spawn(|| f(it))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

/// Runs `sc` once per ε (same mesh and time levels) and tabulates the
/// distances between consecutive runs.
pub fn eps_convergence_study(
    sc: &Scenario,
    cfg: &SolverConfig,
    eps_list: &[f64],
) -> Result<EpsStudy> {
    if eps_list.len() < 3 {
        return Err(Error::invalid(format!(
            "eps study needs at least 3 values (got {})",
            eps_list.len()
        )));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0]))
        || eps_list.iter().any(|e| !(*e > 0.0 && *e < 1.0))
    {
        return Err(Error::invalid(
            "eps values must be strictly decreasing in (0,1)",
        ));
    }
    let trajectories = run_ordered(eps_list, |&eps| {
        let mut s = sc.clone();
        s.params.eps = eps;
        Ok(run(&s, cfg)?.trajectory)
    })?;
    let delta = sc.params.delta;
    let truncation = eps_list.iter().all(|&e| e < 2.0 * delta);
    let mut rows = Vec::new();
    for w in trajectories.windows(2) {
        rows.push(EpsRow {
            eps_a: w[0].eps,
            eps_b: w[1].eps,
            gradient_distance: gradient_distance(&w[0], &w[1], sc.params.p)?,
            truncated_distance: if truncation {
                Some(truncated_distance(&w[0], &w[1], delta)?)
            } else {
                None
            },
        });
    }
    Ok(EpsStudy::from_rows(rows))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    /// `sup_t ‖u₁ − u₂‖_{L²(Ω)}` (lumped mass).
    pub solution_l2: f64,
    /// `‖Du₁ − Du₂‖_{L^p(Ω_T)}`.
    pub gradient_lp: f64,
    /// `‖f₁ − f₂‖_{L^{2,1}}` on the time levels.
    pub forcing_distance: f64,
    /// Largest boundary-value difference over boundary nodes and time levels.
    pub boundary_distance: f64,
    /// Identical data and identical solutions, or differing data.
    pub trivial_case_ok: bool,
}

fn lumped_l2(mesh: &Mesh, a: &[f64], b: &[f64], nc: usize) -> f64 {
    let mass = mesh.lumped_mass();
    let mut acc = 0.0;
    for i in 0..mesh.node_count() {
        for j in 0..nc {
            let d = a[i * nc + j] - b[i * nc + j];
            acc += mass[i] * d * d;
        }
    }
    acc.sqrt()
}

/// Runs two scenarios sharing a discretization and compares solutions with
/// the distance of their data.
pub fn stability_check(a: &Scenario, b: &Scenario, cfg: &SolverConfig) -> Result<StabilityTable> {
    if a.mesh.descriptor() != b.mesh.descriptor() {
        return Err(Error::MismatchedDiscretization("meshes differ".into()));
    }
    if a.params.tau != b.params.tau || a.params.t_end != b.params.t_end {
        return Err(Error::MismatchedDiscretization("time steps differ".into()));
    }
    if a.params.components != b.params.components {
        return Err(Error::MismatchedDiscretization(
            "component counts differ".into(),
        ));
    }
    let runs = run_ordered(&[a, b], |s| Ok(run(s, cfg)?.trajectory))?;
    let (ta, tb) = (&runs[0], &runs[1]);
    same_discretization(ta, tb)?;
    let mesh = &a.mesh;
    let nc = a.params.components;
    let solution_l2 = ta
        .states
        .iter()
        .zip(&tb.states)
        .map(|(x, y)| lumped_l2(mesh, &x.values, &y.values, nc))
        .fold(0.0, f64::max);
    let gradient_lp = gradient_distance(ta, tb, a.params.p)?;

    let (mut fa, mut fb) = (vec![0.0; nc], vec![0.0; nc]);
    let (mut forcing_distance, mut boundary_distance) = (0.0, 0.0f64);
    for k in 1..ta.states.len() {
        let t = ta.states[k].time;
        let dt = t - ta.states[k - 1].time;
        let mut acc = 0.0;
        for i in 0..mesh.node_count() {
            let x = mesh.node(i);
            a.forcing.eval(x, t, &mut fa);
            b.forcing.eval(x, t, &mut fb);
            if let Some(s) = &a.forcing.samples {
                fa.copy_from_slice(&s[i * nc..(i + 1) * nc]);
            }
            if let Some(s) = &b.forcing.samples {
                fb.copy_from_slice(&s[i * nc..(i + 1) * nc]);
            }
            acc += mesh.lumped_mass()[i]
                * fa.iter()
                    .zip(&fb)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>();
        }
        forcing_distance += dt * acc.sqrt();
    }
    for s in &ta.states {
        for &i in mesh.boundary_nodes() {
            a.boundary.eval(mesh.node(i), s.time, &mut fa);
            b.boundary.eval(mesh.node(i), s.time, &mut fb);
            for j in 0..nc {
                boundary_distance = boundary_distance.max((fa[j] - fb[j]).abs());
            }
        }
    }
    let initial_same = a.initial == b.initial;
    let identical_data = forcing_distance == 0.0 && boundary_distance == 0.0 && initial_same;
    let trivial_case_ok = !identical_data || (solution_l2 == 0.0 && gradient_lp == 0.0);
    Ok(StabilityTable {
        solution_l2,
        gradient_lp,
        forcing_distance,
        boundary_distance,
        trivial_case_ok,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub delta: f64,
    /// `sup |G_{2δ}(Du) − Du|_γ` over the cylinder.
    pub distance: f64,
    /// `2δ + ε`.
    pub bound: f64,
    pub pass: bool,
}

/// Distance between `Du` and its unregularized truncation `G_{2δ}(Du)` for
/// each δ.
pub fn delta_sweep(traj: &Trajectory, delta_list: &[f64], cyl: &Cylinder) -> Result<Vec<DeltaRow>> {
    if delta_list.is_empty() {
        return Err(Error::invalid("delta list is empty"));
    }
    if let Some(&d) = delta_list.iter().find(|&&d| !(d > 4.0 * traj.eps)) {
        return Err(Error::TruncationOrder {
            eps: traj.eps,
            level: d / 4.0,
        });
    }
    let (elements, states) = cylinder_view(traj, cyl)?;
    let data: Vec<(GradientField, Vec<Metric>)> =
        states.iter().map(|&(k, _)| state_data(traj, k)).collect();
    Ok(delta_list
        .iter()
        .map(|&delta| {
            let mut sup = 0.0f64;
            for (g, m) in &data {
                for &e in &elements {
                    let z = g.jacobian(e);
                    let t = truncate(&m[e], 0.0, &z, 2.0 * delta);
                    sup = sup.max(m[e].norm_jac(&t.sub(&z)));
                }
            }
            let bound = 2.0 * delta + traj.eps;
            DeltaRow {
                delta,
                distance: sup,
                bound,
                pass: sup <= bound,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_mesh, BoxDomain};
    use std::sync::Arc;

    fn linear_traj(a: [f64; 2], eps: f64) -> Trajectory {
        let mesh = Arc::new(build_mesh(&BoxDomain::centered(2, 1.0), &[16, 16]).unwrap());
        let f = VectorField::from_fn(&mesh, 1, 0.0, |x, out| out[0] = a[0] * x[0] + a[1] * x[1]);
        Trajectory::stationary(mesh, CoefficientModel::standard(2.0, 2), eps, &f, 0.0, 1.0)
    }

    #[test]
    fn sup_v_eps_of_linear_and_constant_fields() {
        let cyl = Cylinder::new(vec![0.0, 0.0], 1.0, 0.5);
        let t = linear_traj([3.0, 4.0], 0.01);
        let v = sup_v_eps(&t, &cyl).unwrap();
        assert!((v - (1e-4f64 + 25.0).sqrt()).abs() < 1e-12);
        let c = linear_traj([0.0, 0.0], 0.01);
        assert_eq!(sup_v_eps(&c, &cyl).unwrap(), 0.01);
    }

    #[test]
    fn cylinder_containment() {
        let t = linear_traj([1.0, 0.0], 0.01);
        assert!(matches!(
            sup_v_eps(&t, &Cylinder::new(vec![0.8, 0.0], 1.0, 0.5)),
            Err(Error::CylinderOutOfDomain(_))
        ));
        assert!(matches!(
            sup_v_eps(&t, &Cylinder::new(vec![0.0, 0.0], 0.1, 0.5)),
            Err(Error::CylinderOutOfDomain(_))
        ));
        assert!(matches!(
            sup_v_eps(&t, &Cylinder::new(vec![0.0, 0.0], 1.0, 0.1)),
            Err(Error::CylinderOutOfDomain(_))
        ));
    }

    #[test]
    fn facet_of_constant_and_steep_fields() {
        let c = linear_traj([0.0, 0.0], 0.01);
        let m = facet_measure(&c.mesh, &c.model, 0.01, c.last(), 0.05).unwrap();
        assert!((m - 4.0).abs() < 1e-12);
        let s = linear_traj([1.0, 0.0], 0.01);
        assert_eq!(
            facet_measure(&s.mesh, &s.model, 0.01, s.last(), 0.05).unwrap(),
            0.0
        );
        assert!(matches!(
            facet_measure(&s.mesh, &s.model, 0.05, s.last(), 0.05),
            Err(Error::TruncationOrder { .. })
        ));
    }

    #[test]
    fn holder_of_constant_gradient_is_zero() {
        let t = linear_traj([1.0, 2.0], 0.001);
        let cyl = Cylinder::new(vec![0.0, 0.0], 1.0, 0.5);
        let h = holder_seminorm(&t, 0.05, &cyl, 0.5, 500, 3).unwrap();
        assert_eq!(h.value, 0.0);
        assert!(h.pairs > 0);
        let flat = linear_traj([0.01, 0.0], 0.001);
        assert_eq!(
            holder_seminorm(&flat, 0.05, &cyl, 0.5, 500, 3)
                .unwrap()
                .value,
            0.0
        );
        assert!(matches!(
            holder_seminorm(&t, 0.002, &cyl, 0.5, 10, 0),
            Err(Error::TruncationOrder { .. })
        ));
    }

    #[test]
    fn superlevel_extremes() {
        let cyl = Cylinder::new(vec![0.0, 0.0], 1.0, 0.5);
        let c = linear_traj([0.0, 0.0], 0.01);
        assert_eq!(
            superlevel_measure(&c, &cyl, 10.0, 0.5, 0.05)
                .unwrap()
                .measure,
            0.0
        );
        let s = linear_traj([2.0, 0.0], 0.01);
        let r = superlevel_measure(&s, &cyl, 1.0, 0.5, 0.05).unwrap();
        assert_eq!(r.ratio, 1.0);
        assert!(r.mu_exceeds_delta);
        assert!(superlevel_measure(&s, &cyl, 1.0, 1.0, 0.05).is_err());
    }

    #[test]
    fn delta_sweep_constant_gradient() {
        let t = linear_traj([1.0, 0.0], 0.001);
        let cyl = Cylinder::new(vec![0.0, 0.0], 1.0, 0.5);
        let rows = delta_sweep(&t, &[0.2, 0.1, 0.05], &cyl).unwrap();
        for r in &rows {
            assert!((r.distance - 2.0 * r.delta).abs() < 1e-12, "{r:?}");
            assert!(r.pass);
        }
        assert!(delta_sweep(&t, &[], &cyl).is_err());
        assert!(matches!(
            delta_sweep(&t, &[0.003], &cyl),
            Err(Error::TruncationOrder { .. })
        ));
    }

    #[test]
    fn report_round_trip_and_threshold_rule() {
        let prov = Provenance {
            scenario_hash: "abc".into(),
            mesh: MeshDescriptor {
                domain: BoxDomain::unit(2),
                resolution: vec![4, 4],
            },
            eps: 1e-3,
            delta: 0.05,
            seed: 7,
        };
        let mut rep = DiagnosticsReport::new(prov);
        rep.push(ReportEntry::check("a", 1.0, 2.0, true)).unwrap();
        rep.push(ReportEntry::info("b", 0.5).with_refs(&["x"]))
            .unwrap();
        let bad = ReportEntry {
            threshold: None,
            ..ReportEntry::check("c", 0.0, 0.0, true)
        };
        assert!(rep.push(bad).is_err());
        let text = rep.to_json().unwrap();
        assert_eq!(DiagnosticsReport::from_json(&text).unwrap(), rep);
        assert!(rep.all_pass());
    }

    #[test]
    fn cauchy_flag_is_a_function_of_the_table() {
        let row = |d| EpsRow {
            eps_a: 0.1,
            eps_b: 0.05,
            gradient_distance: d,
            truncated_distance: None,
        };
        assert!(EpsStudy::from_rows(vec![row(1.0), row(1.0), row(0.5)]).cauchy);
        assert!(!EpsStudy::from_rows(vec![row(1.0), row(1.1)]).cauchy);
        assert!(!EpsStudy::from_rows(vec![row(1.0), row(1.0)]).strictly_decreasing());
    }
}
