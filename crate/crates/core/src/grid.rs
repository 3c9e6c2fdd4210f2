//! Structured P1 simplicial meshes on boxes, nodal fields, element
//! gradients, one-point quadrature, and assembly of frozen-coefficient
//! operators.
//!
//! In two dimensions every cell `[i,i+1]×[j,j+1]` is split along the
//! diagonal from `(i,j)` to `(i+1,j+1)`. Node `(i,j)` has index `j(rx+1)+i`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::algebra::{Jacobian, Metric};
use crate::error::{Error, Result};
use crate::model::CoefficientModel;
use crate::sparse::{CsrMatrix, CsrPattern};

/// Default limit on the number of mesh nodes.
pub const DEFAULT_NODE_CAP: usize = 4_000_000;

/// Curvature ratio (against the `μ ≡ 1` operator) below which an assembled
/// operator is reported as numerically singular.
const SPD_PROBE_RATIO: f64 = 1e-16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        BoxDomain { lower, upper }
    }

    pub fn unit(dim: usize) -> Self {
        BoxDomain::new(vec![0.0; dim], vec![1.0; dim])
    }

    /// The cube `(−h, h)ⁿ`.
    pub fn centered(dim: usize, half_width: f64) -> Self {
        BoxDomain::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| b - a)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

/// Identifies a discretization: box and cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshDescriptor {
    pub domain: BoxDomain,
    pub resolution: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    descriptor: MeshDescriptor,
    coords: Vec<[f64; 2]>,
    /// Vertex lists; only the first `dim + 1` entries are used.
    elements: Vec<[usize; 3]>,
    volumes: Vec<f64>,
    /// Constant shape-function gradients per element and local vertex.
    stencils: Vec<[[f64; 2]; 3]>,
    boundary: Vec<bool>,
    boundary_nodes: Vec<usize>,
    lumped_mass: Vec<f64>,
    pattern: Arc<CsrPattern>,
    /// For element `e`, slot of local pair `(a,b)` at index `a*(dim+1)+b`.
    slots: Vec<[usize; 9]>,
    spacing: Vec<f64>,
}

pub fn build_mesh(domain: &BoxDomain, resolution: &[usize]) -> Result<Mesh> {
    build_mesh_with_cap(domain, resolution, DEFAULT_NODE_CAP)
}

pub fn build_mesh_with_cap(domain: &BoxDomain, resolution: &[usize], cap: usize) -> Result<Mesh> {
    let dim = domain.dim();
    if !(1..=2).contains(&dim) || domain.upper.len() != dim {
        return Err(Error::domain(format!(
            "box dimension must be 1 or 2 (got {dim})"
        )));
    }
    if resolution.len() != dim {
        return Err(Error::domain("one resolution per axis required"));
    }
    for a in 0..dim {
        let (lo, hi) = (domain.lower[a], domain.upper[a]);
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!(
                "degenerate box extent [{lo}, {hi}] on axis {a}"
            )));
        }
        if resolution[a] < 2 {
            return Err(Error::domain(format!(
                "resolution >= 2 required (got {})",
                resolution[a]
            )));
        }
    }
    let nodes = resolution
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r.checked_add(1)?));
    let node_count = match nodes {
        Some(n) if n <= cap => n,
        Some(n) => return Err(Error::SizeOverflow { nodes: n, cap }),
        None => {
            return Err(Error::SizeOverflow {
                nodes: usize::MAX,
                cap,
            })
        }
    };
    let spacing: Vec<f64> = (0..dim)
        .map(|a| (domain.upper[a] - domain.lower[a]) / resolution[a] as f64)
        .collect();
    let rx = resolution[0];
    let coord = |a: usize, i: usize| {
        if i == resolution[a] {
            domain.upper[a]
        } else {
            domain.lower[a] + i as f64 * spacing[a]
        }
    };

    let mut coords = Vec::with_capacity(node_count);
    let mut boundary = Vec::with_capacity(node_count);
    let mut elements = Vec::new();
    if dim == 1 {
        for i in 0..=rx {
            coords.push([coord(0, i), 0.0]);
            boundary.push(i == 0 || i == rx);
        }
        for i in 0..rx {
            elements.push([i, i + 1, 0]);
        }
    } else {
        let ry = resolution[1];
        for j in 0..=ry {
            for i in 0..=rx {
                coords.push([coord(0, i), coord(1, j)]);
                boundary.push(i == 0 || i == rx || j == 0 || j == ry);
            }
        }
        let id = |i: usize, j: usize| j * (rx + 1) + i;
        for j in 0..ry {
            for i in 0..rx {
                elements.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                elements.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }

    let mut volumes = Vec::with_capacity(elements.len());
    let mut stencils = Vec::with_capacity(elements.len());
    for el in &elements {
        let (vol, st) = simplex_geometry(dim, &coords, el);
        volumes.push(vol);
        stencils.push(st);
    }

    let k = dim + 1;
    let mut lumped_mass = vec![0.0; node_count];
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for (e, el) in elements.iter().enumerate() {
        for a in 0..k {
            lumped_mass[el[a]] += volumes[e] / k as f64;
            for b in 0..k {
                rows[el[a]].push(el[b]);
            }
        }
    }
    let pattern = Arc::new(CsrPattern::from_rows(rows));
    let slots = elements
        .iter()
        .map(|el| {
            let mut s = [0usize; 9];
            for a in 0..k {
                for b in 0..k {
                    s[a * k + b] = pattern.slot(el[a], el[b]).expect("pattern covers element");
                }
            }
            s
        })
        .collect();
    let boundary_nodes = (0..node_count).filter(|&i| boundary[i]).collect();

    Ok(Mesh {
        descriptor: MeshDescriptor {
            domain: domain.clone(),
            resolution: resolution.to_vec(),
        },
        coords,
        elements,
        volumes,
        stencils,
        boundary,
        boundary_nodes,
        lumped_mass,
        pattern,
        slots,
        spacing,
    })
}

fn simplex_geometry(dim: usize, coords: &[[f64; 2]], el: &[usize; 3]) -> (f64, [[f64; 2]; 3]) {
    if dim == 1 {
        let h = coords[el[1]][0] - coords[el[0]][0];
        return (h, [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]]);
    }
    let [p0, p1, p2] = [coords[el[0]], coords[el[1]], coords[el[2]]];
    let (a, b) = (p1[0] - p0[0], p2[0] - p0[0]);
    let (c, d) = (p1[1] - p0[1], p2[1] - p0[1]);
    let det = a * d - b * c;
    // Rows of J⁻ᵀ give the gradients of the barycentric coordinates 1 and 2.
    let g1 = [d / det, -b / det];
    let g2 = [-c / det, a / det];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    (0.5 * det.abs(), [g0, g1, g2])
}

impl Mesh {
    pub fn dim(&self) -> usize {
        self.descriptor.domain.dim()
    }

    pub fn descriptor(&self) -> &MeshDescriptor {
        &self.descriptor
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.descriptor.domain
    }

    pub fn resolution(&self) -> &[usize] {
        &self.descriptor.resolution
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Vertices per element.
    pub fn vertices_per_element(&self) -> usize {
        self.dim() + 1
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i][..self.dim()]
    }

    #[inline]
    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim() + 1]
    }

    #[inline]
    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Shape-function gradients of element `e`, one per local vertex.
    #[inline]
    pub fn stencil(&self, e: usize) -> &[[f64; 2]] {
        &self.stencils[e][..self.dim() + 1]
    }

    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let el = self.element(e);
        let k = el.len() as f64;
        let mut c = [0.0; 2];
        for &v in el {
            c[0] += self.coords[v][0] / k;
            c[1] += self.coords[v][1] / k;
        }
        c
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Row sums of the P1 mass matrix: `M_i = Σ_{e∋i} |e|/(n+1)`.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    #[inline]
    pub(crate) fn slots(&self, e: usize) -> &[usize; 9] {
        &self.slots[e]
    }

    /// Cell widths per axis.
    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Largest cell width.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of the node closest to `x` on the structured grid.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let d = self.domain();
        let res = self.resolution();
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..self.dim() {
            let f = ((x[a] - d.lower[a]) / self.spacing[a]).round();
            let i = f.clamp(0.0, res[a] as f64) as usize;
            idx += i * stride;
            stride *= res[a] + 1;
        }
        idx
    }
}

/// Nodal values of `u : nodes → ℝᴺ`, node-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub components: usize,
    pub values: Vec<f64>,
    pub time: f64,
}

impl VectorField {
    pub fn zeros(mesh: &Mesh, components: usize, time: f64) -> Self {
        VectorField {
            components,
            values: vec![0.0; mesh.node_count() * components],
            time,
        }
    }

    pub fn constant(mesh: &Mesh, value: &[f64], time: f64) -> Self {
        let mut values = Vec::with_capacity(mesh.node_count() * value.len());
        for _ in 0..mesh.node_count() {
            values.extend_from_slice(value);
        }
        VectorField {
            components: value.len(),
            values,
            time,
        }
    }

    /// Samples `rule(x, out)` at every node.
    pub fn from_fn(
        mesh: &Mesh,
        components: usize,
        time: f64,
        rule: impl Fn(&[f64], &mut [f64]),
    ) -> Self {
        let mut f = VectorField::zeros(mesh, components, time);
        for i in 0..mesh.node_count() {
            rule(
                mesh.node(i),
                &mut f.values[i * components..(i + 1) * components],
            );
        }
        f
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.components
    }

    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.components..(i + 1) * self.components]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.components;
        &mut self.values[i * n..(i + 1) * n]
    }

    /// Checks the value count and finiteness against `mesh`.
    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.components == 0 || self.values.len() != mesh.node_count() * self.components {
            return Err(Error::invalid(format!(
                "field has {} values, mesh needs {} x {}",
                self.values.len(),
                mesh.node_count(),
                self.components
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite field value at index {i}"
            )));
        }
        Ok(())
    }

    /// `max_i |u_i − v_i|` over all entries.
    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Constant `N×n` gradient per element.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub components: usize,
    pub dim: usize,
    /// Element-major, then row-major `N×n`.
    pub data: Vec<f64>,
    pub time: f64,
}

impl GradientField {
    pub fn element_count(&self) -> usize {
        self.data.len() / (self.components * self.dim)
    }

    #[inline]
    pub fn slice(&self, e: usize) -> &[f64] {
        let k = self.components * self.dim;
        &self.data[e * k..(e + 1) * k]
    }

    pub fn jacobian(&self, e: usize) -> Jacobian {
        Jacobian::from_vec(self.components, self.dim, self.slice(e).to_vec())
    }
}

pub fn element_gradient(mesh: &Mesh, u: &VectorField) -> GradientField {
    let n = mesh.dim();
    let nc = u.components;
    let mut data = vec![0.0; mesh.element_count() * nc * n];
    for e in 0..mesh.element_count() {
        let out = &mut data[e * nc * n..(e + 1) * nc * n];
        let el = mesh.element(e);
        let base = u.at(el[0]);
        // Differences against the first vertex: constants give exact zeros.
        for (&v, g) in el.iter().zip(mesh.stencil(e)).skip(1) {
            let val = u.at(v);
            for j in 0..nc {
                let d = val[j] - base[j];
                for a in 0..n {
                    out[j * n + a] += d * g[a];
                }
            }
        }
    }
    GradientField {
        components: nc,
        dim: n,
        data,
        time: u.time,
    }
}

/// Metric at every element centroid at time `t`.
pub fn element_metrics(mesh: &Mesh, model: &CoefficientModel, t: f64) -> Vec<Metric> {
    if !model.gamma.is_time_dependent() && model.gamma.is_diagonal() {
        let m = model.metric(mesh.node(0), t);
        return vec![m; mesh.element_count()];
    }
    (0..mesh.element_count())
        .map(|e| model.metric(&mesh.centroid(e)[..mesh.dim()], t))
        .collect()
}

/// Stiffness matrix of `Σ_e |e| μ_e γ_{αβ} ∂_α u ∂_β φ` for one component.
///
/// The result is unconstrained; every component of the system uses the same
/// matrix.
pub fn assemble_frozen_operator(
    mesh: &Mesh,
    model: &CoefficientModel,
    mu: &[f64],
    t: f64,
) -> Result<CsrMatrix> {
    let metrics = element_metrics(mesh, model, t);
    assemble_with_metrics(mesh, &metrics, mu)
}

pub fn assemble_with_metrics(mesh: &Mesh, metrics: &[Metric], mu: &[f64]) -> Result<CsrMatrix> {
    if mu.len() != mesh.element_count() {
        return Err(Error::invalid("one diffusivity per element required"));
    }
    if let Some((e, v)) = mu
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
    {
        return Err(Error::NonSpd(format!("diffusivity {v:e} on element {e}")));
    }
    let k = mesh.vertices_per_element();
    let mut mat = CsrMatrix::zeros(mesh.pattern().clone());
    let mut geometric = vec![0.0; mesh.node_count()];
    let mut tmp = [0.0; 2];
    for e in 0..mesh.element_count() {
        let st = mesh.stencil(e);
        let slots = mesh.slots(e);
        let m = &metrics[e];
        let w = mesh.volume(e);
        for a in 0..k {
            m.apply(&st[a], &mut tmp);
            for b in 0..k {
                let g = w * (tmp[0] * st[b][0] + tmp[1] * st[b][1]);
                mat.values[slots[a * k + b]] += mu[e] * g;
                if a == b {
                    geometric[mesh.element(e)[a]] += g;
                }
            }
        }
    }
    // Probe: interior curvature along unit vectors against the μ ≡ 1 operator.
    for i in 0..mesh.node_count() {
        if mesh.is_boundary(i) {
            continue;
        }
        let d = mat.get(i, i);
        if !(d > SPD_PROBE_RATIO * geometric[i]) {
            return Err(Error::NonSpd(format!(
                "curvature {d:e} at node {i} is below {SPD_PROBE_RATIO:e} x {:e}",
                geometric[i]
            )));
        }
    }
    Ok(mat)
}

/// Lumped load `F_i = M_i f(x_i, t)`, node-major.
pub fn lumped_load(mesh: &Mesh, forcing: &crate::model::ForcingTerm, t: f64) -> Vec<f64> {
    let nc = forcing.components;
    let mut out = vec![0.0; mesh.node_count() * nc];
    if forcing.is_zero {
        return out;
    }
    let mass = mesh.lumped_mass();
    if let Some(s) = &forcing.samples {
        for i in 0..mesh.node_count() {
            for j in 0..nc {
                out[i * nc + j] = mass[i] * s[i * nc + j];
            }
        }
        return out;
    }
    for i in 0..mesh.node_count() {
        let slot = &mut out[i * nc..(i + 1) * nc];
        forcing.eval(mesh.node(i), t, slot);
        for v in slot.iter_mut() {
            *v *= mass[i];
        }
    }
    out
}

/// `(Σ_e |e| |v_e|^s)^{1/s}`, or `max_e |v_e|` for `s = ∞`.
pub fn integrate(values: &[f64], mesh: &Mesh, s: f64) -> Result<f64> {
    if !(s >= 1.0) {
        return Err(Error::invalid(format!(
            "integration exponent must be >= 1 (got {s})"
        )));
    }
    if values.len() != mesh.element_count() {
        return Err(Error::invalid("one sample per element required"));
    }
    if s.is_infinite() {
        return Ok(values.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    let sum: f64 = values
        .iter()
        .zip(mesh.volumes())
        .map(|(v, w)| w * v.abs().powf(s))
        .sum();
    Ok(sum.powf(1.0 / s))
}
