//! Piecewise-constant 1-forms `p dx + q dy` on a triangulation.
//!
//! Closedness at a vertex is measured on its barycentric dual cell, the loop
//! through edge midpoints and triangle centroids around it. For `alpha_v` the
//! dual-cell circulation equals minus the Lorentzian FEM residual exactly.

use std::collections::VecDeque;

use thiserror::Error;

use crate::field::{triangle_gradient, FieldError, ScalarField};
use crate::lorentz::{alpha_coeffs, Gradient2};
use crate::mesh::Mesh;

/// Default closedness tolerance for [`integrate_potential`], ten times the
/// default solver residual tolerance.
pub const DEFAULT_CLOSEDNESS_TOL: f64 = 1e-9;

/// Split parameters closer than this along a segment are merged.
const SPLIT_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("form has {found} coefficient pairs, mesh has {expected} triangles")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite coefficient on triangle {0}")]
    NonFinite(usize),
    #[error("form belongs to a different mesh")]
    MeshMismatch,
    #[error("triangle {triangle} has gradient norm {norm}, not spacelike")]
    Spacelike { triangle: usize, norm: f64 },
    #[error("vertex {0} lies on the boundary")]
    BoundaryVertex(usize),
    #[error("polyline leaves the mesh near ({}, {})", .0[0], .0[1])]
    LeftMesh([f64; 2]),
    #[error("mesh has Euler characteristic {0}, not simply connected")]
    NotSimplyConnected(i64),
    #[error("circulation {circulation:e} at vertex {vertex} exceeds the closedness tolerance")]
    NotClosed { vertex: usize, circulation: f64 },
    #[error("mesh has no triangles")]
    Empty,
}

/// Coefficients `(p, q)` per triangle, tied to one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    mesh_id: u64,
    coeffs: Vec<[f64; 2]>,
}

impl OneForm {
    pub fn new(mesh: &Mesh, coeffs: Vec<[f64; 2]>) -> Result<OneForm, FormError> {
        if coeffs.len() != mesh.n_triangles() {
            return Err(FormError::LengthMismatch { expected: mesh.n_triangles(), found: coeffs.len() });
        }
        if let Some(t) = coeffs.iter().position(|c| !(c[0].is_finite() && c[1].is_finite())) {
            return Err(FormError::NonFinite(t));
        }
        Ok(OneForm { mesh_id: mesh.fingerprint(), coeffs })
    }

    pub fn zeros(mesh: &Mesh) -> OneForm {
        OneForm { mesh_id: mesh.fingerprint(), coeffs: vec![[0.0; 2]; mesh.n_triangles()] }
    }

    /// Samples `f` at every triangle centroid.
    pub fn from_centroids<F>(mesh: &Mesh, f: F) -> Result<OneForm, FormError>
    where
        F: Fn(f64, f64) -> [f64; 2],
    {
        OneForm::new(mesh, (0..mesh.n_triangles()).map(|t| {
            let c = mesh.centroid(t);
            f(c[0], c[1])
        }).collect())
    }

    /// `df` for a P1 field `f`.
    pub fn exact(mesh: &Mesh, f: &ScalarField) -> Result<OneForm, FormError> {
        f.check_mesh(mesh)?;
        OneForm::new(mesh, (0..mesh.n_triangles()).map(|t| triangle_gradient(mesh, f.values(), t)).collect())
    }

    pub fn coeffs(&self) -> &[[f64; 2]] {
        &self.coeffs
    }

    pub fn get(&self, t: usize) -> [f64; 2] {
        self.coeffs[t]
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<(), FormError> {
        if self.mesh_id == mesh.fingerprint() && self.coeffs.len() == mesh.n_triangles() {
            Ok(())
        } else {
            Err(FormError::MeshMismatch)
        }
    }

    /// `self - other`.
    pub fn difference(&self, other: &OneForm) -> Result<OneForm, FormError> {
        if self.mesh_id != other.mesh_id || self.coeffs.len() != other.coeffs.len() {
            return Err(FormError::MeshMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect();
        Ok(OneForm { mesh_id: self.mesh_id, coeffs })
    }

    pub fn scaled(&self, s: f64) -> OneForm {
        OneForm { mesh_id: self.mesh_id, coeffs: self.coeffs.iter().map(|c| [s * c[0], s * c[1]]).collect() }
    }

    pub fn norms(&self) -> FormNormField {
        FormNormField { values: self.coeffs.iter().map(|c| c[0].hypot(c[1])).collect() }
    }

    /// `sum (p dx + q dy)` over the pieces of a traced path.
    pub fn integrate(&self, path: &TracedPath) -> f64 {
        path.pieces.iter().map(|s| {
            let c = self.coeffs[s.triangle];
            c[0] * (s.b[0] - s.a[0]) + c[1] * (s.b[1] - s.a[1])
        }).sum()
    }

    /// Midpoint rule for `f (p dx + q dy)` with `f` the P1 interpolant.
    pub fn weighted_integral(&self, mesh: &Mesh, scalar: &ScalarField, path: &TracedPath) -> f64 {
        path.pieces.iter().map(|s| {
            let c = self.coeffs[s.triangle];
            let f = scalar.interpolate(mesh, s.triangle, s.midpoint());
            f * (c[0] * (s.b[0] - s.a[0]) + c[1] * (s.b[1] - s.a[1]))
        }).sum()
    }

    /// `sum |(p, q)| ds`.
    pub fn norm_integral(&self, path: &TracedPath) -> f64 {
        path.pieces.iter().map(|s| {
            let c = self.coeffs[s.triangle];
            c[0].hypot(c[1]) * s.length()
        }).sum()
    }

    /// `sum |(p, q)|^2 ds`.
    pub fn norm2_integral(&self, path: &TracedPath) -> f64 {
        path.pieces.iter().map(|s| {
            let c = self.coeffs[s.triangle];
            (c[0] * c[0] + c[1] * c[1]) * s.length()
        }).sum()
    }
}

/// Pointwise coefficient norms `sqrt(p^2 + q^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FormNormField {
    values: Vec<f64>,
}

impl FormNormField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize) -> f64 {
        self.values[t]
    }
}

/// `alpha_v = (v_x dy - v_y dx) / w`.
pub fn alpha_of(mesh: &Mesh, v: &ScalarField) -> Result<OneForm, FormError> {
    v.check_mesh(mesh)?;
    let mut coeffs = Vec::with_capacity(mesh.n_triangles());
    for t in 0..mesh.n_triangles() {
        let g = triangle_gradient(mesh, v.values(), t);
        let (p, q) = alpha_coeffs(Gradient2::from(g)).map_err(|e| FormError::Spacelike { triangle: t, norm: e.norm })?;
        coeffs.push([p, q]);
    }
    OneForm::new(mesh, coeffs)
}

/// Counterclockwise circulation around the dual cell of an interior vertex.
pub fn vertex_circulation(mesh: &Mesh, form: &OneForm, vertex: usize) -> Result<f64, FormError> {
    form.check_mesh(mesh)?;
    if vertex >= mesh.n_vertices() || mesh.is_boundary_vertex(vertex) {
        return Err(FormError::BoundaryVertex(vertex));
    }
    Ok(circulation_unchecked(mesh, form, vertex))
}

fn circulation_unchecked(mesh: &Mesh, form: &OneForm, vertex: usize) -> f64 {
    let pts = mesh.vertices();
    let mut sum = 0.0;
    for &t in mesh.vertex_triangles(vertex) {
        let tri = mesh.triangles()[t];
        let k = tri.iter().position(|&i| i == vertex).expect("vertex in incident triangle");
        let pj = pts[tri[(k + 1) % 3]];
        let pl = pts[tri[(k + 2) % 3]];
        // midpoint(i, j) -> centroid -> midpoint(i, l)
        let c = form.coeffs[t];
        sum += 0.5 * (c[0] * (pl[0] - pj[0]) + c[1] * (pl[1] - pj[1]));
    }
    sum
}

/// Vertex with the largest absolute circulation among non-boundary vertices.
pub fn max_interior_circulation(mesh: &Mesh, form: &OneForm) -> Result<Option<(usize, f64)>, FormError> {
    form.check_mesh(mesh)?;
    let mut best: Option<(usize, f64)> = None;
    for v in 0..mesh.n_vertices() {
        if mesh.is_boundary_vertex(v) {
            continue;
        }
        let c = circulation_unchecked(mesh, form, v);
        if best.map_or(true, |(_, b)| c.abs() > b.abs()) {
            best = Some((v, c));
        }
    }
    Ok(best)
}

/// Straight piece of a path inside one triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub triangle: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Piece {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceMode {
    /// Leaving the mesh is an error.
    Strict,
    /// Pieces outside the mesh are dropped.
    Clip,
}

/// A polyline cut at triangle edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    pub pieces: Vec<Piece>,
}

impl TracedPath {
    pub fn length(&self) -> f64 {
        self.pieces.iter().map(Piece::length).sum()
    }

    /// Pieces whose triangle satisfies `keep`.
    pub fn restrict<F: Fn(usize) -> bool>(&self, keep: F) -> TracedPath {
        TracedPath { pieces: self.pieces.iter().filter(|p| keep(p.triangle)).copied().collect() }
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Parameters in `(0, 1)` where segment `p0 p1` crosses edges of nearby triangles.
fn crossings(mesh: &Mesh, p0: [f64; 2], p1: [f64; 2]) -> Vec<f64> {
    let d = sub(p1, p0);
    let dd = d[0] * d[0] + d[1] * d[1];
    let lo = [p0[0].min(p1[0]), p0[1].min(p1[1])];
    let hi = [p0[0].max(p1[0]), p0[1].max(p1[1])];
    let mut out = vec![0.0, 1.0];
    for t in mesh.locator().candidates(lo, hi) {
        let tri = mesh.triangles()[t];
        for k in 0..3 {
            let q0 = mesh.vertices()[tri[k]];
            let q1 = mesh.vertices()[tri[(k + 1) % 3]];
            let e = sub(q1, q0);
            let w = sub(q0, p0);
            let denom = cross(d, e);
            let scale = dd.sqrt() * (e[0] * e[0] + e[1] * e[1]).sqrt();
            if denom.abs() > 1e-14 * scale {
                let s = cross(w, e) / denom;
                let u = cross(w, d) / denom;
                if (-1e-12..=1.0 + 1e-12).contains(&u) && s > 0.0 && s < 1.0 {
                    out.push(s);
                }
            } else if cross(w, d).abs() <= 1e-14 * scale.max(dd) {
                // collinear: the edge endpoints split the segment
                for q in [q0, q1] {
                    let s = ((q[0] - p0[0]) * d[0] + (q[1] - p0[1]) * d[1]) / dd;
                    if s > 0.0 && s < 1.0 {
                        out.push(s);
                    }
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= SPLIT_TOL);
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// Cuts `polyline` into pieces each inside a single triangle; the containing
/// triangle of a piece is the lowest-index triangle holding its midpoint.
pub fn trace(mesh: &Mesh, polyline: &[[f64; 2]], mode: TraceMode) -> Result<TracedPath, FormError> {
    if mesh.n_triangles() == 0 {
        return Err(FormError::Empty);
    }
    let mut pieces = Vec::new();
    for w in polyline.windows(2) {
        let (p0, p1) = (w[0], w[1]);
        if p0 == p1 {
            continue;
        }
        let cuts = crossings(mesh, p0, p1);
        for c in cuts.windows(2) {
            let a = lerp(p0, p1, c[0]);
            let b = lerp(p0, p1, c[1]);
            let mid = lerp(p0, p1, 0.5 * (c[0] + c[1]));
            match mesh.locate(mid) {
                Some(t) => pieces.push(Piece { triangle: t, a, b }),
                None if mode == TraceMode::Clip => {}
                None => return Err(FormError::LeftMesh(mid)),
            }
        }
    }
    Ok(TracedPath { pieces })
}

/// Closed inscribed regular polygon of the circle `|p - center| = r` with
/// chords at most `max_chord`, starting at angle zero.
pub fn circle_polyline(center: [f64; 2], r: f64, max_chord: f64) -> Vec<[f64; 2]> {
    let ratio = max_chord / (2.0 * r);
    let n = if ratio >= 1.0 { 8 } else { ((std::f64::consts::PI / ratio.asin()).ceil() as usize).max(8) };
    let mut pts: Vec<[f64; 2]> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            [center[0] + r * th.cos(), center[1] + r * th.sin()]
        })
        .collect();
    pts.push(pts[0]);
    pts
}

pub fn line_integral(mesh: &Mesh, form: &OneForm, polyline: &[[f64; 2]]) -> Result<f64, FormError> {
    form.check_mesh(mesh)?;
    Ok(form.integrate(&trace(mesh, polyline, TraceMode::Strict)?))
}

pub fn scalar_weighted_line_integral(
    mesh: &Mesh,
    form: &OneForm,
    scalar: &ScalarField,
    polyline: &[[f64; 2]],
) -> Result<f64, FormError> {
    form.check_mesh(mesh)?;
    scalar.check_mesh(mesh)?;
    Ok(form.weighted_integral(mesh, scalar, &trace(mesh, polyline, TraceMode::Strict)?))
}

pub fn norm_line_integral(mesh: &Mesh, form: &OneForm, polyline: &[[f64; 2]]) -> Result<f64, FormError> {
    form.check_mesh(mesh)?;
    Ok(form.norm_integral(&trace(mesh, polyline, TraceMode::Strict)?))
}

/// `sum_T area_T (p_T^2 + q_T^2)` over `subset`.
pub fn norm2_area_integral(mesh: &Mesh, form: &OneForm, subset: &[usize]) -> Result<f64, FormError> {
    form.check_mesh(mesh)?;
    Ok(subset.iter().map(|&t| {
        let c = form.coeffs[t];
        mesh.area(t) * (c[0] * c[0] + c[1] * c[1])
    }).sum())
}

/// `sum_T area_T grad(s)_T . (q_T, -p_T)`, the integral of `ds ^ form`.
pub fn wedge_integral(mesh: &Mesh, scalar: &ScalarField, form: &OneForm, subset: &[usize]) -> Result<f64, FormError> {
    form.check_mesh(mesh)?;
    scalar.check_mesh(mesh)?;
    Ok(subset.iter().map(|&t| {
        let g = triangle_gradient(mesh, scalar.values(), t);
        let c = form.coeffs[t];
        mesh.area(t) * (g[0] * c[1] - g[1] * c[0])
    }).sum())
}

/// Potential `u` with `du = form`, normalized by `u(vertex 0) = 0`.
///
/// Each triangle carries an affine `c_T + form_T . x`; constants propagate
/// along a breadth-first spanning tree from triangle 0 by continuity at shared
/// edge midpoints. Vertex values average the incident triangles weighted by
/// their corner angles.
pub fn integrate_potential(mesh: &Mesh, form: &OneForm, closedness_tol: f64) -> Result<ScalarField, FormError> {
    form.check_mesh(mesh)?;
    if mesh.n_triangles() == 0 {
        return Err(FormError::Empty);
    }
    if !mesh.is_simply_connected() {
        return Err(FormError::NotSimplyConnected(mesh.euler_characteristic()));
    }
    if let Some((vertex, circulation)) = max_interior_circulation(mesh, form)? {
        if !(circulation.abs() <= closedness_tol) {
            return Err(FormError::NotClosed { vertex, circulation });
        }
    }
    let nt = mesh.n_triangles();
    let mut offset: Vec<Option<f64>> = vec![None; nt];
    offset[0] = Some(0.0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(t) = queue.pop_front() {
        let ct = offset[t].expect("queued triangles have offsets");
        let tri = mesh.triangles()[t];
        for (k, nb) in mesh.neighbors(t).iter().enumerate() {
            let Some(n) = *nb else { continue };
            if offset[n].is_some() {
                continue;
            }
            let a = mesh.vertices()[tri[(k + 1) % 3]];
            let b = mesh.vertices()[tri[(k + 2) % 3]];
            let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let (fp, fc) = (form.coeffs[t], form.coeffs[n]);
            offset[n] = Some(ct + (fp[0] - fc[0]) * m[0] + (fp[1] - fc[1]) * m[1]);
            queue.push_back(n);
        }
    }
    let mut values = vec![0.0; mesh.n_vertices()];
    for (v, value) in values.iter_mut().enumerate() {
        let p = mesh.vertices()[v];
        let (mut sum, mut weight) = (0.0, 0.0);
        for &t in mesh.vertex_triangles(v) {
            let angle = corner_angle(mesh, t, v);
            let c = form.coeffs[t];
            sum += angle * (offset[t].expect("connected mesh") + c[0] * p[0] + c[1] * p[1]);
            weight += angle;
        }
        *value = sum / weight;
    }
    let root = values[0];
    for x in &mut values {
        *x -= root;
    }
    Ok(ScalarField::new(mesh, values)?)
}

fn corner_angle(mesh: &Mesh, t: usize, v: usize) -> f64 {
    let tri = mesh.triangles()[t];
    let k = tri.iter().position(|&i| i == v).expect("vertex in incident triangle");
    let p = mesh.vertices()[v];
    let e1 = sub(mesh.vertices()[tri[(k + 1) % 3]], p);
    let e2 = sub(mesh.vertices()[tri[(k + 2) % 3]], p);
    cross(e1, e2).atan2(e1[0] * e2[0] + e1[1] * e2[1])
}
