//! Structured triangulations of planar domains.
//!
//! A [`Mesh`] is immutable once built. Boundary vertices are either part of
//! the true boundary (`Dirichlet`) or of an artificial truncation of an
//! unbounded domain (`Artificial`). Both carry prescribed values in a solve,
//! but only the former count as boundary for the intrinsic distance.

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;

use thiserror::Error;

/// Relative slack used when checking that `h` divides a side length.
const DIVISIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexClass {
    Interior,
    Dirichlet,
    Artificial,
}

impl VertexClass {
    /// Integer code used by the plain-text mesh format.
    pub fn code(self) -> u8 {
        match self {
            VertexClass::Interior => 0,
            VertexClass::Dirichlet => 1,
            VertexClass::Artificial => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(VertexClass::Interior),
            1 => Some(VertexClass::Dirichlet),
            2 => Some(VertexClass::Artificial),
            _ => None,
        }
    }

    /// True for vertices whose value is prescribed in a solve.
    pub fn is_constrained(self) -> bool {
        !matches!(self, VertexClass::Interior)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeTag {
    Rectangle { length: f64, height: f64 },
    Strip { length: f64, height: f64 },
    Annulus { r_inner: f64, r_outer: f64 },
    Custom(String),
}

/// Sides of an axis-aligned rectangle `[0, length] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("mesh size {h} exceeds the shortest side {side}")]
    StepTooLarge { h: f64, side: f64 },
    #[error("mesh size {h} does not divide {name} = {value}")]
    NotDivisible { name: &'static str, value: f64, h: f64 },
    #[error("degenerate radii: inner {r_inner}, outer {r_outer}")]
    DegenerateRadii { r_inner: f64, r_outer: f64 },
    #[error("mesh has no triangles")]
    Empty,
    #[error("triangle {triangle} references missing vertex {vertex}")]
    IndexOutOfRange { triangle: usize, vertex: usize },
    #[error("triangle {0} has non-positive signed area")]
    InvertedTriangle(usize),
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifoldEdge(usize, usize),
    #[error("vertex {vertex} is classed {class:?} but {reason}")]
    Classification { vertex: usize, class: VertexClass, reason: &'static str },
    #[error("triangle adjacency graph is disconnected")]
    Disconnected,
    #[error("vertex data has {found} entries, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("mesh has no dirichlet vertices")]
    NoDirichlet,
}

/// Triangulated planar domain with boundary classification.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    classes: Vec<VertexClass>,
    h: f64,
    shape: ShapeTag,
    areas: Vec<f64>,
    // gradients of the three P1 hat functions, per triangle
    basis: Vec<[[f64; 2]; 3]>,
    // neighbor across the edge opposite local vertex k
    neighbors: Vec<[Option<usize>; 3]>,
    vertex_tris: Vec<Vec<usize>>,
    on_boundary: Vec<bool>,
    free: Vec<usize>,
    dof_of: Vec<Option<usize>>,
    n_edges: usize,
    fingerprint: u64,
    locator: OnceLock<Locator>,
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        classes: Vec<VertexClass>,
        h: f64,
        shape: ShapeTag,
    ) -> Result<Mesh, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        if classes.len() != vertices.len() {
            return Err(MeshError::LengthMismatch { expected: vertices.len(), found: classes.len() });
        }
        if !(h > 0.0) {
            return Err(MeshError::NonPositive { name: "h", value: h });
        }
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut basis = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::IndexOutOfRange { triangle: t, vertex: v });
                }
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            let twice = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
            if !(twice > 0.0) {
                return Err(MeshError::InvertedTriangle(t));
            }
            areas.push(0.5 * twice);
            // grad phi_i = perp(p_k - p_j) / (2A) for (i, j, k) counterclockwise
            let g = |pj: [f64; 2], pk: [f64; 2]| [(pj[1] - pk[1]) / twice, (pk[0] - pj[0]) / twice];
            basis.push([g(b, c), g(c, a), g(a, b)]);
        }

        let mut edge_owner: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut neighbors = vec![[None; 3]; triangles.len()];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (i, j) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let key = (i.min(j), i.max(j));
                match edge_owner.get(&key) {
                    None => {
                        edge_owner.insert(key, (t, k));
                    }
                    Some(&(s, m)) => {
                        if neighbors[s][m].is_some() {
                            return Err(MeshError::NonManifoldEdge(key.0, key.1));
                        }
                        neighbors[s][m] = Some(t);
                        neighbors[t][k] = Some(s);
                    }
                }
            }
        }
        let n_edges = edge_owner.len();

        let mut on_boundary = vec![false; nv];
        let mut vertex_tris = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                vertex_tris[tri[k]].push(t);
                if neighbors[t][k].is_none() {
                    on_boundary[tri[(k + 1) % 3]] = true;
                    on_boundary[tri[(k + 2) % 3]] = true;
                }
            }
        }
        for v in 0..nv {
            if vertex_tris[v].is_empty() {
                return Err(MeshError::Classification {
                    vertex: v,
                    class: classes[v],
                    reason: "belongs to no triangle",
                });
            }
            match (on_boundary[v], classes[v]) {
                (true, VertexClass::Interior) => {
                    return Err(MeshError::Classification {
                        vertex: v,
                        class: classes[v],
                        reason: "lies on the boundary",
                    })
                }
                (false, VertexClass::Dirichlet | VertexClass::Artificial) => {
                    return Err(MeshError::Classification {
                        vertex: v,
                        class: classes[v],
                        reason: "lies in the interior",
                    })
                }
                _ => {}
            }
        }

        // connectivity of the triangle adjacency graph
        let mut seen = vec![false; triangles.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(t) = queue.pop_front() {
            for s in neighbors[t].iter().flatten() {
                if !seen[*s] {
                    seen[*s] = true;
                    count += 1;
                    queue.push_back(*s);
                }
            }
        }
        if count != triangles.len() {
            return Err(MeshError::Disconnected);
        }

        let mut free = Vec::new();
        let mut dof_of = vec![None; nv];
        for v in 0..nv {
            if classes[v] == VertexClass::Interior {
                dof_of[v] = Some(free.len());
                free.push(v);
            }
        }

        let mut hasher = DefaultHasher::new();
        for p in &vertices {
            p[0].to_bits().hash(&mut hasher);
            p[1].to_bits().hash(&mut hasher);
        }
        triangles.hash(&mut hasher);
        classes.hash(&mut hasher);
        let fingerprint = hasher.finish();

        Ok(Mesh {
            vertices,
            triangles,
            classes,
            h,
            shape,
            areas,
            basis,
            neighbors,
            vertex_tris,
            on_boundary,
            free,
            dof_of,
            n_edges,
            fingerprint,
            locator: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn classes(&self) -> &[VertexClass] {
        &self.classes
    }

    pub fn class(&self, v: usize) -> VertexClass {
        self.classes[v]
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> &ShapeTag {
        &self.shape
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Gradients of the three hat functions of triangle `t`, in local vertex order.
    pub fn basis(&self, t: usize) -> &[[f64; 2]; 3] {
        &self.basis[t]
    }

    pub fn neighbors(&self, t: usize) -> &[Option<usize>; 3] {
        &self.neighbors[t]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_tris[v]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    /// Unconstrained vertices, in increasing index order.
    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    /// Position of vertex `v` in [`Mesh::free_vertices`], if it is free.
    pub fn dof(&self, v: usize) -> Option<usize> {
        self.dof_of[v]
    }

    /// Content hash identifying this mesh; fields remember it.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// V - E + F over the domain triangles.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.n_edges as i64 + self.triangles.len() as i64
    }

    /// Connected planar triangulations with Euler characteristic one are disks.
    pub fn is_simply_connected(&self) -> bool {
        self.euler_characteristic() == 1
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let tri = self.triangles[t];
        let g = &self.basis[t];
        let a = self.vertices[tri[0]];
        let l1 = g[1][0] * (p[0] - a[0]) + g[1][1] * (p[1] - a[1]);
        let l2 = g[2][0] * (p[0] - a[0]) + g[2][1] * (p[1] - a[1]);
        [1.0 - l1 - l2, l1, l2]
    }

    /// Lowest-index triangle containing `p` (boundary points included).
    pub fn locate(&self, p: [f64; 2]) -> Option<usize> {
        self.locator().locate(self, p)
    }

    pub(crate) fn locator(&self) -> &Locator {
        self.locator.get_or_init(|| Locator::new(self))
    }

    /// Copy of the mesh with boundary vertices matching `pred` moved to `class`.
    ///
    /// Interior vertices are never touched.
    pub fn reclassify_boundary<F>(&self, class: VertexClass, pred: F) -> Result<Mesh, MeshError>
    where
        F: Fn([f64; 2]) -> bool,
    {
        let mut classes = self.classes.clone();
        if class.is_constrained() {
            for (v, c) in classes.iter_mut().enumerate() {
                if self.on_boundary[v] && pred(self.vertices[v]) {
                    *c = class;
                }
            }
        }
        Mesh::new(self.vertices.clone(), self.triangles.clone(), classes, self.h, self.shape.clone())
    }
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
            && self.vertices == other.vertices
            && self.triangles == other.triangles
            && self.classes == other.classes
    }
}

fn divisions(name: &'static str, value: f64, h: f64) -> Result<usize, MeshError> {
    let n = (value / h).round();
    if n < 1.0 || (n * h - value).abs() > DIVISIBILITY_TOL * value.max(1.0) {
        return Err(MeshError::NotDivisible { name, value, h });
    }
    Ok(n as usize)
}

fn check_positive(name: &'static str, value: f64) -> Result<(), MeshError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(MeshError::NonPositive { name, value })
    }
}

/// Structured grid of `[0, length] x [0, height]`, every boundary vertex dirichlet.
pub fn build_rectangle(length: f64, height: f64, h: f64) -> Result<Mesh, MeshError> {
    build_rectangle_with(length, height, h, &[])
}

/// Like [`build_rectangle`], with the listed sides classed artificial.
///
/// Corners shared with a dirichlet side stay dirichlet.
pub fn build_rectangle_with(
    length: f64,
    height: f64,
    h: f64,
    artificial: &[Side],
) -> Result<Mesh, MeshError> {
    rectangle_grid(length, height, h, artificial, ShapeTag::Rectangle { length, height })
}

/// Truncated strip `[0, length] x [0, height]`: long sides dirichlet, short ends
/// artificial when `ends_artificial` is set.
pub fn build_strip(length: f64, height: f64, h: f64, ends_artificial: bool) -> Result<Mesh, MeshError> {
    let sides: &[Side] = if ends_artificial { &[Side::Left, Side::Right] } else { &[] };
    rectangle_grid(length, height, h, sides, ShapeTag::Strip { length, height })
}

fn rectangle_grid(
    length: f64,
    height: f64,
    h: f64,
    artificial: &[Side],
    shape: ShapeTag,
) -> Result<Mesh, MeshError> {
    check_positive("length", length)?;
    check_positive("height", height)?;
    check_positive("h", h)?;
    let side = length.min(height);
    if h > side * (1.0 + DIVISIBILITY_TOL) {
        return Err(MeshError::StepTooLarge { h, side });
    }
    let nx = divisions("length", length, h)?;
    let ny = divisions("height", height, h)?;

    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut classes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([length * i as f64 / nx as f64, height * j as f64 / ny as f64]);
            let on = |s: Side| match s {
                Side::Left => i == 0,
                Side::Right => i == nx,
                Side::Bottom => j == 0,
                Side::Top => j == ny,
            };
            let sides = [Side::Left, Side::Right, Side::Bottom, Side::Top];
            let class = if !sides.iter().any(|&s| on(s)) {
                VertexClass::Interior
            } else if sides.iter().any(|&s| on(s) && !artificial.contains(&s)) {
                VertexClass::Dirichlet
            } else {
                VertexClass::Artificial
            };
            classes.push(class);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles, classes, h, shape)
}

#[derive(Debug, Clone, Copy)]
pub struct AnnulusOptions {
    /// Number of vertices per ring; derived from `h` at the mid radius when unset.
    pub angular_divisions: Option<usize>,
    pub inner: VertexClass,
    pub outer: VertexClass,
}

impl Default for AnnulusOptions {
    fn default() -> Self {
        AnnulusOptions { angular_divisions: None, inner: VertexClass::Dirichlet, outer: VertexClass::Dirichlet }
    }
}

/// Polar-structured annulus centred at the origin, both rings dirichlet.
pub fn build_annulus(r_inner: f64, r_outer: f64, h: f64) -> Result<Mesh, MeshError> {
    build_annulus_with(r_inner, r_outer, h, AnnulusOptions::default())
}

pub fn build_annulus_with(
    r_inner: f64,
    r_outer: f64,
    h: f64,
    opts: AnnulusOptions,
) -> Result<Mesh, MeshError> {
    if !(r_inner > 0.0 && r_outer > r_inner && r_outer.is_finite()) {
        return Err(MeshError::DegenerateRadii { r_inner, r_outer });
    }
    check_positive("h", h)?;
    let boundary_class = |c: VertexClass| if c.is_constrained() { c } else { VertexClass::Dirichlet };
    let (inner, outer) = (boundary_class(opts.inner), boundary_class(opts.outer));
    let n_r = (((r_outer - r_inner) / h) - DIVISIBILITY_TOL).ceil().max(1.0) as usize;
    let n_t = match opts.angular_divisions {
        Some(n) => n.max(3),
        None => ((PI * (r_inner + r_outer) / h) - DIVISIBILITY_TOL).ceil().max(8.0) as usize,
    };

    let mut vertices = Vec::with_capacity((n_r + 1) * n_t);
    let mut classes = Vec::with_capacity((n_r + 1) * n_t);
    for i in 0..=n_r {
        let r = r_inner + (r_outer - r_inner) * i as f64 / n_r as f64;
        let class = if i == 0 {
            inner
        } else if i == n_r {
            outer
        } else {
            VertexClass::Interior
        };
        for j in 0..n_t {
            let theta = 2.0 * PI * j as f64 / n_t as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
            classes.push(class);
        }
    }
    let idx = |i: usize, j: usize| i * n_t + (j % n_t);
    let mut triangles = Vec::with_capacity(2 * n_r * n_t);
    for i in 0..n_r {
        for j in 0..n_t {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh::new(vertices, triangles, classes, h, ShapeTag::Annulus { r_inner, r_outer })
}

/// Per-vertex graph approximation of the intrinsic distance to the true boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    values: Vec<f64>,
}

impl DistanceField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: usize) -> f64 {
        self.values[v]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by vertex index
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Intrinsic distance with opposite-diagonal augmentation enabled.
pub fn intrinsic_distance(mesh: &Mesh) -> Result<DistanceField, MeshError> {
    intrinsic_distance_with(mesh, true)
}

/// Multi-source Dijkstra from the dirichlet vertices over the edge graph.
///
/// With `augment`, the opposite diagonal of every convex pair of adjacent
/// triangles is added as an extra graph edge, which lowers the worst-case
/// overestimate of a structured grid from `sqrt(2)` to about `1.08`.
pub fn intrinsic_distance_with(mesh: &Mesh, augment: bool) -> Result<DistanceField, MeshError> {
    let nv = mesh.n_vertices();
    let sources: Vec<usize> = (0..nv).filter(|&v| mesh.class(v) == VertexClass::Dirichlet).collect();
    if sources.is_empty() {
        return Err(MeshError::NoDirichlet);
    }
    let adjacency = edge_graph(mesh, augment);
    let mut dist = vec![f64::INFINITY; nv];
    let mut heap = BinaryHeap::new();
    for &s in &sources {
        dist[s] = 0.0;
        heap.push(HeapItem(0.0, s));
    }
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &(u, len) in &adjacency[v] {
            let nd = d + len;
            if nd < dist[u] {
                dist[u] = nd;
                heap.push(HeapItem(nd, u));
            }
        }
    }
    Ok(DistanceField { values: dist })
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn edge_graph(mesh: &Mesh, augment: bool) -> Vec<Vec<(usize, f64)>> {
    let p = mesh.vertices();
    let len = |a: usize, b: usize| (p[a][0] - p[b][0]).hypot(p[a][1] - p[b][1]);
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mesh.n_vertices()];
    let mut seen = HashSet::new();
    let mut add = |a: usize, b: usize, adjacency: &mut Vec<Vec<(usize, f64)>>| {
        if seen.insert((a.min(b), a.max(b))) {
            let l = len(a, b);
            adjacency[a].push((b, l));
            adjacency[b].push((a, l));
        }
    };
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            add(a, b, &mut adjacency);
            if !augment {
                continue;
            }
            if let Some(s) = mesh.neighbors(t)[k] {
                if s < t {
                    continue;
                }
                let c = tri[k];
                let d = mesh.triangles()[s].iter().copied().find(|&x| x != a && x != b).unwrap();
                let convex = orient(p[c], p[d], p[a]) * orient(p[c], p[d], p[b]) < 0.0
                    && orient(p[a], p[b], p[c]) * orient(p[a], p[b], p[d]) < 0.0;
                if convex {
                    add(c, d, &mut adjacency);
                }
            }
        }
    }
    adjacency
}

/// Vertices strictly deeper than `delta`. Negative `delta` is clamped to zero.
pub fn omega_delta(mesh: &Mesh, dist: &DistanceField, delta: f64) -> Vec<usize> {
    let delta = if delta < 0.0 {
        log::warn!("omega_delta: negative delta {delta} clamped to 0");
        0.0
    } else {
        delta
    };
    (0..mesh.n_vertices()).filter(|&v| dist.get(v) > delta).collect()
}

/// Uniform bucket grid over the mesh bounding box for point location.
#[derive(Debug, Clone)]
pub(crate) struct Locator {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(mesh: &Mesh) -> Locator {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in mesh.vertices() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
        let target = (mesh.total_area() / mesh.n_triangles() as f64).sqrt() * 2.0;
        let cell = target.max(extent / 2048.0);
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize) + 1;
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize) + 1;
        let mut loc = Locator { origin: lo, cell, nx, ny, buckets: vec![Vec::new(); nx * ny] };
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let pts = tri.map(|i| mesh.vertices()[i]);
            let bmin = [pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min), pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min)];
            let bmax = [pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max), pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max)];
            let (i0, j0) = loc.cell_of(bmin);
            let (i1, j1) = loc.cell_of(bmax);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(t);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: [f64; 2]) -> (usize, usize) {
        let clamp = |v: f64, n: usize| {
            if v.is_nan() || v < 0.0 {
                0
            } else {
                (v as usize).min(n - 1)
            }
        };
        (
            clamp((p[0] - self.origin[0]) / self.cell, self.nx),
            clamp((p[1] - self.origin[1]) / self.cell, self.ny),
        )
    }

    pub(crate) fn locate(&self, mesh: &Mesh, p: [f64; 2]) -> Option<usize> {
        let (i, j) = self.cell_of(p);
        let mut best: Option<usize> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let l = mesh.barycentric(t, p);
            if l.iter().all(|&x| x >= -1e-12) && best.map_or(true, |b| t < b) {
                best = Some(t);
            }
        }
        best
    }

    /// Triangles whose buckets overlap the box `[lo, hi]`, sorted and unique.
    pub(crate) fn candidates(&self, lo: [f64; 2], hi: [f64; 2]) -> Vec<usize> {
        let (i0, j0) = self.cell_of(lo);
        let (i1, j1) = self.cell_of(hi);
        let mut out = Vec::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                out.extend_from_slice(&self.buckets[j * self.nx + i]);
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangle_counts() {
        let m = build_rectangle(1.0, 1.0, 0.5).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (9, 8));
        let m = build_rectangle(2.0, 1.0, 0.25).unwrap();
        assert_eq!((m.n_vertices(), m.n_triangles()), (45, 64));
        // direct enumeration of the cells
        let cells = (0..8).flat_map(|i| (0..4).map(move |j| (i, j))).count();
        assert_eq!(m.n_triangles(), 2 * cells);
    }

    #[test]
    fn rectangle_errors() {
        assert!(matches!(build_rectangle(1.0, 1.0, 2.0), Err(MeshError::StepTooLarge { .. })));
        assert!(matches!(build_rectangle(0.0, 1.0, 0.1), Err(MeshError::NonPositive { .. })));
        assert!(matches!(build_rectangle(1.0, -1.0, 0.1), Err(MeshError::NonPositive { .. })));
        assert!(matches!(build_rectangle(1.0, 1.0, 0.3), Err(MeshError::NotDivisible { .. })));
    }

    #[test]
    fn rectangle_invariants() {
        let m = build_rectangle_with(2.0, 1.0, 0.25, &[Side::Top]).unwrap();
        assert!((0..m.n_triangles()).all(|t| m.area(t) > 0.0));
        assert_eq!(m.euler_characteristic(), 1);
        assert!((m.total_area() - 2.0).abs() < 1e-12);
        for v in 0..m.n_vertices() {
            let [x, y] = m.vertices()[v];
            let class = m.class(v);
            if y == 1.0 && x > 0.0 && x < 2.0 {
                assert_eq!(class, VertexClass::Artificial);
            } else if m.is_boundary_vertex(v) {
                assert_eq!(class, VertexClass::Dirichlet);
            } else {
                assert_eq!(class, VertexClass::Interior);
            }
        }
    }

    #[test]
    fn strip_classes() {
        let m = build_strip(8.0, 1.0, 0.25, true).unwrap();
        for v in 0..m.n_vertices() {
            let [x, y] = m.vertices()[v];
            let end = x == 0.0 || x == 8.0;
            let side = y == 0.0 || y == 1.0;
            let expected = match (end, side) {
                (true, false) => VertexClass::Artificial,
                (_, true) => VertexClass::Dirichlet,
                (false, false) => VertexClass::Interior,
            };
            assert_eq!(m.class(v), expected, "vertex {v} at ({x}, {y})");
        }
        let m = build_strip(8.0, 1.0, 0.25, false).unwrap();
        assert!((0..m.n_vertices()).all(|v| m.class(v) != VertexClass::Artificial));
        assert!(matches!(build_strip(8.0, 1.0, 9.0, true), Err(MeshError::StepTooLarge { .. })));
    }

    #[test]
    fn annulus_rings_and_areas() {
        let opts = AnnulusOptions { angular_divisions: Some(8), ..Default::default() };
        let m = build_annulus_with(1.0, 2.0, 0.5, opts).unwrap();
        let ring = |r: f64| m.vertices().iter().filter(|p| (p[0].hypot(p[1]) - r).abs() < 1e-12).count();
        assert_eq!(ring(1.0), 8);
        assert_eq!(ring(1.0), ring(2.0));
        let m = build_annulus(1.0, 2.0, 0.1).unwrap();
        assert!((0..m.n_triangles()).all(|t| m.area(t) > 0.0));
        assert_eq!(m.euler_characteristic(), 0);
        assert!(!m.is_simply_connected());
        assert!(matches!(build_annulus(2.0, 1.0, 0.1), Err(MeshError::DegenerateRadii { .. })));
        assert!(matches!(build_annulus(0.0, 1.0, 0.1), Err(MeshError::DegenerateRadii { .. })));
    }

    #[test]
    fn annulus_reclassify_outer() {
        let m = build_annulus(1.0, 2.0, 0.25).unwrap();
        let m = m.reclassify_boundary(VertexClass::Artificial, |p| p[0].hypot(p[1]) > 1.5).unwrap();
        for v in 0..m.n_vertices() {
            let r = m.vertices()[v][0].hypot(m.vertices()[v][1]);
            if (r - 2.0).abs() < 1e-9 {
                assert_eq!(m.class(v), VertexClass::Artificial);
            } else if (r - 1.0).abs() < 1e-9 {
                assert_eq!(m.class(v), VertexClass::Dirichlet);
            }
        }
    }

    #[test]
    fn invalid_meshes_are_rejected() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let c = vec![VertexClass::Dirichlet; 3];
        let inverted = Mesh::new(v.clone(), vec![[0, 2, 1]], c.clone(), 1.0, ShapeTag::Custom("t".into()));
        assert_eq!(inverted.unwrap_err(), MeshError::InvertedTriangle(0));
        let bad_class = Mesh::new(
            v.clone(),
            vec![[0, 1, 2]],
            vec![VertexClass::Interior, VertexClass::Dirichlet, VertexClass::Dirichlet],
            1.0,
            ShapeTag::Custom("t".into()),
        );
        assert!(matches!(bad_class, Err(MeshError::Classification { vertex: 0, .. })));
        let mut v2 = v.clone();
        v2.extend([[5.0, 5.0], [6.0, 5.0], [5.0, 6.0]]);
        let disconnected = Mesh::new(
            v2,
            vec![[0, 1, 2], [3, 4, 5]],
            vec![VertexClass::Dirichlet; 6],
            1.0,
            ShapeTag::Custom("t".into()),
        );
        assert_eq!(disconnected.unwrap_err(), MeshError::Disconnected);
    }

    #[test]
    fn distance_center_of_unit_square() {
        let m = build_rectangle(1.0, 1.0, 0.5).unwrap();
        let d = intrinsic_distance(&m).unwrap();
        let center = m.vertices().iter().position(|p| *p == [0.5, 0.5]).unwrap();
        assert!((d.get(center) - 0.5).abs() < 1e-15);
        for v in 0..m.n_vertices() {
            if m.class(v) == VertexClass::Dirichlet {
                assert_eq!(d.get(v), 0.0);
            }
        }
        let fine = build_rectangle(1.0, 1.0, 0.05).unwrap();
        let d = intrinsic_distance_with(&fine, false).unwrap();
        for (v, p) in fine.vertices().iter().enumerate() {
            let exact = p[0].min(p[1]).min(1.0 - p[0]).min(1.0 - p[1]);
            assert!(d.get(v) >= exact - 1e-12);
            assert!(d.get(v) <= exact * 2f64.sqrt() + 1e-12);
        }
    }

    #[test]
    fn artificial_ends_are_not_sources() {
        let m = build_strip(8.0, 1.0, 0.25, true).unwrap();
        let d = intrinsic_distance(&m).unwrap();
        for v in 0..m.n_vertices() {
            let [x, y] = m.vertices()[v];
            if m.class(v) == VertexClass::Artificial {
                assert!(d.get(v) > 0.0);
            }
            // near the ends the nearest true boundary is a long side
            if x <= 0.25 {
                let side = y.min(1.0 - y);
                assert!((d.get(v) - side).abs() < 1e-12, "vertex at ({x}, {y})");
            }
        }
    }

    #[test]
    fn omega_delta_cases() {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let d = intrinsic_distance(&m).unwrap();
        let all: Vec<usize> = (0..m.n_vertices()).filter(|&v| m.class(v) != VertexClass::Dirichlet).collect();
        assert_eq!(omega_delta(&m, &d, 0.0), all);
        assert_eq!(omega_delta(&m, &d, -1.0), all);
        assert!(omega_delta(&m, &d, 0.6).is_empty());
    }

    #[test]
    fn no_dirichlet_vertices() {
        let m = build_strip(2.0, 1.0, 0.5, true).unwrap();
        let all_artificial = m.reclassify_boundary(VertexClass::Artificial, |_| true).unwrap();
        assert_eq!(intrinsic_distance(&all_artificial).unwrap_err(), MeshError::NoDirichlet);
    }

    #[test]
    fn locate_points() {
        let m = build_rectangle(1.0, 1.0, 0.25).unwrap();
        let t = m.locate([0.3, 0.6]).unwrap();
        assert!(m.barycentric(t, [0.3, 0.6]).iter().all(|&l| l >= 0.0));
        assert!(m.locate([1.5, 0.5]).is_none());
    }
}
