//! P1 finite elements and damped Newton for the maximal and minimal surface
//! equations.
//!
//! Both equations are the Euler-Lagrange equations of `sum_T area_T f(|g_T|)`:
//! `f = -sqrt(1 - s^2)` in the Lorentzian case, `f = sqrt(1 + s^2)` in the
//! Euclidean one. The weak residual at a free vertex `i` is
//! `F_i = sum_T area_T grad(phi_i) . g_T / rho_T` with `rho = w` or `rho = W`.

use rayon::prelude::*;
use rayon::ThreadPool;
use thiserror::Error;

use crate::field::{triangle_gradient, FieldError, ScalarField};
use crate::io::Record;
use crate::linalg::{cg_solve, CgError, CsrMatrix};
use crate::lorentz::{w_of, Gradient2};
use crate::mesh::Mesh;

pub use crate::field::p1_gradient;

/// Environment variable selecting the assembly thread count; unset or `0` is serial.
pub const THREADS_ENV: &str = "MAXSURF_THREADS";

/// Smallest accepted line-search step.
pub const MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Lorentz,
    Euclid,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Lorentz => "lorentz",
            Metric::Euclid => "euclid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub metric: Metric,
    pub residual_tol: f64,
    pub max_newton: usize,
    pub sigma_min: f64,
    pub linear_tol: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    /// `0` assembles serially.
    pub threads: usize,
}

impl SolverConfig {
    pub fn new(metric: Metric) -> SolverConfig {
        let threads = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
        SolverConfig {
            metric,
            residual_tol: 1e-10,
            max_newton: 50,
            sigma_min: 1e-8,
            linear_tol: 1e-12,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            threads,
        }
    }

    pub fn lorentz() -> SolverConfig {
        SolverConfig::new(Metric::Lorentz)
    }

    pub fn euclid() -> SolverConfig {
        SolverConfig::new(Metric::Euclid)
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(SolveError::InvalidConfig(format!("{name} must be positive, got {x}")))
            }
        };
        positive("residual_tol", self.residual_tol)?;
        positive("linear_tol", self.linear_tol)?;
        positive("sigma_min", self.sigma_min)?;
        if self.sigma_min >= 0.1 {
            return Err(SolveError::InvalidConfig(format!("sigma_min must be below 0.1, got {}", self.sigma_min)));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(SolveError::InvalidConfig(format!("backtrack must lie in (0, 1), got {}", self.backtrack)));
        }
        if !(self.sufficient_decrease >= 0.0 && self.sufficient_decrease < 1.0) {
            return Err(SolveError::InvalidConfig(format!(
                "sufficient_decrease must lie in [0, 1), got {}",
                self.sufficient_decrease
            )));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig::lorentz()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub metric: Metric,
    pub iterations: usize,
    /// `|F|_2 / sqrt(total area)`
    pub residual: f64,
    /// `1 - max_T |g_T|`
    pub margin: f64,
    /// `sum area * w` (Lorentzian) or `sum area * W` (Euclidean)
    pub energy: f64,
    pub converged: bool,
    pub parallel: bool,
}

impl SolveReport {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.push("metric", self.metric.name());
        r.push("iterations", self.iterations);
        r.push_f64("residual", self.residual);
        r.push_f64("margin", self.margin);
        r.push_f64("energy", self.energy);
        r.push("converged", self.converged);
        r.push("parallel", self.parallel);
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: ScalarField,
    pub report: SolveReport,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("triangle {triangle} has gradient norm {norm}, not spacelike")]
    Spacelike { triangle: usize, norm: f64 },
    #[error("boundary data admits no spacelike initial guess")]
    NoSpacelikeStart,
    #[error("linear solve failed: {0}")]
    Linear(#[from] CgError),
    #[error("no convergence within {} Newton iterations (residual {:e})", .0.report.iterations, .0.report.residual)]
    MaxNewton(Box<Solution>),
    #[error("line search stagnated after {} Newton iterations (residual {:e})", .0.report.iterations, .0.report.residual)]
    Stagnation(Box<Solution>),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("empty triangle subset")]
    EmptySubset,
}

/// Per-triangle gradient and flux denominator.
#[derive(Clone, Copy)]
struct TriState {
    g: [f64; 2],
    rho: f64,
}

struct Assembler {
    metric: Metric,
    pool: Option<ThreadPool>,
}

impl Assembler {
    fn new(metric: Metric, threads: usize) -> Assembler {
        let pool = if threads > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().ok()
        } else {
            None
        };
        Assembler { metric, pool }
    }

    fn parallel(&self) -> bool {
        self.pool.is_some()
    }

    fn state_of(&self, mesh: &Mesh, values: &[f64], t: usize) -> Result<TriState, SolveError> {
        let g = triangle_gradient(mesh, values, t);
        let s2 = g[0] * g[0] + g[1] * g[1];
        let rho = match self.metric {
            Metric::Lorentz => w_of(Gradient2::from(g)).map_err(|e| SolveError::Spacelike { triangle: t, norm: e.norm })?,
            Metric::Euclid => (1.0 + s2).sqrt(),
        };
        Ok(TriState { g, rho })
    }

    /// Triangle states in index order; the parallel path only distributes the
    /// pointwise work, so both paths return identical vectors.
    fn states(&self, mesh: &Mesh, values: &[f64]) -> Result<Vec<TriState>, SolveError> {
        match &self.pool {
            Some(pool) => pool.install(|| {
                (0..mesh.n_triangles()).into_par_iter().map(|t| self.state_of(mesh, values, t)).collect()
            }),
            None => (0..mesh.n_triangles()).map(|t| self.state_of(mesh, values, t)).collect(),
        }
    }

    fn residual(&self, mesh: &Mesh, states: &[TriState]) -> Vec<f64> {
        let mut f = vec![0.0; mesh.free_vertices().len()];
        for (t, st) in states.iter().enumerate() {
            let tri = mesh.triangles()[t];
            let b = mesh.basis(t);
            let a = mesh.area(t);
            let flux = [st.g[0] / st.rho, st.g[1] / st.rho];
            for k in 0..3 {
                if let Some(i) = mesh.dof(tri[k]) {
                    f[i] += a * (b[k][0] * flux[0] + b[k][1] * flux[1]);
                }
            }
        }
        f
    }

    fn tensor(&self, st: &TriState) -> [[f64; 2]; 2] {
        let r = st.rho;
        let sign = match self.metric {
            Metric::Lorentz => 1.0,
            Metric::Euclid => -1.0,
        };
        let c = sign / (r * r * r);
        let g = st.g;
        [[1.0 / r + c * g[0] * g[0], c * g[0] * g[1]], [c * g[0] * g[1], 1.0 / r + c * g[1] * g[1]]]
    }

    fn jacobian(&self, mesh: &Mesh, states: &[TriState]) -> CsrMatrix {
        let mut m = pattern(mesh);
        for (t, st) in states.iter().enumerate() {
            let tri = mesh.triangles()[t];
            let b = mesh.basis(t);
            let a = mesh.area(t);
            let k = self.tensor(st);
            for p in 0..3 {
                let Some(i) = mesh.dof(tri[p]) else { continue };
                let kb = [k[0][0] * b[p][0] + k[0][1] * b[p][1], k[1][0] * b[p][0] + k[1][1] * b[p][1]];
                for q in 0..3 {
                    let Some(j) = mesh.dof(tri[q]) else { continue };
                    let slot = m.slot(i, j).expect("pattern covers every triangle pair");
                    m.values_mut()[slot] += a * (kb[0] * b[q][0] + kb[1] * b[q][1]);
                }
            }
        }
        m
    }

    /// The functional minimized by Newton: `-sum area w` or `sum area W`.
    fn objective(&self, mesh: &Mesh, states: &[TriState]) -> f64 {
        let area: f64 = states.iter().enumerate().map(|(t, s)| mesh.area(t) * s.rho).sum();
        match self.metric {
            Metric::Lorentz => -area,
            Metric::Euclid => area,
        }
    }
}

fn pattern(mesh: &Mesh) -> CsrMatrix {
    let n = mesh.free_vertices().len();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for tri in mesh.triangles() {
        for &a in tri {
            let Some(i) = mesh.dof(a) else { continue };
            for &b in tri {
                if let Some(j) = mesh.dof(b) {
                    rows[i].push(j);
                }
            }
        }
    }
    for r in &mut rows {
        r.sort_unstable();
        r.dedup();
    }
    CsrMatrix::from_pattern(n, &rows)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn scaled_norm(mesh: &Mesh, f: &[f64]) -> f64 {
    norm2(f) / mesh.total_area().sqrt()
}

/// Residual over the free vertices, in [`Mesh::free_vertices`] order.
pub fn residual(mesh: &Mesh, v: &ScalarField, config: &SolverConfig) -> Result<Vec<f64>, SolveError> {
    v.check_mesh(mesh)?;
    let asm = Assembler::new(config.metric, config.threads);
    let states = asm.states(mesh, v.values())?;
    Ok(asm.residual(mesh, &states))
}

/// `|F|_2 / sqrt(total area)`.
pub fn residual_norm(mesh: &Mesh, v: &ScalarField, config: &SolverConfig) -> Result<f64, SolveError> {
    Ok(scaled_norm(mesh, &residual(mesh, v, config)?))
}

/// Derivative of [`residual`] with respect to the free vertex values.
pub fn jacobian(mesh: &Mesh, v: &ScalarField, config: &SolverConfig) -> Result<CsrMatrix, SolveError> {
    v.check_mesh(mesh)?;
    let asm = Assembler::new(config.metric, config.threads);
    let states = asm.states(mesh, v.values())?;
    Ok(asm.jacobian(mesh, &states))
}

/// P1 stiffness matrix of the Laplacian on the free vertices.
pub fn stiffness(mesh: &Mesh) -> CsrMatrix {
    let asm = Assembler::new(Metric::Euclid, 0);
    let states = vec![TriState { g: [0.0; 2], rho: 1.0 }; mesh.n_triangles()];
    asm.jacobian(mesh, &states)
}

/// Surface area `sum area * w` (Lorentzian) or `sum area * W` (Euclidean).
pub fn energy(mesh: &Mesh, v: &ScalarField, metric: Metric) -> Result<f64, SolveError> {
    v.check_mesh(mesh)?;
    let asm = Assembler::new(metric, 0);
    let states = asm.states(mesh, v.values())?;
    Ok(states.iter().enumerate().map(|(t, s)| mesh.area(t) * s.rho).sum())
}

/// `1 - max_T |g_T|` over `subset` or every triangle; errors unless positive.
pub fn gradient_margin(mesh: &Mesh, v: &ScalarField, subset: Option<&[usize]>) -> Result<f64, SolveError> {
    let g = p1_gradient(mesh, v)?;
    if matches!(subset, Some(s) if s.is_empty()) || mesh.n_triangles() == 0 {
        return Err(SolveError::EmptySubset);
    }
    let all: Vec<usize>;
    let ts = match subset {
        Some(s) => s,
        None => {
            all = (0..mesh.n_triangles()).collect();
            &all
        }
    };
    let mut worst = (0, 0.0);
    for &t in ts {
        let n = g.get(t)[0].hypot(g.get(t)[1]);
        if n > worst.1 {
            worst = (t, n);
        }
    }
    let margin = 1.0 - worst.1;
    if margin > 0.0 {
        Ok(margin)
    } else {
        Err(SolveError::Spacelike { triangle: worst.0, norm: worst.1 })
    }
}

fn with_free(mesh: &Mesh, base: &[f64], free: &[f64]) -> Vec<f64> {
    let mut v = base.to_vec();
    for (k, &i) in mesh.free_vertices().iter().enumerate() {
        v[i] = free[k];
    }
    v
}

/// Discrete harmonic function with the constrained values of `boundary`.
pub fn harmonic_extension(mesh: &Mesh, boundary: &ScalarField, linear_tol: f64) -> Result<ScalarField, SolveError> {
    boundary.check_mesh(mesh)?;
    let zeroed = with_free(mesh, boundary.values(), &vec![0.0; mesh.free_vertices().len()]);
    let asm = Assembler::new(Metric::Euclid, 0);
    let states: Vec<TriState> = (0..mesh.n_triangles())
        .map(|t| TriState { g: triangle_gradient(mesh, &zeroed, t), rho: 1.0 })
        .collect();
    let rhs: Vec<f64> = asm.residual(mesh, &states).iter().map(|x| -x).collect();
    let x = cg_solve(&stiffness(mesh), &rhs, linear_tol)?.solution;
    Ok(ScalarField::new(mesh, with_free(mesh, &zeroed, &x))?)
}

/// Largest `s` in `[0, 1]` with `|g0 + s g1| <= rho` on every triangle.
fn largest_feasible_scale(pairs: &[([f64; 2], [f64; 2])], rho: f64) -> Option<f64> {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for (g0, g1) in pairs {
        let a = g1[0] * g1[0] + g1[1] * g1[1];
        let b = g0[0] * g1[0] + g0[1] * g1[1];
        let c = g0[0] * g0[0] + g0[1] * g0[1] - rho * rho;
        if a <= 0.0 {
            if c > 0.0 {
                return None;
            }
            continue;
        }
        let disc = b * b - a * c;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        // stable roots of a s^2 + 2 b s + c
        let q = -(b + b.signum() * root);
        let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
        lo = lo.max(r1.min(r2));
        hi = hi.min(r1.max(r2));
        if lo > hi {
            return None;
        }
    }
    Some(hi)
}

/// Harmonic extension, with the Lorentzian interior offset from the boundary
/// mean scaled into `|g| <= 1 - 10 sigma_min`.
pub fn initial_guess(mesh: &Mesh, boundary: &ScalarField, config: &SolverConfig) -> Result<ScalarField, SolveError> {
    let harm = harmonic_extension(mesh, boundary, config.linear_tol)?;
    if config.metric == Metric::Euclid {
        return Ok(harm);
    }
    let constrained: Vec<f64> =
        (0..mesh.n_vertices()).filter(|&i| mesh.dof(i).is_none()).map(|i| boundary.values()[i]).collect();
    let mean = if constrained.is_empty() { 0.0 } else { constrained.iter().sum::<f64>() / constrained.len() as f64 };
    let n_free = mesh.free_vertices().len();
    let base = with_free(mesh, boundary.values(), &vec![mean; n_free]);
    let offset_free: Vec<f64> = mesh.free_vertices().iter().map(|&i| harm.values()[i] - mean).collect();
    let offset = with_free(mesh, &vec![0.0; mesh.n_vertices()], &offset_free);
    let pairs: Vec<_> = (0..mesh.n_triangles())
        .map(|t| (triangle_gradient(mesh, &base, t), triangle_gradient(mesh, &offset, t)))
        .collect();
    let s = largest_feasible_scale(&pairs, 1.0 - 10.0 * config.sigma_min).ok_or(SolveError::NoSpacelikeStart)?;
    let values = base.iter().zip(&offset).map(|(b, o)| b + s * o).collect();
    Ok(ScalarField::new(mesh, values)?)
}

fn max_gradient(states: &[TriState]) -> f64 {
    states.iter().map(|s| s.g[0].hypot(s.g[1])).fold(0.0, f64::max)
}

/// Damped Newton for the Dirichlet problem; constrained vertices keep the
/// values of `boundary`, its interior values are ignored.
pub fn solve(mesh: &Mesh, boundary: &ScalarField, config: &SolverConfig) -> Result<Solution, SolveError> {
    config.validate()?;
    boundary.check_mesh(mesh)?;
    let asm = Assembler::new(config.metric, config.threads);
    let mut values = initial_guess(mesh, boundary, config)?.into_values();
    let mut states = asm.states(mesh, &values)?;
    let mut f = asm.residual(mesh, &states);
    let mut fnorm = scaled_norm(mesh, &f);
    let mut obj = asm.objective(mesh, &states);
    let cap = 1.0 - config.sigma_min;
    let mut iterations = 0;

    let finish = |values: Vec<f64>, states: &[TriState], fnorm: f64, iterations: usize, converged: bool| {
        let report = SolveReport {
            metric: config.metric,
            iterations,
            residual: fnorm,
            margin: 1.0 - max_gradient(states),
            energy: states.iter().enumerate().map(|(t, s)| mesh.area(t) * s.rho).sum(),
            converged,
            parallel: asm.parallel(),
        };
        ScalarField::new(mesh, values).map(|field| Solution { field, report })
    };

    loop {
        log::debug!("newton {iterations}: residual {fnorm:e}");
        if fnorm <= config.residual_tol {
            return Ok(finish(values, &states, fnorm, iterations, true)?);
        }
        if iterations >= config.max_newton {
            return Err(SolveError::MaxNewton(Box::new(finish(values, &states, fnorm, iterations, false)?)));
        }
        let jac = asm.jacobian(mesh, &states);
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let dir = cg_solve(&jac, &rhs, config.linear_tol)?.solution;
        let free: Vec<f64> = mesh.free_vertices().iter().map(|&i| values[i]).collect();
        let slack = 1e-12 * (1.0 + obj.abs());
        let mut t = 1.0;
        let accepted = loop {
            let trial_free: Vec<f64> = free.iter().zip(&dir).map(|(x, d)| x + t * d).collect();
            let trial = with_free(mesh, &values, &trial_free);
            if let Ok(st) = asm.states(mesh, &trial) {
                if config.metric == Metric::Euclid || max_gradient(&st) <= cap {
                    let tf = asm.residual(mesh, &st);
                    let tnorm = scaled_norm(mesh, &tf);
                    let tobj = asm.objective(mesh, &st);
                    if tnorm <= (1.0 - config.sufficient_decrease * t) * fnorm && tobj <= obj + slack {
                        break Some((trial, st, tf, tnorm, tobj));
                    }
                }
            }
            t *= config.backtrack;
            if t < MIN_STEP {
                break None;
            }
        };
        iterations += 1;
        match accepted {
            Some((v, st, tf, tnorm, tobj)) => {
                values = v;
                states = st;
                f = tf;
                fnorm = tnorm;
                obj = tobj;
            }
            None => {
                return Err(SolveError::Stagnation(Box::new(finish(values, &states, fnorm, iterations, false)?)));
            }
        }
    }
}
