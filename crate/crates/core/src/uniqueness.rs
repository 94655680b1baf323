//! Flux comparison between two solutions with common Dirichlet data.
//!
//! With `4 delta = sup(v - v')`, a level `a` in `[2 delta, 3 delta]`, the
//! region `{v - v' > a}` and `alpha~ = alpha_v - alpha_v'`, the flux
//! `eta(r) = int_{C_r} |alpha~|` over the part of the circle `|p| = r` inside
//! the region obeys
//!
//! ```text
//! mu + C(eps) (E(r) - E(r0)) <= 2 delta eta(r),      E(r) = iint_{|p| < r} |alpha~|^2
//! ```
//!
//! with `mu = C(eps) E(r0)`. Comparison with `y' = C y^2 / (4 pi delta t)`,
//! `y(r0) = mu / (4 delta)` forces `eta` to blow up before
//! `r1 = r0 exp(16 pi delta^2 / (mu C))`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::field::{triangle_gradient, ScalarField};
use crate::forms::{
    alpha_of, circle_polyline, norm2_area_integral, trace, wedge_integral, FormError, OneForm, TraceMode,
};
use crate::io::{fmt_f64, Record};
use crate::lorentz::{lemma_constants, LorentzError};
use crate::mesh::{build_strip, intrinsic_distance, omega_delta, Mesh, MeshError};
use crate::solver::{solve, Metric, SolveError, SolverConfig};

/// Number of equispaced level candidates in `[2 delta, 3 delta]`.
pub const LEVEL_CANDIDATES: usize = 33;

/// Default relative slack for flagging the flux inequality.
pub const DEFAULT_TOL_REL: f64 = 0.05;

/// Ratio of consecutive scan radii.
pub const RADIUS_RATIO: f64 = 1.1;

/// The numerical cross-check is skipped above this blow-up exponent.
pub const RK4_MAX_EXPONENT: f64 = 60.0;

/// Relative step of the cross-check integrator in `t` and in `y`.
pub const RK4_STEP: f64 = 2.5e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UniquenessError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Lorentz(#[from] LorentzError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("level region is empty")]
    EmptyRegion,
    #[error("anchor energy gives mu = {0:e}, the comparison needs mu > 0")]
    MuNotPositive(f64),
    #[error("invalid radii: {0}")]
    InvalidRadii(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scan and comparison disagree on {0}")]
    ParameterMismatch(&'static str),
}

/// Triangles of `{v - v' - a > 0}` judged by centroid value.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRegion {
    pub delta: f64,
    pub a: f64,
    pub triangles: Vec<usize>,
    /// smallest `|v - v' - a|` over vertices
    pub clearance: f64,
    /// gradient margin of both fields over the region; `None` when empty
    pub eps_hat: Option<f64>,
}

impl LevelRegion {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn mask(&self, n_triangles: usize) -> Vec<bool> {
        let mut m = vec![false; n_triangles];
        for &t in &self.triangles {
            m[t] = true;
        }
        m
    }

    /// `v - v' - a` per vertex.
    pub fn shifted_difference(&self, v: &ScalarField, vp: &ScalarField) -> Result<ScalarField, UniquenessError> {
        Ok(v.difference(vp, -self.a).map_err(FormError::from)?)
    }
}

fn margin_over(mesh: &Mesh, f: &ScalarField, subset: &[usize]) -> f64 {
    let worst = subset.iter().map(|&t| {
        let g = triangle_gradient(mesh, f.values(), t);
        g[0].hypot(g[1])
    });
    1.0 - worst.fold(0.0, f64::max)
}

/// `min` over both fields of `1 - max |grad|` on the region.
pub fn empirical_gradient_estimate(
    mesh: &Mesh,
    v: &ScalarField,
    vp: &ScalarField,
    region: &LevelRegion,
) -> Result<f64, UniquenessError> {
    if region.is_empty() {
        return Err(UniquenessError::EmptyRegion);
    }
    v.check_mesh(mesh).map_err(FormError::from)?;
    vp.check_mesh(mesh).map_err(FormError::from)?;
    Ok(margin_over(mesh, v, &region.triangles).min(margin_over(mesh, vp, &region.triangles)))
}

/// Picks `a` among [`LEVEL_CANDIDATES`] values maximizing the clearance from
/// vertex values; the first maximizer wins. `sup(v - v') <= 0` yields an
/// empty region with `delta = 0`.
pub fn choose_level(mesh: &Mesh, v: &ScalarField, vp: &ScalarField) -> Result<LevelRegion, UniquenessError> {
    v.check_mesh(mesh).map_err(FormError::from)?;
    vp.check_mesh(mesh).map_err(FormError::from)?;
    let d: Vec<f64> = v.values().iter().zip(vp.values()).map(|(a, b)| a - b).collect();
    let sup = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(sup > 0.0) {
        return Ok(LevelRegion { delta: 0.0, a: 0.0, triangles: Vec::new(), clearance: 0.0, eps_hat: None });
    }
    let delta = sup / 4.0;
    let mut best = (f64::NEG_INFINITY, 2.0 * delta);
    for k in 0..LEVEL_CANDIDATES {
        let a = 2.0 * delta + delta * k as f64 / (LEVEL_CANDIDATES - 1) as f64;
        let clearance = d.iter().map(|x| (x - a).abs()).fold(f64::INFINITY, f64::min);
        if clearance > best.0 {
            best = (clearance, a);
        }
    }
    let (clearance, a) = best;
    let triangles: Vec<usize> = (0..mesh.n_triangles())
        .filter(|&t| {
            let tri = mesh.triangles()[t];
            (d[tri[0]] + d[tri[1]] + d[tri[2]]) / 3.0 - a > 0.0
        })
        .collect();
    let mut region = LevelRegion { delta, a, triangles, clearance, eps_hat: None };
    if !region.is_empty() {
        region.eps_hat = Some(empirical_gradient_estimate(mesh, v, vp, &region)?);
    }
    Ok(region)
}

/// Vertices with `v - v' > a` whose intrinsic distance to the Dirichlet
/// boundary does not exceed `delta`.
pub fn containment_violations(
    mesh: &Mesh,
    v: &ScalarField,
    vp: &ScalarField,
    region: &LevelRegion,
) -> Result<Vec<usize>, UniquenessError> {
    let dist = intrinsic_distance(mesh)?;
    let deep = omega_delta(mesh, &dist, region.delta);
    let mut inside = vec![false; mesh.n_vertices()];
    for i in deep {
        inside[i] = true;
    }
    let vt = region.shifted_difference(v, vp)?;
    Ok((0..mesh.n_vertices()).filter(|&i| vt.values()[i] > 0.0 && !inside[i]).collect())
}

fn centroid_radius(mesh: &Mesh, t: usize) -> f64 {
    let c = mesh.centroid(t);
    c[0].hypot(c[1])
}

/// `rho 1.1^k` for `k >= 1` up to the largest vertex radius, where `rho` is
/// the smallest centroid radius in the region; the first entry is `r0`.
pub fn geometric_radii(mesh: &Mesh, region: &LevelRegion) -> Result<Vec<f64>, UniquenessError> {
    if region.is_empty() {
        return Err(UniquenessError::EmptyRegion);
    }
    let rho = region.triangles.iter().map(|&t| centroid_radius(mesh, t)).fold(f64::INFINITY, f64::min);
    let r_max = mesh.vertices().iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let start = if rho > 0.0 { rho * RADIUS_RATIO } else { mesh.h() };
    let mut radii = Vec::new();
    let mut r = start;
    while r <= r_max {
        radii.push(r);
        r *= RADIUS_RATIO;
    }
    if radii.is_empty() {
        return Err(UniquenessError::InvalidRadii(format!("first radius {start} exceeds the mesh extent {r_max}")));
    }
    Ok(radii)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxScan {
    pub r0: f64,
    pub mu: f64,
    pub delta: f64,
    pub a: f64,
    pub eps_hat: f64,
    pub c: f64,
    pub tol_rel: f64,
    pub radii: Vec<f64>,
    pub eta: Vec<f64>,
    pub energy: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub flags: Vec<bool>,
    /// `int_{C_r} v~ alpha~`
    pub circle_weighted: Vec<f64>,
    /// `iint_{|p| < r} dv~ ^ alpha~`
    pub wedge: Vec<f64>,
    /// `int_{C_r} |alpha~|^2 ds`
    pub eta_norm2: Vec<f64>,
    /// length of the traced part of `C_r`
    pub arclength: Vec<f64>,
}

impl FluxScan {
    pub fn n_flags(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn first_flag(&self) -> Option<f64> {
        self.flags.iter().position(|&f| f).map(|k| self.radii[k])
    }

    /// Radii where `eta^2 > 2 pi r int |alpha~|^2`.
    pub fn cauchy_schwarz_violations(&self) -> Vec<f64> {
        (0..self.radii.len())
            .filter(|&k| self.eta[k] * self.eta[k] > 2.0 * PI * self.radii[k] * self.eta_norm2[k])
            .map(|k| self.radii[k])
            .collect()
    }

    /// Radii where `C E(r) > iint dv~ ^ alpha~` beyond rounding.
    pub fn lemma_violations(&self) -> Vec<f64> {
        (0..self.radii.len())
            .filter(|&k| self.c * self.energy[k] > self.wedge[k] + 1e-12 * self.wedge[k].abs().max(1.0))
            .map(|k| self.radii[k])
            .collect()
    }

    /// CSV with header `r,eta,energy,lhs,rhs,flag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,eta,energy,lhs,rhs,flag\n");
        for k in 0..self.radii.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt_f64(self.radii[k]),
                fmt_f64(self.eta[k]),
                fmt_f64(self.energy[k]),
                fmt_f64(self.lhs[k]),
                fmt_f64(self.rhs[k]),
                u8::from(self.flags[k])
            );
        }
        out
    }
}

/// Evaluates the flux inequality at every radius; `radii[0]` is `r0`.
pub fn flux_scan(
    mesh: &Mesh,
    v: &ScalarField,
    vp: &ScalarField,
    region: &LevelRegion,
    radii: &[f64],
    tol_rel: f64,
) -> Result<FluxScan, UniquenessError> {
    let eps_hat = region.eps_hat.ok_or(UniquenessError::EmptyRegion)?;
    if region.is_empty() {
        return Err(UniquenessError::EmptyRegion);
    }
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(UniquenessError::InvalidRadii("radii must be positive and strictly increasing".into()));
    }
    if !(tol_rel >= 0.0) {
        return Err(UniquenessError::InvalidParameter(format!("tol_rel = {tol_rel}")));
    }
    let c = lemma_constants(eps_hat)?.c;
    let alpha: OneForm = alpha_of(mesh, v)?.difference(&alpha_of(mesh, vp)?)?;
    let vt = region.shifted_difference(v, vp)?;
    let mask = region.mask(mesh.n_triangles());
    let n = radii.len();
    let mut scan = FluxScan {
        r0: radii[0],
        mu: 0.0,
        delta: region.delta,
        a: region.a,
        eps_hat,
        c,
        tol_rel,
        radii: radii.to_vec(),
        eta: Vec::with_capacity(n),
        energy: Vec::with_capacity(n),
        lhs: Vec::with_capacity(n),
        rhs: Vec::with_capacity(n),
        flags: Vec::with_capacity(n),
        circle_weighted: Vec::with_capacity(n),
        wedge: Vec::with_capacity(n),
        eta_norm2: Vec::with_capacity(n),
        arclength: Vec::with_capacity(n),
    };
    for &r in radii {
        let inside: Vec<usize> = region.triangles.iter().copied().filter(|&t| centroid_radius(mesh, t) < r).collect();
        scan.energy.push(norm2_area_integral(mesh, &alpha, &inside)?);
        scan.wedge.push(wedge_integral(mesh, &vt, &alpha, &inside)?);
        let circle = circle_polyline([0.0, 0.0], r, mesh.h() / 2.0);
        let path = trace(mesh, &circle, TraceMode::Clip)?.restrict(|t| mask[t]);
        scan.eta.push(alpha.norm_integral(&path));
        scan.eta_norm2.push(alpha.norm2_integral(&path));
        scan.circle_weighted.push(alpha.weighted_integral(mesh, &vt, &path));
        scan.arclength.push(path.length());
    }
    scan.mu = c * scan.energy[0];
    if !(scan.mu > 0.0) {
        return Err(UniquenessError::MuNotPositive(scan.mu));
    }
    for k in 0..n {
        let lhs = scan.mu + c * (scan.energy[k] - scan.energy[0]);
        let rhs = 2.0 * region.delta * scan.eta[k];
        scan.lhs.push(lhs);
        scan.rhs.push(rhs);
        scan.flags.push(lhs > rhs * (1.0 + tol_rel));
    }
    Ok(scan)
}

/// Blow-up solution of `y' = C y^2 / (4 pi delta t)`, `y(r0) = mu / (4 delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeComparison {
    pub r0: f64,
    pub mu: f64,
    pub delta: f64,
    pub c: f64,
    /// `16 pi delta^2 / (mu C)`
    pub exponent: f64,
    /// `r0 exp(exponent)`, possibly infinite
    pub r1: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Number of log-spaced samples stored in an [`OdeComparison`].
pub const ODE_SAMPLES: usize = 101;

impl OdeComparison {
    /// Closed form `1 / (4 delta / mu - C ln(t / r0) / (4 pi delta))`; infinite from `r1` on.
    pub fn y(&self, t: f64) -> f64 {
        let z = 4.0 * self.delta / self.mu - self.c / (4.0 * PI * self.delta) * (t / self.r0).ln();
        if t >= self.r1 || z <= 0.0 {
            f64::INFINITY
        } else {
            1.0 / z
        }
    }

    /// CSV with header `t,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y\n");
        for &(t, y) in &self.samples {
            let _ = writeln!(out, "{},{}", fmt_f64(t), fmt_f64(y));
        }
        out
    }
}

pub fn ode_blowup(r0: f64, mu: f64, delta: f64, c: f64) -> Result<OdeComparison, UniquenessError> {
    for (name, x) in [("r0", r0), ("mu", mu), ("delta", delta), ("C", c)] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(UniquenessError::InvalidParameter(format!("{name} = {x} must be positive and finite")));
        }
    }
    let exponent = 16.0 * PI * delta * delta / (mu * c);
    let r1 = r0 * exponent.exp();
    let mut ode = OdeComparison { r0, mu, delta, c, exponent, r1, samples: Vec::with_capacity(ODE_SAMPLES) };
    // log grid on [r0, r1 (1 - 1e-6)], capped at exponent 700
    let span = if r1.is_finite() { (r1 * (1.0 - 1e-6) / r0).ln() } else { 700.0 };
    for k in 0..ODE_SAMPLES {
        let t = if k == 0 { r0 } else { r0 * (span * k as f64 / (ODE_SAMPLES - 1) as f64).exp() };
        ode.samples.push((t, ode.y(t)));
    }
    Ok(ode)
}

/// Outcome of integrating the Cauchy problem with classical Runge-Kutta.
#[derive(Debug, Clone, PartialEq)]
pub struct Rk4Check {
    /// largest relative deviation from the closed form while `y <= 1e6`
    pub max_rel_error: f64,
    /// first `t` with `y > 1e15`
    pub divergence_t: f64,
    pub steps: usize,
}

/// Fourth-order integration in `t` with steps `RK4_STEP min(t, 4 pi delta t / (C y))`
/// and compensated accumulation; errors made early are amplified by `y / y(r0)`,
/// hence the small step. `None` when the exponent exceeds [`RK4_MAX_EXPONENT`].
pub fn rk4_cross_check(ode: &OdeComparison) -> Option<Rk4Check> {
    if ode.exponent > RK4_MAX_EXPONENT {
        return None;
    }
    let k = ode.c / (4.0 * PI * ode.delta);
    let f = |t: f64, y: f64| k * y * y / t;
    let (mut t, mut y) = (ode.r0, ode.mu / (4.0 * ode.delta));
    let (mut ct, mut cy) = (0.0, 0.0);
    let mut max_rel: f64 = 0.0;
    let mut steps = 0;
    let limit = 2.0 * ode.r1;
    while y <= 1e15 {
        if y <= 1e6 {
            let exact = ode.y(t);
            max_rel = max_rel.max(((y - exact) / exact).abs());
        }
        if t > limit || steps > 50_000_000 {
            return Some(Rk4Check { max_rel_error: max_rel, divergence_t: f64::INFINITY, steps });
        }
        let dt = RK4_STEP * t * (1.0 / (k * y)).min(1.0);
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1);
        let k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2);
        let k4 = f(t + dt, y + dt * k3);
        let dy = dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        (y, cy) = kahan(y, cy, dy);
        (t, ct) = kahan(t, ct, dt);
        steps += 1;
    }
    Some(Rk4Check { max_rel_error: max_rel, divergence_t: t, steps })
}

fn kahan(sum: f64, comp: f64, x: f64) -> (f64, f64) {
    let yv = x - comp;
    let s = sum + yv;
    (s, (s - sum) - yv)
}

#[derive(Debug, Clone, PartialEq)]
pub enum VerdictStatus {
    /// `r1` does not exceed the second scan radius.
    ContradictionInsideAnchor,
    EquadiffViolated { first_r: f64 },
    EtaBelowComparison { first_r: f64 },
    /// The flux stays above `y` on the scanned range; `r1 / r_max` measures
    /// how much further the domain would have to extend.
    ComparisonHolds { persistence_ratio: f64 },
}

impl VerdictStatus {
    pub fn name(&self) -> &'static str {
        match self {
            VerdictStatus::ContradictionInsideAnchor => "contradiction_inside_anchor",
            VerdictStatus::EquadiffViolated { .. } => "equadiff_violated",
            VerdictStatus::EtaBelowComparison { .. } => "eta_below_comparison",
            VerdictStatus::ComparisonHolds { .. } => "comparison_holds",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub n_radii: usize,
    pub n_flags: usize,
    /// unflagged radii below `r1` where `eta < y`
    pub eta_below: Vec<f64>,
    pub r1: f64,
    pub r_scan_max: f64,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

pub fn comparison_verdict(scan: &FluxScan, ode: &OdeComparison) -> Result<Verdict, UniquenessError> {
    if !same(scan.r0, ode.r0) {
        return Err(UniquenessError::ParameterMismatch("r0"));
    }
    if !same(scan.mu, ode.mu) {
        return Err(UniquenessError::ParameterMismatch("mu"));
    }
    if !same(scan.delta, ode.delta) {
        return Err(UniquenessError::ParameterMismatch("delta"));
    }
    if !same(scan.c, ode.c) {
        return Err(UniquenessError::ParameterMismatch("C"));
    }
    let eta_below: Vec<f64> = (0..scan.radii.len())
        .filter(|&k| !scan.flags[k] && scan.radii[k] < ode.r1 && scan.eta[k] < ode.y(scan.radii[k]))
        .map(|k| scan.radii[k])
        .collect();
    let r_scan_max = *scan.radii.last().expect("scan has radii");
    let status = if scan.radii.len() > 1 && ode.r1 <= scan.radii[1] {
        VerdictStatus::ContradictionInsideAnchor
    } else if let Some(first_r) = scan.first_flag() {
        VerdictStatus::EquadiffViolated { first_r }
    } else if let Some(&first_r) = eta_below.first() {
        VerdictStatus::EtaBelowComparison { first_r }
    } else {
        VerdictStatus::ComparisonHolds { persistence_ratio: ode.r1 / r_scan_max }
    };
    Ok(Verdict { status, n_radii: scan.radii.len(), n_flags: scan.n_flags(), eta_below, r1: ode.r1, r_scan_max })
}

/// Complete analysis of one pair of solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessRun {
    pub region: LevelRegion,
    pub scan: FluxScan,
    pub ode: OdeComparison,
    pub rk4: Option<Rk4Check>,
    pub verdict: Verdict,
    /// vertices of the region closer than `delta` to the Dirichlet boundary
    pub outside_omega_delta: usize,
}

impl UniquenessRun {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.push("status", self.verdict.status.name());
        match self.verdict.status {
            VerdictStatus::EquadiffViolated { first_r } | VerdictStatus::EtaBelowComparison { first_r } => {
                r.push_f64("first_r", first_r)
            }
            VerdictStatus::ComparisonHolds { persistence_ratio } => r.push_f64("persistence_ratio", persistence_ratio),
            VerdictStatus::ContradictionInsideAnchor => {}
        }
        r.push_f64("delta", self.region.delta);
        r.push_f64("a", self.region.a);
        r.push("region_triangles", self.region.triangles.len());
        r.push_f64("eps_hat", self.scan.eps_hat);
        r.push_f64("C", self.scan.c);
        r.push_f64("r0", self.scan.r0);
        r.push_f64("mu", self.scan.mu);
        r.push_f64("exponent", self.ode.exponent);
        r.push_f64("r1", self.ode.r1);
        r.push_f64("r_scan_max", self.verdict.r_scan_max);
        r.push("n_radii", self.verdict.n_radii);
        r.push("n_flags", self.verdict.n_flags);
        r.push("eta_below_y", self.verdict.eta_below.len());
        r.push("cauchy_schwarz_violations", self.scan.cauchy_schwarz_violations().len());
        r.push("lemma_violations", self.scan.lemma_violations().len());
        r.push("outside_omega_delta", self.outside_omega_delta);
        match &self.rk4 {
            Some(c) => {
                r.push_f64("rk4_max_rel_error", c.max_rel_error);
                r.push_f64("rk4_divergence_t", c.divergence_t);
            }
            None => r.push("rk4_max_rel_error", "skipped"),
        }
        r
    }
}

/// Level choice, flux scan, comparison ODE and verdict; `Ok(None)` when the
/// level region is empty. Radii default to [`geometric_radii`].
pub fn analyze_pair(
    mesh: &Mesh,
    v: &ScalarField,
    vp: &ScalarField,
    radii: Option<&[f64]>,
    tol_rel: f64,
) -> Result<Option<UniquenessRun>, UniquenessError> {
    let region = choose_level(mesh, v, vp)?;
    if region.is_empty() {
        return Ok(None);
    }
    let radii = match radii {
        Some(r) => r.to_vec(),
        None => geometric_radii(mesh, &region)?,
    };
    let scan = flux_scan(mesh, v, vp, &region, &radii, tol_rel)?;
    let ode = ode_blowup(scan.r0, scan.mu, scan.delta, scan.c)?;
    let rk4 = rk4_cross_check(&ode);
    let verdict = comparison_verdict(&scan, &ode)?;
    let outside_omega_delta = containment_violations(mesh, v, vp, &region)?.len();
    Ok(Some(UniquenessRun { region, scan, ode, rk4, verdict, outside_omega_delta }))
}

/// Strip geometry and solver settings for [`perturbation_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecayOptions {
    pub height: f64,
    pub h: f64,
    pub config: SolverConfig,
}

impl Default for DecayOptions {
    fn default() -> DecayOptions {
        DecayOptions { height: 2.0, h: 0.125, config: SolverConfig::lorentz() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTable {
    pub metric: Metric,
    pub rows: Vec<(f64, f64)>,
}

impl DecayTable {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].1 < w[0].1)
    }

    /// CSV with header `L,diff`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("L,diff\n");
        for &(l, d) in &self.rows {
            let _ = writeln!(out, "{},{}", fmt_f64(l), fmt_f64(d));
        }
        out
    }
}

/// End perturbation `s (H / 2 pi) sin(pi y / H)`, of slope at most `s / 2`.
pub fn end_profile(s: f64, height: f64, y: f64) -> f64 {
    s * height / (2.0 * PI) * (PI * y / height).sin()
}

/// Solves on `[0, L] x [0, H]` with artificial ends twice: `phi` everywhere,
/// then `phi` plus [`end_profile`] on the ends. Reports `max |v - v'|` on the
/// vertex column closest to `x = L / 2`.
pub fn perturbation_decay<F>(lengths: &[f64], phi: F, s: f64, opts: &DecayOptions) -> Result<DecayTable, UniquenessError>
where
    F: Fn(f64, f64) -> f64,
{
    if lengths.is_empty() || lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(UniquenessError::InvalidParameter("lengths must be strictly increasing".into()));
    }
    if !(s >= 0.0 && s.is_finite()) {
        return Err(UniquenessError::InvalidParameter(format!("s = {s} must be nonnegative")));
    }
    let mut rows = Vec::with_capacity(lengths.len());
    for &length in lengths {
        let mesh = build_strip(length, opts.height, opts.h, true)?;
        let base = ScalarField::from_fn(&mesh, &phi).map_err(FormError::from)?;
        let bumped: Vec<f64> = mesh
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let extra = if mesh.class(i) == crate::mesh::VertexClass::Artificial {
                    end_profile(s, opts.height, p[1])
                } else {
                    0.0
                };
                base.values()[i] + extra
            })
            .collect();
        let bumped = ScalarField::new(&mesh, bumped).map_err(FormError::from)?;
        let v = solve(&mesh, &base, &opts.config)?.field;
        let vp = solve(&mesh, &bumped, &opts.config)?.field;
        let centre = length / 2.0;
        let gap = mesh.vertices().iter().map(|p| (p[0] - centre).abs()).fold(f64::INFINITY, f64::min);
        let diff = mesh
            .vertices()
            .iter()
            .enumerate()
            .filter(|(_, p)| (p[0] - centre).abs() <= gap + 1e-9)
            .map(|(i, _)| (v.values()[i] - vp.values()[i]).abs())
            .fold(0.0, f64::max);
        log::info!("decay L={length}: {diff:e}");
        rows.push((length, diff));
    }
    Ok(DecayTable { metric: opts.config.metric, rows })
}
