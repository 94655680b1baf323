//! Pointwise Lorentzian algebra for spacelike gradients.
//!
//! For a gradient `g` with `|g| < 1` we write `w = sqrt(1 - |g|^2)`,
//! `x = g / w` and `n = (-g, 1) / w`, the future unit normal of the graph in
//! Minkowski space `R^{2,1}` with inner product `a1 b1 + a2 b2 - a3 b3`.
//! The monotonicity inequality
//!
//! ```text
//! (g - g') . (g/w - g'/w')  >=  C(eps) |g/w - g'/w'|^2      for |g|, |g'| <= 1 - eps
//! ```
//!
//! holds with `C(eps) = (eps (2 - eps))^{3/2}`, the product of the sharp
//! lower bounds for `(w + w')/2` and for the Minkowski-to-Euclidean ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::io::Record;

/// Gradients with `|g| >= 1 - LIGHTLIKE_GUARD` are rejected.
pub const LIGHTLIKE_GUARD: f64 = 1e-14;

/// Pairs whose right-hand side falls below this are skipped in [`verify_lemma`].
pub const DEGENERATE_RHS: f64 = 1e-20;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("gradient norm {norm} is not spacelike")]
pub struct SpacelikeError {
    pub norm: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LorentzError {
    #[error(transparent)]
    Spacelike(#[from] SpacelikeError),
    #[error("eps must lie in (0, 1], got {0}")]
    EpsOutOfRange(f64),
    #[error("at least one sample is required")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gradient2 {
    pub x: f64,
    pub y: f64,
}

impl Gradient2 {
    pub const ZERO: Gradient2 = Gradient2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Gradient2 {
        Gradient2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_spacelike(self) -> bool {
        self.norm() < 1.0 - LIGHTLIKE_GUARD
    }
}

impl From<[f64; 2]> for Gradient2 {
    fn from(v: [f64; 2]) -> Self {
        Gradient2 { x: v[0], y: v[1] }
    }
}

fn check(g: Gradient2) -> Result<(), SpacelikeError> {
    if g.is_spacelike() {
        Ok(())
    } else {
        Err(SpacelikeError { norm: g.norm() })
    }
}

/// `w = sqrt(1 - |g|^2)`.
pub fn w_of(g: Gradient2) -> Result<f64, SpacelikeError> {
    check(g)?;
    Ok((1.0 - (g.x * g.x + g.y * g.y)).sqrt())
}

/// Coefficients `(p, q)` of `p dx + q dy = (g_x dy - g_y dx) / w`.
pub fn alpha_coeffs(g: Gradient2) -> Result<(f64, f64), SpacelikeError> {
    let w = w_of(g)?;
    Ok((-g.y / w, g.x / w))
}

/// Derived quantities of one spacelike gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzPoint {
    pub g: Gradient2,
    pub w: f64,
    pub n: [f64; 3],
    pub x: [f64; 2],
}

impl LorentzPoint {
    pub fn new(g: Gradient2) -> Result<LorentzPoint, SpacelikeError> {
        let w = w_of(g)?;
        Ok(LorentzPoint { g, w, n: [-g.x / w, -g.y / w, 1.0 / w], x: [g.x / w, g.y / w] })
    }

    /// `<n, n>` in the Minkowski metric; `-1` up to rounding of the stored normal.
    pub fn minkowski_norm2(&self) -> f64 {
        minkowski_inner(self.n, self.n)
    }

    /// `1 / w` through the hyperbolic relation `sqrt(1 + |x|^2)`.
    pub fn inv_w(&self) -> f64 {
        (1.0 + self.x[0] * self.x[0] + self.x[1] * self.x[1]).sqrt()
    }
}

// error-free product and sum (Ogita, Rump, Oishi)
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let z = s - a;
    (s, (a - (s - z)) + (b - z))
}

/// `a1 b1 + a2 b2 - a3 b3`, evaluated in compensated arithmetic.
pub fn minkowski_inner(a: [f64; 3], b: [f64; 3]) -> f64 {
    let terms = [two_prod(a[0], b[0]), two_prod(a[1], b[1]), two_prod(-a[2], b[2])];
    let (mut s, mut c) = terms[0];
    for &(p, e) in &terms[1..] {
        let (t, q) = two_sum(s, p);
        s = t;
        c += q + e;
    }
    s + c
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn norm2(a: [f64; 2]) -> f64 {
    dot(a, a)
}

/// `(g - g') . (g/w - g'/w')`.
pub fn lemma_lhs(g: Gradient2, gp: Gradient2) -> Result<f64, SpacelikeError> {
    let (a, b) = (LorentzPoint::new(g)?, LorentzPoint::new(gp)?);
    Ok(dot([g.x - gp.x, g.y - gp.y], [a.x[0] - b.x[0], a.x[1] - b.x[1]]))
}

/// `|g/w - g'/w'|^2`.
pub fn lemma_rhs_norm2(g: Gradient2, gp: Gradient2) -> Result<f64, SpacelikeError> {
    let (a, b) = (LorentzPoint::new(g)?, LorentzPoint::new(gp)?);
    Ok(norm2([a.x[0] - b.x[0], a.x[1] - b.x[1]]))
}

/// `|n' - n|^2` in the Minkowski metric, equal to
/// `|x - x'|^2 - (1/w - 1/w')^2 = 2 (-1 - <n, n'>)`.
///
/// Evaluated through `2 (|x - x'|^2 + (x ^ x')^2) / (1/(w w') + 1 + x . x')`
/// with the denominator split into nonnegative parts, so that no
/// cancellation occurs near the light cone or for nearly equal gradients.
pub fn minkowski_gap(g: Gradient2, gp: Gradient2) -> Result<f64, SpacelikeError> {
    let (a, b) = (LorentzPoint::new(g)?, LorentzPoint::new(gp)?);
    Ok(gap_of(&a, &b))
}

fn gap_of(a: &LorentzPoint, b: &LorentzPoint) -> f64 {
    let (x, y) = (a.x, b.x);
    let diff = norm2([x[0] - y[0], x[1] - y[1]]);
    let cross = x[0] * y[1] - x[1] * y[0];
    let numerator = 2.0 * (diff + cross * cross);
    if numerator == 0.0 {
        return 0.0;
    }
    let (nx, ny) = (norm2(x).sqrt(), norm2(y).sqrt());
    let (ia, ib) = (a.inv_w(), b.inv_w());
    let hyper = (1.0 + norm2(x) + norm2(y)) / (ia * ib + nx * ny);
    let aligned = if nx > 0.0 && ny > 0.0 {
        let s = [x[0] / nx + y[0] / ny, x[1] / nx + y[1] / ny];
        nx * ny * norm2(s) / 2.0
    } else {
        0.0
    };
    numerator / (hyper + 1.0 + aligned)
}

/// `-1 - <n, n'>`, half the Minkowski gap.
pub fn normal_defect(g: Gradient2, gp: Gradient2) -> Result<f64, SpacelikeError> {
    Ok(minkowski_gap(g, gp)? / 2.0)
}

/// Explicit constants of the monotonicity inequality for a margin `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConstants {
    pub eps: f64,
    /// lower bound of `(w + w')/2`
    pub c1: f64,
    /// lower bound of the Minkowski-to-Euclidean ratio
    pub c2: f64,
    pub c: f64,
    /// bound on `|g/w|`
    pub r: f64,
}

pub fn lemma_constants(eps: f64) -> Result<LemmaConstants, LorentzError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(LorentzError::EpsOutOfRange(eps));
    }
    let s = eps * (2.0 - eps);
    Ok(LemmaConstants { eps, c1: s.sqrt(), c2: s, c: s * s.sqrt(), r: (1.0 - eps) / s.sqrt() })
}

/// The factor `1 - ((|x| + |x'|) / (sqrt(1+|x|^2) + sqrt(1+|x'|^2)))^2`
/// bounding the Minkowski-to-Euclidean ratio from below.
pub fn ratio_factor(nx: f64, ny: f64) -> f64 {
    let s = (nx + ny) / ((1.0 + nx * nx).sqrt() + (1.0 + ny * ny).sqrt());
    1.0 - s * s
}

/// Outcome of a sampled check of the monotonicity inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaReport {
    pub eps: f64,
    pub c: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// pairs with a non-degenerate right-hand side
    pub evaluated: usize,
    /// `None` when every pair was degenerate
    pub min_ratio: Option<f64>,
    pub violations: usize,
}

impl LemmaReport {
    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.push_f64("eps", self.eps);
        r.push_f64("C", self.c);
        r.push("n_samples", self.n_samples);
        r.push("seed", self.seed);
        r.push("evaluated", self.evaluated);
        match self.min_ratio {
            Some(m) => r.push_f64("min_ratio", m),
            None => r.push("min_ratio", "none"),
        }
        r.push("violations", self.violations);
        r
    }
}

fn sample_disk(rng: &mut ChaCha8Rng, radius: f64) -> Gradient2 {
    if radius == 0.0 {
        return Gradient2::ZERO;
    }
    loop {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let y: f64 = rng.gen_range(-1.0..1.0);
        if x * x + y * y < 1.0 {
            return Gradient2::new(radius * x, radius * y);
        }
    }
}

/// Samples gradient pairs uniformly in the disk of radius `1 - eps` and
/// records the smallest ratio `lhs / rhs` and the count of ratios below `C(eps)`.
pub fn verify_lemma(eps: f64, n_samples: usize, seed: u64) -> Result<LemmaReport, LorentzError> {
    let consts = lemma_constants(eps)?;
    if eps <= LIGHTLIKE_GUARD {
        return Err(LorentzError::EpsOutOfRange(eps));
    }
    if n_samples == 0 {
        return Err(LorentzError::NoSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = 1.0 - eps;
    let mut min_ratio: Option<f64> = None;
    let (mut evaluated, mut violations) = (0, 0);
    for _ in 0..n_samples {
        let g = sample_disk(&mut rng, radius);
        let gp = sample_disk(&mut rng, radius);
        let rhs = lemma_rhs_norm2(g, gp)?;
        if rhs < DEGENERATE_RHS {
            continue;
        }
        let ratio = lemma_lhs(g, gp)? / rhs;
        evaluated += 1;
        min_ratio = Some(min_ratio.map_or(ratio, |m| m.min(ratio)));
        if ratio < consts.c {
            violations += 1;
        }
    }
    Ok(LemmaReport { eps, c: consts.c, n_samples, seed, evaluated, min_ratio, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(x: f64, y: f64) -> Gradient2 {
        Gradient2::new(x, y)
    }

    #[test]
    fn w_examples() {
        assert_eq!(w_of(g(0.0, 0.0)).unwrap(), 1.0);
        assert!((w_of(g(0.6, 0.0)).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(w_of(g(1.0, 0.0)).unwrap_err(), SpacelikeError { norm: 1.0 });
        assert!(w_of(g(1.0 - 1e-15, 0.0)).is_err());
        assert!(w_of(g(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_coeffs(g(0.0, 0.0)).unwrap(), (0.0, 0.0));
        let (p, q) = alpha_coeffs(g(0.6, 0.0)).unwrap();
        assert!(p == 0.0 && (q - 0.75).abs() < 1e-15);
        let (p, q) = alpha_coeffs(g(0.0, 0.6)).unwrap();
        assert!((p + 0.75).abs() < 1e-15 && q == 0.0);
        let gg = g(0.3, -0.5);
        let (p, q) = alpha_coeffs(gg).unwrap();
        let n2 = gg.norm().powi(2);
        assert!((p * p + q * q - n2 / (1.0 - n2)).abs() < 1e-15);
    }

    #[test]
    fn lemma_quantities_examples() {
        let z = g(0.0, 0.0);
        let a = g(0.6, 0.0);
        let b = g(-0.6, 0.0);
        assert_eq!(lemma_lhs(a, a).unwrap(), 0.0);
        assert_eq!(lemma_rhs_norm2(a, a).unwrap(), 0.0);
        assert_eq!(minkowski_gap(a, a).unwrap(), 0.0);
        assert!((lemma_lhs(a, z).unwrap() - 0.45).abs() < 1e-15);
        assert!((lemma_lhs(a, b).unwrap() - 1.8).abs() < 1e-15);
        assert!((lemma_rhs_norm2(a, z).unwrap() - 0.5625).abs() < 1e-15);
        assert!((lemma_rhs_norm2(a, b).unwrap() - 2.25).abs() < 1e-15);
        assert!((minkowski_gap(a, z).unwrap() - 0.5).abs() < 1e-15);
        assert!((2.0 * 0.45 / 1.8 - minkowski_gap(a, z).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn gap_matches_defining_expression() {
        let pairs = [(g(0.3, 0.1), g(-0.2, 0.4)), (g(0.9, 0.0), g(0.0, 0.9)), (g(0.5, 0.5), g(0.1, -0.7))];
        for (a, b) in pairs {
            let (wa, wb) = (w_of(a).unwrap(), w_of(b).unwrap());
            let naive = lemma_rhs_norm2(a, b).unwrap() - (1.0 / wa - 1.0 / wb).powi(2);
            let stable = minkowski_gap(a, b).unwrap();
            assert!((naive - stable).abs() <= 1e-13 * stable.max(1.0), "{naive} vs {stable}");
            let (pa, pb) = (LorentzPoint::new(a).unwrap(), LorentzPoint::new(b).unwrap());
            let inner = -1.0 - minkowski_inner(pa.n, pb.n);
            assert!((inner - normal_defect(a, b).unwrap()).abs() <= 1e-13 * inner.max(1.0));
        }
    }

    #[test]
    fn constants_examples() {
        let c = lemma_constants(1.0).unwrap();
        assert_eq!((c.c1, c.c2, c.c, c.r), (1.0, 1.0, 1.0, 0.0));
        assert!((lemma_constants(0.4).unwrap().c - 0.512).abs() < 1e-15);
        assert!((lemma_constants(0.1).unwrap().c - 0.19f64.powf(1.5)).abs() < 1e-15);
        assert!((lemma_constants(0.1).unwrap().c - 0.08282).abs() < 1e-5);
        assert!(lemma_constants(0.0).is_err());
        assert!(lemma_constants(1.5).is_err());
        assert!(lemma_constants(f64::NAN).is_err());
    }

    #[test]
    fn constants_match_brute_force_minimisation() {
        for eps in [0.9, 0.5, 0.4, 0.1, 0.02] {
            let k = lemma_constants(eps).unwrap();
            let n = 400;
            // C1: minimum of w over |g| <= 1 - eps
            let c1 = (0..=n)
                .map(|i| (1.0 - eps) * i as f64 / n as f64)
                .map(|s| (1.0 - s * s).sqrt())
                .fold(f64::INFINITY, f64::min);
            // C2: minimum of the ratio factor over |x|, |x'| <= R
            let mut c2 = f64::INFINITY;
            for i in 0..=n {
                for j in 0..=n {
                    c2 = c2.min(ratio_factor(k.r * i as f64 / n as f64, k.r * j as f64 / n as f64));
                }
            }
            assert!((c1 - k.c1).abs() < 1e-12, "eps {eps}: {c1} vs {}", k.c1);
            assert!((c2 - k.c2).abs() < 1e-12, "eps {eps}: {c2} vs {}", k.c2);
        }
    }

    #[test]
    fn constants_monotone_in_eps() {
        let mut prev = lemma_constants(1e-6).unwrap();
        for i in 1..=1000 {
            let k = lemma_constants(i as f64 / 1000.0).unwrap();
            assert!(k.c1 >= prev.c1 && k.c2 >= prev.c2 && k.c >= prev.c);
            assert!(k.c1 > 0.0 && k.c2 > 0.0 && k.c > 0.0);
            prev = k;
        }
    }

    #[test]
    fn verify_lemma_cases() {
        let r = verify_lemma(0.5, 20_000, 7).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.min_ratio.unwrap() >= 0.75f64.powf(1.5));
        let r = verify_lemma(1.0, 100, 1).unwrap();
        assert_eq!((r.evaluated, r.violations, r.min_ratio), (0, 0, None));
        assert!(verify_lemma(1.5, 10, 1).is_err());
        assert!(verify_lemma(0.5, 0, 1).is_err());
        assert_eq!(verify_lemma(0.3, 1000, 42).unwrap(), verify_lemma(0.3, 1000, 42).unwrap());
    }

    #[test]
    fn minkowski_norm_of_normal() {
        for gg in [g(0.0, 0.0), g(0.6, 0.0), g(0.3, -0.9), g(0.7, 0.7)] {
            let p = LorentzPoint::new(gg).unwrap();
            assert!((p.minkowski_norm2() + 1.0).abs() < 1e-13);
            assert!((p.inv_w() - 1.0 / p.w).abs() < 1e-12 / p.w);
        }
    }
}
