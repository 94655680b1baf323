//! Conjugate correspondence between minimal and maximal graphs.
//!
//! For a minimal graph `u` the form `(u_y dx - u_x dy) / W` is closed and its
//! potential `Psi_u` solves the maximal surface equation; conversely the
//! potential of `alpha_v` solves the minimal surface equation. Potentials
//! vanish at vertex 0.

use thiserror::Error;

use crate::field::{triangle_gradient, ScalarField};
use crate::forms::{alpha_of, integrate_potential, FormError, OneForm, DEFAULT_CLOSEDNESS_TOL};
use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Coefficients `(u_y / W, -u_x / W)` with `W = sqrt(1 + |grad u|^2)`.
pub fn conjugate_form(mesh: &Mesh, u: &ScalarField) -> Result<OneForm, DualityError> {
    u.check_mesh(mesh).map_err(FormError::from)?;
    let coeffs = (0..mesh.n_triangles())
        .map(|t| {
            let g = triangle_gradient(mesh, u.values(), t);
            let ww = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
            [g[1] / ww, -g[0] / ww]
        })
        .collect();
    Ok(OneForm::new(mesh, coeffs)?)
}

pub fn psi_of_minimal(mesh: &Mesh, u: &ScalarField) -> Result<ScalarField, DualityError> {
    psi_of_minimal_with(mesh, u, DEFAULT_CLOSEDNESS_TOL)
}

pub fn psi_of_minimal_with(mesh: &Mesh, u: &ScalarField, closedness_tol: f64) -> Result<ScalarField, DualityError> {
    Ok(integrate_potential(mesh, &conjugate_form(mesh, u)?, closedness_tol)?)
}

pub fn u_of_maximal(mesh: &Mesh, v: &ScalarField) -> Result<ScalarField, DualityError> {
    u_of_maximal_with(mesh, v, DEFAULT_CLOSEDNESS_TOL)
}

pub fn u_of_maximal_with(mesh: &Mesh, v: &ScalarField, closedness_tol: f64) -> Result<ScalarField, DualityError> {
    Ok(integrate_potential(mesh, &alpha_of(mesh, v)?, closedness_tol)?)
}

/// `min_c max |a - b - c|`, attained at the midrange of `a - b`.
pub fn max_norm_modulo_constants(a: &ScalarField, b: &ScalarField) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if d.is_empty() {
        0.0
    } else {
        0.5 * (hi - lo)
    }
}

/// Distance modulo constants between `u` and `u_of_maximal(psi_of_minimal(u))`.
///
/// `Psi_u` is closed only up to the interpolation error of the vertex
/// averaging, so the second leg skips the closedness check.
pub fn round_trip_error(mesh: &Mesh, u: &ScalarField) -> Result<f64, DualityError> {
    let psi = psi_of_minimal(mesh, u)?;
    let back = u_of_maximal_with(mesh, &psi, f64::INFINITY)?;
    Ok(max_norm_modulo_constants(&back, u))
}

/// Distance modulo constants between `v` and `psi_of_minimal(u_of_maximal(v))`.
pub fn round_trip_error_maximal(mesh: &Mesh, v: &ScalarField) -> Result<f64, DualityError> {
    let u = u_of_maximal(mesh, v)?;
    let back = psi_of_minimal_with(mesh, &u, f64::INFINITY)?;
    Ok(max_norm_modulo_constants(&back, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::p1_gradient;
    use crate::forms::max_interior_circulation;
    use crate::mesh::{build_annulus, build_rectangle};
    use crate::solver::{residual, solve, SolverConfig};

    fn affine(m: &Mesh, a: f64, b: f64, c: f64) -> ScalarField {
        ScalarField::from_fn(m, |x, y| a * x + b * y + c).unwrap()
    }

    #[test]
    fn conjugate_of_affine() {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let psi = psi_of_minimal(&m, &affine(&m, 1.0, 0.0, 0.3)).unwrap();
        let want = ScalarField::from_fn(&m, |_, y| -y / 2f64.sqrt()).unwrap();
        assert!(max_norm_modulo_constants(&psi, &want) < 1e-14);
        for g in p1_gradient(&m, &psi).unwrap().values() {
            assert!((g[0].hypot(g[1]) - 0.5f64.sqrt()).abs() < 1e-14);
        }
        let (a, b) = (0.7f64, -1.9);
        let psi = psi_of_minimal(&m, &affine(&m, a, b, 0.0)).unwrap();
        let s = (1.0 + a * a + b * b).sqrt();
        let want = ScalarField::from_fn(&m, |x, y| (b * x - a * y) / s).unwrap();
        assert!(max_norm_modulo_constants(&psi, &want) < 1e-13);
        assert_eq!(psi.values()[0], 0.0);
    }

    #[test]
    fn constants_map_to_constants() {
        let m = build_rectangle(1.0, 1.0, 0.25).unwrap();
        assert_eq!(psi_of_minimal(&m, &affine(&m, 0.0, 0.0, 5.0)).unwrap().max_abs(), 0.0);
        assert_eq!(u_of_maximal(&m, &ScalarField::zeros(&m)).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn inverse_on_affine_data() {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let u = u_of_maximal(&m, &affine(&m, 0.6, 0.0, 0.0)).unwrap();
        assert!(max_norm_modulo_constants(&u, &affine(&m, 0.0, 0.75, 0.0)) < 1e-14);
        let (a, b) = (1.3f64, 0.4);
        let s = (1.0 + a * a + b * b).sqrt();
        let v = ScalarField::from_fn(&m, |x, y| (b * x - a * y) / s).unwrap();
        let u = u_of_maximal(&m, &v).unwrap();
        assert!(max_norm_modulo_constants(&u, &affine(&m, a, b, 0.0)) < 1e-13);
        assert!(round_trip_error(&m, &affine(&m, a, b, 2.0)).unwrap() < 1e-12);
        assert!(round_trip_error_maximal(&m, &v).unwrap() < 1e-12);
    }

    #[test]
    fn gradient_duality_per_triangle() {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let bc = ScalarField::from_fn(&m, |x, y| x * x - y * y).unwrap();
        let u = solve(&m, &bc, &SolverConfig::euclid()).unwrap().field;
        let beta = conjugate_form(&m, &u).unwrap();
        let gu = p1_gradient(&m, &u).unwrap();
        for t in 0..m.n_triangles() {
            let g = gu.get(t);
            let big_w = (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
            let b = beta.get(t);
            let s2 = b[0] * b[0] + b[1] * b[1];
            assert!((s2 - (g[0] * g[0] + g[1] * g[1]) / (big_w * big_w)).abs() < 1e-12);
            assert!(((1.0 - s2).sqrt() * big_w - 1.0).abs() < 1e-12);
        }
        // closedness of the conjugate form is the minimal surface residual
        let f = residual(&m, &u, &SolverConfig::euclid()).unwrap();
        let fmax = f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let (_, c) = max_interior_circulation(&m, &beta).unwrap().unwrap();
        assert!((c.abs() - fmax).abs() < 1e-15);
    }

    #[test]
    fn annulus_is_rejected() {
        let m = build_annulus(1.0, 2.0, 0.25).unwrap();
        let err = psi_of_minimal(&m, &ScalarField::zeros(&m)).unwrap_err();
        assert_eq!(err, DualityError::Form(FormError::NotSimplyConnected(0)));
    }

    #[test]
    fn non_solution_is_rejected() {
        let m = build_rectangle(1.0, 1.0, 0.125).unwrap();
        let u = ScalarField::from_fn(&m, |x, y| x * x + y * y).unwrap();
        assert!(matches!(psi_of_minimal(&m, &u), Err(DualityError::Form(FormError::NotClosed { .. }))));
    }
}
