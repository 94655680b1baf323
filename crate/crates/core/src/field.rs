//! Per-vertex scalar fields and their per-triangle P1 gradients.

use thiserror::Error;

use crate::mesh::Mesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("field has {found} values, mesh expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("field belongs to a different mesh")]
    MeshMismatch,
}

/// Finite per-vertex values tied to one mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    mesh_id: u64,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<ScalarField, FieldError> {
        if values.len() != mesh.n_vertices() {
            return Err(FieldError::LengthMismatch { expected: mesh.n_vertices(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(ScalarField { mesh_id: mesh.fingerprint(), values })
    }

    pub fn zeros(mesh: &Mesh) -> ScalarField {
        ScalarField { mesh_id: mesh.fingerprint(), values: vec![0.0; mesh.n_vertices()] }
    }

    /// Samples `f(x, y)` at every vertex.
    pub fn from_fn<F>(mesh: &Mesh, f: F) -> Result<ScalarField, FieldError>
    where
        F: Fn(f64, f64) -> f64,
    {
        ScalarField::new(mesh, mesh.vertices().iter().map(|p| f(p[0], p[1])).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<(), FieldError> {
        if self.mesh_id == mesh.fingerprint() && self.values.len() == mesh.n_vertices() {
            Ok(())
        } else {
            Err(FieldError::MeshMismatch)
        }
    }

    /// `self - other + shift` pointwise, on the same mesh.
    pub fn difference(&self, other: &ScalarField, shift: f64) -> Result<ScalarField, FieldError> {
        if self.mesh_id != other.mesh_id || self.values.len() != other.values.len() {
            return Err(FieldError::MeshMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b + shift).collect();
        Ok(ScalarField { mesh_id: self.mesh_id, values })
    }

    /// P1 interpolant evaluated at a point of triangle `t`.
    pub fn interpolate(&self, mesh: &Mesh, t: usize, p: [f64; 2]) -> f64 {
        let l = mesh.barycentric(t, p);
        let tri = mesh.triangles()[t];
        l[0] * self.values[tri[0]] + l[1] * self.values[tri[1]] + l[2] * self.values[tri[2]]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Per-triangle constant 2-vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    values: Vec<[f64; 2]>,
}

impl GradientField {
    pub fn values(&self) -> &[[f64; 2]] {
        &self.values
    }

    pub fn get(&self, t: usize) -> [f64; 2] {
        self.values[t]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest Euclidean norm over the given triangles, or all of them.
    pub fn max_norm(&self, subset: Option<&[usize]>) -> f64 {
        let norm = |g: &[f64; 2]| g[0].hypot(g[1]);
        match subset {
            Some(s) => s.iter().map(|&t| norm(&self.values[t])).fold(0.0, f64::max),
            None => self.values.iter().map(norm).fold(0.0, f64::max),
        }
    }
}

#[inline]
pub(crate) fn triangle_gradient(mesh: &Mesh, values: &[f64], t: usize) -> [f64; 2] {
    let tri = mesh.triangles()[t];
    let b = mesh.basis(t);
    let mut g = [0.0; 2];
    for k in 0..3 {
        g[0] += values[tri[k]] * b[k][0];
        g[1] += values[tri[k]] * b[k][1];
    }
    g
}

/// Gradient of the piecewise-linear interpolant on every triangle.
pub fn p1_gradient(mesh: &Mesh, f: &ScalarField) -> Result<GradientField, FieldError> {
    f.check_mesh(mesh)?;
    let values = (0..mesh.n_triangles()).map(|t| triangle_gradient(mesh, f.values(), t)).collect();
    Ok(GradientField { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_annulus, build_rectangle};

    #[test]
    fn affine_reproduction() {
        let m = build_annulus(1.0, 2.0, 0.2).unwrap();
        let f = ScalarField::from_fn(&m, |x, _| x).unwrap();
        let g = p1_gradient(&m, &f).unwrap();
        for t in 0..m.n_triangles() {
            assert!((g.get(t)[0] - 1.0).abs() < 1e-12 && g.get(t)[1].abs() < 1e-12);
        }
        let c = ScalarField::from_fn(&m, |_, _| 3.5).unwrap();
        assert!(p1_gradient(&m, &c).unwrap().max_norm(None) < 1e-12);
    }

    #[test]
    fn quadratic_gradient_within_h() {
        let m = build_rectangle(1.0, 1.0, 0.5).unwrap();
        let f = ScalarField::from_fn(&m, |x, _| x * x).unwrap();
        let g = p1_gradient(&m, &f).unwrap();
        for t in 0..m.n_triangles() {
            // exact gradient (2x, 0), compared at the centroid
            let c = m.centroid(t);
            assert!((g.get(t)[0] - 2.0 * c[0]).abs() <= m.h() + 1e-12);
            assert!(g.get(t)[1].abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_fields() {
        let m = build_rectangle(1.0, 1.0, 0.5).unwrap();
        assert_eq!(
            ScalarField::new(&m, vec![0.0; 3]).unwrap_err(),
            FieldError::LengthMismatch { expected: 9, found: 3 }
        );
        let mut v = vec![0.0; 9];
        v[4] = f64::NAN;
        assert_eq!(ScalarField::new(&m, v).unwrap_err(), FieldError::NonFinite(4));
        let other = build_rectangle(2.0, 1.0, 0.5).unwrap();
        let f = ScalarField::zeros(&other);
        assert_eq!(p1_gradient(&m, &f).unwrap_err(), FieldError::MeshMismatch);
    }
}
