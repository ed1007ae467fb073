//! Fixed-dimension SO(3) utilities: hat/vee maps and validated rotation
//! matrices. Everything here is a pure value type, safe to share across
//! threads.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// 3-vector of `f64`, units depend on context (m, m/s, rad/s).
pub type Vec3 = Vector3<f64>;
/// Raw 3x3 matrix of `f64`.
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance for rotation matrices (Frobenius).
pub const ROTATION_TOL: f64 = 1e-9;
/// Antisymmetry tolerance accepted by [`vee`].
pub const SKEW_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum Se3Error {
    /// Input to [`vee`] violates antisymmetry beyond [`SKEW_TOL`].
    #[error("matrix is not skew-symmetric (asymmetry {asymmetry:.3e})")]
    NonSkewInput { asymmetry: f64 },
    /// Matrix fails the rotation-matrix invariants.
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
}

/// Skew-symmetric 3x3 matrix. Constructed only through [`hat`] or
/// [`SkewMatrix3::antisymmetrize`], so `S + S^T = 0` holds exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMatrix3(Mat3);

impl SkewMatrix3 {
    /// The antisymmetric part `(m - m^T) / 2`.
    pub fn antisymmetrize(m: &Mat3) -> Self {
        // a - b and -(b - a) are bitwise identical in IEEE 754, so the
        // result is antisymmetric exactly; scaling preserves that.
        SkewMatrix3(0.5 * (m - m.transpose()))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn into_matrix(self) -> Mat3 {
        self.0
    }

    /// Exact inverse of [`hat`]; no tolerance needed because the invariant
    /// is enforced at construction.
    pub fn axis(&self) -> Vec3 {
        Vec3::new(self.0[(2, 1)], self.0[(0, 2)], self.0[(1, 0)])
    }
}

impl std::ops::Mul<Vec3> for SkewMatrix3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Hat map: `hat(v) w = v x w`.
pub fn hat(v: &Vec3) -> SkewMatrix3 {
    SkewMatrix3(Mat3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    ))
}

/// Vee map on a general matrix; accepts asymmetry up to [`SKEW_TOL`]
/// relative to the matrix scale.
pub fn vee(m: &Mat3) -> Result<Vec3, Se3Error> {
    let sym = m + m.transpose();
    let scale = 1.0 + m.norm();
    let asymmetry = sym.norm() / scale;
    if asymmetry > SKEW_TOL {
        return Err(Se3Error::NonSkewInput { asymmetry });
    }
    // Average the two off-diagonal copies so tiny numeric asymmetry cancels.
    Ok(Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ))
}

/// Vee map with a caller-supplied asymmetry tolerance (used where products
/// of rotations carry more roundoff than [`SKEW_TOL`] allows).
pub fn vee_with_tol(m: &Mat3, tol: f64) -> Result<Vec3, Se3Error> {
    let sym = m + m.transpose();
    let scale = 1.0 + m.norm();
    let asymmetry = sym.norm() / scale;
    if asymmetry > tol {
        return Err(Se3Error::NonSkewInput { asymmetry });
    }
    Ok(Vec3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    ))
}

/// Both sides of the trace identity `tr[hat(xi) T] = -xi . vee(T - T^T)`.
/// Test support; returns `(lhs, rhs)`.
pub fn trace_identity_check(xi: &Vec3, t: &Mat3) -> (f64, f64) {
    let lhs = (hat(xi).into_matrix() * t).trace();
    let anti = t - t.transpose();
    let v = Vec3::new(
        0.5 * (anti[(2, 1)] - anti[(1, 2)]),
        0.5 * (anti[(0, 2)] - anti[(2, 0)]),
        0.5 * (anti[(1, 0)] - anti[(0, 1)]),
    );
    let rhs = -xi.dot(&v);
    (lhs, rhs)
}

/// 3x3 special-orthogonal matrix. Columns are the frame's axes resolved in
/// the parent frame, so `R_A^B` maps A-coordinates to B-coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Mat3::identity())
    }

    /// Validates the orthonormality and determinant invariants.
    pub fn from_matrix(m: Mat3) -> Result<Self, Se3Error> {
        let defect = (m.transpose() * m - Mat3::identity()).norm();
        if defect > ROTATION_TOL {
            return Err(Se3Error::NotARotation(format!(
                "R^T R - I has Frobenius norm {defect:.3e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(Se3Error::NotARotation(format!("det R = {det}")));
        }
        Ok(RotationMatrix(m))
    }

    /// Gram-Schmidt with the first column kept fixed (only normalized).
    /// Third column is rebuilt as `c1 x c2`, so det = +1 by construction.
    pub fn orthonormalized(m: &Mat3) -> Result<Self, Se3Error> {
        let c1 = m.column(0).into_owned();
        let c2 = m.column(1).into_owned();
        let n1 = c1.norm();
        if n1 < 1e-12 {
            return Err(Se3Error::NotARotation("first column near zero".into()));
        }
        let e1 = c1 / n1;
        let c2p = c2 - e1 * e1.dot(&c2);
        let n2 = c2p.norm();
        if n2 < 1e-12 {
            return Err(Se3Error::NotARotation(
                "first two columns near collinear".into(),
            ));
        }
        let e2 = c2p / n2;
        let e3 = e1.cross(&e2);
        Ok(RotationMatrix(Mat3::from_columns(&[e1, e2, e3])))
    }

    pub fn from_columns(c1: Vec3, c2: Vec3, c3: Vec3) -> Result<Self, Se3Error> {
        Self::from_matrix(Mat3::from_columns(&[c1, c2, c3]))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn column(&self, i: usize) -> Vec3 {
        self.0.column(i).into_owned()
    }

    pub fn transpose(&self) -> RotationMatrix {
        RotationMatrix(self.0.transpose())
    }

    /// Rotate a vector.
    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Composition `self * rhs`.
    pub fn compose(&self, rhs: &RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }
}

impl std::ops::Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}
