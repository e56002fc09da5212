//! Rigid transforms between coordinate frames.

use nalgebra::{Matrix3, Point3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::scalar::{deg_to_rad, lit, rad_to_deg, to_f64, Real};

/// Orthonormality tolerance for `T`: `1e-9` for `f64`, scaled up for `f32`.
pub fn ortho_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * lit(100.0);
    let floor = lit::<T>(1e-9);
    if eps > floor {
        eps
    } else {
        floor
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TransformError {
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation is a reflection (det = {0})")]
    Reflection(f64),
    #[error("non-finite transform component")]
    NonFinite,
}

/// Rotation followed by translation: `x ↦ R·x + t`, lengths in millimetres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, re-orthonormalizing the rotation when it drifted
    /// by more than the tolerance but is still close to a proper rotation.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self, TransformError> {
        if rotation.iter().chain(translation.iter()).any(|x| !crate::scalar::is_finite(*x)) {
            return Err(TransformError::NonFinite);
        }
        let err = orthonormality_error(&rotation);
        if err > lit(1e-3) {
            return Err(TransformError::NotOrthonormal(to_f64(err)));
        }
        let det = rotation.determinant();
        if det < T::zero() {
            return Err(TransformError::Reflection(to_f64(det)));
        }
        let rotation = if err > ortho_tolerance::<T>() {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a transform from a matrix already known to be a rotation up to
    /// round-off; repairs drift via polar decomposition.
    pub(crate) fn from_numeric(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        let rotation = if orthonormality_error(&rotation) > ortho_tolerance::<T>()
            || rotation.determinant() < T::zero()
        {
            nearest_rotation(&rotation)
        } else {
            rotation
        };
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle_deg` about `axis` through the origin.
    pub fn from_axis_angle_deg(axis: &Vector3<T>, angle_deg: T) -> Self {
        let axis = Unit::new_normalize(*axis);
        let q = UnitQuaternion::from_axis_angle(&axis, deg_to_rad(angle_deg));
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `angle_deg` about `axis` passing through `pivot`.
    pub fn rotation_about_point_deg(axis: &Vector3<T>, angle_deg: T, pivot: &Point3<T>) -> Self {
        let r = Self::from_axis_angle_deg(axis, angle_deg);
        let to_origin = Self::from_translation(-pivot.coords);
        let back = Self::from_translation(pivot.coords);
        back.compose(&r.compose(&to_origin))
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self::from_numeric(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<T>) -> Vector3<T> {
        self.rotation * v
    }

    pub fn apply_all(&self, points: &[Point3<T>]) -> Vec<Point3<T>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// Geodesic rotation angle in degrees, in `[0, 180]`.
    pub fn rotation_angle_deg(&self) -> T {
        let two = lit::<T>(2.0);
        let c = (self.rotation.trace() - T::one()) / two;
        let c = c.clamp(-T::one(), T::one());
        rad_to_deg(c.acos())
    }

    pub fn translation_norm(&self) -> T {
        self.translation.norm()
    }

    pub fn is_valid(&self) -> bool {
        orthonormality_error(&self.rotation) <= ortho_tolerance::<T>()
            && (self.rotation.determinant() - T::one()).abs() <= ortho_tolerance::<T>()
    }

    /// Converts the scalar type.
    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform::from_numeric(
            self.rotation.map(|x| lit::<U>(to_f64(x))),
            self.translation.map(|x| lit::<U>(to_f64(x))),
        )
    }
}

/// Largest entry of `|RᵀR − I|`.
pub fn orthonormality_error<T: Real>(r: &Matrix3<T>) -> T {
    let d = r.transpose() * r - Matrix3::identity();
    d.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Closest proper rotation in the Frobenius sense (polar decomposition).
pub fn nearest_rotation<T: Real>(m: &Matrix3<T>) -> Matrix3<T> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < T::zero() {
        let mut u = u;
        let mut col = u.column_mut(2);
        col.neg_mut();
        r = u * v_t;
    }
    r
}

#[derive(Serialize, Deserialize)]
struct TransformDoc {
    rotation: [[f64; 3]; 3],
    translation_mm: [f64; 3],
}

impl<T: Real> Serialize for RigidTransform<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = to_f64(self.rotation[(i, j)]);
            }
        }
        TransformDoc {
            rotation,
            translation_mm: [
                to_f64(self.translation.x),
                to_f64(self.translation.y),
                to_f64(self.translation.z),
            ],
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for RigidTransform<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = TransformDoc::deserialize(d)?;
        let rotation = Matrix3::from_fn(|i, j| lit::<T>(doc.rotation[i][j]));
        let translation = Vector3::new(
            lit(doc.translation_mm[0]),
            lit(doc.translation_mm[1]),
            lit(doc.translation_mm[2]),
        );
        RigidTransform::new(rotation, translation).map_err(serde::de::Error::custom)
    }
}
