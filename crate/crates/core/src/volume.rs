//! Regular voxel grids of signed 16-bit intensities.

use nalgebra::{Point3, Vector3};

use crate::scalar::{count, is_finite, Real};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VolumeError {
    #[error("nonpositive spacing")]
    NonPositiveSpacing,
    #[error("zero dimension in {0:?}")]
    ZeroDimension([usize; 3]),
    #[error("expected {expected} voxels, got {got}")]
    VoxelCount { expected: usize, got: usize },
    #[error("non-finite origin")]
    NonFiniteOrigin,
}

/// Voxel `(i, j, k)` sits at `origin + (i·sx, j·sy, k·sz)`; storage is
/// x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume<T: Real> {
    dims: [usize; 3],
    spacing_mm: Vector3<T>,
    origin_mm: Point3<T>,
    voxels: Vec<i16>,
}

impl<T: Real> Volume<T> {
    pub fn new(
        dims: [usize; 3],
        spacing_mm: Vector3<T>,
        origin_mm: Point3<T>,
        voxels: Vec<i16>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::ZeroDimension(dims));
        }
        if spacing_mm.iter().any(|s| !(*s > T::zero()) || !is_finite(*s)) {
            return Err(VolumeError::NonPositiveSpacing);
        }
        if !origin_mm.iter().all(|c| is_finite(*c)) {
            return Err(VolumeError::NonFiniteOrigin);
        }
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(VolumeError::VoxelCount {
                expected,
                got: voxels.len(),
            });
        }
        Ok(Self {
            dims,
            spacing_mm,
            origin_mm,
            voxels,
        })
    }

    /// Volume filled by evaluating `f(i, j, k)` at every voxel.
    pub fn from_fn(
        dims: [usize; 3],
        spacing_mm: Vector3<T>,
        origin_mm: Point3<T>,
        mut f: impl FnMut(usize, usize, usize) -> i16,
    ) -> Result<Self, VolumeError> {
        let mut voxels = Vec::with_capacity(dims.iter().product());
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    voxels.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, spacing_mm, origin_mm, voxels)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing_mm(&self) -> &Vector3<T> {
        &self.spacing_mm
    }

    pub fn origin_mm(&self) -> &Point3<T> {
        &self.origin_mm
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<i16> {
        if i < self.dims[0] && j < self.dims[1] && k < self.dims[2] {
            Some(self.voxels[self.linear_index(i, j, k)])
        } else {
            None
        }
    }

    #[inline]
    pub fn world_of_voxel(&self, i: usize, j: usize, k: usize) -> Point3<T> {
        Point3::new(
            self.origin_mm.x + count::<T>(i) * self.spacing_mm.x,
            self.origin_mm.y + count::<T>(j) * self.spacing_mm.y,
            self.origin_mm.z + count::<T>(k) * self.spacing_mm.z,
        )
    }

    /// Continuous voxel coordinates of a world point.
    #[inline]
    pub fn continuous_index(&self, p: &Point3<T>) -> Vector3<T> {
        (p - self.origin_mm).component_div(&self.spacing_mm)
    }

    /// Nearest voxel to a world point, `None` when outside the grid.
    pub fn voxel_of_world(&self, p: &Point3<T>) -> Option<[usize; 3]> {
        let u = self.continuous_index(p);
        let mut out = [0usize; 3];
        for axis in 0..3 {
            let r = u[axis].round();
            if r < T::zero() || !is_finite(r) {
                return None;
            }
            let idx = crate::scalar::to_f64(r) as usize;
            if idx >= self.dims[axis] {
                return None;
            }
            out[axis] = idx;
        }
        Some(out)
    }

    /// Same grid shifted by `offset` in world space.
    pub fn translated(&self, offset: &Vector3<T>) -> Self {
        Self {
            origin_mm: self.origin_mm + offset,
            ..self.clone()
        }
    }
}
