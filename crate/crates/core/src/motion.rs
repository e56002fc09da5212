use nalgebra::Point3;

use crate::scalar::{is_finite, to_f64, Real};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MotionError {
    #[error("frame rate must be positive, got {0}")]
    BadRate(f64),
    #[error("correspondence violated: frame {frame} has {got} points, expected {expected}")]
    Correspondence {
        frame: usize,
        expected: usize,
        got: usize,
    },
    #[error("non-finite point {point} in frame {frame}")]
    NonFinite { frame: usize, point: usize },
}

/// Time-ordered point clouds captured at `fps`. With `correspondence`, point
/// `i` in every frame tracks the same surface location.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence<T: Real> {
    fps: T,
    frames: Vec<Vec<Point3<T>>>,
    correspondence: bool,
}

impl<T: Real> MotionSequence<T> {
    pub fn new(
        fps: T,
        frames: Vec<Vec<Point3<T>>>,
        correspondence: bool,
    ) -> Result<Self, MotionError> {
        if !(fps > T::zero()) || !is_finite(fps) {
            return Err(MotionError::BadRate(to_f64(fps)));
        }
        for (f, frame) in frames.iter().enumerate() {
            if let Some(p) = frame.iter().position(|p| !p.iter().all(|c| is_finite(*c))) {
                return Err(MotionError::NonFinite { frame: f, point: p });
            }
        }
        if correspondence {
            let expected = frames.first().map_or(0, Vec::len);
            if let Some((f, frame)) = frames
                .iter()
                .enumerate()
                .find(|(_, fr)| fr.len() != expected)
            {
                return Err(MotionError::Correspondence {
                    frame: f,
                    expected,
                    got: frame.len(),
                });
            }
        }
        Ok(Self {
            fps,
            frames,
            correspondence,
        })
    }

    pub fn fps(&self) -> T {
        self.fps
    }

    pub fn frames(&self) -> &[Vec<Point3<T>>] {
        &self.frames
    }

    pub fn correspondence(&self) -> bool {
        self.correspondence
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Same sequence with every frame mapped through `f`.
    pub fn map_frames(&self, mut f: impl FnMut(&[Point3<T>]) -> Vec<Point3<T>>) -> Result<Self, MotionError> {
        Self::new(
            self.fps,
            self.frames.iter().map(|fr| f(fr)).collect(),
            self.correspondence,
        )
    }
}
