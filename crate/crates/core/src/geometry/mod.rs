//! Point-set primitives, radius queries, farthest point sampling and voxel
//! grid subsampling.

mod fps;
mod grid;
mod subsample;

pub use fps::{farthest_from_centroid, farthest_point_sample, farthest_point_sample_with_coverage};
pub use grid::{radius_neighbors, Neighborhood, SpatialGrid};
pub use subsample::grid_subsample;

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    #[inline]
    pub fn distance_squared(&self, other: &Point3) -> f64 {
        (*self - *other).norm_squared()
    }

    #[inline]
    pub fn distance(&self, other: &Point3) -> f64 {
        libm::sqrt(self.distance_squared(other))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Point3::new(x, y, z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// Class id used for points that carry no ground truth.
pub const IGNORE_LABEL: i32 = -1;

/// Ordered points with optional per-point features and labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Point3>,
    features: Option<Matrix>,
    labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(alloc::format!("point {i} is not finite")));
        }
        Ok(Self {
            points,
            features: None,
            labels: None,
        })
    }

    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "feature rows",
                expected: self.points.len(),
                found: features.rows(),
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<i32>) -> Result<Self> {
        if labels.len() != self.points.len() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: self.points.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn features(&self) -> Option<&Matrix> {
        self.features.as_ref()
    }

    pub fn labels(&self) -> Option<&[i32]> {
        self.labels.as_deref()
    }

    pub fn take_features(&mut self) -> Option<Matrix> {
        self.features.take()
    }

    /// Sub-cloud made of the points at `indices`, carrying features and labels along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            features: self.features.as_ref().map(|f| f.gather_rows(indices)),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| p * s).collect(),
            features: self.features.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        centroid(&self.points)
    }
}

pub(crate) fn centroid(points: &[Point3]) -> Option<Point3> {
    if points.is_empty() {
        return None;
    }
    let mut acc = Point3::ORIGIN;
    for &p in points {
        acc += p;
    }
    Some(acc * (1.0 / points.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_non_finite_points() {
        assert!(PointCloud::new(vec![Point3::new(0.0, f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn feature_rows_must_match() {
        let cloud = PointCloud::new(vec![Point3::ORIGIN; 3]).unwrap();
        assert!(cloud.clone().with_features(Matrix::zeros(2, 1)).is_err());
        assert!(cloud.clone().with_labels(vec![0; 4]).is_err());
        assert!(cloud.with_labels(vec![0; 3]).is_ok());
    }
}
