//! Geometric kernel priors.
//!
//! A kernel is a fixed point set inside the unit ball, obtained by sampling a
//! primitive densely and reducing the samples with farthest point sampling.
//! Canonical frame: the line runs along z, the plane is the z = 0 disk.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use crate::geometry::{farthest_from_centroid, farthest_point_sample_with_coverage, Point3};
use crate::{Error, Result};

/// Kernel point count used throughout unless configured otherwise.
pub const DEFAULT_KERNEL_POINTS: usize = 15;
/// Dense candidates per kernel point before FPS.
pub const OVERSAMPLE_FACTOR: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum KernelShape {
    CenterPoint,
    Line,
    Plane,
    Sphere,
}

impl KernelShape {
    pub const ALL: [KernelShape; 4] = [
        KernelShape::Sphere,
        KernelShape::Plane,
        KernelShape::Line,
        KernelShape::CenterPoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelShape::CenterPoint => "center-point",
            KernelShape::Line => "line",
            KernelShape::Plane => "plane",
            KernelShape::Sphere => "sphere",
        }
    }

    /// Stable on-disk code.
    pub fn code(self) -> u32 {
        match self {
            KernelShape::CenterPoint => 0,
            KernelShape::Line => 1,
            KernelShape::Plane => 2,
            KernelShape::Sphere => 3,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(KernelShape::CenterPoint),
            1 => Ok(KernelShape::Line),
            2 => Ok(KernelShape::Plane),
            3 => Ok(KernelShape::Sphere),
            _ => Err(Error::invalid(alloc::format!("unknown kernel shape code {code}"))),
        }
    }
}

impl fmt::Display for KernelShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "center-point" | "centerpoint" | "center_point" | "point" => Ok(KernelShape::CenterPoint),
            "line" => Ok(KernelShape::Line),
            "plane" => Ok(KernelShape::Plane),
            "sphere" => Ok(KernelShape::Sphere),
            other => Err(Error::invalid(alloc::format!("unknown kernel shape '{other}'"))),
        }
    }
}

/// A sampled primitive in unit-ball coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelPrior {
    shape: KernelShape,
    points: Vec<Point3>,
    covering_radius: f64,
}

impl KernelPrior {
    /// Kernel with the default point count and oversampling.
    pub fn standard(shape: KernelShape) -> Self {
        generate_kernel(shape, DEFAULT_KERNEL_POINTS, DEFAULT_KERNEL_POINTS * OVERSAMPLE_FACTOR)
            .expect("default kernel parameters are valid")
    }

    /// Wraps externally supplied unit-ball points (for example a kernel read from disk).
    pub fn from_points(shape: KernelShape, points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("kernel needs at least one point"));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite() || p.norm() > 1.0 + 1e-9) {
            return Err(Error::invalid(alloc::format!(
                "kernel point {p:?} lies outside the unit ball"
            )));
        }
        let covering_radius = covering_radius_over(&points, &sample_primitive(shape, OVERSAMPLE_FACTOR * points.len()));
        Ok(Self {
            shape,
            points,
            covering_radius,
        })
    }

    pub fn shape(&self) -> KernelShape {
        self.shape
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance from a dense primitive sample to its nearest kernel point.
    pub fn covering_radius(&self) -> f64 {
        self.covering_radius
    }

    /// Kernel points scaled to radius `r`.
    pub fn scaled(&self, r: f64) -> Result<Vec<Point3>> {
        scale_kernel(self, r)
    }
}

/// Densely samples the primitive and reduces it to `n` points by FPS, seeded
/// at the candidate farthest from the candidates' centroid.
pub fn generate_kernel(shape: KernelShape, n: usize, oversample: usize) -> Result<KernelPrior> {
    if n == 0 {
        return Err(Error::invalid("kernel point count must be >= 1"));
    }
    if oversample < n {
        return Err(Error::invalid(alloc::format!(
            "oversample ({oversample}) must be at least the kernel size ({n})"
        )));
    }
    if shape == KernelShape::CenterPoint {
        return Ok(KernelPrior {
            shape,
            points: vec![Point3::ORIGIN],
            covering_radius: 0.0,
        });
    }
    let candidates = sample_primitive(shape, oversample);
    let n = n.min(candidates.len());
    let seed = farthest_from_centroid(&candidates).ok_or_else(|| Error::Internal("no kernel candidates".into()))?;
    let (picks, covering_radius) = farthest_point_sample_with_coverage(&candidates, n, seed)?;
    Ok(KernelPrior {
        shape,
        points: picks.into_iter().map(|i| candidates[i]).collect(),
        covering_radius,
    })
}

/// Kernel points multiplied by `r`.
pub fn scale_kernel(kernel: &KernelPrior, r: f64) -> Result<Vec<Point3>> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid("kernel radius must be finite and > 0"));
    }
    Ok(kernel.points.iter().map(|&p| p * r).collect())
}

/// Deterministic dense sample of a unit-ball primitive.
///
/// Lines use an odd number of evenly spaced samples so the midpoint is exact;
/// disks use a sunflower spiral; spheres use a Fibonacci lattice.
pub fn sample_primitive(shape: KernelShape, count: usize) -> Vec<Point3> {
    let count = count.max(1);
    match shape {
        KernelShape::CenterPoint => vec![Point3::ORIGIN],
        KernelShape::Line => {
            let count = (count.max(3)) | 1;
            let half = (count / 2) as f64;
            (0..count)
                .map(|i| Point3::new(0.0, 0.0, (i as f64 - half) / half))
                .collect()
        }
        KernelShape::Plane => {
            let golden = PI * (3.0 - libm::sqrt(5.0));
            (0..count)
                .map(|i| {
                    let rho = libm::sqrt((i as f64 + 0.5) / count as f64);
                    let t = i as f64 * golden;
                    Point3::new(rho * libm::cos(t), rho * libm::sin(t), 0.0)
                })
                .collect()
        }
        KernelShape::Sphere => {
            let golden = PI * (3.0 - libm::sqrt(5.0));
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
                    let rho = libm::sqrt((1.0 - z * z).max(0.0));
                    let t = i as f64 * golden;
                    let p = Point3::new(rho * libm::cos(t), rho * libm::sin(t), z);
                    p * (1.0 / p.norm())
                })
                .collect()
        }
    }
}

/// Largest distance from any point of `surface` to its nearest point in `samples`.
pub fn covering_radius_over(samples: &[Point3], surface: &[Point3]) -> f64 {
    let worst = surface
        .iter()
        .map(|s| {
            samples
                .iter()
                .map(|k| k.distance_squared(s))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    if worst.is_finite() {
        libm::sqrt(worst)
    } else {
        0.0
    }
}
