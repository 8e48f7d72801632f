//! Deterministic labeled scenes whose classes mirror the kernel geometries:
//! planar floor, thin vertical poles, spherical blobs and volumetric clutter.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::{Error, Point3, PointCloud, Result};

pub const FLOOR: i32 = 0;
pub const POLE: i32 = 1;
pub const SPHERE: i32 = 2;
pub const CLUTTER: i32 = 3;
pub const CLASS_NAMES: [&str; 4] = ["floor", "pole", "sphere", "clutter"];

/// Scene parameters. Densities are points per square meter of primitive surface.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneSpec {
    pub seed: u64,
    /// Side of the square floor area, meters.
    pub extent: f64,
    /// The first plane is the ground at z = 0; further planes are raised
    /// horizontal patches.
    pub floor_planes: usize,
    pub poles: usize,
    pub spheres: usize,
    /// Clutter points, grouped into small boxes of roughly 100 points.
    pub clutter_points: usize,
    pub floor_density: f64,
    pub pole_density: f64,
    pub sphere_density: f64,
    pub noise_sigma: f64,
    /// Uniform outliers as a fraction of the primitive points, labeled clutter.
    pub outlier_fraction: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            extent: 4.0,
            floor_planes: 1,
            poles: 6,
            spheres: 4,
            clutter_points: 600,
            floor_density: 750.0,
            pole_density: 1500.0,
            sphere_density: 750.0,
            noise_sigma: 0.01,
            outlier_fraction: 0.02,
        }
    }
}

impl SceneSpec {
    /// Floor and poles only.
    pub fn pole_floor(seed: u64) -> Self {
        Self {
            seed,
            spheres: 0,
            clutter_points: 0,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::invalid("scene extent must be positive"));
        }
        for (name, d) in [
            ("floor_density", self.floor_density),
            ("pole_density", self.pole_density),
            ("sphere_density", self.sphere_density),
        ] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::invalid(alloc::format!("{name} must be positive, got {d}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::invalid("outlier fraction must lie in [0, 1)"));
        }
        if self.floor_planes + self.poles + self.spheres + self.clutter_points == 0 {
            return Err(Error::invalid("scene has no primitives"));
        }
        Ok(())
    }
}

enum Primitive {
    Patch { x0: f64, y0: f64, x1: f64, y1: f64, z: f64 },
    Pole { x: f64, y: f64, radius: f64, height: f64 },
    Sphere { center: Point3, radius: f64 },
    Box { lo: Point3, side: f64, count: usize },
}

impl Primitive {
    fn label(&self) -> i32 {
        match self {
            Primitive::Patch { .. } => FLOOR,
            Primitive::Pole { .. } => POLE,
            Primitive::Sphere { .. } => SPHERE,
            Primitive::Box { .. } => CLUTTER,
        }
    }

    fn count(&self, spec: &SceneSpec) -> usize {
        let n = match *self {
            Primitive::Patch { x0, y0, x1, y1, .. } => (x1 - x0) * (y1 - y0) * spec.floor_density,
            Primitive::Pole { radius, height, .. } => 2.0 * PI * radius * height * spec.pole_density,
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius * spec.sphere_density,
            Primitive::Box { count, .. } => return count,
        };
        libm::round(n) as usize
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        match *self {
            Primitive::Patch { x0, y0, x1, y1, z } => {
                Point3::new(rng.random_range(x0..x1), rng.random_range(y0..y1), z)
            }
            Primitive::Pole { x, y, radius, height } => {
                let t = rng.random_range(0.0..2.0 * PI);
                Point3::new(
                    x + radius * libm::cos(t),
                    y + radius * libm::sin(t),
                    rng.random_range(0.0..height),
                )
            }
            Primitive::Sphere { center, radius } => loop {
                let v = Point3::new(
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                let norm = v.norm();
                if norm > 1e-9 {
                    break center + v * (radius / norm);
                }
            },
            Primitive::Box { lo, side, .. } => {
                lo + Point3::new(
                    rng.random_range(0.0..side),
                    rng.random_range(0.0..side),
                    rng.random_range(0.0..side),
                )
            }
        }
    }
}

fn layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let e = spec.extent;
    let mut out = Vec::new();
    for p in 0..spec.floor_planes {
        if p == 0 {
            out.push(Primitive::Patch {
                x0: 0.0,
                y0: 0.0,
                x1: e,
                y1: e,
                z: 0.0,
            });
        } else {
            let w = rng.random_range(0.15..0.3) * e;
            let d = rng.random_range(0.15..0.3) * e;
            let x0 = rng.random_range(0.0..e - w);
            let y0 = rng.random_range(0.0..e - d);
            let z = rng.random_range(0.5..1.0);
            out.push(Primitive::Patch {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + d,
                z,
            });
        }
    }
    // Upright objects are kept apart so their labels never overlap.
    let mut footprints: Vec<(f64, f64, f64)> = Vec::new();
    let mut place = |rng: &mut ChaCha8Rng, reach: f64| -> (f64, f64) {
        let margin = reach.min(0.5 * e);
        let mut best = (0.5 * e, 0.5 * e);
        for attempt in 0..200 {
            let c = (
                rng.random_range(margin..=e - margin),
                rng.random_range(margin..=e - margin),
            );
            best = c;
            let clear = footprints
                .iter()
                .all(|&(x, y, r)| libm::hypot(x - c.0, y - c.1) > r + reach + 0.1);
            if clear || attempt == 199 {
                break;
            }
        }
        footprints.push((best.0, best.1, reach));
        best
    };
    for _ in 0..spec.poles {
        let radius = rng.random_range(0.03..0.06);
        let height = rng.random_range(1.0..2.0);
        let (x, y) = place(rng, radius);
        out.push(Primitive::Pole { x, y, radius, height });
    }
    for _ in 0..spec.spheres {
        let radius = rng.random_range(0.2..0.4);
        let (x, y) = place(rng, radius);
        let z = radius + rng.random_range(0.1..0.6);
        out.push(Primitive::Sphere {
            center: Point3::new(x, y, z),
            radius,
        });
    }
    let mut remaining = spec.clutter_points;
    let boxes = remaining.div_ceil(100);
    for b in 0..boxes {
        let count = remaining / (boxes - b);
        remaining -= count;
        let side = rng.random_range(0.15..0.3);
        let (x, y) = place(rng, side);
        let z = rng.random_range(0.0..0.8);
        out.push(Primitive::Box {
            lo: Point3::new(x - 0.5 * side, y - 0.5 * side, z),
            side,
            count,
        });
    }
    out
}

fn outlier_count(spec: &SceneSpec, primitive_points: usize) -> usize {
    libm::round(spec.outlier_fraction * primitive_points as f64) as usize
}

/// Points per class (floor, pole, sphere, clutter) that [`generate_scene`]
/// will emit for `spec`. Outliers count towards clutter.
pub fn point_budgets(spec: &SceneSpec) -> Result<[usize; 4]> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut budgets = [0usize; 4];
    for p in layout(spec, &mut rng) {
        budgets[p.label() as usize] += p.count(spec);
    }
    let total: usize = budgets.iter().sum();
    budgets[CLUTTER as usize] += outlier_count(spec, total);
    Ok(budgets)
}

/// Samples every primitive, perturbs with isotropic Gaussian noise and adds
/// uniform outliers inside the scene box. Identical specs give identical clouds.
pub fn generate_scene(spec: &SceneSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let prims = layout(spec, &mut rng);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for p in &prims {
        for _ in 0..p.count(spec) {
            points.push(p.sample(&mut rng));
            labels.push(p.label());
        }
    }
    if spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::invalid(alloc::format!("{e}")))?;
        for p in &mut points {
            *p += Point3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
        }
    }
    let outliers = outlier_count(spec, points.len());
    let top = points.iter().map(|p| p.z).fold(1.0, f64::max);
    for _ in 0..outliers {
        points.push(Point3::new(
            rng.random_range(0.0..spec.extent),
            rng.random_range(0.0..spec.extent),
            rng.random_range(0.0..top),
        ));
        labels.push(CLUTTER);
    }
    PointCloud::new(points)?.with_labels(labels)
}

/// Disjoint seed ranges `[base, base + train)` and `[base + train, base + train + test)`.
pub fn split_seeds(base: u64, train: usize, test: usize) -> (Vec<u64>, Vec<u64>) {
    let train_seeds: Vec<u64> = (0..train as u64).map(|i| base + i).collect();
    let test_seeds: Vec<u64> = (0..test as u64).map(|i| base + train as u64 + i).collect();
    (train_seeds, test_seeds)
}

/// Label histogram over the four scene classes; other labels are ignored.
pub fn class_histogram(labels: &[i32]) -> [usize; 4] {
    let mut h = [0usize; 4];
    for &l in labels {
        if (0..4).contains(&l) {
            h[l as usize] += 1;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn noiseless_single_plane_is_flat() {
        let spec = SceneSpec {
            poles: 0,
            spheres: 0,
            clutter_points: 0,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            ..SceneSpec::default()
        };
        let cloud = generate_scene(&spec).unwrap();
        assert!(cloud.len() > 1000);
        assert!(cloud.points().iter().all(|p| p.z == 0.0));
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SceneSpec::default().with_seed(9);
        assert_eq!(generate_scene(&spec).unwrap(), generate_scene(&spec).unwrap());
        assert_ne!(
            generate_scene(&spec).unwrap(),
            generate_scene(&spec.with_seed(10)).unwrap()
        );
    }

    #[test]
    fn histogram_matches_budgets() {
        for seed in 0..5 {
            let spec = SceneSpec::default().with_seed(seed);
            let cloud = generate_scene(&spec).unwrap();
            assert_eq!(class_histogram(cloud.labels().unwrap()), point_budgets(&spec).unwrap());
        }
    }

    #[test]
    fn default_size_is_about_twenty_thousand() {
        let n = generate_scene(&SceneSpec::default()).unwrap().len();
        assert!((14_000..26_000).contains(&n), "{n}");
    }

    #[test]
    fn noiseless_primitives_keep_their_shape() {
        let spec = SceneSpec {
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            ..SceneSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let prims = layout(&spec, &mut rng);
        let cloud = generate_scene(&spec).unwrap();
        let mut offset = 0;
        for p in &prims {
            let n = p.count(&spec);
            for q in &cloud.points()[offset..offset + n] {
                match *p {
                    Primitive::Pole { x, y, radius, .. } => {
                        assert!((libm::hypot(q.x - x, q.y - y) - radius).abs() < 1e-12)
                    }
                    Primitive::Sphere { center, radius } => assert!((q.distance(&center) - radius).abs() < 1e-12),
                    _ => {}
                }
            }
            offset += n;
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SceneSpec {
                floor_planes: 0,
                poles: 0,
                spheres: 0,
                clutter_points: 0,
                ..SceneSpec::default()
            },
            SceneSpec {
                pole_density: 0.0,
                ..SceneSpec::default()
            },
            SceneSpec {
                noise_sigma: -1.0,
                ..SceneSpec::default()
            },
            SceneSpec {
                outlier_fraction: 1.0,
                ..SceneSpec::default()
            },
        ];
        for spec in bad {
            assert!(generate_scene(&spec).is_err());
        }
    }

    #[test]
    fn seed_splits_are_disjoint() {
        let (a, b) = split_seeds(100, 4, 3);
        assert_eq!(a, vec![100, 101, 102, 103]);
        assert!(b.iter().all(|s| !a.contains(s)));
        assert_eq!(b.len(), 3);
    }
}
