use alloc::vec::Vec;
use hashbrown::HashMap;

use super::{Point3, PointCloud};
use crate::{Error, Result};

type CellKey = (i64, i64, i64);

/// Closed-ball neighborhood of a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: Point3,
    /// Ascending, unique indices into the source cloud.
    pub indices: Vec<usize>,
    pub radius: f64,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Member coordinates relative to the query point.
    pub fn offsets(&self, points: &[Point3]) -> Vec<Point3> {
        self.indices.iter().map(|&i| points[i] - self.center).collect()
    }
}

/// Uniform hash grid over a borrowed point slice.
///
/// Points are bucketed by `floor(coord / cell)`; each occupied cell maps to a
/// contiguous run of the cell-sorted index array.
#[derive(Debug, Clone)]
pub struct SpatialGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    order: Vec<u32>,
    cells: HashMap<CellKey, (u32, u32)>,
    lo: CellKey,
    hi: CellKey,
}

impl<'a> SpatialGrid<'a> {
    pub fn new(points: &'a [Point3], cell: f64) -> Result<Self> {
        if !(cell.is_finite() && cell > 0.0) {
            return Err(Error::invalid("grid cell size must be finite and > 0"));
        }
        let keys: Vec<CellKey> = points.iter().map(|p| key_of(p, cell)).collect();
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        order.sort_by_key(|&i| keys[i as usize]);

        let mut cells = HashMap::with_capacity(points.len() / 2 + 1);
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        let mut start = 0usize;
        while start < order.len() {
            let k = keys[order[start] as usize];
            let mut end = start + 1;
            while end < order.len() && keys[order[end] as usize] == k {
                end += 1;
            }
            cells.insert(k, (start as u32, end as u32));
            lo = (lo.0.min(k.0), lo.1.min(k.1), lo.2.min(k.2));
            hi = (hi.0.max(k.0), hi.1.max(k.1), hi.2.max(k.2));
            start = end;
        }
        Ok(Self {
            points,
            cell,
            order,
            cells,
            lo,
            hi,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn points(&self) -> &'a [Point3] {
        self.points
    }

    /// Indices of all points with `distance(p, center) <= r`, ascending.
    pub fn radius_neighbors(&self, center: Point3, r: f64) -> Result<Neighborhood> {
        if !center.is_finite() {
            return Err(Error::invalid("query center is not finite"));
        }
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::invalid("query radius must be finite and >= 0"));
        }
        let mut indices = Vec::new();
        self.for_each_within(center, r, |i| indices.push(i));
        indices.sort_unstable();
        Ok(Neighborhood {
            center,
            indices,
            radius: r,
        })
    }

    /// Calls `visit` for every point within the closed ball, in unspecified order.
    pub(crate) fn for_each_within(&self, center: Point3, r: f64, mut visit: impl FnMut(usize)) {
        if self.points.is_empty() {
            return;
        }
        let a = key_of(&Point3::new(center.x - r, center.y - r, center.z - r), self.cell);
        let b = key_of(&Point3::new(center.x + r, center.y + r, center.z + r), self.cell);
        let a = (a.0.max(self.lo.0), a.1.max(self.lo.1), a.2.max(self.lo.2));
        let b = (b.0.min(self.hi.0), b.1.min(self.hi.1), b.2.min(self.hi.2));
        if a.0 > b.0 || a.1 > b.1 || a.2 > b.2 {
            return;
        }
        let span = ((b.0 - a.0 + 1) as u128) * ((b.1 - a.1 + 1) as u128) * ((b.2 - a.2 + 1) as u128);
        let mut scan_run = |&(s, e): &(u32, u32)| {
            for &i in &self.order[s as usize..e as usize] {
                let i = i as usize;
                if self.points[i].distance(&center) <= r {
                    visit(i);
                }
            }
        };
        if span > self.cells.len() as u128 {
            for (k, run) in &self.cells {
                if (a.0..=b.0).contains(&k.0) && (a.1..=b.1).contains(&k.1) && (a.2..=b.2).contains(&k.2) {
                    scan_run(run);
                }
            }
        } else {
            for x in a.0..=b.0 {
                for y in a.1..=b.1 {
                    for z in a.2..=b.2 {
                        if let Some(run) = self.cells.get(&(x, y, z)) {
                            scan_run(run);
                        }
                    }
                }
            }
        }
    }

    /// Index of the point closest to `query`; ties go to the lowest index.
    pub fn nearest(&self, query: Point3) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let c = key_of(&query, self.cell);
        let mut best: Option<(f64, usize)> = None;
        let max_ring = [
            (c.0 - self.lo.0).abs(),
            (self.hi.0 - c.0).abs(),
            (c.1 - self.lo.1).abs(),
            (self.hi.1 - c.1).abs(),
            (c.2 - self.lo.2).abs(),
            (self.hi.2 - c.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let consider = |run: &(u32, u32), best: &mut Option<(f64, usize)>| {
            for &i in &self.order[run.0 as usize..run.1 as usize] {
                let i = i as usize;
                let d = self.points[i].distance_squared(&query);
                match *best {
                    Some((bd, bi)) if d > bd || (d == bd && i > bi) => {}
                    _ => *best = Some((d, i)),
                }
            }
        };
        let ring_cells = |k: i64| -> u128 {
            let side = (2 * k + 1) as u128;
            side * side * side
        };
        for k in 0..=max_ring {
            if ring_cells(k) > 4 * self.cells.len() as u128 {
                // Shell enumeration has become more expensive than a full scan.
                for run in self.cells.values() {
                    consider(run, &mut best);
                }
                return best.map(|(_, i)| i);
            }
            for x in (c.0 - k)..=(c.0 + k) {
                for y in (c.1 - k)..=(c.1 + k) {
                    for z in (c.2 - k)..=(c.2 + k) {
                        let on_shell = (x - c.0).abs() == k || (y - c.1).abs() == k || (z - c.2).abs() == k;
                        if !on_shell {
                            continue;
                        }
                        if let Some(run) = self.cells.get(&(x, y, z)) {
                            consider(run, &mut best);
                        }
                    }
                }
            }
            // Anything beyond ring k is at least k cells away.
            if let Some((bd, _)) = best {
                let reach = k as f64 * self.cell;
                if bd < reach * reach {
                    break;
                }
            }
        }
        best.map(|(_, i)| i)
    }
}

#[inline]
fn key_of(p: &Point3, cell: f64) -> CellKey {
    (
        libm::floor(p.x / cell) as i64,
        libm::floor(p.y / cell) as i64,
        libm::floor(p.z / cell) as i64,
    )
}

/// Closed-ball radius query against `cloud`, using a grid with cell = `r`.
pub fn radius_neighbors(cloud: &PointCloud, center: Point3, r: f64) -> Result<Neighborhood> {
    if cloud.is_empty() {
        return Err(Error::invalid("radius query on an empty cloud"));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::invalid("query radius must be finite and >= 0"));
    }
    let cell = if r > 0.0 { r } else { 1.0 };
    SpatialGrid::new(cloud.points(), cell)?.radius_neighbors(center, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&p| p.into()).collect()).unwrap()
    }

    fn brute(points: &[Point3], c: Point3, r: f64) -> Vec<usize> {
        (0..points.len()).filter(|&i| points[i].distance(&c) <= r).collect()
    }

    #[test]
    fn unit_ball_example() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let nb = radius_neighbors(&c, Point3::ORIGIN, 1.0).unwrap();
        assert_eq!(nb.indices, vec![0, 1]);
    }

    #[test]
    fn zero_radius_returns_coincident_point() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let nb = radius_neighbors(&c, Point3::new(0.5, 0.0, 0.0), 0.0).unwrap();
        assert_eq!(nb.indices, vec![1]);
    }

    #[test]
    fn huge_radius_returns_everything() {
        let c = cloud(&[[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let nb = radius_neighbors(&c, Point3::ORIGIN, 100.0).unwrap();
        assert_eq!(nb.indices, vec![0, 1, 2]);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = cloud(&[[0.0, 0.0, 0.0]]);
        assert!(radius_neighbors(&c, Point3::new(f64::NAN, 0.0, 0.0), 1.0).is_err());
        assert!(radius_neighbors(&c, Point3::ORIGIN, f64::INFINITY).is_err());
        assert!(radius_neighbors(&c, Point3::ORIGIN, -1.0).is_err());
        assert!(radius_neighbors(&PointCloud::default(), Point3::ORIGIN, 1.0).is_err());
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Point3> = (0..3000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        for cell in [0.05, 0.3, 1.7] {
            let grid = SpatialGrid::new(&pts, cell).unwrap();
            for _ in 0..50 {
                let c = Point3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.5..1.5),
                );
                let r = rng.random_range(0.0..2.5);
                assert_eq!(grid.radius_neighbors(c, r).unwrap().indices, brute(&pts, c, r));
            }
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..5.0),
                    rng.random_range(0.0..5.0),
                    rng.random_range(0.0..0.2),
                )
            })
            .collect();
        let grid = SpatialGrid::new(&pts, 0.2).unwrap();
        for _ in 0..200 {
            let q = Point3::new(
                rng.random_range(-2.0..7.0),
                rng.random_range(-2.0..7.0),
                rng.random_range(-1.0..1.0),
            );
            let expected = (0..pts.len())
                .min_by(|&a, &b| pts[a].distance_squared(&q).total_cmp(&pts[b].distance_squared(&q)))
                .unwrap();
            assert_eq!(grid.nearest(q), Some(expected));
        }
    }

    #[test]
    fn nearest_prefers_lowest_index_on_ties() {
        let pts = vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
        ];
        let grid = SpatialGrid::new(&pts, 0.5).unwrap();
        assert_eq!(grid.nearest(Point3::ORIGIN), Some(0));
        assert_eq!(grid.nearest(Point3::new(1.0, 0.0, 0.0)), Some(0));
    }
}
