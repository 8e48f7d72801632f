use alloc::vec;
use alloc::vec::Vec;

use super::{centroid, Point3};
use crate::{Error, Result};

/// Greedy farthest point sampling.
///
/// The first pick is `seed_index`; every later pick maximizes the distance to
/// the already picked set, ties going to the lowest index.
pub fn farthest_point_sample(points: &[Point3], k: usize, seed_index: usize) -> Result<Vec<usize>> {
    farthest_point_sample_with_coverage(points, k, seed_index).map(|(picks, _)| picks)
}

/// Like [`farthest_point_sample`], also returning the covering radius of the
/// picks over `points`: the largest distance from any input point to its
/// nearest pick.
pub fn farthest_point_sample_with_coverage(
    points: &[Point3],
    k: usize,
    seed_index: usize,
) -> Result<(Vec<usize>, f64)> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(alloc::format!(
            "cannot pick {k} points out of {}",
            points.len()
        )));
    }
    if seed_index >= points.len() {
        return Err(Error::invalid(alloc::format!(
            "seed index {seed_index} out of range for {} points",
            points.len()
        )));
    }
    let mut picked = vec![false; points.len()];
    let mut min_d2 = vec![f64::INFINITY; points.len()];
    let mut picks = Vec::with_capacity(k);
    let mut current = seed_index;
    loop {
        picks.push(current);
        picked[current] = true;
        let c = points[current];
        for (d, p) in min_d2.iter_mut().zip(points) {
            let d2 = p.distance_squared(&c);
            if d2 < *d {
                *d = d2;
            }
        }
        if picks.len() == k {
            break;
        }
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if !picked[i] && d > best_d {
                best = i;
                best_d = d;
            }
        }
        current = best;
    }
    let coverage = min_d2.iter().copied().fold(0.0, f64::max);
    Ok((picks, libm::sqrt(coverage)))
}

/// Index of the point farthest from the centroid; ties go to the lowest index.
pub fn farthest_from_centroid(points: &[Point3]) -> Option<usize> {
    let c = centroid(points)?;
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = p.distance_squared(&c);
        if d > best_d {
            best = i;
            best_d = d;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Point3> {
        xs.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect()
    }

    /// Exhaustive oracle: the best second pick maximizes distance to the seed.
    fn brute_second(points: &[Point3], seed: usize) -> usize {
        let mut best = 0;
        let mut best_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let d = p.distance(&points[seed]);
            if i != seed && d > best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    #[test]
    fn collinear_picks_endpoints() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(brute_second(&pts, 0), 3);
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap(), vec![0, 3]);
    }

    #[test]
    fn square_diagonal() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        assert_eq!(brute_second(&pts, 0), 3);
        assert_eq!(farthest_point_sample(&pts, 2, 0).unwrap()[1], 3);
    }

    #[test]
    fn exhausting_the_cloud_gives_a_permutation() {
        let pts = line(&[0.0, 0.0, 0.0, 5.0, 1.0]);
        let mut picks = farthest_point_sample(&pts, pts.len(), 2).unwrap();
        assert_eq!(picks[0], 2);
        picks.sort_unstable();
        assert_eq!(picks, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_oversized_requests() {
        let pts = line(&[0.0, 1.0]);
        assert!(farthest_point_sample(&pts, 3, 0).is_err());
        assert!(farthest_point_sample(&pts, 0, 0).is_err());
        assert!(farthest_point_sample(&pts, 1, 2).is_err());
    }

    #[test]
    fn coverage_of_endpoints_on_segment() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let (picks, cov) = farthest_point_sample_with_coverage(&pts, 2, 0).unwrap();
        assert_eq!(picks, vec![0, 4]);
        assert_eq!(cov, 2.0);
    }

    #[test]
    fn centroid_seed_ties_go_low() {
        let pts = line(&[-1.0, 0.0, 1.0]);
        assert_eq!(farthest_from_centroid(&pts), Some(0));
    }
}
