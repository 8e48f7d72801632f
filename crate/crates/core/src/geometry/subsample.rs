use alloc::vec::Vec;

use super::{Point3, PointCloud, IGNORE_LABEL};
use crate::{Error, Matrix, Result};

/// Voxel-grid subsampling: one centroid per occupied cell.
///
/// Features are averaged, labels take the majority vote (ties to the smallest
/// class id, ignored labels only win when nothing else is present). Output is
/// ordered by voxel key.
pub fn grid_subsample(cloud: &PointCloud, cell: f64) -> Result<PointCloud> {
    if !(cell.is_finite() && cell > 0.0) {
        return Err(Error::invalid("subsampling cell must be finite and > 0"));
    }
    let points = cloud.points();
    let keys: Vec<(i64, i64, i64)> = points
        .iter()
        .map(|p| {
            (
                libm::floor(p.x / cell) as i64,
                libm::floor(p.y / cell) as i64,
                libm::floor(p.z / cell) as i64,
            )
        })
        .collect();
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| keys[i]);

    let feat = cloud.features();
    let labels = cloud.labels();
    let mut out_pts = Vec::new();
    let mut out_feat: Vec<f64> = Vec::new();
    let mut out_labels = Vec::new();
    let mut votes: Vec<(i32, usize)> = Vec::new();

    let mut start = 0;
    while start < order.len() {
        let k = keys[order[start]];
        let mut end = start + 1;
        while end < order.len() && keys[order[end]] == k {
            end += 1;
        }
        let members = &order[start..end];
        let inv = 1.0 / members.len() as f64;

        let mut acc = Point3::ORIGIN;
        let mut lo = points[members[0]];
        let mut hi = lo;
        for &i in members {
            let p = points[i];
            acc += p;
            lo = Point3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Point3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let c = acc * inv;
        // Rounding in the mean can step just outside the members' box.
        out_pts.push(Point3::new(
            c.x.clamp(lo.x, hi.x),
            c.y.clamp(lo.y, hi.y),
            c.z.clamp(lo.z, hi.z),
        ));

        if let Some(f) = feat {
            let base = out_feat.len();
            out_feat.resize(base + f.cols(), 0.0);
            for &i in members {
                for (o, v) in out_feat[base..].iter_mut().zip(f.row(i)) {
                    *o += v;
                }
            }
            for o in &mut out_feat[base..] {
                *o *= inv;
            }
        }

        if let Some(l) = labels {
            votes.clear();
            for &i in members {
                match votes.iter_mut().find(|(c, _)| *c == l[i]) {
                    Some((_, n)) => *n += 1,
                    None => votes.push((l[i], 1)),
                }
            }
            let winner = votes
                .iter()
                .filter(|(c, _)| *c != IGNORE_LABEL)
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map_or(IGNORE_LABEL, |(c, _)| *c);
            out_labels.push(winner);
        }
        start = end;
    }

    let n = out_pts.len();
    let mut out = PointCloud::new(out_pts)?;
    if let Some(f) = feat {
        out = out.with_features(Matrix::from_vec(n, f.cols(), out_feat)?)?;
    }
    if labels.is_some() {
        out = out.with_labels(out_labels)?;
    }
    Ok(out)
}
