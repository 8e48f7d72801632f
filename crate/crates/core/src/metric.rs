//! Hausdorff distances, shortest-distance sets and the sparse shortest
//! distance matrix that feeds the convolution layer.
//!
//! Distances between a neighborhood `Q` (m points) and a kernel `G` (n points)
//! are kept as two multisets: `d_q[i] = min_j |q_i - g_j|` and
//! `d_g[j] = min_i |q_i - g_j|`. A distributive function folded over their
//! union gives the Hausdorff distance (`Max`), its cumulative variant (`Sum`)
//! or the closest-pair distance (`Min`).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::geometry::{Point3, PointCloud, SpatialGrid};
use crate::kernel::{scale_kernel, KernelPrior};
use crate::{par, Error, Result};

/// Aggregator `f` with `f({f(A)} ∪ {f(B)}) = f(A ∪ B)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DistributiveFn {
    Max,
    Min,
    Sum,
}

impl DistributiveFn {
    pub const ALL: [DistributiveFn; 3] = [DistributiveFn::Max, DistributiveFn::Min, DistributiveFn::Sum];

    /// Folds a multiset. `Sum` accumulates in ascending order so the result
    /// does not depend on element order.
    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            DistributiveFn::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            DistributiveFn::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
            DistributiveFn::Sum => {
                let mut sorted = values.to_vec();
                sorted.sort_unstable_by(f64::total_cmp);
                sorted.iter().sum()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistributiveFn::Max => "max",
            DistributiveFn::Min => "min",
            DistributiveFn::Sum => "sum",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            DistributiveFn::Max => 0,
            DistributiveFn::Min => 1,
            DistributiveFn::Sum => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(DistributiveFn::Max),
            1 => Ok(DistributiveFn::Min),
            2 => Ok(DistributiveFn::Sum),
            _ => Err(Error::invalid(alloc::format!(
                "unknown distributive function code {code}"
            ))),
        }
    }
}

impl fmt::Display for DistributiveFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistributiveFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(DistributiveFn::Max),
            "min" => Ok(DistributiveFn::Min),
            "sum" => Ok(DistributiveFn::Sum),
            other => Err(Error::invalid(alloc::format!(
                "unknown distributive function '{other}'"
            ))),
        }
    }
}

/// Which point pairs populate the distance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DistanceMatrixKind {
    /// Only pairs realizing a shortest distance (at most n + m entries).
    #[default]
    Shortest,
    /// Every kernel/neighbor pair (n * m entries).
    Dense,
}

impl DistanceMatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            DistanceMatrixKind::Shortest => "shortest",
            DistanceMatrixKind::Dense => "dense",
        }
    }
}

/// Per-point shortest distances between a neighborhood and a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestDistanceSet {
    /// `d_g[j]`: distance from kernel point j to the neighborhood.
    pub d_g: Vec<f64>,
    /// Neighbor realizing `d_g[j]`.
    pub g_arg: Vec<usize>,
    /// `d_q[i]`: distance from neighbor i to the kernel.
    pub d_q: Vec<f64>,
    /// Kernel point realizing `d_q[i]`.
    pub q_arg: Vec<usize>,
}

impl ShortestDistanceSet {
    pub fn kernel_len(&self) -> usize {
        self.d_g.len()
    }

    pub fn neighbor_len(&self) -> usize {
        self.d_q.len()
    }

    /// `f` over the multiset union `d_g ∪ d_q`.
    pub fn aggregate(&self, f: DistributiveFn) -> f64 {
        let mut all = Vec::with_capacity(self.d_g.len() + self.d_q.len());
        all.extend_from_slice(&self.d_g);
        all.extend_from_slice(&self.d_q);
        f.apply(&all)
    }
}

/// Computes both shortest-distance multisets with their argmins (ties to the
/// lowest index).
pub fn shortest_distance_set(q: &[Point3], g: &[Point3]) -> Result<ShortestDistanceSet> {
    if q.is_empty() || g.is_empty() {
        return Err(Error::invalid("shortest distance set needs two non-empty point sets"));
    }
    let mut d_q = vec![f64::INFINITY; q.len()];
    let mut q_arg = vec![0; q.len()];
    let mut d_g = vec![f64::INFINITY; g.len()];
    let mut g_arg = vec![0; g.len()];
    for (i, qi) in q.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            let d = qi.distance(gj);
            if d < d_q[i] {
                d_q[i] = d;
                q_arg[i] = j;
            }
            if d < d_g[j] {
                d_g[j] = d;
                g_arg[j] = i;
            }
        }
    }
    Ok(ShortestDistanceSet { d_g, g_arg, d_q, q_arg })
}

/// `h(A, B) = max_{a in A} min_{b in B} |a - b|`.
pub fn directed_hausdorff(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("directed Hausdorff distance of an empty set"));
    }
    Ok(a.iter()
        .map(|p| b.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// `f` folded over the union of both shortest-distance multisets.
pub fn hausdorff(a: &[Point3], b: &[Point3], f: DistributiveFn) -> Result<f64> {
    Ok(shortest_distance_set(a, b)?.aggregate(f))
}

/// One stored matrix entry: kernel point `row`, neighbor `col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixEntry {
    pub row: u32,
    pub col: u32,
    pub value: f64,
}

/// Sparse n x m matrix (rows = kernel points, columns = neighbors).
///
/// Presence is explicit: a stored 0.0 is distinct from an absent entry.
/// Entries are sorted by `(row, col)` and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestDistanceMatrix {
    n: usize,
    m: usize,
    radius: f64,
    entries: Vec<MatrixEntry>,
    similarity: bool,
}

impl ShortestDistanceMatrix {
    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[MatrixEntry] {
        &self.entries
    }

    /// Whether values have been mapped to similarities `1 - d / r`.
    pub fn is_similarity(&self) -> bool {
        self.similarity
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries
            .binary_search_by(|e| (e.row as usize, e.col as usize).cmp(&(row, col)))
            .ok()
            .map(|k| self.entries[k].value)
    }

    /// Dense n x m copy with zeros where entries are absent.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.m]; self.n];
        for e in &self.entries {
            out[e.row as usize][e.col as usize] = e.value;
        }
        out
    }
}

/// Stores every pair that realizes an entry of `d_q` or `d_g`, once.
pub fn build_dmin(s: &ShortestDistanceSet, n: usize, m: usize, radius: f64) -> Result<ShortestDistanceMatrix> {
    if s.d_g.len() != n || s.g_arg.len() != n || s.d_q.len() != m || s.q_arg.len() != m {
        return Err(Error::Internal(alloc::format!(
            "shortest distance set does not match a {n} x {m} matrix"
        )));
    }
    let mut entries = Vec::with_capacity(n + m);
    for (i, (&j, &d)) in s.q_arg.iter().zip(&s.d_q).enumerate() {
        if j >= n {
            return Err(Error::Internal(alloc::format!("kernel index {j} out of range")));
        }
        entries.push(MatrixEntry {
            row: j as u32,
            col: i as u32,
            value: d,
        });
    }
    for (j, (&i, &d)) in s.g_arg.iter().zip(&s.d_g).enumerate() {
        if i >= m {
            return Err(Error::Internal(alloc::format!("neighbor index {i} out of range")));
        }
        entries.push(MatrixEntry {
            row: j as u32,
            col: i as u32,
            value: d,
        });
    }
    entries.sort_by_key(|e| (e.row, e.col));
    entries.dedup_by_key(|e| (e.row, e.col));
    Ok(ShortestDistanceMatrix {
        n,
        m,
        radius,
        entries,
        similarity: false,
    })
}

/// All-pairs distance matrix between kernel `g` and neighbors `q`.
pub fn build_dense(q: &[Point3], g: &[Point3], radius: f64) -> ShortestDistanceMatrix {
    let mut entries = Vec::with_capacity(q.len() * g.len());
    for (j, gj) in g.iter().enumerate() {
        for (i, qi) in q.iter().enumerate() {
            entries.push(MatrixEntry {
                row: j as u32,
                col: i as u32,
                value: qi.distance(gj),
            });
        }
    }
    ShortestDistanceMatrix {
        n: g.len(),
        m: q.len(),
        radius,
        entries,
        similarity: false,
    }
}

/// Maps every stored distance `d` to the similarity `1 - d / r`, clamped to
/// `[-1, 1]`. Absent entries stay absent.
pub fn normalize_similarity(d: &ShortestDistanceMatrix) -> Result<ShortestDistanceMatrix> {
    if d.similarity {
        return Err(Error::invalid("matrix already holds similarities"));
    }
    let r = d.radius;
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid("normalization radius must be finite and > 0"));
    }
    let bound = 2.0 * r * (1.0 + 1e-12);
    if let Some(e) = d.entries.iter().find(|e| !(e.value >= 0.0 && e.value <= bound)) {
        return Err(Error::invalid(alloc::format!(
            "distance {} at ({}, {}) is outside [0, 2r]",
            e.value,
            e.row,
            e.col
        )));
    }
    let inv = 1.0 / r;
    let entries = d
        .entries
        .iter()
        .map(|e| MatrixEntry {
            value: (1.0 - e.value * inv).clamp(-1.0, 1.0),
            ..*e
        })
        .collect();
    Ok(ShortestDistanceMatrix {
        entries,
        similarity: true,
        ..*d
    })
}

/// Normalized similarity matrix between neighbor offsets (already centered on
/// the query point) and a kernel already scaled to `radius`.
pub fn similarity_matrix(
    offsets: &[Point3],
    kernel_points: &[Point3],
    radius: f64,
    kind: DistanceMatrixKind,
) -> Result<ShortestDistanceMatrix> {
    let raw = match kind {
        DistanceMatrixKind::Shortest => {
            let s = shortest_distance_set(offsets, kernel_points)?;
            build_dmin(&s, kernel_points.len(), offsets.len(), radius)?
        }
        DistanceMatrixKind::Dense => {
            if offsets.is_empty() || kernel_points.is_empty() {
                return Err(Error::invalid("distance matrix needs two non-empty point sets"));
            }
            build_dense(offsets, kernel_points, radius)
        }
    };
    normalize_similarity(&raw)
}

/// Value used for query points whose neighborhood is empty.
pub const EMPTY_RESPONSE: f64 = 1.0;

/// Normalized Hausdorff response of every cloud point against `kernel`.
///
/// Each point's neighborhood (radius `r`, re-centered on the point) is
/// compared with the kernel scaled to `r`. `Max`/`Min` results are divided
/// by `r`; `Sum` results by `r * (|Q| + n)`.
pub fn response_map(cloud: &PointCloud, kernel: &KernelPrior, r: f64, f: DistributiveFn) -> Result<Vec<f64>> {
    response_map_at(cloud, cloud.points(), kernel, r, f)
}

/// [`response_map`] evaluated at arbitrary query locations over `support`.
pub fn response_map_at(
    support: &PointCloud,
    queries: &[Point3],
    kernel: &KernelPrior,
    r: f64,
    f: DistributiveFn,
) -> Result<Vec<f64>> {
    if support.is_empty() {
        return Err(Error::invalid("response map of an empty cloud"));
    }
    let g = scale_kernel(kernel, r)?;
    if let Some(q) = queries.iter().find(|q| !q.is_finite()) {
        return Err(Error::invalid(alloc::format!("query {q:?} is not finite")));
    }
    let grid = SpatialGrid::new(support.points(), r)?;
    let points = support.points();
    let out = par::map(queries.len(), |k| {
        let center = queries[k];
        let mut offsets = Vec::new();
        grid.for_each_within(center, r, |i| offsets.push((i, points[i] - center)));
        if offsets.is_empty() {
            return EMPTY_RESPONSE;
        }
        offsets.sort_unstable_by_key(|&(i, _)| i);
        let q: Vec<Point3> = offsets.into_iter().map(|(_, p)| p).collect();
        let s = shortest_distance_set(&q, &g).expect("both sets are non-empty");
        let h = s.aggregate(f);
        match f {
            DistributiveFn::Sum => h / (r * (q.len() + g.len()) as f64),
            _ => h / r,
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelShape;

    fn pts(v: &[[f64; 3]]) -> Vec<Point3> {
        v.iter().map(|&p| p.into()).collect()
    }

    /// Independent double loop over the definition.
    fn brute_hausdorff(a: &[Point3], b: &[Point3], f: DistributiveFn) -> f64 {
        let mut all = Vec::new();
        for p in a {
            all.push(b.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min));
        }
        for q in b {
            all.push(a.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min));
        }
        match f {
            DistributiveFn::Max => all.iter().copied().fold(f64::MIN, f64::max),
            DistributiveFn::Min => all.iter().copied().fold(f64::MAX, f64::min),
            DistributiveFn::Sum => all.iter().sum(),
        }
    }

    #[test]
    fn directed_examples() {
        let a = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = pts(&[[0.0, 0.0, 0.0]]);
        assert_eq!(directed_hausdorff(&a, &b).unwrap(), 1.0);
        assert_eq!(directed_hausdorff(&b, &a).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&a, &a).unwrap(), 0.0);
        assert!(directed_hausdorff(&[], &a).is_err());
    }

    #[test]
    fn symmetric_examples() {
        let a = pts(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let b = pts(&[[0.0, 0.0, 0.0]]);
        assert_eq!(brute_hausdorff(&a, &b, DistributiveFn::Max), 1.0);
        assert_eq!(hausdorff(&a, &b, DistributiveFn::Max).unwrap(), 1.0);
        assert_eq!(hausdorff(&a, &b, DistributiveFn::Sum).unwrap(), 1.0);
        for f in DistributiveFn::ALL {
            assert_eq!(hausdorff(&a, &a, f).unwrap(), 0.0);
        }
        assert!(hausdorff(&a, &[], DistributiveFn::Sum).is_err());
    }

    #[test]
    fn shortest_set_example() {
        let q = pts(&[[0.0, 0.0, 0.0]]);
        let g = pts(&[[1.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        let s = shortest_distance_set(&q, &g).unwrap();
        assert_eq!((s.d_q.clone(), s.q_arg.clone()), (vec![1.0], vec![0]));
        assert_eq!((s.d_g.clone(), s.g_arg.clone()), (vec![1.0, 3.0], vec![0, 0]));

        let d = build_dmin(&s, 2, 1, 4.0).unwrap();
        assert_eq!(d.nnz(), 2);
        assert_eq!(d.get(0, 0), Some(1.0));
        assert_eq!(d.get(1, 0), Some(3.0));
    }

    #[test]
    fn coincident_singletons_keep_a_zero_entry() {
        let q = pts(&[[0.2, 0.0, 0.0]]);
        let s = shortest_distance_set(&q, &q).unwrap();
        assert_eq!((s.d_q[0], s.d_g[0]), (0.0, 0.0));
        assert_eq!((s.q_arg[0], s.g_arg[0]), (0, 0));
        let d = build_dmin(&s, 1, 1, 1.0).unwrap();
        assert_eq!(d.nnz(), 1);
        assert_eq!(d.get(0, 0), Some(0.0));
        let sim = normalize_similarity(&d).unwrap();
        assert_eq!(sim.get(0, 0), Some(1.0));
    }

    #[test]
    fn small_sparsity_bound() {
        let q = pts(&[[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [-0.2, 0.4, 0.1]]);
        let g = pts(&[[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]);
        let s = shortest_distance_set(&q, &g).unwrap();
        assert!(build_dmin(&s, 2, 3, 1.0).unwrap().nnz() <= 5);
        assert!(build_dmin(&s, 3, 3, 1.0).is_err());
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        let q = pts(&[[0.0, 0.0, 0.0]]);
        let g = pts(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let s = shortest_distance_set(&q, &g).unwrap();
        assert_eq!(s.q_arg, vec![0]);
    }

    #[test]
    fn normalization_values() {
        let q = pts(&[[0.0, 0.0, 0.0]]);
        // stored values 0.5r, r and sub-r
        let g = pts(&[[0.5, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let s = shortest_distance_set(&q, &g).unwrap();
        let sim = normalize_similarity(&build_dmin(&s, 2, 1, 1.0).unwrap()).unwrap();
        assert_eq!(sim.get(0, 0), Some(0.5));
        assert_eq!(sim.get(1, 0), Some(0.0));
        assert!(normalize_similarity(&sim).is_err());
    }

    #[test]
    fn normalization_rejects_out_of_range_values() {
        let q = pts(&[[0.0, 0.0, 0.0]]);
        let g = pts(&[[3.0, 0.0, 0.0]]);
        let s = shortest_distance_set(&q, &g).unwrap();
        assert!(normalize_similarity(&build_dmin(&s, 1, 1, 1.0).unwrap()).is_err());
        assert!(normalize_similarity(&build_dmin(&s, 1, 1, 0.0).unwrap()).is_err());
    }

    #[test]
    fn dense_matrix_is_full() {
        let q = pts(&[[0.0, 0.0, 0.0], [0.3, 0.1, 0.0], [-0.2, 0.4, 0.1]]);
        let g = pts(&[[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]]);
        let d = build_dense(&q, &g, 1.0);
        assert_eq!(d.nnz(), 6);
        assert_eq!(d.get(1, 2), Some(q[2].distance(&g[1])));
    }

    #[test]
    fn response_of_kernel_against_itself_is_zero() {
        let kernel = KernelPrior::standard(KernelShape::Sphere);
        let r = 0.7;
        // Pulled just inside the ball so rounding cannot drop boundary points.
        let cloud = PointCloud::new(kernel.scaled(r * (1.0 - 1e-9)).unwrap()).unwrap();
        for f in DistributiveFn::ALL {
            let resp = response_map_at(&cloud, &[Point3::ORIGIN], &kernel, r, f).unwrap();
            assert!(resp[0].abs() < 1e-8, "{f}: {}", resp[0]);
        }
    }

    #[test]
    fn isolated_queries_get_the_sentinel() {
        let kernel = KernelPrior::standard(KernelShape::Line);
        let cloud = PointCloud::new(pts(&[[0.0, 0.0, 0.0]])).unwrap();
        let far = Point3::new(10.0, 0.0, 0.0);
        let resp = response_map_at(&cloud, &[far], &kernel, 1.0, DistributiveFn::Max).unwrap();
        assert_eq!(resp, vec![EMPTY_RESPONSE]);
        // a lone point only sees itself: the line endpoints sit at distance r
        let resp = response_map(&cloud, &kernel, 1.0, DistributiveFn::Max).unwrap();
        assert_eq!(resp, vec![1.0]);
        assert!(response_map(&PointCloud::default(), &kernel, 1.0, DistributiveFn::Max).is_err());
    }

    #[test]
    fn distributive_law_on_small_multisets() {
        let a = [0.3, 1.5, 0.2];
        let b = [0.9, 0.1];
        let ab = [0.3, 1.5, 0.2, 0.9, 0.1];
        for f in DistributiveFn::ALL {
            assert_eq!(f.apply(&[f.apply(&a), f.apply(&b)]), f.apply(&ab), "{f}");
        }
    }
}
