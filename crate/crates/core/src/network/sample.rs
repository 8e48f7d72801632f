use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use super::config::NetworkConfig;
use crate::geometry::{grid_subsample, Point3, PointCloud, SpatialGrid};
use crate::kernel::{generate_kernel, KernelPrior, OVERSAMPLE_FACTOR};
use crate::metric::similarity_matrix;
use crate::{par, Error, Matrix, Result};

/// Similarity entries of one convolution, for every query point.
#[derive(Debug, Clone)]
pub(crate) struct ConvGeometry {
    pub n_support: usize,
    /// CSR offsets into `entries`, one run per query.
    pub offsets: Vec<usize>,
    pub entries: Vec<GeomEntry>,
    /// Entries regrouped by support point: CSR offsets into `by_support`.
    pub t_offsets: Vec<usize>,
    pub by_support: Vec<SupportEntry>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GeomEntry {
    pub row: u32,
    pub support: u32,
    pub value: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SupportEntry {
    pub query: u32,
    pub row: u32,
    pub value: f64,
}

impl ConvGeometry {
    pub fn n_queries(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn query_entries(&self, q: usize) -> &[GeomEntry] {
        &self.entries[self.offsets[q]..self.offsets[q + 1]]
    }

    pub fn support_entries(&self, s: usize) -> &[SupportEntry] {
        &self.by_support[self.t_offsets[s]..self.t_offsets[s + 1]]
    }

    fn build(
        queries: &[Point3],
        support: &[Point3],
        kernel_points: &[Point3],
        radius: f64,
        cfg: &NetworkConfig,
    ) -> Result<Self> {
        let grid = SpatialGrid::new(support, radius)?;
        let per_query: Vec<Result<Vec<GeomEntry>>> = par::map(queries.len(), |q| {
            let nb = grid.radius_neighbors(queries[q], radius)?;
            if nb.is_empty() {
                return Ok(Vec::new());
            }
            let offsets = nb.offsets(support);
            let sim = similarity_matrix(&offsets, kernel_points, radius, cfg.distance_matrix)?;
            Ok(sim
                .entries()
                .iter()
                .map(|e| GeomEntry {
                    row: e.row,
                    support: nb.indices[e.col as usize] as u32,
                    value: e.value,
                })
                .collect())
        });
        let mut offsets = Vec::with_capacity(queries.len() + 1);
        offsets.push(0);
        let mut entries = Vec::new();
        for q in per_query {
            entries.extend(q?);
            offsets.push(entries.len());
        }

        let mut counts = vec![0usize; support.len() + 1];
        for e in &entries {
            counts[e.support as usize + 1] += 1;
        }
        for s in 0..support.len() {
            counts[s + 1] += counts[s];
        }
        let t_offsets = counts.clone();
        let mut fill = counts;
        let mut by_support = vec![
            SupportEntry {
                query: 0,
                row: 0,
                value: 0.0
            };
            entries.len()
        ];
        for q in 0..queries.len() {
            for e in &entries[offsets[q]..offsets[q + 1]] {
                let slot = &mut fill[e.support as usize];
                by_support[*slot] = SupportEntry {
                    query: q as u32,
                    row: e.row,
                    value: e.value,
                };
                *slot += 1;
            }
        }
        Ok(Self {
            n_support: support.len(),
            offsets,
            entries,
            t_offsets,
            by_support,
        })
    }
}

/// A network input with every geometry-only quantity precomputed: level
/// point sets, similarity matrices for each convolution and kernel, and the
/// nearest-neighbor maps between levels.
#[derive(Debug, Clone)]
pub struct Sample {
    pub(crate) levels: Vec<Vec<Point3>>,
    pub(crate) geoms: Vec<ConvGeometry>,
    /// `conv_geom[l][c][k]`: geometry index for block l, convolution c, kernel k.
    pub(crate) conv_geom: Vec<[Vec<usize>; 2]>,
    /// For level l >= 1: nearest level l-1 point of every level l point.
    pub(crate) pool_index: Vec<Vec<u32>>,
    /// For level l < depth-1: nearest level l+1 point of every level l point.
    pub(crate) up_index: Vec<Vec<u32>>,
    pub(crate) input: Matrix,
    pub(crate) labels: Vec<i32>,
}

impl Sample {
    pub fn new(cfg: &NetworkConfig, cloud: &PointCloud) -> Result<Self> {
        cfg.validate()?;
        if cloud.is_empty() {
            return Err(Error::invalid("network input cloud is empty"));
        }
        let input = match cloud.features() {
            Some(f) if f.cols() == cfg.input_channels => f.clone(),
            _ if cfg.input_channels == 1 => Matrix::filled(cloud.len(), 1, 1.0),
            other => {
                return Err(Error::DimensionMismatch {
                    what: "input feature channels",
                    expected: cfg.input_channels,
                    found: other.map_or(0, Matrix::cols),
                })
            }
        };
        let labels = cloud
            .labels()
            .map(<[i32]>::to_vec)
            .unwrap_or_else(|| vec![crate::geometry::IGNORE_LABEL; cloud.len()]);

        let mut levels = vec![cloud.points().to_vec()];
        for l in 1..cfg.depth {
            let prev = PointCloud::new(levels[l - 1].clone())?;
            levels.push(grid_subsample(&prev, cfg.cell(l))?.points().to_vec());
        }

        let kernels: Vec<KernelPrior> = cfg
            .kernels
            .iter()
            .map(|&s| generate_kernel(s, cfg.kernel_points, cfg.kernel_points * OVERSAMPLE_FACTOR))
            .collect::<Result<_>>()?;

        let mut geoms = Vec::new();
        let mut memo: HashMap<(usize, usize, usize), usize> = HashMap::new();
        let mut conv_geom = Vec::with_capacity(cfg.depth);
        for l in 0..cfg.depth {
            let r = cfg.radius(l);
            let mut pair: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for (c, slot) in pair.iter_mut().enumerate() {
                let support_level = if c == 0 && l > 0 { l - 1 } else { l };
                for (k, kernel) in kernels.iter().enumerate() {
                    let key = (l, support_level, k);
                    let idx = match memo.get(&key) {
                        Some(&i) => i,
                        None => {
                            let g =
                                ConvGeometry::build(&levels[l], &levels[support_level], &kernel.scaled(r)?, r, cfg)?;
                            geoms.push(g);
                            memo.insert(key, geoms.len() - 1);
                            geoms.len() - 1
                        }
                    };
                    slot.push(idx);
                }
            }
            conv_geom.push(pair);
        }

        let nearest_map = |from: &[Point3], to: &[Point3], cell: f64| -> Result<Vec<u32>> {
            let grid = SpatialGrid::new(to, cell)?;
            Ok(par::map(from.len(), |i| {
                grid.nearest(from[i]).expect("target level is non-empty") as u32
            }))
        };
        let mut pool_index = vec![Vec::new()];
        for l in 1..cfg.depth {
            pool_index.push(nearest_map(&levels[l], &levels[l - 1], cfg.cell(l))?);
        }
        let mut up_index = Vec::new();
        for l in 0..cfg.depth.saturating_sub(1) {
            up_index.push(nearest_map(&levels[l], &levels[l + 1], cfg.cell(l + 1))?);
        }

        Ok(Self {
            levels,
            geoms,
            conv_geom,
            pool_index,
            up_index,
            input,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.levels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn level_points(&self, level: usize) -> &[Point3] {
        &self.levels[level]
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Stored similarity entries of the first convolution at `level`, for kernel `k`.
    pub fn matrix_nnz(&self, level: usize, k: usize) -> usize {
        self.geoms[self.conv_geom[level][0][k]].entries.len()
    }
}

/// Partitions a cloud into an xy grid of tiles whose sides are as close to
/// `size` as fits evenly over the bounding box, returning the point indices
/// of each non-empty tile in row-major tile order. A non-positive size
/// yields a single tile.
pub fn split_tiles(cloud: &PointCloud, size: f64) -> Vec<Vec<usize>> {
    let points = cloud.points();
    if !(size > 0.0) || points.is_empty() {
        return vec![(0..points.len()).collect()];
    }
    let axis = |get: fn(&Point3) -> f64| {
        let lo = points.iter().map(get).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
        let count = (libm::round((hi - lo) / size) as usize).max(1);
        (lo, (hi - lo) / count as f64, count)
    };
    let (x0, wx, nx) = axis(|p| p.x);
    let (y0, wy, ny) = axis(|p| p.y);
    let bin = |v: f64, lo: f64, w: f64, n: usize| {
        if w > 0.0 {
            ((libm::floor((v - lo) / w)) as usize).min(n - 1)
        } else {
            0
        }
    };
    let mut tiles: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (i, p) in points.iter().enumerate() {
        tiles[bin(p.y, y0, wy, ny) * nx + bin(p.x, x0, wx, nx)].push(i);
    }
    tiles.retain(|t| !t.is_empty());
    tiles
}
