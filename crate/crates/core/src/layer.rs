//! The learnable Hausdorff point convolution layer.
//!
//! For one query point with neighborhood `Q` (m points, re-centered on the
//! query) and kernel `G` (n points scaled to the layer radius):
//!
//! ```text
//! S    = 1 - D_min / r          sparse n x m similarity matrix
//! A    = S · F_in               n x c_in
//! h_j  = A_j · W_j              c_out, one per kernel point
//! F_out = f(h_1, ..., h_n)      elementwise over the kernel axis
//! ```
//!
//! `S` depends only on geometry, so gradients flow into `W` and `F_in` and
//! treat `S` as a constant.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Neighborhood, Point3};
use crate::kernel::KernelPrior;
use crate::metric::{similarity_matrix, DistanceMatrixKind, DistributiveFn, MatrixEntry, ShortestDistanceMatrix};
use crate::{Error, Matrix, Result};

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)
}

/// Half-width of the uniform initialization, `sqrt(6 / (n * c_in + c_out))`.
pub fn init_bound(n: usize, c_in: usize, c_out: usize) -> f64 {
    libm::sqrt(6.0 / (n * c_in + c_out).max(1) as f64)
}

/// Zero-mean uniform weights in `[-b, b]` with `b = init_bound(n, c_in, c_out)`.
pub fn init_weights(n: usize, c_in: usize, c_out: usize, seed: u64) -> Vec<f64> {
    let b = init_bound(n, c_in, c_out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * c_in * c_out).map(|_| rng.random_range(-b..=b)).collect()
}

/// Forward-pass record needed by [`HpcLayer::backward`].
#[derive(Debug, Clone)]
pub struct LayerCache {
    param_id: u64,
    m: usize,
    similarity: Option<ShortestDistanceMatrix>,
    a: Vec<f64>,
    h: Vec<f64>,
    routing: Vec<u32>,
}

impl LayerCache {
    /// Normalized similarity matrix, absent for empty neighborhoods.
    pub fn similarity(&self) -> Option<&ShortestDistanceMatrix> {
        self.similarity.as_ref()
    }

    /// `A = S · F_in`, row-major n x c_in.
    pub fn aggregated(&self) -> &[f64] {
        &self.a
    }

    /// Per-kernel-point contributions `h_j`, row-major n x c_out.
    pub fn contributions(&self) -> &[f64] {
        &self.h
    }

    /// For `Max`/`Min`: the kernel point selected for each output channel.
    pub fn routing(&self) -> &[u32] {
        &self.routing
    }
}

#[derive(Debug, Clone)]
pub struct HpcLayer {
    kernel: KernelPrior,
    kernel_points: Vec<Point3>,
    radius: f64,
    f: DistributiveFn,
    kind: DistanceMatrixKind,
    c_in: usize,
    c_out: usize,
    weights: Vec<f64>,
    id: u64,
}

impl PartialEq for HpcLayer {
    fn eq(&self, other: &Self) -> bool {
        self.kernel == other.kernel
            && self.radius == other.radius
            && self.f == other.f
            && self.kind == other.kind
            && self.c_in == other.c_in
            && self.c_out == other.c_out
            && self.weights == other.weights
    }
}

impl HpcLayer {
    /// Layer with weights drawn by [`init_weights`].
    pub fn new(
        kernel: KernelPrior,
        radius: f64,
        f: DistributiveFn,
        c_in: usize,
        c_out: usize,
        seed: u64,
    ) -> Result<Self> {
        let w = init_weights(kernel.len(), c_in, c_out, seed);
        Self::with_weights(kernel, radius, f, c_in, c_out, w)
    }

    pub fn with_weights(
        kernel: KernelPrior,
        radius: f64,
        f: DistributiveFn,
        c_in: usize,
        c_out: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let kernel_points = kernel.scaled(radius)?;
        let expected = kernel.len() * c_in * c_out;
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "layer weights",
                expected,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("layer weights must be finite"));
        }
        Ok(Self {
            kernel,
            kernel_points,
            radius,
            f,
            kind: DistanceMatrixKind::Shortest,
            c_in,
            c_out,
            weights,
            id: fresh_id(),
        })
    }

    /// Switches between the sparse shortest-distance matrix and the dense
    /// all-pairs matrix.
    pub fn with_matrix_kind(mut self, kind: DistanceMatrixKind) -> Self {
        self.kind = kind;
        self.id = fresh_id();
        self
    }

    pub fn kernel(&self) -> &KernelPrior {
        &self.kernel
    }

    /// Kernel points at the layer radius.
    pub fn kernel_points(&self) -> &[Point3] {
        &self.kernel_points
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn distributive_fn(&self) -> DistributiveFn {
        self.f
    }

    pub fn matrix_kind(&self) -> DistanceMatrixKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.kernel_points.len()
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    /// Row-major `n x c_in x c_out`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mutable weights. Invalidates every cache produced so far.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.id = fresh_id();
        &mut self.weights
    }

    /// Similarity matrix between re-centered neighbor offsets and this layer's kernel.
    pub fn similarity(&self, offsets: &[Point3]) -> Result<ShortestDistanceMatrix> {
        similarity_matrix(offsets, &self.kernel_points, self.radius, self.kind)
    }

    /// Forward pass on a neighborhood of `points`.
    pub fn forward_neighborhood(
        &self,
        points: &[Point3],
        nb: &Neighborhood,
        features: &Matrix,
    ) -> Result<(Vec<f64>, LayerCache)> {
        self.forward(&nb.offsets(points), features)
    }

    /// Forward pass given neighbor offsets relative to the query point and
    /// their features (one row per offset).
    pub fn forward(&self, offsets: &[Point3], features: &Matrix) -> Result<(Vec<f64>, LayerCache)> {
        if features.rows() != offsets.len() {
            return Err(Error::DimensionMismatch {
                what: "neighbor feature rows",
                expected: offsets.len(),
                found: features.rows(),
            });
        }
        if features.cols() != self.c_in {
            return Err(Error::DimensionMismatch {
                what: "input channels",
                expected: self.c_in,
                found: features.cols(),
            });
        }
        if offsets.is_empty() {
            let cache = LayerCache {
                param_id: self.id,
                m: 0,
                similarity: None,
                a: Vec::new(),
                h: Vec::new(),
                routing: Vec::new(),
            };
            return Ok((vec![0.0; self.c_out], cache));
        }
        let sim = self.similarity(offsets)?;
        let n = self.n();
        let mut a = vec![0.0; n * self.c_in];
        accumulate(sim.entries(), |i| features.row(i), self.c_in, &mut a);
        let mut h = vec![0.0; n * self.c_out];
        let mut out = vec![0.0; self.c_out];
        let mut routing = vec![0u32; if self.f == DistributiveFn::Sum { 0 } else { self.c_out }];
        self.contract(&a, Some(&mut h), &mut out, &mut routing);
        let cache = LayerCache {
            param_id: self.id,
            m: offsets.len(),
            similarity: Some(sim),
            a,
            h,
            routing,
        };
        Ok((out, cache))
    }

    /// Gradients with respect to the weights (`n x c_in x c_out`) and the
    /// input features (`m x c_in`).
    pub fn backward(&self, cache: &LayerCache, features: &Matrix, grad_out: &[f64]) -> Result<(Vec<f64>, Matrix)> {
        if cache.param_id != self.id {
            return Err(Error::StaleCache);
        }
        if features.rows() != cache.m || features.cols() != self.c_in {
            return Err(Error::StaleCache);
        }
        if grad_out.len() != self.c_out {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: self.c_out,
                found: grad_out.len(),
            });
        }
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_in = Matrix::zeros(cache.m, self.c_in);
        let Some(sim) = &cache.similarity else {
            return Ok((grad_w, grad_in));
        };
        let mut grad_a = vec![0.0; self.n() * self.c_in];
        self.backward_contract(&cache.a, &cache.routing, grad_out, &mut grad_w, &mut grad_a);
        for e in sim.entries() {
            let ga = &grad_a[e.row as usize * self.c_in..(e.row as usize + 1) * self.c_in];
            for (g, &v) in grad_in.row_mut(e.col as usize).iter_mut().zip(ga) {
                *g += e.value * v;
            }
        }
        Ok((grad_w, grad_in))
    }

    /// `F_out = f_j(A_j W_j)`. Fills `h` when given and records the routing for
    /// `Max`/`Min`.
    pub(crate) fn contract(&self, a: &[f64], mut h: Option<&mut [f64]>, out: &mut [f64], routing: &mut [u32]) {
        let (n, c_in, c_out) = (self.n(), self.c_in, self.c_out);
        match self.f {
            DistributiveFn::Sum => {
                out.fill(0.0);
                for j in 0..n {
                    let hj_slot = h.as_deref_mut().map(|h| &mut h[j * c_out..(j + 1) * c_out]);
                    match hj_slot {
                        Some(hj) => {
                            hj.fill(0.0);
                            row_times_slice(
                                &a[j * c_in..(j + 1) * c_in],
                                &self.weights[j * c_in * c_out..],
                                c_out,
                                hj,
                            );
                            for (o, v) in out.iter_mut().zip(hj.iter()) {
                                *o += v;
                            }
                        }
                        None => {
                            row_times_slice(
                                &a[j * c_in..(j + 1) * c_in],
                                &self.weights[j * c_in * c_out..],
                                c_out,
                                out,
                            );
                        }
                    }
                }
            }
            DistributiveFn::Max | DistributiveFn::Min => {
                let pick_max = self.f == DistributiveFn::Max;
                let mut scratch = vec![0.0; c_out];
                for j in 0..n {
                    scratch.fill(0.0);
                    row_times_slice(
                        &a[j * c_in..(j + 1) * c_in],
                        &self.weights[j * c_in * c_out..],
                        c_out,
                        &mut scratch,
                    );
                    if let Some(h) = h.as_deref_mut() {
                        h[j * c_out..(j + 1) * c_out].copy_from_slice(&scratch);
                    }
                    for o in 0..c_out {
                        let better = j == 0
                            || if pick_max {
                                scratch[o] > out[o]
                            } else {
                                scratch[o] < out[o]
                            };
                        if better {
                            out[o] = scratch[o];
                            routing[o] = j as u32;
                        }
                    }
                }
            }
        }
    }

    /// Accumulates `dW` and writes `dA` for one query.
    pub(crate) fn backward_contract(
        &self,
        a: &[f64],
        routing: &[u32],
        grad_out: &[f64],
        grad_w: &mut [f64],
        grad_a: &mut [f64],
    ) {
        let (n, c_in, c_out) = (self.n(), self.c_in, self.c_out);
        match self.f {
            DistributiveFn::Sum => {
                for j in 0..n {
                    for ci in 0..c_in {
                        let base = (j * c_in + ci) * c_out;
                        let w = &self.weights[base..base + c_out];
                        let gw = &mut grad_w[base..base + c_out];
                        let av = a[j * c_in + ci];
                        let mut acc = 0.0;
                        for o in 0..c_out {
                            acc += w[o] * grad_out[o];
                            gw[o] += av * grad_out[o];
                        }
                        grad_a[j * c_in + ci] = acc;
                    }
                }
            }
            DistributiveFn::Max | DistributiveFn::Min => {
                grad_a.fill(0.0);
                for (o, &j) in routing.iter().enumerate() {
                    let j = j as usize;
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    for ci in 0..c_in {
                        let idx = (j * c_in + ci) * c_out + o;
                        grad_w[idx] += a[j * c_in + ci] * g;
                        grad_a[j * c_in + ci] += self.weights[idx] * g;
                    }
                }
            }
        }
    }
}

/// `A[row] += value * F[col]` over the stored entries.
pub(crate) fn accumulate<'f>(
    entries: &[MatrixEntry],
    feature: impl Fn(usize) -> &'f [f64],
    c_in: usize,
    a: &mut [f64],
) {
    a.fill(0.0);
    for e in entries {
        let row = &mut a[e.row as usize * c_in..(e.row as usize + 1) * c_in];
        for (acc, &x) in row.iter_mut().zip(feature(e.col as usize)) {
            *acc += e.value * x;
        }
    }
}

/// `out += x · W` where `W` is the `x.len() x c_out` block at the start of `w`.
#[inline]
fn row_times_slice(x: &[f64], w: &[f64], c_out: usize, out: &mut [f64]) {
    for (ci, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let wrow = &w[ci * c_out..(ci + 1) * c_out];
        for (o, &wv) in out.iter_mut().zip(wrow) {
            *o += xv * wv;
        }
    }
}

/// Cache of a [`MultiKernelLayer`] forward pass.
#[derive(Debug, Clone)]
pub struct MultiKernelCache {
    per_kernel: Vec<LayerCache>,
    inner_active: Vec<Vec<bool>>,
    outer_active: Vec<bool>,
}

impl MultiKernelCache {
    pub fn per_kernel(&self) -> &[LayerCache] {
        &self.per_kernel
    }

    /// `inner_active[k][o]`: whether kernel k's output passed its rectifier.
    pub fn inner_active(&self) -> &[Vec<bool>] {
        &self.inner_active
    }

    pub fn outer_active(&self) -> &[bool] {
        &self.outer_active
    }
}

/// `ReLU(sum_k ReLU(F_out(G_k)))` over K kernels sharing radius and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiKernelLayer {
    layers: Vec<HpcLayer>,
}

impl MultiKernelLayer {
    pub fn new(layers: Vec<HpcLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::invalid("multi-kernel layer needs at least one kernel"))?;
        for l in &layers[1..] {
            if l.c_in != first.c_in || l.c_out != first.c_out || l.radius != first.radius {
                return Err(Error::invalid("multi-kernel layers must share c_in, c_out and radius"));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[HpcLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [HpcLayer] {
        &mut self.layers
    }

    pub fn c_in(&self) -> usize {
        self.layers[0].c_in
    }

    pub fn c_out(&self) -> usize {
        self.layers[0].c_out
    }

    pub fn forward(&self, offsets: &[Point3], features: &Matrix) -> Result<(Vec<f64>, MultiKernelCache)> {
        let c_out = self.c_out();
        let mut sum = vec![0.0; c_out];
        let mut per_kernel = Vec::with_capacity(self.layers.len());
        let mut inner_active = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(offsets, features)?;
            let active: Vec<bool> = out.iter().map(|&v| v > 0.0).collect();
            for ((s, &v), &on) in sum.iter_mut().zip(&out).zip(&active) {
                if on {
                    *s += v;
                }
            }
            per_kernel.push(cache);
            inner_active.push(active);
        }
        let outer_active: Vec<bool> = sum.iter().map(|&v| v > 0.0).collect();
        let out = sum.iter().map(|&v| v.max(0.0)).collect();
        Ok((
            out,
            MultiKernelCache {
                per_kernel,
                inner_active,
                outer_active,
            },
        ))
    }

    /// Per-kernel weight gradients and the summed input-feature gradient.
    pub fn backward(
        &self,
        cache: &MultiKernelCache,
        features: &Matrix,
        grad_out: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Matrix)> {
        if cache.per_kernel.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_out.len() != self.c_out() {
            return Err(Error::DimensionMismatch {
                what: "output gradient",
                expected: self.c_out(),
                found: grad_out.len(),
            });
        }
        let mut grad_in = Matrix::zeros(features.rows(), self.c_in());
        let mut grad_w = Vec::with_capacity(self.layers.len());
        for ((layer, kc), active) in self.layers.iter().zip(&cache.per_kernel).zip(&cache.inner_active) {
            let g: Vec<f64> = grad_out
                .iter()
                .zip(&cache.outer_active)
                .zip(active)
                .map(|((&g, &outer), &inner)| if outer && inner { g } else { 0.0 })
                .collect();
            let (gw, gi) = layer.backward(kc, features, &g)?;
            for (acc, v) in grad_in.as_mut_slice().iter_mut().zip(gi.as_slice()) {
                *acc += v;
            }
            grad_w.push(gw);
        }
        Ok((grad_w, grad_in))
    }
}
