//! Local-descriptor post-processing for dense activation maps.
//!
//! A dense feature map (the output of a fully-convolutional backbone) is
//! turned into a small set of weighted local descriptors: the attention
//! weight of a grid location is the L2 norm of its raw activation vector,
//! the descriptor is the whitened, dimensionality-reduced activation vector
//! after local average-pooling. Descriptors from several image scales are
//! merged and the strongest `n` are kept.
//!
//! The module also provides the two global-descriptor poolings (plain
//! sum-pooling and attention-weighted pooling of whitened activations) whose
//! inner products equal the corresponding descriptor cross-match sums; they
//! serve as cross-checks for the local pipeline.

use crate::error::{Error, Result};

/// A W×H×D activation tensor from one image resolution.
///
/// Data is stored row-major as `(y, x, channel)`. Activations must be finite
/// and, unless explicitly overridden, non-negative (maps are expected to come
/// from ReLU-terminated networks).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFeatureMap {
    width: usize,
    height: usize,
    depth: usize,
    scale_factor: f32,
    data: Vec<f32>,
}

impl DenseFeatureMap {
    pub fn new(
        width: usize,
        height: usize,
        depth: usize,
        scale_factor: f32,
        data: Vec<f32>,
    ) -> Result<Self> {
        Self::with_options(width, height, depth, scale_factor, data, false)
    }

    /// Like [`DenseFeatureMap::new`] but optionally accepting negative
    /// activations (`allow_negative`). Non-finite values are always rejected.
    pub fn with_options(
        width: usize,
        height: usize,
        depth: usize,
        scale_factor: f32,
        data: Vec<f32>,
        allow_negative: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 || depth == 0 {
            return Err(Error::InvalidParameter(format!(
                "feature map dimensions must be positive, got {width}x{height}x{depth}"
            )));
        }
        if !(scale_factor.is_finite() && scale_factor > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {scale_factor}"
            )));
        }
        let expected = width * height * depth;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteValue { index, value });
            }
            if !allow_negative && value < 0.0 {
                return Err(Error::NegativeActivation { index, value });
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            scale_factor,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn scale_factor(&self) -> f32 {
        self.scale_factor
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The D-dimensional activation vector at grid location `(x, y)`.
    pub fn vector_at(&self, x: usize, y: usize) -> &[f32] {
        let start = (y * self.width + x) * self.depth;
        &self.data[start..start + self.depth]
    }
}

/// Mean subtraction, whitening and dimensionality reduction in one linear
/// map: `o(u) = P (u - m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform {
    /// d×D projection, row-major.
    projection: Vec<f32>,
    mean: Vec<f32>,
    input_dim: usize,
    output_dim: usize,
}

impl WhiteningTransform {
    pub fn new(
        projection: Vec<f32>,
        mean: Vec<f32>,
        input_dim: usize,
        output_dim: usize,
    ) -> Result<Self> {
        if output_dim == 0 || output_dim > input_dim {
            return Err(Error::InvalidParameter(format!(
                "output dimension {output_dim} must be in 1..={input_dim}"
            )));
        }
        if mean.len() != input_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: mean.len(),
            });
        }
        if projection.len() != input_dim * output_dim {
            return Err(Error::DimensionMismatch {
                expected: input_dim * output_dim,
                got: projection.len(),
            });
        }
        Ok(Self {
            projection,
            mean,
            input_dim,
            output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn projection(&self) -> &[f32] {
        &self.projection
    }

    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    /// Applies `P (u - m)`.
    pub fn apply(&self, u: &[f32]) -> Result<Vec<f32>> {
        Ok(self.apply_f64(u)?.into_iter().map(|v| v as f32).collect())
    }

    /// Same map evaluated with f64 accumulation, used where downstream
    /// tolerances are tighter than f32 rounding.
    pub fn apply_f64(&self, u: &[f32]) -> Result<Vec<f64>> {
        if u.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: u.len(),
            });
        }
        let mut out = vec![0.0f64; self.output_dim];
        for (i, out_i) in out.iter_mut().enumerate() {
            let row = &self.projection[i * self.input_dim..(i + 1) * self.input_dim];
            let mut acc = 0.0f64;
            for j in 0..self.input_dim {
                acc += row[j] as f64 * (u[j] as f64 - self.mean[j] as f64);
            }
            *out_i = acc;
        }
        Ok(out)
    }
}

/// One selected local descriptor. `strength` is the L2 norm of the raw
/// (pre-whitening) activation vector, not of `vector`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedDescriptor {
    pub vector: Vec<f32>,
    pub strength: f32,
    pub source_scale: f32,
    pub grid_x: u32,
    pub grid_y: u32,
}

/// An image's selected descriptors, sorted by strength descending with ties
/// broken by (source_scale, grid_y, grid_x) ascending, truncated to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDescriptorSet {
    pub image_id: String,
    pub descriptors: Vec<WeightedDescriptor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalKind {
    Spoc,
    How,
}

/// A unit-norm pooled image descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalDescriptor {
    pub vector: Vec<f64>,
    pub kind: GlobalKind,
}

impl GlobalDescriptor {
    pub fn dot(&self, other: &GlobalDescriptor) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Per-location L2 norms of the activation vectors, row-major `(y, x)`.
pub fn attention_map(map: &DenseFeatureMap) -> Vec<f32> {
    let mut out = Vec::with_capacity(map.width * map.height);
    for y in 0..map.height {
        for x in 0..map.width {
            let u = map.vector_at(x, y);
            let norm2: f64 = u.iter().map(|&v| v as f64 * v as f64).sum();
            out.push(norm2.sqrt() as f32);
        }
    }
    out
}

/// Average pooling in a `window`×`window` neighborhood, per channel. The
/// window must be odd. At the borders the mean is taken over the in-bounds
/// neighbors only, so constant maps stay constant everywhere.
pub fn local_smooth(map: &DenseFeatureMap, window: usize) -> Result<DenseFeatureMap> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "smoothing window must be odd and positive, got {window}"
        )));
    }
    if window == 1 {
        return Ok(map.clone());
    }
    let half = window / 2;
    let (w, h, d) = (map.width, map.height, map.depth);
    let mut out = vec![0.0f32; w * h * d];
    let mut acc = vec![0.0f64; d];
    for y in 0..h {
        let y0 = y.saturating_sub(half);
        let y1 = (y + half).min(h - 1);
        for x in 0..w {
            let x0 = x.saturating_sub(half);
            let x1 = (x + half).min(w - 1);
            acc.fill(0.0);
            for ny in y0..=y1 {
                for nx in x0..=x1 {
                    let v = map.vector_at(nx, ny);
                    for c in 0..d {
                        acc[c] += v[c] as f64;
                    }
                }
            }
            let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            let start = (y * w + x) * d;
            for c in 0..d {
                out[start + c] = (acc[c] / count) as f32;
            }
        }
    }
    Ok(DenseFeatureMap {
        width: w,
        height: h,
        depth: d,
        scale_factor: map.scale_factor,
        data: out,
    })
}

/// Fits the whitening map on a flat sample of `input_dim`-dimensional
/// vectors: `m` is the sample mean and the rows of `P` are the leading
/// principal directions scaled by `(lambda_i + eps)^-1/2`.
///
/// `eps` defaults to `1e-6 * trace(cov) / input_dim` when not given. The
/// sign of each principal direction is fixed so that its entry of largest
/// magnitude is positive, which makes fits reproducible.
pub fn fit_whitening(
    sample: &[f32],
    input_dim: usize,
    output_dim: usize,
    eps: Option<f64>,
) -> Result<WhiteningTransform> {
    if input_dim == 0 {
        return Err(Error::InvalidParameter("input dimension must be positive".into()));
    }
    if sample.len() % input_dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: input_dim * (sample.len() / input_dim + 1),
            got: sample.len(),
        });
    }
    let n = sample.len() / input_dim;
    if n <= input_dim {
        return Err(Error::SampleTooSmall {
            sample: n,
            required: input_dim + 1,
        });
    }
    if output_dim == 0 || output_dim > input_dim {
        return Err(Error::InvalidParameter(format!(
            "output dimension {output_dim} must be in 1..={input_dim}"
        )));
    }

    let mut mean = vec![0.0f64; input_dim];
    for row in sample.chunks_exact(input_dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // Population covariance (1/n), matching the oracle used in the tests.
    let mut cov = nalgebra::DMatrix::<f64>::zeros(input_dim, input_dim);
    let mut centered = vec![0.0f64; input_dim];
    for row in sample.chunks_exact(input_dim) {
        for (c, (&v, m)) in centered.iter_mut().zip(row.iter().zip(&mean)) {
            *c = v as f64 - m;
        }
        for i in 0..input_dim {
            for j in i..input_dim {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..input_dim {
        for j in i..input_dim {
            cov[(i, j)] /= n as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..input_dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > lambda_max * 1e-9 && eig.eigenvalues[i] > 0.0)
        .count();
    if rank < output_dim {
        return Err(Error::RankDeficient {
            rank,
            required: output_dim,
        });
    }

    let trace: f64 = (0..input_dim).map(|i| eig.eigenvalues[i].max(0.0)).sum();
    let eps = eps.unwrap_or(1e-6 * trace / input_dim as f64);
    if eps < 0.0 {
        return Err(Error::InvalidParameter(format!("eps must be non-negative, got {eps}")));
    }

    let mut projection = vec![0.0f32; output_dim * input_dim];
    for (r, &i) in order.iter().take(output_dim).enumerate() {
        let lambda = eig.eigenvalues[i].max(0.0);
        let scale = 1.0 / (lambda + eps).sqrt();
        let col = eig.eigenvectors.column(i);
        // Largest-magnitude entry made positive; first index wins ties.
        let mut lead = 0;
        for j in 1..input_dim {
            if col[j].abs() > col[lead].abs() {
                lead = j;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..input_dim {
            projection[r * input_dim + j] = (sign * scale * col[j]) as f32;
        }
    }

    WhiteningTransform::new(
        projection,
        mean.into_iter().map(|m| m as f32).collect(),
        input_dim,
        output_dim,
    )
}

/// Extracts one weighted descriptor per grid location: the strength is the
/// raw activation norm, the vector is the whitened activation of the
/// smoothed map at the same location.
pub fn extract_single_scale(
    map: &DenseFeatureMap,
    transform: &WhiteningTransform,
    window: usize,
) -> Result<Vec<WeightedDescriptor>> {
    if map.depth != transform.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: transform.input_dim(),
            got: map.depth,
        });
    }
    let strengths = attention_map(map);
    let smoothed = local_smooth(map, window)?;
    let mut out = Vec::with_capacity(map.width * map.height);
    for y in 0..map.height {
        for x in 0..map.width {
            let vector = transform.apply(smoothed.vector_at(x, y))?;
            out.push(WeightedDescriptor {
                vector,
                strength: strengths[y * map.width + x],
                source_scale: map.scale_factor,
                grid_x: x as u32,
                grid_y: y as u32,
            });
        }
    }
    Ok(out)
}

fn descriptor_order(a: &WeightedDescriptor, b: &WeightedDescriptor) -> std::cmp::Ordering {
    b.strength
        .total_cmp(&a.strength)
        .then(a.source_scale.total_cmp(&b.source_scale))
        .then(a.grid_y.cmp(&b.grid_y))
        .then(a.grid_x.cmp(&b.grid_x))
}

/// Merges per-scale descriptor lists, ranks them jointly by strength and
/// keeps the strongest `n`. Strengths are compared raw across scales.
pub fn merge_multiscale(
    image_id: &str,
    per_scale: Vec<Vec<WeightedDescriptor>>,
    n: usize,
) -> Result<LocalDescriptorSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("descriptor budget n must be >= 1".into()));
    }
    let mut descriptors: Vec<WeightedDescriptor> = per_scale.into_iter().flatten().collect();
    descriptors.sort_by(descriptor_order);
    descriptors.truncate(n);
    Ok(LocalDescriptorSet {
        image_id: image_id.to_string(),
        descriptors,
    })
}

/// Global sum-pooling: the normalized sum of all activation vectors.
pub fn spoc_pool(map: &DenseFeatureMap) -> Result<GlobalDescriptor> {
    let mut acc = vec![0.0f64; map.depth];
    for y in 0..map.height {
        for x in 0..map.width {
            for (a, &v) in acc.iter_mut().zip(map.vector_at(x, y)) {
                *a += v as f64;
            }
        }
    }
    normalize_pooled(acc, GlobalKind::Spoc, "sum of activations is zero")
}

/// Attention-weighted pooling of whitened, smoothed activations: the
/// normalized sum of `w(u) * o(u_smoothed)` over all grid locations.
pub fn how_pool(
    map: &DenseFeatureMap,
    transform: &WhiteningTransform,
    window: usize,
) -> Result<GlobalDescriptor> {
    if map.depth != transform.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: transform.input_dim(),
            got: map.depth,
        });
    }
    let smoothed = local_smooth(map, window)?;
    let mut acc = vec![0.0f64; transform.output_dim()];
    for y in 0..map.height {
        for x in 0..map.width {
            let raw = map.vector_at(x, y);
            let w: f64 = raw
                .iter()
                .map(|&v| v as f64 * v as f64)
                .sum::<f64>()
                .sqrt();
            let o = transform.apply_f64(smoothed.vector_at(x, y))?;
            for (a, v) in acc.iter_mut().zip(o) {
                *a += w * v;
            }
        }
    }
    normalize_pooled(acc, GlobalKind::How, "weighted descriptor aggregate is zero")
}

fn normalize_pooled(acc: Vec<f64>, kind: GlobalKind, msg: &'static str) -> Result<GlobalDescriptor> {
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroAggregate(msg));
    }
    Ok(GlobalDescriptor {
        vector: acc.into_iter().map(|v| v / norm).collect(),
        kind,
    })
}
