//! Fréchet-distance evaluation harness.
//!
//! Features come from a deterministic substitute extractor: images are
//! converted to grayscale, bilinearly downsampled to 16x16, flattened and
//! projected through a fixed-seed random orthogonal basis to `F` dimensions
//! (64 by default). Gaussian moment matching plus the Fréchet formula then
//! compare two image sets. Scores are comparable between runs of this
//! harness, not with any external feature stack.
//!
//! All linear algebra here is f64 and self-contained; the PSD matrix square
//! root uses a cyclic Jacobi eigendecomposition with negative eigenvalues
//! clamped to zero.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::rng::normal_f64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptySet,
    TooFewSamples { n: usize },
    DimensionMismatch { a: usize, b: usize },
    Asymmetric { max_dev: f64 },
    BadImage { detail: String },
}

impl std::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::EmptySet => write!(f, "empty image set"),
            Self::TooFewSamples { n } => write!(f, "need at least 2 samples, got {n}"),
            Self::DimensionMismatch { a, b } => write!(f, "feature dims differ: {a} vs {b}"),
            Self::Asymmetric { max_dev } => {
                write!(f, "matrix asymmetric beyond tolerance (dev {max_dev:.2e})")
            }
            Self::BadImage { detail } => write!(f, "bad image: {detail}"),
        }
    }
}

impl std::error::Error for MetricsError {}

pub type Result<T> = std::result::Result<T, MetricsError>;

const PATCH: usize = 16;
const RAW_DIM: usize = PATCH * PATCH;

/// Default feature dimensionality.
pub const FEATURE_DIM: usize = 64;
/// Default extractor seed; part of the harness definition, fixed across runs
/// and platforms.
pub const EXTRACTOR_SEED: u64 = 17;

/// Fixed random orthogonal projection of downsampled grayscale images.
pub struct FeatureExtractor {
    /// Column-orthonormal projection, RAW_DIM x f (row-major).
    q: Vec<f64>,
    f: usize,
}

impl FeatureExtractor {
    pub fn new(f: usize, seed: u64) -> Self {
        assert!(f >= 1 && f <= RAW_DIM, "feature dim {f} out of range");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut q = vec![0.0f64; RAW_DIM * f];
        for v in q.iter_mut() {
            *v = normal_f64(&mut rng);
        }
        // modified Gram-Schmidt on columns, run twice for orthogonality to
        // machine precision
        for _pass in 0..2 {
            for j in 0..f {
                for k in 0..j {
                    let mut dot = 0.0;
                    for r in 0..RAW_DIM {
                        dot += q[r * f + j] * q[r * f + k];
                    }
                    for r in 0..RAW_DIM {
                        q[r * f + j] -= dot * q[r * f + k];
                    }
                }
                let mut nrm = 0.0;
                for r in 0..RAW_DIM {
                    nrm += q[r * f + j] * q[r * f + j];
                }
                let nrm = nrm.sqrt();
                for r in 0..RAW_DIM {
                    q[r * f + j] /= nrm;
                }
            }
        }
        Self { q, f }
    }

    pub fn feature_dim(&self) -> usize {
        self.f
    }

    /// Max deviation of Q^T Q from the identity.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.f {
            for j in 0..self.f {
                let mut dot = 0.0;
                for r in 0..RAW_DIM {
                    dot += self.q[r * self.f + i] * self.q[r * self.f + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Grayscale, bilinear 16x16 downsample, orthogonal projection.
    pub fn extract_one(&self, image: &Tensor<f32>) -> Result<Vec<f64>> {
        let shape = image.shape();
        if shape.len() != 3 || (shape[0] != 1 && shape[0] != 3) {
            return Err(MetricsError::BadImage {
                detail: format!("expected [1|3,H,W], got {shape:?}"),
            });
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        let d = image.data();
        let gray_at = |x: usize, y: usize| -> f64 {
            let idx = y * w + x;
            if c == 1 {
                d[idx] as f64
            } else {
                0.299 * d[idx] as f64
                    + 0.587 * d[h * w + idx] as f64
                    + 0.114 * d[2 * h * w + idx] as f64
            }
        };
        let mut raw = [0.0f64; RAW_DIM];
        for oy in 0..PATCH {
            let sy = ((oy as f64 + 0.5) * h as f64 / PATCH as f64 - 0.5)
                .clamp(0.0, (h - 1) as f64);
            let (y0, fy) = (sy.floor() as usize, sy.fract());
            let y1 = (y0 + 1).min(h - 1);
            for ox in 0..PATCH {
                let sx = ((ox as f64 + 0.5) * w as f64 / PATCH as f64 - 0.5)
                    .clamp(0.0, (w - 1) as f64);
                let (x0, fx) = (sx.floor() as usize, sx.fract());
                let x1 = (x0 + 1).min(w - 1);
                raw[oy * PATCH + ox] = (1.0 - fy) * (1.0 - fx) * gray_at(x0, y0)
                    + (1.0 - fy) * fx * gray_at(x1, y0)
                    + fy * (1.0 - fx) * gray_at(x0, y1)
                    + fy * fx * gray_at(x1, y1);
            }
        }
        let mut feat = vec![0.0f64; self.f];
        for (r, &v) in raw.iter().enumerate() {
            if v != 0.0 {
                for (j, slot) in feat.iter_mut().enumerate() {
                    *slot += v * self.q[r * self.f + j];
                }
            }
        }
        Ok(feat)
    }

    /// N x F feature matrix, one row per image.
    pub fn extract(&self, images: &[Tensor<f32>]) -> Result<Vec<Vec<f64>>> {
        if images.is_empty() {
            return Err(MetricsError::EmptySet);
        }
        images.iter().map(|im| self.extract_one(im)).collect()
    }
}

/// Gaussian moments of a feature distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mu: Vec<f64>,
    /// F x F covariance, row-major, symmetric.
    pub sigma: Vec<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Sample mean and unbiased covariance, symmetrized.
pub fn fit_gaussian(features: &[Vec<f64>]) -> Result<GaussianStats> {
    let n = features.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples { n });
    }
    let f = features[0].len();
    let mut mu = vec![0.0f64; f];
    for row in features {
        for (m, &v) in mu.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mu.iter_mut() {
        *m /= n as f64;
    }
    let mut sigma = vec![0.0f64; f * f];
    for row in features {
        for i in 0..f {
            let di = row[i] - mu[i];
            for j in i..f {
                sigma[i * f + j] += di * (row[j] - mu[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..f {
        for j in i..f {
            let v = sigma[i * f + j] / denom;
            sigma[i * f + j] = v;
            sigma[j * f + i] = v;
        }
    }
    Ok(GaussianStats { mu, sigma })
}

fn matmul_sq(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; n * n];
    for i in 0..n {
        for k in 0..n {
            let av = a[i * n + k];
            if av != 0.0 {
                for j in 0..n {
                    out[i * n + j] += av * b[k * n + j];
                }
            }
        }
    }
    out
}

fn max_asymmetry(m: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max((m[i * n + j] - m[j * n + i]).abs());
        }
    }
    worst
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, row-major eigenvector matrix V with eigenvectors as
/// columns), satisfying M = V diag(l) V^T.
pub fn jacobi_eigen(m: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = m.to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frob(&a, n)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eig = (0..n).map(|i| a[i * n + i]).collect();
    (eig, v)
}

fn frob(m: &[f64], n: usize) -> f64 {
    m.iter().take(n * n).map(|v| v * v).sum::<f64>().sqrt()
}

/// Symmetric PSD square root: eigendecompose, clamp negative eigenvalues to
/// zero, rebuild with square-rooted spectrum.
pub fn matrix_sqrt_psd(m: &[f64], n: usize) -> Result<Vec<f64>> {
    let dev = max_asymmetry(m, n);
    let scale = 1.0 + frob(m, n);
    if dev > 1e-8 * scale {
        return Err(MetricsError::Asymmetric { max_dev: dev });
    }
    // force exact symmetry before decomposing
    let mut sym = m.to_vec();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (sym[i * n + j] + sym[j * n + i]);
            sym[i * n + j] = v;
            sym[j * n + i] = v;
        }
    }
    let (eig, v) = jacobi_eigen(&sym, n);
    let roots: Vec<f64> = eig.iter().map(|&l| l.max(0.0).sqrt()).collect();
    // S = V diag(sqrt l) V^T
    let mut s = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += v[i * n + k] * roots[k] * v[j * n + k];
            }
            s[i * n + j] = acc;
            s[j * n + i] = acc;
        }
    }
    Ok(s)
}

/// Fréchet distance between two Gaussians:
/// `|mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa^{1/2} Sb Sa^{1/2})^{1/2})`,
/// clamped at zero against numerical dust.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    let f = a.dim();
    if f != b.dim() {
        return Err(MetricsError::DimensionMismatch { a: f, b: b.dim() });
    }
    let mean_term: f64 = a
        .mu
        .iter()
        .zip(&b.mu)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let sa_half = matrix_sqrt_psd(&a.sigma, f)?;
    let inner = matmul_sq(&sa_half, &matmul_sq(&b.sigma, &sa_half, f), f);
    let cross = matrix_sqrt_psd(&inner, f)?;
    let mut trace_term = 0.0;
    for i in 0..f {
        trace_term += a.sigma[i * f + i] + b.sigma[i * f + i] - 2.0 * cross[i * f + i];
    }
    Ok((mean_term + trace_term).max(0.0))
}

/// Fit-and-compare convenience over two image sets.
pub fn fid_lite(
    extractor: &FeatureExtractor,
    set_a: &[Tensor<f32>],
    set_b: &[Tensor<f32>],
) -> Result<f64> {
    let fa = fit_gaussian(&extractor.extract(set_a)?)?;
    let fb = fit_gaussian(&extractor.extract(set_b)?)?;
    frechet_distance(&fa, &fb)
}
