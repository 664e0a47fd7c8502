//! Gaussian mixture generation and the closed-form separation thresholds.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::membership::Partition;
use crate::rng::rng_from_seed;

/// Cluster centers stored as the columns of a `p x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterSet {
    centers: DMatrix<f64>,
}

impl CenterSet {
    pub fn new(centers: DMatrix<f64>) -> Result<Self> {
        let (p, k) = centers.shape();
        if p < 1 || k < 2 {
            return Err(Error::InvalidInput(format!(
                "need p >= 1 and K >= 2, got p={p}, K={k}"
            )));
        }
        let set = CenterSet { centers };
        if set.min_separation() <= 0.0 {
            return Err(Error::InvalidInput("centers are not pairwise distinct".into()));
        }
        Ok(set)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.centers
    }

    pub fn dim(&self) -> usize {
        self.centers.nrows()
    }

    pub fn k(&self) -> usize {
        self.centers.ncols()
    }

    /// Squared distance between centers `a` and `b`.
    pub fn sq_dist(&self, a: usize, b: usize) -> f64 {
        (self.centers.column(a) - self.centers.column(b)).norm_squared()
    }

    /// Minimum pairwise squared distance Δ².
    pub fn min_separation(&self) -> f64 {
        let k = self.k();
        let mut best = f64::INFINITY;
        for a in 0..k {
            for b in (a + 1)..k {
                best = best.min(self.sq_dist(a, b));
            }
        }
        best
    }
}

/// Free-function form of [`CenterSet::min_separation`].
pub fn min_separation(centers: &CenterSet) -> f64 {
    centers.min_separation()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlacementMode {
    /// `c * e_k`; needs `p >= K`.
    #[default]
    Orthogonal,
    /// Regular simplex; needs `p >= K - 1`.
    Simplex,
    /// Uniform directions on the unit sphere, rescaled so the closest pair hits Δ².
    RandomSphere,
}

impl PlacementMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PlacementMode::Orthogonal => "orthogonal",
            PlacementMode::Simplex => "simplex",
            PlacementMode::RandomSphere => "random_sphere",
        }
    }
}

impl std::str::FromStr for PlacementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(PlacementMode::Orthogonal),
            "simplex" => Ok(PlacementMode::Simplex),
            "random_sphere" | "random-sphere" => Ok(PlacementMode::RandomSphere),
            other => Err(Error::InvalidInput(format!("unknown placement mode {other:?}"))),
        }
    }
}

const SPHERE_ATTEMPTS: usize = 16;

pub fn place_centers(
    mode: PlacementMode,
    k: usize,
    p: usize,
    delta2: f64,
    seed: u64,
) -> Result<CenterSet> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("K must be >= 2, got {k}")));
    }
    if !(delta2 > 0.0) || !delta2.is_finite() {
        return Err(Error::InvalidInput(format!("delta2 must be positive, got {delta2}")));
    }
    let centers = match mode {
        PlacementMode::Orthogonal => {
            if p < k {
                return Err(Error::DimensionTooSmall(format!(
                    "orthogonal placement needs p >= K (p={p}, K={k})"
                )));
            }
            let scale = (delta2 / 2.0).sqrt();
            DMatrix::from_fn(p, k, |i, j| if i == j { scale } else { 0.0 })
        }
        PlacementMode::Simplex => {
            if p + 1 < k {
                return Err(Error::DimensionTooSmall(format!(
                    "simplex placement needs p >= K-1 (p={p}, K={k})"
                )));
            }
            // Coordinates of e_1..e_K in the Helmert basis of the hyperplane 1^⊥.
            let scale = (delta2 / 2.0).sqrt();
            let mut m = DMatrix::zeros(p, k);
            for j in 1..k {
                let norm = ((j * (j + 1)) as f64).sqrt();
                for c in 0..k {
                    let h = match c.cmp(&j) {
                        Ordering::Less => 1.0,
                        Ordering::Equal => -(j as f64),
                        Ordering::Greater => 0.0,
                    };
                    m[(j - 1, c)] = scale * h / norm;
                }
            }
            m
        }
        PlacementMode::RandomSphere => {
            let mut rng = rng_from_seed(seed);
            let mut found = None;
            for _ in 0..SPHERE_ATTEMPTS {
                let mut m = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(&mut rng));
                for mut col in m.column_iter_mut() {
                    let norm = col.norm();
                    if norm > 0.0 {
                        col /= norm;
                    }
                }
                let d2 = CenterSet { centers: m.clone() }.min_separation();
                if d2 > 1e-12 && d2.is_finite() {
                    m *= (delta2 / d2).sqrt();
                    found = Some(m);
                    break;
                }
            }
            found.ok_or(Error::DegenerateDraw {
                attempts: SPHERE_ATTEMPTS,
            })?
        }
    };
    CenterSet::new(centers)
}

/// Mixture sizes, noise level and sampling seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub sizes: Vec<usize>,
    pub sigma2: f64,
    pub seed: u64,
}

impl MixtureSpec {
    pub fn new(sizes: Vec<usize>, sigma2: f64, seed: u64) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("cluster sizes must be >= 1: {sizes:?}")));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidInput(format!("sigma2 must be positive, got {sigma2}")));
        }
        Ok(MixtureSpec {
            sizes,
            sigma2,
            seed,
        })
    }

    /// `K` clusters of `n / K` points each.
    pub fn equal(n: usize, k: usize, sigma2: f64, seed: u64) -> Result<Self> {
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::InvalidInput(format!("n={n} is not divisible by K={k}")));
        }
        Self::new(vec![n / k; k], sigma2, seed)
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn min_size(&self) -> usize {
        self.sizes.iter().copied().min().unwrap_or(0)
    }
}

/// A sampled `p x n` data matrix with its generating truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub truth: Partition,
    pub spec: MixtureSpec,
    pub centers: CenterSet,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }
}

/// Draw `X_i = μ_{k(i)} + σ ε_i`; the first `n_1` columns belong to cluster 1 and so on.
pub fn sample_dataset(centers: &CenterSet, spec: &MixtureSpec) -> Result<Dataset> {
    if centers.k() != spec.k() {
        return Err(Error::SizeMismatch(format!(
            "{} centers but {} cluster sizes",
            centers.k(),
            spec.k()
        )));
    }
    let p = centers.dim();
    let n = spec.n();
    let sigma = spec.sigma2.sqrt();
    let labels: Vec<usize> = spec
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();
    let mut rng = rng_from_seed(spec.seed);
    let mut x = DMatrix::zeros(p, n);
    for (i, &k) in labels.iter().enumerate() {
        for r in 0..p {
            let eps: f64 = StandardNormal.sample(&mut rng);
            x[(r, i)] = centers.matrix()[(r, k)] + sigma * eps;
        }
    }
    let truth = Partition::from_zero_based(labels, spec.k())?;
    Ok(Dataset {
        x,
        truth,
        spec: spec.clone(),
        centers: centers.clone(),
    })
}

/// Data with every point exactly at its center, cluster `k` holding `sizes[k]`
/// consecutive columns.
pub fn noiseless_points(centers: &CenterSet, sizes: &[usize]) -> Result<(DMatrix<f64>, Partition)> {
    if sizes.len() != centers.k() {
        return Err(Error::SizeMismatch(format!(
            "{} centers but {} cluster sizes",
            centers.k(),
            sizes.len()
        )));
    }
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();
    let x = DMatrix::from_fn(centers.dim(), labels.len(), |r, i| centers.matrix()[(r, labels[i])]);
    Ok((x, Partition::from_zero_based(labels, centers.k())?))
}

/// `m = min_{k≠l} 2 n_k n_l / (n_k + n_l)`.
///
/// The minimizing pair is selected by exact integer cross-multiplication, so the
/// only rounding is the one final division.
pub fn pairwise_harmonic_min(sizes: &[usize]) -> Result<f64> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "need at least two positive cluster sizes: {sizes:?}"
        )));
    }
    let mut best: Option<(u128, u128)> = None;
    for a in 0..sizes.len() {
        for b in (a + 1)..sizes.len() {
            let (na, nb) = (sizes[a] as u128, sizes[b] as u128);
            let num = 2 * na * nb;
            let den = na + nb;
            best = match best {
                Some((bn, bd)) if bn * den <= num * bd => Some((bn, bd)),
                _ => Some((num, den)),
            };
        }
    }
    let (num, den) = best.expect("at least one pair");
    Ok(num as f64 / den as f64)
}

/// Cutoff Δ̄² = 4σ²(1 + √(1 + Kp/(n log n))) log n, natural log.
pub fn cutoff_threshold(n: usize, k: usize, p: usize, sigma2: f64) -> Result<f64> {
    if n <= 1 {
        return Err(Error::Domain(format!("cutoff needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let log_n = nf.ln();
    let ratio = (k * p) as f64 / (nf * log_n);
    Ok(4.0 * sigma2 * (1.0 + (1.0 + ratio).sqrt()) * log_n)
}

/// Earlier sufficient separation conditions, evaluated with unit constants.
///
/// These are shape-only reference curves; the unknown constants make them
/// unsuitable as pass/fail thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonBounds {
    /// σ² (Kn / n_min)(1 ∨ Kp/n).
    pub lu_zhou: f64,
    /// σ² (1 ∨ √(Kp/(n log n))) log n.
    pub giraud_verzelen: f64,
}

pub fn comparison_bounds(
    n: usize,
    k: usize,
    p: usize,
    sigma2: f64,
    n_min: usize,
) -> Result<ComparisonBounds> {
    if n_min == 0 || n_min * k > n {
        return Err(Error::InvalidInput(format!(
            "n_min must satisfy 1 <= n_min <= n/K (n={n}, K={k}, n_min={n_min})"
        )));
    }
    if n <= 1 {
        return Err(Error::Domain(format!("bounds need n >= 2, got {n}")));
    }
    let (nf, kf, pf) = (n as f64, k as f64, p as f64);
    let log_n = nf.ln();
    let lu_zhou = sigma2 * (kf * nf / n_min as f64) * (kf * pf / nf).max(1.0);
    let giraud_verzelen = sigma2 * (kf * pf / (nf * log_n)).sqrt().max(1.0) * log_n;
    Ok(ComparisonBounds {
        lu_zhou,
        giraud_verzelen,
    })
}
