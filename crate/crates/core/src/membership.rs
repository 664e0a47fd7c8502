//! Partitions, assignment matrices and membership matrices.
//!
//! Labels are 0-based in memory and 1-based in every file format.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// A hard clustering of `n` points into `K` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn from_zero_based(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("K must be >= 1".into()));
        }
        if labels.len() < k {
            return Err(Error::InvalidInput(format!(
                "n={} is smaller than K={k}",
                labels.len()
            )));
        }
        let mut seen = vec![false; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidInput(format!("label {} out of range 1..={k}", l + 1)));
            }
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("cluster {} is empty", empty + 1)));
        }
        Ok(Partition { labels, k })
    }

    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidInput("labels are 1-based; found 0".into()));
        }
        Self::from_zero_based(labels.iter().map(|&l| l - 1).collect(), k)
    }

    /// Like [`Partition::from_zero_based`] with `K` inferred as `max + 1`.
    pub fn infer_k(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        Self::from_zero_based(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l + 1).collect()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Member indices of each cluster, ascending.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }

    /// Relabel clusters in order of first occurrence.
    pub fn canonical(&self) -> Partition {
        Partition {
            labels: canonical_labels(&self.labels, self.k),
            k: self.k,
        }
    }
}

pub(crate) fn canonical_labels(labels: &[usize], k: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; k.max(labels.iter().copied().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect()
}

/// True iff the partitions coincide up to a relabeling of clusters.
pub fn recovery_equal(a: &Partition, b: &Partition) -> bool {
    a.n() == b.n() && a.k() == b.k() && a.canonical().labels == b.canonical().labels
}

/// `Z_ij = 1/|G_k|` when `i` and `j` share cluster `k`, else 0.
pub fn partition_to_membership(part: &Partition) -> DMatrix<f64> {
    let n = part.n();
    let sizes = part.sizes();
    let labels = part.labels();
    DMatrix::from_fn(n, n, |i, j| {
        if labels[i] == labels[j] {
            1.0 / sizes[labels[i]] as f64
        } else {
            0.0
        }
    })
}

/// The `n x K` 0/1 matrix with `h_ik = 1` iff point `i` is in cluster `k`.
pub fn partition_to_assignment(part: &Partition) -> DMatrix<f64> {
    let labels = part.labels();
    DMatrix::from_fn(part.n(), part.k(), |i, k| if labels[i] == k { 1.0 } else { 0.0 })
}

/// Distance of a candidate matrix from the feasible set `C_K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeasibilityResiduals {
    /// max |Z - Zᵀ|
    pub sym: f64,
    /// smallest eigenvalue of (Z + Zᵀ)/2
    pub psd_min_eig: f64,
    /// |tr Z - K|
    pub trace_err: f64,
    /// max_i |Σ_j Z_ij - 1|
    pub rowsum_max_err: f64,
    /// min_ij Z_ij
    pub min_entry: f64,
}

pub fn feasibility_residuals(z: &DMatrix<f64>, k: usize) -> Result<FeasibilityResiduals> {
    if !z.is_square() {
        return Err(Error::NotSquare {
            rows: z.nrows(),
            cols: z.ncols(),
        });
    }
    let n = z.nrows();
    let rowsum_max_err = (0..n)
        .map(|i| (z.row(i).sum() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(FeasibilityResiduals {
        sym: linalg::asymmetry(z),
        psd_min_eig: linalg::min_eigenvalue(z)?,
        trace_err: (z.trace() - k as f64).abs(),
        rowsum_max_err,
        min_entry: z.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// `Σ_k (1/|G_k|) Σ_{i,j∈G_k} ⟨X_i, X_j⟩` for a `p x n` data matrix.
pub fn kmeans_objective(part: &Partition, x: &DMatrix<f64>) -> Result<f64> {
    if part.n() != x.ncols() {
        return Err(Error::SizeMismatch(format!(
            "partition has {} points, data has {} columns",
            part.n(),
            x.ncols()
        )));
    }
    let mut sums = DMatrix::<f64>::zeros(x.nrows(), part.k());
    for (i, &l) in part.labels().iter().enumerate() {
        let mut col = sums.column_mut(l);
        col += x.column(i);
    }
    Ok(part
        .sizes()
        .iter()
        .enumerate()
        .map(|(k, &s)| sums.column(k).norm_squared() / s as f64)
        .sum())
}
