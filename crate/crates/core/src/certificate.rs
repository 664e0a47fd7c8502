//! Dual certificate for optimality and uniqueness of a block membership matrix.
//!
//! For a candidate partition `G_1..G_K` the construction fixes a trace
//! multiplier λ, builds the row multipliers α blockwise, and builds a symmetric
//! `B` whose off-diagonal blocks are rank one with prescribed row and column
//! sums. With `W = λI + ½(1αᵀ + α1ᵀ) − A − B` the membership matrix `Z*` is the
//! unique optimum of the SDP when
//!
//! * (C1) `B ≥ 0`,
//! * (C2) `W ⪰ 0`,
//! * (C3) `tr(W Z*) = 0`,
//! * (C4) `tr(B Z*) = 0`,
//! * (C5) `B > 0` on every off-diagonal block.
//!
//! Because the cluster indicators lie in the kernel of `W` by construction,
//! (C2) is checked on their orthogonal complement only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::membership::{partition_to_membership, Partition};
use crate::solver::AffinityMatrix;

/// `λ♯ = pσ² + (β/4) m Δ²`.
pub fn construct_lambda(sigma2: f64, p: usize, m: f64, delta2: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidInput(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(p as f64 * sigma2 + 0.25 * beta * m * delta2)
}

fn check_dims(n: usize, part: &Partition) -> Result<()> {
    if part.n() != n {
        return Err(Error::SizeMismatch(format!(
            "partition has {} points, problem has {n}",
            part.n()
        )));
    }
    Ok(())
}

/// `α_{G_k} = (2/n_k) A_{G_kG_k} 1 − (λ/n_k) 1 − (1ᵀA_{G_kG_k}1 / n_k²) 1`.
pub fn construct_alpha(a: &AffinityMatrix, part: &Partition, lambda: f64) -> Result<Vec<f64>> {
    check_dims(a.n(), part)?;
    let a = a.matrix();
    let mut alpha = vec![0.0; part.n()];
    for group in part.groups() {
        let nk = group.len() as f64;
        let row_sums: Vec<f64> = group
            .iter()
            .map(|&i| group.iter().map(|&j| a[(i, j)]).sum())
            .collect();
        let total: f64 = row_sums.iter().sum();
        for (&i, s) in group.iter().zip(&row_sums) {
            alpha[i] = 2.0 * s / nk - lambda / nk - total / (nk * nk);
        }
    }
    Ok(alpha)
}

fn cluster_means(x: &DMatrix<f64>, part: &Partition) -> DMatrix<f64> {
    let mut means = DMatrix::zeros(x.nrows(), part.k());
    for (i, &l) in part.labels().iter().enumerate() {
        let mut col = means.column_mut(l);
        col += x.column(i);
    }
    for (k, &s) in part.sizes().iter().enumerate() {
        let mut col = means.column_mut(k);
        col /= s as f64;
    }
    means
}

/// Row sums of `B_{G_l G_k}` for every `j ∈ G_l`:
/// `−((n_l+n_k)/(2n_l)) λ + (n_k/2)(‖X̄_k − X_j‖² − ‖X̄_l − X_j‖²)`.
///
/// Indexed as `sums[l][k][local j]`; the diagonal `sums[k][k]` is empty.
pub fn block_row_sums(x: &DMatrix<f64>, part: &Partition, lambda: f64) -> Result<Vec<Vec<Vec<f64>>>> {
    check_dims(x.ncols(), part)?;
    let means = cluster_means(x, part);
    let sizes = part.sizes();
    let groups = part.groups();
    let kk = part.k();
    let mut sums = vec![vec![Vec::new(); kk]; kk];
    for l in 0..kk {
        for k in 0..kk {
            if k == l {
                continue;
            }
            let (nl, nk) = (sizes[l] as f64, sizes[k] as f64);
            sums[l][k] = groups[l]
                .iter()
                .map(|&j| {
                    let xj = x.column(j);
                    let to_k = (means.column(k) - xj).norm_squared();
                    let to_l = (means.column(l) - xj).norm_squared();
                    -(nl + nk) / (2.0 * nl) * lambda + 0.5 * nk * (to_k - to_l)
                })
                .collect();
        }
    }
    Ok(sums)
}

/// Symmetric `B♯` with zero diagonal blocks and rank-one off-diagonal blocks
/// `[B_{G_l G_k}]_{ji} = r_j c_i / t`.
pub fn construct_b(x: &DMatrix<f64>, part: &Partition, lambda: f64) -> Result<DMatrix<f64>> {
    let sums = block_row_sums(x, part, lambda)?;
    let groups = part.groups();
    let n = part.n();
    let mut b = DMatrix::zeros(n, n);
    for l in 0..part.k() {
        for k in 0..part.k() {
            if k == l {
                continue;
            }
            // rows of B_{G_l G_k} sum to r, its columns sum to the rows of B_{G_k G_l}
            let r = &sums[l][k];
            let c = &sums[k][l];
            let total: f64 = r.iter().sum();
            let scale: f64 = r.iter().map(|v| v.abs()).sum();
            if total.abs() <= 1e-12 * (1.0 + scale) {
                return Err(Error::DegenerateBlock {
                    k: k + 1,
                    l: l + 1,
                    total,
                });
            }
            for (a_idx, &j) in groups[l].iter().enumerate() {
                for (b_idx, &i) in groups[k].iter().enumerate() {
                    b[(j, i)] = r[a_idx] * c[b_idx] / total;
                }
            }
        }
    }
    Ok(linalg::symmetrize(&b))
}

/// `W = λI + ½(1αᵀ + α1ᵀ) − A − B`, symmetrized; also returns the asymmetry
/// removed by symmetrization.
pub fn build_w(
    a: &AffinityMatrix,
    lambda: f64,
    alpha: &[f64],
    b: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64)> {
    let n = a.n();
    if alpha.len() != n || b.shape() != (n, n) {
        return Err(Error::SizeMismatch("certificate operands".into()));
    }
    let w = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { lambda } else { 0.0 };
        diag + 0.5 * (alpha[i] + alpha[j]) - a.matrix()[(i, j)] - b[(i, j)]
    });
    let asym = linalg::asymmetry(&w);
    Ok((linalg::symmetrize(&w), asym))
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub lambda: f64,
    pub alpha: Vec<f64>,
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

pub fn construct_certificate(
    x: &DMatrix<f64>,
    a: &AffinityMatrix,
    part: &Partition,
    lambda: f64,
) -> Result<Certificate> {
    let alpha = construct_alpha(a, part, lambda)?;
    let b = construct_b(x, part, lambda)?;
    let (w, _) = build_w(a, lambda, &alpha, &b)?;
    Ok(Certificate { lambda, alpha, b, w })
}

impl Certificate {
    /// Warm-start duals for the consensus solver at the fixed point `Z*`.
    pub fn solver_duals(&self) -> [DMatrix<f64>; 3] {
        let n = self.alpha.len();
        let alpha = &self.alpha;
        let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (alpha[i] + alpha[j])) - &self.b;
        let rows = DMatrix::from_fn(n, n, |i, _| alpha[i]);
        let anti = DMatrix::from_fn(n, n, |i, j| 0.5 * (alpha[i] - alpha[j]));
        [sym, &self.b - rows, anti]
    }
}

/// Outcome of checking (C1)–(C5) numerically.
///
/// A failed report is inconclusive: it does not show that `Z*` is not optimal.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub lambda: f64,
    /// (C1) smallest entry of `B` over off-diagonal blocks.
    pub c1_min_b_offdiag: f64,
    /// (C2) smallest eigenvalue of `W` restricted to Γ_K.
    pub c2_min_eig_on_gamma: f64,
    /// (C3) `tr(W Z*)`.
    pub c3_tr_wz: f64,
    /// (C4) `tr(B Z*)`.
    pub c4_tr_bz: f64,
    /// (C5) same quantity as (C1); must be strictly positive.
    pub c5_strict_min: f64,
    /// `max_k ‖W 1_{G_k}‖`.
    pub kernel_residual: f64,
    /// `λK + αᵀ1 − ⟨A, Z*⟩`.
    pub duality_gap: f64,
    pub tol: f64,
    pub tol_eig: f64,
    pub passed: bool,
    /// Set when the rank-one construction divides by a vanishing block total.
    pub degenerate: Option<String>,
}

impl CertificateReport {
    /// Flat `key=value` listing.
    pub fn to_key_values(&self) -> String {
        use crate::io::fmt_f64;
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        push("lambda", fmt_f64(self.lambda));
        push("c1_min_b_offdiag", fmt_f64(self.c1_min_b_offdiag));
        push("c2_min_eig_on_gamma", fmt_f64(self.c2_min_eig_on_gamma));
        push("c3_tr_wz", fmt_f64(self.c3_tr_wz));
        push("c4_tr_bz", fmt_f64(self.c4_tr_bz));
        push("c5_strict_min", fmt_f64(self.c5_strict_min));
        push("kernel_residual", fmt_f64(self.kernel_residual));
        push("duality_gap", fmt_f64(self.duality_gap));
        push("tol", fmt_f64(self.tol));
        push("tol_eig", fmt_f64(self.tol_eig));
        push("passed", self.passed.to_string());
        push(
            "conclusion",
            if self.passed {
                "unique optimum certified".into()
            } else {
                "inconclusive".into()
            },
        );
        if let Some(reason) = &self.degenerate {
            push("degenerate", reason.clone());
        }
        out
    }
}

/// Tolerance overrides; `None` selects `1e-8 (1 + ‖A‖_F)` and `1e-8 (1 + ‖W‖_F)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Tolerances {
    pub tol: Option<f64>,
    pub tol_eig: Option<f64>,
}

/// Smallest eigenvalue of `P W P` over eigenvectors with `‖P v‖ ≥ 0.5`, where
/// `P = I − Z*` projects onto Γ_K.
pub fn min_eig_on_gamma(w: &DMatrix<f64>, part: &Partition) -> Result<f64> {
    let n = part.n();
    let proj = DMatrix::<f64>::identity(n, n) - partition_to_membership(part);
    let restricted = linalg::symmetrize(&(&proj * w * &proj));
    let (values, vectors) = linalg::sym_eigen(&restricted)?;
    for (idx, &val) in values.iter().enumerate() {
        let v: DVector<f64> = vectors.column(idx).into_owned();
        if (&proj * v).norm() >= 0.5 {
            return Ok(val);
        }
    }
    // Γ_K is trivial (every cluster a singleton); the condition holds vacuously.
    Ok(f64::INFINITY)
}

pub fn verify_certificate(
    x: &DMatrix<f64>,
    part: &Partition,
    lambda: f64,
    tols: Tolerances,
) -> Result<CertificateReport> {
    check_dims(x.ncols(), part)?;
    let a = crate::solver::build_affinity(x)?;
    let tol = tols.tol.unwrap_or(1e-8 * (1.0 + a.matrix().norm()));
    let z_star = partition_to_membership(part);
    let alpha = construct_alpha(&a, part, lambda)?;
    let duality_gap = lambda * part.k() as f64 + alpha.iter().sum::<f64>()
        - linalg::frob_dot(a.matrix(), &z_star);

    let b = match construct_b(x, part, lambda) {
        Ok(b) => b,
        Err(e @ Error::DegenerateBlock { .. }) => {
            return Ok(CertificateReport {
                lambda,
                c1_min_b_offdiag: f64::NAN,
                c2_min_eig_on_gamma: f64::NAN,
                c3_tr_wz: f64::NAN,
                c4_tr_bz: f64::NAN,
                c5_strict_min: f64::NAN,
                kernel_residual: f64::NAN,
                duality_gap,
                tol,
                tol_eig: tols.tol_eig.unwrap_or(f64::NAN),
                passed: false,
                degenerate: Some(e.to_string()),
            })
        }
        Err(e) => return Err(e),
    };
    let (w, _) = build_w(&a, lambda, &alpha, &b)?;
    let tol_eig = tols.tol_eig.unwrap_or(1e-8 * (1.0 + w.norm()));

    let labels = part.labels();
    let mut c1 = f64::INFINITY;
    for i in 0..part.n() {
        for j in 0..part.n() {
            if labels[i] != labels[j] {
                c1 = c1.min(b[(i, j)]);
            }
        }
    }
    let c2 = min_eig_on_gamma(&w, part)?;
    let c3 = linalg::frob_dot(&w, &z_star);
    let c4 = linalg::frob_dot(&b, &z_star);
    let kernel_residual = part
        .groups()
        .iter()
        .map(|g| {
            let mut acc = DVector::<f64>::zeros(part.n());
            for &j in g {
                acc += w.column(j);
            }
            acc.norm()
        })
        .fold(0.0, f64::max);

    let passed = c1 >= -tol && c2 >= -tol_eig && c3.abs() <= tol && c4.abs() <= tol && c1 > 0.0;
    Ok(CertificateReport {
        lambda,
        c1_min_b_offdiag: c1,
        c2_min_eig_on_gamma: c2,
        c3_tr_wz: c3,
        c4_tr_bz: c4,
        c5_strict_min: c1,
        kernel_residual,
        duality_gap,
        tol,
        tol_eig,
        passed,
        degenerate: None,
    })
}

/// `λ < min_{k≠l} (n_l n_k/(n_l+n_k)) min_{j∈G_l} (‖X̄_k − X_j‖² − ‖X̄_l − X_j‖²)`
/// is sufficient for strictly positive off-diagonal blocks; this returns the right side.
pub fn lambda_uniqueness_bound(x: &DMatrix<f64>, part: &Partition) -> Result<f64> {
    check_dims(x.ncols(), part)?;
    let means = cluster_means(x, part);
    let sizes = part.sizes();
    let groups = part.groups();
    let mut best = f64::INFINITY;
    for l in 0..part.k() {
        for k in 0..part.k() {
            if k == l {
                continue;
            }
            let (nl, nk) = (sizes[l] as f64, sizes[k] as f64);
            let inner = groups[l]
                .iter()
                .map(|&j| {
                    let xj = x.column(j);
                    (means.column(k) - xj).norm_squared() - (means.column(l) - xj).norm_squared()
                })
                .fold(f64::INFINITY, f64::min);
            best = best.min(nl * nk / (nl + nk) * inner);
        }
    }
    Ok(best)
}

/// Plug-in noise variance: median over coordinates of the within-cluster
/// residual variance after spectral-initialized Lloyd.
pub fn estimate_sigma2(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<f64> {
    let (p, n) = x.shape();
    if n <= k {
        return Err(Error::InvalidInput(format!("need n > K to estimate variance (n={n}, K={k})")));
    }
    let init = crate::baselines::spectral_init(x, k, seed)?;
    let part = crate::baselines::lloyd(x, k, &init, 100)?;
    let means = cluster_means(x, &part);
    let mut per_coord: Vec<f64> = (0..p)
        .map(|r| {
            part.labels()
                .iter()
                .enumerate()
                .map(|(i, &l)| (x[(r, i)] - means[(r, l)]).powi(2))
                .sum::<f64>()
                / (n - k) as f64
        })
        .collect();
    per_coord.sort_by(f64::total_cmp);
    let mid = p / 2;
    Ok(if p % 2 == 1 {
        per_coord[mid]
    } else {
        0.5 * (per_coord[mid - 1] + per_coord[mid])
    })
}

/// `min_{k<l} ‖X̄_k − X̄_l‖² − σ²p(1/n_k + 1/n_l)`, an unbiased estimate of each
/// pairwise squared center distance given the labels.
pub fn estimate_separation(x: &DMatrix<f64>, part: &Partition, sigma2: f64) -> Result<f64> {
    check_dims(x.ncols(), part)?;
    let means = cluster_means(x, part);
    let sizes = part.sizes();
    let p = x.nrows() as f64;
    let mut best = f64::INFINITY;
    for k in 0..part.k() {
        for l in k + 1..part.k() {
            let raw = (means.column(k) - means.column(l)).norm_squared();
            let bias = sigma2 * p * (1.0 / sizes[k] as f64 + 1.0 / sizes[l] as f64);
            best = best.min(raw - bias);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_gen::{noiseless_points, place_centers, sample_dataset, MixtureSpec, PlacementMode};
    use crate::solver::build_affinity;

    #[test]
    fn lambda_examples() {
        assert_eq!(construct_lambda(1.0, 10, 50.0, 40.0, 0.5).unwrap(), 260.0);
        let tiny = construct_lambda(1.0, 10, 50.0, 40.0, 1e-12).unwrap();
        assert!((tiny - 10.0).abs() < 1e-9);
        assert_eq!(construct_lambda(2.0, 10, 50.0, 0.0, 0.3).unwrap(), 20.0);
        assert!(construct_lambda(1.0, 10, 50.0, 40.0, 1.0).is_err());
    }

    #[test]
    fn alpha_noiseless_and_singletons() {
        let c = place_centers(PlacementMode::Orthogonal, 2, 3, 6.0, 0).unwrap();
        let (x, part) = noiseless_points(&c, &[4, 3]).unwrap();
        let a = build_affinity(&x).unwrap();
        let lambda = 1.7;
        let alpha = construct_alpha(&a, &part, lambda).unwrap();
        for (i, &l) in part.labels().iter().enumerate() {
            let mu2 = c.matrix().column(l).norm_squared();
            let nk = part.sizes()[l] as f64;
            assert!((alpha[i] - (mu2 - lambda / nk)).abs() < 1e-12);
        }

        let x = DMatrix::from_column_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.25]);
        let part = Partition::from_zero_based(vec![0, 1, 2], 3).unwrap();
        let a = build_affinity(&x).unwrap();
        let alpha = construct_alpha(&a, &part, 0.9).unwrap();
        for i in 0..3 {
            assert!((alpha[i] - (a.matrix()[(i, i)] - 0.9)).abs() < 1e-12);
        }
    }

    #[test]
    fn b_noiseless_is_constant_block() {
        let s = 6;
        let delta2 = 5.0;
        let c = place_centers(PlacementMode::Orthogonal, 2, 2, delta2, 0).unwrap();
        let (x, part) = noiseless_points(&c, &[s, s]).unwrap();
        let lambda = 3.0;
        let b = construct_b(&x, &part, lambda).unwrap();
        let entry = (-lambda + s as f64 / 2.0 * delta2) / s as f64;
        for i in 0..2 * s {
            for j in 0..2 * s {
                let expect = if (i < s) == (j < s) { 0.0 } else { entry };
                assert!((b[(i, j)] - expect).abs() < 1e-12, "{i},{j}");
            }
        }
        let b0 = construct_b(&x, &part, 0.0).unwrap();
        assert!(b0[(0, s)] > 0.0);
    }

    #[test]
    fn degenerate_block_is_reported() {
        let s = 4;
        let delta2 = 2.0;
        let c = place_centers(PlacementMode::Orthogonal, 2, 2, delta2, 0).unwrap();
        let (x, part) = noiseless_points(&c, &[s, s]).unwrap();
        // t = −sλ + (s²/2) Δ² vanishes at λ = sΔ²/2
        let lambda = s as f64 * delta2 / 2.0;
        assert!(matches!(construct_b(&x, &part, lambda), Err(Error::DegenerateBlock { .. })));
        let report = verify_certificate(&x, &part, lambda, Tolerances::default()).unwrap();
        assert!(!report.passed);
        assert!(report.degenerate.is_some());
    }

    #[test]
    fn noiseless_certificate_passes_with_lambda_spectrum() {
        let c = place_centers(PlacementMode::Orthogonal, 2, 2, 4.0, 0).unwrap();
        let (x, part) = noiseless_points(&c, &[25, 25]).unwrap();
        let lambda = 0.25 * 0.5 * 25.0 * 4.0;
        let r = verify_certificate(&x, &part, lambda, Tolerances::default()).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.c2_min_eig_on_gamma - lambda).abs() < 1e-8);
        assert!(r.duality_gap.abs() < 1e-9 * (1.0 + lambda));
    }

    #[test]
    fn lambda_above_uniqueness_bound_fails() {
        let c = place_centers(PlacementMode::Orthogonal, 2, 8, 30.0, 0).unwrap();
        let d = sample_dataset(&c, &MixtureSpec::equal(20, 2, 0.5, 3).unwrap()).unwrap();
        let bound = lambda_uniqueness_bound(&d.x, &d.truth).unwrap();
        assert!(bound > 0.0);
        let r = verify_certificate(&d.x, &d.truth, bound * 1.05, Tolerances::default()).unwrap();
        assert!(r.c1_min_b_offdiag < 0.0);
        assert!(!r.passed);
    }

    #[test]
    fn uniqueness_bound_examples() {
        let s = 5;
        let delta2 = 7.0;
        let c = place_centers(PlacementMode::Orthogonal, 2, 3, delta2, 0).unwrap();
        let (x, part) = noiseless_points(&c, &[s, s]).unwrap();
        let bound = lambda_uniqueness_bound(&x, &part).unwrap();
        assert!((bound - s as f64 / 2.0 * delta2).abs() < 1e-10);

        // point 2 sits midway between the empirical means (0 and 2)
        let x = DMatrix::from_column_slice(1, 4, &[0.0, 0.0, 1.0, 3.0]);
        let part = Partition::from_zero_based(vec![0, 0, 1, 1], 2).unwrap();
        assert!(lambda_uniqueness_bound(&x, &part).unwrap() <= 0.0);

        let d = sample_dataset(&c, &MixtureSpec::new(vec![4, 6], 0.8, 1).unwrap()).unwrap();
        let mut shifted = d.x.clone();
        for mut col in shifted.column_iter_mut() {
            col.add_scalar_mut(3.5);
        }
        let a = lambda_uniqueness_bound(&d.x, &d.truth).unwrap();
        let b = lambda_uniqueness_bound(&shifted, &d.truth).unwrap();
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn w_trivial_case() {
        let a = AffinityMatrix::from_matrix(DMatrix::zeros(3, 3)).unwrap();
        let (w, asym) = build_w(&a, 2.5, &[0.0; 3], &DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(w, DMatrix::identity(3, 3) * 2.5);
        assert_eq!(asym, 0.0);
    }

    #[test]
    fn plug_in_estimates() {
        use crate::model_gen::{cutoff_threshold, place_centers, sample_dataset, MixtureSpec, PlacementMode};
        let cutoff = cutoff_threshold(200, 2, 40, 2.0).unwrap();
        let c = place_centers(PlacementMode::Orthogonal, 2, 40, 3.0 * cutoff, 0).unwrap();
        let data = sample_dataset(&c, &MixtureSpec::equal(200, 2, 2.0, 9).unwrap()).unwrap();
        let s2 = estimate_sigma2(&data.x, 2, 1).unwrap();
        assert!((s2 - 2.0).abs() < 0.2, "{s2}");
        let d2 = estimate_separation(&data.x, &data.truth, 2.0).unwrap();
        assert!((d2 / (3.0 * cutoff) - 1.0).abs() < 0.1, "{d2}");
    }
}
