//! Reference clustering methods and the two-cluster likelihood failure probe.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kmeans::{kmeans_restarts, lloyd_counted_from};
use crate::linalg;
use crate::membership::{kmeans_objective, Partition};
use crate::rng::rng_from_seed;

pub const BRUTE_MAX_N: usize = 12;
pub const BRUTE_MAX_K: usize = 3;

/// Exhaustive maximizer of the K-means objective over canonical labelings.
///
/// Canonical labelings (restricted growth strings) are visited in
/// lexicographic order and only a strictly better objective replaces the
/// incumbent, so ties resolve to the lexicographically smallest labeling.
pub fn brute_force_kmeans(x: &DMatrix<f64>, k: usize) -> Result<Partition> {
    let n = x.ncols();
    if n > BRUTE_MAX_N || k > BRUTE_MAX_K {
        return Err(Error::TooLarge(format!(
            "n={n}, K={k}; enumeration is limited to n <= {BRUTE_MAX_N}, K <= {BRUTE_MAX_K}"
        )));
    }
    if k < 1 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= K <= n, got K={k}, n={n}")));
    }
    let gram = x.transpose() * x;
    let mut labels = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    enumerate(&gram, k, 0, 0, &mut labels, &mut best);
    let (_, labels) = best.expect("K <= n admits a surjective labeling");
    Partition::from_zero_based(labels, k)
}

fn enumerate(
    gram: &DMatrix<f64>,
    k: usize,
    pos: usize,
    used: usize,
    labels: &mut [usize],
    best: &mut Option<(f64, Vec<usize>)>,
) {
    let n = labels.len();
    if pos == n {
        if used == k {
            let value = gram_objective(gram, labels, k);
            if best.as_ref().is_none_or(|(b, _)| value > *b) {
                *best = Some((value, labels.to_vec()));
            }
        }
        return;
    }
    // not enough points left to open the remaining clusters
    if k - used > n - pos {
        return;
    }
    let limit = (used + 1).min(k);
    for l in 0..limit {
        labels[pos] = l;
        enumerate(gram, k, pos + 1, used.max(l + 1), labels, best);
    }
}

fn gram_objective(gram: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let mut within = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (i, &li) in labels.iter().enumerate() {
        sizes[li] += 1;
        for (j, &lj) in labels.iter().enumerate() {
            if li == lj {
                within[li] += gram[(i, j)];
            }
        }
    }
    within
        .iter()
        .zip(&sizes)
        .map(|(w, &s)| w / s as f64)
        .sum()
}

/// Lloyd's algorithm on the data columns from `init`.
///
/// Reassignment ties go to the lowest cluster id; an emptied cluster takes the
/// point farthest from its own center.
pub fn lloyd(x: &DMatrix<f64>, k: usize, init: &Partition, max_iters: usize) -> Result<Partition> {
    Ok(lloyd_counted(x, k, init, max_iters)?.0)
}

/// [`lloyd`] plus the number of sweeps it ran.
pub fn lloyd_counted(
    x: &DMatrix<f64>,
    k: usize,
    init: &Partition,
    max_iters: usize,
) -> Result<(Partition, usize)> {
    if init.n() != x.ncols() || init.k() != k {
        return Err(Error::SizeMismatch(format!(
            "init has n={}, K={}; data has n={}, K={k}",
            init.n(),
            init.k(),
            x.ncols()
        )));
    }
    let (labels, sweeps) = lloyd_counted_from(x, init.labels().to_vec(), k, max_iters);
    Ok((Partition::from_zero_based(labels, k)?, sweeps))
}

/// Objective value after each Lloyd sweep, starting with `init`'s value.
pub fn lloyd_objective_path(
    x: &DMatrix<f64>,
    k: usize,
    init: &Partition,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let mut path = vec![kmeans_objective(init, x)?];
    let mut current = init.clone();
    for _ in 0..max_iters {
        let next = lloyd(x, k, &current, 1)?;
        path.push(kmeans_objective(&next, x)?);
        if next == current {
            break;
        }
        current = next;
    }
    Ok(path)
}

pub const SPECTRAL_RESTARTS: usize = 10;

/// k-means (k-means++ seeding, 10 restarts) on the projection of the centered
/// data onto its top-`K` left singular subspace.
pub fn spectral_init(x: &DMatrix<f64>, k: usize, seed: u64) -> Result<Partition> {
    let (p, n) = x.shape();
    if k < 1 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= K <= n, got K={k}, n={n}")));
    }
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let dims = k.min(p);
    // U_Kᵀ X_c from whichever Gram matrix is smaller; both give S_K V_Kᵀ up to sign
    let projected = if p <= n {
        let (_, vecs) = linalg::sym_eigen(&linalg::symmetrize(&(&centered * centered.transpose())))?;
        let top = DMatrix::from_fn(p, dims, |r, c| vecs[(r, p - 1 - c)]);
        top.transpose() * &centered
    } else {
        let (vals, vecs) = linalg::sym_eigen(&linalg::symmetrize(&(centered.transpose() * &centered)))?;
        DMatrix::from_fn(dims, n, |c, i| vecs[(i, n - 1 - c)] * vals[n - 1 - c].max(0.0).sqrt())
    };
    let mut rng = rng_from_seed(seed);
    let labels = kmeans_restarts(&projected, k, SPECTRAL_RESTARTS, 100, &mut rng);
    Ok(Partition::from_zero_based(labels, k)?.canonical())
}

/// Smallest `i` with `⟨η_i X_i, Σ_{j≠i} η_j X_j⟩ < 0`, if any.
///
/// Under the symmetric model `X_i = η_i μ + σ ε_i` such an index means flipping
/// `η_i` alone raises the integrated likelihood, so the likelihood maximizer is
/// not the truth.
pub fn mle_k2_failure_witness(x: &DMatrix<f64>, eta: &[i8]) -> Result<Option<usize>> {
    if eta.len() != x.ncols() {
        return Err(Error::SizeMismatch(format!(
            "{} signs for {} points",
            eta.len(),
            x.ncols()
        )));
    }
    if eta.iter().any(|&e| e != 1 && e != -1) {
        return Err(Error::InvalidInput("signs must be +1 or -1".into()));
    }
    let mut signed_sum = nalgebra::DVector::<f64>::zeros(x.nrows());
    for (i, &e) in eta.iter().enumerate() {
        signed_sum += x.column(i) * f64::from(e);
    }
    for (i, &e) in eta.iter().enumerate() {
        let own = x.column(i) * f64::from(e);
        let rest = &signed_sum - &own;
        if own.dot(&rest) < 0.0 {
            return Ok(Some(i));
        }
    }
    Ok(None)
}

/// Signs `η` for a two-cluster truth: `+1` for cluster 1, `-1` for cluster 2.
pub fn signs_from_partition(part: &Partition) -> Result<Vec<i8>> {
    if part.k() != 2 {
        return Err(Error::InvalidInput(format!("signs need K = 2, got {}", part.k())));
    }
    Ok(part.labels().iter().map(|&l| if l == 0 { 1 } else { -1 }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::membership::recovery_equal;
    use crate::model_gen::{noiseless_points, place_centers, sample_dataset, MixtureSpec, PlacementMode};
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn part(labels: &[usize], k: usize) -> Partition {
        Partition::from_zero_based(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn brute_force_pairs() {
        let x = DMatrix::from_column_slice(2, 4, &[0.0, 0.0, 5.0, 5.0, 0.0, 0.0, 5.0, 5.0]);
        let best = brute_force_kmeans(&x, 2).unwrap();
        assert!(recovery_equal(&best, &part(&[0, 1, 0, 1], 2)));
    }

    #[test]
    fn brute_force_collinear() {
        // {0,1}|{10}: 0.5 + 100 = 100.5; {0}|{1,10}: 60.5; {0,10}|{1}: 51
        let x = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 10.0]);
        let best = brute_force_kmeans(&x, 2).unwrap();
        assert_eq!(best.labels(), &[0, 0, 1]);
        let v = kmeans_objective(&best, &x).unwrap();
        assert!((v - 100.5).abs() < 1e-12);
    }

    #[test]
    fn brute_force_noiseless_and_guard() {
        let c = place_centers(PlacementMode::Orthogonal, 3, 3, 2.0, 0).unwrap();
        let (x, truth) = noiseless_points(&c, &[3, 2, 4]).unwrap();
        assert!(recovery_equal(&brute_force_kmeans(&x, 3).unwrap(), &truth));
        let big = DMatrix::zeros(2, 13);
        assert!(matches!(brute_force_kmeans(&big, 2), Err(Error::TooLarge(_))));
        assert!(matches!(brute_force_kmeans(&DMatrix::zeros(2, 5), 4), Err(Error::TooLarge(_))));
    }

    #[test]
    fn lloyd_fixed_point_and_single_cluster() {
        let c = place_centers(PlacementMode::Orthogonal, 2, 4, 3.0, 0).unwrap();
        let (x, truth) = noiseless_points(&c, &[5, 7]).unwrap();
        assert_eq!(lloyd(&x, 2, &truth, 1).unwrap(), truth);
        let one = part(&[0; 12], 1);
        assert_eq!(lloyd(&x, 1, &one, 10).unwrap(), one);
    }

    #[test]
    fn spectral_examples() {
        let c = place_centers(PlacementMode::Orthogonal, 3, 5, 10.0, 0).unwrap();
        let (x, truth) = noiseless_points(&c, &[4, 4, 4]).unwrap();
        assert!(recovery_equal(&spectral_init(&x, 3, 1).unwrap(), &truth));

        let d = sample_dataset(&c, &MixtureSpec::equal(12, 3, 1.0, 2).unwrap()).unwrap();
        let mut doubled = DMatrix::zeros(5, 24);
        for i in 0..12 {
            doubled.set_column(2 * i, &d.x.column(i));
            doubled.set_column(2 * i + 1, &d.x.column(i));
        }
        let p = spectral_init(&doubled, 3, 9).unwrap();
        for i in 0..12 {
            assert_eq!(p.labels()[2 * i], p.labels()[2 * i + 1]);
        }
    }

    #[test]
    fn witness_examples() {
        let mu = nalgebra::DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let eta: Vec<i8> = vec![1, -1, 1, 1, -1];
        let x = DMatrix::from_fn(3, 5, |r, i| f64::from(eta[i]) * mu[r]);
        assert_eq!(mle_k2_failure_witness(&x, &eta).unwrap(), None);

        let mut x = DMatrix::from_fn(3, 5, |r, i| f64::from(eta[i]) * mu[r] * (1.0 + i as f64));
        let mut v = nalgebra::DVector::<f64>::zeros(3);
        for i in 1..5 {
            v += x.column(i) * f64::from(eta[i]);
        }
        x.set_column(0, &(-(f64::from(eta[0])) * &v));
        assert_eq!(mle_k2_failure_witness(&x, &eta).unwrap(), Some(0));

        assert!(mle_k2_failure_witness(&x, &[1, 1]).is_err());
        assert!(mle_k2_failure_witness(&x, &[1, 0, 1, 1, 1]).is_err());
    }

    proptest! {
        #[test]
        fn lloyd_objective_non_decreasing(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let x = DMatrix::from_fn(3, 15, |_, _| rng.random_range(-3.0..3.0));
            let labels: Vec<usize> = (0..15).map(|i| if i < 3 { i } else { rng.random_range(0..3) }).collect();
            let init = part(&labels, 3);
            let path = lloyd_objective_path(&x, 3, &init, 50).unwrap();
            for w in path.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * (1.0 + w[0].abs()));
            }
        }

        #[test]
        fn brute_dominates_lloyd_and_random(seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let n = rng.random_range(4..10);
            let k = rng.random_range(2..4);
            let x = DMatrix::from_fn(2, n, |_, _| rng.random_range(-3.0..3.0));
            let labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
            let random = part(&labels, k);
            let best = kmeans_objective(&brute_force_kmeans(&x, k).unwrap(), &x).unwrap();
            let ll = kmeans_objective(&lloyd(&x, k, &random, 100).unwrap(), &x).unwrap();
            let rv = kmeans_objective(&random, &x).unwrap();
            prop_assert!(best >= ll - 1e-9);
            prop_assert!(ll >= rv - 1e-9);
        }

        #[test]
        fn lloyd_fixed_at_noiseless_truth(k in 2usize..5, size in 1usize..6, delta2 in 0.1f64..50.0) {
            let c = place_centers(PlacementMode::Orthogonal, k, k + 1, delta2, 0).unwrap();
            let (x, truth) = noiseless_points(&c, &vec![size; k]).unwrap();
            prop_assert_eq!(lloyd(&x, k, &truth, 10).unwrap(), truth);
        }
    }
}
