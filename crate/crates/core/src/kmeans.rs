//! Lloyd iterations on column points, shared by rounding and the baselines.

use nalgebra::DMatrix;
use rand::Rng as _;

use crate::rng::Rng;

/// Nearest center for every column of `points`; ties go to the lowest cluster id.
pub(crate) fn assign(points: &DMatrix<f64>, centers: &DMatrix<f64>) -> Vec<usize> {
    points
        .column_iter()
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (k, c) in centers.column_iter().enumerate() {
                let d = (x - c).norm_squared();
                if d < best.1 {
                    best = (k, d);
                }
            }
            best.0
        })
        .collect()
}

pub(crate) fn centroids(points: &DMatrix<f64>, labels: &[usize], k: usize) -> DMatrix<f64> {
    let mut sums = DMatrix::zeros(points.nrows(), k);
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut col = sums.column_mut(l);
        col += points.column(i);
        counts[l] += 1;
    }
    for (l, &c) in counts.iter().enumerate() {
        if c > 0 {
            let mut col = sums.column_mut(l);
            col /= c as f64;
        }
    }
    sums
}

/// Move the point farthest from its center into each empty cluster, never
/// emptying another cluster. Returns whether anything moved.
pub(crate) fn repair_empty(points: &DMatrix<f64>, labels: &mut [usize], k: usize) -> bool {
    let mut moved = false;
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return moved;
        };
        let centers = centroids(points, labels, k);
        let mut far = None::<(usize, f64)>;
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] < 2 {
                continue;
            }
            let d = (points.column(i) - centers.column(l)).norm_squared();
            if far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        match far {
            Some((i, _)) => {
                labels[i] = empty;
                moved = true;
            }
            // fewer points than clusters; callers guarantee n >= K
            None => return moved,
        }
    }
}

/// Within-cluster sum of squares.
pub(crate) fn sse(points: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let centers = centroids(points, labels, k);
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| (points.column(i) - centers.column(l)).norm_squared())
        .sum()
}

/// Lloyd's algorithm from `labels` until the labeling is fixed or `max_iters`.
pub(crate) fn lloyd_from(
    points: &DMatrix<f64>,
    labels: Vec<usize>,
    k: usize,
    max_iters: usize,
) -> Vec<usize> {
    lloyd_counted_from(points, labels, k, max_iters).0
}

/// As [`lloyd_from`], also returning the number of sweeps performed.
pub(crate) fn lloyd_counted_from(
    points: &DMatrix<f64>,
    mut labels: Vec<usize>,
    k: usize,
    max_iters: usize,
) -> (Vec<usize>, usize) {
    repair_empty(points, &mut labels, k);
    let mut sweeps = 0;
    for _ in 0..max_iters {
        sweeps += 1;
        let centers = centroids(points, &labels, k);
        let mut next = assign(points, &centers);
        repair_empty(points, &mut next, k);
        if next == labels {
            break;
        }
        labels = next;
    }
    (labels, sweeps)
}

/// k-means++ seeding: first center uniform, later ones with probability ∝ D².
pub(crate) fn plus_plus_init(points: &DMatrix<f64>, k: usize, rng: &mut Rng) -> DMatrix<f64> {
    let n = points.ncols();
    let mut centers = DMatrix::zeros(points.nrows(), k);
    let first = rng.random_range(0..n);
    centers.set_column(0, &points.column(first));
    let mut d2: Vec<f64> = points
        .column_iter()
        .map(|x| (x - centers.column(0)).norm_squared())
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_column(c, &points.column(pick));
        for (i, x) in points.column_iter().enumerate() {
            d2[i] = d2[i].min((x - centers.column(c)).norm_squared());
        }
    }
    centers
}

/// Best-of-`restarts` Lloyd runs from k-means++ seeds, scored by SSE.
/// Earlier restarts win ties.
pub(crate) fn kmeans_restarts(
    points: &DMatrix<f64>,
    k: usize,
    restarts: usize,
    max_iters: usize,
    rng: &mut Rng,
) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let seeds = plus_plus_init(points, k, rng);
        let labels = lloyd_from(points, assign(points, &seeds), k, max_iters);
        let score = sse(points, &labels, k);
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, labels));
        }
    }
    best.map(|(_, l)| l).unwrap_or_default()
}
