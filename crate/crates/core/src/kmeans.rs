//! Lloyd's k-means, used to initialise tri-factorisation row/column factors.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::masked::MaskedMatrix;

const MAX_ITERATIONS: usize = 100;

/// Clusters the rows of `points` and returns an `N x k` 0/1 indicator matrix.
///
/// Seeding is k-means++ from `rng`. Every row gets exactly one cluster and no
/// cluster is left empty.
pub fn kmeans<R: Rng + ?Sized>(
    points: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::KMeans { k, n });
    }
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut assignment = vec![usize::MAX; n];

    for _ in 0..MAX_ITERATIONS {
        let mut next: Vec<usize> = (0..n)
            .map(|i| nearest(points.row(i), &centroids).0)
            .collect();
        fill_empty_clusters(points, &centroids, &mut next, k);
        if next == assignment {
            break;
        }
        assignment = next;
        centroids = recompute_centroids(points, &assignment, k);
    }

    let mut indicators = Array2::zeros((n, k));
    for (i, &c) in assignment.iter().enumerate() {
        indicators[[i, c]] = 1.0;
    }
    Ok(indicators)
}

/// k-means on the rows of a masked matrix, imputing missing cells with column means.
pub fn kmeans_rows<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    k: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let means = data.column_means();
    let mut points = data.values().to_owned();
    for ((i, j), v) in points.indexed_iter_mut() {
        if !data.is_observed(i, j) {
            *v = means[j];
        }
    }
    kmeans(points.view(), k, rng)
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(p: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    centroids
        .rows()
        .into_iter()
        .enumerate()
        .map(|(c, row)| (c, sq_dist(p, row)))
        .fold(
            (0, f64::INFINITY),
            |best, cur| if cur.1 < best.1 { cur } else { best },
        )
}

fn seed_plus_plus<R: Rng + ?Sized>(
    points: ArrayView2<'_, f64>,
    k: usize,
    rng: &mut R,
) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
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
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn recompute_centroids(points: ArrayView2<'_, f64>, assignment: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        let mut row = sums.row_mut(c);
        row += &points.row(i);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).mapv_inplace(|v| v / count as f64);
        }
    }
    sums
}

// Moves the point farthest from its centroid (among clusters with more than
// one member) into each empty cluster.
fn fill_empty_clusters(
    points: ArrayView2<'_, f64>,
    centroids: &Array2<f64>,
    assignment: &mut [usize],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignment.iter() {
            counts[c] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = assignment
            .iter()
            .enumerate()
            .filter(|&(_, &c)| counts[c] > 1)
            .map(|(i, &c)| (i, sq_dist(points.row(i), centroids.row(c))))
            .fold(
                (usize::MAX, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            )
            .0;
        assignment[donor] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SeededRng;
    use ndarray::array;

    fn check_partition(ind: &Array2<f64>) {
        for row in ind.rows() {
            assert_eq!(row.sum(), 1.0);
        }
        for col in ind.columns() {
            assert!(col.sum() >= 1.0);
        }
    }

    #[test]
    fn one_point_per_cluster() {
        let pts = array![[0.0, 1.0], [5.0, 5.0], [9.0, 0.0], [2.0, 7.0]];
        let ind = kmeans(pts.view(), 4, &mut SeededRng::new(1, 0)).unwrap();
        check_partition(&ind);
        // A permutation matrix.
        for col in ind.columns() {
            assert_eq!(col.sum(), 1.0);
        }
    }

    #[test]
    fn recovers_planted_clusters() {
        let mut pts = Array2::zeros((20, 3));
        for i in 0..20 {
            let base = if i < 12 { 0.0 } else { 100.0 };
            for d in 0..3 {
                pts[[i, d]] = base + 0.01 * ((i * 7 + d * 3) % 5) as f64;
            }
        }
        for seed in 0..10 {
            let ind = kmeans(pts.view(), 2, &mut SeededRng::new(seed, 0)).unwrap();
            check_partition(&ind);
            let first = ind.row(0).to_owned();
            for i in 0..20 {
                assert_eq!(ind.row(i) == first, i < 12, "seed {seed}, row {i}");
            }
        }
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = Array2::from_elem((5, 2), 1.0);
        let ind = kmeans(pts.view(), 3, &mut SeededRng::new(0, 0)).unwrap();
        check_partition(&ind);
    }

    #[test]
    fn invalid_k() {
        let pts = Array2::zeros((3, 2));
        assert!(matches!(
            kmeans(pts.view(), 0, &mut SeededRng::new(0, 0)),
            Err(Error::KMeans { .. })
        ));
        assert!(matches!(
            kmeans(pts.view(), 4, &mut SeededRng::new(0, 0)),
            Err(Error::KMeans { .. })
        ));
    }

    #[test]
    fn missing_cells_are_imputed() {
        let data = MaskedMatrix::from_dense(
            array![[0.0, 0.0], [0.1, f64::NAN], [50.0, 50.0], [50.1, 50.0]],
            array![[true, true], [true, false], [true, true], [true, true]],
        )
        .unwrap();
        let ind = kmeans_rows(&data, 2, &mut SeededRng::new(4, 0)).unwrap();
        // Row 1's missing cell becomes the column mean 100/3, which is still closer to cluster 0.
        assert_eq!(ind.row(0), ind.row(1));
        assert_eq!(ind.row(2), ind.row(3));
        assert_ne!(ind.row(0), ind.row(2));
    }
}
