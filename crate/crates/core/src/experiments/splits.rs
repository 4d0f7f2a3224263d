//! Random train/test partitions of the observed cells.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::masked::MaskedMatrix;

/// Number of reshuffles tried before a split is declared infeasible.
pub const MAX_SPLIT_ATTEMPTS: usize = 1000;

fn observed_cells(data: &MaskedMatrix) -> Vec<(usize, usize)> {
    data.observed().map(|(i, j, _)| (i, j)).collect()
}

fn mask_of(dim: (usize, usize), cells: &[(usize, usize)]) -> Array2<bool> {
    let mut m = Array2::from_elem(dim, false);
    for &c in cells {
        m[c] = true;
    }
    m
}

/// Splits the observed cells into train and test parts.
pub fn split_by_mask(
    data: &MaskedMatrix,
    test_mask: &Array2<bool>,
) -> Result<(MaskedMatrix, MaskedMatrix)> {
    let train = data.restrict(&test_mask.mapv(|t| !t))?;
    let test = data.restrict(test_mask)?;
    Ok((train, test))
}

// Every row and column observed in `data` keeps a training cell.
fn covers(data: &MaskedMatrix, test: &Array2<bool>) -> bool {
    let rows_ok = (0..data.nrows()).all(|i| {
        let idx = data.row_indices(i);
        idx.is_empty() || idx.iter().any(|&j| !test[[i, j]])
    });
    rows_ok
        && (0..data.ncols()).all(|j| {
            let idx = data.col_indices(j);
            idx.is_empty() || idx.iter().any(|&i| !test[[i, j]])
        })
}

/// Moves a random `test_fraction` of the observed cells into a test set,
/// resampling until no observed row or column loses all its training cells.
pub fn split_train_test<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(MaskedMatrix, MaskedMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(
            "test_fraction",
            format!("must lie strictly between 0 and 1, got {test_fraction}"),
        ));
    }
    let mut cells = observed_cells(data);
    let n_test = (test_fraction * cells.len() as f64).round() as usize;
    if n_test == 0 || n_test == cells.len() {
        return Err(invalid(
            "test_fraction",
            format!("leaves an empty part with {} observed cells", cells.len()),
        ));
    }
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        cells.shuffle(rng);
        let test = mask_of(data.dim(), &cells[..n_test]);
        if covers(data, &test) {
            return split_by_mask(data, &test);
        }
    }
    Err(Error::SplitInfeasible {
        attempts: MAX_SPLIT_ATTEMPTS,
    })
}

/// Partitions the observed cells into `k` test masks whose sizes differ by at most one.
pub fn k_folds<R: Rng + ?Sized>(
    data: &MaskedMatrix,
    k: usize,
    rng: &mut R,
) -> Result<Vec<Array2<bool>>> {
    let mut cells = observed_cells(data);
    if k == 0 || k > cells.len() {
        return Err(invalid(
            "folds",
            format!("need 1 <= k <= {} observed cells, got {k}", cells.len()),
        ));
    }
    cells.shuffle(rng);
    let mut folds = vec![Array2::from_elem(data.dim(), false); k];
    for (p, &c) in cells.iter().enumerate() {
        folds[p % k][c] = true;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SeededRng;

    fn full(rows: usize, cols: usize) -> MaskedMatrix {
        MaskedMatrix::fully_observed(Array2::from_shape_fn((rows, cols), |(i, j)| {
            (i * cols + j) as f64
        }))
        .unwrap()
    }

    #[test]
    fn tenth_of_hundred_cells() {
        let (train, test) =
            split_train_test(&full(10, 10), 0.1, &mut SeededRng::new(1, 0)).unwrap();
        assert_eq!(test.n_observed(), 10);
        assert_eq!(train.n_observed(), 90);
    }

    #[test]
    fn folds_of_equal_size() {
        let folds = k_folds(&full(10, 10), 10, &mut SeededRng::new(2, 0)).unwrap();
        assert!(folds.iter().all(|f| f.iter().filter(|&&x| x).count() == 10));
        let singles = k_folds(&full(2, 3), 6, &mut SeededRng::new(2, 0)).unwrap();
        assert!(singles
            .iter()
            .all(|f| f.iter().filter(|&&x| x).count() == 1));
        assert!(k_folds(&full(2, 3), 7, &mut SeededRng::new(2, 0)).is_err());
    }

    #[test]
    fn infeasible_split_is_reported() {
        // A single column cannot keep a training cell in every row.
        let err = split_train_test(&full(4, 1), 0.5, &mut SeededRng::new(0, 0)).unwrap_err();
        assert!(matches!(err, Error::SplitInfeasible { .. }));
    }
}
