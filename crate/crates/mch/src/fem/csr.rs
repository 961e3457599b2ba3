//! Minimal CSR storage for assembled operators.

/// Compressed sparse row matrix with summed duplicate entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut row = 0usize;
        for &(r, c, v) in triplets.iter() {
            debug_assert!(r < nrows && c < ncols);
            while row < r {
                indptr.push(indices.len());
                row += 1;
            }
            if let (Some(last_c), Some(last_v)) = (indices.last(), values.last_mut()) {
                if *last_c == c && indptr.len() == row + 1 && indptr[row] < indices.len() {
                    *last_v += v;
                    continue;
                }
            }
            indices.push(c);
            values.push(v);
        }
        while row < nrows {
            indptr.push(indices.len());
            row += 1;
        }
        Csr {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    /// y = A x
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = |A| |x|, the componentwise absolute action used for backward-error
    /// scaling.
    pub fn apply_abs(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v.abs() * x[c].abs();
            }
            y[r] = acc;
        }
        y
    }

    /// y = |A^T| |x|
    pub fn apply_transpose_abs(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let xr = x[r].abs();
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v.abs() * xr;
            }
        }
        y
    }

    /// y = A^T x
    pub fn apply_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// x^T A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        x.iter().zip(ay.iter()).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_apply() {
        let mut t = vec![(0, 0, 1.0), (0, 0, 2.0), (1, 2, 4.0), (0, 1, -1.0)];
        let a = Csr::from_triplets(2, 3, &mut t);
        assert_eq!(a.nnz(), 3);
        let y = a.apply(&[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![2.0, 4.0]);
        let yt = a.apply_transpose(&[1.0, 1.0]);
        assert_eq!(yt, vec![3.0, -1.0, 4.0]);
    }

    #[test]
    fn empty_rows_are_preserved() {
        let mut t = vec![(2, 0, 5.0)];
        let a = Csr::from_triplets(4, 1, &mut t);
        assert_eq!(a.apply(&[2.0]), vec![0.0, 0.0, 10.0, 0.0]);
    }
}
