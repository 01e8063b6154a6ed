//! Symmetric positive definite band matrices and their Cholesky factor.

/// Lower band of a symmetric `n × n` matrix: `get(i, j)` for `i - j <= width`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    width: usize,
    /// Row-major, `width + 1` entries per row; entry `d` of row `i` is `A[i][i - d]`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, width: usize) -> Self {
        Self {
            n,
            width,
            data: vec![0.0; n * (width + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.width, "({i}, {j}) outside band");
        i * (self.width + 1) + (i - j)
    }

    /// Entry `(i, j)` of the symmetric matrix; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.width {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `v` to `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    pub fn add_diagonal(&mut self, extra: &[f64]) {
        for (i, e) in extra.iter().enumerate() {
            let k = self.idx(i, i);
            self.data[k] += e;
        }
    }

    /// `A·x` for the full symmetric matrix.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            y[i] += self.get(i, i) * x[i];
            for j in i.saturating_sub(self.width)..i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
        y
    }

    /// Cholesky factorization `A = L·Lᵀ`; `None` if a pivot is not positive.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let w = self.width;
        let mut l = self.clone();
        for j in 0..self.n {
            let lo = j.saturating_sub(w);
            let mut pivot = l.data[l.idx(j, j)];
            for k in lo..j {
                let v = l.data[l.idx(j, k)];
                pivot -= v * v;
            }
            if !(pivot > 0.0) || !pivot.is_finite() {
                return None;
            }
            let d = pivot.sqrt();
            let jj = l.idx(j, j);
            l.data[jj] = d;
            for i in (j + 1)..(j + w + 1).min(self.n) {
                let mut v = l.data[l.idx(i, j)];
                for k in i.saturating_sub(w).max(lo)..j {
                    v -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
                }
                let ij = l.idx(i, j);
                l.data[ij] = v / d;
            }
        }
        Some(BandCholesky { l })
    }
}

/// Lower-triangular band factor produced by [`BandMatrix::cholesky`].
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let l = &self.l;
        let (n, w) = (l.n, l.width);
        for i in 0..n {
            let mut v = b[i];
            for k in i.saturating_sub(w)..i {
                v -= l.data[l.idx(i, k)] * b[k];
            }
            b[i] = v / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..(i + w + 1).min(n) {
                v -= l.data[l.idx(k, i)] * b[k];
            }
            b[i] = v / l.data[l.idx(i, i)];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn random_spd(n: usize, width: usize, seed: &[f64]) -> (BandMatrix, DMatrix<f64>) {
        let mut band = BandMatrix::zeros(n, width);
        let mut it = seed.iter().cycle();
        for i in 0..n {
            for j in i.saturating_sub(width)..i {
                band.add(i, j, *it.next().unwrap());
            }
            // Diagonal dominance keeps it positive definite.
            band.add(i, i, 2.0 * width as f64 + 1.0);
        }
        let dense = DMatrix::from_fn(n, n, |i, j| band.get(i, j));
        (band, dense)
    }

    #[test]
    fn out_of_band_entries_read_as_zero() {
        let mut m = BandMatrix::zeros(5, 1);
        m.add(2, 1, 3.0);
        assert_eq!(m.get(1, 2), 3.0);
        assert_eq!(m.get(4, 0), 0.0);
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let mut m = BandMatrix::zeros(2, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(1, 0, 2.0);
        assert!(m.cholesky().is_none());
    }

    proptest! {
        #[test]
        fn solve_matches_dense_lu(
            n in 1usize..30,
            width in 0usize..6,
            seed in prop::collection::vec(-1.0f64..1.0, 1..40),
            rhs in prop::collection::vec(-10.0f64..10.0, 30),
        ) {
            let (band, dense) = random_spd(n, width, &seed);
            let b = DVector::from_column_slice(&rhs[..n]);
            let x = band.cholesky().unwrap().solve(b.as_slice());
            let expected = dense.clone().lu().solve(&b).unwrap();
            for (a, e) in x.iter().zip(expected.iter()) {
                prop_assert!((a - e).abs() <= 1e-10 * (1.0 + e.abs()));
            }
            let back = band.mul_vec(&x);
            for (a, e) in back.iter().zip(b.iter()) {
                prop_assert!((a - e).abs() <= 1e-9 * (1.0 + e.abs()));
            }
        }
    }
}
