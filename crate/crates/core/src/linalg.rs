//! Dense row-major containers for factor matrices and the core tensor.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major `rows × cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Column sums.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Four-way core tensor indexed `(c, d, k, r)`: sender community, receiver
/// community, topic, regime. `d` is the fastest-varying index.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTensor {
    c: usize,
    k: usize,
    r: usize,
    data: Vec<f64>,
}

impl CoreTensor {
    pub fn filled(communities: usize, topics: usize, regimes: usize, value: f64) -> Self {
        Self {
            c: communities,
            k: topics,
            r: regimes,
            data: vec![value; communities * communities * topics * regimes],
        }
    }

    pub fn from_vec(communities: usize, topics: usize, regimes: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == communities * communities * topics * regimes).then_some(Self {
            c: communities,
            k: topics,
            r: regimes,
            data,
        })
    }

    #[inline]
    pub fn communities(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn topics(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn regimes(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn index(&self, c: usize, d: usize, k: usize, r: usize) -> usize {
        ((r * self.k + k) * self.c + c) * self.c + d
    }

    #[inline]
    pub fn get(&self, c: usize, d: usize, k: usize, r: usize) -> f64 {
        self.data[self.index(c, d, k, r)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, d: usize, k: usize, r: usize, v: f64) {
        let i = self.index(c, d, k, r);
        self.data[i] = v;
    }

    /// The `C × C` community network for topic `k` and regime `r`.
    #[inline]
    pub fn slice(&self, k: usize, r: usize) -> &[f64] {
        let n = self.c * self.c;
        let start = (r * self.k + k) * n;
        &self.data[start..start + n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// `X[c][d] = Σ_{i≠j} a[i][c]·b[j][d]`, minus the listed `excluded` ordered
/// pairs. This is the mass of all off-diagonal (sender, receiver) pairs.
pub fn pair_mass(a: &Matrix, b: &Matrix, excluded: &[(usize, usize)]) -> Matrix {
    debug_assert_eq!(a.rows(), b.rows());
    let (ca, cb) = (a.cols(), b.cols());
    let sa = a.col_sums();
    let sb = b.col_sums();
    let mut x = Matrix::zeros(ca, cb);
    for c in 0..ca {
        for d in 0..cb {
            x.set(c, d, sa[c] * sb[d]);
        }
    }
    for i in 0..a.rows() {
        let (ra, rb) = (a.row(i), b.row(i));
        for c in 0..ca {
            let row = x.row_mut(c);
            for d in 0..cb {
                row[d] -= ra[c] * rb[d];
            }
        }
    }
    for &(i, j) in excluded {
        let (ra, rb) = (a.row(i), b.row(j));
        for c in 0..ca {
            let row = x.row_mut(c);
            for d in 0..cb {
                row[d] -= ra[c] * rb[d];
            }
        }
    }
    // cancellation can leave tiny negatives
    for v in x.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_mass_matches_brute_force() {
        let a = Matrix::from_vec(3, 2, vec![1.0, 2.0, 0.5, 0.1, 3.0, 1.5]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![0.2, 1.0, 2.0, 0.7, 1.1, 0.4]).unwrap();
        let excluded = [(0usize, 2usize)];
        let x = pair_mass(&a, &b, &excluded);
        for c in 0..2 {
            for d in 0..2 {
                let mut want = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        if i != j && !(i == 0 && j == 2) {
                            want += a.get(i, c) * b.get(j, d);
                        }
                    }
                }
                assert!((x.get(c, d) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn core_indexing_roundtrip() {
        let mut t = CoreTensor::filled(3, 2, 2, 0.0);
        t.set(2, 1, 1, 0, 5.0);
        assert_eq!(t.get(2, 1, 1, 0), 5.0);
        assert_eq!(t.slice(1, 0)[2 * 3 + 1], 5.0);
        assert_eq!(t.sum(), 5.0);
    }
}
