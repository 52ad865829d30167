use std::fmt;
use std::ops::{Index, IndexMut};

use super::MathError;

/// Dense row-major matrix of `f64`.
///
/// Column vectors are `n × 1` matrices; batches are stored one sample per
/// column. Every product accumulates in ascending inner index, starting from
/// `0.0`, so results are bitwise identical to a naive triple loop.
#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Mat { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MathError> {
        if data.len() != rows * cols {
            return Err(MathError::BadLength { rows, cols, len: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MathError::NonFinite { row: pos / cols.max(1), col: pos % cols.max(1) });
        }
        Ok(Mat { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.as_ref().len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            data.extend_from_slice(row.as_ref());
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn column(values: &[f64]) -> Self {
        Mat { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Copy of the top-left `rows × cols` block.
    pub fn top_left(&self, rows: usize, cols: usize) -> Mat {
        assert!(rows <= self.rows && cols <= self.cols, "slice out of bounds");
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[..cols]);
        }
        out
    }

    /// Copy of the first `rows` rows.
    pub fn top_rows(&self, rows: usize) -> Mat {
        assert!(rows <= self.rows, "slice out of bounds");
        Mat { rows, cols: self.cols, data: self.data[..rows * self.cols].to_vec() }
    }

    /// Gathers the given columns, in order, into a new matrix.
    pub fn select_cols(&self, cols: &[usize]) -> Mat {
        let mut out = Mat::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            let src = self.row(i);
            let dst = out.row_mut(i);
            for (d, &c) in dst.iter_mut().zip(cols) {
                *d = src[c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|v| v * s)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Matrix product `self × rhs`.
    pub fn matmul(&self, rhs: &Mat) -> Result<Mat, MathError> {
        if self.cols != rhs.rows {
            return Err(MathError::shape("matmul", self, rhs));
        }
        let n = rhs.cols;
        let mut out = Mat::zeros(self.rows, n);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = &mut out.data[i * n..(i + 1) * n];
            for (k, &a) in a_row.iter().enumerate() {
                let b_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ × rhs` without materializing the transpose. Same accumulation
    /// order as `self.transpose().matmul(rhs)`.
    pub fn t_matmul(&self, rhs: &Mat) -> Result<Mat, MathError> {
        if self.rows != rhs.rows {
            return Err(MathError::shape("t_matmul", self, rhs));
        }
        let n = rhs.cols;
        let mut out = Mat::zeros(self.cols, n);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = rhs.row(i);
            for (k, &a) in a_row.iter().enumerate() {
                let o_row = &mut out.data[k * n..(k + 1) * n];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self × rhsᵀ`. Same accumulation order as
    /// `self.matmul(&rhs.transpose())`.
    pub fn matmul_t(&self, rhs: &Mat) -> Result<Mat, MathError> {
        if self.cols != rhs.cols {
            return Err(MathError::shape("matmul_t", self, rhs));
        }
        self.matmul(&rhs.transpose())
    }

    pub fn hadamard(&self, rhs: &Mat) -> Result<Mat, MathError> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    pub fn add(&self, rhs: &Mat) -> Result<Mat, MathError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Mat) -> Result<Mat, MathError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    fn zip_with(&self, rhs: &Mat, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Mat, MathError> {
        if self.shape() != rhs.shape() {
            return Err(MathError::shape(op, self, rhs));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }
}

/// Outer product `u vᵀ` of two vectors.
pub fn outer(u: &[f64], v: &[f64]) -> Mat {
    let mut out = Mat::zeros(u.len(), v.len());
    for (i, &a) in u.iter().enumerate() {
        for (o, &b) in out.row_mut(i).iter_mut().zip(v) {
            *o = a * b;
        }
    }
    out
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "\n  {:?}", &self.row(i)[..self.cols.min(8)])?;
        }
        if self.rows > 8 || self.cols > 8 {
            write!(f, "\n  ...")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use proptest::prelude::*;

    fn naive(a: &Mat, b: &Mat) -> Mat {
        let mut out = Mat::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.uniform_in(-1.0, 1.0))
    }

    #[test]
    fn matmul_identity_and_small_case() {
        let a = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(a.matmul(&Mat::identity(2)).unwrap(), a);
        let row = Mat::from_rows(&[[1.0, 2.0]]);
        let col = Mat::from_rows(&[[3.0], [4.0]]);
        assert_eq!(row.matmul(&col).unwrap(), Mat::from_rows(&[[11.0]]));
    }

    #[test]
    fn matmul_matches_triple_loop_exactly() {
        let mut rng = Rng::new(7);
        let a = random(&mut rng, 7, 5);
        let b = random(&mut rng, 5, 3);
        assert_eq!(a.matmul(&b).unwrap(), naive(&a, &b));
    }

    #[test]
    fn matmul_rejects_mismatch() {
        let err = Mat::zeros(2, 3).matmul(&Mat::zeros(2, 3)).unwrap_err();
        assert!(matches!(err, MathError::Shape { op: "matmul", .. }));
    }

    #[test]
    fn hadamard_cases() {
        let a = Mat::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let b = Mat::from_rows(&[[5.0, 6.0], [7.0, 8.0]]);
        assert_eq!(a.hadamard(&b).unwrap(), Mat::from_rows(&[[5.0, 12.0], [21.0, 32.0]]));
        assert_eq!(a.hadamard(&Mat::filled(2, 2, 1.0)).unwrap(), a);
        assert_eq!(a.hadamard(&Mat::zeros(2, 2)).unwrap(), Mat::zeros(2, 2));
        assert!(a.hadamard(&Mat::zeros(2, 3)).is_err());
    }

    #[test]
    fn outer_cases() {
        assert_eq!(outer(&[0.0, 0.0], &[1.0, 2.0, 3.0]), Mat::zeros(2, 3));
        let e = outer(&[1.0, 0.0], &[0.0, 1.0]);
        assert_eq!(e, Mat::from_rows(&[[0.0, 1.0], [0.0, 0.0]]));

        let mut rng = Rng::new(3);
        let u: Vec<f64> = (0..6).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let v: Vec<f64> = (0..4).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        let o = outer(&u, &v);
        for i in 0..6 {
            for j in 0..4 {
                assert_eq!(o[(i, j)], u[i] * v[j]);
            }
        }
    }

    #[test]
    fn from_vec_validates() {
        assert!(matches!(Mat::from_vec(2, 2, vec![0.0; 3]), Err(MathError::BadLength { .. })));
        assert!(matches!(Mat::from_vec(1, 2, vec![0.0, f64::NAN]), Err(MathError::NonFinite { row: 0, col: 1 })));
    }

    proptest! {
        #[test]
        fn products_match_oracle(r in 1usize..=8, k in 1usize..=8, c in 1usize..=8, seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = random(&mut rng, r, k);
            let b = random(&mut rng, k, c);
            let expect = naive(&a, &b);
            prop_assert_eq!(a.matmul(&b).unwrap(), expect.clone());
            prop_assert_eq!(a.transpose().t_matmul(&b).unwrap(), expect.clone());
            prop_assert_eq!(a.matmul_t(&b.transpose()).unwrap(), expect);
            // identity on both sides
            prop_assert_eq!(Mat::identity(r).matmul(&a).unwrap(), a.clone());
            prop_assert_eq!(a.matmul(&Mat::identity(k)).unwrap(), a.clone());
        }

        #[test]
        fn matmul_distributes(n in 1usize..=6, seed in any::<u64>()) {
            // Dyadic entries keep every partial sum exact.
            let mut rng = Rng::new(seed);
            let mut dyadic = |r, c| Mat::from_fn(r, c, |_, _| (rng.below(17) as f64 - 8.0) / 4.0);
            let a = dyadic(n, n);
            let b = dyadic(n, n);
            let c = dyadic(n, n);
            let lhs = a.matmul(&b.add(&c).unwrap()).unwrap();
            let rhs = a.matmul(&b).unwrap().add(&a.matmul(&c).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
        }
    }
}
