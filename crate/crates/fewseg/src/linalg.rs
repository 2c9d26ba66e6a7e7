//! Small dense linear algebra with fixed evaluation order.
//!
//! Everything downstream (relationship matrices, the attention transform,
//! gradients) is built on these kernels, and the crate promises bitwise
//! reproducibility for a fixed input. That rules out clever blocking or
//! parallel reductions: every sum here runs left to right in index order,
//! and the tests pin that behaviour against naive reference loops.

use crate::error::{Error, Result};

/// Norms below this are treated as zero when computing cosine similarity.
pub const EPS_NORM: f64 = 1e-12;

/// A map whose max-min spread is below this normalizes to all ones.
pub const EPS_FLAT: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
///
/// Index `(r, c)` lives at `data[r * cols + c]`. All routines preserve
/// finiteness: they neither check for nor produce NaN on finite input.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data. The length must be `rows * cols`
    /// and both dimensions must be nonzero.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "matrix dimensions must be nonzero, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "Matrix::from_vec",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * other` with the inner sum accumulated left to right.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: (self.cols, self.cols),
                got: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0.0;
                for k in 0..self.cols {
                    acc += self.data[i * self.cols + k] * other.data[k * other.cols + j];
                }
                out.data[i * other.cols + j] = acc;
            }
        }
        Ok(out)
    }
}

/// Cosine similarity `<u,v> / (|u| |v|)`.
///
/// If either norm falls below [`EPS_NORM`] the similarity is defined as 0:
/// a masked-out location embeds to the zero vector and should relate to
/// nothing. Lengths must match and be nonzero.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.is_empty() || u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "cosine_similarity",
            expected: (u.len(), 1),
            got: (v.len(), 1),
        });
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    let nu = nu.sqrt();
    let nv = nv.sqrt();
    if nu < EPS_NORM || nv < EPS_NORM {
        return Ok(0.0);
    }
    Ok(dot / (nu * nv))
}

/// Moore-Penrose right inverse of a nonzero row vector `g`.
///
/// Returns the column `g^T (g g^T)^{-1}`, the unique vector with
/// `g * result = [1]`. For a binary mask row this is the indicator divided
/// by the foreground count. An all-zero row has no right inverse and is
/// rejected with [`Error::EmptyMask`].
pub fn right_inverse_row(g: &[f64]) -> Result<Matrix> {
    if g.is_empty() {
        return Err(Error::EmptyList("right_inverse_row input"));
    }
    let mut denom = 0.0;
    for &x in g {
        denom += x * x;
    }
    if denom == 0.0 {
        return Err(Error::EmptyMask);
    }
    let data = g.iter().map(|&x| x / denom).collect();
    Matrix::from_vec(g.len(), 1, data)
}

/// Min-max normalization onto `[0, 1]`.
///
/// A flat matrix (spread below [`EPS_FLAT`]) maps to all ones: downstream
/// the attention map then degrades to "attend everywhere" instead of
/// dividing by zero.
pub fn minmax_normalize(m: &Matrix) -> Matrix {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in m.data() {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    let spread = hi - lo;
    let mut out = m.clone();
    if spread < EPS_FLAT {
        for v in out.data_mut() {
            *v = 1.0;
        }
    } else {
        for v in out.data_mut() {
            *v = (*v - lo) / spread;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent reference: same left-to-right contract, written as a
    /// straight transcription of the definition.
    fn matmul_reference(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    #[test]
    fn matmul_column_vector() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 2);
        assert!(matches!(
            a.matmul(&b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matmul_matches_reference_bitwise_up_to_64() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, m, p) in &[(1, 1, 1), (3, 5, 2), (17, 9, 33), (64, 64, 64)] {
            let a = Matrix::from_vec(n, m, (0..n * m).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let b = Matrix::from_vec(m, p, (0..m * p).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .unwrap();
            let got = a.matmul(&b).unwrap();
            let want = matmul_reference(&a, &b);
            assert_eq!(got.data(), want.data(), "{n}x{m} * {m}x{p}");
        }
    }

    #[test]
    fn cosine_frozen_value() {
        let c = cosine_similarity(&[3.0, 4.0], &[4.0, 3.0]).unwrap();
        assert!((c - 0.96).abs() < 1e-15, "got {c}");
    }

    #[test]
    fn cosine_zero_vector_is_zero() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_length_mismatch() {
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn right_inverse_binary_row() {
        let inv = right_inverse_row(&[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!((inv.rows(), inv.cols()), (4, 1));
        assert_eq!(inv.data(), &[0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn right_inverse_rejects_zero_row() {
        assert!(matches!(
            right_inverse_row(&[0.0, 0.0, 0.0]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn minmax_frozen_value() {
        let m = Matrix::from_vec(2, 2, vec![0.0, 5.0, 10.0, 5.0]).unwrap();
        let n = minmax_normalize(&m);
        assert_eq!(n.data(), &[0.0, 0.5, 1.0, 0.5]);
    }

    #[test]
    fn minmax_flat_goes_to_ones() {
        let m = Matrix::from_vec(1, 3, vec![2.5, 2.5, 2.5]).unwrap();
        assert_eq!(minmax_normalize(&m).data(), &[1.0, 1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn cosine_self_is_one(v in proptest::collection::vec(-100.0f64..100.0, 1..16)) {
            let n: f64 = v.iter().map(|x| x * x).sum();
            prop_assume!(n.sqrt() >= 1e-6);
            let c = cosine_similarity(&v, &v).unwrap();
            prop_assert!((c - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn cosine_bounded(
            u in proptest::collection::vec(-100.0f64..100.0, 4),
            v in proptest::collection::vec(-100.0f64..100.0, 4),
        ) {
            let c = cosine_similarity(&u, &v).unwrap();
            prop_assert!(c.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn cosine_scale_invariant(
            u in proptest::collection::vec(-10.0f64..10.0, 3),
            v in proptest::collection::vec(-10.0f64..10.0, 3),
            alpha in 0.01f64..100.0,
        ) {
            let nu: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assume!(nu >= 1e-3 && nv >= 1e-3);
            let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            let a = cosine_similarity(&u, &v).unwrap();
            let b = cosine_similarity(&su, &v).unwrap();
            prop_assert!((a - b).abs() <= 1e-9);
        }

        #[test]
        fn right_inverse_identity(bits in proptest::collection::vec(proptest::bool::ANY, 1..256)) {
            prop_assume!(bits.iter().any(|&b| b));
            let g: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let inv = right_inverse_row(&g).unwrap();
            let row = Matrix::from_vec(1, g.len(), g.clone()).unwrap();
            let prod = row.matmul(&inv).unwrap();
            prop_assert!((prod.get(0, 0) - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn minmax_in_unit_range_and_idempotent(
            v in proptest::collection::vec(-1e3f64..1e3, 2..64),
        ) {
            let m = Matrix::from_vec(1, v.len(), v).unwrap();
            let n = minmax_normalize(&m);
            for &x in n.data() {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            let nn = minmax_normalize(&n);
            for (a, b) in n.data().iter().zip(nn.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
