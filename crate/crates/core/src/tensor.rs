//! Dense row-major `f64` tensors.
//!
//! Only what the engine needs: construction, 2-D matrix products in the three
//! transpose layouts used by forward/backward passes, and a handful of
//! element-wise helpers. Everything else lives with its caller.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim("Tensor::new", format!("zero extent in shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::dim(
                "Tensor::new",
                format!("shape {shape:?} needs {expected} values, got {}", values.len()),
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut t = Self::zeros(shape);
        t.values.fill(value);
        t
    }

    /// Builds a `rows.len() × width` matrix. All rows must share one width.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::dim("Tensor::from_rows", "ragged rows"));
        }
        Self::new(vec![rows.len(), width], rows.concat())
    }

    /// 2-D constructor for code paths whose shape is known to be valid.
    pub(crate) fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self {
            shape: vec![rows, cols],
            values,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of rows of a 2-D tensor (the whole length for 1-D).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 1 {
            1
        } else {
            self.shape[0]
        }
    }

    /// Row width: the product of every axis after the first.
    pub fn cols(&self) -> usize {
        if self.shape.len() == 1 {
            self.shape[0]
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.values[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols() + c]
    }

    /// Copies the selected rows into a new matrix, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        Tensor::matrix(indices.len(), c, out)
    }

    fn expect_matrix(&self, context: &str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(Error::dim(context, format!("expected a matrix, got shape {:?}", self.shape)));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// `self · rhs` for `(m×k)·(k×n)`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = self.expect_matrix("matmul lhs")?;
        let (k2, n) = rhs.expect_matrix("matmul rhs")?;
        if k != k2 {
            return Err(Error::dim("matmul", format!("({m}x{k}) . ({k2}x{n})")));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.values[i * k..(i + 1) * k];
            let o = &mut out[i * n..(i + 1) * n];
            for (p, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b = &rhs.values[p * n..(p + 1) * n];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Ok(Tensor::matrix(m, n, out))
    }

    /// `selfᵀ · rhs` for `(k×m)ᵀ·(k×n)`.
    pub fn matmul_tn(&self, rhs: &Tensor) -> Result<Tensor> {
        let (k, m) = self.expect_matrix("matmul_tn lhs")?;
        let (k2, n) = rhs.expect_matrix("matmul_tn rhs")?;
        if k != k2 {
            return Err(Error::dim("matmul_tn", format!("({k}x{m})^T . ({k2}x{n})")));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let a = &self.values[p * m..(p + 1) * m];
            let b = &rhs.values[p * n..(p + 1) * n];
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let o = &mut out[i * n..(i + 1) * n];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Ok(Tensor::matrix(m, n, out))
    }

    /// `self · rhsᵀ` for `(m×n)·(k×n)ᵀ`.
    pub fn matmul_nt(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, n) = self.expect_matrix("matmul_nt lhs")?;
        let (k, n2) = rhs.expect_matrix("matmul_nt rhs")?;
        if n != n2 {
            return Err(Error::dim("matmul_nt", format!("({m}x{n}) . ({k}x{n2})^T")));
        }
        let mut out = vec![0.0; m * k];
        for i in 0..m {
            let a = &self.values[i * n..(i + 1) * n];
            for j in 0..k {
                let b = &rhs.values[j * n..(j + 1) * n];
                out[i * k + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Ok(Tensor::matrix(m, k, out))
    }

    /// Column sums of a matrix, as a 1-D tensor.
    pub fn sum_rows(&self) -> Tensor {
        let c = self.cols();
        let mut out = vec![0.0; c];
        for r in self.values.chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        Tensor {
            shape: vec![c],
            values: out,
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s · other`. Shapes must match element-for-element.
    pub fn add_scaled(&mut self, other: &Tensor, s: f64) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(
                "add_scaled",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += s * b;
        }
        Ok(())
    }

    /// Index of the largest entry in each row; ties go to the lowest index.
    pub fn argmax_rows(&self) -> Vec<usize> {
        self.values
            .chunks_exact(self.cols())
            .map(|row| {
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Euclidean norm of column `j` of a matrix.
    pub fn column_norm(&self, j: usize) -> f64 {
        let c = self.cols();
        self.values
            .iter()
            .skip(j)
            .step_by(c)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::new(vec![rows, cols], v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn matmul_layouts_agree() {
        let a = m(2, 3, &[1., 2., 3., 4., 5., 6.]);
        let b = m(3, 2, &[7., 8., 9., 10., 11., 12.]);
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.values(), &[58., 64., 139., 154.]);

        // aᵀ stored explicitly, then matmul_tn must reproduce a·b.
        let at = m(3, 2, &[1., 4., 2., 5., 3., 6.]);
        assert_eq!(at.matmul_tn(&b).unwrap(), ab);

        let bt = m(2, 3, &[7., 9., 11., 8., 10., 12.]);
        assert_eq!(a.matmul_nt(&bt).unwrap(), ab);
    }

    #[test]
    fn matmul_shape_error() {
        let a = m(2, 3, &[0.0; 6]);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension { .. })));
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        let t = m(2, 3, &[1., 3., 3., 0., 0., 0.]);
        assert_eq!(t.argmax_rows(), vec![1, 0]);
    }

    #[test]
    fn column_norms() {
        let t = m(2, 2, &[3., 0., 4., 0.]);
        assert_eq!(t.column_norm(0), 5.0);
        assert_eq!(t.column_norm(1), 0.0);
    }
}
