//! Row-major dense matrix and the three GEMM shapes the MLP code needs.

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// `out (n×m) = a (n×k) · wᵀ` where `w` is `m×k` row-major; `out` is overwritten.
pub(crate) fn mul_a_bt(a: &[f64], w: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(w.len(), m * k);
    debug_assert_eq!(out.len(), n * m);
    if n == 0 || m == 0 {
        return;
    }
    // SAFETY: slice lengths checked above; strides describe row-major layouts.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            w.as_ptr(),
            1,
            k as isize,
            0.0,
            out.as_mut_ptr(),
            m as isize,
            1,
        );
    }
}

/// `out (m×k) += dᵀ (m×n) · h (n×k)`.
pub(crate) fn acc_at_b(d: &[f64], h: &[f64], n: usize, m: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(d.len(), n * m);
    debug_assert_eq!(h.len(), n * k);
    debug_assert_eq!(out.len(), m * k);
    if n == 0 || m == 0 || k == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            n,
            k,
            1.0,
            d.as_ptr(),
            1,
            m as isize,
            h.as_ptr(),
            k as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}

/// `out (n×k) = d (n×m) · w (m×k)`; `out` is overwritten.
pub(crate) fn mul_a_b(d: &[f64], w: &[f64], n: usize, m: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(d.len(), n * m);
    debug_assert_eq!(w.len(), m * k);
    debug_assert_eq!(out.len(), n * k);
    if n == 0 || k == 0 {
        return;
    }
    // SAFETY: as above.
    unsafe {
        matrixmultiply::dgemm(
            n,
            m,
            k,
            1.0,
            d.as_ptr(),
            m as isize,
            1,
            w.as_ptr(),
            k as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
}
