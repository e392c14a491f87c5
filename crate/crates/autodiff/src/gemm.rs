//! Strided general matrix multiply, `c = alpha * a * b + beta * c`.

#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a> View<'a> {
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            row_stride: cols as isize,
            col_stride: 1,
        }
    }

    /// Transposed view of a row-major matrix that has `cols` columns.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        View {
            data,
            row_stride: 1,
            col_stride: cols as isize,
        }
    }
}

/// `c[m×n] = alpha * a[m×k] · b[k×n] + beta * c`, with `c` row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    assert!(a.data.len() >= m * k && b.data.len() >= k * n);
    // SAFETY: the asserts above bound every index touched by the strided
    // views; matrixmultiply reads a and b and writes only the m×n block of c.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
