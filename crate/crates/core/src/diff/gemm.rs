//! Thin safe wrappers over `matrixmultiply::dgemm` for the three products an
//! affine layer needs.

/// `out[m×n] (+)= a[m×k] · b[k×n]`
pub(crate) fn mm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64], accumulate: bool) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths checked above match the row-major strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out[m×n] += a[m×k] · bᵀ` where `b` is stored as `[n×k]`.
pub(crate) fn mm_bt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(out.len(), m * n);
    // SAFETY: b is read as its transpose through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `out[m×n] += aᵀ · b` where `a` is stored as `[k×m]` and `b` as `[k×n]`.
pub(crate) fn mm_at(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    // SAFETY: a is read as its transpose through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}
