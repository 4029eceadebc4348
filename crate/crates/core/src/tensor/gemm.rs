//! Safe row-major wrappers over `matrixmultiply`.

fn strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // Logical matrix is rows x cols; storage is either that or its transpose.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! gemm_impl {
    ($name:ident, $ty:ty, $kernel:path) => {
        #[allow(clippy::too_many_arguments)]
        pub(super) fn $name(
            m: usize,
            k: usize,
            n: usize,
            a: &[$ty],
            a_trans: bool,
            b: &[$ty],
            b_trans: bool,
            beta: $ty,
            c: &mut [$ty],
        ) {
            assert!(a.len() >= m * k, "gemm: lhs too short");
            assert!(b.len() >= k * n, "gemm: rhs too short");
            assert!(c.len() >= m * n, "gemm: output too short");
            if m == 0 || n == 0 {
                return;
            }
            let (rsa, csa) = strides(m, k, a_trans);
            let (rsb, csb) = strides(k, n, b_trans);
            // SAFETY: the asserts above bound every index the kernel touches
            // for the given dimensions and strides.
            unsafe {
                $kernel(
                    m,
                    k,
                    n,
                    1.0,
                    a.as_ptr(),
                    rsa,
                    csa,
                    b.as_ptr(),
                    rsb,
                    csb,
                    beta,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
    };
}

gemm_impl!(sgemm, f32, matrixmultiply::sgemm);
gemm_impl!(dgemm, f64, matrixmultiply::dgemm);
