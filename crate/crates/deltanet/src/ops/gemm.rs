//! Thin row-major GEMM helpers over [`Elem::gemm_strided`].

use crate::tensor::Elem;

/// `c = alpha * a @ b + beta * c`; `a: m x k`, `b: k x n`, row-major.
pub(crate) fn gemm<E: Elem>(
    m: usize,
    k: usize,
    n: usize,
    alpha: E,
    a: &[E],
    b: &[E],
    beta: E,
    c: &mut [E],
) {
    E::gemm_strided(m, k, n, alpha, a, k, 1, b, n, 1, beta, c);
}

/// `c = alpha * a @ b^T + beta * c`; `a: m x k`, `b: n x k`, row-major.
pub(crate) fn gemm_nt<E: Elem>(
    m: usize,
    k: usize,
    n: usize,
    alpha: E,
    a: &[E],
    b: &[E],
    beta: E,
    c: &mut [E],
) {
    E::gemm_strided(m, k, n, alpha, a, k, 1, b, 1, k, beta, c);
}

/// `c = alpha * a^T @ b + beta * c`; `a: k x m`, `b: k x n`, row-major.
pub(crate) fn gemm_tn<E: Elem>(
    m: usize,
    k: usize,
    n: usize,
    alpha: E,
    a: &[E],
    b: &[E],
    beta: E,
    c: &mut [E],
) {
    E::gemm_strided(m, k, n, alpha, a, 1, m, b, n, 1, beta, c);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_variants_agree_with_plain() {
        // a: 2x3, b: 3x2
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0f64, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c0 = [0.0f64; 4];
        gemm(2, 3, 2, 1.0, &a, &b, 0.0, &mut c0);

        // b_t: 2x3 row-major holding b^T
        let b_t = [7.0f64, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c1 = [0.0f64; 4];
        gemm_nt(2, 3, 2, 1.0, &a, &b_t, 0.0, &mut c1);
        assert_eq!(c0, c1);

        // a_t: 3x2 row-major holding a^T
        let a_t = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let mut c2 = [0.0f64; 4];
        gemm_tn(2, 3, 2, 1.0, &a_t, &b, 0.0, &mut c2);
        assert_eq!(c0, c2);
    }
}
