use super::Real;

/// Row-major `c (m x n) = op(a) (m x k) . op(b) (k x n)`, optionally added to `c`.
///
/// `a_t` means `a` is stored as `k x m`; `b_t` means `b` is stored as `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    assert!(a.len() >= m * k, "gemm: a has {} elements, need {}", a.len(), m * k);
    assert!(b.len() >= k * n, "gemm: b has {} elements, need {}", b.len(), k * n);
    assert!(c.len() >= m * n, "gemm: c has {} elements, need {}", c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
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

/// Row-major `rows x cols` -> `cols x rows`, in cache-sized tiles.
pub fn transpose<T: Copy>(rows: usize, cols: usize, src: &[T], dst: &mut [T]) {
    const TILE: usize = 32;
    assert!(src.len() >= rows * cols && dst.len() >= rows * cols, "transpose: buffers too small");
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_round_trip() {
        let src: Vec<u32> = (0..70 * 45).collect();
        let mut t = vec![0; src.len()];
        transpose(70, 45, &src, &mut t);
        assert_eq!(t[3 * 70 + 2], src[2 * 45 + 3]);
        let mut back = vec![0; src.len()];
        transpose(45, 70, &t, &mut back);
        assert_eq!(back, src);
    }

    fn naive(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    let av = if a_t { a[p * m + i] } else { a[i * k + p] };
                    let bv = if b_t { b[j * k + p] } else { b[p * n + j] };
                    c[i * n + j] += av * bv;
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_for_all_transposes() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.91).cos()).collect();
        for a_t in [false, true] {
            for b_t in [false, true] {
                let mut c = vec![1.0; m * n];
                gemm(m, k, n, &a, a_t, &b, b_t, &mut c, false);
                let expected = naive(m, k, n, &a, a_t, &b, b_t);
                for (x, y) in c.iter().zip(&expected) {
                    assert!((x - y).abs() < 1e-12);
                }
                let mut acc = vec![1.0; m * n];
                gemm(m, k, n, &a, a_t, &b, b_t, &mut acc, true);
                for (x, y) in acc.iter().zip(&expected) {
                    assert!((x - (y + 1.0)).abs() < 1e-12);
                }
            }
        }
    }
}
