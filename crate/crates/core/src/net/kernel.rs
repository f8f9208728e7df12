//! Dense row-major matrix products on top of `matrixmultiply`.
//!
//! Each output element is reduced over `k` in a fixed order that does not
//! depend on how many rows share the call, so single-point and batched
//! evaluation agree bitwise. Threading in `matrixmultiply` is left off.

/// `out[m×n] = a[m×k] · b[k×n]`.
pub fn matmul(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    // SAFETY: slice lengths match the dimensions and strides given.
    unsafe { gemm(m, k, n, a, [k, 1], b, [n, 1], out, 0.0) }
}

/// `out[m×n] = a[m×k] · bᵀ` with `b` stored as `n×k`.
pub fn matmul_bt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    // SAFETY: as above, with b read through transposed strides.
    unsafe { gemm(m, k, n, a, [k, 1], b, [1, k], out, 0.0) }
}

/// `out[m×n] += aᵀ · b` with `a` stored as `k×m` and `b` as `k×n`.
pub fn matmul_at_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    // SAFETY: as above, with a read through transposed strides.
    unsafe { gemm(m, k, n, a, [1, m], b, [n, 1], out, 1.0) }
}

#[allow(clippy::too_many_arguments)]
unsafe fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: [usize; 2], b: &[f64], sb: [usize; 2], c: &mut [f64], beta: f64) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        }
        return;
    }
    let s = |v: usize| v as isize;
    matrixmultiply::dgemm(
        m,
        k,
        n,
        1.0,
        a.as_ptr(),
        s(sa[0]),
        s(sa[1]),
        b.as_ptr(),
        s(sb[0]),
        s(sb[1]),
        beta,
        c.as_mut_ptr(),
        s(n),
        1,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        out
    }

    fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let mut dst = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
        dst
    }

    fn close(x: &[f64], y: &[f64]) -> bool {
        x.iter().zip(y).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()))
    }

    fn fixture(m: usize, k: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
        let a = (0..m * k).map(|i| ((i * 37 % 101) as f64 - 50.0) / 7.3).collect();
        let b = (0..k * n).map(|i| ((i * 53 % 97) as f64 - 48.0) / 3.1).collect();
        (a, b)
    }

    #[test]
    fn variants_match_naive_on_ragged_shapes() {
        for &(m, k, n) in &[(1, 2, 100), (7, 100, 100), (13, 16, 200), (4, 3, 16), (9, 5, 33), (3, 0, 4)] {
            let (a, b) = fixture(m, k, n);
            let expect = naive(&a, &b, m, k, n);

            let mut out = vec![1.0; m * n];
            matmul(&a, &b, &mut out, m, k, n);
            assert!(close(&out, &expect), "matmul {m}x{k}x{n}");

            let mut out = vec![1.0; m * n];
            matmul_bt(&a, &transpose(&b, k, n), &mut out, m, k, n);
            assert!(close(&out, &expect), "matmul_bt {m}x{k}x{n}");

            let mut out = vec![1.0; m * n];
            matmul_at_acc(&transpose(&a, m, k), &b, &mut out, m, k, n);
            let shifted: Vec<f64> = expect.iter().map(|v| v + 1.0).collect();
            assert!(close(&out, &shifted), "matmul_at_acc {m}x{k}x{n}");
        }
    }

    #[test]
    fn row_result_independent_of_batch_size() {
        let (k, n) = (100, 100);
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.37).sin()).collect();
        let row: Vec<f64> = (0..k).map(|i| (i as f64 * 1.3).cos()).collect();
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let mut single = vec![0.0; n];
        matmul_bt(&row, &b, &mut single, 1, k, n);
        for (rows, at) in [(9, 5), (64, 63), (257, 130)] {
            let mut many = Vec::new();
            for r in 0..rows {
                if r == at {
                    many.extend_from_slice(&row);
                } else {
                    many.extend((0..k).map(|i| (i + r) as f64));
                }
            }
            let mut out = vec![0.0; rows * n];
            matmul_bt(&many, &b, &mut out, rows, k, n);
            assert_eq!(bits(&single), bits(&out[at * n..(at + 1) * n]), "{rows} rows");
        }
    }
}
