//! Small row-major dense kernels.
//!
//! Every output element is accumulated over the inner index in ascending
//! order, independent of how many rows are processed together, so results
//! do not depend on batch size.

/// `c = a * b` with `a: m x k`, `b: k x n`, `c: m x n`.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.fill(0.0);
        return;
    }
    let mut i = 0;
    while i + 4 <= m {
        let (c0, rest) = c[i * n..(i + 4) * n].split_at_mut(n);
        let (c1, rest) = rest.split_at_mut(n);
        let (c2, c3) = rest.split_at_mut(n);
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        let b0 = &b[..n];
        let (s0, s1, s2, s3) = (a0[0], a1[0], a2[0], a3[0]);
        for ((((x0, x1), x2), x3), &bv) in c0
            .iter_mut()
            .zip(c1.iter_mut())
            .zip(c2.iter_mut())
            .zip(c3.iter_mut())
            .zip(b0)
        {
            *x0 = s0 * bv;
            *x1 = s1 * bv;
            *x2 = s2 * bv;
            *x3 = s3 * bv;
        }
        for kk in 1..k {
            let brow = &b[kk * n..(kk + 1) * n];
            let (s0, s1, s2, s3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
            for ((((x0, x1), x2), x3), &bv) in c0
                .iter_mut()
                .zip(c1.iter_mut())
                .zip(c2.iter_mut())
                .zip(c3.iter_mut())
                .zip(brow)
            {
                *x0 += s0 * bv;
                *x1 += s1 * bv;
                *x2 += s2 * bv;
                *x3 += s3 * bv;
            }
        }
        i += 4;
    }
    while i < m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        let s = arow[0];
        for (x, &bv) in crow.iter_mut().zip(&b[..n]) {
            *x = s * bv;
        }
        for kk in 1..k {
            let s = arow[kk];
            for (x, &bv) in crow.iter_mut().zip(&b[kk * n..(kk + 1) * n]) {
                *x += s * bv;
            }
        }
        i += 1;
    }
}

/// `out += x^T * y` with `x: r x m`, `y: r x n`, `out: m x n`.
pub fn matmul_tn_acc(x: &[f64], y: &[f64], out: &mut [f64], r: usize, m: usize, n: usize) {
    debug_assert_eq!(x.len(), r * m);
    debug_assert_eq!(y.len(), r * n);
    debug_assert_eq!(out.len(), m * n);
    for row in 0..r {
        let xrow = &x[row * m..(row + 1) * m];
        let yrow = &y[row * n..(row + 1) * n];
        for (i, &s) in xrow.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            for (o, &v) in out[i * n..(i + 1) * n].iter_mut().zip(yrow) {
                *o += s * v;
            }
        }
    }
}

/// Row-major transpose of a `rows x cols` matrix.
pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = a[i * k] * b[j];
                for kk in 1..k {
                    acc += a[i * k + kk] * b[kk * n + j];
                }
                c[i * n + j] = acc;
            }
        }
        c
    }

    #[test]
    fn matmul_matches_naive_bitwise() {
        for &(m, k, n) in &[(1, 1, 1), (5, 3, 7), (9, 16, 4), (4, 1, 2)] {
            let a: Vec<f64> = (0..m * k).map(|i| ((i * 7 % 13) as f64 - 6.0) / 3.1).collect();
            let b: Vec<f64> = (0..k * n).map(|i| ((i * 5 % 11) as f64 - 5.0) / 2.3).collect();
            let mut c = vec![f64::NAN; m * n];
            matmul(&a, &b, &mut c, m, k, n);
            assert_eq!(c, naive(&a, &b, m, k, n));
        }
    }

    #[test]
    fn tn_and_transpose() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 3 x 2
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3 x 2
        let mut out = [0.0; 4];
        matmul_tn_acc(&x, &y, &mut out, 3, 2, 2);
        assert_eq!(out, [6.0, 8.0, 8.0, 10.0]);
        assert_eq!(transpose(&x, 3, 2), vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }
}
