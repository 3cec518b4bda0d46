//! Raw matmul kernels on flat row-major slices.
//!
//! Loop orders are chosen so the innermost loop runs over contiguous
//! memory on both read and write sides; with independent lanes the
//! compiler vectorizes them. `dot` keeps eight explicit accumulators for
//! the same reason (a single serial reduction chain cannot be
//! vectorized without reassociation). Summation order is fixed, so
//! results are reproducible run to run.

use crate::scalar::Scalar;

/// out[i,j] += Σ_p a[i,p]·b[p,j]
pub fn mm_acc<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] = aip.mul_add(brow[j], orow[j]);
            }
        }
    }
}

/// out = a·b
pub fn mm<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    mm_acc(a, b, m, k, n, &mut out);
    out
}

/// out[i,j] += Σ_p a[i,p]·b[j,p]  (i.e. a·bᵀ with b stored [n×k])
pub fn mm_nt_acc<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            orow[j] = orow[j] + dot(arow, brow);
        }
    }
}

pub fn mm_nt<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    mm_nt_acc(a, b, m, k, n, &mut out);
    out
}

/// out[p,j] += Σ_i a[i,p]·g[i,j]  (aᵀ·g; the dB term of matmul backward)
pub fn mm_tn_acc<F: Scalar>(a: &[F], g: &[F], m: usize, k: usize, n: usize, out: &mut [F]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(g.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] = aip.mul_add(grow[j], orow[j]);
            }
        }
    }
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [F::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let ac = &a[c * 8..c * 8 + 8];
        let bc = &b[c * 8..c * 8 + 8];
        for l in 0..8 {
            acc[l] = ac[l].mul_add(bc[l], acc[l]);
        }
    }
    let mut tail = F::zero();
    for idx in chunks * 8..a.len() {
        tail = a[idx].mul_add(b[idx], tail);
    }
    let lanes = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    lanes + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Naive triple loop used as the independent oracle.
    fn mm_oracle(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    s += a[i * k + p] * b[p * n + j];
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn mm_matches_oracle() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let got = mm(&a, &b, 2, 3, 4);
        let want = mm_oracle(&a, &b, 2, 3, 4);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn mm_nt_matches_transposed_oracle() {
        let a: Vec<f64> = (0..15).map(|i| (i as f64).cos()).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect(); // [4×5]
        let bt: Vec<f64> = {
            let mut t = vec![0.0; 20];
            for r in 0..4 {
                for c in 0..5 {
                    t[c * 4 + r] = b[r * 5 + c];
                }
            }
            t
        };
        let got = mm_nt(&a, &b, 3, 5, 4);
        let want = mm_oracle(&a, &bt, 3, 5, 4);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn dot_matches_serial_sum() {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..37).map(|i| (i as f64 * 0.11).cos()).collect();
        let serial: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - serial).abs() < 1e-12);
    }
}
