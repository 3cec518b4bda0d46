//! Differentiable tensor operations.
//!
//! Each op computes its forward value eagerly and records a backward
//! closure on the output node. Shape misuse is a programming error and
//! panics with both shapes in the message.

use super::{kernels, BackCtx, Tensor};
use crate::scalar::Scalar;
use rand::Rng;

/// (outer, axis length, inner) decomposition for reductions along `axis`.
fn axis_dims(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(
        axis < shape.len(),
        "axis {} out of range for shape {:?}",
        axis,
        shape
    );
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

impl<F: Scalar> Tensor<F> {
    fn assert_same_shape(&self, other: &Tensor<F>, op: &str) {
        let (a, b) = (self.shape(), other.shape());
        assert_eq!(a, b, "{op}: shape mismatch {a:?} vs {b:?}");
    }

    pub fn add(&self, other: &Tensor<F>) -> Tensor<F> {
        self.assert_same_shape(other, "add");
        let data = self.with_data(|a| other.with_data(|b| a.iter().zip(b).map(|(x, y)| *x + *y).collect()));
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone(), other.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| {
                for p in ctx.parents {
                    if p.requires_grad() {
                        p.accumulate_grad(ctx.grad);
                    }
                }
            }),
        )
    }

    pub fn sub(&self, other: &Tensor<F>) -> Tensor<F> {
        self.assert_same_shape(other, "sub");
        let data = self.with_data(|a| other.with_data(|b| a.iter().zip(b).map(|(x, y)| *x - *y).collect()));
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone(), other.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| {
                if ctx.parents[0].requires_grad() {
                    ctx.parents[0].accumulate_grad(ctx.grad);
                }
                if ctx.parents[1].requires_grad() {
                    let neg: Vec<F> = ctx.grad.iter().map(|g| -*g).collect();
                    ctx.parents[1].accumulate_grad(&neg);
                }
            }),
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor<F>) -> Tensor<F> {
        self.assert_same_shape(other, "mul");
        let data = self.with_data(|a| other.with_data(|b| a.iter().zip(b).map(|(x, y)| *x * *y).collect()));
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone(), other.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| {
                if ctx.parents[0].requires_grad() {
                    let da = ctx.parents[1].with_data(|b| {
                        ctx.grad.iter().zip(b).map(|(g, y)| *g * *y).collect::<Vec<F>>()
                    });
                    ctx.parents[0].accumulate_grad(&da);
                }
                if ctx.parents[1].requires_grad() {
                    let db = ctx.parents[0].with_data(|a| {
                        ctx.grad.iter().zip(a).map(|(g, x)| *g * *x).collect::<Vec<F>>()
                    });
                    ctx.parents[1].accumulate_grad(&db);
                }
            }),
        )
    }

    pub fn scale(&self, c: F) -> Tensor<F> {
        let data = self.with_data(|a| a.iter().map(|x| *x * c).collect());
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let da: Vec<F> = ctx.grad.iter().map(|g| *g * c).collect();
                ctx.parents[0].accumulate_grad(&da);
            }),
        )
    }

    /// Adds a learnable row vector `[n]` to every row of `[m×n]`.
    pub fn add_row(&self, row: &Tensor<F>) -> Tensor<F> {
        let sh = self.shape();
        let rsh = row.shape();
        assert!(
            sh.len() == 2 && rsh.len() == 1 && rsh[0] == sh[1],
            "add_row: shape mismatch {sh:?} vs {rsh:?}"
        );
        let (m, n) = (sh[0], sh[1]);
        let data = self.with_data(|a| {
            row.with_data(|r| {
                let mut out = a.to_vec();
                for i in 0..m {
                    for j in 0..n {
                        out[i * n + j] = out[i * n + j] + r[j];
                    }
                }
                out
            })
        });
        Tensor::from_op(
            data,
            &sh,
            vec![self.clone(), row.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                if ctx.parents[0].requires_grad() {
                    ctx.parents[0].accumulate_grad(ctx.grad);
                }
                if ctx.parents[1].requires_grad() {
                    let mut dr = vec![F::zero(); n];
                    for i in 0..m {
                        for j in 0..n {
                            dr[j] = dr[j] + ctx.grad[i * n + j];
                        }
                    }
                    ctx.parents[1].accumulate_grad(&dr);
                }
            }),
        )
    }

    /// Adds a learnable column vector `[m]` to every column of `[m×n]`.
    pub fn add_col(&self, col: &Tensor<F>) -> Tensor<F> {
        let sh = self.shape();
        let csh = col.shape();
        assert!(
            sh.len() == 2 && csh.len() == 1 && csh[0] == sh[0],
            "add_col: shape mismatch {sh:?} vs {csh:?}"
        );
        let (m, n) = (sh[0], sh[1]);
        let data = self.with_data(|a| {
            col.with_data(|c| {
                let mut out = a.to_vec();
                for i in 0..m {
                    for j in 0..n {
                        out[i * n + j] = out[i * n + j] + c[i];
                    }
                }
                out
            })
        });
        Tensor::from_op(
            data,
            &sh,
            vec![self.clone(), col.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                if ctx.parents[0].requires_grad() {
                    ctx.parents[0].accumulate_grad(ctx.grad);
                }
                if ctx.parents[1].requires_grad() {
                    let mut dc = vec![F::zero(); m];
                    for i in 0..m {
                        for j in 0..n {
                            dc[i] = dc[i] + ctx.grad[i * n + j];
                        }
                    }
                    ctx.parents[1].accumulate_grad(&dc);
                }
            }),
        )
    }

    /// Adds a constant row (e.g. an attention mask) to every row; no
    /// gradient flows into the constant.
    pub fn add_const_row(&self, row: &[F]) -> Tensor<F> {
        let sh = self.shape();
        assert!(
            sh.len() == 2 && row.len() == sh[1],
            "add_const_row: shape mismatch {sh:?} vs [{}]",
            row.len()
        );
        let (m, n) = (sh[0], sh[1]);
        let data = self.with_data(|a| {
            let mut out = a.to_vec();
            for i in 0..m {
                for j in 0..n {
                    out[i * n + j] = out[i * n + j] + row[j];
                }
            }
            out
        });
        Tensor::from_op(
            data,
            &sh,
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| ctx.parents[0].accumulate_grad(ctx.grad)),
        )
    }

    /// Standard matrix product `[m×k]·[k×n]`.
    pub fn matmul(&self, other: &Tensor<F>) -> Tensor<F> {
        let (ash, bsh) = (self.shape(), other.shape());
        assert!(
            ash.len() == 2 && bsh.len() == 2 && ash[1] == bsh[0],
            "matmul: incompatible shapes {ash:?} x {bsh:?}"
        );
        let (m, k, n) = (ash[0], ash[1], bsh[1]);
        let data = self.with_data(|a| other.with_data(|b| kernels::mm(a, b, m, k, n)));
        Tensor::from_op(
            data,
            &[m, n],
            vec![self.clone(), other.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                if ctx.parents[0].requires_grad() {
                    // dA = g·Bᵀ
                    let da = ctx.parents[1].with_data(|b| kernels::mm_nt(ctx.grad, b, m, n, k));
                    ctx.parents[0].accumulate_grad(&da);
                }
                if ctx.parents[1].requires_grad() {
                    // dB = Aᵀ·g
                    let db = ctx.parents[0].with_data(|a| {
                        let mut db = vec![F::zero(); k * n];
                        kernels::mm_tn_acc(a, ctx.grad, m, k, n, &mut db);
                        db
                    });
                    ctx.parents[1].accumulate_grad(&db);
                }
            }),
        )
    }

    /// `a·bᵀ` with `b` stored `[n×k]`; avoids materializing transposes in
    /// attention scores and tied-embedding projections.
    pub fn matmul_nt(&self, other: &Tensor<F>) -> Tensor<F> {
        let (ash, bsh) = (self.shape(), other.shape());
        assert!(
            ash.len() == 2 && bsh.len() == 2 && ash[1] == bsh[1],
            "matmul_nt: incompatible shapes {ash:?} x {bsh:?}ᵀ"
        );
        let (m, k, n) = (ash[0], ash[1], bsh[0]);
        let data = self.with_data(|a| other.with_data(|b| kernels::mm_nt(a, b, m, k, n)));
        Tensor::from_op(
            data,
            &[m, n],
            vec![self.clone(), other.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                if ctx.parents[0].requires_grad() {
                    // dA = g·B
                    let da = ctx.parents[1].with_data(|b| kernels::mm(ctx.grad, b, m, n, k));
                    ctx.parents[0].accumulate_grad(&da);
                }
                if ctx.parents[1].requires_grad() {
                    // dB = gᵀ·A
                    let db = ctx.parents[0].with_data(|a| {
                        let mut db = vec![F::zero(); n * k];
                        kernels::mm_tn_acc(ctx.grad, a, m, n, k, &mut db);
                        db
                    });
                    ctx.parents[1].accumulate_grad(&db);
                }
            }),
        )
    }

    /// Numerically stable softmax along `axis` (max-subtracted).
    pub fn softmax(&self, axis: usize) -> Tensor<F> {
        let sh = self.shape();
        let (outer, len, inner) = axis_dims(&sh, axis);
        let data = self.with_data(|x| {
            let mut out = vec![F::zero(); x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let mut max = F::neg_infinity();
                    for a in 0..len {
                        max = max.max(x[base + a * inner]);
                    }
                    let mut sum = F::zero();
                    for a in 0..len {
                        let e = (x[base + a * inner] - max).exp();
                        out[base + a * inner] = e;
                        sum = sum + e;
                    }
                    for a in 0..len {
                        out[base + a * inner] = out[base + a * inner] / sum;
                    }
                }
            }
            out
        });
        Tensor::from_op(
            data,
            &sh,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                // dx = y ⊙ (g − Σ_axis g⊙y)
                let y = ctx.out;
                let g = ctx.grad;
                let mut dx = vec![F::zero(); y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let mut s = F::zero();
                        for a in 0..len {
                            let idx = base + a * inner;
                            s = s + g[idx] * y[idx];
                        }
                        for a in 0..len {
                            let idx = base + a * inner;
                            dx[idx] = y[idx] * (g[idx] - s);
                        }
                    }
                }
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// log Σ exp along `axis`; the output drops that axis.
    pub fn logsumexp(&self, axis: usize) -> Tensor<F> {
        let sh = self.shape();
        let (outer, len, inner) = axis_dims(&sh, axis);
        let mut out_shape = sh.clone();
        out_shape.remove(axis);
        let data = self.with_data(|x| {
            let mut out = vec![F::zero(); outer * inner];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let mut max = F::neg_infinity();
                    for a in 0..len {
                        max = max.max(x[base + a * inner]);
                    }
                    let mut sum = F::zero();
                    for a in 0..len {
                        sum = sum + (x[base + a * inner] - max).exp();
                    }
                    out[o * inner + i] = max + sum.ln();
                }
            }
            out
        });
        Tensor::from_op(
            data,
            &out_shape,
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                // dx = exp(x − lse) · g, broadcast along the reduced axis
                let dx = ctx.parents[0].with_data(|x| {
                    let mut dx = vec![F::zero(); x.len()];
                    for o in 0..outer {
                        for i in 0..inner {
                            let lane = o * inner + i;
                            let base = o * len * inner + i;
                            for a in 0..len {
                                let idx = base + a * inner;
                                dx[idx] = (x[idx] - ctx.out[lane]).exp() * ctx.grad[lane];
                            }
                        }
                    }
                    dx
                });
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Exact GELU, x·Φ(x) with the Gaussian CDF.
    pub fn gelu(&self) -> Tensor<F> {
        let half = F::from_f64c(0.5);
        let inv_sqrt2 = F::from_f64c(std::f64::consts::FRAC_1_SQRT_2);
        let (data, phi) = self.with_data(|x| {
            let mut out = vec![F::zero(); x.len()];
            let mut phi = vec![F::zero(); x.len()];
            for (i, &v) in x.iter().enumerate() {
                let p = half * (F::one() + (v * inv_sqrt2).erf());
                phi[i] = p;
                out[i] = v * p;
            }
            (out, phi)
        });
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                // d/dx x·Φ(x) = Φ(x) + x·φ(x)
                let inv_sqrt_2pi = F::from_f64c(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                let dx = ctx.parents[0].with_data(|x| {
                    x.iter()
                        .zip(&phi)
                        .zip(ctx.grad)
                        .map(|((&v, &p), &g)| {
                            let pdf = (-v * v * F::from_f64c(0.5)).exp() * inv_sqrt_2pi;
                            g * (p + v * pdf)
                        })
                        .collect::<Vec<F>>()
                });
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    pub fn tanh_act(&self) -> Tensor<F> {
        let data = self.with_data(|x| x.iter().map(|v| v.tanh()).collect());
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| {
                let dx: Vec<F> = ctx
                    .out
                    .iter()
                    .zip(ctx.grad)
                    .map(|(&y, &g)| g * (F::one() - y * y))
                    .collect();
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }

    /// Per-row layer normalization of `[m×n]` with learnable gain/shift.
    pub fn layer_norm(&self, gamma: &Tensor<F>, beta: &Tensor<F>, eps: F) -> Tensor<F> {
        let sh = self.shape();
        assert!(
            sh.len() == 2 && gamma.shape() == [sh[1]] && beta.shape() == [sh[1]],
            "layer_norm: shape mismatch x {:?}, gamma {:?}, beta {:?}",
            sh,
            gamma.shape(),
            beta.shape()
        );
        let (m, n) = (sh[0], sh[1]);
        let nf = F::from_f64c(n as f64);
        let mut xhat = vec![F::zero(); m * n];
        let mut inv_std = vec![F::zero(); m];
        let data = self.with_data(|x| {
            gamma.with_data(|ga| {
                beta.with_data(|be| {
                    let mut out = vec![F::zero(); m * n];
                    for i in 0..m {
                        let row = &x[i * n..(i + 1) * n];
                        let mut mean = F::zero();
                        for &v in row {
                            mean = mean + v;
                        }
                        mean = mean / nf;
                        let mut var = F::zero();
                        for &v in row {
                            let d = v - mean;
                            var = var + d * d;
                        }
                        var = var / nf;
                        let inv = F::one() / (var + eps).sqrt();
                        inv_std[i] = inv;
                        for j in 0..n {
                            let xh = (row[j] - mean) * inv;
                            xhat[i * n + j] = xh;
                            out[i * n + j] = xh * ga[j] + be[j];
                        }
                    }
                    out
                })
            })
        });
        Tensor::from_op(
            data,
            &sh,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let g = ctx.grad;
                if ctx.parents[1].requires_grad() {
                    let mut dgamma = vec![F::zero(); n];
                    for i in 0..m {
                        for j in 0..n {
                            dgamma[j] = dgamma[j] + g[i * n + j] * xhat[i * n + j];
                        }
                    }
                    ctx.parents[1].accumulate_grad(&dgamma);
                }
                if ctx.parents[2].requires_grad() {
                    let mut dbeta = vec![F::zero(); n];
                    for i in 0..m {
                        for j in 0..n {
                            dbeta[j] = dbeta[j] + g[i * n + j];
                        }
                    }
                    ctx.parents[2].accumulate_grad(&dbeta);
                }
                if ctx.parents[0].requires_grad() {
                    // dx = inv/n · (n·dx̂ − Σdx̂ − x̂·Σ(dx̂⊙x̂)), dx̂ = γ⊙g
                    let dx = ctx.parents[1].with_data(|ga| {
                        let mut dx = vec![F::zero(); m * n];
                        for i in 0..m {
                            let mut sum_dxh = F::zero();
                            let mut sum_dxh_xh = F::zero();
                            for j in 0..n {
                                let dxh = ga[j] * g[i * n + j];
                                sum_dxh = sum_dxh + dxh;
                                sum_dxh_xh = sum_dxh_xh + dxh * xhat[i * n + j];
                            }
                            for j in 0..n {
                                let dxh = ga[j] * g[i * n + j];
                                dx[i * n + j] = inv_std[i]
                                    * (dxh - (sum_dxh + xhat[i * n + j] * sum_dxh_xh) / nf);
                            }
                        }
                        dx
                    });
                    ctx.parents[0].accumulate_grad(&dx);
                }
            }),
        )
    }

    /// Row gather: output row `i` is row `ids[i]` of `self` (`[V×H]`).
    /// Serves both embedding lookup and hidden-state selection; the
    /// backward pass scatter-adds into the gathered rows only.
    pub fn lookup_rows(&self, ids: &[usize]) -> Tensor<F> {
        let sh = self.shape();
        assert!(sh.len() == 2, "lookup_rows: table must be rank 2, got {sh:?}");
        let (rows, cols) = (sh[0], sh[1]);
        for &id in ids {
            assert!(
                id < rows,
                "lookup_rows: id {id} out of range for table with {rows} rows"
            );
        }
        let ids_owned: Vec<usize> = ids.to_vec();
        let data = self.with_data(|t| {
            let mut out = vec![F::zero(); ids_owned.len() * cols];
            for (i, &id) in ids_owned.iter().enumerate() {
                out[i * cols..(i + 1) * cols].copy_from_slice(&t[id * cols..(id + 1) * cols]);
            }
            out
        });
        Tensor::from_op(
            data,
            &[ids_owned.len(), cols],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                ctx.parents[0].accumulate_grad_rows(&ids_owned, cols, ctx.grad);
            }),
        )
    }

    /// Contiguous row slice `[start, start+len)` of a rank-2 tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Tensor<F> {
        let sh = self.shape();
        assert!(
            sh.len() == 2 && start + len <= sh[0],
            "slice_rows: [{start}, {}) out of range for shape {sh:?}",
            start + len
        );
        let cols = sh[1];
        let data = self.with_data(|x| x[start * cols..(start + len) * cols].to_vec());
        Tensor::from_op(
            data,
            &[len, cols],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let ids: Vec<usize> = (start..start + len).collect();
                ctx.parents[0].accumulate_grad_rows(&ids, cols, ctx.grad);
            }),
        )
    }

    /// Vertical concatenation of rank-2 tensors with equal column counts.
    pub fn concat_rows(parts: &[Tensor<F>]) -> Tensor<F> {
        assert!(!parts.is_empty(), "concat_rows: empty input");
        let cols = parts[0].shape()[1];
        let mut total = 0;
        for p in parts {
            let sh = p.shape();
            assert!(
                sh.len() == 2 && sh[1] == cols,
                "concat_rows: shape mismatch {sh:?}, expected [_, {cols}]"
            );
            total += sh[0];
        }
        let mut data = Vec::with_capacity(total * cols);
        for p in parts {
            p.with_data(|x| data.extend_from_slice(x));
        }
        let sizes: Vec<usize> = parts.iter().map(|p| p.numel()).collect();
        Tensor::from_op(
            data,
            &[total, cols],
            parts.to_vec(),
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let mut off = 0;
                for (p, &sz) in ctx.parents.iter().zip(&sizes) {
                    if p.requires_grad() {
                        p.accumulate_grad(&ctx.grad[off..off + sz]);
                    }
                    off += sz;
                }
            }),
        )
    }

    /// Horizontal concatenation of rank-2 tensors with equal row counts.
    pub fn concat_cols(parts: &[Tensor<F>]) -> Tensor<F> {
        assert!(!parts.is_empty(), "concat_cols: empty input");
        let rows = parts[0].shape()[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let sh = p.shape();
                assert!(
                    sh.len() == 2 && sh[0] == rows,
                    "concat_cols: shape mismatch {sh:?}, expected [{rows}, _]"
                );
                sh[1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![F::zero(); rows * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            p.with_data(|x| {
                for r in 0..rows {
                    data[r * total + off..r * total + off + w].copy_from_slice(&x[r * w..(r + 1) * w]);
                }
            });
            off += w;
        }
        Tensor::from_op(
            data,
            &[rows, total],
            parts.to_vec(),
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let mut off = 0;
                for (p, &w) in ctx.parents.iter().zip(&widths) {
                    if p.requires_grad() {
                        let mut dp = vec![F::zero(); rows * w];
                        for r in 0..rows {
                            dp[r * w..(r + 1) * w]
                                .copy_from_slice(&ctx.grad[r * total + off..r * total + off + w]);
                        }
                        p.accumulate_grad(&dp);
                    }
                    off += w;
                }
            }),
        )
    }

    /// Gathers scalar elements by flat index into a rank-1 tensor.
    pub fn pick(&self, idxs: &[usize]) -> Tensor<F> {
        let numel = self.numel();
        for &i in idxs {
            assert!(i < numel, "pick: index {i} out of range for {numel} elements");
        }
        let idxs_owned: Vec<usize> = idxs.to_vec();
        let data = self.with_data(|x| idxs_owned.iter().map(|&i| x[i]).collect());
        Tensor::from_op(
            data,
            &[idxs_owned.len()],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                ctx.parents[0].accumulate_grad_at(&idxs_owned, ctx.grad);
            }),
        )
    }

    /// Same data, new shape (sizes must multiply to the same count).
    pub fn reshape(&self, new_shape: &[usize]) -> Tensor<F> {
        let numel: usize = new_shape.iter().product();
        assert_eq!(
            numel,
            self.numel(),
            "reshape: {:?} incompatible with {:?}",
            self.shape(),
            new_shape
        );
        let data = self.with_data(|x| x.to_vec());
        Tensor::from_op(
            data,
            new_shape,
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| ctx.parents[0].accumulate_grad(ctx.grad)),
        )
    }

    /// Sum of all elements, as a rank-0 scalar.
    pub fn sum_all(&self) -> Tensor<F> {
        let data = self.with_data(|x| {
            let mut s = F::zero();
            for &v in x {
                s = s + v;
            }
            vec![s]
        });
        Tensor::from_op(
            data,
            &[],
            vec![self.clone()],
            Box::new(|ctx: &BackCtx<'_, F>| {
                let g = ctx.grad[0];
                let n = ctx.parents[0].numel();
                ctx.parents[0].accumulate_grad(&vec![g; n]);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor<F> {
        let n = self.numel();
        assert!(n > 0, "mean_all: empty tensor");
        self.sum_all().scale(F::one() / F::from_f64c(n as f64))
    }

    /// Summed binary cross-entropy on logits against constant 0/1 targets.
    /// Stable form: Σ max(z,0) − z·y + ln(1+e^{−|z|}).
    pub fn sigmoid_bce_sum(&self, targets: &[F]) -> Tensor<F> {
        assert_eq!(
            targets.len(),
            self.numel(),
            "sigmoid_bce_sum: {} targets for {} logits",
            targets.len(),
            self.numel()
        );
        let targets_owned: Vec<F> = targets.to_vec();
        let data = self.with_data(|z| {
            let mut s = F::zero();
            for (&zi, &yi) in z.iter().zip(&targets_owned) {
                let pos = zi.max(F::zero());
                s = s + pos - zi * yi + (F::one() + (-zi.abs()).exp()).ln();
            }
            vec![s]
        });
        Tensor::from_op(
            data,
            &[],
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let g = ctx.grad[0];
                let dz = ctx.parents[0].with_data(|z| {
                    z.iter()
                        .zip(&targets_owned)
                        .map(|(&zi, &yi)| {
                            let sig = if zi >= F::zero() {
                                F::one() / (F::one() + (-zi).exp())
                            } else {
                                let e = zi.exp();
                                e / (F::one() + e)
                            };
                            g * (sig - yi)
                        })
                        .collect::<Vec<F>>()
                });
                ctx.parents[0].accumulate_grad(&dz);
            }),
        )
    }

    /// Inverted dropout: in training, zeroes each element with probability
    /// `p` and scales survivors by 1/(1−p); in eval it is the identity.
    pub fn dropout<R: Rng>(&self, p: f64, training: bool, rng: &mut R) -> Tensor<F> {
        assert!((0.0..1.0).contains(&p), "dropout: probability must be in [0,1), got {p}");
        if !training || p == 0.0 {
            return self.clone();
        }
        let keep_scale = F::from_f64c(1.0 / (1.0 - p));
        let mask: Vec<F> = (0..self.numel())
            .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep_scale })
            .collect();
        let data = self.with_data(|x| x.iter().zip(&mask).map(|(&v, &m)| v * m).collect());
        Tensor::from_op(
            data,
            &self.shape(),
            vec![self.clone()],
            Box::new(move |ctx: &BackCtx<'_, F>| {
                let dx: Vec<F> = ctx.grad.iter().zip(&mask).map(|(&g, &m)| g * m).collect();
                ctx.parents[0].accumulate_grad(&dx);
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() < tol
    }

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::new(vec![1.0f64, 0.0, 0.0, 1.0], &[2, 2]);
        let m = Tensor::new(vec![3.0f64, -1.0, 2.5, 4.0], &[2, 2]);
        assert_eq!(i2.matmul(&m).to_vec(), m.to_vec());
    }

    #[test]
    fn matmul_known_product() {
        // frozen from the naive triple-loop oracle in kernels::tests
        let a = Tensor::new(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::new(vec![5.0f64, 6.0, 7.0, 8.0], &[2, 2]);
        assert_eq!(a.matmul(&b).to_vec(), vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let a = Tensor::new(vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let z = Tensor::zeros(&[3, 4]);
        assert!(a.matmul(&z).to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    #[should_panic(expected = "incompatible shapes [2, 3] x [2, 3]")]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        let _ = a.matmul(&b);
    }

    #[test]
    fn matmul_gradients_flow_to_both_operands() {
        let a = Tensor::param(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]);
        let b = Tensor::param(vec![5.0f64, 6.0, 7.0, 8.0], &[2, 2]);
        a.matmul(&b).sum_all().backward();
        // d/dA Σ(AB) = 1·Bᵀ, d/dB = Aᵀ·1
        assert_eq!(a.grad().unwrap(), vec![11.0, 15.0, 11.0, 15.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn softmax_uniform_on_equal_inputs() {
        let x = Tensor::new(vec![0.0f64, 0.0, 0.0], &[3]);
        let y = x.softmax(0).to_vec();
        for v in y {
            assert!(close(v, 1.0 / 3.0, 1e-12));
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let x = Tensor::new(vec![0.3f64, -1.2, 2.0, 0.0], &[4]);
        let shifted = Tensor::new(vec![0.3f64 + 5.0, -1.2 + 5.0, 2.0 + 5.0, 5.0], &[4]);
        let a = x.softmax(0).to_vec();
        let b = shifted.softmax(0).to_vec();
        for (x, y) in a.iter().zip(&b) {
            assert!(close(*x, *y, 1e-12));
        }
    }

    #[test]
    fn softmax_exact_two_thirds() {
        let x = Tensor::new(vec![0.0f64, (2.0f64).ln()], &[2]);
        let y = x.softmax(0).to_vec();
        assert!(close(y[0], 1.0 / 3.0, 1e-12));
        assert!(close(y[1], 2.0 / 3.0, 1e-12));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = substream(11, "softmax-test", 0);
        let x = Tensor::new((0..20).map(|_| rng.gen_range(-8.0..8.0)).collect(), &[4, 5]);
        let y = x.softmax(1).to_vec();
        for r in 0..4 {
            let s: f64 = y[r * 5..(r + 1) * 5].iter().sum();
            assert!(close(s, 1.0, 1e-9));
        }
    }

    #[test]
    fn gelu_reference_points() {
        let x = Tensor::new(vec![0.0f64, 10.0, -10.0], &[3]);
        let y = x.gelu().to_vec();
        assert_eq!(y[0], 0.0);
        assert!(close(y[1], 10.0, 1e-6));
        assert!(close(y[2], 0.0, 1e-6));
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let x = Tensor::new(vec![4.0f64; 6], &[2, 3]);
        let gamma = Tensor::new(vec![1.0f64; 3], &[3]);
        let beta = Tensor::new(vec![0.0f64; 3], &[3]);
        let y = x.layer_norm(&gamma, &beta, 1e-12).to_vec();
        for v in y {
            assert!(v.abs() < 1e-6);
        }
    }

    #[test]
    fn layer_norm_standardized_row_is_fixed_point() {
        // zero mean, unit (population) variance
        let x = Tensor::new(vec![-1.0f64, 1.0], &[1, 2]);
        let gamma = Tensor::new(vec![1.0f64; 2], &[2]);
        let beta = Tensor::new(vec![0.0f64; 2], &[2]);
        let y = x.layer_norm(&gamma, &beta, 1e-12).to_vec();
        assert!(close(y[0], -1.0, 1e-6));
        assert!(close(y[1], 1.0, 1e-6));
    }

    #[test]
    fn layer_norm_hand_example() {
        // [1,3]: mean 2, population var 1 → [−1, 1]
        let x = Tensor::new(vec![1.0f64, 3.0], &[1, 2]);
        let gamma = Tensor::new(vec![1.0f64; 2], &[2]);
        let beta = Tensor::new(vec![0.0f64; 2], &[2]);
        let y = x.layer_norm(&gamma, &beta, 1e-15).to_vec();
        assert!(close(y[0], -1.0, 1e-7));
        assert!(close(y[1], 1.0, 1e-7));
    }

    #[test]
    fn lookup_single_row_is_table_row() {
        let table = Tensor::new(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]);
        assert_eq!(table.lookup_rows(&[1]).to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn lookup_repeated_rows() {
        let table = Tensor::new(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]);
        let out = table.lookup_rows(&[0, 0, 1]);
        assert_eq!(out.shape(), vec![3, 2]);
        assert_eq!(out.to_vec(), vec![1.0, 2.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn lookup_repeated_id_gradients_accumulate() {
        let table = Tensor::param(vec![1.0f64, 2.0, 3.0, 4.0], &[2, 2]);
        table.lookup_rows(&[0, 0, 1]).sum_all().backward();
        assert_eq!(table.grad().unwrap(), vec![2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn lookup_out_of_range_id_panics() {
        let table = Tensor::<f64>::zeros(&[2, 2]);
        let _ = table.lookup_rows(&[2]);
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let x = Tensor::new(vec![1.0f64, -2.0, 3.5], &[3]);
        let mut rng = substream(0, "dropout", 0);
        assert_eq!(x.dropout(0.5, false, &mut rng).to_vec(), x.to_vec());
        assert_eq!(x.dropout(0.0, true, &mut rng).to_vec(), x.to_vec());
    }

    #[test]
    #[should_panic(expected = "probability must be in [0,1)")]
    fn dropout_rejects_p_one() {
        let x = Tensor::<f64>::zeros(&[2]);
        let mut rng = substream(0, "dropout", 0);
        let _ = x.dropout(1.0, true, &mut rng);
    }

    #[test]
    fn dropout_preserves_mean_within_three_sigma() {
        // inverted dropout of 1s at p=0.5: per-element variance is 1, so the
        // mean of 1e5 draws has σ = √(1/1e5)
        let n = 100_000;
        let x = Tensor::new(vec![1.0f64; n], &[n]);
        let mut rng = substream(42, "dropout", 0);
        let y = x.dropout(0.5, true, &mut rng).to_vec();
        let mean: f64 = y.iter().sum::<f64>() / n as f64;
        let sigma = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean} off by more than 3σ");
    }

    #[test]
    fn pick_and_scatter() {
        let x = Tensor::param(vec![10.0f64, 20.0, 30.0, 40.0], &[2, 2]);
        let picked = x.pick(&[3, 0, 3]);
        assert_eq!(picked.to_vec(), vec![40.0, 10.0, 40.0]);
        picked.sum_all().backward();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn logsumexp_matches_direct_log_sum() {
        let x = Tensor::new(vec![0.1f64, -0.4, 2.0, 1.0, -3.0, 0.5], &[2, 3]);
        let lse = x.logsumexp(1).to_vec();
        let data = x.to_vec();
        for r in 0..2 {
            let direct: f64 = data[r * 3..(r + 1) * 3].iter().map(|v| v.exp()).sum::<f64>().ln();
            assert!(close(lse[r], direct, 1e-12));
        }
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let a = Tensor::new(vec![1.0f64, 2.0], &[1, 2]);
        let b = Tensor::new(vec![3.0f64, 4.0, 5.0, 6.0], &[2, 2]);
        let c = Tensor::concat_rows(&[a.clone(), b.clone()]);
        assert_eq!(c.shape(), vec![3, 2]);
        assert_eq!(c.slice_rows(1, 2).to_vec(), b.to_vec());
        let wide = Tensor::concat_cols(&[a.clone(), a.clone()]);
        assert_eq!(wide.to_vec(), vec![1.0, 2.0, 1.0, 2.0]);
    }
}
