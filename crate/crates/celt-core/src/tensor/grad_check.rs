//! Central finite-difference verification of reverse-mode gradients.
//!
//! Runs in f64 only: the f32 epsilon swamps the 1e-4 tolerance. The same
//! harness backs the unit suites and the `grad-check` CLI command.

use super::Tensor;
use crate::rng::substream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    /// Worst relative error across all checked elements.
    pub max_rel_err: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// err = |fd − ad| / max(|fd|, |ad|, 1e-5). The floor keeps truncation
/// noise on near-zero gradients out of the relative error: below it, the
/// check still demands agreement to 1e-9 absolute at the 1e-4 tolerance,
/// two orders above the central-difference noise floor.
fn rel_err(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / ad.abs().max(fd.abs()).max(1e-5)
}

/// Checks `d f / d inputs` against central differences with step `h`.
///
/// `f` must be a pure function of the input tensors' data — it is
/// re-evaluated under elementwise perturbations.
pub fn check_gradients(
    name: &str,
    inputs: &[Tensor<f64>],
    f: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>,
    h: f64,
) -> GradCheckReport {
    for t in inputs {
        t.zero_grad();
    }
    let loss = f(inputs);
    loss.backward();
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;
    for (t, ad) in inputs.iter().zip(&analytic) {
        for idx in 0..t.numel() {
            t.nudge(idx, h);
            let plus = f(inputs).item();
            t.nudge(idx, -2.0 * h);
            let minus = f(inputs).item();
            t.nudge(idx, h);
            let fd = (plus - minus) / (2.0 * h);
            max_rel_err = max_rel_err.max(rel_err(ad[idx], fd));
            checked += 1;
        }
    }
    for t in inputs {
        t.zero_grad();
    }
    GradCheckReport { name: name.to_string(), max_rel_err, elements_checked: checked }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::param(data, shape)
}

/// Reduces an arbitrary output to a scalar through fixed random weights,
/// so every output element contributes with a distinct coefficient.
fn weighted(out: &Tensor<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..out.numel()).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn weighted_loss(out: Tensor<f64>, w: &[f64]) -> Tensor<f64> {
    let shape = out.shape();
    out.mul(&Tensor::new(w.to_vec(), &shape)).sum_all()
}

/// Finite-difference checks for every differentiable primitive, at
/// randomized inputs, including a composed attention-style block.
pub fn op_suite(seed: u64) -> Vec<GradCheckReport> {
    const H: f64 = 1e-5;
    let mut rng = substream(seed, "grad-check-ops", 0);
    let mut reports = Vec::new();
    let mut check =
        |name: &str, inputs: &[Tensor<f64>], f: &dyn Fn(&[Tensor<f64>]) -> Tensor<f64>| {
            reports.push(check_gradients(name, inputs, f, H));
        };

    {
        let a = rand_tensor(&mut rng, &[3, 4], 2.0);
        let b = rand_tensor(&mut rng, &[3, 4], 2.0);
        let w = weighted(&a, &mut rng);
        check("add", &[a, b], &|t| weighted_loss(t[0].add(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4], 2.0);
        let b = rand_tensor(&mut rng, &[3, 4], 2.0);
        let w = weighted(&a, &mut rng);
        check("sub", &[a, b], &|t| weighted_loss(t[0].sub(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4], 2.0);
        let b = rand_tensor(&mut rng, &[3, 4], 2.0);
        let w = weighted(&a, &mut rng);
        check("mul", &[a, b], &|t| weighted_loss(t[0].mul(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 5], 2.0);
        let w = weighted(&a, &mut rng);
        check("scale", &[a], &|t| weighted_loss(t[0].scale(-1.7), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4], 2.0);
        let row = rand_tensor(&mut rng, &[4], 2.0);
        let w = weighted(&a, &mut rng);
        check("add_row", &[a, row], &|t| weighted_loss(t[0].add_row(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4], 2.0);
        let col = rand_tensor(&mut rng, &[3], 2.0);
        let w = weighted(&a, &mut rng);
        check("add_col", &[a, col], &|t| weighted_loss(t[0].add_col(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 3], 2.0);
        let mask = vec![0.0, -5.0, 1.0];
        let w = weighted(&a, &mut rng);
        check("add_const_row", &[a], &|t| weighted_loss(t[0].add_const_row(&mask), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4], 1.0);
        let b = rand_tensor(&mut rng, &[4, 2], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 1);
        let w = weighted(&Tensor::<f64>::zeros(&[3, 2]), &mut r2);
        check("matmul", &[a, b], &|t| weighted_loss(t[0].matmul(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 4], 1.0);
        let b = rand_tensor(&mut rng, &[2, 4], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 2);
        let w = weighted(&Tensor::<f64>::zeros(&[3, 2]), &mut r2);
        check("matmul_nt", &[a, b], &|t| weighted_loss(t[0].matmul_nt(&t[1]), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 5], 3.0);
        let w = weighted(&a, &mut rng);
        check("softmax_axis1", &[a], &|t| weighted_loss(t[0].softmax(1), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[3, 5], 3.0);
        let w = weighted(&a, &mut rng);
        check("softmax_axis0", &[a], &|t| weighted_loss(t[0].softmax(0), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[4, 3], 3.0);
        let mut r2 = substream(seed, "grad-check-ops", 3);
        let w = weighted(&Tensor::<f64>::zeros(&[4]), &mut r2);
        check("logsumexp_axis1", &[a], &|t| weighted_loss(t[0].logsumexp(1), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[4, 3], 3.0);
        let mut r2 = substream(seed, "grad-check-ops", 4);
        let w = weighted(&Tensor::<f64>::zeros(&[3]), &mut r2);
        check("logsumexp_axis0", &[a], &|t| weighted_loss(t[0].logsumexp(0), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 6], 2.5);
        let w = weighted(&a, &mut rng);
        check("gelu", &[a], &|t| weighted_loss(t[0].gelu(), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 6], 2.5);
        let w = weighted(&a, &mut rng);
        check("tanh", &[a], &|t| weighted_loss(t[0].tanh_act(), &w));
    }
    {
        let x = rand_tensor(&mut rng, &[3, 6], 2.0);
        let gamma = rand_tensor(&mut rng, &[6], 1.0);
        let beta = rand_tensor(&mut rng, &[6], 1.0);
        let w = weighted(&x, &mut rng);
        check("layer_norm", &[x, gamma, beta], &|t| {
            weighted_loss(t[0].layer_norm(&t[1], &t[2], 1e-5), &w)
        });
    }
    {
        let table = rand_tensor(&mut rng, &[5, 3], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 5);
        let w = weighted(&Tensor::<f64>::zeros(&[4, 3]), &mut r2);
        check("lookup_rows", &[table], &|t| weighted_loss(t[0].lookup_rows(&[2, 0, 2, 4]), &w));
    }
    {
        let x = rand_tensor(&mut rng, &[5, 3], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 6);
        let w = weighted(&Tensor::<f64>::zeros(&[2, 3]), &mut r2);
        check("slice_rows", &[x], &|t| weighted_loss(t[0].slice_rows(1, 2), &w));
    }
    {
        let a = rand_tensor(&mut rng, &[2, 3], 1.0);
        let b = rand_tensor(&mut rng, &[1, 3], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 7);
        let w = weighted(&Tensor::<f64>::zeros(&[3, 3]), &mut r2);
        check("concat_rows", &[a, b], &|t| {
            weighted_loss(Tensor::concat_rows(&[t[0].clone(), t[1].clone()]), &w)
        });
    }
    {
        let a = rand_tensor(&mut rng, &[3, 2], 1.0);
        let b = rand_tensor(&mut rng, &[3, 4], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 8);
        let w = weighted(&Tensor::<f64>::zeros(&[3, 6]), &mut r2);
        check("concat_cols", &[a, b], &|t| {
            weighted_loss(Tensor::concat_cols(&[t[0].clone(), t[1].clone()]), &w)
        });
    }
    {
        let x = rand_tensor(&mut rng, &[3, 3], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 9);
        let w = weighted(&Tensor::<f64>::zeros(&[3]), &mut r2);
        check("pick", &[x], &|t| weighted_loss(t[0].pick(&[0, 4, 8]), &w));
    }
    {
        let z = rand_tensor(&mut rng, &[5], 3.0);
        let targets = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        check("sigmoid_bce_sum", &[z], &|t| t[0].sigmoid_bce_sum(&targets));
    }
    {
        let x = rand_tensor(&mut rng, &[4, 4], 1.5);
        check("mean_all", &[x], &|t| t[0].mean_all());
    }
    {
        // dropout with a deterministic mask: rebuild the rng per call
        let x = rand_tensor(&mut rng, &[4, 5], 1.5);
        let w = weighted(&x, &mut rng);
        check("dropout", &[x], &|t| {
            let mut d_rng = substream(99, "grad-check-dropout", 0);
            weighted_loss(t[0].dropout(0.4, true, &mut d_rng), &w)
        });
    }
    {
        // composition: one attention step, softmax(q·kᵀ/√d)·v
        let q = rand_tensor(&mut rng, &[3, 4], 1.0);
        let k = rand_tensor(&mut rng, &[3, 4], 1.0);
        let v = rand_tensor(&mut rng, &[3, 4], 1.0);
        let mut r2 = substream(seed, "grad-check-ops", 10);
        let w = weighted(&Tensor::<f64>::zeros(&[3, 4]), &mut r2);
        check("attention_composition", &[q, k, v], &|t| {
            let scores = t[0].matmul_nt(&t[1]).scale(0.5);
            weighted_loss(scores.softmax(1).matmul(&t[2]), &w)
        });
    }
    reports
}
