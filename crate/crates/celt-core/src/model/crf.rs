//! Linear-chain CRF over the query-word slot tags.
//!
//! Sequence score = Σ emissions + Σ transitions + start/end scores; the
//! partition function runs the forward algorithm in log space, built
//! from differentiable tensor ops so gradients reach the emissions and
//! the transition parameters alike. Decoding is plain Viterbi on raw
//! values.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct CrfParams<F: Scalar> {
    /// `transitions[i·L + j]`: score of tag i → tag j.
    pub transitions: Tensor<F>,
    pub start: Tensor<F>,
    pub end: Tensor<F>,
}

impl<F: Scalar> CrfParams<F> {
    pub fn num_tags(&self) -> usize {
        self.start.shape()[0]
    }

    pub fn tensors(&self) -> Vec<Tensor<F>> {
        vec![self.transitions.clone(), self.start.clone(), self.end.clone()]
    }
}

/// Differentiable score of one tag path.
fn path_score<F: Scalar>(emissions: &Tensor<F>, tags: &[usize], crf: &CrfParams<F>) -> Tensor<F> {
    let l = crf.num_tags();
    let emit_idx: Vec<usize> = tags.iter().enumerate().map(|(t, &tag)| t * l + tag).collect();
    let mut score = emissions.pick(&emit_idx).sum_all();
    score = score.add(&crf.start.pick(&[tags[0]]).sum_all());
    score = score.add(&crf.end.pick(&[tags[tags.len() - 1]]).sum_all());
    if tags.len() > 1 {
        let trans_idx: Vec<usize> = tags.windows(2).map(|w| w[0] * l + w[1]).collect();
        score = score.add(&crf.transitions.pick(&trans_idx).sum_all());
    }
    score
}

/// log Z by the forward algorithm in log space (differentiable).
pub fn crf_log_partition<F: Scalar>(emissions: &Tensor<F>, crf: &CrfParams<F>) -> Tensor<F> {
    let shape = emissions.shape();
    assert_eq!(shape.len(), 2, "emissions must be [T×L], got {shape:?}");
    let (t_len, l) = (shape[0], shape[1]);
    assert!(t_len >= 1, "crf: empty sequence");
    assert_eq!(l, crf.num_tags(), "emissions have {l} tags, crf has {}", crf.num_tags());
    // alpha₀ = start + emissions₀
    let mut alpha = emissions.slice_rows(0, 1).add(&crf.start.reshape(&[1, l]));
    for t in 1..t_len {
        // M[i,j] = alpha[i] + transitions[i,j]; alpha'[j] = lse_i M[i,j] + emit[t,j]
        let m = crf.transitions.add_col(&alpha.reshape(&[l]));
        alpha = m.logsumexp(0).reshape(&[1, l]).add(&emissions.slice_rows(t, 1));
    }
    alpha.add(&crf.end.reshape(&[1, l])).logsumexp(1).sum_all()
}

/// −(score(gold) − log Z); non-negative for every instance.
pub fn crf_negative_log_likelihood<F: Scalar>(
    emissions: &Tensor<F>,
    tags: &[usize],
    crf: &CrfParams<F>,
) -> Tensor<F> {
    let shape = emissions.shape();
    assert_eq!(
        tags.len(),
        shape[0],
        "crf: {} tags for {} emission rows",
        tags.len(),
        shape[0]
    );
    let l = crf.num_tags();
    for &tag in tags {
        assert!(tag < l, "crf: tag {tag} out of range for {l} tags");
    }
    crf_log_partition(emissions, crf).sub(&path_score(emissions, tags, crf))
}

/// Viterbi decoding; ties break toward the lower tag id.
pub fn crf_decode<F: Scalar>(emissions: &Tensor<F>, crf: &CrfParams<F>) -> Vec<usize> {
    let shape = emissions.shape();
    let (t_len, l) = (shape[0], shape[1]);
    assert!(t_len >= 1, "crf: empty sequence");
    assert_eq!(l, crf.num_tags());
    let emit = emissions.to_vec();
    let trans = crf.transitions.to_vec();
    let start = crf.start.to_vec();
    let end = crf.end.to_vec();

    let mut score: Vec<F> = (0..l).map(|j| start[j] + emit[j]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len.saturating_sub(1));
    for t in 1..t_len {
        let mut next = vec![F::neg_infinity(); l];
        let mut ptr = vec![0usize; l];
        for j in 0..l {
            let mut best = F::neg_infinity();
            let mut best_i = 0;
            for i in 0..l {
                let cand = score[i] + trans[i * l + j];
                if cand > best {
                    best = cand;
                    best_i = i;
                }
            }
            next[j] = best + emit[t * l + j];
            ptr[j] = best_i;
        }
        score = next;
        back.push(ptr);
    }
    let mut best_tag = 0;
    let mut best = F::neg_infinity();
    for j in 0..l {
        let cand = score[j] + end[j];
        if cand > best {
            best = cand;
            best_tag = j;
        }
    }
    let mut path = vec![best_tag];
    for ptr in back.iter().rev() {
        path.push(ptr[*path.last().unwrap()]);
    }
    path.reverse();
    path
}
