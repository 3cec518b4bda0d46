//! Dialogue-level corpus splitting.

use super::{Corpus, DataError};
use crate::rng::substream;
use rand::seq::SliceRandom;

/// Partitions dialogues into train/validation/test by the given
/// fractions, deterministically by seed. No dialogue straddles splits,
/// and all three parts share the parent corpus's label vocabularies.
pub fn split_corpus(
    corpus: &Corpus,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Corpus, Corpus, Corpus), DataError> {
    let (f1, f2, f3) = fractions;
    let sum = f1 + f2 + f3;
    if f1 <= 0.0 || f2 <= 0.0 || f3 <= 0.0 || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(vec![f1, f2, f3]));
    }
    let n = corpus.dialogues.len();
    let n1 = (n as f64 * f1).round() as usize;
    let n2 = (n as f64 * f2).round() as usize;
    if n1 == 0 || n2 == 0 || n1 + n2 >= n {
        let n3 = n.saturating_sub(n1 + n2);
        return Err(DataError::EmptySplit(n1, n2, n3, n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, "split", 0));

    let part = |range: &[usize]| Corpus {
        dialogues: range.iter().map(|&i| corpus.dialogues[i].clone()).collect(),
        intents: corpus.intents.clone(),
        user_acts: corpus.user_acts.clone(),
        slots: corpus.slots.clone(),
        system_acts: corpus.system_acts.clone(),
    };
    Ok((part(&order[..n1]), part(&order[n1..n1 + n2]), part(&order[n1 + n2..])))
}
