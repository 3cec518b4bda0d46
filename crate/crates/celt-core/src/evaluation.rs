//! Corpus-level metrics: intent accuracy, micro-averaged span-exact slot
//! F1, micro-averaged user-act F1, and sentence-level frame accuracy.
//!
//! Everything accumulates integer counts and divides once at the end, so
//! results are independent of example order.

use crate::data::SemanticFrame;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction/gold length mismatch: {pred} vs {gold}")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("metrics require at least one example")]
    Empty,
}

/// Precision, recall, F1. F1 is 0 when both P and R are 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Aggregated metrics for one prediction/gold pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub example_count: usize,
    pub intent_accuracy: f64,
    pub user_act_precision: f64,
    pub user_act_recall: f64,
    pub user_act_f1: f64,
    pub slot_precision: f64,
    pub slot_recall: f64,
    pub slot_f1: f64,
    pub frame_accuracy: f64,
    /// Whether user acts participate in the frame conjunction.
    pub acts_in_frame: bool,
    pub per_label_slots: BTreeMap<String, LabelCounts>,
}

fn check_aligned<P, G>(pred: &[P], gold: &[G]) -> Result<(), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Exact-match fraction over aligned intent labels.
pub fn intent_accuracy(pred: &[String], gold: &[String]) -> Result<f64, EvalError> {
    check_aligned(pred, gold)?;
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

type SpanKey = (String, usize, usize);

fn span_set(frame: &SemanticFrame) -> BTreeSet<SpanKey> {
    frame.slots.iter().map(|s| (s.slot.clone(), s.start_word, s.end_word)).collect()
}

/// Span-exact micro F1: a predicted span counts iff slot name, start and
/// end all match a gold span.
pub fn slot_f1(pred: &[SemanticFrame], gold: &[SemanticFrame]) -> Result<Prf, EvalError> {
    check_aligned(pred, gold)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, g) in pred.iter().zip(gold) {
        let ps = span_set(p);
        let gs = span_set(g);
        tp += ps.intersection(&gs).count() as u64;
        fp += ps.difference(&gs).count() as u64;
        fn_ += gs.difference(&ps).count() as u64;
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Micro F1 over (example, act) instances.
pub fn user_act_f1(
    pred: &[BTreeSet<String>],
    gold: &[BTreeSet<String>],
) -> Result<Prf, EvalError> {
    check_aligned(pred, gold)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (p, g) in pred.iter().zip(gold) {
        tp += p.intersection(g).count() as u64;
        fp += p.difference(g).count() as u64;
        fn_ += g.difference(p).count() as u64;
    }
    Ok(Prf::from_counts(tp, fp, fn_))
}

/// Fraction of examples whose intent, full slot-span set, and (when
/// `include_acts`) user-act set all match exactly.
pub fn frame_accuracy(
    pred: &[SemanticFrame],
    gold: &[SemanticFrame],
    include_acts: bool,
) -> Result<f64, EvalError> {
    check_aligned(pred, gold)?;
    let hits = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| {
            p.intent == g.intent
                && span_set(p) == span_set(g)
                && (!include_acts || p.user_acts == g.user_acts)
        })
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Aggregates every metric plus a per-slot-label breakdown.
pub fn build_report(
    pred: &[SemanticFrame],
    gold: &[SemanticFrame],
    include_acts: bool,
) -> Result<MetricsReport, EvalError> {
    check_aligned(pred, gold)?;
    let intents_p: Vec<String> = pred.iter().map(|f| f.intent.clone()).collect();
    let intents_g: Vec<String> = gold.iter().map(|f| f.intent.clone()).collect();
    let acts_p: Vec<BTreeSet<String>> = pred.iter().map(|f| f.user_acts.clone()).collect();
    let acts_g: Vec<BTreeSet<String>> = gold.iter().map(|f| f.user_acts.clone()).collect();

    let mut per_label: BTreeMap<String, (u64, u64, u64)> = BTreeMap::new();
    for (p, g) in pred.iter().zip(gold) {
        let ps = span_set(p);
        let gs = span_set(g);
        for span in ps.intersection(&gs) {
            per_label.entry(span.0.clone()).or_default().0 += 1;
        }
        for span in ps.difference(&gs) {
            per_label.entry(span.0.clone()).or_default().1 += 1;
        }
        for span in gs.difference(&ps) {
            per_label.entry(span.0.clone()).or_default().2 += 1;
        }
    }
    let per_label_slots: BTreeMap<String, LabelCounts> = per_label
        .into_iter()
        .map(|(label, (tp, fp, fn_))| {
            let prf = Prf::from_counts(tp, fp, fn_);
            (
                label,
                LabelCounts {
                    tp,
                    fp,
                    fn_,
                    precision: prf.precision,
                    recall: prf.recall,
                    f1: prf.f1,
                },
            )
        })
        .collect();

    let slot = slot_f1(pred, gold)?;
    let act = user_act_f1(&acts_p, &acts_g)?;
    Ok(MetricsReport {
        example_count: pred.len(),
        intent_accuracy: intent_accuracy(&intents_p, &intents_g)?,
        user_act_precision: act.precision,
        user_act_recall: act.recall,
        user_act_f1: act.f1,
        slot_precision: slot.precision,
        slot_recall: slot.recall,
        slot_f1: slot.f1,
        frame_accuracy: frame_accuracy(pred, gold, include_acts)?,
        acts_in_frame: include_acts,
        per_label_slots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SlotSpan;

    fn frame(intent: &str, acts: &[&str], slots: &[(&str, usize, usize)]) -> SemanticFrame {
        SemanticFrame {
            intent: intent.into(),
            user_acts: acts.iter().map(|s| s.to_string()).collect(),
            slots: slots.iter().map(|(n, s, e)| SlotSpan::new(*n, *s, *e)).collect(),
        }
    }

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn intent_accuracy_counts_exact_matches() {
        assert_eq!(intent_accuracy(&strs(&["a", "b"]), &strs(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(intent_accuracy(&strs(&["a", "b"]), &strs(&["c", "d"])).unwrap(), 0.0);
        assert_eq!(
            intent_accuracy(&strs(&["a", "b", "c", "d"]), &strs(&["a", "b", "c", "x"])).unwrap(),
            0.75
        );
        assert!(matches!(
            intent_accuracy(&strs(&["a"]), &strs(&["a", "b"])),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(intent_accuracy(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn identical_predictions_score_perfectly() {
        let gold = vec![frame("x", &["i"], &[("time", 1, 3)])];
        let prf = slot_f1(&gold, &gold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn boundary_mismatch_is_no_credit() {
        let gold = vec![frame("x", &[], &[("time", 1, 3)])];
        let pred = vec![frame("x", &[], &[("time", 1, 2)])];
        let prf = slot_f1(&pred, &gold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn micro_slot_counts_match_hand_tally() {
        // gold {a:(0,1), b:(2,3)}, pred {a:(0,1)} → P=1, R=0.5, F1=2/3
        let gold = vec![frame("x", &[], &[("a", 0, 1), ("b", 2, 3)])];
        let pred = vec![frame("x", &[], &[("a", 0, 1)])];
        let prf = slot_f1(&pred, &gold).unwrap();
        assert_eq!(prf.precision, 1.0);
        assert_eq!(prf.recall, 0.5);
        assert!((prf.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn act_f1_over_instances() {
        let gold = vec![["a", "b"].iter().map(|s| s.to_string()).collect::<BTreeSet<_>>()];
        let pred = vec![["b", "c"].iter().map(|s| s.to_string()).collect::<BTreeSet<_>>()];
        let prf = user_act_f1(&pred, &gold).unwrap();
        assert_eq!((prf.precision, prf.recall, prf.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn empty_predictions_have_zero_recall() {
        let gold = vec![["a"].iter().map(|s| s.to_string()).collect::<BTreeSet<_>>()];
        let pred = vec![BTreeSet::new()];
        let prf = user_act_f1(&pred, &gold).unwrap();
        assert_eq!(prf.recall, 0.0);
        assert_eq!(prf.f1, 0.0);
    }

    #[test]
    fn frame_accuracy_is_a_conjunction() {
        let gold = vec![
            frame("x", &["i"], &[("a", 0, 1)]),
            frame("y", &["i"], &[("b", 1, 2)]),
        ];
        let mut pred = gold.clone();
        assert_eq!(frame_accuracy(&pred, &gold, true).unwrap(), 1.0);
        // right intent, one span off → that example scores zero
        pred[1].slots[0].end_word = 3;
        assert_eq!(frame_accuracy(&pred, &gold, true).unwrap(), 0.5);
        // act mismatch only counts when acts are included
        let mut pred2 = gold.clone();
        pred2[0].user_acts.insert("extra".into());
        assert_eq!(frame_accuracy(&pred2, &gold, true).unwrap(), 0.5);
        assert_eq!(frame_accuracy(&pred2, &gold, false).unwrap(), 1.0);
    }

    #[test]
    fn report_on_perfect_predictions_is_all_ones() {
        let gold = vec![frame("x", &["i"], &[("a", 0, 1)]), frame("y", &["j"], &[("b", 2, 4)])];
        let r = build_report(&gold, &gold, true).unwrap();
        assert_eq!(r.intent_accuracy, 1.0);
        assert_eq!(r.user_act_f1, 1.0);
        assert_eq!(r.slot_f1, 1.0);
        assert_eq!(r.frame_accuracy, 1.0);
        assert_eq!(r.example_count, 2);
    }

    #[test]
    fn report_round_trips_through_json() {
        let gold = vec![frame("x", &["i"], &[("a", 0, 1), ("b", 2, 3)])];
        let pred = vec![frame("x", &["i", "j"], &[("a", 0, 1)])];
        let r = build_report(&pred, &gold, true).unwrap();
        let json = serde_json::to_string_pretty(&r).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), json);
    }

    #[test]
    fn randomized_metric_laws() {
        use rand::Rng;
        let mut rng = crate::rng::substream(77, "metric-laws", 0);
        for _ in 0..50 {
            let n = rng.gen_range(1..10usize);
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<SemanticFrame> {
                (0..n)
                    .map(|_| {
                        let mut slots = Vec::new();
                        let mut cursor = 0usize;
                        for _ in 0..rng.gen_range(0..3) {
                            let start = cursor + rng.gen_range(0..2);
                            let end = start + rng.gen_range(1..3);
                            slots.push(SlotSpan::new(format!("s{}", rng.gen_range(0..3)), start, end));
                            cursor = end;
                        }
                        SemanticFrame {
                            intent: format!("i{}", rng.gen_range(0..3)),
                            user_acts: (0..rng.gen_range(0..3))
                                .map(|_| format!("a{}", rng.gen_range(0..3)))
                                .collect(),
                            slots,
                        }
                    })
                    .collect()
            };
            let pred = mk(&mut rng);
            let gold = mk(&mut rng);
            let r = build_report(&pred, &gold, true).unwrap();
            for v in [
                r.intent_accuracy,
                r.user_act_precision,
                r.user_act_recall,
                r.user_act_f1,
                r.slot_precision,
                r.slot_recall,
                r.slot_f1,
                r.frame_accuracy,
            ] {
                assert!((0.0..=1.0).contains(&v), "metric {v} outside [0,1]");
            }
            // F1 bounded by its components; zero exactly when TP is zero
            assert!(r.slot_f1 <= r.slot_precision.max(r.slot_recall) + 1e-12);
            assert!(r.user_act_f1 <= r.user_act_precision.max(r.user_act_recall) + 1e-12);
            let tp: u64 = r.per_label_slots.values().map(|c| c.tp).sum();
            assert_eq!(r.slot_f1 == 0.0, tp == 0);
            // the frame conjunction is strictly stronger than intent match
            assert!(r.frame_accuracy <= r.intent_accuracy + 1e-12);
            // permutation invariance: reverse the example order
            let pred_rev: Vec<SemanticFrame> = pred.iter().rev().cloned().collect();
            let gold_rev: Vec<SemanticFrame> = gold.iter().rev().cloned().collect();
            let r2 = build_report(&pred_rev, &gold_rev, true).unwrap();
            assert_eq!(r, r2);
        }
    }

    #[test]
    fn per_label_rows_sum_to_micro_totals() {
        let gold = vec![
            frame("x", &[], &[("a", 0, 1), ("b", 2, 3)]),
            frame("x", &[], &[("a", 1, 2)]),
        ];
        let pred = vec![
            frame("x", &[], &[("a", 0, 1), ("b", 1, 2)]),
            frame("x", &[], &[("b", 1, 2)]),
        ];
        let r = build_report(&pred, &gold, false).unwrap();
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for counts in r.per_label_slots.values() {
            tp += counts.tp;
            fp += counts.fp;
            fn_ += counts.fn_;
        }
        let denom_p = (tp + fp) as f64;
        let denom_r = (tp + fn_) as f64;
        assert!((r.slot_precision - tp as f64 / denom_p).abs() < 1e-12);
        assert!((r.slot_recall - tp as f64 / denom_r).abs() < 1e-12);
    }
}
