//! Confusion accounting, macro/micro precision-recall-F1 and the soft-vote
//! ensemble.
//!
//! Macro metrics compute each metric per class and average uniformly over
//! classes; micro metrics sum TP/FP/TN/FN across classes first and compute
//! each metric once over the aggregate. Empty cells (0/0) are defined as 0
//! and flagged with a warning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-class confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }
}

/// Confusion counts for every class over one evaluation run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: Vec<ClassCounts>,
}

/// Counts per-class TP/FP/TN/FN over parallel prediction/target lists.
pub fn accumulate(
    preds: &[LabelSet],
    targets: &[LabelSet],
    num_classes: usize,
) -> Result<ConfusionCounts> {
    if preds.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let mut classes = vec![ClassCounts::default(); num_classes];
    for (pred, target) in preds.iter().zip(targets) {
        for (c, counts) in classes.iter_mut().enumerate() {
            match (pred.contains(c), target.contains(c)) {
                (true, true) => counts.true_pos += 1,
                (true, false) => counts.false_pos += 1,
                (false, true) => counts.false_neg += 1,
                (false, false) => counts.true_neg += 1,
            }
        }
    }
    Ok(ConfusionCounts { classes })
}

/// One precision/recall/F1 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

// 0/0 cells are defined as 0; the flag lets callers surface a warning.
fn ratio(num: u64, den: u64, warnings: &mut Vec<String>, what: &str) -> f64 {
    if den == 0 {
        warnings.push(format!("{what}: 0/0 defined as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(precision: f64, recall: f64, warnings: &mut Vec<String>, what: &str) -> f64 {
    if precision + recall == 0.0 {
        warnings.push(format!("{what} F1: 0/0 defined as 0"));
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class metrics averaged uniformly over classes.
pub fn macro_metrics(counts: &ConfusionCounts) -> (Prf, Vec<String>) {
    let mut warnings = Vec::new();
    let p_classes = counts.classes.len() as f64;
    let mut sum = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for (i, c) in counts.classes.iter().enumerate() {
        let precision = ratio(
            c.true_pos,
            c.true_pos + c.false_pos,
            &mut warnings,
            &format!("class {i} precision"),
        );
        let recall = ratio(
            c.true_pos,
            c.true_pos + c.false_neg,
            &mut warnings,
            &format!("class {i} recall"),
        );
        let f1 = f1_of(precision, recall, &mut warnings, &format!("class {i}"));
        sum.precision += precision;
        sum.recall += recall;
        sum.f1 += f1;
    }
    (
        Prf {
            precision: sum.precision / p_classes,
            recall: sum.recall / p_classes,
            f1: sum.f1 / p_classes,
        },
        warnings,
    )
}

/// Metrics over class-summed counts.
pub fn micro_metrics(counts: &ConfusionCounts) -> (Prf, Vec<String>) {
    let mut warnings = Vec::new();
    let tp: u64 = counts.classes.iter().map(|c| c.true_pos).sum();
    let fp: u64 = counts.classes.iter().map(|c| c.false_pos).sum();
    let fneg: u64 = counts.classes.iter().map(|c| c.false_neg).sum();
    let precision = ratio(tp, tp + fp, &mut warnings, "micro precision");
    let recall = ratio(tp, tp + fneg, &mut warnings, "micro recall");
    let f1 = f1_of(precision, recall, &mut warnings, "micro");
    (
        Prf {
            precision,
            recall,
            f1,
        },
        warnings,
    )
}

/// Macro and micro metrics for one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub micro: Prf,
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn from_counts(counts: &ConfusionCounts) -> Self {
        let (macro_avg, mut warnings) = macro_metrics(counts);
        let (micro, mut micro_warnings) = micro_metrics(counts);
        warnings.append(&mut micro_warnings);
        MetricReport {
            macro_avg,
            micro,
            warnings,
        }
    }

    /// Tabular form: one row per averaging mode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("average,precision,recall,f1\n");
        out.push_str(&format!(
            "macro,{},{},{}\n",
            self.macro_avg.precision, self.macro_avg.recall, self.macro_avg.f1
        ));
        out.push_str(&format!(
            "micro,{},{},{}\n",
            self.micro.precision, self.micro.recall, self.micro.f1
        ));
        out
    }
}

/// Mean and population standard deviation of reports across folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub folds: Vec<MetricReport>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub micro: Prf,
}

impl AggregateReport {
    pub fn from_folds(folds: Vec<MetricReport>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::Config("no fold reports to aggregate".into()));
        }
        let n = folds.len() as f64;
        // Population mean and std per metric slot.
        let getters: [fn(&MetricReport) -> f64; 6] = [
            |r| r.macro_avg.precision,
            |r| r.macro_avg.recall,
            |r| r.macro_avg.f1,
            |r| r.micro.precision,
            |r| r.micro.recall,
            |r| r.micro.f1,
        ];
        let mut means = [0.0; 6];
        let mut stds = [0.0; 6];
        for (slot, get) in getters.into_iter().enumerate() {
            let mean = folds.iter().map(get).sum::<f64>() / n;
            let var = folds
                .iter()
                .map(|r| (get(r) - mean) * (get(r) - mean))
                .sum::<f64>()
                / n;
            means[slot] = mean;
            stds[slot] = var.sqrt();
        }
        let summary = |v: [f64; 6]| MetricSummary {
            macro_avg: Prf {
                precision: v[0],
                recall: v[1],
                f1: v[2],
            },
            micro: Prf {
                precision: v[3],
                recall: v[4],
                f1: v[5],
            },
        };
        Ok(AggregateReport {
            folds,
            mean: summary(means),
            std: summary(stds),
        })
    }

    /// `mean +/- std` rows for every metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("average,metric,mean,std\n");
        let rows = [
            (
                "macro",
                "precision",
                self.mean.macro_avg.precision,
                self.std.macro_avg.precision,
            ),
            (
                "macro",
                "recall",
                self.mean.macro_avg.recall,
                self.std.macro_avg.recall,
            ),
            ("macro", "f1", self.mean.macro_avg.f1, self.std.macro_avg.f1),
            (
                "micro",
                "precision",
                self.mean.micro.precision,
                self.std.micro.precision,
            ),
            (
                "micro",
                "recall",
                self.mean.micro.recall,
                self.std.micro.recall,
            ),
            ("micro", "f1", self.mean.micro.f1, self.std.micro.f1),
        ];
        for (avg, metric, mean, std) in rows {
            out.push_str(&format!("{avg},{metric},{mean},{std}\n"));
        }
        out
    }
}

/// Unweighted mean of per-class probability vectors across models.
pub fn ensemble<T: Scalar>(prob_vectors: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = prob_vectors
        .first()
        .ok_or_else(|| Error::Config("ensemble of zero models".into()))?;
    let mut sum = first.clone();
    for probs in &prob_vectors[1..] {
        sum.add_assign(probs)?;
    }
    Ok(sum.scale(T::one() / T::from_f64_lossy(prob_vectors.len() as f64)))
}

/// Thresholds a probability vector into a label set.
pub fn threshold_probs<T: Scalar>(probs: &Tensor<T>, threshold: f64) -> LabelSet {
    LabelSet::from_probs(probs, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    fn counts(spec: &[(u64, u64, u64, u64)]) -> ConfusionCounts {
        ConfusionCounts {
            classes: spec
                .iter()
                .map(|&(tp, fp, tn, fneg)| ClassCounts {
                    true_pos: tp,
                    false_pos: fp,
                    true_neg: tn,
                    false_neg: fneg,
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_predictor_has_no_errors() {
        let sets: Vec<LabelSet> = (0..5)
            .map(|i| LabelSet::from_indices(&[i % 2, 2]))
            .collect();
        let c = accumulate(&sets, &sets, 3).unwrap();
        for class in &c.classes {
            assert_eq!(class.false_pos, 0);
            assert_eq!(class.false_neg, 0);
            assert_eq!(class.total(), 5);
        }
        let report = MetricReport::from_counts(&c);
        assert_eq!(report.micro.f1, 1.0);
    }

    #[test]
    fn degenerate_predictor_counts_misses() {
        let empty = vec![LabelSet::empty(); 4];
        let full = vec![LabelSet::from_indices(&[0, 1]); 4];
        let c = accumulate(&empty, &full, 2).unwrap();
        for class in &c.classes {
            assert_eq!(class.true_pos, 0);
            assert_eq!(class.false_neg, 4);
        }
    }

    #[test]
    fn hand_enumerated_table() {
        // 3 samples, 2 classes; every (pred, target) cell written out.
        let preds = vec![
            LabelSet::from_indices(&[0]),
            LabelSet::from_indices(&[0, 1]),
            LabelSet::empty(),
        ];
        let targets = vec![
            LabelSet::from_indices(&[0, 1]),
            LabelSet::from_indices(&[1]),
            LabelSet::empty(),
        ];
        let c = accumulate(&preds, &targets, 2).unwrap();
        // Class 0: s1 TP, s2 FP, s3 TN.
        assert_eq!(
            c.classes[0],
            ClassCounts {
                true_pos: 1,
                false_pos: 1,
                true_neg: 1,
                false_neg: 0
            }
        );
        // Class 1: s1 FN, s2 TP, s3 TN.
        assert_eq!(
            c.classes[1],
            ClassCounts {
                true_pos: 1,
                false_pos: 0,
                true_neg: 1,
                false_neg: 1
            }
        );
    }

    #[test]
    fn accumulate_rejects_length_mismatch() {
        assert!(accumulate(&[LabelSet::empty()], &[], 2).is_err());
    }

    #[test]
    fn macro_metrics_hand_example() {
        // class1 (TP2, FP1, FN0), class2 (TP1, FP0, FN1).
        let c = counts(&[(2, 1, 0, 0), (1, 0, 0, 1)]);
        let (m, warnings) = macro_metrics(&c);
        assert!((m.precision - 5.0 / 6.0).abs() < 1e-12, "{}", m.precision);
        assert!((m.recall - 0.75).abs() < 1e-12);
        assert!(warnings.is_empty());
    }

    #[test]
    fn micro_metrics_hand_example() {
        let c = counts(&[(2, 1, 0, 0), (1, 0, 0, 1)]);
        let (m, _) = micro_metrics(&c);
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.75);
        assert_eq!(m.f1, 0.75);
    }

    #[test]
    fn single_class_macro_equals_micro() {
        let c = counts(&[(7, 3, 5, 2)]);
        let (macro_m, _) = macro_metrics(&c);
        let (micro_m, _) = micro_metrics(&c);
        assert_eq!(macro_m, micro_m);
    }

    #[test]
    fn identical_class_counts_make_macro_equal_micro() {
        let c = counts(&[(4, 2, 6, 1); 3]);
        let (macro_m, _) = macro_metrics(&c);
        let (micro_m, _) = micro_metrics(&c);
        assert!((macro_m.precision - micro_m.precision).abs() < 1e-12);
        assert!((macro_m.recall - micro_m.recall).abs() < 1e-12);
        assert!((macro_m.f1 - micro_m.f1).abs() < 1e-12);
    }

    #[test]
    fn minority_class_errors_dilute_in_micro() {
        // Majority class perfect at scale, minority class poor: the minority
        // class drags macro far more than micro.
        let imperfect = counts(&[(1000, 10, 1000, 10), (1, 9, 2000, 9)]);
        let perfect = counts(&[(1000, 10, 1000, 10), (19, 0, 2000, 0)]);
        let (macro_bad, _) = macro_metrics(&imperfect);
        let (macro_good, _) = macro_metrics(&perfect);
        let (micro_bad, _) = micro_metrics(&imperfect);
        let (micro_good, _) = micro_metrics(&perfect);
        let macro_drop = macro_good.f1 - macro_bad.f1;
        let micro_drop = micro_good.f1 - micro_bad.f1;
        assert!(
            micro_drop < macro_drop,
            "micro moved {micro_drop}, macro moved {macro_drop}"
        );
    }

    #[test]
    fn all_zero_counts_warn_and_yield_zero() {
        let c = counts(&[(0, 0, 0, 0); 2]);
        let report = MetricReport::from_counts(&c);
        assert_eq!(report.micro.f1, 0.0);
        assert_eq!(report.macro_avg.f1, 0.0);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn micro_p_equals_r_equals_f1_when_fp_matches_fn() {
        let c = counts(&[(5, 3, 10, 1), (4, 1, 12, 3)]); // sum FP 4 == sum FN 4
        let (m, _) = micro_metrics(&c);
        assert_eq!(m.precision, m.recall);
        assert_eq!(m.precision, m.f1);
    }

    #[test]
    fn metrics_invariant_under_class_reordering() {
        let a = counts(&[(2, 1, 5, 0), (1, 0, 6, 1), (9, 2, 1, 3)]);
        let b = counts(&[(9, 2, 1, 3), (2, 1, 5, 0), (1, 0, 6, 1)]);
        assert_eq!(macro_metrics(&a).0, macro_metrics(&b).0);
        assert_eq!(micro_metrics(&a).0, micro_metrics(&b).0);
    }

    #[test]
    fn ensemble_of_identical_models_is_identity() {
        let p = t(&[0.1, 0.9, 0.4]);
        let out = ensemble(&[p.clone(), p.clone(), p.clone()]).unwrap();
        for (a, b) in out.data().iter().zip(p.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ensemble_averages_probabilities() {
        let out = ensemble(&[t(&[0.2]), t(&[0.8])]).unwrap();
        assert!((out.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ensemble_of_one_is_the_model() {
        let p = t(&[0.3, 0.6]);
        assert_eq!(ensemble(std::slice::from_ref(&p)).unwrap(), p);
    }

    #[test]
    fn ensemble_order_invariant_and_bounded() {
        let models = [t(&[0.1, 0.5]), t(&[0.9, 0.2]), t(&[0.3, 0.3])];
        let a = ensemble(&models).unwrap();
        let b = ensemble(&[models[2].clone(), models[0].clone(), models[1].clone()]).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
        for c in 0..2 {
            let min = models.iter().map(|m| m.data()[c]).fold(f64::MAX, f64::min);
            let max = models.iter().map(|m| m.data()[c]).fold(f64::MIN, f64::max);
            assert!(a.data()[c] >= min - 1e-15 && a.data()[c] <= max + 1e-15);
        }
    }

    #[test]
    fn ensemble_rejects_mismatched_widths() {
        assert!(ensemble(&[t(&[0.1, 0.2]), t(&[0.5])]).is_err());
        assert!(ensemble::<f64>(&[]).is_err());
    }

    #[test]
    fn aggregate_mean_and_std() {
        let r1 = MetricReport::from_counts(&counts(&[(1, 0, 0, 1)]));
        let r2 = MetricReport::from_counts(&counts(&[(1, 0, 0, 0)]));
        let agg = AggregateReport::from_folds(vec![r1, r2]).unwrap();
        assert!((agg.mean.micro.recall - 0.75).abs() < 1e-12);
        assert!((agg.std.micro.recall - 0.25).abs() < 1e-12);
        let csv = agg.to_csv();
        assert!(csv.starts_with("average,metric,mean,std\n"));
        assert_eq!(csv.lines().count(), 7);
    }
}
