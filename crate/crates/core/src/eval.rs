//! Confusion counts and the per-class precision, recall and F1 plus overall
//! accuracy used to judge the classifier.
//!
//! Metric functions are generic over [`MetricScalar`], so the same code runs
//! on `f64` and on exact rationals. A zero denominator yields 0 and the
//! metric is listed in [`EvalReport::undefined`].

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::model::SentimentModel;
use crate::{Error, Result, Scalar, Sentiment};

/// Number type a metric can be computed in.
pub trait MetricScalar: Num + FromPrimitive + Copy + PartialOrd {}

impl<T: Num + FromPrimitive + Copy + PartialOrd> MetricScalar for T {}

fn count<T: MetricScalar>(n: u64) -> T {
    T::from_u64(n).expect("count representable in metric scalar")
}

fn ratio<T: MetricScalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::zero()
    } else {
        count::<T>(num) / count::<T>(den)
    }
}

/// One-vs-rest counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub negative: ClassCounts,
    pub positive: ClassCounts,
}

impl ConfusionMatrix {
    pub fn class(&self, class: Sentiment) -> &ClassCounts {
        match class {
            Sentiment::Negative => &self.negative,
            Sentiment::Positive => &self.positive,
        }
    }

    fn class_mut(&mut self, class: Sentiment) -> &mut ClassCounts {
        match class {
            Sentiment::Negative => &mut self.negative,
            Sentiment::Positive => &mut self.positive,
        }
    }

    pub fn total(&self) -> u64 {
        self.negative.total()
    }
}

pub fn confusion(predictions: &[Sentiment], truths: &[Sentiment]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("confusion matrix needs at least one sample"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&pred, &truth) in predictions.iter().zip(truths) {
        for class in Sentiment::ALL {
            let c = cm.class_mut(class);
            match (pred == class, truth == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(cm)
}

/// `TP / (FP + TP)`
pub fn precision<T: MetricScalar>(cm: &ConfusionMatrix, class: Sentiment) -> T {
    let c = cm.class(class);
    ratio(c.tp, c.fp + c.tp)
}

/// `TP / (FN + TP)`
pub fn recall<T: MetricScalar>(cm: &ConfusionMatrix, class: Sentiment) -> T {
    let c = cm.class(class);
    ratio(c.tp, c.fn_ + c.tp)
}

/// Harmonic mean `2·p·r / (p + r)`, 0 when both are 0.
pub fn f1<T: MetricScalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        return T::zero();
    }
    let two = T::one() + T::one();
    two * precision * recall / sum
}

/// `(TP + TN) / (TP + FP + FN + TN)`.
pub fn accuracy<T: MetricScalar>(cm: &ConfusionMatrix) -> Result<T> {
    let c = &cm.positive;
    if c.total() == 0 {
        return Err(Error::invalid("accuracy of an empty confusion matrix"));
    }
    Ok(ratio(c.tp + c.tn, c.total()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics<T> {
    pub macro_precision: T,
    pub macro_recall: T,
    pub macro_f1: T,
    pub accuracy: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub negative: ClassMetrics<T>,
    pub positive: ClassMetrics<T>,
    /// Unweighted means over the two classes, plus accuracy.
    pub overall: OverallMetrics<T>,
    pub confusion: ConfusionMatrix,
    pub samples: u64,
    /// Metrics that hit a zero denominator and were reported as 0,
    /// e.g. `"positive.precision"`.
    pub undefined: Vec<String>,
}

impl<T: MetricScalar> EvalReport<T> {
    pub fn class(&self, class: Sentiment) -> &ClassMetrics<T> {
        match class {
            Sentiment::Negative => &self.negative,
            Sentiment::Positive => &self.positive,
        }
    }

    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let acc = accuracy::<T>(cm)?;
        let mut undefined = Vec::new();
        let per_class = Sentiment::ALL.map(|class| {
            let c = cm.class(class);
            let p = precision::<T>(cm, class);
            let r = recall::<T>(cm, class);
            if c.tp + c.fp == 0 {
                undefined.push(format!("{class}.precision"));
            }
            if c.tp + c.fn_ == 0 {
                undefined.push(format!("{class}.recall"));
            }
            if p + r == T::zero() {
                undefined.push(format!("{class}.f1"));
            }
            ClassMetrics { precision: p, recall: r, f1: f1(p, r) }
        });
        let two = T::one() + T::one();
        let mean = |f: fn(&ClassMetrics<T>) -> T| (f(&per_class[0]) + f(&per_class[1])) / two;
        let overall = OverallMetrics {
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            accuracy: acc,
        };
        let [negative, positive] = per_class;
        Ok(EvalReport { negative, positive, overall, confusion: *cm, samples: cm.total(), undefined })
    }
}

/// Predict every labeled text and report the metrics.
pub fn evaluate<T: Scalar>(model: &SentimentModel<T>, labeled: &[(String, Sentiment)]) -> Result<EvalReport<f64>> {
    let predictions: Vec<Sentiment> = labeled.iter().map(|(text, _)| model.predict(text).label).collect();
    let truths: Vec<Sentiment> = labeled.iter().map(|(_, l)| *l).collect();
    EvalReport::from_confusion(&confusion(&predictions, &truths)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Sentiment::{Negative as N, Positive as P};

    fn cm_from(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionMatrix {
        let positive = ClassCounts { tp, fp, fn_, tn };
        let negative = ClassCounts { tp: tn, fp: fn_, fn_: fp, tn: tp };
        ConfusionMatrix { negative, positive }
    }

    #[test]
    fn perfect_and_inverted_predictions() {
        let cm = confusion(&[P; 4], &[P; 4]).unwrap();
        assert_eq!(cm.positive, ClassCounts { tp: 4, fp: 0, fn_: 0, tn: 0 });
        assert_eq!(cm.negative, ClassCounts { tp: 0, fp: 0, fn_: 0, tn: 4 });

        let truths = [P, N, N, P, N];
        let preds: Vec<_> = truths.iter().map(|t| t.other()).collect();
        let cm = confusion(&preds, &truths).unwrap();
        assert_eq!(cm.positive.tp, 0);
        assert_eq!(cm.negative.tp, 0);
    }

    #[test]
    fn two_class_symmetry() {
        let cm = confusion(&[P, P, N, N, P], &[P, N, N, P, P]).unwrap();
        assert_eq!(cm.positive.tp, cm.negative.tn);
        assert_eq!(cm.positive.fp, cm.negative.fn_);
        assert_eq!(cm.positive.total(), 5);
        assert_eq!(cm.negative.total(), 5);
    }

    #[test]
    fn bad_inputs() {
        assert!(confusion(&[P], &[P, N]).is_err());
        assert!(confusion(&[], &[]).is_err());
        assert!(accuracy::<f64>(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn hand_arithmetic() {
        let cm = cm_from(3, 1, 2, 4);
        assert_eq!(precision::<f64>(&cm, P), 0.75);
        assert_eq!(recall::<f64>(&cm, P), 0.6);
        assert!((accuracy::<f64>(&cm).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(recall::<f64>(&cm_from(3, 0, 0, 1), P), 1.0);
    }

    #[test]
    fn zero_denominators_are_zero_and_flagged() {
        let cm = cm_from(0, 0, 2, 3);
        assert_eq!(precision::<f64>(&cm, P), 0.0);
        let report = EvalReport::<f64>::from_confusion(&cm).unwrap();
        assert!(report.undefined.contains(&"positive.precision".to_string()));
        assert!(report.undefined.contains(&"positive.f1".to_string()));
        assert!(!report.undefined.iter().any(|u| u.starts_with("negative")));
    }

    #[test]
    fn f1_fixed_points() {
        assert_eq!(f1(0.5f64, 0.5), 0.5);
        assert_eq!(f1(1.0f64, 0.0), 0.0);
        assert_eq!(f1(0.0f64, 0.0), 0.0);
    }

    #[test]
    fn report_json_field_names() {
        let report = EvalReport::<f64>::from_confusion(&cm_from(3, 1, 2, 4)).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        for key in ["precision", "recall", "f1"] {
            assert!(v["negative"][key].is_number());
            assert!(v["positive"][key].is_number());
        }
        for key in ["macro_precision", "macro_recall", "macro_f1", "accuracy"] {
            assert!(v["overall"][key].is_number());
        }
        assert_eq!(v["confusion"]["positive"]["fn"], 2);
        assert_eq!(v["samples"], 10);
    }
}
