use serde::{Deserialize, Serialize};

use crate::error::{ResotError, Result};

/// `counts[true][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<Self> {
        if y_true.len() != y_pred.len() {
            return Err(ResotError::DimensionMismatch { expected: y_true.len(), actual: y_pred.len() });
        }
        let mut counts = vec![vec![0; classes]; classes];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            for label in [t, p] {
                if label >= classes {
                    return Err(ResotError::LabelOutOfRange { label, classes });
                }
            }
            counts[t][p] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// `(tp, fp, fn, tn)` for `positive` against everything else.
    pub fn one_vs_rest(&self, positive: usize) -> (usize, usize, usize, usize) {
        let tp = self.counts[positive][positive];
        let fp: usize = (0..self.counts.len()).filter(|&t| t != positive).map(|t| self.counts[t][positive]).sum();
        let fn_: usize = self.counts[positive].iter().sum::<usize>() - tp;
        (tp, fp, fn_, self.total() - tp - fp - fn_)
    }
}

/// Which rates hit a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricFlags {
    pub precision_undefined: bool,
    pub sensitivity_undefined: bool,
    pub specificity_undefined: bool,
    pub f1_undefined: bool,
}

impl MetricFlags {
    pub fn any(&self) -> bool {
        self.precision_undefined || self.sensitivity_undefined || self.specificity_undefined || self.f1_undefined
    }

    fn merge(&mut self, other: MetricFlags) {
        self.precision_undefined |= other.precision_undefined;
        self.sensitivity_undefined |= other.sensitivity_undefined;
        self.specificity_undefined |= other.specificity_undefined;
        self.f1_undefined |= other.f1_undefined;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub flags: MetricFlags,
}

fn ratio(num: usize, den: usize, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn binary_rates(cm: &ConfusionMatrix, positive: usize) -> (f64, f64, f64, MetricFlags) {
    let (tp, fp, fn_, tn) = cm.one_vs_rest(positive);
    let mut flags = MetricFlags::default();
    let precision = ratio(tp, tp + fp, &mut flags.precision_undefined);
    let sensitivity = ratio(tp, tp + fn_, &mut flags.sensitivity_undefined);
    let specificity = ratio(tn, tn + fp, &mut flags.specificity_undefined);
    let f1 = if precision + sensitivity == 0.0 {
        flags.f1_undefined = true;
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    };
    (f1, sensitivity, specificity, flags)
}

/// Accuracy plus F1, sensitivity and specificity of `positive` against the
/// rest. With `positive = None`, binary problems use class 1 and multiclass
/// problems report the unweighted mean over one-vs-rest rates.
pub fn metrics(y_true: &[usize], y_pred: &[usize], classes: usize, positive: Option<usize>) -> Result<Metrics> {
    if y_true.is_empty() {
        return Err(ResotError::EmptyBatch);
    }
    let cm = ConfusionMatrix::new(y_true, y_pred, classes)?;
    let correct: usize = (0..classes).map(|k| cm.counts[k][k]).sum();
    let accuracy = correct as f64 / cm.total() as f64;
    let (f1, sensitivity, specificity, flags) = match positive {
        Some(p) if p >= classes => return Err(ResotError::LabelOutOfRange { label: p, classes }),
        Some(p) => binary_rates(&cm, p),
        None if classes == 2 => binary_rates(&cm, 1),
        None => {
            let mut sums = (0.0, 0.0, 0.0);
            let mut flags = MetricFlags::default();
            for k in 0..classes {
                let (f, se, sp, fl) = binary_rates(&cm, k);
                sums = (sums.0 + f, sums.1 + se, sums.2 + sp);
                flags.merge(fl);
            }
            let c = classes as f64;
            (sums.0 / c, sums.1 / c, sums.2 / c, flags)
        }
    };
    Ok(Metrics { accuracy, f1, sensitivity, specificity, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect() {
        let y = [0, 1, 1, 0, 1];
        let m = metrics(&y, &y, 2, None).unwrap();
        assert_eq!((m.accuracy, m.f1, m.sensitivity, m.specificity), (1.0, 1.0, 1.0, 1.0));
        assert!(!m.flags.any());
    }

    #[test]
    fn all_negative_on_balanced_data() {
        let y = [0, 1, 0, 1, 0, 1];
        let m = metrics(&y, &[0; 6], 2, None).unwrap();
        assert_eq!((m.accuracy, m.sensitivity, m.specificity, m.f1), (0.5, 0.0, 1.0, 0.0));
        assert!(m.flags.precision_undefined && m.flags.f1_undefined);
        assert!(!m.flags.sensitivity_undefined);
    }

    #[test]
    fn seeded_matrix_matches_hand_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y: Vec<usize> = (0..200).map(|_| rng.random_range(0..2)).collect();
        let p: Vec<usize> = y.iter().map(|&t| if rng.random_bool(0.8) { t } else { 1 - t }).collect();
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for (&t, &q) in y.iter().zip(&p) {
            match (t, q) {
                (1, 1) => tp += 1.0,
                (0, 1) => fp += 1.0,
                (1, 0) => fn_ += 1.0,
                _ => tn += 1.0,
            }
        }
        let m = metrics(&y, &p, 2, Some(1)).unwrap();
        let prec = tp / (tp + fp);
        let rec = tp / (tp + fn_);
        assert!((m.accuracy - (tp + tn) / 200.0).abs() < 1e-15);
        assert!((m.sensitivity - rec).abs() < 1e-15);
        assert!((m.specificity - tn / (tn + fp)).abs() < 1e-15);
        assert!((m.f1 - 2.0 * prec * rec / (prec + rec)).abs() < 1e-15);
    }

    #[test]
    fn multiclass_averages_one_vs_rest() {
        let y = [0, 1, 2, 2];
        let p = [0, 2, 2, 2];
        let m = metrics(&y, &p, 3, None).unwrap();
        assert_eq!(m.accuracy, 0.75);
        // class 0: f1 1; class 1: f1 0 (flagged); class 2: P 2/3, R 1 → 0.8
        assert!((m.f1 - 1.8 / 3.0).abs() < 1e-12);
        assert!(m.flags.f1_undefined);
    }

    #[test]
    fn label_range_checked() {
        assert!(matches!(metrics(&[0, 3], &[0, 1], 2, None), Err(ResotError::LabelOutOfRange { label: 3, .. })));
        assert!(metrics(&[0, 1], &[0], 2, None).is_err());
    }
}
