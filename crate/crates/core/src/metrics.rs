// SPDX-License-Identifier: Apache-2.0

//! Confusion matrix and precision / recall / F1.

use std::fmt;

use serde::Serialize;

use crate::corpus::LogClass;

const N: usize = LogClass::COUNT;

/// `counts[true][predicted]`, classes in [`LogClass`] index order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N]; N],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: LogClass, predicted: LogClass) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for t in 0..N {
            for p in 0..N {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..N).map(|t| self.counts[t][class]).sum()
    }

    /// 0 when the class was never predicted.
    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.predicted(class))
    }

    /// 0 when the class never occurs.
    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.support(class))
    }

    pub fn f1(&self, class: usize) -> f64 {
        f1(self.precision(class), self.recall(class))
    }

    pub fn accuracy(&self) -> f64 {
        ratio((0..N).map(|k| self.counts[k][k]).sum(), self.total())
    }

    pub fn metrics(&self) -> EvalMetrics {
        let per_class: Vec<ClassMetrics> = LogClass::ALL
            .iter()
            .map(|&c| {
                let k = c.index();
                ClassMetrics {
                    class: c,
                    precision: self.precision(k),
                    recall: self.recall(k),
                    f1: self.f1(k),
                    support: self.support(k),
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / N as f64;
        EvalMetrics {
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            accuracy: self.accuracy(),
            per_class,
            matrix: *self,
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>12}", "true\\pred")?;
        for c in LogClass::ALL {
            write!(f, " {:>10}", c.label())?;
        }
        writeln!(f)?;
        for t in LogClass::ALL {
            write!(f, "{:>12}", t.label())?;
            for p in 0..N {
                write!(f, " {:>10}", self.counts[t.index()][p])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: LogClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub matrix: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl fmt::Display for EvalMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.matrix)?;
        writeln!(f, "{:>12} {:>10} {:>10} {:>10} {:>10}", "class", "precision", "recall", "f1", "support")?;
        for m in &self.per_class {
            writeln!(
                f,
                "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
                m.class.label(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            )?;
        }
        writeln!(
            f,
            "{:>12} {:>10.4} {:>10.4} {:>10.4} {:>10}",
            "macro",
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.matrix.total()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use LogClass::*;

    #[test]
    fn perfect_classifier() {
        let mut m = ConfusionMatrix::default();
        for c in LogClass::ALL {
            for _ in 0..5 {
                m.add(c, c);
            }
        }
        let e = m.metrics();
        assert_eq!((e.macro_precision, e.macro_recall, e.macro_f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn all_class_zero_on_balanced_set() {
        let mut m = ConfusionMatrix::default();
        for c in LogClass::ALL {
            for _ in 0..10 {
                m.add(c, Information);
            }
        }
        let e = m.metrics();
        assert!((e.macro_recall - 1.0 / 3.0).abs() < 1e-15);
        // undefined precision counts as zero
        assert_eq!(e.per_class[1].precision, 0.0);
        assert_eq!(e.per_class[2].f1, 0.0);
        assert!((e.per_class[0].precision - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f1_is_harmonic_per_class() {
        let mut m = ConfusionMatrix::default();
        m.counts = [[8, 2, 0], [1, 3, 1], [0, 0, 5]];
        let e = m.metrics();
        let p = 3.0 / 5.0;
        let r = 3.0 / 5.0;
        assert!((e.per_class[1].f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
        let mean_f1 = e.per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
        assert_eq!(e.macro_f1, mean_f1);
        assert_eq!(m.total(), 20);
    }
}
