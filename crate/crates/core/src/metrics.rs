//! Confusion matrices and intersection-over-union.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `counts[g][p]`: samples with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    ignore_class: Option<u32>,
    counts: Vec<u64>,
}

/// Per-class IoU (`None` for classes with no support or the ignore class)
/// and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
    /// Number of classes averaged into `mean`; zero means the matrix was empty.
    pub evaluated: usize,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize, ignore_class: Option<u32>) -> Self {
        Self {
            num_classes,
            ignore_class,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ignore_class(&self) -> Option<u32> {
        self.ignore_class
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one count per sample whose ground truth is not the ignore class.
    /// Validates every id before counting anything.
    pub fn accumulate(&mut self, pred: &[u32], gt: &[u32]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::shape(
                "accumulate",
                format!("{} predictions for {} ground-truth labels", pred.len(), gt.len()),
            ));
        }
        let c = self.num_classes;
        if let Some(&id) = pred.iter().chain(gt).find(|&&id| id as usize >= c) {
            return Err(Error::ClassOutOfRange { id, num_classes: c });
        }
        for (&p, &g) in pred.iter().zip(gt) {
            if Some(g) != self.ignore_class {
                self.counts[g as usize * c + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Elementwise sum with another matrix of the same geometry.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes || other.ignore_class != self.ignore_class {
            return Err(Error::shape(
                "merge",
                format!("{} vs {} classes", self.num_classes, other.num_classes),
            ));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// IoU per class and the mean over classes with any true positive,
    /// false positive or false negative, skipping the ignore class.
    pub fn miou(&self) -> IouReport {
        let c = self.num_classes;
        let mut per_class = vec![None; c];
        let (mut sum, mut evaluated) = (0.0, 0);
        for k in 0..c {
            if Some(k as u32) == self.ignore_class {
                continue;
            }
            let tp = self.get(k, k);
            let row: u64 = (0..c).map(|p| self.get(k, p)).sum();
            let col: u64 = (0..c).map(|g| self.get(g, k)).sum();
            let denom = row + col - tp;
            if denom == 0 {
                continue;
            }
            let iou = tp as f64 / denom as f64;
            per_class[k] = Some(iou);
            sum += iou;
            evaluated += 1;
        }
        IouReport {
            per_class,
            mean: if evaluated == 0 { 0.0 } else { sum / evaluated as f64 },
            evaluated,
        }
    }
}

impl IouReport {
    /// One `name<TAB>iou` line per class (`-` when not evaluated), then the mean.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        for (k, iou) in self.per_class.iter().enumerate() {
            let name = names.get(k).map_or_else(|| format!("class{k}"), Clone::clone);
            match iou {
                Some(v) => writeln!(s, "{name}\t{v:.6}").unwrap(),
                None => writeln!(s, "{name}\t-").unwrap(),
            }
        }
        writeln!(s, "mIoU\t{:.6}\t({} classes)", self.mean, self.evaluated).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fixture() {
        let mut cm = ConfusionMatrix::new(2, None);
        cm.accumulate(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        let r = cm.miou();
        assert_eq!(r.per_class, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((r.mean - 0.58333).abs() < 1e-5);
    }

    #[test]
    fn perfect_and_absent_classes() {
        let mut cm = ConfusionMatrix::new(5, Some(0));
        let ids = [1, 2, 3, 1, 2, 3, 3, 1, 2, 2];
        cm.accumulate(&ids, &ids).unwrap();
        assert_eq!((0..5).map(|k| cm.get(k, k)).sum::<u64>(), 10);
        let r = cm.miou();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.evaluated, 3);
        assert_eq!(r.per_class[4], None);
    }

    #[test]
    fn ignore_only_leaves_matrix_unchanged() {
        let mut cm = ConfusionMatrix::new(3, Some(0));
        cm.accumulate(&[1, 2, 0], &[0, 0, 0]).unwrap();
        assert_eq!(cm.total(), 0);
        let r = cm.miou();
        assert_eq!((r.mean, r.evaluated), (0.0, 0));
    }

    #[test]
    fn order_independent_and_mergeable() {
        let (a_p, a_g) = ([0, 1, 2, 2], [0, 2, 2, 1]);
        let (b_p, b_g) = ([1, 1, 0], [1, 0, 0]);
        let mut ab = ConfusionMatrix::new(3, None);
        ab.accumulate(&a_p, &a_g).unwrap();
        ab.accumulate(&b_p, &b_g).unwrap();
        let mut ba = ConfusionMatrix::new(3, None);
        ba.accumulate(&b_p, &b_g).unwrap();
        ba.accumulate(&a_p, &a_g).unwrap();
        assert_eq!(ab, ba);
        let mut b = ConfusionMatrix::new(3, None);
        b.accumulate(&b_p, &b_g).unwrap();
        let mut merged = ConfusionMatrix::new(3, None);
        merged.accumulate(&a_p, &a_g).unwrap();
        merged.merge(&b).unwrap();
        assert_eq!(merged, ab);
    }

    #[test]
    fn rejects_bad_input() {
        let mut cm = ConfusionMatrix::new(2, None);
        assert!(matches!(
            cm.accumulate(&[0, 2], &[0, 0]),
            Err(Error::ClassOutOfRange { id: 2, .. })
        ));
        assert!(cm.accumulate(&[0], &[0, 0]).is_err());
        assert_eq!(cm.total(), 0);
    }

    #[test]
    fn text_report() {
        let mut cm = ConfusionMatrix::new(3, Some(0));
        cm.accumulate(&[1, 1], &[1, 1]).unwrap();
        let names = ["unlabeled".to_string(), "car".to_string()];
        let t = cm.miou().to_text(&names);
        assert_eq!(
            t,
            "unlabeled\t-\ncar\t1.000000\nclass2\t-\nmIoU\t1.000000\t(1 classes)\n"
        );
    }
}
