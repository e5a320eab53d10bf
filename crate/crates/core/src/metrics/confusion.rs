use crate::types::{LabelMap, IGNORE_ID};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// `K × K` pixel counts; entry `(i, j)` counts ground truth `i` predicted `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    ignored: u64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k], ignored: 0 }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn ignored_count(&self) -> u64 {
        self.ignored
    }

    /// Pixels with a non-ignore ground truth.
    pub fn counted(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, prediction: &LabelMap, truth: &LabelMap) -> Result<()> {
        if prediction.spatial() != truth.spatial() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs ground truth {:?}",
                prediction.spatial(),
                truth.spatial()
            )));
        }
        let k = self.k;
        for (&p, &t) in prediction.labels().iter().zip(truth.labels()) {
            if t == IGNORE_ID {
                self.ignored += 1;
                continue;
            }
            if t as usize >= k || p as usize >= k {
                return Err(Error::invalid(format!("class id {} out of range for {k} classes", t.max(p))));
            }
            self.counts[t as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::ShapeMismatch(format!("merging {}-class and {}-class matrices", self.k, other.k)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
        Ok(())
    }

    /// One-vs-rest `(TP, FP, FN, TN)` for class `c`.
    pub fn one_vs_rest(&self, c: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(c, c);
        let row: u64 = (0..self.k).map(|j| self.get(c, j)).sum();
        let col: u64 = (0..self.k).map(|i| self.get(i, c)).sum();
        let (fn_, fp) = (row - tp, col - tp);
        (tp, fp, fn_, self.counted() - tp - fp - fn_)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(v: &[u8]) -> LabelMap {
        LabelMap::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn hand_example_counts() {
        let mut m = ConfusionMatrix::new(2);
        m.accumulate(&lm(&[0, 1, 1, 1]), &lm(&[0, 0, 1, 1])).unwrap();
        assert_eq!((m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1)), (1, 1, 0, 2));
        assert_eq!(m.one_vs_rest(0), (1, 0, 1, 2));
    }

    #[test]
    fn ignore_only_bumps_ignored() {
        let mut m = ConfusionMatrix::new(3);
        m.accumulate(&lm(&[0, 1, 2, 0]), &lm(&[IGNORE_ID; 4])).unwrap();
        assert_eq!(m.counted(), 0);
        assert_eq!(m.ignored_count(), 4);
    }

    #[test]
    fn order_independent_and_mergeable() {
        let (a, b) = ((lm(&[0, 2, 1]), lm(&[0, 1, 1])), (lm(&[2, 2, 0]), lm(&[2, IGNORE_ID, 1])));
        let mut ab = ConfusionMatrix::new(3);
        ab.accumulate(&a.0, &a.1).unwrap();
        ab.accumulate(&b.0, &b.1).unwrap();
        let mut ba = ConfusionMatrix::new(3);
        ba.accumulate(&b.0, &b.1).unwrap();
        ba.accumulate(&a.0, &a.1).unwrap();
        assert_eq!(ab, ba);
        let mut shard = ConfusionMatrix::new(3);
        shard.accumulate(&b.0, &b.1).unwrap();
        let mut merged = ConfusionMatrix::new(3);
        merged.accumulate(&a.0, &a.1).unwrap();
        merged.merge(&shard).unwrap();
        assert_eq!(merged, ab);
    }

    #[test]
    fn shape_and_range_errors() {
        let mut m = ConfusionMatrix::new(2);
        assert!(m.accumulate(&lm(&[0, 1]), &lm(&[0])).is_err());
        assert!(m.accumulate(&lm(&[2]), &lm(&[0])).is_err());
    }
}
