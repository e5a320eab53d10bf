use crate::types::{ClassTaxonomy, LabelMap, IGNORE_ID};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Exact per-class pixel counts plus the ignored count.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelStats {
    pub counts: Vec<u64>,
    pub ignored: u64,
}

impl PixelStats {
    pub fn new(num_classes: usize) -> Self {
        Self { counts: vec![0; num_classes], ignored: 0 }
    }

    pub fn add(&mut self, labels: &LabelMap) -> Result<()> {
        for &l in labels.labels() {
            if l == IGNORE_ID {
                self.ignored += 1;
            } else {
                *self.counts.get_mut(l as usize).ok_or(Error::UnmappedLabel(l))? += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &PixelStats) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.ignored += other.ignored;
    }

    pub fn labeled(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.labeled() + self.ignored
    }

    /// Percentage of labeled pixels per class; `None` without labeled pixels.
    pub fn shares(&self) -> Option<Vec<f64>> {
        let n = self.labeled();
        (n > 0).then(|| self.counts.iter().map(|&c| 100.0 * c as f64 / n as f64).collect())
    }

    /// Table with one row per class (count, millions, share) and an
    /// unlabeled row whose pixels are excluded from the shares.
    pub fn render(&self, taxonomy: Option<&ClassTaxonomy>) -> String {
        let name = |k: usize| {
            taxonomy.and_then(|t| t.label(k as u8)).map(str::to_string).unwrap_or_else(|| format!("class_{k}"))
        };
        let width = (0..self.counts.len()).map(|k| name(k).len()).chain([10]).max().unwrap_or(10);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>12}  {:>9}  {:>7}", "class", "pixels", "millions", "%");
        let shares = self.shares();
        for (k, &c) in self.counts.iter().enumerate() {
            let share = shares.as_ref().map_or("-".to_string(), |v| format!("{:.2}", v[k]));
            let _ = writeln!(s, "{:<width$}  {:>12}  {:>9.2}  {:>7}", name(k), c, c as f64 / 1e6, share);
        }
        let _ = writeln!(s, "{:<width$}  {:>12}  {:>9.2}  {:>7}", "Unlabeled*", self.ignored, self.ignored as f64 / 1e6, "-");
        if shares.is_none() {
            s.push_str("no labeled pixels\n");
        }
        s.push_str("* ignored in training and excluded from the percentages\n");
        s
    }
}

/// Pixel statistics over label maps already expressed in a `num_classes`
/// taxonomy.
pub fn compute_pixel_stats<'a>(labels: impl IntoIterator<Item = &'a LabelMap>, num_classes: usize) -> Result<PixelStats> {
    let mut stats = PixelStats::new(num_classes);
    let mut any = false;
    for lm in labels {
        stats.add(lm)?;
        any = true;
    }
    if !any {
        return Err(Error::EmptyDataset);
    }
    Ok(stats)
}
