use super::ConfusionMatrix;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write;

pub const METRIC_NAMES: [&str; 6] = ["IoU", "Prec", "Rec", "F1", "Spec", "Acc"];
pub const TABLE_HEADER: &str = "dataset,model,IoU,Prec,Rec,F1,Spec,Acc";
const MISSING: &str = "—";

/// One-vs-rest metrics of a class, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
    pub accuracy: f64,
}

impl ClassMetrics {
    pub fn values(&self) -> [f64; 6] {
        [self.iou, self.precision, self.recall, self.f1, self.specificity, self.accuracy]
    }

    fn from_values(v: [f64; 6]) -> Self {
        Self { iou: v[0], precision: v[1], recall: v[2], f1: v[3], specificity: v[4], accuracy: v[5] }
    }
}

pub type MeanMetrics = ClassMetrics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` for classes with neither ground truth nor predictions.
    pub per_class: Vec<Option<ClassMetrics>>,
    pub mean: MeanMetrics,
    pub excluded: Vec<usize>,
    pub samples: usize,
    pub ignored: u64,
}

fn ratio(num: u64, den: u64, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}

/// Per-class metrics and their macro mean over included classes.
///
/// A class is excluded when it has no ground truth and no predictions.
/// Otherwise an empty denominator yields: precision 0 (ground truth but
/// nothing predicted), recall 0 (predicted but no ground truth), F1 0 when
/// precision + recall is 0, and specificity 1 when every counted pixel is
/// the class itself.
pub fn per_class_metrics(m: &ConfusionMatrix, samples: usize) -> Result<MetricsReport> {
    let n = m.counted();
    if n == 0 {
        return Err(Error::invalid("confusion matrix has no counted pixels"));
    }
    let mut per_class = Vec::with_capacity(m.num_classes());
    let mut excluded = Vec::new();
    for c in 0..m.num_classes() {
        let (tp, fp, fn_, tn) = m.one_vs_rest(c);
        if tp + fp + fn_ == 0 {
            excluded.push(c);
            per_class.push(None);
            continue;
        }
        let precision = ratio(tp, tp + fp, 0.0);
        let recall = ratio(tp, tp + fn_, 0.0);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push(Some(ClassMetrics {
            iou: ratio(tp, tp + fp + fn_, 0.0),
            precision,
            recall,
            f1,
            specificity: ratio(tn, tn + fp, 1.0),
            accuracy: ratio(tp + tn, n, 0.0),
        }));
    }
    let included: Vec<&ClassMetrics> = per_class.iter().flatten().collect();
    let mut mean = [0.0; 6];
    for cm in &included {
        for (acc, v) in mean.iter_mut().zip(cm.values()) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= included.len() as f64;
    }
    Ok(MetricsReport { per_class, mean: ClassMetrics::from_values(mean), excluded, samples, ignored: m.ignored_count() })
}

impl MetricsReport {
    pub fn mean_iou(&self) -> f64 {
        self.mean.iou
    }

    /// Per-class table with percentages, mean row and excluded classes.
    pub fn render_text(&self, class_names: &[String]) -> String {
        let name = |c: usize| class_names.get(c).cloned().unwrap_or_else(|| format!("class_{c}"));
        let width = (0..self.per_class.len()).map(|c| name(c).len()).chain([5]).max().unwrap_or(5);
        let mut s = String::new();
        let _ = write!(s, "{:<width$}", "class");
        for h in METRIC_NAMES {
            let _ = write!(s, "  {h:>6}");
        }
        s.push('\n');
        let row = |s: &mut String, label: &str, v: Option<[f64; 6]>| {
            let _ = write!(s, "{label:<width$}");
            for i in 0..6 {
                let cell = v.map_or(MISSING.to_string(), |v| format!("{:.2}", 100.0 * v[i]));
                let _ = write!(s, "  {cell:>6}");
            }
            s.push('\n');
        };
        for (c, m) in self.per_class.iter().enumerate() {
            row(&mut s, &name(c), m.map(|m| m.values()));
        }
        row(&mut s, "mean", Some(self.mean.values()));
        let excluded: Vec<String> = self.excluded.iter().map(|&c| name(c)).collect();
        let _ = writeln!(s, "excluded: {}", if excluded.is_empty() { "none".into() } else { excluded.join(", ") });
        let _ = writeln!(s, "samples: {}, ignored pixels: {}", self.samples, self.ignored);
        s.push_str(
            "Acc is one-vs-rest accuracy averaged over classes; classes with neither ground truth nor \
             predictions are excluded from the mean; Prec is 0 for a class with ground truth but no predictions.\n",
        );
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            _ => Err(Error::invalid(format!("unknown report format {s:?}"))),
        }
    }
}

/// One run's mean metrics; `None` renders as a missing cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub model: String,
    pub metrics: [Option<f64>; 6],
}

fn cell(v: Option<f64>) -> String {
    v.map_or(MISSING.to_string(), |v| format!("{:.2}", 100.0 * v))
}

/// Mean-metric table, one row per run, sorted by (dataset, model) and
/// grouped under a dataset header in text form.
pub fn render_report_table(rows: &[ReportRow], format: ReportFormat) -> String {
    let mut rows: Vec<&ReportRow> = rows.iter().collect();
    rows.sort_by(|a, b| (&a.dataset, &a.model).cmp(&(&b.dataset, &b.model)));
    let mut s = String::new();
    match format {
        ReportFormat::Csv => {
            s.push_str(TABLE_HEADER);
            s.push('\n');
            for r in rows {
                let cells: Vec<String> = r.metrics.iter().map(|&v| cell(v)).collect();
                let _ = writeln!(s, "{},{},{}", csv_field(&r.dataset), csv_field(&r.model), cells.join(","));
            }
        }
        ReportFormat::Text => {
            let width = rows.iter().map(|r| r.model.chars().count()).chain([5]).max().unwrap_or(5);
            let mut current: Option<&str> = None;
            for r in rows {
                if current != Some(r.dataset.as_str()) {
                    if current.is_some() {
                        s.push('\n');
                    }
                    let _ = writeln!(s, "{}", r.dataset);
                    let _ = write!(s, "  {:<width$}", "model");
                    for h in METRIC_NAMES {
                        let _ = write!(s, "  {h:>6}");
                    }
                    s.push('\n');
                    current = Some(r.dataset.as_str());
                }
                let pad = width - r.model.chars().count();
                let _ = write!(s, "  {}{}", r.model, " ".repeat(pad));
                for &v in &r.metrics {
                    let _ = write!(s, "  {:>6}", cell(v));
                }
                s.push('\n');
            }
        }
    }
    s
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LabelMap, IGNORE_ID};
    use proptest::prelude::*;

    fn matrix(k: usize, truth: &[u8], pred: &[u8]) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(k);
        m.accumulate(&LabelMap::new(1, pred.len(), pred.to_vec()).unwrap(), &LabelMap::new(1, truth.len(), truth.to_vec()).unwrap())
            .unwrap();
        m
    }

    #[test]
    fn hand_worked_two_class_case() {
        let r = per_class_metrics(&matrix(2, &[0, 0, 1, 1], &[0, 1, 1, 1]), 1).unwrap();
        let c0 = r.per_class[0].unwrap();
        let c1 = r.per_class[1].unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-4;
        assert!(close(c0.iou, 0.5) && close(c0.precision, 1.0) && close(c0.recall, 0.5));
        assert!(close(c0.f1, 0.6667) && close(c0.specificity, 1.0) && close(c0.accuracy, 0.75));
        assert!(close(c1.iou, 0.6667) && close(c1.precision, 0.6667) && close(c1.recall, 1.0));
        assert!(close(c1.f1, 0.8) && close(c1.specificity, 0.5) && close(c1.accuracy, 0.75));
        assert!((r.mean_iou() - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_and_exclusion() {
        let r = per_class_metrics(&matrix(3, &[0, 1, 1, 0], &[0, 1, 1, 0]), 1).unwrap();
        assert_eq!(r.excluded, vec![2]);
        assert!(r.mean.values().iter().all(|&v| v == 1.0));
        let with_third = per_class_metrics(&matrix(3, &[0, 0, 1, 1], &[0, 1, 1, 1]), 1).unwrap();
        let two = per_class_metrics(&matrix(2, &[0, 0, 1, 1], &[0, 1, 1, 1]), 1).unwrap();
        assert_eq!(with_third.mean, two.mean);
        assert!(per_class_metrics(&ConfusionMatrix::new(2), 0).is_err());
    }

    #[test]
    fn single_class_mean_is_its_row() {
        let r = per_class_metrics(&matrix(2, &[1, 1, 1], &[1, 1, 1]), 1).unwrap();
        assert_eq!(r.mean, r.per_class[1].unwrap());
    }

    #[test]
    fn rendering() {
        let rows = vec![
            ReportRow { dataset: "b".into(), model: "UNet-CBAM".into(), metrics: [Some(0.6531), None, Some(1.0), None, None, None] },
            ReportRow { dataset: "a".into(), model: "U-Net".into(), metrics: [Some(0.5); 6] },
            ReportRow { dataset: "b".into(), model: "HRNet".into(), metrics: [Some(0.1); 6] },
        ];
        let csv = render_report_table(&rows, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert!(lines[1].starts_with("a,U-Net,50.00"));
        assert!(lines[2].starts_with("b,HRNet,"));
        assert_eq!(lines[3], "b,UNet-CBAM,65.31,—,100.00,—,—,—");
        let text = render_report_table(&rows, ReportFormat::Text);
        assert!(text.contains("65.31") && text.contains("—"));
        for l in &lines[1..] {
            for v in l.split(',').skip(2) {
                assert!(text.contains(v));
            }
        }
    }

    /// Pixel-scan reference: counts TP/FP/FN/TN per class directly.
    fn oracle(k: usize, truth: &[u8], pred: &[u8]) -> Vec<Option<[f64; 6]>> {
        let n = truth.iter().filter(|&&t| t != IGNORE_ID).count() as f64;
        (0..k as u8)
            .map(|c| {
                let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
                for (&t, &p) in truth.iter().zip(pred) {
                    if t == IGNORE_ID {
                        continue;
                    }
                    match (t == c, p == c) {
                        (true, true) => tp += 1.0,
                        (false, true) => fp += 1.0,
                        (true, false) => fn_ += 1.0,
                        (false, false) => tn += 1.0,
                    }
                }
                if tp + fp + fn_ == 0.0 {
                    return None;
                }
                let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
                let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
                let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
                let s = if tn + fp > 0.0 { tn / (tn + fp) } else { 1.0 };
                Some([tp / (tp + fp + fn_), p, r, f, s, (tp + tn) / n])
            })
            .collect()
    }

    fn pair() -> impl Strategy<Value = (usize, Vec<u8>, Vec<u8>)> {
        (1usize..=5, 1usize..=64).prop_flat_map(|(k, n)| {
            let truth = prop::collection::vec(prop_oneof![3 => 0..k as u8, 1 => Just(IGNORE_ID)], n)
                .prop_filter("needs counted pixels", |v| v.iter().any(|&t| t != IGNORE_ID));
            (Just(k), truth, prop::collection::vec(0..k as u8, n))
        })
    }

    proptest! {
        #[test]
        fn matches_pixel_scan_oracle((k, truth, pred) in pair()) {
            let r = per_class_metrics(&matrix(k, &truth, &pred), 1).unwrap();
            let o = oracle(k, &truth, &pred);
            for (a, b) in r.per_class.iter().zip(&o) {
                match (a, b) {
                    (None, None) => {}
                    (Some(a), Some(b)) => for (x, y) in a.values().iter().zip(b) {
                        prop_assert!((x - y).abs() <= 1e-12);
                    },
                    _ => prop_assert!(false, "exclusion disagrees"),
                }
            }
        }

        #[test]
        fn set_inequalities_and_bounds((k, truth, pred) in pair()) {
            let r = per_class_metrics(&matrix(k, &truth, &pred), 1).unwrap();
            for m in r.per_class.iter().flatten() {
                prop_assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(m.iou <= m.precision.min(m.recall) + 1e-12);
                prop_assert!(m.iou <= m.f1 + 1e-12);
            }
        }

        #[test]
        fn class_permutation_permutes_rows((k, truth, pred) in pair(), rot in 0usize..5) {
            let perm = |l: u8| if l == IGNORE_ID { l } else { ((l as usize + rot) % k) as u8 };
            let a = per_class_metrics(&matrix(k, &truth, &pred), 1).unwrap();
            let t2: Vec<u8> = truth.iter().map(|&l| perm(l)).collect();
            let p2: Vec<u8> = pred.iter().map(|&l| perm(l)).collect();
            let b = per_class_metrics(&matrix(k, &t2, &p2), 1).unwrap();
            for c in 0..k {
                prop_assert_eq!(a.per_class[c], b.per_class[perm(c as u8) as usize]);
            }
            for (x, y) in a.mean.values().iter().zip(b.mean.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
