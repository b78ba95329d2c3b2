//! Defensive efficiency, overhead, open-world confusion counts and ROC.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{Dataset, DefendedTrace, Label};

/// Per-split cost: 20-byte IPv4 header + 20-byte TCP header.
pub const DEFAULT_HEADER_BYTES: u64 = 40;

pub const PLOT_HEADER: &str = "# wfbench-plot v1";

/// Default P_t grid: 0, 0.1, ..., 1.0.
pub fn default_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub p_t: f64,
    pub accuracy: f64,
}

/// Attack accuracy over a P_t sweep for one (defense, attack) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub defense: String,
    pub attack: String,
    /// Test-set size; a zero accuracy is clamped to `1 / test_size`.
    pub test_size: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::BadConfig("sweep has no points".into()));
        }
        for w in self.points.windows(2) {
            if !(w[0].p_t < w[1].p_t) {
                return Err(Error::BadConfig("sweep P_t values must strictly increase".into()));
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.p_t) || !(0.0..=1.0).contains(&p.accuracy) {
                return Err(Error::BadConfig(format!("sweep point out of range: {p:?}")));
            }
        }
        Ok(())
    }
}

/// `N / Σ accuracy` over the N evaluated sweep points.
pub fn defensive_efficiency(sweep: &SweepResult) -> Result<f64> {
    sweep.validate()?;
    let mut sum = 0.0;
    for p in &sweep.points {
        if p.accuracy == 0.0 {
            if sweep.test_size == 0 {
                return Err(Error::ZeroAccuracy);
            }
            let floor = 1.0 / sweep.test_size as f64;
            log::warn!(
                "zero accuracy at P_t = {} for {}/{}; clamping to {floor}",
                p.p_t,
                sweep.defense,
                sweep.attack
            );
            sum += floor;
        } else {
            sum += p.accuracy;
        }
    }
    Ok(sweep.points.len() as f64 / sum)
}

/// Relative DE loss when the attack is strengthened: `(de_before - de_after) / de_before`.
pub fn de_drop(de_before: f64, de_after: f64) -> f64 {
    (de_before - de_after) / de_before
}

/// Extra bytes over original bytes. Inserted packets count their magnitude;
/// each split costs `header_bytes`.
pub fn overhead(original: &Dataset, defended: &[DefendedTrace], header_bytes: u64) -> Result<f64> {
    if original.len() != defended.len() {
        return Err(Error::MisalignedDatasets(format!(
            "{} original traces, {} defended",
            original.len(),
            defended.len()
        )));
    }
    let (extra, base) = overhead_bytes(original, defended, header_bytes);
    if base == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(extra as f64 / base as f64)
}

/// `(extra, original)` byte totals, for aggregating across datasets.
pub fn overhead_bytes(original: &Dataset, defended: &[DefendedTrace], header_bytes: u64) -> (u64, u64) {
    let extra: u64 = defended
        .iter()
        .map(|d| d.inserted_bytes() + header_bytes * d.split_count as u64)
        .sum();
    (extra, original.total_bytes())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpenCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl OpenCounts {
    /// NaN when there are no monitored instances.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// NaN when there are no unmonitored instances.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// An instance is called monitored iff its score is at least `threshold`.
pub fn confusion_open(scores: &[f64], labels: &[Label], threshold: f64) -> OpenCounts {
    assert_eq!(scores.len(), labels.len(), "one score per label");
    let mut c = OpenCounts::default();
    for (&s, l) in scores.iter().zip(labels) {
        match (s >= threshold, l.is_monitored()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Trapezoid area, with (0,0) and (1,1) anchoring the ends.
    pub auc: f64,
}

/// One ROC point per threshold; thresholds must be non-increasing.
pub fn roc(scores: &[f64], labels: &[Label], thresholds: &[f64]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::MisalignedDatasets(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::BadConfig("ROC scores must be finite".into()));
    }
    if thresholds.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::BadConfig("ROC thresholds must be sorted descending".into()));
    }
    let mut pos: Vec<f64> = Vec::new();
    let mut neg: Vec<f64> = Vec::new();
    for (&s, l) in scores.iter().zip(labels) {
        if l.is_monitored() { pos.push(s) } else { neg.push(s) }
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let at_least = |v: &[f64], t: f64| v.len() - v.partition_point(|&s| s < t);

    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let c = OpenCounts {
            tp: at_least(&pos, t),
            fn_: pos.len() - at_least(&pos, t),
            fp: at_least(&neg, t),
            tn: neg.len() - at_least(&neg, t),
        };
        let (fpr, tpr) = (c.fpr(), c.tpr());
        if fpr.is_nan() || tpr.is_nan() {
            continue;
        }
        points.push(RocPoint { threshold: t, fpr, tpr });
    }
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

/// ROC at every distinct score plus a threshold above all scores.
pub fn roc_exact(scores: &[f64], labels: &[Label]) -> Result<RocCurve> {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds.insert(0, f64::INFINITY);
    roc(scores, labels, &thresholds)
}

/// Evenly spaced thresholds from 1 down to 0.
pub fn threshold_grid(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| 1.0 - i as f64 / (n - 1) as f64).collect()
}

fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    if points.is_empty() {
        return f64::NAN;
    }
    let mut xy: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    xy.push((0.0, 0.0));
    xy.extend(points.iter().map(|p| (p.fpr, p.tpr)));
    xy.push((1.0, 1.0));
    xy.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub x: f64,
    pub y: f64,
    pub tag: String,
}

/// `x,y,tag` rows under a versioned header, sorted for stable output.
pub fn write_plot_csv<W: Write>(rows: &[PlotRow], mut w: W) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| a.tag.cmp(&b.tag).then(a.x.total_cmp(&b.x)).then(a.y.total_cmp(&b.y)));
    writeln!(w, "{PLOT_HEADER}")?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "tag"])?;
    for r in rows {
        out.write_record([format!("{}", r.x), format!("{:.6}", r.y), r.tag])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::trace::{Packet, Provenance, Trace, World};

    fn sweep(acc: &[f64]) -> SweepResult {
        let n = acc.len();
        SweepResult {
            defense: "d".into(),
            attack: "a".into(),
            test_size: 100,
            points: acc
                .iter()
                .enumerate()
                .map(|(i, &a)| SweepPoint { p_t: i as f64 / n as f64, accuracy: a })
                .collect(),
        }
    }

    #[test]
    fn de_examples() {
        assert_eq!(defensive_efficiency(&sweep(&[1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(defensive_efficiency(&sweep(&[0.5, 0.25, 0.25])).unwrap(), 3.0);
        // A mean accuracy of 0.18 over the sweep gives DE 5.56.
        let de = defensive_efficiency(&sweep(&[0.9, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.078])).unwrap();
        assert!((de - 5.56).abs() < 0.01, "{de}");
    }

    #[test]
    fn de_scales_inversely() {
        let a = defensive_efficiency(&sweep(&[0.9, 0.6, 0.3])).unwrap();
        let b = defensive_efficiency(&sweep(&[0.45, 0.3, 0.15])).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn de_zero_accuracy_clamps_or_errors() {
        let de = defensive_efficiency(&sweep(&[0.0, 0.5])).unwrap();
        assert!((de - 2.0 / 0.51).abs() < 1e-12);
        let mut s = sweep(&[0.0]);
        s.test_size = 0;
        assert!(matches!(defensive_efficiency(&s), Err(Error::ZeroAccuracy)));
        let mut s = sweep(&[0.5, 0.5]);
        s.points[1].p_t = 0.0;
        assert!(defensive_efficiency(&s).is_err());
    }

    fn ds(traces: &[&[i32]]) -> Dataset {
        let ts = traces
            .iter()
            .map(|s| Trace::from_sizes(s).unwrap().with_label(Some(Label::Monitored(0))))
            .collect();
        Dataset::new(ts, 1, World::Closed).unwrap()
    }

    fn tagged(v: &[(i32, Provenance)], splits: usize) -> DefendedTrace {
        DefendedTrace {
            packets: v.iter().map(|&(s, p)| (Packet::new(s).unwrap(), p)).collect(),
            split_count: splits,
            label: None,
        }
    }

    #[test]
    fn overhead_examples() {
        use Provenance::*;
        let orig = ds(&[&[100, -200]]);
        let none = tagged(&[(100, Original), (-200, Original)], 0);
        assert_eq!(overhead(&orig, &[none], 40).unwrap(), 0.0);

        let ins = tagged(&[(100, Original), (-50, Inserted), (-200, Original)], 0);
        assert!((overhead(&orig, &[ins], 40).unwrap() - 50.0 / 300.0).abs() < 1e-12);

        let split = tagged(&[(60, SplitChild), (40, SplitChild), (-200, Original)], 1);
        let o = overhead(&orig, &[split], 40).unwrap();
        assert!((o - 40.0 / 300.0).abs() < 1e-12);

        assert!(matches!(overhead(&orig, &[], 40), Err(Error::MisalignedDatasets(_))));
    }

    #[test]
    fn overhead_additive_and_order_invariant() {
        use Provenance::*;
        let a = tagged(&[(100, Original), (-70, Inserted)], 0);
        let b = tagged(&[(300, SplitChild), (200, SplitChild)], 1);
        let both = ds(&[&[100], &[500]]);
        let o1 = overhead(&both, &[a.clone(), b.clone()], 40).unwrap();
        let swapped = ds(&[&[500], &[100]]);
        let o2 = overhead(&swapped, &[b, a], 40).unwrap();
        assert_eq!(o1, o2);
        assert!((o1 - 110.0 / 600.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_examples() {
        let scores = [0.9, 0.4, 0.6];
        let labels = [Label::Monitored(0), Label::Monitored(1), Label::Unmonitored];
        let c = confusion_open(&scores, &labels, 0.5);
        assert_eq!(c, OpenCounts { tp: 1, fn_: 1, fp: 1, tn: 0 });
        assert_eq!(c.tpr(), 0.5);
        assert_eq!(c.fpr(), 1.0);

        let all = confusion_open(&scores, &labels, 0.0);
        assert_eq!((all.tpr(), all.fpr()), (1.0, 1.0));
        let none = confusion_open(&scores, &labels, 0.95);
        assert_eq!((none.tpr(), none.fpr()), (0.0, 0.0));

        let only_mon = confusion_open(&[0.3], &[Label::Monitored(0)], 0.5);
        assert!(only_mon.fpr().is_nan());
    }

    #[test]
    fn roc_perfect_and_degenerate() {
        let labels = [Label::Monitored(0), Label::Monitored(0), Label::Unmonitored, Label::Unmonitored];
        let r = roc_exact(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap();
        assert!(r.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(r.auc, 1.0);

        let r = roc_exact(&[0.5; 4], &labels).unwrap();
        assert_eq!(r.points.len(), 2);
        assert_eq!((r.points[0].fpr, r.points[0].tpr), (0.0, 0.0));
        assert_eq!((r.points[1].fpr, r.points[1].tpr), (1.0, 1.0));
        assert_eq!(r.auc, 0.5);
    }

    #[test]
    fn roc_grid_monotone_with_endpoints() {
        let mut rng = SeededRng::new(21);
        let scores: Vec<f64> = (0..500).map(|_| rng.randr() * 0.98 + 0.01).collect();
        let labels: Vec<Label> = (0..500)
            .map(|i| if i % 3 == 0 { Label::Unmonitored } else { Label::Monitored(0) })
            .collect();
        let r = roc(&scores, &labels, &threshold_grid(101)).unwrap();
        assert_eq!(r.points.len(), 101);
        assert_eq!((r.points[0].fpr, r.points[0].tpr), (0.0, 0.0));
        let last = r.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in r.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
        assert!((0.0..=1.0).contains(&r.auc));
        assert!(roc(&scores, &labels, &[0.1, 0.5]).is_err());
        assert!(roc(&[f64::NAN], &[Label::Unmonitored], &[0.5]).is_err());
    }

    #[test]
    fn plot_rows_sorted_with_header() {
        let rows = vec![
            PlotRow { x: 0.2, y: 0.5, tag: "b".into() },
            PlotRow { x: 0.1, y: 0.25, tag: "b".into() },
            PlotRow { x: 0.0, y: 1.0, tag: "a".into() },
        ];
        let mut buf = Vec::new();
        write_plot_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# wfbench-plot v1\nx,y,tag\n0,1.000000,a\n0.1,0.250000,b\n0.2,0.500000,b\n"
        );
    }
}
