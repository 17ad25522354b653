//! Localization scores and batch summaries.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::video::MaskVolume;

/// Site-level comparison of a detection map with ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f_measure: f64,
    pub detected: bool,
    pub cpu_s_per_mpixel: f64,
}

impl Score {
    /// Attaches the detector verdict and its runtime over `pixels` sites.
    pub fn with_run(mut self, detected: bool, seconds: f64, pixels: usize) -> Self {
        self.detected = detected;
        self.cpu_s_per_mpixel = if pixels == 0 {
            0.0
        } else {
            seconds / (pixels as f64 / 1e6)
        };
        self
    }
}

/// `2TP / (2TP + FP + FN)`; 1 when both map and truth are empty.
pub fn f_measure(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

pub fn score(map: &MaskVolume, gt: &MaskVolume) -> Result<Score> {
    map.check_dims(gt)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&m, &g) in map.bits().iter().zip(gt.bits()) {
        match (m, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Score {
        tp,
        fp,
        tn,
        fn_,
        f_measure: f_measure(tp, fp, fn_),
        detected: false,
        cpu_s_per_mpixel: 0.0,
    })
}

/// One evaluated video.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    /// Whether the video actually contains a copy-move.
    pub forged: bool,
    pub detected: bool,
    /// Localization score; only meaningful for forged videos.
    pub f_measure: Option<f64>,
    pub cpu_s_per_mpixel: f64,
}

/// Per-video rows plus the totals row: detections on forged videos, false
/// alarms on pristine ones, mean F over forged videos and mean runtime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<ReportRow>,
    pub detections: usize,
    pub false_alarms: usize,
    pub mean_f: Option<f64>,
    pub mean_cpu_s_per_mpixel: f64,
}

pub fn batch_report(rows: Vec<ReportRow>) -> Summary {
    let detections = rows.iter().filter(|r| r.forged && r.detected).count();
    let false_alarms = rows.iter().filter(|r| !r.forged && r.detected).count();
    let fs: Vec<f64> = rows
        .iter()
        .filter(|r| r.forged)
        .filter_map(|r| r.f_measure)
        .collect();
    let mean_f = (!fs.is_empty()).then(|| fs.iter().sum::<f64>() / fs.len() as f64);
    let mean_cpu_s_per_mpixel = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.cpu_s_per_mpixel).sum::<f64>() / rows.len() as f64
    };
    Summary {
        rows,
        detections,
        false_alarms,
        mean_f,
        mean_cpu_s_per_mpixel,
    }
}

impl Summary {
    /// Table with one line per video and a final totals/means line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video,det,fa,F,s_per_mpixel\n");
        let f = |x: Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.2}",
                r.name,
                (r.forged && r.detected) as u8,
                (!r.forged && r.detected) as u8,
                f(r.f_measure.filter(|_| r.forged)),
                r.cpu_s_per_mpixel
            );
        }
        let _ = writeln!(
            out,
            "sum/mean,{},{},{},{:.2}",
            self.detections,
            self.false_alarms,
            f(self.mean_f),
            self.mean_cpu_s_per_mpixel
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::Dims;

    fn row(name: &str, forged: bool, detected: bool, f: Option<f64>, time: f64) -> ReportRow {
        ReportRow {
            name: name.into(),
            forged,
            detected,
            f_measure: f,
            cpu_s_per_mpixel: time,
        }
    }

    #[test]
    fn identical_maps_score_one() {
        let d = Dims::new(2, 5, 5);
        let mut m = MaskVolume::empty(d);
        m.set(1, 2, 3, true);
        m.set(0, 0, 0, true);
        let s = score(&m, &m).unwrap();
        assert_eq!(s.f_measure, 1.0);
        assert_eq!(s.tp + s.fp + s.tn + s.fn_, d.len());
    }

    #[test]
    fn formula_cases() {
        assert!((f_measure(100, 50, 50) - 200.0 / 300.0).abs() < 1e-15);
        assert_eq!(f_measure(0, 0, 10), 0.0);
        assert_eq!(f_measure(0, 0, 0), 1.0);
        let d = Dims::new(1, 4, 4);
        let mut gt = MaskVolume::empty(d);
        gt.set(0, 1, 1, true);
        assert_eq!(score(&MaskVolume::empty(d), &gt).unwrap().f_measure, 0.0);
    }

    #[test]
    fn mismatched_dims_are_rejected() {
        let a = MaskVolume::empty(Dims::new(1, 4, 4));
        let b = MaskVolume::empty(Dims::new(1, 4, 5));
        assert!(score(&a, &b).is_err());
    }

    #[test]
    fn single_row_summary_matches_row() {
        let s = batch_report(vec![row("v1", true, true, Some(0.8), 12.5)]);
        assert_eq!(s.detections, 1);
        assert_eq!(s.false_alarms, 0);
        assert_eq!(s.mean_f, Some(0.8));
        assert_eq!(s.mean_cpu_s_per_mpixel, 12.5);
    }

    #[test]
    fn mean_f_of_two() {
        let s = batch_report(vec![
            row("a", true, true, Some(0.8), 1.0),
            row("b", true, true, Some(0.6), 3.0),
        ]);
        assert!((s.mean_f.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(s.mean_cpu_s_per_mpixel, 2.0);
    }

    #[test]
    fn totals_row_counts_detections_and_false_alarms() {
        let mut rows: Vec<ReportRow> = (0..15)
            .map(|i| row(&format!("forged{i}"), true, true, Some(0.83), 16.4))
            .collect();
        rows.extend((0..15).map(|i| row(&format!("pristine{i}"), false, i < 2, None, 16.4)));
        let s = batch_report(rows);
        assert_eq!((s.detections, s.false_alarms), (15, 2));
        assert!((s.mean_f.unwrap() - 0.83).abs() < 1e-12);
        let csv = s.to_csv();
        assert!(csv
            .lines()
            .last()
            .unwrap()
            .starts_with("sum/mean,15,2,0.83"));
    }
}
