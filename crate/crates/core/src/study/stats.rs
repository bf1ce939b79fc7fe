use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Judgment, StudyCondition};

/// Correct (`tp`: real identified) and incorrect (`fp`: synthetic chosen)
/// counts per `(condition, rater)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tally {
    counts: BTreeMap<(StudyCondition, String), (u64, u64)>,
}

impl Tally {
    pub fn record(&mut self, j: &Judgment) {
        let e = self.counts.entry((j.condition, j.rater.clone())).or_default();
        if j.correct {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }

    pub fn from_judgments<'a>(judgments: impl IntoIterator<Item = &'a Judgment>) -> Self {
        let mut t = Self::default();
        for j in judgments {
            t.record(j);
        }
        t
    }

    /// `(rater, tp, fp)` rows of one condition, sorted by rater.
    pub fn rows(&self, condition: StudyCondition) -> Vec<(String, u64, u64)> {
        self.counts
            .iter()
            .filter(|((c, _), _)| *c == condition)
            .map(|((_, r), (tp, fp))| (r.clone(), *tp, *fp))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaterRow {
    pub rater: String,
    pub tp: u64,
    pub fp: u64,
    /// `fp / (tp + fp)`; `None` without judgments.
    pub p: Option<f64>,
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotalRow {
    pub tp: u64,
    pub fp: u64,
    /// Pooled `Σfp / Σ(tp + fp)`.
    pub p: Option<f64>,
    /// Judgment-count-weighted mean of the per-rater `|p − 0.5|`.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyStats {
    pub rows: Vec<RaterRow>,
    pub total: TotalRow,
}

pub fn compute_stats(tallies: &[(String, u64, u64)]) -> StudyStats {
    let rows: Vec<RaterRow> = tallies
        .iter()
        .map(|(rater, tp, fp)| {
            let n = tp + fp;
            let p = (n > 0).then(|| *fp as f64 / n as f64);
            RaterRow {
                rater: rater.clone(),
                tp: *tp,
                fp: *fp,
                p,
                deviation: p.map(|p| (p - 0.5).abs()),
            }
        })
        .collect();
    let tp: u64 = rows.iter().map(|r| r.tp).sum();
    let fp: u64 = rows.iter().map(|r| r.fp).sum();
    let n = tp + fp;
    let weighted: f64 = rows
        .iter()
        .filter_map(|r| r.deviation.map(|d| d * (r.tp + r.fp) as f64))
        .sum();
    StudyStats {
        rows,
        total: TotalRow {
            tp,
            fp,
            p: (n > 0).then(|| fp as f64 / n as f64),
            deviation: (n > 0).then(|| weighted / n as f64),
        },
    }
}
