use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{auc, NoiseLabError};
use crate::gmm::GmmModel;
use crate::metrics::ScoredSample;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 50;

/// Confusion counts of a γ-partition against gold, noisy as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartitionCounts {
    pub true_noisy: usize,
    pub false_noisy: usize,
    pub missed_noisy: usize,
    pub true_clean: usize,
}

impl PartitionCounts {
    fn tally(scored: &[ScoredSample], gold: &[bool], gamma: f64) -> Self {
        let mut c = Self::default();
        for (s, &g) in scored.iter().zip(gold) {
            match (s.posterior_noisy > gamma, g) {
                (true, true) => c.true_noisy += 1,
                (true, false) => c.false_noisy += 1,
                (false, true) => c.missed_noisy += 1,
                (false, false) => c.true_clean += 1,
            }
        }
        c
    }

    /// Zero when nothing is flagged.
    pub fn precision(&self) -> f64 {
        ratio(self.true_noisy, self.true_noisy + self.false_noisy)
    }

    /// Zero when there is no gold noise.
    pub fn recall(&self) -> f64 {
        ratio(self.true_noisy, self.true_noisy + self.missed_noisy)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn predicted_noisy(&self) -> usize {
        self.true_noisy + self.false_noisy
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Fixed-width bins of I over `[lo, hi]`, split by gold class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub clean: Vec<u64>,
    pub noisy: Vec<u64>,
}

impl Histogram {
    fn build(values: &[f64], gold: &[bool]) -> Self {
        let mut clean = vec![0u64; HISTOGRAM_BINS];
        let mut noisy = vec![0u64; HISTOGRAM_BINS];
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Self { lo: 0.0, hi: 0.0, clean, noisy };
        }
        for (&v, &g) in values.iter().zip(gold) {
            let bin = if hi > lo {
                (((v - lo) / (hi - lo) * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
            } else {
                0
            };
            if g {
                noisy[bin] += 1;
            } else {
                clean[bin] += 1;
            }
        }
        Self { lo, hi, clean, noisy }
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == HISTOGRAM_BINS {
            return self.hi;
        }
        self.lo + (self.hi - self.lo) * i as f64 / HISTOGRAM_BINS as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count_clean,count_noisy\n");
        for i in 0..HISTOGRAM_BINS {
            let _ = writeln!(out, "{},{},{},{}", self.edge(i), self.edge(i + 1), self.clean[i], self.noisy[i]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub schema_version: u32,
    pub n_samples: usize,
    pub n_gold_noisy: usize,
    pub gamma: f64,
    /// AUC of I ranking clean above noisy; absent with single-class gold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_cleanliness: Option<f64>,
    /// AUC of −L(y|x) as the same ranker.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc_naive_nll: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_auc: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: PartitionCounts,
    pub histogram: Histogram,
    pub gmm: Option<GmmModel>,
    pub warnings: Vec<String>,
}

/// Scores detection quality of posteriors already attached to `scored`.
/// `gold[i]` is true when sample `i` is noisy.
pub fn detection_metrics(
    scored: &[ScoredSample],
    gold: &[bool],
    gamma: f64,
    gmm: Option<&GmmModel>,
) -> Result<DetectionReport, NoiseLabError> {
    if scored.len() != gold.len() {
        return Err(NoiseLabError::Misaligned { scored: scored.len(), gold: gold.len() });
    }
    let clean: Vec<bool> = gold.iter().map(|g| !g).collect();
    let cleanliness: Vec<f64> = scored.iter().map(|s| s.cleanliness).collect();
    let naive: Vec<f64> = scored.iter().map(|s| -s.cond_nll).collect();
    let auc_cleanliness = auc(&cleanliness, &clean);
    let auc_naive_nll = auc(&naive, &clean);
    let delta_auc = auc_cleanliness.zip(auc_naive_nll).map(|(a, b)| a - b);

    let mut warnings = Vec::new();
    if auc_cleanliness.is_none() {
        warnings.push("single-class gold labels: AUC undefined".to_string());
    }
    let counts = PartitionCounts::tally(scored, gold, gamma);
    Ok(DetectionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        n_samples: scored.len(),
        n_gold_noisy: gold.iter().filter(|&&g| g).count(),
        gamma,
        auc_cleanliness,
        auc_naive_nll,
        delta_auc,
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        counts,
        histogram: Histogram::build(&cleanliness, gold),
        gmm: gmm.cloned(),
        warnings,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), NoiseLabError> {
    fs::write(path, contents).map_err(|source| NoiseLabError::Io { path: path.display().to_string(), source })
}

/// Writes `detection.json` and `histogram.csv` into `dir`.
pub fn emit_report(report: &DetectionReport, dir: &Path) -> Result<(), NoiseLabError> {
    fs::create_dir_all(dir).map_err(|source| NoiseLabError::Io { path: dir.display().to_string(), source })?;
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    write(&dir.join("detection.json"), &json)?;
    write(&dir.join("histogram.csv"), &report.histogram.to_csv())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSweepRow {
    pub gamma: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted_noisy: usize,
}

/// Re-thresholds the attached posteriors at every γ.
pub fn gamma_sweep(scored: &[ScoredSample], gold: &[bool], gammas: &[f64]) -> Vec<GammaSweepRow> {
    gammas
        .iter()
        .map(|&gamma| {
            let c = PartitionCounts::tally(scored, gold, gamma);
            GammaSweepRow {
                gamma,
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                predicted_noisy: c.predicted_noisy(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSweepRow {
    pub n_neighbor: usize,
    pub auc_cleanliness: Option<f64>,
    pub auc_naive_nll: Option<f64>,
    pub f1: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn emit_gamma_sweep(rows: &[GammaSweepRow], path: &Path) -> Result<(), NoiseLabError> {
    let mut out = String::from("gamma,precision,recall,f1,predicted_noisy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.gamma, r.precision, r.recall, r.f1, r.predicted_noisy);
    }
    write(path, &out)
}

pub fn emit_neighbor_sweep(rows: &[NeighborSweepRow], path: &Path) -> Result<(), NoiseLabError> {
    let mut out = String::from("n_neighbor,auc_cleanliness,auc_naive_nll,f1\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.n_neighbor, opt(r.auc_cleanliness), opt(r.auc_naive_nll), r.f1);
    }
    write(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Verdict;

    fn sample(i: usize, cleanliness: f64, cond: f64, post: f64) -> ScoredSample {
        ScoredSample {
            sample_id: format!("s{i}"),
            cond_nll: cond,
            uncond_nll: 1.0,
            de_int: cond,
            phi: 1.0,
            cleanliness,
            posterior_noisy: post,
            verdict: Verdict::Undecided,
        }
    }

    #[test]
    fn perfect_detection() {
        let scored: Vec<_> = (0..10)
            .map(|i| if i < 4 { sample(i, 1.0 + i as f64 * 0.01, 2.0, 0.9) } else { sample(i, 2.0 + i as f64 * 0.01, 1.0, 0.1) })
            .collect();
        let gold: Vec<bool> = (0..10).map(|i| i < 4).collect();
        let r = detection_metrics(&scored, &gold, 0.5, None).unwrap();
        assert_eq!(r.auc_cleanliness, Some(1.0));
        assert_eq!(r.auc_naive_nll, Some(1.0));
        assert_eq!(r.delta_auc, Some(0.0));
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        assert_eq!(r.histogram.clean.iter().sum::<u64>(), 6);
        assert_eq!(r.histogram.noisy.iter().sum::<u64>(), 4);
        assert_eq!(r.histogram.clean.len(), HISTOGRAM_BINS);
        assert_eq!(r.histogram.noisy[0], 3);
        assert_eq!(r.histogram.clean[HISTOGRAM_BINS - 1], 3);
    }

    #[test]
    fn single_class_gold_keeps_partition_metrics() {
        let scored: Vec<_> = (0..5).map(|i| sample(i, 1.0 + i as f64, 1.0, 0.0)).collect();
        let r = detection_metrics(&scored, &[false; 5], 0.5, None).unwrap();
        assert_eq!(r.auc_cleanliness, None);
        assert_eq!(r.delta_auc, None);
        assert_eq!(r.counts.true_clean, 5);
        assert_eq!(r.histogram.noisy, vec![0; HISTOGRAM_BINS]);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json.get("auc_cleanliness").is_none());
        assert_eq!(json["schema_version"], 1);
    }

    #[test]
    fn emit_is_byte_stable() {
        let scored: Vec<_> = (0..6).map(|i| sample(i, i as f64 / 3.0, 1.0, (i % 2) as f64)).collect();
        let gold: Vec<bool> = (0..6).map(|i| i % 2 == 1).collect();
        let r = detection_metrics(&scored, &gold, 0.5, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, &dir.path().join("a")).unwrap();
        emit_report(&r, &dir.path().join("b")).unwrap();
        for f in ["detection.json", "histogram.csv"] {
            assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
        }
        let csv = fs::read_to_string(dir.path().join("a/histogram.csv")).unwrap();
        assert_eq!(csv.lines().count(), HISTOGRAM_BINS + 1);
        assert!(csv.starts_with("bin_lo,bin_hi,count_clean,count_noisy\n0,"));
    }

    #[test]
    fn gamma_sweep_rows() {
        let scored: Vec<_> = (0..4).map(|i| sample(i, 1.0, 1.0, i as f64 / 4.0)).collect();
        let gold = [false, false, true, true];
        let gammas: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let rows = gamma_sweep(&scored, &gold, &gammas);
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].predicted_noisy, 3);
        assert_eq!(rows[8].predicted_noisy, 0);
        assert_eq!(rows[2].f1, 1.0);
        assert!((rows[4].f1 - 2.0 / 3.0).abs() < 1e-12);
    }
}
