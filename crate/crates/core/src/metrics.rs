//! Ranking metrics with purchases as binary relevance, and per-method
//! aggregation against a reference ranker.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::EntryId;
use crate::stats::{paired_t_test, TTest};

pub const MAP_CUTOFF: usize = 100;
pub const NDCG_CUTOFF: usize = 10;
/// p-value at or below which a difference is flagged.
pub const SIGNIFICANCE_LEVEL: f64 = 0.001;

/// Average precision at `cutoff`, normalized by the number of relevant items
/// present anywhere in `ranked`.
pub fn average_precision<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, cutoff: usize) -> f64 {
    let present = ranked.iter().filter(|i| relevant.contains(i)).count();
    if present == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, item) in ranked.iter().take(cutoff).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    sum / present as f64
}

pub fn reciprocal_rank<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>) -> f64 {
    ranked
        .iter()
        .position(|i| relevant.contains(i))
        .map_or(0.0, |k| 1.0 / (k + 1) as f64)
}

/// NDCG@k with binary gains and `log2(rank + 1)` discounts.
pub fn ndcg<T: Ord>(ranked: &[T], relevant: &BTreeSet<T>, k: usize) -> f64 {
    let present = ranked.iter().filter(|i| relevant.contains(i)).count();
    let ideal: f64 = (0..present.min(k)).map(discount).sum();
    if ideal == 0.0 {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(pos, _)| discount(pos))
        .sum();
    dcg / ideal
}

/// `1 / log2(pos + 2)` for a 0-based position.
fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MAP@100")]
    Map,
    #[serde(rename = "MRR")]
    Mrr,
    #[serde(rename = "NDCG@10")]
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Map, Metric::Mrr, Metric::Ndcg];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Map => "MAP@100",
            Metric::Mrr => "MRR",
            Metric::Ndcg => "NDCG@10",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryResult {
    pub entry: EntryId,
    pub ap_100: f64,
    pub rr: f64,
    pub ndcg_10: f64,
}

impl EntryResult {
    pub fn evaluate<T: Ord>(entry: EntryId, ranked: &[T], relevant: &BTreeSet<T>) -> Self {
        Self {
            entry,
            ap_100: average_precision(ranked, relevant, MAP_CUTOFF),
            rr: reciprocal_rank(ranked, relevant),
            ndcg_10: ndcg(ranked, relevant, NDCG_CUTOFF),
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Map => self.ap_100,
            Metric::Mrr => self.rr,
            Metric::Ndcg => self.ndcg_10,
        }
    }
}

/// Pairwise summation; order-stable and accurate for long columns.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    /// `(mean - ref_mean) / ref_mean`; absent when the reference mean is 0.
    pub rel_improvement: Option<f64>,
    pub t_stat: f64,
    pub p_value: f64,
    pub degenerate_variance: bool,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub reference: String,
    pub summaries: Vec<MetricSummary>,
    pub entries: Vec<EntryResult>,
}

impl RunReport {
    pub fn summary(&self, metric: Metric) -> &MetricSummary {
        self.summaries
            .iter()
            .find(|s| s.metric == metric)
            .expect("every report carries all metrics")
    }

    pub fn mean(&self, metric: Metric) -> f64 {
        self.summary(metric).mean
    }
}

fn column(results: &[EntryResult], metric: Metric) -> Vec<f64> {
    results.iter().map(|r| r.get(metric)).collect()
}

/// Summarizes every method against `reference`. All methods must have been
/// evaluated on the same entries in the same order.
pub fn aggregate(
    methods: &[(String, Vec<EntryResult>)],
    reference: &str,
) -> Result<Vec<RunReport>> {
    let (_, ref_results) = methods
        .iter()
        .find(|(name, _)| name == reference)
        .ok_or_else(|| Error::Argument(format!("reference method {reference} not evaluated")))?;
    let ref_ids: Vec<EntryId> = ref_results.iter().map(|r| r.entry).collect();
    let mut reports = Vec::with_capacity(methods.len());
    for (name, results) in methods {
        let ids: Vec<EntryId> = results.iter().map(|r| r.entry).collect();
        if ids != ref_ids {
            return Err(Error::Argument(format!(
                "method {name} was evaluated on a different entry set than {reference}"
            )));
        }
        let mut summaries = Vec::new();
        for metric in Metric::ALL {
            let ours = column(results, metric);
            let theirs = column(ref_results, metric);
            let m = mean(&ours);
            let ref_mean = mean(&theirs);
            let test = if ours.len() >= 2 {
                paired_t_test(&ours, &theirs)?
            } else {
                TTest::undefined()
            };
            summaries.push(MetricSummary {
                metric,
                mean: m,
                rel_improvement: (ref_mean != 0.0).then(|| (m - ref_mean) / ref_mean),
                t_stat: test.t,
                p_value: test.p,
                degenerate_variance: test.degenerate,
                significant: test.p <= SIGNIFICANCE_LEVEL,
            });
        }
        reports.push(RunReport {
            method: name.clone(),
            reference: reference.to_string(),
            summaries,
            entries: results.clone(),
        });
    }
    Ok(reports)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// One row per (method, metric).
pub fn reports_to_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("method,metric,mean,rel_improvement,t_stat,p_value,significant\n");
    for r in reports {
        for s in &r.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method,
                s.metric,
                s.mean,
                fmt_opt(s.rel_improvement),
                fmt_opt(s.t_stat.is_finite().then_some(s.t_stat)),
                s.p_value,
                s.significant
            );
        }
    }
    out
}

/// Table-style text: means with relative change vs the reference, `*` on
/// significant differences.
pub fn reports_to_table(reports: &[RunReport]) -> String {
    let mut out = format!("{:<12}", "method");
    for m in Metric::ALL {
        let _ = write!(out, "{:>26}", m.name());
    }
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<12}", r.method);
        for s in &r.summaries {
            let rel = s
                .rel_improvement
                .map_or_else(|| "n/a".to_string(), |x| format!("{:+.2}%", 100.0 * x));
            let mark = if s.significant && r.method != r.reference {
                "*"
            } else {
                " "
            };
            let _ = write!(out, "{:>16.4} {:>8}{}", s.mean, rel, mark);
        }
        out.push('\n');
    }
    out
}

pub fn write_reports(dir: &Path, stem: &str, reports: &[RunReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv, reports_to_csv(reports)).map_err(|e| Error::io(&csv, e))?;
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(reports).map_err(|e| Error::json("report", e))?;
    std::fs::write(&json, text).map_err(|e| Error::io(&json, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(items: &[u32]) -> BTreeSet<u32> {
        items.iter().copied().collect()
    }

    #[test]
    fn ap_examples() {
        let ranked = [1, 2, 3, 4];
        assert_eq!(average_precision(&ranked, &rel(&[1]), 100), 1.0);
        assert!((average_precision(&ranked, &rel(&[3]), 100) - 1.0 / 3.0).abs() < 1e-15);
        assert!((average_precision(&ranked, &rel(&[1, 3]), 100) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&ranked, &rel(&[9]), 100), 0.0);
        // Relevant beyond the cutoff still counts in the normalizer.
        assert_eq!(average_precision(&ranked, &rel(&[1, 4]), 2), 0.5);
    }

    #[test]
    fn rr_examples() {
        let ranked = [1, 2, 3];
        assert_eq!(reciprocal_rank(&ranked, &rel(&[1])), 1.0);
        assert_eq!(reciprocal_rank(&ranked, &rel(&[3])), 1.0 / 3.0);
        assert_eq!(reciprocal_rank(&ranked, &rel(&[7])), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        let ranked: Vec<u32> = (1..=12).collect();
        assert_eq!(ndcg(&ranked, &rel(&[1]), 10), 1.0);
        assert!((ndcg(&ranked, &rel(&[3]), 10) - 0.5).abs() < 1e-15);
        assert_eq!(ndcg(&ranked, &rel(&[12]), 10), 0.0);
        assert_eq!(ndcg(&ranked, &rel(&[]), 10), 0.0);
    }

    fn results(values: &[f64]) -> Vec<EntryResult> {
        values
            .iter()
            .enumerate()
            .map(|(k, &v)| EntryResult {
                entry: EntryId {
                    session_id: k as u64,
                    t: 1,
                },
                ap_100: v,
                rr: v,
                ndcg_10: v,
            })
            .collect()
    }

    #[test]
    fn aggregate_identity_and_relative() {
        let methods = vec![
            ("PROD".to_string(), results(&[0.1, 0.1, 0.1])),
            ("X".to_string(), results(&[0.126, 0.126, 0.126])),
            ("Y".to_string(), results(&[0.2, 0.4, 0.3])),
        ];
        let reports = aggregate(&methods, "PROD").unwrap();
        let prod = reports[0].summary(Metric::Mrr);
        assert_eq!(prod.rel_improvement, Some(0.0));
        assert_eq!(prod.p_value, 1.0);
        let x = reports[1].summary(Metric::Mrr);
        assert!((x.rel_improvement.unwrap() - 0.26).abs() < 1e-12);
        assert!(x.degenerate_variance);
        assert!((reports[2].mean(Metric::Map) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn aggregate_rejects_mismatched_entries() {
        let mut other = results(&[0.1, 0.2]);
        other[1].entry.t = 2;
        let methods = vec![
            ("A".to_string(), results(&[0.1, 0.2])),
            ("B".to_string(), other),
        ];
        assert!(aggregate(&methods, "A").is_err());
        assert!(aggregate(&methods, "Z").is_err());
    }

    #[test]
    fn csv_has_row_per_method_metric() {
        let methods = vec![
            ("A".to_string(), results(&[0.2, 0.4])),
            ("B".to_string(), results(&[0.3, 0.1])),
        ];
        let csv = reports_to_csv(&aggregate(&methods, "A").unwrap());
        assert_eq!(csv.lines().count(), 1 + 2 * 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("A,MAP@100,"));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&v), v.iter().sum::<f64>());
        assert!((mean(&[0.2, 0.4]) - 0.3).abs() < 1e-15);
    }
}
