//! Per-iteration records, run summaries, TCR statistics, and the abstract cost model.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::RerankedTree;
use crate::verify::AcceptResult;

pub const ITERATIONS_SCHEMA: &str = "#schema=heterospec-iterations/1";

/// One draft-verify cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub prompt: usize,
    pub index: usize,
    /// Cumulative meta-path Top-K entropy at the base depth, nats.
    pub entropy: f64,
    /// The meta path came from a layer shallower than the base depth.
    pub meta_truncated: bool,
    pub bin: Option<usize>,
    /// Tree depth used for this cycle (base depth plus any extension).
    pub depth: usize,
    /// Rerank budget `n`.
    pub budget: usize,
    /// Nodes in the expansion tree.
    pub tree_size: usize,
    pub accepted_len: usize,
    /// Terminal confidence rank; `budget + 1` when nothing was accepted.
    pub tcr: usize,
    /// Value-order rank of the meta-path leaf in the reranked tree, `budget + 1` if not selected.
    pub meta_rank: usize,
    pub tokens_verified: usize,
}

impl IterationRecord {
    pub fn emitted(&self) -> usize {
        self.accepted_len + 1
    }

    pub fn accepted_any(&self) -> bool {
        self.accepted_len > 0
    }
}

/// Terminal confidence rank of a verified iteration.
pub fn tcr(result: &AcceptResult, t2: &RerankedTree) -> usize {
    match result.accepted_path.last() {
        Some(id) => t2
            .rank(*id)
            .expect("accepted node belongs to the reranked tree"),
        None => t2.budget() + 1,
    }
}

/// Abstract per-operation costs standing in for device time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub call: f64,
    pub token: f64,
    pub draft_layer: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            call: 1.0,
            token: 0.0,
            draft_layer: 0.0,
        }
    }
}

impl CostModel {
    pub fn new(call: f64, token: f64, draft_layer: f64) -> Result<Self> {
        if [call, token, draft_layer]
            .iter()
            .any(|c| !(*c >= 0.0) || !c.is_finite())
        {
            return Err(Error::Config(
                "cost model entries must be finite and >= 0".into(),
            ));
        }
        if call + token <= 0.0 {
            return Err(Error::Config(
                "cost model needs a positive per-call or per-token cost".into(),
            ));
        }
        Ok(Self {
            call,
            token,
            draft_layer,
        })
    }

    /// Speedup over autoregressive decoding, which pays `call + token` per emitted token.
    pub fn speedup(&self, records: &[IterationRecord]) -> f64 {
        let emitted: usize = records.iter().map(IterationRecord::emitted).sum();
        let spec: f64 = records
            .iter()
            .map(|r| {
                self.call
                    + self.token * r.tokens_verified as f64
                    + self.draft_layer * r.depth as f64
            })
            .sum();
        emitted as f64 * (self.call + self.token) / spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin: usize,
    pub iterations: usize,
    pub mean_accepted_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub emitted: usize,
    pub calls: usize,
    pub tokens: usize,
    pub tau: f64,
    /// TCR counts over accepting iterations.
    pub tcr_histogram: BTreeMap<usize, usize>,
    /// Iterations that accepted nothing.
    pub no_accept: usize,
    pub per_bin: Vec<BinStats>,
    pub cost_model: CostModel,
    pub estimated_speedup: f64,
}

pub fn summarize(records: &[IterationRecord], cost: &CostModel) -> Result<RunSummary> {
    if records.is_empty() {
        return Err(Error::MissingRecords(
            "cannot summarize an empty run".into(),
        ));
    }
    let emitted: usize = records.iter().map(IterationRecord::emitted).sum();
    let calls = records.len();
    let tokens = records.iter().map(|r| r.tokens_verified).sum();
    let mut tcr_histogram = BTreeMap::new();
    let mut no_accept = 0;
    let mut bins: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records {
        if r.accepted_any() {
            *tcr_histogram.entry(r.tcr).or_insert(0) += 1;
        } else {
            no_accept += 1;
        }
        if let Some(b) = r.bin {
            let e = bins.entry(b).or_insert((0, 0));
            e.0 += 1;
            e.1 += r.accepted_len;
        }
    }
    let per_bin = bins
        .into_iter()
        .map(|(bin, (n, acc))| BinStats {
            bin,
            iterations: n,
            mean_accepted_len: acc as f64 / n as f64,
        })
        .collect();
    Ok(RunSummary {
        emitted,
        calls,
        tokens,
        tau: emitted as f64 / calls as f64,
        tcr_histogram,
        no_accept,
        per_bin,
        cost_model: *cost,
        estimated_speedup: cost.speedup(records),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcrQuantiles {
    pub count: usize,
    pub p25: usize,
    pub p50: usize,
    pub p75: usize,
    pub p95: usize,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[usize], pct: f64) -> usize {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// TCR percentiles over accepting iterations; `None` if no iteration accepted anything.
pub fn tcr_quantiles(records: &[IterationRecord]) -> Option<TcrQuantiles> {
    let mut v: Vec<usize> = records
        .iter()
        .filter(|r| r.accepted_any())
        .map(|r| r.tcr)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable();
    Some(TcrQuantiles {
        count: v.len(),
        p25: nearest_rank(&v, 25.0),
        p50: nearest_rank(&v, 50.0),
        p75: nearest_rank(&v, 75.0),
        p95: nearest_rank(&v, 95.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcrBucketRow {
    pub bucket: usize,
    pub iterations: usize,
    pub mean_accepted_len: f64,
}

/// Mean accepted length by TCR budget quartile (bucket 0 = top 25% of each
/// iteration's rerank budget), over accepting iterations. Empty buckets are omitted.
pub fn accepted_len_by_tcr_quartile(records: &[IterationRecord]) -> Vec<TcrBucketRow> {
    let mut acc = [(0usize, 0usize); 4];
    for r in records.iter().filter(|r| r.accepted_any()) {
        let b = ((4 * r.tcr).div_ceil(r.budget.max(1))).clamp(1, 4) - 1;
        acc[b].0 += 1;
        acc[b].1 += r.accepted_len;
    }
    acc.iter()
        .enumerate()
        .filter(|(_, (n, _))| *n > 0)
        .map(|(bucket, (n, total))| TcrBucketRow {
            bucket,
            iterations: *n,
            mean_accepted_len: *total as f64 / *n as f64,
        })
        .collect()
}

/// Checks the accounting identities every run must satisfy.
pub fn check_accounting(records: &[IterationRecord], summary: &RunSummary) -> Result<()> {
    let emitted: usize = records.iter().map(IterationRecord::emitted).sum();
    let tokens: usize = records.iter().map(|r| r.tokens_verified).sum();
    let fail = |m: String| Err(Error::Contract(m));
    if summary.emitted != emitted {
        return fail(format!(
            "emitted {} != sum(accepted+1) {emitted}",
            summary.emitted
        ));
    }
    if summary.calls != records.len() {
        return fail(format!(
            "calls {} != iterations {}",
            summary.calls,
            records.len()
        ));
    }
    if summary.tokens != tokens {
        return fail(format!(
            "tokens {} != sum(tokens_verified) {tokens}",
            summary.tokens
        ));
    }
    if summary.tau != emitted as f64 / records.len() as f64 || summary.tau < 1.0 {
        return fail(format!("tau {} inconsistent", summary.tau));
    }
    let max_depth = records.iter().map(|r| r.depth).max().unwrap_or(0);
    if summary.tau > (max_depth + 1) as f64 {
        return fail(format!("tau {} exceeds max depth + 1", summary.tau));
    }
    for r in records {
        if r.tcr < 1 || r.tcr > r.budget + 1 || r.accepted_len > r.depth {
            return fail(format!("record {}/{} out of range", r.prompt, r.index));
        }
        if !r.accepted_any() && r.tcr != r.budget + 1 {
            return fail(format!(
                "record {}/{} missing sentinel rank",
                r.prompt, r.index
            ));
        }
    }
    Ok(())
}

pub fn write_iterations_csv(path: &Path, records: &[IterationRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{ITERATIONS_SCHEMA}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_iterations_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if first.trim_end() != ITERATIONS_SCHEMA {
        return Err(Error::parse(
            1,
            "schema",
            format!("expected `{ITERATIONS_SCHEMA}`"),
        ));
    }
    let mut r = csv::Reader::from_reader(reader);
    let records = r
        .deserialize()
        .collect::<std::result::Result<Vec<IterationRecord>, _>>()?;
    if records.is_empty() {
        return Err(Error::MissingRecords(format!(
            "{} has no iteration rows",
            path.display()
        )));
    }
    Ok(records)
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(
        accepted_len: usize,
        tcr: usize,
        budget: usize,
        depth: usize,
    ) -> IterationRecord {
        IterationRecord {
            prompt: 0,
            index: 0,
            entropy: 0.0,
            meta_truncated: false,
            bin: None,
            depth,
            budget,
            tree_size: 50,
            accepted_len,
            tcr,
            meta_rank: 1,
            tokens_verified: budget,
        }
    }

    #[test]
    fn tau_for_constant_acceptance() {
        let recs: Vec<_> = (0..10).map(|_| record(5, 5, 20, 5)).collect();
        let s = summarize(&recs, &CostModel::default()).unwrap();
        assert_eq!(s.tau, 6.0);
        assert_eq!(s.emitted, 60);
        assert_eq!(s.tokens, 200);
        assert_eq!(s.estimated_speedup, 6.0);
        check_accounting(&recs, &s).unwrap();
    }

    #[test]
    fn empty_run_is_an_error() {
        assert!(matches!(
            summarize(&[], &CostModel::default()),
            Err(Error::MissingRecords(_))
        ));
    }

    #[test]
    fn token_costs_reduce_speedup() {
        let recs: Vec<_> = (0..4).map(|_| record(3, 3, 20, 5)).collect();
        let cost = CostModel::new(1.0, 0.05, 0.01).unwrap();
        // 16 * 1.05 / (4 * (1 + 1 + 0.05))
        let s = summarize(&recs, &cost).unwrap();
        assert!((s.estimated_speedup - 16.0 * 1.05 / 8.2).abs() < 1e-12);
    }

    #[test]
    fn quantiles_nearest_rank() {
        let all_one: Vec<_> = (0..7).map(|_| record(2, 1, 20, 5)).collect();
        let q = tcr_quantiles(&all_one).unwrap();
        assert_eq!((q.p25, q.p50, q.p75, q.p95), (1, 1, 1, 1));

        let uniform: Vec<_> = (1..=20).map(|t| record(1, t, 20, 5)).collect();
        let q = tcr_quantiles(&uniform).unwrap();
        assert_eq!((q.p25, q.p50, q.p75, q.p95), (5, 10, 15, 19));

        let none: Vec<_> = (0..3).map(|_| record(0, 21, 20, 5)).collect();
        assert!(tcr_quantiles(&none).is_none());
    }

    #[test]
    fn histogram_separates_sentinel() {
        let recs = vec![
            record(0, 21, 20, 5),
            record(2, 2, 20, 5),
            record(2, 2, 20, 5),
        ];
        let s = summarize(&recs, &CostModel::default()).unwrap();
        assert_eq!(s.no_accept, 1);
        assert_eq!(s.tcr_histogram.get(&2), Some(&2));
        assert!(!s.tcr_histogram.contains_key(&21));
    }

    #[test]
    fn quartile_buckets() {
        let recs = vec![
            record(5, 5, 20, 5),
            record(1, 6, 20, 5),
            record(3, 20, 20, 5),
            record(0, 21, 20, 5),
        ];
        let rows = accepted_len_by_tcr_quartile(&recs);
        let got: Vec<_> = rows.iter().map(|r| (r.bucket, r.iterations)).collect();
        assert_eq!(got, vec![(0, 1), (1, 1), (3, 1)]);
    }

    #[test]
    fn accounting_catches_bad_sentinel() {
        let recs = vec![record(0, 3, 20, 5)];
        let s = summarize(&recs, &CostModel::default()).unwrap();
        assert!(check_accounting(&recs, &s).is_err());
    }

    #[test]
    fn iterations_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("it.csv");
        let mut recs = vec![record(2, 3, 20, 5), record(0, 21, 9, 8)];
        recs[1].bin = Some(0);
        recs[1].entropy = 0.123_456_789_012_345_67;
        write_iterations_csv(&path, &recs).unwrap();
        assert_eq!(read_iterations_csv(&path).unwrap(), recs);
    }
}
