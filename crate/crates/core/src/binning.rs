//! Entropy binning: a shallow CART regression tree over cumulative path entropy.
//!
//! Each split picks the midpoint threshold minimizing the sum of the two sides'
//! within-subset losses. The default loss normalizes each side's squared
//! deviations by its size (the per-side variance); [`SplitLoss::Sse`] uses plain
//! sums of squares. Leaves, read left to right, give contiguous entropy bins.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::IterationRecord;

pub const DEFAULT_TREE_DEPTH: usize = 3;
/// Bins below this index (and below the top bin) are eligible for aggressive drafting.
pub const MAX_LOW_BINS: usize = 3;

const MAGIC: &str = "heterospec-bins";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitLoss {
    /// Per-side squared deviations divided by the side's size.
    #[default]
    Normalized,
    /// Unnormalized sum of squared errors.
    Sse,
}

impl SplitLoss {
    /// Loss of one subset given its size, sum, and sum of squares (centered).
    fn of(self, n: usize, sum: f64, sum_sq: f64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let sse = (sum_sq - sum * sum / n as f64).max(0.0);
        match self {
            SplitLoss::Normalized => sse / n as f64,
            SplitLoss::Sse => sse,
        }
    }

    /// Direct two-pass loss of a set of targets.
    pub fn of_targets(self, ys: impl Iterator<Item = f64> + Clone) -> f64 {
        let n = ys.clone().count();
        if n == 0 {
            return 0.0;
        }
        let mean = ys.clone().sum::<f64>() / n as f64;
        let sse: f64 = ys.map(|y| (y - mean) * (y - mean)).sum();
        match self {
            SplitLoss::Normalized => sse / n as f64,
            SplitLoss::Sse => sse,
        }
    }
}

impl fmt::Display for SplitLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitLoss::Normalized => "normalized",
            SplitLoss::Sse => "sse",
        })
    }
}

impl FromStr for SplitLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(SplitLoss::Normalized),
            "sse" => Ok(SplitLoss::Sse),
            other => Err(Error::Config(format!("unknown split loss `{other}`"))),
        }
    }
}

/// Losses within this (relative) margin count as tied; ties go to the smaller threshold.
pub fn loss_tie_tolerance(loss: f64) -> f64 {
    1e-12 * (1.0 + loss.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub threshold: f64,
    pub loss: f64,
    /// Samples with `x < threshold`.
    pub left_len: usize,
    /// The split does not lower the loss below the unsplit set's.
    pub no_benefit: bool,
}

/// Threshold strictly between two adjacent distinct sorted values such that the
/// lower one satisfies `x < s` and the upper one does not.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

fn sorted(samples: &[CalibrationSample]) -> Vec<CalibrationSample> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    v
}

pub fn distinct_x(samples: &[CalibrationSample]) -> usize {
    let v = sorted(samples);
    if v.is_empty() {
        return 0;
    }
    1 + v.windows(2).filter(|w| w[0].x < w[1].x).count()
}

/// Best threshold over midpoints of consecutive distinct `x`. `None` when fewer
/// than two distinct `x` exist.
pub fn best_split(samples: &[CalibrationSample], loss: SplitLoss) -> Option<Split> {
    let v = sorted(samples);
    let n = v.len();
    if n < 2 {
        return None;
    }
    let center = v.iter().map(|s| s.y).sum::<f64>() / n as f64;
    let ys: Vec<f64> = v.iter().map(|s| s.y - center).collect();
    let total_sum: f64 = ys.iter().sum();
    let total_sq: f64 = ys.iter().map(|y| y * y).sum();
    let parent = loss.of(n, total_sum, total_sq);

    let mut best: Option<Split> = None;
    let (mut ls, mut lq) = (0.0, 0.0);
    for i in 1..n {
        ls += ys[i - 1];
        lq += ys[i - 1] * ys[i - 1];
        if !(v[i - 1].x < v[i].x) {
            continue;
        }
        let l = loss.of(i, ls, lq) + loss.of(n - i, total_sum - ls, total_sq - lq);
        if best.is_none_or(|b| l < b.loss - loss_tie_tolerance(b.loss)) {
            best = Some(Split {
                threshold: midpoint(v[i - 1].x, v[i].x),
                loss: l,
                left_len: i,
                no_benefit: false,
            });
        }
    }
    best.map(|mut b| {
        b.no_benefit = b.loss >= parent - loss_tie_tolerance(parent);
        b
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    /// Exclusive; `f64::INFINITY` for the last bin.
    pub upper: f64,
    pub mean: f64,
    pub count: usize,
}

impl Bin {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x < self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BinningMeta {
    pub entropy_k: usize,
    pub base_depth: usize,
    pub filter: String,
    pub target: String,
    pub corpus_hash: String,
}

/// Trained entropy binning.
#[derive(Debug, Clone, PartialEq)]
pub struct BinningModel {
    thresholds: Vec<f64>,
    bins: Vec<Bin>,
    loss: SplitLoss,
    training_loss: f64,
    pub meta: BinningMeta,
}

impl BinningModel {
    /// Builds a model directly from ascending thresholds (leaf statistics zeroed).
    pub fn from_thresholds(mut thresholds: Vec<f64>) -> Result<Self> {
        thresholds.sort_by(f64::total_cmp);
        if thresholds.iter().any(|t| !t.is_finite() || *t <= 0.0)
            || thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Config(
                "thresholds must be distinct, finite, and > 0".into(),
            ));
        }
        let bins = intervals(&thresholds)
            .map(|(lower, upper)| Bin {
                lower,
                upper,
                mean: 0.0,
                count: 0,
            })
            .collect();
        Ok(Self {
            thresholds,
            bins,
            loss: SplitLoss::default(),
            training_loss: 0.0,
            meta: BinningMeta::default(),
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn loss(&self) -> SplitLoss {
        self.loss
    }

    /// Sum of leaf losses over the training samples.
    pub fn training_loss(&self) -> f64 {
        self.training_loss
    }

    pub fn samples(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Bin containing `x`; a value equal to a threshold falls in the bin to its right.
    pub fn assign(&self, x: f64) -> usize {
        self.thresholds.partition_point(|t| *t <= x)
    }

    /// Number of leading bins treated as low-entropy: at most three, and never the
    /// unbounded top bin.
    pub fn low_bin_count(&self) -> usize {
        MAX_LOW_BINS.min(self.bins.len().saturating_sub(1))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "loss {}", self.loss);
        let _ = writeln!(out, "entropy_k {}", self.meta.entropy_k);
        let _ = writeln!(out, "base_depth {}", self.meta.base_depth);
        let _ = writeln!(out, "filter {}", self.meta.filter);
        let _ = writeln!(out, "target {}", self.meta.target);
        let _ = writeln!(out, "corpus_hash {}", self.meta.corpus_hash);
        let _ = writeln!(out, "training_loss {}", fmt_f64(self.training_loss));
        let _ = writeln!(out, "thresholds {}", self.thresholds.len());
        for t in &self.thresholds {
            let _ = writeln!(out, "threshold {}", fmt_f64(*t));
        }
        let _ = writeln!(out, "bins {}", self.bins.len());
        for b in &self.bins {
            let _ = writeln!(
                out,
                "bin {} {} {} {}",
                fmt_f64(b.lower),
                fmt_f64(b.upper),
                fmt_f64(b.mean),
                b.count
            );
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |key: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, key, "unexpected end of file"))?;
            let mut parts = line.split_whitespace().map(String::from);
            match parts.next() {
                Some(k) if k == key => Ok((no, parts.collect())),
                Some(k) => Err(Error::parse(
                    no,
                    key,
                    format!("expected `{key}`, found `{k}`"),
                )),
                None => Err(Error::parse(no, key, "empty line")),
            }
        };
        fn field<T: FromStr>(no: usize, name: &str, v: Option<&String>) -> Result<T> {
            v.ok_or_else(|| Error::parse(no, name, "missing value"))?
                .parse()
                .map_err(|_| Error::parse(no, name, "malformed value"))
        }
        let word = |no: usize, name: &str, v: &[String]| -> Result<String> {
            match v {
                [] => Ok(String::new()),
                [w] => Ok(w.clone()),
                _ => Err(Error::parse(no, name, "unexpected extra fields")),
            }
        };

        let (no, v) = next(MAGIC)?;
        let version: u32 = field(no, "version", v.first())?;
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                no,
                "version",
                format!("unsupported version {version}"),
            ));
        }
        let (no, v) = next("loss")?;
        let loss: SplitLoss = field(no, "loss", v.first())?;
        let (no, v) = next("entropy_k")?;
        let entropy_k = field(no, "entropy_k", v.first())?;
        let (no, v) = next("base_depth")?;
        let base_depth = field(no, "base_depth", v.first())?;
        let (no, v) = next("filter")?;
        let filter = word(no, "filter", &v)?;
        let (no, v) = next("target")?;
        let target = word(no, "target", &v)?;
        let (no, v) = next("corpus_hash")?;
        let corpus_hash = word(no, "corpus_hash", &v)?;
        let (no, v) = next("training_loss")?;
        let training_loss = field(no, "training_loss", v.first())?;
        let (no, v) = next("thresholds")?;
        let nt: usize = field(no, "thresholds", v.first())?;
        let mut thresholds = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (no, v) = next("threshold")?;
            thresholds.push(field::<f64>(no, "threshold", v.first())?);
        }
        let (no, v) = next("bins")?;
        let nb: usize = field(no, "bins", v.first())?;
        if nb != nt + 1 {
            return Err(Error::parse(
                no,
                "bins",
                format!("{nb} bins for {nt} thresholds"),
            ));
        }
        let mut bins = Vec::with_capacity(nb);
        for i in 0..nb {
            let (no, v) = next("bin")?;
            if v.len() != 4 {
                return Err(Error::parse(
                    no,
                    "bin",
                    "expected `<lower> <upper> <mean> <count>`",
                ));
            }
            let bin = Bin {
                lower: field(no, "lower", v.first())?,
                upper: field(no, "upper", v.get(1))?,
                mean: field(no, "mean", v.get(2))?,
                count: field(no, "count", v.get(3))?,
            };
            let expected_lower = if i == 0 { 0.0 } else { thresholds[i - 1] };
            let expected_upper = thresholds.get(i).copied().unwrap_or(f64::INFINITY);
            if bin.lower != expected_lower
                || bin.upper != expected_upper
                || !(bin.lower < bin.upper)
            {
                return Err(Error::parse(
                    no,
                    "bin",
                    format!(
                        "interval [{}, {}) overlaps or leaves a gap; expected [{expected_lower}, {expected_upper})",
                        bin.lower, bin.upper
                    ),
                ));
            }
            bins.push(bin);
        }
        next("end")?;
        Ok(Self {
            thresholds,
            bins,
            loss,
            training_loss,
            meta: BinningMeta {
                entropy_k,
                base_depth,
                filter,
                target,
                corpus_hash,
            },
        })
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn intervals(thresholds: &[f64]) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..=thresholds.len()).map(move |i| {
        let lo = if i == 0 { 0.0 } else { thresholds[i - 1] };
        let hi = thresholds.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    })
}

/// Greedy recursive CART to `depth` levels.
///
/// A node becomes a leaf when the depth is exhausted, it has fewer than two
/// distinct `x`, or its targets have zero variance.
pub fn train_cart(
    samples: &[CalibrationSample],
    depth: usize,
    loss: SplitLoss,
) -> Result<BinningModel> {
    if samples.is_empty() {
        return Err(Error::Config(
            "cannot train bins on an empty dataset".into(),
        ));
    }
    if samples
        .iter()
        .any(|s| !(s.x >= 0.0) || !s.x.is_finite() || !s.y.is_finite())
    {
        return Err(Error::Config(
            "calibration samples need finite x >= 0 and finite y".into(),
        ));
    }
    let mut leaves: Vec<Vec<CalibrationSample>> = Vec::new();
    let mut thresholds = Vec::new();
    grow(sorted(samples), depth, loss, &mut leaves, &mut thresholds);
    let bins: Vec<Bin> = intervals(&thresholds)
        .zip(&leaves)
        .map(|((lower, upper), leaf)| Bin {
            lower,
            upper,
            mean: leaf.iter().map(|s| s.y).sum::<f64>() / leaf.len() as f64,
            count: leaf.len(),
        })
        .collect();
    let training_loss = leaves
        .iter()
        .map(|leaf| loss.of_targets(leaf.iter().map(|s| s.y)))
        .sum();
    Ok(BinningModel {
        thresholds,
        bins,
        loss,
        training_loss,
        meta: BinningMeta::default(),
    })
}

fn grow(
    node: Vec<CalibrationSample>,
    depth: usize,
    loss: SplitLoss,
    leaves: &mut Vec<Vec<CalibrationSample>>,
    thresholds: &mut Vec<f64>,
) {
    let constant_y = node.windows(2).all(|w| w[0].y == w[1].y);
    let split = if depth == 0 || constant_y {
        None
    } else {
        best_split(&node, loss)
    };
    match split {
        None => leaves.push(node),
        Some(s) => {
            let mut left = node;
            let right = left.split_off(s.left_len);
            grow(left, depth - 1, loss, leaves, thresholds);
            thresholds.push(s.threshold);
            grow(right, depth - 1, loss, leaves, thresholds);
        }
    }
}

/// Which iterations contribute calibration samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleFilter {
    /// Accepted length reached the base depth.
    #[default]
    FullyAccepted,
    /// At least one drafted token accepted.
    AnyAccepted,
    All,
}

impl fmt::Display for SampleFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleFilter::FullyAccepted => "fully-accepted",
            SampleFilter::AnyAccepted => "any-accepted",
            SampleFilter::All => "all",
        })
    }
}

/// Regression target for calibration samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleTarget {
    /// Terminal confidence rank of the iteration.
    #[default]
    Tcr,
    /// Rank of the meta-path leaf among the reranked candidates.
    MetaRank,
}

impl fmt::Display for SampleTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleTarget::Tcr => "tcr",
            SampleTarget::MetaRank => "meta-rank",
        })
    }
}

/// Turns baseline iteration records into calibration samples.
pub fn collect_calibration(
    records: &[IterationRecord],
    base_depth: usize,
    filter: SampleFilter,
    target: SampleTarget,
) -> Result<Vec<CalibrationSample>> {
    let samples: Vec<CalibrationSample> = records
        .iter()
        .filter(|r| match filter {
            SampleFilter::FullyAccepted => r.accepted_len >= base_depth,
            SampleFilter::AnyAccepted => r.accepted_len >= 1,
            SampleFilter::All => true,
        })
        .map(|r| CalibrationSample {
            x: r.entropy,
            y: match target {
                SampleTarget::Tcr => r.tcr as f64,
                SampleTarget::MetaRank => r.meta_rank as f64,
            },
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::Calibration {
            msg: format!("no iteration passed the `{filter}` filter"),
            iterations: records.len(),
            kept: 0,
            distinct_x: 0,
        });
    }
    Ok(samples)
}
