use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{CorpusSource, ExperimentConfig};
use super::corpus::gen_corpus;
use crate::binning::{collect_calibration, distinct_x, train_cart, BinningMeta, BinningModel};
use crate::controller::{run_arm, run_comparison, ArmResult, HeteroConfig, Policy};
use crate::error::{Error, Result};
use crate::metrics::{
    accepted_len_by_tcr_quartile, check_accounting, read_iterations_csv, tcr_quantiles,
    write_iterations_csv, write_json, write_rows, RunSummary, TcrBucketRow, TcrQuantiles,
};
use crate::model::{NGramModel, PerturbedDraftModel, TokenId, Vocabulary};
use crate::rng::stream;

pub const CORPUS_FILE: &str = "corpus.txt";
pub const TARGET_FILE: &str = "target.ngram";
pub const DRAFT_FILE: &str = "draft.ngram";
pub const BINS_FILE: &str = "bins.txt";
pub const CALIBRATION_FILE: &str = "calibration.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    Baseline,
    Heterospec,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Heterospec => "heterospec",
        }
    }

    pub fn iterations_file(self) -> String {
        format!("iterations_{}.csv", self.name())
    }
}

/// Working directory for one experiment: every stage reads its inputs from
/// and writes its outputs to `cfg.out`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub cfg: ExperimentConfig,
}

pub struct Models {
    pub target: NGramModel,
    pub draft: PerturbedDraftModel<NGramModel>,
}

impl Models {
    pub fn vocab(&self) -> &Vocabulary {
        self.target.vocab()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRow {
    pub arm: String,
    pub calls: usize,
    pub tokens: usize,
    pub tau: f64,
    pub emitted: usize,
    pub estimated_speedup: f64,
}

impl ArmRow {
    fn new(arm: &str, s: &RunSummary) -> Self {
        Self {
            arm: arm.to_string(),
            calls: s.calls,
            tokens: s.tokens,
            tau: s.tau,
            emitted: s.emitted,
            estimated_speedup: s.estimated_speedup,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: usize,
    pub calls: usize,
    pub tokens: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<ArmRow>,
    pub baseline_tcr: Option<TcrQuantiles>,
    pub heterospec_tcr: Option<TcrQuantiles>,
    pub baseline_tcr_buckets: Vec<TcrBucketRow>,
    pub alpha_sweep: Vec<SweepRow>,
    pub outputs_identical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub arm: String,
    pub bin: usize,
    pub iterations: usize,
    pub mean_accepted_len: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub arm: String,
    pub tcr: usize,
    pub count: usize,
}

pub fn corpus_hash(documents: &[String]) -> String {
    let mut h = Sha256::new();
    for d in documents {
        h.update(d.as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_documents(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

/// Cuts `count` prompts of `len` tokens, walking the documents round-robin and
/// moving one prompt length further into each document on every pass.
pub fn make_prompts(
    vocab: &Vocabulary,
    documents: &[String],
    count: usize,
    len: usize,
) -> Result<Vec<Vec<TokenId>>> {
    let encoded: Vec<Vec<TokenId>> = documents.iter().map(|d| vocab.encode(d)).collect();
    let mut prompts = Vec::with_capacity(count);
    let mut pass = 0;
    while prompts.len() < count {
        let before = prompts.len();
        for doc in &encoded {
            if prompts.len() == count {
                break;
            }
            let start = pass * len;
            if doc.len() >= start + len {
                prompts.push(doc[start..start + len].to_vec());
            }
        }
        if prompts.len() == before {
            return Err(Error::Config(format!(
                "documents only yield {before} prompts of length {len}, {count} requested"
            )));
        }
        pass += 1;
    }
    Ok(prompts)
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn ensure_out(&self) -> Result<()> {
        fs::create_dir_all(&self.cfg.out).map_err(|e| Error::io(&self.cfg.out, e))
    }

    /// Generates (planted) or copies (file) the corpus into the output directory.
    pub fn gen_corpus(&self) -> Result<Vec<String>> {
        self.ensure_out()?;
        let documents = match &self.cfg.corpus.source {
            CorpusSource::Planted(spec) => {
                gen_corpus(spec, self.cfg.corpus.mode, self.cfg.seed)?.documents
            }
            CorpusSource::File { path } => parse_documents(&read(path)?),
        };
        if documents.is_empty() {
            return Err(Error::Config("corpus has no documents".into()));
        }
        let mut text = documents.join("\n");
        text.push('\n');
        write(&self.path(CORPUS_FILE), &text)?;
        Ok(documents)
    }

    pub fn load_corpus(&self) -> Result<Vec<String>> {
        let docs = parse_documents(&read(&self.path(CORPUS_FILE))?);
        if docs.is_empty() {
            return Err(Error::Config("corpus has no documents".into()));
        }
        Ok(docs)
    }

    /// Leading documents train the models; the trailing share is held out.
    pub fn split<'a>(&self, documents: &'a [String]) -> (&'a [String], &'a [String]) {
        let held = (documents.len() as f64 * self.cfg.corpus.holdout_fraction).round() as usize;
        let held = held.min(documents.len().saturating_sub(1));
        documents.split_at(documents.len() - held)
    }

    pub fn train_models(&self) -> Result<Models> {
        self.ensure_out()?;
        let documents = self.load_corpus()?;
        let vocab = Vocabulary::build(&documents, self.cfg.corpus.mode)?;
        let (train, _) = self.split(&documents);
        let m = &self.cfg.model;
        let target = NGramModel::train_text(&vocab, train, m.order, m.smoothing)?;

        let mut draft_docs: Vec<&String> = train.iter().collect();
        if m.draft_fraction < 1.0 {
            let keep = ((train.len() as f64 * m.draft_fraction).ceil() as usize).max(1);
            let mut rng = stream(self.cfg.seed, "draft-perturbation", &[]);
            draft_docs.shuffle(&mut rng);
            draft_docs.truncate(keep);
        }
        let draft_base = NGramModel::train_text(
            &vocab,
            &draft_docs,
            m.draft_order.unwrap_or(m.order),
            m.smoothing,
        )?;
        write(&self.path(TARGET_FILE), &target.to_text())?;
        write(&self.path(DRAFT_FILE), &draft_base.to_text())?;
        let draft = PerturbedDraftModel::new(draft_base, m.draft_temperature, m.draft_epsilon)?;
        Ok(Models { target, draft })
    }

    pub fn load_models(&self) -> Result<Models> {
        let target = NGramModel::from_text(&read(&self.path(TARGET_FILE))?)?;
        let base = NGramModel::from_text(&read(&self.path(DRAFT_FILE))?)?;
        if base.vocab() != target.vocab() {
            return Err(Error::Config("target and draft vocabularies differ".into()));
        }
        let draft = PerturbedDraftModel::new(
            base,
            self.cfg.model.draft_temperature,
            self.cfg.model.draft_epsilon,
        )?;
        Ok(Models { target, draft })
    }

    pub fn calibration_prompts(&self, models: &Models) -> Result<Vec<Vec<TokenId>>> {
        let documents = self.load_corpus()?;
        let (train, _) = self.split(&documents);
        let c = &self.cfg.calibration;
        make_prompts(models.vocab(), train, c.prompts, c.prompt_len)
    }

    pub fn evaluation_prompts(&self, models: &Models) -> Result<Vec<Vec<TokenId>>> {
        let documents = self.load_corpus()?;
        let (train, held) = self.split(&documents);
        let source = if held.is_empty() { train } else { held };
        let e = &self.cfg.evaluation;
        make_prompts(models.vocab(), source, e.prompts, e.prompt_len)
    }

    /// Runs the baseline on calibration prompts and fits the entropy bins.
    pub fn calibrate(&self, models: &Models) -> Result<BinningModel> {
        let c = &self.cfg.calibration;
        let decoding = HeteroConfig {
            max_new_tokens: c.new_tokens,
            ..self.cfg.decoding.clone()
        };
        let prompts = self.calibration_prompts(models)?;
        let arm = run_arm(
            &models.target,
            &models.draft,
            &prompts,
            &decoding,
            Policy::Baseline { annotate: None },
            &self.cfg.cost,
        )?;
        let records = arm.records();
        write_iterations_csv(&self.path(CALIBRATION_FILE), &records)?;
        let samples = collect_calibration(&records, decoding.depth, c.filter, c.target)?;
        let distinct = distinct_x(&samples);
        if distinct < c.min_distinct {
            return Err(Error::Calibration {
                msg: format!("need at least {} distinct entropies", c.min_distinct),
                iterations: records.len(),
                kept: samples.len(),
                distinct_x: distinct,
            });
        }
        let mut bins = train_cart(&samples, c.tree_depth, c.loss)?;
        bins.meta = BinningMeta {
            entropy_k: decoding.entropy_k(),
            base_depth: decoding.depth,
            filter: c.filter.to_string(),
            target: c.target.to_string(),
            corpus_hash: corpus_hash(&self.load_corpus()?),
        };
        bins.save(&self.path(BINS_FILE))?;
        Ok(bins)
    }

    pub fn load_bins(&self) -> Result<BinningModel> {
        let bins = BinningModel::load(&self.path(BINS_FILE))?;
        if bins.meta.entropy_k != self.cfg.decoding.entropy_k()
            || bins.meta.base_depth != self.cfg.decoding.depth
        {
            return Err(Error::Config(format!(
                "bins were calibrated for entropy_k={} depth={}, config has entropy_k={} depth={}",
                bins.meta.entropy_k,
                bins.meta.base_depth,
                self.cfg.decoding.entropy_k(),
                self.cfg.decoding.depth
            )));
        }
        Ok(bins)
    }

    /// Decodes the evaluation prompts with one arm and writes its records and summary.
    pub fn run(&self, models: &Models, bins: &BinningModel, arm: Arm) -> Result<ArmResult> {
        let prompts = self.evaluation_prompts(models)?;
        let policy = match arm {
            Arm::Baseline => Policy::Baseline {
                annotate: Some(bins),
            },
            Arm::Heterospec => Policy::HeteroSpec(bins),
        };
        let result = run_arm(
            &models.target,
            &models.draft,
            &prompts,
            &self.cfg.decoding,
            policy,
            &self.cfg.cost,
        )?;
        let records = result.records();
        check_accounting(&records, &result.summary)?;
        write_iterations_csv(&self.path(&arm.iterations_file()), &records)?;
        write_json(
            &self.path(&format!("summary_{}.json", arm.name())),
            &result.summary,
        )?;
        Ok(result)
    }

    /// Paired runs with an output identity check, plus the alpha sweep.
    pub fn compare(&self, models: &Models, bins: &BinningModel) -> Result<CompareReport> {
        let prompts = self.evaluation_prompts(models)?;
        let cmp = run_comparison(
            &models.target,
            &models.draft,
            &prompts,
            &self.cfg.decoding,
            bins,
            &self.cfg.cost,
        )?;
        let base_records = cmp.baseline.records();
        let het_records = cmp.heterospec.records();
        check_accounting(&base_records, &cmp.baseline.summary)?;
        check_accounting(&het_records, &cmp.heterospec.summary)?;
        write_iterations_csv(&self.path(&Arm::Baseline.iterations_file()), &base_records)?;
        write_iterations_csv(&self.path(&Arm::Heterospec.iterations_file()), &het_records)?;

        let mut alpha_sweep = Vec::new();
        for alpha in self.cfg.alpha_sweep() {
            let decoding = HeteroConfig {
                alpha: Some(alpha),
                ..self.cfg.decoding.clone()
            };
            let arm = run_arm(
                &models.target,
                &models.draft,
                &prompts,
                &decoding,
                Policy::HeteroSpec(bins),
                &self.cfg.cost,
            )?;
            alpha_sweep.push(SweepRow {
                alpha,
                calls: arm.summary.calls,
                tokens: arm.summary.tokens,
                tau: arm.summary.tau,
            });
        }

        let report = CompareReport {
            rows: vec![
                ArmRow::new(Arm::Baseline.name(), &cmp.baseline.summary),
                ArmRow::new(Arm::Heterospec.name(), &cmp.heterospec.summary),
            ],
            baseline_tcr: tcr_quantiles(&base_records),
            heterospec_tcr: tcr_quantiles(&het_records),
            baseline_tcr_buckets: accepted_len_by_tcr_quartile(&base_records),
            alpha_sweep,
            outputs_identical: true,
        };
        write_rows(&self.path("compare.csv"), &report.rows)?;
        write_rows(&self.path("alpha_sweep.csv"), &report.alpha_sweep)?;
        write_json(&self.path("compare.json"), &report)?;
        Ok(report)
    }

    /// Derived tables from whichever iteration files exist.
    pub fn report(&self) -> Result<Vec<PathBuf>> {
        let mut hist = Vec::new();
        let mut buckets = Vec::new();
        let mut occupancy = Vec::new();
        for arm in [Arm::Baseline, Arm::Heterospec] {
            let path = self.path(&arm.iterations_file());
            if !path.exists() {
                continue;
            }
            let records = read_iterations_csv(&path)?;
            let summary = crate::metrics::summarize(&records, &self.cfg.cost)?;
            hist.extend(
                summary
                    .tcr_histogram
                    .iter()
                    .map(|(&tcr, &count)| HistogramRow {
                        arm: arm.name().into(),
                        tcr,
                        count,
                    }),
            );
            buckets.extend(
                accepted_len_by_tcr_quartile(&records)
                    .into_iter()
                    .map(|b| (arm.name(), b)),
            );
            occupancy.extend(summary.per_bin.iter().map(|b| OccupancyRow {
                arm: arm.name().into(),
                bin: b.bin,
                iterations: b.iterations,
                mean_accepted_len: b.mean_accepted_len,
            }));
        }
        if hist.is_empty() && occupancy.is_empty() {
            return Err(Error::MissingRecords(format!(
                "no iteration files in {}",
                self.cfg.out.display()
            )));
        }
        #[derive(Serialize)]
        struct BucketOut<'a> {
            arm: &'a str,
            bucket: usize,
            iterations: usize,
            mean_accepted_len: f64,
        }
        let buckets: Vec<BucketOut> = buckets
            .iter()
            .map(|(arm, b)| BucketOut {
                arm,
                bucket: b.bucket,
                iterations: b.iterations,
                mean_accepted_len: b.mean_accepted_len,
            })
            .collect();
        let written = vec![
            self.path("tcr_histogram.csv"),
            self.path("tcr_vs_accepted.csv"),
            self.path("bin_occupancy.csv"),
        ];
        write_rows(&written[0], &hist)?;
        write_rows(&written[1], &buckets)?;
        write_rows(&written[2], &occupancy)?;
        Ok(written)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<CompareReport> {
        self.gen_corpus()?;
        let models = self.train_models()?;
        let bins = self.calibrate(&models)?;
        let report = self.compare(&models, &bins)?;
        self.report()?;
        Ok(report)
    }
}
