//! End-to-end orchestration with deterministic artifact output.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::cohorts::{self, CohortSelection, Group, IndicatorCombination, TopPercents};
use crate::corpus::{self, hex_digest, Corpus, DocType, DropReason, IngestConfig, IngestReport, InputFormat};
use crate::error::{Error, Result};
use crate::indicators::{self, AuthorFieldIndicators};
use crate::percentiles::{self, PercentileTable};
use crate::quartiles::{self, QuartileTable};
use crate::synthgen::{self, SynthConfig};
use crate::validation::{self, AuthorPostWindowPerformance, ValidationSummary};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "TALENTSCAN_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub first_year: i32,
    pub last_year: i32,
    pub doc_types: Vec<DocType>,
    pub skip_malformed: bool,
    pub window_length: i32,
    pub q1_threshold: f64,
    pub substitution_target_years: Vec<i32>,
    pub substitution_source_year: i32,
    pub performance_end_year: i32,
    pub validation_range: (i32, i32),
    pub talent_range: (i32, i32),
    pub top_percents: TopPercents,
    pub export_combination: IndicatorCombination,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            first_year: 1999,
            last_year: 2020,
            doc_types: DocType::ALL.to_vec(),
            skip_malformed: false,
            window_length: indicators::DEFAULT_WINDOW_LENGTH,
            q1_threshold: quartiles::DEFAULT_Q1_THRESHOLD,
            substitution_target_years: vec![2019, 2020],
            substitution_source_year: 2018,
            performance_end_year: validation::DEFAULT_END_YEAR,
            validation_range: (1999, 2003),
            talent_range: (2007, 2011),
            top_percents: TopPercents::default(),
            export_combination: IndicatorCombination::O_Q1,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    /// Loads a TOML config; the name `paper_defaults` yields the defaults.
    pub fn load(path_or_name: &str) -> Result<Self> {
        if path_or_name == "paper_defaults" {
            return Ok(PipelineConfig::default());
        }
        let text = fs::read_to_string(path_or_name).map_err(|e| Error::io(path_or_name, e))?;
        toml::from_str(&text).map_err(|e| Error::invalid_param("config", e.to_string()))
    }

    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            first_year: self.first_year,
            last_year: self.last_year,
            doc_types: self.doc_types.clone(),
            skip_malformed: self.skip_malformed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 1 {
            return Err(Error::invalid_param("window_length", "must be at least 1"));
        }
        if !self.q1_threshold.is_finite() {
            return Err(Error::invalid_param("q1_threshold", "must be finite"));
        }
        if self.doc_types.is_empty() {
            return Err(Error::invalid_param("doc_types", "at least one document type"));
        }
        self.top_percents.validate()
    }
}

/// Where the records come from.
#[derive(Debug, Clone)]
pub enum InputSource {
    Files(Vec<PathBuf>),
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Percentiles,
    Quartiles,
    Indicators,
    Cohorts,
    Validate,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Percentiles,
        Stage::Quartiles,
        Stage::Indicators,
        Stage::Cohorts,
        Stage::Validate,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Percentiles => "percentiles",
            Stage::Quartiles => "quartiles",
            Stage::Indicators => "indicators",
            Stage::Cohorts => "cohorts",
            Stage::Validate => "validate",
            Stage::Export => "export",
        }
    }

    /// Files this stage writes.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["ingest_report.csv"],
            Stage::Percentiles => &["percentiles.csv"],
            Stage::Quartiles => &["quartiles.csv"],
            Stage::Indicators => &["indicators.csv"],
            Stage::Cohorts => &["cohorts.csv", "thresholds.csv", "talent_thresholds.csv"],
            Stage::Validate => &[
                "report_counts.csv",
                "report_papers.csv",
                "report_percentiles.csv",
                "summary.txt",
            ],
            Stage::Export => &["talent_dataset.csv"],
        }
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

/// Every intermediate result of a run, up to the requested stage.
pub struct Analysis {
    pub input_digest: String,
    pub corpus: Corpus,
    pub ingest_report: IngestReport,
    pub percentiles: Option<PercentileTable>,
    pub quartiles: Option<QuartileTable>,
    pub first_years: Vec<i32>,
    pub indicators: Option<Vec<AuthorFieldIndicators>>,
    pub validation_cohort: Option<CohortSelection>,
    pub talent_cohort: Option<CohortSelection>,
    pub performances: Option<Vec<Option<AuthorPostWindowPerformance>>>,
    pub summary: Option<ValidationSummary>,
    /// Wall-clock seconds per stage, in execution order.
    pub timings: Vec<(Stage, f64)>,
}

fn ingest_files(paths: &[PathBuf], config: &IngestConfig) -> Result<(Corpus, IngestReport, String)> {
    if paths.is_empty() {
        return Err(Error::invalid_param("inputs", "no input files"));
    }
    let mut hasher = Sha256::new();
    let mut items: Vec<corpus::SourceItem> = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = HashingReader {
            inner: io::BufReader::new(file),
            hasher,
        };
        match InputFormat::from_path(path) {
            InputFormat::Jsonl => items.extend(corpus::read_jsonl(&mut reader)),
            InputFormat::Csv => items.extend(corpus::read_csv(&mut reader)?),
        }
        hasher = reader.hasher;
    }
    let (corpus, report) = corpus::ingest(items, config)?;
    Ok((corpus, report, hex_digest(hasher)))
}

fn ingest_synthetic(synth: &SynthConfig, config: &IngestConfig) -> Result<(Corpus, IngestReport, String)> {
    let records = synthgen::generate(synth)?;
    let mut hasher = Sha256::new();
    let mut line = Vec::new();
    for r in &records {
        line.clear();
        serde_json::to_writer(&mut line, r).expect("records serialize");
        line.push(b'\n');
        hasher.update(&line);
    }
    let items = records.into_iter().enumerate().map(|(i, r)| (i + 1, Ok(r)));
    let (corpus, report) = corpus::ingest(items, config)?;
    Ok((corpus, report, hex_digest(hasher)))
}

fn timed<T>(timings: &mut Vec<(Stage, f64)>, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage.name()))?;
    timings.push((stage, start.elapsed().as_secs_f64()));
    Ok(out)
}

/// Runs every stage up to and including `upto`.
pub fn analyze(input: &InputSource, config: &PipelineConfig, upto: Stage) -> Result<Analysis> {
    config.validate()?;
    let mut timings = Vec::new();
    let ingest_cfg = config.ingest_config();
    let (corpus, ingest_report, input_digest) = timed(&mut timings, Stage::Ingest, || match input {
        InputSource::Files(paths) => ingest_files(paths, &ingest_cfg),
        InputSource::Synthetic(synth) => ingest_synthetic(synth, &ingest_cfg),
    })?;
    let mut a = Analysis {
        input_digest,
        corpus,
        ingest_report,
        percentiles: None,
        quartiles: None,
        first_years: Vec::new(),
        indicators: None,
        validation_cohort: None,
        talent_cohort: None,
        performances: None,
        summary: None,
        timings,
    };
    if upto == Stage::Ingest {
        return Ok(a);
    }

    let pct = timed(&mut a.timings, Stage::Percentiles, || {
        Ok(percentiles::compute_paper_percentiles(&a.corpus))
    })?;
    a.percentiles = Some(pct);
    let pct = a.percentiles.as_ref().expect("just set");
    if upto == Stage::Percentiles {
        return Ok(a);
    }

    let q = timed(&mut a.timings, Stage::Quartiles, || {
        let raw = quartiles::assign_q1(pct, &a.corpus, config.q1_threshold);
        Ok(quartiles::apply_recent_year_substitution(
            &raw,
            &config.substitution_target_years,
            config.substitution_source_year,
        ))
    })?;
    a.quartiles = Some(q);
    if upto == Stage::Quartiles {
        return Ok(a);
    }

    let (first_years, ind) = timed(&mut a.timings, Stage::Indicators, || {
        let first_years = indicators::first_paper_years(&a.corpus);
        let ind = indicators::compute_window_indicators(
            &a.corpus,
            a.quartiles.as_ref().expect("computed"),
            &first_years,
            config.window_length,
        );
        Ok((first_years, ind))
    })?;
    a.first_years = first_years;
    a.indicators = Some(ind);
    if upto == Stage::Indicators {
        return Ok(a);
    }

    let (val, talent) = timed(&mut a.timings, Stage::Cohorts, || {
        let ind = a.indicators.as_deref().expect("computed");
        let select = |range| -> Result<CohortSelection> {
            let cohort = cohorts::build_cohort(&a.corpus, &a.first_years, range, config.window_length)?;
            Ok(cohorts::select_cohort(&cohort, ind, &config.top_percents))
        };
        Ok((select(config.validation_range)?, select(config.talent_range)?))
    })?;
    a.validation_cohort = Some(val);
    a.talent_cohort = Some(talent);
    if upto == Stage::Cohorts {
        return Ok(a);
    }

    let (perf, summary) = timed(&mut a.timings, Stage::Validate, || {
        let perf = validation::all_post_window_performance(
            &a.corpus,
            a.percentiles.as_ref().expect("computed"),
            &a.first_years,
            config.window_length,
            config.performance_end_year,
        );
        let summary = validation::summarize(&a.validation_cohort.as_ref().expect("computed").assignments, &perf);
        Ok((perf, summary))
    })?;
    a.performances = Some(perf);
    a.summary = Some(summary);
    Ok(a)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Talent rows of the export combination: `author_id,field,first_paper_year,O,Q1,C`.
pub fn export_talent_dataset(
    corpus: &Corpus,
    talent: &CohortSelection,
    indicators: &[AuthorFieldIndicators],
    combination: IndicatorCombination,
) -> Result<Vec<u8>> {
    let rows = talent_rows(talent, indicators, combination);
    csv_bytes(|buf| indicators::write_indicators_csv(corpus, rows, buf))
}

fn talent_rows<'a>(
    talent: &CohortSelection,
    indicators: &'a [AuthorFieldIndicators],
    combination: IndicatorCombination,
) -> Vec<&'a AuthorFieldIndicators> {
    talent
        .assignments
        .iter()
        .filter(|a| a.combination == combination && a.group == Group::Talent)
        .map(|a| {
            let pos = indicators
                .binary_search_by(|e| (e.author, e.field).cmp(&(a.author, a.field)))
                .expect("assignments come from indicator rows");
            &indicators[pos]
        })
        .collect()
}

/// Renders the files of the given stages.
pub fn render(a: &Analysis, config: &PipelineConfig, stages: &[Stage]) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut files = BTreeMap::new();
    let missing = |stage: Stage| Error::invalid_param("stage", format!("{} was not computed", stage.name()));
    for &stage in stages {
        match stage {
            Stage::Ingest => {
                files.insert(
                    "ingest_report.csv".into(),
                    csv_bytes(|b| a.ingest_report.write_csv(b))?,
                );
            }
            Stage::Percentiles => {
                let p = a.percentiles.as_ref().ok_or_else(|| missing(stage))?;
                files.insert("percentiles.csv".into(), csv_bytes(|b| p.write_csv(&a.corpus, b))?);
            }
            Stage::Quartiles => {
                let q = a.quartiles.as_ref().ok_or_else(|| missing(stage))?;
                files.insert("quartiles.csv".into(), csv_bytes(|b| q.write_csv(&a.corpus, b))?);
            }
            Stage::Indicators => {
                let ind = a.indicators.as_ref().ok_or_else(|| missing(stage))?;
                files.insert(
                    "indicators.csv".into(),
                    csv_bytes(|b| indicators::write_indicators_csv(&a.corpus, ind, b))?,
                );
            }
            Stage::Cohorts => {
                let v = a.validation_cohort.as_ref().ok_or_else(|| missing(stage))?;
                let t = a.talent_cohort.as_ref().ok_or_else(|| missing(stage))?;
                files.insert(
                    "cohorts.csv".into(),
                    csv_bytes(|b| cohorts::write_assignments_csv(&a.corpus, &v.assignments, b))?,
                );
                files.insert(
                    "thresholds.csv".into(),
                    csv_bytes(|b| cohorts::write_thresholds_csv(&v.thresholds, b))?,
                );
                files.insert(
                    "talent_thresholds.csv".into(),
                    csv_bytes(|b| cohorts::write_thresholds_csv(&t.thresholds, b))?,
                );
            }
            Stage::Validate => {
                let s = a.summary.as_ref().ok_or_else(|| missing(stage))?;
                files.insert("report_counts.csv".into(), csv_bytes(|b| validation::write_counts_csv(s, b))?);
                files.insert("report_papers.csv".into(), csv_bytes(|b| validation::write_papers_csv(s, b))?);
                files.insert(
                    "report_percentiles.csv".into(),
                    csv_bytes(|b| validation::write_percentiles_csv(s, b))?,
                );
                files.insert("summary.txt".into(), validation::summary_text(s).into_bytes());
            }
            Stage::Export => {
                let t = a.talent_cohort.as_ref().ok_or_else(|| missing(stage))?;
                let ind = a.indicators.as_ref().ok_or_else(|| missing(stage))?;
                files.insert(
                    "talent_dataset.csv".into(),
                    export_talent_dataset(&a.corpus, t, ind, config.export_combination)?,
                );
            }
        }
    }
    Ok(files)
}

fn row_counts(a: &Analysis, config: &PipelineConfig) -> serde_json::Value {
    let mut counts = serde_json::Map::new();
    let r = &a.ingest_report;
    let mut dropped = serde_json::Map::new();
    for reason in DropReason::ALL {
        dropped.insert(reason.as_str().into(), r.dropped_for(reason).into());
    }
    counts.insert(
        "ingest".into(),
        json!({ "read": r.read, "kept": r.kept, "dropped": dropped, "authors": a.corpus.n_authors() }),
    );
    if let Some(p) = &a.percentiles {
        counts.insert(
            "percentiles".into(),
            json!({ "observations": p.len(), "groups": a.corpus.by_field_year().len() }),
        );
    }
    if let Some(q) = &a.quartiles {
        let q1 = q.iter().filter(|e| e.is_q1).count();
        let substituted = q.iter().filter(|e| e.source_year != e.year).count();
        counts.insert(
            "quartiles".into(),
            json!({ "journal_years": q.len(), "q1": q1, "substituted": substituted }),
        );
    }
    if let Some(ind) = &a.indicators {
        counts.insert("indicators".into(), json!({ "author_fields": ind.len() }));
    }
    if let (Some(v), Some(t)) = (&a.validation_cohort, &a.talent_cohort) {
        counts.insert(
            "cohorts".into(),
            json!({
                "validation_fields": v.thresholds.len(),
                "validation_assignments": v.assignments.len(),
                "talent_fields": t.thresholds.len(),
                "talent_assignments": t.assignments.len(),
            }),
        );
    }
    if let Some(perf) = &a.performances {
        counts.insert(
            "validate".into(),
            json!({ "authors_with_postwindow": perf.iter().filter(|p| p.is_some()).count() }),
        );
    }
    if let (Some(t), Some(ind)) = (&a.talent_cohort, &a.indicators) {
        let rows = talent_rows(t, ind, config.export_combination);
        let mut per_year: BTreeMap<i32, std::collections::BTreeSet<u32>> = BTreeMap::new();
        for e in &rows {
            per_year.entry(e.first_paper_year).or_default().insert(e.author.0);
        }
        let by_year: serde_json::Map<String, serde_json::Value> = per_year
            .into_iter()
            .map(|(y, s)| (y.to_string(), s.len().into()))
            .collect();
        let distinct: std::collections::BTreeSet<u32> = rows.iter().map(|e| e.author.0).collect();
        counts.insert(
            "export".into(),
            json!({ "rows": rows.len(), "authors": distinct.len(), "authors_by_first_year": by_year }),
        );
    }
    serde_json::Value::Object(counts)
}

/// Manifest of a run: config echo, input digest, row counts and file digests.
/// Contains nothing that varies between identical runs.
pub fn manifest(
    a: &Analysis,
    config: &PipelineConfig,
    input: &InputSource,
    stages: &[Stage],
    files: &BTreeMap<String, Vec<u8>>,
) -> Vec<u8> {
    let outputs: Vec<serde_json::Value> = files
        .iter()
        .map(|(name, bytes)| {
            json!({ "file": name, "bytes": bytes.len(), "sha256": hex_digest(Sha256::new_with_prefix(bytes)) })
        })
        .collect();
    let synthetic = match input {
        InputSource::Synthetic(s) => serde_json::to_value(s).expect("config serializes"),
        InputSource::Files(_) => serde_json::Value::Null,
    };
    let doc = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "stages": stages.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "config": config,
        "synthetic": synthetic,
        "input_sha256": a.input_digest,
        "corpus_sha256": a.corpus.digest(),
        "row_counts": row_counts(a, config),
        "outputs": outputs,
        "volatile": ["timings.json"],
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("manifest serializes");
    bytes.push(b'\n');
    bytes
}

fn timings_json(a: &Analysis) -> Vec<u8> {
    let stages: Vec<serde_json::Value> = a
        .timings
        .iter()
        .map(|(s, secs)| json!({ "stage": s.name(), "seconds": secs }))
        .collect();
    let mut bytes = serde_json::to_vec_pretty(&json!({ "wall_clock": stages })).expect("serializes");
    bytes.push(b'\n');
    bytes
}

/// Writes files through a staging directory; nothing reaches `dir` unless
/// every file was written.
fn commit(dir: &Path, tag: &str, files: &BTreeMap<String, Vec<u8>>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let staging = dir.join(format!(".staging-{tag}-{}", std::process::id()));
    let result = (|| -> Result<()> {
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        for (name, bytes) in files {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        }
        for name in files.keys() {
            let to = dir.join(name);
            fs::rename(staging.join(name), &to).map_err(|e| Error::io(&to, e))?;
        }
        Ok(())
    })();
    let _ = fs::remove_dir_all(&staging);
    result
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub manifest_sha256: String,
    /// Deterministic artifacts (manifest included) and their digests.
    pub files: BTreeMap<String, String>,
}

fn run_stages(input: &InputSource, config: &PipelineConfig, stages: &[Stage], manifest_name: &str) -> Result<RunOutcome> {
    let last = *stages.iter().max().expect("at least one stage");
    let upto = stages
        .iter()
        .map(|&s| if s == Stage::Export { Stage::Cohorts } else { s })
        .max()
        .expect("at least one stage");
    let a = analyze(input, config, upto)?;
    let mut files = render(&a, config, stages).map_err(|e| e.in_stage(last.name()))?;
    let manifest_bytes = manifest(&a, config, input, stages, &files);
    let manifest_sha256 = hex_digest(Sha256::new_with_prefix(&manifest_bytes));
    files.insert(manifest_name.to_string(), manifest_bytes);
    let digests = files
        .iter()
        .map(|(k, v)| (k.clone(), hex_digest(Sha256::new_with_prefix(v))))
        .collect();
    files.insert("timings.json".into(), timings_json(&a));
    commit(&config.output_dir, manifest_name, &files)?;
    Ok(RunOutcome {
        output_dir: config.output_dir.clone(),
        manifest_sha256,
        files: digests,
    })
}

/// Runs the whole pipeline and writes every artifact plus `manifest.json`.
pub fn run_pipeline(input: &InputSource, config: &PipelineConfig) -> Result<RunOutcome> {
    run_stages(input, config, &Stage::ALL, "manifest.json")
}

/// Computes everything `stage` depends on and writes only that stage's files,
/// with a `manifest_<stage>.json`.
pub fn run_stage(input: &InputSource, config: &PipelineConfig, stage: Stage) -> Result<RunOutcome> {
    run_stages(input, config, &[stage], &format!("manifest_{}.json", stage.name()))
}

/// Writes the synthetic record stream as JSON lines.
pub fn write_synthetic(synth: &SynthConfig, path: &Path) -> Result<usize> {
    let records = synthgen::generate(synth)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = io::BufWriter::new(file);
    synthgen::write_jsonl(&records, &mut w).map_err(|e| Error::io(path, e))?;
    io::Write::flush(&mut w).map_err(|e| Error::io(path, e))?;
    Ok(records.len())
}
