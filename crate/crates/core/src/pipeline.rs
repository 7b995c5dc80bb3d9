//! Stage functions behind the command line and the end-to-end runner.
//!
//! Layout of an output directory written by [`run_pipeline`]:
//!
//! ```text
//! citations.jsonl      one CitationInstance per line
//! matrix/              triplets.txt, rows.txt, cols.txt, meta.json
//! models/kNN/          header.json, W.f64, H.f64, rows.txt, cols.txt
//! bush.svg
//! report.html
//! growth.csv
//! run.json             resolved configuration and per-stage timings
//! .stages/<stage>      input fingerprint of the last completed run
//! ```
//!
//! A stage is skipped when its outputs exist and the SHA-256 fingerprint of
//! its inputs and settings matches the stored one.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bush::{build_bush, render_bush_svg, BushConfig, RenderStyle};
use crate::dump::{open_dump_stream, Compression, DumpDiagnostics};
use crate::error::{Error, Result};
use crate::lexicon::JournalLexicon;
use crate::matrix::{BuildDiagnostics, MatrixBuilder, MatrixStats, SparseCountMatrix};
use crate::nmf::{load_models, model_dir_name, save_models, sweep_model_sizes, NmfConfig, NmfModel};
use crate::report::{render_html_report, summarize_dump, write_growth_csv, DumpSummary};
use crate::template::{extract_citations_counted, CitationInstance, ExtractDiagnostics};

pub const CITATIONS_FILE: &str = "citations.jsonl";
pub const MATRIX_DIR: &str = "matrix";
pub const MODELS_DIR: &str = "models";
pub const BUSH_FILE: &str = "bush.svg";
pub const REPORT_FILE: &str = "report.html";
pub const GROWTH_FILE: &str = "growth.csv";
pub const RUN_FILE: &str = "run.json";
pub const MATRIX_META_FILE: &str = "meta.json";
const STAGE_DIR: &str = ".stages";

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ExtractSummary {
    pub dump: DumpDiagnostics,
    pub extract: ExtractDiagnostics,
}

/// Streams a dump and writes one JSON object per citation.
pub fn extract_to_jsonl(dump: &Path, compression: Compression, out: &Path) -> Result<ExtractSummary> {
    let mut stream = open_dump_stream(dump, compression)?;
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut writer = BufWriter::new(file);
    let mut extract = ExtractDiagnostics::default();
    while let Some(page) = stream.next_page()? {
        for citation in extract_citations_counted(&page, &mut extract) {
            let line = serde_json::to_string(&citation).expect("citation serializes");
            writeln!(writer, "{line}").map_err(|e| Error::io(out, e))?;
        }
    }
    writer.flush().map_err(|e| Error::io(out, e))?;
    Ok(ExtractSummary {
        dump: stream.diagnostics(),
        extract,
    })
}

/// Reads a citations JSON-lines file, calling `f` for each record.
pub fn for_each_citation(path: &Path, mut f: impl FnMut(CitationInstance)) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let citation: CitationInstance =
            serde_json::from_str(&line).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        f(citation);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub dump_id: String,
    pub stats: MatrixStats,
    pub build: BuildDiagnostics,
}

/// Builds the count matrix from a citations file and saves it with a
/// `meta.json` sidecar.
pub fn build_matrix_dir(
    citations: &Path,
    lexicon: &Path,
    out_dir: &Path,
    dump_id: &str,
) -> Result<MatrixMeta> {
    let lexicon = JournalLexicon::load(lexicon)?;
    let mut builder = MatrixBuilder::new(&lexicon);
    for_each_citation(citations, |c| builder.push(&c))?;
    let build = builder.diagnostics();
    let matrix = builder.finish();
    matrix.save(out_dir)?;
    let meta = MatrixMeta {
        dump_id: dump_id.to_string(),
        stats: matrix.stats(),
        build,
    };
    write_json(&out_dir.join(MATRIX_META_FILE), &meta)?;
    Ok(meta)
}

/// Dump id stored next to a matrix, falling back to the directory name.
pub fn matrix_dump_id(dir: &Path) -> String {
    fs::read_to_string(dir.join(MATRIX_META_FILE))
        .ok()
        .and_then(|s| serde_json::from_str::<MatrixMeta>(&s).ok())
        .map(|m| m.dump_id)
        .unwrap_or_else(|| {
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
}

#[derive(Debug, Clone)]
pub struct NmfStageOptions {
    pub exclude: Vec<String>,
    pub k_min: usize,
    pub k_max: usize,
    pub config: NmfConfig,
    pub seed: u64,
    pub jobs: Option<usize>,
}

pub struct NmfStageOutput {
    pub models: Vec<NmfModel>,
    /// Excluded names that matched no column.
    pub missing_exclusions: Vec<String>,
    pub shape: (usize, usize),
}

/// Applies the exclusion list, sweeps k and writes `kNN/` directories into
/// `models_dir`, replacing any models already there.
pub fn nmf_dir(matrix_dir: &Path, models_dir: &Path, opts: &NmfStageOptions) -> Result<NmfStageOutput> {
    let matrix = SparseCountMatrix::load(matrix_dir)?;
    let (reduced, missing_exclusions) = matrix.exclude_journals(&opts.exclude);
    let csr = reduced.to_csr();
    let models = sweep_model_sizes(&csr, opts.k_min..=opts.k_max, &opts.config, opts.seed, opts.jobs)?;
    clear_model_dirs(models_dir)?;
    save_models(&models, models_dir, reduced.row_labels(), reduced.col_labels())?;
    Ok(NmfStageOutput {
        models,
        missing_exclusions,
        shape: reduced.shape(),
    })
}

fn clear_model_dirs(dir: &Path) -> Result<()> {
    let Ok(entries) = fs::read_dir(dir) else {
        return Ok(());
    };
    for entry in entries.flatten() {
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_model = name
            .strip_prefix('k')
            .and_then(|s| s.parse::<usize>().ok())
            .is_some_and(|k| model_dir_name(k) == name);
        if is_model && entry.path().is_dir() {
            fs::remove_dir_all(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

pub fn bush_file(models_dir: &Path, out: &Path, config: &BushConfig, style: &RenderStyle) -> Result<()> {
    let stored = load_models(models_dir)?;
    let row_labels = stored.first().map(|s| s.row_labels.clone()).unwrap_or_default();
    if stored.iter().any(|s| s.row_labels != row_labels) {
        return Err(Error::AxisMismatch);
    }
    let models: Vec<NmfModel> = stored.into_iter().map(|s| s.model).collect();
    let bush = build_bush(&models, &row_labels, config)?;
    let svg = render_bush_svg(&bush, style);
    fs::write(out, svg).map_err(|e| Error::io(out, e))
}

/// Renders the HTML page from the first matrix directory and the models;
/// every matrix directory contributes one row to the growth table.
pub fn report_files(
    matrix_dirs: &[PathBuf],
    models_dir: Option<&Path>,
    out_html: &Path,
    growth_csv: Option<&Path>,
    top_n: usize,
) -> Result<()> {
    let mut summaries: Vec<DumpSummary> = Vec::new();
    let mut primary: Option<SparseCountMatrix> = None;
    for dir in matrix_dirs {
        let m = SparseCountMatrix::load(dir)?;
        summaries.push(summarize_dump(&m, &matrix_dump_id(dir)));
        primary.get_or_insert(m);
    }
    let models = match models_dir {
        Some(d) => load_models(d)?,
        None => Vec::new(),
    };
    let html = render_html_report(&models, &primary.unwrap_or_default(), &summaries, top_n);
    fs::write(out_html, html).map_err(|e| Error::io(out_html, e))?;
    if let Some(csv_path) = growth_csv {
        fs::write(csv_path, write_growth_csv(&summaries)).map_err(|e| Error::io(csv_path, e))?;
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fully resolved settings of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dump_path: PathBuf,
    pub lexicon_path: PathBuf,
    pub output_dir: PathBuf,
    pub compression: Compression,
    /// Defaults to the dump file name without its extensions.
    pub dump_id: String,
    pub exclude_journals: Vec<String>,
    pub k_min: usize,
    pub k_max: usize,
    pub iterations: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub rel_tol: Option<f64>,
    pub min_overlap: f64,
    pub labels_per_node: usize,
    pub top_n: usize,
    pub jobs: Option<usize>,
}

/// Settings as read from a config file or flags; unset fields take the
/// defaults in [`PartialConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub dump_path: Option<PathBuf>,
    pub lexicon_path: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub compression: Option<Compression>,
    pub dump_id: Option<String>,
    pub exclude_journals: Option<Vec<String>>,
    pub k_min: Option<usize>,
    pub k_max: Option<usize>,
    pub iterations: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub rel_tol: Option<f64>,
    pub min_overlap: Option<f64>,
    pub labels_per_node: Option<usize>,
    pub top_n: Option<usize>,
    pub jobs: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $over:ident, $($field:ident),*) => {
        PartialConfig { $($field: $over.$field.or($base.$field)),* }
    };
}

impl PartialConfig {
    /// Parses `key = value` lines (TOML syntax).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: PartialConfig) -> PartialConfig {
        let base = self;
        overlay_fields!(
            base,
            over,
            dump_path,
            lexicon_path,
            output_dir,
            compression,
            dump_id,
            exclude_journals,
            k_min,
            k_max,
            iterations,
            seed,
            epsilon,
            rel_tol,
            min_overlap,
            labels_per_node,
            top_n,
            jobs
        )
    }

    pub fn resolve(self) -> Result<PipelineConfig> {
        let missing = |name: &str| Error::InvalidArgument(format!("{name} is required"));
        let dump_path = self.dump_path.ok_or_else(|| missing("dump path"))?;
        let dump_id = self.dump_id.unwrap_or_else(|| default_dump_id(&dump_path));
        let config = PipelineConfig {
            lexicon_path: self.lexicon_path.ok_or_else(|| missing("lexicon path"))?,
            output_dir: self.output_dir.ok_or_else(|| missing("output directory"))?,
            dump_path,
            compression: self.compression.unwrap_or_default(),
            dump_id,
            exclude_journals: self.exclude_journals.unwrap_or_default(),
            k_min: self.k_min.unwrap_or(1),
            k_max: self.k_max.unwrap_or(20),
            iterations: self.iterations.unwrap_or(crate::nmf::DEFAULT_ITERATIONS),
            seed: self.seed.unwrap_or(0),
            epsilon: self.epsilon.unwrap_or(crate::nmf::DEFAULT_EPSILON),
            rel_tol: self.rel_tol,
            min_overlap: self.min_overlap.unwrap_or(0.1),
            labels_per_node: self.labels_per_node.unwrap_or(1),
            top_n: self.top_n.unwrap_or(12),
            jobs: self.jobs,
        };
        config.validate()?;
        Ok(config)
    }
}

fn default_dump_id(path: &Path) -> String {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut id = name.as_str();
    for ext in [".bz2", ".xml"] {
        id = id.strip_suffix(ext).unwrap_or(id);
    }
    id.to_string()
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.k_min < 1 || self.k_min > self.k_max {
            return bad(format!(
                "need 1 <= k_min <= k_max, got {}..{}",
                self.k_min, self.k_max
            ));
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return bad(format!("min_overlap {} outside [0, 1]", self.min_overlap));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon {} must be a finite non-negative number",
                self.epsilon
            ));
        }
        if self.labels_per_node < 1 || self.top_n < 1 {
            return bad("labels_per_node and top_n must be at least 1".into());
        }
        if self.jobs == Some(0) {
            return bad("jobs must be at least 1".into());
        }
        Ok(())
    }

    pub fn nmf_options(&self) -> NmfStageOptions {
        NmfStageOptions {
            exclude: self.exclude_journals.clone(),
            k_min: self.k_min,
            k_max: self.k_max,
            config: NmfConfig {
                iterations: self.iterations,
                epsilon: self.epsilon,
                rel_tol: self.rel_tol,
            },
            seed: self.seed,
            jobs: self.jobs,
        }
    }

    pub fn bush_config(&self) -> BushConfig {
        BushConfig {
            min_overlap: self.min_overlap,
            labels_per_node: self.labels_per_node,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub skipped: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
}

fn hash_path(hasher: &mut Sha256, root: &Path, path: &Path) -> Result<()> {
    let rel = path.strip_prefix(root).unwrap_or(path);
    hasher.update(rel.to_string_lossy().as_bytes());
    hasher.update([0]);
    if path.is_dir() {
        let mut children: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        children.sort();
        for child in children {
            hash_path(hasher, root, &child)?;
        }
    } else {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        std::io::copy(&mut file, hasher).map_err(|e| Error::io(path, e))?;
    }
    hasher.update([0xff]);
    Ok(())
}

/// SHA-256 over the stage name, its settings and the content of its inputs.
fn fingerprint(stage: &str, settings: &serde_json::Value, inputs: &[&Path]) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(stage.as_bytes());
    hasher.update(settings.to_string().as_bytes());
    for input in inputs {
        let root = input.parent().unwrap_or(Path::new(""));
        hash_path(&mut hasher, root, input)?;
    }
    Ok(format!("{:x}", hasher.finalize()))
}

struct StageRunner<'a> {
    output_dir: &'a Path,
    records: Vec<StageRecord>,
}

impl StageRunner<'_> {
    fn run(
        &mut self,
        name: &'static str,
        settings: serde_json::Value,
        inputs: &[&Path],
        outputs: &[&Path],
        body: impl FnOnce() -> Result<()>,
    ) -> Result<()> {
        let start = Instant::now();
        let wrap = |e: Error| Error::Stage {
            stage: name,
            source: Box::new(e),
        };
        let print = fingerprint(name, &settings, inputs).map_err(wrap)?;
        let stamp = self.output_dir.join(STAGE_DIR).join(name);
        let up_to_date =
            outputs.iter().all(|p| p.exists()) && fs::read_to_string(&stamp).is_ok_and(|s| s.trim() == print);
        if !up_to_date {
            let _ = fs::remove_file(&stamp);
            body().map_err(wrap)?;
            fs::create_dir_all(stamp.parent().unwrap())
                .and_then(|_| fs::write(&stamp, format!("{print}\n")))
                .map_err(|e| wrap(Error::io(&stamp, e)))?;
        }
        self.records.push(StageRecord {
            name: name.to_string(),
            skipped: up_to_date,
            seconds: start.elapsed().as_secs_f64(),
        });
        Ok(())
    }
}

/// Runs extract → matrix → (exclude +) nmf → bush → report under
/// `config.output_dir`, skipping stages whose inputs are unchanged.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunRecord> {
    config.validate()?;
    let out = config.output_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let citations = out.join(CITATIONS_FILE);
    let matrix_dir = out.join(MATRIX_DIR);
    let models_dir = out.join(MODELS_DIR);
    let bush = out.join(BUSH_FILE);
    let report = out.join(REPORT_FILE);
    let growth = out.join(GROWTH_FILE);

    let mut runner = StageRunner {
        output_dir: out,
        records: Vec::new(),
    };
    runner.run(
        "extract",
        serde_json::json!({ "compression": config.compression }),
        &[&config.dump_path],
        &[&citations],
        || extract_to_jsonl(&config.dump_path, config.compression, &citations).map(|_| ()),
    )?;
    runner.run(
        "matrix",
        serde_json::json!({ "dump_id": config.dump_id }),
        &[&citations, &config.lexicon_path],
        &[&matrix_dir],
        || build_matrix_dir(&citations, &config.lexicon_path, &matrix_dir, &config.dump_id).map(|_| ()),
    )?;
    let nmf = config.nmf_options();
    runner.run(
        "nmf",
        serde_json::json!({
            "exclude": nmf.exclude, "k_min": nmf.k_min, "k_max": nmf.k_max,
            "iterations": nmf.config.iterations, "epsilon": nmf.config.epsilon,
            "rel_tol": nmf.config.rel_tol, "seed": nmf.seed,
        }),
        &[&matrix_dir],
        &[&models_dir],
        || nmf_dir(&matrix_dir, &models_dir, &nmf).map(|_| ()),
    )?;
    runner.run(
        "bush",
        serde_json::json!({ "min_overlap": config.min_overlap, "labels_per_node": config.labels_per_node }),
        &[&models_dir],
        &[&bush],
        || bush_file(&models_dir, &bush, &config.bush_config(), &RenderStyle::default()),
    )?;
    runner.run(
        "report",
        serde_json::json!({ "top_n": config.top_n }),
        &[&matrix_dir, &models_dir],
        &[&report, &growth],
        || {
            report_files(
                std::slice::from_ref(&matrix_dir),
                Some(&models_dir),
                &report,
                Some(&growth),
                config.top_n,
            )
        },
    )?;

    let record = RunRecord {
        config: config.clone(),
        stages: runner.records,
    };
    write_json(&out.join(RUN_FILE), &record)?;
    Ok(record)
}
