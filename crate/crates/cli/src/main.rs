use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wikicite::bush::{BushConfig, RenderStyle};
use wikicite::pipeline::{self, NmfStageOptions, PartialConfig};
use wikicite::{Compression, Error, ErrorClass, NmfConfig};

const DEFAULT_OUTPUT_DIR: &str = "wikicite-out";
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "wikicite",
    version,
    about = "Journal citations from Wikipedia dumps, clustered with NMF"
)]
struct Cli {
    /// Directory for default input and output locations.
    /// [default: wikicite-out, or the `output_dir` of a run config file]
    #[arg(long, global = true, env = "WIKICITE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stream a dump and write cite journal instances as JSON lines.
    Extract {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long, default_value = "auto")]
        compression: Compression,
        /// Defaults to <output-dir>/citations.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalize journal names and build the article x journal matrix.
    Matrix {
        /// Defaults to <output-dir>/citations.jsonl.
        #[arg(long)]
        citations: Option<PathBuf>,
        #[arg(long)]
        lexicon: PathBuf,
        /// Defaults to <output-dir>/matrix.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Label used in the report; defaults to the citations file stem.
        #[arg(long)]
        dump_id: Option<String>,
    },
    /// Exclude journals and factorize for a range of cluster counts.
    Nmf {
        #[arg(long)]
        matrix_dir: Option<PathBuf>,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        k_min: usize,
        #[arg(long, default_value_t = 20)]
        k_max: usize,
        #[arg(long, default_value_t = wikicite::nmf::DEFAULT_ITERATIONS)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Journal column to drop before factorizing; repeatable.
        #[arg(long = "exclude", value_name = "JOURNAL")]
        exclude: Vec<String>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Render the cluster bush of saved models as SVG.
    Bush {
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        min_overlap: f64,
        #[arg(long, default_value_t = 1)]
        labels_per_node: usize,
    },
    /// Write the HTML overview and the growth CSV.
    Report {
        /// Repeat for several dumps; the first one feeds the journal table.
        #[arg(long = "matrix-dir")]
        matrix_dirs: Vec<PathBuf>,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        growth_csv: Option<PathBuf>,
        #[arg(long, default_value_t = 12)]
        top_n: usize,
    },
    /// Run every stage, skipping those whose inputs are unchanged.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    compression: Option<Compression>,
    #[arg(long)]
    dump_id: Option<String>,
    #[arg(long = "exclude", value_name = "JOURNAL")]
    exclude: Vec<String>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    min_overlap: Option<f64>,
    #[arg(long)]
    labels_per_node: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
}

struct Failure {
    stage: &'static str,
    error: Error,
}

fn at(stage: &'static str) -> impl Fn(Error) -> Failure {
    move |error| match error {
        Error::Stage { stage, source } => Failure {
            stage,
            error: *source,
        },
        error => Failure { stage, error },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { stage, error }) => {
            eprintln!("wikicite: {stage} failed: {error}");
            ExitCode::from(match error.class() {
                ErrorClass::Usage => EXIT_USAGE,
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Internal => EXIT_INTERNAL,
            })
        }
    }
}

fn or_default(path: Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    path.unwrap_or_else(|| dir.join(name))
}

fn ensure_parent(path: &Path, stage: &'static str) -> Result<(), Failure> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Failure {
            stage,
            error: Error::Io {
                path: p.to_path_buf(),
                source: e,
            },
        }),
        _ => Ok(()),
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let explicit_dir = cli.output_dir;
    let dir = explicit_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    match cli.command {
        Command::Extract {
            dump,
            compression,
            out,
        } => {
            let out = or_default(out, &dir, pipeline::CITATIONS_FILE);
            ensure_parent(&out, "extract")?;
            let s = pipeline::extract_to_jsonl(&dump, compression, &out).map_err(at("extract"))?;
            eprintln!(
                "{} pages ({} non-article), {} cite journal templates, {} citations, {} duplicate refs, {} unmatched braces",
                s.extract.pages,
                s.extract.skipped_non_article,
                s.extract.cite_journal_templates,
                s.extract.citations,
                s.extract.duplicate_refs,
                s.extract.unbalanced_braces
            );
        }
        Command::Matrix {
            citations,
            lexicon,
            out_dir,
            dump_id,
        } => {
            let citations = or_default(citations, &dir, pipeline::CITATIONS_FILE);
            let out_dir = or_default(out_dir, &dir, pipeline::MATRIX_DIR);
            let dump_id = dump_id.unwrap_or_else(|| {
                citations
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let meta =
                pipeline::build_matrix_dir(&citations, &lexicon, &out_dir, &dump_id).map_err(at("matrix"))?;
            eprintln!(
                "{} x {} matrix, {} non-zeros, {} citations ({} matched to the lexicon, {} without journal)",
                meta.stats.n_rows,
                meta.stats.n_cols,
                meta.stats.nnz,
                meta.stats.total_count,
                meta.build.matched,
                meta.build.dropped_empty
            );
        }
        Command::Nmf {
            matrix_dir,
            models_dir,
            k_min,
            k_max,
            iterations,
            seed,
            exclude,
            jobs,
        } => {
            if k_min < 1 || k_min > k_max || iterations < 1 || jobs == Some(0) {
                return Err(at("nmf")(Error::InvalidArgument(
                    "need 1 <= k-min <= k-max, iterations >= 1 and jobs >= 1".into(),
                )));
            }
            let matrix_dir = or_default(matrix_dir, &dir, pipeline::MATRIX_DIR);
            let models_dir = or_default(models_dir, &dir, pipeline::MODELS_DIR);
            let opts = NmfStageOptions {
                exclude,
                k_min,
                k_max,
                config: NmfConfig::with_iterations(iterations),
                seed,
                jobs,
            };
            let out = pipeline::nmf_dir(&matrix_dir, &models_dir, &opts).map_err(at("nmf"))?;
            for name in &out.missing_exclusions {
                eprintln!("warning: excluded journal {name:?} is not a column");
            }
            for m in &out.models {
                eprintln!("k={:2}  error {:.6}", m.k, m.final_error);
            }
        }
        Command::Bush {
            models_dir,
            out,
            min_overlap,
            labels_per_node,
        } => {
            if !(0.0..=1.0).contains(&min_overlap) || labels_per_node < 1 {
                return Err(at("bush")(Error::InvalidArgument(
                    "min-overlap must lie in [0, 1] and labels-per-node be at least 1".into(),
                )));
            }
            let models_dir = or_default(models_dir, &dir, pipeline::MODELS_DIR);
            let out = or_default(out, &dir, pipeline::BUSH_FILE);
            ensure_parent(&out, "bush")?;
            let config = BushConfig {
                min_overlap,
                labels_per_node,
                ..Default::default()
            };
            pipeline::bush_file(&models_dir, &out, &config, &RenderStyle::default()).map_err(at("bush"))?;
        }
        Command::Report {
            mut matrix_dirs,
            models_dir,
            out,
            growth_csv,
            top_n,
        } => {
            if matrix_dirs.is_empty() {
                matrix_dirs.push(dir.join(pipeline::MATRIX_DIR));
            }
            let models_dir = or_default(models_dir, &dir, pipeline::MODELS_DIR);
            let models_dir = models_dir.is_dir().then_some(models_dir);
            let out = or_default(out, &dir, pipeline::REPORT_FILE);
            let growth = or_default(growth_csv, &dir, pipeline::GROWTH_FILE);
            ensure_parent(&out, "report")?;
            ensure_parent(&growth, "report")?;
            pipeline::report_files(&matrix_dirs, models_dir.as_deref(), &out, Some(&growth), top_n)
                .map_err(at("report"))?;
        }
        Command::Run(args) => {
            let file = match &args.config {
                Some(path) => PartialConfig::load(path).map_err(at("config"))?,
                None => PartialConfig::default(),
            };
            let file = PartialConfig {
                output_dir: file.output_dir.or_else(|| Some(dir.clone())),
                ..file
            };
            let flags = PartialConfig {
                dump_path: args.dump,
                lexicon_path: args.lexicon,
                output_dir: explicit_dir,
                compression: args.compression,
                dump_id: args.dump_id,
                exclude_journals: (!args.exclude.is_empty()).then_some(args.exclude),
                k_min: args.k_min,
                k_max: args.k_max,
                iterations: args.iterations,
                seed: args.seed,
                min_overlap: args.min_overlap,
                labels_per_node: args.labels_per_node,
                top_n: args.top_n,
                jobs: args.jobs,
                ..Default::default()
            };
            let config = file.overlay(flags).resolve().map_err(at("config"))?;
            let record = pipeline::run_pipeline(&config).map_err(at("run"))?;
            for s in &record.stages {
                let status = if s.skipped { "skipped" } else { "done" };
                eprintln!("{:8} {status:8} {:.3}s", s.name, s.seconds);
            }
        }
    }
    Ok(())
}
