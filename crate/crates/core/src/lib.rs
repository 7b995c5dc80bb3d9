//! Journal citations from Wikipedia dumps, clustered with non-negative
//! matrix factorization.
//!
//! The stages are: [`dump`] streams pages out of an XML export,
//! [`template`] pulls `cite journal` instances out of the wikitext,
//! [`lexicon`] maps journal name variants to canonical names,
//! [`matrix`] counts citations into an article × journal matrix,
//! [`nmf`] factorizes it for a range of cluster counts, and [`bush`] and
//! [`report`] render the results. [`pipeline`] chains everything with
//! resumable stages.

pub mod bush;
pub mod dump;
pub mod error;
pub mod lexicon;
pub mod matrix;
pub mod nmf;
pub mod pipeline;
pub mod report;
pub mod template;

pub use bush::{build_bush, cluster_overlap, render_bush_svg, BushConfig, ClusterBush, RenderStyle};
pub use dump::{open_dump_stream, Compression, PageStream, WikiPage};
pub use error::{Error, ErrorClass, Result};
pub use lexicon::{normalize_journal, JournalLexicon, NormalizedJournal};
pub use matrix::{build_matrix, CsrMatrix, MatrixStats, SparseCountMatrix};
pub use nmf::{
    factorize, multiplicative_step, reconstruction_error, sweep_model_sizes, top_loadings, LoadingAxis,
    NmfConfig, NmfModel,
};
pub use report::{render_html_report, summarize_dump, write_growth_csv, DumpSummary};
pub use template::{
    clean_field_value, extract_citations, parse_templates, CitationInstance, TemplateInstance,
};
