//! Python bindings: the `pywikicite` extension module.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wikicite::bush::OverlapMeasure;
use wikicite::pipeline::{self, PartialConfig};
use wikicite::{
    CitationInstance, Compression, Error, ErrorClass, JournalLexicon, LoadingAxis, NmfConfig, NmfModel,
    RenderStyle, SparseCountMatrix, TemplateInstance, WikiPage,
};

create_exception!(
    pywikicite,
    WikiciteError,
    PyException,
    "Malformed or inconsistent input data."
);

fn to_py(e: Error) -> PyErr {
    match e.class() {
        ErrorClass::Usage => PyValueError::new_err(e.to_string()),
        ErrorClass::Data => WikiciteError::new_err(e.to_string()),
        ErrorClass::Internal => PyIOError::new_err(e.to_string()),
    }
}

fn compression(name: &str) -> PyResult<Compression> {
    name.parse().map_err(to_py)
}

#[pyclass(name = "Template", frozen)]
struct PyTemplate {
    inner: TemplateInstance,
}

#[pymethods]
impl PyTemplate {
    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    /// `(key, value)` pairs; `key` is `None` for positional parameters.
    #[getter]
    fn params(&self) -> Vec<(Option<String>, String)> {
        self.inner
            .params
            .iter()
            .map(|p| (p.key.clone(), p.value.clone()))
            .collect()
    }

    #[getter]
    fn span(&self) -> (usize, usize) {
        self.inner.span
    }

    fn normalized_name(&self) -> String {
        self.inner.normalized_name()
    }

    fn is_cite_journal(&self) -> bool {
        self.inner.is_cite_journal()
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.inner.get(key)
    }

    fn __repr__(&self) -> String {
        format!(
            "Template({:?}, {} params)",
            self.inner.name,
            self.inner.params.len()
        )
    }
}

#[pyclass(name = "Citation", frozen)]
struct PyCitation {
    inner: CitationInstance,
}

#[pymethods]
impl PyCitation {
    #[new]
    fn new(article: String, journal_raw: String, dedup_key: String) -> Self {
        PyCitation {
            inner: CitationInstance {
                article_title: article,
                raw_journal: journal_raw,
                dedup_key,
            },
        }
    }

    #[getter]
    fn article(&self) -> &str {
        &self.inner.article_title
    }

    #[getter]
    fn journal_raw(&self) -> &str {
        &self.inner.raw_journal
    }

    #[getter]
    fn dedup_key(&self) -> &str {
        &self.inner.dedup_key
    }

    fn __repr__(&self) -> String {
        format!(
            "Citation({:?}, {:?})",
            self.inner.article_title, self.inner.raw_journal
        )
    }
}

#[pyclass(name = "Page", frozen)]
struct PyPage {
    #[pyo3(get)]
    title: String,
    #[pyo3(get)]
    namespace: u32,
    #[pyo3(get)]
    wikitext: String,
}

/// Iterator over the pages of a dump file.
#[pyclass(name = "DumpReader", unsendable)]
struct PyDumpReader {
    stream: wikicite::PageStream,
}

#[pymethods]
impl PyDumpReader {
    #[new]
    #[pyo3(signature = (path, compression = "auto"))]
    fn new(path: PathBuf, compression: &str) -> PyResult<Self> {
        let stream = wikicite::open_dump_stream(path, self::compression(compression)?).map_err(to_py)?;
        Ok(PyDumpReader { stream })
    }

    fn __iter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    fn __next__(&mut self) -> PyResult<Option<PyPage>> {
        Ok(self.stream.next_page().map_err(to_py)?.map(|p| PyPage {
            title: p.title,
            namespace: p.namespace,
            wikitext: p.wikitext,
        }))
    }

    /// Pages read so far and replaced invalid UTF-8 sequences.
    fn diagnostics(&self) -> (u64, u64) {
        let d = self.stream.diagnostics();
        (d.pages, d.replaced_sequences)
    }
}

#[pyfunction]
fn parse_templates(wikitext: &str) -> Vec<PyTemplate> {
    wikicite::parse_templates(wikitext)
        .into_iter()
        .map(|inner| PyTemplate { inner })
        .collect()
}

#[pyfunction]
fn clean_field_value(value: &str) -> String {
    wikicite::clean_field_value(value)
}

#[pyfunction]
#[pyo3(signature = (title, wikitext, namespace = 0))]
fn extract_citations(title: String, wikitext: String, namespace: u32) -> Vec<PyCitation> {
    let page = WikiPage {
        title,
        namespace,
        wikitext,
    };
    wikicite::extract_citations(&page)
        .into_iter()
        .map(|inner| PyCitation { inner })
        .collect()
}

#[pyclass(name = "Lexicon", frozen)]
struct PyLexicon {
    inner: JournalLexicon,
}

#[pymethods]
impl PyLexicon {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyLexicon {
            inner: JournalLexicon::load(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_xml(xml: &str) -> PyResult<Self> {
        Ok(PyLexicon {
            inner: JournalLexicon::from_xml_str(xml).map_err(to_py)?,
        })
    }

    fn canonical(&self, raw: &str) -> Option<&str> {
        self.inner.canonical(raw)
    }

    /// `(name, matched)`; unmatched names come back tidied but otherwise as written.
    fn normalize(&self, raw: &str) -> (String, bool) {
        let n = self.inner.normalize(raw);
        (n.name, n.matched)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn normalize_journal(raw: &str, lexicon: &PyLexicon) -> (String, bool) {
    lexicon.normalize(raw)
}

/// Article × journal citation counts.
#[pyclass(name = "CountMatrix", frozen)]
struct PyMatrix {
    inner: SparseCountMatrix,
}

#[pymethods]
impl PyMatrix {
    #[staticmethod]
    fn build(citations: Vec<PyRef<'_, PyCitation>>, lexicon: &PyLexicon) -> Self {
        let citations: Vec<CitationInstance> = citations.iter().map(|c| c.inner.clone()).collect();
        PyMatrix {
            inner: wikicite::build_matrix(&citations, &lexicon.inner),
        }
    }

    #[staticmethod]
    fn from_triplets(
        rows: Vec<String>,
        cols: Vec<String>,
        triplets: Vec<(usize, usize, u64)>,
    ) -> PyResult<Self> {
        Ok(PyMatrix {
            inner: SparseCountMatrix::from_triplets(rows, cols, triplets).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyMatrix {
            inner: SparseCountMatrix::load(dir).map_err(to_py)?,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save(dir).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    #[getter]
    fn total_count(&self) -> u64 {
        self.inner.total_count()
    }

    #[getter]
    fn row_labels(&self) -> Vec<String> {
        self.inner.row_labels().to_vec()
    }

    #[getter]
    fn col_labels(&self) -> Vec<String> {
        self.inner.col_labels().to_vec()
    }

    fn triplets(&self) -> Vec<(usize, usize, u64)> {
        self.inner.entries().to_vec()
    }

    fn get(&self, row: usize, col: usize) -> u64 {
        self.inner.get(row, col)
    }

    fn count(&self, article: &str, journal: &str) -> u64 {
        self.inner.count(article, journal)
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = self.inner.stats();
        let d = PyDict::new(py);
        d.set_item("n_rows", s.n_rows)?;
        d.set_item("n_cols", s.n_cols)?;
        d.set_item("nnz", s.nnz)?;
        d.set_item("total_count", s.total_count)?;
        d.set_item("density", s.density)?;
        Ok(d)
    }

    fn top_journals(&self, n: usize) -> Vec<(String, u64)> {
        self.inner.top_cited_journals(n)
    }

    /// New matrix without the named columns, plus the names that were not found.
    fn exclude_journals(&self, names: Vec<String>) -> (PyMatrix, Vec<String>) {
        let (inner, missing) = self.inner.exclude_journals(&names);
        (PyMatrix { inner }, missing)
    }

    fn to_dense(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.to_csr().to_dense())
    }

    fn __repr__(&self) -> String {
        let (m, n) = self.inner.shape();
        format!("CountMatrix({m}x{n}, nnz={})", self.inner.nnz())
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[pyclass(name = "NmfModel", frozen)]
struct PyModel {
    inner: NmfModel,
}

#[pymethods]
impl PyModel {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    /// Article loadings, one list per row.
    #[getter]
    fn w(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.w)
    }

    /// Journal loadings, one list per cluster.
    #[getter]
    fn h(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.h)
    }

    #[getter]
    fn iterations_run(&self) -> usize {
        self.inner.iterations_run
    }

    #[getter]
    fn final_error(&self) -> f64 {
        self.inner.final_error
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn __repr__(&self) -> String {
        format!(
            "NmfModel(k={}, error={:.6e})",
            self.inner.k, self.inner.final_error
        )
    }
}

fn nmf_config(iterations: usize, epsilon: f64, rel_tol: Option<f64>) -> NmfConfig {
    NmfConfig {
        iterations,
        epsilon,
        rel_tol,
    }
}

#[pyfunction]
#[pyo3(signature = (matrix, k, iterations = wikicite::nmf::DEFAULT_ITERATIONS, seed = 0, epsilon = wikicite::nmf::DEFAULT_EPSILON, rel_tol = None))]
fn factorize(
    py: Python<'_>,
    matrix: &PyMatrix,
    k: usize,
    iterations: usize,
    seed: u64,
    epsilon: f64,
    rel_tol: Option<f64>,
) -> PyResult<PyModel> {
    let config = nmf_config(iterations, epsilon, rel_tol);
    let x = matrix.inner.to_csr();
    let inner = py
        .detach(|| wikicite::factorize(&x, k, &config, seed))
        .map_err(to_py)?;
    Ok(PyModel { inner })
}

/// One model per k in `k_min..=k_max`, run `k` seeded with `seed + k`.
#[pyfunction]
#[pyo3(signature = (matrix, k_min, k_max, iterations = wikicite::nmf::DEFAULT_ITERATIONS, seed = 0, epsilon = wikicite::nmf::DEFAULT_EPSILON, rel_tol = None, jobs = None))]
#[allow(clippy::too_many_arguments)]
fn sweep(
    py: Python<'_>,
    matrix: &PyMatrix,
    k_min: usize,
    k_max: usize,
    iterations: usize,
    seed: u64,
    epsilon: f64,
    rel_tol: Option<f64>,
    jobs: Option<usize>,
) -> PyResult<Vec<PyModel>> {
    let config = nmf_config(iterations, epsilon, rel_tol);
    let x = matrix.inner.to_csr();
    let models = py
        .detach(|| wikicite::sweep_model_sizes(&x, k_min..=k_max, &config, seed, jobs))
        .map_err(to_py)?;
    Ok(models.into_iter().map(|inner| PyModel { inner }).collect())
}

#[pyfunction]
fn reconstruction_error(matrix: &PyMatrix, model: &PyModel) -> PyResult<f64> {
    wikicite::reconstruction_error(&matrix.inner.to_csr(), &model.inner.w, &model.inner.h).map_err(to_py)
}

/// `axis` is `"articles"` (hubs, from W) or `"journals"` (authorities, from H).
#[pyfunction]
fn top_loadings(
    model: &PyModel,
    cluster: usize,
    axis: &str,
    n: usize,
    labels: Vec<String>,
) -> PyResult<Vec<(String, f64)>> {
    let axis = match axis {
        "articles" => LoadingAxis::Articles,
        "journals" => LoadingAxis::Journals,
        other => return Err(PyValueError::new_err(format!("unknown axis {other:?}"))),
    };
    wikicite::top_loadings(&model.inner, cluster, axis, n, &labels).map_err(to_py)
}

#[pyfunction]
fn cluster_overlap(a: &PyModel, i: usize, b: &PyModel, j: usize) -> PyResult<f64> {
    wikicite::cluster_overlap(&a.inner, i, &b.inner, j).map_err(to_py)
}

/// SVG cluster bush for models ordered by k.
#[pyfunction]
#[pyo3(signature = (models, row_labels, min_overlap = 0.1, labels_per_node = 1))]
fn bush_svg(
    models: Vec<PyRef<'_, PyModel>>,
    row_labels: Vec<String>,
    min_overlap: f64,
    labels_per_node: usize,
) -> PyResult<String> {
    let models: Vec<NmfModel> = models.iter().map(|m| m.inner.clone()).collect();
    let config = wikicite::BushConfig {
        min_overlap,
        labels_per_node,
        measure: OverlapMeasure::Cosine,
    };
    let bush = wikicite::build_bush(&models, &row_labels, &config).map_err(to_py)?;
    Ok(wikicite::render_bush_svg(&bush, &RenderStyle::default()))
}

/// Runs every stage. Settings come from an optional TOML file, with keyword
/// arguments taking precedence; returns the run record as a dict.
#[pyfunction]
#[pyo3(signature = (config_path = None, **settings))]
fn run_pipeline<'py>(
    py: Python<'py>,
    config_path: Option<PathBuf>,
    settings: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let json = py.import("json")?;
    let base = match config_path {
        Some(path) => PartialConfig::load(&path).map_err(to_py)?,
        None => PartialConfig::default(),
    };
    let over = match settings {
        Some(d) => {
            let text: String = json.call_method1("dumps", (d,))?.extract()?;
            serde_json::from_str::<PartialConfig>(&text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => PartialConfig::default(),
    };
    let config = base.overlay(over).resolve().map_err(to_py)?;
    let record = py.detach(|| pipeline::run_pipeline(&config)).map_err(to_py)?;
    let text = serde_json::to_string(&record).expect("run record serializes");
    json.call_method1("loads", (text,))
}

#[pymodule]
fn pywikicite(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WikiciteError", m.py().get_type::<WikiciteError>())?;
    m.add_class::<PyTemplate>()?;
    m.add_class::<PyCitation>()?;
    m.add_class::<PyPage>()?;
    m.add_class::<PyDumpReader>()?;
    m.add_class::<PyLexicon>()?;
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(parse_templates, m)?)?;
    m.add_function(wrap_pyfunction!(clean_field_value, m)?)?;
    m.add_function(wrap_pyfunction!(extract_citations, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_journal, m)?)?;
    m.add_function(wrap_pyfunction!(factorize, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_error, m)?)?;
    m.add_function(wrap_pyfunction!(top_loadings, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(bush_svg, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
