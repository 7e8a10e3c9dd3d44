//! Python module `riskcal`: tables and privacy metrics, joins and
//! disclosure candidates, clustering, collection funnels and the
//! defender session.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use riskcal_core::cluster::{cluster_datasets, DatasetAttributes};
use riskcal_core::curation::CollectionManifest;
use riskcal_core::join::{detect_disclosures, execute_join, JoinSpec, DEFAULT_JOIN_ROW_CAP};
use riskcal_core::metrics::{self, ScanKeys};
use riskcal_core::workflow::{
    self, redact_candidates, CollectionRef, DefenderSession, QiSelection, Redaction,
    RiskAcknowledgment, StepRequest, Workbench,
};
use riskcal_core::{QuasiIdentifierDictionary, RecordTable, RiskError};
use serde::Serialize;

pyo3::create_exception!(riskcal, RiskcalError, PyException, "args are (code, message)");

fn err(e: RiskError) -> PyErr {
    RiskcalError::new_err((e.code(), e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn from_py(value: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = PyModule::import(value.py(), "json")?
        .call_method1("dumps", (value,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| err(e.into()))
}

fn redaction(i_understand_risk: bool) -> Redaction {
    if i_understand_risk {
        Redaction::Unmasked(RiskAcknowledgment::i_understand_risk())
    } else {
        Redaction::Masked
    }
}

fn dict_or_builtin(dictionary: Option<&Dictionary>) -> QuasiIdentifierDictionary {
    dictionary.map_or_else(QuasiIdentifierDictionary::builtin, |d| d.inner.clone())
}

/// Attribute dictionary mapping normalized names to semantic classes.
#[pyclass(frozen, module = "riskcal")]
struct Dictionary {
    inner: QuasiIdentifierDictionary,
}

#[pymethods]
impl Dictionary {
    #[new]
    fn new() -> Self {
        Dictionary { inner: QuasiIdentifierDictionary::builtin() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        QuasiIdentifierDictionary::from_json(text)
            .map(|inner| Dictionary { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        QuasiIdentifierDictionary::load(&path)
            .map(|inner| Dictionary { inner })
            .map_err(err)
    }

    fn classify(&self, name: &str) -> String {
        let normalized = riskcal_core::qi::normalize_attribute(name);
        self.inner.classify(&normalized).as_str().to_string()
    }

    fn quasi_identifiers(&self) -> Vec<String> {
        self.inner.quasi_identifiers().into_iter().map(String::from).collect()
    }

    fn profile(&self, name: &str) -> PyResult<Vec<String>> {
        self.inner.profile(name).map(<[String]>::to_vec).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Rows of string cells under classified attributes.
#[pyclass(frozen, module = "riskcal")]
struct Table {
    inner: RecordTable,
}

#[pymethods]
impl Table {
    #[new]
    #[pyo3(signature = (header, rows, dictionary=None))]
    fn new(
        header: Vec<String>,
        rows: Vec<Vec<String>>,
        dictionary: Option<&Dictionary>,
    ) -> PyResult<Self> {
        let dict = dict_or_builtin(dictionary);
        RecordTable::from_rows(&header, rows, &dict)
            .map(|inner| Table { inner })
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, dictionary=None))]
    fn from_csv(path: PathBuf, dictionary: Option<&Dictionary>) -> PyResult<Self> {
        let dict = dict_or_builtin(dictionary);
        RecordTable::from_csv_path(&path, &dict)
            .map(|inner| Table { inner })
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(normalized name, semantic class)` per column.
    #[getter]
    fn attributes(&self) -> Vec<(String, String)> {
        self.inner
            .attributes()
            .iter()
            .map(|a| (a.normalized_name.clone(), a.semantic_class.as_str().to_string()))
            .collect()
    }

    #[getter]
    fn rows(&self) -> Vec<Vec<String>> {
        self.inner.rows().to_vec()
    }

    fn k_anonymity(&self, keys: Vec<String>) -> PyResult<usize> {
        let p = metrics::partition(&self.inner, &keys).map_err(err)?;
        metrics::k_anonymity(&p).map_err(err)
    }

    fn l_diversity(&self, keys: Vec<String>, sensitive: &str) -> PyResult<usize> {
        let p = metrics::partition(&self.inner, &keys).map_err(err)?;
        metrics::l_diversity(&p, &self.inner, sensitive).map_err(err)
    }

    fn t_closeness(&self, keys: Vec<String>, sensitive: &str) -> PyResult<f64> {
        let p = metrics::partition(&self.inner, &keys).map_err(err)?;
        metrics::t_closeness(&p, &self.inner, sensitive).map_err(err)
    }

    fn entropy(&self, attr: &str) -> PyResult<f64> {
        metrics::attribute_entropy(&self.inner, attr).map_err(err)
    }

    fn skew(&self, attr: &str) -> PyResult<f64> {
        metrics::skew_score(&self.inner, attr).map_err(err)
    }

    #[pyo3(signature = (keys, sensitive=Vec::new()))]
    fn summarize<'py>(
        &self,
        py: Python<'py>,
        keys: Vec<String>,
        sensitive: Vec<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let s = metrics::summarize(&self.inner, &keys, &sensitive).map_err(err)?;
        to_py(py, &s)
    }

    #[pyo3(signature = (keys, threshold=1, subsets=false))]
    fn entry_points<'py>(
        &self,
        py: Python<'py>,
        keys: Vec<String>,
        threshold: usize,
        subsets: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let found =
            metrics::vulnerable_entry_points(&self.inner, &keys, threshold, subsets).map_err(err)?;
        to_py(py, &found)
    }

    /// Without `keys` the quasi-identifier columns form the key.
    #[pyo3(signature = (keys=None, threshold=1, subsets=false, dictionary=None, name="table"))]
    fn scan<'py>(
        &self,
        py: Python<'py>,
        keys: Option<Vec<String>>,
        threshold: usize,
        subsets: bool,
        dictionary: Option<&Dictionary>,
        name: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let keys = keys.map_or(ScanKeys::Auto, ScanKeys::Explicit);
        let dict = dict_or_builtin(dictionary);
        let report =
            metrics::scan_table(name, &self.inner, &keys, threshold, subsets, &dict).map_err(err)?;
        to_py(py, &report)
    }
}

/// Equality join of two tables. Returns the join result with the
/// disclosure candidates it produces, masked unless `i_understand_risk`.
#[pyfunction]
#[pyo3(signature = (left, right, key, row_cap=DEFAULT_JOIN_ROW_CAP, dictionary=None, i_understand_risk=false))]
fn join<'py>(
    py: Python<'py>,
    left: &Table,
    right: &Table,
    key: Vec<String>,
    row_cap: usize,
    dictionary: Option<&Dictionary>,
    i_understand_risk: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let (a, b) = (&left.inner, &right.inner);
    let spec = JoinSpec::new("left", "right", &key, a, b).map_err(err)?;
    let result = execute_join(a, b, &spec, row_cap).map_err(err)?;
    let dict = dict_or_builtin(dictionary);
    let candidates = detect_disclosures(&result, a, b, &dict);
    let candidates = redact_candidates(&candidates, redaction(i_understand_risk));
    let out = to_py(py, &result)?;
    out.set_item("disclosures", to_py(py, &candidates)?)?;
    Ok(out)
}

/// Average-linkage Jaccard clustering of `{id: [attributes]}`.
#[pyfunction]
#[pyo3(signature = (datasets, cut=0.6))]
fn cluster<'py>(
    py: Python<'py>,
    datasets: Vec<(String, Vec<String>)>,
    cut: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let inputs: Vec<DatasetAttributes> = datasets
        .into_iter()
        .map(|(id, attrs)| DatasetAttributes::new(id, attrs))
        .collect();
    to_py(py, &cluster_datasets(&inputs, cut).map_err(err)?)
}

#[pyfunction]
fn funnel<'py>(py: Python<'py>, manifest: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let m = CollectionManifest::load(&manifest).map_err(err)?;
    to_py(py, &m.funnel_report())
}

/// Rebuilds a session from its JSONL history. Returns `(outputs, report)`.
#[pyfunction]
#[pyo3(signature = (history, dictionary=None, i_understand_risk=false))]
fn replay<'py>(
    py: Python<'py>,
    history: PathBuf,
    dictionary: Option<&Dictionary>,
    i_understand_risk: bool,
) -> PyResult<(Bound<'py, PyAny>, String)> {
    let dict = dict_or_builtin(dictionary);
    let outcome = py
        .detach(|| workflow::replay_history(&history, dict))
        .map_err(err)?;
    let report = outcome
        .session
        .export_report(redaction(i_understand_risk))
        .map_err(err)?;
    Ok((to_py(py, &outcome.outputs)?, report.to_json()))
}

/// The defender workflow over a curated collection.
#[pyclass(frozen, module = "riskcal")]
struct Session {
    inner: Mutex<DefenderSession>,
}

impl Session {
    fn with<T>(&self, f: impl FnOnce(&mut DefenderSession) -> riskcal_core::Result<T>) -> PyResult<T> {
        let mut guard = self.inner.lock().map_err(|_| err(RiskError::Cancelled))?;
        f(&mut guard).map_err(err)
    }
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (manifest, source, dictionary=None, history=None))]
    fn new(
        py: Python<'_>,
        manifest: String,
        source: String,
        dictionary: Option<&Dictionary>,
        history: Option<PathBuf>,
    ) -> PyResult<Self> {
        let dict = dict_or_builtin(dictionary);
        let reference = CollectionRef { manifest, source };
        let session = py
            .detach(|| {
                let wb = Arc::new(Workbench::open(reference, dict)?);
                let session = DefenderSession::new(wb);
                match history {
                    Some(path) => session.with_history_log(path),
                    None => Ok(session),
                }
            })
            .map_err(err)?;
        Ok(Session { inner: Mutex::new(session) })
    }

    #[getter]
    fn id(&self) -> PyResult<String> {
        self.with(|s| Ok(s.id().to_string()))
    }

    /// Either a profile name or an explicit list of attributes.
    #[pyo3(signature = (qis=None, profile=None))]
    fn set_quasi_identifiers(
        &self,
        qis: Option<Vec<String>>,
        profile: Option<String>,
    ) -> PyResult<Vec<String>> {
        let selection = match (qis, profile) {
            (None, Some(profile)) => QiSelection::Profile { profile },
            (Some(qis), None) => QiSelection::Explicit { qis },
            _ => {
                return Err(err(RiskError::InvalidParameter(
                    "give exactly one of qis or profile".into(),
                )))
            }
        };
        self.with(|s| s.set_quasi_identifiers(selection))
    }

    /// Runs one step (`cluster`, `pairs`, `join`, `suggest`,
    /// `parallel-sets`, `disclosures`) and returns its output.
    #[pyo3(signature = (step, params=None))]
    fn run<'py>(
        &self,
        py: Python<'py>,
        step: &str,
        params: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let step = step.parse().map_err(err)?;
        let params = match params {
            Some(p) => from_py(p)?,
            None => serde_json::json!({}),
        };
        let request = StepRequest::new(step, params);
        let text = py.detach(|| self.with(|s| s.run_step(&request).map(|o| o.to_json())))?;
        PyModule::import(py, "json")?.call_method1("loads", (text,))
    }

    fn view<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let view = self.with(|s| Ok(s.view()))?;
        to_py(py, &view)
    }

    /// Report JSON text; cell values are masked unless `i_understand_risk`.
    #[pyo3(signature = (i_understand_risk=false))]
    fn report(&self, i_understand_risk: bool) -> PyResult<String> {
        self.with(|s| s.export_report(redaction(i_understand_risk)).map(|r| r.to_json()))
    }

    fn cancel(&self) -> PyResult<()> {
        self.with(|s| {
            s.cancel_token().cancel();
            Ok(())
        })
    }
}

#[pymodule]
fn riskcal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RiskcalError", m.py().get_type::<RiskcalError>())?;
    m.add_class::<Dictionary>()?;
    m.add_class::<Table>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(join, m)?)?;
    m.add_function(wrap_pyfunction!(cluster, m)?)?;
    m.add_function(wrap_pyfunction!(funnel, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
