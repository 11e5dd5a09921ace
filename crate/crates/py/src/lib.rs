//! Python bindings: `import viva`.
//!
//! Sessions run against the deterministic mock examiner with an in-memory
//! transcript store. Structured results are returned as plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pythonize::{depythonize, pythonize};
use serde::Serialize;
use std::sync::Arc;
use viva_core::clock::{parse_timestamp, Clock, SteppingClock};
use viva_core::engine::{build_system_prompt, classify, EngineOutput};
use viva_core::guard::{ingest, sanitize as sanitize_raw, PLAIN_TEXT};
use viva_core::transcript::{replay_document, verify_document, ExportFormat, TranscriptDocument};
use viva_core::{ExamConfig, ExamError, ExamServices, Examination, SessionId, TranscriptStore, Turn};

create_exception!(viva, VivaError, PyException, "An examination operation was refused.");

fn exam_error(err: ExamError) -> PyErr {
    match err {
        ExamError::Config(_) | ExamError::UnknownProvider(_) | ExamError::Ingest(_) => PyValueError::new_err(err.to_string()),
        other => VivaError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

fn config_from(config: Option<&Bound<'_, PyAny>>) -> PyResult<ExamConfig> {
    let config: ExamConfig = match config {
        Some(obj) if !obj.is_none() => depythonize(obj)?,
        _ => ExamConfig::default(),
    };
    config.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(config)
}

/// Text given either as `str` or as raw `bytes`.
#[derive(FromPyObject)]
enum Text {
    Str(String),
    Bytes(Vec<u8>),
}

impl Text {
    fn into_bytes(self) -> Vec<u8> {
        match self {
            Text::Str(s) => s.into_bytes(),
            Text::Bytes(b) => b,
        }
    }
}

/// Normalizes a submission and screens it for injection attempts.
#[pyfunction]
fn sanitize<'py>(py: Python<'py>, text: Text) -> PyResult<Bound<'py, PyAny>> {
    let raw = ingest(&text.into_bytes(), PLAIN_TEXT).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &sanitize_raw(&raw))
}

/// Classifies one examiner message as a question, a verdict or malformed output.
#[pyfunction]
fn classify_output<'py>(py: Python<'py>, raw: &str) -> PyResult<Bound<'py, PyAny>> {
    let classification = classify(raw);
    let value = match classification.output {
        EngineOutput::Question(text) => serde_json::json!({ "kind": "question", "text": text }),
        EngineOutput::Verdict(v) => serde_json::json!({
            "kind": "verdict",
            "assessment": v.assessment(),
            "confidence_score": v.confidence_score(),
            "fenced": classification.fenced,
        }),
        EngineOutput::Malformed { error, .. } => serde_json::json!({ "kind": "malformed", "error": error.to_string() }),
    };
    to_py(py, &value)
}

/// The examiner system prompt for a config dict.
#[pyfunction]
#[pyo3(signature = (config=None))]
fn system_prompt(config: Option<&Bound<'_, PyAny>>) -> PyResult<String> {
    Ok(build_system_prompt(&config_from(config)?))
}

fn import(json: &str) -> PyResult<TranscriptDocument> {
    TranscriptDocument::from_json(json).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Verifies an exported JSON transcript.
#[pyfunction]
fn verify_transcript<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &verify_document(&import(json)?))
}

/// Rebuilds the final session state from an exported JSON transcript.
#[pyfunction]
fn replay_transcript<'py>(py: Python<'py>, json: &str) -> PyResult<Bound<'py, PyAny>> {
    let session = replay_document(&import(json)?).map_err(|e| VivaError::new_err(e.to_string()))?;
    to_py(py, &session)
}

/// One examination against the mock examiner.
#[pyclass(name = "Examination", module = "viva")]
struct PyExamination {
    store: Arc<TranscriptStore>,
    exam: Examination,
}

#[pymethods]
impl PyExamination {
    #[new]
    #[pyo3(signature = (session_id=None, config=None, clock_start=None))]
    fn new(session_id: Option<String>, config: Option<&Bound<'_, PyAny>>, clock_start: Option<&str>) -> PyResult<Self> {
        let config = config_from(config)?;
        let id = match session_id {
            Some(id) => SessionId::new(id).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => SessionId::random(),
        };
        let store = Arc::new(TranscriptStore::in_memory());
        let services = ExamServices::new(Arc::clone(&store));
        let exam = match clock_start {
            Some(start) => {
                let start = parse_timestamp(start)
                    .ok_or_else(|| PyValueError::new_err(format!("invalid timestamp {start:?}")))?;
                let clock: Arc<dyn Clock> = Arc::new(SteppingClock::new(start));
                Examination::create_with_clock(&services, id, config, clock)
            }
            None => Examination::create(&services, id, config),
        }
        .map_err(exam_error)?;
        Ok(Self { store, exam })
    }

    #[getter]
    fn session_id(&self) -> String {
        self.exam.session_id().to_string()
    }

    #[getter]
    fn state(&self) -> String {
        self.exam.state().to_string()
    }

    #[getter]
    fn questions_asked(&self) -> u32 {
        self.exam.session().questions_asked
    }

    /// Accepts the submission; returns the sanitized submission with its flags.
    fn submit<'py>(&mut self, py: Python<'py>, text: Text) -> PyResult<Bound<'py, PyAny>> {
        let submission = self.exam.submit(&text.into_bytes(), PLAIN_TEXT).map_err(exam_error)?;
        to_py(py, &*submission)
    }

    /// Asks the examiner for its next message.
    fn advance<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let value = match self.exam.advance().map_err(exam_error)? {
            Turn::Question(text) => serde_json::json!({ "kind": "question", "text": text }),
            Turn::Verdict(v) => serde_json::json!({
                "kind": "verdict",
                "assessment": v.assessment(),
                "confidence_score": v.confidence_score(),
            }),
            Turn::Aborted(reason) => serde_json::json!({ "kind": "aborted", "reason": reason }),
        };
        to_py(py, &value)
    }

    fn answer(&mut self, text: &str) -> PyResult<()> {
        self.exam.answer(text).map_err(exam_error)
    }

    #[pyo3(signature = (reason=""))]
    fn abort(&mut self, reason: &str) -> PyResult<()> {
        self.exam.abort(reason).map_err(exam_error)
    }

    fn session<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.exam.session())
    }

    fn transcript<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.exam.log().entries())
    }

    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.exam.log().verify())
    }

    /// Renders the transcript as `"json"` or `"text"`.
    #[pyo3(signature = (format="json"))]
    fn export(&self, format: &str) -> PyResult<String> {
        let format: ExportFormat = format.parse().map_err(|e: viva_core::transcript::ExportError| PyValueError::new_err(e.to_string()))?;
        let doc = TranscriptDocument::from_store(&self.store, self.exam.session_id())
            .map_err(|e| exam_error(e.into()))?;
        Ok(doc.render(format))
    }

    fn __repr__(&self) -> String {
        format!("Examination(session_id={:?}, state={})", self.exam.session_id().as_str(), self.exam.state())
    }
}

#[pymodule]
fn viva(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("VivaError", m.py().get_type::<VivaError>())?;
    m.add_class::<PyExamination>()?;
    m.add_function(wrap_pyfunction!(sanitize, m)?)?;
    m.add_function(wrap_pyfunction!(classify_output, m)?)?;
    m.add_function(wrap_pyfunction!(system_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(verify_transcript, m)?)?;
    m.add_function(wrap_pyfunction!(replay_transcript, m)?)?;
    Ok(())
}
