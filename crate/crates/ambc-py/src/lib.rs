//! Python bindings for the ambient backscatter link simulator: the
//! bit-domain primitives, the FSK reflection modulator, and the
//! experiment harness (single runs and sweeps returning report dicts).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use ambc_core::harness::{DetectionReport, ExperimentConfig};
use ambc_core::{bitseq, harness, zed};

fn value_err(e: ambc_core::Error) -> PyErr {
    match e {
        ambc_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Fixed-length sequence of binary symbols.
#[pyclass(name = "BitSequence")]
#[derive(Clone)]
struct PyBitSequence {
    inner: bitseq::BitSequence,
}

#[pymethods]
impl PyBitSequence {
    /// Parse from an ASCII string of '0'/'1' characters.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: text.parse().map_err(value_err)?,
        })
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("BitSequence(\"{}\")", self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    /// Bits as a list of 0/1 integers.
    fn bits(&self) -> Vec<u8> {
        self.inner.bits().to_vec()
    }

    /// Number of one-bits.
    fn ones(&self) -> usize {
        self.inner.ones()
    }
}

/// One full period of a Fibonacci LFSR.
///
/// `taps` are 1-based stage indices of the generating polynomial; the
/// default arguments give the 63-bit sequence of x^6 + x^5 + 1.
#[pyfunction]
#[pyo3(signature = (degree=6, taps=vec![6, 5], seed=0b111111))]
fn generate_m_sequence(degree: u32, taps: Vec<u32>, seed: u32) -> PyResult<PyBitSequence> {
    let spec = bitseq::LfsrSpec::new(degree, taps, seed).map_err(value_err)?;
    Ok(PyBitSequence {
        inner: bitseq::generate_m_sequence(&spec).map_err(value_err)?,
    })
}

/// The shipped 63-bit synchronization preamble.
#[pyfunction]
fn default_sync_sequence() -> PyBitSequence {
    PyBitSequence {
        inner: bitseq::default_sync_sequence(),
    }
}

/// The shipped 57-bit payload.
#[pyfunction]
fn default_payload() -> PyBitSequence {
    PyBitSequence {
        inner: bitseq::default_payload(),
    }
}

/// Prepend the synchronization preamble to a 57-bit payload.
#[pyfunction]
fn build_frame(data: &PyBitSequence) -> PyResult<PyBitSequence> {
    Ok(PyBitSequence {
        inner: bitseq::build_frame(&data.inner).map_err(value_err)?,
    })
}

/// Fraction of agreeing positions between two equal-length sequences.
#[pyfunction]
fn agreement_correlation(window: &PyBitSequence, reference: &PyBitSequence) -> PyResult<f64> {
    bitseq::agreement_correlation(&window.inner, &reference.inner).map_err(value_err)
}

/// Number of differing positions between two equal-length sequences.
#[pyfunction]
fn hamming_errors(a: &PyBitSequence, b: &PyBitSequence) -> PyResult<usize> {
    bitseq::hamming_errors(&a.inner, &b.inner).map_err(value_err)
}

/// Square-wave FSK reflection waveform for one frame, sampled at
/// `time_base` Hz. Returns the reflection coefficients.
#[pyfunction]
#[pyo3(signature = (frame, time_base=2000.0))]
fn modulate_frame(frame: &PyBitSequence, time_base: f64) -> PyResult<Vec<f64>> {
    let cfg = zed::FskConfig::default();
    Ok(zed::modulate_frame(&frame.inner, &cfg, time_base)
        .map_err(value_err)?
        .states)
}

fn report_to_dict<'py>(py: Python<'py>, r: &DetectionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("point", &r.label)?;
    d.set_item("mode", r.mode.to_string())?;
    d.set_item("snr_db", r.snr_db)?;
    d.set_item("backscatter_ratio_db", r.backscatter_ratio_db)?;
    d.set_item("traffic_duty", r.traffic_duty)?;
    d.set_item("duration_s", r.duration_s)?;
    d.set_item("transmitted_frames", r.transmitted_frames)?;
    d.set_item("wallclock_expected_frames", r.wallclock_expected_frames)?;
    d.set_item("detected_frames", r.detected_frames)?;
    d.set_item("false_alarms", r.false_alarms)?;
    d.set_item("detection_ratio", r.detection_ratio())?;
    d.set_item("mean_data_ber", r.mean_data_ber())?;
    d.set_item("ber_q50", r.ber_quantile(0.5))?;
    d.set_item("ber_q95", r.ber_quantile(0.95))?;
    d.set_item("ber_cdf", r.ber_cdf())?;
    d.set_item("contrast_accuracy", r.contrast_accuracy)?;
    let frames = PyList::empty_bound(py);
    for f in &r.frames {
        let fd = PyDict::new_bound(py);
        fd.set_item("index", f.index)?;
        fd.set_item("truth_start_s", f.truth_start_s)?;
        fd.set_item("detected", f.detected)?;
        fd.set_item("detection_time_s", f.detection_time_s)?;
        fd.set_item("correlation", f.correlation)?;
        fd.set_item("data_ber", f.data_ber)?;
        frames.append(fd)?;
    }
    d.set_item("frames", frames)?;
    Ok(d)
}

/// The default experiment configuration as a TOML document.
#[pyfunction]
fn default_config_toml() -> String {
    ExperimentConfig::default().to_toml()
}

/// Simulate the base configuration of a TOML document as a single point.
#[pyfunction]
fn run_point<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(value_err)?;
    let point = cfg.sweep_points().into_iter().next().unwrap();
    let report =
        py.allow_threads(|| harness::run_point(&cfg, &point)).map_err(value_err)?;
    report_to_dict(py, &report)
}

/// Simulate every sweep point of a TOML document.
#[pyfunction]
fn run_sweep<'py>(py: Python<'py>, config_toml: &str) -> PyResult<Bound<'py, PyList>> {
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(value_err)?;
    let reports = py.allow_threads(|| harness::run_sweep(&cfg)).map_err(value_err)?;
    let list = PyList::empty_bound(py);
    for r in &reports {
        list.append(report_to_dict(py, r)?)?;
    }
    Ok(list)
}

/// Simulate a sweep and write the per-frame / summary / CDF CSV files.
/// Returns the written paths.
#[pyfunction]
fn run_sweep_to_csv(py: Python<'_>, config_toml: &str, out_dir: &str) -> PyResult<Vec<String>> {
    let cfg = ExperimentConfig::from_toml(config_toml).map_err(value_err)?;
    let reports = py.allow_threads(|| harness::run_sweep(&cfg)).map_err(value_err)?;
    let paths = harness::emit_report(&reports, std::path::Path::new(out_dir)).map_err(value_err)?;
    Ok(paths
        .into_iter()
        .map(|p| p.display().to_string())
        .collect())
}

/// Run the built-in property suite; returns (name, passed, detail) rows.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.allow_threads(|| {
        ambc_core::selftest::run_all()
            .into_iter()
            .map(|c| (c.name.to_string(), c.pass, c.detail))
            .collect()
    })
}

#[pymodule]
fn _ambc(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBitSequence>()?;
    m.add_function(wrap_pyfunction!(generate_m_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(default_sync_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(default_payload, m)?)?;
    m.add_function(wrap_pyfunction!(build_frame, m)?)?;
    m.add_function(wrap_pyfunction!(agreement_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_errors, m)?)?;
    m.add_function(wrap_pyfunction!(modulate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(default_config_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_point, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep_to_csv, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
