//! Python bindings for the svcsim simulator.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use svcsim::adaptation;
use svcsim::metrics::{self, ImageBuffer};
use svcsim::netsim::BandwidthSchedule;
use svcsim::scenario::{self, ScenarioConfig};
use svcsim::svc::{self as core_svc, Scheme};
use svcsim::trace::{BitrateLadder, LadderRow};
use svcsim::{Error, SimTime};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn scheme(name: &str) -> PyResult<Scheme> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown scheme {name:?}, expected cgs, fgs or mgs")))
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (value.to_string(),))
}

#[pyclass(name = "LayerId", module = "pysvcsim", frozen, eq, hash, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
struct PyLayerId(core_svc::LayerId);

#[pymethods]
impl PyLayerId {
    #[new]
    #[pyo3(signature = (tid, qid, did = 0))]
    fn new(tid: u8, qid: u8, did: u8) -> Self {
        PyLayerId(core_svc::LayerId::new(did, tid, qid))
    }

    #[getter]
    fn did(&self) -> u8 {
        self.0.did
    }

    #[getter]
    fn tid(&self) -> u8 {
        self.0.tid
    }

    #[getter]
    fn qid(&self) -> u8 {
        self.0.qid
    }

    /// True when this layer belongs to the extraction point `selection`.
    fn within(&self, selection: &PyLayerId) -> bool {
        self.0.within(&selection.0)
    }

    fn __repr__(&self) -> String {
        format!("LayerId(tid={}, qid={}, did={})", self.0.tid, self.0.qid, self.0.did)
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }
}

/// Cumulative operating points: `(tid, qid, frame_rate, kbps, psnr_db)` rows.
#[pyclass(name = "Ladder", module = "pysvcsim", frozen)]
struct PyLadder(BitrateLadder);

#[pymethods]
impl PyLadder {
    #[new]
    fn new(rows: Vec<(u8, u8, f64, f64, f64)>) -> PyResult<Self> {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (tid, qid, frame_rate, bitrate_kbps, psnr_db))| LadderRow {
                layer_id: i as u32,
                layer: core_svc::LayerId::tq(tid, qid),
                frame_rate,
                bitrate_kbps,
                psnr_db,
            })
            .collect();
        BitrateLadder::new(rows).map(PyLadder).map_err(to_py)
    }

    /// Default ladder of a scheme.
    #[staticmethod]
    fn default(name: &str) -> PyResult<Self> {
        ScenarioConfig::default().ladder(scheme(name)?).map(PyLadder).map_err(to_py)
    }

    fn rows(&self) -> Vec<(PyLayerId, f64, f64, f64)> {
        self.0.rows.iter().map(|r| (PyLayerId(r.layer), r.frame_rate, r.bitrate_kbps, r.psnr_db)).collect()
    }

    /// Highest point whose rate fits `estimate_bps`, or the lowest point.
    fn select(&self, estimate_bps: f64) -> PyResult<(PyLayerId, f64)> {
        let s = adaptation::select_layer(&self.0, estimate_bps, SimTime::ZERO).map_err(to_py)?;
        Ok((PyLayerId(s.chosen_layer), s.chosen_bitrate_kbps))
    }

    fn __len__(&self) -> usize {
        self.0.rows.len()
    }
}

/// Piecewise-constant link capacity from `(start_s, mbps)` steps.
#[pyclass(name = "Schedule", module = "pysvcsim", frozen)]
struct PySchedule(BandwidthSchedule);

#[pymethods]
impl PySchedule {
    #[new]
    fn new(steps: Vec<(f64, f64)>) -> PyResult<Self> {
        let bps: Vec<(f64, f64)> = steps.into_iter().map(|(t, mbps)| (t, mbps * 1e6)).collect();
        BandwidthSchedule::from_secs(&bps).map(PySchedule).map_err(to_py)
    }

    #[staticmethod]
    fn default() -> Self {
        PySchedule(BandwidthSchedule::default_staircase())
    }

    /// Capacity in bit/s at `t_s` seconds.
    fn at(&self, t_s: f64) -> PyResult<u64> {
        self.0.at(SimTime::from_secs_f64(t_s)).map_err(to_py)
    }

    /// `(start_s, end_s, bps)` for every plateau before `horizon_s`.
    fn plateaus(&self, horizon_s: f64) -> Vec<(f64, f64, u64)> {
        self.0
            .plateaus(SimTime::from_secs_f64(horizon_s))
            .into_iter()
            .map(|(a, b, bps)| (a.as_secs_f64(), b.as_secs_f64(), bps))
            .collect()
    }
}

#[pyclass(name = "Scenario", module = "pysvcsim")]
struct PyScenario(ScenarioConfig);

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (toml = None))]
    fn new(toml: Option<&str>) -> PyResult<Self> {
        match toml {
            Some(text) => ScenarioConfig::from_toml(text).map(PyScenario).map_err(to_py),
            None => Ok(PyScenario(ScenarioConfig::default())),
        }
    }

    fn to_toml(&self) -> String {
        self.0.to_toml()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[getter]
    fn schemes(&self) -> Vec<String> {
        self.0.schemes.iter().map(|s| s.to_string()).collect()
    }

    #[setter]
    fn set_schemes(&mut self, names: Vec<String>) -> PyResult<()> {
        self.0.schemes = names.iter().map(|n| scheme(n)).collect::<PyResult<_>>()?;
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }

    /// Runs in memory. Returns the report as a dict with each scheme's
    /// per-frame PSNR added under `frame_psnr_db`.
    fn simulate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.0.clone();
        let run = py.detach(|| scenario::simulate(&cfg)).map_err(to_py)?;
        let mut value = serde_json::to_value(run.report()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        for s in &run.schemes {
            let psnr: Vec<f64> = s.timeline.frames.iter().map(|f| f.psnr_db).collect();
            value["schemes"][s.scheme.as_str()]["frame_psnr_db"] = psnr.into();
        }
        json_to_py(py, &value)
    }

    /// Runs and writes every trace and plot file under `outdir`.
    fn run<'py>(&self, py: Python<'py>, outdir: PathBuf) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.0.clone();
        let report = py.detach(|| scenario::run_scenario(&cfg, &outdir)).map_err(to_py)?;
        let value = serde_json::to_value(report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        json_to_py(py, &value)
    }
}

/// Recomputes a written run's report from its traces; returns the mismatches.
#[pyfunction]
fn check_report(rundir: PathBuf) -> PyResult<Vec<String>> {
    scenario::check_report(&rundir).map(|c| c.mismatches).map_err(to_py)
}

#[pyfunction]
fn default_config() -> String {
    ScenarioConfig::default().to_toml()
}

fn images(a: &[u8], b: &[u8], width: u32, height: u32) -> PyResult<(ImageBuffer, ImageBuffer)> {
    let a = ImageBuffer::new(width, height, a.to_vec()).map_err(to_py)?;
    let b = ImageBuffer::new(width, height, b.to_vec()).map_err(to_py)?;
    Ok((a, b))
}

/// Mean squared error of two 8-bit luma planes.
#[pyfunction]
fn mse(a: &Bound<'_, PyBytes>, b: &Bound<'_, PyBytes>, width: u32, height: u32) -> PyResult<f64> {
    let (a, b) = images(a.as_bytes(), b.as_bytes(), width, height)?;
    metrics::mse(&a, &b).map_err(to_py)
}

#[pyfunction]
fn psnr(a: &Bound<'_, PyBytes>, b: &Bound<'_, PyBytes>, width: u32, height: u32) -> PyResult<f64> {
    let (a, b) = images(a.as_bytes(), b.as_bytes(), width, height)?;
    metrics::psnr(&a, &b).map_err(to_py)
}

#[pyfunction]
fn psnr_from_mse(mse: f64) -> f64 {
    metrics::psnr_from_mse(mse)
}

/// `(score, label)` for a PSNR in dB.
#[pyfunction]
fn mos_from_psnr(psnr_db: f64) -> (u8, &'static str) {
    let m = metrics::mos_from_psnr(psnr_db);
    (m.score, m.label)
}

#[pymodule]
fn pysvcsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLayerId>()?;
    m.add_class::<PyLadder>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(check_report, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(psnr_from_mse, m)?)?;
    m.add_function(wrap_pyfunction!(mos_from_psnr, m)?)?;
    m.add("PSNR_CAP_DB", metrics::PSNR_CAP_DB)?;
    Ok(())
}
