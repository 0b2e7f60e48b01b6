//! Python bindings.
//!
//! Cohorts and designs are wrapped classes. Structured inputs and results
//! (distance specs, zones, reports) cross the boundary as plain dicts and
//! lists with the same field names as the Rust types.

use nearfar::cohort::{load_cohort, save_cohort, Cohort, Schema};
use nearfar::matching::{balance_report, read_design_csv, DistanceSpec, MatchedDesign};
use nearfar::{bias, debias, dgp, efficiency, inference, presets, sensitivity, Error};
use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(nearfar_py, NearfarError, PyRuntimeError);
create_exception!(nearfar_py, InfeasibleError, NearfarError);
create_exception!(nearfar_py, NumericalError, NearfarError);

fn err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Validation(_) | Error::Row { .. } | Error::Csv(_) | Error::Json(_) => {
            PyValueError::new_err(msg)
        }
        Error::Io(_) => PyOSError::new_err(msg),
        Error::Infeasible(_) => InfeasibleError::new_err(msg),
        Error::Numerical(_) => NumericalError::new_err(msg),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: DeserializeOwned>(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    serde_json::from_str(&text).map_err(|e| err(e.into()))
}

fn from_py_or_default<T: DeserializeOwned + Default>(
    py: Python<'_>,
    obj: Option<&Bound<'_, PyAny>>,
) -> PyResult<T> {
    obj.map_or_else(|| Ok(T::default()), |o| from_py(py, o))
}

/// A study cohort.
#[pyclass(name = "Cohort", module = "nearfar_py", frozen)]
struct PyCohort {
    inner: Cohort,
}

#[pymethods]
impl PyCohort {
    /// Reads a CSV file; `schema` maps column roles to names.
    #[staticmethod]
    #[pyo3(signature = (path, schema=None))]
    fn read_csv(py: Python<'_>, path: &str, schema: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let schema: Schema = from_py_or_default(py, schema)?;
        Ok(PyCohort {
            inner: load_cohort(path, &schema).map_err(err)?,
        })
    }

    /// Draws a cohort from a generator spec dict (`kind`, `n`, `seed`, ...).
    #[staticmethod]
    fn generate(py: Python<'_>, spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let spec: dgp::DgpSpec = from_py(py, spec)?;
        Ok(PyCohort {
            inner: spec.generate().map_err(err)?,
        })
    }

    /// The three-covariate partially linear model with a logistic treatment.
    #[staticmethod]
    #[pyo3(signature = (n, beta=0.0, xi=1.0, seed=0))]
    fn sin_log_sin(n: usize, beta: f64, xi: f64, seed: u64) -> PyResult<Self> {
        let spec = dgp::PartiallyLinearSpec::sin_log_sin(beta, xi);
        Ok(PyCohort {
            inner: dgp::generate_partially_linear_cohort(&spec, n, seed).map_err(err)?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        save_cohort(&self.inner, path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Cohort(n={}, p={})", self.inner.len(), self.inner.p())
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.subjects().iter().map(|s| s.id.clone()).collect()
    }

    #[getter]
    fn covariate_names(&self) -> Vec<String> {
        self.inner.covariate_names().to_vec()
    }

    fn doses(&self) -> Vec<f64> {
        self.inner.doses()
    }

    fn treatments(&self) -> Vec<f64> {
        self.inner.treatments()
    }

    fn outcomes(&self) -> Vec<f64> {
        self.inner.outcomes()
    }

    fn covariate(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.inner.p() {
            return Err(PyValueError::new_err(format!(
                "covariate index {j} out of range"
            )));
        }
        Ok(self.inner.covariate(j))
    }

    /// Latent confounder values, when the cohort carries them.
    fn latent_u(&self) -> Option<Vec<f64>> {
        self.inner.latent_u()
    }
}

/// A set of matched pairs, encouraged member first.
#[pyclass(name = "Design", module = "nearfar_py", frozen)]
struct PyDesign {
    inner: MatchedDesign,
}

#[pymethods]
impl PyDesign {
    #[staticmethod]
    fn read_csv(path: &str, cohort: &PyCohort) -> PyResult<Self> {
        let file =
            std::fs::File::open(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        Ok(PyDesign {
            inner: read_design_csv(file, &cohort.inner).map_err(err)?,
        })
    }

    fn write_csv(&self, path: &str, cohort: &PyCohort) -> PyResult<()> {
        let file =
            std::fs::File::create(path).map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        self.inner.write_csv(&cohort.inner, file).map_err(err)
    }

    #[getter]
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.inner.pairs.clone()
    }

    #[getter]
    fn dropped(&self) -> Vec<usize> {
        self.inner.dropped.clone()
    }

    #[getter]
    fn compliance(&self) -> Option<f64> {
        self.inner.compliance_hat
    }

    #[getter]
    fn total_distance(&self) -> f64 {
        self.inner.total_distance
    }

    fn __len__(&self) -> usize {
        self.inner.n_pairs()
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(pairs={}, compliance={:?})",
            self.inner.n_pairs(),
            self.inner.compliance_hat
        )
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Optimal non-bipartite matching; `distance` is a distance-spec dict.
#[pyfunction]
#[pyo3(signature = (cohort, distance=None))]
fn strengthen(
    py: Python<'_>,
    cohort: &PyCohort,
    distance: Option<&Bound<'_, PyAny>>,
) -> PyResult<PyDesign> {
    let spec: DistanceSpec = from_py_or_default(py, distance)?;
    Ok(PyDesign {
        inner: nearfar::matching::strengthen(&cohort.inner, &spec).map_err(err)?,
    })
}

#[pyfunction]
fn balance(py: Python<'_>, design: &PyDesign, cohort: &PyCohort) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &balance_report(&design.inner, &cohort.inner).map_err(err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (design, cohort, sigma=None))]
fn wald_estimate(
    py: Python<'_>,
    design: &PyDesign,
    cohort: &PyCohort,
    sigma: Option<f64>,
) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &inference::wald_estimate(&design.inner, &cohort.inner, sigma).map_err(err)?,
    )
}

/// Rank test of `beta = beta0`; `method` is `wilcoxon` or `sign`.
#[pyfunction]
#[pyo3(signature = (design, cohort, beta0=0.0, method="wilcoxon", side="two_sided"))]
fn test(
    py: Python<'_>,
    design: &PyDesign,
    cohort: &PyCohort,
    beta0: f64,
    method: &str,
    side: &str,
) -> PyResult<Py<PyAny>> {
    let method: inference::TestMethod = from_py(py, &method.into_pyobject(py)?.into_any())?;
    let side: inference::Side = from_py(py, &side.into_pyobject(py)?.into_any())?;
    let stats = inference::pair_stats(&design.inner, &cohort.inner, beta0).map_err(err)?;
    to_py(py, &inference::run_test(&stats, method, side))
}

#[pyfunction]
#[pyo3(signature = (design, cohort, alpha=0.05, method="wilcoxon"))]
fn confidence_interval(
    py: Python<'_>,
    design: &PyDesign,
    cohort: &PyCohort,
    alpha: f64,
    method: &str,
) -> PyResult<(f64, f64)> {
    let method: inference::TestMethod = from_py(py, &method.into_pyobject(py)?.into_any())?;
    let stats = inference::pair_stats(&design.inner, &cohort.inner, 0.0).map_err(err)?;
    inference::invert_ci(&stats, method, alpha, None).map_err(err)
}

/// Asymptotic relative efficiency of mix 2 against mix 1.
#[pyfunction]
#[pyo3(signature = (iota1, iota2, iota_a1=0.0, iota_a2=0.0, method="wilcoxon"))]
fn are(
    py: Python<'_>,
    iota1: f64,
    iota2: f64,
    iota_a1: f64,
    iota_a2: f64,
    method: &str,
) -> PyResult<f64> {
    let method: inference::TestMethod = from_py(py, &method.into_pyobject(py)?.into_any())?;
    let m1 = dgp::ComplianceMix::new(iota1, iota_a1).map_err(err)?;
    let m2 = dgp::ComplianceMix::new(iota2, iota_a2).map_err(err)?;
    efficiency::are(&m1, &m2, method).map_err(err)
}

/// Monte-Carlo sample-size search; `request` is a sample-size request dict.
#[pyfunction]
fn required_sample_size(py: Python<'_>, request: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let req: efficiency::SampleSizeRequest = from_py(py, request)?;
    to_py(py, &efficiency::required_sample_size(&req).map_err(err)?)
}

#[pyfunction]
fn bias_ratio(
    py: Python<'_>,
    design0: &PyDesign,
    design1: &PyDesign,
    cohort: &PyCohort,
    u: Vec<f64>,
) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &bias::bias_ratio(&design0.inner, &design1.inner, &cohort.inner, &u).map_err(err)?,
    )
}

#[pyfunction]
fn leave_one_out(
    py: Python<'_>,
    cohort: &PyCohort,
    distance0: &Bound<'_, PyAny>,
    distance1: &Bound<'_, PyAny>,
) -> PyResult<Py<PyAny>> {
    let (s0, s1): (DistanceSpec, DistanceSpec) = (from_py(py, distance0)?, from_py(py, distance1)?);
    to_py(
        py,
        &bias::leave_one_out_diagnostic(&cohort.inner, &s0, &s1).map_err(err)?,
    )
}

/// Rubin's rules over per-imputation estimates and variances.
#[pyfunction]
fn rubin_pool(py: Python<'_>, estimates: Vec<f64>, within: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(
        py,
        &sensitivity::rubin_pool(&estimates, &within).map_err(err)?,
    )
}

/// Sensitivity interval; `zone` has `delta_set`, `tau_set`, `lambda1_set`.
#[pyfunction]
#[pyo3(signature = (design, cohort, zone, options=None))]
fn sensitivity_interval(
    py: Python<'_>,
    design: &PyDesign,
    cohort: &PyCohort,
    zone: &Bound<'_, PyAny>,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let zone: sensitivity::SensitivityZone = from_py(py, zone)?;
    let options: sensitivity::SensitivityOptions = from_py_or_default(py, options)?;
    to_py(
        py,
        &sensitivity::sensitivity_interval(&design.inner, &cohort.inner, &zone, &options)
            .map_err(err)?,
    )
}

#[pyfunction]
#[pyo3(signature = (design, cohort, tau_grid, lambda1_grid, delta_points=11, options=None))]
fn heatmap(
    py: Python<'_>,
    design: &PyDesign,
    cohort: &PyCohort,
    tau_grid: Vec<f64>,
    lambda1_grid: Vec<f64>,
    delta_points: usize,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let options: sensitivity::SensitivityOptions = from_py_or_default(py, options)?;
    let cells = sensitivity::heatmap_grid(
        &design.inner,
        &cohort.inner,
        &tau_grid,
        &lambda1_grid,
        delta_points,
        &options,
    )
    .map_err(err)?;
    to_py(py, &cells)
}

#[pyfunction]
fn power_study(py: Python<'_>, study: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let study: sensitivity::PowerStudy = from_py(py, study)?;
    to_py(py, &sensitivity::power_study(&study).map_err(err)?)
}

#[pyfunction]
fn gamma_model_audit(py: Python<'_>, request: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let req: sensitivity::AuditRequest = from_py(py, request)?;
    to_py(py, &sensitivity::gamma_model_audit(&req).map_err(err)?)
}

/// Two-step debiased matching; returns the outcome dict and the final design.
#[pyfunction]
#[pyo3(signature = (cohort, config, distance=None, sink_caliper=None))]
fn two_step_debias(
    py: Python<'_>,
    cohort: &PyCohort,
    config: &Bound<'_, PyAny>,
    distance: Option<&Bound<'_, PyAny>>,
    sink_caliper: Option<f64>,
) -> PyResult<(Py<PyAny>, PyDesign)> {
    let cfg: debias::DebiasConfig = from_py(py, config)?;
    let spec: DistanceSpec = from_py_or_default(py, distance)?;
    let out = debias::two_step_debias(&cohort.inner, &spec, &cfg, sink_caliper).map_err(err)?;
    let design = PyDesign {
        inner: out.stage_two.clone(),
    };
    Ok((to_py(py, &out)?, design))
}

/// Default configuration of a named preset as a dict.
#[pyfunction]
fn preset_config(py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
    match name.parse::<presets::Preset>().map_err(err)? {
        presets::Preset::Table2 => to_py(py, &presets::Table2Config::preset()),
        presets::Preset::Table3 => to_py(py, &presets::table3_preset(1000, 7)),
        presets::Preset::Table5 => to_py(py, &presets::Table5Config::preset()),
        presets::Preset::Table6 => to_py(py, &presets::Table6Config::preset()),
        presets::Preset::Audit => to_py(py, &presets::audit_preset(200, 3)),
    }
}

#[pyfunction]
fn run_table2(py: Python<'_>, config: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let cfg: presets::Table2Config = from_py(py, config)?;
    to_py(py, &presets::run_table2(&cfg).map_err(err)?)
}

#[pymodule]
fn nearfar_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("NearfarError", py.get_type::<NearfarError>())?;
    m.add("InfeasibleError", py.get_type::<InfeasibleError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add_class::<PyCohort>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(strengthen, m)?)?;
    m.add_function(wrap_pyfunction!(balance, m)?)?;
    m.add_function(wrap_pyfunction!(wald_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(test, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_interval, m)?)?;
    m.add_function(wrap_pyfunction!(are, m)?)?;
    m.add_function(wrap_pyfunction!(required_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(bias_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(leave_one_out, m)?)?;
    m.add_function(wrap_pyfunction!(rubin_pool, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity_interval, m)?)?;
    m.add_function(wrap_pyfunction!(heatmap, m)?)?;
    m.add_function(wrap_pyfunction!(power_study, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_model_audit, m)?)?;
    m.add_function(wrap_pyfunction!(two_step_debias, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_table2, m)?)?;
    Ok(())
}
