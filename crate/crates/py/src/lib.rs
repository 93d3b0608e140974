//! Python bindings for `gda_core`.

use std::path::PathBuf;

use gda_core::advisor::{self, GenerationSettings, MockBackend};
use gda_core::boneage::{
    evaluate_bone_age, predict_bone_age, synthetic_bone_age_dataset, train_bone_age, BoneAgeConfig,
};
use gda_core::casedata::{self, xray, DiagnosisLabel, Gender, Laterality, XrayImage};
use gda_core::fusion::{self, TextEncoder};
use gda_core::icl::Exemplar;
use gda_core::numerics::{loss, Tensor};
use gda_core::Error;
use pyo3::exceptions::{PyConnectionError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Transport { .. } => PyConnectionError::new_err(msg),
        Error::Format { raw_response, .. } => PyRuntimeError::new_err(format!("{msg}\nraw response: {raw_response}")),
        Error::BudgetExceeded { .. } => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn parse_label(s: &str) -> PyResult<DiagnosisLabel> {
    s.parse()
        .or_else(|_| DiagnosisLabel::from_display_name(s).ok_or_else(|| Error::validation(format!("unknown diagnosis `{s}`"))))
        .map_err(py_err)
}

#[pyclass(name = "PatientCase", from_py_object)]
#[derive(Clone)]
pub struct PyPatientCase {
    inner: casedata::PatientCase,
}

#[pymethods]
impl PyPatientCase {
    #[new]
    #[pyo3(signature = (case_id, gender, age_months, height_cm, weight_kg, *, bone_age_months=None, diagnosis=None))]
    fn new(
        case_id: String,
        gender: &str,
        age_months: f64,
        height_cm: f64,
        weight_kg: f64,
        bone_age_months: Option<f64>,
        diagnosis: Option<&str>,
    ) -> PyResult<Self> {
        let g: Gender = gender.parse().map_err(py_err)?;
        let mut c = casedata::PatientCase::new(case_id, g, age_months, height_cm, weight_kg);
        c.bone_age_months = bone_age_months;
        c.diagnosis = diagnosis.map(parse_label).transpose()?;
        casedata::ensure_valid(&c).map_err(py_err)?;
        Ok(PyPatientCase { inner: c })
    }

    #[staticmethod]
    fn from_line(line: &str) -> PyResult<Self> {
        casedata::parse_case_line(line, 1).map(|inner| PyPatientCase { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn reference() -> Self {
        PyPatientCase {
            inner: casedata::reference_case(),
        }
    }

    fn to_line(&self) -> String {
        casedata::case_to_line(&self.inner)
    }

    /// Case layout as it appears in a prompt.
    fn render(&self) -> String {
        advisor::render_case(&self.inner)
    }

    fn hormone_level(&self) -> f64 {
        self.inner.hormone_level()
    }

    #[getter]
    fn case_id(&self) -> &str {
        &self.inner.case_id
    }

    #[getter]
    fn gender(&self) -> &'static str {
        self.inner.gender.as_str()
    }

    #[getter]
    fn age_months(&self) -> f64 {
        self.inner.age_months
    }

    #[getter]
    fn height_cm(&self) -> f64 {
        self.inner.height_cm
    }

    #[getter]
    fn weight_kg(&self) -> f64 {
        self.inner.weight_kg
    }

    #[getter]
    fn bone_age_months(&self) -> Option<f64> {
        self.inner.bone_age_months
    }

    #[setter]
    fn set_bone_age_months(&mut self, v: Option<f64>) {
        self.inner.bone_age_months = v;
    }

    #[getter]
    fn diagnosis(&self) -> Option<&'static str> {
        self.inner.diagnosis.map(|d| d.as_str())
    }

    fn __repr__(&self) -> String {
        format!("PatientCase({})", casedata::case_to_line(&self.inner))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(name = "BoneAgeModel")]
pub struct PyBoneAgeModel {
    inner: gda_core::boneage::BoneAgeModel,
}

fn to_image(pixels: Vec<Vec<f64>>) -> PyResult<XrayImage> {
    let h = pixels.len();
    let w = pixels.first().map_or(0, Vec::len);
    if pixels.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err("image rows must all have the same length"));
    }
    let data: Vec<f64> = pixels.into_iter().flatten().collect();
    let t = Tensor::new(vec![h, w, 1], data).map_err(py_err)?;
    XrayImage::new(t, Laterality::None, "python").map_err(py_err)
}

#[pymethods]
impl PyBoneAgeModel {
    #[new]
    #[pyo3(signature = (image_size=64, channels=None, seed=0))]
    fn new(image_size: usize, channels: Option<Vec<usize>>, seed: u64) -> PyResult<Self> {
        let mut config = BoneAgeConfig {
            input_size: (image_size, image_size),
            ..BoneAgeConfig::default()
        };
        if let Some(c) = channels {
            config.channels = c;
        }
        let inner = gda_core::boneage::BoneAgeModel::new(config, seed).map_err(py_err)?;
        Ok(PyBoneAgeModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = gda_core::boneage::BoneAgeModel::load(path).map_err(py_err)?;
        Ok(PyBoneAgeModel { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn image_size(&self) -> (usize, usize) {
        self.inner.config.input_size
    }

    /// Bone age in months for a grayscale image given as rows of pixels in `[0, 1]`.
    fn predict(&self, pixels: Vec<Vec<f64>>) -> PyResult<f64> {
        predict_bone_age(&self.inner, &to_image(pixels)?).map_err(py_err)
    }

    /// Trains on `n` synthetic radiographs; returns the per-epoch mean squared error.
    #[pyo3(signature = (n, epochs, seed=0))]
    fn train_synthetic(&mut self, py: Python<'_>, n: usize, epochs: usize, seed: u64) -> PyResult<Vec<f64>> {
        let size = self.inner.config.input_size;
        let model = &mut self.inner;
        py.detach(|| {
            let data = synthetic_bone_age_dataset(n, size, seed)?;
            train_bone_age(model, &data, epochs, seed).map(|r| r.epoch_losses)
        })
        .map_err(py_err)
    }

    /// MAE in months over `n` synthetic radiographs.
    #[pyo3(signature = (n, seed=1))]
    fn evaluate_synthetic(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<f64> {
        let size = self.inner.config.input_size;
        let model = &self.inner;
        py.detach(|| {
            let data = synthetic_bone_age_dataset(n, size, seed)?;
            evaluate_bone_age(model, &data).map(|e| e.mae_in_months)
        })
        .map_err(py_err)
    }
}

#[pyfunction]
fn synthetic_hand_xray(bone_age_months: f64, size: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let img = xray::synthetic_hand_xray(bone_age_months, (size, size), seed).map_err(py_err)?;
    Ok(img.pixels().data().chunks(img.width()).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
#[pyo3(signature = (n, seed=7))]
fn generate_synthetic_cases(n: usize, seed: u64) -> PyResult<Vec<PyPatientCase>> {
    let cases = casedata::generate_synthetic_cases(n, seed, &casedata::uniform_mix()).map_err(py_err)?;
    Ok(cases.into_iter().map(|inner| PyPatientCase { inner }).collect())
}

#[pyfunction]
fn parse_cases(path: PathBuf) -> PyResult<Vec<PyPatientCase>> {
    let cases = casedata::parse_cases(path).map_err(py_err)?;
    Ok(cases.into_iter().map(|inner| PyPatientCase { inner }).collect())
}

#[pyfunction]
fn write_cases(path: PathBuf, cases: Vec<PyPatientCase>) -> PyResult<()> {
    let cases: Vec<_> = cases.into_iter().map(|c| c.inner).collect();
    casedata::write_cases(path, &cases).map_err(py_err)
}

#[pyfunction]
fn format_context_string(case: &PyPatientCase, bone_age_months: f64) -> PyResult<String> {
    let r = fusion::integrate_patient_data(&case.inner, bone_age_months).map_err(py_err)?;
    Ok(fusion::format_context_string(&r))
}

#[pyfunction]
#[pyo3(signature = (case, bone_age_months, dim=32, seed=7))]
fn embed_case(case: &PyPatientCase, bone_age_months: f64, dim: usize, seed: u64) -> PyResult<Vec<f64>> {
    let enc = TextEncoder::with_dim(dim, seed).map_err(py_err)?;
    fusion::embed_case(&case.inner, bone_age_months, &enc).map_err(py_err)
}

#[pyfunction]
fn treatment_for(label: &str) -> PyResult<&'static str> {
    Ok(advisor::treatment_for(parse_label(label)?))
}

#[pyfunction]
fn labels() -> Vec<&'static str> {
    DiagnosisLabel::ALL.iter().map(|l| l.as_str()).collect()
}

#[pyfunction]
fn mae_in_months(predicted: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    loss::mae_in_months(&predicted, &actual).map_err(py_err)
}

fn exemplars(context: &[PyPatientCase], encoder: &TextEncoder) -> PyResult<Vec<Exemplar>> {
    context
        .iter()
        .map(|c| {
            let b = c.inner.bone_age_months.ok_or_else(|| {
                PyValueError::new_err(format!("context case `{}` has no bone age", c.inner.case_id))
            })?;
            let e = fusion::embed_case(&c.inner, b, encoder).map_err(py_err)?;
            Exemplar::new(c.inner.clone(), b, e).map_err(py_err)
        })
        .collect()
}

/// First-turn prompt text for `query` with `context` as labeled examples.
#[pyfunction]
#[pyo3(signature = (context, query, dim=32, seed=7))]
fn build_prompt(context: Vec<PyPatientCase>, query: &PyPatientCase, dim: usize, seed: u64) -> PyResult<String> {
    let enc = TextEncoder::with_dim(dim, seed).map_err(py_err)?;
    let ex = exemplars(&context, &enc)?;
    let refs: Vec<&Exemplar> = ex.iter().collect();
    let p = advisor::build_prompt(&refs, &query.inner).map_err(py_err)?;
    Ok(p.diagnosis_text())
}

/// `(diagnosis, treatment)` from the offline backend.
#[pyfunction]
#[pyo3(signature = (context, query, dim=32, seed=7))]
fn mock_advice(context: Vec<PyPatientCase>, query: &PyPatientCase, dim: usize, seed: u64) -> PyResult<(String, String)> {
    let mock = MockBackend::new(dim, seed).map_err(py_err)?;
    let ex = exemplars(&context, &mock.encoder)?;
    let refs: Vec<&Exemplar> = ex.iter().collect();
    let p = advisor::build_prompt(&refs, &query.inner).map_err(py_err)?;
    let a = advisor::complete(&mock, &p, &GenerationSettings::default()).map_err(py_err)?;
    Ok((a.diagnosis_text, a.treatment_text))
}

/// Runs the `gda` command line in-process; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(|| {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("gda".to_string()).chain(args);
        let code = gda_core::cli::run(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8_lossy(&out).into_owned(),
            String::from_utf8_lossy(&err).into_owned(),
        )
    })
}

#[pymodule]
fn gda(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPatientCase>()?;
    m.add_class::<PyBoneAgeModel>()?;
    m.add_function(wrap_pyfunction!(synthetic_hand_xray, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic_cases, m)?)?;
    m.add_function(wrap_pyfunction!(parse_cases, m)?)?;
    m.add_function(wrap_pyfunction!(write_cases, m)?)?;
    m.add_function(wrap_pyfunction!(format_context_string, m)?)?;
    m.add_function(wrap_pyfunction!(embed_case, m)?)?;
    m.add_function(wrap_pyfunction!(treatment_for, m)?)?;
    m.add_function(wrap_pyfunction!(labels, m)?)?;
    m.add_function(wrap_pyfunction!(mae_in_months, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(mock_advice, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
