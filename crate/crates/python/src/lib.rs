//! Python bindings: grids, volumes, emitters, the forward model, metrics and the batch commands.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use scatterloc::config::{FrameDtype, RunConfig};
use scatterloc::inverse::{kl_divergence as kl, total_variation as tv, tv_prox as prox, ForwardModel};
use scatterloc::io::{self, exit_code, ReconstructInputs};
use scatterloc::metrics::{match_and_rmse as matching, ssim_volume};
use scatterloc::sensor::BiplaneConfig;
use scatterloc::volume::ri_to_potential;
use scatterloc::{Error, Fluorophore, Grid3, OpticalConstants, ScatteringVolume, Vec3};

fn err(e: Error) -> PyErr {
    match exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(name = "Grid3", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Grid3);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (counts, spacing_um = (0.1, 0.1, 0.1), origin_um = (0.0, 0.0, 0.0)))]
    fn new(counts: (usize, usize, usize), spacing_um: Vec3Tuple, origin_um: Vec3Tuple) -> PyResult<Self> {
        Grid3::new([counts.0, counts.1, counts.2], arr(spacing_um), arr(origin_um))
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn counts(&self) -> [usize; 3] {
        self.0.counts()
    }

    #[getter]
    fn spacing_um(&self) -> Vec3 {
        self.0.spacing()
    }

    #[getter]
    fn origin_um(&self) -> Vec3 {
        self.0.origin()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Grid3(counts={:?}, spacing_um={:?})", self.0.counts(), self.0.spacing())
    }
}

type Vec3Tuple = (f64, f64, f64);

fn arr(t: Vec3Tuple) -> Vec3 {
    [t.0, t.1, t.2]
}

#[pyclass(name = "Fluorophore", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFluorophore(Fluorophore);

#[pymethods]
impl PyFluorophore {
    #[new]
    fn new(position_um: Vec3Tuple, amplitude: f64) -> PyResult<Self> {
        Fluorophore::new(arr(position_um), amplitude).map(Self).map_err(err)
    }

    #[getter]
    fn position_um(&self) -> Vec3 {
        self.0.position
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.0.amplitude
    }

    fn __repr__(&self) -> String {
        format!("Fluorophore(position_um={:?}, amplitude={})", self.0.position, self.0.amplitude)
    }
}

/// Scattering potential sampled on a grid, values x fastest.
#[pyclass(name = "ScatteringVolume", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyVolume(ScatteringVolume);

#[pymethods]
impl PyVolume {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        ScatteringVolume::new(grid.0, values).map(Self).map_err(err)
    }

    #[staticmethod]
    fn zeros(grid: &PyGrid) -> Self {
        Self(ScatteringVolume::zeros(grid.0))
    }

    /// Potential of a refractive-index map.
    #[staticmethod]
    #[pyo3(signature = (grid, refractive_index, wavelength_um = 0.647, background_ri = 1.333))]
    fn from_refractive_index(
        grid: &PyGrid,
        refractive_index: Vec<f64>,
        wavelength_um: f64,
        background_ri: f64,
    ) -> PyResult<Self> {
        let c = OpticalConstants::new(wavelength_um, background_ri).map_err(err)?;
        ri_to_potential(grid.0, &refractive_index, &c).map(Self).map_err(err)
    }

    /// Refractive-index view of the potential.
    #[pyo3(signature = (wavelength_um = 0.647, background_ri = 1.333))]
    fn refractive_index(&self, wavelength_um: f64, background_ri: f64) -> PyResult<Vec<f64>> {
        let c = OpticalConstants::new(wavelength_um, background_ri).map_err(err)?;
        self.0.to_ri(&c).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn max(&self) -> f64 {
        self.0.max()
    }

    fn min(&self) -> f64 {
        self.0.min()
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }
}

/// Biplane forward model for one grid and camera.
#[pyclass(name = "ForwardModel", frozen, skip_from_py_object)]
struct PyModel(ForwardModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (grid, wavelength_um = 0.647, background_ri = 1.333))]
    fn new(grid: &PyGrid, wavelength_um: f64, background_ri: f64) -> PyResult<Self> {
        let c = OpticalConstants::new(wavelength_um, background_ri).map_err(err)?;
        let camera = BiplaneConfig::default_for(&grid.0);
        ForwardModel::new(&grid.0, &c, &camera, Default::default())
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn camera_counts(&self) -> [usize; 2] {
        self.0.camera().config().camera_counts
    }

    /// Noise-free biplane image of one emitter, plane 0 then plane 1, x fastest.
    fn forward(&self, py: Python<'_>, volume: &PyVolume, position_um: Vec3Tuple, amplitude: f64) -> PyResult<Vec<f64>> {
        py.detach(|| self.0.forward(&volume.0, arr(position_um), amplitude))
            .map_err(err)
    }

    /// Image of a unit-amplitude emitter without scattering.
    fn free_space_image(&self, position_um: Vec3Tuple) -> PyResult<Vec<f64>> {
        self.0.free_space_image(arr(position_um)).map_err(err)
    }
}

#[pyclass(name = "RunConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    /// The desk protocol.
    #[new]
    fn new() -> Self {
        Self(RunConfig::default())
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml_str(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(Self).map_err(err)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    fn grid(&self) -> PyResult<PyGrid> {
        self.0.grid().map(PyGrid).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, window_sigma = 1.5, dynamic_range = None))]
fn ssim(a: &PyVolume, b: &PyVolume, window_sigma: f64, dynamic_range: Option<f64>) -> PyResult<f64> {
    ssim_volume(&a.0, &b.0, window_sigma, dynamic_range).map_err(err)
}

/// Optimal assignment within `radius`; returns a dict with pairs and the 3D RMSE (None without matches).
#[pyfunction]
#[pyo3(signature = (estimates, truth, radius = 0.5))]
fn match_and_rmse(py: Python<'_>, estimates: Vec<Vec3Tuple>, truth: Vec<Vec3Tuple>, radius: f64) -> PyResult<Py<PyAny>> {
    let e: Vec<Vec3> = estimates.into_iter().map(arr).collect();
    let t: Vec<Vec3> = truth.into_iter().map(arr).collect();
    to_py(py, &matching(&e, &t, radius).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (model, data, beta = 1e-8))]
fn kl_divergence(model: Vec<f64>, data: Vec<f64>, beta: f64) -> PyResult<f64> {
    kl(&model, &data, beta).map_err(err)
}

#[pyfunction]
fn total_variation(values: Vec<f64>, dims: (usize, usize, usize)) -> PyResult<f64> {
    tv(&values, [dims.0, dims.1, dims.2]).map_err(err)
}

/// Nonnegative TV proximal step; returns `(x, relative duality gap)`.
#[pyfunction]
#[pyo3(signature = (values, weight, dims, max_iter = 500, gap_tol = 1e-8))]
fn tv_prox(values: Vec<f64>, weight: f64, dims: (usize, usize, usize), max_iter: usize, gap_tol: f64) -> PyResult<(Vec<f64>, f64)> {
    let p = prox(&values, weight, [dims.0, dims.1, dims.2], max_iter, gap_tol, None).map_err(err)?;
    let gap = p.relative_gap();
    Ok((p.x, gap))
}

#[pyfunction]
fn read_volume(path: PathBuf) -> PyResult<PyVolume> {
    let bytes = std::fs::read(&path).map_err(|e| err(Error::io(path, e)))?;
    io::decode_volume(&bytes).map(PyVolume).map_err(err)
}

#[pyfunction]
fn write_volume(volume: &PyVolume, path: PathBuf) -> PyResult<()> {
    std::fs::write(&path, io::encode_volume(&volume.0)).map_err(|e| err(Error::io(path, e)))
}

/// Rows of `(id, Fluorophore)`.
#[pyfunction]
fn read_fluorophores(path: PathBuf) -> PyResult<Vec<(usize, PyFluorophore)>> {
    let bytes = std::fs::read(&path).map_err(|e| err(Error::io(path, e)))?;
    let rows = io::decode_fluorophores(&bytes).map_err(err)?;
    Ok(rows.into_iter().map(|(id, m)| (id, PyFluorophore(m))).collect())
}

/// Simulates a dataset into `out`; returns the manifest.
#[pyfunction]
#[pyo3(signature = (config, out, frame_dtype = None))]
fn simulate(py: Python<'_>, config: &PyConfig, out: PathBuf, frame_dtype: Option<&str>) -> PyResult<Py<PyAny>> {
    let dtype = match frame_dtype {
        None => None,
        Some("f64") => Some(FrameDtype::F64),
        Some("u32") => Some(FrameDtype::U32),
        Some(other) => return Err(PyValueError::new_err(format!("unknown frame dtype {other}"))),
    };
    let m = py.detach(|| io::cmd_simulate(&config.0, dtype, &out)).map_err(err)?;
    to_py(py, &m)
}

#[pyfunction]
#[pyo3(signature = (config, frames, out, backgrounds = None, positions = None, frozen_positions = false))]
fn reconstruct(
    py: Python<'_>,
    config: &PyConfig,
    frames: PathBuf,
    out: PathBuf,
    backgrounds: Option<PathBuf>,
    positions: Option<PathBuf>,
    frozen_positions: bool,
) -> PyResult<Py<PyAny>> {
    let inputs = ReconstructInputs {
        frames,
        backgrounds,
        positions,
        frozen_positions,
    };
    let m = py.detach(|| io::cmd_reconstruct(&config.0, &inputs, &out)).map_err(err)?;
    to_py(py, &m)
}

#[pyfunction]
fn evaluate(py: Python<'_>, config: &PyConfig, truth_dir: PathBuf, recon_dir: PathBuf, out: PathBuf) -> PyResult<Py<PyAny>> {
    let e = io::cmd_evaluate(&config.0, &truth_dir, &recon_dir, &out).map_err(err)?;
    to_py(py, &e)
}

/// Runs the arm comparison into `out`; returns the experiment report.
#[pyfunction(name = "bench")]
fn run_bench(py: Python<'_>, config: &PyConfig, out: PathBuf) -> PyResult<Py<PyAny>> {
    let (report, _) = py.detach(|| io::cmd_bench(&config.0, &out)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn scatterloc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyFluorophore>()?;
    m.add_class::<PyVolume>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(match_and_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(total_variation, m)?)?;
    m.add_function(wrap_pyfunction!(tv_prox, m)?)?;
    m.add_function(wrap_pyfunction!(read_volume, m)?)?;
    m.add_function(wrap_pyfunction!(write_volume, m)?)?;
    m.add_function(wrap_pyfunction!(read_fluorophores, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
