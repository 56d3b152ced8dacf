//! Python bindings: mixtures, the network, the synthetic robot and the
//! collision bounds. Points cross the boundary as `(x, y, z)` tuples and
//! configurations as lists of floats.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tdcr_mdn::collision::{self, box_mesh, parse_obj, EnvironmentMesh};
use tdcr_mdn::gmm::{self, GaussianComponent, Gmm3, Point3, UMatrix};
use tdcr_mdn::mdn::{self, Architecture, MdnParams, TendonConfig};
use tdcr_mdn::synth::{self, RobotSpec};
use tdcr_mdn::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::TrainingDiverged { .. } | Error::Numerical(_) | Error::PathNotFound(_) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type P3 = (f64, f64, f64);

fn point(p: P3) -> Point3 {
    Point3::new(p.0, p.1, p.2)
}

fn tuple(p: &Point3) -> P3 {
    (p.x, p.y, p.z)
}

fn rows(m: &nalgebra::Matrix3<f64>) -> Vec<Vec<f64>> {
    (0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect()).collect()
}

/// Three-dimensional Gaussian mixture with precision-factor components.
#[pyclass(name = "Gmm", module = "tdcr_mdn")]
struct PyGmm {
    inner: Gmm3,
}

#[pymethods]
impl PyGmm {
    /// `components` is a list of `(weight, (mx, my, mz), [u11, u22, u33, u12, u13, u23])`.
    #[new]
    fn new(components: Vec<(f64, P3, [f64; 6])>) -> PyResult<Self> {
        let comps = components.into_iter().map(|(w, m, u)| GaussianComponent::new(w, point(m), UMatrix::from_slice(&u))).collect();
        Ok(Self { inner: Gmm3::new(comps).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Gmm3::from_text(text).map_err(to_py)? })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().collect()
    }

    #[getter]
    fn means(&self) -> Vec<P3> {
        self.inner.means().map(tuple).collect()
    }

    fn pdf(&self, x: P3) -> f64 {
        gmm::gmm_pdf(&self.inner, &point(x))
    }

    fn log_pdf(&self, x: P3) -> f64 {
        self.inner.log_pdf(&point(x))
    }

    fn reduced_nll(&self, points: Vec<P3>) -> PyResult<f64> {
        let pts: Vec<Point3> = points.into_iter().map(point).collect();
        gmm::reduced_nll(&self.inner, &pts).map_err(to_py)
    }

    fn sample(&self, count: usize, seed: u64) -> Vec<P3> {
        gmm::gmm_sample(&self.inner, count, seed).iter().map(tuple).collect()
    }

    #[pyo3(signature = (epsilon = mdn::DEFAULT_COLLAPSE_EPSILON))]
    fn mode_collapse(&self, epsilon: f64) -> bool {
        mdn::detect_mode_collapse(&self.inner, epsilon)
    }

    fn __repr__(&self) -> String {
        format!("Gmm(components={})", self.inner.len())
    }
}

/// Triangle mesh obstacle set.
#[pyclass(name = "Mesh", module = "tdcr_mdn")]
struct PyMesh {
    inner: EnvironmentMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (vertices, triangles, max_edge = collision::DEFAULT_MAX_EDGE))]
    fn new(vertices: Vec<P3>, triangles: Vec<[usize; 3]>, max_edge: f64) -> PyResult<Self> {
        let v = vertices.into_iter().map(point).collect();
        Ok(Self { inner: EnvironmentMesh::with_max_edge(v, triangles, max_edge).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_obj(text: &str) -> PyResult<Self> {
        let (v, t) = parse_obj(text).map_err(to_py)?;
        Ok(Self { inner: EnvironmentMesh::new(v, t).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(name = "box")]
    fn cuboid(lo: P3, hi: P3) -> PyResult<Self> {
        let (v, t) = box_mesh(point(lo), point(hi));
        Ok(Self { inner: EnvironmentMesh::new(v, t).map_err(to_py)? })
    }

    #[getter]
    fn watertight(&self) -> bool {
        self.inner.is_watertight()
    }

    fn contains(&self, p: P3) -> bool {
        self.inner.contains(&point(p))
    }

    fn distance(&self, p: P3) -> f64 {
        self.inner.distance(&point(p))
    }

    fn to_obj(&self) -> String {
        self.inner.to_obj()
    }
}

/// Mixture density network parameters.
#[pyclass(name = "Mdn", module = "tdcr_mdn")]
struct PyMdn {
    inner: MdnParams,
}

#[pymethods]
impl PyMdn {
    /// Freshly initialized network; the means head is biased to `centroid`.
    #[new]
    #[pyo3(signature = (components = 5, seed = 0, centroid = None, trunk = vec![128, 128], head = vec![64]))]
    fn new(components: usize, seed: u64, centroid: Option<P3>, trunk: Vec<usize>, head: Vec<usize>) -> PyResult<Self> {
        let arch = Architecture { components, trunk, head, ..Architecture::default() };
        Ok(Self { inner: MdnParams::init(&arch, centroid.map(point), seed).map_err(to_py)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { inner: mdn::load_params(&bytes).map_err(to_py)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let bytes = mdn::save_params(&self.inner).map_err(to_py)?;
        std::fs::write(path, bytes).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    #[getter]
    fn components(&self) -> usize {
        self.inner.components
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn forward(&self, config: Vec<f64>) -> PyResult<PyGmm> {
        Ok(PyGmm { inner: mdn::mdn_forward(&self.inner, &TendonConfig(config)).map_err(to_py)? })
    }

    /// Mean reduced NLL over `(config, points)` pairs.
    fn loss(&self, batch: Vec<(Vec<f64>, Vec<P3>)>) -> PyResult<f64> {
        let owned: Vec<(TendonConfig, Vec<Point3>)> =
            batch.into_iter().map(|(c, pts)| (TendonConfig(c), pts.into_iter().map(point).collect())).collect();
        let refs: Vec<(&TendonConfig, &[Point3])> = owned.iter().map(|(c, p)| (c, p.as_slice())).collect();
        mdn::mdn_loss(&self.inner, &refs).map_err(to_py)
    }
}

#[pyfunction]
fn reconstruct_precision(u: [f64; 6]) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&gmm::reconstruct_precision(&UMatrix::from_slice(&u)).map_err(to_py)?))
}

#[pyfunction]
fn log_sqrt_det_precision(u: [f64; 6]) -> PyResult<f64> {
    gmm::log_sqrt_det_precision(&UMatrix::from_slice(&u)).map_err(to_py)
}

/// Body point cloud of the synthetic robot at `config`, default geometry.
#[pyfunction]
#[pyo3(signature = (config, approaches = 8, points = 2000, seed = 0))]
fn simulate_config_cloud(config: Vec<f64>, approaches: usize, points: usize, seed: u64) -> PyResult<Vec<P3>> {
    let spec = RobotSpec::default();
    let target = TendonConfig(config);
    if target.len() != RobotSpec::TENDONS || !spec.contains(&target) {
        return Err(PyValueError::new_err("config must hold four displacements within the robot's limits"));
    }
    Ok(synth::config_cloud(&spec, &target, approaches, points, seed).iter().map(tuple).collect())
}

/// Backbone point of the noise-free robot at arc fraction `s`.
#[pyfunction]
fn backbone(config: Vec<f64>, s: f64) -> P3 {
    tuple(&synth::backbone(&RobotSpec::default(), &TendonConfig(config), s))
}

#[pyfunction]
fn config_collision_bound(g: &PyGmm, mesh: &PyMesh) -> f64 {
    collision::config_collision_bound(&g.inner, &mesh.inner).bound
}

#[pyfunction]
fn trajectory_collision_bound(bounds: Vec<f64>) -> f64 {
    collision::trajectory_collision_bound(&bounds)
}

/// `(estimate, standard_error)` from mixture samples.
#[pyfunction]
fn mc_collision_estimate(g: &PyGmm, mesh: &PyMesh, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let e = collision::mc_collision_estimate(&g.inner, &mesh.inner, samples, seed).map_err(to_py)?;
    Ok((e.estimate, e.std_error))
}

#[pymodule]
#[pyo3(name = "tdcr_mdn")]
fn tdcr_mdn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGmm>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyMdn>()?;
    m.add_function(wrap_pyfunction!(reconstruct_precision, m)?)?;
    m.add_function(wrap_pyfunction!(log_sqrt_det_precision, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_config_cloud, m)?)?;
    m.add_function(wrap_pyfunction!(backbone, m)?)?;
    m.add_function(wrap_pyfunction!(config_collision_bound, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory_collision_bound, m)?)?;
    m.add_function(wrap_pyfunction!(mc_collision_estimate, m)?)?;
    Ok(())
}
