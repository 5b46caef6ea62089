//! Python module `groupreg`: the file-based pipeline plus a few geometry
//! helpers. Transforms cross the boundary as `(vx, vy, gamma_deg)` tuples.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use groupreg::geometry::{compose_via_reference, RigidTransform};
use groupreg::groupwise::{solve_sequential, RelationMask};
use groupreg::harness::pipeline::{prepare_group, write_scenario};
use groupreg::harness::scenario::SyntheticScenario;
use groupreg::harness::{run_pipeline, Cache, PipelineConfig, PipelineInputs};
use groupreg::Error;

type Tuple = (f64, f64, f64);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidInput(_) | Error::Format { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn tuple(t: &RigidTransform) -> Tuple {
    (t.vx, t.vy, t.gamma_degrees())
}

fn config(preset: &str, overrides: Vec<String>) -> PyResult<PipelineConfig> {
    let mut cfg = PipelineConfig::preset(preset).map_err(to_py)?;
    cfg.apply_overrides(&overrides).map_err(to_py)?;
    Ok(cfg)
}

fn cache(dir: Option<PathBuf>) -> Cache {
    dir.map_or_else(Cache::from_env, Cache::at)
}

/// Transform of image k relative to image l, given both relative to the
/// reference.
#[pyfunction]
fn compose(tk: Tuple, tl: Tuple) -> Tuple {
    let t = |(x, y, g): Tuple| RigidTransform::from_degrees(x, y, g);
    tuple(&compose_via_reference(&t(tk), &t(tl)))
}

/// Resolved configuration as `key = value` text.
#[pyfunction]
#[pyo3(signature = (preset = "default", overrides = vec![]))]
fn config_text(preset: &str, overrides: Vec<String>) -> PyResult<String> {
    Ok(config(preset, overrides)?.to_text())
}

/// Renders a synthetic group into `out_dir`; returns the image paths.
#[pyfunction]
#[pyo3(signature = (out_dir, size = 512, n = 5, max_rot_deg = 180.0, max_shift = 150.0, seed = 1))]
fn synth(py: Python<'_>, out_dir: PathBuf, size: usize, n: usize, max_rot_deg: f64, max_shift: f64, seed: u64) -> PyResult<Vec<PathBuf>> {
    let spec = SyntheticScenario::random(size, n, max_rot_deg, max_shift, seed);
    py.detach(|| write_scenario(&spec, &out_dir)).map_err(to_py)
}

/// Groupwise rigid registration of `images` against `reference`.
#[pyfunction]
#[pyo3(signature = (reference, images, preset = "default", overrides = vec![], cache_dir = None))]
fn register(
    py: Python<'_>,
    reference: PathBuf,
    images: Vec<PathBuf>,
    preset: &str,
    overrides: Vec<String>,
    cache_dir: Option<PathBuf>,
) -> PyResult<Vec<Tuple>> {
    let cfg = config(preset, overrides)?;
    let cache = cache(cache_dir);
    py.detach(|| {
        let inputs = PipelineInputs::load(&reference, &images, None, cfg.meters_per_px)?;
        let (g, _) = prepare_group(&inputs, &cfg, &cache)?;
        solve_sequential(&g, &RelationMask::full(g.len()), &cfg.seeded_solver(cfg.rng_seed))
    })
    .map(|s| s.transforms.iter().map(tuple).collect())
    .map_err(to_py)
}

/// Full pipeline writing its artifacts to `out_dir`. Returns one dict per
/// image with the status, homography and, given ground truth, the metrics.
#[pyfunction]
#[pyo3(signature = (reference, images, out_dir, ground_truth = None, preset = "default", overrides = vec![], cache_dir = None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    reference: PathBuf,
    images: Vec<PathBuf>,
    out_dir: PathBuf,
    ground_truth: Option<PathBuf>,
    preset: &str,
    overrides: Vec<String>,
    cache_dir: Option<PathBuf>,
) -> PyResult<Vec<Bound<'py, pyo3::types::PyDict>>> {
    let cfg = config(preset, overrides)?;
    let cache = cache(cache_dir);
    let (ids, out) = py
        .detach(|| {
            let inputs = PipelineInputs::load(&reference, &images, ground_truth.as_deref(), cfg.meters_per_px)?;
            run_pipeline(&inputs, &cfg, &cache, &out_dir).map(|o| (inputs.ids, o))
        })
        .map_err(to_py)?;
    let mut rows = Vec::new();
    for (k, id) in ids.iter().enumerate() {
        let d = pyo3::types::PyDict::new(py);
        d.set_item("id", id)?;
        d.set_item("rigid", tuple(&out.solution.transforms[k]))?;
        let r = &out.registrations[k];
        d.set_item("status", r.status.as_str())?;
        d.set_item("homography", r.homography.to_row_major().to_vec())?;
        d.set_item("inliers", r.inlier_count)?;
        if let Some(m) = out.metrics.iter().find(|m| &m.image_id == id) {
            d.set_item("rmse_m", m.rmse_m)?;
            d.set_item("trans_err_m", m.trans_err_m)?;
            d.set_item("rot_err_deg", m.rot_err_deg)?;
        }
        rows.push(d);
    }
    Ok(rows)
}

#[pymodule]
#[pyo3(name = "groupreg")]
fn groupreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compose, m)?)?;
    m.add_function(wrap_pyfunction!(config_text, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
