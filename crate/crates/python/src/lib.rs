//! Python bindings. Rasters cross the boundary as nested lists indexed
//! `[y][x]`; probability maps as `[y][x][class]`.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyFileNotFoundError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nucleitk_core::binarize::{self, Polarity};
use nucleitk_core::inpaint;
use nucleitk_core::mask::{self, Connectivity, Raster};
use nucleitk_core::metrics;
use nucleitk_core::netspec::{self, Builtin};
use nucleitk_core::pipeline::{self, AugmentationSpec, Flip, PatchSource};
use nucleitk_core::schedule::{self, DiscriminatorReadout, TaskLosses};
use nucleitk_core::Error;

create_exception!(nucleitk, NucleitkError, PyException);

type Rows<T> = Vec<Vec<T>>;
type ScheduleTuple = (u64, f64, f64, f64, f64, f64);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotFound(p) => PyFileNotFoundError::new_err(p.display().to_string()),
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::Domain(_)
        | Error::Validation(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidRaster(_)
        | Error::DegenerateHistogram(_)) => PyValueError::new_err(e.to_string()),
        e => NucleitkError::new_err(e.to_string()),
    }
}

fn raster<T: Copy>(rows: Vec<Vec<T>>) -> PyResult<Raster<T>> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Raster::new(width, height, rows.into_iter().flatten().collect()).map_err(to_py)
}

fn rows<T: Copy>(r: &Raster<T>) -> Vec<Vec<T>> {
    r.as_slice()
        .chunks(r.width().max(1))
        .map(<[T]>::to_vec)
        .collect()
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn connectivity(c: u32) -> PyResult<Connectivity> {
    Connectivity::try_from(c).map_err(to_py)
}

/// Fill settings for fast-marching inpainting.
#[pyclass(module = "nucleitk", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct InpaintConfig {
    radius: usize,
    use_gradient_term: bool,
}

#[pymethods]
impl InpaintConfig {
    #[new]
    #[pyo3(signature = (radius = 3, use_gradient_term = false))]
    fn new(radius: usize, use_gradient_term: bool) -> PyResult<Self> {
        let cfg = Self {
            radius,
            use_gradient_term,
        };
        cfg.core().validate().map_err(to_py)?;
        Ok(cfg)
    }

    fn __repr__(&self) -> String {
        format!(
            "InpaintConfig(radius={}, use_gradient_term={})",
            self.radius,
            if self.use_gradient_term {
                "True"
            } else {
                "False"
            }
        )
    }
}

impl InpaintConfig {
    fn core(&self) -> inpaint::InpaintConfig {
        inpaint::InpaintConfig {
            radius: self.radius,
            use_gradient_term: self.use_gradient_term,
        }
    }
}

fn config_or_default(cfg: Option<&InpaintConfig>) -> inpaint::InpaintConfig {
    cfg.map(InpaintConfig::core).unwrap_or_default()
}

#[pyfunction]
#[pyo3(signature = (mask, connectivity = 8))]
fn connected_components(mask: Vec<Vec<bool>>, connectivity: u32) -> PyResult<Vec<Vec<u16>>> {
    let lm = mask::connected_components(&raster(mask)?, self::connectivity(connectivity)?)
        .map_err(to_py)?;
    Ok(rows(&lm))
}

#[pyfunction]
fn count_objects(labels: Vec<Vec<u16>>) -> PyResult<usize> {
    Ok(mask::count_objects(&raster(labels)?))
}

#[pyfunction]
fn otsu_threshold(image: Vec<Vec<u8>>) -> PyResult<u8> {
    binarize::otsu_threshold(&raster(image)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, polarity = "dark"))]
fn otsu_segment(image: Vec<Vec<u8>>, polarity: &str) -> PyResult<Vec<Vec<bool>>> {
    let m = binarize::otsu_segment(&raster(image)?, parse::<Polarity>(polarity)?).map_err(to_py)?;
    Ok(rows(&m))
}

#[pyfunction]
fn eikonal_distance(hole: Vec<Vec<bool>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(
        &inpaint::eikonal_distance(&raster(hole)?).map_err(to_py)?,
    ))
}

#[pyfunction]
#[pyo3(signature = (image, hole, config = None))]
fn fast_marching_inpaint(
    image: Vec<Vec<u8>>,
    hole: Vec<Vec<bool>>,
    config: Option<PyRef<'_, InpaintConfig>>,
) -> PyResult<Vec<Vec<u8>>> {
    let cfg = config_or_default(config.as_deref());
    let out =
        inpaint::fast_marching_inpaint(&raster(image)?, &raster(hole)?, &cfg).map_err(to_py)?;
    Ok(rows(&out))
}

#[pyfunction]
#[pyo3(signature = (s_raw, m, polarity = "dark"))]
fn compute_aux_mask(
    s_raw: Vec<Vec<u8>>,
    m: Vec<Vec<bool>>,
    polarity: &str,
) -> PyResult<Vec<Vec<bool>>> {
    let aux = pipeline::compute_aux_mask(&raster(s_raw)?, &raster(m)?, parse(polarity)?)
        .map_err(to_py)?;
    Ok(rows(&aux))
}

/// Returns `(inpainted_image, aux_mask)`.
#[pyfunction]
#[pyo3(signature = (s_raw, m, config = None, polarity = "dark"))]
fn nuclei_inpaint(
    s_raw: Vec<Vec<u8>>,
    m: Vec<Vec<bool>>,
    config: Option<PyRef<'_, InpaintConfig>>,
    polarity: &str,
) -> PyResult<(Rows<u8>, Rows<bool>)> {
    let cfg = config_or_default(config.as_deref());
    let (img, aux) = pipeline::nuclei_inpaint(&raster(s_raw)?, &raster(m)?, &cfg, parse(polarity)?)
        .map_err(to_py)?;
    Ok((rows(&img), rows(&aux)))
}

#[pyfunction]
fn normalize_image(values: Vec<Vec<f64>>) -> PyResult<Vec<Vec<u8>>> {
    Ok(rows(
        &pipeline::normalize_raster(&raster(values)?).map_err(to_py)?,
    ))
}

#[pyfunction]
fn aggregated_jaccard_index(pred: Vec<Vec<u16>>, gt: Vec<Vec<u16>>) -> PyResult<f64> {
    metrics::aggregated_jaccard_index(&raster(pred)?, &raster(gt)?).map_err(to_py)
}

#[pyfunction]
fn pixel_f1(pred: Vec<Vec<bool>>, gt: Vec<Vec<bool>>) -> PyResult<f64> {
    metrics::pixel_f1(&raster(pred)?, &raster(gt)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, iou_threshold = 0.5))]
fn object_f1(pred: Vec<Vec<u16>>, gt: Vec<Vec<u16>>, iou_threshold: f64) -> PyResult<f64> {
    metrics::object_f1(&raster(pred)?, &raster(gt)?, iou_threshold).map_err(to_py)
}

/// Entropy of a `[y][x][class]` probability map, natural log.
#[pyfunction]
fn entropy_map(prob: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<Vec<f64>>> {
    let height = prob.len();
    let width = prob.first().map_or(0, Vec::len);
    let channels = prob.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if prob
        .iter()
        .any(|r| r.len() != width || r.iter().any(|p| p.len() != channels))
    {
        return Err(PyValueError::new_err("probability map must be rectangular"));
    }
    let data = prob.into_iter().flatten().flatten().collect();
    let p = metrics::ProbMap::new(width, height, channels, data).map_err(to_py)?;
    Ok(rows(&metrics::entropy_map(&p)))
}

#[pyfunction]
#[pyo3(signature = (p_s, beta = schedule::DEFAULT_BETA))]
fn task_weight(p_s: f64, beta: f64) -> PyResult<f64> {
    schedule::task_weight(p_s, beta).map_err(to_py)
}

#[pyfunction]
fn adversarial_weight(t: f64) -> PyResult<f64> {
    schedule::adversarial_weight(t).map_err(to_py)
}

#[pyfunction]
fn learning_rate(step: u64, total_steps: u64) -> PyResult<f64> {
    schedule::learning_rate(step, total_steps).map_err(to_py)
}

/// `losses` maps `l_rpn, l_det, l_sem_seg, l_img_da, l_sem_da, l_ins_da`
/// to values; `readout` is `(p_s_img, p_s_sem, p_s_ins)`. Returns the total
/// and a dict of the weights used.
#[pyfunction]
#[pyo3(signature = (losses, readout, t, beta = schedule::DEFAULT_BETA))]
fn combine_losses<'py>(
    py: Python<'py>,
    losses: &Bound<'py, PyDict>,
    readout: (f64, f64, f64),
    t: f64,
    beta: f64,
) -> PyResult<(f64, Bound<'py, PyDict>)> {
    let get = |k: &str| -> PyResult<f64> {
        losses
            .get_item(k)?
            .ok_or_else(|| PyValueError::new_err(format!("missing loss {k:?}")))?
            .extract()
    };
    let l = TaskLosses {
        l_rpn: get("l_rpn")?,
        l_det: get("l_det")?,
        l_sem_seg: get("l_sem_seg")?,
        l_img_da: get("l_img_da")?,
        l_sem_da: get("l_sem_da")?,
        l_ins_da: get("l_ins_da")?,
    };
    let r = DiscriminatorReadout::new(readout.0, readout.1, readout.2).map_err(to_py)?;
    let (total, w) = schedule::combine_losses(&l, &r, t, beta).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("alpha_img", w.alpha_img)?;
    d.set_item("alpha_ins", w.alpha_ins)?;
    d.set_item("alpha_sem", w.alpha_sem)?;
    d.set_item("alpha_da", w.alpha_da)?;
    d.set_item("beta", w.beta)?;
    Ok((total, d))
}

/// Warmup, constant and final learning-rate phases.
#[pyclass(module = "nucleitk", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct LrSchedule {
    base: f64,
    final_lr: f64,
    warmup_steps: u64,
}

#[pymethods]
impl LrSchedule {
    #[new]
    #[pyo3(signature = (base = schedule::DEFAULT_BASE_LR, final_lr = schedule::DEFAULT_FINAL_LR, warmup_steps = schedule::DEFAULT_WARMUP_STEPS))]
    fn new(base: f64, final_lr: f64, warmup_steps: u64) -> Self {
        Self {
            base,
            final_lr,
            warmup_steps,
        }
    }

    fn at(&self, step: u64, total_steps: u64) -> PyResult<f64> {
        self.core().at(step, total_steps).map_err(to_py)
    }

    /// Rows `(step, alpha_img, alpha_ins, alpha_sem, alpha_da, lr)` with
    /// balanced discriminator readouts throughout.
    #[pyo3(signature = (total_steps, beta = schedule::DEFAULT_BETA))]
    fn emit(&self, total_steps: u64, beta: f64) -> PyResult<Vec<ScheduleTuple>> {
        let rows = schedule::emit_schedule(total_steps, beta, None, &self.core()).map_err(to_py)?;
        Ok(rows
            .into_iter()
            .map(|r| {
                (
                    r.step,
                    r.alpha_img,
                    r.alpha_ins,
                    r.alpha_sem,
                    r.alpha_da,
                    r.lr,
                )
            })
            .collect())
    }
}

impl LrSchedule {
    fn core(&self) -> schedule::LrSchedule {
        schedule::LrSchedule {
            base: self.base,
            final_lr: self.final_lr,
            warmup_steps: self.warmup_steps,
        }
    }
}

/// `C x H x W` feature-map shape.
#[pyclass(module = "nucleitk", get_all, eq, frozen, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct TensorShape {
    channels: usize,
    height: usize,
    width: usize,
}

#[pymethods]
impl TensorShape {
    #[new]
    fn new(channels: usize, height: usize, width: usize) -> PyResult<Self> {
        netspec::TensorShape::new(channels, height, width).map_err(to_py)?;
        Ok(Self {
            channels,
            height,
            width,
        })
    }

    fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn __repr__(&self) -> String {
        format!(
            "TensorShape({}, {}, {})",
            self.channels, self.height, self.width
        )
    }

    fn __str__(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl From<netspec::TensorShape> for TensorShape {
    fn from(s: netspec::TensorShape) -> Self {
        Self {
            channels: s.channels,
            height: s.height,
            width: s.width,
        }
    }
}

#[pyfunction]
#[pyo3(signature = (input, kernel, stride, padding, out_channels))]
fn conv_output_shape(
    input: PyRef<'_, TensorShape>,
    kernel: usize,
    stride: usize,
    padding: usize,
    out_channels: usize,
) -> PyResult<TensorShape> {
    let s = netspec::TensorShape::new(input.channels, input.height, input.width).map_err(to_py)?;
    let p = netspec::ConvParams {
        kernel,
        stride,
        padding,
    };
    Ok(netspec::conv_output_shape(s, &p, out_channels)
        .map_err(to_py)?
        .into())
}

/// Checks a built-in shape table (`dimg`, `dsem`, `img_pool`,
/// `ins_flatten`). Returns `(passed, report_text)`.
#[pyfunction]
fn validate_builtin(name: &str) -> PyResult<(bool, String)> {
    let r = netspec::validate_builtin(parse::<Builtin>(name)?);
    Ok((r.passed(), r.to_string()))
}

/// Seeded random-access patch generator over gray images and label maps.
#[pyclass(module = "nucleitk", frozen)]
struct PatchSampler {
    inner: pipeline::PatchSampler,
}

#[pymethods]
impl PatchSampler {
    /// `sources` is a list of `(id, image, labels)`.
    #[new]
    #[pyo3(signature = (sources, size, count, seed = 0, augment = true))]
    fn new(
        sources: Vec<(String, Rows<u8>, Rows<u16>)>,
        size: usize,
        count: usize,
        seed: u64,
        augment: bool,
    ) -> PyResult<Self> {
        let sources = sources
            .into_iter()
            .map(|(id, img, lab)| PatchSource::new(id, raster(img)?, raster(lab)?).map_err(to_py))
            .collect::<PyResult<Vec<_>>>()?;
        let aug = if augment {
            AugmentationSpec {
                seed,
                ..AugmentationSpec::default()
            }
        } else {
            AugmentationSpec::none(seed)
        };
        let inner = pipeline::PatchSampler::new(sources, size, count, aug).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Patch `index` as a dict with `image`, `labels`, `source`, `offset`,
    /// `rotation`, `flip`, `scale` and `object_count`.
    fn patch<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyDict>> {
        if index >= self.inner.len() {
            return Err(PyValueError::new_err(format!(
                "patch index {index} out of range"
            )));
        }
        let p = self.inner.patch(index);
        let a = p.provenance.augmentation;
        let d = PyDict::new(py);
        d.set_item("index", p.index)?;
        d.set_item("image", rows(&p.image))?;
        d.set_item("labels", rows(&p.labels))?;
        d.set_item("source", p.provenance.source)?;
        d.set_item("offset", p.provenance.offset)?;
        d.set_item("rotation", a.quarter_turns as u32 * 90)?;
        d.set_item(
            "flip",
            match a.flip {
                Flip::None => "none",
                Flip::Horizontal => "h",
                Flip::Vertical => "v",
            },
        )?;
        d.set_item("scale", a.scale)?;
        d.set_item("object_count", p.object_count)?;
        Ok(d)
    }
}

#[pyfunction]
fn version_and_provenance() -> String {
    nucleitk_core::version_and_provenance()
}

#[pymodule]
fn nucleitk(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NucleitkError", m.py().get_type::<NucleitkError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<InpaintConfig>()?;
    m.add_class::<LrSchedule>()?;
    m.add_class::<TensorShape>()?;
    m.add_class::<PatchSampler>()?;
    m.add_function(wrap_pyfunction!(connected_components, m)?)?;
    m.add_function(wrap_pyfunction!(count_objects, m)?)?;
    m.add_function(wrap_pyfunction!(otsu_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(otsu_segment, m)?)?;
    m.add_function(wrap_pyfunction!(eikonal_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fast_marching_inpaint, m)?)?;
    m.add_function(wrap_pyfunction!(compute_aux_mask, m)?)?;
    m.add_function(wrap_pyfunction!(nuclei_inpaint, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_image, m)?)?;
    m.add_function(wrap_pyfunction!(aggregated_jaccard_index, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_f1, m)?)?;
    m.add_function(wrap_pyfunction!(object_f1, m)?)?;
    m.add_function(wrap_pyfunction!(entropy_map, m)?)?;
    m.add_function(wrap_pyfunction!(task_weight, m)?)?;
    m.add_function(wrap_pyfunction!(adversarial_weight, m)?)?;
    m.add_function(wrap_pyfunction!(learning_rate, m)?)?;
    m.add_function(wrap_pyfunction!(combine_losses, m)?)?;
    m.add_function(wrap_pyfunction!(conv_output_shape, m)?)?;
    m.add_function(wrap_pyfunction!(validate_builtin, m)?)?;
    m.add_function(wrap_pyfunction!(version_and_provenance, m)?)?;
    Ok(())
}
