//! C ABI over the nomad engine.
//!
//! Every fallible function returns a [`NomadStatus`]. On failure a message
//! is kept per thread and can be read with [`nomad_last_error`]. Objects are
//! opaque handles that must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nomad::metrics::{neighborhood_preservation, random_triplet_accuracy, NpMode};
use nomad::optimizer::{NegativeMode, StepScale, UpdateMode};
use nomad::{LayoutMatrix, NomadError, TrainConfig, VectorDataset, VectorFormat};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NomadStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Dimension = 4,
    Validation = 5,
    Schema = 6,
    Degenerate = 7,
    Divergence = 8,
    Configuration = 9,
    Internal = 10,
    Panic = 11,
}

impl From<&NomadError> for NomadStatus {
    fn from(e: &NomadError) -> Self {
        match e {
            NomadError::Io { .. } => NomadStatus::Io,
            NomadError::Dimension(_) => NomadStatus::Dimension,
            NomadError::Validation { .. } => NomadStatus::Validation,
            NomadError::Parameter(_) | NomadError::Size(_) => NomadStatus::InvalidArgument,
            NomadError::Schema(_) => NomadStatus::Schema,
            NomadError::Degenerate(_) => NomadStatus::Degenerate,
            NomadError::Divergence { .. } => NomadStatus::Divergence,
            NomadError::Configuration(_) => NomadStatus::Configuration,
            NomadError::Internal(_) => NomadStatus::Internal,
        }
    }
}

/// Values of the `format` argument of [`nomad_dataset_load`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NomadFormat {
    RawF32 = 0,
    Csv = 1,
}

/// Training parameters. Start from [`nomad_config_default`].
///
/// `n_clusters == 0` and `lr0 <= 0` mean "derive from the data". The mode
/// fields take the integer values listed next to each.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NomadConfig {
    pub epochs: usize,
    pub k: usize,
    pub n_negatives: usize,
    pub local_draws: usize,
    pub batch_size: usize,
    pub workers: usize,
    pub n_clusters: usize,
    pub seed: u64,
    pub lr0: f64,
    pub kmeans_max_iters: usize,
    pub kmeans_tol_factor: f64,
    /// 0: remote clusters, 1: all but own cluster.
    pub negative_mode: u32,
    /// 0: heads, neighbors and negatives; 1: head only.
    pub update_mode: u32,
    /// 0: batch mean, 1: per point.
    pub step_scale: u32,
}

impl From<&TrainConfig> for NomadConfig {
    fn from(c: &TrainConfig) -> Self {
        NomadConfig {
            epochs: c.epochs,
            k: c.k,
            n_negatives: c.n_negatives,
            local_draws: c.local_draws,
            batch_size: c.batch_size,
            workers: c.workers,
            n_clusters: c.n_clusters.unwrap_or(0),
            seed: c.seed,
            lr0: c.lr0.unwrap_or(0.0),
            kmeans_max_iters: c.kmeans_max_iters,
            kmeans_tol_factor: c.kmeans_tol_factor,
            negative_mode: match c.negative_mode {
                NegativeMode::RemoteClusters => 0,
                NegativeMode::AllButOwnCluster => 1,
            },
            update_mode: match c.update_mode {
                UpdateMode::All => 0,
                UpdateMode::HeadOnly => 1,
            },
            step_scale: match c.step_scale {
                StepScale::BatchMean => 0,
                StepScale::PerPoint => 1,
            },
        }
    }
}

impl TryFrom<&NomadConfig> for TrainConfig {
    type Error = NomadError;

    fn try_from(c: &NomadConfig) -> Result<Self, NomadError> {
        let bad = |field: &str, v: u32| NomadError::Parameter(format!("{field} has no mode {v}"));
        Ok(TrainConfig {
            epochs: c.epochs,
            k: c.k,
            n_negatives: c.n_negatives,
            local_draws: c.local_draws,
            batch_size: c.batch_size,
            workers: c.workers,
            n_clusters: (c.n_clusters > 0).then_some(c.n_clusters),
            seed: c.seed,
            lr0: (c.lr0 > 0.0).then_some(c.lr0),
            kmeans_max_iters: c.kmeans_max_iters,
            kmeans_tol_factor: c.kmeans_tol_factor,
            negative_mode: match c.negative_mode {
                0 => NegativeMode::RemoteClusters,
                1 => NegativeMode::AllButOwnCluster,
                v => return Err(bad("negative_mode", v)),
            },
            update_mode: match c.update_mode {
                0 => UpdateMode::All,
                1 => UpdateMode::HeadOnly,
                v => return Err(bad("update_mode", v)),
            },
            step_scale: match c.step_scale {
                0 => StepScale::BatchMean,
                1 => StepScale::PerPoint,
                v => return Err(bad("step_scale", v)),
            },
        })
    }
}

/// Opaque input vectors.
pub struct NomadDataset(VectorDataset);

/// Opaque 2-D layout.
pub struct NomadLayout(LayoutMatrix);

/// One metric value with its standard error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NomadMetric {
    pub value: f64,
    pub std_error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(NomadError),
}

impl From<NomadError> for Failure {
    fn from(e: NomadError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NomadStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NomadStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("{what} is null"));
            NomadStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(msg);
            NomadStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            NomadStatus::from(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            NomadStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn path_arg(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure::Invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nomad_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the most recent failure on this thread, or NULL if the last
/// call succeeded. Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn nomad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the default training parameters.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nomad_config_default(out: *mut NomadConfig) -> NomadStatus {
    guard(|| write_out(out, NomadConfig::from(&TrainConfig::default()), "out"))
}

/// Copies `n * dims` row-major values into a new dataset.
///
/// # Safety
/// `data` must point to `n * dims` readable floats; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn nomad_dataset_from_f32(
    data: *const f32,
    n: usize,
    dims: usize,
    out: *mut *mut NomadDataset,
) -> NomadStatus {
    guard(|| {
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let len = n
            .checked_mul(dims)
            .ok_or_else(|| Failure::Invalid("n * dims overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        let ds = VectorDataset::new(values, n, dims)?;
        write_out(out, Box::into_raw(Box::new(NomadDataset(ds))), "out")
    })
}

/// Loads vectors from a file. `rows` and `dims` of 0 are inferred.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nomad_dataset_load(
    path: *const c_char,
    format: u32,
    rows: usize,
    dims: usize,
    out: *mut *mut NomadDataset,
) -> NomadStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        let format = match format {
            f if f == NomadFormat::RawF32 as u32 => VectorFormat::RawF32,
            f if f == NomadFormat::Csv as u32 => VectorFormat::Csv,
            f => return Err(Failure::Invalid(format!("unknown vector format {f}"))),
        };
        let ds = nomad::io::load_vectors(path, format, (rows > 0).then_some(rows), (dims > 0).then_some(dims))?;
        write_out(out, Box::into_raw(Box::new(NomadDataset(ds))), "out")
    })
}

/// Number of rows, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nomad_dataset_rows(dataset: *const NomadDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.n())
}

/// Number of columns, or 0 for NULL.
///
/// # Safety
/// `dataset` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nomad_dataset_dims(dataset: *const NomadDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.dims())
}

/// # Safety
/// `dataset` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nomad_dataset_free(dataset: *mut NomadDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Fits a layout. `config` may be NULL for defaults.
///
/// # Safety
/// `dataset` must be a live handle, `config` NULL or readable, `out` valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn nomad_fit(
    dataset: *const NomadDataset,
    config: *const NomadConfig,
    out: *mut *mut NomadLayout,
) -> NomadStatus {
    guard(|| {
        let ds = deref(dataset, "dataset")?;
        let config = match config.as_ref() {
            Some(c) => TrainConfig::try_from(c)?,
            None => TrainConfig::default(),
        };
        let layout = nomad::fit(&ds.0, &config)?;
        write_out(out, Box::into_raw(Box::new(NomadLayout(layout))), "out")
    })
}

/// Number of points, or 0 for NULL.
///
/// # Safety
/// `layout` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nomad_layout_rows(layout: *const NomadLayout) -> usize {
    layout.as_ref().map_or(0, |l| l.0.n())
}

/// Copies the layout as interleaved `x, y` pairs. `len` is the capacity of
/// `out` in doubles and must be at least twice the number of points.
///
/// # Safety
/// `layout` must be a live handle and `out` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nomad_layout_copy(layout: *const NomadLayout, out: *mut f64, len: usize) -> NomadStatus {
    guard(|| {
        let l = deref(layout, "layout")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let need = 2 * l.0.n();
        if len < need {
            return Err(Failure::Invalid(format!("buffer holds {len} values, layout needs {need}")));
        }
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (chunk, p) in dst.chunks_exact_mut(2).zip(&l.0.positions) {
            chunk.copy_from_slice(p);
        }
        Ok(())
    })
}

/// Writes the layout as CSV, using the dataset's ids and labels.
///
/// # Safety
/// Handles must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn nomad_layout_save(
    layout: *const NomadLayout,
    dataset: *const NomadDataset,
    path: *const c_char,
) -> NomadStatus {
    guard(|| {
        let l = deref(layout, "layout")?;
        let ds = deref(dataset, "dataset")?;
        let path = path_arg(path, "path")?;
        nomad::io::save_layout(&l.0, ds.0.ids(), ds.0.labels(), path)?;
        Ok(())
    })
}

/// # Safety
/// `layout` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nomad_layout_free(layout: *mut NomadLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Neighborhood preservation at `k`. `sample_points == 0` scores every
/// point; otherwise that many points are sampled with `seed`.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nomad_neighborhood_preservation(
    dataset: *const NomadDataset,
    layout: *const NomadLayout,
    k: usize,
    sample_points: usize,
    seed: u64,
    out: *mut NomadMetric,
) -> NomadStatus {
    guard(|| {
        let ds = deref(dataset, "dataset")?;
        let l = deref(layout, "layout")?;
        let mode = if sample_points == 0 {
            NpMode::Exact
        } else {
            NpMode::Sampled(sample_points)
        };
        let r = neighborhood_preservation(&ds.0, &l.0, k, mode, seed)?;
        write_out(out, NomadMetric { value: r.value, std_error: r.stderr }, "out")
    })
}

/// Fraction of random triplets whose distance order the layout keeps.
///
/// # Safety
/// Handles must be live and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn nomad_triplet_accuracy(
    dataset: *const NomadDataset,
    layout: *const NomadLayout,
    n_triplets: usize,
    seed: u64,
    out: *mut NomadMetric,
) -> NomadStatus {
    guard(|| {
        let ds = deref(dataset, "dataset")?;
        let l = deref(layout, "layout")?;
        let r = random_triplet_accuracy(&ds.0, &l.0, n_triplets, seed)?;
        write_out(out, NomadMetric { value: r.value, std_error: r.stderr }, "out")
    })
}
