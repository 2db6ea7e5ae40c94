//! C ABI over `semtraj`.
//!
//! Conventions:
//!
//! * every fallible function returns a [`SemtrajStatus`]; results go through
//!   out-pointers that are written only on success;
//! * on failure a message is kept per thread and can be read with
//!   [`semtraj_last_error_message`];
//! * handles are opaque, created by `semtraj_*_load`/`semtraj_kld_*` and
//!   released with the matching `*_free` function (null is accepted);
//! * slices are reported as inclusive year ranges.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use semtraj::corpus::{load_corpus, slice_corpus, CohortSelector, Corpus, LoadOptions};
use semtraj::divergence::{asynchronous_matrix, prepare_models, synchronous_series, BackgroundMode, KldConfig, KldMatrix, SyncSeries};
use semtraj::embedding::{kde_density, KdeModel, KernelMode};
use semtraj::stats::welch_t;
use semtraj::textprep::{normalize_all, NormalizationConfig};
use semtraj::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemtrajStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    MalformedInput = 4,
    EmptyCohort = 5,
    InsufficientData = 6,
    OutOfRange = 7,
    Internal = 99,
}

impl From<&Error> for SemtrajStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => SemtrajStatus::Io,
            Error::MalformedRecord { .. } | Error::DuplicateId { .. } | Error::Serialization(_) => SemtrajStatus::MalformedInput,
            Error::EmptyCohort => SemtrajStatus::EmptyCohort,
            Error::EmptyCorpus | Error::EmptyModel | Error::InsufficientSample(..) => SemtrajStatus::InsufficientData,
            _ => SemtrajStatus::InvalidArgument,
        }
    }
}

/// Kernel normalization for [`semtraj_kde_density`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemtrajKernelMode {
    /// `(1 / (n h)) sum phi(|x - x_i| / h)`.
    AsWritten = 0,
    /// Isotropic d-dimensional Gaussian.
    MultivariateNormalized = 1,
}

/// Parameters of the relative-entropy analyses.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SemtrajKldParams {
    pub window: u32,
    pub start_year: c_int,
    pub lambda: f64,
    pub alpha: f64,
    /// Non-zero: smooth against the whole sliced corpus instead of the pair union.
    pub whole_corpus_background: c_int,
}

/// One slice of a synchronous series.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SemtrajSyncPoint {
    pub slice_start: c_int,
    pub slice_end: c_int,
    /// Zero when the cohort or the field has no text in this slice.
    pub has_value: c_int,
    pub summed_significant_bits: f64,
    pub summed_all_bits: f64,
    pub n_cohort_docs: usize,
    pub n_field_docs: usize,
}

/// Welch two-sample t-test.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SemtrajWelch {
    pub t_stat: f64,
    pub df: f64,
    pub p_two_sided: f64,
}

/// Loaded corpus.
pub struct SemtrajCorpus {
    corpus: Corpus,
}

/// Result of [`semtraj_kld_sync`].
pub struct SemtrajSyncSeries {
    series: SyncSeries,
}

/// Result of [`semtraj_kld_async`].
pub struct SemtrajMatrix {
    matrix: KldMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: SemtrajStatus, message: impl Into<String>) -> SemtrajStatus {
    set_error(message.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard<F>(f: F) -> SemtrajStatus
where
    F: FnOnce() -> Result<(), (SemtrajStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SemtrajStatus::Ok,
        Ok(Err((status, message))) => fail(status, message),
        Err(_) => fail(SemtrajStatus::Internal, "internal panic"),
    }
}

fn lib_err(e: Error) -> (SemtrajStatus, String) {
    (SemtrajStatus::from(&e), e.to_string())
}

fn null(what: &str) -> (SemtrajStatus, String) {
    (SemtrajStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SemtrajStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SemtrajStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be null (with `n == 0`) or point to `n` readable values.
unsafe fn read_slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (SemtrajStatus, String)> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn semtraj_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn semtraj_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a JSON Lines corpus.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn semtraj_corpus_load(path: *const c_char, out: *mut *mut SemtrajCorpus) -> SemtrajStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = read_str(path, "path")?;
        let (corpus, _) = load_corpus(path, &LoadOptions::default()).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SemtrajCorpus { corpus }));
        Ok(())
    })
}

/// Number of documents, 0 for null.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semtraj_corpus_len(corpus: *const SemtrajCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.corpus.len())
}

/// # Safety
/// `corpus` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semtraj_corpus_free(corpus: *mut SemtrajCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Default parameters: two-year slices from 1957, lambda and alpha 0.05.
#[no_mangle]
pub extern "C" fn semtraj_kld_params_default() -> SemtrajKldParams {
    SemtrajKldParams {
        window: 2,
        start_year: 1957,
        lambda: 0.05,
        alpha: 0.05,
        whole_corpus_background: 0,
    }
}

struct Prepared {
    models: semtraj::divergence::SlicedModels,
    config: KldConfig,
}

unsafe fn prepare(
    corpus: *const SemtrajCorpus,
    authors: *const *const c_char,
    n_authors: usize,
    params: *const SemtrajKldParams,
) -> Result<Prepared, (SemtrajStatus, String)> {
    let corpus = &corpus.as_ref().ok_or_else(|| null("corpus"))?.corpus;
    let params = params.as_ref().ok_or_else(|| null("params"))?;
    let ids = read_slice(authors, n_authors, "authors")?
        .iter()
        .map(|&p| read_str(p, "author id").map(String::from))
        .collect::<Result<Vec<_>, _>>()?;
    let cohort = CohortSelector::authors(ids).map_err(lib_err)?;
    if !(params.lambda > 0.0 && params.lambda < 1.0 && params.alpha > 0.0 && params.alpha < 1.0) {
        return Err((SemtrajStatus::InvalidArgument, "lambda and alpha must lie in (0, 1)".into()));
    }
    let slices = slice_corpus(corpus, params.window, params.start_year).map_err(lib_err)?;
    let tokens = normalize_all(
        corpus.documents().iter().map(|d| (d.id.as_str(), d.text.as_str())).collect::<Vec<_>>(),
        &NormalizationConfig::default(),
    );
    let models = prepare_models(&slices, &cohort, &tokens).map_err(lib_err)?;
    let background = if params.whole_corpus_background != 0 {
        BackgroundMode::WholeCorpus
    } else {
        BackgroundMode::PairUnion
    };
    Ok(Prepared {
        models,
        config: KldConfig::new(params.lambda, params.alpha, background),
    })
}

/// Cohort vs field divergence per slice. The cohort is every document with
/// at least one author in `authors`.
///
/// # Safety
/// `corpus` must be a live handle, `authors` must point to `n_authors`
/// NUL-terminated strings, `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn semtraj_kld_sync(
    corpus: *const SemtrajCorpus,
    authors: *const *const c_char,
    n_authors: usize,
    params: *const SemtrajKldParams,
    out: *mut *mut SemtrajSyncSeries,
) -> SemtrajStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = prepare(corpus, authors, n_authors, params)?;
        let series = synchronous_series(&p.models, &p.config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SemtrajSyncSeries { series }));
        Ok(())
    })
}

/// Number of slices in the series, 0 for null.
///
/// # Safety
/// `series` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn semtraj_sync_series_len(series: *const SemtrajSyncSeries) -> usize {
    series.as_ref().map_or(0, |s| s.series.points.len())
}

/// # Safety
/// `series` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_sync_series_point(
    series: *const SemtrajSyncSeries,
    index: usize,
    out: *mut SemtrajSyncPoint,
) -> SemtrajStatus {
    guard(|| {
        let s = &series.as_ref().ok_or_else(|| null("series"))?.series;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let p = s
            .points
            .get(index)
            .ok_or_else(|| (SemtrajStatus::OutOfRange, format!("index {index} beyond {} slices", s.points.len())))?;
        *out = SemtrajSyncPoint {
            slice_start: p.slice.start,
            slice_end: p.slice.end,
            has_value: c_int::from(p.report.is_some()),
            summed_significant_bits: p.report.as_ref().map_or(f64::NAN, |r| r.summed_significant_bits),
            summed_all_bits: p.report.as_ref().map_or(f64::NAN, |r| r.summed_all_bits),
            n_cohort_docs: p.n_cohort_docs,
            n_field_docs: p.n_field_docs,
        };
        Ok(())
    })
}

/// # Safety
/// `series` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semtraj_sync_series_free(series: *mut SemtrajSyncSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Cohort slices (rows) against field slices (columns).
///
/// # Safety
/// Same contract as [`semtraj_kld_sync`].
#[no_mangle]
pub unsafe extern "C" fn semtraj_kld_async(
    corpus: *const SemtrajCorpus,
    authors: *const *const c_char,
    n_authors: usize,
    params: *const SemtrajKldParams,
    out: *mut *mut SemtrajMatrix,
) -> SemtrajStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = prepare(corpus, authors, n_authors, params)?;
        let matrix = asynchronous_matrix(&p.models, &p.config).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(SemtrajMatrix { matrix }));
        Ok(())
    })
}

/// # Safety
/// `matrix` must be a live handle; `rows` and `cols` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_matrix_shape(matrix: *const SemtrajMatrix, rows: *mut usize, cols: *mut usize) -> SemtrajStatus {
    guard(|| {
        let m = &matrix.as_ref().ok_or_else(|| null("matrix"))?.matrix;
        *rows.as_mut().ok_or_else(|| null("rows"))? = m.rows.len();
        *cols.as_mut().ok_or_else(|| null("cols"))? = m.cols.len();
        Ok(())
    })
}

/// Summed significant bits of cell (`row`, `col`).
///
/// # Safety
/// `matrix` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_matrix_value(matrix: *const SemtrajMatrix, row: usize, col: usize, out: *mut f64) -> SemtrajStatus {
    guard(|| {
        let m = &matrix.as_ref().ok_or_else(|| null("matrix"))?.matrix;
        let v = m
            .values
            .get(row)
            .and_then(|r| r.get(col))
            .ok_or_else(|| (SemtrajStatus::OutOfRange, format!("cell ({row}, {col}) out of range")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = *v;
        Ok(())
    })
}

/// Column index of the row minimum.
///
/// # Safety
/// `matrix` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_matrix_row_argmin(matrix: *const SemtrajMatrix, row: usize, out: *mut usize) -> SemtrajStatus {
    guard(|| {
        let m = &matrix.as_ref().ok_or_else(|| null("matrix"))?.matrix;
        let j = m
            .argmin_per_row
            .get(row)
            .ok_or_else(|| (SemtrajStatus::OutOfRange, format!("row {row} out of range")))?;
        *out.as_mut().ok_or_else(|| null("out"))? = *j;
        Ok(())
    })
}

/// Year range of a row (`is_column == 0`) or column slice.
///
/// # Safety
/// `matrix` must be a live handle; `start` and `end` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_matrix_slice(
    matrix: *const SemtrajMatrix,
    is_column: c_int,
    index: usize,
    start: *mut c_int,
    end: *mut c_int,
) -> SemtrajStatus {
    guard(|| {
        let m = &matrix.as_ref().ok_or_else(|| null("matrix"))?.matrix;
        let axis = if is_column != 0 { &m.cols } else { &m.rows };
        let s = axis
            .get(index)
            .ok_or_else(|| (SemtrajStatus::OutOfRange, format!("slice {index} out of range")))?;
        *start.as_mut().ok_or_else(|| null("start"))? = s.start;
        *end.as_mut().ok_or_else(|| null("end"))? = s.end;
        Ok(())
    })
}

/// # Safety
/// `matrix` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semtraj_matrix_free(matrix: *mut SemtrajMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Gaussian kernel density of `n` row-major `dim`-vectors at `query`.
///
/// # Safety
/// `sample` must hold `n * dim` values, `query` `dim` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_kde_density(
    sample: *const f64,
    n: usize,
    dim: usize,
    query: *const f64,
    bandwidth: f64,
    mode: SemtrajKernelMode,
    out: *mut f64,
) -> SemtrajStatus {
    guard(|| {
        if dim == 0 || n == 0 {
            return Err((SemtrajStatus::InvalidArgument, "sample must be non-empty with dim > 0".into()));
        }
        let total = n
            .checked_mul(dim)
            .ok_or_else(|| (SemtrajStatus::InvalidArgument, "n * dim overflows".into()))?;
        let flat = read_slice(sample, total, "sample")?;
        let x = read_slice(query, dim, "query")?;
        let mode = match mode {
            SemtrajKernelMode::AsWritten => KernelMode::AsWritten,
            SemtrajKernelMode::MultivariateNormalized => KernelMode::MultivariateNormalized,
        };
        let model = KdeModel::new(flat.chunks_exact(dim).collect(), bandwidth, mode).map_err(lib_err)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = kde_density(&model, x).map_err(lib_err)?;
        Ok(())
    })
}

/// Welch's unequal-variance t-test of `a` against `b`.
///
/// # Safety
/// `a` and `b` must hold `na` and `nb` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn semtraj_welch_t(a: *const f64, na: usize, b: *const f64, nb: usize, out: *mut SemtrajWelch) -> SemtrajStatus {
    guard(|| {
        let a = read_slice(a, na, "a")?;
        let b = read_slice(b, nb, "b")?;
        let r = welch_t(a, b).map_err(lib_err)?;
        *out.as_mut().ok_or_else(|| null("out"))? = SemtrajWelch {
            t_stat: r.t_stat,
            df: r.df,
            p_two_sided: r.p_two_sided,
        };
        Ok(())
    })
}
