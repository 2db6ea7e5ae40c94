use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use semtraj_ffi::*;

fn write_corpus(path: &Path) {
    // cohort writes about "alpha" early and "gamma" late; the field does the reverse
    let mut text = String::new();
    for s in 0..4 {
        for i in 0..12 {
            let year = 1957 + 2 * s + i % 2;
            let cohort = i < 4;
            let topic = match (cohort, s < 2) {
                (true, true) | (false, false) => "alpha beta delta",
                _ => "gamma kappa sigma",
            };
            let author = if cohort { "Cohort, A.".to_string() } else { format!("Field {s}.{i}") };
            text.push_str(&format!(
                "{{\"id\":\"s{s}d{i}\",\"year\":{year},\"authors\":[\"{author}\"],\"title\":\"{topic} {topic} omega{i} theta\"}}\n"
            ));
        }
    }
    std::fs::write(path, text).unwrap();
}

fn last_error() -> String {
    let p = semtraj_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(path: &Path) -> *mut SemtrajCorpus {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut corpus = ptr::null_mut();
    assert_eq!(unsafe { semtraj_corpus_load(c.as_ptr(), &mut corpus) }, SemtrajStatus::Ok);
    corpus
}

#[test]
fn sync_and_async_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&path);
    let corpus = load(&path);
    assert_eq!(unsafe { semtraj_corpus_len(corpus) }, 48);

    let author = CString::new("Cohort, A.").unwrap();
    let authors = [author.as_ptr()];
    let params = semtraj_kld_params_default();

    let mut series = ptr::null_mut();
    let st = unsafe { semtraj_kld_sync(corpus, authors.as_ptr(), 1, &params, &mut series) };
    assert_eq!(st, SemtrajStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { semtraj_sync_series_len(series) }, 4);
    let mut point = SemtrajSyncPoint::default();
    assert_eq!(unsafe { semtraj_sync_series_point(series, 0, &mut point) }, SemtrajStatus::Ok);
    assert_eq!((point.slice_start, point.slice_end), (1957, 1958));
    assert_eq!(point.has_value, 1);
    assert_eq!((point.n_cohort_docs, point.n_field_docs), (4, 8));
    assert!(point.summed_all_bits > 0.0);
    assert_eq!(unsafe { semtraj_sync_series_point(series, 4, &mut point) }, SemtrajStatus::OutOfRange);
    assert!(last_error().contains("index 4"));
    unsafe { semtraj_sync_series_free(series) };

    let mut matrix = ptr::null_mut();
    let st = unsafe { semtraj_kld_async(corpus, authors.as_ptr(), 1, &params, &mut matrix) };
    assert_eq!(st, SemtrajStatus::Ok, "{}", last_error());
    let (mut rows, mut cols) = (0, 0);
    assert_eq!(unsafe { semtraj_matrix_shape(matrix, &mut rows, &mut cols) }, SemtrajStatus::Ok);
    assert_eq!((rows, cols), (4, 4));
    for r in 0..rows {
        let mut j = usize::MAX;
        assert_eq!(unsafe { semtraj_matrix_row_argmin(matrix, r, &mut j) }, SemtrajStatus::Ok);
        let mut best = 0.0;
        unsafe { semtraj_matrix_value(matrix, r, j, &mut best) };
        for c in 0..cols {
            let mut v = 0.0;
            assert_eq!(unsafe { semtraj_matrix_value(matrix, r, c, &mut v) }, SemtrajStatus::Ok);
            assert!(best <= v);
        }
    }
    let (mut start, mut end) = (0, 0);
    assert_eq!(unsafe { semtraj_matrix_slice(matrix, 1, 3, &mut start, &mut end) }, SemtrajStatus::Ok);
    assert_eq!((start, end), (1963, 1964));
    unsafe {
        semtraj_matrix_free(matrix);
        semtraj_corpus_free(corpus);
    }
}

#[test]
fn errors_map_to_codes() {
    let mut corpus = ptr::null_mut();
    assert_eq!(unsafe { semtraj_corpus_load(ptr::null(), &mut corpus) }, SemtrajStatus::NullPointer);
    let missing = CString::new("/nonexistent/corpus.jsonl").unwrap();
    assert_eq!(unsafe { semtraj_corpus_load(missing.as_ptr(), &mut corpus) }, SemtrajStatus::Io);
    assert!(corpus.is_null());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&path);
    let corpus = load(&path);
    let nobody = CString::new("Nobody").unwrap();
    let mut series = ptr::null_mut();
    let params = semtraj_kld_params_default();
    let st = unsafe { semtraj_kld_sync(corpus, [nobody.as_ptr()].as_ptr(), 1, &params, &mut series) };
    assert_eq!(st, SemtrajStatus::EmptyCohort);
    let bad = SemtrajKldParams { lambda: 1.5, ..params };
    let st = unsafe { semtraj_kld_sync(corpus, [nobody.as_ptr()].as_ptr(), 1, &bad, &mut series) };
    assert_eq!(st, SemtrajStatus::InvalidArgument);
    assert!(series.is_null());
    unsafe {
        semtraj_corpus_free(corpus);
        semtraj_corpus_free(ptr::null_mut());
    }
}

#[test]
fn kde_and_welch() {
    let sample = [0.0, 0.0, 1.0, 1.0];
    let mut d = 0.0;
    let st = unsafe { semtraj_kde_density(sample.as_ptr(), 2, 2, [0.0, 0.0].as_ptr(), 1.0, SemtrajKernelMode::MultivariateNormalized, &mut d) };
    assert_eq!(st, SemtrajStatus::Ok);
    let two_pi = 2.0 * std::f64::consts::PI;
    let expected = (1.0 + (-1.0f64).exp()) / (2.0 * two_pi);
    assert!((d - expected).abs() < 1e-12);
    let st = unsafe { semtraj_kde_density(sample.as_ptr(), 2, 2, ptr::null(), 1.0, SemtrajKernelMode::AsWritten, &mut d) };
    assert_eq!(st, SemtrajStatus::NullPointer);

    let a = [1.0, 2.0, 3.0, 4.0];
    let b = [2.0, 4.0, 6.0, 8.0];
    let mut w = SemtrajWelch::default();
    assert_eq!(unsafe { semtraj_welch_t(a.as_ptr(), 4, b.as_ptr(), 4, &mut w) }, SemtrajStatus::Ok);
    assert!((w.t_stat + 1.7321).abs() < 1e-4);
    assert!((w.df - 4.4118).abs() < 1e-4);
    assert_eq!(unsafe { semtraj_welch_t(a.as_ptr(), 1, b.as_ptr(), 4, &mut w) }, SemtrajStatus::InsufficientData);
}

#[test]
fn version_is_cargo_version() {
    let v = unsafe { CStr::from_ptr(semtraj_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/semtraj.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "semtraj_corpus_load",
        "semtraj_kld_sync",
        "semtraj_kld_async",
        "semtraj_matrix_row_argmin",
        "semtraj_kde_density",
        "semtraj_welch_t",
        "semtraj_last_error_message",
        "typedef struct SemtrajCorpus SemtrajCorpus;",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // Syntax-check with the system C compiler when there is one.
    let probe = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status();
    if let Ok(status) = probe {
        assert!(status.success(), "header does not compile as C");
    }
}
