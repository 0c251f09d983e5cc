use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use convassess_ffi::*;

const TRANSCRIPT: &str = r#"{"id":"ffi","duration_ms":20000,"segments":[
 {"index":0,"role":"patient","start_ms":0,"end_ms":4000,"text":"The pain keeps me awake most nights."},
 {"index":1,"role":"provider","start_ms":4500,"end_ms":9000,"text":"What worries you most about the nights?"}]}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = ca_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn engine(conf: Option<&str>) -> (CaStatus, *mut CaEngine) {
    let conf = conf.map(c);
    let mut e = ptr::null_mut();
    let st = unsafe { ca_engine_new(conf.as_ref().map_or(ptr::null(), |c| c.as_ptr()), &mut e) };
    (st, e)
}

#[test]
fn analyze_and_query_labels() {
    let (st, e) = engine(Some("pause_good_ms = 9000\n"));
    assert_eq!(st, CaStatus::Ok);
    let t = c(TRANSCRIPT);
    let overlaps = c("start_ms,end_ms\n5000,5200\n");
    let mut a = ptr::null_mut();
    assert_eq!(unsafe { ca_analyze(e, t.as_ptr(), ptr::null(), overlaps.as_ptr(), &mut a) }, CaStatus::Ok);
    assert!(ca_last_error().is_null());

    let mut n = 0usize;
    assert_eq!(unsafe { ca_assessment_segment_count(a, &mut n) }, CaStatus::Ok);
    assert_eq!(n, 2);
    let mut label = CaLabel::None;
    let metric = c("understanding");
    assert_eq!(unsafe { ca_assessment_label(a, 1, metric.as_ptr(), &mut label) }, CaStatus::Ok);
    assert_eq!(label, CaLabel::Good);
    let metric = c("presence");
    assert_eq!(unsafe { ca_assessment_label(a, 1, metric.as_ptr(), &mut label) }, CaStatus::Ok);
    assert_eq!(label, CaLabel::Bad);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { ca_assessment_to_json(a, &mut json) }, CaStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    let parsed = convassess::Assessment::from_json(text.as_bytes()).unwrap();
    assert_eq!(parsed.conversation_id, "ffi");
    assert_eq!(parsed.config["pause_good_ms"], 9000);
    unsafe {
        ca_string_free(json);
        ca_assessment_free(a);
        ca_engine_free(e);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    let (st, e) = engine(Some("pause_good_ms = soon\n"));
    assert_eq!(st, CaStatus::Config);
    assert!(e.is_null());
    assert!(last_error().contains("pause_good_ms"));

    let (st, e) = engine(None);
    assert_eq!(st, CaStatus::Ok);
    let mut a = ptr::null_mut();
    let bad = c("{\"id\": 1");
    assert_eq!(unsafe { ca_analyze(e, bad.as_ptr(), ptr::null(), ptr::null(), &mut a) }, CaStatus::Format);
    assert!(a.is_null());

    let lonely = c(r#"{"id":"p","duration_ms":2000,"segments":[{"index":0,"role":"patient","start_ms":0,"end_ms":1000,"text":"Hi."}]}"#);
    assert_eq!(unsafe { ca_analyze(e, lonely.as_ptr(), ptr::null(), ptr::null(), &mut a) }, CaStatus::Assessment);
    assert!(last_error().contains("provider"));

    let t = c(TRANSCRIPT);
    let energy = c("frame_ms,start_offset_ms\nnot numbers\n");
    assert_eq!(unsafe { ca_analyze(e, t.as_ptr(), energy.as_ptr(), ptr::null(), &mut a) }, CaStatus::Format);

    assert_eq!(unsafe { ca_analyze(e, ptr::null(), ptr::null(), ptr::null(), &mut a) }, CaStatus::NullArgument);
    assert_eq!(unsafe { ca_analyze(ptr::null_mut(), t.as_ptr(), ptr::null(), ptr::null(), &mut a) }, CaStatus::NullArgument);
    let invalid = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { ca_analyze(e, invalid.as_ptr().cast(), ptr::null(), ptr::null(), &mut a) },
        CaStatus::InvalidUtf8
    );

    assert_eq!(unsafe { ca_analyze(e, t.as_ptr(), ptr::null(), ptr::null(), &mut a) }, CaStatus::Ok);
    let mut label = CaLabel::None;
    let unknown = c("charm");
    assert_eq!(unsafe { ca_assessment_label(a, 0, unknown.as_ptr(), &mut label) }, CaStatus::OutOfRange);
    let metric = c("empathy");
    assert_eq!(unsafe { ca_assessment_label(a, 9, metric.as_ptr(), &mut label) }, CaStatus::OutOfRange);
    assert!(last_error().contains('9'));

    unsafe {
        ca_assessment_free(a);
        ca_engine_free(e);
        ca_engine_free(ptr::null_mut());
        ca_assessment_free(ptr::null_mut());
        ca_string_free(ptr::null_mut());
    }
}

#[test]
fn version_is_static() {
    let v = unsafe { CStr::from_ptr(ca_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn target_dir() -> PathBuf {
    // Integration test binaries live in <target>/<profile>/deps.
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = manifest.join("include/convassess.h");
    assert!(header.exists(), "header not generated");
    let lib = target_dir().join("libconvassess_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C link check: no cc or static library");
        return;
    }
    let work = tempfile::tempdir().unwrap();
    let exe = work.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).arg(TRANSCRIPT).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "understanding=1 error=3");
}
