use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use stqa::config::RunConfig;
use stqa::corpus::{generate_synthetic, sample_to_json, SyntheticConfig};
use stqa::model::prepare_sample;
use stqa::train::train;
use stqa_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = stqa_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn take(s: *mut std::ffi::c_char) -> String {
    let out = CStr::from_ptr(s).to_str().unwrap().to_string();
    stqa_string_free(s);
    out
}

#[test]
fn predict_matches_core() {
    let mut cfg = RunConfig::toy();
    cfg.epochs = 1;
    let ds = generate_synthetic(SyntheticConfig { num_samples: 8, vocab_size: 12, seed: 5 }).unwrap();
    let outcome = train(&cfg, &ds, None, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    outcome.best.save(&path).unwrap();

    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(stqa_model_load(c(path.to_str().unwrap()).as_ptr(), &mut model), StqaStatus::Ok);
        assert!(!model.is_null());

        let mut hash = ptr::null_mut();
        assert_eq!(stqa_model_config_hash(model, &mut hash), StqaStatus::Ok);
        assert_eq!(take(hash), cfg.model_hash());

        for sample in &ds.samples {
            let mut out = ptr::null_mut();
            assert_eq!(stqa_predict(model, c(&sample_to_json(sample)).as_ptr(), &mut out), StqaStatus::Ok);
            let expected = outcome.model.predict(&prepare_sample(sample, false, &[]).unwrap()).unwrap().to_json_line();
            assert_eq!(take(out), expected);
        }

        let mut out = ptr::null_mut();
        assert_eq!(stqa_predict(model, c("{not json").as_ptr(), &mut out), StqaStatus::MalformedRecord);
        assert!(out.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(stqa_predict(model, ptr::null(), &mut out), StqaStatus::NullArgument);
        stqa_model_free(model);
    }
}

#[test]
fn load_errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(stqa_model_load(c("/nonexistent/model.ckpt").as_ptr(), &mut model), StqaStatus::Io);
        assert!(model.is_null());
        assert!(last_error().contains("/nonexistent/model.ckpt"));

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.ckpt");
        std::fs::write(&junk, b"definitely not a checkpoint").unwrap();
        assert_eq!(stqa_model_load(c(junk.to_str().unwrap()).as_ptr(), &mut model), StqaStatus::Checkpoint);
        assert_eq!(stqa_model_load(ptr::null(), &mut model), StqaStatus::NullArgument);
        assert_eq!(stqa_model_load(c("x").as_ptr(), ptr::null_mut()), StqaStatus::NullArgument);
        stqa_model_free(ptr::null_mut());
    }
}

#[test]
fn metrics() {
    unsafe {
        let mut d = 0usize;
        assert_eq!(stqa_levenshtein(c("kitten").as_ptr(), c("sitting").as_ptr(), &mut d), StqaStatus::Ok);
        assert_eq!(d, 3);
        assert!(stqa_last_error().is_null());

        let mut nl = 0.0;
        assert_eq!(stqa_normalized_levenshtein(c("").as_ptr(), c("").as_ptr(), &mut nl), StqaStatus::Ok);
        assert_eq!(nl, 0.0);
        assert_eq!(stqa_normalized_levenshtein(c("abcd").as_ptr(), c("abce").as_ptr(), &mut nl), StqaStatus::Ok);
        assert_eq!(nl, 0.25);

        let mut s = 0.0;
        assert_eq!(stqa_anls(c("Stop").as_ptr(), c(r#"["stop", "go"]"#).as_ptr(), &mut s), StqaStatus::Ok);
        assert_eq!(s, 1.0);
        assert_eq!(stqa_anls(c("abcd").as_ptr(), c(r#"["abce"]"#).as_ptr(), &mut s), StqaStatus::Ok);
        assert_eq!(s, 0.75);
        assert_eq!(stqa_anls(c("x").as_ptr(), c("[]").as_ptr(), &mut s), StqaStatus::InvalidArgument);
        assert_eq!(stqa_anls(c("x").as_ptr(), c("[1]").as_ptr(), &mut s), StqaStatus::Json);

        let bad = [0xffu8, 0];
        assert_eq!(stqa_levenshtein(bad.as_ptr().cast(), c("a").as_ptr(), &mut d), StqaStatus::InvalidUtf8);
    }
    assert!(!unsafe { CStr::from_ptr(stqa_version()) }.to_bytes().is_empty());
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/stqa.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["stqa_model_load", "stqa_predict", "stqa_anls", "stqa_string_free", "stqa_last_error", "STQA_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler on PATH; header content checked only");
        return;
    }
    for lang in ["c", "c++"] {
        let status = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang]).arg(&header).status().unwrap();
        assert!(status.success(), "header does not compile as {lang}");
    }
}
