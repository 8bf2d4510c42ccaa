use std::ffi::{CStr, CString};
use std::ptr;

use marginflow_ffi::*;

fn last_error() -> String {
    let p = mf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const HUGE: &str = r#"
[dataset]
named = "linear2d_iso"
[model]
kind = "linear"
[loss]
kind = "exponential"
[optimizer]
method = "gd"
mode = "discrete"
eta = 1e300
max_steps = 100
"#;

#[test]
fn version_is_the_package_version() {
    let v = unsafe { CStr::from_ptr(mf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { mf_config_from_toml(ptr::null(), ptr::null(), &mut cfg) }, MfStatus::NullPointer);
    assert!(last_error().contains("toml"));
    let toml = CString::new(HUGE).unwrap();
    assert_eq!(unsafe { mf_config_from_toml(toml.as_ptr(), ptr::null(), ptr::null_mut()) }, MfStatus::NullPointer);
    let mut run = ptr::null_mut();
    let dir = CString::new("x").unwrap();
    assert_eq!(unsafe { mf_run(ptr::null(), dir.as_ptr(), 0, &mut run) }, MfStatus::NullPointer);
    unsafe {
        mf_config_free(ptr::null_mut());
        mf_run_free(ptr::null_mut());
        mf_dataset_free(ptr::null_mut());
        mf_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8_is_reported() {
    let bad = [0xffu8, 0xfe, 0];
    let mut cfg = ptr::null_mut();
    let s = unsafe { mf_config_from_toml(bad.as_ptr().cast(), ptr::null(), &mut cfg) };
    assert_eq!(s, MfStatus::InvalidUtf8);
    assert!(cfg.is_null());
}

#[test]
fn success_clears_the_error_slot() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("not toml [").unwrap();
    assert_eq!(unsafe { mf_config_from_toml(bad.as_ptr(), ptr::null(), &mut cfg) }, MfStatus::Config);
    assert!(!mf_last_error_message().is_null());
    let good = CString::new(HUGE).unwrap();
    assert_eq!(unsafe { mf_config_from_toml(good.as_ptr(), ptr::null(), &mut cfg) }, MfStatus::Ok);
    assert!(mf_last_error_message().is_null());
    unsafe { mf_config_free(cfg) };
}

#[test]
fn numeric_failure_still_returns_the_partial_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let toml = CString::new(HUGE).unwrap();
    let dir = CString::new(tmp.path().join("o").to_str().unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(mf_config_from_toml(toml.as_ptr(), ptr::null(), &mut cfg), MfStatus::Ok);
        assert_eq!(mf_run(cfg, dir.as_ptr(), -1, &mut run), MfStatus::Numeric);
        assert!(last_error().contains("non-finite"));
        assert!(!run.is_null());
        let mut json = ptr::null_mut();
        assert_eq!(mf_run_summary_json(run, &mut json), MfStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        mf_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["status"]["kind"], "numeric_failure");
        mf_run_free(run);
        mf_config_free(cfg);
    }
}

#[test]
fn nonseparable_dataset_maps_to_assumption() {
    let toml = CString::new(
        r#"
[dataset]
points = [[1.0, 0.0, 1.0], [2.0, 0.0, -1.0]]
[model]
kind = "linear"
[loss]
kind = "exponential"
[optimizer]
method = "gd"
mode = "discrete"
"#,
    )
    .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = CString::new(tmp.path().to_str().unwrap()).unwrap();
    let (mut cfg, mut run) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(mf_config_from_toml(toml.as_ptr(), ptr::null(), &mut cfg), MfStatus::Ok);
        assert_eq!(mf_run(cfg, dir.as_ptr(), 10, &mut run), MfStatus::Assumption);
        assert!(run.is_null());
        mf_config_free(cfg);
    }
}

#[test]
fn weighted_oracle_and_bad_labels() {
    // s = (2, 1) moves the support to points 1 and 2: 3.4a = 1, 2a + 1.05b = 1.
    let xs = [1.2, 2.1, -2.0, -1.05, 3.4, 0.0, -4.0, -1.5];
    let ys = [1.0, -1.0, 1.0, -1.0];
    let s = [2.0, 1.0];
    let mut data = ptr::null_mut();
    let mut w = [0.0; 2];
    let mut margin = 0.0;
    unsafe {
        assert_eq!(mf_dataset_new(xs.as_ptr(), ys.as_ptr(), 4, 2, &mut data), MfStatus::Ok);
        assert_eq!(mf_svm_oracle(data, s.as_ptr(), w.as_mut_ptr(), 2, &mut margin), MfStatus::Ok);
        mf_dataset_free(data);
    }
    let (a, b) = (1.0 / 3.4, (1.0 - 2.0 / 3.4) / 1.05);
    assert!((w[0] - a).abs() < 1e-12 && (w[1] - b).abs() < 1e-12);
    assert!((margin - 1.0 / (4.0 * a * a + b * b).sqrt()).abs() < 1e-12);

    let zero = [1.0, 0.0, -1.0, 1.0];
    let s = unsafe { mf_dataset_new(xs.as_ptr(), zero.as_ptr(), 4, 2, &mut data) };
    assert_eq!(s, MfStatus::Config);
    assert!(data.is_null());
    assert!(last_error().contains("label"));
}
