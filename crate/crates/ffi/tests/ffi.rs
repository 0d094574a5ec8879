use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use blowup_ffi::*;

const BALL: &str = r#"{"dimension":2,"seed":[0.0,0.0,0.0],"patches":[{"center":[0.3,0.0],"radius":0.05}]}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(blowup_last_error()) }.to_string_lossy().into_owned()
}

fn synthetic(json: &str) -> *mut BlowupField {
    let text = CString::new(json).unwrap();
    let mut field = ptr::null_mut();
    let status = unsafe { blowup_field_synthetic(text.as_ptr(), &mut field) };
    assert_eq!(status, BlowupStatus::Ok, "{}", last_error());
    field
}

#[test]
fn constants() {
    let mut c = 0.0;
    let mut k = 0.0;
    unsafe {
        assert_eq!(blowup_gram_constant(2, &mut c), BlowupStatus::Ok);
        assert_eq!(blowup_kappa(2, &mut k), BlowupStatus::Ok);
    }
    assert!((c - std::f64::consts::PI / 8.0).abs() < 1e-15);
    assert!((k - 4.0 / std::f64::consts::PI).abs() < 1e-15);
    assert_eq!(unsafe { blowup_kappa(1, &mut k) }, BlowupStatus::InvalidArgument);
    assert!(last_error().contains("dimension 1"));
}

#[test]
fn errors_become_status_codes() {
    let mut field = ptr::null_mut();
    let status = unsafe { blowup_field_synthetic(ptr::null(), &mut field) };
    assert_eq!(status, BlowupStatus::NullPointer);
    assert!(last_error().contains("json"));

    let bad = CString::new(r#"{"dimension":2,"seed":[0,0,0],"patches":[],"extra":1}"#).unwrap();
    let status = unsafe { blowup_field_synthetic(bad.as_ptr(), &mut field) };
    assert_eq!(status, BlowupStatus::Config);
    assert!(field.is_null());

    let f = synthetic(BALL);
    let mut v = 0.0;
    let far = [3.0, 0.0];
    assert_eq!(unsafe { blowup_field_value(f, far.as_ptr(), &mut v) }, BlowupStatus::Domain);
    unsafe { blowup_field_free(f) };
    unsafe { blowup_field_free(ptr::null_mut()) };
}

#[test]
fn field_queries_and_projection() {
    let f = synthetic(BALL);
    let mut n = 0;
    let mut inside = false;
    let mut b = [0.0; 4];
    let mut grad = [0.0; 2];
    let mut value = 1.0;
    unsafe {
        assert_eq!(blowup_field_dimension(f, &mut n), BlowupStatus::Ok);
        assert_eq!(blowup_field_inactive(f, [0.3, 0.0].as_ptr(), &mut inside), BlowupStatus::Ok);
        assert_eq!(blowup_field_value(f, [0.0, 0.0].as_ptr(), &mut value), BlowupStatus::Ok);
        assert_eq!(blowup_field_gradient(f, [0.1, 0.2].as_ptr(), grad.as_mut_ptr()), BlowupStatus::Ok);
        assert_eq!(blowup_field_projection(f, 0.5, b.as_mut_ptr()), BlowupStatus::Ok);
        blowup_field_free(f);
    }
    assert_eq!(n, 2);
    assert!(inside);
    assert_eq!(value, 0.0);
    assert!(grad.iter().all(|g| g.is_finite()));
    assert!((b[0] + b[3]).abs() < 1e-12);
    assert_eq!(b[1], b[2]);
    // B' = κ tf M, and M of a ball on the first axis is mostly c⊗c
    assert!(b[0] > 0.0);
}

#[test]
fn series_records_match_the_grid() {
    let f = synthetic(BALL);
    let mut series = ptr::null_mut();
    let status = unsafe { blowup_series_compute(f, 0.0, std::f64::consts::LN_2, 8, 4, 0, 0, &mut series) };
    assert_eq!(status, BlowupStatus::Ok, "{}", last_error());
    let mut len = 0;
    let mut scalars = [0.0; 6];
    let mut b = [0.0; 4];
    unsafe {
        blowup_series_len(series, &mut len);
        assert_eq!(blowup_series_scalars(series, len - 1, scalars.as_mut_ptr()), BlowupStatus::Ok);
        assert_eq!(blowup_series_b(series, 0, b.as_mut_ptr()), BlowupStatus::Ok);
        assert_eq!(blowup_series_b(series, len, b.as_mut_ptr()), BlowupStatus::InvalidArgument);
        blowup_series_free(series);
        blowup_field_free(f);
    }
    assert_eq!(len, 9);
    assert!((scalars[0] - std::f64::consts::LN_2).abs() < 1e-15);
    assert!(scalars[1] > 0.0 && scalars[2] <= scalars[1]);
}

#[test]
fn run_writes_outputs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"version":1,"mode":"synth","synthetic":{BALL},
            "scales":{{"t_start":0.0,"t_end":1.3862943611198906,"steps":16}},
            "integration":{{"method":"closed_form"}},"k_max":4,
            "output":{{"dir":{:?},"name":"ffi"}}}}"#,
        dir.path().to_str().unwrap()
    );
    let text = CString::new(config).unwrap();
    let mut report = ptr::null_mut();
    let status = unsafe { blowup_run(text.as_ptr(), &mut report) };
    assert_eq!(status, BlowupStatus::Ok, "{}", last_error());
    let mut passed = false;
    let mut json = ptr::null();
    unsafe {
        blowup_report_passed(report, &mut passed);
        blowup_report_json(report, &mut json);
    }
    let parsed: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(json) }.to_str().unwrap()).unwrap();
    unsafe { blowup_report_free(report) };
    assert!(passed);
    assert_eq!(parsed["passed"], serde_json::Value::Bool(true));
    assert!(dir.path().join("ffi.csv").exists());
}

#[test]
fn solve_on_a_small_grid() {
    let json = CString::new(r#"{"dimension":2,"cells":32,"boundary":{"kind":"radial","radius":0.2}}"#).unwrap();
    let mut field = ptr::null_mut();
    let mut converged = false;
    let status = unsafe { blowup_field_solve(json.as_ptr(), &mut field, &mut converged) };
    assert_eq!(status, BlowupStatus::Ok, "{}", last_error());
    let mut inside = true;
    unsafe {
        blowup_field_inactive(field, [0.5, 0.5].as_ptr(), &mut inside);
        blowup_field_free(field);
    }
    assert!(converged);
    assert!(!inside);
}

// The generated header must be valid C; when cargo has produced the static
// library next to this test, the smoke program is linked and run too.
#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let root = env!("CARGO_MANIFEST_DIR");
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler ({cc}); skipping");
        return;
    }
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(format!("-I{root}/include"))
        .arg(format!("{root}/tests/smoke.c"))
        .status()
        .unwrap();
    assert!(status.success());

    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).unwrap().join("libblowup_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping link", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new(&cc)
        .args(["-std=c99", "-O1"])
        .arg(format!("-I{root}/include"))
        .arg(format!("{root}/tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("9 records"));
}
