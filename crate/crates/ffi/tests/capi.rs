use std::ffi::{CStr, CString};
use std::ptr;

use hypou_ffi::*;

const KOLMOGOROV: &str = r#"{"N": 2, "d0": 1, "A": [[0, 0], [1, 0]], "B0": [[1.0]], "nu": 1.0}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(hypou_last_error_message()) }.to_str().unwrap().to_owned()
}

fn system(json: &str, permissive: i32) -> (HypouStatus, *mut HypouSystem) {
    let c = CString::new(json).unwrap();
    let mut sys = ptr::null_mut();
    let st = unsafe { hypou_system_from_json(c.as_ptr(), permissive, &mut sys) };
    (st, sys)
}

fn solve_config() -> String {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/solve.json");
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn system_lifecycle_and_report() {
    let (st, sys) = system(KOLMOGOROV, 0);
    assert_eq!(st, HypouStatus::Ok);
    assert_eq!(last_error(), "");
    let mut n = 0usize;
    assert_eq!(unsafe { hypou_system_dim(sys, &mut n) }, HypouStatus::Ok);
    assert_eq!(n, 2);
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { hypou_structure_report_json(sys, &mut report) }, HypouStatus::Ok);
    let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap().to_owned();
    unsafe { hypou_string_free(report) };
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["hypoelliptic"], true);
    assert_eq!(v["blocks"], serde_json::json!([1]));

    let mut cov = [0.0; 4];
    assert_eq!(unsafe { hypou_ou_covariance(sys, 0.0, 1.0, cov.as_mut_ptr(), 4) }, HypouStatus::Ok);
    let exact = [2.0, 1.0, 1.0, 2.0 / 3.0];
    for (a, b) in cov.iter().zip(exact) {
        assert!((a - b).abs() < 1e-10);
    }
    assert_eq!(unsafe { hypou_ou_covariance(sys, 0.0, 1.0, cov.as_mut_ptr(), 3) }, HypouStatus::BufferTooSmall);
    assert!(last_error().contains("need 4"));
    unsafe { hypou_system_free(sys) };
}

#[test]
fn error_codes() {
    let degenerate = r#"{"N": 2, "d0": 1, "A": [[0, 0], [0, 0]], "B0": [[1.0]], "nu": 1.0}"#;
    let (st, sys) = system(degenerate, 0);
    assert_eq!(st, HypouStatus::NotHypoelliptic);
    assert!(sys.is_null());
    assert!(last_error().contains("Kalman"));
    let (st, sys) = system(degenerate, 1);
    assert_eq!(st, HypouStatus::Ok);
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { hypou_structure_report_json(sys, &mut report) }, HypouStatus::Ok);
    unsafe {
        hypou_string_free(report);
        hypou_system_free(sys);
    }

    assert_eq!(system("{not json", 0).0, HypouStatus::Config);
    assert_eq!(system(r#"{"N": 2, "d0": 1, "A": [[0, 0], [1, 0]], "B0": [[1.0]], "nu": 0}"#, 0).0, HypouStatus::InvalidSystem);
    assert_eq!(system(r#"{"N": 3, "d0": 1, "A": [[0, 0], [1, 0]], "B0": [[1.0]], "nu": 1}"#, 0).0, HypouStatus::DimensionMismatch);

    let mut sys = ptr::null_mut();
    assert_eq!(unsafe { hypou_system_from_json(ptr::null(), 0, &mut sys) }, HypouStatus::NullPointer);
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { hypou_system_from_json(bad.as_ptr().cast(), 0, &mut sys) }, HypouStatus::InvalidUtf8);
    let mut n = 0usize;
    assert_eq!(unsafe { hypou_system_dim(ptr::null(), &mut n) }, HypouStatus::NullPointer);
    unsafe {
        hypou_system_free(ptr::null_mut());
        hypou_field_free(ptr::null_mut());
        hypou_string_free(ptr::null_mut());
    }
}

#[test]
fn solve_matches_library_and_csv() {
    let text = solve_config();
    let c = CString::new(text.clone()).unwrap();
    let mut field = ptr::null_mut();
    assert_eq!(unsafe { hypou_solve_json(c.as_ptr(), &mut field) }, HypouStatus::Ok, "{}", last_error());
    let (mut nt, mut ns) = (0usize, 0usize);
    assert_eq!(unsafe { hypou_field_shape(field, &mut nt, &mut ns) }, HypouStatus::Ok);
    assert_eq!((nt, ns), (9, 41 * 51));
    let mut values = vec![0.0; nt * ns];
    assert_eq!(unsafe { hypou_field_values(field, values.as_mut_ptr(), values.len()) }, HypouStatus::Ok);
    assert_eq!(unsafe { hypou_field_values(field, values.as_mut_ptr(), 10) }, HypouStatus::BufferTooSmall);

    let cfg: hypou::config::SolveConfig = hypou::config::parse(&text, "test").unwrap();
    let sys = hypou::structure::OUSystem::from_descriptor(&cfg.system, false).unwrap();
    let direct = hypou::gaussian::solve_ou_pipeline(&sys, None, &cfg.source, &cfg.grid, &cfg.solver, cfg.seed).unwrap();
    assert_eq!(values, direct.values);
    let mut sup = 0.0;
    assert_eq!(unsafe { hypou_field_sup_abs(field, &mut sup) }, HypouStatus::Ok);
    assert!(sup > 0.0 && sup <= 0.5 + 1e-8);

    let mut csv = ptr::null_mut();
    assert_eq!(unsafe { hypou_field_csv(field, &mut csv) }, HypouStatus::Ok);
    let s = unsafe { CStr::from_ptr(csv) }.to_str().unwrap().to_owned();
    unsafe { hypou_string_free(csv) };
    let mut expected = vec![];
    direct.write_csv(&mut expected).unwrap();
    assert_eq!(s.as_bytes(), &expected[..]);
    unsafe { hypou_field_free(field) };
}

#[test]
fn perturb_with_zero_matches_solve() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/perturb-zero.json")).unwrap();
    let c = CString::new(text).unwrap();
    let s = CString::new(solve_config()).unwrap();
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { hypou_perturb_json(c.as_ptr(), &mut a) }, HypouStatus::Ok);
    assert_eq!(unsafe { hypou_solve_json(s.as_ptr(), &mut b) }, HypouStatus::Ok);
    let (mut nt, mut ns) = (0usize, 0usize);
    unsafe { hypou_field_shape(a, &mut nt, &mut ns) };
    let mut va = vec![0.0; nt * ns];
    let mut vb = vec![0.0; nt * ns];
    unsafe {
        hypou_field_values(a, va.as_mut_ptr(), va.len());
        hypou_field_values(b, vb.as_mut_ptr(), vb.len());
        hypou_field_free(a);
        hypou_field_free(b);
    }
    assert_eq!(va, vb);
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/hypou.h")).unwrap();
    for name in [
        "HYPOU_H",
        "typedef struct HypouSystem HypouSystem",
        "typedef struct HypouField HypouField",
        "HYPOU_STATUS_NOT_HYPOELLIPTIC = 12",
        "hypou_last_error_message",
        "hypou_system_from_json",
        "hypou_solve_json",
        "hypou_field_values",
        "hypou_string_free",
    ] {
        assert!(h.contains(name), "{name} missing from header");
    }
    let version = unsafe { CStr::from_ptr(hypou_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", &format!("{dir}/hypou.h")]).output() else {
        eprintln!("no C compiler, skipping");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
