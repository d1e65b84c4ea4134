//! Exercises the C ABI through the exported symbols, the way a foreign
//! binding would.

use std::ffi::{CStr, CString};

use koopgen_capi::*;

fn learn_config() -> CString {
    CString::new(
        r#"{
            "system": "cubic1d",
            "dict": {"kind": "monomial_total_degree", "cap": 4},
            "m": 10,
            "gamma": 20.0,
            "mu": 0.02,
            "seed": 7
        }"#,
    )
    .unwrap()
}

#[test]
fn version_is_non_empty() {
    let v = unsafe { CStr::from_ptr(kg_version()) };
    assert!(!v.to_str().unwrap().is_empty());
}

#[test]
fn learn_query_roundtrip_and_eval() {
    let cfg = learn_config();
    let mut model: *mut KgModel = std::ptr::null_mut();
    let status = unsafe { kg_learn_json(cfg.as_ptr(), &mut model) };
    assert_eq!(status, KgStatus::Ok);
    assert!(!model.is_null());

    let n = unsafe { kg_model_size(model) };
    let d = unsafe { kg_model_dim(model) };
    assert_eq!((n, d), (5, 1));

    let mut mat = vec![0.0f64; n * n];
    assert_eq!(
        unsafe { kg_model_matrix(model, mat.as_mut_ptr(), mat.len()) },
        KgStatus::Ok
    );
    assert!(mat.iter().all(|v| v.is_finite()));

    // identified weights: f(x) = -x^3 puts ~-1 at the cubic slot
    let mut theta = vec![0.0f64; d * n];
    assert_eq!(
        unsafe { kg_model_field_coefficients(model, theta.as_mut_ptr(), theta.len()) },
        KgStatus::Ok
    );
    assert!((theta[3] + 1.0).abs() < 1e-4, "cubic weight {}", theta[3]);

    // field evaluation at x = 0.5 is ~ -0.125
    let x = [0.5f64];
    let mut f = [0.0f64];
    assert_eq!(
        unsafe { kg_model_eval_field(model, x.as_ptr(), 1, f.as_mut_ptr(), 1) },
        KgStatus::Ok
    );
    assert!((f[0] + 0.125).abs() < 1e-4, "f(0.5) = {}", f[0]);

    // JSON round trip preserves the matrix bit-exactly
    let json = unsafe { kg_model_to_json(model) };
    assert!(!json.is_null());
    let mut model2: *mut KgModel = std::ptr::null_mut();
    assert_eq!(
        unsafe { kg_model_from_json(json, &mut model2) },
        KgStatus::Ok
    );
    let mut mat2 = vec![0.0f64; n * n];
    assert_eq!(
        unsafe { kg_model_matrix(model2, mat2.as_mut_ptr(), mat2.len()) },
        KgStatus::Ok
    );
    assert_eq!(mat, mat2);

    unsafe {
        kg_string_free(json);
        kg_model_free(model);
        kg_model_free(model2);
    }
}

#[test]
fn error_paths_report_messages() {
    // bad JSON
    let bad = CString::new("{not json").unwrap();
    let mut model: *mut KgModel = std::ptr::null_mut();
    let status = unsafe { kg_learn_json(bad.as_ptr(), &mut model) };
    assert_eq!(status, KgStatus::ParseError);
    let msg = kg_last_error_message();
    assert!(!msg.is_null());
    let text = unsafe { CStr::from_ptr(msg) }.to_str().unwrap().to_string();
    assert!(text.contains("parse"), "{text}");
    unsafe { kg_string_free(msg) };

    // null arguments
    assert_eq!(
        unsafe { kg_learn_json(std::ptr::null(), &mut model) },
        KgStatus::InvalidArgument
    );
    assert_eq!(unsafe { kg_model_size(std::ptr::null()) }, 0);

    // short buffer
    let cfg = learn_config();
    assert_eq!(
        unsafe { kg_learn_json(cfg.as_ptr(), &mut model) },
        KgStatus::Ok
    );
    let mut tiny = vec![0.0f64; 3];
    assert_eq!(
        unsafe { kg_model_matrix(model, tiny.as_mut_ptr(), tiny.len()) },
        KgStatus::InvalidArgument
    );
    unsafe { kg_model_free(model) };
}

#[test]
fn header_is_generated() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/koopgen.h");
    let body = std::fs::read_to_string(header).expect("cbindgen header exists");
    for symbol in [
        "kg_version",
        "kg_learn_json",
        "kg_model_matrix",
        "kg_model_eval_field",
        "kg_model_free",
        "KgStatus",
    ] {
        assert!(body.contains(symbol), "header is missing {symbol}");
    }
}
