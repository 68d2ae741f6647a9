//! Exercise the C surface the way a foreign binding would.

use std::ffi::{CStr, CString};

use specflow_ffi::*;

#[test]
fn preset_path_lifecycle_and_flow() {
    unsafe {
        let name = CString::new("scalar-tanh").unwrap();
        let mut handle: *mut SfPath = std::ptr::null_mut();
        assert_eq!(sf_path_preset(name.as_ptr(), &mut handle), SfStatus::Ok);
        assert_eq!(sf_path_dim(handle), 1);

        let mut sf = 0i64;
        let mut agree = 0u8;
        assert_eq!(sf_spectral_flow(handle, &mut sf, &mut agree), SfStatus::Ok);
        assert_eq!(sf, 1);
        assert_eq!(agree, 1);

        let mut report = SfIdentityReport {
            sf: 0,
            index: 0,
            ker: 0,
            coker: 0,
            pair_index: 0,
            relative_dimension: 0,
            identities_hold: 0,
        };
        assert_eq!(sf_verify_identity(handle, &mut report), SfStatus::Ok);
        assert_eq!(report.sf, 1);
        assert_eq!(report.index, -1);
        assert_eq!(report.identities_hold, 1);

        sf_path_free(handle);
    }
}

#[test]
fn json_path_and_numeric_index() {
    let times: Vec<f64> = (0..=720).map(|i| -18.0 + i as f64 * 0.05).collect();
    let matrices: Vec<Vec<f64>> = times
        .iter()
        .map(|t| vec![t.tanh(), 0.0, 0.0, -t.tanh()])
        .collect();
    let spec = serde_json_lite(&times, &matrices);
    unsafe {
        let json = CString::new(spec).unwrap();
        let mut handle: *mut SfPath = std::ptr::null_mut();
        assert_eq!(sf_path_from_json(json.as_ptr(), &mut handle), SfStatus::Ok);
        assert_eq!(sf_path_dim(handle), 2);

        let mut report = SfIndexReport { ker: 0, coker: 0, index: 0, gap_ratio: 0.0, reliable: 0 };
        assert_eq!(sf_numeric_index(handle, -1.0, &mut report), SfStatus::Ok);
        assert_eq!(report.ker, 1);
        assert_eq!(report.coker, 1);
        assert_eq!(report.index, 0);
        assert_eq!(report.reliable, 1);

        let mut basis = vec![0.0f64; 2 * 2 * 2];
        let mut k = 0usize;
        assert_eq!(
            sf_stable_space(handle, 20.0, 1e-7, basis.as_mut_ptr(), &mut k),
            SfStatus::Ok
        );
        assert_eq!(k, 1);
        // stable direction is the second coordinate axis
        assert!(basis[0].abs() < 1e-6);
        assert!((basis[2].abs() - 1.0).abs() < 1e-6);

        sf_path_free(handle);
    }
}

/// Hand-rolled JSON so this test does not depend on a serializer.
fn serde_json_lite(times: &[f64], matrices: &[Vec<f64>]) -> String {
    let times_text: Vec<String> = times.iter().map(|t| format!("{t}")).collect();
    let mats_text: Vec<String> = matrices
        .iter()
        .map(|m| {
            let inner: Vec<String> = m.iter().map(|x| format!("{x}")).collect();
            format!("[{}]", inner.join(","))
        })
        .collect();
    format!(
        "{{\"dim\":2,\"kind\":{{\"samples\":{{\"times\":[{}],\"matrices\":[{}],\"limit_minus\":[-1,0,0,1],\"limit_plus\":[1,0,0,-1]}}}}}}",
        times_text.join(","),
        mats_text.join(",")
    )
}

#[test]
fn projector_through_the_c_abi() {
    // A = [[0,3],[1,0]]: P+ = [[1/2, sqrt(3)/2], [1/(2 sqrt(3)), 1/2]]
    let a = [0.0, 0.0, 3.0, 0.0, 1.0, 0.0, 0.0, 0.0];
    let mut out = [0.0f64; 8];
    unsafe {
        assert_eq!(
            sf_spectral_projector_plus(2, a.as_ptr(), out.as_mut_ptr()),
            SfStatus::Ok
        );
    }
    let r = 3.0_f64.sqrt();
    assert!((out[0] - 0.5).abs() < 1e-8);
    assert!((out[2] - r / 2.0).abs() < 1e-8);
    assert!((out[4] - 1.0 / (2.0 * r)).abs() < 1e-8);
    assert!((out[6] - 0.5).abs() < 1e-8);
}

#[test]
fn error_paths_set_messages() {
    unsafe {
        // null pointers
        assert_eq!(
            sf_path_from_json(std::ptr::null(), std::ptr::null_mut()),
            SfStatus::NullPointer
        );
        // malformed JSON
        let bad = CString::new("{ nope").unwrap();
        let mut handle: *mut SfPath = std::ptr::null_mut();
        assert_eq!(sf_path_from_json(bad.as_ptr(), &mut handle), SfStatus::InvalidInput);
        let msg = sf_last_error_message();
        assert!(!msg.is_null());
        let text = CStr::from_ptr(msg).to_string_lossy().into_owned();
        assert!(text.contains("parse"), "message: {text}");
        sf_string_free(msg);

        // non-hyperbolic input is a numerical failure
        let name = CString::new("rotation").unwrap();
        assert_eq!(sf_path_preset(name.as_ptr(), &mut handle), SfStatus::Ok);
        let mut report = SfIndexReport { ker: 0, coker: 0, index: 0, gap_ratio: 0.0, reliable: 0 };
        assert_eq!(
            sf_numeric_index(handle, -1.0, &mut report),
            SfStatus::NumericalFailure
        );
        sf_path_free(handle);

        // unknown preset
        let nope = CString::new("no-such").unwrap();
        assert_eq!(sf_path_preset(nope.as_ptr(), &mut handle), SfStatus::InvalidInput);
    }
}

#[test]
fn version_string_is_static() {
    let v = sf_version();
    assert!(!v.is_null());
    let text = unsafe { CStr::from_ptr(v) }.to_str().unwrap();
    assert!(!text.is_empty());
}
