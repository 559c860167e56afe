use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use pofcap_ffi::*;

fn last_error() -> String {
    let p = pofcap_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn small_sequence(dir: &std::path::Path) -> *mut PofcapSequence {
    let config = CString::new(
        r#"{"seed": 2, "n_frames": 2, "prior_samples": 2000,
            "model": {"hands": false, "toes": false, "face": false, "expression_dim": 0}}"#,
    )
    .unwrap();
    let out = CString::new(dir.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { pofcap_synth(config.as_ptr(), out.as_ptr()) },
        POFCAP_OK
    );
    let mut seq = ptr::null_mut();
    assert_eq!(
        unsafe { pofcap_sequence_open(out.as_ptr(), &mut seq) },
        POFCAP_OK
    );
    assert!(!seq.is_null());
    seq
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(pofcap_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn synth_open_fit_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let seq = small_sequence(&dir.path().join("seq"));
    unsafe {
        assert_eq!(pofcap_sequence_len(seq), 2);
        let n = pofcap_sequence_joint_count(seq);
        assert!(n > 0);

        let mut fitter = ptr::null_mut();
        assert_eq!(pofcap_fitter_new(seq, ptr::null(), &mut fitter), POFCAP_OK);
        let mut result = ptr::null_mut();
        assert_eq!(pofcap_fit_frame(fitter, seq, 1, &mut result), POFCAP_OK);
        assert!(pofcap_result_cost(result).is_finite());
        assert!(pofcap_result_converged(result) >= 0);
        assert_eq!(pofcap_result_joint_count(result), n);

        let mut fitted = vec![0.0; 3 * n];
        let mut truth = vec![0.0; 3 * n];
        assert_eq!(
            pofcap_result_joints(result, fitted.as_mut_ptr(), fitted.len()),
            POFCAP_OK
        );
        assert_eq!(
            pofcap_sequence_ground_truth(seq, 1, truth.as_mut_ptr(), truth.len()),
            POFCAP_OK
        );
        let mut err = f64::NAN;
        assert_eq!(
            pofcap_mpjpe(fitted.as_ptr(), truth.as_ptr(), n, 0, true, &mut err),
            POFCAP_OK
        );
        assert!(err.is_finite() && err < 30.0, "{err} cm");

        let mut self_err = f64::NAN;
        assert_eq!(
            pofcap_mpjpe(truth.as_ptr(), truth.as_ptr(), n, 0, false, &mut self_err),
            POFCAP_OK
        );
        assert_eq!(self_err, 0.0);

        let mut json = ptr::null_mut();
        assert_eq!(pofcap_result_params_json(result, &mut json), POFCAP_OK);
        let parsed: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert!(parsed.is_object());
        pofcap_string_free(json);

        pofcap_result_free(result);
        pofcap_fitter_free(fitter);
        pofcap_sequence_free(seq);
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        let mut seq = ptr::null_mut();
        assert_eq!(
            pofcap_sequence_open(ptr::null(), &mut seq),
            POFCAP_ERR_ARGUMENT
        );
        assert!(last_error().contains("dir"));
        assert!(seq.is_null());
        assert_eq!(
            pofcap_fit_frame(ptr::null(), ptr::null(), 0, ptr::null_mut()),
            POFCAP_ERR_ARGUMENT
        );
        assert_eq!(pofcap_sequence_len(ptr::null()), 0);
        assert!(pofcap_result_cost(ptr::null()).is_nan());
        assert_eq!(pofcap_result_converged(ptr::null()), -1);
        pofcap_sequence_free(ptr::null_mut());
        pofcap_fitter_free(ptr::null_mut());
        pofcap_result_free(ptr::null_mut());
        pofcap_string_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let missing = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
        let mut seq = ptr::null_mut();
        assert_eq!(
            pofcap_sequence_open(missing.as_ptr(), &mut seq),
            POFCAP_ERR_CONFIG
        );
        assert!(!last_error().is_empty());

        let bad = CString::new(r#"{"n_frames": "many"}"#).unwrap();
        assert_eq!(
            pofcap_synth(bad.as_ptr(), missing.as_ptr()),
            POFCAP_ERR_CONFIG
        );

        let pred = [0.0; 6];
        let mut out = 0.0;
        assert_eq!(
            pofcap_mpjpe(pred.as_ptr(), pred.as_ptr(), 2, 5, true, &mut out),
            POFCAP_ERR_MISMATCH
        );

        // A successful call clears the previous message.
        assert_eq!(
            pofcap_mpjpe(pred.as_ptr(), pred.as_ptr(), 2, 0, true, &mut out),
            POFCAP_OK
        );
        assert!(pofcap_last_error().is_null());
    }
}

#[test]
fn out_of_range_frames_and_short_buffers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let seq = small_sequence(&dir.path().join("seq"));
    unsafe {
        let mut fitter = ptr::null_mut();
        assert_eq!(pofcap_fitter_new(seq, ptr::null(), &mut fitter), POFCAP_OK);
        let mut result = ptr::null_mut();
        assert_eq!(
            pofcap_fit_frame(fitter, seq, 9, &mut result),
            POFCAP_ERR_ARGUMENT
        );
        assert!(result.is_null());
        let mut buf = [0.0; 3];
        assert_eq!(
            pofcap_sequence_ground_truth(seq, 0, buf.as_mut_ptr(), buf.len()),
            POFCAP_ERR_ARGUMENT
        );
        assert!(last_error().contains("needed"));

        let bad = CString::new("{not json").unwrap();
        let mut other = ptr::null_mut();
        assert_eq!(
            pofcap_fitter_new(seq, bad.as_ptr(), &mut other),
            POFCAP_ERR_CONFIG
        );
        pofcap_fitter_free(fitter);
        pofcap_sequence_free(seq);
    }
}

#[test]
fn generated_header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/pofcap.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "pofcap_fit_frame",
        "pofcap_last_error",
        "POFCAP_ERR_MISMATCH",
        "PofcapSequence",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let source = dir.path().join("use.c");
    std::fs::write(
        &source,
        "#include \"pofcap.h\"\nint main(void) {\n  PofcapSequence *seq = NULL;\n  \
         int32_t rc = pofcap_sequence_open(\"x\", &seq);\n  pofcap_sequence_free(seq);\n  \
         return rc == POFCAP_OK ? 0 : (pofcap_last_error() != NULL);\n}\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let Ok(status) = Command::new("cc")
        .args([
            "-fsyntax-only",
            "-std=c99",
            "-Wall",
            "-Werror",
            "-I",
            include,
        ])
        .arg(&source)
        .status()
    else {
        eprintln!("no C compiler available; skipping syntax check");
        return;
    };
    assert!(status.success());
}
