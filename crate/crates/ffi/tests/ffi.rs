use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use mixprior::config::ModelConfig;
use mixprior::experiment::TrainedModel;
use mixprior::flow::FlowConfig;
use mixprior::gradkit::Tensor;
use mixprior::priors::{Placement, Prior};
use mixprior_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(mp_last_error()) }.to_string_lossy().into_owned()
}

fn bimodal() -> Prior {
    Prior::gaussian_mixture_placed(2, 2, 6.0, 1.0, Placement::Collinear).unwrap()
}

fn model_bytes() -> Vec<u8> {
    let m = TrainedModel::new(&ModelConfig::Flow(FlowConfig::default()), 2, 11).unwrap();
    m.to_dump(&bimodal(), "hash", 1.5).unwrap().to_bytes()
}

const X: [f64; 6] = [0.3, -1.0, 2.5, 0.1, -4.0, 0.7];

#[test]
fn prior_log_pdf_matches_library() {
    let json = CString::new(r#"{"kind": "gaussian_mixture", "k": 2, "distance": 6.0}"#).unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(mp_prior_from_json(json.as_ptr(), 2, &mut p), MpStatus::Ok);
        let (mut dim, mut k) = (0, 0);
        assert_eq!(mp_prior_info(p, &mut dim, &mut k), MpStatus::Ok);
        assert_eq!((dim, k), (2, 2));
        let mut out = [0.0; 3];
        assert_eq!(mp_prior_log_pdf(p, X.as_ptr(), 3, 2, out.as_mut_ptr()), MpStatus::Ok);
        let want = bimodal().log_pdf(&Tensor::matrix(3, 2, X.to_vec()).unwrap()).unwrap();
        assert_eq!(out.to_vec(), want);
        mp_prior_free(p);
    }
}

#[test]
fn prior_sampling_is_seeded() {
    let json = CString::new(r#"{"kind": "standard"}"#).unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(mp_prior_from_json(json.as_ptr(), 3, &mut p), MpStatus::Ok);
        let (mut a, mut b) = ([0.0; 12], [0.0; 12]);
        let mut labels = [9usize; 4];
        assert_eq!(mp_prior_sample(p, 4, 5, a.as_mut_ptr(), labels.as_mut_ptr()), MpStatus::Ok);
        assert_eq!(mp_prior_sample(p, 4, 5, b.as_mut_ptr(), ptr::null_mut()), MpStatus::Ok);
        assert_eq!(a, b);
        assert_eq!(labels, [0; 4]);
        mp_prior_free(p);
    }
}

#[test]
fn bad_prior_json_is_a_config_error() {
    let json = CString::new(r#"{"kind": "gaussian_mixture", "bogus": 1}"#).unwrap();
    let mut p = ptr::null_mut();
    let s = unsafe { mp_prior_from_json(json.as_ptr(), 2, &mut p) };
    assert_eq!(s, MpStatus::Config);
    assert!(p.is_null());
    assert!(last_error().contains("bogus"), "{}", last_error());
}

#[test]
fn null_arguments_are_reported() {
    let mut out = 0.0;
    unsafe {
        assert_eq!(mp_model_load(ptr::null(), ptr::null_mut()), MpStatus::NullPointer);
        assert_eq!(mp_prior_log_pdf(ptr::null(), X.as_ptr(), 1, 2, &mut out), MpStatus::NullPointer);
        mp_model_free(ptr::null_mut());
        mp_prior_free(ptr::null_mut());
    }
    assert!(last_error().contains("null"));
}

#[test]
fn model_roundtrip_through_bytes() {
    let bytes = model_bytes();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(mp_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut m), MpStatus::Ok);
        let (mut kind, mut d, mut l) = (MpModelKind::Vae, 0, 0);
        assert_eq!(mp_model_info(m, &mut kind, &mut d, &mut l), MpStatus::Ok);
        assert_eq!((kind, d, l), (MpModelKind::Flow, 2, 2));

        let mut ll = [0.0; 3];
        assert_eq!(mp_model_log_likelihood(m, X.as_ptr(), 3, 2, 0, 0, ll.as_mut_ptr()), MpStatus::Ok);
        let (core, prior) = TrainedModel::from_dump(&mixprior::dump::Dump::from_bytes(&bytes).unwrap()).unwrap();
        let want = core.log_likelihood(&prior, &Tensor::matrix(3, 2, X.to_vec()).unwrap(), 0, 0).unwrap();
        assert_eq!(ll.to_vec(), want);

        let mut z = [0.0; 6];
        assert_eq!(mp_model_encode(m, X.as_ptr(), 3, 2, z.as_mut_ptr()), MpStatus::Ok);
        assert!(z.iter().all(|v| v.is_finite()));

        let mut p = ptr::null_mut();
        assert_eq!(mp_model_prior(m, &mut p), MpStatus::Ok);
        let (mut dim, mut k) = (0, 0);
        mp_prior_info(p, &mut dim, &mut k);
        assert_eq!((dim, k), (2, 2));
        mp_prior_free(p);

        assert_eq!(mp_model_log_likelihood(m, X.as_ptr(), 2, 3, 0, 0, ll.as_mut_ptr()), MpStatus::Shape);
        mp_model_free(m);
    }
}

#[test]
fn model_load_from_file_and_bad_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pscp");
    let bytes = model_bytes();
    std::fs::write(&path, &bytes).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(mp_model_load(c.as_ptr(), &mut m), MpStatus::Ok);
        mp_model_free(m);

        let missing = CString::new(dir.path().join("nope").to_str().unwrap()).unwrap();
        assert_eq!(mp_model_load(missing.as_ptr(), &mut m), MpStatus::Io);

        let cut = &bytes[..bytes.len() - 5];
        assert_eq!(mp_model_from_bytes(cut.as_ptr(), cut.len(), &mut m), MpStatus::Format);
        assert!(last_error().contains("truncated"));
    }
}

#[test]
fn second_order_delta_from_raw_statistics() {
    let in_s = [1.0, 1.0];
    let out_s = [2.0, 3.0];
    let w = [1.0];
    let mut d = 0.0;
    unsafe {
        let s = mp_second_order_delta(in_s.as_ptr(), w.as_ptr(), 1, out_s.as_ptr(), w.as_ptr(), 1, 2, ptr::null(), 1.0, &mut d);
        assert_eq!(s, MpStatus::Ok);
        assert_eq!(d, -1.5);
        let g = [2.0, 0.0];
        mp_second_order_delta(in_s.as_ptr(), w.as_ptr(), 1, out_s.as_ptr(), w.as_ptr(), 1, 2, g.as_ptr(), 2.0, &mut d);
        assert_eq!(d, -0.5);
        let bad = mp_second_order_delta(in_s.as_ptr(), w.as_ptr(), 1, out_s.as_ptr(), w.as_ptr(), 1, 2, ptr::null(), 0.0, &mut d);
        assert_eq!(bad, MpStatus::InvalidArgument);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/mixprior.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "mp_last_error",
        "mp_version",
        "mp_model_load",
        "mp_model_from_bytes",
        "mp_model_free",
        "mp_model_info",
        "mp_model_log_likelihood",
        "mp_model_encode",
        "mp_model_prior",
        "mp_prior_from_json",
        "mp_prior_free",
        "mp_prior_info",
        "mp_prior_log_pdf",
        "mp_prior_sample",
        "mp_second_order_delta",
        "typedef struct MpModel MpModel",
        "MP_STATUS_NUMERIC = 4",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    // Skip the compile check where no C compiler is installed.
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
