use std::ffi::{CStr, CString};
use std::ptr;

use voicedep::network::{init_params, save_model, Architecture, NetworkConfig};
use voicedep_ffi::*;

fn small_model(dir: &std::path::Path, name: &str, seed: u64) -> CString {
    let cfg = NetworkConfig::new(
        6,
        8,
        Architecture {
            filters: 3,
            pool_kernel: 2,
            pool_stride: 2,
            pool_padding: 2,
            hidden: 4,
        },
    )
    .unwrap();
    let path = dir.join(name);
    save_model(&init_params(&cfg, seed).unwrap(), &path).unwrap();
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = vd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn model_round_trip_matches_core() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_model(dir.path(), "m.sdm", 3);
    let mut model = ptr::null_mut();
    unsafe {
        assert_eq!(vd_model_load(path.as_ptr(), &mut model), VdStatus::Ok);
        let (mut f0, mut t0) = (0, 0);
        assert_eq!(vd_model_input_dims(model, &mut f0, &mut t0), VdStatus::Ok);
        assert_eq!((f0, t0), (6, 8));
        let x: Vec<f64> = (0..48).map(|i| (i % 5) as f64 / 5.0).collect();
        let mut p = 0.0;
        assert_eq!(vd_model_predict(model, x.as_ptr(), x.len(), &mut p), VdStatus::Ok);
        let core = voicedep::network::load_model(path.to_str().unwrap()).unwrap();
        let view = ndarray::ArrayView2::from_shape((6, 8), &x[..]).unwrap();
        assert_eq!(p, voicedep::network::predict(&core, view).unwrap());
        assert_eq!(vd_model_predict(model, x.as_ptr(), 47, &mut p), VdStatus::Shape);
        assert!(last_error().contains("48"));
        vd_model_free(model);
    }
}

#[test]
fn errors_have_codes_and_messages() {
    let mut model = ptr::null_mut();
    let missing = CString::new("/definitely/missing.sdm").unwrap();
    unsafe {
        assert_eq!(vd_model_load(missing.as_ptr(), &mut model), VdStatus::Io);
        assert!(last_error().contains("missing.sdm"));
        assert!(model.is_null());
        assert_eq!(vd_model_load(ptr::null(), &mut model), VdStatus::NullPointer);
        assert!(last_error().contains("path"));
        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.sdm");
        std::fs::write(&junk, b"not a model at all, just bytes").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(vd_model_load(junk.as_ptr(), &mut model), VdStatus::Format);
    }
}

#[test]
fn fuse_matches_rules() {
    let mut label = 9u8;
    unsafe {
        // method 1 averages machines: (0.2 + 0.9) / 2 >= 0.5
        assert_eq!(vd_fuse([0.2, 0.9].as_ptr(), 2, 1, 1, 0.5, 0, &mut label), VdStatus::Ok);
        assert_eq!(label, 1);
        // method 2 pools 2 of 3 positive labels
        assert_eq!(vd_fuse([0.9, 0.8, 0.1].as_ptr(), 3, 1, 2, 0.5, 0, &mut label), VdStatus::Ok);
        assert_eq!(label, 1);
        assert_eq!(vd_fuse([0.1, 0.2, 0.3, 0.0].as_ptr(), 2, 2, 3, 0.5, 0, &mut label), VdStatus::Ok);
        assert_eq!(label, 0);
        assert_eq!(vd_fuse([0.5].as_ptr(), 1, 1, 0, 0.5, 0, &mut label), VdStatus::InvalidArgument);
        assert_eq!(vd_fuse([1.5].as_ptr(), 1, 1, 1, 0.5, 0, &mut label), VdStatus::InvalidArgument);
        assert_eq!(vd_fuse([0.5].as_ptr(), 0, 1, 1, 0.5, 0, &mut label), VdStatus::InvalidArgument);
    }
}

#[test]
fn metrics_struct() {
    let mut m = VdMetrics::default();
    unsafe {
        assert_eq!(vd_metrics([1, 0, 1].as_ptr(), [1, 1, 0].as_ptr(), 3, &mut m), VdStatus::Ok);
        assert_eq!((m.tp, m.fp, m.tn, m.fn_), (1, 1, 0, 1));
        assert_eq!(m.f1_depressed, 0.5);
        assert_eq!(m.f1_non_depressed, 0.0);
        assert_eq!(vd_metrics([2].as_ptr(), [1].as_ptr(), 1, &mut m), VdStatus::InvalidArgument);
    }
}

#[test]
fn featurize_query_then_fill() {
    let samples: Vec<f32> = (0..64_000).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
    let (mut f0, mut t0) = (0, 0);
    unsafe {
        let s = vd_featurize(samples.as_ptr(), samples.len(), 16_000, ptr::null_mut(), 0, &mut f0, &mut t0);
        assert_eq!(s, VdStatus::Ok);
        assert_eq!((f0, t0), (513, 125));
        let mut out = vec![0.0; f0 * t0];
        assert_eq!(
            vd_featurize(samples.as_ptr(), samples.len(), 16_000, out.as_mut_ptr(), 10, &mut f0, &mut t0),
            VdStatus::Shape
        );
        assert_eq!(
            vd_featurize(samples.as_ptr(), samples.len(), 16_000, out.as_mut_ptr(), out.len(), &mut f0, &mut t0),
            VdStatus::Ok
        );
        let lo = out.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((lo, hi), (0.0, 1.0));
        assert_eq!(
            vd_featurize(samples.as_ptr(), samples.len(), 0, ptr::null_mut(), 0, &mut f0, &mut t0),
            VdStatus::InvalidArgument
        );
    }
}

#[test]
fn ensemble_handle() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<CString> = (0..3).map(|m| small_model(dir.path(), &format!("machine_{m}.sdm"), m)).collect();
    let ptrs: Vec<*const std::ffi::c_char> = paths.iter().map(|p| p.as_ptr()).collect();
    let mut ens = ptr::null_mut();
    unsafe {
        assert_eq!(vd_ensemble_load(ptrs.as_ptr(), 3, &mut ens), VdStatus::Ok);
        assert_eq!(vd_ensemble_size(ens), 3);
        let crops: Vec<f64> = (0..2 * 48).map(|i| (i % 9) as f64 / 9.0).collect();
        let mut label = 9;
        assert_eq!(vd_ensemble_classify(ens, crops.as_ptr(), 2, 1, 0.5, 0, &mut label), VdStatus::Ok);
        assert!(label <= 1);

        let models: Vec<_> = paths.iter().map(|p| voicedep::network::load_model(p.to_str().unwrap()).unwrap()).collect();
        let mut probs = Vec::new();
        for m in &models {
            for c in 0..2 {
                let v = ndarray::ArrayView2::from_shape((6, 8), &crops[c * 48..(c + 1) * 48]).unwrap();
                probs.push(voicedep::network::predict(m, v).unwrap());
            }
        }
        let mut expect = 9;
        assert_eq!(vd_fuse(probs.as_ptr(), 3, 2, 1, 0.5, 0, &mut expect), VdStatus::Ok);
        assert_eq!(label, expect);
        vd_ensemble_free(ens);
        assert_eq!(vd_ensemble_size(ptr::null()), 0);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(vd_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
