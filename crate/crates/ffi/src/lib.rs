//! C ABI over `voicedep`.
//!
//! Every fallible function returns a [`VdStatus`]. On failure the message is
//! kept per thread and can be read with [`vd_last_error_message`]. Models and
//! ensembles are opaque handles that the caller releases with the matching
//! `_free` function. Feature matrices cross the boundary as frequency-major
//! `double` arrays of `f0 * t0` values.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ndarray::ArrayView2;
use voicedep::ensemble::{fuse, FusionMethod, PredictionSet, SpeakerPredictions};
use voicedep::evaluation::{confusion_from_pairs, metrics};
use voicedep::features::{featurize, StftConfig};
use voicedep::network::{self, load_model, NetworkParams};
use voicedep::sampling::SampleCrop;
use voicedep::{Error, Label};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Data = 6,
    Training = 7,
    Predictions = 8,
    Panic = 9,
}

impl From<&Error> for VdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => VdStatus::Io,
            Error::InvalidArgument(_) | Error::Config(_) => VdStatus::InvalidArgument,
            Error::ShapeMismatch { .. } => VdStatus::Shape,
            Error::EmptyClass(_) | Error::EmptyTrainingSet => VdStatus::Data,
            Error::NonFiniteLoss { .. } => VdStatus::Training,
            Error::InconsistentPredictions(_) => VdStatus::Predictions,
            _ => VdStatus::Format,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VdStatus, msg: impl Into<String>) -> VdStatus {
    set_error(msg.into());
    status
}

/// Run `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), VdStatus>) -> VdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VdStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(VdStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn check(e: Error) -> VdStatus {
    fail(VdStatus::from(&e), e.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), VdStatus> {
    if p.is_null() {
        Err(fail(VdStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<String, VdStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| fail(VdStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn method_arg(method: u8) -> Result<FusionMethod, VdStatus> {
    FusionMethod::try_from(method).map_err(|m| fail(VdStatus::InvalidArgument, m))
}

/// Message of the most recent failure on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// A trained network.
pub struct VdModel {
    params: NetworkParams,
}

/// Load a model file. On success `*out` owns a handle for [`vd_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn vd_model_load(path: *const c_char, out: *mut *mut VdModel) -> VdStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let params = load_model(&path).map_err(check)?;
        *out = Box::into_raw(Box::new(VdModel { params }));
        Ok(())
    })
}

/// Release a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`vd_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vd_model_free(model: *mut VdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input matrix dimensions expected by `model`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vd_model_input_dims(model: *const VdModel, f0: *mut usize, t0: *mut usize) -> VdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(f0, "f0")?;
        non_null(t0, "t0")?;
        let cfg = (*model).params.config();
        *f0 = cfg.f0;
        *t0 = cfg.t0;
        Ok(())
    })
}

unsafe fn feature_view<'a>(
    params: &NetworkParams,
    features: *const f64,
    len: usize,
) -> Result<ArrayView2<'a, f64>, VdStatus> {
    non_null(features, "features")?;
    let cfg = params.config();
    if len != cfg.f0 * cfg.t0 {
        return Err(fail(
            VdStatus::Shape,
            format!("expected {} values ({}x{}), got {len}", cfg.f0 * cfg.t0, cfg.f0, cfg.t0),
        ));
    }
    let slice = std::slice::from_raw_parts(features, len);
    Ok(ArrayView2::from_shape((cfg.f0, cfg.t0), slice).expect("length checked"))
}

/// Depression probability of one normalized feature matrix.
///
/// # Safety
/// `features` must point to `len` readable doubles; `probability` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_model_predict(
    model: *const VdModel,
    features: *const f64,
    len: usize,
    probability: *mut f64,
) -> VdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(probability, "probability")?;
        let params = &(*model).params;
        let x = feature_view(params, features, len)?;
        *probability = network::predict(params, x).map_err(check)?;
        Ok(())
    })
}

/// Normalized log-spectrogram of a mono crop with the default STFT settings.
///
/// Call with `out = NULL` to query `*f0` and `*t0`; then pass a buffer of at
/// least `f0 * t0` doubles in `out_capacity`.
///
/// # Safety
/// `samples` must point to `n_samples` floats; `out` (if not NULL) to
/// `out_capacity` writable doubles; `f0` and `t0` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_featurize(
    samples: *const f32,
    n_samples: usize,
    sample_rate: u32,
    out: *mut f64,
    out_capacity: usize,
    f0: *mut usize,
    t0: *mut usize,
) -> VdStatus {
    guard(|| {
        non_null(f0, "f0")?;
        non_null(t0, "t0")?;
        let cfg = StftConfig::default();
        cfg.validate(sample_rate).map_err(check)?;
        *f0 = cfg.n_freq();
        *t0 = cfg.n_frames(n_samples, sample_rate);
        if out.is_null() {
            return Ok(());
        }
        non_null(samples, "samples")?;
        let need = *f0 * *t0;
        if out_capacity < need {
            return Err(fail(VdStatus::Shape, format!("output holds {out_capacity} values, need {need}")));
        }
        let crop = SampleCrop {
            speaker_id: String::new(),
            crop_index: 0,
            samples: std::slice::from_raw_parts(samples, n_samples).to_vec(),
            sample_rate,
            label: None,
        };
        let spec = featurize(&crop, &cfg).map_err(check)?;
        let dst = std::slice::from_raw_parts_mut(out, need);
        for (d, s) in dst.iter_mut().zip(spec.values.iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Fuse one speaker's crop probabilities from several machines.
///
/// `probabilities` is row-major `machines x crops`. `method` is 1, 2 or 3.
/// Writes 1 (depressed) or 0 to `label`.
///
/// # Safety
/// `probabilities` must point to `machines * crops` doubles; `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_fuse(
    probabilities: *const f64,
    machines: usize,
    crops: usize,
    method: u8,
    threshold: f64,
    tie_seed: u64,
    label: *mut u8,
) -> VdStatus {
    guard(|| {
        non_null(probabilities, "probabilities")?;
        non_null(label, "label")?;
        if machines == 0 || crops == 0 {
            return Err(fail(VdStatus::InvalidArgument, "need at least one machine and one crop"));
        }
        let method = method_arg(method)?;
        let all = std::slice::from_raw_parts(probabilities, machines * crops);
        if let Some(p) = all.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(fail(VdStatus::InvalidArgument, format!("probability {p} outside [0, 1]")));
        }
        let sets: Vec<PredictionSet> = all
            .chunks_exact(crops)
            .enumerate()
            .map(|(m, row)| PredictionSet {
                machine: m,
                speakers: BTreeMap::from([(
                    String::new(),
                    SpeakerPredictions {
                        crop_indices: (0..crops as u32).collect(),
                        probabilities: row.to_vec(),
                    },
                )]),
            })
            .collect();
        let fused = fuse(&sets, method, threshold, tie_seed).map_err(check)?;
        *label = fused[""].as_u8();
        Ok(())
    })
}

/// Speaker-level metrics with the depressed class as positive.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VdMetrics {
    pub accuracy: f64,
    pub precision_depressed: f64,
    pub recall_depressed: f64,
    pub f1_depressed: f64,
    pub precision_non_depressed: f64,
    pub recall_non_depressed: f64,
    pub f1_non_depressed: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

/// Metrics over `n` paired labels (0 or 1).
///
/// # Safety
/// `truth` and `predicted` must point to `n` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_metrics(truth: *const u8, predicted: *const u8, n: usize, out: *mut VdMetrics) -> VdStatus {
    guard(|| {
        non_null(truth, "truth")?;
        non_null(predicted, "predicted")?;
        non_null(out, "out")?;
        let t = std::slice::from_raw_parts(truth, n);
        let p = std::slice::from_raw_parts(predicted, n);
        let mut pairs = Vec::with_capacity(n);
        for (&a, &b) in t.iter().zip(p) {
            match (Label::from_u8(a), Label::from_u8(b)) {
                (Some(a), Some(b)) => pairs.push((a, b)),
                _ => return Err(fail(VdStatus::InvalidArgument, format!("labels must be 0 or 1, got {a} and {b}"))),
            }
        }
        let m = metrics(&confusion_from_pairs(pairs));
        *out = VdMetrics {
            accuracy: m.accuracy,
            precision_depressed: m.depressed.precision,
            recall_depressed: m.depressed.recall,
            f1_depressed: m.depressed.f1,
            precision_non_depressed: m.non_depressed.precision,
            recall_non_depressed: m.non_depressed.recall,
            f1_non_depressed: m.non_depressed.f1,
            tp: m.counts.tp,
            fp: m.counts.fp,
            tn: m.counts.tn,
            fn_: m.counts.fn_,
        };
        Ok(())
    })
}

/// Several models sharing one input shape.
pub struct VdEnsemble {
    models: Vec<NetworkParams>,
}

/// Load `count` model files into one ensemble handle.
///
/// # Safety
/// `paths` must point to `count` NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_ensemble_load(paths: *const *const c_char, count: usize, out: *mut *mut VdEnsemble) -> VdStatus {
    guard(|| {
        non_null(paths, "paths")?;
        non_null(out, "out")?;
        if count == 0 {
            return Err(fail(VdStatus::InvalidArgument, "ensemble needs at least one model"));
        }
        let mut models = Vec::with_capacity(count);
        for (i, &p) in std::slice::from_raw_parts(paths, count).iter().enumerate() {
            let path = path_arg(p, &format!("paths[{i}]"))?;
            models.push(load_model(&path).map_err(check)?);
        }
        let first = *models[0].config();
        if let Some(i) = models.iter().position(|m| *m.config() != first) {
            return Err(fail(VdStatus::Shape, format!("model {i} differs in shape from model 0")));
        }
        *out = Box::into_raw(Box::new(VdEnsemble { models }));
        Ok(())
    })
}

/// Release an ensemble. NULL is ignored.
///
/// # Safety
/// `ensemble` must come from [`vd_ensemble_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vd_ensemble_free(ensemble: *mut VdEnsemble) {
    if !ensemble.is_null() {
        drop(Box::from_raw(ensemble));
    }
}

/// Number of machines, or 0 for NULL.
///
/// # Safety
/// `ensemble` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vd_ensemble_size(ensemble: *const VdEnsemble) -> usize {
    if ensemble.is_null() {
        0
    } else {
        (*ensemble).models.len()
    }
}

/// Score `n_crops` consecutive feature matrices of one speaker with every
/// machine and fuse them into a speaker label.
///
/// # Safety
/// `features` must point to `n_crops * f0 * t0` doubles; `label` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vd_ensemble_classify(
    ensemble: *const VdEnsemble,
    features: *const f64,
    n_crops: usize,
    method: u8,
    threshold: f64,
    tie_seed: u64,
    label: *mut u8,
) -> VdStatus {
    guard(|| {
        non_null(ensemble, "ensemble")?;
        non_null(features, "features")?;
        non_null(label, "label")?;
        if n_crops == 0 {
            return Err(fail(VdStatus::InvalidArgument, "need at least one crop"));
        }
        let models = &(*ensemble).models;
        let cfg = models[0].config();
        let size = cfg.f0 * cfg.t0;
        let mut probs = Vec::with_capacity(models.len() * n_crops);
        for m in models {
            for c in 0..n_crops {
                let x = feature_view(m, features.add(c * size), size)?;
                probs.push(network::predict(m, x).map_err(check)?);
            }
        }
        let status = vd_fuse(probs.as_ptr(), models.len(), n_crops, method, threshold, tie_seed, label);
        if status == VdStatus::Ok {
            Ok(())
        } else {
            Err(status)
        }
    })
}
