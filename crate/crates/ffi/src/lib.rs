//! C ABI over the codec, classifier and attack engine: opaque handles,
//! integer status codes, and a thread-local last-error message. Checkpoints
//! are loaded from the same container files the CLI writes.
//!
//! Every function returning [`AdvStatus`] reports failure details through
//! [`adv_last_error`]; output parameters are only written on `ADV_OK`.

use advstrings::attack::{
    fgsm_attack, pgd_attack, AttackConfig, AttackOutcome, AttackResult, Projection,
};
use advstrings::checkpoint;
use advstrings::codec::{decode, encode, AutoencoderModel, LatentVector};
use advstrings::mil::{classify, Bag, ClassifierModel, Label, LatentBag, Split};
use advstrings::tensor::Tensor;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum AdvStatus {
    AdvOk = 0,
    /// Checkpoint file missing, unreadable or malformed.
    AdvErrIo = -1,
    /// Null pointer, bad UTF-8 path, or mismatched buffer size.
    AdvErrInvalidArg = -2,
    /// Codec rejected the input (empty/too long string, bad latent).
    AdvErrCodec = -3,
    /// Classifier rejected the bag (dimension mismatch, empty bag).
    AdvErrClassify = -4,
    /// Attack configuration or execution error.
    AdvErrAttack = -5,
}

/// Attack outcome codes mirrored into C.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum AdvOutcome {
    AdvAlreadyMisclassified = 0,
    AdvSuccess = 1,
    AdvFailure = 2,
}

/// Projection choices for the PGD ball.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum AdvProjection {
    AdvProjL2 = 0,
    AdvProjLinf = 1,
    AdvProjNone = 2,
}

/// Opaque trained autoencoder handle.
pub struct AdvCodec {
    model: AutoencoderModel,
}

/// Opaque trained classifier handle.
pub struct AdvClassifier {
    model: ClassifierModel,
}

/// Opaque attack result handle.
pub struct AdvAttackResult {
    result: AttackResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty"));
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).expect("no interior nul"));
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn adv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

unsafe fn path_from(ptr: *const c_char) -> Result<String, AdvStatus> {
    if ptr.is_null() {
        set_error("path is null");
        return Err(AdvStatus::AdvErrInvalidArg);
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(s.to_string()),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(AdvStatus::AdvErrInvalidArg)
        }
    }
}

unsafe fn gather_bag(
    paths: *const *const u8,
    path_lens: *const usize,
    n_paths: usize,
) -> Result<Vec<Vec<u8>>, AdvStatus> {
    if paths.is_null() || path_lens.is_null() || n_paths == 0 {
        set_error("bag must provide at least one path");
        return Err(AdvStatus::AdvErrInvalidArg);
    }
    let mut out = Vec::with_capacity(n_paths);
    for i in 0..n_paths {
        let p = *paths.add(i);
        let len = *path_lens.add(i);
        if p.is_null() {
            set_error("path pointer is null");
            return Err(AdvStatus::AdvErrInvalidArg);
        }
        out.push(std::slice::from_raw_parts(p, len).to_vec());
    }
    Ok(out)
}

fn bag_from_paths(paths: Vec<Vec<u8>>, label: Label) -> Result<Bag, AdvStatus> {
    let strings: Result<Vec<String>, _> = paths.into_iter().map(String::from_utf8).collect();
    match strings {
        Ok(paths) => Ok(Bag { paths, label, split: Split::Test, timestamp: 0 }),
        Err(_) => {
            set_error("paths must be valid UTF-8");
            Err(AdvStatus::AdvErrInvalidArg)
        }
    }
}

/// Load an autoencoder checkpoint. On success `*out` owns the handle; free
/// it with [`adv_codec_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adv_codec_load(path: *const c_char, out: *mut *mut AdvCodec) -> AdvStatus {
    if out.is_null() {
        set_error("out handle is null");
        return AdvStatus::AdvErrInvalidArg;
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match checkpoint::load_autoencoder(Path::new(&path)) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(AdvCodec { model }));
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrIo
        }
    }
}

/// # Safety
/// `codec` must be a handle from [`adv_codec_load`] (or null).
#[no_mangle]
pub unsafe extern "C" fn adv_codec_free(codec: *mut AdvCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Latent vector length of the loaded model.
///
/// # Safety
/// `codec` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn adv_codec_latent_dim(codec: *const AdvCodec) -> usize {
    if codec.is_null() {
        return 0;
    }
    (*codec).model.hp.latent_dim
}

/// Encode one byte string into `latent_out`, which must hold
/// `adv_codec_latent_dim` doubles.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `latent_out` to latent_dim
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn adv_encode(
    codec: *const AdvCodec,
    bytes: *const u8,
    len: usize,
    latent_out: *mut f64,
) -> AdvStatus {
    if codec.is_null() || bytes.is_null() || latent_out.is_null() {
        set_error("null argument");
        return AdvStatus::AdvErrInvalidArg;
    }
    let model = &(*codec).model;
    let s = std::slice::from_raw_parts(bytes, len);
    match encode(model, s) {
        Ok(z) => {
            ptr::copy_nonoverlapping(z.values.as_ptr(), latent_out, z.values.len());
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrCodec
        }
    }
}

/// Greedy-decode a latent into `buf`; `*written` receives the emitted byte
/// count (at most `max_chars`, truncated to `buf_len`).
///
/// # Safety
/// `latent` must point to `latent_len` doubles, `buf` to `buf_len` writable
/// bytes, `written` to a writable size_t.
#[no_mangle]
pub unsafe extern "C" fn adv_decode(
    codec: *const AdvCodec,
    latent: *const f64,
    latent_len: usize,
    max_chars: usize,
    buf: *mut u8,
    buf_len: usize,
    written: *mut usize,
) -> AdvStatus {
    if codec.is_null() || latent.is_null() || buf.is_null() || written.is_null() {
        set_error("null argument");
        return AdvStatus::AdvErrInvalidArg;
    }
    let model = &(*codec).model;
    let z = LatentVector { values: std::slice::from_raw_parts(latent, latent_len).to_vec() };
    match decode(model, &z, max_chars) {
        Ok(bytes) => {
            let n = bytes.len().min(buf_len);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf, n);
            *written = n;
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrCodec
        }
    }
}

/// Load a classifier checkpoint; free with [`adv_classifier_free`].
///
/// # Safety
/// As [`adv_codec_load`].
#[no_mangle]
pub unsafe extern "C" fn adv_classifier_load(
    path: *const c_char,
    out: *mut *mut AdvClassifier,
) -> AdvStatus {
    if out.is_null() {
        set_error("out handle is null");
        return AdvStatus::AdvErrInvalidArg;
    }
    let path = match path_from(path) {
        Ok(p) => p,
        Err(s) => return s,
    };
    match checkpoint::load_classifier(Path::new(&path)) {
        Ok(model) => {
            *out = Box::into_raw(Box::new(AdvClassifier { model }));
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrIo
        }
    }
}

/// # Safety
/// `clf` must be a handle from [`adv_classifier_load`] (or null).
#[no_mangle]
pub unsafe extern "C" fn adv_classifier_free(clf: *mut AdvClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

/// Classify a bag of byte strings: encodes each path with the codec, then
/// aggregates and classifies. `logits_out` receives the two class logits and
/// `label_out` 0 (benign) or 1 (malicious).
///
/// # Safety
/// `paths`/`path_lens` must describe `n_paths` readable byte strings;
/// `logits_out` must hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn adv_classify_bag(
    clf: *const AdvClassifier,
    codec: *const AdvCodec,
    paths: *const *const u8,
    path_lens: *const usize,
    n_paths: usize,
    logits_out: *mut f64,
    label_out: *mut i32,
) -> AdvStatus {
    if clf.is_null() || codec.is_null() || logits_out.is_null() || label_out.is_null() {
        set_error("null argument");
        return AdvStatus::AdvErrInvalidArg;
    }
    let bag_paths = match gather_bag(paths, path_lens, n_paths) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let codec_model = &(*codec).model;
    let refs: Vec<&[u8]> = bag_paths.iter().map(|p| p.as_slice()).collect();
    let latents = match advstrings::codec::encode_all(codec_model, &refs) {
        Ok(z) => z,
        Err(e) => {
            set_error(&e.to_string());
            return AdvStatus::AdvErrCodec;
        }
    };
    let d = codec_model.hp.latent_dim;
    let mut data = Vec::with_capacity(latents.len() * d);
    for z in &latents {
        data.extend_from_slice(&z.values);
    }
    let bag = LatentBag { matrix: Tensor::from_vec(latents.len(), d, data) };
    match classify(&(*clf).model, &bag) {
        Ok((logits, label)) => {
            ptr::copy_nonoverlapping(logits.as_ptr(), logits_out, 2);
            *label_out = label.index() as i32;
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrClassify
        }
    }
}

fn projection_from(p: AdvProjection) -> Projection {
    match p {
        AdvProjection::AdvProjL2 => Projection::L2,
        AdvProjection::AdvProjLinf => Projection::Linf,
        AdvProjection::AdvProjNone => Projection::None,
    }
}

fn label_from(i: i32) -> Result<Label, AdvStatus> {
    match Label::from_index(i as u8) {
        Some(l) if i == 0 || i == 1 => Ok(l),
        _ => {
            set_error("label must be 0 (benign) or 1 (malicious)");
            Err(AdvStatus::AdvErrInvalidArg)
        }
    }
}

/// Run the iterative projected attack against one bag. On success `*out`
/// owns a result handle; free it with [`adv_result_free`].
///
/// # Safety
/// Pointer arguments as in [`adv_classify_bag`]; `out` must be valid.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn adv_attack_pgd(
    clf: *const AdvClassifier,
    codec: *const AdvCodec,
    paths: *const *const u8,
    path_lens: *const usize,
    n_paths: usize,
    true_label: i32,
    alpha: f64,
    eps: f64,
    projection: AdvProjection,
    max_iters: usize,
    out: *mut *mut AdvAttackResult,
) -> AdvStatus {
    if clf.is_null() || codec.is_null() || out.is_null() {
        set_error("null argument");
        return AdvStatus::AdvErrInvalidArg;
    }
    let bag_paths = match gather_bag(paths, path_lens, n_paths) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let label = match label_from(true_label) {
        Ok(l) => l,
        Err(s) => return s,
    };
    let bag = match bag_from_paths(bag_paths, label) {
        Ok(b) => b,
        Err(s) => return s,
    };
    let mut config = AttackConfig::pgd(alpha, eps, projection_from(projection));
    if max_iters > 0 {
        config.max_iters = max_iters;
    }
    match pgd_attack(&(*clf).model, &(*codec).model, &bag, &config) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(AdvAttackResult { result }));
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrAttack
        }
    }
}

/// Run the one-shot sign attack with an epsilon sweep against one bag.
///
/// # Safety
/// As [`adv_attack_pgd`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn adv_attack_fgsm(
    clf: *const AdvClassifier,
    codec: *const AdvCodec,
    paths: *const *const u8,
    path_lens: *const usize,
    n_paths: usize,
    true_label: i32,
    delta_eps: f64,
    eps_max: f64,
    out: *mut *mut AdvAttackResult,
) -> AdvStatus {
    if clf.is_null() || codec.is_null() || out.is_null() {
        set_error("null argument");
        return AdvStatus::AdvErrInvalidArg;
    }
    let bag_paths = match gather_bag(paths, path_lens, n_paths) {
        Ok(p) => p,
        Err(s) => return s,
    };
    let label = match label_from(true_label) {
        Ok(l) => l,
        Err(s) => return s,
    };
    let bag = match bag_from_paths(bag_paths, label) {
        Ok(b) => b,
        Err(s) => return s,
    };
    let config = AttackConfig::fgsm(delta_eps, eps_max);
    match fgsm_attack(&(*clf).model, &(*codec).model, &bag, &config) {
        Ok(result) => {
            *out = Box::into_raw(Box::new(AdvAttackResult { result }));
            AdvStatus::AdvOk
        }
        Err(e) => {
            set_error(&e.to_string());
            AdvStatus::AdvErrAttack
        }
    }
}

/// # Safety
/// `result` must be a handle from an attack call (or null).
#[no_mangle]
pub unsafe extern "C" fn adv_result_free(result: *mut AdvAttackResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn adv_result_outcome(result: *const AdvAttackResult) -> AdvOutcome {
    match (*result).result.outcome {
        AttackOutcome::AlreadyMisclassified => AdvOutcome::AdvAlreadyMisclassified,
        AttackOutcome::Success => AdvOutcome::AdvSuccess,
        AttackOutcome::Failure => AdvOutcome::AdvFailure,
    }
}

/// Number of adversarial paths carried by the result (0 for failures).
///
/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn adv_result_num_paths(result: *const AdvAttackResult) -> usize {
    (*result).result.adversarial_paths.as_ref().map_or(0, |p| p.len())
}

/// Copy adversarial path `idx` into `buf` (truncating to `buf_len`);
/// `*written` receives the byte count.
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes and `written` be valid.
#[no_mangle]
pub unsafe extern "C" fn adv_result_path(
    result: *const AdvAttackResult,
    idx: usize,
    buf: *mut u8,
    buf_len: usize,
    written: *mut usize,
) -> AdvStatus {
    if result.is_null() || buf.is_null() || written.is_null() {
        set_error("null argument");
        return AdvStatus::AdvErrInvalidArg;
    }
    let paths = match (*result).result.adversarial_paths.as_ref() {
        Some(p) => p,
        None => {
            set_error("result carries no adversarial paths");
            return AdvStatus::AdvErrInvalidArg;
        }
    };
    if idx >= paths.len() {
        set_error("path index out of range");
        return AdvStatus::AdvErrInvalidArg;
    }
    let n = paths[idx].len().min(buf_len);
    ptr::copy_nonoverlapping(paths[idx].as_ptr(), buf, n);
    *written = n;
    AdvStatus::AdvOk
}

/// Attack iterations consumed (PGD steps or FGSM sweep rounds).
///
/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn adv_result_iterations(result: *const AdvAttackResult) -> usize {
    (*result).result.iterations_used
}

/// Epsilon at which the attack succeeded (0 when not applicable).
///
/// # Safety
/// `result` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn adv_result_eps_used(result: *const AdvAttackResult) -> f64 {
    (*result).result.eps_used
}
