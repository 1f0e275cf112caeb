//! C ABI over `mixprior`.
//!
//! Models and priors are opaque handles. Models come from `mp_model_load`
//! or `mp_model_from_bytes`, priors from `mp_prior_from_json` or
//! `mp_model_prior`; release them with the matching `mp_*_free`. Every fallible
//! call returns an [`MpStatus`]; on failure the message is available from
//! [`mp_last_error`] on the same thread. Output buffers are caller-owned
//! and must hold the documented number of `double`s.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use mixprior::analysis::{second_order_delta, ChannelFactors, ComponentStats};
use mixprior::config::PriorConfig;
use mixprior::dump::Dump;
use mixprior::experiment::TrainedModel;
use mixprior::gradkit::Tensor;
use mixprior::priors::Prior;
use mixprior::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Io = 5,
    Format = 6,
    Config = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpModelKind {
    Flow = 0,
    Vae = 1,
}

/// Trained model together with the prior it was trained against.
pub struct MpModel {
    model: TrainedModel,
    prior: Prior,
}

pub struct MpPrior {
    prior: Prior,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> MpStatus {
    match e {
        Error::Shape { .. } => MpStatus::Shape,
        Error::Numeric { .. } => MpStatus::Numeric,
        Error::InvalidArgument(_) => MpStatus::InvalidArgument,
        Error::Config(_) => MpStatus::Config,
        Error::Io { .. } => MpStatus::Io,
        Error::Parse { .. } | Error::Format(_) => MpStatus::Format,
    }
}

struct Fail(MpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> MpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MpStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MpStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn rows_tensor(x: *const f64, rows: usize, cols: usize) -> Result<Tensor, Fail> {
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(MpStatus::InvalidArgument, "rows * cols overflows".into()))?;
    Ok(Tensor::matrix(rows, cols, slice(x, n, "x")?.to_vec())?)
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn expect_cols(cols: usize, want: usize) -> Result<(), Fail> {
    if cols != want {
        return Err(Fail(MpStatus::Shape, format!("expected {want} columns, got {cols}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn load_dump(dump: &Dump) -> Result<MpModel, Fail> {
    let (model, prior) = TrainedModel::from_dump(dump)?;
    Ok(MpModel { model, prior })
}

/// Load a model dump written by `mixprior train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mp_model_load(path: *const c_char, out: *mut *mut MpModel) -> MpStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let m = load_dump(&Dump::load(Path::new(path))?)?;
        write_handle(out, m)
    })
}

/// Load a model dump from memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mp_model_from_bytes(bytes: *const u8, len: usize, out: *mut *mut MpModel) -> MpStatus {
    guard(|| {
        if bytes.is_null() && len > 0 {
            return Err(null("bytes"));
        }
        let data = if len == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, len) };
        let m = load_dump(&Dump::from_bytes(data)?)?;
        write_handle(out, m)
    })
}

/// # Safety
/// `model` must be null or a handle from `mp_model_load`, freed once.
#[no_mangle]
pub unsafe extern "C" fn mp_model_free(model: *mut MpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `kind`, `data_dim` and `latent_dim` may be null.
#[no_mangle]
pub unsafe extern "C" fn mp_model_info(
    model: *const MpModel,
    kind: *mut MpModelKind,
    data_dim: *mut usize,
    latent_dim: *mut usize,
) -> MpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if !kind.is_null() {
            *kind = match m.model {
                TrainedModel::Flow(_) => MpModelKind::Flow,
                TrainedModel::Vae(_) => MpModelKind::Vae,
            };
        }
        if !data_dim.is_null() {
            *data_dim = m.model.latent().data_dim();
        }
        if !latent_dim.is_null() {
            *latent_dim = m.model.latent().latent_dim();
        }
        Ok(())
    })
}

/// Per-row log-likelihood of `x` (`rows × cols`, row-major). Flows are
/// exact; VAEs use an importance-weighted estimate with `iw_samples`
/// draws seeded by `seed`. `out` receives `rows` values.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mp_model_log_likelihood(
    model: *const MpModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    iw_samples: usize,
    seed: u64,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        expect_cols(cols, m.model.latent().data_dim())?;
        let x = rows_tensor(x, rows, cols)?;
        let ll = m.model.log_likelihood(&m.prior, &x, iw_samples, seed)?;
        slice_mut(out, rows, "out")?.copy_from_slice(&ll);
        Ok(())
    })
}

/// Latent codes of `x`: `z = f(x)` for a flow, the posterior mean for a
/// VAE. `out` receives `rows × latent_dim` values.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mp_model_encode(
    model: *const MpModel,
    x: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        expect_cols(cols, m.model.latent().data_dim())?;
        let z = m.model.latent().encode(&rows_tensor(x, rows, cols)?)?;
        slice_mut(out, z.data().len(), "out")?.copy_from_slice(z.data());
        Ok(())
    })
}

/// Copy of the prior stored in a model dump.
///
/// # Safety
/// `model` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mp_model_prior(model: *const MpModel, out: *mut *mut MpPrior) -> MpStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        write_handle(out, MpPrior { prior: m.prior.clone() })
    })
}

/// Build a prior from a JSON prior block (the `prior` object of an
/// experiment config) in `dim` latent dimensions.
///
/// # Safety
/// `json` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn mp_prior_from_json(json: *const c_char, dim: usize, out: *mut *mut MpPrior) -> MpStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let cfg = PriorConfig::from_json(text)?;
        write_handle(out, MpPrior { prior: cfg.build(dim)? })
    })
}

/// # Safety
/// `prior` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn mp_prior_free(prior: *mut MpPrior) {
    if !prior.is_null() {
        drop(Box::from_raw(prior));
    }
}

/// # Safety
/// `prior` must be a live handle; `dim` and `k` may be null.
#[no_mangle]
pub unsafe extern "C" fn mp_prior_info(prior: *const MpPrior, dim: *mut usize, k: *mut usize) -> MpStatus {
    guard(|| {
        let p = &prior.as_ref().ok_or_else(|| null("prior"))?.prior;
        if !dim.is_null() {
            *dim = p.dim();
        }
        if !k.is_null() {
            *k = p.k();
        }
        Ok(())
    })
}

/// Log-density of each row of `z` (`rows × cols`). `out` receives `rows` values.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mp_prior_log_pdf(
    prior: *const MpPrior,
    z: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        let p = &prior.as_ref().ok_or_else(|| null("prior"))?.prior;
        expect_cols(cols, p.dim())?;
        let lp = p.log_pdf(&rows_tensor(z, rows, cols)?)?;
        slice_mut(out, rows, "out")?.copy_from_slice(&lp);
        Ok(())
    })
}

/// Draw `n` samples. `out` receives `n × dim` values; `labels` (nullable)
/// receives the component index of each draw.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mp_prior_sample(
    prior: *const MpPrior,
    n: usize,
    seed: u64,
    out: *mut f64,
    labels: *mut usize,
) -> MpStatus {
    guard(|| {
        let p = &prior.as_ref().ok_or_else(|| null("prior"))?.prior;
        let (z, l) = p.sample(n, seed)?;
        slice_mut(out, z.data().len(), "out")?.copy_from_slice(z.data());
        if !labels.is_null() && n > 0 {
            std::slice::from_raw_parts_mut(labels, n).copy_from_slice(&l);
        }
        Ok(())
    })
}

fn stats(sigma2: &[f64], weights: &[f64], k: usize, dim: usize) -> ComponentStats {
    ComponentStats {
        mean_images: vec![vec![0.0; dim]; k],
        sigma2: sigma2.chunks(dim.max(1)).take(k).map(|s| Some(s.to_vec())).collect(),
        weights: weights.to_vec(),
        counts: vec![0; k],
    }
}

/// Second-order likelihood-gap estimate from per-component statistics.
///
/// `*_sigma2` are `k × dim` row-major and `*_weights` have `k` entries.
/// `g` holds one factor per dimension, or is null for all ones.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn mp_second_order_delta(
    in_sigma2: *const f64,
    in_weights: *const f64,
    in_k: usize,
    out_sigma2: *const f64,
    out_weights: *const f64,
    out_k: usize,
    dim: usize,
    g: *const f64,
    sigma2_psi: f64,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let size = |k: usize| {
            k.checked_mul(dim)
                .ok_or_else(|| Fail(MpStatus::InvalidArgument, "k * dim overflows".into()))
        };
        let a = stats(slice(in_sigma2, size(in_k)?, "in_sigma2")?, slice(in_weights, in_k, "in_weights")?, in_k, dim);
        let b = stats(
            slice(out_sigma2, size(out_k)?, "out_sigma2")?,
            slice(out_weights, out_k, "out_weights")?,
            out_k,
            dim,
        );
        let factors = if g.is_null() {
            ChannelFactors::identity(dim)
        } else {
            ChannelFactors {
                g: slice(g, dim, "g")?.to_vec(),
                channel_of: (0..dim).collect(),
            }
        };
        *out = second_order_delta(&a, &b, &factors, sigma2_psi)?;
        Ok(())
    })
}
