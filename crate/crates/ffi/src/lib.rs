//! C ABI over the CKKS context, ciphertext operations, the encrypted linear
//! layer and the 1D CNN.
//!
//! Every handle is an opaque pointer owned by the caller and released with
//! its `*_free` function. Every fallible call returns an `HsStatus`; on
//! failure the message is kept per thread and read with
//! `hs_last_error_message`. Panics never cross the boundary.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use hesplit_core::ckks::{
    batch_decrypt_matrix, batch_encrypt_matrix, he_linear_batched, he_linear_per_row, keygen, Ciphertext, CkksError,
    Decryptor, HeParams, Layout, PrivateContext, PublicContext,
};
use hesplit_core::nn::{ModelParams, ModelVariant, NnError, Tensor};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Caller buffer too small; the needed length was written back.
    BufferTooSmall = 3,
    Params = 10,
    Capacity = 11,
    Capability = 12,
    Depth = 13,
    Alignment = 14,
    Serialize = 15,
    Shape = 16,
    Model = 20,
    Panic = 99,
}

/// Secret-key CKKS context: encrypts, decrypts and evaluates.
pub struct HsSecretContext {
    inner: PrivateContext,
    rng: ChaCha20Rng,
}

/// Evaluation-only CKKS context (public and Galois keys).
pub struct HsPublicContext {
    inner: PublicContext,
}

pub struct HsCiphertext {
    inner: Ciphertext,
}

/// Client conv layers plus server head, with seeded weights.
pub struct HsModel {
    inner: ModelParams,
    variant: ModelVariant,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Fail(HsStatus, String);

impl From<CkksError> for Fail {
    fn from(e: CkksError) -> Self {
        let s = match e {
            CkksError::Params(_) => HsStatus::Params,
            CkksError::Capacity { .. } => HsStatus::Capacity,
            CkksError::Capability(_) => HsStatus::Capability,
            CkksError::Depth => HsStatus::Depth,
            CkksError::Alignment(_) => HsStatus::Alignment,
            CkksError::Serialize(_) => HsStatus::Serialize,
            CkksError::Shape(_) => HsStatus::Shape,
        };
        Fail(s, e.to_string())
    }
}

impl From<NnError> for Fail {
    fn from(e: NnError) -> Self {
        Fail(HsStatus::Model, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(HsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(HsStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            HsStatus::Ok
        }
        Ok(Err(Fail(s, m))) => {
            set_error(m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {m}"));
            HsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(v));
    Ok(())
}

/// Copies `data` out, or reports the needed length when `buf` is too small.
unsafe fn write_out<T: Copy>(data: &[T], buf: *mut T, cap: usize, written: *mut usize) -> Result<(), Fail> {
    if written.is_null() {
        return Err(null("written"));
    }
    *written = data.len();
    if buf.is_null() || cap < data.len() {
        return Err(Fail(HsStatus::BufferTooSmall, format!("need {} elements, have {cap}", data.len())));
    }
    ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the calling thread's last error message as a NUL-terminated
/// string and returns its length without the NUL. Pass `cap == 0` to query.
///
/// # Safety
/// `buf` must be valid for `cap` bytes when `cap > 0`.
#[no_mangle]
pub unsafe extern "C" fn hs_last_error_message(buf: *mut u8, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = e.len().min(cap - 1);
            ptr::copy_nonoverlapping(e.as_ptr(), buf, n);
            *buf.add(n) = 0;
        }
        e.len()
    })
}

// ------------------------------------------------------------- contexts

/// Generates keys for ring degree `degree`, prime bit sizes
/// `chain_bits[0..chain_len]` and scale `2^scale_bits`, with Galois keys for
/// each entry of `rotations`. `seed` drives key generation and later
/// encryptions.
///
/// # Safety
/// Pointers must be valid for the given lengths; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_secret_context_new(
    degree: usize,
    chain_bits: *const u32,
    chain_len: usize,
    scale_bits: u32,
    rotations: *const i64,
    rotations_len: usize,
    seed: u64,
    out: *mut *mut HsSecretContext,
) -> HsStatus {
    guard(|| {
        let chain = slice(chain_bits, chain_len, "chain_bits")?;
        let rot = slice(rotations, rotations_len, "rotations")?;
        let p = HeParams::new(degree, chain, scale_bits)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let inner = keygen(&p, rot, &mut rng)?;
        put(out, HsSecretContext { inner, rng })
    })
}

/// # Safety
/// `ctx` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hs_secret_context_free(ctx: *mut HsSecretContext) {
    free(ctx)
}

/// Number of complex slots (half the ring degree); 0 for a null handle.
///
/// # Safety
/// `ctx` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hs_secret_context_slots(ctx: *const HsSecretContext) -> usize {
    ctx.as_ref().map_or(0, |c| c.inner.slots())
}

/// Copies out the evaluation keys, without the secret.
///
/// # Safety
/// `ctx` must be a live handle; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_secret_context_public(
    ctx: *const HsSecretContext,
    out: *mut *mut HsPublicContext,
) -> HsStatus {
    guard(|| {
        let c = as_ref(ctx, "ctx")?;
        put(out, HsPublicContext { inner: c.inner.public_ref().clone() })
    })
}

/// # Safety
/// `ctx` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hs_public_context_free(ctx: *mut HsPublicContext) {
    free(ctx)
}

/// Serializes the public context into `buf`. With a null or short buffer
/// returns `BufferTooSmall` and the needed size in `written`.
///
/// # Safety
/// `buf` must be valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hs_public_context_serialize(
    ctx: *const HsPublicContext,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HsStatus {
    guard(|| write_out(&as_ref(ctx, "ctx")?.inner.to_bytes(), buf, cap, written))
}

/// # Safety
/// `bytes` must be valid for `len` bytes; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_public_context_deserialize(
    bytes: *const u8,
    len: usize,
    out: *mut *mut HsPublicContext,
) -> HsStatus {
    guard(|| {
        let inner = PublicContext::from_bytes(slice(bytes, len, "bytes")?)?;
        put(out, HsPublicContext { inner })
    })
}

// ------------------------------------------------------------- ciphertexts

/// Encrypts `values[0..len]` into the leading slots.
///
/// # Safety
/// `values` must be valid for `len` doubles; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_encrypt(
    ctx: *mut HsSecretContext,
    values: *const f64,
    len: usize,
    out: *mut *mut HsCiphertext,
) -> HsStatus {
    guard(|| {
        let c = as_mut(ctx, "ctx")?;
        let v = slice(values, len, "values")?;
        let inner = c.inner.encrypt_values_symmetric(v, &mut c.rng)?;
        put(out, HsCiphertext { inner })
    })
}

/// Decrypts every slot into `out[0..cap]`; `written` gets the slot count.
///
/// # Safety
/// `out` must be valid for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_decrypt(
    ctx: *const HsSecretContext,
    ct: *const HsCiphertext,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> HsStatus {
    guard(|| {
        let c = as_ref(ctx, "ctx")?;
        let v = c.inner.decrypt_values(&as_ref(ct, "ct")?.inner)?;
        write_out(&v, out, cap, written)
    })
}

/// # Safety
/// `ct` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hs_ciphertext_free(ct: *mut HsCiphertext) {
    free(ct)
}

/// Remaining multiplicative depth; -1 for a null handle.
///
/// # Safety
/// `ct` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hs_ciphertext_level(ct: *const HsCiphertext) -> i64 {
    ct.as_ref().map_or(-1, |c| c.inner.level as i64)
}

/// # Safety
/// Handles must be live; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_add(
    ctx: *const HsPublicContext,
    a: *const HsCiphertext,
    b: *const HsCiphertext,
    out: *mut *mut HsCiphertext,
) -> HsStatus {
    guard(|| {
        let c = &as_ref(ctx, "ctx")?.inner;
        let inner = c.add(&as_ref(a, "a")?.inner, &as_ref(b, "b")?.inner)?;
        put(out, HsCiphertext { inner })
    })
}

/// Slot-wise product with `values`, rescaled; consumes one level and keeps
/// the scale.
///
/// # Safety
/// `values` must be valid for `len` doubles; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_mul_plain(
    ctx: *const HsPublicContext,
    a: *const HsCiphertext,
    values: *const f64,
    len: usize,
    out: *mut *mut HsCiphertext,
) -> HsStatus {
    guard(|| {
        let c = &as_ref(ctx, "ctx")?.inner;
        let a = &as_ref(a, "a")?.inner;
        let pt = c.encode_at(slice(values, len, "values")?, c.neutral_plain_scale(a), a.level)?;
        let mut inner = c.mul_plain(a, &pt)?;
        inner.scale = a.scale;
        put(out, HsCiphertext { inner })
    })
}

/// Cyclic left rotation of the slots by `steps`.
///
/// # Safety
/// Handles must be live; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_rotate(
    ctx: *const HsPublicContext,
    a: *const HsCiphertext,
    steps: i64,
    out: *mut *mut HsCiphertext,
) -> HsStatus {
    guard(|| {
        let c = &as_ref(ctx, "ctx")?.inner;
        let inner = c.rotate(&as_ref(a, "a")?.inner, steps)?;
        put(out, HsCiphertext { inner })
    })
}

/// # Safety
/// `buf` must be valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn hs_ciphertext_serialize(
    ctx: *const HsPublicContext,
    ct: *const HsCiphertext,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HsStatus {
    guard(|| {
        let bytes = as_ref(ct, "ct")?.inner.to_bytes(&as_ref(ctx, "ctx")?.inner);
        write_out(&bytes, buf, cap, written)
    })
}

/// # Safety
/// `bytes` must be valid for `len` bytes; `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_ciphertext_deserialize(
    ctx: *const HsPublicContext,
    bytes: *const u8,
    len: usize,
    out: *mut *mut HsCiphertext,
) -> HsStatus {
    guard(|| {
        let inner = Ciphertext::from_bytes(slice(bytes, len, "bytes")?, &as_ref(ctx, "ctx")?.inner)?;
        put(out, HsCiphertext { inner })
    })
}

// ------------------------------------------------------------- linear layer

/// Encrypts the row-major `rows x in_dim` matrix `a`, evaluates
/// `a * w + b` under encryption (`w` row-major `in_dim x out_dim`) and
/// decrypts into `out[0..rows*out_dim]`. `batched != 0` selects one
/// ciphertext per column instead of one per row; the per-row layout needs
/// Galois keys for the powers of two below `in_dim`.
///
/// # Safety
/// All arrays must be valid for the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn hs_he_linear(
    ctx: *mut HsSecretContext,
    a: *const f64,
    rows: usize,
    in_dim: usize,
    w: *const f64,
    b: *const f64,
    out_dim: usize,
    batched: i32,
    out: *mut f64,
    cap: usize,
    written: *mut usize,
) -> HsStatus {
    guard(|| {
        let c = as_mut(ctx, "ctx")?;
        let a = slice(a, rows * in_dim, "a")?;
        let w = slice(w, in_dim * out_dim, "w")?;
        let b = slice(b, out_dim, "b")?;
        if rows == 0 || in_dim == 0 || out_dim == 0 {
            return Err(invalid("empty matrix"));
        }
        let layout =
            if batched != 0 { Layout::Batched } else { Layout::per_row_for(in_dim, out_dim, c.inner.slots())? };
        let em = batch_encrypt_matrix(&c.inner, a, rows, in_dim, layout, &mut c.rng)?;
        let pubc = c.inner.public_ref();
        let res = if batched != 0 {
            he_linear_batched(pubc, &em, w, in_dim, out_dim, b)?
        } else {
            he_linear_per_row(pubc, &em, w, in_dim, out_dim, b)?
        };
        write_out(&batch_decrypt_matrix(&c.inner, &res)?, out, cap, written)
    })
}

// ------------------------------------------------------------- model

/// `variant` is 1, 2 or 3; weights are drawn from `seed`.
///
/// # Safety
/// `out` receives a handle.
#[no_mangle]
pub unsafe extern "C" fn hs_model_new(variant: u32, seed: u64, out: *mut *mut HsModel) -> HsStatus {
    guard(|| {
        let v = match variant {
            1 => ModelVariant::M1,
            2 => ModelVariant::M2,
            3 => ModelVariant::M3,
            _ => return Err(invalid(format!("unknown variant {variant}"))),
        };
        put(out, HsModel { inner: ModelParams::init(v, seed), variant: v })
    })
}

/// # Safety
/// `m` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn hs_model_free(m: *mut HsModel) {
    free(m)
}

/// Trainable parameter count; 0 for a null handle.
///
/// # Safety
/// `m` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn hs_model_param_count(m: *const HsModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.param_count())
}

/// Expected input shape per sample: channels and timesteps.
///
/// # Safety
/// Output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_model_input_shape(
    m: *const HsModel,
    channels: *mut usize,
    timesteps: *mut usize,
) -> HsStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        *as_mut(channels, "channels")? = m.variant.in_channels();
        *as_mut(timesteps, "timesteps")? = m.variant.timesteps();
        Ok(())
    })
}

/// Class predictions for `n` samples laid out `[n, channels, timesteps]`.
///
/// # Safety
/// `x` must hold `n * channels * timesteps` doubles, `labels` `n` entries.
#[no_mangle]
pub unsafe extern "C" fn hs_model_predict(m: *const HsModel, x: *const f64, n: usize, labels: *mut u32) -> HsStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let (c, t) = (m.variant.in_channels(), m.variant.timesteps());
        if n == 0 {
            return Ok(());
        }
        let x = Tensor::new(&[n, c, t], slice(x, n * c * t, "x")?.to_vec())?;
        if labels.is_null() {
            return Err(null("labels"));
        }
        let pred = m.inner.predict(&x, 64)?;
        for (i, p) in pred.into_iter().enumerate() {
            *labels.add(i) = p as u32;
        }
        Ok(())
    })
}
