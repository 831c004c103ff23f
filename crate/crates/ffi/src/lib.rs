//! C ABI over `nngp_cert`.
//!
//! Every fallible function returns an [`NngpStatus`] and writes its result
//! through an out pointer. On failure a message is kept per thread and can be
//! read with [`nngp_last_error`]. Architectures and networks are opaque
//! handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nngp_cert::arch::{load_arch, ArchSpec};
use nngp_cert::certificate::{self, Region};
use nngp_cert::covering;
use nngp_cert::kernel::{self, smoothness_constants};
use nngp_cert::randnet::{init_random, RandomNetwork};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NngpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Arch = 4,
    Kernel = 5,
    Certificate = 6,
    Network = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NngpRegion {
    Ball = 0,
    Segment = 1,
}

/// Certified radii for one start point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NngpCertificate {
    pub n: usize,
    pub delta: f64,
    pub m: f64,
    pub norm2_x0: f64,
    pub a_n: f64,
    pub r_l1: f64,
    pub r_segment: f64,
}

/// Opaque architecture handle.
pub struct NngpArch(ArchSpec);

/// Opaque random-network handle.
pub struct NngpNetwork(RandomNetwork);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn fail(status: NngpStatus, msg: impl std::fmt::Display) -> NngpStatus {
    set_error(msg.to_string());
    status
}

/// Run `f`, turning panics into `NngpStatus::Panic`.
fn guard(f: impl FnOnce() -> NngpStatus) -> NngpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(NngpStatus::Panic, "internal panic"),
    }
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn nngp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parse a JSON architecture document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_arch_load(json: *const c_char, out: *mut *mut NngpArch) -> NngpStatus {
    guard(|| {
        if json.is_null() || out.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        let Ok(text) = CStr::from_ptr(json).to_str() else {
            return fail(NngpStatus::InvalidUtf8, "document is not UTF-8");
        };
        match load_arch(text) {
            Ok(a) => {
                *out = Box::into_raw(Box::new(NngpArch(a)));
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Arch, e),
        }
    })
}

/// # Safety
/// `arch` must come from `nngp_arch_load` and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn nngp_arch_free(arch: *mut NngpArch) {
    if !arch.is_null() {
        drop(Box::from_raw(arch));
    }
}

/// # Safety
/// `arch` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_arch_input_len(arch: *const NngpArch, out: *mut usize) -> NngpStatus {
    guard(|| {
        if arch.is_null() || out.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        *out = (*arch).0.input_len();
        NngpStatus::Ok
    })
}

/// Smoothness constants `C` and `M` of the architecture.
///
/// # Safety
/// `arch` must be a live handle; `c` and `m` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_arch_smoothness(arch: *const NngpArch, c: *mut f64, m: *mut f64) -> NngpStatus {
    guard(|| {
        if arch.is_null() || c.is_null() || m.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        let s = smoothness_constants(&(*arch).0);
        *c = s.c;
        *m = s.m;
        NngpStatus::Ok
    })
}

/// Kernel matrix of `count` points stored row-major (`count * input_len`
/// doubles, channel-major within a point); writes `count * count` doubles.
///
/// # Safety
/// Buffers must have the sizes stated above.
#[no_mangle]
pub unsafe extern "C" fn nngp_kernel_matrix(
    arch: *const NngpArch,
    points: *const f64,
    count: usize,
    out: *mut f64,
) -> NngpStatus {
    guard(|| {
        if arch.is_null() || out.is_null() || (points.is_null() && count > 0) {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        let arch = &(*arch).0;
        let n = arch.input_len();
        let flat = if count == 0 { &[][..] } else { std::slice::from_raw_parts(points, count * n) };
        let pts: Vec<Vec<f64>> = flat.chunks(n).map(<[f64]>::to_vec).collect();
        match kernel::kernel_matrix(arch, &pts) {
            Ok(k) => {
                let dst = std::slice::from_raw_parts_mut(out, count * count);
                for i in 0..count {
                    for j in 0..count {
                        dst[i * count + j] = k[(i, j)];
                    }
                }
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Kernel, e),
        }
    })
}

/// `Psi(t)` for `t` in `[-1, 1]`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_psi(t: f64, out: *mut f64) -> NngpStatus {
    guard(|| {
        if out.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        match kernel::psi(t) {
            Ok(v) => {
                *out = v;
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_dudley_constant(n: usize, out: *mut f64) -> NngpStatus {
    guard(|| {
        if out.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        match certificate::dudley_constant(n) {
            Ok(v) => {
                *out = v;
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Certificate, e),
        }
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_certify(
    norm2_x0: f64,
    delta: f64,
    m: f64,
    n: usize,
    out: *mut NngpCertificate,
) -> NngpStatus {
    guard(|| {
        if out.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        match certificate::certify(norm2_x0, delta, m, n) {
            Ok(c) => {
                *out = NngpCertificate {
                    n: c.n,
                    delta: c.delta,
                    m: c.m,
                    norm2_x0: c.norm2_x0,
                    a_n: c.a_n,
                    r_l1: c.r_l1,
                    r_segment: c.r_segment,
                };
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Certificate, e),
        }
    })
}

/// Failure probability bound of a region of size `r`; saturates at 1.
#[no_mangle]
pub extern "C" fn nngp_failure_prob(r: f64, norm2_x0: f64, m: f64, n: usize, region: NngpRegion) -> f64 {
    let region = match region {
        NngpRegion::Ball => Region::Ball,
        NngpRegion::Segment => Region::Segment,
    };
    certificate::failure_prob(r, norm2_x0, m, n, region)
}

/// Covering-number bound of the unit l1 ball by Euclidean `eps`-balls.
#[no_mangle]
pub extern "C" fn nngp_covering_bound(n: usize, eps: f64) -> f64 {
    covering::covering_bound(n, eps)
}

/// Draw a random network with `n_widths` hidden widths.
///
/// # Safety
/// `arch` must be a live handle, `widths` must hold `n_widths` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_network_new(
    arch: *const NngpArch,
    widths: *const usize,
    n_widths: usize,
    seed: u64,
    out: *mut *mut NngpNetwork,
) -> NngpStatus {
    guard(|| {
        if arch.is_null() || out.is_null() || (widths.is_null() && n_widths > 0) {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        let w = if n_widths == 0 { &[][..] } else { std::slice::from_raw_parts(widths, n_widths) };
        match init_random(&(*arch).0, w, seed) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(NngpNetwork(net)));
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Network, e),
        }
    })
}

/// # Safety
/// `net` must come from `nngp_network_new` and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn nngp_network_free(net: *mut NngpNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Scalar output at `x` (`len` doubles, channel-major).
///
/// # Safety
/// `net` must be a live handle, `x` must hold `len` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nngp_network_forward(
    net: *const NngpNetwork,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> NngpStatus {
    guard(|| {
        if net.is_null() || x.is_null() || out.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        match (*net).0.forward(std::slice::from_raw_parts(x, len)) {
            Ok(pass) => {
                *out = pass.output;
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Network, e),
        }
    })
}

/// Gradient of the output at `x`, written to `grad` (`len` doubles).
///
/// # Safety
/// `net` must be a live handle; `x` and `grad` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn nngp_network_gradient(
    net: *const NngpNetwork,
    x: *const f64,
    len: usize,
    grad: *mut f64,
) -> NngpStatus {
    guard(|| {
        if net.is_null() || x.is_null() || grad.is_null() {
            return fail(NngpStatus::NullPointer, "null argument");
        }
        match (*net).0.gradient(std::slice::from_raw_parts(x, len)) {
            Ok(g) => {
                std::slice::from_raw_parts_mut(grad, len).copy_from_slice(&g);
                NngpStatus::Ok
            }
            Err(e) => fail(NngpStatus::Network, e),
        }
    })
}
