//! C ABI over the block codec.
//!
//! Every function returns an [`EosqStatus`]; on failure the message is
//! available from [`eosq_last_error`] on the same thread. Handles are opaque
//! and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eoptshrinkq::io::CompressedFile;
use eoptshrinkq::pipeline::{self, bits, CompressedBlock, CompressionConfig, Method};
use eoptshrinkq::shrink::Loss;
use eoptshrinkq::turboquant::{ip_estimate, Qjl};
use eoptshrinkq::{DataBlock, Error};

/// Result codes. Values match the CLI exit codes where they overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EosqStatus {
    Ok = 0,
    /// Null pointer, bad length or unknown enum value.
    InvalidArgument = 1,
    /// Configuration or shape rejected by the codec.
    Usage = 2,
    /// Malformed or unsupported serialized data, or an I/O failure.
    Format = 3,
    /// Numeric failure such as non-finite input.
    Numeric = 4,
    /// Output buffer too small; the required size has been written.
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Compression settings.
pub struct EosqCodec {
    config: CompressionConfig,
}

/// One compressed block plus its decoded form for inner-product queries.
pub struct EosqBlock {
    config: CompressionConfig,
    block: CompressedBlock,
    decoded: DataBlock,
    qjl: Option<Qjl>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EosqStatus, msg: impl Into<String>) -> EosqStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> EosqStatus {
    let status = match e.exit_code() {
        2 => EosqStatus::Usage,
        3 => EosqStatus::Format,
        _ => EosqStatus::Numeric,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> EosqStatus) -> EosqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == EosqStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(EosqStatus::Internal, format!("internal error: {msg}"))
        }
    }
}

macro_rules! try_ffi {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return from_error(e),
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(EosqStatus::InvalidArgument, concat!("null pointer: ", stringify!($p)));
        })+
    };
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn eosq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eosq_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a codec.
///
/// `method`: 0 tq_mse, 1 tq_prod, 2 svd1_tq, 3 eoptshrinkq_mse,
/// 4 eoptshrinkq_prod, 5 kivi. `loss`: 0 Frobenius, 1 operator, 2 nuclear.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn eosq_codec_new(
    method: u8,
    residual_bits: u8,
    factor_bits: u8,
    loss: u8,
    seed: u64,
    out: *mut *mut EosqCodec,
) -> EosqStatus {
    guard(|| {
        non_null!(out);
        let Some(method) = Method::from_code(method) else {
            return fail(EosqStatus::InvalidArgument, format!("unknown method code {method}"));
        };
        let Some(loss) = Loss::from_code(loss) else {
            return fail(EosqStatus::InvalidArgument, format!("unknown loss code {loss}"));
        };
        let config = CompressionConfig {
            method,
            residual_bits,
            factor_bits,
            loss,
            root_seed: seed,
            ..CompressionConfig::default()
        };
        try_ffi!(config.validate());
        *out = Box::into_raw(Box::new(EosqCodec { config }));
        EosqStatus::Ok
    })
}

/// # Safety
/// `codec` must come from [`eosq_codec_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eosq_codec_free(codec: *mut EosqCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

fn wrap(config: CompressionConfig, block: CompressedBlock) -> Result<EosqBlock, Error> {
    let decoded = pipeline::decompress_block(&block)?;
    let qjl = block.sketches.as_ref().map(|_| Qjl::new(block.d, block.qjl_seed));
    Ok(EosqBlock {
        config,
        block,
        decoded,
        qjl,
    })
}

/// Compresses a row-major `n x d` block of f32 values. `block_index`
/// selects the per-block seeds.
///
/// # Safety
/// `data` must point to `n * d` readable floats; `codec` must be live;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_compress(
    codec: *const EosqCodec,
    data: *const f32,
    n: usize,
    d: usize,
    block_index: u64,
    out: *mut *mut EosqBlock,
) -> EosqStatus {
    guard(|| {
        non_null!(codec, data, out);
        let Some(len) = n.checked_mul(d).filter(|&l| l > 0) else {
            return fail(EosqStatus::InvalidArgument, "block shape must be non-empty");
        };
        let values: Vec<f64> = std::slice::from_raw_parts(data, len).iter().map(|&v| v as f64).collect();
        let block = try_ffi!(DataBlock::from_row_major(n, d, &values));
        let config = CompressionConfig {
            block_rows: n,
            ..(*codec).config.clone()
        };
        let cb = try_ffi!(pipeline::compress_block(&block, &config, block_index));
        *out = Box::into_raw(Box::new(try_ffi!(wrap(config, cb))));
        EosqStatus::Ok
    })
}

/// # Safety
/// `block` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eosq_block_free(block: *mut EosqBlock) {
    if !block.is_null() {
        drop(Box::from_raw(block));
    }
}

/// Shape of a compressed block.
///
/// # Safety
/// `block` must be live; `n` and `d` writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_block_shape(block: *const EosqBlock, n: *mut usize, d: *mut usize) -> EosqStatus {
    guard(|| {
        non_null!(block, n, d);
        *n = (*block).block.n;
        *d = (*block).block.d;
        EosqStatus::Ok
    })
}

/// Number of low-rank components stored.
///
/// # Safety
/// `block` must be live; `rank` writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_block_rank(block: *const EosqBlock, rank: *mut usize) -> EosqStatus {
    guard(|| {
        non_null!(block, rank);
        *rank = (*block).block.rank();
        EosqStatus::Ok
    })
}

/// Bits per entry, excluding norm and singular value overheads.
///
/// # Safety
/// `block` must be live; `bits_out` writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_block_bits(block: *const EosqBlock, bits_out: *mut f64) -> EosqStatus {
    guard(|| {
        non_null!(block, bits_out);
        *bits_out = bits::to_f64((*block).block.bits.total);
        EosqStatus::Ok
    })
}

/// Writes the reconstruction as row-major f32 into `out`, which holds
/// `capacity` floats.
///
/// # Safety
/// `block` must be live; `out` must point to `capacity` writable floats.
#[no_mangle]
pub unsafe extern "C" fn eosq_decompress(block: *const EosqBlock, out: *mut f32, capacity: usize) -> EosqStatus {
    guard(|| {
        non_null!(block, out);
        let values = (*block).decoded.to_row_major();
        if capacity < values.len() {
            return fail(
                EosqStatus::BufferTooSmall,
                format!("need {} floats, have {capacity}", values.len()),
            );
        }
        let dst = std::slice::from_raw_parts_mut(out, values.len());
        for (o, v) in dst.iter_mut().zip(values) {
            *o = v as f32;
        }
        EosqStatus::Ok
    })
}

/// Estimates `<query, x_row>` from the compressed block, applying the sign
/// sketch correction when the method stores one.
///
/// # Safety
/// `block` must be live; `query` must point to `d` readable floats;
/// `result` writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_inner_product(
    block: *const EosqBlock,
    row: usize,
    query: *const f32,
    d: usize,
    result: *mut f64,
) -> EosqStatus {
    guard(|| {
        non_null!(block, query, result);
        let b = &*block;
        if row >= b.block.n {
            return fail(EosqStatus::InvalidArgument, format!("row {row} out of range ({})", b.block.n));
        }
        if d != b.block.d {
            return fail(EosqStatus::InvalidArgument, format!("query length {d}, block width {}", b.block.d));
        }
        let q: Vec<f64> = std::slice::from_raw_parts(query, d).iter().map(|&v| v as f64).collect();
        let sidecar = match (&b.qjl, &b.block.sketches) {
            (Some(qjl), Some(s)) => Some((qjl, &s[row])),
            _ => None,
        };
        *result = try_ffi!(ip_estimate(&q, &b.decoded.row(row), sidecar));
        EosqStatus::Ok
    })
}

/// Serializes the block as a single-block compressed file. If `capacity` is
/// too small nothing is copied, `*written` holds the size needed and
/// `BufferTooSmall` is returned; pass a NULL `buf` to query the size.
///
/// # Safety
/// `block` must be live; `buf` must point to `capacity` writable bytes or be
/// NULL; `written` writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_block_serialize(
    block: *const EosqBlock,
    buf: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> EosqStatus {
    guard(|| {
        non_null!(block, written);
        let b = &*block;
        let file = CompressedFile {
            config: b.config.clone(),
            n: b.block.n,
            d: b.block.d,
            blocks: vec![b.block.clone()],
        };
        let bytes = try_ffi!(file.encode());
        *written = bytes.len();
        if buf.is_null() || capacity < bytes.len() {
            return fail(EosqStatus::BufferTooSmall, format!("need {} bytes, have {capacity}", bytes.len()));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        EosqStatus::Ok
    })
}

/// Reads a block written by [`eosq_block_serialize`].
///
/// # Safety
/// `buf` must point to `len` readable bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eosq_block_deserialize(buf: *const u8, len: usize, out: *mut *mut EosqBlock) -> EosqStatus {
    guard(|| {
        non_null!(buf, out);
        let file = try_ffi!(CompressedFile::decode(std::slice::from_raw_parts(buf, len)));
        if file.blocks.len() != 1 {
            return fail(EosqStatus::Format, format!("expected one block, found {}", file.blocks.len()));
        }
        let block = file.blocks.into_iter().next().expect("one block");
        *out = Box::into_raw(Box::new(try_ffi!(wrap(file.config, block))));
        EosqStatus::Ok
    })
}
