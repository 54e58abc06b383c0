//! C ABI over `star-core`.
//!
//! Every function returns a [`StarStatus`]; on failure the message is
//! available from [`star_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings
//! returned through `char **` are released with [`star_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use star_core::decomposition::synth::{generate_db, SynthDbConfig};
use star_core::decomposition::{load_character_db, CharacterDb, StrokeEncoding};
use star_core::dictionary::{build_stroke_dictionary, levenshtein, EncodingDictionary, LookupResult, RectifyMode};
use star_core::evalharness::improved_ratio;
use star_core::glyphgen::{render_character, GlyphRaster, GlyphStyle, GLYPH_PIXELS};
use star_core::inference::{build_support_bank, recognize, FeatureBank};
use star_core::nnet::ModelState;
use star_core::trainer::load_checkpoint;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StarStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    BufferTooSmall = 5,
    Recognition = 6,
    Panic = 7,
}

/// Loaded character database.
pub struct StarDb {
    db: CharacterDb,
}

/// Stroke encoding dictionary.
pub struct StarDict {
    dict: EncodingDictionary,
}

/// Trained model with its dictionary and support bank.
pub struct StarRecognizer {
    model: ModelState,
    dict: EncodingDictionary,
    bank: FeatureBank,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn fail(status: StarStatus, msg: impl Into<String>) -> StarStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> StarStatus) -> StarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(StarStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, StarStatus> {
    if p.is_null() {
        return Err(fail(StarStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(StarStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn encoding_arg(p: *const c_char) -> Result<StrokeEncoding, StarStatus> {
    str_arg(p)?
        .parse::<StrokeEncoding>()
        .map_err(|e| fail(StarStatus::Parse, e.to_string()))
}

fn rectify_mode(mode: c_int) -> Result<RectifyMode, StarStatus> {
    match mode {
        0 => Ok(RectifyMode::All),
        1 => Ok(RectifyMode::First),
        m => Err(fail(
            StarStatus::InvalidArgument,
            format!("rectify mode {m} is not 0 (all) or 1 (first)"),
        )),
    }
}

unsafe fn write_ids(ids: &[u32], out: *mut u32, cap: usize, out_len: *mut usize) -> StarStatus {
    if out_len.is_null() {
        return fail(StarStatus::NullPointer, "out_len is null");
    }
    *out_len = ids.len();
    if ids.len() > cap {
        return fail(
            StarStatus::BufferTooSmall,
            format!("{} ids do not fit in {cap}", ids.len()),
        );
    }
    if !ids.is_empty() {
        if out.is_null() {
            return fail(StarStatus::NullPointer, "output buffer is null");
        }
        ptr::copy_nonoverlapping(ids.as_ptr(), out, ids.len());
    }
    StarStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread, or NULL. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn star_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn star_db_load(path: *const c_char, out: *mut *mut StarDb) -> StarStatus {
    guard(|| {
        if out.is_null() {
            return fail(StarStatus::NullPointer, "out is null");
        }
        let path = tri!(str_arg(path));
        match load_character_db(path) {
            Ok(db) => {
                *out = Box::into_raw(Box::new(StarDb { db }));
                StarStatus::Ok
            }
            Err(star_core::decomposition::DbError::Io(e)) => fail(StarStatus::Io, e.to_string()),
            Err(e) => fail(StarStatus::Parse, e.to_string()),
        }
    })
}

/// Synthetic database from the built-in generator.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn star_db_generate(radicals: u32, chars: usize, seed: u64, out: *mut *mut StarDb) -> StarStatus {
    guard(|| {
        if out.is_null() {
            return fail(StarStatus::NullPointer, "out is null");
        }
        let cfg = SynthDbConfig {
            radicals,
            chars,
            seed,
            ..Default::default()
        };
        match generate_db(&cfg) {
            Ok(db) => {
                *out = Box::into_raw(Box::new(StarDb { db }));
                StarStatus::Ok
            }
            Err(e) => fail(StarStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `db` must come from `star_db_load`/`star_db_generate` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn star_db_free(db: *mut StarDb) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Number of characters, or 0 for NULL.
///
/// # Safety
/// `db` must be a valid handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn star_db_len(db: *const StarDb) -> usize {
    db.as_ref().map_or(0, |d| d.db.len())
}

/// Renders one 32×32 glyph into `out_pixels` (row-major, values in [-1, 1]).
///
/// # Safety
/// `db` must be valid; `out_pixels` must hold `n_pixels` floats.
#[no_mangle]
pub unsafe extern "C" fn star_render_glyph(
    db: *const StarDb,
    char_id: u32,
    seed: u64,
    out_pixels: *mut f32,
    n_pixels: usize,
) -> StarStatus {
    guard(|| {
        let Some(db) = db.as_ref() else {
            return fail(StarStatus::NullPointer, "db is null");
        };
        if out_pixels.is_null() {
            return fail(StarStatus::NullPointer, "out_pixels is null");
        }
        if n_pixels != GLYPH_PIXELS {
            return fail(
                StarStatus::InvalidArgument,
                format!("expected {GLYPH_PIXELS} pixels, got {n_pixels}"),
            );
        }
        let Some(rec) = db.db.get(char_id) else {
            return fail(StarStatus::InvalidArgument, format!("unknown char {char_id}"));
        };
        match render_character(&db.db, rec, &GlyphStyle::default(), seed) {
            Ok(g) => {
                ptr::copy_nonoverlapping(g.pixels.as_ptr(), out_pixels, GLYPH_PIXELS);
                StarStatus::Ok
            }
            Err(e) => fail(StarStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// # Safety
/// `db` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn star_dict_build(db: *const StarDb, out: *mut *mut StarDict) -> StarStatus {
    guard(|| {
        let Some(db) = db.as_ref() else {
            return fail(StarStatus::NullPointer, "db is null");
        };
        if out.is_null() {
            return fail(StarStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(StarDict {
            dict: build_stroke_dictionary(&db.db),
        }));
        StarStatus::Ok
    })
}

/// # Safety
/// `dict` must come from `star_dict_build` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn star_dict_free(dict: *mut StarDict) {
    if !dict.is_null() {
        drop(Box::from_raw(dict));
    }
}

/// Characters sharing the stroke encoding `digits` (e.g. "31234"), ascending.
/// `*out_len` is 0 when the encoding is absent. If the buffer is too small,
/// `*out_len` still receives the required size.
///
/// # Safety
/// `dict` must be valid; `out_ids` must hold `cap` entries.
#[no_mangle]
pub unsafe extern "C" fn star_dict_lookup(
    dict: *const StarDict,
    digits: *const c_char,
    out_ids: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> StarStatus {
    guard(|| {
        let Some(d) = dict.as_ref() else {
            return fail(StarStatus::NullPointer, "dict is null");
        };
        let enc = tri!(encoding_arg(digits));
        let ids: Vec<u32> = match d.dict.lookup(&enc) {
            LookupResult::Unique(c) => vec![c],
            LookupResult::Ambiguous(s) => s.into_iter().collect(),
            LookupResult::Absent => Vec::new(),
        };
        write_ids(&ids, out_ids, cap, out_len)
    })
}

/// Rectifies `digits` against the dictionary and returns the candidate
/// characters. `mode` is 0 for every nearest encoding, 1 for the first only.
///
/// # Safety
/// `dict` must be valid; `out_ids` must hold `cap` entries; `out_distance` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn star_dict_candidates(
    dict: *const StarDict,
    digits: *const c_char,
    mode: c_int,
    out_ids: *mut u32,
    cap: usize,
    out_len: *mut usize,
    out_distance: *mut usize,
) -> StarStatus {
    guard(|| {
        let Some(d) = dict.as_ref() else {
            return fail(StarStatus::NullPointer, "dict is null");
        };
        let enc = tri!(encoding_arg(digits));
        let mode = tri!(rectify_mode(mode));
        let rs = match d.dict.rectified_set(&enc, mode) {
            Ok(rs) => rs,
            Err(e) => return fail(StarStatus::InvalidArgument, e.to_string()),
        };
        if !out_distance.is_null() {
            *out_distance = rs.distance;
        }
        write_ids(&d.dict.candidate_chars(&rs), out_ids, cap, out_len)
    })
}

/// Edit distance between two stroke digit strings.
///
/// # Safety
/// `a` and `b` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn star_levenshtein(a: *const c_char, b: *const c_char, out: *mut usize) -> StarStatus {
    guard(|| {
        if out.is_null() {
            return fail(StarStatus::NullPointer, "out is null");
        }
        let (a, b) = (tri!(encoding_arg(a)), tri!(encoding_arg(b)));
        *out = levenshtein(&a, &b);
        StarStatus::Ok
    })
}

/// `(star / sota − 1) × 100`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn star_improved_ratio(star: f64, sota: f64, out: *mut f64) -> StarStatus {
    guard(|| {
        if out.is_null() {
            return fail(StarStatus::NullPointer, "out is null");
        }
        match improved_ratio(star, sota) {
            Ok(v) => {
                *out = v;
                StarStatus::Ok
            }
            Err(e) => fail(StarStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Loads a checkpoint and builds the support bank over `db`.
///
/// # Safety
/// `db` must be valid; `checkpoint` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn star_recognizer_new(
    db: *const StarDb,
    checkpoint: *const c_char,
    support_k: usize,
    seed: u64,
    out: *mut *mut StarRecognizer,
) -> StarStatus {
    guard(|| {
        let Some(db) = db.as_ref() else {
            return fail(StarStatus::NullPointer, "db is null");
        };
        if out.is_null() {
            return fail(StarStatus::NullPointer, "out is null");
        }
        let path = tri!(str_arg(checkpoint));
        let model = match load_checkpoint(path) {
            Ok(m) => m,
            Err(star_core::trainer::CheckpointError::Io(e)) => return fail(StarStatus::Io, e.to_string()),
            Err(e) => return fail(StarStatus::Parse, e.to_string()),
        };
        let bank = match build_support_bank(&model, &db.db, support_k, &GlyphStyle::default(), seed) {
            Ok(b) => b,
            Err(e) => return fail(StarStatus::InvalidArgument, e.to_string()),
        };
        let dict = build_stroke_dictionary(&db.db);
        *out = Box::into_raw(Box::new(StarRecognizer { model, dict, bank }));
        StarStatus::Ok
    })
}

/// # Safety
/// `r` must come from `star_recognizer_new` or be NULL.
#[no_mangle]
pub unsafe extern "C" fn star_recognizer_free(r: *mut StarRecognizer) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Recognizes one 32×32 image (row-major, values in [-1, 1]). Writes the
/// predicted char id and, if `out_trace_json` is non-NULL, a JSON trace
/// to be released with `star_string_free`.
///
/// # Safety
/// `r` must be valid; `pixels` must hold `n_pixels` floats; outputs writable or NULL where allowed.
#[no_mangle]
pub unsafe extern "C" fn star_recognize(
    r: *const StarRecognizer,
    pixels: *const f32,
    n_pixels: usize,
    mode: c_int,
    out_char: *mut u32,
    out_trace_json: *mut *mut c_char,
) -> StarStatus {
    guard(|| {
        let Some(r) = r.as_ref() else {
            return fail(StarStatus::NullPointer, "recognizer is null");
        };
        if pixels.is_null() || out_char.is_null() {
            return fail(StarStatus::NullPointer, "pixels or out_char is null");
        }
        if n_pixels != GLYPH_PIXELS {
            return fail(
                StarStatus::InvalidArgument,
                format!("expected {GLYPH_PIXELS} pixels, got {n_pixels}"),
            );
        }
        let mode = tri!(rectify_mode(mode));
        let image = GlyphRaster {
            pixels: std::slice::from_raw_parts(pixels, n_pixels).to_vec(),
            char_id: 0,
            style_seed: 0,
        };
        let trace = match recognize(&image, &r.model, &r.dict, &r.bank, mode) {
            Ok(t) => t,
            Err(e) => return fail(StarStatus::Recognition, e.to_string()),
        };
        *out_char = trace.final_char;
        if !out_trace_json.is_null() {
            let json = serde_json::to_string(&trace).unwrap_or_default();
            *out_trace_json = CString::new(json).unwrap_or_default().into_raw();
        }
        StarStatus::Ok
    })
}

/// # Safety
/// `s` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn star_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
