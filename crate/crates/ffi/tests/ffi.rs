use std::ffi::{CStr, CString};
use std::ptr;

use star_core::decomposition::synth::{generate_db, SynthDbConfig};
use star_core::glyphgen::{render_character, GlyphStyle, GLYPH_PIXELS};
use star_core::nnet::ModelConfig;
use star_core::trainer::{save_checkpoint, train_joint, TrainConfig};
use star_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = star_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn database_and_dictionary_round_trip() {
    unsafe {
        let mut db = ptr::null_mut();
        assert_eq!(star_db_generate(20, 150, 7, &mut db), StarStatus::Ok);
        assert_eq!(star_db_len(db), 150);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.tsv");
        generate_db(&SynthDbConfig::default()).unwrap().save(&path).unwrap();
        let mut loaded = ptr::null_mut();
        assert_eq!(
            star_db_load(c(path.to_str().unwrap()).as_ptr(), &mut loaded),
            StarStatus::Ok
        );
        assert_eq!(star_db_len(loaded), 150);

        let mut dict = ptr::null_mut();
        assert_eq!(star_dict_build(db, &mut dict), StarStatus::Ok);

        let core_db = generate_db(&SynthDbConfig::default()).unwrap();
        let rec = &core_db.records()[0];
        let mut ids = [0u32; 8];
        let mut n = 0usize;
        let digits = c(&rec.strokes.digits());
        assert_eq!(
            star_dict_lookup(dict, digits.as_ptr(), ids.as_mut_ptr(), ids.len(), &mut n),
            StarStatus::Ok
        );
        assert!(n >= 1 && ids[..n].contains(&rec.char_id));

        // Too-small buffers report the needed size.
        let group = star_core::decomposition::synth::ambiguous_groups(&core_db)[0].clone();
        let g_digits = c(&core_db.get(group[0]).unwrap().strokes.digits());
        assert_eq!(
            star_dict_lookup(dict, g_digits.as_ptr(), ids.as_mut_ptr(), 1, &mut n),
            StarStatus::BufferTooSmall
        );
        assert_eq!(n, group.len());

        let mut dist = 0usize;
        let q = c("5555555555555555");
        let mut all = [0u32; 256];
        let mut first = [0u32; 256];
        let (mut na, mut nf) = (0usize, 0usize);
        assert_eq!(
            star_dict_candidates(dict, q.as_ptr(), 0, all.as_mut_ptr(), 256, &mut na, &mut dist),
            StarStatus::Ok
        );
        assert_eq!(
            star_dict_candidates(dict, q.as_ptr(), 1, first.as_mut_ptr(), 256, &mut nf, ptr::null_mut()),
            StarStatus::Ok
        );
        assert!(dist > 0 && nf >= 1 && na >= nf);
        assert!(first[..nf].iter().all(|x| all[..na].contains(x)));
        assert_eq!(
            star_dict_candidates(dict, q.as_ptr(), 7, all.as_mut_ptr(), 256, &mut na, ptr::null_mut()),
            StarStatus::InvalidArgument
        );

        let mut pixels = vec![0f32; GLYPH_PIXELS];
        assert_eq!(
            star_render_glyph(db, rec.char_id, 3, pixels.as_mut_ptr(), GLYPH_PIXELS),
            StarStatus::Ok
        );
        let expect = render_character(&core_db, rec, &GlyphStyle::default(), 3).unwrap();
        assert_eq!(pixels, expect.pixels);
        assert_eq!(
            star_render_glyph(db, rec.char_id, 3, pixels.as_mut_ptr(), 10),
            StarStatus::InvalidArgument
        );

        star_dict_free(dict);
        star_db_free(loaded);
        star_db_free(db);
    }
}

#[test]
fn scalar_helpers() {
    unsafe {
        let mut d = 0usize;
        assert_eq!(
            star_levenshtein(c("1234").as_ptr(), c("2134").as_ptr(), &mut d),
            StarStatus::Ok
        );
        assert_eq!(d, 2);
        assert_eq!(
            star_levenshtein(c("12x").as_ptr(), c("1").as_ptr(), &mut d),
            StarStatus::Parse
        );
        assert!(!last_error().is_empty());

        let mut r = 0f64;
        assert_eq!(star_improved_ratio(7.54, 5.91, &mut r), StarStatus::Ok);
        assert!((r - 27.58).abs() <= 0.01);
        assert_eq!(star_improved_ratio(1.0, 0.0, &mut r), StarStatus::InvalidArgument);
    }
}

#[test]
fn null_arguments_are_reported() {
    unsafe {
        assert_eq!(star_db_generate(20, 10, 1, ptr::null_mut()), StarStatus::NullPointer);
        assert_eq!(star_db_load(ptr::null(), &mut ptr::null_mut()), StarStatus::NullPointer);
        assert_eq!(
            star_dict_build(ptr::null(), &mut ptr::null_mut()),
            StarStatus::NullPointer
        );
        assert_eq!(
            star_levenshtein(ptr::null(), c("1").as_ptr(), &mut 0),
            StarStatus::NullPointer
        );
        assert_eq!(star_db_len(ptr::null()), 0);
        star_db_free(ptr::null_mut());
        star_dict_free(ptr::null_mut());
        star_recognizer_free(ptr::null_mut());
        star_string_free(ptr::null_mut());

        let mut db = ptr::null_mut();
        assert_eq!(star_db_load(c("/nonexistent/db.tsv").as_ptr(), &mut db), StarStatus::Io);
        assert!(db.is_null());
    }
}

#[test]
fn recognizer_end_to_end() {
    let core_db = generate_db(&SynthDbConfig {
        chars: 20,
        radicals: 8,
        ..Default::default()
    })
    .unwrap();
    let corpus = star_core::glyphgen::generate_corpus(&core_db, 1, &GlyphStyle::default(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        model: ModelConfig::micro(),
        ..Default::default()
    };
    let (model, _) = train_joint(&cfg, &corpus, &core_db).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let db_path = dir.path().join("db.tsv");
    let ckpt = dir.path().join("m.ckpt");
    core_db.save(&db_path).unwrap();
    save_checkpoint(&model, &ckpt).unwrap();

    unsafe {
        let mut db = ptr::null_mut();
        assert_eq!(
            star_db_load(c(db_path.to_str().unwrap()).as_ptr(), &mut db),
            StarStatus::Ok
        );
        let mut rec = ptr::null_mut();
        assert_eq!(
            star_recognizer_new(db, c(ckpt.to_str().unwrap()).as_ptr(), 1, 0, &mut rec),
            StarStatus::Ok
        );

        let img = &corpus.samples[0];
        let mut out = 0u32;
        let mut trace = ptr::null_mut();
        let status = star_recognize(rec, img.pixels.as_ptr(), GLYPH_PIXELS, 0, &mut out, &mut trace);
        if status == StarStatus::Ok {
            let json: serde_json::Value = serde_json::from_str(CStr::from_ptr(trace).to_str().unwrap()).unwrap();
            assert_eq!(json["final_char"], out);
            assert!(core_db.get(out).is_some());
            star_string_free(trace);
        } else {
            // An undertrained model may decode nothing at all.
            assert_eq!(status, StarStatus::Recognition);
        }
        assert_eq!(
            star_recognize(rec, img.pixels.as_ptr(), 5, 0, &mut out, ptr::null_mut()),
            StarStatus::InvalidArgument
        );

        let bad = dir.path().join("bad.ckpt");
        std::fs::write(&bad, b"not a checkpoint").unwrap();
        let mut r2 = ptr::null_mut();
        assert_eq!(
            star_recognizer_new(db, c(bad.to_str().unwrap()).as_ptr(), 1, 0, &mut r2),
            StarStatus::Parse
        );
        assert!(r2.is_null());

        star_recognizer_free(rec);
        star_db_free(db);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/star.h");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("t.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{header}\"\nint main(void) {{ StarDb *db = 0; StarStatus s = star_db_generate(20, 150, 7, &db); (void)s; star_db_free(db); return STAR_STATUS_OK; }}\n"
        ),
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only"])
        .arg(&src)
        .output()
        .expect("cc available");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
