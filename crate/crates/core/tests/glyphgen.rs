use star_core::decomposition::synth::{generate_db, SynthDbConfig};
use star_core::glyphgen::{generate_corpus, load_corpus, render_character, save_corpus, GlyphStyle, GLYPH_PIXELS};

#[test]
fn every_synthetic_character_renders() {
    let db = generate_db(&SynthDbConfig::default()).unwrap();
    for style in [
        GlyphStyle::default(),
        GlyphStyle::clean(),
        GlyphStyle {
            thickness_px: 2,
            slant: 0.15,
            ..Default::default()
        },
    ] {
        for r in db.records() {
            let g = render_character(&db, r, &style, 17).unwrap();
            assert_eq!(g.pixels.len(), GLYPH_PIXELS);
            assert!(g.pixels.iter().all(|p| (-1.0..=1.0).contains(p)));
            assert!(g.foreground_ratio() >= 0.01, "char {} nearly blank", r.char_id);
            assert!(g.foreground_ratio() < 0.6, "char {} flooded", r.char_id);
        }
    }
}

#[test]
fn clean_renders_are_binary() {
    let db = generate_db(&SynthDbConfig {
        chars: 30,
        ..Default::default()
    })
    .unwrap();
    for r in db.records() {
        let g = render_character(&db, r, &GlyphStyle::clean(), 0).unwrap();
        assert!(g.pixels.iter().all(|&p| p == 1.0 || p == -1.0));
    }
}

#[test]
fn thicker_strokes_add_ink() {
    let db = generate_db(&SynthDbConfig {
        chars: 30,
        ..Default::default()
    })
    .unwrap();
    for r in db.records() {
        let thin = render_character(&db, r, &GlyphStyle::clean(), 0).unwrap();
        let thick = render_character(
            &db,
            r,
            &GlyphStyle {
                thickness_px: 2,
                ..GlyphStyle::clean()
            },
            0,
        )
        .unwrap();
        assert!(thick.foreground_ratio() > thin.foreground_ratio());
    }
}

#[test]
fn saved_corpora_are_byte_identical() {
    let db = generate_db(&SynthDbConfig {
        chars: 40,
        ..Default::default()
    })
    .unwrap();
    let style = GlyphStyle::default();
    let dir = tempfile::tempdir().unwrap();
    let mut blobs = Vec::new();
    for run in 0..2 {
        let c = generate_corpus(&db, 3, &style, 42).unwrap();
        let stem = dir.path().join(format!("run{run}"));
        let header = save_corpus(&c, &stem, None, &style, 42, 3).unwrap();
        let (back, h) = load_corpus(&header).unwrap();
        assert_eq!(back, c);
        assert_eq!(h.n_samples, 120);
        assert_eq!(h.n_classes, 40);
        blobs.push(std::fs::read(dir.path().join(format!("run{run}.f32"))).unwrap());
    }
    assert_eq!(blobs[0], blobs[1]);

    let other = generate_corpus(&db, 3, &style, 43).unwrap();
    assert_ne!(other, generate_corpus(&db, 3, &style, 42).unwrap());
}

#[test]
fn corpus_order_follows_class_list() {
    let db = generate_db(&SynthDbConfig {
        chars: 20,
        ..Default::default()
    })
    .unwrap();
    let c = generate_corpus(&db, 2, &GlyphStyle::default(), 1).unwrap();
    let ids: Vec<u32> = db.char_ids().collect();
    for (i, s) in c.samples.iter().enumerate() {
        assert_eq!(s.char_id, ids[i / 2]);
    }
    assert_eq!(c.classes().collect::<Vec<_>>().len(), 20);
}
