mod common;

use std::collections::BTreeMap;

use rand::Rng;

use common::{ConstantModel, OracleModel};
use star_core::decomposition::synth::{generate_db, SynthDbConfig};
use star_core::dictionary::{build_stroke_dictionary, RectifyMode};
use star_core::glyphgen::{generate_corpus, GlyphRaster, GlyphStyle};
use star_core::inference::{
    build_support_bank, fmm_match, recognize, recognize_batch, recognize_decoded, ConfusingReason, Decision,
    FeatureBank, InferenceError,
};
use star_core::nnet::ModelConfig;
use star_core::nnet::ModelState;

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

#[test]
fn fmm_matches_brute_force_argmax() {
    let mut rng = common::rng(4);
    let vectors: BTreeMap<u32, Vec<f64>> = (0..50u32)
        .map(|c| (c, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    let bank = FeatureBank::from_vectors(vectors.clone());
    for q in 0..200 {
        let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut cands: Vec<u32> = (0..50).filter(|_| rng.gen_bool(0.3)).collect();
        if cands.is_empty() {
            cands.push(7);
        }
        let (best, scores) = fmm_match(&f, &cands, &bank).unwrap();
        let oracle = cands
            .iter()
            .map(|c| (*c, cosine(&f, &vectors[c])))
            .fold(None, |acc: Option<(u32, f64)>, (c, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((c, s)),
            })
            .unwrap();
        assert_eq!(best, oracle.0, "query {q}");
        assert_eq!(scores.len(), cands.len());
    }
    assert_eq!(bank.query_count(), 200);
}

#[test]
fn fmm_ties_go_to_the_lowest_id() {
    let bank = FeatureBank::from_vectors([(9, vec![1.0, 0.0]), (4, vec![2.0, 0.0]), (6, vec![0.0, 1.0])].into());
    assert_eq!(fmm_match(&[1.0, 0.0], &[9, 6, 4], &bank).unwrap().0, 4);
    assert!(matches!(
        fmm_match(&[1.0, 0.0], &[], &bank),
        Err(InferenceError::EmptyCandidates)
    ));
    assert!(matches!(
        fmm_match(&[1.0, 0.0], &[5], &bank),
        Err(InferenceError::MissingBankEntry(5))
    ));
}

#[test]
fn oracle_model_recognizes_everything() {
    let db = generate_db(&SynthDbConfig {
        chars: 80,
        ..Default::default()
    })
    .unwrap();
    let dict = build_stroke_dictionary(&db);
    let model = OracleModel::new(&db);
    let bank = build_support_bank(&model, &db, 2, &GlyphStyle::default(), 1).unwrap();
    assert_eq!(bank.len(), 80);
    let corpus = generate_corpus(&db, 2, &GlyphStyle::default(), 8).unwrap();
    let images: Vec<&GlyphRaster> = corpus.samples.iter().collect();
    for mode in [RectifyMode::All, RectifyMode::First] {
        let traces = recognize_batch(&images, &model, &dict, &bank, mode, 16).unwrap();
        let mut ambiguous = 0;
        for (s, t) in corpus.samples.iter().zip(traces) {
            let t = t.unwrap();
            assert_eq!(t.final_char, s.char_id);
            if let Decision::Confusing(reason) = t.decision {
                assert_eq!(reason, ConfusingReason::AmbiguousEntry);
                ambiguous += 1;
            }
        }
        assert!(ambiguous > 0, "fixture should exercise the matching path");
    }
}

#[test]
fn screening_bypasses_matching_for_unique_encodings() {
    let db = generate_db(&SynthDbConfig {
        chars: 60,
        ..Default::default()
    })
    .unwrap();
    let dict = build_stroke_dictionary(&db);
    let model = OracleModel::new(&db);
    let bank = build_support_bank(&model, &db, 1, &GlyphStyle::default(), 1).unwrap();
    for r in db.records() {
        let labels: Vec<usize> = r.strokes.labels().iter().map(|&l| l as usize).collect();
        let before = bank.query_count();
        let t = recognize_decoded(&labels, &[1.0; 60], &dict, &bank, RectifyMode::All).unwrap();
        match t.decision {
            Decision::Deterministic(c) => {
                assert_eq!(bank.query_count(), before);
                assert_eq!(c, r.char_id);
                assert!(t.scores.is_empty());
            }
            Decision::Confusing(_) => {
                assert_eq!(bank.query_count(), before + 1);
                assert!(t.candidates.contains(&t.final_char));
                assert!(t.candidates.len() >= 2);
            }
        }
    }
}

#[test]
fn absent_encodings_are_rectified() {
    let db = generate_db(&SynthDbConfig {
        chars: 60,
        ..Default::default()
    })
    .unwrap();
    let dict = build_stroke_dictionary(&db);
    let model = ConstantModel {
        labels: vec![5; 16],
        dim: 4,
    };
    let bank = build_support_bank(&model, &db, 1, &GlyphStyle::default(), 1).unwrap();
    let g = star_core::glyphgen::render_character(&db, &db.records()[0], &GlyphStyle::default(), 0).unwrap();
    let all = recognize(&g, &model, &dict, &bank, RectifyMode::All).unwrap();
    let first = recognize(&g, &model, &dict, &bank, RectifyMode::First).unwrap();
    assert_eq!(all.decision, Decision::Confusing(ConfusingReason::AbsentEncoding));
    assert!(all.rectified_distance > 0);
    assert_eq!(first.rectified.len(), 1);
    assert!(first.candidates.iter().all(|c| all.candidates.contains(c)));
    assert!(all.candidates.contains(&all.final_char));
    // Constant features tie everywhere, so the lowest id wins.
    assert_eq!(all.final_char, all.candidates[0]);
}

#[test]
fn empty_decode_is_an_error() {
    let db = generate_db(&SynthDbConfig {
        chars: 20,
        ..Default::default()
    })
    .unwrap();
    let dict = build_stroke_dictionary(&db);
    let bank = FeatureBank::from_vectors(BTreeMap::new());
    assert!(matches!(
        recognize_decoded(&[], &[1.0], &dict, &bank, RectifyMode::All),
        Err(InferenceError::EmptyDecode)
    ));
}

#[test]
fn support_bank_is_deterministic_for_a_real_model() {
    let db = generate_db(&SynthDbConfig {
        chars: 15,
        ..Default::default()
    })
    .unwrap();
    let m = ModelState::new(ModelConfig::micro(), None, 0.0, 2).unwrap();
    let style = GlyphStyle::default();
    let a = build_support_bank(&m, &db, 2, &style, 5).unwrap();
    let b = build_support_bank(&m, &db, 2, &style, 5).unwrap();
    let c = build_support_bank(&m, &db, 2, &style, 6).unwrap();
    assert_eq!(a.model_id, b.model_id);
    for id in db.char_ids() {
        assert_eq!(a.get(id), b.get(id));
        assert_ne!(a.get(id), c.get(id));
    }
    assert!(matches!(
        build_support_bank(&m, &db, 0, &style, 5),
        Err(InferenceError::InvalidSupportSize)
    ));
}
