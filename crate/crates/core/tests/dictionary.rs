mod common;

use proptest::prelude::*;

use star_core::decomposition::StrokeEncoding;
use star_core::dictionary::{build_stroke_dictionary, levenshtein_labels, LookupResult, RectifyMode};

fn enc(labels: &[u8]) -> StrokeEncoding {
    StrokeEncoding::from_labels(labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_oracle(a in prop::collection::vec(1u8..=5, 0..14), b in prop::collection::vec(1u8..=5, 0..14)) {
        prop_assert_eq!(levenshtein_labels(&a, &b), common::edit_distance_oracle(&a, &b));
    }

    #[test]
    fn metric_axioms(
        a in prop::collection::vec(1u8..=5, 0..10),
        b in prop::collection::vec(1u8..=5, 0..10),
        c in prop::collection::vec(1u8..=5, 0..10),
    ) {
        let d = levenshtein_labels;
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert_eq!(d(&a, &b) == 0, a == b);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) >= a.len().abs_diff(b.len()));
        prop_assert!(d(&a, &b) <= a.len().max(b.len()));
    }
}

#[test]
fn known_distances() {
    assert_eq!(levenshtein_labels(&[], &[]), 0);
    assert_eq!(levenshtein_labels(&[1, 2, 3], &[]), 3);
    assert_eq!(levenshtein_labels(&[1, 2, 3], &[1, 3]), 1);
    assert_eq!(levenshtein_labels(&[1, 2, 3, 4], &[2, 1, 3, 5]), 3);
    assert_eq!(levenshtein_labels(&[5, 5, 5], &[1, 1, 1]), 3);
}

#[test]
fn rectification_against_brute_force() {
    let db = common::fixture_db(240, 3);
    let dict = build_stroke_dictionary(&db);
    let mut rng = common::rng(99);
    for _ in 0..500 {
        let q = common::random_labels(&mut rng, 1, 12);
        let qe = enc(&q);
        let all = dict.rectified_set(&qe, RectifyMode::All).unwrap();
        let first = dict.rectified_set(&qe, RectifyMode::First).unwrap();

        let dists: Vec<(String, usize)> = dict
            .entries()
            .map(|(e, _)| (e.digits(), common::edit_distance_oracle(&q, &e.labels())))
            .collect();
        let min = dists.iter().map(|d| d.1).min().unwrap();
        let mut expect: Vec<String> = dists.iter().filter(|d| d.1 == min).map(|d| d.0.clone()).collect();
        expect.sort();

        assert_eq!(all.distance, min);
        let got: Vec<String> = all.encodings.iter().map(|e| e.digits()).collect();
        assert_eq!(got, expect);
        assert_eq!(first.encodings.len(), 1);
        assert_eq!(first.encodings[0].digits(), expect[0]);

        let ca = dict.candidate_chars(&all);
        let cf = dict.candidate_chars(&first);
        assert!(cf.iter().all(|c| ca.contains(c)));
        assert!(!cf.is_empty());
    }
}

#[test]
fn present_query_rectifies_to_itself() {
    let db = common::fixture_db(60, 8);
    let dict = build_stroke_dictionary(&db);
    for r in db.records() {
        let rs = dict.rectified_set(&r.strokes, RectifyMode::All).unwrap();
        assert_eq!(rs.distance, 0);
        assert_eq!(rs.encodings, vec![r.strokes.clone()]);
        assert!(dict.candidate_chars(&rs).contains(&r.char_id));
    }
}

#[test]
fn lookup_outcomes() {
    let text = "1\ta\t12\tr1\n2\tb\t12\tr2\n3\tc\t345\tr3\n";
    let db = star_core::decomposition::CharacterDb::parse(text).unwrap();
    let dict = build_stroke_dictionary(&db);
    assert_eq!(dict.len(), 2);
    assert_eq!(dict.char_count(), 3);
    assert_eq!(dict.lookup(&enc(&[3, 4, 5])), LookupResult::Unique(3));
    assert_eq!(
        dict.lookup(&enc(&[1, 2])),
        LookupResult::Ambiguous([1, 2].into_iter().collect())
    );
    assert_eq!(dict.lookup(&enc(&[1])), LookupResult::Absent);
    assert_eq!(dict.dump(), "12\t1,2\n345\t3\n");
}

#[test]
fn first_mode_picks_lexicographically_smallest() {
    let text = "1\ta\t11\tr1\n2\tb\t22\tr2\n3\tc\t33\tr3\n";
    let db = star_core::decomposition::CharacterDb::parse(text).unwrap();
    let dict = build_stroke_dictionary(&db);
    let q = enc(&[4, 4]);
    let all = dict.rectified_set(&q, RectifyMode::All).unwrap();
    assert_eq!(all.distance, 2);
    assert_eq!(all.encodings.len(), 3);
    let first = dict.rectified_set(&q, RectifyMode::First).unwrap();
    assert_eq!(first.encodings, vec![enc(&[1, 1])]);
    assert_eq!(dict.candidate_chars(&all), vec![1, 2, 3]);
}
