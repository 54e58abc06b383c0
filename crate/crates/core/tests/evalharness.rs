mod common;

use common::{ConstantModel, OracleModel};
use star_core::decomposition::synth::{generate_db, SynthDbConfig};
use star_core::decomposition::{CharacterDb, RadicalId};
use star_core::dictionary::{build_stroke_dictionary, RectifyMode};
use star_core::evalharness::*;
use star_core::glyphgen::{generate_corpus, generate_corpus_for, GlyphStyle};
use star_core::inference::build_support_bank;
use star_core::nnet::{ModelConfig, Variant};

fn fixture() -> CharacterDb {
    CharacterDb::parse("1\ta\t12\tlr r1 r2\n2\tb\t13\tlr r1 r3\n3\tc\t21\ttb r1 r2\n4\td\t4\tr4\n").unwrap()
}

#[test]
fn improved_ratio_values() {
    assert!((improved_ratio(7.54, 5.91).unwrap() - 27.58).abs() <= 0.01);
    assert!((improved_ratio(16.42, 8.25).unwrap() - 99.03).abs() <= 0.01);
    assert_eq!(improved_ratio(5.0, 5.0).unwrap(), 0.0);
    assert!(improved_ratio(2.0, 4.0).unwrap() < 0.0);
    assert!(matches!(improved_ratio(1.0, 0.0), Err(EvalError::DivisionByZero)));
}

#[test]
fn radical_frequencies_hand_counted() {
    let f = radical_frequencies(&fixture());
    assert_eq!(f[&RadicalId(1)], 3);
    assert_eq!(f[&RadicalId(2)], 2);
    assert_eq!(f[&RadicalId(3)], 1);
    assert_eq!(f[&RadicalId(4)], 1);
}

#[test]
fn radical_zero_shot_requires_every_radical_frequent() {
    let db = fixture();
    let s = make_split(&db, SplitMode::RadicalZeroShot { n: 1 }).unwrap();
    assert_eq!(s.train_classes.into_iter().collect::<Vec<_>>(), vec![1, 3]);
    assert_eq!(s.test_classes.into_iter().collect::<Vec<_>>(), vec![2, 4]);
    assert!(matches!(
        make_split(&db, SplitMode::RadicalZeroShot { n: 2 }),
        Err(EvalError::InfeasibleSplit(_))
    ));
}

#[test]
fn char_zero_shot_uses_rank_order() {
    let db = generate_db(&SynthDbConfig {
        chars: 100,
        ..Default::default()
    })
    .unwrap();
    let ids: Vec<u32> = db.char_ids().collect();
    let s = make_split(
        &db,
        SplitMode::CharZeroShot {
            m: 60,
            test_k: Some(40),
        },
    )
    .unwrap();
    assert_eq!(s.train_classes, ids[..60].iter().copied().collect());
    assert_eq!(s.test_classes, ids[60..].iter().copied().collect());
    assert!(s.train_classes.is_disjoint(&s.test_classes));

    let d = make_split(&db, SplitMode::CharZeroShot { m: 50, test_k: None }).unwrap();
    assert_eq!(d.test_classes.len(), default_test_k(100));
    assert!(d.train_classes.is_disjoint(&d.test_classes));

    assert!(make_split(
        &db,
        SplitMode::CharZeroShot {
            m: 70,
            test_k: Some(40)
        }
    )
    .is_err());
    assert!(make_split(&db, SplitMode::CharZeroShot { m: 0, test_k: Some(40) }).is_err());
    assert!(make_split(&db, SplitMode::Seen { ratio: 1.0, seed: 0 }).is_err());
}

#[test]
fn seen_split_partitions_each_class() {
    let db = generate_db(&SynthDbConfig {
        chars: 20,
        ..Default::default()
    })
    .unwrap();
    let c = generate_corpus(&db, 6, &GlyphStyle::default(), 1).unwrap();
    let (tr, te) = seen_sample_split(&c, 0.5, 3);
    assert_eq!(tr.len() + te.len(), c.len());
    for (cls, idx) in &c.by_class {
        let a = idx.iter().filter(|i| tr.contains(i)).count();
        let b = idx.iter().filter(|i| te.contains(i)).count();
        assert_eq!((a, b), (3, 3), "class {cls}");
    }
    assert_eq!(seen_sample_split(&c, 0.5, 3), (tr, te));
}

#[test]
fn stub_models_bound_accuracy() {
    let db = generate_db(&SynthDbConfig {
        chars: 100,
        ..Default::default()
    })
    .unwrap();
    let dict = build_stroke_dictionary(&db);
    let split = make_split(
        &db,
        SplitMode::CharZeroShot {
            m: 60,
            test_k: Some(40),
        },
    )
    .unwrap();
    let test_ids: Vec<u32> = split.test_classes.iter().copied().collect();
    let corpus = generate_corpus_for(&db, &test_ids, 2, &GlyphStyle::default(), 4).unwrap();

    let oracle = OracleModel::new(&db);
    let bank = build_support_bank(&oracle, &db, 1, &GlyphStyle::default(), 2).unwrap();
    let r = evaluate_accuracy(&oracle, &dict, &bank, &corpus, &split, RectifyMode::All, 16).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.ssm_deterministic + r.fmm_resolved, r.total);
    assert_eq!(r.per_class.len(), 40);

    // A model that always emits the same sequence gets at most one class right.
    let constant = ConstantModel {
        labels: vec![1],
        dim: 3,
    };
    let cbank = build_support_bank(&constant, &db, 1, &GlyphStyle::default(), 2).unwrap();
    let r = evaluate_accuracy(&constant, &dict, &cbank, &corpus, &split, RectifyMode::All, 16).unwrap();
    assert!(r.accuracy <= 1.0 / 40.0 + 1e-12);

    let leaky = generate_corpus_for(&db, &[db.records()[0].char_id], 1, &GlyphStyle::default(), 4).unwrap();
    assert!(matches!(
        evaluate_accuracy(&oracle, &dict, &bank, &leaky, &split, RectifyMode::All, 16),
        Err(EvalError::ClassLeak(_))
    ));
}

#[test]
fn binomial_sigma_values() {
    assert!((binomial_sigma(0.5, 100) - 0.05).abs() < 1e-15);
    assert!((binomial_sigma(0.025, 200) - (0.025f64 * 0.975 / 200.0).sqrt()).abs() < 1e-15);
}

#[test]
fn tiny_ablation_is_deterministic_and_complete() {
    let db = generate_db(&SynthDbConfig {
        chars: 24,
        radicals: 10,
        ..Default::default()
    })
    .unwrap();
    let mut cfg = AblationConfig {
        split: SplitMode::CharZeroShot {
            m: 14,
            test_k: Some(10),
        },
        seeds: vec![1, 2],
        train_samples_per_class: 2,
        test_samples_per_class: 2,
        support_k: 1,
        ..Default::default()
    };
    cfg.train.epochs = 1;
    cfg.train.model = ModelConfig::micro();
    let a = run_ablation(&db, &cfg).unwrap();
    let b = run_ablation(&db, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.cells.len(), 4);
    for c in &a.cells {
        assert_eq!(c.runs.len(), 2, "{}", c.key);
        assert!(c.errors.is_empty());
        assert!(c.seen_mean.is_some());
    }
    assert_eq!(a.comparisons.len(), 4);
    assert_eq!(a.test_classes, 10);
    assert!((a.chance - 0.1).abs() < 1e-15);
    let table = render_table(&a);
    assert!(table.contains("Infer_all") && table.contains("Infer_1st"));
    assert!(lambda_csv(&a).starts_with("lambda,mode,mean,sd,runs\n"));

    let grid = AblationConfig::lambda_grid(&[0.0, 0.1, 1.0]);
    assert!(grid.iter().all(|c| c.variant == Variant::StrokeRadical));
    assert!(matches!(
        run_ablation(&db, &AblationConfig { seeds: vec![], ..cfg }),
        Err(EvalError::EmptyGrid)
    ));
}
