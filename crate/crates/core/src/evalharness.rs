//! Split protocols, accuracy evaluation and ablation grids.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{CharacterDb, RadicalId};
use crate::dictionary::{build_stroke_dictionary, EncodingDictionary, RectifyMode};
use crate::glyphgen::{generate_corpus_for, Corpus, GlyphError, GlyphRaster, GlyphStyle};
use crate::inference::{build_support_bank, recognize_batch, Decision, FeatureBank, InferenceError, StrokeModel};
use crate::nnet::Variant;
use crate::seeding::{derive_seed, rng_for};
use crate::trainer::{train_joint, TrainConfig, TrainError};

const TRAIN_TAG: u64 = 0x54_524e;
const TEST_TAG: u64 = 0x54_5354;
const SEEN_TAG: u64 = 0x5345_454e;
const BANK_TAG: u64 = 0x42_4e4b;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("test sample of class {0} belongs to the training classes")]
    ClassLeak(u32),
    #[error("improved ratio undefined for a zero baseline")]
    DivisionByZero,
    #[error("empty ablation grid")]
    EmptyGrid,
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitMode {
    /// Train on the `m` most frequent classes, test on the `test_k` least frequent.
    CharZeroShot { m: usize, test_k: Option<usize> },
    /// Train on characters whose every radical occurs more than `n` times.
    RadicalZeroShot { n: usize },
    /// All classes on both sides; samples are split instead.
    Seen { ratio: f64, seed: u64 },
}

impl SplitMode {
    pub fn is_zero_shot(&self) -> bool {
        !matches!(self, SplitMode::Seen { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_classes: BTreeSet<u32>,
    pub test_classes: BTreeSet<u32>,
}

pub fn default_test_k(db_len: usize) -> usize {
    db_len.div_ceil(4).max(20)
}

/// Leaf occurrences of each radical over every character's IDS.
pub fn radical_frequencies(db: &CharacterDb) -> BTreeMap<RadicalId, usize> {
    let mut freq = BTreeMap::new();
    for r in db.records() {
        for leaf in r.ids.leaves() {
            *freq.entry(leaf).or_insert(0) += 1;
        }
    }
    freq
}

pub fn make_split(db: &CharacterDb, mode: SplitMode) -> Result<SplitSpec, EvalError> {
    let infeasible = |m: String| Err(EvalError::InfeasibleSplit(m));
    let (train, test): (BTreeSet<u32>, BTreeSet<u32>) = match mode {
        SplitMode::CharZeroShot { m, test_k } => {
            let k = test_k.unwrap_or_else(|| default_test_k(db.len()));
            if m == 0 || k == 0 || m + k > db.len() {
                return infeasible(format!("m={m}, test_k={k} on {} classes", db.len()));
            }
            let ids: Vec<u32> = db.char_ids().collect();
            (
                ids[..m].iter().copied().collect(),
                ids[ids.len() - k..].iter().copied().collect(),
            )
        }
        SplitMode::RadicalZeroShot { n } => {
            let freq = radical_frequencies(db);
            db.records()
                .iter()
                .map(|r| r.char_id)
                .partition(|&c| db.get(c).unwrap().ids.leaves().iter().all(|l| freq[l] > n))
        }
        SplitMode::Seen { ratio, .. } => {
            if !(ratio > 0.0 && ratio < 1.0) {
                return infeasible(format!("seen ratio {ratio} outside (0,1)"));
            }
            let all: BTreeSet<u32> = db.char_ids().collect();
            (all.clone(), all)
        }
    };
    if train.is_empty() || test.is_empty() {
        return infeasible(format!("{} train / {} test classes", train.len(), test.len()));
    }
    Ok(SplitSpec {
        mode,
        train_classes: train,
        test_classes: test,
    })
}

/// Per-class sample split for the seen protocol: `ratio` of each class's
/// samples go to training. Returns (train, test) sample indices.
pub fn seen_sample_split(corpus: &Corpus, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (&c, idx) in &corpus.by_class {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng_for(seed, &[c as u64]));
        let cut =
            ((idx.len() as f64 * ratio).round() as usize).clamp(1.min(idx.len()), idx.len().saturating_sub(1).max(1));
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub correct: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub per_class: BTreeMap<u32, ClassCount>,
    pub ssm_deterministic: usize,
    pub fmm_resolved: usize,
    pub empty_decodes: usize,
    pub failures: usize,
    pub mode: RectifyMode,
    pub split: SplitMode,
}

pub fn evaluate_accuracy<M: StrokeModel>(
    model: &M,
    dict: &EncodingDictionary,
    bank: &FeatureBank,
    corpus: &Corpus,
    split: &SplitSpec,
    mode: RectifyMode,
    batch: usize,
) -> Result<EvalReport, EvalError> {
    if split.mode.is_zero_shot() {
        if let Some(c) = corpus.classes().find(|c| split.train_classes.contains(c)) {
            return Err(EvalError::ClassLeak(c));
        }
    }
    let images: Vec<&GlyphRaster> = corpus.samples.iter().collect();
    let traces = recognize_batch(&images, model, dict, bank, mode, batch)?;
    let mut r = EvalReport {
        accuracy: 0.0,
        correct: 0,
        total: corpus.len(),
        per_class: BTreeMap::new(),
        ssm_deterministic: 0,
        fmm_resolved: 0,
        empty_decodes: 0,
        failures: 0,
        mode,
        split: split.mode,
    };
    for (s, t) in corpus.samples.iter().zip(traces) {
        let cc = r.per_class.entry(s.char_id).or_default();
        cc.total += 1;
        match t {
            Ok(t) => {
                match t.decision {
                    Decision::Deterministic(_) => r.ssm_deterministic += 1,
                    Decision::Confusing(_) => r.fmm_resolved += 1,
                }
                if t.final_char == s.char_id {
                    cc.correct += 1;
                    r.correct += 1;
                }
            }
            Err(InferenceError::EmptyDecode) => r.empty_decodes += 1,
            Err(e) => {
                log::warn!("recognition failed for a sample of class {}: {e}", s.char_id);
                r.failures += 1;
            }
        }
    }
    r.accuracy = if r.total == 0 {
        0.0
    } else {
        r.correct as f64 / r.total as f64
    };
    Ok(r)
}

/// `(star / sota − 1) × 100`.
pub fn improved_ratio(star: f64, sota: f64) -> Result<f64, EvalError> {
    if sota == 0.0 {
        return Err(EvalError::DivisionByZero);
    }
    Ok((star / sota - 1.0) * 100.0)
}

/// Binomial standard deviation of accuracy at chance level `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub variant: Variant,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub split: SplitMode,
    pub cells: Vec<CellSpec>,
    pub modes: Vec<RectifyMode>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub train_samples_per_class: usize,
    pub test_samples_per_class: usize,
    pub support_k: usize,
    pub style: GlyphStyle,
    pub seen_eval: bool,
    pub eval_batch: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            split: SplitMode::CharZeroShot {
                m: 60,
                test_k: Some(40),
            },
            cells: vec![
                CellSpec {
                    variant: Variant::StrokeOnly,
                    lambda: 0.0,
                },
                CellSpec {
                    variant: Variant::StrokeRadical,
                    lambda: 0.1,
                },
            ],
            modes: vec![RectifyMode::First, RectifyMode::All],
            seeds: (1..=5).collect(),
            train: TrainConfig::default(),
            train_samples_per_class: 20,
            test_samples_per_class: 5,
            support_k: 3,
            style: GlyphStyle::default(),
            seen_eval: true,
            eval_batch: 64,
        }
    }
}

impl AblationConfig {
    /// λ sweep over StrokeRadical cells.
    pub fn lambda_grid(lambdas: &[f64]) -> Vec<CellSpec> {
        lambdas
            .iter()
            .map(|&lambda| CellSpec {
                variant: Variant::StrokeRadical,
                lambda,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub accuracy: f64,
    pub seen_accuracy: Option<f64>,
    pub ssm_deterministic: usize,
    pub fmm_resolved: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: String,
    pub variant: Variant,
    pub lambda: f64,
    pub mode: RectifyMode,
    pub runs: Vec<SeedResult>,
    pub mean: f64,
    pub sd: f64,
    pub seen_mean: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: String,
    pub worse: String,
    pub better_mean: f64,
    pub worse_mean: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub split: SplitMode,
    pub train_classes: usize,
    pub test_classes: usize,
    pub test_samples_per_seed: usize,
    pub chance: f64,
    pub chance_sigma: f64,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<Comparison>,
}

fn mode_name(m: RectifyMode) -> &'static str {
    match m {
        RectifyMode::All => "all",
        RectifyMode::First => "1st",
    }
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::StrokeOnly => "stroke",
        Variant::StrokeRadical => "stroke+radical",
    }
}

fn cell_key(c: &CellSpec, m: RectifyMode) -> String {
    format!("{}/lambda={}/infer-{}", variant_name(c.variant), c.lambda, mode_name(m))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

struct SeedData {
    train: Corpus,
    test: Corpus,
    seen: Option<Corpus>,
}

fn seed_data(db: &CharacterDb, split: &SplitSpec, cfg: &AblationConfig, seed: u64) -> Result<SeedData, EvalError> {
    let train_ids: Vec<u32> = split.train_classes.iter().copied().collect();
    let test_ids: Vec<u32> = split.test_classes.iter().copied().collect();
    let style = &cfg.style;
    let train = generate_corpus_for(
        db,
        &train_ids,
        cfg.train_samples_per_class,
        style,
        derive_seed(seed, &[TRAIN_TAG]),
    )?;
    let test = generate_corpus_for(
        db,
        &test_ids,
        cfg.test_samples_per_class,
        style,
        derive_seed(seed, &[TEST_TAG]),
    )?;
    let seen = if cfg.seen_eval {
        Some(generate_corpus_for(
            db,
            &train_ids,
            cfg.test_samples_per_class,
            style,
            derive_seed(seed, &[SEEN_TAG]),
        )?)
    } else {
        None
    };
    Ok(SeedData { train, test, seen })
}

/// Results of one trained model, evaluated under every rectify mode.
type RunOutcome = Result<Vec<(RectifyMode, SeedResult)>, String>;

fn run_one(
    db: &CharacterDb,
    dict: &EncodingDictionary,
    split: &SplitSpec,
    cfg: &AblationConfig,
    cell: &CellSpec,
    seed: u64,
    data: &SeedData,
) -> Result<Vec<(RectifyMode, SeedResult)>, EvalError> {
    let mut tc = cfg.train.clone();
    tc.variant = cell.variant;
    tc.lambda = cell.lambda;
    tc.seed = seed;
    tc.checkpoint = None;
    let (model, _) = train_joint(&tc, &data.train, db)?;
    let bank = build_support_bank(&model, db, cfg.support_k, &cfg.style, derive_seed(seed, &[BANK_TAG]))?;
    let seen_split = SplitSpec {
        mode: SplitMode::Seen { ratio: 0.5, seed },
        train_classes: split.train_classes.clone(),
        test_classes: split.train_classes.clone(),
    };
    let mut out = Vec::new();
    for &mode in &cfg.modes {
        let r = evaluate_accuracy(&model, dict, &bank, &data.test, split, mode, cfg.eval_batch)?;
        let seen_accuracy = match &data.seen {
            Some(c) => Some(evaluate_accuracy(&model, dict, &bank, c, &seen_split, mode, cfg.eval_batch)?.accuracy),
            None => None,
        };
        out.push((
            mode,
            SeedResult {
                seed,
                accuracy: r.accuracy,
                seen_accuracy,
                ssm_deterministic: r.ssm_deterministic,
                fmm_resolved: r.fmm_resolved,
                total: r.total,
            },
        ));
    }
    Ok(out)
}

/// Trains one model per (cell, seed) and evaluates it under every mode.
/// A failing run is recorded in its cells' `errors` without stopping the others.
pub fn run_ablation(db: &CharacterDb, cfg: &AblationConfig) -> Result<AblationReport, EvalError> {
    if cfg.cells.is_empty() || cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let split = make_split(db, cfg.split)?;
    let dict = build_stroke_dictionary(db);
    let data: Vec<SeedData> = cfg
        .seeds
        .iter()
        .map(|&s| seed_data(db, &split, cfg, s))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.cells.len())
        .flat_map(|c| (0..cfg.seeds.len()).map(move |s| (c, s)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(c, s)| {
            let cell = &cfg.cells[c];
            let seed = cfg.seeds[s];
            log::info!(
                "ablation: {} lambda={} seed={seed}",
                variant_name(cell.variant),
                cell.lambda
            );
            run_one(db, &dict, &split, cfg, cell, seed, &data[s]).map_err(|e| format!("seed {seed}: {e}"))
        })
        .collect();

    let mut cells = Vec::new();
    for (ci, cell) in cfg.cells.iter().enumerate() {
        for &mode in &cfg.modes {
            let mut runs = Vec::new();
            let mut errors = Vec::new();
            for (&(c, _), o) in jobs.iter().zip(&outcomes) {
                if c != ci {
                    continue;
                }
                match o {
                    Ok(v) => runs.extend(v.iter().filter(|(m, _)| *m == mode).map(|(_, r)| r.clone())),
                    Err(e) => errors.push(e.clone()),
                }
            }
            let (mean, sd) = mean_sd(&runs.iter().map(|r| r.accuracy).collect::<Vec<_>>());
            let seen: Vec<f64> = runs.iter().filter_map(|r| r.seen_accuracy).collect();
            let seen_mean = (!seen.is_empty()).then(|| mean_sd(&seen).0);
            cells.push(CellResult {
                key: cell_key(cell, mode),
                variant: cell.variant,
                lambda: cell.lambda,
                mode,
                runs,
                mean,
                sd,
                seen_mean,
                errors,
            });
        }
    }
    cells.sort_by(|a, b| a.key.cmp(&b.key));

    let test_n = split.test_classes.len() * cfg.test_samples_per_class;
    let chance = 1.0 / split.test_classes.len() as f64;
    let comparisons = comparisons(&cells);
    Ok(AblationReport {
        split: cfg.split,
        train_classes: split.train_classes.len(),
        test_classes: split.test_classes.len(),
        test_samples_per_seed: test_n,
        chance,
        chance_sigma: binomial_sigma(chance, test_n),
        cells,
        comparisons,
    })
}

fn comparisons(cells: &[CellResult]) -> Vec<Comparison> {
    let cmp = |a: &CellResult, b: &CellResult| Comparison {
        better: a.key.clone(),
        worse: b.key.clone(),
        better_mean: a.mean,
        worse_mean: b.mean,
        holds: a.mean >= b.mean,
    };
    let mut out = Vec::new();
    for a in cells.iter().filter(|c| c.variant == Variant::StrokeRadical) {
        for b in cells
            .iter()
            .filter(|c| c.variant == Variant::StrokeOnly && c.mode == a.mode)
        {
            out.push(cmp(a, b));
        }
    }
    for a in cells.iter().filter(|c| c.mode == RectifyMode::All) {
        for b in cells
            .iter()
            .filter(|c| c.mode == RectifyMode::First && c.variant == a.variant && c.lambda == a.lambda)
        {
            out.push(cmp(a, b));
        }
    }
    out
}

/// Plain-text table: one row per (variant, λ), one column per inference mode.
pub fn render_table(report: &AblationReport) -> String {
    let mut modes: Vec<RectifyMode> = report.cells.iter().map(|c| c.mode).collect();
    modes.sort();
    modes.dedup();
    modes.reverse();
    let mut rows: Vec<(Variant, String)> = Vec::new();
    for c in &report.cells {
        let key = (c.variant, format!("{}", c.lambda));
        if !rows.contains(&key) {
            rows.push(key);
        }
    }
    let mut s = String::new();
    let _ = write!(s, "{:<28}", "Method");
    for m in &modes {
        let _ = write!(s, "{:>18}", format!("Infer_{}", mode_name(*m)));
    }
    s.push('\n');
    for (v, l) in rows {
        let label = match v {
            Variant::StrokeOnly => "Stroke".to_string(),
            Variant::StrokeRadical => format!("Stroke + Radical (λ={l})"),
        };
        let _ = write!(s, "{label:<28}");
        for m in &modes {
            let cell = report
                .cells
                .iter()
                .find(|c| c.variant == v && format!("{}", c.lambda) == l && c.mode == *m);
            let txt = cell.map_or("-".to_string(), |c| {
                format!("{:.2} ± {:.2}", 100.0 * c.mean, 100.0 * c.sd)
            });
            let _ = write!(s, "{txt:>18}");
        }
        s.push('\n');
    }
    let _ = writeln!(
        s,
        "chance {:.2}% (σ {:.2}%), {} test classes, {} samples per seed",
        100.0 * report.chance,
        100.0 * report.chance_sigma,
        report.test_classes,
        report.test_samples_per_seed
    );
    s
}

/// `lambda,mode,mean,sd,runs` for StrokeRadical cells.
pub fn lambda_csv(report: &AblationReport) -> String {
    let mut s = String::from("lambda,mode,mean,sd,runs\n");
    for c in report.cells.iter().filter(|c| c.variant == Variant::StrokeRadical) {
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{}",
            c.lambda,
            mode_name(c.mode),
            c.mean,
            c.sd,
            c.runs.len()
        );
    }
    s
}
