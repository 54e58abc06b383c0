use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use star_core::decomposition::synth::{ambiguous_groups, generate_db, SynthDbConfig};
use star_core::decomposition::{load_character_db, CharacterDb};
use star_core::dictionary::{build_stroke_dictionary, RectifyMode};
use star_core::evalharness::{
    evaluate_accuracy, lambda_csv, make_split, render_table, run_ablation, AblationConfig, SplitMode,
};
use star_core::glyphgen::{generate_corpus_for, load_corpus, save_corpus, GlyphRaster, GlyphStyle};
use star_core::inference::{build_support_bank, recognize_batch};
use star_core::nnet::{grad_check, jitter_biases, MicroBatch, ModelConfig, ModelState, Tensor, Variant};
use star_core::seeding::{derive_seed, rng_for};
use star_core::trainer::{load_checkpoint, train_joint, TrainConfig};

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(
    name = "star",
    version,
    about = "Zero-shot character recognition from stroke and radical decompositions"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Worker threads for data-parallel stages (1 keeps results bit-exact)
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Log level: 0 warnings, 1 info, 2 debug
    #[arg(long, global = true, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=2))]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic character database
    GenDb(GenDbArgs),
    /// Render a glyph corpus from a database
    GenCorpus(GenCorpusArgs),
    /// Build and dump the stroke encoding dictionary
    BuildDict(BuildDictArgs),
    /// Train a model
    Train(TrainArgs),
    /// Recognize every image of a corpus, one JSON trace per line
    Recognize(RecognizeArgs),
    /// Evaluate a checkpoint under a split protocol
    Eval(EvalArgs),
    /// Train and evaluate an ablation grid
    Ablate(AblateArgs),
    /// Verify analytic gradients of the micro model against finite differences
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct GenDbArgs {
    #[arg(long)]
    radicals: Option<u32>,
    #[arg(long)]
    chars: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_strokes: Option<usize>,
    #[arg(long)]
    zipf: Option<f64>,
    /// JSON file with generator settings; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct StyleArgs {
    /// JSON glyph style; the flags below override it
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    thickness: Option<u32>,
    #[arg(long)]
    slant: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct GenCorpusArgs {
    #[arg(long)]
    db: PathBuf,
    /// Comma-separated char ids (default: every character)
    #[arg(long, value_delimiter = ',')]
    classes: Vec<u32>,
    #[arg(long, default_value_t = 20)]
    n_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    style: StyleArgs,
    /// Output stem; writes <stem>.json, <stem>.f32 and <stem>.idx.tsv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildDictArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    StrokeOnly,
    StrokeRadical,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::StrokeOnly => Variant::StrokeOnly,
            VariantArg::StrokeRadical => Variant::StrokeRadical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InferArg {
    All,
    First,
}

impl From<InferArg> for RectifyMode {
    fn from(v: InferArg) -> Self {
        match v {
            InferArg::All => RectifyMode::All,
            InferArg::First => RectifyMode::First,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    db: PathBuf,
    /// Corpus header written by gen-corpus
    #[arg(long)]
    corpus: PathBuf,
    /// JSON training config; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path
    #[arg(long)]
    out: PathBuf,
    /// Training report JSON (default: <out>.report.json)
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BankArgs {
    /// Support renders averaged per character
    #[arg(long, default_value_t = 3)]
    support_k: usize,
    #[command(flatten)]
    style: StyleArgs,
}

#[derive(Args)]
struct RecognizeArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus header of the images to recognize
    #[arg(long)]
    images: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    infer: InferArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    bank: BankArgs,
    /// JSON-lines output (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    CharZeroShot,
    RadicalZeroShot,
    Seen,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    mode: SplitArg,
    /// Training classes for char-zero-shot
    #[arg(long)]
    m: Option<usize>,
    /// Test classes for char-zero-shot
    #[arg(long)]
    test_k: Option<usize>,
    /// Radical frequency threshold for radical-zero-shot
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum, default_value = "all")]
    infer: InferArg,
    /// Test renders per class (ignored with --corpus)
    #[arg(long, default_value_t = 5)]
    test_samples: usize,
    /// Evaluate this corpus instead of fresh renders
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    bank: BankArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    db: PathBuf,
    /// JSON ablation config; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Sweep λ over StrokeRadical cells instead of the variant grid
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    test_k: Option<usize>,
    /// Output directory for report.json, table.txt and lambda.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Check only this λ (default: both 0 and 0.1)
    #[arg(long)]
    lambda: Option<f64>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_db(path: &Path) -> Result<CharacterDb> {
    load_character_db(path).with_context(|| format!("loading database {}", path.display()))
}

fn style_from(a: &StyleArgs) -> Result<GlyphStyle> {
    let mut s: GlyphStyle = match &a.style {
        Some(p) => read_json(p)?,
        None => GlyphStyle::default(),
    };
    if let Some(v) = a.jitter {
        s.jitter_px = v;
    }
    if let Some(v) = a.thickness {
        s.thickness_px = v as _;
    }
    if let Some(v) = a.slant {
        s.slant = v;
    }
    if let Some(v) = a.noise {
        s.noise_level = v;
    }
    s.validate()?;
    Ok(s)
}

fn gen_db(a: GenDbArgs) -> Result<()> {
    let mut cfg: SynthDbConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthDbConfig::default(),
    };
    if let Some(v) = a.radicals {
        cfg.radicals = v;
    }
    if let Some(v) = a.chars {
        cfg.chars = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.max_strokes {
        cfg.max_strokes = v;
    }
    if let Some(v) = a.zipf {
        cfg.zipf = v;
    }
    let db = generate_db(&cfg)?;
    db.save(&a.out)?;
    eprintln!(
        "{} characters, {} radicals, {} ambiguous stroke groups -> {}",
        db.len(),
        db.alphabet().len(),
        ambiguous_groups(&db).len(),
        a.out.display()
    );
    Ok(())
}

fn gen_corpus(a: GenCorpusArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let style = style_from(&a.style)?;
    let classes: Vec<u32> = if a.classes.is_empty() {
        db.char_ids().collect()
    } else {
        a.classes.clone()
    };
    let corpus = generate_corpus_for(&db, &classes, a.n_per_class, &style, a.seed)?;
    let header = save_corpus(
        &corpus,
        &a.out,
        Some(&a.db.to_string_lossy()),
        &style,
        a.seed,
        a.n_per_class,
    )?;
    eprintln!("{} samples -> {}", corpus.len(), header.display());
    Ok(())
}

fn build_dict(a: BuildDictArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let dict = build_stroke_dictionary(&db);
    fs::write(&a.out, dict.dump())?;
    eprintln!(
        "{} encodings for {} characters -> {}",
        dict.len(),
        dict.char_count(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let (corpus, _) = load_corpus(&a.corpus).with_context(|| format!("loading corpus {}", a.corpus.display()))?;
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.variant {
        cfg.variant = v.into();
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.checkpoint = Some(a.out.clone());
    let (_, report) = train_joint(&cfg, &corpus, &db)?;
    let report_path = a
        .report
        .unwrap_or_else(|| PathBuf::from(format!("{}.report.json", a.out.display())));
    write_json(&report_path, &report)?;
    if let Some(last) = report.epochs.last() {
        eprintln!("final L_star {:.4} -> {}", last.l_star, a.out.display());
    }
    Ok(())
}

fn recognize(a: RecognizeArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let (corpus, _) = load_corpus(&a.images)?;
    let style = style_from(&a.bank.style)?;
    let dict = build_stroke_dictionary(&db);
    let bank = build_support_bank(&model, &db, a.bank.support_k, &style, a.seed)?;
    let images: Vec<&GlyphRaster> = corpus.samples.iter().collect();
    let traces = recognize_batch(&images, &model, &dict, &bank, a.infer.into(), 64)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(std::io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    for (s, t) in corpus.samples.iter().zip(traces) {
        let line = match t {
            Ok(t) => serde_json::json!({ "truth": s.char_id, "trace": t }),
            Err(e) => serde_json::json!({ "truth": s.char_id, "error": e.to_string() }),
        };
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let model = load_checkpoint(&a.checkpoint)?;
    let mode = match a.mode {
        SplitArg::CharZeroShot => SplitMode::CharZeroShot {
            m: a.m.context("--m is required for char-zero-shot")?,
            test_k: a.test_k,
        },
        SplitArg::RadicalZeroShot => SplitMode::RadicalZeroShot {
            n: a.n.context("--n is required for radical-zero-shot")?,
        },
        SplitArg::Seen => SplitMode::Seen {
            ratio: 0.5,
            seed: a.seed,
        },
    };
    let split = make_split(&db, mode)?;
    let style = style_from(&a.bank.style)?;
    let corpus = match &a.corpus {
        Some(p) => load_corpus(p)?.0,
        None => {
            let classes: Vec<u32> = split.test_classes.iter().copied().collect();
            generate_corpus_for(
                &db,
                &classes,
                a.test_samples,
                &style,
                derive_seed(a.seed, &[0x4556_414c]),
            )?
        }
    };
    let dict = build_stroke_dictionary(&db);
    let bank = build_support_bank(&model, &db, a.bank.support_k, &style, a.seed)?;
    let report = evaluate_accuracy(&model, &dict, &bank, &corpus, &split, a.infer.into(), 64)?;
    let full = serde_json::json!({
        "report": report,
        "seed": a.seed,
        "checkpoint": a.checkpoint,
        "train_classes": split.train_classes.len(),
        "test_classes": split.test_classes.len(),
    });
    write_json(&a.out, &full)?;
    eprintln!("accuracy {:.4} ({}/{})", report.accuracy, report.correct, report.total);
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let db = load_db(&a.db)?;
    let mut cfg: AblationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AblationConfig::default(),
    };
    if !a.seeds.is_empty() {
        cfg.seeds = a.seeds.clone();
    }
    if !a.lambdas.is_empty() {
        cfg.cells = AblationConfig::lambda_grid(&a.lambdas);
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if a.m.is_some() || a.test_k.is_some() {
        let (m0, k0) = match cfg.split {
            SplitMode::CharZeroShot { m, test_k } => (m, test_k),
            _ => (60, None),
        };
        cfg.split = SplitMode::CharZeroShot {
            m: a.m.unwrap_or(m0),
            test_k: a.test_k.or(k0),
        };
    }
    let report = run_ablation(&db, &cfg)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("report.json"), &report)?;
    let table = render_table(&report);
    fs::write(a.out.join("table.txt"), &table)?;
    fs::write(a.out.join("lambda.csv"), lambda_csv(&report))?;
    print!("{table}");
    for c in report.cells.iter().filter(|c| !c.errors.is_empty()) {
        eprintln!("{}: {} failed run(s): {}", c.key, c.errors.len(), c.errors.join("; "));
    }
    Ok(())
}

fn micro_batch(seed: u64) -> MicroBatch {
    use rand::Rng;
    let mut rng = rng_for(seed, &[0x4d49_4352]);
    let data = (0..2 * 32 * 32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    MicroBatch {
        images: Tensor::new(vec![2, 32, 32, 1], data).expect("micro batch shape"),
        strokes: vec![vec![3, 1, 2], vec![5, 4]],
        radicals: Some(vec![vec![13, 1, 2], vec![4]]),
    }
}

fn grad_check_cmd(a: GradCheckArgs) -> Result<bool> {
    let lambdas = match a.lambda {
        Some(l) => vec![l],
        None => vec![0.0, 0.1],
    };
    let batch = micro_batch(a.seed);
    let mut ok = true;
    for lambda in lambdas {
        let mut model = ModelState::new(ModelConfig::micro(), Some(24), lambda, a.seed)?;
        jitter_biases(&mut model, 0.05, a.seed);
        let r = grad_check(&model, &batch, a.eps)?;
        let pass = r.max_rel_err <= GRAD_TOLERANCE;
        ok &= pass;
        println!(
            "lambda={lambda}: max rel err {:.3e} ({}), elementwise max {:.3e} ({}[{}]), {} elements, {} kink retries: {}",
            r.max_rel_err,
            r.worst_param,
            r.max_elem_rel_err,
            r.worst_elem.0,
            r.worst_elem.1,
            r.checked,
            r.kink_retries,
            if pass { "ok" } else { "FAILED" }
        );
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads.max(1))
        .build_global()
        .context("configuring thread pool")?;
    match cli.command {
        Command::GenDb(a) => gen_db(a)?,
        Command::GenCorpus(a) => gen_corpus(a)?,
        Command::BuildDict(a) => build_dict(a)?,
        Command::Train(a) => train(a)?,
        Command::Recognize(a) => recognize(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Ablate(a) => ablate(a)?,
        Command::GradCheck(a) => return grad_check_cmd(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
