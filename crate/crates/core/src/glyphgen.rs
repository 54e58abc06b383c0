//! Procedural glyph rasterization.
//!
//! Each structure operator splits its box into regions, leaves draw their
//! radical's strokes as polylines, and style jitter perturbs vertices and
//! split ratios. Stroke geometry inside a radical is a pure function of the
//! radical id, so a radical looks the same wherever it appears.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{CharacterDb, CharacterRecord, IdsTree, RadicalId, StrokeClass, StructureOp};
use crate::seeding::{derive_seed, rng_for};

pub const GLYPH_SIZE: usize = 32;
pub const GLYPH_PIXELS: usize = GLYPH_SIZE * GLYPH_SIZE;
const CANVAS_MARGIN: f64 = 2.0;
const LEAF_MARGIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum GlyphError {
    #[error("char {char_id}: layout produced a {w:.2}x{h:.2} px region")]
    DegenerateBox { char_id: u32, w: f64, h: f64 },
    #[error("char {char_id}: only {fg} foreground pixels")]
    BlankGlyph { char_id: u32, fg: usize },
    #[error("invalid style: {0}")]
    InvalidStyle(String),
    #[error("char {0} is not in the database")]
    UnknownChar(u32),
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus format: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlyphStyle {
    pub jitter_px: f64,
    pub thickness_px: u32,
    pub slant: f64,
    pub noise_level: f64,
}

impl Default for GlyphStyle {
    fn default() -> Self {
        GlyphStyle {
            jitter_px: 0.8,
            thickness_px: 1,
            slant: 0.0,
            noise_level: 0.05,
        }
    }
}

impl GlyphStyle {
    pub fn clean() -> Self {
        GlyphStyle {
            jitter_px: 0.0,
            thickness_px: 1,
            slant: 0.0,
            noise_level: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GlyphError> {
        if !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) {
            return Err(GlyphError::InvalidStyle(format!(
                "jitter_px {} must be >= 0",
                self.jitter_px
            )));
        }
        if self.thickness_px < 1 {
            return Err(GlyphError::InvalidStyle("thickness_px must be >= 1".into()));
        }
        if !self.slant.is_finite() {
            return Err(GlyphError::InvalidStyle("slant must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_level) {
            return Err(GlyphError::InvalidStyle(format!(
                "noise_level {} outside [0,1]",
                self.noise_level
            )));
        }
        Ok(())
    }
}

/// A 32×32 image in [-1, 1] (background -1, ink +1), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphRaster {
    pub pixels: Vec<f32>,
    pub char_id: u32,
    pub style_seed: u64,
}

impl GlyphRaster {
    pub fn foreground_ratio(&self) -> f64 {
        self.pixels.iter().filter(|&&p| p > 0.0).count() as f64 / GLYPH_PIXELS as f64
    }

    pub fn pixel(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * GLYPH_SIZE + x]
    }

    /// ASCII preview, handy in logs.
    pub fn ascii_art(&self) -> String {
        let mut s = String::with_capacity(GLYPH_PIXELS + GLYPH_SIZE);
        for y in 0..GLYPH_SIZE {
            for x in 0..GLYPH_SIZE {
                s.push(if self.pixel(x, y) > 0.0 { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn w(&self) -> f64 {
        self.x1 - self.x0
    }
    fn h(&self) -> f64 {
        self.y1 - self.y0
    }
    /// Sub-rectangle from unit fractions.
    fn frac(&self, fx0: f64, fy0: f64, fx1: f64, fy1: f64) -> Rect {
        Rect {
            x0: self.x0 + fx0 * self.w(),
            y0: self.y0 + fy0 * self.h(),
            x1: self.x0 + fx1 * self.w(),
            y1: self.y0 + fy1 * self.h(),
        }
    }
    fn point(&self, u: f64, v: f64) -> (f64, f64) {
        let m = LEAF_MARGIN;
        (
            self.x0 + (m + u * (1.0 - 2.0 * m)) * self.w(),
            self.y0 + (m + v * (1.0 - 2.0 * m)) * self.h(),
        )
    }
}

struct Painter<'a> {
    db: &'a CharacterDb,
    rec: &'a CharacterRecord,
    style: &'a GlyphStyle,
    rng: ChaCha8Rng,
    ink: Vec<bool>,
    /// Strokes not yet consumed when radicals carry no stroke metadata.
    fallback: Vec<Vec<StrokeClass>>,
    leaf_idx: usize,
}

pub fn render_character(
    db: &CharacterDb,
    rec: &CharacterRecord,
    style: &GlyphStyle,
    seed: u64,
) -> Result<GlyphRaster, GlyphError> {
    style.validate()?;
    let leaves = rec.ids.leaves();
    let fallback = if leaves.iter().all(|l| db.radical_strokes(*l).is_some()) {
        Vec::new()
    } else {
        split_evenly(rec.strokes.classes(), leaves.len())
    };
    let mut p = Painter {
        db,
        rec,
        style,
        rng: rng_for(seed, &[0x61_79]),
        ink: vec![false; GLYPH_PIXELS],
        fallback,
        leaf_idx: 0,
    };
    let hi = GLYPH_SIZE as f64 - CANVAS_MARGIN;
    p.layout(
        &rec.ids,
        Rect {
            x0: CANVAS_MARGIN,
            y0: CANVAS_MARGIN,
            x1: hi,
            y1: hi,
        },
    )?;

    let fg = p.ink.iter().filter(|&&b| b).count();
    if fg * 100 < GLYPH_PIXELS {
        return Err(GlyphError::BlankGlyph {
            char_id: rec.char_id,
            fg,
        });
    }
    let mut pixels: Vec<f32> = p.ink.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
    if style.noise_level > 0.0 {
        let normal = Normal::new(0.0, style.noise_level).expect("valid sigma");
        for px in pixels.iter_mut() {
            *px = (*px as f64 + normal.sample(&mut p.rng)).clamp(-1.0, 1.0) as f32;
        }
    }
    Ok(GlyphRaster {
        pixels,
        char_id: rec.char_id,
        style_seed: seed,
    })
}

fn split_evenly(classes: &[StrokeClass], parts: usize) -> Vec<Vec<StrokeClass>> {
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for i in 0..parts {
        let end = (classes.len() * (i + 1)).div_ceil(parts).max(start);
        out.push(classes[start..end.min(classes.len())].to_vec());
        start = end.min(classes.len());
    }
    out
}

impl Painter<'_> {
    fn layout(&mut self, tree: &IdsTree, r: Rect) -> Result<(), GlyphError> {
        if r.w() < 2.0 || r.h() < 2.0 {
            return Err(GlyphError::DegenerateBox {
                char_id: self.rec.char_id,
                w: r.w(),
                h: r.h(),
            });
        }
        match tree {
            IdsTree::Leaf(rad) => {
                self.draw_leaf(*rad, r);
                Ok(())
            }
            IdsTree::Node { op, children } => {
                let regions = self.regions(*op, r);
                for (c, region) in children.iter().zip(regions) {
                    self.layout(c, region)?;
                }
                Ok(())
            }
        }
    }

    fn split_ratio(&mut self) -> f64 {
        let amp = (self.style.jitter_px * 0.04).min(0.1);
        if amp > 0.0 {
            0.5 + self.rng.gen_range(-amp..=amp)
        } else {
            0.5
        }
    }

    fn regions(&mut self, op: StructureOp, r: Rect) -> Vec<Rect> {
        use StructureOp::*;
        match op {
            LeftRight => {
                let s = self.split_ratio();
                vec![r.frac(0.0, 0.0, s, 1.0), r.frac(s, 0.0, 1.0, 1.0)]
            }
            TopBottom => {
                let s = self.split_ratio();
                vec![r.frac(0.0, 0.0, 1.0, s), r.frac(0.0, s, 1.0, 1.0)]
            }
            LeftMiddleRight => {
                let t = 1.0 / 3.0;
                vec![
                    r.frac(0.0, 0.0, t, 1.0),
                    r.frac(t, 0.0, 2.0 * t, 1.0),
                    r.frac(2.0 * t, 0.0, 1.0, 1.0),
                ]
            }
            TopMiddleBottom => {
                let t = 1.0 / 3.0;
                vec![
                    r.frac(0.0, 0.0, 1.0, t),
                    r.frac(0.0, t, 1.0, 2.0 * t),
                    r.frac(0.0, 2.0 * t, 1.0, 1.0),
                ]
            }
            FullSurround => vec![r, r.frac(0.3, 0.3, 0.7, 0.7)],
            SurroundFromAbove => vec![r, r.frac(0.3, 0.4, 0.7, 0.95)],
            SurroundFromBelow => vec![r, r.frac(0.3, 0.05, 0.7, 0.6)],
            SurroundFromLeft => vec![r, r.frac(0.4, 0.3, 0.95, 0.7)],
            SurroundFromUpperLeft => vec![r, r.frac(0.4, 0.4, 0.95, 0.95)],
            SurroundFromUpperRight => vec![r, r.frac(0.05, 0.4, 0.6, 0.95)],
            SurroundFromLowerLeft => vec![r, r.frac(0.4, 0.05, 0.95, 0.6)],
            Overlaid => vec![r, r],
        }
    }

    fn draw_leaf(&mut self, rad: RadicalId, r: Rect) {
        let classes: Vec<StrokeClass> = match self.db.radical_strokes(rad) {
            Some(enc) if self.fallback.is_empty() => enc.classes().to_vec(),
            _ => self.fallback.get(self.leaf_idx).cloned().unwrap_or_default(),
        };
        self.leaf_idx += 1;
        for (k, class) in classes.iter().enumerate() {
            let shape = stroke_shape(rad, k, *class);
            let pts: Vec<(f64, f64)> = shape
                .iter()
                .map(|&(u, v)| {
                    let (mut x, mut y) = r.point(u, v);
                    if self.style.jitter_px > 0.0 {
                        let j = self.style.jitter_px;
                        x += self.rng.gen_range(-j..=j);
                        y += self.rng.gen_range(-j..=j);
                    }
                    x += self.style.slant * (y - GLYPH_SIZE as f64 / 2.0);
                    (x, y)
                })
                .collect();
            for w in pts.windows(2) {
                self.segment(w[0], w[1]);
            }
        }
    }

    fn segment(&mut self, a: (f64, f64), b: (f64, f64)) {
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len * 4.0).ceil().max(1.0) as usize;
        let t = self.style.thickness_px as i64;
        let off = (t - 1) as f64 / 2.0;
        for s in 0..=steps {
            let f = s as f64 / steps as f64;
            let x = a.0 + f * (b.0 - a.0) - off;
            let y = a.1 + f * (b.1 - a.1) - off;
            let (px, py) = (x.round() as i64, y.round() as i64);
            for dy in 0..t {
                for dx in 0..t {
                    let (xx, yy) = (px + dx, py + dy);
                    if (0..GLYPH_SIZE as i64).contains(&xx) && (0..GLYPH_SIZE as i64).contains(&yy) {
                        self.ink[yy as usize * GLYPH_SIZE + xx as usize] = true;
                    }
                }
            }
        }
    }
}

/// Polyline for stroke `k` of a radical in unit coordinates, fixed per
/// (radical, k, class).
fn stroke_shape(rad: RadicalId, k: usize, class: StrokeClass) -> Vec<(f64, f64)> {
    let mut g = rng_for(rad.0 as u64, &[k as u64, class.label() as u64]);
    let mut u = |lo: f64, hi: f64| g.gen_range(lo..hi);
    match class.label() {
        1 => {
            let y = u(0.1, 0.9);
            vec![(u(0.0, 0.3), y), (u(0.7, 1.0), y)]
        }
        2 => {
            let x = u(0.1, 0.9);
            vec![(x, u(0.0, 0.3)), (x, u(0.7, 1.0))]
        }
        3 => vec![(u(0.55, 0.95), u(0.0, 0.35)), (u(0.05, 0.45), u(0.65, 1.0))],
        4 => vec![(u(0.05, 0.45), u(0.0, 0.35)), (u(0.55, 0.95), u(0.65, 1.0))],
        _ => {
            let y = u(0.0, 0.45);
            let cx = u(0.6, 1.0);
            vec![(u(0.0, 0.35), y), (cx, y), (cx, u(0.65, 1.0))]
        }
    }
}

/// Rendered samples with a class index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub samples: Vec<GlyphRaster>,
    pub by_class: BTreeMap<u32, Vec<usize>>,
}

impl Corpus {
    pub fn from_samples(samples: Vec<GlyphRaster>) -> Self {
        let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            by_class.entry(s.char_id).or_default().push(i);
        }
        Corpus { samples, by_class }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.by_class.keys().copied()
    }

    /// Keeps only the listed sample indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Corpus {
        Corpus::from_samples(indices.iter().map(|&i| self.samples[i].clone()).collect())
    }
}

/// Per-sample seed for copy `copy` of `char_id`.
pub fn sample_seed(seed: u64, char_id: u32, copy: usize) -> u64 {
    derive_seed(seed, &[char_id as u64, copy as u64])
}

pub fn generate_corpus(
    db: &CharacterDb,
    n_per_class: usize,
    style: &GlyphStyle,
    seed: u64,
) -> Result<Corpus, GlyphError> {
    let ids: Vec<u32> = db.char_ids().collect();
    generate_corpus_for(db, &ids, n_per_class, style, seed)
}

/// Renders `n_per_class` copies of each listed class, classes in the given order.
pub fn generate_corpus_for(
    db: &CharacterDb,
    classes: &[u32],
    n_per_class: usize,
    style: &GlyphStyle,
    seed: u64,
) -> Result<Corpus, GlyphError> {
    if n_per_class == 0 {
        return Err(GlyphError::InvalidStyle("n_per_class must be >= 1".into()));
    }
    style.validate()?;
    let jobs: Vec<(&CharacterRecord, usize)> = classes
        .iter()
        .map(|&c| db.get(c).ok_or(GlyphError::UnknownChar(c)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flat_map(|r| (0..n_per_class).map(move |k| (r, k)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|(r, k)| render_character(db, r, style, sample_seed(seed, r.char_id, *k)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus::from_samples(samples))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusHeader {
    pub format: String,
    pub db_path: Option<String>,
    pub style: GlyphStyle,
    pub seed: u64,
    pub n_per_class: usize,
    pub n_samples: usize,
    pub n_classes: usize,
    pub width: usize,
    pub height: usize,
    pub pixels_file: String,
    pub index_file: String,
}

/// Paths `<stem>.json`, `<stem>.f32`, `<stem>.idx.tsv`.
pub fn corpus_paths(stem: &Path) -> (PathBuf, PathBuf, PathBuf) {
    let s = stem.to_string_lossy();
    (
        PathBuf::from(format!("{s}.json")),
        PathBuf::from(format!("{s}.f32")),
        PathBuf::from(format!("{s}.idx.tsv")),
    )
}

pub fn save_corpus(
    corpus: &Corpus,
    stem: &Path,
    db_path: Option<&str>,
    style: &GlyphStyle,
    seed: u64,
    n_per_class: usize,
) -> Result<PathBuf, GlyphError> {
    let (hp, pp, ip) = corpus_paths(stem);
    let name = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let header = CorpusHeader {
        format: "star-corpus-1".into(),
        db_path: db_path.map(str::to_owned),
        style: style.clone(),
        seed,
        n_per_class,
        n_samples: corpus.len(),
        n_classes: corpus.by_class.len(),
        width: GLYPH_SIZE,
        height: GLYPH_SIZE,
        pixels_file: name(&pp),
        index_file: name(&ip),
    };
    fs::write(
        &hp,
        serde_json::to_string_pretty(&header).map_err(|e| GlyphError::Format(e.to_string()))? + "\n",
    )?;
    let mut w = BufWriter::new(fs::File::create(&pp)?);
    for s in &corpus.samples {
        for p in &s.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    w.flush()?;
    let mut idx = String::with_capacity(corpus.len() * 8);
    for (i, s) in corpus.samples.iter().enumerate() {
        idx.push_str(&format!("{i}\t{}\n", s.char_id));
    }
    fs::write(&ip, idx)?;
    Ok(hp)
}

/// Loads a corpus from its JSON header path.
pub fn load_corpus(header_path: &Path) -> Result<(Corpus, CorpusHeader), GlyphError> {
    let header: CorpusHeader =
        serde_json::from_str(&fs::read_to_string(header_path)?).map_err(|e| GlyphError::Format(e.to_string()))?;
    if header.width != GLYPH_SIZE || header.height != GLYPH_SIZE {
        return Err(GlyphError::Format(format!(
            "unsupported glyph size {}x{}",
            header.width, header.height
        )));
    }
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(dir.join(&header.pixels_file))?;
    if bytes.len() != header.n_samples * GLYPH_PIXELS * 4 {
        return Err(GlyphError::Format(format!(
            "pixel file has {} bytes, expected {}",
            bytes.len(),
            header.n_samples * GLYPH_PIXELS * 4
        )));
    }
    let index = fs::read_to_string(dir.join(&header.index_file))?;
    let mut samples = Vec::with_capacity(header.n_samples);
    let mut copies: BTreeMap<u32, usize> = BTreeMap::new();
    for (line_no, line) in index.lines().enumerate() {
        let (i, c) = line
            .split_once('\t')
            .ok_or_else(|| GlyphError::Format(format!("index line {}: expected two fields", line_no + 1)))?;
        let i: usize = i
            .parse()
            .map_err(|_| GlyphError::Format(format!("index line {}: bad sample_idx", line_no + 1)))?;
        let c: u32 = c
            .trim()
            .parse()
            .map_err(|_| GlyphError::Format(format!("index line {}: bad char_id", line_no + 1)))?;
        if i != samples.len() || i >= header.n_samples {
            return Err(GlyphError::Format(format!(
                "index line {}: out-of-order sample {i}",
                line_no + 1
            )));
        }
        let chunk = &bytes[i * GLYPH_PIXELS * 4..(i + 1) * GLYPH_PIXELS * 4];
        let pixels = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let copy = copies.entry(c).or_insert(0);
        samples.push(GlyphRaster {
            pixels,
            char_id: c,
            style_seed: sample_seed(header.seed, c, *copy),
        });
        *copy += 1;
    }
    if samples.len() != header.n_samples {
        return Err(GlyphError::Format(format!(
            "index lists {} samples, header {}",
            samples.len(),
            header.n_samples
        )));
    }
    Ok((Corpus::from_samples(samples), header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::synth::{generate_db, SynthDbConfig};

    fn small_db() -> CharacterDb {
        generate_db(&SynthDbConfig {
            chars: 30,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn deterministic_render() {
        let db = small_db();
        let r = &db.records()[0];
        let style = GlyphStyle::default();
        let a = render_character(&db, r, &style, 11).unwrap();
        let b = render_character(&db, r, &style, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.pixels.iter().all(|p| (-1.0..=1.0).contains(p)));
        assert_eq!(a.pixels.len(), GLYPH_PIXELS);
    }

    #[test]
    fn clean_style_ignores_seed() {
        let db = small_db();
        let r = &db.records()[3];
        let a = render_character(&db, r, &GlyphStyle::clean(), 1).unwrap();
        let b = render_character(&db, r, &GlyphStyle::clean(), 2).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn jitter_varies_with_seed() {
        let db = small_db();
        let style = GlyphStyle {
            noise_level: 0.0,
            ..GlyphStyle::default()
        };
        let a = generate_corpus(&db, 2, &style, 1).unwrap();
        let b = generate_corpus(&db, 2, &style, 2).unwrap();
        let sum = |c: &Corpus| {
            c.samples
                .iter()
                .map(|s| s.pixels.iter().map(|&p| p as f64).sum::<f64>())
                .collect::<Vec<_>>()
        };
        assert_ne!(sum(&a), sum(&b));
    }

    #[test]
    fn corpus_counts() {
        let db = generate_db(&SynthDbConfig {
            chars: 10,
            ..Default::default()
        })
        .unwrap();
        let c = generate_corpus(&db, 5, &GlyphStyle::default(), 3).unwrap();
        assert_eq!(c.len(), 50);
        assert_eq!(c.by_class.len(), 10);
        assert_eq!(c, generate_corpus(&db, 5, &GlyphStyle::default(), 3).unwrap());
        for (cls, idx) in &c.by_class {
            assert!(idx.iter().all(|&i| c.samples[i].char_id == *cls));
        }
    }

    #[test]
    fn degenerate_layout_detected() {
        // Deeply nested left-right splits shrink a leaf below 2 px.
        let mut text = String::new();
        for _ in 0..5 {
            text.push_str("lr r1 ");
        }
        text.push_str("r2");
        let db = CharacterDb::parse(&format!("1\tX\t{}\t{}\n", "1".repeat(6), text)).unwrap();
        let err = render_character(&db, &db.records()[0], &GlyphStyle::clean(), 0).unwrap_err();
        assert!(matches!(err, GlyphError::DegenerateBox { char_id: 1, .. }));
    }

    #[test]
    fn renders_without_radical_metadata() {
        let db = CharacterDb::parse("1\tX\t12345\tlr r1 r2\n").unwrap();
        let g = render_character(&db, &db.records()[0], &GlyphStyle::clean(), 0).unwrap();
        assert!(g.foreground_ratio() > 0.01);
    }

    #[test]
    fn invalid_style_rejected() {
        let db = small_db();
        let bad = GlyphStyle {
            noise_level: 2.0,
            ..GlyphStyle::default()
        };
        assert!(matches!(
            render_character(&db, &db.records()[0], &bad, 0),
            Err(GlyphError::InvalidStyle(_))
        ));
        assert!(generate_corpus(&db, 0, &GlyphStyle::default(), 0).is_err());
    }

    #[test]
    fn corpus_disk_round_trip() {
        let db = generate_db(&SynthDbConfig {
            chars: 8,
            ..Default::default()
        })
        .unwrap();
        let style = GlyphStyle::default();
        let c = generate_corpus(&db, 3, &style, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let hp = save_corpus(&c, &dir.path().join("train"), Some("db.tsv"), &style, 9, 3).unwrap();
        let (back, header) = load_corpus(&hp).unwrap();
        assert_eq!(back, c);
        assert_eq!(header.n_samples, 24);
        let idx = fs::read_to_string(dir.path().join("train.idx.tsv")).unwrap();
        assert!(idx.starts_with(&format!("0\t{}\n", c.samples[0].char_id)));
    }
}
