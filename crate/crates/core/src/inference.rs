//! Stroke screening and feature matching.
//!
//! A decoded stroke encoding that maps to exactly one character is accepted
//! directly. Otherwise the encoding is rectified against the dictionary and
//! the candidates are ranked by cosine similarity against a support bank of
//! stroke-encoder features.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::decomposition::{CharacterDb, DecompositionError, StrokeEncoding};
use crate::dictionary::{DictionaryError, EncodingDictionary, LookupResult, RectifyMode};
use crate::glyphgen::{render_character, sample_seed, GlyphError, GlyphRaster, GlyphStyle};
use crate::nnet::{images_to_tensor, ModelState, NnetError};
use crate::seeding::derive_seed;

const SUPPORT_TAG: u64 = 0x5355_5050;
const BANK_CHUNK: usize = 64;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("decoder produced an empty stroke sequence")]
    EmptyDecode,
    #[error("char {0} has no support feature")]
    MissingBankEntry(u32),
    #[error("no candidates to match")]
    EmptyCandidates,
    #[error("support size k must be at least 1")]
    InvalidSupportSize,
    #[error(transparent)]
    Nnet(#[from] NnetError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
}

/// Stroke labels and pooled feature for one image.
pub type Decoded = (Vec<usize>, Vec<f64>);

/// What the recognizer needs from a trained model: greedy stroke decoding
/// and pooled stroke features.
pub trait StrokeModel: Sync {
    /// Decoded stroke labels and pooled feature per image.
    fn decode(&self, images: &[&GlyphRaster]) -> Result<Vec<Decoded>, NnetError>;
    fn features(&self, images: &[&GlyphRaster]) -> Result<Vec<Vec<f64>>, NnetError>;
    fn model_id(&self) -> String {
        "anonymous".into()
    }
}

impl StrokeModel for ModelState {
    fn decode(&self, images: &[&GlyphRaster]) -> Result<Vec<Decoded>, NnetError> {
        let (seqs, pooled) = self.decode_strokes(&images_to_tensor(images))?;
        Ok(seqs
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, pooled.row(i).to_vec()))
            .collect())
    }

    fn features(&self, images: &[&GlyphRaster]) -> Result<Vec<Vec<f64>>, NnetError> {
        let pooled = self.stroke_features(&images_to_tensor(images))?;
        Ok((0..images.len()).map(|i| pooled.row(i).to_vec()).collect())
    }

    fn model_id(&self) -> String {
        // FNV-1a over parameter bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, _, t) in self.params.iter() {
            for v in t.data() {
                for b in v.to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100_0000_01b3);
                }
            }
        }
        format!("{h:016x}")
    }
}

/// Averaged stroke features of synthetic support renders, one per character.
#[derive(Debug)]
pub struct FeatureBank {
    vectors: BTreeMap<u32, Vec<f64>>,
    pub k: usize,
    pub seed: u64,
    pub model_id: String,
    pub excluded: Vec<u32>,
    queries: AtomicUsize,
}

impl FeatureBank {
    pub fn from_vectors(vectors: BTreeMap<u32, Vec<f64>>) -> Self {
        FeatureBank {
            vectors,
            k: 0,
            seed: 0,
            model_id: String::new(),
            excluded: Vec::new(),
            queries: AtomicUsize::new(0),
        }
    }

    pub fn get(&self, char_id: u32) -> Option<&[f64]> {
        self.vectors.get(&char_id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn char_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.vectors.keys().copied()
    }

    /// Number of [`fmm_match`] calls served so far.
    pub fn query_count(&self) -> usize {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Seed of support exemplar `copy` for `char_id`; disjoint from training sample seeds.
pub fn support_seed(seed: u64, char_id: u32, copy: usize) -> u64 {
    sample_seed(derive_seed(seed, &[SUPPORT_TAG]), char_id, copy)
}

pub fn build_support_bank<M: StrokeModel>(
    model: &M,
    db: &CharacterDb,
    k: usize,
    style: &GlyphStyle,
    seed: u64,
) -> Result<FeatureBank, InferenceError> {
    if k == 0 {
        return Err(InferenceError::InvalidSupportSize);
    }
    let mut jobs = Vec::with_capacity(db.len() * k);
    for rec in db.records() {
        for copy in 0..k {
            jobs.push((rec, copy));
        }
    }
    let rasters = jobs
        .par_iter()
        .map(|(rec, copy)| render_character(db, rec, style, support_seed(seed, rec.char_id, *copy)))
        .collect::<Result<Vec<_>, _>>()?;
    let feats: Vec<Vec<f64>> = rasters
        .par_chunks(BANK_CHUNK)
        .map(|chunk| model.features(&chunk.iter().collect::<Vec<_>>()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut vectors = BTreeMap::new();
    let mut excluded = Vec::new();
    for (rec, group) in db.records().iter().zip(feats.chunks(k)) {
        let d = group[0].len();
        let mut mean = vec![0.0; d];
        for f in group {
            mean.iter_mut().zip(f).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= k as f64);
        if mean.iter().all(|&v| v == 0.0) || !mean.iter().all(|v| v.is_finite()) {
            log::warn!(
                "support feature for char {} is zero or non-finite; excluded",
                rec.char_id
            );
            excluded.push(rec.char_id);
        } else {
            vectors.insert(rec.char_id, mean);
        }
    }
    Ok(FeatureBank {
        vectors,
        k,
        seed,
        model_id: model.model_id(),
        excluded,
        queries: AtomicUsize::new(0),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfusingReason {
    AmbiguousEntry,
    AbsentEncoding,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Deterministic(u32),
    Confusing(ConfusingReason),
}

pub fn ssm_decide(enc: &StrokeEncoding, dict: &EncodingDictionary) -> Decision {
    match dict.lookup(enc) {
        LookupResult::Unique(c) => Decision::Deterministic(c),
        LookupResult::Ambiguous(_) => Decision::Confusing(ConfusingReason::AmbiguousEntry),
        LookupResult::Absent => Decision::Confusing(ConfusingReason::AbsentEncoding),
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Highest-cosine candidate (lowest char_id on ties) and every candidate's score, in input order.
pub fn fmm_match(
    feature: &[f64],
    candidates: &[u32],
    bank: &FeatureBank,
) -> Result<(u32, Vec<(u32, f64)>), InferenceError> {
    if candidates.is_empty() {
        return Err(InferenceError::EmptyCandidates);
    }
    bank.queries.fetch_add(1, Ordering::Relaxed);
    let mut scores = Vec::with_capacity(candidates.len());
    let mut best: Option<(u32, f64)> = None;
    for &c in candidates {
        let v = bank.get(c).ok_or(InferenceError::MissingBankEntry(c))?;
        let s = cosine(feature, v);
        scores.push((c, s));
        best = match best {
            Some((bc, bs)) if bs > s || (bs == s && bc < c) => Some((bc, bs)),
            _ => Some((c, s)),
        };
    }
    Ok((best.unwrap().0, scores))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RecognitionTrace {
    pub predicted: String,
    pub decision: Decision,
    pub rectified: Vec<String>,
    pub rectified_distance: usize,
    pub candidates: Vec<u32>,
    pub scores: Vec<(u32, f64)>,
    pub final_char: u32,
}

/// Screening and matching for an already-decoded image.
pub fn recognize_decoded(
    labels: &[usize],
    feature: &[f64],
    dict: &EncodingDictionary,
    bank: &FeatureBank,
    mode: RectifyMode,
) -> Result<RecognitionTrace, InferenceError> {
    if labels.is_empty() {
        return Err(InferenceError::EmptyDecode);
    }
    let digits: Vec<u8> = labels.iter().map(|&l| u8::try_from(l).unwrap_or(u8::MAX)).collect();
    let enc = StrokeEncoding::from_labels(&digits)?;
    let decision = ssm_decide(&enc, dict);
    if let Decision::Deterministic(c) = decision {
        return Ok(RecognitionTrace {
            predicted: enc.digits(),
            decision,
            rectified: vec![enc.digits()],
            rectified_distance: 0,
            candidates: vec![c],
            scores: Vec::new(),
            final_char: c,
        });
    }
    let rs = dict.rectified_set(&enc, mode)?;
    let candidates = dict.candidate_chars(&rs);
    let (final_char, scores) = fmm_match(feature, &candidates, bank)?;
    Ok(RecognitionTrace {
        predicted: enc.digits(),
        decision,
        rectified: rs.encodings.iter().map(StrokeEncoding::digits).collect(),
        rectified_distance: rs.distance,
        candidates,
        scores,
        final_char,
    })
}

pub fn recognize<M: StrokeModel>(
    image: &GlyphRaster,
    model: &M,
    dict: &EncodingDictionary,
    bank: &FeatureBank,
    mode: RectifyMode,
) -> Result<RecognitionTrace, InferenceError> {
    let mut out = model.decode(&[image])?;
    let (labels, feature) = out.pop().expect("one result per image");
    recognize_decoded(&labels, &feature, dict, bank, mode)
}

/// Recognizes many images; decoding runs in batches, in parallel across batches.
pub fn recognize_batch<M: StrokeModel>(
    images: &[&GlyphRaster],
    model: &M,
    dict: &EncodingDictionary,
    bank: &FeatureBank,
    mode: RectifyMode,
    batch: usize,
) -> Result<Vec<Result<RecognitionTrace, InferenceError>>, InferenceError> {
    let decoded: Vec<Decoded> = images
        .par_chunks(batch.max(1))
        .map(|c| model.decode(c))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(decoded
        .iter()
        .map(|(l, f)| recognize_decoded(l, f, dict, bank, mode))
        .collect())
}
