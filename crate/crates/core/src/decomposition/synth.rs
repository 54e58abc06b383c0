//! Synthetic character database generator.
//!
//! Radicals get random short stroke sequences; characters are IDS trees over
//! radicals drawn with Zipf-like weights, so radical frequencies are skewed
//! the way real inventories are. A character's strokes are its leaves'
//! strokes in preorder.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CharacterDb, CharacterRecord, DbError, IdsTree, RadicalAlphabet, RadicalId, StrokeEncoding, StructureOp};
use crate::seeding::rng_for;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthDbConfig {
    pub radicals: u32,
    pub chars: usize,
    pub seed: u64,
    /// Upper bound on a character's stroke count.
    pub max_strokes: usize,
    /// Upper bound on a character's radical-encoding length.
    pub max_radical_tokens: usize,
    /// Zipf exponent for radical usage.
    pub zipf: f64,
}

impl Default for SynthDbConfig {
    fn default() -> Self {
        SynthDbConfig {
            radicals: 20,
            chars: 150,
            seed: 7,
            max_strokes: 16,
            max_radical_tokens: 12,
            zipf: 1.0,
        }
    }
}

const OP_WEIGHTS: [(StructureOp, f64); 12] = [
    (StructureOp::LeftRight, 0.36),
    (StructureOp::TopBottom, 0.30),
    (StructureOp::LeftMiddleRight, 0.04),
    (StructureOp::TopMiddleBottom, 0.04),
    (StructureOp::FullSurround, 0.03),
    (StructureOp::SurroundFromAbove, 0.04),
    (StructureOp::SurroundFromBelow, 0.03),
    (StructureOp::SurroundFromLeft, 0.03),
    (StructureOp::SurroundFromUpperLeft, 0.04),
    (StructureOp::SurroundFromUpperRight, 0.03),
    (StructureOp::SurroundFromLowerLeft, 0.03),
    (StructureOp::Overlaid, 0.03),
];

pub fn generate_db(cfg: &SynthDbConfig) -> Result<CharacterDb, DbError> {
    if cfg.radicals < 2 || cfg.chars < 2 {
        return Err(DbError::Validation {
            line: 0,
            msg: "need at least 2 radicals and 2 characters".into(),
        });
    }
    let mut rng = rng_for(cfg.seed, &[0x5e_ed_db]);
    let alphabet = RadicalAlphabet::numbered(cfg.radicals);

    let mut radical_strokes: BTreeMap<RadicalId, StrokeEncoding> = BTreeMap::new();
    let mut used = HashSet::new();
    for i in 1..=cfg.radicals {
        loop {
            let n = *[1usize, 2, 2, 3, 3, 3, 4, 4].choose(&mut rng).unwrap();
            let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
            let enc = StrokeEncoding::from_labels(&labels).expect("labels in range");
            // Radical sequences stay distinct once the inventory is large enough.
            if used.insert(enc.clone()) || used.len() >= 5usize.pow(3) {
                radical_strokes.insert(RadicalId(i), enc);
                break;
            }
        }
    }
    let weights: Vec<f64> = (1..=cfg.radicals).map(|i| 1.0 / (i as f64).powf(cfg.zipf)).collect();

    let strokes_of = |t: &IdsTree| -> StrokeEncoding {
        StrokeEncoding::concat(t.leaves().iter().map(|l| &radical_strokes[l])).expect("non-empty")
    };

    let mut trees: Vec<IdsTree> = Vec::with_capacity(cfg.chars);
    let mut seen: HashSet<IdsTree> = HashSet::new();

    // One guaranteed pair with equal strokes and different radical encodings.
    let (a, b) = loop {
        let a = pick_radical(&mut rng, &weights);
        let b = pick_radical(&mut rng, &weights);
        if a != b && radical_strokes[&a].len() + radical_strokes[&b].len() <= cfg.max_strokes {
            break (a, b);
        }
    };
    for op in [StructureOp::LeftRight, StructureOp::TopBottom] {
        let t = IdsTree::node(op, vec![IdsTree::Leaf(a), IdsTree::Leaf(b)]).expect("binary");
        seen.insert(t.clone());
        trees.push(t);
    }

    let mut attempts = 0usize;
    while trees.len() < cfg.chars {
        attempts += 1;
        if attempts > cfg.chars * 1000 {
            return Err(DbError::Validation {
                line: 0,
                msg: format!(
                    "could not generate {} distinct characters from {} radicals",
                    cfg.chars, cfg.radicals
                ),
            });
        }
        let t = if rng.gen_bool(0.12) {
            IdsTree::Leaf(pick_radical(&mut rng, &weights))
        } else {
            random_composition(&mut rng, &weights)
        };
        if t.node_count() > cfg.max_radical_tokens || strokes_of(&t).len() > cfg.max_strokes {
            continue;
        }
        if seen.insert(t.clone()) {
            trees.push(t);
        }
    }

    let mut records: Vec<CharacterRecord> = trees
        .into_iter()
        .enumerate()
        .map(|(i, ids)| {
            let char_id = i as u32 + 1;
            CharacterRecord {
                char_id,
                name: format!("K{char_id}"),
                strokes: strokes_of(&ids),
                ids,
            }
        })
        .collect();
    records.shuffle(&mut rng);
    CharacterDb::new(records, alphabet, radical_strokes)
}

fn pick_radical(rng: &mut ChaCha8Rng, weights: &[f64]) -> RadicalId {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return RadicalId(i as u32 + 1);
        }
        x -= w;
    }
    RadicalId(weights.len() as u32)
}

fn pick_op(rng: &mut ChaCha8Rng) -> StructureOp {
    let total: f64 = OP_WEIGHTS.iter().map(|(_, w)| w).sum();
    let mut x = rng.gen_range(0.0..total);
    for (op, w) in OP_WEIGHTS {
        if x < w {
            return op;
        }
        x -= w;
    }
    StructureOp::LeftRight
}

fn random_composition(rng: &mut ChaCha8Rng, weights: &[f64]) -> IdsTree {
    let op = pick_op(rng);
    let nestable = matches!(op, StructureOp::LeftRight | StructureOp::TopBottom);
    let children = (0..op.arity())
        .map(|_| {
            if nestable && rng.gen_bool(0.2) {
                let inner = if rng.gen_bool(0.5) {
                    StructureOp::LeftRight
                } else {
                    StructureOp::TopBottom
                };
                IdsTree::node(
                    inner,
                    vec![
                        IdsTree::Leaf(pick_radical(rng, weights)),
                        IdsTree::Leaf(pick_radical(rng, weights)),
                    ],
                )
                .expect("binary")
            } else {
                IdsTree::Leaf(pick_radical(rng, weights))
            }
        })
        .collect();
    IdsTree::node(op, children).expect("arity respected")
}

/// Groups of characters sharing a stroke encoding (size ≥ 2).
pub fn ambiguous_groups(db: &CharacterDb) -> Vec<Vec<u32>> {
    let mut by: BTreeMap<String, Vec<u32>> = BTreeMap::new();
    for r in db.records() {
        by.entry(r.strokes.digits()).or_default().push(r.char_id);
    }
    by.into_values().filter(|v| v.len() > 1).collect()
}
