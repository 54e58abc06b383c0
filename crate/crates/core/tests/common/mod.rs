//! Helpers shared by the integration tests: random fixtures, independent
//! oracles and stub models.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use star_core::decomposition::{
    CharacterDb, CharacterRecord, IdsTree, RadicalAlphabet, RadicalId, StrokeEncoding, StructureOp,
};
use star_core::glyphgen::GlyphRaster;
use star_core::inference::{Decoded, StrokeModel};
use star_core::nnet::NnetError;
use star_core::seeding::rng_for;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng_for(seed, &[0x7e57])
}

/// Random tree over radicals `1..=radicals` with depth at most `max_depth`.
pub fn random_tree(rng: &mut ChaCha8Rng, radicals: u32, max_depth: usize) -> IdsTree {
    if max_depth <= 1 || rng.gen_bool(0.35) {
        return IdsTree::Leaf(RadicalId(rng.gen_range(1..=radicals)));
    }
    let op = StructureOp::ALL[rng.gen_range(0..12)];
    let children = (0..op.arity())
        .map(|_| random_tree(rng, radicals, max_depth - 1))
        .collect();
    IdsTree::node(op, children).unwrap()
}

/// Full-matrix recursive-definition edit distance, written independently of the library.
pub fn edit_distance_oracle(a: &[u8], b: &[u8]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

pub fn random_labels(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Vec<u8> {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| rng.gen_range(1..=5)).collect()
}

/// Database of single-radical characters with arbitrary stroke encodings
/// (no radical stroke metadata, so strokes are unconstrained). Duplicate
/// encodings are allowed, which yields ambiguous entries.
pub fn fixture_db(n: usize, seed: u64) -> CharacterDb {
    let mut r = rng(seed);
    let alphabet = RadicalAlphabet::numbered(n as u32);
    let records = (0..n)
        .map(|i| CharacterRecord {
            char_id: 1000 + i as u32,
            name: format!("c{i}"),
            strokes: StrokeEncoding::from_labels(&random_labels(&mut r, 1, 8)).unwrap(),
            ids: IdsTree::Leaf(RadicalId(i as u32 + 1)),
        })
        .collect();
    CharacterDb::new(records, alphabet, BTreeMap::new()).unwrap()
}

/// Reads the class straight off the raster: decodes the true strokes and
/// emits a one-hot feature over `ids`.
pub struct OracleModel {
    pub truth: BTreeMap<u32, Vec<usize>>,
    pub ids: Vec<u32>,
}

impl OracleModel {
    pub fn new(db: &CharacterDb) -> Self {
        let truth = db
            .records()
            .iter()
            .map(|r| (r.char_id, r.strokes.labels().iter().map(|&l| l as usize).collect()))
            .collect();
        OracleModel {
            truth,
            ids: db.char_ids().collect(),
        }
    }

    fn feature(&self, c: u32) -> Vec<f64> {
        let mut f = vec![0.0; self.ids.len()];
        f[self.ids.iter().position(|&i| i == c).unwrap()] = 1.0;
        f
    }
}

impl StrokeModel for OracleModel {
    fn decode(&self, images: &[&GlyphRaster]) -> Result<Vec<Decoded>, NnetError> {
        Ok(images
            .iter()
            .map(|g| (self.truth[&g.char_id].clone(), self.feature(g.char_id)))
            .collect())
    }

    fn features(&self, images: &[&GlyphRaster]) -> Result<Vec<Vec<f64>>, NnetError> {
        Ok(images.iter().map(|g| self.feature(g.char_id)).collect())
    }
}

/// Ignores its input: always decodes `labels` with a constant feature.
pub struct ConstantModel {
    pub labels: Vec<usize>,
    pub dim: usize,
}

impl StrokeModel for ConstantModel {
    fn decode(&self, images: &[&GlyphRaster]) -> Result<Vec<Decoded>, NnetError> {
        Ok(images
            .iter()
            .map(|_| (self.labels.clone(), vec![1.0; self.dim]))
            .collect())
    }

    fn features(&self, images: &[&GlyphRaster]) -> Result<Vec<Vec<f64>>, NnetError> {
        Ok(images.iter().map(|_| vec![1.0; self.dim]).collect())
    }
}
