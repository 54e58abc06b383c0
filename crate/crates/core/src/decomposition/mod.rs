//! Stroke and radical encodings, IDS parsing, and the character database.

mod db;
mod ids;
mod stroke;
pub mod synth;

pub use db::{load_character_db, CharacterDb, CharacterRecord, DbError};
pub use ids::{
    flatten_ids, parse_ids, parse_ids_text, serialize_ids, IdsToken, IdsTree, RadicalAlphabet, RadicalEncoding,
    RadicalId, StructureOp, TokenVocab,
};
pub use stroke::{base_stroke_by_name, map_base_stroke, BaseStroke, StrokeClass, StrokeEncoding, BASE_STROKES};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("stroke label {0} outside 1..=5")]
    InvalidStrokeLabel(u8),
    #[error("invalid stroke digit {0:?}")]
    InvalidStrokeDigit(char),
    #[error("stroke encoding is empty")]
    EmptyStrokeEncoding,
    #[error("base stroke id {0} outside 1..=32")]
    BaseStrokeOutOfRange(u32),
    #[error("empty IDS")]
    EmptyIds,
    #[error("unknown IDS token {0:?}")]
    UnknownToken(String),
    #[error("operator {op} expects {expected} children, found {found}")]
    ArityMismatch {
        op: StructureOp,
        expected: usize,
        found: usize,
    },
    #[error("{0} trailing token(s) after a complete IDS")]
    TrailingTokens(usize),
    #[error("no vocabulary entry for {0:?}")]
    MissingVocabEntry(IdsToken),
}
