use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::ids::{parse_ids_text, IdsTree, RadicalAlphabet, RadicalId, TokenVocab};
use super::stroke::StrokeEncoding;
use super::{flatten_ids, DecompositionError, RadicalEncoding, StructureOp};

#[derive(Debug, Error)]
pub enum DbError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate char_id {id}")]
    DuplicateCharId { line: usize, id: u32 },
    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharacterRecord {
    pub char_id: u32,
    pub name: String,
    pub strokes: StrokeEncoding,
    pub ids: IdsTree,
}

/// Validated set of character records. Record order is frequency rank
/// (index 0 = most frequent).
#[derive(Clone, Debug, Default)]
pub struct CharacterDb {
    records: Vec<CharacterRecord>,
    alphabet: RadicalAlphabet,
    radical_strokes: BTreeMap<RadicalId, StrokeEncoding>,
    index: HashMap<u32, usize>,
}

impl CharacterDb {
    /// Validates and indexes records. `radical_strokes` is optional per-radical
    /// stroke metadata; when every leaf of a record is covered, the record's
    /// strokes must equal the concatenation of its leaves' strokes.
    pub fn new(
        records: Vec<CharacterRecord>,
        alphabet: RadicalAlphabet,
        radical_strokes: BTreeMap<RadicalId, StrokeEncoding>,
    ) -> Result<Self, DbError> {
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            let line = i + 1;
            if index.insert(r.char_id, i).is_some() {
                return Err(DbError::DuplicateCharId { line, id: r.char_id });
            }
            check_record(r, &alphabet, &radical_strokes).map_err(|msg| DbError::Validation { line, msg })?;
        }
        for id in radical_strokes.keys() {
            if !alphabet.contains(*id) {
                return Err(DbError::Validation {
                    line: 0,
                    msg: format!("stroke metadata for radical {id} missing from alphabet"),
                });
            }
        }
        Ok(CharacterDb {
            records,
            alphabet,
            radical_strokes,
            index,
        })
    }

    pub fn records(&self) -> &[CharacterRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, char_id: u32) -> Option<&CharacterRecord> {
        self.index.get(&char_id).map(|&i| &self.records[i])
    }

    /// 1-based frequency rank.
    pub fn rank(&self, char_id: u32) -> Option<usize> {
        self.index.get(&char_id).map(|i| i + 1)
    }

    pub fn char_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.records.iter().map(|r| r.char_id)
    }

    pub fn alphabet(&self) -> &RadicalAlphabet {
        &self.alphabet
    }

    pub fn radical_strokes(&self, id: RadicalId) -> Option<&StrokeEncoding> {
        self.radical_strokes.get(&id)
    }

    pub fn token_vocab(&self) -> TokenVocab {
        TokenVocab::contiguous(&self.alphabet)
    }

    pub fn radical_encoding(&self, rec: &CharacterRecord) -> RadicalEncoding {
        // Every leaf is in the alphabet after validation.
        flatten_ids(&rec.ids, &self.token_vocab()).expect("validated record")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DbError> {
        load_character_db(path)
    }

    pub fn parse(text: &str) -> Result<Self, DbError> {
        let mut raw = Vec::new();
        let mut radical_meta = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let trimmed = line.trim_end_matches('\r');
            if let Some(meta) = trimmed.strip_prefix("#@radical") {
                radical_meta.push((line_no, meta.trim().to_owned()));
                continue;
            }
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(DbError::Parse {
                    line: line_no,
                    msg: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let char_id: u32 = fields[0].trim().parse().map_err(|_| DbError::Parse {
                line: line_no,
                msg: format!("bad char_id {:?}", fields[0]),
            })?;
            raw.push((
                line_no,
                char_id,
                fields[1].to_owned(),
                fields[2].to_owned(),
                fields[3].to_owned(),
            ));
        }

        // Radical tokens are `r<N>`; collect the alphabet before parsing trees.
        let mut alphabet = RadicalAlphabet::new();
        for (line, _, _, _, ids) in &raw {
            for tok in ids.split_whitespace() {
                if StructureOp::from_token(tok).is_some() {
                    continue;
                }
                let id = radical_token_id(tok).ok_or_else(|| DbError::Parse {
                    line: *line,
                    msg: DecompositionError::UnknownToken(tok.to_owned()).to_string(),
                })?;
                alphabet.insert(RadicalId(id), tok);
            }
        }
        let mut radical_strokes = BTreeMap::new();
        for (line, meta) in radical_meta {
            let parts: Vec<&str> = meta.split_whitespace().collect();
            let [name, digits] = parts[..] else {
                return Err(DbError::Parse {
                    line,
                    msg: "expected `#@radical <name> <strokes>`".into(),
                });
            };
            let id = radical_token_id(name).ok_or_else(|| DbError::Parse {
                line,
                msg: format!("bad radical name {name:?}"),
            })?;
            let enc: StrokeEncoding = digits.parse().map_err(|e: DecompositionError| DbError::Validation {
                line,
                msg: e.to_string(),
            })?;
            alphabet.insert(RadicalId(id), name);
            radical_strokes.insert(RadicalId(id), enc);
        }

        let mut records = Vec::with_capacity(raw.len());
        let mut seen = HashMap::new();
        for (line, char_id, name, digits, ids) in raw {
            if seen.insert(char_id, line).is_some() {
                return Err(DbError::DuplicateCharId { line, id: char_id });
            }
            let strokes: StrokeEncoding = digits.parse().map_err(|e: DecompositionError| DbError::Validation {
                line,
                msg: e.to_string(),
            })?;
            let ids = parse_ids_text(&ids, &alphabet).map_err(|e| DbError::Validation {
                line,
                msg: e.to_string(),
            })?;
            records.push(CharacterRecord {
                char_id,
                name,
                strokes,
                ids,
            });
        }
        Self::new(records, alphabet, radical_strokes)
    }

    /// TSV form read back by [`CharacterDb::parse`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# char_id\tname\tstrokes\tids\n");
        for (id, strokes) in &self.radical_strokes {
            let name = self.alphabet.name_of(*id).unwrap_or_default();
            let _ = writeln!(out, "#@radical\t{name}\t{strokes}");
        }
        for r in &self.records {
            let ids = r.ids.to_text(&self.alphabet).expect("validated record");
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.char_id, r.name, r.strokes, ids);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DbError> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    /// Restricts the database to the given classes, keeping rank order and
    /// the full radical alphabet.
    pub fn subset(&self, keep: &std::collections::BTreeSet<u32>) -> CharacterDb {
        let records = self
            .records
            .iter()
            .filter(|r| keep.contains(&r.char_id))
            .cloned()
            .collect();
        CharacterDb::new(records, self.alphabet.clone(), self.radical_strokes.clone()).expect("subset of a valid db")
    }
}

fn radical_token_id(tok: &str) -> Option<u32> {
    let n = tok.strip_prefix('r')?;
    if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    n.parse().ok().filter(|&v| v > 0)
}

fn check_record(
    r: &CharacterRecord,
    alphabet: &RadicalAlphabet,
    radical_strokes: &BTreeMap<RadicalId, StrokeEncoding>,
) -> Result<(), String> {
    check_tree(&r.ids, alphabet)?;
    let leaves = r.ids.leaves();
    let parts: Option<Vec<&StrokeEncoding>> = leaves.iter().map(|l| radical_strokes.get(l)).collect();
    if let Some(parts) = parts {
        let expected = StrokeEncoding::concat(parts).map_err(|e| e.to_string())?;
        if expected != r.strokes {
            return Err(format!(
                "char {} strokes {} differ from its radicals' strokes {}",
                r.char_id, r.strokes, expected
            ));
        }
    }
    Ok(())
}

fn check_tree(t: &IdsTree, alphabet: &RadicalAlphabet) -> Result<(), String> {
    match t {
        IdsTree::Leaf(r) if alphabet.contains(*r) => Ok(()),
        IdsTree::Leaf(r) => Err(format!("radical {r} not in alphabet")),
        IdsTree::Node { op, children } => {
            if children.len() != op.arity() {
                return Err(format!("{op} has {} children, expected {}", children.len(), op.arity()));
            }
            children.iter().try_for_each(|c| check_tree(c, alphabet))
        }
    }
}

pub fn load_character_db(path: impl AsRef<Path>) -> Result<CharacterDb, DbError> {
    let text = fs::read_to_string(path)?;
    CharacterDb::parse(&text)
}
