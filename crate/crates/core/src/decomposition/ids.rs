//! Ideographic description sequences: the radical-level decomposition.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::DecompositionError;

/// The twelve spatial structure operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StructureOp {
    LeftRight,
    TopBottom,
    LeftMiddleRight,
    TopMiddleBottom,
    FullSurround,
    SurroundFromAbove,
    SurroundFromBelow,
    SurroundFromLeft,
    SurroundFromUpperLeft,
    SurroundFromUpperRight,
    SurroundFromLowerLeft,
    Overlaid,
}

impl StructureOp {
    pub const ALL: [StructureOp; 12] = [
        StructureOp::LeftRight,
        StructureOp::TopBottom,
        StructureOp::LeftMiddleRight,
        StructureOp::TopMiddleBottom,
        StructureOp::FullSurround,
        StructureOp::SurroundFromAbove,
        StructureOp::SurroundFromBelow,
        StructureOp::SurroundFromLeft,
        StructureOp::SurroundFromUpperLeft,
        StructureOp::SurroundFromUpperRight,
        StructureOp::SurroundFromLowerLeft,
        StructureOp::Overlaid,
    ];

    /// 1-based operator id.
    pub fn op_id(self) -> u32 {
        Self::ALL.iter().position(|&o| o == self).unwrap() as u32 + 1
    }

    pub fn from_op_id(id: u32) -> Option<Self> {
        Self::ALL.get((id as usize).checked_sub(1)?).copied()
    }

    pub fn arity(self) -> usize {
        match self {
            StructureOp::LeftMiddleRight | StructureOp::TopMiddleBottom => 3,
            _ => 2,
        }
    }

    /// ASCII token used in database files.
    pub fn ascii(self) -> &'static str {
        match self {
            StructureOp::LeftRight => "lr",
            StructureOp::TopBottom => "tb",
            StructureOp::LeftMiddleRight => "lmr",
            StructureOp::TopMiddleBottom => "tmb",
            StructureOp::FullSurround => "fs",
            StructureOp::SurroundFromAbove => "sa",
            StructureOp::SurroundFromBelow => "sb",
            StructureOp::SurroundFromLeft => "sl",
            StructureOp::SurroundFromUpperLeft => "sul",
            StructureOp::SurroundFromUpperRight => "sur",
            StructureOp::SurroundFromLowerLeft => "sll",
            StructureOp::Overlaid => "ov",
        }
    }

    /// Unicode ideographic description character (U+2FF0..U+2FFB).
    pub fn idc(self) -> char {
        char::from_u32(0x2FF0 + self.op_id() - 1).unwrap()
    }

    /// Accepts the ASCII token, the Unicode IDC, or the boxed-plus/boxed-minus
    /// shorthands for left-right and top-bottom.
    pub fn from_token(tok: &str) -> Option<Self> {
        if let Some(op) = Self::ALL.iter().find(|o| o.ascii() == tok) {
            return Some(*op);
        }
        let mut chars = tok.chars();
        let c = chars.next()?;
        if chars.next().is_some() {
            return None;
        }
        match c {
            '⊞' => Some(StructureOp::LeftRight),
            '⊟' => Some(StructureOp::TopBottom),
            '\u{2FF0}'..='\u{2FFB}' => Self::from_op_id(c as u32 - 0x2FF0 + 1),
            _ => None,
        }
    }
}

impl fmt::Display for StructureOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ascii())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RadicalId(pub u32);

impl fmt::Display for RadicalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Radical id → display name, with reverse lookup for parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RadicalAlphabet {
    names: BTreeMap<RadicalId, String>,
    by_name: HashMap<String, RadicalId>,
}

impl RadicalAlphabet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Alphabet `r1..=rN`.
    pub fn numbered(n: u32) -> Self {
        let mut a = Self::new();
        for i in 1..=n {
            a.insert(RadicalId(i), format!("r{i}"));
        }
        a
    }

    pub fn insert(&mut self, id: RadicalId, name: impl Into<String>) {
        let name = name.into();
        if let Some(old) = self.names.insert(id, name.clone()) {
            self.by_name.remove(&old);
        }
        self.by_name.insert(name, id);
    }

    pub fn id_of(&self, name: &str) -> Option<RadicalId> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, id: RadicalId) -> Option<&str> {
        self.names.get(&id).map(String::as_str)
    }

    pub fn contains(&self, id: RadicalId) -> bool {
        self.names.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = RadicalId> + '_ {
        self.names.keys().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum IdsTree {
    Leaf(RadicalId),
    Node { op: StructureOp, children: Vec<IdsTree> },
}

impl IdsTree {
    pub fn node(op: StructureOp, children: Vec<IdsTree>) -> Result<Self, DecompositionError> {
        if children.len() != op.arity() {
            return Err(DecompositionError::ArityMismatch {
                op,
                expected: op.arity(),
                found: children.len(),
            });
        }
        Ok(IdsTree::Node { op, children })
    }

    /// Operators plus leaves.
    pub fn node_count(&self) -> usize {
        match self {
            IdsTree::Leaf(_) => 1,
            IdsTree::Node { children, .. } => 1 + children.iter().map(IdsTree::node_count).sum::<usize>(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            IdsTree::Leaf(_) => 1,
            IdsTree::Node { children, .. } => 1 + children.iter().map(IdsTree::depth).max().unwrap_or(0),
        }
    }

    /// Leaves in preorder.
    pub fn leaves(&self) -> Vec<RadicalId> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<RadicalId>) {
        match self {
            IdsTree::Leaf(r) => out.push(*r),
            IdsTree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    /// Space-separated token text using the alphabet's radical names.
    pub fn to_text(&self, alphabet: &RadicalAlphabet) -> Result<String, DecompositionError> {
        let toks = serialize_ids(self)
            .into_iter()
            .map(|t| t.text(alphabet).map(str::to_owned))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(toks.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IdsToken {
    Op(StructureOp),
    Radical(RadicalId),
}

impl IdsToken {
    pub fn text(self, alphabet: &RadicalAlphabet) -> Result<&str, DecompositionError> {
        match self {
            IdsToken::Op(op) => Ok(op.ascii()),
            IdsToken::Radical(r) => alphabet
                .name_of(r)
                .ok_or_else(|| DecompositionError::UnknownToken(r.to_string())),
        }
    }
}

/// Parses a prefix-notation token sequence into a tree, consuming every token.
pub fn parse_ids<S: AsRef<str>>(tokens: &[S], alphabet: &RadicalAlphabet) -> Result<IdsTree, DecompositionError> {
    if tokens.is_empty() {
        return Err(DecompositionError::EmptyIds);
    }
    let mut pos = 0;
    let tree = parse_at(tokens, alphabet, &mut pos)?;
    if pos != tokens.len() {
        return Err(DecompositionError::TrailingTokens(tokens.len() - pos));
    }
    Ok(tree)
}

/// Whitespace-separated convenience form of [`parse_ids`].
pub fn parse_ids_text(text: &str, alphabet: &RadicalAlphabet) -> Result<IdsTree, DecompositionError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    parse_ids(&tokens, alphabet)
}

fn parse_at<S: AsRef<str>>(
    tokens: &[S],
    alphabet: &RadicalAlphabet,
    pos: &mut usize,
) -> Result<IdsTree, DecompositionError> {
    let tok = tokens[*pos].as_ref();
    *pos += 1;
    if let Some(op) = StructureOp::from_token(tok) {
        let mut children = Vec::with_capacity(op.arity());
        for _ in 0..op.arity() {
            if *pos >= tokens.len() {
                return Err(DecompositionError::ArityMismatch {
                    op,
                    expected: op.arity(),
                    found: children.len(),
                });
            }
            children.push(parse_at(tokens, alphabet, pos)?);
        }
        return Ok(IdsTree::Node { op, children });
    }
    alphabet
        .id_of(tok)
        .map(IdsTree::Leaf)
        .ok_or_else(|| DecompositionError::UnknownToken(tok.to_owned()))
}

/// Preorder token sequence.
pub fn serialize_ids(tree: &IdsTree) -> Vec<IdsToken> {
    let mut out = Vec::with_capacity(tree.node_count());
    serialize_into(tree, &mut out);
    out
}

fn serialize_into(tree: &IdsTree, out: &mut Vec<IdsToken>) {
    match tree {
        IdsTree::Leaf(r) => out.push(IdsToken::Radical(*r)),
        IdsTree::Node { op, children } => {
            out.push(IdsToken::Op(*op));
            for c in children {
                serialize_into(c, out);
            }
        }
    }
}

/// Integer labels for radicals and structure operators in the radical encoding.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenVocab {
    radicals: BTreeMap<RadicalId, u32>,
    ops: BTreeMap<StructureOp, u32>,
}

impl TokenVocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Radicals sorted by id get `1..=R`, operators get `R+1..=R+12` in op-id order.
    pub fn contiguous(alphabet: &RadicalAlphabet) -> Self {
        let mut v = Self::new();
        let mut next = 1;
        for id in alphabet.ids() {
            v.radicals.insert(id, next);
            next += 1;
        }
        for op in StructureOp::ALL {
            v.ops.insert(op, next);
            next += 1;
        }
        v
    }

    pub fn insert_radical(&mut self, id: RadicalId, label: u32) {
        self.radicals.insert(id, label);
    }

    pub fn insert_op(&mut self, op: StructureOp, label: u32) {
        self.ops.insert(op, label);
    }

    pub fn label(&self, tok: IdsToken) -> Option<u32> {
        match tok {
            IdsToken::Op(op) => self.ops.get(&op).copied(),
            IdsToken::Radical(r) => self.radicals.get(&r).copied(),
        }
    }

    pub fn token(&self, label: u32) -> Option<IdsToken> {
        self.radicals
            .iter()
            .find(|(_, &l)| l == label)
            .map(|(&r, _)| IdsToken::Radical(r))
            .or_else(|| {
                self.ops
                    .iter()
                    .find(|(_, &l)| l == label)
                    .map(|(&o, _)| IdsToken::Op(o))
            })
    }

    pub fn is_op_label(&self, label: u32) -> bool {
        self.ops.values().any(|&l| l == label)
    }

    /// Largest label in use.
    pub fn max_label(&self) -> u32 {
        self.radicals
            .values()
            .chain(self.ops.values())
            .copied()
            .max()
            .unwrap_or(0)
    }
}

/// Preorder radical encoding.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RadicalEncoding(pub Vec<u32>);

impl RadicalEncoding {
    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn flatten_ids(tree: &IdsTree, vocab: &TokenVocab) -> Result<RadicalEncoding, DecompositionError> {
    serialize_ids(tree)
        .into_iter()
        .map(|t| vocab.label(t).ok_or(DecompositionError::MissingVocabEntry(t)))
        .collect::<Result<Vec<_>, _>>()
        .map(RadicalEncoding)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alpha() -> RadicalAlphabet {
        RadicalAlphabet::numbered(9)
    }

    #[test]
    fn parses_single_operator() {
        let t = parse_ids_text("⊞ r1 r2", &alpha()).unwrap();
        assert_eq!(
            t,
            IdsTree::Node {
                op: StructureOp::LeftRight,
                children: vec![IdsTree::Leaf(RadicalId(1)), IdsTree::Leaf(RadicalId(2))]
            }
        );
    }

    #[test]
    fn parses_leaf_only() {
        assert_eq!(parse_ids_text("r7", &alpha()).unwrap(), IdsTree::Leaf(RadicalId(7)));
    }

    #[test]
    fn parse_errors() {
        let a = alpha();
        assert!(matches!(
            parse_ids_text("⊞ r1", &a),
            Err(DecompositionError::ArityMismatch { .. })
        ));
        assert!(matches!(
            parse_ids_text("r1 r2", &a),
            Err(DecompositionError::TrailingTokens(1))
        ));
        assert!(matches!(parse_ids_text("lr r1 zz", &a), Err(DecompositionError::UnknownToken(t)) if t == "zz"));
        assert!(matches!(parse_ids_text("", &a), Err(DecompositionError::EmptyIds)));
        assert!(matches!(
            parse_ids_text("lmr r1 r2", &a),
            Err(DecompositionError::ArityMismatch {
                expected: 3,
                found: 2,
                ..
            })
        ));
    }

    #[test]
    fn unicode_idc_aliases() {
        let a = alpha();
        assert_eq!(
            parse_ids_text("⿰ r1 r2", &a).unwrap(),
            parse_ids_text("lr r1 r2", &a).unwrap()
        );
        assert_eq!(
            parse_ids_text("⿱ r1 r2", &a).unwrap(),
            parse_ids_text("⊟ r1 r2", &a).unwrap()
        );
        assert_eq!(parse_ids_text("⿲ r1 r2 r3", &a).unwrap().node_count(), 4);
        for op in StructureOp::ALL {
            assert_eq!(StructureOp::from_token(&op.idc().to_string()), Some(op));
            assert_eq!(StructureOp::from_token(op.ascii()), Some(op));
        }
    }

    #[test]
    fn serializes_preorder() {
        let a = alpha();
        let t = IdsTree::node(
            StructureOp::LeftRight,
            vec![
                IdsTree::node(
                    StructureOp::TopBottom,
                    vec![IdsTree::Leaf(RadicalId(1)), IdsTree::Leaf(RadicalId(2))],
                )
                .unwrap(),
                IdsTree::Leaf(RadicalId(3)),
            ],
        )
        .unwrap();
        assert_eq!(
            serialize_ids(&t),
            vec![
                IdsToken::Op(StructureOp::LeftRight),
                IdsToken::Op(StructureOp::TopBottom),
                IdsToken::Radical(RadicalId(1)),
                IdsToken::Radical(RadicalId(2)),
                IdsToken::Radical(RadicalId(3)),
            ]
        );
        assert_eq!(t.to_text(&a).unwrap(), "lr tb r1 r2 r3");
        assert_eq!(
            serialize_ids(&IdsTree::Leaf(RadicalId(7))),
            vec![IdsToken::Radical(RadicalId(7))]
        );
    }

    #[test]
    fn flatten_with_custom_vocab() {
        let mut v = TokenVocab::new();
        v.insert_op(StructureOp::LeftRight, 401);
        v.insert_radical(RadicalId(1), 1);
        v.insert_radical(RadicalId(2), 2);
        let t = parse_ids_text("⊞ r1 r2", &alpha()).unwrap();
        assert_eq!(flatten_ids(&t, &v).unwrap().0, vec![401, 1, 2]);

        let mut v7 = TokenVocab::new();
        v7.insert_radical(RadicalId(7), 7);
        assert_eq!(flatten_ids(&IdsTree::Leaf(RadicalId(7)), &v7).unwrap().0, vec![7]);
        assert!(matches!(
            flatten_ids(&t, &v7),
            Err(DecompositionError::MissingVocabEntry(_))
        ));
    }

    #[test]
    fn five_component_radical_encoding() {
        // Two operators over three radicals: five tokens.
        let a = alpha();
        let t = parse_ids_text("tb lr r1 r2 r3", &a).unwrap();
        let enc = flatten_ids(&t, &TokenVocab::contiguous(&a)).unwrap();
        assert_eq!(enc.len(), 5);
        assert_eq!(enc.len(), t.node_count());
    }

    #[test]
    fn contiguous_vocab_layout() {
        let a = RadicalAlphabet::numbered(20);
        let v = TokenVocab::contiguous(&a);
        assert_eq!(v.label(IdsToken::Radical(RadicalId(1))), Some(1));
        assert_eq!(v.label(IdsToken::Radical(RadicalId(20))), Some(20));
        assert_eq!(v.label(IdsToken::Op(StructureOp::LeftRight)), Some(21));
        assert_eq!(v.label(IdsToken::Op(StructureOp::Overlaid)), Some(32));
        assert_eq!(v.max_label(), 32);
        assert_eq!(v.token(22), Some(IdsToken::Op(StructureOp::TopBottom)));
    }
}
