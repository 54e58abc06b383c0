//! The stroke encoding dictionary and Levenshtein rectification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{CharacterDb, StrokeEncoding};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DictionaryError {
    #[error("stroke dictionary is empty")]
    EmptyDictionary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LookupResult {
    Unique(u32),
    Ambiguous(BTreeSet<u32>),
    Absent,
}

/// How the nearest-neighbour set is reduced before candidates are collected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RectifyMode {
    /// Every dictionary encoding at the minimal distance.
    All,
    /// Only the lexicographically first encoding at the minimal distance.
    First,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RectifiedSet {
    pub encodings: Vec<StrokeEncoding>,
    pub distance: usize,
}

/// Map from stroke encoding to the characters sharing it, keyed by the
/// canonical digit string so iteration order is lexicographic.
#[derive(Clone, Debug, Default)]
pub struct EncodingDictionary {
    entries: BTreeMap<String, (StrokeEncoding, BTreeSet<u32>)>,
    n_chars: usize,
}

pub fn build_stroke_dictionary(db: &CharacterDb) -> EncodingDictionary {
    let mut entries: BTreeMap<String, (StrokeEncoding, BTreeSet<u32>)> = BTreeMap::new();
    for r in db.records() {
        entries
            .entry(r.strokes.digits())
            .or_insert_with(|| (r.strokes.clone(), BTreeSet::new()))
            .1
            .insert(r.char_id);
    }
    EncodingDictionary {
        entries,
        n_chars: db.len(),
    }
}

impl EncodingDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn char_count(&self) -> usize {
        self.n_chars
    }

    pub fn entries(&self) -> impl Iterator<Item = (&StrokeEncoding, &BTreeSet<u32>)> {
        self.entries.values().map(|(e, s)| (e, s))
    }

    pub fn chars_for(&self, enc: &StrokeEncoding) -> Option<&BTreeSet<u32>> {
        self.entries.get(&enc.digits()).map(|(_, s)| s)
    }

    pub fn lookup(&self, enc: &StrokeEncoding) -> LookupResult {
        match self.chars_for(enc) {
            None => LookupResult::Absent,
            Some(s) if s.len() == 1 => LookupResult::Unique(*s.iter().next().unwrap()),
            Some(s) => LookupResult::Ambiguous(s.clone()),
        }
    }

    /// The query itself when present, otherwise every entry at the minimal
    /// edit distance (in lexicographic order). `First` keeps only the first.
    pub fn rectified_set(&self, enc: &StrokeEncoding, mode: RectifyMode) -> Result<RectifiedSet, DictionaryError> {
        if self.entries.is_empty() {
            return Err(DictionaryError::EmptyDictionary);
        }
        if self.entries.contains_key(&enc.digits()) {
            return Ok(RectifiedSet {
                encodings: vec![enc.clone()],
                distance: 0,
            });
        }
        let q = enc.labels();
        let mut best = usize::MAX;
        let mut nearest: Vec<&StrokeEncoding> = Vec::new();
        for (e, _) in self.entries.values() {
            // |len(a) - len(b)| is a lower bound on the distance.
            if q.len().abs_diff(e.len()) > best {
                continue;
            }
            let d = levenshtein_bounded(&q, &e.labels(), best);
            match d {
                Some(d) if d < best => {
                    best = d;
                    nearest.clear();
                    nearest.push(e);
                }
                Some(d) if d == best => nearest.push(e),
                _ => {}
            }
        }
        if mode == RectifyMode::First {
            nearest.truncate(1);
        }
        Ok(RectifiedSet {
            encodings: nearest.into_iter().cloned().collect(),
            distance: best,
        })
    }

    /// Union of the characters behind every encoding, ascending by char_id.
    pub fn candidate_chars(&self, rs: &RectifiedSet) -> Vec<u32> {
        let mut out = BTreeSet::new();
        for e in &rs.encodings {
            if let Some(s) = self.chars_for(e) {
                out.extend(s.iter().copied());
            }
        }
        out.into_iter().collect()
    }

    /// `digits<TAB>id[,id...]`, one line per entry, lexicographic.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (digits, (_, ids)) in &self.entries {
            let ids: Vec<String> = ids.iter().map(u32::to_string).collect();
            let _ = writeln!(out, "{digits}\t{}", ids.join(","));
        }
        out
    }
}

/// Unit-cost edit distance between two label sequences.
pub fn levenshtein_labels(a: &[u8], b: &[u8]) -> usize {
    levenshtein_bounded(a, b, usize::MAX).expect("unbounded")
}

pub fn levenshtein(a: &StrokeEncoding, b: &StrokeEncoding) -> usize {
    levenshtein_labels(&a.labels(), &b.labels())
}

/// Two-row DP that gives up (returns `None`) once every cell in a row
/// exceeds `bound`.
fn levenshtein_bounded(a: &[u8], b: &[u8], bound: usize) -> Option<usize> {
    if a.is_empty() || b.is_empty() {
        let d = a.len().max(b.len());
        return (d <= bound).then_some(d);
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        let mut row_min = cur[0];
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
            row_min = row_min.min(cur[j + 1]);
        }
        if row_min > bound {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[b.len()];
    (d <= bound).then_some(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::CharacterDb;
    use proptest::prelude::*;

    fn enc(s: &str) -> StrokeEncoding {
        s.parse().unwrap()
    }

    // Full-matrix recursion-style DP, written independently of the two-row version.
    fn oracle(a: &[u8], b: &[u8]) -> usize {
        let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in m.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            m[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                m[i][j] = (m[i - 1][j] + 1).min(m[i][j - 1] + 1).min(m[i - 1][j - 1] + c);
            }
        }
        m[a.len()][b.len()]
    }

    fn fixture() -> CharacterDb {
        CharacterDb::parse(
            "1\tA\t31234\tr1\n\
             3\tB\t1212\tlr r2 r3\n\
             9\tC\t1212\ttb r2 r3\n\
             12\tD\t1213\tr4\n\
             7\tE\t5\tr5\n",
        )
        .unwrap()
    }

    #[test]
    fn builds_partition() {
        let db = fixture();
        let d = build_stroke_dictionary(&db);
        assert_eq!(d.len(), 4);
        assert_eq!(d.entries().map(|(_, s)| s.len()).sum::<usize>(), db.len());
        assert_eq!(d.lookup(&enc("31234")), LookupResult::Unique(1));
        assert_eq!(d.lookup(&enc("1212")), LookupResult::Ambiguous([3, 9].into()));
        assert_eq!(d.lookup(&enc("11111")), LookupResult::Absent);
    }

    #[test]
    fn empty_db() {
        let d = build_stroke_dictionary(&CharacterDb::default());
        assert!(d.is_empty());
        assert_eq!(d.lookup(&enc("1")), LookupResult::Absent);
        assert_eq!(
            d.rectified_set(&enc("1"), RectifyMode::All),
            Err(DictionaryError::EmptyDictionary)
        );
    }

    #[test]
    fn distance_examples() {
        assert_eq!(levenshtein(&enc("312342511121"), &enc("312342511121")), 0);
        assert_eq!(levenshtein(&enc("312342511121"), &enc("31234251112")), 1);
        assert_eq!(levenshtein(&enc("1"), &enc("22")), 2);
    }

    #[test]
    fn rectification() {
        let d = build_stroke_dictionary(&fixture());
        let rs = d.rectified_set(&enc("1212"), RectifyMode::All).unwrap();
        assert_eq!(
            rs,
            RectifiedSet {
                encodings: vec![enc("1212")],
                distance: 0
            }
        );

        // 1211 is one substitution from both 1212 and 1213.
        let rs = d.rectified_set(&enc("1211"), RectifyMode::All).unwrap();
        assert_eq!(rs.distance, 1);
        assert_eq!(rs.encodings, vec![enc("1212"), enc("1213")]);
        assert_eq!(d.candidate_chars(&rs), vec![3, 9, 12]);
        let first = d.rectified_set(&enc("1211"), RectifyMode::First).unwrap();
        assert_eq!(first.encodings, vec![enc("1212")]);
        assert_eq!(d.candidate_chars(&first), vec![3, 9]);

        // Unique nearest entry at distance 2.
        let rs = d.rectified_set(&enc("555"), RectifyMode::All).unwrap();
        assert_eq!(
            rs,
            RectifiedSet {
                encodings: vec![enc("5")],
                distance: 2
            }
        );
    }

    #[test]
    fn candidate_union_sorted() {
        let d = build_stroke_dictionary(&fixture());
        let rs = RectifiedSet {
            encodings: vec![enc("5")],
            distance: 0,
        };
        assert_eq!(d.candidate_chars(&rs), vec![7]);
    }

    #[test]
    fn dump_format() {
        let d = build_stroke_dictionary(&fixture());
        assert_eq!(d.dump(), "1212\t3,9\n1213\t12\n31234\t1\n5\t7\n");
    }

    fn labels(max: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(1u8..=5, 1..=max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]

        #[test]
        fn matches_oracle(a in labels(12), b in labels(12)) {
            prop_assert_eq!(levenshtein_labels(&a, &b), oracle(&a, &b));
        }

        #[test]
        fn metric_axioms(a in labels(10), b in labels(10), c in labels(10)) {
            let ab = levenshtein_labels(&a, &b);
            prop_assert_eq!(levenshtein_labels(&a, &a), 0);
            prop_assert_eq!(ab, levenshtein_labels(&b, &a));
            prop_assert!(levenshtein_labels(&a, &c) <= ab + levenshtein_labels(&b, &c));
            if ab == 0 { prop_assert_eq!(&a, &b); }
        }

        #[test]
        fn rectified_is_minimal(q in labels(8)) {
            let d = build_stroke_dictionary(&fixture());
            let qe = StrokeEncoding::from_labels(&q).unwrap();
            let rs = d.rectified_set(&qe, RectifyMode::All).unwrap();
            let min = d.entries().map(|(e, _)| oracle(&q, &e.labels())).min().unwrap();
            prop_assert_eq!(rs.distance, min);
            let brute: Vec<StrokeEncoding> = d.entries().filter(|(e, _)| oracle(&q, &e.labels()) == min).map(|(e, _)| e.clone()).collect();
            prop_assert_eq!(&rs.encodings, &brute);
            prop_assert_eq!(rs.distance == 0, d.chars_for(&qe).is_some());
            let first = d.rectified_set(&qe, RectifyMode::First).unwrap();
            let all_c: BTreeSet<u32> = d.candidate_chars(&rs).into_iter().collect();
            prop_assert!(d.candidate_chars(&first).iter().all(|c| all_c.contains(c)));
        }
    }
}
