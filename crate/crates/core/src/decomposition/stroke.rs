//! Five-class stroke encoding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DecompositionError;

/// One of the five stroke categories: 1 horizontal, 2 vertical,
/// 3 left-falling, 4 right-falling, 5 turning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StrokeClass(u8);

impl StrokeClass {
    pub const HORIZONTAL: StrokeClass = StrokeClass(1);
    pub const VERTICAL: StrokeClass = StrokeClass(2);
    pub const LEFT_FALLING: StrokeClass = StrokeClass(3);
    pub const RIGHT_FALLING: StrokeClass = StrokeClass(4);
    pub const TURNING: StrokeClass = StrokeClass(5);

    pub const ALL: [StrokeClass; 5] = [
        Self::HORIZONTAL,
        Self::VERTICAL,
        Self::LEFT_FALLING,
        Self::RIGHT_FALLING,
        Self::TURNING,
    ];

    pub fn new(label: u8) -> Result<Self, DecompositionError> {
        if (1..=5).contains(&label) {
            Ok(StrokeClass(label))
        } else {
            Err(DecompositionError::InvalidStrokeLabel(label))
        }
    }

    pub fn label(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "horizontal",
            2 => "vertical",
            3 => "left-falling",
            4 => "right-falling",
            _ => "turning",
        }
    }
}

/// The stroke-level decomposition of a character: one class per stroke in
/// writing order. Never empty.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StrokeEncoding(Vec<StrokeClass>);

impl StrokeEncoding {
    pub fn new(classes: Vec<StrokeClass>) -> Result<Self, DecompositionError> {
        if classes.is_empty() {
            return Err(DecompositionError::EmptyStrokeEncoding);
        }
        Ok(StrokeEncoding(classes))
    }

    /// Builds an encoding from raw labels, validating each one.
    pub fn from_labels(labels: &[u8]) -> Result<Self, DecompositionError> {
        let classes = labels
            .iter()
            .map(|&l| StrokeClass::new(l))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(classes)
    }

    pub fn classes(&self) -> &[StrokeClass] {
        &self.0
    }

    pub fn labels(&self) -> Vec<u8> {
        self.0.iter().map(|c| c.0).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Canonical digit string, e.g. `"31234"`.
    pub fn digits(&self) -> String {
        self.0.iter().map(|c| char::from(b'0' + c.0)).collect()
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a StrokeEncoding>) -> Result<Self, DecompositionError> {
        let classes: Vec<StrokeClass> = parts.into_iter().flat_map(|p| p.0.iter().copied()).collect();
        Self::new(classes)
    }
}

impl FromStr for StrokeEncoding {
    type Err = DecompositionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut labels = Vec::with_capacity(s.len());
        for ch in s.chars() {
            let d = ch.to_digit(10).ok_or(DecompositionError::InvalidStrokeDigit(ch))?;
            labels.push(d as u8);
        }
        Self::from_labels(&labels)
    }
}

impl fmt::Display for StrokeEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digits())
    }
}

impl TryFrom<String> for StrokeEncoding {
    type Error = DecompositionError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<StrokeEncoding> for String {
    fn from(value: StrokeEncoding) -> Self {
        value.digits()
    }
}

/// A base stroke from the 32-stroke inventory and the category it folds into.
#[derive(Clone, Copy, Debug)]
pub struct BaseStroke {
    pub id: u8,
    pub pinyin: &'static str,
    pub hanzi: &'static str,
    pub class: u8,
}

const fn base(id: u8, pinyin: &'static str, hanzi: &'static str, class: u8) -> BaseStroke {
    BaseStroke {
        id,
        pinyin,
        hanzi,
        class,
    }
}

/// 32 base strokes folded into the five categories. Rising (tí) folds into
/// horizontal, dot (diǎn) into right-falling, vertical hook into vertical,
/// and every compound stroke with a turn into turning.
pub const BASE_STROKES: [BaseStroke; 32] = [
    base(1, "héng", "横", 1),
    base(2, "tí", "提", 1),
    base(3, "shù", "竖", 2),
    base(4, "shùgōu", "竖钩", 2),
    base(5, "piě", "撇", 3),
    base(6, "diǎn", "点", 4),
    base(7, "nà", "捺", 4),
    base(8, "héngzhé", "横折", 5),
    base(9, "héngpiě", "横撇", 5),
    base(10, "hénggōu", "横钩", 5),
    base(11, "héngzhégōu", "横折钩", 5),
    base(12, "héngzhétí", "横折提", 5),
    base(13, "héngzhéwān", "横折弯", 5),
    base(14, "héngzhézhé", "横折折", 5),
    base(15, "héngxiégōu", "横斜钩", 5),
    base(16, "héngzhéwāngōu", "横折弯钩", 5),
    base(17, "héngpiěwāngōu", "横撇弯钩", 5),
    base(18, "héngzhézhépiě", "横折折撇", 5),
    base(19, "héngzhézhézhé", "横折折折", 5),
    base(20, "héngzhézhézhégōu", "横折折折钩", 5),
    base(21, "shùtí", "竖提", 5),
    base(22, "shùzhé", "竖折", 5),
    base(23, "shùwān", "竖弯", 5),
    base(24, "shùwāngōu", "竖弯钩", 5),
    base(25, "shùzhépiě", "竖折撇", 5),
    base(26, "shùzhézhé", "竖折折", 5),
    base(27, "shùzhézhégōu", "竖折折钩", 5),
    base(28, "piědiǎn", "撇点", 5),
    base(29, "piězhé", "撇折", 5),
    base(30, "wāngōu", "弯钩", 5),
    base(31, "xiégōu", "斜钩", 5),
    base(32, "wògōu", "卧钩", 5),
];

pub fn map_base_stroke(base_id: u32) -> Result<StrokeClass, DecompositionError> {
    if !(1..=32).contains(&base_id) {
        return Err(DecompositionError::BaseStrokeOutOfRange(base_id));
    }
    StrokeClass::new(BASE_STROKES[base_id as usize - 1].class)
}

/// Looks a base stroke up by its toneless or toned pinyin name.
pub fn base_stroke_by_name(name: &str) -> Option<&'static BaseStroke> {
    let wanted = strip_tones(name);
    BASE_STROKES
        .iter()
        .find(|b| strip_tones(b.pinyin) == wanted || b.hanzi == name)
}

fn strip_tones(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'ā' | 'á' | 'ǎ' | 'à' => 'a',
            'ē' | 'é' | 'ě' | 'è' => 'e',
            'ī' | 'í' | 'ǐ' | 'ì' => 'i',
            'ō' | 'ó' | 'ǒ' | 'ò' => 'o',
            'ū' | 'ú' | 'ǔ' | 'ù' => 'u',
            other => other,
        })
        .collect()
}
