use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// One of the four input channels of a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModalityKind {
    /// Speech transcript.
    Transcript,
    /// On-screen text recovered by OCR.
    Ocr,
    /// Audio signal.
    Audio,
    /// Video frames.
    Video,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown modality code {0:?} (expected one of T, O, A, V)")]
pub struct UnknownModality(pub String);

impl ModalityKind {
    /// Canonical order used for concatenation and key stacking.
    pub const ALL: [ModalityKind; 4] = [
        ModalityKind::Transcript,
        ModalityKind::Ocr,
        ModalityKind::Audio,
        ModalityKind::Video,
    ];

    pub fn code(self) -> char {
        match self {
            ModalityKind::Transcript => 'T',
            ModalityKind::Ocr => 'O',
            ModalityKind::Audio => 'A',
            ModalityKind::Video => 'V',
        }
    }

    pub fn from_code(c: char) -> Result<Self, UnknownModality> {
        match c {
            'T' => Ok(ModalityKind::Transcript),
            'O' => Ok(ModalityKind::Ocr),
            'A' => Ok(ModalityKind::Audio),
            'V' => Ok(ModalityKind::Video),
            other => Err(UnknownModality(other.to_string())),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalityKind::Transcript => "transcript",
            ModalityKind::Ocr => "on-screen text",
            ModalityKind::Audio => "audio",
            ModalityKind::Video => "video",
        }
    }
}

impl fmt::Display for ModalityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for ModalityKind {
    type Err = UnknownModality;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => ModalityKind::from_code(c),
            _ => Err(UnknownModality(s.to_string())),
        }
    }
}

impl Serialize for ModalityKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.code().to_string())
    }
}

impl<'de> Deserialize<'de> for ModalityKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A subset of modalities, iterated in canonical T, O, A, V order.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModalitySet(u8);

impl ModalitySet {
    pub const EMPTY: ModalitySet = ModalitySet(0);
    pub const FULL: ModalitySet = ModalitySet(0b1111);

    pub fn single(kind: ModalityKind) -> Self {
        ModalitySet(1 << kind.index())
    }

    pub fn from_kinds<I: IntoIterator<Item = ModalityKind>>(kinds: I) -> Self {
        kinds.into_iter().fold(Self::EMPTY, |s, k| s.with(k))
    }

    pub fn with(self, kind: ModalityKind) -> Self {
        ModalitySet(self.0 | (1 << kind.index()))
    }

    pub fn without(self, kind: ModalityKind) -> Self {
        ModalitySet(self.0 & !(1 << kind.index()))
    }

    pub fn contains(self, kind: ModalityKind) -> bool {
        self.0 & (1 << kind.index()) != 0
    }

    pub fn is_subset_of(self, other: ModalitySet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ModalityKind> {
        ModalityKind::ALL.into_iter().filter(move |k| self.contains(*k))
    }

    /// All subsets of `self` with exactly `size` members, in lexicographic
    /// order of the canonical modality sequence (TO, TA, TV, OA, ...).
    pub fn subsets_of_size(self, size: usize) -> Vec<ModalitySet> {
        fn rec(items: &[ModalityKind], size: usize, acc: ModalitySet, out: &mut Vec<ModalitySet>) {
            if acc.len() == size {
                out.push(acc);
                return;
            }
            for (i, k) in items.iter().enumerate() {
                rec(&items[i + 1..], size, acc.with(*k), out);
            }
        }
        let items: Vec<_> = self.iter().collect();
        let mut out = Vec::new();
        rec(&items, size, ModalitySet::EMPTY, &mut out);
        out
    }
}

impl fmt::Display for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in self.iter() {
            write!(f, "{}", k.code())?;
        }
        Ok(())
    }
}

impl fmt::Debug for ModalitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ModalitySet({self})")
    }
}

impl FromStr for ModalitySet {
    type Err = UnknownModality;

    /// Parses strings such as `"TAV"`; order and duplicates are ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .filter(|c| !matches!(c, '+' | ',' | ' '))
            .map(ModalityKind::from_code)
            .collect::<Result<Vec<_>, _>>()
            .map(ModalitySet::from_kinds)
    }
}

impl Serialize for ModalitySet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ModalitySet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for k in ModalityKind::ALL {
            assert_eq!(k.code().to_string().parse::<ModalityKind>().unwrap(), k);
        }
        assert_eq!(ModalityKind::ALL.len(), 4);
        assert!("X".parse::<ModalityKind>().is_err());
        assert!("TO".parse::<ModalityKind>().is_err());
    }

    #[test]
    fn set_display_is_canonical() {
        let s: ModalitySet = "VAT".parse().unwrap();
        assert_eq!(s.to_string(), "TAV");
        assert_eq!(s.len(), 3);
        assert!(!s.contains(ModalityKind::Ocr));
    }

    #[test]
    fn subsets_follow_table_order() {
        let pairs: Vec<String> = ModalitySet::FULL
            .subsets_of_size(2)
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(pairs, ["TO", "TA", "TV", "OA", "OV", "AV"]);
        let triples: Vec<String> = ModalitySet::FULL
            .subsets_of_size(3)
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(triples, ["TOA", "TOV", "TAV", "OAV"]);
    }
}
