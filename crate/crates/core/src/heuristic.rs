//! Nielsen's ten usability heuristics and the 0-4 severity scale.

use alloc::borrow::Cow;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Identifier of one of the ten heuristics, always in `1..=10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeuristicId(u8);

impl HeuristicId {
    pub fn new(id: i64) -> Result<Self> {
        if (1..=10).contains(&id) {
            Ok(Self(id as u8))
        } else {
            Err(Error::InvalidHeuristic(id))
        }
    }

    pub const fn get(self) -> u8 {
        self.0
    }

    pub fn heuristic(self) -> &'static Heuristic {
        &CATALOG[self.0 as usize - 1]
    }

    pub fn name(self) -> &'static str {
        self.heuristic().name
    }

    pub fn batch(self) -> Batch {
        self.heuristic().batch
    }

    /// All ten ids in catalog order.
    pub fn all() -> impl Iterator<Item = HeuristicId> {
        (1..=10u8).map(HeuristicId)
    }
}

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for HeuristicId {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for HeuristicId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let raw = i64::deserialize(d)?;
        HeuristicId::new(raw).map_err(serde::de::Error::custom)
    }
}

/// The two prompt batches the catalog is split into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Batch {
    FirstFive,
    SecondFive,
}

impl Batch {
    pub const BOTH: [Batch; 2] = [Batch::FirstFive, Batch::SecondFive];

    /// Heuristics assigned to this batch, in catalog order.
    pub fn heuristics(self) -> impl Iterator<Item = &'static Heuristic> {
        CATALOG.iter().filter(move |h| h.batch == self)
    }

    pub fn contains(self, id: HeuristicId) -> bool {
        id.batch() == self
    }

    /// The selector phrase substituted into the evaluation prompt.
    pub fn selector(self) -> &'static str {
        match self {
            Batch::FirstFive => "first 5",
            Batch::SecondFive => "second 5",
        }
    }

    /// Short slug used in file names and issue ids.
    pub fn slug(self) -> &'static str {
        match self {
            Batch::FirstFive => "first",
            Batch::SecondFive => "second",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Heuristic {
    pub id: HeuristicId,
    pub name: &'static str,
    pub batch: Batch,
}

const fn entry(id: u8, name: &'static str) -> Heuristic {
    Heuristic {
        id: HeuristicId(id),
        name,
        batch: if id <= 5 { Batch::FirstFive } else { Batch::SecondFive },
    }
}

static CATALOG: [Heuristic; 10] = [
    entry(1, "Visibility of system status"),
    entry(2, "Match between system and the real world"),
    entry(3, "User control and freedom"),
    entry(4, "Consistency and standards"),
    entry(5, "Error prevention"),
    entry(6, "Recognition rather than recall"),
    entry(7, "Flexibility and efficiency of use"),
    entry(8, "Aesthetic and minimalist design"),
    entry(9, "Help users recognize, diagnose and recover from errors"),
    entry(10, "Help and documentation"),
];

/// The fixed catalog in canonical order.
pub fn heuristic_catalog() -> &'static [Heuristic] {
    &CATALOG
}

#[derive(Serialize, Deserialize)]
struct HeuristicRepr<'a> {
    id: HeuristicId,
    #[serde(borrow)]
    name: Cow<'a, str>,
    batch: Batch,
}

impl Serialize for Heuristic {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        HeuristicRepr {
            id: self.id,
            name: Cow::Borrowed(self.name),
            batch: self.batch,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Heuristic {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let repr = <HeuristicRepr<'_> as Deserialize>::deserialize(d)?;
        let known = *repr.id.heuristic();
        if known.name != repr.name || known.batch != repr.batch {
            return Err(serde::de::Error::custom(alloc::format!(
                "heuristic {} does not match the catalog entry",
                repr.id
            )));
        }
        Ok(known)
    }
}

/// A 0-4 severity rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Severity(u8);

const SEVERITY_LABELS: [&str; 5] = [
    "I don't agree that this is a usability problem at all.",
    "Cosmetic problem only: need not be fixed unless extra time is available on project.",
    "Minor usability problem: fixing this should be given low priority.",
    "Major usability problem: important to fix, so should be given high priority.",
    "Usability catastrophe: imperative to fix this before product can be released.",
];

impl Severity {
    pub const ZERO: Severity = Severity(0);

    pub fn new(rating: i64) -> Result<Self> {
        if (0..=4).contains(&rating) {
            Ok(Self(rating as u8))
        } else {
            Err(Error::InvalidSeverity(rating))
        }
    }

    pub const fn rating(self) -> u8 {
        self.0
    }

    pub fn label(self) -> &'static str {
        SEVERITY_LABELS[self.0 as usize]
    }

    pub fn is_problem(self) -> bool {
        self.0 != 0
    }

    pub fn all() -> impl Iterator<Item = Severity> {
        (0..=4u8).map(Severity)
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Severity {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Severity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let raw = i64::deserialize(d)?;
        Severity::new(raw).map_err(serde::de::Error::custom)
    }
}

/// Canonical label for a rating.
pub fn severity_label(rating: i64) -> Result<&'static str> {
    Severity::new(rating).map(Severity::label)
}
