use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Verdict;

/// Five-way human judgment of one answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    MakesSense = 1,
    SometimesMakesSense = 2,
    DoesNotMakeSense = 3,
    Nonsense = 4,
    Unfamiliar = 5,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::MakesSense,
        Label::SometimesMakesSense,
        Label::DoesNotMakeSense,
        Label::Nonsense,
        Label::Unfamiliar,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Self::ALL.get(code.checked_sub(1)? as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::MakesSense => "makes_sense",
            Label::SometimesMakesSense => "sometimes_makes_sense",
            Label::DoesNotMakeSense => "does_not_make_sense",
            Label::Nonsense => "nonsense",
            Label::Unfamiliar => "unfamiliar",
        }
    }

    /// Human-readable caption used by the annotation interface.
    pub fn caption(self) -> &'static str {
        match self {
            Label::MakesSense => "Makes sense",
            Label::SometimesMakesSense => "Sometimes makes sense",
            Label::DoesNotMakeSense => "Does not make sense or incorrect",
            Label::Nonsense => "The first part and the second part are not related; or not enough information to judge",
            Label::Unfamiliar => "Unfamiliar to me to judge",
        }
    }
}

pub fn map_label(label: Label) -> Verdict {
    match label {
        Label::MakesSense | Label::SometimesMakesSense => Verdict::Correct,
        Label::DoesNotMakeSense | Label::Nonsense => Verdict::Incorrect,
        Label::Unfamiliar => Verdict::Unfamiliar,
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        if let Ok(code) = key.parse::<u64>() {
            return Label::from_code(code).ok_or_else(|| format!("label code out of range: {s}"));
        }
        Label::ALL
            .into_iter()
            .find(|l| l.name().replace('_', "") == key)
            .ok_or_else(|| format!("unknown label: {s}"))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Code(u64),
            Name(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Code(c) => Label::from_code(c)
                .ok_or_else(|| serde::de::Error::custom(format!("label code out of range: {c}"))),
            Repr::Name(n) => n.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub answer_id: String,
    pub annotator_id: String,
    pub label: Label,
    #[serde(default)]
    pub timestamp: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mapping_table() {
        let verdicts: Vec<Verdict> = Label::ALL.into_iter().map(map_label).collect();
        assert_eq!(
            verdicts,
            [
                Verdict::Correct,
                Verdict::Correct,
                Verdict::Incorrect,
                Verdict::Incorrect,
                Verdict::Unfamiliar
            ]
        );
    }

    #[test]
    fn parses_names_and_codes() {
        for l in Label::ALL {
            assert_eq!(l.name().parse::<Label>().unwrap(), l);
            assert_eq!(l.code().to_string().parse::<Label>().unwrap(), l);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<Label>(&json).unwrap(), l);
            assert_eq!(serde_json::from_str::<Label>(&l.code().to_string()).unwrap(), l);
        }
        assert_eq!("Makes Sense".parse::<Label>().unwrap(), Label::MakesSense);
        assert!(serde_json::from_str::<Label>("6").is_err());
        assert!(serde_json::from_str::<Label>("0").is_err());
        assert!("maybe".parse::<Label>().is_err());
    }
}
