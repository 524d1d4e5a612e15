use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which of the two labeling problems a corpus or model addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Complementary entities with compatibility polarity.
    Compat,
    /// Function targets and function words with satisfiability polarity.
    Satisf,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Compat => "compat",
            Task::Satisf => "satisf",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "compat" => Ok(Task::Compat),
            "satisf" => Ok(Task::Satisf),
            other => Err(format!("unknown task `{other}` (expected compat or satisf)")),
        }
    }
}

/// Compatible/satisfiable (1), incompatible/unsatisfiable (2), uncertain (3).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Polarity {
    Positive = 1,
    Negative = 2,
    Uncertain = 3,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Uncertain];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl From<Polarity> for u8 {
    fn from(p: Polarity) -> u8 {
        p.code()
    }
}

impl TryFrom<u8> for Polarity {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Polarity::Positive),
            2 => Ok(Polarity::Negative),
            3 => Ok(Polarity::Uncertain),
            _ => Err(format!("polarity must be 1, 2 or 3, got {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelClass {
    Other,
    Target(Polarity),
    FuncWord(Polarity),
}

impl LabelClass {
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            LabelClass::Other => None,
            LabelClass::Target(p) | LabelClass::FuncWord(p) => Some(p),
        }
    }
}

const COMPAT: [(&str, LabelClass); 4] = [
    ("O", LabelClass::Other),
    ("C", LabelClass::Target(Polarity::Positive)),
    ("I", LabelClass::Target(Polarity::Negative)),
    ("U", LabelClass::Target(Polarity::Uncertain)),
];

const SATISF: [(&str, LabelClass); 7] = [
    ("O", LabelClass::Other),
    ("S", LabelClass::Target(Polarity::Positive)),
    ("UN", LabelClass::Target(Polarity::Negative)),
    ("U", LabelClass::Target(Polarity::Uncertain)),
    ("F-S", LabelClass::FuncWord(Polarity::Positive)),
    ("F-UN", LabelClass::FuncWord(Polarity::Negative)),
    ("F-U", LabelClass::FuncWord(Polarity::Uncertain)),
];

/// Ordered label enumeration of a task. Index 0 is always `O`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelSpace {
    task: Task,
    entries: &'static [(&'static str, LabelClass)],
}

impl LabelSpace {
    pub const OTHER: usize = 0;

    pub fn for_task(task: Task) -> Self {
        let entries: &'static [_] = match task {
            Task::Compat => &COMPAT,
            Task::Satisf => &SATISF,
        };
        LabelSpace { task, entries }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|(n, _)| *n)
    }

    pub fn name(&self, index: usize) -> Option<&'static str> {
        self.entries.get(index).map(|(n, _)| *n)
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| *n == name)
    }

    pub fn class(&self, index: usize) -> Option<LabelClass> {
        self.entries.get(index).map(|(_, c)| *c)
    }

    /// Label index carrying the given semantic class, if the space has one.
    pub fn label_for(&self, class: LabelClass) -> Option<usize> {
        self.entries.iter().position(|(_, c)| *c == class)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_spaces_are_exact() {
        let c = LabelSpace::for_task(Task::Compat);
        assert_eq!(c.names().collect::<Vec<_>>(), ["O", "C", "I", "U"]);
        let s = LabelSpace::for_task(Task::Satisf);
        assert_eq!(
            s.names().collect::<Vec<_>>(),
            ["O", "S", "UN", "U", "F-S", "F-UN", "F-U"]
        );
        assert_eq!(s.class(5), Some(LabelClass::FuncWord(Polarity::Negative)));
        assert_eq!(s.label_for(LabelClass::Target(Polarity::Uncertain)), Some(3));
        assert_eq!(c.label_for(LabelClass::FuncWord(Polarity::Positive)), None);
    }

    #[test]
    fn polarity_serializes_as_code() {
        assert_eq!(serde_json::to_string(&Polarity::Negative).unwrap(), "2");
        let p: Polarity = serde_json::from_str("3").unwrap();
        assert_eq!(p, Polarity::Uncertain);
        assert!(serde_json::from_str::<Polarity>("4").is_err());
    }
}
