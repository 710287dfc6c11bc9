//! Demographic group keys.

use alloc::string::{String, ToString};
use core::fmt;
use core::str::FromStr;

/// Age at which a speaker moves from the young to the old bucket.
pub const DEFAULT_SPLIT_AGE: u32 = 40;

/// Opaque language label, stored lowercased.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Language(String);

impl Language {
    pub fn new(label: &str) -> Self {
        Language(label.trim().to_lowercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Language {
    fn from(s: &str) -> Self {
        Language::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Token that is not one of the recognised enumerated values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownToken(pub String);

impl fmt::Display for UnknownToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unrecognized token {:?}", self.0)
    }
}

impl FromStr for Gender {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            _ => Err(UnknownToken(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBucket {
    Young,
    Old,
}

impl AgeBucket {
    pub const ALL: [AgeBucket; 2] = [AgeBucket::Young, AgeBucket::Old];

    /// `young` iff `age < split_age`; an age equal to the split is old.
    pub fn from_age(age_years: u32, split_age: u32) -> Self {
        if age_years < split_age {
            AgeBucket::Young
        } else {
            AgeBucket::Old
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgeBucket::Young => "young",
            AgeBucket::Old => "old",
        }
    }
}

impl fmt::Display for AgeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgeBucket {
    type Err = UnknownToken;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "young" | "y" => Ok(AgeBucket::Young),
            "old" | "o" => Ok(AgeBucket::Old),
            _ => Err(UnknownToken(s.to_string())),
        }
    }
}

/// One (language, gender, age bucket) cell.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupKey {
    pub language: Language,
    pub gender: Gender,
    pub age_bucket: AgeBucket,
}

impl GroupKey {
    pub fn new(language: Language, gender: Gender, age_bucket: AgeBucket) -> Self {
        GroupKey {
            language,
            gender,
            age_bucket,
        }
    }

    /// The four (gender, bucket) cells of a language, in key order.
    pub fn cells(language: &Language) -> [GroupKey; 4] {
        [
            GroupKey::new(language.clone(), Gender::Female, AgeBucket::Young),
            GroupKey::new(language.clone(), Gender::Female, AgeBucket::Old),
            GroupKey::new(language.clone(), Gender::Male, AgeBucket::Young),
            GroupKey::new(language.clone(), Gender::Male, AgeBucket::Old),
        ]
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}-{}", self.language, self.age_bucket, self.gender)
    }
}
