use serde::{Deserialize, Serialize};

/// Binary NLI label. Neutral is dropped at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Entailment,
    Contradiction,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Entailment, Label::Contradiction];

    pub fn index(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Contradiction => 1,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Entailment => Label::Contradiction,
            Label::Contradiction => Label::Entailment,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainPool,
    ValidationMatched,
    ValidationMismatched,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::TrainPool => "train_pool",
            Split::ValidationMatched => "validation_matched",
            Split::ValidationMismatched => "validation_mismatched",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train_pool" => Some(Split::TrainPool),
            "validation_matched" => Some(Split::ValidationMatched),
            "validation_mismatched" => Some(Split::ValidationMismatched),
            _ => None,
        }
    }
}

/// One premise/hypothesis pair. `uid` is the identity used for query
/// exclusion, so duplicate texts stay distinct examples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub uid: u64,
    pub premise: String,
    pub hypothesis: String,
    pub label: Label,
    pub split: Split,
}
