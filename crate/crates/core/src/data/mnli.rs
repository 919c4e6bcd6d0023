//! MNLI-format JSON lines.
//!
//! Each line holds `premise`, `hypothesis` and `label`, where the label is
//! `"entailment"`, `"neutral"`, `"contradiction"` or the gold integers
//! 0/1/2 in that order. Neutral rows are dropped. An optional `split` field
//! overrides the caller's default split.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};

use super::example::{Example, Label, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MnliLoad {
    pub examples: Vec<Example>,
    pub dropped_neutral: usize,
}

fn text_field(obj: &serde_json::Map<String, Value>, field: &str, line: usize) -> Result<String> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(Error::Schema {
            line,
            reason: format!("field `{field}` must be a string"),
        }),
        None => Err(Error::Schema {
            line,
            reason: format!("missing field `{field}`"),
        }),
    }
}

/// `None` means neutral.
fn parse_label(v: Option<&Value>, line: usize) -> Result<Option<Label>> {
    let bad = |what: String| Error::Schema {
        line,
        reason: format!("unknown label {what}"),
    };
    match v {
        None => Err(Error::Schema {
            line,
            reason: "missing field `label`".into(),
        }),
        Some(Value::String(s)) => match s.as_str() {
            "entailment" => Ok(Some(Label::Entailment)),
            "neutral" => Ok(None),
            "contradiction" => Ok(Some(Label::Contradiction)),
            _ => Err(bad(format!("`{s}`"))),
        },
        Some(Value::Number(n)) => match n.as_u64() {
            Some(0) => Ok(Some(Label::Entailment)),
            Some(1) => Ok(None),
            Some(2) => Ok(Some(Label::Contradiction)),
            _ => Err(bad(n.to_string())),
        },
        Some(other) => Err(bad(other.to_string())),
    }
}

/// Parses JSONL text. Line numbers in errors are 1-based; blank lines are
/// skipped. uids are `uid_base + line index`.
pub fn parse_mnli_jsonl(text: &str, default_split: Split, uid_base: u64) -> Result<MnliLoad> {
    let mut examples = Vec::new();
    let mut dropped_neutral = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        let Value::Object(obj) = v else {
            return Err(Error::Parse {
                line,
                reason: "expected a JSON object".into(),
            });
        };
        let premise = text_field(&obj, "premise", line)?;
        let hypothesis = text_field(&obj, "hypothesis", line)?;
        let Some(label) = parse_label(obj.get("label"), line)? else {
            dropped_neutral += 1;
            continue;
        };
        let split = match obj.get("split") {
            None => default_split,
            Some(Value::String(s)) => Split::parse(s).ok_or_else(|| Error::Schema {
                line,
                reason: format!("unknown split `{s}`"),
            })?,
            Some(other) => {
                return Err(Error::Schema {
                    line,
                    reason: format!("unknown split {other}"),
                })
            }
        };
        examples.push(Example {
            uid: uid_base + i as u64,
            premise,
            hypothesis,
            label,
            split,
        });
    }
    Ok(MnliLoad {
        examples,
        dropped_neutral,
    })
}

pub fn load_mnli_jsonl(path: &Path, default_split: Split) -> Result<MnliLoad> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mnli_jsonl(&text, default_split, 0)
}

/// One line per example, in the same schema plus `split`.
pub fn to_jsonl(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        let v = json!({
            "premise": e.premise,
            "hypothesis": e.hypothesis,
            "label": e.label.as_str(),
            "split": e.split.as_str(),
        });
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn write_jsonl(path: &Path, examples: &[Example]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(examples).as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neutral_dropped_and_counted() {
        let text = r#"{"premise":"a","hypothesis":"b","label":"entailment"}
{"premise":"a","hypothesis":"c","label":"neutral"}
{"premise":"a","hypothesis":"d","label":2}
"#;
        let r = parse_mnli_jsonl(text, Split::TrainPool, 0).unwrap();
        assert_eq!(r.examples.len(), 2);
        assert_eq!(r.dropped_neutral, 1);
        assert_eq!(r.examples[1].label, Label::Contradiction);
    }

    #[test]
    fn empty_input() {
        let r = parse_mnli_jsonl("", Split::TrainPool, 0).unwrap();
        assert!(r.examples.is_empty());
        assert_eq!(r.dropped_neutral, 0);
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let text = "{\"premise\":\"a\",\"hypothesis\":\"b\",\"label\":0}\n{\"premise\":\"a\",\"label\":0}\n";
        let err = parse_mnli_jsonl(text, Split::TrainPool, 0).unwrap_err();
        assert!(matches!(&err, Error::Schema { line: 2, reason } if reason.contains("hypothesis")));
    }

    #[test]
    fn malformed_line_and_unknown_label() {
        let err = parse_mnli_jsonl("{not json", Split::TrainPool, 0).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_mnli_jsonl(
            "{\"premise\":\"a\",\"hypothesis\":\"b\",\"label\":\"maybe\"}",
            Split::TrainPool,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }));
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let ex = vec![Example {
            uid: 0,
            premise: "p q".into(),
            hypothesis: "q".into(),
            label: Label::Entailment,
            split: Split::ValidationMismatched,
        }];
        let back = parse_mnli_jsonl(&to_jsonl(&ex), Split::TrainPool, 0).unwrap();
        assert_eq!(back.examples, ex);
    }
}
