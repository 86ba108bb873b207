//! JSON file format for exact mechanisms.
//!
//! ```json
//! { "version": 1, "rounds": 1,
//!   "query_alphabet": [["_"]], "answer_alphabet": [["0", "1"]],
//!   "branches": { "x0": { "|_": { "0": "2/3", "1": "1/3" } },
//!                 "x1": { "|_": { "0": "1/3", "1": "2/3" } } } }
//! ```
//!
//! Branch keys are `<history>|<query>` with the history written as
//! `q0,a0,q1,a1,…` (empty for the first round). Every reachable history
//! must have at least one branch; probabilities are `num/den` strings.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mechanism::{AnswerSpec, FiniteMechanism, Limits, MoveSpec, TreeBuilder};
use crate::scalar::{format_rational, parse_rational};
use crate::Rational;

pub const FORMAT_VERSION: u64 = 1;

/// Keys of the two input branch tables.
pub const INPUT_KEYS: [&str; 2] = ["x0", "x1"];

pub fn mechanism_to_json(m: &FiniteMechanism<Rational>, input_keys: [&str; 2]) -> Value {
    let mut tables = [Map::new(), Map::new()];
    for id in 0..m.nodes().len() {
        let node = m.node(id);
        let alphabet = m.answer_alphabet(node.depth());
        for (mv, mo) in node.moves().iter().enumerate() {
            let key = m.branch_key(id, mv);
            for (b, table) in tables.iter_mut().enumerate() {
                let row: Map<String, Value> = alphabet
                    .iter()
                    .zip(mo.probs(b))
                    .map(|(a, p)| (a.clone(), Value::String(format_rational(p))))
                    .collect();
                table.insert(key.clone(), Value::Object(row));
            }
        }
    }
    let [t0, t1] = tables;
    let mut branches = Map::new();
    branches.insert(input_keys[0].into(), Value::Object(t0));
    branches.insert(input_keys[1].into(), Value::Object(t1));
    let mut out = Map::new();
    out.insert("version".into(), FORMAT_VERSION.into());
    out.insert("rounds".into(), m.rounds().into());
    out.insert(
        "query_alphabet".into(),
        (0..m.rounds())
            .map(|r| Value::from(m.query_alphabet(r).to_vec()))
            .collect(),
    );
    out.insert(
        "answer_alphabet".into(),
        (0..m.rounds())
            .map(|r| Value::from(m.answer_alphabet(r).to_vec()))
            .collect(),
    );
    out.insert("branches".into(), Value::Object(branches));
    Value::Object(out)
}

pub fn mechanism_to_string(m: &FiniteMechanism<Rational>) -> String {
    let mut s = serde_json::to_string_pretty(&mechanism_to_json(m, INPUT_KEYS))
        .expect("JSON values serialize");
    s.push('\n');
    s
}

pub fn save_mechanism(m: &FiniteMechanism<Rational>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, mechanism_to_string(m))?;
    Ok(())
}

pub fn load_mechanism(
    path: impl AsRef<Path>,
    limits: &Limits,
) -> Result<FiniteMechanism<Rational>> {
    let text = std::fs::read_to_string(path.as_ref())?;
    mechanism_from_str(&text, limits)
}

pub fn mechanism_from_str(text: &str, limits: &Limits) -> Result<FiniteMechanism<Rational>> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::ParseAt {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    mechanism_from_json(&value, INPUT_KEYS, limits)
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value> {
    obj.get(name).ok_or_else(|| Error::ParseAt {
        location: name.into(),
        message: "missing field".into(),
    })
}

fn alphabets(value: &Value, name: &str, rounds: usize) -> Result<Vec<Vec<String>>> {
    let bad = |message: String| Error::ParseAt {
        location: name.into(),
        message,
    };
    let rows = value
        .as_array()
        .ok_or_else(|| bad("expected an array per round".into()))?;
    if rows.len() != rounds {
        return Err(bad(format!(
            "{} rounds listed, expected {rounds}",
            rows.len()
        )));
    }
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let labels = row
                .as_array()
                .ok_or_else(|| bad(format!("round {r} is not an array")))?
                .iter()
                .map(|l| {
                    l.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| bad(format!("round {r} has a non-string label")))
                })
                .collect::<Result<Vec<_>>>()?;
            let unique: HashSet<&String> = labels.iter().collect();
            if labels.is_empty() || unique.len() != labels.len() {
                return Err(bad(format!(
                    "round {r} alphabet is empty or has duplicates"
                )));
            }
            Ok(labels)
        })
        .collect()
}

type Table<'a> = HashMap<&'a str, &'a Map<String, Value>>;

fn table<'a>(branches: &'a Map<String, Value>, key: &str) -> Result<Table<'a>> {
    let at = |k: &str| format!("branches.{key}[{k:?}]");
    field(branches, key)?
        .as_object()
        .ok_or_else(|| Error::ParseAt {
            location: format!("branches.{key}"),
            message: "expected an object".into(),
        })?
        .iter()
        .map(|(k, v)| {
            v.as_object()
                .map(|row| (k.as_str(), row))
                .ok_or_else(|| Error::ParseAt {
                    location: at(k),
                    message: "expected an answer map".into(),
                })
        })
        .collect()
}

pub fn mechanism_from_json(
    value: &Value,
    input_keys: [&str; 2],
    limits: &Limits,
) -> Result<FiniteMechanism<Rational>> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Parse("mechanism must be a JSON object".into()))?;
    let version = field(obj, "version")?.as_u64();
    if version != Some(FORMAT_VERSION) {
        return Err(Error::ParseAt {
            location: "version".into(),
            message: format!("unsupported version {version:?}"),
        });
    }
    let rounds = field(obj, "rounds")?
        .as_u64()
        .filter(|r| *r >= 1)
        .ok_or_else(|| Error::ParseAt {
            location: "rounds".into(),
            message: "expected a positive integer".into(),
        })? as usize;
    if rounds > limits.max_rounds {
        return Err(Error::LimitExceeded(format!(
            "{rounds} rounds exceeds the limit of {}",
            limits.max_rounds
        )));
    }
    let queries = alphabets(field(obj, "query_alphabet")?, "query_alphabet", rounds)?;
    let answers = alphabets(field(obj, "answer_alphabet")?, "answer_alphabet", rounds)?;
    let branches = field(obj, "branches")?
        .as_object()
        .ok_or_else(|| Error::ParseAt {
            location: "branches".into(),
            message: "expected an object".into(),
        })?;
    let tables = [
        table(branches, input_keys[0])?,
        table(branches, input_keys[1])?,
    ];
    let keys0: HashSet<&str> = tables[0].keys().copied().collect();
    let keys1: HashSet<&str> = tables[1].keys().copied().collect();
    if let Some(k) = keys0.symmetric_difference(&keys1).next() {
        return Err(Error::Malformed(format!(
            "branch {k:?} is defined for only one input"
        )));
    }
    // history -> queries offered there, in file order
    let mut by_history: HashMap<&str, Vec<&str>> = HashMap::new();
    let file_order = branches[input_keys[0]].as_object().expect("checked above");
    for key in file_order.keys() {
        let (history, query) = key.rsplit_once('|').ok_or_else(|| Error::ParseAt {
            location: format!("branches.{}[{key:?}]", input_keys[0]),
            message: "key must be <history>|<query>".into(),
        })?;
        by_history.entry(history).or_default().push(query);
    }
    let mut used = 0usize;
    let mut builder = TreeBuilder::new(rounds);
    for r in 0..rounds {
        let q: Vec<&str> = queries[r].iter().map(String::as_str).collect();
        let a: Vec<&str> = answers[r].iter().map(String::as_str).collect();
        builder = builder.declare(r, &q, &a);
    }
    let mechanism = builder.build(String::new(), |history: &String, depth| {
        let offered = by_history.get(history.as_str()).ok_or_else(|| {
            Error::Malformed(format!("reachable history {history:?} has no branch"))
        })?;
        let mut specs = Vec::with_capacity(offered.len());
        for query in offered {
            if !queries[depth].iter().any(|l| l == query) {
                return Err(Error::ParseAt {
                    location: format!("branches[{history}|{query}]"),
                    message: format!("query {query:?} is not in the round {depth} query alphabet"),
                });
            }
            let key = format!("{history}|{query}");
            used += 1;
            let rows = [tables[0][key.as_str()], tables[1][key.as_str()]];
            for (b, row) in rows.iter().enumerate() {
                if let Some(extra) = row.keys().find(|a| !answers[depth].contains(a)) {
                    return Err(Error::ParseAt {
                        location: format!("branches.{}[{key:?}]", input_keys[b]),
                        message: format!(
                            "answer {extra:?} is not in the round {depth} answer alphabet"
                        ),
                    });
                }
            }
            let mut answer_specs = Vec::with_capacity(answers[depth].len());
            for label in &answers[depth] {
                let mut mass = [Rational::default(), Rational::default()];
                for (b, row) in rows.iter().enumerate() {
                    if let Some(v) = row.get(label) {
                        let text = v.as_str().ok_or_else(|| Error::ParseAt {
                            location: format!("branches.{}[{key:?}][{label:?}]", input_keys[b]),
                            message: "probability must be a \"num/den\" string".into(),
                        })?;
                        mass[b] = parse_rational(text).map_err(|e| Error::ParseAt {
                            location: format!("branches.{}[{key:?}][{label:?}]", input_keys[b]),
                            message: e.to_string(),
                        })?;
                    }
                }
                let next = if history.is_empty() {
                    format!("{query},{label}")
                } else {
                    format!("{history},{query},{label}")
                };
                answer_specs.push(AnswerSpec {
                    label: label.clone(),
                    mass,
                    next: Some(next),
                });
            }
            specs.push(MoveSpec {
                query: query.to_string(),
                answers: answer_specs,
            });
        }
        Ok(specs)
    })?;
    if used != keys0.len() {
        let reachable: HashSet<String> = (0..mechanism.nodes().len())
            .flat_map(|id| (0..mechanism.node(id).moves().len()).map(move |mv| (id, mv)))
            .map(|(id, mv)| mechanism.branch_key(id, mv))
            .collect();
        let stray = keys0
            .iter()
            .find(|k| !reachable.contains(**k))
            .copied()
            .unwrap_or_default();
        return Err(Error::Malformed(format!(
            "branch {stray:?} is unreachable or not well-typed"
        )));
    }
    mechanism.check_limits(limits)?;
    Ok(mechanism)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::{rr_approx, rr_pure, two_round, TwoRoundParams};
    use crate::prob::Prob;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn rr_round_trip_is_byte_exact() {
        let m = rr_pure(q(2, 1)).unwrap();
        let text = mechanism_to_string(&m);
        let back = mechanism_from_str(&text, &Limits::default()).unwrap();
        assert_eq!(mechanism_to_string(&back), text);
        assert!(text.contains("\"|_\""));
        assert!(text.contains("\"2/3\""));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let vals: [Rational; 10] = std::array::from_fn(|i| q(i as i64, 9));
        let m = two_round(&TwoRoundParams::from_array(vals).unwrap()).unwrap();
        save_mechanism(&m, &path).unwrap();
        let back = load_mechanism(&path, &Limits::default()).unwrap();
        assert_eq!(mechanism_to_string(&back), mechanism_to_string(&m));
        let m = rr_approx(q(3, 1), &Prob::new(q(1, 7)).unwrap()).unwrap();
        save_mechanism(&m, &path).unwrap();
        assert_eq!(
            mechanism_to_string(&load_mechanism(&path, &Limits::default()).unwrap()),
            mechanism_to_string(&m)
        );
    }

    fn rr_text(p: &str) -> String {
        format!(
            r#"{{"version":1,"rounds":1,"query_alphabet":[["_"]],"answer_alphabet":[["0","1"]],
            "branches":{{"x0":{{"|_":{{"0":"{p}","1":"1/3"}}}},"x1":{{"|_":{{"0":"1/3","1":"2/3"}}}}}}}}"#
        )
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let err = mechanism_from_str(&rr_text("3/2"), &Limits::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidProbability { .. }), "{err:?}");
    }

    #[test]
    fn rejects_non_normalized_branch_naming_history() {
        let vals: [Rational; 10] = std::array::from_fn(|_| q(1, 2));
        let m = two_round(&TwoRoundParams::from_array(vals).unwrap()).unwrap();
        let mut v = mechanism_to_json(&m, INPUT_KEYS);
        v["branches"]["x0"]["_,0|0"]["0"] = "49/100".into();
        let err = mechanism_from_json(&v, INPUT_KEYS, &Limits::default()).unwrap_err();
        match err {
            Error::NotNormalized { context, .. } => assert!(context.contains("_,0|0"), "{context}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_ragged_and_missing_branches() {
        let ragged = r#"{"version":1,"rounds":1,"query_alphabet":[["_","a"]],"answer_alphabet":[["0","1"]],
            "branches":{"x0":{"|_":{"0":"1/2","1":"1/2"},"|a":{"0":"1/2","1":"1/2"}},"x1":{"|_":{"0":"1/2","1":"1/2"}}}}"#;
        assert!(matches!(
            mechanism_from_str(ragged, &Limits::default()),
            Err(Error::Malformed(_))
        ));
        let vals: [Rational; 10] = std::array::from_fn(|_| q(1, 2));
        let m = two_round(&TwoRoundParams::from_array(vals).unwrap()).unwrap();
        let mut v = mechanism_to_json(&m, INPUT_KEYS);
        for b in INPUT_KEYS {
            v["branches"][b]
                .as_object_mut()
                .unwrap()
                .shift_remove("_,1|0");
            v["branches"][b]
                .as_object_mut()
                .unwrap()
                .shift_remove("_,1|1");
        }
        let err = mechanism_from_json(&v, INPUT_KEYS, &Limits::default()).unwrap_err();
        assert!(err.to_string().contains("_,1"), "{err}");
    }

    #[test]
    fn parse_errors_carry_locations() {
        let err =
            mechanism_from_str("{\"version\": 1,\n \"rounds\": }", &Limits::default()).unwrap_err();
        assert!(
            matches!(err, Error::ParseAt { ref location, .. } if location.starts_with("line 2")),
            "{err:?}"
        );
        let err = mechanism_from_str(&rr_text("two thirds"), &Limits::default()).unwrap_err();
        assert!(
            matches!(err, Error::ParseAt { ref location, .. } if location.contains("x0")),
            "{err:?}"
        );
        let err = mechanism_from_str(
            &rr_text("2/3").replace("\"version\":1", "\"version\":2"),
            &Limits::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ParseAt { ref location, .. } if location == "version"));
    }

    #[test]
    fn load_enforces_limits() {
        let tight = Limits {
            max_alphabet: 1,
            ..Limits::default()
        };
        assert!(matches!(
            mechanism_from_str(&rr_text("2/3"), &tight),
            Err(Error::LimitExceeded(_))
        ));
    }
}
