//! JSON map files: `{"domain": ["0", "72"], "dots": [["0", "32"], ...]}`.
//!
//! Coordinates are integer or `"p/q"` strings (bare JSON integers are also
//! accepted). `domain` defaults to `["0", "1"]`.

use serde_json::Value;
use thiserror::Error;

use crate::map::{MapError, PLMap};
use crate::rational::{format_rational, parse_rational, ParseRationalError, Rational};

#[derive(Debug, Error)]
pub enum MapFileError {
    #[error("invalid JSON: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("dot {index} ({text}): {reason}")]
    Literal { index: usize, text: String, reason: ParseRationalError },
    #[error("domain: {0}")]
    Domain(ParseRationalError),
    #[error("{reason}, in {text}")]
    Dot { index: usize, text: String, reason: Box<MapError> },
    #[error(transparent)]
    Map(MapError),
}

fn literal(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) if n.is_i64() || n.is_u64() => Some(n.to_string()),
        _ => None,
    }
}

fn pair_text(v: &Value) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn dot_index(e: &MapError) -> Option<usize> {
    match e {
        MapError::NotIncreasing { index, .. } | MapError::ValueOutOfRange { index, .. } => Some(*index),
        _ => None,
    }
}

/// Parses a map file; errors name the offending dot.
pub fn parse_map(text: &str) -> Result<PLMap, MapFileError> {
    let root: Value = serde_json::from_str(text).map_err(|e| MapFileError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = root.as_object().ok_or_else(|| MapFileError::Shape("top level must be an object".into()))?;
    for key in obj.keys() {
        if key != "domain" && key != "dots" {
            return Err(MapFileError::Shape(format!("unknown field `{key}`")));
        }
    }
    let (lo, hi) = match obj.get("domain") {
        None => (Rational::from_integer(0.into()), Rational::from_integer(1.into())),
        Some(Value::Array(d)) if d.len() == 2 => {
            let parse = |v: &Value| -> Result<Rational, MapFileError> {
                let s = literal(v).ok_or_else(|| MapFileError::Shape("domain entries must be rational strings".into()))?;
                parse_rational(&s).map_err(MapFileError::Domain)
            };
            (parse(&d[0])?, parse(&d[1])?)
        }
        Some(_) => return Err(MapFileError::Shape("domain must be a two-element array".into())),
    };
    let raw = obj
        .get("dots")
        .and_then(Value::as_array)
        .ok_or_else(|| MapFileError::Shape("missing `dots` array".into()))?;
    let mut dots = Vec::with_capacity(raw.len());
    for (index, pair) in raw.iter().enumerate() {
        let text = pair_text(pair);
        let items = pair
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| MapFileError::Shape(format!("dot {index} ({text}) must be a pair")))?;
        let mut xy = Vec::with_capacity(2);
        for v in items {
            let s = literal(v).ok_or_else(|| MapFileError::Literal {
                index,
                text: text.clone(),
                reason: ParseRationalError::Malformed(pair_text(v)),
            })?;
            xy.push(parse_rational(&s).map_err(|reason| MapFileError::Literal { index, text: text.clone(), reason })?);
        }
        let y = xy.pop().unwrap();
        let x = xy.pop().unwrap();
        dots.push((x, y));
    }
    PLMap::from_domain(dots, lo, hi).map_err(|e| match dot_index(&e) {
        Some(index) => MapFileError::Dot { index, text: pair_text(&raw[index]), reason: Box::new(e) },
        None => MapFileError::Map(e),
    })
}

/// Canonical map file: dots scaled back to the original domain, reduced `p/q`.
pub fn write_map(f: &PLMap) -> String {
    let s = f.scale();
    let dots: Vec<[String; 2]> = f
        .dots()
        .iter()
        .map(|(x, y)| [format_rational(&(x * s)), format_rational(&(y * s))])
        .collect();
    let value = serde_json::json!({ "domain": ["0", format_rational(s)], "dots": dots });
    serde_json::to_string_pretty(&value).unwrap() + "\n"
}
