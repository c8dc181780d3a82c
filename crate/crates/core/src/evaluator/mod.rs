//! Reference interpreter for CobraLang over in-memory databases.
//!
//! Collections have value semantics: assignment copies (lazily, through
//! shared `Rc` storage) and `add`/`put` update only the receiver variable.

pub mod gen;
pub mod interp;
pub mod query;

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use ordered_float::OrderedFloat;
use thiserror::Error;

use crate::fir::rules::ForeignKey;

pub use gen::{random_database, GenConfig};
pub use interp::{run, run_with, Counters, OutputState, RuntimeError};
pub use query::eval_query;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(OrderedFloat<f64>),
    Str(Rc<str>),
    List(Rc<Vec<Value>>),
    Map(Rc<BTreeMap<Value, Value>>),
    Row(Row),
}

/// A result row: column names and values in column order.
pub type Row = Rc<Vec<(String, Value)>>;

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn float(f: f64) -> Value {
        Value::Float(OrderedFloat(f))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(items))
    }

    pub fn rows(rows: &[Row]) -> Value {
        Value::list(rows.iter().cloned().map(Value::Row).collect())
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(f.0),
            _ => None,
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            Value::Null => false,
            Value::Int(i) => *i != 0,
            _ => true,
        }
    }

    /// Column `name` of a row, or of the first row of a list of rows.
    pub fn field(&self, name: &str) -> Option<Value> {
        match self {
            Value::Row(r) => row_get(r, name).cloned(),
            Value::List(items) => match items.first() {
                Some(first) => first.field(name),
                None => Some(Value::Null),
            },
            Value::Null => Some(Value::Null),
            _ => None,
        }
    }

    pub fn from_json(j: &serde_json::Value) -> Value {
        match j {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Value::Int(i),
                None => Value::float(n.as_f64().unwrap_or(f64::NAN)),
            },
            serde_json::Value::String(s) => Value::str(s),
            serde_json::Value::Array(a) => Value::list(a.iter().map(Value::from_json).collect()),
            serde_json::Value::Object(o) => {
                Value::Row(Rc::new(o.iter().map(|(k, v)| (k.clone(), Value::from_json(v))).collect()))
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match self {
            Value::Null => J::Null,
            Value::Bool(b) => J::Bool(*b),
            Value::Int(i) => J::from(*i),
            Value::Float(f) => J::from(f.0),
            Value::Str(s) => J::String(s.to_string()),
            Value::List(l) => J::Array(l.iter().map(Value::to_json).collect()),
            Value::Map(m) => J::Array(
                m.iter()
                    .map(|(k, v)| J::Array(vec![k.to_json(), v.to_json()]))
                    .collect(),
            ),
            Value::Row(r) => J::Object(r.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
        }
    }
}

pub fn row_get<'a>(row: &'a [(String, Value)], name: &str) -> Option<&'a Value> {
    row.iter().find(|(c, _)| c == name).map(|(_, v)| v)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => write!(f, "null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{}", x.0),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::List(l) => {
                write!(f, "[")?;
                for (i, v) in l.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
            Value::Row(r) => {
                write!(f, "(")?;
                for (i, (k, v)) in r.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}={v}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Relation {
    pub schema: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Database {
    pub relations: BTreeMap<String, Relation>,
    pub foreign_keys: Vec<ForeignKey>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DatabaseError {
    #[error("invalid database JSON: {0}")]
    Json(String),
    #[error("relation `{relation}`: {message}")]
    Shape { relation: String, message: String },
}

impl Database {
    /// Parses `{relation: {schema: [...], rows: [[...], ...]}}`.
    pub fn from_json(text: &str) -> Result<Database, DatabaseError> {
        let j: serde_json::Value = serde_json::from_str(text).map_err(|e| DatabaseError::Json(e.to_string()))?;
        let obj = j
            .as_object()
            .ok_or_else(|| DatabaseError::Json("top level must be an object".into()))?;
        let mut db = Database::default();
        for (name, rel) in obj {
            let shape = |m: &str| DatabaseError::Shape {
                relation: name.clone(),
                message: m.to_string(),
            };
            let schema: Vec<String> = rel
                .get("schema")
                .and_then(|s| s.as_array())
                .ok_or_else(|| shape("missing `schema` array"))?
                .iter()
                .map(|c| c.as_str().map(str::to_string).ok_or_else(|| shape("column names must be strings")))
                .collect::<Result<_, _>>()?;
            let mut rows = Vec::new();
            for r in rel.get("rows").and_then(|r| r.as_array()).ok_or_else(|| shape("missing `rows` array"))? {
                let vals = r.as_array().ok_or_else(|| shape("rows must be arrays"))?;
                if vals.len() != schema.len() {
                    return Err(shape("row arity differs from schema"));
                }
                rows.push(vals.iter().map(Value::from_json).collect());
            }
            db.relations.insert(name.clone(), Relation { schema, rows });
        }
        Ok(db)
    }

    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        for (name, rel) in &self.relations {
            obj.insert(
                name.clone(),
                serde_json::json!({
                    "schema": rel.schema,
                    "rows": rel.rows.iter().map(|r| r.iter().map(Value::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                }),
            );
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(obj)).unwrap()
    }

    /// Rows of `relation` as named rows, in stored order.
    pub fn scan(&self, relation: &str) -> Option<Vec<Row>> {
        let rel = self.relations.get(relation)?;
        Some(
            rel.rows
                .iter()
                .map(|r| Rc::new(rel.schema.iter().cloned().zip(r.iter().cloned()).collect()))
                .collect(),
        )
    }
}
