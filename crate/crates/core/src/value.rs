//! Scalar values and column types.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// The kind of data a column holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Bool,
    Int,
    Float,
    Text,
    Date,
}

impl ColumnKind {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnKind::Int | ColumnKind::Float)
    }

    /// Kinds that `min`/`max` and ordering comparisons accept.
    pub fn is_ordered(self) -> bool {
        matches!(
            self,
            ColumnKind::Int | ColumnKind::Float | ColumnKind::Text | ColumnKind::Date
        )
    }

    /// Whether values of the two kinds may be compared with each other.
    pub fn comparable_with(self, other: ColumnKind) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }

    /// The common kind of two comparable kinds (int and float promote to float).
    pub fn unify(self, other: ColumnKind) -> Option<ColumnKind> {
        if self == other {
            Some(self)
        } else if self.is_numeric() && other.is_numeric() {
            Some(ColumnKind::Float)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Bool => "bool",
            ColumnKind::Int => "int",
            ColumnKind::Float => "float",
            ColumnKind::Text => "text",
            ColumnKind::Date => "date",
        }
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ColumnType {
    pub kind: ColumnKind,
    pub nullable: bool,
}

impl ColumnType {
    pub fn new(kind: ColumnKind, nullable: bool) -> Self {
        Self { kind, nullable }
    }

    pub fn required(kind: ColumnKind) -> Self {
        Self::new(kind, false)
    }

    pub fn nullable(kind: ColumnKind) -> Self {
        Self::new(kind, true)
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.nullable {
            write!(f, "{}?", self.kind)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

/// A single cell value.
///
/// `PartialEq` is structural (`Int(1) != Float(1.0)`); query semantics use
/// [`Value::total_cmp`] and [`Value::sql_eq`], which promote integers to
/// floats when the two kinds meet.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Date(NaiveDate),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn kind(&self) -> Option<ColumnKind> {
        Some(match self {
            Value::Null => return None,
            Value::Bool(_) => ColumnKind::Bool,
            Value::Int(_) => ColumnKind::Int,
            Value::Float(_) => ColumnKind::Float,
            Value::Text(_) => ColumnKind::Text,
            Value::Date(_) => ColumnKind::Date,
        })
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int(_) | Value::Float(_) => 2,
            Value::Text(_) => 3,
            Value::Date(_) => 4,
        }
    }

    /// Total order: null < bool < numbers < text (bytewise) < date.
    pub fn total_cmp(&self, other: &Value) -> Ordering {
        match (self, other) {
            (Value::Null, Value::Null) => Ordering::Equal,
            (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
            (Value::Int(a), Value::Int(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            (Value::Date(a), Value::Date(b)) => a.cmp(b),
            (a, b) if a.rank() == 2 && b.rank() == 2 => {
                let (x, y) = (a.as_f64().unwrap(), b.as_f64().unwrap());
                x.partial_cmp(&y).unwrap_or_else(|| x.total_cmp(&y))
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }

    /// Predicate comparison: `None` when either side is null (the comparison
    /// is then false) or the kinds are not comparable.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        if self.is_null() || other.is_null() || self.rank() != other.rank() {
            return None;
        }
        Some(self.total_cmp(other))
    }

    /// Equality as used by predicates: false whenever a null is involved.
    pub fn sql_eq(&self, other: &Value) -> bool {
        self.compare(other) == Some(Ordering::Equal)
    }

    /// Converts an integer to a float; every other value is returned as is.
    pub fn promote_to_float(self) -> Value {
        match self {
            Value::Int(i) => Value::Float(i as f64),
            v => v,
        }
    }

    /// Parses a cell of the given kind. Empty input is not handled here.
    pub fn parse_as(kind: ColumnKind, raw: &str) -> Option<Value> {
        match kind {
            ColumnKind::Bool => match raw.to_ascii_lowercase().as_str() {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            ColumnKind::Int => raw.trim().parse().ok().map(Value::Int),
            ColumnKind::Float => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Float),
            ColumnKind::Text => Some(Value::Text(raw.to_string())),
            ColumnKind::Date => parse_date(raw.trim()).map(Value::Date),
        }
    }

    /// Renders the value the way result tables serialize it; null is empty.
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) => format_float(*x),
            Value::Text(s) => s.clone(),
            Value::Date(d) => format_date(*d),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            other => f.write_str(&other.render()),
        }
    }
}

/// Shortest round-tripping decimal form, always carrying a fraction part.
pub fn format_float(x: f64) -> String {
    let s = x.to_string();
    if s.contains('.') || !x.is_finite() {
        s
    } else {
        format!("{s}.0")
    }
}

/// Parses strictly `YYYY-MM-DD`.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let b = raw.as_bytes();
    if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
        return None;
    }
    let digits = |r: std::ops::Range<usize>| -> Option<u32> {
        let part = &raw[r];
        if part.bytes().all(|c| c.is_ascii_digit()) {
            part.parse().ok()
        } else {
            None
        }
    };
    let year = digits(0..4)?;
    let month = digits(5..7)?;
    let day = digits(8..10)?;
    NaiveDate::from_ymd_opt(year as i32, month, day)
}

pub fn format_date(d: NaiveDate) -> String {
    format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day())
}

/// A row wrapper whose equality and hash follow [`Value::total_cmp`], so that
/// set operators treat `null` as equal to `null` and `1` as equal to `1.0`.
#[derive(Debug, Clone)]
pub struct RowKey(pub Vec<Value>);

impl PartialEq for RowKey {
    fn eq(&self, other: &Self) -> bool {
        self.0.len() == other.0.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.total_cmp(b) == Ordering::Equal)
    }
}

impl Eq for RowKey {}

impl Hash for RowKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for v in &self.0 {
            hash_value(v, state);
        }
    }
}

fn hash_value<H: Hasher>(v: &Value, state: &mut H) {
    v.rank().hash(state);
    match v {
        Value::Null => {}
        Value::Bool(b) => b.hash(state),
        Value::Int(_) | Value::Float(_) => {
            let x = v.as_f64().unwrap();
            // -0.0 and 0.0 compare equal
            let x = if x == 0.0 { 0.0 } else { x };
            x.to_bits().hash(state);
        }
        Value::Text(s) => s.hash(state),
        Value::Date(d) => d.hash(state),
    }
}

/// Lexicographic comparison of two rows under [`Value::total_cmp`].
pub fn cmp_rows(a: &[Value], b: &[Value]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.total_cmp(y);
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn date_parsing_is_strict() {
        assert!(parse_date("2024-02-29").is_some());
        assert!(parse_date("2024-13-01").is_none());
        assert!(parse_date("2023-02-29").is_none());
        assert!(parse_date("2024-1-01").is_none());
        assert!(parse_date("24-01-011").is_none());
        assert!(parse_date("+024-01-01").is_none());
    }

    #[test]
    fn total_order_across_kinds() {
        let ordered = [
            Value::Null,
            Value::Bool(false),
            Value::Bool(true),
            Value::Int(-3),
            Value::Float(0.5),
            Value::Int(1),
            Value::text("B"),
            Value::text("a"),
            Value::Date(parse_date("2020-01-01").unwrap()),
        ];
        for w in ordered.windows(2) {
            assert_eq!(w[0].total_cmp(&w[1]), Ordering::Less, "{w:?}");
        }
        assert_eq!(Value::Int(2).total_cmp(&Value::Float(2.0)), Ordering::Equal);
    }

    #[test]
    fn comparisons_with_null_are_false() {
        assert!(!Value::Null.sql_eq(&Value::Null));
        assert!(!Value::Int(1).sql_eq(&Value::Null));
        assert!(Value::Int(1).sql_eq(&Value::Float(1.0)));
        assert!(!Value::text("1").sql_eq(&Value::Int(1)));
    }

    #[test]
    fn row_keys_hash_numeric_promotion() {
        let mut set = HashSet::new();
        set.insert(RowKey(vec![Value::Int(1), Value::Null]));
        assert!(set.contains(&RowKey(vec![Value::Float(1.0), Value::Null])));
        assert!(!set.contains(&RowKey(vec![Value::Float(1.5), Value::Null])));
        set.insert(RowKey(vec![Value::Float(-0.0)]));
        assert!(set.contains(&RowKey(vec![Value::Float(0.0)])));
    }

    #[test]
    fn float_rendering_keeps_a_fraction() {
        assert_eq!(format_float(1.0), "1.0");
        assert_eq!(format_float(-0.25), "-0.25");
        assert_eq!(format_float(1e21), "1000000000000000000000.0");
    }

    #[test]
    fn cell_parsing() {
        assert_eq!(Value::parse_as(ColumnKind::Bool, "TRUE"), Some(Value::Bool(true)));
        assert_eq!(Value::parse_as(ColumnKind::Int, "x"), None);
        assert_eq!(Value::parse_as(ColumnKind::Float, "NaN"), None);
        assert_eq!(Value::parse_as(ColumnKind::Float, "3"), Some(Value::Float(3.0)));
    }
}
