//! In-memory relations, the CSV dialect, and canonical result comparison.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::schema::{Catalog, TableSchema};
use crate::value::{cmp_rows, ColumnKind, Value};

/// Absolute-or-relative tolerance for float cells in result comparison.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("row {row} has {found} values, expected {expected}")]
    Arity {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row}, column `{column}`: value {value} does not match type {expected}")]
    ValueType {
        row: usize,
        column: String,
        value: String,
        expected: String,
    },
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o error reading `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("row {row}, column `{column}`: cannot parse {raw:?} as {kind}")]
    TypeParseError {
        row: usize,
        column: String,
        raw: String,
        kind: ColumnKind,
    },
    #[error("row {row}, column `{column}`: empty cell in a non-nullable column")]
    NullInNonNullable { row: usize, column: String },
    #[error("no data file for table `{0}`")]
    MissingTable(String),
}

/// An immutable table: a schema plus rows in a defined order.
#[derive(Debug, Clone, PartialEq)]
pub struct Relation {
    schema: TableSchema,
    rows: Vec<Vec<Value>>,
}

/// Table name to relation.
pub type Database = HashMap<String, Relation>;

impl Relation {
    /// Builds a relation, checking arity, kinds and nullability of every cell.
    pub fn new(schema: TableSchema, rows: Vec<Vec<Value>>) -> Result<Self, RelationError> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(RelationError::Arity {
                    row: i,
                    found: row.len(),
                    expected: schema.len(),
                });
            }
            for (v, c) in row.iter().zip(&schema.columns) {
                let ok = match v.kind() {
                    None => c.ty.nullable,
                    Some(k) => k == c.ty.kind,
                };
                if !ok {
                    return Err(RelationError::ValueType {
                        row: i,
                        column: c.name.clone(),
                        value: format!("{v:?}"),
                        expected: c.ty.to_string(),
                    });
                }
            }
        }
        Ok(Self { schema, rows })
    }

    /// Builds a relation without validation; callers guarantee the invariants.
    pub(crate) fn new_unchecked(schema: TableSchema, rows: Vec<Vec<Value>>) -> Self {
        Self { schema, rows }
    }

    pub fn empty(schema: TableSchema) -> Self {
        Self {
            schema,
            rows: Vec::new(),
        }
    }

    pub fn schema(&self) -> &TableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn into_rows(self) -> Vec<Vec<Value>> {
        self.rows
    }

    pub fn column_values(&self, name: &str) -> Option<Vec<&Value>> {
        let i = self.schema.index_of(name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    /// Serializes to RFC-4180 CSV with a header row; null becomes an empty cell.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(self.schema.columns.iter().map(|c| c.name.as_str()))
            .expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Value::render))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        out.write_all(self.to_csv().as_bytes())
    }
}

/// Loads CSV data for `schema`.
///
/// Header names match schema columns case-insensitively and in any order;
/// the loaded relation uses schema order. Empty cells are null.
pub fn load_csv(reader: impl Read, schema: &TableSchema) -> Result<Relation, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut mapping = vec![usize::MAX; schema.len()];
    for (pos, h) in header.iter().enumerate() {
        let h = h.trim_start_matches('\u{feff}').trim();
        let idx = schema
            .find_ignore_case(h)
            .ok_or_else(|| CsvError::HeaderMismatch(format!("unexpected column `{h}`")))?;
        if mapping[idx] != usize::MAX {
            return Err(CsvError::HeaderMismatch(format!("column `{h}` appears twice")));
        }
        mapping[idx] = pos;
    }
    if let Some(missing) = mapping.iter().position(|m| *m == usize::MAX) {
        return Err(CsvError::HeaderMismatch(format!(
            "missing column `{}`",
            schema.columns[missing].name
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let mut row = Vec::with_capacity(schema.len());
        for (c, &pos) in schema.columns.iter().zip(&mapping) {
            let raw = record.get(pos).unwrap_or("");
            if raw.is_empty() {
                if !c.ty.nullable {
                    return Err(CsvError::NullInNonNullable {
                        row: row_no,
                        column: c.name.clone(),
                    });
                }
                row.push(Value::Null);
                continue;
            }
            let v = Value::parse_as(c.ty.kind, raw).ok_or_else(|| CsvError::TypeParseError {
                row: row_no,
                column: c.name.clone(),
                raw: raw.to_string(),
                kind: c.ty.kind,
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Relation::new_unchecked(schema.clone(), rows))
}

pub fn load_csv_file(path: impl AsRef<Path>, schema: &TableSchema) -> Result<Relation, CsvError> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|source| CsvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_csv(f, schema)
}

/// Loads `<dir>/<table>.csv` for every catalog table.
pub fn load_database(dir: impl AsRef<Path>, catalog: &Catalog) -> Result<Database, CsvError> {
    let dir = dir.as_ref();
    let mut db = Database::new();
    for table in catalog.tables() {
        let path = dir.join(format!("{}.csv", table.name));
        if !path.exists() {
            return Err(CsvError::MissingTable(table.name.clone()));
        }
        db.insert(table.name.clone(), load_csv_file(&path, table)?);
    }
    Ok(db)
}

fn cells_equal(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) if matches!(a, Value::Float(_)) || matches!(b, Value::Float(_)) => {
            let scale = 1f64.max(x.abs()).max(y.abs());
            (x - y).abs() <= FLOAT_TOLERANCE * scale
        }
        _ => a.total_cmp(b) == Ordering::Equal,
    }
}

fn normalized(rel: &Relation, ordered: bool) -> (Vec<&str>, Vec<Vec<Value>>) {
    let mut order: Vec<usize> = (0..rel.schema.len()).collect();
    order.sort_by(|&a, &b| rel.schema.columns[a].name.cmp(&rel.schema.columns[b].name));
    let names = order
        .iter()
        .map(|&i| rel.schema.columns[i].name.as_str())
        .collect();
    let mut rows: Vec<Vec<Value>> = rel
        .rows
        .iter()
        .map(|r| order.iter().map(|&i| r[i].clone()).collect())
        .collect();
    if !ordered {
        rows.sort_by(|a, b| cmp_rows(a, b));
    }
    (names, rows)
}

/// Canonical result comparison.
///
/// Columns are matched by name, whatever their position. Rows are compared
/// as a sorted multiset unless `ordered` is set (the top-level operator is a
/// sort), in which case row order matters. Float cells match within
/// [`FLOAT_TOLERANCE`].
pub fn canonical_eq(a: &Relation, b: &Relation, ordered: bool) -> bool {
    let (na, ra) = normalized(a, ordered);
    let (nb, rb) = normalized(b, ordered);
    na == nb
        && ra.len() == rb.len()
        && ra
            .iter()
            .zip(&rb)
            .all(|(x, y)| x.iter().zip(y).all(|(p, q)| cells_equal(p, q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Column;
    use crate::value::ColumnType;

    fn schema() -> TableSchema {
        TableSchema::new(
            "results",
            vec![
                Column::new("name", ColumnType::required(ColumnKind::Text)),
                Column::new("test_result", ColumnType::nullable(ColumnKind::Text)),
                Column::new("runs", ColumnType::nullable(ColumnKind::Int)),
                Column::new("day", ColumnType::nullable(ColumnKind::Date)),
            ],
        )
    }

    #[test]
    fn loads_with_reordered_case_insensitive_header() {
        let data = "Test_Result,NAME,runs,day\nOK,truck1,3,2024-01-02\nNOK,\"truck, 2\",,\n";
        let rel = load_csv(data.as_bytes(), &schema()).unwrap();
        assert_eq!(rel.len(), 2);
        assert_eq!(rel.rows()[0][0], Value::text("truck1"));
        assert_eq!(rel.rows()[1][0], Value::text("truck, 2"));
        assert_eq!(rel.rows()[1][2], Value::Null);
        assert_eq!(rel.rows()[1][3], Value::Null);
    }

    #[test]
    fn csv_errors() {
        let s = schema();
        let bad_month = "name,test_result,runs,day\nt,OK,1,2024-13-01\n";
        assert!(matches!(
            load_csv(bad_month.as_bytes(), &s),
            Err(CsvError::TypeParseError { row: 1, .. })
        ));
        let null_name = "name,test_result,runs,day\n,OK,1,\n";
        assert!(matches!(
            load_csv(null_name.as_bytes(), &s),
            Err(CsvError::NullInNonNullable { .. })
        ));
        let missing = "name,test_result,runs\nt,OK,1\n";
        assert!(matches!(load_csv(missing.as_bytes(), &s), Err(CsvError::HeaderMismatch(_))));
        let extra = "name,test_result,runs,day,x\nt,OK,1,,\n";
        assert!(matches!(load_csv(extra.as_bytes(), &s), Err(CsvError::HeaderMismatch(_))));
        let twice = "name,NAME,runs,day\nt,OK,1,\n";
        assert!(matches!(load_csv(twice.as_bytes(), &s), Err(CsvError::HeaderMismatch(_))));
    }

    #[test]
    fn csv_round_trip_preserves_quoting() {
        let data = "name,test_result,runs,day\r\n\"a \"\"quoted\"\" name\",OK,1,2024-01-02\r\n\"multi\nline\",,,\r\n";
        let rel = load_csv(data.as_bytes(), &schema()).unwrap();
        assert_eq!(rel.to_csv(), data);
    }

    #[test]
    fn relation_new_validates() {
        let s = schema();
        assert!(Relation::new(s.clone(), vec![vec![Value::text("a")]]).is_err());
        assert!(Relation::new(
            s.clone(),
            vec![vec![Value::Null, Value::Null, Value::Null, Value::Null]]
        )
        .is_err());
        assert!(Relation::new(
            s,
            vec![vec![Value::text("a"), Value::Null, Value::Float(1.0), Value::Null]]
        )
        .is_err());
    }

    #[test]
    fn canonical_comparison() {
        let t = |cols: &[&str], rows: Vec<Vec<Value>>| {
            let schema = TableSchema::new(
                "t",
                cols.iter()
                    .map(|c| Column::new(*c, ColumnType::nullable(ColumnKind::Float)))
                    .collect(),
            );
            Relation::new_unchecked(schema, rows)
        };
        let a = t(&["x", "y"], vec![vec![Value::Float(1.0), Value::Float(2.0)], vec![Value::Null, Value::Float(0.1 + 0.2)]]);
        let b = t(&["y", "x"], vec![vec![Value::Float(0.3), Value::Null], vec![Value::Float(2.0), Value::Float(1.0)]]);
        assert!(canonical_eq(&a, &b, false));
        assert!(!canonical_eq(&a, &b, true));
        let c = t(&["x", "z"], vec![]);
        assert!(!canonical_eq(&a, &c, false));
        let d = t(&["x", "y"], vec![vec![Value::Float(1.0), Value::Float(2.0)]]);
        assert!(!canonical_eq(&a, &d, false));
    }
}
