//! Table schemas and the catalog file.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::is_identifier;
use crate::value::{ColumnKind, ColumnType};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
    pub description: String,
    pub synonyms: Vec<String>,
}

impl Column {
    pub fn new(name: impl Into<String>, ty: ColumnType) -> Self {
        Self {
            name: name.into(),
            ty,
            description: String::new(),
            synonyms: Vec::new(),
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_synonyms<I, S>(mut self, synonyms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.synonyms = synonyms.into_iter().map(Into::into).collect();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<Column>,
}

impl TableSchema {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Self {
        Self {
            name: name.into(),
            columns,
        }
    }

    /// Case-sensitive column lookup.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Case-insensitive column lookup.
    pub fn find_ignore_case(&self, name: &str) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.index_of(name).map(|i| &self.columns[i])
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Checks identifier syntax and case-insensitive uniqueness of column names.
    pub fn validate(&self) -> Result<(), CatalogError> {
        if !is_identifier(&self.name) {
            return Err(CatalogError::InvalidIdentifier(self.name.clone()));
        }
        for (i, c) in self.columns.iter().enumerate() {
            if !is_identifier(&c.name) {
                return Err(CatalogError::InvalidIdentifier(c.name.clone()));
            }
            if self.columns[..i]
                .iter()
                .any(|p| p.name.eq_ignore_ascii_case(&c.name))
            {
                return Err(CatalogError::DuplicateColumn {
                    table: self.name.clone(),
                    column: c.name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed catalog document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("`{0}` is not a valid identifier (reserved word or bad characters)")]
    InvalidIdentifier(String),
    #[error("duplicate table `{0}`")]
    DuplicateTable(String),
    #[error("duplicate column `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },
}

/// The relational model handed to the interpreter and used for validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Catalog {
    tables: IndexMap<String, TableSchema>,
    pub domain_context: String,
}

impl Catalog {
    pub fn new(domain_context: impl Into<String>) -> Self {
        Self {
            tables: IndexMap::new(),
            domain_context: domain_context.into(),
        }
    }

    pub fn with_table(mut self, table: TableSchema) -> Result<Self, CatalogError> {
        self.add_table(table)?;
        Ok(self)
    }

    pub fn add_table(&mut self, table: TableSchema) -> Result<(), CatalogError> {
        table.validate()?;
        if self.find_table(&table.name).is_some() {
            return Err(CatalogError::DuplicateTable(table.name));
        }
        self.tables.insert(table.name.clone(), table);
        Ok(())
    }

    /// Exact (case-sensitive) table lookup.
    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.get(name)
    }

    pub fn find_table(&self, name: &str) -> Option<&TableSchema> {
        self.tables
            .values()
            .find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableSchema> {
        self.tables.values()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let doc: CatalogDoc = serde_json::from_str(text)?;
        let mut catalog = Catalog::new(doc.domain_context);
        for (name, table) in doc.tables {
            let columns = table
                .columns
                .into_iter()
                .map(|(cname, c)| Column {
                    name: cname,
                    ty: ColumnType::new(c.kind, c.nullable),
                    description: c.description,
                    synonyms: c.synonyms,
                })
                .collect();
            catalog.add_table(TableSchema::new(name, columns))?;
        }
        Ok(catalog)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let doc = CatalogDoc {
            domain_context: self.domain_context.clone(),
            tables: self
                .tables
                .values()
                .map(|t| {
                    let columns = t
                        .columns
                        .iter()
                        .map(|c| {
                            (
                                c.name.clone(),
                                ColumnDoc {
                                    kind: c.ty.kind,
                                    nullable: c.ty.nullable,
                                    description: c.description.clone(),
                                    synonyms: c.synonyms.clone(),
                                },
                            )
                        })
                        .collect();
                    (t.name.clone(), TableDoc { columns })
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("catalog serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    #[serde(default)]
    domain_context: String,
    tables: IndexMap<String, TableDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDoc {
    columns: IndexMap<String, ColumnDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnDoc {
    #[serde(rename = "type")]
    kind: ColumnKind,
    #[serde(default)]
    nullable: bool,
    #[serde(default)]
    description: String,
    #[serde(default)]
    synonyms: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
        "domain_context": "Closed-track validation runs.",
        "tables": {
            "results": {
                "columns": {
                    "name": {"type": "text", "nullable": false, "description": "truck name", "synonyms": ["truck", "trucks"]},
                    "test_result": {"type": "text", "nullable": true, "description": "OK or NOK", "synonyms": []},
                    "run_date": {"type": "date"}
                }
            }
        }
    }"#;

    #[test]
    fn loads_catalog_document_in_order() {
        let cat = Catalog::from_json(DOC).unwrap();
        let t = cat.table("results").unwrap();
        assert_eq!(t.column_names(), ["name", "test_result", "run_date"]);
        assert_eq!(t.columns[0].synonyms, ["truck", "trucks"]);
        assert!(t.columns[1].ty.nullable);
        assert!(!t.columns[2].ty.nullable);
        assert_eq!(cat.domain_context, "Closed-track validation runs.");
        assert_eq!(Catalog::from_json(&cat.to_json()).unwrap(), cat);
    }

    #[test]
    fn rejects_case_insensitive_duplicates() {
        let bad = r#"{"tables": {"t": {"columns": {"a": {"type": "int"}, "A": {"type": "int"}}}}}"#;
        assert!(matches!(
            Catalog::from_json(bad),
            Err(CatalogError::DuplicateColumn { .. })
        ));
        let bad = r#"{"tables": {"t": {"columns": {}}, "T": {"columns": {}}}}"#;
        assert!(matches!(
            Catalog::from_json(bad),
            Err(CatalogError::DuplicateTable(_))
        ));
    }

    #[test]
    fn rejects_reserved_and_malformed_identifiers() {
        for name in ["select", "1abc", "a-b", ""] {
            let doc = format!(r#"{{"tables": {{"t": {{"columns": {{"{name}": {{"type": "int"}}}}}}}}}}"#);
            assert!(
                matches!(Catalog::from_json(&doc), Err(CatalogError::InvalidIdentifier(_))),
                "{name}"
            );
        }
    }

    #[test]
    fn unknown_type_is_an_error() {
        let bad = r#"{"tables": {"t": {"columns": {"a": {"type": "decimal"}}}}}"#;
        assert!(matches!(Catalog::from_json(bad), Err(CatalogError::Json(_))));
    }
}
