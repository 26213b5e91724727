//! Relational algebra syntax tree and its canonical text form.
//!
//! The operator set is the classical one (selection, projection, rename,
//! union, difference, product, join, intersection, division, grouping with
//! aggregates) plus three extended operators: `distinct`, `sort` and `limit`.
//! All binary operators use prefix-call syntax, e.g. `union(a, b)`.

use std::fmt;

use crate::value::{format_date, format_float, Value};

/// Reserved words of the RA grammar. They can never be identifiers.
pub const KEYWORDS: &[&str] = &[
    "select", "project", "rename", "distinct", "sort", "limit", "groupby", "union", "minus",
    "intersect", "times", "divide", "join", "and", "or", "not", "in", "contains", "lower", "true",
    "false", "null", "count", "sum", "avg", "min", "max", "as", "asc", "desc",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// `[A-Za-z_][A-Za-z0-9_]*` and not a keyword.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_') && !is_keyword(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Union,
    Minus,
    Intersect,
    Times,
    Divide,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 5] = [
        BinaryOp::Union,
        BinaryOp::Minus,
        BinaryOp::Intersect,
        BinaryOp::Times,
        BinaryOp::Divide,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            BinaryOp::Union => "union",
            BinaryOp::Minus => "minus",
            BinaryOp::Intersect => "intersect",
            BinaryOp::Times => "times",
            BinaryOp::Divide => "divide",
        }
    }

    /// Union, minus and intersect require union-compatible inputs.
    pub fn is_set_op(self) -> bool {
        matches!(self, BinaryOp::Union | BinaryOp::Minus | BinaryOp::Intersect)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Column(String),
    Literal(Value),
    Lower(Box<Term>),
}

impl Term {
    pub fn column(name: impl Into<String>) -> Self {
        Term::Column(name.into())
    }

    pub fn lit(v: Value) -> Self {
        Term::Literal(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
    Not(Box<Predicate>),
    Compare { op: CmpOp, left: Term, right: Term },
    In { column: String, values: Vec<Value> },
    Contains { term: Term, needle: String },
}

impl Predicate {
    pub fn cmp(op: CmpOp, left: Term, right: Term) -> Self {
        Predicate::Compare { op, left, right }
    }

    /// `column == value`.
    pub fn col_eq(column: &str, value: Value) -> Self {
        Predicate::cmp(CmpOp::Eq, Term::column(column), Term::Literal(value))
    }

    pub fn and(self, other: Predicate) -> Self {
        Predicate::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Predicate) -> Self {
        Predicate::Or(Box::new(self), Box::new(other))
    }

    pub fn negate(self) -> Self {
        Predicate::Not(Box::new(self))
    }

    /// Flattens nested `and` into its conjuncts, left to right.
    pub fn conjuncts(&self) -> Vec<&Predicate> {
        let mut out = Vec::new();
        fn walk<'a>(p: &'a Predicate, out: &mut Vec<&'a Predicate>) {
            match p {
                Predicate::And(l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Left-associated conjunction of the given predicates.
    pub fn conjoin(parts: impl IntoIterator<Item = Predicate>) -> Option<Predicate> {
        parts.into_iter().reduce(Predicate::and)
    }

    /// Every column the predicate references, in first-occurrence order.
    pub fn columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit_columns(&mut |c| {
            if !out.contains(&c) {
                out.push(c);
            }
        });
        out
    }

    fn visit_columns<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Predicate::And(l, r) | Predicate::Or(l, r) => {
                l.visit_columns(f);
                r.visit_columns(f);
            }
            Predicate::Not(p) => p.visit_columns(f),
            Predicate::Compare { left, right, .. } => {
                left.visit_columns(f);
                right.visit_columns(f);
            }
            Predicate::In { column, .. } => f(column),
            Predicate::Contains { term, .. } => term.visit_columns(f),
        }
    }

    /// Rewrites every column reference through `f`.
    pub fn map_columns(&self, f: &mut impl FnMut(&str) -> String) -> Predicate {
        match self {
            Predicate::And(l, r) => {
                Predicate::And(Box::new(l.map_columns(f)), Box::new(r.map_columns(f)))
            }
            Predicate::Or(l, r) => {
                Predicate::Or(Box::new(l.map_columns(f)), Box::new(r.map_columns(f)))
            }
            Predicate::Not(p) => Predicate::Not(Box::new(p.map_columns(f))),
            Predicate::Compare { op, left, right } => Predicate::Compare {
                op: *op,
                left: left.map_columns(f),
                right: right.map_columns(f),
            },
            Predicate::In { column, values } => Predicate::In {
                column: f(column),
                values: values.clone(),
            },
            Predicate::Contains { term, needle } => Predicate::Contains {
                term: term.map_columns(f),
                needle: needle.clone(),
            },
        }
    }

    /// Fallible variant of [`Predicate::map_columns`].
    pub fn try_map_columns<E>(
        &self,
        f: &mut impl FnMut(&str) -> Result<String, E>,
    ) -> Result<Predicate, E> {
        Ok(match self {
            Predicate::And(l, r) => Predicate::And(
                Box::new(l.try_map_columns(f)?),
                Box::new(r.try_map_columns(f)?),
            ),
            Predicate::Or(l, r) => Predicate::Or(
                Box::new(l.try_map_columns(f)?),
                Box::new(r.try_map_columns(f)?),
            ),
            Predicate::Not(p) => Predicate::Not(Box::new(p.try_map_columns(f)?)),
            Predicate::Compare { op, left, right } => Predicate::Compare {
                op: *op,
                left: left.try_map_columns(f)?,
                right: right.try_map_columns(f)?,
            },
            Predicate::In { column, values } => Predicate::In {
                column: f(column)?,
                values: values.clone(),
            },
            Predicate::Contains { term, needle } => Predicate::Contains {
                term: term.try_map_columns(f)?,
                needle: needle.clone(),
            },
        })
    }
}

impl Term {
    fn visit_columns<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Term::Column(c) => f(c),
            Term::Literal(_) => {}
            Term::Lower(t) => t.visit_columns(f),
        }
    }

    fn map_columns(&self, f: &mut impl FnMut(&str) -> String) -> Term {
        match self {
            Term::Column(c) => Term::Column(f(c)),
            Term::Literal(v) => Term::Literal(v.clone()),
            Term::Lower(t) => Term::Lower(Box::new(t.map_columns(f))),
        }
    }

    fn try_map_columns<E>(&self, f: &mut impl FnMut(&str) -> Result<String, E>) -> Result<Term, E> {
        Ok(match self {
            Term::Column(c) => Term::Column(f(c)?),
            Term::Literal(v) => Term::Literal(v.clone()),
            Term::Lower(t) => Term::Lower(Box::new(t.try_map_columns(f)?)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFn {
    CountStar,
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFn {
    pub fn keyword(self) -> &'static str {
        match self {
            AggFn::CountStar | AggFn::Count => "count",
            AggFn::Sum => "sum",
            AggFn::Avg => "avg",
            AggFn::Min => "min",
            AggFn::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub func: AggFn,
    /// Absent only for `count(*)`.
    pub input: Option<String>,
    pub output: String,
}

impl Aggregate {
    pub fn count_star(output: impl Into<String>) -> Self {
        Self {
            func: AggFn::CountStar,
            input: None,
            output: output.into(),
        }
    }

    pub fn new(func: AggFn, input: impl Into<String>, output: impl Into<String>) -> Self {
        Self {
            func,
            input: Some(input.into()),
            output: output.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortKey {
    pub column: String,
    pub descending: bool,
}

impl SortKey {
    pub fn asc(column: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            descending: false,
        }
    }

    pub fn desc(column: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            descending: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RaExpr {
    Scan(String),
    Select {
        predicate: Predicate,
        input: Box<RaExpr>,
    },
    Project {
        columns: Vec<String>,
        input: Box<RaExpr>,
    },
    Rename {
        pairs: Vec<(String, String)>,
        input: Box<RaExpr>,
    },
    Binary {
        op: BinaryOp,
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    Join {
        predicate: Predicate,
        left: Box<RaExpr>,
        right: Box<RaExpr>,
    },
    GroupBy {
        keys: Vec<String>,
        aggregates: Vec<Aggregate>,
        input: Box<RaExpr>,
    },
    Distinct(Box<RaExpr>),
    Sort {
        keys: Vec<SortKey>,
        input: Box<RaExpr>,
    },
    Limit {
        count: u64,
        input: Box<RaExpr>,
    },
}

impl RaExpr {
    pub fn scan(table: impl Into<String>) -> Self {
        RaExpr::Scan(table.into())
    }

    pub fn select(predicate: Predicate, input: RaExpr) -> Self {
        RaExpr::Select {
            predicate,
            input: Box::new(input),
        }
    }

    pub fn project<S: Into<String>>(columns: impl IntoIterator<Item = S>, input: RaExpr) -> Self {
        RaExpr::Project {
            columns: columns.into_iter().map(Into::into).collect(),
            input: Box::new(input),
        }
    }

    pub fn rename<A: Into<String>, B: Into<String>>(
        pairs: impl IntoIterator<Item = (A, B)>,
        input: RaExpr,
    ) -> Self {
        RaExpr::Rename {
            pairs: pairs
                .into_iter()
                .map(|(a, b)| (a.into(), b.into()))
                .collect(),
            input: Box::new(input),
        }
    }

    pub fn binary(op: BinaryOp, left: RaExpr, right: RaExpr) -> Self {
        RaExpr::Binary {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn union(left: RaExpr, right: RaExpr) -> Self {
        Self::binary(BinaryOp::Union, left, right)
    }

    pub fn minus(left: RaExpr, right: RaExpr) -> Self {
        Self::binary(BinaryOp::Minus, left, right)
    }

    pub fn intersect(left: RaExpr, right: RaExpr) -> Self {
        Self::binary(BinaryOp::Intersect, left, right)
    }

    pub fn times(left: RaExpr, right: RaExpr) -> Self {
        Self::binary(BinaryOp::Times, left, right)
    }

    pub fn divide(left: RaExpr, right: RaExpr) -> Self {
        Self::binary(BinaryOp::Divide, left, right)
    }

    pub fn join(predicate: Predicate, left: RaExpr, right: RaExpr) -> Self {
        RaExpr::Join {
            predicate,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn group_by<S: Into<String>>(
        keys: impl IntoIterator<Item = S>,
        aggregates: Vec<Aggregate>,
        input: RaExpr,
    ) -> Self {
        RaExpr::GroupBy {
            keys: keys.into_iter().map(Into::into).collect(),
            aggregates,
            input: Box::new(input),
        }
    }

    pub fn distinct(input: RaExpr) -> Self {
        RaExpr::Distinct(Box::new(input))
    }

    pub fn sort(keys: Vec<SortKey>, input: RaExpr) -> Self {
        RaExpr::Sort {
            keys,
            input: Box::new(input),
        }
    }

    pub fn limit(count: u64, input: RaExpr) -> Self {
        RaExpr::Limit {
            count,
            input: Box::new(input),
        }
    }

    /// Operator name as written in the grammar.
    pub fn operator_name(&self) -> &'static str {
        match self {
            RaExpr::Scan(_) => "scan",
            RaExpr::Select { .. } => "select",
            RaExpr::Project { .. } => "project",
            RaExpr::Rename { .. } => "rename",
            RaExpr::Binary { op, .. } => op.keyword(),
            RaExpr::Join { .. } => "join",
            RaExpr::GroupBy { .. } => "groupby",
            RaExpr::Distinct(_) => "distinct",
            RaExpr::Sort { .. } => "sort",
            RaExpr::Limit { .. } => "limit",
        }
    }

    /// Whether the row order of this expression's result is significant.
    pub fn is_ordered(&self) -> bool {
        matches!(self, RaExpr::Sort { .. })
    }

    pub fn children(&self) -> Vec<&RaExpr> {
        match self {
            RaExpr::Scan(_) => vec![],
            RaExpr::Select { input, .. }
            | RaExpr::Project { input, .. }
            | RaExpr::Rename { input, .. }
            | RaExpr::GroupBy { input, .. }
            | RaExpr::Sort { input, .. }
            | RaExpr::Limit { input, .. }
            | RaExpr::Distinct(input) => vec![input],
            RaExpr::Binary { left, right, .. } | RaExpr::Join { left, right, .. } => {
                vec![left, right]
            }
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Every scanned table, left to right.
    pub fn tables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a RaExpr, out: &mut Vec<&'a str>) {
            if let RaExpr::Scan(t) = e {
                out.push(t.as_str());
            }
            for c in e.children() {
                walk(c, out);
            }
        }
        walk(self, &mut out);
        out
    }
}

/// An identifier as written in RA text: bare when it is a plain
/// identifier, otherwise in backticks with inner backticks doubled.
pub fn ident_text(name: &str) -> String {
    if is_identifier(name) {
        name.to_string()
    } else {
        format!("`{}`", name.replace('`', "``"))
    }
}

fn idents(names: &[String]) -> String {
    names.iter().map(|n| ident_text(n)).collect::<Vec<_>>().join(", ")
}

/// Canonical text of an expression; [`crate::parser::parse`] inverts it.
pub fn format_ra(expr: &RaExpr) -> String {
    expr.to_string()
}

impl RaExpr {
    /// Operator keyword plus bracketed arguments, without the inputs.
    fn head(&self) -> String {
        let list = |items: Vec<String>| items.join(", ");
        match self {
            RaExpr::Scan(t) => ident_text(t),
            RaExpr::Select { predicate, .. } => format!("select[{predicate}]"),
            RaExpr::Project { columns, .. } => format!("project[{}]", idents(columns)),
            RaExpr::Rename { pairs, .. } => format!(
                "rename[{}]",
                list(pairs
                    .iter()
                    .map(|(old, new)| format!("{} -> {}", ident_text(old), ident_text(new)))
                    .collect())
            ),
            RaExpr::Binary { op, .. } => op.keyword().to_string(),
            RaExpr::Join { predicate, .. } => format!("join[{predicate}]"),
            RaExpr::GroupBy {
                keys, aggregates, ..
            } => format!(
                "groupby[{}; {}]",
                idents(keys),
                list(aggregates.iter().map(ToString::to_string).collect())
            ),
            RaExpr::Distinct(_) => "distinct".to_string(),
            RaExpr::Sort { keys, .. } => format!(
                "sort[{}]",
                list(
                    keys.iter()
                        .map(|k| match k.descending {
                            true => format!("{} desc", ident_text(&k.column)),
                            false => ident_text(&k.column),
                        })
                        .collect()
                )
            ),
            RaExpr::Limit { count, .. } => format!("limit[{count}]"),
        }
    }
}

impl fmt::Display for RaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.head())?;
        let children = self.children();
        if children.is_empty() {
            return Ok(());
        }
        f.write_str("(")?;
        for (i, c) in children.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.input {
            None => write!(f, "count(*) as {}", ident_text(&self.output)),
            Some(col) => write!(
                f,
                "{}({}) as {}",
                self.func.keyword(),
                ident_text(col),
                ident_text(&self.output)
            ),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Or(l, r) => {
                write!(f, "{l} or ")?;
                write_wrapped(f, r, matches!(**r, Predicate::Or(..)))
            }
            Predicate::And(l, r) => {
                write_wrapped(f, l, matches!(**l, Predicate::Or(..)))?;
                f.write_str(" and ")?;
                write_wrapped(f, r, matches!(**r, Predicate::Or(..) | Predicate::And(..)))
            }
            Predicate::Not(p) => {
                f.write_str("not ")?;
                write_wrapped(f, p, matches!(**p, Predicate::Or(..) | Predicate::And(..)))
            }
            Predicate::Compare { op, left, right } => {
                write!(f, "{left} {} {right}", op.symbol())
            }
            Predicate::In { column, values } => {
                write!(f, "{} in [", ident_text(column))?;
                for (i, v) in values.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    f.write_str(&literal_text(v))?;
                }
                f.write_str("]")
            }
            Predicate::Contains { term, needle } => {
                write!(f, "contains({term}, {})", quote(needle))
            }
        }
    }
}

fn write_wrapped(f: &mut fmt::Formatter<'_>, p: &Predicate, parens: bool) -> fmt::Result {
    if parens {
        write!(f, "({p})")
    } else {
        write!(f, "{p}")
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Column(c) => f.write_str(&ident_text(c)),
            Term::Literal(v) => f.write_str(&literal_text(v)),
            Term::Lower(t) => write!(f, "lower({t})"),
        }
    }
}

/// Literal syntax. Dates have no literal form and print as quoted text.
pub fn literal_text(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(x) => format_float(*x),
        Value::Text(s) => quote(s),
        Value::Date(d) => quote(&format_date(*d)),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Multi-line indented rendering, one operator per line. The output parses
/// back to the same tree.
pub fn pretty(expr: &RaExpr) -> String {
    fn walk(e: &RaExpr, depth: usize, out: &mut String) {
        let pad = "  ".repeat(depth);
        out.push_str(&pad);
        out.push_str(&e.head());
        let children = e.children();
        if children.is_empty() {
            return;
        }
        out.push_str("(\n");
        for (i, c) in children.iter().enumerate() {
            walk(c, depth + 1, out);
            out.push_str(if i + 1 < children.len() { ",\n" } else { "\n" });
        }
        out.push_str(&pad);
        out.push(')');
    }
    let mut out = String::new();
    walk(expr, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_canonical_text() {
        let e = RaExpr::select(
            Predicate::col_eq("test_result", Value::text("NOK")),
            RaExpr::scan("results"),
        );
        assert_eq!(format_ra(&e), r#"select[test_result == "NOK"](results)"#);
        assert_eq!(format_ra(&RaExpr::scan("results")), "results");
        let g = RaExpr::group_by(
            ["name"],
            vec![Aggregate::count_star("n")],
            RaExpr::scan("results"),
        );
        assert_eq!(format_ra(&g), "groupby[name; count(*) as n](results)");
    }

    #[test]
    fn predicate_parenthesization() {
        let a = || Predicate::col_eq("a", Value::Int(1));
        let b = || Predicate::col_eq("b", Value::Int(2));
        assert_eq!(a().and(b()).or(a()).to_string(), "a == 1 and b == 2 or a == 1");
        assert_eq!(a().and(b().or(a())).to_string(), "a == 1 and (b == 2 or a == 1)");
        assert_eq!(a().and(b().and(a())).to_string(), "a == 1 and (b == 2 and a == 1)");
        assert_eq!(a().and(b()).negate().to_string(), "not (a == 1 and b == 2)");
    }

    #[test]
    fn literal_escaping() {
        assert_eq!(literal_text(&Value::text(r#"a"b\c"#)), r#""a\"b\\c""#);
        assert_eq!(literal_text(&Value::Float(2.0)), "2.0");
        assert_eq!(literal_text(&Value::Null), "null");
    }

    #[test]
    fn identifier_rules() {
        assert!(is_identifier("test_result"));
        assert!(is_identifier("_x1"));
        assert!(is_identifier("selection"));
        assert!(!is_identifier("select"));
        assert!(!is_identifier("9lives"));
        assert!(!is_identifier("a.b"));
    }

    #[test]
    fn conjunct_helpers() {
        let p = Predicate::col_eq("a", Value::Int(1))
            .and(Predicate::col_eq("b", Value::Int(2)).and(Predicate::col_eq("a", Value::Int(3))));
        assert_eq!(p.conjuncts().len(), 3);
        assert_eq!(p.columns(), ["a", "b"]);
    }
}
