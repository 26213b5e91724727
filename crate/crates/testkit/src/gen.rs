//! Random catalogs, databases and expressions.
//!
//! [`random_case`] produces a small typed database (at most six rows and
//! four columns per table) and a well-typed expression over it. Values come
//! from tiny domains so that predicates, joins and set operators actually
//! match rows. [`random_ast`] produces syntactically valid but untyped trees
//! for parser round trips.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relq::ast::{AggFn, Aggregate, BinaryOp, CmpOp, Predicate, RaExpr, SortKey, Term};
use relq::value::parse_date;
use relq::{infer_schema, Catalog, Column, ColumnKind, ColumnType, Database, Relation, TableSchema, Value};

fn date(day: u32) -> Value {
    Value::Date(parse_date(&format!("2024-01-{day:02}")).expect("valid day"))
}

const KINDS: [ColumnKind; 5] = [
    ColumnKind::Bool,
    ColumnKind::Int,
    ColumnKind::Float,
    ColumnKind::Text,
    ColumnKind::Date,
];
const TEXTS: [&str; 5] = ["a", "b", "A", "ab", "B a"];
const FLOATS: [f64; 5] = [0.0, 1.0, 1.5, 2.0, 3.0];

/// One generated test instance.
#[derive(Debug, Clone)]
pub struct Case {
    pub catalog: Catalog,
    pub database: Database,
    pub expr: RaExpr,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A database with tables `r` and `s` (identical schemas, different rows)
/// and `t`, whose first column shares a kind with `r` so joins can match.
pub fn random_database(rng: &mut impl Rng) -> (Catalog, Database) {
    let width = rng.gen_range(2..=4);
    let r_cols: Vec<Column> = ["a", "b", "c", "d"][..width]
        .iter()
        .map(|n| Column::new(*n, random_type(rng)))
        .collect();
    let mut t_cols = vec![Column::new(
        "x",
        ColumnType::new(r_cols.choose(rng).unwrap().ty.kind, rng.gen_bool(0.5)),
    )];
    for n in ["y", "z"].iter().take(rng.gen_range(0..=2)) {
        t_cols.push(Column::new(*n, random_type(rng)));
    }
    let tables = [
        TableSchema::new("r", r_cols.clone()),
        TableSchema::new("s", r_cols),
        TableSchema::new("t", t_cols),
    ];
    let mut catalog = Catalog::new("generated");
    let mut db = Database::new();
    for table in tables {
        let rows = (0..rng.gen_range(0..=6))
            .map(|_| {
                table
                    .columns
                    .iter()
                    .map(|c| {
                        if c.ty.nullable && rng.gen_bool(0.2) {
                            Value::Null
                        } else {
                            random_value(rng, c.ty.kind)
                        }
                    })
                    .collect()
            })
            .collect();
        db.insert(table.name.clone(), Relation::new(table.clone(), rows).unwrap());
        catalog.add_table(table).unwrap();
    }
    (catalog, db)
}

fn random_type(rng: &mut impl Rng) -> ColumnType {
    ColumnType::new(*KINDS.choose(rng).unwrap(), rng.gen_bool(0.5))
}

pub fn random_value(rng: &mut impl Rng, kind: ColumnKind) -> Value {
    match kind {
        ColumnKind::Bool => Value::Bool(rng.gen()),
        ColumnKind::Int => Value::Int(rng.gen_range(0..4)),
        ColumnKind::Float => Value::Float(*FLOATS.choose(rng).unwrap()),
        ColumnKind::Text => Value::text(*TEXTS.choose(rng).unwrap()),
        ColumnKind::Date => date(rng.gen_range(1..=4)),
    }
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = rng(seed);
    let (catalog, database) = random_database(&mut rng);
    let depth = rng.gen_range(1..=4);
    let expr = ExprGen::new(&mut rng, &catalog).expr(depth);
    Case {
        catalog,
        database,
        expr,
    }
}

/// Operators a generated expression can contain, by grammar keyword.
pub const OPERATORS: [&str; 14] = [
    "scan", "select", "project", "rename", "union", "minus", "intersect", "times", "divide", "join",
    "groupby", "distinct", "sort", "limit",
];

pub struct ExprGen<'a, R: Rng> {
    rng: &'a mut R,
    catalog: &'a Catalog,
    fresh: usize,
}

impl<'a, R: Rng> ExprGen<'a, R> {
    pub fn new(rng: &'a mut R, catalog: &'a Catalog) -> Self {
        Self {
            rng,
            catalog,
            fresh: 0,
        }
    }

    fn fresh(&mut self) -> String {
        self.fresh += 1;
        format!("f{}", self.fresh)
    }

    fn schema(&self, e: &RaExpr) -> TableSchema {
        infer_schema(e, self.catalog).expect("generator builds typed expressions")
    }

    fn scan(&mut self) -> RaExpr {
        RaExpr::scan(*["r", "s", "t"].choose(self.rng).unwrap())
    }

    /// A well-typed expression of at most `depth` operator levels above the scans.
    pub fn expr(&mut self, depth: usize) -> RaExpr {
        if depth == 0 {
            return self.scan();
        }
        for _ in 0..8 {
            let candidate = match self.rng.gen_range(0..14) {
                0 => self.scan(),
                1 => {
                    let input = self.expr(depth - 1);
                    let s = self.schema(&input);
                    RaExpr::select(self.predicate(&s, 2), input)
                }
                2 => {
                    let input = self.expr(depth - 1);
                    let mut cols = self.schema(&input).column_names().iter().map(|c| c.to_string()).collect::<Vec<_>>();
                    cols.shuffle(self.rng);
                    cols.truncate(self.rng.gen_range(1..=cols.len()));
                    RaExpr::project(cols, input)
                }
                3 => {
                    let input = self.expr(depth - 1);
                    let cols: Vec<String> = self.schema(&input).column_names().iter().map(|c| c.to_string()).collect();
                    let n = self.rng.gen_range(1..=cols.len().min(2));
                    let pairs: Vec<(String, String)> = cols
                        .choose_multiple(self.rng, n)
                        .cloned()
                        .collect::<Vec<_>>()
                        .into_iter()
                        .map(|c| (c, self.fresh()))
                        .collect();
                    RaExpr::rename(pairs, input)
                }
                4..=6 => {
                    let op = [BinaryOp::Union, BinaryOp::Minus, BinaryOp::Intersect][self.rng.gen_range(0..3)];
                    let left = self.expr(depth - 1);
                    let right = self.compatible(&left);
                    RaExpr::binary(op, left, right)
                }
                7 | 8 => {
                    let left = self.expr(depth - 1);
                    let right = self.expr(depth - 1);
                    let right = self.disjoint(&left, right);
                    let combined = self.schema(&RaExpr::times(left.clone(), right.clone()));
                    if self.rng.gen_bool(0.5) {
                        RaExpr::times(left, right)
                    } else {
                        let p = self.join_predicate(&self.schema(&left), &self.schema(&right), &combined);
                        RaExpr::join(p, left, right)
                    }
                }
                9 => {
                    let left = self.expr(depth - 1);
                    let names: Vec<String> = self.schema(&left).column_names().iter().map(|c| c.to_string()).collect();
                    if names.len() < 2 {
                        continue;
                    }
                    let k = self.rng.gen_range(1..names.len());
                    let divisor: Vec<String> = names.choose_multiple(self.rng, k).cloned().collect();
                    let source = self.compatible(&left);
                    RaExpr::divide(left, RaExpr::project(divisor, source))
                }
                10 => {
                    let input = self.expr(depth - 1);
                    self.group_by(input)
                }
                11 => RaExpr::distinct(self.expr(depth - 1)),
                12 => {
                    let input = self.expr(depth - 1);
                    let cols: Vec<String> = self.schema(&input).column_names().iter().map(|c| c.to_string()).collect();
                    let n = self.rng.gen_range(1..=cols.len().min(2));
                    let keys = cols
                        .choose_multiple(self.rng, n)
                        .cloned()
                        .collect::<Vec<_>>()
                        .into_iter()
                        .map(|c| SortKey {
                            column: c,
                            descending: self.rng.gen_bool(0.5),
                        })
                        .collect();
                    RaExpr::sort(keys, input)
                }
                _ => {
                    let input = self.expr(depth - 1);
                    RaExpr::limit(self.rng.gen_range(0..5), input)
                }
            };
            if infer_schema(&candidate, self.catalog).is_ok() {
                return candidate;
            }
        }
        self.scan()
    }

    /// An expression with the same schema as `e`, usually with other rows.
    fn compatible(&mut self, e: &RaExpr) -> RaExpr {
        let twin = swap_twins(e);
        let base = if self.rng.gen_bool(0.6) { twin } else { e.clone() };
        match self.rng.gen_range(0..3) {
            0 => base,
            1 => {
                let s = self.schema(&base);
                RaExpr::select(self.predicate(&s, 1), base)
            }
            _ => RaExpr::limit(self.rng.gen_range(0..4), base),
        }
    }

    /// Renames columns of `right` that clash with `left`.
    fn disjoint(&mut self, left: &RaExpr, right: RaExpr) -> RaExpr {
        let l = self.schema(left);
        let clashes: Vec<String> = self
            .schema(&right)
            .column_names()
            .iter()
            .filter(|c| l.index_of(c).is_some())
            .map(|c| c.to_string())
            .collect();
        if clashes.is_empty() {
            return right;
        }
        let pairs: Vec<(String, String)> = clashes.into_iter().map(|c| (c, self.fresh())).collect();
        RaExpr::rename(pairs, right)
    }

    fn group_by(&mut self, input: RaExpr) -> RaExpr {
        let s = self.schema(&input);
        let names: Vec<String> = s.column_names().iter().map(|c| c.to_string()).collect();
        let k = self.rng.gen_range(0..=names.len().min(2));
        let keys: Vec<String> = names.choose_multiple(self.rng, k).cloned().collect();
        let mut aggregates = Vec::new();
        for _ in 0..self.rng.gen_range(1..=2) {
            let col = s.columns.choose(self.rng).unwrap().clone();
            let out = self.fresh();
            let func = match self.rng.gen_range(0..6) {
                0 => AggFn::CountStar,
                1 => AggFn::Count,
                2 if col.ty.kind.is_numeric() => AggFn::Sum,
                3 if col.ty.kind.is_numeric() => AggFn::Avg,
                4 if col.ty.kind.is_ordered() => AggFn::Min,
                5 if col.ty.kind.is_ordered() => AggFn::Max,
                _ => AggFn::Count,
            };
            aggregates.push(match func {
                AggFn::CountStar => Aggregate::count_star(out),
                f => Aggregate::new(f, col.name, out),
            });
        }
        RaExpr::group_by(keys, aggregates, input)
    }

    fn join_predicate(&mut self, l: &TableSchema, r: &TableSchema, combined: &TableSchema) -> Predicate {
        let pairs: Vec<(String, String)> = l
            .columns
            .iter()
            .flat_map(|a| {
                r.columns
                    .iter()
                    .filter(|b| a.ty.kind.comparable_with(b.ty.kind))
                    .map(move |b| (a.name.clone(), b.name.clone()))
            })
            .collect();
        let base = match pairs.choose(self.rng) {
            Some((a, b)) => {
                let op = if self.rng.gen_bool(0.7) {
                    CmpOp::Eq
                } else {
                    self.cmp_op()
                };
                let (a, b) = if self.rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                Predicate::cmp(op, Term::column(a.clone()), Term::column(b.clone()))
            }
            None => return self.predicate(combined, 1),
        };
        if self.rng.gen_bool(0.4) {
            base.and(self.predicate(combined, 1))
        } else {
            base
        }
    }

    fn cmp_op(&mut self) -> CmpOp {
        *[CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge]
            .choose(self.rng)
            .unwrap()
    }

    /// A literal likely to match values of `kind`.
    fn literal(&mut self, kind: ColumnKind) -> Value {
        if self.rng.gen_bool(0.05) {
            return Value::Null;
        }
        match kind {
            ColumnKind::Int if self.rng.gen_bool(0.2) => Value::Float(*FLOATS.choose(self.rng).unwrap()),
            ColumnKind::Float if self.rng.gen_bool(0.2) => Value::Int(self.rng.gen_range(0..4)),
            // the grammar has no date literals; dates are written as text
            ColumnKind::Date => Value::text(format!("2024-01-0{}", self.rng.gen_range(1..=4))),
            k => random_value(self.rng, k),
        }
    }

    pub fn predicate(&mut self, s: &TableSchema, depth: usize) -> Predicate {
        let col = s.columns.choose(self.rng).unwrap().clone();
        let choice = if depth == 0 {
            self.rng.gen_range(0..5)
        } else {
            self.rng.gen_range(0..8)
        };
        match choice {
            0 | 1 => {
                let lit = self.literal(col.ty.kind);
                let op = self.cmp_op();
                if self.rng.gen_bool(0.8) {
                    Predicate::cmp(op, Term::column(col.name), Term::lit(lit))
                } else {
                    Predicate::cmp(op, Term::lit(lit), Term::column(col.name))
                }
            }
            2 => {
                let other = s
                    .columns
                    .iter()
                    .filter(|c| c.ty.kind.comparable_with(col.ty.kind))
                    .collect::<Vec<_>>()
                    .choose(self.rng)
                    .map(|c| c.name.clone())
                    .unwrap_or_else(|| col.name.clone());
                Predicate::cmp(self.cmp_op(), Term::column(col.name), Term::column(other))
            }
            3 => {
                let values = (0..self.rng.gen_range(1..=3)).map(|_| self.literal(col.ty.kind)).collect();
                Predicate::In {
                    column: col.name,
                    values,
                }
            }
            4 => match s.columns.iter().filter(|c| c.ty.kind == ColumnKind::Text).collect::<Vec<_>>().choose(self.rng) {
                Some(t) => {
                    let term = if self.rng.gen_bool(0.5) {
                        Term::Lower(Box::new(Term::column(t.name.clone())))
                    } else {
                        Term::column(t.name.clone())
                    };
                    if self.rng.gen_bool(0.5) {
                        Predicate::Contains {
                            term,
                            needle: ["a", "b", " ", ""].choose(self.rng).unwrap().to_string(),
                        }
                    } else {
                        Predicate::cmp(CmpOp::Eq, term, Term::lit(Value::text(*TEXTS.choose(self.rng).unwrap())))
                    }
                }
                None => Predicate::cmp(CmpOp::Ne, Term::column(col.name.clone()), Term::column(col.name)),
            },
            5 => self.predicate(s, depth - 1).and(self.predicate(s, depth - 1)),
            6 => self.predicate(s, depth - 1).or(self.predicate(s, depth - 1)),
            _ => self.predicate(s, depth - 1).negate(),
        }
    }
}

/// Swaps scans of `r` and `s`, which share a schema.
pub fn swap_twins(e: &RaExpr) -> RaExpr {
    fn walk(e: &RaExpr) -> RaExpr {
        match e {
            RaExpr::Scan(t) if t == "r" => RaExpr::scan("s"),
            RaExpr::Scan(t) if t == "s" => RaExpr::scan("r"),
            RaExpr::Scan(t) => RaExpr::scan(t.clone()),
            RaExpr::Select { predicate, input } => RaExpr::select(predicate.clone(), walk(input)),
            RaExpr::Project { columns, input } => RaExpr::project(columns.clone(), walk(input)),
            RaExpr::Rename { pairs, input } => RaExpr::rename(pairs.clone(), walk(input)),
            RaExpr::Binary { op, left, right } => RaExpr::binary(*op, walk(left), walk(right)),
            RaExpr::Join {
                predicate,
                left,
                right,
            } => RaExpr::join(predicate.clone(), walk(left), walk(right)),
            RaExpr::GroupBy {
                keys,
                aggregates,
                input,
            } => RaExpr::group_by(keys.clone(), aggregates.clone(), walk(input)),
            RaExpr::Distinct(input) => RaExpr::distinct(walk(input)),
            RaExpr::Sort { keys, input } => RaExpr::sort(keys.clone(), walk(input)),
            RaExpr::Limit { count, input } => RaExpr::limit(*count, walk(input)),
        }
    }
    walk(e)
}

/// Every operator keyword appearing in `e`.
pub fn operators(e: &RaExpr) -> Vec<&'static str> {
    let mut out = vec![e.operator_name()];
    for c in e.children() {
        out.extend(operators(c));
    }
    out
}

const IDENTS: [&str; 11] = [
    "results",
    "name",
    "test_result",
    "Truck_ID",
    "x",
    "_tmp",
    "a1",
    "runs",
    "Test Result",
    "select",
    "odd`name",
];

/// A random syntactically valid tree; column and table names are not
/// checked against any catalog.
pub fn random_ast<R: Rng>(rng: &mut R, depth: usize) -> RaExpr {
    fn ident(rng: &mut impl Rng) -> String {
        IDENTS[rng.gen_range(0..IDENTS.len())].to_string()
    }
    if depth == 0 {
        return RaExpr::scan(ident(rng));
    }
    let sub = |rng: &mut R| {
        let d = rng.gen_range(0..depth);
        random_ast(rng, d)
    };
    match rng.gen_range(0..11) {
        0 => RaExpr::select(random_predicate(rng, 2), sub(rng)),
        1 => RaExpr::project((0..rng.gen_range(1..4)).map(|_| ident(rng)).collect::<Vec<_>>(), sub(rng)),
        2 => RaExpr::rename(
            (0..rng.gen_range(1..3)).map(|_| (ident(rng), ident(rng))).collect::<Vec<_>>(),
            sub(rng),
        ),
        3 => {
            let op = BinaryOp::ALL[rng.gen_range(0..5)];
            RaExpr::binary(op, sub(rng), sub(rng))
        }
        4 => RaExpr::join(random_predicate(rng, 2), sub(rng), sub(rng)),
        5 => {
            let keys = (0..rng.gen_range(0..3)).map(|_| ident(rng)).collect::<Vec<_>>();
            let aggs = (0..rng.gen_range(1..3))
                .map(|_| match rng.gen_range(0..6) {
                    0 => Aggregate::count_star(ident(rng)),
                    i => Aggregate::new(
                        [AggFn::Count, AggFn::Sum, AggFn::Avg, AggFn::Min, AggFn::Max][i - 1],
                        ident(rng),
                        ident(rng),
                    ),
                })
                .collect();
            RaExpr::group_by(keys, aggs, sub(rng))
        }
        6 => RaExpr::distinct(sub(rng)),
        7 => RaExpr::sort(
            (0..rng.gen_range(1..3))
                .map(|_| SortKey {
                    column: ident(rng),
                    descending: rng.gen(),
                })
                .collect(),
            sub(rng),
        ),
        8 => RaExpr::limit(rng.gen(), sub(rng)),
        _ => RaExpr::scan(ident(rng)),
    }
}

fn random_literal(rng: &mut impl Rng) -> Value {
    match rng.gen_range(0..6) {
        0 => Value::Null,
        1 => Value::Bool(rng.gen()),
        2 => Value::Int(match rng.gen_range(0..4) {
            0 => i64::MIN,
            1 => i64::MAX,
            _ => rng.gen_range(-1000..1000),
        }),
        3 => {
            let x = f64::from_bits(rng.gen());
            Value::Float(if x.is_finite() { x } else { rng.gen_range(-1e6..1e6) })
        }
        _ => {
            let chars = ['a', 'Z', ' ', '"', '\\', 'é', '→', '\n', '1', ','];
            Value::Text((0..rng.gen_range(0..6)).map(|_| chars[rng.gen_range(0..chars.len())]).collect())
        }
    }
}

fn random_term(rng: &mut impl Rng) -> Term {
    match rng.gen_range(0..5) {
        0 | 1 => Term::column(IDENTS[rng.gen_range(0..IDENTS.len())]),
        2 => Term::Lower(Box::new(random_term(rng))),
        _ => Term::lit(random_literal(rng)),
    }
}

pub fn random_predicate(rng: &mut impl Rng, depth: usize) -> Predicate {
    let choice = if depth == 0 { rng.gen_range(0..3) } else { rng.gen_range(0..6) };
    match choice {
        0 => Predicate::cmp(
            [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][rng.gen_range(0..6)],
            random_term(rng),
            random_term(rng),
        ),
        1 => Predicate::In {
            column: IDENTS[rng.gen_range(0..IDENTS.len())].to_string(),
            values: (0..rng.gen_range(1..4)).map(|_| random_literal(rng)).collect(),
        },
        2 => Predicate::Contains {
            term: random_term(rng),
            needle: match random_literal(rng) {
                Value::Text(s) => s,
                _ => "x".into(),
            },
        },
        3 => random_predicate(rng, depth - 1).and(random_predicate(rng, depth - 1)),
        4 => random_predicate(rng, depth - 1).or(random_predicate(rng, depth - 1)),
        _ => random_predicate(rng, depth - 1).negate(),
    }
}
