//! Heuristic rewrites that move filtering and narrowing toward the leaves.
//!
//! Rules, applied in passes until nothing changes:
//!
//! 1. split conjunctive selections into stacked selections;
//! 2. push selections below times, join, union, minus, intersect, distinct,
//!    sort, rename and non-leaf projections when the referenced columns allow it;
//! 3. fuse a selection over a product into a join when it references both sides,
//!    and move single-side join conjuncts into the join's inputs;
//! 4. insert narrowing projections directly above scans;
//! 5. collapse adjacent projections;
//! 6. collapse distinct over distinct.
//!
//! There is no cost model. Every rewrite preserves the output schema, the
//! result bag and, because the executor's operators are order-deterministic,
//! the row order.

use std::collections::BTreeSet;

use crate::ast::{BinaryOp, Predicate, RaExpr};
use crate::schema::Catalog;
use crate::typecheck::infer_schema;

/// Maximum number of individual rewrites per [`optimize`] call.
pub const REWRITE_BUDGET: usize = 10_000;

/// Result of an optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimized {
    pub expr: RaExpr,
    pub rewrites: usize,
    /// False when the budget ran out before a fixed point was reached.
    pub converged: bool,
}

/// Rewrites `expr` into an equivalent, cheaper expression. Input that does
/// not type-check is returned unchanged.
pub fn optimize(expr: &RaExpr, catalog: &Catalog) -> RaExpr {
    optimize_traced(expr, catalog).expr
}

pub fn optimize_traced(expr: &RaExpr, catalog: &Catalog) -> Optimized {
    let unchanged = Optimized {
        expr: expr.clone(),
        rewrites: 0,
        converged: true,
    };
    let Ok(schema) = infer_schema(expr, catalog) else {
        return unchanged;
    };
    let mut opt = Optimizer { catalog, steps: 0 };
    let mut current = expr.clone();
    let mut converged = false;
    while opt.steps < REWRITE_BUDGET {
        let next = opt.pass(&current);
        if next == current {
            converged = true;
            break;
        }
        current = next;
    }
    match infer_schema(&current, catalog) {
        Ok(s) if s == schema => Optimized {
            expr: current,
            rewrites: opt.steps,
            converged,
        },
        _ => {
            debug_assert!(false, "optimizer changed the output schema");
            unchanged
        }
    }
}

struct Optimizer<'a> {
    catalog: &'a Catalog,
    steps: usize,
}

type Required = Option<BTreeSet<String>>;

impl Optimizer<'_> {
    fn pass(&mut self, e: &RaExpr) -> RaExpr {
        let pushed = self.push(e);
        let pruned = self.prune(&pushed, &None);
        self.collapse(&pruned)
    }

    fn exhausted(&self) -> bool {
        self.steps >= REWRITE_BUDGET
    }

    fn names(&self, e: &RaExpr) -> Option<Vec<String>> {
        infer_schema(e, self.catalog)
            .ok()
            .map(|s| s.columns.into_iter().map(|c| c.name).collect())
    }

    fn push(&mut self, e: &RaExpr) -> RaExpr {
        match e {
            RaExpr::Select { predicate, input } => {
                let input = self.push(input);
                self.push_select(predicate, input)
            }
            RaExpr::Join {
                predicate,
                left,
                right,
            } => {
                let (l, r) = (self.push(left), self.push(right));
                self.push_join(predicate, l, r)
            }
            other => map_children(other, |c| self.push(c)),
        }
    }

    fn push_select(&mut self, p: &Predicate, input: RaExpr) -> RaExpr {
        let parts = p.conjuncts();
        if parts.len() > 1 && !self.exhausted() {
            self.steps += 1;
            return parts
                .into_iter()
                .rev()
                .fold(input, |acc, c| self.push_one(c.clone(), acc));
        }
        self.push_one(p.clone(), input)
    }

    /// Places a single (non-conjunctive) predicate as deep as it can go.
    fn push_one(&mut self, p: Predicate, input: RaExpr) -> RaExpr {
        if self.exhausted() {
            return RaExpr::select(p, input);
        }
        match input {
            RaExpr::Binary {
                op: BinaryOp::Times,
                left,
                right,
            } => {
                let Some(side) = self.side_of(&p, &left, &right) else {
                    return RaExpr::select(p, RaExpr::times(*left, *right));
                };
                self.steps += 1;
                match side {
                    Side::Left => RaExpr::times(self.push_one(p, *left), *right),
                    Side::Right => RaExpr::times(*left, self.push_one(p, *right)),
                    Side::Both => RaExpr::join(p, *left, *right),
                }
            }
            RaExpr::Join {
                predicate,
                left,
                right,
            } => {
                let Some(side) = self.side_of(&p, &left, &right) else {
                    return RaExpr::select(p, RaExpr::join(predicate, *left, *right));
                };
                self.steps += 1;
                match side {
                    Side::Left => RaExpr::join(predicate, self.push_one(p, *left), *right),
                    Side::Right => RaExpr::join(predicate, *left, self.push_one(p, *right)),
                    Side::Both => RaExpr::join(predicate.and(p), *left, *right),
                }
            }
            RaExpr::Binary {
                op: op @ (BinaryOp::Union | BinaryOp::Minus | BinaryOp::Intersect),
                left,
                right,
            } => {
                let (Some(ln), Some(rn)) = (self.names(&left), self.names(&right)) else {
                    return RaExpr::select(p, RaExpr::binary(op, *left, *right));
                };
                self.steps += 1;
                let mapped = p.map_columns(&mut |c| {
                    ln.iter()
                        .position(|n| n == c)
                        .map_or_else(|| c.to_string(), |i| rn[i].clone())
                });
                let l = self.push_one(p, *left);
                let r = self.push_one(mapped, *right);
                RaExpr::binary(op, l, r)
            }
            RaExpr::Distinct(inner) => {
                self.steps += 1;
                RaExpr::distinct(self.push_one(p, *inner))
            }
            RaExpr::Sort { keys, input } => {
                self.steps += 1;
                RaExpr::sort(keys, self.push_one(p, *input))
            }
            RaExpr::Project { columns, input } if !matches!(*input, RaExpr::Scan(_)) => {
                self.steps += 1;
                RaExpr::project(columns, self.push_one(p, *input))
            }
            RaExpr::Rename { pairs, input } => {
                self.steps += 1;
                let inverse = p.map_columns(&mut |c| {
                    pairs
                        .iter()
                        .find(|(_, new)| new == c)
                        .map_or_else(|| c.to_string(), |(old, _)| old.clone())
                });
                RaExpr::Rename {
                    pairs,
                    input: Box::new(self.push_one(inverse, *input)),
                }
            }
            other => RaExpr::select(p, other),
        }
    }

    fn side_of(&self, p: &Predicate, left: &RaExpr, right: &RaExpr) -> Option<Side> {
        let ln = self.names(left)?;
        let rn = self.names(right)?;
        let cols = p.columns();
        if cols.iter().all(|c| ln.iter().any(|n| n == c)) {
            Some(Side::Left)
        } else if cols.iter().all(|c| rn.iter().any(|n| n == c)) {
            Some(Side::Right)
        } else {
            Some(Side::Both)
        }
    }

    /// Moves single-side join conjuncts into the inputs; a join left with
    /// no conjuncts becomes a product.
    fn push_join(&mut self, q: &Predicate, mut left: RaExpr, mut right: RaExpr) -> RaExpr {
        let mut kept = Vec::new();
        let mut moved = false;
        for c in q.conjuncts() {
            match self.side_of(c, &left, &right) {
                Some(Side::Left) if !self.exhausted() => {
                    left = self.push_one(c.clone(), left);
                    moved = true;
                }
                Some(Side::Right) if !self.exhausted() => {
                    right = self.push_one(c.clone(), right);
                    moved = true;
                }
                _ => kept.push(c.clone()),
            }
        }
        if !moved {
            return RaExpr::join(q.clone(), left, right);
        }
        self.steps += 1;
        match Predicate::conjoin(kept) {
            Some(rest) => RaExpr::join(rest, left, right),
            None => RaExpr::times(left, right),
        }
    }

    /// Inserts narrowing projections above scans. `required` is the set of
    /// columns the parent reads; `None` means all of them.
    fn prune(&mut self, e: &RaExpr, required: &Required) -> RaExpr {
        match e {
            RaExpr::Scan(table) => {
                let (Some(req), Some(all)) = (required, self.names(e)) else {
                    return e.clone();
                };
                if req.is_empty() || req.len() >= all.len() || self.exhausted() {
                    return e.clone();
                }
                self.steps += 1;
                let kept: Vec<String> = all.into_iter().filter(|c| req.contains(c)).collect();
                RaExpr::project(kept, RaExpr::scan(table.clone()))
            }
            RaExpr::Project { columns, input } => {
                if matches!(**input, RaExpr::Scan(_)) {
                    return e.clone();
                }
                let req = columns.iter().cloned().collect();
                RaExpr::project(columns.clone(), self.prune(input, &Some(req)))
            }
            RaExpr::Select { predicate, input } => {
                let req = with_columns(required, predicate);
                RaExpr::select(predicate.clone(), self.prune(input, &req))
            }
            RaExpr::Rename { pairs, input } => {
                let req = required.as_ref().map(|r| {
                    let mut out: BTreeSet<String> = r
                        .iter()
                        .map(|c| {
                            pairs
                                .iter()
                                .find(|(_, new)| new == c)
                                .map_or_else(|| c.clone(), |(old, _)| old.clone())
                        })
                        .collect();
                    out.extend(pairs.iter().map(|(old, _)| old.clone()));
                    out
                });
                RaExpr::Rename {
                    pairs: pairs.clone(),
                    input: Box::new(self.prune(input, &req)),
                }
            }
            RaExpr::Binary {
                op: BinaryOp::Times,
                left,
                right,
            } => {
                let (lr, rr) = self.split_required(required, left, right);
                RaExpr::times(self.prune(left, &lr), self.prune(right, &rr))
            }
            RaExpr::Join {
                predicate,
                left,
                right,
            } => {
                let req = with_columns(required, predicate);
                let (lr, rr) = self.split_required(&req, left, right);
                RaExpr::join(
                    predicate.clone(),
                    self.prune(left, &lr),
                    self.prune(right, &rr),
                )
            }
            RaExpr::GroupBy {
                keys,
                aggregates,
                input,
            } => {
                let mut req: BTreeSet<String> = keys.iter().cloned().collect();
                req.extend(aggregates.iter().filter_map(|a| a.input.clone()));
                RaExpr::GroupBy {
                    keys: keys.clone(),
                    aggregates: aggregates.clone(),
                    input: Box::new(self.prune(input, &Some(req))),
                }
            }
            RaExpr::Sort { keys, input } => {
                let req = required.as_ref().map(|r| {
                    let mut r = r.clone();
                    r.extend(keys.iter().map(|k| k.column.clone()));
                    r
                });
                RaExpr::sort(keys.clone(), self.prune(input, &req))
            }
            RaExpr::Limit { count, input } => RaExpr::limit(*count, self.prune(input, required)),
            // Set operators, division and distinct read every column.
            other => map_children(other, |c| self.prune(c, &None)),
        }
    }

    fn split_required(&self, required: &Required, left: &RaExpr, right: &RaExpr) -> (Required, Required) {
        let Some(req) = required else {
            return (None, None);
        };
        let pick = |e: &RaExpr| {
            self.names(e)
                .map(|names| names.into_iter().filter(|n| req.contains(n)).collect())
        };
        (pick(left), pick(right))
    }

    fn collapse(&mut self, e: &RaExpr) -> RaExpr {
        let e = map_children(e, |c| self.collapse(c));
        if self.exhausted() {
            return e;
        }
        match e {
            RaExpr::Project { columns, input } => match *input {
                RaExpr::Project { input: inner, .. } => {
                    self.steps += 1;
                    RaExpr::Project {
                        columns,
                        input: inner,
                    }
                }
                other => RaExpr::project(columns, other),
            },
            RaExpr::Distinct(inner) => match *inner {
                RaExpr::Distinct(x) => {
                    self.steps += 1;
                    RaExpr::Distinct(x)
                }
                other => RaExpr::distinct(other),
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Left,
    Right,
    Both,
}

fn with_columns(required: &Required, p: &Predicate) -> Required {
    required.as_ref().map(|r| {
        let mut r = r.clone();
        r.extend(p.columns().into_iter().map(str::to_string));
        r
    })
}

fn map_children(e: &RaExpr, mut f: impl FnMut(&RaExpr) -> RaExpr) -> RaExpr {
    let mut f = |b: &RaExpr| Box::new(f(b));
    match e {
        RaExpr::Scan(_) => e.clone(),
        RaExpr::Select { predicate, input } => RaExpr::Select {
            predicate: predicate.clone(),
            input: f(input),
        },
        RaExpr::Project { columns, input } => RaExpr::Project {
            columns: columns.clone(),
            input: f(input),
        },
        RaExpr::Rename { pairs, input } => RaExpr::Rename {
            pairs: pairs.clone(),
            input: f(input),
        },
        RaExpr::Binary { op, left, right } => {
            let left = f(left);
            RaExpr::Binary {
                op: *op,
                left,
                right: f(right),
            }
        }
        RaExpr::Join {
            predicate,
            left,
            right,
        } => {
            let left = f(left);
            RaExpr::Join {
                predicate: predicate.clone(),
                left,
                right: f(right),
            }
        }
        RaExpr::GroupBy {
            keys,
            aggregates,
            input,
        } => RaExpr::GroupBy {
            keys: keys.clone(),
            aggregates: aggregates.clone(),
            input: f(input),
        },
        RaExpr::Distinct(input) => RaExpr::Distinct(f(input)),
        RaExpr::Sort { keys, input } => RaExpr::Sort {
            keys: keys.clone(),
            input: f(input),
        },
        RaExpr::Limit { count, input } => RaExpr::Limit {
            count: *count,
            input: f(input),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::schema::{Column, TableSchema};
    use crate::value::{ColumnKind, ColumnType};

    fn catalog() -> Catalog {
        let int = ColumnType::required(ColumnKind::Int);
        let table = |name: &str, cols: &[&str]| {
            TableSchema::new(name, cols.iter().map(|c| Column::new(*c, int)).collect())
        };
        Catalog::new("")
            .with_table(table("a", &["a1", "a2", "a3"]))
            .unwrap()
            .with_table(table("b", &["b1", "b2"]))
            .unwrap()
            .with_table(table("c", &["c1", "c2"]))
            .unwrap()
    }

    fn opt(src: &str) -> String {
        optimize(&parse(src).unwrap(), &catalog()).to_string()
    }

    #[test]
    fn pushes_single_side_filter_below_product() {
        assert_eq!(opt("select[a1 == 1](times(a, b))"), "times(select[a1 == 1](a), b)");
        assert_eq!(opt("select[b2 == 1](times(a, b))"), "times(a, select[b2 == 1](b))");
    }

    #[test]
    fn splits_conjunctions_and_fuses_joins() {
        assert_eq!(
            opt("select[a1 == b1 and b2 > 3](times(a, b))"),
            "join[a1 == b1](a, select[b2 > 3](b))"
        );
        assert_eq!(
            opt("select[a1 == b1](join[a2 == b2](a, b))"),
            "join[a2 == b2 and a1 == b1](a, b)"
        );
        assert_eq!(opt("join[a1 == 1](a, b)"), "times(select[a1 == 1](a), b)");
    }

    #[test]
    fn prunes_and_collapses_projections() {
        assert_eq!(
            opt("project[a1, b1](times(a, b))"),
            "project[a1, b1](times(project[a1](a), project[b1](b)))"
        );
        assert_eq!(opt("project[a1](project[a1, a2](select[a3 == 1](a)))"),
            "project[a1](select[a3 == 1](project[a1, a3](a)))");
        assert_eq!(opt("distinct(distinct(a))"), "distinct(a)");
        assert_eq!(opt("groupby[; count(*) as n](times(a, b))"), "groupby[; count(*) as n](times(a, b))");
    }

    #[test]
    fn maps_columns_through_union_and_rename() {
        assert_eq!(
            opt("select[b1 == 2](union(b, rename[c1 -> b1, c2 -> b2](c)))"),
            "union(select[b1 == 2](b), rename[c1 -> b1, c2 -> b2](select[c1 == 2](c)))"
        );
    }

    #[test]
    fn leaves_barriers_alone() {
        for src in [
            "select[a1 == 1](limit[2](a))",
            "select[a1 == 1](project[a1](a))",
        ] {
            assert_eq!(opt(src), parse(src).unwrap().to_string());
        }
    }

    #[test]
    fn grouping_reads_only_keys_and_inputs() {
        assert_eq!(
            opt("select[n > 1](groupby[a1; count(*) as n](a))"),
            "select[n > 1](groupby[a1; count(*) as n](project[a1](a)))"
        );
    }

    #[test]
    fn ill_typed_input_is_returned_unchanged() {
        let e = parse("select[zz == 1](a)").unwrap();
        assert_eq!(optimize(&e, &catalog()), e);
    }

    #[test]
    fn reaches_a_fixed_point() {
        let e = parse("project[a1](select[a2 == b1 and c1 == 3 and a3 == 4](times(times(a, b), c)))").unwrap();
        let r = optimize_traced(&e, &catalog());
        assert!(r.converged);
        assert_eq!(optimize(&r.expr, &catalog()), r.expr);
    }
}
