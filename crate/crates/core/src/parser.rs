//! Parser for the canonical RA text.
//!
//! The accepted language is spelled out in [`GRAMMAR`].
//!
//! `and`/`or` associate to the left. Structural checks (unknown columns,
//! division shapes, types) belong to [`crate::typecheck`].

use std::fmt;

use thiserror::Error;

use crate::ast::{
    AggFn, Aggregate, BinaryOp, CmpOp, Predicate, RaExpr, SortKey, Term, KEYWORDS,
};
use crate::value::Value;

/// Grammar reference, in the form given to the language model.
pub const GRAMMAR: &str = r#"expr     := unary | binary | IDENT
unary    := ("select"|"σ")  "[" pred "]" "(" expr ")"
          | ("project"|"π") "[" cols "]" "(" expr ")"
          | ("rename"|"ρ")  "[" ren ("," ren)* "]" "(" expr ")"
          | "distinct" "(" expr ")"
          | "sort" "[" skey ("," skey)* "]" "(" expr ")"
          | "limit" "[" INT "]" "(" expr ")"
          | ("groupby"|"γ") "[" cols? ";" agg ("," agg)* "]" "(" expr ")"
binary   := ("union"|"minus"|"intersect"|"times"|"divide") "(" expr "," expr ")"
          | "join" "[" pred "]" "(" expr "," expr ")"
ren      := IDENT "->" IDENT
skey     := IDENT ("asc"|"desc")?
agg      := ("count" "(" ("*"|IDENT) ")" | ("sum"|"avg"|"min"|"max") "(" IDENT ")") "as" IDENT
pred     := conj ("or" conj)*
conj     := neg ("and" neg)*
neg      := "not" neg | "(" pred ")" | compare
compare  := term cmp term | IDENT "in" "[" literal ("," literal)* "]"
          | "contains" "(" term "," STRING ")"
term     := IDENT | literal | "lower" "(" term ")"
literal  := STRING | NUMBER | "true" | "false" | "null"
cols     := IDENT ("," IDENT)*
IDENT    := [A-Za-z_][A-Za-z0-9_]* (not a keyword) or `any text` in backticks
cmp      := "==" | "!=" | "<" | "<=" | ">" | ">="
STRING   := double-quoted, with \" and \\ escapes
"#;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
    pub message: String,
}

/// Parses RA text into an expression.
pub fn parse(input: &str) -> Result<RaExpr, ParseError> {
    let tokens = Lexer::new(input).tokenize()?;
    let mut p = Parser {
        tokens,
        pos: 0,
        depth: 0,
        open: Vec::new(),
    };
    let expr = p.expr()?;
    p.expect_eof()?;
    Ok(expr)
}

/// Parses raw bytes; invalid UTF-8 is reported as a parse error.
pub fn parse_bytes(input: &[u8]) -> Result<RaExpr, ParseError> {
    match std::str::from_utf8(input) {
        Ok(s) => parse(s),
        Err(e) => {
            let valid = std::str::from_utf8(&input[..e.valid_up_to()]).unwrap_or_default();
            let (line, column) = end_position(valid);
            let at_next = if valid.is_empty() || valid.ends_with('\n') {
                column
            } else {
                column + 1
            };
            Err(ParseError {
                line,
                column: at_next.max(1),
                expected: vec![],
                found: "invalid UTF-8".into(),
                message: "input is not valid UTF-8".into(),
            })
        }
    }
}

fn end_position(s: &str) -> (usize, usize) {
    let mut line = 1;
    let mut col = 0;
    for c in s.chars() {
        if c == '\n' {
            line += 1;
            col = 0;
        } else {
            col += 1;
        }
    }
    (line, col.max(1))
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Kw(&'static str),
    Str(String),
    Num(String),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Semi,
    Arrow,
    Star,
    Cmp(CmpOp),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Kw(k) => write!(f, "`{k}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Num(n) => write!(f, "number `{n}`"),
            Tok::LBracket => f.write_str("`[`"),
            Tok::RBracket => f.write_str("`]`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Star => f.write_str("`*`"),
            Tok::Cmp(op) => write!(f, "`{}`", op.symbol()),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    column: usize,
    last: (usize, usize),
}

impl<'a> Lexer<'a> {
    fn new(input: &'a str) -> Self {
        Self {
            chars: input.chars().peekable(),
            line: 1,
            column: 1,
            last: (1, 1),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        self.last = (self.line, self.column);
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(&self, line: usize, column: usize, found: String, message: String) -> ParseError {
        ParseError {
            line,
            column,
            expected: vec![],
            found,
            message,
        }
    }

    fn tokenize(mut self) -> Result<Vec<Spanned>, ParseError> {
        let mut out = Vec::new();
        loop {
            while matches!(self.chars.peek(), Some(c) if c.is_whitespace()) {
                self.bump();
            }
            let (line, column) = (self.line, self.column);
            let Some(c) = self.bump() else {
                // end of input sits on the last character so positions stay inside the text
                let (line, column) = self.last;
                out.push(Spanned {
                    tok: Tok::Eof,
                    line,
                    column,
                });
                return Ok(out);
            };
            let tok = match c {
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '*' => Tok::Star,
                'σ' => Tok::Kw("select"),
                'π' => Tok::Kw("project"),
                'ρ' => Tok::Kw("rename"),
                'γ' => Tok::Kw("groupby"),
                '=' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::Cmp(CmpOp::Eq)
                    } else {
                        return Err(self.error(line, column, "`=`".into(), "expected `==`".into()));
                    }
                }
                '!' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::Cmp(CmpOp::Ne)
                    } else {
                        return Err(self.error(line, column, "`!`".into(), "expected `!=`".into()));
                    }
                }
                '<' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::Cmp(CmpOp::Le)
                    } else {
                        Tok::Cmp(CmpOp::Lt)
                    }
                }
                '>' => {
                    if self.chars.peek() == Some(&'=') {
                        self.bump();
                        Tok::Cmp(CmpOp::Ge)
                    } else {
                        Tok::Cmp(CmpOp::Gt)
                    }
                }
                '-' if self.chars.peek() == Some(&'>') => {
                    self.bump();
                    Tok::Arrow
                }
                '-' | '+' | '0'..='9' => self.number(c, line, column)?,
                '"' => self.string(line, column)?,
                '`' => self.quoted_ident(line, column)?,
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut word = String::from(c);
                    while let Some(&n) = self.chars.peek() {
                        if n.is_ascii_alphanumeric() || n == '_' {
                            word.push(n);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    match KEYWORDS.iter().find(|k| **k == word) {
                        Some(k) => Tok::Kw(k),
                        None => Tok::Ident(word),
                    }
                }
                other => {
                    return Err(self.error(
                        line,
                        column,
                        format!("{other:?}"),
                        format!("unexpected character {other:?}"),
                    ))
                }
            };
            out.push(Spanned { tok, line, column });
        }
    }

    fn quoted_ident(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let mut name = String::new();
        loop {
            match self.bump() {
                Some('`') if self.chars.peek() == Some(&'`') => {
                    self.bump();
                    name.push('`');
                }
                Some('`') => break,
                Some('\n') | None => {
                    return Err(self.error(
                        line,
                        column,
                        "end of line".into(),
                        "unterminated quoted identifier".into(),
                    ))
                }
                Some(c) => name.push(c),
            }
        }
        if name.trim().is_empty() {
            return Err(self.error(line, column, "``".into(), "empty quoted identifier".into()));
        }
        Ok(Tok::Ident(name))
    }

    fn number(&mut self, first: char, line: usize, column: usize) -> Result<Tok, ParseError> {
        let mut text = String::from(first);
        if !first.is_ascii_digit() && !matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
            return Err(self.error(
                line,
                column,
                format!("{first:?}"),
                format!("expected a digit after sign {first:?}"),
            ));
        }
        self.digits(&mut text);
        if self.chars.peek() == Some(&'.') {
            self.bump();
            text.push('.');
            if !matches!(self.chars.peek(), Some(c) if c.is_ascii_digit()) {
                let (l, c) = (self.line, self.column);
                let (l, c) = if self.chars.peek().is_none() { self.last } else { (l, c) };
                return Err(self.error(
                    l,
                    c,
                    "non-digit".into(),
                    "expected digits after decimal point".into(),
                ));
            }
            self.digits(&mut text);
        }
        Ok(Tok::Num(text))
    }

    fn digits(&mut self, text: &mut String) {
        while let Some(&c) = self.chars.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
    }

    fn string(&mut self, line: usize, column: usize) -> Result<Tok, ParseError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => {
                    return Err(self.error(
                        line,
                        column,
                        "end of input".into(),
                        "unterminated string literal".into(),
                    ))
                }
                Some('"') => return Ok(Tok::Str(s)),
                Some('\\') => match self.bump() {
                    Some(c @ ('"' | '\\')) => s.push(c),
                    Some(other) => {
                        let (l, c) = self.last;
                        return Err(self.error(
                            l,
                            c,
                            format!("{other:?}"),
                            format!("invalid escape `\\{other}`"),
                        ));
                    }
                    None => {
                        return Err(self.error(
                            line,
                            column,
                            "end of input".into(),
                            "unterminated string literal".into(),
                        ))
                    }
                },
                Some(c) => s.push(c),
            }
        }
    }
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    depth: usize,
    open: Vec<(char, usize, usize)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn advance(&mut self) -> Spanned {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, expected: &[&str]) -> ParseError {
        let t = &self.tokens[self.pos];
        let mut message = format!("expected {}, found {}", expected.join(" or "), t.tok);
        if let Some((c, l, col)) = self.open.last() {
            message.push_str(&format!(" (unclosed `{c}` opened at {l}:{col})"));
        }
        ParseError {
            line: t.line,
            column: t.column,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.to_string(),
            message,
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, label: &str) -> Result<(), ParseError> {
        if self.peek() == &tok {
            let t = self.advance();
            match tok {
                Tok::LBracket => self.open.push(('[', t.line, t.column)),
                Tok::LParen => self.open.push(('(', t.line, t.column)),
                Tok::RBracket | Tok::RParen => {
                    self.open.pop();
                }
                _ => {}
            }
            Ok(())
        } else {
            Err(self.error_here(&[label]))
        }
    }

    fn expect_eof(&self) -> Result<(), ParseError> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            Err(self.error_here(&["end of input"]))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error_here(&["identifier"])),
        }
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            let mut e = self.error_here(&[]);
            e.message = format!("expression nested deeper than {MAX_DEPTH} levels");
            return Err(e);
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<RaExpr, ParseError> {
        self.enter()?;
        let e = self.expr_inner();
        self.depth -= 1;
        e
    }

    fn expr_inner(&mut self) -> Result<RaExpr, ParseError> {
        const START: &[&str] = &["table name", "operator keyword"];
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(RaExpr::Scan(name))
            }
            Tok::Kw(kw) => {
                let kind = kw;
                match kind {
                    "select" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let p = self.pred()?;
                        self.expect(Tok::RBracket, "`]`")?;
                        let input = self.paren_expr()?;
                        Ok(RaExpr::select(p, input))
                    }
                    "project" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let cols = self.ident_list()?;
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(RaExpr::project(cols, self.paren_expr()?))
                    }
                    "rename" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let mut pairs = Vec::new();
                        loop {
                            let old = self.ident()?;
                            self.expect(Tok::Arrow, "`->`")?;
                            let new = self.ident()?;
                            pairs.push((old, new));
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(RaExpr::rename(pairs, self.paren_expr()?))
                    }
                    "distinct" => {
                        self.advance();
                        Ok(RaExpr::distinct(self.paren_expr()?))
                    }
                    "sort" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let mut keys = Vec::new();
                        loop {
                            let column = self.ident()?;
                            let descending = match self.peek() {
                                Tok::Kw("desc") => {
                                    self.advance();
                                    true
                                }
                                Tok::Kw("asc") => {
                                    self.advance();
                                    false
                                }
                                _ => false,
                            };
                            keys.push(SortKey { column, descending });
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(RaExpr::sort(keys, self.paren_expr()?))
                    }
                    "limit" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let count = match self.peek().clone() {
                            Tok::Num(n) if n.bytes().all(|b| b.is_ascii_digit()) => match n.parse::<u64>() {
                                Ok(v) => {
                                    self.advance();
                                    v
                                }
                                Err(_) => {
                                    let mut e = self.error_here(&["non-negative integer"]);
                                    e.message = format!("limit `{n}` is out of range");
                                    return Err(e);
                                }
                            },
                            _ => return Err(self.error_here(&["non-negative integer"])),
                        };
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(RaExpr::limit(count, self.paren_expr()?))
                    }
                    "groupby" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let keys = if matches!(self.peek(), Tok::Semi) {
                            Vec::new()
                        } else {
                            self.ident_list()?
                        };
                        self.expect(Tok::Semi, "`;`")?;
                        let mut aggregates = Vec::new();
                        loop {
                            aggregates.push(self.aggregate()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(Tok::RBracket, "`]`")?;
                        Ok(RaExpr::group_by(keys, aggregates, self.paren_expr()?))
                    }
                    "join" => {
                        self.advance();
                        self.expect(Tok::LBracket, "`[`")?;
                        let p = self.pred()?;
                        self.expect(Tok::RBracket, "`]`")?;
                        let (l, r) = self.paren_pair()?;
                        Ok(RaExpr::join(p, l, r))
                    }
                    kw => {
                        let op = BinaryOp::ALL.into_iter().find(|op| op.keyword() == kw);
                        match op {
                            Some(op) => {
                                self.advance();
                                let (l, r) = self.paren_pair()?;
                                Ok(RaExpr::binary(op, l, r))
                            }
                            None => Err(self.error_here(START)),
                        }
                    }
                }
            }
            _ => Err(self.error_here(START)),
        }
    }

    fn paren_expr(&mut self) -> Result<RaExpr, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let e = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok(e)
    }

    fn paren_pair(&mut self) -> Result<(RaExpr, RaExpr), ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let l = self.expr()?;
        self.expect(Tok::Comma, "`,`")?;
        let r = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        Ok((l, r))
    }

    fn ident_list(&mut self) -> Result<Vec<String>, ParseError> {
        let mut out = vec![self.ident()?];
        while self.eat(&Tok::Comma) {
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn aggregate(&mut self) -> Result<Aggregate, ParseError> {
        let func = match self.peek() {
            Tok::Kw("count") => AggFn::Count,
            Tok::Kw("sum") => AggFn::Sum,
            Tok::Kw("avg") => AggFn::Avg,
            Tok::Kw("min") => AggFn::Min,
            Tok::Kw("max") => AggFn::Max,
            _ => return Err(self.error_here(&["`count`", "`sum`", "`avg`", "`min`", "`max`"])),
        };
        self.advance();
        self.expect(Tok::LParen, "`(`")?;
        let (func, input) = if func == AggFn::Count && self.peek() == &Tok::Star {
            self.advance();
            (AggFn::CountStar, None)
        } else if func == AggFn::Count {
            match self.peek() {
                Tok::Ident(_) => (func, Some(self.ident()?)),
                _ => return Err(self.error_here(&["`*`", "identifier"])),
            }
        } else {
            (func, Some(self.ident()?))
        };
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::Kw("as"), "`as`")?;
        let output = self.ident()?;
        Ok(Aggregate {
            func,
            input,
            output,
        })
    }

    fn pred(&mut self) -> Result<Predicate, ParseError> {
        self.enter()?;
        let r = self.pred_or();
        self.depth -= 1;
        r
    }

    fn pred_or(&mut self) -> Result<Predicate, ParseError> {
        let mut p = self.pred_and()?;
        while self.eat(&Tok::Kw("or")) {
            p = p.or(self.pred_and()?);
        }
        Ok(p)
    }

    fn pred_and(&mut self) -> Result<Predicate, ParseError> {
        let mut p = self.pred_not()?;
        while self.eat(&Tok::Kw("and")) {
            p = p.and(self.pred_not()?);
        }
        Ok(p)
    }

    fn pred_not(&mut self) -> Result<Predicate, ParseError> {
        match self.peek() {
            Tok::Kw("not") => {
                self.advance();
                self.enter()?;
                let inner = self.pred_not();
                self.depth -= 1;
                Ok(inner?.negate())
            }
            Tok::LParen => {
                self.expect(Tok::LParen, "`(`")?;
                let p = self.pred()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(p)
            }
            _ => self.compare(),
        }
    }

    fn compare(&mut self) -> Result<Predicate, ParseError> {
        if self.peek() == &Tok::Kw("contains") {
            self.advance();
            self.expect(Tok::LParen, "`(`")?;
            let term = self.term()?;
            self.expect(Tok::Comma, "`,`")?;
            let needle = match self.peek().clone() {
                Tok::Str(s) => {
                    self.advance();
                    s
                }
                _ => return Err(self.error_here(&["string literal"])),
            };
            self.expect(Tok::RParen, "`)`")?;
            return Ok(Predicate::Contains { term, needle });
        }
        if let (Tok::Ident(column), Tok::Kw("in")) = (self.peek().clone(), self.peek_at(1)) {
            self.advance();
            self.advance();
            self.expect(Tok::LBracket, "`[`")?;
            let mut values = vec![self.literal()?];
            while self.eat(&Tok::Comma) {
                values.push(self.literal()?);
            }
            self.expect(Tok::RBracket, "`]`")?;
            return Ok(Predicate::In { column, values });
        }
        let left = self.term()?;
        let op = match self.peek() {
            Tok::Cmp(op) => *op,
            _ => return Err(self.error_here(&["comparison operator"])),
        };
        self.advance();
        let right = self.term()?;
        Ok(Predicate::Compare { op, left, right })
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        match self.peek().clone() {
            Tok::Ident(c) => {
                self.advance();
                Ok(Term::Column(c))
            }
            Tok::Kw("lower") => {
                self.advance();
                self.enter()?;
                self.expect(Tok::LParen, "`(`")?;
                let inner = self.term();
                self.depth -= 1;
                let inner = inner?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Term::Lower(Box::new(inner)))
            }
            Tok::Str(_) | Tok::Num(_) | Tok::Kw("true" | "false" | "null") => {
                Ok(Term::Literal(self.literal()?))
            }
            _ => Err(self.error_here(&["column", "literal", "`lower`"])),
        }
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        let v = match self.peek().clone() {
            Tok::Str(s) => Value::Text(s),
            Tok::Num(n) => {
                if n.contains('.') {
                    match n.parse::<f64>() {
                        Ok(x) if x.is_finite() => Value::Float(x),
                        _ => {
                            let mut e = self.error_here(&["number"]);
                            e.message = format!("number `{n}` is out of range");
                            return Err(e);
                        }
                    }
                } else {
                    match n.parse::<i64>() {
                        Ok(i) => Value::Int(i),
                        Err(_) => {
                            let mut e = self.error_here(&["number"]);
                            e.message = format!("integer `{n}` is out of range");
                            return Err(e);
                        }
                    }
                }
            }
            Tok::Kw("true") => Value::Bool(true),
            Tok::Kw("false") => Value::Bool(false),
            Tok::Kw("null") => Value::Null,
            _ => return Err(self.error_here(&["literal"])),
        };
        self.advance();
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::format_ra;

    #[test]
    fn parses_selection_over_scan() {
        let e = parse(r#"select[test_result == "NOK"](results)"#).unwrap();
        assert_eq!(
            e,
            RaExpr::select(
                Predicate::col_eq("test_result", Value::text("NOK")),
                RaExpr::scan("results")
            )
        );
        assert_eq!(parse("results").unwrap(), RaExpr::scan("results"));
    }

    #[test]
    fn parses_grouping_over_selection() {
        let e = parse(
            r#"groupby[release; count(*) as n, avg(duration) as mean_d](select[test_result == "OK"](results))"#,
        )
        .unwrap();
        let expected = RaExpr::group_by(
            ["release"],
            vec![
                Aggregate::count_star("n"),
                Aggregate::new(AggFn::Avg, "duration", "mean_d"),
            ],
            RaExpr::select(
                Predicate::col_eq("test_result", Value::text("OK")),
                RaExpr::scan("results"),
            ),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn unmatched_bracket_is_reported() {
        let err = parse("select[(results)").unwrap_err();
        assert_eq!((err.line, err.column), (1, 16));
        assert_eq!(err.found, "`)`");
        assert!(err.expected.contains(&"comparison operator".to_string()));
        assert!(err.message.contains("unclosed"), "{}", err.message);
    }

    #[test]
    fn greek_aliases() {
        assert_eq!(parse("σ[x == 1](t)"), parse("select[x == 1](t)"));
        assert_eq!(parse("π[a](t)"), parse("project[a](t)"));
        assert_eq!(parse("ρ[a -> b](t)"), parse("rename[a -> b](t)"));
        assert_eq!(parse("γ[a; count(*) as n](t)"), parse("groupby[a; count(*) as n](t)"));
    }

    #[test]
    fn every_operator_round_trips() {
        let cases = [
            "project[a, b](t)",
            "rename[a -> x, b -> y](t)",
            "distinct(t)",
            "sort[a desc, b](t)",
            "limit[3](t)",
            "groupby[; count(*) as n, sum(x) as s](t)",
            "union(a, b)",
            "minus(a, b)",
            "intersect(a, b)",
            "times(a, b)",
            "divide(a, b)",
            r#"join[x == y and lower(n) != "a\"b"](a, b)"#,
            "select[not (a == 1 or b in [1, -2.5, true, null])](t)",
            r#"select[contains(lower(name), "tr") or x >= -3](t)"#,
        ];
        for c in cases {
            let e = parse(c).unwrap_or_else(|err| panic!("{c}: {err}"));
            assert_eq!(format_ra(&e), c);
        }
    }

    #[test]
    fn asc_is_default() {
        assert_eq!(parse("sort[a asc](t)"), parse("sort[a](t)"));
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("select[a == 1 or b == 2 and c == 3](t)").unwrap();
        let RaExpr::Select { predicate, .. } = e else { panic!() };
        assert!(matches!(predicate, Predicate::Or(_, ref r) if matches!(**r, Predicate::And(..))));
        let e = parse("select[a == 1 and b == 2 and c == 3](t)").unwrap();
        let RaExpr::Select { predicate, .. } = e else { panic!() };
        assert!(matches!(predicate, Predicate::And(ref l, _) if matches!(**l, Predicate::And(..))));
    }

    #[test]
    fn error_positions_are_one_based_and_inside_input() {
        let err = parse("").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
        let err = parse("select[x == 1](t").unwrap_err();
        assert_eq!((err.line, err.column), (1, 16));
        let err = parse("project[a](t)\n  extra").unwrap_err();
        assert_eq!((err.line, err.column), (2, 3));
        let err = parse("select[x = 1](t)").unwrap_err();
        assert_eq!((err.line, err.column), (1, 10));
        let err = parse(r#"select[x == "ab](t)"#).unwrap_err();
        assert!(err.message.contains("unterminated"));
    }

    #[test]
    fn rejects_keywords_as_identifiers_and_qualified_names() {
        assert!(parse("project[count](t)").is_err());
        assert!(parse("select[a.x == 1](t)").is_err());
        assert!(parse("select(t)").is_err());
    }

    #[test]
    fn literal_ranges() {
        assert!(parse("select[x == 9223372036854775807](t)").is_ok());
        assert!(parse("select[x == -9223372036854775808](t)").is_ok());
        assert!(parse("select[x == 9223372036854775808](t)").is_err());
        assert!(parse("limit[-1](t)").is_err());
        assert!(parse("select[x == 1.](t)").is_err());
        assert!(parse("select[x == +2](t)").is_ok());
    }

    #[test]
    fn deep_nesting_is_an_error_not_a_crash() {
        let deep = "distinct(".repeat(10_000) + "t" + &")".repeat(10_000);
        let err = parse(&deep).unwrap_err();
        assert!(err.message.contains("nested"));
        let deep = format!("select[{}x == 1{}](t)", "(".repeat(5000), ")".repeat(5000));
        assert!(parse(&deep).is_err());
        let deep = format!("select[{}x == 1](t)", "not ".repeat(5000));
        assert!(parse(&deep).is_err());
    }

    #[test]
    fn invalid_utf8_is_a_parse_error() {
        let err = parse_bytes(b"sel\xffect").unwrap_err();
        assert_eq!((err.line, err.column), (1, 4));
    }

    #[test]
    fn backtick_identifiers() {
        let e = parse("project[`Test Result`, `select`](`odd``name`)").unwrap();
        assert_eq!(
            e,
            RaExpr::project(["Test Result", "select"], RaExpr::scan("odd`name"))
        );
        assert_eq!(format_ra(&e), "project[`Test Result`, `select`](`odd``name`)");
        assert_eq!(parse("project[``](t)").unwrap_err().column, 9);
        assert!(parse("project[`abc](t)").is_err());
    }
}
