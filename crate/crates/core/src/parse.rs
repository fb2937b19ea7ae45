//! Text formats for queries and databases.
//!
//! A query file holds one atom per line:
//!
//! ```text
//! # comment
//! R(x | y)
//! consistent S(y | 'b')
//! ```
//!
//! Terms before `|` form the primary key; without `|` the whole tuple is
//! the key. Variables start with a lowercase letter; constants are quoted
//! or start with a digit or an uppercase letter.
//!
//! A database file holds one fact per line, `R(1, a)`. Every term of a
//! fact is a constant, so bare lowercase tokens are allowed there.

use crate::error::{CqaError, Result};
use crate::model::{Atom, Database, Fact, Mode, Query, RelationDecl, Term, Value, Var};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    Bar,
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>> {
    let err = |message: String| CqaError::Parse {
        line: lineno,
        message,
    };
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '#' => break,
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' | ',' | '|' => {
                chars.next();
                out.push(match c {
                    '(' => Token::LParen,
                    ')' => Token::RParen,
                    ',' => Token::Comma,
                    _ => Token::Bar,
                });
            }
            '\'' | '"' => {
                let quote = c;
                chars.next();
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some(ch) if ch == quote => break,
                        Some(ch) => s.push(ch),
                        None => return Err(err("unterminated quoted constant".into())),
                    }
                }
                out.push(Token::Quoted(s));
            }
            _ => {
                let mut s = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || "(),|#'\"".contains(ch) {
                        break;
                    }
                    s.push(ch);
                    chars.next();
                }
                out.push(Token::Word(s));
            }
        }
    }
    Ok(out)
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '$')
}

fn is_variable(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// One parsed line: relation name, terms split at the bar, mode keyword.
struct RawAtom {
    consistent: bool,
    name: String,
    key: Vec<Token>,
    rest: Option<Vec<Token>>,
}

fn parse_line(tokens: Vec<Token>, lineno: usize, allow_keyword: bool) -> Result<RawAtom> {
    let err = |message: &str| CqaError::Parse {
        line: lineno,
        message: message.to_string(),
    };
    let mut it = tokens.into_iter().peekable();
    let mut consistent = false;
    let mut name = match it.next() {
        Some(Token::Word(w)) => w,
        _ => return Err(err("expected a relation name")),
    };
    if allow_keyword && name == "consistent" {
        consistent = true;
        name = match it.next() {
            Some(Token::Word(w)) => w,
            _ => return Err(err("expected a relation name after `consistent`")),
        };
    }
    if !is_identifier(&name) {
        return Err(err(&format!("invalid relation name `{name}`")));
    }
    if it.next() != Some(Token::LParen) {
        return Err(err("expected `(`"));
    }
    let mut key = Vec::new();
    let mut rest: Option<Vec<Token>> = None;
    let mut expect_term = true;
    loop {
        let tok = it.next().ok_or_else(|| err("missing `)`"))?;
        match tok {
            Token::RParen => {
                if expect_term {
                    return Err(err("expected a term before `)`"));
                }
                break;
            }
            Token::Comma if !expect_term => expect_term = true,
            Token::Bar if !expect_term && rest.is_none() => {
                rest = Some(Vec::new());
                expect_term = true;
            }
            Token::Word(_) | Token::Quoted(_) if expect_term => {
                match rest.as_mut() {
                    Some(r) => r.push(tok),
                    None => key.push(tok),
                }
                expect_term = false;
            }
            _ => return Err(err("unexpected token")),
        }
    }
    if it.next().is_some() {
        return Err(err("trailing input after `)`"));
    }
    Ok(RawAtom {
        consistent,
        name,
        key,
        rest,
    })
}

fn query_term(tok: Token, lineno: usize) -> Result<Term> {
    match tok {
        Token::Quoted(s) => Ok(Term::Const(Value::plain(s))),
        Token::Word(w) if is_variable(&w) => Ok(Term::Var(Var::new(w))),
        Token::Word(w) if w.starts_with(|c: char| c.is_ascii_digit() || c.is_uppercase()) => {
            Ok(Term::Const(Value::plain(w)))
        }
        Token::Word(w) => Err(CqaError::Parse {
            line: lineno,
            message: format!("`{w}` is neither a variable nor a constant"),
        }),
        _ => unreachable!("only term tokens are collected"),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// Parses a query; relation signatures are read off the atoms.
pub fn parse_query(text: &str) -> Result<Query> {
    let mut atoms = Vec::new();
    for (lineno, line) in lines(text) {
        let tokens = tokenize(line, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        let raw = parse_line(tokens, lineno, true)?;
        let key_len = raw.key.len();
        let mut terms = Vec::new();
        for tok in raw.key.into_iter().chain(raw.rest.into_iter().flatten()) {
            terms.push(query_term(tok, lineno)?);
        }
        let mode = if raw.consistent {
            Mode::Consistent
        } else {
            Mode::Inconsistent
        };
        let decl = RelationDecl {
            name: raw.name,
            arity: terms.len(),
            key_len,
            mode,
        };
        atoms.push(Atom::new(decl, terms)?);
    }
    Query::new(atoms)
}

/// Parses a database over the relations of `q`.
pub fn parse_database(text: &str, q: &Query) -> Result<Database> {
    let mut db = Database::for_query(q);
    for (lineno, line) in lines(text) {
        let tokens = tokenize(line, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        let raw = parse_line(tokens, lineno, false)?;
        if let (Some(rest), Some(decl)) = (&raw.rest, db.decl(&raw.name)) {
            if raw.key.len() != decl.key_len && !rest.is_empty() {
                return Err(CqaError::Parse {
                    line: lineno,
                    message: format!(
                        "fact for `{}` places the key bar after {} values, key length is {}",
                        raw.name,
                        raw.key.len(),
                        decl.key_len
                    ),
                });
            }
        }
        let values = raw
            .key
            .into_iter()
            .chain(raw.rest.into_iter().flatten())
            .map(|t| match t {
                Token::Word(w) | Token::Quoted(w) => Value::plain(w),
                _ => unreachable!("only term tokens are collected"),
            })
            .collect();
        db.insert(Fact::new(raw.name, values))?;
    }
    db.check_consistent_relations()?;
    Ok(db)
}

/// Parses a query from inline text with atoms separated by newlines or `;`.
pub fn parse_query_inline(text: &str) -> Result<Query> {
    parse_query(&text.replace(';', "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_constants_and_keys() {
        let q = parse_query("R(x | y)\nS(y | 'b')").unwrap();
        assert_eq!(q.len(), 2);
        let s = &q.atoms()[1];
        assert_eq!(s.decl.key_len, 1);
        assert_eq!(s.terms[1], Term::constant("b"));
        assert_eq!(s.terms[0], Term::var("y"));
    }

    #[test]
    fn empty_input_is_empty_query() {
        assert!(parse_query("").unwrap().is_empty());
        assert!(parse_query("# nothing\n\n").unwrap().is_empty());
    }

    #[test]
    fn self_join_is_rejected() {
        assert_eq!(
            parse_query("R(x|y)\nR(y|x)").unwrap_err(),
            CqaError::SelfJoin("R".into())
        );
    }

    #[test]
    fn missing_bar_makes_full_key() {
        let q = parse_query("S(y, z)").unwrap();
        assert_eq!(q.atoms()[0].decl.key_len, 2);
        assert_eq!(q.atoms()[0].decl.arity, 2);
    }

    #[test]
    fn consistent_keyword_sets_mode() {
        let q = parse_query("consistent T(x, z | w)").unwrap();
        assert!(q.atoms()[0].is_consistent());
        assert_eq!(q.atoms()[0].decl.key_len, 2);
    }

    #[test]
    fn syntax_errors() {
        for bad in ["R(x|", "R()", "R(|y)", "R(x||y)", "R(x) extra", "R(-x)", "(x)"] {
            assert!(
                matches!(parse_query(bad), Err(CqaError::Parse { .. })),
                "accepted {bad}"
            );
        }
    }

    #[test]
    fn database_blocks_and_errors() {
        let q = parse_query("R(x|y)").unwrap();
        let db = parse_database("R(1,a)\nR(1,b)", &q).unwrap();
        let blocks = db.blocks("R").unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].len(), 2);

        assert_eq!(
            parse_database("S(1,a)", &q).unwrap_err(),
            CqaError::UnknownRelation("S".into())
        );
        assert!(matches!(
            parse_database("R(1,a,b)", &q),
            Err(CqaError::ArityMismatch { .. })
        ));

        let qc = parse_query("consistent R(x|y)").unwrap();
        assert!(matches!(
            parse_database("R(1,a)\nR(1,b)", &qc),
            Err(CqaError::InconsistentConsistentRelation { .. })
        ));
    }

    #[test]
    fn database_accepts_bar_and_quotes() {
        let q = parse_query("R(x|y)").unwrap();
        let db = parse_database("R(1 | 'hello world')  # note", &q).unwrap();
        assert!(db.contains("R", &[Value::plain("1"), Value::plain("hello world")]));
    }

    #[test]
    fn printed_query_round_trips() {
        let text = "R('a', x | y, 'lower', Up)\nconsistent S(y)\nT(x, y | 7)";
        let q = parse_query(text).unwrap();
        assert_eq!(parse_query(&q.to_string()).unwrap(), q);
    }
}
