use std::collections::BTreeSet;

use crate::error::{CqaError, Result};
use crate::model::{Atom, Database, Query, Term, Value};

/// Shape required before typing: no variable repeats inside an atom and
/// constants sit only at the key position of simple-key atoms.
pub fn is_canonical(a: &Atom) -> bool {
    let mut seen = BTreeSet::new();
    for (p, t) in a.terms.iter().enumerate() {
        match t {
            Term::Var(v) => {
                if !seen.insert(v) {
                    return false;
                }
            }
            Term::Const(_) => {
                if !(p == 0 && a.decl.is_simple_key()) {
                    return false;
                }
            }
        }
    }
    true
}

pub(crate) fn check_shape(q: &Query) -> Result<()> {
    match q.atoms().iter().find(|a| !is_canonical(a)) {
        Some(a) => Err(CqaError::Shape(format!(
            "atom {a} repeats a variable or holds a constant outside a simple key"
        ))),
        None => Ok(()),
    }
}

/// Tags every value at a variable position with that variable. Facts that
/// disagree with a query constant are dropped.
pub fn type_tag(q: &Query, db: &Database) -> Result<Database> {
    check_shape(q)?;
    let mut out = Database::for_query(q);
    for a in q.atoms() {
        'facts: for t in db.tuples(a.relation()) {
            let mut tagged: Vec<Value> = Vec::with_capacity(t.len());
            for (term, v) in a.terms.iter().zip(t) {
                match term {
                    Term::Const(c) => {
                        if c != v {
                            continue 'facts;
                        }
                        tagged.push(v.clone());
                    }
                    Term::Var(x) => tagged.push(v.typed(x)),
                }
            }
            out.insert_tuple(a.relation(), tagged);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Var;
    use crate::parse::{parse_database, parse_query};

    #[test]
    fn tags_by_variable() {
        let q = parse_query("R(x|y)\nS(y|x)").unwrap();
        let db = parse_database("R(1,a)\nS(a,1)", &q).unwrap();
        let t = type_tag(&q, &db).unwrap();
        let (x, y) = (Var::new("x"), Var::new("y"));
        let one = Value::plain("1").typed(&x);
        let a = Value::plain("a").typed(&y);
        assert!(t.contains("R", &[one.clone(), a.clone()]));
        assert!(t.contains("S", &[a, one]));
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn key_constant_mismatch_dropped() {
        let q = parse_query("R('a'|y)").unwrap();
        let db = parse_database("R(d, b)", &q).unwrap();
        assert!(type_tag(&q, &db).unwrap().is_empty());
    }

    #[test]
    fn rejects_unsimplified() {
        let q = parse_query("R(x|x)").unwrap();
        assert!(matches!(
            type_tag(&q, &Database::for_query(&q)),
            Err(CqaError::Shape(_))
        ));
        let q = parse_query("R(x|'b')").unwrap();
        assert!(type_tag(&q, &Database::for_query(&q)).is_err());
    }

    #[test]
    fn retagging_is_identity() {
        let q = parse_query("R(x|y)").unwrap();
        let db = parse_database("R(1,a)\nR(1,b)", &q).unwrap();
        let once = type_tag(&q, &db).unwrap();
        assert_eq!(type_tag(&q, &once).unwrap(), once);
    }
}
