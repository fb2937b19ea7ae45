//! Conjunctive-query satisfaction by backtracking.

use std::ops::ControlFlow;

use crate::model::{Atom, Database, Query, Term, Valuation, Value};

fn bound_count(atom: &Atom, theta: &Valuation) -> usize {
    atom.terms
        .iter()
        .filter(|t| match t {
            Term::Const(_) => true,
            Term::Var(v) => theta.contains(v),
        })
        .count()
}

/// Leading values of the atom that are fixed under `theta`.
fn bound_prefix(atom: &Atom, theta: &Valuation) -> Vec<Value> {
    atom.terms
        .iter()
        .map_while(|t| match t {
            Term::Const(c) => Some(c.clone()),
            Term::Var(v) => theta.get(v).cloned(),
        })
        .collect()
}

fn search<F>(atoms: &mut Vec<&Atom>, db: &Database, theta: &Valuation, f: &mut F) -> ControlFlow<()>
where
    F: FnMut(&Valuation) -> ControlFlow<()>,
{
    if atoms.is_empty() {
        return f(theta);
    }
    let (best, _) = atoms
        .iter()
        .enumerate()
        .max_by_key(|(i, a)| (bound_count(a, theta), std::cmp::Reverse(*i)))
        .expect("nonempty");
    let atom = atoms.swap_remove(best);
    let prefix = bound_prefix(atom, theta);
    let mut result = ControlFlow::Continue(());
    for tuple in db.tuples_with_prefix(atom.relation(), &prefix) {
        if let Some(next) = atom.match_tuple(tuple, theta) {
            if search(atoms, db, &next, f).is_break() {
                result = ControlFlow::Break(());
                break;
            }
        }
    }
    atoms.push(atom);
    let last = atoms.len() - 1;
    atoms.swap(best, last);
    result
}

/// Calls `f` on every valuation extending `init` that embeds `q` into `db`.
/// Enumeration stops early when `f` breaks.
pub fn for_each_embedding<F>(q: &Query, db: &Database, init: &Valuation, mut f: F) -> ControlFlow<()>
where
    F: FnMut(&Valuation) -> ControlFlow<()>,
{
    let mut atoms: Vec<&Atom> = q.atoms().iter().collect();
    search(&mut atoms, db, init, &mut f)
}

/// All embeddings of `q` into `db`.
pub fn embeddings(q: &Query, db: &Database) -> Vec<Valuation> {
    let mut out = Vec::new();
    let _ = for_each_embedding(q, db, &Valuation::new(), |theta| {
        out.push(theta.clone());
        ControlFlow::Continue(())
    });
    out
}

/// True iff some valuation extending `init` embeds `q` into `db`.
pub fn satisfiable_from(q: &Query, db: &Database, init: &Valuation) -> bool {
    for_each_embedding(q, db, init, |_| ControlFlow::Break(())).is_break()
}

/// True iff `db` satisfies the Boolean query `q`.
pub fn eval_bcq(q: &Query, db: &Database) -> bool {
    satisfiable_from(q, db, &Valuation::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{substitute, Var};
    use crate::parse::{parse_database, parse_query};
    use proptest::prelude::*;

    fn check(q: &str, db: &str) -> bool {
        let q = parse_query(q).unwrap();
        let db = parse_database(db, &q).unwrap();
        eval_bcq(&q, &db)
    }

    #[test]
    fn direct_homomorphism() {
        assert!(check("R(x|y)\nS(y|x)", "R(1,a)\nS(a,1)"));
        assert!(!check("R(x|y)\nS(y|x)", "R(1,a)\nS(b,1)"));
    }

    #[test]
    fn empty_query_holds() {
        assert!(check("", ""));
    }

    #[test]
    fn constants_and_repeats_filter() {
        assert!(check("R(x|x, 'b')", "R(1,1,b)"));
        assert!(!check("R(x|x, 'b')", "R(1,2,b)\nR(1,1,c)"));
    }

    #[test]
    fn embeddings_are_complete() {
        let q = parse_query("R(x|y)\nS(y|z)").unwrap();
        let db = parse_database("R(1,a)\nR(2,a)\nS(a,p)\nS(a,q)\nS(b,r)", &q).unwrap();
        assert_eq!(embeddings(&q, &db).len(), 4);
    }

    fn small_db() -> impl Strategy<Value = Vec<(u8, u8, u8)>> {
        prop::collection::vec((0u8..2, 0u8..3, 0u8..3), 0..8)
    }

    fn build(q: &Query, rows: &[(u8, u8, u8)]) -> Database {
        let mut db = Database::for_query(q);
        for &(r, a, b) in rows {
            let rel = if r == 0 { "R" } else { "S" };
            db.insert(crate::model::Fact::new(
                rel,
                vec![Value::plain(a.to_string()), Value::plain(b.to_string())],
            ))
            .unwrap();
        }
        db
    }

    proptest! {
        #[test]
        fn monotone(rows in small_db(), extra in small_db()) {
            let q = parse_query("R(x|y)\nS(y|x)").unwrap();
            let small = build(&q, &rows);
            let mut all = rows.clone();
            all.extend(extra);
            let big = build(&q, &all);
            prop_assert!(!eval_bcq(&q, &small) || eval_bcq(&q, &big));
        }

        #[test]
        fn substitution_matches_preapplied_valuation(rows in small_db(), a in 0u8..3) {
            let q = parse_query("R(x|y)\nS(y|z)").unwrap();
            let db = build(&q, &rows);
            let value = Value::plain(a.to_string());
            let ground = substitute(&q, &[Var::new("x")], std::slice::from_ref(&value)).unwrap();
            let init: Valuation = [(Var::new("x"), value)].into_iter().collect();
            prop_assert_eq!(eval_bcq(&ground, &db), satisfiable_from(&q, &db, &init));
        }
    }
}
