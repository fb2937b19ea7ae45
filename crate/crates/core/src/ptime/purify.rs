use std::collections::{BTreeMap, BTreeSet};
use std::ops::ControlFlow;

use crate::eval::for_each_embedding;
use crate::model::{Database, Query, Valuation, Value};

fn relevant(q: &Query, db: &Database) -> BTreeMap<String, BTreeSet<Vec<Value>>> {
    let mut used: BTreeMap<String, BTreeSet<Vec<Value>>> = BTreeMap::new();
    let _ = for_each_embedding(q, db, &Valuation::new(), |theta| {
        for a in q.atoms() {
            let fact = a.ground(theta).expect("embedding binds every variable");
            used.entry(a.relation().to_string()).or_default().insert(fact);
        }
        ControlFlow::Continue(())
    });
    used
}

/// Deletes the block of every fact that occurs in no embedding of `q`,
/// until every remaining fact occurs in one. Relations outside `q` are
/// dropped.
///
/// Whole blocks go because a repair choosing the irrelevant fact can only
/// be satisfied without it; dropping the fact alone would force another
/// choice from its block.
pub fn purify(q: &Query, db: &Database) -> Database {
    let mut cur = db.restrict_to(q);
    loop {
        let used = relevant(q, &cur);
        let key_len: BTreeMap<&str, usize> =
            q.atoms().iter().map(|a| (a.relation(), a.decl.key_len)).collect();
        let doomed: BTreeSet<(String, Vec<Value>)> = cur
            .facts()
            .filter(|f| !used.get(&f.relation).is_some_and(|ts| ts.contains(&f.values)))
            .map(|f| {
                let k = key_len[f.relation.as_str()];
                (f.relation, f.values[..k].to_vec())
            })
            .collect();
        if doomed.is_empty() {
            return cur;
        }
        cur.retain(|r, t| !doomed.contains(&(r.to_string(), t[..key_len[r]].to_vec())));
    }
}

/// True when every fact of `db` is relevant for `q`.
pub fn is_purified(q: &Query, db: &Database) -> bool {
    purify(q, db).len() == db.restrict_to(q).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};

    #[test]
    fn constant_mismatch_is_irrelevant() {
        let q = parse_query("R('a' | y, z)").unwrap();
        let db = parse_database("R(a, b, c)\nR(d, b, f)", &q).unwrap();
        let p = purify(&q, &db);
        assert_eq!(p.len(), 1);
        assert!(p.contains("R", &[Value::plain("a"), Value::plain("b"), Value::plain("c")]));
    }

    #[test]
    fn irrelevant_fact_takes_its_block() {
        let q = parse_query("R(x | y)\nS(y | x)").unwrap();
        let db = parse_database("R(1, a)\nR(1, b)\nS(a, 1)\nR(2, c)\nS(c, 2)", &q).unwrap();
        let p = purify(&q, &db);
        assert_eq!(p.to_string(), "R(2, c)\nS(c, 2)\n");
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q, &p).unwrap());
    }

    #[test]
    fn relevant_db_unchanged() {
        let q = parse_query("R(x|y)\nS(y|x)").unwrap();
        let db = parse_database("R(1,a)\nS(a,1)\nR(2,b)\nS(b,2)", &q).unwrap();
        assert_eq!(purify(&q, &db), db);
        assert!(is_purified(&q, &db));
    }
}
