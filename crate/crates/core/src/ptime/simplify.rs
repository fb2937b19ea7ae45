use std::collections::BTreeMap;

use super::fresh::{Namer, ValueSupply};
use super::purify::purify;
use super::typing::is_canonical;
use crate::model::{Atom, Database, Mode, Query, RelationDecl, Term, Value, Var};

fn canonical_form(a: &Atom, namer: &mut Namer) -> Atom {
    let key_vars: Vec<Var> = {
        let mut seen = Vec::new();
        for t in a.key_terms() {
            if let Term::Var(v) = t {
                if !seen.contains(v) {
                    seen.push(v.clone());
                }
            }
        }
        seen
    };
    let key: Vec<Term> = if key_vars.is_empty() {
        vec![a.key_terms()[0].clone()]
    } else {
        key_vars.iter().cloned().map(Term::Var).collect()
    };
    let rest: Vec<Term> = a
        .vars_in_order()
        .into_iter()
        .filter(|v| !key_vars.contains(v))
        .map(Term::Var)
        .collect();
    let decl = RelationDecl::new(
        namer.relation(a.relation()),
        key.len() + rest.len(),
        key.len(),
        a.mode(),
    );
    Atom {
        decl,
        terms: key.into_iter().chain(rest).collect(),
    }
}

/// Rewrites every atom into a canonical one: key variables once each,
/// then the remaining variables once each, no constants except a single
/// key constant when the key has no variables. Atoms already canonical
/// are kept under their own name.
pub fn canonicalize_atoms(q: &Query, db: &Database) -> (Query, Database) {
    let db = purify(q, db);
    let mut namer = Namer::for_query(q);
    let mut atoms = Vec::with_capacity(q.len());
    let mut out_facts: Vec<(String, Vec<Value>)> = Vec::new();
    for a in q.atoms() {
        if is_canonical(a) {
            for t in db.tuples(a.relation()) {
                out_facts.push((a.relation().to_string(), t.clone()));
            }
            atoms.push(a.clone());
            continue;
        }
        let g = canonical_form(a, &mut namer);
        for t in db.tuples(a.relation()) {
            let theta = a
                .match_tuple(t, &Default::default())
                .expect("purified fact matches its atom");
            let image = g.ground(&theta).expect("canonical atom uses the atom's variables");
            out_facts.push((g.relation().to_string(), image));
        }
        atoms.push(g);
    }
    let q2 = Query::from_atoms_unchecked(atoms);
    let mut out = Database::for_query(&q2);
    for (r, t) in out_facts {
        out.insert_tuple(&r, t);
    }
    (q2, out)
}

/// Replaces each inconsistent atom `R(x1..xk | y)` with k > 1 by the
/// consistent pair `R1(x1..xk | w)`, `R2(w | x1..xk)` and `S(w | y)`,
/// where `w` is a fresh variable and each distinct key value gets its own
/// fresh surrogate. Expects canonical atoms.
pub fn simple_key_normalize(q: &Query, db: &Database) -> (Query, Database) {
    let mut namer = Namer::for_query(q);
    let mut supply = ValueSupply::new(q, db);
    let mut atoms = Vec::with_capacity(q.len());
    let mut out_facts: Vec<(String, Vec<Value>)> = Vec::new();
    for a in q.atoms() {
        let k = a.decl.key_len;
        if a.is_consistent() || k == 1 {
            for t in db.tuples(a.relation()) {
                out_facts.push((a.relation().to_string(), t.clone()));
            }
            atoms.push(a.clone());
            continue;
        }
        let w = namer.var("w");
        let key = a.key_terms().to_vec();
        let rest = a.nonkey_terms().to_vec();
        let mk = |name: String, key: Vec<Term>, rest: Vec<Term>, mode| Atom {
            decl: RelationDecl::new(name, key.len() + rest.len(), key.len(), mode),
            terms: key.into_iter().chain(rest).collect(),
        };
        let base = a.relation();
        let r1 = mk(namer.relation(base), key.clone(), vec![Term::Var(w.clone())], Mode::Consistent);
        let r2 = mk(namer.relation(base), vec![Term::Var(w.clone())], key, Mode::Consistent);
        let s = mk(namer.relation(base), vec![Term::Var(w.clone())], rest, Mode::Inconsistent);
        let mut surrogate: BTreeMap<Vec<Value>, Value> = BTreeMap::new();
        for t in db.tuples(a.relation()) {
            let kv = t[..k].to_vec();
            let h = surrogate
                .entry(kv.clone())
                .or_insert_with(|| supply.mint(&w))
                .clone();
            out_facts.push((r1.relation().to_string(), kv.iter().cloned().chain([h.clone()]).collect()));
            out_facts.push((r2.relation().to_string(), [h.clone()].into_iter().chain(kv).collect()));
            out_facts.push((s.relation().to_string(), [h].into_iter().chain(t[k..].iter().cloned()).collect()));
        }
        atoms.extend([r1, r2, s]);
    }
    let q2 = Query::from_atoms_unchecked(atoms);
    let mut out = Database::for_query(&q2);
    for (r, t) in out_facts {
        out.insert_tuple(&r, t);
    }
    (q2, out)
}

/// Purifies, canonicalizes and normalizes keys. The result has every atom
/// canonical and every inconsistent atom simple-key.
pub fn simplify(q: &Query, db: &Database) -> (Query, Database) {
    let (q1, db1) = canonicalize_atoms(q, db);
    simple_key_normalize(&q1, &db1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};

    #[test]
    fn canonical_query_untouched() {
        let q = parse_query("R(x|y)\nS(y|z)").unwrap();
        let db = parse_database("R(1,a)\nS(a,b)", &q).unwrap();
        let (q2, db2) = simplify(&q, &db);
        assert_eq!(q2, q);
        assert_eq!(db2, db);
    }

    #[test]
    fn repeated_and_constant_terms_removed() {
        let q = parse_query("R(x, 'c' | x, y, 'd')").unwrap();
        let db = parse_database("R(1, c, 1, a, d)\nR(2, c, 3, a, d)\nR(1, c, 1, b, d)", &q).unwrap();
        let (q2, db2) = canonicalize_atoms(&q, &db);
        let a = &q2.atoms()[0];
        assert_eq!(a.to_string(), "R$1(x | y)");
        assert_eq!(db2.len(), 2);
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q2, &db2).unwrap());
    }

    #[test]
    fn constant_key_kept() {
        let q = parse_query("R('a', 'b' | y)").unwrap();
        let (q2, _) = canonicalize_atoms(&q, &Database::for_query(&q));
        assert_eq!(q2.atoms()[0].to_string(), "R$1('a' | y)");
    }

    #[test]
    fn composite_key_split() {
        let q = parse_query("R(x, y | z)\nS(z | x)").unwrap();
        let db = parse_database("R(1, 2, a)\nR(1, 2, b)\nR(1, 3, a)\nS(a, 1)\nS(b, 1)", &q).unwrap();
        let (q2, db2) = simplify(&q, &db);
        assert_eq!(q2.len(), 4);
        assert_eq!(q2.icard(), 2);
        assert!(q2
            .atoms()
            .iter()
            .filter(|a| !a.is_consistent())
            .all(|a| a.decl.is_simple_key()));
        db2.check_consistent_relations().unwrap();
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q2, &db2).unwrap());
    }
}
