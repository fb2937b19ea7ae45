use std::collections::{BTreeMap, BTreeSet};

use super::fresh::Namer;
use crate::attack::{attack_graph, attacked_variables};
use crate::error::{CqaError, Result};
use crate::eval::embeddings;
use crate::fd::{fd_of_query, VarSet};
use crate::model::{Atom, Database, Mode, Query, RelationDecl, Term, Value, Var};

/// Variable pairs `(x, z)` with `x -> z` implied by the whole query but
/// not by its consistent atoms alone, such that no atom whose key `x`
/// determines attacks `x` or `z`. A query without such pairs is saturated.
pub fn violations(q: &Query) -> Vec<(Var, Var)> {
    let all = fd_of_query(q.atoms());
    let cons = fd_of_query(q.consistent_atoms());
    let attacked: Vec<VarSet> = (0..q.len()).map(|i| attacked_variables(q, i)).collect();
    let vars = q.vars_in_order();
    let mut out = Vec::new();
    for x in &vars {
        let xs: VarSet = [x.clone()].into();
        let from_all = all.closure(&xs);
        let from_cons = cons.closure(&xs);
        for z in &vars {
            if z == x || !from_all.contains(z) || from_cons.contains(z) {
                continue;
            }
            let blocked = q.atoms().iter().enumerate().any(|(i, f)| {
                f.key_vars().is_subset(&from_all)
                    && (attacked[i].contains(x) || attacked[i].contains(z))
            });
            if !blocked {
                out.push((x.clone(), z.clone()));
            }
        }
    }
    out
}

pub fn is_saturated(q: &Query) -> bool {
    violations(q).is_empty()
}

/// Removes every block containing a value of `x` with two `z` values
/// across embeddings, until `x -> z` holds on the embeddings.
fn enforce(q: &Query, db: &mut Database, x: &Var, z: &Var) {
    loop {
        let mut images: BTreeMap<Value, BTreeSet<Value>> = BTreeMap::new();
        for theta in embeddings(q, db) {
            images
                .entry(theta.get(x).expect("bound").clone())
                .or_default()
                .insert(theta.get(z).expect("bound").clone());
        }
        let Some(bad) = images.into_iter().find(|(_, zs)| zs.len() > 1).map(|(a, _)| a) else {
            return;
        };
        let key_len: BTreeMap<String, usize> = db
            .schema()
            .iter()
            .map(|(r, d)| (r.clone(), d.key_len))
            .collect();
        let doomed: BTreeSet<(String, Vec<Value>)> = db
            .facts()
            .filter(|f| f.values.contains(&bad))
            .map(|f| {
                let k = key_len[&f.relation];
                (f.relation, f.values[..k].to_vec())
            })
            .collect();
        db.retain(|r, t| !doomed.contains(&(r.to_string(), t[..key_len[r]].to_vec())));
    }
}

/// Adds consistent atoms `T(x | z)` for each violating pair until the
/// query is saturated, deleting the blocks that contradict the new
/// dependency first.
pub fn saturate(q: &Query, db: &Database) -> Result<(Query, Database)> {
    if attack_graph(q).has_strong_cycle() {
        return Err(CqaError::Precondition(
            "saturation needs an attack graph without strong cycles".into(),
        ));
    }
    let mut q = q.clone();
    let mut db = db.restrict_to(&q);
    let mut namer = Namer::for_query(&q);
    while let Some((x, z)) = violations(&q).into_iter().next() {
        enforce(&q, &mut db, &x, &z);
        let t = Atom {
            decl: RelationDecl::new(namer.relation("T"), 2, 1, Mode::Consistent),
            terms: vec![Term::Var(x.clone()), Term::Var(z.clone())],
        };
        let rows: BTreeSet<Vec<Value>> = embeddings(&q, &db)
            .iter()
            .map(|theta| t.ground(theta).expect("bound"))
            .collect();
        db.declare(t.decl.clone());
        for row in rows {
            db.insert_tuple(t.relation(), row);
        }
        let mut atoms = q.atoms().to_vec();
        atoms.push(t);
        q = Query::from_atoms_unchecked(atoms);
    }
    Ok((q, db))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};
    use crate::ptime::typing::type_tag;

    pub(crate) fn unsaturated() -> Query {
        parse_query("R(x | y)\nS1(y | z)\nS2(y | z)\nconsistent T0(x, z | w)\nU(w | x)").unwrap()
    }

    #[test]
    fn two_cycle_saturated() {
        assert!(is_saturated(&parse_query("R(x|y)\nS(y|x)").unwrap()));
    }

    #[test]
    fn example_gets_consistent_edge() {
        let q = unsaturated();
        assert_eq!(violations(&q), vec![(Var::new("y"), Var::new("z"))]);
        let (q2, _) = saturate(&q, &Database::for_query(&q)).unwrap();
        assert!(is_saturated(&q2));
        assert_eq!(q2.len(), 6);
        assert_eq!(q2.atoms()[5].to_string(), "consistent T$1(y | z)");
    }

    #[test]
    fn saturated_is_identity() {
        let q = parse_query("R(x|y)\nS(y|x)").unwrap();
        let db = parse_database("R(1,a)\nR(1,b)\nS(a,1)", &q).unwrap();
        assert_eq!(saturate(&q, &db).unwrap(), (q, db));
    }

    #[test]
    fn preserves_certainty() {
        let q = unsaturated();
        let db = parse_database(
            "R(1, a)\nR(1, b)\nS1(a, 5)\nS1(a, 6)\nS2(a, 5)\nS2(b, 6)\nS1(b, 6)\n\
             T0(1, 5, k)\nT0(1, 6, k)\nU(k, 1)",
            &q,
        )
        .unwrap();
        let db = type_tag(&q, &db).unwrap();
        let (q2, db2) = saturate(&q, &db).unwrap();
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q2, &db2).unwrap());
    }
}
