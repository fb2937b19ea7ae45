use crate::error::{CqaError, Result};
use crate::model::{Atom, Database, Mode, Query, RelationDecl};

/// A consistent atom replaced by two inconsistent copies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Desugared {
    pub query: Query,
    pub original: String,
    pub copies: [String; 2],
}

impl Desugared {
    /// Companion database: every fact of the original relation is stored
    /// in both copies.
    pub fn database(&self, db: &Database) -> Database {
        let mut out = Database::for_query(&self.query);
        for f in db.facts() {
            if f.relation == self.original {
                for c in &self.copies {
                    out.insert_tuple(c, f.values.clone());
                }
            } else if self.query.atom(&f.relation).is_some() {
                out.insert_tuple(&f.relation, f.values);
            }
        }
        out
    }
}

fn unused_name(q: &Query, wanted: String) -> String {
    if q.atom(&wanted).is_none() {
        return wanted;
    }
    (1..)
        .map(|n| format!("{wanted}${n}"))
        .find(|c| q.atom(c).is_none())
        .expect("unbounded search")
}

/// Replaces the first consistent atom `R(x | y)` by `R1(x | y)` and
/// `R2(x | y)`, both inconsistent.
pub fn desugar_consistent(q: &Query) -> Result<Desugared> {
    let i = q
        .atoms()
        .iter()
        .position(Atom::is_consistent)
        .ok_or(CqaError::NoConsistentAtom)?;
    desugar_at(q, i)
}

fn desugar_at(q: &Query, i: usize) -> Result<Desugared> {
    let a = &q.atoms()[i];
    let r1 = unused_name(q, format!("{}1", a.relation()));
    let mut probe = q.atoms().to_vec();
    probe.push(Atom {
        decl: RelationDecl::new(r1.clone(), a.decl.arity, a.decl.key_len, Mode::Inconsistent),
        terms: a.terms.clone(),
    });
    let r2 = unused_name(&Query::from_atoms_unchecked(probe), format!("{}2", a.relation()));
    let copy = |name: &str| Atom {
        decl: RelationDecl::new(name, a.decl.arity, a.decl.key_len, Mode::Inconsistent),
        terms: a.terms.clone(),
    };
    let mut atoms = q.atoms().to_vec();
    atoms.splice(i..=i, [copy(&r1), copy(&r2)]);
    Ok(Desugared {
        query: Query::new(atoms)?,
        original: a.relation().to_string(),
        copies: [r1, r2],
    })
}

/// Desugars consistent atoms until none is left.
pub fn desugar_all(q: &Query) -> Vec<Desugared> {
    let mut steps = Vec::new();
    let mut cur = q.clone();
    while let Ok(d) = desugar_consistent(&cur) {
        cur = d.query.clone();
        steps.push(d);
    }
    steps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};

    #[test]
    fn splits_into_two_copies() {
        let q = parse_query("consistent R(x | y)").unwrap();
        let d = desugar_consistent(&q).unwrap();
        assert_eq!(d.query.to_string(), "R1(x | y)\nR2(x | y)\n");
    }

    #[test]
    fn needs_a_consistent_atom() {
        let q = parse_query("R(x | y)").unwrap();
        assert_eq!(desugar_consistent(&q), Err(CqaError::NoConsistentAtom));
    }

    #[test]
    fn avoids_existing_names() {
        let q = parse_query("consistent R(x | y)\nR1(y | x)").unwrap();
        let d = desugar_consistent(&q).unwrap();
        assert_eq!(d.copies, ["R1$1".to_string(), "R2".to_string()]);
    }

    #[test]
    fn repeated_until_none_left() {
        let q = parse_query("consistent R(x | y)\nS(y | z)\nconsistent V(z | x)").unwrap();
        let steps = desugar_all(&q);
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[1].query.icard(), 5);
        let db = parse_database("R(1, a)\nS(a, 2)\nS(a, 3)\nV(2, 1)\nV(3, 1)", &q).unwrap();
        let mut cur = db.clone();
        for s in &steps {
            cur = s.database(&cur);
        }
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&steps[1].query, &cur).unwrap());
    }
}
